//! Multi-compartment spiking realization of the columnar layer.
//!
//! Each presented item occupies one window of simulated time followed by a
//! silent gap. Five unit populations cooperate:
//!
//! * proximal units (one per column) receive the input drive while their
//!   column is part of the presented pattern and relay one spike to their
//!   column's somas;
//! * somatic units (one per cell) integrate the proximal kernel; cells primed
//!   by their dendrites carry a subthreshold plateau through the gap, fire
//!   first, and their inhibitory partners silence the unprimed siblings —
//!   unprimed columns reach threshold together and burst;
//! * inhibitory partners (one per cell) fire after their own soma and inhibit
//!   sibling somas within the column;
//! * dendritic segment units (one per stored distal segment) integrate the
//!   somatic spikes of their connected presynaptic cells; a segment unit
//!   spike primes its owner cell for the next window — the spiking
//!   counterpart of the discrete prediction rule;
//! * association units (one per cell) integrate somatic spikes from cells of
//!   associated predecessor items. A fresh spike (synaptic trace still
//!   positive) primes the unit's cell; a primed unit refires from its plateau
//!   in the next window, and a refire inside a winning column opens the
//!   plasticity gate.
//!
//! Synaptic traces are cleared at window boundaries (the fast kernels decay
//! to grass level during the gap anyway); dendritic and association membrane
//! state is likewise per-window. Somatic, inhibitory, and proximal membranes
//! persist and are fast-forwarded exactly (exponential-Euler is the exact
//! constant-input solution), so only units that receive input are ever
//! stepped. Weight updates apply at the end of a window; dendritic units
//! therefore read the weights the window was entered with.
//!
//! The segment-unit amplitude is calibrated at construction by bisecting
//! between "a segment with threshold-many connected active inputs never
//! fires" and "one more connected active input always fires", across the
//! worst-case spread of somatic spike times the races allow. Construction
//! fails rather than running with parameters that cannot separate the two.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, PresentOutcome};
use crate::encoder::{Sdr, Vocabulary};
use crate::error::{Error, Result};
use crate::ltm::ItemGraph;
use crate::metrics::step_accuracy;
use crate::spiking::lif::{lif_step, LifParams, Trace};
use crate::temporal_memory::{CellId, SegmentId, StepContext, TemporalMemory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikingParams {
    /// Integration step, ms.
    pub dt_ms: f64,
    /// Window simulated per presented item, ms.
    pub window_ms: f64,
    /// Silent gap between windows, ms.
    pub gap_ms: f64,
    /// Competition phase at the start of a window: input drive and plateaus
    /// are on, somatic spiking is decided here.
    pub compete_ms: f64,
    /// Constant drive into proximal units of presented columns.
    pub p_drive: f64,
    pub tau_m_p: f64,
    pub refrac_p_ms: f64,
    pub tau_m_s: f64,
    pub refrac_s_ms: f64,
    pub tau_m_i: f64,
    pub refrac_i_ms: f64,
    pub tau_m_d: f64,
    pub tau_m_d2: f64,
    pub refrac_d2_ms: f64,
    /// Proximal -> soma kernel.
    pub a_ps: f64,
    pub tau_g_ps: f64,
    /// Soma -> own inhibitory partner kernel.
    pub a_si: f64,
    pub tau_g_si: f64,
    /// Inhibitory partner -> sibling soma kernel (negative).
    pub a_is: f64,
    pub tau_g_is: f64,
    /// Soma -> segment unit kernel time constant; the amplitude is
    /// calibrated at construction unless `a_sd` pins it.
    pub tau_g_sd: f64,
    pub a_sd: Option<f64>,
    /// Soma -> association unit kernel (slow; one spike suffices).
    pub a_sd2: f64,
    pub tau_g_sd2: f64,
    /// Subthreshold somatic plateau carried by primed cells through the gap
    /// and the next competition phase.
    pub s_plateau: f64,
    /// Subthreshold arming of a primed cell's inhibitory partner.
    pub i_arm: f64,
    /// Suprathreshold plateau that refires a primed association unit.
    pub d2_plateau: f64,
    /// Lower bound on somatic membrane potential (inhibitory reversal).
    pub v_floor: f64,
}

impl Default for SpikingParams {
    fn default() -> Self {
        SpikingParams {
            dt_ms: 0.1,
            window_ms: 20.0,
            gap_ms: 10.0,
            compete_ms: 12.0,
            p_drive: 2.0,
            tau_m_p: 5.0,
            refrac_p_ms: 25.0,
            tau_m_s: 6.0,
            refrac_s_ms: 25.0,
            tau_m_i: 2.0,
            refrac_i_ms: 4.0,
            tau_m_d: 3.0,
            tau_m_d2: 3.0,
            refrac_d2_ms: 8.0,
            a_ps: 3.6,
            tau_g_ps: 5.0,
            a_si: 4.0,
            tau_g_si: 2.0,
            a_is: -6.0,
            tau_g_is: 3.0,
            tau_g_sd: 3.0,
            a_sd: None,
            a_sd2: 3.0,
            tau_g_sd2: 40.0,
            s_plateau: 0.45,
            i_arm: 0.4,
            d2_plateau: 1.3,
            v_floor: -1.0,
        }
    }
}

const V_TH: f64 = 1.0;
const V_REST: f64 = 0.0;
const V_RESET: f64 = 0.0;

impl SpikingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ms > 0.0) {
            return Err(Error::config("dt_ms must be positive"));
        }
        for (name, ms) in [
            ("window_ms", self.window_ms),
            ("gap_ms", self.gap_ms),
            ("compete_ms", self.compete_ms),
        ] {
            let steps = ms / self.dt_ms;
            if ms < 0.0 || (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "{name} = {ms} must be a whole number of dt_ms steps"
                )));
            }
        }
        if self.compete_ms <= 0.0 || self.compete_ms > self.window_ms {
            return Err(Error::config("need 0 < compete_ms <= window_ms"));
        }
        for (name, tau) in [
            ("tau_m_p", self.tau_m_p),
            ("tau_m_s", self.tau_m_s),
            ("tau_m_i", self.tau_m_i),
            ("tau_m_d", self.tau_m_d),
            ("tau_m_d2", self.tau_m_d2),
            ("tau_g_ps", self.tau_g_ps),
            ("tau_g_si", self.tau_g_si),
            ("tau_g_is", self.tau_g_is),
            ("tau_g_sd", self.tau_g_sd),
            ("tau_g_sd2", self.tau_g_sd2),
        ] {
            if !(tau > 0.0) {
                return Err(Error::config(format!("{name} must be positive")));
            }
            if self.dt_ms > tau / 2.0 {
                return Err(Error::config(format!(
                    "dt_ms = {} too coarse for {name} = {tau}",
                    self.dt_ms
                )));
            }
        }
        if self.p_drive <= V_TH {
            return Err(Error::config("p_drive must exceed threshold"));
        }
        if self.a_ps <= 0.0 || self.a_si <= 0.0 || self.a_sd2 <= 0.0 {
            return Err(Error::config("a_ps, a_si, a_sd2 must be positive"));
        }
        if self.a_is >= 0.0 {
            return Err(Error::config("a_is must be negative (it inhibits)"));
        }
        if let Some(a) = self.a_sd {
            if a <= 0.0 {
                return Err(Error::config("a_sd must be positive when pinned"));
            }
        }
        if !(0.0..V_TH).contains(&self.s_plateau) || !(0.0..V_TH).contains(&self.i_arm) {
            return Err(Error::config("s_plateau and i_arm must lie in [0, v_th)"));
        }
        if self.d2_plateau <= V_TH {
            return Err(Error::config(
                "d2_plateau must exceed threshold so primed association units refire",
            ));
        }
        if self.v_floor > V_RESET {
            return Err(Error::config("v_floor must not exceed the reset potential"));
        }
        if self.refrac_p_ms < 0.0 || self.refrac_s_ms < 0.0 || self.refrac_i_ms < 0.0
            || self.refrac_d2_ms < 0.0
        {
            return Err(Error::config("refractory periods must be non-negative"));
        }
        Ok(())
    }

    fn steps(&self, ms: f64) -> u64 {
        (ms / self.dt_ms).round() as u64
    }

    fn lif(&self, tau_m: f64, refractory_ms: f64) -> LifParams {
        LifParams {
            tau_m,
            v_rest: V_REST,
            v_th: V_TH,
            v_reset: V_RESET,
            refractory_ms,
            r: 1.0,
        }
    }

    fn p_lif(&self) -> LifParams {
        self.lif(self.tau_m_p, self.refrac_p_ms)
    }
    fn s_lif(&self) -> LifParams {
        self.lif(self.tau_m_s, self.refrac_s_ms)
    }
    fn i_lif(&self) -> LifParams {
        self.lif(self.tau_m_i, self.refrac_i_ms)
    }
    fn d_lif(&self) -> LifParams {
        // One spike per window at most; the membrane is per-window anyway.
        self.lif(self.tau_m_d, self.window_ms)
    }
    fn d2_lif(&self) -> LifParams {
        self.lif(self.tau_m_d2, self.refrac_d2_ms)
    }
}

/// Timing facts measured from the parameters at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub steps_window: u64,
    pub steps_gap: u64,
    pub steps_compete: u64,
    /// Step (within the window) at which every driven proximal unit spikes.
    pub p_spike_step: u64,
    /// Somatic crossing range for primed cells over the reachable range of
    /// gap-entry potentials.
    pub pred_spike_steps: (u64, u64),
    /// Somatic crossing range for unprimed (bursting) cells.
    pub burst_spike_steps: (u64, u64),
    /// Steps from a somatic spike to its inhibition landing on siblings,
    /// for an armed inhibitory partner.
    pub inhibition_latency: u64,
    /// Step at which a primed association unit refires from its plateau.
    pub d2_refire_step: u64,
    /// Calibrated segment-unit amplitude.
    pub a_sd: f64,
}

/// Simulates one soma from gap entry through the competition phase:
/// `v0` at gap entry, optional plateau, proximal kernel bumped at
/// `p_spike_step`. Returns the crossing step within the window.
fn sim_soma_crossing(
    sp: &SpikingParams,
    v0: f64,
    plateau: f64,
    p_spike_step: u64,
) -> Option<u64> {
    let lif = sp.s_lif();
    let dt = sp.dt_ms;
    let mut v = v0;
    for _ in 0..sp.steps(sp.gap_ms) {
        v = lif_step(v, plateau, &lif, dt);
    }
    let mut g = Trace::new(sp.tau_g_ps);
    for t in 0..sp.steps(sp.compete_ms) {
        v = lif_step(v, plateau + g.g, &lif, dt).max(sp.v_floor);
        if v >= V_TH {
            return Some(t);
        }
        g.decay(1, dt);
        if t == p_spike_step {
            g.bump(sp.a_ps);
        }
    }
    None
}

/// Peak membrane response of a segment unit to unit-amplitude kernel bumps
/// at the given window steps.
fn d_unit_peak(sp: &SpikingParams, spike_steps: &[u64]) -> f64 {
    let lif = sp.d_lif();
    let dt = sp.dt_ms;
    let mut g = Trace::new(sp.tau_g_sd);
    let mut v = 0.0f64;
    let mut peak = 0.0f64;
    for t in 0..sp.steps(sp.window_ms) {
        v = lif_step(v, g.g, &lif, dt);
        peak = peak.max(v);
        g.decay(1, dt);
        let bumps = spike_steps.iter().filter(|s| **s == t).count();
        if bumps > 0 {
            g.bump(bumps as f64);
        }
    }
    peak
}

impl SpikingParams {
    /// Measures spike timings and calibrates the segment-unit amplitude.
    /// Fails when the parameters cannot realize the selection races or the
    /// threshold separation.
    pub fn calibrate(&self, theta: u32) -> Result<Calibration> {
        self.validate()?;
        let dt = self.dt_ms;
        let steps_window = self.steps(self.window_ms);
        let steps_gap = self.steps(self.gap_ms);
        let steps_compete = self.steps(self.compete_ms);

        // Proximal crossing under constant drive.
        let p_lif = self.p_lif();
        let mut v = 0.0;
        let mut p_spike_step = None;
        for t in 0..steps_compete {
            v = lif_step(v, self.p_drive, &p_lif, dt);
            if v >= V_TH {
                p_spike_step = Some(t);
                break;
            }
        }
        let p_spike_step = p_spike_step.ok_or_else(|| {
            Error::config("input drive never brings a proximal unit to threshold")
        })?;

        // Somatic crossing ranges over the reachable gap-entry potentials:
        // a primed cell enters the gap anywhere in [v_floor, s_plateau]
        // (inhibited loser .. plateau that outlasted the competition), an
        // unprimed cell in [v_floor, 0].
        let pred_lo = sim_soma_crossing(self, self.s_plateau, self.s_plateau, p_spike_step);
        let pred_hi = sim_soma_crossing(self, self.v_floor, self.s_plateau, p_spike_step);
        let burst_lo = sim_soma_crossing(self, 0.0, 0.0, p_spike_step);
        let burst_hi = sim_soma_crossing(self, self.v_floor, 0.0, p_spike_step);
        let (pred_lo, pred_hi, burst_lo, burst_hi) = match (pred_lo, pred_hi, burst_lo, burst_hi) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => {
                return Err(Error::config(
                    "somatic units cannot reach threshold during the competition phase",
                ))
            }
        };

        // Armed inhibitory latency: steps from a somatic spike to the
        // inhibition kernel landing on siblings (partner crossing + 1).
        let i_lif = self.i_lif();
        let mut v = {
            // Armed partner: i_arm through the gap and up to the spike.
            let mut v = 0.0;
            for _ in 0..steps_gap + pred_lo {
                v = lif_step(v, self.i_arm, &i_lif, dt);
            }
            v
        };
        // A fresh bump is read undecayed one step after the spike (the
        // network decays traces before applying the step's bumps).
        let mut g = Trace::new(self.tau_g_si);
        g.bump(self.a_si);
        let mut cross = None;
        for t in 1..=steps_compete {
            v = lif_step(v, self.i_arm + g.g, &i_lif, dt);
            if v >= V_TH {
                cross = Some(t);
                break;
            }
            g.decay(1, dt);
        }
        let inhibition_latency = cross
            .ok_or_else(|| Error::config("inhibitory partner never fires after its soma"))?
            + 1;

        // Selection races. Primed cells must all fire before the earliest
        // primed spike can silence them; unprimed cells of a predicted
        // column must be silenced before they reach threshold.
        if pred_hi >= pred_lo + inhibition_latency {
            return Err(Error::config(format!(
                "primed somatic jitter {} >= inhibition latency {}: \
                 co-predicted cells would lose spikes",
                pred_hi - pred_lo,
                inhibition_latency
            )));
        }
        if burst_lo <= pred_lo + inhibition_latency {
            return Err(Error::config(format!(
                "unprimed cells cross at {burst_lo} before inhibition lands at {}: \
                 prediction would not suppress the burst",
                pred_lo + inhibition_latency
            )));
        }
        if burst_hi >= steps_compete {
            return Err(Error::config("bursting cells must fire within the competition phase"));
        }

        // Segment-unit amplitude: theta simultaneous connected spikes must
        // never fire the unit, theta+1 must fire it under the worst split
        // across the somatic spike-time envelope.
        let a_sd = match self.a_sd {
            Some(pinned) => pinned,
            None => {
                let env_lo = pred_lo.saturating_sub(1);
                let env_hi = (burst_hi + 2).min(steps_compete - 1);
                let single_peak = d_unit_peak(self, &[env_lo]);
                let best_theta = theta as f64 * single_peak;
                let mut worst_plus = f64::INFINITY;
                for k in 0..=theta + 1 {
                    let mut spikes = vec![env_lo; k as usize];
                    spikes.extend(std::iter::repeat(env_hi).take((theta + 1 - k) as usize));
                    worst_plus = worst_plus.min(d_unit_peak(self, &spikes));
                }
                if worst_plus <= best_theta * 1.02 {
                    return Err(Error::config(format!(
                        "segment units cannot separate {theta} from {} connected \
                         spikes across a {}-step envelope (peaks {best_theta:.3} \
                         vs {worst_plus:.3} per unit amplitude)",
                        theta + 1,
                        env_hi - env_lo
                    )));
                }
                (1.0 / worst_plus + 1.0 / best_theta) / 2.0
            }
        };

        // A primed association unit must refire from its plateau within the
        // competition phase, and one fresh kernel must fire it.
        let d2_lif = self.d2_lif();
        let mut v = 0.0;
        let mut d2_refire_step = None;
        for t in 0..steps_compete {
            v = lif_step(v, self.d2_plateau, &d2_lif, dt);
            if v >= V_TH {
                d2_refire_step = Some(t);
                break;
            }
        }
        let d2_refire_step = d2_refire_step.ok_or_else(|| {
            Error::config("association plateau never refires within the competition phase")
        })?;
        // A refire is recognized by its empty synaptic trace, so it must
        // happen before the first somatic spike can deliver a fresh bump.
        if d2_refire_step > pred_lo {
            return Err(Error::config(format!(
                "association refire at step {d2_refire_step} would follow the first \
                 somatic spike at {pred_lo} and be misread as fresh input"
            )));
        }
        let mut g = Trace::new(self.tau_g_sd2);
        g.bump(self.a_sd2);
        let mut v = 0.0;
        let mut peak = 0.0f64;
        for _ in 0..steps_window {
            v = lif_step(v, g.g, &d2_lif, dt);
            peak = peak.max(v);
            g.decay(1, dt);
        }
        if peak < V_TH {
            return Err(Error::config(format!(
                "a single association kernel peaks at {peak:.3} < threshold"
            )));
        }

        Ok(Calibration {
            steps_window,
            steps_gap,
            steps_compete,
            p_spike_step,
            pred_spike_steps: (pred_lo, pred_hi),
            burst_spike_steps: (burst_lo, burst_hi),
            inhibition_latency,
            d2_refire_step,
            a_sd,
        })
    }
}

/// Persistent membrane state of one population, fast-forwarded lazily.
#[derive(Debug, Clone)]
struct PoolState {
    lif: LifParams,
    v: Vec<f64>,
    /// Step each membrane value is current at.
    last: Vec<u64>,
    /// First step at which integration resumes after a spike.
    ready: Vec<u64>,
    refrac_steps: u64,
}

impl PoolState {
    fn new(lif: LifParams, units: usize, dt: f64) -> Self {
        PoolState {
            refrac_steps: lif.refractory_steps(dt),
            lif,
            v: vec![V_REST; units],
            last: vec![0; units],
            ready: vec![0; units],
        }
    }

    /// Advances unit `idx` to step `upto` under a constant current
    /// (exact: exponential-Euler with one long step).
    fn advance_const(&mut self, idx: usize, upto: u64, i: f64, dt: f64) {
        let mut t = self.last[idx];
        if t >= upto {
            return;
        }
        if self.ready[idx] > t {
            self.v[idx] = self.lif.v_reset;
            t = self.ready[idx].min(upto);
        }
        if t < upto {
            let target = self.lif.v_rest + self.lif.r * i;
            self.v[idx] =
                target + (self.v[idx] - target) * (-((upto - t) as f64) * dt / self.lif.tau_m).exp();
        }
        self.last[idx] = upto;
    }

    /// One explicit step at time `t` (unit must be advanced to `t`).
    /// Returns true on a spike.
    fn step(&mut self, idx: usize, t: u64, i: f64, dt: f64, floor: f64) -> bool {
        debug_assert_eq!(self.last[idx], t, "unit stepped out of order");
        self.last[idx] = t + 1;
        if t < self.ready[idx] {
            self.v[idx] = self.lif.v_reset;
            return false;
        }
        let v = lif_step(self.v[idx], i, &self.lif, dt).max(floor);
        assert!(v.is_finite(), "membrane diverged at step {t}");
        if v >= self.lif.v_th {
            self.v[idx] = self.lif.v_reset;
            self.ready[idx] = t + 1 + self.refrac_steps;
            true
        } else {
            self.v[idx] = v;
            false
        }
    }

    fn quiesce(&mut self) {
        self.v.fill(V_REST);
        self.last.fill(0);
        self.ready.fill(0);
    }
}

/// Per-window membrane of a dendritic segment unit.
#[derive(Debug, Clone)]
struct DUnit {
    v: f64,
    g: Trace,
    fired: bool,
}

/// Per-window membrane of an association unit.
#[derive(Debug, Clone)]
struct D2Unit {
    v: f64,
    g: Trace,
    ready: u64,
}

/// Spike record of the most recent window (steps are window-relative).
#[derive(Debug, Clone, Default)]
pub struct WindowEvents {
    pub p_spikes: Vec<(u64, u32)>,
    pub s_spikes: Vec<(u64, CellId)>,
    pub i_spikes: Vec<(u64, CellId)>,
    pub d_spikes: Vec<(u64, SegmentId)>,
    pub d2_fresh: Vec<(u64, CellId)>,
    pub d2_refires: Vec<(u64, CellId)>,
}

/// Spiking backend over the shared segment store. Presenting an item
/// simulates one window (plus the preceding gap) and applies the standard
/// weight updates from the spike-derived activity.
pub struct SpikingBackend {
    tm: TemporalMemory,
    params: SpikingParams,
    cal: Calibration,
    /// Per-column association targets; None runs with the gate pinned open
    /// and no association units.
    d2_targets: Option<Vec<Vec<CellId>>>,
    s: PoolState,
    i: PoolState,
    p: PoolState,
    now: u64,
    /// Cells primed by segment-unit spikes of the previous window: the
    /// prediction state.
    primed: Vec<CellId>,
    /// Cells primed by fresh association spikes of the previous window.
    d2_primed: Vec<CellId>,
    prev_active: Vec<CellId>,
    /// Learning cells of the previous window, the growth candidates for this
    /// window's plasticity (mirrors the discrete layer's winner tracking).
    prev_winners: Vec<CellId>,
    in_sequence: bool,
    events: WindowEvents,
}

impl SpikingBackend {
    pub fn new(
        tm: TemporalMemory,
        params: SpikingParams,
        association: Option<ItemGraph>,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let cal = params.calibrate(tm.params.theta)?;
        let geom = tm.geometry();
        if vocab.m_columns() != geom.m_columns {
            return Err(Error::config(format!(
                "vocabulary has {} columns, layer has {}",
                vocab.m_columns(),
                geom.m_columns
            )));
        }
        let d2_targets = association.map(|graph| d2_targets_by_column(&graph, vocab, geom.cells_per_column));
        let cells = geom.cells() as usize;
        let dt = params.dt_ms;
        Ok(SpikingBackend {
            s: PoolState::new(params.s_lif(), cells, dt),
            i: PoolState::new(params.i_lif(), cells, dt),
            p: PoolState::new(params.p_lif(), geom.m_columns as usize, dt),
            tm,
            params,
            cal,
            d2_targets,
            now: 0,
            primed: Vec::new(),
            d2_primed: Vec::new(),
            prev_active: Vec::new(),
            prev_winners: Vec::new(),
            in_sequence: false,
            events: WindowEvents::default(),
        })
    }

    pub fn calibration(&self) -> &Calibration {
        &self.cal
    }

    /// Somatic spike set of the most recent window.
    pub fn active_cells(&self) -> &[CellId] {
        &self.prev_active
    }

    /// Cells primed for the upcoming window (the prediction state).
    pub fn primed_cells(&self) -> &[CellId] {
        &self.primed
    }

    pub fn last_events(&self) -> &WindowEvents {
        &self.events
    }

    fn is_primed(&self, cell: CellId) -> bool {
        self.primed.binary_search(&cell).is_ok()
    }

    fn simulate_window(&mut self, sdr: &Sdr) -> WindowResult {
        let n = self.tm.geometry().cells_per_column;
        let dt = self.params.dt_ms;
        let winning = sdr.columns();

        // Gap before every window after the first of a sequence: primed
        // cells integrate their plateau, everything else is left to the
        // lazy fast-forward.
        if self.in_sequence {
            let gap_end = self.now + self.cal.steps_gap;
            for k in 0..self.primed.len() {
                let cell = self.primed[k].0 as usize;
                self.s.advance_const(cell, gap_end, self.params.s_plateau, dt);
                self.i.advance_const(cell, gap_end, self.params.i_arm, dt);
            }
            self.now = gap_end;
        }
        let w0 = self.now;
        let compete_end = w0 + self.cal.steps_compete;
        let w_end = w0 + self.cal.steps_window;

        // Primed cells in non-winning columns see only their plateau, which
        // is subthreshold by validation: advance them in closed form.
        for k in 0..self.primed.len() {
            let cell = self.primed[k];
            if !sdr.contains(cell.column(n)) {
                self.s
                    .advance_const(cell.0 as usize, compete_end, self.params.s_plateau, dt);
                self.i
                    .advance_const(cell.0 as usize, compete_end, self.params.i_arm, dt);
            }
        }

        // Hot cells: every cell of a winning column, caught up to w0.
        let hot: Vec<CellId> = winning
            .iter()
            .flat_map(|&col| self.tm.geometry().column_cells(col))
            .collect();
        for cell in &hot {
            self.s.advance_const(cell.0 as usize, w0, 0.0, dt);
            self.i.advance_const(cell.0 as usize, w0, 0.0, dt);
        }
        for &col in winning {
            self.p.advance_const(col as usize, w0, 0.0, dt);
        }

        let col_pos = |col: u32| winning.binary_search(&col).unwrap();
        let hot_pos = |cell: CellId| hot.binary_search(&cell).unwrap();

        let mut g_ps: Vec<Trace> = vec![Trace::new(self.params.tau_g_ps); winning.len()];
        let mut g_si: Vec<Trace> = vec![Trace::new(self.params.tau_g_si); hot.len()];
        let mut g_is: Vec<Trace> = vec![Trace::new(self.params.tau_g_is); hot.len()];
        let mut d_units: BTreeMap<SegmentId, DUnit> = BTreeMap::new();
        let mut d2_units: BTreeMap<CellId, D2Unit> = BTreeMap::new();
        if self.d2_targets.is_some() {
            for &cell in &self.d2_primed {
                d2_units.insert(
                    cell,
                    D2Unit {
                        v: 0.0,
                        g: Trace::new(self.params.tau_g_sd2),
                        ready: 0,
                    },
                );
            }
        }

        let mut events = WindowEvents::default();
        let mut active: Vec<CellId> = Vec::new();
        let mut primed_next: Vec<CellId> = Vec::new();
        let mut d2_next: Vec<CellId> = Vec::new();
        let mut gate_evidence = false;

        let perm_connected = self.tm.params.perm_connected;
        let d_lif = self.params.d_lif();
        let d2_lif = self.params.d2_lif();
        let d2_refrac = d2_lif.refractory_steps(dt);

        for t in w0..w_end {
            let rel = t - w0;
            let in_compete = t < compete_end;
            let mut ps_bumps: Vec<usize> = Vec::new();
            let mut si_bumps: Vec<usize> = Vec::new();
            let mut is_bumps: Vec<usize> = Vec::new();
            let mut d_bumps: Vec<SegmentId> = Vec::new();
            let mut d2_bumps: Vec<CellId> = Vec::new();

            // Proximal units.
            for &col in winning {
                let drive = if in_compete { self.params.p_drive } else { 0.0 };
                if self.p.step(col as usize, t, drive, dt, self.params.v_floor) {
                    debug_assert_eq!(rel, self.cal.p_spike_step);
                    events.p_spikes.push((rel, col));
                    ps_bumps.push(col_pos(col));
                }
            }

            // Somatic units.
            for (k, &cell) in hot.iter().enumerate() {
                let col = cell.column(n);
                let plateau = if in_compete && self.is_primed(cell) {
                    self.params.s_plateau
                } else {
                    0.0
                };
                let i_in = g_ps[col_pos(col)].g + g_is[k].g + plateau;
                if self.s.step(cell.0 as usize, t, i_in, dt, self.params.v_floor) {
                    events.s_spikes.push((rel, cell));
                    active.push(cell);
                    si_bumps.push(k);
                    for &(seg, slot) in self.tm.store().listeners(cell) {
                        let connected = self
                            .tm
                            .store()
                            .segment(seg)
                            .map(|s| s.synapses[slot as usize].perm >= perm_connected)
                            .unwrap_or(false);
                        if connected {
                            d_bumps.push(seg);
                        }
                    }
                    if let Some(targets) = &self.d2_targets {
                        d2_bumps.extend(&targets[col as usize]);
                    }
                }
            }

            // Inhibitory partners.
            for (k, &cell) in hot.iter().enumerate() {
                let arm = if in_compete && self.is_primed(cell) {
                    self.params.i_arm
                } else {
                    0.0
                };
                if self.i.step(cell.0 as usize, t, g_si[k].g + arm, dt, self.params.v_floor) {
                    events.i_spikes.push((rel, cell));
                    let col = cell.column(n);
                    for sibling in self.tm.geometry().column_cells(col) {
                        if sibling != cell {
                            is_bumps.push(hot_pos(sibling));
                        }
                    }
                }
            }

            // Dendritic segment units.
            for (&seg, du) in d_units.iter_mut() {
                if !du.fired {
                    du.v = lif_step(du.v, du.g.g, &d_lif, dt);
                    if du.v >= V_TH {
                        du.fired = true;
                        events.d_spikes.push((rel, seg));
                        if let Some(owner) = self.tm.store().segment(seg).map(|s| s.cell) {
                            primed_next.push(owner);
                        }
                    }
                }
                du.g.decay(1, dt);
            }

            // Association units.
            for (&cell, du) in d2_units.iter_mut() {
                if t >= du.ready {
                    let plateau = if in_compete
                        && self.d2_primed.binary_search(&cell).is_ok()
                    {
                        self.params.d2_plateau
                    } else {
                        0.0
                    };
                    du.v = lif_step(du.v, du.g.g + plateau, &d2_lif, dt);
                    if du.v >= V_TH {
                        du.v = V_RESET;
                        du.ready = t + 1 + d2_refrac;
                        if du.g.g > 0.0 {
                            // Fresh: presynaptic input this window.
                            events.d2_fresh.push((rel, cell));
                            d2_next.push(cell);
                        } else {
                            events.d2_refires.push((rel, cell));
                            if sdr.contains(cell.column(n)) {
                                gate_evidence = true;
                            }
                        }
                    }
                } else {
                    du.v = V_RESET;
                }
                du.g.decay(1, dt);
            }

            // Kernel decay, then fresh bumps land for the next step.
            for tr in g_ps.iter_mut() {
                tr.decay(1, dt);
            }
            for tr in g_si.iter_mut() {
                tr.decay(1, dt);
            }
            for tr in g_is.iter_mut() {
                tr.decay(1, dt);
            }
            for k in ps_bumps {
                g_ps[k].bump(self.params.a_ps);
            }
            for k in si_bumps {
                g_si[k].bump(self.params.a_si);
            }
            for k in is_bumps {
                g_is[k].bump(self.params.a_is);
            }
            for seg in d_bumps {
                d_units
                    .entry(seg)
                    .or_insert_with(|| DUnit {
                        v: 0.0,
                        g: Trace::new(self.params.tau_g_sd),
                        fired: false,
                    })
                    .g
                    .bump(self.cal.a_sd);
            }
            for cell in d2_bumps {
                d2_units
                    .entry(cell)
                    .or_insert_with(|| D2Unit {
                        v: 0.0,
                        g: Trace::new(self.params.tau_g_sd2),
                        ready: 0,
                    })
                    .g
                    .bump(self.params.a_sd2);
            }
        }

        self.now = w_end;
        self.in_sequence = true;
        active.sort_unstable();
        active.dedup();
        primed_next.sort_unstable();
        primed_next.dedup();
        d2_next.sort_unstable();
        d2_next.dedup();
        self.events = events;
        WindowResult(active, primed_next, d2_next, gate_evidence)
    }
}

/// (active cells, primed for next window, association-primed, gate evidence).
struct WindowResult(Vec<CellId>, Vec<CellId>, Vec<CellId>, bool);

/// Cells whose association units listen to somatic spikes from each column:
/// for column k, the cells of every column of every successor of an item
/// containing k.
fn d2_targets_by_column(
    graph: &ItemGraph,
    vocab: &Vocabulary,
    cells_per_column: u32,
) -> Vec<Vec<CellId>> {
    let m = vocab.m_columns() as usize;
    let mut col_items: Vec<Vec<crate::encoder::ItemCode>> = vec![Vec::new(); m];
    for (_, code) in vocab.tokens() {
        if let Ok(sdr) = vocab.encode(code) {
            for &col in sdr.columns() {
                col_items[col as usize].push(code);
            }
        }
    }
    let mut targets: Vec<Vec<CellId>> = vec![Vec::new(); m];
    for (col, items) in col_items.iter().enumerate() {
        let mut out: Vec<CellId> = Vec::new();
        for &item in items {
            for &succ in graph.out_neighbors(item) {
                if let Ok(sdr) = vocab.encode(succ) {
                    for &tcol in sdr.columns() {
                        out.extend((0..cells_per_column).map(|i| CellId(tcol * cells_per_column + i)));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        targets[col] = out;
    }
    targets
}

impl Backend for SpikingBackend {
    fn present(&mut self, sdr: &Sdr, learn: bool) -> Result<PresentOutcome> {
        if sdr.columns().last().copied().unwrap_or(0) >= self.tm.geometry().m_columns {
            return Err(Error::config("pattern column out of range for this layer"));
        }
        let n = self.tm.geometry().cells_per_column;

        let mut predicted_before: Vec<u32> =
            self.primed.iter().map(|c| c.column(n)).collect();
        predicted_before.dedup();
        let burst_columns: Vec<u32> = sdr
            .columns()
            .iter()
            .copied()
            .filter(|&col| {
                !self
                    .primed
                    .iter()
                    .any(|c| c.column(n) == col)
            })
            .collect();

        let WindowResult(active, primed_next, d2_next, gate_evidence) =
            self.simulate_window(sdr);

        let l_gate = match &self.d2_targets {
            None => true,
            Some(_) => gate_evidence,
        };
        let accuracy = step_accuracy(&predicted_before, sdr);

        let mut grown = 0;
        if learn {
            let p_plus = if l_gate {
                self.tm.params.p_plus_high
            } else {
                self.tm.params.p_plus_low
            };
            let prev = std::mem::take(&mut self.prev_active);
            let prev_winners = std::mem::take(&mut self.prev_winners);
            let (g, _, _, winners) =
                self.tm
                    .apply_learning(sdr, &prev, &prev_winners, &active, &burst_columns, p_plus);
            self.prev_winners = winners;
            grown = g;
        }

        self.prev_active = active;
        self.primed = primed_next;
        self.d2_primed = d2_next;

        Ok(PresentOutcome {
            accuracy,
            l_gate,
            burst_columns: burst_columns.len(),
            grown_segments: grown,
        })
    }

    fn reset_context(&mut self) {
        self.primed.clear();
        self.d2_primed.clear();
        self.prev_active.clear();
        self.prev_winners.clear();
        self.in_sequence = false;
        self.s.quiesce();
        self.i.quiesce();
        self.p.quiesce();
        self.now = 0;
        self.events = WindowEvents::default();
    }

    fn decay(&mut self, amount: f64) -> u64 {
        self.tm.store_mut().decay(amount)
    }

    fn memory(&self) -> &TemporalMemory {
        &self.tm
    }

    fn memory_mut(&mut self) -> &mut TemporalMemory {
        &mut self.tm
    }

    fn predicted_columns(&self) -> Vec<u32> {
        let n = self.tm.geometry().cells_per_column;
        let mut cols: Vec<u32> = self.primed.iter().map(|c| c.column(n)).collect();
        cols.dedup();
        cols
    }
}

/// One step where the two realizations produced different active cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceMismatch {
    pub presentation: usize,
    pub step: usize,
    pub seq_id: String,
    pub discrete_only: Vec<CellId>,
    pub spiking_only: Vec<CellId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub presentations: usize,
    pub steps_compared: usize,
    pub mismatches: Vec<EquivalenceMismatch>,
}

impl EquivalenceReport {
    pub fn matched(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Replays the given presentations through both realizations with frozen
/// weights and compares the active-cell sets step by step.
pub fn equivalence_probe(
    tm: &TemporalMemory,
    params: &SpikingParams,
    vocab: &Vocabulary,
    presentations: &[&crate::protocol::SequenceSpec],
    reset_between: bool,
) -> Result<EquivalenceReport> {
    let mut discrete = tm.clone();
    discrete.reset();
    let mut spiking = SpikingBackend::new(tm.clone(), params.clone(), None, vocab)?;
    let ctx = StepContext {
        learn: false,
        p_plus: tm.params.p_plus_low,
    };
    let mut report = EquivalenceReport {
        presentations: presentations.len(),
        ..Default::default()
    };
    for (pi, seq) in presentations.iter().enumerate() {
        if reset_between {
            discrete.reset();
            spiking.reset_context();
        }
        for (si, item) in seq.items.iter().enumerate() {
            let sdr = vocab.encode(*item)?.clone();
            let out = discrete.step(&sdr, ctx);
            spiking.present(&sdr, false)?;
            report.steps_compared += 1;
            let d = out.active.as_slice();
            let s = spiking.active_cells();
            if d != s {
                report.mismatches.push(EquivalenceMismatch {
                    presentation: pi,
                    step: si,
                    seq_id: seq.id.clone(),
                    discrete_only: d.iter().copied().filter(|c| !s.contains(c)).collect(),
                    spiking_only: s.iter().copied().filter(|c| !d.contains(c)).collect(),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ItemCode, START_TOKEN};
    use crate::ltm::{AssociationNorms, LoadOptions};
    use crate::protocol::SequenceSpec;
    use crate::temporal_memory::{Geometry, LearningParams, Synapse};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn micro_geometry(m: u32, n: u32) -> Geometry {
        Geometry {
            m_columns: m,
            cells_per_column: n,
        }
    }

    fn assert_disjoint(vocab: &Vocabulary, items: &[ItemCode]) {
        let mut seen = std::collections::BTreeSet::new();
        for item in items {
            for &c in vocab.encode(*item).unwrap().columns() {
                assert!(seen.insert(c), "test items must not share columns");
            }
        }
    }

    fn train_discrete(
        tm: &mut TemporalMemory,
        vocab: &Vocabulary,
        seqs: &[Vec<ItemCode>],
        epochs: usize,
    ) {
        let p_plus = tm.params.p_plus_high;
        for _ in 0..epochs {
            for seq in seqs {
                tm.reset();
                for item in seq {
                    let sdr = vocab.encode(*item).unwrap().clone();
                    tm.step(&sdr, StepContext { learn: true, p_plus });
                }
            }
        }
        tm.reset();
    }

    #[test]
    fn calibration_orders_all_spike_windows() {
        let sp = SpikingParams::default();
        let cal = sp.calibrate(3).unwrap();
        // The column kick lands before any soma can cross, predictions come
        // before bursts, and everything resolves inside the compete phase.
        assert!(cal.p_spike_step < cal.pred_spike_steps.0);
        assert!(cal.pred_spike_steps.0 <= cal.pred_spike_steps.1);
        assert!(cal.pred_spike_steps.1 < cal.burst_spike_steps.0);
        assert!(cal.burst_spike_steps.0 <= cal.burst_spike_steps.1);
        assert!(cal.burst_spike_steps.1 < cal.steps_compete);
        assert!(cal.d2_refire_step <= cal.pred_spike_steps.0);
        assert!(cal.a_sd > 0.0);
        assert!(cal.inhibition_latency >= 1);
    }

    #[test]
    fn calibration_rejects_unresolvable_geometry() {
        // With no plateau advantage the predicted and bursting envelopes
        // coincide, so inhibition cannot separate them in time.
        let sp = SpikingParams {
            s_plateau: 0.0,
            i_arm: 0.0,
            ..SpikingParams::default()
        };
        assert!(sp.calibrate(3).is_err());
    }

    #[test]
    fn burst_activates_every_cell_and_prediction_narrows_it() {
        let mut vocab = Vocabulary::new(48, 3, 11).unwrap();
        let a = vocab.register("alpha").unwrap();
        let b = vocab.register("beta").unwrap();
        // Three-column items need theta < 3: a lean learned segment holds one
        // synapse per presynaptic column and prediction requires strictly
        // more than theta of them.
        let params = LearningParams {
            theta: 2,
            ..LearningParams::default()
        };
        let mut tm = TemporalMemory::new(micro_geometry(48, 4), params, 5).unwrap();
        train_discrete(&mut tm, &vocab, &[vec![a, b]], 4);

        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
        let sdr_a = vocab.encode(a).unwrap().clone();
        let sdr_b = vocab.encode(b).unwrap().clone();

        let out_a = net.present(&sdr_a, false).unwrap();
        // Nothing predicts the sequence start: every column bursts fully.
        assert_eq!(out_a.burst_columns, 3);
        assert_eq!(net.active_cells().len(), 3 * 4);
        let p_step = net.calibration().p_spike_step;
        let events = net.last_events();
        assert_eq!(events.p_spikes.len(), 3);
        for &(step, _) in &events.p_spikes {
            assert_eq!(step, p_step);
        }

        let out_b = net.present(&sdr_b, false).unwrap();
        // The trained transition predicts one cell per column, which then
        // suppresses its siblings.
        assert_eq!(out_b.burst_columns, 0);
        assert_eq!(net.active_cells().len(), 3);
        assert!((out_b.accuracy - 1.0).abs() < 1e-12);
        let cal = net.calibration().clone();
        for &(step, _) in &net.last_events().s_spikes {
            assert!(step >= cal.pred_spike_steps.0 && step <= cal.pred_spike_steps.1);
        }
    }

    #[test]
    fn soma_spikes_stay_inside_compete_and_fire_at_most_once() {
        let mut vocab = Vocabulary::new(48, 3, 17).unwrap();
        let a = vocab.register("one").unwrap();
        let b = vocab.register("two").unwrap();
        let c = vocab.register("three").unwrap();
        let mut tm =
            TemporalMemory::new(micro_geometry(48, 4), LearningParams::default(), 5).unwrap();
        train_discrete(&mut tm, &vocab, &[vec![a, b, c]], 4);
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
        for item in [a, b, c] {
            let sdr = vocab.encode(item).unwrap().clone();
            net.present(&sdr, false).unwrap();
            let cal = net.calibration().clone();
            let events = net.last_events();
            let mut seen = std::collections::BTreeSet::new();
            for &(step, cell) in &events.s_spikes {
                assert!(step < cal.steps_compete, "soma spike after compete phase");
                assert!(seen.insert(cell), "cell spiked twice in one window");
            }
            for &(step, _) in &events.i_spikes {
                assert!(step < cal.steps_window);
            }
        }
    }

    #[test]
    fn segment_units_fire_only_above_the_connection_threshold() {
        // Single-column items make coincidence counting exact: a segment with
        // theta connected inputs must stay silent, theta + 1 must fire.
        let params = LearningParams::default();
        let theta = params.theta;
        let mut vocab = Vocabulary::new(8, 1, 23).unwrap();
        let a = vocab.register("cue").unwrap();
        let b = vocab.register("target").unwrap();
        let col_a = vocab.encode(a).unwrap().columns()[0];
        let col_b = vocab.encode(b).unwrap().columns()[0];
        assert_ne!(col_a, col_b);

        for (extra, expect_fire) in [(0u32, false), (1u32, true)] {
            let mut tm =
                TemporalMemory::new(micro_geometry(8, 4), params.clone(), 5).unwrap();
            let target = CellId::new(col_b, 0, 4);
            let synapses: Vec<Synapse> = (0..theta + extra)
                .map(|i| Synapse {
                    presyn: CellId::new(col_a, i, 4),
                    perm: 0.6,
                })
                .collect();
            tm.store_mut().add_segment(target, synapses);
            let mut net =
                SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
            let sdr_a = vocab.encode(a).unwrap().clone();
            let sdr_b = vocab.encode(b).unwrap().clone();
            net.present(&sdr_a, false).unwrap();
            let fired = !net.last_events().d_spikes.is_empty();
            assert_eq!(fired, expect_fire, "extra={extra}");
            let out = net.present(&sdr_b, false).unwrap();
            if expect_fire {
                assert_eq!(net.active_cells(), &[target]);
                assert_eq!(out.burst_columns, 0);
            } else {
                assert_eq!(net.active_cells().len(), 4);
                assert_eq!(out.burst_columns, 1);
            }
        }
    }

    #[test]
    fn sub_threshold_permanences_do_not_count() {
        let params = LearningParams::default();
        let theta = params.theta;
        let mut vocab = Vocabulary::new(8, 1, 29).unwrap();
        let a = vocab.register("cue").unwrap();
        let b = vocab.register("target").unwrap();
        let col_a = vocab.encode(a).unwrap().columns()[0];
        let col_b = vocab.encode(b).unwrap().columns()[0];
        let mut tm = TemporalMemory::new(micro_geometry(8, 4), params, 5).unwrap();
        let target = CellId::new(col_b, 0, 4);
        // theta + 1 synapses but one sits below the connection threshold, so
        // only theta conduct: the unit must not fire.
        let mut synapses: Vec<Synapse> = (0..theta)
            .map(|i| Synapse {
                presyn: CellId::new(col_a, i, 4),
                perm: 0.6,
            })
            .collect();
        synapses.push(Synapse {
            presyn: CellId::new(col_a, theta, 4),
            perm: 0.3,
        });
        tm.store_mut().add_segment(target, synapses);
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
        let sdr_a = vocab.encode(a).unwrap().clone();
        net.present(&sdr_a, false).unwrap();
        assert!(net.last_events().d_spikes.is_empty());
    }

    #[test]
    fn frozen_weights_reproduce_discrete_activity_on_random_corpora() {
        for seed in 0..4u64 {
            let mut vocab = Vocabulary::new(48, 3, seed.wrapping_mul(97).wrapping_add(5)).unwrap();
            let names = ["ga", "bo", "ri", "mu", "ze", "ka"];
            let items: Vec<ItemCode> = names
                .iter()
                .map(|n| vocab.register(n).unwrap())
                .collect();
            // Shared interior items force higher-order context resolution,
            // and one sequence repeats an item back to back.
            let seqs = vec![
                vec![items[0], items[1], items[2], items[3]],
                vec![items[4], items[1], items[2], items[5]],
                vec![items[5], items[3], items[3], items[0]],
            ];
            let mut tm = TemporalMemory::new(
                micro_geometry(48, 3),
                LearningParams::default(),
                seed,
            )
            .unwrap();
            train_discrete(&mut tm, &vocab, &seqs, 12);

            let specs: Vec<SequenceSpec> = seqs
                .iter()
                .enumerate()
                .map(|(i, s)| SequenceSpec {
                    id: format!("s{i}"),
                    items: s.clone(),
                })
                .collect();
            let mut order: Vec<&SequenceSpec> = Vec::new();
            let mut rng = StdRng::seed_from_u64(seed);
            for _ in 0..6 {
                order.push(&specs[rng.gen_range(0..specs.len())]);
            }
            for reset_between in [true, false] {
                let report = equivalence_probe(
                    &tm,
                    &SpikingParams::default(),
                    &vocab,
                    &order,
                    reset_between,
                )
                .unwrap();
                assert!(
                    report.matched(),
                    "seed {seed} reset={reset_between}: {:?}",
                    report.mismatches.first()
                );
                assert_eq!(report.steps_compared, 24);
            }
        }
    }

    #[test]
    fn probe_flags_deliberately_oversensitive_dendrites() {
        // Pinning the dendritic gain far above calibration makes single
        // coincidences fire segment units, so the spiking realization
        // over-predicts and the probe must report mismatches.
        let mut vocab = Vocabulary::new(48, 3, 31).unwrap();
        let items: Vec<ItemCode> = ["da", "ne", "lo", "pi"]
            .iter()
            .map(|n| vocab.register(n).unwrap())
            .collect();
        let seqs = vec![
            vec![items[0], items[1], items[2]],
            vec![items[3], items[1], items[0]],
        ];
        let mut tm =
            TemporalMemory::new(micro_geometry(48, 3), LearningParams::default(), 7).unwrap();
        train_discrete(&mut tm, &vocab, &seqs, 12);
        let specs: Vec<SequenceSpec> = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| SequenceSpec {
                id: format!("s{i}"),
                items: s.clone(),
            })
            .collect();
        let order: Vec<&SequenceSpec> = specs.iter().collect();
        let sabotaged = SpikingParams {
            a_sd: Some(5.0),
            ..SpikingParams::default()
        };
        let report =
            equivalence_probe(&tm, &sabotaged, &vocab, &order, true).unwrap();
        assert!(!report.matched());
    }

    #[test]
    fn spiking_learning_acquires_a_sequence_alone() {
        // Items span more columns than theta, otherwise a predicted
        // predecessor (one cell per column) can never exceed the threshold.
        let mut vocab = Vocabulary::new(96, 6, 41).unwrap();
        let s = vocab.register_start().unwrap();
        let items: Vec<ItemCode> = ["ta", "re", "no"]
            .iter()
            .map(|n| vocab.register(n).unwrap())
            .collect();
        let seq = vec![s, items[0], items[1], items[2]];
        let params = LearningParams {
            max_new_synapses: 64,
            ..LearningParams::default()
        };
        let tm = TemporalMemory::new(micro_geometry(96, 4), params, 3).unwrap();
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
        let mut last_scores = Vec::new();
        for round in 0..6 {
            net.reset_context();
            let mut scores = Vec::new();
            for item in &seq {
                let sdr = vocab.encode(*item).unwrap().clone();
                let out = net.present(&sdr, true).unwrap();
                assert!(out.l_gate, "no association graph pins the gate open");
                scores.push(out.accuracy);
            }
            if round == 5 {
                last_scores = scores;
            }
        }
        // After a handful of repetitions every transition past the start is
        // anticipated perfectly.
        assert!(last_scores[1..].iter().all(|a| (*a - 1.0).abs() < 1e-12));
        assert!(net.memory().store().segment_count() > 0);
    }

    #[test]
    fn repeated_items_learn_despite_refractory_carryover() {
        // The same cells must fire in back-to-back windows, exercising the
        // refractory handoff across the window boundary.
        let mut vocab = Vocabulary::new(96, 6, 43).unwrap();
        let s = vocab.register_start().unwrap();
        let r = vocab.register("echo").unwrap();
        let seq = vec![s, r, r, r];
        let params = LearningParams {
            max_new_synapses: 64,
            ..LearningParams::default()
        };
        let tm = TemporalMemory::new(micro_geometry(96, 4), params, 9).unwrap();
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
        let mut final_scores = Vec::new();
        for round in 0..10 {
            net.reset_context();
            let mut scores = Vec::new();
            for item in &seq {
                let sdr = vocab.encode(*item).unwrap().clone();
                scores.push(net.present(&sdr, true).unwrap().accuracy);
            }
            if round == 9 {
                final_scores = scores;
            }
        }
        assert!(final_scores[1..].iter().all(|a| (*a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gate_opens_only_after_an_associated_predecessor() {
        let mut vocab = Vocabulary::new(256, 3, 47).unwrap();
        let bus = vocab.register("bus").unwrap();
        let wheels = vocab.register("wheels").unwrap();
        let door = vocab.register("door").unwrap();
        assert_disjoint(&vocab, &[bus, wheels, door]);
        let csv = "cue,response,strength\nbus,wheels,0.62\n";
        let (norms, _) =
            AssociationNorms::from_reader(csv.as_bytes(), &LoadOptions::default()).unwrap();
        let graph = ItemGraph::from_norms(&norms, &vocab);
        assert_eq!(graph.edge_count(), 1);
        let tm = TemporalMemory::new(micro_geometry(256, 2), LearningParams::default(), 13)
            .unwrap();
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), Some(graph), &vocab).unwrap();

        let sdr_bus = vocab.encode(bus).unwrap().clone();
        let sdr_wheels = vocab.encode(wheels).unwrap().clone();
        let sdr_door = vocab.encode(door).unwrap().clone();

        let o1 = net.present(&sdr_bus, false).unwrap();
        assert!(!o1.l_gate, "no predecessor has primed anything yet");
        let o2 = net.present(&sdr_wheels, false).unwrap();
        assert!(o2.l_gate, "bus -> wheels is an association edge");
        assert!(!net.last_events().d2_refires.is_empty());
        let o3 = net.present(&sdr_door, false).unwrap();
        assert!(!o3.l_gate, "door is not associated with wheels");

        // Without the predecessor the target item alone opens nothing.
        net.reset_context();
        let o4 = net.present(&sdr_wheels, false).unwrap();
        assert!(!o4.l_gate);
    }

    #[test]
    fn gate_priming_survives_one_window_only() {
        let mut vocab = Vocabulary::new(256, 3, 54).unwrap();
        let bus = vocab.register("bus").unwrap();
        let wheels = vocab.register("wheels").unwrap();
        let blank = vocab.register("blank").unwrap();
        assert_disjoint(&vocab, &[bus, wheels, blank]);
        let csv = "cue,response,strength\nbus,wheels,0.5\n";
        let (norms, _) =
            AssociationNorms::from_reader(csv.as_bytes(), &LoadOptions::default()).unwrap();
        let graph = ItemGraph::from_norms(&norms, &vocab);
        let tm = TemporalMemory::new(micro_geometry(256, 2), LearningParams::default(), 15)
            .unwrap();
        let mut net =
            SpikingBackend::new(tm, SpikingParams::default(), Some(graph), &vocab).unwrap();
        let sdr_bus = vocab.encode(bus).unwrap().clone();
        let sdr_blank = vocab.encode(blank).unwrap().clone();
        let sdr_wheels = vocab.encode(wheels).unwrap().clone();
        net.present(&sdr_bus, false).unwrap();
        net.present(&sdr_blank, false).unwrap();
        // The plateau raised by "bus" refires during "blank" and is spent;
        // "wheels" two windows later finds the gate closed.
        let out = net.present(&sdr_wheels, false).unwrap();
        assert!(!out.l_gate);
    }

    #[test]
    fn identical_seeds_yield_identical_runs() {
        let run = || {
            let mut vocab = Vocabulary::new(48, 3, 61).unwrap();
            let s = vocab.register_start().unwrap();
            let a = vocab.register("ada").unwrap();
            let b = vocab.register("lov").unwrap();
            let tm = TemporalMemory::new(
                micro_geometry(48, 4),
                LearningParams::default(),
                21,
            )
            .unwrap();
            let mut net =
                SpikingBackend::new(tm, SpikingParams::default(), None, &vocab).unwrap();
            let mut transcript = Vec::new();
            for _ in 0..4 {
                net.reset_context();
                for item in [s, a, b] {
                    let sdr = vocab.encode(item).unwrap().clone();
                    let out = net.present(&sdr, true).unwrap();
                    transcript.push((
                        net.active_cells().to_vec(),
                        net.primed_cells().to_vec(),
                        out.grown_segments,
                    ));
                }
            }
            transcript
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn start_token_name_is_stable() {
        // The corpora builders depend on this exact marker.
        assert_eq!(START_TOKEN, "<start>");
    }
}
