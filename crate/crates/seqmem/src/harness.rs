//! Experiment runner: expands a resolved configuration into concrete
//! (arm, seed) jobs, executes them on a worker pool, and writes the result
//! bundle.
//!
//! Output layout (flat, one directory per run):
//!   `<exp>_<arm>_<seed>.csv`        per-presentation training log
//!   `<exp>_<arm>_<seed>_curve.csv`  raw + smoothed learning curve
//!   `<exp>_<arm>_<seed>_gate.json`  gate checkpoint (gated arms only)
//!   `summary.json`                  per-arm aggregates and diagnostics
//!   `run-meta.json`                 resolved config, seeds, dataset hashes
//!
//! Every job derives all randomness from (config, seed), so execution order
//! never affects any byte of output; a failed job marks the bundle partial
//! without stopping its siblings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::GateCheckpoint;
use crate::config::{DataConfig, ExperimentId, RunConfig};
use crate::encoder::{Stopwords, Vocabulary};
use crate::error::{Error, Result};
use crate::experiments::{
    build_e2_corpus, build_nonsense_corpus, run_e1_arm, run_protocol_arm, subseed, ArmResult,
    ArmSummary, BackendKind, GateWeights, ProtocolArm, WeightInit,
};
use crate::ltm::{
    bytes_sha256, file_sha256, AssociationNorms, ItemGraph, LoadOptions, LoadReport,
    BUILTIN_NORMS_CSV,
};

/// One arm to run across all seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmPlan {
    pub name: String,
    pub weights: WeightInit,
    pub noise_prob: f64,
    pub rho: f64,
    /// Nonsense word sequences instead of the rhyme corpus.
    pub nonsense_corpus: bool,
}

/// The arms an experiment consists of, before any `arms = [...]` filter.
pub fn plan_arms(cfg: &RunConfig) -> Vec<ArmPlan> {
    let base = |name: &str, weights: WeightInit| ArmPlan {
        name: name.to_string(),
        weights,
        noise_prob: cfg.protocol.noise_prob,
        rho: cfg.protocol.rho,
        nonsense_corpus: false,
    };
    match cfg.experiment {
        ExperimentId::E1 => vec![base("plain", WeightInit::None)],
        ExperimentId::E2 => vec![
            base("ltm", WeightInit::Ltm),
            base("random", WeightInit::Random),
        ],
        ExperimentId::E3 => {
            let mut arms = Vec::new();
            for weights in [WeightInit::Ltm, WeightInit::Random] {
                let w = match weights {
                    WeightInit::Ltm => "ltm",
                    _ => "random",
                };
                for &n in &[0.1, 0.3, 0.5, 0.7] {
                    for &rho in &[1e-7, 3e-7] {
                        arms.push(ArmPlan {
                            name: format!("{w}_n{n}_rho{rho:e}"),
                            weights,
                            noise_prob: n,
                            rho,
                            nonsense_corpus: false,
                        });
                    }
                }
            }
            arms
        }
        ExperimentId::E4 => vec![
            base("poems", WeightInit::Ltm),
            ArmPlan {
                nonsense_corpus: true,
                ..base("nonsense", WeightInit::Ltm)
            },
        ],
    }
}

fn select_arms(cfg: &RunConfig) -> Result<Vec<ArmPlan>> {
    let all = plan_arms(cfg);
    if cfg.arms.is_empty() {
        return Ok(all);
    }
    let mut picked = Vec::new();
    for want in &cfg.arms {
        match all.iter().find(|a| &a.name == want) {
            Some(a) => picked.push(a.clone()),
            None => {
                let known: Vec<&str> = all.iter().map(|a| a.name.as_str()).collect();
                return Err(Error::config(format!(
                    "unknown arm '{want}' for {} (known: {})",
                    cfg.experiment,
                    known.join(", ")
                )));
            }
        }
    }
    Ok(picked)
}

/// The association source actually used, hashed for provenance.
pub struct NormsSource {
    pub norms: AssociationNorms,
    pub report: LoadReport,
    pub origin: String,
    pub sha256: String,
}

pub fn load_norms(data: &DataConfig) -> Result<NormsSource> {
    let opts = LoadOptions {
        min_strength: data.min_strength,
        response_set: data.response_set,
    };
    match &data.norms {
        Some(path) => {
            let (norms, report) = AssociationNorms::load(path, &opts)?;
            Ok(NormsSource {
                norms,
                report,
                origin: path.display().to_string(),
                sha256: file_sha256(path)?,
            })
        }
        None => {
            let (norms, report) =
                AssociationNorms::from_reader(BUILTIN_NORMS_CSV.as_bytes(), &opts)?;
            Ok(NormsSource {
                norms,
                report,
                origin: "builtin".to_string(),
                sha256: bytes_sha256(BUILTIN_NORMS_CSV.as_bytes()),
            })
        }
    }
}

/// Runs one (arm, seed) job from scratch: vocabulary, corpus, gate weights,
/// and the training protocol are all rebuilt from the seed's substreams.
fn run_job(
    cfg: &RunConfig,
    arm: &ArmPlan,
    norms: Option<&AssociationNorms>,
    seed: u64,
    out_dir: &Path,
) -> Result<ArmResult> {
    if cfg.experiment == ExperimentId::E1 {
        return run_e1_arm(&cfg.model, seed);
    }
    let mut vocab = Vocabulary::new(
        cfg.model.m_columns,
        cfg.model.columns_per_item,
        subseed(seed, 1),
    )?;
    let rhymes = build_e2_corpus(&mut vocab, &Stopwords::builtin())?;
    let corpus = if arm.nonsense_corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 7));
        build_nonsense_corpus(&vocab, rhymes.sequences.len(), &mut rng)?
    } else {
        rhymes
    };
    let norms = norms.ok_or_else(|| Error::config("gated arm without norms"))?;
    let weights = match arm.weights {
        WeightInit::Ltm => GateWeights::Norms(norms),
        WeightInit::Random => GateWeights::RandomMatched {
            edge_count: ItemGraph::from_norms(norms, &vocab).edge_count(),
        },
        WeightInit::None => GateWeights::Disabled,
    };
    let mut protocol = cfg.protocol.clone();
    protocol.noise_prob = arm.noise_prob;
    protocol.rho = arm.rho;
    let spec = ProtocolArm {
        experiment: cfg.experiment.to_string(),
        arm: arm.name.clone(),
        backend: cfg.backend,
        corpus: &corpus,
        vocab: &vocab,
        weights,
        protocol,
    };
    let mut result = run_protocol_arm(&spec, &cfg.model, seed)?;
    if let Some(graph) = &result.gate {
        // Checkpoint is taken here, while the binarization vocabulary is in
        // scope; the ArmResult keeps only the graph.
        result
            .summary
            .extras
            .insert("gate_vocab_items".into(), vocab.len() as f64);
        let ck = GateCheckpoint::from_graph(graph, &vocab);
        ck.save(&out_dir.join(format!(
            "{}_{}_{}_gate.json",
            cfg.experiment, arm.name, seed
        )))?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub summary: ArmSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmAggregate {
    pub seeds: Vec<SeedSummary>,
    pub seeds_reaching_threshold: usize,
    pub mean_epochs_to_threshold: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub backend: BackendKind,
    pub threshold: f64,
    pub arms: BTreeMap<String, ArmAggregate>,
    pub partial: bool,
    pub errors: Vec<String>,
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub summary: RunSummary,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool_version: &'static str,
    config: &'a RunConfig,
    arms: Vec<&'a ArmPlan>,
    dataset: Option<DatasetMeta<'a>>,
    protocol_used: ProtocolNote,
}

#[derive(Serialize)]
struct DatasetMeta<'a> {
    origin: &'a str,
    sha256: &'a str,
    response_set: crate::ltm::ResponseSet,
    min_strength: f64,
    rows_read: usize,
    edges_kept: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum ProtocolNote {
    /// e1 drives its own fixed streaming schedule.
    BuiltinStreaming,
    LearnThenRehearsal,
}

fn aggregate(results: &[&ArmResult]) -> ArmAggregate {
    let seeds: Vec<SeedSummary> = results
        .iter()
        .map(|r| SeedSummary {
            seed: r.seed,
            summary: r.summary.clone(),
        })
        .collect();
    let reached: Vec<f64> = results
        .iter()
        .filter_map(|r| r.summary.epochs_to_threshold.map(f64::from))
        .collect();
    let finals: Vec<f64> = results
        .iter()
        .filter_map(|r| r.summary.final_accuracy)
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    ArmAggregate {
        seeds_reaching_threshold: reached.len(),
        mean_epochs_to_threshold: mean(&reached),
        mean_final_accuracy: mean(&finals),
        seeds,
    }
}

fn write_arm_files(out_dir: &Path, r: &ArmResult) -> Result<()> {
    let stem = format!("{}_{}_{}", r.experiment, r.arm, r.seed);
    let log_path = out_dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&log_path)?;
    r.log.write_csv(std::io::BufWriter::new(file))?;

    let curve_path = out_dir.join(format!("{stem}_curve.csv"));
    let mut w = std::io::BufWriter::new(fs::File::create(&curve_path)?);
    writeln!(w, "presentation_index,raw,smoothed")?;
    for p in &r.curve {
        writeln!(w, "{},{},{}", p.presentation_index, p.raw, p.smoothed)?;
    }
    w.flush()?;
    Ok(())
}

/// Executes the whole run and writes the bundle into `out_dir` (created if
/// missing). Jobs run in parallel; outputs are byte-deterministic per
/// (config, seed) regardless of scheduling.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let arms = select_arms(cfg)?;
    let needs_norms = arms
        .iter()
        .any(|a| matches!(a.weights, WeightInit::Ltm | WeightInit::Random));
    let source = if needs_norms {
        Some(load_norms(&cfg.data)?)
    } else {
        None
    };
    let norms = source.as_ref().map(|s| &s.norms);

    let jobs: Vec<(&ArmPlan, u64)> = arms
        .iter()
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let outputs: Vec<(String, u64, Result<ArmResult>)> = jobs
        .par_iter()
        .map(|(arm, seed)| {
            let res = run_job(cfg, arm, norms, *seed, out_dir);
            (arm.name.clone(), *seed, res)
        })
        .collect();

    let mut errors = Vec::new();
    let mut ok: Vec<ArmResult> = Vec::new();
    for (arm, seed, res) in outputs {
        match res {
            Ok(r) => ok.push(r),
            Err(e) => errors.push(format!("{arm} seed {seed}: {e}")),
        }
    }
    for r in &ok {
        write_arm_files(out_dir, r)?;
    }

    let mut by_arm: BTreeMap<String, Vec<&ArmResult>> = BTreeMap::new();
    for r in &ok {
        by_arm.entry(r.arm.clone()).or_default().push(r);
    }
    let summary = RunSummary {
        experiment: cfg.experiment.to_string(),
        backend: cfg.backend,
        threshold: crate::experiments::ACCURACY_THRESHOLD,
        arms: by_arm
            .into_iter()
            .map(|(name, rs)| (name, aggregate(&rs)))
            .collect(),
        partial: !errors.is_empty(),
        errors,
    };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::serde(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), summary_json)?;

    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        arms: arms.iter().collect(),
        dataset: source.as_ref().map(|s| DatasetMeta {
            origin: &s.origin,
            sha256: &s.sha256,
            response_set: cfg.data.response_set,
            min_strength: cfg.data.min_strength,
            rows_read: s.report.rows_read,
            edges_kept: s.report.edges_kept,
        }),
        protocol_used: if cfg.experiment == ExperimentId::E1 {
            ProtocolNote::BuiltinStreaming
        } else {
            ProtocolNote::LearnThenRehearsal
        },
    };
    let meta_json =
        serde_json::to_string_pretty(&meta).map_err(|e| Error::serde(e.to_string()))?;
    fs::write(out_dir.join("run-meta.json"), meta_json)?;

    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn tiny_e2_discrete() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
            experiment = "e2"
            backend = "discrete"
            seeds = [11]

            [protocol]
            learn_epochs = 1
            rehearsal_epochs = 2
            "#,
        )
        .unwrap()
    }

    #[test]
    fn e3_grid_has_sixteen_named_arms() {
        let cfg = RunConfig::from_toml_str("experiment = \"e3\"").unwrap();
        let arms = plan_arms(&cfg);
        assert_eq!(arms.len(), 16);
        let names: Vec<&str> = arms.iter().map(|a| a.name.as_str()).collect();
        assert!(names.contains(&"ltm_n0.1_rho1e-7"));
        assert!(names.contains(&"random_n0.7_rho3e-7"));
        let ltm = arms.iter().filter(|a| a.weights == WeightInit::Ltm).count();
        assert_eq!(ltm, 8);
    }

    #[test]
    fn unknown_arm_filter_is_rejected() {
        let mut cfg = tiny_e2_discrete();
        cfg.arms = vec!["bogus".into()];
        let err = run(&cfg, tempfile::tempdir().unwrap().path()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn bundle_files_exist_and_reruns_are_byte_identical() {
        let cfg = tiny_e2_discrete();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run(&cfg, d1.path()).unwrap();
        run(&cfg, d2.path()).unwrap();
        for name in [
            "e2_ltm_11.csv",
            "e2_ltm_11_curve.csv",
            "e2_ltm_11_gate.json",
            "e2_random_11.csv",
            "e2_random_11_curve.csv",
            "e2_random_11_gate.json",
            "summary.json",
            "run-meta.json",
        ] {
            let a = fs::read(d1.path().join(name)).unwrap_or_else(|_| panic!("{name} missing"));
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d1.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["partial"], serde_json::Value::Bool(false));
        assert!(summary["arms"]["ltm"]["seeds"][0]["final_accuracy"].is_number());
    }

    #[test]
    fn gate_checkpoint_matches_the_arm_vocabulary() {
        let cfg = tiny_e2_discrete();
        let dir = tempfile::tempdir().unwrap();
        run(&cfg, dir.path()).unwrap();
        let ck = GateCheckpoint::load(&dir.path().join("e2_ltm_11_gate.json")).unwrap();
        let mut vocab = Vocabulary::new(
            cfg.model.m_columns,
            cfg.model.columns_per_item,
            subseed(11, 1),
        )
        .unwrap();
        build_e2_corpus(&mut vocab, &Stopwords::builtin()).unwrap();
        let graph = ck.to_graph(&vocab).unwrap();
        assert!(graph.edge_count() > 0);
        let expected = ItemGraph::from_norms(
            &load_norms(&cfg.data).unwrap().norms,
            &vocab,
        );
        assert_eq!(graph.edge_list(), expected.edge_list());
    }
}
