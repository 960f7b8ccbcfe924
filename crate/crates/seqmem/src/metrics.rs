//! Prediction-accuracy bookkeeping shared by the training protocol and the
//! experiment harness.

use crate::encoder::Sdr;

/// Fraction of the winning columns that were predicted before the step.
/// `predicted_before` must be sorted (as produced by the layer).
pub fn step_accuracy(predicted_before: &[u32], winning: &Sdr) -> f64 {
    if winning.is_empty() {
        return 0.0;
    }
    let hits = winning
        .columns()
        .iter()
        .filter(|c| predicted_before.binary_search(c).is_ok())
        .count();
    hits as f64 / winning.len() as f64
}

/// Mean of per-step accuracies from `measure_from` (0-based element index)
/// onward. Returns None when no step is measured.
pub fn sequence_accuracy(step_accuracies: &[f64], measure_from: usize) -> Option<f64> {
    let tail = step_accuracies.get(measure_from..)?;
    if tail.is_empty() {
        return None;
    }
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Trailing moving average: element `i` averages the last `window` values
/// up to and including `i` (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

/// First index whose value reaches `threshold`, if any.
pub fn first_reaching(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|v| *v >= threshold)
}
