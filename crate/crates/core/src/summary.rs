//! Distribution summaries for simulated quantities.

use serde::{Deserialize, Serialize};

/// Mean and central interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Central coverage of `[lower, upper]`.
    pub level: f64,
}

impl Summary {
    /// Summarizes `values` with a central interval at `level` (e.g. 0.99).
    /// Returns `None` for an empty sample.
    pub fn of(values: &[f64], level: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile_sorted(&sorted, tail),
            upper: quantile_sorted(&sorted, 1.0 - tail),
            level,
        })
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

/// Linear-interpolation quantile of an ascending sample (the "type 7"
/// definition: position `q (n − 1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}
