//! Verification metrics over genuine and impostor score lists (higher = more similar).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

fn sorted_desc(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// ROC points, one per distinct score, accepting scores `>= threshold`.
/// Starts at `(far, tar) = (0, 0)` with an infinite threshold.
pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Vec<RocPoint> {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.dedup();
    let g = sorted_desc(genuine);
    let i = sorted_desc(impostor);
    let rate = |sorted: &[f64], t: f64| {
        if sorted.is_empty() {
            0.0
        } else {
            sorted.partition_point(|&s| s >= t) as f64 / sorted.len() as f64
        }
    };
    let mut out = vec![RocPoint { threshold: f64::INFINITY, far: 0.0, tar: 0.0 }];
    out.extend(all.into_iter().map(|t| RocPoint { threshold: t, far: rate(&i, t), tar: rate(&g, t) }));
    out
}

/// Largest true-accept rate over thresholds whose false-accept rate is at most `far`.
pub fn tar_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> f64 {
    roc_curve(genuine, impostor).into_iter().filter(|p| p.far <= far + 1e-12).map(|p| p.tar).fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn write_roc_csv(path: &std::path::Path, roc: &[RocPoint]) -> crate::Result<()> {
    use std::fmt::Write;
    let mut s = String::from("threshold,far,tar\n");
    for p in roc {
        writeln!(s, "{},{},{}", p.threshold, p.far, p.tar).expect("write to string");
    }
    std::fs::write(path, s).map_err(crate::error::io_err(path))
}
