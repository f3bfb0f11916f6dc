use serde::Serialize;

use crate::error::{Error, Result};

/// Pointwise mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn aggregate(trajectories: &[Vec<f64>]) -> Result<Aggregate> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("no trajectories to aggregate".into()))?;
    let len = first.len();
    if let Some(bad) = trajectories.iter().find(|t| t.len() != len) {
        return Err(Error::ShapeMismatch(format!(
            "ragged trajectories: lengths {len} and {}",
            bad.len()
        )));
    }
    let n = trajectories.len() as f64;
    let mut mean = vec![0.0; len];
    for t in trajectories {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; len];
    for t in trajectories {
        for ((s, v), m) in std.iter_mut().zip(t).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    Ok(Aggregate { mean, std })
}

/// Smallest index with `curve[k] ≤ threshold`.
pub fn first_crossing(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v <= threshold)
}

/// Median over seeds of the per-seed first crossing; a seed that never
/// crosses counts as infinitely late.
pub fn median_crossing(trajectories: &[Vec<f64>], threshold: f64) -> Option<f64> {
    let mut hits: Vec<f64> = trajectories
        .iter()
        .map(|t| first_crossing(t, threshold).map_or(f64::INFINITY, |k| k as f64))
        .collect();
    if hits.is_empty() {
        return None;
    }
    hits.sort_by(f64::total_cmp);
    let mid = hits.len() / 2;
    let med = if hits.len() % 2 == 1 {
        hits[mid]
    } else {
        0.5 * (hits[mid - 1] + hits[mid])
    };
    med.is_finite().then_some(med)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub threshold: f64,
    /// `None` when the curve never reaches the threshold.
    pub iterate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianCrossing {
    pub threshold: f64,
    pub median_iterate: Option<f64>,
}
