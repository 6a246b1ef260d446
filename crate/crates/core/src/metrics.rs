//! Spatial divergence of a keyframe set and its area under the curve.
//!
//! A pair of keyframes is "similar" when their positions are strictly closer
//! than a threshold `r`. Divergence is the number of similar ordered pairs
//! (self-pairs excluded) divided by `k^2`, so it lies in `[0, (k-1)/k]`.
//! Lower is more diverse.

use serde::{Deserialize, Serialize};

use crate::dataset::Pose;
use crate::{Error, Result};

/// Number of ordered pairs `(i, j)`, `i != j`, closer than `r`.
pub fn similar_pair_count(positions: &[Pose], r: f64) -> usize {
    let mut count = 0;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            if a.distance(b) < r {
                count += 2;
            }
        }
    }
    count
}

pub fn divergence(positions: &[Pose], r: f64) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::EmptyInput("keyframe set"));
    }
    if r.is_nan() || r < 0.0 {
        return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {r}")));
    }
    let k = positions.len() as f64;
    Ok(similar_pair_count(positions, r) as f64 / (k * k))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DivergenceCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl DivergenceCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.thresholds.last().copied().unwrap_or(0.0)
    }

    /// `r,D` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,D\n");
        for (r, d) in self.thresholds.iter().zip(&self.values) {
            out.push_str(&format!("{r},{d}\n"));
        }
        out
    }
}

/// Divergence at `steps + 1` evenly spaced thresholds `i * r_max / steps`.
pub fn divergence_curve(positions: &[Pose], r_max: f64, steps: usize) -> Result<DivergenceCurve> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidConfig(format!("steps must be >= 2, got {steps}")));
    }
    let thresholds: Vec<f64> = (0..=steps).map(|i| i as f64 * r_max / steps as f64).collect();
    let values = thresholds
        .iter()
        .map(|&r| divergence(positions, r))
        .collect::<Result<_>>()?;
    Ok(DivergenceCurve { thresholds, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    #[default]
    Trapezoid,
    LeftRiemann,
}

/// Unnormalized area under the divergence curve (trapezoid rule).
pub fn auc(curve: &DivergenceCurve) -> Result<f64> {
    auc_with(curve, Integration::Trapezoid)
}

pub fn auc_with(curve: &DivergenceCurve, rule: Integration) -> Result<f64> {
    if curve.len() < 2 || curve.values.len() != curve.len() {
        return Err(Error::EmptyInput("curve needs at least two points"));
    }
    let area = curve
        .thresholds
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(r, d)| {
            let w = r[1] - r[0];
            match rule {
                Integration::Trapezoid => 0.5 * w * (d[0] + d[1]),
                Integration::LeftRiemann => w * d[0],
            }
        })
        .sum();
    Ok(area)
}
