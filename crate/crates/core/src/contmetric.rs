//! Discontinuity detection for learned encoders.
//!
//! An encoder is probed along closed paths in data space. For each path the
//! per-step Lipschitz ratios L_i = d_out(f(x_{i+1}), f(x_i)) / d_in(x_{i+1}, x_i)
//! are collected; the path is flagged discontinuous when the maximum ratio M
//! exceeds gamma times the alpha-th percentile of the ratios. The headline
//! number is the fraction of flagged paths.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::so3::{self, Rotation};
use crate::{Error, Result};

/// Flagging rule parameters: flag when M > gamma * P_alpha.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContinuityParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for ContinuityParams {
    fn default() -> Self {
        ContinuityParams {
            gamma: 10.0,
            alpha: 90.0,
        }
    }
}

impl ContinuityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(
                "alpha must be a percentile in [0, 100]".into(),
            ));
        }
        Ok(())
    }
}

/// Per-path verdict.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathVerdict {
    pub max_ratio: f64,
    pub percentile_ratio: f64,
    pub flagged: bool,
}

/// Full report, serializable for the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub n_paths: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub disc_fraction: f64,
    pub per_path: Vec<PathVerdict>,
}

/// Linear-interpolation percentile of an unsorted sample, alpha in [0, 100].
pub fn percentile(xs: &[f64], alpha: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::DegenerateInput("percentile of empty sample".into()));
    }
    if !(0.0..=100.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "percentile level {alpha} outside [0, 100]"
        )));
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("non-finite ratio"));
    let pos = alpha / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(s[lo] + frac * (s[hi] - s[lo]))
}

/// Step ratios along a path of (input, output) pairs. Inputs are compared
/// with the Euclidean metric, outputs with the metric `d_out`. Steps whose
/// input displacement is below 1e-12 are skipped.
pub fn lipschitz_ratios<O>(
    inputs: &[Array1<f64>],
    outputs: &[O],
    d_out: impl Fn(&O, &O) -> f64,
) -> Result<Vec<f64>> {
    if inputs.len() != outputs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs vs {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    if inputs.len() < 9 {
        return Err(Error::DegenerateInput(
            "paths need at least 9 points for a stable percentile".into(),
        ));
    }
    let mut ratios = Vec::with_capacity(inputs.len() - 1);
    for i in 0..inputs.len() - 1 {
        let din = (&inputs[i + 1] - &inputs[i])
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if din < 1e-12 {
            continue;
        }
        ratios.push(d_out(&outputs[i + 1], &outputs[i]) / din);
    }
    if ratios.is_empty() {
        return Err(Error::DegenerateInput(
            "path is constant in input space".into(),
        ));
    }
    Ok(ratios)
}

/// Applies the M > gamma * P_alpha rule to one path's ratios.
pub fn classify_path(ratios: &[f64], params: &ContinuityParams) -> Result<PathVerdict> {
    params.validate()?;
    let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let percentile_ratio = percentile(ratios, params.alpha)?;
    Ok(PathVerdict {
        max_ratio,
        percentile_ratio,
        flagged: max_ratio > params.gamma * percentile_ratio,
    })
}

/// Runs the metric over paths produced by `make_path` (indexed by path id)
/// and an encoder mapping inputs to rotations; rotation outputs are compared
/// with the Frobenius metric.
pub fn disc_fraction_rotations(
    n_paths: usize,
    params: &ContinuityParams,
    mut make_path: impl FnMut(usize) -> Result<Vec<Array1<f64>>>,
    mut encode: impl FnMut(&Array1<f64>) -> Rotation,
) -> Result<ContinuityReport> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let mut per_path = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let inputs = make_path(p)?;
        let outputs: Vec<Rotation> = inputs.iter().map(&mut encode).collect();
        let ratios = lipschitz_ratios(&inputs, &outputs, so3::frobenius_distance)?;
        per_path.push(classify_path(&ratios, params)?);
    }
    let flagged = per_path.iter().filter(|v| v.flagged).count();
    Ok(ContinuityReport {
        n_paths,
        gamma: params.gamma,
        alpha: params.alpha,
        disc_fraction: flagged as f64 / n_paths as f64,
        per_path,
    })
}
