//! Gaussian-process regression with a squared-exponential kernel.
//!
//! Targets are standardized before fitting and the prior mean is zero in
//! standardized units. Hyperparameters are picked by exhaustive search of
//! the log marginal likelihood over a logarithmic grid.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::path::Path;

const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    /// (min, max, count) for the signal variance in standardized units.
    pub variance: (f64, f64, usize),
    /// (min, max, count) as multiples of the input span.
    pub lengthscale: (f64, f64, usize),
    /// (min, max, count) for the noise variance in standardized units.
    pub noise: (f64, f64, usize),
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self { variance: (1e-2, 1e2, 20), lengthscale: (1e-3, 1e1, 20), noise: (1e-8, 1e-1, 10) }
    }
}

fn log_grid((lo, hi, n): (f64, f64, usize)) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub train_inputs: Vec<f64>,
    pub train_targets: Vec<f64>,
    pub kernel_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
    y_mean: f64,
    y_std: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn se(a: f64, b: f64, var: f64, ls: f64) -> f64 {
    var * (-(a - b).powi(2) / (2.0 * ls * ls)).exp()
}

fn factor(x: &[f64], var: f64, ls: f64, noise: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| se(x[i], x[j], var, ls) + if i == j { noise } else { 0.0 });
    k.clone().cholesky().or_else(|| (k + DMatrix::identity(n, n) * JITTER).cholesky())
}

fn lml(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = chol.solve(y);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let n = y.len() as f64;
    (-0.5 * y.dot(&alpha) - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln(), alpha)
}

/// Fits with the default hyperparameter grid.
pub fn fit(inputs: &[f64], targets: &[f64]) -> Result<GpModel> {
    fit_with_grid(inputs, targets, &HyperGrid::default())
}

pub fn fit_with_grid(inputs: &[f64], targets: &[f64], grid: &HyperGrid) -> Result<GpModel> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), got: targets.len() });
    }
    if inputs.len() < 3 {
        return Err(Error::InvalidParameter { name: "inputs", reason: "at least 3 points required".into() });
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { point: inputs.to_vec() });
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sd = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - mean) / sd));
    let span = inputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - inputs.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = if span > 0.0 { span } else { 1.0 };

    let mut best: Option<(f64, f64, f64, f64, DVector<f64>, Cholesky<f64, Dyn>)> = None;
    for &var in &log_grid(grid.variance) {
        for &rel in &log_grid(grid.lengthscale) {
            let ls = rel * span;
            for &noise in &log_grid(grid.noise) {
                let Some(chol) = factor(inputs, var, ls, noise) else { continue };
                let (l, alpha) = lml(&chol, &y);
                if l.is_finite() && best.as_ref().is_none_or(|b| l > b.0) {
                    best = Some((l, var, ls, noise, alpha, chol));
                }
            }
        }
    }
    let (l, var, ls, noise, alpha, chol) = best.ok_or(Error::SingularKernel)?;
    Ok(GpModel {
        train_inputs: inputs.to_vec(),
        train_targets: targets.to_vec(),
        kernel_variance: var,
        lengthscale: ls,
        noise_variance: noise,
        log_marginal_likelihood: l,
        y_mean: mean,
        y_std: sd,
        alpha,
        chol,
    })
}

impl GpModel {
    /// Posterior mean in the original target units.
    pub fn predict_mean(&self, x: f64) -> f64 {
        let k: f64 = self
            .train_inputs
            .iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| se(x, *xi, self.kernel_variance, self.lengthscale) * a)
            .sum();
        self.y_mean + self.y_std * k
    }

    /// Posterior variance of the latent function, original units.
    pub fn predict_variance(&self, x: f64) -> f64 {
        let k = DVector::from_iterator(
            self.train_inputs.len(),
            self.train_inputs.iter().map(|xi| se(x, *xi, self.kernel_variance, self.lengthscale)),
        );
        let v = self.chol.solve(&k);
        (self.kernel_variance - k.dot(&v)).max(0.0) * self.y_std * self.y_std
    }

    /// Noise standard deviation in original units.
    pub fn noise_std(&self) -> f64 {
        self.noise_variance.sqrt() * self.y_std
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    biomass_concentration: f64,
    productivity: f64,
}

pub fn read_training_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        xs.push(r.biomass_concentration);
        ys.push(r.productivity);
    }
    Ok((xs, ys))
}

pub fn write_training_csv(path: &Path, inputs: &[f64], targets: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (x, y) in inputs.iter().zip(targets) {
        w.serialize(Row { biomass_concentration: *x, productivity: *y })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let gp = fit(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((gp.predict_mean(*xi) - yi).abs() < 1e-3);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = [0.0, 0.5, 1.0, 1.5];
        let y = [1.0, 2.0, 0.5, 1.5];
        let gp = fit(&x, &y).unwrap();
        let mean = y.iter().sum::<f64>() / 4.0;
        assert!((gp.predict_mean(1e4) - mean).abs() < 1e-9);
    }

    #[test]
    fn symmetric_data_symmetric_prediction() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y = [0.5, 1.7, 2.0, 1.7, 0.5];
        let gp = fit(&x, &y).unwrap();
        for t in [0.3, 0.9, 1.4, 2.5] {
            assert!((gp.predict_mean(t) - gp.predict_mean(-t)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit(&[0.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(fit(&[0.0, 1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(fit(&[0.0, 1.0, f64::NAN], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("arrtoc-gp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("train.csv");
        write_training_csv(&path, &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(read_training_csv(&path).unwrap(), (vec![1.0, 2.0], vec![3.0, 4.0]));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
