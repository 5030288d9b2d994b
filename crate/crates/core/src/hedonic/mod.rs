//! Ridge regression on the prepared design matrices, alpha selection on
//! validation RMSE, and the per-architecture evaluation report.

mod report;
mod ridge;

use rayon::prelude::*;

pub use report::{sweep_csv, EvalReport, EvalRow};
pub use ridge::{fit_ridge, model_rmse, predict, predict_f64, rmse, RidgeModel, RidgeProblem};

use crate::error::{Error, Result};
use crate::tabular::PreparedData;
use crate::tensor::Tensor;

/// Alphas reported for the fitted models in the reference results table.
pub const REFERENCE_ALPHAS: [f64; 6] = [40.0, 100.0, 290.0, 320.0, 350.0, 360.0];

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidArgument(format!("log grid needs 0 < lo <= hi and n >= 1, got {lo}, {hi}, {n}")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

fn normalize_grid(mut grid: Vec<f64>) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument(format!("alpha {bad} must be finite and non-negative")));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// 60 log-spaced points in `[0.1, 1000]` plus [`REFERENCE_ALPHAS`].
pub fn default_alpha_grid() -> Vec<f64> {
    let mut g = log_grid(0.1, 1000.0, 60).expect("valid constants");
    g.extend(REFERENCE_ALPHAS);
    normalize_grid(g).expect("valid constants")
}

/// Parses `default`, `log:lo:hi:n`, or a comma-separated list of alphas.
/// The result is sorted and free of duplicates.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let bad = || Error::InvalidArgument(format!("alpha grid {spec:?}: expected default, log:lo:hi:n, or a list"));
    if spec == "default" {
        return Ok(default_alpha_grid());
    }
    if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n > 100_000 {
            return Err(Error::InvalidArgument(format!("alpha grid of {n} points is too large")));
        }
        return normalize_grid(log_grid(lo, hi, n)?);
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    normalize_grid(values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub train_rmse: Option<f64>,
    pub val_rmse: Option<f64>,
    /// Why this alpha could not be fitted.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSweepResult {
    /// Sorted by alpha.
    pub points: Vec<SweepPoint>,
    pub chosen: f64,
}

impl AlphaSweepResult {
    pub fn chosen_point(&self) -> &SweepPoint {
        self.points.iter().find(|p| p.alpha == self.chosen).expect("chosen alpha is on the grid")
    }
}

/// Fits every alpha on the training rows and picks the one with the lowest
/// validation RMSE; ties go to the smaller alpha. Alphas whose system is
/// singular are recorded and skipped.
pub fn sweep_alpha(x_train: &Tensor, y_train: &Tensor, x_val: &Tensor, y_val: &Tensor, grid: &[f64]) -> Result<AlphaSweepResult> {
    let grid = normalize_grid(grid.to_vec())?;
    let problem = RidgeProblem::new(x_train, y_train)?;
    if x_val.dims2()?.1 != problem.width() {
        return Err(Error::Shape("training and validation matrices differ in width".into()));
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&alpha| {
            let fitted = problem.solve(alpha, &[]).and_then(|m| {
                Ok((model_rmse(&m, x_train, y_train)?, model_rmse(&m, x_val, y_val)?))
            });
            match fitted {
                Ok((tr, va)) => SweepPoint { alpha, train_rmse: Some(tr), val_rmse: Some(va), error: None },
                Err(e) => SweepPoint { alpha, train_rmse: None, val_rmse: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(v) = p.val_rmse {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((p.alpha, v));
            }
        }
    }
    match best {
        Some((chosen, _)) => Ok(AlphaSweepResult { points, chosen }),
        None => Err(Error::InvalidArgument(format!(
            "no alpha could be fitted: {}",
            points.first().and_then(|p| p.error.clone()).unwrap_or_default()
        ))),
    }
}

/// `(baseline − model) / baseline × 100`.
pub fn improvement_pct(baseline_test: f64, model_test: f64) -> f64 {
    (baseline_test - model_test) / baseline_test * 100.0
}

/// A named feature set to evaluate.
pub struct Architecture<'a> {
    pub name: String,
    pub data: &'a PreparedData,
    pub baseline: bool,
}

/// Sweep and refit for one architecture.
#[derive(Clone, Debug)]
pub struct ArchitectureFit {
    pub name: String,
    pub sweep: AlphaSweepResult,
    pub model: RidgeModel,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub test_rmse: f64,
}

pub fn fit_architecture(name: &str, data: &PreparedData, grid: &[f64]) -> Result<ArchitectureFit> {
    let sweep = sweep_alpha(&data.train.values, &data.train.target, &data.validation.values, &data.validation.target, grid)?;
    let model = RidgeProblem::new(&data.train.values, &data.train.target)?.solve(sweep.chosen, &data.train.columns)?;
    Ok(ArchitectureFit {
        name: name.to_string(),
        train_rmse: model_rmse(&model, &data.train.values, &data.train.target)?,
        val_rmse: model_rmse(&model, &data.validation.values, &data.validation.target)?,
        test_rmse: model_rmse(&model, &data.test.values, &data.test.target)?,
        sweep,
        model,
    })
}

/// Fits every architecture and reports RMSEs and the improvement of each
/// over the single baseline row. All architectures must share one split.
pub fn evaluate(architectures: &[Architecture<'_>], grid: &[f64]) -> Result<(EvalReport, Vec<ArchitectureFit>)> {
    let baselines: Vec<&Architecture> = architectures.iter().filter(|a| a.baseline).collect();
    if baselines.len() != 1 {
        return Err(Error::InvalidArgument(format!("expected exactly one baseline, found {}", baselines.len())));
    }
    let reference = &baselines[0].data.split;
    for a in architectures {
        let s = &a.data.split;
        if s.train != reference.train || s.validation != reference.validation || s.test != reference.test {
            return Err(Error::Shape(format!("{} uses a different split from the baseline", a.name)));
        }
    }
    let mut fits = Vec::with_capacity(architectures.len());
    for a in architectures {
        fits.push(fit_architecture(&a.name, a.data, grid)?);
    }
    let base_idx = architectures.iter().position(|a| a.baseline).expect("checked above");
    let base_test = fits[base_idx].test_rmse;
    let rows = fits
        .iter()
        .enumerate()
        .map(|(i, f)| EvalRow {
            name: f.name.clone(),
            train_rmse: f.train_rmse,
            val_rmse: f.val_rmse,
            test_rmse: f.test_rmse,
            alpha: f.sweep.chosen,
            improvement_pct: if i == base_idx { 0.0 } else { improvement_pct(base_test, f.test_rmse) },
        })
        .collect();
    Ok((EvalReport { rows }, fits))
}
