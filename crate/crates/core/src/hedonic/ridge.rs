use crate::error::{Error, Result};
use crate::tensor::{cholesky_in_place, cholesky_solve_in_place, Tensor};

/// Ridge regression fit: `ŷ = X·w + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub weights: Tensor,
    pub intercept: f64,
    pub alpha: f64,
    pub columns: Vec<String>,
}

/// Centred normal equations of one training set, reusable across alphas.
pub struct RidgeProblem {
    p: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    /// Centred Gram matrix `XcᵀXc`, `p × p` row-major.
    gram: Vec<f64>,
    /// `Xcᵀ yc`
    xty: Vec<f64>,
}

impl RidgeProblem {
    pub fn new(x: &Tensor, y: &Tensor) -> Result<Self> {
        let (n, p) = x.dims2()?;
        if y.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
        }
        if n == 0 || p == 0 {
            return Err(Error::Shape("ridge needs at least one row and one column".into()));
        }
        let mut x_mean = vec![0.0f64; p];
        for r in 0..n {
            for (m, &v) in x_mean.iter_mut().zip(x.row(r)) {
                *m += v as f64;
            }
        }
        x_mean.iter_mut().for_each(|m| *m /= n as f64);
        let y_mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let mut xc = vec![0.0f64; n * p];
        for r in 0..n {
            for (j, &v) in x.row(r).iter().enumerate() {
                xc[r * p + j] = v as f64 - x_mean[j];
            }
        }
        let yc: Vec<f64> = y.data().iter().map(|&v| v as f64 - y_mean).collect();
        let mut gram = vec![0.0f64; p * p];
        // SAFETY: xc is n×p row-major; reading it with strides (1, p) views
        // it as p×n (the transpose). gram is p×p row-major with strides (p, 1).
        unsafe {
            matrixmultiply::dgemm(
                p, n, p, 1.0,
                xc.as_ptr(), 1, p as isize,
                xc.as_ptr(), p as isize, 1,
                0.0, gram.as_mut_ptr(), p as isize, 1,
            );
        }
        let mut xty = vec![0.0f64; p];
        for r in 0..n {
            for j in 0..p {
                xty[j] += xc[r * p + j] * yc[r];
            }
        }
        Ok(Self { p, x_mean, y_mean, gram, xty })
    }

    pub fn width(&self) -> usize {
        self.p
    }

    /// Solves `(XcᵀXc + αI) w = Xcᵀyc`; `b = ȳ − x̄ᵀw`.
    pub fn solve(&self, alpha: f64, columns: &[String]) -> Result<RidgeModel> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be finite and non-negative, got {alpha}")));
        }
        let p = self.p;
        let mut a = self.gram.clone();
        for i in 0..p {
            a[i * p + i] += alpha;
        }
        cholesky_in_place(&mut a, p)?;
        let mut w = self.xty.clone();
        cholesky_solve_in_place(&a, p, &mut w, 1);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ridge weights at alpha {alpha}")));
        }
        let intercept = self.y_mean - self.x_mean.iter().zip(&w).map(|(m, w)| m * w).sum::<f64>();
        let columns = if columns.len() == p { columns.to_vec() } else { (0..p).map(|j| format!("x{j}")).collect() };
        Ok(RidgeModel {
            weights: Tensor::vector(w.into_iter().map(|v| v as f32).collect())?,
            intercept,
            alpha,
            columns,
        })
    }
}

/// Ridge fit with an unpenalized intercept.
pub fn fit_ridge(x: &Tensor, y: &Tensor, alpha: f64) -> Result<RidgeModel> {
    RidgeProblem::new(x, y)?.solve(alpha, &[])
}

/// `X·w + b`, accumulated in f64.
pub fn predict_f64(model: &RidgeModel, x: &Tensor) -> Result<Vec<f64>> {
    let (n, p) = x.dims2()?;
    if p != model.weights.len() {
        return Err(Error::Shape(format!("model has {} weights, matrix {p} columns", model.weights.len())));
    }
    Ok((0..n)
        .map(|r| {
            model.intercept
                + x.row(r).iter().zip(model.weights.data()).map(|(&a, &w)| a as f64 * w as f64).sum::<f64>()
        })
        .collect())
}

pub fn predict(model: &RidgeModel, x: &Tensor) -> Result<Tensor> {
    Tensor::vector(predict_f64(model, x)?.into_iter().map(|v| v as f32).collect())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), y.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("rmse of empty vectors".into()));
    }
    let ss: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// RMSE of `model` on `(x, y)`.
pub fn model_rmse(model: &RidgeModel, x: &Tensor, y: &Tensor) -> Result<f64> {
    let y: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    rmse(&predict_f64(model, x)?, &y)
}
