use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Linear predictor on standardised features:
/// `intercept + Σ coef_j · (x_j − mean_j) / scale_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coef)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((v, c), (m, s))| c * (v - m) / s)
                .sum::<f64>()
    }
}

/// Column means and standard deviations; constant columns get scale 1 so
/// they standardise to zero.
fn standardise(x: &[Vec<f64>]) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let mut means = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        if var.sqrt() > 1e-12 * (1.0 + m.abs()) {
            scales[j] = var.sqrt();
        }
    }
    let z = DMatrix::from_fn(n, d, |i, j| (x[i][j] - means[j]) / scales[j]);
    (z, means, scales)
}

fn centred_target(y: &[f64]) -> (DVector<f64>, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (DVector::from_iterator(y.len(), y.iter().map(|v| v - mean)), mean)
}

/// Ordinary least squares; the minimum-norm solution when features are
/// collinear.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> LinearModel {
    let (z, means, scales) = standardise(x);
    let (yc, intercept) = centred_target(y);
    let svd = z.svd(true, true);
    let eps = 1e-10 * svd.singular_values.max().max(1.0);
    let coef = svd
        .solve(&yc, eps)
        .map(|c| c.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; means.len()]);
    LinearModel { intercept, coef, means, scales }
}

/// L2-penalised least squares minimising `‖y − Zw‖² / n + alpha·‖w‖²` on
/// standardised features.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64) -> LinearModel {
    let (z, means, scales) = standardise(x);
    let (yc, intercept) = centred_target(y);
    let n = y.len() as f64;
    let d = means.len();
    let gram = z.transpose() * &z / n + DMatrix::identity(d, d) * alpha;
    let rhs = z.transpose() * yc / n;
    let coef = gram
        .cholesky()
        .map(|c| c.solve(&rhs).iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; d]);
    LinearModel { intercept, coef, means, scales }
}

/// L1-penalised least squares minimising `‖y − Zw‖² / (2n) + alpha·‖w‖₁` by
/// cyclic coordinate descent on standardised features.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], alpha: f64) -> LinearModel {
    let (z, means, scales) = standardise(x);
    let (yc, intercept) = centred_target(y);
    let n = y.len() as f64;
    let d = means.len();
    let mut w = vec![0.0; d];
    let mut resid: Vec<f64> = yc.iter().copied().collect();
    let col_sq: Vec<f64> = (0..d).map(|j| z.column(j).norm_squared() / n).collect();
    for _ in 0..10_000 {
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n + col_sq[j] * w[j];
            let new = rho.signum() * (rho.abs() - alpha).max(0.0) / col_sq[j];
            let step = new - w[j];
            if step != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= step * a;
                }
                w[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step < 1e-12 {
            break;
        }
    }
    LinearModel { intercept, coef: w, means, scales }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64, 3.0]).collect();
        let y = x.iter().map(|r| 0.5 + 0.02 * r[0] - 0.1 * r[1]).collect();
        (x, y)
    }

    #[test]
    fn ols_recovers_linear_target() {
        let (x, y) = table();
        let m = fit_ols(&x, &y);
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-10);
        }
    }

    #[test]
    fn penalties_shrink_towards_the_mean() {
        let (x, y) = table();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let strong = fit_ridge(&x, &y, 1e6);
        assert!((strong.predict(&x[0]) - mean).abs() < 1e-4);
        let lasso = fit_lasso(&x, &y, 10.0);
        assert!(lasso.coef.iter().all(|c| *c == 0.0));
        let weak = fit_lasso(&x, &y, 1e-9);
        assert!((weak.predict(&x[3]) - y[3]).abs() < 1e-6);
    }
}
