//! The viewpoint-bottleneck loss, its analytic gradient, and the
//! log-determinant covariance diagnostic.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use super::{FeatureMatrix, VBConfig};
use crate::{Error, Result};

/// Columns with centered norm below this threshold are zeroed out.
const NORM_EPS: f64 = 1e-12;

/// Ridge added to the sample covariance before taking the log-determinant.
const LOGDET_EPS: f64 = 1e-6;

fn normalize_with_norms(values: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let h = values.nrows();
    let mut out = values.clone();
    let mut norms = Vec::with_capacity(values.ncols());
    for mut col in out.columns_mut() {
        let mean = col.sum() / h as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < NORM_EPS {
            col.fill(0.0);
            norms.push(0.0);
        } else {
            col.mapv_inplace(|v| v / norm);
            norms.push(norm);
        }
    }
    (out, norms)
}

/// Normalize every column to zero mean and unit Euclidean norm.
///
/// Columns whose centered norm falls below 1e-12 become all-zero.
pub fn column_normalize(z: &FeatureMatrix) -> Result<FeatureMatrix> {
    if z.sample_count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "column normalization needs H >= 2 samples, got {}",
            z.sample_count()
        )));
    }
    let (out, _) = normalize_with_norms(z.values());
    FeatureMatrix::new(out)
}

/// Cross-correlation of two column-normalized representations: `Zp^T Zq`.
pub fn cross_correlation(zp: &FeatureMatrix, zq: &FeatureMatrix) -> Result<Array2<f64>> {
    if zp.values().dim() != zq.values().dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            zp.values().dim(),
            zq.values().dim()
        )));
    }
    Ok(zp.values().t().dot(zq.values()))
}

/// `|| Gamma_lambda(Z) - I ||_F`, with off-diagonal entries scaled by
/// `lambda`; the squared norm when `cfg.squared_norm` is set.
pub fn vb_loss(z: &Array2<f64>, cfg: &VBConfig) -> Result<f64> {
    cfg.validate()?;
    if z.nrows() != z.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "vb_loss expects a square matrix, got {:?}",
            z.dim()
        )));
    }
    let mut sum = 0.0;
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let v = if i == j {
                z[[i, j]] - 1.0
            } else {
                cfg.lambda * z[[i, j]]
            };
            sum += v * v;
        }
    }
    Ok(if cfg.squared_norm { sum } else { sum.sqrt() })
}

/// Loss and gradient of the full chain: column normalization, cross
/// correlation, off-diagonal scaling, (squared) Frobenius distance to
/// identity. Gradients are with respect to the raw inputs.
pub fn vb_loss_grad(
    zp: &FeatureMatrix,
    zq: &FeatureMatrix,
    cfg: &VBConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    if zp.values().dim() != zq.values().dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            zp.values().dim(),
            zq.values().dim()
        )));
    }
    if zp.sample_count() < 2 {
        return Err(Error::InvalidArgument(
            "gradient needs H >= 2 samples".into(),
        ));
    }
    let (np, norms_p) = normalize_with_norms(zp.values());
    let (nq, norms_q) = normalize_with_norms(zq.values());
    let corr = np.t().dot(&nq);

    let d = corr.nrows();
    let mut squared = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v = if i == j {
                corr[[i, j]] - 1.0
            } else {
                cfg.lambda * corr[[i, j]]
            };
            squared += v * v;
        }
    }
    let loss = if cfg.squared_norm { squared } else { squared.sqrt() };

    // dL/dCorr for the squared norm; rescaled afterwards for the plain norm.
    let mut g = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            g[[i, j]] = if i == j {
                2.0 * (corr[[i, j]] - 1.0)
            } else {
                2.0 * cfg.lambda * cfg.lambda * corr[[i, j]]
            };
        }
    }
    if !cfg.squared_norm {
        if squared <= 0.0 {
            // the plain norm is non-differentiable exactly at the optimum;
            // return the zero subgradient
            g.fill(0.0);
        } else {
            let scale = 0.5 / squared.sqrt();
            g.mapv_inplace(|v| v * scale);
        }
    }

    // Corr = Np^T Nq  =>  dNp = Nq G^T, dNq = Np G
    let d_np = nq.dot(&g.t());
    let d_nq = np.dot(&g);

    let back = |normalized: &Array2<f64>, norms: &[f64], d_norm: &Array2<f64>| {
        let h = normalized.nrows();
        let mut out = Array2::<f64>::zeros(normalized.raw_dim());
        for j in 0..normalized.ncols() {
            if norms[j] == 0.0 {
                continue; // degenerate column: zero subgradient
            }
            let y = normalized.column(j);
            let gcol = d_norm.column(j);
            let dot = y.dot(&gcol);
            let mut dc: Vec<f64> = (0..h).map(|i| (gcol[i] - dot * y[i]) / norms[j]).collect();
            let mean = dc.iter().sum::<f64>() / h as f64;
            for (i, v) in dc.iter_mut().enumerate() {
                *v -= mean;
                out[[i, j]] = *v;
            }
        }
        out
    };

    let grad_p = back(&np, &norms_p, &d_np);
    let grad_q = back(&nq, &norms_q, &d_nq);
    Ok((loss, grad_p, grad_q))
}

/// Log-determinant of the ridge-regularized D x D sample covariance of the
/// feature columns.
pub fn logdet_covariance(z: &FeatureMatrix) -> Result<f64> {
    let h = z.sample_count();
    if h < 2 {
        return Err(Error::InvalidArgument(
            "covariance needs H >= 2 samples".into(),
        ));
    }
    let d = z.feature_dim();
    let mean = z.values().mean_axis(Axis(0)).expect("H >= 2");
    let centered = z.values() - &mean.insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (h - 1) as f64;
    let mut m = DMatrix::<f64>::from_fn(d, d, |i, j| cov[[i, j]]);
    for i in 0..d {
        m[(i, i)] += LOGDET_EPS;
    }
    match m.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            Ok(2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>())
        }
        None => {
            // fall back to the symmetric eigendecomposition when rounding
            // pushes a tiny eigenvalue below zero
            let eig = m.symmetric_eigen();
            Ok(eig
                .eigenvalues
                .iter()
                .map(|&l| l.max(LOGDET_EPS).ln())
                .sum())
        }
    }
}
