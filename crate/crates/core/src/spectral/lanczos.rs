//! Lanczos iteration with full reorthogonalization for the top-k
//! eigenpairs of a symmetric matrix.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Fixed seed for the start vector; the solver is deterministic.
const START_SEED: u64 = 0x1A2B_5EED;

const RESIDUAL_TOL: f64 = 1e-8;

/// Leading k eigenpairs of a symmetric matrix, eigenvalues descending,
/// eigenvectors orthonormal as columns of an N x k matrix.
///
/// Krylov basis growth restarts from fresh random directions on breakdown
/// (invariant subspace), so repeated eigenvalues are recovered. Residuals
/// are checked against `1e-8 * ||A||` with the spectral norm estimated from
/// the largest Ritz value.
pub fn top_k_eigenvectors(a: &Array2<f64>, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "eigensolver needs a square matrix, got {:?}",
            a.dim()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={n}"
        )));
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_asym > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (max asymmetry {max_asym})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // beta[i] couples basis i and i+1

    let random_unit = |rng: &mut ChaCha8Rng, basis: &[Array1<f64>]| -> Option<Array1<f64>> {
        for _ in 0..32 {
            let mut v = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            for b in basis {
                let d = v.dot(b);
                v.scaled_add(-d, b);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                return Some(v / norm);
            }
        }
        None
    };

    let mut v = random_unit(&mut rng, &basis)
        .ok_or_else(|| Error::EigenConvergence("cannot draw a start vector".into()))?;

    let matvec = |x: &Array1<f64>| -> Array1<f64> { a.dot(x) };

    loop {
        // extend the basis one Lanczos step
        let mut w = matvec(&v);
        let alpha = w.dot(&v);
        w.scaled_add(-alpha, &v);
        if let Some(prev) = basis.last() {
            let beta_prev = *betas.last().unwrap();
            w.scaled_add(-beta_prev, prev);
        }
        // full reorthogonalization, twice for numerical safety
        for _ in 0..2 {
            for b in &basis {
                let d = w.dot(b);
                w.scaled_add(-d, b);
            }
            let d = w.dot(&v);
            w.scaled_add(-d, &v);
        }
        basis.push(v.clone());
        alphas.push(alpha);

        let m = basis.len();
        let beta = w.dot(&w).sqrt();

        let done_extending = m == n;
        if !done_extending {
            if beta > 1e-10 {
                betas.push(beta);
                v = w / beta;
            } else {
                // invariant subspace: restart with a fresh direction
                match random_unit(&mut rng, &basis) {
                    Some(fresh) => {
                        betas.push(0.0);
                        v = fresh;
                    }
                    None => {
                        return Err(Error::EigenConvergence(
                            "basis exhausted before convergence".into(),
                        ));
                    }
                }
            }
        }

        // check convergence periodically or at the full dimension
        let check_now = done_extending || (m >= k.max(8) && m % 8 == 0);
        if !check_now {
            continue;
        }

        let (values, vectors) = ritz_pairs(&alphas, &betas, &basis, k.min(m), n);
        let norm_estimate = values
            .iter()
            .fold(0.0f64, |acc, &l| acc.max(l.abs()))
            .max(1e-300);
        let mut all_good = values.len() == k;
        if all_good {
            for (idx, &lambda) in values.iter().enumerate() {
                let col = vectors.column(idx).to_owned();
                let mut residual = matvec(&col);
                residual.scaled_add(-lambda, &col);
                let rnorm = residual.dot(&residual).sqrt();
                if rnorm > RESIDUAL_TOL * norm_estimate {
                    all_good = false;
                    break;
                }
            }
        }
        if all_good {
            return Ok((values, vectors));
        }
        if done_extending {
            // recompute residuals for the error report
            let mut residuals = Vec::new();
            for (idx, &lambda) in values.iter().enumerate() {
                let col = vectors.column(idx).to_owned();
                let mut residual = matvec(&col);
                residual.scaled_add(-lambda, &col);
                residuals.push(residual.dot(&residual).sqrt());
            }
            return Err(Error::EigenConvergence(format!(
                "residuals {residuals:?} exceed {RESIDUAL_TOL} * ||A||"
            )));
        }
    }
}

/// Eigen-decompose the tridiagonal Lanczos matrix and lift the leading k
/// Ritz vectors back through the basis.
fn ritz_pairs(
    alphas: &[f64],
    betas: &[f64],
    basis: &[Array1<f64>],
    k: usize,
    n: usize,
) -> (Vec<f64>, Array2<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let take = k.min(m);
    let mut values = Vec::with_capacity(take);
    let mut vectors = Array2::<f64>::zeros((n, take));
    for (out_col, &idx) in order[..take].iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let coeffs = eig.eigenvectors.column(idx);
        let mut acc = Array1::<f64>::zeros(n);
        for (bi, b) in basis.iter().enumerate() {
            acc.scaled_add(coeffs[bi], b);
        }
        let norm = acc.dot(&acc).sqrt();
        if norm > 0.0 {
            acc /= norm;
        }
        vectors.column_mut(out_col).assign(&acc);
    }
    (values, vectors)
}
