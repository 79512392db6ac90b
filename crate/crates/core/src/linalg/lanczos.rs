//! Smallest eigenpairs of a sparse SPD matrix by Lanczos iteration on `A^-1`.
//!
//! Every Krylov vector is fully reorthogonalized (twice, classical Gram-Schmidt)
//! against the current Krylov basis and against all locked eigenvectors.
//! Converged Ritz pairs at the top of the spectrum of `A^-1` are locked and the
//! iteration restarts from a fresh random vector in their orthogonal complement,
//! which also recovers the second member of repeated eigenvalues. A final
//! Rayleigh-Ritz projection with `A` polishes the locked set.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Factorization;
use crate::error::{Error, Result};
use crate::field::{dot, norm2};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Required `|A psi - lambda psi| / lambda`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_restarts: 40,
            seed: 0x5eed,
        }
    }
}

/// Eigenvalues in ascending order with unit-norm eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `|A psi - lambda psi|` for each pair.
    pub residuals: Vec<f64>,
}

/// Subtracts the projections onto `basis` twice.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn sym_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
    let n = basis[0].len();
    let mut out = vec![0.0; n];
    for (q, c) in basis.iter().zip(coeffs) {
        for (o, qi) in out.iter_mut().zip(q) {
            *o += c * qi;
        }
    }
    out
}

/// Residual acceptance: relative to lambda, floored at the rounding level of
/// evaluating `A psi`.
fn accepted(residual: f64, lambda: f64, tol: f64, floor: f64) -> bool {
    residual <= (tol * lambda).max(floor)
}

/// Computes the `n_wanted` smallest eigenpairs of the symmetric positive definite
/// matrix held (and factorized) by `fact`.
pub fn smallest_eigenpairs(fact: &Factorization<f64>, n_wanted: usize, opts: &EigenOptions) -> Result<Eigenpairs> {
    let a = fact.matrix();
    let n = a.n_rows();
    if n_wanted == 0 || n_wanted > n {
        return Err(Error::InvalidArgument(format!(
            "requested {n_wanted} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let floor = 64.0 * f64::EPSILON * a.norm_inf();
    if 2 * n_wanted > n {
        return dense_smallest(fact, n_wanted, opts.tol, floor);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut locked_theta: Vec<f64> = Vec::new();
    let mut growth = 1usize;
    let mut theta_max_seen = 0.0f64;
    let mut worst = f64::INFINITY;
    let mut done = false;

    for _restart in 0..opts.max_restarts {
        let room = n - locked.len();
        if room == 0 {
            done = locked.len() >= n_wanted;
            break;
        }
        let missing = n_wanted.saturating_sub(locked.len());
        let m = ((2 * missing + 30).max(40) * growth).min(room);

        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &locked);
        let nv = norm2(&v);
        for x in v.iter_mut() {
            *x /= nv;
        }
        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alpha: Vec<f64> = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut breakdown = false;
        for j in 0..m {
            let mut w = fact.solve(&basis[j])?;
            let aj = dot(&w, &basis[j]);
            alpha.push(aj);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= aj * vi;
            }
            if j > 0 {
                let bj = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= bj * vi;
                }
            }
            orthogonalize(&mut w, &locked);
            orthogonalize(&mut w, &basis);
            let b = norm2(&w);
            let scale = alpha.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            if b <= 1e-13 * scale || j + 1 == room {
                beta.push(b);
                breakdown = b <= 1e-13 * scale || j + 1 == room;
                break;
            }
            beta.push(b);
            if j + 1 < m {
                for x in w.iter_mut() {
                    *x /= b;
                }
                basis.push(w);
            }
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let (theta, s) = sym_eigen(t);
        let beta_last = if breakdown { 0.0 } else { beta[k - 1] };
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| theta[y].total_cmp(&theta[x]));
        theta_max_seen = theta_max_seen.max(theta[order[0]]);

        let mut top_converged = false;
        let mut top_lambda = f64::INFINITY;
        let mut new_in_range = false;
        let lambda_n_before = nth_smallest_lambda(&locked_theta, n_wanted);
        for (rank, &i) in order.iter().enumerate() {
            let est = (beta_last * s[(k - 1, i)]).abs();
            let th = theta[i];
            if !(th > 0.0) {
                break;
            }
            let ok = est <= (1e-11 * th).max(1e3 * f64::EPSILON * theta_max_seen);
            if !ok {
                if rank == 0 {
                    worst = est / th;
                }
                break;
            }
            if rank == 0 {
                top_converged = true;
                top_lambda = 1.0 / th;
            }
            let mut y = combine(&basis[..k.min(basis.len())], (0..k).map(|r| s[(r, i)]));
            orthogonalize(&mut y, &locked);
            let ny = norm2(&y);
            if ny < 0.5 {
                // already represented by the locked set
                continue;
            }
            for x in y.iter_mut() {
                *x /= ny;
            }
            if lambda_n_before.is_none_or(|l| 1.0 / th <= l * (1.0 + 1e-12)) {
                new_in_range = true;
            }
            locked.push(y);
            locked_theta.push(th);
        }

        if !top_converged {
            growth = (growth * 2).min(64);
            continue;
        }
        if locked.len() >= n_wanted {
            let lambda_n = nth_smallest_lambda(&locked_theta, n_wanted).unwrap();
            if lambda_n_before.is_some() && !new_in_range && top_lambda > lambda_n * (1.0 - 1e-12) {
                done = true;
                break;
            }
        }
    }
    if !done {
        return Err(Error::NoConvergence {
            restarts: opts.max_restarts,
            worst_residual: worst,
        });
    }

    // Rayleigh-Ritz with A on the locked subspace, then polish by block inverse iteration if needed.
    let mut q = locked;
    let mut result = rayleigh_ritz(fact, &q, n_wanted);
    for _ in 0..3 {
        if result
            .residuals
            .iter()
            .zip(&result.values)
            .all(|(&r, &l)| accepted(r, l, opts.tol, floor))
        {
            return Ok(finalize(result));
        }
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(q.len());
        for v in &q {
            let mut w = fact.solve(v)?;
            orthogonalize(&mut w, &z);
            let nw = norm2(&w);
            for x in w.iter_mut() {
                *x /= nw;
            }
            z.push(w);
        }
        q = z;
        result = rayleigh_ritz(fact, &q, n_wanted);
    }
    let worst = result
        .residuals
        .iter()
        .zip(&result.values)
        .map(|(r, l)| r / l)
        .fold(0.0, f64::max);
    if result
        .residuals
        .iter()
        .zip(&result.values)
        .all(|(&r, &l)| accepted(r, l, opts.tol, floor))
    {
        Ok(finalize(result))
    } else {
        Err(Error::NoConvergence {
            restarts: opts.max_restarts,
            worst_residual: worst,
        })
    }
}

fn nth_smallest_lambda(theta: &[f64], n: usize) -> Option<f64> {
    if theta.len() < n {
        return None;
    }
    let mut l: Vec<f64> = theta.iter().map(|t| 1.0 / t).collect();
    l.sort_by(f64::total_cmp);
    Some(l[n - 1])
}

fn rayleigh_ritz(fact: &Factorization<f64>, q: &[Vec<f64>], n_wanted: usize) -> Eigenpairs {
    let a = fact.matrix();
    let aq: Vec<Vec<f64>> = q.iter().map(|v| a.mul_vec(v)).collect();
    let k = q.len();
    let mut h = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let (vals, s) = sym_eigen(h);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
    let mut values = Vec::with_capacity(n_wanted);
    let mut vectors = Vec::with_capacity(n_wanted);
    let mut residuals = Vec::with_capacity(n_wanted);
    for &i in order.iter().take(n_wanted) {
        let mut psi = combine(q, (0..k).map(|r| s[(r, i)]));
        let np = norm2(&psi);
        for x in psi.iter_mut() {
            *x /= np;
        }
        let apsi = a.mul_vec(&psi);
        let lambda = dot(&psi, &apsi);
        let res = apsi
            .iter()
            .zip(&psi)
            .map(|(ap, p)| (ap - lambda * p).powi(2))
            .sum::<f64>()
            .sqrt();
        values.push(lambda);
        vectors.push(psi);
        residuals.push(res);
    }
    Eigenpairs {
        values,
        vectors,
        residuals,
    }
}

/// Sign convention: the largest-magnitude entry of every eigenvector is positive.
fn finalize(mut e: Eigenpairs) -> Eigenpairs {
    for v in e.vectors.iter_mut() {
        let mut imax = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[imax].abs() {
                imax = i;
            }
        }
        if v[imax] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    e
}

fn dense_smallest(fact: &Factorization<f64>, n_wanted: usize, tol: f64, floor: f64) -> Result<Eigenpairs> {
    let a = fact.matrix();
    let n = a.n_rows();
    let dense = a.to_dense();
    let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (dense[i][j] + dense[j][i]));
    let (vals, vecs) = sym_eigen(h);
    let q: Vec<Vec<f64>> = (0..n).map(|i| vecs.column(i).iter().copied().collect()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
    let q: Vec<Vec<f64>> = order.iter().take(n_wanted).map(|&i| q[i].clone()).collect();
    let result = rayleigh_ritz(fact, &q, n_wanted);
    let worst = result
        .residuals
        .iter()
        .zip(&result.values)
        .map(|(r, l)| r / l)
        .fold(0.0, f64::max);
    if result
        .residuals
        .iter()
        .zip(&result.values)
        .all(|(&r, &l)| l > 0.0 && accepted(r, l, tol, floor))
    {
        Ok(finalize(result))
    } else {
        Err(Error::NoConvergence {
            restarts: 0,
            worst_residual: worst,
        })
    }
}
