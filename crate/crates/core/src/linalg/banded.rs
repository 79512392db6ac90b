use super::{vec_norm, CsrMatrix, Scalar};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a band matrix, stored in the
/// LAPACK `gbtrf` layout: entry `(i, j)` of the factored matrix lives at
/// `ab[(kv + i - j) + ldab * j]` with `kv = kl + ku` and `ldab = 2 kl + ku + 1`.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<T>,
    ipiv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::InvalidArgument("band LU needs a square matrix".into()));
        }
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![T::zero(); ldab * n];
        for r in 0..n {
            for (c, v) in a.row(r) {
                ab[kv + r - c + ldab * c] = v;
            }
        }
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        let mut ipiv = vec![0; n];
        let at = |i: usize, j: usize| kv + i - j + ldab * j;
        // last column touched by the U factor so far
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[at(j, j)].modulus();
            for r in 1..=km {
                let m = ab[at(j + r, j)].modulus();
                if m > best {
                    best = m;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            if best <= f64::EPSILON * 1e-6 * scale || !best.is_finite() {
                return Err(Error::Singular {
                    row: j,
                    pivot: best,
                    scale,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            if km > 0 {
                let piv = ab[at(j, j)];
                for r in 1..=km {
                    let k = at(j + r, j);
                    ab[k] = ab[k] / piv;
                }
                for c in j + 1..=ju {
                    let f = ab[at(j, c)];
                    if f == T::zero() {
                        continue;
                    }
                    for r in 1..=km {
                        let l = ab[at(j + r, j)];
                        let k = at(j + r, c);
                        ab[k] -= l * f;
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, ab, ipiv })
    }

    fn get(&self, i: usize, j: usize) -> T {
        let kv = self.kl + self.ku;
        self.ab[kv + i - j + (2 * self.kl + self.ku + 1) * j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            for r in 1..=self.kl.min(n - 1 - j) {
                b[j + r] -= self.get(j + r, j) * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] = b[j] / self.get(j, j);
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.get(i, j) * bj;
            }
        }
    }

    /// Solves `A^T x = b` (or `A^H x = b` when `conjugate`) in place, reusing the factors.
    pub fn solve_transpose_in_place(&self, b: &mut [T], conjugate: bool) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let kv = self.kl + self.ku;
        let c = |v: T| if conjugate { v.conj() } else { v };
        for j in 0..n {
            let mut acc = b[j];
            for i in j.saturating_sub(kv)..j {
                acc -= c(self.get(i, j)) * b[i];
            }
            b[j] = acc / c(self.get(j, j));
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let mut acc = b[j];
            for r in 1..=self.kl.min(n - 1 - j) {
                acc -= c(self.get(j + r, j)) * b[j + r];
            }
            b[j] = acc;
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }
}

/// How the residual of every solve is checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualBound {
    /// `|A x - b| <= tol * max(1, |b|)`.
    Absolute(f64),
    /// Normwise backward error `|A x - b| <= tol * (|A|_inf |x| + |b|)`.
    Backward(f64),
}

/// A factorized sparse operator: bandwidth-reducing renumbering, banded LU,
/// and a residual contract enforced on every solve (with up to three steps
/// of iterative refinement).
#[derive(Debug, Clone)]
pub struct Factorization<T> {
    matrix: CsrMatrix<T>,
    perm: Option<Vec<usize>>,
    lu: BandedLu<T>,
    bound: ResidualBound,
    norm_inf: f64,
}

impl<T: Scalar> Factorization<T> {
    /// `perm[new] = old` is an optional renumbering applied before factoring.
    pub fn new(matrix: CsrMatrix<T>, perm: Option<Vec<usize>>, bound: ResidualBound) -> Result<Self> {
        let lu = match &perm {
            Some(p) => BandedLu::factor(&matrix.permuted(p))?,
            None => BandedLu::factor(&matrix)?,
        };
        let norm_inf = matrix.norm_inf();
        Ok(Self {
            matrix,
            perm,
            lu,
            bound,
            norm_inf,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    fn raw_solve(&self, b: &[T], adjoint: bool) -> Vec<T> {
        match &self.perm {
            None => {
                let mut x = b.to_vec();
                if adjoint {
                    self.lu.solve_transpose_in_place(&mut x, true);
                } else {
                    self.lu.solve_in_place(&mut x);
                }
                x
            }
            Some(p) => {
                let mut y: Vec<T> = p.iter().map(|&old| b[old]).collect();
                if adjoint {
                    self.lu.solve_transpose_in_place(&mut y, true);
                } else {
                    self.lu.solve_in_place(&mut y);
                }
                let mut x = vec![T::zero(); y.len()];
                for (new, &old) in p.iter().enumerate() {
                    x[old] = y[new];
                }
                x
            }
        }
    }

    fn residual(&self, x: &[T], b: &[T], adjoint: bool) -> Vec<T> {
        let ax = if adjoint {
            self.matrix.mul_vec_adjoint(x)
        } else {
            self.matrix.mul_vec(x)
        };
        b.iter().zip(ax).map(|(&bi, axi)| bi - axi).collect()
    }

    fn checked_solve(&self, b: &[T], adjoint: bool) -> Result<Vec<T>> {
        if b.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, operator dimension is {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = self.raw_solve(b, adjoint);
        let b_norm = vec_norm(b);
        let mut res = 0.0;
        let mut bound = 0.0;
        for step in 0..4 {
            let r = self.residual(&x, b, adjoint);
            res = vec_norm(&r);
            bound = match self.bound {
                ResidualBound::Absolute(tol) => tol * b_norm.max(1.0),
                ResidualBound::Backward(tol) => tol * (self.norm_inf * vec_norm(&x) + b_norm),
            };
            if res <= bound && res.is_finite() {
                return Ok(x);
            }
            if step == 3 {
                break;
            }
            let dx = self.raw_solve(&r, adjoint);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Err(Error::Residual { residual: res, bound })
    }

    /// Solves `A x = b` under the residual contract.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        self.checked_solve(b, false)
    }

    /// Solves `A^H x = b` with the same factors.
    pub fn solve_adjoint(&self, b: &[T]) -> Result<Vec<T>> {
        self.checked_solve(b, true)
    }
}

/// Renumbering of an `nx` by `nz` x-fastest lattice that puts the shorter axis
/// fastest, so the band has width `min(nx, nz)`. `None` when x-fastest already is.
pub(crate) fn lattice_ordering(nx: usize, nz: usize) -> Option<Vec<usize>> {
    if nz >= nx {
        return None;
    }
    let mut perm = Vec::with_capacity(nx * nz);
    for ix in 0..nx {
        for iz in 0..nz {
            perm.push(iz * nx + ix);
        }
    }
    Some(perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..n {
            for c in r.saturating_sub(kl)..(r + ku + 1).min(n) {
                // weak diagonal forces pivoting
                let scale = if r == c { 0.05 } else { 1.0 };
                t.push((
                    r,
                    c,
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale,
                ));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn solves_with_pivoting() {
        let a = random_band(40, 3, 2, 1);
        let lu = BandedLu::factor(&a).unwrap();
        let w: Vec<Complex64> = (0..40).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let mut b = a.mul_vec(&w);
        lu.solve_in_place(&mut b);
        for (x, y) in b.iter().zip(&w) {
            assert!((x - y).norm() < 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn transposed_and_adjoint_solves() {
        let a = random_band(30, 2, 4, 2);
        let lu = BandedLu::factor(&a).unwrap();
        let w: Vec<Complex64> = (0..30).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        // A^H w
        let mut b = a.mul_vec_adjoint(&w);
        lu.solve_transpose_in_place(&mut b, true);
        for (x, y) in b.iter().zip(&w) {
            assert!((x - y).norm() < 1e-9);
        }
        // A^T w = conj(A^H conj(w))
        let wc: Vec<Complex64> = w.iter().map(|v| v.conj()).collect();
        let mut bt: Vec<Complex64> = a.mul_vec_adjoint(&wc).iter().map(|v| v.conj()).collect();
        lu.solve_transpose_in_place(&mut bt, false);
        for (x, y) in bt.iter().zip(&w) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_reports_pivot() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]).unwrap();
        match BandedLu::factor(&a) {
            Err(Error::Singular { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn factorization_with_renumbering() {
        let (nx, nz) = (7, 3);
        let n = nx * nz;
        let mut t = Vec::new();
        for iz in 0..nz {
            for ix in 0..nx {
                let k = iz * nx + ix;
                t.push((k, k, 4.5));
                if ix > 0 {
                    t.push((k, k - 1, -1.0));
                }
                if ix + 1 < nx {
                    t.push((k, k + 1, -1.2));
                }
                if iz > 0 {
                    t.push((k, k - nx, -0.7));
                }
                if iz + 1 < nz {
                    t.push((k, k + nx, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let perm = lattice_ordering(nx, nz).unwrap();
        assert_eq!(a.permuted(&perm).bandwidths(), (nz, nz));
        let f = Factorization::new(a.clone(), Some(perm), ResidualBound::Absolute(1e-12)).unwrap();
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = f.solve(&a.mul_vec(&w)).unwrap();
        let xa = f.solve_adjoint(&a.mul_vec_adjoint(&w)).unwrap();
        for i in 0..n {
            assert!((x[i] - w[i]).abs() < 1e-12);
            assert!((xa[i] - w[i]).abs() < 1e-12);
        }
        assert!(f.solve(&[1.0; 3]).is_err());
    }
}
