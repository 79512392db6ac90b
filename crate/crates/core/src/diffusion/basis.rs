//! Eigenvector model decomposition: lift, smallest eigenpairs, projection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::eta::{eval_eta, gradient_norms, DiffusionSpec, EtaKind};
use super::operator::assemble_diffusion;
use crate::error::{Error, Result};
use crate::field::{dot, ScalarField};
use crate::grid::Grid2D;
use crate::io::{encode_field, fmt_f64, read_field, write_field};
use crate::linalg::{smallest_eigenpairs, EigenOptions};

#[derive(Debug, Clone)]
pub struct BasisOptions {
    pub eigen: EigenOptions,
    /// Coefficients are raised to at least `eta_floor * max(η)` before assembly,
    /// which bounds the condition number of the operator for extreme scalings.
    pub eta_floor: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            eta_floor: 1e-12,
        }
    }
}

/// Hex SHA-256 of the `EWF1` encoding of a field.
pub fn field_hash(m: &ScalarField) -> String {
    hex::encode(Sha256::digest(encode_field(m)))
}

/// The coefficient field used to build a basis from `m`, after the dynamic-range floor.
pub fn diffusion_coefficient(m: &ScalarField, spec: &DiffusionSpec, eta_floor: f64) -> Result<ScalarField> {
    let eta = eval_eta(spec, &gradient_norms(m)?)?;
    let lo = eta_floor * eta.max();
    eta.map(|v| v.max(lo))
}

/// Lift `m0` plus the `N` smallest eigenpairs of the diffusion operator built from `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    spec: DiffusionSpec,
    source_model_hash: String,
    m0: ScalarField,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<ScalarField>,
}

impl EigenBasis {
    pub fn build(m: &ScalarField, spec: DiffusionSpec, n: usize) -> Result<Self> {
        Self::build_with(m, spec, n, &BasisOptions::default())
    }

    pub fn build_with(m: &ScalarField, spec: DiffusionSpec, n: usize, opts: &BasisOptions) -> Result<Self> {
        let eta = diffusion_coefficient(m, &spec, opts.eta_floor)?;
        let op = assemble_diffusion(&eta)?;
        let fact = op.factorize()?;
        let m0 = op.lift_with(&fact, m)?;
        let pairs = smallest_eigenpairs(&fact, n, &opts.eigen)?;
        log::debug!(
            "{spec:?}: {n} eigenpairs, lambda in [{:e}, {:e}], worst residual {:e}",
            pairs.values[0],
            pairs.values[n - 1],
            pairs.residuals.iter().copied().fold(0.0, f64::max)
        );
        let eigenvectors = pairs
            .vectors
            .iter()
            .map(|v| op.embed(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            source_model_hash: field_hash(m),
            m0,
            eigenvalues: pairs.values,
            eigenvectors,
        })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn source_model_hash(&self) -> &str {
        &self.source_model_hash
    }

    pub fn grid(&self) -> &Grid2D {
        self.m0.grid()
    }

    pub fn m0(&self) -> &ScalarField {
        &self.m0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[ScalarField] {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn check_active(&self, n_active: usize) -> Result<()> {
        if n_active > self.len() {
            return Err(Error::InvalidArgument(format!(
                "{n_active} active vectors requested from a basis of {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// `m0 + Σ αₖ ψₖ` for the first `alpha.len()` vectors.
    pub fn combine(&self, alpha: &[f64]) -> Result<ScalarField> {
        self.check_active(alpha.len())?;
        let mut v = self.m0.values().to_vec();
        for (a, psi) in alpha.iter().zip(&self.eigenvectors) {
            for (vi, p) in v.iter_mut().zip(psi.values()) {
                *vi += a * p;
            }
        }
        ScalarField::new(*self.grid(), v)
    }

    /// `[⟨ψ_l, g⟩]` for the first `n_active` vectors.
    pub fn inner_products(&self, g: &ScalarField, n_active: usize) -> Result<Vec<f64>> {
        self.check_active(n_active)?;
        self.grid().check_same(g.grid())?;
        Ok(self.eigenvectors[..n_active]
            .iter()
            .map(|psi| dot(psi.values(), g.values()))
            .collect())
    }

    /// Least-squares coefficients of `m - m0` on the first `n_active` vectors
    /// (normal equations with a Cholesky factor of the Gram matrix).
    pub fn coefficients(&self, m: &ScalarField, n_active: usize) -> Result<Vec<f64>> {
        self.check_active(n_active)?;
        self.grid().check_same(m.grid())?;
        if n_active == 0 {
            return Ok(Vec::new());
        }
        let r: Vec<f64> = m.values().iter().zip(self.m0.values()).map(|(a, b)| a - b).collect();
        let psi = &self.eigenvectors[..n_active];
        let gram = DMatrix::from_fn(n_active, n_active, |i, j| dot(psi[i].values(), psi[j].values()));
        let rhs = DVector::from_iterator(n_active, psi.iter().map(|p| dot(p.values(), &r)));
        let chol = gram.cholesky().ok_or_else(|| {
            Error::InvalidArgument(format!("basis Gram matrix of size {n_active} is rank deficient"))
        })?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    /// Writes `manifest.txt`, `m0.ewf` and `psi_0001.ewf`... into `dir`.
    pub fn write_archive(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let g = self.grid();
        let mut s = String::new();
        writeln!(s, "kind = {}", self.spec.kind()).unwrap();
        writeln!(s, "beta = {}", fmt_f64(self.spec.beta())).unwrap();
        writeln!(s, "n = {}", self.len()).unwrap();
        writeln!(s, "grid = {} {} {} {} {} {}", g.nx(), g.nz(), g.hx(), g.hz(), g.x0(), g.z0()).unwrap();
        writeln!(s, "source_model_hash = {}", self.source_model_hash).unwrap();
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(s, "eigenvalue_{:04} = {}", k + 1, fmt_f64(*l)).unwrap();
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        write_field(dir.join("m0.ewf"), &self.m0)?;
        for (k, psi) in self.eigenvectors.iter().enumerate() {
            write_field(dir.join(format!("psi_{:04}.ewf", k + 1)), psi)?;
        }
        Ok(())
    }

    pub fn read_archive(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut kind = None;
        let mut beta = None;
        let mut n = None;
        let mut hash = None;
        let mut eigenvalues = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::format(&path, format!("expected `key = value`, found `{line}`")))?;
            let real = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::format(&path, format!("bad number `{v}` for `{key}`")))
            };
            match key {
                "kind" => kind = Some(value.parse::<EtaKind>().map_err(|e| Error::format(&path, e.to_string()))?),
                "beta" => beta = Some(real(value)?),
                "n" => {
                    n = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| Error::format(&path, format!("bad count `{value}`")))?,
                    )
                }
                "grid" => {}
                "source_model_hash" => hash = Some(value.to_string()),
                k if k.starts_with("eigenvalue_") => eigenvalues.push(real(value)?),
                _ => return Err(Error::format(&path, format!("unknown key `{key}`"))),
            }
        }
        let missing = |what: &str| Error::format(&path, format!("missing `{what}`"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let beta = beta.ok_or_else(|| missing("beta"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        if eigenvalues.len() != n {
            return Err(Error::format(
                &path,
                format!("manifest announces {n} eigenvalues, lists {}", eigenvalues.len()),
            ));
        }
        let spec = if kind.uses_beta() {
            DiffusionSpec::new(kind, beta)
        } else {
            DiffusionSpec::unscaled(kind)
        }
        .map_err(|e| Error::format(&path, e.to_string()))?;
        let m0 = read_field(dir.join("m0.ewf"))?;
        let eigenvectors = (1..=n)
            .map(|k| {
                let f = read_field(dir.join(format!("psi_{k:04}.ewf")))?;
                m0.grid().check_same(f.grid())?;
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            source_model_hash: hash.ok_or_else(|| missing("source_model_hash"))?,
            m0,
            eigenvalues,
            eigenvectors,
        })
    }
}

/// A model written as `m0 + Σ αₖ ψₖ` on a shared basis.
#[derive(Debug, Clone)]
pub struct DecomposedModel {
    basis: Arc<EigenBasis>,
    alpha: Vec<f64>,
}

impl DecomposedModel {
    pub fn new(basis: Arc<EigenBasis>, alpha: Vec<f64>) -> Result<Self> {
        basis.check_active(alpha.len())?;
        Ok(Self { basis, alpha })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n_active(&self) -> usize {
        self.alpha.len()
    }

    pub fn reconstruct(&self) -> ScalarField {
        self.basis.combine(&self.alpha).expect("coefficient count checked at construction")
    }
}

/// Least-squares projection of `m` on the first `n_active` basis vectors.
pub fn project(m: &ScalarField, basis: &Arc<EigenBasis>, n_active: usize) -> Result<DecomposedModel> {
    let alpha = basis.coefficients(m, n_active)?;
    DecomposedModel::new(Arc::clone(basis), alpha)
}

pub fn reconstruct(d: &DecomposedModel) -> ScalarField {
    d.reconstruct()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: Grid2D, seed: u64, lo: f64, hi: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::new(g, (0..g.len()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    fn tikhonov() -> DiffusionSpec {
        DiffusionSpec::unscaled(EtaKind::Eta9).unwrap()
    }

    /// Cyclic Jacobi sweeps; returns ascending eigenvalues and the matching columns.
    fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
        let vals = idx.iter().map(|&i| a[i][i]).collect();
        let vecs = idx.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
        (vals, vecs)
    }

    #[test]
    fn laplacian_spectrum_closed_form() {
        let (nx, nz, h) = (13, 9, 0.5);
        let g = Grid2D::new(nx, nz, h, h).unwrap();
        let b = EigenBasis::build(&ScalarField::constant(g, 1.0), tikhonov(), 12).unwrap();
        let mut exact = Vec::new();
        for k in 1..nx - 1 {
            for l in 1..nz - 1 {
                let s = |i: usize, n: usize| (i as f64 * std::f64::consts::PI / (2.0 * (n - 1) as f64)).sin().powi(2);
                exact.push(4.0 / (h * h) * (s(k, nx) + s(l, nz)));
            }
        }
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in b.eigenvalues().iter().zip(&exact) {
            assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn basis_invariants_and_rayleigh_quotient() {
        let g = Grid2D::new(12, 10, 1.0, 1.0).unwrap();
        let m = random_field(g, 3, 1.0, 2.0);
        let spec = DiffusionSpec::new(EtaKind::Eta3, 0.1).unwrap();
        let b = EigenBasis::build(&m, spec, 8).unwrap();
        let eta = diffusion_coefficient(&m, &spec, 1e-12).unwrap();
        let op = assemble_diffusion(&eta).unwrap();
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        assert!(b.eigenvalues()[0] > 0.0);
        for (k, psi) in b.eigenvectors().iter().enumerate() {
            for iz in 0..g.nz() {
                for ix in 0..g.nx() {
                    if g.is_boundary(ix, iz) {
                        assert_eq!(psi.get(ix, iz), 0.0);
                    }
                }
            }
            for (l, phi) in b.eigenvectors().iter().enumerate() {
                let d = psi.dot(phi).unwrap();
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((d - want).abs() <= 1e-8, "<psi{k}, psi{l}> = {d}");
            }
            let x: Vec<f64> = (0..g.interior_len()).map(|i| psi.values()[g.interior_to_index(i)]).collect();
            let rq = dot(&x, &op.matrix().mul_vec(&x));
            assert!((rq - b.eigenvalues()[k]).abs() <= 1e-8 * b.eigenvalues()[k]);
        }
    }

    #[test]
    fn random_eta_matches_dense_oracle() {
        let g = Grid2D::new(9, 9, 1.0, 1.0).unwrap();
        let eta = random_field(g, 11, 0.5, 3.0);
        let op = assemble_diffusion(&eta).unwrap();
        let fact = op.factorize().unwrap();
        let pairs = smallest_eigenpairs(&fact, 5, &EigenOptions::default()).unwrap();
        let (vals, vecs) = jacobi(op.matrix().to_dense());
        for k in 0..5 {
            assert!((pairs.values[k] - vals[k]).abs() <= 1e-10 * vals[k]);
            let overlap = dot(&pairs.vectors[k], &vecs[k]).abs();
            assert!((overlap - 1.0).abs() < 1e-8, "mode {k}: overlap {overlap}");
        }
    }

    #[test]
    fn dense_assembly_oracle() {
        let g = Grid2D::new(7, 7, 0.7, 1.3).unwrap();
        let eta = random_field(g, 5, 0.1, 4.0);
        let a = assemble_diffusion(&eta).unwrap().matrix().to_dense();
        let n = 25;
        for r in 0..n {
            for c in 0..n {
                assert_eq!(a[r][c], a[c][r]);
            }
        }
        // direct entry-by-entry formula on interior (ix, iz) in 1..6
        let e = |ix: usize, iz: usize| eta.get(ix, iz);
        for iz in 1..6 {
            for ix in 1..6 {
                let r = (iz - 1) * 5 + (ix - 1);
                let fx = |jx: usize| (e(ix, iz) + e(jx, iz)) / 2.0 / (0.7 * 0.7);
                let fz = |jz: usize| (e(ix, iz) + e(ix, jz)) / 2.0 / (1.3 * 1.3);
                let diag = fx(ix - 1) + fx(ix + 1) + fz(iz - 1) + fz(iz + 1);
                assert!((a[r][r] - diag).abs() <= 1e-14 * diag);
                for c in 0..n {
                    let (cx, cz) = (c % 5 + 1, c / 5 + 1);
                    let want = if c == r {
                        continue;
                    } else if cz == iz && cx + 1 == ix {
                        -fx(ix - 1)
                    } else if cz == iz && cx == ix + 1 {
                        -fx(ix + 1)
                    } else if cx == ix && cz + 1 == iz {
                        -fz(iz - 1)
                    } else if cx == ix && cz == iz + 1 {
                        -fz(iz + 1)
                    } else {
                        0.0
                    };
                    assert!((a[r][c] - want).abs() <= 1e-14 * want.abs().max(1.0), "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn lift_matches_dense_solve() {
        let g = Grid2D::new(15, 15, 1.0, 1.0).unwrap();
        let eta = random_field(g, 21, 0.2, 5.0);
        let m = random_field(g, 22, 1.0, 2.0);
        let m0 = super::super::operator::lift_m0(&m, &eta).unwrap();
        // dense Gaussian elimination on the full nodal system with identity boundary rows
        let n = g.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for iz in 0..15 {
            for ix in 0..15 {
                let k = g.index(ix, iz);
                if g.is_boundary(ix, iz) {
                    a[k][k] = 1.0;
                    a[k][n] = m.values()[k];
                    continue;
                }
                for (jx, jz) in [(ix - 1, iz), (ix + 1, iz), (ix, iz - 1), (ix, iz + 1)] {
                    let j = g.index(jx, jz);
                    let w = 0.5 * (eta.values()[k] + eta.values()[j]);
                    a[k][k] += w;
                    a[k][j] -= w;
                }
            }
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (a[r][n] - s) / a[r][r];
        }
        for (got, want) in m0.values().iter().zip(&x) {
            assert!((got - want).abs() <= 1e-8 * want.abs());
        }
    }

    #[test]
    fn projection_exact_cases() {
        let g = Grid2D::new(10, 8, 1.0, 1.0).unwrap();
        let m = random_field(g, 9, 1.0, 2.0);
        let b = Arc::new(EigenBasis::build(&m, DiffusionSpec::new(EtaKind::Eta1, 1.0).unwrap(), 6).unwrap());
        let d = project(b.m0(), &b, 6).unwrap();
        assert!(d.alpha().iter().all(|a| a.abs() < 1e-12));
        assert_eq!(relative_error(b.m0(), &d.reconstruct()).unwrap(), 0.0);
        let target = b.combine(&[0.0, 3.0]).unwrap();
        let d = project(&target, &b, 6).unwrap();
        for (k, a) in d.alpha().iter().enumerate() {
            let want = if k == 1 { 3.0 } else { 0.0 };
            assert!((a - want).abs() < 1e-10, "alpha[{k}] = {a}");
        }
        let zero = DecomposedModel::new(Arc::clone(&b), vec![0.0; 4]).unwrap();
        assert_eq!(&zero.reconstruct(), b.m0());
        assert!(project(&m, &b, 7).is_err());
    }

    #[test]
    fn complete_basis_reconstructs() {
        let g = Grid2D::new(7, 6, 1.0, 1.0).unwrap();
        let m = random_field(g, 13, 1.0, 2.0);
        let n = g.interior_len();
        let b = Arc::new(EigenBasis::build(&m, DiffusionSpec::new(EtaKind::Eta3, 0.5).unwrap(), n).unwrap());
        let r = project(&m, &b, n).unwrap().reconstruct();
        assert!(relative_error(&m, &r).unwrap() < 1e-6);
    }

    #[test]
    fn reconstruction_is_affine() {
        let g = Grid2D::new(9, 7, 1.0, 1.0).unwrap();
        let m = random_field(g, 1, 1.0, 2.0);
        let b = EigenBasis::build(&m, tikhonov(), 4).unwrap();
        let (a1, a2) = ([0.3, -1.0, 2.0, 0.5], [1.5, 0.25, -0.75, 4.0]);
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let lhs = b.combine(&sum).unwrap();
        let (r1, r2) = (b.combine(&a1).unwrap(), b.combine(&a2).unwrap());
        for k in 0..g.len() {
            let rhs = r1.values()[k] + r2.values()[k] - b.m0().values()[k];
            assert!((lhs.values()[k] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn archive_round_trip() {
        let g = Grid2D::new(8, 6, 2.0, 1.0).unwrap();
        let m = random_field(g, 4, 1.0, 2.0);
        let b = EigenBasis::build(&m, DiffusionSpec::new(EtaKind::Eta6, 1e-2).unwrap(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write_archive(dir.path()).unwrap();
        assert!(dir.path().join("psi_0003.ewf").exists());
        let back = EigenBasis::read_archive(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.source_model_hash(), field_hash(&m));
    }
}
