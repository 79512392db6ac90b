//! Flux-form discretization of `-div(η ∇·)` with homogeneous Dirichlet data
//! eliminated, so unknowns are the interior nodes only.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::linalg::{lattice_ordering, CsrMatrix, Factorization, ResidualBound};

/// Backward-error bound for every solve with the diffusion operator.
pub const DIFFUSION_SOLVE_TOLERANCE: f64 = 1e-12;

/// Interior operator plus the couplings to boundary nodes needed for the lift.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    grid: Grid2D,
    matrix: CsrMatrix<f64>,
    /// `(interior row, boundary node index, weight)`: contribution `weight * m_b` to the lift right-hand side.
    boundary_couplings: Vec<(usize, usize, f64)>,
}

/// Face coefficients are arithmetic means of the two adjacent nodal values.
pub fn assemble_diffusion(eta: &ScalarField) -> Result<DiffusionOperator> {
    if let Some(v) = eta.values().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "diffusion coefficient must be positive, found {v}"
        )));
    }
    let g = *eta.grid();
    let (nx, nz) = (g.nx(), g.nz());
    let w = nx - 2;
    let interior = |ix: usize, iz: usize| (iz - 1) * w + (ix - 1);
    let (ihx2, ihz2) = (1.0 / g.hx().powi(2), 1.0 / g.hz().powi(2));
    let e = eta.values();
    let mut t = Vec::with_capacity(5 * g.interior_len());
    let mut couplings = Vec::new();
    for iz in 1..nz - 1 {
        for ix in 1..nx - 1 {
            let k = g.index(ix, iz);
            let row = interior(ix, iz);
            let mut diag = 0.0;
            for (jx, jz, ih2) in [
                (ix - 1, iz, ihx2),
                (ix + 1, iz, ihx2),
                (ix, iz - 1, ihz2),
                (ix, iz + 1, ihz2),
            ] {
                let j = g.index(jx, jz);
                let face = 0.5 * (e[k] + e[j]) * ih2;
                diag += face;
                if g.is_boundary(jx, jz) {
                    couplings.push((row, j, face));
                } else {
                    t.push((row, interior(jx, jz), -face));
                }
            }
            t.push((row, row, diag));
        }
    }
    let n = g.interior_len();
    Ok(DiffusionOperator {
        grid: g,
        matrix: CsrMatrix::from_triplets(n, n, t)?,
        boundary_couplings: couplings,
    })
}

impl DiffusionOperator {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Interior matrix, symmetric positive definite.
    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn factorize(&self) -> Result<Factorization<f64>> {
        let perm = lattice_ordering(self.grid.nx() - 2, self.grid.nz() - 2);
        Factorization::new(
            self.matrix.clone(),
            perm,
            ResidualBound::Backward(DIFFUSION_SOLVE_TOLERANCE),
        )
    }

    /// Right-hand side of the interior system when the boundary carries `m`.
    pub fn lift_rhs(&self, m: &ScalarField) -> Result<Vec<f64>> {
        self.grid.check_same(m.grid())?;
        let mut b = vec![0.0; self.matrix.n_rows()];
        for &(row, j, w) in &self.boundary_couplings {
            b[row] += w * m.values()[j];
        }
        Ok(b)
    }

    /// Scatters an interior vector onto the grid, zero on the boundary.
    pub fn embed(&self, interior: &[f64]) -> Result<ScalarField> {
        let mut v = vec![0.0; self.grid.len()];
        for (k, &x) in interior.iter().enumerate() {
            v[self.grid.interior_to_index(k)] = x;
        }
        ScalarField::new(self.grid, v)
    }

    /// Solves `A m0 = 0` inside with `m0 = m` on the boundary, given a factorization of this operator.
    pub fn lift_with(&self, fact: &Factorization<f64>, m: &ScalarField) -> Result<ScalarField> {
        let b = self.lift_rhs(m)?;
        let x = fact.solve(&b)?;
        let mut v = m.values().to_vec();
        for (k, &xi) in x.iter().enumerate() {
            v[self.grid.interior_to_index(k)] = xi;
        }
        ScalarField::new(self.grid, v)
    }
}

/// The lifted field: diffusion-harmonic inside, equal to `m` on the boundary.
pub fn lift_m0(m: &ScalarField, eta: &ScalarField) -> Result<ScalarField> {
    m.grid().check_same(eta.grid())?;
    let op = assemble_diffusion(eta)?;
    let fact = op.factorize()?;
    op.lift_with(&fact, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_coefficient_is_laplacian() {
        let g = Grid2D::new(6, 5, 0.5, 2.0).unwrap();
        let op = assemble_diffusion(&ScalarField::constant(g, 1.0)).unwrap();
        let a = op.matrix();
        assert_eq!(a.n_rows(), 12);
        let d = 2.0 / 0.25 + 2.0 / 4.0;
        for r in 0..12 {
            assert!((a.get(r, r) - d).abs() < 1e-14);
        }
        assert_eq!(a.get(0, 1), -4.0);
        assert_eq!(a.get(0, 4), -0.25);
    }

    #[test]
    fn rejects_nonpositive() {
        let g = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let mut v = vec![1.0; 16];
        v[3] = 0.0;
        assert!(assemble_diffusion(&ScalarField::new(g, v).unwrap()).is_err());
    }

    #[test]
    fn constant_boundary_lifts_to_constant() {
        let g = Grid2D::new(9, 7, 1.0, 1.5).unwrap();
        let eta = ScalarField::from_fn(g, |x, z| 1.0 + x * z).unwrap();
        let m = ScalarField::from_fn(g, |x, z| if g.contains(x, z) { 3.25 } else { 0.0 }).unwrap();
        let m0 = lift_m0(&m, &eta).unwrap();
        for v in m0.values() {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_polynomial_is_reproduced() {
        let g = Grid2D::new(11, 9, 0.1, 0.1).unwrap();
        let exact = ScalarField::from_fn(g, |x, z| x * x - z * z).unwrap();
        // boundary data only; interior garbage must not matter
        let mut v = exact.values().to_vec();
        for k in 0..g.interior_len() {
            v[g.interior_to_index(k)] = 123.0;
        }
        let m = ScalarField::new(g, v).unwrap();
        let m0 = lift_m0(&m, &ScalarField::constant(g, 1.0)).unwrap();
        for (a, b) in m0.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
