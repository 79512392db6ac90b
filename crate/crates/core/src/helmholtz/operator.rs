use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField};
use crate::grid::Grid2D;
use crate::linalg::{lattice_ordering, CsrMatrix, Factorization, ResidualBound};
use crate::model::Model;

/// Residual bound of every Helmholtz solve: `|A u - f| <= 1e-10 max(1, |f|)`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCondition {
    /// `p = 0`.
    Dirichlet,
    /// First-order absorbing condition `∂ν p - i ω c⁻¹ p = 0`.
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryConditions {
    pub top: EdgeCondition,
    pub bottom: EdgeCondition,
    pub left: EdgeCondition,
    pub right: EdgeCondition,
}

impl BoundaryConditions {
    /// Free surface on top, absorbing elsewhere.
    pub fn seismic() -> Self {
        Self {
            top: EdgeCondition::Dirichlet,
            bottom: EdgeCondition::Absorbing,
            left: EdgeCondition::Absorbing,
            right: EdgeCondition::Absorbing,
        }
    }

    pub fn all(cond: EdgeCondition) -> Self {
        Self {
            top: cond,
            bottom: cond,
            left: cond,
            right: cond,
        }
    }
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        Self::seismic()
    }
}

/// Role of a node in the discrete system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Interior,
    Dirichlet,
    /// Absorbing row coupling the node to `inward` with spacing `h`.
    Absorbing { inward: usize, h: f64 },
}

impl BoundaryConditions {
    /// Corners touching a Dirichlet edge are Dirichlet; otherwise corners follow
    /// the vertical (left/right) edge.
    pub fn node_kind(&self, grid: &Grid2D, ix: usize, iz: usize) -> NodeKind {
        let (nx, nz) = (grid.nx(), grid.nz());
        let vertical = if ix == 0 {
            Some((self.left, grid.index(1, iz)))
        } else if ix + 1 == nx {
            Some((self.right, grid.index(nx - 2, iz)))
        } else {
            None
        };
        let horizontal = if iz == 0 {
            Some((self.top, grid.index(ix, 1)))
        } else if iz + 1 == nz {
            Some((self.bottom, grid.index(ix, nz - 2)))
        } else {
            None
        };
        match (vertical, horizontal) {
            (None, None) => NodeKind::Interior,
            (Some((EdgeCondition::Dirichlet, _)), _) | (_, Some((EdgeCondition::Dirichlet, _))) => NodeKind::Dirichlet,
            (Some((_, inward)), _) => NodeKind::Absorbing {
                inward,
                h: grid.hx(),
            },
            (None, Some((_, inward))) => NodeKind::Absorbing {
                inward,
                h: grid.hz(),
            },
        }
    }
}

/// Assembled Helmholtz matrix for one model and angular frequency.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    grid: Grid2D,
    omega: f64,
    bc: BoundaryConditions,
    kinds: Vec<NodeKind>,
    slowness2: Vec<f64>,
    matrix: CsrMatrix<Complex64>,
}

/// Assembles with the seismic boundary conditions.
pub fn assemble(model: &Model, omega: f64) -> Result<HelmholtzOperator> {
    assemble_with(model.field(), omega, BoundaryConditions::seismic())
}

/// Assembles from a squared-slowness field with arbitrary edge conditions.
pub fn assemble_with(m: &ScalarField, omega: f64, bc: BoundaryConditions) -> Result<HelmholtzOperator> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "angular frequency must be positive, got {omega}"
        )));
    }
    if let Some(v) = m.values().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "squared slowness must be positive, found {v}"
        )));
    }
    let grid = *m.grid();
    let (nx, nz) = (grid.nx(), grid.nz());
    let (ihx2, ihz2) = (1.0 / grid.hx().powi(2), 1.0 / grid.hz().powi(2));
    let w2 = omega * omega;
    let mut kinds = Vec::with_capacity(grid.len());
    let mut t = Vec::with_capacity(5 * grid.len());
    let c = |re: f64| Complex64::new(re, 0.0);
    for iz in 0..nz {
        for ix in 0..nx {
            let k = grid.index(ix, iz);
            let kind = bc.node_kind(&grid, ix, iz);
            match kind {
                NodeKind::Interior => {
                    t.push((k, k, c(2.0 * ihx2 + 2.0 * ihz2 - w2 * m.values()[k])));
                    t.push((k, k - 1, c(-ihx2)));
                    t.push((k, k + 1, c(-ihx2)));
                    t.push((k, k - nx, c(-ihz2)));
                    t.push((k, k + nx, c(-ihz2)));
                }
                NodeKind::Dirichlet => t.push((k, k, c(1.0))),
                NodeKind::Absorbing { inward, h } => {
                    // ((p_b - p_in)/h - i ω sqrt(m) p_b) / h
                    let s = m.values()[k].sqrt();
                    t.push((k, k, Complex64::new(1.0 / (h * h), -omega * s / h)));
                    t.push((k, inward, c(-1.0 / (h * h))));
                }
            }
            kinds.push(kind);
        }
    }
    let matrix = CsrMatrix::from_triplets(grid.len(), grid.len(), t)?;
    Ok(HelmholtzOperator {
        grid,
        omega,
        bc,
        kinds,
        slowness2: m.values().to_vec(),
        matrix,
    })
}

impl HelmholtzOperator {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn boundary_conditions(&self) -> BoundaryConditions {
        self.bc
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    pub fn node_kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Zeroes the right-hand side on every boundary row (the edge conditions are homogeneous).
    pub fn apply_boundary_rhs(&self, mut rhs: Vec<Complex64>) -> Vec<Complex64> {
        for (r, kind) in rhs.iter_mut().zip(&self.kinds) {
            if *kind != NodeKind::Interior {
                *r = Complex64::new(0.0, 0.0);
            }
        }
        rhs
    }

    /// `∂A/∂m_j`: the matrix depends on `m_j` only through its diagonal entry.
    pub fn diagonal_derivative(&self, j: usize) -> Complex64 {
        match self.kinds[j] {
            NodeKind::Interior => Complex64::new(-self.omega * self.omega, 0.0),
            NodeKind::Dirichlet => Complex64::new(0.0, 0.0),
            NodeKind::Absorbing { h, .. } => Complex64::new(0.0, -self.omega / (2.0 * self.slowness2[j].sqrt() * h)),
        }
    }

    pub fn factorize(self) -> Result<HelmholtzSolver> {
        let perm = lattice_ordering(self.grid.nx(), self.grid.nz());
        let fact = Factorization::new(self.matrix.clone(), perm, ResidualBound::Absolute(SOLVE_TOLERANCE))?;
        Ok(HelmholtzSolver { op: self, fact })
    }
}

/// A factorized operator; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    op: HelmholtzOperator,
    fact: Factorization<Complex64>,
}

impl HelmholtzSolver {
    pub fn operator(&self) -> &HelmholtzOperator {
        &self.op
    }

    /// Solves `A u = f` for every right-hand side, reusing the factorization.
    pub fn solve(&self, rhs_batch: &[Vec<Complex64>]) -> Result<Vec<ComplexField>> {
        rhs_batch
            .par_iter()
            .map(|f| ComplexField::new(self.op.grid, self.fact.solve(f)?))
            .collect()
    }

    /// Solves `A^H q = g` for every right-hand side.
    pub fn solve_adjoint(&self, rhs_batch: &[Vec<Complex64>]) -> Result<Vec<ComplexField>> {
        rhs_batch
            .par_iter()
            .map(|f| ComplexField::new(self.op.grid, self.fact.solve_adjoint(f)?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(nx: usize, nz: usize, h: f64, c: f64) -> Model {
        let g = Grid2D::new(nx, nz, h, h).unwrap();
        Model::from_speed(&ScalarField::constant(g, c), 1000.0, 6000.0).unwrap()
    }

    #[test]
    fn interior_and_dirichlet_rows() {
        let m = model(6, 5, 10.0, 1500.0);
        let omega = 20.0;
        let op = assemble(&m, omega).unwrap();
        let g = *m.grid();
        let k = g.index(2, 2);
        let expected = 2.0 / 100.0 + 2.0 / 100.0 - omega * omega / (1500.0f64 * 1500.0);
        assert!((op.matrix().get(k, k).re - expected).abs() < 1e-15);
        assert_eq!(op.matrix().get(k, k).im, 0.0);
        assert_eq!(op.matrix().get(k, k + 1).re, -0.01);
        for ix in 0..6 {
            let t = g.index(ix, 0);
            assert_eq!(op.matrix().get(t, t), Complex64::new(1.0, 0.0));
            assert_eq!(op.matrix().row(t).count(), 1);
        }
        let rhs = op.apply_boundary_rhs(vec![Complex64::new(1.0, 1.0); g.len()]);
        assert_eq!(rhs[g.index(3, 0)], Complex64::new(0.0, 0.0));
        assert_eq!(rhs[k], Complex64::new(1.0, 1.0));
    }

    #[test]
    fn corners_follow_rules() {
        let g = Grid2D::new(5, 4, 2.0, 3.0).unwrap();
        let bc = BoundaryConditions::seismic();
        assert_eq!(bc.node_kind(&g, 0, 0), NodeKind::Dirichlet);
        assert_eq!(bc.node_kind(&g, 4, 0), NodeKind::Dirichlet);
        assert_eq!(
            bc.node_kind(&g, 0, 3),
            NodeKind::Absorbing {
                inward: g.index(1, 3),
                h: 2.0
            }
        );
        assert_eq!(
            bc.node_kind(&g, 2, 3),
            NodeKind::Absorbing {
                inward: g.index(2, 2),
                h: 3.0
            }
        );
    }

    #[test]
    fn rejects_bad_frequency() {
        let m = model(5, 5, 10.0, 2000.0);
        assert!(assemble(&m, 0.0).is_err());
        assert!(assemble(&m, -3.0).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let m = model(9, 7, 10.0, 2000.0);
        let s = assemble(&m, 30.0).unwrap().factorize().unwrap();
        let u = s.solve(&[vec![Complex64::new(0.0, 0.0); 63]]).unwrap();
        assert!(u[0].values().iter().all(|v| v.norm() == 0.0));
        assert!(s.solve(&[vec![Complex64::new(0.0, 0.0); 5]]).is_err());
    }
}
