//! Structured Cartesian grid. Nodes are numbered x-fastest: `index = iz * nx + ix`.
//! The depth axis `z` points downward and the row `iz = 0` is the free surface.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    nz: usize,
    hx: f64,
    hz: f64,
    x0: f64,
    z0: f64,
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, hx: f64, hz: f64) -> Result<Self> {
        Self::with_origin(nx, nz, hx, hz, 0.0, 0.0)
    }

    pub fn with_origin(nx: usize, nz: usize, hx: f64, hz: f64, x0: f64, z0: f64) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 nodes, got {nx}x{nz}"
            )));
        }
        if !(hx > 0.0 && hx.is_finite() && hz > 0.0 && hz.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive and finite, got hx={hx}, hz={hz}"
            )));
        }
        if !(x0.is_finite() && z0.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            nx,
            nz,
            hx,
            hz,
            x0,
            z0,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hz(&self) -> f64 {
        self.hz
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical extent `(x1 - x0, z1 - z0)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.nx - 1) as f64 * self.hx,
            (self.nz - 1) as f64 * self.hz,
        )
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        debug_assert!(ix < self.nx && iz < self.nz);
        iz * self.nx + ix
    }

    #[inline]
    pub fn unflatten(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.hx
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z0 + iz as f64 * self.hz
    }

    pub fn is_boundary(&self, ix: usize, iz: usize) -> bool {
        ix == 0 || iz == 0 || ix + 1 == self.nx || iz + 1 == self.nz
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (lx, lz) = self.extent();
        let tol = 1e-9 * (self.hx + self.hz);
        x >= self.x0 - tol && x <= self.x0 + lx + tol && z >= self.z0 - tol && z <= self.z0 + lz + tol
    }

    /// Nearest node to a physical position.
    pub fn nearest_node(&self, x: f64, z: f64) -> Result<(usize, usize)> {
        if !self.contains(x, z) {
            return Err(Error::OutsideGrid { x, z });
        }
        let ix = ((x - self.x0) / self.hx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let iz = ((z - self.z0) / self.hz).round().clamp(0.0, (self.nz - 1) as f64) as usize;
        Ok((ix, iz))
    }

    /// Number of nodes not on the boundary.
    pub fn interior_len(&self) -> usize {
        (self.nx - 2) * (self.nz - 2)
    }

    /// Grid-index of the `k`-th interior node (interior nodes are also x-fastest).
    pub fn interior_to_index(&self, k: usize) -> usize {
        let w = self.nx - 2;
        self.index(k % w + 1, k / w + 1)
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self == other
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate() {
        assert!(Grid2D::new(2, 5, 1.0, 1.0).is_err());
        assert!(Grid2D::new(5, 5, 0.0, 1.0).is_err());
        assert!(Grid2D::new(5, 5, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn nearest_node_snaps() {
        let g = Grid2D::new(11, 6, 10.0, 10.0).unwrap();
        assert_eq!(g.nearest_node(34.0, 26.0).unwrap(), (3, 3));
        assert_eq!(g.nearest_node(100.0, 50.0).unwrap(), (10, 5));
        assert!(g.nearest_node(100.5, 0.0).is_err());
    }

    #[test]
    fn interior_numbering() {
        let g = Grid2D::new(5, 4, 1.0, 1.0).unwrap();
        assert_eq!(g.interior_len(), 6);
        assert_eq!(g.interior_to_index(0), g.index(1, 1));
        assert_eq!(g.interior_to_index(3), g.index(1, 2));
    }

    proptest! {
        #[test]
        fn index_bijection(nx in 3usize..40, nz in 3usize..40, a in 0usize..1600, b in 0usize..1600) {
            let g = Grid2D::new(nx, nz, 1.0, 2.0).unwrap();
            let (ix, iz) = (a % nx, b % nz);
            prop_assert_eq!(g.unflatten(g.index(ix, iz)), (ix, iz));
        }
    }
}
