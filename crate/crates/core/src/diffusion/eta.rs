//! Normalized gradient magnitudes and the nine diffusion coefficients.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Nodes whose normalized gradient falls below this value get coefficient 1
/// for the kinds that are singular at zero gradient.
pub const ZERO_GRADIENT_THRESHOLD: f64 = 1e-12;

/// Diffusion coefficient formula. `x1 = |∇m|/γ₁`, `x2 = |∇m|²/γ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EtaKind {
    /// Perona-Malik, rational: `β / (β + x2)`.
    Eta1,
    /// Perona-Malik, exponential: `exp(-x2 / β)`.
    Eta2,
    /// Geman-Reynolds: `2β / (β + x2)²`.
    Eta3,
    /// Green: `tanh(x1/β) / (β x1)`.
    Eta4,
    /// Charbonnier: `(1/β) ((β + x2)/β)^(-1/2)`.
    Eta5,
    /// Lorentzian: `β / (1 + β x2)²`.
    Eta6,
    /// Gaussian: `1 / (β exp(x2/β))`.
    Eta7,
    /// Total variation: `1 / x1`.
    Eta8,
    /// Tikhonov: `1`.
    Eta9,
}

impl EtaKind {
    pub const ALL: [EtaKind; 9] = [
        EtaKind::Eta1,
        EtaKind::Eta2,
        EtaKind::Eta3,
        EtaKind::Eta4,
        EtaKind::Eta5,
        EtaKind::Eta6,
        EtaKind::Eta7,
        EtaKind::Eta8,
        EtaKind::Eta9,
    ];

    pub fn number(self) -> usize {
        EtaKind::ALL.iter().position(|&k| k == self).unwrap() + 1
    }

    pub fn uses_beta(self) -> bool {
        !matches!(self, EtaKind::Eta8 | EtaKind::Eta9)
    }
}

impl fmt::Display for EtaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "eta{}", self.number())
    }
}

impl FromStr for EtaKind {
    type Err = Error;

    /// Accepts `eta3`, `Eta3` or `3`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("eta").unwrap_or(&t);
        match digits.parse::<usize>() {
            Ok(n @ 1..=9) => Ok(EtaKind::ALL[n - 1]),
            _ => Err(Error::InvalidArgument(format!("unknown diffusion coefficient `{s}`"))),
        }
    }
}

/// Coefficient choice plus its scaling `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    kind: EtaKind,
    beta: f64,
}

impl DiffusionSpec {
    pub fn new(kind: EtaKind, beta: f64) -> Result<Self> {
        if kind.uses_beta() && !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{kind} needs a positive scaling, got {beta}"
            )));
        }
        Ok(Self { kind, beta })
    }

    /// `η₈` or `η₉`, which take no scaling.
    pub fn unscaled(kind: EtaKind) -> Result<Self> {
        if kind.uses_beta() {
            return Err(Error::InvalidArgument(format!("{kind} needs a scaling")));
        }
        Ok(Self { kind, beta: 1.0 })
    }

    pub fn kind(&self) -> EtaKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Pointwise formula. `x1`, `x2` are the normalized gradient magnitudes.
    pub fn coefficient(&self, x1: f64, x2: f64) -> f64 {
        let b = self.beta;
        let v = match self.kind {
            EtaKind::Eta1 => b / (b + x2),
            EtaKind::Eta2 => (-x2 / b).exp(),
            EtaKind::Eta3 => 2.0 * b / ((b + x2) * (b + x2)),
            EtaKind::Eta4 => {
                if x1 < ZERO_GRADIENT_THRESHOLD {
                    1.0
                } else {
                    (x1 / b).tanh() / (b * x1)
                }
            }
            EtaKind::Eta5 => (b / (b + x2)).sqrt() / b,
            EtaKind::Eta6 => b / ((1.0 + b * x2) * (1.0 + b * x2)),
            EtaKind::Eta7 => 1.0 / (b * (x2 / b).exp()),
            EtaKind::Eta8 => {
                if x1 < ZERO_GRADIENT_THRESHOLD {
                    1.0
                } else {
                    1.0 / x1
                }
            }
            EtaKind::Eta9 => 1.0,
        };
        // underflow (e.g. exp(-x2/β) for tiny β) must not produce a zero coefficient
        if v.is_finite() {
            v.max(f64::MIN_POSITIVE)
        } else {
            f64::MAX
        }
    }
}

/// `|∇m|/γ₁` and `|∇m|²/γ₂` with `γ₁ = max|∇m|`, `γ₂ = max|∇m|²`.
#[derive(Debug, Clone)]
pub struct GradientNorms {
    pub ngrad1: ScalarField,
    pub ngrad2: ScalarField,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Set when the field has zero gradient everywhere; both normalized fields are then 0.
    pub constant: bool,
}

/// Central differences inside, one-sided first differences on the edges.
pub fn gradient_norms(m: &ScalarField) -> Result<GradientNorms> {
    let g = *m.grid();
    let (nx, nz) = (g.nx(), g.nz());
    let mut sq = Vec::with_capacity(g.len());
    for iz in 0..nz {
        for ix in 0..nx {
            let dx = if ix == 0 {
                (m.get(1, iz) - m.get(0, iz)) / g.hx()
            } else if ix + 1 == nx {
                (m.get(nx - 1, iz) - m.get(nx - 2, iz)) / g.hx()
            } else {
                (m.get(ix + 1, iz) - m.get(ix - 1, iz)) / (2.0 * g.hx())
            };
            let dz = if iz == 0 {
                (m.get(ix, 1) - m.get(ix, 0)) / g.hz()
            } else if iz + 1 == nz {
                (m.get(ix, nz - 1) - m.get(ix, nz - 2)) / g.hz()
            } else {
                (m.get(ix, iz + 1) - m.get(ix, iz - 1)) / (2.0 * g.hz())
            };
            sq.push(dx * dx + dz * dz);
        }
    }
    let gamma2 = sq.iter().copied().fold(0.0, f64::max);
    let mag: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
    let gamma1 = mag.iter().copied().fold(0.0, f64::max);
    if gamma2 == 0.0 || gamma1 == 0.0 {
        return Ok(GradientNorms {
            ngrad1: ScalarField::zeros(g),
            ngrad2: ScalarField::zeros(g),
            gamma1: 0.0,
            gamma2: 0.0,
            constant: true,
        });
    }
    Ok(GradientNorms {
        ngrad1: ScalarField::new(g, mag.iter().map(|v| v / gamma1).collect())?,
        ngrad2: ScalarField::new(g, sq.iter().map(|v| v / gamma2).collect())?,
        gamma1,
        gamma2,
        constant: false,
    })
}

/// Applies the coefficient formula at every node; the result is strictly positive.
pub fn eval_eta(spec: &DiffusionSpec, norms: &GradientNorms) -> Result<ScalarField> {
    let values = norms
        .ngrad1
        .values()
        .iter()
        .zip(norms.ngrad2.values())
        .map(|(&x1, &x2)| spec.coefficient(x1, x2))
        .collect();
    ScalarField::new(*norms.ngrad1.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid2D {
        Grid2D::new(8, 8, 2.0, 3.0).unwrap()
    }

    #[test]
    fn constant_field_sets_flag() {
        let n = gradient_norms(&ScalarField::constant(grid(), 4.0)).unwrap();
        assert!(n.constant);
        assert_eq!(n.gamma1, 0.0);
        assert!(n.ngrad1.values().iter().chain(n.ngrad2.values()).all(|&v| v == 0.0));
        // singular kinds fall to the threshold value, the others to their zero-argument value
        for kind in EtaKind::ALL {
            let spec = if kind.uses_beta() {
                DiffusionSpec::new(kind, 0.5).unwrap()
            } else {
                DiffusionSpec::unscaled(kind).unwrap()
            };
            let eta = eval_eta(&spec, &n).unwrap();
            let expected = spec.coefficient(0.0, 0.0);
            assert!(eta.values().iter().all(|&v| v == expected));
            if matches!(kind, EtaKind::Eta4 | EtaKind::Eta8 | EtaKind::Eta9) {
                assert_eq!(expected, 1.0);
            }
        }
    }

    #[test]
    fn linear_field_normalizes_to_one() {
        let f = ScalarField::from_fn(grid(), |x, _| 3.0 * x - 1.0).unwrap();
        let n = gradient_norms(&f).unwrap();
        assert!(!n.constant);
        assert!((n.gamma1 - 3.0).abs() < 1e-12);
        for v in n.ngrad1.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn max_of_ngrad2_is_exactly_one_at_brute_force_argmax() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = ScalarField::new(g, vals.clone()).unwrap();
        // oracle: explicit difference formulas per node
        let at = |ix: i64, iz: i64| vals[(iz * 8 + ix) as usize];
        let mut best = (0.0, 0usize);
        for iz in 0..8i64 {
            for ix in 0..8i64 {
                let gx = match ix {
                    0 => (at(1, iz) - at(0, iz)) / 2.0,
                    7 => (at(7, iz) - at(6, iz)) / 2.0,
                    _ => (at(ix + 1, iz) - at(ix - 1, iz)) / 4.0,
                };
                let gz = match iz {
                    0 => (at(ix, 1) - at(ix, 0)) / 3.0,
                    7 => (at(ix, 7) - at(ix, 6)) / 3.0,
                    _ => (at(ix, iz + 1) - at(ix, iz - 1)) / 6.0,
                };
                let s = gx * gx + gz * gz;
                if s > best.0 {
                    best = (s, (iz * 8 + ix) as usize);
                }
            }
        }
        let n = gradient_norms(&f).unwrap();
        assert!((n.gamma2 - best.0).abs() <= 1e-14 * best.0);
        assert_eq!(n.ngrad2.values()[best.1], 1.0);
        assert!(n.ngrad2.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(n.ngrad1.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn table_values() {
        let eta = |k, b, x1, x2| DiffusionSpec::new(k, b).unwrap().coefficient(x1, x2);
        assert_eq!(DiffusionSpec::unscaled(EtaKind::Eta9).unwrap().coefficient(0.3, 0.09), 1.0);
        // η₃ at x2 = β: 2β/(2β)² = 1/(2β)
        for b in [1e-3, 0.25, 7.0] {
            assert!((eta(EtaKind::Eta3, b, b.sqrt(), b) - 1.0 / (2.0 * b)).abs() < 1e-12 / b);
        }
        // η₁ limits at a nonzero-gradient node
        assert!((eta(EtaKind::Eta1, 1e12, 0.5, 0.25) - 1.0).abs() < 1e-11);
        assert!(eta(EtaKind::Eta1, 1e-12, 0.5, 0.25) < 1e-11);
        // η₈ threshold
        let tv = DiffusionSpec::unscaled(EtaKind::Eta8).unwrap();
        assert_eq!(tv.coefficient(0.0, 0.0), 1.0);
        assert_eq!(tv.coefficient(0.5, 0.25), 2.0);
        assert!(DiffusionSpec::new(EtaKind::Eta2, 0.0).is_err());
        assert!(DiffusionSpec::new(EtaKind::Eta5, -1.0).is_err());
        assert!(DiffusionSpec::new(EtaKind::Eta8, 0.0).is_ok());
    }

    #[test]
    fn underflow_stays_positive() {
        let e2 = DiffusionSpec::new(EtaKind::Eta2, 1e-7).unwrap();
        assert!(e2.coefficient(1.0, 1.0) > 0.0);
        let e7 = DiffusionSpec::new(EtaKind::Eta7, 1e-7).unwrap();
        assert!(e7.coefficient(1.0, 1.0) > 0.0);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("eta3".parse::<EtaKind>().unwrap(), EtaKind::Eta3);
        assert_eq!("Eta9".parse::<EtaKind>().unwrap(), EtaKind::Eta9);
        assert_eq!("7".parse::<EtaKind>().unwrap(), EtaKind::Eta7);
        assert!("eta10".parse::<EtaKind>().is_err());
        assert_eq!(EtaKind::Eta6.to_string(), "eta6");
    }
}
