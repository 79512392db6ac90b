//! Squared-slowness models `m = c^-2` with admissible speed bounds.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;

/// Squared slowness (s^2/m^2) together with the speed interval `[c_min, c_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    field: ScalarField,
    c_min: f64,
    c_max: f64,
}

impl Model {
    /// Wraps a squared-slowness field. Values must lie inside the speed bounds.
    pub fn new(field: ScalarField, c_min: f64, c_max: f64) -> Result<Self> {
        check_bounds(c_min, c_max)?;
        let (m_lo, m_hi) = (c_max.powi(-2), c_min.powi(-2));
        // one part in 1e12 of slack so that c -> m -> c round trips are accepted
        let slack = 1e-12;
        if let Some(v) = field
            .values()
            .iter()
            .find(|&&v| !(v > 0.0) || v < m_lo * (1.0 - slack) || v > m_hi * (1.0 + slack))
        {
            return Err(Error::InvalidArgument(format!(
                "squared slowness {v:e} outside [{m_lo:e}, {m_hi:e}]"
            )));
        }
        Ok(Self {
            field,
            c_min,
            c_max,
        })
    }

    /// Builds a model from squared slowness values, clamping them into the admissible
    /// range. Returns the model and the number of clamped nodes.
    pub fn clamped(field: ScalarField, c_min: f64, c_max: f64) -> Result<(Self, usize)> {
        check_bounds(c_min, c_max)?;
        let (m_lo, m_hi) = (c_max.powi(-2), c_min.powi(-2));
        let mut count = 0;
        let values = field
            .values()
            .iter()
            .map(|&v| {
                let c = v.clamp(m_lo, m_hi);
                if c != v {
                    count += 1;
                }
                c
            })
            .collect();
        if count > 0 {
            log::debug!("clamped {count} nodes into speed range [{c_min}, {c_max}] m/s");
        }
        let field = ScalarField::new(*field.grid(), values)?;
        Ok((
            Self {
                field,
                c_min,
                c_max,
            },
            count,
        ))
    }

    /// Converts a speed field (m/s) into a model; speeds must be positive.
    pub fn from_speed(speed: &ScalarField, c_min: f64, c_max: f64) -> Result<Self> {
        Self::new(speed_to_slowness(speed)?, c_min, c_max)
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &Grid2D {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn speed(&self) -> ScalarField {
        slowness_to_speed(&self.field).expect("model values are positive")
    }

    /// Same bounds, new values (clamped).
    pub fn with_values(&self, field: ScalarField) -> Result<(Self, usize)> {
        Self::clamped(field, self.c_min, self.c_max)
    }
}

fn check_bounds(c_min: f64, c_max: f64) -> Result<()> {
    if !(c_min > 0.0 && c_max > c_min && c_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid speed bounds [{c_min}, {c_max}]"
        )));
    }
    Ok(())
}

/// `m = c^-2` elementwise.
pub fn speed_to_slowness(c: &ScalarField) -> Result<ScalarField> {
    if let Some(v) = c.values().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive speed {v}")));
    }
    c.map(|v| 1.0 / (v * v))
}

/// `c = m^-1/2` elementwise.
pub fn slowness_to_speed(m: &ScalarField) -> Result<ScalarField> {
    if let Some(v) = m.values().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "nonpositive squared slowness {v}"
        )));
    }
    m.map(|v| 1.0 / v.sqrt())
}
