//! Compound depth/width/resolution scaling of the detector backbone.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    /// Compound coefficient.
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Allowed deviation of `alpha * beta^2 * gamma^2` from 2.
    pub tol: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            mu: 1.0,
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            tol: 0.1,
        }
    }
}

/// Scaled multipliers plus the FLOP constraint bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub depth: f64,
    pub width: f64,
    pub resolution: f64,
    /// `alpha * beta^2 * gamma^2`
    pub constraint: f64,
    /// `|constraint - 2|`
    pub residual: f64,
    pub violated: bool,
}

pub fn compound_scaling(p: &ScalingParams) -> Result<Scaled> {
    for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("gamma", p.gamma)] {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::invalid("scaling params", format!("{name} = {v} must be >= 1")));
        }
    }
    let constraint = p.alpha * p.beta * p.beta * p.gamma * p.gamma;
    let residual = (constraint - 2.0).abs();
    Ok(Scaled {
        depth: p.alpha.powf(p.mu),
        width: p.beta.powf(p.mu),
        resolution: p.gamma.powf(p.mu),
        constraint,
        residual,
        violated: residual > p.tol,
    })
}

/// Published coefficients of one backbone variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub width: f64,
    pub depth: f64,
    pub resolution: u32,
    pub dropout: f64,
}

/// Backbone variant used by the detector encoder.
pub const EFFICIENTNET_B4: ReferenceConfig = ReferenceConfig {
    width: 1.4,
    depth: 1.8,
    resolution: 380,
    dropout: 0.4,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_unit_exponent() {
        let p = ScalingParams {
            mu: 0.0,
            ..ScalingParams::default()
        };
        let s = compound_scaling(&p).unwrap();
        assert_eq!((s.depth, s.width, s.resolution), (1.0, 1.0, 1.0));
        let s = compound_scaling(&ScalingParams::default()).unwrap();
        assert_eq!((s.depth, s.width, s.resolution), (1.2, 1.1, 1.15));
    }

    #[test]
    fn constraint_value() {
        let s = compound_scaling(&ScalingParams::default()).unwrap();
        // 1.2 * 1.21 * 1.3225
        assert!((s.constraint - 1.920_27).abs() < 1e-9);
        assert!(!s.violated);
        let loose = ScalingParams {
            beta: 1.3,
            ..ScalingParams::default()
        };
        assert!(compound_scaling(&loose).unwrap().violated);
    }

    #[test]
    fn coefficients_below_one_rejected() {
        let p = ScalingParams {
            gamma: 0.9,
            ..ScalingParams::default()
        };
        assert!(compound_scaling(&p).is_err());
    }

    #[test]
    fn b4_reference_constants() {
        assert_eq!(EFFICIENTNET_B4.width, 1.4);
        assert_eq!(EFFICIENTNET_B4.depth, 1.8);
        assert_eq!(EFFICIENTNET_B4.resolution, 380);
        assert_eq!(EFFICIENTNET_B4.dropout, 0.4);
    }
}
