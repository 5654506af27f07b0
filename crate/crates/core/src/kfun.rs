//! Scalar comparison functions of class K and K∞.
//!
//! These are the building blocks of an incremental Lyapunov certificate: the
//! sandwich bounds on `V`, the decrease rate and the input gain. Only three
//! parametric forms are representable, all of which are unbounded, so every
//! value of [`KFunction`] is K∞ and has an exact inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used by [`KFunction::inverse_eval`] round trips.
pub const INVERSE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KFunError {
    #[error("argument {0} is outside the domain [0, inf)")]
    Domain(f64),
    #[error("value {0} is outside the range of the function")]
    Range(f64),
    #[error("invalid function parameters: {0}")]
    Invalid(String),
}

/// A strictly increasing function `[0, inf) -> [0, inf)` vanishing at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
pub enum KFunction {
    /// `r -> a r`
    Linear { a: f64 },
    /// `r -> a r^b`
    Power { a: f64, b: f64 },
    /// Linear interpolation through `points`, extended past the last
    /// breakpoint with the slope of the last segment.
    #[serde(rename = "pwl")]
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl KFunction {
    pub fn identity() -> Self {
        KFunction::Linear { a: 1.0 }
    }

    /// Checks the parameter constraints of each form.
    pub fn validate(&self) -> Result<(), KFunError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        match self {
            KFunction::Linear { a } => {
                if !finite_pos(*a) {
                    return Err(KFunError::Invalid(format!("linear coefficient a={a} must be > 0")));
                }
            }
            KFunction::Power { a, b } => {
                if !finite_pos(*a) || !finite_pos(*b) {
                    return Err(KFunError::Invalid(format!(
                        "power parameters a={a}, b={b} must both be > 0"
                    )));
                }
            }
            KFunction::PiecewiseLinear { points } => {
                if points.len() < 2 {
                    return Err(KFunError::Invalid(
                        "piecewise-linear form needs at least two breakpoints".into(),
                    ));
                }
                if points[0] != [0.0, 0.0] {
                    return Err(KFunError::Invalid(
                        "piecewise-linear form must start at (0, 0)".into(),
                    ));
                }
                for w in points.windows(2) {
                    let ([r0, y0], [r1, y1]) = (w[0], w[1]);
                    if !(r1.is_finite() && y1.is_finite() && r1 > r0 && y1 > y0) {
                        return Err(KFunError::Invalid(format!(
                            "breakpoints must be strictly increasing in both coordinates, got ({r0}, {y0}) then ({r1}, {y1})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// All representable forms are unbounded.
    pub fn is_k_infinity(&self) -> bool {
        true
    }

    pub fn eval(&self, r: f64) -> Result<f64, KFunError> {
        if r.is_nan() || r < 0.0 {
            return Err(KFunError::Domain(r));
        }
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        match self {
            KFunction::Linear { a } => a * r,
            KFunction::Power { a, b } => {
                if r == 0.0 {
                    0.0
                } else {
                    a * r.powf(*b)
                }
            }
            KFunction::PiecewiseLinear { points } => {
                let seg = segment_by(points, r, |p| p[0]);
                let ([r0, y0], [r1, y1]) = (points[seg], points[seg + 1]);
                y0 + (r - r0) * (y1 - y0) / (r1 - r0)
            }
        }
    }

    /// Solves `f(r) = y` for `r`.
    pub fn inverse_eval(&self, y: f64) -> Result<f64, KFunError> {
        if y.is_nan() || y < 0.0 {
            return Err(KFunError::Domain(y));
        }
        if !y.is_finite() {
            return Err(KFunError::Range(y));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let r = match self {
            KFunction::Linear { a } => y / a,
            KFunction::Power { a, b } => (y / a).powf(1.0 / b),
            KFunction::PiecewiseLinear { points } => {
                let seg = segment_by(points, y, |p| p[1]);
                let ([r0, y0], [r1, y1]) = (points[seg], points[seg + 1]);
                r0 + (y - y0) * (r1 - r0) / (y1 - y0)
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(KFunError::Range(y))
        }
    }

    /// `self(inner(r))`
    pub fn compose_eval(&self, inner: &KFunction, r: f64) -> Result<f64, KFunError> {
        self.eval(inner.eval(r)?)
    }

    /// Inverse of `self ∘ inner`, i.e. `inner⁻¹(self⁻¹(y))`.
    pub fn compose_inverse(&self, inner: &KFunction, y: f64) -> Result<f64, KFunError> {
        inner.inverse_eval(self.inverse_eval(y)?)
    }
}

/// Index of the segment `[k, k+1]` of `points` covering `v` along the
/// coordinate picked by `key`; values beyond the last breakpoint use the last
/// segment.
fn segment_by(points: &[[f64; 2]], v: f64, key: impl Fn(&[f64; 2]) -> f64) -> usize {
    let last = points.len() - 2;
    (0..=last).find(|&k| v <= key(&points[k + 1])).unwrap_or(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pwl() -> KFunction {
        KFunction::PiecewiseLinear { points: vec![[0.0, 0.0], [1.0, 2.0], [3.0, 3.0]] }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(KFunction::Linear { a: 0.25 }.eval(2.0).unwrap(), 0.5);
        assert_eq!(KFunction::Power { a: 1.0, b: 2.0 }.eval(0.0).unwrap(), 0.0);
        assert_eq!(KFunction::Power { a: 2.0, b: 0.5 }.eval(4.0).unwrap(), 4.0);
        assert!(matches!(KFunction::identity().eval(-1.0), Err(KFunError::Domain(_))));
        assert!(KFunction::identity().eval(f64::NAN).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(KFunction::Linear { a: 0.25 }.inverse_eval(0.5).unwrap(), 2.0);
        assert_eq!(pwl().inverse_eval(0.0).unwrap(), 0.0);
        assert_eq!(KFunction::Power { a: 1.0, b: 2.0 }.inverse_eval(9.0).unwrap(), 3.0);
        assert!(matches!(KFunction::identity().inverse_eval(f64::INFINITY), Err(KFunError::Range(_))));
    }

    #[test]
    fn compose_examples() {
        let quarter = KFunction::Linear { a: 0.25 };
        assert_eq!(quarter.compose_eval(&KFunction::identity(), 1.0).unwrap(), 0.25);
        assert_eq!(KFunction::identity().compose_eval(&KFunction::identity(), 7.0).unwrap(), 7.0);
        let sq = KFunction::Power { a: 1.0, b: 2.0 };
        assert_eq!(KFunction::Linear { a: 2.0 }.compose_eval(&sq, 3.0).unwrap(), 18.0);
    }

    #[test]
    fn pwl_interpolates_and_extrapolates() {
        let f = pwl();
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(2.0).unwrap(), 2.5);
        assert_eq!(f.eval(5.0).unwrap(), 4.0);
        assert_eq!(f.inverse_eval(4.0).unwrap(), 5.0);
    }

    #[test]
    fn pwl_validation() {
        assert!(pwl().validate().is_ok());
        let bad_start = KFunction::PiecewiseLinear { points: vec![[0.0, 1.0], [1.0, 2.0]] };
        assert!(bad_start.validate().is_err());
        let flat = KFunction::PiecewiseLinear { points: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 1.0]] };
        assert!(flat.validate().is_err());
        assert!(KFunction::Power { a: 1.0, b: 0.0 }.validate().is_err());
    }

    #[test]
    fn serde_forms() {
        let f: KFunction = serde_json::from_str(r#"{"form":"linear","a":0.25}"#).unwrap();
        assert_eq!(f, KFunction::Linear { a: 0.25 });
        let g: KFunction = serde_json::from_str(r#"{"form":"pwl","points":[[0,0],[1,2]]}"#).unwrap();
        assert!(matches!(g, KFunction::PiecewiseLinear { .. }));
        let h: KFunction = serde_json::from_str(r#"{"form":"power","a":1,"b":2}"#).unwrap();
        assert_eq!(h, KFunction::Power { a: 1.0, b: 2.0 });
    }
}
