//! Scalar activation functions and their first derivatives.
//!
//! The library covers ReLU, ELU and SELU. Every function is continuous at the
//! origin; derivatives at exactly `x = 0` take the left-branch value.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ELU saturation parameter.
pub const ELU_ALPHA: f64 = 1.0;
/// Default SELU saturation parameter.
pub const SELU_ALPHA: f64 = 1.67326324;
/// Default SELU scale.
pub const SELU_LAMBDA: f64 = 1.050700987;

/// Arguments below this are not passed to `exp`; the closed-form limit is used instead.
const EXP_FLOOR: f64 = -709.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActivationError {
    #[error("non-finite activation input {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid activation parameters: {0}")]
    InvalidParams(String),
}

/// One element of the activation library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Elu {
        #[serde(default = "default_elu_alpha")]
        alpha: f64,
    },
    Selu {
        #[serde(default = "default_selu_alpha")]
        alpha: f64,
        #[serde(default = "default_selu_lambda")]
        lambda: f64,
    },
}

fn default_elu_alpha() -> f64 {
    ELU_ALPHA
}

fn default_selu_alpha() -> f64 {
    SELU_ALPHA
}

fn default_selu_lambda() -> f64 {
    SELU_LAMBDA
}

impl ActivationKind {
    pub const RELU: ActivationKind = ActivationKind::Relu;
    pub const ELU: ActivationKind = ActivationKind::Elu { alpha: ELU_ALPHA };
    pub const SELU: ActivationKind = ActivationKind::Selu {
        alpha: SELU_ALPHA,
        lambda: SELU_LAMBDA,
    };

    /// The default library `[ReLU, ELU, SELU]`.
    pub fn default_library() -> Vec<ActivationKind> {
        vec![Self::RELU, Self::ELU, Self::SELU]
    }

    pub fn validate(&self) -> Result<(), ActivationError> {
        match *self {
            ActivationKind::Relu => Ok(()),
            ActivationKind::Elu { alpha } => {
                if alpha.is_finite() && alpha > 0.0 {
                    Ok(())
                } else {
                    Err(ActivationError::InvalidParams(format!(
                        "ELU alpha must be finite and > 0, got {alpha}"
                    )))
                }
            }
            ActivationKind::Selu { alpha, lambda } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(ActivationError::InvalidParams(format!(
                        "SELU alpha must be finite and > 0, got {alpha}"
                    )));
                }
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(ActivationError::InvalidParams(format!(
                        "SELU lambda must be finite and > 0, got {lambda}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_selu(&self) -> bool {
        matches!(self, ActivationKind::Selu { .. })
    }

    /// Short display name, e.g. `"SELU"`.
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "ReLU",
            ActivationKind::Elu { .. } => "ELU",
            ActivationKind::Selu { .. } => "SELU",
        }
    }

    /// Limit of the function as `x -> -inf`.
    pub fn negative_limit(&self) -> f64 {
        match *self {
            ActivationKind::Relu => 0.0,
            ActivationKind::Elu { alpha } => -alpha,
            ActivationKind::Selu { alpha, lambda } => -lambda * alpha,
        }
    }

    /// Checked scalar forward evaluation.
    pub fn forward(&self, x: f64) -> Result<f64, ActivationError> {
        check_finite(0, x)?;
        Ok(self.apply(x))
    }

    /// Checked scalar first derivative.
    pub fn derivative(&self, x: f64) -> Result<f64, ActivationError> {
        check_finite(0, x)?;
        Ok(self.slope(x))
    }

    /// Unchecked forward evaluation used on the training hot path.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else if x < EXP_FLOOR {
                    -alpha
                } else {
                    alpha * x.exp_m1()
                }
            }
            ActivationKind::Selu { alpha, lambda } => {
                if x > 0.0 {
                    lambda * x
                } else if x < EXP_FLOOR {
                    -lambda * alpha
                } else {
                    lambda * alpha * x.exp_m1()
                }
            }
        }
    }

    /// Unchecked first derivative. At `x = 0` the left branch is used.
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else if x < EXP_FLOOR {
                    0.0
                } else {
                    alpha * x.exp()
                }
            }
            ActivationKind::Selu { alpha, lambda } => {
                if x > 0.0 {
                    lambda
                } else if x < EXP_FLOOR {
                    0.0
                } else {
                    lambda * alpha * x.exp()
                }
            }
        }
    }

    /// Elementwise forward over a tensor.
    pub fn forward_map(&self, xs: &[f64]) -> Result<Vec<f64>, ActivationError> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| check_finite(i, x).map(|x| self.apply(x)))
            .collect()
    }

    /// Elementwise derivative over a tensor.
    pub fn derivative_map(&self, xs: &[f64]) -> Result<Vec<f64>, ActivationError> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| check_finite(i, x).map(|x| self.slope(x)))
            .collect()
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ActivationKind::Relu => write!(f, "ReLU"),
            ActivationKind::Elu { alpha } if alpha == ELU_ALPHA => write!(f, "ELU"),
            ActivationKind::Elu { alpha } => write!(f, "ELU(alpha={alpha})"),
            ActivationKind::Selu { alpha, lambda } if alpha == SELU_ALPHA && lambda == SELU_LAMBDA => {
                write!(f, "SELU")
            }
            ActivationKind::Selu { alpha, lambda } => {
                write!(f, "SELU(alpha={alpha}, lambda={lambda})")
            }
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = ActivationError;

    /// Parses the default-parameter names `relu`, `elu`, `selu` (case-insensitive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::RELU),
            "elu" => Ok(Self::ELU),
            "selu" => Ok(Self::SELU),
            other => Err(ActivationError::InvalidParams(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

#[inline]
fn check_finite(index: usize, x: f64) -> Result<f64, ActivationError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ActivationError::NonFinite { index, value: x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds() -> [ActivationKind; 3] {
        [ActivationKind::RELU, ActivationKind::ELU, ActivationKind::SELU]
    }

    #[test]
    fn spot_values() {
        assert_eq!(ActivationKind::RELU.forward(-3.0).unwrap(), 0.0);
        assert_eq!(ActivationKind::ELU.forward(0.0).unwrap(), 0.0);
        let selu_limit = ActivationKind::SELU.forward(-1e6).unwrap();
        assert!((selu_limit - (-1.050700987 * 1.67326324)).abs() < 1e-12);
        assert!((selu_limit + 1.7581).abs() < 1e-4);
        assert!((ActivationKind::SELU.forward(2.0).unwrap() - 2.101401974).abs() < 1e-12);
    }

    #[test]
    fn derivative_spot_values() {
        assert_eq!(ActivationKind::RELU.derivative(5.0).unwrap(), 1.0);
        let e = ActivationKind::ELU.derivative(-1.0).unwrap();
        assert!((e - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e - 0.3679).abs() < 1e-4);
        assert_eq!(ActivationKind::SELU.derivative(1.0).unwrap(), 1.050700987);
    }

    #[test]
    fn derivative_at_origin_uses_left_branch() {
        assert_eq!(ActivationKind::RELU.derivative(0.0).unwrap(), 0.0);
        assert_eq!(ActivationKind::ELU.derivative(0.0).unwrap(), 1.0);
        assert_eq!(
            ActivationKind::SELU.derivative(0.0).unwrap(),
            SELU_LAMBDA * SELU_ALPHA
        );
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        for k in kinds() {
            assert!(k.forward(f64::NAN).is_err());
            assert!(k.forward(f64::NEG_INFINITY).is_err());
            assert!(k.derivative(f64::INFINITY).is_err());
        }
        let err = ActivationKind::ELU
            .forward_map(&[0.0, 1.0, f64::NAN])
            .unwrap_err();
        assert!(matches!(err, ActivationError::NonFinite { index: 2, .. }));
    }

    #[test]
    fn map_examples() {
        assert_eq!(
            ActivationKind::RELU.forward_map(&[-1.0, 0.0, 2.0]).unwrap(),
            vec![0.0, 0.0, 2.0]
        );
        assert_eq!(ActivationKind::SELU.forward_map(&[0.0]).unwrap(), vec![0.0]);
        let y = ActivationKind::ELU.forward_map(&[-20.0]).unwrap();
        assert!((y[0] - (-1.0 + (-20.0f64).exp())).abs() < 1e-15);
        assert_eq!(
            ActivationKind::RELU.derivative_map(&[-1.0, 3.0]).unwrap(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn exponent_clamp_returns_limit() {
        assert_eq!(ActivationKind::ELU.apply(-800.0), -1.0);
        assert_eq!(ActivationKind::SELU.apply(-800.0), -SELU_LAMBDA * SELU_ALPHA);
        assert_eq!(ActivationKind::SELU.slope(-800.0), 0.0);
        // Just above the clamp the exponential is already below f64 resolution of the limit.
        assert_eq!(ActivationKind::ELU.apply(-708.0), -1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ActivationKind::Elu { alpha: 0.0 }.validate().is_err());
        assert!(ActivationKind::Selu { alpha: 1.0, lambda: -1.0 }.validate().is_err());
        assert!(ActivationKind::Selu { alpha: f64::NAN, lambda: 1.0 }.validate().is_err());
        for k in kinds() {
            assert!(k.validate().is_ok());
        }
    }

    #[test]
    fn continuity_at_origin() {
        let eps = 1e-8;
        for k in kinds() {
            let gap = (k.apply(eps) - k.apply(-eps)).abs();
            assert!(gap < 1e-7, "{k}: {gap}");
        }
    }

    #[test]
    fn selu_with_unit_lambda_is_elu() {
        for &alpha in &[0.5, 1.0, 1.67326324, 3.0] {
            let selu = ActivationKind::Selu { alpha, lambda: 1.0 };
            let elu = ActivationKind::Elu { alpha };
            for i in -200..=200 {
                let x = i as f64 * 0.05;
                assert_eq!(selu.apply(x), elu.apply(x));
            }
        }
    }

    #[test]
    fn serde_and_parse() {
        let json = serde_json::to_string(&ActivationKind::SELU).unwrap();
        let back: ActivationKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ActivationKind::SELU);
        let elu: ActivationKind = serde_json::from_str(r#"{"kind":"elu"}"#).unwrap();
        assert_eq!(elu, ActivationKind::ELU);
        assert_eq!("SeLu".parse::<ActivationKind>().unwrap(), ActivationKind::SELU);
        assert!("tanh".parse::<ActivationKind>().is_err());
    }

    fn kind_strategy() -> impl Strategy<Value = ActivationKind> {
        prop_oneof![
            Just(ActivationKind::RELU),
            Just(ActivationKind::ELU),
            Just(ActivationKind::SELU),
        ]
    }

    proptest! {
        #[test]
        fn monotone_non_decreasing(k in kind_strategy(), a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(k.apply(lo) <= k.apply(hi));
        }

        #[test]
        fn positive_branch_is_linear(k in kind_strategy(), x in 1e-9f64..1e6) {
            let c = match k {
                ActivationKind::Selu { lambda, .. } => lambda,
                _ => 1.0,
            };
            prop_assert_eq!(k.apply(x), c * x);
        }

        #[test]
        fn derivative_matches_central_difference(k in kind_strategy(), x in -5.0f64..5.0) {
            prop_assume!(x.abs() > 1e-3);
            let h = 1e-6;
            let fd = (k.apply(x + h) - k.apply(x - h)) / (2.0 * h);
            let d = k.slope(x);
            let scale = d.abs().max(fd.abs());
            if scale == 0.0 {
                prop_assert_eq!(fd, 0.0);
            } else {
                prop_assert!((fd - d).abs() / scale < 1e-5, "x={} fd={} d={}", x, fd, d);
            }
        }
    }
}
