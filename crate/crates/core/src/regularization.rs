//! Dropout (standard and alpha) and variance-scaled weight initialization.
//!
//! Standard dropout is the inverted variant: survivors are scaled by
//! `1 / (1 - rate)` during training so inference is the identity.
//!
//! Alpha dropout replaces dropped units with the SELU saturation value
//! `alpha' = -lambda * alpha` and then applies `a * x + b`, with `a` and `b`
//! chosen so that a zero-mean, unit-variance input keeps those moments. The
//! bare variant (substitution only, no affine step) is available through
//! [`DropoutSpec::affine`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::{ActivationKind, SELU_ALPHA, SELU_LAMBDA};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegularizationError {
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("fan-in must be at least 1")]
    ZeroFanIn,
    #[error("non-finite activation {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutMode {
    Standard,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: DropoutMode,
    /// Alpha mode only: apply the moment-restoring affine correction.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub affine: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl DropoutSpec {
    pub fn standard(rate: f64) -> Self {
        DropoutSpec {
            rate,
            mode: DropoutMode::Standard,
            affine: true,
        }
    }

    pub fn alpha(rate: f64) -> Self {
        DropoutSpec {
            rate,
            mode: DropoutMode::Alpha,
            affine: true,
        }
    }

    /// Alpha dropout for SELU layers, standard dropout for everything else.
    pub fn for_activation(rate: f64, activation: &ActivationKind) -> Self {
        if activation.is_selu() {
            Self::alpha(rate)
        } else {
            Self::standard(rate)
        }
    }

    pub fn validate(&self) -> Result<(), RegularizationError> {
        if self.rate.is_finite() && (0.0..1.0).contains(&self.rate) {
            Ok(())
        } else {
            Err(RegularizationError::InvalidRate(self.rate))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rate == 0.0
    }

    /// Whether the mode is the one paired with `activation`.
    pub fn matches(&self, activation: &ActivationKind) -> bool {
        (self.mode == DropoutMode::Alpha) == activation.is_selu()
    }
}

/// Saturation value used for dropped units under alpha dropout.
pub fn alpha_prime(activation: &ActivationKind) -> f64 {
    match *activation {
        ActivationKind::Selu { alpha, lambda } => -lambda * alpha,
        _ => -SELU_LAMBDA * SELU_ALPHA,
    }
}

/// Affine coefficients `(a, b)` restoring zero mean and unit variance after
/// alpha dropout with keep probability `1 - rate`.
pub fn alpha_affine(rate: f64, alpha_prime: f64) -> (f64, f64) {
    let q = 1.0 - rate;
    let a = (q + alpha_prime * alpha_prime * q * (1.0 - q)).powf(-0.5);
    let b = -a * (1.0 - q) * alpha_prime;
    (a, b)
}

/// A sampled dropout mask together with the transform it applies.
///
/// Output element `i` is `scale * x[i] + shift` if kept, `scale * fill + shift`
/// if dropped. The gradient through a kept unit is `scale`, through a dropped one 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
    fill: f64,
    shift: f64,
}

impl DropoutMask {
    pub fn sample<R: Rng>(spec: &DropoutSpec, len: usize, alpha_prime: f64, rng: &mut R) -> Self {
        let keep = (0..len).map(|_| rng.gen::<f64>() >= spec.rate).collect();
        let (scale, fill, shift) = match spec.mode {
            DropoutMode::Standard => (1.0 / (1.0 - spec.rate), 0.0, 0.0),
            DropoutMode::Alpha if spec.affine => {
                let (a, b) = alpha_affine(spec.rate, alpha_prime);
                (a, alpha_prime, b)
            }
            DropoutMode::Alpha => (1.0, alpha_prime, 0.0),
        };
        DropoutMask {
            keep,
            scale,
            fill,
            shift,
        }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    pub fn apply(&self, xs: &mut [f64]) {
        debug_assert_eq!(xs.len(), self.keep.len());
        let dropped = self.scale * self.fill + self.shift;
        for (x, &k) in xs.iter_mut().zip(&self.keep) {
            *x = if k { self.scale * *x + self.shift } else { dropped };
        }
    }

    pub fn backprop(&self, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.keep.len());
        for (g, &k) in grad.iter_mut().zip(&self.keep) {
            *g = if k { self.scale * *g } else { 0.0 };
        }
    }
}

/// Applies dropout to a tensor with a mask drawn from a stream keyed by `seed`.
///
/// Alpha mode uses the saturation value of the default SELU parameters.
pub fn apply_dropout(
    spec: &DropoutSpec,
    activations: &[f64],
    training: bool,
    seed: u64,
) -> Result<Vec<f64>, RegularizationError> {
    spec.validate()?;
    if let Some((index, &value)) = activations.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(RegularizationError::NonFinite { index, value });
    }
    let mut out = activations.to_vec();
    if !training || spec.is_identity() {
        return Ok(out);
    }
    let mut stream = rng::stream(seed, &[rng::tag::DROPOUT]);
    let mask = DropoutMask::sample(spec, out.len(), alpha_prime(&ActivationKind::SELU), &mut stream);
    mask.apply(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitKind {
    /// Variance `2 / n`.
    HeNormal,
    /// Variance `1 / n`.
    LeCunNormal,
}

impl InitKind {
    /// LeCun-normal for SELU layers, He-normal otherwise.
    pub fn for_activation(activation: &ActivationKind) -> Self {
        if activation.is_selu() {
            InitKind::LeCunNormal
        } else {
            InitKind::HeNormal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitScheme {
    pub kind: InitKind,
    pub fan_in: usize,
}

impl InitScheme {
    pub fn new(kind: InitKind, fan_in: usize) -> Result<Self, RegularizationError> {
        if fan_in == 0 {
            return Err(RegularizationError::ZeroFanIn);
        }
        Ok(InitScheme { kind, fan_in })
    }

    pub fn variance(&self) -> f64 {
        let n = self.fan_in as f64;
        match self.kind {
            InitKind::HeNormal => 2.0 / n,
            InitKind::LeCunNormal => 1.0 / n,
        }
    }
}

/// Draws `count` i.i.d. `N(0, variance)` weights from the stream keyed by `seed`.
pub fn init_weights(scheme: InitScheme, count: usize, seed: u64) -> Result<Vec<f64>, RegularizationError> {
    if scheme.fan_in == 0 {
        return Err(RegularizationError::ZeroFanIn);
    }
    let normal = Normal::new(0.0, scheme.variance().sqrt()).expect("finite positive std");
    let mut stream = rng::stream(seed, &[rng::tag::INIT]);
    Ok((0..count).map(|_| normal.sample(&mut stream)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn unit_normal(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[99]);
        (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn rate_validation() {
        assert!(DropoutSpec::standard(1.0).validate().is_err());
        assert!(DropoutSpec::standard(-0.1).validate().is_err());
        assert!(DropoutSpec::alpha(f64::NAN).validate().is_err());
        assert!(DropoutSpec::alpha(0.0).validate().is_ok());
        assert!(apply_dropout(&DropoutSpec::standard(1.5), &[1.0], true, 0).is_err());
    }

    #[test]
    fn identity_at_zero_rate_and_inference() {
        let xs = unit_normal(1000, 1);
        for spec in [DropoutSpec::standard(0.0), DropoutSpec::alpha(0.0)] {
            assert_eq!(apply_dropout(&spec, &xs, true, 5).unwrap(), xs);
        }
        for spec in [DropoutSpec::standard(0.5), DropoutSpec::alpha(0.2)] {
            assert_eq!(apply_dropout(&spec, &xs, false, 5).unwrap(), xs);
        }
    }

    #[test]
    fn mode_pairing() {
        assert_eq!(DropoutSpec::for_activation(0.1, &ActivationKind::SELU).mode, DropoutMode::Alpha);
        assert_eq!(DropoutSpec::for_activation(0.1, &ActivationKind::ELU).mode, DropoutMode::Standard);
        assert_eq!(DropoutSpec::for_activation(0.1, &ActivationKind::RELU).mode, DropoutMode::Standard);
        assert!(DropoutSpec::alpha(0.1).matches(&ActivationKind::SELU));
        assert!(!DropoutSpec::alpha(0.1).matches(&ActivationKind::RELU));
    }

    #[test]
    fn standard_dropout_mean_at_half_rate() {
        let xs = unit_normal(1_000_000, 2);
        let out = apply_dropout(&DropoutSpec::standard(0.5), &xs, true, 11).unwrap();
        let (mean, _) = moments(&out);
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn standard_dropout_preserves_expectation_of_fixed_input() {
        // Fixed input, many masks: E[out_i] = x_i. Checked on the per-mask sum.
        let xs: Vec<f64> = (0..64).map(|i| (i as f64 - 20.0) * 0.1).collect();
        let rate = 0.3;
        let spec = DropoutSpec::standard(rate);
        let trials = 20_000;
        let total: f64 = xs.iter().sum();
        let mut sums = Vec::with_capacity(trials);
        for t in 0..trials {
            let out = apply_dropout(&spec, &xs, true, t as u64).unwrap();
            sums.push(out.iter().sum::<f64>());
        }
        let (mean, _) = moments(&sums);
        // Var of the sum under the mask: sum x_i^2 * rate / (1 - rate).
        let sigma = (xs.iter().map(|x| x * x).sum::<f64>() * rate / (1.0 - rate) / trials as f64).sqrt();
        assert!((mean - total).abs() < 3.0 * sigma, "mean {mean} vs {total}, sigma {sigma}");
    }

    #[test]
    fn alpha_dropout_preserves_moments() {
        let xs = unit_normal(1_000_000, 3);
        for (i, rate) in [0.05, 0.1, 0.2].into_iter().enumerate() {
            let out = apply_dropout(&DropoutSpec::alpha(rate), &xs, true, 100 + i as u64).unwrap();
            let (mean, var) = moments(&out);
            assert!(mean.abs() <= 0.02, "rate {rate}: mean {mean}");
            assert!((var - 1.0).abs() <= 0.04, "rate {rate}: var {var}");
        }
    }

    #[test]
    fn bare_alpha_dropout_shifts_moments() {
        let xs = unit_normal(200_000, 4);
        let spec = DropoutSpec {
            affine: false,
            ..DropoutSpec::alpha(0.2)
        };
        let out = apply_dropout(&spec, &xs, true, 9).unwrap();
        let (mean, _) = moments(&out);
        // 0.2 * alpha' = -0.35
        assert!((mean - 0.2 * alpha_prime(&ActivationKind::SELU)).abs() < 0.02);
    }

    #[test]
    fn dropped_fraction_within_binomial_bounds() {
        let n = 100_000;
        for rate in [0.02, 0.1, 0.5] {
            let mut r = rng::stream(42, &[(rate * 100.0) as u64]);
            let mask = DropoutMask::sample(&DropoutSpec::standard(rate), n, 0.0, &mut r);
            let expected = rate * n as f64;
            let sigma = (n as f64 * rate * (1.0 - rate)).sqrt();
            assert!((mask.dropped() as f64 - expected).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn masks_are_deterministic() {
        let xs = unit_normal(512, 5);
        let spec = DropoutSpec::alpha(0.1);
        assert_eq!(
            apply_dropout(&spec, &xs, true, 77).unwrap(),
            apply_dropout(&spec, &xs, true, 77).unwrap()
        );
        assert_ne!(
            apply_dropout(&spec, &xs, true, 77).unwrap(),
            apply_dropout(&spec, &xs, true, 78).unwrap()
        );
    }

    #[test]
    fn mask_backprop_matches_transform_slope() {
        let mut r = rng::stream(1, &[]);
        let mask = DropoutMask::sample(&DropoutSpec::alpha(0.3), 100, -1.7581, &mut r);
        let mut x = vec![0.5; 100];
        let mut x2 = vec![0.5 + 1e-3; 100];
        mask.apply(&mut x);
        mask.apply(&mut x2);
        let mut g = vec![1.0; 100];
        mask.backprop(&mut g);
        for i in 0..100 {
            assert!(((x2[i] - x[i]) / 1e-3 - g[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn lecun_variance_for_hundred_inputs() {
        let scheme = InitScheme::new(InitKind::LeCunNormal, 100).unwrap();
        let w = init_weights(scheme, 1000, 7).unwrap();
        let (_, var) = moments(&w);
        assert!((var - 0.01).abs() <= 0.002, "var {var}");
    }

    #[test]
    fn he_variance() {
        let scheme = InitScheme::new(InitKind::HeNormal, 50).unwrap();
        let w = init_weights(scheme, 100_000, 8).unwrap();
        let (mean, var) = moments(&w);
        assert!(mean.abs() < 0.003);
        assert!((var - 0.04).abs() < 0.002, "var {var}");
    }

    #[test]
    fn single_draw_and_zero_fan_in() {
        let w = init_weights(InitScheme::new(InitKind::LeCunNormal, 1).unwrap(), 1, 3).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].is_finite());
        assert_eq!(InitScheme::new(InitKind::HeNormal, 0), Err(RegularizationError::ZeroFanIn));
        let bad = InitScheme { kind: InitKind::HeNormal, fan_in: 0 };
        assert!(init_weights(bad, 4, 0).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let s = InitScheme::new(InitKind::HeNormal, 10).unwrap();
        assert_eq!(init_weights(s, 50, 1).unwrap(), init_weights(s, 50, 1).unwrap());
    }
}
