//! Learning curves, the accuracy gradient, evaluation-point detection, and the
//! training-time / relative-error reduction metrics.
//!
//! Epochs are 1-based throughout. Accuracies are percentages in `[0, 100]`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("learning curve is empty")]
    Empty,
    #[error("accuracy {value} at epoch {epoch} is outside [0, 100]")]
    OutOfRange { epoch: usize, value: f64 },
    #[error("window {window} at epoch {epoch} needs epochs {first}..={last}, curve has {len}")]
    WindowOutOfBounds {
        epoch: usize,
        window: usize,
        first: isize,
        last: usize,
        len: usize,
    },
    #[error("curve of length {len} is too short for window {window} (needs {needed})")]
    TooShort { len: usize, window: usize, needed: usize },
    #[error("singular denominator: {0}")]
    Singular(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Per-epoch accuracy trace `A(1..T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LearningCurve {
    accuracy: Vec<f64>,
}

impl TryFrom<Vec<f64>> for LearningCurve {
    type Error = CurveError;

    fn try_from(accuracy: Vec<f64>) -> Result<Self, CurveError> {
        LearningCurve::new(accuracy)
    }
}

impl From<LearningCurve> for Vec<f64> {
    fn from(c: LearningCurve) -> Self {
        c.accuracy
    }
}

impl LearningCurve {
    pub fn new(accuracy: Vec<f64>) -> Result<Self, CurveError> {
        if accuracy.is_empty() {
            return Err(CurveError::Empty);
        }
        for (i, &a) in accuracy.iter().enumerate() {
            if !(0.0..=100.0).contains(&a) {
                return Err(CurveError::OutOfRange { epoch: i + 1, value: a });
            }
        }
        Ok(LearningCurve { accuracy })
    }

    /// Number of epochs `T`.
    pub fn len(&self) -> usize {
        self.accuracy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accuracy.is_empty()
    }

    /// `A(epoch)`, 1-based.
    pub fn at(&self, epoch: usize) -> Option<f64> {
        epoch.checked_sub(1).and_then(|i| self.accuracy.get(i)).copied()
    }

    pub fn last(&self) -> f64 {
        *self.accuracy.last().expect("non-empty by construction")
    }

    pub fn values(&self) -> &[f64] {
        &self.accuracy
    }

    /// Serializes as `<epoch>\t<accuracy>` lines. Values use the shortest
    /// representation that parses back to the identical `f64`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.accuracy.iter().enumerate() {
            writeln!(out, "{}\t{}", i + 1, a).unwrap();
        }
        out
    }

    /// Parses `<epoch>\t<accuracy>` lines. Blank lines and `#` comments are
    /// skipped; epochs must run 1, 2, 3, ...
    pub fn from_tsv(text: &str) -> Result<Self, CurveError> {
        let mut accuracy = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let (Some(e), Some(a), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(CurveError::Parse {
                    line,
                    message: format!("expected `<epoch>\\t<accuracy>`, got `{trimmed}`"),
                });
            };
            let epoch: usize = e.trim().parse().map_err(|_| CurveError::Parse {
                line,
                message: format!("bad epoch `{e}`"),
            })?;
            let value: f64 = a.trim().parse().map_err(|_| CurveError::Parse {
                line,
                message: format!("bad accuracy `{a}`"),
            })?;
            if epoch != accuracy.len() + 1 {
                return Err(CurveError::Parse {
                    line,
                    message: format!("expected epoch {}, got {epoch}", accuracy.len() + 1),
                });
            }
            if !(0.0..=100.0).contains(&value) {
                return Err(CurveError::Parse {
                    line,
                    message: format!("accuracy {value} outside [0, 100]"),
                });
            }
            accuracy.push(value);
        }
        LearningCurve::new(accuracy)
    }

    pub fn read_tsv(path: &Path) -> Result<Self, CurveError> {
        let text = std::fs::read_to_string(path).map_err(|e| CurveError::Io(format!("{}: {e}", path.display())))?;
        Self::from_tsv(&text)
    }
}

/// Window and threshold for evaluation-point detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgParams {
    pub window: usize,
    /// Fractional threshold; `0.001` is 0.1 %.
    pub threshold: f64,
}

impl Default for AgParams {
    fn default() -> Self {
        AgParams {
            window: 3,
            threshold: 0.001,
        }
    }
}

impl AgParams {
    pub fn validate(&self) -> Result<(), CurveError> {
        if self.window == 0 {
            return Err(CurveError::InvalidParam("window R must be >= 1".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(CurveError::InvalidParam(format!(
                "threshold must be finite and > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Epochs at which the gradient is defined for a curve of length `len`.
    pub fn valid_epochs(&self, len: usize) -> std::ops::RangeInclusive<usize> {
        self.window..=(len + 1).saturating_sub(self.window)
    }
}

/// Average relative accuracy difference over a window of `window` epochs:
///
/// `AG(E) = (sum_{i=E}^{E+R-1} A(i) - sum_{j=E-R+1}^{E} A(j)) / (R * A(E))`
pub fn accuracy_gradient(curve: &LearningCurve, epoch: usize, window: usize) -> Result<f64, CurveError> {
    if window == 0 {
        return Err(CurveError::InvalidParam("window R must be >= 1".into()));
    }
    let len = curve.len();
    let first = epoch as isize - window as isize + 1;
    let last = epoch + window - 1;
    if epoch == 0 || first < 1 || last > len {
        return Err(CurveError::WindowOutOfBounds {
            epoch,
            window,
            first,
            last,
            len,
        });
    }
    let a = curve.values();
    let current = a[epoch - 1];
    if current == 0.0 {
        return Err(CurveError::Singular(format!("A({epoch}) = 0")));
    }
    let ahead: f64 = a[epoch - 1..last].iter().sum();
    let behind: f64 = a[first as usize - 1..epoch].iter().sum();
    Ok((ahead - behind) / (window as f64 * current))
}

fn check_length(curve: &LearningCurve, window: usize) -> Result<(), CurveError> {
    let needed = 2 * window - 1;
    if curve.len() < needed {
        return Err(CurveError::TooShort {
            len: curve.len(),
            window,
            needed,
        });
    }
    Ok(())
}

/// `(epoch, AG(epoch))` for every epoch where the gradient is defined.
pub fn accuracy_gradient_series(curve: &LearningCurve, window: usize) -> Result<Vec<(usize, f64)>, CurveError> {
    let params = AgParams { window, threshold: 1.0 };
    params.validate()?;
    check_length(curve, window)?;
    params
        .valid_epochs(curve.len())
        .map(|e| accuracy_gradient(curve, e, window).map(|g| (e, g)))
        .collect()
}

/// First epoch in `[R, T - R + 1]` whose accuracy gradient falls below the
/// threshold, or `None` if no epoch qualifies.
pub fn evaluation_point(curve: &LearningCurve, params: &AgParams) -> Result<Option<usize>, CurveError> {
    params.validate()?;
    check_length(curve, params.window)?;
    for epoch in params.valid_epochs(curve.len()) {
        if accuracy_gradient(curve, epoch, params.window)? < params.threshold {
            return Ok(Some(epoch));
        }
    }
    Ok(None)
}

/// Training time reduction `total_epochs / ep`.
pub fn ttr(total_epochs: usize, ep: usize) -> Result<f64, CurveError> {
    if ep == 0 {
        return Err(CurveError::Singular("evaluation point is 0".into()));
    }
    if total_epochs < ep {
        return Err(CurveError::InvalidParam(format!(
            "total epochs {total_epochs} is below the evaluation point {ep}"
        )));
    }
    Ok(total_epochs as f64 / ep as f64)
}

/// Relative error reduction in percent, negative if the hybrid is worse.
pub fn rer(acc_hybrid: f64, acc_original: f64) -> Result<f64, CurveError> {
    for v in [acc_hybrid, acc_original] {
        if !(0.0..=100.0).contains(&v) {
            return Err(CurveError::InvalidParam(format!("accuracy {v} outside [0, 100]")));
        }
    }
    if acc_original == 100.0 {
        return Err(CurveError::Singular("original accuracy is 100 %".into()));
    }
    Ok((acc_hybrid - acc_original) / (100.0 - acc_original) * 100.0)
}

/// Inverse of [`rer`]: the hybrid accuracy that yields `rer_percent` against `acc_original`.
pub fn hybrid_accuracy_from_rer(rer_percent: f64, acc_original: f64) -> f64 {
    acc_original + rer_percent / 100.0 * (100.0 - acc_original)
}
