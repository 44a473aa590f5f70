//! On-disk formats: pretty JSON for single records, JSON lines for
//! transcripts, `<epoch>\t<value>` text for curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::curve::{self, LearningCurve};
use crate::search::HybridResult;

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| io_err(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| io_err(path, e))?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn write_curve(path: &Path, curve: &LearningCurve) -> Result<(), HarnessError> {
    write_text(path, &curve.to_tsv())
}

pub fn read_curve(path: &Path) -> Result<LearningCurve, HarnessError> {
    LearningCurve::read_tsv(path).map_err(|e| io_err(path, e))
}

/// Two-column `<epoch>\t<value>` export of arbitrary series.
pub fn series_tsv(series: &[(usize, f64)]) -> String {
    let mut out = String::new();
    for (e, v) in series {
        writeln!(out, "{e}\t{v}").unwrap();
    }
    out
}

/// The reported row of one search. Contains no timings, so reruns produce
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub network: String,
    pub hybrid: String,
    pub accuracy_original: f64,
    pub accuracy_hybrid: f64,
    pub total_epochs: usize,
    pub ep: usize,
    pub ep_found: bool,
    pub ttr: f64,
    /// Absent when the baseline is at 100 % and the ratio is undefined.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rer: Option<f64>,
    pub trials: usize,
    pub trials_trained: usize,
    pub search_epochs: usize,
    pub full_length_epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub power_original_watts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub power_hybrid_watts: Option<f64>,
}

impl Summary {
    pub fn from_result(r: &HybridResult) -> Self {
        Summary {
            network: r.baseline_record.network.describe(),
            hybrid: r.hybrid.describe(),
            accuracy_original: r.baseline_record.final_test_accuracy,
            accuracy_hybrid: r.hybrid_record.final_test_accuracy,
            total_epochs: r.baseline_record.train.epochs,
            ep: r.ep,
            ep_found: r.ep_found,
            ttr: r.ttr,
            rer: r.rer,
            trials: r.trial_count,
            trials_trained: r.trials.iter().filter(|t| !t.reused).count(),
            search_epochs: r.total_ep_epochs_trained,
            full_length_epochs: r.full_length_epochs(),
            power_original_watts: None,
            power_hybrid_watts: None,
        }
    }

    /// Recomputes TTR and RER from stored curves; returns the largest deviation.
    pub fn rederive(&self, baseline: &LearningCurve, hybrid: &LearningCurve) -> Result<f64, HarnessError> {
        let ttr = curve::ttr(baseline.len(), self.ep).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let mut dev = (ttr - self.ttr).abs();
        dev = dev.max((baseline.last() - self.accuracy_original).abs());
        dev = dev.max((hybrid.last() - self.accuracy_hybrid).abs());
        match (self.rer, curve::rer(hybrid.last(), baseline.last())) {
            (Some(a), Ok(b)) => dev = dev.max((a - b).abs()),
            (None, Err(_)) => {}
            _ => dev = f64::INFINITY,
        }
        Ok(dev)
    }
}

/// Wall-clock side channel; never part of the reproducible artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub what: String,
    pub seconds: f64,
}
