//! Greedy layer-wise selection of activation function and dropout rate.
//!
//! 1. Train the ReLU baseline for the full schedule.
//! 2. Detect the evaluation point (EP) on its learning curve.
//! 3. For each searchable layer in order and each activation in the library,
//!    hill-climb the dropout grid with candidates trained for EP epochs only;
//!    freeze the best `(activation, rate)` for that layer before moving on.
//! 4. Train the resulting hybrid network for the full schedule.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::curve::{self, AgParams, CurveError};
use crate::data::Dataset;
use crate::nn::{self, NetworkSpec, NnError, RunRecord, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("search configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Every candidate trains with the run seed.
    #[default]
    SharedSeed,
    /// Each candidate gets a seed derived from its layer, activation and rate.
    PerCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "ActivationKind::default_library")]
    pub library: Vec<ActivationKind>,
    #[serde(default = "default_grid")]
    pub dropout_grid: Vec<f64>,
    #[serde(default)]
    pub ag: AgParams,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
}

pub fn default_grid() -> Vec<f64> {
    vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5]
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            library: ActivationKind::default_library(),
            dropout_grid: default_grid(),
            ag: AgParams::default(),
            seed_policy: SeedPolicy::SharedSeed,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.library.is_empty() {
            return Err(SearchError::Config("search.library must not be empty".into()));
        }
        for a in &self.library {
            a.validate().map_err(|e| SearchError::Config(format!("search.library: {e}")))?;
        }
        if self.dropout_grid.first() != Some(&0.0) {
            return Err(SearchError::Config("search.dropout_grid must start at 0".into()));
        }
        if self.dropout_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SearchError::Config("search.dropout_grid must be strictly increasing".into()));
        }
        if self.dropout_grid.iter().any(|&r| !(r < 1.0)) {
            return Err(SearchError::Config("search.dropout_grid rates must be < 1".into()));
        }
        self.ag.validate().map_err(|e| SearchError::Config(format!("search.ag: {e}")))?;
        Ok(())
    }
}

/// Activation and dropout rate of one searchable layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub activation: ActivationKind,
    pub rate: f64,
}

/// One candidate evaluation. Everything here is reproducible; wall times are
/// kept separately in [`HybridResult::trial_wall_times`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    /// Position of the layer under search among the searchable layers, 1-based.
    pub layer: usize,
    pub activation: ActivationKind,
    pub rate: f64,
    pub seed: u64,
    pub accuracy_at_ep: f64,
    /// Epochs actually trained; 0 when the result was reused.
    pub epochs_trained: usize,
    pub diverged: bool,
    pub reused: bool,
    /// Full candidate configuration over all searchable layers.
    pub config: Vec<LayerChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDecision {
    pub layer: usize,
    pub layer_index: usize,
    pub activation: ActivationKind,
    pub rate: f64,
    pub accuracy_at_ep: f64,
    /// Best `(rate, accuracy)` found for every activation, in library order.
    pub per_activation: Vec<(ActivationKind, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridResult {
    pub hybrid: NetworkSpec,
    pub baseline_record: RunRecord,
    pub hybrid_record: RunRecord,
    pub ep: usize,
    /// False when no epoch met the threshold and full training was used instead.
    pub ep_found: bool,
    pub ttr: f64,
    /// Undefined (None) when the baseline reached 100 %.
    pub rer: Option<f64>,
    pub trial_count: usize,
    pub total_ep_epochs_trained: usize,
    pub decisions: Vec<LayerDecision>,
    pub trials: Vec<TrialRecord>,
    pub trial_wall_times: Vec<f64>,
}

impl HybridResult {
    /// Epochs that training every evaluated candidate to completion would have cost.
    pub fn full_length_epochs(&self) -> usize {
        self.trials.iter().filter(|t| !t.reused).count() * self.baseline_record.train.epochs
    }
}

/// Outcome of a dropout hill-climb for one activation on one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HillClimb {
    pub best_index: usize,
    pub best_accuracy: f64,
    /// `(grid index, accuracy)` in evaluation order.
    pub evaluated: Vec<(usize, f64)>,
}

/// Walks `grid` upward from `start` while accuracy strictly improves.
///
/// The first non-improving step ends the climb; the best point seen wins, so
/// ties resolve to the lower rate.
pub fn dropout_hill_climb<E>(grid_len: usize, start: usize, mut evaluate: E) -> Result<HillClimb, SearchError>
where
    E: FnMut(usize) -> Result<f64, SearchError>,
{
    if start >= grid_len {
        return Err(SearchError::Config(format!("start index {start} outside grid of {grid_len}")));
    }
    let first = evaluate(start)?;
    let mut climb = HillClimb {
        best_index: start,
        best_accuracy: first,
        evaluated: vec![(start, first)],
    };
    for idx in start + 1..grid_len {
        let acc = evaluate(idx)?;
        climb.evaluated.push((idx, acc));
        if acc > climb.best_accuracy {
            climb.best_accuracy = acc;
            climb.best_index = idx;
        } else {
            break;
        }
    }
    Ok(climb)
}

/// Accuracy-at-EP of one candidate plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EpScore {
    pub accuracy: f64,
    pub diverged: bool,
    pub wall_time: f64,
}

/// Trains `candidate` for exactly `ep` epochs of the `train_cfg` schedule and
/// returns the evaluation accuracy at epoch `ep`. Divergence scores 0.
pub fn accuracy_at_ep(candidate: &NetworkSpec, data: &Dataset, train_cfg: &TrainConfig, ep: usize) -> Result<EpScore, SearchError> {
    if ep == 0 || ep > train_cfg.epochs {
        return Err(SearchError::Config(format!(
            "evaluation point {ep} outside 1..={}",
            train_cfg.epochs
        )));
    }
    let start = Instant::now();
    match nn::train(candidate, data, &train_cfg.truncated(ep)) {
        Ok(record) => Ok(EpScore {
            accuracy: record.final_test_accuracy,
            diverged: false,
            wall_time: start.elapsed().as_secs_f64(),
        }),
        Err(NnError::Diverged { epoch }) => {
            log::warn!("candidate [{}] diverged in epoch {epoch}; scoring 0", candidate.describe());
            Ok(EpScore {
                accuracy: 0.0,
                diverged: true,
                wall_time: start.elapsed().as_secs_f64(),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn choices(net: &NetworkSpec) -> Vec<LayerChoice> {
    net.searchable_layers()
        .into_iter()
        .map(|i| LayerChoice {
            activation: net.layers[i].activation.expect("searchable layers are activated"),
            rate: net.layers[i].dropout_rate(),
        })
        .collect()
}

fn memo_key(net: &NetworkSpec, seed: u64, ep: usize) -> String {
    format!("{seed}:{ep}:{}", serde_json::to_string(net).expect("network serializes"))
}

fn check_base(base: &NetworkSpec) -> Result<(), SearchError> {
    base.validate()?;
    for i in base.searchable_layers() {
        let l = &base.layers[i];
        if l.activation != Some(ActivationKind::RELU) || l.dropout_rate() != 0.0 {
            return Err(SearchError::Config(format!(
                "base network layer {i} must be ReLU without dropout, found {}",
                base.describe()
            )));
        }
    }
    Ok(())
}

/// Resolves the evaluation point from a baseline curve, falling back to full
/// training when no epoch qualifies.
pub fn resolve_ep(baseline: &RunRecord, ag: &AgParams) -> Result<(usize, bool), SearchError> {
    let total = baseline.curve.len();
    match curve::evaluation_point(&baseline.curve, ag) {
        Ok(Some(ep)) => Ok((ep, true)),
        Ok(None) => {
            log::warn!("no evaluation point below threshold {}; using full training ({total} epochs)", ag.threshold);
            Ok((total, false))
        }
        Err(CurveError::TooShort { .. }) => {
            log::warn!("curve of {total} epochs too short for window {}; using full training", ag.window);
            Ok((total, false))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the complete search: baseline, evaluation point, layer-wise search and hybrid training.
pub fn run_search(base: &NetworkSpec, data: &Dataset, train_cfg: &TrainConfig, search_cfg: &SearchConfig) -> Result<HybridResult, SearchError> {
    search_cfg.validate()?;
    check_base(base)?;
    train_cfg.validate()?;
    let baseline = nn::train(base, data, train_cfg)?;
    search_from_baseline(base, data, train_cfg, search_cfg, baseline, None)
}

/// Layer-wise search and hybrid training given an already trained baseline.
/// `forced_ep` overrides evaluation-point detection.
pub fn search_from_baseline(
    base: &NetworkSpec,
    data: &Dataset,
    train_cfg: &TrainConfig,
    search_cfg: &SearchConfig,
    baseline: RunRecord,
    forced_ep: Option<usize>,
) -> Result<HybridResult, SearchError> {
    search_cfg.validate()?;
    check_base(base)?;
    train_cfg.validate()?;
    let total = train_cfg.epochs;
    let (ep, ep_found) = match forced_ep {
        Some(ep) if ep == 0 || ep > total => {
            return Err(SearchError::Config(format!("evaluation point {ep} outside 1..={total}")));
        }
        Some(ep) => (ep, true),
        None => resolve_ep(&baseline, &search_cfg.ag)?,
    };
    log::info!("evaluation point {ep} of {total} epochs (detected: {ep_found})");

    let grid = &search_cfg.dropout_grid;
    let mut memo: HashMap<String, f64> = HashMap::new();
    if baseline.train.seed == train_cfg.seed && baseline.curve.len() >= ep {
        // A truncated run follows the same trajectory as the full one.
        memo.insert(memo_key(base, train_cfg.seed, ep), baseline.curve.values()[ep - 1]);
    }

    let mut current = base.clone();
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut wall_times = Vec::new();
    let mut decisions = Vec::new();
    let mut start_index = 0usize;

    for (pos, &layer_index) in base.searchable_layers().iter().enumerate() {
        let layer = pos + 1;
        let climbs: Vec<(HillClimb, Vec<(TrialRecord, f64)>)> = search_cfg
            .library
            .par_iter()
            .enumerate()
            .map(|(fi, &activation)| {
                let mut local = Vec::new();
                let climb = dropout_hill_climb(grid.len(), start_index, |gi| {
                    let candidate = current.with_choice(layer_index, activation, grid[gi]);
                    let seed = match search_cfg.seed_policy {
                        SeedPolicy::SharedSeed => train_cfg.seed,
                        SeedPolicy::PerCandidate => {
                            rng::derive_seed(train_cfg.seed, &[rng::tag::CANDIDATE, layer as u64, fi as u64, gi as u64])
                        }
                    };
                    let key = memo_key(&candidate, seed, ep);
                    let (score, reused) = match memo.get(&key) {
                        Some(&acc) => (
                            EpScore {
                                accuracy: acc,
                                diverged: false,
                                wall_time: 0.0,
                            },
                            true,
                        ),
                        None => {
                            let cfg = TrainConfig { seed, ..train_cfg.clone() };
                            (accuracy_at_ep(&candidate, data, &cfg, ep)?, false)
                        }
                    };
                    log::info!(
                        "layer {layer} {} @ {}: {:.3} %{}",
                        activation,
                        grid[gi],
                        score.accuracy,
                        if reused { " (reused)" } else { "" }
                    );
                    local.push((
                        TrialRecord {
                            index: 0,
                            layer,
                            activation,
                            rate: grid[gi],
                            seed,
                            accuracy_at_ep: score.accuracy,
                            epochs_trained: if reused { 0 } else { ep },
                            diverged: score.diverged,
                            reused,
                            config: choices(&candidate),
                        },
                        score.wall_time,
                    ));
                    Ok(score.accuracy)
                })?;
                Ok((climb, local))
            })
            .collect::<Result<_, SearchError>>()?;

        let mut best: Option<usize> = None;
        let mut best_acc = 0.0;
        for (fi, (climb, local)) in climbs.iter().enumerate() {
            if climb.best_accuracy > best_acc {
                best_acc = climb.best_accuracy;
                best = Some(fi);
            }
            for (record, wall) in local {
                if !record.reused && !record.diverged {
                    memo.insert(
                        memo_key(
                            &current.with_choice(layer_index, record.activation, record.rate),
                            record.seed,
                            ep,
                        ),
                        record.accuracy_at_ep,
                    );
                }
                let mut record = record.clone();
                record.index = trials.len();
                trials.push(record);
                wall_times.push(*wall);
            }
        }
        let fi = best.unwrap_or_else(|| {
            log::warn!("every candidate on layer {layer} scored 0; keeping {}", search_cfg.library[0]);
            0
        });
        let activation = search_cfg.library[fi];
        let chosen = &climbs[fi].0;
        let rate = grid[chosen.best_index];
        current = current.with_choice(layer_index, activation, rate);
        start_index = chosen.best_index;
        decisions.push(LayerDecision {
            layer,
            layer_index,
            activation,
            rate,
            accuracy_at_ep: chosen.best_accuracy,
            per_activation: climbs
                .iter()
                .zip(&search_cfg.library)
                .map(|((c, _), a)| (*a, grid[c.best_index], c.best_accuracy))
                .collect(),
        });
        log::info!("layer {layer} fixed to {activation} @ {rate}");
    }

    let hybrid_record = nn::train(&current, data, train_cfg)?;
    let rer = match curve::rer(hybrid_record.final_test_accuracy, baseline.final_test_accuracy) {
        Ok(r) => Some(r),
        Err(CurveError::Singular(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(HybridResult {
        hybrid: current,
        ttr: curve::ttr(total, ep)?,
        rer,
        ep,
        ep_found,
        trial_count: trials.len(),
        total_ep_epochs_trained: trials.iter().map(|t| t.epochs_trained).sum(),
        baseline_record: baseline,
        hybrid_record,
        decisions,
        trials,
        trial_wall_times: wall_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(accs: &'static [f64]) -> impl FnMut(usize) -> Result<f64, SearchError> {
        move |i| Ok(accs[i])
    }

    #[test]
    fn climb_stops_after_first_non_improvement() {
        let c = dropout_hill_climb(4, 0, scripted(&[90.0, 91.0, 92.0, 91.5])).unwrap();
        assert_eq!(c.best_index, 2);
        assert_eq!(c.best_accuracy, 92.0);
        assert_eq!(c.evaluated.len(), 4);
    }

    #[test]
    fn climb_failing_first_step() {
        let c = dropout_hill_climb(4, 0, scripted(&[93.0, 92.0, 99.0, 99.0])).unwrap();
        assert_eq!((c.best_index, c.evaluated.len()), (0, 2));
    }

    #[test]
    fn climb_single_point_grid() {
        let c = dropout_hill_climb(1, 0, scripted(&[77.0])).unwrap();
        assert_eq!((c.best_index, c.best_accuracy, c.evaluated.len()), (0, 77.0, 1));
    }

    #[test]
    fn climb_ties_keep_lower_rate() {
        let c = dropout_hill_climb(3, 0, scripted(&[90.0, 90.0, 95.0])).unwrap();
        assert_eq!(c.best_index, 0);
    }

    #[test]
    fn climb_from_later_start() {
        let c = dropout_hill_climb(5, 2, scripted(&[0.0, 0.0, 80.0, 85.0, 84.0])).unwrap();
        assert_eq!(c.best_index, 3);
        assert_eq!(c.evaluated, vec![(2, 80.0), (3, 85.0), (4, 84.0)]);
        assert!(dropout_hill_climb(3, 3, scripted(&[0.0; 3])).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = |f: fn(&mut SearchConfig)| {
            let mut c = SearchConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.library.clear()));
        assert!(bad(|c| c.dropout_grid = vec![0.1, 0.2]));
        assert!(bad(|c| c.dropout_grid = vec![0.0, 0.2, 0.1]));
        assert!(bad(|c| c.dropout_grid = vec![0.0, 1.0]));
        assert!(bad(|c| c.ag.window = 0));
    }
}
