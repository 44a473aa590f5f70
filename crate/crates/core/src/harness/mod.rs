//! Experiment orchestration behind the `hybridnet` binary.
//!
//! Every command computes first and writes afterwards, from the calling
//! thread, so the output directory only ever sees one writer.

pub mod config;
pub mod persist;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DataConfig, ExperimentConfig, Mode, NetworkConfig, MNIST_DIR_ENV, OUTPUT_ROOT_ENV};
pub use persist::{Summary, Timing};

use crate::curve::{self, AgParams, CurveError, LearningCurve};
use crate::data::DataError;
use crate::nn::{self, NetworkSpec, NnError, RunRecord};
use crate::search::{self, HybridResult, SearchError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    fn context(self, what: &str) -> Self {
        match self {
            HarnessError::Runtime(m) => HarnessError::Runtime(format!("{what}: {m}")),
            other => other,
        }
    }
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<SearchError> for HarnessError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(m) => HarnessError::Config(m),
            SearchError::Nn(n) => n.into(),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(m) => HarnessError::Config(format!("data: {m}")),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<CurveError> for HarnessError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::InvalidParam(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

/// A validated config plus where its relative paths and outputs live.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub network: NetworkSpec,
    pub base_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Experiment {
    /// Validates `config` and creates the output directory.
    ///
    /// The output directory is `out` if given, else `config.output_dir`
    /// (relative to `base_dir`), else `$HYBRIDNET_OUTPUT_ROOT/<name>`,
    /// else `runs/<name>`.
    pub fn new(config: ExperimentConfig, base_dir: &Path, name: &str, out: Option<PathBuf>) -> Result<Self, HarnessError> {
        let network = config.validate()?;
        let output_dir = match (out, &config.output_dir) {
            (Some(o), _) => o,
            (None, Some(o)) if o.is_absolute() => o.clone(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(name),
        };
        std::fs::create_dir_all(&output_dir)
            .map_err(|e| HarnessError::Config(format!("output_dir: cannot create {}: {e}", output_dir.display())))?;
        let probe = output_dir.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| HarnessError::Config(format!("output_dir: {} not writable: {e}", output_dir.display())))?;
        Ok(Experiment {
            config,
            network,
            base_dir: base_dir.to_path_buf(),
            output_dir,
        })
    }

    fn out(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
        with_workers(self.config.workers, f)
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_run(exp: &Experiment, prefix: &str, record: &RunRecord) -> Result<(), HarnessError> {
    persist::write_json(&exp.out(&format!("{prefix}run.json")), record)?;
    persist::write_curve(&exp.out(&format!("{prefix}curve.tsv")), &record.curve)
}

/// Trains the configured network once, in full.
///
/// Writes `run.json` and `curve.tsv`.
pub fn cmd_train(exp: &Experiment) -> Result<RunRecord, HarnessError> {
    let data = exp.config.data.load(&exp.base_dir)?;
    let record = exp
        .run(|| nn::train(&exp.network, &data, &exp.config.train))?
        .map_err(|e| HarnessError::from(e).context("training"))?;
    log::info!(
        "trained [{}]: final accuracy {:.3} % in {:.1} s",
        exp.network.describe(),
        record.final_test_accuracy,
        record.wall_time
    );
    write_run(exp, "", &record)?;
    Ok(record)
}

fn timings(result: &HybridResult) -> Vec<Timing> {
    let mut t = vec![Timing {
        what: "baseline".into(),
        seconds: result.baseline_record.wall_time,
    }];
    t.extend(result.trial_wall_times.iter().enumerate().map(|(i, s)| Timing {
        what: format!("trial {i}"),
        seconds: *s,
    }));
    t.push(Timing {
        what: "hybrid".into(),
        seconds: result.hybrid_record.wall_time,
    });
    t
}

fn write_search(exp: &Experiment, prefix: &str, result: &HybridResult) -> Result<Summary, HarnessError> {
    let summary = Summary::from_result(result);
    persist::write_jsonl(&exp.out(&format!("{prefix}transcript.jsonl")), &result.trials)?;
    persist::write_jsonl(&exp.out(&format!("{prefix}timings.jsonl")), &timings(result))?;
    persist::write_json(&exp.out(&format!("{prefix}hybrid_spec.json")), &result.hybrid)?;
    persist::write_json(&exp.out(&format!("{prefix}summary.json")), &summary)?;
    persist::write_json(&exp.out(&format!("{prefix}decisions.json")), &result.decisions)?;
    write_run(exp, &format!("{prefix}hybrid_"), &result.hybrid_record)?;
    Ok(summary)
}

/// Runs the full search.
///
/// Writes the baseline and hybrid runs and curves, `transcript.jsonl`,
/// `timings.jsonl`, `hybrid_spec.json`, `decisions.json` and `summary.json`.
pub fn cmd_search(exp: &Experiment) -> Result<HybridResult, HarnessError> {
    let data = exp.config.data.load(&exp.base_dir)?;
    let result = exp
        .run(|| search::run_search(&exp.network, &data, &exp.config.train, &exp.config.search))?
        .map_err(|e| HarnessError::from(e).context("search"))?;
    write_run(exp, "baseline_", &result.baseline_record)?;
    let s = write_search(exp, "", &result)?;
    log::info!(
        "hybrid [{}]: {:.3} % vs {:.3} %, EP {} TTR {:.3} RER {}",
        s.hybrid,
        s.accuracy_hybrid,
        s.accuracy_original,
        s.ep,
        s.ttr,
        s.rer.map_or("n/a".to_string(), |r| format!("{r:.3} %"))
    );
    Ok(result)
}

/// One row of the evaluation-point trade-off table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ep: usize,
    pub ttr: f64,
    pub hybrid: String,
    pub accuracy_original: f64,
    pub accuracy_hybrid: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rer: Option<f64>,
    pub trials: usize,
    pub search_epochs: usize,
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("# ep\tttr\taccuracy_hybrid\trer\tsearch_epochs\thybrid\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.ep,
            r.ttr,
            r.accuracy_hybrid,
            r.rer.map_or("NA".to_string(), |x| x.to_string()),
            r.search_epochs,
            r.hybrid
        ));
    }
    out
}

/// Trains the baseline once, then repeats the layer search with the
/// evaluation point forced to each entry of `ep_list`.
///
/// Writes `baseline_run.json`, per-EP `ep<N>_*` search artifacts,
/// `ep_sweep.jsonl` and `ep_sweep.tsv`.
pub fn cmd_ep_sweep(exp: &Experiment) -> Result<Vec<SweepRow>, HarnessError> {
    let cfg = &exp.config;
    let data = cfg.data.load(&exp.base_dir)?;
    let results = exp
        .run(|| -> Result<(RunRecord, Vec<HybridResult>), SearchError> {
            let baseline = nn::train(&exp.network, &data, &cfg.train)?;
            let results = cfg
                .ep_list
                .par_iter()
                .map(|&ep| {
                    search::search_from_baseline(&exp.network, &data, &cfg.train, &cfg.search, baseline.clone(), Some(ep))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((baseline, results))
        })?
        .map_err(|e| HarnessError::from(e).context("ep sweep"))?;
    let (baseline, results) = results;
    write_run(exp, "baseline_", &baseline)?;
    let mut rows = Vec::new();
    for r in &results {
        let s = write_search(exp, &format!("ep{}_", r.ep), r)?;
        rows.push(SweepRow {
            ep: r.ep,
            ttr: r.ttr,
            hybrid: s.hybrid,
            accuracy_original: s.accuracy_original,
            accuracy_hybrid: s.accuracy_hybrid,
            rer: s.rer,
            trials: s.trials,
            search_epochs: s.search_epochs,
        });
    }
    persist::write_jsonl(&exp.out("ep_sweep.jsonl"), &rows)?;
    persist::write_text(&exp.out("ep_sweep.tsv"), &sweep_tsv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub ag: AgParams,
    pub epochs: usize,
    pub ep: usize,
    pub ep_found: bool,
    pub ttr: f64,
    pub gradient: Vec<(usize, f64)>,
}

/// Accuracy gradient series and evaluation point of a curve.
pub fn analyze_curve(curve: &LearningCurve, ag: &AgParams) -> Result<CurveReport, HarnessError> {
    ag.validate()?;
    let gradient = curve::accuracy_gradient_series(curve, ag.window).unwrap_or_default();
    let (ep, ep_found) = match curve::evaluation_point(curve, ag) {
        Ok(Some(ep)) => (ep, true),
        Ok(None) | Err(CurveError::TooShort { .. }) => (curve.len(), false),
        Err(e) => return Err(e.into()),
    };
    Ok(CurveReport {
        ag: *ag,
        epochs: curve.len(),
        ep,
        ep_found,
        ttr: curve::ttr(curve.len(), ep)?,
        gradient,
    })
}

/// Reads a curve file and writes `curve.tsv`, `ag.tsv` and `report.json`
/// into `out`.
pub fn cmd_analyze(curve_path: &Path, ag: &AgParams, out: &Path) -> Result<CurveReport, HarnessError> {
    let curve = LearningCurve::read_tsv(curve_path).map_err(|e| match e {
        CurveError::Parse { line, message } => {
            HarnessError::Runtime(format!("{}: line {line}: {message}", curve_path.display()))
        }
        other => HarnessError::Runtime(format!("{}: {other}", curve_path.display())),
    })?;
    let report = analyze_curve(&curve, ag)?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::Config(format!("output_dir: {}: {e}", out.display())))?;
    persist::write_curve(&out.join("curve.tsv"), &curve)?;
    persist::write_text(&out.join("ag.tsv"), &persist::series_tsv(&report.gradient))?;
    persist::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
