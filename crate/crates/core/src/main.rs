#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybridnet::curve::AgParams;
use hybridnet::harness::{self, Experiment, ExperimentConfig, HarnessError, Mode, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "hybridnet", version, about = "Per-layer activation and dropout search for feedforward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration in full.
    Train(Common),
    /// Baseline, evaluation point, layer-wise search and hybrid training.
    Search(Common),
    /// Repeat the search with the evaluation point forced to each of --eps.
    EpSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated evaluation points, e.g. 5,6,7,8.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<usize>,
    },
    /// Accuracy gradient and evaluation point of a curve file.
    Analyze {
        /// Curve file with `<epoch>\t<accuracy>` lines.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Accuracy-gradient window R.
    #[arg(long)]
    window: Option<usize>,
    /// Evaluation-point threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated dropout grid, e.g. 0,0.1,0.2.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

fn load(common: &Common, mode: Mode) -> Result<(ExperimentConfig, PathBuf, String), HarnessError> {
    let (mut cfg, base, name) = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::read(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let name = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            (cfg, base, name)
        }
        None => (ExperimentConfig::default(), PathBuf::new(), "run".to_string()),
    };
    cfg.mode = mode;
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(r) = common.window {
        cfg.search.ag.window = r;
    }
    if let Some(t) = common.threshold {
        cfg.search.ag.threshold = t;
    }
    if let Some(g) = &common.grid {
        cfg.search.dropout_grid = g.clone();
    }
    Ok((cfg, base, name))
}

fn experiment(common: &Common, mode: Mode, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<Experiment, HarnessError> {
    let (mut cfg, base, name) = load(common, mode)?;
    tweak(&mut cfg);
    Experiment::new(cfg, &base, &name, common.out.clone())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(common) => {
            let exp = experiment(&common, Mode::TrainOnly, |_| {})?;
            let r = harness::cmd_train(&exp)?;
            println!("final accuracy {:.4} %", r.final_test_accuracy);
            println!("wrote {}", exp.output_dir.display());
        }
        Command::Search(common) => {
            let exp = experiment(&common, Mode::FullSearch, |_| {})?;
            let r = harness::cmd_search(&exp)?;
            let s = harness::Summary::from_result(&r);
            println!("hybrid        {}", s.hybrid);
            println!("accuracy      {:.4} % (baseline {:.4} %)", s.accuracy_hybrid, s.accuracy_original);
            println!("EP            {}{}", s.ep, if s.ep_found { "" } else { " (not found, full training)" });
            println!("TTR           {:.4}", s.ttr);
            match s.rer {
                Some(rer) => println!("RER           {rer:.4} %"),
                None => println!("RER           undefined (baseline at 100 %)"),
            }
            println!("search epochs {} of {} full-length", s.search_epochs, s.full_length_epochs);
            println!("wrote {}", exp.output_dir.display());
        }
        Command::EpSweep { common, eps } => {
            let exp = experiment(&common, Mode::EpSweep, |c| {
                if !eps.is_empty() {
                    c.ep_list = eps.clone();
                }
            })?;
            let rows = harness::cmd_ep_sweep(&exp)?;
            print!("{}", harness::sweep_tsv(&rows));
            println!("wrote {}", exp.output_dir.display());
        }
        Command::Analyze { curve, common } => {
            let (mut cfg, base, name) = load(&common, Mode::AnalyzeCurve)?;
            if let Some(c) = curve {
                cfg.curve = Some(c);
            } else if let Some(c) = &cfg.curve {
                cfg.curve = Some(base.join(c));
            }
            let Some(curve) = cfg.curve.clone() else {
                return Err(HarnessError::Config("curve: pass --curve or set `curve` in the config".into()));
            };
            let ag: AgParams = cfg.search.ag;
            ag.validate().map_err(|e| HarnessError::Config(format!("search.ag: {e}")))?;
            let out = common.out.clone().unwrap_or_else(|| {
                std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("runs"))
                    .join(format!("{name}-analysis"))
            });
            let r = harness::cmd_analyze(&curve, &ag, &out)?;
            for (e, g) in &r.gradient {
                println!("{e}\t{g}");
            }
            println!(
                "EP {}{} of {} epochs, TTR {:.4}",
                r.ep,
                if r.ep_found { "" } else { " (not found)" },
                r.epochs,
                r.ttr
            );
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
