//! Command line front end: `train`, `rank`, `simulate` and `sweep`.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid or malformed input,
//! 5 numerical or training failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::{rank_annotators, RankBy};
use crate::io::{load_dataset, load_params, save_params, write_dataset, write_point_conditionals, write_report, write_sweep_file, ParamsMeta};
use crate::rng::derive_seed;
use crate::sweep::{run_sweep, summarize, SweepGrid, SweepSource, DEFAULT_REPLICATES, DEFAULT_TEST_SPLIT};
use crate::synth::{gen_dataset, inject_annotators, is_adversary_name, AdversarySpec, SynthConfig, SMALL_PRESET_POINTS};
use crate::training::{fit, FitConfig};

#[derive(Debug, Parser)]
#[command(name = "annotator-trust", version, about = "Learn from multiple annotators and score their trustworthiness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a dataset file and save the parameters.
    Train(TrainArgs),
    /// Score and rank the annotators of a dataset under fitted parameters.
    Rank(RankArgs),
    /// Write a synthetic dataset, optionally with injected adversaries.
    Simulate(SimulateArgs),
    /// Run the adversary-injection grid and write a long-format table.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    #[arg(long, default_value_t = 200)]
    pub max_em_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub em_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FitFlags {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            max_em_iters: self.max_em_iters,
            em_rel_tol: self.em_tol,
            l2_penalty: self.l2,
            n_restarts: self.restarts,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = SMALL_PRESET_POINTS)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    #[arg(long, default_value_t = 3)]
    pub base_annotators: usize,
    #[arg(long, default_value_t = 0.9)]
    pub base_accuracy: f64,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
}

impl SynthFlags {
    pub fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_points: self.n,
            n_features: self.features,
            class_separation: self.separation,
            base_annotators: self.base_annotators,
            base_accuracy: self.base_accuracy,
            seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Params document to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RankByArg {
    Sum,
    Mean,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    pub dataset: PathBuf,
    pub params: PathBuf,
    /// Report file; per-point conditionals go next to it as `<stem>.points.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = RankByArg::Sum)]
    pub by: RankByArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 0)]
    pub adversaries: usize,
    #[arg(long, default_value_t = 0.4)]
    pub pa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Inject adversaries into this dataset (needs a truth column) instead
    /// of generating synthetic data.
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub pa_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,9")]
    pub adv_grid: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Held-out fraction for the test AUC (0 disables it).
    #[arg(long, default_value_t = DEFAULT_TEST_SPLIT)]
    pub split: f64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Rank(a) => cmd_rank(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let config = args.fit.config();
    let (params, trace) = fit(&dataset, &config)?;
    let meta = ParamsMeta::for_dataset(&dataset, config, Some(trace.clone()));
    save_params(&params, &meta, &args.out)?;
    println!(
        "final penalized log-likelihood: {}",
        trace.final_log_likelihood().unwrap_or(f64::NAN)
    );
    println!("em iterations: {} (converged: {})", trace.iterations_run, trace.converged);
    println!("selected restart: {}", trace.restart_index_selected);
    println!("params written to {}", args.out.display());
    Ok(())
}

/// Sibling path `<stem>.points.csv` for the per-point conditional table.
pub fn points_path(report: &Path) -> PathBuf {
    report.with_extension("points.csv")
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let mut dataset = load_dataset(&args.dataset)?;
    let (params, meta) = load_params(&args.params)?;
    if meta.annotator_names != dataset.annotator_names() {
        return Err(Error::Validation(format!(
            "annotators in params {:?} do not match dataset annotators {:?}",
            meta.annotator_names,
            dataset.annotator_names()
        )));
    }
    if meta.feature_names != dataset.feature_names() {
        return Err(Error::Validation(format!(
            "features in params {:?} do not match dataset features {:?}",
            meta.feature_names,
            dataset.feature_names()
        )));
    }
    dataset.restandardize(meta.standardization)?;
    let by = match args.by {
        RankByArg::Sum => RankBy::Sum,
        RankByArg::Mean => RankBy::Mean,
    };
    let reports = rank_annotators(&dataset, &params, by)?;
    let flags: Vec<bool> = dataset.annotator_names().iter().map(|n| is_adversary_name(n)).collect();
    let known = flags.iter().any(|&f| f);
    write_report(&reports, known.then_some(flags.as_slice()), &args.out)?;
    write_point_conditionals(&dataset, &reports, points_path(&args.out))?;
    let mut by_rank: Vec<_> = reports.iter().collect();
    by_rank.sort_by_key(|r| r.rank);
    for r in by_rank {
        println!("{:>3}  {:<20} score {:>12.4}  mean {:>8.4}", r.rank, r.name, r.score, r.mean_score);
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let base = gen_dataset::<f64>(&args.synth.config(args.seed))?;
    let spec = AdversarySpec {
        p_a: args.pa,
        count: args.adversaries,
    };
    let dataset = inject_annotators(&base, spec, derive_seed(args.seed, 1))?;
    write_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} points, {} annotators to {}",
        dataset.n_points(),
        dataset.n_annotators(),
        args.out.display()
    );
    Ok(())
}

pub fn sweep_grid(args: &SweepArgs) -> Result<SweepGrid> {
    let source = match &args.dataset {
        Some(path) => SweepSource::Dataset(load_dataset(path)?),
        None => SweepSource::Synthetic(args.synth.config(args.fit.seed)),
    };
    Ok(SweepGrid {
        pa_values: args.pa_grid.clone(),
        adversary_counts: args.adv_grid.clone(),
        replicates: args.replicates,
        source,
        seed: args.fit.seed,
        fit: args.fit.config(),
        test_split: args.split,
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let grid = sweep_grid(args)?;
    let result = run_sweep(&grid, args.threads)?;
    write_sweep_file(&result, &args.out)?;
    let failed = result.cells.iter().filter(|c| c.outcome.is_err()).count();
    println!("{:>5} {:>4} {:>10} {:>10} {:>9}", "p_a", "M", "adv", "base", "train_auc");
    for s in summarize(&result) {
        let adv = s.mean_adversary_score.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:>5} {:>4} {:>10} {:>10.3} {:>9.4}",
            s.p_a, s.n_adversaries, adv, s.mean_base_score, s.mean_train_auc
        );
    }
    println!("{} cells ({failed} failed) written to {}", result.cells.len(), args.out.display());
    Ok(())
}
