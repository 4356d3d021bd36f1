use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gcpinn_core::checks::run_suite;
use gcpinn_core::evaluation::{compute_metrics, ntk_matrix, summarize_trials, EvaluationReport, TrialSummary, NTK_EVERY, NTK_POINTS, TEST_POINTS};
use gcpinn_core::model::Model;
use gcpinn_core::network::Checkpoint;
use gcpinn_core::optim::LbfgsStop;
use gcpinn_core::method::Method;
use gcpinn_core::pde::PdeBenchmark;
use gcpinn_core::training::{sample_collocation, stream_rng, train, LogRow, Stage, TrainingObserver, STREAM_METRICS, STREAM_NTK};
use gcpinn_core::Error;

mod artifacts;
mod config;

use artifacts::{csv_with_header, num, write_json, CsvOut};
use config::{ResolvedConfig, RunArgs};

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "gcpinn", version, about = "Physics-informed networks with geometric input mappings")]
struct Cli {
    /// Worker threads for point-parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one benchmark/method pair and write convergence, metrics and checkpoints.
    Run(RunArgs),
    /// Train across values of one mapping parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Train while recording residual NTK spectra.
    Ntk(RunArgs),
    /// Run property suites and report each check.
    Check {
        /// derivatives, mappings, mms, amplification, counts or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = gcpinn_core::training::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepParameter {
    Alpha,
    Beta,
}

/// Failure classes with distinct exit codes.
enum Failure {
    Config(anyhow::Error),
    Diverged(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Divergence { .. } | Error::NonFiniteLoss { .. }) => Failure::Diverged(e),
            Some(Error::InvalidArgument(_)) => Failure::Config(e),
            _ => Failure::Other(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Run(args) => resolve(&args).and_then(|c| cmd_run(&c).map_err(Failure::from)),
        Command::Sweep { run, parameter, values } => resolve(&run).and_then(|c| cmd_sweep(&c, parameter, &values)),
        Command::Ntk(args) => resolve(&args).and_then(|c| cmd_ntk(&c).map_err(Failure::from)),
        Command::Check { suite, seed } => cmd_check(&suite, seed),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e:#}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(Failure::Diverged(e)) => {
            eprintln!("diverged: {e:#}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn resolve(args: &RunArgs) -> Result<ResolvedConfig, Failure> {
    let cfg = args.config().map_err(Failure::Config)?;
    let resolved = cfg.resolve().map_err(Failure::Config)?;
    std::fs::create_dir_all(&resolved.out)
        .with_context(|| format!("creating {}", resolved.out.display()))
        .map_err(Failure::Other)?;
    Ok(resolved)
}

/// Streams log rows into `convergence.csv`.
struct ConvergenceWriter {
    out: CsvOut,
    seed: u64,
}

impl ConvergenceWriter {
    const COLUMNS: [&'static str; 9] = ["seed", "iteration", "stage", "total", "residual", "bc", "reg", "strategy", "test_rel_l2"];

    fn row(&mut self, r: &LogRow) -> gcpinn_core::Result<()> {
        let rec = [
            self.seed.to_string(),
            r.iteration.to_string(),
            r.stage.as_str().to_string(),
            num(r.total),
            num(r.residual),
            num(r.boundary),
            num(r.regularization),
            num(r.strategy),
            r.test_rel_l2.map(num).unwrap_or_default(),
        ];
        self.out.write_record(&rec).map_err(|e| std::io::Error::other(e))?;
        Ok(())
    }
}

impl TrainingObserver for ConvergenceWriter {
    fn on_row(&mut self, row: &LogRow) -> gcpinn_core::Result<()> {
        self.row(row)
    }
}

#[derive(Serialize)]
struct SeedOutcome {
    seed: u64,
    final_loss: f64,
    lbfgs_stop: Option<String>,
}

#[derive(Serialize)]
struct MetricsBody {
    summary: TrialSummary,
    outcomes: Vec<SeedOutcome>,
}

fn stop_name(stop: LbfgsStop) -> String {
    match stop {
        LbfgsStop::MaxIterations => "max_iterations",
        LbfgsStop::GradientTolerance => "gradient_tolerance",
        LbfgsStop::LineSearchFailed => "line_search_failed",
    }
    .to_string()
}

fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("checkpoint_seed{seed}.json"))
}

#[derive(Serialize)]
struct CheckpointBody<'a> {
    checkpoint: &'a Checkpoint,
}

/// Trains one seed with `observer` attached, writes its checkpoint and
/// returns the test metrics.
fn train_seed(cfg: &ResolvedConfig, seed: u64, observer: &mut dyn TrainingObserver) -> anyhow::Result<(Model, EvaluationReport, SeedOutcome)> {
    let bench = cfg.bench();
    let schedule = cfg.schedule_for(seed);
    let mut model = cfg.method.build_model(&bench, seed, &cfg.mapping)?;
    let outcome = train(&mut model, &bench, &schedule, observer)?;
    let report = compute_metrics(&model, &bench, TEST_POINTS, &mut stream_rng(seed, STREAM_METRICS))?;
    let ckpt = model.checkpoint();
    write_json(&checkpoint_path(&cfg.out, seed), cfg, &[seed], &CheckpointBody { checkpoint: &ckpt })?;
    let final_loss = outcome.log.last().map_or(f64::NAN, |r| r.total);
    Ok((
        model,
        report,
        SeedOutcome {
            seed,
            final_loss,
            lbfgs_stop: outcome.lbfgs.map(|o| stop_name(o.stop)),
        },
    ))
}

fn train_all(cfg: &ResolvedConfig) -> anyhow::Result<(TrialSummary, Vec<SeedOutcome>)> {
    let mut conv = ConvergenceWriter {
        out: csv_with_header(&cfg.out.join("convergence.csv"), cfg, &cfg.seeds, &ConvergenceWriter::COLUMNS)?,
        seed: 0,
    };
    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for &seed in &cfg.seeds {
        conv.seed = seed;
        let (_, report, outcome) = train_seed(cfg, seed, &mut conv)?;
        conv.out.flush()?;
        println!(
            "{} {} seed {}: rel_l2 {:.4e} rel_h1 {:.4e} mse {:.4e}",
            cfg.benchmark, cfg.method, seed, report.rel_l2, report.rel_h1, report.mse
        );
        reports.push(report);
        outcomes.push(outcome);
    }
    Ok((summarize_trials(cfg.seeds.clone(), reports)?, outcomes))
}

fn cmd_run(cfg: &ResolvedConfig) -> anyhow::Result<ExitCode> {
    let (summary, outcomes) = train_all(cfg)?;
    println!(
        "mean over {} seed(s): rel_l2 {:.4e} rel_h1 {:.4e} mse {:.4e}",
        summary.seeds.len(),
        summary.mean.rel_l2,
        summary.mean.rel_h1,
        summary.mean.mse
    );
    write_json(&cfg.out.join("metrics.json"), cfg, &cfg.seeds, &MetricsBody { summary, outcomes })?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(base: &ResolvedConfig, parameter: SweepParameter, values: &[f64]) -> Result<ExitCode, Failure> {
    let (name, method) = match parameter {
        SweepParameter::Alpha => ("alpha", Method::GcRadial),
        SweepParameter::Beta => ("beta", Method::GcLocal),
    };
    if base.method != method {
        return Err(Failure::Config(anyhow::anyhow!("sweeping {name} requires --method {method}")));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Failure::Config(anyhow::anyhow!("sweep values must be positive")));
    }
    let mut table = csv_with_header(
        &base.out.join("sweep.csv"),
        base,
        &base.seeds,
        &["parameter", "value", "seed", "mse", "rel_l2", "rel_h1"],
    )
    .map_err(Failure::Other)?;
    for &v in values {
        let mut cfg = base.clone();
        match parameter {
            SweepParameter::Alpha => cfg.mapping.alpha = v,
            SweepParameter::Beta => cfg.mapping.beta = v,
        }
        cfg.out = base.out.join(format!("{name}_{v}"));
        std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Other(e.into()))?;
        let (summary, outcomes) = train_all(&cfg)?;
        for (seed, r) in summary.seeds.iter().zip(&summary.trials) {
            table
                .write_record([name.to_string(), num(v), seed.to_string(), num(r.mse), num(r.rel_l2), num(r.rel_h1)])
                .map_err(|e| Failure::Other(e.into()))?;
        }
        table.flush().map_err(|e| Failure::Other(e.into()))?;
        println!("{name} = {v}: mean rel_l2 {:.4e}", summary.mean.rel_l2);
        write_json(&cfg.out.join("metrics.json"), &cfg, &cfg.seeds, &MetricsBody { summary, outcomes })?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Records the residual NTK on a fixed point set every `NTK_EVERY` Adam
/// steps, at the end of Adam and at the scheduled end of training.
struct NtkRecorder<'a> {
    cfg: &'a ResolvedConfig,
    bench: PdeBenchmark,
    points: Vec<Vec<f64>>,
    seed: u64,
    final_step: usize,
    ranks: CsvOut,
    taken: Vec<usize>,
    conv: ConvergenceWriter,
}

impl NtkRecorder<'_> {
    fn snapshot(&mut self, step: usize, model: &Model) -> gcpinn_core::Result<()> {
        if self.taken.contains(&step) {
            return Ok(());
        }
        self.taken.push(step);
        let report = ntk_matrix(model, &self.bench, &self.points)?;
        let io = |e: anyhow::Error| Error::Io(std::io::Error::other(e));
        let seeds = [self.seed];
        let mut spectrum = csv_with_header(&self.cfg.out.join(format!("ntk_spectrum_{step}.csv")), self.cfg, &seeds, &["index", "eigenvalue"]).map_err(io)?;
        for (i, v) in report.eigenvalues.iter().enumerate() {
            spectrum.write_record([i.to_string(), num(*v)]).map_err(|e| io(e.into()))?;
        }
        spectrum.flush()?;
        let n = self.points.len();
        let cols: Vec<String> = (0..n).map(|j| format!("k{j}")).collect();
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut kern = csv_with_header(&self.cfg.out.join(format!("ntk_kernel_{step}.csv")), self.cfg, &seeds, &col_refs).map_err(io)?;
        for row in &report.kernel {
            kern.write_record(row.iter().map(|v| num(*v))).map_err(|e| io(e.into()))?;
        }
        kern.flush()?;
        self.ranks
            .write_record([step.to_string(), num(report.effective_rank)])
            .map_err(|e| io(e.into()))?;
        self.ranks.flush()?;
        println!("ntk step {step}: effective rank {:.3}", report.effective_rank);
        Ok(())
    }
}

impl TrainingObserver for NtkRecorder<'_> {
    fn on_row(&mut self, row: &LogRow) -> gcpinn_core::Result<()> {
        self.conv.row(row)
    }

    fn on_adam_step(&mut self, iteration: usize, model: &Model) -> gcpinn_core::Result<()> {
        if iteration % NTK_EVERY == 0 {
            self.snapshot(iteration, model)?;
        }
        Ok(())
    }

    fn on_stage_end(&mut self, stage: Stage, iteration: usize, model: &Model) -> gcpinn_core::Result<()> {
        match stage {
            Stage::Adam => self.snapshot(iteration, model),
            Stage::Lbfgs => self.snapshot(self.final_step, model),
        }
    }
}

fn cmd_ntk(cfg: &ResolvedConfig) -> anyhow::Result<ExitCode> {
    let seed = cfg.seeds[0];
    let bench = cfg.bench();
    let points = sample_collocation(&bench.domain, NTK_POINTS, &mut stream_rng(seed, STREAM_NTK))?;
    let mut recorder = NtkRecorder {
        cfg,
        bench,
        points,
        seed,
        final_step: cfg.schedule.adam.steps + cfg.schedule.lbfgs.steps,
        ranks: csv_with_header(&cfg.out.join("ntk_effective_rank.csv"), cfg, &[seed], &["step", "effective_rank"])?,
        taken: Vec::new(),
        conv: ConvergenceWriter {
            out: csv_with_header(&cfg.out.join("convergence.csv"), cfg, &[seed], &ConvergenceWriter::COLUMNS)?,
            seed,
        },
    };
    let (_, report, outcome) = train_seed(cfg, seed, &mut recorder)?;
    recorder.conv.out.flush()?;
    let summary = summarize_trials(vec![seed], vec![report])?;
    write_json(
        &cfg.out.join("metrics.json"),
        cfg,
        &[seed],
        &MetricsBody {
            summary,
            outcomes: vec![outcome],
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(suite: &str, seed: u64) -> Result<ExitCode, Failure> {
    let results = run_suite(suite, seed).map_err(|e| Failure::from(anyhow::Error::from(e)))?;
    let mut failed = 0;
    for r in &results {
        println!("{}", serde_json::to_string(r).map_err(|e| Failure::Other(e.into()))?);
        if !r.passed {
            failed += 1;
        }
    }
    eprintln!("{} checks, {} failed", results.len(), failed);
    if failed > 0 {
        Ok(ExitCode::from(EXIT_FAILED))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
