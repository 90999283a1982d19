//! Command-line interface for growth-rate experiments on time-periodic
//! age-structured renewal systems.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use renewal_core::eigensolver::{
    floquet_eigenvalue, floquet_extrapolated, ConstantCellCycle, ConstantPhase, SolveOptions,
};
use renewal_core::grid::GridSpec;
use renewal_core::matrix::{blend_matrices, perron_root, BlendMode, NonnegMatrix, PerronOptions};
use renewal_core::model::{CellCyclePhase, PhaseModel};
use renewal_core::CoefficientSpec;

use renewal_cli::config::{ExperimentConfig, ExperimentKind};
use renewal_cli::{experiments, presets};

#[derive(Parser)]
#[command(
    name = "renewal",
    version,
    about = "Growth-rate experiments for time-periodic age-structured renewal systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the periodic growth rate with arithmetic and mixed averages
    Averaging(CommonArgs),
    /// Blend two models and verify growth-rate convexity along the path
    Convexity(CommonArgs),
    /// Sweep death-rate phase shifts and compare with uniform delivery
    PhaseSweep(CommonArgs),
    /// Sweep gate splits of a three-phase cycle with phase-opposed rates
    Antiphase(CommonArgs),
    /// Run the built-in solver oracles and exit nonzero on any failure
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a JSON experiment configuration
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (available: table3)
    #[arg(long)]
    preset: Option<String>,
    /// Directory receiving CSV/SVG artifacts (default: config value or ".")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiply both grid resolutions (time and age steps refine together)
    #[arg(long, default_value_t = 1.0)]
    grid_scale: f64,
    /// Exit nonzero on failed assertions or non-convergence
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Seed for the randomized oracle trials
    #[arg(long, default_value_t = 2026)]
    seed: u64,
    /// Number of randomized characteristic-equation trials
    #[arg(long, default_value_t = 6)]
    trials: usize,
}

impl CommonArgs {
    /// Materialize the configuration from `--config` or `--preset`, with the
    /// given experiment defaults when a preset is chosen.
    fn load(&self, preset_experiment: ExperimentKind) -> Result<ExperimentConfig> {
        let mut config = if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        } else if let Some(name) = &self.preset {
            match name.as_str() {
                "table3" => presets::table3_config(preset_experiment),
                other => bail!("unknown preset '{other}' (available: table3)"),
            }
        } else {
            bail!("provide either --config <path> or --preset table3");
        };
        if self.strict {
            config.strict = true;
        }
        if let Some(out) = &self.out {
            config.output = Some(out.clone());
        }
        if !(self.grid_scale.is_finite() && self.grid_scale > 0.0) {
            bail!("--grid-scale must be positive and finite");
        }
        Ok(config)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        config
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn finish(strict: bool, violations: Vec<String>) -> Result<ExitCode> {
    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} assertion(s) failed", violations.len());
        if strict {
            Ok(ExitCode::FAILURE)
        } else {
            eprintln!("(non-strict mode: exit code stays 0)");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_averaging(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.load(ExperimentKind::Averaging)?;
    if !matches!(config.experiment, ExperimentKind::Averaging) {
        bail!("config describes a different experiment; run the matching subcommand");
    }
    let grid = config.grid.resolve(&config.model, args.grid_scale)?;
    let out = args.out_dir(&config);
    let (_, outcome) = experiments::run_averaging_comparison(&config, &grid, &out)?;
    finish(config.strict, outcome.violations)
}

fn run_convexity(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.load(ExperimentKind::Convexity {
        second_model: None,
        theta_samples: 21,
    })?;
    let (second_model, theta_samples) = match &config.experiment {
        ExperimentKind::Convexity {
            second_model,
            theta_samples,
        } => (second_model.clone(), *theta_samples),
        _ => bail!("config describes a different experiment; run the matching subcommand"),
    };
    let grid = config.grid.resolve(&config.model, args.grid_scale)?;
    let out = args.out_dir(&config);
    let (_, outcome) = experiments::run_convexity_sweep(
        &config,
        &grid,
        &out,
        second_model.as_ref(),
        theta_samples,
    )?;
    finish(config.strict, outcome.violations)
}

fn run_phase_sweep(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.load(ExperimentKind::PhaseSweep {
        samples: 48,
        shift_all: false,
    })?;
    let (samples, shift_all) = match &config.experiment {
        ExperimentKind::PhaseSweep { samples, shift_all } => (*samples, *shift_all),
        _ => bail!("config describes a different experiment; run the matching subcommand"),
    };
    let grid = config.grid.resolve(&config.model, args.grid_scale)?;
    let out = args.out_dir(&config);
    let (_, outcome) = experiments::run_phase_sweep(&config, &grid, &out, samples, shift_all)?;
    finish(config.strict, outcome.violations)
}

fn run_antiphase(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.load(ExperimentKind::Antiphase {
        samples: 22,
        amplitude: 0.8,
        mitosis_fraction: 1.0 / 24.0,
        base_rate: 10.0,
    })?;
    let (samples, amplitude, mitosis_fraction, base_rate) = match &config.experiment {
        ExperimentKind::Antiphase {
            samples,
            amplitude,
            mitosis_fraction,
            base_rate,
        } => (*samples, *amplitude, *mitosis_fraction, *base_rate),
        _ => bail!("config describes a different experiment; run the matching subcommand"),
    };
    let out = args.out_dir(&config);
    let (_, outcome) = experiments::run_antiphase_experiment(
        &config,
        args.grid_scale,
        &out,
        samples,
        amplitude,
        mitosis_fraction,
        base_rate,
    )?;
    finish(config.strict, outcome.violations)
}

/// Analytic oracle: a one-phase ungated cycle with unit transition rate and
/// no death grows at exactly rate 1.
fn oracle_analytic() -> Result<bool> {
    let model = PhaseModel::cell_cycle(
        1.0,
        vec![CellCyclePhase::new(
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.0),
        )],
    )?;
    let grid = GridSpec::new(1.0, 2048, 10.0)?;
    let result = floquet_eigenvalue(&model, &grid, &SolveOptions::default())?;
    let err = (result.lambda - 1.0).abs();
    let pass = err <= 1e-3;
    println!(
        "analytic oracle: lambda {:+.9} vs 1.0, |error| {err:.3e} {}",
        result.lambda,
        verdict(pass)
    );
    Ok(pass)
}

/// Randomized characteristic-equation trials: Richardson-extrapolated solver
/// values against the bisection root of the renewal product equation.
fn oracle_bisection(rng: &mut ChaCha8Rng, trials: usize) -> Result<bool> {
    let opts = SolveOptions::default();
    let mut all_pass = true;
    for trial in 0..trials {
        let chain = ConstantCellCycle::new(
            (0..3)
                .map(|_| ConstantPhase {
                    rate: rng.random_range(1.0..20.0),
                    threshold: rng.random_range(0..=230u32) as f64 / 512.0,
                    death: rng.random_range(0.0..1.0),
                })
                .collect(),
        );
        let root = chain.characteristic_root()?;
        let model = chain.to_model(1.0)?;
        let max_gate = chain
            .phases
            .iter()
            .map(|p| p.threshold)
            .fold(0.0f64, f64::max);
        let slowest_decay = chain
            .phases
            .iter()
            .map(|p| root + p.death + p.rate)
            .fold(f64::INFINITY, f64::min);
        let grid = GridSpec::new(1.0, 512, max_gate + 14.0 / slowest_decay)?;
        let extrapolated = floquet_extrapolated(&model, &grid, &opts)?;
        let err = (extrapolated.lambda - root).abs();
        let pass = err <= 2e-3;
        all_pass &= pass;
        println!(
            "characteristic-equation trial {trial}: solver {:+.6} vs root {:+.6}, |error| {err:.3e} {}",
            extrapolated.lambda,
            root,
            verdict(pass)
        );
    }
    Ok(all_pass)
}

/// Matrix oracle: log-convexity of the Perron root under entrywise geometric
/// blending must never fail; the diagonal-arithmetic variant is reported but
/// carries no guarantee (counterexamples exist).
fn oracle_kingman(rng: &mut ChaCha8Rng) -> Result<bool> {
    let perron_opts = PerronOptions::default();
    let trials = 1000;
    let mut geometric_failures = 0usize;
    let mut diag_failures = 0usize;
    let mut geometric_worst = f64::INFINITY;
    let mut diag_worst = f64::INFINITY;
    for _ in 0..trials {
        let a = NonnegMatrix::new(4, (0..16).map(|_| rng.random_range(0.05..1.05)).collect())?;
        let b = NonnegMatrix::new(4, (0..16).map(|_| rng.random_range(0.05..1.05)).collect())?;
        let theta: f64 = rng.random_range(0.0..=1.0);
        let bound = theta * perron_root(&a, &perron_opts)?.ln()
            + (1.0 - theta) * perron_root(&b, &perron_opts)?.ln();
        for mode in [BlendMode::EntrywiseGeometric, BlendMode::DiagArithOffdiagGeom] {
            let c = blend_matrices(&a, &b, theta, mode)?;
            let margin = bound - perron_root(&c, &perron_opts)?.ln();
            match mode {
                BlendMode::EntrywiseGeometric => {
                    geometric_worst = geometric_worst.min(margin);
                    if margin < -1e-10 {
                        geometric_failures += 1;
                    }
                }
                BlendMode::DiagArithOffdiagGeom => {
                    diag_worst = diag_worst.min(margin);
                    if margin < -1e-10 {
                        diag_failures += 1;
                    }
                }
            }
        }
    }
    let pass = geometric_failures == 0;
    println!(
        "matrix oracle, entrywise-geometric blend: {geometric_failures}/{trials} violations, worst margin {geometric_worst:+.3e} {}",
        verdict(pass)
    );
    println!(
        "matrix oracle, diagonal-arithmetic blend: {diag_failures}/{trials} violations, worst margin {diag_worst:+.3e} (reported only; no guarantee for this variant)"
    );
    Ok(pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run_oracle_check(args: &OracleArgs) -> Result<ExitCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut pass = oracle_analytic()?;
    pass &= oracle_bisection(&mut rng, args.trials)?;
    pass &= oracle_kingman(&mut rng)?;
    println!("oracle-check: {}", verdict(pass));
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_default_env()
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Averaging(args) => run_averaging(args),
        Command::Convexity(args) => run_convexity(args),
        Command::PhaseSweep(args) => run_phase_sweep(args),
        Command::Antiphase(args) => run_antiphase(args),
        Command::OracleCheck(args) => run_oracle_check(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
