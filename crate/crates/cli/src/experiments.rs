//! Experiment runners: averaging comparison, convexity sweep, phase sweep,
//! and the antiphase gating study. Each runner computes its eigenvalues,
//! writes deterministic CSV artifacts, prints a summary, and returns the
//! list of violated assertions (empty when everything holds).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use renewal_core::coefficients::CoefficientSpec;
use renewal_core::eigensolver::{
    floquet_eigenvalue, mixed_eigenvalue, perron_eigenvalue, EigenResult, SolveOptions,
};
use renewal_core::grid::GridSpec;
use renewal_core::model::{CellCyclePhase, PhaseModel};
use renewal_core::Error;

use crate::config::ExperimentConfig;
use crate::svg;

/// One sweep sample.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub parameter: f64,
    pub lambda: f64,
    pub converged: bool,
}

/// Sweep summary statistics, computed over converged rows only.
#[derive(Debug, Clone, Copy)]
pub struct SweepSummary {
    /// Growth rate of the uniform-delivery comparator.
    pub lambda_u: f64,
    /// Mean of the sweep curve.
    pub mean_lambda: f64,
    /// Fraction of shifts whose growth rate is at or above the comparator.
    pub fraction_at_or_above: f64,
}

/// Result of a parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Option<SweepSummary>,
}

/// Artifacts and violated assertions accumulated by a runner.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub violations: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutcome {
    fn violate(&mut self, message: String) {
        eprintln!("assertion failed: {message}");
        self.violations.push(message);
    }
}

fn write_artifact(outcome: &mut RunOutcome, dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    outcome.artifacts.push(path.clone());
    Ok(path)
}

/// Solve one sweep row, mapping power-iteration non-convergence to a flagged
/// row instead of an error.
fn solve_row(model: &PhaseModel, grid: &GridSpec, opts: &SolveOptions) -> Result<(f64, bool)> {
    match floquet_eigenvalue(model, grid, opts) {
        Ok(result) => Ok((result.lambda, true)),
        Err(Error::NonConvergence { .. }) => Ok((f64::NAN, false)),
        Err(other) => Err(other.into()),
    }
}

/// Report from the averaging comparison.
#[derive(Debug, Clone, Copy)]
pub struct AveragingReport {
    pub lambda_floquet: f64,
    pub lambda_perron: f64,
    pub lambda_mixed: f64,
}

/// Compute the periodic growth rate and the two averaged ones, assert that
/// the mixed average is a lower bound for both, and report how the periodic
/// and fully averaged rates compare (no assertion: neither dominates in
/// general).
pub fn run_averaging_comparison(
    config: &ExperimentConfig,
    grid: &GridSpec,
    out_dir: &Path,
) -> Result<(AveragingReport, RunOutcome)> {
    let mut outcome = RunOutcome::default();
    let opts = config.tolerances.solve_options(config.strict);
    let floquet = floquet_eigenvalue(&config.model, grid, &opts)?;
    let perron = perron_eigenvalue(&config.model, grid, &opts)?;
    let mixed = mixed_eigenvalue(&config.model, grid, &opts)?;
    let report = AveragingReport {
        lambda_floquet: floquet.lambda,
        lambda_perron: perron.lambda,
        lambda_mixed: mixed.lambda,
    };
    let slack = config.tolerances.inequality_slack;

    println!("lambda_floquet = {:+.9}", report.lambda_floquet);
    println!("lambda_perron  = {:+.9}", report.lambda_perron);
    println!("lambda_mixed   = {:+.9}", report.lambda_mixed);
    let ordering = if report.lambda_floquet > report.lambda_perron {
        "periodic > averaged"
    } else if report.lambda_floquet < report.lambda_perron {
        "periodic < averaged"
    } else {
        "periodic = averaged"
    };
    println!("ordering: {ordering} (no general inequality holds between the two)");

    if report.lambda_mixed > report.lambda_floquet + slack {
        outcome.violate(format!(
            "lambda_mixed {:+.9} exceeds lambda_floquet {:+.9} beyond slack {slack:e}",
            report.lambda_mixed, report.lambda_floquet
        ));
    }
    if report.lambda_mixed > report.lambda_perron + slack {
        outcome.violate(format!(
            "lambda_mixed {:+.9} exceeds lambda_perron {:+.9} beyond slack {slack:e}",
            report.lambda_mixed, report.lambda_perron
        ));
    }

    let mut csv = String::from("quantity,value\n");
    csv.push_str(&format!("lambda_floquet,{:.12e}\n", report.lambda_floquet));
    csv.push_str(&format!("lambda_perron,{:.12e}\n", report.lambda_perron));
    csv.push_str(&format!("lambda_mixed,{:.12e}\n", report.lambda_mixed));
    write_artifact(&mut outcome, out_dir, "averaging.csv", &csv)?;
    write_artifact(
        &mut outcome,
        out_dir,
        "trajectory.csv",
        &trajectory_csv(&floquet, grid.period()),
    )?;
    Ok((report, outcome))
}

/// Per-period solver diagnostics: the growth factor of each iterated period,
/// the running mass rescaled by the measured growth rate, and the mass
/// fraction lost at the age cutoff.
fn trajectory_csv(result: &EigenResult, period: f64) -> String {
    let mut csv = String::from("period_index,growth_factor,scaled_mass,spill_fraction\n");
    let mut log_mass = 0.0;
    for (k, (growth, spill)) in result
        .growth_factors
        .iter()
        .zip(&result.spill_fractions)
        .enumerate()
    {
        log_mass += growth.ln() - result.lambda * period;
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e}\n",
            k + 1,
            growth,
            log_mass.exp(),
            spill
        ));
    }
    csv
}

/// Sweep the blend parameter from the partner model (theta = 0) to the
/// configured model (theta = 1) and assert the growth rate never exceeds
/// the chord between the endpoint rates.
pub fn run_convexity_sweep(
    config: &ExperimentConfig,
    grid: &GridSpec,
    out_dir: &Path,
    second_model: Option<&PhaseModel>,
    theta_samples: usize,
) -> Result<(SweepResult, RunOutcome)> {
    if theta_samples < 2 {
        bail!("theta_samples must be at least 2 (endpoints), got {theta_samples}");
    }
    let mut outcome = RunOutcome::default();
    let opts = config.tolerances.solve_options(config.strict);
    let first = &config.model;
    let default_partner;
    let second = match second_model {
        Some(m) => m,
        None => {
            default_partner = first.shift_all(first.period() / 2.0);
            println!("partner model: the configured model shifted by half a period");
            &default_partner
        }
    };
    let lambda_first = floquet_eigenvalue(first, grid, &opts)?.lambda;
    let lambda_second = floquet_eigenvalue(second, grid, &opts)?.lambda;
    println!("endpoint growth rates: theta=1 -> {lambda_first:+.9}, theta=0 -> {lambda_second:+.9}");

    let slack = config.tolerances.inequality_slack;
    let rows: Vec<(SweepRow, f64)> = (0..theta_samples)
        .into_par_iter()
        .map(|j| -> Result<(SweepRow, f64)> {
            let theta = j as f64 / (theta_samples - 1) as f64;
            let blended = PhaseModel::blend(first, second, theta)?;
            let (lambda, converged) = solve_row(&blended, grid, &opts)?;
            let chord = theta * lambda_first + (1.0 - theta) * lambda_second;
            Ok((
                SweepRow {
                    parameter: theta,
                    lambda,
                    converged,
                },
                chord,
            ))
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("theta,lambda,chord,margin\n");
    for (row, chord) in &rows {
        let margin = chord - row.lambda;
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e}\n",
            row.parameter, row.lambda, chord, margin
        ));
        if !row.converged {
            outcome.violate(format!(
                "blend solve at theta {:.6} did not converge",
                row.parameter
            ));
        } else if row.lambda > chord + slack {
            outcome.violate(format!(
                "convexity violated at theta {:.6}: lambda {:+.9} above chord {:+.9} beyond slack {slack:e}",
                row.parameter, row.lambda, chord
            ));
        }
    }
    write_artifact(&mut outcome, out_dir, "convexity.csv", &csv)?;

    let worst = rows
        .iter()
        .filter(|(row, _)| row.converged)
        .map(|(row, chord)| chord - row.lambda)
        .fold(f64::INFINITY, f64::min);
    println!("smallest chord margin: {worst:+.3e} (negative would violate convexity)");
    Ok((
        SweepResult {
            rows: rows.into_iter().map(|(row, _)| row).collect(),
            summary: None,
        },
        outcome,
    ))
}

/// Sweep the phase of the death rates over one period and compare against
/// uniform delivery (deaths replaced by their arithmetic time averages).
pub fn run_phase_sweep(
    config: &ExperimentConfig,
    grid: &GridSpec,
    out_dir: &Path,
    samples: usize,
    shift_all: bool,
) -> Result<(SweepResult, RunOutcome)> {
    if samples == 0 {
        bail!("phase sweep needs at least one sample");
    }
    let mut outcome = RunOutcome::default();
    let opts = config.tolerances.solve_options(config.strict);
    let period = config.model.period();

    let uniform = config
        .model
        .freeze_deaths_arithmetic(grid.steps_per_period());
    let lambda_u = floquet_eigenvalue(&uniform, grid, &opts)?.lambda;

    let rows: Vec<SweepRow> = (0..samples)
        .into_par_iter()
        .map(|k| -> Result<SweepRow> {
            let phi = k as f64 * period / samples as f64;
            let shifted = if shift_all {
                config.model.shift_all(phi)
            } else {
                config.model.shift_deaths(phi)
            };
            let (lambda, converged) = solve_row(&shifted, grid, &opts)?;
            Ok(SweepRow {
                parameter: phi,
                lambda,
                converged,
            })
        })
        .collect::<Result<_>>()?;

    let converged: Vec<&SweepRow> = rows.iter().filter(|r| r.converged).collect();
    for row in rows.iter().filter(|r| !r.converged) {
        outcome.violate(format!(
            "sweep solve at phase {:.6} did not converge",
            row.parameter
        ));
    }
    if converged.is_empty() {
        bail!("no phase-sweep row converged");
    }
    let mean = converged.iter().map(|r| r.lambda).sum::<f64>() / converged.len() as f64;
    let at_or_above =
        converged.iter().filter(|r| r.lambda >= lambda_u).count() as f64 / converged.len() as f64;
    let min = converged.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let max = converged
        .iter()
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max);

    println!("lambda_u (uniform delivery) = {lambda_u:+.9}");
    println!(
        "phase curve: mean {mean:+.9}, range [{min:+.9}, {max:+.9}], {} / {} rows converged",
        converged.len(),
        rows.len()
    );
    println!(
        "fraction of shifts with lambda(phi) >= lambda_u: {:.4} ({})",
        at_or_above,
        if at_or_above > 0.5 {
            "majority of shifts grow at least as fast as uniform delivery"
        } else {
            "majority of shifts grow slower than uniform delivery"
        }
    );

    let slack = config.tolerances.inequality_slack;
    if shift_all {
        println!("shift-all exploration mode: mean-comparison assertions skipped");
    } else {
        if lambda_u > mean + slack {
            outcome.violate(format!(
                "uniform delivery rate {lambda_u:+.9} exceeds sweep mean {mean:+.9} beyond slack {slack:e}"
            ));
        }
        if min < lambda_u && max <= lambda_u {
            outcome.violate(format!(
                "some shift improves on uniform delivery (min {min:+.9}) but none grows faster (max {max:+.9})"
            ));
        }
    }

    let mut csv = String::from("phi,lambda,converged,lambda_u\n");
    for row in &rows {
        csv.push_str(&format!(
            "{:.12e},{:.12e},{},{:.12e}\n",
            row.parameter,
            row.lambda,
            u8::from(row.converged),
            lambda_u
        ));
    }
    let csv_path = write_artifact(&mut outcome, out_dir, "phase_sweep.csv", &csv)?;
    let csv_bytes = fs::read_to_string(&csv_path)?;
    match svg::render_sweep_svg(&csv_bytes) {
        Ok(svg_text) => {
            write_artifact(&mut outcome, out_dir, "phase_sweep.svg", &svg_text)?;
        }
        Err(err) => outcome.violate(format!("plot rendering failed: {err}")),
    }

    Ok((
        SweepResult {
            rows,
            summary: Some(SweepSummary {
                lambda_u,
                mean_lambda: mean,
                fraction_at_or_above: at_or_above,
            }),
        },
        outcome,
    ))
}

/// One antiphase-study sample.
#[derive(Debug, Clone, Copy)]
pub struct AntiphaseRow {
    pub gate_first: f64,
    pub gate_second: f64,
    pub lambda_floquet: f64,
    pub lambda_perron: f64,
    pub converged: bool,
}

/// Build the three-phase cycle with phase-opposed oscillating transition
/// rates: rate `base(1 + amplitude cos)` gated at `gate_first`, rate
/// `base(1 − amplitude cos)` gated at `gate_second`, and a constant-rate
/// division phase gated at the fixed mitosis duration. Deaths are zero.
pub fn antiphase_model(
    period: f64,
    base_rate: f64,
    amplitude: f64,
    gate_first: f64,
    gate_second: f64,
    mitosis_gate: f64,
) -> renewal_core::Result<PhaseModel> {
    let zero = CoefficientSpec::constant(0.0);
    PhaseModel::cell_cycle(
        period,
        vec![
            CellCyclePhase::gated(
                CoefficientSpec::cosine(period, base_rate, base_rate * amplitude, 0.0),
                gate_first,
                zero.clone(),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::cosine(period, base_rate, -base_rate * amplitude, 0.0),
                gate_second,
                zero.clone(),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::constant(base_rate),
                mitosis_gate,
                zero,
            ),
        ],
    )
}

/// Sweep the split of gated duration between the two opposed phases while
/// holding the total (including the fixed division phase) at one period.
/// Reports the sign of periodic-minus-averaged per point; nothing is
/// asserted, as no ordering theorem covers this family.
pub fn run_antiphase_experiment(
    config: &ExperimentConfig,
    grid_scale: f64,
    out_dir: &Path,
    samples: usize,
    amplitude: f64,
    mitosis_fraction: f64,
    base_rate: f64,
) -> Result<(Vec<AntiphaseRow>, RunOutcome)> {
    if config.model.phase_count() != 3 {
        bail!(
            "the antiphase study is defined for three-phase cycles, got {} phases",
            config.model.phase_count()
        );
    }
    if !(0.0..1.0).contains(&amplitude) {
        bail!("amplitude must lie in [0, 1), got {amplitude}");
    }
    if samples == 0 {
        bail!("antiphase sweep needs at least one sample");
    }
    let mut outcome = RunOutcome::default();
    let opts = config.tolerances.solve_options(config.strict);
    let period = config.model.period();
    let mitosis_gate = mitosis_fraction * period;
    let swept_total = period - mitosis_gate;
    if swept_total <= 0.0 {
        bail!("mitosis fraction {mitosis_fraction} leaves no duration for the other phases");
    }
    let lattice = swept_total / (samples + 1) as f64;
    println!(
        "antiphase sweep: {samples} splits of {swept_total:.6} time units, division gate {mitosis_gate:.6}, amplitude {amplitude}"
    );

    let rows: Vec<AntiphaseRow> = (1..=samples)
        .into_par_iter()
        .map(|j| -> Result<AntiphaseRow> {
            let gate_first = j as f64 * lattice;
            let gate_second = swept_total - gate_first;
            let model = antiphase_model(
                period,
                base_rate,
                amplitude,
                gate_first,
                gate_second,
                mitosis_gate,
            )?;
            let grid = config.grid.resolve(&model, grid_scale)?;
            let (lambda_floquet, converged_f) = solve_row(&model, &grid, &opts)?;
            let (lambda_perron, converged_p) = match perron_eigenvalue(&model, &grid, &opts) {
                Ok(r) => (r.lambda, true),
                Err(Error::NonConvergence { .. }) => (f64::NAN, false),
                Err(other) => return Err(other.into()),
            };
            Ok(AntiphaseRow {
                gate_first,
                gate_second,
                lambda_floquet,
                lambda_perron,
                converged: converged_f && converged_p,
            })
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("gate_first,gate_second,lambda_floquet,lambda_perron,delta,converged\n");
    let mut signs = (0usize, 0usize, 0usize); // (periodic faster, averaged faster, ties)
    for row in &rows {
        let delta = row.lambda_floquet - row.lambda_perron;
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            row.gate_first,
            row.gate_second,
            row.lambda_floquet,
            row.lambda_perron,
            delta,
            u8::from(row.converged)
        ));
        if !row.converged {
            outcome.violate(format!(
                "antiphase solve at split {:.6} did not converge",
                row.gate_first
            ));
        } else if delta > 0.0 {
            signs.0 += 1;
        } else if delta < 0.0 {
            signs.1 += 1;
        } else {
            signs.2 += 1;
        }
    }
    write_artifact(&mut outcome, out_dir, "antiphase.csv", &csv)?;
    println!(
        "sign table: periodic faster at {} splits, averaged faster at {}, equal at {} (reported, not asserted)",
        signs.0, signs.1, signs.2
    );
    Ok((rows, outcome))
}
