//! Dual (adjoint) eigenfunctions and inequality verifiers.
//!
//! The dual of the period map propagates reproductive value backward in
//! time: where the forward step scales, shifts, and deposits births, the
//! adjoint step pulls each cell's value from its successor cell (scaled
//! by the same survival factor) and adds the birth kernels weighted by
//! the age-zero value of the target phase. The two are exact matrix
//! transposes of one another, which makes the conservation law
//! `<n(t), phi(t)> * exp(-lambda t) = const` hold discretely to roundoff
//! and turns the comparison inequalities into finite-dimensional
//! statements that can be verified cell by cell.

use serde::Serialize;

use crate::eigensolver::{EigenResult, SolveOptions};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PopulationState};
use crate::model::PhaseModel;
use crate::sampling::SampledModel;
use crate::transport::Solver;

/// A cell in the space-time grid, for pinpointing where a verifier found
/// its extreme residual.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridLocation {
    pub time_index: usize,
    pub phase: usize,
    pub cell: usize,
}

/// Outcome of a pointwise inequality check over one period.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Smallest residual found (negative means a violation).
    pub min_residual: f64,
    /// `max(0, -min_residual)`.
    pub max_violation: f64,
    /// Integral of the violating part over the period and age axis.
    pub integrated_violation: f64,
    /// Where the smallest residual sits.
    pub location: Option<GridLocation>,
    /// Tolerance the check was run against.
    pub tolerance: f64,
    /// `min_residual >= -tolerance`.
    pub pass: bool,
}

/// Converged dual eigenfunction samples over one period.
#[derive(Debug, Clone)]
pub struct DualEigenfunction {
    /// Growth exponent measured by the dual iteration.
    pub lambda: f64,
    /// Growth exponent of the forward solve it was paired with.
    pub forward_lambda: f64,
    /// `samples[k][phase][cell]`: dual value at the start of step `k`,
    /// normalized so the pairing with the forward eigenfunction at the
    /// period start is one.
    pub samples: Vec<Vec<Vec<f64>>>,
    /// Periods the dual iteration needed.
    pub periods: usize,
    /// Final L1 change between successive normalized iterates.
    pub residual: f64,
}

/// Drift of the conserved pairing over repeated periods.
#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    /// Largest relative change of the invariant between consecutive
    /// periods.
    pub per_period_drift: f64,
    /// Largest relative deviation from the initial invariant.
    pub total_drift: f64,
    pub periods: usize,
    /// Log of the invariant after each period (first entry: at start).
    pub log_weights: Vec<f64>,
}

/// `sum_i sum_j a[i][j] * b[i][j] * dx`.
fn pairing(grid: &GridSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        let mut phase_sum = 0.0;
        for (x, y) in pa.iter().zip(pb) {
            phase_sum += x * y;
        }
        total += phase_sum;
    }
    total * grid.dx()
}

fn l1_measure(grid: &GridSpec, phi: &[Vec<f64>]) -> f64 {
    phi.iter()
        .map(|p| p.iter().map(|v| v.abs()).sum::<f64>())
        .sum::<f64>()
        * grid.dx()
}

/// Applies the transpose of forward step `k` to `phi` in place.
fn adjoint_apply(sampled: &SampledModel, k: usize, phi: &mut [Vec<f64>], phi0: &mut Vec<f64>) {
    let n_age = sampled.grid().n_age();
    let phases = sampled.phase_count();
    phi0.clear();
    phi0.extend(phi.iter().map(|p| p[0]));

    // Transpose of "scale by survival, shift one cell up": each cell
    // pulls its successor's value, scaled by the departure cell's own
    // survival factor. Ascending order reads the old successor values.
    for (i, p) in phi.iter_mut().enumerate() {
        for (range, factor) in sampled.decay(i).segments(k) {
            for j in range {
                p[j] = if j + 1 < n_age { factor * p[j + 1] } else { 0.0 };
            }
        }
    }
    // Transpose of the age-zero deposit: the kernel routes the target
    // phase's age-zero value back to the source cells.
    for to in 0..phases {
        let value = phi0[to];
        if value == 0.0 {
            continue;
        }
        for route in sampled.births_into(to) {
            let p = &mut phi[route.from];
            for (range, weight) in route.weights.segments(k) {
                if weight != 0.0 {
                    for j in range {
                        p[j] += weight * value;
                    }
                }
            }
        }
    }
}

/// Computes the converged dual eigenfunction of a model. Needs the
/// forward result with a captured eigenfunction, both for the
/// normalization `<N(0), phi(0)> = 1` and as the cross-check that both
/// iterations measured the same growth exponent.
pub fn adjoint_eigenfunction(
    model: &PhaseModel,
    grid: &GridSpec,
    forward: &EigenResult,
    opts: &SolveOptions,
) -> Result<DualEigenfunction> {
    let forward_samples = forward.eigenfunction.as_ref().ok_or_else(|| {
        Error::Adjoint(
            "the forward result has no captured eigenfunction; solve with \
             capture_eigenfunction enabled"
                .into(),
        )
    })?;
    let sampled = SampledModel::new(model, grid)?;
    let steps = grid.steps_per_period();
    let n_age = grid.n_age();
    let phases = sampled.phase_count();

    // The dual iteration converges in the vector itself (not just the
    // growth factor), so the per-step sample relations below close up to
    // a residual far below the verifier tolerances.
    let vector_tol = (opts.tol * 1e-3).max(1e-13);

    let mut phi = vec![vec![1.0; n_age]; phases];
    let measure = l1_measure(grid, &phi);
    for p in phi.iter_mut() {
        for v in p.iter_mut() {
            *v /= measure;
        }
    }
    let mut phi0 = Vec::new();
    let mut previous = phi.clone();
    let mut growth = 0.0;
    let mut residual = f64::INFINITY;
    let mut streak = 0;
    let mut periods = 0;
    let mut converged = false;

    while periods < opts.max_periods {
        for k in (0..steps).rev() {
            adjoint_apply(&sampled, k, &mut phi, &mut phi0);
        }
        periods += 1;
        growth = l1_measure(grid, &phi);
        if growth <= 0.0 || !growth.is_finite() {
            return Err(Error::DegenerateModel(
                "the dual population vanished or blew up within one period".into(),
            ));
        }
        let inv = 1.0 / growth;
        for p in phi.iter_mut() {
            for v in p.iter_mut() {
                *v *= inv;
            }
        }
        residual = phi
            .iter()
            .zip(&previous)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            * grid.dx();
        if residual <= vector_tol {
            streak += 1;
        } else {
            streak = 0;
        }
        previous.clone_from(&phi);
        if streak >= 2 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            max_periods: opts.max_periods,
            residual,
        });
    }
    let lambda = growth.ln() / grid.period();

    // Rebuild the within-period samples from the converged vector: each
    // step satisfies phi[k] = exp(-lambda dt) * (step k)^T phi[k+1]
    // exactly by construction, with the periodic closure at k = 0 held by
    // the converged iteration itself.
    let discount = (-lambda * grid.dt()).exp();
    let mut samples = vec![Vec::new(); steps];
    samples[0] = phi.clone();
    let mut running = phi;
    for k in (1..steps).rev() {
        adjoint_apply(&sampled, k, &mut running, &mut phi0);
        for p in running.iter_mut() {
            for v in p.iter_mut() {
                *v *= discount;
            }
        }
        samples[k] = running.clone();
    }

    for (k, sample) in samples.iter().enumerate() {
        for (i, p) in sample.iter().enumerate() {
            if let Some(j) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Adjoint(format!(
                    "dual sample went negative or non-finite at step {k}, phase {i}, cell {j}"
                )));
            }
        }
    }

    let scale = pairing(grid, &forward_samples.snapshots[0], &samples[0]);
    if !(scale > 0.0) {
        return Err(Error::Adjoint(
            "the pairing of forward and dual eigenfunctions is not positive".into(),
        ));
    }
    let inv = 1.0 / scale;
    for sample in samples.iter_mut() {
        for p in sample.iter_mut() {
            for v in p.iter_mut() {
                *v *= inv;
            }
        }
    }

    Ok(DualEigenfunction {
        lambda,
        forward_lambda: forward.lambda,
        samples,
        periods,
        residual,
    })
}

/// Evolves a population for `periods` periods and tracks the invariant
/// `<n(pT), phi(0)> * exp(-lambda pT)` (in log space, so long runs do not
/// overflow), using the dual's measured growth exponent.
pub fn check_conservation(
    model: &PhaseModel,
    grid: &GridSpec,
    dual: &DualEigenfunction,
    periods: usize,
    initial: Option<&PopulationState>,
) -> Result<ConservationReport> {
    if periods == 0 {
        return Err(Error::InsufficientData(
            "conservation needs at least one period".into(),
        ));
    }
    let solver = Solver::new(model, grid)?;
    let mut state = match initial {
        Some(s) => s.clone(),
        None => solver.default_initial_state(model),
    };
    state.normalize(grid);
    let phi0 = &dual.samples[0];

    let mut log_weights = Vec::with_capacity(periods + 1);
    let start = pairing(grid, &state.densities, phi0);
    if !(start > 0.0) {
        return Err(Error::Adjoint(
            "the initial state does not pair positively with the dual eigenfunction".into(),
        ));
    }
    log_weights.push(start.ln());
    let mut log_growth_sum = 0.0;
    for p in 1..=periods {
        let stats = solver.evolve_period(&mut state)?;
        if stats.growth <= 0.0 {
            return Err(Error::DegenerateModel(
                "the population died out during the conservation run".into(),
            ));
        }
        log_growth_sum += stats.growth.ln();
        state.normalize(grid);
        let paired = pairing(grid, &state.densities, phi0);
        if !(paired > 0.0) {
            return Err(Error::Adjoint(format!(
                "the pairing became nonpositive after period {p}"
            )));
        }
        log_weights
            .push(paired.ln() + log_growth_sum - dual.lambda * grid.period() * p as f64);
    }

    let mut per_period_drift = 0.0f64;
    let mut total_drift = 0.0f64;
    for pair in log_weights.windows(2) {
        per_period_drift = per_period_drift.max(((pair[1] - pair[0]).exp() - 1.0).abs());
    }
    for w in &log_weights[1..] {
        total_drift = total_drift.max(((w - log_weights[0]).exp() - 1.0).abs());
    }
    Ok(ConservationReport {
        per_period_drift,
        total_drift,
        periods,
        log_weights,
    })
}

/// Verifies that the given dual samples are a discrete supersolution for
/// the model at discount rate `mu`: for every step `k`, phase, and cell,
///
/// `r = (phi[k] - exp(-mu dt) * (step k)^T phi[k+1 mod S]) / dt >= 0`.
///
/// Negative residuals beyond `tolerance` fail the check.
pub fn check_subeigen_inequality(
    model: &PhaseModel,
    grid: &GridSpec,
    samples: &[Vec<Vec<f64>>],
    mu: f64,
    tolerance: f64,
) -> Result<ResidualReport> {
    let steps = grid.steps_per_period();
    if samples.len() != steps {
        return Err(Error::InsufficientData(format!(
            "expected {steps} dual samples (one per step), got {}",
            samples.len()
        )));
    }
    let sampled = SampledModel::new(model, grid)?;
    if sampled.phase_count() != samples[0].len() {
        return Err(Error::InsufficientData(
            "dual samples and model disagree on the phase count".into(),
        ));
    }
    let dt = grid.dt();
    let discount = (-mu * dt).exp();
    let mut buffer: Vec<Vec<f64>> = samples[0].clone();
    let mut phi0 = Vec::new();
    let mut min_residual = f64::INFINITY;
    let mut location = None;
    let mut integrated = 0.0;
    for k in 0..steps {
        buffer.clone_from(&samples[(k + 1) % steps]);
        adjoint_apply(&sampled, k, &mut buffer, &mut phi0);
        for (i, (own, applied)) in samples[k].iter().zip(&buffer).enumerate() {
            for (j, (a, b)) in own.iter().zip(applied).enumerate() {
                let r = (a - discount * b) / dt;
                if r < min_residual {
                    min_residual = r;
                    location = Some(GridLocation {
                        time_index: k,
                        phase: i,
                        cell: j,
                    });
                }
                if r < 0.0 {
                    integrated += -r * dt * grid.dx();
                }
            }
        }
    }
    Ok(ResidualReport {
        min_residual,
        max_violation: (-min_residual).max(0.0),
        integrated_violation: integrated,
        location,
        tolerance,
        pass: min_residual >= -tolerance,
    })
}

/// Interpolation bound between two models: the entrywise geometric blend
/// of their dual eigenfunctions, discounted at the blended rate
/// `theta * mu_1 + (1-theta) * mu_2`, must be a discrete supersolution of
/// the blended model.
#[derive(Debug, Clone, Serialize)]
pub struct BlendBoundReport {
    pub mu_first: f64,
    pub mu_second: f64,
    pub mu_blend: f64,
    pub forward_first: f64,
    pub forward_second: f64,
    pub residual: ResidualReport,
}

/// Solves both models (forward and dual), blends the duals entrywise
/// geometrically with exponent `theta`, and verifies the supersolution
/// inequality against the blended model. A passing check certifies the
/// interpolation bound `lambda(blend) <= theta mu_1 + (1-theta) mu_2` on
/// the same grid.
pub fn check_lemma_blend(
    first: &PhaseModel,
    second: &PhaseModel,
    grid: &GridSpec,
    theta: f64,
    opts: &SolveOptions,
    tolerance: f64,
) -> Result<BlendBoundReport> {
    let mut capture_opts = *opts;
    capture_opts.capture_eigenfunction = true;

    let forward_first = crate::eigensolver::floquet_eigenvalue(first, grid, &capture_opts)?;
    let dual_first = adjoint_eigenfunction(first, grid, &forward_first, opts)?;
    let forward_second = crate::eigensolver::floquet_eigenvalue(second, grid, &capture_opts)?;
    let dual_second = adjoint_eigenfunction(second, grid, &forward_second, opts)?;

    let mu_blend = theta * dual_first.lambda + (1.0 - theta) * dual_second.lambda;
    let steps = grid.steps_per_period();
    let mut blended = Vec::with_capacity(steps);
    for k in 0..steps {
        let a = &dual_first.samples[k];
        let b = &dual_second.samples[k];
        let sample: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(pa, pb)| {
                pa.iter()
                    .zip(pb)
                    .map(|(&x, &y)| {
                        if x == y {
                            x
                        } else if x <= 0.0 || y <= 0.0 {
                            0.0
                        } else {
                            x.powf(theta) * y.powf(1.0 - theta)
                        }
                    })
                    .collect()
            })
            .collect();
        blended.push(sample);
    }

    let blend_model = PhaseModel::blend(first, second, theta)?;
    let residual = check_subeigen_inequality(&blend_model, grid, &blended, mu_blend, tolerance)?;
    Ok(BlendBoundReport {
        mu_first: dual_first.lambda,
        mu_second: dual_second.lambda,
        mu_blend,
        forward_first: forward_first.lambda,
        forward_second: forward_second.lambda,
        residual,
    })
}
