//! Growth-eigenvalue extraction.
//!
//! The leading growth exponent of a periodic model is found by power
//! iteration on the period map: evolve one period, record the mass growth
//! factor `g`, renormalize, and repeat until `log g` settles. The
//! eigenvalue is `log(g) / period`.
//!
//! The same routine applied to the time-averaged companion models gives
//! the arithmetic-average eigenvalue and the mixed (geometric births)
//! eigenvalue used in the comparison theorems.
//!
//! For constant-coefficient cell-cycle chains the eigenvalue also solves
//! a scalar renewal equation; [`ConstantCellCycle::characteristic_root`]
//! evaluates it by bisection and serves as an independent accuracy
//! reference for the transport solver.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PopulationState};
use crate::model::{CellCyclePhase, PhaseModel};
use crate::transport::Solver;

/// Options controlling the power iteration.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Convergence tolerance on the per-period change of `log g`,
    /// relative to `max(1, |log g|)`.
    pub tol: f64,
    /// Maximum number of periods before giving up.
    pub max_periods: usize,
    /// Capture the converged periodic eigenfunction (one snapshot per
    /// step of a final extra period).
    pub capture_eigenfunction: bool,
    /// Largest tolerated truncation spill per period, relative to the
    /// end-of-period mass.
    pub spill_limit: f64,
    /// Turn an exceeded spill limit into an error instead of a warning.
    pub strict_spill: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_periods: 2000,
            capture_eigenfunction: false,
            spill_limit: 1e-8,
            strict_spill: false,
        }
    }
}

/// Periodic eigenfunction samples: `snapshots[k]` is the density table
/// (phase by age cell) at the start of step `k` of one converged period,
/// normalized to unit mass at `k = 0`.
#[derive(Debug, Clone)]
pub struct EigenfunctionSamples {
    pub snapshots: Vec<Vec<Vec<f64>>>,
    /// Growth factor of the captured period.
    pub growth: f64,
}

/// Outcome of a growth-eigenvalue solve.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Growth exponent `log(g) / period`.
    pub lambda: f64,
    /// Mass growth factor of each evolved period.
    pub growth_factors: Vec<f64>,
    /// Truncation spill of each period, relative to end-of-period mass.
    pub spill_fractions: Vec<f64>,
    /// Number of periods evolved.
    pub periods: usize,
    /// Final relative change of `log g`.
    pub residual: f64,
    /// Whether any period spilled more than the configured limit.
    pub truncation_warning: bool,
    /// Normalized period-start state after convergence.
    pub final_state: PopulationState,
    /// Captured eigenfunction, if requested.
    pub eigenfunction: Option<EigenfunctionSamples>,
}

/// Leading growth exponent of the periodic model by power iteration on
/// the period map.
pub fn floquet_eigenvalue(
    model: &PhaseModel,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let solver = Solver::new(model, grid)?;
    let mut state = solver.default_initial_state(model);
    state.normalize(grid);

    let mut growth_factors = Vec::new();
    let mut spill_fractions = Vec::new();
    let mut truncation_warning = false;
    let mut streak = 0usize;
    let mut residual = f64::INFINITY;
    let mut prev_log_g: Option<f64> = None;
    let mut converged = false;

    while growth_factors.len() < opts.max_periods {
        let stats = solver.evolve_period(&mut state)?;
        if stats.growth <= 0.0 {
            return Err(Error::DegenerateModel(
                "the population died out within one period; no growth factor exists".into(),
            ));
        }
        growth_factors.push(stats.growth);
        spill_fractions.push(stats.spill_fraction);
        if stats.spill_fraction > opts.spill_limit {
            if opts.strict_spill {
                return Err(Error::TruncationExceeded {
                    spill: stats.spill_fraction,
                    limit: opts.spill_limit,
                });
            }
            if !truncation_warning {
                log::warn!(
                    "age-axis truncation spill {:e} exceeds {:e} per period; \
                     enlarge the age span for trustworthy results",
                    stats.spill_fraction,
                    opts.spill_limit
                );
            }
            truncation_warning = true;
        }
        state.normalize(grid);

        let log_g = stats.growth.ln();
        if let Some(prev) = prev_log_g {
            residual = (log_g - prev).abs() / log_g.abs().max(1.0);
            if residual <= opts.tol {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        prev_log_g = Some(log_g);
        if streak >= 3 {
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

    let final_state = state.clone();
    let eigenfunction = if opts.capture_eigenfunction {
        let mut snapshots = Vec::new();
        let stats = solver.evolve_period_with_snapshots(&mut state, &mut snapshots)?;
        Some(EigenfunctionSamples {
            snapshots,
            growth: stats.growth,
        })
    } else {
        None
    };

    let lambda = growth_factors.last().unwrap().ln() / grid.period();
    Ok(EigenResult {
        lambda,
        periods: growth_factors.len(),
        growth_factors,
        spill_fractions,
        residual,
        truncation_warning,
        final_state,
        eigenfunction,
    })
}

/// Growth exponent of the arithmetically time-averaged companion model.
/// The averages are taken with one quadrature node per solver time step,
/// so they coincide with the row averages of the sampled tables.
pub fn perron_eigenvalue(
    model: &PhaseModel,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let averaged = model.averaged_arithmetic(grid.steps_per_period());
    floquet_eigenvalue(&averaged, grid, opts)
}

/// Growth exponent of the mixed companion model (loss rates averaged
/// arithmetically, birth kernels geometrically).
pub fn mixed_eigenvalue(
    model: &PhaseModel,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let averaged = model.averaged_mixed(grid.steps_per_period());
    floquet_eigenvalue(&averaged, grid, opts)
}

/// A Richardson pair: the grid's eigenvalue, the doubled grid's, and the
/// first-order extrapolation `2*fine - coarse`.
#[derive(Debug, Clone)]
pub struct ExtrapolatedEigenvalue {
    pub lambda: f64,
    pub coarse: EigenResult,
    pub fine: EigenResult,
}

/// Solves on `grid` and on the grid refined by two, and removes the
/// leading first-order discretization bias by Richardson extrapolation.
pub fn floquet_extrapolated(
    model: &PhaseModel,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<ExtrapolatedEigenvalue> {
    let coarse = floquet_eigenvalue(model, grid, opts)?;
    let fine_grid = grid.scaled(2.0)?;
    let fine = floquet_eigenvalue(model, &fine_grid, opts)?;
    Ok(ExtrapolatedEigenvalue {
        lambda: 2.0 * fine.lambda - coarse.lambda,
        coarse,
        fine,
    })
}

/// One phase of a constant-coefficient cell-cycle chain.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPhase {
    /// Transition rate once the age gate is open.
    pub rate: f64,
    /// Age at which the transition switches on.
    pub threshold: f64,
    /// Background death rate.
    pub death: f64,
}

/// A cell-cycle chain with constant coefficients, whose growth exponent
/// solves a scalar characteristic equation in closed form.
#[derive(Debug, Clone)]
pub struct ConstantCellCycle {
    pub phases: Vec<ConstantPhase>,
}

impl ConstantCellCycle {
    pub fn new(phases: Vec<ConstantPhase>) -> Self {
        Self { phases }
    }

    /// The equivalent [`PhaseModel`] (the period is arbitrary for
    /// constant coefficients; it only sets the solver's bookkeeping).
    pub fn to_model(&self, period: f64) -> Result<PhaseModel> {
        let phases = self
            .phases
            .iter()
            .map(|p| {
                let rate = crate::coefficients::CoefficientSpec::constant(p.rate);
                let death = crate::coefficients::CoefficientSpec::constant(p.death);
                if p.threshold > 0.0 {
                    CellCyclePhase::gated(rate, p.threshold, death)
                } else {
                    CellCyclePhase::new(rate, death)
                }
            })
            .collect();
        PhaseModel::cell_cycle(period, phases)
    }

    /// Log of the renewal functional at growth exponent `z`: starting one
    /// cell in phase 0 at age 0, the expected number of (doubled) progeny
    /// re-entering phase 0, discounted at rate `z`, is `exp(log_f(z))`.
    /// The growth exponent is the root of `log_f` and the functional is
    /// strictly decreasing, because each phase contributes
    /// `rate / (z + death + rate) * exp(-(z + death) * threshold)`.
    fn log_f(&self, z: f64) -> f64 {
        let mut total = std::f64::consts::LN_2;
        for p in &self.phases {
            total += p.rate.ln() - (z + p.death) * p.threshold - (z + p.death + p.rate).ln();
        }
        total
    }

    /// Solves the characteristic equation by bracketing and bisection to
    /// near machine precision.
    pub fn characteristic_root(&self) -> Result<f64> {
        if self.phases.is_empty() {
            return Err(Error::InsufficientData("no phases given".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.rate.is_finite() && p.rate > 0.0)
                || !(p.death.is_finite() && p.death >= 0.0)
                || !(p.threshold.is_finite() && p.threshold >= 0.0)
            {
                return Err(Error::InvalidCoefficient {
                    node: "constant_phase",
                    detail: format!(
                        "phase {i} needs rate > 0, death >= 0, threshold >= 0 \
                         (got rate {}, death {}, threshold {})",
                        p.rate, p.death, p.threshold
                    ),
                });
            }
        }
        // The functional blows up as z approaches -(death + rate) of the
        // slowest phase from above, and decays to -infinity as z grows.
        let floor = self
            .phases
            .iter()
            .map(|p| p.death + p.rate)
            .fold(f64::INFINITY, f64::min);
        let mut lo = -floor + 1e-9 * floor.max(1.0);
        let mut shrink = 0;
        while self.log_f(lo) <= 0.0 {
            lo = -floor + (lo + floor) * 1e-3;
            shrink += 1;
            if shrink > 5 {
                return Err(Error::BracketFailure(
                    "the renewal functional never exceeds one near its pole".into(),
                ));
            }
        }
        let mut hi = lo + 1.0;
        let mut doublings = 0;
        while self.log_f(hi) > 0.0 {
            hi = lo + 2.0 * (hi - lo);
            doublings += 1;
            if doublings > 60 {
                return Err(Error::BracketFailure(
                    "no upper bracket for the growth exponent".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.log_f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn ungated_single_phase_root_is_the_rate() {
        // With no gate and no death the characteristic equation reads
        // 2 rate / (z + rate) = 1, so z = rate.
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 1.5,
            threshold: 0.0,
            death: 0.0,
        }]);
        let root = chain.characteristic_root().unwrap();
        assert!((root - 1.5).abs() < 1e-12, "got {root}");
    }

    #[test]
    fn root_moves_with_the_coefficients() {
        let base = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 2.0,
            threshold: 0.5,
            death: 0.3,
        }]);
        let root = base.characteristic_root().unwrap();
        assert!((base.log_f(root)).abs() < 1e-10);
        // Faster transitions grow faster; more death grows slower.
        let faster = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 3.0,
            threshold: 0.5,
            death: 0.3,
        }]);
        assert!(faster.characteristic_root().unwrap() > root);
        let deadlier = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 2.0,
            threshold: 0.5,
            death: 0.8,
        }]);
        assert!(deadlier.characteristic_root().unwrap() < root);
    }

    #[test]
    fn multi_phase_root_satisfies_the_equation() {
        let chain = ConstantCellCycle::new(vec![
            ConstantPhase {
                rate: 12.0,
                threshold: 10.0 / 24.0,
                death: 0.4,
            },
            ConstantPhase {
                rate: 9.0,
                threshold: 0.3,
                death: 0.0,
            },
            ConstantPhase {
                rate: 10.0,
                threshold: 2.0 / 24.0,
                death: 0.9,
            },
        ]);
        let root = chain.characteristic_root().unwrap();
        assert!(chain.log_f(root).abs() < 1e-10);
        assert!(root.is_finite());
    }

    #[test]
    fn power_iteration_matches_the_discrete_closed_form() {
        // For an ungated constant single phase the discrete period map
        // multiplies the mass by (exp(-(death+rate) h) + 2 rate h) every
        // step, exactly. The solver must reproduce that closed form to
        // roundoff.
        let rate = 1.0;
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate,
            threshold: 0.0,
            death: 0.25,
        }]);
        let model = chain.to_model(1.0).unwrap();
        let grid = GridSpec::new(1.0, 64, 10.0).unwrap();
        let result = floquet_eigenvalue(&model, &grid, &opts()).unwrap();
        let h = grid.dt();
        let expected = ((-(0.25 + rate) * h).exp() + 2.0 * rate * h).ln() / h;
        assert!(
            (result.lambda - expected).abs() < 1e-10,
            "solver {} vs closed form {expected}",
            result.lambda
        );
        assert!(!result.truncation_warning);
    }

    #[test]
    fn extrapolation_removes_the_grid_bias() {
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 2.0,
            threshold: 0.5,
            death: 0.3,
        }]);
        let model = chain.to_model(1.0).unwrap();
        let oracle = chain.characteristic_root().unwrap();
        let grid = GridSpec::new(1.0, 128, 6.0).unwrap();
        let extrap = floquet_extrapolated(&model, &grid, &opts()).unwrap();
        let raw_coarse = (extrap.coarse.lambda - oracle).abs();
        let raw_fine = (extrap.fine.lambda - oracle).abs();
        let corrected = (extrap.lambda - oracle).abs();
        // First-order bias: halving the step about halves the error, and
        // the extrapolation lands well inside both raw errors.
        assert!(
            raw_fine < 0.65 * raw_coarse + 1e-9,
            "raw errors {raw_coarse:e} -> {raw_fine:e}"
        );
        assert!(
            corrected < 2e-3 && corrected < 0.2 * raw_fine.max(1e-9),
            "extrapolated error {corrected:e} (raw {raw_fine:e}, oracle {oracle})"
        );
    }

    #[test]
    fn captured_eigenfunction_is_periodic_and_positive() {
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 2.0,
            threshold: 0.5,
            death: 0.0,
        }]);
        let model = chain.to_model(1.0).unwrap();
        let grid = GridSpec::new(1.0, 64, 6.0).unwrap();
        let mut options = opts();
        options.capture_eigenfunction = true;
        let result = floquet_eigenvalue(&model, &grid, &options).unwrap();
        let ef = result.eigenfunction.as_ref().unwrap();
        assert_eq!(ef.snapshots.len(), 64);
        // Unit mass at the period start.
        let mass: f64 = ef.snapshots[0][0].iter().sum::<f64>() * grid.dx();
        assert!((mass - 1.0).abs() < 1e-9);
        // The captured period's growth factor is consistent with lambda.
        assert!((ef.growth.ln() - result.lambda).abs() < 1e-6);
        // No negative densities anywhere.
        for snap in &ef.snapshots {
            for phase in snap {
                assert!(phase.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn cramped_age_axis_raises_the_truncation_flag() {
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 1.0,
            threshold: 0.5,
            death: 0.0,
        }]);
        let model = chain.to_model(1.0).unwrap();
        // The age axis barely clears the gate, so a visible share of the
        // population is pushed out through the truncation boundary.
        let grid = GridSpec::new(1.0, 64, 1.0).unwrap();
        let result = floquet_eigenvalue(&model, &grid, &opts()).unwrap();
        assert!(result.truncation_warning);
        let mut strict = opts();
        strict.strict_spill = true;
        assert!(matches!(
            floquet_eigenvalue(&model, &grid, &strict),
            Err(Error::TruncationExceeded { .. })
        ));
    }

    #[test]
    fn averaged_companions_of_a_static_model_change_nothing() {
        // A model that is already time independent is its own average, so
        // all three eigenvalues coincide to solver precision.
        let chain = ConstantCellCycle::new(vec![ConstantPhase {
            rate: 3.0,
            threshold: 0.25,
            death: 0.5,
        }]);
        let model = chain.to_model(1.0).unwrap();
        let grid = GridSpec::new(1.0, 96, 4.0).unwrap();
        let base = floquet_eigenvalue(&model, &grid, &opts()).unwrap();
        let arith = perron_eigenvalue(&model, &grid, &opts()).unwrap();
        let mixed = mixed_eigenvalue(&model, &grid, &opts()).unwrap();
        assert_eq!(base.lambda, arith.lambda);
        assert_eq!(base.lambda, mixed.lambda);
    }
}
