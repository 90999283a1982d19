//! Upwind transport on characteristics and the matched delay solver.
//!
//! One step of length `dt` does, in order:
//!
//! 1. compute the age-zero inflow of every phase from the current
//!    densities (rectangle rule over age, kernels sampled at the step's
//!    time midpoint);
//! 2. multiply every cell by its survival factor `exp(-loss * dt)` (loss
//!    sampled at the departure cell's center and the time midpoint);
//! 3. shift each phase up by exactly one cell (ages advance by `dx = dt`
//!    along characteristics); the value leaving the last cell is the
//!    truncation spill and is accounted, not silently dropped;
//! 4. deposit the inflow in age cell 0.
//!
//! Because `dt = dx`, the shift is exact and the only discretization
//! errors are the coefficient sampling and the rectangle rules.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PopulationState};
use crate::model::PhaseModel;
use crate::sampling::SampledModel;

/// What happened over one evolved period.
#[derive(Debug, Clone, Copy)]
pub struct PeriodStats {
    /// Ratio of total mass after the period to mass before it.
    pub growth: f64,
    /// Mass lost through the age-axis truncation during the period,
    /// relative to the mass at the end of the period.
    pub spill_fraction: f64,
}

/// Transport solver for one model on one grid.
#[derive(Debug, Clone)]
pub struct Solver {
    sampled: SampledModel,
}

impl Solver {
    pub fn new(model: &PhaseModel, grid: &GridSpec) -> Result<Self> {
        Ok(Self {
            sampled: SampledModel::new(model, grid)?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.sampled.grid()
    }

    pub fn phase_count(&self) -> usize {
        self.sampled.phase_count()
    }

    /// A fresh state matching this solver's grid and phase count, with
    /// unit mass spread over ages up to the largest age threshold (or a
    /// quarter of the age axis if the model has none).
    pub fn default_initial_state(&self, model: &PhaseModel) -> PopulationState {
        let upper = model
            .max_age_threshold()
            .filter(|&t| t > 0.0)
            .unwrap_or_else(|| 0.25 * self.grid().a_max());
        PopulationState::uniform_on(self.grid(), self.phase_count(), upper)
    }

    /// Advances one step (index `k` within the period). Returns the spill
    /// mass lost through the age truncation in this step.
    pub fn step(&self, state: &mut PopulationState, k: usize) -> f64 {
        let (spill, _mass) = self.step_with_inflow(state, k, &mut Vec::new());
        spill
    }

    /// Advances one step, writing the per-phase age-zero inflow into
    /// `inflow`. Returns `(spill_mass, cell_mass_after)`.
    fn step_with_inflow(
        &self,
        state: &mut PopulationState,
        k: usize,
        inflow: &mut Vec<f64>,
    ) -> (f64, f64) {
        let n_age = self.grid().n_age();
        let dx = self.grid().dx();
        let phases = self.phase_count();

        inflow.clear();
        inflow.resize(phases, 0.0);
        for (target, routes) in (0..phases).map(|t| (t, self.sampled.births_into(t))) {
            let mut total = 0.0;
            for route in routes {
                let source = &state.densities[route.from];
                for (range, weight) in route.weights.segments(k) {
                    if weight != 0.0 {
                        let sum: f64 = source[range].iter().sum();
                        total += weight * sum;
                    }
                }
            }
            inflow[target] = total;
        }

        let mut spill_cells = 0.0;
        let mut mass_cells = 0.0;
        for (i, phase) in state.densities.iter_mut().enumerate() {
            let mut survived = 0.0;
            for (range, factor) in self.sampled.decay(i).segments(k) {
                for v in &mut phase[range] {
                    *v *= factor;
                    survived += *v;
                }
            }
            let spilled = phase[n_age - 1];
            spill_cells += spilled;
            phase.copy_within(0..n_age - 1, 1);
            phase[0] = inflow[i];
            mass_cells += survived - spilled + inflow[i];
        }
        state.time += self.grid().dt();
        (spill_cells * dx, mass_cells * dx)
    }

    fn run_period(
        &self,
        state: &mut PopulationState,
        mut pre_step: Option<&mut dyn FnMut(usize, &PopulationState)>,
        mut on_inflow: Option<&mut dyn FnMut(usize, &[f64])>,
    ) -> Result<PeriodStats> {
        let steps = self.grid().steps_per_period();
        let mass_before = state.mass(self.grid());
        let mut inflow = Vec::new();
        let mut spill = 0.0;
        let mut mass_after = mass_before;
        for k in 0..steps {
            if let Some(cb) = pre_step.as_deref_mut() {
                cb(k, state);
            }
            let (step_spill, mass) = self.step_with_inflow(state, k, &mut inflow);
            spill += step_spill;
            mass_after = mass;
            if !mass_after.is_finite() {
                panic!(
                    "population mass became non-finite at step {k} of a period \
                     (model coefficients admitted an unstable value)"
                );
            }
            if let Some(cb) = on_inflow.as_deref_mut() {
                cb(k, &inflow);
            }
        }
        let growth = if mass_before > 0.0 {
            mass_after / mass_before
        } else {
            0.0
        };
        let spill_fraction = if mass_after > 0.0 { spill / mass_after } else if spill > 0.0 { f64::INFINITY } else { 0.0 };
        Ok(PeriodStats {
            growth,
            spill_fraction,
        })
    }

    /// Evolves the state through one full period.
    pub fn evolve_period(&self, state: &mut PopulationState) -> Result<PeriodStats> {
        self.run_period(state, None, None)
    }

    /// Evolves one period, appending the per-phase age-zero inflow of
    /// every step to `trace` (one vector per step).
    pub fn evolve_period_with_inflow_trace(
        &self,
        state: &mut PopulationState,
        trace: &mut Vec<Vec<f64>>,
    ) -> Result<PeriodStats> {
        let mut push = |_k: usize, inflow: &[f64]| trace.push(inflow.to_vec());
        self.run_period(state, None, Some(&mut push))
    }

    /// Evolves one period, storing a snapshot of the densities at the
    /// start of every step (`snapshots[k]` is the state entering step `k`).
    pub fn evolve_period_with_snapshots(
        &self,
        state: &mut PopulationState,
        snapshots: &mut Vec<Vec<Vec<f64>>>,
    ) -> Result<PeriodStats> {
        snapshots.clear();
        snapshots.reserve(self.grid().steps_per_period());
        let mut capture =
            |_k: usize, s: &PopulationState| snapshots.push(s.densities.clone());
        self.run_period(state, Some(&mut capture), None)
    }
}

/// Boundary trace of the equivalent renewal (delay) equation for a
/// single-phase model, computed by an independent discretization of the
/// integral formulation: each cohort's survival is tracked as an
/// accumulated exponent (summed once, exponentiated once) rather than a
/// product of per-step survival factors. Sampling points match the
/// transport solver, so the two traces agree up to roundoff; the code
/// path is deliberately disjoint.
///
/// Returns the age-zero boundary value after each of the first
/// `periods * steps_per_period` steps, starting from `initial`.
pub fn delay_boundary_trace(
    model: &PhaseModel,
    grid: &GridSpec,
    periods: usize,
    initial: &PopulationState,
) -> Result<Vec<f64>> {
    if model.phase_count() != 1 {
        return Err(Error::UnsupportedModel(format!(
            "the delay-equation solver handles exactly one phase, got {}",
            model.phase_count()
        )));
    }
    if initial.densities.len() != 1 || initial.densities[0].len() != grid.n_age() {
        return Err(Error::Grid(
            "initial state does not match the grid".into(),
        ));
    }
    let dt = grid.dt();
    let dx = grid.dx();
    let n_age = grid.n_age();
    let steps = grid.steps_per_period();

    // Loss exponents per step (loss * dt) and birth weights (kernel * dx),
    // sampled exactly like the transport solver.
    let loss = crate::sampling::PiecewiseRow::sample(&model.losses()[0], grid, |v| v * dt)?;
    let birth_specs = model.births();
    if birth_specs.len() != 1 || birth_specs[0].from != 0 || birth_specs[0].to != 0 {
        return Err(Error::UnsupportedModel(
            "the delay-equation solver needs the single self-renewal route 0 -> 0".into(),
        ));
    }
    let weights = crate::sampling::PiecewiseRow::sample(&birth_specs[0].spec, grid, |v| v * dx)?;

    // Cohort representation: cell j holds a member born with value
    // origin[j] whose accumulated loss exponent is exponent[j].
    let mut origin = initial.densities[0].clone();
    let mut exponent = vec![0.0f64; n_age];
    let mut trace = Vec::with_capacity(periods * steps);

    for step_index in 0..periods * steps {
        let k = step_index % steps;
        // Renewal integral: sum of kernel * surviving density over age.
        let row_w = weights.row(k);
        let mut inflow = 0.0;
        for (piece, (range, _)) in weights.segments(k).enumerate() {
            let w = row_w[piece];
            if w == 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for j in range {
                sum += origin[j] * (-exponent[j]).exp();
            }
            inflow += w * sum;
        }
        // Each cohort ages one cell and accumulates the exponent of its
        // departure cell; the oldest cohort leaves the domain.
        for (range, l) in loss.segments(k) {
            for j in range {
                exponent[j] += l;
            }
        }
        origin.copy_within(0..n_age - 1, 1);
        exponent.copy_within(0..n_age - 1, 1);
        origin[0] = inflow;
        exponent[0] = 0.0;
        trace.push(inflow);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSpec;
    use crate::model::{BirthEntry, CellCyclePhase};

    fn pure_decay(rate: f64) -> PhaseModel {
        PhaseModel::general_allowing_pure_decay(
            1.0,
            vec![CoefficientSpec::constant(rate)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn constant_decay_is_integrated_exactly() {
        let model = pure_decay(0.7);
        let grid = GridSpec::new(1.0, 128, 4.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let mut state = PopulationState::uniform_on(&grid, 1, 1.0);
        let stats = solver.evolve_period(&mut state).unwrap();
        assert!(
            (stats.growth - (-0.7f64).exp()).abs() < 1e-12,
            "growth {}",
            stats.growth
        );
        assert_eq!(stats.spill_fraction, 0.0);
    }

    #[test]
    fn zero_loss_advection_is_bitwise_exact() {
        let model = pure_decay(0.0);
        let grid = GridSpec::new(1.0, 64, 4.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let mut state = PopulationState::uniform_on(&grid, 1, 1.0);
        // Make the profile irregular so a shift error would show.
        for (j, v) in state.densities[0].iter_mut().enumerate() {
            *v *= 1.0 + (j as f64 * 0.37).sin().abs();
        }
        let before = state.densities[0].clone();
        let spill = solver.step(&mut state, 0);
        assert_eq!(spill, 0.0);
        assert_eq!(state.densities[0][0], 0.0);
        for j in 0..grid.n_age() - 1 {
            assert_eq!(state.densities[0][j + 1], before[j]);
        }
    }

    #[test]
    fn truncation_spill_is_accounted() {
        let model = pure_decay(0.0);
        let grid = GridSpec::new(1.0, 32, 2.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        // Mass everywhere: one full period pushes the top period's worth
        // of cells (half the mass) out of the domain.
        let mut state = PopulationState::uniform_on(&grid, 1, 2.0);
        let stats = solver.evolve_period(&mut state).unwrap();
        assert!((stats.growth - 0.5).abs() < 1e-12);
        assert!(
            (stats.spill_fraction - 1.0).abs() < 1e-9,
            "spill fraction {}",
            stats.spill_fraction
        );
        assert!((state.mass(&grid) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inflow_deposits_into_age_zero() {
        // Constant kernel 3 on a single phase with no losses: inflow is
        // 3 * mass, deposited as the new age-zero density.
        let model = PhaseModel::general(
            1.0,
            vec![CoefficientSpec::constant(0.0)],
            vec![BirthEntry {
                from: 0,
                to: 0,
                spec: CoefficientSpec::constant(3.0),
            }],
        )
        .unwrap();
        let grid = GridSpec::new(1.0, 16, 2.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let mut state = PopulationState::uniform_on(&grid, 1, 1.0);
        solver.step(&mut state, 0);
        assert!((state.densities[0][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn step_is_linear_in_the_state() {
        let model = PhaseModel::cell_cycle(
            1.0,
            vec![CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 2.0, 1.0, 0.1),
                0.25,
                CoefficientSpec::constant(0.3),
            )],
        )
        .unwrap();
        let grid = GridSpec::new(1.0, 32, 2.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let mut a = PopulationState::uniform_on(&grid, 1, 0.5);
        let mut b = PopulationState::uniform_on(&grid, 1, 1.5);
        for (j, v) in b.densities[0].iter_mut().enumerate() {
            *v *= 0.2 + (j % 7) as f64;
        }
        let mut combined = PopulationState::zeros(&grid, 1);
        for j in 0..grid.n_age() {
            combined.densities[0][j] = 2.0 * a.densities[0][j] + 0.5 * b.densities[0][j];
        }
        solver.step(&mut a, 3);
        solver.step(&mut b, 3);
        solver.step(&mut combined, 3);
        for j in 0..grid.n_age() {
            let expect = 2.0 * a.densities[0][j] + 0.5 * b.densities[0][j];
            assert!(
                (combined.densities[0][j] - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "cell {j}"
            );
        }
    }

    #[test]
    fn delay_trace_matches_transport_trace() {
        let model = PhaseModel::cell_cycle(
            1.0,
            vec![CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 4.0, 2.0, 0.0),
                0.5,
                CoefficientSpec::cos_power(0.5, 2, std::f64::consts::PI, 0.0),
            )],
        )
        .unwrap();
        let grid = GridSpec::new(1.0, 64, 3.0).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let initial = solver.default_initial_state(&model);

        let mut state = initial.clone();
        let mut pde_trace = Vec::new();
        for _ in 0..3 {
            solver
                .evolve_period_with_inflow_trace(&mut state, &mut pde_trace)
                .unwrap();
        }
        let delay = delay_boundary_trace(&model, &grid, 3, &initial).unwrap();
        assert_eq!(delay.len(), pde_trace.len());
        let scale = delay
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1e-300);
        for (a, b) in delay.iter().zip(&pde_trace) {
            assert!(
                (a - b[0]).abs() <= 1e-11 * scale,
                "delay {a} vs transport {}",
                b[0]
            );
        }
    }

    #[test]
    fn delay_solver_rejects_multiphase_models() {
        let model = PhaseModel::cell_cycle(
            1.0,
            vec![
                CellCyclePhase::new(
                    CoefficientSpec::constant(1.0),
                    CoefficientSpec::constant(0.0),
                ),
                CellCyclePhase::new(
                    CoefficientSpec::constant(1.0),
                    CoefficientSpec::constant(0.0),
                ),
            ],
        )
        .unwrap();
        let grid = GridSpec::new(1.0, 16, 1.0).unwrap();
        let state = PopulationState::uniform_on(&grid, 2, 0.5);
        assert!(matches!(
            delay_boundary_trace(&model, &grid, 1, &state),
            Err(Error::UnsupportedModel(_))
        ));
    }
}
