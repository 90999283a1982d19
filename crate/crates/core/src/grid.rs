//! Space-time discretization and population state.
//!
//! The solver advances along characteristics, so the time step and age
//! step are locked together: `dt = dx = period / steps_per_period`. The
//! age axis is truncated at `a_max = n_age * dx`, chosen far enough past
//! the last age threshold that the leaked tail is negligible (the solver
//! tracks the leak and reports it).

use crate::error::{Error, Result};
use crate::model::PhaseModel;

/// Default number of time steps per period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 1024;

/// Uniform characteristic grid for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    period: f64,
    steps_per_period: usize,
    n_age: usize,
}

impl GridSpec {
    /// Builds a grid with the requested age span, rounded up to a whole
    /// number of cells.
    pub fn new(period: f64, steps_per_period: usize, a_max: f64) -> Result<Self> {
        if !period.is_finite() || period <= 0.0 {
            return Err(Error::Grid(format!("period {period} must be positive")));
        }
        if steps_per_period == 0 {
            return Err(Error::Grid("steps_per_period must be at least 1".into()));
        }
        if !a_max.is_finite() || a_max <= 0.0 {
            return Err(Error::Grid(format!("age span {a_max} must be positive")));
        }
        let cells = (a_max * steps_per_period as f64 / period - 1e-9).ceil();
        if cells > 1e9 {
            return Err(Error::Grid(format!(
                "age span {a_max} needs {cells} cells; refusing"
            )));
        }
        Ok(Self {
            period,
            steps_per_period,
            n_age: (cells as usize).max(1),
        })
    }

    /// Grid sized for a model: by default 1024 steps per period, with the
    /// age axis reaching four times the largest age threshold (or four
    /// periods if the model has no thresholds).
    pub fn for_model(
        model: &PhaseModel,
        steps_per_period: Option<usize>,
        a_max: Option<f64>,
    ) -> Result<Self> {
        let steps = steps_per_period.unwrap_or(DEFAULT_STEPS_PER_PERIOD);
        let span = match a_max {
            Some(value) => value,
            None => match model.max_age_threshold() {
                Some(thr) if thr > 0.0 => 4.0 * thr,
                _ => 4.0 * model.period(),
            },
        };
        if let Some(thr) = model.max_age_threshold() {
            if span <= thr {
                return Err(Error::Grid(format!(
                    "age span {span} does not reach past the largest age threshold {thr}"
                )));
            }
        }
        Self::new(model.period(), steps, span)
    }

    /// The same age span on a grid refined (or coarsened) by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::Grid(format!("scale factor {factor} must be positive")));
        }
        let steps = ((self.steps_per_period as f64 * factor).round() as usize).max(1);
        Self::new(self.period, steps, self.a_max())
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    /// Time step; equal to the age step.
    pub fn dt(&self) -> f64 {
        self.period / self.steps_per_period as f64
    }

    /// Age step; equal to the time step.
    pub fn dx(&self) -> f64 {
        self.dt()
    }

    pub fn n_age(&self) -> usize {
        self.n_age
    }

    /// Upper end of the truncated age axis.
    pub fn a_max(&self) -> f64 {
        self.n_age as f64 * self.dx()
    }

    /// Center of age cell `j`.
    pub fn age_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    /// Midpoint in time of step `k` within a period starting at 0.
    pub fn time_midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }
}

/// Age-density values per phase on a grid; `densities[i][j]` approximates
/// the density of phase `i` at age-cell center `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub densities: Vec<Vec<f64>>,
    /// Elapsed simulation time, advanced by the solver.
    pub time: f64,
}

impl PopulationState {
    /// All-zero state.
    pub fn zeros(grid: &GridSpec, phases: usize) -> Self {
        Self {
            densities: vec![vec![0.0; grid.n_age()]; phases],
            time: 0.0,
        }
    }

    /// Unit-mass state spread uniformly (in age and across phases) over
    /// ages `[0, upper_age]`.
    pub fn uniform_on(grid: &GridSpec, phases: usize, upper_age: f64) -> Self {
        let mut cells = (upper_age / grid.dx()).round() as usize;
        cells = cells.clamp(1, grid.n_age());
        let value = 1.0 / (phases as f64 * cells as f64 * grid.dx());
        let mut state = Self::zeros(grid, phases);
        for phase in &mut state.densities {
            for v in phase.iter_mut().take(cells) {
                *v = value;
            }
        }
        state
    }

    /// Total mass (integral of all densities).
    pub fn mass(&self, grid: &GridSpec) -> f64 {
        let cell_sum: f64 = self
            .densities
            .iter()
            .map(|phase| phase.iter().sum::<f64>())
            .sum();
        cell_sum * grid.dx()
    }

    /// Rescales to unit mass; returns the mass found, leaving the state
    /// untouched if it was zero or non-finite.
    pub fn normalize(&mut self, grid: &GridSpec) -> f64 {
        let mass = self.mass(grid);
        if mass > 0.0 && mass.is_finite() {
            let inv = 1.0 / mass;
            for phase in &mut self.densities {
                for v in phase.iter_mut() {
                    *v *= inv;
                }
            }
        }
        mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_derives_cell_counts() {
        let g = GridSpec::new(1.0, 1152, 3.0).unwrap();
        assert_eq!(g.n_age(), 3456);
        assert!((g.a_max() - 3.0).abs() < 1e-12);
        assert!((g.dt() - g.dx()).abs() == 0.0);
        let coarse = g.scaled(0.5).unwrap();
        assert_eq!(coarse.steps_per_period(), 576);
        assert_eq!(coarse.n_age(), 1728);
    }

    #[test]
    fn uniform_state_has_unit_mass() {
        let g = GridSpec::new(1.0, 256, 2.0).unwrap();
        let s = PopulationState::uniform_on(&g, 3, 0.5);
        assert!((s.mass(&g) - 1.0).abs() < 1e-12);
        // Mass sits only below the requested age.
        assert_eq!(s.densities[0][127], s.densities[0][0]);
        assert_eq!(s.densities[0][128], 0.0);
    }

    #[test]
    fn normalize_reports_prior_mass() {
        let g = GridSpec::new(1.0, 64, 1.0).unwrap();
        let mut s = PopulationState::uniform_on(&g, 1, 1.0);
        for v in s.densities[0].iter_mut() {
            *v *= 3.0;
        }
        let prior = s.normalize(&g);
        assert!((prior - 3.0).abs() < 1e-12);
        assert!((s.mass(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new(0.0, 10, 1.0).is_err());
        assert!(GridSpec::new(1.0, 0, 1.0).is_err());
        assert!(GridSpec::new(1.0, 10, -1.0).is_err());
    }
}
