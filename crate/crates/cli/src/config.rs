//! JSON experiment configuration: model, grid, experiment parameters,
//! output location, strictness, and tolerance overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use renewal_core::eigensolver::SolveOptions;
use renewal_core::grid::GridSpec;
use renewal_core::PhaseModel;

/// Top-level configuration accepted by every subcommand via `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The renewal system under study.
    pub model: PhaseModel,
    /// Discretization parameters; omitted fields fall back to model-derived
    /// defaults.
    #[serde(default)]
    pub grid: GridConfig,
    /// Which experiment to run and its parameters.
    pub experiment: ExperimentKind,
    /// Directory receiving CSV/SVG artifacts; default: current directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Promote failed assertions and non-convergence to a nonzero exit code.
    #[serde(default)]
    pub strict: bool,
    /// Numerical tolerances.
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Grid resolution knobs. `steps_per_period` fixes both the time step and the
/// age step (the scheme advances exactly one age cell per time step);
/// `max_age` truncates the age domain.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age: Option<f64>,
}

impl GridConfig {
    /// Resolve to a concrete grid for `model`, then apply `scale` to both
    /// resolutions (time and age step shrink together).
    pub fn resolve(&self, model: &PhaseModel, scale: f64) -> renewal_core::Result<GridSpec> {
        let grid = GridSpec::for_model(model, self.steps_per_period, self.max_age)?;
        if (scale - 1.0).abs() < 1e-12 {
            Ok(grid)
        } else {
            grid.scaled(scale)
        }
    }
}

/// Experiment discriminator. Serialized with a `kind` tag, e.g.
/// `{"kind": "phase_sweep", "samples": 48}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Compare the periodic growth rate against the two averaged ones.
    Averaging,
    /// Sweep the blend parameter between two models and test convexity.
    Convexity {
        /// Partner model; default: the base model with every coefficient
        /// time-shifted by half a period.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        second_model: Option<PhaseModel>,
        /// Number of blend parameters sampled uniformly on [0, 1].
        #[serde(default = "default_theta_samples")]
        theta_samples: usize,
    },
    /// Sweep the phase of the death rates and compare against the
    /// uniform-delivery growth rate.
    PhaseSweep {
        /// Number of equally spaced phase shifts per period.
        #[serde(default = "default_phase_samples")]
        samples: usize,
        /// Shift every coefficient instead of only the death rates.
        #[serde(default)]
        shift_all: bool,
    },
    /// Sweep the first two gate ages of a three-phase cycle with
    /// phase-opposed oscillating transition rates, holding the total gated
    /// duration fixed.
    Antiphase {
        /// Number of gate-age splits sampled (interior points of the lattice).
        #[serde(default = "default_antiphase_samples")]
        samples: usize,
        /// Relative oscillation amplitude of the two opposed transition
        /// rates, in [0, 1).
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        /// Duration of the final (division) phase as a fraction of the
        /// period.
        #[serde(default = "default_mitosis_fraction")]
        mitosis_fraction: f64,
        /// Baseline transition rate level.
        #[serde(default = "default_base_rate")]
        base_rate: f64,
    },
}

fn default_theta_samples() -> usize {
    21
}

fn default_phase_samples() -> usize {
    48
}

fn default_antiphase_samples() -> usize {
    22
}

fn default_amplitude() -> f64 {
    0.8
}

fn default_mitosis_fraction() -> f64 {
    1.0 / 24.0
}

fn default_base_rate() -> f64 {
    10.0
}

/// Tolerance overrides shared by all experiments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute slack for eigenvalue inequality assertions.
    #[serde(default = "default_inequality_slack")]
    pub inequality_slack: f64,
    /// Relative tolerance on the log growth factor for power iteration.
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Power-iteration period budget.
    #[serde(default = "default_max_periods")]
    pub max_periods: usize,
    /// Warn when the per-period mass fraction lost at the age cutoff exceeds
    /// this value.
    #[serde(default = "default_spill_limit")]
    pub spill_limit: f64,
}

fn default_inequality_slack() -> f64 {
    1e-4
}

fn default_solver_tol() -> f64 {
    1e-9
}

fn default_max_periods() -> usize {
    2000
}

fn default_spill_limit() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inequality_slack: default_inequality_slack(),
            solver_tol: default_solver_tol(),
            max_periods: default_max_periods(),
            spill_limit: default_spill_limit(),
        }
    }
}

impl Tolerances {
    /// Translate into solver options; `strict` also turns the spill warning
    /// into a hard error.
    pub fn solve_options(&self, strict: bool) -> SolveOptions {
        SolveOptions {
            tol: self.solver_tol,
            max_periods: self.max_periods,
            spill_limit: self.spill_limit,
            strict_spill: strict,
            ..SolveOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> serde_json::Value {
        serde_json::json!({
            "model": {
                "phases": 1,
                "period": 1.0,
                "deaths": [{"type": "constant", "value": 0.0}],
                "transitions": [{"type": "constant", "value": 1.0}]
            },
            "experiment": {"kind": "phase_sweep", "samples": 12},
            "strict": true
        })
    }

    #[test]
    fn parses_with_defaults() {
        let config: ExperimentConfig = serde_json::from_value(sample_json()).unwrap();
        assert!(config.strict);
        assert!(config.grid.steps_per_period.is_none());
        assert_eq!(config.tolerances.max_periods, 2000);
        match config.experiment {
            ExperimentKind::PhaseSweep { samples, shift_all } => {
                assert_eq!(samples, 12);
                assert!(!shift_all);
            }
            _ => panic!("wrong experiment kind"),
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let mut value = sample_json();
        value["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentConfig>(value).is_err());
    }

    #[test]
    fn rejects_unknown_experiment_fields() {
        let mut value = sample_json();
        value["experiment"]["extra"] = serde_json::json!(2);
        assert!(serde_json::from_value::<ExperimentConfig>(value).is_err());
    }

    #[test]
    fn round_trip_preserves_evaluations() {
        let config: ExperimentConfig = serde_json::from_value(sample_json()).unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        for k in 0..7 {
            let t = 0.137 * k as f64;
            assert_eq!(
                config.model.losses()[0].eval(t, 0.3),
                back.model.losses()[0].eval(t, 0.3)
            );
        }
        let again = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(text, again);
    }
}
