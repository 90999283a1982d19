//! Built-in model presets.

use renewal_core::coefficients::CoefficientSpec;
use renewal_core::model::{CellCyclePhase, PhaseModel};

use crate::config::{ExperimentConfig, ExperimentKind, GridConfig, Tolerances};

/// Three-phase cell cycle with oscillating progression rates and a pulsed
/// death rate in the second phase:
///
/// * phase 1: rate `10(1 + 0.8 cos 2πt)` beyond age 10/24, no death;
/// * phase 2: rate `10(1 − 0.8 cos 2πt)` beyond age 10/24, death `cos⁶(πt)`;
/// * phase 3 (division): constant rate 10 beyond age 2/24, no death.
///
/// Period 1; the division boundary carries the doubling factor.
pub fn table3_model() -> PhaseModel {
    PhaseModel::cell_cycle(
        1.0,
        vec![
            CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 10.0, 8.0, 0.0),
                10.0 / 24.0,
                CoefficientSpec::constant(0.0),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 10.0, -8.0, 0.0),
                10.0 / 24.0,
                CoefficientSpec::cos_power(1.0, 6, std::f64::consts::PI, 0.0),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::constant(10.0),
                2.0 / 24.0,
                CoefficientSpec::constant(0.0),
            ),
        ],
    )
    .expect("preset model is valid by construction")
}

/// Grid paired with [`table3_model`]: 1152 steps per period (a multiple of
/// both 24 and 48, so the gate ages land on cell edges and the default
/// 48-point phase lattice lands on whole time steps) and age domain [0, 3].
pub fn table3_grid() -> GridConfig {
    GridConfig {
        steps_per_period: Some(1152),
        max_age: Some(3.0),
    }
}

/// Full configuration for the preset with the given experiment.
pub fn table3_config(experiment: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        model: table3_model(),
        grid: table3_grid(),
        experiment,
        output: None,
        strict: false,
        tolerances: Tolerances::default(),
    }
}
