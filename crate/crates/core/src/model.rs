//! Multi-phase renewal models.
//!
//! A [`PhaseModel`] describes a linear population system whose members
//! advance in age within a phase, are removed at a per-phase loss rate,
//! and re-enter other phases at age zero through birth kernels:
//!
//! * `losses[i]` is the total removal rate of phase `i` (background death
//!   plus any outflow into other phases);
//! * each [`BirthEntry`] routes removals of phase `from` into age-zero
//!   arrivals of phase `to` with its own kernel.
//!
//! The cell-division-cycle structure is a special case built by
//! [`PhaseModel::cell_cycle`]: phase `i` feeds phase `i+1` at its
//! (age-gated) transition rate, the last phase feeds the first with an
//! extra factor of two for mitosis, and the loss of each phase is its
//! background death rate plus its transition rate. Models built that way
//! remember the decomposition in [`ModelKind::CellCycle`] so that
//! transformations acting only on death rates stay well defined.

use serde::{Deserialize, Serialize};

use crate::coefficients::{AverageMode, CoefficientSpec};
use crate::error::{Error, Result};

/// One birth route: removals of phase `from` become age-zero arrivals in
/// phase `to`, weighted by the kernel `spec` evaluated at the mother's
/// time and age.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthEntry {
    pub from: usize,
    pub to: usize,
    pub spec: CoefficientSpec,
}

/// Extra structure a model may carry beyond the generic loss/birth form.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// No additional structure; losses are treated as death rates by the
    /// transformations that act on deaths.
    General,
    /// Cyclic cell-cycle structure with per-phase background deaths and
    /// transition rates; `losses[i] = deaths[i] + transitions[i]`.
    CellCycle {
        deaths: Vec<CoefficientSpec>,
        transitions: Vec<CoefficientSpec>,
    },
}

/// One phase of a cell-cycle model: its transition rate into the next
/// phase (including any age gate) and its background death rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCyclePhase {
    pub transition: CoefficientSpec,
    pub death: CoefficientSpec,
}

impl CellCyclePhase {
    pub fn new(transition: CoefficientSpec, death: CoefficientSpec) -> Self {
        Self { transition, death }
    }

    /// A phase whose transition rate `rate(t)` switches on once the age
    /// reaches `threshold`.
    pub fn gated(rate: CoefficientSpec, threshold: f64, death: CoefficientSpec) -> Self {
        Self {
            transition: CoefficientSpec::product(rate, CoefficientSpec::age_gate(threshold)),
            death,
        }
    }
}

/// A time-periodic multi-phase renewal model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    phase_count: usize,
    period: f64,
    losses: Vec<CoefficientSpec>,
    births: Vec<BirthEntry>,
    kind: ModelKind,
}

impl PhaseModel {
    /// Builds a model in the generic loss/birth form. Requires at least
    /// one birth kernel that is not identically zero; use
    /// [`PhaseModel::general_allowing_pure_decay`] for deliberately
    /// birth-free diagnostics.
    pub fn general(
        period: f64,
        losses: Vec<CoefficientSpec>,
        births: Vec<BirthEntry>,
    ) -> Result<Self> {
        let model = Self::general_allowing_pure_decay(period, losses, births)?;
        if !model
            .births
            .iter()
            .any(|b| !b.spec.is_structurally_zero())
        {
            return Err(Error::ModelStructure(
                "every birth kernel is identically zero; the population can only decay".into(),
            ));
        }
        Ok(model)
    }

    /// Same as [`PhaseModel::general`] but without requiring a nonzero
    /// birth kernel (the births list may even be empty).
    pub fn general_allowing_pure_decay(
        period: f64,
        losses: Vec<CoefficientSpec>,
        mut births: Vec<BirthEntry>,
    ) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::ModelStructure("a model needs at least one phase".into()));
        }
        if !period.is_finite() || period <= 0.0 {
            return Err(Error::ModelStructure(format!(
                "period {period} must be positive and finite"
            )));
        }
        let phase_count = losses.len();
        for (i, loss) in losses.iter().enumerate() {
            loss.validate().map_err(|e| {
                Error::ModelStructure(format!("loss rate of phase {i}: {e}"))
            })?;
            loss.check_period(period).map_err(|e| {
                Error::ModelStructure(format!("loss rate of phase {i}: {e}"))
            })?;
        }
        births.sort_by_key(|b| (b.to, b.from));
        for pair in births.windows(2) {
            if pair[0].from == pair[1].from && pair[0].to == pair[1].to {
                return Err(Error::ModelStructure(format!(
                    "duplicate birth route {} -> {}",
                    pair[0].from, pair[0].to
                )));
            }
        }
        for b in &births {
            if b.from >= phase_count || b.to >= phase_count {
                return Err(Error::ModelStructure(format!(
                    "birth route {} -> {} references a phase outside 0..{phase_count}",
                    b.from, b.to
                )));
            }
            b.spec.validate().map_err(|e| {
                Error::ModelStructure(format!("birth kernel {} -> {}: {e}", b.from, b.to))
            })?;
            b.spec.check_period(period).map_err(|e| {
                Error::ModelStructure(format!("birth kernel {} -> {}: {e}", b.from, b.to))
            })?;
        }
        Ok(Self {
            phase_count,
            period,
            losses,
            births,
            kind: ModelKind::General,
        })
    }

    /// Builds a cyclic cell-cycle model: phase `i` transitions into phase
    /// `i+1`, and divisions of the last phase produce two age-zero cells
    /// in the first phase.
    pub fn cell_cycle(period: f64, phases: Vec<CellCyclePhase>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::ModelStructure("a model needs at least one phase".into()));
        }
        let deaths: Vec<_> = phases.iter().map(|p| p.death.clone()).collect();
        let transitions: Vec<_> = phases.iter().map(|p| p.transition.clone()).collect();
        Self::assemble_cell_cycle(period, deaths, transitions)
    }

    fn assemble_cell_cycle(
        period: f64,
        deaths: Vec<CoefficientSpec>,
        transitions: Vec<CoefficientSpec>,
    ) -> Result<Self> {
        let count = deaths.len();
        let losses: Vec<_> = deaths
            .iter()
            .zip(&transitions)
            .map(|(d, k)| CoefficientSpec::sum(d.clone(), k.clone()))
            .collect();
        let births: Vec<_> = transitions
            .iter()
            .enumerate()
            .map(|(i, k)| {
                if i + 1 < count {
                    BirthEntry {
                        from: i,
                        to: i + 1,
                        spec: k.clone(),
                    }
                } else {
                    // Mitosis: one division of the last phase yields two
                    // newborns in the first.
                    BirthEntry {
                        from: i,
                        to: 0,
                        spec: k.clone().scaled(2.0),
                    }
                }
            })
            .collect();
        let mut model = Self::general(period, losses, births)?;
        model.kind = ModelKind::CellCycle {
            deaths,
            transitions,
        };
        Ok(model)
    }

    pub fn phase_count(&self) -> usize {
        self.phase_count
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Total removal rate of each phase.
    pub fn losses(&self) -> &[CoefficientSpec] {
        &self.losses
    }

    /// Birth routes, sorted by (target phase, source phase).
    pub fn births(&self) -> &[BirthEntry] {
        &self.births
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Every age threshold appearing anywhere in the model, sorted and
    /// deduplicated.
    pub fn age_thresholds(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for loss in &self.losses {
            loss.collect_age_thresholds(&mut out);
        }
        for b in &self.births {
            b.spec.collect_age_thresholds(&mut out);
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    pub fn max_age_threshold(&self) -> Option<f64> {
        self.age_thresholds().last().copied()
    }

    /// Erases the cell-cycle decomposition, keeping the same dynamics.
    pub fn as_general(&self) -> Self {
        Self {
            kind: ModelKind::General,
            ..self.clone()
        }
    }

    /// Shifts the death rates in time by `offset`, leaving transition and
    /// birth kernels in place. On a model without cell-cycle structure
    /// the whole loss rate is treated as the death rate.
    pub fn shift_deaths(&self, offset: f64) -> Self {
        match &self.kind {
            ModelKind::CellCycle {
                deaths,
                transitions,
            } => {
                let shifted: Vec<_> = deaths
                    .iter()
                    .map(|d| d.clone().shifted(self.period, offset))
                    .collect();
                Self::assemble_cell_cycle(self.period, shifted, transitions.clone())
                    .expect("shifting death rates preserves validity")
            }
            ModelKind::General => Self {
                losses: self
                    .losses
                    .iter()
                    .map(|l| l.clone().shifted(self.period, offset))
                    .collect(),
                ..self.clone()
            },
        }
    }

    /// Shifts every coefficient of the model in time by `offset`.
    pub fn shift_all(&self, offset: f64) -> Self {
        let losses = self
            .losses
            .iter()
            .map(|l| l.clone().shifted(self.period, offset))
            .collect();
        let births = self
            .births
            .iter()
            .map(|b| BirthEntry {
                from: b.from,
                to: b.to,
                spec: b.spec.clone().shifted(self.period, offset),
            })
            .collect();
        let kind = match &self.kind {
            ModelKind::General => ModelKind::General,
            ModelKind::CellCycle {
                deaths,
                transitions,
            } => ModelKind::CellCycle {
                deaths: deaths
                    .iter()
                    .map(|d| d.clone().shifted(self.period, offset))
                    .collect(),
                transitions: transitions
                    .iter()
                    .map(|k| k.clone().shifted(self.period, offset))
                    .collect(),
            },
        };
        Self {
            losses,
            births,
            kind,
            ..self.clone()
        }
    }

    /// Replaces the death rates by their arithmetic time averages while
    /// leaving transition and birth kernels fully time dependent. On a
    /// model without cell-cycle structure the whole loss rate is averaged.
    pub fn freeze_deaths_arithmetic(&self, quadrature_points: usize) -> Self {
        match &self.kind {
            ModelKind::CellCycle {
                deaths,
                transitions,
            } => {
                let frozen: Vec<_> = deaths
                    .iter()
                    .map(|d| {
                        d.clone()
                            .frozen(self.period, AverageMode::Arithmetic, quadrature_points)
                    })
                    .collect();
                Self::assemble_cell_cycle(self.period, frozen, transitions.clone())
                    .expect("freezing death rates preserves validity")
            }
            ModelKind::General => Self {
                losses: self
                    .losses
                    .iter()
                    .map(|l| {
                        l.clone()
                            .frozen(self.period, AverageMode::Arithmetic, quadrature_points)
                    })
                    .collect(),
                ..self.clone()
            },
        }
    }

    /// The fully averaged companion model: every coefficient replaced by
    /// its arithmetic time average. Cell-cycle structure is preserved.
    pub fn averaged_arithmetic(&self, quadrature_points: usize) -> Self {
        let freeze = |spec: &CoefficientSpec| {
            spec.clone()
                .frozen(self.period, AverageMode::Arithmetic, quadrature_points)
        };
        match &self.kind {
            ModelKind::CellCycle {
                deaths,
                transitions,
            } => Self::assemble_cell_cycle(
                self.period,
                deaths.iter().map(freeze).collect(),
                transitions.iter().map(freeze).collect(),
            )
            .expect("averaging preserves validity"),
            ModelKind::General => Self {
                losses: self.losses.iter().map(freeze).collect(),
                births: self
                    .births
                    .iter()
                    .map(|b| BirthEntry {
                        from: b.from,
                        to: b.to,
                        spec: freeze(&b.spec),
                    })
                    .collect(),
                ..self.clone()
            },
        }
    }

    /// The mixed averaged companion model: loss rates replaced by their
    /// arithmetic averages, birth kernels by their geometric averages.
    /// (For a cell-cycle model this is exactly "transition rates averaged
    /// arithmetically inside the loss, geometrically in the births", since
    /// averaging distributes over the sum and the mitosis factor passes
    /// through the geometric mean.) The result is a general-form model.
    pub fn averaged_mixed(&self, quadrature_points: usize) -> Self {
        Self {
            losses: self
                .losses
                .iter()
                .map(|l| {
                    l.clone()
                        .frozen(self.period, AverageMode::Arithmetic, quadrature_points)
                })
                .collect(),
            births: self
                .births
                .iter()
                .map(|b| BirthEntry {
                    from: b.from,
                    to: b.to,
                    spec: b
                        .spec
                        .clone()
                        .frozen(self.period, AverageMode::Geometric, quadrature_points),
                })
                .collect(),
            kind: ModelKind::General,
            ..self.clone()
        }
    }

    /// Interpolates two structurally compatible models: loss rates are
    /// combined arithmetically with weights `theta` and `1-theta`, birth
    /// kernels geometrically with exponents `theta` and `1-theta`. The
    /// endpoints return the corresponding input unchanged (as a
    /// general-form model).
    pub fn blend(first: &Self, second: &Self, theta: f64) -> Result<Self> {
        if !theta.is_finite() || !(0.0..=1.0).contains(&theta) {
            return Err(Error::BlendMismatch(format!(
                "theta {theta} must lie in [0, 1]"
            )));
        }
        if first.phase_count != second.phase_count {
            return Err(Error::BlendMismatch(format!(
                "phase counts differ ({} vs {})",
                first.phase_count, second.phase_count
            )));
        }
        if (first.period - second.period).abs() > 1e-12 * first.period.abs() {
            return Err(Error::BlendMismatch(format!(
                "periods differ ({} vs {})",
                first.period, second.period
            )));
        }
        let routes_first: Vec<_> = first.births.iter().map(|b| (b.from, b.to)).collect();
        let routes_second: Vec<_> = second.births.iter().map(|b| (b.from, b.to)).collect();
        if routes_first != routes_second {
            return Err(Error::BlendMismatch(
                "the two models route births differently".into(),
            ));
        }
        if theta == 1.0 {
            return Ok(first.as_general());
        }
        if theta == 0.0 {
            return Ok(second.as_general());
        }
        let losses = first
            .losses
            .iter()
            .zip(&second.losses)
            .map(|(a, b)| {
                CoefficientSpec::sum(a.clone().scaled(theta), b.clone().scaled(1.0 - theta))
            })
            .collect();
        let births = first
            .births
            .iter()
            .zip(&second.births)
            .map(|(a, b)| BirthEntry {
                from: a.from,
                to: a.to,
                spec: CoefficientSpec::geometric_blend(theta, a.spec.clone(), b.spec.clone()),
            })
            .collect();
        Ok(Self {
            phase_count: first.phase_count,
            period: first.period,
            losses,
            births,
            kind: ModelKind::General,
        })
    }
}

/// Serialized layout of a model. Exactly one of `transitions` (cell-cycle
/// form, paired with `deaths`) or `births` (generic form, where `deaths`
/// are the loss rates and `births[to][from]` is the kernel routing phase
/// `from` into phase `to`) must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSchema {
    phases: usize,
    period: f64,
    deaths: Vec<CoefficientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transitions: Option<Vec<CoefficientSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    births: Option<Vec<Vec<Option<CoefficientSpec>>>>,
}

impl TryFrom<ModelSchema> for PhaseModel {
    type Error = Error;

    fn try_from(schema: ModelSchema) -> Result<Self> {
        if schema.deaths.len() != schema.phases {
            return Err(Error::ModelStructure(format!(
                "expected {} death rates, found {}",
                schema.phases,
                schema.deaths.len()
            )));
        }
        match (schema.transitions, schema.births) {
            (Some(transitions), None) => {
                if transitions.len() != schema.phases {
                    return Err(Error::ModelStructure(format!(
                        "expected {} transition rates, found {}",
                        schema.phases,
                        transitions.len()
                    )));
                }
                PhaseModel::assemble_cell_cycle(schema.period, schema.deaths, transitions)
            }
            (None, Some(births)) => {
                if births.len() != schema.phases
                    || births.iter().any(|row| row.len() != schema.phases)
                {
                    return Err(Error::ModelStructure(format!(
                        "the birth matrix must be {0} x {0}",
                        schema.phases
                    )));
                }
                let mut entries = Vec::new();
                for (to, row) in births.into_iter().enumerate() {
                    for (from, cell) in row.into_iter().enumerate() {
                        if let Some(spec) = cell {
                            entries.push(BirthEntry { from, to, spec });
                        }
                    }
                }
                PhaseModel::general(schema.period, schema.deaths, entries)
            }
            (Some(_), Some(_)) => Err(Error::ModelStructure(
                "give either transitions (cell-cycle form) or a birth matrix, not both".into(),
            )),
            (None, None) => Err(Error::ModelStructure(
                "give transitions (cell-cycle form) or a birth matrix".into(),
            )),
        }
    }
}

impl From<PhaseModel> for ModelSchema {
    fn from(model: PhaseModel) -> Self {
        match &model.kind {
            ModelKind::CellCycle {
                deaths,
                transitions,
            } => ModelSchema {
                phases: model.phase_count,
                period: model.period,
                deaths: deaths.clone(),
                transitions: Some(transitions.clone()),
                births: None,
            },
            ModelKind::General => {
                let mut matrix =
                    vec![vec![None; model.phase_count]; model.phase_count];
                for b in &model.births {
                    matrix[b.to][b.from] = Some(b.spec.clone());
                }
                ModelSchema {
                    phases: model.phase_count,
                    period: model.period,
                    deaths: model.losses.clone(),
                    transitions: None,
                    births: Some(matrix),
                }
            }
        }
    }
}

impl Serialize for PhaseModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelSchema::from(self.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhaseModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let schema = ModelSchema::deserialize(deserializer)?;
        PhaseModel::try_from(schema).map_err(serde::de::Error::custom)
    }
}
