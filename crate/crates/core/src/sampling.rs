//! Precomputed coefficient tables on a grid.
//!
//! Every coefficient is piecewise constant in age (breakpoints at its age
//! thresholds), so instead of a full time-by-age matrix each coefficient
//! is stored as one value per (time step, age piece). The transport
//! solver then works segment-by-segment, which keeps the tables at
//! kilobytes even on fine grids.
//!
//! Sampling conventions (shared by the forward solver, the dual solver,
//! and the delay-equation solver so their discretizations match exactly):
//! time points are the step midpoints `(k + 1/2) dt`, age points the cell
//! centers `(j + 1/2) dx`.

use crate::coefficients::CoefficientSpec;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::PhaseModel;

/// A function of (time step, age cell) that is constant in age on each of
/// a few pieces. `edges[p]` is the first cell of piece `p`; the last
/// piece extends to the end of the age axis. Time-independent tables
/// store a single row.
#[derive(Debug, Clone)]
pub struct PiecewiseRow {
    edges: Vec<usize>,
    rows: Vec<Vec<f64>>,
    n_age: usize,
    time_dependent: bool,
}

impl PiecewiseRow {
    /// Samples `map(spec(t, x))` on the grid.
    pub fn sample(
        spec: &CoefficientSpec,
        grid: &GridSpec,
        map: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mut thresholds = Vec::new();
        spec.collect_age_thresholds(&mut thresholds);
        let mut edges = vec![0usize];
        let dx = grid.dx();
        for thr in thresholds {
            if thr > grid.a_max() - 0.5 * dx {
                return Err(Error::Grid(format!(
                    "age threshold {thr} is not covered by the age axis (a_max {}); \
                     enlarge the age span",
                    grid.a_max()
                )));
            }
            // First cell whose center lies at or above the threshold.
            let cell = (thr / dx - 0.5).ceil().max(0.0) as usize;
            edges.push(cell.min(grid.n_age().saturating_sub(1)));
        }
        edges.sort_unstable();
        edges.dedup();

        let time_dependent = spec.time_dependent();
        let steps = if time_dependent {
            grid.steps_per_period()
        } else {
            1
        };
        let mut rows = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = if time_dependent {
                grid.time_midpoint(k)
            } else {
                0.0
            };
            let row: Vec<f64> = edges
                .iter()
                .map(|&cell| {
                    let value = spec.eval(t, grid.age_center(cell));
                    map(value)
                })
                .collect();
            for (p, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Grid(format!(
                        "sampled coefficient is not finite at step {k}, piece {p} (value {v})"
                    )));
                }
            }
            rows.push(row);
        }
        Ok(Self {
            edges,
            rows,
            n_age: grid.n_age(),
            time_dependent,
        })
    }

    pub fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// Values of the pieces at time step `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        if self.time_dependent {
            &self.rows[k]
        } else {
            &self.rows[0]
        }
    }

    /// Iterates `(cell_range, value)` over the pieces at time step `k`.
    pub fn segments(&self, k: usize) -> impl Iterator<Item = (std::ops::Range<usize>, f64)> + '_ {
        let row = self.row(k);
        self.edges.iter().enumerate().map(move |(p, &start)| {
            let end = self.edges.get(p + 1).copied().unwrap_or(self.n_age);
            (start..end, row[p])
        })
    }

    /// Value at (time step `k`, age cell `j`).
    pub fn value_at(&self, k: usize, j: usize) -> f64 {
        let row = self.row(k);
        // Pieces are few, so a linear scan beats a binary search here.
        let mut piece = 0;
        for (p, &start) in self.edges.iter().enumerate() {
            if j >= start {
                piece = p;
            } else {
                break;
            }
        }
        row[piece]
    }
}

/// One birth route sampled on the grid: mass removed from `from` arrives
/// at age zero of the target phase weighted by the stored kernel values
/// (premultiplied by `dx`, so a plain dot product with the density row
/// yields the inflow).
#[derive(Debug, Clone)]
pub struct SampledBirth {
    pub from: usize,
    pub weights: PiecewiseRow,
}

/// All coefficient tables a solver needs for one model on one grid.
#[derive(Debug, Clone)]
pub struct SampledModel {
    grid: GridSpec,
    phase_count: usize,
    /// Per phase: survival factor `exp(-loss * dt)` per (step, piece).
    decay: Vec<PiecewiseRow>,
    /// Per target phase: the birth routes feeding it.
    births_by_target: Vec<Vec<SampledBirth>>,
}

impl SampledModel {
    pub fn new(model: &PhaseModel, grid: &GridSpec) -> Result<Self> {
        let dt = grid.dt();
        let dx = grid.dx();
        let decay = model
            .losses()
            .iter()
            .map(|loss| PiecewiseRow::sample(loss, grid, |v| (-v * dt).exp()))
            .collect::<Result<Vec<_>>>()?;
        let mut births_by_target = vec![Vec::new(); model.phase_count()];
        for entry in model.births() {
            let weights = PiecewiseRow::sample(&entry.spec, grid, |v| v * dx)?;
            births_by_target[entry.to].push(SampledBirth {
                from: entry.from,
                weights,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            phase_count: model.phase_count(),
            decay,
            births_by_target,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn phase_count(&self) -> usize {
        self.phase_count
    }

    pub fn decay(&self, phase: usize) -> &PiecewiseRow {
        &self.decay[phase]
    }

    pub fn births_into(&self, target: usize) -> &[SampledBirth] {
        &self.births_by_target[target]
    }
}
