//! Rate-coefficient expressions.
//!
//! Every rate entering a model (death rates, transition rates, birth
//! kernels) is described by a small expression tree that can be evaluated
//! at any time `t` and age `x`. The tree is designed around two facts the
//! solver exploits:
//!
//! * the only age dependence comes from [`CoefficientSpec::AgeIndicator`]
//!   nodes, so every coefficient is piecewise constant in age with
//!   breakpoints at the collected thresholds;
//! * time dependence is periodic with a single shared period, so a
//!   coefficient can be sampled once per time step of a period and reused
//!   for every subsequent period.
//!
//! The tree also carries the model transformations used by the eigenvalue
//! comparisons: time shifts, time averages (arithmetic or geometric), and
//! pointwise geometric interpolation between two coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that two periods agree.
const PERIOD_REL_TOL: f64 = 1e-12;

/// Number of samples used for the nonnegativity screen of trigonometric
/// coefficients whose sign is not obvious from the amplitudes alone.
const SIGN_CHECK_SAMPLES: usize = 4096;

/// One cosine term of a trigonometric polynomial: `amplitude *
/// cos(2*pi*harmonic*(t + phase)/period)`. The phase is expressed in time
/// units, not radians, so shifting a coefficient by `s` adds `s` to every
/// phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub harmonic: u32,
    #[serde(default)]
    pub phase: f64,
}

/// How a time average is taken when freezing a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// Plain mean of the samples.
    Arithmetic,
    /// Exponential of the mean logarithm; zero if any sample vanishes.
    Geometric,
}

/// A nonnegative rate coefficient as a function of time and age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// A constant rate.
    Constant { value: f64 },
    /// `base + sum_k amplitude_k * cos(2*pi*harmonic_k*(t+phase_k)/period)`.
    TrigPoly {
        period: f64,
        base: f64,
        #[serde(default)]
        terms: Vec<TrigTerm>,
    },
    /// `scale * cos(angular_frequency*t + phase)^power` with even power,
    /// so the value is nonnegative whenever `scale` is.
    CosPower {
        scale: f64,
        power: u32,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Age gate: 1 for `x >= threshold`, 0 below it.
    AgeIndicator { threshold: f64 },
    /// Piecewise-constant periodic function of time. Each `(start, value)`
    /// pair takes effect at `start` (within one period) and lasts until the
    /// next breakpoint; times before the first breakpoint wrap around to
    /// the last one.
    PiecewiseTime {
        period: f64,
        breakpoints: Vec<(f64, f64)>,
    },
    /// Pointwise product of the factors.
    Product { factors: Vec<CoefficientSpec> },
    /// Pointwise sum of the terms.
    Sum { terms: Vec<CoefficientSpec> },
    /// Time translation: evaluates the inner coefficient at `t + offset`.
    Shifted {
        period: f64,
        offset: f64,
        inner: Box<CoefficientSpec>,
    },
    /// Time average of the inner coefficient over one period, evaluated by
    /// a midpoint rule with `quadrature_points` nodes. The result depends
    /// on age but no longer on time.
    Frozen {
        period: f64,
        mode: AverageMode,
        quadrature_points: usize,
        inner: Box<CoefficientSpec>,
    },
    /// Pointwise geometric interpolation `first^theta * second^(1-theta)`.
    GeometricBlend {
        theta: f64,
        first: Box<CoefficientSpec>,
        second: Box<CoefficientSpec>,
    },
}

impl CoefficientSpec {
    /// A constant coefficient.
    pub fn constant(value: f64) -> Self {
        CoefficientSpec::Constant { value }
    }

    /// `base + amplitude * cos(2*pi*(t+phase)/period)`.
    pub fn cosine(period: f64, base: f64, amplitude: f64, phase: f64) -> Self {
        CoefficientSpec::TrigPoly {
            period,
            base,
            terms: vec![TrigTerm {
                amplitude,
                harmonic: 1,
                phase,
            }],
        }
    }

    /// `scale * cos(angular_frequency*t + phase)^power`.
    pub fn cos_power(scale: f64, power: u32, angular_frequency: f64, phase: f64) -> Self {
        CoefficientSpec::CosPower {
            scale,
            power,
            angular_frequency,
            phase,
        }
    }

    /// Age gate that switches on at `threshold`.
    pub fn age_gate(threshold: f64) -> Self {
        CoefficientSpec::AgeIndicator { threshold }
    }

    /// Pointwise product of two coefficients, flattening nested products.
    pub fn product(a: CoefficientSpec, b: CoefficientSpec) -> Self {
        let mut factors = Vec::new();
        for part in [a, b] {
            match part {
                CoefficientSpec::Product { factors: inner } => factors.extend(inner),
                other => factors.push(other),
            }
        }
        CoefficientSpec::Product { factors }
    }

    /// Pointwise sum of two coefficients, flattening nested sums.
    pub fn sum(a: CoefficientSpec, b: CoefficientSpec) -> Self {
        let mut terms = Vec::new();
        for part in [a, b] {
            match part {
                CoefficientSpec::Sum { terms: inner } => terms.extend(inner),
                other => terms.push(other),
            }
        }
        CoefficientSpec::Sum { terms }
    }

    /// Scales the coefficient by a nonnegative constant.
    pub fn scaled(self, factor: f64) -> Self {
        CoefficientSpec::product(CoefficientSpec::constant(factor), self)
    }

    /// Time translation by `offset` (reduced modulo the period). Shifting
    /// a time-independent coefficient or shifting by zero is the identity,
    /// and nested shifts are combined into one node.
    pub fn shifted(self, period: f64, offset: f64) -> Self {
        let reduced = offset.rem_euclid(period);
        if reduced == 0.0 || !self.time_dependent() {
            return self;
        }
        match self {
            CoefficientSpec::Shifted {
                period: p,
                offset: prior,
                inner,
            } => CoefficientSpec::Shifted {
                period: p,
                offset: (prior + reduced).rem_euclid(p),
                inner,
            },
            other => CoefficientSpec::Shifted {
                period,
                offset: reduced,
                inner: Box::new(other),
            },
        }
    }

    /// Replaces the coefficient by its time average. Freezing a
    /// time-independent coefficient is the identity.
    pub fn frozen(self, period: f64, mode: AverageMode, quadrature_points: usize) -> Self {
        if !self.time_dependent() {
            return self;
        }
        CoefficientSpec::Frozen {
            period,
            mode,
            quadrature_points,
            inner: Box::new(self),
        }
    }

    /// Pointwise geometric interpolation between two coefficients. The
    /// endpoints `theta = 1` and `theta = 0` return `first` and `second`
    /// unchanged.
    pub fn geometric_blend(theta: f64, first: CoefficientSpec, second: CoefficientSpec) -> Self {
        if theta == 1.0 {
            return first;
        }
        if theta == 0.0 {
            return second;
        }
        CoefficientSpec::GeometricBlend {
            theta,
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    /// Evaluates the coefficient at time `t` and age `x`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            CoefficientSpec::Constant { value } => *value,
            CoefficientSpec::TrigPoly {
                period,
                base,
                terms,
            } => {
                let mut total = *base;
                for term in terms {
                    let angle =
                        2.0 * std::f64::consts::PI * f64::from(term.harmonic) * (t + term.phase)
                            / period;
                    total += term.amplitude * angle.cos();
                }
                total
            }
            CoefficientSpec::CosPower {
                scale,
                power,
                angular_frequency,
                phase,
            } => {
                let c = (angular_frequency * t + phase).cos();
                scale * c.powi(*power as i32)
            }
            CoefficientSpec::AgeIndicator { threshold } => {
                if x >= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            CoefficientSpec::PiecewiseTime {
                period,
                breakpoints,
            } => {
                let tau = t.rem_euclid(*period);
                // Before the first breakpoint the last segment is still in
                // effect (the function is periodic).
                let mut value = breakpoints
                    .last()
                    .map(|&(_, v)| v)
                    .unwrap_or(0.0);
                for &(start, v) in breakpoints {
                    if tau >= start {
                        value = v;
                    } else {
                        break;
                    }
                }
                value
            }
            CoefficientSpec::Product { factors } => {
                factors.iter().map(|f| f.eval(t, x)).product()
            }
            CoefficientSpec::Sum { terms } => terms.iter().map(|f| f.eval(t, x)).sum(),
            CoefficientSpec::Shifted {
                period,
                offset,
                inner,
            } => inner.eval(t + offset.rem_euclid(*period), x),
            CoefficientSpec::Frozen {
                period,
                mode,
                quadrature_points,
                inner,
            } => match mode {
                AverageMode::Arithmetic => {
                    arithmetic_average(|t| inner.eval(t, x), *period, *quadrature_points)
                }
                AverageMode::Geometric => {
                    geometric_average(|t| inner.eval(t, x), *period, *quadrature_points)
                }
            },
            CoefficientSpec::GeometricBlend {
                theta,
                first,
                second,
            } => {
                let a = first.eval(t, x);
                let b = second.eval(t, x);
                if a == b {
                    // Exact identity when both sides agree (covers the
                    // blend of a model with itself without roundoff).
                    a
                } else if a <= 0.0 || b <= 0.0 {
                    0.0
                } else {
                    a.powf(*theta) * b.powf(1.0 - *theta)
                }
            }
        }
    }

    /// Whether the value can change with time.
    pub fn time_dependent(&self) -> bool {
        match self {
            CoefficientSpec::Constant { .. } | CoefficientSpec::AgeIndicator { .. } => false,
            CoefficientSpec::TrigPoly { terms, .. } => {
                terms.iter().any(|term| term.amplitude != 0.0)
            }
            CoefficientSpec::CosPower {
                scale,
                power,
                angular_frequency,
                ..
            } => *scale != 0.0 && *power > 0 && *angular_frequency != 0.0,
            CoefficientSpec::PiecewiseTime { breakpoints, .. } => breakpoints
                .first()
                .map(|&(_, first)| breakpoints.iter().any(|&(_, v)| v != first))
                .unwrap_or(false),
            CoefficientSpec::Product { factors } => {
                factors.iter().any(CoefficientSpec::time_dependent)
            }
            CoefficientSpec::Sum { terms } => terms.iter().any(CoefficientSpec::time_dependent),
            CoefficientSpec::Shifted { inner, .. } => inner.time_dependent(),
            CoefficientSpec::Frozen { .. } => false,
            CoefficientSpec::GeometricBlend {
                theta,
                first,
                second,
            } => {
                if *theta == 1.0 {
                    first.time_dependent()
                } else if *theta == 0.0 {
                    second.time_dependent()
                } else {
                    first.time_dependent() || second.time_dependent()
                }
            }
        }
    }

    /// Collects every age threshold appearing in the expression. The
    /// coefficient is constant in age between consecutive thresholds.
    pub fn collect_age_thresholds(&self, out: &mut Vec<f64>) {
        match self {
            CoefficientSpec::AgeIndicator { threshold } => out.push(*threshold),
            CoefficientSpec::Product { factors } => {
                for f in factors {
                    f.collect_age_thresholds(out);
                }
            }
            CoefficientSpec::Sum { terms } => {
                for f in terms {
                    f.collect_age_thresholds(out);
                }
            }
            CoefficientSpec::Shifted { inner, .. } | CoefficientSpec::Frozen { inner, .. } => {
                inner.collect_age_thresholds(out)
            }
            CoefficientSpec::GeometricBlend { first, second, .. } => {
                first.collect_age_thresholds(out);
                second.collect_age_thresholds(out);
            }
            _ => {}
        }
    }

    /// Structural and sign validation, independent of any model context.
    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientSpec::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return Err(invalid("constant", format!("value {value} must be finite and nonnegative")));
                }
            }
            CoefficientSpec::TrigPoly {
                period,
                base,
                terms,
            } => {
                check_period_value("trig_poly", *period)?;
                if !base.is_finite() {
                    return Err(invalid("trig_poly", format!("base {base} must be finite")));
                }
                let mut amp_sum = 0.0;
                for term in terms {
                    if !term.amplitude.is_finite() || !term.phase.is_finite() {
                        return Err(invalid("trig_poly", "term amplitude and phase must be finite".into()));
                    }
                    if term.harmonic == 0 {
                        return Err(invalid("trig_poly", "harmonic must be at least 1 (fold constants into base)".into()));
                    }
                    amp_sum += term.amplitude.abs();
                }
                if *base < amp_sum {
                    // The sign is not obvious from the amplitudes, so
                    // screen one period densely.
                    let min = (0..SIGN_CHECK_SAMPLES)
                        .map(|k| {
                            let t = (k as f64 + 0.5) * period / SIGN_CHECK_SAMPLES as f64;
                            self.eval(t, 0.0)
                        })
                        .fold(f64::INFINITY, f64::min);
                    if min < -1e-9 {
                        return Err(invalid(
                            "trig_poly",
                            format!("takes negative values (sampled minimum {min:e})"),
                        ));
                    }
                }
            }
            CoefficientSpec::CosPower {
                scale,
                power,
                angular_frequency,
                phase,
            } => {
                if !scale.is_finite() || *scale < 0.0 {
                    return Err(invalid("cos_power", format!("scale {scale} must be finite and nonnegative")));
                }
                if *power == 0 || power % 2 != 0 {
                    return Err(invalid("cos_power", format!("power {power} must be even and positive")));
                }
                if !angular_frequency.is_finite() || *angular_frequency <= 0.0 {
                    return Err(invalid("cos_power", format!("angular frequency {angular_frequency} must be positive")));
                }
                if !phase.is_finite() {
                    return Err(invalid("cos_power", "phase must be finite".into()));
                }
            }
            CoefficientSpec::AgeIndicator { threshold } => {
                if !threshold.is_finite() || *threshold < 0.0 {
                    return Err(invalid("age_indicator", format!("threshold {threshold} must be finite and nonnegative")));
                }
            }
            CoefficientSpec::PiecewiseTime {
                period,
                breakpoints,
            } => {
                check_period_value("piecewise_time", *period)?;
                if breakpoints.is_empty() {
                    return Err(invalid("piecewise_time", "needs at least one breakpoint".into()));
                }
                let mut prev = f64::NEG_INFINITY;
                for &(start, value) in breakpoints {
                    if !start.is_finite() || start < 0.0 || start >= *period {
                        return Err(invalid("piecewise_time", format!("breakpoint time {start} must lie in [0, period)")));
                    }
                    if start <= prev {
                        return Err(invalid("piecewise_time", "breakpoint times must be strictly increasing".into()));
                    }
                    if !value.is_finite() || value < 0.0 {
                        return Err(invalid("piecewise_time", format!("value {value} must be finite and nonnegative")));
                    }
                    prev = start;
                }
            }
            CoefficientSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(invalid("product", "needs at least one factor".into()));
                }
                for f in factors {
                    f.validate()?;
                }
            }
            CoefficientSpec::Sum { terms } => {
                if terms.is_empty() {
                    return Err(invalid("sum", "needs at least one term".into()));
                }
                for f in terms {
                    f.validate()?;
                }
            }
            CoefficientSpec::Shifted {
                period,
                offset,
                inner,
            } => {
                check_period_value("shifted", *period)?;
                if !offset.is_finite() {
                    return Err(invalid("shifted", "offset must be finite".into()));
                }
                inner.validate()?;
            }
            CoefficientSpec::Frozen {
                period,
                quadrature_points,
                inner,
                ..
            } => {
                check_period_value("frozen", *period)?;
                if *quadrature_points == 0 {
                    return Err(invalid("frozen", "needs at least one quadrature point".into()));
                }
                inner.validate()?;
            }
            CoefficientSpec::GeometricBlend {
                theta,
                first,
                second,
            } => {
                if !theta.is_finite() || !(0.0..=1.0).contains(theta) {
                    return Err(invalid("geometric_blend", format!("theta {theta} must lie in [0, 1]")));
                }
                first.validate()?;
                second.validate()?;
            }
        }
        Ok(())
    }

    /// Checks that every periodic node agrees with the model period and
    /// that oscillatory nodes complete a whole number of half-cycles per
    /// period (so the coefficient really is periodic with that period).
    pub fn check_period(&self, period: f64) -> Result<()> {
        match self {
            CoefficientSpec::Constant { .. } | CoefficientSpec::AgeIndicator { .. } => Ok(()),
            CoefficientSpec::TrigPoly { period: p, .. } => match_period("trig_poly", *p, period),
            CoefficientSpec::CosPower {
                angular_frequency, ..
            } => {
                // cos^even has period pi/omega, so omega*T must be a
                // positive whole multiple of pi.
                let ratio = angular_frequency * period / std::f64::consts::PI;
                if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
                    return Err(invalid(
                        "cos_power",
                        format!("angular frequency times period must be a positive multiple of pi (got ratio {ratio})"),
                    ));
                }
                Ok(())
            }
            CoefficientSpec::PiecewiseTime { period: p, .. } => {
                match_period("piecewise_time", *p, period)
            }
            CoefficientSpec::Product { factors } => {
                factors.iter().try_for_each(|f| f.check_period(period))
            }
            CoefficientSpec::Sum { terms } => {
                terms.iter().try_for_each(|f| f.check_period(period))
            }
            CoefficientSpec::Shifted {
                period: p, inner, ..
            } => {
                match_period("shifted", *p, period)?;
                inner.check_period(period)
            }
            CoefficientSpec::Frozen {
                period: p, inner, ..
            } => {
                match_period("frozen", *p, period)?;
                inner.check_period(period)
            }
            CoefficientSpec::GeometricBlend { first, second, .. } => {
                first.check_period(period)?;
                second.check_period(period)
            }
        }
    }

    /// Whether the coefficient is identically zero by construction (a
    /// conservative syntactic check; `false` only means "possibly
    /// nonzero somewhere").
    pub fn is_structurally_zero(&self) -> bool {
        match self {
            CoefficientSpec::Constant { value } => *value == 0.0,
            CoefficientSpec::TrigPoly { base, terms, .. } => {
                *base == 0.0 && terms.iter().all(|term| term.amplitude == 0.0)
            }
            CoefficientSpec::CosPower { scale, .. } => *scale == 0.0,
            CoefficientSpec::AgeIndicator { .. } => false,
            CoefficientSpec::PiecewiseTime { breakpoints, .. } => {
                breakpoints.iter().all(|&(_, v)| v == 0.0)
            }
            CoefficientSpec::Product { factors } => {
                factors.iter().any(CoefficientSpec::is_structurally_zero)
            }
            CoefficientSpec::Sum { terms } => {
                terms.iter().all(CoefficientSpec::is_structurally_zero)
            }
            CoefficientSpec::Shifted { inner, .. } | CoefficientSpec::Frozen { inner, .. } => {
                inner.is_structurally_zero()
            }
            CoefficientSpec::GeometricBlend {
                theta,
                first,
                second,
            } => {
                if *theta == 1.0 {
                    first.is_structurally_zero()
                } else if *theta == 0.0 {
                    second.is_structurally_zero()
                } else {
                    first.is_structurally_zero() || second.is_structurally_zero()
                }
            }
        }
    }

    /// Arithmetic time average over one period at fixed age, using the
    /// same midpoint rule as [`CoefficientSpec::Frozen`].
    pub fn arithmetic_time_average(&self, period: f64, points: usize, x: f64) -> f64 {
        arithmetic_average(|t| self.eval(t, x), period, points)
    }

    /// Geometric time average over one period at fixed age (midpoint
    /// rule in log space; zero if any sample vanishes).
    pub fn geometric_time_average(&self, period: f64, points: usize, x: f64) -> f64 {
        geometric_average(|t| self.eval(t, x), period, points)
    }
}

fn invalid(node: &'static str, detail: String) -> Error {
    Error::InvalidCoefficient { node, detail }
}

fn check_period_value(node: &'static str, period: f64) -> Result<()> {
    if !period.is_finite() || period <= 0.0 {
        return Err(invalid(node, format!("period {period} must be positive and finite")));
    }
    Ok(())
}

fn match_period(node: &'static str, own: f64, model: f64) -> Result<()> {
    if (own - model).abs() > PERIOD_REL_TOL * model.abs() {
        return Err(invalid(
            node,
            format!("period {own} does not match the model period {model}"),
        ));
    }
    Ok(())
}

fn midpoint_nodes(period: f64, points: usize) -> impl Iterator<Item = f64> {
    let h = period / points as f64;
    (0..points).map(move |m| (m as f64 + 0.5) * h)
}

fn arithmetic_average(f: impl Fn(f64) -> f64, period: f64, points: usize) -> f64 {
    midpoint_nodes(period, points).map(f).sum::<f64>() / points as f64
}

fn geometric_average(f: impl Fn(f64) -> f64, period: f64, points: usize) -> f64 {
    let mut log_sum = 0.0;
    for t in midpoint_nodes(period, points) {
        let v = f(t);
        if v <= 0.0 {
            log::warn!("geometric time average hit a nonpositive sample ({v}); the average is zero");
            return 0.0;
        }
        log_sum += v.ln();
    }
    (log_sum / points as f64).exp()
}
