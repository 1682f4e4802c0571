//! Closed-form bounds for the multiclass FIFO server.
//!
//! Two derivations are available behind the [`BoundMethod`] trait:
//!
//! - [`Direct`] treats the server as a guaranteed-rate server of rate
//!   `C_min` for the aggregate and applies the classic network-calculus
//!   results. Its conditions compare raw rates against `C_min`.
//! - [`Improved`] normalizes each class by its own capacity. Its conditions
//!   are on the utilization `rho = sum_n r_n / C_n`, and its delay bound is
//!   attained by a synchronized burst.
//!
//! Methods are looked up by name in a [`MethodRegistry`]. A bound whose
//! precondition fails is returned as [`Applicability::NotApplicable`]
//! carrying the violated inequality, never as an error.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::curve::{dominates, vertical_deviation, Curve, Extended};
use crate::rational::Rational;
use crate::registry::{Named, Registry};
use crate::system::SystemConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundsError {
    #[error("class {0} does not exist")]
    UnknownClass(usize),
}

/// The inequality a bound needs, and how the configuration violates it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Precondition {
    pub condition: String,
    pub detail: String,
}

impl fmt::Display for Precondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "requires {} ({})", self.condition, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Applicability<T> {
    Applicable(T),
    NotApplicable(Precondition),
}

impl<T> Applicability<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Applicability::Applicable(v) => Some(v),
            Applicability::NotApplicable(_) => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, Applicability::Applicable(_))
    }

    pub fn reason(&self) -> Option<&Precondition> {
        match self {
            Applicability::Applicable(_) => None,
            Applicability::NotApplicable(p) => Some(p),
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Applicability<U> {
        match self {
            Applicability::Applicable(v) => Applicability::Applicable(f(v)),
            Applicability::NotApplicable(p) => Applicability::NotApplicable(p),
        }
    }
}

fn require(holds: bool, condition: &str, detail: impl FnOnce() -> String) -> Result<(), Precondition> {
    if holds {
        Ok(())
    } else {
        Err(Precondition {
            condition: condition.to_string(),
            detail: detail(),
        })
    }
}

impl<T> From<Result<T, Precondition>> for Applicability<T> {
    fn from(r: Result<T, Precondition>) -> Self {
        match r {
            Ok(v) => Applicability::Applicable(v),
            Err(p) => Applicability::NotApplicable(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Aggregate,
    Class(usize),
}

/// `d <= GRC(R) + E` for every packet in scope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrGuarantee {
    pub rate: Rational,
    pub error: Rational,
    pub scope: Scope,
}

/// One candidate expression of a backlog bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BacklogPart {
    pub label: &'static str,
    pub value: Rational,
}

/// A backlog bound: the minimum over the recorded parts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BacklogBound {
    pub parts: Vec<BacklogPart>,
}

impl BacklogBound {
    fn new(parts: Vec<BacklogPart>) -> Self {
        assert!(!parts.is_empty());
        BacklogBound { parts }
    }

    pub fn value(&self) -> &Rational {
        &self.parts[self.selected()].value
    }

    /// Index of the smallest part (the first one on ties).
    pub fn selected(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.parts.iter().enumerate() {
            if p.value < self.parts[best].value {
                best = i;
            }
        }
        best
    }
}

/// The aggregate is served at least at `C_min` with zero error term.
pub fn aggregate_gr(cfg: &SystemConfig) -> GrGuarantee {
    GrGuarantee {
        rate: cfg.c_min().clone(),
        error: Rational::zero(),
        scope: Scope::Aggregate,
    }
}

/// `(C_min t - L)^+`.
pub fn aggregate_service_curve(cfg: &SystemConfig) -> Curve {
    Curve::rate_latency(cfg.c_min().clone(), cfg.l_max() / cfg.c_min())
        .expect("C_min > 0 in a validated config")
}

/// Rate-latency curve with rate `R` and latency `E + L/R` implied by a
/// guaranteed-rate server for packets of at most `max_packet` bits.
pub fn gr_to_service_curve(g: &GrGuarantee, max_packet: &Rational) -> Curve {
    Curve::rate_latency(g.rate.clone(), &g.error + &(max_packet / &g.rate))
        .expect("guarantee rate is positive")
}

/// Aggregate leaky bucket `(sum r_n) t + sum sigma_n`.
pub fn aggregate_arrival_curve(cfg: &SystemConfig) -> Curve {
    Curve::token_bucket(cfg.total_rate(), cfg.total_burst()).expect("validated config")
}

fn finite(v: Extended) -> Rational {
    match v {
        Extended::Finite(v) => v,
        Extended::Infinite => unreachable!("precondition guarantees a finite deviation"),
    }
}

/// A family of bound derivations selectable by name.
pub trait BoundMethod: Named + Send + Sync {
    /// Worst-case delay of any packet, in seconds.
    fn delay_bound(&self, cfg: &SystemConfig) -> Applicability<Rational>;

    /// Worst-case backlog at any instant, in bits.
    fn backlog_bound(&self, cfg: &SystemConfig) -> Applicability<BacklogBound>;

    /// Guaranteed-rate characterization of class `n`.
    fn class_gr(&self, cfg: &SystemConfig, n: usize) -> Result<Applicability<GrGuarantee>, BoundsError>;

    /// Service curve offered to class `n`.
    fn class_service_curve(
        &self,
        cfg: &SystemConfig,
        n: usize,
    ) -> Result<Applicability<Curve>, BoundsError>;
}

fn check_class(cfg: &SystemConfig, n: usize) -> Result<(), BoundsError> {
    cfg.class(n).map(|_| ()).ok_or(BoundsError::UnknownClass(n))
}

/// Bounds obtained from the aggregate rate-`C_min` guarantee.
#[derive(Clone, Copy, Debug, Default)]
pub struct Direct;

impl Direct {
    fn aggregate_condition(cfg: &SystemConfig) -> Result<(), Precondition> {
        let total = cfg.total_rate();
        require(&total <= cfg.c_min(), "sum_n r_n <= C_min", || {
            format!("sum_n r_n = {} > C_min = {}", total, cfg.c_min())
        })
    }

    fn class_condition(cfg: &SystemConfig, n: usize) -> Result<Rational, Precondition> {
        let others = cfg.other_rate(n);
        require(&others < cfg.c_min(), "sum_{m!=n} r_m < C_min", || {
            format!("class {n}: sum_{{m!=n}} r_m = {} >= C_min = {}", others, cfg.c_min())
        })?;
        Ok(cfg.c_min() - &others)
    }
}

impl Named for Direct {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn description(&self) -> &'static str {
        "aggregate guaranteed rate C_min with classic network-calculus bounds"
    }
}

impl BoundMethod for Direct {
    fn delay_bound(&self, cfg: &SystemConfig) -> Applicability<Rational> {
        Self::aggregate_condition(cfg)
            .map(|_| cfg.total_burst() / cfg.c_min())
            .into()
    }

    fn backlog_bound(&self, cfg: &SystemConfig) -> Applicability<BacklogBound> {
        Self::aggregate_condition(cfg)
            .map(|_| {
                let dev = vertical_deviation(&aggregate_arrival_curve(cfg), &aggregate_service_curve(cfg))
                    .expect("token bucket against rate-latency");
                BacklogBound::new(vec![BacklogPart {
                    label: "aggregate rate-latency",
                    value: finite(dev.value),
                }])
            })
            .into()
    }

    fn class_gr(&self, cfg: &SystemConfig, n: usize) -> Result<Applicability<GrGuarantee>, BoundsError> {
        check_class(cfg, n)?;
        Ok(Self::class_condition(cfg, n)
            .map(|rate| {
                let error = (cfg.other_burst(n) + cfg.l_max()) / &rate;
                GrGuarantee {
                    rate,
                    error,
                    scope: Scope::Class(n),
                }
            })
            .into())
    }

    fn class_service_curve(
        &self,
        cfg: &SystemConfig,
        n: usize,
    ) -> Result<Applicability<Curve>, BoundsError> {
        check_class(cfg, n)?;
        Ok(Self::class_condition(cfg, n)
            .map(|rate| {
                // leftover of (C_min t - L)^+ after the other classes' buckets
                let latency = (cfg.l_max() + &cfg.other_burst(n)) / &rate;
                Curve::rate_latency(rate, latency).expect("positive leftover rate")
            })
            .into())
    }
}

/// Bounds obtained by normalizing every class by its own capacity.
#[derive(Clone, Copy, Debug, Default)]
pub struct Improved;

impl Improved {
    fn aggregate_condition(cfg: &SystemConfig) -> Result<Rational, Precondition> {
        let rho = cfg.utilization().rho;
        require(rho <= Rational::one(), "rho <= 1", || format!("rho = {rho} > 1"))?;
        Ok(rho)
    }

    fn class_condition(cfg: &SystemConfig, n: usize) -> Result<Rational, Precondition> {
        let u = cfg.utilization();
        let rho_bar = u.rho_bar(n).clone();
        require(rho_bar < Rational::one(), "rho_bar(n) < 1", || {
            format!("class {n}: rho_bar = {rho_bar} >= 1")
        })?;
        Ok(Rational::one() - rho_bar)
    }

    fn class_gr_inner(cfg: &SystemConfig, n: usize) -> Result<GrGuarantee, Precondition> {
        let share = Self::class_condition(cfg, n)?;
        let class = cfg.class(n).unwrap();
        let error = cfg
            .others(n)
            .map(|m| &m.burst / &(&share * &m.capacity))
            .sum();
        Ok(GrGuarantee {
            rate: &share * &class.capacity,
            error,
            scope: Scope::Class(n),
        })
    }
}

impl Named for Improved {
    fn name(&self) -> &'static str {
        "improved"
    }

    fn description(&self) -> &'static str {
        "per-class normalization by C_n with utilization conditions"
    }
}

impl BoundMethod for Improved {
    fn delay_bound(&self, cfg: &SystemConfig) -> Applicability<Rational> {
        Self::aggregate_condition(cfg)
            .map(|_| cfg.normalized_burst())
            .into()
    }

    fn backlog_bound(&self, cfg: &SystemConfig) -> Applicability<BacklogBound> {
        Self::aggregate_condition(cfg)
            .map(|rho| {
                let delay = cfg.normalized_burst();
                // the delay bound read as an impulse service curve
                let via_delay = vertical_deviation(
                    &aggregate_arrival_curve(cfg),
                    &Curve::impulse(delay.clone()).expect("non-negative delay"),
                )
                .expect("token bucket against impulse");
                // unit-rate reference system, scaled back by C_max
                let reference = vertical_deviation(
                    &Curve::token_bucket(rho, delay).expect("non-negative"),
                    &Curve::rate_latency(Rational::one(), cfg.max_transmission_time())
                        .expect("unit rate"),
                )
                .expect("token bucket against rate-latency");
                BacklogBound::new(vec![
                    BacklogPart {
                        label: "impulse from delay bound",
                        value: finite(via_delay.value),
                    },
                    BacklogPart {
                        label: "normalized reference system",
                        value: cfg.c_max() * &finite(reference.value),
                    },
                ])
            })
            .into()
    }

    fn class_gr(&self, cfg: &SystemConfig, n: usize) -> Result<Applicability<GrGuarantee>, BoundsError> {
        check_class(cfg, n)?;
        Ok(Self::class_gr_inner(cfg, n).into())
    }

    fn class_service_curve(
        &self,
        cfg: &SystemConfig,
        n: usize,
    ) -> Result<Applicability<Curve>, BoundsError> {
        check_class(cfg, n)?;
        Ok(Self::class_condition(cfg, n)
            .map(|share| {
                let class = cfg.class(n).unwrap();
                let rate = &share * &class.capacity;
                let other: Rational = cfg.others(n).map(|m| &m.burst / &m.capacity).sum();
                let latency = (&class.max_packet + &(&class.capacity * &other)) / &rate;
                Curve::rate_latency(rate, latency).expect("positive rate")
            })
            .into())
    }
}

/// Bound methods registered by name.
pub type MethodRegistry = Registry<dyn BoundMethod>;

/// Registry holding [`Direct`] and [`Improved`].
pub fn default_methods() -> MethodRegistry {
    let mut r: MethodRegistry = Registry::new("bound method");
    r.register(Arc::new(Direct) as Arc<dyn BoundMethod>);
    r.register(Arc::new(Improved) as Arc<dyn BoundMethod>);
    r
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassBounds {
    pub class: usize,
    pub gr: Applicability<GrGuarantee>,
    pub service_curve: Applicability<Curve>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    pub delay: Applicability<Rational>,
    pub backlog: Applicability<BacklogBound>,
    pub classes: Vec<ClassBounds>,
}

impl MethodReport {
    pub fn compute(method: &dyn BoundMethod, cfg: &SystemConfig) -> Self {
        let classes = cfg
            .classes()
            .iter()
            .map(|c| ClassBounds {
                class: c.id,
                gr: method.class_gr(cfg, c.id).expect("id from config"),
                service_curve: method.class_service_curve(cfg, c.id).expect("id from config"),
            })
            .collect();
        MethodReport {
            method: method.name(),
            delay: method.delay_bound(cfg),
            backlog: method.backlog_bound(cfg),
            classes,
        }
    }

    pub fn class(&self, n: usize) -> Option<&ClassBounds> {
        self.classes.iter().find(|c| c.class == n)
    }
}

/// Per-class comparison of the improved characterization against the
/// direct one; `None` where either side does not apply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassComparison {
    pub class: usize,
    pub service_curve_dominates: Option<bool>,
    pub rate_not_lower: Option<bool>,
    pub error_not_higher: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Comparison {
    /// `improved delay <= direct delay`, when both apply.
    pub delay_not_worse: Option<bool>,
    /// Label of the backlog part selected by the improved method.
    pub improved_backlog_part: Option<&'static str>,
    /// `improved backlog <= direct backlog`, when both apply.
    pub backlog_not_worse: Option<bool>,
    pub classes: Vec<ClassComparison>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AggregateBounds {
    pub gr: GrGuarantee,
    pub service_curve: Curve,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UtilizationSummary {
    pub rho: Rational,
    pub rho_bar: Vec<Rational>,
}

/// Every bound of the selected methods plus, when both the direct and the
/// improved method are present, their comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundReport {
    pub system: String,
    pub utilization: UtilizationSummary,
    pub aggregate: AggregateBounds,
    pub methods: Vec<MethodReport>,
    pub comparison: Option<Comparison>,
}

impl BoundReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn compare_methods(direct: &MethodReport, improved: &MethodReport) -> Comparison {
    let both = |a: Option<&Rational>, b: Option<&Rational>, f: fn(&Rational, &Rational) -> bool| {
        a.zip(b).map(|(a, b)| f(a, b))
    };
    let classes = improved
        .classes
        .iter()
        .map(|imp| {
            let dir = direct.class(imp.class).expect("same config");
            let gr = imp.gr.value().zip(dir.gr.value());
            ClassComparison {
                class: imp.class,
                service_curve_dominates: imp
                    .service_curve
                    .value()
                    .zip(dir.service_curve.value())
                    .map(|(i, d)| dominates(i, d)),
                rate_not_lower: gr.map(|(i, d)| i.rate >= d.rate),
                error_not_higher: gr.map(|(i, d)| i.error <= d.error),
            }
        })
        .collect();
    Comparison {
        delay_not_worse: both(improved.delay.value(), direct.delay.value(), |i, d| i <= d),
        improved_backlog_part: improved
            .backlog
            .value()
            .map(|b| b.parts[b.selected()].label),
        backlog_not_worse: both(
            improved.backlog.value().map(BacklogBound::value),
            direct.backlog.value().map(BacklogBound::value),
            |i, d| i <= d,
        ),
        classes,
    }
}

/// Report for an explicit list of methods.
pub fn report(cfg: &SystemConfig, methods: &[Arc<dyn BoundMethod>]) -> BoundReport {
    let u = cfg.utilization();
    let methods: Vec<MethodReport> = methods
        .iter()
        .map(|m| MethodReport::compute(m.as_ref(), cfg))
        .collect();
    let find = |name| methods.iter().find(|m| m.method == name);
    let comparison = find("direct")
        .zip(find("improved"))
        .map(|(d, i)| compare_methods(d, i));
    BoundReport {
        system: cfg.name().to_string(),
        utilization: UtilizationSummary {
            rho: u.rho.clone(),
            rho_bar: u.rho_bar_all().to_vec(),
        },
        aggregate: AggregateBounds {
            gr: aggregate_gr(cfg),
            service_curve: aggregate_service_curve(cfg),
        },
        methods,
        comparison,
    }
}

/// Full report over every registered method.
pub fn compare(cfg: &SystemConfig) -> BoundReport {
    let methods: Vec<_> = default_methods().iter().cloned().collect();
    report(cfg, &methods)
}
