//! Exact checks of simulated behaviour against guarantees and bounds.
//!
//! Every check reports a [`Violation`] per failing location and tracks the
//! smallest margin seen, so a margin of exactly zero exposes a tight bound.
//! Margins are slacks: negative exactly when the location is reported.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::bounds::{self, Applicability, BoundMethod, BoundReport, GrGuarantee, Precondition};
use crate::curve::Curve;
use crate::rational::Rational;
use crate::registry::{Named, Registry};
use crate::sim::{backlog_process, Schedule, Trace};
use crate::traffic::conformance_check;

/// `(instant, bits)` events of one flow, in order.
pub type Flow = Vec<(Rational, Rational)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Gr,
    ServiceCurve,
    Delay,
    Backlog,
    Conformance,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Gr => "gr",
            ViolationKind::ServiceCurve => "service-curve",
            ViolationKind::Delay => "delay",
            ViolationKind::Backlog => "backlog",
            ViolationKind::Conformance => "conformance",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    /// Index into the checked packet sequence.
    Packet(usize),
    Time(Rational),
    Window { class: usize, s: Rational, t: Rational },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Packet(i) => write!(f, "packet {i}"),
            Location::Time(t) => write!(f, "t={t}"),
            Location::Window { class, s, t } => write!(f, "class {class} window [{s}, {t}]"),
        }
    }
}

/// For upper-bound checks `margin = bound - observed`; for the service-curve
/// check, where `bound` is the service owed, `margin = observed - bound`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub observed: Rational,
    pub bound: Rational,
    pub margin: Rational,
}

/// Result of one check over one subject.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub evaluated: usize,
    pub min_margin: Option<Rational>,
    pub violations: Vec<Violation>,
}

impl Outcome {
    fn record(&mut self, kind: ViolationKind, location: impl FnOnce() -> Location, observed: Rational, bound: Rational, margin: Rational) {
        self.evaluated += 1;
        if self.min_margin.as_ref().is_none_or(|m| &margin < m) {
            self.min_margin = Some(margin.clone());
        }
        if margin.is_negative() {
            self.violations.push(Violation {
                kind,
                location: location(),
                observed,
                bound,
                margin,
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Some evaluated location met its bound with zero slack.
    pub fn tight(&self) -> bool {
        self.min_margin.as_ref().is_some_and(Rational::is_zero)
    }
}

/// Guaranteed-rate clocks: `c_i = max(a_i, c_{i-1}) + l_i / R` with `c_0 = 0`.
pub fn grc_clock(packets: &[(Rational, Rational)], rate: &Rational) -> Vec<Rational> {
    assert!(rate.is_positive(), "rate must be positive");
    let mut prev = Rational::zero();
    packets
        .iter()
        .map(|(a, l)| {
            let start = if a > &prev { a.clone() } else { prev.clone() };
            prev = &start + &(l / rate);
            prev.clone()
        })
        .collect()
}

/// `d_i <= GRC_i(R) + E` for every packet of the flow.
pub fn check_gr(packets: &[(Rational, Rational)], departures: &[Rational], g: &GrGuarantee) -> Outcome {
    assert_eq!(packets.len(), departures.len(), "flow and departures must align");
    let clocks = grc_clock(packets, &g.rate);
    let mut out = Outcome::default();
    for (i, (c, d)) in clocks.into_iter().zip(departures).enumerate() {
        let bound = &c + &g.error;
        let margin = &bound - d;
        out.record(ViolationKind::Gr, || Location::Packet(i), d.clone(), bound, margin);
    }
    out
}

/// Cumulative bit count as sorted jump instants `(time, bits at time)`.
fn jumps(events: &[(Rational, Rational)]) -> Vec<(Rational, Rational)> {
    let mut sorted: Vec<&(Rational, Rational)> = events.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Rational, Rational)> = Vec::new();
    for (t, b) in sorted {
        match out.last_mut() {
            Some((lt, lb)) if lt == t => *lb += b,
            _ => out.push((t.clone(), b.clone())),
        }
    }
    out
}

/// Candidate instants `s` of the infimum with `A(s)` = bits strictly before `s`:
/// `s = 0` followed by every arrival instant.
fn candidates(arrivals: &[(Rational, Rational)]) -> Vec<(Rational, Rational)> {
    let mut out = vec![(Rational::zero(), Rational::zero())];
    let mut cum = Rational::zero();
    for (t, b) in arrivals {
        if t.is_positive() {
            out.push((t.clone(), cum.clone()));
        }
        cum += b;
    }
    out
}

/// Service owed at each departure instant, `(A ⊗ beta)(t)`.
fn owed_generic(cands: &[(Rational, Rational)], total_before: &[Rational], times: &[Rational], beta: &Curve) -> Vec<Rational> {
    let at = |x: &Rational| beta.eval_unchecked(x).finite().cloned();
    let beta0 = at(&Rational::zero()).expect("beta(0) is finite");
    times
        .iter()
        .zip(total_before)
        .map(|(t, a_t)| {
            let mut best = a_t + &beta0;
            for (s, a_s) in cands.iter().take_while(|(s, _)| s <= t) {
                if let Some(b) = at(&(t - s)) {
                    let v = a_s + &b;
                    if v < best {
                        best = v;
                    }
                }
            }
            best
        })
        .collect()
}

/// Rate-latency specialisation: one pass with a prefix minimum of `A(s) - R s`.
fn owed_rate_latency(
    cands: &[(Rational, Rational)],
    total_before: &[Rational],
    times: &[Rational],
    rate: &Rational,
    latency: &Rational,
) -> Vec<Rational> {
    let mut out = Vec::with_capacity(times.len());
    // `lo` counts candidates with s <= t - T; `hi` counts those with s <= t.
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut prefix: Option<Rational> = None;
    for (t, a_t) in times.iter().zip(total_before) {
        let cut = t - latency;
        while lo < cands.len() && cands[lo].0 <= cut {
            let v = &cands[lo].1 - &(rate * &cands[lo].0);
            if prefix.as_ref().is_none_or(|p| &v < p) {
                prefix = Some(v);
            }
            lo += 1;
        }
        while hi < cands.len() && &cands[hi].0 <= t {
            hi += 1;
        }
        let mut best = a_t.clone();
        if lo < hi && cands[lo].1 < best {
            best = cands[lo].1.clone();
        }
        if let Some(p) = &prefix {
            let v = &(rate * &cut) + p;
            if v < best {
                best = v;
            }
        }
        out.push(best);
    }
    out
}

/// Checks `A*(t) >= (A ⊗ beta)(t)` for all `t >= 0`.
///
/// Instants where nothing is owed yet are skipped, so they count neither
/// as evaluated nor towards the minimum margin.
///
/// Cumulative functions count bits strictly before `t`, so packets arriving
/// together at `t` are not yet owed service at `t`. Between departures the
/// left side is constant and the right side non-decreasing, so it suffices
/// to check each departure instant. The infimum over `s` is attained at
/// `s = 0`, at an arrival instant, or at `s = t`. Assumes `beta(0) = 0`.
pub fn check_service_curve(arrivals: &[(Rational, Rational)], departures: &[(Rational, Rational)], beta: &Curve) -> Outcome {
    let arr = jumps(arrivals);
    let dep = jumps(departures);
    let cands = candidates(&arr);
    let times: Vec<Rational> = dep.iter().map(|(t, _)| t.clone()).collect();

    let mut arrived_before = Vec::with_capacity(times.len());
    let mut served_before = Vec::with_capacity(times.len());
    let (mut i, mut a_cum, mut d_cum) = (0usize, Rational::zero(), Rational::zero());
    for (t, bits) in &dep {
        while i < arr.len() && &arr[i].0 < t {
            a_cum += &arr[i].1;
            i += 1;
        }
        arrived_before.push(a_cum.clone());
        served_before.push(d_cum.clone());
        d_cum += bits;
    }

    let owed = match beta.as_rate_latency() {
        Some((r, lat)) => owed_rate_latency(&cands, &arrived_before, &times, &r, &lat),
        None => owed_generic(&cands, &arrived_before, &times, beta),
    };
    let mut out = Outcome::default();
    for ((t, served), owed) in times.into_iter().zip(served_before).zip(owed) {
        // Nothing owed yet: holds trivially and says nothing about tightness.
        if owed.is_zero() {
            continue;
        }
        let margin = &served - &owed;
        out.record(ViolationKind::ServiceCurve, || Location::Time(t), served, owed, margin);
    }
    out
}

/// Reference implementation of [`check_service_curve`] that evaluates the
/// curve directly at every candidate; quadratic.
pub fn check_service_curve_generic(arrivals: &[(Rational, Rational)], departures: &[(Rational, Rational)], beta: &Curve) -> Outcome {
    let arr = jumps(arrivals);
    let dep = jumps(departures);
    let cands = candidates(&arr);
    let mut out = Outcome::default();
    let mut served = Rational::zero();
    for (t, bits) in &dep {
        let before: Rational = arr.iter().filter(|(a, _)| a < t).map(|(_, b)| b.clone()).sum();
        let owed = owed_generic(&cands, std::slice::from_ref(&before), std::slice::from_ref(t), beta).remove(0);
        if owed.is_zero() {
            served += bits;
            continue;
        }
        let margin = &served - &owed;
        out.record(ViolationKind::ServiceCurve, || Location::Time(t.clone()), served.clone(), owed, margin);
        served += bits;
    }
    out
}

/// Every packet delay against `delay_bound`.
pub fn check_delay(schedule: &Schedule, delay_bound: &Rational) -> Outcome {
    let mut out = Outcome::default();
    for (j, d) in schedule.delays().iter().enumerate() {
        let margin = delay_bound - d;
        out.record(ViolationKind::Delay, || Location::Packet(j), d.clone(), delay_bound.clone(), margin);
    }
    out
}

/// Backlog at every event time against `backlog_bound`; reports each
/// offending event time.
pub fn check_backlog(trace: &Trace, schedule: &Schedule, backlog_bound: &Rational) -> Outcome {
    let mut out = Outcome::default();
    let b = backlog_process(trace, schedule);
    // One evaluation per distinct level change; the sup is among them.
    for (t, v) in &b.points {
        let margin = backlog_bound - v;
        out.record(ViolationKind::Backlog, || Location::Time(t.clone()), v.clone(), backlog_bound.clone(), margin);
    }
    out
}

/// Delay and backlog of every applicable method in `report`.
pub fn check_bounds(trace: &Trace, schedule: &Schedule, report: &BoundReport) -> Outcome {
    let mut out = Outcome::default();
    for m in &report.methods {
        if let Some(d) = m.delay.value() {
            merge(&mut out, check_delay(schedule, d));
        }
        if let Some(b) = m.backlog.value() {
            merge(&mut out, check_backlog(trace, schedule, b.value()));
        }
    }
    out
}

fn merge(into: &mut Outcome, from: Outcome) {
    into.evaluated += from.evaluated;
    if let Some(m) = from.min_margin {
        if into.min_margin.as_ref().is_none_or(|x| &m < x) {
            into.min_margin = Some(m);
        }
    }
    into.violations.extend(from.violations);
}

/// Per-class leaky-bucket conformance as an [`Outcome`]; one evaluation per class.
pub fn check_conformance(trace: &Trace) -> Outcome {
    let mut out = Outcome::default();
    match conformance_check(trace) {
        Ok(classes) => {
            for c in classes {
                let window = c.window.clone();
                let class = c.class;
                out.record(
                    ViolationKind::Conformance,
                    || {
                        let (s, t) = window.unwrap_or_default();
                        Location::Window { class, s, t }
                    },
                    c.peak.clone(),
                    c.burst.clone(),
                    c.slack(),
                );
            }
        }
        Err(v) => {
            out.evaluated += 1;
            let margin = &v.allowed - &v.bits;
            out.min_margin = Some(margin.clone());
            out.violations.push(Violation {
                kind: ViolationKind::Conformance,
                location: Location::Window { class: v.class, s: v.s, t: v.t },
                observed: v.bits,
                bound: v.allowed,
                margin,
            });
        }
    }
    out
}

/// What was checked: the aggregate, one class under a method, or a method's
/// system-wide bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Subject {
    pub method: Option<&'static str>,
    pub class: Option<usize>,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.method, self.class) {
            (None, None) => f.write_str("aggregate"),
            (None, Some(c)) => write!(f, "class {c}"),
            (Some(m), None) => write!(f, "{m}"),
            (Some(m), Some(c)) => write!(f, "{m} class {c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CheckStatus {
    Checked(Outcome),
    NotApplicable { reason: Precondition },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub check: &'static str,
    pub subject: Subject,
    pub status: CheckStatus,
}

impl CheckResult {
    pub fn outcome(&self) -> Option<&Outcome> {
        match &self.status {
            CheckStatus::Checked(o) => Some(o),
            CheckStatus::NotApplicable { .. } => None,
        }
    }
}

/// Inputs shared by all checks.
pub struct Context<'a> {
    pub trace: &'a Trace,
    pub schedule: &'a Schedule,
    pub report: BoundReport,
}

impl<'a> Context<'a> {
    pub fn new(trace: &'a Trace, schedule: &'a Schedule, methods: &[Arc<dyn BoundMethod>]) -> Self {
        Context {
            trace,
            schedule,
            report: bounds::report(trace.config(), methods),
        }
    }

    fn flow(&self, class: Option<usize>) -> (Vec<(Rational, Rational)>, Vec<Rational>) {
        let idx: Vec<usize> = match class {
            Some(n) => self.trace.class_indices(n),
            None => (0..self.trace.len()).collect(),
        };
        let packets = self.trace.packets();
        let deps = self.schedule.departures();
        (
            idx.iter().map(|&i| (packets[i].arrival.clone(), packets[i].length.clone())).collect(),
            idx.iter().map(|&i| deps[i].clone()).collect(),
        )
    }

    fn served(&self, class: Option<usize>) -> (Flow, Flow) {
        let (flow, deps) = self.flow(class);
        let served = deps.into_iter().zip(&flow).map(|(d, (_, l))| (d, l.clone())).collect();
        (flow, served)
    }
}

pub trait Check: Named + Send + Sync {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult>;
}

fn result<T>(
    check: &'static str,
    method: Option<&'static str>,
    class: Option<usize>,
    a: &Applicability<T>,
    f: impl FnOnce(&T) -> Outcome,
) -> CheckResult {
    CheckResult {
        check,
        subject: Subject { method, class },
        status: match a {
            Applicability::Applicable(v) => CheckStatus::Checked(f(v)),
            Applicability::NotApplicable(p) => CheckStatus::NotApplicable { reason: p.clone() },
        },
    }
}

/// Aggregate guaranteed rate plus each method's per-class guarantee.
pub struct GrCheck;
/// Aggregate service curve plus each method's per-class curve.
pub struct ServiceCurveCheck;
pub struct DelayCheck;
pub struct BacklogCheck;
pub struct ConformanceCheck;

impl Named for GrCheck {
    fn name(&self) -> &'static str {
        "gr"
    }
    fn description(&self) -> &'static str {
        "departures against guaranteed-rate clocks"
    }
}

impl Check for GrCheck {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult> {
        let (flow, deps) = ctx.flow(None);
        let agg = Applicability::Applicable(ctx.report.aggregate.gr.clone());
        let mut out = vec![result("gr", None, None, &agg, |g| check_gr(&flow, &deps, g))];
        for m in &ctx.report.methods {
            for c in &m.classes {
                let (flow, deps) = ctx.flow(Some(c.class));
                out.push(result("gr", Some(m.method), Some(c.class), &c.gr, |g| check_gr(&flow, &deps, g)));
            }
        }
        out
    }
}

impl Named for ServiceCurveCheck {
    fn name(&self) -> &'static str {
        "sc"
    }
    fn description(&self) -> &'static str {
        "output against arrivals convolved with the service curve"
    }
}

impl Check for ServiceCurveCheck {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult> {
        let (arr, dep) = ctx.served(None);
        let agg = Applicability::Applicable(ctx.report.aggregate.service_curve.clone());
        let mut out = vec![result("sc", None, None, &agg, |b| check_service_curve(&arr, &dep, b))];
        for m in &ctx.report.methods {
            for c in &m.classes {
                let (arr, dep) = ctx.served(Some(c.class));
                out.push(result("sc", Some(m.method), Some(c.class), &c.service_curve, |b| {
                    check_service_curve(&arr, &dep, b)
                }));
            }
        }
        out
    }
}

impl Named for DelayCheck {
    fn name(&self) -> &'static str {
        "delay"
    }
    fn description(&self) -> &'static str {
        "every packet delay against the delay bound"
    }
}

impl Check for DelayCheck {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult> {
        ctx.report
            .methods
            .iter()
            .map(|m| result("delay", Some(m.method), None, &m.delay, |d| check_delay(ctx.schedule, d)))
            .collect()
    }
}

impl Named for BacklogCheck {
    fn name(&self) -> &'static str {
        "backlog"
    }
    fn description(&self) -> &'static str {
        "backlog process against the backlog bound"
    }
}

impl Check for BacklogCheck {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult> {
        ctx.report
            .methods
            .iter()
            .map(|m| {
                result("backlog", Some(m.method), None, &m.backlog, |b| {
                    check_backlog(ctx.trace, ctx.schedule, b.value())
                })
            })
            .collect()
    }
}

impl Named for ConformanceCheck {
    fn name(&self) -> &'static str {
        "conformance"
    }
    fn description(&self) -> &'static str {
        "arrivals against each class's token bucket"
    }
}

impl Check for ConformanceCheck {
    fn run(&self, ctx: &Context<'_>) -> Vec<CheckResult> {
        let ok = Applicability::Applicable(());
        vec![result("conformance", None, None, &ok, |_| check_conformance(ctx.trace))]
    }
}

pub type CheckRegistry = Registry<dyn Check>;

/// `gr`, `sc`, `delay`, `backlog`, `conformance`, in that order.
pub fn default_checks() -> CheckRegistry {
    let mut r: CheckRegistry = Registry::new("check");
    r.register(Arc::new(GrCheck) as Arc<dyn Check>);
    r.register(Arc::new(ServiceCurveCheck) as Arc<dyn Check>);
    r.register(Arc::new(DelayCheck) as Arc<dyn Check>);
    r.register(Arc::new(BacklogCheck) as Arc<dyn Check>);
    r.register(Arc::new(ConformanceCheck) as Arc<dyn Check>);
    r
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub system: String,
    pub packets: usize,
    pub results: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn violations(&self) -> impl Iterator<Item = (&CheckResult, &Violation)> {
        self.results
            .iter()
            .filter_map(|r| r.outcome().map(|o| (r, o)))
            .flat_map(|(r, o)| o.violations.iter().map(move |v| (r, v)))
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }

    pub fn passed(&self) -> bool {
        self.violation_count() == 0
    }

    /// Checked subjects whose minimum margin is exactly zero.
    pub fn tight(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| r.outcome().is_some_and(Outcome::tight))
    }
}

/// Runs `checks` against a trace and its schedule using the bounds of `methods`.
pub fn run_checks(
    trace: &Trace,
    schedule: &Schedule,
    methods: &[Arc<dyn BoundMethod>],
    checks: &[Arc<dyn Check>],
) -> VerifyReport {
    let ctx = Context::new(trace, schedule, methods);
    VerifyReport {
        system: trace.config().name().to_string(),
        packets: trace.len(),
        results: checks.iter().flat_map(|c| c.run(&ctx)).collect(),
    }
}

/// Every registered check with every registered bound method.
pub fn verify_all(trace: &Trace, schedule: &Schedule) -> VerifyReport {
    let methods: Vec<_> = bounds::default_methods().iter().cloned().collect();
    let checks: Vec<_> = default_checks().iter().cloned().collect();
    run_checks(trace, schedule, &methods, &checks)
}
