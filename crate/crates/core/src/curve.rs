//! Exact piecewise-linear curves and the min-plus operations the bound
//! derivations rely on.
//!
//! A [`Curve`] is a continuous, non-decreasing piecewise-linear function on
//! `t >= 0`, optionally jumping to `+inf` after a threshold. That covers
//! token-bucket arrival curves (with the burst present at `t = 0`),
//! rate-latency service curves and the impulse `delta_D`. Operations accept
//! the shape combinations they can solve exactly and reject the rest with
//! [`CurveError::Unsupported`].

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: Rational,
        reason: &'static str,
    },
    #[error("curve evaluated at negative time {0}")]
    NegativeTime(Rational),
    #[error("unsupported curve shapes for {op}: {reason}")]
    Unsupported { op: &'static str, reason: String },
    #[error("malformed curve: {0}")]
    Malformed(String),
}

/// A value in `[0, +inf]` (or any rational extended with `+inf`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extended {
    Finite(Rational),
    Infinite,
}

impl Extended {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::Infinite)
    }
}

impl From<Rational> for Extended {
    fn from(v: Rational) -> Self {
        Extended::Finite(v)
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Extended {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Ordering::Less,
            (Extended::Infinite, Extended::Finite(_)) => Ordering::Greater,
            (Extended::Infinite, Extended::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationKind {
    /// Time gap, in seconds.
    Horizontal,
    /// Value gap, in bits.
    Vertical,
}

/// Result of a horizontal or vertical deviation; always `>= 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub kind: DeviationKind,
    pub value: Extended,
}

/// One linear piece: value `value` at time `start`, rising with `slope`
/// until the next segment starts (or the tail takes over).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "t")]
    pub start: Rational,
    #[serde(rename = "v")]
    pub value: Rational,
    pub slope: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// The last segment extends to infinity.
    Affine,
    /// The curve is `+inf` for every `t > from`; finite on `[0, from]`.
    InfiniteAfter { from: Rational },
}

#[derive(Serialize, Deserialize)]
struct CurveRecord {
    breakpoints: Vec<Segment>,
    tail: Tail,
}

/// Continuous non-decreasing piecewise-linear curve in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CurveRecord", into = "CurveRecord")]
pub struct Curve {
    segments: Vec<Segment>,
    tail: Tail,
}

impl TryFrom<CurveRecord> for Curve {
    type Error = CurveError;
    fn try_from(r: CurveRecord) -> Result<Self, CurveError> {
        Curve::from_segments(r.breakpoints, r.tail)
    }
}

impl From<Curve> for CurveRecord {
    fn from(c: Curve) -> Self {
        CurveRecord {
            breakpoints: c.segments,
            tail: c.tail,
        }
    }
}

fn invalid(name: &'static str, value: &Rational, reason: &'static str) -> CurveError {
    CurveError::InvalidParameter {
        name,
        value: value.clone(),
        reason,
    }
}

impl Curve {
    /// Validates and canonicalizes a list of segments.
    pub fn from_segments(segments: Vec<Segment>, tail: Tail) -> Result<Self, CurveError> {
        let first = segments
            .first()
            .ok_or_else(|| CurveError::Malformed("no segments".into()))?;
        if !first.start.is_zero() {
            return Err(CurveError::Malformed("first breakpoint must be at t = 0".into()));
        }
        if first.value.is_negative() {
            return Err(CurveError::Malformed("negative value at t = 0".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if s.slope.is_negative() {
                return Err(CurveError::Malformed(format!("negative slope in segment {i}")));
            }
            if i > 0 {
                let p = &segments[i - 1];
                if s.start <= p.start {
                    return Err(CurveError::Malformed(
                        "breakpoint times must be strictly increasing".into(),
                    ));
                }
                let expected = &p.value + &(&p.slope * &(&s.start - &p.start));
                if expected != s.value {
                    return Err(CurveError::Malformed(format!(
                        "discontinuity at t = {}: {} != {}",
                        s.start, s.value, expected
                    )));
                }
            }
        }
        if let Tail::InfiniteAfter { from } = &tail {
            if from < &segments.last().unwrap().start {
                return Err(CurveError::Malformed(
                    "infinite tail starts before the last breakpoint".into(),
                ));
            }
        }
        Ok(Self::canonical(segments, tail))
    }

    fn canonical(segments: Vec<Segment>, tail: Tail) -> Self {
        let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
        for s in segments {
            if let Tail::InfiniteAfter { from } = &tail {
                // a segment starting at the threshold has no extent
                if &s.start >= from && !out.is_empty() {
                    continue;
                }
            }
            match out.last() {
                Some(p) if p.slope == s.slope => {}
                _ => out.push(s),
            }
        }
        if let Tail::InfiniteAfter { from } = &tail {
            let last = out.last_mut().unwrap();
            if &last.start == from {
                last.slope = Rational::zero();
            }
            if out.len() >= 2 && out[out.len() - 1].slope == out[out.len() - 2].slope {
                out.pop();
            }
        }
        Curve {
            segments: out,
            tail,
        }
    }

    /// Builds a finite curve through `(t, v)` points (first at `t = 0`)
    /// continuing with `final_slope` after the last one.
    fn through_points(points: &[(Rational, Rational)], final_slope: Rational) -> Self {
        let mut segs = Vec::with_capacity(points.len());
        for w in points.windows(2) {
            let (t0, v0) = &w[0];
            let (t1, v1) = &w[1];
            if t1 == t0 {
                continue;
            }
            segs.push(Segment {
                start: t0.clone(),
                value: v0.clone(),
                slope: (v1 - v0) / (t1 - t0),
            });
        }
        let (t, v) = points.last().unwrap().clone();
        segs.push(Segment {
            start: t,
            value: v,
            slope: final_slope,
        });
        Self::canonical(segs, Tail::Affine)
    }

    /// Leaky-bucket arrival curve `r t + sigma`, with the burst present at
    /// `t = 0`.
    pub fn token_bucket(rate: Rational, burst: Rational) -> Result<Self, CurveError> {
        if rate.is_negative() {
            return Err(invalid("rate", &rate, "must be >= 0"));
        }
        if burst.is_negative() {
            return Err(invalid("burst", &burst, "must be >= 0"));
        }
        Ok(Curve {
            segments: vec![Segment {
                start: Rational::zero(),
                value: burst,
                slope: rate,
            }],
            tail: Tail::Affine,
        })
    }

    /// `R (t - T)^+`.
    pub fn rate_latency(rate: Rational, latency: Rational) -> Result<Self, CurveError> {
        if !rate.is_positive() {
            return Err(invalid("rate", &rate, "must be > 0"));
        }
        if latency.is_negative() {
            return Err(invalid("latency", &latency, "must be >= 0"));
        }
        let mut segs = Vec::with_capacity(2);
        if latency.is_positive() {
            segs.push(Segment {
                start: Rational::zero(),
                value: Rational::zero(),
                slope: Rational::zero(),
            });
        }
        segs.push(Segment {
            start: latency,
            value: Rational::zero(),
            slope: rate,
        });
        Ok(Curve {
            segments: segs,
            tail: Tail::Affine,
        })
    }

    /// `delta_D`: zero on `[0, D]`, infinite afterwards.
    pub fn impulse(delay: Rational) -> Result<Self, CurveError> {
        if delay.is_negative() {
            return Err(invalid("delay", &delay, "must be >= 0"));
        }
        Ok(Curve {
            segments: vec![Segment {
                start: Rational::zero(),
                value: Rational::zero(),
                slope: Rational::zero(),
            }],
            tail: Tail::InfiniteAfter { from: delay },
        })
    }

    pub fn zero() -> Self {
        Self::token_bucket(Rational::zero(), Rational::zero()).unwrap()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    /// Threshold after which the curve is infinite, if any.
    pub fn infinite_after(&self) -> Option<&Rational> {
        match &self.tail {
            Tail::InfiniteAfter { from } => Some(from),
            Tail::Affine => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.tail, Tail::Affine)
    }

    /// Slope of the final segment.
    pub fn final_slope(&self) -> &Rational {
        &self.segments.last().unwrap().slope
    }

    /// Non-decreasing slopes; an infinite tail counts as an infinite slope.
    pub fn is_convex(&self) -> bool {
        self.segments.windows(2).all(|w| w[0].slope <= w[1].slope)
    }

    /// Finite with non-increasing slopes.
    pub fn is_concave(&self) -> bool {
        self.is_finite() && self.segments.windows(2).all(|w| w[0].slope >= w[1].slope)
    }

    /// If the curve is `R (t - T)^+` for some `R >= 0`, returns `(R, T)`.
    pub fn as_rate_latency(&self) -> Option<(Rational, Rational)> {
        if !self.is_finite() || !self.segments[0].value.is_zero() {
            return None;
        }
        match self.segments.as_slice() {
            [s] => Some((s.slope.clone(), Rational::zero())),
            [z, s] if z.slope.is_zero() => Some((s.slope.clone(), s.start.clone())),
            _ => None,
        }
    }

    fn segment_index(&self, t: &Rational) -> usize {
        self.segments.partition_point(|s| &s.start <= t) - 1
    }

    fn eval_finite_part(&self, t: &Rational) -> Rational {
        let s = &self.segments[self.segment_index(t)];
        &s.value + &(&s.slope * &(t - &s.start))
    }

    /// Exact value at `t >= 0`.
    pub fn eval(&self, t: &Rational) -> Result<Extended, CurveError> {
        if t.is_negative() {
            return Err(CurveError::NegativeTime(t.clone()));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: &Rational) -> Extended {
        if let Some(d) = self.infinite_after() {
            if t > d {
                return Extended::Infinite;
            }
        }
        Extended::Finite(self.eval_finite_part(t))
    }

    /// Breakpoint times, including the infinite-tail threshold.
    pub fn breakpoints(&self) -> Vec<Rational> {
        let mut v: Vec<Rational> = self.segments.iter().map(|s| s.start.clone()).collect();
        if let Some(d) = self.infinite_after() {
            if v.last() != Some(d) {
                v.push(d.clone());
            }
        }
        v
    }

    /// `f(max(0, t - d))`: convolution with `delta_d` for any curve.
    fn shift_right(&self, d: &Rational) -> Self {
        if d.is_zero() {
            return self.clone();
        }
        let mut segs = vec![Segment {
            start: Rational::zero(),
            value: self.segments[0].value.clone(),
            slope: Rational::zero(),
        }];
        segs.extend(self.segments.iter().map(|s| Segment {
            start: &s.start + d,
            value: s.value.clone(),
            slope: s.slope.clone(),
        }));
        let tail = match &self.tail {
            Tail::Affine => Tail::Affine,
            Tail::InfiniteAfter { from } => Tail::InfiniteAfter { from: from + d },
        };
        Self::canonical(segs, tail)
    }

    /// Pointwise minimum of two finite curves.
    fn pointwise_min(&self, other: &Curve) -> Self {
        debug_assert!(self.is_finite() && other.is_finite());
        let mut ts = merged_times(&self.breakpoints(), &other.breakpoints());
        // crossings inside each interval and in the tails
        let mut extra = Vec::new();
        for (i, t0) in ts.iter().enumerate() {
            let (fa, ga) = (self.eval_finite_part(t0), other.eval_finite_part(t0));
            let fs = &self.segments[self.segment_index(t0)].slope;
            let gs = &other.segments[other.segment_index(t0)].slope;
            if fs == gs {
                continue;
            }
            // f(t0) + fs x = g(t0) + gs x
            let x = (&ga - &fa) / (fs - gs);
            if !x.is_positive() {
                continue;
            }
            let tc = t0 + &x;
            if ts.get(i + 1).is_none_or(|t1| &tc < t1) {
                extra.push(tc);
            }
        }
        ts = merged_times(&ts, &extra);
        let points: Vec<(Rational, Rational)> = ts
            .iter()
            .map(|t| {
                let v = Rational::min_of(&self.eval_finite_part(t), &other.eval_finite_part(t));
                (t.clone(), v)
            })
            .collect();
        let last = ts.last().unwrap();
        let fv = self.eval_finite_part(last);
        let gv = other.eval_finite_part(last);
        let slope = match fv.cmp(&gv) {
            Ordering::Less => self.final_slope().clone(),
            Ordering::Greater => other.final_slope().clone(),
            Ordering::Equal => Rational::min_of(self.final_slope(), other.final_slope()),
        };
        Self::through_points(&points, slope)
    }

    /// Lower pseudo-inverse `inf { u >= 0 : f(u) >= y }`.
    fn lower_inverse(&self, y: &Rational) -> Extended {
        if y <= &self.segments[0].value {
            return Extended::Finite(Rational::zero());
        }
        for (i, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map(|n| n.start.clone()).or_else(|| {
                self.infinite_after().cloned()
            });
            if s.slope.is_positive() {
                let u = &s.start + &((y - &s.value) / &s.slope);
                match &end {
                    Some(e) if &u > e => continue,
                    _ => return Extended::Finite(u),
                }
            }
        }
        match self.infinite_after() {
            Some(d) => Extended::Finite(d.clone()),
            None => Extended::Infinite,
        }
    }

    /// Right limit of [`Self::lower_inverse`] at `y`, which for a
    /// continuous curve is `sup { u : f(u) <= y }` once `y >= f(0)`.
    fn lower_inverse_right(&self, y: &Rational) -> Extended {
        if y < &self.segments[0].value {
            return Extended::Finite(Rational::zero());
        }
        let mut best = Rational::zero();
        for (i, s) in self.segments.iter().enumerate() {
            let end = self
                .segments
                .get(i + 1)
                .map(|n| n.start.clone())
                .or_else(|| self.infinite_after().cloned());
            if &s.value > y {
                break;
            }
            match end {
                Some(e) => {
                    let ve = &s.value + &(&s.slope * &(&e - &s.start));
                    if &ve <= y {
                        best = e;
                        continue;
                    }
                    best = &s.start + &((y - &s.value) / &s.slope);
                    break;
                }
                None => {
                    if s.slope.is_zero() {
                        return Extended::Infinite;
                    }
                    best = &s.start + &((y - &s.value) / &s.slope);
                    break;
                }
            }
        }
        Extended::Finite(best)
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((r, t)) = self.as_rate_latency() {
            if r.is_positive() {
                return write!(f, "rate-latency(R={r}, T={t})");
            }
        }
        let parts: Vec<String> = self
            .segments
            .iter()
            .map(|s| format!("({}, {}, {})", s.start, s.value, s.slope))
            .collect();
        write!(f, "[{}]", parts.join(" "))?;
        if let Some(d) = self.infinite_after() {
            write!(f, " inf after {d}")?;
        }
        Ok(())
    }
}

fn merged_times(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut v: Vec<Rational> = a.iter().chain(b).cloned().collect();
    v.sort();
    v.dedup();
    v
}

fn unsupported(op: &'static str, f: &Curve, g: &Curve) -> CurveError {
    CurveError::Unsupported {
        op,
        reason: format!("{f} with {g}"),
    }
}

/// Convolution of two convex curves by merging their segments in slope
/// order.
fn convolve_convex(f: &Curve, g: &Curve) -> Curve {
    // (length, slope); None length marks an unbounded piece
    let mut pieces: Vec<(Option<Rational>, Rational)> = Vec::new();
    let mut infinite_ends = 0;
    for c in [f, g] {
        for (i, s) in c.segments.iter().enumerate() {
            let end = c
                .segments
                .get(i + 1)
                .map(|n| n.start.clone())
                .or_else(|| c.infinite_after().cloned());
            match end {
                Some(e) => {
                    let len = &e - &s.start;
                    if len.is_positive() {
                        pieces.push((Some(len), s.slope.clone()));
                    }
                }
                None => pieces.push((None, s.slope.clone())),
            }
        }
        if c.infinite_after().is_some() {
            infinite_ends += 1;
        }
    }
    pieces.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.is_none().cmp(&b.0.is_none())));
    let mut t = Rational::zero();
    let mut v = &f.segments[0].value + &g.segments[0].value;
    let mut segs = Vec::new();
    for (len, slope) in pieces {
        segs.push(Segment {
            start: t.clone(),
            value: v.clone(),
            slope: slope.clone(),
        });
        match len {
            Some(len) => {
                v = &v + &(&slope * &len);
                t = &t + &len;
            }
            None => return Curve::canonical(segs, Tail::Affine),
        }
    }
    debug_assert_eq!(infinite_ends, 2);
    if segs.is_empty() {
        segs.push(Segment {
            start: Rational::zero(),
            value: v,
            slope: Rational::zero(),
        });
    }
    Curve::canonical(segs, Tail::InfiniteAfter { from: t })
}

/// Min-plus convolution `inf_{0<=s<=t} f(s) + g(t-s)`.
///
/// Supported: two convex curves (token buckets are affine, hence convex),
/// and a concave curve against an impulse or a rate-latency curve.
pub fn min_plus_conv(f: &Curve, g: &Curve) -> Result<Curve, CurveError> {
    if f.is_convex() && g.is_convex() {
        return Ok(convolve_convex(f, g));
    }
    let (concave, other) = if f.is_concave() { (f, g) } else { (g, f) };
    if !concave.is_concave() {
        return Err(unsupported("min_plus_conv", f, g));
    }
    if let Some(d) = other.infinite_after() {
        let first = &other.segments[0];
        if other.segments.len() == 1 && first.value.is_zero() && first.slope.is_zero() {
            return Ok(concave.shift_right(d));
        }
    }
    if let Some((rate, latency)) = other.as_rate_latency() {
        let line = Curve::token_bucket(rate, concave.segments[0].value.clone())?;
        return Ok(concave.pointwise_min(&line).shift_right(&latency));
    }
    Err(unsupported("min_plus_conv", f, g))
}

fn check_deviation_shapes(op: &'static str, alpha: &Curve, beta: &Curve) -> Result<(), CurveError> {
    if alpha.is_concave() && beta.is_convex() {
        Ok(())
    } else {
        Err(unsupported(op, alpha, beta))
    }
}

/// `sup_t inf { tau >= 0 : alpha(t) <= beta(t + tau) }` for a concave
/// `alpha` and a convex `beta`.
pub fn horizontal_deviation(alpha: &Curve, beta: &Curve) -> Result<Deviation, CurveError> {
    check_deviation_shapes("horizontal_deviation", alpha, beta)?;
    let done = |value| {
        Ok(Deviation {
            kind: DeviationKind::Horizontal,
            value,
        })
    };
    // long-run growth
    if beta.is_finite() && alpha.final_slope() > beta.final_slope() {
        return done(Extended::Infinite);
    }
    let mut candidates: Vec<Rational> = alpha.breakpoints();
    for level in beta.breakpoints().iter().map(|u| beta.eval_finite_part(u)) {
        if let Extended::Finite(t) = alpha.lower_inverse(&level) {
            candidates.push(t);
        }
    }
    candidates.sort();
    candidates.dedup();
    let mut best = Rational::zero();
    for t in &candidates {
        let y = alpha.eval_finite_part(t);
        let mut values = vec![beta.lower_inverse(&y)];
        if alpha.segments[alpha.segment_index(t)].slope.is_positive() {
            values.push(beta.lower_inverse_right(&y));
        }
        for v in values {
            match v {
                Extended::Infinite => return done(Extended::Infinite),
                Extended::Finite(u) => {
                    let h = &u - t;
                    if h > best {
                        best = h;
                    }
                }
            }
        }
    }
    done(Extended::Finite(best))
}

/// `sup_t alpha(t) - beta(t)`, clamped at zero, for a concave `alpha` and a
/// convex `beta`.
pub fn vertical_deviation(alpha: &Curve, beta: &Curve) -> Result<Deviation, CurveError> {
    check_deviation_shapes("vertical_deviation", alpha, beta)?;
    let done = |value| {
        Ok(Deviation {
            kind: DeviationKind::Vertical,
            value,
        })
    };
    if beta.is_finite() && alpha.final_slope() > beta.final_slope() {
        return done(Extended::Infinite);
    }
    let horizon = beta.infinite_after();
    let mut best = Rational::zero();
    for t in merged_times(&alpha.breakpoints(), &beta.breakpoints()) {
        if horizon.is_some_and(|d| &t > d) {
            continue;
        }
        let gap = alpha.eval_finite_part(&t) - beta.eval_finite_part(&t);
        if gap > best {
            best = gap;
        }
    }
    done(Extended::Finite(best))
}

/// True iff `f(t) >= g(t)` for every `t >= 0`.
pub fn dominates(f: &Curve, g: &Curve) -> bool {
    let ts = merged_times(&f.breakpoints(), &g.breakpoints());
    let mut probes = Vec::with_capacity(2 * ts.len() + 1);
    for w in ts.windows(2) {
        probes.push(w[0].clone());
        probes.push((&w[0] + &w[1]) / Rational::from_integer(2));
    }
    let last = ts.last().unwrap().clone();
    probes.push(last.clone());
    probes.push(&last + &Rational::one());
    if probes
        .iter()
        .any(|t| f.eval_unchecked(t) < g.eval_unchecked(t))
    {
        return false;
    }
    // beyond the last breakpoint both are affine or infinite
    match (f.is_finite(), g.is_finite()) {
        (true, true) => f.final_slope() >= g.final_slope(),
        (true, false) => false,
        (false, _) => true,
    }
}
