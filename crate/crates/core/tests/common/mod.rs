//! Helpers shared by the integration tests: seeded random inputs and
//! brute-force oracles that do not go through the library's closed forms.

#![allow(dead_code)]

use std::sync::Arc;

use mcfifo::curve::{Curve, Extended, Segment, Tail};
use mcfifo::rational::{q, qi};
use mcfifo::sim::Trace;
use mcfifo::{Rational, SystemConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid config with `rho <= 1`. Capacities are small integers so
/// random traces stay short.
pub fn random_config(rng: &mut impl Rng) -> SystemConfig {
    let n = rng.random_range(1..=4);
    let caps = [10, 20, 25, 50, 100, 200, 1000];
    let mut weights: Vec<i128> = (0..n).map(|_| rng.random_range(0..=5)).collect();
    if weights.iter().all(|&w| w == 0) {
        weights[0] = 1;
    }
    let wsum: i128 = weights.iter().sum();
    // total utilization in (0, 1]
    let total = q(rng.random_range(1..=10), 10);
    let params: Vec<_> = weights
        .iter()
        .map(|&w| {
            let c = qi(*caps.choose(rng).unwrap());
            let share = &total * &q(w, wsum);
            let l = qi(rng.random_range(1..=20));
            let sigma = &l * &qi(rng.random_range(1..=4)) + qi(rng.random_range(0..=5));
            (c.clone(), &share * &c, sigma, l)
        })
        .collect();
    SystemConfig::from_params("random", params).expect("generated config is valid")
}

/// Random config where every class satisfies `sum_{m != n} r_m < C_min`
/// and `sum_n r_n <= C_min`, so both bound methods apply everywhere.
pub fn random_config_both_apply(rng: &mut impl Rng) -> SystemConfig {
    let n = rng.random_range(2..=4);
    let caps: Vec<i128> = (0..n).map(|_| rng.random_range(1..=100) * 1000).collect();
    let c_min = *caps.iter().min().unwrap();
    let budget = q(c_min * rng.random_range(1..=99), 100);
    let mut weights: Vec<i128> = (0..n).map(|_| rng.random_range(0..=5)).collect();
    if weights.iter().all(|&w| w == 0) {
        weights[0] = 1;
    }
    let wsum: i128 = weights.iter().sum();
    let params: Vec<_> = caps
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| {
            let l = qi(rng.random_range(100..=12_000));
            let sigma = &l + &qi(rng.random_range(0..=100_000));
            (qi(c), &budget * &q(w, wsum), sigma, l)
        })
        .collect();
    SystemConfig::from_params("both", params).expect("generated config is valid")
}

/// Random trace (not necessarily conformant) on `cfg` with arrivals on a
/// coarse grid so ties are common.
pub fn random_trace(rng: &mut impl Rng, cfg: &Arc<SystemConfig>, packets: usize) -> Trace {
    let mut t = Rational::zero();
    let mut records = Vec::with_capacity(packets);
    for _ in 0..packets {
        if rng.random_bool(0.6) {
            t = &t + &q(rng.random_range(1..=20), 4);
        }
        let class = rng.random_range(1..=cfg.len());
        let lmax = cfg.class(class).unwrap().max_packet.floor().to_i128().unwrap();
        records.push((t.clone(), class, qi(rng.random_range(1..=lmax))));
    }
    Trace::new(cfg.clone(), records).unwrap()
}

fn value(c: &Curve, t: &Rational) -> Extended {
    c.eval(t).expect("t >= 0")
}

fn add(a: &Extended, b: &Extended) -> Extended {
    match (a, b) {
        (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite(x + y),
        _ => Extended::Infinite,
    }
}

/// Rational grid `0, h, 2h, ...` up to and including `end`.
pub fn grid(h: &Rational, end: &Rational) -> Vec<Rational> {
    let mut out = Vec::new();
    let mut t = Rational::zero();
    while &t <= end {
        out.push(t.clone());
        t = &t + h;
    }
    out
}

/// Largest rational dividing every element (and 1).
pub fn gcd_step(values: &[Rational]) -> Rational {
    values
        .iter()
        .filter(|v| v.is_positive())
        .fold(Rational::one(), |g, v| g.gcd(v))
}

/// `(f ⊗ g)(t)` by brute force: `s` ranges over the input grid and over
/// `t` minus the input grid, which contains every breakpoint of
/// `s -> f(s) + g(t - s)` on `[0, t]`.
pub fn conv_oracle(f: &Curve, g: &Curve, t: &Rational, input_grid: &[Rational]) -> Extended {
    let mut best = Extended::Infinite;
    let mut consider = |s: &Rational| {
        if s.is_negative() || s > t {
            return;
        }
        let v = add(&value(f, s), &value(g, &(t - s)));
        if v < best {
            best = v;
        }
    };
    for s in input_grid {
        consider(s);
        consider(&(t - s));
    }
    consider(t);
    best
}

/// `sup_t alpha(t) - beta(t)` on the grid, or infinite when the gap keeps
/// growing past `end`.
pub fn vdev_oracle(alpha: &Curve, beta: &Curve, pts: &[Rational], end: &Rational) -> Extended {
    let gap = |t: &Rational| match (value(alpha, t), value(beta, t)) {
        (Extended::Finite(a), Extended::Finite(b)) => Some(&a - &b),
        _ => None,
    };
    if let (Some(g1), Some(g2)) = (gap(end), gap(&(end + end))) {
        if g2 > g1 {
            return Extended::Infinite;
        }
    }
    let best = pts.iter().filter_map(gap).max().unwrap_or_else(Rational::zero);
    Extended::Finite(Rational::max_of(&best, &Rational::zero()))
}

/// `inf { u >= 0 : beta(u) >= y }`, scanning the segments directly.
pub fn inverse_oracle(beta: &Curve, y: &Rational) -> Extended {
    let segs = beta.segments();
    if &segs[0].value >= y {
        return Extended::Finite(Rational::zero());
    }
    let cutoff = beta.infinite_after().cloned();
    for (i, s) in segs.iter().enumerate() {
        let end = segs.get(i + 1).map(|n| n.start.clone()).or_else(|| cutoff.clone());
        let end_val = end.as_ref().map(|e| &s.value + &(&s.slope * &(e - &s.start)));
        let reaches = match &end_val {
            Some(v) => v >= y,
            None => s.slope.is_positive(),
        };
        if reaches {
            if &s.value >= y {
                return Extended::Finite(s.start.clone());
            }
            return Extended::Finite(&s.start + &(&(y - &s.value) / &s.slope));
        }
    }
    match beta.tail() {
        Tail::InfiniteAfter { from } => Extended::Finite(from.clone()),
        Tail::Affine => Extended::Infinite,
    }
}

fn hgap(alpha: &Curve, beta: &Curve, t: &Rational) -> Extended {
    let y = value(alpha, t).finite().cloned().expect("arrival curves are finite");
    match inverse_oracle(beta, &y) {
        Extended::Finite(u) => Extended::Finite(Rational::max_of(&(&u - t), &Rational::zero())),
        Extended::Infinite => Extended::Infinite,
    }
}

/// `sup_t inf { tau >= 0 : alpha(t) <= beta(t + tau) }` by brute force.
///
/// `pts` must contain every breakpoint of alpha and every instant where
/// alpha crosses a breakpoint level of beta. Between consecutive points the
/// gap is affine, so its supremum over the cell is the larger of the left
/// end's right-limit (extrapolated from the midpoint) and the right end.
pub fn hdev_oracle(alpha: &Curve, beta: &Curve, pts: &[Rational], end: &Rational) -> Extended {
    let (a, b) = (hgap(alpha, beta, end), hgap(alpha, beta, &(end + end)));
    if a.is_infinite() || b > a {
        return Extended::Infinite;
    }
    let mut best = Rational::zero();
    let mut take = |v: Extended| -> bool {
        match v {
            Extended::Infinite => false,
            Extended::Finite(x) => {
                if x > best {
                    best = x;
                }
                true
            }
        }
    };
    for w in pts.windows(2) {
        let mid = (&w[0] + &w[1]) / qi(2);
        let (h0, hm, h1) = (hgap(alpha, beta, &w[0]), hgap(alpha, beta, &mid), hgap(alpha, beta, &w[1]));
        for h in [h0, hm.clone(), h1.clone()] {
            if !take(h) {
                return Extended::Infinite;
            }
        }
        if let (Extended::Finite(m), Extended::Finite(r)) = (hm, h1) {
            take(Extended::Finite(&(&m + &m) - &r));
        }
    }
    Extended::Finite(best)
}

/// Times where `alpha` reaches `level` (first crossing), found by scanning
/// segments; `None` when it never does.
pub fn crossing(alpha: &Curve, level: &Rational) -> Option<Rational> {
    match inverse_oracle(alpha, level) {
        Extended::Finite(t) => Some(t),
        Extended::Infinite => None,
    }
}

/// Concave curve: value `v0` at 0, integer breakpoints, strictly
/// decreasing non-negative integer slopes.
pub fn random_concave(rng: &mut impl Rng) -> Curve {
    let pieces = rng.random_range(1..=3);
    let mut slopes: Vec<i128> = (0..pieces).map(|_| rng.random_range(0..=6)).collect();
    slopes.sort_unstable_by(|a, b| b.cmp(a));
    slopes.dedup();
    let mut segs = Vec::new();
    let mut t = qi(0);
    let mut v = qi(rng.random_range(0..=10));
    for (i, s) in slopes.iter().enumerate() {
        if i > 0 {
            let dt = qi(rng.random_range(1..=5));
            v = &v + &(&qi(slopes[i - 1]) * &dt);
            t = &t + &dt;
        }
        segs.push(Segment { start: t.clone(), value: v.clone(), slope: qi(*s) });
    }
    Curve::from_segments(segs, Tail::Affine).unwrap()
}

/// Convex curve through the origin with non-decreasing integer slopes.
pub fn random_convex(rng: &mut impl Rng) -> Curve {
    let pieces = rng.random_range(1..=3);
    let mut slopes: Vec<i128> = (0..pieces).map(|_| rng.random_range(0..=5)).collect();
    slopes.sort_unstable();
    slopes.dedup();
    if *slopes.last().unwrap() == 0 {
        slopes.push(rng.random_range(1..=5));
    }
    let mut segs = Vec::new();
    let mut t = qi(0);
    let mut v = qi(0);
    for (i, s) in slopes.iter().enumerate() {
        if i > 0 {
            let dt = qi(rng.random_range(1..=5));
            v = &v + &(&qi(slopes[i - 1]) * &dt);
            t = &t + &dt;
        }
        segs.push(Segment { start: t.clone(), value: v.clone(), slope: qi(*s) });
    }
    let tail = if rng.random_bool(0.2) {
        Tail::InfiniteAfter { from: &t + &qi(rng.random_range(1..=5)) }
    } else {
        Tail::Affine
    };
    Curve::from_segments(segs, tail).unwrap()
}

pub fn random_rate_latency(rng: &mut impl Rng) -> Curve {
    Curve::rate_latency(qi(rng.random_range(1..=5)), qi(rng.random_range(0..=5))).unwrap()
}

pub fn random_impulse(rng: &mut impl Rng) -> Curve {
    Curve::impulse(qi(rng.random_range(0..=5))).unwrap()
}

/// Every breakpoint plus the start of an infinite tail.
pub fn knots(c: &Curve) -> Vec<Rational> {
    let mut out = c.breakpoints();
    if let Some(d) = c.infinite_after() {
        out.push(d.clone());
    }
    out
}

/// Random order of `items` keeping `last` at the end.
pub fn shuffled_with_last<T: Clone>(rng: &mut impl Rng, items: &[T], last: T) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v.push(last);
    v
}
