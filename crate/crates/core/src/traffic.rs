//! Conformant trace generators and the leaky-bucket conformance checker.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::registry::{Named, Registry};
use crate::sim::{Trace, TraceError};
use crate::system::SystemConfig;

/// Random arrival times are multiples of this many seconds.
pub const TIME_GRID_DENOM: i128 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrafficError {
    #[error("intensity must lie in [0, 1], got {0}")]
    Intensity(Rational),
    #[error("horizon must be positive, got {0}")]
    Horizon(Rational),
    #[error("class {0} does not exist")]
    UnknownClass(usize),
    #[error("class {class}: max_packet {max_packet} admits no integer packet length")]
    NoIntegerLength { class: usize, max_packet: Rational },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Inputs shared by all generators. Each generator reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub seed: u64,
    pub horizon: Rational,
    pub intensity: Rational,
    pub tagged: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            horizon: Rational::from_integer(10),
            intensity: Rational::new(9, 10),
            tagged: 1,
        }
    }
}

pub trait TrafficGenerator: Named + Send + Sync {
    fn generate(&self, config: &Arc<SystemConfig>, params: &GenParams) -> Result<Trace, TrafficError>;

    /// Header line recording how a trace was produced.
    fn provenance(&self, config: &SystemConfig, params: &GenParams) -> String;
}

pub type GeneratorRegistry = Registry<dyn TrafficGenerator>;

pub fn default_generators() -> GeneratorRegistry {
    let mut r: GeneratorRegistry = Registry::new("traffic generator");
    r.register(Arc::new(GreedyBurst) as Arc<dyn TrafficGenerator>);
    r.register(Arc::new(ShapedRandom) as Arc<dyn TrafficGenerator>);
    r
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GreedyBurst;

impl Named for GreedyBurst {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn description(&self) -> &'static str {
        "every class dumps its full burst at t=0, tagged class served last"
    }
}

impl TrafficGenerator for GreedyBurst {
    fn generate(&self, config: &Arc<SystemConfig>, params: &GenParams) -> Result<Trace, TrafficError> {
        greedy_burst(config, params.tagged)
    }

    fn provenance(&self, config: &SystemConfig, params: &GenParams) -> String {
        format!("generator=greedy system={} tagged={}", config.name(), params.tagged)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ShapedRandom;

impl Named for ShapedRandom {
    fn name(&self) -> &'static str {
        "random"
    }

    fn description(&self) -> &'static str {
        "seeded random packets passed through a per-class token bucket"
    }
}

impl TrafficGenerator for ShapedRandom {
    fn generate(&self, config: &Arc<SystemConfig>, params: &GenParams) -> Result<Trace, TrafficError> {
        shaped_random(config, params.seed, &params.horizon, &params.intensity)
    }

    fn provenance(&self, config: &SystemConfig, params: &GenParams) -> String {
        format!(
            "generator=random system={} seed={} horizon={} intensity={}",
            config.name(),
            params.seed,
            params.horizon,
            params.intensity
        )
    }
}

/// Splits `sigma` into packets of `l` bits plus one remainder packet.
fn burst_lengths(sigma: &Rational, l: &Rational) -> Vec<Rational> {
    let full = (sigma / l).floor();
    let count = full.to_i128().expect("burst packet count fits in i128");
    let mut out = vec![l.clone(); count as usize];
    let rem = sigma - &(&full * l);
    if rem.is_positive() {
        out.push(rem);
    }
    out
}

/// All classes release their whole burst at t=0. The tagged class is placed
/// last in the global order, so its final packet departs after everything.
pub fn greedy_burst(config: &Arc<SystemConfig>, tagged: usize) -> Result<Trace, TrafficError> {
    if config.class(tagged).is_none() {
        return Err(TrafficError::UnknownClass(tagged));
    }
    let order = config
        .classes()
        .iter()
        .filter(|c| c.id != tagged)
        .chain(config.class(tagged));
    let mut records = Vec::new();
    for c in order {
        for l in burst_lengths(&c.burst, &c.max_packet) {
            records.push((Rational::zero(), c.id, l));
        }
    }
    Ok(Trace::new(config.clone(), records)?)
}

fn grid_time(ticks: i128) -> Rational {
    Rational::new(ticks, TIME_GRID_DENOM)
}

fn ceil_ticks(t: &Rational) -> i128 {
    (t * &Rational::from_integer(TIME_GRID_DENOM))
        .ceil()
        .to_i128()
        .expect("time fits on the grid")
}

/// Per-class token-bucket-shaped random traffic.
///
/// Candidate packets have integer lengths uniform in `[1, floor(L_n)]` and
/// exponential gaps chosen so the mean offered rate is `intensity * r_n`.
/// A bucket of depth `sigma_n` filling at `r_n` (full at t=0) holds each
/// candidate until it conforms. Times live on a 1 ns grid; packets released
/// after `horizon` are dropped. Intensity 0 yields an empty trace.
pub fn shaped_random(
    config: &Arc<SystemConfig>,
    seed: u64,
    horizon: &Rational,
    intensity: &Rational,
) -> Result<Trace, TrafficError> {
    if intensity.is_negative() || intensity > &Rational::one() {
        return Err(TrafficError::Intensity(intensity.clone()));
    }
    if !horizon.is_positive() {
        return Err(TrafficError::Horizon(horizon.clone()));
    }
    if intensity.is_zero() {
        return Ok(Trace::empty(config.clone()));
    }
    let horizon_ticks = (horizon * &Rational::from_integer(TIME_GRID_DENOM))
        .floor()
        .to_i128()
        .expect("horizon fits on the grid");

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<(i128, usize, Rational)> = Vec::new();
    for c in config.classes() {
        let class_seed = master.next_u64();
        let lf = c.max_packet.floor().to_i128().unwrap_or(0);
        if lf < 1 {
            return Err(TrafficError::NoIntegerLength {
                class: c.id,
                max_packet: c.max_packet.clone(),
            });
        }
        if !c.rate.is_positive() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed);
        let mean_len = (lf as f64 + 1.0) / 2.0;
        let pkt_rate = intensity.to_f64() * c.rate.to_f64() / mean_len;
        let gap = Exp::new(pkt_rate).expect("positive packet rate");
        let fill_per_tick = &c.rate / &Rational::from_integer(TIME_GRID_DENOM);

        let mut candidate: i128 = 0;
        let mut last: i128 = 0;
        let mut tokens = c.burst.clone();
        loop {
            let dt: f64 = gap.sample(&mut rng);
            candidate += (dt * TIME_GRID_DENOM as f64).round() as i128;
            if candidate > horizon_ticks {
                break;
            }
            let len = Rational::from_integer(rng.random_range(1..=lf));
            let start = candidate.max(last);
            let mut avail = &tokens + &(&fill_per_tick * &Rational::from_integer(start - last));
            if avail > c.burst {
                avail = c.burst.clone();
            }
            let release = if avail >= len {
                start
            } else {
                let wait = &(&len - &avail) / &c.rate;
                ceil_ticks(&(&grid_time(start) + &wait))
            };
            if release > horizon_ticks {
                break;
            }
            if release > start {
                avail = &avail + &(&fill_per_tick * &Rational::from_integer(release - start));
                if avail > c.burst {
                    avail = c.burst.clone();
                }
            }
            debug_assert!(avail >= len);
            tokens = &avail - &len;
            last = release;
            records.push((release, c.id, len));
        }
    }
    // Stable sort keeps per-class emission order among equal instants.
    records.sort_by_key(|(t, class, _)| (*t, *class));
    let trace = Trace::new(
        config.clone(),
        records.into_iter().map(|(t, class, len)| (grid_time(t), class, len)),
    )?;
    Ok(trace)
}

/// Window `[s, t]` in which class `class` sent more than its arrival curve allows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConformanceViolation {
    pub class: usize,
    pub s: Rational,
    pub t: Rational,
    pub bits: Rational,
    pub allowed: Rational,
}

/// Worst window of one class: the largest `A_n[s, t] - r_n (t - s)` seen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassConformance {
    pub class: usize,
    pub burst: Rational,
    pub peak: Rational,
    pub window: Option<(Rational, Rational)>,
}

impl ClassConformance {
    /// `sigma_n - peak`; zero means some window is exactly tight.
    pub fn slack(&self) -> Rational {
        &self.burst - &self.peak
    }
}

/// Checks `A_n[s, t] <= r_n (t - s) + sigma_n` over all closed windows whose
/// ends are arrival instants, which covers every window for step arrivals.
///
/// Returns per-class worst windows on success, or the violation with the
/// earliest right end `t` (earliest class on ties).
pub fn conformance_check(trace: &Trace) -> Result<Vec<ClassConformance>, ConformanceViolation> {
    let cfg = trace.config();
    let mut summaries = Vec::with_capacity(cfg.len());
    let mut first: Option<ConformanceViolation> = None;
    for c in cfg.classes() {
        // Group this class's arrivals by instant.
        let mut instants: Vec<(Rational, Rational)> = Vec::new();
        for &i in &trace.class_indices(c.id) {
            let p = &trace.packets()[i];
            match instants.last_mut() {
                Some((t, bits)) if *t == p.arrival => *bits += &p.length,
                _ => instants.push((p.arrival.clone(), p.length.clone())),
            }
        }
        // excess(i, k) = (C_k - r t_k) + (r t_i - C_{i-1}); track the best i.
        let mut best_left: Option<(Rational, usize)> = None;
        let mut cum = Rational::zero();
        let mut peak: Option<(Rational, usize, usize)> = None;
        for (k, (t, bits)) in instants.iter().enumerate() {
            let left = &(&c.rate * t) - &cum;
            if best_left.as_ref().is_none_or(|(v, _)| left > *v) {
                best_left = Some((left, k));
            }
            cum += bits;
            let (lv, i) = best_left.as_ref().unwrap();
            let excess = &(&cum - &(&c.rate * t)) + lv;
            if peak.as_ref().is_none_or(|(v, _, _)| excess > *v) {
                peak = Some((excess.clone(), *i, k));
            }
            if excess > c.burst {
                let s = &instants[*i].0;
                let better = first.as_ref().is_none_or(|f| t < &f.t);
                if better {
                    let span = t - s;
                    first = Some(ConformanceViolation {
                        class: c.id,
                        s: s.clone(),
                        t: t.clone(),
                        bits: &excess + &(&c.rate * &span),
                        allowed: &c.burst + &(&c.rate * &span),
                    });
                }
                break;
            }
        }
        summaries.push(ClassConformance {
            class: c.id,
            burst: c.burst.clone(),
            peak: peak.as_ref().map(|p| p.0.clone()).unwrap_or_else(Rational::zero),
            window: peak.map(|(_, i, k)| (instants[i].0.clone(), instants[k].0.clone())),
        });
    }
    match first {
        Some(v) => Err(v),
        None => Ok(summaries),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::rational::{q, qi};
    use crate::sim::simulate;

    fn cfg(params: &[(i64, i64, i64, i64)]) -> Arc<SystemConfig> {
        Arc::new(
            SystemConfig::from_params(
                "t",
                params.iter().map(|&(c, r, s, l)| (qi(c as i128), qi(r as i128), qi(s as i128), qi(l as i128))),
            )
            .unwrap(),
        )
    }

    #[test]
    fn greedy_two_classes() {
        let c = cfg(&[(10, 1, 100, 100), (100, 1, 100, 100)]);
        let tr = greedy_burst(&c, 2).unwrap();
        let classes: Vec<_> = tr.packets().iter().map(|p| p.class).collect();
        assert_eq!(classes, vec![1, 2]);
        let sched = simulate(&tr);
        assert_eq!(sched.delays()[1], qi(11));
    }

    #[test]
    fn greedy_tagged_first_class_goes_last() {
        let c = cfg(&[(10, 1, 100, 100), (100, 1, 100, 100)]);
        let tr = greedy_burst(&c, 1).unwrap();
        assert_eq!(tr.packets().last().unwrap().class, 1);
        assert!(greedy_burst(&c, 3).is_err());
    }

    #[test]
    fn greedy_s1_delay_and_packets() {
        let c = Arc::new(presets::s1());
        let tr = greedy_burst(&c, 2).unwrap();
        for cl in c.classes() {
            let idx = tr.class_indices(cl.id);
            let total: Rational = idx.iter().map(|&i| tr.packets()[i].length.clone()).sum();
            assert_eq!(total, cl.burst);
            assert_eq!(idx.len() as i128, (&cl.burst / &cl.max_packet).ceil().to_i128().unwrap());
        }
        let sched = simulate(&tr);
        assert_eq!(sched.delays().last().unwrap(), &q(11, 100));
        assert_eq!(sched.max_delay().unwrap(), &q(11, 100));
    }

    #[test]
    fn greedy_remainder_packet() {
        let c = cfg(&[(10, 1, 250, 100)]);
        let tr = greedy_burst(&c, 1).unwrap();
        let lens: Vec<_> = tr.packets().iter().map(|p| p.length.clone()).collect();
        assert_eq!(lens, vec![qi(100), qi(100), qi(50)]);
    }

    #[test]
    fn single_class_one_packet() {
        let c = cfg(&[(10, 1, 100, 100)]);
        let sched = simulate(&greedy_burst(&c, 1).unwrap());
        assert_eq!(sched.delays(), &[qi(10)]);
    }

    #[test]
    fn greedy_is_tight_at_zero_window() {
        let c = Arc::new(presets::s1());
        let report = conformance_check(&greedy_burst(&c, 2).unwrap()).unwrap();
        for r in &report {
            assert!(r.slack().is_zero());
            assert_eq!(r.window, Some((Rational::zero(), Rational::zero())));
        }
    }

    #[test]
    fn burst_overflow_detected_at_single_instant() {
        let c = cfg(&[(10, 1, 100, 100)]);
        let tr = Trace::new(c, vec![(qi(0), 1, qi(100)), (qi(0), 1, qi(1))]).unwrap();
        let v = conformance_check(&tr).unwrap_err();
        assert_eq!((v.class, v.s.clone(), v.t.clone()), (1, qi(0), qi(0)));
        assert_eq!(v.bits, qi(101));
        assert_eq!(v.allowed, qi(100));
    }

    #[test]
    fn violation_over_a_window() {
        // r = 1, sigma = 10: 10 bits at t=0 and 3 bits at t=2 exceed 12.
        let c = cfg(&[(10, 1, 10, 10)]);
        let tr = Trace::new(c, vec![(qi(0), 1, qi(10)), (qi(2), 1, qi(3))]).unwrap();
        let v = conformance_check(&tr).unwrap_err();
        assert_eq!((v.s, v.t, v.bits, v.allowed), (qi(0), qi(2), qi(13), qi(12)));
    }

    #[test]
    fn random_is_deterministic_and_conformant() {
        let c = Arc::new(presets::s1());
        let a = shaped_random(&c, 7, &qi(1), &q(9, 10)).unwrap();
        let b = shaped_random(&c, 7, &qi(1), &q(9, 10)).unwrap();
        assert_eq!(a.packets(), b.packets());
        assert!(!a.is_empty());
        conformance_check(&a).unwrap();
        let other = shaped_random(&c, 8, &qi(1), &q(9, 10)).unwrap();
        assert_ne!(a.packets(), other.packets());
        for p in a.packets() {
            assert!(p.arrival <= qi(1));
            assert!(p.length.is_integer() && p.length >= qi(1));
        }
    }

    #[test]
    fn random_parameter_checks() {
        let c = Arc::new(presets::s1());
        assert!(shaped_random(&c, 1, &qi(1), &qi(0)).unwrap().is_empty());
        assert!(matches!(shaped_random(&c, 1, &qi(1), &q(11, 10)), Err(TrafficError::Intensity(_))));
        assert!(matches!(shaped_random(&c, 1, &qi(1), &q(-1, 10)), Err(TrafficError::Intensity(_))));
        assert!(matches!(shaped_random(&c, 1, &qi(0), &qi(1)), Err(TrafficError::Horizon(_))));
    }

    #[test]
    fn zero_rate_class_is_silent() {
        let c = cfg(&[(10, 0, 10, 5), (10, 5, 10, 5)]);
        let tr = shaped_random(&c, 3, &qi(20), &qi(1)).unwrap();
        assert!(tr.class_indices(1).is_empty());
        assert!(!tr.class_indices(2).is_empty());
    }

    #[test]
    fn registry_lookup() {
        let reg = default_generators();
        assert_eq!(reg.names(), vec!["greedy", "random"]);
        let c = Arc::new(presets::s1());
        let p = GenParams { tagged: 2, ..GenParams::default() };
        let tr = reg.get("greedy").unwrap().generate(&c, &p).unwrap();
        assert_eq!(tr.packets().last().unwrap().class, 2);
        assert!(reg.get("random").unwrap().provenance(&c, &p).contains("seed=0"));
    }
}
