//! Exact event-driven execution of the multiclass FIFO server.
//!
//! Packets are served in trace order; a packet of class `n` occupies the
//! server for `l / C_n`. Departures follow
//! `d_j = max(a_j, d_{j-1}) + l_j / C_n` with `d_0 = 0`. Packets count as
//! arrived (departed) at the instant their last bit arrives (leaves), and
//! cumulative processes are right-continuous.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::system::SystemConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("packet {index}: class {class} does not exist")]
    UnknownClass { index: usize, class: usize },
    #[error("packet {index}: length {length} outside (0, {max}]")]
    BadLength {
        index: usize,
        length: Rational,
        max: Rational,
    },
    #[error("packet {index}: arrival {arrival} earlier than the previous packet")]
    OutOfOrder { index: usize, arrival: Rational },
    #[error("packet {index}: negative arrival {arrival}")]
    NegativeArrival { index: usize, arrival: Rational },
    #[error("schedule has {got} departures for {expected} packets")]
    ScheduleLength { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Packet {
    /// 1-based class id.
    pub class: usize,
    /// 1-based index within the class.
    pub seq: usize,
    pub arrival: Rational,
    /// Bits, or seconds of work in a normalized trace.
    pub length: Rational,
}

/// Packets in global FIFO order (ties at equal arrival times broken by
/// position) together with the configuration they run on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    config: Arc<SystemConfig>,
    packets: Vec<Packet>,
}

impl Trace {
    /// Validates `(arrival, class, length)` records given in global order.
    pub fn new<I>(config: Arc<SystemConfig>, records: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (Rational, usize, Rational)>,
    {
        let mut counts = vec![0usize; config.len()];
        let mut packets: Vec<Packet> = Vec::new();
        for (index, (arrival, class, length)) in records.into_iter().enumerate() {
            let spec = config
                .class(class)
                .ok_or(TraceError::UnknownClass { index, class })?;
            if !length.is_positive() || length > spec.max_packet {
                return Err(TraceError::BadLength {
                    index,
                    length,
                    max: spec.max_packet.clone(),
                });
            }
            if arrival.is_negative() {
                return Err(TraceError::NegativeArrival { index, arrival });
            }
            if packets.last().is_some_and(|p| p.arrival > arrival) {
                return Err(TraceError::OutOfOrder { index, arrival });
            }
            counts[class - 1] += 1;
            packets.push(Packet {
                class,
                seq: counts[class - 1],
                arrival,
                length,
            });
        }
        Ok(Trace { config, packets })
    }

    pub fn empty(config: Arc<SystemConfig>) -> Self {
        Trace {
            config,
            packets: Vec::new(),
        }
    }

    pub fn config(&self) -> &Arc<SystemConfig> {
        &self.config
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Global indices of class `n`'s packets, in order.
    pub fn class_indices(&self, n: usize) -> Vec<usize> {
        (0..self.packets.len())
            .filter(|&j| self.packets[j].class == n)
            .collect()
    }

    /// Transmission time `l / C_n` of packet `j`.
    pub fn service_time(&self, j: usize) -> Rational {
        let p = &self.packets[j];
        &p.length / &self.config.class(p.class).unwrap().capacity
    }
}

/// Departure time and delay of every packet, in trace order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    departures: Vec<Rational>,
    delays: Vec<Rational>,
}

impl Schedule {
    /// Wraps externally supplied departures (e.g. read from a file).
    pub fn from_departures(trace: &Trace, departures: Vec<Rational>) -> Result<Self, TraceError> {
        if departures.len() != trace.len() {
            return Err(TraceError::ScheduleLength {
                expected: trace.len(),
                got: departures.len(),
            });
        }
        let delays = departures
            .iter()
            .zip(trace.packets())
            .map(|(d, p)| d - &p.arrival)
            .collect();
        Ok(Schedule { departures, delays })
    }

    pub fn departures(&self) -> &[Rational] {
        &self.departures
    }

    pub fn delays(&self) -> &[Rational] {
        &self.delays
    }

    pub fn max_delay(&self) -> Option<&Rational> {
        self.delays.iter().max()
    }

    pub fn len(&self) -> usize {
        self.departures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.departures.is_empty()
    }
}

/// Runs the FIFO recursion over the trace.
pub fn simulate(trace: &Trace) -> Schedule {
    let capacities: Vec<&Rational> = trace.config.classes().iter().map(|c| &c.capacity).collect();
    let mut departures = Vec::with_capacity(trace.len());
    let mut delays = Vec::with_capacity(trace.len());
    let mut last = Rational::zero();
    for p in &trace.packets {
        let start = if p.arrival > last { &p.arrival } else { &last };
        let d = start + &(&p.length / capacities[p.class - 1]);
        delays.push(&d - &p.arrival);
        departures.push(d.clone());
        last = d;
    }
    Schedule { departures, delays }
}

/// The unit-rate reference trace: same arrivals and order, lengths
/// `l / C_n`, run on [`SystemConfig::normalized`].
pub fn normalize(trace: &Trace) -> Trace {
    let config = Arc::new(trace.config.normalized());
    let packets = trace
        .packets
        .iter()
        .enumerate()
        .map(|(j, p)| Packet {
            length: trace.service_time(j),
            ..p.clone()
        })
        .collect();
    Trace { config, packets }
}

/// Right-continuous step function sampled at its jump times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepFunction {
    /// `(t, value on [t, next t))`, times strictly increasing from 0.
    pub points: Vec<(Rational, Rational)>,
}

impl StepFunction {
    pub fn value_at(&self, t: &Rational) -> Rational {
        let i = self.points.partition_point(|(s, _)| s <= t);
        if i == 0 {
            Rational::zero()
        } else {
            self.points[i - 1].1.clone()
        }
    }

    pub fn sup(&self) -> Rational {
        self.points
            .iter()
            .map(|(_, v)| v)
            .max()
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn times(&self) -> impl Iterator<Item = &Rational> {
        self.points.iter().map(|(t, _)| t)
    }
}

/// `A_w(t) - A*_w(t)` at every event time of the trace, where packet `j`
/// contributes `weight(j)` (or nothing when `None`).
fn weighted_backlog(
    trace: &Trace,
    schedule: &Schedule,
    weight: impl Fn(usize) -> Option<Rational>,
) -> StepFunction {
    let n = trace.len();
    let mut deps: Vec<usize> = (0..n).collect();
    deps.sort_by(|&a, &b| schedule.departures[a].cmp(&schedule.departures[b]));
    let mut points = vec![(Rational::zero(), Rational::zero())];
    let mut level = Rational::zero();
    let (mut i, mut k) = (0, 0);
    while i < n || k < n {
        let t = match (trace.packets.get(i), deps.get(k)) {
            (Some(p), Some(&d)) => Rational::min_of(&p.arrival, &schedule.departures[d]),
            (Some(p), None) => p.arrival.clone(),
            (None, Some(&d)) => schedule.departures[d].clone(),
            (None, None) => unreachable!(),
        };
        while i < n && trace.packets[i].arrival == t {
            if let Some(w) = weight(i) {
                level += w;
            }
            i += 1;
        }
        while k < n && schedule.departures[deps[k]] == t {
            if let Some(w) = weight(deps[k]) {
                level -= w;
            }
            k += 1;
        }
        match points.last_mut() {
            Some(last) if last.0 == t => last.1 = level.clone(),
            _ => points.push((t, level.clone())),
        }
    }
    StepFunction { points }
}

/// Backlog `B(t) = A(t) - A*(t)` in bits at every event time.
pub fn backlog_process(trace: &Trace, schedule: &Schedule) -> StepFunction {
    weighted_backlog(trace, schedule, |j| Some(trace.packets[j].length.clone()))
}

/// Backlog of class `n` alone, `B_n(t) = A_n(t) - A*_n(t)`, at every event
/// time of the whole trace.
pub fn per_class_backlog(trace: &Trace, schedule: &Schedule, n: usize) -> StepFunction {
    weighted_backlog(trace, schedule, |j| {
        let p = &trace.packets[j];
        (p.class == n).then(|| p.length.clone())
    })
}
