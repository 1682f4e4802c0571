//! Traffic-class configuration of the multiclass FIFO server.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

/// One traffic class: service rate `C_n`, leaky bucket `(r_n, sigma_n)` and
/// maximum packet length `L_n`. Rates in bits/second, sizes in bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// 1-based class index.
    pub id: usize,
    pub capacity: Rational,
    pub rate: Rational,
    pub burst: Rational,
    pub max_packet: Rational,
}

impl ClassSpec {
    pub fn new(
        id: usize,
        capacity: Rational,
        rate: Rational,
        burst: Rational,
        max_packet: Rational,
    ) -> Self {
        ClassSpec {
            id,
            capacity,
            rate,
            burst,
            max_packet,
        }
    }

    /// `r_n / C_n`.
    pub fn load(&self) -> Rational {
        &self.rate / &self.capacity
    }
}

/// A violated configuration invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldViolation {
    pub class: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            Some(c) => write!(f, "class {c}: `{}` {}", self.field, self.message),
            None => write!(f, "`{}` {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldViolation>),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

impl ConfigError {
    pub fn violations(&self) -> &[FieldViolation] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Parse(_) => &[],
        }
    }
}

/// A validated set of traffic classes with its derived aggregates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SystemConfig {
    name: String,
    classes: Vec<ClassSpec>,
    #[serde(skip)]
    c_min: Rational,
    #[serde(skip)]
    c_max: Rational,
    #[serde(skip)]
    l_max: Rational,
}

impl SystemConfig {
    /// Checks every invariant and reports all violations at once.
    pub fn new(name: impl Into<String>, classes: Vec<ClassSpec>) -> Result<Self, ConfigError> {
        let mut errs = Vec::new();
        if classes.is_empty() {
            errs.push(FieldViolation {
                class: None,
                field: "classes",
                message: "must contain at least one class".into(),
            });
        }
        for (i, c) in classes.iter().enumerate() {
            let mut bad = |field, message: String| {
                errs.push(FieldViolation {
                    class: Some(c.id),
                    field,
                    message,
                })
            };
            if c.id != i + 1 {
                bad("id", format!("is {} but classes must be numbered 1..N in order (expected {})", c.id, i + 1));
            }
            if !c.capacity.is_positive() {
                bad("capacity", format!("must be > 0 (got {})", c.capacity));
            }
            if c.rate.is_negative() {
                bad("rate", format!("must be >= 0 (got {})", c.rate));
            }
            if !c.max_packet.is_positive() {
                bad("max_packet", format!("must be > 0 (got {})", c.max_packet));
            }
            if c.burst < c.max_packet {
                bad(
                    "burst",
                    format!(
                        "must be >= max_packet so a burst holds one full packet (got {} < {})",
                        c.burst, c.max_packet
                    ),
                );
            }
        }
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        let c_min = classes.iter().map(|c| &c.capacity).min().unwrap().clone();
        let c_max = classes.iter().map(|c| &c.capacity).max().unwrap().clone();
        let l_max = classes.iter().map(|c| &c.max_packet).max().unwrap().clone();
        Ok(SystemConfig {
            name: name.into(),
            classes,
            c_min,
            c_max,
            l_max,
        })
    }

    /// Builds a config from `(C_n, r_n, sigma_n, L_n)` tuples numbered in order.
    pub fn from_params<I>(name: impl Into<String>, params: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (Rational, Rational, Rational, Rational)>,
    {
        let classes = params
            .into_iter()
            .enumerate()
            .map(|(i, (c, r, s, l))| ClassSpec::new(i + 1, c, r, s, l))
            .collect();
        Self::new(name, classes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class by 1-based id.
    pub fn class(&self, id: usize) -> Option<&ClassSpec> {
        id.checked_sub(1).and_then(|i| self.classes.get(i))
    }

    pub fn c_min(&self) -> &Rational {
        &self.c_min
    }

    pub fn c_max(&self) -> &Rational {
        &self.c_max
    }

    /// `L = max_n L_n`.
    pub fn l_max(&self) -> &Rational {
        &self.l_max
    }

    pub fn total_rate(&self) -> Rational {
        self.classes.iter().map(|c| &c.rate).sum()
    }

    pub fn total_burst(&self) -> Rational {
        self.classes.iter().map(|c| &c.burst).sum()
    }

    /// `sum_{m != n} r_m`.
    pub fn other_rate(&self, n: usize) -> Rational {
        self.others(n).map(|c| &c.rate).sum()
    }

    /// `sum_{m != n} sigma_m`.
    pub fn other_burst(&self, n: usize) -> Rational {
        self.others(n).map(|c| &c.burst).sum()
    }

    /// Classes other than `n`.
    pub fn others(&self, n: usize) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter().filter(move |c| c.id != n)
    }

    /// `sum_n sigma_n / C_n`.
    pub fn normalized_burst(&self) -> Rational {
        self.classes.iter().map(|c| &c.burst / &c.capacity).sum()
    }

    /// `max_n L_n / C_n`.
    pub fn max_transmission_time(&self) -> Rational {
        self.classes
            .iter()
            .map(|c| &c.max_packet / &c.capacity)
            .max()
            .unwrap()
    }

    pub fn utilization(&self) -> Utilization {
        let rho = self.classes.iter().map(ClassSpec::load).sum();
        let rho_bar = self
            .classes
            .iter()
            .map(|c| self.others(c.id).map(ClassSpec::load).sum())
            .collect();
        Utilization { rho, rho_bar }
    }

    /// The unit-rate reference system: every quantity of class `n` divided
    /// by `C_n`, so bits become seconds of work.
    pub fn normalized(&self) -> SystemConfig {
        let classes = self
            .classes
            .iter()
            .map(|c| ClassSpec {
                id: c.id,
                capacity: Rational::one(),
                rate: &c.rate / &c.capacity,
                burst: &c.burst / &c.capacity,
                max_packet: &c.max_packet / &c.capacity,
            })
            .collect();
        SystemConfig::new(format!("{} (normalized)", self.name), classes)
            .expect("scaling by a positive rate preserves every invariant")
    }
}

/// `rho = sum_n r_n / C_n` and, per class, `rho_bar(n) = sum_{m != n} r_m / C_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Utilization {
    pub rho: Rational,
    rho_bar: Vec<Rational>,
}

impl Utilization {
    /// `rho_bar` for the 1-based class `n`.
    pub fn rho_bar(&self, n: usize) -> &Rational {
        &self.rho_bar[n - 1]
    }

    pub fn rho_bar_all(&self) -> &[Rational] {
        &self.rho_bar
    }
}

/// A number with an optional decimal multiplier suffix (`k`, `M`, `G`).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Quantity {
    fn parse(&self) -> Result<Rational, String> {
        match self {
            Quantity::Int(v) => Ok((*v).into()),
            Quantity::Float(v) => format!("{v:?}").parse().map_err(|e| format!("{e}")),
            Quantity::Text(s) => parse_quantity(s),
        }
    }
}

/// Parses `"400k"`, `"1M"`, `"2/3"`, `"1.5G"` and plain rationals exactly.
pub fn parse_quantity(s: &str) -> Result<Rational, String> {
    let t = s.trim();
    let (body, mult) = match t.chars().last() {
        Some('k') | Some('K') => (&t[..t.len() - 1], 1_000),
        Some('M') => (&t[..t.len() - 1], 1_000_000),
        Some('G') => (&t[..t.len() - 1], 1_000_000_000),
        _ => (t, 1),
    };
    let v: Rational = body.parse().map_err(|e| format!("{e}"))?;
    Ok(v * Rational::from_integer(mult))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    id: Option<usize>,
    capacity: Quantity,
    rate: Quantity,
    burst: Quantity,
    max_packet: Quantity,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    #[serde(rename = "class", default)]
    classes: Vec<RawClass>,
}

impl SystemConfig {
    /// Parses the TOML configuration format:
    ///
    /// ```toml
    /// name = "S1"
    /// [[class]]
    /// capacity = "1M"
    /// rate = "400k"
    /// burst = "100k"
    /// max_packet = 12000
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut errs = Vec::new();
        let mut classes = Vec::with_capacity(raw.classes.len());
        for (i, rc) in raw.classes.iter().enumerate() {
            let id = rc.id.unwrap_or(i + 1);
            let mut field = |name: &'static str, q: &Quantity| match q.parse() {
                Ok(v) => v,
                Err(message) => {
                    errs.push(FieldViolation {
                        class: Some(id),
                        field: name,
                        message,
                    });
                    Rational::zero()
                }
            };
            let capacity = field("capacity", &rc.capacity);
            let rate = field("rate", &rc.rate);
            let burst = field("burst", &rc.burst);
            let max_packet = field("max_packet", &rc.max_packet);
            classes.push(ClassSpec::new(id, capacity, rate, burst, max_packet));
        }
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        SystemConfig::new(raw.name.unwrap_or_else(|| "unnamed".into()), classes)
    }

    /// Renders the config in the format accepted by [`Self::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let mut s = format!("name = {:?}\n", self.name);
        for c in &self.classes {
            s.push_str(&format!(
                "\n[[class]]\nid = {}\ncapacity = \"{}\"\nrate = \"{}\"\nburst = \"{}\"\nmax_packet = \"{}\"\n",
                c.id, c.capacity, c.rate, c.burst, c.max_packet
            ));
        }
        s
    }
}
