//! Reference configurations used in examples and tests.

use crate::rational::Rational;
use crate::system::SystemConfig;

fn r(v: i128) -> Rational {
    Rational::from_integer(v)
}

/// Two classes with very different capacities (1 Mbps and 100 Mbps), each
/// loaded to 40% of its own capacity.
pub fn s1() -> SystemConfig {
    SystemConfig::from_params(
        "S1",
        [
            (r(1_000_000), r(400_000), r(100_000), r(12_000)),
            (r(100_000_000), r(40_000_000), r(1_000_000), r(12_000)),
        ],
    )
    .expect("valid preset")
}

/// Two identical 1 Mbps classes at 30% load each.
pub fn s2() -> SystemConfig {
    SystemConfig::from_params(
        "S2",
        [
            (r(1_000_000), r(300_000), r(100_000), r(12_000)),
            (r(1_000_000), r(300_000), r(100_000), r(12_000)),
        ],
    )
    .expect("valid preset")
}

pub fn by_name(name: &str) -> Option<SystemConfig> {
    match name.to_ascii_lowercase().as_str() {
        "s1" => Some(s1()),
        "s2" => Some(s2()),
        _ => None,
    }
}
