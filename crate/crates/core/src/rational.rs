//! Exact rational numbers.
//!
//! Values live in a `Ratio<i128>` while they fit and are promoted to a
//! `BigRational` when an operation would overflow, then demoted again as
//! soon as the reduced result fits. Every value is kept in that canonical
//! form, so structural equality and hashing agree with numeric equality.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedDiv, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

type Small = Ratio<i128>;

#[derive(Clone, Debug)]
enum Repr {
    Small(Small),
    Big(Box<BigRational>),
}

/// An exact rational number.
#[derive(Clone)]
pub struct Rational(Repr);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid rational literal `{literal}`: {reason}")]
pub struct ParseRationalError {
    pub literal: String,
    pub reason: &'static str,
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    if a == 1 || b == 1 {
        return 1;
    }
    // One division step first when the operands differ greatly in size.
    if a > b << 8 {
        a %= b;
        if a == 0 {
            return b;
        }
    } else if b > a << 8 {
        b %= a;
        if b == 0 {
            return a;
        }
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    if a <= u64::MAX as u128 && b <= u64::MAX as u128 {
        return gcd_u64(a as u64, b as u64) as u128;
    }
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

/// `a / g` for a positive divisor `g`, avoiding 128-bit division when possible.
fn div_by(a: i128, g: i128) -> i128 {
    if g == 1 {
        a
    } else if let (Ok(a64), Ok(g64)) = (i64::try_from(a), i64::try_from(g)) {
        (a64 / g64) as i128
    } else {
        a / g
    }
}

fn fits_i64(a: i128) -> bool {
    a as i64 as i128 == a
}

/// Overflow-checked product; operands that fit in 64 bits cannot overflow.
fn mul_checked(a: i128, b: i128) -> Option<i128> {
    if fits_i64(a) && fits_i64(b) {
        Some(a * b)
    } else {
        a.checked_mul(b)
    }
}

/// Reduces `n / d` for `d > 0`.
fn reduced(n: i128, d: i128) -> Option<Small> {
    if d == 1 {
        return Some(Small::new_raw(n, 1));
    }
    let g = gcd_u128(n.unsigned_abs(), d as u128) as i128;
    Some(Small::new_raw(div_by(n, g), div_by(d, g)))
}

// The checked operations below work on canonical operands (reduced,
// positive denominator) and return `None` on i128 overflow.

fn small_add(a: &Small, b: &Small) -> Option<Small> {
    let (an, ad, bn, bd) = (*a.numer(), *a.denom(), *b.numer(), *b.denom());
    if ad == bd {
        return reduced(an.checked_add(bn)?, ad);
    }
    let g = gcd_u128(ad as u128, bd as u128) as i128;
    let (ag, bg) = (div_by(ad, g), div_by(bd, g));
    let n = mul_checked(an, bg)?.checked_add(mul_checked(bn, ag)?)?;
    reduced(n, mul_checked(ad, bg)?)
}

fn small_sub(a: &Small, b: &Small) -> Option<Small> {
    let neg = Small::new_raw(b.numer().checked_neg()?, *b.denom());
    small_add(a, &neg)
}

fn small_mul(a: &Small, b: &Small) -> Option<Small> {
    let (an, ad, bn, bd) = (*a.numer(), *a.denom(), *b.numer(), *b.denom());
    if an == 0 || bn == 0 {
        return Some(Small::new_raw(0, 1));
    }
    if ad == 1 && bd == 1 {
        return Some(Small::new_raw(mul_checked(an, bn)?, 1));
    }
    let g1 = gcd_u128(an.unsigned_abs(), bd as u128).max(1) as i128;
    let g2 = gcd_u128(bn.unsigned_abs(), ad as u128).max(1) as i128;
    let n = mul_checked(div_by(an, g1), div_by(bn, g2))?;
    let d = mul_checked(div_by(ad, g2), div_by(bd, g1))?;
    Some(Small::new_raw(n, d))
}

fn small_div(a: &Small, b: &Small) -> Option<Small> {
    let (bn, bd) = (*b.numer(), *b.denom());
    let inv = if bn < 0 {
        Small::new_raw(bd.checked_neg()?, bn.checked_neg()?)
    } else {
        Small::new_raw(bd, bn)
    };
    small_mul(a, &inv)
}

fn small_cmp(a: &Small, b: &Small) -> Ordering {
    let (an, ad, bn, bd) = (*a.numer(), *a.denom(), *b.numer(), *b.denom());
    if ad == bd {
        return an.cmp(&bn);
    }
    match (mul_checked(an, bd), mul_checked(bn, ad)) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn to_big(r: &Small) -> BigRational {
    BigRational::new_raw(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

impl Default for Rational {
    fn default() -> Self {
        Rational::zero()
    }
}

impl Rational {
    fn from_big(b: BigRational) -> Self {
        match (b.numer().to_i128(), b.denom().to_i128()) {
            (Some(n), Some(d)) => Rational(Repr::Small(Small::new_raw(n, d))),
            _ => Rational(Repr::Big(Box::new(b))),
        }
    }

    fn big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(s) => to_big(s),
            Repr::Big(b) => (**b).clone(),
        }
    }

    /// Builds `numer / denom`. Panics if `denom` is zero.
    pub fn new(numer: i128, denom: i128) -> Self {
        assert!(denom != 0, "rational with zero denominator");
        match Small::new(numer, 1).checked_div(&Small::new(denom, 1)) {
            Some(s) => Rational(Repr::Small(s)),
            None => Self::from_big(BigRational::new(numer.into(), denom.into())),
        }
    }

    pub fn from_integer(n: i128) -> Self {
        Rational(Repr::Small(Small::from_integer(n)))
    }

    pub fn zero() -> Self {
        Self::from_integer(0)
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_zero(),
            Repr::Big(b) => b.is_zero(),
        }
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_positive(),
            Repr::Big(b) => b.is_positive(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_negative(),
            Repr::Big(b) => b.is_negative(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_integer(),
            Repr::Big(b) => b.is_integer(),
        }
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rational::one() / self
    }

    pub fn floor(&self) -> Self {
        match &self.0 {
            Repr::Small(s) => Rational(Repr::Small(s.floor())),
            Repr::Big(b) => Self::from_big(b.floor()),
        }
    }

    pub fn ceil(&self) -> Self {
        match &self.0 {
            Repr::Small(s) => Rational(Repr::Small(s.ceil())),
            Repr::Big(b) => Self::from_big(b.ceil()),
        }
    }

    /// The value as an `i128` if it is an integer that fits.
    pub fn to_i128(&self) -> Option<i128> {
        match &self.0 {
            Repr::Small(s) if s.is_integer() => Some(*s.numer()),
            _ => None,
        }
    }

    /// Nearest `f64`, for display only.
    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(s) => {
                let (n, d) = (*s.numer(), *s.denom());
                if n.unsigned_abs() < (1u128 << 53) && d < (1i128 << 53) {
                    n as f64 / d as f64
                } else {
                    to_big(s).to_f64().unwrap_or(f64::NAN)
                }
            }
            Repr::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn numer_string(&self) -> String {
        match &self.0 {
            Repr::Small(s) => s.numer().to_string(),
            Repr::Big(b) => b.numer().to_string(),
        }
    }

    pub fn denom_string(&self) -> String {
        match &self.0 {
            Repr::Small(s) => s.denom().to_string(),
            Repr::Big(b) => b.denom().to_string(),
        }
    }

    pub fn min_of(a: &Self, b: &Self) -> Self {
        if a <= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    pub fn max_of(a: &Self, b: &Self) -> Self {
        if a >= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    /// Greatest common "divisor" of two non-negative rationals: the largest
    /// rational `g` such that both are integer multiples of `g`.
    pub fn gcd(&self, other: &Self) -> Self {
        let (a, b) = (self.big(), other.big());
        let num = a.numer().gcd(b.numer());
        let den = a.denom().lcm(b.denom());
        Self::from_big(BigRational::new(num, den))
    }

    /// Decimal rendering with `digits` fractional digits, for display only.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        let v = self.to_f64();
        if v != 0.0 && (v.abs() >= 1e9 || v.abs() < 1e-4) {
            format!("{v:.digits$e}")
        } else {
            let s = format!("{v:.digits$}");
            if s.contains('.') {
                s.trim_end_matches('0').trim_end_matches('.').to_string()
            } else {
                s
            }
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $checked:ident, $big:tt) => {
        impl<'a> $trait<&'a Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
                    if let Some(r) = $checked(a, b) {
                        return Rational(Repr::Small(r));
                    }
                }
                Rational::from_big(self.big() $big rhs.big())
            }
        }
        impl $trait<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                (&self).$method(rhs)
            }
        }
        impl<'a> $trait<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, small_add, +);
binop!(Sub, sub, small_sub, -);
binop!(Mul, mul, small_mul, *);

impl<'a> Div<&'a Rational> for &'a Rational {
    type Output = Rational;
    fn div(self, rhs: &'a Rational) -> Rational {
        assert!(!rhs.is_zero(), "rational division by zero");
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(r) = small_div(a, b) {
                return Rational(Repr::Small(r));
            }
        }
        Rational::from_big(self.big() / rhs.big())
    }
}
impl Div<Rational> for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        &self / &rhs
    }
}
impl<'a> Div<&'a Rational> for Rational {
    type Output = Rational;
    fn div(self, rhs: &'a Rational) -> Rational {
        &self / rhs
    }
}
impl Div<Rational> for &Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        self / &rhs
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        match &self.0 {
            Repr::Small(s) if *s.numer() != i128::MIN => Rational(Repr::Small(-s)),
            _ => Rational::from_big(-self.big()),
        }
    }
}
impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        -&self
    }
}

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        *self = &*self + rhs;
    }
}
impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = &*self + &rhs;
    }
}
impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        *self = &*self - rhs;
    }
}
impl SubAssign for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        *self = &*self - &rhs;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}
impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.numer() == b.numer() && a.denom() == b.denom(),
            (Repr::Big(a), Repr::Big(b)) => a.numer() == b.numer() && a.denom() == b.denom(),
            // canonical form: a value that fits is never Big
            _ => false,
        }
    }
}
impl Eq for Rational {}

impl Hash for Rational {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small(s) => {
                0u8.hash(state);
                s.numer().hash(state);
                s.denom().hash(state)
            }
            Repr::Big(b) => {
                1u8.hash(state);
                b.numer().hash(state);
                b.denom().hash(state)
            }
        }
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => small_cmp(a, b),
            _ => self.big().cmp(&other.big()),
        }
    }
}

impl From<i128> for Rational {
    fn from(v: i128) -> Self {
        Rational::from_integer(v)
    }
}
impl From<i64> for Rational {
    fn from(v: i64) -> Self {
        Rational::from_integer(v as i128)
    }
}
impl From<u64> for Rational {
    fn from(v: u64) -> Self {
        Rational::from_integer(v as i128)
    }
}
impl From<i32> for Rational {
    fn from(v: i32) -> Self {
        Rational::from_integer(v as i128)
    }
}
impl From<u32> for Rational {
    fn from(v: u32) -> Self {
        Rational::from_integer(v as i128)
    }
}
impl From<usize> for Rational {
    fn from(v: usize) -> Self {
        Rational::from_integer(v as i128)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer_string())
        } else {
            write!(f, "{}/{}", self.numer_string(), self.denom_string())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn parse_decimal(s: &str, literal: &str) -> Result<BigRational, ParseRationalError> {
    let err = |reason| ParseRationalError {
        literal: literal.to_string(),
        reason,
    };
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = s[i + 1..].parse().map_err(|_| err("bad exponent"))?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err("expected digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = digits.parse().map_err(|_| err("expected digits"))?;
    if neg {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    if scale.unsigned_abs() > 4096 {
        return Err(err("exponent out of range"));
    }
    let ten = BigInt::from(10);
    let pow = num_traits::pow(ten, scale.unsigned_abs() as usize);
    Ok(if scale >= 0 {
        BigRational::from_integer(numer * pow)
    } else {
        BigRational::new(numer, pow)
    })
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    /// Accepts `p/q`, integers, and decimal or scientific literals
    /// (`0.4`, `1.1e6`), all converted exactly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p = parse_decimal(p.trim(), s)?;
            let q = parse_decimal(q.trim(), s)?;
            if q.is_zero() {
                return Err(ParseRationalError {
                    literal: s.to_string(),
                    reason: "zero denominator",
                });
            }
            return Ok(Rational::from_big(p / q));
        }
        parse_decimal(t, s).map(Rational::from_big)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a rational as \"p/q\", a decimal string, or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(v.into())
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        Ok(v.into())
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        // shortest round-trip rendering recovers the literal the user wrote
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        format!("{v:?}").parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }
}

/// Shorthand for building rationals in code: `q(3, 4)` is 3/4.
pub fn q(numer: i128, denom: i128) -> Rational {
    Rational::new(numer, denom)
}

/// Shorthand for an integer rational.
pub fn qi(n: i128) -> Rational {
    Rational::from_integer(n)
}
