//! Exact rational angles mod 1 and itineraries over a finite alphabet.

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AngleError {
    #[error("angle literal {0:?} is not of the form p/q")]
    Parse(String),
    #[error("denominator must be positive")]
    ZeroDenominator,
    #[error("angle {0} has a terminating base-{1} expansion; choose a convention")]
    DAdicAngle(String, u32),
    #[error("cannot shift an empty word")]
    EmptyWord,
    #[error("base must be at least 2")]
    BadBase,
}

/// A reduced rational number in `[0, 1)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalAngle(Ratio<BigUint>);

impl RationalAngle {
    pub fn new(num: BigUint, den: BigUint) -> Result<Self, AngleError> {
        if den.is_zero() {
            return Err(AngleError::ZeroDenominator);
        }
        let num = num % &den;
        Ok(Self(Ratio::new(num, den)))
    }

    /// `p/q mod 1`.
    pub fn from_u64(p: u64, q: u64) -> Result<Self, AngleError> {
        Self::new(BigUint::from(p), BigUint::from(q))
    }

    pub fn zero() -> Self {
        Self(Ratio::zero())
    }

    pub fn numer(&self) -> &BigUint {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigUint {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        if n.is_finite() && d.is_finite() {
            n / d
        } else {
            // Very large operands: scale both down first.
            let bits = self.denom().bits().saturating_sub(60);
            let n = (self.numer() >> bits).to_f64().unwrap_or(0.0);
            let d = (self.denom() >> bits).to_f64().unwrap_or(1.0);
            n / d
        }
    }

    /// `base * θ mod 1`, exact.
    pub fn times_base(&self, base: u32) -> Self {
        let num = (self.numer() * BigUint::from(base)) % self.denom();
        Self(Ratio::new(num, self.denom().clone()))
    }

    pub fn times_base_pow(&self, base: u32, n: u32) -> Self {
        let m = BigUint::from(base).modpow(&BigUint::from(n), self.denom());
        let num = (self.numer() * m) % self.denom();
        Self(Ratio::new(num, self.denom().clone()))
    }

    /// `θ + p/q mod 1`.
    pub fn add(&self, other: &Self) -> Self {
        let s = &self.0 + &other.0;
        let (n, d) = (s.numer().clone(), s.denom().clone());
        Self(Ratio::new(n % &d, d))
    }

    /// Minimal `(l, k)` with `base^{l+k} θ = base^l θ mod 1`.
    pub fn orbit_type(&self, base: u32) -> (u32, u32) {
        let b = BigUint::from(base);
        let mut q = self.denom().clone();
        let mut l = 0;
        loop {
            let g = q.gcd(&b);
            if g.is_one() {
                break;
            }
            q /= g;
            l += 1;
        }
        if q.is_one() {
            return (l, 1);
        }
        let one = BigUint::one();
        let mut x = &b % &q;
        let mut k = 1u32;
        while x != one {
            x = (x * &b) % &q;
            k += 1;
        }
        (l, k)
    }

    /// True when the base-`d` expansion terminates (including `0`).
    pub fn is_d_adic(&self, d: u32) -> bool {
        let b = BigUint::from(d);
        let mut q = self.denom().clone();
        loop {
            let g = q.gcd(&b);
            if g.is_one() {
                return q.is_one();
            }
            q /= g;
        }
    }

    pub fn is_periodic(&self, base: u32) -> bool {
        self.orbit_type(base).0 == 0
    }
}

impl fmt::Display for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl fmt::Debug for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for RationalAngle {
    type Err = AngleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (p, q) = match t.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (t, "1"),
        };
        let p = BigUint::from_str(p).map_err(|_| AngleError::Parse(s.to_string()))?;
        let q = BigUint::from_str(q).map_err(|_| AngleError::Parse(s.to_string()))?;
        Self::new(p, q)
    }
}

impl Serialize for RationalAngle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RationalAngle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `base * θ mod 1`.
pub fn times_base(theta: &RationalAngle, base: u32) -> RationalAngle {
    theta.times_base(base)
}

pub fn orbit_type(theta: &RationalAngle, base: u32) -> (u32, u32) {
    theta.orbit_type(base)
}

/// Eventually periodic tail: `pattern` holds one preperiod followed by one
/// period, and symbol `i` of the word is `pattern[i]` or, past the preperiod,
/// `pattern[preperiod + (i - preperiod) % period]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cycle {
    pub preperiod: usize,
    pub period: usize,
    pub pattern: Vec<u32>,
}

impl Cycle {
    fn symbol(&self, i: usize) -> u32 {
        if i < self.preperiod {
            self.pattern[i]
        } else {
            self.pattern[self.preperiod + (i - self.preperiod) % self.period]
        }
    }

    fn shifted(&self) -> Self {
        if self.preperiod > 0 {
            Self { preperiod: self.preperiod - 1, period: self.period, pattern: self.pattern[1..].to_vec() }
        } else {
            let mut pattern = self.pattern.clone();
            pattern.rotate_left(1);
            Self { preperiod: 0, period: self.period, pattern }
        }
    }
}

/// A finite word, or a stored prefix of an eventually periodic infinite word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItineraryWord {
    pub symbols: Vec<u32>,
    pub cycle: Option<Cycle>,
}

impl ItineraryWord {
    pub fn finite(symbols: Vec<u32>) -> Self {
        Self { symbols, cycle: None }
    }

    /// `pre` followed by `per` repeated forever, stored as one preperiod and one period.
    pub fn eventually_periodic(pre: &[u32], per: &[u32]) -> Self {
        assert!(!per.is_empty(), "period part must be nonempty");
        let mut symbols = pre.to_vec();
        symbols.extend_from_slice(per);
        let cycle = Cycle { preperiod: pre.len(), period: per.len(), pattern: symbols.clone() };
        Self { symbols, cycle: Some(cycle) }
    }

    pub fn periodic(per: &[u32]) -> Self {
        Self::eventually_periodic(&[], per)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Symbol at position `i`; beyond the stored prefix only for periodic words.
    pub fn symbol(&self, i: usize) -> Option<u32> {
        if i < self.symbols.len() {
            return Some(self.symbols[i]);
        }
        self.cycle.as_ref().map(|c| c.symbol(i))
    }

    pub fn prefix(&self, n: usize) -> Option<Vec<u32>> {
        (0..n).map(|i| self.symbol(i)).collect()
    }

    /// Drop the first symbol. A periodic word keeps its stored length unless
    /// it stores exactly its pattern, in which case it stays in that form.
    pub fn shift(&self) -> Result<Self, AngleError> {
        if self.symbols.is_empty() {
            return Err(AngleError::EmptyWord);
        }
        match &self.cycle {
            None => Ok(Self::finite(self.symbols[1..].to_vec())),
            Some(c) => {
                let next = c.symbol(self.symbols.len());
                let cycle = c.shifted();
                let symbols = if self.symbols == c.pattern {
                    cycle.pattern.clone()
                } else {
                    let mut s = self.symbols[1..].to_vec();
                    s.push(next);
                    s
                };
                Ok(Self { symbols, cycle: Some(cycle) })
            }
        }
    }
}

impl fmt::Display for ItineraryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cycle {
            None => {
                for s in &self.symbols {
                    write!(f, "{s}")?;
                }
                Ok(())
            }
            Some(c) => {
                for s in &c.pattern[..c.preperiod] {
                    write!(f, "{s}")?;
                }
                write!(f, "(")?;
                for s in &c.pattern[c.preperiod..] {
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
        }
    }
}

pub fn shift(word: &ItineraryWord) -> Result<ItineraryWord, AngleError> {
    word.shift()
}

/// How to expand an angle with a terminating base-`d` expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DAdicConvention {
    /// Trailing zeros.
    Terminating,
    /// Trailing `d - 1` digits.
    Repeating,
}

/// First `n` base-`d` digits of `θ`, with exact eventual-period metadata.
/// Angles with terminating expansions are rejected.
pub fn angle_to_itinerary(
    theta: &RationalAngle,
    d: u32,
    n: usize,
) -> Result<ItineraryWord, AngleError> {
    if d < 2 {
        return Err(AngleError::BadBase);
    }
    if theta.is_d_adic(d) {
        return Err(AngleError::DAdicAngle(theta.to_string(), d));
    }
    Ok(expand(theta, d, n, false))
}

pub fn angle_to_itinerary_with(
    theta: &RationalAngle,
    d: u32,
    n: usize,
    convention: DAdicConvention,
) -> Result<ItineraryWord, AngleError> {
    if d < 2 {
        return Err(AngleError::BadBase);
    }
    let upper = theta.is_d_adic(d) && convention == DAdicConvention::Repeating;
    Ok(expand(theta, d, n, upper))
}

/// Long division. With `upper`, digits are taken as `ceil(dθ) - 1`, which
/// produces the expansion ending in `d - 1`s.
fn expand(theta: &RationalAngle, d: u32, n: usize, upper: bool) -> ItineraryWord {
    let q = theta.denom().clone();
    let db = BigUint::from(d);
    let mut r = theta.numer().clone();
    if upper && r.is_zero() {
        r = q.clone();
    }
    let (pre, per) = if upper {
        let (l, _) = theta.orbit_type(d);
        (l as usize, 1usize)
    } else {
        let (l, k) = theta.orbit_type(d);
        (l as usize, k as usize)
    };
    let total = n.max(pre + per);
    let mut symbols = Vec::with_capacity(total);
    for _ in 0..total {
        let x = &r * &db;
        let (mut digit, mut rem) = x.div_rem(&q);
        if upper && rem.is_zero() && !digit.is_zero() {
            digit -= 1u32;
            rem = q.clone();
        }
        symbols.push(digit.to_u32().expect("digit < d"));
        r = rem;
    }
    let pattern = symbols[..pre + per].to_vec();
    symbols.truncate(n);
    ItineraryWord { symbols, cycle: Some(Cycle { preperiod: pre, period: per, pattern }) }
}

/// The angle `Σ ε_i d^{-i}` of an eventually periodic word.
pub fn itinerary_to_angle(word: &ItineraryWord, d: u32) -> Option<RationalAngle> {
    let c = word.cycle.as_ref()?;
    let db = BigUint::from(d);
    let mut pre_val = BigUint::zero();
    for i in 0..c.preperiod {
        pre_val = pre_val * &db + BigUint::from(word.symbol(i)?);
    }
    let mut per_val = BigUint::zero();
    for i in 0..c.period {
        per_val = per_val * &db + BigUint::from(word.symbol(c.preperiod + i)?);
    }
    // θ = d^{-l} (pre + per / (d^k - 1))
    let dl = db.pow(c.preperiod as u32);
    let dk1 = db.pow(c.period as u32) - 1u32;
    let num = pre_val * &dk1 + per_val;
    let den = dl * dk1;
    let r = Ratio::new(num, den);
    let (n, q) = (r.numer().clone(), r.denom().clone());
    // Word of all (d-1)s has value 1 which is 0 mod 1.
    Some(RationalAngle(Ratio::new(n % &q, q)))
}
