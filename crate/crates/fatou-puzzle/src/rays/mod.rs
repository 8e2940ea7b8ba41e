//! External, internal and parabolic-model rays, equipotentials and landing.

mod external;
mod internal;
mod parabolic;

pub use external::*;
pub use internal::*;
pub use parabolic::*;

use crate::angles::{ItineraryWord, RationalAngle};
use crate::poly_core::{PolyError, Polynomial, C64};
use serde::{Deserialize, Serialize};

/// Continuation and landing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RayControl {
    /// Potential at which external rays are seeded.
    pub t_seed: f64,
    /// Potential (negative) at which internal rays are seeded.
    pub t_seed_internal: f64,
    /// Geometric substeps between consecutive dyadic samples.
    pub substeps: usize,
    /// Pull-back level: `m` is the least integer with `D^m |t| >= big_potential`.
    pub big_potential: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Maximum number of step halvings before giving up.
    pub max_halvings: usize,
    pub near_critical_tol: f64,
    /// Potential reached before switching to Newton on `f^k(z) - z`.
    pub landing_t: f64,
    pub tol_cluster: f64,
    /// Equation residual that must hold at every sample.
    pub tol_ray: f64,
}

impl Default for RayControl {
    fn default() -> Self {
        Self {
            t_seed: 8.0,
            t_seed_internal: -8.0,
            substeps: 8,
            big_potential: 12.0,
            newton_tol: 1e-15,
            max_newton: 80,
            max_halvings: 24,
            near_critical_tol: 1e-10,
            landing_t: 1e-7,
            tol_cluster: 1e-6,
            tol_ray: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RayError {
    #[error("continuation failed; last good potential {last_t:.6e}")]
    ContinuationFailure { last_t: f64 },
    #[error("ray passes within tolerance of a precritical point at potential {t:.6e}")]
    NearCritical { t: f64 },
    #[error("landing Newton iteration did not converge")]
    NoConvergence,
    #[error("terminal samples approach distinct limits (spread {spread:.3e})")]
    AmbiguousLanding { spread: f64 },
    #[error("potential too close to the basin boundary")]
    BasinBoundaryTooClose,
    #[error("angle {0} is not periodic")]
    NotPeriodic(String),
    #[error("potential must be {0}")]
    BadPotential(&'static str),
    #[error("preimage lies within tolerance of a sector boundary")]
    SectorAmbiguity,
    #[error("orbit did not reach the attracting petal within {0} iterations")]
    SlowConvergence(usize),
    #[error("no candidate ray lands at the target point")]
    EmptyResult,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayKind {
    External,
    Internal,
    ParabolicModel,
}

/// Angle of a ray: an exact rational or an itinerary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RayLabel {
    Angle(RationalAngle),
    Word(ItineraryWord),
}

/// Sampled ray with landing metadata. Samples run from the seed toward the
/// landing end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    pub kind: RayKind,
    pub angle: RayLabel,
    #[serde(with = "triples")]
    pub samples: Vec<(f64, C64)>,
    pub landed: bool,
    pub landing_point: Option<C64>,
    pub max_residual: f64,
}

impl RayPath {
    pub fn points(&self) -> impl Iterator<Item = C64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn last(&self) -> Option<(f64, C64)> {
        self.samples.last().copied()
    }

    /// Sample at potential `t` (relative match).
    pub fn at(&self, t: f64) -> Option<C64> {
        self.samples
            .iter()
            .find(|s| (s.0 - t).abs() <= 1e-12 * t.abs().max(1e-300))
            .map(|s| s.1)
    }
}

mod triples {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[(f64, C64)], s: S) -> Result<S::Ok, S::Error> {
        let t: Vec<[f64; 3]> = v.iter().map(|(t, z)| [*t, z.re, z.im]).collect();
        t.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, C64)>, D::Error> {
        let t: Vec<[f64; 3]> = Vec::deserialize(d)?;
        Ok(t.into_iter().map(|a| (a[0], C64::new(a[1], a[2]))).collect())
    }
}

/// Landing data for a periodic ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub point: C64,
    /// Period of the landing point under `f`.
    pub point_period: usize,
    /// Multiplier `(f^{point_period})'` at the landing point.
    pub multiplier: C64,
    /// `f'` at the landing point.
    pub derivative: C64,
    /// Combinatorial rotation number `(p, q)` of the angle cycle, when the
    /// cycle is cyclically ordered.
    pub rotation: Option<(u64, u64)>,
    /// Potential of the last continuation sample.
    pub last_t: f64,
}

/// Rotation number of the cycle `{base^j θ}` as a cyclically ordered set.
pub fn cycle_rotation(theta: &RationalAngle, base: u32) -> Option<(u64, u64)> {
    let (l, k) = theta.orbit_type(base);
    if l != 0 {
        return None;
    }
    let mut orbit = vec![theta.clone()];
    for _ in 1..k {
        let next = orbit.last().unwrap().times_base(base);
        orbit.push(next);
    }
    let mut sorted = orbit.clone();
    sorted.sort();
    let pos = |a: &RationalAngle| sorted.iter().position(|s| s == a).unwrap();
    let k = k as usize;
    let s = (pos(&orbit[1 % k]) + k - pos(&orbit[0])) % k;
    for j in 0..k {
        let sj = (pos(&orbit[(j + 1) % k]) + k - pos(&orbit[j])) % k;
        if sj != s {
            return None;
        }
    }
    let g = num_integer::gcd(s, k).max(1);
    Some(((s / g) as u64, (k / g) as u64))
}

/// Newton on `g^k(z) - z`, returning the refined periodic point.
pub(crate) fn newton_periodic(map: &Polynomial, start: C64, k: usize, max_iter: usize) -> Option<C64> {
    let mut z = start;
    let mut best = (f64::INFINITY, z);
    for _ in 0..max_iter {
        let (v, dv) = map.iterate_deriv(z, k);
        let r = v - z;
        let denom = dv - C64::new(1.0, 0.0);
        if !r.norm().is_finite() || denom.norm() == 0.0 {
            break;
        }
        if r.norm() < best.0 {
            best = (r.norm(), z);
        }
        let step = r / denom;
        z -= step;
        if !z.norm().is_finite() {
            break;
        }
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    let scale = 1.0 + best.1.norm();
    if best.0 < 1e-12 * scale {
        Some(best.1)
    } else {
        None
    }
}

/// Sample potentials `t_seed * 2^{-j}` (in absolute value) down to `|t_end|`, with `t_end` appended.
pub(crate) fn dyadic_grid(t_seed: f64, t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = t_seed;
    while t.abs() > t_end.abs() * (1.0 + 1e-12) {
        out.push(t);
        t *= 0.5;
    }
    out.push(t_end);
    out
}

/// Potentials `t_start * 2^{-j/per_octave}` (in absolute value) down to `|t_end|`, with `t_end` appended.
pub fn geometric_grid(t_start: f64, t_end: f64, per_octave: usize) -> Vec<f64> {
    let ratio = 0.5f64.powf(1.0 / per_octave.max(1) as f64);
    let mut out = Vec::new();
    let mut j = 0i32;
    loop {
        let t = t_start * ratio.powi(j);
        if t.abs() <= t_end.abs() * (1.0 + 1e-12) {
            break;
        }
        out.push(t);
        j += 1;
    }
    out.push(t_end);
    out
}

/// Least `m` with `base^m |t| >= big`.
pub(crate) fn pullback_level(base: f64, t: f64, big: f64) -> u32 {
    let mut m = 0u32;
    let mut s = t.abs();
    while s < big {
        s *= base;
        m += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_numbers() {
        let a = |p, q| RationalAngle::from_u64(p, q).unwrap();
        assert_eq!(cycle_rotation(&a(1, 3), 2), Some((1, 2)));
        assert_eq!(cycle_rotation(&a(0, 1), 2), Some((0, 1)));
        assert_eq!(cycle_rotation(&a(1, 7), 2), Some((1, 3)));
        assert_eq!(cycle_rotation(&a(3, 7), 2), Some((2, 3)));
        assert_eq!(cycle_rotation(&a(1, 6), 2), None);
    }

    #[test]
    fn grid_shape() {
        let g = dyadic_grid(8.0, 0.1);
        assert_eq!(g.first(), Some(&8.0));
        assert_eq!(g.last(), Some(&0.1));
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(pullback_level(2.0, 3.0, 12.0), 2);
    }
}
