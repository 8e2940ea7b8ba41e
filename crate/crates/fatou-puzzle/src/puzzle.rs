//! The graph Γ(θ), depth-0 pieces, symbolic depth-n pieces and their geometry.

use crate::angles::RationalAngle;
use crate::poly_core::{PolyError, Polynomial, SuperattractingChart, C64};
use crate::rays::{
    external_ray_point, geometric_grid, land_external_ray, land_internal_ray, periodic_angles,
    trace_external_ray_on, trace_internal_ray_on, InternalBasin, RayControl, RayError,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

pub const DEFAULT_TOL_GRAPH: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PuzzleError {
    #[error("angle {0} is not strictly periodic with period at least 2 under multiplication by {1}")]
    BadAngle(String, u32),
    #[error("{0} is not a superattracting fixed point")]
    NotFixed(String),
    #[error("ray of angle {angle} failed: {reason}")]
    RayFailure { angle: String, reason: String },
    #[error("two graph rays land within {0:.3e} of each other")]
    LandingClash(f64),
    #[error("no external ray of the searched periods lands at {0}")]
    NoExternalRay(String),
    #[error("external rays are not cyclically ordered like the internal rays")]
    InconsistentOrder,
    #[error("iterate {0} lies within tol_graph of the graph")]
    OnGraph(usize),
    #[error("iterate {0} leaves the puzzle domain")]
    LeftDomain(usize),
    #[error("a depth-0 piece has no image piece")]
    Depth0,
    #[error("empty word")]
    EmptyWord,
    #[error("label {0} is out of range")]
    BadLabel(String),
    #[error("word is not admissible at position {0}")]
    Inadmissible(usize),
    #[error("pullback failed: {0}")]
    PullbackFailure(String),
    #[error("critical point {0} lies on the graph at the requested depth")]
    CriticalOnGraph(String),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Letter for depth-0 label `i`.
pub fn label_name(i: u8) -> char {
    (b'A' + i) as char
}

/// Symbolic puzzle piece: the depth-0 labels of `z, f(z), ..., f^n(z)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PieceId {
    word: Vec<u8>,
}

impl PieceId {
    pub fn new(word: Vec<u8>) -> Result<Self, PuzzleError> {
        if word.is_empty() {
            return Err(PuzzleError::EmptyWord);
        }
        if let Some(&s) = word.iter().find(|&&s| s >= 26) {
            return Err(PuzzleError::BadLabel(s.to_string()));
        }
        Ok(Self { word })
    }

    pub fn from_vec(word: Vec<u8>) -> Self {
        debug_assert!(!word.is_empty());
        Self { word }
    }

    pub fn depth(&self) -> usize {
        self.word.len() - 1
    }

    pub fn word(&self) -> &[u8] {
        &self.word
    }

    /// True iff `other` is nested in `self`.
    pub fn contains(&self, other: &PieceId) -> bool {
        other.word.len() >= self.word.len() && other.word[..self.word.len()] == self.word[..]
    }

    pub fn image(&self) -> Result<PieceId, PuzzleError> {
        self.forward(1).ok_or(PuzzleError::Depth0)
    }

    /// `f^k` of the piece, defined for `k <= depth`.
    pub fn forward(&self, k: usize) -> Option<PieceId> {
        (k <= self.depth()).then(|| PieceId { word: self.word[k..].to_vec() })
    }

    /// Word truncated to depth `n`.
    pub fn truncate(&self, n: usize) -> Option<PieceId> {
        (n <= self.depth()).then(|| PieceId { word: self.word[..=n].to_vec() })
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &s) in self.word.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", label_name(s))?;
        }
        Ok(())
    }
}

impl FromStr for PieceId {
    type Err = PuzzleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let word = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                let mut ch = t.chars();
                match (ch.next(), ch.next()) {
                    (Some(c @ 'A'..='Z'), None) => Ok(c as u8 - b'A'),
                    _ => Err(PuzzleError::BadLabel(t.to_string())),
                }
            })
            .collect::<Result<Vec<u8>, _>>()?;
        PieceId::new(word)
    }
}

impl Serialize for PieceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PieceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn contains(a: &PieceId, b: &PieceId) -> bool {
    a.contains(b)
}

pub fn image(a: &PieceId) -> Result<PieceId, PuzzleError> {
    a.image()
}

/// Open arc `(lo, lo + len)` of the circle `R/Z`, with `0 <= lo < 1` and `0 < len <= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub lo: BigRational,
    pub len: BigRational,
}

fn frac(x: &BigRational) -> BigRational {
    x - x.floor()
}

fn rat(a: &RationalAngle) -> BigRational {
    BigRational::new(BigInt::from(a.numer().clone()), BigInt::from(a.denom().clone()))
}

fn to_angle(x: &BigRational) -> RationalAngle {
    let y = frac(x);
    let (n, d) = (y.numer().to_biguint().unwrap_or_default(), y.denom().to_biguint().unwrap_or_default());
    RationalAngle::new(n, d).expect("reduced fraction in [0,1)")
}

impl Arc {
    pub fn new(lo: BigRational, len: BigRational) -> Self {
        Self { lo: frac(&lo), len }
    }

    pub fn between(a: &RationalAngle, b: &RationalAngle) -> Self {
        let (x, y) = (rat(a), rat(b));
        let mut len = &y - &x;
        if len <= BigRational::zero() {
            len += BigRational::one();
        }
        Self::new(x, len)
    }

    pub fn hi(&self) -> BigRational {
        &self.lo + &self.len
    }

    pub fn is_full(&self) -> bool {
        self.len >= BigRational::one()
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let lo = self.lo.to_f64().unwrap_or(0.0);
        let len = self.len.to_f64().unwrap_or(0.0);
        let y = (x - lo).rem_euclid(1.0);
        self.is_full() || (y > 0.0 && y < len)
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        let y = frac(&(x - &self.lo));
        self.is_full() || (y > BigRational::zero() && y < self.len)
    }

    /// Image under multiplication by `base`.
    pub fn times(&self, base: u32) -> Arc {
        let b = BigRational::from_integer(BigInt::from(base));
        let len = &self.len * &b;
        if len >= BigRational::one() {
            Arc { lo: BigRational::zero(), len: BigRational::one() }
        } else {
            Arc::new(&self.lo * &b, len)
        }
    }

    /// The `base` preimage arcs under multiplication by `base`.
    pub fn preimages(&self, base: u32) -> Vec<Arc> {
        let b = BigRational::from_integer(BigInt::from(base));
        (0..base)
            .map(|m| Arc::new((&self.lo + BigRational::from_integer(BigInt::from(m))) / &b, &self.len / &b))
            .collect()
    }

    /// Intersection of two open arcs (at most two components).
    pub fn intersect(&self, other: &Arc) -> Vec<Arc> {
        if self.is_full() {
            return vec![other.clone()];
        }
        if other.is_full() {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        for shift in [-1i32, 0, 1] {
            let s = BigRational::from_integer(BigInt::from(shift));
            let olo = &other.lo + &s;
            let ohi = &olo + &other.len;
            let lo = if self.lo > olo { self.lo.clone() } else { olo };
            let hi_self = self.hi();
            let hi = if hi_self < ohi { hi_self } else { ohi };
            if hi > lo {
                out.push(Arc::new(lo.clone(), hi - lo));
            }
        }
        out
    }

    pub fn meets(&self, other: &Arc) -> bool {
        !self.intersect(other).is_empty()
    }

    pub fn endpoints(&self) -> (RationalAngle, RationalAngle) {
        (to_angle(&self.lo), to_angle(&self.hi()))
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi())
    }
}

impl Serialize for Arc {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.lo.to_string(), self.hi().to_string()].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Arc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [lo, hi]: [String; 2] = Deserialize::deserialize(d)?;
        let lo: BigRational = lo.parse().map_err(serde::de::Error::custom)?;
        let hi: BigRational = hi.parse().map_err(serde::de::Error::custom)?;
        if hi <= lo {
            return Err(serde::de::Error::custom("empty arc"));
        }
        Ok(Arc::new(lo.clone(), hi - lo))
    }
}

/// Build options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuzzleOptions {
    pub tol_graph: f64,
    /// Ray samples per halving of the potential.
    pub per_octave: usize,
    /// Samples on the closing equipotential over a full turn.
    pub arc_samples: usize,
    /// Minimal distance between distinct landing points.
    pub clash_tol: f64,
    pub rays: RayControl,
}

impl Default for PuzzleOptions {
    fn default() -> Self {
        Self { tol_graph: DEFAULT_TOL_GRAPH, per_octave: 12, arc_samples: 1024, clash_tol: 1e-6, rays: RayControl::default() }
    }
}

/// Depth-0 piece of the atlas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceInfo {
    pub label: char,
    /// Internal angles between the two bounding internal rays.
    pub internal: Arc,
    /// External angles between the two bounding external rays.
    pub external: Arc,
    pub polygon: Vec<C64>,
}

/// Ray of the graph with its landing point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRay {
    pub internal: bool,
    pub angle: RationalAngle,
    pub landing: C64,
    pub polyline: Vec<C64>,
}

/// The graph Γ(θ) with its depth-0 pieces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuzzleSpec {
    pub poly: Polynomial,
    pub c0: C64,
    /// Local degree at `c0`.
    pub d: u32,
    pub theta: RationalAngle,
    pub period: u32,
    /// Internal cycle in increasing order.
    pub cycle: Vec<RationalAngle>,
    pub landing_points: Vec<C64>,
    /// External angles landing at each landing point.
    pub external_angles: Vec<Vec<RationalAngle>>,
    pub external_level: f64,
    pub internal_level: f64,
    pub rays: Vec<GraphRay>,
    pub external_equipotential: Vec<C64>,
    pub internal_equipotential: Vec<C64>,
    pub pieces: Vec<PieceInfo>,
    /// `transitions[i][j]`: `f(piece i)` meets piece `j`.
    pub transitions: Vec<Vec<bool>>,
    pub tol_graph: f64,
    /// `f(z) = z^d` with `c0 = 0`, where pieces are exact annular sectors.
    pub exact_power: bool,
    #[serde(skip)]
    locator: OnceLock<Locator>,
}

/// Uniform horizontal-band index of segments.
#[derive(Debug, Clone)]
struct EdgeIndex {
    edges: Vec<[C64; 2]>,
    y0: f64,
    h: f64,
    bands: Vec<Vec<u32>>,
}

impl EdgeIndex {
    fn new(edges: Vec<[C64; 2]>, nbands: usize, pad: f64) -> Self {
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for e in &edges {
            for p in e {
                y0 = y0.min(p.im);
                y1 = y1.max(p.im);
            }
        }
        y0 -= pad;
        y1 += pad;
        let h = ((y1 - y0) / nbands as f64).max(1e-300);
        let mut bands = vec![Vec::new(); nbands];
        for (i, e) in edges.iter().enumerate() {
            let lo = e[0].im.min(e[1].im) - pad;
            let hi = e[0].im.max(e[1].im) + pad;
            let a = (((lo - y0) / h).floor().max(0.0) as usize).min(nbands - 1);
            let b = (((hi - y0) / h).floor().max(0.0) as usize).min(nbands - 1);
            for band in &mut bands[a..=b] {
                band.push(i as u32);
            }
        }
        Self { edges, y0, h, bands }
    }

    fn band(&self, y: f64) -> Option<usize> {
        let b = ((y - self.y0) / self.h).floor();
        (b >= 0.0 && (b as usize) < self.bands.len()).then_some(b as usize)
    }

    /// Even-odd rule.
    fn inside(&self, z: C64) -> bool {
        let Some(b) = self.band(z.im) else { return false };
        let mut odd = false;
        for &i in &self.bands[b] {
            let [a, c] = self.edges[i as usize];
            if (a.im > z.im) != (c.im > z.im) {
                let x = a.re + (z.im - a.im) * (c.re - a.re) / (c.im - a.im);
                if z.re < x {
                    odd = !odd;
                }
            }
        }
        odd
    }

    fn near(&self, z: C64, tol: f64) -> bool {
        let Some(b) = self.band(z.im) else { return false };
        self.bands[b].iter().any(|&i| {
            let [a, c] = self.edges[i as usize];
            segment_distance(z, a, c) < tol
        })
    }
}

fn segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sqr();
    if l2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / l2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

fn polyline_edges(pts: &[C64], closed: bool) -> Vec<[C64; 2]> {
    let mut e: Vec<[C64; 2]> = pts.windows(2).map(|w| [w[0], w[1]]).collect();
    if closed && pts.len() > 2 {
        e.push([pts[pts.len() - 1], pts[0]]);
    }
    e
}

#[derive(Debug, Clone)]
struct Locator {
    pieces: Vec<EdgeIndex>,
    graph: EdgeIndex,
    chart: Option<SuperattractingChart>,
}

/// Local-chart radius below which points are labeled by internal angle.
const NEAR_C0: f64 = 1e-3;

/// `ψ(x) = x exp(Σ_j d^{-j-1} log P(x_j))` for small local coordinates `x`.
fn local_psi(chart: &SuperattractingChart, x: C64) -> C64 {
    let d = chart.d as f64;
    let mut acc = C64::new(0.0, 0.0);
    let mut f = 1.0 / d;
    let mut v = x;
    for _ in 0..64 {
        if v.norm() < 1e-300 {
            break;
        }
        let term = chart.p_eval(v).ln();
        acc += term * f;
        if term.norm() * f < 1e-18 {
            break;
        }
        v = chart.step(v);
        f /= d;
    }
    x * acc.exp()
}

impl PuzzleSpec {
    fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| {
            let pieces = self
                .pieces
                .iter()
                .map(|p| EdgeIndex::new(polyline_edges(&p.polygon, true), 1024, 0.0))
                .collect();
            let mut edges = Vec::new();
            for r in &self.rays {
                edges.extend(polyline_edges(&r.polyline, false));
            }
            let chart = SuperattractingChart::new(&self.poly, self.c0).ok();
            Locator { pieces, graph: EdgeIndex::new(edges, 2048, self.tol_graph), chart }
        })
    }

    pub fn label_count(&self) -> usize {
        self.pieces.len()
    }

    /// Degree of the polynomial.
    pub fn big_degree(&self) -> u32 {
        self.poly.degree() as u32
    }

    /// Label of the piece containing internal angle 0, which by convention holds `c0`.
    pub fn c0_label(&self) -> u8 {
        0
    }

    pub fn is_admissible(&self, word: &[u8]) -> Result<(), PuzzleError> {
        for (i, w) in word.windows(2).enumerate() {
            let (a, b) = (w[0] as usize, w[1] as usize);
            if a >= self.pieces.len() || b >= self.pieces.len() {
                return Err(PuzzleError::BadLabel(label_name(w[0].max(w[1])).to_string()));
            }
            if !self.transitions[a][b] {
                return Err(PuzzleError::Inadmissible(i + 1));
            }
        }
        Ok(())
    }

    /// Depth-0 label of a point.
    pub fn label(&self, z: C64) -> Result<u8, PuzzleError> {
        self.label_at(z, 0)
    }

    fn label_at(&self, z: C64, j: usize) -> Result<u8, PuzzleError> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(PuzzleError::LeftDomain(j));
        }
        if escape_potential(&self.poly, z).map_or(false, |g| g >= self.external_level) {
            return Err(PuzzleError::LeftDomain(j));
        }
        let loc = self.locator();
        if let Some(chart) = &loc.chart {
            let x = chart.to_local(z);
            if x.norm() < NEAR_C0 {
                return self.label_near_c0(chart, x, j);
            }
        }
        if loc.graph.near(z, self.tol_graph) {
            return Err(PuzzleError::OnGraph(j));
        }
        for (i, p) in loc.pieces.iter().enumerate() {
            if p.inside(z) {
                return Ok(i as u8);
            }
        }
        Err(PuzzleError::LeftDomain(j))
    }

    /// Near `c0` the graph distance is measured as the angular separation of `log ψ`.
    fn label_near_c0(&self, chart: &SuperattractingChart, x: C64, j: usize) -> Result<u8, PuzzleError> {
        if x.norm() == 0.0 {
            return Err(PuzzleError::OnGraph(j));
        }
        let phase = local_psi(chart, x).arg() / (2.0 * PI);
        for t in &self.cycle {
            let off = (phase - t.to_f64()).rem_euclid(1.0);
            if 2.0 * PI * off.min(1.0 - off) < self.tol_graph {
                return Err(PuzzleError::OnGraph(j));
            }
        }
        self.pieces
            .iter()
            .position(|p| p.internal.contains_f64(phase))
            .map(|i| i as u8)
            .ok_or(PuzzleError::OnGraph(j))
    }

    /// Free critical points: those other than `c0`.
    pub fn free_criticals(&self) -> Vec<(C64, u32)> {
        self.poly
            .criticals()
            .iter()
            .filter(|c| (c.point - self.c0).norm() > 1e-9 * (1.0 + self.c0.norm()))
            .map(|c| (c.point, c.local_degree))
            .collect()
    }

    /// Internal-angle arcs of the components carrying `word` (pullback under `t -> d t`).
    pub fn word_arcs(&self, word: &PieceId) -> Vec<Arc> {
        let w = word.word();
        let mut arcs = vec![self.pieces[*w.last().unwrap() as usize].internal.clone()];
        for &s in w[..w.len() - 1].iter().rev() {
            let target = &self.pieces[s as usize].internal;
            let mut next = Vec::new();
            for a in &arcs {
                for p in a.preimages(self.d) {
                    next.extend(p.intersect(target));
                }
            }
            arcs = next;
        }
        arcs
    }

    /// Atlas dump of depth-0 data.
    pub fn atlas(&self) -> Atlas {
        depth0_atlas(self)
    }
}

/// Potential of a point that escapes within 64 steps.
fn escape_potential(poly: &Polynomial, z: C64) -> Option<f64> {
    let dd = poly.degree() as f64;
    let mut w = poly.to_normalized(z);
    let mut scale = 1.0;
    for _ in 0..64 {
        let m = w.norm();
        if !m.is_finite() {
            return Some(f64::INFINITY);
        }
        if m > 1e6 {
            return Some(scale * m.ln());
        }
        w = poly.eval_norm(w);
        scale /= dd;
    }
    None
}

/// Green function of the basin of the fixed point `c0`, or `None` off the basin.
fn basin_potential(spec: &PuzzleSpec, z: C64, chart_kappa: C64) -> Option<f64> {
    let d = spec.d as f64;
    let mut w = z;
    let mut scale = 1.0;
    for _ in 0..400 {
        let x = chart_kappa * (w - spec.c0);
        let m = x.norm();
        if m == 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        if m < 1e-3 {
            return Some(scale * m.ln());
        }
        if !m.is_finite() || m > 1e12 {
            return None;
        }
        w = spec.poly.eval(w);
        scale /= d;
    }
    None
}

fn is_exact_power(poly: &Polynomial, c0: C64) -> bool {
    let c = poly.coeffs();
    let n = c.len() - 1;
    c0.norm() == 0.0 && c[..n].iter().all(|a| a.norm() == 0.0) && (c[n] - C64::new(1.0, 0.0)).norm() == 0.0
}

fn ray_failure(angle: &RationalAngle, e: impl fmt::Display) -> PuzzleError {
    PuzzleError::RayFailure { angle: angle.to_string(), reason: e.to_string() }
}

pub fn build_spec(poly: &Polynomial, c0: C64, theta: &RationalAngle) -> Result<PuzzleSpec, PuzzleError> {
    build_spec_with(poly, c0, theta, &PuzzleOptions::default())
}

pub fn build_spec_with(
    poly: &Polynomial,
    c0: C64,
    theta: &RationalAngle,
    opts: &PuzzleOptions,
) -> Result<PuzzleSpec, PuzzleError> {
    let basin = InternalBasin::new(poly, c0)?;
    if basin.period != 1 {
        return Err(PuzzleError::NotFixed(format!("{c0}")));
    }
    let c0 = basin.c0;
    let d = basin.local_degree();
    let big_d = poly.degree() as u32;
    let (pre, k) = theta.orbit_type(d);
    if pre != 0 || k < 2 {
        return Err(PuzzleError::BadAngle(theta.to_string(), d));
    }
    let mut cycle = vec![theta.clone()];
    for _ in 1..k {
        let next = cycle.last().unwrap().times_base(d);
        cycle.push(next);
    }
    cycle.sort();
    let exact = is_exact_power(poly, c0);
    let ctrl = &opts.rays;
    let t_out = crate::rays::external_seed(poly, ctrl);

    // Internal rays and their landing points.
    let internal: Vec<(C64, Vec<C64>)> = if exact {
        cycle
            .iter()
            .map(|t| {
                let x = C64::from_polar(1.0, 2.0 * PI * t.to_f64());
                (x, vec![C64::new(0.0, 0.0), x])
            })
            .collect()
    } else {
        cycle
            .par_iter()
            .map(|t| {
                let (_, landing) = land_internal_ray(&basin, poly, t, ctrl).map_err(|e| ray_failure(t, e))?;
                let grid = geometric_grid(ctrl.t_seed_internal, -ctrl.landing_t, opts.per_octave);
                let path = trace_internal_ray_on(&basin, t, &grid, ctrl).map_err(|e| ray_failure(t, e))?;
                let mut pts = vec![c0];
                pts.extend(path.points());
                pts.push(landing.point);
                Ok((landing.point, pts))
            })
            .collect::<Result<_, PuzzleError>>()?
    };
    let landing_points: Vec<C64> = internal.iter().map(|x| x.0).collect();
    let mut clash = f64::INFINITY;
    for i in 0..k as usize {
        for j in 0..i {
            clash = clash.min((landing_points[i] - landing_points[j]).norm());
        }
    }
    if clash < opts.clash_tol {
        return Err(PuzzleError::LandingClash(clash));
    }

    // External rays landing at each landing point.
    let external_angles: Vec<Vec<RationalAngle>> = if exact {
        cycle.iter().map(|t| vec![t.clone()]).collect()
    } else {
        let candidates = periodic_angles(big_d, k);
        let landed: Vec<(RationalAngle, Option<C64>)> = candidates
            .par_iter()
            .map(|a| (a.clone(), land_external_ray(poly, a, ctrl).ok().map(|(_, l)| l.point)))
            .collect();
        landing_points
            .iter()
            .map(|x| {
                let tol = ctrl.tol_cluster * (1.0 + x.norm());
                let found: Vec<RationalAngle> = landed
                    .iter()
                    .filter(|(_, p)| p.map_or(false, |p| (p - x).norm() < tol))
                    .map(|(a, _)| a.clone())
                    .collect();
                if found.is_empty() {
                    Err(PuzzleError::NoExternalRay(format!("{x}")))
                } else {
                    Ok(found)
                }
            })
            .collect::<Result<_, _>>()?
    };
    {
        let mut seen = HashSet::new();
        for set in &external_angles {
            for a in set {
                if !seen.insert(a.clone()) {
                    return Err(PuzzleError::LandingClash(0.0));
                }
            }
        }
    }
    let mut rays = Vec::new();
    for (i, t) in cycle.iter().enumerate() {
        rays.push(GraphRay { internal: true, angle: t.clone(), landing: landing_points[i], polyline: internal[i].1.clone() });
    }
    let ext_polylines: Vec<(usize, RationalAngle, Vec<C64>)> = external_angles
        .iter()
        .enumerate()
        .flat_map(|(i, set)| set.iter().map(move |a| (i, a.clone())))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(i, a)| {
            let x = landing_points[*i];
            if exact {
                let far = C64::from_polar(t_out.exp(), 2.0 * PI * a.to_f64());
                return Ok((*i, a.clone(), vec![far, x]));
            }
            let grid = geometric_grid(t_out, ctrl.landing_t, opts.per_octave);
            let path = trace_external_ray_on(poly, a, &grid, ctrl).map_err(|e| ray_failure(a, e))?;
            let mut pts: Vec<C64> = path.points().collect();
            pts.push(x);
            Ok((*i, a.clone(), pts))
        })
        .collect::<Result<_, PuzzleError>>()?;
    for (i, a, pts) in &ext_polylines {
        rays.push(GraphRay { internal: false, angle: a.clone(), landing: landing_points[*i], polyline: pts.clone() });
    }

    // Piece j sits between cycle[j] and cycle[j+1]; the wrapping piece gets label A.
    let kk = k as usize;
    let order: Vec<usize> = std::iter::once(kk - 1).chain(0..kk - 1).collect();
    let mut all_ext: Vec<(BigRational, usize)> = Vec::new();
    for (i, set) in external_angles.iter().enumerate() {
        for a in set {
            all_ext.push((rat(a), i));
        }
    }
    all_ext.sort();
    let ext_arc_between = |i: usize, j: usize| -> Result<(RationalAngle, RationalAngle), PuzzleError> {
        let n = all_ext.len();
        let mut found = None;
        for m in 0..n {
            let (a, oa) = &all_ext[m];
            let (b, ob) = &all_ext[(m + 1) % n];
            if *oa == i && *ob == j {
                if found.is_some() {
                    return Err(PuzzleError::InconsistentOrder);
                }
                found = Some((to_angle(a), to_angle(b)));
            }
        }
        found.ok_or(PuzzleError::InconsistentOrder)
    };
    let ray_pts = |internal: bool, angle: &RationalAngle| -> Vec<C64> {
        rays.iter().find(|r| r.internal == internal && r.angle == *angle).expect("graph ray").polyline.clone()
    };
    let mut pieces = Vec::new();
    for (label, &j) in order.iter().enumerate() {
        let j2 = (j + 1) % kk;
        let internal_arc = Arc::between(&cycle[j], &cycle[j2]);
        let (ea, eb) = if kk == 1 { unreachable!() } else { ext_arc_between(j, j2)? };
        let external_arc = Arc::between(&ea, &eb);
        let mut polygon = ray_pts(true, &cycle[j]);
        let mut out = ray_pts(false, &ea);
        out.reverse();
        polygon.extend(out);
        let lo = rat(&ea).to_f64().unwrap();
        let len = external_arc.len.to_f64().unwrap();
        let m = ((opts.arc_samples as f64 * len).ceil() as usize).max(16);
        for s in 1..m {
            let phase = lo + len * s as f64 / m as f64;
            polygon.push(if exact {
                C64::from_polar(t_out.exp(), 2.0 * PI * phase)
            } else {
                far_point(poly, t_out, phase, ctrl)
            });
        }
        polygon.extend(ray_pts(false, &eb));
        let mut back = ray_pts(true, &cycle[j2]);
        back.reverse();
        polygon.extend(back);
        pieces.push(PieceInfo { label: label_name(label as u8), internal: internal_arc, external: external_arc, polygon });
    }
    let transitions: Vec<Vec<bool>> = pieces
        .iter()
        .map(|p| {
            let img = p.external.times(big_d);
            pieces.iter().map(|q| img.meets(&q.external)).collect()
        })
        .collect();
    let internal_level = 1.0 / ((d as f64).powi(k as i32 - 1) - 1.0);
    let n_eq = 256;
    let external_equipotential = if exact {
        (0..n_eq).map(|j| C64::from_polar(1f64.exp(), 2.0 * PI * j as f64 / n_eq as f64)).collect()
    } else {
        crate::rays::external_equipotential(poly, 1.0, n_eq, ctrl)?
    };
    let internal_equipotential = if exact {
        (0..n_eq).map(|j| C64::from_polar((-internal_level).exp(), 2.0 * PI * j as f64 / n_eq as f64)).collect()
    } else {
        crate::rays::internal_equipotential(&basin, internal_level, n_eq, ctrl)?
    };
    Ok(PuzzleSpec {
        poly: poly.clone(),
        c0,
        d,
        theta: theta.clone(),
        period: k,
        cycle,
        landing_points,
        external_angles,
        external_level: 1.0,
        internal_level,
        rays,
        external_equipotential,
        internal_equipotential,
        pieces,
        transitions,
        tol_graph: opts.tol_graph,
        exact_power: exact,
        locator: OnceLock::new(),
    })
}

/// Point of external angle `phase` at a large potential `t`.
fn far_point(poly: &Polynomial, t: f64, phase: f64, ctrl: &RayControl) -> C64 {
    let q = 1u64 << 40;
    let p = ((phase.rem_euclid(1.0)) * q as f64).round() as u64 % q;
    let a = RationalAngle::from_u64(p, q).expect("q > 0");
    external_ray_point(poly, &a, t, ctrl).unwrap_or_else(|_| poly.to_user(C64::from_polar(t.exp(), 2.0 * PI * phase)))
}

/// Labeled depth-0 atlas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub schema: String,
    pub labels: Vec<char>,
    pub internal: Vec<Arc>,
    pub external: Vec<Arc>,
    /// Pairs `(from, to)` with `f(from)` meeting `to`.
    pub transitions: Vec<(char, char)>,
    pub pieces: Vec<PieceDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceDump {
    pub word: PieceId,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<C64>>,
}

pub const ATLAS_SCHEMA: &str = "fatou-puzzle/atlas/1";

pub fn depth0_atlas(spec: &PuzzleSpec) -> Atlas {
    let mut transitions = Vec::new();
    for (i, row) in spec.transitions.iter().enumerate() {
        for (j, &t) in row.iter().enumerate() {
            if t {
                transitions.push((label_name(i as u8), label_name(j as u8)));
            }
        }
    }
    Atlas {
        schema: ATLAS_SCHEMA.to_string(),
        labels: spec.pieces.iter().map(|p| p.label).collect(),
        internal: spec.pieces.iter().map(|p| p.internal.clone()).collect(),
        external: spec.pieces.iter().map(|p| p.external.clone()).collect(),
        transitions,
        pieces: (0..spec.pieces.len())
            .map(|i| PieceDump { word: PieceId { word: vec![i as u8] }, depth: 0, diameter: None, boundary: None })
            .collect(),
    }
}

/// Word of `z` to depth `n`.
pub fn locate(spec: &PuzzleSpec, z: C64, n: usize) -> Result<PieceId, PuzzleError> {
    let mut word = Vec::with_capacity(n + 1);
    let mut w = z;
    for j in 0..=n {
        word.push(spec.label_at(w, j)?);
        if j < n {
            w = spec.poly.eval(w);
        }
    }
    Ok(PieceId { word })
}

/// Product of local degrees of the critical points in the piece. The centre
/// `c0` lies on every internal ray of the graph; it is counted in the piece
/// containing internal angle 0.
pub fn piece_degree(spec: &PuzzleSpec, a: &PieceId) -> Result<u64, PuzzleError> {
    let mut deg = 1u64;
    if a.word().iter().all(|&s| s == spec.c0_label()) {
        deg *= spec.d as u64;
    }
    for (c, m) in spec.free_criticals() {
        match locate(spec, c, a.depth()) {
            Ok(w) if w == *a => deg *= m as u64,
            Ok(_) | Err(PuzzleError::LeftDomain(_)) => {}
            Err(PuzzleError::OnGraph(_)) => return Err(PuzzleError::CriticalOnGraph(format!("{c}"))),
            Err(e) => return Err(e),
        }
    }
    Ok(deg)
}

/// Polyline realization of a piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceGeometry {
    pub word: PieceId,
    pub boundary: Vec<C64>,
    pub diameter: f64,
    /// Boundary points of the piece on `∂U` where neighbouring pieces touch.
    pub contact_points: Vec<C64>,
    pub internal_interval: (RationalAngle, RationalAngle),
    /// Number of components carrying the same word.
    pub components: usize,
    /// Grid cell size of the realization; zero for exact sectors.
    pub cell: f64,
    pub complete: bool,
}

fn max_pairwise(pts: &[C64]) -> f64 {
    let hull = convex_hull(pts);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max((hull[i] - hull[j]).norm());
        }
    }
    best
}

fn convex_hull(pts: &[C64]) -> Vec<C64> {
    let mut p: Vec<C64> = pts.to_vec();
    p.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: C64, a: C64, b: C64| (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re);
    let mut lower: Vec<C64> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn sector_geometry(spec: &PuzzleSpec, word: &PieceId, arc: &Arc, components: usize, resolution: usize) -> PieceGeometry {
    let n = word.depth() as i32;
    let dd = spec.d as f64;
    let r_out = (spec.external_level / dd.powi(n)).exp();
    let r_in = (-spec.internal_level / dd.powi(n)).exp();
    let lo = arc.lo.to_f64().unwrap();
    let len = arc.len.to_f64().unwrap().min(1.0);
    let m = resolution.max(8);
    let mut boundary: Vec<C64> = (0..=m).map(|s| C64::from_polar(r_out, 2.0 * PI * (lo + len * s as f64 / m as f64))).collect();
    boundary.extend((0..=m).rev().map(|s| C64::from_polar(r_in, 2.0 * PI * (lo + len * s as f64 / m as f64))));
    let (a, b) = arc.endpoints();
    let contact_points = vec![C64::from_polar(1.0, 2.0 * PI * a.to_f64()), C64::from_polar(1.0, 2.0 * PI * b.to_f64())];
    PieceGeometry {
        word: word.clone(),
        diameter: max_pairwise(&boundary),
        boundary,
        contact_points,
        internal_interval: (a, b),
        components,
        cell: 0.0,
        complete: true,
    }
}

/// Geometry of the (first component of the) piece `a`.
pub fn geometry(spec: &PuzzleSpec, a: &PieceId, resolution: usize) -> Result<PieceGeometry, PuzzleError> {
    spec.is_admissible(a.word())?;
    let arcs = spec.word_arcs(a);
    let arc = arcs.first().ok_or_else(|| PuzzleError::PullbackFailure("word has no internal sector".into()))?;
    if spec.exact_power {
        return Ok(sector_geometry(spec, a, arc, arcs.len(), resolution));
    }
    let n = a.depth() as i32;
    let basin = InternalBasin::new(&spec.poly, spec.c0)?;
    let t = -0.5 * spec.internal_level / (spec.d as f64).powi(n);
    let ctrl = RayControl::default();
    let grid = geometric_grid(ctrl.t_seed_internal, t, 4);
    let mut last_err = PuzzleError::PullbackFailure(format!("no seed found in {a}"));
    for j in [4u32, 3, 5, 2, 6, 1, 7] {
        let s = &arc.lo + &arc.len * BigRational::new(BigInt::from(j), BigInt::from(8));
        let ray = match trace_internal_ray_on(&basin, &to_angle(&s), &grid, &ctrl) {
            Ok(r) => r,
            Err(e) => {
                last_err = e.into();
                continue;
            }
        };
        let Some((_, seed)) = ray.last() else { continue };
        if locate(spec, seed, a.depth()).ok().as_ref() == Some(a) {
            return flood_geometry(spec, &basin, seed, a, arc, arcs.len(), resolution, None);
        }
    }
    Err(last_err)
}

/// Geometry of `P_n(z)`, the component of the depth-`n` piece containing `z`.
pub fn geometry_at(
    spec: &PuzzleSpec,
    z: C64,
    n: usize,
    resolution: usize,
    hint: Option<f64>,
) -> Result<PieceGeometry, PuzzleError> {
    let word = locate(spec, z, n)?;
    let arcs = spec.word_arcs(&word);
    if spec.exact_power {
        let phase = z.arg() / (2.0 * PI);
        let arc = arcs
            .iter()
            .find(|a| a.contains_f64(phase))
            .ok_or_else(|| PuzzleError::PullbackFailure("no sector contains the point".into()))?;
        return Ok(sector_geometry(spec, &word, arc, arcs.len(), resolution));
    }
    let basin = InternalBasin::new(&spec.poly, spec.c0)?;
    let arc = basin
        .psi(z)
        .ok()
        .and_then(|p| {
            let phase = p.arg() / (2.0 * PI);
            arcs.iter().find(|a| a.contains_f64(phase))
        })
        .or(arcs.first())
        .cloned()
        .ok_or_else(|| PuzzleError::PullbackFailure("word has no internal sector".into()))?;
    flood_geometry(spec, &basin, z, &word, &arc, arcs.len(), resolution, hint)
}

#[allow(clippy::too_many_arguments)]
fn flood_geometry(
    spec: &PuzzleSpec,
    basin: &InternalBasin,
    seed: C64,
    word: &PieceId,
    arc: &Arc,
    components: usize,
    resolution: usize,
    hint: Option<f64>,
) -> Result<PieceGeometry, PuzzleError> {
    let n = word.depth();
    let big = spec.poly.degree() as f64;
    let g_max = spec.external_level / big.powi(n as i32);
    let kappa = basin.chart.kappa;
    let member = |z: C64| -> bool {
        if escape_potential(&spec.poly, z).map_or(false, |g| g >= g_max) {
            return false;
        }
        let Ok(w) = locate(spec, z, n) else { return false };
        if w != *word {
            return false;
        }
        let fz = spec.poly.iterate(z, n);
        !basin_potential(spec, fz, kappa).map_or(false, |g| g <= -spec.internal_level)
    };
    if !member(seed) {
        return Err(PuzzleError::PullbackFailure(format!("seed {seed} is not in the piece")));
    }
    let nres = resolution.max(16) | 1;
    let mut half = hint.unwrap_or_else(|| {
        let r: f64 = spec.landing_points.iter().map(|x| (x - seed).norm()).fold(0.0, f64::max);
        r.max(0.1)
    });
    let mut complete = false;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut h = 0.0;
    for _ in 0..12 {
        h = 2.0 * half / nres as f64;
        let c = nres / 2;
        let at = |i: usize, j: usize| seed + C64::new((i as f64 - c as f64) * h, (j as f64 - c as f64) * h);
        let mut state = vec![0u8; nres * nres];
        let mut queue = VecDeque::new();
        state[c * nres + c] = 2;
        queue.push_back((c, c));
        let mut touched = false;
        cells.clear();
        while let Some((i, j)) = queue.pop_front() {
            cells.push((i, j));
            if i == 0 || j == 0 || i + 1 == nres || j + 1 == nres {
                touched = true;
                continue;
            }
            for (a, b) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                let s = &mut state[a * nres + b];
                if *s == 0 {
                    *s = if member(at(a, b)) { 2 } else { 1 };
                    if *s == 2 {
                        queue.push_back((a, b));
                    }
                }
            }
        }
        if touched {
            half *= 2.0;
            continue;
        }
        let extent = cells
            .iter()
            .map(|&(i, j)| (i as f64 - c as f64).abs().max((j as f64 - c as f64).abs()))
            .fold(0.0, f64::max);
        if extent < 0.3 * c as f64 && extent > 0.0 {
            half = (extent + 2.0) * h * 1.15;
            continue;
        }
        complete = true;
        let set: HashSet<(usize, usize)> = cells.iter().copied().collect();
        let boundary_cells: Vec<(usize, usize)> = cells
            .iter()
            .copied()
            .filter(|&(i, j)| [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)].iter().any(|q| !set.contains(q)))
            .collect();
        let pts: Vec<C64> = boundary_cells.iter().map(|&(i, j)| at(i, j)).collect();
        let diameter = max_pairwise(&pts);
        let boundary = trace_contour(&set, &boundary_cells).into_iter().map(|(i, j)| at(i, j)).collect();
        let (ta, tb) = arc.endpoints();
        let contact_points = [ta.clone(), tb.clone()]
            .iter()
            .filter_map(|t| {
                let grid = geometric_grid(-8.0, -1e-9, 2);
                trace_internal_ray_on(basin, t, &grid, &RayControl::default()).ok().and_then(|p| p.last()).map(|s| s.1)
            })
            .collect();
        return Ok(PieceGeometry {
            word: word.clone(),
            boundary,
            diameter,
            contact_points,
            internal_interval: (ta, tb),
            components,
            cell: h,
            complete,
        });
    }
    let _ = complete;
    Err(PuzzleError::PullbackFailure(format!("flood fill did not close (cell {h:.3e}, {} cells)", cells.len())))
}

/// Moore-neighbour contour of a 4-connected cell set.
fn trace_contour(set: &HashSet<(usize, usize)>, boundary: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let Some(&start) = boundary.iter().min() else { return Vec::new() };
    let dirs: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];
    let has = |p: (i64, i64)| p.0 >= 0 && p.1 >= 0 && set.contains(&(p.0 as usize, p.1 as usize));
    let mut out = vec![start];
    let mut cur = (start.0 as i64, start.1 as i64);
    let mut back = 6usize;
    for _ in 0..4 * set.len() + 8 {
        let mut moved = false;
        for s in 1..=8 {
            let k = (back + s) % 8;
            let nb = (cur.0 + dirs[k].0, cur.1 + dirs[k].1);
            if has(nb) {
                back = (k + 4) % 8;
                cur = nb;
                moved = true;
                break;
            }
        }
        if !moved || (cur.0 as usize, cur.1 as usize) == start {
            break;
        }
        out.push((cur.0 as usize, cur.1 as usize));
    }
    out
}

/// Least depth at which the free critical points lie in pairwise distinct pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub depth: Option<usize>,
    pub words: Vec<Option<PieceId>>,
}

pub fn separation_depth(spec: &PuzzleSpec, max_depth: usize) -> SeparationReport {
    let crit = spec.free_criticals();
    let mut last = Vec::new();
    for n in 0..=max_depth {
        let words: Vec<Option<PieceId>> = crit.iter().map(|(c, _)| locate(spec, *c, n).ok()).collect();
        let inside: Vec<&PieceId> = words.iter().flatten().collect();
        let distinct = inside.iter().collect::<HashSet<_>>().len() == inside.len();
        last = words;
        if distinct {
            return SeparationReport { depth: Some(n), words: last };
        }
    }
    SeparationReport { depth: None, words: last }
}

/// Pieces of depth `n` met by a small circle around `z`; used for points on the graph.
pub fn pieces_near(spec: &PuzzleSpec, z: C64, n: usize, radius: f64, samples: usize) -> Vec<PieceId> {
    let mut out: Vec<PieceId> = (0..samples.max(4))
        .filter_map(|j| {
            let w = z + C64::from_polar(radius, 2.0 * PI * j as f64 / samples.max(4) as f64);
            locate(spec, w, n).ok()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Largest distance from `f(p)` to the graph over sampled graph points `p` whose
/// image stays in the puzzle domain.
pub fn stability_residual(spec: &PuzzleSpec, stride: usize) -> f64 {
    let mut edges = Vec::new();
    for r in &spec.rays {
        edges.extend(polyline_edges(&r.polyline, false));
    }
    let mut worst = 0.0f64;
    for r in &spec.rays {
        for p in r.polyline.iter().step_by(stride.max(1)) {
            let q = spec.poly.eval(*p);
            if escape_potential(&spec.poly, q).map_or(false, |g| g >= spec.external_level) {
                continue;
            }
            let d = edges.iter().map(|e| segment_distance(q, e[0], e[1])).fold(f64::INFINITY, f64::min);
            worst = worst.max(d / (1.0 + q.norm()));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(p: u64, q: u64) -> RationalAngle {
        RationalAngle::from_u64(p, q).unwrap()
    }

    fn z2() -> Polynomial {
        Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn z2_third_graph() {
        let s = build_spec(&z2(), C64::new(0.0, 0.0), &a(1, 3)).unwrap();
        assert_eq!(s.rays.iter().filter(|r| r.internal).count(), 2);
        assert_eq!(s.rays.iter().filter(|r| !r.internal).count(), 2);
        for (t, x) in s.cycle.iter().zip(&s.landing_points) {
            assert!((x - C64::from_polar(1.0, 2.0 * PI * t.to_f64())).norm() < 1e-12);
        }
        assert_eq!(s.pieces.len(), 2);
        assert_eq!(s.pieces[0].internal, Arc::between(&a(2, 3), &a(1, 3)));
        assert_eq!(s.pieces[1].internal, Arc::between(&a(1, 3), &a(2, 3)));
        assert_eq!(s.transitions, vec![vec![true, true], vec![true, false]]);
        assert!((s.internal_level - 1.0).abs() < 1e-15);
    }

    #[test]
    fn z2_seventh_graph() {
        let s = build_spec(&z2(), C64::new(0.0, 0.0), &a(1, 7)).unwrap();
        assert_eq!(s.period, 3);
        assert_eq!(s.pieces.len(), 3);
        assert!((s.internal_level - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.pieces[0].internal, Arc::between(&a(4, 7), &a(1, 7)));
        assert_eq!(s.pieces[1].internal, Arc::between(&a(1, 7), &a(2, 7)));
    }

    #[test]
    fn eventually_fixed_angle_rejected() {
        assert!(matches!(build_spec(&z2(), C64::new(0.0, 0.0), &a(1, 2)), Err(PuzzleError::BadAngle(..))));
    }

    #[test]
    fn z2_locate_examples() {
        let s = build_spec(&z2(), C64::new(0.0, 0.0), &a(1, 3)).unwrap();
        let z = C64::from_polar(0.5, 2.0 * PI * 0.1);
        assert_eq!(locate(&s, z, 2).unwrap().to_string(), "A,A,B");
        let z = C64::from_polar(0.5, 2.0 * PI * 0.4);
        assert_eq!(locate(&s, z, 1).unwrap().to_string(), "B,A");
        let z = C64::from_polar(0.5, 2.0 * PI / 3.0);
        assert_eq!(locate(&s, z, 3), Err(PuzzleError::OnGraph(0)));
        assert_eq!(locate(&s, C64::new(3.0, 0.1), 0), Err(PuzzleError::LeftDomain(0)));
    }

    #[test]
    fn word_operations() {
        let p = |s: &str| s.parse::<PieceId>().unwrap();
        assert!(contains(&p("A"), &p("A,B")));
        assert!(!contains(&p("A,B"), &p("A,A")));
        assert!(!contains(&p("A"), &p("B,A")));
        assert_eq!(image(&p("A,B,A")).unwrap(), p("B,A"));
        assert_eq!(image(&p("A,A")).unwrap(), p("A"));
        assert_eq!(image(&p("A")), Err(PuzzleError::Depth0));
    }

    #[test]
    fn z2_degrees_and_sector_geometry() {
        let s = build_spec(&z2(), C64::new(0.0, 0.0), &a(1, 3)).unwrap();
        let p = |w: &str| w.parse::<PieceId>().unwrap();
        assert_eq!(piece_degree(&s, &p("A")).unwrap(), 2);
        assert_eq!(piece_degree(&s, &p("B")).unwrap(), 1);
        assert_eq!(piece_degree(&s, &p("A,B")).unwrap(), 1);
        let e = 1f64.exp();
        let gb = geometry(&s, &p("B"), 512).unwrap();
        assert!((gb.diameter - e * 3f64.sqrt()).abs() < 1e-4);
        let ga = geometry(&s, &p("A"), 512).unwrap();
        assert!((ga.diameter - 2.0 * e).abs() < 1e-4);
        assert_eq!(ga.internal_interval, (a(2, 3), a(1, 3)));
    }
}
