//! Polynomial evaluation, escape classification, Green potential and the
//! external / superattracting-internal Böttcher coordinates.
//!
//! A [`Polynomial`] keeps the coefficients it was given ("user coordinates")
//! together with an affine conjugate that is monic and centered. Every point
//! accepted or returned by this module is in user coordinates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Numerical knobs for the potential-theoretic routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialTolerances {
    /// Bailout modulus (normalized coordinates) used by the Green potential.
    pub bailout: f64,
    /// Iteration cap for Green potential and Böttcher evaluation.
    pub max_iter: usize,
    /// Smallest potential accepted by [`bottcher_external`].
    pub g_min: f64,
    /// Tolerance for the Green functional equation.
    pub tol_g: f64,
    /// Root tolerance for critical points.
    pub tol_root: f64,
}

impl Default for PotentialTolerances {
    fn default() -> Self {
        Self { bailout: 1e8, max_iter: 20_000, g_min: 0.5, tol_g: 1e-10, tol_root: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("polynomial degree must be at least 2 (got {0})")]
    DegreeTooLow(usize),
    #[error("coefficient {0} is not finite")]
    NonFinite(usize),
    #[error("critical multiplicities sum to {got}, expected {expected}")]
    CriticalCount { got: u32, expected: u32 },
    #[error("potential {g:.3e} is below g_min {g_min:.3e}; branch tracking unreliable")]
    TooDeep { g: f64, g_min: f64 },
    #[error("point is not in the immediate basin of the superattracting point")]
    NotInBasin,
    #[error("normalizing coefficient of the local expansion vanishes")]
    DegenerateNormalization,
    #[error("{0} is not a superattracting fixed point")]
    NotSuperattracting(String),
    #[error("invalid polynomial description: {0}")]
    Parse(String),
}

/// A critical point together with its local degree (multiplicity + 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Critical {
    pub point: C64,
    pub local_degree: u32,
}

/// Result of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EscapeStatus {
    Escaped { n: usize },
    Bounded { max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeResult {
    pub status: EscapeStatus,
    pub last_point: C64,
}

impl EscapeResult {
    pub fn escaped(&self) -> Option<usize> {
        match self.status {
            EscapeStatus::Escaped { n } => Some(n),
            EscapeStatus::Bounded { .. } => None,
        }
    }
}

/// Green potential value (natural log units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialValue {
    pub g: f64,
}

/// JSON description of a polynomial, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySpec {
    pub coeffs: Vec<[f64; 2]>,
    #[serde(default)]
    pub label: String,
}

/// Degree-`D` complex polynomial with its normalization and critical table.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    label: String,
    user: Vec<C64>,
    norm: Vec<C64>,
    scale: C64,
    shift: C64,
    criticals: Vec<Critical>,
}

impl Polynomial {
    /// Build from user coefficients (lowest degree first).
    pub fn new(coeffs: Vec<C64>) -> Result<Self, PolyError> {
        Self::with_label(coeffs, String::new())
    }

    pub fn with_label(mut coeffs: Vec<C64>, label: String) -> Result<Self, PolyError> {
        if let Some(i) = coeffs.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(PolyError::NonFinite(i));
        }
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            coeffs.pop();
        }
        let deg = coeffs.len().saturating_sub(1);
        if deg < 2 {
            return Err(PolyError::DegreeTooLow(deg));
        }
        let lead = coeffs[deg];
        // z = scale*w + shift makes the conjugate monic and centered.
        let scale = (C64::new(1.0, 0.0) / lead).powf(1.0 / (deg as f64 - 1.0));
        let shift = -coeffs[deg - 1] / (lead * deg as f64);
        let mut norm = conjugate_coeffs(&coeffs, scale, shift);
        norm[deg] = C64::new(1.0, 0.0);
        norm[deg - 1] = C64::new(0.0, 0.0);
        let criticals = find_criticals(&coeffs, PotentialTolerances::default().tol_root);
        let total: u32 = criticals.iter().map(|c| c.local_degree - 1).sum();
        if total != deg as u32 - 1 {
            return Err(PolyError::CriticalCount { got: total, expected: deg as u32 - 1 });
        }
        Ok(Self { label, user: coeffs, norm, scale, shift, criticals })
    }

    pub fn from_spec(spec: &PolySpec) -> Result<Self, PolyError> {
        let coeffs = spec.coeffs.iter().map(|c| C64::new(c[0], c[1])).collect();
        Self::with_label(coeffs, spec.label.clone())
    }

    pub fn from_json(text: &str) -> Result<Self, PolyError> {
        let spec: PolySpec =
            serde_json::from_str(text).map_err(|e| PolyError::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> PolySpec {
        PolySpec { coeffs: self.user.iter().map(|c| [c.re, c.im]).collect(), label: self.label.clone() }
    }

    /// Real-coefficient convenience constructor.
    pub fn from_real(coeffs: &[f64]) -> Result<Self, PolyError> {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn degree(&self) -> usize {
        self.user.len() - 1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.user
    }

    /// Coefficients of the monic centered conjugate.
    pub fn normalized_coeffs(&self) -> &[C64] {
        &self.norm
    }

    /// `(scale, shift)` with user `z = scale * w + shift`.
    pub fn conjugacy(&self) -> (C64, C64) {
        (self.scale, self.shift)
    }

    pub fn criticals(&self) -> &[Critical] {
        &self.criticals
    }

    pub fn to_normalized(&self, z: C64) -> C64 {
        (z - self.shift) / self.scale
    }

    pub fn to_user(&self, w: C64) -> C64 {
        self.scale * w + self.shift
    }

    /// Horner evaluation in user coordinates.
    pub fn eval(&self, z: C64) -> C64 {
        horner(&self.user, z)
    }

    pub fn eval_deriv(&self, z: C64) -> (C64, C64) {
        horner_deriv(&self.user, z)
    }

    /// Evaluation of the normalized conjugate.
    pub fn eval_norm(&self, w: C64) -> C64 {
        horner(&self.norm, w)
    }

    pub fn eval_norm_deriv(&self, w: C64) -> (C64, C64) {
        horner_deriv(&self.norm, w)
    }

    pub fn iterate(&self, z: C64, n: usize) -> C64 {
        (0..n).fold(z, |acc, _| self.eval(acc))
    }

    /// `f^n(z)` and `(f^n)'(z)`.
    pub fn iterate_deriv(&self, z: C64, n: usize) -> (C64, C64) {
        let mut w = z;
        let mut dw = C64::new(1.0, 0.0);
        for _ in 0..n {
            let (v, dv) = self.eval_deriv(w);
            dw *= dv;
            w = v;
        }
        (w, dw)
    }

    /// Default escape radius `max(2, 1 + Σ|a_k/a_D|)` for `k < D`.
    pub fn default_escape_radius(&self) -> f64 {
        let d = self.degree();
        let lead = self.user[d].norm();
        let s: f64 = self.user[..d].iter().map(|c| c.norm() / lead).sum();
        (1.0 + s).max(2.0)
    }

    fn norm_escape_radius(&self) -> f64 {
        let s: f64 = self.norm[..self.degree()].iter().map(|c| c.norm()).sum();
        (1.0 + s).max(2.0)
    }

    /// The iterate `f^p` as a polynomial of degree `D^p`.
    pub fn iterate_poly(&self, p: usize) -> Result<Polynomial, PolyError> {
        let mut acc = self.user.clone();
        for _ in 1..p {
            acc = compose(&self.user, &acc);
        }
        Polynomial::with_label(acc, format!("{}^{}", self.label, p))
    }

    /// Smallest `p <= max_period` with `f^p(z) = z` within `tol` (relative).
    pub fn period_of(&self, z: C64, max_period: usize, tol: f64) -> Option<usize> {
        let mut w = z;
        for p in 1..=max_period {
            w = self.eval(w);
            if (w - z).norm() <= tol * (1.0 + z.norm()) {
                return Some(p);
            }
        }
        None
    }

    /// Fixed critical points of local degree at least 2.
    pub fn superattracting_fixed(&self) -> Vec<Critical> {
        self.criticals
            .iter()
            .filter(|c| (self.eval(c.point) - c.point).norm() < 1e-8 * (1.0 + c.point.norm()))
            .copied()
            .collect()
    }
}

/// Convenience: value at `z` (user coordinates).
pub fn evaluate(poly: &Polynomial, z: C64) -> C64 {
    poly.eval(z)
}

/// Iterate until `|f^n(z)| >= escape_radius`; `Escaped{n}` carries the minimal `n`.
pub fn classify(poly: &Polynomial, z: C64, escape_radius: f64, max_iter: usize) -> EscapeResult {
    let mut w = z;
    for n in 0..=max_iter {
        if w.norm() >= escape_radius {
            return EscapeResult { status: EscapeStatus::Escaped { n }, last_point: w };
        }
        if n == max_iter {
            break;
        }
        w = poly.eval(w);
    }
    EscapeResult { status: EscapeStatus::Bounded { max_iter }, last_point: w }
}

/// Green potential with default tolerances.
pub fn green_potential(poly: &Polynomial, z: C64) -> PotentialValue {
    green_potential_with(poly, z, &PotentialTolerances::default())
}

pub fn green_potential_with(poly: &Polynomial, z: C64, tol: &PotentialTolerances) -> PotentialValue {
    PotentialValue { g: green_norm(poly, poly.to_normalized(z), tol) }
}

/// Green potential of the normalized conjugate at `w`.
pub(crate) fn green_norm(poly: &Polynomial, w: C64, tol: &PotentialTolerances) -> f64 {
    let d = poly.degree() as f64;
    let mut w = w;
    let mut scale = 1.0;
    let r_esc = poly.norm_escape_radius();
    let mut escaped = false;
    for _ in 0..tol.max_iter {
        let m = w.norm();
        if m > tol.bailout {
            return scale * m.ln();
        }
        if m > r_esc {
            escaped = true;
        }
        w = poly.eval_norm(w);
        scale /= d;
        if escaped && scale == 0.0 {
            return 0.0;
        }
    }
    0.0
}

/// External Böttcher coordinate `φ = Φ_∞^{-1}` (tangent to identity for monic input).
pub fn bottcher_external(poly: &Polynomial, z: C64) -> Result<C64, PolyError> {
    bottcher_external_with(poly, z, &PotentialTolerances::default())
}

pub fn bottcher_external_with(
    poly: &Polynomial,
    z: C64,
    tol: &PotentialTolerances,
) -> Result<C64, PolyError> {
    let w = poly.to_normalized(z);
    let g = green_norm(poly, w, tol);
    if g <= tol.g_min {
        return Err(PolyError::TooDeep { g, g_min: tol.g_min });
    }
    let dd = poly.degree();
    let tail = |x: C64| -> C64 {
        // q(x)/x^D = 1 + Σ c_k x^{k-D}
        let inv = x.inv();
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..dd {
            acc = acc * inv + poly.norm[k];
        }
        // acc = Σ_{k<D} c_k inv^{D-1-k}; multiply once more by inv.
        C64::new(1.0, 0.0) + acc * inv
    };
    let step = |x: C64| poly.eval_norm(x);
    let log_phi = continued_log_sum(
        |s| w * s,
        1.0,
        (tol.bailout / w.norm()).max(2.0) * 10.0,
        &tail,
        &step,
        dd as f64,
        |x: C64| x.norm() > tol.bailout * 1e4,
        tol.max_iter,
    )
    .ok_or(PolyError::TooDeep { g, g_min: tol.g_min })?;
    Ok((w.ln() + log_phi).exp())
}

/// Sum `Σ_{n≥0} base^{-(n+1)} log tail(x_n)` with `x_{n+1} = step(x_n)`, the branch
/// of every term continued along `path(s)` for `s` from `s_far` down to `s_near`.
/// At `s_far` every term is assumed close to zero.
#[allow(clippy::too_many_arguments)]
fn continued_log_sum(
    path: impl Fn(f64) -> C64,
    s_near: f64,
    s_far: f64,
    tail: &impl Fn(C64) -> C64,
    step: &impl Fn(C64) -> C64,
    base: f64,
    done: impl Fn(C64) -> bool,
    max_terms: usize,
) -> Option<C64> {
    // Terms at a point, principal branch, plus the orbit length used.
    let terms_at = |x: C64| -> Option<Vec<C64>> {
        let mut out = Vec::new();
        let mut x = x;
        for _ in 0..max_terms {
            if done(x) {
                return Some(out);
            }
            out.push(tail(x).ln());
            x = step(x);
        }
        None
    };
    let unwrap = |prev: &[C64], cur: &mut Vec<C64>| -> f64 {
        let mut worst: f64 = 0.0;
        for (i, c) in cur.iter_mut().enumerate() {
            let p = prev.get(i).copied().unwrap_or(C64::new(0.0, 0.0));
            let k = ((p.im - c.im) / (2.0 * PI)).round();
            c.im += 2.0 * PI * k;
            worst = worst.max((c.im - p.im).abs());
        }
        worst
    };
    // Walk in log(s) from far to near with adaptive steps.
    let (l_near, l_far) = (s_near.ln(), s_far.ln());
    let mut l = l_far;
    let mut prev = terms_at(path(s_far))?;
    for t in prev.iter_mut() {
        t.im = t.im.rem_euclid(2.0 * PI);
        if t.im > PI {
            t.im -= 2.0 * PI;
        }
    }
    let mut h = (l_far - l_near) / 64.0;
    let mut guard = 0usize;
    while l > l_near {
        guard += 1;
        if guard > 200_000 {
            return None;
        }
        let ln = (l - h).max(l_near);
        let mut cur = terms_at(path(ln.exp()))?;
        let jump = unwrap(&prev, &mut cur);
        if jump > 0.5 && h > 1e-12 {
            h *= 0.5;
            continue;
        }
        prev = cur;
        l = ln;
        if jump < 0.1 {
            h *= 1.5;
        }
    }
    let mut sum = C64::new(0.0, 0.0);
    let mut f = 1.0 / base;
    for t in &prev {
        sum += *t * f;
        f /= base;
    }
    Some(sum)
}

/// Local data at a superattracting fixed point `c0` of local degree `d`:
/// `f(c0 + u) - c0 = a u^d (1 + ...)`, `kappa = a^{1/(d-1)}` and
/// `x = kappa (z - c0)` conjugates `f` to `x^d P(x)` with `P(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperattractingChart {
    pub c0: C64,
    pub d: u32,
    pub kappa: C64,
    /// Coefficients of `P`, lowest first.
    pub p: Vec<C64>,
}

impl SuperattractingChart {
    pub fn new(poly: &Polynomial, c0: C64) -> Result<Self, PolyError> {
        let crit = poly
            .criticals()
            .iter()
            .find(|c| (c.point - c0).norm() < 1e-7 * (1.0 + c0.norm()))
            .copied()
            .ok_or_else(|| PolyError::NotSuperattracting(format!("{c0}")))?;
        let c0 = crit.point;
        if (poly.eval(c0) - c0).norm() > 1e-8 * (1.0 + c0.norm()) {
            return Err(PolyError::NotSuperattracting(format!("{c0}")));
        }
        let d = crit.local_degree as usize;
        let b = taylor_shift(poly.coeffs(), c0);
        let a = b[d];
        if a.norm() < 1e-300 {
            return Err(PolyError::DegenerateNormalization);
        }
        let kappa = if d == 2 { a } else { a.powf(1.0 / (d as f64 - 1.0)) };
        let mut p = Vec::with_capacity(b.len() - d);
        let mut kpow = C64::new(1.0, 0.0);
        for bk in b.iter().skip(d) {
            p.push(*bk / a * kpow);
            kpow /= kappa;
        }
        Ok(Self { c0, d: d as u32, kappa, p })
    }

    pub fn to_local(&self, z: C64) -> C64 {
        self.kappa * (z - self.c0)
    }

    pub fn to_user(&self, x: C64) -> C64 {
        self.c0 + x / self.kappa
    }

    pub fn p_eval(&self, x: C64) -> C64 {
        horner(&self.p, x)
    }

    /// Local map `G(x) = x^d P(x)`.
    pub fn step(&self, x: C64) -> C64 {
        x.powu(self.d) * self.p_eval(x)
    }

    pub fn step_deriv(&self, x: C64) -> (C64, C64) {
        let (pv, pd) = horner_deriv(&self.p, x);
        let xd1 = x.powu(self.d - 1);
        (xd1 * x * pv, xd1 * (pv * self.d as f64 + x * pd))
    }
}

/// Internal Böttcher coordinate at the superattracting fixed point `c0`.
/// The result conjugates `f` to `w ↦ w^d`; its derivative at `c0` is the chart's `kappa`
/// (equal to 1 when the leading local coefficient is 1).
pub fn bottcher_internal(poly: &Polynomial, c0: C64, z: C64) -> Result<C64, PolyError> {
    let chart = SuperattractingChart::new(poly, c0)?;
    bottcher_internal_chart(&chart, z, &PotentialTolerances::default())
}

pub fn bottcher_internal_chart(
    chart: &SuperattractingChart,
    z: C64,
    tol: &PotentialTolerances,
) -> Result<C64, PolyError> {
    let x0 = chart.to_local(z);
    if x0.norm() == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let in_basin = |x: C64| -> bool {
        let mut x = x;
        for _ in 0..tol.max_iter {
            if x.norm() < 1e-3 {
                return true;
            }
            if !x.norm().is_finite() || x.norm() > 1e6 {
                return false;
            }
            x = chart.step(x);
        }
        false
    };
    if !in_basin(x0) {
        return Err(PolyError::NotInBasin);
    }
    let s = internal_log_sum(chart, x0, tol).ok_or(PolyError::NotInBasin)?;
    Ok((x0.ln() + s).exp())
}

/// `Σ d^{-(n+1)} log P(x_n)` continued along the segment from 0 to `x0`.
fn internal_log_sum(chart: &SuperattractingChart, x0: C64, tol: &PotentialTolerances) -> Option<C64> {
    let d = chart.d as f64;
    let terms_at = |x: C64| -> Option<Vec<C64>> {
        let mut out = Vec::new();
        let mut x = x;
        for _ in 0..tol.max_iter {
            if x.norm() < 1e-17 {
                return Some(out);
            }
            if !x.norm().is_finite() || x.norm() > 1e6 {
                return None;
            }
            out.push(chart.p_eval(x).ln());
            x = chart.step(x);
        }
        None
    };
    let mut s = 0.0f64;
    let mut prev: Vec<C64> = Vec::new();
    let mut h = 1.0 / 64.0;
    let mut guard = 0usize;
    while s < 1.0 {
        guard += 1;
        if guard > 200_000 {
            return None;
        }
        let sn = (s + h).min(1.0);
        let mut cur = terms_at(x0 * sn)?;
        let mut worst: f64 = 0.0;
        for (i, c) in cur.iter_mut().enumerate() {
            let p = prev.get(i).copied().unwrap_or(C64::new(0.0, 0.0));
            let k = ((p.im - c.im) / (2.0 * PI)).round();
            c.im += 2.0 * PI * k;
            worst = worst.max((c.im - p.im).abs());
        }
        if worst > 0.5 && h > 1e-12 {
            h *= 0.5;
            continue;
        }
        prev = cur;
        s = sn;
        if worst < 0.1 {
            h *= 1.5;
        }
    }
    let mut sum = C64::new(0.0, 0.0);
    let mut f = 1.0 / d;
    for t in &prev {
        sum += *t * f;
        f /= d;
    }
    Some(sum)
}

pub(crate) fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

pub(crate) fn horner_deriv(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Coefficients of `p(z + s)`.
pub(crate) fn taylor_shift(c: &[C64], s: C64) -> Vec<C64> {
    let mut b = c.to_vec();
    let n = b.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = b[j + 1] * s;
            b[j] += t;
        }
    }
    b
}

/// Coefficients of `(p(scale*w + shift) - shift) / scale`.
fn conjugate_coeffs(c: &[C64], scale: C64, shift: C64) -> Vec<C64> {
    let mut b = taylor_shift(c, shift);
    b[0] -= shift;
    let mut sp = C64::new(1.0, 0.0);
    for bk in b.iter_mut() {
        *bk *= sp / scale;
        sp *= scale;
    }
    b
}

/// Coefficients of `f ∘ g`.
pub(crate) fn compose(f: &[C64], g: &[C64]) -> Vec<C64> {
    let mut r = vec![*f.last().expect("nonempty")];
    for &a in f.iter().rev().skip(1) {
        let mut prod = vec![C64::new(0.0, 0.0); r.len() + g.len() - 1];
        for (i, &x) in r.iter().enumerate() {
            for (j, &y) in g.iter().enumerate() {
                prod[i + j] += x * y;
            }
        }
        prod[0] += a;
        r = prod;
    }
    r
}

fn derivative(c: &[C64]) -> Vec<C64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect()
}

/// Simultaneous Aberth iteration for all roots of `c` (lowest first).
pub fn aberth_roots(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<C64> = c.iter().map(|&a| a / lead).collect();
    let bound = 1.0 + monic[..n].iter().map(|a| a.norm()).fold(0.0, f64::max);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(0.5 * bound, 2.0 * PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner_deriv(&monic, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let diff = z[i] - z[j];
                    if diff.norm() > 0.0 {
                        s += diff.inv();
                    }
                }
            }
            let denom = C64::new(1.0, 0.0) - ratio * s;
            let delta = if denom.norm() > 0.0 && dp.norm() > 0.0 { ratio / denom } else { C64::new(1e-8, 1e-8) };
            if delta.re.is_finite() && delta.im.is_finite() {
                z[i] -= delta;
                moved = moved.max(delta.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-16 {
            break;
        }
    }
    z
}

/// Critical points of `c` via Aberth on `c'`; nearby roots are grouped and a group of
/// size `m` is accepted as one point of multiplicity `m` when the higher derivatives
/// of `c'` vanish at its mean to `tol_root`.
pub fn find_criticals(c: &[C64], tol_root: f64) -> Vec<Critical> {
    let dc = derivative(c);
    let roots = aberth_roots(&dc);
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let n = roots.len();
    let mut used = vec![false; n];
    let mut out = Vec::new();
    // Multiple roots are only resolved to ~eps^{1/m} by Aberth; group generously first.
    let group_radius = 1e-4 * scale;
    for i in 0..n {
        if used[i] {
            continue;
        }
        let mut members = vec![i];
        used[i] = true;
        for j in (i + 1)..n {
            if !used[j] && (roots[j] - roots[i]).norm() < group_radius {
                members.push(j);
                used[j] = true;
            }
        }
        let mean = members.iter().map(|&k| roots[k]).sum::<C64>() / members.len() as f64;
        if members.len() == 1 || is_multiple_root(&dc, mean, members.len(), tol_root) {
            let point = if members.len() == 1 { polish_root(&dc, mean) } else { mean };
            out.push(Critical { point, local_degree: members.len() as u32 + 1 });
        } else {
            for &k in &members {
                out.push(Critical { point: polish_root(&dc, roots[k]), local_degree: 2 });
            }
        }
    }
    merge_close(out, tol_root * scale)
}

fn merge_close(mut v: Vec<Critical>, tol: f64) -> Vec<Critical> {
    let mut out: Vec<Critical> = Vec::new();
    v.sort_by(|a, b| a.point.re.partial_cmp(&b.point.re).unwrap().then(a.point.im.partial_cmp(&b.point.im).unwrap()));
    for c in v {
        if let Some(prev) = out.iter_mut().find(|p| (p.point - c.point).norm() < tol) {
            prev.local_degree += c.local_degree - 1;
        } else {
            out.push(c);
        }
    }
    out
}

fn is_multiple_root(p: &[C64], z: C64, m: usize, tol: f64) -> bool {
    let mut q = p.to_vec();
    let size = p.iter().map(|a| a.norm()).fold(0.0, f64::max).max(1e-300);
    for _ in 0..m {
        let v = horner(&q, z);
        if v.norm() / size > tol.sqrt() * 1e-2 {
            return false;
        }
        q = derivative(&q);
        if q.is_empty() {
            return false;
        }
    }
    true
}

fn polish_root(p: &[C64], mut z: C64) -> C64 {
    for _ in 0..50 {
        let (v, dv) = horner_deriv(p, z);
        if dv.norm() == 0.0 {
            break;
        }
        let step = v / dv;
        z -= step;
        if step.norm() < 1e-17 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let spec = PolySpec::deserialize(d)?;
        Polynomial::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn evaluate_examples() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        let cubic = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(evaluate(&z2, c(2.0, 0.0)), c(4.0, 0.0));
        assert_eq!(evaluate(&basilica, c(0.0, 0.0)), c(-1.0, 0.0));
        assert_eq!(evaluate(&cubic, c(1.0, 0.0)), c(2.0, 0.0));
    }

    #[test]
    fn classify_examples() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(classify(&z2, c(2.0, 0.0), 4.0, 100).escaped(), Some(1));
        assert_eq!(classify(&z2, c(0.5, 0.0), 4.0, 100).escaped(), None);
        assert_eq!(classify(&basilica, c(0.0, 0.0), 4.0, 100).escaped(), None);
    }

    #[test]
    fn normalization_is_monic_centered() {
        let p = Polynomial::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.5, 0.0), c(2.0, -1.0)]).unwrap();
        let n = p.normalized_coeffs();
        assert!((n[3] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(n[2].norm() < 1e-14);
        for z in [c(0.3, 0.1), c(-1.0, 2.0)] {
            let w = p.to_normalized(z);
            let lhs = p.to_normalized(p.eval(z));
            assert!((lhs - p.eval_norm(w)).norm() < 1e-10 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn criticals_with_multiplicity() {
        let z3 = Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(z3.criticals().len(), 1);
        assert_eq!(z3.criticals()[0].local_degree, 3);
        let cubic = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut pts: Vec<f64> = cubic.criticals().iter().map(|c| c.point.re).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((pts[0] + 2.0 / 3.0).abs() < 1e-12 && pts[1].abs() < 1e-12);
        let z5 = Polynomial::from_real(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(z5.criticals()[0].local_degree, 5);
    }

    #[test]
    fn iterate_poly_matches_composition() {
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        let f2 = basilica.iterate_poly(2).unwrap();
        assert_eq!(f2.degree(), 4);
        let z = c(0.3, -0.7);
        assert!((f2.eval(z) - basilica.iterate(z, 2)).norm() < 1e-14);
        assert_eq!(basilica.period_of(c(0.0, 0.0), 5, 1e-12), Some(2));
    }

    #[test]
    fn green_examples() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        assert!((green_potential(&z2, c(4.0, 0.0)).g - 4f64.ln()).abs() < 1e-12);
        assert_eq!(green_potential(&z2, c(0.3, 0.0)).g, 0.0);
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        assert!((green_potential(&basilica, c(10.0, 0.0)).g - 10f64.ln()).abs() < 0.02);
    }

    #[test]
    fn bottcher_external_examples() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        assert!((bottcher_external(&z2, c(3.0, 0.0)).unwrap() - c(3.0, 0.0)).norm() < 1e-12);
        let z3 = Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((bottcher_external(&z3, c(0.0, 2.0)).unwrap() - c(0.0, 2.0)).norm() < 1e-12);
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        let w = bottcher_external(&basilica, c(10.0, 0.0)).unwrap();
        let g = green_potential(&basilica, c(10.0, 0.0)).g;
        assert!((w - c(10.0, 0.0)).norm() < 0.1);
        assert!((w.norm() - g.exp()).abs() < 1e-9);
        assert!(matches!(bottcher_external(&basilica, c(0.0, 0.0)), Err(PolyError::TooDeep { .. })));
    }

    #[test]
    fn bottcher_external_conjugacy_near_julia() {
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        let tol = PotentialTolerances { g_min: 0.02, ..Default::default() };
        for z in [c(0.3, 1.4), c(-1.9, 0.4), c(1.7, -0.2), c(0.0, -1.5), c(0.1, 0.8)] {
            let w = bottcher_external_with(&basilica, z, &tol).unwrap();
            let wf = bottcher_external_with(&basilica, basilica.eval(z), &tol).unwrap();
            assert!((wf - w * w).norm() < 1e-9 * wf.norm(), "{z}: {wf} vs {}", w * w);
        }
    }

    #[test]
    fn bottcher_internal_examples() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let o = c(0.0, 0.0);
        assert!((bottcher_internal(&z2, o, c(0.5, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-14);
        assert!((bottcher_internal(&z2, o, c(0.0, 0.25)).unwrap() - c(0.0, 0.25)).norm() < 1e-14);
        let cubic = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let z = c(0.1, 0.0);
        let w = bottcher_internal(&cubic, o, z).unwrap();
        let wf = bottcher_internal(&cubic, o, cubic.eval(z)).unwrap();
        assert!((wf - w * w).norm() < 1e-9);
        assert!(matches!(bottcher_internal(&z2, o, c(1.5, 0.0)), Err(PolyError::NotInBasin)));
    }
}
