//! The parabolic disk model `B(z) = (z^d + v)/(1 + v z^d)`, `v = (d-1)/(d+1)`,
//! its attracting Fatou coordinate, the preimage tree of `[0, v]` and parabolic rays.

use super::{RayError, RayKind, RayLabel, RayPath};
use crate::angles::ItineraryWord;
use crate::poly_core::C64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Terms kept in the asymptotic expansion of the Fatou coordinate.
const SERIES_ORDER: usize = 14;
/// Petal entry radius in `u = z - 1`.
const PETAL_RADIUS: f64 = 0.03;

#[derive(Debug, Clone)]
pub struct BlaschkeModel {
    pub d: u32,
    pub v: f64,
    /// `c_k` for `k = -2..=SERIES_ORDER-2` (index `k + 2`), with `c_0 = 0`.
    coeffs: Vec<f64>,
    log_coeff: f64,
    offset: f64,
    pub max_iter: usize,
    pub sector_tol: f64,
}

/// Build the model for local degree `d >= 2`.
pub fn blaschke_model(d: u32) -> BlaschkeModel {
    BlaschkeModel::new(d)
}

impl BlaschkeModel {
    pub fn new(d: u32) -> Self {
        assert!(d >= 2, "degree must be at least 2");
        let v = (d as f64 - 1.0) / (d as f64 + 1.0);
        let (coeffs, log_coeff) = fatou_series(d, SERIES_ORDER);
        let mut m = Self { d, v, coeffs, log_coeff, offset: 0.0, max_iter: 5_000_000, sector_tol: 1e-13 };
        m.offset = m.fatou_raw(C64::new(0.0, 0.0)).expect("orbit of 0 converges").re;
        m
    }

    pub fn eval(&self, z: C64) -> C64 {
        let zd = z.powu(self.d);
        (zd + self.v) / (zd * self.v + 1.0)
    }

    pub fn deriv(&self, z: C64) -> C64 {
        let zd1 = z.powu(self.d - 1);
        let den = zd1 * z * self.v + 1.0;
        zd1 * (self.d as f64) * (1.0 - self.v * self.v) / (den * den)
    }

    /// `B(1 + u) - 1` without cancellation.
    pub fn step_u(&self, u: C64) -> C64 {
        let s = binom_minus_one(u, self.d);
        s * (1.0 - self.v) / (s * self.v + (1.0 + self.v))
    }

    fn alpha(&self, u: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut p = u.powi(-2);
        for c in &self.coeffs {
            acc += p * *c;
            p *= u;
        }
        acc + (-u).ln() * self.log_coeff
    }

    fn fatou_raw(&self, z: C64) -> Result<C64, RayError> {
        let mut u = z - 1.0;
        for n in 0..self.max_iter {
            if u.norm() < PETAL_RADIUS && (-u).arg().abs() < PI / 3.0 {
                return Ok(self.alpha(u) - n as f64);
            }
            u = self.step_u(u);
            if !u.norm().is_finite() {
                break;
            }
        }
        Err(RayError::SlowConvergence(self.max_iter))
    }

    /// Attracting Fatou coordinate normalized by `Φ₊(0) = 0`.
    pub fn fatou(&self, z: C64) -> Result<C64, RayError> {
        Ok(self.fatou_raw(z)? - self.offset)
    }

    /// `x ∈ [0, 1)` with `Φ₊(x) = s`, for `s >= 0`.
    pub fn fatou_inverse_real(&self, s: f64) -> Result<f64, RayError> {
        let n = s.floor().max(0.0) as usize;
        let mut lo = 0.0f64;
        for _ in 0..n {
            lo = self.eval(C64::new(lo, 0.0)).re;
        }
        let mut hi = self.eval(C64::new(lo, 0.0)).re;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.fatou(C64::new(mid, 0.0))?.re < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Tree vertex `z_j = v^{1/d} e^{iπ/d} ω^j`.
    pub fn first_level(&self, j: u32) -> C64 {
        let d = self.d as f64;
        C64::from_polar(self.v.powf(1.0 / d), PI / d + 2.0 * PI * j as f64 / d)
    }

    /// The preimage of `w` in the sector `S_j = {2πj/d < arg < 2π(j+1)/d}`.
    pub fn preimage_in_sector(&self, w: C64, j: u32) -> Result<C64, RayError> {
        let r = (w - self.v) / (-w * self.v + 1.0);
        let d = self.d as f64;
        let base_mod = r.norm().powf(1.0 / d);
        let base_arg = r.arg().rem_euclid(2.0 * PI) / d;
        let width = 2.0 * PI / d;
        for m in 0..self.d {
            let a = base_arg + width * m as f64;
            let lo = width * j as f64;
            if a > lo && a < lo + width {
                if (a - lo).min(lo + width - a) < self.sector_tol {
                    return Err(RayError::SectorAmbiguity);
                }
                return Ok(C64::from_polar(base_mod, a));
            }
        }
        Err(RayError::SectorAmbiguity)
    }
}

/// `(1 + u)^d - 1` by binomial expansion.
fn binom_minus_one(u: C64, d: u32) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let mut c = 1.0f64;
    let mut p = C64::new(1.0, 0.0);
    for j in 1..=d {
        c = c * (d - j + 1) as f64 / j as f64;
        p *= u;
        acc += p * c;
    }
    acc
}

fn ser_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn ser_inv(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    out[0] = 1.0 / a[0];
    for k in 1..n {
        let s: f64 = (1..=k).map(|j| a[j] * out[k - j]).sum();
        out[k] = -s / a[0];
    }
    out
}

fn ser_pow(a: &[f64], k: i32) -> Vec<f64> {
    let n = a.len();
    let base = if k < 0 { ser_inv(a) } else { a.to_vec() };
    let mut out = vec![0.0; n];
    out[0] = 1.0;
    for _ in 0..k.unsigned_abs() {
        out = ser_mul(&out, &base);
    }
    out
}

/// `log(a)` for `a(0) = 1`.
fn ser_log(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut x = a.to_vec();
    x[0] = 0.0;
    let mut out = vec![0.0; n];
    let mut p = x.clone();
    for j in 1..n {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        for i in 0..n {
            out[i] += sign * p[i] / j as f64;
        }
        p = ser_mul(&p, &x);
    }
    out
}

/// Coefficients of `α(u) = Σ_{k>=-2} c_k u^k + L log(-u)` with
/// `α(g(u)) - α(u) = 1 + O(u^{order+1})`, where `g(u) = B(1+u) - 1`.
fn fatou_series(d: u32, order: usize) -> (Vec<f64>, f64) {
    let n = order + 4;
    let v = (d as f64 - 1.0) / (d as f64 + 1.0);
    // s(u)/u with s = (1+u)^d - 1.
    let mut s_over_u = vec![0.0; n];
    let mut c = 1.0f64;
    for j in 1..=d as usize {
        c = c * (d as usize - j + 1) as f64 / j as f64;
        if j - 1 < n {
            s_over_u[j - 1] = c;
        }
    }
    let mut s = vec![0.0; n];
    s[1..n].copy_from_slice(&s_over_u[..n - 1]);
    // g = (1-v) s / ((1+v) + v s), h = g/u.
    let mut den = s.iter().map(|x| x * v).collect::<Vec<_>>();
    den[0] += 1.0 + v;
    let h: Vec<f64> = ser_mul(&s_over_u, &ser_inv(&den)).iter().map(|x| x * (1.0 - v)).collect();
    debug_assert!((h[0] - 1.0).abs() < 1e-14 && h[1].abs() < 1e-14);
    let a3 = h[2];
    let logh = ser_log(&h);
    let kmax = order as i32 - 2;
    let e: Vec<Vec<f64>> = (-2..=kmax)
        .map(|k| {
            let mut p = ser_pow(&h, k);
            p[0] -= 1.0;
            p
        })
        .collect();
    let mut cs = vec![0.0f64; (kmax + 3) as usize];
    let mut big_l = 0.0;
    for ord in 0..=order as i32 {
        // Known part of the order-`ord` coefficient.
        let mut known = 0.0;
        for k in -2..=(ord - 2).min(kmax) {
            let idx = (k + 2) as usize;
            if k == ord - 2 {
                continue;
            }
            let j = (ord - k) as usize;
            if j < n {
                known += cs[idx] * e[idx][j];
            }
        }
        if ord != 2 {
            known += big_l * logh[ord as usize];
        }
        let rhs = if ord == 0 { 1.0 } else { 0.0 } - known;
        if ord == 2 {
            big_l = rhs / logh[2];
        } else {
            let k = ord - 2;
            let idx = (k + 2) as usize;
            cs[idx] = rhs / (k as f64 * a3);
        }
    }
    (cs, big_l)
}

/// Points of the preimage tree of `[0, v]`, keyed by words `ε₁…εₙ`.
#[derive(Debug, Clone)]
pub struct ParabolicTree {
    pub d: u32,
    pub levels: BTreeMap<Vec<u32>, C64>,
}

impl ParabolicTree {
    pub fn point(&self, word: &[u32]) -> Option<C64> {
        self.levels.get(word).copied()
    }

    /// Edges `parent → child` where the child extends the parent's word by one final symbol.
    pub fn edges(&self) -> impl Iterator<Item = (&Vec<u32>, Vec<u32>)> + '_ {
        self.levels.keys().filter(|w| !w.is_empty()).map(|w| (w, w[..w.len() - 1].to_vec()))
    }

    /// Largest `|B(z_{ε₁…εₙ}) - z_{ε₂…εₙ}|` over the tree.
    pub fn max_identity_residual(&self, model: &BlaschkeModel) -> f64 {
        self.levels
            .iter()
            .filter(|(w, _)| !w.is_empty())
            .map(|(w, z)| (model.eval(*z) - self.levels[&w[1..].to_vec()]).norm())
            .fold(0.0, f64::max)
    }
}

/// Build all tree vertices with words of length `<= n_levels`.
pub fn parabolic_tree(d: u32, n_levels: usize) -> Result<ParabolicTree, RayError> {
    let model = BlaschkeModel::new(d);
    parabolic_tree_with(&model, n_levels)
}

pub fn parabolic_tree_with(model: &BlaschkeModel, n_levels: usize) -> Result<ParabolicTree, RayError> {
    let mut levels = BTreeMap::new();
    levels.insert(Vec::new(), C64::new(0.0, 0.0));
    let mut frontier: Vec<(Vec<u32>, C64)> = vec![(Vec::new(), C64::new(0.0, 0.0))];
    for _ in 0..n_levels {
        let mut next = Vec::with_capacity(frontier.len() * model.d as usize);
        for (w, z) in &frontier {
            for j in 0..model.d {
                let p = if w.is_empty() { model.first_level(j) } else { model.preimage_in_sector(*z, j)? };
                let mut word = Vec::with_capacity(w.len() + 1);
                word.push(j);
                word.extend_from_slice(w);
                next.push((word, p));
            }
        }
        for (w, z) in &next {
            levels.insert(w.clone(), *z);
        }
        frontier = next;
    }
    Ok(ParabolicTree { d: model.d, levels })
}

/// Point `R̂_ε(t)` of the parabolic ray. For `t >= 0` it lies on `[0, 1)`;
/// for `t ∈ [-n-1, -n]` on the tree edge `[z_{ε₁…εₙ}, z_{ε₁…εₙ₊₁}]`.
pub fn parabolic_ray_point(model: &BlaschkeModel, eps: &ItineraryWord, t: f64) -> Result<C64, RayError> {
    if t >= 0.0 {
        return Ok(C64::new(model.fatou_inverse_real(t)?, 0.0));
    }
    let n = ((-t).ceil() as usize).saturating_sub(1);
    let s = t + n as f64 + 1.0;
    let x = C64::new(model.fatou_inverse_real(s)?, 0.0);
    let sym = |i: usize| eps.symbol(i).ok_or(RayError::BadPotential("word shorter than requested depth"));
    let mut y = if (x.re - model.v).abs() < 1e-300 {
        C64::new(0.0, 0.0)
    } else {
        let r = (x - model.v) / (-x * model.v + 1.0);
        let d = model.d as f64;
        C64::from_polar(r.norm().powf(1.0 / d), PI / d + 2.0 * PI * sym(n)? as f64 / d)
    };
    for k in (0..n).rev() {
        y = model.preimage_in_sector(y, sym(k)?)?;
    }
    Ok(y)
}

/// Sampled parabolic ray from potential `t_top` down to `-n_levels`.
pub fn parabolic_ray_model(
    d: u32,
    eps: &ItineraryWord,
    n_levels: usize,
    samples_per_unit: usize,
) -> Result<RayPath, RayError> {
    let model = BlaschkeModel::new(d);
    let t_top = 2.0;
    let steps = ((t_top + n_levels as f64) * samples_per_unit as f64).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = t_top - i as f64 / samples_per_unit as f64;
        samples.push((t, parabolic_ray_point(&model, eps, t)?));
    }
    Ok(RayPath {
        kind: RayKind::ParabolicModel,
        angle: RayLabel::Word(eps.clone()),
        samples,
        landed: false,
        landing_point: None,
        max_residual: 0.0,
    })
}

/// `Φ₊(z)` for the degree-`d` model.
pub fn fatou_coordinate_model(d: u32, z: C64) -> Result<C64, RayError> {
    BlaschkeModel::new(d).fatou(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_values() {
        let b2 = blaschke_model(2);
        assert!((b2.v - 1.0 / 3.0).abs() < 1e-16);
        assert!((b2.eval(C64::new(0.0, 0.0)) - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-16);
        assert!((b2.eval(C64::new(1.0, 0.0)) - C64::new(1.0, 0.0)).norm() < 1e-16);
        assert!((b2.deriv(C64::new(1.0, 0.0)) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let b3 = blaschke_model(3);
        assert!((b3.eval(C64::new(0.0, 0.0)) - C64::new(0.5, 0.0)).norm() < 1e-16);
        assert!((b3.deriv(C64::new(1.0, 0.0)) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let u = C64::new(-0.01, 0.003);
        assert!((b2.step_u(u) - (b2.eval(u + 1.0) - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn fatou_normalization() {
        for d in [2, 3] {
            let m = blaschke_model(d);
            let z0 = C64::new(0.0, 0.0);
            let z1 = m.eval(z0);
            let z2 = m.eval(z1);
            assert!(m.fatou(z0).unwrap().norm() < 1e-12);
            assert!((m.fatou(z1).unwrap() - 1.0).norm() < 1e-9);
            assert!((m.fatou(z2).unwrap() - 2.0).norm() < 1e-9);
        }
    }

    #[test]
    fn abel_equation_off_axis() {
        let m = blaschke_model(2);
        for z in [C64::new(0.3, 0.4), C64::new(-0.5, 0.2), C64::new(0.1, -0.8)] {
            let r = m.fatou(m.eval(z)).unwrap() - m.fatou(z).unwrap() - 1.0;
            assert!(r.norm() < 1e-8, "{z}: {r}");
        }
    }

    #[test]
    fn tree_first_levels() {
        let t = parabolic_tree(2, 3).unwrap();
        assert!((t.point(&[0]).unwrap() - C64::new(0.0, 1.0 / 3f64.sqrt())).norm() < 1e-15);
        assert!((t.point(&[1]).unwrap() - C64::new(0.0, -1.0 / 3f64.sqrt())).norm() < 1e-15);
        assert_eq!(t.point(&[]), Some(C64::new(0.0, 0.0)));
        assert!(t.max_identity_residual(&blaschke_model(2)) < 1e-12);
    }

    #[test]
    fn ray_passes_through_tree() {
        let m = blaschke_model(2);
        let eps = ItineraryWord::periodic(&[0]);
        let tree = parabolic_tree(2, 3).unwrap();
        for n in 0..3usize {
            let p = parabolic_ray_point(&m, &eps, -(n as f64) - 1.0).unwrap();
            assert!((p - tree.point(&vec![0; n + 1]).unwrap()).norm() < 1e-9);
        }
        let p0 = parabolic_ray_point(&m, &eps, 0.0).unwrap();
        assert!(p0.norm() < 1e-9);
    }

    #[test]
    fn ray_mirror_symmetry() {
        let m = blaschke_model(2);
        let e0 = ItineraryWord::periodic(&[0]);
        let e1 = ItineraryWord::periodic(&[1]);
        for t in [-0.3, -0.8] {
            let a = parabolic_ray_point(&m, &e0, t).unwrap();
            let b = parabolic_ray_point(&m, &e1, t).unwrap();
            assert!((a.conj() - b).norm() < 1e-12);
        }
    }
}
