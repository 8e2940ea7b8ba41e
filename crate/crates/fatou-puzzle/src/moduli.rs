//! Conformal moduli of annuli between nested closed polylines, and the
//! inequality checks built on them.

use crate::poly_core::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModulusError {
    #[error("radius must exceed 1, got {0}")]
    BadRadius(f64),
    #[error("grid step {h} too coarse for gap {gap:.3e}")]
    GridTooCoarse { h: f64, gap: f64 },
    #[error("polyline needs at least 3 vertices")]
    BadPolyline,
    #[error("inner boundary is not inside the outer boundary")]
    NotNested,
    #[error("grid step must be positive")]
    BadStep,
    #[error("conjugate gradients stalled at residual {0:.3e}")]
    NoConvergence(f64),
    #[error("point is not interior to the region")]
    NotInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusMethod {
    RoundFormula,
    GridEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusEstimate {
    pub modulus: f64,
    pub method: ModulusMethod,
    pub grid_h: f64,
    /// Change of the estimate between steps `2h` and `h`.
    pub error_bound: f64,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contact_points: Vec<C64>,
}

impl AnnulusEstimate {
    pub fn round(r: f64) -> Result<Self, ModulusError> {
        Ok(Self {
            modulus: modulus_round(r)?,
            method: ModulusMethod::RoundFormula,
            grid_h: 0.0,
            error_bound: 0.0,
            degenerate: false,
            contact_points: Vec::new(),
        })
    }
}

/// Modulus of `{1 < |z| < r}`.
pub fn modulus_round(r: f64) -> Result<f64, ModulusError> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(ModulusError::BadRadius(r));
    }
    Ok(r.ln() / (2.0 * PI))
}

/// Closed polyline approximating the circle `|z - center| = r`.
pub fn circle(center: C64, r: f64, n: usize) -> Vec<C64> {
    (0..n).map(|k| center + C64::from_polar(r, 2.0 * PI * k as f64 / n as f64)).collect()
}

/// Axis-aligned square of side `side`, sampled with `per_side` points per side.
pub fn square(center: C64, side: f64, per_side: usize) -> Vec<C64> {
    let s = side / 2.0;
    let corners = [C64::new(-s, -s), C64::new(s, -s), C64::new(s, s), C64::new(-s, s)];
    let mut out = Vec::with_capacity(4 * per_side);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for j in 0..per_side {
            out.push(center + a + (b - a) * (j as f64 / per_side as f64));
        }
    }
    out
}

fn segments(poly: &[C64]) -> impl Iterator<Item = (C64, C64)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sqr();
    let t = if l2 == 0.0 { 0.0 } else { (((p - a) * ab.conj()).re / l2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to a closed polyline.
pub fn distance_to(poly: &[C64], p: C64) -> f64 {
    segments(poly).map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
}

/// Even-odd point-in-polygon test.
pub fn inside(poly: &[C64], p: C64) -> bool {
    let mut c = false;
    for (a, b) in segments(poly) {
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                c = !c;
            }
        }
    }
    c
}

/// Sorted x-coordinates where the horizontal line `y` crosses the polyline.
fn row_crossings(poly: &[C64], y: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = segments(poly)
        .filter(|(a, b)| (a.im > y) != (b.im > y))
        .map(|(a, b)| a.re + (y - a.im) / (b.im - a.im) * (b.re - a.re))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs
}

/// Smallest parameter `s ∈ [0, 1]` with `p + s (q - p)` on the polyline.
fn first_crossing(poly: &[C64], p: C64, q: C64) -> Option<f64> {
    let d = q - p;
    let mut best: Option<f64> = None;
    for (a, b) in segments(poly) {
        let e = b - a;
        let den = d.re * e.im - d.im * e.re;
        if den == 0.0 {
            continue;
        }
        let w = a - p;
        let s = (w.re * e.im - w.im * e.re) / den;
        let u = (w.re * d.im - w.im * d.re) / den;
        if (0.0..=1.0).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&u) {
            best = Some(best.map_or(s, |v: f64| v.min(s)));
        }
    }
    best
}

fn validate(poly: &[C64]) -> Result<(), ModulusError> {
    if poly.len() < 3 || poly.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ModulusError::BadPolyline);
    }
    Ok(())
}

/// Points of `inner` within `tol` of `outer`.
pub fn contacts(outer: &[C64], inner: &[C64], tol: f64) -> Vec<C64> {
    inner.iter().copied().filter(|&z| distance_to(outer, z) <= tol).collect()
}

#[derive(Clone, Copy)]
enum Node {
    Inner,
    Outer,
    Free(usize),
}

/// Dirichlet energy of the discrete harmonic potential (0 on `inner`, 1 on `outer`).
fn grid_energy(outer: &[C64], inner: &[C64], h: f64) -> Result<f64, ModulusError> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in outer {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    let (x0, y0) = (x0 - 2.0 * h, y0 - 2.0 * h);
    let nx = ((x1 + 2.0 * h - x0) / h).ceil() as usize + 1;
    let ny = ((y1 + 2.0 * h - y0) / h).ceil() as usize + 1;
    if nx.saturating_mul(ny) > 60_000_000 {
        return Err(ModulusError::BadStep);
    }
    let pos = |i: usize, j: usize| C64::new(x0 + i as f64 * h, y0 + j as f64 * h);
    let mut nodes = vec![Node::Outer; nx * ny];
    let mut free = 0usize;
    for j in 0..ny {
        let y = y0 + j as f64 * h;
        let xo = row_crossings(outer, y);
        let xi = row_crossings(inner, y);
        let parity = |xs: &[f64], x: f64| xs.iter().take_while(|&&c| c < x).count() % 2 == 1;
        for i in 0..nx {
            let x = x0 + i as f64 * h;
            nodes[j * nx + i] = if !parity(&xo, x) {
                Node::Outer
            } else if parity(&xi, x) {
                Node::Inner
            } else {
                free += 1;
                Node::Free(free - 1)
            };
        }
    }
    if free == 0 {
        return Err(ModulusError::GridTooCoarse { h, gap: 0.0 });
    }
    // Edges between a free node and a fixed node are cut at the boundary crossing.
    let mut diag = vec![0.0; free];
    let mut rhs = vec![0.0; free];
    let mut nbrs: Vec<[usize; 4]> = vec![[usize::MAX; 4]; free];
    let mut cuts: Vec<(usize, f64, f64)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let Node::Free(k) = nodes[j * nx + i] else { continue };
            let dirs: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
            for (slot, (di, dj)) in dirs.iter().enumerate() {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                let nb = nodes[jj as usize * nx + ii as usize];
                match nb {
                    Node::Free(m) => {
                        nbrs[k][slot] = m;
                        diag[k] += 1.0;
                    }
                    Node::Inner | Node::Outer => {
                        let (poly, g) = if matches!(nb, Node::Inner) { (inner, 0.0) } else { (outer, 1.0) };
                        let p = pos(i, j);
                        let q = pos(ii as usize, jj as usize);
                        let s = first_crossing(poly, p, q).unwrap_or(1.0).max(1e-3);
                        let c = 1.0 / s;
                        diag[k] += c;
                        rhs[k] += c * g;
                        cuts.push((k, c, g));
                    }
                }
            }
        }
    }
    let apply = |u: &[f64], out: &mut [f64]| {
        for k in 0..free {
            let mut v = diag[k] * u[k];
            for &m in &nbrs[k] {
                if m != usize::MAX {
                    v -= u[m];
                }
            }
            out[k] = v;
        }
    };
    let u = conjugate_gradient(&apply, &diag, &rhs, 1e-10)?;
    let mut energy = 0.0;
    for k in 0..free {
        // Each free-free edge is visited twice.
        for &m in &nbrs[k] {
            if m != usize::MAX {
                energy += 0.5 * (u[k] - u[m]).powi(2);
            }
        }
    }
    for &(k, c, g) in &cuts {
        energy += c * (u[k] - g).powi(2);
    }
    Ok(energy)
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite operator.
fn conjugate_gradient(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>, ModulusError> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut x: Vec<f64> = b.iter().zip(diag).map(|(b, d)| b / d).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..20 * n.max(100) {
        let rn = dot(&r, &r).sqrt();
        if rn <= rel_tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(ModulusError::NoConvergence(dot(&r, &r).sqrt() / bnorm))
}

/// Modulus of the annulus between two nested closed polylines at grid step `h`.
pub fn modulus_grid(outer: &[C64], inner: &[C64], h: f64) -> Result<AnnulusEstimate, ModulusError> {
    modulus_grid_with(outer, inner, h, 1e-9)
}

pub fn modulus_grid_with(outer: &[C64], inner: &[C64], h: f64, contact_tol: f64) -> Result<AnnulusEstimate, ModulusError> {
    validate(outer)?;
    validate(inner)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(ModulusError::BadStep);
    }
    let touching = contacts(outer, inner, contact_tol.max(0.0));
    if !touching.is_empty() {
        return Ok(AnnulusEstimate {
            modulus: 0.0,
            method: ModulusMethod::GridEnergy,
            grid_h: h,
            error_bound: 0.0,
            degenerate: true,
            contact_points: touching,
        });
    }
    if inner.iter().any(|&z| !inside(outer, z)) {
        return Err(ModulusError::NotNested);
    }
    let gap = inner.iter().map(|&z| distance_to(outer, z)).fold(f64::INFINITY, f64::min);
    if gap < 2.0 * h {
        return Err(ModulusError::GridTooCoarse { h, gap });
    }
    let fine = 1.0 / grid_energy(outer, inner, h)?;
    let error_bound = if gap >= 4.0 * h {
        (fine - 1.0 / grid_energy(outer, inner, 2.0 * h)?).abs()
    } else {
        fine
    };
    Ok(AnnulusEstimate {
        modulus: fine,
        method: ModulusMethod::GridEnergy,
        grid_h: h,
        error_bound,
        degenerate: false,
        contact_points: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrotzschReport {
    pub sum: f64,
    pub enclosing: f64,
    /// Allowed excess: relative tolerance plus the estimators' error bars.
    pub tolerance: f64,
    /// The sum exceeds the enclosing modulus beyond tolerance; an estimator fault.
    pub estimator_violation: bool,
    pub degenerate_terms: usize,
}

/// Superadditivity of moduli for disjoint essential annuli inside `enclosing`.
pub fn grotzsch_check(nest: &[AnnulusEstimate], enclosing: &AnnulusEstimate, rel_tol: f64) -> GrotzschReport {
    let sum: f64 = nest.iter().map(|a| a.modulus).sum();
    let bars: f64 = nest.iter().map(|a| a.error_bound).sum::<f64>() + enclosing.error_bound;
    let tolerance = rel_tol * enclosing.modulus + bars;
    GrotzschReport {
        sum,
        enclosing: enclosing.modulus,
        tolerance,
        estimator_violation: sum > enclosing.modulus + tolerance,
        degenerate_terms: nest.iter().filter(|a| a.degenerate).count(),
    }
}

/// Annuli and degrees for one application of the covering dichotomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlInput {
    pub u_minus_a: AnnulusEstimate,
    pub bp_minus_b: AnnulusEstimate,
    pub v_minus_b: AnnulusEstimate,
    pub degree_total: u64,
    pub d_sub: u64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// `mod(B'∖B) >= η mod(U∖A)`.
    pub hypothesis: bool,
    /// `η / (2 d²) mod(V∖B)`.
    pub threshold: f64,
    /// `mod(U∖A) > threshold`; the other branch of the dichotomy has no explicit constant.
    pub quantitative_branch: bool,
    pub degenerate: bool,
    pub note: String,
}

pub fn kl_check(input: &KlInput) -> KlReport {
    let degenerate = input.u_minus_a.degenerate || input.bp_minus_b.degenerate || input.v_minus_b.degenerate;
    let hypothesis = !input.bp_minus_b.degenerate && input.bp_minus_b.modulus >= input.eta * input.u_minus_a.modulus;
    let d = input.d_sub.max(1) as f64;
    let threshold = input.eta / (2.0 * d * d) * input.v_minus_b.modulus;
    let quantitative_branch = input.u_minus_a.modulus > threshold;
    let note = if !hypothesis {
        "hypothesis fails; conclusion not applicable".to_string()
    } else if quantitative_branch {
        "hypothesis holds; quantitative branch holds".to_string()
    } else {
        "hypothesis holds; quantitative branch fails, only the unquantified branch can apply".to_string()
    };
    KlReport { hypothesis, threshold, quantitative_branch, degenerate, note }
}

/// Ratio of the largest to the smallest distance from `z` to the boundary.
pub fn shape(boundary: &[C64], z: C64) -> Result<f64, ModulusError> {
    validate(boundary)?;
    if !inside(boundary, z) {
        return Err(ModulusError::NotInterior);
    }
    let min = distance_to(boundary, z);
    if min <= 0.0 {
        return Err(ModulusError::NotInterior);
    }
    let max = boundary.iter().map(|&w| (w - z).norm()).fold(0.0, f64::max);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: C64 = C64::new(0.0, 0.0);

    #[test]
    fn round_formula() {
        assert!((modulus_round(std::f64::consts::E).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((modulus_round(1.0 + 1e-6).unwrap() - 1e-6 / (2.0 * PI)).abs() < 1e-12);
        assert!(modulus_round(1.0).is_err());
    }

    #[test]
    fn grid_calibration_r2() {
        let est = modulus_grid(&circle(O, 2.0, 2048), &circle(O, 1.0, 1024), 0.01).unwrap();
        let exact = modulus_round(2.0).unwrap();
        assert!((est.modulus - exact).abs() < 0.03 * exact, "{} vs {exact}", est.modulus);
        assert!(est.error_bound < 0.03 * exact);
    }

    #[test]
    fn square_between_round_bounds() {
        let est = modulus_grid(&square(O, 4.0, 512), &circle(O, 1.0, 1024), 0.01).unwrap();
        let lo = modulus_round(2.0).unwrap();
        let hi = modulus_round(2.0 * 2f64.sqrt()).unwrap();
        assert!(est.modulus > lo && est.modulus < hi, "{}", est.modulus);
    }

    #[test]
    fn touching_is_degenerate() {
        let inner = circle(C64::new(1.0, 0.0), 1.0, 256);
        let est = modulus_grid(&circle(O, 2.0, 256), &inner, 0.02).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.modulus, 0.0);
        assert!(!est.contact_points.is_empty());
    }

    #[test]
    fn shapes() {
        let disk = circle(O, 1.0, 4096);
        assert!((shape(&disk, O).unwrap() - 1.0).abs() < 1e-5);
        assert!((shape(&disk, C64::new(0.5, 0.0)).unwrap() - 3.0).abs() < 1e-4);
        let ellipse: Vec<C64> = disk.iter().map(|z| C64::new(2.0 * z.re, z.im)).collect();
        assert!((shape(&ellipse, O).unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn kl_round_configuration() {
        let r = |x: f64| AnnulusEstimate::round(x).unwrap();
        let rep = kl_check(&KlInput { u_minus_a: r(3.0), bp_minus_b: r(3.0), v_minus_b: r(4.0), degree_total: 1, d_sub: 1, eta: 1.0 });
        assert!(rep.hypothesis && rep.quantitative_branch);
        let mut deg = r(2.0);
        deg.degenerate = true;
        deg.modulus = 0.0;
        let rep = kl_check(&KlInput { u_minus_a: r(3.0), bp_minus_b: deg, v_minus_b: r(4.0), degree_total: 1, d_sub: 1, eta: 1.0 });
        assert!(!rep.hypothesis);
    }
}
