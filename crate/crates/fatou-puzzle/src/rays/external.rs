use super::{
    cycle_rotation, dyadic_grid, newton_periodic, pullback_level, Landing, RayControl, RayError,
    RayKind, RayLabel, RayPath,
};
use crate::angles::RationalAngle;
use crate::poly_core::{Polynomial, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Newton solve of `f(w) = target`, returning the root and its relative residual.
pub(crate) fn newton_solve(
    f: impl Fn(C64) -> (C64, C64),
    target: C64,
    guess: C64,
    ctrl: &RayControl,
) -> Option<(C64, f64)> {
    let mut w = guess;
    let tn = target.norm().max(1e-300);
    for _ in 0..ctrl.max_newton {
        let (v, dv) = f(w);
        if dv.norm() == 0.0 || !v.norm().is_finite() {
            return None;
        }
        let step = (v - target) / dv;
        w -= step;
        if !w.norm().is_finite() {
            return None;
        }
        if step.norm() <= ctrl.newton_tol.max(1e-15) * 8.0 * (w.norm() + 1e-300) {
            let (v, _) = f(w);
            return Some((w, (v - target).norm() / tn));
        }
    }
    let (v, _) = f(w);
    let res = (v - target).norm() / tn;
    (res < 1e-11).then_some((w, res))
}

/// Dyadic descent along `grid` with geometric substeps and step halving.
/// `solve(t, guess)` returns the ray point at potential `t` and its residual;
/// `near_critical(t, z)` flags points too close to a precritical point.
pub(crate) fn continue_along(
    grid: &[f64],
    ctrl: &RayControl,
    seed: C64,
    solve: impl Fn(f64, C64) -> Option<(C64, f64)>,
    near_critical: impl Fn(f64, C64) -> bool,
) -> Result<(Vec<(f64, C64)>, f64), RayError> {
    let t0 = grid[0];
    let (mut cur, r0) = solve(t0, seed).ok_or(RayError::ContinuationFailure { last_t: t0 })?;
    let mut samples = vec![(t0, cur)];
    let mut max_res = r0;
    let sign = t0.signum();
    let mut l = t0.abs().ln();
    let mut rate: Option<f64> = None;
    for &t_next in &grid[1..] {
        let l_target = t_next.abs().ln();
        let base_h = (l - l_target) / ctrl.substeps as f64;
        let mut h = base_h;
        let mut halvings = 0usize;
        while l > l_target + 1e-15 {
            let l_try = (l - h).max(l_target);
            let t_try = if l_try <= l_target { t_next } else { sign * l_try.exp() };
            let ok = solve(t_try, cur).and_then(|(z, r)| {
                let jump = (z - cur).norm() / (l - l_try);
                let fine = match rate {
                    Some(prev) => (z - cur).norm() <= 4.0 * prev * (l - l_try) + 1e-9 * (1.0 + cur.norm()),
                    None => true,
                };
                fine.then_some((z, r, jump))
            });
            match ok {
                Some((z, r, jump)) => {
                    if near_critical(t_try, z) {
                        return Err(RayError::NearCritical { t: t_try });
                    }
                    cur = z;
                    max_res = max_res.max(r);
                    rate = Some(jump);
                    l = l_try;
                    h = (h * 2.0).min(base_h);
                }
                None => {
                    halvings += 1;
                    if halvings > ctrl.max_halvings {
                        return Err(RayError::ContinuationFailure { last_t: sign * l.exp() });
                    }
                    h *= 0.5;
                    // A rate estimate from a much coarser step may be stale.
                    if halvings % 6 == 0 {
                        rate = rate.map(|r| r * 4.0);
                    }
                }
            }
        }
        samples.push((t_next, cur));
    }
    Ok((samples, max_res))
}

/// Normalized-coordinate solver for a single external ray.
struct ExternalSolver<'a> {
    poly: &'a Polynomial,
    theta: &'a RationalAngle,
    ctrl: &'a RayControl,
    crit_norm: Vec<C64>,
}

impl<'a> ExternalSolver<'a> {
    fn new(poly: &'a Polynomial, theta: &'a RationalAngle, ctrl: &'a RayControl) -> Self {
        let crit_norm = poly.criticals().iter().map(|c| poly.to_normalized(c.point)).collect();
        Self { poly, theta, ctrl, crit_norm }
    }

    fn level(&self, t: f64) -> u32 {
        pullback_level(self.poly.degree() as f64, t, self.ctrl.big_potential)
    }

    fn target(&self, t: f64, m: u32) -> C64 {
        let dd = self.poly.degree() as u32;
        let phase = self.theta.times_base_pow(dd, m).to_f64();
        let modulus = ((dd as f64).powi(m as i32) * t).exp();
        phi_inverse_far(self.poly, C64::from_polar(modulus, 2.0 * PI * phase))
    }

    fn iterate(&self, w: C64, m: u32) -> (C64, C64) {
        let mut v = w;
        let mut dv = C64::new(1.0, 0.0);
        for _ in 0..m {
            let (a, da) = self.poly.eval_norm_deriv(v);
            dv *= da;
            v = a;
        }
        (v, dv)
    }

    fn solve(&self, t: f64, guess: C64) -> Option<(C64, f64)> {
        let m = self.level(t);
        let target = self.target(t, m);
        newton_solve(|w| self.iterate(w, m), target, guess, self.ctrl)
    }

    fn near_critical(&self, t: f64, w: C64) -> bool {
        let m = self.level(t);
        let mut v = w;
        for _ in 0..m {
            if self
                .crit_norm
                .iter()
                .any(|c| (v - c).norm() < self.ctrl.near_critical_tol * (1.0 + c.norm()))
            {
                return true;
            }
            v = self.poly.eval_norm(v);
        }
        false
    }
}

/// `Y` with `φ(Y) = W` for `|W|` large, by fixed-point correction of `W`.
fn phi_inverse_far(poly: &Polynomial, w: C64) -> C64 {
    let dd = poly.degree() as f64;
    let s = |y: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut f = 1.0 / dd;
        let mut y = y;
        for _ in 0..64 {
            if y.norm() > 1e30 {
                break;
            }
            let q = poly.eval_norm(y);
            let mut ratio = q;
            for _ in 0..poly.degree() {
                ratio /= y;
            }
            let term = ratio.ln();
            acc += term * f;
            if term.norm() * f < 1e-18 {
                break;
            }
            y = q;
            f /= dd;
        }
        acc
    };
    let mut y = w;
    for _ in 0..6 {
        y = w * (-s(y)).exp();
    }
    y
}

/// Trace `R(θ)` from the default seed potential down to `t_min`.
pub fn trace_external_ray(
    poly: &Polynomial,
    theta: &RationalAngle,
    t_min: f64,
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    trace_external_ray_from(poly, theta, external_seed(poly, ctrl), t_min, ctrl)
}

/// Seed potential: the control value, raised for polynomials with large coefficients.
pub fn external_seed(poly: &Polynomial, ctrl: &RayControl) -> f64 {
    let r: f64 = poly.normalized_coeffs().iter().map(|c| c.norm()).sum();
    ctrl.t_seed.max(r.ln() + 6.0)
}

/// Trace `R(θ)` on the grid `t_seed * 2^{-j}` down to `t_min`.
pub fn trace_external_ray_from(
    poly: &Polynomial,
    theta: &RationalAngle,
    t_seed: f64,
    t_min: f64,
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    if !(t_min > 0.0) || !(t_seed >= t_min) {
        return Err(RayError::BadPotential("0 < t_min <= t_seed"));
    }
    trace_external_ray_on(poly, theta, &dyadic_grid(t_seed, t_min), ctrl)
}

/// Trace `R(θ)` through the decreasing potentials of `grid`.
pub fn trace_external_ray_on(
    poly: &Polynomial,
    theta: &RationalAngle,
    grid: &[f64],
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RayError::BadPotential("a positive decreasing grid"));
    }
    let solver = ExternalSolver::new(poly, theta, ctrl);
    let t_seed = grid[0];
    let seed = C64::from_polar(t_seed.exp(), 2.0 * PI * theta.to_f64());
    let (samples, max_res) = continue_along(
        grid,
        ctrl,
        seed,
        |t, g| solver.solve(t, g),
        |t, w| solver.near_critical(t, w),
    )?;
    Ok(RayPath {
        kind: RayKind::External,
        angle: RayLabel::Angle(theta.clone()),
        samples: samples.into_iter().map(|(t, w)| (t, poly.to_user(w))).collect(),
        landed: false,
        landing_point: None,
        max_residual: max_res,
    })
}

/// Point `R(θ, t)` in user coordinates.
pub fn external_ray_point(
    poly: &Polynomial,
    theta: &RationalAngle,
    t: f64,
    ctrl: &RayControl,
) -> Result<C64, RayError> {
    let path = trace_external_ray(poly, theta, t, ctrl)?;
    Ok(path.last().expect("nonempty").1)
}

/// Maximum of `|f(R(θ, t)) - R(Dθ, Dt)|` over potentials present in both paths.
pub fn equivariance_residual(poly: &Polynomial, ray: &RayPath, image_ray: &RayPath) -> Option<f64> {
    let dd = poly.degree() as f64;
    let mut worst: Option<f64> = None;
    for &(t, z) in &ray.samples {
        if let Some(w) = image_ray.at(dd * t) {
            let r = (poly.eval(z) - w).norm();
            worst = Some(worst.map_or(r, |x: f64| x.max(r)));
        }
    }
    worst
}

/// Land a periodic external ray: continuation to `ctrl.landing_t`, then Newton
/// on `f^k(z) - z` from the last samples.
pub fn land_external_ray(
    poly: &Polynomial,
    theta: &RationalAngle,
    ctrl: &RayControl,
) -> Result<(RayPath, Landing), RayError> {
    let dd = poly.degree() as u32;
    let (l, k) = theta.orbit_type(dd);
    if l != 0 {
        return Err(RayError::NotPeriodic(theta.to_string()));
    }
    let mut path = trace_external_ray(poly, theta, ctrl.landing_t, ctrl)?;
    let landing = land_from_samples(poly, poly, &path.samples, k as usize, ctrl)?;
    let rotation = cycle_rotation(theta, dd);
    path.landed = true;
    path.landing_point = Some(landing.0);
    let (point, last_t) = landing;
    let point_period = poly.period_of(point, k as usize, 1e-9).unwrap_or(k as usize);
    let (_, multiplier) = poly.iterate_deriv(point, point_period);
    let (_, derivative) = poly.eval_deriv(point);
    Ok((path, Landing { point, point_period, multiplier, derivative, rotation, last_t }))
}

/// Newton on `map^k(z) - z` from each of the last three samples; the limits must agree.
pub(crate) fn land_from_samples(
    _poly: &Polynomial,
    map: &Polynomial,
    samples: &[(f64, C64)],
    k: usize,
    ctrl: &RayControl,
) -> Result<(C64, f64), RayError> {
    let n = samples.len();
    let tail = &samples[n.saturating_sub(3)..];
    let mut limits = Vec::new();
    for &(_, z) in tail.iter().rev() {
        if let Some(p) = newton_periodic(map, z, k, 400) {
            limits.push(p);
        }
    }
    let first = *limits.first().ok_or(RayError::NoConvergence)?;
    let spread = limits.iter().map(|p| (p - first).norm()).fold(0.0, f64::max);
    if spread > ctrl.tol_cluster {
        return Err(RayError::AmbiguousLanding { spread });
    }
    // The limit must be near the terminal sample, not a far-away cycle.
    let last = samples[n - 1].1;
    let reach = if n >= 2 { (samples[n - 2].1 - last).norm() } else { 1.0 };
    if (first - last).norm() > 50.0 * reach.max(1e-3) {
        return Err(RayError::NoConvergence);
    }
    Ok((first, samples[n - 1].0))
}

/// Closed polyline `E(v) = {R(j/n, v)}` on the external side.
pub fn external_equipotential(
    poly: &Polynomial,
    v: f64,
    n_samples: usize,
    ctrl: &RayControl,
) -> Result<Vec<C64>, RayError> {
    (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let a = RationalAngle::from_u64(j as u64, n_samples as u64).expect("n > 0");
            external_ray_point(poly, &a, v, ctrl)
        })
        .collect()
}
