use super::external::{continue_along, land_external_ray, land_from_samples, newton_solve};
use super::{cycle_rotation, dyadic_grid, pullback_level, Landing, RayControl, RayError, RayKind, RayLabel, RayPath};
use crate::angles::RationalAngle;
use crate::poly_core::{
    bottcher_internal_chart, PolyError, Polynomial, PotentialTolerances, SuperattractingChart, C64,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A superattracting cycle point `c0` of period `p`, seen through the first
/// return map `g = f^p` and its local chart at `c0`.
#[derive(Debug, Clone)]
pub struct InternalBasin {
    pub c0: C64,
    pub period: usize,
    pub map: Polynomial,
    pub chart: SuperattractingChart,
}

impl InternalBasin {
    pub fn new(poly: &Polynomial, c0: C64) -> Result<Self, RayError> {
        let period = poly
            .period_of(c0, 12, 1e-9)
            .ok_or_else(|| PolyError::NotSuperattracting(format!("{c0}")))?;
        let map = if period == 1 { poly.clone() } else { poly.iterate_poly(period)? };
        let chart = SuperattractingChart::new(&map, c0)?;
        Ok(Self { c0: chart.c0, period, map, chart })
    }

    /// Local degree `d` of the return map at `c0`.
    pub fn local_degree(&self) -> u32 {
        self.chart.d
    }

    /// Internal Böttcher coordinate of `z`.
    pub fn psi(&self, z: C64) -> Result<C64, PolyError> {
        bottcher_internal_chart(&self.chart, z, &PotentialTolerances::default())
    }

    /// Internal potential `log|ψ(z)|` (negative inside the basin).
    pub fn potential(&self, z: C64) -> Result<f64, PolyError> {
        Ok(self.psi(z)?.norm().ln())
    }
}

struct InternalSolver<'a> {
    basin: &'a InternalBasin,
    theta: &'a RationalAngle,
    ctrl: &'a RayControl,
    crit_local: Vec<C64>,
}

impl<'a> InternalSolver<'a> {
    fn new(basin: &'a InternalBasin, theta: &'a RationalAngle, ctrl: &'a RayControl) -> Self {
        let crit_local = basin
            .map
            .criticals()
            .iter()
            .filter(|c| (c.point - basin.c0).norm() > 1e-9)
            .map(|c| basin.chart.to_local(c.point))
            .collect();
        Self { basin, theta, ctrl, crit_local }
    }

    fn level(&self, t: f64) -> u32 {
        pullback_level(self.basin.local_degree() as f64, t, self.ctrl.big_potential)
    }

    fn target(&self, t: f64, m: u32) -> C64 {
        let d = self.basin.local_degree();
        let phase = self.theta.times_base_pow(d, m).to_f64();
        let modulus = ((d as f64).powi(m as i32) * t).exp();
        psi_inverse_near(&self.basin.chart, C64::from_polar(modulus, 2.0 * PI * phase))
    }

    fn iterate(&self, x: C64, m: u32) -> (C64, C64) {
        let mut v = x;
        let mut dv = C64::new(1.0, 0.0);
        for _ in 0..m {
            let (a, da) = self.basin.chart.step_deriv(v);
            dv *= da;
            v = a;
        }
        (v, dv)
    }

    fn solve(&self, t: f64, guess: C64) -> Option<(C64, f64)> {
        let m = self.level(t);
        let target = self.target(t, m);
        newton_solve(|x| self.iterate(x, m), target, guess, self.ctrl)
    }

    fn near_critical(&self, t: f64, x: C64) -> bool {
        let m = self.level(t);
        let mut v = x;
        for _ in 0..m {
            if self.crit_local.iter().any(|c| (v - c).norm() < self.ctrl.near_critical_tol * (1.0 + c.norm())) {
                return true;
            }
            v = self.basin.chart.step(v);
        }
        false
    }
}

/// `X` with `ψ(X) = Y` for `|Y|` small.
fn psi_inverse_near(chart: &SuperattractingChart, y: C64) -> C64 {
    let d = chart.d as f64;
    let s = |x: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut f = 1.0 / d;
        let mut x = x;
        for _ in 0..64 {
            if x.norm() < 1e-300 {
                break;
            }
            let term = chart.p_eval(x).ln();
            acc += term * f;
            if term.norm() * f < 1e-18 {
                break;
            }
            x = chart.step(x);
            f /= d;
        }
        acc
    };
    let mut x = y;
    for _ in 0..6 {
        x = y * (-s(x)).exp();
    }
    x
}

/// Trace the internal ray `R_U(θ)` from the seed potential up to `t_max < 0`.
pub fn trace_internal_ray(
    poly: &Polynomial,
    c0: C64,
    theta: &RationalAngle,
    t_max: f64,
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    let basin = InternalBasin::new(poly, c0)?;
    trace_internal_ray_in(&basin, theta, t_max, ctrl)
}

pub fn trace_internal_ray_in(
    basin: &InternalBasin,
    theta: &RationalAngle,
    t_max: f64,
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    if !(t_max < 0.0) {
        return Err(RayError::BadPotential("t_max < 0"));
    }
    if t_max > -1e-14 {
        return Err(RayError::BasinBoundaryTooClose);
    }
    let seed_t = ctrl.t_seed_internal.min(t_max);
    trace_internal_ray_on(basin, theta, &dyadic_grid(seed_t, t_max), ctrl)
}

/// Trace `R_U(θ)` through the increasing negative potentials of `grid`.
pub fn trace_internal_ray_on(
    basin: &InternalBasin,
    theta: &RationalAngle,
    grid: &[f64],
    ctrl: &RayControl,
) -> Result<RayPath, RayError> {
    if grid.is_empty() || grid.iter().any(|t| !(*t < 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RayError::BadPotential("a negative increasing grid"));
    }
    let solver = InternalSolver::new(basin, theta, ctrl);
    let seed_t = grid[0];
    let seed = C64::from_polar(seed_t.exp(), 2.0 * PI * theta.to_f64());
    let (samples, max_res) = continue_along(
        grid,
        ctrl,
        seed,
        |t, g| solver.solve(t, g),
        |t, x| solver.near_critical(t, x),
    )?;
    Ok(RayPath {
        kind: RayKind::Internal,
        angle: RayLabel::Angle(theta.clone()),
        samples: samples.into_iter().map(|(t, x)| (t, basin.chart.to_user(x))).collect(),
        landed: false,
        landing_point: None,
        max_residual: max_res,
    })
}

/// Point `R_U(θ, t)` in user coordinates.
pub fn internal_ray_point(
    basin: &InternalBasin,
    theta: &RationalAngle,
    t: f64,
    ctrl: &RayControl,
) -> Result<C64, RayError> {
    Ok(trace_internal_ray_in(basin, theta, t, ctrl)?.last().expect("nonempty").1)
}

/// Land a periodic internal ray (angle periodic under multiplication by `d`).
pub fn land_internal_ray(
    basin: &InternalBasin,
    poly: &Polynomial,
    theta: &RationalAngle,
    ctrl: &RayControl,
) -> Result<(RayPath, Landing), RayError> {
    let d = basin.local_degree();
    let (l, k) = theta.orbit_type(d);
    if l != 0 {
        return Err(RayError::NotPeriodic(theta.to_string()));
    }
    let mut path = trace_internal_ray_in(basin, theta, -ctrl.landing_t, ctrl)?;
    let (point, last_t) = land_from_samples(poly, &basin.map, &path.samples, k as usize, ctrl)?;
    path.landed = true;
    path.landing_point = Some(point);
    let full = basin.period * k as usize;
    let point_period = poly.period_of(point, full, 1e-9).unwrap_or(full);
    let (_, multiplier) = poly.iterate_deriv(point, point_period);
    let (_, derivative) = poly.eval_deriv(point);
    let rotation = cycle_rotation(theta, d);
    Ok((path, Landing { point, point_period, multiplier, derivative, rotation, last_t }))
}

/// Closed polyline `E_U(v) = {R_U(j/n, -v)}`.
pub fn internal_equipotential(
    basin: &InternalBasin,
    v: f64,
    n_samples: usize,
    ctrl: &RayControl,
) -> Result<Vec<C64>, RayError> {
    if !(v > 0.0) {
        return Err(RayError::BadPotential("v > 0"));
    }
    (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let a = RationalAngle::from_u64(j as u64, n_samples as u64).expect("n > 0");
            internal_ray_point(basin, &a, -v, ctrl)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    External,
    Internal,
}

/// Equipotential of level `v > 0` on either side. The internal side needs `c0`.
pub fn equipotential(
    poly: &Polynomial,
    v: f64,
    n_samples: usize,
    side: Side,
    c0: Option<C64>,
    ctrl: &RayControl,
) -> Result<Vec<C64>, RayError> {
    match side {
        Side::External => super::external_equipotential(poly, v, n_samples, ctrl),
        Side::Internal => {
            let c0 = c0.ok_or(RayError::BadPotential("internal side requires c0"))?;
            let basin = InternalBasin::new(poly, c0)?;
            internal_equipotential(&basin, v, n_samples, ctrl)
        }
    }
}

/// Per-candidate outcome in a co-landing search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostic {
    pub angle: RationalAngle,
    pub landing_point: Option<C64>,
    pub distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColandingReport {
    pub internal_angle: RationalAngle,
    pub landing_point: C64,
    pub angles: Vec<RationalAngle>,
    pub diagnostics: Vec<CandidateDiagnostic>,
}

/// All external angles `j / (D^q - 1)` with `q <= period_bound`.
pub fn periodic_angles(base: u32, period_bound: u32) -> Vec<RationalAngle> {
    let mut out: Vec<RationalAngle> = Vec::new();
    for q in 1..=period_bound {
        let den = (base as u64).pow(q) - 1;
        for j in 0..den {
            out.push(RationalAngle::from_u64(j, den).expect("den > 0"));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// External angles of period at most `period_bound` whose rays land where the
/// internal ray of angle `t` lands.
pub fn colanding_report(
    poly: &Polynomial,
    c0: C64,
    t: &RationalAngle,
    period_bound: u32,
    ctrl: &RayControl,
) -> Result<ColandingReport, RayError> {
    let basin = InternalBasin::new(poly, c0)?;
    let (_, internal) = land_internal_ray(&basin, poly, t, ctrl)?;
    let target = internal.point;
    let candidates = periodic_angles(poly.degree() as u32, period_bound);
    let diagnostics: Vec<CandidateDiagnostic> = candidates
        .par_iter()
        .map(|a| match land_external_ray(poly, a, ctrl) {
            Ok((_, l)) => CandidateDiagnostic {
                angle: a.clone(),
                landing_point: Some(l.point),
                distance: Some((l.point - target).norm()),
                error: None,
            },
            Err(e) => CandidateDiagnostic { angle: a.clone(), landing_point: None, distance: None, error: Some(e.to_string()) },
        })
        .collect();
    let tol = ctrl.tol_cluster * (1.0 + target.norm());
    let angles: Vec<RationalAngle> = diagnostics
        .iter()
        .filter(|d| d.distance.map_or(false, |x| x < tol))
        .map(|d| d.angle.clone())
        .collect();
    let report = ColandingReport { internal_angle: t.clone(), landing_point: target, angles, diagnostics };
    if report.angles.is_empty() {
        return Err(RayError::EmptyResult);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(p: u64, q: u64) -> RationalAngle {
        RationalAngle::from_u64(p, q).unwrap()
    }

    #[test]
    fn z2_internal_rays_are_radii() {
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let ctrl = RayControl::default();
        let r = trace_internal_ray(&z2, C64::new(0.0, 0.0), &a(1, 3), -0.01, &ctrl).unwrap();
        for &(t, z) in &r.samples {
            assert!((z - C64::from_polar(t.exp(), 2.0 * PI / 3.0)).norm() < 1e-12);
        }
        let e = equipotential(&z2, 0.5, 24, Side::Internal, Some(C64::new(0.0, 0.0)), &ctrl).unwrap();
        assert!(e.iter().all(|z| (z.norm() - (-0.5f64).exp()).abs() < 1e-12));
    }

    #[test]
    fn cubic_internal_ray_lands_at_fixed_point() {
        let p = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let basin = InternalBasin::new(&p, C64::new(0.0, 0.0)).unwrap();
        let (_, l) = land_internal_ray(&basin, &p, &a(0, 1), &RayControl::default()).unwrap();
        assert!((l.point - C64::new((5f64.sqrt() - 1.0) / 2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn colanding_examples() {
        let ctrl = RayControl::default();
        let o = C64::new(0.0, 0.0);
        let z2 = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(colanding_report(&z2, o, &a(0, 1), 1, &ctrl).unwrap().angles, vec![a(0, 1)]);
        assert_eq!(colanding_report(&z2, o, &a(1, 3), 2, &ctrl).unwrap().angles, vec![a(1, 3)]);
        let basilica = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
        let r = colanding_report(&basilica, o, &a(0, 1), 2, &ctrl).unwrap();
        assert_eq!(r.angles, vec![a(1, 3), a(2, 3)]);
    }
}
