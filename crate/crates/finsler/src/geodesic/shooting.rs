//! Exponential map and forward distances by shooting.
//!
//! `exp_x(w)` is the endpoint at parameter 1 of the geodesic with initial
//! velocity `w`; its Jacobian with respect to `w` is integrated alongside as
//! a variational system, giving exact Newton steps for the boundary-value
//! problem `exp_p(w) = q`. The forward distance is the minimum of `F(p, w)`
//! over converged shots of a multi-start.

use crate::error::{FinslerError, Result};
use crate::metric::{guard_radius, MetricModel, Tangent};
use crate::numerics;
use crate::spray::Tower;

use super::ode::{self, OdeOptions, OdeRhs};
use super::{chart_guard_state, GeodesicPath, GeodesicRhs};

/// Geodesic plus its linearization with respect to the initial velocity:
/// state `(x, y, Jx, Jy)` with `Jx' = Jy`, `Jy' = −2(∂G/∂x · Jx + N · Jy)`.
struct VariationalRhs<'m> {
    model: &'m MetricModel,
}

impl OdeRhs for VariationalRhs<'_> {
    fn dim(&self) -> usize {
        let n = self.model.dim();
        2 * n + 2 * n * n
    }
    fn eval(&self, _t: f64, s: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.model.dim();
        let (x, rest) = s.split_at(n);
        let (y, jac) = rest.split_at(n);
        let (jx, jy) = jac.split_at(n * n);
        let d = crate::spray::spray_first_derivatives(self.model, x, y)?;
        out[..n].copy_from_slice(y);
        for i in 0..n {
            out[n + i] = -2.0 * d.g_spray[i];
        }
        // Jx' = Jy (column-major over initial-velocity directions).
        for c in 0..n {
            for i in 0..n {
                out[2 * n + i * n + c] = jy[i * n + c];
            }
        }
        for c in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += d.gx[i * n + l] * jx[l * n + c] + d.n_conn[i * n + l] * jy[l * n + c];
                }
                out[2 * n + n * n + i * n + c] = -2.0 * acc;
            }
        }
        Ok(())
    }
}

/// Endpoint of the geodesic from `x0` with initial velocity `w` at parameter
/// 1. Velocities below the guard radius map to `x0` itself.
pub fn exp_map(model: &MetricModel, x0: &[f64], w: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    if numerics::norm_inf(w) < guard_radius(w) {
        return Ok(x0.to_vec());
    }
    let t0 = Tangent::new(model, x0.to_vec(), w.to_vec())?;
    let path = super::integrate_geodesic(model, &t0, 1.0, opts)?;
    if path.truncated {
        return Err(FinslerError::OutsideChart {
            x: path.position_at(path.t_end()),
        });
    }
    Ok(path.position_at(1.0))
}

/// Endpoint together with `∂ exp / ∂ w` (row-major `n × n`).
fn exp_with_jacobian(
    model: &MetricModel,
    x0: &[f64],
    w: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    if numerics::norm_inf(w) < guard_radius(w) {
        // Degenerate limit: exp ≈ identity in w.
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        return Ok((x0.to_vec(), eye));
    }
    let mut state = vec![0.0; 2 * n + 2 * n * n];
    state[..n].copy_from_slice(x0);
    state[n..2 * n].copy_from_slice(w);
    for c in 0..n {
        state[2 * n + n * n + c * n + c] = 1.0;
    }
    let rhs = VariationalRhs { model };
    let guard = chart_guard_state(model, n);
    let sol = ode::integrate(&rhs, 0.0, &state, 1.0, opts, Some(&guard))?;
    if sol.truncated {
        return Err(FinslerError::OutsideChart {
            x: sol.y_end[..n].to_vec(),
        });
    }
    let end = &sol.y_end;
    let mut jac = vec![0.0; n * n];
    for i in 0..n {
        for c in 0..n {
            jac[i * n + c] = end[2 * n + i * n + c];
        }
    }
    Ok((end[..n].to_vec(), jac))
}

/// Geodesic flow `Φ_s(z, w)` to time `s` (of either sign) together with the
/// directional derivative of the endpoint along a joint perturbation
/// `(dz, dw)` of base point and initial velocity, integrated as one
/// linearized trajectory. Negative times extend the same ODE solution
/// backwards; for non-reversible metrics this is *not* `exp_z(−|s|w)`.
pub fn flow_with_directional_sensitivity(
    model: &MetricModel,
    z: &[f64],
    w: &[f64],
    dz: &[f64],
    dw: &[f64],
    time: f64,
    opts: &OdeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    if time == 0.0 {
        return Ok((z.to_vec(), dz.to_vec()));
    }
    if numerics::norm_inf(w) < guard_radius(w) {
        // Degenerate limit: endpoint = z, sensitivity = dz + time·dw.
        return Ok((z.to_vec(), numerics::axpy(dz, time, dw)));
    }
    struct DirRhs<'m> {
        model: &'m MetricModel,
    }
    impl OdeRhs for DirRhs<'_> {
        fn dim(&self) -> usize {
            4 * self.model.dim()
        }
        fn eval(&self, _t: f64, s: &[f64], out: &mut [f64]) -> Result<()> {
            let n = self.model.dim();
            let (x, rest) = s.split_at(n);
            let (y, lin) = rest.split_at(n);
            let (dx, dy) = lin.split_at(n);
            let d = crate::spray::spray_first_derivatives(self.model, x, y)?;
            out[..n].copy_from_slice(y);
            for i in 0..n {
                out[n + i] = -2.0 * d.g_spray[i];
                let mut acc = 0.0;
                for l in 0..n {
                    acc += d.gx[i * n + l] * dx[l] + d.n_conn[i * n + l] * dy[l];
                }
                out[2 * n + i] = dy[i];
                out[3 * n + i] = -2.0 * acc;
            }
            Ok(())
        }
    }
    let mut state = vec![0.0; 4 * n];
    state[..n].copy_from_slice(z);
    state[n..2 * n].copy_from_slice(w);
    state[2 * n..3 * n].copy_from_slice(dz);
    state[3 * n..].copy_from_slice(dw);
    let rhs = DirRhs { model };
    let guard = chart_guard_state(model, n);
    let sol = ode::integrate(&rhs, 0.0, &state, time, opts, Some(&guard))?;
    if sol.truncated {
        return Err(FinslerError::OutsideChart {
            x: sol.y_end[..n].to_vec(),
        });
    }
    Ok((
        sol.y_end[..n].to_vec(),
        sol.y_end[2 * n..3 * n].to_vec(),
    ))
}

/// A converged shot of the boundary-value problem `exp_p(w) = q`.
#[derive(Debug, Clone)]
pub struct Shot {
    pub initial_velocity: Vec<f64>,
    pub length: f64,
    pub residual: f64,
    pub newton_iterations: usize,
}

/// Damped Newton from an explicit initial guess `w0`. Convergence when
/// `|exp_p(w) − q| ≤ tol`.
pub fn shoot_to(
    model: &MetricModel,
    p: &[f64],
    q: &[f64],
    w0: &[f64],
    tol: f64,
    opts: &OdeOptions,
) -> Result<Shot> {
    let n = model.dim();
    let mut w = w0.to_vec();
    let mut best_res = f64::INFINITY;
    let mut jac_cache: Option<Vec<f64>> = None;
    let mut last_rn = f64::INFINITY;
    for iter in 0..60 {
        // The Jacobian integration costs several position solves; keep the
        // previous one while the residual contracts well.
        let reuse = jac_cache.is_some() && last_rn.is_finite();
        let (pos, jac) = if reuse {
            match exp_map(model, p, &w, opts) {
                Ok(pos) => (pos, jac_cache.clone().unwrap()),
                Err(_) if iter == 0 => {
                    return Err(FinslerError::ShootingFailed(
                        "initial guess leaves the chart".into(),
                    ))
                }
                Err(e) => return Err(e),
            }
        } else {
            match exp_with_jacobian(model, p, &w, opts) {
                Ok(v) => {
                    jac_cache = Some(v.1.clone());
                    v
                }
                Err(_) if iter == 0 => {
                    return Err(FinslerError::ShootingFailed(
                        "initial guess leaves the chart".into(),
                    ))
                }
                Err(e) => return Err(e),
            }
        };
        let r: Vec<f64> = pos.iter().zip(q).map(|(a, b)| a - b).collect();
        let rn = numerics::norm(&r);
        if reuse && rn > 0.3 * last_rn {
            // Stalled on the frozen Jacobian: refresh it.
            jac_cache = None;
        }
        last_rn = rn;
        best_res = best_res.min(rn);
        if rn <= tol {
            return Ok(Shot {
                length: model.f(p, &w)?,
                initial_velocity: w,
                residual: rn,
                newton_iterations: iter,
            });
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = numerics::solve(&jac, &neg_r, n).ok_or_else(|| {
            FinslerError::ShootingFailed("singular shooting Jacobian (conjugate point?)".into())
        })?;
        // Step halving, up to 20 times.
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let w_try = numerics::axpy(&w, s, &delta);
            if numerics::norm_inf(&w_try) >= guard_radius(&w_try) {
                if let Ok(pos_try) = exp_map(model, p, &w_try, opts) {
                    let rn_try =
                        numerics::norm(&pos_try.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if rn_try < rn {
                        w = w_try;
                        accepted = true;
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        if !accepted {
            return Err(FinslerError::ShootingFailed(format!(
                "Newton stalled at residual {rn:.3e} (target {tol:.1e})"
            )));
        }
    }
    Err(FinslerError::ShootingFailed(format!(
        "no convergence in 60 iterations (best residual {best_res:.3e})"
    )))
}

/// Options for the multi-start distance solver.
#[derive(Debug, Clone, Copy)]
pub struct DistanceOptions {
    /// Angular seeds scanned in 2D.
    pub seeds: usize,
    /// Best seeds polished by Newton.
    pub newton_starts: usize,
    /// Convergence tolerance on `|exp − q|`; default `1e-10 ×` chart scale.
    pub tol: Option<f64>,
    /// Unit-speed horizon for the seed scan.
    pub t_max: f64,
    pub ode: OdeOptions,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            seeds: 32,
            newton_starts: 6,
            tol: None,
            t_max: 12.0,
            ode: OdeOptions::default(),
        }
    }
}

/// Forward distance `d(p, q)` with its minimizing geodesic.
#[derive(Debug)]
pub struct DistanceSolution<'m> {
    pub length: f64,
    pub initial_velocity: Vec<f64>,
    pub path: GeodesicPath<'m>,
    /// All converged shots `(initial angle, length)`, for diagnostics.
    pub shots: Vec<(f64, f64)>,
    /// Two shots of nearly equal length but well-separated initial angles:
    /// the target is suspected near the cut locus of `p`.
    pub ambiguous: bool,
}

/// Forward (asymmetric) distance from `p` to `q` by exponential-map
/// shooting: a direct straight-line guess plus a fan of unit-speed angular
/// seeds, each polished by damped Newton; returns the best local minimizer
/// found.
pub fn distance<'m>(
    model: &'m MetricModel,
    p: &[f64],
    q: &[f64],
    opts: &DistanceOptions,
) -> Result<DistanceSolution<'m>> {
    let n = model.dim();
    if !model.chart().contains(p) {
        return Err(FinslerError::OutsideChart { x: p.to_vec() });
    }
    if !model.chart().contains(q) {
        return Err(FinslerError::OutsideChart { x: q.to_vec() });
    }
    let tol = opts.tol.unwrap_or(1e-10 * model.chart().scale());
    let dq: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    if numerics::norm(&dq) < 1e-14 {
        let t0 = Tangent::new(model, p.to_vec(), vec![1.0; n])?;
        let path = super::integrate_geodesic(model, &t0, 0.0, &opts.ode)?;
        return Ok(DistanceSolution {
            length: 0.0,
            initial_velocity: vec![0.0; n],
            path,
            shots: Vec::new(),
            ambiguous: false,
        });
    }

    let mut guesses: Vec<Vec<f64>> = vec![dq.clone()];

    if opts.seeds > 0 && n == 2 {
        // Unit-speed fan: for each angle, find the closest approach to q.
        let scan_ode = OdeOptions {
            rtol: 1e-7,
            atol: 1e-7,
            ..opts.ode
        };
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for k in 0..opts.seeds {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / opts.seeds as f64;
            let dir = [theta.cos(), theta.sin()];
            let f = match model.f(p, &dir) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let u: Vec<f64> = dir.iter().map(|v| v / f).collect();
            let Ok(t0) = Tangent::new(model, p.to_vec(), u.clone()) else {
                continue;
            };
            let Ok(path) = super::integrate_geodesic(model, &t0, opts.t_max, &scan_ode) else {
                continue;
            };
            let t_hi = path.t_end();
            let mut best = (f64::INFINITY, 0.0f64);
            let samples = 96;
            for s in 1..=samples {
                let t = t_hi * s as f64 / samples as f64;
                let x = path.position_at(t);
                let miss = numerics::norm(
                    &x.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>(),
                );
                if miss < best.0 {
                    best = (miss, t);
                }
            }
            if best.1 > 0.0 {
                scored.push((best.0, u.iter().map(|v| v * best.1).collect()));
            }
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (_, w) in scored.into_iter().take(opts.newton_starts) {
            guesses.push(w);
        }
    }

    let mut shots: Vec<Shot> = Vec::new();
    for w0 in &guesses {
        if let Ok(shot) = shoot_to(model, p, q, w0, tol, &opts.ode) {
            // Deduplicate by initial velocity.
            if !shots.iter().any(|s| {
                numerics::norm(
                    &s.initial_velocity
                        .iter()
                        .zip(&shot.initial_velocity)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                ) < 1e-7 * (1.0 + numerics::norm(&shot.initial_velocity))
            }) {
                shots.push(shot);
            }
        }
    }
    if shots.is_empty() {
        return Err(FinslerError::ShootingFailed(format!(
            "no convergent shot from {p:?} to {q:?}"
        )));
    }
    shots.sort_by(|a, b| a.length.partial_cmp(&b.length).unwrap());

    let angle = |w: &[f64]| w[1].atan2(w[0]);
    let mut ambiguous = false;
    if n == 2 {
        for s in shots.iter().skip(1) {
            let da = {
                let d = (angle(&s.initial_velocity) - angle(&shots[0].initial_velocity)).abs();
                d.min(2.0 * std::f64::consts::PI - d)
            };
            if (s.length - shots[0].length).abs() < 1e-6 && da > 1e-2 {
                ambiguous = true;
            }
        }
    }

    let best = &shots[0];
    let t0 = Tangent::new(model, p.to_vec(), best.initial_velocity.clone())?;
    let path = super::integrate_geodesic(model, &t0, 1.0, &opts.ode)?;
    Ok(DistanceSolution {
        length: best.length,
        initial_velocity: best.initial_velocity.clone(),
        path,
        shots: shots
            .iter()
            .map(|s| {
                (
                    if n == 2 { angle(&s.initial_velocity) } else { 0.0 },
                    s.length,
                )
            })
            .collect(),
        ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{make_model, ModelDescriptor};
    use approx::assert_relative_eq;

    #[test]
    fn euclid_distance_is_euclidean() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let d = distance(&m, &[0.0, 0.0], &[3.0, 4.0], &DistanceOptions::default()).unwrap();
        assert_relative_eq!(d.length, 5.0, epsilon = 1e-8);
        assert!(!d.ambiguous);
    }

    #[test]
    fn exp_map_scaling_identity() {
        // exp of (λ·w) over unit time equals exp of w over time λ.
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let w = [0.4, 0.1];
        let lam = 0.75;
        let wl: Vec<f64> = w.iter().map(|v| v * lam).collect();
        let a = exp_map(&m, &[0.1, 0.0], &wl, &OdeOptions::default()).unwrap();
        let t0 = Tangent::new(&m, vec![0.1, 0.0], w.to_vec()).unwrap();
        let path = super::super::integrate_geodesic(&m, &t0, lam, &OdeOptions::default()).unwrap();
        let b = path.position_at(lam);
        for i in 0..2 {
            assert_relative_eq!(a[i], b[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn funk_distance_matches_segment_integral_and_is_asymmetric() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let q = [1.0 - (-1.0f64).exp(), 0.0];
        let fwd = distance(&m, &[0.0, 0.0], &q, &DistanceOptions::default()).unwrap();
        assert_relative_eq!(fwd.length, 1.0, epsilon = 1e-6);
        let rev = distance(&m, &q, &[0.0, 0.0], &DistanceOptions::default()).unwrap();
        assert!(
            (rev.length - fwd.length).abs() > 0.2,
            "expected asymmetry, got {} vs {}",
            fwd.length,
            rev.length
        );
    }

    #[test]
    fn sphere_distance_matches_great_circle_oracle() {
        let m = make_model(&ModelDescriptor::Riemannian {
            matrix: "sphere".into(),
        })
        .unwrap();
        // Stereographic lift: x ↦ (2x, 1 − |x|²)/(1 + |x|²).
        let lift = |x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            [
                2.0 * x[0] / (1.0 + r2),
                2.0 * x[1] / (1.0 + r2),
                (1.0 - r2) / (1.0 + r2),
            ]
        };
        let p = [0.3, -0.2];
        let q = [-0.4, 0.5];
        let (a, b) = (lift(&p), lift(&q));
        let cosang = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let oracle = cosang.clamp(-1.0, 1.0).acos();
        let d = distance(&m, &p, &q, &DistanceOptions::default()).unwrap();
        assert_relative_eq!(d.length, oracle, epsilon = 1e-6);
    }

    #[test]
    fn unreachable_target_reports_failure() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let err = distance(&m, &[0.0, 0.0], &[1.5, 0.0], &DistanceOptions::default()).unwrap_err();
        assert!(matches!(err, FinslerError::OutsideChart { .. }));
    }
}
