//! Forward geodesic spheres, partial Busemann functions `b_p^t` and their
//! horizon limit, support rays, the small-ends diameter ratio, and the
//! Dini-type convexity quantity.
//!
//! All distances here are forward distances from the shooting solver;
//! `d(x, S(p,t))` is minimized by a coarse pass over the sphere samples
//! followed by golden-section refinement in the sphere parameter, with
//! warm-started Newton shots throughout.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{FinslerError, Result};
use crate::geodesic::shooting::{distance, shoot_to, DistanceOptions};
use crate::geodesic::{integrate_geodesic, GeodesicPath, OdeOptions};
use crate::metric::{MetricModel, Tangent};
use crate::numerics;

/// Controls for sphere sampling and the distance-to-sphere minimization.
#[derive(Debug, Clone, Copy)]
pub struct BusemannOptions {
    /// Angular seeds of a forward sphere in 2D.
    pub sphere_dirs: usize,
    /// Stride of the coarse pass over sphere samples.
    pub coarse_stride: usize,
    /// Golden-section tolerance on the sphere parameter.
    pub golden_tol: f64,
    /// Multi-start seeds for cold shots (fallback when warm starts fail).
    pub cold_seeds: usize,
    pub ode: OdeOptions,
}

impl Default for BusemannOptions {
    fn default() -> Self {
        BusemannOptions {
            sphere_dirs: 256,
            coarse_stride: 16,
            golden_tol: 1e-8,
            cold_seeds: 12,
            // Inner-loop accuracy: the Busemann laws are checked at 1e-5,
            // so 1e-8 trajectories with 3e-8-scaled shots are ample.
            ode: OdeOptions {
                rtol: 1e-8,
                atol: 1e-8,
                ..OdeOptions::default()
            },
        }
    }
}

/// One sampled point of a forward sphere `S(p, t)`.
#[derive(Debug, Clone, Serialize)]
pub struct SpherePoint {
    pub theta: f64,
    pub point: Vec<f64>,
    /// Unit outward velocity `γ'(t)` of the radial geodesic.
    pub outward_velocity: Vec<f64>,
}

/// Sampled forward sphere.
#[derive(Debug, Clone, Serialize)]
pub struct SphereSamples {
    pub t: f64,
    pub points: Vec<SpherePoint>,
    /// Some directions left the chart before reaching radius `t`.
    pub partial: bool,
}

/// Shared machinery for Busemann computations anchored at one base point.
pub struct BusemannContext<'m> {
    pub model: &'m MetricModel,
    pub p: Vec<f64>,
    pub opts: BusemannOptions,
    spheres: Mutex<BTreeMap<u64, SphereSamples>>,
}

/// Result of a distance-to-sphere minimization.
#[derive(Debug, Clone)]
pub struct SphereDistance {
    pub distance: f64,
    pub theta: f64,
    pub sphere_point: Vec<f64>,
    /// Initial velocity of the minimal connector from the probe.
    pub initial_velocity: Vec<f64>,
}

impl<'m> BusemannContext<'m> {
    pub fn new(model: &'m MetricModel, p: Vec<f64>, opts: BusemannOptions) -> BusemannContext<'m> {
        BusemannContext {
            model,
            p,
            opts,
            spheres: Mutex::new(BTreeMap::new()),
        }
    }

    /// Radial geodesic from `p` with unit initial speed at angle `theta`,
    /// integrated to radius `t`.
    fn radial(&self, theta: f64, t: f64) -> Result<GeodesicPath<'m>> {
        let dir = [theta.cos(), theta.sin()];
        let f = self.model.f(&self.p, &dir)?;
        let u: Vec<f64> = dir.iter().map(|c| c / f).collect();
        let t0 = Tangent::new(self.model, self.p.clone(), u)?;
        integrate_geodesic(self.model, &t0, t, &self.opts.ode)
    }

    /// Point of `S(p, t)` at sphere parameter `theta` (fresh integration).
    pub fn sphere_point_at(&self, t: f64, theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let path = self.radial(theta, t)?;
        if path.truncated {
            return Err(FinslerError::OutsideChart {
                x: path.position_at(path.t_end()),
            });
        }
        let (x, y) = path.state_at(t);
        Ok((x, y))
    }

    /// The sampled forward sphere of radius `t` (cached). Minimality of the
    /// radial geodesics is assumed inside the injectivity region; directions
    /// that exit the chart are dropped and flagged.
    pub fn sphere(&self, t: f64) -> Result<SphereSamples> {
        if t <= 0.0 {
            return Err(FinslerError::ParameterRange(format!(
                "sphere radius must be positive, got {t}"
            )));
        }
        let key = t.to_bits();
        if let Some(s) = self.spheres.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        use rayon::prelude::*;
        let n_dirs = self.opts.sphere_dirs.max(8);
        let rows: Vec<Option<SpherePoint>> = (0..n_dirs)
            .into_par_iter()
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n_dirs as f64;
                match self.radial(theta, t) {
                    Ok(path) if !path.truncated => {
                        let (x, y) = path.state_at(t);
                        Some(SpherePoint {
                            theta,
                            point: x,
                            outward_velocity: y,
                        })
                    }
                    _ => None,
                }
            })
            .collect();
        let partial = rows.iter().any(Option::is_none);
        let points: Vec<SpherePoint> = rows.into_iter().flatten().collect();
        if points.is_empty() {
            return Err(FinslerError::OutsideChart { x: self.p.clone() });
        }
        let samples = SphereSamples { t, points, partial };
        self.spheres.lock().unwrap().insert(key, samples.clone());
        Ok(samples)
    }

    /// Horizon of the multi-start fallback scan: generous relative to the
    /// largest sphere radius built so far and the chord length.
    fn cold_scan_horizon(&self, x: &[f64], z: &[f64]) -> f64 {
        let t_top = self
            .spheres
            .lock()
            .unwrap()
            .keys()
            .map(|&b| f64::from_bits(b))
            .fold(0.0f64, f64::max);
        let chord = numerics::norm(&z.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());
        (t_top + 3.0).max(2.0 * chord + 2.0)
    }

    /// Forward distance from `x` to the target `z`, warm-started when a
    /// previous connector is available, with a chord guess and a multi-start
    /// fallback. Warm continuation tracks one branch of connectors; sweeps
    /// must anchor on [`Self::shot_minimal`] to start on the minimal one.
    fn shot(&self, x: &[f64], z: &[f64], warm: &mut Option<Vec<f64>>) -> Result<(f64, Vec<f64>)> {
        let tol = 30.0 * self.opts.ode.rtol.max(1e-10) * self.model.chart().scale();
        if let Some(w0) = warm.as_ref() {
            if let Ok(shot) = shoot_to(self.model, x, z, w0, tol, &self.opts.ode) {
                *warm = Some(shot.initial_velocity.clone());
                return Ok((shot.length, shot.initial_velocity));
            }
        }
        let chord: Vec<f64> = z.iter().zip(x).map(|(a, b)| a - b).collect();
        if let Ok(shot) = shoot_to(self.model, x, z, &chord, tol, &self.opts.ode) {
            *warm = Some(shot.initial_velocity.clone());
            return Ok((shot.length, shot.initial_velocity));
        }
        self.shot_minimal(x, z, warm)
    }

    /// Multi-start shot: scans angular seeds and keeps the shortest
    /// converged connector.
    fn shot_minimal(&self, x: &[f64], z: &[f64], warm: &mut Option<Vec<f64>>) -> Result<(f64, Vec<f64>)> {
        let opts = DistanceOptions {
            seeds: self.opts.cold_seeds,
            ode: self.opts.ode,
            t_max: self.cold_scan_horizon(x, z),
            tol: Some(30.0 * self.opts.ode.rtol.max(1e-10) * self.model.chart().scale()),
            ..Default::default()
        };
        let sol = distance(self.model, x, z, &opts)?;
        *warm = Some(sol.initial_velocity.clone());
        Ok((sol.length, sol.initial_velocity))
    }

    /// `d(x, S(p, t))`: coarse pass over the sphere samples, then
    /// golden-section refinement on the sphere parameter.
    pub fn distance_to_sphere(&self, x: &[f64], t: f64) -> Result<SphereDistance> {
        let sphere = self.sphere(t)?;
        let pts = &sphere.points;
        let m = pts.len();
        let stride = self.opts.coarse_stride.clamp(1, m);
        let mut warm: Option<Vec<f64>> = None;
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        let mut anchored = false;
        for idx in (0..m).step_by(stride) {
            let result = if anchored {
                self.shot(x, &pts[idx].point, &mut warm)
            } else {
                self.shot_minimal(x, &pts[idx].point, &mut warm)
            };
            if let Ok((d, w)) = result {
                anchored = true;
                if best.as_ref().is_none_or(|b| d < b.0) {
                    best = Some((d, idx, w));
                }
            } else {
                warm = None;
            }
        }
        let (mut d_best, idx_best, w_best) = best.ok_or_else(|| {
            FinslerError::ShootingFailed(format!("no sphere sample of S(p, {t}) reachable from {x:?}"))
        })?;

        // Golden refinement over theta around the coarse winner.
        let span = 2.0 * std::f64::consts::PI * stride as f64 / self.opts.sphere_dirs as f64;
        let theta0 = pts[idx_best].theta;
        let mut warm_g = Some(w_best.clone());
        let mut best_w = w_best;
        let mut best_pt = pts[idx_best].point.clone();
        let mut best_theta = theta0;
        let mut phi = |theta: f64| -> f64 {
            match self.sphere_point_at(t, theta) {
                Ok((z, _)) => match self.shot(x, &z, &mut warm_g) {
                    Ok((d, w)) => {
                        if d < d_best {
                            d_best = d;
                            best_w = w;
                            best_pt = z;
                            best_theta = theta;
                        }
                        d
                    }
                    Err(_) => f64::INFINITY,
                },
                Err(_) => f64::INFINITY,
            }
        };
        // Near the minimum d(θ) is quadratic, so a θ-window of
        // sqrt(golden_tol) already pins the distance to golden_tol.
        let theta_tol = self.opts.golden_tol.sqrt().max(1e-8);
        let (_, _) = numerics::golden_section(&mut phi, theta0 - span, theta0 + span, theta_tol);
        drop(phi);
        // Certify the winner against branch drift of the warm continuation.
        let mut recheck = None;
        if let Ok((d, w)) = self.shot_minimal(x, &best_pt, &mut recheck) {
            if d < d_best {
                d_best = d;
                best_w = w;
            }
        }
        Ok(SphereDistance {
            distance: d_best,
            theta: best_theta,
            sphere_point: best_pt,
            initial_velocity: best_w,
        })
    }

    /// Partial Busemann value `b_p^t(x) = t − d(x, S(p, t))`.
    pub fn partial(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(t - self.distance_to_sphere(x, t)?.distance)
    }

    /// Plain forward distance between chart points (cold multi-start).
    pub fn point_distance(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let mut warm = None;
        Ok(self.shot_minimal(x, z, &mut warm)?.0)
    }
}

/// Sampled Busemann data at a base point: per-probe partial values over the
/// achieved horizons, the limit estimate, and the law residuals
/// (bounds, monotonicity, Lipschitz).
#[derive(Debug, Clone, Serialize)]
pub struct BusemannField {
    pub p: Vec<f64>,
    pub requested_horizons: Vec<f64>,
    pub horizons: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    /// `values[i][k] = b_p^{t_k}(x_i)`.
    pub values: Vec<Vec<f64>>,
    pub limit_estimate: Vec<f64>,
    /// `|b^{t_K} − b^{t_{K−1}}|` per probe.
    pub cauchy_gap: Vec<f64>,
    pub d_from_p: Vec<f64>,
    pub d_to_p: Vec<f64>,
    /// Worst excess of `−d(x,p) ≤ b_p^t(x) ≤ d(p,x)` over all rows.
    pub bound_violation: f64,
    /// Worst increase `b^{t2} − b^{t1}` over `d(p,x) ≤ t1 < t2`.
    pub monotonicity_violation: f64,
    /// Worst excess of `−d(x1,x2) ≤ b^t(x1) − b^t(x2) ≤ d(x2,x1)`.
    pub lipschitz_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Estimate the Busemann function at `p` over the probe set and horizon
/// schedule, verifying the boundedness, monotonicity and Lipschitz laws.
pub fn busemann_estimate(
    model: &MetricModel,
    p: &[f64],
    probes: &[Vec<f64>],
    horizons: &[f64],
    opts: &BusemannOptions,
) -> Result<BusemannField> {
    if probes.is_empty() || horizons.is_empty() {
        return Err(FinslerError::EmptySample(
            "busemann_estimate needs probes and horizons".into(),
        ));
    }
    let ctx = BusemannContext::new(model, p.to_vec(), *opts);
    let mut achieved = Vec::new();
    for &t in horizons {
        match ctx.sphere(t) {
            Ok(s) if !s.partial => achieved.push(t),
            _ => break,
        }
    }
    if achieved.is_empty() {
        return Err(FinslerError::OutsideChart { x: p.to_vec() });
    }

    use rayon::prelude::*;
    let rows: Vec<Result<Vec<f64>>> = probes
        .par_iter()
        .map(|x| {
            achieved
                .iter()
                .map(|&t| ctx.partial(x, t))
                .collect::<Result<Vec<f64>>>()
        })
        .collect();
    let mut values = Vec::with_capacity(probes.len());
    for row in rows {
        values.push(row?);
    }

    let d_from_p: Vec<f64> = probes
        .iter()
        .map(|x| ctx.point_distance(p, x))
        .collect::<Result<_>>()?;
    let d_to_p: Vec<f64> = probes
        .iter()
        .map(|x| ctx.point_distance(x, p))
        .collect::<Result<_>>()?;

    let mut bound_violation = 0.0f64;
    let mut monotonicity_violation = 0.0f64;
    for (i, row) in values.iter().enumerate() {
        for (k, &b) in row.iter().enumerate() {
            bound_violation = bound_violation.max(b - d_from_p[i]).max(-d_to_p[i] - b);
            for (k2, &b2) in row.iter().enumerate().skip(k + 1) {
                if achieved[k] >= d_from_p[i] {
                    monotonicity_violation = monotonicity_violation.max(b2 - b);
                }
                let _ = k2;
            }
        }
    }

    let mut lipschitz_violation = 0.0f64;
    for i in 0..probes.len() {
        for j in 0..probes.len() {
            if i == j {
                continue;
            }
            let dij = ctx.point_distance(&probes[i], &probes[j])?;
            for k in 0..achieved.len() {
                // b^t(x_i) − b^t(x_j) ≤ d(x_j, x_i); use dij = d(x_i, x_j)
                // for the pair ordered the other way.
                lipschitz_violation =
                    lipschitz_violation.max(values[j][k] - values[i][k] - dij);
            }
        }
    }

    let limit_estimate: Vec<f64> = values.iter().map(|row| *row.last().unwrap()).collect();
    let cauchy_gap: Vec<f64> = values
        .iter()
        .map(|row| {
            if row.len() >= 2 {
                (row[row.len() - 1] - row[row.len() - 2]).abs()
            } else {
                f64::NAN
            }
        })
        .collect();

    let tolerance = 1e-5;
    let pass = bound_violation <= tolerance
        && monotonicity_violation <= tolerance
        && lipschitz_violation <= tolerance;
    Ok(BusemannField {
        p: p.to_vec(),
        requested_horizons: horizons.to_vec(),
        horizons: achieved,
        probes: probes.to_vec(),
        values,
        limit_estimate,
        cauchy_gap,
        d_from_p,
        d_to_p,
        bound_violation,
        monotonicity_violation,
        lipschitz_violation,
        tolerance,
        pass,
    })
}

/// A geodesic ray witnessing the support structure of the Busemann function
/// at `q`, with its residual ledger.
#[derive(Debug)]
pub struct RayWitness<'m> {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub path: GeodesicPath<'m>,
    pub summary: RaySummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RaySummary {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub b_at_origin: f64,
    /// Gaps `|w_{k} − w_{k−1}|` between consecutive horizon directions.
    pub direction_gaps: Vec<f64>,
    pub cauchy: bool,
    /// `(t, min over probes of b_p(x) − b_p^{q,t}(x))`.
    pub support_residuals: Vec<(f64, f64)>,
    /// `(t, |b_p(σ(t)) − b_p(q) − t|)`.
    pub affine_residuals: Vec<(f64, f64)>,
    pub support_tolerance: f64,
    pub affine_tolerance: f64,
    pub pass: bool,
}

/// Extract the support ray at `q` from the horizon schedule: for each
/// achieved horizon, connect `q` to the nearest sphere point; the limit of
/// the unit initial directions defines the ray.
pub fn extract_ray<'m>(
    ctx: &BusemannContext<'m>,
    q: &[f64],
    field: &BusemannField,
    check_ts: &[f64],
) -> Result<RayWitness<'m>> {
    let model = ctx.model;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for &t in &field.horizons {
        let sd = ctx.distance_to_sphere(q, t)?;
        let f = model.f(q, &sd.initial_velocity)?;
        dirs.push(sd.initial_velocity.iter().map(|c| c / f).collect());
    }
    if dirs.is_empty() {
        return Err(FinslerError::EmptySample("no achieved horizons".into()));
    }
    let direction_gaps: Vec<f64> = dirs
        .windows(2)
        .map(|w| numerics::norm(&numerics::axpy(&w[1], -1.0, &w[0])))
        .collect();
    // Decreasing up to a noise floor, and small at the final horizon.
    let cauchy = direction_gaps
        .windows(2)
        .all(|g| g[1] <= g[0].max(1e-6))
        && direction_gaps.last().is_none_or(|&g| g < 0.05);

    let direction = dirs.last().unwrap().clone();
    let t_ray = *field.horizons.last().unwrap();
    let t0 = Tangent::new(model, q.to_vec(), direction.clone())?;
    let path = integrate_geodesic(model, &t0, t_ray, &ctx.opts.ode)?;

    let t_final = *field.horizons.last().unwrap();
    let b_at_origin = ctx.partial(q, t_final)?;

    let mut support_residuals = Vec::new();
    let mut affine_residuals = Vec::new();
    for &t in check_ts {
        if t <= 0.0 || t > path.t_end() {
            continue;
        }
        let z = path.position_at(t);
        // Support: b_p^{q,t}(x) = b_p(q) + t − d(x, σ(t)) ≤ b_p(x).
        let mut min_residual = f64::INFINITY;
        for (i, x) in field.probes.iter().enumerate() {
            let mut warm = None;
            let Ok((dxz, _)) = ctx.shot_minimal(x, &z, &mut warm) else {
                continue;
            };
            let support_value = b_at_origin + t - dxz;
            min_residual = min_residual.min(field.limit_estimate[i] - support_value);
        }
        if min_residual.is_finite() {
            support_residuals.push((t, min_residual));
        }
        // Affinity: b_p(σ(t)) = b_p(q) + t, using the farthest horizon.
        if t + b_at_origin <= t_final {
            let b_ray = ctx.partial(&z, t_final)?;
            affine_residuals.push((t, (b_ray - b_at_origin - t).abs()));
        }
    }

    let support_tolerance = 1e-4;
    let affine_tolerance = 5e-3;
    let pass = support_residuals.iter().all(|&(_, r)| r >= -support_tolerance)
        && affine_residuals.iter().all(|&(_, r)| r <= affine_tolerance);
    Ok(RayWitness {
        origin: q.to_vec(),
        direction: direction.clone(),
        path,
        summary: RaySummary {
            origin: q.to_vec(),
            direction,
            b_at_origin,
            direction_gaps,
            cauchy,
            support_residuals,
            affine_residuals,
            support_tolerance,
            affine_tolerance,
            pass,
        },
    })
}

/// One row of the small-ends diameter ratio `Diam(S(p,r))/r`.
#[derive(Debug, Clone, Serialize)]
pub struct SmallEndsRow {
    pub r: f64,
    pub diameter: f64,
    pub ratio: f64,
    /// The pairwise max moved by more than 5% under refinement, suggesting
    /// the angular grid is too coarse.
    pub sampling_coarse: bool,
}

/// Sample `Diam(S(p,r))/r` over a radius schedule. The diameter is a max of
/// forward distances over sampled ordered pairs, refined by golden section
/// in each sphere parameter.
pub fn small_ends_ratio(
    ctx: &BusemannContext<'_>,
    r_schedule: &[f64],
    pairs: usize,
) -> Result<Vec<SmallEndsRow>> {
    let mut rows = Vec::new();
    for &r in r_schedule {
        let sphere = ctx.sphere(r)?;
        let m = sphere.points.len();
        let k = pairs.clamp(4, m);
        let stride = (m / k).max(1);
        let mut best = (0.0f64, 0.0f64, 0.0f64); // (d, theta_u, theta_w)
        for i in (0..m).step_by(stride) {
            let mut warm = None;
            let mut anchored = false;
            for j in (0..m).step_by(stride) {
                if i == j {
                    continue;
                }
                let u = &sphere.points[i].point;
                let w_pt = &sphere.points[j].point;
                let result = if anchored {
                    ctx.shot(u, w_pt, &mut warm)
                } else {
                    ctx.shot_minimal(u, w_pt, &mut warm)
                };
                if let Ok((d, _)) = result {
                    anchored = true;
                    if d > best.0 {
                        best = (d, sphere.points[i].theta, sphere.points[j].theta);
                    }
                } else {
                    warm = None;
                    anchored = false;
                }
            }
        }
        if best.0 == 0.0 {
            return Err(FinslerError::ShootingFailed(format!(
                "no pairwise distances on S(p, {r})"
            )));
        }
        // 1D golden polish in the target parameter (maximize = minimize
        // the negative), warm-started.
        let span = 2.0 * std::f64::consts::PI * stride as f64 / m as f64;
        let (u_pt, _) = ctx.sphere_point_at(r, best.1)?;
        let mut warm = None;
        let mut refined = best.0;
        let mut neg = |theta: f64| -> f64 {
            match ctx.sphere_point_at(r, theta) {
                Ok((w_pt, _)) => match ctx.shot(&u_pt, &w_pt, &mut warm) {
                    Ok((d, _)) => {
                        refined = refined.max(d);
                        -d
                    }
                    Err(_) => f64::INFINITY,
                },
                Err(_) => f64::INFINITY,
            }
        };
        let _ = numerics::golden_section(&mut neg, best.2 - span, best.2 + span, 1e-3);
        drop(neg);
        // The diameter is a max of *minimal* distances: certify the winner.
        let (w_best, _) = ctx.sphere_point_at(r, best.2)?;
        let mut recheck = None;
        if let Ok((d, _)) = ctx.shot_minimal(&u_pt, &w_best, &mut recheck) {
            refined = refined.min(d.max(best.0));
        }
        let sampling_coarse = refined > 1.05 * best.0;
        rows.push(SmallEndsRow {
            r,
            diameter: refined,
            ratio: refined / r,
            sampling_coarse,
        });
    }
    Ok(rows)
}

/// Report of the Dini-type convexity quantity
/// `Cf(p,v) = liminf_{r→0} [f(c(r)) + f(c(−r)) − 2f(p)]/r²`.
#[derive(Debug, Clone, Serialize)]
pub struct DiniReport {
    /// `(r, second-difference quotient)` rows.
    pub estimates: Vec<(f64, f64)>,
    /// Minimum over the grid: a surrogate for the liminf, not the liminf.
    pub liminf_surrogate: f64,
    /// Quotients grow monotonically as r shrinks (kink or worse at `p`).
    pub diverging_hint: bool,
}

/// Estimate `Cf(p, v)` along the F-geodesic through `p` with velocity `v`
/// over the default shrinking radius grid.
pub fn dini_convexity(
    model: &MetricModel,
    f: &dyn Fn(&[f64]) -> f64,
    p: &[f64],
    v: &[f64],
    r_grid: &[f64],
) -> Result<DiniReport> {
    let fv = model.f(p, v)?;
    let unit: Vec<f64> = v.iter().map(|c| c / fv).collect();
    let t0 = Tangent::new(model, p.to_vec(), unit)?;
    let r_max = r_grid.iter().cloned().fold(0.0f64, f64::max);
    let opts = OdeOptions::default();
    let fwd = integrate_geodesic(model, &t0, r_max, &opts)?;
    let bwd = integrate_geodesic(model, &t0, -r_max, &opts)?;
    if fwd.truncated || bwd.truncated {
        return Err(FinslerError::OutsideChart { x: p.to_vec() });
    }
    let f0 = f(p);
    let mut estimates = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let q = (f(&fwd.position_at(r)) + f(&bwd.position_at(-r)) - 2.0 * f0) / (r * r);
        estimates.push((r, q));
    }
    let liminf_surrogate = estimates
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::INFINITY, f64::min);
    // Sorted by decreasing r in the conventional grid; diverging if each
    // halving grows the quotient materially.
    let mut sorted = estimates.clone();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let diverging_hint = sorted
        .windows(2)
        .all(|w| w[1].1 > w[0].1 * 1.2 + 1e-12)
        && sorted.len() >= 2;
    Ok(DiniReport {
        estimates,
        liminf_surrogate,
        diverging_hint,
    })
}

/// Default shrinking radius grid of the convexity estimator.
pub const DINI_R_GRID: [f64; 4] = [1e-1, 5e-2, 2.5e-2, 1.25e-2];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{make_model, ModelDescriptor};
    use approx::assert_relative_eq;

    #[test]
    fn euclid_forward_sphere_is_a_circle() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 64,
                ..Default::default()
            },
        );
        let s = ctx.sphere(1.0).unwrap();
        assert!(!s.partial);
        for pt in &s.points {
            assert_relative_eq!(numerics::norm(&pt.point), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn funk_sphere_at_origin_has_shrunken_radius() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 32,
                ..Default::default()
            },
        );
        let s = ctx.sphere(1.0).unwrap();
        let expect = 1.0 - (-1.0f64).exp();
        for pt in &s.points {
            assert_relative_eq!(numerics::norm(&pt.point), expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn randers_sphere_points_are_at_unit_distance() {
        let m = make_model(&ModelDescriptor::Randers { eps: 0.5 }).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 16,
                ..Default::default()
            },
        );
        let s = ctx.sphere(1.0).unwrap();
        // Shooting self-check: d(p, ·) = 1 for each sampled sphere point.
        let opts = DistanceOptions::default();
        for pt in s.points.iter().step_by(4) {
            let d = distance(&m, &[0.0, 0.0], &pt.point, &opts).unwrap();
            assert_relative_eq!(d.length, 1.0, epsilon = 1e-6);
        }
        // Off-center oval: max and min radii differ.
        let radii: Vec<f64> = s.points.iter().map(|p| numerics::norm(&p.point)).collect();
        let rmax = radii.iter().cloned().fold(0.0f64, f64::max);
        let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(rmax / rmin > 1.5, "expected anisotropy, got {rmin}..{rmax}");
    }

    #[test]
    fn euclid_partial_busemann_matches_radial_geometry() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 64,
                coarse_stride: 8,
                ..Default::default()
            },
        );
        let x = [0.7, -0.4];
        let b = ctx.partial(&x, 3.0).unwrap();
        assert_relative_eq!(b, numerics::norm(&x), epsilon = 1e-5);
        // b_p^t(p) = 0.
        let b0 = ctx.partial(&[0.0, 0.0], 2.0).unwrap();
        assert!(b0.abs() <= 1e-6, "b_p^t(p) = {b0}");
    }

    #[test]
    fn euclid_field_laws_and_limit() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let probes = vec![vec![0.5, 0.0], vec![-0.3, 0.4], vec![0.2, 0.6]];
        let opts = BusemannOptions {
            sphere_dirs: 64,
            coarse_stride: 8,
            ..Default::default()
        };
        let field = busemann_estimate(&m, &[0.0, 0.0], &probes, &[1.0, 2.0, 4.0], &opts).unwrap();
        assert!(field.pass, "{field:?}");
        for (i, x) in probes.iter().enumerate() {
            assert_relative_eq!(field.limit_estimate[i], numerics::norm(x), epsilon = 1e-5);
        }
    }

    #[test]
    fn funk_partial_values_nonincreasing_in_horizon() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 96,
                coarse_stride: 8,
                ..Default::default()
            },
        );
        let x = [0.3, 0.0];
        let b1 = ctx.partial(&x, 1.0).unwrap();
        let b2 = ctx.partial(&x, 2.0).unwrap();
        let b3 = ctx.partial(&x, 3.0).unwrap();
        assert!(b2 <= b1 + 1e-5 && b3 <= b2 + 1e-5, "{b1} {b2} {b3}");
        // Radial probe: b_p(x) = −ln(1 − |x|) at every horizon.
        let expect = -(1.0f64 - 0.3).ln();
        assert_relative_eq!(b1, expect, epsilon = 1e-5);
    }

    #[test]
    fn euclid_ray_is_radially_outward() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let opts = BusemannOptions {
            sphere_dirs: 64,
            coarse_stride: 8,
            ..Default::default()
        };
        let p = [0.0, 0.0];
        let q = [0.5, 0.0];
        let probes = vec![vec![0.3, 0.2], vec![-0.2, 0.5], vec![0.8, -0.1]];
        let field = busemann_estimate(&m, &p, &probes, &[1.0, 2.0, 4.0], &opts).unwrap();
        let ctx = BusemannContext::new(&m, p.to_vec(), opts);
        let ray = extract_ray(&ctx, &q, &field, &[0.5, 1.0, 2.0]).unwrap();
        // Direction away from p through q: +x axis.
        assert_relative_eq!(ray.summary.direction[0], 1.0, epsilon = 1e-6);
        assert!(ray.summary.cauchy);
        assert!(ray.summary.pass, "{:?}", ray.summary);
        for &(_, r) in &ray.summary.affine_residuals {
            assert!(r <= 1e-6, "affine residual {r}");
        }
    }

    #[test]
    fn euclid_small_ends_ratio_is_two() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions {
                sphere_dirs: 64,
                ..Default::default()
            },
        );
        let rows = small_ends_ratio(&ctx, &[1.0, 2.0], 12).unwrap();
        for row in rows {
            assert_relative_eq!(row.ratio, 2.0, max_relative = 1e-3);
        }
    }

    #[test]
    fn sphere_chart_small_ends_ratio_decreases() {
        let m = make_model(&ModelDescriptor::Riemannian {
            matrix: "sphere".into(),
        })
        .unwrap();
        // Base point off the chart origin: radial geodesics from the exact
        // origin pass through the missing point of the stereographic chart.
        let ctx = BusemannContext::new(
            &m,
            vec![0.2, 0.0],
            BusemannOptions {
                sphere_dirs: 64,
                ..Default::default()
            },
        );
        let rows = small_ends_ratio(&ctx, &[1.0, 2.0, 2.6], 10).unwrap();
        // Great-circle oracle: S(p,r) is a circle of spherical radius r;
        // its diameter is the distance between antipodal points on it,
        // = 2r for r ≤ π/2 and 2(π − r) past the equator.
        let oracle = |r: f64| {
            if r <= std::f64::consts::FRAC_PI_2 {
                2.0 * r
            } else {
                2.0 * (std::f64::consts::PI - r)
            }
        };
        for row in &rows {
            assert_relative_eq!(row.diameter, oracle(row.r), max_relative = 2e-2);
        }
        assert!(rows.last().unwrap().ratio < rows[0].ratio);
        assert!(rows.last().unwrap().ratio < 0.5);
    }

    #[test]
    fn dini_convexity_of_test_functions() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        // f = |x|²: C = 2 along any unit direction.
        let f2 = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let rep = dini_convexity(&m, &f2, &[0.3, -0.2], &[0.6, 0.8], &DINI_R_GRID).unwrap();
        assert_relative_eq!(rep.liminf_surrogate, 2.0, epsilon = 1e-6);
        assert!(!rep.diverging_hint);

        // Linear f: C = 0.
        let lin = |x: &[f64]| 3.0 * x[0] - x[1];
        let rep = dini_convexity(&m, &lin, &[0.0, 0.0], &[1.0, 0.0], &DINI_R_GRID).unwrap();
        assert!(rep.liminf_surrogate.abs() <= 1e-8);

        // f = |x| at the kink: quotients 2/r diverge upward.
        let norm_f = |x: &[f64]| numerics::norm(x);
        let rep = dini_convexity(&m, &norm_f, &[0.0, 0.0], &[1.0, 0.0], &DINI_R_GRID).unwrap();
        assert!(rep.diverging_hint, "{rep:?}");
    }
}

#[cfg(test)]
mod perf_probe {
    use super::*;
    use crate::metric::{make_model, ModelDescriptor};
    use std::time::Instant;

    #[test]
    fn profile_funk_partial() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.0, 0.0],
            BusemannOptions { sphere_dirs: 96, coarse_stride: 8, ..Default::default() },
        );
        for t in [1.0, 2.0, 3.0] {
            let s0 = Instant::now();
            let _ = ctx.sphere(t).unwrap();
            let sphere_time = s0.elapsed();
            let s1 = Instant::now();
            let sd = ctx.distance_to_sphere(&[0.3, 0.0], t).unwrap();
            println!("t={t}: sphere {sphere_time:?}, dist-to-sphere {:?} (d={:.6})", s1.elapsed(), sd.distance);
        }
    }

    #[test]
    fn profile_sphere_pairs() {
        let m = make_model(&ModelDescriptor::Riemannian { matrix: "sphere".into() }).unwrap();
        let ctx = BusemannContext::new(
            &m,
            vec![0.2, 0.0],
            BusemannOptions { sphere_dirs: 64, ..Default::default() },
        );
        let s = ctx.sphere(2.6).unwrap();
        println!("sphere(2.6): {} points, partial={}", s.points.len(), s.partial);
        let i = 0usize;
        let mut warm = None;
        for j in [8, 16, 24, 32, 40, 48, 56] {
            let st = Instant::now();
            let r = ctx.shot(&s.points[i].point, &s.points[j].point, &mut warm);
            match r {
                Ok((d, _)) => println!("pair (0,{j}): d={d:.4} in {:?}", st.elapsed()),
                Err(e) => println!("pair (0,{j}): FAILED {e} in {:?}", st.elapsed()),
            }
        }
    }
}

#[cfg(test)]
mod perf_probe2 {
    use crate::geodesic::{integrate_geodesic, OdeOptions};
    use crate::metric::{make_model, ModelDescriptor, Tangent};
    use crate::spray::spray_values_direct;
    use std::time::Instant;

    #[test]
    fn rhs_cost_breakdown() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let x = [0.3, 0.1];
        let y = [0.8, -0.2];
        let reps = 20000u32;
        let t0 = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += m.f2_jet(&x, &y, 1, 2).unwrap().value();
        }
        println!("f2_jet(1,2): {:?}/call  ({acc:.1})", t0.elapsed() / reps);
        let jet = m.f2_jet(&x, &y, 1, 2).unwrap();
        let t1 = Instant::now();
        let mut acc2 = 0.0;
        for _ in 0..reps {
            for l in 0..2 {
                for j in 0..2 {
                    acc2 += jet.partial_y(&[l, j]);
                }
                acc2 += jet.partial_xy(&[l], &[]);
                for k in 0..2 {
                    acc2 += jet.partial_xy(&[k], &[l]);
                }
            }
        }
        println!("extraction (10 partials): {:?}/call ({acc2:.1})", t1.elapsed() / reps);
        let t2 = Instant::now();
        let mut acc3 = 0.0;
        for _ in 0..reps {
            let g = [1.0, 0.1, 0.1, 2.0];
            let b = [0.3, 0.4];
            acc3 += crate::numerics::solve(&g, &b, 2).unwrap()[0];
        }
        println!("2x2 solve: {:?}/call ({acc3:.1})", t2.elapsed() / reps);
        let t3 = Instant::now();
        let mut acc4 = 0.0;
        for _ in 0..reps {
            acc4 += crate::jets::jet_table(2, 1, 2).len() as f64;
        }
        println!("jet_table lookup: {:?}/call ({acc4:.1})", t3.elapsed() / reps);
    }

    #[test]
    fn rhs_and_step_counts() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let x = [0.3, 0.1];
        let y = [0.8, -0.2];
        let t0 = Instant::now();
        let reps = 20000;
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += spray_values_direct(&m, &x, &y).unwrap()[0];
        }
        println!("spray_values_direct: {:?}/call (acc {acc:.3})", t0.elapsed() / reps);

        let tan = Tangent::new(&m, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let t1 = Instant::now();
        let path = integrate_geodesic(&m, &tan, 3.0, &OdeOptions::default()).unwrap();
        println!(
            "funk radial T=3: {:?}, accepted {}, rejected {}",
            t1.elapsed(),
            path.sol.n_accepted,
            path.sol.n_rejected
        );
        let t2 = Instant::now();
        let opts = OdeOptions { rtol: 1e-8, atol: 1e-8, ..Default::default() };
        let path2 = integrate_geodesic(&m, &tan, 3.0, &opts).unwrap();
        println!(
            "funk radial T=3 @1e-8: {:?}, accepted {}, rejected {}",
            t2.elapsed(),
            path2.sol.n_accepted,
            path2.sol.n_rejected
        );
    }
}
