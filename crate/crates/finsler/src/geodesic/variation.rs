//! First/second variation of arc length and the Hessian decomposition of
//! distance functions.
//!
//! A variation of a unit-speed geodesic `γ` is built by exponentiating the
//! field `V(t) = f(t) E(t)` (with `E` parallel): `H(t, s) = exp_{γ(t)}(s V(t))`,
//! so every transverse curve is a geodesic and the κ endpoint terms vanish
//! by construction (they are still evaluated numerically and carried in the
//! report). `L(s)` is computed by composite Simpson quadrature over `t` with
//! `∂H/∂t` from the linearized geodesic flow, and compared, after 5-point
//! differencing in `s`, against the first and second variation formulas.

use serde::Serialize;

use crate::curvature::{riemann_from_tower, t_curvature};
use crate::error::{FinslerError, Result};
use crate::metric::{guard_radius, MetricModel, Tangent};
use crate::numerics;
use crate::spray::Tower;

use super::shooting::flow_with_directional_sensitivity;
use super::{
    geodesic_curvature, parallel_transport, ClosureCurve, GeodesicPath, OdeOptions,
};

/// Variation field `V(t) = f(t) E(t)` along a geodesic, with `E` the
/// parallel extension of `v0`.
pub struct VariationField {
    pub v0: Vec<f64>,
    pub f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub fp: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl VariationField {
    /// `f ≡ 1`: pure parallel field.
    pub fn parallel(v0: Vec<f64>) -> VariationField {
        VariationField {
            v0,
            f: Box::new(|_| 1.0),
            fp: Box::new(|_| 0.0),
        }
    }

    /// `f(t) = 1 − t/q`: the profile of the convexity construction.
    pub fn linear_decay(v0: Vec<f64>, q: f64) -> VariationField {
        VariationField {
            v0,
            f: Box::new(move |t| 1.0 - t / q),
            fp: Box::new(move |_| -1.0 / q),
        }
    }

    /// `f(t) = sin(π (t − a)/(b − a))`: fixed endpoints at `a` and `b`.
    pub fn fixed_endpoint_sine(v0: Vec<f64>, a: f64, b: f64) -> VariationField {
        let w = std::f64::consts::PI / (b - a);
        VariationField {
            v0,
            f: Box::new(move |t| (w * (t - a)).sin()),
            fp: Box::new(move |t| w * (w * (t - a)).cos()),
        }
    }
}

/// Outcome of a variation check.
#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub s_step: f64,
    /// `(s, L(s))` rows of the quadrature lengths.
    pub lengths: Vec<(f64, f64)>,
    /// `L'(0)` by 5-point differencing.
    pub l1_numeric: f64,
    /// First-variation formula `g(V, γ')|_a^b`.
    pub l1_formula: f64,
    /// `L''(0)` by 5-point differencing.
    pub l2_numeric: f64,
    /// Second-variation formula (index form + κ endpoint terms + T terms).
    pub l2_formula: f64,
    /// Pieces of the formula, for diagnostics.
    pub index_form: f64,
    pub kappa_terms: f64,
    pub t_terms: f64,
    pub first_residual: f64,
    pub second_residual: f64,
}

/// Compare quadrature derivatives of `L(s)` against the variation formulas
/// along a unit-speed geodesic.
pub fn variation_check(
    model: &MetricModel,
    gamma: &GeodesicPath<'_>,
    field: &VariationField,
    t_panels: usize,
) -> Result<VariationReport> {
    let n = model.dim();
    let (a, b) = gamma.sol.span();
    if (gamma.speed - 1.0).abs() > 1e-6 {
        return Err(FinslerError::Config(format!(
            "variation_check expects a unit-speed geodesic, got F = {}",
            gamma.speed
        )));
    }
    let frame = parallel_transport(model, gamma, &field.v0)?;
    if frame.t_end() != b && (frame.t_end() - b).abs() > 1e-9 {
        return Err(FinslerError::OutsideChart {
            x: gamma.position_at(frame.t_end()),
        });
    }

    let m = 2 * t_panels.max(8);
    let ts: Vec<f64> = (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect();

    // Per-node geometry: position, velocity, parallel E, N, towers as needed.
    struct Node {
        x: Vec<f64>,
        y: Vec<f64>,
        e: Vec<f64>,
        /// coordinate derivative of E: Ė = −N(x, y)E
        e_dot: Vec<f64>,
    }
    let mut nodes = Vec::with_capacity(ts.len());
    for &t in &ts {
        let (x, y, e) = frame.state_at(t);
        let tower = Tower::new(model, &x, &y, 1, 3)?;
        let nconn = tower.nonlinear_connection();
        let mut e_dot = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                e_dot[i] -= nconn.get(&[i, j]) * e[j];
            }
        }
        nodes.push(Node { x, y, e, e_dot });
    }

    // L(s) by Simpson over the fixed node grid.
    let exp_opts = OdeOptions {
        rtol: 1e-12,
        atol: 1e-12,
        ..OdeOptions::default()
    };
    let h = 1e-3;
    let s_values = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let mut lengths = Vec::with_capacity(s_values.len());
    for &s in &s_values {
        let mut integrand = Vec::with_capacity(ts.len());
        for (node, &t) in nodes.iter().zip(&ts) {
            let f_t = (field.f)(t);
            let fp_t = (field.fp)(t);
            // Transverse geodesic through γ(t) with velocity V(t), flowed to
            // time s (negative s extends the same ODE solution backwards).
            let w: Vec<f64> = node.e.iter().map(|c| c * f_t).collect();
            let dv: Vec<f64> = node
                .e
                .iter()
                .zip(&node.e_dot)
                .map(|(e, ed)| fp_t * e + f_t * ed)
                .collect();
            let (pos, dpos) = flow_with_directional_sensitivity(
                model, &node.x, &w, &node.y, &dv, s, &exp_opts,
            )?;
            integrand.push(model.f(&pos, &dpos)?);
        }
        // Composite Simpson on the uniform grid.
        let step = (b - a) / m as f64;
        let mut acc = integrand[0] + integrand[m];
        for (k, v) in integrand.iter().enumerate().take(m).skip(1) {
            acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        lengths.push((s, acc * step / 3.0));
    }

    let l = |i: usize| lengths[i].1;
    let l1_numeric = (-l(4) + 8.0 * l(3) - 8.0 * l(1) + l(0)) / (12.0 * h);
    let l2_numeric = (-l(4) + 16.0 * l(3) - 30.0 * l(2) + 16.0 * l(1) - l(0)) / (12.0 * h * h);

    // First variation: g_{γ'}(V, γ')|_a^b.
    let boundary = |idx: usize, t: f64| -> Result<f64> {
        let node = &nodes[idx];
        let f_t = (field.f)(t);
        let v: Vec<f64> = node.e.iter().map(|c| c * f_t).collect();
        model.g_inner(&node.x, &node.y, &v, &node.y)
    };
    let l1_formula = boundary(m, b)? - boundary(0, a)?;

    // Second variation: ∫ [g(DV⊥, DV⊥) − g(R(V⊥), V⊥)] dt
    //                   + [F(V)² g(κ, γ')]_a^b + T_a(V(a)) − T_b(V(b)).
    let mut integrand2 = Vec::with_capacity(ts.len());
    for (node, &t) in nodes.iter().zip(&ts) {
        let f_t = (field.f)(t);
        let fp_t = (field.fp)(t);
        let tower = Tower::new(model, &node.x, &node.y, 2, 4)?;
        let gyv = |u: &[f64], w: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += tower.g_value(i, j) * u[i] * w[j];
                }
            }
            acc
        };
        let v: Vec<f64> = node.e.iter().map(|c| c * f_t).collect();
        let c = gyv(&node.y, &v); // g(γ', V); F = 1
        let v_perp = numerics::axpy(&v, -c, &node.y);
        // ċ = ½[F²]_{x^i} V^i + y_i V̇^i with V̇ = f' E + f Ė.
        let y_flat = tower.y_flat();
        let mut c_dot = 0.0;
        for i in 0..n {
            c_dot += 0.5 * tower.f2.partial_xy(&[i], &[]) * v[i];
            c_dot += y_flat[i] * (fp_t * node.e[i] + f_t * node.e_dot[i]);
        }
        // D_{γ'}V⊥ = f' E − ċ γ'.
        let dv_perp: Vec<f64> = (0..n)
            .map(|i| fp_t * node.e[i] - c_dot * node.y[i])
            .collect();
        let r = riemann_from_tower(&tower);
        let rv = r.contract(1, &v_perp);
        let term = gyv(&dv_perp, &dv_perp) - gyv(rv.entries(), &v_perp);
        integrand2.push(term);
        let _ = t;
    }
    let step = (b - a) / m as f64;
    let mut index_form = integrand2[0] + integrand2[m];
    for (k, v) in integrand2.iter().enumerate().take(m).skip(1) {
        index_form += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    index_form *= step / 3.0;

    // κ endpoint terms, evaluated numerically on the transverse curves
    // (geodesics by construction, so these are integration-noise sized).
    let mut kappa_terms = 0.0;
    for (idx, t, sign) in [(m, b, 1.0), (0, a, -1.0)] {
        let node = &nodes[idx];
        let f_t = (field.f)(t);
        let v: Vec<f64> = node.e.iter().map(|c| c * f_t).collect();
        if numerics::norm_inf(&v) < guard_radius(&v) {
            continue;
        }
        let hcurve = |s: f64| -> Vec<f64> {
            let zero = vec![0.0; n];
            flow_with_directional_sensitivity(model, &node.x, &v, &zero, &zero, s, &exp_opts)
                .map(|(pos, _)| pos)
                .unwrap_or_else(|_| node.x.clone())
        };
        let hs = 1e-3;
        let pos = hcurve(0.0);
        let d1: Vec<f64> = (0..n)
            .map(|i| (hcurve(hs)[i] - hcurve(-hs)[i]) / (2.0 * hs))
            .collect();
        let d2: Vec<f64> = (0..n)
            .map(|i| (hcurve(hs)[i] - 2.0 * pos[i] + hcurve(-hs)[i]) / (hs * hs))
            .collect();
        let curve = ClosureCurve {
            position: |_s: f64| pos.clone(),
            d1: |_s: f64| d1.clone(),
            d2: |_s: f64| d2.clone(),
        };
        let kappa = geodesic_curvature(model, &curve, 0.0)?;
        let f2v = model.f2(&node.x, &v)?;
        kappa_terms += sign * f2v * model.g_inner(&node.x, &node.y, &kappa, &node.y)?;
    }

    // T endpoint terms: T_{γ'(a)}(V(a)) − T_{γ'(b)}(V(b)); T_y(0) = 0.
    let t_end_term = |idx: usize, t: f64| -> Result<f64> {
        let node = &nodes[idx];
        let f_t = (field.f)(t);
        let v: Vec<f64> = node.e.iter().map(|c| c * f_t).collect();
        if numerics::norm_inf(&v) < guard_radius(&v) {
            return Ok(0.0);
        }
        let tan = Tangent::new(model, node.x.clone(), node.y.clone())?;
        t_curvature(model, &tan, &v)
    };
    let t_terms = t_end_term(0, a)? - t_end_term(m, b)?;

    let l2_formula = index_form + kappa_terms + t_terms;
    Ok(VariationReport {
        s_step: h,
        lengths,
        l1_numeric,
        l1_formula,
        l2_numeric,
        l2_formula,
        index_form,
        kappa_terms,
        t_terms,
        first_residual: (l1_numeric - l1_formula).abs(),
        second_residual: (l2_numeric - l2_formula).abs(),
    })
}

/// Outcome of the distance-Hessian decomposition check
/// `H²ρ(v) = Ĥ²ρ(v) − T_{∇ρ}(v)` at a point `x` with probe direction `v`.
#[derive(Debug, Clone, Serialize)]
pub struct HessianReport {
    pub rho: f64,
    pub gradient: Vec<f64>,
    /// Hessian of ρ along the F-geodesic with velocity v.
    pub h2: f64,
    /// Hessian of ρ with respect to the induced Riemannian metric g_{∇ρ}.
    pub h2_hat: f64,
    /// `T_{∇ρ}(v)`.
    pub t_curv: f64,
    /// `|H²ρ(v) − (Ĥ²ρ(v) − T_{∇ρ}(v))|`.
    pub residual: f64,
}

/// Verify the Hessian decomposition of `ρ = d(p, ·)` at `t.x` in the probe
/// direction `t.y`. Refuses near the cut locus (ambiguous shooting).
pub fn hessian_distance_check(
    model: &MetricModel,
    p: &[f64],
    t: &Tangent,
) -> Result<HessianReport> {
    let n = model.dim();
    let x = &t.x;
    let v = &t.y;
    let opts = super::shooting::DistanceOptions {
        tol: Some(1e-12 * model.chart().scale()),
        ode: OdeOptions {
            rtol: 1e-12,
            atol: 1e-12,
            ..OdeOptions::default()
        },
        ..Default::default()
    };
    let center = super::shooting::distance(model, p, x, &opts)?;
    if center.ambiguous {
        return Err(FinslerError::CutLocusAmbiguous(format!(
            "shooting from {p:?} to {x:?} found near-equal-length shots"
        )));
    }
    let rho0 = center.length;
    let warm = center.initial_velocity.clone();

    // ρ(z) by warm-started Newton; ∇ρ(z) = arriving unit velocity.
    let rho_and_grad = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let shot = super::shooting::shoot_to(model, p, z, &warm, 1e-12 * model.chart().scale(), &opts.ode)?;
        let t0 = Tangent::new(model, p.to_vec(), shot.initial_velocity.clone())?;
        let path = super::integrate_geodesic(model, &t0, 1.0, &opts.ode)?;
        let y_arr = path.velocity_at(1.0);
        let f = model.f(z, &y_arr)?;
        Ok((shot.length, y_arr.iter().map(|c| c / f).collect()))
    };
    let rho = |z: &[f64]| -> Result<f64> { Ok(rho_and_grad(z)?.0) };

    let (_, grad) = rho_and_grad(x)?;

    // H²ρ(v): second difference of ρ along the F-geodesic through x with
    // velocity v (steps 1e-3 and 2e-3, one Richardson pass).
    let t0 = Tangent::new(model, x.clone(), v.clone())?;
    let h = 1e-3;
    let fwd = super::integrate_geodesic(model, &t0, 2.0 * h, &opts.ode)?;
    let bwd = super::integrate_geodesic(model, &t0, -2.0 * h, &opts.ode)?;
    let rho_c = rho0;
    let second_diff = |hh: f64| -> Result<f64> {
        let xp = fwd.position_at(hh);
        let xm = bwd.position_at(-hh);
        Ok((rho(&xp)? - 2.0 * rho_c + rho(&xm)?) / (hh * hh))
    };
    let h2 = numerics::richardson(second_diff(2.0 * h)?, second_diff(h)?, 2);

    // Coordinate derivatives of ρ on a cross stencil (Richardson on h, 2h).
    let hs = 1e-3;
    let mut rho_p = vec![vec![0.0; 2]; n]; // [i][0]: +h, [i][1]: +2h
    let mut rho_m = vec![vec![0.0; 2]; n];
    for i in 0..n {
        for (k, step) in [hs, 2.0 * hs].iter().enumerate() {
            let mut zp = x.clone();
            zp[i] += step;
            let mut zm = x.clone();
            zm[i] -= step;
            rho_p[i][k] = rho(&zp)?;
            rho_m[i][k] = rho(&zm)?;
        }
    }
    let mut drho = vec![0.0; n];
    let mut d2rho = vec![0.0; n * n];
    for i in 0..n {
        let d_h = (rho_p[i][0] - rho_m[i][0]) / (2.0 * hs);
        let d_2h = (rho_p[i][1] - rho_m[i][1]) / (4.0 * hs);
        drho[i] = numerics::richardson(d_2h, d_h, 2);
        let s_h = (rho_p[i][0] - 2.0 * rho_c + rho_m[i][0]) / (hs * hs);
        let s_2h = (rho_p[i][1] - 2.0 * rho_c + rho_m[i][1]) / (4.0 * hs * hs);
        d2rho[i * n + i] = numerics::richardson(s_2h, s_h, 2);
    }
    for i in 0..n {
        for j in i + 1..n {
            let cross = |si: f64, sj: f64| -> Result<f64> {
                let mut z = x.clone();
                z[i] += si;
                z[j] += sj;
                rho(&z)
            };
            let mixed = |step: f64| -> Result<f64> {
                Ok((cross(step, step)? - cross(step, -step)? - cross(-step, step)?
                    + cross(-step, -step)?)
                    / (4.0 * step * step))
            };
            let v_h = mixed(hs)?;
            let v_2h = mixed(2.0 * hs)?;
            let val = numerics::richardson(v_2h, v_h, 2);
            d2rho[i * n + j] = val;
            d2rho[j * n + i] = val;
        }
    }

    // Christoffel symbols of ĝ = g_{∇ρ} from central differences of the
    // matrix field ĝ_ij(z) = g_ij(z, ∇ρ(z)).
    let ghat_at = |z: &[f64]| -> Result<Vec<f64>> {
        let (_, gz) = rho_and_grad(z)?;
        let tan = Tangent::new(model, z.to_vec(), gz)?;
        Ok(model.fundamental_tensor(&tan).as_ref().unwrap().entries().to_vec())
    };
    let ghat0 = {
        let tan = Tangent::new(model, x.clone(), grad.clone())?;
        model.fundamental_tensor(&tan)?.entries().to_vec()
    };
    let mut dghat = vec![vec![0.0; n * n]; n]; // ∂_k ĝ_ij
    for k in 0..n {
        let mut zp = x.clone();
        zp[k] += hs;
        let mut zm = x.clone();
        zm[k] -= hs;
        let gp = ghat_at(&zp)?;
        let gm = ghat_at(&zm)?;
        for e in 0..n * n {
            dghat[k][e] = (gp[e] - gm[e]) / (2.0 * hs);
        }
    }
    let ghat_inv = numerics::invert(&ghat0, n)
        .ok_or_else(|| FinslerError::Config("singular induced metric".into()))?;
    // Ĥ²ρ(v) = v^i v^j (∂²_ij ρ − Γ̂^k_ij ∂_k ρ).
    let mut h2_hat = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut gamma_term = 0.0;
            for k in 0..n {
                let mut christoffel = 0.0;
                for l in 0..n {
                    christoffel += 0.5
                        * ghat_inv[k * n + l]
                        * (dghat[i][j * n + l] + dghat[j][i * n + l] - dghat[l][i * n + j]);
                }
                gamma_term += christoffel * drho[k];
            }
            h2_hat += v[i] * v[j] * (d2rho[i * n + j] - gamma_term);
        }
    }

    let tan = Tangent::new(model, x.clone(), grad.clone())?;
    let t_curv = t_curvature(model, &tan, v)?;
    let residual = (h2 - (h2_hat - t_curv)).abs();
    Ok(HessianReport {
        rho: rho0,
        gradient: grad,
        h2,
        h2_hat,
        t_curv,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;
    use crate::metric::{make_model, ModelDescriptor};
    use approx::assert_relative_eq;

    fn unit_geodesic<'m>(
        model: &'m MetricModel,
        x: &[f64],
        dir: &[f64],
        t_max: f64,
    ) -> GeodesicPath<'m> {
        let f = model.f(x, dir).unwrap();
        let y: Vec<f64> = dir.iter().map(|c| c / f).collect();
        let t0 = Tangent::new(model, x.to_vec(), y).unwrap();
        integrate_geodesic(model, &t0, t_max, &OdeOptions::default()).unwrap()
    }

    #[test]
    fn euclid_linear_decay_second_variation_is_one_over_q() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let q = 2.0;
        let gamma = unit_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], q);
        let field = VariationField::linear_decay(vec![0.0, 1.0], q);
        let rep = variation_check(&m, &gamma, &field, 120).unwrap();
        assert_relative_eq!(rep.l2_numeric, 1.0 / q, epsilon = 1e-6);
        assert_relative_eq!(rep.l2_formula, 1.0 / q, epsilon = 1e-8);
        assert!(rep.second_residual <= 1e-4);
        // L'(0) = −g(v, γ') at t=0 with V(b) = 0: here v ⊥ γ' so L'(0) = 0.
        assert!(rep.first_residual <= 1e-8, "{}", rep.first_residual);
    }

    #[test]
    fn fixed_endpoint_first_variation_vanishes() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let gamma = unit_geodesic(&m, &[0.05, 0.0], &[1.0, 0.2], 1.2);
        let b = gamma.t_end();
        let field = VariationField::fixed_endpoint_sine(vec![0.0, 1.0], 0.0, b);
        let rep = variation_check(&m, &gamma, &field, 120).unwrap();
        assert!(rep.l1_numeric.abs() <= 1e-8, "L'(0) = {}", rep.l1_numeric);
        assert!(rep.first_residual <= 1e-8);
        assert!(
            rep.second_residual <= 1e-4,
            "second variation residual {} (formula {}, numeric {})",
            rep.second_residual,
            rep.l2_formula,
            rep.l2_numeric
        );
    }

    #[test]
    fn funk_linear_decay_second_variation_matches_formula() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let q = 1.5;
        let gamma = unit_geodesic(&m, &[0.0, 0.0], &[0.9, 0.3], q);
        let field = VariationField::linear_decay(vec![-0.3, 1.0], q);
        let rep = variation_check(&m, &gamma, &field, 160).unwrap();
        assert!(
            rep.second_residual <= 1e-4,
            "residual {} (formula {} = index {} + kappa {} + T {}, numeric {})",
            rep.second_residual,
            rep.l2_formula,
            rep.index_form,
            rep.kappa_terms,
            rep.t_terms,
            rep.l2_numeric
        );
        assert!(rep.t_terms.abs() > 1e-6, "T endpoint term should bite on Funk");
        assert!(rep.first_residual <= 1e-8);
    }

    #[test]
    fn euclid_hessian_decomposition() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let t = Tangent::new(&m, vec![2.0, 0.0], vec![0.0, 1.0]).unwrap();
        let rep = hessian_distance_check(&m, &[0.0, 0.0], &t).unwrap();
        assert_relative_eq!(rep.rho, 2.0, epsilon = 1e-9);
        assert_relative_eq!(rep.h2, 0.5, epsilon = 1e-4);
        assert!(rep.t_curv.abs() <= 1e-10);
        assert!(rep.residual <= 3e-3, "residual {}", rep.residual);
    }

    #[test]
    fn sphere_hessian_matches_cotangent_comparison() {
        let m = make_model(&ModelDescriptor::Riemannian {
            matrix: "sphere".into(),
        })
        .unwrap();
        let p = [0.0, 0.0];
        let x = vec![0.25, 0.0];
        // v orthogonal to the radial direction, ĝ-unit-ish; H²ρ(v) =
        // cot(ρ) g(v⊥, v⊥).
        let v = vec![0.0, 1.0];
        let t = Tangent::new(&m, x.clone(), v.clone()).unwrap();
        let rep = hessian_distance_check(&m, &p, &t).unwrap();
        let gvv = {
            let tan = Tangent::new(&m, x.clone(), rep.gradient.clone()).unwrap();
            m.g_inner(&tan.x, &tan.y, &v, &v).unwrap()
        };
        let expected = (1.0 / rep.rho.tan()) * gvv;
        assert!(
            (rep.h2 - expected).abs() <= 1e-3 * (1.0 + expected.abs()),
            "H² = {}, cot(ρ)g(v,v) = {expected}",
            rep.h2
        );
        assert!(rep.t_curv.abs() <= 1e-9);
        assert!(rep.residual <= 3e-3);
    }

    #[test]
    fn funk_hessian_decomposition_holds() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let t = Tangent::new(&m, vec![0.4, 0.0], vec![0.0, 1.0]).unwrap();
        let rep = hessian_distance_check(&m, &[0.0, 0.0], &t).unwrap();
        assert!(
            rep.residual <= 3e-3,
            "residual {} (H² {}, Ĥ² {}, T {})",
            rep.residual,
            rep.h2,
            rep.h2_hat,
            rep.t_curv
        );
        assert!(rep.t_curv.abs() > 1e-4, "T should be nonzero on Funk");
    }
}
