//! Riemann curvature, flag curvature, T-curvature and its flow derivative,
//! the weighted flag curvature `K^α`, and the small-flag Taylor probes.
//!
//! The flow derivative `Ṫ_y(v) = d/dt T_{γ'(t)}(E(t))|₀` (with `E` the
//! parallel extension of `v`) is evaluated in closed form from pointwise
//! jets. Differentiating `T = y_k {Γ^k_jm(x,v) − Γ^k_jm(x,y)} v^j v^m`
//! along the flow produces three blocks: the derivative of the connection
//! difference, the transport of the `v^j v^m` slots, and the derivative of
//! the weight `y_k = g_kl y^l`, which by the Euler-Lagrange identity is
//! `d/dt y_k = ½ [F²]_{x^k}`. All three are kept; dropping the third breaks
//! the parallel-extension definition on chart-dependent metrics, which the
//! definitional ODE oracle in the tests would flag immediately.

use serde::Serialize;

use crate::error::{FinslerError, Result};
use crate::geodesic::{integrate_geodesic, parallel_transport, OdeOptions};
use crate::metric::{Flag, MetricModel, Tangent};
use crate::numerics;
use crate::spray::Tower;
use crate::tensor::{DenseTensor, Slot};

/// Riemann curvature `R^i_k` at a tangent, from the four-term spray
/// formula
/// `R^i_k = 2 ∂G^i/∂x^k − y^l ∂²G^i/∂x^l∂y^k + 2 G^l ∂²G^i/∂y^k∂y^l −
///  ∂G^i/∂y^l ∂G^l/∂y^k`.
pub fn riemann(model: &MetricModel, t: &Tangent) -> Result<DenseTensor> {
    let tower = Tower::new(model, &t.x, &t.y, 2, 4)?;
    Ok(riemann_from_tower(&tower))
}

pub(crate) fn riemann_from_tower(tower: &Tower) -> DenseTensor {
    let n = tower.n;
    let y = &tower.y;
    let g_spray = tower.spray_values();
    let nconn = tower.nonlinear_connection();
    let gamma = tower.berwald_connection();
    let mut r = DenseTensor::zeros(n, &[Slot::Up, Slot::Down]);
    for i in 0..n {
        for k in 0..n {
            let mut v = 2.0 * tower.spray[i].partial_xy(&[k], &[]);
            for l in 0..n {
                v -= y[l] * tower.spray[i].partial_xy(&[l], &[k]);
                v += 2.0 * g_spray[l] * gamma.get(&[i, k, l]);
                v -= nconn.get(&[i, l]) * nconn.get(&[l, k]);
            }
            r.set(&[i, k], v);
        }
    }
    r
}

/// `g_y(R_y(v), v)` with the metric and curvature at `t`.
fn r_quadratic_form(model: &MetricModel, t: &Tangent, v: &[f64]) -> Result<f64> {
    let r = riemann(model, t)?;
    let rv = r.contract(1, v);
    model.g_inner(&t.x, &t.y, &rv.entries().to_vec(), v)
}

/// Flag curvature `K(y, v) = g_y(R_y(v), v) / (F(y)² g_y(v⊥, v⊥))`.
pub fn flag_curvature(model: &MetricModel, flag: &Flag) -> Result<f64> {
    let t = &flag.base;
    let f2 = model.f2(&t.x, &t.y)?;
    let num = r_quadratic_form(model, t, &flag.v)?;
    Ok(num / (f2 * flag.tau * flag.tau))
}

/// T-curvature
/// `T_y(v) = y^l g_kl(x,y) {Γ^k_jm(x,v) − Γ^k_jm(x,y)} v^j v^m`.
/// `v` is a direction argument to the connection and must respect the guard
/// radius; it may be parallel to `y` (then `T_y(y) = 0`).
pub fn t_curvature(model: &MetricModel, t: &Tangent, v: &[f64]) -> Result<f64> {
    let n = model.dim();
    let tower_y = Tower::new(model, &t.x, &t.y, 1, 4)?;
    let tower_v = Tower::new(model, &t.x, v, 1, 4)?;
    let y_flat = tower_y.y_flat();
    let gamma_y = tower_y.berwald_connection();
    let gamma_v = tower_v.berwald_connection();
    let mut acc = 0.0;
    for k in 0..n {
        let mut q = 0.0;
        for j in 0..n {
            for m in 0..n {
                q += (gamma_v.get(&[k, j, m]) - gamma_y.get(&[k, j, m])) * v[j] * v[m];
            }
        }
        acc += y_flat[k] * q;
    }
    Ok(acc)
}

/// Flow derivative of the T-curvature,
/// `Ṫ_y(v) = d/dt [T_{γ'_y(t)}(E(t))]|₀` with `E` parallel, in closed form.
pub fn t_dot(model: &MetricModel, t: &Tangent, v: &[f64]) -> Result<f64> {
    let n = model.dim();
    let y = &t.y;
    let tower_y = Tower::new(model, &t.x, y, 2, 5)?;
    let tower_v = Tower::new(model, &t.x, v, 2, 5)?;

    let y_flat = tower_y.y_flat();
    let gamma_y = tower_y.berwald_connection();
    let gamma_v = tower_v.berwald_connection();
    let dx_gamma_y = tower_y.berwald_x_derivative();
    let dx_gamma_v = tower_v.berwald_x_derivative();
    let b3_y = tower_y.berwald_tensor(3);
    let b3_v = tower_v.berwald_tensor(3);
    let nconn_y = tower_y.nonlinear_connection();
    let spray_y = tower_y.spray_values();

    let mut total = 0.0;

    // d/dt of the connection difference, with Ė = −N·E for the parallel
    // argument and (ẋ, ẏ) = (y, −2G) for the base arguments.
    for k in 0..n {
        let mut q = 0.0;
        for j in 0..n {
            for m in 0..n {
                let mut block = 0.0;
                for s in 0..n {
                    block += dx_gamma_v.get(&[k, j, m, s]) * y[s];
                    block -= dx_gamma_y.get(&[k, j, m, s]) * y[s];
                    block += 2.0 * b3_y.get(&[k, j, m, s]) * spray_y[s];
                    for tt in 0..n {
                        block -= b3_v.get(&[k, j, m, s]) * nconn_y.get(&[s, tt]) * v[tt];
                    }
                }
                q += block * v[j] * v[m];
            }
        }
        total += y_flat[k] * q;
    }

    // Transport of the explicit v-slots: d/dt (V^j V^m) = −N^j_s v^s v^m − v^j N^m_s v^s.
    for k in 0..n {
        let mut q = 0.0;
        for j in 0..n {
            for m in 0..n {
                let dg = gamma_v.get(&[k, j, m]) - gamma_y.get(&[k, j, m]);
                for s in 0..n {
                    q -= 2.0 * dg * nconn_y.get(&[j, s]) * v[s] * v[m];
                }
            }
        }
        total += y_flat[k] * q;
    }

    // Euler-Lagrange transport of the weight: d/dt y_k = ½ [F²]_{x^k}.
    for k in 0..n {
        let mut q = 0.0;
        for j in 0..n {
            for m in 0..n {
                q += (gamma_v.get(&[k, j, m]) - gamma_y.get(&[k, j, m])) * v[j] * v[m];
            }
        }
        total += 0.5 * tower_y.f2.partial_xy(&[k], &[]) * q;
    }

    Ok(total)
}

/// Weighted flag curvature
/// `K^α(y,v) = [g_y(R_y v, v)/g_y(v⊥,v⊥) + Ṫ_y(v)·sqrt(g_y(v,v)/g_y(v⊥,v⊥)³)
///             − α T_y(v)² g_y(v,v)/g_y(v⊥,v⊥)³] / F(y)²`.
pub fn weighted_flag(model: &MetricModel, flag: &Flag, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(FinslerError::ParameterRange(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let t = &flag.base;
    let f2 = model.f2(&t.x, &t.y)?;
    let tau2 = flag.tau * flag.tau;
    let gvv = model.g_inner(&t.x, &t.y, &flag.v, &flag.v)?;
    let r_term = r_quadratic_form(model, t, &flag.v)? / tau2;
    let tdot_term = t_dot(model, t, &flag.v)? * (gvv / (tau2 * tau2 * tau2)).sqrt();
    let tv = t_curvature(model, t, &flag.v)?;
    let t_term = alpha * tv * tv * gvv / (tau2 * tau2 * tau2);
    Ok((r_term + tdot_term - t_term) / f2)
}

/// `L_y(u,u,u)`: the Landsberg curvature contracted three times.
pub fn landsberg_eval(model: &MetricModel, t: &Tangent, u: &[f64]) -> Result<f64> {
    let tower = Tower::new(model, &t.x, &t.y, 1, 5)?;
    let l = tower.landsberg();
    Ok(l.contract(2, u).contract(1, u).contract(0, u).get(&[]))
}

/// `L̇_y(u,u,u) = d/dt L_{γ'(t)}(U,U,U)|₀` with `U` parallel, in closed
/// form: `[y^a ∂_{x^a}L_lst − 2G^a ∂_{y^a}L_lst] u^l u^s u^t − 3 L_lst
/// N^l_a u^a u^s u^t`.
pub fn landsberg_dot(model: &MetricModel, t: &Tangent, u: &[f64]) -> Result<f64> {
    let n = model.dim();
    let tower = Tower::new(model, &t.x, &t.y, 2, 6)?;
    let y = &t.y;

    // Landsberg as jets: L_lst = −½ (g_ka Y^a) B^k_lst.
    let y_coord: Vec<crate::jets::Jet> = (0..n)
        .map(|k| crate::jets::Jet::y_var(&tower.table, k, y[k]))
        .collect();
    let mut y_flat_jets = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = crate::jets::Jet::constant(&tower.table, 0.0);
        for a in 0..n {
            acc = acc.add(&tower.g[k * n + a].mul(&y_coord[a]));
        }
        y_flat_jets.push(acc);
    }

    let g_spray = tower.spray_values();
    let nconn = tower.nonlinear_connection();
    let l_values = tower.landsberg();

    let mut flow_term = 0.0;
    for l in 0..n {
        for s in 0..n {
            for tt in 0..n {
                // L_lst jet via B3 jets of the spray.
                let mut l_jet = crate::jets::Jet::constant(&tower.table, 0.0);
                for k in 0..n {
                    let b3_jet = tower.spray[k].deriv_y(l).deriv_y(s).deriv_y(tt);
                    l_jet = l_jet.add(&y_flat_jets[k].mul(&b3_jet));
                }
                let l_jet = l_jet.scale(-0.5);
                let mut d_flow = 0.0;
                for a in 0..n {
                    d_flow += y[a] * l_jet.partial_xy(&[a], &[]);
                    d_flow -= 2.0 * g_spray[a] * l_jet.partial_xy(&[], &[a]);
                }
                flow_term += d_flow * u[l] * u[s] * u[tt];
            }
        }
    }
    // Transport of the three parallel slots: U̇^l = −N^l_a U^a, totally
    // symmetric in (l, s, t).
    let mut transport = 0.0;
    for l in 0..n {
        for s in 0..n {
            for tt in 0..n {
                for a in 0..n {
                    transport -=
                        3.0 * l_values.get(&[l, s, tt]) * nconn.get(&[l, a]) * u[a] * u[s] * u[tt];
                }
            }
        }
    }
    Ok(flow_term + transport)
}

/// Orthonormalize `u` against `y` under `g_y`: returns `u'` with
/// `g_y(y, u') = 0` and `g_y(u', u') = 1`.
pub fn orthonormalize(model: &MetricModel, t: &Tangent, u: &[f64]) -> Result<Vec<f64>> {
    let f2 = model.f2(&t.x, &t.y)?;
    let gyu = model.g_inner(&t.x, &t.y, &t.y, u)?;
    let u_perp = numerics::axpy(u, -gyu / f2, &t.y);
    let guu = model.g_inner(&t.x, &t.y, &u_perp, &u_perp)?;
    if guu <= 1e-24 {
        return Err(FinslerError::DegenerateFlag(
            "direction collapses onto the flagpole".into(),
        ));
    }
    let s = guu.sqrt();
    Ok(u_perp.iter().map(|v| v / s).collect())
}

/// Small-flag limit of the weighted flag curvature along `v = y + s·u`,
/// `s → 0⁺`: `K(y,u) − (2/3) L̇_y(u,u,u)/F(y) − (4α/9) L_y(u,u,u)²`.
/// `u` is orthonormalized against `y` internally.
pub fn small_flag_limit(model: &MetricModel, t: &Tangent, u: &[f64], alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(FinslerError::ParameterRange(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let u = orthonormalize(model, t, u)?;
    let f = model.f(&t.x, &t.y)?;
    let flag = Flag::new(model, t.clone(), u.clone())?;
    let k = flag_curvature(model, &flag)?;
    let l = landsberg_eval(model, t, &u)?;
    let ldot = landsberg_dot(model, t, &u)?;
    Ok(k - 2.0 / 3.0 * ldot / f - 4.0 * alpha / 9.0 * l * l)
}

/// Report of the Taylor-limit probes for the T-curvature and its flow
/// derivative.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorProbeReport {
    pub s_values: Vec<f64>,
    /// `−(3/2) T_y(y+su)/s³` per s.
    pub t_estimates: Vec<f64>,
    /// `−(3/2) Ṫ_y(y+su)/s³` per s.
    pub tdot_estimates: Vec<f64>,
    pub t_extrapolant: f64,
    pub tdot_extrapolant: f64,
    /// `L_y(u,u,u)` computed directly.
    pub landsberg_direct: f64,
    /// `L̇_y(u,u,u)` computed directly.
    pub landsberg_dot_direct: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_pass: bool,
    pub tdot_pass: bool,
    pub pass: bool,
}

fn probe_matches(extrapolant: f64, direct: f64, rel_tol: f64, abs_tol: f64) -> bool {
    if direct.abs() < 1e-3 {
        (extrapolant - direct).abs() <= abs_tol.max(1e-6)
    } else {
        (extrapolant - direct).abs() <= rel_tol * direct.abs()
    }
}

/// Probe the limits `−(3/2) T_y(y+su)/s³ → L_y(u,u,u)` and
/// `−(3/2) Ṫ_y(y+su)/s³ → L̇_y(u,u,u)` on a halving s-grid with one
/// Richardson pass, against the directly computed values.
pub fn taylor_probe(model: &MetricModel, t: &Tangent, u: &[f64]) -> Result<TaylorProbeReport> {
    let u = orthonormalize(model, t, u)?;
    let s_values = vec![1e-1, 5e-2, 2.5e-2, 1.25e-2];
    let mut t_estimates = Vec::with_capacity(s_values.len());
    let mut tdot_estimates = Vec::with_capacity(s_values.len());
    for &s in &s_values {
        let v = numerics::axpy(&t.y, s, &u);
        let s3 = s * s * s;
        t_estimates.push(-1.5 * t_curvature(model, t, &v)? / s3);
        tdot_estimates.push(-1.5 * t_dot(model, t, &v)? / s3);
    }
    // Leading error is O(s) on a halvings grid; one Richardson pass on the
    // two smallest s values.
    let m = s_values.len();
    let t_extrapolant = numerics::richardson(t_estimates[m - 2], t_estimates[m - 1], 1);
    let tdot_extrapolant = numerics::richardson(tdot_estimates[m - 2], tdot_estimates[m - 1], 1);

    let landsberg_direct = landsberg_eval(model, t, &u)?;
    let landsberg_dot_direct = landsberg_dot(model, t, &u)?;
    let rel_tol = 1e-3;
    let abs_tol = 1e-6;
    let t_pass = probe_matches(t_extrapolant, landsberg_direct, rel_tol, abs_tol);
    let tdot_pass = probe_matches(tdot_extrapolant, landsberg_dot_direct, rel_tol, abs_tol);
    Ok(TaylorProbeReport {
        s_values,
        t_estimates,
        tdot_estimates,
        t_extrapolant,
        tdot_extrapolant,
        landsberg_direct,
        landsberg_dot_direct,
        rel_tol,
        abs_tol,
        t_pass,
        tdot_pass,
        pass: t_pass && tdot_pass,
    })
}

/// One row of curvature quantities at a flag.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub f: f64,
    /// `g_y(R_y(v), v)`.
    pub r_eval: f64,
    pub flag_k: f64,
    pub t: f64,
    pub t_dot: f64,
    pub k_alpha: f64,
}

/// Evaluate every curvature quantity of the report at one flag.
pub fn curvature_report(model: &MetricModel, flag: &Flag, alpha: f64) -> Result<CurvatureReport> {
    let t = &flag.base;
    Ok(CurvatureReport {
        x: t.x.clone(),
        y: t.y.clone(),
        v: flag.v.clone(),
        alpha,
        f: model.f(&t.x, &t.y)?,
        r_eval: r_quadratic_form(model, t, &flag.v)?,
        flag_k: flag_curvature(model, flag)?,
        t: t_curvature(model, t, &flag.v)?,
        t_dot: t_dot(model, t, &flag.v)?,
        k_alpha: weighted_flag(model, flag, alpha)?,
    })
}

/// Residual of the parallel-reduction relation along a geodesic:
/// for `V(t) = f(t) E(t)` with `E` parallel and `f(t) = 1 − t/q`,
/// `f(t)² Ṫ_{γ'}(E) = d/dt T_{γ'}(V) − 2 f' f T_{γ'}(E)`.
/// Returns the max absolute residual over interior probe times.
pub fn tmpara_residual(
    model: &MetricModel,
    t0: &Tangent,
    v0: &[f64],
    q: f64,
    probes: usize,
) -> Result<f64> {
    let t_max = 0.8 * q.min(2.0);
    let path = integrate_geodesic(model, t0, t_max, &OdeOptions::default())?;
    let frame = parallel_transport(model, &path, v0)?;
    let t_hi = frame.t_end().min(t_max);

    let f = |t: f64| 1.0 - t / q;
    let fp = -1.0 / q;

    let w_at = |t: f64| -> Result<f64> {
        let (x, y, e) = frame.state_at(t);
        let tan = Tangent::new(model, x, y)?;
        let v: Vec<f64> = e.iter().map(|c| c * f(t)).collect();
        t_curvature(model, &tan, &v)
    };

    let h = 1e-3;
    let mut worst = 0.0f64;
    for k in 1..=probes.max(1) {
        let tc = t_hi * k as f64 / (probes.max(1) + 1) as f64;
        let (x, y, e) = frame.state_at(tc);
        let tan = Tangent::new(model, x, y)?;
        let lhs = f(tc) * f(tc) * t_dot(model, &tan, &e)?;
        let te = t_curvature(model, &tan, &e)?;
        // 5-point centered derivative of W(t) = T_{γ'(t)}(V(t)).
        let dw = (-w_at(tc + 2.0 * h)? + 8.0 * w_at(tc + h)? - 8.0 * w_at(tc - h)?
            + w_at(tc - 2.0 * h)?)
            / (12.0 * h);
        let rhs = dw - 2.0 * fp * f(tc) * te;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}
