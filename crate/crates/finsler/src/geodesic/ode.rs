//! Embedded Dormand-Prince 5(4) integrator with continuous (dense) output.
//!
//! Curvature probes difference the trajectories, so the solution is kept as
//! a sequence of accepted steps each carrying the standard 4th-order
//! continuous extension; the interpolant and its time derivative are exact
//! polynomials of the step data.

use crate::error::{FinslerError, Result};

/// Right-hand side of a first-order system. Evaluation may fail (e.g. the
/// state left the model's chart); the integrator treats a failing trial
/// stage like an oversized error and shrinks the step.
pub trait OdeRhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()>;
}

impl<F> OdeRhs for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        (self.1)(t, state, out)
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order weights (row 7 of A; FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Difference (5th − 4th order weights) for the error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output weights (Hairer's `dopri5` rcont5 row).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: Vec<f64>,
    r4: Vec<f64>,
    r5: Vec<f64>,
}

impl DenseStep {
    /// Interpolated state at `t` within the step.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let n = self.r1.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.r1[i]
                + th * (self.r2[i] + th1 * (self.r3[i] + th * (self.r4[i] + th1 * self.r5[i])));
        }
        out
    }

    /// Time derivative of the interpolant at `t`.
    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let n = self.r1.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            // P(θ) = r1 + θ r2 + θ(1−θ) r3 + θ²(1−θ) r4 + θ²(1−θ)² r5
            let dp = self.r2[i]
                + (1.0 - 2.0 * th) * self.r3[i]
                + th * (2.0 - 3.0 * th) * self.r4[i]
                + 2.0 * th * (1.0 - th) * (1.0 - 2.0 * th) * self.r5[i];
            out[i] = dp / self.h;
        }
        out
    }
}

/// A dense ODE solution over `[t0, t_end]` (or `[t_end, t0]` when
/// integrating backwards).
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t0: f64,
    pub t_end: f64,
    pub y0: Vec<f64>,
    pub y_end: Vec<f64>,
    pub steps: Vec<DenseStep>,
    /// Set when a guard predicate stopped the integration early.
    pub truncated: bool,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl OdeSolution {
    /// State at `t`, clamped to the integrated span.
    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.steps.is_empty() {
            return self.y0.clone();
        }
        let step = self.locate(t);
        step.eval(self.clamp(t))
    }

    /// Interpolant time derivative at `t`.
    pub fn derivative_at(&self, t: f64) -> Vec<f64> {
        let step = self.locate(t);
        step.eval_derivative(self.clamp(t))
    }

    fn clamp(&self, t: f64) -> f64 {
        let (lo, hi) = if self.t0 <= self.t_end {
            (self.t0, self.t_end)
        } else {
            (self.t_end, self.t0)
        };
        t.clamp(lo, hi)
    }

    fn locate(&self, t: f64) -> &DenseStep {
        let t = self.clamp(t);
        let forward = self.t_end >= self.t0;
        let mut lo = 0usize;
        let mut hi = self.steps.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let s = &self.steps[mid];
            let after_step_end = if forward {
                t > s.t0 + s.h
            } else {
                t < s.t0 + s.h
            };
            if after_step_end {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        &self.steps[lo]
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t_end)
    }
}

/// Integration controls.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Cap on |h|; tightens the dense-output error where trajectories are
    /// differenced.
    pub max_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 200_000,
            initial_step: None,
            max_step: None,
        }
    }
}

/// Integrate `rhs` from `(t0, y0)` to `t_end`. An optional `guard` is checked
/// on every accepted step; when it reports the state inadmissible the step is
/// bisected down to the admissibility boundary and the solution is returned
/// truncated there.
pub fn integrate<R: OdeRhs>(
    rhs: &R,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    guard: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<OdeSolution> {
    let n = rhs.dim();
    assert_eq!(y0.len(), n);
    if t_end == t0 {
        return Ok(OdeSolution {
            t0,
            t_end,
            y0: y0.to_vec(),
            y_end: y0.to_vec(),
            steps: Vec::new(),
            truncated: false,
            n_accepted: 0,
            n_rejected: 0,
        });
    }
    let dir = (t_end - t0).signum();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs.eval(t, &y, &mut k1)?;

    let mut h = opts.initial_step.map(|h| h.abs() * dir).unwrap_or_else(|| {
        let scale = 1.0 + crate::numerics::norm_inf(&y);
        let rate = crate::numerics::norm_inf(&k1).max(1e-8);
        (0.01 * scale / rate).min((t_end - t0).abs()) * dir
    });

    let mut steps: Vec<DenseStep> = Vec::new();
    let mut n_accepted = 0usize;
    let mut n_rejected = 0usize;
    let mut last_reject_was_stage_failure = false;

    let mut ks = vec![vec![0.0; n]; 7];
    'outer: while (t_end - t) * dir > 0.0 {
        if n_accepted + n_rejected > opts.max_steps {
            return Err(FinslerError::OdeFailure(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        if let Some(hmax) = opts.max_step {
            if h.abs() > hmax {
                h = hmax * dir;
            }
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            // Repeated stage failures pressed against an admissibility
            // boundary: stop there rather than fail.
            if last_reject_was_stage_failure && guard.is_some() {
                return Ok(OdeSolution {
                    t0,
                    t_end: t,
                    y0: y0.to_vec(),
                    y_end: y,
                    steps,
                    truncated: true,
                    n_accepted,
                    n_rejected,
                });
            }
            return Err(FinslerError::OdeFailure(format!(
                "step size underflow at t = {t} (stiffness or boundary)"
            )));
        }

        ks[0].copy_from_slice(&k1);
        let mut stage_failed = false;
        let mut y_stage = vec![0.0; n];
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in ks.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let (head, tail) = ks.split_at_mut(s);
            let _ = head;
            if rhs.eval(t + C[s] * h, &y_stage, &mut tail[0]).is_err() {
                stage_failed = true;
                break;
            }
        }
        if stage_failed {
            n_rejected += 1;
            last_reject_was_stage_failure = true;
            h *= 0.3;
            continue;
        }

        // 5th-order solution (stage 7 state equals it by FSAL) and error.
        let mut y1 = vec![0.0; n];
        let mut err_norm = 0.0f64;
        for i in 0..n {
            let mut acc = 0.0;
            let mut e = 0.0;
            for j in 0..7 {
                acc += B5[j] * ks[j][i];
                e += E[j] * ks[j][i];
            }
            y1[i] = y[i] + h * acc;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            let r = h * e / sc;
            err_norm += r * r;
        }
        let err = (err_norm / n as f64).sqrt();

        if !err.is_finite() {
            n_rejected += 1;
            last_reject_was_stage_failure = false;
            h *= 0.3;
            continue;
        }
        if err > 1.0 {
            n_rejected += 1;
            last_reject_was_stage_failure = false;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }

        // Accepted. k7 = f(t+h, y1) for FSAL and dense output.
        let mut k7 = vec![0.0; n];
        if rhs.eval(t + h, &y1, &mut k7).is_err() {
            n_rejected += 1;
            last_reject_was_stage_failure = true;
            h *= 0.3;
            continue;
        }

        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        let mut r3 = vec![0.0; n];
        let mut r4 = vec![0.0; n];
        let mut r5 = vec![0.0; n];
        for i in 0..n {
            let dy = y1[i] - y[i];
            r1[i] = y[i];
            r2[i] = dy;
            r3[i] = h * ks[0][i] - dy;
            r4[i] = dy - h * k7[i] - r3[i];
            let mut d = 0.0;
            for j in 0..6 {
                d += D[j] * ks[j][i];
            }
            d += D[6] * k7[i];
            r5[i] = h * d;
        }
        let step = DenseStep {
            t0: t,
            h,
            r1,
            r2,
            r3,
            r4,
            r5,
        };

        if let Some(g) = guard {
            if !g(&y1) {
                // Bisect to the last admissible point within the step.
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if g(&step.eval(t + mid * h)) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t_stop = t + lo * h;
                let y_stop = step.eval(t_stop);
                steps.push(step);
                return Ok(OdeSolution {
                    t0,
                    t_end: t_stop,
                    y0: y0.to_vec(),
                    y_end: y_stop,
                    steps,
                    truncated: true,
                    n_accepted: n_accepted + 1,
                    n_rejected,
                });
            }
        }

        steps.push(step);
        t += h;
        y = y1;
        k1 = k7;
        n_accepted += 1;
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);

        if (t_end - t) * dir <= 0.0 {
            break 'outer;
        }
    }

    Ok(OdeSolution {
        t0,
        t_end: t,
        y0: y0.to_vec(),
        y_end: y,
        steps,
        truncated: false,
        n_accepted,
        n_rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Circular;
    impl OdeRhs for Circular {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _t: f64, s: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -s[1];
            out[1] = s[0];
            Ok(())
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let sol = integrate(
            &Circular,
            0.0,
            &[1.0, 0.0],
            10.0,
            &OdeOptions::default(),
            None,
        )
        .unwrap();
        assert_relative_eq!(sol.y_end[0], 10f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(sol.y_end[1], 10f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn dense_output_matches_true_solution() {
        let sol = integrate(
            &Circular,
            0.0,
            &[1.0, 0.0],
            6.0,
            &OdeOptions::default(),
            None,
        )
        .unwrap();
        for k in 0..60 {
            let t = 0.1 * k as f64;
            let y = sol.at(t);
            assert_relative_eq!(y[0], t.cos(), epsilon = 1e-7);
            assert_relative_eq!(y[1], t.sin(), epsilon = 1e-7);
            let d = sol.derivative_at(t);
            assert_relative_eq!(d[0], -t.sin(), epsilon = 1e-6);
            assert_relative_eq!(d[1], t.cos(), epsilon = 1e-6);
        }
    }

    #[test]
    fn backward_integration() {
        let sol = integrate(
            &Circular,
            0.0,
            &[1.0, 0.0],
            -3.0,
            &OdeOptions::default(),
            None,
        )
        .unwrap();
        assert_relative_eq!(sol.y_end[0], 3f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(sol.y_end[1], -3f64.sin(), epsilon = 1e-8);
        let y = sol.at(-1.5);
        assert_relative_eq!(y[0], 1.5f64.cos(), epsilon = 1e-7);
    }

    #[test]
    fn guard_truncates_at_boundary() {
        // Stop the rotation when x drops below 0: first crossing at t = π/2.
        let guard = |s: &[f64]| s[0] >= 0.0;
        let sol = integrate(
            &Circular,
            0.0,
            &[1.0, 0.0],
            10.0,
            &OdeOptions::default(),
            Some(&guard),
        )
        .unwrap();
        assert!(sol.truncated);
        assert_relative_eq!(sol.t_end, std::f64::consts::FRAC_PI_2, epsilon = 1e-6);
        assert!(sol.y_end[0].abs() < 1e-6);
    }
}
