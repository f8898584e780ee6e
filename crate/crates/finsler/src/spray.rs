//! Geodesic spray, nonlinear connection, Berwald connection coefficients,
//! the Berwald tensors through fifth fiber order, and the Landsberg
//! curvature.
//!
//! All quantities are derived from a single jet of `F²` at the evaluation
//! point by formal polynomial calculus:
//!
//! ```text
//! G^i = ¼ g^{il} { [F²]_{x^k y^l} y^k − [F²]_{x^l} }      (spray)
//! N^i_j   = ∂G^i/∂y^j                                     (nonlinear connection)
//! Γ^k_jm  = ∂²G^k/∂y^j∂y^m                                (Berwald connection)
//! B^k_jml = ∂³G^k/∂y^j∂y^m∂y^l, and its ∂y once and twice (Berwald tensors)
//! L_lst   = −½ y_k B^k_lst                                (Landsberg)
//! ```
//!
//! Index convention: the first index of `Γ` and the `B` tensors is the upper
//! index.

use std::sync::Arc;

use crate::error::{FinslerError, Result};
use crate::jets::{jet_table, Jet, JetTable};
use crate::metric::{MetricModel, Tangent};
use crate::tensor::{DenseTensor, Slot};

/// Invert an `n × n` matrix of jets by Gauss-Jordan elimination, pivoting on
/// constant-term magnitude. The constant-term matrix must be invertible.
fn invert_jet_matrix(a: &[Jet], n: usize, table: &Arc<JetTable>) -> Vec<Jet> {
    let mut m: Vec<Jet> = a.to_vec();
    let mut inv: Vec<Jet> = (0..n * n)
        .map(|i| Jet::constant(table, if i / n == i % n { 1.0 } else { 0.0 }))
        .collect();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row * n + col].value().abs() > m[piv * n + col].value().abs() {
                piv = row;
            }
        }
        assert!(
            m[piv * n + col].value().abs() > 1e-300,
            "singular fundamental tensor in jet inversion"
        );
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let pivot_recip = m[col * n + col].recip();
        for k in 0..n {
            m[col * n + k] = m[col * n + k].mul(&pivot_recip);
            inv[col * n + k] = inv[col * n + k].mul(&pivot_recip);
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col].clone();
            if f.value() == 0.0 && f.validity() == m[row * n + col].validity() {
                // still subtract: off-constant terms may be nonzero
            }
            for k in 0..n {
                m[row * n + k] = m[row * n + k].sub(&f.mul(&m[col * n + k]));
                inv[row * n + k] = inv[row * n + k].sub(&f.mul(&inv[col * n + k]));
            }
        }
    }
    inv
}

/// Jets of everything derived from `F²` at one point of the slit bundle.
///
/// `kx ≥ 1` is required (the spray consumes one chart derivative). Validity
/// bookkeeping is inherited from the jets themselves.
pub(crate) struct Tower {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub table: Arc<JetTable>,
    pub f2: Jet,
    /// `g_ij` jets, row-major; validity `(kx, ky−2)`.
    pub g: Vec<Jet>,
    /// `g^{ij}` jets, row-major.
    pub ginv: Vec<Jet>,
    /// Spray coefficient jets `G^i`; validity `(kx−1, ky−2)`.
    pub spray: Vec<Jet>,
}

impl Tower {
    pub fn new(model: &MetricModel, x: &[f64], y: &[f64], kx: usize, ky: usize) -> Result<Tower> {
        assert!(kx >= 1 && ky >= 2, "tower needs kx >= 1, ky >= 2");
        let f2 = model.f2_jet(x, y, kx, ky)?;
        let table = f2.table().clone();
        let n = model.dim();

        let mut g = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                g.push(f2.deriv_y(i).deriv_y(j).scale(0.5));
            }
        }
        let ginv = invert_jet_matrix(&g, n, &table);

        let y_coord: Vec<Jet> = (0..n).map(|k| Jet::y_var(&table, k, y[k])).collect();
        let mut spray = Vec::with_capacity(n);
        for i in 0..n {
            let mut inner_sum = Jet::constant(&table, 0.0);
            for l in 0..n {
                let mut bracket = f2.deriv_x(l).neg();
                let dyl = f2.deriv_y(l);
                for (k, yk) in y_coord.iter().enumerate() {
                    bracket = bracket.add(&dyl.deriv_x(k).mul(yk));
                }
                inner_sum = inner_sum.add(&ginv[i * n + l].mul(&bracket));
            }
            spray.push(inner_sum.scale(0.25));
        }

        Ok(Tower {
            n,
            x: x.to_vec(),
            y: y.to_vec(),
            table,
            f2,
            g,
            ginv,
            spray,
        })
    }

    pub fn g_value(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j].value()
    }

    /// `y_k = g_kl y^l` at the evaluation point.
    pub fn y_flat(&self) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                (0..self.n)
                    .map(|l| self.g_value(k, l) * self.y[l])
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn spray_values(&self) -> Vec<f64> {
        self.spray.iter().map(Jet::value).collect()
    }

    /// `N^i_j = ∂G^i/∂y^j`.
    pub fn nonlinear_connection(&self) -> DenseTensor {
        let n = self.n;
        let mut t = DenseTensor::zeros(n, &[Slot::Up, Slot::Down]);
        for i in 0..n {
            for j in 0..n {
                t.set(&[i, j], self.spray[i].partial_y(&[j]));
            }
        }
        t
    }

    /// `Γ^k_jm = ∂²G^k/∂y^j∂y^m`, symmetric in the lower indices.
    pub fn berwald_connection(&self) -> DenseTensor {
        let n = self.n;
        let mut t = DenseTensor::zeros(n, &[Slot::Up, Slot::Down, Slot::Down]);
        for k in 0..n {
            for j in 0..n {
                for m in j..n {
                    let v = self.spray[k].partial_y(&[j, m]);
                    t.set(&[k, j, m], v);
                    t.set(&[k, m, j], v);
                }
            }
        }
        t
    }

    /// `∂Γ^k_jm/∂x^s` at the evaluation point.
    pub fn berwald_x_derivative(&self) -> DenseTensor {
        let n = self.n;
        let mut t = DenseTensor::zeros(n, &[Slot::Up, Slot::Down, Slot::Down, Slot::Down]);
        for k in 0..n {
            for j in 0..n {
                for m in j..n {
                    for s in 0..n {
                        let v = self.spray[k].partial_xy(&[s], &[j, m]);
                        t.set(&[k, j, m, s], v);
                        t.set(&[k, m, j, s], v);
                    }
                }
            }
        }
        t
    }

    /// Berwald tensor of the given fiber order: order 3 = `B^k_jml`,
    /// 4 = `B^k_jmls`, 5 = `B^k_jmlst`. Slot 0 is the upper index.
    pub fn berwald_tensor(&self, order: usize) -> DenseTensor {
        assert!((3..=5).contains(&order));
        let n = self.n;
        let variance: Vec<Slot> = std::iter::once(Slot::Up)
            .chain(std::iter::repeat(Slot::Down).take(order))
            .collect();
        let mut t = DenseTensor::zeros(n, &variance);
        let mut idx = vec![0usize; order + 1];
        loop {
            let v = self.spray[idx[0]].partial_y(&idx[1..]);
            t.set(&idx, v);
            let mut k = order + 1;
            loop {
                if k == 0 {
                    return t;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Landsberg curvature `L_lst = −½ y_k B^k_lst` (values).
    pub fn landsberg(&self) -> DenseTensor {
        let n = self.n;
        let y_flat = self.y_flat();
        let b3 = self.berwald_tensor(3);
        let mut t = DenseTensor::zeros(n, &[Slot::Down, Slot::Down, Slot::Down]);
        let mut idx = [0usize; 3];
        loop {
            let mut s = 0.0;
            for (k, yk) in y_flat.iter().enumerate() {
                s += yk * b3.get(&[k, idx[0], idx[1], idx[2]]);
            }
            t.set(&idx, -0.5 * s);
            let mut k = 3;
            loop {
                if k == 0 {
                    return t;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// The spray-level data at one tangent: `G`, `N`, `Γ` and the Berwald
/// tensors through fifth fiber order.
#[derive(Debug, Clone)]
pub struct SprayData {
    pub at: Tangent,
    pub g: Vec<f64>,
    pub n_conn: DenseTensor,
    pub gamma: DenseTensor,
    pub b3: DenseTensor,
    pub b4: DenseTensor,
    pub b5: DenseTensor,
}

impl SprayData {
    /// Residuals of the Euler homogeneity relations, each normalized by the
    /// magnitude of the quantities involved.
    pub fn homogeneity_residuals(&self) -> Vec<(&'static str, f64)> {
        let y = &self.at.y;
        let n = y.len();
        let scale_g = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;

        let ny = self.n_conn.contract(1, y);
        let r_n = (0..n)
            .map(|i| (ny.get(&[i]) - 2.0 * self.g[i]).abs())
            .fold(0.0f64, f64::max)
            / scale_g;

        let gyy = self.gamma.contract(2, y).contract(1, y);
        let r_gamma = (0..n)
            .map(|k| (gyy.get(&[k]) - 2.0 * self.g[k]).abs())
            .fold(0.0f64, f64::max)
            / scale_g;

        let b3y = self.b3.contract(3, y);
        let r_b3 = b3y.max_abs() / (self.b3.max_abs() + 1.0);

        let b4y = self.b4.contract(4, y);
        let mut r_b4 = 0.0f64;
        let scale_b3 = self.b3.max_abs() + 1.0;
        for k in 0..n {
            for j in 0..n {
                for m in 0..n {
                    for l in 0..n {
                        let idx = [k, j, m, l];
                        r_b4 = r_b4.max((b4y.get(&idx) + self.b3.get(&idx)).abs() / scale_b3);
                    }
                }
            }
        }

        let b5y = self.b5.contract(5, y);
        let mut r_b5 = 0.0f64;
        let scale_b4 = self.b4.max_abs() + 1.0;
        let mut idx = [0usize; 5];
        loop {
            r_b5 = r_b5.max((b5y.get(&idx) + 2.0 * self.b4.get(&idx)).abs() / scale_b4);
            let mut k = 5;
            let mut done = false;
            loop {
                if k == 0 {
                    done = true;
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
            if done {
                break;
            }
        }

        vec![
            ("N·y = 2G", r_n),
            ("Γ·y·y = 2G", r_gamma),
            ("B3·y = 0", r_b3),
            ("B4·y = -B3", r_b4),
            ("B5·y = -2·B4", r_b5),
        ]
    }
}

/// Geodesic spray coefficients `G^i` at a tangent.
pub fn spray(model: &MetricModel, t: &Tangent) -> Result<Vec<f64>> {
    Ok(Tower::new(model, &t.x, &t.y, 1, 3)?.spray_values())
}

/// Spray values straight from the `F²` jet coefficients, solving
/// `g G = ¼ ([F²]_{x^k y^l} y^k − [F²]_{x^l})` in plain arithmetic.
/// This is the ODE right-hand-side fast path; it agrees with the jet tower
/// to machine precision.
pub fn spray_values_direct(model: &MetricModel, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    let jet = model.f2_jet(x, y, 1, 2)?;
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for l in 0..n {
        for j in l..n {
            let v = 0.5 * jet.partial_y(&[l, j]);
            g[l * n + j] = v;
            g[j * n + l] = v;
        }
        let mut acc = -jet.partial_xy(&[l], &[]);
        for k in 0..n {
            acc += jet.partial_xy(&[k], &[l]) * y[k];
        }
        b[l] = 0.25 * acc;
    }
    crate::numerics::solve(&g, &b, n).ok_or(FinslerError::NotPositiveDefinite {
        x: x.to_vec(),
        y: y.to_vec(),
        min_eig: 0.0,
    })
}

/// First derivatives of the spray in plain arithmetic: `G^i`, `∂G^i/∂x^s`
/// and `N^i_s = ∂G^i/∂y^s`, differentiating `G = ¼ g^{-1} b` through the
/// jet coefficients of `F²` at orders `(2, 3)`.
pub struct SprayFirstDerivatives {
    pub g_spray: Vec<f64>,
    /// Row-major `n × n`: `gx[i][s] = ∂G^i/∂x^s`.
    pub gx: Vec<f64>,
    /// Row-major `n × n`: `n_conn[i][s] = N^i_s`.
    pub n_conn: Vec<f64>,
}

pub fn spray_first_derivatives(
    model: &MetricModel,
    x: &[f64],
    y: &[f64],
) -> Result<SprayFirstDerivatives> {
    let n = model.dim();
    let jet = model.f2_jet(x, y, 2, 3)?;
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for l in 0..n {
        for j in 0..n {
            g[l * n + j] = 0.5 * jet.partial_y(&[l, j]);
        }
        let mut acc = -jet.partial_xy(&[l], &[]);
        for k in 0..n {
            acc += jet.partial_xy(&[k], &[l]) * y[k];
        }
        b[l] = acc;
    }
    let ginv = crate::numerics::invert(&g, n).ok_or(FinslerError::NotPositiveDefinite {
        x: x.to_vec(),
        y: y.to_vec(),
        min_eig: 0.0,
    })?;
    let matvec = |m: &[f64], v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum())
            .collect()
    };
    let g_spray: Vec<f64> = matvec(&ginv, &b).iter().map(|v| 0.25 * v).collect();

    // ∂G = ¼ [−g⁻¹ (∂g) g⁻¹ b + g⁻¹ ∂b] = −g⁻¹(∂g)·G + ¼ g⁻¹ ∂b.
    let mut gx = vec![0.0; n * n];
    let mut n_conn = vec![0.0; n * n];
    for s in 0..n {
        // chart derivative
        let mut dg = vec![0.0; n * n];
        let mut db = vec![0.0; n];
        for l in 0..n {
            for j in 0..n {
                dg[l * n + j] = 0.5 * jet.partial_xy(&[s], &[l, j]);
            }
            let mut acc = -jet.partial_xy(&[s, l], &[]);
            for k in 0..n {
                acc += jet.partial_xy(&[s, k], &[l]) * y[k];
            }
            db[l] = acc;
        }
        let dgg = matvec(&dg, &g_spray);
        let corr = matvec(&ginv, &dgg);
        let lead = matvec(&ginv, &db);
        for i in 0..n {
            gx[i * n + s] = 0.25 * lead[i] - corr[i];
        }

        // fiber derivative
        let mut dg = vec![0.0; n * n];
        let mut db = vec![0.0; n];
        for l in 0..n {
            for j in 0..n {
                dg[l * n + j] = 0.5 * jet.partial_y(&[l, j, s]);
            }
            let mut acc = jet.partial_xy(&[s], &[l]) - jet.partial_xy(&[l], &[s]);
            for k in 0..n {
                acc += jet.partial_xy(&[k], &[l, s]) * y[k];
            }
            db[l] = acc;
        }
        let dgg = matvec(&dg, &g_spray);
        let corr = matvec(&ginv, &dgg);
        let lead = matvec(&ginv, &db);
        for i in 0..n {
            n_conn[i * n + s] = 0.25 * lead[i] - corr[i];
        }
    }
    Ok(SprayFirstDerivatives {
        g_spray,
        gx,
        n_conn,
    })
}

/// `G^i` and `N^i_j` only (fiber derivative, no chart derivative): the
/// parallel-transport fast path at orders `(1, 3)`.
pub fn spray_and_nonlinear(model: &MetricModel, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    let jet = model.f2_jet(x, y, 1, 3)?;
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for l in 0..n {
        for j in 0..n {
            g[l * n + j] = 0.5 * jet.partial_y(&[l, j]);
        }
        let mut acc = -jet.partial_xy(&[l], &[]);
        for k in 0..n {
            acc += jet.partial_xy(&[k], &[l]) * y[k];
        }
        b[l] = acc;
    }
    let ginv = crate::numerics::invert(&g, n).ok_or(FinslerError::NotPositiveDefinite {
        x: x.to_vec(),
        y: y.to_vec(),
        min_eig: 0.0,
    })?;
    let matvec = |m: &[f64], v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum())
            .collect()
    };
    let g_spray: Vec<f64> = matvec(&ginv, &b).iter().map(|v| 0.25 * v).collect();
    let mut n_conn = vec![0.0; n * n];
    for s in 0..n {
        let mut dg = vec![0.0; n * n];
        let mut db = vec![0.0; n];
        for l in 0..n {
            for j in 0..n {
                dg[l * n + j] = 0.5 * jet.partial_y(&[l, j, s]);
            }
            let mut acc = jet.partial_xy(&[s], &[l]) - jet.partial_xy(&[l], &[s]);
            for k in 0..n {
                acc += jet.partial_xy(&[k], &[l, s]) * y[k];
            }
            db[l] = acc;
        }
        let dgg = matvec(&dg, &g_spray);
        let corr = matvec(&ginv, &dgg);
        let lead = matvec(&ginv, &db);
        for i in 0..n {
            n_conn[i * n + s] = 0.25 * lead[i] - corr[i];
        }
    }
    Ok((g_spray, n_conn))
}

/// Nonlinear connection `N^i_j = ∂G^i/∂y^j`.
pub fn nonlinear_connection(model: &MetricModel, t: &Tangent) -> Result<DenseTensor> {
    Ok(Tower::new(model, &t.x, &t.y, 1, 3)?.nonlinear_connection())
}

/// Berwald connection `Γ^k_jm` alone (cheaper than [`berwald`]).
pub fn berwald_connection(model: &MetricModel, t: &Tangent) -> Result<DenseTensor> {
    Ok(Tower::new(model, &t.x, &t.y, 1, 4)?.berwald_connection())
}

/// Full spray-level data: `G`, `N`, `Γ`, `B3`, `B4`, `B5`. Needs order-7
/// fiber jets for `B5`.
pub fn berwald(model: &MetricModel, t: &Tangent) -> Result<SprayData> {
    let tower = Tower::new(model, &t.x, &t.y, 1, 7)?;
    Ok(SprayData {
        at: t.clone(),
        g: tower.spray_values(),
        n_conn: tower.nonlinear_connection(),
        gamma: tower.berwald_connection(),
        b3: tower.berwald_tensor(3),
        b4: tower.berwald_tensor(4),
        b5: tower.berwald_tensor(5),
    })
}

/// Landsberg curvature `L_lst = −½ y_k B^k_lst`, totally symmetric.
pub fn landsberg(model: &MetricModel, t: &Tangent) -> Result<DenseTensor> {
    Ok(Tower::new(model, &t.x, &t.y, 1, 5)?.landsberg())
}
