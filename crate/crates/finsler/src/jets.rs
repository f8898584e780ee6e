//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] is a Taylor polynomial of a function of two groups of variables
//! — chart offsets `dx_1..dx_n` and fiber offsets `dy_1..dy_n` — truncated at
//! a total degree `kx` in the `dx` group and `ky` in the `dy` group. Seeding
//! the chart coordinates as `x0_i + dx_i` and the fiber coordinates as
//! `y0_i + dy_i` and evaluating a closed-form expression of `F²(x, y)` in
//! this algebra yields every mixed partial derivative
//! `∂^{|a|+|b|} F² / ∂x^a ∂y^b` with `|a| ≤ kx`, `|b| ≤ ky` at once, exactly
//! (no truncation error in the stored coefficients: addition, multiplication,
//! division and square root of truncated polynomials never let discarded
//! high-order terms contaminate the retained ones).
//!
//! Derived objects (spray coefficients, connection coefficients, curvature)
//! are obtained by *formal* differentiation of jets, which shrinks the region
//! of valid coefficients; each jet tracks its validity so that extracting a
//! coefficient beyond it is a programming error, caught by an assertion.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

/// Enumerate all multi-indices over `n` variables with total degree ≤ `cap`,
/// graded (by degree) and lexicographic within a degree.
fn enumerate_monomials(n: usize, cap: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = vec![0u8; n];
    for deg in 0..=cap {
        fill(&mut out, &mut current, 0, deg);
    }
    return out;

    fn fill(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, pos: usize, remaining: usize) {
        let n = current.len();
        if pos == n {
            if remaining == 0 {
                out.push(current.clone());
            }
            return;
        }
        if pos == n - 1 {
            current[pos] = remaining as u8;
            out.push(current.clone());
            current[pos] = 0;
            return;
        }
        for d in (0..=remaining).rev() {
            current[pos] = d as u8;
            fill(out, current, pos + 1, remaining - d);
        }
        current[pos] = 0;
    }
}

/// Precomputed layout and operation tables for jets with a fixed
/// `(n, kx, ky)` signature. Shared via `Arc`; built once per signature.
pub struct JetTable {
    pub n: usize,
    pub kx: usize,
    pub ky: usize,
    x_monos: Vec<Vec<u8>>,
    y_monos: Vec<Vec<u8>>,
    x_pos: HashMap<Vec<u8>, usize>,
    y_pos: HashMap<Vec<u8>, usize>,
    /// (a, b, dst) triples over combined indices: c_dst += a_coeff * b_coeff.
    mul_triples: Vec<(u32, u32, u32)>,
    /// Per x-variable: (src, dst, factor) for the formal ∂/∂dx_i.
    dx_maps: Vec<Vec<(u32, u32, f64)>>,
    /// Per y-variable: (src, dst, factor) for the formal ∂/∂dy_i.
    dy_maps: Vec<Vec<(u32, u32, f64)>>,
    /// Total x-degree / y-degree of each combined index.
    x_deg: Vec<u8>,
    y_deg: Vec<u8>,
    /// Product of factorials of the multi-index entries, per combined index.
    factorial: Vec<f64>,
}

impl JetTable {
    fn build(n: usize, kx: usize, ky: usize) -> JetTable {
        let x_monos = enumerate_monomials(n, kx);
        let y_monos = enumerate_monomials(n, ky);
        let x_pos: HashMap<_, _> = x_monos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let y_pos: HashMap<_, _> = y_monos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let ny = y_monos.len();
        let len = x_monos.len() * ny;

        let deg = |m: &[u8]| m.iter().map(|&d| d as usize).sum::<usize>();
        let mut x_deg = vec![0u8; len];
        let mut y_deg = vec![0u8; len];
        let mut factorial = vec![1.0f64; len];
        let fact = |k: u8| (1..=k as u64).product::<u64>() as f64;
        for (ix, mx) in x_monos.iter().enumerate() {
            for (iy, my) in y_monos.iter().enumerate() {
                let idx = ix * ny + iy;
                x_deg[idx] = deg(mx) as u8;
                y_deg[idx] = deg(my) as u8;
                factorial[idx] = mx.iter().map(|&d| fact(d)).product::<f64>()
                    * my.iter().map(|&d| fact(d)).product::<f64>();
            }
        }

        let mut mul_triples = Vec::new();
        let sum_idx = |a: &[u8], b: &[u8]| -> Vec<u8> {
            a.iter().zip(b).map(|(p, q)| p + q).collect()
        };
        for (ixa, mxa) in x_monos.iter().enumerate() {
            for (ixb, mxb) in x_monos.iter().enumerate() {
                if deg(mxa) + deg(mxb) > kx {
                    continue;
                }
                let ixd = x_pos[&sum_idx(mxa, mxb)];
                for (iya, mya) in y_monos.iter().enumerate() {
                    for (iyb, myb) in y_monos.iter().enumerate() {
                        if deg(mya) + deg(myb) > ky {
                            continue;
                        }
                        let iyd = y_pos[&sum_idx(mya, myb)];
                        mul_triples.push((
                            (ixa * ny + iya) as u32,
                            (ixb * ny + iyb) as u32,
                            (ixd * ny + iyd) as u32,
                        ));
                    }
                }
            }
        }
        // Group by destination for deterministic accumulation order.
        mul_triples.sort_unstable_by_key(|&(a, b, d)| (d, a, b));

        let mut dx_maps = vec![Vec::new(); n];
        let mut dy_maps = vec![Vec::new(); n];
        for (ix, mx) in x_monos.iter().enumerate() {
            for (iy, _my) in y_monos.iter().enumerate() {
                let src = (ix * ny + iy) as u32;
                for (v, map) in dx_maps.iter_mut().enumerate() {
                    if mx[v] >= 1 {
                        let mut m = mx.clone();
                        m[v] -= 1;
                        let dst = (x_pos[&m] * ny + iy) as u32;
                        map.push((src, dst, mx[v] as f64));
                    }
                }
            }
        }
        for (iy, my) in y_monos.iter().enumerate() {
            for ix in 0..x_monos.len() {
                let src = (ix * ny + iy) as u32;
                for (v, map) in dy_maps.iter_mut().enumerate() {
                    if my[v] >= 1 {
                        let mut m = my.clone();
                        m[v] -= 1;
                        let dst = (ix * ny + y_pos[&m]) as u32;
                        map.push((src, dst, my[v] as f64));
                    }
                }
            }
        }

        JetTable {
            n,
            kx,
            ky,
            x_monos,
            y_monos,
            x_pos,
            y_pos,
            mul_triples,
            dx_maps,
            dy_maps,
            x_deg,
            y_deg,
            factorial,
        }
    }

    pub fn len(&self) -> usize {
        self.x_monos.len() * self.y_monos.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn index_of(&self, mx: &[u8], my: &[u8]) -> usize {
        let ix = *self
            .x_pos
            .get(mx)
            .unwrap_or_else(|| panic!("x multi-index {mx:?} out of table (kx={})", self.kx));
        let iy = *self
            .y_pos
            .get(my)
            .unwrap_or_else(|| panic!("y multi-index {my:?} out of table (ky={})", self.ky));
        ix * self.y_monos.len() + iy
    }
}

static TABLE_CACHE: Lazy<Mutex<HashMap<(usize, usize, usize), Arc<JetTable>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Fetch (building if needed) the shared table for signature `(n, kx, ky)`.
pub fn jet_table(n: usize, kx: usize, ky: usize) -> Arc<JetTable> {
    let mut cache = TABLE_CACHE.lock().unwrap();
    cache
        .entry((n, kx, ky))
        .or_insert_with(|| Arc::new(JetTable::build(n, kx, ky)))
        .clone()
}

/// A truncated Taylor polynomial with validity tracking.
///
/// Coefficients with x-degree ≤ `vx` and y-degree ≤ `vy` are exact Taylor
/// coefficients of the represented function; the rest are zero filler.
#[derive(Clone)]
pub struct Jet {
    table: Arc<JetTable>,
    c: Vec<f64>,
    vx: u8,
    vy: u8,
}

impl Jet {
    pub fn constant(table: &Arc<JetTable>, v: f64) -> Jet {
        let mut c = vec![0.0; table.len()];
        c[0] = v;
        Jet {
            table: table.clone(),
            c,
            vx: table.kx as u8,
            vy: table.ky as u8,
        }
    }

    /// The jet of the coordinate function `x_i`, centered at `x0`.
    pub fn x_var(table: &Arc<JetTable>, i: usize, x0: f64) -> Jet {
        let mut j = Jet::constant(table, x0);
        if table.kx >= 1 {
            let mut mx = vec![0u8; table.n];
            mx[i] = 1;
            let my = vec![0u8; table.n];
            j.c[table.index_of(&mx, &my)] = 1.0;
        }
        j
    }

    /// The jet of the coordinate function `y_i`, centered at `y0`.
    pub fn y_var(table: &Arc<JetTable>, i: usize, y0: f64) -> Jet {
        let mut j = Jet::constant(table, y0);
        if table.ky >= 1 {
            let mx = vec![0u8; table.n];
            let mut my = vec![0u8; table.n];
            my[i] = 1;
            j.c[table.index_of(&mx, &my)] = 1.0;
        }
        j
    }

    pub fn table(&self) -> &Arc<JetTable> {
        &self.table
    }

    pub fn validity(&self) -> (usize, usize) {
        (self.vx as usize, self.vy as usize)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    fn same_table(&self, other: &Jet) {
        debug_assert!(
            Arc::ptr_eq(&self.table, &other.table),
            "jet arithmetic across different tables"
        );
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.same_table(other);
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&other.c) {
            *a += b;
        }
        Jet {
            table: self.table.clone(),
            c,
            vx: self.vx.min(other.vx),
            vy: self.vy.min(other.vy),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.same_table(other);
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&other.c) {
            *a -= b;
        }
        Jet {
            table: self.table.clone(),
            c,
            vx: self.vx.min(other.vx),
            vy: self.vy.min(other.vy),
        }
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut c = self.c.clone();
        for a in c.iter_mut() {
            *a *= s;
        }
        Jet {
            table: self.table.clone(),
            c,
            vx: self.vx,
            vy: self.vy,
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        self.same_table(other);
        let mut c = vec![0.0; self.c.len()];
        for &(a, b, d) in &self.table.mul_triples {
            c[d as usize] += self.c[a as usize] * other.c[b as usize];
        }
        let mut out = Jet {
            table: self.table.clone(),
            c,
            vx: self.vx.min(other.vx),
            vy: self.vy.min(other.vy),
        };
        out.zero_invalid();
        out
    }

    fn zero_invalid(&mut self) {
        let t = &self.table;
        for i in 0..self.c.len() {
            if t.x_deg[i] > self.vx || t.y_deg[i] > self.vy {
                self.c[i] = 0.0;
            }
        }
    }

    /// Σ_k a_k · u^k over the nilpotent part `u` (zero constant term),
    /// evaluated by Horner. `u^(vx+vy+1) = 0` on the valid region.
    fn nilpotent_series(u: &Jet, coeffs: &[f64]) -> Jet {
        debug_assert!(u.value() == 0.0);
        let mut acc = Jet::constant(&u.table, *coeffs.last().unwrap());
        for &a in coeffs.iter().rev().skip(1) {
            acc = acc.mul(u).add_scalar(a);
        }
        acc.vx = u.vx;
        acc.vy = u.vy;
        acc
    }

    /// Multiplicative inverse; the constant term must be nonzero.
    pub fn recip(&self) -> Jet {
        let c0 = self.value();
        assert!(c0 != 0.0, "jet reciprocal of zero constant term");
        let mut u = self.scale(1.0 / c0);
        u.c[0] = 0.0;
        let depth = (self.vx + self.vy) as usize;
        let coeffs: Vec<f64> = (0..=depth).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Jet::nilpotent_series(&u, &coeffs).scale(1.0 / c0)
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.mul(&other.recip())
    }

    /// Square root; the constant term must be strictly positive.
    pub fn sqrt(&self) -> Jet {
        let c0 = self.value();
        assert!(c0 > 0.0, "jet sqrt of non-positive constant term {c0}");
        let mut u = self.scale(1.0 / c0);
        u.c[0] = 0.0;
        let depth = (self.vx + self.vy) as usize;
        // Binomial series for (1+u)^(1/2).
        let mut coeffs = Vec::with_capacity(depth + 1);
        let mut binom = 1.0f64;
        for k in 0..=depth {
            coeffs.push(binom);
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
        }
        Jet::nilpotent_series(&u, &coeffs).scale(c0.sqrt())
    }

    /// Formal derivative with respect to the chart offset `dx_i`.
    pub fn deriv_x(&self, i: usize) -> Jet {
        assert!(self.vx >= 1, "x-derivative exhausts jet validity");
        let mut c = vec![0.0; self.c.len()];
        for &(src, dst, f) in &self.table.dx_maps[i] {
            c[dst as usize] += self.c[src as usize] * f;
        }
        let mut out = Jet {
            table: self.table.clone(),
            c,
            vx: self.vx - 1,
            vy: self.vy,
        };
        out.zero_invalid();
        out
    }

    /// Formal derivative with respect to the fiber offset `dy_i`.
    pub fn deriv_y(&self, i: usize) -> Jet {
        assert!(self.vy >= 1, "y-derivative exhausts jet validity");
        let mut c = vec![0.0; self.c.len()];
        for &(src, dst, f) in &self.table.dy_maps[i] {
            c[dst as usize] += self.c[src as usize] * f;
        }
        let mut out = Jet {
            table: self.table.clone(),
            c,
            vx: self.vx,
            vy: self.vy - 1,
        };
        out.zero_invalid();
        out
    }

    /// Extract the mixed partial derivative `∂^{|mx|+|my|} f / ∂x^mx ∂y^my`
    /// at the expansion point (Taylor coefficient times factorials).
    pub fn partial(&self, mx: &[u8], my: &[u8]) -> f64 {
        let dx: u8 = mx.iter().sum();
        let dy: u8 = my.iter().sum();
        assert!(
            dx <= self.vx && dy <= self.vy,
            "partial (|mx|={dx}, |my|={dy}) beyond jet validity ({}, {})",
            self.vx,
            self.vy
        );
        let idx = self.table.index_of(mx, my);
        self.c[idx] * self.table.factorial[idx]
    }

    /// Partial derivative in y-variables only, given as a list of variable
    /// indices (repetitions allowed), e.g. `partial_y(&[0, 1, 1])` for
    /// ∂³/∂y^0 ∂y^1 ∂y^1.
    pub fn partial_y(&self, vars: &[usize]) -> f64 {
        let mut my = vec![0u8; self.table.n];
        for &v in vars {
            my[v] += 1;
        }
        let mx = vec![0u8; self.table.n];
        self.partial(&mx, &my)
    }

    /// Mixed partial: one list of x-variable indices, one of y-variable
    /// indices (repetitions allowed).
    pub fn partial_xy(&self, x_vars: &[usize], y_vars: &[usize]) -> f64 {
        let mut mx = vec![0u8; self.table.n];
        for &v in x_vars {
            mx[v] += 1;
        }
        let mut my = vec![0u8; self.table.n];
        for &v in y_vars {
            my[v] += 1;
        }
        self.partial(&mx, &my)
    }
}

/// Seed the chart variables `x0 + dx` for a model evaluation.
pub fn seed_x(table: &Arc<JetTable>, x0: &[f64]) -> Vec<Jet> {
    (0..table.n).map(|i| Jet::x_var(table, i, x0[i])).collect()
}

/// Seed the fiber variables `y0 + dy` for a model evaluation.
pub fn seed_y(table: &Arc<JetTable>, y0: &[f64]) -> Vec<Jet> {
    (0..table.n).map(|i| Jet::y_var(table, i, y0[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_coefficients_are_exact() {
        // f = (x1 + 2 y1 y2)^2 = x1^2 + 4 x1 y1 y2 + 4 y1^2 y2^2 at x=0, y=0.
        let t = jet_table(2, 2, 4);
        let x = seed_x(&t, &[0.0, 0.0]);
        let y = seed_y(&t, &[0.0, 0.0]);
        let f = x[0].add(&y[0].mul(&y[1]).scale(2.0));
        let f2 = f.mul(&f);
        assert_relative_eq!(f2.partial(&[2, 0], &[0, 0]), 2.0); // ∂²/∂x1² of x1² = 2
        assert_relative_eq!(f2.partial(&[1, 0], &[1, 1]), 4.0);
        assert_relative_eq!(f2.partial(&[0, 0], &[2, 2]), 16.0); // 4·(2!)(2!)/…: 4 y1²y2² → ∂⁴ = 16
        assert_relative_eq!(f2.value(), 0.0);
    }

    #[test]
    fn reciprocal_matches_geometric_series() {
        // 1/(1 - y1) at y1=0: all pure y1 coefficients are 1.
        let t = jet_table(1, 0, 6);
        let y = seed_y(&t, &[0.0]);
        let f = Jet::constant(&t, 1.0).sub(&y[0]);
        let r = f.recip();
        for k in 0..=6u8 {
            let fact: f64 = (1..=k as u64).product::<u64>() as f64;
            assert_relative_eq!(r.partial(&[0], &[k]), fact, max_relative = 1e-13);
        }
    }

    #[test]
    fn sqrt_of_square_is_identity() {
        let t = jet_table(2, 2, 5);
        let x = seed_x(&t, &[0.3, -0.1]);
        let y = seed_y(&t, &[1.0, 2.0]);
        let f = Jet::constant(&t, 1.5)
            .add(&x[0])
            .add(&y[1].scale(0.25))
            .add(&x[1].mul(&y[0]).scale(0.5));
        let g = f.mul(&f).sqrt();
        for (i, (a, b)) in g.c.iter().zip(&f.c).enumerate() {
            if g.table.x_deg[i] <= g.vx && g.table.y_deg[i] <= g.vy {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn high_order_derivatives_of_euclidean_norm() {
        // F(y) = |y| in 2D at y = (3,4): F = 5, ∂F/∂y_i = y_i/|y|,
        // ∂²F/∂y_i∂y_j = (δ_ij - y_iy_j/|y|²)/|y|.
        let t = jet_table(2, 0, 7);
        let y = seed_y(&t, &[3.0, 4.0]);
        let f = y[0].mul(&y[0]).add(&y[1].mul(&y[1])).sqrt();
        assert_relative_eq!(f.value(), 5.0, max_relative = 1e-14);
        assert_relative_eq!(f.partial_y(&[0]), 3.0 / 5.0, max_relative = 1e-13);
        assert_relative_eq!(f.partial_y(&[1]), 4.0 / 5.0, max_relative = 1e-13);
        assert_relative_eq!(
            f.partial_y(&[0, 0]),
            (1.0 - 9.0 / 25.0) / 5.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            f.partial_y(&[0, 1]),
            (-12.0 / 25.0) / 5.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn formal_derivative_agrees_with_reseeded_jet() {
        // d/dy1 of f(x,y) = x1 y1² / (1 + y2²), compared against the
        // analytically differentiated expression evaluated as a fresh jet.
        let t = jet_table(2, 1, 4);
        let x = seed_x(&t, &[2.0, 0.0]);
        let y = seed_y(&t, &[0.7, -0.4]);
        let denom = Jet::constant(&t, 1.0).add(&y[1].mul(&y[1]));
        let f = x[0].mul(&y[0]).mul(&y[0]).div(&denom);
        let df = f.deriv_y(0);
        let expected = x[0].mul(&y[0]).scale(2.0).div(&denom);
        for i in 0..df.c.len() {
            if df.table.x_deg[i] <= df.vx && df.table.y_deg[i] <= df.vy {
                assert_relative_eq!(df.c[i], expected.c[i], epsilon = 1e-13, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mixed_partials_match_finite_differences() {
        // f(x,y) = sqrt(y1² + y2² + x1²y2²) / (1 + x2²): probe a deep mixed
        // partial against central finite differences of the scalar closure.
        let eval = |x: &[f64], y: &[f64]| -> f64 {
            (y[0] * y[0] + y[1] * y[1] + x[0] * x[0] * y[1] * y[1]).sqrt()
                / (1.0 + x[1] * x[1])
        };
        let x0 = [0.4, -0.3];
        let y0 = [1.2, 0.9];
        let t = jet_table(2, 2, 4);
        let x = seed_x(&t, &x0);
        let y = seed_y(&t, &y0);
        let f = y[0]
            .mul(&y[0])
            .add(&y[1].mul(&y[1]))
            .add(&x[0].mul(&x[0]).mul(&y[1]).mul(&y[1]))
            .sqrt()
            .div(&Jet::constant(&t, 1.0).add(&x[1].mul(&x[1])));

        // ∂³f/∂x1∂y1∂y2 by nested central differences.
        let h = 1e-3;
        let d_y1y2 = |x: &[f64]| {
            let mut fd = 0.0;
            for (sy1, wy1) in [(1.0, 1.0), (-1.0, -1.0)] {
                for (sy2, wy2) in [(1.0, 1.0), (-1.0, -1.0)] {
                    let yy = [y0[0] + sy1 * h, y0[1] + sy2 * h];
                    fd += wy1 * wy2 * eval(x, &yy);
                }
            }
            fd / (4.0 * h * h)
        };
        let fd3 = (d_y1y2(&[x0[0] + h, x0[1]]) - d_y1y2(&[x0[0] - h, x0[1]])) / (2.0 * h);
        assert_relative_eq!(f.partial_xy(&[0], &[0, 1]), fd3, max_relative = 1e-4);
    }

    #[test]
    #[should_panic(expected = "beyond jet validity")]
    fn extracting_beyond_validity_panics() {
        let t = jet_table(1, 1, 3);
        let y = seed_y(&t, &[2.0]);
        let f = y[0].mul(&y[0]);
        let df = f.deriv_y(0); // validity now (1, 2)
        let _ = df.partial(&[0], &[3]);
    }
}
