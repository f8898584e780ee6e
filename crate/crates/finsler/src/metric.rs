//! Metric models: the catalog, jet evaluation of `F²`, the fundamental
//! tensor, the Cartan torsion, and Minkowski-norm validation.
//!
//! A [`MetricModel`] owns one Finsler metric on one coordinate chart and
//! exposes jets of `F²(x, y)` to order `ky ≤ 7` in `y` and `kx ≤ 2` in `x`
//! at any `(x, y ≠ 0)` of its domain. Everything downstream (sprays,
//! connections, curvature) is derived from those jets.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use crate::error::{FinslerError, Result};
use crate::jets::{jet_table, seed_x, seed_y, Jet, JetTable};
use crate::numerics;
use crate::tensor::{DenseTensor, Slot};

/// Maximum jet orders supported by the built-in catalog.
pub const MAX_KX: usize = 2;
pub const MAX_KY: usize = 7;

/// Chart domain in R^n.
#[derive(Debug, Clone, Serialize)]
pub enum ChartDomain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ChartDomain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ChartDomain::Ball { center, radius } => {
                let d2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 < radius * radius
            }
            ChartDomain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| v > l && v < h),
        }
    }

    /// Characteristic length used to scale convergence thresholds.
    pub fn scale(&self) -> f64 {
        match self {
            ChartDomain::Ball { radius, .. } => *radius,
            ChartDomain::Box { lo, hi } => hi
                .iter()
                .zip(lo)
                .map(|(h, l)| 0.5 * (h - l))
                .fold(0.0f64, f64::max),
        }
    }
}

/// x-dependent matrix `a_ij(x)` of a Riemannian model, evaluated in jets.
pub trait RiemannMatrix: Send + Sync {
    /// Row-major `n × n` entries as jets of the chart variables.
    fn entries(&self, x: &[Jet], table: &Arc<JetTable>) -> Vec<Jet>;
    fn preset_name(&self) -> &str;
}

/// `4 δ_ij / (1 + |x|²)²`: round sphere of curvature +1 in the
/// stereographic chart.
struct SphereChart;

/// `4 δ_ij / (1 − |x|²)²`: Poincaré disk of curvature −1.
struct PoincareDisk;

impl RiemannMatrix for SphereChart {
    fn entries(&self, x: &[Jet], table: &Arc<JetTable>) -> Vec<Jet> {
        conformal_entries(x, table, 1.0)
    }
    fn preset_name(&self) -> &str {
        "sphere"
    }
}

impl RiemannMatrix for PoincareDisk {
    fn entries(&self, x: &[Jet], table: &Arc<JetTable>) -> Vec<Jet> {
        conformal_entries(x, table, -1.0)
    }
    fn preset_name(&self) -> &str {
        "poincare"
    }
}

/// `4 δ_ij / (1 + sign·|x|²)²`.
fn conformal_entries(x: &[Jet], table: &Arc<JetTable>, sign: f64) -> Vec<Jet> {
    let n = x.len();
    let mut r2 = Jet::constant(table, 0.0);
    for xi in x {
        r2 = r2.add(&xi.mul(xi));
    }
    let s = r2.scale(sign).add_scalar(1.0);
    let lambda = s.mul(&s).recip().scale(4.0);
    let zero = Jet::constant(table, 0.0);
    let mut out = vec![zero; n * n];
    for (i, slot) in out.iter_mut().enumerate().take(n * n) {
        if i / n == i % n {
            *slot = lambda.clone();
        }
    }
    out
}

/// The metric kernel: evaluates `F²(x, y)` in jet arithmetic.
enum Kernel {
    Euclid,
    Randers { eps: f64 },
    Funk,
    Riemannian { matrix: Arc<dyn RiemannMatrix> },
}

impl Kernel {
    fn f2(&self, x: &[Jet], y: &[Jet], table: &Arc<JetTable>) -> Jet {
        match self {
            Kernel::Euclid => {
                let mut s = Jet::constant(table, 0.0);
                for yi in y {
                    s = s.add(&yi.mul(yi));
                }
                s
            }
            Kernel::Randers { eps } => {
                let mut s = Jet::constant(table, 0.0);
                for yi in y {
                    s = s.add(&yi.mul(yi));
                }
                let f = s.sqrt().add(&y[0].scale(*eps));
                f.mul(&f)
            }
            Kernel::Funk => {
                // F = (sqrt(<x,y>² + |y|²(1−|x|²)) + <x,y>) / (1−|x|²)
                let mut xy = Jet::constant(table, 0.0);
                let mut yy = Jet::constant(table, 0.0);
                let mut xx = Jet::constant(table, 0.0);
                for (xi, yi) in x.iter().zip(y) {
                    xy = xy.add(&xi.mul(yi));
                    yy = yy.add(&yi.mul(yi));
                    xx = xx.add(&xi.mul(xi));
                }
                let one_minus_xx = xx.neg().add_scalar(1.0);
                let disc = xy.mul(&xy).add(&yy.mul(&one_minus_xx));
                let f = disc.sqrt().add(&xy).div(&one_minus_xx);
                f.mul(&f)
            }
            Kernel::Riemannian { matrix } => {
                let n = y.len();
                let a = matrix.entries(x, table);
                let mut s = Jet::constant(table, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        s = s.add(&a[i * n + j].mul(&y[i]).mul(&y[j]));
                    }
                }
                s
            }
        }
    }
}

/// Descriptor for a catalog model, parsed from JSON configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelDescriptor {
    Euclid { n: usize },
    Randers { eps: f64 },
    Funk,
    Riemannian { matrix: String },
}

impl ModelDescriptor {
    /// Parse a descriptor from a JSON object, rejecting unknown keys.
    pub fn from_json(v: &Value) -> Result<ModelDescriptor> {
        let obj = v
            .as_object()
            .ok_or_else(|| FinslerError::Config("model descriptor must be a JSON object".into()))?;
        let name = obj
            .get("model")
            .and_then(Value::as_str)
            .ok_or_else(|| FinslerError::Config("missing string field `model`".into()))?;
        let check_keys = |allowed: &[&str]| -> Result<()> {
            for k in obj.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(FinslerError::Config(format!(
                        "unknown key `{k}` in model descriptor"
                    )));
                }
            }
            Ok(())
        };
        let get_f64 = |key: &str| -> Result<f64> {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| FinslerError::Config(format!("missing numeric field `{key}`")))
        };
        match name {
            "euclid" => {
                check_keys(&["model", "n"])?;
                let n = match obj.get("n") {
                    None => 2,
                    Some(v) => v
                        .as_u64()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| FinslerError::Config("`n` must be a positive integer".into()))?
                        as usize,
                };
                Ok(ModelDescriptor::Euclid { n })
            }
            "randers" => {
                check_keys(&["model", "eps"])?;
                Ok(ModelDescriptor::Randers { eps: get_f64("eps")? })
            }
            "funk" => {
                check_keys(&["model"])?;
                Ok(ModelDescriptor::Funk)
            }
            "riemannian" => {
                check_keys(&["model", "matrix"])?;
                let matrix = obj
                    .get("matrix")
                    .and_then(Value::as_str)
                    .ok_or_else(|| FinslerError::Config("missing string field `matrix`".into()))?;
                Ok(ModelDescriptor::Riemannian {
                    matrix: matrix.to_string(),
                })
            }
            other => Err(FinslerError::UnknownModel(other.to_string())),
        }
    }

    pub fn from_json_str(s: &str) -> Result<ModelDescriptor> {
        let v: Value = serde_json::from_str(s)
            .map_err(|e| FinslerError::Config(format!("malformed JSON: {e}")))?;
        ModelDescriptor::from_json(&v)
    }
}

/// A Finsler metric on one coordinate chart.
pub struct MetricModel {
    name: String,
    dim: usize,
    chart: ChartDomain,
    /// Radius around the chart center in which validation and verification
    /// samples are drawn.
    sample_radius: f64,
    reversible: bool,
    kernel: Kernel,
    max_kx: usize,
    max_ky: usize,
}

impl fmt::Debug for MetricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricModel({}, dim {})", self.name, self.dim)
    }
}

/// Guard radius below which fiber vectors are rejected; `F` is only smooth
/// on the slit tangent bundle.
pub fn guard_radius(y: &[f64]) -> f64 {
    1e-8 * (1.0 + numerics::norm_inf(y))
}

impl MetricModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn sample_radius(&self) -> f64 {
        self.sample_radius
    }

    pub fn reversible(&self) -> bool {
        self.reversible
    }

    pub fn max_orders(&self) -> (usize, usize) {
        (self.max_kx, self.max_ky)
    }

    fn check_args(&self, x: &[f64], y: &[f64], kx: usize, ky: usize) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(FinslerError::DimensionMismatch {
                expected: self.dim,
                got: if x.len() != self.dim { x.len() } else { y.len() },
            });
        }
        if !self.chart.contains(x) {
            return Err(FinslerError::OutsideChart { x: x.to_vec() });
        }
        let ny = numerics::norm_inf(y);
        if ny < guard_radius(y) || !ny.is_finite() {
            return Err(FinslerError::GuardRadius { norm: ny });
        }
        if kx > self.max_kx || ky > self.max_ky {
            return Err(FinslerError::JetDepth {
                kx,
                ky,
                max_kx: self.max_kx,
                max_ky: self.max_ky,
            });
        }
        Ok(())
    }

    /// Jet of `F²` at `(x, y)` with the requested orders.
    pub fn f2_jet(&self, x: &[f64], y: &[f64], kx: usize, ky: usize) -> Result<Jet> {
        self.check_args(x, y, kx, ky)?;
        let table = jet_table(self.dim, kx, ky);
        let xj = seed_x(&table, x);
        let yj = seed_y(&table, y);
        Ok(self.kernel.f2(&xj, &yj, &table))
    }

    /// Pointwise `F²(x, y)`.
    pub fn f2(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.f2_jet(x, y, 0, 0)?.value())
    }

    /// Pointwise `F(x, y)`.
    pub fn f(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.f2(x, y)?.max(0.0).sqrt())
    }

    /// Fundamental tensor `g_ij(x, y) = ½ [F²]_{y^i y^j}`.
    pub fn fundamental_tensor(&self, t: &Tangent) -> Result<DenseTensor> {
        let jet = self.f2_jet(&t.x, &t.y, 0, 2)?;
        let n = self.dim;
        let mut g = DenseTensor::zeros(n, &[Slot::Down, Slot::Down]);
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * jet.partial_y(&[i, j]);
                g.set(&[i, j], v);
                g.set(&[j, i], v);
            }
        }
        let eigs = numerics::symmetric_eigenvalues(g.as_matrix(), n);
        if eigs[0] <= 0.0 {
            return Err(FinslerError::NotPositiveDefinite {
                x: t.x.clone(),
                y: t.y.clone(),
                min_eig: eigs[0],
            });
        }
        Ok(g)
    }

    /// Inner product `g_y(u, w)` with reference vector `y` at `x`.
    pub fn g_inner(&self, x: &[f64], y: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        let jet = self.f2_jet(x, y, 0, 2)?;
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += 0.5 * jet.partial_y(&[i, j]) * u[i] * w[j];
            }
        }
        Ok(s)
    }

    /// Cartan torsion `C_ijk = ¼ [F²]_{y^i y^j y^k}`, totally symmetric.
    pub fn cartan_torsion(&self, t: &Tangent) -> Result<DenseTensor> {
        let jet = self.f2_jet(&t.x, &t.y, 0, 3)?;
        let n = self.dim;
        let mut c = DenseTensor::zeros(n, &[Slot::Down, Slot::Down, Slot::Down]);
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let v = 0.25 * jet.partial_y(&[i, j, k]);
                    for perm in [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                        c.set(&perm, v);
                    }
                }
            }
        }
        Ok(c)
    }

    /// Draw a validation/verification sample point in the chart and a fiber
    /// vector of the given scale.
    pub fn sample_tangent<R: rand::Rng>(&self, rng: &mut R) -> Tangent {
        let n = self.dim;
        loop {
            let x: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-self.sample_radius..self.sample_radius))
                .collect();
            if !self.chart.contains(&x) || numerics::norm(&x) > self.sample_radius {
                continue;
            }
            let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ny = numerics::norm(&y);
            if ny < 0.1 {
                continue;
            }
            let y: Vec<f64> = y.iter().map(|v| v * scale / ny).collect();
            if let Ok(t) = Tangent::new(self, x, y) {
                return t;
            }
        }
    }
}

/// A point of the slit tangent bundle: chart coordinates `x` and a fiber
/// vector `y ≠ 0`.
#[derive(Debug, Clone)]
pub struct Tangent {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Tangent {
    pub fn new(model: &MetricModel, x: Vec<f64>, y: Vec<f64>) -> Result<Tangent> {
        model.check_args(&x, &y, 0, 0)?;
        Ok(Tangent { x, y })
    }
}

/// A flag: base tangent `(x, y)` and a transverse vector `v`, with the
/// orthogonal component `v⊥ = v − g_y(v, y) y / F(y)²` and
/// `τ = sqrt(g_y(v⊥, v⊥))`.
#[derive(Debug, Clone)]
pub struct Flag {
    pub base: Tangent,
    pub v: Vec<f64>,
    pub v_perp: Vec<f64>,
    pub tau: f64,
}

impl Flag {
    pub fn new(model: &MetricModel, base: Tangent, v: Vec<f64>) -> Result<Flag> {
        if v.len() != model.dim() {
            return Err(FinslerError::DimensionMismatch {
                expected: model.dim(),
                got: v.len(),
            });
        }
        let f2 = model.f2(&base.x, &base.y)?;
        let gyv = model.g_inner(&base.x, &base.y, &base.y, &v)?;
        let gvv = model.g_inner(&base.x, &base.y, &v, &v)?;
        let v_perp = numerics::axpy(&v, -gyv / f2, &base.y);
        let tau2 = gvv - gyv * gyv / f2;
        // Near-degenerate flags are rejected rather than regularized: the
        // weighted flag curvature blows up like τ^{-3} and regularization
        // would mask it.
        if tau2 <= 1e-12 * gvv {
            return Err(FinslerError::DegenerateFlag(format!(
                "tau² = {tau2:.3e} below 1e-12·g(v,v) = {:.3e}",
                1e-12 * gvv
            )));
        }
        Ok(Flag {
            base,
            v,
            v_perp,
            tau: tau2.sqrt(),
        })
    }
}

/// Construct a catalog model from its descriptor, validating parameters and
/// running the Minkowski check on a default sample set.
pub fn make_model(desc: &ModelDescriptor) -> Result<MetricModel> {
    let model = build_unchecked(desc)?;
    let plan = SamplePlan {
        count: 40,
        seed: 0xF1A6,
        scaling_probes: 3,
    };
    let report = check_minkowski(&model, &plan);
    if !report.pass {
        return Err(FinslerError::NotPositiveDefinite {
            x: report.worst_sample_x,
            y: report.worst_sample_y,
            min_eig: report.min_eigenvalue,
        });
    }
    Ok(model)
}

fn build_unchecked(desc: &ModelDescriptor) -> Result<MetricModel> {
    match desc {
        ModelDescriptor::Euclid { n } => {
            if *n == 0 {
                return Err(FinslerError::ParameterRange("euclid needs n >= 1".into()));
            }
            Ok(MetricModel {
                name: format!("euclid({n})"),
                dim: *n,
                chart: ChartDomain::Ball {
                    center: vec![0.0; *n],
                    radius: 1e3,
                },
                sample_radius: 2.0,
                reversible: true,
                kernel: Kernel::Euclid,
                max_kx: MAX_KX,
                max_ky: MAX_KY,
            })
        }
        ModelDescriptor::Randers { eps } => {
            if !(eps.abs() < 1.0) {
                return Err(FinslerError::ParameterRange(format!(
                    "randers needs |eps| < 1, got {eps}"
                )));
            }
            Ok(MetricModel {
                name: format!("randers({eps})"),
                dim: 2,
                chart: ChartDomain::Ball {
                    center: vec![0.0; 2],
                    radius: 1e3,
                },
                sample_radius: 2.0,
                reversible: *eps == 0.0,
                kernel: Kernel::Randers { eps: *eps },
                max_kx: MAX_KX,
                max_ky: MAX_KY,
            })
        }
        ModelDescriptor::Funk => Ok(MetricModel {
            name: "funk".into(),
            dim: 2,
            chart: ChartDomain::Ball {
                center: vec![0.0; 2],
                radius: 1.0,
            },
            sample_radius: 0.8,
            reversible: false,
            kernel: Kernel::Funk,
            max_kx: MAX_KX,
            max_ky: MAX_KY,
        }),
        ModelDescriptor::Riemannian { matrix } => {
            let m: Arc<dyn RiemannMatrix> = match matrix.as_str() {
                "sphere" => Arc::new(SphereChart),
                "poincare" => Arc::new(PoincareDisk),
                other => {
                    return Err(FinslerError::UnknownModel(format!(
                        "riemannian matrix preset `{other}`"
                    )))
                }
            };
            let (chart, sample_radius) = match matrix.as_str() {
                // The stereographic chart covers the sphere minus a point;
                // geodesics through the sampling region stay well inside
                // this ball, while arcs aimed too close to the missing
                // point truncate early instead of dragging the integrator
                // through the coordinate blow-up.
                "sphere" => (
                    ChartDomain::Ball {
                        center: vec![0.0; 2],
                        radius: 40.0,
                    },
                    1.2,
                ),
                _ => (
                    ChartDomain::Ball {
                        center: vec![0.0; 2],
                        radius: 1.0,
                    },
                    0.8,
                ),
            };
            Ok(MetricModel {
                name: format!("riemannian({matrix})"),
                dim: 2,
                chart,
                sample_radius,
                reversible: true,
                kernel: Kernel::Riemannian { matrix: m },
                max_kx: MAX_KX,
                max_ky: MAX_KY,
            })
        }
    }
}

/// Sampling plan for [`check_minkowski`].
#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    /// Number of positive scalings `t` probed per sample for homogeneity.
    pub scaling_probes: usize,
}

/// One row of the Minkowski validation report.
#[derive(Debug, Clone, Serialize)]
pub struct MinkowskiSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// max over probed t of |F(x, t·y) − t·F(x, y)| / (t·F(x, y)).
    pub homogeneity_residual: f64,
    pub min_eigenvalue: f64,
    /// Relative disagreement of `g` extracted from jets of different orders.
    pub jet_consistency: f64,
}

/// Validation report of the Minkowski-norm conditions, sampled.
#[derive(Debug, Clone, Serialize)]
pub struct MinkowskiReport {
    pub samples: Vec<MinkowskiSample>,
    pub homogeneity_tol: f64,
    pub jet_consistency_tol: f64,
    pub max_homogeneity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_jet_inconsistency: f64,
    pub worst_sample_x: Vec<f64>,
    pub worst_sample_y: Vec<f64>,
    pub pass: bool,
}

/// Check positive 1-homogeneity, strong convexity, and jet consistency on a
/// sampled set. Failures are reported, not thrown.
pub fn check_minkowski(model: &MetricModel, plan: &SamplePlan) -> MinkowskiReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(plan.seed);
    let homogeneity_tol = 1e-10;
    let jet_consistency_tol = 1e-9;

    let mut samples = Vec::with_capacity(plan.count);
    let mut worst = (0usize, f64::INFINITY);
    for idx in 0..plan.count.max(1) {
        let t = model.sample_tangent(&mut rng);
        let f = model.f(&t.x, &t.y).unwrap_or(f64::NAN);
        let mut hres = 0.0f64;
        for _ in 0..plan.scaling_probes.max(1) {
            use rand::Rng;
            let s = 10f64.powf(rng.gen_range(-1.0..1.0));
            if let Ok(fs) = model.f(&t.x, &t.y.iter().map(|v| v * s).collect::<Vec<_>>()) {
                hres = hres.max((fs - s * f).abs() / (s * f).abs().max(1e-300));
            } else {
                hres = f64::INFINITY;
            }
        }
        let n = model.dim();
        let (min_eig, jet_consistency) = match (
            model.f2_jet(&t.x, &t.y, 0, 2),
            model.f2_jet(&t.x, &t.y, 1.min(MAX_KX), 4.min(MAX_KY)),
        ) {
            (Ok(lo), Ok(hi)) => {
                let mut g = vec![0.0; n * n];
                let mut defect = 0.0f64;
                let mut scale = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let a = 0.5 * lo.partial_y(&[i, j]);
                        let b = 0.5 * hi.partial_y(&[i, j]);
                        g[i * n + j] = a;
                        defect = defect.max((a - b).abs());
                        scale = scale.max(a.abs());
                    }
                }
                let eigs = numerics::symmetric_eigenvalues(&g, n);
                (eigs[0], defect / (scale + 1.0))
            }
            _ => (f64::NAN, f64::NAN),
        };
        if min_eig < worst.1 || !min_eig.is_finite() {
            worst = (idx, min_eig);
        }
        samples.push(MinkowskiSample {
            x: t.x,
            y: t.y,
            homogeneity_residual: hres,
            min_eigenvalue: min_eig,
            jet_consistency,
        });
    }

    let max_h = samples
        .iter()
        .map(|s| s.homogeneity_residual)
        .fold(0.0f64, f64::max);
    let min_e = samples
        .iter()
        .map(|s| s.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let max_j = samples
        .iter()
        .map(|s| s.jet_consistency)
        .fold(0.0f64, f64::max);
    let pass = max_h <= homogeneity_tol
        && min_e.is_finite()
        && min_e > 0.0
        && max_j <= jet_consistency_tol;
    let w = &samples[worst.0];
    MinkowskiReport {
        homogeneity_tol,
        jet_consistency_tol,
        max_homogeneity_residual: max_h,
        min_eigenvalue: min_e,
        max_jet_inconsistency: max_j,
        worst_sample_x: w.x.clone(),
        worst_sample_y: w.y.clone(),
        pass,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euclid_norm_is_pythagorean() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        assert_relative_eq!(m.f(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn randers_value_at_origin() {
        let m = make_model(&ModelDescriptor::Randers { eps: 0.5 }).unwrap();
        assert_relative_eq!(m.f(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.5);
        // Non-reversibility: F(-y) = |y| - eps = 0.5.
        assert_relative_eq!(m.f(&[0.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn funk_reduces_to_euclidean_at_origin() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        assert_relative_eq!(m.f(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(
            m.f(&[0.0, 0.0], &[0.6, 0.8]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn randers_out_of_range_rejected() {
        let err = make_model(&ModelDescriptor::Randers { eps: 1.5 }).unwrap_err();
        assert!(matches!(err, FinslerError::ParameterRange(_)));
    }

    #[test]
    fn euclid_fundamental_tensor_is_identity() {
        let m = make_model(&ModelDescriptor::Euclid { n: 3 }).unwrap();
        let t = Tangent::new(&m, vec![0.1, 0.2, -0.3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = m.fundamental_tensor(&t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(g.get(&[i, j]), expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn riemannian_g_matches_matrix_and_ignores_y() {
        let m = make_model(&ModelDescriptor::Riemannian {
            matrix: "poincare".into(),
        })
        .unwrap();
        let x = vec![0.3, -0.2];
        let lam = 4.0 / (1.0 - 0.13f64).powi(2);
        for y in [vec![1.0, 0.0], vec![-0.3, 0.7]] {
            let t = Tangent::new(&m, x.clone(), y).unwrap();
            let g = m.fundamental_tensor(&t).unwrap();
            assert_relative_eq!(g.get(&[0, 0]), lam, max_relative = 1e-12);
            assert_relative_eq!(g.get(&[1, 1]), lam, max_relative = 1e-12);
            assert_relative_eq!(g.get(&[0, 1]), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn riemannian_cartan_torsion_vanishes() {
        let m = make_model(&ModelDescriptor::Riemannian {
            matrix: "sphere".into(),
        })
        .unwrap();
        let t = Tangent::new(&m, vec![0.4, 0.1], vec![0.3, -0.9]).unwrap();
        let c = m.cartan_torsion(&t).unwrap();
        assert!(c.max_abs() <= 1e-9, "max |C| = {}", c.max_abs());
    }

    #[test]
    fn cartan_contraction_with_y_vanishes() {
        let m = make_model(&ModelDescriptor::Randers { eps: 0.5 }).unwrap();
        let t = Tangent::new(&m, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let c = m.cartan_torsion(&t).unwrap();
        let cy = c.contract(2, &t.y);
        assert!(cy.max_abs() / (c.max_abs() + 1.0) <= 1e-9);
    }

    #[test]
    fn fundamental_tensor_reproduces_f_squared() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let t = Tangent::new(&m, vec![0.3, 0.0], vec![1.0, 0.2]).unwrap();
        let f2 = m.f2(&t.x, &t.y).unwrap();
        let gyy = m.g_inner(&t.x, &t.y, &t.y, &t.y).unwrap();
        assert_relative_eq!(gyy, f2, max_relative = 1e-12);
    }

    #[test]
    fn check_minkowski_passes_on_catalog() {
        for desc in [
            ModelDescriptor::Euclid { n: 3 },
            ModelDescriptor::Randers { eps: 0.99 },
            ModelDescriptor::Funk,
        ] {
            let m = build_unchecked(&desc).unwrap();
            let plan = SamplePlan {
                count: 100,
                seed: 7,
                scaling_probes: 3,
            };
            let rep = check_minkowski(&m, &plan);
            assert!(rep.pass, "{desc:?}: {rep:?}");
        }
    }

    #[test]
    fn forced_bad_randers_fails_positive_definiteness() {
        // |eps| >= 1 breaks strong convexity; bypass the constructor check.
        let m = MetricModel {
            name: "randers(1.5)".into(),
            dim: 2,
            chart: ChartDomain::Ball {
                center: vec![0.0; 2],
                radius: 10.0,
            },
            sample_radius: 2.0,
            reversible: false,
            kernel: Kernel::Randers { eps: 1.5 },
            max_kx: MAX_KX,
            max_ky: MAX_KY,
        };
        let plan = SamplePlan {
            count: 100,
            seed: 11,
            scaling_probes: 2,
        };
        let rep = check_minkowski(&m, &plan);
        assert!(!rep.pass);
        assert!(rep.min_eigenvalue <= 0.0);
    }

    #[test]
    fn guard_radius_rejects_tiny_fibers() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let err = m.f(&[0.0, 0.0], &[1e-9, 0.0]).unwrap_err();
        assert!(matches!(err, FinslerError::GuardRadius { .. }));
    }

    #[test]
    fn descriptor_rejects_unknown_keys() {
        let v: Value = serde_json::from_str(r#"{"model":"funk","extra":1}"#).unwrap();
        assert!(matches!(
            ModelDescriptor::from_json(&v),
            Err(FinslerError::Config(_))
        ));
        let v: Value = serde_json::from_str(r#"{"model":"nonsense"}"#).unwrap();
        assert!(matches!(
            ModelDescriptor::from_json(&v),
            Err(FinslerError::UnknownModel(_))
        ));
    }

    #[test]
    fn flag_rejects_parallel_vectors() {
        let m = make_model(&ModelDescriptor::Euclid { n: 2 }).unwrap();
        let t = Tangent::new(&m, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let err = Flag::new(&m, t, vec![2.0, 2.0]).unwrap_err();
        assert!(matches!(err, FinslerError::DegenerateFlag(_)));
    }

    #[test]
    fn flag_perp_component_is_orthogonal() {
        let m = make_model(&ModelDescriptor::Funk).unwrap();
        let t = Tangent::new(&m, vec![0.2, 0.1], vec![0.8, -0.3]).unwrap();
        let flag = Flag::new(&m, t.clone(), vec![0.1, 0.9]).unwrap();
        let ortho = m.g_inner(&t.x, &t.y, &flag.v_perp, &t.y).unwrap();
        assert!(ortho.abs() < 1e-12, "g(v_perp, y) = {ortho}");
        assert!(flag.tau > 0.0);
    }
}
