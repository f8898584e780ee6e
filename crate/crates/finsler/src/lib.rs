//! Numerical engine for Finsler geometry on coordinate charts.
//!
//! The crate computes the full curvature tower of a Finsler metric — the
//! fundamental tensor, Cartan torsion, geodesic spray, Berwald connection
//! and its higher fiber derivatives, Landsberg curvature, Riemann and flag
//! curvature, the T-curvature and its flow derivative, and the weighted flag
//! curvature `K^α` — together with geodesic integration, exponential-map
//! shooting for forward distances, Busemann functions with their
//! support-ray structure, and a sampled convexity certificate built from the
//! curvature infima of a profile over Busemann sublevel sets.
//!
//! Everything is driven by exact truncated Taylor arithmetic (see [`jets`]):
//! the built-in metrics expose jets of `F²` to order 7 in the fiber and 2 in
//! the chart variables, which is enough for five fiber derivatives of the
//! spray. Independent finite-difference and closed-form oracles live in the
//! test suite, never in the evaluation path.

pub mod busemann;
pub mod certificate;
pub mod curvature;
pub mod error;
pub mod geodesic;
pub mod jets;
pub mod metric;
pub mod numerics;
pub mod spray;
pub mod tensor;
pub mod verify;

pub use error::{FinslerError, Result};
pub use metric::{make_model, Flag, MetricModel, ModelDescriptor, Tangent};
