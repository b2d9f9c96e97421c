//! Latency-space manifolds.
//!
//! Turns geo-located round-trip latency measurements into thresholded
//! connectivity graphs annotated with Ollivier-Ricci curvature, then
//! optimizes the heights of a grid triangle mesh so that its Gaussian
//! curvature follows the graph curvature. The resulting surface can be
//! queried for geodesic distances, which serve as a latency predictor.
//!
//! The crate is organised as a pipeline:
//!
//! * [`geo`]: great-circle distance/latency and planar projection.
//! * [`netgraph`]: measurement ingestion, residuals, thresholding,
//!   clustering and triangle-inequality-violation handling.
//! * [`ricci`]: exact Wasserstein-1 transport and edge curvature.
//! * [`mesh`]: half-edge grid mesh and discrete differential operators,
//!   including analytic partial derivatives with respect to heights.
//! * [`loss`]: edge balls, curvature and smoothness losses, gradient.
//! * [`optimize`]: L-BFGS height optimization and post-processing.
//! * [`geodesic`]: Steiner-graph surface geodesics and predictor fits.
//! * [`report`]: predictor and stability reports.
//! * [`artifact`] / [`pipeline`]: the exported manifold bundle and the
//!   orchestration that produces it.

pub mod artifact;
pub mod error;
pub mod fixtures;
pub mod geo;
pub mod geodesic;
pub mod loss;
pub mod mesh;
pub mod netgraph;
pub mod optimize;
pub mod pipeline;
pub mod report;
pub mod ricci;
pub mod sparse;

mod par;

pub use error::{Error, Result};
