//! Toolkit for benchmarking point-cloud registration algorithms.
//!
//! Clouds are stored at their ground-truth poses. A registration problem is a
//! (source, target) pair plus an initial perturbation applied to the source;
//! registrars are scored with [`metrics::benchmark_metric`], a scale-invariant
//! distance between the estimated and ground-truth poses of the source cloud.

pub mod cloud;
pub mod gt_eval;
pub mod metrics;
pub mod pcd;
pub mod problem;
pub mod registration;
pub mod spatial;
pub mod stats;
pub mod synth;
pub mod transform;

pub use cloud::{Point3, PointCloud};
pub use transform::{PerturbationBounds, Regime, RigidTransform};
