//! Pose-distance metrics and the overlap measure.
//!
//! The benchmark metric compares two poses of the same cloud point by point:
//! each displacement between homologous points is divided by that point's
//! distance to the centroid, and the ratios are averaged. The result is
//! dimensionless and does not change when the whole problem is rescaled.

use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::{centroid, Point3, PointCloud};
use crate::spatial::KdIndex;
use crate::transform::RigidTransform;

/// Floor applied to the per-point denominator, relative to the cloud's extent.
pub const DENOMINATOR_CLAMP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud is degenerate: all points coincide")]
    DegenerateCloud,
    #[error("overlap threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub delta: f64,
    pub n_used: usize,
}

/// Which cloud's points are counted when measuring overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapDirection {
    SourceToTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapValue {
    pub fraction: f64,
    pub threshold: f64,
    pub direction: OverlapDirection,
}

/// Scale-invariant distance between `t_est · cloud` and `t_gt · cloud`.
///
/// Denominators are clamped to `DENOMINATOR_CLAMP` times the cloud extent,
/// measured as twice the largest centroid distance (a rigid-invariant upper
/// bound on the diameter).
pub fn benchmark_metric(
    cloud: &PointCloud,
    t_est: &RigidTransform,
    t_gt: &RigidTransform,
) -> Result<MetricValue, MetricError> {
    if cloud.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let est: Vec<Point3> = cloud.iter().map(|p| t_est.transform_point(p)).collect();
    let center = centroid(&est).map_err(|_| MetricError::EmptyCloud)?;
    let radii: Vec<f64> = est.iter().map(|p| (p - center).norm()).collect();
    let extent = 2.0 * radii.iter().copied().fold(0.0, f64::max);
    if extent == 0.0 {
        return Err(MetricError::DegenerateCloud);
    }
    let floor = DENOMINATOR_CLAMP * extent;
    let sum: f64 = cloud
        .iter()
        .zip(&est)
        .zip(&radii)
        .map(|((p, e), &r)| (e - t_gt.transform_point(p)).norm() / r.max(floor))
        .sum();
    Ok(MetricValue {
        delta: sum / cloud.len() as f64,
        n_used: cloud.len(),
    })
}

/// Mean displacement in meters between `t_est · cloud` and `t_gt · cloud`.
pub fn unnormalized_metric(
    cloud: &PointCloud,
    t_est: &RigidTransform,
    t_gt: &RigidTransform,
) -> Result<MetricValue, MetricError> {
    if cloud.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let sum: f64 = cloud
        .iter()
        .map(|p| (t_est.transform_point(p) - t_gt.transform_point(p)).norm())
        .sum();
    Ok(MetricValue {
        delta: sum / cloud.len() as f64,
        n_used: cloud.len(),
    })
}

/// Fraction of `source` points with a `target` point closer than `threshold`.
pub fn overlap(
    source: &PointCloud,
    target: &PointCloud,
    threshold: f64,
) -> Result<OverlapValue, MetricError> {
    if target.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let index = KdIndex::build(target).map_err(|_| MetricError::EmptyCloud)?;
    overlap_with_index(source, &index, threshold)
}

/// As [`overlap`], reusing a prebuilt index of the target.
pub fn overlap_with_index(
    source: &PointCloud,
    target: &KdIndex,
    threshold: f64,
) -> Result<OverlapValue, MetricError> {
    if !(threshold > 0.0) {
        return Err(MetricError::NonPositiveThreshold(threshold));
    }
    if source.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let hits = source
        .points
        .par_iter()
        .filter(|p| target.has_within(p, threshold))
        .count();
    Ok(OverlapValue {
        fraction: hits as f64 / source.len() as f64,
        threshold,
        direction: OverlapDirection::SourceToTarget,
    })
}
