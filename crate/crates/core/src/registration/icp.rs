use std::time::Instant;

use super::{
    associate, mean_distance_after, prepare, svd_rigid_align, RegistrarConfig,
    RegistrationResult, Status,
};
use crate::cloud::{Point3, PointCloud};
use crate::transform::RigidTransform;

/// Per-iteration bookkeeping of an ICP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub kept: usize,
    /// Root-mean-square association distance before and after the update,
    /// both over the same kept associations.
    pub rms_before: f64,
    pub rms_after: f64,
    pub mean_before: f64,
    pub mean_after: f64,
}

/// Point-to-point ICP.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    config: &RegistrarConfig,
) -> RegistrationResult {
    icp_traced(source, target, initial, config).0
}

/// [`icp`] plus one [`IterationTrace`] per completed iteration.
pub fn icp_traced(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    config: &RegistrarConfig,
) -> (RegistrationResult, Vec<IterationTrace>) {
    let start = Instant::now();
    let mut trace = Vec::new();
    let prepared = match prepare(source, target, config) {
        Ok(p) => p,
        Err(e) => return (RegistrationResult::failed(initial, 0, start, e), trace),
    };

    let mut current = *initial;
    let mut residual = f64::NAN;
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        let moved: Vec<Point3> = prepared
            .source
            .iter()
            .map(|p| current.transform_point(p))
            .collect();
        let corr = match associate(&prepared, &moved, config, it) {
            Ok(c) => c,
            Err(e) => return (RegistrationResult::failed(&current, it, start, e), trace),
        };
        let pairs: Vec<(Point3, Point3)> = corr.iter().map(|c| (c.source, c.target)).collect();
        let update = match svd_rigid_align(&pairs, None) {
            Ok(u) => u,
            Err(e) => return (RegistrationResult::failed(&current, it, start, e), trace),
        };
        current = update.compose(&current).orthonormalized();
        residual = mean_distance_after(&update, &corr);

        let n = corr.len() as f64;
        let rms = |t: &RigidTransform| {
            (corr
                .iter()
                .map(|c| (t.transform_point(&c.source) - c.target).norm_squared())
                .sum::<f64>()
                / n)
                .sqrt()
        };
        trace.push(IterationTrace {
            kept: corr.len(),
            rms_before: rms(&RigidTransform::identity()),
            rms_after: rms(&update),
            mean_before: corr.iter().map(|c| c.distance).sum::<f64>() / n,
            mean_after: residual,
        });

        if update.change_norm() < config.convergence_eps {
            status = Status::Converged;
            break;
        }
    }
    (
        RegistrationResult {
            estimated: current,
            status,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            residual,
            error: None,
        },
        trace,
    )
}
