//! Pluggable registration with two reference algorithms: point-to-point ICP
//! and plane-to-plane G-ICP.
//!
//! Both share one outer loop: voxel-downsample both clouds, associate every
//! source point with its nearest target point, drop associations farther than
//! `outlier_factor` times the median distance, solve for a rigid update, and
//! repeat until the update is smaller than `convergence_eps` or the iteration
//! budget runs out. They differ only in how the update is solved.

mod align;
mod covariance;
mod gicp;
mod icp;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::{voxel_downsample, Point3, PointCloud};
use crate::spatial::KdIndex;
use crate::stats::median;
use crate::transform::RigidTransform;

pub use align::svd_rigid_align;
pub use covariance::estimate_covariances;
pub use gicp::{gicp, GicpCost};
pub use icp::{icp, icp_traced, IterationTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("no correspondences left at iteration {0}")]
    NoCorrespondences(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("too few points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("G-ICP inner solver diverged at iteration {0}")]
    SolverDiverged(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input cloud")]
    EmptyCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Icp,
    Gicp,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Icp => "icp",
            Algorithm::Gicp => "gicp",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "icp" => Ok(Algorithm::Icp),
            "gicp" | "g-icp" => Ok(Algorithm::Gicp),
            other => Err(format!("unknown algorithm {other:?} (expected icp|gicp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrarConfig {
    /// Voxel leaf size in meters applied to both clouds before registering.
    pub voxel_leaf: f64,
    pub max_iterations: usize,
    /// Associations farther than this multiple of the median distance are dropped.
    pub outlier_factor: f64,
    /// Associations at or beyond this distance are ignored; `None` for unlimited.
    pub max_corr_distance: Option<f64>,
    /// Stop once an update's rotation angle plus translation norm falls below this.
    pub convergence_eps: f64,
    pub algorithm: Algorithm,
    pub gicp_k_neighbors: usize,
    pub gicp_cov_epsilon: f64,
}

impl Default for RegistrarConfig {
    fn default() -> Self {
        Self {
            voxel_leaf: 0.1,
            max_iterations: 30,
            outlier_factor: 3.0,
            max_corr_distance: None,
            convergence_eps: 1e-6,
            algorithm: Algorithm::Icp,
            gicp_k_neighbors: 20,
            gicp_cov_epsilon: 1e-3,
        }
    }
}

impl RegistrarConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: String| Err(RegistrationError::InvalidConfig(m));
        if !(self.voxel_leaf > 0.0) || !self.voxel_leaf.is_finite() {
            return bad(format!("voxel leaf must be positive, got {}", self.voxel_leaf));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.outlier_factor > 0.0) {
            return bad(format!(
                "outlier factor must be positive, got {}",
                self.outlier_factor
            ));
        }
        if let Some(d) = self.max_corr_distance {
            if !(d > 0.0) {
                return bad(format!("max correspondence distance must be positive, got {d}"));
            }
        }
        if !(self.convergence_eps >= 0.0) {
            return bad("convergence eps must be non-negative".into());
        }
        if self.gicp_k_neighbors < 3 {
            return bad("gicp_k_neighbors must be at least 3".into());
        }
        if !(self.gicp_cov_epsilon > 0.0) {
            return bad("gicp_cov_epsilon must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iters",
            Status::Failed => "failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converged" => Ok(Status::Converged),
            "max_iters" => Ok(Status::MaxIterations),
            "failed" => Ok(Status::Failed),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps the source cloud toward the target (includes the initial guess).
    pub estimated: RigidTransform,
    pub status: Status,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Mean distance of the last kept associations after the last update.
    pub residual: f64,
    pub error: Option<RegistrationError>,
}

impl RegistrationResult {
    pub(crate) fn failed(
        initial: &RigidTransform,
        iterations: usize,
        start: Instant,
        error: RegistrationError,
    ) -> Self {
        Self {
            estimated: *initial,
            status: Status::Failed,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            residual: f64::NAN,
            error: Some(error),
        }
    }
}

/// A registration algorithm under test.
pub trait Registrar: Send + Sync {
    fn name(&self) -> String;

    /// Estimate the transform taking `source` onto `target`, starting from `initial`.
    fn register(
        &self,
        source: &PointCloud,
        target: &PointCloud,
        initial: &RigidTransform,
    ) -> RegistrationResult;
}

#[derive(Debug, Clone)]
pub struct Icp(pub RegistrarConfig);

#[derive(Debug, Clone)]
pub struct Gicp(pub RegistrarConfig);

impl Registrar for Icp {
    fn name(&self) -> String {
        "icp".into()
    }

    fn register(&self, s: &PointCloud, t: &PointCloud, init: &RigidTransform) -> RegistrationResult {
        icp(s, t, init, &self.0)
    }
}

impl Registrar for Gicp {
    fn name(&self) -> String {
        "gicp".into()
    }

    fn register(&self, s: &PointCloud, t: &PointCloud, init: &RigidTransform) -> RegistrationResult {
        gicp(s, t, init, &self.0)
    }
}

/// Registrar selected by `config.algorithm`.
pub fn registrar_for(config: &RegistrarConfig) -> Box<dyn Registrar> {
    match config.algorithm {
        Algorithm::Icp => Box::new(Icp(config.clone())),
        Algorithm::Gicp => Box::new(Gicp(config.clone())),
    }
}

/// A source point (already moved by the current estimate) and its match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub source: Point3,
    pub target: Point3,
    pub distance: f64,
}

/// Keep correspondences whose distance is at most `factor` times the median.
pub fn median_outlier_filter(corr: &[Correspondence], factor: f64) -> Vec<Correspondence> {
    let dists: Vec<f64> = corr.iter().map(|c| c.distance).collect();
    let Some(med) = median(&dists) else {
        return Vec::new();
    };
    let cutoff = factor * med;
    corr.iter().filter(|c| c.distance <= cutoff).copied().collect()
}

/// Downsampled clouds and the target index shared by both registrars.
pub(crate) struct Prepared {
    pub source: PointCloud,
    pub target: PointCloud,
    pub index: KdIndex,
}

pub(crate) fn prepare(
    source: &PointCloud,
    target: &PointCloud,
    config: &RegistrarConfig,
) -> Result<Prepared, RegistrationError> {
    config.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::EmptyCloud);
    }
    let ds = |c: &PointCloud| {
        voxel_downsample(c, config.voxel_leaf)
            .map_err(|e| RegistrationError::InvalidConfig(e.to_string()))
    };
    let source = ds(source)?;
    let target = ds(target)?;
    let index = KdIndex::build(&target).map_err(|_| RegistrationError::EmptyCloud)?;
    Ok(Prepared {
        source,
        target,
        index,
    })
}

/// Nearest-neighbour association of `moved` source points, with the distance
/// cap and median filter applied.
pub(crate) fn associate(
    prepared: &Prepared,
    moved: &[Point3],
    config: &RegistrarConfig,
    iteration: usize,
) -> Result<Vec<Correspondence>, RegistrationError> {
    let all: Vec<Correspondence> = moved
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (j, d) = prepared.index.nearest(p);
            Correspondence {
                source_index: i,
                target_index: j,
                source: *p,
                target: prepared.target.points[j],
                distance: d,
            }
        })
        .collect();
    let capped: Vec<Correspondence> = match config.max_corr_distance {
        Some(max) => all.into_iter().filter(|c| c.distance < max).collect(),
        None => all,
    };
    if capped.is_empty() {
        return Err(RegistrationError::NoCorrespondences(iteration));
    }
    let kept = median_outlier_filter(&capped, config.outlier_factor);
    if kept.is_empty() {
        return Err(RegistrationError::NoCorrespondences(iteration));
    }
    Ok(kept)
}

pub(crate) fn mean_distance_after(update: &RigidTransform, corr: &[Correspondence]) -> f64 {
    let sum: f64 = corr
        .iter()
        .map(|c| (update.transform_point(&c.source) - c.target).norm())
        .sum();
    sum / corr.len() as f64
}
