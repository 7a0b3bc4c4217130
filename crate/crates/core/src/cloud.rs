//! Point-cloud container and the basic geometry every other module builds on.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use thiserror::Error;

/// A 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("voxel leaf size must be positive, got {0}")]
    NonPositiveLeaf(f64),
}

/// An ordered list of points.
///
/// Index `i` identifies the same physical point across rigid transforms, so
/// every operation here keeps the order stable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_label: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_label: String::new(),
        }
    }

    pub fn with_label(points: Vec<Point3>, label: impl Into<String>) -> Self {
        Self {
            points,
            frame_label: label.into(),
        }
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Self {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Result<Point3, CloudError> {
        centroid(&self.points)
    }

    /// Axis-aligned bounds as `(min, max)` corners.
    pub fn bounds(&self) -> Result<(Point3, Point3), CloudError> {
        let first = self.points.first().ok_or(CloudError::EmptyCloud)?;
        let mut lo = *first;
        let mut hi = *first;
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Ok((lo, hi))
    }

    /// Largest distance from the centroid to any point.
    pub fn radius(&self) -> Result<f64, CloudError> {
        let c = self.centroid()?;
        Ok(self
            .points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max))
    }

    /// Concatenate two clouds, keeping `self`'s points first.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PointCloud::with_label(points, self.frame_label.clone())
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        Self::new(points)
    }
}

pub fn centroid(points: &[Point3]) -> Result<Point3, CloudError> {
    if points.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Ok(Point3::from(sum / points.len() as f64))
}

/// Replace every occupied voxel by the centroid of its members.
///
/// The grid is anchored at the cloud's minimum corner, and the output is
/// ordered by voxel index (x, then y, then z).
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud, CloudError> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(CloudError::NonPositiveLeaf(leaf));
    }
    let (lo, _) = cloud.bounds()?;
    let mut voxels: BTreeMap<[i64; 3], (Vector3<f64>, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let key = voxel_key(p, &lo, leaf);
        let entry = voxels.entry(key).or_insert((Vector3::zeros(), 0));
        entry.0 += p.coords;
        entry.1 += 1;
    }
    let points = voxels
        .into_values()
        .map(|(sum, n)| Point3::from(sum / n as f64))
        .collect();
    Ok(PointCloud::with_label(points, cloud.frame_label.clone()))
}

/// Integer voxel coordinates of `p` in a grid of cell size `leaf` anchored at `origin`.
pub fn voxel_key(p: &Point3, origin: &Point3, leaf: f64) -> [i64; 3] {
    let mut key = [0i64; 3];
    for k in 0..3 {
        key[k] = ((p[k] - origin[k]) / leaf).floor() as i64;
    }
    key
}
