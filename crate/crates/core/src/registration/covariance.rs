use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::RegistrationError;
use crate::cloud::PointCloud;
use crate::spatial::KdIndex;

/// Plane-regularized covariance of every point's `k`-neighbourhood.
///
/// The neighbourhood (the point itself included) is decomposed by PCA and its
/// eigenvalues replaced by `(1, 1, epsilon)`, with `epsilon` on the normal
/// direction, so each covariance describes a thin disc tangent to the surface.
pub fn estimate_covariances(
    cloud: &PointCloud,
    k: usize,
    epsilon: f64,
) -> Result<Vec<Matrix3<f64>>, RegistrationError> {
    if k < 3 || cloud.len() < k {
        return Err(RegistrationError::TooFewPoints {
            needed: k.max(3),
            have: cloud.len(),
        });
    }
    let index = KdIndex::build(cloud).map_err(|_| RegistrationError::EmptyCloud)?;
    let base = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, epsilon));
    Ok(cloud
        .points
        .par_iter()
        .map(|p| {
            let neighbours = index.k_nearest(p, k);
            let mean = neighbours
                .iter()
                .fold(Vector3::zeros(), |acc, &(j, _)| acc + cloud.points[j].coords)
                / k as f64;
            let cov = neighbours.iter().fold(Matrix3::zeros(), |acc, &(j, _)| {
                let d = cloud.points[j].coords - mean;
                acc + d * d.transpose()
            }) / k as f64;
            regularize(&cov, &base)
        })
        .collect())
}

fn regularize(cov: &Matrix3<f64>, base: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*cov);
    // order eigenvectors by decreasing eigenvalue so the normal comes last
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = Matrix3::zeros();
    for (col, &src) in order.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(src));
    }
    basis * base * basis.transpose()
}
