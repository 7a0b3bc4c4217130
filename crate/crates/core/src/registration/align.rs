use nalgebra::{Matrix3, Vector3};

use super::RegistrationError;
use crate::cloud::Point3;
use crate::transform::RigidTransform;

/// Relative singular-value floor below which the cross-covariance is treated
/// as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Weighted least-squares rigid transform mapping `pairs[i].0` onto `pairs[i].1`.
///
/// Closed-form solution through the SVD of the weighted cross-covariance;
/// the determinant sign is corrected so the result is never a reflection.
/// `weights = None` weighs every pair equally.
pub fn svd_rigid_align(
    pairs: &[(Point3, Point3)],
    weights: Option<&[f64]>,
) -> Result<RigidTransform, RegistrationError> {
    if let Some(w) = weights {
        if w.len() != pairs.len() || w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(RegistrationError::DegenerateGeometry(
                "weights must be finite, non-negative and one per pair".into(),
            ));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..pairs.len()).map(weight).sum();
    if pairs.is_empty() || total <= 0.0 {
        return Err(RegistrationError::DegenerateGeometry(
            "no weighted correspondences".into(),
        ));
    }

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for (i, (s, d)) in pairs.iter().enumerate() {
        let w = weight(i);
        src_mean += w * s.coords;
        dst_mean += w * d.coords;
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cov = Matrix3::zeros();
    for (i, (s, d)) in pairs.iter().enumerate() {
        cov += weight(i) * (s.coords - src_mean) * (d.coords - dst_mean).transpose();
    }

    let svd = cov.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(RegistrationError::DegenerateGeometry(format!(
            "cross-covariance rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    // cov = U S Vᵀ over (src, dst), so R = V D Uᵀ with D flipping the axis
    // of the smallest singular value when V Uᵀ is a reflection
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap_or(2);
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{sample_unit_axis, BenchRng};
    use rand::{Rng, SeedableRng};

    fn random_points(rng: &mut BenchRng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect()
    }

    fn assert_close(a: &RigidTransform, b: &RigidTransform, tol: f64) {
        assert!(
            (a.rotation - b.rotation).abs().max() < tol,
            "{a:?} vs {b:?}"
        );
        assert!((a.translation - b.translation).abs().max() < tol);
    }

    #[test]
    fn exact_recovery_on_noiseless_copies() {
        let mut rng = BenchRng::seed_from_u64(10);
        for _ in 0..50 {
            let axis = sample_unit_axis(&mut rng);
            let mut t = RigidTransform::from_axis_angle(&axis, rng.random_range(0.0..3.1));
            t.translation = Vector3::new(1.0, -4.0, 2.5);
            let src = random_points(&mut rng, 40);
            let pairs: Vec<_> = src.iter().map(|p| (*p, t.transform_point(p))).collect();
            let est = svd_rigid_align(&pairs, None).unwrap();
            assert_close(&est, &t, 1e-9);
        }
    }

    #[test]
    fn identity_correspondences() {
        let mut rng = BenchRng::seed_from_u64(11);
        let src = random_points(&mut rng, 10);
        let pairs: Vec<_> = src.iter().map(|p| (*p, *p)).collect();
        let est = svd_rigid_align(&pairs, None).unwrap();
        assert_close(&est, &RigidTransform::identity(), 1e-12);
    }

    #[test]
    fn planar_configuration_avoids_reflection() {
        // z = 0 plane, rotated in-plane by 30 degrees and shifted
        let src: Vec<Point3> = [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.5, 2.0], [-1.0, 0.5]]
            .iter()
            .map(|c| Point3::new(c[0], c[1], 0.0))
            .collect();
        let mut t = RigidTransform::from_axis_angle(&Vector3::z(), 30f64.to_radians());
        t.translation = Vector3::new(0.3, -0.2, 0.0);
        let pairs: Vec<_> = src.iter().map(|p| (*p, t.transform_point(p))).collect();
        let est = svd_rigid_align(&pairs, None).unwrap();
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-12);
        assert_close(&est, &t, 1e-12);
        let residual: f64 = pairs
            .iter()
            .map(|(s, d)| (est.transform_point(s) - d).norm())
            .sum();
        assert!(residual < 1e-12);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let mut rng = BenchRng::seed_from_u64(12);
        let src = random_points(&mut rng, 30);
        let dst = random_points(&mut rng, 30);
        let pairs: Vec<_> = src.into_iter().zip(dst).collect();
        let a = svd_rigid_align(&pairs, None).unwrap();
        let b = svd_rigid_align(&pairs, Some(&vec![2.5; 30])).unwrap();
        assert_close(&a, &b, 1e-12);
    }

    #[test]
    fn weights_select_the_heavy_subset() {
        let mut rng = BenchRng::seed_from_u64(13);
        let t = RigidTransform::from_axis_angle(&Vector3::x(), 0.4);
        let src = random_points(&mut rng, 20);
        let mut pairs: Vec<_> = src.iter().map(|p| (*p, t.transform_point(p))).collect();
        let mut w = vec![1.0; 20];
        for (i, p) in pairs.iter_mut().enumerate().take(5) {
            p.1 += Vector3::new(5.0, 5.0, 5.0);
            w[i] = 0.0;
        }
        let est = svd_rigid_align(&pairs, Some(&w)).unwrap();
        assert_close(&est, &t, 1e-9);
    }

    #[test]
    fn collinear_input_is_degenerate() {
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                let p = Point3::new(i as f64, 0.0, 0.0);
                (p, p)
            })
            .collect();
        assert!(matches!(
            svd_rigid_align(&pairs, None),
            Err(RegistrationError::DegenerateGeometry(_))
        ));
        assert!(svd_rigid_align(&[], None).is_err());
    }
}
