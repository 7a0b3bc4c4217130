use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use regbench::transform::{
    problem_rng, sample_perturbation, sample_unit_axis, BenchRng, PerturbationBounds, Regime,
};
use regbench::{Point3, RigidTransform};

fn ks_uniform(mut samples: Vec<f64>, lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn axes_are_isotropic() {
    let mut rng = BenchRng::seed_from_u64(1);
    let n = 100_000;
    let mut sum = Vector3::zeros();
    let mut octants = [0usize; 8];
    for _ in 0..n {
        let a = sample_unit_axis(&mut rng);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        sum += a;
        let o = (a.x > 0.0) as usize | ((a.y > 0.0) as usize) << 1 | ((a.z > 0.0) as usize) << 2;
        octants[o] += 1;
    }
    assert!((sum / n as f64).norm() < 0.01);
    for c in octants {
        let share = c as f64 / n as f64;
        assert!((share - 0.125).abs() < 0.005, "{octants:?}");
    }
}

#[test]
fn rotation_magnitudes_pass_ks() {
    for regime in [Regime::Local, Regime::Global] {
        let bounds = PerturbationBounds::with_translation(regime, 0.0, 1.0);
        let angles: Vec<f64> = (0..3000u32)
            .map(|k| {
                let mut rng = problem_rng(42, regime, k / 30, k % 30);
                sample_perturbation(&bounds, &Point3::origin(), &mut rng)
                    .unwrap()
                    .rotation_angle()
            })
            .collect();
        let d = ks_uniform(angles, bounds.rot_min, bounds.rot_max);
        assert!(d < 0.035, "{regime}: {d}");
    }
}

#[test]
fn streams_are_independent_of_order() {
    let bounds = PerturbationBounds::with_translation(Regime::Local, 0.0, 2.0);
    let p = Point3::new(1.0, 2.0, 3.0);
    let forward: Vec<_> = (0..5)
        .map(|k| sample_perturbation(&bounds, &p, &mut problem_rng(3, Regime::Local, 2, k)).unwrap())
        .collect();
    let backward: Vec<_> = (0..5)
        .rev()
        .map(|k| sample_perturbation(&bounds, &p, &mut problem_rng(3, Regime::Local, 2, k)).unwrap())
        .collect();
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a, b);
    }
    let other = sample_perturbation(&bounds, &p, &mut problem_rng(3, Regime::Global, 2, 0)).unwrap();
    assert_ne!(forward[0], other);
}

proptest! {
    #[test]
    fn sampled_perturbations_respect_bounds(seed in any::<u64>(), tmax in 0.0f64..5.0, global in any::<bool>()) {
        let regime = if global { Regime::Global } else { Regime::Local };
        let bounds = PerturbationBounds::with_translation(regime, 0.0, tmax);
        let mut rng = BenchRng::seed_from_u64(seed);
        let pivot = Point3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let t = sample_perturbation(&bounds, &pivot, &mut rng).unwrap();
        let angle = t.rotation_angle();
        prop_assert!(angle >= bounds.rot_min - 1e-9 && angle <= bounds.rot_max + 1e-9);
        // the pivot only moves by the translation component
        let moved = (t.transform_point(&pivot) - pivot).norm();
        prop_assert!(moved <= tmax + 1e-9);
        let r = t.rotation;
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rigid_motions_preserve_distances(seed in any::<u64>()) {
        let mut rng = BenchRng::seed_from_u64(seed);
        let axis = sample_unit_axis(&mut rng);
        let mut t = RigidTransform::from_axis_angle(&axis, rng.random_range(-4.0..4.0));
        t.translation = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let a = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let b = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let d0 = (a - b).norm();
        let d1 = (t.transform_point(&a) - t.transform_point(&b)).norm();
        prop_assert!((d0 - d1).abs() < 1e-9);
        let back = t.inverse().transform_point(&t.transform_point(&a));
        prop_assert!((back - a).norm() < 1e-9);
    }

    #[test]
    fn row_major_round_trip(seed in any::<u64>()) {
        let mut rng = BenchRng::seed_from_u64(seed);
        let mut t = RigidTransform::from_axis_angle(&sample_unit_axis(&mut rng), rng.random_range(0.0..3.1));
        t.translation = Vector3::new(rng.random_range(-50.0..50.0), rng.random::<f64>(), -rng.random::<f64>());
        let back = RigidTransform::from_row_major12(&t.to_row_major12()).unwrap();
        prop_assert_eq!(back, t);
        let text: Vec<String> = t.to_row_major12().iter().map(|v| v.to_string()).collect();
        let parsed: Vec<f64> = text.iter().map(|s| s.parse().unwrap()).collect();
        let again = RigidTransform::from_row_major12(&parsed.try_into().unwrap()).unwrap();
        prop_assert_eq!(again, t);
    }
}
