//! Rigid transforms and the random initial perturbations applied to
//! registration problems.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point3, PointCloud};

/// Orthogonality and determinant tolerance accepted when reading matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("matrix is not a rotation (orthogonality error {orthogonality:.3e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("invalid perturbation bounds: {0}")]
    InvalidBounds(String),
}

/// An element of SE(3): `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from parts, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, TransformError> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` through the origin.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: rot.into_inner(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about the line through `pivot` along `axis`.
    pub fn rotation_about(axis: &Vector3<f64>, angle: f64, pivot: &Point3) -> Self {
        let r = Self::from_axis_angle(axis, angle).rotation;
        Self {
            rotation: r,
            translation: pivot.coords - r * pivot.coords,
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Transform every point, keeping order.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::with_label(
            cloud.points.iter().map(|p| self.transform_point(p)).collect(),
            cloud.frame_label.clone(),
        )
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let cos = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Size of the transform used as an ICP convergence measure: rotation
    /// angle plus translation norm.
    pub fn change_norm(&self) -> f64 {
        self.rotation_angle() + self.translation.norm()
    }

    /// Row-major top three rows of the homogeneous 4x4 matrix.
    pub fn to_row_major12(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ]
    }

    pub fn from_row_major12(v: &[f64; 12]) -> Result<Self, TransformError> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let translation = Vector3::new(v[3], v[7], v[11]);
        Self::new(rotation, translation)
    }

    /// Re-orthonormalize the rotation (SVD projection onto SO(3)).
    pub fn orthonormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: project_to_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major12();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), TransformError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(TransformError::NotARotation {
            orthogonality: f64::INFINITY,
            det: f64::NAN,
        });
    }
    let orthogonality = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if orthogonality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(TransformError::NotARotation { orthogonality, det });
    }
    Ok(())
}

/// Closest rotation matrix to `m` in the Frobenius sense.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Exponential map of a small twist `(omega, v)` as a left update.
pub fn exp_se3_left(omega: &Vector3<f64>, v: &Vector3<f64>) -> RigidTransform {
    let angle = omega.norm();
    let rotation = if angle > 0.0 {
        Rotation3::from_axis_angle(&Unit::new_unchecked(omega / angle), angle).into_inner()
    } else {
        Matrix3::identity()
    };
    RigidTransform {
        rotation,
        translation: *v,
    }
}

/// Local (small perturbations) or global (large perturbations) problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Local,
    Global,
}

impl Regime {
    /// Smallest ground-truth overlap a pair needs to be used in this regime.
    pub fn min_overlap(self) -> f64 {
        match self {
            Regime::Local => 0.40,
            Regime::Global => 0.60,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Local => "local",
            Regime::Global => "global",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Regime::Local => 0x6c6f_6361_6c00_0000,
            Regime::Global => 0x676c_6f62_616c_0000,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(Regime::Local),
            "global" => Ok(Regime::Global),
            other => Err(format!("unknown regime {other:?} (expected local|global)")),
        }
    }
}

/// Ranges for the rotation angle (radians) and translation length (meters)
/// of sampled perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBounds {
    pub rot_min: f64,
    pub rot_max: f64,
    pub trans_min: f64,
    pub trans_max: f64,
    pub regime: Regime,
}

impl PerturbationBounds {
    /// Default rotation range for the regime (local 0°–45°, global 45°–180°)
    /// with the given translation range.
    pub fn with_translation(regime: Regime, trans_min: f64, trans_max: f64) -> Self {
        let (rot_min, rot_max) = match regime {
            Regime::Local => (0.0, 45f64.to_radians()),
            Regime::Global => (45f64.to_radians(), 180f64.to_radians()),
        };
        Self {
            rot_min,
            rot_max,
            trans_min,
            trans_max,
            regime,
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !ok(self.rot_min, self.rot_max) {
            return Err(TransformError::InvalidBounds(format!(
                "rotation range [{}, {}]",
                self.rot_min, self.rot_max
            )));
        }
        if self.rot_max > std::f64::consts::PI + 1e-12 {
            return Err(TransformError::InvalidBounds(format!(
                "rotation max {} exceeds pi",
                self.rot_max
            )));
        }
        if !ok(self.trans_min, self.trans_max) {
            return Err(TransformError::InvalidBounds(format!(
                "translation range [{}, {}]",
                self.trans_min, self.trans_max
            )));
        }
        Ok(())
    }
}

/// The generator used for every random draw in the toolkit.
pub type BenchRng = ChaCha20Rng;

/// Independent stream for perturbation `perturbation` of pair `pair`.
pub fn problem_rng(seed: u64, regime: Regime, pair: u32, perturbation: u32) -> BenchRng {
    let mut rng = BenchRng::seed_from_u64(seed ^ regime.stream_tag());
    rng.set_stream(((pair as u64) << 32) | perturbation as u64);
    rng
}

/// Uniform direction on the unit sphere (normalized isotropic Gaussian).
pub fn sample_unit_axis<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n >= 1e-6 {
            return v / n;
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Random rotation about `pivot` followed by a random translation, each with
/// a uniform axis and a uniform magnitude within `bounds`.
pub fn sample_perturbation<R: Rng + ?Sized>(
    bounds: &PerturbationBounds,
    pivot: &Point3,
    rng: &mut R,
) -> Result<RigidTransform, TransformError> {
    bounds.validate()?;
    let axis = sample_unit_axis(rng);
    let angle = uniform_in(rng, bounds.rot_min, bounds.rot_max);
    let direction = sample_unit_axis(rng);
    let magnitude = uniform_in(rng, bounds.trans_min, bounds.trans_max);
    let rotation = RigidTransform::rotation_about(&axis, angle, pivot);
    let shift = RigidTransform::from_translation(direction * magnitude);
    Ok(shift.compose(&rotation))
}
