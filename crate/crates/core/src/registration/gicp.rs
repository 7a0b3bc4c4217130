use std::time::Instant;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use super::{
    associate, estimate_covariances, prepare, RegistrarConfig, RegistrationError,
    RegistrationResult, Status,
};
use crate::cloud::{Point3, PointCloud};
use crate::transform::{exp_se3_left, RigidTransform};

const MAX_INNER_ITERATIONS: usize = 10;
const MAX_REJECTED_STEPS: usize = 3;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Plane-to-plane cost over a fixed set of associations:
/// `Σ rᵢᵀ Mᵢ rᵢ` with `rᵢ = qᵢ − T sᵢ` and `Mᵢ = (C_qᵢ + R C_sᵢ Rᵀ)⁻¹`.
///
/// The information matrices `Mᵢ` are frozen at the rotation passed to
/// [`GicpCost::new`]. Derivatives are taken with respect to a left
/// perturbation `T ← exp(ω, v) · T`, ordered `(ω, v)`.
#[derive(Debug, Clone)]
pub struct GicpCost {
    sources: Vec<Point3>,
    targets: Vec<Point3>,
    information: Vec<Matrix3<f64>>,
}

impl GicpCost {
    pub fn new(
        sources: Vec<Point3>,
        targets: Vec<Point3>,
        source_covs: &[Matrix3<f64>],
        target_covs: &[Matrix3<f64>],
        rotation: &Matrix3<f64>,
    ) -> Result<Self, RegistrationError> {
        let information = source_covs
            .iter()
            .zip(target_covs)
            .map(|(cs, ct)| {
                (ct + rotation * cs * rotation.transpose())
                    .try_inverse()
                    .ok_or_else(|| {
                        RegistrationError::DegenerateGeometry(
                            "singular combined covariance".into(),
                        )
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sources,
            targets,
            information,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn cost(&self, t: &RigidTransform) -> f64 {
        self.sources
            .iter()
            .zip(&self.targets)
            .zip(&self.information)
            .map(|((s, q), m)| {
                let r = q - t.transform_point(s);
                r.dot(&(m * r))
            })
            .sum()
    }

    /// Gradient and Gauss–Newton Hessian at `t`.
    pub fn linearize(&self, t: &RigidTransform) -> (Vector6<f64>, Matrix6<f64>) {
        let mut grad = Vector6::zeros();
        let mut hess = Matrix6::zeros();
        for ((s, q), m) in self.sources.iter().zip(&self.targets).zip(&self.information) {
            let p = t.transform_point(s);
            let r = q - p;
            let mut jac = Matrix3x6::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p.coords));
            jac.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-Matrix3::identity()));
            let mj = m * jac;
            grad += 2.0 * mj.transpose() * r;
            hess += 2.0 * jac.transpose() * mj;
        }
        (grad, hess)
    }

    pub fn gradient(&self, t: &RigidTransform) -> Vector6<f64> {
        self.linearize(t).0
    }
}

fn perturb(xi: &Vector6<f64>, t: &RigidTransform) -> RigidTransform {
    let omega = Vector3::new(xi[0], xi[1], xi[2]);
    let v = Vector3::new(xi[3], xi[4], xi[5]);
    exp_se3_left(&omega, &v).compose(t)
}

/// Damped Gauss–Newton on a frozen cost. Returns the refined transform.
fn solve_inner(
    cost: &GicpCost,
    start: &RigidTransform,
    outer: usize,
) -> Result<RigidTransform, RegistrationError> {
    let mut t = *start;
    let mut f = cost.cost(&t);
    let mut lambda = 1e-3;
    let mut rejected = 0;
    for _ in 0..MAX_INNER_ITERATIONS {
        let (g, h) = cost.linearize(&t);
        let mut damped = h;
        for k in 0..6 {
            damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-g));
        if step.norm() < 1e-12 {
            break;
        }
        let candidate = perturb(&step, &t);
        let fc = cost.cost(&candidate);
        if fc <= f {
            let gain = f - fc;
            t = candidate;
            f = fc;
            lambda = (lambda * 0.1).max(1e-12);
            rejected = 0;
            if gain <= 1e-12 * f.max(f64::MIN_POSITIVE) {
                break;
            }
        } else if fc <= f * (1.0 + 1e-12) {
            // stalled at the optimum to rounding
            break;
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTED_STEPS {
                return Err(RegistrationError::SolverDiverged(outer));
            }
            lambda *= 10.0;
        }
    }
    Ok(t.orthonormalized())
}

/// Generalized ICP with plane-to-plane covariances.
pub fn gicp(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    config: &RegistrarConfig,
) -> RegistrationResult {
    let start = Instant::now();
    let prepared = match prepare(source, target, config) {
        Ok(p) => p,
        Err(e) => return RegistrationResult::failed(initial, 0, start, e),
    };
    let covs = estimate_covariances(
        &prepared.source,
        config.gicp_k_neighbors,
        config.gicp_cov_epsilon,
    )
    .and_then(|s| {
        estimate_covariances(
            &prepared.target,
            config.gicp_k_neighbors,
            config.gicp_cov_epsilon,
        )
        .map(|t| (s, t))
    });
    let (source_covs, target_covs) = match covs {
        Ok(c) => c,
        Err(e) => return RegistrationResult::failed(initial, 0, start, e),
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
            Err(e) => return RegistrationResult::failed(&current, it, start, e),
        };
        let sources: Vec<Point3> = corr
            .iter()
            .map(|c| prepared.source.points[c.source_index])
            .collect();
        let targets: Vec<Point3> = corr.iter().map(|c| c.target).collect();
        let s_covs: Vec<Matrix3<f64>> = corr.iter().map(|c| source_covs[c.source_index]).collect();
        let t_covs: Vec<Matrix3<f64>> = corr.iter().map(|c| target_covs[c.target_index]).collect();
        let cost = match GicpCost::new(sources, targets, &s_covs, &t_covs, &current.rotation) {
            Ok(c) => c,
            Err(e) => return RegistrationResult::failed(&current, it, start, e),
        };
        let next = match solve_inner(&cost, &current, it) {
            Ok(t) => t,
            Err(e) => return RegistrationResult::failed(&current, it, start, e),
        };
        let change = next.compose(&current.inverse());
        current = next;
        residual = cost
            .sources
            .iter()
            .zip(&cost.targets)
            .map(|(s, q)| (current.transform_point(s) - q).norm())
            .sum::<f64>()
            / cost.len() as f64;
        if change.change_norm() < config.convergence_eps {
            status = Status::Converged;
            break;
        }
    }
    RegistrationResult {
        estimated: current,
        status,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        residual,
        error: None,
    }
}
