//! Ground-truth accuracy audit.
//!
//! Every selected pair is registered starting from its ground-truth alignment.
//! Whatever the registrar still manages to "improve" is residual misalignment
//! of the ground truth itself (plus sensor noise), so the mean of those
//! residuals is an upper bound on the ground-truth accuracy. Gross registrar
//! errors are removed with a modified z-score test before summarizing.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::metrics::unnormalized_metric;
use crate::registration::{registrar_for, Registrar, RegistrarConfig, Status};
use crate::stats::{mean, median, std_dev, StatsError};
use crate::transform::RigidTransform;

/// Modified z-scores above this are outliers.
pub const ZSCORE_CUTOFF: f64 = 3.5;
const ZSCORE_SCALE: f64 = 0.6745;
const MAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ZscoreFilter {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub survivors: Vec<f64>,
}

/// Flag values whose modified z-score `0.6745·(x − median)/MAD` exceeds 3.5 in
/// magnitude.
///
/// When the MAD vanishes the mean absolute deviation from the median takes its
/// place; when that vanishes too, nothing is flagged.
pub fn robust_zscore_filter(values: &[f64]) -> Result<ZscoreFilter, StatsError> {
    if values.len() < 3 {
        return Err(StatsError::TooFewValues {
            needed: 3,
            got: values.len(),
        });
    }
    let med = median(values).ok_or(StatsError::EmptyInput)?;
    let deviations: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mut spread = median(&deviations).ok_or(StatsError::EmptyInput)?;
    if spread < MAD_FLOOR {
        spread = mean(&deviations).unwrap_or(0.0);
    }
    let scores: Vec<f64> = if spread < MAD_FLOOR {
        vec![0.0; values.len()]
    } else {
        values
            .iter()
            .map(|v| ZSCORE_SCALE * (v - med) / spread)
            .collect()
    };
    let flags: Vec<bool> = scores.iter().map(|m| m.abs() > ZSCORE_CUTOFF).collect();
    let survivors = values
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(v, _)| *v)
        .collect();
    Ok(ZscoreFilter {
        scores,
        flags,
        survivors,
    })
}

/// Two clouds at their ground-truth poses.
#[derive(Debug, Clone, Copy)]
pub struct GtPair<'a> {
    pub id: usize,
    pub source: &'a PointCloud,
    pub target: &'a PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResidual {
    pub id: usize,
    /// Mean displacement in meters; `None` when the registrar failed.
    pub residual_m: Option<f64>,
    pub outlier: bool,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtReport {
    pub pairs: Vec<PairResidual>,
    /// Over successful, non-outlier pairs.
    pub mean: f64,
    pub std_dev: f64,
    pub n_outliers: usize,
    pub n_failed: usize,
}

impl GtReport {
    /// Per-pair rows followed by a summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,residual_m,outlier,status\n");
        for p in &self.pairs {
            let residual = p.residual_m.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", p.id, residual, p.outlier, p.status);
        }
        let _ = writeln!(
            out,
            "# summary,mean_m={},std_dev_m={},outliers={},failed={}",
            self.mean, self.std_dev, self.n_outliers, self.n_failed
        );
        out
    }
}

/// Audit with the registrar described by `config`, its correspondence
/// distance capped at `radius` (the sequence's overlap threshold).
pub fn evaluate_ground_truth(
    pairs: &[GtPair<'_>],
    config: &RegistrarConfig,
    radius: f64,
) -> GtReport {
    let config = RegistrarConfig {
        max_corr_distance: Some(radius),
        ..config.clone()
    };
    evaluate_ground_truth_with(pairs, registrar_for(&config).as_ref())
}

/// Audit with an arbitrary registrar.
pub fn evaluate_ground_truth_with(pairs: &[GtPair<'_>], registrar: &dyn Registrar) -> GtReport {
    let identity = RigidTransform::identity();
    let mut rows: Vec<PairResidual> = pairs
        .par_iter()
        .map(|pair| {
            let result = registrar.register(pair.source, pair.target, &identity);
            let residual_m = match result.status {
                Status::Failed => None,
                _ => unnormalized_metric(pair.source, &result.estimated, &identity)
                    .ok()
                    .map(|m| m.delta),
            };
            PairResidual {
                id: pair.id,
                residual_m,
                outlier: false,
                status: result.status,
            }
        })
        .collect();
    summarize(&mut rows)
}

fn summarize(rows: &mut [PairResidual]) -> GtReport {
    let ok: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].residual_m.is_some())
        .collect();
    let values: Vec<f64> = ok.iter().filter_map(|&i| rows[i].residual_m).collect();
    let survivors = match robust_zscore_filter(&values) {
        Ok(f) => {
            for (&i, &flag) in ok.iter().zip(&f.flags) {
                rows[i].outlier = flag;
            }
            f.survivors
        }
        Err(_) => values,
    };
    GtReport {
        mean: mean(&survivors).unwrap_or(f64::NAN),
        std_dev: std_dev(&survivors).unwrap_or(f64::NAN),
        n_outliers: rows.iter().filter(|r| r.outlier).count(),
        n_failed: rows.len() - ok.len(),
        pairs: rows.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_values_have_no_outliers() {
        let f = robust_zscore_filter(&[0.2; 10]).unwrap();
        assert!(f.flags.iter().all(|&x| !x));
        assert_eq!(f.survivors.len(), 10);
    }

    #[test]
    fn isolated_large_value_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v: Vec<f64> = (0..19).map(|_| 0.05 + rng.random_range(-0.005..0.005)).collect();
        v.push(1.0);
        let f = robust_zscore_filter(&v).unwrap();
        assert_eq!(f.flags.iter().filter(|&&x| x).count(), 1);
        assert!(f.flags[19]);
        assert!(f.scores[19] > 3.5);
    }

    #[test]
    fn small_spread_is_not_flagged() {
        let f = robust_zscore_filter(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.flags, vec![false; 3]);
        let max = f.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((max - 0.6745).abs() < 1e-12);
    }

    #[test]
    fn zero_mad_falls_back_to_mean_deviation() {
        let mut v = vec![0.0; 20];
        v.push(1.0);
        v.push(1.0);
        let f = robust_zscore_filter(&v).unwrap();
        assert_eq!(f.flags.iter().filter(|&&x| x).count(), 2);
        assert!(f.flags[20] && f.flags[21]);
    }

    #[test]
    fn too_few_values() {
        assert!(matches!(
            robust_zscore_filter(&[1.0, 2.0]),
            Err(StatsError::TooFewValues { .. })
        ));
    }

    #[test]
    fn summary_ignores_order() {
        let mk = |v: &[f64]| {
            let mut rows: Vec<PairResidual> = v
                .iter()
                .enumerate()
                .map(|(i, &r)| PairResidual {
                    id: i,
                    residual_m: Some(r),
                    outlier: false,
                    status: Status::Converged,
                })
                .collect();
            summarize(&mut rows)
        };
        let a = mk(&[0.1, 0.12, 0.09, 0.11, 2.0, 0.1]);
        let b = mk(&[2.0, 0.1, 0.11, 0.1, 0.09, 0.12]);
        assert_eq!(a.n_outliers, 1);
        assert!((a.mean - b.mean).abs() < 1e-15);
        assert!((a.std_dev - b.std_dev).abs() < 1e-15);
    }
}
