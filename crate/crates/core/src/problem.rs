//! Registration problem generation: pairwise overlaps, overlap-stratified pair
//! selection, perturbation sampling and the problem-file format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point3, PointCloud};
use crate::metrics::{overlap_with_index, MetricError};
use crate::pcd::{read_pcd_file, PcdError};
use crate::spatial::KdIndex;
use crate::transform::{
    problem_rng, sample_perturbation, BenchRng, PerturbationBounds, Regime, RigidTransform,
    TransformError,
};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_PER_BIN: usize = 10;
pub const DEFAULT_PER_PAIR: usize = 30;

/// Column header of problem files.
pub const PROBLEM_HEADER: &str =
    "id source target overlap t1 t2 t3 t4 t5 t6 t7 t8 t9 t10 t11 t12";

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{path}: {source}")]
    Cloud { path: PathBuf, source: PcdError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: transform is not a rigid motion")]
    NotARotation { line: usize },
    #[error("line {line}: duplicate problem id {id}")]
    DuplicateId { line: usize, id: usize },
    #[error("no pair reaches the minimum overlap of {0}")]
    NoEligiblePairs(f64),
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Rotation (degrees) and translation (meters) ranges as written in sequence files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub rotation_deg: [f64; 2],
    pub translation_m: [f64; 2],
}

impl BoundsConfig {
    pub fn to_bounds(self, regime: Regime) -> PerturbationBounds {
        PerturbationBounds {
            rot_min: self.rotation_deg[0].to_radians(),
            rot_max: self.rotation_deg[1].to_radians(),
            trans_min: self.translation_m[0],
            trans_max: self.translation_m[1],
            regime,
        }
    }

    pub fn from_bounds(b: &PerturbationBounds) -> Self {
        Self {
            rotation_deg: [b.rot_min.to_degrees(), b.rot_max.to_degrees()],
            translation_m: [b.trans_min, b.trans_max],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SequenceFile {
    name: String,
    overlap_threshold: f64,
    seed: u64,
    clouds: Vec<PathBuf>,
    local: BoundsConfig,
    global: BoundsConfig,
}

/// Per-sequence configuration.
///
/// Cloud paths are resolved against the sequence file directory on load.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub clouds: Vec<PathBuf>,
    pub overlap_threshold: f64,
    pub bounds_local: PerturbationBounds,
    pub bounds_global: PerturbationBounds,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.clouds.len() < 2 {
            return Err(ProblemError::InvalidSpec(format!(
                "sequence {:?} needs at least 2 clouds, has {}",
                self.name,
                self.clouds.len()
            )));
        }
        if !(self.overlap_threshold > 0.0) || !self.overlap_threshold.is_finite() {
            return Err(ProblemError::InvalidSpec(format!(
                "overlap threshold must be positive, got {}",
                self.overlap_threshold
            )));
        }
        self.bounds_local.validate()?;
        self.bounds_global.validate()?;
        let mut names = HashSet::new();
        for i in 0..self.clouds.len() {
            if !names.insert(self.cloud_name(i)) {
                return Err(ProblemError::InvalidSpec(format!(
                    "duplicate cloud file name {:?}",
                    self.cloud_name(i)
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, regime: Regime) -> &PerturbationBounds {
        match regime {
            Regime::Local => &self.bounds_local,
            Regime::Global => &self.bounds_global,
        }
    }

    /// File name of cloud `i`, as recorded in problem files.
    pub fn cloud_name(&self, i: usize) -> String {
        self.clouds[i]
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.clouds[i].to_string_lossy().into_owned())
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.to_owned(),
            source,
        })?;
        let file: SequenceFile = toml::from_str(&text)
            .map_err(|e| ProblemError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let spec = SequenceSpec {
            name: file.name,
            clouds: file.clouds.into_iter().map(|c| base.join(c)).collect(),
            overlap_threshold: file.overlap_threshold,
            bounds_local: file.local.to_bounds(Regime::Local),
            bounds_global: file.global.to_bounds(Regime::Global),
            seed: file.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// TOML text of the sequence as saved into `dir`; cloud paths under `dir` are
    /// stored relative to it.
    pub fn render(&self, dir: &Path) -> Result<String, ProblemError> {
        let file = SequenceFile {
            name: self.name.clone(),
            overlap_threshold: self.overlap_threshold,
            seed: self.seed,
            clouds: self
                .clouds
                .iter()
                .map(|c| c.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(c.clone()))
                .collect(),
            local: BoundsConfig::from_bounds(&self.bounds_local),
            global: BoundsConfig::from_bounds(&self.bounds_global),
        };
        toml::to_string(&file)
            .map_err(|e| ProblemError::InvalidSpec(format!("cannot encode spec: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), ProblemError> {
        let text = self.render(path.parent().unwrap_or(Path::new(".")))?;
        fs::write(path, text).map_err(|source| ProblemError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load_clouds(&self) -> Result<Vec<PointCloud>, ProblemError> {
        self.clouds
            .par_iter()
            .map(|p| {
                read_pcd_file(p)
                    .map(|parsed| parsed.cloud)
                    .map_err(|source| ProblemError::Cloud {
                        path: p.clone(),
                        source,
                    })
            })
            .collect()
    }
}

/// Overlap of `source` toward `target`, both indices into the sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapPair {
    pub source: usize,
    pub target: usize,
    pub overlap: f64,
}

/// Overlap for every ordered pair `i != j`, in row-major `(i, j)` order.
pub fn pairwise_overlaps(
    clouds: &[PointCloud],
    threshold: f64,
) -> Result<Vec<OverlapPair>, ProblemError> {
    let indices: Vec<KdIndex> = clouds
        .par_iter()
        .map(|c| KdIndex::build(c).map_err(|_| MetricError::EmptyCloud))
        .collect::<Result<_, _>>()?;
    let n = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let o = overlap_with_index(&clouds[i], &indices[j], threshold)?;
            Ok(OverlapPair {
                source: i,
                target: j,
                overlap: o.fraction,
            })
        })
        .collect()
}

/// Load the sequence's clouds and compute [`pairwise_overlaps`].
pub fn compute_pairwise_overlaps(spec: &SequenceSpec) -> Result<Vec<OverlapPair>, ProblemError> {
    spec.validate()?;
    let clouds = spec.load_clouds()?;
    pairwise_overlaps(&clouds, spec.overlap_threshold)
}

/// Keep one direction per unordered pair: the lower-indexed cloud as source.
pub fn forward_pairs(overlaps: &[OverlapPair]) -> Vec<OverlapPair> {
    overlaps
        .iter()
        .filter(|p| p.source < p.target)
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedPair {
    pub pair: OverlapPair,
    /// Overlap bin the pair falls in.
    pub bin: usize,
    /// Drawn to fill another bin's shortfall.
    pub fill: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    pub pairs: Vec<SelectedPair>,
    /// `n_bins + 1` edges spanning `[min_overlap, max observed overlap]`.
    pub bin_edges: Vec<f64>,
    /// Number of eligible pairs in each bin.
    pub eligible_per_bin: Vec<usize>,
    /// Number of pairs each bin contributed directly (excluding fills).
    pub drawn_per_bin: Vec<usize>,
}

impl PairSelection {
    pub fn overlap_pairs(&self) -> Vec<OverlapPair> {
        self.pairs.iter().map(|s| s.pair).collect()
    }
}

/// Overlap-stratified pair selection.
///
/// Pairs below `min_overlap` are dropped and the remaining overlap range is
/// split into `n_bins` equal intervals. Each interval contributes up to
/// `per_bin` pairs drawn without replacement; any shortfall is drawn from the
/// not-yet-selected eligible pairs regardless of bin.
pub fn select_pairs<R: Rng + ?Sized>(
    overlaps: &[OverlapPair],
    min_overlap: f64,
    n_bins: usize,
    per_bin: usize,
    rng: &mut R,
) -> Result<PairSelection, ProblemError> {
    let n_bins = n_bins.max(1);
    let eligible: Vec<OverlapPair> = overlaps
        .iter()
        .filter(|p| p.overlap >= min_overlap)
        .copied()
        .collect();
    if eligible.is_empty() {
        return Err(ProblemError::NoEligiblePairs(min_overlap));
    }
    let hi = eligible
        .iter()
        .map(|p| p.overlap)
        .fold(min_overlap, f64::max);
    let width = (hi - min_overlap) / n_bins as f64;
    let bin_of = |o: f64| -> usize {
        if width > 0.0 {
            (((o - min_overlap) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        }
    };
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|k| {
            if k == n_bins {
                hi
            } else {
                min_overlap + width * k as f64
            }
        })
        .collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, p) in eligible.iter().enumerate() {
        members[bin_of(p.overlap)].push(i);
    }
    let eligible_per_bin: Vec<usize> = members.iter().map(Vec::len).collect();

    let mut taken = vec![false; eligible.len()];
    let mut pairs = Vec::with_capacity(n_bins * per_bin);
    let mut drawn_per_bin = vec![0; n_bins];
    for (b, bin) in members.iter().enumerate() {
        let amount = per_bin.min(bin.len());
        for k in index::sample(rng, bin.len(), amount) {
            let i = bin[k];
            taken[i] = true;
            pairs.push(SelectedPair {
                pair: eligible[i],
                bin: b,
                fill: false,
            });
        }
        drawn_per_bin[b] = amount;
    }

    let wanted = (n_bins * per_bin).min(eligible.len());
    let shortfall = wanted - pairs.len();
    if shortfall > 0 {
        let rest: Vec<usize> = (0..eligible.len()).filter(|&i| !taken[i]).collect();
        for k in index::sample(rng, rest.len(), shortfall) {
            let i = rest[k];
            pairs.push(SelectedPair {
                pair: eligible[i],
                bin: bin_of(eligible[i].overlap),
                fill: true,
            });
        }
    }
    Ok(PairSelection {
        pairs,
        bin_edges,
        eligible_per_bin,
        drawn_per_bin,
    })
}

/// Generator for pair selection, independent of all perturbation streams.
pub fn selection_rng(seed: u64, regime: Regime) -> BenchRng {
    problem_rng(seed, regime, u32::MAX, u32::MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationProblem {
    pub id: usize,
    pub source: String,
    pub target: String,
    pub overlap: f64,
    pub initial: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSet {
    pub sequence: String,
    pub regime: Regime,
    pub problems: Vec<RegistrationProblem>,
}

/// Sample `per_pair` perturbations for every pair.
///
/// `centroids[i]` is the centroid of cloud `i`; rotations pivot there. Ids
/// follow `(pair, perturbation)` order.
pub fn generate_problems(
    spec: &SequenceSpec,
    regime: Regime,
    pairs: &[OverlapPair],
    centroids: &[Point3],
    per_pair: usize,
) -> Result<ProblemSet, ProblemError> {
    let bounds = spec.bounds(regime);
    bounds.validate()?;
    let mut problems = Vec::with_capacity(pairs.len() * per_pair);
    for (pi, pair) in pairs.iter().enumerate() {
        if pair.overlap < regime.min_overlap() {
            return Err(ProblemError::InvalidSpec(format!(
                "pair ({}, {}) has overlap {} below the {} floor {}",
                pair.source,
                pair.target,
                pair.overlap,
                regime,
                regime.min_overlap()
            )));
        }
        let pivot = centroids.get(pair.source).ok_or_else(|| {
            ProblemError::InvalidSpec(format!("no centroid for cloud {}", pair.source))
        })?;
        for k in 0..per_pair {
            let mut rng = problem_rng(spec.seed, regime, pi as u32, k as u32);
            let initial = sample_perturbation(bounds, pivot, &mut rng)?;
            problems.push(RegistrationProblem {
                id: problems.len(),
                source: spec.cloud_name(pair.source),
                target: spec.cloud_name(pair.target),
                overlap: pair.overlap,
                initial,
            });
        }
    }
    Ok(ProblemSet {
        sequence: spec.name.clone(),
        regime,
        problems,
    })
}

/// `<sequence>.txt` for local sets, `<sequence>_global.txt` for global ones.
pub fn problem_file_name(sequence: &str, regime: Regime) -> String {
    match regime {
        Regime::Local => format!("{sequence}.txt"),
        Regime::Global => format!("{sequence}_global.txt"),
    }
}

pub fn format_problem_set(set: &ProblemSet) -> String {
    let mut out = String::with_capacity(64 + set.problems.len() * 200);
    let _ = writeln!(out, "# sequence: {}", set.sequence);
    let _ = writeln!(out, "# regime: {}", set.regime);
    out.push_str(PROBLEM_HEADER);
    out.push('\n');
    for p in &set.problems {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            p.id, p.source, p.target, p.overlap, p.initial
        );
    }
    out
}

pub fn write_problem_file(set: &ProblemSet, path: &Path) -> Result<(), ProblemError> {
    fs::write(path, format_problem_set(set)).map_err(|source| ProblemError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parse a problem file. `fallback_name` supplies sequence and regime when the
/// file carries no `# sequence:` / `# regime:` comments.
pub fn parse_problem_set(text: &str, fallback_name: &str) -> Result<ProblemSet, ProblemError> {
    let (mut sequence, mut regime) = match fallback_name.strip_suffix("_global") {
        Some(stem) => (stem.to_owned(), Regime::Global),
        None => (fallback_name.to_owned(), Regime::Local),
    };
    let mut seen_header = false;
    let mut ids = HashSet::new();
    let mut problems = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("sequence:") {
                sequence = v.trim().to_owned();
            } else if let Some(v) = comment.strip_prefix("regime:") {
                regime = v.parse().map_err(|reason| ProblemError::MalformedRecord {
                    line,
                    reason,
                })?;
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if !seen_header {
            if tokens.join(" ") != PROBLEM_HEADER {
                return Err(ProblemError::MalformedRecord {
                    line,
                    reason: format!("expected header {PROBLEM_HEADER:?}"),
                });
            }
            seen_header = true;
            continue;
        }
        if tokens.len() != 16 {
            return Err(ProblemError::MalformedRecord {
                line,
                reason: format!("expected 16 fields, found {}", tokens.len()),
            });
        }
        let bad = |what: &str, tok: &str| ProblemError::MalformedRecord {
            line,
            reason: format!("invalid {what} {tok:?}"),
        };
        let id: usize = tokens[0].parse().map_err(|_| bad("id", tokens[0]))?;
        let overlap: f64 = tokens[3].parse().map_err(|_| bad("overlap", tokens[3]))?;
        if !(0.0..=1.0).contains(&overlap) {
            return Err(bad("overlap", tokens[3]));
        }
        let mut m = [0.0; 12];
        for (v, tok) in m.iter_mut().zip(&tokens[4..]) {
            *v = tok.parse().map_err(|_| bad("matrix entry", tok))?;
        }
        let initial =
            RigidTransform::from_row_major12(&m).map_err(|_| ProblemError::NotARotation { line })?;
        if !ids.insert(id) {
            return Err(ProblemError::DuplicateId { line, id });
        }
        problems.push(RegistrationProblem {
            id,
            source: tokens[1].to_owned(),
            target: tokens[2].to_owned(),
            overlap,
            initial,
        });
    }
    if !seen_header {
        return Err(ProblemError::MalformedRecord {
            line: text.lines().count().max(1),
            reason: "missing header line".into(),
        });
    }
    Ok(ProblemSet {
        sequence,
        regime,
        problems,
    })
}

pub fn read_problem_file(path: &Path) -> Result<ProblemSet, ProblemError> {
    let text = fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.to_owned(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_problem_set(&text, &stem)
}
