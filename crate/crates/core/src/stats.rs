//! Score aggregation: quantiles, moments, histograms and rank correlations,
//! plus the results CSV that feeds them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registration::Status;
use crate::transform::{Regime, RigidTransform};

/// Correlations at or above this magnitude are flagged as moderate/high.
pub const STRONG_CORRELATION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("zero variance in ranks")]
    ZeroVariance,
    #[error("quantile level {0} outside [0, 1]")]
    BadLevel(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Sample quantile by linear interpolation between order statistics, at
/// 1-based rank `1 + (n − 1)·q`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::BadLevel(q));
    }
    Ok(quantile_sorted(&sorted(values), q))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5).ok()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// 1-based ranks, ties sharing the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x).ok_or(StatsError::EmptyInput)?;
    let my = mean(y).ok_or(StatsError::EmptyInput)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewValues {
            needed: 3,
            got: x.len(),
        });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; bins are right-open except the last.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n_bins = n_bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|k| if k == n_bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0; n_bins];
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub problem_id: usize,
    pub sequence: String,
    pub regime: Regime,
    pub overlap: f64,
    pub initial_delta: f64,
    pub final_delta: f64,
    pub status: String,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub t7: f64,
    pub t8: f64,
    pub t9: f64,
    pub t10: f64,
    pub t11: f64,
    pub t12: f64,
}

impl ResultRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem_id: usize,
        sequence: &str,
        regime: Regime,
        overlap: f64,
        initial_delta: f64,
        final_delta: f64,
        status: Status,
        iterations: usize,
        wall_time_s: f64,
        estimated: &RigidTransform,
    ) -> Self {
        let t = estimated.to_row_major12();
        Self {
            problem_id,
            sequence: sequence.to_owned(),
            regime,
            overlap,
            initial_delta,
            final_delta,
            status: status.as_str().to_owned(),
            iterations,
            wall_time_s,
            t1: t[0],
            t2: t[1],
            t3: t[2],
            t4: t[3],
            t5: t[4],
            t6: t[5],
            t7: t[6],
            t8: t[7],
            t9: t[8],
            t10: t[9],
            t11: t[10],
            t12: t[11],
        }
    }

    pub fn estimated(&self) -> [f64; 12] {
        [
            self.t1, self.t2, self.t3, self.t4, self.t5, self.t6, self.t7, self.t8, self.t9,
            self.t10, self.t11, self.t12,
        ]
    }

    /// Group label: the sequence name, with `_global` appended for global problems.
    pub fn group(&self) -> String {
        match self.regime {
            Regime::Local => self.sequence.clone(),
            Regime::Global => format!("{}_global", self.sequence),
        }
    }
}

pub fn read_results<R: io::Read>(reader: R) -> Result<Vec<ResultRecord>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(StatsError::from)).collect()
}

pub fn read_results_file(path: &Path) -> Result<Vec<ResultRecord>, StatsError> {
    read_results(std::fs::File::open(path)?)
}

/// Summary statistics of one group of final scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub label: String,
    pub count: usize,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl ScoreRow {
    pub fn from_values(label: &str, values: &[f64]) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let v = sorted(values);
        Ok(Self {
            label: label.to_owned(),
            count: v.len(),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
            q95: quantile_sorted(&v, 0.95),
            mean: mean(&v).unwrap_or(f64::NAN),
            std_dev: std_dev(&v).unwrap_or(f64::NAN),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub total: ScoreRow,
    pub records: Vec<ResultRecord>,
}

fn groups(records: &[ResultRecord]) -> BTreeMap<String, Vec<&ResultRecord>> {
    let mut g: BTreeMap<String, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        g.entry(r.group()).or_default().push(r);
    }
    g
}

/// Per-group and pooled statistics of `final_delta`.
pub fn aggregate(records: &[ResultRecord]) -> Result<ScoreTable, StatsError> {
    if records.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let rows = groups(records)
        .into_iter()
        .map(|(label, recs)| {
            let v: Vec<f64> = recs.iter().map(|r| r.final_delta).collect();
            ScoreRow::from_values(&label, &v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let all: Vec<f64> = records.iter().map(|r| r.final_delta).collect();
    Ok(ScoreTable {
        rows,
        total: ScoreRow::from_values("total", &all)?,
        records: records.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub label: String,
    /// Spearman ρ between final score and initial misalignment.
    pub vs_initial: Option<f64>,
    /// Spearman ρ between final score and overlap.
    pub vs_overlap: Option<f64>,
}

impl CorrelationRow {
    pub fn strong_initial(&self) -> bool {
        self.vs_initial.is_some_and(|r| r.abs() >= STRONG_CORRELATION)
    }

    pub fn strong_overlap(&self) -> bool {
        self.vs_overlap.is_some_and(|r| r.abs() >= STRONG_CORRELATION)
    }
}

/// Per-group Spearman correlations of the final score with the initial
/// misalignment and with the overlap. Undefined correlations are `None`.
pub fn correlation_table(records: &[ResultRecord]) -> Vec<CorrelationRow> {
    groups(records)
        .into_iter()
        .map(|(label, recs)| {
            let fin: Vec<f64> = recs.iter().map(|r| r.final_delta).collect();
            let init: Vec<f64> = recs.iter().map(|r| r.initial_delta).collect();
            let ov: Vec<f64> = recs.iter().map(|r| r.overlap).collect();
            CorrelationRow {
                label,
                vs_initial: spearman(&fin, &init).ok(),
                vs_overlap: spearman(&fin, &ov).ok(),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, strong: bool) -> String {
    match v {
        Some(r) if strong => format!("{r:.4}*"),
        Some(r) => format!("{r:.4}"),
        None => "n/a".into(),
    }
}

impl ScoreTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence,count,median,q75,q95,mean,std_dev\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.label, r.count, r.median, r.q75, r.q95, r.mean, r.std_dev
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("Sequence".len());
        let mut out = format!(
            "{:<width$}  {:>6}  {:>10}  {:>13}  {:>13}  {:>10}  {:>10}\n",
            "Sequence", "N", "Median", "0.75 Quantile", "0.95 Quantile", "Mean", "Std Dev"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>10.4}  {:>13.4}  {:>13.4}  {:>10.4}  {:>10.4}",
                r.label, r.count, r.median, r.q75, r.q95, r.mean, r.std_dev
            );
        }
        out
    }
}

pub fn correlations_to_csv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("sequence,rho_initial_misalignment,rho_overlap\n");
    let f = |v: Option<f64>| v.map(|r| r.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.label, f(r.vs_initial), f(r.vs_overlap));
    }
    out
}

/// Aligned text table; `*` marks |ρ| ≥ 0.5.
pub fn correlations_to_text(rows: &[CorrelationRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(0)
        .max("Sequence".len());
    let mut out = format!(
        "{:<width$}  {:>22}  {:>10}\n",
        "Sequence", "Initial Misalignment", "Overlap"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>22}  {:>10}",
            r.label,
            fmt_opt(r.vs_initial, r.strong_initial()),
            fmt_opt(r.vs_overlap, r.strong_overlap())
        );
    }
    out
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[k], self.edges[k + 1], c);
        }
        out
    }
}
