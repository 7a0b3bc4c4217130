use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use regbench::gt_eval::{evaluate_ground_truth, GtPair, GtReport};
use regbench::metrics::benchmark_metric;
use regbench::pcd::read_pcd_file;
use regbench::problem::{
    forward_pairs, generate_problems, pairwise_overlaps, problem_file_name, read_problem_file,
    select_pairs, selection_rng, write_problem_file, OverlapPair, PairSelection,
    RegistrationProblem, SequenceSpec, DEFAULT_BINS, DEFAULT_PER_BIN, DEFAULT_PER_PAIR,
};
use regbench::registration::{registrar_for, Registrar, RegistrarConfig, Status};
use regbench::stats::{
    aggregate, correlation_table, correlations_to_csv, histogram, read_results_file,
    ResultRecord, ScoreTable,
};
use regbench::synth::{SynthConfig, SyntheticSequence};
use regbench::{PointCloud, Regime, RigidTransform};

use crate::UsageError;

pub const SPEC_FILE: &str = "sequence.toml";
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub name: String,
    pub config: SynthConfig,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            config: SynthConfig::default(),
        }
    }
}

/// Generate a synthetic sequence into `out_dir`; returns the sequence file path.
pub fn cmd_synth(opts: &SynthOptions, out_dir: &Path) -> Result<PathBuf> {
    if opts.config.n_scans < 2 {
        bail!(UsageError("a sequence needs at least 2 scans".into()));
    }
    if !(opts.config.spacing > 0.0) || !(opts.config.range > 0.0) || !(opts.config.noise >= 0.0) {
        bail!(UsageError("spacing and range must be positive, noise non-negative".into()));
    }
    let seq = SyntheticSequence::generate(&opts.name, &opts.config);
    seq.write(out_dir)?;
    Ok(out_dir.join(SPEC_FILE))
}

/// Accept either a sequence file or a directory holding `sequence.toml`.
pub fn resolve_spec(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(SPEC_FILE)
    } else {
        path.to_owned()
    }
}

fn load_spec(path: &Path) -> Result<SequenceSpec> {
    SequenceSpec::load(&resolve_spec(path)).map_err(|e| UsageError(e.to_string()).into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub regime: Regime,
    /// Overrides the sequence seed.
    pub seed: Option<u64>,
    /// Problem file path; defaults to the sequence file directory.
    pub out: Option<PathBuf>,
    pub n_bins: usize,
    pub per_bin: usize,
    pub per_pair: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            regime: Regime::Local,
            seed: None,
            out: None,
            n_bins: DEFAULT_BINS,
            per_bin: DEFAULT_PER_BIN,
            per_pair: DEFAULT_PER_PAIR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub problem_file: PathBuf,
    pub overlaps_file: PathBuf,
    pub selection: PairSelection,
    pub n_problems: usize,
}

/// Pairwise overlaps of every ordered pair and the benchmark pair selection.
pub fn benchmark_pairs(
    spec: &SequenceSpec,
    clouds: &[PointCloud],
    regime: Regime,
    n_bins: usize,
    per_bin: usize,
) -> Result<(Vec<OverlapPair>, PairSelection)> {
    let all = pairwise_overlaps(clouds, spec.overlap_threshold)?;
    let mut rng = selection_rng(spec.seed, regime);
    let selection = select_pairs(
        &forward_pairs(&all),
        regime.min_overlap(),
        n_bins,
        per_bin,
        &mut rng,
    )?;
    Ok((all, selection))
}

pub fn cmd_generate(spec_path: &Path, opts: &GenerateOptions) -> Result<GenerateReport> {
    let mut spec = load_spec(spec_path)?;
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let clouds = spec.load_clouds()?;
    let (all, selection) = benchmark_pairs(&spec, &clouds, opts.regime, opts.n_bins, opts.per_bin)?;
    let centroids = clouds
        .iter()
        .map(PointCloud::centroid)
        .collect::<Result<Vec<_>, _>>()?;
    let set = generate_problems(
        &spec,
        opts.regime,
        &selection.overlap_pairs(),
        &centroids,
        opts.per_pair,
    )?;

    let dir = resolve_spec(spec_path)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let problem_file = opts
        .out
        .clone()
        .unwrap_or_else(|| dir.join(problem_file_name(&spec.name, opts.regime)));
    write_problem_file(&set, &problem_file)?;

    let overlaps_file = problem_file.with_extension("overlaps.csv");
    let mut text = String::from("source,target,overlap,selected\n");
    let chosen: HashSet<(usize, usize)> = selection
        .pairs
        .iter()
        .map(|p| (p.pair.source, p.pair.target))
        .collect();
    for p in &all {
        text.push_str(&format!(
            "{},{},{},{}\n",
            spec.cloud_name(p.source),
            spec.cloud_name(p.target),
            p.overlap,
            chosen.contains(&(p.source, p.target))
        ));
    }
    fs::write(&overlaps_file, text)?;

    Ok(GenerateReport {
        problem_file,
        overlaps_file,
        n_problems: set.problems.len(),
        selection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub config: RegistrarConfig,
    pub jobs: usize,
    /// Where cloud files named in the problem file live; defaults to the
    /// problem file's directory.
    pub clouds_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            config: RegistrarConfig::default(),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            clouds_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunReport {
    pub total: usize,
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Score one problem: perturb the source, register it back, and compare the
/// composed estimate with the identity ground truth.
pub fn run_problem(
    problem: &RegistrationProblem,
    sequence: &str,
    regime: Regime,
    source: &PointCloud,
    target: &PointCloud,
    registrar: &dyn Registrar,
) -> Result<ResultRecord> {
    let identity = RigidTransform::identity();
    let moved = problem.initial.apply(source);
    let result = registrar.register(&moved, target, &identity);
    let total = match result.status {
        Status::Failed => problem.initial,
        _ => result.estimated.compose(&problem.initial),
    };
    let initial_delta = benchmark_metric(source, &problem.initial, &identity)?.delta;
    let final_delta = benchmark_metric(source, &total, &identity)?.delta;
    Ok(ResultRecord::new(
        problem.id,
        sequence,
        regime,
        problem.overlap,
        initial_delta,
        final_delta,
        result.status,
        result.iterations,
        result.wall_time,
        &total,
    ))
}

/// Drop a trailing partial line left by an interrupted writer and return the
/// ids already recorded.
fn recover_results(path: &Path) -> Result<HashSet<usize>> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        file.set_len(keep as u64)?;
        file.seek(SeekFrom::Start(keep as u64))?;
    }
    if keep == 0 {
        return Ok(HashSet::new());
    }
    let records = read_results_file(path)
        .with_context(|| format!("existing results file {} is unreadable", path.display()))?;
    Ok(records.into_iter().map(|r| r.problem_id).collect())
}

/// Run every problem of `problem_file` not yet present in `results_csv`,
/// appending one row per problem in id order.
pub fn cmd_run(problem_file: &Path, results_csv: &Path, opts: &RunOptions) -> Result<RunReport> {
    opts.config
        .validate()
        .map_err(|e| UsageError(e.to_string()))?;
    if opts.jobs == 0 {
        bail!(UsageError("--jobs must be at least 1".into()));
    }
    let set = read_problem_file(problem_file).map_err(|e| UsageError(e.to_string()))?;
    let clouds_dir = opts.clouds_dir.clone().unwrap_or_else(|| {
        problem_file
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });

    let done = if results_csv.exists() {
        recover_results(results_csv)?
    } else {
        HashSet::new()
    };
    let pending: Vec<&RegistrationProblem> = set
        .problems
        .iter()
        .filter(|p| !done.contains(&p.id))
        .collect();

    let names: Vec<&str> = {
        let mut n: Vec<&str> = pending
            .iter()
            .flat_map(|p| [p.source.as_str(), p.target.as_str()])
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    };
    let clouds: HashMap<&str, PointCloud> = names
        .par_iter()
        .map(|&name| {
            let path = clouds_dir.join(name);
            read_pcd_file(&path)
                .map(|c| (name, c.cloud))
                .with_context(|| format!("loading cloud {}", path.display()))
        })
        .collect::<Result<_>>()?;

    let fresh = done.is_empty() && fs::metadata(results_csv).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(results_csv)
        .with_context(|| format!("opening {}", results_csv.display()))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);

    let registrar = registrar_for(&opts.config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()?;
    let (tx, rx) = mpsc::channel::<(usize, Result<ResultRecord>)>();
    let mut report = RunReport {
        total: set.problems.len(),
        skipped: set.problems.len() - pending.len(),
        ..Default::default()
    };

    std::thread::scope(|scope| -> Result<()> {
        let clouds = &clouds;
        let registrar = registrar.as_ref();
        let pending = &pending;
        let set = &set;
        scope.spawn(move || {
            pool.install(|| {
                pending
                    .par_iter()
                    .enumerate()
                    .for_each_with(tx, |tx, (k, p)| {
                        let record = run_problem(
                            p,
                            &set.sequence,
                            set.regime,
                            &clouds[p.source.as_str()],
                            &clouds[p.target.as_str()],
                            registrar,
                        );
                        let _ = tx.send((k, record));
                    })
            })
        });

        let mut buffer: BTreeMap<usize, ResultRecord> = BTreeMap::new();
        let mut next = 0;
        for (k, record) in rx {
            buffer.insert(k, record?);
            while let Some(r) = buffer.remove(&next) {
                if r.status == Status::Failed.as_str() {
                    report.failed += 1;
                }
                writer.serialize(&r)?;
                writer.flush()?;
                report.ran += 1;
                next += 1;
            }
        }
        Ok(())
    })?;
    writer.flush()?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ScoreOutput {
    pub table: ScoreTable,
    pub written: Vec<PathBuf>,
}

/// Aggregate one or more results files; with `out_dir`, also write the score
/// table, correlation table and a histogram of final scores as CSV.
pub fn cmd_score(results: &[PathBuf], out_dir: Option<&Path>) -> Result<ScoreOutput> {
    if results.is_empty() {
        bail!(UsageError("no results files given".into()));
    }
    let mut records = Vec::new();
    for path in results {
        records.extend(
            read_results_file(path).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    let table = aggregate(&records)?;
    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let scores = dir.join("scores.csv");
        fs::write(&scores, table.to_csv())?;
        let corr = dir.join("correlations.csv");
        fs::write(&corr, correlations_to_csv(&correlation_table(&records)))?;
        let finals: Vec<f64> = records.iter().map(|r| r.final_delta).collect();
        let hist = dir.join("histogram.csv");
        fs::write(&hist, histogram(&finals, HISTOGRAM_BINS)?.to_csv())?;
        written.extend([scores, corr, hist]);
    }
    Ok(ScoreOutput { table, written })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtEvalOptions {
    pub regime: Regime,
    pub config: RegistrarConfig,
    pub out: Option<PathBuf>,
}

/// Audit the ground truth of the pairs the benchmark selects for `regime`.
pub fn cmd_gteval(spec_path: &Path, opts: &GtEvalOptions) -> Result<GtReport> {
    opts.config
        .validate()
        .map_err(|e| UsageError(e.to_string()))?;
    let spec = load_spec(spec_path)?;
    let clouds = spec.load_clouds()?;
    let (_, selection) =
        benchmark_pairs(&spec, &clouds, opts.regime, DEFAULT_BINS, DEFAULT_PER_BIN)?;
    let pairs: Vec<GtPair<'_>> = selection
        .pairs
        .iter()
        .enumerate()
        .map(|(id, p)| GtPair {
            id,
            source: &clouds[p.pair.source],
            target: &clouds[p.pair.target],
        })
        .collect();
    let report = evaluate_ground_truth(&pairs, &opts.config, spec.overlap_threshold);
    if let Some(out) = &opts.out {
        let mut f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        f.write_all(report.to_csv().as_bytes())?;
    }
    Ok(report)
}
