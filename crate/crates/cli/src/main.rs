use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use regbench::registration::{Algorithm, RegistrarConfig};
use regbench::stats::correlation_table;
use regbench::stats::correlations_to_text;
use regbench::synth::SynthConfig;
use regbench::Regime;
use regbench_cli::{
    cmd_fetch, cmd_generate, cmd_gteval, cmd_run, cmd_score, cmd_synth, exit_code,
    DatasetManifest, GenerateOptions, GtEvalOptions, RunOptions, SynthOptions, EXIT_OK,
    EXIT_PARTIAL,
};

#[derive(Parser)]
#[command(name = "regbench", version, about = "Point-cloud registration benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RegistrarArgs {
    /// Registration algorithm [icp, gicp]
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Voxel leaf size in meters
    #[arg(long, default_value_t = 0.1)]
    leaf: f64,
    #[arg(long, default_value_t = 30)]
    max_iters: usize,
    /// Drop associations farther than this multiple of the median distance
    #[arg(long, default_value_t = 3.0)]
    outlier_factor: f64,
    /// Ignore associations at or beyond this distance in meters
    #[arg(long)]
    max_corr_dist: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    convergence_eps: f64,
    #[arg(long, default_value_t = 20)]
    gicp_k: usize,
    #[arg(long, default_value_t = 1e-3)]
    gicp_eps: f64,
}

impl RegistrarArgs {
    fn config(&self, default_algorithm: Algorithm) -> RegistrarConfig {
        RegistrarConfig {
            voxel_leaf: self.leaf,
            max_iterations: self.max_iters,
            outlier_factor: self.outlier_factor,
            max_corr_distance: self.max_corr_dist,
            convergence_eps: self.convergence_eps,
            algorithm: self.algorithm.unwrap_or(default_algorithm),
            gicp_k_neighbors: self.gicp_k,
            gicp_cov_epsilon: self.gicp_eps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Download or copy the datasets listed in a manifest and convert them to PCD
    Fetch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic sequence with exact ground truth
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        scans: usize,
        /// Standard deviation of per-coordinate Gaussian noise, meters
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.2)]
        spacing: f64,
        #[arg(long, default_value_t = 5.0)]
        range: f64,
    },
    /// Select pairs and sample initial perturbations for a sequence
    Generate {
        /// Sequence file or its directory
        spec: PathBuf,
        #[arg(long, default_value = "local")]
        regime: Regime,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        per_pair: usize,
    },
    /// Run a registrar on every problem of a problem file
    Run {
        problems: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[command(flatten)]
        registrar: RegistrarArgs,
        /// Problems processed in parallel
        #[arg(long)]
        jobs: Option<usize>,
        /// Directory of the cloud files; defaults to the problem file's directory
        #[arg(long)]
        clouds_dir: Option<PathBuf>,
    },
    /// Summarize one or more results files
    Score {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Also write scores, correlations and a histogram as CSV here
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Estimate an upper bound on the ground-truth accuracy of a sequence
    Gteval {
        spec: PathBuf,
        #[arg(long, default_value = "local")]
        regime: Regime,
        #[command(flatten)]
        registrar: RegistrarArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Fetch { manifest, out } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let report = cmd_fetch(&manifest, &out)?;
            println!("converted {} skipped {}", report.converted, report.skipped);
            for e in &report.errors {
                eprintln!("{}: {}: {}", e.sequence, e.file, e.message);
            }
            for s in &report.failed_sequences {
                eprintln!("{s}: no cloud could be produced");
            }
            Ok(if report.is_clean() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Synth {
            out,
            name,
            seed,
            scans,
            noise,
            spacing,
            range,
        } => {
            let opts = SynthOptions {
                name,
                config: SynthConfig {
                    seed,
                    n_scans: scans,
                    noise,
                    spacing,
                    range,
                    ..Default::default()
                },
            };
            let spec = cmd_synth(&opts, &out)?;
            println!("{}", spec.display());
            Ok(EXIT_OK)
        }
        Command::Generate {
            spec,
            regime,
            seed,
            out,
            per_pair,
        } => {
            let opts = GenerateOptions {
                regime,
                seed,
                out,
                per_pair,
                ..Default::default()
            };
            let report = cmd_generate(&spec, &opts)?;
            println!(
                "{} problems from {} pairs -> {}",
                report.n_problems,
                report.selection.pairs.len(),
                report.problem_file.display()
            );
            println!("eligible per bin {:?}", report.selection.eligible_per_bin);
            Ok(EXIT_OK)
        }
        Command::Run {
            problems,
            results,
            registrar,
            jobs,
            clouds_dir,
        } => {
            let mut opts = RunOptions {
                config: registrar.config(Algorithm::Icp),
                clouds_dir,
                ..Default::default()
            };
            if let Some(j) = jobs {
                opts.jobs = j;
            }
            let report = cmd_run(&problems, &results, &opts)?;
            println!(
                "{} problems: {} run, {} already present, {} failed",
                report.total, report.ran, report.skipped, report.failed
            );
            Ok(if report.failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Score { results, out_dir } => {
            let out = cmd_score(&results, out_dir.as_deref())?;
            print!("{}", out.table.to_text());
            println!();
            print!("{}", correlations_to_text(&correlation_table(&out.table.records)));
            Ok(EXIT_OK)
        }
        Command::Gteval {
            spec,
            regime,
            registrar,
            out,
        } => {
            let opts = GtEvalOptions {
                regime,
                config: registrar.config(Algorithm::Gicp),
                out,
            };
            let report = cmd_gteval(&spec, &opts)?;
            println!(
                "mean {:.6} m, std {:.6} m over {} pairs ({} outliers, {} failed)",
                report.mean,
                report.std_dev,
                report.pairs.len() - report.n_outliers - report.n_failed,
                report.n_outliers,
                report.n_failed
            );
            Ok(if report.n_failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
