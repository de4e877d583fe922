//! Command-line front end: mixture generation, batch and adaptive
//! extraction, pencil solving and experiment orchestration.
//!
//! Exit codes: 0 on success, 1 on configuration/usage errors, 2 when a
//! numerical precondition fails (e.g. a pencil denominator that is not
//! positive definite).

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;

use gcca_core::dual_lp::{DualLpExtractor, ForgettingFactors};
use gcca_core::error::{Error, Result};
use gcca_core::experiment::{run_experiment, ExperimentConfig};
use gcca_core::io::{read_matrix, write_matrix};
use gcca_core::metrics::{global_vector, match_source, performance_index};
use gcca_core::pencil::{extract_all, extract_batch, solve_pencil, ExtractionMode};
use gcca_core::signal::{generate_sources, mix, MixtureModel, SignalMatrix, SourceSpec};
use gcca_core::stats::{LagCorrelation, PredictorCoeffs};
use gcca_core::adaptive_direct::DirectExtractor;

#[derive(Parser)]
#[command(
    name = "gcca",
    about = "Blind source extraction from noisy mixtures via lagged-correlation pencils",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a source ensemble from a JSON spec and write it as CSV.
    Generate(GenerateArgs),
    /// Mix sources through a matrix with optional white noise.
    Mix(MixArgs),
    /// Solve the generalized eigenproblem for two correlation matrices.
    SolvePencil(SolvePencilArgs),
    /// Batch extraction (one source, or a full sequential separation).
    ExtractBatch(ExtractBatchArgs),
    /// Online adaptive extraction.
    ExtractAdaptive(ExtractAdaptiveArgs),
    /// Run a seeded Monte-Carlo experiment from a JSON config.
    RunExperiment(RunExperimentArgs),
    /// Match an extracted signal against ground-truth sources.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file: {"filters": [{"kind": "all_pole", "coefficients": [...]}, ...],
    /// "seed": u64, "length": usize, "normalize_power": bool}
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct MixArgs {
    /// Sources CSV (one row per source).
    #[arg(long)]
    sources: PathBuf,
    /// Mixing matrix CSV.
    #[arg(long)]
    matrix: PathBuf,
    /// Scale matrix rows to unit norm before mixing.
    #[arg(long)]
    row_normalize: bool,
    #[arg(long, default_value_t = 0.0)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct SolvePencilArgs {
    /// Numerator correlation matrix CSV.
    #[arg(long)]
    numerator: PathBuf,
    /// Denominator correlation matrix CSV (must be positive definite).
    #[arg(long)]
    denominator: PathBuf,
    /// Lag annotation for the numerator (bookkeeping only).
    #[arg(long, default_value_t = 2)]
    numerator_lag: usize,
    /// Lag annotation for the denominator (bookkeeping only).
    #[arg(long, default_value_t = 1)]
    denominator_lag: usize,
    /// Output CSV: first row eigenvalues (descending), row k+1 is the
    /// k-th eigenvector.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cca,
    Gcca,
}

#[derive(Args)]
struct ExtractBatchArgs {
    /// Mixtures CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Gcca)]
    mode: ModeArg,
    /// Denominator lag (0 for cca, nonzero for gcca).
    #[arg(long)]
    delta0: Option<usize>,
    /// Numerator lag.
    #[arg(long, default_value_t = 2)]
    delta1: usize,
    /// Number of sources to recover sequentially (deflation between
    /// rounds).
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Extracted signal(s) CSV, one row per recovered source.
    #[arg(long, short)]
    output: PathBuf,
    /// Optional CSV for the demixing vectors (one column per source).
    #[arg(long)]
    weights_output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    DualLp,
}

#[derive(Args)]
struct ExtractAdaptiveArgs {
    /// Mixtures CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Predictor coefficients, comma separated (direct: weights over lags
    /// 2..P+1; dual-lp: primary predictor taps over lags 1..P).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Vec<f64>,
    /// Secondary predictor taps for dual-lp (default the one-step-ahead
    /// predictor).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    d: Option<Vec<f64>>,
    #[arg(long)]
    mu: f64,
    /// Forgetting factor (dual-lp uses it for all three estimates unless
    /// overridden).
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    beta_e: Option<f64>,
    #[arg(long)]
    beta_y: Option<f64>,
    #[arg(long)]
    beta_f: Option<f64>,
    /// Renormalize w to unit norm after each dual-lp update.
    #[arg(long)]
    renormalize: bool,
    /// Seed for the initial demixing vector.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extracted signal CSV (final weights applied to the whole record).
    #[arg(long, short)]
    output: PathBuf,
    /// Optional per-step telemetry CSV.
    #[arg(long)]
    telemetry: Option<PathBuf>,
    /// Ground-truth mixing matrix CSV: adds a PI column to telemetry.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct RunExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Extracted signal CSV (single channel).
    #[arg(long)]
    extracted: PathBuf,
    /// Ground-truth sources CSV.
    #[arg(long)]
    sources: PathBuf,
    /// Mixing matrix CSV (enables the performance index).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Demixing vector CSV (single row or column; required for PI).
    #[arg(long)]
    weights: Option<PathBuf>,
}

/// Entry point shared by the binary and the tests. Returns the process
/// exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => {
            let text = std::fs::read_to_string(&args.spec)?;
            let spec: SourceSpec =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("source spec: {e}")))?;
            let sources = generate_sources(&spec)?;
            sources.write_csv(&args.output)?;
            println!(
                "wrote {} sources x {} samples to {}",
                sources.channel_count(),
                sources.sample_count(),
                args.output.display()
            );
            Ok(())
        }
        Command::Mix(args) => {
            let sources = SignalMatrix::read_csv(&args.sources)?;
            let a = read_matrix(&args.matrix)?;
            let model = if args.row_normalize {
                MixtureModel::with_normalized_rows(a, args.noise_variance)?
            } else {
                MixtureModel::new(a, args.noise_variance)?
            };
            let x = mix(&model, &sources, args.noise_seed)?;
            x.write_csv(&args.output)?;
            println!(
                "wrote {} mixtures x {} samples to {}",
                x.channel_count(),
                x.sample_count(),
                args.output.display()
            );
            Ok(())
        }
        Command::SolvePencil(args) => {
            let numerator = load_symmetrized(&args.numerator, args.numerator_lag)?;
            let denominator = load_symmetrized(&args.denominator, args.denominator_lag)?;
            let solution = solve_pencil(&numerator, &denominator)?;
            let mut out = String::new();
            let line: Vec<String> =
                solution.eigenvalues().iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
            for k in 0..solution.eigenvectors().ncols() {
                let col: Vec<String> = solution
                    .eigenvectors()
                    .column(k)
                    .iter()
                    .map(|v| format!("{v:.16e}"))
                    .collect();
                out.push_str(&col.join(","));
                out.push('\n');
            }
            std::fs::write(&args.output, out)?;
            if solution.has_degenerate_eigenvalues() {
                eprintln!("warning: degenerate eigenvalues; extraction order not identifiable");
            }
            Ok(())
        }
        Command::ExtractBatch(args) => {
            let x = SignalMatrix::read_csv(&args.input)?;
            let (mode, default_d0) = match args.mode {
                ModeArg::Cca => (ExtractionMode::Cca, 0),
                ModeArg::Gcca => (ExtractionMode::Gcca, 1),
            };
            let delta0 = args.delta0.unwrap_or(default_d0);
            if args.count <= 1 {
                let (w, y) = extract_batch(&x, delta0, args.delta1, mode)?;
                y.write_csv(&args.output)?;
                if let Some(path) = args.weights_output {
                    write_weight_columns(&path, &[w])?;
                }
            } else {
                let extractions = extract_all(&x, args.count, delta0, args.delta1, mode)?;
                let mut stacked =
                    ndarray::Array2::zeros((extractions.len(), x.sample_count()));
                for (i, e) in extractions.iter().enumerate() {
                    stacked.row_mut(i).assign(&e.y.channel(0));
                }
                SignalMatrix::new(stacked)?.write_csv(&args.output)?;
                if let Some(path) = args.weights_output {
                    let ws: Vec<Array1<f64>> =
                        extractions.iter().map(|e| e.w.clone()).collect();
                    write_weight_columns(&path, &ws)?;
                }
            }
            Ok(())
        }
        Command::ExtractAdaptive(args) => extract_adaptive(args),
        Command::RunExperiment(args) => {
            let config = ExperimentConfig::from_file(&args.config)?;
            let result = run_experiment(&config)?;
            let dir = args
                .output_dir
                .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("experiment_out"));
            result.write(&dir)?;
            println!(
                "{} of {} runs completed; outputs in {}",
                result.completed_count(),
                config.run_count,
                dir.display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let y = SignalMatrix::read_csv(&args.extracted)?;
            let sources = SignalMatrix::read_csv(&args.sources)?;
            let (index, corr) = match_source(&y, &sources)?;
            println!("matched_source={index} corr={corr:.6}");
            if let (Some(matrix), Some(weights)) = (&args.matrix, &args.weights) {
                let a = read_matrix(matrix)?;
                let w = read_vector(weights)?;
                let pi = performance_index(&global_vector(&a, w.view())?);
                println!("pi_db={pi:.4}");
            }
            Ok(())
        }
    }
}

fn extract_adaptive(args: ExtractAdaptiveArgs) -> Result<()> {
    let x = SignalMatrix::read_csv(&args.input)?;
    let channels = x.channel_count();
    let n = x.sample_count();
    let mixing = args.matrix.as_ref().map(|p| read_matrix(p)).transpose()?;
    let mut telemetry = String::new();

    let final_w = match args.method {
        MethodArg::Direct => {
            let mut ext = DirectExtractor::new(channels, args.b, args.mu, args.beta, args.seed)?;
            if args.telemetry.is_some() {
                telemetry.push_str(if mixing.is_some() { "n,y,pi_db\n" } else { "n,y\n" });
            }
            let mut buffer = vec![0.0; channels];
            for i in 0..n {
                for (m, slot) in buffer.iter_mut().enumerate() {
                    *slot = x.data()[[m, i]];
                }
                let y = ext.step(&buffer)?;
                if args.telemetry.is_some() {
                    append_row(&mut telemetry, i + 1, &[y], &mixing, ext.weights());
                }
            }
            if ext.skipped_updates() > 0 {
                eprintln!("note: {} updates skipped (vanishing statistic)", ext.skipped_updates());
            }
            ext.weights().clone()
        }
        MethodArg::DualLp => {
            let coeffs = PredictorCoeffs::new(args.b, args.d.unwrap_or_else(|| vec![1.0]))?;
            let betas = ForgettingFactors {
                beta_e: args.beta_e.unwrap_or(args.beta),
                beta_y: args.beta_y.unwrap_or(args.beta),
                beta_f: args.beta_f.unwrap_or(args.beta),
            };
            let mut ext = DualLpExtractor::new(channels, coeffs, args.mu, betas, args.seed)?
                .with_renormalization(args.renormalize);
            if args.telemetry.is_some() {
                telemetry.push_str(if mixing.is_some() {
                    "n,y,e,f,sigma_e,sigma_y,sigma_f,pi_db\n"
                } else {
                    "n,y,e,f,sigma_e,sigma_y,sigma_f\n"
                });
            }
            let mut buffer = vec![0.0; channels];
            for i in 0..n {
                for (m, slot) in buffer.iter_mut().enumerate() {
                    *slot = x.data()[[m, i]];
                }
                let out = ext.step(&buffer)?;
                if args.telemetry.is_some() {
                    append_row(
                        &mut telemetry,
                        i + 1,
                        &[out.y, out.e, out.f, ext.sigma_e(), ext.sigma_y(), ext.sigma_f()],
                        &mixing,
                        ext.weights(),
                    );
                }
            }
            if ext.skipped_updates() > 0 {
                eprintln!("note: {} updates skipped (vanishing statistic)", ext.skipped_updates());
            }
            ext.weights().clone()
        }
    };

    let y = x.data().t().dot(&final_w);
    SignalMatrix::new(y.insert_axis(ndarray::Axis(0)))?.write_csv(&args.output)?;
    if let Some(path) = args.telemetry {
        std::fs::write(path, telemetry)?;
    }
    Ok(())
}

fn append_row(
    out: &mut String,
    n: usize,
    values: &[f64],
    mixing: &Option<ndarray::Array2<f64>>,
    w: &Array1<f64>,
) {
    out.push_str(&n.to_string());
    for v in values {
        out.push_str(&format!(",{v:.8e}"));
    }
    if let Some(a) = mixing {
        let pi = match global_vector(a, w.view()) {
            Ok(g) => performance_index(&g),
            Err(_) => 0.0,
        };
        out.push_str(&format!(",{pi:.4}"));
    }
    out.push('\n');
}

fn load_symmetrized(path: &Path, lag: usize) -> Result<LagCorrelation> {
    let raw = read_matrix(path)?;
    let sym = gcca_core::linalg::symmetrize(&raw);
    LagCorrelation::from_matrix(sym, lag, true)
}

fn write_weight_columns(path: &Path, weights: &[Array1<f64>]) -> Result<()> {
    let rows = weights[0].len();
    let mut m = ndarray::Array2::zeros((rows, weights.len()));
    for (j, w) in weights.iter().enumerate() {
        m.column_mut(j).assign(w);
    }
    write_matrix(path, &m)
}

fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix(path)?;
    if m.nrows() == 1 {
        Ok(m.row(0).to_owned())
    } else if m.ncols() == 1 {
        Ok(m.column(0).to_owned())
    } else {
        Err(Error::Config(format!(
            "expected a vector (1 row or 1 column), got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}
