//! `finiagg` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 limit exceeded,
//! 4 soundness violation (`oracle-check`).

mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use finiagg::certifier::{self, labeled_tables, DEFAULT_ENUMERATION_CAP};
use finiagg::infinite_aggregation::{ia_radius, ia_votes, DEFAULT_IA_LIMIT};
use finiagg::oracle::{verify_certificates, DEFAULT_ORACLE_LIMIT};
use finiagg::{
    collect_votes, ensemble_stats, generate_offsets, train_ensemble, AggregationConfig, Dataset,
    Error, LearnerKind, LearnerSpec, OffsetMode, VoteMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{
    cert_acc_json, certify_json, compare_json, curve_csv, ia_json, oracle_json,
};

#[derive(Parser, Debug)]
#[command(name = "finiagg", version, about = "Finite Aggregation certificates against data poisoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train (or load votes), certify every test sample, write report and curve.
    Certify(CertifyArgs),
    /// Certified-fraction curve as CSV.
    Curve(CurveArgs),
    /// Compare FA radii against the DPA-style baseline on the same classifiers.
    Compare(OutArgs),
    /// Certified accuracy under one shared poison set.
    CertAcc(CertAccArgs),
    /// Check every certificate against the exhaustive adversary.
    OracleCheck(OracleArgs),
    /// Exact Infinite Aggregation distribution and radius for one input.
    Ia(IaArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Vote-matrix JSON; replaces --dataset/--test.
    #[arg(long, conflicts_with_all = ["dataset", "test"])]
    votes: Option<PathBuf>,
    /// Training set CSV (`label,f0,...`).
    #[arg(long, requires = "test")]
    dataset: Option<PathBuf>,
    /// Test set CSV (`label,f0,...`).
    #[arg(long, requires = "dataset")]
    test: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "nearest-centroid")]
    learner: String,
    /// Class count; defaults to max label + 1 over train and test.
    #[arg(long)]
    n_classes: Option<usize>,
    /// Use R = {0} when d = 1 so the layout is exactly DPA's.
    #[arg(long)]
    dpa_compatible: bool,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Report JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Curve CSV path.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Largest attack size on the curve (default kd).
    #[arg(long)]
    max_attack: Option<usize>,
    /// Require labels and include ensemble statistics.
    #[arg(long)]
    stats: bool,
    /// Include the full margin multisets per sample.
    #[arg(long)]
    verbose: bool,
    /// Also write the vote matrix JSON here.
    #[arg(long)]
    votes_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_attack: Option<usize>,
}

#[derive(Args, Debug)]
struct OutArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertAccArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1)]
    budget: usize,
    /// Maximum number of partition subsets to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Check this many random vote rows instead of loading inputs.
    #[arg(long)]
    random_rows: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IaArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated test features.
    #[arg(long)]
    point: String,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "nearest-centroid")]
    learner: String,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_IA_LIMIT)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
    Soundness(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(e) if e.is_limit() => 3,
            Failure::Data(_) => 2,
            Failure::Soundness(_) => 4,
        }
    }

    fn to_json(&self) -> String {
        let (kind, message) = match self {
            Failure::Usage(m) => ("Usage", m.clone()),
            Failure::Data(e) => (e.kind(), e.to_string()),
            Failure::Soundness(m) => ("SoundnessViolation", m.clone()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", path.display()))))
}

fn read_dataset(path: &Path, n_classes: Option<usize>) -> CliResult<Dataset> {
    let file = fs::File::open(path)
        .map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", path.display()))))?;
    Ok(Dataset::read_csv(std::io::BufReader::new(file), n_classes)?)
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", p.display())))),
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Data(e.into()))
        }
    }
}

fn parse_learner(s: &str) -> CliResult<LearnerSpec> {
    Ok(LearnerSpec::new(s.parse::<LearnerKind>()?))
}

/// Loads the vote matrix, training the ensemble if needed.
fn load_votes(input: &InputArgs) -> CliResult<VoteMatrix> {
    if let Some(path) = &input.votes {
        return Ok(VoteMatrix::from_json(&read_text(path)?)?);
    }
    let (Some(train_path), Some(test_path)) = (&input.dataset, &input.test) else {
        return Err(Failure::Usage(
            "either --votes or both --dataset and --test are required".into(),
        ));
    };
    let k = input
        .k
        .ok_or_else(|| Failure::Usage("--k is required when training".into()))?;
    let spec = parse_learner(&input.learner)?;
    let train = read_dataset(train_path, input.n_classes)?;
    let test = read_dataset(test_path, input.n_classes)?;
    if train.feature_dim() != test.feature_dim() {
        return Err(Failure::Data(Error::DimensionMismatch {
            expected: train.feature_dim(),
            found: test.feature_dim(),
        }));
    }
    let n_classes = input
        .n_classes
        .unwrap_or_else(|| train.n_classes().max(test.n_classes()));
    let train = train.with_n_classes(n_classes)?;
    let config = AggregationConfig::new(k, input.d, input.seed, n_classes)?;
    let mode = if input.dpa_compatible {
        OffsetMode::DpaCompatible
    } else {
        OffsetMode::Seeded
    };
    let offsets = generate_offsets(k, input.d, input.seed, mode)?;
    let models = train_ensemble(&train, &config, &offsets, &spec)?;
    Ok(collect_votes(
        &models,
        &test.features(),
        &config,
        &offsets,
        Some(test.labels()),
    )?)
}

fn cmd_certify(args: CertifyArgs) -> CliResult<()> {
    let vm = load_votes(&args.input)?;
    if let Some(p) = &args.votes_out {
        emit(Some(p), &vm.to_json())?;
    }
    let stats = match ensemble_stats(&vm) {
        Ok(s) => Some(s),
        Err(e) if args.stats => return Err(e.into()),
        Err(_) => None,
    };
    let max_attack = args.max_attack.unwrap_or(vm.kd());
    let report = certifier::certificate_report(&vm, max_attack);
    emit(
        args.out.as_deref(),
        &certify_json(&vm, &report, stats.as_ref(), args.verbose),
    )?;
    if let Some(p) = &args.curve {
        emit(Some(p), &curve_csv(&report.curve))?;
    }
    Ok(())
}

fn cmd_curve(args: CurveArgs) -> CliResult<()> {
    let vm = load_votes(&args.input)?;
    let report = certifier::certificate_report(&vm, args.max_attack.unwrap_or(vm.kd()));
    emit(args.out.as_deref(), &curve_csv(&report.curve))
}

fn cmd_compare(args: OutArgs) -> CliResult<()> {
    let vm = load_votes(&args.input)?;
    let report = certifier::certificate_report(&vm, 0);
    emit(args.out.as_deref(), &compare_json(&vm, &report))
}

fn cmd_cert_acc(args: CertAccArgs) -> CliResult<()> {
    let vm = load_votes(&args.input)?;
    let tables = labeled_tables(&vm)?;
    let acc = certifier::certified_accuracy(&tables, args.budget, args.cap)?;
    let radii: Vec<i64> = tables
        .iter()
        .map(|(t, l)| certifier::fa_radius(t, Some(*l)))
        .collect();
    let fraction = certifier::certified_fraction_curve(&radii, args.budget)[args.budget];
    emit(args.out.as_deref(), &cert_acc_json(&acc, fraction))
}

fn random_rows(input: &InputArgs, rows: usize) -> CliResult<VoteMatrix> {
    let k = input
        .k
        .ok_or_else(|| Failure::Usage("--k is required with --random-rows".into()))?;
    let n_classes = input
        .n_classes
        .ok_or_else(|| Failure::Usage("--n-classes is required with --random-rows".into()))?;
    let mode = if input.dpa_compatible {
        OffsetMode::DpaCompatible
    } else {
        OffsetMode::Seeded
    };
    let offsets = generate_offsets(k, input.d, input.seed, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let votes = (0..rows)
        .map(|_| (0..k * input.d).map(|_| rng.gen_range(0..n_classes)).collect())
        .collect();
    Ok(VoteMatrix::new(k, input.d, n_classes, offsets, None, votes)?)
}

fn cmd_oracle_check(args: OracleArgs) -> CliResult<()> {
    let vm = match args.random_rows {
        Some(n) => random_rows(&args.input, n)?,
        None => load_votes(&args.input)?,
    };
    let report = verify_certificates(vm.votes(), vm.offsets(), vm.n_classes(), args.limit)?;
    emit(args.out.as_deref(), &oracle_json(&report))?;
    if !report.is_sound() {
        return Err(Failure::Soundness(format!(
            "{} certificate violations, {} DPA mismatches",
            report.violations.len(),
            report.dpa_mismatches.len()
        )));
    }
    Ok(())
}

fn cmd_ia(args: IaArgs) -> CliResult<()> {
    let spec = parse_learner(&args.learner)?;
    let dataset = read_dataset(&args.dataset, args.n_classes)?;
    let point = args
        .point
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--point: {e}")))?;
    if point.len() != dataset.feature_dim() {
        return Err(Failure::Data(Error::DimensionMismatch {
            expected: dataset.feature_dim(),
            found: point.len(),
        }));
    }
    let dist = ia_votes(&dataset, &point, args.k, &spec, args.limit)?;
    let radius = ia_radius(&dist);
    emit(args.out.as_deref(), &ia_json(&dist, radius))
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("FINIAGG_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("FINIAGG_THREADS=`{v}` is not a number")))?;
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Certify(a) => cmd_certify(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::CertAcc(a) => cmd_cert_acc(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Ia(a) => cmd_ia(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
