//! Command-line driver: flag and `key=value` config parsing, run
//! orchestration, and deterministic CSV/JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use fdime::bench::{
    consecutive_seeds, permutation_vs_derangement, run_staircase_seeds, timing_csv, timing_harness,
    variance_vs_batch_sweep, StaircaseConfig, StepSummary, TimingRow, VariancePoint,
};
use fdime::oracle::{lemma4_variance_multivariate, oracle_fdime_monte_carlo};
use fdime::sampling::{seeded_rng, GENERATOR_NAME};
use fdime::{
    ArchitectureKind, DataConfig, DivergenceKind, EstimatorKind, GaussianOracle, MarginalStrategy, RunRecord,
    TrainConfig,
};
use serde::Serialize;

/// Exit code when any run diverged (summaries are still written).
pub const EXIT_DIVERGED: i32 = 2;
/// Exit code for malformed flags or an invalid configuration.
pub const EXIT_USAGE: i32 = 64;
/// Exit code for IO and other runtime failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// `--help` or `--version` output; not a failure.
    #[error("{0}")]
    Info(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] fdime::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "fdime", version, about = "Discriminative mutual information estimators and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Train continuously through a staircase of target MI values.
    Staircase(RunArgs),
    /// Train at a single target MI.
    SingleRun(RunArgs),
    /// Monte Carlo check of the oracle estimator's variance.
    OracleCheck(RunArgs),
    /// Same staircase with naive permutations versus derangements.
    PermVsDerange(RunArgs),
    /// Windowed variance as a function of batch size.
    VarianceSweep(RunArgs),
    /// Wall-clock time of every estimator.
    Timing(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// fdime | mine | nwj | smile | cpc | njee
    #[arg(long, default_value = "fdime")]
    estimator: String,
    /// kl | gan | hd (f-DIME only)
    #[arg(long, default_value = "gan")]
    divergence: String,
    /// joint | separable | deranged (default depends on the estimator)
    #[arg(long)]
    arch: Option<String>,
    /// derange-shift | derange-random | permutation | all-pairs
    #[arg(long, default_value = "derange-shift")]
    marginal: String,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Comma-separated target MI values in nats.
    #[arg(long, default_value = "2,4,6,8,10")]
    steps: String,
    #[arg(long, default_value_t = 4000)]
    iters_per_step: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    /// SMILE clip; `inf` disables clipping.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Comma-separated hidden layer widths.
    #[arg(long, default_value = "256,256")]
    hidden: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Apply the cubic transform y -> y^3.
    #[arg(long)]
    cubic: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Report in bits on stdout; files stay in nats.
    #[arg(long)]
    bits: bool,
    /// Target MI for single-run, oracle-check and variance-sweep.
    #[arg(long, default_value_t = 2.0)]
    target_mi: f64,
    /// Comma-separated batch sizes for variance-sweep.
    #[arg(long, default_value = "64,256,512")]
    batch_sizes: String,
    /// Joint draws per oracle-check trial.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Line-oriented `key=value` file; keys are flag names without `--`.
    /// Explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Staircase,
    SingleRun,
    OracleCheck,
    PermVsDerange,
    VarianceSweep,
    Timing,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Staircase => "staircase",
            Command::SingleRun => "single-run",
            Command::OracleCheck => "oracle-check",
            Command::PermVsDerange => "perm-vs-derange",
            Command::VarianceSweep => "variance-sweep",
            Command::Timing => "timing",
        }
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    /// Staircase protocol; single-run uses one step at `target_mi`.
    pub staircase: StaircaseConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub bits: bool,
    pub target_mi: f64,
    pub batch_sizes: Vec<usize>,
    pub samples: usize,
    pub trials: usize,
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| CliError::Usage(format!("--{flag}: cannot parse `{s}`"))))
        .collect()
}

fn parse_estimator(name: &str, divergence: &str, tau: f64) -> Result<EstimatorKind> {
    let kind = match divergence {
        "kl" => DivergenceKind::KL,
        "gan" => DivergenceKind::GAN,
        "hd" => DivergenceKind::HD,
        other => return Err(CliError::Usage(format!("--divergence: unknown `{other}` (kl, gan, hd)"))),
    };
    Ok(match name {
        "fdime" => EstimatorKind::FDime(kind),
        "mine" => EstimatorKind::MINE_DEFAULT,
        "nwj" => EstimatorKind::Nwj,
        "smile" => EstimatorKind::Smile { tau },
        "cpc" => EstimatorKind::Cpc,
        "njee" => EstimatorKind::Njee,
        other => {
            return Err(CliError::Usage(format!("--estimator: unknown `{other}` (fdime, mine, nwj, smile, cpc, njee)")))
        }
    })
}

fn parse_arch(name: &str) -> Result<ArchitectureKind> {
    match name {
        "joint" => Ok(ArchitectureKind::Joint),
        "separable" => Ok(ArchitectureKind::SEPARABLE_DEFAULT),
        "deranged" => Ok(ArchitectureKind::Deranged),
        other => Err(CliError::Usage(format!("--arch: unknown `{other}` (joint, separable, deranged)"))),
    }
}

fn parse_marginal(name: &str) -> Result<MarginalStrategy> {
    [
        MarginalStrategy::DerangeShift,
        MarginalStrategy::DerangeRandom,
        MarginalStrategy::NaivePermutation,
        MarginalStrategy::AllPairs,
    ]
    .into_iter()
    .find(|m| m.name() == name)
    .ok_or_else(|| CliError::Usage(format!("--marginal: unknown `{name}`")))
}

/// Turns a `key=value` file into flag tokens. Blank lines and `#` comments
/// are skipped; boolean keys take `true`/`false`.
fn config_tokens(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut tokens = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key=value, got `{line}`", path.display(), lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            return Err(CliError::Usage(format!("{}:{}: nested config files are not supported", path.display(), lineno + 1)));
        }
        match (key, value) {
            ("cubic" | "bits", "true") => tokens.push(format!("--{key}")),
            ("cubic" | "bits", "false") => {}
            ("cubic" | "bits", v) => {
                return Err(CliError::Usage(format!("{}:{}: `{key}` takes true or false, got `{v}`", path.display(), lineno + 1)))
            }
            _ => tokens.push(format!("--{key}={value}")),
        }
    }
    Ok(tokens)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn clap_parse(argv: &[String]) -> std::result::Result<Cli, clap::Error> {
    let cmd = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    let matches = cmd.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

/// Parses `argv` (program name first). `--help`/`--version` surface as
/// `Err(Info)` carrying clap's rendered text.
pub fn parse_args(argv: &[String]) -> Result<CliConfig> {
    let usage = |e: clap::Error| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.render().to_string())
        }
        _ => CliError::Usage(e.render().to_string()),
    };
    // Parse once to validate the command line and subcommand, then again
    // with the config file's flags spliced in ahead of the explicit ones.
    clap_parse(argv).map_err(usage)?;
    let argv = match config_path(argv) {
        Some(path) => {
            let mut spliced = argv[..2].to_vec();
            spliced.extend(config_tokens(&path)?);
            spliced.extend_from_slice(&argv[2..]);
            spliced
        }
        None => argv.to_vec(),
    };
    let cli = clap_parse(&argv).map_err(usage)?;
    let (command, a) = match cli.command {
        CommandArgs::Staircase(a) => (Command::Staircase, a),
        CommandArgs::SingleRun(a) => (Command::SingleRun, a),
        CommandArgs::OracleCheck(a) => (Command::OracleCheck, a),
        CommandArgs::PermVsDerange(a) => (Command::PermVsDerange, a),
        CommandArgs::VarianceSweep(a) => (Command::VarianceSweep, a),
        CommandArgs::Timing(a) => (Command::Timing, a),
    };
    resolve(command, a)
}

fn resolve(command: Command, a: RunArgs) -> Result<CliConfig> {
    if a.batch_size < 2 {
        return Err(CliError::Usage(format!("--batch-size must be >= 2, got {}", a.batch_size)));
    }
    if a.seeds < 1 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let estimator = parse_estimator(&a.estimator, &a.divergence, a.tau)?;
    let data = DataConfig { d: a.d, rho: 0.0, cubic: a.cubic, seed: a.seed };
    let mut base = TrainConfig::new(estimator, data);
    if let Some(arch) = &a.arch {
        base.arch = parse_arch(arch)?;
    }
    base.marginal_strategy = parse_marginal(&a.marginal)?;
    base.batch_size = a.batch_size;
    base.iterations = a.iters_per_step;
    base.eval_window = base.eval_window.min(a.iters_per_step.max(1));
    base.lr = a.lr;
    base.hidden_dims = parse_list("hidden", &a.hidden)?;
    let steps = match command {
        Command::SingleRun => vec![a.target_mi],
        _ => parse_list("steps", &a.steps)?,
    };
    let staircase = StaircaseConfig { steps, iters_per_step: a.iters_per_step, base };
    // Timing and the permutation arms adjust the architecture themselves.
    if !matches!(command, Command::Timing | Command::OracleCheck | Command::PermVsDerange) {
        staircase.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let batch_sizes = parse_list("batch-sizes", &a.batch_sizes)?;
    if batch_sizes.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("--batch-sizes entries must be >= 2".into()));
    }
    Ok(CliConfig {
        command,
        staircase,
        seeds: consecutive_seeds(a.seed, a.seeds),
        out_dir: a.out,
        bits: a.bits,
        target_mi: a.target_mi,
        batch_sizes,
        samples: a.samples,
        trials: a.trials,
    })
}

/// Formats `v` as a plain decimal with 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let e = v.abs().log10().floor() as i32;
    let decimals = (8 - e).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding may carry into the next decade (9.9999999996 -> 10.00000000).
    if decimals > 0 && s.trim_start_matches('-').len() - 1 > 9 + leading_zeros(&s) {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn leading_zeros(s: &str) -> usize {
    // Zeros between the point and the first significant digit of |v| < 1.
    let body = s.trim_start_matches('-');
    match body.strip_prefix("0.") {
        Some(frac) => 1 + frac.chars().take_while(|&c| c == '0').count(),
        None => 0,
    }
}

pub fn series_csv(record: &RunRecord) -> String {
    let mut out = String::from("iteration,objective,mi_estimate\n");
    for p in &record.series {
        out.push_str(&format!("{},{},{}\n", p.iteration, format_sig9(p.objective), format_sig9(p.mi_estimate)));
    }
    out
}

#[derive(Debug, Serialize)]
struct ConfigEcho {
    command: &'static str,
    estimator: String,
    arch: &'static str,
    embed_dim: Option<usize>,
    marginal: &'static str,
    d: usize,
    cubic: bool,
    batch_size: usize,
    steps: Vec<f64>,
    iters_per_step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    hidden_dims: Vec<usize>,
    target_mi: f64,
    batch_sizes: Vec<usize>,
    samples: usize,
    trials: usize,
    units: &'static str,
}

fn echo(cfg: &CliConfig) -> ConfigEcho {
    let b = &cfg.staircase.base;
    ConfigEcho {
        command: cfg.command.name(),
        estimator: b.estimator.label(),
        arch: b.arch.name(),
        embed_dim: match b.arch {
            ArchitectureKind::Separable { embed_dim } => Some(embed_dim),
            _ => None,
        },
        marginal: b.marginal_strategy.name(),
        d: b.data.d,
        cubic: b.data.cubic,
        batch_size: b.batch_size,
        steps: cfg.staircase.steps.clone(),
        iters_per_step: cfg.staircase.iters_per_step,
        lr: b.lr,
        beta1: b.beta1,
        beta2: b.beta2,
        hidden_dims: b.hidden_dims.clone(),
        target_mi: cfg.target_mi,
        batch_sizes: cfg.batch_sizes.clone(),
        samples: cfg.samples,
        trials: cfg.trials,
        units: "nats",
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    seed: u64,
    diverged_at: Option<usize>,
    steps: &'a [StepSummary],
}

#[derive(Debug, Serialize)]
struct Summary<'a, X: Serialize> {
    config: ConfigEcho,
    generator: &'static str,
    window: usize,
    seeds: &'a [u64],
    runs: Vec<RunSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<X>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary is always serializable");
    s.push('\n');
    s
}

/// Writes `series.csv` (or `series_seed<s>.csv` per seed when there are
/// several) and `summary.json` into `out_dir`.
pub fn emit_outputs(cfg: &CliConfig, records: &[(u64, &RunRecord)], out_dir: &Path) -> Result<()> {
    emit_with_extra::<()>(cfg, records, out_dir, None)
}

fn emit_with_extra<X: Serialize>(
    cfg: &CliConfig,
    records: &[(u64, &RunRecord)],
    out_dir: &Path,
    extra: Option<X>,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if let [(_, r)] = records {
        write(&out_dir.join("series.csv"), &series_csv(r))?;
    } else {
        for (seed, r) in records {
            write(&out_dir.join(format!("series_seed{seed}.csv")), &series_csv(r))?;
        }
    }
    let summary = Summary {
        config: echo(cfg),
        generator: GENERATOR_NAME,
        window: cfg.staircase.base.eval_window,
        seeds: &cfg.seeds,
        runs: records.iter().map(|(seed, r)| RunSummary { seed: *seed, diverged_at: r.diverged_at, steps: &r.summaries }).collect(),
        extra,
    };
    write(&out_dir.join("summary.json"), &to_json(&summary))
}

/// Nats to the display unit.
fn display_scale(bits: bool) -> (f64, &'static str) {
    if bits {
        (std::f64::consts::LN_2.recip(), "bits")
    } else {
        (1.0, "nats")
    }
}

fn print_steps(seed: u64, record: &RunRecord, bits: bool) {
    let (k, unit) = display_scale(bits);
    println!("seed {seed} ({unit}){}", record.diverged_at.map(|i| format!(" diverged at iteration {i}")).unwrap_or_default());
    println!("{:>10} {:>12} {:>12} {:>12}", "target", "bias", "variance", "mse");
    for s in &record.summaries {
        println!("{:>10.4} {:>12.6} {:>12.6} {:>12.6}", s.target_mi * k, s.bias * k, s.variance * k * k, s.mse * k * k);
    }
}

/// Outcome of a completed command: `true` when any run diverged.
pub fn run(cfg: &CliConfig) -> Result<bool> {
    match cfg.command {
        Command::Staircase | Command::SingleRun => run_staircases(cfg),
        Command::PermVsDerange => run_perm_vs_derange(cfg),
        Command::VarianceSweep => run_variance_sweep(cfg),
        Command::OracleCheck => run_oracle_check(cfg),
        Command::Timing => run_timing(cfg),
    }
}

fn run_staircases(cfg: &CliConfig) -> Result<bool> {
    let records = run_staircase_seeds::<f64>(&cfg.staircase, &cfg.seeds)?;
    let pairs: Vec<(u64, &RunRecord)> = cfg.seeds.iter().copied().zip(&records).collect();
    emit_outputs(cfg, &pairs, &cfg.out_dir)?;
    for (seed, r) in &pairs {
        print_steps(*seed, r, cfg.bits);
    }
    Ok(records.iter().any(RunRecord::diverged))
}

#[derive(Debug, Serialize)]
struct PermExtra<'a> {
    log_n: f64,
    permutation_estimate: f64,
    derangement_estimate: f64,
    permutation_below_bound: bool,
    derangement_above_log_n: bool,
    permutation_steps: &'a [StepSummary],
    permutation_diverged_at: Option<usize>,
}

fn run_perm_vs_derange(cfg: &CliConfig) -> Result<bool> {
    let mut staircase = cfg.staircase.clone();
    staircase.base.seed = cfg.seeds[0];
    staircase.base.data.seed = cfg.seeds[0];
    let res = permutation_vs_derangement::<f64>(&staircase)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    write(&cfg.out_dir.join("series_permutation.csv"), &series_csv(&res.permutation))?;
    let extra = PermExtra {
        log_n: res.log_n,
        permutation_estimate: res.permutation_estimate,
        derangement_estimate: res.derangement_estimate,
        permutation_below_bound: res.permutation_below_bound,
        derangement_above_log_n: res.derangement_above_log_n,
        permutation_steps: &res.permutation.summaries,
        permutation_diverged_at: res.permutation.diverged_at,
    };
    // series.csv and runs[] describe the derangement arm.
    emit_with_extra(cfg, &[(cfg.seeds[0], &res.derangement)], &cfg.out_dir, Some(extra))?;
    let (k, unit) = display_scale(cfg.bits);
    println!("ln N = {:.4} {unit}", res.log_n * k);
    println!("permutation estimate  {:.4} {unit}", res.permutation_estimate * k);
    println!("derangement estimate  {:.4} {unit}", res.derangement_estimate * k);
    Ok(res.permutation.diverged() || res.derangement.diverged())
}

fn run_variance_sweep(cfg: &CliConfig) -> Result<bool> {
    let points: Vec<VariancePoint> =
        variance_vs_batch_sweep::<f64>(&cfg.staircase.base, &cfg.batch_sizes, cfg.target_mi, &cfg.seeds)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    emit_with_extra(cfg, &[], &cfg.out_dir, Some(&points))?;
    let (k, unit) = display_scale(cfg.bits);
    println!("{:>8} {:>14} {:>14}   ({unit}^2)", "N", "variance", "variance*N");
    for p in &points {
        println!("{:>8} {:>14.6e} {:>14.6e}", p.batch_size, p.variance * k * k, p.variance_times_n * k * k);
    }
    Ok(points.iter().any(|p| !p.variance.is_finite()))
}

#[derive(Debug, Serialize)]
struct OracleExtra {
    true_mi: f64,
    rho: f64,
    mean: f64,
    variance: f64,
    predicted_variance: f64,
    variance_ratio: f64,
}

fn run_oracle_check(cfg: &CliConfig) -> Result<bool> {
    let b = &cfg.staircase.base;
    let oracle = GaussianOracle::for_target_mi(cfg.target_mi, b.data.d)?;
    let mut rng = seeded_rng(cfg.seeds[0]);
    let (mean, variance) = oracle_fdime_monte_carlo(&oracle, cfg.samples, cfg.trials, &mut rng)?;
    let predicted_variance = lemma4_variance_multivariate(oracle.d, oracle.rho, cfg.samples)?;
    let extra = OracleExtra {
        true_mi: oracle.mi(),
        rho: oracle.rho,
        mean,
        variance,
        predicted_variance,
        variance_ratio: variance / predicted_variance,
    };
    emit_with_extra(cfg, &[], &cfg.out_dir, Some(&extra))?;
    let (k, unit) = display_scale(cfg.bits);
    println!("true MI {:.6} {unit}, oracle mean {:.6} {unit}", extra.true_mi * k, mean * k);
    println!("variance {variance:.6e} nats^2, predicted {predicted_variance:.6e}, ratio {:.4}", extra.variance_ratio);
    Ok(false)
}

/// Every estimator at its default architecture, plus the selected estimator
/// on the joint architecture. NJEE is skipped above its dimension limit.
fn timing_entries(cfg: &CliConfig) -> Vec<(EstimatorKind, ArchitectureKind)> {
    let selected = cfg.staircase.base.estimator;
    let mut ests = vec![
        EstimatorKind::FDime(DivergenceKind::KL),
        EstimatorKind::FDime(DivergenceKind::GAN),
        EstimatorKind::FDime(DivergenceKind::HD),
        EstimatorKind::MINE_DEFAULT,
        EstimatorKind::Nwj,
        EstimatorKind::SMILE_DEFAULT,
        EstimatorKind::Cpc,
    ];
    if cfg.staircase.base.data.d <= fdime::estimators::NJEE_MAX_DIM {
        ests.push(EstimatorKind::Njee);
    } else {
        eprintln!("note: skipping njee (d = {} above its limit)", cfg.staircase.base.data.d);
    }
    let mut entries: Vec<_> = ests.into_iter().map(|e| (e, ArchitectureKind::default_for(&e))).collect();
    if selected != EstimatorKind::Njee && ArchitectureKind::default_for(&selected) != ArchitectureKind::Joint {
        entries.push((selected, ArchitectureKind::Joint));
    }
    entries
}

fn run_timing(cfg: &CliConfig) -> Result<bool> {
    let b = &cfg.staircase.base;
    let rows: Vec<TimingRow> = timing_harness::<f64>(&timing_entries(cfg), b.data.d, b.batch_size, &cfg.staircase)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let csv = timing_csv(&rows);
    write(&cfg.out_dir.join("timing.csv"), &csv)?;
    emit_with_extra(cfg, &[], &cfg.out_dir, Some(&rows))?;
    print!("{csv}");
    Ok(false)
}

/// Parses, runs and maps the outcome to a process exit code.
pub fn main_with(argv: &[String]) -> i32 {
    let cfg = match parse_args(argv) {
        Ok(cfg) => cfg,
        Err(CliError::Info(msg)) => {
            print!("{msg}");
            return 0;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&cfg) {
        Ok(false) => 0,
        Ok(true) => {
            eprintln!("warning: training diverged; summaries written to {}", cfg.out_dir.display());
            EXIT_DIVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
