mod config;
mod error;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use dhlcm::clustering::{misclustering_rate, rand_index, ScoreGuard};
use dhlcm::estimation::{diagnostics, fit_with_labels};
use dhlcm::simulation::run_experiment;
use dhlcm::spectral::DEFAULT_ITERATIONS;
use dhlcm::{
    global_test, hetero_clustering, ClusteringOptions, FittedModel, ModelFamily, NormalizationMode, ObservationMatrix,
    RegimeChoice, SpectralMethod,
};
use serde_json::json;

use crate::config::{SimulateConfig, DEFAULT_SEED};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "dhlcm", version, about = "Spectral clustering and inference for degree-heterogeneous latent class models")]
struct Cli {
    /// Suppress the text summary on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster subjects and write 1-based labels and the spectral embedding.
    Cluster(ClusterCmd),
    /// Estimate degrees, item parameters and their variances.
    Estimate(EstimateCmd),
    /// Test whether item parameters differ across classes.
    Test(TestCmd),
    /// Run a Monte-Carlo experiment described by a JSON config.
    Simulate(SimulateCmd),
    /// Summary quantities of an item-parameter matrix.
    Diagnose(DiagnoseCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bernoulli,
    Binomial,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Heteropca,
    Svd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Score,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Auto,
    ChiMax,
    Gumbel,
}

#[derive(Args)]
struct DataArgs {
    /// Response matrix: CSV or whitespace-delimited integers, one row per subject.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FamilyArg::Bernoulli)]
    family: FamilyArg,
    /// Number of trials; implies the binomial family.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    trials: Option<u32>,
}

impl DataArgs {
    fn family(&self) -> ModelFamily {
        match (self.family, self.trials) {
            (_, Some(m)) => ModelFamily::Binomial { trials: m },
            (FamilyArg::Binomial, None) => {
                usage_error(clap::error::ErrorKind::MissingRequiredArgument, "--family binomial requires --trials")
            }
            (FamilyArg::Bernoulli, None) => ModelFamily::Bernoulli,
            (FamilyArg::Poisson, None) => ModelFamily::Poisson,
        }
    }

    fn load(&self) -> Result<ObservationMatrix, CliError> {
        if self.trials.is_some() && !matches!(self.family, FamilyArg::Binomial | FamilyArg::Bernoulli) {
            usage_error(clap::error::ErrorKind::ArgumentConflict, "--trials is only valid for the binomial family");
        }
        io::read_observations(&self.input, self.family())
    }
}

#[derive(Args)]
struct ClusteringArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Heteropca)]
    method: MethodArg,
    #[arg(long = "normalize", value_enum, default_value_t = NormArg::L2)]
    normalize: NormArg,
    /// HeteroPCA iterations.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Clamp SCORE ratios at +-1e6 instead of failing on a vanishing first coordinate.
    #[arg(long)]
    score_clamp: bool,
}

impl ClusteringArgs {
    fn options(&self) -> ClusteringOptions {
        ClusteringOptions {
            iterations: self.iterations,
            normalization: match self.normalize {
                NormArg::L2 => NormalizationMode::L2,
                NormArg::Score => NormalizationMode::Score,
                NormArg::None => NormalizationMode::None,
            },
            method: match self.method {
                MethodArg::Heteropca => SpectralMethod::HeteroPca,
                MethodArg::Svd => SpectralMethod::PlainSvd,
            },
            restarts: self.restarts as usize,
            max_iter: self.max_iter as usize,
            seed: self.seed,
            score_guard: if self.score_clamp { ScoreGuard::Clamp } else { ScoreGuard::Error },
        }
    }
}

#[derive(Args)]
struct ClusterCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Number of latent classes.
    #[arg(short, long = "classes", value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[command(flatten)]
    clustering: ClusteringArgs,
    /// 1-based true labels; adds misclustering rate and Rand index to the output.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "dhlcm-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
#[group(id = "classes_or_labels", required = true, multiple = false, args = ["k", "labels"])]
struct LabelSource {
    /// Number of latent classes; labels are estimated by spectral clustering.
    #[arg(short, long = "classes", value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// 1-based class labels to use instead of clustering.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: LabelSource,
    #[command(flatten)]
    clustering: ClusteringArgs,
    #[arg(long, default_value = "dhlcm-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
#[group(id = "feature_set", required = true, multiple = false, args = ["features", "all"])]
struct FeatureSet {
    /// Comma-separated 1-based feature indices.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    features: Vec<u64>,
    /// Test every feature.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct TestCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: LabelSource,
    #[command(flatten)]
    clustering: ClusteringArgs,
    #[command(flatten)]
    set: FeatureSet,
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = RegimeArg::Auto)]
    regime: RegimeArg,
    /// Report Benjamini-Hochberg rejections over the tested features.
    #[arg(long)]
    bh: bool,
}

#[derive(Args)]
struct SimulateCmd {
    /// JSON experiment configuration.
    config: PathBuf,
    /// Overrides the replicate count in the config.
    #[arg(long)]
    replicates: Option<usize>,
    /// Overrides the base seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseCmd {
    /// J x K item-parameter matrix (CSV or whitespace-delimited).
    theta: PathBuf,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err("alpha must lie in (0, 1)".into())
    }
}

fn usage_error(kind: clap::error::ErrorKind, msg: &str) -> ! {
    Cli::command().error(kind, msg).exit()
}

struct Summary {
    quiet: bool,
    lines: Vec<(String, String)>,
}

impl Summary {
    fn new(quiet: bool) -> Self {
        Summary { quiet, lines: Vec::new() }
    }

    fn add(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_owned(), value.to_string()));
    }

    fn emit(self) {
        if self.quiet {
            return;
        }
        let width = self.lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in self.lines {
            eprintln!("{k:<width$}  {v}");
        }
    }
}

fn labels_from_file(path: &Path, n: usize) -> Result<(Vec<usize>, usize), CliError> {
    let labels = io::read_labels(path)?;
    if labels.len() != n {
        return Err(CliError::parse(path, labels.len(), format!("{} labels for {n} subjects", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok((labels, k))
}

/// Runs clustering or reads labels, then the estimation stage.
fn fit_model(
    obs: &ObservationMatrix,
    source: &LabelSource,
    clustering: &ClusteringArgs,
    summary: &mut Summary,
) -> Result<FittedModel, CliError> {
    let opts = clustering.options();
    let data = obs.to_matrix();
    match (&source.labels, source.k) {
        (Some(path), _) => {
            let (labels, k) = labels_from_file(path, obs.n_subjects())?;
            let embedding = dhlcm::clustering::embed(&data, k, &opts)?;
            summary.add("labels", path.display());
            Ok(fit_with_labels(&data, obs.family(), &embedding, &labels, k)?)
        }
        (None, Some(k)) => {
            let k = k as usize;
            let (assignment, embedding) = hetero_clustering(obs, k, &opts)?;
            summary.add("inertia", assignment.inertia);
            Ok(fit_with_labels(&data, obs.family(), &embedding, &assignment.labels, k)?)
        }
        (None, None) => unreachable!("clap enforces one label source"),
    }
}

fn cmd_cluster(cmd: &ClusterCmd, summary: &mut Summary) -> Result<(), CliError> {
    let obs = cmd.data.load()?;
    let k = cmd.k as usize;
    let opts = cmd.clustering.options();
    let (assignment, embedding) = hetero_clustering(&obs, k, &opts)?;
    let labels_path = io::out_path(&cmd.out_dir, "labels.txt");
    let embedding_path = io::out_path(&cmd.out_dir, "embedding.csv");
    io::write_labels(&labels_path, &assignment.labels)?;
    io::write_matrix(&embedding_path, &embedding.u)?;
    let (mut h, mut ri) = (None, None);
    if let Some(path) = &cmd.truth {
        let (truth, _) = labels_from_file(path, obs.n_subjects())?;
        h = Some(misclustering_rate(&truth, &assignment.labels)?);
        ri = Some(rand_index(&truth, &assignment.labels)?);
    }
    let record = json!({
        "command": "cluster",
        "subjects": obs.n_subjects(),
        "features": obs.n_features(),
        "k": k,
        "method": opts.method,
        "normalization": opts.normalization,
        "seed": opts.seed,
        "inertia": assignment.inertia,
        "restarts_used": assignment.restarts_used,
        "eigenvalues": embedding.eigenvalues,
        "labels_file": labels_path,
        "embedding_file": embedding_path,
        "misclustering_rate": h,
        "rand_index": ri,
    });
    println!("{record}");
    summary.add("subjects", obs.n_subjects());
    summary.add("classes", k);
    summary.add("inertia", assignment.inertia);
    summary.add("labels", labels_path.display());
    if let (Some(h), Some(ri)) = (h, ri) {
        summary.add("misclustering", h);
        summary.add("rand index", ri);
    }
    Ok(())
}

fn cmd_estimate(cmd: &EstimateCmd, summary: &mut Summary) -> Result<(), CliError> {
    let obs = cmd.data.load()?;
    let model = fit_model(&obs, &cmd.source, &cmd.clustering, summary)?;
    let dir = &cmd.out_dir;
    let files = [
        io::out_path(dir, "theta.csv"),
        io::out_path(dir, "degrees.csv"),
        io::out_path(dir, "sigma2.csv"),
        io::out_path(dir, "labels.txt"),
    ];
    io::write_matrix(&files[0], &model.theta_hat)?;
    io::write_vector(&files[1], &model.degrees_hat)?;
    io::write_matrix(&files[2], &model.sigma2_hat)?;
    io::write_labels(&files[3], &model.labels_hat)?;
    let not_testable: Vec<usize> =
        (0..obs.n_features()).filter(|&j| !model.feature_testable(j)).map(|j| j + 1).collect();
    let record = json!({
        "command": "estimate",
        "family": obs.family(),
        "subjects": obs.n_subjects(),
        "features": obs.n_features(),
        "k": model.k(),
        "cluster_sizes": model.cluster_sizes,
        "clamped_summands": model.clamped_summands,
        "not_testable": not_testable,
        "theta_file": files[0],
        "degrees_file": files[1],
        "sigma2_file": files[2],
        "labels_file": files[3],
    });
    println!("{record}");
    summary.add("family", obs.family().name());
    summary.add("cluster sizes", format!("{:?}", model.cluster_sizes));
    summary.add("not testable", not_testable.len());
    summary.add("theta", files[0].display());
    Ok(())
}

fn cmd_test(cmd: &TestCmd, summary: &mut Summary) -> Result<(), CliError> {
    let obs = cmd.data.load()?;
    let j = obs.n_features();
    let features: Vec<usize> = if cmd.set.all {
        (0..j).collect()
    } else {
        cmd.set.features.iter().map(|&f| f as usize - 1).collect()
    };
    if let Some(&f) = features.iter().find(|&&f| f >= j) {
        return Err(CliError::Usage(format!("feature {} exceeds the {j} features in the input", f + 1)));
    }
    let model = fit_model(&obs, &cmd.source, &cmd.clustering, summary)?;
    let regime = match cmd.regime {
        RegimeArg::Auto => RegimeChoice::Auto,
        RegimeArg::ChiMax => RegimeChoice::ChiSquareMax,
        RegimeArg::Gumbel => RegimeChoice::Gumbel,
    };
    let report = global_test(&model.theta_hat, &model.sigma2_hat, &features, cmd.alpha, regime)?;
    let one_based = |v: &[usize]| v.iter().map(|f| f + 1).collect::<Vec<_>>();
    let mut record = json!({
        "command": "test",
        "regime": report.regime,
        "alpha": report.alpha,
        "features": one_based(&report.feature_ids),
        "not_testable": one_based(&report.not_testable),
        "statistics": report.per_feature_stats,
        "pvalues": report.per_feature_pvalues,
        "global_statistic": report.global_stat,
        "global_pvalue": report.global_pvalue,
        "threshold": report.threshold,
        "reject": report.reject,
    });
    if cmd.bh {
        record["bh_rejections"] = json!(one_based(&report.bh_rejections));
    }
    println!("{record}");
    summary.add("tested", report.feature_ids.len());
    summary.add("regime", format!("{:?}", report.regime));
    summary.add("statistic", report.global_stat);
    summary.add("threshold", report.threshold);
    summary.add("p-value", report.global_pvalue);
    summary.add("decision", if report.reject { "reject" } else { "retain" });
    if cmd.bh {
        summary.add("BH rejections", report.bh_rejections.len());
    }
    Ok(())
}

fn cmd_simulate(cmd: &SimulateCmd, summary: &mut Summary) -> Result<(), CliError> {
    let cfg = SimulateConfig::load(&cmd.config)?;
    let experiment = cfg.to_experiment()?;
    let replicates = cmd.replicates.or(cfg.replicates).unwrap_or(100);
    let seed = cmd.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let report = run_experiment(cfg.scenario, &experiment, replicates, seed, cmd.jobs as usize)?;
    let mut body = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    body.push('\n');
    match &cmd.output {
        Some(path) => io::write_text(path, &body)?,
        None => print!("{body}"),
    }
    let a = &report.aggregates;
    summary.add("scenario", format!("{:?}", report.scenario));
    summary.add("replicates", format!("{} completed, {} failed", a.completed, a.failed));
    let opt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
    match report.scenario {
        dhlcm::simulation::Scenario::TypeIPower => {
            summary.add("type I rate", opt(a.type_i_rate));
            summary.add("power", opt(a.power));
        }
        dhlcm::simulation::Scenario::Fdr => {
            summary.add("false discoveries", opt(a.mean_false_discoveries));
            summary.add("true discoveries", opt(a.mean_true_discoveries));
            summary.add("mean FDP", opt(a.mean_fdp));
        }
        _ => {
            for m in &a.methods {
                summary.add(
                    &format!("{:?}/{:?}", m.method, m.normalization),
                    format!(
                        "h {}  subspace {}  theta err {}",
                        opt(m.mean_misclustering),
                        opt(m.mean_subspace_error),
                        opt(m.mean_theta_max_error)
                    ),
                );
            }
        }
    }
    summary.add("runtime (s)", format!("{:.2}", report.runtime_secs));
    Ok(())
}

fn cmd_diagnose(cmd: &DiagnoseCmd, summary: &mut Summary) -> Result<(), CliError> {
    let theta = io::read_real_matrix(&cmd.theta)?;
    let d = diagnostics(&theta).map_err(|e| CliError::data(&cmd.theta, e))?;
    let mut record = serde_json::to_value(&d).map_err(|e| CliError::Usage(e.to_string()))?;
    record["command"] = json!("diagnose");
    println!("{record}");
    summary.add("delta", d.delta);
    summary.add("sigma_K", d.sigma_star);
    summary.add("kappa", d.kappa);
    summary.add("mu_theta", d.mu_theta);
    summary.add("theta_max", d.theta_max);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut summary = Summary::new(cli.quiet);
    let result = match &cli.command {
        Command::Cluster(c) => cmd_cluster(c, &mut summary),
        Command::Estimate(c) => cmd_estimate(c, &mut summary),
        Command::Test(c) => cmd_test(c, &mut summary),
        Command::Simulate(c) => cmd_simulate(c, &mut summary),
        Command::Diagnose(c) => cmd_diagnose(c, &mut summary),
    };
    match result {
        Ok(()) => {
            summary.emit();
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
