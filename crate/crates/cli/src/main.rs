use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use deepblr::artifact::{fit_artifact, FitConfig, ModelArtifact};
use deepblr::data::registry::{data_dir, DATA_DIR_ENV};
use deepblr::data::{load_csv, run_benchmark, DatasetSpec, Method, ProtocolConfig};
use deepblr::ensemble::PriorVariance;
use deepblr::mbrl::{pets_loop, DynamicsKind, PetsConfig};
use deepblr::toy::{run_toy1d, Toy1dConfig};
use deepblr::EnsembleKind;

#[derive(Parser, Debug)]
#[command(name = "deepblr", version, about = "Deep Bayesian linear regression and baselines")]
struct Cli {
    /// Log level filter (overridden by RUST_LOG).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the repeated-split regression benchmark on one dataset.
    Bench(BenchArgs),
    /// Fit Deep BLR on the synthetic 1-D task and export its predictive bands.
    Toy1d(ToyArgs),
    /// Model-based RL on the cart-pole swing-up.
    Rl(RlArgs),
    /// Train a model on a CSV file and save it.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct TrainingArgs {
    /// Hidden units (default: per dataset, or 50).
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Fixed prior variance instead of a grid search.
    #[arg(long, conflicts_with = "g_grid")]
    g: Option<f64>,
    /// Comma-separated prior-variance grid.
    #[arg(long, value_delimiter = ',')]
    g_grid: Option<Vec<f64>>,
    /// Append a constant feature to the BLR design.
    #[arg(long)]
    bias_feature: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Registered dataset name, or a path to a CSV file (then --target is required).
    #[arg(long)]
    dataset: String,
    #[arg(long, value_parser = clap::value_parser!(Method))]
    method: Method,
    /// Number of random splits (default: per dataset).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    splits: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target column; for registered datasets one of the candidate targets.
    #[arg(long)]
    target: Option<String>,
    /// Keep this fraction of the rows (seeded), e.g. for smoke runs on large sets.
    #[arg(long)]
    subsample: Option<f64>,
    /// Data directory (default: $DEEPBLR_DATA_DIR or ./data).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    /// Fixed prior variance instead of a grid search.
    #[arg(long)]
    g: Option<f64>,
}

#[derive(Args, Debug)]
struct RlArgs {
    /// single, ensemble, blr or blr-ensemble.
    #[arg(long, value_parser = clap::value_parser!(DynamicsKind))]
    model: DynamicsKind,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Several seeds: `0..10` or `1,2,5`. One output file per seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<::std::vec::Vec<u64>>,
    /// Output CSV for a single seed; with --seeds, files are written next to it as
    /// `<stem>_seed<k>.csv`.
    #[arg(long, default_value = "rl.csv")]
    out: PathBuf,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    elites: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column(s); all other columns are features.
    #[arg(long, required = true, value_delimiter = ',')]
    target: Vec<String>,
    /// single_nn, nn_ensemble, mc_dropout, blr or blr_ensemble.
    #[arg(long, default_value = "blr", value_parser = clap::value_parser!(EnsembleKind))]
    method: EnsembleKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input CSV; columns are matched by feature name, else by position.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|e| format!("bad seed {t:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(seeds)
}

/// Reports a flag combination that parsed but makes no sense, with exit code 2.
fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, msg).exit()
}

fn apply_training(args: &TrainingArgs, hidden: &mut usize, train: &mut deepblr::TrainConfig, size: &mut usize, prior: &mut PriorVariance, bias: &mut bool) {
    if let Some(h) = args.hidden {
        *hidden = h;
    }
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    if let Some(b) = args.batch_size {
        train.batch_size = b;
    }
    if let Some(lr) = args.lr {
        train.learning_rate = lr;
    }
    if let Some(m) = args.ensemble_size {
        *size = m;
    }
    if let Some(g) = args.g {
        *prior = PriorVariance::Fixed(g);
    }
    if let Some(grid) = &args.g_grid {
        if let PriorVariance::GridSearch { grid: current, .. } = prior {
            *current = grid.clone();
        }
    }
    *bias |= args.bias_feature;
}

fn validate_training(args: &TrainingArgs) {
    if args.hidden == Some(0) || args.epochs == Some(0) || args.batch_size == Some(0) || args.ensemble_size == Some(0) {
        usage_error("--hidden, --epochs, --batch-size and --ensemble-size must be positive");
    }
    if args.lr.is_some_and(|lr| !(lr > 0.0)) || args.g.is_some_and(|g| !(g > 0.0)) {
        usage_error("--lr and --g must be positive");
    }
    if args.g_grid.as_ref().is_some_and(|g| g.is_empty() || g.iter().any(|v| !(*v > 0.0))) {
        usage_error("--g-grid needs positive values");
    }
}

fn write_output(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    validate_training(&args.training);
    if args.subsample.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
        usage_error("--subsample must be in (0, 1]");
    }
    let dir = args.data_dir.clone().unwrap_or_else(data_dir);
    let (mut dataset, mut config, default_splits) = match DatasetSpec::lookup(&args.dataset) {
        Some(spec) => {
            if let Some(t) = &args.target {
                if !spec.targets.contains(&t.as_str()) {
                    usage_error(format!("{} has targets {:?}", spec.name, spec.targets));
                }
            }
            let ds = spec
                .load(&dir, args.target.as_deref())
                .with_context(|| format!("loading {} from {} (set {DATA_DIR_ENV} or --data-dir)", spec.name, dir.display()))?;
            (ds, ProtocolConfig::for_dataset(spec), spec.n_splits)
        }
        None => {
            let path = Path::new(&args.dataset);
            if !path.is_file() {
                usage_error(format!("{:?} is neither a known dataset nor a CSV file", args.dataset));
            }
            let Some(target) = &args.target else {
                usage_error("--target is required for a CSV dataset");
            };
            (load_csv(path, &[target.as_str()])?, ProtocolConfig::default(), 20)
        }
    };
    if let Some(f) = args.subsample {
        dataset = dataset.subsample(f, args.seed);
    }
    let t = &args.training;
    apply_training(t, &mut config.hidden_units, &mut config.train, &mut config.ensemble_size, &mut config.ensemble.prior_variance, &mut config.ensemble.bias_feature);
    let splits = args.splits.map_or(default_splits, |s| s as usize);
    let record = run_benchmark(&dataset, args.method, splits, args.seed, &config)?;
    println!("{}", record.table_row());
    if record.failed_splits() > 0 {
        eprintln!("warning: {} of {} splits failed", record.failed_splits(), record.per_split.len());
    }
    if let Some(out) = &args.out {
        write_output(out, serde_json::to_string_pretty(&record)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_toy1d(args: ToyArgs) -> anyhow::Result<()> {
    if args.points < 2 || args.epochs == 0 || args.hidden == 0 || args.g.is_some_and(|g| !(g > 0.0)) {
        usage_error("--points must be >= 2; --epochs, --hidden and --g must be positive");
    }
    let mut config = Toy1dConfig {
        grid_points: args.points,
        hidden_units: args.hidden,
        prior_variance: args.g,
        seed: args.seed,
        ..Toy1dConfig::default()
    };
    config.train.epochs = args.epochs;
    let result = run_toy1d(&config)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    write_output(&args.out, &buf)?;
    println!("toy1d: g = {}, {} grid points -> {}", result.prior_variance, result.grid.len(), args.out.display());
    Ok(())
}

fn seed_path(out: &Path, seed: u64, ext: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "rl".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_seed{seed}.{ext}"))
}

fn cmd_rl(args: RlArgs) -> anyhow::Result<()> {
    let mut config = PetsConfig {
        episodes: args.episodes as usize,
        ..PetsConfig::default()
    };
    let cem = &mut config.cem;
    for (flag, value) in [
        (&mut cem.horizon, args.horizon),
        (&mut cem.population, args.population),
        (&mut cem.elites, args.elites),
        (&mut cem.iterations, args.iterations),
        (&mut cem.particles, args.particles),
        (&mut config.dynamics.hidden_units, args.hidden),
        (&mut config.dynamics.train.epochs, args.epochs),
    ] {
        if let Some(v) = value {
            *flag = v;
        }
    }
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    if config.dynamics.hidden_units == 0 {
        usage_error("--hidden must be positive");
    }
    let multi = args.seeds.is_some();
    let seeds = args.seeds.unwrap_or_else(|| vec![args.seed.unwrap_or(0)]);
    let mut failed = false;
    for seed in seeds {
        let run = pets_loop(args.model, &config, seed);
        let (csv_path, json_path) = if multi {
            (seed_path(&args.out, seed, "csv"), seed_path(&args.out, seed, "json"))
        } else {
            (args.out.clone(), args.out.with_extension("json"))
        };
        let mut buf = Vec::new();
        run.write_csv(&mut buf)?;
        write_output(&csv_path, &buf)?;
        write_output(&json_path, serde_json::to_string_pretty(&run)?.as_bytes())?;
        let returns: Vec<String> = run.returns().iter().map(|r| format!("{r:.1}")).collect();
        println!("{} seed {seed}: returns [{}] -> {}", args.model, returns.join(", "), csv_path.display());
        if let Some(e) = &run.error {
            eprintln!("error: {} seed {seed}: {e}", args.model);
            failed = true;
        }
    }
    if failed {
        bail!("some runs stopped early; partial results were saved");
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    validate_training(&args.training);
    let targets: Vec<&str> = args.target.iter().map(String::as_str).collect();
    let data = load_csv(&args.data, &targets).with_context(|| format!("reading {}", args.data.display()))?;
    let mut config = FitConfig {
        method: args.method,
        seed: args.seed,
        ..FitConfig::default()
    };
    apply_training(&args.training, &mut config.hidden_units, &mut config.train, &mut config.ensemble_size, &mut config.ensemble.prior_variance, &mut config.ensemble.bias_feature);
    let artifact = fit_artifact(&data, &config)?;
    artifact.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let g = artifact.model.prior_variances().map(|g| format!(", g = {g:?}")).unwrap_or_default();
    println!("fit {} on {} rows{g} -> {}", args.method, data.len(), args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let artifact = ModelArtifact::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let x = artifact.read_features(&args.data)?;
    let preds = artifact.predict(&x)?;
    let mut out = String::new();
    out.push_str(&format!(
        "# config: {}\n",
        serde_json::json!({"model": args.model, "method": artifact.config.method, "fit": artifact.config})
    ));
    let header: Vec<String> = artifact
        .target_names
        .iter()
        .flat_map(|t| [format!("{t}_mean"), format!("{t}_aleatoric_std"), format!("{t}_total_std")])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in &preds {
        let cells: Vec<String> = (0..p.mean.len())
            .flat_map(|d| [p.mean[d], p.aleatoric_std[d], p.total_std[d]])
            .map(|v| v.to_string())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_output(&args.out, out.as_bytes())?;
    println!("predicted {} rows -> {}", preds.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).parse_default_env().init();
    let result = match cli.command {
        Command::Bench(a) => cmd_bench(a),
        Command::Toy1d(a) => cmd_toy1d(a),
        Command::Rl(a) => cmd_rl(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
