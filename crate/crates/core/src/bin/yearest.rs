//! Batch CLI for the year-estimation pipelines: dataset preparation,
//! synthetic data, feature extraction, training, evaluation, and reports.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use yearest::checkpoint::{self, Checkpoint};
use yearest::data::{
    build_manifest, generate_synthetic_with, DatasetManifest, Split, SplitCounts, SynthParams,
};
use yearest::error::Error;
use yearest::eval::report::{
    render_confusion_heatmap, write_confusion_csv, write_metrics_csv, write_per_sample_csv,
    write_ranking_csvs, MetricsRow,
};
use yearest::eval::{
    build_report, constant_baseline, linear_predict, linear_regression_fit, residual_ranking,
    EvalReport, PerSample,
};
use yearest::features::kmeans::{kmeans_fit, Codebook};
use yearest::model::Network;
use yearest::pipeline::{
    descriptors_for_image, load_method_inputs, FeatureOptions, LoadedDataset, Method,
};
use yearest::run::{ArchChoice, LossChoice, RunConfig, RunMethod, RunPaths};
use yearest::trainer::{
    self, load_train_state, save_train_state, TrainState, HISTORY_CSV_HEADER,
};

#[derive(Parser)]
#[command(name = "yearest", version, about = "Year estimation from title images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset manifest over <root>/<year>/ image directories.
    Prepare {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Per-year split sizes as train,val,test.
        #[arg(long, default_value = "20,8,28")]
        splits: String,
        /// Per-year quota; defaults to the split total.
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long, default_value_t = 1932)]
        base_year: i32,
        /// Require every year in an inclusive range, e.g. 1932-2016.
        #[arg(long)]
        years: Option<String>,
        /// Output path; defaults to <root>/manifest.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic title-image dataset.
    Synth {
        #[arg(long)]
        root: PathBuf,
        /// Inclusive year range, e.g. 1935-2005.
        #[arg(long)]
        years: String,
        #[arg(long, default_value_t = 1)]
        year_step: usize,
        #[arg(long, default_value_t = 40)]
        per_year: usize,
        #[arg(long, default_value_t = 0.0)]
        outlier_rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Render smaller canvases (quick experiments).
        #[arg(long)]
        small: bool,
    },
    /// Extract descriptors for every manifest image into a cache directory.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value_t = 500)]
        max_keypoints: usize,
    },
    /// Fit a k-means codebook on training-split descriptors.
    FitCodebook {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_keypoints: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method/loss combination into a run directory.
    Train(TrainArgs),
    /// Evaluate a run on the test split and write report CSVs.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Run the full method x loss grid plus the two baselines.
    Grid(GridArgs),
    /// Residual rankings and confusion heatmap for an evaluated run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 4)]
        per_decade_k: usize,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// image | shape | feature | constant | linear.
    #[arg(long)]
    method: Option<String>,
    /// l1 | mse | tukey | mse_tukey (omit for baselines).
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Integer or 'none'.
    #[arg(long)]
    patience: Option<String>,
    /// Integer or 'none'.
    #[arg(long)]
    forced_switch: Option<String>,
    #[arg(long)]
    switch_delay: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// full | small.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_keypoints: Option<usize>,
    /// raw | l1.
    #[arg(long)]
    bovw_norm: Option<String>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    tukey_c: Option<f64>,
    #[arg(long)]
    no_mad_scaling: bool,
    #[arg(long, default_value = "runs")]
    out_root: PathBuf,
    /// Continue from this run's saved training state.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "runs")]
    out_root: PathBuf,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    forced_switch: Option<String>,
    #[arg(long)]
    switch_delay: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_keypoints: Option<usize>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    tukey_c: Option<f64>,
}

enum CliError {
    /// Bad flags, invalid combinations, deficient datasets: exit 2.
    Usage(String),
    /// Everything that failed at run time: exit 1.
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Dataset(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Prepare {
            root,
            seed,
            splits,
            quota,
            base_year,
            years,
            out,
        } => cmd_prepare(&root, seed, &splits, quota, base_year, years.as_deref(), out),
        Command::Synth {
            root,
            years,
            year_step,
            per_year,
            outlier_rate,
            seed,
            small,
        } => cmd_synth(&root, &years, year_step, per_year, outlier_rate, seed, small),
        Command::ExtractFeatures {
            manifest,
            cache,
            max_keypoints,
        } => cmd_extract_features(&manifest, &cache, max_keypoints),
        Command::FitCodebook {
            manifest,
            cache,
            k,
            seed,
            max_keypoints,
            out,
        } => cmd_fit_codebook(&manifest, cache.as_deref(), k, seed, max_keypoints, &out),
        Command::Train(args) => {
            let out_root = args.out_root.clone();
            let resume = args.resume;
            let cfg = build_run_config(&args)?;
            cmd_train(&cfg, &out_root, resume).map(|_| ())
        }
        Command::Evaluate { run } => cmd_evaluate(&run).map(|_| ()),
        Command::Grid(args) => cmd_grid(&args),
        Command::Report {
            run,
            per_decade_k,
            top_n,
        } => cmd_report(&run, per_decade_k, top_n),
    }
}

fn parse_splits(s: &str) -> Result<SplitCounts, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--splits wants train,val,test, got '{s}'"
        )));
    }
    let parse = |p: &str| -> Result<usize, CliError> {
        p.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad split count '{p}'")))
    };
    Ok(SplitCounts {
        train: parse(parts[0])?,
        val: parse(parts[1])?,
        test: parse(parts[2])?,
    })
}

fn parse_year_range(s: &str) -> Result<(i32, i32), CliError> {
    let (lo, hi) = s
        .split_once('-')
        .ok_or_else(|| CliError::Usage(format!("--years wants START-END, got '{s}'")))?;
    let lo: i32 = lo
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad year '{lo}'")))?;
    let hi: i32 = hi
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad year '{hi}'")))?;
    if hi < lo {
        return Err(CliError::Usage(format!("empty year range '{s}'")));
    }
    Ok((lo, hi))
}

fn cmd_prepare(
    root: &Path,
    seed: u64,
    splits: &str,
    quota: Option<usize>,
    base_year: i32,
    years: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let splits = parse_splits(splits)?;
    let quota = quota.unwrap_or_else(|| splits.total());
    let range = years.map(parse_year_range).transpose()?;
    let manifest = build_manifest(root, seed, quota, splits, base_year, range)?;
    let out = out.unwrap_or_else(|| root.join("manifest.csv"));
    manifest.save(&out)?;
    let (train, val, test) = manifest.split_counts();
    println!(
        "manifest {} written: {train} train / {val} val / {test} test",
        out.display()
    );
    Ok(())
}

fn cmd_synth(
    root: &Path,
    years: &str,
    year_step: usize,
    per_year: usize,
    outlier_rate: f64,
    seed: u64,
    small: bool,
) -> Result<(), CliError> {
    let (lo, hi) = parse_year_range(years)?;
    if year_step == 0 {
        return Err(CliError::Usage("--year-step must be positive".into()));
    }
    let years: Vec<i32> = (lo..=hi).step_by(year_step).collect();
    let params = if small {
        SynthParams::small()
    } else {
        SynthParams::default()
    };
    let summary = generate_synthetic_with(root, &years, per_year, outlier_rate, seed, &params)?;
    println!(
        "wrote {} images ({} outliers) across {} years under {}",
        summary.images_written,
        summary.outliers,
        years.len(),
        root.display()
    );
    Ok(())
}

fn cmd_extract_features(
    manifest_path: &Path,
    cache: &Path,
    max_keypoints: usize,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_root(manifest_path);
    std::fs::create_dir_all(cache).map_err(Error::from)?;
    let mut total = 0usize;
    for s in &manifest.samples {
        total += descriptors_for_image(&root.join(&s.path), Some(cache), max_keypoints)?.len();
    }
    println!(
        "cached descriptors for {} images ({} keypoints) in {}",
        manifest.samples.len(),
        total,
        cache.display()
    );
    Ok(())
}

fn cmd_fit_codebook(
    manifest_path: &Path,
    cache: Option<&Path>,
    k: usize,
    seed: u64,
    max_keypoints: usize,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_root(manifest_path);
    let mut train_descs: Vec<Vec<f64>> = Vec::new();
    for s in manifest.split(Split::Train) {
        let ds = descriptors_for_image(&root.join(&s.path), cache, max_keypoints)?;
        train_descs.extend(ds.into_iter().map(|d| d.vector));
    }
    let codebook = kmeans_fit(&train_descs, k, seed)?;
    codebook.save(out)?;
    println!(
        "codebook k={k} fitted on {} descriptors (inertia {:.4}) -> {}",
        train_descs.len(),
        codebook.inertia,
        out.display()
    );
    Ok(())
}

fn build_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &args.manifest {
        cfg.manifest = m.to_string_lossy().into_owned();
    }
    if let Some(m) = &args.method {
        cfg.method = RunMethod::parse(m)?;
        if cfg.method.is_baseline() && args.loss.is_none() {
            cfg.loss = None;
        }
    }
    if let Some(l) = &args.loss {
        cfg.loss = if l == "none" {
            None
        } else {
            Some(LossChoice::parse(l)?)
        };
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = &args.patience {
        cfg.set("patience", v)?;
    }
    if let Some(v) = &args.forced_switch {
        cfg.set("forced_switch_epoch", v)?;
    }
    if let Some(v) = args.switch_delay {
        cfg.switch_delay = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.arch {
        cfg.arch = ArchChoice::parse(v)?;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.max_keypoints {
        cfg.max_keypoints = v;
    }
    if let Some(v) = &args.bovw_norm {
        cfg.set("bovw_norm", v)?;
    }
    if let Some(v) = &args.codebook {
        cfg.codebook = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = &args.cache {
        cfg.cache_dir = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = args.tukey_c {
        cfg.tukey_c = v;
    }
    if args.no_mad_scaling {
        cfg.mad_scaling = false;
    }
    if cfg.manifest.is_empty() {
        return Err(CliError::Usage("--manifest is required".into()));
    }
    Ok(cfg)
}

fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads the dataset a run's config describes. For feature-space methods the
/// codebook comes from the config, the run directory, or a fresh fit on the
/// training split (saved into the run directory).
fn load_run_dataset(
    cfg: &RunConfig,
    paths: &RunPaths,
    fit_codebook_if_missing: bool,
) -> Result<LoadedDataset, CliError> {
    let manifest_path = PathBuf::from(&cfg.manifest);
    let manifest = DatasetManifest::load(&manifest_path)?;
    let root = manifest_root(&manifest_path);
    let method = cfg
        .method
        .pipeline_method()
        .ok_or_else(|| CliError::Usage("constant baseline loads no inputs".into()))?;
    let feature_opts = if method == Method::Feature {
        let codebook = match &cfg.codebook {
            Some(path) => Some(Codebook::load(Path::new(path))?),
            None if paths.codebook().exists() => Some(Codebook::load(&paths.codebook())?),
            None if fit_codebook_if_missing => None,
            None => {
                return Err(CliError::Runtime(format!(
                    "no codebook for run {}; train first or pass one in the config",
                    paths.dir.display()
                )))
            }
        };
        Some(FeatureOptions {
            k: cfg.k,
            max_keypoints: cfg.max_keypoints,
            norm: cfg.bovw_norm,
            seed: cfg.seed,
            cache_dir: cfg.cache_dir.as_ref().map(PathBuf::from),
            codebook,
        })
    } else {
        None
    };
    let ds = load_method_inputs(&manifest, &root, method, feature_opts.as_ref())?;
    Ok(ds)
}

fn network_for(cfg: &RunConfig) -> Result<Network, CliError> {
    let arch = match cfg.method {
        RunMethod::Image => cfg.arch.cnn_spec(3),
        RunMethod::Shape => cfg.arch.cnn_spec(1),
        RunMethod::Feature => yearest::model::ArchSpec::mlp_regressor(cfg.k),
        _ => return Err(CliError::Usage("baselines have no network".into())),
    };
    let mut net = Network::from_arch(&arch)?;
    net.init_parameters(cfg.seed);
    Ok(net)
}

const STATE_SAVE_INTERVAL: u32 = 25;

fn cmd_train(cfg: &RunConfig, out_root: &Path, resume: bool) -> Result<RunPaths, CliError> {
    cfg.validate()?;
    let paths = RunPaths::new(out_root, cfg);
    std::fs::create_dir_all(&paths.dir).map_err(Error::from)?;
    std::fs::write(paths.config(), cfg.to_text()).map_err(Error::from)?;

    if cfg.method.is_baseline() {
        return train_baseline(cfg, paths);
    }

    let ds = load_run_dataset(cfg, &paths, true)?;
    if let Some(cb) = &ds.codebook {
        if cfg.codebook.is_none() {
            cb.save(&paths.codebook())?;
        }
    }
    let train_pairs = ds.pairs(Split::Train);
    let val_pairs = ds.pairs(Split::Val);

    let (mut net, state) = if resume && paths.train_state().exists() {
        let (net, state) = load_train_state(&paths.train_state())?;
        truncate_history(&paths.history(), state.epoch_completed)?;
        println!("resuming from epoch {}", state.epoch_completed);
        (net, state)
    } else {
        let net = network_for(cfg)?;
        std::fs::write(paths.history(), HISTORY_CSV_HEADER).map_err(Error::from)?;
        let state = TrainState::fresh(&cfg.train_config()?);
        (net, state)
    };

    let train_cfg = cfg.train_config()?;
    let history_path = paths.history();
    let state_path = paths.train_state();
    let epochs = train_cfg.epochs;
    let mut callback = |record: &trainer::EpochRecord,
                        net: &Network,
                        state: &TrainState|
     -> yearest::Result<()> {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&history_path)?;
        f.write_all(record.csv_row().as_bytes())?;
        if record.epoch % STATE_SAVE_INTERVAL == 0 || record.epoch == epochs {
            save_train_state(&state_path, net, state)?;
        }
        Ok(())
    };
    let outcome = trainer::train(
        &mut net,
        &train_pairs,
        &val_pairs,
        &train_cfg,
        state,
        Some(&mut callback),
    )?;

    let state = outcome.state;
    save_train_state(&paths.train_state(), &net, &state)?;
    if let Some(best) = &state.best_overall {
        let mut best_net = Network::from_arch(net.arch())?;
        best_net.restore_params(&best.params)?;
        checkpoint::save_network(&paths.best_checkpoint(), &best_net)?;
    }
    for (name, snapshot) in [
        ("mse", &state.best_mse_phase),
        ("tukey", &state.best_tukey_phase),
    ] {
        if let Some(b) = snapshot {
            let mut phase_net = Network::from_arch(net.arch())?;
            phase_net.restore_params(&b.params)?;
            checkpoint::save_network(&paths.phase_checkpoint(name), &phase_net)?;
        }
    }

    let switch = state
        .controller
        .as_ref()
        .and_then(|c| c.switch_epoch())
        .map(|e| format!("switched to tukey at epoch {e}"))
        .unwrap_or_else(|| "no loss switch".into());
    let best_mae = state
        .best_overall
        .as_ref()
        .map(|b| format!("{:.4} (epoch {})", b.metric, b.epoch))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "run {} complete: {}; best val MAE {}",
        paths.dir.display(),
        switch,
        best_mae
    );
    Ok(paths)
}

fn train_baseline(cfg: &RunConfig, paths: RunPaths) -> Result<RunPaths, CliError> {
    match cfg.method {
        RunMethod::Constant => {
            let manifest = DatasetManifest::load(Path::new(&cfg.manifest))?;
            let targets: Vec<f64> = manifest.split(Split::Train).map(|s| s.year_norm).collect();
            let mean = constant_baseline(&targets)?;
            checkpoint::save_constant(&paths.best_checkpoint(), mean)?;
            println!(
                "constant baseline {} written (mean year {mean})",
                paths.dir.display()
            );
        }
        RunMethod::Linear => {
            let ds = load_run_dataset(cfg, &paths, true)?;
            if let Some(cb) = &ds.codebook {
                if cfg.codebook.is_none() {
                    cb.save(&paths.codebook())?;
                }
            }
            let train = ds.split_refs(Split::Train);
            let x: Vec<Vec<f64>> = train.iter().map(|s| s.input.data().to_vec()).collect();
            let y: Vec<f64> = train.iter().map(|s| s.target).collect();
            let coeffs = linear_regression_fit(&x, &y)?;
            checkpoint::save_linear(&paths.best_checkpoint(), &coeffs)?;
            println!("linear baseline {} written", paths.dir.display());
        }
        _ => unreachable!("train_baseline called for a learned method"),
    }
    Ok(paths)
}

fn truncate_history(path: &Path, epoch_completed: u32) -> Result<(), CliError> {
    if !path.exists() {
        std::fs::write(path, HISTORY_CSV_HEADER).map_err(Error::from)?;
        return Ok(());
    }
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let epoch: u32 = line
            .split(',')
            .next()
            .and_then(|t| t.parse().ok())
            .unwrap_or(u32::MAX);
        if epoch <= epoch_completed {
            out.push_str(line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(Error::from)?;
    Ok(())
}

/// Predictions for the test split under whatever the run's checkpoint holds.
fn test_predictions(
    cfg: &RunConfig,
    paths: &RunPaths,
) -> Result<(Vec<String>, Vec<f64>, Vec<f64>, f64), CliError> {
    let ckpt_path = paths.best_checkpoint();
    if !ckpt_path.exists() {
        return Err(CliError::Runtime(format!(
            "missing checkpoint {}; run train first",
            ckpt_path.display()
        )));
    }
    let ckpt = checkpoint::load_checkpoint(&ckpt_path)?;
    let manifest = DatasetManifest::load(Path::new(&cfg.manifest))?;
    let span = manifest
        .samples
        .iter()
        .map(|s| s.year_norm)
        .fold(0.0f64, f64::max)
        .max(1.0);

    let (ids, preds, targets) = match (&ckpt, cfg.method) {
        (Checkpoint::Constant(mean), _) => {
            let test: Vec<_> = manifest.split(Split::Test).collect();
            (
                test.iter().map(|s| s.path.clone()).collect::<Vec<_>>(),
                vec![*mean; test.len()],
                test.iter().map(|s| s.year_norm).collect::<Vec<_>>(),
            )
        }
        (Checkpoint::Linear(coeffs), _) => {
            let ds = load_run_dataset(cfg, paths, false)?;
            let test = ds.split_refs(Split::Test);
            let preds: Result<Vec<f64>, _> = test
                .iter()
                .map(|s| linear_predict(coeffs, s.input.data()))
                .collect();
            (
                test.iter().map(|s| s.path.clone()).collect(),
                preds?,
                test.iter().map(|s| s.target).collect(),
            )
        }
        (Checkpoint::Network(net), _) => {
            let ds = load_run_dataset(cfg, paths, false)?;
            let test = ds.split_refs(Split::Test);
            let preds: Result<Vec<f64>, _> = test.iter().map(|s| net.predict(&s.input)).collect();
            (
                test.iter().map(|s| s.path.clone()).collect(),
                preds?,
                test.iter().map(|s| s.target).collect(),
            )
        }
    };
    Ok((ids, preds, targets, span))
}

fn cmd_evaluate(run_dir: &Path) -> Result<MetricsRow, CliError> {
    let paths = RunPaths::existing(run_dir);
    let cfg = paths.load_config()?;
    let (ids, preds, targets, span) = test_predictions(&cfg, &paths)?;
    let report = build_report(&ids, &preds, &targets, span)?;

    let reports = paths.reports_dir();
    let row = MetricsRow {
        method: cfg.method.as_str().to_string(),
        loss: cfg
            .loss
            .map(|l| l.as_str().to_string())
            .unwrap_or_else(|| "-".into()),
        mae: report.mae,
        r2: report.r2,
        corr: report.corr,
    };
    write_metrics_csv(&reports.join("metrics.csv"), std::slice::from_ref(&row))?;
    write_confusion_csv(&reports.join("confusion.csv"), &report.confusion)?;
    write_per_sample_csv(&reports.join("per_sample.csv"), &report)?;
    println!("{}", row.table_row());
    Ok(row)
}

fn cmd_report(run_dir: &Path, per_decade_k: usize, top_n: usize) -> Result<(), CliError> {
    let paths = RunPaths::existing(run_dir);
    let per_sample_path = paths.reports_dir().join("per_sample.csv");
    if !per_sample_path.exists() {
        return Err(CliError::Runtime(format!(
            "{} not found; run evaluate first",
            per_sample_path.display()
        )));
    }
    let text = std::fs::read_to_string(&per_sample_path).map_err(Error::from)?;
    let mut per_sample = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            continue;
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Runtime(format!("bad per-sample row: {line}")))
        };
        per_sample.push(PerSample {
            id: cols[0].to_string(),
            target: parse(cols[1])?,
            prediction: parse(cols[2])?,
            residual: parse(cols[3])?,
        });
    }
    if per_sample.is_empty() {
        return Err(CliError::Runtime("per-sample report is empty".into()));
    }
    let span = per_sample
        .iter()
        .map(|s| s.target)
        .fold(0.0f64, f64::max)
        .max(1.0);
    let preds: Vec<f64> = per_sample.iter().map(|s| s.prediction).collect();
    let targets: Vec<f64> = per_sample.iter().map(|s| s.target).collect();
    let ids: Vec<String> = per_sample.iter().map(|s| s.id.clone()).collect();
    let report: EvalReport = build_report(&ids, &preds, &targets, span)?;
    let ranked = residual_ranking(&report, per_decade_k, top_n, span);

    let reports = paths.reports_dir();
    write_ranking_csvs(
        &reports.join("residual_smallest_per_decade.csv"),
        &reports.join("residual_largest.csv"),
        &ranked,
    )?;
    render_confusion_heatmap(&reports.join("confusion.png"), &report.confusion)?;
    println!(
        "rankings and heatmap written under {}",
        reports.display()
    );
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<(), CliError> {
    let mut base = RunConfig {
        manifest: args.manifest.to_string_lossy().into_owned(),
        ..RunConfig::default()
    };
    if let Some(v) = args.epochs {
        base.epochs = v;
    }
    if let Some(v) = args.batch_size {
        base.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        base.learning_rate = v;
    }
    if let Some(v) = &args.patience {
        base.set("patience", v)?;
    }
    if let Some(v) = &args.forced_switch {
        base.set("forced_switch_epoch", v)?;
    }
    if let Some(v) = args.switch_delay {
        base.switch_delay = v;
    }
    if let Some(v) = args.seed {
        base.seed = v;
    }
    if let Some(v) = &args.arch {
        base.arch = ArchChoice::parse(v)?;
    }
    if let Some(v) = args.k {
        base.k = v;
    }
    if let Some(v) = args.max_keypoints {
        base.max_keypoints = v;
    }
    if let Some(v) = &args.cache {
        base.cache_dir = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = args.tukey_c {
        base.tukey_c = v;
    }

    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut run_one = |cfg: RunConfig| match cmd_train(&cfg, &args.out_root, false)
        .and_then(|paths| cmd_evaluate(&paths.dir))
    {
        Ok(row) => rows.push(row),
        Err(e) => {
            let label = format!(
                "{}/{}",
                cfg.method.as_str(),
                cfg.loss.map(|l| l.as_str()).unwrap_or("-")
            );
            let msg = match e {
                CliError::Usage(m) | CliError::Runtime(m) => m,
            };
            eprintln!("grid: {label} failed: {msg}");
            failures.push(format!("{label}: {msg}"));
        }
    };

    for method in [RunMethod::Image, RunMethod::Shape, RunMethod::Feature] {
        for loss in LossChoice::GRID {
            let cfg = RunConfig {
                method,
                loss: Some(loss),
                ..base.clone()
            };
            run_one(cfg);
        }
    }
    for method in [RunMethod::Linear, RunMethod::Constant] {
        let cfg = RunConfig {
            method,
            loss: None,
            ..base.clone()
        };
        run_one(cfg);
    }

    std::fs::create_dir_all(&args.out_root).map_err(Error::from)?;
    write_metrics_csv(&args.out_root.join("grid_summary.csv"), &rows)?;
    if !failures.is_empty() {
        std::fs::write(
            args.out_root.join("grid_failures.log"),
            failures.join("\n") + "\n",
        )
        .map_err(Error::from)?;
    }
    println!(
        "grid complete: {} rows, {} failures -> {}",
        rows.len(),
        failures.len(),
        args.out_root.join("grid_summary.csv").display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} grid runs failed (see grid_failures.log)",
            failures.len()
        )))
    }
}
