//! Command-line front-end: federated clustering with ellipse plots,
//! cross-validated classification benchmarks, and snapshot federation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use fedevo::dataio::{self, Dataset};
use fedevo::report::{derive_seed, render_table, write_json, ResultsFile, RunManifest, TimingFile};
use fedevo::snapshot_io;
use fedevo::svg::{self, Ellipse};
use fedevo_core::metrics::{accuracy, adjusted_rand_index, macro_f1, roc_auc_ovr};
use fedevo_core::{
    aggregate, run_classification_round, run_clustering_round, EvalReport, EvolveConfig,
    FoldMetrics, ModelSnapshot, RoundConfig,
};

/// Bad invocation (unknown dataset, meaningless flag combination): exit
/// code 2 instead of the runtime-failure 1.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: String) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg))
}

#[derive(Parser)]
#[command(name = "fedevo", version, about = "Federated evolving Gaussian clustering")]
struct Cli {
    /// Directory for all output files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding bundled datasets and their manifest.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Federated clustering; writes a summary and, for 2D data, an SVG
    /// with 2σ cluster ellipses.
    Cluster(ClusterArgs),
    /// K-fold × repeats classification benchmark with per-fold federated
    /// training.
    Classify(ClassifyArgs),
    /// One federation round: per-owner snapshot files plus the aggregated
    /// global snapshot.
    Federate(FederateArgs),
}

#[derive(Args)]
struct ModelFlags {
    /// Quantization number N_r (default: the dataset's tuned value, else 1.5).
    #[arg(long)]
    nr: Option<f64>,
    /// Merge overlap threshold κ_m.
    #[arg(long, default_value_t = 1.5)]
    km: f64,
    /// Minimum cluster support κ_n.
    #[arg(long, default_value_t = 1)]
    kn: u64,
    /// Merged-volume cap κ_v (multiples of the prototype volume).
    #[arg(long, default_value_t = 10.0)]
    kv: f64,
    /// Activation radius N_σ (default √D).
    #[arg(long)]
    nsigma: Option<f64>,
    /// Fisher feature-selection fraction κ_F; 0 disables selection.
    #[arg(long, default_value_t = 0.0)]
    kf: f64,
    /// Server-side age cut: drop clusters older than this percentile.
    #[arg(long, default_value_t = 95.0)]
    age_percentile: f64,
    /// Number of data owners.
    #[arg(long, default_value_t = 3)]
    owners: usize,
    /// Base RNG seed; every partition and shuffle derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl ModelFlags {
    fn config(&self, data_dir: &Path, dataset: &str) -> EvolveConfig {
        let n_r = self
            .nr
            .or_else(|| dataio::tuned_nr(data_dir, dataset))
            .unwrap_or(1.5);
        let mut config = EvolveConfig::new(n_r);
        config.kappa_m = self.km;
        config.kappa_n = self.kn;
        config.kappa_v = self.kv;
        config.n_sigma = self.nsigma;
        config
    }

    fn round_config(&self, config: &EvolveConfig, seed: u64) -> RoundConfig {
        RoundConfig {
            n_owners: self.owners,
            seed,
            owner_config: config.clone(),
            server_config: config.clone(),
            age_percentile: self.age_percentile,
            kappa_f: self.kf,
        }
    }

    fn manifest(
        &self,
        subcommand: &str,
        dataset: &str,
        dataset_path: &str,
        config: &EvolveConfig,
        folds: usize,
        repeats: usize,
        out: &Path,
    ) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            dataset: dataset.to_string(),
            dataset_path: dataset_path.to_string(),
            config: config.clone(),
            kappa_f: self.kf,
            age_percentile: self.age_percentile,
            n_owners: self.owners,
            folds,
            repeats,
            seed: self.seed,
            out_dir: out.display().to_string(),
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Bundled dataset name or CSV path.
    dataset: String,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Bundled dataset name or CSV path; must be labeled.
    dataset: String,
    #[command(flatten)]
    model: ModelFlags,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Cross-validation repeats.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Worker threads for the fold pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FederateArgs {
    /// Bundled dataset name or CSV path (omit with --aggregate-only).
    dataset: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
    /// Skip local training: aggregate the snapshot files in this directory
    /// (the server reuses the snapshots' own model configuration).
    #[arg(long, value_name = "DIR")]
    aggregate_only: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(args) => cmd_cluster(&cli.out, &cli.data_dir, &args),
        Command::Classify(args) => cmd_classify(&cli.out, &cli.data_dir, &args),
        Command::Federate(args) => cmd_federate(&cli.out, &cli.data_dir, &args),
    }
}

fn resolve(data_dir: &Path, name_or_path: &str) -> Result<Dataset> {
    dataio::resolve_dataset(data_dir, name_or_path).map_err(|e| usage(format!("{e:#}")))
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize)]
struct ClusterRow<'a> {
    id: u64,
    n: u64,
    mu: &'a [f64],
    sigma_eff: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    manifest: &'a RunManifest,
    n_clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
    clusters: Vec<ClusterRow<'a>>,
}

fn cmd_cluster(out: &Path, data_dir: &Path, args: &ClusterArgs) -> Result<()> {
    let ds = resolve(data_dir, &args.dataset)?;
    let config = args.model.config(data_dir, &ds.name);
    let manifest =
        args.model.manifest("cluster", &ds.name, &args.dataset, &config, 0, 0, out);
    let rc = args.model.round_config(&config, args.model.seed);
    let round = run_clustering_round(&ds.x, &rc)?;
    let snapshot = &round.global_snapshot;

    let ari = match &ds.y {
        Some(ys) => {
            let mut assigned = Vec::with_capacity(ds.n());
            for x in &ds.x {
                assigned.push(round.global.best_match(x)?.0 as usize);
            }
            Some(adjusted_rand_index(ys, &assigned)?)
        }
        None => None,
    };

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let summary = ClusterSummary {
        manifest: &manifest,
        n_clusters: snapshot.clusters.len(),
        ari,
        clusters: snapshot
            .clusters
            .iter()
            .map(|c| ClusterRow { id: c.id, n: c.n, mu: &c.mu, sigma_eff: &c.sigma_eff })
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;

    let mut text = format!(
        "dataset: {} ({} samples, {} features)\nclusters: {}\n",
        ds.name,
        ds.n(),
        ds.dim(),
        snapshot.clusters.len()
    );
    if let Some(ari) = ari {
        text.push_str(&format!("ARI: {ari:.4}\n"));
    }
    for c in &snapshot.clusters {
        text.push_str(&format!("cluster {:>3}  n = {:>6}  mu = {:?}\n", c.id, c.n, c.mu));
    }
    text.push_str(&format!("manifest: {}\n", serde_json::to_string(&manifest)?));
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");

    if ds.dim() == 2 {
        let points: Vec<[f64; 2]> = ds.x.iter().map(|r| [r[0], r[1]]).collect();
        let ellipses: Vec<Ellipse> = snapshot
            .clusters
            .iter()
            .map(|c| Ellipse {
                cx: c.mu[0],
                cy: c.mu[1],
                cov: [
                    [c.sigma_eff[0][0], c.sigma_eff[0][1]],
                    [c.sigma_eff[1][0], c.sigma_eff[1][1]],
                ],
            })
            .collect();
        let plot = format!(
            "<!-- run manifest: {} -->\n{}",
            serde_json::to_string(&manifest)?,
            svg::cluster_plot(&points, ds.y.as_deref(), &ellipses)
        );
        fs::write(out.join("plot.svg"), plot)?;
        println!("plot: {}", out.join("plot.svg").display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    ds: &Dataset,
    labels: &[usize],
    n_classes: usize,
    args: &ClassifyArgs,
    config: &EvolveConfig,
    repeat: usize,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldMetrics> {
    let train_x: Vec<Vec<f64>> = train.iter().map(|&i| ds.x[i].clone()).collect();
    let test_x: Vec<Vec<f64>> = test.iter().map(|&i| ds.x[i].clone()).collect();
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();

    // normalization parameters come from the training fold alone
    let stats = fedevo_core::local_stats(&train_x)?;
    let (z_train, _) = dataio::zscore(&train_x, &stats)?;
    let (z_test, _) = dataio::zscore(&test_x, &stats)?;

    let rc = args
        .model
        .round_config(config, derive_seed(args.model.seed, repeat as u64, fold as u64 + 1));
    let started = Instant::now();
    let round = run_classification_round(&z_train, &y_train, n_classes, &rc)?;
    let train_time_per_sample_ms =
        started.elapsed().as_secs_f64() * 1e3 / z_train.len() as f64;

    let mut scores = Vec::with_capacity(z_test.len());
    let mut predicted = Vec::with_capacity(z_test.len());
    for x in &z_test {
        let s = round.classifier.predict_scores(x)?;
        predicted.push(argmax(&s));
        scores.push(s);
    }
    Ok(FoldMetrics {
        repeat,
        fold,
        accuracy: accuracy(&y_test, &predicted)?,
        macro_f1: macro_f1(&y_test, &predicted, n_classes)?,
        roc_auc: roc_auc_ovr(&y_test, &scores, n_classes)?,
        n_clusters_global: round.global_snapshot.clusters.len(),
        train_time_per_sample_ms,
    })
}

fn cmd_classify(out: &Path, data_dir: &Path, args: &ClassifyArgs) -> Result<()> {
    let ds = resolve(data_dir, &args.dataset)?;
    if ds.y.is_none() {
        return Err(usage(format!("dataset {} has no labels", ds.name)));
    }
    let labels = ds.labels()?.to_vec();
    let n_classes = ds.n_classes();
    if n_classes < 2 {
        return Err(usage(format!("dataset {} has a single class", ds.name)));
    }
    let config = args.model.config(data_dir, &ds.name);
    let manifest = args.model.manifest(
        "classify",
        &ds.name,
        &args.dataset,
        &config,
        args.folds,
        args.repeats,
        out,
    );

    let mut jobs = Vec::with_capacity(args.repeats * args.folds);
    for repeat in 0..args.repeats {
        let split = dataio::kfold_split(
            ds.n(),
            args.folds,
            derive_seed(args.model.seed, repeat as u64, 0),
            Some(&labels),
        )?;
        if !split.stratified {
            eprintln!("warning: class too small for stratification; folds are plain shuffles");
        }
        for (fold, (train, test)) in split.folds.into_iter().enumerate() {
            jobs.push((repeat, fold, train, test));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .context("cannot build worker pool")?;
    let started = Instant::now();
    let folds: Vec<FoldMetrics> = pool.install(|| {
        jobs.par_iter()
            .map(|(repeat, fold, train, test)| {
                run_fold(&ds, &labels, n_classes, args, &config, *repeat, *fold, train, test)
            })
            .collect::<Result<_>>()
    })?;
    let total_seconds = started.elapsed().as_secs_f64();
    let report = EvalReport::from_folds(folds);

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("results.json"), &ResultsFile::new(manifest.clone(), &report))?;
    write_json(&out.join("timing.json"), &TimingFile::new(manifest.clone(), &report, total_seconds))?;
    let table = render_table(&report);
    let text = format!("{table}manifest: {}\n", serde_json::to_string(&manifest)?);
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    println!("report: {}", out.join("results.json").display());
    Ok(())
}

#[derive(Serialize)]
struct FederateRun<'a> {
    manifest: &'a RunManifest,
    mode: &'a str,
    inputs: Vec<String>,
    owner_snapshots: Vec<String>,
    global_snapshot: String,
    n_clusters_global: usize,
}

fn cmd_federate(out: &Path, data_dir: &Path, args: &FederateArgs) -> Result<()> {
    if let Some(dir) = &args.aggregate_only {
        return cmd_aggregate_only(out, data_dir, args, dir);
    }
    let Some(dataset) = &args.dataset else {
        return Err(usage("a dataset is required unless --aggregate-only is given".into()));
    };
    let ds = resolve(data_dir, dataset)?;
    let config = args.model.config(data_dir, &ds.name);
    let manifest = args.model.manifest("federate", &ds.name, dataset, &config, 0, 0, out);
    let rc = args.model.round_config(&config, args.model.seed);

    let (owner_snapshots, global_snapshot) = match &ds.y {
        Some(ys) if ds.n_classes() >= 2 => {
            let round = run_classification_round(&ds.x, ys, ds.n_classes(), &rc)?;
            (round.owner_snapshots, round.global_snapshot)
        }
        _ => {
            let round = run_clustering_round(&ds.x, &rc)?;
            (round.owner_snapshots, round.global_snapshot)
        }
    };

    let owners_dir = out.join("owners");
    fs::create_dir_all(&owners_dir)
        .with_context(|| format!("cannot create {}", owners_dir.display()))?;
    let mut owner_files = Vec::with_capacity(owner_snapshots.len());
    for (k, snap) in owner_snapshots.iter().enumerate() {
        // zero-padded so directory order equals training order
        let path = snapshot_io::write_snapshot(&owners_dir, &format!("owner-{k:04}"), snap)?;
        owner_files.push(path.display().to_string());
    }
    let global_file = snapshot_io::write_snapshot(out, "global", &global_snapshot)?;

    let run = FederateRun {
        manifest: &manifest,
        mode: "end-to-end",
        inputs: Vec::new(),
        owner_snapshots: owner_files,
        global_snapshot: global_file.display().to_string(),
        n_clusters_global: global_snapshot.clusters.len(),
    };
    write_json(&out.join("run.json"), &run)?;
    println!(
        "{} owner snapshots in {}, global snapshot {} ({} clusters)",
        owner_snapshots.len(),
        owners_dir.display(),
        global_file.display(),
        global_snapshot.clusters.len()
    );
    Ok(())
}

fn cmd_aggregate_only(
    out: &Path,
    data_dir: &Path,
    args: &FederateArgs,
    dir: &Path,
) -> Result<()> {
    let files = snapshot_io::list_snapshots(dir)?;
    if files.is_empty() {
        return Err(usage(format!("no snapshot files in {}", dir.display())));
    }
    let mut snapshots = Vec::with_capacity(files.len());
    for path in &files {
        snapshots.push(snapshot_io::read_snapshot(path)?);
    }
    // name the offending file before the opaque compatibility check
    let first = &snapshots[0];
    for (path, s) in files.iter().zip(&snapshots).skip(1) {
        anyhow::ensure!(
            s.dim == first.dim,
            "{} has D = {}, expected {} (from {})",
            path.display(),
            s.dim,
            first.dim,
            files[0].display()
        );
        anyhow::ensure!(
            s.n_classes == first.n_classes,
            "{} has {} classes, expected {} (from {})",
            path.display(),
            s.n_classes,
            first.n_classes,
            files[0].display()
        );
    }
    let server_config = first.config.clone();
    let n_classes = first.n_classes;
    let global = aggregate(&snapshots, &server_config, args.model.age_percentile)
        .with_context(|| {
            format!(
                "cannot aggregate [{}]",
                files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            )
        })?;
    let global_snapshot = ModelSnapshot::from_model(&global, n_classes, "server")
        .context("cannot snapshot the aggregated model")?;

    let dataset_label = format!("snapshots:{}", dir.display());
    let manifest =
        args.model
            .manifest("federate", &dataset_label, &dataset_label, &server_config, 0, 0, out);
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let global_file = snapshot_io::write_snapshot(out, "global", &global_snapshot)?;
    let run = FederateRun {
        manifest: &manifest,
        mode: "aggregate-only",
        inputs: files.iter().map(|p| p.display().to_string()).collect(),
        owner_snapshots: Vec::new(),
        global_snapshot: global_file.display().to_string(),
        n_clusters_global: global_snapshot.clusters.len(),
    };
    write_json(&out.join("run.json"), &run)?;
    println!(
        "aggregated {} snapshots into {} ({} clusters)",
        files.len(),
        global_file.display(),
        global_snapshot.clusters.len()
    );
    let _ = data_dir;
    Ok(())
}
