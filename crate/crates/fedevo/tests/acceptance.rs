//! Acceptance suite: one test per promised gate, each at its stated
//! tolerance and wall-clock budget, driving the real pipeline end to end.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fedevo::dataio;
use fedevo_core::gaussian::merge_pair;
use fedevo_core::metrics::{adjusted_rand_index, binary_auc, macro_f1};
use fedevo_core::{
    aggregate, run_classification_round, run_clustering_round, EvolveConfig, EvolvingModel,
    GaussianCluster, ModelSnapshot, PrototypeSpec, RoundConfig, SampleOutcome,
};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn cluster_from(points: &[Vec<f64>]) -> GaussianCluster {
    let mut c = GaussianCluster::birth(0, &points[0], 1, None);
    for (t, x) in points.iter().enumerate().skip(1) {
        c.absorb(x, t as u64 + 1).unwrap();
    }
    c
}

fn batch_mean(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter().map(|m| m / points.len() as f64).collect()
}

fn batch_scatter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mean = batch_mean(points);
    let mut s = vec![vec![0.0; dim]; dim];
    for p in points {
        for i in 0..dim {
            for j in 0..dim {
                s[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    s
}

fn random_points(rng: &mut ChaCha8Rng, dim: usize, len: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|_| (0..dim).map(|_| rng.random_range(-100.0..100.0)).collect())
        .collect()
}

#[test]
fn criterion_1_incremental_statistics_oracle() {
    let started = Instant::now();
    let dims = [1usize, 2, 5, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let dim = dims[case % dims.len()];
        let len = rng.random_range(2..=1000);
        let pts = random_points(&mut rng, dim, len);
        let c = cluster_from(&pts);
        assert_eq!(c.n as usize, len);

        let scale = pts.iter().flatten().fold(1.0f64, |a, &v| a.max(v.abs()));
        let mean = batch_mean(&pts);
        for (a, b) in c.mu.iter().zip(&mean) {
            assert!(
                (a - b).abs() <= 1e-10 * scale,
                "case {case}: mean off by {:e}",
                (a - b).abs()
            );
        }
        let cov = batch_scatter(&pts);
        let denom = (len - 1) as f64;
        for i in 0..dim {
            for j in 0..dim {
                let inc = c.scatter.get(i, j) / denom;
                let batch = cov[i][j] / denom;
                assert!(
                    (inc - batch).abs() <= 1e-10 * scale * scale,
                    "case {case}: cov[{i}][{j}] off by {:e}",
                    (inc - batch).abs()
                );
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 10.0, "oracle took {secs:.1}s, budget 10s");
    println!("criterion 1 PASS: incremental = batch statistics, 100 sequences, rel 1e-10, {secs:.2}s");
}

#[test]
fn criterion_2_merge_matches_pooled_batch() {
    let started = Instant::now();
    let dims = [1usize, 2, 5, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..100 {
        let dim = dims[case % dims.len()];
        let len_a = rng.random_range(1..=200);
        let len_b = rng.random_range(1..=200);
        let a = random_points(&mut rng, dim, len_a);
        let b = random_points(&mut rng, dim, len_b);
        let p = cluster_from(&a);
        let mut q = cluster_from(&b);
        q.id = 1;
        let proto = PrototypeSpec::new(vec![1.0; dim], 1.5).unwrap();
        // prior disabled: merging in scatter space must equal pooled batch stats
        let merged = merge_pair(&p, &q, &proto, 0.0).unwrap();

        let pooled: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        assert_eq!(merged.n as usize, pooled.len());
        let scale = pooled.iter().flatten().fold(1.0f64, |acc, &v| acc.max(v.abs()));
        let mean = batch_mean(&pooled);
        for (x, y) in merged.mu.iter().zip(&mean) {
            assert!(
                (x - y).abs() <= 1e-10 * scale,
                "case {case}: merged mean off by {:e}",
                (x - y).abs()
            );
        }
        let scatter = batch_scatter(&pooled);
        for i in 0..dim {
            for j in 0..dim {
                let diff = (merged.scatter.get(i, j) - scatter[i][j]).abs();
                assert!(
                    diff <= 1e-10 * scale * scale * pooled.len() as f64,
                    "case {case}: merged scatter[{i}][{j}] off by {diff:e}"
                );
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 10.0, "oracle took {secs:.1}s, budget 10s");
    println!("criterion 2 PASS: sample-free merge = pooled batch statistics, 100 cases, rel 1e-10, {secs:.2}s");
}

#[test]
fn criterion_3_membership_and_birth_boundary() {
    // γ(μ) = 1 exactly
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let pts = random_points(&mut rng, 3, 12);
    let c = cluster_from(&pts);
    let proto = PrototypeSpec::new(vec![1.0; 3], 1.5).unwrap();
    let sigma = c.effective_covariance(&proto, 1.0).unwrap();
    let center = c.mu.clone();
    assert_eq!(c.membership(&center, &sigma).unwrap(), 1.0);

    // birth triggers exactly at γ ≤ exp(−N_σ²/D) with the √D default;
    // probe both sides of the boundary at ±1e−9 on the d²/D scale
    for (delta, expect_birth) in [(-1e-9f64, false), (1e-9, true)] {
        let config = EvolveConfig::new(1.0);
        let mut model = EvolvingModel::with_fixed_sigma(config, vec![1.0, 1.0]).unwrap();
        model.process_sample(&[0.0, 0.0]).unwrap();
        // singleton Σ_eff is the identity, so d² of (a, 0) is a²
        let a = (2.0 * (1.0 + delta)).sqrt();
        match model.process_sample(&[a, 0.0]).unwrap() {
            SampleOutcome::Born(_) => {
                assert!(expect_birth, "birth below the boundary (delta {delta:e})")
            }
            SampleOutcome::Updated(_) => {
                assert!(!expect_birth, "no birth above the boundary (delta {delta:e})")
            }
        }
    }
    println!("criterion 3 PASS: γ(μ) = 1 and the birth boundary flips within ±1e-9");
}

#[test]
fn criterion_4_synthetic_blobs_recovered() {
    let started = Instant::now();
    let ds = dataio::load_named(&data_dir(), "blobs3").unwrap();
    assert_eq!(ds.n(), 600);
    let cfg = RoundConfig::new(3, 42, EvolveConfig::new(1.5));
    let round = run_clustering_round(&ds.x, &cfg).unwrap();
    assert_eq!(
        round.global_snapshot.clusters.len(),
        3,
        "expected exactly 3 global clusters"
    );
    let labels = ds.labels().unwrap();
    let assigned: Vec<usize> = ds
        .x
        .iter()
        .map(|x| round.global.best_match(x).unwrap().0 as usize)
        .collect();
    let ari = adjusted_rand_index(labels, &assigned).unwrap();
    assert!(ari >= 0.9, "ARI {ari:.4} < 0.9");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "took {secs:.1}s, budget 5s");
    println!("criterion 4 PASS: 3 blobs, 3 owners, 1 round -> 3 clusters, ARI {ari:.4}, {secs:.2}s");
}

fn run_cli(args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_fedevo"))
        .args(args)
        .output()
        .expect("cannot launch the CLI");
    assert!(
        output.status.success(),
        "CLI {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn classify_via_cli(dataset: &str, repeats: usize, out: &Path) -> serde_json::Value {
    let data = data_dir();
    run_cli(&[
        "--out",
        out.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "classify",
        dataset,
        "--repeats",
        &repeats.to_string(),
    ]);
    let text = std::fs::read_to_string(out.join("results.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn criterion_5_benchmark_gates() {
    let tmp = tempfile::tempdir().unwrap();
    for (dataset, gate) in [("iris", 0.93), ("wine", 0.94), ("breast-cancer", 0.93)] {
        let started = Instant::now();
        let results = classify_via_cli(dataset, 10, &tmp.path().join(dataset));
        let secs = started.elapsed().as_secs_f64();
        let acc = results["accuracy"]["mean"].as_f64().unwrap();
        let std = results["accuracy"]["std"].as_f64().unwrap();
        assert!(
            acc >= gate,
            "{dataset}: accuracy {acc:.4} below the {gate} gate"
        );
        assert!(secs < 120.0, "{dataset} took {secs:.1}s, budget 120s");
        println!(
            "criterion 5 PASS: {dataset} accuracy {:.1}±{:.1}% >= {}% (3-fold x 10, 3 owners, {secs:.1}s)",
            100.0 * acc,
            100.0 * std,
            100.0 * gate
        );
    }
}

#[test]
fn criterion_5_ungated_rows_reported() {
    // reported for completeness, never gated: per-dataset settings for
    // these were tuned on hardware and budgets we don't reproduce
    let tmp = tempfile::tempdir().unwrap();
    let results = classify_via_cli("digits", 1, tmp.path());
    let acc = results["accuracy"]["mean"].as_f64().unwrap();
    println!(
        "criterion 5 REPORTED (not gated): digits accuracy {:.1}% at 3-fold x 1 repeat (reduced budget)",
        100.0 * acc
    );
    let manifest = dataio::load_manifest(&data_dir()).unwrap();
    for name in ["heart-disease", "autism"] {
        assert!(
            !manifest.datasets.contains_key(name),
            "{name} is bundled now; report its row properly"
        );
        println!("criterion 5 REPORTED (not gated): {name} unavailable (no redistributable offline copy)");
    }
}

/// `count` points around `center` with the given spread.
fn blob(rng: &mut ChaCha8Rng, center: &[f64], spread: f64, count: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, spread).unwrap();
    (0..count)
        .map(|_| center.iter().map(|&c| c + normal.sample(rng)).collect())
        .collect()
}

fn train_fixed(config: &EvolveConfig, sigma2: &[f64], data: &[Vec<f64>]) -> EvolvingModel {
    let mut model = EvolvingModel::with_fixed_sigma(config.clone(), sigma2.to_vec()).unwrap();
    for x in data {
        model.process_sample(x).unwrap();
    }
    // consolidate to the global-rule merge fixpoint, as before a snapshot
    // exchange: online merging only ever looked at co-activated pairs
    loop {
        let pairs = model.candidate_pairs(None);
        if pairs.is_empty() || model.merge_step(&pairs) == 0 {
            break;
        }
    }
    model
}

#[test]
fn criterion_6_federation_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let config = EvolveConfig::new(1.5);
    let sigma2 = vec![1.0, 1.0];

    // (a) owners on disjoint far-apart regions: counts add up
    let mut region_a = blob(&mut rng, &[0.0, 0.0], 0.7, 120);
    region_a.extend(blob(&mut rng, &[30.0, 0.0], 0.7, 120));
    let mut region_b = blob(&mut rng, &[300.0, 300.0], 0.7, 120);
    region_b.extend(blob(&mut rng, &[330.0, 300.0], 0.7, 120));
    let model_a = train_fixed(&config, &sigma2, &region_a);
    let model_b = train_fixed(&config, &sigma2, &region_b);
    let snaps = [
        ModelSnapshot::from_model(&model_a, 0, "owner-0").unwrap(),
        ModelSnapshot::from_model(&model_b, 0, "owner-1").unwrap(),
    ];
    let global = aggregate(&snaps, &config, 95.0).unwrap();
    assert_eq!(
        global.clusters().len(),
        model_a.clusters().len() + model_b.clusters().len(),
        "disjoint regions must aggregate additively"
    );

    // (b) duplicate owners on identical data collapse back to one model
    let mut generous = config.clone();
    generous.kappa_v = 1e9; // the size cap must not block duplicate collapse
    let data: Vec<Vec<f64>> = region_a;
    let single = train_fixed(&generous, &sigma2, &data);
    let dup_snaps: Vec<ModelSnapshot> = (0..3)
        .map(|k| {
            let model = train_fixed(&generous, &sigma2, &data);
            ModelSnapshot::from_model(&model, 0, &format!("owner-{k}")).unwrap()
        })
        .collect();
    let merged = aggregate(&dup_snaps, &generous, 95.0).unwrap();
    assert!(
        merged.clusters().len() <= single.clusters().len() + 1,
        "3 duplicate owners left {} clusters, single owner has {}",
        merged.clusters().len(),
        single.clusters().len()
    );

    // (c) snapshot round-trip: byte-stable, prediction-identical on Iris
    let ds = dataio::load_named(&data_dir(), "iris").unwrap();
    let stats = fedevo_core::local_stats(&ds.x).unwrap();
    let (z, _) = dataio::zscore(&ds.x, &stats).unwrap();
    let labels = ds.labels().unwrap();
    let cfg = RoundConfig::new(3, 42, EvolveConfig::new(6.0));
    let round = run_classification_round(&z, labels, ds.n_classes(), &cfg).unwrap();

    let json = round.global_snapshot.to_json().unwrap();
    let restored_snapshot = ModelSnapshot::from_json(&json).unwrap();
    assert_eq!(
        json,
        restored_snapshot.to_json().unwrap(),
        "snapshot round-trip must be byte-stable"
    );
    let restored = restored_snapshot.into_classifier().unwrap();
    for x in &z {
        assert_eq!(
            round.classifier.predict_scores(x).unwrap(),
            restored.predict_scores(x).unwrap(),
            "restored scores must match bit for bit"
        );
        assert_eq!(
            round.classifier.predict(x).unwrap(),
            restored.predict(x).unwrap()
        );
    }
    println!(
        "criterion 6 PASS: additive on disjoint data, duplicate-collapse within +1, byte-stable round-trip, {} identical predictions",
        z.len()
    );
}

#[test]
fn criterion_7_metric_hand_cases_and_auc_invariance() {
    let auc = binary_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert!((auc - 0.75).abs() <= 1e-12, "AUC hand case: {auc}");
    let f1 = macro_f1(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap();
    assert!((f1 - 0.5).abs() <= 1e-12, "macro-F1 hand case: {f1}");

    let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x + 7.0, |x| x.exp(), |x| x.atan()];
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..50 {
        let n = rng.random_range(4..60);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let labels: Vec<bool> = loop {
            let l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            if l.iter().any(|&v| v) && l.iter().any(|&v| !v) {
                break l;
            }
        };
        let base = binary_auc(&scores, &labels).unwrap();
        for t in transforms {
            let mapped: Vec<f64> = scores.iter().map(|&x| t(x)).collect();
            assert_eq!(
                binary_auc(&mapped, &labels),
                Some(base),
                "AUC must be invariant under monotone transforms"
            );
        }
    }
    println!("criterion 7 PASS: hand cases exact to 1e-12, AUC monotone-invariant on 50 random sets");
}

#[test]
fn criterion_8_determinism_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir();
    let data = data.to_str().unwrap();

    // identical manifests, different worker pools -> identical reports
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap().to_string();
    run_cli(&["--out", &out_s, "--data-dir", data, "classify", "wine", "--repeats", "3"]);
    let results = std::fs::read(out.join("results.json")).unwrap();
    let summary = std::fs::read(out.join("summary.txt")).unwrap();
    std::fs::remove_dir_all(&out).unwrap();
    run_cli(&[
        "--out", &out_s, "--data-dir", data, "classify", "wine", "--repeats", "3",
        "--threads", "2",
    ]);
    assert_eq!(
        results,
        std::fs::read(out.join("results.json")).unwrap(),
        "report must not depend on the worker pool"
    );
    assert_eq!(summary, std::fs::read(out.join("summary.txt")).unwrap());

    // identical manifests -> identical snapshots
    let fed = tmp.path().join("fed");
    let fed_s = fed.to_str().unwrap().to_string();
    run_cli(&["--out", &fed_s, "--data-dir", data, "federate", "iris"]);
    let mut first = Vec::new();
    for name in ["global.fedevo.json", "owners/owner-0000.fedevo.json", "owners/owner-0001.fedevo.json", "owners/owner-0002.fedevo.json"] {
        first.push(std::fs::read(fed.join(name)).unwrap());
    }
    std::fs::remove_dir_all(&fed).unwrap();
    run_cli(&["--out", &fed_s, "--data-dir", data, "federate", "iris"]);
    for (i, name) in ["global.fedevo.json", "owners/owner-0000.fedevo.json", "owners/owner-0001.fedevo.json", "owners/owner-0002.fedevo.json"].iter().enumerate() {
        assert_eq!(
            first[i],
            std::fs::read(fed.join(name)).unwrap(),
            "{name} changed between identical runs"
        );
    }
    println!("criterion 8 PASS: byte-identical reports and snapshots across runs and pool sizes");
}
