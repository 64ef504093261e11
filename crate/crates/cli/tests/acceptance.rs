//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line
//! to stderr (visible even when output is captured) and fails on `FAIL`.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use oracles::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use simgrade::assign::{self, AnnealingSchedule};
use simgrade::corpus::GradingLogEntry;
use simgrade::simulate::{self, ComparisonConfig, ErrorModel};
use simgrade::{embed, seed, stats, synth, Algorithm, AssignmentConfig, ComparisonReport, EmbedConfig, PrepConfig};

type Outcome = Result<String, String>;

/// Prints the verdict line and turns a failure into a test panic.
fn verdict(name: &str, started: Instant, outcome: Outcome) {
    let secs = started.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(detail) => format!("PASS {name} ({secs:.1}s): {detail}"),
        Err(detail) => format!("FAIL {name} ({secs:.1}s): {detail}"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let Err(detail) = outcome {
        panic!("{name}: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn jaccard_worked_example_is_two_thirds() {
    let t = Instant::now();
    let a: BTreeSet<&str> = ["off-by-one error", "doesn't return a value"].into();
    let b: BTreeSet<&str> = ["off-by-one error", "doesn't return a value", "incorrect loop condition"].into();
    let j = embed::jaccard_similarity(&a, &b);
    let outcome = ensure(j == 2.0 / 3.0, || format!("got {j}")).map(|()| format!("J = {j}"));
    verdict("jaccard worked example", t, outcome);
}

#[test]
fn error_model_hits_calibration_points() {
    let t = Instant::now();
    let m = ErrorModel::default();
    let (hi, base) = (simulate::predict_error(1.0, &m), simulate::predict_error(0.85, &m));
    let outcome = ensure((hi - 2.7).abs() <= 1e-9 && (base - 10.2).abs() <= 1e-9, || {
        format!("predict(1.0) = {hi}, predict(0.85) = {base}")
    })
    .map(|()| format!("predict(1.0) = {hi}, predict(0.85) = {base}"));
    verdict("error model calibration", t, outcome);
}

/// Six demo-grammar problems of 444 submissions each, compared over 20
/// repetitions with 100,000 bootstrap trials. Shared by two tests.
fn comparison() -> &'static ComparisonReport {
    static REPORT: OnceLock<ComparisonReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let g = synth::demo_grammar();
        let problems: Vec<_> = (0..6u64)
            .map(|p| {
                let programs = synth::sample_corpus(&g, 444, 1000 + p).unwrap();
                let set = synth::to_submissions(&format!("p{p}"), &programs);
                let cfg = EmbedConfig {
                    seed: p,
                    ..EmbedConfig::default()
                };
                embed::embed_submissions(&set, &PrepConfig::default(), 1, &cfg).unwrap().1
            })
            .collect();
        let cfg = ComparisonConfig {
            n_repetitions: 20,
            bootstrap_trials: 100_000,
            assignment: AssignmentConfig {
                n_graders: 10,
                n_validations: 5,
                ..AssignmentConfig::default()
            },
            ..ComparisonConfig::default()
        };
        assert_eq!(cfg.simulation.window, 3);
        simulate::compare_algorithms(&problems, &cfg).unwrap()
    })
}

fn mean_error(r: &ComparisonReport, a: Algorithm) -> f64 {
    r.row(a).unwrap().mean_error_pct
}

#[test]
fn similarity_aware_algorithms_beat_random() {
    let t = Instant::now();
    let r = comparison();
    let e = |a| mean_error(r, a);
    let outcome = (|| {
        use Algorithm::*;
        ensure(e(ClusterPath) < e(Cluster), || {
            format!("cluster_path {} >= cluster {}", e(ClusterPath), e(Cluster))
        })?;
        ensure(e(PetalPath) < e(PetalLoop), || {
            format!("petal_path {} >= petal_loop {}", e(PetalPath), e(PetalLoop))
        })?;
        for a in Algorithm::ALL.into_iter().filter(|&a| a != Random) {
            ensure(e(a) < e(Random), || format!("{a} {} >= random {}", e(a), e(Random)))?;
        }
        let p = r.row(ClusterPath).unwrap().p_vs_random.unwrap();
        ensure(p < 0.01, || format!("cluster_path vs random p = {p}"))?;
        let summary: Vec<String> = r.rows.iter().map(|row| format!("{} {:.3}", row.algorithm, row.mean_error_pct)).collect();
        Ok(format!("{}; cluster_path p = {p:.2e}", summary.join(", ")))
    })();
    verdict("algorithm error ordering", t, outcome);
}

#[test]
fn validation_distance_largest_for_clusters() {
    let t = Instant::now();
    let r = comparison();
    let d = |a| r.row(a).unwrap().validation_distance;
    let outcome = (|| {
        use Algorithm::*;
        let clusters = [Cluster, ClusterPath];
        for c in clusters {
            for other in Algorithm::ALL.into_iter().filter(|a| !clusters.contains(a)) {
                ensure(d(c) > d(other), || format!("{c} {} <= {other} {}", d(c), d(other)))?;
            }
        }
        // Snake partitions exactly like random, so the two tie.
        for other in Algorithm::ALL {
            ensure(d(Snake) <= d(other), || format!("snake {} > {other} {}", d(Snake), d(other)))?;
        }
        let summary: Vec<String> = r.rows.iter().map(|row| format!("{} {:.4}", row.algorithm, row.validation_distance)).collect();
        Ok(summary.join(", "))
    })();
    verdict("validation distance direction", t, outcome);
}

#[test]
fn embedding_similarity_predicts_label_overlap() {
    let t = Instant::now();
    let g = synth::demo_grammar();
    let programs = synth::sample_corpus(&g, 5000, 7).unwrap();
    let set = synth::to_submissions("sem", &programs);
    let cfg = EmbedConfig {
        seed: 7,
        ..EmbedConfig::default()
    };
    let (_, embs) = embed::embed_submissions(&set, &PrepConfig::default(), 1, &cfg).unwrap();
    let fit = synth::evaluate_semantics(&programs, &embs, 100_000, 7).unwrap();
    let outcome = (|| {
        ensure(fit.n_pairs == 100_000, || format!("{} pairs", fit.n_pairs))?;
        let slope = fit.slope.ok_or("slope undefined")?;
        ensure(slope > 0.0, || format!("slope {slope}"))?;
        let x: Vec<f64> = fit.pairs.iter().map(|p| p.cosine).collect();
        let y: Vec<f64> = fit.pairs.iter().map(|p| p.jaccard).collect();
        let p = stats::bootstrap_slope_test(&x, &y, 5000, 7).unwrap().p_value;
        ensure(p < 0.001, || format!("p = {p}"))?;
        Ok(format!("slope {slope:.3}, r2 {:.3}, p {p:.1e}", fit.r2.unwrap_or(f64::NAN)))
    })();
    verdict("semantic fit direction", t, outcome);
}

fn kmeans_oracle_check() -> Result<(), String> {
    let mut r = rng(600);
    for case in 0..20u64 {
        let n = r.random_range(4..=8);
        let k = r.random_range(1..=3);
        let (points, _) = direction_bundles(&mut r, n, k, 4);
        let km = assign::kmeans_cosine(&points, k, case, 100).map_err(|e| e.to_string())?;
        let (best, _) = brute_force_kmeans(&points, k);
        ensure(canonical(&km.labels) == best, || format!("k-means instance {case} differs from optimum"))?;
    }
    Ok(())
}

fn greedy_oracle_check() -> Result<(), String> {
    let mut r = rng(601);
    for case in 0..50 {
        let embs = embeddings(&random_vectors(&mut r, 10, 3));
        let ids: Vec<String> = embs.iter().map(|e| e.submission_id.clone()).collect();
        let sim = embed::pairwise_similarity(&embs).unwrap();
        let start = r.random_range(0..10);
        let got = assign::order_greedy_path(&ids, &sim, &ids[start]).map_err(|e| e.to_string())?;
        let want: Vec<String> = greedy_oracle(&ids, start, |a, b| sim.get(a, b)).into_iter().map(|i| ids[i].clone()).collect();
        ensure(got == want, || format!("greedy instance {case} differs"))?;
    }
    Ok(())
}

fn annealing_oracle_check() -> Result<usize, String> {
    let cfg = AssignmentConfig::default();
    let schedule = AnnealingSchedule::from(&cfg);
    let mut good = 0;
    for s in 0..100u64 {
        let mut r = rng(700 + s);
        let points: Vec<[f64; 2]> = (0..8).map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
        let tour = assign::order_mcmc_loop(&points, schedule, &mut seed::rng(s));
        if cycle_length(&points, &tour) <= 1.05 * tsp_optimum(&points) {
            good += 1;
        }
    }
    ensure(good >= 95, || format!("annealing within 5% on {good}/100")).map(|()| good)
}

#[test]
fn algorithms_match_exhaustive_oracles() {
    let t = Instant::now();
    let outcome = (|| {
        kmeans_oracle_check()?;
        greedy_oracle_check()?;
        let good = annealing_oracle_check()?;
        Ok(format!("k-means 20/20, greedy 50/50, annealing {good}/100 within 5%"))
    })();
    verdict("oracle equivalences", t, outcome);
}

fn gradient_check() -> Result<f64, String> {
    let mut r = rng(800);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut draw = || -> Vec<f64> { (0..8).map(|_| r.random_range(-0.8..0.8)).collect() };
        let (center, context) = (draw(), draw());
        let negs: Vec<Vec<f64>> = (0..4).map(|_| draw()).collect();
        let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let g = embed::sgns_gradients(&center, &context, &refs);
        for i in 0..8 {
            let pairs = [
                (g.center[i], central_difference(|c| embed::sgns_loss(c, &context, &refs), &center, i, 1e-5)),
                (g.context[i], central_difference(|c| embed::sgns_loss(&center, c, &refs), &context, i, 1e-5)),
                (
                    g.negatives[0][i],
                    central_difference(
                        |v| {
                            let mut rr = refs.clone();
                            rr[0] = v;
                            embed::sgns_loss(&center, &context, &rr)
                        },
                        &negs[0],
                        i,
                        1e-5,
                    ),
                ),
            ];
            for (analytic, numeric) in pairs {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst < 1e-4, || format!("gradient relative error {worst:e}")).map(|()| worst)
}

fn orthogonality_check() -> Result<(), String> {
    let mut r = rng(801);
    for _ in 0..50 {
        let n = r.random_range(3..300);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.4 * v + r.random_range(-10.0..10.0)).collect();
        let fit = stats::ols_fit(&x, &y).map_err(|e| e.to_string())?;
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| (b - fit.intercept - fit.slope * a) * a).sum();
        let scale: f64 = x.iter().zip(&y).map(|(a, b)| (a * b).abs()).sum();
        ensure(dot.abs() < 1e-9 * scale, || format!("sum r*x = {dot:e} vs scale {scale:e}"))?;
    }
    Ok(())
}

fn pca_check() -> Result<f64, String> {
    let mut r = rng(802);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (n, d) = (40, 12);
        let xs = random_vectors(&mut r, n, d);
        let coords = assign::pca_2d(&xs).map_err(|e| e.to_string())?;
        let mean: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| xs[i][j] - mean[j]);
        let eig = nalgebra::SymmetricEigen::new(centered.transpose() * &centered / (n as f64 - 1.0));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for c in 0..2 {
            let proj = &centered * eig.eigenvectors.column(order[c]);
            let sd = (proj.iter().map(|p| p * p).sum::<f64>() / n as f64).sqrt();
            let diff = |sign: f64| {
                proj.iter()
                    .zip(&coords.points)
                    .map(|(p, q)| (sign * p / sd - q[c]).abs())
                    .fold(0.0, f64::max)
            };
            worst = worst.max(diff(1.0).min(diff(-1.0)));
        }
    }
    ensure(worst < 1e-8, || format!("PCA deviation {worst:e}")).map(|()| worst)
}

#[test]
fn numerical_routines_match_references() {
    let t = Instant::now();
    let outcome = (|| {
        let grad = gradient_check()?;
        orthogonality_check()?;
        let pca = pca_check()?;
        Ok(format!("gradient rel err {grad:.1e}, residuals orthogonal, PCA dev {pca:.1e}"))
    })();
    verdict("numerical checks", t, outcome);
}

#[test]
fn grader_analysis_recovers_noise_level() {
    let t = Instant::now();
    let mut r = rng(900);
    let noise = Normal::new(0.0, 7.5).unwrap();
    // In-memory entries: the noisy score may leave [0, max_score], which the
    // file loader would reject but the analysis accepts.
    let logs: Vec<GradingLogEntry> = (0..10_000)
        .map(|i| {
            let truth = r.random_range(0.0..=100.0);
            GradingLogEntry {
                grader_id: format!("g{}", i % 25),
                submission_id: format!("v{i}"),
                timestamp: i as i64,
                assigned_score: truth + noise.sample(&mut r),
                max_score: 100.0,
                labels: BTreeSet::new(),
                duration_s: None,
                is_validation: true,
                true_score: Some(truth),
            }
        })
        .collect();
    let a = stats::grader_error_analysis(&logs).unwrap();
    let r2 = a.fit.as_ref().and_then(|f| f.r2).unwrap_or(f64::NAN);
    let outcome = ensure((a.rmse - 7.5).abs() <= 0.3 && r2 >= 0.9, || format!("rmse {}, r2 {r2}", a.rmse))
        .map(|()| format!("rmse {:.3}, r2 {r2:.3}", a.rmse));
    verdict("grader analysis self-consistency", t, outcome);
}

fn simgrade(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_simgrade"))
        .args(["--threads", "1", "--seed", "13"])
        .args(args)
        .env_remove("SIMGRADE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("simgrade {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

/// Validation-only grading logs over the given submission ids, within score bounds.
fn write_logs(path: &Path, ids: &[String]) {
    let mut r = rng(1000);
    let mut text = String::new();
    for (i, id) in ids.iter().enumerate() {
        let truth: f64 = r.random_range(0.0..10.0);
        let entry = GradingLogEntry {
            grader_id: format!("g{}", i % 4),
            submission_id: id.clone(),
            timestamp: i as i64,
            assigned_score: (truth + r.random_range(-1.0..1.0)).clamp(0.0, 10.0),
            max_score: 10.0,
            labels: BTreeSet::new(),
            duration_s: None,
            is_validation: i % 3 == 0,
            true_score: Some(truth),
        };
        text += &serde_json::to_string(&entry).unwrap();
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Runs every command once into `out`, reading shared inputs from `inputs`.
fn run_pipeline(inputs: &Path, out: &Path) -> Result<(), String> {
    let p = |dir: &Path, name: &str| dir.join(name).display().to_string();
    let emb = p(inputs, "embed/programs.jsonl");
    simgrade(&["synth", "-n", "120", "--out-dir", &p(out, "synth")])?;
    simgrade(&["embed", "--submissions", &p(inputs, "synth/submissions.jsonl"), "--out-dir", &p(out, "embed"), "--dim", "16", "--epochs", "2"])?;
    simgrade(&["assign", "--embeddings", &emb, "--algorithm", "petal_loop", "-k", "4", "--mcmc-iterations", "2000", "--out", &p(out, "assign.json")])?;
    simgrade(&["simulate", "--embeddings", &emb, "--assignment", &p(inputs, "assign.json"), "--out-dir", &p(out, "session")])?;
    simgrade(&["simulate", "--embeddings", &emb, "--embeddings", &emb, "-k", "4", "--reps", "2", "--bootstrap-trials", "500", "--mcmc-iterations", "2000", "--out-dir", &p(out, "compare")])?;
    simgrade(&["analyze", "--logs", &p(inputs, "logs.jsonl"), "--embeddings", &emb, "--out-dir", &p(out, "analyze")])?;
    simgrade(&["report", "--comparison", &p(inputs, "compare/comparison.json"), "--out", &p(out, "report.txt")])?;
    simgrade(&["semantics", "--labels", &p(inputs, "synth/labels.jsonl"), "--embeddings", &emb, "--pairs", "2000", "--bootstrap-trials", "500", "--out-dir", &p(out, "semantics")])?;
    Ok(())
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<std::path::PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn cli_reruns_are_byte_identical() {
    let t = Instant::now();
    let outcome = (|| {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let first = root.path().join("first");
        // Produce the inputs once; both compared runs then read the same files.
        let seed_run = root.path().join("inputs");
        simgrade(&["synth", "-n", "120", "--out-dir", &seed_run.join("synth").display().to_string()])?;
        let sub = seed_run.join("synth/submissions.jsonl").display().to_string();
        simgrade(&["embed", "--submissions", &sub, "--out-dir", &seed_run.join("embed").display().to_string(), "--dim", "16", "--epochs", "2"])?;
        let embs = embed::load_program_embeddings(seed_run.join("embed/programs.jsonl")).unwrap();
        let ids: Vec<String> = embs.iter().map(|e| e.submission_id.clone()).collect();
        write_logs(&seed_run.join("logs.jsonl"), &ids);
        run_pipeline(&seed_run, &seed_run)?;

        let second = root.path().join("second");
        run_pipeline(&seed_run, &first)?;
        run_pipeline(&seed_run, &second)?;
        let (a, b) = (files_under(&first), files_under(&second));
        ensure(a == b, || format!("file sets differ: {a:?} vs {b:?}"))?;
        ensure(a.len() >= 20, || format!("only {} outputs", a.len()))?;
        for rel in &a {
            let (x, y) = (fs::read(first.join(rel)).unwrap(), fs::read(second.join(rel)).unwrap());
            ensure(x == y, || format!("{} differs between runs", rel.display()))?;
        }
        Ok(format!("{} output files identical across runs", a.len()))
    })();
    verdict("cli determinism", t, outcome);
}

#[test]
fn assignments_satisfy_coverage_invariants() {
    let t = Instant::now();
    let mut r = rng(1100);
    let outcome = (|| {
        for draw in 0..500 {
            let n = r.random_range(12..80);
            let dim = r.random_range(2..8);
            let embs = embeddings(&random_vectors(&mut r, n, dim));
            let n_val = r.random_range(0..5);
            let cfg = AssignmentConfig {
                n_graders: r.random_range(1..=((n - n_val) / 2).min(12)),
                algorithm: Algorithm::ALL[r.random_range(0..Algorithm::ALL.len())],
                n_validations: n_val,
                seed: r.random(),
                mcmc_iterations: 2000,
                ..AssignmentConfig::default()
            };
            let a = assign::build_assignment(&embs, &cfg).map_err(|e| format!("draw {draw}: {e}"))?;
            let vals: Vec<String> = a.graders[0].validations().map(String::from).collect();
            ensure(vals.len() == n_val, || format!("draw {draw}: {} validations", vals.len()))?;
            let regular: Vec<String> = embs
                .iter()
                .map(|e| e.submission_id.clone())
                .filter(|id| !vals.contains(id))
                .collect();
            a.check_invariants(&regular, &vals)
                .map_err(|e| format!("draw {draw} ({:?}): {e}", cfg.algorithm))?;
        }
        Ok("500/500 assignments valid".to_owned())
    })();
    verdict("assignment invariants", t, outcome);
}
