use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simgrade::simulate::{self, ComparisonConfig, ComparisonReport};
use simgrade::{assign, corpus, embed, stats, synth};
use simgrade::{Assignment, LabeledProgram, ProgramEmbedding};

use crate::config::{override_fields, RunConfig};
use crate::output::{self, csv_io, write_json, write_with_sidecar, Provenance};
use crate::{core, AnalyzeArgs, AssignArgs, AssignFlags, EmbedArgs, Failure, ReportArgs, SemanticsArgs};
use crate::{SimulateArgs, SimulationFlags, SynthArgs};

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: BTreeSet<String>,
}

pub fn synth(args: SynthArgs, cfg: RunConfig) -> Result<(), Failure> {
    let grammar = match &args.grammar {
        Some(path) => synth::load_grammar(path).map_err(core)?,
        None => synth::demo_grammar(),
    };
    let programs = synth::sample_corpus(&grammar, args.count, cfg.seed).map_err(core)?;
    let set = synth::to_submissions(&args.problem_id, &programs);
    let labels: Vec<LabelRecord> = set
        .submissions
        .iter()
        .zip(&programs)
        .map(|(s, p)| LabelRecord {
            id: s.id.clone(),
            labels: p.labels.clone(),
        })
        .collect();

    output::ensure_dir(&args.out_dir)?;
    let inputs: Vec<&Path> = args.grammar.iter().map(|p| p.as_path()).collect();
    let prov = Provenance::new("synth", &inputs, &cfg);
    write_with_sidecar(&args.out_dir.join("submissions.jsonl"), &prov, |w| {
        corpus::write_jsonl(w, &set.submissions)
    })?;
    write_with_sidecar(&args.out_dir.join("labels.jsonl"), &prov, |w| corpus::write_jsonl(w, &labels))?;
    if let Some(path) = &args.write_grammar {
        fs::write(path, grammar.to_json() + "\n").map_err(|e| Failure::io(path, e))?;
    }
    println!("wrote {} programs to {}", programs.len(), args.out_dir.display());
    Ok(())
}

pub fn embed(args: EmbedArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    override_fields!(
        cfg.embed.dim => args.dim,
        cfg.embed.window => args.window,
        cfg.embed.negatives => args.negatives,
        cfg.embed.epochs => args.epochs,
        cfg.embed.learning_rate => args.learning_rate,
        cfg.min_count => args.min_count,
        cfg.prep.max_string_len => args.max_string_len,
    );
    let set = corpus::load_submissions(&args.submissions).map_err(core)?;
    let (tokens, programs) =
        embed::embed_submissions(&set, &cfg.prep, cfg.min_count, &cfg.embed).map_err(core)?;

    output::ensure_dir(&args.out_dir)?;
    let prov = Provenance::new("embed", &[&args.submissions], &cfg);
    write_with_sidecar(&args.out_dir.join("tokens.sgem"), &prov, |w| tokens.write_binary(w))?;
    write_with_sidecar(&args.out_dir.join("tokens.csv"), &prov, |w| {
        tokens.write_csv(w).map_err(csv_io)
    })?;
    write_with_sidecar(&args.out_dir.join("programs.jsonl"), &prov, |w| {
        corpus::write_jsonl(w, &programs)
    })?;
    println!(
        "embedded {} submissions over {} tokens into {}",
        programs.len(),
        tokens.vocab().len(),
        args.out_dir.display()
    );
    Ok(())
}

fn apply_assign_flags(cfg: &mut RunConfig, flags: &AssignFlags) {
    override_fields!(
        cfg.assignment.n_graders => flags.graders,
        cfg.assignment.n_validations => flags.validations,
        cfg.assignment.mcmc_iterations => flags.mcmc_iterations,
        cfg.assignment.mcmc_initial_temp => flags.mcmc_initial_temp,
        cfg.assignment.mcmc_cooling => flags.mcmc_cooling,
        cfg.assignment.kmeans_max_iters => flags.kmeans_max_iters,
    );
}

fn apply_simulation_flags(cfg: &mut RunConfig, flags: &SimulationFlags) {
    let sim = &mut cfg.simulation;
    override_fields!(
        sim.window => flags.window,
        sim.cold_start_similarity => flags.cold_start,
        sim.error_model.intercept => flags.intercept,
        sim.error_model.slope => flags.slope,
        sim.error_model.min_error => flags.min_error,
        sim.error_model.max_error => flags.max_error,
    );
    if flags.exclude_validation_history {
        sim.include_validation_history = false;
    }
}

pub fn assign(args: AssignArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    apply_assign_flags(&mut cfg, &args.flags);
    override_fields!(cfg.assignment.algorithm => args.algorithm);
    let embs = embed::load_program_embeddings(&args.embeddings).map_err(core)?;
    let assignment = assign::build_assignment(&embs, &cfg.assignment).map_err(core)?;
    let prov = Provenance::new("assign", &[&args.embeddings], &cfg);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        output::ensure_dir(dir)?;
    }
    write_json(&args.out, &assignment, &prov)?;
    println!(
        "{} over {} graders, loads {:?}",
        assignment.algorithm,
        assignment.graders.len(),
        assignment.loads()
    );
    Ok(())
}

#[derive(Serialize)]
struct SessionRow<'a> {
    grader: usize,
    position: usize,
    submission_id: &'a str,
    validation: bool,
    error_pct: f64,
}

pub fn simulate(args: SimulateArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    apply_assign_flags(&mut cfg, &args.assign);
    apply_simulation_flags(&mut cfg, &args.sim);
    override_fields!(
        cfg.algorithms => args.algorithms.clone(),
        cfg.n_repetitions => args.reps,
        cfg.bootstrap_trials => args.bootstrap_trials,
    );
    let problems = args
        .embeddings
        .iter()
        .map(|p| embed::load_program_embeddings(p).map_err(core))
        .collect::<Result<Vec<_>, _>>()?;
    output::ensure_dir(&args.out_dir)?;
    let mut inputs: Vec<&Path> = args.embeddings.iter().map(|p| p.as_path()).collect();

    if let Some(path) = &args.assignment {
        let [embs] = problems.as_slice() else {
            return Err(Failure::Usage("--assignment takes exactly one --embeddings file".into()));
        };
        inputs.push(path);
        let assignment = Assignment::load(path).map_err(core)?;
        let sim = embed::pairwise_similarity(embs).map_err(core)?;
        let result = simulate::simulate_session(&assignment, &sim, &cfg.simulation).map_err(core)?;
        let prov = Provenance::new("simulate", &inputs, &cfg);
        write_json(&args.out_dir.join("session.json"), &result, &prov)?;
        write_with_sidecar(&args.out_dir.join("session.csv"), &prov, |w| {
            let mut out = csv::Writer::from_writer(w);
            for (g, errors) in assignment.graders.iter().zip(&result.errors) {
                for (pos, (entry, &error_pct)) in g.queue.iter().zip(errors).enumerate() {
                    out.serialize(SessionRow {
                        grader: g.grader,
                        position: pos,
                        submission_id: &entry.id,
                        validation: entry.validation,
                        error_pct,
                    })
                    .map_err(csv_io)?;
                }
            }
            out.flush()
        })?;
        println!(
            "mean error {:.4}%, validation distance {:.6}",
            result.mean_error, result.validation_distance
        );
        return Ok(());
    }

    let comparison = ComparisonConfig {
        algorithms: cfg.algorithms.clone(),
        n_repetitions: cfg.n_repetitions,
        bootstrap_trials: cfg.bootstrap_trials,
        assignment: cfg.assignment.clone(),
        simulation: cfg.simulation,
        seed: cfg.seed,
    };
    let report = simulate::compare_algorithms(&problems, &comparison).map_err(core)?;
    let prov = Provenance::new("simulate", &inputs, &cfg);
    write_with_sidecar(&args.out_dir.join("comparison.csv"), &prov, |w| {
        report.write_csv(w).map_err(csv_io)
    })?;
    write_json(&args.out_dir.join("comparison.json"), &report, &prov)?;
    print!("{}", render_table(&report));
    Ok(())
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    grader_errors: &'a stats::GraderAnalysis,
    window: WindowSummary<'a>,
}

#[derive(Serialize)]
struct WindowSummary<'a> {
    window: usize,
    include_validation_history: bool,
    n_pairs: usize,
    fit: &'a Option<simgrade::OlsFit>,
}

pub fn analyze(args: AnalyzeArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    override_fields!(cfg.analysis_window => args.window);
    if args.exclude_validation_history {
        cfg.simulation.include_validation_history = false;
    }
    let logs = corpus::load_grading_logs(&args.logs).map_err(core)?;
    let embs = embed::load_program_embeddings(&args.embeddings).map_err(core)?;
    let graders = stats::grader_error_analysis(&logs).map_err(core)?;
    let window = stats::window_similarity_analysis(
        &logs,
        &embs,
        cfg.analysis_window,
        cfg.simulation.include_validation_history,
    )
    .map_err(core)?;

    output::ensure_dir(&args.out_dir)?;
    let prov = Provenance::new("analyze", &[&args.logs, &args.embeddings], &cfg);
    let summary = AnalysisSummary {
        grader_errors: &graders,
        window: WindowSummary {
            window: window.window,
            include_validation_history: window.include_validation_history,
            n_pairs: window.pairs.len(),
            fit: &window.fit,
        },
    };
    write_json(&args.out_dir.join("summary.json"), &summary, &prov)?;
    write_with_sidecar(&args.out_dir.join("graders.csv"), &prov, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["grader_id", "mean_pct_error", "n_validations"]).map_err(csv_io)?;
        for (id, g) in &graders.per_grader {
            out.write_record([id.clone(), g.mean_pct_error.to_string(), g.n_validations.to_string()])
                .map_err(csv_io)?;
        }
        out.flush()
    })?;
    write_with_sidecar(&args.out_dir.join("window_pairs.csv"), &prov, |w| {
        let mut out = csv::Writer::from_writer(w);
        for p in &window.pairs {
            out.serialize(p).map_err(csv_io)?;
        }
        out.flush()
    })?;
    println!(
        "{} validation entries, rmse {:.4}, {} window pairs",
        graders.n_entries,
        graders.rmse,
        window.pairs.len()
    );
    Ok(())
}

pub fn render_table(report: &ComparisonReport) -> String {
    let mut s = format!(
        "{:<14} {:>14} {:>20} {:>12} {:>6}\n",
        "algorithm", "mean_error_pct", "validation_distance", "p_vs_random", "reps"
    );
    for r in &report.rows {
        let p = r.p_vs_random.map_or_else(|| "-".to_owned(), |p| format!("{p:.3e}"));
        s += &format!(
            "{:<14} {:>14.4} {:>20.6} {:>12} {:>6}\n",
            r.algorithm.name(),
            r.mean_error_pct,
            r.validation_distance,
            p,
            r.n_reps
        );
    }
    s += &format!(
        "{} problem(s); errors averaged over every queue position of every grader session\n",
        report.n_problems
    );
    s
}

pub fn report(args: ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.comparison).map_err(|e| Failure::io(&args.comparison, e))?;
    let report: ComparisonReport = serde_json::from_str(&text)
        .map_err(|e| Failure::Domain(format!("{}: not a comparison report: {e}", args.comparison.display())))?;
    let table = render_table(&report);
    match &args.out {
        Some(path) => fs::write(path, table).map_err(|e| Failure::io(path, e)),
        None => std::io::stdout()
            .write_all(table.as_bytes())
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn load_labels(path: &Path) -> Result<Vec<LabelRecord>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::Domain(format!("{}:{}: malformed label record: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Serialize)]
struct SemanticsSummary<'a> {
    fit: &'a synth::SemanticFit,
    slope_test: Option<simgrade::BootstrapResult>,
}

#[derive(Serialize)]
struct PairRow<'a> {
    a: &'a str,
    b: &'a str,
    cosine: f64,
    jaccard: f64,
}

pub fn semantics(args: SemanticsArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    override_fields!(
        cfg.semantic_pairs => args.pairs,
        cfg.bootstrap_trials => args.bootstrap_trials,
    );
    let labels = load_labels(&args.labels)?;
    let embs = embed::load_program_embeddings(&args.embeddings).map_err(core)?;
    let by_id: HashMap<&str, &ProgramEmbedding> = embs.iter().map(|e| (e.submission_id.as_str(), e)).collect();
    let mut programs = Vec::with_capacity(labels.len());
    let mut aligned = Vec::with_capacity(labels.len());
    for rec in &labels {
        let e = by_id
            .get(rec.id.as_str())
            .ok_or_else(|| core(stats::StatsError::MissingEmbedding(rec.id.clone())))?;
        programs.push(LabeledProgram {
            source_text: String::new(),
            labels: rec.labels.clone(),
        });
        aligned.push((*e).clone());
    }
    let fit = synth::evaluate_semantics(&programs, &aligned, cfg.semantic_pairs, cfg.seed).map_err(core)?;
    let cos: Vec<f64> = fit.pairs.iter().map(|p| p.cosine).collect();
    let jac: Vec<f64> = fit.pairs.iter().map(|p| p.jaccard).collect();
    let slope_test = if fit.slope.is_some() {
        Some(stats::bootstrap_slope_test(&cos, &jac, cfg.bootstrap_trials, cfg.seed).map_err(core)?)
    } else {
        None
    };

    output::ensure_dir(&args.out_dir)?;
    let prov = Provenance::new("semantics", &[&args.labels, &args.embeddings], &cfg);
    write_json(
        &args.out_dir.join("semantics.json"),
        &SemanticsSummary {
            fit: &fit,
            slope_test,
        },
        &prov,
    )?;
    write_with_sidecar(&args.out_dir.join("semantic_pairs.csv"), &prov, |w| {
        let mut out = csv::Writer::from_writer(w);
        for p in &fit.pairs {
            out.serialize(PairRow {
                a: &labels[p.a].id,
                b: &labels[p.b].id,
                cosine: p.cosine,
                jaccard: p.jaccard,
            })
            .map_err(csv_io)?;
        }
        out.flush()
    })?;
    match (fit.slope, slope_test) {
        (Some(slope), Some(t)) => println!("{} pairs, slope {slope:.4}, p {:.3e}", fit.n_pairs, t.p_value),
        _ => println!("{} pairs, slope undefined ({:?})", fit.n_pairs, fit.flags),
    }
    Ok(())
}
