mod serve;
mod settings;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use satd_core::config_hash;
use satd_core::corpus::{self, Corpus, CorpusError, PreprocessConfig, PreprocessStats};
use satd_core::eval::{self, manifest_header, BenchmarkConfig, Protocol, Technique};
use satd_core::explain::{self, Background, ExplainError};
use satd_core::features::LabeledMatrix;
use satd_core::models::{self, ModelKind, TrainedModel};
use satd_core::text::Lemmatizer;

use settings::Settings;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

enum Fail {
    /// Bad arguments, configuration or input schema.
    Usage(String),
    Runtime(String),
}

type Res<T> = Result<T, Fail>;

fn usage(e: impl ToString) -> Fail {
    Fail::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Fail {
    Fail::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "satd", version, about = "Detect self-admitted technical debt in code comments")]
struct Cli {
    /// Flat key=value settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a labeled comment CSV into a tab-separated corpus.
    Preprocess(PreprocessArgs),
    /// Run the technique x model grid and write metric tables.
    Benchmark(BenchmarkArgs),
    /// Train one model on a cleaned corpus and save it.
    Train(TrainArgs),
    /// Score comments with a saved model.
    Predict(PredictArgs),
    /// Feature attributions of a saved logistic model.
    Explain(ExplainArgs),
    /// Compare F1 with and without duplicate comments.
    DupImpact(DupImpactArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Keep duplicate comments (raw and after cleaning).
    #[arg(long)]
    no_dedupe: bool,
    /// Drop raw duplicates only; keep records whose cleaned text repeats an earlier one.
    #[arg(long)]
    keep_cleaned_duplicates: bool,
    /// Comma-separated project names to keep.
    #[arg(long)]
    projects: Option<String>,
    /// Also strip -ing/-ed endings during lemmatization.
    #[arg(long)]
    verb_lemmas: bool,
    /// Write the per-project summary table here as CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    protocol: Option<String>,
    /// Comma-separated: baseline,cost,smote,bline,adasyn,svmsmt
    #[arg(long)]
    techniques: Option<String>,
    /// Comma-separated: lr,rf,xgb
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seeded repetitions per target project in cross-project runs.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Signed-rank pairing unit: project or fold.
    #[arg(long)]
    pairing: Option<String>,
    /// Extra setting, e.g. --set rf_trees=50 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Cleaned corpus produced by `preprocess`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    projects: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "baseline")]
    technique: String,
    #[arg(long, default_value = "lr")]
    model: String,
    /// Train on these projects only (comma-separated).
    #[arg(long)]
    projects: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// One comment per line; defaults to stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Read {"text": ...} documents line by line and answer each.
    #[arg(long)]
    serve: bool,
    /// Serve one TCP connection at this address instead of stdin.
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Cleaned corpus whose records are explained.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    projects: Option<String>,
    /// Logistic model to diff contributing features against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Attribution reference: means (training means) or zero.
    #[arg(long, default_value = "means")]
    background: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DupImpactArgs {
    /// Raw labeled CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "smote")]
    technique: String,
    #[arg(long, default_value = "xgb")]
    model: String,
    /// Comma-separated protocols to run.
    #[arg(long, default_value = "within,cross")]
    protocols: String,
    #[arg(long)]
    projects: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Fail::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    configure_threads()?;
    let file_settings = match &cli.config {
        Some(p) => settings::load_settings(p).map_err(usage)?,
        None => Settings::new(),
    };
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Benchmark(a) => cmd_benchmark(a, file_settings),
        Command::Train(a) => cmd_train(a, file_settings),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::DupImpact(a) => cmd_dup_impact(a, file_settings),
    }
}

fn configure_threads() -> Res<()> {
    let Ok(v) = std::env::var("SATD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("SATD_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(runtime)
}

fn project_filter(list: &Option<String>) -> Option<HashSet<String>> {
    list.as_ref()
        .map(|s| s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect())
}

fn corpus_error(e: CorpusError) -> Fail {
    match e {
        CorpusError::Io(_) => runtime(e),
        other => usage(other),
    }
}

fn open_input(path: &Path) -> Res<File> {
    File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Res<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, header: &str, body: &str) -> Res<()> {
    let mut w = create_output(path)?;
    writeln!(w, "{header}").and_then(|_| w.write_all(body.as_bytes())).and_then(|_| w.flush()).map_err(runtime)
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

const PREPROCESS_TAG: &str = "preprocess ";

fn load_raw(path: &Path, projects: &Option<String>) -> Res<Corpus> {
    let filter = project_filter(projects);
    let corpus = corpus::read_corpus_csv(open_input(path)?, filter.as_ref()).map_err(corpus_error)?;
    if corpus.is_empty() {
        return Err(usage(format!("{}: no comment rows", path.display())));
    }
    Ok(corpus)
}

fn summary_table(stats: &PreprocessStats) -> String {
    let mut s = String::from("project,comments,satd,satd_pct,non_satd_pct\n");
    let row = |name: &str, total: usize, satd: usize| {
        let pct = if total > 0 { 100.0 * satd as f64 / total as f64 } else { 0.0 };
        format!("{name},{total},{satd},{pct:.2},{:.2}\n", if total > 0 { 100.0 - pct } else { 0.0 })
    };
    for (p, c) in &stats.per_project {
        s.push_str(&row(p, c.total, c.satd));
    }
    s.push_str(&row("total", stats.output_count, stats.output_satd));
    s
}

fn cmd_preprocess(a: PreprocessArgs) -> Res<()> {
    let raw = load_raw(&a.input, &a.projects)?;
    let cfg = PreprocessConfig {
        dedupe: !a.no_dedupe,
        dedupe_cleaned: !a.no_dedupe && !a.keep_cleaned_duplicates,
        lemmatizer: Lemmatizer {
            strip_verb_suffixes: a.verb_lemmas,
            ..Lemmatizer::default()
        },
        ..PreprocessConfig::default()
    };
    let (clean, stats) = corpus::preprocess(&raw, &cfg);
    let header = vec![
        manifest_header(0, &config_hash(&cfg)).trim_start_matches("# ").to_string(),
        format!("{PREPROCESS_TAG}{}", serde_json::to_string(&cfg).map_err(runtime)?),
    ];
    let out = create_output(&a.output)?;
    corpus::write_clean_corpus(out, &clean, &header).map_err(runtime)?;

    let table = summary_table(&stats);
    if let Some(p) = &a.summary {
        write_file(p, &manifest_header(0, &config_hash(&cfg)), &table)?;
    }
    println!("input comments: {}", stats.input_count);
    println!(
        "duplicates removed: {} ({:.2}%)",
        stats.dedup.removed_count,
        100.0 * stats.dedup.removed_fraction
    );
    println!("hollow comments removed: {}", stats.hollow_removed);
    println!("cleaned-text duplicates removed: {}", stats.cleaned_duplicates_removed);
    println!("output comments: {} ({} SATD)", stats.output_count, stats.output_satd);
    print!("{table}");
    Ok(())
}

/// Reads the cleaned corpus and the preprocessing settings recorded in its header.
fn load_clean(path: &Path, projects: &Option<String>) -> Res<(Corpus, PreprocessConfig)> {
    let mut cfg = PreprocessConfig::default();
    let reader = BufReader::new(open_input(path)?);
    for line in reader.lines() {
        let line = line.map_err(runtime)?;
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some(json) = rest.strip_prefix(PREPROCESS_TAG) {
            cfg = serde_json::from_str(json).map_err(|e| usage(format!("bad preprocess header: {e}")))?;
        }
    }
    let mut corpus = corpus::read_clean_corpus(open_input(path)?).map_err(corpus_error)?;
    if let Some(filter) = project_filter(projects) {
        corpus = Corpus::new(corpus.into_records().into_iter().filter(|r| filter.contains(&r.project_id)).collect());
    }
    if corpus.is_empty() {
        return Err(usage(format!("{}: corpus is empty", path.display())));
    }
    Ok((corpus, cfg))
}

// ---------------------------------------------------------------------------
// benchmark / train
// ---------------------------------------------------------------------------

fn grid_settings(mut s: Settings, g: &GridArgs) -> Res<BenchmarkConfig> {
    for kv in &g.set {
        let (k, v) = settings::parse_assignment(kv).map_err(usage)?;
        s.insert(k, v);
    }
    let flags = [
        ("protocol", g.protocol.clone()),
        ("techniques", g.techniques.clone()),
        ("models", g.models.clone()),
        ("seed", g.seed.map(|v| v.to_string())),
        ("repetitions", g.repetitions.map(|v| v.to_string())),
        ("pairing", g.pairing.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s.insert(k.to_string(), v);
        }
    }
    settings::benchmark_config(&s).map_err(usage)
}

fn cmd_benchmark(a: BenchmarkArgs, file: Settings) -> Res<()> {
    let cfg = grid_settings(file, &a.grid)?;
    let (corpus, _) = load_clean(&a.corpus, &a.projects)?;
    let result = eval::run_grid(&corpus, &cfg).map_err(|e| match e {
        eval::EvalError::Protocol(_) => usage(e),
        other => runtime(other),
    })?;
    let written = eval::write_benchmark(&a.out, &result).map_err(runtime)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    print!("f1\n{}", eval::metric_table(&result, eval::Metric::F1));
    let failures = result.failure_count();
    if failures > 0 {
        println!("warnings:");
        for c in &result.cells {
            for f in &c.failures {
                println!(
                    "  {}/{} {} fold {} rep {}: {}",
                    c.technique, c.model, f.project_id, f.fold_id, f.repetition, f.message
                );
            }
        }
        println!("{failures} fold(s) failed; affected cells are incomplete");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, mut file: Settings) -> Res<()> {
    let technique: Technique = a.technique.parse().map_err(usage)?;
    let kind: ModelKind = a.model.parse().map_err(usage)?;
    if let Some(seed) = a.seed {
        file.insert("seed".into(), seed.to_string());
    }
    for kv in &a.set {
        let (k, v) = settings::parse_assignment(kv).map_err(usage)?;
        file.insert(k, v);
    }
    let cfg = settings::benchmark_config(&file).map_err(usage)?;
    let (corpus, pre) = load_clean(&a.corpus, &a.projects)?;
    let model = eval::train_full(&corpus, technique, kind, &cfg, pre.lemmatizer).map_err(runtime)?;
    models::save_model(&model, &a.output).map_err(runtime)?;
    println!(
        "trained {kind} with {technique} on {} comments ({} SATD), vocabulary {}; wrote {}",
        corpus.len(),
        corpus.satd_count(),
        model.dim(),
        a.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn load_model(path: &Path) -> Res<TrainedModel> {
    models::load_model(path).map_err(|e| match e {
        models::ModelError::Io(_) => runtime(format!("{}: {e}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn cmd_predict(a: PredictArgs) -> Res<()> {
    let model = load_model(&a.model)?;
    if let Some(addr) = &a.listen {
        serve::listen(&model, addr).map_err(runtime)?;
        return Ok(());
    }
    let input: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(BufReader::new(open_input(p)?)),
        None => Box::new(io::stdin().lock()),
    };
    let mut output: Box<dyn Write> = match &a.output {
        Some(p) => {
            let mut w = create_output(p)?;
            writeln!(w, "{}", manifest_header(model.seed, &model.vocabulary.fingerprint())).map_err(runtime)?;
            Box::new(w)
        }
        None => Box::new(io::stdout().lock()),
    };
    if a.serve {
        serve::serve(&model, input, &mut output).map_err(runtime)?;
    } else {
        serve::batch(&model, input, &mut output).map_err(runtime)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

fn explain_error(e: ExplainError) -> Fail {
    match e {
        ExplainError::NotLinear(_) | ExplainError::NoBackground | ExplainError::VocabularyMismatch => usage(e),
        other => runtime(other),
    }
}

fn cmd_explain(a: ExplainArgs) -> Res<()> {
    let background: Background = a.background.parse().map_err(usage)?;
    let model = load_model(&a.model)?;
    if model.kind() != ModelKind::Logistic {
        return Err(usage(format!(
            "explain supports logistic models only; {} is a {} model",
            a.model.display(),
            model.kind()
        )));
    }
    let (corpus, _) = load_clean(&a.corpus, &a.projects)?;
    let stats_for = |m: &TrainedModel| -> Res<explain::FeatureContributionStats> {
        let vectors = corpus.records().iter().map(|r| m.vectorize_text(&r.text)).collect();
        let labels = corpus.records().iter().map(|r| r.label).collect();
        let matrix = LabeledMatrix::new(m.dim(), vectors, labels);
        let reports = explain::explain_matrix(m, &matrix, background).map_err(explain_error)?;
        explain::contribution_stats(&reports, &m.vocabulary).map_err(explain_error)
    };
    let stats = stats_for(&model)?;
    let header = manifest_header(model.seed, &model.vocabulary.fingerprint());
    fs::create_dir_all(&a.out).map_err(runtime)?;
    write_file(&a.out.join("contributions.csv"), &header, &stats.to_csv(&model.vocabulary))?;

    let mut top = String::from("rank,term,mean_abs_attribution\n");
    for (i, (term, v)) in stats.top_k(&model.vocabulary, a.top).into_iter().enumerate() {
        top.push_str(&format!("{},{term},{v:e}\n", i + 1));
    }
    write_file(&a.out.join("top.csv"), &header, &top)?;
    println!(
        "instances: {}  contributing: {}  non-contributing: {}  vocabulary: {}",
        stats.n_instances,
        stats.contributing.len(),
        stats.non_contributing.len(),
        model.dim()
    );
    print!("{top}");

    if let Some(bp) = &a.baseline {
        let base = load_model(bp)?;
        if base.kind() != ModelKind::Logistic {
            return Err(usage(format!("baseline {} is not a logistic model", bp.display())));
        }
        let base_stats = stats_for(&base)?;
        let diff = explain::feature_diff(&stats, &base_stats).map_err(explain_error)?;
        write_file(
            &a.out.join("diff.csv"),
            &header,
            &diff.to_csv(&model.vocabulary, &model.technique),
        )?;
        println!(
            "new contributing features vs {}: {} ({:.2}%)",
            base.technique,
            diff.new_features.len(),
            100.0 * diff.new_fraction
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// dup-impact
// ---------------------------------------------------------------------------

fn cmd_dup_impact(a: DupImpactArgs, mut file: Settings) -> Res<()> {
    let technique: Technique = a.technique.parse().map_err(usage)?;
    let kind: ModelKind = a.model.parse().map_err(usage)?;
    let protocols: Vec<Protocol> = a
        .protocols
        .split(',')
        .map(|p| p.trim().parse().map_err(usage))
        .collect::<Res<_>>()?;
    if let Some(seed) = a.seed {
        file.insert("seed".into(), seed.to_string());
    }
    if let Some(r) = a.repetitions {
        file.insert("repetitions".into(), r.to_string());
    }
    for kv in &a.set {
        let (k, v) = settings::parse_assignment(kv).map_err(usage)?;
        file.insert(k, v);
    }
    let cfg = settings::benchmark_config(&file).map_err(usage)?;
    let raw = load_raw(&a.input, &a.projects)?;
    let keep = PreprocessConfig {
        dedupe: false,
        dedupe_cleaned: false,
        ..PreprocessConfig::default()
    };
    let (with_dups, _) = corpus::preprocess(&raw, &keep);
    let (deduped, _) = corpus::preprocess(&raw, &PreprocessConfig::default());
    let impact = eval::duplicate_impact_run(&with_dups, &deduped, technique, kind, &cfg, &protocols).map_err(|e| match e {
        eval::EvalError::Protocol(_) => usage(e),
        other => runtime(other),
    })?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut body = String::from("protocol,project,f1_with_duplicates,f1_deduplicated,delta\n");
    for r in &impact.rows {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            r.protocol,
            r.project_id,
            fmt(r.f1_with_duplicates),
            fmt(r.f1_deduplicated),
            fmt(r.delta)
        ));
    }
    for (p, (x, y)) in &impact.means {
        body.push_str(&format!("{p},mean,{},{},{}\n", fmt(*x), fmt(*y), fmt(x.zip(*y).map(|(x, y)| x - y))));
    }
    write_file(&a.out, &manifest_header(cfg.seed, &cfg.hash()), &body)?;
    print!("{body}");
    Ok(())
}
