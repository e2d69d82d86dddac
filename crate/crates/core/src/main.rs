use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ig_keywords::corpus::{
    generate_synthetic, infer_label_space, load_corpus, stratified_split, write_markers, Corpus,
    LabelSpace, PlantedMarkers, SplitSpec, SynthConfig, DEFAULT_MAX_PIECE_LEN,
};
use ig_keywords::model::{train, ModelParams, TrainConfig, Vocab};
use ig_keywords::pipeline::{
    aggregate, filter_keywords, normalize_key, parse_settings, read_round_artifacts, run_pipeline,
    PipelineConfig, Setting,
};
use ig_keywords::report::{
    render_keyword_table, run_dir_name, write_reports, Format, KeywordTable, ReportInputs,
};
use ig_keywords::verify::{completeness_check, gradient_check, oracle_check, CheckResult};
use ig_keywords::{Error, Result};

const CONFIG_FILE: &str = "config.txt";
const DEFAULT_TOP_M: usize = 15;

#[derive(Parser)]
#[command(
    name = "igkw",
    version,
    about = "Stable class keywords from Integrated Gradients"
)]
struct Cli {
    /// -v for progress, -vv for debug output
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with planted class markers
    Synth(SynthArgs),
    /// Run every round, aggregate, filter and write a run directory
    Run(RunArgs),
    /// Re-render reports from the round artifacts of a run directory
    Report(ReportArgs),
    /// Gradient check, IG completeness and the aggregate oracle
    Check(CheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output JSONL corpus
    #[arg(long)]
    out: PathBuf,
    /// Planted-marker sidecar; defaults to <out>.markers.json
    #[arg(long)]
    markers: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    docs_per_class: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    markers_per_class: Option<usize>,
    #[arg(long)]
    injection_prob: Option<f64>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    multilabel_prob: Option<f64>,
    #[arg(long)]
    zipf_exponent: Option<f64>,
    #[arg(long)]
    max_piece_len: Option<usize>,
}

/// Corpus selection shared by `run` and `check`.
#[derive(Args)]
struct CorpusArgs {
    /// JSONL corpus (one {"id", "text", "labels"} object per line)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated class names; inferred from the corpus when omitted
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    max_piece_len: Option<usize>,
    /// key = value file; command-line flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Planted markers (from `synth`) for recovery.json
    #[arg(long)]
    markers: Option<PathBuf>,
    /// Keywords per class in the rendered tables
    #[arg(long)]
    top_m: Option<usize>,
    /// Parent of the run directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Corpus to use instead of the one recorded in the run directory
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    markers: Option<PathBuf>,
    #[arg(long)]
    top_m: Option<usize>,
    /// Where to write the reports; defaults to the run directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Table printed to stdout: tsv, json or markdown
    #[arg(long, default_value = "markdown")]
    format: String,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Random models for the gradient check
    #[arg(long, default_value_t = 100)]
    triples: usize,
    /// Riemann steps for the completeness check
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// One flag per pipeline and training setting.
#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    sf_threshold: Option<f64>,
    #[arg(long)]
    min_doc_freq: Option<usize>,
    #[arg(long)]
    ig_steps: Option<usize>,
    /// logit or probability
    #[arg(long)]
    ig_target: Option<String>,
    /// zero, or comma-separated values of one embedding row
    #[arg(long)]
    baseline: Option<String>,
    /// true-positive, false-positive or false-negative
    #[arg(long)]
    selection_target: Option<String>,
    /// pooled or per-round
    #[arg(long)]
    mean_kind: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Keep per-document explanations in the round artifacts
    #[arg(long)]
    dump_attributions: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    weight_init_scale: Option<f64>,
    /// sgd or adam
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    adam_beta1: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    #[arg(long)]
    adam_epsilon: Option<f64>,
    #[arg(long)]
    decision_threshold: Option<f64>,
}

impl PipelineArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn opt<T: ToString>(
            out: &mut Vec<(&'static str, String)>,
            key: &'static str,
            v: &Option<T>,
        ) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        opt(&mut out, "split_ratio", &self.split_ratio);
        opt(&mut out, "top_n", &self.top_n);
        opt(&mut out, "rounds", &self.rounds);
        opt(&mut out, "sf_threshold", &self.sf_threshold);
        opt(&mut out, "min_doc_freq", &self.min_doc_freq);
        opt(&mut out, "ig_steps", &self.ig_steps);
        opt(&mut out, "ig_target", &self.ig_target);
        opt(&mut out, "baseline", &self.baseline);
        opt(&mut out, "selection_target", &self.selection_target);
        opt(&mut out, "mean_kind", &self.mean_kind);
        opt(&mut out, "master_seed", &self.master_seed);
        opt(&mut out, "workers", &self.workers);
        if self.dump_attributions {
            out.push(("dump_attributions", "true".into()));
        }
        opt(&mut out, "epochs", &self.epochs);
        opt(&mut out, "learning_rate", &self.learning_rate);
        opt(&mut out, "batch_size", &self.batch_size);
        opt(&mut out, "embed_dim", &self.embed_dim);
        opt(&mut out, "hidden_dim", &self.hidden_dim);
        opt(&mut out, "weight_init_scale", &self.weight_init_scale);
        // optimizer first so the adam_* flags apply to it
        opt(&mut out, "optimizer", &self.optimizer);
        opt(&mut out, "adam_beta1", &self.adam_beta1);
        opt(&mut out, "adam_beta2", &self.adam_beta2);
        opt(&mut out, "adam_epsilon", &self.adam_epsilon);
        opt(&mut out, "decision_threshold", &self.decision_threshold);
        out
    }
}

/// Settings that are not part of [`PipelineConfig`].
const RUN_KEYS: [&str; 6] = [
    "corpus",
    "labels",
    "max_piece_len",
    "markers",
    "top_m",
    "out_dir",
];

struct Resolved {
    run: BTreeMap<String, String>,
    pipeline: PipelineConfig,
}

impl Resolved {
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.run.get(key).map(PathBuf::from)
    }

    fn number(&self, key: &str, default: usize) -> Result<usize> {
        match self.run.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Validation(format!("{key} = {v:?}: {e}"))),
        }
    }

    fn set_run(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.run.insert(key.to_owned(), v);
        }
    }
}

/// Defaults, then the config file, then the command line.
fn resolve(
    base: PipelineConfig,
    file: Option<&Path>,
    overrides: &[(&str, String)],
) -> Result<Resolved> {
    let mut resolved = Resolved {
        run: BTreeMap::new(),
        pipeline: base,
    };
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let source = path.display().to_string();
        let (run, pipeline): (Vec<Setting>, Vec<Setting>) = parse_settings(&text, &source)?
            .into_iter()
            .partition(|s| RUN_KEYS.contains(&s.key.as_str()));
        for s in run {
            resolved.run.insert(s.key, s.value);
        }
        resolved.pipeline.apply(&pipeline, &source)?;
    }
    for (key, value) in overrides {
        resolved.pipeline.set(&normalize_key(key), value)?;
    }
    Ok(resolved)
}

fn open_corpus(resolved: &Resolved) -> Result<(Corpus, PathBuf)> {
    let path = resolved.path("corpus").ok_or_else(|| {
        Error::Validation("no corpus given (--corpus or corpus = ... in the config)".into())
    })?;
    let space = match resolved.run.get("labels") {
        Some(list) => LabelSpace::new(list.split(',').map(str::trim))?,
        None => infer_label_space(&path)?,
    };
    let max_piece_len = resolved.number("max_piece_len", DEFAULT_MAX_PIECE_LEN)?;
    let corpus = load_corpus(&path, space, max_piece_len)?;
    Ok((corpus, path))
}

fn read_markers(path: &Path) -> Result<PlantedMarkers> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn apply_corpus_args(resolved: &mut Resolved, args: &CorpusArgs) {
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    resolved.set_run("corpus", path(&args.corpus));
    resolved.set_run("labels", args.labels.clone());
    resolved.set_run("max_piece_len", args.max_piece_len.map(|v| v.to_string()));
}

fn synth(args: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        num_classes: args.num_classes.unwrap_or(d.num_classes),
        docs_per_class: args.docs_per_class.unwrap_or(d.docs_per_class),
        background_vocab_size: args.vocab_size.unwrap_or(d.background_vocab_size),
        markers_per_class: args.markers_per_class.unwrap_or(d.markers_per_class),
        marker_injection_prob: args.injection_prob.unwrap_or(d.marker_injection_prob),
        doc_length: (
            args.min_length.unwrap_or(d.doc_length.0),
            args.max_length.unwrap_or(d.doc_length.1),
        ),
        multilabel_prob: args.multilabel_prob.unwrap_or(d.multilabel_prob),
        zipf_exponent: args.zipf_exponent.unwrap_or(d.zipf_exponent),
        max_piece_len: args.max_piece_len.unwrap_or(d.max_piece_len),
    };
    let (corpus, planted) = generate_synthetic(&cfg, args.seed)?;
    corpus.save_jsonl(&args.out)?;
    let markers = args.markers.unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".markers.json");
        PathBuf::from(name)
    });
    write_markers(&markers, &planted)?;
    println!(
        "wrote {} documents to {} and markers to {}",
        corpus.len(),
        args.out.display(),
        markers.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut resolved = resolve(
        PipelineConfig::default(),
        args.corpus.config.as_deref(),
        &args.pipeline.overrides(),
    )?;
    apply_corpus_args(&mut resolved, &args.corpus);
    resolved.set_run("markers", args.markers.map(|p| p.display().to_string()));
    resolved.set_run("top_m", args.top_m.map(|v| v.to_string()));
    resolved.set_run("out_dir", args.out_dir.map(|p| p.display().to_string()));
    resolved.pipeline.validate()?;

    let (corpus, corpus_path) = open_corpus(&resolved)?;
    let planted = resolved
        .path("markers")
        .map(|p| read_markers(&p))
        .transpose()?;
    let top_m = resolved.number("top_m", DEFAULT_TOP_M)?;
    let config = &resolved.pipeline;
    log::info!(
        "{} documents, {} classes, {} rounds on {} workers",
        corpus.len(),
        corpus.label_space().len(),
        config.rounds,
        config.workers
    );
    let out = run_pipeline(&corpus, config)?;

    let parent = resolved
        .path("out_dir")
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir = parent.join(run_dir_name(chrono::Utc::now(), config.master_seed));
    write_reports(
        &dir,
        &ReportInputs {
            label_space: corpus.label_space(),
            aggregate: &out.aggregate,
            keywords: &out.keywords,
            rounds: &out.rounds,
            top_m,
            planted: planted.as_ref(),
        },
    )?;

    // everything `report` needs to rebuild the tables
    let absolute = |p: PathBuf| fs::canonicalize(&p).unwrap_or(p).display().to_string();
    let mut saved = format!(
        "corpus = {}\nlabels = {}\nmax_piece_len = {}\ntop_m = {top_m}\n",
        absolute(corpus_path),
        corpus.label_space().classes().join(","),
        resolved.number("max_piece_len", DEFAULT_MAX_PIECE_LEN)?,
    );
    if let Some(m) = resolved.path("markers") {
        saved.push_str(&format!("markers = {}\n", absolute(m)));
    }
    saved.push_str(&config.to_settings());
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, saved).map_err(|e| Error::Io { path, source: e })?;

    let table = KeywordTable::new(&out.keywords, corpus.label_space(), top_m);
    print!("{}", render_keyword_table(&table, Format::Markdown)?);
    println!("\nrun directory: {}", dir.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let format: Format = args.format.parse()?;
    let mut resolved = resolve(
        PipelineConfig::default(),
        Some(&args.run_dir.join(CONFIG_FILE)),
        &[],
    )?;
    resolved.set_run("corpus", args.corpus.map(|p| p.display().to_string()));
    resolved.set_run("markers", args.markers.map(|p| p.display().to_string()));
    resolved.set_run("top_m", args.top_m.map(|v| v.to_string()));
    let (corpus, _) = open_corpus(&resolved)?;
    let planted = resolved
        .path("markers")
        .map(|p| read_markers(&p))
        .transpose()?;
    let top_m = resolved.number("top_m", DEFAULT_TOP_M)?;

    let rounds = read_round_artifacts(&args.run_dir)?;
    let config = &resolved.pipeline;
    if rounds.len() != config.rounds {
        log::warn!(
            "{} round artifacts for {} configured rounds; missing rounds count as non-selections",
            rounds.len(),
            config.rounds
        );
    }
    let records = aggregate(&rounds, &corpus, config);
    let keywords = filter_keywords(&records, config);
    let out_dir = args.out_dir.unwrap_or_else(|| args.run_dir.clone());
    write_reports(
        &out_dir,
        &ReportInputs {
            label_space: corpus.label_space(),
            aggregate: &records,
            keywords: &keywords,
            rounds: &rounds,
            top_m,
            planted: planted.as_ref(),
        },
    )?;
    let table = KeywordTable::new(&keywords, corpus.label_space(), top_m);
    print!("{}", render_keyword_table(&table, format)?);
    Ok(())
}

fn check(args: CheckArgs) -> Result<bool> {
    let toy = PipelineConfig {
        rounds: 5,
        top_n: 5,
        master_seed: args.seed,
        train: TrainConfig {
            epochs: 15,
            learning_rate: 0.05,
            batch_size: 8,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    let mut resolved = resolve(
        toy,
        args.corpus.config.as_deref(),
        &args.pipeline.overrides(),
    )?;
    apply_corpus_args(&mut resolved, &args.corpus);
    resolved.pipeline.validate()?;
    let corpus = if resolved.run.contains_key("corpus") {
        open_corpus(&resolved)?.0
    } else {
        let synth = SynthConfig {
            docs_per_class: 12,
            background_vocab_size: 200,
            doc_length: (6, 14),
            ..SynthConfig::default()
        };
        generate_synthetic(&synth, args.seed)?.0
    };
    let config = &resolved.pipeline;

    let mut results: Vec<CheckResult> = vec![gradient_check(args.triples, args.seed)?];

    let split = stratified_split(&corpus, SplitSpec::new(config.split_ratio, args.seed)?);
    let train_config = TrainConfig {
        seed: args.seed,
        ..config.train.clone()
    };
    let init = ModelParams::init(
        Vocab::from_corpus(&split.train),
        corpus.label_space().clone(),
        &train_config,
    );
    let (params, _) = train(init, &split.train, &train_config)?;
    results.push(completeness_check(
        &params,
        split.validation.documents(),
        args.steps,
    )?);
    results.push(oracle_check(&corpus, config)?);

    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Check(a) => match check(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
