//! Command-line entry point: subcommands, configuration and run manifests.

mod manifest;

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::channel::{channel_stats, corrupt_corpus, ChannelConfig};
use crate::config::KeyValues;
use crate::corpus::{generate_toy_corpus, load_corpus, save_corpus, Corpus, Position};
use crate::dan::{self, gradcheck, DanModel, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::eval::{self, MatrixPlan, MethodKind, MethodSpec, Ordering};
use crate::index::{build_index, query, InvertedIndex, DEFAULT_B, DEFAULT_K1};
use crate::metrics::{align_pairs, fit_tfidf, score_distribution, GroupKey, Metric};
use crate::util::write_atomic;

use manifest::ManifestBuilder;
pub use manifest::{manifest_path, FileDigest, RunManifest};

/// Environment variable consulted when no seed is given otherwise.
pub const SEED_ENV: &str = "NOISYQA_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "noisyqa",
    version,
    about = "Factoid QA under simulated speech-recognition noise"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic quiz-bowl style corpus.
    Generate(GenerateArgs),
    /// Pass a clean corpus through the simulated recognizer.
    Corrupt(CorruptArgs),
    /// Compare a clean corpus with its transcripts.
    Stats(StatsArgs),
    /// Build the BM25 answer index from training questions.
    Index(IndexArgs),
    /// Rank answers for questions with an index or a trained model.
    Query(QueryArgs),
    /// Train a deep averaging network.
    Train(TrainArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the method × condition × position accuracy matrix.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    answers: usize,
    #[arg(long, default_value_t = 2000)]
    questions: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Channel configuration (flat key = value file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration entry, e.g. --set substitution_rate=0.3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    corrupted: PathBuf,
    /// Background corpus for TF-IDF; defaults to the clean corpus.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Statistics as JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write WER and BLEU score distributions here.
    #[arg(long)]
    distributions: Option<PathBuf>,
    /// Distribution grouping: none, seed, or meta:KEY.
    #[arg(long, default_value = "seed")]
    group: String,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K1)]
    k1: f64,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    index: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Questions to answer.
    #[arg(long = "in")]
    input: PathBuf,
    /// Only this question.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "end")]
    position: Position,
    #[arg(short, default_value_t = 5)]
    k: usize,
    /// Write rankings as JSON instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, default_value = "plain")]
    variant: Variant,
    /// Training configuration (flat key = value file).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model checkpoint; the epoch history goes to `<out>.history.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// A variant name or `all`.
    #[arg(long, default_value = "all")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Clean corpus; it is split and corrupted internally.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    channel_config: Option<PathBuf>,
    #[arg(long = "set-channel", value_name = "KEY=VALUE")]
    channel_sets: Vec<String>,
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long = "set-train", value_name = "KEY=VALUE")]
    train_sets: Vec<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "ir,dan_plain,dan_conf,dan_fd,dan_fd_conf"
    )]
    methods: Vec<MethodKind>,
    /// Variant behind dan_conf and dan_fd_conf.
    #[arg(long, default_value = "conf_learned")]
    conf_variant: Variant,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Train on clean text, test on transcripts.
    #[arg(long)]
    mismatched: bool,
    /// Orderings that must hold, e.g. --assert conf_ge_plain,fd_ge_unk.
    #[arg(long = "assert", value_delimiter = ',')]
    asserts: Vec<Ordering>,
    /// Results JSON; the text table goes beside it with a .txt extension.
    #[arg(long)]
    out: PathBuf,
}

/// Runs one command line (including the program name) and returns the
/// process exit code: 0 success, 1 failure, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Stats(a) => stats(a),
        Command::Index(a) => index(a),
        Command::Query(a) => query_cmd(a),
        Command::Train(a) => train(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Error::Config(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))
        }),
    }
}

/// Config file, then `--set` overrides, then `--seed`; the environment seed
/// fills in only when no seed was given anywhere.
fn layered_config(
    path: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
    manifest: &mut ManifestBuilder,
) -> Result<KeyValues> {
    let mut kv = match path {
        Some(p) => {
            manifest.input(p)?;
            KeyValues::load(p)?
        }
        None => KeyValues::default(),
    };
    for s in sets {
        kv.assign(s)?;
    }
    match seed {
        Some(s) => kv.set("seed", s),
        None if kv.get("seed").is_none() => {
            if let Some(s) = env_seed()? {
                kv.set("seed", s);
            }
        }
        None => {}
    }
    Ok(kv)
}

fn read_corpus(path: &Path, manifest: &mut ManifestBuilder) -> Result<Corpus> {
    manifest.input(path)?;
    load_corpus(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn generate(a: GenerateArgs) -> Result<i32> {
    if a.answers < 2 || a.questions < a.answers {
        return Err(Error::InvalidArgument(
            "need at least two answers and one question per answer".into(),
        ));
    }
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let mut m = ManifestBuilder::new("generate");
    m.config("answers", a.answers);
    m.config("questions", a.questions);
    m.seed("corpus", seed);
    let corpus = generate_toy_corpus(a.answers, a.questions, seed);
    save_corpus(&corpus, &a.out)?;
    m.finish(&[&a.out])?;
    println!("wrote {} questions to {}", corpus.len(), a.out.display());
    Ok(0)
}

fn corrupt(a: CorruptArgs) -> Result<i32> {
    let mut m = ManifestBuilder::new("corrupt");
    let clean = read_corpus(&a.input, &mut m)?;
    let kv = layered_config(a.config.as_deref(), &a.sets, a.seed, &mut m)?;
    let config = ChannelConfig::from_key_values(&kv)?;
    m.config_section("channel", &config.to_key_values());
    m.seed("channel", config.seed);
    let corrupted = corrupt_corpus(&clean, &config)?;
    save_corpus(&corrupted, &a.out)?;
    m.finish(&[&a.out])?;
    println!(
        "wrote {} transcripts to {} (channel {})",
        corrupted.len(),
        a.out.display(),
        config.fingerprint()
    );
    Ok(0)
}

fn parse_group(text: &str) -> Result<GroupKey> {
    match text {
        "none" => Ok(GroupKey::None),
        "seed" => Ok(GroupKey::Seed),
        other => match other.strip_prefix("meta:") {
            Some(k) if !k.is_empty() => Ok(GroupKey::Meta(k.to_string())),
            _ => Err(Error::InvalidArgument(format!(
                "group must be none, seed or meta:KEY, got '{other}'"
            ))),
        },
    }
}

fn stats(a: StatsArgs) -> Result<i32> {
    let group = parse_group(&a.group)?;
    let mut m = ManifestBuilder::new("stats");
    let clean = read_corpus(&a.clean, &mut m)?;
    let corrupted = read_corpus(&a.corrupted, &mut m)?;
    let background = match &a.background {
        Some(p) => read_corpus(p, &mut m)?,
        None => clean.clone(),
    };
    let tfidf = fit_tfidf(&background)?;
    m.config("tfidf_fingerprint", tfidf.fingerprint());
    let stats = channel_stats(&clean, &corrupted, &tfidf)?;
    write_json(&a.out, &stats)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(path) = &a.distributions {
        let pairs = align_pairs(&clean, &corrupted)?;
        let report = serde_json::json!({
            "wer": score_distribution(&pairs, Metric::Wer, &group)?,
            "bleu": score_distribution(&pairs, Metric::Bleu, &group)?,
        });
        write_json(path, &report)?;
        m.config("group", &a.group);
        outputs.push(path);
    }
    m.finish(&outputs)?;
    print!("{}", stats.render_table());
    Ok(0)
}

fn index(a: IndexArgs) -> Result<i32> {
    let mut m = ManifestBuilder::new("index");
    let train = read_corpus(&a.input, &mut m)?;
    m.config("k1", a.k1);
    m.config("b", a.b);
    let idx = build_index(&train, a.k1, a.b)?;
    write_atomic(&a.out, idx.to_json().as_bytes())?;
    m.finish(&[&a.out])?;
    println!(
        "indexed {} answers, {} terms",
        idx.n_docs,
        idx.postings.len()
    );
    Ok(0)
}

type Ranker = dyn Fn(&crate::corpus::Question) -> Result<Vec<(String, f64)>>;

#[derive(Serialize)]
struct Ranking {
    id: String,
    answer: String,
    ranked: Vec<(String, f64)>,
}

fn query_cmd(a: QueryArgs) -> Result<i32> {
    if a.k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut m = ManifestBuilder::new("query");
    let questions = read_corpus(&a.input, &mut m)?;
    let selected: Vec<_> = questions
        .questions()
        .iter()
        .filter(|q| a.id.as_deref().is_none_or(|id| q.id == id))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidArgument("no matching question".into()));
    }
    let rank: Box<Ranker> = match (&a.index, &a.model) {
        (Some(path), _) => {
            m.input(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let idx = InvertedIndex::from_json(&text)?;
            let (k, position) = (a.k, a.position);
            Box::new(move |q| query(&idx, &position.view(q), k))
        }
        (None, Some(path)) => {
            m.input(path)?;
            let model = DanModel::load(path)?;
            let (k, position) = (a.k, a.position);
            Box::new(move |q| model.predict(q, position, k))
        }
        (None, None) => unreachable!("clap requires --index or --model"),
    };
    let rankings = selected
        .iter()
        .map(|q| {
            Ok(Ranking {
                id: q.id.clone(),
                answer: q.answer_label.clone(),
                ranked: rank(q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match &a.out {
        Some(path) => {
            m.config("k", a.k);
            m.config("position", a.position);
            write_json(path, &rankings)?;
            m.finish(&[path])?;
        }
        None => {
            for r in &rankings {
                for (i, (label, score)) in r.ranked.iter().enumerate() {
                    println!("{}\t{}\t{}\t{:.6}", r.id, i + 1, label, score);
                }
            }
        }
    }
    Ok(0)
}

fn train(a: TrainArgs) -> Result<i32> {
    let mut m = ManifestBuilder::new("train");
    let train_corpus = read_corpus(&a.train, &mut m)?;
    let dev = match &a.dev {
        Some(p) => read_corpus(p, &mut m)?,
        None => Corpus::default(),
    };
    let kv = layered_config(a.config.as_deref(), &a.sets, a.seed, &mut m)?;
    let config = TrainConfig::from_key_values(&kv)?;
    m.config_section("train", &config.to_key_values());
    m.config("variant", a.variant);
    m.seed("train", config.seed);
    let outcome = dan::train(&train_corpus, &dev, &config, a.variant)?;
    outcome.model.save(&a.out)?;
    let history_path = sibling(&a.out, ".history.json");
    write_json(&history_path, &outcome.history)?;
    m.finish(&[&a.out, &history_path])?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "{} epochs (best {}), train accuracy {:.4}, dev accuracy {}",
        outcome.history.len(),
        outcome.best_epoch,
        last.train_accuracy,
        outcome.history[outcome.best_epoch - 1]
            .dev_accuracy
            .map_or("-".to_string(), |d| format!("{d:.4}"))
    );
    Ok(0)
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<i32> {
    let variants: Vec<Variant> = if a.variant == "all" {
        Variant::ALL.to_vec()
    } else {
        vec![a.variant.parse().map_err(Error::InvalidArgument)?]
    };
    let mut ok = true;
    for v in variants {
        let (params, batch, gold) = gradcheck::random_instance(v, a.seed)?;
        let report = dan::finite_difference_check(&params, &batch, &gold, a.epsilon)?;
        let pass = report.max_relative_error <= a.tolerance;
        ok &= pass;
        println!(
            "{v}\tmax relative error {:.3e}\t({} at {}, {} parameters)\t{}",
            report.max_relative_error,
            report.worst_parameter,
            report.worst_index,
            report.checked,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(if ok { 0 } else { 1 })
}

fn evaluate(a: EvaluateArgs) -> Result<i32> {
    let mut m = ManifestBuilder::new("evaluate");
    let clean = read_corpus(&a.input, &mut m)?;
    let channel_kv = layered_config(a.channel_config.as_deref(), &a.channel_sets, None, &mut m)?;
    let channel = ChannelConfig::from_key_values(&channel_kv)?;
    let train_kv = layered_config(a.train_config.as_deref(), &a.train_sets, None, &mut m)?;
    let train_config = TrainConfig::from_key_values(&train_kv)?;
    m.config_section("channel", &channel.to_key_values());
    m.config_section("train", &train_config.to_key_values());
    let methods: Vec<&str> = a.methods.iter().map(|k| k.name()).collect();
    m.config("methods", methods.join(","));
    m.config("conf_variant", a.conf_variant);
    m.config("mismatched", a.mismatched);
    m.seed("channel", channel.seed);
    m.seed("split", a.split_seed);
    for s in &a.seeds {
        m.seed(&format!("train.{s}"), *s);
    }

    let mut plan = MatrixPlan::new(channel, train_config);
    plan.methods = a
        .methods
        .iter()
        .map(|&kind| MethodSpec {
            kind,
            conf_variant: a.conf_variant,
        })
        .collect();
    plan.seeds = a.seeds.clone();
    plan.split_seed = a.split_seed;
    plan.mismatched = a.mismatched;
    let result = eval::run_matrix(&clean, &plan)?;

    let table = eval::render_table(&result);
    let table_path = a.out.with_extension("txt");
    write_atomic(&a.out, result.to_json().as_bytes())?;
    write_atomic(&table_path, table.as_bytes())?;
    m.finish(&[&a.out, &table_path])?;
    print!("{table}");

    let mut failed = false;
    for o in &a.asserts {
        match o.check(&result) {
            Some((holds, left, right)) => {
                println!(
                    "{}\t{:.4} vs {:.4}\t{}",
                    o.name(),
                    left,
                    right,
                    if holds { "ok" } else { "FAILED" }
                );
                failed |= !holds;
            }
            None => {
                println!("{}\tmissing rows\tFAILED", o.name());
                failed = true;
            }
        }
    }
    Ok(if failed { 1 } else { 0 })
}
