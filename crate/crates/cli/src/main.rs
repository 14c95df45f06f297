//! Command-line pipeline: preprocess review records into relation-graph
//! pairs, train embeddings and the classifier, evaluate checkpoints, repeat
//! experiments over seeds, compare repetition CSVs, and report simplification
//! statistics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use acr_core::config::ModelConfig;
use acr_core::data::{
    load_jsonl, prepare_record, read_pairs, write_pairs, PreparedPair, ReviewRecord,
};
use acr_core::embed::{
    load_embeddings, save_embeddings, train_skipgram, SkipgramConfig, Vocabulary,
};
use acr_core::model::{load_model, save_model};
use acr_core::parse::{parse_subset, SourceFragment};
use acr_core::report::{tree_stats, TreeStats};
use acr_core::simplify::{simplify, KeepRule};
use acr_core::stats::{cliffs_delta, format_p_delta, win_tie_loss, Outcome, StatsError};
use acr_core::train::{
    evaluate, history_csv, metrics_row, parse_repetitions_csv, repetitions_csv,
    run_single_repetition, train, RepetitionRow, TrainOptions,
};
use anyhow::anyhow;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "acr",
    about = "Automatic code review over simplified-AST relation graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse records, simplify trees and serialize relation graphs.
    Preprocess(PreprocessArgs),
    /// Train skip-gram embeddings over the node-label sequences of a pairs file.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train the classifier and write a checkpoint plus a history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a pairs file and print a metrics row.
    Eval(EvalArgs),
    /// Run the experiment repeatedly over consecutive seeds.
    Repeat(RepeatArgs),
    /// Significance comparison of two repetition CSVs.
    Compare(CompareArgs),
    /// Simplification statistics over a records file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input records (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output pairs file (JSONL, two adjacent fragment lines per record).
    #[arg(long)]
    output: PathBuf,
    /// Skip AST simplification (keeps the raw trees).
    #[arg(long)]
    no_simplify: bool,
    /// Comma-separated substrings an attribute label must contain to survive.
    #[arg(long, default_value = "Declaration,Statement")]
    keep_rule: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    /// Pairs file to read label sequences from.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output embedding file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Model configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Where to write the per-epoch history CSV.
    #[arg(long)]
    history: PathBuf,
    /// Fraction held out for per-epoch metrics (0 = measure on the train set).
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Args)]
struct RepeatArgs {
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Train fraction of each per-repetition split.
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    /// Output CSV (one row per repetition plus a mean row).
    #[arg(long)]
    output: PathBuf,
    /// Worker threads for repetitions (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Repetition CSV of the candidate model.
    #[arg(long)]
    ours: PathBuf,
    /// Repetition CSV of the baseline.
    #[arg(long)]
    theirs: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Input records (JSONL).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    no_simplify: bool,
    #[arg(long, default_value = "Declaration,Statement")]
    keep_rule: String,
    /// Corpus name for the first CSV column.
    #[arg(long, default_value = "corpus")]
    name: String,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Data(e) => e,
        }
    }
}

fn usage(err: anyhow::Error) -> CliError {
    CliError::Usage(err)
}

fn data(err: anyhow::Error) -> CliError {
    CliError::Data(err)
}

type CliResult<T> = Result<T, CliError>;

trait DataContext<T> {
    fn or_data(self, what: &str) -> CliResult<T>;
}

impl<T, E: std::error::Error + Send + Sync + 'static> DataContext<T> for Result<T, E> {
    fn or_data(self, what: &str) -> CliResult<T> {
        self.map_err(|e| data(anyhow!(e).context(what.to_string())))
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {:#}", err.message());
            std::process::exit(err.code());
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess(args) => preprocess(args),
        Command::TrainEmbeddings(args) => train_embeddings(args),
        Command::Train(args) => train_command(args),
        Command::Eval(args) => eval_command(args),
        Command::Repeat(args) => repeat_command(args),
        Command::Compare(args) => compare_command(args),
        Command::Stats(args) => stats_command(args),
    }
}

fn parse_keep_rule(text: &str) -> CliResult<KeepRule> {
    let substrings: Vec<String> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    KeepRule::new(substrings).map_err(|e| usage(anyhow!(e).context("--keep-rule")))
}

fn open_reader(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .or_data(&format!("opening {}", path.display()))
}

fn create_writer(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .or_data(&format!("creating {}", path.display()))
}

fn load_records(path: &Path) -> CliResult<Vec<ReviewRecord>> {
    load_jsonl(open_reader(path)?).or_data(&format!("reading {}", path.display()))
}

fn load_pairs(path: &Path) -> CliResult<Vec<PreparedPair>> {
    read_pairs(open_reader(path)?).or_data(&format!("reading {}", path.display()))
}

fn load_config(path: Option<&PathBuf>) -> CliResult<ModelConfig> {
    match path {
        None => Ok(ModelConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .or_data(&format!("reading {}", path.display()))?;
            ModelConfig::parse(&text).or_data(&format!("parsing {}", path.display()))
        }
    }
}

fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .or_data("building thread pool")
}

fn preprocess(args: PreprocessArgs) -> CliResult<()> {
    let rule = if args.no_simplify {
        None
    } else {
        Some(parse_keep_rule(&args.keep_rule)?)
    };
    let records = load_records(&args.input)?;
    let pool = thread_pool(args.threads)?;
    let pairs: Result<Vec<PreparedPair>, _> = pool.install(|| {
        records
            .par_iter()
            .map(|record| prepare_record(record, rule.as_ref()))
            .collect()
    });
    let pairs = pairs.or_data("preprocessing records")?;
    let mut writer = create_writer(&args.output)?;
    write_pairs(&mut writer, &pairs).or_data("writing pairs")?;
    writer.flush().or_data("flushing output")?;
    eprintln!(
        "preprocessed {} records into {}",
        pairs.len(),
        args.output.display()
    );
    Ok(())
}

fn train_embeddings(args: TrainEmbeddingsArgs) -> CliResult<()> {
    let pairs = load_pairs(&args.input)?;
    let corpus: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [p.original.labels().to_vec(), p.revised.labels().to_vec()])
        .collect();
    let vocab = Vocabulary::build(&corpus).or_data("building vocabulary")?;
    let config = SkipgramConfig {
        dim: args.dim,
        window: args.window,
        negatives: args.negatives,
        epochs: args.epochs,
        seed: args.seed,
        ..SkipgramConfig::default()
    };
    let table = train_skipgram(&corpus, &vocab, &config).or_data("training embeddings")?;
    let mut writer = create_writer(&args.output)?;
    save_embeddings(&mut writer, &table).or_data("writing embeddings")?;
    writer.flush().or_data("flushing output")?;
    eprintln!(
        "trained {}x{} embeddings into {}",
        table.vocab().len(),
        table.dim(),
        args.output.display()
    );
    Ok(())
}

fn train_command(args: TrainArgs) -> CliResult<()> {
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(usage(anyhow!("--holdout must be in [0, 1)")));
    }
    let config = load_config(args.config.as_ref())?;
    let table = load_embeddings(&mut open_reader(&args.embeddings)?)
        .or_data("reading embeddings")?;
    let pairs = load_pairs(&args.pairs)?;
    let (train_pairs, eval_pairs) = if args.holdout > 0.0 {
        acr_core::data::stratified_split_pairs(pairs, 1.0 - args.holdout, args.seed)
            .or_data("holdout split")?
    } else {
        (pairs, Vec::new())
    };
    let options = TrainOptions {
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
    };
    let (params, history) = train(&config, &table, &train_pairs, &eval_pairs, &options)
        .or_data("training")?;
    let mut checkpoint = create_writer(&args.checkpoint)?;
    save_model(&mut checkpoint, &params, &config).or_data("writing checkpoint")?;
    checkpoint.flush().or_data("flushing checkpoint")?;
    let mut history_file = create_writer(&args.history)?;
    history_file
        .write_all(history_csv(&history).as_bytes())
        .or_data("writing history")?;
    history_file.flush().or_data("flushing history")?;
    if let Some(last) = history.last() {
        eprintln!(
            "epoch {}: loss {:.6}, accuracy {:.4}",
            last.epoch, last.loss, last.metrics.accuracy
        );
    }
    Ok(())
}

fn eval_command(args: EvalArgs) -> CliResult<()> {
    let (params, config) =
        load_model(&mut open_reader(&args.checkpoint)?).or_data("reading checkpoint")?;
    let table = load_embeddings(&mut open_reader(&args.embeddings)?)
        .or_data("reading embeddings")?;
    let pairs = load_pairs(&args.pairs)?;
    let (counts, scores) = evaluate(&params, &config, &table, &pairs).or_data("evaluating")?;
    let row = metrics_row(&counts, &scores).or_data("scoring")?;
    println!("accuracy,f1,auc,mcc");
    println!(
        "{:.6},{:.6},{},{:.6}",
        row.accuracy,
        row.f1,
        row.auc.map(|v| format!("{v:.6}")).unwrap_or_default(),
        row.mcc
    );
    Ok(())
}

fn repeat_command(args: RepeatArgs) -> CliResult<()> {
    if !(0.0 < args.fraction && args.fraction < 1.0) {
        return Err(usage(anyhow!("--fraction must be in (0, 1)")));
    }
    if args.reps == 0 {
        return Err(usage(anyhow!("--reps must be at least 1")));
    }
    let config = load_config(args.config.as_ref())?;
    let table = load_embeddings(&mut open_reader(&args.embeddings)?)
        .or_data("reading embeddings")?;
    let pairs = load_pairs(&args.pairs)?;
    let options = TrainOptions {
        epochs: args.epochs,
        batch_size: args.batch,
        seed: 0,
    };
    let pool = thread_pool(args.threads)?;
    let rows: Result<Vec<RepetitionRow>, _> = pool.install(|| {
        (0..args.reps)
            .into_par_iter()
            .map(|repetition| {
                let seed = args.base_seed.wrapping_add(repetition as u64);
                run_single_repetition(
                    &config,
                    &table,
                    &pairs,
                    repetition,
                    seed,
                    args.fraction,
                    &options,
                )
            })
            .collect()
    });
    let rows = rows.or_data("running repetitions")?;
    let mut writer = create_writer(&args.output)?;
    writer
        .write_all(repetitions_csv(&rows).as_bytes())
        .or_data("writing repetition CSV")?;
    writer.flush().or_data("flushing output")?;
    eprintln!("wrote {} repetitions to {}", rows.len(), args.output.display());
    Ok(())
}

fn load_metric_samples(path: &Path) -> CliResult<Vec<RepetitionRow>> {
    let text = std::fs::read_to_string(path).or_data(&format!("reading {}", path.display()))?;
    parse_repetitions_csv(&text).or_data(&format!("parsing {}", path.display()))
}

fn compare_command(args: CompareArgs) -> CliResult<()> {
    let ours = load_metric_samples(&args.ours)?;
    let theirs = load_metric_samples(&args.theirs)?;
    if ours.len() != theirs.len() {
        return Err(data(anyhow!(
            "paired comparison needs equal sample counts ({} vs {})",
            ours.len(),
            theirs.len()
        )));
    }
    if ours.is_empty() {
        return Err(data(anyhow!("no repetition rows to compare")));
    }
    println!("metric,ours_mean,theirs_mean,p(delta),verdict");
    let mut wins = 0;
    let mut ties = 0;
    let mut losses = 0;
    let metrics: [(&str, fn(&RepetitionRow) -> Option<f64>); 4] = [
        ("accuracy", |r| Some(r.metrics.accuracy)),
        ("f1", |r| Some(r.metrics.f1)),
        ("auc", |r| r.metrics.auc),
        ("mcc", |r| Some(r.metrics.mcc)),
    ];
    for (name, extract) in metrics {
        let paired: Vec<(f64, f64)> = ours
            .iter()
            .zip(&theirs)
            .filter_map(|(a, b)| Some((extract(a)?, extract(b)?)))
            .collect();
        if paired.is_empty() {
            println!("{name},,,n/a,Tie");
            ties += 1;
            continue;
        }
        let xs: Vec<f64> = paired.iter().map(|(a, _)| *a).collect();
        let ys: Vec<f64> = paired.iter().map(|(_, b)| *b).collect();
        let verdict = win_tie_loss(&xs, &ys).map_err(|e: StatsError| data(anyhow!(e)))?;
        let (delta, level) = cliffs_delta(&xs, &ys).map_err(|e| data(anyhow!(e)))?;
        match verdict.outcome {
            Outcome::Win => wins += 1,
            Outcome::Tie => ties += 1,
            Outcome::Loss => losses += 1,
        }
        println!(
            "{},{:.6},{:.6},{},{}",
            name,
            xs.iter().sum::<f64>() / xs.len() as f64,
            ys.iter().sum::<f64>() / ys.len() as f64,
            format_p_delta(verdict.p_value, delta, level),
            verdict.outcome.name()
        );
    }
    println!("win_tie_loss,{wins}/{ties}/{losses}");
    Ok(())
}

fn stats_command(args: StatsArgs) -> CliResult<()> {
    let rule = if args.no_simplify {
        None
    } else {
        Some(parse_keep_rule(&args.keep_rule)?)
    };
    let records = load_records(&args.input)?;
    let mut corpus = Vec::with_capacity(records.len() * 2);
    for record in &records {
        for fragment in [&record.original, &record.revised] {
            let ast = match fragment {
                acr_core::data::Fragment::Source(text) => {
                    let source = SourceFragment::new(text.clone())
                        .or_data(&format!("record {}", record.id))?;
                    parse_subset(&source).or_data(&format!("record {}", record.id))?
                }
                acr_core::data::Fragment::Tree(ast) => ast.clone(),
            };
            let reduced = match &rule {
                Some(rule) => simplify(&ast, rule),
                None => ast.clone(),
            };
            corpus.push((ast, reduced));
        }
    }
    let stats = tree_stats(&corpus).or_data("computing statistics")?;
    let rendered = format!("{}{}", TreeStats::csv_header(), stats.to_csv_rows(&args.name));
    match args.output {
        Some(path) => {
            let mut writer = create_writer(&path)?;
            writer.write_all(rendered.as_bytes()).or_data("writing stats")?;
            writer.flush().or_data("flushing output")?;
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
