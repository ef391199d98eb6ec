use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use urltran::adversary::{build_adversarial_dataset, HomoglyphTable, WordDictionary};
use urltran::config::RunConfig;
use urltran::corpus::{load_dataset, DatasetFormat};
use urltran::encoder::{load_checkpoint, save_checkpoint};
use urltran::eval::{evaluate, load_predictions, predictions_to_tsv, roc_svg, score_dataset};
use urltran::pipeline::run_pipeline;
use urltran::tokenize::{load_wordpiece_vocab, train_bpe, VocabKind, Vocabulary};
use urltran::train::{finetune, pretrain_mlm, TrainOutcome};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISSING_FILE: u8 = 3;
const EXIT_SCHEMA: u8 = 4;
const EXIT_INVALID: u8 = 5;

#[derive(Parser)]
#[command(name = "urltran", version, about = "Phishing URL detection with transformer encoders")]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a BPE vocabulary on a dataset, or import a wordpiece vocab.txt.
    TrainTokenizer(TrainTokenizerArgs),
    /// MLM pre-training of a fresh encoder.
    Pretrain(PretrainArgs),
    /// Classification fine-tuning from a checkpoint.
    Finetune(FinetuneArgs),
    /// Build an adversarially augmented copy of a dataset.
    Attack(AttackArgs),
    /// Write phish scores for every record of a dataset.
    Score(ScoreArgs),
    /// ROC metrics for a predictions file.
    Evaluate(EvaluateArgs),
    /// Synthetic corpus plus the full pipeline, end to end.
    Demo(DemoArgs),
}

/// Config file and training overrides shared by the training commands.
#[derive(Args)]
struct TrainOpts {
    /// Run config (JSON); the bundled desk preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct TrainTokenizerArgs {
    /// Dataset TSV (`url<TAB>label`) for BPE training.
    #[arg(long, required_unless_present = "import")]
    input: Option<PathBuf>,
    /// wordpiece `vocab.txt` to convert instead of training.
    #[arg(long, conflicts_with = "input")]
    import: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "byte_bpe")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    vocab_size: usize,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Checkpoint manifest to write; logs go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    input: PathBuf,
    /// Augmented dataset, `url<TAB>label<TAB>origin`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Homoglyph table JSON (`{"a": ["а", ...]}`); bundled table when absent.
    #[arg(long)]
    homoglyphs: Option<PathBuf>,
    /// Word list, one word per line; bundled list when absent.
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the model's position count.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    fpr: f64,
    /// Full JSON report including the curve.
    #[arg(long)]
    report: Option<PathBuf>,
    /// ROC plot with a log FPR axis.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; required unless the config lists stage seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "urltran-demo")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p, seed)?,
        None => RunConfig::desk(
            seed.ok_or_else(|| urltran::Error::InvalidArgument("--seed is required".into()))?,
        ),
    })
}

fn stage_overrides(opts: &TrainOpts, stage: &mut urltran::config::StageConfig) {
    if let Some(e) = opts.epochs {
        stage.max_epochs = e;
    }
    if let Some(b) = opts.batch_size {
        stage.batch_size = b;
    }
    if let Some(lr) = opts.lr {
        stage.peak_learning_rate = lr;
    }
}

/// Refuses to write over any of the command's inputs.
fn check_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    if let Some(o) = canon(out) {
        if inputs.iter().any(|i| canon(i).as_ref() == Some(&o)) {
            return Err(urltran::Error::InvalidArgument(format!("output {} is also an input", out.display())).into());
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| urltran::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_training(out: &Path, t: &TrainOutcome) -> Result<()> {
    save_checkpoint(&t.params, out)?;
    write(&out.with_extension("steps.tsv"), &t.step_log())?;
    write(&out.with_extension("epochs.jsonl"), &t.epoch_log())
}

fn train_tokenizer(a: TrainTokenizerArgs) -> Result<()> {
    let v: Vocabulary = if let Some(src) = &a.import {
        check_output(&a.out, &[src])?;
        load_wordpiece_vocab(src)?
    } else {
        let input = a.input.as_deref().expect("clap enforces --input");
        check_output(&a.out, &[input])?;
        let kind: VocabKind = a.kind.parse()?;
        if !kind.is_bpe() {
            bail!(urltran::Error::InvalidArgument("wordpiece vocabularies are imported with --import".into()));
        }
        let ds = load_dataset(input, DatasetFormat::Tsv)?;
        let urls: Vec<String> = ds.urls().map(str::to_string).collect();
        train_bpe(&urls, a.vocab_size, kind)?
    };
    v.save(&a.out)?;
    println!("{} pieces -> {}", v.len(), a.out.display());
    Ok(())
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    check_output(&a.out, &[&a.data, &a.vocab])?;
    let mut cfg = load_config(a.opts.config.as_deref(), Some(a.opts.seed))?;
    stage_overrides(&a.opts, &mut cfg.pretrain);
    let v = Vocabulary::load(&a.vocab)?;
    let ds = load_dataset(&a.data, DatasetFormat::Tsv)?;
    let mut model = cfg.model.clone();
    model.vocab_size = v.len();
    let out = pretrain_mlm(&model, &cfg.pretrain_config(), &cfg.masking, &ds, &v, a.opts.seed)?;
    write_training(&a.out, &out)?;
    if let (Some(f), Some(l)) = (out.epochs.first(), out.epochs.last()) {
        println!("mlm loss {} -> {} over {} epochs", f.train_loss, l.train_loss, out.epochs.len());
    }
    Ok(())
}

fn finetune_cmd(a: FinetuneArgs) -> Result<()> {
    check_output(&a.out, &[&a.checkpoint, &a.train, &a.valid, &a.vocab])?;
    let mut cfg = load_config(a.opts.config.as_deref(), Some(a.opts.seed))?;
    stage_overrides(&a.opts, &mut cfg.finetune);
    let p = load_checkpoint(&a.checkpoint)?;
    let v = Vocabulary::load(&a.vocab)?;
    let train = load_dataset(&a.train, DatasetFormat::Tsv)?;
    let valid = load_dataset(&a.valid, DatasetFormat::Tsv)?;
    let mut tc = cfg.finetune_config();
    tc.max_len = tc.max_len.min(p.config.max_position_embeddings);
    let out = finetune(p, &tc, &train, &valid, &v, a.opts.seed)?;
    write_training(&a.out, &out)?;
    if let Some(best) = out.best_epoch {
        let m = &out.epochs[best - 1];
        println!("best epoch {best}: valid auroc {:?}, valid loss {:?}", m.valid_auroc, m.valid_loss);
    }
    Ok(())
}

fn attack(a: AttackArgs) -> Result<()> {
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.homoglyphs.as_deref());
    inputs.extend(a.dictionary.as_deref());
    check_output(&a.out, &inputs)?;
    let table = match &a.homoglyphs {
        Some(p) => HomoglyphTable::load(p)?,
        None => HomoglyphTable::builtin(),
    };
    let dict = match &a.dictionary {
        Some(p) => WordDictionary::load(p)?,
        None => WordDictionary::builtin(),
    };
    let ds = load_dataset(&a.input, DatasetFormat::Tsv)?;
    let (out, report) = build_adversarial_dataset(&ds, &table, &dict, a.seed)?;
    out.save(&a.out, DatasetFormat::OriginTsv)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    check_output(&a.out, &[&a.checkpoint, &a.vocab, &a.input])?;
    let p = load_checkpoint(&a.checkpoint)?;
    let v = Vocabulary::load(&a.vocab)?;
    let ds = load_dataset(&a.input, DatasetFormat::Tsv)?;
    let max_len = a.max_len.unwrap_or(p.config.max_position_embeddings);
    let preds = score_dataset(&p, &v, &ds, max_len, a.batch_size)?;
    write(&a.out, &predictions_to_tsv(&preds))?;
    println!("{} records scored", preds.len());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let preds = load_predictions(&a.predictions)?;
    let r = evaluate(&preds, a.fpr)?;
    println!("auroc\t{}", r.auroc);
    println!("tpr_at_fpr\t{}\t{}", a.fpr, r.tpr_at_target_fpr);
    for (name, m) in [("threshold_0.5", &r.at_default_threshold), ("threshold_at_fpr", &r.at_target_fpr)] {
        println!(
            "{name}\tthreshold={}\taccuracy={}\tprecision={}\trecall={}\tf1={}",
            m.threshold, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    if let Some(p) = &a.report {
        write(p, &(serde_json::to_string_pretty(&r)? + "\n"))?;
    }
    if let Some(p) = &a.svg {
        write(p, &roc_svg(&r.roc, a.fpr.max(1e-6)))?;
    }
    Ok(())
}

fn demo(a: DemoArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let r = run_pipeline(&cfg, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> (u8, &'static str) {
    use urltran::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    (EXIT_MISSING_FILE, "missing_file")
                }
                E::Parse { .. } | E::Format(_) | E::Json(_) | E::ShapeMismatch(_) => (EXIT_SCHEMA, "schema"),
                E::InvalidArgument(_)
                | E::EmptyDataset
                | E::MalformedUrl(_)
                | E::NoHomoglyphAvailable(_)
                | E::NotSplittable(_)
                | E::NothingToPermute(_) => (EXIT_INVALID, "invalid_argument"),
                _ => (EXIT_OTHER, "error"),
            };
        }
    }
    (EXIT_OTHER, "error")
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            return fail(EXIT_USAGE, "usage", first);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::TrainTokenizer(a) => train_tokenizer(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Attack(a) => attack(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Demo(a) => demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            fail(code, kind, &format!("{e:#}"))
        }
    }
}
