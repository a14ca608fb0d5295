//! Command-line pipeline: train, predict, evaluate, export-features, and
//! corpus inspection.
//!
//! Every subcommand validates its inputs before writing anything and only
//! writes under its output directory. Scoring is decoupled from prediction
//! through the predictions TSV, so `evaluate` can audit any system's
//! output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, DdiLabel};
use crate::evaluation::{self, ConfusionMatrix, FeatureKind};
use crate::training::{
    self, checkpoint, HeldoutSpec, Model, Prediction, TraceRow, TrainConfig, TrainError,
    TrainObserver,
};

#[derive(Parser, Debug)]
#[command(
    name = "ddi-attn",
    about = "Bidirectional GRU with dual attention for drug-drug interaction classification",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on an annotated XML corpus.
    Train(TrainArgs),
    /// Score a corpus with a trained checkpoint.
    Predict(PredictArgs),
    /// Compute the confusion matrix and macro metrics from a predictions
    /// file.
    Evaluate(EvaluateArgs),
    /// Export feature vectors for external 2-D projection.
    ExportFeatures(ExportFeaturesArgs),
    /// Dump blinded instances for corpus inspection.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Training corpus: an XML file or a directory of XML files.
    #[arg(long)]
    pub train_corpus: PathBuf,
    /// Optional corpus the trace evaluates on; without it 10% of training
    /// documents are held out by document-id hash.
    #[arg(long)]
    pub test_corpus: Option<PathBuf>,
    /// Pretrained word vectors in text format (token then values).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output directory for the checkpoint, trace, and config echo.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub t_max: usize,
    #[arg(long, default_value_t = 100)]
    pub d_we: usize,
    #[arg(long, default_value_t = 10)]
    pub d_pe: usize,
    #[arg(long, default_value_t = 230)]
    pub d_h: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 60)]
    pub batch_size: usize,
    /// L2 regularization weight.
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    /// Freeze the embedding tables at their initialization.
    #[arg(long)]
    pub static_embeddings: bool,
    /// Classify the word-attention vector directly, skipping sentence
    /// attention.
    #[arg(long)]
    pub no_sentence_attention: bool,
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            d_we: self.d_we,
            d_pe: self.d_pe,
            d_h: self.d_h,
            t_max: self.t_max,
            dropout_p: self.dropout,
            batch_size: self.batch_size,
            l2_lambda: self.lambda,
            adam: crate::numerics::AdamConfig {
                lr: self.lr,
                ..Default::default()
            },
            max_steps: self.max_steps,
            eval_every: self.eval_every,
            seed: self.seed,
            dynamic_embeddings: !self.static_embeddings,
            sentence_attention: !self.no_sentence_attention,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test_corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    /// Predictions TSV as written by `predict` (any system's output in the
    /// same format scores too).
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also report micro-averaged metrics over the four positive classes.
    #[arg(long)]
    pub positive_only_micro: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ExportFeaturesArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test_corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct InspectArgs {
    /// Corpus to dump: an XML file or a directory.
    pub corpus: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::ExportFeatures(args) => cmd_export_features(&args),
        Command::Inspect(args) => cmd_inspect(&args, &mut std::io::stdout()),
    }
}

fn require_readable(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} path does not exist: {}", what, path.display());
    }
    Ok(())
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

struct FileObserver {
    trace: fs::File,
    checkpoint_path: PathBuf,
}

impl TrainObserver for FileObserver {
    fn on_trace(&mut self, row: &TraceRow) -> Result<(), TrainError> {
        writeln!(
            self.trace,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            row.step, row.train_j, row.heldout_j, row.heldout_f1
        )?;
        Ok(())
    }

    fn on_checkpoint(&mut self, step: usize, model: &Model) -> Result<(), TrainError> {
        log::info!("checkpoint at step {}", step);
        checkpoint::save(model, &self.checkpoint_path)?;
        Ok(())
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    require_readable(&args.train_corpus, "training corpus")?;
    if let Some(test) = &args.test_corpus {
        require_readable(test, "test corpus")?;
    }
    if let Some(emb) = &args.embeddings {
        require_readable(emb, "embeddings")?;
    }
    let config = args.to_config();
    config.validate()?;

    let sentences = corpus::parse_corpus(&args.train_corpus)?;
    let trace_sentences = args
        .test_corpus
        .as_ref()
        .map(|p| corpus::parse_corpus(p))
        .transpose()?;
    let heldout = match &trace_sentences {
        Some(s) => HeldoutSpec::Sentences(s),
        None => HeldoutSpec::FractionOfDocs(config.heldout_fraction),
    };
    let data = training::prepare_data(&sentences, heldout, &config)?;
    log::info!(
        "prepared {} training and {} trace instances ({} rejected, {} pairs skipped)",
        data.train.len(),
        data.heldout.len(),
        data.train_rejected,
        data.skipped_pairs
    );

    let dir = RunDir::create(&args.out)?;
    let mut trace_file = fs::File::create(dir.file("trace.tsv"))?;
    writeln!(trace_file, "step\ttrain_J\theldout_J\theldout_F1")?;
    fs::write(dir.file("config.json"), serde_json::to_vec_pretty(&config)?)?;

    let mut observer = FileObserver {
        trace: trace_file,
        checkpoint_path: dir.file("checkpoint.ckpt"),
    };
    let (model, _) = training::train(&data, &config, args.embeddings.as_deref(), &mut observer)?;
    checkpoint::save(&model, &dir.file("checkpoint.ckpt"))?;
    log::info!("model written to {}", dir.file("checkpoint.ckpt").display());
    Ok(())
}

/// Header of the predictions TSV.
pub const PREDICTIONS_HEADER: &str =
    "doc_id\tsent_id\tpair_id\tgold\tpredicted\tp_False\tp_Mechanism\tp_Effect\tp_Advise\tp_Int";

/// Write the predictions TSV (header plus one row per instance).
pub fn write_predictions<W: Write>(w: &mut W, predictions: &[Prediction]) -> Result<()> {
    writeln!(w, "{}", PREDICTIONS_HEADER)?;
    for p in predictions {
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            p.source.doc_id, p.source.sent_id, p.source.pair_id, p.gold, p.predicted
        )?;
        for prob in p.probs {
            write!(w, "\t{:.9}", prob)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    require_readable(&args.checkpoint, "checkpoint")?;
    require_readable(&args.test_corpus, "test corpus")?;
    let model = checkpoint::load(&args.checkpoint)?;
    let sentences = corpus::parse_corpus(&args.test_corpus)?;
    let (predictions, skipped) = training::predict_corpus(&model, &sentences)?;
    let truncated = predictions.iter().filter(|p| p.truncated).count();
    if truncated + skipped > 0 {
        log::warn!(
            "{} instances truncated (scored as False), {} pairs skipped",
            truncated,
            skipped
        );
    }
    let dir = RunDir::create(&args.out)?;
    let mut out = fs::File::create(dir.file("predictions.tsv"))?;
    write_predictions(&mut out, &predictions)?;
    Ok(())
}

/// Parse gold/predicted label columns from a predictions TSV; malformed
/// rows report their 1-based line number.
pub fn read_predictions_tsv(path: &Path) -> Result<Vec<(DdiLabel, DdiLabel)>> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .with_context(|| format!("{}: empty predictions file", path.display()))?;
    let columns: Vec<&str> = header.split('\t').collect();
    let gold_col = columns
        .iter()
        .position(|c| *c == "gold")
        .with_context(|| format!("{}: header is missing a 'gold' column", path.display()))?;
    let pred_col = columns
        .iter()
        .position(|c| *c == "predicted")
        .with_context(|| format!("{}: header is missing a 'predicted' column", path.display()))?;

    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() <= gold_col.max(pred_col) {
            bail!(
                "{}:{}: expected at least {} tab-separated fields",
                path.display(),
                line_no,
                gold_col.max(pred_col) + 1
            );
        }
        let gold = DdiLabel::parse(fields[gold_col]).with_context(|| {
            format!(
                "{}:{}: unknown label '{}'",
                path.display(),
                line_no,
                fields[gold_col]
            )
        })?;
        let predicted = DdiLabel::parse(fields[pred_col]).with_context(|| {
            format!(
                "{}:{}: unknown label '{}'",
                path.display(),
                line_no,
                fields[pred_col]
            )
        })?;
        out.push((gold, predicted));
    }
    Ok(out)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    require_readable(&args.predictions, "predictions")?;
    let pairs = read_predictions_tsv(&args.predictions)?;
    let mut cm = ConfusionMatrix::new();
    for (gold, predicted) in &pairs {
        cm.add(*gold, *predicted);
    }
    let report = evaluation::metrics(&cm);

    let dir = RunDir::create(&args.out)?;
    fs::write(dir.file("confusion.tsv"), cm.to_tsv())?;
    let mut metrics_tsv = evaluation::report_tsv(&report);
    if args.positive_only_micro {
        let micro = evaluation::positive_micro(&cm);
        metrics_tsv.push_str(&format!(
            "micro_positive\t{:.4}\t{:.4}\nmicro_positive_f1\t{:.4}\n",
            micro.precision, micro.recall, micro.f1
        ));
    }
    fs::write(dir.file("metrics.tsv"), &metrics_tsv)?;

    print!("{}", evaluation::report_pretty(&report));
    if args.positive_only_micro {
        let micro = evaluation::positive_micro(&cm);
        println!(
            "micro over positive classes: P={:.4} R={:.4} F1={:.4}",
            micro.precision, micro.recall, micro.f1
        );
    }
    Ok(())
}

pub fn cmd_export_features(args: &ExportFeaturesArgs) -> Result<()> {
    require_readable(&args.checkpoint, "checkpoint")?;
    require_readable(&args.test_corpus, "test corpus")?;
    let model = checkpoint::load(&args.checkpoint)?;
    let sentences = corpus::parse_corpus(&args.test_corpus)?;
    let (predictions, _) = training::predict_corpus(&model, &sentences)?;
    let dir = RunDir::create(&args.out)?;
    let mut pooled = fs::File::create(dir.file("features_pooled.tsv"))?;
    evaluation::export_features(&mut pooled, &predictions, FeatureKind::WordPooled)?;
    let mut blended = fs::File::create(dir.file("features_blended.tsv"))?;
    evaluation::export_features(&mut blended, &predictions, FeatureKind::Blended)?;
    Ok(())
}

pub fn cmd_inspect<W: Write>(args: &InspectArgs, out: &mut W) -> Result<()> {
    require_readable(&args.corpus, "corpus")?;
    let sentences = corpus::parse_corpus(&args.corpus)?;
    for sentence in &sentences {
        let (instances, skipped) = corpus::blind_instances(sentence);
        for skip in &skipped {
            log::warn!("skipping {}: {}", skip.source, skip.reason);
        }
        match corpus::dump_instances(out, &instances) {
            // a closed pipe (e.g. `inspect | head`) is a normal way to stop
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            other => other?,
        }
    }
    Ok(())
}
