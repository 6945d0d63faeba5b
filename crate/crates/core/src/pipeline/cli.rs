use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::dataset::{default_features_dir, load_dataset, resolve_data_path, DatasetRecord, Split};
use super::features::FeatureStore;
use super::prepare::{load_tokenizer, Resources, MERGES_FILE, VOCAB_FILE};
use crate::annotate::{AnnotatedField, AnnotationRecord, Annotator};
use crate::error::{invalid, Error, Result};
use crate::math::AdamState;
use crate::metrics::evaluate;
use crate::model::{fit, generate, Checkpoint, FitConfig, GenerateOptions, Mode, ModelConfig, ModelParams, ZeroOut};
use crate::nee::{evaluate_nep, train_embeddings, EmbeddingTable, KnowledgeBase, NepConfig};
use crate::template::{corpus_component_stats, extract_components, template_class_id, ComponentVector};
use crate::tokenize::{Tokenizer, DEFAULT_VOCAB_SIZE};

#[derive(Parser, Debug)]
#[command(name = "joganic", version, about = "Template-guided news image captioning", color = clap::ColorChoice::Never)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the tokenizer, annotate captions and articles, extract components.
    Preprocess(PreprocessArgs),
    /// Train joint word and entity embeddings over a knowledge-base file.
    TrainNee(TrainNeeArgs),
    /// Train the captioning model.
    Train(TrainArgs),
    /// Generate captions with a trained checkpoint.
    Generate(GenerateArgs),
    /// Score generated captions against dataset references.
    Evaluate(EvaluateArgs),
    /// Print component and template-class statistics of a dataset.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for vocab.tsv, merges.txt, annotations.jsonl, components.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
}

#[derive(Args, Debug)]
pub struct TrainNeeArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub aux_negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Dataset, tokenizer, features and embeddings shared by train and generate.
#[derive(Args, Debug)]
pub struct InputArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory holding vocab.tsv and merges.txt.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Feature directory; defaults to `features/` beside the dataset.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Entity embedding table from train-nee.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Only use records of this split.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 128)]
    pub ff_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub text_layers: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    /// Stop once teacher-forced accuracy on the training data reaches this.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Wall-clock limit in seconds, checked after each epoch.
    #[arg(long)]
    pub time_budget: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
    /// Comma-separated components for manual mode, e.g. who,context.
    #[arg(long, value_parser = parse_template)]
    pub template: Option<ComponentVector>,
    #[arg(long, value_parser = parse_zero, default_value = "none")]
    pub zero_out: ZeroOut,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// JSONL output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Auto,
    Oracle,
    Manual,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// JSONL with `id` and `caption` per line, as written by generate.
    #[arg(long)]
    pub generated: PathBuf,
    /// Dataset whose captions are the references.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

fn parse_template(s: &str) -> std::result::Result<ComponentVector, String> {
    ComponentVector::parse_template(s).map_err(|e| e.to_string())
}

fn parse_zero(s: &str) -> std::result::Result<ZeroOut, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// One line of generate output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCaption {
    pub id: String,
    pub caption: String,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub tokens: Vec<usize>,
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedCaption>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        caption: String,
        #[serde(default)]
        alpha: Vec<f64>,
        #[serde(default)]
        tokens: Vec<usize>,
    }
    let text = std::fs::read_to_string(resolve_data_path(path))
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(GeneratedCaption { id: l.id, caption: l.caption, alpha: l.alpha, tokens: l.tokens });
    }
    Ok(out)
}

fn select(records: Vec<DatasetRecord>, split: Option<Split>) -> Result<Vec<DatasetRecord>> {
    let out: Vec<DatasetRecord> = records.into_iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    if out.is_empty() {
        return invalid("no records selected");
    }
    Ok(out)
}

fn resources(args: &InputArgs) -> Result<(Vec<DatasetRecord>, Resources)> {
    let records = select(load_dataset(&args.data)?, args.split)?;
    let tokenizer = load_tokenizer(&args.vocab)?;
    let embeddings = args.embeddings.as_deref().map(EmbeddingTable::load).transpose()?;
    let features = FeatureStore::new(args.features.clone().unwrap_or_else(|| default_features_dir(&args.data)));
    let res = Resources {
        tokenizer,
        annotator: Annotator::default(),
        embeddings,
        features,
    };
    Ok((records, res))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let records = load_dataset(&a.data)?;
    let mut corpus = Vec::with_capacity(2 * records.len());
    for r in &records {
        corpus.push(r.caption.clone());
        corpus.push(r.article_text());
    }
    let tokenizer = Tokenizer::train(&corpus, a.vocab_size)?;
    std::fs::create_dir_all(&a.out)?;
    tokenizer.save(&a.out.join(VOCAB_FILE), &a.out.join(MERGES_FILE))?;
    let res = Resources {
        tokenizer,
        annotator: Annotator::default(),
        embeddings: None,
        features: FeatureStore::new(default_features_dir(&a.data)),
    };
    let annotated = crate::par::map(&records, |r| (res.caption_annotation(r), res.article_annotation(r)));
    let mut ann_lines = String::new();
    let mut comp_lines = String::from("id\tsplit\tclass\twho\twhen\twhere\tmisc\tcontext\n");
    for (r, (cap, art)) in records.iter().zip(annotated) {
        let v = extract_components(&cap.entities, &cap.pos);
        let class = template_class_id(&v)?;
        comp_lines.push_str(&format!("{}\t{}\t{}", r.id, r.split, class.label()));
        for x in v.alpha {
            comp_lines.push_str(&format!("\t{}", x as u8));
        }
        comp_lines.push('\n');
        for (field, annotation) in [(AnnotatedField::Caption, cap), (AnnotatedField::Article, art)] {
            let line = AnnotationRecord { id: r.id.clone(), field, annotation };
            ann_lines.push_str(&serde_json::to_string(&line)?);
            ann_lines.push('\n');
        }
    }
    std::fs::write(a.out.join("annotations.jsonl"), ann_lines)?;
    std::fs::write(a.out.join("components.tsv"), comp_lines)?;
    println!(
        "{}",
        serde_json::json!({
            "records": records.len(),
            "vocab_size": res.tokenizer.vocab_size(),
            "fingerprint": res.tokenizer.fingerprint(),
        })
    );
    Ok(())
}

fn train_nee(a: &TrainNeeArgs) -> Result<()> {
    let kb = KnowledgeBase::load(&resolve_data_path(&a.kb))?;
    let cfg = NepConfig {
        dim: a.dim,
        negatives: a.negatives,
        aux_negatives: a.aux_negatives,
        window: a.window,
        lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..NepConfig::default()
    };
    let trained = train_embeddings(&kb, &cfg)?;
    for (i, l) in trained.epochs.iter().enumerate() {
        eprintln!(
            "epoch {} skip_gram={:.4} link={:.4} anchor={:.4} nep={:.4}",
            i + 1,
            l.skip_gram,
            l.link,
            l.anchor,
            l.nep
        );
    }
    trained.table.save(&a.out)?;
    let report = evaluate_nep(&kb, &trained.table, a.negatives, a.seed)?;
    println!(
        "{}",
        serde_json::json!({
            "entities": kb.entities.len(),
            "evaluations": report.evaluations,
            "top1": report.top1,
            "max_sum_error": report.max_sum_error,
        })
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let (records, res) = resources(&a.input)?;
    let d_image = res.features.load(&records[0].image_feature)?.cols();
    let cfg = ModelConfig {
        d_image,
        d_text: a.d_model,
        d_entity: res.embeddings.as_ref().map_or(a.d_model, |t| t.dim),
        d_model: a.d_model,
        heads: a.heads,
        ff_dim: a.ff_dim,
        text_layers: a.text_layers,
        vocab_size: res.tokenizer.vocab_size(),
        max_len: a.max_len,
        lambda: a.lambda,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    let data = res.inputs(&records, &cfg)?;
    let mut params = ModelParams::init(&cfg, a.seed)?;
    let mut adam = AdamState::new();
    let fit_cfg = FitConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        clip: (a.clip > 0.0).then_some(a.clip),
        seed: a.seed,
        target_accuracy: a.target_accuracy,
        time_budget: a.time_budget.map(Duration::from_secs_f64),
    };
    let stats = fit(&mut params, &mut adam, &data, &fit_cfg, |s| {
        let acc = s.accuracy.map_or(String::new(), |x| format!(" accuracy={x:.4}"));
        eprintln!(
            "epoch {} caption_loss={:.4} component_loss={:.4}{acc} seconds={:.1}",
            s.epoch + 1, s.caption_loss, s.component_loss, s.seconds
        );
    })?;
    let ck = Checkpoint {
        params,
        adam,
        vocab_hash: res.tokenizer.fingerprint(),
    };
    ck.save(&a.out)?;
    let last = stats.last();
    println!(
        "{}",
        serde_json::json!({
            "records": data.len(),
            "epochs": stats.len(),
            "step": ck.params.step,
            "caption_loss": last.map(|s| s.caption_loss),
            "component_loss": last.map(|s| s.component_loss),
            "accuracy": last.and_then(|s| s.accuracy),
        })
    );
    Ok(())
}

/// Decoding options from the mode flags.
pub fn generate_options(a: &GenerateArgs) -> Result<GenerateOptions> {
    let mode = match (a.mode, a.template) {
        (ModeArg::Manual, Some(t)) => Mode::Manual(t),
        (ModeArg::Manual, None) => return Err(Error::Usage("--mode manual requires --template".into())),
        (_, Some(_)) => return Err(Error::Usage("--template is only valid with --mode manual".into())),
        (ModeArg::Auto, None) => Mode::Auto,
        (ModeArg::Oracle, None) => Mode::Oracle,
    };
    if a.beam == 0 {
        return Err(Error::Usage("--beam must be at least 1".into()));
    }
    Ok(GenerateOptions {
        mode,
        zero: a.zero_out,
        max_len: a.max_len,
        beam: a.beam,
    })
}

fn run_generate(a: &GenerateArgs) -> Result<()> {
    let opts = generate_options(a)?;
    let (records, res) = resources(&a.input)?;
    let ck = Checkpoint::load(&a.checkpoint, Some(&res.tokenizer.fingerprint()))?;
    let cfg = &ck.params.config;
    let lines = crate::par::try_map(&records, |r| -> Result<String> {
        let input = res.input(r, cfg)?;
        let g = generate(&ck.params, &input, &opts)?;
        let ids: Vec<u32> = g.tokens.iter().map(|&t| t as u32).collect();
        let line = GeneratedCaption {
            id: r.id.clone(),
            caption: res.tokenizer.decode(&ids)?.trim().to_string(),
            alpha: g.alpha.alpha.to_vec(),
            tokens: g.tokens,
        };
        Ok(serde_json::to_string(&line)?)
    })?;
    let mut text = lines.join("\n");
    text.push('\n');
    write_output(a.out.as_deref(), &text)
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let generated = read_generated(&a.generated)?;
    let refs = select(load_dataset(&a.references)?, a.split)?;
    let by_id: std::collections::HashMap<&str, &DatasetRecord> = refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut cands = Vec::with_capacity(generated.len());
    let mut golds = Vec::with_capacity(generated.len());
    for g in &generated {
        let Some(r) = by_id.get(g.id.as_str()) else {
            return invalid(format!("generated caption `{}` has no reference", g.id));
        };
        cands.push(g.caption.clone());
        golds.push(r.caption.clone());
    }
    let report = evaluate(&cands, &golds, &Annotator::default())?;
    let mut text = report.to_json();
    text.push('\n');
    write_output(a.out.as_deref(), &text)
}

fn stats(a: &StatsArgs) -> Result<()> {
    let records = select(load_dataset(&a.data)?, a.split)?;
    let annotator = Annotator::default();
    let vectors = crate::par::map(&records, |r| {
        let ann = r.caption_annotation.clone().unwrap_or_else(|| annotator.annotate(&r.caption));
        extract_components(&ann.entities, &ann.pos)
    });
    write_output(None, &corpus_component_stats(&vectors)?.to_tsv())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::TrainNee(a) => train_nee(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => run_generate(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Stats(a) => stats(a),
    }
}

fn one_line(msg: &str) -> String {
    msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code: 0 on success, 2 for usage errors, 1 otherwise. Failures print
/// a single `error:` line on stderr.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", one_line(first.trim_start_matches("error:").trim()));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Error::Usage(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            2
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            1
        }
    }
}
