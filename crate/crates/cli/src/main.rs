//! `xlingevent`: command-line front end for the cross-lingual event
//! extraction toolkit.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a data error.

mod meta;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use xlingevent::align::{induce_dictionary_csls, refine_with, MappingMatrix, SeedDictionary, DEFAULT_REFINE_ITERATIONS, DictionarySource};
use xlingevent::bio::{decode_corpus, load_score_file, BioScheme};
use xlingevent::coref::{
    cluster_documents, group_by_document, load_clusterings, load_pair_scores, make_pair_dataset, score_pairs, write_clusterings,
    write_pair_scores, ClusterParams, PairScoreSource, DEFAULT_THRESHOLD,
};
use xlingevent::corpus::{
    combine_corpora, load_conll_bio, load_conll_tokens, load_jsonl_docs, split_train_valid, write_conll_bio, write_jsonl_docs, Corpus,
    RecordKind, SplitConfig,
};
use xlingevent::embedding::{knn_cosine, load_text_embeddings, normalize_rows, EmbeddingSpace, DEFAULT_MAX_VOCAB};
use xlingevent::head::{
    dataset_from_corpus, default_dims, init_mlp, load_example_embeddings, predict_proba, train, Dataset, MlpModel, TrainConfig,
};
use xlingevent::metrics::{binary_f1, confusion, per_class_prf, score_documents, Aggregation};
use xlingevent::translate::{translate_corpus, CslsIndex, CslsParams, OovAction, TranslationPolicy, DEFAULT_CSLS_K};

use meta::MetaBuilder;

#[derive(Parser)]
#[command(name = "xlingevent", version, about = "Cross-lingual event extraction toolkit")]
struct Cli {
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a JSONL corpus into train and validation documents.
    Split(SplitArgs),
    /// Merge several JSONL corpora, prefixing ids with their language.
    Combine(CombineArgs),
    /// Print the cosine nearest neighbours of a word.
    Knn(KnnArgs),
    /// Learn an orthogonal mapping between two embedding spaces.
    Align(AlignArgs),
    /// Translate a tagged CoNLL file word by word, keeping its tags.
    Translate(TranslateArgs),
    /// Decode per-token label scores into valid BIO tags.
    Decode(DecodeArgs),
    /// Cluster sentences from pairwise coreference scores.
    Cluster(ClusterArgs),
    /// Score predicted event clusters against gold clusters.
    ScoreCoref(ScoreCorefArgs),
    /// Score binary label predictions.
    ScoreCls(ScoreClsArgs),
    /// Train a classification head on example embeddings.
    TrainHead(TrainHeadArgs),
    /// Apply a trained head to labelled examples or sentence pairs.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "doc-label")]
    kind: RecordKind,
    /// Fraction of documents kept for training.
    #[arg(long, default_value_t = SplitConfig::CLASSIFICATION_FRACTION)]
    fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    valid_out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "doc-label")]
    kind: RecordKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KnnArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    word: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    max_vocab: usize,
}

#[derive(Args, Serialize)]
struct AlignArgs {
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Seed dictionary (`src<TAB>tgt`); identical strings are used when absent.
    #[arg(long)]
    seed_dict: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_REFINE_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    max_vocab: usize,
    /// Most frequent words searched when inducing dictionaries.
    #[arg(long, default_value_t = 15_000)]
    refine_vocab: usize,
    #[arg(long, default_value = "und")]
    src_lang: String,
    #[arg(long, default_value = "und")]
    tgt_lang: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TranslateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    /// Tag scheme JSON; the default event scheme when absent.
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    k: usize,
    #[arg(long, default_value = "copy-through")]
    #[serde(serialize_with = "as_display")]
    oov: OovAction,
    #[arg(long)]
    no_punct_passthrough: bool,
    #[arg(long)]
    no_numeral_passthrough: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    max_vocab: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DecodeArgs {
    #[arg(long)]
    scores: PathBuf,
    /// CoNLL file whose first column holds the tokens.
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ClusterArgs {
    /// Pair-score JSONL: `{"id", "pairs": [[i, j, score], ...]}`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreCorefArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Average per-document scores instead of pooling counts.
    #[arg(long = "macro")]
    macro_avg: bool,
    /// Also write the scores as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreClsArgs {
    /// JSONL with `id` and `label`.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TrainHeadArgs {
    /// Example embeddings (`n d` header, then `id v1 .. vd`). For coref
    /// data the ids are `doc/sentence`.
    #[arg(long)]
    emb: PathBuf,
    /// Labelled JSONL corpus.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "doc-label")]
    #[serde(serialize_with = "as_display")]
    kind: RecordKind,
    #[arg(long, default_value_t = 0.2)]
    valid_frac: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "doc-label")]
    #[serde(serialize_with = "as_display")]
    kind: RecordKind,
    #[arg(long)]
    out: PathBuf,
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Split(a) => split(a),
        Command::Combine(a) => combine(a),
        Command::Knn(a) => knn(a),
        Command::Align(a) => align(a),
        Command::Translate(a) => translate(a),
        Command::Decode(a) => decode(a),
        Command::Cluster(a) => cluster(a),
        Command::ScoreCoref(a) => score_coref(a),
        Command::ScoreCls(a) => score_cls(a),
        Command::TrainHead(a) => train_head(a),
        Command::Predict(a) => predict(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_space(path: &Path, max_vocab: usize) -> Result<EmbeddingSpace> {
    let space = load_text_embeddings(path, Some(max_vocab))?;
    Ok(normalize_rows(space)?)
}

fn load_scheme(path: Option<&Path>) -> Result<BioScheme> {
    Ok(match path {
        Some(p) => BioScheme::load(p)?,
        None => BioScheme::default(),
    })
}

fn split(a: SplitArgs) -> Result<()> {
    let cfg = SplitConfig::new(a.fraction, a.seed)?;
    let corpus = load_jsonl_docs(&a.input, a.kind)?;
    let (train, valid) = split_train_valid(&corpus, &cfg)?;
    write_jsonl_docs(&train, a.kind, &a.train_out)?;
    write_jsonl_docs(&valid, a.kind, &a.valid_out)?;
    MetaBuilder::new("split")
        .seed("split", a.seed)
        .config(json!({ "kind": a.kind.to_string(), "fraction": a.fraction }))
        .input(&a.input)
        .output(&a.train_out)
        .output(&a.valid_out)
        .write()?;
    eprintln!("{} train / {} valid documents", train.len(), valid.len());
    Ok(())
}

fn combine(a: CombineArgs) -> Result<()> {
    let corpora = a
        .inputs
        .iter()
        .map(|p| load_jsonl_docs(p, a.kind))
        .collect::<xlingevent::Result<Vec<Corpus>>>()?;
    let combined = combine_corpora(&corpora);
    write_jsonl_docs(&combined, a.kind, &a.out)?;
    MetaBuilder::new("combine")
        .config(json!({ "kind": a.kind.to_string() }))
        .inputs(&a.inputs)
        .output(&a.out)
        .write()?;
    Ok(())
}

fn knn(a: KnnArgs) -> Result<()> {
    let space = load_space(&a.emb, a.max_vocab)?;
    let query = space
        .lookup(&a.word)
        .with_context(|| format!("`{}` is not in {}", a.word, a.emb.display()))?
        .to_vec();
    for n in knn_cosine(&space, &query, a.k)? {
        println!("{}\t{:.6}", n.word, n.score);
    }
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let src = load_space(&a.src_emb, a.max_vocab)?;
    let tgt = load_space(&a.tgt_emb, a.max_vocab)?;
    let seed = match &a.seed_dict {
        Some(p) => {
            let content = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let pairs = SeedDictionary::read_tsv(&content, p)?;
            let (dict, dropped) = SeedDictionary::restricted(pairs, DictionarySource::File, &src, &tgt);
            if dropped > 0 {
                log::warn!("dropped {dropped} seed pairs outside the vocabularies or repeated");
            }
            dict
        }
        None => SeedDictionary::identical_strings(&src, &tgt, false),
    };
    if seed.is_empty() {
        bail!("the seed dictionary is empty");
    }
    let params = CslsParams::new(a.k)?;
    let src_small = src.truncated(a.refine_vocab);
    let tgt_small = tgt.truncated(a.refine_vocab);
    let trace = refine_with(&src, &tgt, &seed, a.iterations, |w| {
        induce_dictionary_csls(&src_small, &tgt_small, w, params)
    })?;
    for (it, (w, size)) in trace.mappings.iter().zip(&trace.dictionary_sizes).enumerate() {
        eprintln!("iteration {it}: {size} pairs, orthogonality error {:.3e}", w.orthogonality_error());
    }
    let w = trace.last();
    let w = MappingMatrix::new(w.matrix().clone(), a.src_lang.clone(), a.tgt_lang.clone())?;
    write_text(&a.out, &w.to_text())?;
    let mut inputs = vec![a.src_emb.clone(), a.tgt_emb.clone()];
    inputs.extend(a.seed_dict.clone());
    MetaBuilder::new("align").config(&a).inputs(inputs).output(&a.out).write()?;
    Ok(())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let scheme = load_scheme(a.scheme.as_deref())?;
    let corpus = load_conll_bio(&a.input, &scheme)?;
    let src = load_space(&a.src_emb, a.max_vocab)?;
    let tgt = load_space(&a.tgt_emb, a.max_vocab)?;
    let mapping = MappingMatrix::load(&a.mapping)?;
    let index = CslsIndex::build(&src, &tgt, &mapping, CslsParams::new(a.k)?)?;
    let policy = TranslationPolicy {
        oov_action: a.oov,
        punct_passthrough: !a.no_punct_passthrough,
        numeral_passthrough: !a.no_numeral_passthrough,
    };
    let out = translate_corpus(&corpus, &index, &policy)?;
    write_conll_bio(&out, &a.out)?;
    let mut inputs = vec![a.input.clone(), a.src_emb.clone(), a.tgt_emb.clone(), a.mapping.clone()];
    inputs.extend(a.scheme.clone());
    MetaBuilder::new("translate").config(&a).inputs(inputs).output(&a.out).write()?;
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let scheme = load_scheme(a.scheme.as_deref())?;
    let tokens = load_conll_tokens(&a.tokens)?;
    let scores = load_score_file(&a.scores, scheme.num_labels())?;
    let tagged = decode_corpus(&tokens, &scores, &scheme)?;
    write_conll_bio(&tagged, &a.out)?;
    let mut inputs = vec![a.scores.clone(), a.tokens.clone()];
    inputs.extend(a.scheme.clone());
    MetaBuilder::new("decode").config(&a).inputs(inputs).output(&a.out).write()?;
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let params = ClusterParams::new(a.threshold)?;
    let docs = load_pair_scores(&a.scores)?;
    let clusterings = cluster_documents(&docs, &params);
    write_text(&a.out, &write_clusterings(&clusterings)?)?;
    MetaBuilder::new("cluster").config(&a).input(&a.scores).output(&a.out).write()?;
    Ok(())
}

fn score_coref(a: ScoreCorefArgs) -> Result<()> {
    let gold = load_clusterings(&a.gold)?;
    let mut pred: HashMap<String, _> = load_clusterings(&a.pred)?.into_iter().map(|c| (c.doc_id.clone(), c)).collect();
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        let p = pred
            .remove(&g.doc_id)
            .with_context(|| format!("no prediction for document `{}`", g.doc_id))?;
        pairs.push((g, p));
    }
    if let Some(extra) = pred.keys().min() {
        bail!("prediction for unknown document `{extra}`");
    }
    let aggregation = if a.macro_avg { Aggregation::Macro } else { Aggregation::Micro };
    let score = score_documents(&pairs, aggregation)?;
    for (name, prf) in [("MUC", &score.muc), ("B3", &score.b3), ("CEAF-e", &score.ceaf_e)] {
        println!("{name:<8} P {:.4}  R {:.4}  F {:.4}", prf.precision, prf.recall, prf.f);
    }
    println!("conll_avg {:.4}", score.conll_avg);
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&score)? + "\n"))?;
        MetaBuilder::new("score-coref")
            .config(json!({ "aggregation": if a.macro_avg { "macro" } else { "micro" } }))
            .input(&a.gold)
            .input(&a.pred)
            .output(out)
            .write()?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct LabelRecord {
    id: serde_json::Value,
    label: u8,
}

fn load_labels(path: &Path) -> Result<Vec<(String, u8)>> {
    let content = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord =
            serde_json::from_str(line).with_context(|| format!("{}:{}: expected {{\"id\", \"label\"}}", path.display(), n + 1))?;
        let id = match rec.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => bail!("{}:{}: bad id {other}", path.display(), n + 1),
        };
        if rec.label > 1 {
            bail!("{}:{}: label {} is not 0 or 1", path.display(), n + 1, rec.label);
        }
        out.push((id, rec.label));
    }
    Ok(out)
}

fn score_cls(a: ScoreClsArgs) -> Result<()> {
    let gold = load_labels(&a.gold)?;
    let pred: HashMap<String, u8> = load_labels(&a.pred)?.into_iter().collect();
    if pred.len() != gold.len() {
        bail!("{} gold labels but {} predictions", gold.len(), pred.len());
    }
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    for (id, label) in &gold {
        g.push(*label);
        p.push(*pred.get(id).with_context(|| format!("no prediction for `{id}`"))?);
    }
    let positive = binary_f1(&g, &p, a.beta)?;
    let classes = per_class_prf(&g, &p, a.beta)?;
    let c = confusion(&g, &p, 1)?;
    println!("positive P {:.4}  R {:.4}  F {:.4}", positive.precision, positive.recall, positive.f);
    for (k, prf) in classes.iter().enumerate() {
        println!("class {k}  P {:.4}  R {:.4}  F {:.4}", prf.precision, prf.recall, prf.f);
    }
    println!("macro F {:.4}", xlingevent::metrics::macro_f1(&classes));
    println!("tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&json!({ "positive": positive, "per_class": classes }))? + "\n"))?;
        MetaBuilder::new("score-cls")
            .config(json!({ "beta": a.beta }))
            .input(&a.gold)
            .input(&a.pred)
            .output(out)
            .write()?;
    }
    Ok(())
}

/// Training rows for one corpus split: one per document, or one per
/// sentence pair for coref data.
fn examples(corpus: &Corpus, kind: RecordKind, emb: &EmbeddingSpace) -> Result<Dataset> {
    if kind != RecordKind::Coref {
        return Ok(dataset_from_corpus(corpus, emb, true)?);
    }
    let pairs = make_pair_dataset(corpus)?;
    let mut ids = Vec::with_capacity(pairs.len());
    let mut x = Vec::with_capacity(pairs.len());
    let mut y = Vec::with_capacity(pairs.len());
    for p in &pairs {
        ids.push(format!("{}/{}-{}", p.doc_id, p.i, p.j));
        x.push(xlingevent::coref::features_for(p, emb)?);
        y.push(u8::from(p.label == Some(true)));
    }
    Ok(Dataset::new(ids, x, y)?)
}

fn train_head(a: TrainHeadArgs) -> Result<()> {
    let corpus = load_jsonl_docs(&a.labels, a.kind)?;
    let emb = load_example_embeddings(&a.emb)?;
    let split = SplitConfig::new(1.0 - a.valid_frac, a.seed)?;
    let (train_docs, valid_docs) = split_train_valid(&corpus, &split)?;
    let train_set = examples(&train_docs, a.kind, &emb)?;
    let valid_set = examples(&valid_docs, a.kind, &emb)?;
    let input = train_set.dim().context("no training examples")?;
    let dims = match &a.hidden {
        Some(h) => std::iter::once(input).chain(h.iter().copied()).chain([2]).collect(),
        None => default_dims(input),
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        beta: a.beta,
        seed: a.seed,
    };
    let model = init_mlp(&dims, a.seed)?;
    let (best, history) = train(&model, &train_set, &valid_set, &cfg)?;
    write_text(&a.out, &best.to_json(Some(&cfg))?)?;
    let mut history_path = a.out.as_os_str().to_owned();
    history_path.push(".history.json");
    let history_path = PathBuf::from(history_path);
    write_text(&history_path, &(serde_json::to_string_pretty(&history)? + "\n"))?;
    let chosen = &history.epochs[history.best_epoch];
    eprintln!(
        "selected epoch {} of {}: validation F {:.4} (beta {})",
        chosen.epoch + 1,
        history.epochs.len(),
        chosen.valid.f,
        a.beta
    );
    MetaBuilder::new("train-head")
        .seed("init", a.seed)
        .seed("split", a.seed)
        .seed("shuffle", a.seed)
        .config(json!({ "args": &a, "layer_dims": dims, "train": cfg }))
        .input(&a.emb)
        .input(&a.labels)
        .output(&a.out)
        .output(&history_path)
        .write()?;
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    label: u8,
    prob: f64,
}

fn predict(a: PredictArgs) -> Result<()> {
    let (model, _) = MlpModel::load(&a.model)?;
    let corpus = load_jsonl_docs(&a.input, a.kind)?;
    let emb = load_example_embeddings(&a.emb)?;
    let text = if a.kind == RecordKind::Coref {
        let pairs = make_pair_dataset(&corpus)?;
        let scored = score_pairs(&pairs, &PairScoreSource::Model { model: &model, embeddings: &emb })?;
        write_pair_scores(&group_by_document(&corpus, scored))?
    } else {
        let data = dataset_from_corpus(&corpus, &emb, false)?;
        let probs = predict_proba(&model, &data.x)?;
        let mut out = String::new();
        for (id, p) in data.ids.iter().zip(probs) {
            out.push_str(&serde_json::to_string(&Prediction { id, label: u8::from(p > 0.5), prob: p })?);
            out.push('\n');
        }
        out
    };
    write_text(&a.out, &text)?;
    MetaBuilder::new("predict")
        .config(&a)
        .input(&a.model)
        .input(&a.emb)
        .input(&a.input)
        .output(&a.out)
        .write()?;
    Ok(())
}
