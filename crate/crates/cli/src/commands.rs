//! Subcommands.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use erratum_core::candidates::{IndexOptions, NeighborIndex, Vocabulary, DEFAULT_MAX_RADIUS};
use erratum_core::dataset::{
    dataset_to_string, import_published, inject_artificial_errors, load_dataset, parse_dataset,
    sample_presumed_negatives, Channel, DatasetSummary, EvaluationSet, ImportMapping, InjectedError, LabeledExample,
    SegmentationOptions,
};
use erratum_core::detectors::{
    rank_corpus, read_scores, write_scores, Detector, DetectorConfig, DetectorKind, ProviderDetector,
    TokenAggregation,
};
use erratum_core::eval::{evaluate, report_csv, roc_svg, slug, EvalReport, DEFAULT_FPRS};
use erratum_core::judge::{Exemplar, HttpTransport, Judge, LlmDetector, ReplayTransport, Transport};
use erratum_core::providers::{
    DiscriminatorFile, LogitsFile, NgramTrainer, Provider, PseudoLikelihoodFile, UniformProvider,
};
use erratum_core::text::{Document, NormalizationPolicy, Tokenization};

use crate::config::{pick, FileConfig};
use crate::corpus::load_corpus;
use crate::manifest::RunManifest;

/// Bad flags or configuration; the binary exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "erratum", version, about = "Score, evaluate and review copying errors in transmitted texts")]
pub struct Cli {
    /// TOML file of `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every word of a corpus with one detector.
    Score(ScoreArgs),
    /// Compute ROC curves for score files against labels.
    Evaluate(EvaluateArgs),
    /// Write a copy of a corpus with artificial errors to `<out>/corpus`,
    /// with the injected positions in `<out>/flags.csv`.
    Inject(InjectArgs),
    /// Serve the review API and UI.
    Serve(ServeArgs),
    /// Summarize, validate or import a labeled dataset.
    DatasetReport(DatasetReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct TextArgs {
    /// compose or decompose-strip-off.
    #[arg(long)]
    pub normalization: Option<String>,
    /// word or char.
    #[arg(long)]
    pub tokenization: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// ngram:<training corpus>, logits:<file>, pll:<file>, discriminator:<file> or uniform.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// ccr, pllr, discriminator or llm.
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub beam_truncation: Option<usize>,
    /// max or mean.
    #[arg(long)]
    pub token_aggregation: Option<String>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// JSON array of judge exemplars.
    #[arg(long)]
    pub judge_exemplars: Option<PathBuf>,
    /// Append judge exchanges to this JSON-lines file.
    #[arg(long)]
    pub judge_audit: Option<PathBuf>,
    /// Answer judge requests from an audit file instead of the network.
    #[arg(long)]
    pub judge_replay: Option<PathBuf>,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Score CSV; repeat for several detectors.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// Expert-labeled dataset (JSON lines).
    #[arg(long, conflicts_with = "flags")]
    pub dataset: Option<PathBuf>,
    /// Presumed negatives (JSON lines).
    #[arg(long)]
    pub negatives: Option<PathBuf>,
    /// Sample this many presumed negatives from --corpus with --seed.
    #[arg(long, requires = "corpus")]
    pub sample_negatives: Option<usize>,
    /// Injected-error flags from `inject`; every corpus word is an example.
    #[arg(long, requires = "corpus")]
    pub flags: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Leave presumed negatives out.
    #[arg(long)]
    pub expert_only: bool,
    /// Names for the detectors in the report, one per --scores.
    #[arg(long = "name")]
    pub names: Vec<String>,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub rate: f64,
    /// char_substitute or word_neighbor_swap.
    #[arg(long)]
    pub channel: String,
    /// Vocabulary for word_neighbor_swap; defaults to the corpus words.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Ranked score CSV.
    #[arg(long)]
    pub scores: PathBuf,
    /// Dataset file labels are written to; created if missing.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Corpus the scores refer to.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directory of the built review UI, served at `/`.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Required value of the X-Review-Secret header. Also read from REVIEW_SECRET.
    #[arg(long, env = "REVIEW_SECRET")]
    pub secret: Option<String>,
    #[command(flatten)]
    pub text: TextArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetReportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Treat --dataset as records in the published field layout and write
    /// the converted rows here.
    #[arg(long)]
    pub import_to: Option<PathBuf>,
    #[command(flatten)]
    pub text: TextArgs,
}

pub struct Settings {
    pub file: FileConfig,
    pub seed: Option<u64>,
}

impl Settings {
    fn text(&self, args: &TextArgs) -> anyhow::Result<SegmentationOptions> {
        let policy = match pick(&args.normalization, &self.file.normalization) {
            Some(p) => NormalizationPolicy::from_str(&p).map_err(|e| usage(e.to_string()))?,
            None => NormalizationPolicy::default(),
        };
        let scheme = match pick(&args.tokenization, &self.file.tokenization) {
            Some(t) => Tokenization::from_str(&t).map_err(|e| usage(e.to_string()))?,
            None => Tokenization::default(),
        };
        Ok(SegmentationOptions { policy, scheme })
    }

    fn seed(&self) -> Option<u64> {
        self.seed.or(self.file.seed)
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let settings = Settings { file, seed: cli.seed };
    match &cli.command {
        Command::Score(a) => cmd_score(a, &settings).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(a, &settings).map(|_| ()),
        Command::Inject(a) => cmd_inject(a, &settings).map(|_| ()),
        Command::Serve(a) => cmd_serve(a, &settings),
        Command::DatasetReport(a) => cmd_dataset_report(a, &settings).map(|t| print!("{t}")),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from_args<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(cli)
}

fn load_vocab(path: &Path, policy: NormalizationPolicy) -> anyhow::Result<Arc<Vocabulary>> {
    Ok(Arc::new(Vocabulary::load(path, policy)?))
}

fn build_neighbor_index(vocab: Arc<Vocabulary>, radius: usize) -> anyhow::Result<Arc<NeighborIndex>> {
    let opts = IndexOptions {
        max_radius: radius.max(DEFAULT_MAX_RADIUS),
        ..Default::default()
    };
    Ok(Arc::new(NeighborIndex::build(vocab, opts)?))
}

struct ProviderSpec {
    provider: Arc<dyn Provider>,
    vocab: Option<Arc<Vocabulary>>,
    inputs: Vec<PathBuf>,
}

fn open_provider(spec: &str, vocab: Option<Arc<Vocabulary>>, seg: SegmentationOptions) -> anyhow::Result<ProviderSpec> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let path = PathBuf::from(arg);
    let need_path = || -> anyhow::Result<()> {
        if arg.is_empty() {
            Err(usage(format!("provider `{kind}` needs a path: `{kind}:<path>`")))
        } else {
            Ok(())
        }
    };
    Ok(match kind {
        "uniform" => {
            let v = vocab.ok_or_else(|| usage("the uniform provider needs --vocab"))?;
            ProviderSpec {
                provider: Arc::new(UniformProvider::new(v.clone())),
                vocab: Some(v),
                inputs: vec![],
            }
        }
        "ngram" => {
            need_path()?;
            let docs = load_corpus(&path, seg.policy, seg.scheme)?;
            let mut trainer = match &vocab {
                Some(v) => NgramTrainer::with_vocabulary(v.clone()),
                None => NgramTrainer::new(),
            };
            for d in &docs {
                trainer.add_document(d);
            }
            let model = trainer.build()?;
            let v = model.vocab().clone();
            ProviderSpec {
                provider: Arc::new(model),
                vocab: Some(v),
                inputs: vec![path],
            }
        }
        "logits" => {
            need_path()?;
            let v = vocab.ok_or_else(|| usage("the logits provider needs --vocab"))?;
            ProviderSpec {
                provider: Arc::new(LogitsFile::load(&path, v.clone())?),
                vocab: Some(v),
                inputs: vec![path],
            }
        }
        "pll" => {
            need_path()?;
            ProviderSpec {
                provider: Arc::new(PseudoLikelihoodFile::load(&path)?),
                vocab,
                inputs: vec![path],
            }
        }
        "discriminator" => {
            need_path()?;
            ProviderSpec {
                provider: Arc::new(DiscriminatorFile::load(&path)?),
                vocab,
                inputs: vec![path],
            }
        }
        other => {
            return Err(usage(format!(
                "unknown provider `{other}` (expected ngram:, logits:, pll:, discriminator: or uniform)"
            )))
        }
    })
}

pub struct ScoreOutcome {
    pub scores_path: PathBuf,
    pub rows: usize,
    pub abstained: usize,
}

pub fn cmd_score(a: &ScoreArgs, s: &Settings) -> anyhow::Result<ScoreOutcome> {
    let seg = s.text(&a.text)?;
    let kind_name = pick(&a.detector, &s.file.detector).ok_or_else(|| usage("--detector is required"))?;
    let kind = DetectorKind::from_str(&kind_name).map_err(|e| usage(e.to_string()))?;
    let mut config = DetectorConfig::new(kind);
    config.radius = pick(&a.radius, &s.file.radius).unwrap_or(1);
    config.beam_truncation = pick(&a.beam_truncation, &s.file.beam_truncation);
    if let Some(agg) = pick(&a.token_aggregation, &s.file.token_aggregation) {
        config.token_aggregation = TokenAggregation::from_str(&agg).map_err(|e| usage(e.to_string()))?;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let top_n = pick(&a.top_n, &s.file.top_n);

    let mut manifest = RunManifest::start("score", s.seed());
    let docs = load_corpus(&a.corpus, seg.policy, seg.scheme)?;
    manifest.add_input(&a.corpus)?;
    let vocab_path = pick(&a.vocab, &s.file.vocab);
    let vocab = match &vocab_path {
        Some(p) => {
            manifest.add_input(p)?;
            Some(load_vocab(p, seg.policy)?)
        }
        None => None,
    };

    let detector: Box<dyn Detector> = if kind == DetectorKind::Llm {
        let mut jc = s.file.judge.clone().unwrap_or_default();
        if let Some(p) = pick(&a.judge_exemplars, &s.file.judge_exemplars) {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            jc.exemplars = serde_json::from_str::<Vec<Exemplar>>(&text)
                .with_context(|| format!("parsing exemplars {}", p.display()))?;
            manifest.add_input(&p)?;
        }
        jc.validate().map_err(|e| usage(e.to_string()))?;
        let transport: Arc<dyn Transport> = match &a.judge_replay {
            Some(p) => {
                manifest.add_input(p)?;
                Arc::new(ReplayTransport::load(p)?)
            }
            None => Arc::new(HttpTransport::from_env(&jc)?),
        };
        manifest.set("judge", &jc);
        let mut judge = Judge::new(jc, transport)?;
        if let Some(p) = &a.judge_audit {
            judge = judge.with_audit_log(p)?;
        }
        Box::new(LlmDetector::new(judge))
    } else {
        let spec = pick(&a.provider, &s.file.provider).ok_or_else(|| usage("--provider is required"))?;
        let p = open_provider(&spec, vocab, seg)?;
        for i in &p.inputs {
            manifest.add_input(i)?;
        }
        manifest.set("provider", &spec);
        let index = match (kind, &p.vocab) {
            (DetectorKind::Ccr | DetectorKind::Pllr, Some(v)) => Some(build_neighbor_index(v.clone(), config.radius)?),
            (DetectorKind::Ccr | DetectorKind::Pllr, None) => {
                return Err(usage(format!("{kind} needs a vocabulary: pass --vocab")));
            }
            _ => None,
        };
        Box::new(ProviderDetector::new(config.clone(), p.provider, index)?)
    };

    let scores = rank_corpus(&docs, detector.as_ref(), top_n)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let scores_path = a.out.join("scores.csv");
    let file = fs::File::create(&scores_path).with_context(|| format!("creating {}", scores_path.display()))?;
    write_scores(std::io::BufWriter::new(file), &scores)?;
    let abstained: Vec<&erratum_core::ErrorScore> = scores.iter().filter(|s| s.abstained).collect();
    if !abstained.is_empty() {
        let mut text = String::from("doc_id,word_index\n");
        for s in &abstained {
            text.push_str(&format!("{},{}\n", s.doc_id, s.word_index));
        }
        fs::write(a.out.join("abstained.csv"), text)?;
        tracing::warn!(count = abstained.len(), "judge abstentions scored at the scale midpoint");
    }

    manifest.set("detector", detector.fingerprint());
    manifest.set("detector_config", &config);
    manifest.set("normalization", seg.policy.as_str());
    manifest.set("tokenization", seg.scheme.as_str());
    manifest.set("top_n", top_n);
    manifest.set("abstained", abstained.len());
    manifest.write(&a.out)?;
    tracing::info!(rows = scores.len(), path = %scores_path.display(), "scores written");
    Ok(ScoreOutcome {
        scores_path,
        rows: scores.len(),
        abstained: abstained.len(),
    })
}

fn read_flags(path: &Path) -> anyhow::Result<Vec<InjectedError>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec.with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(out)
}

fn write_flags(path: &Path, flags: &[InjectedError]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for f in flags {
        w.serialize(f)?;
    }
    if flags.is_empty() {
        w.write_record(["doc_id", "word_index", "original", "replacement"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs, s: &Settings) -> anyhow::Result<Vec<EvalReport>> {
    let seg = s.text(&a.text)?;
    if !a.names.is_empty() && a.names.len() != a.scores.len() {
        return Err(usage("give one --name per --scores or none"));
    }
    let mut manifest = RunManifest::start("evaluate", s.seed());
    let set = if let Some(flags_path) = &a.flags {
        let corpus = a.corpus.as_ref().expect("clap requires --corpus with --flags");
        let docs = load_corpus(corpus, seg.policy, seg.scheme)?;
        manifest.add_input(corpus)?;
        manifest.add_input(flags_path)?;
        EvaluationSet::from_flags(&docs, &read_flags(flags_path)?)
    } else {
        let dataset_path = a.dataset.as_ref().ok_or_else(|| usage("pass --dataset or --flags"))?;
        let expert = load_dataset(dataset_path, seg)?;
        manifest.add_input(dataset_path)?;
        let presumed: Vec<LabeledExample> = if a.expert_only {
            Vec::new()
        } else if let Some(p) = &a.negatives {
            manifest.add_input(p)?;
            load_dataset(p, seg)?
        } else if let Some(n) = a.sample_negatives {
            let seed = s.seed().ok_or_else(|| usage("--sample-negatives needs --seed"))?;
            let corpus = a.corpus.as_ref().expect("clap requires --corpus");
            let docs = load_corpus(corpus, seg.policy, seg.scheme)?;
            manifest.add_input(corpus)?;
            sample_presumed_negatives(&docs, n, seed)?
        } else {
            Vec::new()
        };
        if !presumed.is_empty() {
            fs::create_dir_all(&a.out)?;
            fs::write(a.out.join("negatives.jsonl"), dataset_to_string(&presumed))?;
        }
        EvaluationSet::build(&expert, &presumed, a.expert_only)
    };

    let mut reports = Vec::new();
    for (k, path) in a.scores.iter().enumerate() {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let scores = read_scores(std::io::BufReader::new(file), &path.display().to_string())?;
        manifest.add_input(path)?;
        let name = match a.names.get(k) {
            Some(n) => n.clone(),
            None => scores.first().map(|s| s.detector.clone()).unwrap_or_else(|| format!("detector{k}")),
        };
        reports.push(evaluate(&name, &scores, &set, &DEFAULT_FPRS)?);
    }

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.csv"), report_csv(&reports, &DEFAULT_FPRS))?;
    for r in &reports {
        for sl in &r.slices {
            let file = format!("roc_{}_{}.svg", slug(&r.detector), slug(&sl.slice));
            fs::write(a.out.join(file), roc_svg(&r.detector, sl))?;
        }
    }
    let (n_pos, n_neg) = set.counts();
    manifest.set("expert_only", a.expert_only);
    manifest.set("n_pos", n_pos);
    manifest.set("n_neg", n_neg);
    manifest.set("names", &a.names);
    manifest.set("sample_negatives", a.sample_negatives);
    manifest.set("normalization", seg.policy.as_str());
    manifest.write(&a.out)?;
    Ok(reports)
}

pub struct InjectOutcome {
    pub flags: Vec<InjectedError>,
    pub skipped: usize,
}

pub fn cmd_inject(a: &InjectArgs, s: &Settings) -> anyhow::Result<InjectOutcome> {
    let seg = s.text(&a.text)?;
    let channel = Channel::from_str(&a.channel).map_err(usage)?;
    let seed = s.seed().ok_or_else(|| usage("inject needs --seed"))?;
    let mut manifest = RunManifest::start("inject", Some(seed));
    let files = crate::corpus::corpus_files(&a.corpus)?;
    let docs = load_corpus(&a.corpus, seg.policy, seg.scheme)?;
    manifest.add_input(&a.corpus)?;
    let index = match channel {
        Channel::CharSubstitute => None,
        Channel::WordNeighborSwap => {
            let vocab = match pick(&a.vocab, &s.file.vocab) {
                Some(p) => {
                    manifest.add_input(&p)?;
                    load_vocab(&p, seg.policy)?
                }
                None => Arc::new(corpus_vocabulary(&docs, seg.policy)?),
            };
            Some(build_neighbor_index(vocab, 1)?)
        }
    };
    let texts = a.out.join("corpus");
    fs::create_dir_all(&texts)?;
    let mut flags = Vec::new();
    let mut skipped = 0;
    for (k, (doc, file)) in docs.iter().zip(&files).enumerate() {
        let inj = inject_artificial_errors(doc, a.rate, channel, seed, k as u64, index.as_deref())?;
        skipped += inj.skipped.len();
        let name = file.file_name().expect("corpus entries are files");
        fs::write(texts.join(name), format!("{}\n", inj.text))?;
        flags.extend(inj.flags);
    }
    write_flags(&a.out.join("flags.csv"), &flags)?;
    manifest.set("rate", a.rate);
    manifest.set("channel", channel.as_str());
    manifest.set("flags", flags.len());
    manifest.set("skipped", skipped);
    manifest.set("normalization", seg.policy.as_str());
    manifest.write(&a.out)?;
    tracing::info!(flags = flags.len(), skipped, "injection done");
    Ok(InjectOutcome { flags, skipped })
}

/// Distinct lexical words of `docs` in first-seen order.
pub fn corpus_vocabulary(docs: &[Document], policy: NormalizationPolicy) -> anyhow::Result<Vocabulary> {
    let mut seen = std::collections::HashSet::new();
    let words: Vec<String> = docs
        .iter()
        .flat_map(|d| d.lexical_spans())
        .filter(|s| seen.insert(s.surface.clone()))
        .map(|s| s.surface.clone())
        .collect();
    Ok(Vocabulary::from_words(words, policy)?)
}

pub fn cmd_dataset_report(a: &DatasetReportArgs, s: &Settings) -> anyhow::Result<String> {
    let seg = s.text(&a.text)?;
    let rows = if let Some(out) = &a.import_to {
        let text = fs::read_to_string(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
        let rows = import_published(&text, &ImportMapping::default())?;
        let canonical = dataset_to_string(&rows);
        parse_dataset(&canonical, &a.dataset.display().to_string(), seg)?;
        fs::write(out, canonical).with_context(|| format!("writing {}", out.display()))?;
        rows
    } else {
        load_dataset(&a.dataset, seg)?
    };
    Ok(DatasetSummary::of(&rows).table())
}

pub fn cmd_serve(a: &ServeArgs, s: &Settings) -> anyhow::Result<()> {
    let seg = s.text(&a.text)?;
    let docs = load_corpus(&a.corpus, seg.policy, seg.scheme)?;
    let file = fs::File::open(&a.scores).with_context(|| format!("opening {}", a.scores.display()))?;
    let scores = read_scores(std::io::BufReader::new(file), &a.scores.display().to_string())?;
    let docs: HashMap<String, Document> = docs.into_iter().map(|d| (d.id.clone(), d)).collect();
    let store = crate::review::ReviewStore::open(&a.dataset, seg)?;
    let state = crate::review::AppState::new(scores, docs, store, a.secret.clone());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        tracing::info!(addr = %listener.local_addr()?, "review service listening");
        let app = crate::review::router(state.clone(), a.ui.as_deref());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    state.compact()?;
    Ok(())
}

pub fn check_unknown_detector(name: &str) -> anyhow::Result<DetectorKind> {
    DetectorKind::from_str(name).map_err(|e| usage(e.to_string()))
}
