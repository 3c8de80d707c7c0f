use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use xmec_core::config::EngineConfig;
use xmec_core::eval::{
    collection_retrieval, score_pairs, EvalSubset, EvaluationReport, OrderDirection,
    RankedCollection,
};
use xmec_core::manifest::{load_manifest_with, FrequencyFilter, LoadOptions};
use xmec_core::model::{CorpusManifest, EntityType};
use xmec_core::simeng::{MeasureKind, Scorer};
use xmec_core::synthetic::{generate, SyntheticConfig};
use xmec_core::tamper::{tamper_corpus, TamperStrategy, TamperedTestSet};
use xmec_core::{corpus_stats, write_manifest};

use crate::service::{router, AppState};

pub const PORT_ENV: &str = "XMEC_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "xmec", version, about = "Cross-modal entity consistency toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus manifest and optionally write a normalized copy.
    Ingest(IngestArgs),
    /// Print per-type corpus statistics.
    Stats(StatsArgs),
    /// Score documents with all four measures.
    Score(ScoreArgs),
    /// Generate a tampered test set.
    Tamper(TamperArgs),
    /// Run verification and retrieval evaluation on a test set.
    Evaluate(EvaluateArgs),
    /// Rank documents by one measure.
    Rank(RankArgs),
    /// Serve the JSON API. The port is read from XMEC_PORT.
    Serve(ServeArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Corpus directory containing manifest.json.
    corpus: PathBuf,
    /// Write the validated corpus to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the per-source reference cap.
    #[arg(long)]
    per_source_cap: Option<usize>,
    /// Drop mentions of entities seen in fewer documents, e.g. `person=3`.
    #[arg(long = "min-documents", value_name = "TYPE=N")]
    min_documents: Vec<String>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    corpus: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    corpus: PathBuf,
    /// Score only these documents.
    #[arg(long = "doc")]
    docs: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StrategyArgs {
    /// Tampering strategy: random, psg, psc, pscg, gcd, esp, similar.
    #[arg(long, requires_all = ["seed", "measure"])]
    strategy: Option<String>,
    /// Measure the strategy targets: person, location, event or context.
    #[arg(long = "type", value_name = "TYPE")]
    measure: Option<MeasureKind>,
    #[arg(long, requires = "strategy")]
    seed: Option<u64>,
    /// Lower distance bound in km (gcd).
    #[arg(long, requires = "dmax")]
    dmin: Option<f64>,
    /// Upper distance bound in km (gcd).
    #[arg(long, requires = "dmin")]
    dmax: Option<f64>,
    /// Drop the shared-parent requirement (gcd).
    #[arg(long)]
    no_shared_parent: bool,
    /// Fraction of most similar images to draw from (similar).
    #[arg(long)]
    top_fraction: Option<f64>,
}

impl StrategyArgs {
    fn strategy(&self) -> Result<Option<(TamperStrategy, u64)>, CliError> {
        let (Some(name), Some(measure), Some(seed)) = (&self.strategy, self.measure, self.seed)
        else {
            return Ok(None);
        };
        let band = self.dmin.zip(self.dmax);
        let s = TamperStrategy::from_name(
            name,
            measure,
            band,
            !self.no_shared_parent,
            self.top_fraction,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Some((s, seed)))
    }
}

#[derive(Debug, Args)]
struct TamperArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["testset", "strategy"])))]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Test set written by `tamper`.
    #[arg(long, conflicts_with = "strategy")]
    testset: Option<PathBuf>,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// all, top25 or top50.
    #[arg(long, default_value = "all")]
    subset: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a CSV row here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Order {
    Asc,
    Desc,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long = "type", value_name = "TYPE")]
    measure: MeasureKind,
    /// Rank the clean and tampered documents of this test set.
    #[arg(long)]
    testset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desc")]
    order: Order,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Corpus to load at startup; otherwise POST /corpus/load.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Separable,
    Overlapping,
    Tampering,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    documents: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit code 2.
    Usage(String),
    /// Bad or inconsistent data: exit code 1.
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Data(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Score(a) => score(a),
        Command::Tamper(a) => tamper(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Rank(a) => rank(a),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a),
    }
}

fn load(dir: &Path, per_source_cap: Option<usize>) -> anyhow::Result<CorpusManifest> {
    load_manifest_with(dir, &LoadOptions { per_source_cap })
        .with_context(|| format!("loading corpus {}", dir.display()))
}

fn engine_config(path: Option<&Path>) -> Result<EngineConfig, CliError> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => EngineConfig::load(p).map_err(|e| CliError::Usage(e.to_string())),
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_min_documents(specs: &[String]) -> Result<FrequencyFilter, CliError> {
    let mut filter = FrequencyFilter::default();
    for spec in specs {
        let (t, n) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected TYPE=N, got {spec:?}")))?;
        let t: EntityType = t.parse().map_err(CliError::Usage)?;
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Usage(format!("bad count in {spec:?}")))?;
        filter = filter.with(t, n);
    }
    Ok(filter)
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let filter = parse_min_documents(&a.min_documents)?;
    let mut corpus = load(&a.corpus, a.per_source_cap)?;
    if !a.min_documents.is_empty() {
        corpus = filter.apply(&corpus);
    }
    let by_type = |t| corpus.entities_of_type(t).count();
    println!(
        "corpus {}: {} documents, {} entities ({} persons, {} locations, {} events), {} scene classes",
        corpus.corpus_id,
        corpus.documents.len(),
        corpus.entities.len(),
        by_type(EntityType::Person),
        by_type(EntityType::Location),
        by_type(EntityType::Event),
        corpus.scene_vocabulary.len()
    );
    if let Some(out) = &a.out {
        write_manifest(&corpus, out).with_context(|| format!("writing {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let s = corpus_stats(&load(&a.corpus, None)?);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
    } else {
        print!("{s}");
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<(), CliError> {
    let config = engine_config(a.config.as_deref())?;
    let corpus = load(&a.corpus, None)?;
    let scorer = Scorer::new(&corpus, config.scoring().map_err(|e| CliError::Usage(e.to_string()))?);
    let scored = if a.docs.is_empty() {
        scorer.score_all()
    } else {
        a.docs
            .iter()
            .map(|id| {
                corpus
                    .document(id)
                    .map(|d| scorer.score(d))
                    .ok_or_else(|| anyhow!("unknown document {id:?}"))
            })
            .collect::<anyhow::Result<Vec<_>>>()?
    };
    let mut json = serde_json::to_string_pretty(&scored).expect("scores serialize");
    json.push('\n');
    emit(a.out.as_deref(), &json)?;
    Ok(())
}

fn tamper(a: TamperArgs) -> Result<(), CliError> {
    let Some((strategy, seed)) = a.strategy.strategy()? else {
        return Err(CliError::Usage(
            "tamper needs --strategy, --type and --seed".into(),
        ));
    };
    let corpus = load(&a.corpus, None)?;
    let set = tamper_corpus(&corpus, strategy, seed).map_err(anyhow::Error::from)?;
    write_file(&a.out, &set.to_json())?;
    eprintln!(
        "{}: {} documents, {} fallbacks, {} dropped",
        strategy,
        set.substitutions.len(),
        set.fallback_log.len(),
        set.dropped.len()
    );
    Ok(())
}

fn read_testset(path: &Path) -> anyhow::Result<TamperedTestSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TamperedTestSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let subset: EvalSubset = a
        .subset
        .parse()
        .map_err(|e: xmec_core::eval::EvalError| CliError::Usage(e.to_string()))?;
    let config = engine_config(a.config.as_deref())?;
    let generated = a.strategy.strategy()?;
    let corpus = load(&a.corpus, None)?;
    let set = match (&a.testset, generated) {
        (Some(path), _) => read_testset(path)?,
        (None, Some((strategy, seed))) => {
            tamper_corpus(&corpus, strategy, seed).map_err(anyhow::Error::from)?
        }
        (None, None) => unreachable!("clap requires a test set source"),
    };
    let report = collection_retrieval(&corpus, &set, &config.eval_config(subset))
        .map_err(anyhow::Error::from)?;
    println!("{report}");
    if let Some(out) = &a.out {
        write_file(out, &report.to_json())?;
    }
    if let Some(csv) = &a.csv {
        write_file(csv, &EvaluationReport::to_csv(std::slice::from_ref(&report)))?;
    }
    Ok(())
}

fn rank(a: RankArgs) -> Result<(), CliError> {
    let config = engine_config(a.config.as_deref())?;
    let corpus = load(&a.corpus, None)?;
    let scorer = Scorer::new(&corpus, config.scoring().map_err(|e| CliError::Usage(e.to_string()))?);
    let order = match a.order {
        Order::Asc => OrderDirection::Ascending,
        Order::Desc => OrderDirection::Descending,
    };
    let rows: Vec<(String, &'static str, f64)> = match &a.testset {
        Some(path) => {
            let set = read_testset(path)?;
            if set.target() != a.measure {
                return Err(CliError::Usage(format!(
                    "test set targets {}, not {}",
                    set.target(),
                    a.measure
                )));
            }
            let (pairs, _) = score_pairs(&scorer, &set).map_err(anyhow::Error::from)?;
            let ranking = RankedCollection::from_pairs(
                pairs.iter().map(|p| (p.doc_id.as_str(), p.clean, p.tampered)),
                order,
            )
            .map_err(anyhow::Error::from)?;
            ranking
                .entries()
                .iter()
                .map(|e| {
                    let v = match e.variant {
                        xmec_core::eval::Variant::Clean => "clean",
                        xmec_core::eval::Variant::Tampered => "tampered",
                    };
                    (e.doc_id.clone(), v, e.score)
                })
                .collect()
        }
        None => {
            let mut rows: Vec<(String, &'static str, f64)> = scorer
                .score_all()
                .into_iter()
                .filter_map(|s| s.value(a.measure).map(|v| (s.doc_id, "clean", v)))
                .collect();
            rows.sort_by(|x, y| {
                let s = match order {
                    OrderDirection::Descending => y.2.total_cmp(&x.2),
                    OrderDirection::Ascending => x.2.total_cmp(&y.2),
                };
                s.then_with(|| x.0.cmp(&y.0))
            });
            rows
        }
    };
    let mut out = String::from("rank\tdoc_id\tvariant\tscore\n");
    for (i, (doc, variant, score)) in rows.iter().take(a.limit.unwrap_or(usize::MAX)).enumerate() {
        out.push_str(&format!("{}\t{doc}\t{variant}\t{score:.6}\n", i + 1));
    }
    emit(None, &out)?;
    Ok(())
}

fn port_from_env() -> Result<u16, CliError> {
    match std::env::var(PORT_ENV) {
        Ok(p) => p
            .parse()
            .map_err(|_| CliError::Usage(format!("{PORT_ENV} must be a port number, got {p:?}"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let config = engine_config(a.config.as_deref())?;
    let port = port_from_env()?;
    let corpus = a.corpus.as_deref().map(|p| load(p, None)).transpose()?;
    let state = Arc::new(AppState::new(config, corpus));
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), port))
            .await
            .with_context(|| format!("binding {}:{port}", a.host))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")?;
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = match a.kind {
        SynthKind::Separable => SyntheticConfig::separable(a.seed),
        SynthKind::Overlapping => SyntheticConfig::overlapping(a.seed),
        SynthKind::Tampering => SyntheticConfig::tampering_fixture(a.seed),
    };
    if let Some(n) = a.documents {
        if n == 0 {
            return Err(CliError::Usage("--documents must be positive".into()));
        }
        cfg.n_documents = n;
    }
    let corpus = generate(&cfg);
    write_manifest(&corpus, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} ({} documents)", a.out.display(), corpus.documents.len());
    Ok(())
}
