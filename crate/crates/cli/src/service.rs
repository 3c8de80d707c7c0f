//! Read-only JSON API over one loaded corpus.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use xmec_core::config::{ColorInterval, EngineConfig};
use xmec_core::eval::{
    collection_retrieval_with, score_pairs, EvalError, EvalSubset, EvaluationReport,
    OrderDirection, RankedCollection, Variant,
};
use xmec_core::manifest::{load_manifest_with, LoadOptions};
use xmec_core::model::{CorpusManifest, DocumentRecord, EntityType};
use xmec_core::simeng::{
    Aggregator, ClusteringParams, MeasureKind, MeasureOutcome, PersonMode, ScoredDocument,
    Scorer, ScoringConfig,
};
use xmec_core::stats::{corpus_stats, CorpusStats};
use xmec_core::tamper::{tamper_corpus, TamperStrategy, TamperedTestSet};

pub const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn no_corpus() -> Self {
        Self::new(StatusCode::CONFLICT, "no corpus loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        ApiError::invalid(e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

type MeasureCacheKey = (String, MeasureKind, String);

/// Shared service state. The corpus is replaced wholesale on load and never
/// mutated in place.
pub struct AppState {
    config: EngineConfig,
    corpus: RwLock<Option<Arc<CorpusManifest>>>,
    testsets: RwLock<BTreeMap<String, Arc<TamperedTestSet>>>,
    measures: Mutex<HashMap<MeasureCacheKey, Arc<MeasureOutcome>>>,
}

impl AppState {
    pub fn new(config: EngineConfig, corpus: Option<CorpusManifest>) -> Self {
        Self {
            config,
            corpus: RwLock::new(corpus.map(Arc::new)),
            testsets: RwLock::new(BTreeMap::new()),
            measures: Mutex::new(HashMap::new()),
        }
    }

    fn corpus(&self) -> Result<Arc<CorpusManifest>, ApiError> {
        self.corpus.read().clone().ok_or_else(ApiError::no_corpus)
    }

    fn replace_corpus(&self, corpus: CorpusManifest) {
        let mut slot = self.corpus.write();
        self.testsets.write().clear();
        self.measures.lock().clear();
        *slot = Some(Arc::new(corpus));
    }

    fn testset(&self, name: &str) -> Result<Arc<TamperedTestSet>, ApiError> {
        self.testsets
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown test set {name:?}")))
    }

    /// Scores one document, reusing any measure computed earlier under the
    /// same measure-specific settings.
    fn score_cached(&self, scorer: &Scorer<'_>, doc: &DocumentRecord) -> ScoredDocument {
        let outcome = |kind: MeasureKind| {
            let key = (
                doc.doc_id.clone(),
                kind,
                scorer.config().measure_key(kind),
            );
            if let Some(hit) = self.measures.lock().get(&key) {
                return hit.clone();
            }
            let computed = Arc::new(scorer.measure(doc, kind));
            self.measures.lock().entry(key).or_insert(computed).clone()
        };
        assemble(doc, MeasureKind::ALL.map(outcome))
    }
}

fn assemble(doc: &DocumentRecord, outcomes: [Arc<MeasureOutcome>; 4]) -> ScoredDocument {
    let [p, l, e, c] = outcomes;
    let (MeasureOutcome::Person(cmps), MeasureOutcome::Location(cmls), MeasureOutcome::Event(cmes), MeasureOutcome::Context(cmcs)) =
        (p.as_ref().clone(), l.as_ref().clone(), e.as_ref().clone(), c.as_ref().clone())
    else {
        unreachable!("outcomes are requested in MeasureKind::ALL order")
    };
    ScoredDocument {
        doc_id: doc.doc_id.clone(),
        cmps,
        cmls,
        cmes,
        cmcs,
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/config", get(get_config))
        .route("/corpus/load", post(load_corpus))
        .route("/corpus/stats", get(get_stats))
        .route("/documents/:id/scores", get(get_scores))
        .route("/documents/:id/detail", get(get_detail))
        .route("/rank", get(get_rank))
        .route("/testsets", get(list_testsets).post(create_testset))
        .route("/score", post(post_score))
        .route("/evaluate", post(post_evaluate))
        .with_state(state)
}

/// Scoring settings that override the service configuration for one request.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringOverrides {
    pub tau_p: Option<f64>,
    pub persons: Option<String>,
    pub locations: Option<String>,
    pub events: Option<String>,
}

impl ScoringOverrides {
    fn merge(self, other: ScoringOverrides) -> Self {
        Self {
            tau_p: other.tau_p.or(self.tau_p),
            persons: other.persons.or(self.persons),
            locations: other.locations.or(self.locations),
            events: other.events.or(self.events),
        }
    }

    fn apply(&self, base: ScoringConfig) -> Result<ScoringConfig, ApiError> {
        let bad = |e: &dyn std::fmt::Display| ApiError::invalid(e.to_string());
        let mut c = base;
        if let Some(t) = self.tau_p {
            c.clustering = ClusteringParams::new(t).map_err(|e| bad(&e))?;
        }
        if let Some(p) = &self.persons {
            c.persons = p.parse::<PersonMode>().map_err(|e| bad(&e))?;
        }
        if let Some(a) = &self.locations {
            c.locations = a.parse::<Aggregator>().map_err(|e| bad(&e))?;
        }
        if let Some(a) = &self.events {
            c.events = a.parse::<Aggregator>().map_err(|e| bad(&e))?;
        }
        c.validate().map_err(|e| bad(&e))?;
        Ok(c)
    }

    /// Reads `tau_p`, `persons`, `locations`, `events` and an optional
    /// `config` holding the same keys as a JSON object. Flat keys win.
    fn from_query(q: &HashMap<String, String>) -> Result<Self, ApiError> {
        let mut base = match q.get("config") {
            Some(json) => serde_json::from_str::<ScoringOverrides>(json)
                .map_err(|e| ApiError::invalid(format!("config: {e}")))?,
            None => ScoringOverrides::default(),
        };
        for key in q.keys() {
            if !["config", "tau_p", "persons", "locations", "events"].contains(&key.as_str()) {
                return Err(ApiError::invalid(format!("unknown parameter {key:?}")));
            }
        }
        let flat = ScoringOverrides {
            tau_p: q
                .get("tau_p")
                .map(|t| t.parse::<f64>())
                .transpose()
                .map_err(|e| ApiError::invalid(format!("tau_p: {e}")))?,
            persons: q.get("persons").cloned(),
            locations: q.get("locations").cloned(),
            events: q.get("events").cloned(),
        };
        base = base.merge(flat);
        Ok(base)
    }
}

fn base_scoring(state: &AppState) -> ScoringConfig {
    state
        .config
        .scoring()
        .expect("service config validated at startup")
}

#[derive(Serialize)]
struct ConfigResponse {
    config: EngineConfig,
    fingerprint: String,
}

async fn get_config(State(state): State<Arc<AppState>>) -> Json<ConfigResponse> {
    Json(ConfigResponse {
        config: state.config.clone(),
        fingerprint: state.config.fingerprint(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRequest {
    path: PathBuf,
    per_source_cap: Option<usize>,
}

async fn load_corpus(
    State(state): State<Arc<AppState>>,
    Json(req): Json<LoadRequest>,
) -> ApiResult<CorpusStats> {
    let opts = LoadOptions {
        per_source_cap: req.per_source_cap,
    };
    let corpus = tokio::task::spawn_blocking(move || load_manifest_with(&req.path, &opts))
        .await
        .expect("loader task")
        .map_err(|e| ApiError::invalid(e.to_string()))?;
    let stats = corpus_stats(&corpus);
    state.replace_corpus(corpus);
    Ok(Json(stats))
}

async fn get_stats(State(state): State<Arc<AppState>>) -> ApiResult<CorpusStats> {
    let corpus = state.corpus()?;
    Ok(Json(corpus_stats(&corpus)))
}

#[derive(Serialize)]
struct ScoresResponse {
    fingerprint: String,
    scoring: ScoringConfig,
    scores: ScoredDocument,
}

fn fingerprint(state: &AppState, scoring: &ScoringConfig) -> String {
    state.config.with_scoring(scoring).fingerprint()
}

async fn get_scores(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<ScoresResponse> {
    let corpus = state.corpus()?;
    let scoring = ScoringOverrides::from_query(&q)?.apply(base_scoring(&state))?;
    let doc = corpus
        .document(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown document {id:?}")))?;
    let scorer = Scorer::new(&corpus, scoring);
    Ok(Json(ScoresResponse {
        fingerprint: fingerprint(&state, &scoring),
        scoring,
        scores: state.score_cached(&scorer, doc),
    }))
}

#[derive(Serialize)]
struct MentionView {
    entity_id: String,
    label: Option<String>,
    references: usize,
}

#[derive(Serialize)]
struct DetailResponse {
    doc_id: String,
    mentions: BTreeMap<EntityType, Vec<MentionView>>,
    nouns: Vec<String>,
    faces: usize,
    scene_kind: Option<xmec_core::model::SceneKind>,
    fingerprint: String,
    color_intervals: BTreeMap<MeasureKind, ColorInterval>,
    scores: ScoredDocument,
}

async fn get_detail(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<DetailResponse> {
    let corpus = state.corpus()?;
    let scoring = ScoringOverrides::from_query(&q)?.apply(base_scoring(&state))?;
    let doc = corpus
        .document(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown document {id:?}")))?;
    let mentions = EntityType::ALL
        .into_iter()
        .map(|t| {
            let views = doc
                .distinct_mentions(t)
                .into_iter()
                .map(|m| {
                    let e = corpus.entity(m);
                    MentionView {
                        entity_id: m.to_string(),
                        label: e.map(|e| e.label.clone()),
                        references: e.map_or(0, |e| e.references.len()),
                    }
                })
                .collect();
            (t, views)
        })
        .collect();
    let scorer = Scorer::new(&corpus, scoring);
    Ok(Json(DetailResponse {
        doc_id: doc.doc_id.clone(),
        mentions,
        nouns: doc.noun_context.iter().map(|n| n.noun.clone()).collect(),
        faces: doc.image.face_embeddings.len(),
        scene_kind: doc.image.scene_kind,
        fingerprint: fingerprint(&state, &scoring),
        color_intervals: state.config.color_intervals.clone(),
        scores: state.score_cached(&scorer, doc),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankRow {
    pub rank: usize,
    pub doc_id: String,
    pub variant: Variant,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankPage {
    pub measure: MeasureKind,
    pub order: OrderDirection,
    pub testset: Option<String>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
    pub entries: Vec<RankRow>,
}

fn query_usize(q: &HashMap<String, String>, key: &str, default: usize) -> Result<usize, ApiError> {
    q.get(key).map_or(Ok(default), |v| {
        v.parse()
            .map_err(|_| ApiError::invalid(format!("{key} must be a non-negative integer")))
    })
}

/// Ranked clean documents for one measure, or the clean and tampered
/// collection of a registered test set. Pages are numbered from 1.
async fn get_rank(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<RankPage> {
    let corpus = state.corpus()?;
    let testset = q.get("testset").map(|n| state.testset(n)).transpose()?;
    let measure = match (q.get("type"), &testset) {
        (Some(t), _) => t
            .parse::<MeasureKind>()
            .map_err(|e| ApiError::invalid(format!("type: {e}")))?,
        (None, Some(ts)) => ts.target(),
        (None, None) => return Err(ApiError::invalid("type or testset is required")),
    };
    if let Some(ts) = &testset {
        if ts.target() != measure {
            return Err(ApiError::invalid(format!(
                "test set targets {}, not {measure}",
                ts.target()
            )));
        }
    }
    let order = match q.get("order").map(String::as_str) {
        None | Some("desc") => OrderDirection::Descending,
        Some("asc") => OrderDirection::Ascending,
        Some(o) => return Err(ApiError::invalid(format!("order must be asc or desc, got {o:?}"))),
    };
    let page = query_usize(&q, "page", 1)?.max(1);
    let per_page = query_usize(&q, "per_page", DEFAULT_PAGE_SIZE)?;
    if per_page == 0 || per_page > MAX_PAGE_SIZE {
        return Err(ApiError::invalid(format!("per_page must be in 1..={MAX_PAGE_SIZE}")));
    }
    let extra: Vec<&String> = q
        .keys()
        .filter(|k| !["type", "testset", "order", "page", "per_page"].contains(&k.as_str()))
        .collect();
    if !extra.is_empty() {
        return Err(ApiError::invalid(format!("unknown parameters {extra:?}")));
    }
    let scoring = base_scoring(&state);
    let st = state.clone();
    let rows = tokio::task::spawn_blocking(move || -> Result<Vec<RankRow>, ApiError> {
        let scorer = Scorer::new(&corpus, scoring);
        let entries = match &testset {
            Some(ts) => {
                let (pairs, _) = score_pairs(&scorer, ts)?;
                let ranking = RankedCollection::from_pairs(
                    pairs.iter().map(|p| (p.doc_id.as_str(), p.clean, p.tampered)),
                    order,
                )?;
                ranking.entries().to_vec()
            }
            None => {
                let mut clean: Vec<(String, f64)> = corpus
                    .documents
                    .values()
                    .filter_map(|d| {
                        st.score_cached(&scorer, d)
                            .value(measure)
                            .map(|v| (d.doc_id.clone(), v))
                    })
                    .collect();
                clean.sort_by(|a, b| {
                    let s = match order {
                        OrderDirection::Descending => b.1.total_cmp(&a.1),
                        OrderDirection::Ascending => a.1.total_cmp(&b.1),
                    };
                    s.then_with(|| a.0.cmp(&b.0))
                });
                clean
                    .into_iter()
                    .map(|(doc_id, score)| xmec_core::eval::RankedEntry {
                        doc_id,
                        variant: Variant::Clean,
                        score,
                    })
                    .collect()
            }
        };
        Ok(entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| RankRow {
                rank: i + 1,
                doc_id: e.doc_id,
                variant: e.variant,
                score: e.score,
            })
            .collect())
    })
    .await
    .expect("ranking task")?;
    let total = rows.len();
    let entries = rows
        .into_iter()
        .skip((page - 1).saturating_mul(per_page))
        .take(per_page)
        .collect();
    Ok(Json(RankPage {
        measure,
        order,
        testset: q.get("testset").cloned(),
        page,
        per_page,
        total,
        entries,
    }))
}

/// Parameters for generating a test set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSetRequest {
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub measure: String,
    pub strategy: String,
    pub seed: u64,
    pub dmin_km: Option<f64>,
    pub dmax_km: Option<f64>,
    #[serde(default = "yes")]
    pub require_shared_parent: bool,
    pub top_fraction: Option<f64>,
}

fn yes() -> bool {
    true
}

impl TestSetRequest {
    fn strategy(&self) -> Result<TamperStrategy, ApiError> {
        let kind = self
            .measure
            .parse::<MeasureKind>()
            .map_err(|e| ApiError::invalid(format!("type: {e}")))?;
        let band = match (self.dmin_km, self.dmax_km) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(ApiError::invalid("dmin_km and dmax_km go together")),
        };
        TamperStrategy::from_name(
            &self.strategy,
            kind,
            band,
            self.require_shared_parent,
            self.top_fraction,
        )
        .map_err(|e| ApiError::invalid(e.to_string()))
    }
}

async fn build_testset(
    corpus: Arc<CorpusManifest>,
    strategy: TamperStrategy,
    seed: u64,
) -> Result<TamperedTestSet, ApiError> {
    tokio::task::spawn_blocking(move || tamper_corpus(&corpus, strategy, seed))
        .await
        .expect("tampering task")
        .map_err(|e| ApiError::invalid(e.to_string()))
}

#[derive(Serialize)]
struct TestSetSummary {
    name: String,
    measure: MeasureKind,
    strategy: String,
    seed: u64,
    documents: usize,
    fallbacks: usize,
    dropped: usize,
}

fn summary(name: &str, ts: &TamperedTestSet) -> TestSetSummary {
    TestSetSummary {
        name: name.to_string(),
        measure: ts.target(),
        strategy: ts.strategy.label(),
        seed: ts.seed,
        documents: ts.substitutions.len(),
        fallbacks: ts.fallback_log.len(),
        dropped: ts.dropped.len(),
    }
}

async fn list_testsets(State(state): State<Arc<AppState>>) -> Json<Vec<TestSetSummary>> {
    Json(
        state
            .testsets
            .read()
            .iter()
            .map(|(n, ts)| summary(n, ts))
            .collect(),
    )
}

async fn create_testset(
    State(state): State<Arc<AppState>>,
    Json(req): Json<TestSetRequest>,
) -> ApiResult<TestSetSummary> {
    let corpus = state.corpus()?;
    let strategy = req.strategy()?;
    let ts = build_testset(corpus, strategy, req.seed).await?;
    let name = req.name.clone().unwrap_or_else(|| {
        format!("{}-{}-{}", ts.target(), strategy.label(), req.seed)
    });
    let out = summary(&name, &ts);
    state.testsets.write().insert(name, Arc::new(ts));
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    doc_ids: Vec<String>,
    #[serde(default)]
    config: ScoringOverrides,
    /// Entities to drop from the documents' mentions before scoring.
    #[serde(default)]
    exclude_entities: Vec<String>,
}

#[derive(Serialize)]
struct ScoreResponse {
    fingerprint: String,
    scoring: ScoringConfig,
    documents: Vec<ScoredDocument>,
}

async fn post_score(
    State(state): State<Arc<AppState>>,
    Json(req): Json<ScoreRequest>,
) -> ApiResult<ScoreResponse> {
    let corpus = state.corpus()?;
    let scoring = req.config.apply(base_scoring(&state))?;
    if req.doc_ids.is_empty() {
        return Err(ApiError::invalid("doc_ids is empty"));
    }
    let docs = req
        .doc_ids
        .iter()
        .map(|id| {
            corpus
                .document(id)
                .ok_or_else(|| ApiError::not_found(format!("unknown document {id:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scorer = Scorer::new(&corpus, scoring);
    let documents = docs
        .into_iter()
        .map(|d| {
            if req.exclude_entities.is_empty() {
                state.score_cached(&scorer, d)
            } else {
                let mut edited = d.clone();
                for t in EntityType::ALL {
                    edited
                        .mentions_mut(t)
                        .retain(|m| !req.exclude_entities.contains(m));
                }
                scorer.score(&edited)
            }
        })
        .collect();
    Ok(Json(ScoreResponse {
        fingerprint: fingerprint(&state, &scoring),
        scoring,
        documents,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    /// A registered test set, or generation parameters.
    testset: Option<String>,
    #[serde(rename = "type")]
    measure: Option<String>,
    strategy: Option<String>,
    seed: Option<u64>,
    dmin_km: Option<f64>,
    dmax_km: Option<f64>,
    #[serde(default = "yes")]
    require_shared_parent: bool,
    top_fraction: Option<f64>,
    #[serde(default)]
    subset: Option<String>,
    #[serde(default)]
    config: ScoringOverrides,
}

async fn post_evaluate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<EvaluateRequest>,
) -> ApiResult<EvaluationReport> {
    let corpus = state.corpus()?;
    let scoring = req.config.clone().apply(base_scoring(&state))?;
    let subset = match &req.subset {
        Some(s) => s.parse::<EvalSubset>()?,
        None => EvalSubset::All,
    };
    let testset = match (&req.testset, &req.strategy) {
        (Some(name), None) => state.testset(name)?,
        (None, Some(strategy)) => {
            let (Some(measure), Some(seed)) = (&req.measure, req.seed) else {
                return Err(ApiError::invalid("generating a test set needs type and seed"));
            };
            let spec = TestSetRequest {
                name: None,
                measure: measure.clone(),
                strategy: strategy.clone(),
                seed,
                dmin_km: req.dmin_km,
                dmax_km: req.dmax_km,
                require_shared_parent: req.require_shared_parent,
                top_fraction: req.top_fraction,
            };
            Arc::new(build_testset(corpus.clone(), spec.strategy()?, seed).await?)
        }
        _ => return Err(ApiError::invalid("give exactly one of testset or strategy")),
    };
    let eval = state.config.with_scoring(&scoring).eval_config(subset);
    let report = tokio::task::spawn_blocking(move || {
        let scorer = Scorer::new(&corpus, eval.scoring);
        collection_retrieval_with(&scorer, &testset, &eval)
    })
    .await
    .expect("evaluation task")?;
    Ok(Json(report))
}
