//! Review service: a ranked queue of flagged words and durable labels.
//!
//! HTTP surface (JSON unless noted):
//!
//! * `GET /api/queue?offset&limit&filter` lists ranked items. `filter` is
//!   `unlabeled` (default), `labeled` or `all`.
//! * `GET /api/item/{doc}/{index}` returns one item with ±100 words of
//!   context, its score, suggested alternative, label and revision.
//! * `POST /api/label` with `{doc, index, label, category?, notes?,
//!   suggested_alternative?, revision}` stores a label. `revision` must
//!   equal the item's current revision, otherwise the reply is 409 with the
//!   current state.
//! * `GET /api/export` returns the labeled dataset as JSON lines.
//!
//! Labels are appended to `<dataset>.journal` and fsynced before the reply;
//! [`ReviewStore::compact`] folds the journal back into the dataset file.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context as _;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use erratum_core::dataset::{
    dataset_to_string, parse_dataset, ErrorCategory, Label, LabeledExample, SegmentationOptions, SCHEMA,
};
use erratum_core::detectors::{sort_ranked, ErrorScore};
use erratum_core::text::Document;
use serde::{Deserialize, Serialize};

pub const SECRET_HEADER: &str = "x-review-secret";
pub const CONTEXT_WINDOW: usize = 100;
pub const DEFAULT_LIMIT: usize = 20;
pub const MAX_LIMIT: usize = 500;

type Key = (String, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JournalEntry {
    revision: u64,
    example: LabeledExample,
}

#[derive(Debug, Clone)]
struct Stored {
    example: LabeledExample,
    revision: u64,
}

/// Labels with per-item revisions, persisted as dataset file plus journal.
pub struct ReviewStore {
    dataset: PathBuf,
    journal_path: PathBuf,
    journal: File,
    labels: BTreeMap<Key, Stored>,
}

pub fn journal_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".journal");
    dataset.with_file_name(name)
}

impl ReviewStore {
    /// Loads the dataset (if present) and replays the journal. A torn final
    /// journal line, left by a crash mid-write, is discarded.
    pub fn open(dataset: &Path, seg: SegmentationOptions) -> anyhow::Result<Self> {
        let mut labels = BTreeMap::new();
        if dataset.exists() {
            let text = fs::read_to_string(dataset).with_context(|| format!("reading {}", dataset.display()))?;
            for ex in parse_dataset(&text, &dataset.display().to_string(), seg)? {
                labels.insert((ex.doc_id.clone(), ex.word_index), Stored { example: ex, revision: 1 });
            }
        }
        let journal_path = journal_path(dataset);
        let mut journal = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&journal_path)
            .with_context(|| format!("opening {}", journal_path.display()))?;
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&journal);
        let mut line = Vec::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_until(b'\n', &mut line)?;
            if read == 0 {
                break;
            }
            n += 1;
            let complete = line.ends_with(b"\n");
            match serde_json::from_slice::<JournalEntry>(&line) {
                Ok(e) if complete => {
                    good_len += read as u64;
                    let key = (e.example.doc_id.clone(), e.example.word_index);
                    labels.insert(
                        key,
                        Stored {
                            example: e.example,
                            revision: e.revision,
                        },
                    );
                }
                _ => {
                    let rest = reader.fill_buf()?.is_empty();
                    if !rest {
                        anyhow::bail!("{}: corrupt entry at line {n}", journal_path.display());
                    }
                    tracing::warn!(line = n, "discarding torn final journal entry");
                    break;
                }
            }
        }
        drop(reader);
        journal.set_len(good_len)?;
        journal.seek(SeekFrom::End(0))?;
        Ok(ReviewStore {
            dataset: dataset.to_path_buf(),
            journal_path,
            journal,
            labels,
        })
    }

    pub fn revision(&self, key: &Key) -> u64 {
        self.labels.get(key).map_or(0, |s| s.revision)
    }

    pub fn label(&self, key: &Key) -> Option<&LabeledExample> {
        self.labels.get(key).map(|s| &s.example)
    }

    /// Stores `example` if `expected` is the current revision; returns the
    /// new revision, or the current one on conflict.
    pub fn put(&mut self, example: LabeledExample, expected: u64) -> anyhow::Result<Result<u64, u64>> {
        let key = (example.doc_id.clone(), example.word_index);
        let current = self.revision(&key);
        if current != expected {
            return Ok(Err(current));
        }
        let entry = JournalEntry {
            revision: current + 1,
            example,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        self.journal.write_all(line.as_bytes())?;
        self.journal.sync_data()?;
        self.labels.insert(
            key,
            Stored {
                example: entry.example,
                revision: entry.revision,
            },
        );
        Ok(Ok(entry.revision))
    }

    /// Labeled rows in `(doc_id, word_index)` order.
    pub fn export(&self) -> String {
        let rows: Vec<LabeledExample> = self.labels.values().map(|s| s.example.clone()).collect();
        dataset_to_string(&rows)
    }

    /// Rewrites the dataset file with every label and empties the journal.
    pub fn compact(&mut self) -> anyhow::Result<()> {
        let tmp = self.dataset.with_extension("compact.tmp");
        {
            let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            f.write_all(self.export().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.dataset).with_context(|| format!("replacing {}", self.dataset.display()))?;
        self.journal.set_len(0)?;
        self.journal.sync_all()?;
        // Revisions restart from the compacted file.
        for s in self.labels.values_mut() {
            s.revision = 1;
        }
        tracing::info!(rows = self.labels.len(), path = %self.dataset.display(), "journal compacted");
        Ok(())
    }

    pub fn journal_file(&self) -> &Path {
        &self.journal_path
    }
}

struct Inner {
    ranked: Vec<ErrorScore>,
    rank_of: HashMap<Key, usize>,
    docs: HashMap<String, Document>,
    store: Mutex<ReviewStore>,
    secret: Option<String>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(
        mut ranked: Vec<ErrorScore>,
        docs: HashMap<String, Document>,
        store: ReviewStore,
        secret: Option<String>,
    ) -> Self {
        sort_ranked(&mut ranked);
        let rank_of = ranked
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.doc_id.clone(), s.word_index), i))
            .collect();
        AppState(Arc::new(Inner {
            ranked,
            rank_of,
            docs,
            store: Mutex::new(store),
            secret,
        }))
    }

    pub fn compact(&self) -> anyhow::Result<()> {
        self.0.store.lock().expect("store poisoned").compact()
    }
}

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    #[serde(default)]
    pub offset: usize,
    pub limit: Option<usize>,
    pub filter: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueueItem {
    pub rank: usize,
    pub doc: String,
    pub index: usize,
    pub surface: String,
    pub score: f64,
    pub best_alternative: Option<String>,
    pub label: Option<Label>,
    pub category: Option<ErrorCategory>,
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueuePage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ItemContext {
    pub left: Vec<String>,
    pub word: String,
    pub right: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ItemView {
    pub doc: String,
    pub index: usize,
    pub surface: String,
    pub rank: Option<usize>,
    pub score: Option<f64>,
    pub best_alternative: Option<String>,
    pub context: ItemContext,
    pub label: Option<LabeledExample>,
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabelRequest {
    pub doc: String,
    pub index: usize,
    pub label: Label,
    #[serde(default)]
    pub category: Option<ErrorCategory>,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub suggested_alternative: Option<String>,
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabelResponse {
    pub doc: String,
    pub index: usize,
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConflictResponse {
    pub error: String,
    pub revision: u64,
    pub current: Option<LabeledExample>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn require_secret(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(secret) = &state.0.secret {
        let given = headers.get(SECRET_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            return error(StatusCode::UNAUTHORIZED, "missing or wrong X-Review-Secret header");
        }
    }
    next.run(req).await
}

async fn queue(State(state): State<AppState>, Query(p): Query<QueueParams>) -> Response {
    let limit = p.limit.unwrap_or(DEFAULT_LIMIT).min(MAX_LIMIT);
    let filter = p.filter.as_deref().unwrap_or("unlabeled");
    if !matches!(filter, "unlabeled" | "labeled" | "all") {
        return error(StatusCode::BAD_REQUEST, format!("unknown filter `{filter}`"));
    }
    let store = state.0.store.lock().expect("store poisoned");
    let matching: Vec<QueueItem> = state
        .0
        .ranked
        .iter()
        .enumerate()
        .filter_map(|(rank, s)| {
            let key = (s.doc_id.clone(), s.word_index);
            let label = store.label(&key);
            let keep = match filter {
                "unlabeled" => label.is_none(),
                "labeled" => label.is_some(),
                _ => true,
            };
            keep.then(|| QueueItem {
                rank,
                doc: s.doc_id.clone(),
                index: s.word_index,
                surface: s.surface.clone(),
                score: s.score,
                best_alternative: s.best_alternative.clone(),
                label: label.map(|l| l.label),
                category: label.and_then(|l| l.category),
                revision: store.revision(&key),
            })
        })
        .collect();
    let total = matching.len();
    let items = matching.into_iter().skip(p.offset).take(limit).collect();
    Json(QueuePage {
        total,
        offset: p.offset,
        items,
    })
    .into_response()
}

fn word_context(doc: &Document, index: usize) -> ItemContext {
    let words = doc.words();
    let lo = index.saturating_sub(CONTEXT_WINDOW);
    let hi = (index + 1 + CONTEXT_WINDOW).min(words.len());
    ItemContext {
        left: words[lo..index].to_vec(),
        word: words[index].clone(),
        right: words[index + 1..hi].to_vec(),
    }
}

async fn item(State(state): State<AppState>, UrlPath((doc_id, index)): UrlPath<(String, usize)>) -> Response {
    let Some(doc) = state.0.docs.get(&doc_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown document `{doc_id}`"));
    };
    if index >= doc.spans.len() {
        return error(StatusCode::NOT_FOUND, format!("`{doc_id}` has no word {index}"));
    }
    let key = (doc_id.clone(), index);
    let rank = state.0.rank_of.get(&key).copied();
    let scored = rank.map(|r| &state.0.ranked[r]);
    let store = state.0.store.lock().expect("store poisoned");
    Json(ItemView {
        doc: doc_id,
        index,
        surface: doc.spans[index].surface.clone(),
        rank,
        score: scored.map(|s| s.score),
        best_alternative: scored.and_then(|s| s.best_alternative.clone()),
        context: word_context(doc, index),
        label: store.label(&key).cloned(),
        revision: store.revision(&key),
    })
    .into_response()
}

async fn label(State(state): State<AppState>, Json(req): Json<LabelRequest>) -> Response {
    let Some(doc) = state.0.docs.get(&req.doc) else {
        return error(StatusCode::NOT_FOUND, format!("unknown document `{}`", req.doc));
    };
    let Some(span) = doc.spans.get(req.index) else {
        return error(StatusCode::NOT_FOUND, format!("`{}` has no word {}", req.doc, req.index));
    };
    let example = LabeledExample {
        schema: SCHEMA.to_string(),
        doc_id: req.doc.clone(),
        word_index: req.index,
        surface: span.surface.clone(),
        label: req.label,
        category: req.category,
        expert_notes: req.notes.clone(),
        suggested_alternative: req.suggested_alternative.clone().or_else(|| {
            state
                .0
                .rank_of
                .get(&(req.doc.clone(), req.index))
                .and_then(|&r| state.0.ranked[r].best_alternative.clone())
        }),
        context_text: doc.text.as_str().to_string(),
        part: None,
    };
    if let Err(m) = example.check_category() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, m);
    }
    let mut store = state.0.store.lock().expect("store poisoned");
    match store.put(example, req.revision) {
        Ok(Ok(revision)) => Json(LabelResponse {
            doc: req.doc,
            index: req.index,
            revision,
        })
        .into_response(),
        Ok(Err(current)) => {
            let key = (req.doc.clone(), req.index);
            (
                StatusCode::CONFLICT,
                Json(ConflictResponse {
                    error: format!("stale revision {}; current is {current}", req.revision),
                    revision: current,
                    current: store.label(&key).cloned(),
                }),
            )
                .into_response()
        }
        Err(e) => {
            tracing::error!(error = %e, "journal write failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, format!("journal write failed: {e:#}"))
        }
    }
}

async fn export(State(state): State<AppState>) -> Response {
    let body = state.0.store.lock().expect("store poisoned").export();
    ([(header::CONTENT_TYPE, "application/x-ndjson; charset=utf-8")], body).into_response()
}

pub fn router(state: AppState, ui: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/item/{doc}/{index}", get(item))
        .route("/api/label", post(label))
        .route("/api/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_secret))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}
