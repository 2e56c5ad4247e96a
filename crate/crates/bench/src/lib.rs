//! Synthetic workload matrix over the budgeted trace structures.
//!
//! Each workload builds a complete b-ary trace tree, queries its active and
//! full descendant sets, compacts a one-payload-per-vertex history under an
//! approximate token budget, streams payloads through a soft-capped log and
//! times a projection over an observation registry. Results are written as
//! per-workload JSON, an aggregate JSON array and a CSV table.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use budgeted_trace::{
    approx_tokens, compact, BudgetPolicy, CompactionWindow, EdgeState, GraphError, HistoryEpoch, HistoryError, ObsKey,
    ObsMode, ObservationRegistry, SoftCappedLog, SoftLogError, StatePredicate, TraceGraph, TraceId, TraceItem,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MATRIX_JSON: &str = "tracebench_matrix.json";
pub const MATRIX_CSV: &str = "tracebench_matrix.csv";

/// Column order of [`MATRIX_CSV`].
pub const CSV_HEADER: [&str; 15] = [
    "workload",
    "vertices",
    "edges",
    "active_desc",
    "all_desc",
    "build_ms",
    "active_query_ms",
    "full_query_ms",
    "compact_ms",
    "original_tokens",
    "compact_tokens",
    "ratio",
    "softlog_entries",
    "softlog_bytes",
    "registry_time_ms",
];

/// Summary payload used for every compaction (24 approximate tokens).
pub const SUMMARY: &str =
    "summary: older trace items were compacted; the newest items follow verbatim after this header.";

const REPETITIONS: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload {name:?}: {reason}")]
    InvalidConfig { name: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    SoftLog(#[from] SoftLogError),
    #[error(transparent)]
    Budget(#[from] budgeted_trace::BudgetError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub name: String,
    pub vertices: u64,
    pub branching_factor: u64,
    pub closed_period: u64,
    pub payload_bytes: usize,
    pub token_budget: u64,
    pub softcap_bytes: usize,
    pub soft_ratio: f64,
    pub softlog_entry_bytes: usize,
    pub registry_subscribers: usize,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |reason: &str| {
            Err(BenchError::InvalidConfig {
                name: self.name.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.vertices == 0 || self.branching_factor == 0 || self.payload_bytes == 0 || self.token_budget == 0 {
            return fail("vertices, branching_factor, payload_bytes and token_budget must be positive");
        }
        if self.softcap_bytes == 0 || self.softlog_entry_bytes == 0 || self.registry_subscribers == 0 {
            return fail("softcap_bytes, softlog_entry_bytes and registry_subscribers must be positive");
        }
        if self.closed_period < 2 {
            return fail("closed_period must be at least 2");
        }
        if !(self.soft_ratio > 0.0 && self.soft_ratio <= 1.0) {
            return fail("soft_ratio must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadResult {
    pub workload: String,
    pub vertices: u64,
    pub edges: u64,
    pub active_desc: u64,
    pub all_desc: u64,
    pub build_ms: f64,
    pub active_query_ms: f64,
    pub full_query_ms: f64,
    pub compact_ms: f64,
    pub original_tokens: u64,
    pub compact_tokens: u64,
    pub ratio: f64,
    pub softlog_entries: u64,
    pub softlog_bytes: u64,
    pub registry_time_ms: f64,
}

/// The three shipped workloads. Parameters are reconstructions chosen to
/// land at the same scale as the reference measurements (10k/20k/40k
/// vertices, 35/52/68 approximate tokens per payload, 1k/2k/4k budgets).
pub fn default_configs() -> Vec<WorkloadConfig> {
    vec![
        WorkloadConfig {
            name: "balanced_10k".into(),
            vertices: 10_000,
            branching_factor: 2,
            closed_period: 3,
            payload_bytes: 140,
            token_budget: 1_024,
            softcap_bytes: 16_384,
            soft_ratio: 0.75,
            softlog_entry_bytes: 140,
            registry_subscribers: 64,
        },
        WorkloadConfig {
            name: "wide_20k".into(),
            vertices: 20_000,
            branching_factor: 8,
            closed_period: 3,
            payload_bytes: 206,
            token_budget: 2_048,
            softcap_bytes: 24_576,
            soft_ratio: 0.75,
            softlog_entry_bytes: 205,
            registry_subscribers: 128,
        },
        WorkloadConfig {
            name: "deep_40k".into(),
            vertices: 40_000,
            branching_factor: 2,
            closed_period: 4,
            payload_bytes: 271,
            token_budget: 4_096,
            softcap_bytes: 32_768,
            soft_ratio: 0.75,
            softlog_entry_bytes: 269,
            registry_subscribers: 256,
        },
    ]
}

/// `"event {id}"` left-padded with dots to exactly `len` bytes; when the
/// tag is longer, its last `len` bytes.
pub fn payload(id: u64, len: usize) -> String {
    let tag = format!("event {id}");
    if tag.len() >= len {
        tag[tag.len() - len..].to_owned()
    } else {
        format!("{tag:.>len$}")
    }
}

/// Complete b-ary tree on ids `0..vertices`: `v` hangs under
/// `(v - 1) / b`, closed when `v` is divisible by the period.
pub fn build_workload_graph(config: &WorkloadConfig) -> Result<TraceGraph, BenchError> {
    let mut graph = TraceGraph::new();
    for v in 1..config.vertices {
        let state = if v % config.closed_period == 0 {
            EdgeState::Closed
        } else {
            EdgeState::Active
        };
        graph.upsert(TraceId((v - 1) / config.branching_factor), TraceId(v), state)?;
    }
    Ok(graph)
}

fn history_tokens(history: &HistoryEpoch) -> u64 {
    history.items().iter().map(|i| approx_tokens(i.payload())).sum()
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Runs `f` [`REPETITIONS`] times; returns the last output and the median
/// wall time in milliseconds.
fn timed<T>(mut f: impl FnMut() -> Result<T, BenchError>) -> Result<(T, f64), BenchError> {
    let mut samples = Vec::with_capacity(REPETITIONS);
    let mut last = None;
    for _ in 0..REPETITIONS {
        let start = Instant::now();
        let out = f()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    Ok((last.expect("at least one repetition"), median(samples)))
}

fn registry_for(config: &WorkloadConfig) -> ObservationRegistry<usize> {
    let mut registry = ObservationRegistry::new();
    for s in 0..config.registry_subscribers {
        let mode = if s % 2 == 0 { ObsMode::Exact } else { ObsMode::Recursive };
        let key = ObsKey::new(format!("root/branch/{}", s / 2)).expect("well-formed key");
        registry.register(s, [(key, mode)]);
    }
    registry
}

pub fn run_workload(config: &WorkloadConfig) -> Result<WorkloadResult, BenchError> {
    config.validate()?;

    let (graph, build_ms) = timed(|| build_workload_graph(config))?;
    let (active, active_query_ms) =
        timed(|| Ok(graph.descendants(TraceId::ROOT, StatePredicate::only(EdgeState::Active))))?;
    let (all, full_query_ms) = timed(|| Ok(graph.descendants(TraceId::ROOT, StatePredicate::all())))?;

    let mut history = HistoryEpoch::new();
    for v in 0..config.vertices {
        history.append(TraceItem::new(v, payload(v, config.payload_bytes)))?;
    }
    let original_tokens = history_tokens(&history);
    let policy = BudgetPolicy::tokens_approx(config.token_budget);
    let (compacted, compact_ms) = timed(|| {
        let mut window = CompactionWindow::new();
        Ok(compact(&history, &policy, SUMMARY, false, &mut window, None)?)
    })?;
    let compact_tokens = history_tokens(&compacted.replacement);

    let mut log = SoftCappedLog::new(config.softcap_bytes, config.soft_ratio)?;
    for v in 0..config.vertices {
        log.append(payload(v, config.softlog_entry_bytes));
    }
    let (softlog_entries, softlog_bytes) = log.stats();

    let registry = registry_for(config);
    let leaf = ObsKey::new("root/branch/0/leaf").expect("well-formed key");
    let (_, registry_time_ms) = timed(|| Ok(registry.project(&leaf)))?;

    Ok(WorkloadResult {
        workload: config.name.clone(),
        vertices: config.vertices,
        edges: graph.edge_count() as u64,
        active_desc: active.len() as u64,
        all_desc: all.len() as u64,
        build_ms,
        active_query_ms,
        full_query_ms,
        compact_ms,
        original_tokens,
        compact_tokens,
        ratio: if original_tokens == 0 {
            0.0
        } else {
            compact_tokens as f64 / original_tokens as f64
        },
        softlog_entries: softlog_entries as u64,
        softlog_bytes: softlog_bytes as u64,
        registry_time_ms,
    })
}

pub fn read_configs(path: &Path) -> Result<Vec<WorkloadConfig>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json {
        path: path.to_owned(),
        source,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| BenchError::Json {
        path: path.to_owned(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| BenchError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_csv(path: &Path, results: &[WorkloadResult]) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in results {
        writer.serialize(r).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| BenchError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Runs every workload and writes `<workload>.json`, [`MATRIX_JSON`] and
/// [`MATRIX_CSV`] into `out_dir`.
pub fn run_matrix(configs: &[WorkloadConfig], out_dir: &Path) -> Result<Vec<WorkloadResult>, BenchError> {
    fs::create_dir_all(out_dir).map_err(|source| BenchError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut results = Vec::with_capacity(configs.len());
    for config in configs {
        let result = run_workload(config)?;
        write_json(&out_dir.join(format!("{}.json", config.name)), &result)?;
        results.push(result);
    }
    write_json(&out_dir.join(MATRIX_JSON), &results)?;
    write_csv(&out_dir.join(MATRIX_CSV), &results)?;
    Ok(results)
}
