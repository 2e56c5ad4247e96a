//! Budgeted dynamic trace structures.
//!
//! A rooted, status-labeled [`TraceGraph`] sits next to an append-only
//! [`HistoryEpoch`] of payloads. The history is kept within a byte or token
//! budget by [`compact`], which replaces it with a summary item plus the
//! longest recent suffix that fits. Auxiliary pieces: a [`SoftCappedLog`]
//! for bounded raw recency, an [`ObservationRegistry`] for counted key
//! subscriptions, a [`DeltaOverlay`] for net key-level changes, and a
//! [`CostCache`] for repeated measurement.

pub mod budget;
pub mod compaction;
pub mod graph;
pub mod history;
pub mod overlay;
pub mod registry;
pub mod soft_log;

pub use budget::{approx_tokens, cached_measure, measure, BudgetError, BudgetMode, BudgetPolicy, CostCache};
pub use compaction::{compact, omission_marker, truncate_middle, CompactionResult, CompactionWindow, MIN_MARKER_BYTES};
pub use graph::{EdgeRecord, EdgeState, GraphError, GraphSnapshot, StatePredicate, TraceGraph, TraceId};
pub use history::{Cursor, HistoryEpoch, HistoryError, Page, TraceItem};
pub use overlay::{Change, DeltaOverlay, Invalidated};
pub use registry::{EffectiveMode, KeyError, ModeChange, ObsKey, ObsMode, ObservationRegistry};
pub use soft_log::{SoftCappedLog, SoftLogError};
