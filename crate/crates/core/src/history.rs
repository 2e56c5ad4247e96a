//! Append-only history epochs and cursor pagination.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{TraceGraph, TraceId};

/// One history entry. Summary items always carry id 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceItem {
    id: TraceId,
    payload: String,
    is_summary: bool,
}

impl TraceItem {
    pub fn new(id: impl Into<TraceId>, payload: impl Into<String>) -> Self {
        TraceItem {
            id: id.into(),
            payload: payload.into(),
            is_summary: false,
        }
    }

    pub fn summary(payload: impl Into<String>) -> Self {
        TraceItem {
            id: TraceId::ROOT,
            payload: payload.into(),
            is_summary: true,
        }
    }

    pub fn id(&self) -> TraceId {
        self.id
    }

    pub fn payload(&self) -> &str {
        &self.payload
    }

    pub fn is_summary(&self) -> bool {
        self.is_summary
    }

    pub(crate) fn with_payload(&self, payload: String) -> Self {
        TraceItem {
            id: self.id,
            payload,
            is_summary: self.is_summary,
        }
    }
}

/// Position inside a specific epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cursor {
    pub epoch: u64,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("summary items can only be created by compaction")]
    SummaryAppend,
    #[error("cursor belongs to epoch {cursor} but history is at epoch {current}")]
    StaleCursor { cursor: u64, current: u64 },
    #[error("cursor offset {offset} is past the end of a {len}-item history")]
    OutOfRange { offset: usize, len: usize },
    #[error("page size must be positive")]
    ZeroPageSize,
}

/// Items returned by [`HistoryEpoch::page`] and the cursor for the next page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Page<'a> {
    pub items: &'a [TraceItem],
    pub next: Option<Cursor>,
}

/// One generation of a history. A fresh history is epoch 0; compaction
/// produces the next epoch, which starts with its summary item.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEpoch {
    epoch: u64,
    items: Vec<TraceItem>,
}

impl HistoryEpoch {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn replacement(epoch: u64, items: Vec<TraceItem>) -> Self {
        debug_assert!(items.first().is_some_and(TraceItem::is_summary));
        debug_assert!(items.iter().skip(1).all(|i| !i.is_summary()));
        HistoryEpoch { epoch, items }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn items(&self) -> &[TraceItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn append(&mut self, item: TraceItem) -> Result<(), HistoryError> {
        if item.is_summary {
            return Err(HistoryError::SummaryAppend);
        }
        self.items.push(item);
        Ok(())
    }

    pub fn start(&self) -> Cursor {
        Cursor {
            epoch: self.epoch,
            offset: 0,
        }
    }

    /// Returns up to `page_size` items from `cursor`. The next cursor is
    /// present only while items remain after this page.
    pub fn page(&self, cursor: Cursor, page_size: usize) -> Result<Page<'_>, HistoryError> {
        if cursor.epoch != self.epoch {
            return Err(HistoryError::StaleCursor {
                cursor: cursor.epoch,
                current: self.epoch,
            });
        }
        let len = self.items.len();
        if cursor.offset > len {
            return Err(HistoryError::OutOfRange {
                offset: cursor.offset,
                len,
            });
        }
        if page_size == 0 {
            return Err(HistoryError::ZeroPageSize);
        }
        let end = cursor.offset.saturating_add(page_size).min(len);
        let next = (end < len).then_some(Cursor {
            epoch: self.epoch,
            offset: end,
        });
        Ok(Page {
            items: &self.items[cursor.offset..end],
            next,
        })
    }

    /// Indices of non-summary items whose id is neither a graph vertex nor a
    /// declared external id. Empty means the pair is consistent.
    pub fn check_reference_consistency(&self, graph: &TraceGraph, external_ids: &HashSet<TraceId>) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, item)| !item.is_summary)
            .filter(|(_, item)| !graph.contains_vertex(item.id) && !external_ids.contains(&item.id))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeState;
    use proptest::prelude::*;

    fn history(n: u64) -> HistoryEpoch {
        let mut h = HistoryEpoch::new();
        for i in 1..=n {
            h.append(TraceItem::new(i, format!("h{i}"))).unwrap();
        }
        h
    }

    #[test]
    fn append_preserves_order() {
        let mut h = HistoryEpoch::new();
        h.append(TraceItem::new(1, "a")).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.items()[0], TraceItem::new(1, "a"));
        let h = history(5);
        let ids: Vec<u64> = h.items().iter().map(|i| i.id().0).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn rejects_client_summary() {
        let mut h = HistoryEpoch::new();
        assert_eq!(h.append(TraceItem::summary("s")), Err(HistoryError::SummaryAppend));
        assert!(h.is_empty());
    }

    #[test]
    fn page_examples() {
        let h = history(5);
        let p = h.page(h.start(), 2).unwrap();
        assert_eq!(p.items, &h.items()[0..2]);
        assert_eq!(p.next, Some(Cursor { epoch: 0, offset: 2 }));

        let p = h.page(Cursor { epoch: 0, offset: 4 }, 2).unwrap();
        assert_eq!(p.items, &h.items()[4..5]);
        assert_eq!(p.next, None);

        // A page ending exactly at the last item has no successor.
        let p = h.page(Cursor { epoch: 0, offset: 3 }, 2).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.next, None);

        let p = h.page(Cursor { epoch: 0, offset: 5 }, 2).unwrap();
        assert!(p.items.is_empty());
        assert_eq!(p.next, None);
    }

    #[test]
    fn page_errors() {
        let h = history(3);
        assert_eq!(
            h.page(Cursor { epoch: 1, offset: 0 }, 2),
            Err(HistoryError::StaleCursor { cursor: 1, current: 0 })
        );
        assert_eq!(
            h.page(Cursor { epoch: 0, offset: 4 }, 2),
            Err(HistoryError::OutOfRange { offset: 4, len: 3 })
        );
        assert_eq!(h.page(h.start(), 0), Err(HistoryError::ZeroPageSize));
    }

    #[test]
    fn reference_consistency() {
        let mut g = TraceGraph::new();
        for (p, c) in [(0, 1), (0, 2), (1, 3), (2, 4), (2, 5)] {
            g.upsert(TraceId(p), TraceId(c), EdgeState::Active).unwrap();
        }
        let h = history(3);
        assert!(h.check_reference_consistency(&g, &HashSet::new()).is_empty());

        let mut h = history(2);
        h.append(TraceItem::new(42, "x")).unwrap();
        assert_eq!(h.check_reference_consistency(&g, &HashSet::new()), vec![2]);
        assert!(h
            .check_reference_consistency(&g, &HashSet::from([TraceId(42)]))
            .is_empty());

        // Graph updates never break consistency.
        g.upsert(TraceId(5), TraceId(1), EdgeState::Closed).unwrap();
        g.set_state(TraceId(2), EdgeState::Closed).unwrap();
        assert!(h
            .check_reference_consistency(&g, &HashSet::from([TraceId(42)]))
            .is_empty());
    }

    proptest! {
        #[test]
        fn paging_reconstructs_items(n in 0u64..30, size in 1usize..7) {
            let h = history(n);
            let mut collected = Vec::new();
            let mut cursor = Some(h.start());
            while let Some(c) = cursor {
                let p = h.page(c, size).unwrap();
                collected.extend_from_slice(p.items);
                cursor = p.next;
            }
            prop_assert_eq!(collected.as_slice(), h.items());
        }
    }
}
