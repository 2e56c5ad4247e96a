//! Summary-plus-suffix compaction and boundary-safe middle truncation.

use serde::{Deserialize, Serialize};

use crate::budget::{measure, BudgetError, BudgetMode, BudgetPolicy, CostCache, BYTES_PER_TOKEN};
use crate::history::{HistoryEpoch, TraceItem};

/// Omission marker inserted by [`truncate_middle`].
pub fn omission_marker(omitted_chars: usize) -> String {
    format!("...[{omitted_chars} chars omitted]...")
}

fn marker_len(omitted_chars: usize) -> usize {
    // "...[" + digits + " chars omitted]..."
    4 + decimal_digits(omitted_chars) + 18
}

fn decimal_digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// Byte length of the shortest possible marker, `"...[0 chars omitted]..."`.
pub const MIN_MARKER_BYTES: usize = 23;

/// Shortens `payload` to at most `byte_allowance` bytes by cutting out its
/// middle and inserting an omission marker with the number of removed
/// characters (Unicode scalar values).
///
/// Payloads that already fit are returned unchanged. The marker space is
/// reserved as if every character were omitted, so the real marker is never
/// longer than the reservation. When the allowance cannot hold that marker
/// the result is empty and the caller should drop the item.
pub fn truncate_middle(payload: &str, byte_allowance: usize) -> String {
    if payload.len() <= byte_allowance {
        return payload.to_owned();
    }
    let total_chars = payload.chars().count();
    let reserve = marker_len(total_chars);
    if byte_allowance < reserve {
        return String::new();
    }
    let room = byte_allowance - reserve;
    let head_budget = room / 2;
    let tail_budget = room - head_budget;

    let head = &payload[..payload.floor_char_boundary(head_budget)];
    let tail = &payload[payload.ceil_char_boundary(payload.len() - tail_budget)..];
    let omitted = total_chars - head.chars().count() - tail.chars().count();

    let mut out = String::with_capacity(head.len() + reserve + tail.len());
    out.push_str(head);
    out.push_str(&omission_marker(omitted));
    out.push_str(tail);
    out
}

/// Ordinal of the current compacted epoch and an optional prefill estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionWindow {
    epoch: u64,
    prefill_estimate: Option<u64>,
}

impl CompactionWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn prefill_estimate(&self) -> Option<u64> {
        self.prefill_estimate
    }

    /// Advances to the next epoch and forgets the estimate.
    pub fn start_window(&mut self) {
        self.epoch += 1;
        self.prefill_estimate = None;
    }

    pub fn set_prefill_estimate(&mut self, estimate: u64) {
        self.prefill_estimate = Some(estimate);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactionResult {
    /// The next epoch: summary item first, then the retained suffix.
    pub replacement: HistoryEpoch,
    /// Whole items copied verbatim.
    pub retained_count: usize,
    /// Whether a middle-truncated boundary item was kept.
    pub boundary_truncated: bool,
    /// Items dropped entirely, including a previous epoch's summary.
    pub discarded_count: usize,
}

struct Meter<'a> {
    policy: &'a BudgetPolicy,
    cache: Option<&'a mut CostCache>,
}

impl Meter<'_> {
    fn cost(&mut self, payload: &str) -> Result<u64, BudgetError> {
        match self.cache.as_deref_mut() {
            Some(cache) => cache.cached_measure(payload, self.policy),
            None => measure(payload, self.policy),
        }
    }

    /// Largest middle truncation of `payload` costing at most `budget`, if
    /// one exists. Token budgets start from a 4-bytes-per-token allowance;
    /// exact measurement then halves the allowance until the fragment fits.
    fn fit(&mut self, payload: &str, budget: u64) -> Result<Option<String>, BudgetError> {
        let mut allowance = match self.policy.mode() {
            BudgetMode::Bytes => budget,
            BudgetMode::TokensApprox | BudgetMode::TokensExact => budget.saturating_mul(BYTES_PER_TOKEN),
        };
        loop {
            let fragment = truncate_middle(payload, usize::try_from(allowance).unwrap_or(usize::MAX));
            if fragment.is_empty() {
                return Ok(None);
            }
            if self.cost(&fragment)? <= budget {
                return Ok(Some(fragment));
            }
            allowance /= 2;
        }
    }
}

/// Replaces `history` by a summary item followed by the longest suffix whose
/// cost fits `policy.limit()`.
///
/// The scan runs newest to oldest and keeps whole items while they fit. The
/// first item that does not fit is middle-truncated into the remaining budget
/// when that budget is positive and large enough for the omission marker,
/// otherwise dropped; the scan stops there. By default the summary rides
/// outside the budget. With `charge_summary` its cost is subtracted first,
/// and a summary larger than the whole budget is itself truncated.
///
/// A summary item left by a previous compaction is never retained; the new
/// summary supersedes it. `window` advances to the next epoch. The optional
/// cache only affects running time.
pub fn compact(
    history: &HistoryEpoch,
    policy: &BudgetPolicy,
    summary: &str,
    charge_summary: bool,
    window: &mut CompactionWindow,
    cache: Option<&mut CostCache>,
) -> Result<CompactionResult, BudgetError> {
    let mut meter = Meter { policy, cache };
    let limit = policy.limit();

    let (summary, mut remaining) = if charge_summary {
        let cost = meter.cost(summary)?;
        if cost <= limit {
            (summary.to_owned(), limit - cost)
        } else {
            (meter.fit(summary, limit)?.unwrap_or_default(), 0)
        }
    } else {
        (summary.to_owned(), limit)
    };

    let mut suffix: Vec<TraceItem> = Vec::new();
    let mut boundary: Option<TraceItem> = None;
    for item in history.items().iter().rev().filter(|i| !i.is_summary()) {
        let cost = meter.cost(item.payload())?;
        if cost <= remaining {
            suffix.push(item.clone());
            remaining -= cost;
        } else {
            if remaining > 0 {
                boundary = meter.fit(item.payload(), remaining)?.map(|p| item.with_payload(p));
            }
            break;
        }
    }

    let retained_count = suffix.len();
    let boundary_truncated = boundary.is_some();
    let discarded_count = history.len() - retained_count - usize::from(boundary_truncated);

    let mut items = Vec::with_capacity(retained_count + 2);
    items.push(TraceItem::summary(summary));
    items.extend(boundary);
    items.extend(suffix.into_iter().rev());

    window.start_window();
    Ok(CompactionResult {
        replacement: HistoryEpoch::replacement(history.epoch() + 1, items),
        retained_count,
        boundary_truncated,
        discarded_count,
    })
}
