//! Budget policies, payload measurement and the bounded cost cache.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per approximate token.
pub const BYTES_PER_TOKEN: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Bytes,
    TokensApprox,
    TokensExact,
}

/// External exact measurement, e.g. a tokenizer.
pub type Measurer = Arc<dyn Fn(&str) -> u64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetError {
    #[error("exact token mode requires an external measurer")]
    MissingMeasurer,
}

/// A measurement mode plus a limit expressed in that mode's unit.
#[derive(Clone)]
pub struct BudgetPolicy {
    mode: BudgetMode,
    limit: u64,
    exact_measurer: Option<Measurer>,
}

impl fmt::Debug for BudgetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BudgetPolicy")
            .field("mode", &self.mode)
            .field("limit", &self.limit)
            .field("exact_measurer", &self.exact_measurer.as_ref().map(|_| ".."))
            .finish()
    }
}

impl BudgetPolicy {
    /// A policy without a measurer. Measuring under `TokensExact` fails until
    /// one is attached with [`BudgetPolicy::with_measurer`].
    pub fn new(mode: BudgetMode, limit: u64) -> Self {
        BudgetPolicy {
            mode,
            limit,
            exact_measurer: None,
        }
    }

    pub fn bytes(limit: u64) -> Self {
        Self::new(BudgetMode::Bytes, limit)
    }

    pub fn tokens_approx(limit: u64) -> Self {
        Self::new(BudgetMode::TokensApprox, limit)
    }

    pub fn tokens_exact(limit: u64, measurer: impl Fn(&str) -> u64 + Send + Sync + 'static) -> Self {
        Self::new(BudgetMode::TokensExact, limit).with_measurer(measurer)
    }

    pub fn with_measurer(mut self, measurer: impl Fn(&str) -> u64 + Send + Sync + 'static) -> Self {
        self.exact_measurer = Some(Arc::new(measurer));
        self
    }

    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = limit;
        self
    }

    pub fn mode(&self) -> BudgetMode {
        self.mode
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn measure(&self, payload: &str) -> Result<u64, BudgetError> {
        measure(payload, self)
    }
}

/// `ceil(bytes / 4)`.
pub fn approx_tokens(payload: &str) -> u64 {
    (payload.len() as u64).div_ceil(BYTES_PER_TOKEN)
}

/// Cost of `payload` under `policy`'s mode.
pub fn measure(payload: &str, policy: &BudgetPolicy) -> Result<u64, BudgetError> {
    match policy.mode {
        BudgetMode::Bytes => Ok(payload.len() as u64),
        BudgetMode::TokensApprox => Ok(approx_tokens(payload)),
        BudgetMode::TokensExact => policy
            .exact_measurer
            .as_ref()
            .map(|m| m(payload))
            .ok_or(BudgetError::MissingMeasurer),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    fingerprint: u64,
    len: usize,
    mode: BudgetMode,
}

impl CacheKey {
    fn new(payload: &str, mode: BudgetMode) -> Self {
        let mut h = DefaultHasher::new();
        payload.hash(&mut h);
        CacheKey {
            fingerprint: h.finish(),
            len: payload.len(),
            mode,
        }
    }
}

/// Bounded LRU cache of payload costs.
///
/// Keys are `(content hash, byte length, mode)`. Entries are only ever the
/// result of [`measure`], so dropping any of them changes timing, never
/// results. One cache should not be shared between exact-mode policies with
/// different measurers, since the key does not identify the measurer.
pub struct CostCache {
    // None: capacity 0, every lookup is a miss.
    inner: Option<LruCache<CacheKey, u64>>,
    hits: u64,
    misses: u64,
}

impl fmt::Debug for CostCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostCache")
            .field("len", &self.len())
            .field("hits", &self.hits)
            .field("misses", &self.misses)
            .finish()
    }
}

impl CostCache {
    pub fn new(capacity: usize) -> Self {
        CostCache {
            inner: NonZeroUsize::new(capacity).map(LruCache::new),
            hits: 0,
            misses: 0,
        }
    }

    pub fn unbounded() -> Self {
        CostCache {
            inner: Some(LruCache::unbounded()),
            hits: 0,
            misses: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn clear(&mut self) {
        if let Some(inner) = &mut self.inner {
            inner.clear();
        }
    }

    /// `measure(payload, policy)`, served from the cache when possible.
    pub fn cached_measure(&mut self, payload: &str, policy: &BudgetPolicy) -> Result<u64, BudgetError> {
        let key = CacheKey::new(payload, policy.mode);
        if let Some(&cost) = self.inner.as_mut().and_then(|c| c.get(&key)) {
            self.hits += 1;
            return Ok(cost);
        }
        self.misses += 1;
        let cost = measure(payload, policy)?;
        if let Some(inner) = &mut self.inner {
            inner.put(key, cost);
        }
        Ok(cost)
    }
}

pub fn cached_measure(cache: &mut CostCache, payload: &str, policy: &BudgetPolicy) -> Result<u64, BudgetError> {
    cache.cached_measure(payload, policy)
}
