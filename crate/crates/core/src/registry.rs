//! Reference-counted exact/recursive key observation.
//!
//! Keys live in a `/`-separated namespace. A recursive registration on `a/b`
//! covers `a/b` and everything below it (`a/b/c`, not `a/bc`). Counters are
//! kept per `(key, mode)`; the mode the underlying source needs for a key is
//! the strongest one with a nonzero count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEPARATOR: char = '/';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("observation key is empty")]
    Empty,
    #[error("observation key {0:?} has an empty segment")]
    EmptySegment(String),
}

/// A validated `/`-separated path: non-empty segments, no leading or
/// trailing separator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObsKey(String);

impl ObsKey {
    pub fn new(path: impl Into<String>) -> Result<Self, KeyError> {
        let path = path.into();
        if path.is_empty() {
            return Err(KeyError::Empty);
        }
        if path.split(SEPARATOR).any(str::is_empty) {
            return Err(KeyError::EmptySegment(path));
        }
        Ok(ObsKey(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when `other` equals this key or lies below it.
    pub fn covers(&self, other: &ObsKey) -> bool {
        match other.0.strip_prefix(self.0.as_str()) {
            Some(rest) => rest.is_empty() || rest.starts_with(SEPARATOR),
            None => false,
        }
    }
}

impl TryFrom<String> for ObsKey {
    type Error = KeyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ObsKey::new(value)
    }
}

impl TryFrom<&str> for ObsKey {
    type Error = KeyError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        ObsKey::new(value)
    }
}

impl From<ObsKey> for String {
    fn from(key: ObsKey) -> Self {
        key.0
    }
}

impl fmt::Display for ObsKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Exact,
    Recursive,
}

/// Strongest active mode for a key. Ordered `Absent < Exact < Recursive`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectiveMode {
    Absent,
    Exact,
    Recursive,
}

/// A key whose effective mode changed during one register/unregister call.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeChange {
    pub key: ObsKey,
    pub old: EffectiveMode,
    pub new: EffectiveMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrySnapshot<S> {
    pub subscribers: Vec<(S, Vec<(ObsKey, ObsMode)>)>,
    pub counters: Vec<(ObsKey, ObsMode, usize)>,
}

/// Subscriber ids are chosen by the caller; the registry never mints them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationRegistry<S: Ord + Clone> {
    per_subscriber: BTreeMap<S, BTreeSet<(ObsKey, ObsMode)>>,
    counters: BTreeMap<(ObsKey, ObsMode), usize>,
}

impl<S: Ord + Clone> Default for ObservationRegistry<S> {
    fn default() -> Self {
        ObservationRegistry {
            per_subscriber: BTreeMap::new(),
            counters: BTreeMap::new(),
        }
    }
}

impl<S: Ord + Clone> ObservationRegistry<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, key: &ObsKey, mode: ObsMode) -> usize {
        // Tuple lookup needs an owned key; counters are small.
        self.counters.get(&(key.clone(), mode)).copied().unwrap_or(0)
    }

    pub fn effective_mode(&self, key: &ObsKey) -> EffectiveMode {
        if self.count(key, ObsMode::Recursive) > 0 {
            EffectiveMode::Recursive
        } else if self.count(key, ObsMode::Exact) > 0 {
            EffectiveMode::Exact
        } else {
            EffectiveMode::Absent
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.per_subscriber.len()
    }

    pub fn registrations(&self, subscriber: &S) -> impl Iterator<Item = &(ObsKey, ObsMode)> {
        self.per_subscriber.get(subscriber).into_iter().flatten()
    }

    /// Adds registrations for `subscriber`. Duplicates in `keys` and pairs
    /// the subscriber already holds are no-ops. Returns effective-mode
    /// transitions in key order.
    pub fn register(&mut self, subscriber: S, keys: impl IntoIterator<Item = (ObsKey, ObsMode)>) -> Vec<ModeChange> {
        let keys: BTreeSet<(ObsKey, ObsMode)> = keys.into_iter().collect();
        let mut changes = Vec::new();
        if keys.is_empty() {
            return changes;
        }
        let held = self.per_subscriber.entry(subscriber).or_default();
        for (key, mode) in keys {
            if held.contains(&(key.clone(), mode)) {
                continue;
            }
            let old = effective(&self.counters, &key);
            *self.counters.entry((key.clone(), mode)).or_insert(0) += 1;
            held.insert((key.clone(), mode));
            push_change(&mut changes, &self.counters, key, old);
        }
        changes
    }

    /// Removes the listed registrations of `subscriber`, or all of them when
    /// `keys` is `None`. Pairs the subscriber does not hold are ignored.
    pub fn unregister(&mut self, subscriber: &S, keys: Option<&[(ObsKey, ObsMode)]>) -> Vec<ModeChange> {
        let Some(held) = self.per_subscriber.get_mut(subscriber) else {
            return Vec::new();
        };
        let remove: BTreeSet<(ObsKey, ObsMode)> = match keys {
            Some(keys) => keys.iter().filter(|k| held.contains(*k)).cloned().collect(),
            None => std::mem::take(held),
        };
        let mut changes = Vec::new();
        for pair in remove {
            held.remove(&pair);
            let old = effective(&self.counters, &pair.0);
            let slot = self.counters.get_mut(&pair).expect("held registration is counted");
            *slot -= 1;
            if *slot == 0 {
                self.counters.remove(&pair);
            }
            push_change(&mut changes, &self.counters, pair.0, old);
        }
        if held.is_empty() {
            self.per_subscriber.remove(subscriber);
        }
        changes
    }

    /// Subscribers that must hear about a change at `changed`: exact holders
    /// of `changed` itself and recursive holders of it or any ancestor.
    pub fn project(&self, changed: &ObsKey) -> BTreeSet<S> {
        self.per_subscriber
            .iter()
            .filter(|(_, held)| {
                held.iter().any(|(key, mode)| match mode {
                    ObsMode::Exact => key == changed,
                    ObsMode::Recursive => key.covers(changed),
                })
            })
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn snapshot(&self) -> RegistrySnapshot<S> {
        RegistrySnapshot {
            subscribers: self
                .per_subscriber
                .iter()
                .map(|(s, held)| (s.clone(), held.iter().cloned().collect()))
                .collect(),
            counters: self.counters.iter().map(|((k, m), c)| (k.clone(), *m, *c)).collect(),
        }
    }

    /// Recounts every `(key, mode)` from the per-subscriber sets and compares
    /// with the stored counters.
    pub fn counters_consistent(&self) -> bool {
        let mut rebuilt: BTreeMap<(ObsKey, ObsMode), usize> = BTreeMap::new();
        for pair in self.per_subscriber.values().flatten() {
            *rebuilt.entry(pair.clone()).or_insert(0) += 1;
        }
        rebuilt == self.counters && self.per_subscriber.values().all(|h| !h.is_empty())
    }
}

fn effective(counters: &BTreeMap<(ObsKey, ObsMode), usize>, key: &ObsKey) -> EffectiveMode {
    let has = |mode| counters.contains_key(&(key.clone(), mode));
    if has(ObsMode::Recursive) {
        EffectiveMode::Recursive
    } else if has(ObsMode::Exact) {
        EffectiveMode::Exact
    } else {
        EffectiveMode::Absent
    }
}

// Merges consecutive transitions of one key so each call reports the net
// change per key.
fn push_change(
    changes: &mut Vec<ModeChange>,
    counters: &BTreeMap<(ObsKey, ObsMode), usize>,
    key: ObsKey,
    old: EffectiveMode,
) {
    let new = effective(counters, &key);
    if let Some(last) = changes.last_mut().filter(|c| c.key == key) {
        last.new = new;
        if last.old == last.new {
            changes.pop();
        }
        return;
    }
    if old != new {
        changes.push(ModeChange { key, old, new });
    }
}
