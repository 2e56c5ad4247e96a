//! Net key-level change between a baseline and the current state.
//!
//! The overlay remembers, for every touched key, its value before the first
//! touch (baseline) and its latest value (current). Operation order is not
//! kept. Callers must report every change exactly; when they cannot, they
//! call [`DeltaOverlay::invalidate`] and the overlay stops reporting.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("delta overlay was invalidated")]
pub struct Invalidated;

/// `(baseline, current)` for one changed key; `None` means absent.
pub type Change = (Option<String>, Option<String>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaOverlay {
    baseline: BTreeMap<String, Option<String>>,
    current: BTreeMap<String, Option<String>>,
    origins: BTreeMap<String, String>,
    valid: bool,
}

impl Default for DeltaOverlay {
    fn default() -> Self {
        DeltaOverlay {
            baseline: BTreeMap::new(),
            current: BTreeMap::new(),
            origins: BTreeMap::new(),
            valid: true,
        }
    }
}

impl DeltaOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    fn touch(&mut self, key: &str, before: Option<&str>) {
        if !self.baseline.contains_key(key) {
            self.baseline.insert(key.to_owned(), before.map(str::to_owned));
        }
    }

    fn set(&mut self, key: &str, value: Option<&str>) {
        self.current.insert(key.to_owned(), value.map(str::to_owned));
    }

    /// `key` did not exist and now holds `new_value`.
    pub fn record_add(&mut self, key: &str, new_value: &str) {
        if !self.valid {
            return;
        }
        self.touch(key, None);
        self.set(key, Some(new_value));
    }

    pub fn record_update(&mut self, key: &str, old_value: &str, new_value: &str) {
        if !self.valid {
            return;
        }
        self.touch(key, Some(old_value));
        self.set(key, Some(new_value));
    }

    pub fn record_delete(&mut self, key: &str, old_value: &str) {
        if !self.valid {
            return;
        }
        self.touch(key, Some(old_value));
        self.set(key, None);
    }

    /// The value at `src` (currently `src_old`) moves to the new key `dst`
    /// and becomes `new_value`. `src_old` only seeds the baseline when `src`
    /// was not touched before.
    pub fn record_move_update(&mut self, src: &str, dst: &str, src_old: &str, new_value: &str) {
        if !self.valid {
            return;
        }
        self.record_delete(src, src_old);
        self.record_add(dst, new_value);
        self.origins.insert(dst.to_owned(), src.to_owned());
    }

    /// Permanently disables reporting.
    pub fn invalidate(&mut self) {
        self.valid = false;
    }

    /// Keys whose baseline and current values differ, ascending.
    pub fn changed_keys(&self) -> Result<BTreeMap<String, Change>, Invalidated> {
        if !self.valid {
            return Err(Invalidated);
        }
        Ok(self
            .current
            .iter()
            .filter_map(|(key, now)| {
                let before = self.baseline.get(key).expect("touched keys have a baseline");
                (before != now).then(|| (key.clone(), (before.clone(), now.clone())))
            })
            .collect())
    }

    /// Rename pairs `(src, dst)` where `src` existed at baseline, `dst`
    /// exists now and `src` no longer does.
    pub fn renames(&self) -> Result<BTreeSet<(String, String)>, Invalidated> {
        if !self.valid {
            return Err(Invalidated);
        }
        let present = |map: &BTreeMap<String, Option<String>>, key: &str| matches!(map.get(key), Some(Some(_)));
        Ok(self
            .origins
            .iter()
            .filter(|(dst, src)| {
                present(&self.baseline, src) && present(&self.current, dst) && !present(&self.current, src)
            })
            .map(|(dst, src)| (src.clone(), dst.clone()))
            .collect())
    }
}
