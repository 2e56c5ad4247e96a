//! Byte-bounded append log with hysteresis between a hard cap and a soft
//! trim target.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SoftLogError {
    #[error("hard cap must be positive")]
    ZeroCap,
    #[error("soft ratio {0} is outside (0, 1]")]
    BadRatio(f64),
}

/// Entries are kept oldest first. Once an append pushes the total above the
/// hard cap, the oldest entries are dropped until the total is at most
/// `max(floor(ratio * cap), newest length)`. The newest entry is never
/// dropped. Single writer.
#[derive(Clone, Debug)]
pub struct SoftCappedLog {
    entries: VecDeque<String>,
    hard_cap_bytes: usize,
    soft_ratio: f64,
    total_bytes: usize,
}

impl SoftCappedLog {
    pub fn new(hard_cap_bytes: usize, soft_ratio: f64) -> Result<Self, SoftLogError> {
        if hard_cap_bytes == 0 {
            return Err(SoftLogError::ZeroCap);
        }
        if !(soft_ratio > 0.0 && soft_ratio <= 1.0) {
            return Err(SoftLogError::BadRatio(soft_ratio));
        }
        Ok(SoftCappedLog {
            entries: VecDeque::new(),
            hard_cap_bytes,
            soft_ratio,
            total_bytes: 0,
        })
    }

    pub fn hard_cap_bytes(&self) -> usize {
        self.hard_cap_bytes
    }

    /// `floor(ratio * cap)`.
    pub fn soft_target_bytes(&self) -> usize {
        (self.soft_ratio * self.hard_cap_bytes as f64).floor() as usize
    }

    /// Appends `entry` and enforces the cap. Returns how many old entries
    /// were trimmed.
    pub fn append(&mut self, entry: impl Into<String>) -> usize {
        let entry = entry.into();
        let newest = entry.len();
        self.total_bytes += newest;
        self.entries.push_back(entry);

        let mut trimmed = 0;
        if self.total_bytes > self.hard_cap_bytes {
            let target = self.soft_target_bytes().max(newest);
            while self.total_bytes > target && self.entries.len() > 1 {
                let old = self.entries.pop_front().expect("more than one entry");
                self.total_bytes -= old.len();
                trimmed += 1;
            }
        }
        debug_assert_eq!(self.total_bytes, self.entries.iter().map(String::len).sum::<usize>());
        trimmed
    }

    /// `(entry count, total bytes)`.
    pub fn stats(&self) -> (usize, usize) {
        (self.entries.len(), self.total_bytes)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bytes
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn newest(&self) -> Option<&str> {
        self.entries.back().map(String::as_str)
    }
}
