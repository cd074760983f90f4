use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Fixed-capacity FIFO of `(timestamp, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    entries: VecDeque<(f64, f64)>,
    total_seen: u64,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("window capacity must be positive".into()));
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity + 1), total_seen: 0 })
    }

    /// Appends a sample and returns the evicted oldest pair, if any.
    pub fn push(&mut self, t: f64, value: f64) -> Result<Option<(f64, f64)>> {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("timestamp {t} is not finite")));
        }
        if let Some(prev) = self.last_time() {
            if t <= prev {
                return Err(Error::NonIncreasingTime { prev, next: t });
            }
        }
        self.entries.push_back((t, value));
        self.total_seen += 1;
        if self.entries.len() > self.capacity {
            Ok(self.entries.pop_front())
        } else {
            Ok(None)
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Number of samples ever pushed.
    pub fn total_seen(&self) -> u64 {
        self.total_seen
    }

    pub fn last_time(&self) -> Option<f64> {
        self.entries.back().map(|e| e.0)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &(f64, f64)> + '_ {
        self.entries.iter()
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }
}
