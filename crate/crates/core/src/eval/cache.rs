//! Value-level memoization of AMI calls and call counters.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::ami::{Assign, Event, RowModel};

/// Canonical key text. `c0` must already be sorted by column.
pub fn key(model: &str, method: &str, c0: &Assign, c1: &Event, extra: &str) -> String {
    let mut k = format!("{model}|{method}|");
    for (i, v) in c0 {
        let _ = write!(k, "{i}={v:?};");
    }
    let _ = write!(k, "|{:?}|{extra}", c1.rects);
    k
}

#[derive(Clone)]
enum Entry {
    Model(Arc<dyn RowModel>),
    /// `None` is a call that evaluated to Null.
    Scalar(Option<f64>),
}

#[derive(Default)]
pub struct QueryCache {
    map: Mutex<HashMap<String, Entry>>,
}

impl QueryCache {
    pub fn model(&self, k: &str) -> Option<Arc<dyn RowModel>> {
        match self.map.lock().unwrap().get(k) {
            Some(Entry::Model(m)) => Some(m.clone()),
            _ => None,
        }
    }

    pub fn put_model(&self, k: String, m: Arc<dyn RowModel>) {
        self.map.lock().unwrap().insert(k, Entry::Model(m));
    }

    pub fn scalar(&self, k: &str) -> Option<Option<f64>> {
        match self.map.lock().unwrap().get(k) {
            Some(Entry::Scalar(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn put_scalar(&self, k: String, x: Option<f64>) {
        self.map.lock().unwrap().insert(k, Entry::Scalar(x));
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct Stats {
    pub site_executions: AtomicU64,
    /// simulate/logpdf/prob/MI invocations that reached a backend.
    pub backend_calls: AtomicU64,
    pub conditionings: AtomicU64,
    pub cache_hits: AtomicU64,
    pub dropped_conditions: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatsSnapshot {
    pub site_executions: u64,
    pub backend_calls: u64,
    pub conditionings: u64,
    pub cache_hits: u64,
    pub dropped_conditions: u64,
}

impl Stats {
    pub fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            site_executions: g(&self.site_executions),
            backend_calls: g(&self.backend_calls),
            conditionings: g(&self.conditionings),
            cache_hits: g(&self.cache_hits),
            dropped_conditions: g(&self.dropped_conditions),
        }
    }
}
