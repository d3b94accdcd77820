use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
    /// Target entropy at `s`, cached when the transition was collected.
    pub h_target: f64,
}

/// Columnar view of sampled transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub s: Mat,
    pub a: Mat,
    pub r: Vec<f64>,
    pub s2: Mat,
    pub done: Vec<bool>,
    pub h_target: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let n = ts.len();
        let d = ts.first().map_or(0, |t| t.s.len());
        let da = ts.first().map_or(0, |t| t.a.len());
        Self {
            s: Mat::from_shape_fn((n, d), |(i, k)| ts[i].s[k]),
            a: Mat::from_shape_fn((n, da), |(i, k)| ts[i].a[k]),
            r: ts.iter().map(|t| t.r).collect(),
            s2: Mat::from_shape_fn((n, d), |(i, k)| ts[i].s2[k]),
            done: ts.iter().map(|t| t.done).collect(),
            h_target: ts.iter().map(|t| t.h_target).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Fixed-capacity ring; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample without replacement of `min(n, len)` transitions.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Batch {
        let n = n.min(self.items.len());
        let idx = sample(rng, self.items.len(), n);
        let picked: Vec<&Transition> = idx.iter().map(|i| &self.items[i]).collect();
        Batch::from_transitions(&picked)
    }
}
