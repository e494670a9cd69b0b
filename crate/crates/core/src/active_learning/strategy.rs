//! Document selection strategies and their registry.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// An unjudged document offered to a strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub doc_id: &'a str,
    /// p(hateful | x) under the current model; `None` when the strategy
    /// does not use scores.
    pub probability: Option<f64>,
}

pub trait SelectionStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether candidates must carry model probabilities.
    fn needs_scores(&self) -> bool;

    /// Returns indices into `candidates`, at most `batch_size` of them.
    fn select(&self, candidates: &[Candidate<'_>], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize>;
}

fn probability(c: &Candidate<'_>) -> f64 {
    c.probability.expect("scored candidate")
}

/// Sorts by `key` ascending, breaking ties by ascending doc id.
fn top_by(candidates: &[Candidate<'_>], batch_size: usize, key: impl Fn(&Candidate<'_>) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering {
        let (ca, cb) = (&candidates[*a], &candidates[*b]);
        key(ca).total_cmp(&key(cb)).then_with(|| ca.doc_id.cmp(cb.doc_id))
    };
    if batch_size < order.len() {
        order.select_nth_unstable_by(batch_size, cmp);
        order.truncate(batch_size);
    }
    order.sort_by(cmp);
    order
}

/// Continuous active learning: the documents most likely to be hateful.
pub struct Cal;

impl SelectionStrategy for Cal {
    fn name(&self) -> &'static str {
        "cal"
    }

    fn needs_scores(&self) -> bool {
        true
    }

    fn select(&self, candidates: &[Candidate<'_>], batch_size: usize, _rng: &mut ChaCha8Rng) -> Vec<usize> {
        top_by(candidates, batch_size, |c| -probability(c))
    }
}

/// Simple active learning (uncertainty sampling): probabilities nearest 0.5.
pub struct Sal;

impl SelectionStrategy for Sal {
    fn name(&self) -> &'static str {
        "sal"
    }

    fn needs_scores(&self) -> bool {
        true
    }

    fn select(&self, candidates: &[Candidate<'_>], batch_size: usize, _rng: &mut ChaCha8Rng) -> Vec<usize> {
        top_by(candidates, batch_size, |c| (probability(c) - 0.5).abs())
    }
}

/// Simple passive learning: uniform random documents.
pub struct Spl;

impl SelectionStrategy for Spl {
    fn name(&self) -> &'static str {
        "spl"
    }

    fn needs_scores(&self) -> bool {
        false
    }

    fn select(&self, candidates: &[Candidate<'_>], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        index::sample(rng, candidates.len(), batch_size.min(candidates.len())).into_vec()
    }
}

/// Binary entropy in bits, with 0 · log2(0) taken as 0.
pub fn entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Box<dyn SelectionStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self {
            strategies: BTreeMap::new(),
        };
        r.register(Box::new(Cal));
        r.register(Box::new(Sal));
        r.register(Box::new(Spl));
        r
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, strategy: Box<dyn SelectionStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }

    /// Case-insensitive lookup.
    pub fn get(&self, name: &str) -> Result<&dyn SelectionStrategy> {
        self.strategies
            .get(name.to_ascii_lowercase().as_str())
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "strategy",
                name: name.to_string(),
            })
    }
}
