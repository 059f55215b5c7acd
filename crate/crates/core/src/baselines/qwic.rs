use std::collections::HashMap;

use crate::arm::Action;
use crate::error::{Error, Result};
use crate::oracle::FiniteArm;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct QwicConfig {
    /// Candidate activation costs, sorted ascending.
    pub candidates: Vec<f64>,
    pub learning_rate: f64,
    pub discount: f64,
    pub horizon: usize,
    /// Training episodes per candidate.
    pub episodes: usize,
    pub seed: u64,
}

impl QwicConfig {
    pub fn new(candidates: Vec<f64>, episodes: usize, seed: u64) -> Self {
        Self {
            candidates,
            learning_rate: 0.001,
            discount: 0.99,
            horizon: 300,
            episodes,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidArgument("candidate set is empty".into()));
        }
        if self.candidates.iter().any(|x| !x.is_finite()) || self.candidates.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("candidates must be finite and sorted".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("need 0 < discount < 1 and a positive learning rate".into()));
        }
        Ok(())
    }
}

/// `n` evenly spaced values from the smallest to the largest of `indices`.
pub fn default_candidates(indices: &[f64], n: usize) -> Vec<f64> {
    let lo = indices.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = indices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n <= 1 || !(hi > lo) {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Learned `Q(lambda, s, a)` for every candidate, state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct QwicTable<S> {
    pub candidates: Vec<f64>,
    pub states: Vec<S>,
    /// `q[k][i][a]` for candidate `k`, state `i`, action `a` (0 = passive).
    pub q: Vec<Vec<[f64; 2]>>,
}

impl<S: Copy + Eq + std::hash::Hash> QwicTable<S> {
    /// Candidate minimizing `|Q(lambda, s, 1) - Q(lambda, s, 0)|`, ties to
    /// the smaller candidate.
    pub fn estimate(&self, i: usize) -> f64 {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (k, q) in self.q.iter().enumerate() {
            let g = (q[i][1] - q[i][0]).abs();
            if g < gap {
                gap = g;
                best = k;
            }
        }
        self.candidates[best]
    }

    pub fn index_map(&self) -> HashMap<S, f64> {
        self.states.iter().enumerate().map(|(i, s)| (*s, self.estimate(i))).collect()
    }
}

/// Tabular epsilon-greedy Q-learning on the activation-cost arm, one table
/// per candidate, with `epsilon = min(1, 2 / sqrt(t))`.
pub fn qwic_train<A: FiniteArm>(arm: &A, config: &QwicConfig) -> Result<QwicTable<A::State>> {
    config.validate()?;
    let states = arm.model()?.states().to_vec();
    let lookup: HashMap<A::State, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut sim = arm.clone();
    let mut q = Vec::with_capacity(config.candidates.len());
    for (k, &lambda) in config.candidates.iter().enumerate() {
        let mut table = vec![[0.0f64; 2]; states.len()];
        let mut explore = RngStream::derived(config.seed, &[k as u64], 0);
        let mut exo = RngStream::derived(config.seed, &[k as u64], 1);
        let mut t = 0u64;
        for _ in 0..config.episodes {
            let start = sim.sample_initial(&mut explore);
            sim.reset(start)?;
            let mut s = lookup[&start];
            for _ in 0..config.horizon {
                t += 1;
                let eps = (2.0 / (t as f64).sqrt()).min(1.0);
                let active = if explore.uniform() < eps {
                    explore.bernoulli(0.5)
                } else {
                    table[s][1] > table[s][0]
                };
                let a = Action::from_active(active);
                let out = sim.step(a, &mut exo)?;
                let next = *lookup
                    .get(&out.next_state)
                    .ok_or_else(|| Error::InvalidState(format!("{:?} not enumerated", out.next_state)))?;
                let target = out.reward - lambda * a.indicator() + config.discount * table[next][0].max(table[next][1]);
                let slot = &mut table[s][active as usize];
                *slot += config.learning_rate * (target - *slot);
                s = next;
            }
        }
        if table.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("Q table for lambda={lambda}")));
        }
        q.push(table);
    }
    Ok(QwicTable {
        candidates: config.candidates.clone(),
        states,
        q,
    })
}
