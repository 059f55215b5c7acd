//! Exact and Monte-Carlo evaluation of the single-arm activation-cost problem.
//!
//! For a finite arm, [`q_values`] runs finite-horizon dynamic programming on
//! the net reward `r - lambda a` and returns the value of forcing each action
//! in the first round then acting optimally. Their difference `D_s(lambda)`
//! is nonnegative exactly when `lambda` is at most the Whittle index of `s`,
//! which [`whittle_index`] finds by bisection.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use crate::arm::{Action, Arm};
use crate::arms::{DeadlineArm, RecoveringArm, WirelessArm};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Explicit reward and transition tables of a finite arm.
///
/// Identical transition rows are stored once, so rows like an arrival law
/// shared by many states cost one expectation per DP sweep.
#[derive(Debug, Clone)]
pub struct ArmModel<S> {
    states: Vec<S>,
    lookup: HashMap<S, usize>,
    rewards: Vec<[f64; 2]>,
    rows: Vec<Vec<(usize, f64)>>,
    row_of: Vec<[usize; 2]>,
}

fn slot(a: Action) -> usize {
    a.is_active() as usize
}

impl<S: Copy + Eq + Hash + Debug> ArmModel<S> {
    /// `kernel(s, a)` returns the expected reward and next-state law.
    pub fn build<F>(states: Vec<S>, mut kernel: F) -> Result<Self>
    where
        F: FnMut(S, Action) -> (f64, Vec<(S, f64)>),
    {
        let lookup: HashMap<S, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        if lookup.len() != states.len() {
            return Err(Error::InvalidArgument("duplicate states in model".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut row_ids: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        let mut rewards = Vec::with_capacity(states.len());
        let mut row_of = Vec::with_capacity(states.len());
        for &s in &states {
            let mut r = [0.0; 2];
            let mut ids = [0; 2];
            for a in [Action::Passive, Action::Active] {
                let (reward, law) = kernel(s, a);
                let mut row = Vec::with_capacity(law.len());
                let mut total = 0.0;
                for (next, p) in law {
                    let j = *lookup.get(&next).ok_or_else(|| {
                        Error::InvalidState(format!("{s:?} --{a:?}--> {next:?} leaves the state space"))
                    })?;
                    total += p;
                    row.push((j, p));
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "transition row of {s:?}/{a:?} sums to {total}"
                    )));
                }
                let key: Vec<(usize, u64)> = row.iter().map(|&(j, p)| (j, p.to_bits())).collect();
                let next_id = rows.len();
                let id = *row_ids.entry(key).or_insert(next_id);
                if id == next_id {
                    rows.push(row);
                }
                r[slot(a)] = reward;
                ids[slot(a)] = id;
            }
            rewards.push(r);
            row_of.push(ids);
        }
        Ok(Self {
            states,
            lookup,
            rewards,
            rows,
            row_of,
        })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.lookup.get(s).copied()
    }

    pub fn reward(&self, i: usize, a: Action) -> f64 {
        self.rewards[i][slot(a)]
    }

    /// Transition law of `(state i, a)` as `(state index, probability)`.
    pub fn transitions(&self, i: usize, a: Action) -> &[(usize, f64)] {
        &self.rows[self.row_of[i][slot(a)]]
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.rewards
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }
}

/// Arms whose state space can be enumerated.
pub trait FiniteArm: Arm {
    fn model(&self) -> Result<ArmModel<Self::State>>;
}

impl FiniteArm for DeadlineArm {
    fn model(&self) -> Result<ArmModel<Self::State>> {
        let p = self.params().clone();
        let arrivals = p.arrival_law();
        ArmModel::build(p.states(), |s, a| {
            let (reward, next) = p.kernel(s, a);
            let law = match next {
                Some(n) => vec![(n, 1.0)],
                None => arrivals.clone(),
            };
            (reward, law)
        })
    }
}

impl FiniteArm for RecoveringArm {
    fn model(&self) -> Result<ArmModel<Self::State>> {
        ArmModel::build(self.states(), |s, a| {
            let (reward, next) = self.kernel(s, a);
            (reward, vec![(next, 1.0)])
        })
    }
}

impl FiniteArm for WirelessArm {
    fn model(&self) -> Result<ArmModel<Self::State>> {
        Err(Error::Unsupported(
            "the wireless arm has about 2e6 states; use Monte-Carlo estimates".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpSettings {
    pub discount: f64,
    pub horizon: usize,
}

impl Default for DpSettings {
    fn default() -> Self {
        Self {
            discount: 0.99,
            horizon: 300,
        }
    }
}

impl DpSettings {
    fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidArgument(format!("discount {} outside (0, 1)", self.discount)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QValues {
    pub lambda: f64,
    pub q_act: Vec<f64>,
    pub q_pass: Vec<f64>,
    /// Bound on the gap to the infinite-horizon values:
    /// `beta^T (r_max + |lambda|) / (1 - beta)`.
    pub truncation_bound: f64,
}

impl QValues {
    pub fn d(&self, i: usize) -> f64 {
        self.q_act[i] - self.q_pass[i]
    }
}

/// Time-indexed optimal actions from a DP sweep.
#[derive(Debug, Clone)]
pub struct DpPolicy<S> {
    lookup: HashMap<S, usize>,
    active: Vec<Vec<bool>>,
}

impl<S: Copy + Eq + Hash> DpPolicy<S> {
    /// Optimal action in round `t` (0 = first round).
    pub fn action(&self, s: &S, t: usize) -> Action {
        let row = &self.active[t.min(self.active.len() - 1)];
        Action::from_active(self.lookup.get(s).is_some_and(|&i| row[i]))
    }
}

fn sweep<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    lambda: f64,
    dp: &DpSettings,
    mut record: Option<&mut Vec<Vec<bool>>>,
) -> QValues {
    let n = model.len();
    let beta = dp.discount;
    let mut next = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut ev = vec![0.0; model.rows.len()];
    let mut q_act = vec![0.0; n];
    let mut q_pass = vec![0.0; n];
    if let Some(r) = record.as_deref_mut() {
        r.clear();
        r.resize(dp.horizon, vec![false; n]);
    }
    for t in (0..dp.horizon).rev() {
        for (e, row) in ev.iter_mut().zip(&model.rows) {
            *e = row.iter().map(|&(j, p)| p * next[j]).sum();
        }
        for i in 0..n {
            let [rp, ra] = model.rewards[i];
            let [wp, wa] = model.row_of[i];
            let qa = ra - lambda + beta * ev[wa];
            let qp = rp + beta * ev[wp];
            cur[i] = qa.max(qp);
            if let Some(r) = record.as_deref_mut() {
                r[t][i] = qa >= qp;
            }
            if t == 0 {
                q_act[i] = qa;
                q_pass[i] = qp;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let (lo, hi) = model.reward_range();
    let r_max = lo.abs().max(hi.abs()) + lambda.abs();
    QValues {
        lambda,
        q_act,
        q_pass,
        truncation_bound: beta.powi(dp.horizon as i32) * r_max / (1.0 - beta),
    }
}

/// Values of forcing activation / rest in the first round, then acting
/// optimally, for every state of `model`.
pub fn q_values<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    lambda: f64,
    dp: &DpSettings,
) -> Result<QValues> {
    dp.validate()?;
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {lambda} is not finite")));
    }
    Ok(sweep(model, lambda, dp, None))
}

/// Like [`q_values`] but also returns the optimal time-indexed policy.
pub fn solve<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    lambda: f64,
    dp: &DpSettings,
) -> Result<(QValues, DpPolicy<S>)> {
    dp.validate()?;
    let mut table = Vec::new();
    let q = sweep(model, lambda, dp, Some(&mut table));
    Ok((
        q,
        DpPolicy {
            lookup: model.lookup.clone(),
            active: table,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub q_act: f64,
    pub q_pass: f64,
    pub se_act: f64,
    pub se_pass: f64,
}

/// Monte-Carlo estimates of `Q_act(s)` and `Q_pass(s)`.
///
/// Each rollout forces the first action and then follows `continuation`
/// (called with the state and the round number). Both branches of a rollout
/// replay the same exogenous stream.
#[allow(clippy::too_many_arguments)]
pub fn mc_q_values<A, P>(
    arm: &A,
    start: A::State,
    lambda: f64,
    dp: &DpSettings,
    rollouts: usize,
    seed: u64,
    continuation: P,
) -> Result<McEstimate>
where
    A: Arm,
    P: Fn(&A::State, usize) -> Action,
{
    dp.validate()?;
    if rollouts < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rollouts, got {rollouts}")));
    }
    let mut sim = arm.clone();
    let mut branch = |first: Action, exo: &mut RngStream| -> Result<f64> {
        sim.reset(start)?;
        let mut total = 0.0;
        let mut w = 1.0;
        for t in 0..dp.horizon {
            if sim.is_terminal() {
                break;
            }
            let a = if t == 0 { first } else { continuation(&sim.state(), t) };
            let out = sim.step(a, exo)?;
            total += w * (out.reward - lambda * a.indicator());
            w *= dp.discount;
        }
        Ok(total)
    };
    let mut acts = Vec::with_capacity(rollouts);
    let mut passes = Vec::with_capacity(rollouts);
    for k in 0..rollouts {
        let exo = RngStream::new(seed, k as u64);
        acts.push(branch(Action::Active, &mut exo.clone())?);
        passes.push(branch(Action::Passive, &mut exo.clone())?);
    }
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (q_act, se_act) = stats(&acts);
    let (q_pass, se_pass) = stats(&passes);
    Ok(McEstimate {
        q_act,
        q_pass,
        se_act,
        se_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexEstimate {
    pub index: f64,
    /// `D_s` evaluated at the returned index.
    pub residual: f64,
    pub evaluations: usize,
}

/// Whittle index of state `i` by bisection on `D_s(lambda) = 0`.
///
/// The bracket starts at the reward range and is widened by doubling until
/// `D_s(lo) > 0 > D_s(hi)`. Any evaluation that breaks the decreasing sign
/// pattern is reported as an indexability violation.
pub fn whittle_index<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    i: usize,
    dp: &DpSettings,
    tol: f64,
) -> Result<IndexEstimate> {
    dp.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let state = model.states[i];
    let violation = |detail: String| Error::IndexabilityViolation {
        state: format!("{state:?}"),
        detail,
    };
    let mut evaluations = 0;
    let mut d_at = |lambda: f64| {
        evaluations += 1;
        sweep(model, lambda, dp, None).d(i)
    };
    const SLACK: f64 = 1e-9;
    const MAX_WIDEN: usize = 64;

    let (r_lo, r_hi) = model.reward_range();
    let mut width = (r_hi - r_lo).max(1.0);
    let mut lo = r_lo;
    let mut d_lo = d_at(lo);
    let mut widen = 0;
    while d_lo <= 0.0 {
        let next = lo - width;
        let d_next = d_at(next);
        if d_next < d_lo - SLACK {
            return Err(violation(format!("D({next}) = {d_next} < D({lo}) = {d_lo}")));
        }
        lo = next;
        d_lo = d_next;
        width *= 2.0;
        widen += 1;
        if widen > MAX_WIDEN {
            return Err(violation("D stays nonpositive as lambda decreases".into()));
        }
    }
    let mut width = (r_hi - r_lo).max(1.0);
    let mut hi = r_hi.max(lo + width);
    let mut d_hi = d_at(hi);
    widen = 0;
    while d_hi >= 0.0 {
        let next = hi + width;
        let d_next = d_at(next);
        if d_next > d_hi + SLACK {
            return Err(violation(format!("D({next}) = {d_next} > D({hi}) = {d_hi}")));
        }
        hi = next;
        d_hi = d_next;
        width *= 2.0;
        widen += 1;
        if widen > MAX_WIDEN {
            return Err(violation("D stays nonnegative as lambda increases".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let d = d_at(mid);
        if d > d_lo + SLACK || d < d_hi - SLACK {
            return Err(violation(format!(
                "D({mid}) = {d} outside [D({hi}), D({lo})] = [{d_hi}, {d_lo}]"
            )));
        }
        if d >= 0.0 {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
            d_hi = d;
        }
    }
    let index = 0.5 * (lo + hi);
    let residual = d_at(index);
    Ok(IndexEstimate {
        index,
        residual,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable<S> {
    pub states: Vec<S>,
    pub estimates: Vec<IndexEstimate>,
}

impl<S: Copy + Eq + Hash + Debug> IndexTable<S> {
    pub fn index(&self, s: &S) -> Option<f64> {
        self.states.iter().position(|x| x == s).map(|i| self.estimates[i].index)
    }

    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.index).collect()
    }

    /// Hash-map view for per-round lookups.
    pub fn to_map(&self) -> HashMap<S, f64> {
        self.states.iter().copied().zip(self.values()).collect()
    }

    pub fn to_csv<A: Arm<State = S>>(&self, arm: &A) -> String {
        let mut out = arm.coord_names().join(",");
        out.push_str(",whittle_index\n");
        for (s, e) in self.states.iter().zip(&self.estimates) {
            for c in arm.coords(s) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{}\n", e.index));
        }
        out
    }
}

pub fn index_table<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    dp: &DpSettings,
    tol: f64,
) -> Result<IndexTable<S>> {
    let estimates = (0..model.len())
        .map(|i| whittle_index(model, i, dp, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(IndexTable {
        states: model.states.clone(),
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsCurve<S> {
    pub state: S,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("lambda grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `lo, lo + step, ...` up to and including `hi` (within half a step).
pub fn lambda_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 0.5).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

/// `D_s(lambda)` over `grid` for every state, one DP sweep per grid point.
pub fn ds_curves<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    grid: &[f64],
    dp: &DpSettings,
) -> Result<Vec<DsCurve<S>>> {
    check_grid(grid)?;
    dp.validate()?;
    let mut curves: Vec<DsCurve<S>> = model
        .states
        .iter()
        .map(|&s| DsCurve {
            state: s,
            lambdas: grid.to_vec(),
            values: Vec::with_capacity(grid.len()),
        })
        .collect();
    for &lambda in grid {
        let q = sweep(model, lambda, dp, None);
        for (i, c) in curves.iter_mut().enumerate() {
            c.values.push(q.d(i));
        }
    }
    Ok(curves)
}

pub fn ds_curves_csv<A: Arm>(arm: &A, curves: &[DsCurve<A::State>]) -> String {
    let mut out = arm.coord_names().join(",");
    out.push_str(",lambda,d_s\n");
    for c in curves {
        let coords: Vec<String> = arm.coords(&c.state).iter().map(|x| x.to_string()).collect();
        let prefix = coords.join(",");
        for (l, d) in c.lambdas.iter().zip(&c.values) {
            out.push_str(&format!("{prefix},{l},{d}\n"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation<S> {
    pub state: S,
    pub lambda: f64,
    pub next_lambda: f64,
    pub d: f64,
    pub next_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexabilityReport<S> {
    pub states: usize,
    pub grid_points: usize,
    pub margin: f64,
    pub violations: Vec<Violation<S>>,
}

impl<S> IndexabilityReport<S> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `D_s(next) < D_s(prev) - margin` on every consecutive grid pair of
/// every state.
pub fn strong_indexability_check<S: Copy + Eq + Hash + Debug>(
    model: &ArmModel<S>,
    grid: &[f64],
    dp: &DpSettings,
    margin: f64,
) -> Result<IndexabilityReport<S>> {
    let curves = ds_curves(model, grid, dp)?;
    let mut violations = Vec::new();
    for c in &curves {
        for k in 0..c.values.len().saturating_sub(1) {
            if !(c.values[k + 1] < c.values[k] - margin) {
                violations.push(Violation {
                    state: c.state,
                    lambda: c.lambdas[k],
                    next_lambda: c.lambdas[k + 1],
                    d: c.values[k],
                    next_d: c.values[k + 1],
                });
            }
        }
    }
    Ok(IndexabilityReport {
        states: model.len(),
        grid_points: grid.len(),
        margin,
        violations,
    })
}
