//! N-arm top-M evaluation, seeded multi-run aggregation and the experiment
//! drivers behind the command line.

mod config;
mod experiments;
mod plot;

pub use config::{ConfigFile, ExperimentConfig, PolicySpec, CONFIG_KEYS};
pub use experiments::{
    arm_types, evaluate_config, evaluate_networks, learning_curve, load_networks, noisy_sweep, train_arm_types,
    CurveRow, Instance, NoisyRow,
};
pub use plot::plot_curve;

use std::collections::VecDeque;

use crate::arm::{Action, Arm};
use crate::arms::{RecoveringArm, RecoveringState, WirelessParams, WirelessState};
use crate::baselines::{lookahead_policy, size_aware_policy};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, RngStream};

const LABEL_EVAL: u64 = 0x10;

/// Chooses the arms to activate each round.
pub trait Scheduler<S> {
    /// `finished[i]` marks arms in an absorbing state.
    fn select(&mut self, states: &[S], finished: &[bool], m: usize) -> Result<Vec<usize>>;

    /// Called before every run.
    fn start_run(&mut self) {}
}

/// Top-`m` by a per-arm score computed from the arm's own state.
///
/// Finished arms rank below every unfinished one; ties go to the lowest id.
pub struct IndexScheduler<F>(pub F);

impl<S, F> Scheduler<S> for IndexScheduler<F>
where
    F: FnMut(usize, &S) -> Result<f64>,
{
    fn select(&mut self, states: &[S], finished: &[bool], m: usize) -> Result<Vec<usize>> {
        let scores = states
            .iter()
            .enumerate()
            .map(|(i, s)| (self.0)(i, s))
            .collect::<Result<Vec<_>>>()?;
        rank_top_m(&scores, finished, m)
    }
}

pub fn rank_top_m(scores: &[f64], finished: &[bool], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::InvalidArgument(format!("cannot activate {m} of {} arms", scores.len())));
    }
    if let Some(i) = scores.iter().position(|x| x.is_nan()) {
        return Err(Error::NonFinite(format!("index of arm {i} is NaN")));
    }
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| {
        finished[a]
            .cmp(&finished[b])
            .then(scores[b].total_cmp(&scores[a]))
            .then(a.cmp(&b))
    });
    ids.truncate(m);
    Ok(ids)
}

pub struct SizeAwareScheduler {
    pub params: Vec<WirelessParams>,
}

impl Scheduler<WirelessState> for SizeAwareScheduler {
    fn select(&mut self, states: &[WirelessState], _: &[bool], m: usize) -> Result<Vec<usize>> {
        size_aware_policy(states, &self.params, m)
    }
}

/// Plans `d` rounds ahead and executes the whole plan before replanning.
pub struct LookaheadScheduler {
    pub arms: Vec<RecoveringArm>,
    pub depth: usize,
    pub beam_width: usize,
    pending: VecDeque<usize>,
}

impl LookaheadScheduler {
    pub fn new(arms: Vec<RecoveringArm>, depth: usize, beam_width: usize) -> Self {
        Self {
            arms,
            depth,
            beam_width,
            pending: VecDeque::new(),
        }
    }
}

impl Scheduler<RecoveringState> for LookaheadScheduler {
    fn select(&mut self, states: &[RecoveringState], _: &[bool], m: usize) -> Result<Vec<usize>> {
        if self.pending.is_empty() {
            let plan = lookahead_policy(states, &self.arms, m, self.depth, self.beam_width)?;
            self.pending.extend(plan.choices);
        }
        Ok(self.pending.pop_front().into_iter().collect())
    }

    fn start_run(&mut self) {
        self.pending.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub runs: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seed: u64,
    pub record_activations: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            runs: 50,
            horizon: 300,
            discount: 0.99,
            seed: 0,
            record_activations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// `sum_t beta^t sum_i r_i[t]` over all arms, active or not.
    pub total: f64,
    pub per_arm: Vec<f64>,
    pub activations: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<RunRecord>,
}

impl Evaluation {
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,seed,total_reward\n");
        for r in &self.runs {
            out.push_str(&format!("{},{},{}\n", r.run, r.seed, r.total));
        }
        out
    }
}

/// Seed of run `run` under base seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    mix_seed(seed, &[LABEL_EVAL, run as u64])
}

/// Plays `settings.runs` independent runs of `arms` under `policy`.
///
/// Run `k` gives arm `i` the exogenous stream `i` of [`run_seed`], so two
/// policies see the same arrivals and fades. Every arm steps every round;
/// a run ends early once all arms are absorbed.
pub fn evaluate<A, P, I>(
    arms: &[A],
    m: usize,
    mut initial: I,
    policy: &mut P,
    settings: &EvalSettings,
) -> Result<Evaluation>
where
    A: Arm,
    P: Scheduler<A::State> + ?Sized,
    I: FnMut(usize) -> Result<Vec<A::State>>,
{
    if arms.is_empty() || m > arms.len() {
        return Err(Error::InvalidArgument(format!("need 0 <= M <= N with N >= 1, got N={} M={m}", arms.len())));
    }
    if settings.runs == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let n = arms.len();
    let mut runs = Vec::with_capacity(settings.runs);
    for run in 0..settings.runs {
        let seed = run_seed(settings.seed, run);
        let start = initial(run)?;
        if start.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: start.len() });
        }
        let mut sims = arms.to_vec();
        for (sim, s) in sims.iter_mut().zip(start) {
            sim.reset(s)?;
        }
        let mut exo: Vec<RngStream> = (0..n).map(|i| RngStream::new(seed, i as u64)).collect();
        policy.start_run();
        let mut per_arm = vec![0.0; n];
        let mut total = 0.0;
        let mut weight = 1.0;
        let mut log = settings.record_activations.then(Vec::new);
        let mut active = vec![false; n];
        for _ in 0..settings.horizon {
            let finished: Vec<bool> = sims.iter().map(|s| s.is_terminal()).collect();
            if finished.iter().all(|&f| f) {
                break;
            }
            let states: Vec<A::State> = sims.iter().map(|s| s.state()).collect();
            let chosen = policy.select(&states, &finished, m)?;
            active.fill(false);
            for &i in &chosen {
                if i >= n || active[i] {
                    return Err(Error::InvalidState(format!("policy chose invalid arm set {chosen:?}")));
                }
                active[i] = true;
            }
            if chosen.len() > m {
                return Err(Error::InvalidState(format!("policy chose {} arms, budget is {m}", chosen.len())));
            }
            let mut round = 0.0;
            for (i, sim) in sims.iter_mut().enumerate() {
                let out = sim.step(Action::from_active(active[i]), &mut exo[i])?;
                per_arm[i] += weight * out.reward;
                round += out.reward;
            }
            total += weight * round;
            weight *= settings.discount;
            if let Some(l) = log.as_mut() {
                l.push(chosen);
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("total reward of run {run}")));
        }
        runs.push(RunRecord {
            run,
            seed,
            total,
            per_arm,
            activations: log,
        });
    }
    let totals: Vec<f64> = runs.iter().map(|r| r.total).collect();
    let (mean, std) = mean_std(&totals);
    Ok(Evaluation { mean, std, runs })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Kendall rank correlation (tau-b) between two equally long sequences.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = (a[i] - a[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
            let db = (b[i] - b[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => ties_a += 1,
                (_, Equal) => ties_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant + ties_a) as f64;
    let n1 = (concordant + discordant + ties_b) as f64;
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::InvalidArgument("a constant sequence has no ranking".into()));
    }
    Ok((concordant - discordant) as f64 / (n0 * n1).sqrt())
}
