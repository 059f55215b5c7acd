//! Mini-batch REINFORCE training of an index network against the
//! soft-gated, activation-charged single-arm environment.
//!
//! Each mini-batch draws two start states `s0`, `s1`, fixes the activation
//! cost to the network's current estimate `f(s0)`, and plays `R` episodes
//! from `s1`. All episodes of a batch share one exogenous stream (arrivals,
//! channel fades) and differ only in their action draws. The update is one
//! Adam ascent step along `sum_e (G_e - mean G) h_e`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::arm::{env_star_step, Arm};
use crate::arms::EnvKind;
use crate::error::{Error, Result};
use crate::nn::{log_prob_slope, AdamState, Checkpoint, GradientVector, Mlp};
use crate::rng::{mix_seed, RngStream};

const LABEL_INIT: u64 = 0x1;
const LABEL_STATES: u64 = 0x2;
const LABEL_EXO: u64 = 0x3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub discount: f64,
    pub learning_rate: f64,
    /// Mini-batch `b` uses `learning_rate / (1 + lr_decay * b)`.
    pub lr_decay: f64,
    pub sigmoid_m: f64,
    pub batch_size: usize,
    pub horizon: usize,
    pub episodes: u64,
    pub checkpoint_interval: u64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::for_env(EnvKind::Deadline)
    }
}

impl TrainingConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        let (sigmoid_m, episodes, checkpoint_interval) = match kind {
            EnvKind::Deadline => (1.0, 2_000, 10),
            EnvKind::Recovering => (5.0, 30_000, 100),
            EnvKind::Wireless => (0.75, 30_000, 1_000),
        };
        Self {
            discount: 0.99,
            learning_rate: 0.001,
            lr_decay: 0.0,
            sigmoid_m,
            batch_size: 5,
            horizon: 300,
            episodes,
            checkpoint_interval,
            hidden: vec![16, 32],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} outside (0, 1)", self.discount));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return bad(format!("lr decay {} must be nonnegative", self.lr_decay));
        }
        if !(self.sigmoid_m > 0.0 && self.sigmoid_m.is_finite()) {
            return bad(format!("sigmoid sensitivity {} must be positive", self.sigmoid_m));
        }
        if self.batch_size < 2 {
            return bad(format!("mini-batch size {} must be at least 2", self.batch_size));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.checkpoint_interval < 1 {
            return bad("checkpoint interval must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden sizes {:?} must be positive", self.hidden));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }

    /// FNV-1a over the debug rendering; stable across builds.
    pub fn hash(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace<S> {
    pub states: Vec<S>,
    pub actions: Vec<crate::arm::Action>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult<S> {
    /// Discounted net reward `sum_t beta^t (r[t] - lambda a[t])`.
    pub discounted_return: f64,
    /// Accumulated `grad ln P(a[t])` over the episode.
    pub grad: GradientVector,
    pub trace: Option<EpisodeTrace<S>>,
}

/// Plays one episode of the soft-gated environment from `start`.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<A: Arm>(
    net: &Mlp,
    arm: &mut A,
    lambda: f64,
    start: A::State,
    config: &TrainingConfig,
    exo: &mut RngStream,
    actions: &mut RngStream,
    record: bool,
) -> Result<EpisodeResult<A::State>> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite(format!("activation cost {lambda}")));
    }
    if arm.feature_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: arm.feature_dim(),
        });
    }
    arm.reset(start)?;
    let mut ws = net.workspace();
    let mut input = vec![0.0; arm.feature_dim()];
    let mut grad = GradientVector::zeros(net.len());
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut trace = record.then(|| EpisodeTrace {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
    });

    for t in 0..config.horizon {
        if arm.is_terminal() {
            break;
        }
        let state = arm.state();
        arm.features(&state, &mut input);
        let f = net.forward_ws(&input, &mut ws);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("index estimate at round {t}, state {state:?}")));
        }
        let out = env_star_step(arm, f, lambda, config.sigmoid_m, actions, exo)?;
        let slope = log_prob_slope(f, lambda, config.sigmoid_m, out.action);
        net.accumulate_grad(&mut ws, slope, &mut grad.0);
        total += weight * out.net_reward;
        weight *= config.discount;
        if let Some(tr) = trace.as_mut() {
            tr.states.push(state);
            tr.actions.push(out.action);
            tr.rewards.push(out.raw_reward);
        }
    }
    if !total.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("episode return or gradient".into()));
    }
    Ok(EpisodeResult {
        discounted_return: total,
        grad,
        trace,
    })
}

/// What a mini-batch is played against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinibatchPlan<S> {
    pub index: u64,
    pub lambda: f64,
    pub cost_state: S,
    pub start: S,
    pub exo_seed: u64,
}

impl<S> MinibatchPlan<S> {
    /// Exogenous stream shared by every episode of the batch.
    pub fn exo_stream(&self) -> RngStream {
        RngStream::new(self.exo_seed, 0)
    }

    /// Action stream private to episode `e`.
    pub fn action_stream(&self, e: usize) -> RngStream {
        RngStream::new(self.exo_seed, 1 + e as u64)
    }
}

pub fn plan_minibatch<A: Arm>(
    net: &Mlp,
    arm: &A,
    config: &TrainingConfig,
    index: u64,
) -> Result<MinibatchPlan<A::State>> {
    let mut rng = RngStream::derived(config.seed, &[LABEL_STATES, index], 0);
    let cost_state = arm.sample_initial(&mut rng);
    let start = arm.sample_initial(&mut rng);
    let lambda = net.forward(&arm.feature_vec(&cost_state))?;
    if !lambda.is_finite() {
        return Err(Error::NonFinite(format!("index estimate at {cost_state:?}")));
    }
    Ok(MinibatchPlan {
        index,
        lambda,
        cost_state,
        start,
        exo_seed: mix_seed(config.seed, &[LABEL_EXO, index]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchReport<S> {
    pub plan: MinibatchPlan<S>,
    pub returns: Vec<f64>,
    pub mean_return: f64,
}

/// Baseline-centred aggregate `sum_e (G_e - mean) h_e` and the mean.
///
/// The mean is taken as `G_0 + mean(G_e - G_0)` so identical returns give an
/// exactly zero aggregate.
pub fn aggregate_gradient<S>(episodes: &[EpisodeResult<S>]) -> (GradientVector, f64) {
    let len = episodes.first().map_or(0, |e| e.grad.len());
    let mut agg = GradientVector::zeros(len);
    if episodes.is_empty() {
        return (agg, 0.0);
    }
    let g0 = episodes[0].discounted_return;
    let shift: f64 = episodes.iter().map(|e| e.discounted_return - g0).sum::<f64>() / episodes.len() as f64;
    let mean = g0 + shift;
    for e in episodes {
        let w = e.discounted_return - mean;
        if w != 0.0 {
            agg.add_scaled(&e.grad, w);
        }
    }
    (agg, mean)
}

/// Plays `episodes` episodes of mini-batch `index` and applies one ascent step.
pub fn run_minibatch<A: Arm>(
    net: &mut Mlp,
    adam: &mut AdamState,
    arm: &mut A,
    config: &TrainingConfig,
    index: u64,
    episodes: usize,
) -> Result<MinibatchReport<A::State>> {
    let plan = plan_minibatch(net, arm, config, index)?;
    let mut results = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut exo = plan.exo_stream();
        let mut act = plan.action_stream(e);
        results.push(run_episode(net, arm, plan.lambda, plan.start, config, &mut exo, &mut act, false)?);
    }
    let (grad, mean_return) = aggregate_gradient(&results);
    adam.learning_rate = config.learning_rate / (1.0 + config.lr_decay * index as f64);
    adam.ascent(net, &grad)?;
    Ok(MinibatchReport {
        plan,
        returns: results.iter().map(|r| r.discounted_return).collect(),
        mean_return,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub minibatch: u64,
    pub episodes: u64,
    pub lambda: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<LogRow>,
}

impl TrainingOutcome {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training always emits a checkpoint")
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("minibatch,episode,lambda,G_bar\n");
        for r in &self.log {
            let _ = writeln!(out, "{},{},{},{}", r.minibatch, r.episodes, r.lambda, r.mean_return);
        }
        out
    }

    /// Writes `training_log.csv` and every `ckpt_<episodes>.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join("training_log.csv");
        fs::write(&log, self.log_csv()).map_err(|e| Error::io(&log, e))?;
        for c in &self.checkpoints {
            c.save(&dir.join(Checkpoint::file_name(c.episodes)))?;
        }
        Ok(())
    }
}

/// Trains a fresh network on copies of `arm`.
///
/// Emits a checkpoint each time the episode count reaches a multiple of the
/// checkpoint interval, plus a final one if training stops between
/// multiples. Zero episodes yields the initialization alone.
pub fn train<A: Arm>(arm: &A, config: &TrainingConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    let sizes = config.layer_sizes(arm.feature_dim());
    let mut net = Mlp::init(&sizes, &mut RngStream::derived(config.seed, &[LABEL_INIT], 0))?;
    let mut adam = AdamState::new(net.len(), config.learning_rate);
    let mut arm = arm.clone();
    let hash = config.hash();
    let snapshot = |net: &Mlp, episodes| Checkpoint {
        net: net.clone(),
        episodes,
        config_hash: Some(hash),
    };

    let mut checkpoints = Vec::new();
    let mut log = Vec::new();
    if config.episodes == 0 {
        checkpoints.push(snapshot(&net, 0));
        return Ok(TrainingOutcome { checkpoints, log });
    }

    let mut done = 0u64;
    let mut next_ckpt = config.checkpoint_interval;
    let mut batch = 0u64;
    while done < config.episodes {
        let n = (config.episodes - done).min(config.batch_size as u64) as usize;
        let report = run_minibatch(&mut net, &mut adam, &mut arm, config, batch, n)?;
        done += n as u64;
        log.push(LogRow {
            minibatch: batch,
            episodes: done,
            lambda: report.plan.lambda,
            mean_return: report.mean_return,
        });
        if done >= next_ckpt {
            checkpoints.push(snapshot(&net, done));
            while next_ckpt <= done {
                next_ckpt += config.checkpoint_interval;
            }
        }
        batch += 1;
    }
    if checkpoints.last().map(|c| c.episodes) != Some(done) {
        checkpoints.push(snapshot(&net, done));
    }
    Ok(TrainingOutcome { checkpoints, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::Action;
    use crate::arms::{DeadlineArm, DeadlineState, RecoveringArm, RecoveringClass, RecoveringState};

    fn small(kind: EnvKind) -> TrainingConfig {
        TrainingConfig {
            seed: 3,
            ..TrainingConfig::for_env(kind)
        }
    }

    #[test]
    fn closed_gate_collects_passive_rewards_only() {
        let config = TrainingConfig {
            sigmoid_m: 1e6,
            ..small(EnvKind::Deadline)
        };
        let net = Mlp::zeros(&[2, 16, 32, 1]).unwrap(); // f = 0
        let lambda = 5.0;
        let mut arm = DeadlineArm::default();
        let start = DeadlineState::new(1, 3);
        let res = run_episode(
            &net,
            &mut arm,
            lambda,
            start,
            &config,
            &mut RngStream::new(1, 0),
            &mut RngStream::new(1, 1),
            true,
        )
        .unwrap();
        let trace = res.trace.unwrap();
        assert!(trace.actions.iter().all(|a| *a == Action::Passive));
        // Replay the same exogenous stream passively.
        let mut replay = DeadlineArm::default();
        replay.reset(start).unwrap();
        let mut exo = RngStream::new(1, 0);
        let expected: f64 = (0..config.horizon)
            .map(|t| 0.99f64.powi(t as i32) * replay.step(Action::Passive, &mut exo).unwrap().reward)
            .sum();
        assert!((res.discounted_return - expected).abs() < 1e-9);
    }

    #[test]
    fn passive_recovering_returns_zero() {
        let config = TrainingConfig {
            sigmoid_m: 1e6,
            ..small(EnvKind::Recovering)
        };
        let net = Mlp::zeros(&[1, 16, 32, 1]).unwrap();
        let mut arm = RecoveringArm::new(RecoveringClass::A.params(), 20).unwrap();
        let res = run_episode(
            &net,
            &mut arm,
            2.0,
            RecoveringState(4),
            &config,
            &mut RngStream::new(0, 0),
            &mut RngStream::new(0, 1),
            false,
        )
        .unwrap();
        assert_eq!(res.discounted_return, 0.0);
    }

    #[test]
    fn episode_is_deterministic() {
        let config = small(EnvKind::Deadline);
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(8, 0)).unwrap();
        let play = || {
            let mut arm = DeadlineArm::default();
            run_episode(
                &net,
                &mut arm,
                0.4,
                DeadlineState::new(7, 4),
                &config,
                &mut RngStream::new(2, 0),
                &mut RngStream::new(2, 1),
                true,
            )
            .unwrap()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn identical_returns_cancel() {
        let mk = |g: f64, v: f64| EpisodeResult::<()> {
            discounted_return: g,
            grad: GradientVector(vec![v, -v]),
            trace: None,
        };
        let eps: Vec<_> = (0..5).map(|k| mk(0.1 + 0.2, k as f64)).collect();
        let (agg, mean) = aggregate_gradient(&eps);
        assert_eq!(mean, 0.1 + 0.2);
        assert!(agg.0.iter().all(|&x| x == 0.0));

        let mut net = Mlp::init(&[1, 2, 1], &mut RngStream::new(0, 0)).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(net.len(), 0.001);
        let zero = GradientVector::zeros(net.len());
        adam.ascent(&mut net, &zero).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn two_episode_direction() {
        let h1 = GradientVector(vec![1.0, 2.0, -1.0]);
        let h2 = GradientVector(vec![0.5, -1.0, 3.0]);
        let (g1, g2) = (4.0, 1.0);
        let eps = vec![
            EpisodeResult::<()> {
                discounted_return: g1,
                grad: h1.clone(),
                trace: None,
            },
            EpisodeResult::<()> {
                discounted_return: g2,
                grad: h2.clone(),
                trace: None,
            },
        ];
        let (agg, _) = aggregate_gradient(&eps);
        for i in 0..3 {
            let expected = (g1 - g2) * (h1.0[i] - h2.0[i]) / 2.0;
            assert!((agg.0[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_centering() {
        let config = small(EnvKind::Deadline);
        let mut net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(1, 0)).unwrap();
        let mut adam = AdamState::new(net.len(), 0.001);
        let mut arm = DeadlineArm::default();
        for b in 0..10 {
            let r = run_minibatch(&mut net, &mut adam, &mut arm, &config, b, 5).unwrap();
            let centred: f64 = r.returns.iter().map(|g| g - r.mean_return).sum();
            assert!(centred.abs() < 1e-9);
        }
    }

    #[test]
    fn minibatch_shares_cost_and_start() {
        let config = small(EnvKind::Deadline);
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(1, 0)).unwrap();
        let arm = DeadlineArm::default();
        let plan = plan_minibatch(&net, &arm, &config, 4).unwrap();
        for e in 0..5 {
            let mut a = arm.clone();
            let res = run_episode(
                &net,
                &mut a,
                plan.lambda,
                plan.start,
                &config,
                &mut plan.exo_stream(),
                &mut plan.action_stream(e),
                true,
            )
            .unwrap();
            assert_eq!(res.trace.unwrap().states[0], plan.start);
        }
        assert_eq!(plan.lambda, net.forward(&arm.feature_vec(&plan.cost_state)).unwrap());
    }

    #[test]
    fn common_random_numbers_align_exogenous_events() {
        let config = small(EnvKind::Deadline);
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(1, 0)).unwrap();
        let arm = DeadlineArm::default();
        let plan = plan_minibatch(&net, &arm, &config, 0).unwrap();
        let fixed: Vec<Action> = (0..300).map(|t| Action::from_active(t % 4 == 1)).collect();
        let play = || {
            let mut a = arm.clone();
            a.reset(plan.start).unwrap();
            let mut exo = plan.exo_stream();
            fixed.iter().map(|&x| a.step(x, &mut exo).unwrap().reward).collect::<Vec<_>>()
        };
        let first = play();
        for _ in 1..5 {
            assert_eq!(play(), first);
        }
        // Different action streams still differ.
        assert_ne!(plan.action_stream(0).uniform(), plan.action_stream(1).uniform());
    }

    #[test]
    fn minibatch_is_deterministic() {
        let config = small(EnvKind::Deadline);
        let run = || {
            let mut net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(1, 0)).unwrap();
            let mut adam = AdamState::new(net.len(), 0.001);
            let mut arm = DeadlineArm::default();
            run_minibatch(&mut net, &mut adam, &mut arm, &config, 0, 5).unwrap();
            net
        };
        let (a, b) = (run(), run());
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn checkpoint_counts() {
        let arm = RecoveringArm::new(RecoveringClass::A.params(), 20).unwrap();
        let mut config = TrainingConfig {
            horizon: 5,
            ..small(EnvKind::Recovering)
        };
        for (episodes, interval, expected) in [(2000, 10, 200), (30_000, 1000, 30), (0, 10, 1), (100, 100, 1), (23, 10, 3)] {
            config.episodes = episodes;
            config.checkpoint_interval = interval;
            let out = train(&arm, &config).unwrap();
            assert_eq!(out.checkpoints.len(), expected, "{episodes}/{interval}");
            assert_eq!(out.final_checkpoint().episodes, episodes);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let arm = DeadlineArm::default();
        for c in [
            TrainingConfig { discount: 1.0, ..small(EnvKind::Deadline) },
            TrainingConfig { batch_size: 1, ..small(EnvKind::Deadline) },
            TrainingConfig { horizon: 0, ..small(EnvKind::Deadline) },
            TrainingConfig { sigmoid_m: 0.0, ..small(EnvKind::Deadline) },
        ] {
            assert!(train(&arm, &c).is_err());
        }
    }
}
