//! Single-arm simulator contract and the costed environments built on it.
//!
//! An [`Arm`] is a black-box simulator of one restless arm: it can be reset to
//! any state and stepped with a binary action. Exogenous randomness (arrivals,
//! channel fades) is drawn from a caller-owned [`RngStream`], one uniform per
//! step, so that several episodes handed clones of the same stream see the
//! same exogenous events whatever actions they take.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Passive,
    Active,
}

impl Action {
    pub fn from_active(active: bool) -> Self {
        if active {
            Action::Active
        } else {
            Action::Passive
        }
    }

    pub fn is_active(self) -> bool {
        self == Action::Active
    }

    /// `1.0` when active, `0.0` when passive.
    pub fn indicator(self) -> f64 {
        match self {
            Action::Active => 1.0,
            Action::Passive => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S> {
    pub reward: f64,
    pub next_state: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostedStepOutcome<S> {
    pub action: Action,
    /// Reward reported by the simulator before the activation charge.
    pub raw_reward: f64,
    /// `raw_reward - lambda * a`.
    pub net_reward: f64,
    pub next_state: S,
}

pub trait Arm: Clone + Send {
    type State: Copy + Eq + Hash + Debug + Send;

    /// Length of the network input vector.
    fn feature_dim(&self) -> usize;

    /// Writes the normalized network input for `state` into `out`.
    fn features(&self, state: &Self::State, out: &mut [f64]);

    /// Raw state coordinates, for reporting.
    fn coords(&self, state: &Self::State) -> Vec<f64>;

    /// Column names matching [`Arm::coords`].
    fn coord_names(&self) -> &'static [&'static str];

    fn state(&self) -> Self::State;

    fn reset(&mut self, state: Self::State) -> Result<()>;

    /// Advances one round. Consumes exactly one draw from `exo` for
    /// stochastic arms and none for deterministic ones.
    fn step(&mut self, action: Action, exo: &mut RngStream) -> Result<StepOutcome<Self::State>>;

    /// Draws a training start state.
    fn sample_initial(&self, rng: &mut RngStream) -> Self::State;

    /// Absorbing states end an episode early.
    fn is_terminal(&self) -> bool {
        false
    }

    fn feature_vec(&self, state: &Self::State) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        self.features(state, &mut v);
        v
    }
}

/// Logistic gate `1 / (1 + exp(-m x))`.
pub fn sigmoid_gate(x: f64, m: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("sigmoid input {x} is not finite")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("sensitivity m={m} must be positive")));
    }
    Ok(logistic(m * x))
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn costed<A: Arm>(
    arm: &mut A,
    action: Action,
    lambda: f64,
    exo: &mut RngStream,
) -> Result<CostedStepOutcome<A::State>> {
    let out = arm.step(action, exo)?;
    Ok(CostedStepOutcome {
        action,
        raw_reward: out.reward,
        net_reward: out.reward - lambda * action.indicator(),
        next_state: out.next_state,
    })
}

/// One round of the soft-gated environment: activate with probability
/// `sigmoid_gate(index_value - lambda, m)`, charge `lambda` per activation.
pub fn env_star_step<A: Arm>(
    arm: &mut A,
    index_value: f64,
    lambda: f64,
    m: f64,
    action_rng: &mut RngStream,
    exo: &mut RngStream,
) -> Result<CostedStepOutcome<A::State>> {
    let p = sigmoid_gate(index_value - lambda, m)?;
    let action = Action::from_active(action_rng.uniform() < p);
    costed(arm, action, lambda, exo)
}

/// One round of the hard-threshold environment: activate iff
/// `index_value >= lambda`.
pub fn env_hard_step<A: Arm>(
    arm: &mut A,
    index_value: f64,
    lambda: f64,
    exo: &mut RngStream,
) -> Result<CostedStepOutcome<A::State>> {
    let action = Action::from_active(index_value >= lambda);
    costed(arm, action, lambda, exo)
}

/// A simulator whose rewards carry a fixed multiplicative misspecification.
///
/// The factor `1 + G` for each `(state, action)` pair is drawn from
/// `N(1, noise_level^2)` on first visit and reused afterwards. Transitions are
/// untouched.
#[derive(Debug, Clone)]
pub struct NoisyArm<A: Arm> {
    inner: A,
    noise_level: f64,
    rng: RngStream,
    factors: HashMap<(A::State, Action), f64>,
}

impl<A: Arm> NoisyArm<A> {
    pub fn new(inner: A, noise_level: f64, rng: RngStream) -> Result<Self> {
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise level {noise_level} must be nonnegative"
            )));
        }
        Ok(Self {
            inner,
            noise_level,
            rng,
            factors: HashMap::new(),
        })
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    /// Reward multiplier for `(state, action)`, drawing it if unseen.
    pub fn factor(&mut self, state: A::State, action: Action) -> f64 {
        if self.noise_level == 0.0 {
            return 1.0;
        }
        let sigma = self.noise_level;
        let rng = &mut self.rng;
        *self
            .factors
            .entry((state, action))
            .or_insert_with(|| 1.0 + sigma * rng.standard_normal())
    }
}

impl<A: Arm> Arm for NoisyArm<A> {
    type State = A::State;

    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn features(&self, state: &Self::State, out: &mut [f64]) {
        self.inner.features(state, out)
    }

    fn coords(&self, state: &Self::State) -> Vec<f64> {
        self.inner.coords(state)
    }

    fn coord_names(&self) -> &'static [&'static str] {
        self.inner.coord_names()
    }

    fn state(&self) -> Self::State {
        self.inner.state()
    }

    fn reset(&mut self, state: Self::State) -> Result<()> {
        self.inner.reset(state)
    }

    fn step(&mut self, action: Action, exo: &mut RngStream) -> Result<StepOutcome<Self::State>> {
        let state = self.inner.state();
        let out = self.inner.step(action, exo)?;
        let factor = self.factor(state, action);
        Ok(StepOutcome {
            reward: factor * out.reward,
            next_state: out.next_state,
        })
    }

    fn sample_initial(&self, rng: &mut RngStream) -> Self::State {
        self.inner.sample_initial(rng)
    }

    fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }
}
