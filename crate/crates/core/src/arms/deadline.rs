use crate::arm::{Action, Arm, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A charging spot: `deadline` rounds until the vehicle leaves and `load`
/// units still to deliver. `(0, 0)` is an empty spot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeadlineState {
    pub deadline: u8,
    pub load: u8,
}

impl DeadlineState {
    pub const EMPTY: DeadlineState = DeadlineState { deadline: 0, load: 0 };

    pub fn new(deadline: u8, load: u8) -> Self {
        Self { deadline, load }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineParams {
    /// Per-unit processing cost `c`; each delivered unit earns `1 - c`.
    pub processing_cost: f64,
    /// Quadratic penalty `F(b) = penalty_coef * b^2` on unfinished load.
    pub penalty_coef: f64,
    /// Probability that a freed spot stays empty for the next round.
    pub empty_prob: f64,
    pub max_deadline: u8,
    pub max_load: u8,
}

impl Default for DeadlineParams {
    fn default() -> Self {
        Self {
            processing_cost: 0.5,
            penalty_coef: 0.2,
            empty_prob: 0.3,
            max_deadline: 12,
            max_load: 9,
        }
    }
}

impl DeadlineParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.processing_cost) {
            return Err(Error::InvalidArgument(format!(
                "processing cost {} outside [0, 1]",
                self.processing_cost
            )));
        }
        if !(0.0..=1.0).contains(&self.empty_prob) {
            return Err(Error::InvalidArgument(format!(
                "empty-spot probability {} outside [0, 1]",
                self.empty_prob
            )));
        }
        if self.max_deadline < 1 || self.max_load < 1 {
            return Err(Error::InvalidArgument("deadline and load bounds must be positive".into()));
        }
        if !(self.penalty_coef >= 0.0 && self.penalty_coef.is_finite()) {
            return Err(Error::InvalidArgument("penalty coefficient must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn penalty(&self, unfinished: u8) -> f64 {
        let b = unfinished as f64;
        self.penalty_coef * b * b
    }

    /// Every reachable state: the empty spot, then `(D, B)` for
    /// `1 <= D <= max_deadline`, `0 <= B <= max_load`, minus `(max_deadline, 0)`
    /// which no arrival or decrement can produce. 120 states by default.
    pub fn states(&self) -> Vec<DeadlineState> {
        let mut out = vec![DeadlineState::EMPTY];
        for d in 1..=self.max_deadline {
            for b in 0..=self.max_load {
                if d == self.max_deadline && b == 0 {
                    continue;
                }
                out.push(DeadlineState::new(d, b));
            }
        }
        out
    }

    pub fn is_valid(&self, s: DeadlineState) -> bool {
        if s.deadline == 0 {
            return s.load == 0;
        }
        s.deadline <= self.max_deadline
            && s.load <= self.max_load
            && !(s.deadline == self.max_deadline && s.load == 0)
    }

    fn arrival_count(&self) -> usize {
        self.max_deadline as usize * self.max_load as usize
    }

    /// Law of the state that follows a departure: empty with
    /// `empty_prob`, otherwise uniform over `D >= 1, B >= 1`.
    pub fn arrival_law(&self) -> Vec<(DeadlineState, f64)> {
        let k = self.arrival_count();
        let each = (1.0 - self.empty_prob) / k as f64;
        let mut out = Vec::with_capacity(k + 1);
        out.push((DeadlineState::EMPTY, self.empty_prob));
        for d in 1..=self.max_deadline {
            for b in 1..=self.max_load {
                out.push((DeadlineState::new(d, b), each));
            }
        }
        out
    }

    /// Maps one uniform draw to an arrival.
    fn arrival_from_uniform(&self, u: f64) -> DeadlineState {
        if u < self.empty_prob {
            return DeadlineState::EMPTY;
        }
        let k = self.arrival_count();
        let scaled = (u - self.empty_prob) / (1.0 - self.empty_prob) * k as f64;
        let idx = (scaled as usize).min(k - 1);
        let per_d = self.max_load as usize;
        DeadlineState::new((1 + idx / per_d) as u8, (1 + idx % per_d) as u8)
    }

    /// Expected reward and successor for `(s, a)`. `None` as successor
    /// means the next state is drawn from [`DeadlineParams::arrival_law`].
    pub fn kernel(&self, s: DeadlineState, a: Action) -> (f64, Option<DeadlineState>) {
        let act = a.is_active() as u8;
        let gain = (1.0 - self.processing_cost) * act as f64;
        let reward = if s.load > 0 && s.deadline > 1 {
            gain
        } else if s.load > 0 && s.deadline == 1 {
            gain - self.penalty(s.load - act)
        } else {
            0.0
        };
        let next = if s.deadline > 1 {
            Some(DeadlineState::new(s.deadline - 1, s.load.saturating_sub(act)))
        } else {
            None
        };
        (reward, next)
    }
}

#[derive(Debug, Clone)]
pub struct DeadlineArm {
    params: DeadlineParams,
    state: DeadlineState,
}

impl Default for DeadlineArm {
    fn default() -> Self {
        Self {
            params: DeadlineParams::default(),
            state: DeadlineState::EMPTY,
        }
    }
}

impl DeadlineArm {
    pub fn new(params: DeadlineParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state: DeadlineState::EMPTY,
        })
    }

    pub fn params(&self) -> &DeadlineParams {
        &self.params
    }
}

impl Arm for DeadlineArm {
    type State = DeadlineState;

    fn feature_dim(&self) -> usize {
        2
    }

    fn features(&self, s: &DeadlineState, out: &mut [f64]) {
        out[0] = s.deadline as f64 / self.params.max_deadline as f64;
        out[1] = s.load as f64 / self.params.max_load as f64;
    }

    fn coords(&self, s: &DeadlineState) -> Vec<f64> {
        vec![s.deadline as f64, s.load as f64]
    }

    fn coord_names(&self) -> &'static [&'static str] {
        &["deadline", "load"]
    }

    fn state(&self) -> DeadlineState {
        self.state
    }

    fn reset(&mut self, s: DeadlineState) -> Result<()> {
        if !self.params.is_valid(s) {
            return Err(Error::InvalidState(format!("{s:?}")));
        }
        self.state = s;
        Ok(())
    }

    fn step(&mut self, action: Action, exo: &mut RngStream) -> Result<StepOutcome<DeadlineState>> {
        let u = exo.uniform();
        let (reward, next) = self.params.kernel(self.state, action);
        let next = next.unwrap_or_else(|| self.params.arrival_from_uniform(u));
        self.state = next;
        Ok(StepOutcome {
            reward,
            next_state: next,
        })
    }

    /// Uniform over the reachable states.
    fn sample_initial(&self, rng: &mut RngStream) -> DeadlineState {
        let states = self.params.states();
        states[rng.below(states.len())]
    }
}
