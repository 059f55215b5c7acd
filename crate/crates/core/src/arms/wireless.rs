use crate::arm::{Action, Arm, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Remaining load in bits and the channel flag (`true` = good).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WirelessState {
    pub load: u32,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WirelessParams {
    /// Cost per round while load remains.
    pub holding_cost: f64,
    /// Bits sent per activation on a bad channel.
    pub rate_bad: u32,
    /// Bits sent per activation on a good channel.
    pub rate_good: u32,
    /// Probability the channel is good next round.
    pub good_prob: f64,
    pub max_load: u32,
}

impl Default for WirelessParams {
    fn default() -> Self {
        Self {
            holding_cost: 1.0,
            rate_bad: 8_400,
            rate_good: 33_600,
            good_prob: 0.75,
            max_load: 1_000_000,
        }
    }
}

impl WirelessParams {
    pub fn with_good_prob(good_prob: f64) -> Self {
        Self {
            good_prob,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.rate_bad && self.rate_bad < self.rate_good) {
            return Err(Error::InvalidArgument(format!(
                "rates must satisfy 0 < r1 < r2, got r1={} r2={}",
                self.rate_bad, self.rate_good
            )));
        }
        if !(0.0..=1.0).contains(&self.good_prob) {
            return Err(Error::InvalidArgument(format!("q={} outside [0, 1]", self.good_prob)));
        }
        if self.max_load == 0 {
            return Err(Error::InvalidArgument("max load must be positive".into()));
        }
        if !(self.holding_cost >= 0.0 && self.holding_cost.is_finite()) {
            return Err(Error::InvalidArgument("holding cost must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn rate(&self, good: bool) -> u32 {
        if good {
            self.rate_good
        } else {
            self.rate_bad
        }
    }
}

/// A wireless client. Empty load is absorbing with zero reward.
#[derive(Debug, Clone)]
pub struct WirelessArm {
    params: WirelessParams,
    state: WirelessState,
}

impl Default for WirelessArm {
    fn default() -> Self {
        let params = WirelessParams::default();
        let state = WirelessState {
            load: params.max_load,
            good: true,
        };
        Self { params, state }
    }
}

impl WirelessArm {
    pub fn new(params: WirelessParams) -> Result<Self> {
        params.validate()?;
        let state = WirelessState {
            load: params.max_load,
            good: true,
        };
        Ok(Self { params, state })
    }

    pub fn params(&self) -> &WirelessParams {
        &self.params
    }
}

impl Arm for WirelessArm {
    type State = WirelessState;

    fn feature_dim(&self) -> usize {
        2
    }

    fn features(&self, s: &WirelessState, out: &mut [f64]) {
        out[0] = s.load as f64 / self.params.max_load as f64;
        out[1] = if s.good { 1.0 } else { 0.0 };
    }

    fn coords(&self, s: &WirelessState) -> Vec<f64> {
        vec![s.load as f64, if s.good { 1.0 } else { 0.0 }]
    }

    fn coord_names(&self) -> &'static [&'static str] {
        &["load", "good"]
    }

    fn state(&self) -> WirelessState {
        self.state
    }

    fn reset(&mut self, s: WirelessState) -> Result<()> {
        if s.load > self.params.max_load {
            return Err(Error::InvalidState(format!(
                "load {} exceeds {}",
                s.load, self.params.max_load
            )));
        }
        self.state = s;
        Ok(())
    }

    fn step(&mut self, action: Action, exo: &mut RngStream) -> Result<StepOutcome<WirelessState>> {
        let u = exo.uniform();
        let s = self.state;
        if s.load == 0 {
            return Ok(StepOutcome {
                reward: 0.0,
                next_state: s,
            });
        }
        let sent = if action.is_active() { self.params.rate(s.good) } else { 0 };
        let next = WirelessState {
            load: s.load.saturating_sub(sent),
            good: u < self.params.good_prob,
        };
        self.state = next;
        Ok(StepOutcome {
            reward: -self.params.holding_cost,
            next_state: next,
        })
    }

    /// Load uniform on `1..=max_load` bits, channel Bernoulli(q).
    fn sample_initial(&self, rng: &mut RngStream) -> WirelessState {
        let load = 1 + rng.below(self.params.max_load as usize) as u32;
        let good = rng.bernoulli(self.params.good_prob);
        WirelessState { load, good }
    }

    fn is_terminal(&self) -> bool {
        self.state.load == 0
    }
}
