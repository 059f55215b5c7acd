use std::fmt;
use std::str::FromStr;

use crate::arm::{Action, Arm, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Waiting time since the arm was last played, `1..=z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecoveringState(pub u16);

/// Recovery curve `f(z) = theta0 * (1 - exp(-theta1 * z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveringParams {
    pub theta0: f64,
    pub theta1: f64,
}

impl RecoveringParams {
    pub fn recovery(&self, z: u16) -> f64 {
        self.theta0 * (1.0 - (-self.theta1 * z as f64).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecoveringClass {
    A,
    B,
    C,
    D,
}

impl RecoveringClass {
    pub const ALL: [RecoveringClass; 4] = [Self::A, Self::B, Self::C, Self::D];

    pub fn params(self) -> RecoveringParams {
        let (theta0, theta1) = match self {
            Self::A => (10.0, 0.2),
            Self::B => (8.5, 0.4),
            Self::C => (7.0, 0.6),
            Self::D => (5.5, 0.8),
        };
        RecoveringParams { theta0, theta1 }
    }
}

impl fmt::Display for RecoveringClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for RecoveringClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            other => Err(Error::InvalidArgument(format!("unknown recovering class '{other}'"))),
        }
    }
}

/// Deterministic arm: playing yields `f(z)` and resets `z` to 1, resting
/// lets `z` grow up to `z_max`.
#[derive(Debug, Clone)]
pub struct RecoveringArm {
    params: RecoveringParams,
    z_max: u16,
    state: RecoveringState,
}

impl RecoveringArm {
    pub fn new(params: RecoveringParams, z_max: u16) -> Result<Self> {
        if !(params.theta0 > 0.0 && params.theta1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "recovery coefficients must be positive, got {params:?}"
            )));
        }
        if z_max < 1 {
            return Err(Error::InvalidArgument("z_max must be at least 1".into()));
        }
        Ok(Self {
            params,
            z_max,
            state: RecoveringState(1),
        })
    }

    pub fn params(&self) -> RecoveringParams {
        self.params
    }

    pub fn z_max(&self) -> u16 {
        self.z_max
    }

    pub fn states(&self) -> Vec<RecoveringState> {
        (1..=self.z_max).map(RecoveringState).collect()
    }

    pub fn kernel(&self, s: RecoveringState, a: Action) -> (f64, RecoveringState) {
        if a.is_active() {
            (self.params.recovery(s.0), RecoveringState(1))
        } else {
            (0.0, RecoveringState((s.0 + 1).min(self.z_max)))
        }
    }

    /// `Pr{z} = 2^z / (2^1 + ... + 2^z_max)`.
    pub fn initial_probability(&self, z: u16) -> f64 {
        // 2^(z - z_max) / (2 - 2^(1 - z_max)) avoids overflow for large z_max.
        let num = 2f64.powi(z as i32 - self.z_max as i32);
        let den = 2.0 - 2f64.powi(1 - self.z_max as i32);
        num / den
    }
}

impl Arm for RecoveringArm {
    type State = RecoveringState;

    fn feature_dim(&self) -> usize {
        1
    }

    fn features(&self, s: &RecoveringState, out: &mut [f64]) {
        out[0] = s.0 as f64 / self.z_max as f64;
    }

    fn coords(&self, s: &RecoveringState) -> Vec<f64> {
        vec![s.0 as f64]
    }

    fn coord_names(&self) -> &'static [&'static str] {
        &["z"]
    }

    fn state(&self) -> RecoveringState {
        self.state
    }

    fn reset(&mut self, s: RecoveringState) -> Result<()> {
        if s.0 < 1 || s.0 > self.z_max {
            return Err(Error::InvalidState(format!("waiting time {} outside [1, {}]", s.0, self.z_max)));
        }
        self.state = s;
        Ok(())
    }

    fn step(&mut self, action: Action, _exo: &mut RngStream) -> Result<StepOutcome<RecoveringState>> {
        let (reward, next) = self.kernel(self.state, action);
        self.state = next;
        Ok(StepOutcome {
            reward,
            next_state: next,
        })
    }

    fn sample_initial(&self, rng: &mut RngStream) -> RecoveringState {
        let u = rng.uniform();
        let mut acc = 0.0;
        for z in (1..=self.z_max).rev() {
            acc += self.initial_probability(z);
            if u < acc {
                return RecoveringState(z);
            }
        }
        RecoveringState(1)
    }
}
