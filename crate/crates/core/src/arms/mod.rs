//! The three restless-arm environments: EV-charging deadlines, recovering
//! rewards and wireless transmission over a two-state fading channel.

mod deadline;
mod recovering;
mod wireless;

use std::fmt;
use std::str::FromStr;

pub use deadline::{DeadlineArm, DeadlineParams, DeadlineState};
pub use recovering::{RecoveringArm, RecoveringClass, RecoveringParams, RecoveringState};
pub use wireless::{WirelessArm, WirelessParams, WirelessState};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Deadline,
    Recovering,
    Wireless,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Deadline => "deadline",
            EnvKind::Recovering => "recovering",
            EnvKind::Wireless => "wireless",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deadline" => Ok(EnvKind::Deadline),
            "recovering" => Ok(EnvKind::Recovering),
            "wireless" => Ok(EnvKind::Wireless),
            other => Err(Error::InvalidArgument(format!("unknown environment '{other}'"))),
        }
    }
}
