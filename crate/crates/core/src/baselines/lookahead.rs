use crate::arm::Action;
use crate::arms::{RecoveringArm, RecoveringState};
use crate::error::{Error, Result};

pub const DEFAULT_BEAM_WIDTH: usize = 64;
/// Exhaustive search is used when `N^d` is at most this many leaves.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// `d` arm choices and their undiscounted total reward.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadPlan {
    pub choices: Vec<usize>,
    pub value: f64,
}

fn play(arms: &[RecoveringArm], z: &mut [RecoveringState], pick: usize) -> f64 {
    let mut gain = 0.0;
    for (i, (arm, s)) in arms.iter().zip(z.iter_mut()).enumerate() {
        let (r, next) = arm.kernel(*s, Action::from_active(i == pick));
        gain += r;
        *s = next;
    }
    gain
}

fn exhaustive(arms: &[RecoveringArm], start: &[RecoveringState], d: usize) -> LookaheadPlan {
    fn visit(
        arms: &[RecoveringArm],
        z: &[RecoveringState],
        depth: usize,
        prefix: &mut Vec<usize>,
        value: f64,
        best: &mut LookaheadPlan,
    ) {
        if depth == 0 {
            if value > best.value {
                best.value = value;
                best.choices.clone_from(prefix);
            }
            return;
        }
        for pick in 0..arms.len() {
            let mut next = z.to_vec();
            let gain = play(arms, &mut next, pick);
            prefix.push(pick);
            visit(arms, &next, depth - 1, prefix, value + gain, best);
            prefix.pop();
        }
    }
    let mut best = LookaheadPlan {
        choices: Vec::new(),
        value: f64::NEG_INFINITY,
    };
    visit(arms, start, d, &mut Vec::with_capacity(d), 0.0, &mut best);
    best
}

fn beam(arms: &[RecoveringArm], start: &[RecoveringState], d: usize, width: usize) -> LookaheadPlan {
    let mut frontier = vec![(Vec::new(), start.to_vec(), 0.0)];
    for _ in 0..d {
        let mut next = Vec::with_capacity(frontier.len() * arms.len());
        for (choices, z, value) in &frontier {
            for pick in 0..arms.len() {
                let mut z2 = z.clone();
                let gain = play(arms, &mut z2, pick);
                let mut c2 = choices.clone();
                c2.push(pick);
                next.push((c2, z2, value + gain));
            }
        }
        // Stable: equal values keep lexicographic order of the choices.
        next.sort_by(|a, b| b.2.total_cmp(&a.2));
        next.truncate(width);
        frontier = next;
    }
    let (choices, _, value) = frontier.swap_remove(0);
    LookaheadPlan { choices, value }
}

/// Best length-`d` sequence of single-arm activations (`m` must be 1).
///
/// Searches every sequence when `N^d <= EXHAUSTIVE_LIMIT`, otherwise keeps
/// the `beam_width` best partial sequences per depth. Ties go to the
/// lexicographically first sequence.
pub fn lookahead_policy(
    states: &[RecoveringState],
    arms: &[RecoveringArm],
    m: usize,
    d: usize,
    beam_width: usize,
) -> Result<LookaheadPlan> {
    if m != 1 {
        return Err(Error::Unsupported(format!("lookahead plans one activation per round, got M={m}")));
    }
    if d < 1 || beam_width < 1 {
        return Err(Error::InvalidArgument(format!("need d >= 1 and beam width >= 1, got {d} and {beam_width}")));
    }
    if states.len() != arms.len() {
        return Err(Error::DimensionMismatch {
            expected: arms.len(),
            got: states.len(),
        });
    }
    if arms.is_empty() {
        return Err(Error::InvalidArgument("no arms to plan over".into()));
    }
    let leaves = (arms.len() as u128).checked_pow(d as u32);
    if leaves.is_some_and(|n| n <= EXHAUSTIVE_LIMIT) {
        Ok(exhaustive(arms, states, d))
    } else {
        Ok(beam(arms, states, d, beam_width))
    }
}
