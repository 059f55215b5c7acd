use crate::arms::{WirelessParams, WirelessState};
use crate::error::{Error, Result};

/// `c r2 / y`, used to rank arms whose channel is good.
pub fn secondary_index(state: &WirelessState, params: &WirelessParams) -> f64 {
    params.holding_cost * params.rate_good as f64 / state.load as f64
}

/// `c / (q (r2 / r1 - 1))`, used for the remaining arms.
pub fn primary_index(params: &WirelessParams) -> f64 {
    let ratio = params.rate_good as f64 / params.rate_bad as f64;
    params.holding_cost / (params.good_prob * (ratio - 1.0))
}

/// Good-channel arms by secondary index, then the other unfinished arms by
/// primary index. Finished arms are never chosen, so fewer than `m` arms are
/// returned once fewer than `m` remain.
pub fn size_aware_policy(
    states: &[WirelessState],
    params: &[WirelessParams],
    m: usize,
) -> Result<Vec<usize>> {
    if states.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            got: params.len(),
        });
    }
    if m > states.len() {
        return Err(Error::InvalidArgument(format!("cannot activate {m} of {} arms", states.len())));
    }
    if states.iter().all(|s| s.load == 0) {
        return Err(Error::InvalidState("every arm has finished".into()));
    }
    let mut good: Vec<(usize, f64)> = Vec::new();
    let mut rest: Vec<(usize, f64)> = Vec::new();
    for (i, (s, p)) in states.iter().zip(params).enumerate() {
        if s.load == 0 {
            continue;
        }
        if s.good {
            good.push((i, secondary_index(s, p)));
        } else {
            rest.push((i, primary_index(p)));
        }
    }
    let by_score = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    good.sort_by(by_score);
    rest.sort_by(by_score);
    Ok(good.into_iter().chain(rest).map(|(i, _)| i).take(m).collect())
}
