//! Reference scheduling policies: the exact deadline Whittle index, the
//! size-aware wireless index, d-step lookahead for recovering arms, and
//! tabular Q-learning index estimates.

mod lookahead;
mod qwic;

mod size_aware;

pub use lookahead::{lookahead_policy, LookaheadPlan, DEFAULT_BEAM_WIDTH, EXHAUSTIVE_LIMIT};
pub use qwic::{default_candidates, qwic_train, QwicConfig, QwicTable};

pub use size_aware::{primary_index, secondary_index, size_aware_policy};

use crate::arms::DeadlineState;
use crate::error::{Error, Result};
use crate::oracle::IndexTable;

/// Indices of the `m` largest scores, ties to the lowest id, in rank order.
pub fn top_m(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot activate {m} of {} arms",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|x| x.is_nan()) {
        return Err(Error::NonFinite(format!("index of arm {i} is NaN")));
    }
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(m);
    Ok(ids)
}

/// The `m` arms with the highest exact Whittle index.
pub fn deadline_whittle_policy(
    states: &[DeadlineState],
    table: &IndexTable<DeadlineState>,
    m: usize,
) -> Result<Vec<usize>> {
    let scores = states
        .iter()
        .map(|s| {
            table
                .index(s)
                .ok_or_else(|| Error::InvalidState(format!("{s:?} missing from index table")))
        })
        .collect::<Result<Vec<_>>>()?;
    top_m(&scores, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arms::DeadlineArm;
    use crate::oracle::{index_table, DpSettings, FiniteArm};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn table() -> &'static IndexTable<DeadlineState> {
        static TABLE: OnceLock<IndexTable<DeadlineState>> = OnceLock::new();
        TABLE.get_or_init(|| {
            let model = DeadlineArm::default().model().unwrap();
            index_table(&model, &DpSettings::default(), 1e-6).unwrap()
        })
    }

    #[test]
    fn top_m_breaks_ties_by_id() {
        assert_eq!(top_m(&[1.0, 3.0, 3.0, 0.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(top_m(&[0.0; 4], 2).unwrap(), vec![0, 1]);
        assert!(top_m(&[0.0; 2], 3).is_err());
        assert!(top_m(&[f64::NAN, 0.0], 1).is_err());
    }

    #[test]
    fn empty_deadline_arms_pick_lowest_ids() {
        let states = [DeadlineState::new(3, 0), DeadlineState::EMPTY, DeadlineState::new(7, 0)];
        assert_eq!(deadline_whittle_policy(&states, table(), 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn urgent_heavy_arm_wins() {
        let mut states = vec![DeadlineState::new(12, 1); 4];
        states[2] = DeadlineState::new(1, 9);
        assert_eq!(deadline_whittle_policy(&states, table(), 1).unwrap(), vec![2]);
    }

    #[test]
    fn full_activation() {
        let states = [
            DeadlineState::new(1, 1),
            DeadlineState::new(5, 3),
            DeadlineState::EMPTY,
            DeadlineState::new(12, 9),
        ];
        let mut chosen = deadline_whittle_policy(&states, table(), 4).unwrap();
        chosen.sort();
        assert_eq!(chosen, vec![0, 1, 2, 3]);
        assert!(deadline_whittle_policy(&states, table(), 5).is_err());
    }

    proptest! {
        #[test]
        fn selection_invariant_under_monotone_transform(
            picks in proptest::collection::vec(0usize..120, 1..10),
            m_frac in 0.0f64..1.0,
        ) {
            let all = DeadlineArm::default().params().states();
            let states: Vec<DeadlineState> = picks.iter().map(|&k| all[k]).collect();
            let m = ((states.len() as f64) * m_frac) as usize;
            let base = deadline_whittle_policy(&states, table(), m).unwrap();
            let mut warped = table().clone();
            for e in &mut warped.estimates {
                e.index = (3.0 * e.index).exp() - 7.0;
            }
            prop_assert_eq!(base, deadline_whittle_policy(&states, &warped, m).unwrap());
        }
    }

    #[test]
    fn table_has_every_reachable_state() {
        let arm = DeadlineArm::default();
        for s in arm.params().states() {
            assert!(table().index(&s).is_some());
        }
    }
}
