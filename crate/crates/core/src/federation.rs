//! Server side of the federated setup: participant sampling, parameter
//! averaging and redistribution, plus the non-cooperative baseline.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy_agent::{PolicyDims, PolicyParams};

/// Agents taking part in one aggregation round, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub round_index: usize,
    pub participants: Vec<usize>,
}

/// The server's copy of the last aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub params: PolicyParams,
    pub round_index: usize,
}

/// Draws `u` distinct agents uniformly without replacement.
pub fn select_participants<R: Rng + ?Sized>(
    n_agents: usize,
    u: usize,
    round_index: usize,
    rng: &mut R,
) -> Result<RoundPlan> {
    if u == 0 || u > n_agents {
        return Err(Error::config(
            "participants_u",
            format!("must lie in [1, {n_agents}], got {u}"),
        ));
    }
    let mut participants = index::sample(rng, n_agents, u).into_vec();
    participants.sort_unstable();
    Ok(RoundPlan {
        round_index,
        participants,
    })
}

/// Elementwise unweighted mean.
///
/// Each coordinate is summed in sorted order, so the result does not depend
/// on the order of `models`.
pub fn aggregate(models: &[&PolicyParams]) -> Result<PolicyParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::input("cannot aggregate an empty model list"))?;
    let dims: PolicyDims = first.dims();
    if models.iter().any(|m| m.dims() != dims) {
        return Err(Error::input("models have mismatched shapes"));
    }
    let count = models.len() as f64;
    let mut out = PolicyParams::zeros(dims);
    let mut column = Vec::with_capacity(models.len());
    for (slot, dst) in out.slices_mut().into_iter().enumerate() {
        for (i, v) in dst.iter_mut().enumerate() {
            column.clear();
            column.extend(models.iter().map(|m| m.slices()[slot][i]));
            column.sort_unstable_by(f64::total_cmp);
            *v = column.iter().sum::<f64>() / count;
        }
    }
    Ok(out)
}

/// Averages the participants' models and hands the result back to the
/// participants only.
pub fn fl_round(agents: &mut [PolicyParams], plan: &RoundPlan) -> Result<GlobalModel> {
    if let Some(&bad) = plan.participants.iter().find(|&&i| i >= agents.len()) {
        return Err(Error::input(format!(
            "participant {bad} out of range for {} agents",
            agents.len()
        )));
    }
    if plan.participants.is_empty() {
        return Err(Error::input("round plan has no participants"));
    }
    let global = {
        let selected: Vec<&PolicyParams> = plan.participants.iter().map(|&i| &agents[i]).collect();
        aggregate(&selected)?
    };
    for &i in &plan.participants {
        agents[i].clone_from(&global);
    }
    Ok(GlobalModel {
        params: global,
        round_index: plan.round_index,
    })
}

/// `n_agents` copies of the initial model for independent training.
pub fn dl_baseline_init(global: &PolicyParams, n_agents: usize) -> Vec<PolicyParams> {
    vec![global.clone(); n_agents]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_agent::init_params;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn model(seed: u64) -> PolicyParams {
        init_params(PolicyDims::new(8, 6, 5).unwrap(), &mut rng(seed)).unwrap()
    }

    fn scaled(p: &PolicyParams, k: f64) -> PolicyParams {
        let flat: Vec<f64> = p.flatten().iter().map(|v| v * k).collect();
        PolicyParams::unflatten(p.dims(), &flat).unwrap()
    }

    #[test]
    fn selection_bounds() {
        let mut r = rng(1);
        assert_eq!(
            select_participants(8, 8, 0, &mut r).unwrap().participants,
            (0..8).collect::<Vec<_>>()
        );
        assert_eq!(
            select_participants(8, 1, 0, &mut r)
                .unwrap()
                .participants
                .len(),
            1
        );
        assert!(select_participants(8, 9, 0, &mut r).is_err());
        assert!(select_participants(8, 0, 0, &mut r).is_err());
    }

    #[test]
    fn selection_frequency_is_uniform() {
        let mut r = rng(2);
        let rounds = 100_000;
        let mut hits = [0usize; 8];
        for k in 0..rounds {
            let plan = select_participants(8, 4, k, &mut r).unwrap();
            let mut seen = plan.participants.clone();
            seen.dedup();
            assert_eq!(seen.len(), 4);
            for i in plan.participants {
                hits[i] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / rounds as f64 - 0.5).abs() < 0.01, "{hits:?}");
        }
    }

    #[test]
    fn aggregate_algebra() {
        let t = model(3);
        assert_eq!(aggregate(&[&t]).unwrap(), t);
        assert_eq!(aggregate(&[&t, &t]).unwrap(), t);
        let zero = PolicyParams::zeros(t.dims());
        let double = scaled(&t, 2.0);
        assert_eq!(aggregate(&[&zero, &double]).unwrap(), t);
        assert!(aggregate(&[]).is_err());
        let other = init_params(PolicyDims::new(4, 6, 5).unwrap(), &mut rng(1)).unwrap();
        assert!(aggregate(&[&t, &other]).is_err());
    }

    #[test]
    fn fl_round_examples() {
        let a = model(10);
        let b = model(11);
        let mut agents = vec![a.clone(), b.clone()];
        let plan = RoundPlan {
            round_index: 0,
            participants: vec![0, 1],
        };
        let global = fl_round(&mut agents, &plan).unwrap();
        assert_eq!(agents[0], agents[1]);
        assert_eq!(global.params, aggregate(&[&a, &b]).unwrap());

        let mut agents = vec![a.clone(), b.clone(), model(12)];
        let before = agents.clone();
        fl_round(
            &mut agents,
            &RoundPlan {
                round_index: 1,
                participants: vec![1],
            },
        )
        .unwrap();
        assert_eq!(agents, before);

        let bad = RoundPlan {
            round_index: 0,
            participants: vec![5],
        };
        assert!(fl_round(&mut agents, &bad).is_err());
    }

    #[test]
    fn dl_copies_are_identical() {
        let g = model(4);
        let copies = dl_baseline_init(&g, 1);
        assert_eq!(copies, vec![g.clone()]);
        let copies = dl_baseline_init(&g, 8);
        assert!(copies.iter().all(|c| c.flatten() == g.flatten()));
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(seeds in proptest::collection::vec(any::<u64>(), 1..8), rot in 0usize..8) {
            let models: Vec<PolicyParams> = seeds.iter().map(|&s| model(s)).collect();
            let refs: Vec<&PolicyParams> = models.iter().collect();
            let mut permuted = refs.clone();
            permuted.rotate_left(rot % refs.len());
            permuted.reverse();
            prop_assert_eq!(aggregate(&refs).unwrap(), aggregate(&permuted).unwrap());
        }

        #[test]
        fn aggregate_commutes_with_flatten(seeds in proptest::collection::vec(any::<u64>(), 1..6)) {
            let models: Vec<PolicyParams> = seeds.iter().map(|&s| model(s)).collect();
            let refs: Vec<&PolicyParams> = models.iter().collect();
            let agg = aggregate(&refs).unwrap().flatten();
            let flats: Vec<Vec<f64>> = models.iter().map(PolicyParams::flatten).collect();
            for i in 0..agg.len() {
                let mut col: Vec<f64> = flats.iter().map(|f| f[i]).collect();
                col.sort_unstable_by(f64::total_cmp);
                prop_assert_eq!(agg[i], col.iter().sum::<f64>() / col.len() as f64);
            }
        }

        #[test]
        fn non_participants_untouched(seed in any::<u64>(), u in 1usize..=8) {
            let mut agents: Vec<PolicyParams> = (0..8).map(|i| model(seed.wrapping_add(i))).collect();
            let before = agents.clone();
            let plan = select_participants(8, u, 0, &mut rng(seed)).unwrap();
            fl_round(&mut agents, &plan).unwrap();
            for i in 0..8 {
                if plan.participants.contains(&i) {
                    prop_assert_eq!(&agents[i], &agents[plan.participants[0]]);
                } else {
                    prop_assert_eq!(&agents[i], &before[i]);
                }
            }
        }
    }
}
