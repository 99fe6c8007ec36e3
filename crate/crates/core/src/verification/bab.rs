use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ibp::{open_disjuncts, probe_points, propagate};
use super::region::{free_count, RegionOutcome, RegionSearch};
use super::{
    check_dims, concrete_witness, BabConfig, FoldedNetwork, Property, SearchStats,
    VerificationResult, VerifyError, WITNESS_TOLERANCE,
};
use crate::network::SequentialNetwork;

/// Input-splitting branch and bound.
///
/// Each node is pruned by interval bounds, probed by sampling, decided
/// exactly by pattern enumeration once few enough ReLUs are unstable, and
/// otherwise bisected along its widest dimension. Nodes are processed
/// depth-first, lower half first.
pub fn verify_bab(
    net: &SequentialNetwork,
    p: &Property,
    config: &BabConfig,
) -> Result<VerificationResult, VerifyError> {
    let start = Instant::now();
    check_dims(net, p)?;
    config.validate()?;
    let folded = FoldedNetwork::new(net)?;
    let deadline = config
        .time_budget
        .map(|t| start + Duration::try_from_secs_f64(t).unwrap_or(Duration::MAX / 4));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut search = RegionSearch {
        net: &folded,
        original: net,
        property: p,
        deadline,
        lp_calls: 0,
    };
    let mut stats = SearchStats::default();
    let mut stack = vec![p.input_box.clone()];
    let mut undecided: Option<String> = None;

    let finish = |mut stats: SearchStats, lp_calls: usize| {
        stats.lp_calls = lp_calls;
        stats.wall_time_secs = start.elapsed().as_secs_f64();
        stats
    };

    while let Some(b) = stack.pop() {
        if stats.nodes >= config.max_nodes {
            let s = finish(stats, search.lp_calls);
            return Ok(VerificationResult::unknown("node budget exhausted", s));
        }
        if deadline.is_some_and(|t| Instant::now() >= t) {
            let s = finish(stats, search.lp_calls);
            return Ok(VerificationResult::unknown("time budget exhausted", s));
        }
        stats.nodes += 1;

        let bounds = propagate(&folded, &b.lo, &b.hi);
        let out = bounds.last().expect("at least one layer");
        let open = open_disjuncts(p, &out.post_lo, &out.post_hi);
        if open.is_empty() {
            continue;
        }
        for x in probe_points(&b, config.sample_count, &mut rng) {
            if let Some(cex) = concrete_witness(net, p, &x, WITNESS_TOLERANCE)? {
                let s = finish(stats, search.lp_calls);
                return Ok(VerificationResult::falsified(cex, s));
            }
        }

        let mut note = None;
        if free_count(&bounds) <= config.enum_threshold {
            match search.decide(&b, &bounds, &open)? {
                RegionOutcome::Safe => continue,
                RegionOutcome::Witness(cex) => {
                    let s = finish(stats, search.lp_calls);
                    return Ok(VerificationResult::falsified(cex, s));
                }
                RegionOutcome::OutOfTime => {
                    let s = finish(stats, search.lp_calls);
                    return Ok(VerificationResult::unknown("time budget exhausted", s));
                }
                RegionOutcome::Undecided(r) => note = Some(r),
            }
        }
        let (dim, width) = b.widest();
        if width <= config.min_box_width {
            undecided.get_or_insert_with(|| {
                note.unwrap_or_else(|| "minimum box width reached with unstable ReLUs".into())
            });
            continue;
        }
        let (lo, hi) = b.bisect(dim);
        stack.push(hi);
        stack.push(lo);
    }

    let s = finish(stats, search.lp_calls);
    Ok(match undecided {
        Some(reason) => VerificationResult::unknown(reason, s),
        None => VerificationResult::verified(s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FullyConnectedNode, LayerNode, ReLUNode};
    use crate::verification::ibp::tests::{ge_property, identity_net};
    use crate::verification::{verify_ibp, InputBox, Status};

    #[test]
    fn ibp_verified_closes_at_root() {
        let r = verify_bab(&identity_net(), &ge_property(2.0), &BabConfig::default()).unwrap();
        assert_eq!(r.status, Status::Verified);
        assert_eq!(r.stats.nodes, 1);
        assert_eq!(verify_ibp(&identity_net(), &ge_property(2.0)).unwrap().status, Status::Verified);
    }

    fn relu_minus_half() -> SequentialNetwork {
        SequentialNetwork::new(
            "r",
            1,
            vec![
                LayerNode::FullyConnected(FullyConnectedNode::new(1, 1, vec![1.0], vec![0.0]).unwrap()),
                LayerNode::ReLU(ReLUNode { dim: 1 }),
                LayerNode::FullyConnected(FullyConnectedNode::new(1, 1, vec![1.0], vec![-0.5]).unwrap()),
            ],
        )
    }

    #[test]
    fn relu_minus_half_is_falsified_on_upper_half() {
        let net = relu_minus_half();
        let witness_set: Vec<f64> = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .filter(|x| net.forward(&[*x]).unwrap()[0] >= 0.0)
            .collect();
        assert!(witness_set.iter().all(|x| *x >= 0.5));
        let r = verify_bab(&net, &ge_property(0.0), &BabConfig::default()).unwrap();
        assert_eq!(r.status, Status::Falsified);
        let x = r.counterexample.unwrap().input[0];
        assert!((0.5 - 1e-7..=1.0).contains(&x));
    }

    #[test]
    fn exact_decision_without_samples() {
        // no sampling: the witness must come from the LP
        let cfg = BabConfig { sample_count: 0, ..Default::default() };
        let net = relu_minus_half();
        let p = Property::new(
            InputBox::new(vec![-1.0], vec![0.9]).unwrap(),
            1,
            ge_property(0.3).violation,
            crate::verification::PropertySource::Smtlib,
        )
        .unwrap();
        let r = verify_bab(&net, &p, &cfg).unwrap();
        assert_eq!(r.status, Status::Falsified);
        assert!(r.stats.lp_calls > 0);
        let p = Property { violation: ge_property(0.45).violation, ..p };
        assert_eq!(verify_bab(&net, &p, &cfg).unwrap().status, Status::Verified);
    }

    #[test]
    fn budgets_give_unknown() {
        let net = SequentialNetwork::initialized("w", 4, &[64, 64], 3, false, 3);
        let p = crate::verification::robustness_property(&[0.5; 4], 0, 3, 0.5, &InputBox::unit(4)).unwrap();
        let cfg = BabConfig { max_nodes: 1, enum_threshold: 0, sample_count: 0, ..Default::default() };
        let r = verify_bab(&net, &p, &cfg).unwrap();
        if r.status == Status::Unknown {
            assert!(r.stats.reason.is_some());
        }
        let cfg = BabConfig { time_budget: Some(1e-9), ..Default::default() };
        let r = verify_bab(&net, &p, &cfg).unwrap();
        assert_eq!(r.status, Status::Unknown);
        assert_eq!(r.stats.reason.as_deref(), Some("time budget exhausted"));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let p = crate::verification::robustness_property(&[0.5; 2], 0, 2, 0.1, &InputBox::unit(2)).unwrap();
        assert!(matches!(
            verify_bab(&identity_net(), &p, &BabConfig::default()),
            Err(VerifyError::InputDim { .. })
        ));
    }
}
