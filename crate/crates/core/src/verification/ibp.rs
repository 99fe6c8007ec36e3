use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use super::{
    check_dims, concrete_witness, BabConfig, FoldedNetwork, InputBox, Property, SearchStats,
    VerificationResult, VerifyError, WITNESS_TOLERANCE,
};
use crate::network::SequentialNetwork;

/// Interval bounds of one affine layer; `post` equals `pre` on the output
/// layer and is the ReLU image elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub pre_lo: Vec<f64>,
    pub pre_hi: Vec<f64>,
    pub post_lo: Vec<f64>,
    pub post_hi: Vec<f64>,
}

pub(crate) fn propagate(net: &FoldedNetwork, lo: &[f64], hi: &[f64]) -> Vec<LayerBounds> {
    let mut out = Vec::with_capacity(net.layers.len());
    let (mut cur_lo, mut cur_hi) = (lo.to_vec(), hi.to_vec());
    let last = net.layers.len() - 1;
    for (k, (w, b)) in net.layers.iter().enumerate() {
        let cols = w.cols();
        let mut pre_lo = b.clone();
        let mut pre_hi = b.clone();
        for i in 0..b.len() {
            let row = &w.data()[i * cols..(i + 1) * cols];
            let (mut l, mut h) = (0.0, 0.0);
            for j in 0..cols {
                let a = row[j];
                if a >= 0.0 {
                    l += a * cur_lo[j];
                    h += a * cur_hi[j];
                } else {
                    l += a * cur_hi[j];
                    h += a * cur_lo[j];
                }
            }
            pre_lo[i] += l;
            pre_hi[i] += h;
        }
        let (post_lo, post_hi) = if k == last {
            (pre_lo.clone(), pre_hi.clone())
        } else {
            (
                pre_lo.iter().map(|v| v.max(0.0)).collect(),
                pre_hi.iter().map(|v| v.max(0.0)).collect(),
            )
        };
        cur_lo.clone_from(&post_lo);
        cur_hi.clone_from(&post_hi);
        out.push(LayerBounds {
            pre_lo,
            pre_hi,
            post_lo,
            post_hi,
        });
    }
    out
}

/// Interval bounds for every layer of the folded network over `input_box`.
pub fn interval_forward(
    net: &SequentialNetwork,
    input_box: &InputBox,
) -> Result<Vec<LayerBounds>, VerifyError> {
    if input_box.dim() != net.input_dim {
        return Err(VerifyError::InputDim {
            network: net.input_dim,
            property: input_box.dim(),
        });
    }
    let folded = FoldedNetwork::new(net)?;
    Ok(propagate(&folded, &input_box.lo, &input_box.hi))
}

/// Disjuncts not refuted by the output bounds.
pub(crate) fn open_disjuncts(p: &Property, out_lo: &[f64], out_hi: &[f64]) -> Vec<usize> {
    (0..p.violation.len())
        .filter(|&d| {
            !p.violation[d]
                .iter()
                .any(|a| a.lower_bound(out_lo, out_hi) > a.rhs)
        })
        .collect()
}

/// Box center followed by `n` seeded uniform points.
pub(crate) fn probe_points(b: &InputBox, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(b.center());
    for _ in 0..n {
        pts.push(
            b.lo.iter()
                .zip(&b.hi)
                .map(|(l, h)| if h > l { rng.random_range(*l..=*h) } else { *l })
                .collect(),
        );
    }
    pts
}

pub fn verify_ibp(net: &SequentialNetwork, p: &Property) -> Result<VerificationResult, VerifyError> {
    verify_ibp_with(net, p, &BabConfig::default())
}

/// Interval refutation plus a seeded sampling pass; never searches.
pub fn verify_ibp_with(
    net: &SequentialNetwork,
    p: &Property,
    config: &BabConfig,
) -> Result<VerificationResult, VerifyError> {
    let start = Instant::now();
    check_dims(net, p)?;
    config.validate()?;
    let bounds = interval_forward(net, &p.input_box)?;
    let out = bounds.last().expect("at least one layer");
    let mut stats = SearchStats {
        nodes: 1,
        ..Default::default()
    };
    if open_disjuncts(p, &out.post_lo, &out.post_hi).is_empty() {
        stats.wall_time_secs = start.elapsed().as_secs_f64();
        return Ok(VerificationResult::verified(stats));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for x in probe_points(&p.input_box, config.sample_count, &mut rng) {
        if let Some(cex) = concrete_witness(net, p, &x, WITNESS_TOLERANCE)? {
            stats.wall_time_secs = start.elapsed().as_secs_f64();
            return Ok(VerificationResult::falsified(cex, stats));
        }
    }
    stats.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(VerificationResult::unknown("IBP inconclusive", stats))
}
