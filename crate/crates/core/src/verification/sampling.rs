use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dims, concrete_witness, Counterexample, Property, VerifyError};
use crate::network::SequentialNetwork;

/// Corners are enumerated only up to this input dimension.
pub const MAX_CORNER_DIM: usize = 12;

/// `n` seeded uniform samples from the box, then every corner when the
/// dimension is at most [`MAX_CORNER_DIM`]. Atoms must hold exactly.
pub fn falsify_sample(
    net: &SequentialNetwork,
    p: &Property,
    n: usize,
    seed: u64,
) -> Result<Option<Counterexample>, VerifyError> {
    check_dims(net, p)?;
    let b = &p.input_box;
    let d = b.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for (i, v) in x.iter_mut().enumerate() {
            *v = if b.hi[i] > b.lo[i] { rng.random_range(b.lo[i]..=b.hi[i]) } else { b.lo[i] };
        }
        if let Some(c) = concrete_witness(net, p, &x, 0.0)? {
            return Ok(Some(c));
        }
    }
    if d <= MAX_CORNER_DIM {
        for mask in 0u32..(1 << d) {
            for (i, v) in x.iter_mut().enumerate() {
                *v = if mask >> i & 1 == 1 { b.hi[i] } else { b.lo[i] };
            }
            if let Some(c) = concrete_witness(net, p, &x, 0.0)? {
                return Ok(Some(c));
            }
        }
    }
    Ok(None)
}
