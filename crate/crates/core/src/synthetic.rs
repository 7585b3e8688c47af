//! Seeded random layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engines::ConvSpec;
use crate::tensor::{FilterBank, Tensor4};

/// Input and filters with entries drawn from U(−1, 1). The input is drawn
/// first, then the filters, both in storage order.
pub fn random_layer(spec: &ConvSpec, seed: u64) -> (Tensor4, FilterBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor4::from_fn(spec.n, spec.h, spec.w, spec.c, |_, _, _, _| {
        rng.gen_range(-1.0f32..1.0)
    })
    .expect("validated spec");
    let w = FilterBank::from_fn(spec.k, spec.r, spec.s, spec.c, |_, _, _, _| {
        rng.gen_range(-1.0f32..1.0)
    })
    .expect("validated spec");
    (x, w)
}

/// Square layers: h = w ∈ {4, 6, 8, 16}, c ∈ {1, 3, 16}, k ∈ {1, 8},
/// pad ∈ {0, 1}, n ∈ {1, 2}.
pub fn oracle_grid() -> Vec<ConvSpec> {
    let mut out = Vec::with_capacity(96);
    for hw in [4, 6, 8, 16] {
        for c in [1, 3, 16] {
            for k in [1, 8] {
                for pad in [0, 1] {
                    for n in [1, 2] {
                        out.push(ConvSpec::new(n, c, hw, hw, k, pad).expect("grid spec"));
                    }
                }
            }
        }
    }
    out
}
