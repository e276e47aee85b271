//! Labelled substreams of the root seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// First word of the ChaCha stream selected by `label` under `root`.
pub fn derive(root: u64, label: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(label));
    rng.next_u64()
}
