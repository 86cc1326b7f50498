//! Seed derivation tree.
//!
//! Every random stream is addressed by `(parent_seed, purpose_tag, index)`
//! and hashed into an independent ChaCha8 seed, so generation order and
//! thread scheduling never change a value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::DenseVector;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Child seed for `(parent, tag, index)`.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let h = splitmix64(parent ^ fnv1a(tag));
    splitmix64(h ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_for(parent: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, tag, index))
}

pub(crate) fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform direction on the sphere of radius `radius`.
pub(crate) fn sphere_sample(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DenseVector {
    loop {
        let g = DenseVector::from_vec(gaussian_vec(rng, dim));
        let n = g.norm();
        if n > 0.0 {
            return g.scaled(radius / n);
        }
    }
}
