//! Deterministic random substreams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by
//! `(seed, purpose, index)`, so drops and coherence blocks can run in any
//! order or in parallel and still reproduce bit-identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{cplx, Real, C};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Placement = 1,
    Shadowing = 2,
    Block = 3,
    WarmUp = 4,
    Drop = 5,
    Fig2 = 6,
    Gate = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; distinct `(purpose, index)` pairs give unrelated seeds.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64((purpose as u64) << 56 ^ splitmix64(index)))
}

pub type SimRng = ChaCha8Rng;

pub fn substream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}

/// One `CN(0, 1)` sample.
#[inline]
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cplx(T::of(re * std::f64::consts::FRAC_1_SQRT_2), T::of(im * std::f64::consts::FRAC_1_SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, Purpose::Block, 3).random();
        let b: u64 = substream(7, Purpose::Block, 3).random();
        let c: u64 = substream(7, Purpose::Block, 4).random();
        let d: u64 = substream(7, Purpose::WarmUp, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn complex_normal_has_unit_power() {
        let mut rng = substream(1, Purpose::Gate, 0);
        let n = 200_000;
        let p: f64 = (0..n).map(|_| complex_normal::<f64, _>(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.01, "{p}");
    }
}
