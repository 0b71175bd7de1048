//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, domain, index)`: a ChaCha8 generator
//! keyed by the mixed seed and domain, positioned on stream `index`. Any index
//! can be evaluated independently of the others, so parallel generation gives
//! bit-identical results to sequential generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent families of streams derived from one user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Centres `omega_n` of the covering process.
    Cover,
    /// Points of the empirical ball-mass reservoir.
    Reservoir,
    /// Anything else a caller needs, tagged by a user constant.
    Aux(u64),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Cover => 0x636f_7665_7200_0001,
            Domain::Reservoir => 0x7265_7365_7276_0002,
            Domain::Aux(t) => 0x6175_7800_0000_0003 ^ t.rotate_left(17),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for draw number `index` of `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain.tag()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn unit_f64<R: Rng>(rng: &mut R) -> f64 {
    (rng.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
