//! Explicitly seeded random streams. There is no global generator.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream `id` under `seed`, used to give each replicate or
/// particle path its own generator regardless of how work is scheduled.
pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives a child seed from a generator, advancing it.
pub fn fork_seed(rng: &mut Rng) -> u64 {
    use rand::RngCore;
    rng.next_u64()
}
