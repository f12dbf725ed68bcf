use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for an independent `stream` derived from `seed`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
