//! Counter-based random streams keyed by `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator every chain and probe uses.
pub type ChainRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`. Results depend only on
/// the pair, never on thread scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
