use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `index` of the generator seeded by `seed`.
///
/// ChaCha is counter based, so each `(seed, index)` pair yields its own
/// reproducible sequence regardless of the order in which streams are used.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed; used to give nested loops their own seed space.
pub fn child_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
