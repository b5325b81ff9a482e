//! Seed derivation. Every stochastic stage draws its stream from the master
//! seed plus a fixed stage label, so reruns are bit-identical and stages stay
//! independent of each other.

/// splitmix64 finalizer; the standard 64-bit avalanche mix.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stage `label`, instance `index`, derived from `master`.
pub fn stage_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut acc = mix(master);
    for &b in label.as_bytes() {
        acc = mix(acc ^ u64::from(b));
    }
    mix(acc ^ index)
}

/// Folds a slice of floats into a seed. Used where a stream must follow the
/// *content* of a value (e.g. a cluster center) rather than its position, so
/// that relabeling permutations reproduce the same draws.
pub fn value_seed(master: u64, values: &[f64]) -> u64 {
    let mut acc = mix(master);
    for v in values {
        acc = mix(acc ^ v.to_bits());
    }
    acc
}
