use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Used to derive independent sub-seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn derive_seed(seed: u64, salt: &str) -> u64 {
    mix(seed ^ fnv1a(salt.as_bytes()))
}

pub(crate) fn rng(seed: u64, salt: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, salt))
}

/// Deterministic uniform draw in `[0, 1)` from a seed.
pub(crate) fn unit(seed: u64) -> f64 {
    (mix(seed) >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn contains_ci(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return true;
    }
    let h = haystack.to_lowercase();
    h.contains(&needle.to_lowercase())
}

/// Replace `{key}` placeholders.
pub(crate) fn fill(template: &str, pairs: &[(&str, &str)]) -> alloc::string::String {
    let mut out = alloc::string::String::from(template);
    for (k, v) in pairs {
        let pat = alloc::format!("{{{k}}}");
        out = out.replace(&pat, v);
    }
    out
}

pub(crate) fn capitalize(s: &str) -> alloc::string::String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => alloc::string::String::new(),
    }
}
