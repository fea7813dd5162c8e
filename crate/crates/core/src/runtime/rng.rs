//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(key, counter, sub)`, so re-running a
//! kernel on junk lanes under masking cannot disturb any stream, and both
//! engines see identical numbers for identical per-lane programs.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 random bits for a `(key, counter, sub)` triple.
pub fn bits(key: i64, counter: i64, sub: u64) -> u64 {
    let mut h = splitmix_finalize((key as u64).wrapping_add(GOLDEN));
    h = splitmix_finalize(h ^ (counter as u64).wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    splitmix_finalize(h.wrapping_add(sub.wrapping_mul(GOLDEN)))
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn uniform(key: i64, counter: i64, sub: u64) -> f64 {
    (bits(key, counter, sub) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller on two sub-stream uniforms.
pub fn normal(key: i64, counter: i64, index: u64) -> f64 {
    let u1 = uniform(key, counter, 2 * index + 1);
    let u2 = uniform(key, counter, 2 * index + 2);
    // 1 - u1 lies in (0, 1], so the log is finite.
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
