//! Brute-force cost of the truncated Hello tag.

use super::CryptoError;

/// Expected time to find a tag collision by brute force: `2^(tag_bits/2)`
/// MAC evaluations at `mac_compute_seconds` each.
///
/// With a 32-bit tag and 0.1 ms per MAC this is about 6.55 s, which bounds how
/// long a Hello-stage key may stay valid.
pub fn collision_time_estimate(tag_bits: u32, mac_compute_seconds: f64) -> Result<f64, CryptoError> {
    if !(mac_compute_seconds.is_finite() && mac_compute_seconds > 0.0) {
        return Err(CryptoError::Domain(format!(
            "MAC compute time must be positive and finite, got {mac_compute_seconds}"
        )));
    }
    Ok((f64::from(tag_bits) / 2.0).exp2() * mac_compute_seconds)
}
