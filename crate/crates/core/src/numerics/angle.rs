use crate::error::{degenerate, shape, Result};

use super::vector::dot;

/// Angle in degrees, in `[0, 180]`, between two flattened update directions.
pub fn angle_degrees(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape!("angle between lengths {} and {}", a.len(), b.len()));
    }
    angle_between_blocks(&[(a, b)])
}

/// Angle between the concatenations of matching blocks.
///
/// Uses `2 atan2(‖â − b̂‖, ‖â + b̂‖)`, which stays accurate near 0° and 180°
/// where `acos` of the cosine loses half the digits.
pub(crate) fn angle_between_blocks(blocks: &[(&[f64], &[f64])]) -> Result<f64> {
    let (mut aa, mut bb) = (0.0, 0.0);
    for (a, b) in blocks {
        if a.len() != b.len() {
            return Err(shape!("angle between lengths {} and {}", a.len(), b.len()));
        }
        aa += dot(a, a);
        bb += dot(b, b);
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(degenerate!("angle with a zero-norm direction"));
    }
    let (ia, ib) = (1.0 / libm::sqrt(aa), 1.0 / libm::sqrt(bb));
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in blocks {
        for (x, y) in a.iter().zip(b.iter()) {
            let (u, v) = (x * ia, y * ib);
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
    }
    Ok((2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum))).to_degrees())
}
