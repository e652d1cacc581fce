//! Lossless pattern compression: row-major run lengths, Elias-gamma coded.
//!
//! The stream starts with one bit giving the symbol of the first run; runs
//! then alternate. The decoder knows the pattern size and stops once it is
//! filled, so trailing bits are ignored.

use crate::error::{Error, Result};
use crate::transform::SparsityPattern;

pub fn compress_pattern(pattern: &SparsityPattern) -> Vec<bool> {
    let keep = pattern.keep();
    let mut out = vec![keep[0]];
    let mut run = 1u64;
    for pair in keep.windows(2) {
        if pair[0] == pair[1] {
            run += 1;
        } else {
            push_gamma(&mut out, run);
            run = 1;
        }
    }
    push_gamma(&mut out, run);
    out
}

pub fn decompress_pattern(bits: &[bool], width: usize, height: usize) -> Result<SparsityPattern> {
    let n = width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("bad pattern size {width}x{height}")))?;
    let mut pos = 0;
    let Some(&first) = bits.first() else {
        return Err(Error::DecodeFailure { unresolved: n });
    };
    pos += 1;
    let mut symbol = first;
    let mut keep = Vec::with_capacity(n);
    while keep.len() < n {
        let run = read_gamma(bits, &mut pos).ok_or(Error::DecodeFailure {
            unresolved: n - keep.len(),
        })?;
        if run > (n - keep.len()) as u64 {
            return Err(Error::Malformed(format!("run of {run} overflows the pattern")));
        }
        keep.extend(std::iter::repeat_n(symbol, run as usize));
        symbol = !symbol;
    }
    SparsityPattern::new(width, height, keep)
}

fn push_gamma(out: &mut Vec<bool>, value: u64) {
    debug_assert!(value >= 1);
    let bits = 64 - value.leading_zeros();
    out.extend(std::iter::repeat_n(false, bits as usize - 1));
    out.extend((0..bits).rev().map(|i| value >> i & 1 == 1));
}

fn read_gamma(bits: &[bool], pos: &mut usize) -> Option<u64> {
    let mut zeros = 0;
    while !*bits.get(*pos)? {
        zeros += 1;
        *pos += 1;
        if zeros > 63 {
            return None;
        }
    }
    let mut value = 0u64;
    for _ in 0..=zeros {
        value = value << 1 | *bits.get(*pos)? as u64;
        *pos += 1;
    }
    Some(value)
}
