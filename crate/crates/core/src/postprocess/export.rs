//! Key serialisation: MSB-first packed bytes (zero-padded tail) and hex.

use crate::error::{Error, Result};

pub fn pack_msb_first(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |byte, (i, &b)| byte | (u8::from(b) << (7 - i)))
        })
        .collect()
}

/// Inverse of [`pack_msb_first`] for a known bit count.
pub fn unpack_msb_first(bytes: &[u8], n_bits: usize) -> Result<Vec<bool>> {
    if n_bits > bytes.len() * 8 {
        return Err(Error::Length {
            requested: n_bits,
            available: bytes.len() * 8,
        });
    }
    Ok((0..n_bits).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1 == 1).collect())
}

/// Lowercase hex of the packed key.
pub fn to_hex(bits: &[bool]) -> String {
    pack_msb_first(bits).iter().map(|b| format!("{b:02x}")).collect()
}
