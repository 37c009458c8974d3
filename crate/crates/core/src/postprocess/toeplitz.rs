use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Diagonal bits `s` of the `out_len x in_len` Toeplitz matrix,
/// `T[i][j] = s[i - j + in_len - 1]`.
///
/// Read from the hash keystream of `hash_seed` as little-endian `u64` words,
/// least significant bit first, so the matrix is identical on every
/// platform.
pub fn toeplitz_diagonal(hash_seed: u64, out_len: usize, in_len: usize) -> Vec<bool> {
    let len = (out_len + in_len).saturating_sub(1);
    diagonal_words(hash_seed, len)
        .iter()
        .flat_map(|w| (0..64).map(move |b| (w >> b) & 1 == 1))
        .take(len)
        .collect()
}

fn diagonal_words(hash_seed: u64, len: usize) -> Vec<u64> {
    let mut rng = stream_rng(hash_seed, Stream::Hash);
    let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
    if !len.is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (len % 64)) - 1;
        }
    }
    words
}

/// 64 bits of `words` starting at bit `pos`; zero past the end.
fn window(words: &[u64], pos: usize) -> u64 {
    let (w, off) = (pos / 64, pos % 64);
    let lo = words.get(w).copied().unwrap_or(0);
    if off == 0 {
        lo
    } else {
        let hi = words.get(w + 1).copied().unwrap_or(0);
        (lo >> off) | (hi << (64 - off))
    }
}

/// Privacy amplification: `T * key` over GF(2) for the Toeplitz matrix
/// seeded by `hash_seed`.
pub fn toeplitz_hash(key_bits: &[bool], out_len: usize, hash_seed: u64) -> Result<Vec<bool>> {
    let n = key_bits.len();
    if out_len > n {
        return Err(Error::Length {
            requested: out_len,
            available: n,
        });
    }
    if out_len == 0 {
        return Ok(Vec::new());
    }
    // out_i = XOR_l s[i + l] & key[n - 1 - l]
    let mut reversed = vec![0u64; n.div_ceil(64)];
    for (l, &bit) in key_bits.iter().rev().enumerate() {
        if bit {
            reversed[l / 64] |= 1 << (l % 64);
        }
    }
    let diagonal = diagonal_words(hash_seed, out_len + n - 1);
    let row = |i: usize| {
        let acc = reversed
            .iter()
            .enumerate()
            .fold(0u64, |acc, (w, k)| acc ^ (window(&diagonal, i + 64 * w) & k));
        acc.count_ones() & 1 == 1
    };
    Ok(if out_len * n > 1 << 20 {
        (0..out_len).into_par_iter().map(row).collect()
    } else {
        (0..out_len).map(row).collect()
    })
}
