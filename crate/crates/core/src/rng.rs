//! Seeded random sources.
//!
//! Every random quantity derives from one `u64` seed through ChaCha8 with
//! a distinct stream id per purpose, so a run is reproducible from the seed
//! alone and the purposes never share keystream.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recorded in every output that depends on randomness.
pub const GENERATOR_NAME: &str = "ChaCha8Rng/rand_chacha-0.9/seed_from_u64/stream-split";

/// Keystream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Events = 0,
    Phases = 1,
    Hash = 2,
    Sampling = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Number of failures before the first success of a Bernoulli(`p`) process,
/// by inversion. `u64::MAX` when `p == 0`.
///
/// `rand_distr::Geometric` is not used: its set-up loops on `1 - p == 1`
/// for `p` below machine epsilon, which deep-loss channels reach.
pub fn geometric_failures<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p <= 0.0 {
        return u64::MAX;
    }
    if p >= 1.0 {
        return 0;
    }
    // u in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Transmitter phase choices, one bit per clock slot (bit `b` means phase
/// `b * pi`).
///
/// Bits are never materialised: bit `i` is read from the phase keystream at
/// word `i / 32`, so arbitrarily long runs cost O(1) memory and any slot can
/// be looked up directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSequence {
    seed: u64,
    length: u64,
}

impl PhaseSequence {
    pub fn new(seed: u64, length: u64) -> Self {
        Self { seed, length }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> u64 {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    fn word(&self, index: u64) -> u32 {
        let mut rng = stream_rng(self.seed, Stream::Phases);
        rng.set_word_pos(index as u128);
        rng.next_u32()
    }

    /// Phase bit of slot `slot`, `None` past the end.
    pub fn bit(&self, slot: u64) -> Option<bool> {
        if slot >= self.length {
            return None;
        }
        Some((self.word(slot / 32) >> (slot % 32)) & 1 == 1)
    }

    /// `phi_slot XOR phi_(slot-1)`, the bit the interferometer reads out.
    /// `None` for slot 0 and past the end.
    pub fn difference(&self, slot: u64) -> Option<bool> {
        if slot == 0 || slot >= self.length {
            return None;
        }
        let hi = self.word(slot / 32);
        let lo = if (slot - 1) / 32 == slot / 32 {
            hi
        } else {
            self.word((slot - 1) / 32)
        };
        let a = (hi >> (slot % 32)) & 1;
        let b = (lo >> ((slot - 1) % 32)) & 1;
        Some(a != b)
    }

    /// All bits, for short sequences.
    pub fn to_bits(&self) -> Vec<bool> {
        let mut rng = stream_rng(self.seed, Stream::Phases);
        let mut out = Vec::with_capacity(self.length as usize);
        let mut word = 0u32;
        for i in 0..self.length {
            if i % 32 == 0 {
                word = rng.next_u32();
            }
            out.push((word >> (i % 32)) & 1 == 1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_lookup_matches_sequential_read() {
        let phases = PhaseSequence::new(7, 1000);
        let bits = phases.to_bits();
        for (i, &b) in bits.iter().enumerate() {
            assert_eq!(phases.bit(i as u64), Some(b));
        }
        for i in 1..1000u64 {
            assert_eq!(phases.difference(i), Some(bits[i as usize] ^ bits[i as usize - 1]));
        }
        assert_eq!(phases.difference(0), None);
        assert_eq!(phases.bit(1000), None);
    }

    #[test]
    fn phases_are_balanced_and_seeded() {
        let a = PhaseSequence::new(1, 100_000).to_bits();
        let ones = a.iter().filter(|&&b| b).count() as f64;
        // 5 sigma on a fair coin
        assert!((ones - 50_000.0).abs() < 5.0 * (25_000f64).sqrt());
        assert_eq!(a, PhaseSequence::new(1, 100_000).to_bits());
        assert_ne!(a, PhaseSequence::new(2, 100_000).to_bits());
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = stream_rng(5, Stream::Events);
        let mut b = stream_rng(5, Stream::Hash);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn geometric_edge_cases_and_mean() {
        let mut rng = stream_rng(3, Stream::Events);
        assert_eq!(geometric_failures(&mut rng, 0.0), u64::MAX);
        assert_eq!(geometric_failures(&mut rng, 1.0), 0);
        // terminates for p below machine epsilon
        assert!(geometric_failures(&mut rng, 1e-20) > 1_000_000);

        let p = 0.01;
        let n = 200_000;
        let mean = (0..n).map(|_| geometric_failures(&mut rng, p) as f64).sum::<f64>() / n as f64;
        let expected = (1.0 - p) / p;
        let sd = ((1.0 - p) / (p * p)).sqrt() / (n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd, "{mean} vs {expected}");
    }
}
