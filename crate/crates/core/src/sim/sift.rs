use super::{ClickStream, Origin};
use crate::error::{Error, Result};
use crate::rng::PhaseSequence;

/// Aligned raw keys of both parties, one bit per announced click.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKeyPair {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    pub slot_indices: Vec<u64>,
    /// Ground truth per bit, when the pair came from a simulation.
    pub origins: Option<Vec<Origin>>,
    /// Hamming distance over length; `None` for an empty key.
    pub measured_qber: Option<f64>,
}

impl SiftedKeyPair {
    pub fn new(alice_bits: Vec<bool>, bob_bits: Vec<bool>, slot_indices: Vec<u64>) -> Result<Self> {
        Self::with_origins(alice_bits, bob_bits, slot_indices, None)
    }

    pub fn with_origins(
        alice_bits: Vec<bool>,
        bob_bits: Vec<bool>,
        slot_indices: Vec<u64>,
        origins: Option<Vec<Origin>>,
    ) -> Result<Self> {
        let n = alice_bits.len();
        if bob_bits.len() != n || slot_indices.len() != n || origins.as_ref().is_some_and(|o| o.len() != n) {
            return Err(Error::invalid(
                "sifted key",
                "bit, slot and origin lists differ in length",
            ));
        }
        let measured_qber = if n == 0 {
            None
        } else {
            let errors = alice_bits.iter().zip(&bob_bits).filter(|(a, b)| a != b).count();
            Some(errors as f64 / n as f64)
        };
        Ok(Self {
            alice_bits,
            bob_bits,
            slot_indices,
            origins,
            measured_qber,
        })
    }

    pub fn len(&self) -> usize {
        self.alice_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice_bits.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.alice_bits
            .iter()
            .zip(&self.bob_bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// `(errors, bits)` restricted to one ground-truth origin.
    pub fn errors_by_origin(&self, origin: Origin) -> Option<(usize, usize)> {
        let origins = self.origins.as_ref()?;
        let mut errors = 0;
        let mut total = 0;
        for ((a, b), o) in self.alice_bits.iter().zip(&self.bob_bits).zip(origins) {
            if *o == origin {
                total += 1;
                errors += usize::from(a != b);
            }
        }
        Some((errors, total))
    }
}

/// Public-channel sifting: Bob announces click times, both sides keep one
/// bit per click. Alice's bit is the phase difference at that slot, Bob's
/// bit is 0 for D1 and 1 for D2.
pub fn sift(stream: &ClickStream, phases: &PhaseSequence) -> Result<SiftedKeyPair> {
    let n = stream.events.len();
    let mut alice = Vec::with_capacity(n);
    let mut bob = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    for e in &stream.events {
        let bit = phases.difference(e.slot_index).ok_or(Error::IndexOutOfRange {
            slot: e.slot_index,
            len: phases.len(),
        })?;
        alice.push(bit);
        bob.push(e.detector.bit());
        slots.push(e.slot_index);
        origins.push(e.origin);
    }
    SiftedKeyPair::with_origins(alice, bob, slots, Some(origins))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalRates {
    pub sifted_rate_bps: f64,
    pub qber: Option<f64>,
}

pub fn empirical_rates(pair: &SiftedKeyPair, duration_s: f64) -> Result<EmpiricalRates> {
    if !(duration_s > 0.0) {
        return Err(Error::invalid("duration_s", format!("{duration_s} must be > 0")));
    }
    Ok(EmpiricalRates {
        sifted_rate_bps: pair.len() as f64 / duration_s,
        qber: pair.measured_qber,
    })
}
