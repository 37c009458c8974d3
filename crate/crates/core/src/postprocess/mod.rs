//! From sifted key to final key.
//!
//! The pipeline is estimate -> reconcile -> compress. Reconciliation is an
//! idealised Shannon-cost reconciler: Bob's key is replaced by Alice's (the
//! simulator knows both) and the leakage `ceil(f * h(e) * n)` is charged for
//! audit. The final length applies the secure-fraction bound to the
//! reconciled length; that bound already contains the `f * h(e)` term, so
//! leakage is not subtracted a second time.

mod export;
mod toeplitz;

use std::fmt;

use rand::seq::index;

pub use export::{pack_msb_first, to_hex, unpack_msb_first};
pub use toeplitz::{toeplitz_diagonal, toeplitz_hash};

use crate::error::{Error, Result};
use crate::model::{binary_entropy, secure_fraction_or_none, security_threshold};
use crate::params::SystemParams;
use crate::rng::{stream_rng, Stream, GENERATOR_NAME};
use crate::sim::SiftedKeyPair;

/// Label recorded in reports for the reconciliation model.
pub const RECONCILER_NAME: &str = "ideal-shannon-cost (ground-truth correction, leakage ceil(f*h(e)*n))";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub sampled: usize,
    pub errors: usize,
}

/// Compares a uniformly sampled `sample_fraction` of the key in public.
///
/// Returns the estimate and the undisclosed remainder (original order). A
/// fraction of 1 compares everything and leaves nothing.
pub fn estimate_qber(pair: &SiftedKeyPair, sample_fraction: f64, seed: u64) -> Result<(QberEstimate, SiftedKeyPair)> {
    if pair.is_empty() {
        return Err(Error::EmptyKey);
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::invalid(
            "sample_fraction",
            format!("{sample_fraction} not in (0, 1]"),
        ));
    }
    let n = pair.len();
    let k = ((n as f64 * sample_fraction).round() as usize).clamp(1, n);
    let mut disclosed = vec![false; n];
    let mut rng = stream_rng(seed, Stream::Sampling);
    for i in index::sample(&mut rng, n, k) {
        disclosed[i] = true;
    }

    let mut errors = 0;
    let (mut alice, mut bob, mut slots) = (Vec::new(), Vec::new(), Vec::new());
    let mut origins = pair.origins.as_ref().map(|_| Vec::new());
    for i in 0..n {
        if disclosed[i] {
            errors += usize::from(pair.alice_bits[i] != pair.bob_bits[i]);
        } else {
            alice.push(pair.alice_bits[i]);
            bob.push(pair.bob_bits[i]);
            slots.push(pair.slot_indices[i]);
            if let (Some(out), Some(src)) = (origins.as_mut(), pair.origins.as_ref()) {
                out.push(src[i]);
            }
        }
    }
    let estimate = QberEstimate {
        qber: errors as f64 / k as f64,
        sampled: k,
        errors,
    };
    Ok((estimate, SiftedKeyPair::with_origins(alice, bob, slots, origins)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationResult {
    /// Bob's key after correction; equal to Alice's.
    pub corrected_bits: Vec<bool>,
    pub leaked_bits: u64,
    /// `f * h(qber_est)`, leaked bits per key bit.
    pub disclosed_fraction: f64,
}

pub fn reconcile(pair: &SiftedKeyPair, qber_est: f64, ec_inefficiency: f64) -> Result<ReconciliationResult> {
    if !(0.0..0.5).contains(&qber_est) {
        return Err(Error::invalid("qber_est", format!("{qber_est} not in [0, 0.5)")));
    }
    let disclosed_fraction = ec_inefficiency * binary_entropy(qber_est);
    let leaked_bits = if qber_est == 0.0 {
        0
    } else {
        (disclosed_fraction * pair.len() as f64).ceil() as u64
    };
    Ok(ReconciliationResult {
        corrected_bits: pair.alice_bits.clone(),
        leaked_bits,
        disclosed_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillOptions {
    /// Fraction of the sifted key compared in public. At 1 (the default)
    /// the whole key is compared and kept, the infinite-key idealisation;
    /// below 1 the compared bits are discarded.
    pub sample_fraction: f64,
    pub sample_seed: u64,
    pub hash_seed: u64,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            sample_fraction: 1.0,
            sample_seed: 0,
            hash_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistillStatus {
    Ok,
    /// Nothing to distill.
    NoSiftedKey,
    /// Secure fraction not positive at the estimated QBER.
    ThresholdExceeded {
        qber: f64,
        threshold: Option<f64>,
    },
    /// Positive secure fraction but fewer than one whole bit.
    KeyTooShort,
}

impl DistillStatus {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::NoSiftedKey => "no-sifted-key",
            Self::ThresholdExceeded { .. } => "threshold-exceeded",
            Self::KeyTooShort => "key-too-short",
        }
    }
}

impl fmt::Display for DistillStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ok => f.write_str("ok"),
            Self::NoSiftedKey => f.write_str("no sifted key"),
            Self::ThresholdExceeded {
                qber,
                threshold: Some(t),
            } => write!(
                f,
                "QBER {:.2} % exceeds the {:.2} % secure threshold; no secure key",
                qber * 100.0,
                t * 100.0
            ),
            Self::ThresholdExceeded { qber, threshold: None } => {
                write!(f, "no secure key at QBER {:.2} %", qber * 100.0)
            }
            Self::KeyTooShort => f.write_str("secure length rounds down to zero"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecureKeyReport {
    pub sifted_length: usize,
    pub qber_est: Option<f64>,
    pub estimate_sample_size: usize,
    /// Bits left after the estimate, i.e. the reconciled length.
    pub remaining_length: usize,
    /// Unclamped; `-inf` when undefined.
    pub secure_fraction: f64,
    pub secure_length: usize,
    pub leaked_bits: u64,
    pub disclosed_fraction: f64,
    pub final_key: Vec<bool>,
    pub hash_seed: u64,
    pub options: DistillOptions,
    pub generator: &'static str,
    pub reconciler: &'static str,
    pub status: DistillStatus,
    pub params: SystemParams,
}

impl SecureKeyReport {
    pub fn secure_rate_bps(&self, duration_s: f64) -> f64 {
        self.secure_length as f64 / duration_s
    }
}

/// Estimate, reconcile and compress a sifted key to its secure length.
pub fn distill(pair: &SiftedKeyPair, params: &SystemParams, options: &DistillOptions) -> Result<SecureKeyReport> {
    params.validate()?;
    let mut report = SecureKeyReport {
        sifted_length: pair.len(),
        qber_est: None,
        estimate_sample_size: 0,
        remaining_length: 0,
        secure_fraction: f64::NEG_INFINITY,
        secure_length: 0,
        leaked_bits: 0,
        disclosed_fraction: 0.0,
        final_key: Vec::new(),
        hash_seed: options.hash_seed,
        options: *options,
        generator: GENERATOR_NAME,
        reconciler: RECONCILER_NAME,
        status: DistillStatus::NoSiftedKey,
        params: *params,
    };
    if pair.is_empty() {
        return Ok(report);
    }

    let (estimate, remaining) = if options.sample_fraction >= 1.0 {
        let errors = pair.errors();
        let estimate = QberEstimate {
            qber: errors as f64 / pair.len() as f64,
            sampled: pair.len(),
            errors,
        };
        (estimate, pair.clone())
    } else {
        estimate_qber(pair, options.sample_fraction, options.sample_seed)?
    };
    report.qber_est = Some(estimate.qber);
    report.estimate_sample_size = estimate.sampled;
    report.remaining_length = remaining.len();
    if remaining.is_empty() {
        return Ok(report);
    }

    report.secure_fraction = secure_fraction_or_none(estimate.qber, params);
    if report.secure_fraction <= 0.0 {
        report.status = DistillStatus::ThresholdExceeded {
            qber: estimate.qber,
            threshold: security_threshold(params).ok(),
        };
        if estimate.qber < 0.5 {
            let rec = reconcile(&remaining, estimate.qber, params.ec_inefficiency)?;
            report.leaked_bits = rec.leaked_bits;
            report.disclosed_fraction = rec.disclosed_fraction;
        }
        return Ok(report);
    }

    let rec = reconcile(&remaining, estimate.qber, params.ec_inefficiency)?;
    report.leaked_bits = rec.leaked_bits;
    report.disclosed_fraction = rec.disclosed_fraction;
    report.secure_length = (remaining.len() as f64 * report.secure_fraction).floor() as usize;
    report.final_key = toeplitz_hash(&rec.corrected_bits, report.secure_length, options.hash_seed)?;
    report.status = if report.secure_length == 0 {
        DistillStatus::KeyTooShort
    } else {
        DistillStatus::Ok
    };
    Ok(report)
}
