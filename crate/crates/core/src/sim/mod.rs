//! Protocol-level Monte Carlo of the link.
//!
//! A kernel turns `(params, channel, n_slots, seed)` into a [`SimRun`]: the
//! merged click stream of both detectors plus the transmitter's phase
//! sequence. Kernels are registered by name in a [`KernelRegistry`] and
//! chosen at run time.

mod event;
mod pulse;
mod sift;

use std::collections::BTreeMap;
use std::fmt;

pub use event::{simulate_event_driven, EventDrivenKernel};
pub use pulse::{simulate_pulse_level, PulseLevelKernel};
pub use sift::{empirical_rates, sift, EmpiricalRates, SiftedKeyPair};

use crate::error::{Error, Result};
use crate::params::{ChannelSpec, SystemParams};
use crate::rng::PhaseSequence;

/// Above this expected number of clicks per dead time the per-slot
/// abstraction starts to lose accuracy against the exponential dead-time
/// law; kernels log a warning.
pub const DEAD_TIME_WARN_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Fires for phase difference 0.
    D1,
    /// Fires for phase difference pi.
    D2,
}

impl Detector {
    /// Bob's key bit for a click on this detector.
    pub fn bit(self) -> bool {
        matches!(self, Detector::D2)
    }

    pub fn for_bit(bit: bool) -> Self {
        if bit {
            Detector::D2
        } else {
            Detector::D1
        }
    }

    pub fn other(self) -> Self {
        match self {
            Detector::D1 => Detector::D2,
            Detector::D2 => Detector::D1,
        }
    }
}

/// Ground-truth cause of a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Signal,
    Dark,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Signal => "signal",
            Origin::Dark => "dark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickEvent {
    pub slot_index: u64,
    pub detector: Detector,
    pub origin: Origin,
}

/// Accepted clicks of one run, strictly increasing in slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub events: Vec<ClickEvent>,
    pub duration_slots: u64,
    pub params: SystemParams,
    pub channel: ChannelSpec,
    pub kernel: &'static str,
    pub seed: u64,
}

impl ClickStream {
    pub fn duration_s(&self) -> f64 {
        self.duration_slots as f64 / self.params.clock_rate_hz
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.events.iter().filter(|e| e.origin == origin).count()
    }

    /// Smallest slot gap between consecutive clicks.
    pub fn min_gap(&self) -> Option<u64> {
        self.events.windows(2).map(|w| w[1].slot_index - w[0].slot_index).min()
    }

    /// Slot gaps between consecutive clicks.
    pub fn gaps(&self) -> Vec<u64> {
        self.events
            .windows(2)
            .map(|w| w[1].slot_index - w[0].slot_index)
            .collect()
    }

    /// Checks ordering, the first-slot rule and the dead-time spacing.
    pub fn respects_dead_time(&self) -> bool {
        let dead = self.params.dead_time_slots();
        self.events.first().is_none_or(|e| e.slot_index >= 1)
            && self
                .events
                .windows(2)
                .all(|w| w[1].slot_index >= w[0].slot_index + dead)
    }
}

/// Output of one kernel run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub stream: ClickStream,
    pub phases: PhaseSequence,
}

/// A simulation strategy.
pub trait SimKernel: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn simulate(&self, params: &SystemParams, channel: &ChannelSpec, n_slots: u64, seed: u64) -> Result<SimRun>;
}

/// Kernels by name.
pub struct KernelRegistry {
    kernels: BTreeMap<&'static str, Box<dyn SimKernel>>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self {
            kernels: BTreeMap::new(),
        }
    }

    /// Registry with the pulse-level (`pulse`) and event-driven (`event`)
    /// kernels.
    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(PulseLevelKernel));
        registry.register(Box::new(EventDrivenKernel));
        registry
    }

    /// Adds a kernel, replacing any kernel with the same name.
    pub fn register(&mut self, kernel: Box<dyn SimKernel>) {
        self.kernels.insert(kernel.name(), kernel);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SimKernel> {
        self.kernels
            .get(name)
            .map(|k| k.as_ref())
            .ok_or_else(|| Error::UnknownKernel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.kernels.keys().copied()
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Whole clock slots in `duration_s`.
pub fn slots_for_duration(params: &SystemParams, duration_s: f64) -> Result<u64> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid("duration_s", format!("{duration_s} must be > 0")));
    }
    let slots = (duration_s * params.clock_rate_hz).round();
    if slots >= u64::MAX as f64 {
        return Err(Error::Overflow(format!(
            "{duration_s} s at {} Hz exceeds the u64 slot counter",
            params.clock_rate_hz
        )));
    }
    Ok(slots as u64)
}

pub(crate) fn warn_if_saturating(params: &SystemParams, p_click: f64) {
    let load = p_click * params.clock_rate_hz * params.dead_time_s;
    if load > DEAD_TIME_WARN_THRESHOLD {
        log::warn!(
            "p_click * nu * t_d = {load:.3e} exceeds {DEAD_TIME_WARN_THRESHOLD}; \
             simulated rates will drift from the exponential dead-time law"
        );
    }
}
