use rand::Rng;

use super::{slots_for_duration, warn_if_saturating, ClickEvent, ClickStream, Detector, Origin, SimKernel, SimRun};
use crate::error::Result;
use crate::model::click_probability;
use crate::params::{ChannelSpec, SystemParams};
use crate::rng::{geometric_failures, stream_rng, PhaseSequence, Stream};

fn run(params: &SystemParams, channel: &ChannelSpec, n_slots: u64, seed: u64) -> Result<SimRun> {
    let probs = click_probability(params, channel)?;
    warn_if_saturating(params, probs.p_click);
    let phases = PhaseSequence::new(seed, n_slots);
    let mut events = Vec::new();

    if probs.p_click > 0.0 {
        let mut rng = stream_rng(seed, Stream::Events);
        let dead = params.dead_time_slots();
        let signal_share = probs.p_signal / probs.p_click;
        let dcr_total = params.detector1.dcr + params.detector2.dcr;
        let d1_dark_share = if dcr_total > 0.0 {
            params.detector1.dcr / dcr_total
        } else {
            0.5
        };

        // Gaps are 1 + Geom(p_click) with gaps shorter than the dead time
        // redrawn. Conditioned on surviving, such a gap is dead + Geom(p_click)
        // (memorylessness), which is sampled directly instead of by rejection.
        let mut slot = 1u64.checked_add(geometric_failures(&mut rng, probs.p_click));
        while let Some(s) = slot.filter(|&s| s < n_slots) {
            let event = if rng.random::<f64>() < signal_share {
                let correct = Detector::for_bit(phases.difference(s).expect("slot in range"));
                let detector = if rng.random::<f64>() < params.baseline_error {
                    correct.other()
                } else {
                    correct
                };
                ClickEvent {
                    slot_index: s,
                    detector,
                    origin: Origin::Signal,
                }
            } else {
                let detector = if rng.random::<f64>() < d1_dark_share {
                    Detector::D1
                } else {
                    Detector::D2
                };
                ClickEvent {
                    slot_index: s,
                    detector,
                    origin: Origin::Dark,
                }
            };
            events.push(event);
            slot = dead
                .checked_add(geometric_failures(&mut rng, probs.p_click))
                .and_then(|gap| s.checked_add(gap));
        }
    }

    Ok(SimRun {
        stream: ClickStream {
            events,
            duration_slots: n_slots,
            params: *params,
            channel: *channel,
            kernel: EventDrivenKernel.name(),
            seed,
        },
        phases,
    })
}

/// Samples inter-click gaps directly with per-slot click probability
/// `p_click`, then classifies each click as signal or dark and assigns a
/// detector. Statistically equivalent to the pulse-level kernel and cheap
/// when clicks are rare.
pub fn simulate_event_driven(
    params: &SystemParams,
    channel: &ChannelSpec,
    duration_s: f64,
    seed: u64,
) -> Result<ClickStream> {
    let n_slots = slots_for_duration(params, duration_s)?;
    Ok(run(params, channel, n_slots, seed)?.stream)
}

/// Registered as `event`.
pub struct EventDrivenKernel;

impl SimKernel for EventDrivenKernel {
    fn name(&self) -> &'static str {
        "event"
    }

    fn description(&self) -> &'static str {
        "geometric inter-click gaps with signal/dark classification"
    }

    fn simulate(&self, params: &SystemParams, channel: &ChannelSpec, n_slots: u64, seed: u64) -> Result<SimRun> {
        if n_slots < 2 {
            return Err(crate::Error::invalid("n_slots", format!("{n_slots} must be >= 2")));
        }
        run(params, channel, n_slots, seed)
    }
}
