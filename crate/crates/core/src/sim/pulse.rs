use rand::Rng;

use super::{warn_if_saturating, ClickEvent, ClickStream, Detector, Origin, SimKernel, SimRun};
use crate::error::{Error, Result};
use crate::model::click_probability;
use crate::params::{ChannelSpec, SystemParams};
use crate::rng::{geometric_failures, stream_rng, PhaseSequence, Stream};

/// Per-slot simulation of transmitter, channel, interferometer and both
/// detectors.
///
/// Each slot independently carries a signal detection (probability
/// `p_signal`) routed to the port selected by the phase difference, wrong
/// with probability `e_s`, and a dark count on each detector (`DCR * t_w`).
/// Empty slots are skipped in bulk using the geometric law of the next
/// non-empty slot, which leaves the per-slot joint distribution unchanged.
pub fn simulate_pulse_level(
    params: &SystemParams,
    channel: &ChannelSpec,
    n_slots: u64,
    seed: u64,
) -> Result<(ClickStream, PhaseSequence)> {
    if n_slots < 2 {
        return Err(Error::invalid("n_slots", format!("{n_slots} must be >= 2")));
    }
    let probs = click_probability(params, channel)?;
    warn_if_saturating(params, probs.p_click);

    let p_signal = probs.p_signal;
    let p_dark1 = params.detector1.dcr * params.time_window_s;
    let p_dark2 = params.detector2.dcr * params.time_window_s;
    // P(any dark) and P(slot not empty), accurate for tiny probabilities.
    let p_any_dark = -((-p_dark1).ln_1p() + (-p_dark2).ln_1p()).exp_m1();
    let p_busy = -((-p_signal).ln_1p() + (-p_dark1).ln_1p() + (-p_dark2).ln_1p()).exp_m1();

    let phases = PhaseSequence::new(seed, n_slots);
    let dead = params.dead_time_slots();
    let mut rng = stream_rng(seed, Stream::Events);
    let mut events = Vec::new();
    let mut next_free = 1u64;

    loop {
        let skip = geometric_failures(&mut rng, p_busy);
        let Some(slot) = next_free.checked_add(skip) else {
            break;
        };
        if slot >= n_slots {
            break;
        }

        // Joint outcome of the three Bernoulli trials given at least one fired.
        let signal = rng.random::<f64>() * p_busy < p_signal;
        let (dark1, dark2) = if signal {
            (rng.random::<f64>() < p_dark1, rng.random::<f64>() < p_dark2)
        } else {
            let d1 = rng.random::<f64>() * p_any_dark < p_dark1;
            (d1, !d1 || rng.random::<f64>() < p_dark2)
        };

        let mut candidates: [Option<ClickEvent>; 3] = [None; 3];
        let mut n = 0;
        if signal {
            let correct = Detector::for_bit(phases.difference(slot).expect("slot in range"));
            let detector = if rng.random::<f64>() < params.baseline_error {
                correct.other()
            } else {
                correct
            };
            candidates[n] = Some(ClickEvent {
                slot_index: slot,
                detector,
                origin: Origin::Signal,
            });
            n += 1;
        }
        for (fired, detector) in [(dark1, Detector::D1), (dark2, Detector::D2)] {
            if fired {
                candidates[n] = Some(ClickEvent {
                    slot_index: slot,
                    detector,
                    origin: Origin::Dark,
                });
                n += 1;
            }
        }
        let pick = if n > 1 { rng.random_range(0..n) } else { 0 };
        events.push(candidates[pick].expect("at least one candidate"));

        match slot.checked_add(dead) {
            Some(s) => next_free = s,
            None => break,
        }
    }

    let stream = ClickStream {
        events,
        duration_slots: n_slots,
        params: *params,
        channel: *channel,
        kernel: PulseLevelKernel.name(),
        seed,
    };
    Ok((stream, phases))
}

/// Registered as `pulse`.
pub struct PulseLevelKernel;

impl SimKernel for PulseLevelKernel {
    fn name(&self) -> &'static str {
        "pulse"
    }

    fn description(&self) -> &'static str {
        "per-slot signal and dark-count trials with shared dead time"
    }

    fn simulate(&self, params: &SystemParams, channel: &ChannelSpec, n_slots: u64, seed: u64) -> Result<SimRun> {
        let (stream, phases) = simulate_pulse_level(params, channel, n_slots, seed)?;
        Ok(SimRun { stream, phases })
    }
}
