//! Closed-form link model.
//!
//! Per clock slot, a click is either a signal detection with probability
//! `mu * eta * 10^(-(loss + system_loss)/10)` or a dark count inside the
//! acceptance window of either detector. Dead time of the time-interval
//! analyzer suppresses the sifted rate as `nu * p * exp(-nu * p * t_d)`.
//! Signal clicks err with the interferometer floor `e_s`, dark clicks are
//! coin flips, and the secure fraction follows the bound against general
//! individual attacks for weak coherent DPS-QKD:
//!
//! ```text
//! F(e) = -(1 - 2 mu) log2(1 - e^2 - (1 - 6e)^2 / 2) - f h(e)
//! ```
//!
//! with `h` the ordinary (non-negative) binary entropy.

use crate::error::{Error, Result};
use crate::params::{ChannelSpec, SystemParams};

/// Per-slot click probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbabilities {
    pub p_signal: f64,
    pub p_dark: f64,
    pub p_click: f64,
}

/// All link figures at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPoint {
    pub p_signal: f64,
    pub p_dark: f64,
    pub p_click: f64,
    pub sifted_rate_bps: f64,
    pub qber: f64,
    /// Unclamped secure fraction; `-inf` when the logarithm is undefined.
    pub secure_fraction: f64,
    /// `max(0, sifted_rate_bps * secure_fraction)`.
    pub secure_rate_bps: f64,
}

/// Probability of a click in one slot, split by origin.
pub fn click_probability(params: &SystemParams, channel: &ChannelSpec) -> Result<ClickProbabilities> {
    params.validate()?;
    channel.validate()?;
    let total_loss_db = channel.loss_db + params.system_loss_db;
    let p_signal = params.mu * params.effective_eta() * 10f64.powf(-total_loss_db / 10.0);
    let p_dark = 2.0 * params.mean_dcr() * params.time_window_s;
    let p_click = p_signal + p_dark;
    if p_click > 1.0 {
        return Err(Error::invalid(
            "p_click",
            format!("{p_click} exceeds 1; parameters leave the per-slot model"),
        ));
    }
    Ok(ClickProbabilities {
        p_signal,
        p_dark,
        p_click,
    })
}

/// Sifted key rate in bits per second.
pub fn sifted_rate(p_click: f64, params: &SystemParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_click) {
        return Err(Error::invalid("p_click", format!("{p_click} not in [0, 1]")));
    }
    let clicks_per_s = params.clock_rate_hz * p_click;
    Ok(clicks_per_s * (-clicks_per_s * params.dead_time_s).exp())
}

/// Expected bit error rate of the sifted key.
pub fn qber_analytic(p_signal: f64, p_dark: f64, params: &SystemParams) -> Result<f64> {
    let p_click = p_signal + p_dark;
    if p_click <= 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((params.baseline_error * p_signal + 0.5 * p_dark) / p_click)
}

/// Binary Shannon entropy, `-e log2 e - (1 - e) log2 (1 - e)`, with
/// `h(0) = h(1) = 0`.
pub fn binary_entropy(e: f64) -> f64 {
    if e <= 0.0 || e >= 1.0 {
        return 0.0;
    }
    -e * e.log2() - (1.0 - e) * (1.0 - e).log2()
}

fn leakage_argument(qber: f64) -> f64 {
    let t = 1.0 - 6.0 * qber;
    1.0 - qber * qber - t * t / 2.0
}

/// Secure bits per sifted bit. May be negative; callers clamp.
pub fn secure_fraction(qber: f64, params: &SystemParams) -> Result<f64> {
    if !(0.0..0.5).contains(&qber) {
        return Err(Error::invalid("qber", format!("{qber} not in [0, 0.5)")));
    }
    let arg = leakage_argument(qber);
    if arg <= 0.0 {
        return Err(Error::LogDomain { qber });
    }
    Ok(-(1.0 - 2.0 * params.mu) * arg.log2() - params.ec_inefficiency * binary_entropy(qber))
}

/// QBER from which the bound no longer describes a secure key.
///
/// Past the maximum of the log argument the leakage term grows again and
/// the bracket turns positive near QBER 0.35, which is not a secure region.
/// For `f >= 1` and `0 <= mu <= 1/2` the only zero crossing of the bracket
/// lies below 1/6, and the bracket is negative from there up to 1/6.
pub const BOUND_VALIDITY_LIMIT: f64 = 1.0 / 6.0;

/// Like [`secure_fraction`], but returns `-inf` ("no secure key") for an
/// undefined logarithm and for any QBER at or above
/// [`BOUND_VALIDITY_LIMIT`]. Used wherever rates are clamped.
pub fn secure_fraction_or_none(qber: f64, params: &SystemParams) -> f64 {
    if !(qber < BOUND_VALIDITY_LIMIT) {
        return f64::NEG_INFINITY;
    }
    secure_fraction(qber, params).unwrap_or(f64::NEG_INFINITY)
}

/// Secure key rate for a measured (or modelled) sifted rate and QBER.
pub fn secure_rate(sifted_rate_bps: f64, qber: f64, params: &SystemParams) -> f64 {
    let fraction = secure_fraction_or_none(qber, params);
    if fraction <= 0.0 {
        0.0
    } else {
        sifted_rate_bps * fraction
    }
}

/// Chains click probability, sifted rate, QBER and secure fraction.
pub fn analytic_point(params: &SystemParams, channel: &ChannelSpec) -> Result<AnalyticPoint> {
    let ClickProbabilities {
        p_signal,
        p_dark,
        p_click,
    } = click_probability(params, channel)?;
    let sifted_rate_bps = sifted_rate(p_click, params)?;
    let qber = qber_analytic(p_signal, p_dark, params)?;
    let secure_fraction = secure_fraction_or_none(qber, params);
    let secure_rate_bps = if secure_fraction > 0.0 {
        sifted_rate_bps * secure_fraction
    } else {
        0.0
    };
    Ok(AnalyticPoint {
        p_signal,
        p_dark,
        p_click,
        sifted_rate_bps,
        qber,
        secure_fraction,
        secure_rate_bps,
    })
}

/// QBER at which the secure fraction reaches zero, by bisection to 1e-12.
pub fn security_threshold(params: &SystemParams) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 0.25);
    if secure_fraction(lo, params)? <= 0.0 {
        return Err(Error::NoCrossing(format!(
            "secure fraction is not positive even at zero QBER (mu = {})",
            params.mu
        )));
    }
    if secure_fraction(hi, params)? > 0.0 {
        return Err(Error::NoCrossing("secure fraction positive up to QBER 0.25".into()));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if secure_fraction(mid, params)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Resolution of [`max_tolerable_loss`].
pub const LOSS_RESOLUTION_DB: f64 = 0.01;

/// Channel loss at which the analytic QBER reaches `qber_threshold`.
///
/// Returns `+inf` when there are no dark counts (QBER never leaves `e_s`).
pub fn max_tolerable_loss(params: &SystemParams, qber_threshold: f64) -> Result<f64> {
    params.validate()?;
    let qber_at = |loss_db: f64| -> Result<f64> {
        let p = click_probability(params, &ChannelSpec::from_loss(loss_db))?;
        qber_analytic(p.p_signal, p.p_dark, params)
    };
    if params.mean_dcr() == 0.0 {
        if params.baseline_error < qber_threshold {
            return Ok(f64::INFINITY);
        }
        return Err(Error::NoCrossing(format!(
            "baseline error {} already at or above threshold {qber_threshold}",
            params.baseline_error
        )));
    }
    if !(qber_threshold < 0.5) {
        return Err(Error::NoCrossing(format!(
            "threshold {qber_threshold} is never exceeded (QBER saturates at 0.5)"
        )));
    }
    if params.mu == 0.0 || qber_at(0.0)? >= qber_threshold {
        return Err(Error::NoCrossing(format!(
            "QBER at 0 dB is already at or above {qber_threshold}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 10.0;
    while qber_at(hi)? < qber_threshold {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NoCrossing("no crossing below 10 000 dB".into()));
        }
    }
    while hi - lo > LOSS_RESOLUTION_DB {
        let mid = 0.5 * (lo + hi);
        if qber_at(mid)? < qber_threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fiber length that produces `loss_db` at the given attenuation.
pub fn loss_to_distance(loss_db: f64, attenuation_db_per_km: f64) -> Result<f64> {
    if !(attenuation_db_per_km > 0.0) {
        return Err(Error::invalid(
            "attenuation_db_per_km",
            format!("{attenuation_db_per_km} must be > 0"),
        ));
    }
    Ok(loss_db / attenuation_db_per_km)
}

pub fn distance_to_loss(length_km: f64, attenuation_db_per_km: f64) -> Result<f64> {
    if !(attenuation_db_per_km > 0.0) {
        return Err(Error::invalid(
            "attenuation_db_per_km",
            format!("{attenuation_db_per_km} must be > 0"),
        ));
    }
    Ok(length_km * attenuation_db_per_km)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EtaComposition;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    // Direct, formula-by-formula evaluation of the bracket, kept apart from
    // the module so the threshold test does not grade its own homework.
    fn bracket_oracle(e: f64, mu: f64, f: f64) -> f64 {
        let h = if e == 0.0 {
            0.0
        } else {
            -(e * e.ln() + (1.0 - e) * (1.0 - e).ln()) / std::f64::consts::LN_2
        };
        let arg = 1.0 - e.powi(2) - (1.0 - 6.0 * e).powi(2) / 2.0;
        -(1.0 - 2.0 * mu) * arg.ln() / std::f64::consts::LN_2 - f * h
    }

    #[test]
    fn click_probability_at_72_db_sum() {
        // Frozen from a hand evaluation: 0.2 * (0.022 + 0.0155) * 10^-7.4.
        let params = SystemParams::paper_dcr001().with_composition(EtaComposition::Sum);
        let p = click_probability(&params, &ChannelSpec::from_loss(72.0)).unwrap();
        assert!(close(p.p_signal, 2.9858037791512265e-10, 1e-12));
        assert!(close(p.p_dark, 2e-12, 1e-12));
        assert!(close(p.p_click, 3.0058037791512264e-10, 1e-12));
    }

    #[test]
    fn zero_signal_and_opaque_channel() {
        let mut params = SystemParams::paper_dcr004();
        params.mu = 0.0;
        let p = click_probability(&params, &ChannelSpec::from_loss(30.0)).unwrap();
        assert_eq!(p.p_signal, 0.0);
        assert_eq!(p.p_click, 2.0 * 0.04 * 100e-12);

        let params = SystemParams::paper_dcr004();
        let p = click_probability(&params, &ChannelSpec::from_loss(f64::INFINITY)).unwrap();
        assert_eq!(p.p_signal, 0.0);
        assert_eq!(p.p_click, p.p_dark);
    }

    #[test]
    fn unequal_dcrs_use_the_sum() {
        let mut params = SystemParams::paper_dcr004();
        params.detector1.dcr = 0.01;
        params.detector2.dcr = 0.03;
        let p = click_probability(&params, &ChannelSpec::from_loss(50.0)).unwrap();
        assert!(close(p.p_dark, 0.04 * 100e-12, 1e-12));
    }

    #[test]
    fn click_probability_rejects_invalid_inputs() {
        let mut params = SystemParams::paper_dcr004();
        params.clock_rate_hz = 0.0;
        assert!(click_probability(&params, &ChannelSpec::from_loss(10.0)).is_err());
        let params = SystemParams::paper_dcr004();
        assert!(click_probability(&params, &ChannelSpec::from_loss(-3.0)).is_err());
    }

    #[test]
    fn sifted_rate_examples() {
        let params = SystemParams::paper_dcr004();
        assert_eq!(sifted_rate(0.0, &params).unwrap(), 0.0);
        let r = sifted_rate(1e-3, &params).unwrap();
        assert!(close(r, 980_198.673_306_755_3, 1e-12), "{r}");
        let mut no_dead = params;
        no_dead.dead_time_s = 0.0;
        assert_eq!(sifted_rate(1e-3, &no_dead).unwrap(), 1e9 * 1e-3);
        assert!(sifted_rate(1.5, &params).is_err());
        assert!(sifted_rate(-0.1, &params).is_err());
    }

    #[test]
    fn qber_examples() {
        let params = SystemParams::paper_dcr004();
        assert_eq!(qber_analytic(0.0, 1e-12, &params).unwrap(), 0.5);
        assert_eq!(qber_analytic(3e-9, 0.0, &params).unwrap(), 0.01);
        let q = qber_analytic(9e-11, 1e-11, &params).unwrap();
        assert!(close(q, 0.059, 1e-12), "{q}");
        assert_eq!(qber_analytic(0.0, 0.0, &params), Err(Error::DivisionByZero));
    }

    #[test]
    fn secure_fraction_at_zero_qber_is_one_minus_two_mu() {
        let params = SystemParams::paper_dcr004();
        assert_eq!(secure_fraction(0.0, &params).unwrap(), 0.6);
        let mut other = params;
        other.ec_inefficiency = 3.0;
        assert_eq!(secure_fraction(0.0, &other).unwrap(), 0.6);
    }

    #[test]
    fn secure_fraction_domain() {
        let params = SystemParams::paper_dcr004();
        assert!(secure_fraction(0.5, &params).is_err());
        assert!(secure_fraction(-0.01, &params).is_err());
        assert!(matches!(secure_fraction(0.45, &params), Err(Error::LogDomain { .. })));
        assert_eq!(secure_fraction_or_none(0.45, &params), f64::NEG_INFINITY);
        // The raw bracket turns positive again close to the log boundary.
        assert!(secure_fraction(0.37, &params).unwrap() > 0.0);
        assert_eq!(secure_fraction_or_none(0.37, &params), f64::NEG_INFINITY);
        assert_eq!(secure_rate(10.0, 0.37, &params), 0.0);
        // Past 1/6 the squared term is still fine.
        assert!(secure_fraction(0.2, &params).unwrap() < 0.0);
    }

    #[test]
    fn secure_fraction_matches_oracle() {
        let params = SystemParams::paper_dcr004();
        for e in [0.001, 0.0102, 0.0264, 0.0293, 0.041, 0.1, 0.3] {
            let got = secure_fraction(e, &params).unwrap();
            assert!(close(got, bracket_oracle(e, 0.2, 1.2), 1e-12), "{e}");
        }
    }

    #[test]
    fn threshold_matches_bisection_oracle() {
        let (mut lo, mut hi) = (0.0_f64, 0.1_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bracket_oracle(mid, 0.2, 1.2) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let t = security_threshold(&SystemParams::paper_dcr004()).unwrap();
        assert!((0.040..=0.042).contains(&t));
        assert!((t - lo).abs() < 1e-9);
        assert!((t - 0.04056741599990201).abs() < 1e-9);
    }

    #[test]
    fn published_secure_rate_first_row() {
        let params = SystemParams::paper_dcr004();
        let rate = secure_rate(31.95, 0.0102, &params);
        assert!((rate - 12.5).abs() <= 0.05 * 12.5, "{rate}");
    }

    #[test]
    fn analytic_point_loss_zero_no_dark_counts() {
        let params = SystemParams::paper_dcr004().with_dcr(0.0);
        let p = analytic_point(&params, &ChannelSpec::from_loss(0.0)).unwrap();
        assert_eq!(p.qber, 0.01);
        assert!(p.secure_rate_bps > 0.0);
    }

    #[test]
    fn analytic_point_at_66_db() {
        let p = analytic_point(&SystemParams::paper_dcr004(), &ChannelSpec::from_loss(66.0)).unwrap();
        // Measured 0.98 +0.09/-0.12 bits/s and 2.64 +0.63/-0.39 %.
        assert!(p.sifted_rate_bps / 0.98 < 2.0 && p.sifted_rate_bps / 0.98 > 0.5);
        assert!(p.qber < 0.041);
        assert_eq!(p.secure_rate_bps, p.sifted_rate_bps * p.secure_fraction);
    }

    #[test]
    fn analytic_sweep_sifted_rate_nonincreasing() {
        for params in [SystemParams::paper_dcr004(), SystemParams::paper_dcr001()] {
            let rates: Vec<f64> = (40..=80)
                .map(|l| {
                    analytic_point(&params, &ChannelSpec::from_loss(l as f64))
                        .unwrap()
                        .sifted_rate_bps
                })
                .collect();
            assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn max_tolerable_loss_examples() {
        let dark_free = SystemParams::paper_dcr001().with_dcr(0.0);
        assert_eq!(max_tolerable_loss(&dark_free, 0.041).unwrap(), f64::INFINITY);

        let params = SystemParams::paper_dcr001();
        let l = max_tolerable_loss(&params, 0.041).unwrap();
        assert!(l > 72.0 && l <= 80.0, "{l}");

        let doubled = params.with_dcr(0.02);
        assert!(max_tolerable_loss(&doubled, 0.041).unwrap() < l);

        assert!(matches!(max_tolerable_loss(&params, 0.005), Err(Error::NoCrossing(_))));
        assert!(matches!(max_tolerable_loss(&params, 0.5), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn max_tolerable_loss_hits_threshold() {
        let params = SystemParams::paper_dcr004();
        let l = max_tolerable_loss(&params, 0.041).unwrap();
        let below = analytic_point(&params, &ChannelSpec::from_loss(l - LOSS_RESOLUTION_DB)).unwrap();
        let above = analytic_point(&params, &ChannelSpec::from_loss(l + LOSS_RESOLUTION_DB)).unwrap();
        assert!(below.qber < 0.041 && above.qber > 0.041);
    }

    #[test]
    fn distance_conversion() {
        assert_eq!(loss_to_distance(72.0, 0.164).unwrap().round(), 439.0);
        assert_eq!(loss_to_distance(0.0, 0.2).unwrap(), 0.0);
        let att: f64 = 66.0 / 306.0;
        assert!((att - 0.2157).abs() < 5e-5);
        assert!(loss_to_distance(10.0, 0.0).is_err());
        assert!(distance_to_loss(10.0, -0.2).is_err());
    }

    fn any_params() -> impl Strategy<Value = SystemParams> {
        (
            0.0..0.49f64,
            0.001..0.9f64,
            0.001..0.9f64,
            0.0..10.0f64,
            0.0..0.2f64,
            1.0..2.0f64,
            prop::sample::select(EtaComposition::ALL.to_vec()),
        )
            .prop_map(|(mu, eta1, eta2, dcr, e_s, f, mode)| {
                let mut p = SystemParams::paper_dcr004().with_composition(mode).with_dcr(dcr);
                p.mu = mu;
                p.detector1.eta_fitted = eta1;
                p.detector2.eta_fitted = eta2;
                p.baseline_error = e_s;
                p.ec_inefficiency = f;
                p
            })
    }

    proptest! {
        #[test]
        fn click_probability_is_additive(params in any_params(), loss in 0.0..150.0f64) {
            let p = click_probability(&params, &ChannelSpec::from_loss(loss)).unwrap();
            prop_assert!((p.p_click - p.p_signal - p.p_dark).abs() <= 4.0 * f64::EPSILON * p.p_click);
        }

        #[test]
        fn sifted_rate_bounded(params in any_params(), p_click in 0.0..1e-3f64) {
            let r = sifted_rate(p_click, &params).unwrap();
            let cap = params.clock_rate_hz * p_click;
            prop_assert!(r >= 0.0 && r <= cap);
            if p_click > 0.0 {
                prop_assert!(r < cap);
            }
        }

        #[test]
        fn qber_interpolates(params in any_params(), loss in 0.0..150.0f64) {
            let p = click_probability(&params, &ChannelSpec::from_loss(loss)).unwrap();
            prop_assume!(p.p_click > 0.0);
            let q = qber_analytic(p.p_signal, p.p_dark, &params).unwrap();
            let tol = 1e-15;
            prop_assert!(q >= params.baseline_error - tol && q <= 0.5 + tol);
        }

        #[test]
        fn loss_monotonicity(params in any_params(), loss in 0.0..120.0f64, step in 0.01..10.0f64) {
            prop_assume!(params.mu > 0.0);
            let a = analytic_point(&params, &ChannelSpec::from_loss(loss)).unwrap();
            let b = analytic_point(&params, &ChannelSpec::from_loss(loss + step)).unwrap();
            prop_assert!(b.p_signal < a.p_signal);
            prop_assert!(b.qber >= a.qber - 1e-15);
            prop_assert!(b.secure_rate_bps <= a.secure_rate_bps);
        }

        #[test]
        fn distance_round_trip(loss in 0.0..500.0f64, att in 0.01..5.0f64) {
            let km = loss_to_distance(loss, att).unwrap();
            let back = distance_to_loss(km, att).unwrap();
            prop_assert!((back - loss).abs() <= 1e-12 * loss.max(1e-300));
        }
    }

    #[test]
    fn secure_fraction_strictly_decreasing_on_low_qber() {
        let params = SystemParams::paper_dcr004();
        let samples: Vec<f64> = (0..=5000)
            .map(|i| secure_fraction(i as f64 * 0.05 / 5000.0, &params).unwrap())
            .collect();
        assert!(samples.windows(2).all(|w| w[1] < w[0]));
    }
}
