//! System, detector and channel parameters, plus the built-in presets.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance between a channel's loss and its fiber provenance.
const PROVENANCE_REL_TOL: f64 = 1e-9;

/// One single-photon detector behind an interferometer output port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// System detection efficiency as fitted, before the time-window cut.
    pub eta_fitted: f64,
    /// Dark counts per second.
    pub dcr: f64,
    /// Fraction of detections that fall inside the acceptance window.
    pub window_efficiency_factor: f64,
}

impl DetectorParams {
    pub fn new(eta_fitted: f64, dcr: f64, window_efficiency_factor: f64) -> Self {
        Self {
            eta_fitted,
            dcr,
            window_efficiency_factor,
        }
    }

    /// Efficiency after the time-window reduction.
    pub fn effective_eta(&self) -> f64 {
        self.eta_fitted * self.window_efficiency_factor
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_fitted > 0.0 && self.eta_fitted <= 1.0) {
            return Err(Error::invalid("eta", format!("{} not in (0, 1]", self.eta_fitted)));
        }
        if !(self.dcr >= 0.0 && self.dcr.is_finite()) {
            return Err(Error::invalid("dcr", format!("{} must be finite and >= 0", self.dcr)));
        }
        if !(self.window_efficiency_factor > 0.0 && self.window_efficiency_factor <= 1.0) {
            return Err(Error::invalid(
                "window_efficiency_factor",
                format!("{} not in (0, 1]", self.window_efficiency_factor),
            ));
        }
        Ok(())
    }
}

/// How the two per-detector efficiencies combine into the single link
/// efficiency of the click-probability model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum EtaComposition {
    /// `(eta1 + eta2) / 2`
    SumHalved,
    /// Arithmetic mean; numerically identical to `SumHalved`.
    Mean,
    /// `eta1 + eta2`: every pulse pair exits through exactly one port.
    #[default]
    Sum,
}

impl EtaComposition {
    pub const ALL: [EtaComposition; 3] = [Self::SumHalved, Self::Mean, Self::Sum];

    pub fn name(self) -> &'static str {
        match self {
            Self::SumHalved => "sum-halved",
            Self::Mean => "mean",
            Self::Sum => "sum",
        }
    }

    pub fn combine(self, eta1: f64, eta2: f64) -> f64 {
        match self {
            Self::SumHalved => (eta1 + eta2) / 2.0,
            Self::Mean => 0.5 * eta1 + 0.5 * eta2,
            Self::Sum => eta1 + eta2,
        }
    }
}

impl fmt::Display for EtaComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EtaComposition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "sum-halved" => Ok(Self::SumHalved),
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(Error::invalid(
                "eta_composition",
                format!("`{other}` is not one of sum-halved, mean, sum"),
            )),
        }
    }
}

/// Every constant of the link: source, receiver timing, error floor,
/// reconciliation efficiency and both detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Mean photon number per pulse.
    pub mu: f64,
    pub clock_rate_hz: f64,
    pub time_window_s: f64,
    /// Dead time of the time-interval analyzer, shared by both detectors.
    pub dead_time_s: f64,
    /// Wrong-port probability set by the interferometer extinction ratio.
    pub baseline_error: f64,
    /// Error-correction inefficiency relative to the Shannon limit.
    pub ec_inefficiency: f64,
    /// Receiver insertion loss (interferometer), excluded from channel loss.
    pub system_loss_db: f64,
    pub detector1: DetectorParams,
    pub detector2: DetectorParams,
    pub eta_composition: EtaComposition,
}

/// Named presets for the two detector bias points.
pub const PRESET_NAMES: [&str; 2] = ["paper-dcr004", "paper-dcr001"];

impl SystemParams {
    /// Fitted constants shared by both bias points, with the given detectors.
    fn fitted(eta1: f64, eta2: f64, dcr: f64) -> Self {
        Self {
            mu: 0.2,
            clock_rate_hz: 1e9,
            time_window_s: 100e-12,
            dead_time_s: 20e-9,
            baseline_error: 0.01,
            ec_inefficiency: 1.2,
            system_loss_db: 2.0,
            detector1: DetectorParams::new(eta1, dcr, 0.5),
            detector2: DetectorParams::new(eta2, dcr, 0.5),
            eta_composition: EtaComposition::Mean,
        }
    }

    /// Bias point with 0.04 cps dark counts (eta 6.7 % / 4.0 %).
    pub fn paper_dcr004() -> Self {
        Self::fitted(0.067, 0.040, 0.04)
    }

    /// Bias point with 0.01 cps dark counts (eta 4.4 % / 3.1 %).
    pub fn paper_dcr001() -> Self {
        Self::fitted(0.044, 0.031, 0.01)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-dcr004" => Ok(Self::paper_dcr004()),
            "paper-dcr001" => Ok(Self::paper_dcr001()),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
            )),
        }
    }

    pub fn with_composition(mut self, composition: EtaComposition) -> Self {
        self.eta_composition = composition;
        self
    }

    /// Sets both detectors' dark count rate.
    pub fn with_dcr(mut self, dcr: f64) -> Self {
        self.detector1.dcr = dcr;
        self.detector2.dcr = dcr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // mu = 0 is accepted as the dark-only limit.
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("{} must be >= 0", self.mu)));
        }
        if !(self.clock_rate_hz > 0.0 && self.clock_rate_hz.is_finite()) {
            return Err(Error::invalid("clock_rate_hz", "must be > 0"));
        }
        if !(self.time_window_s > 0.0) {
            return Err(Error::invalid("time_window_s", "must be > 0"));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(Error::invalid("dead_time_s", "must be finite and >= 0"));
        }
        if !(0.0..0.5).contains(&self.baseline_error) {
            return Err(Error::invalid("baseline_error", "must lie in [0, 0.5)"));
        }
        if !(self.ec_inefficiency >= 1.0 && self.ec_inefficiency.is_finite()) {
            return Err(Error::invalid("ec_inefficiency", "must be >= 1"));
        }
        if !(self.system_loss_db >= 0.0 && self.system_loss_db.is_finite()) {
            return Err(Error::invalid("system_loss_db", "must be finite and >= 0"));
        }
        if self.clock_rate_hz * self.time_window_s > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "time_window_s",
                "time window does not fit in one clock slot",
            ));
        }
        self.detector1.validate()?;
        self.detector2.validate()
    }

    /// Link efficiency entering the click-probability model.
    pub fn effective_eta(&self) -> f64 {
        self.eta_composition
            .combine(self.detector1.effective_eta(), self.detector2.effective_eta())
    }

    /// Mean of the two detectors' dark count rates.
    pub fn mean_dcr(&self) -> f64 {
        0.5 * (self.detector1.dcr + self.detector2.dcr)
    }

    /// Minimum slot spacing between two accepted clicks, `ceil(t_d * nu)`,
    /// never less than one slot.
    pub fn dead_time_slots(&self) -> u64 {
        let x = self.dead_time_s * self.clock_rate_hz;
        let nearest = x.round();
        // 20 ns at 1 GHz lands a hair above 20.0 in binary floating point.
        let slots = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            x.ceil()
        };
        (slots as u64).max(1)
    }
}

/// Fiber length and attenuation a channel loss was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberSpan {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
}

/// Quantum channel between transmitter and receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    /// Channel loss in dB, excluding the receiver's system loss. May be
    /// `+inf` for an opaque channel.
    pub loss_db: f64,
    pub provenance: Option<FiberSpan>,
}

impl ChannelSpec {
    /// A pure attenuation (no fiber provenance).
    pub fn from_loss(loss_db: f64) -> Self {
        Self {
            loss_db,
            provenance: None,
        }
    }

    pub fn from_fiber(length_km: f64, attenuation_db_per_km: f64) -> Self {
        Self {
            loss_db: length_km * attenuation_db_per_km,
            provenance: Some(FiberSpan {
                length_km,
                attenuation_db_per_km,
            }),
        }
    }

    /// Fixed loss annotated with the fiber it was measured over.
    pub fn with_provenance(loss_db: f64, length_km: f64, attenuation_db_per_km: f64) -> Self {
        Self {
            loss_db,
            provenance: Some(FiberSpan {
                length_km,
                attenuation_db_per_km,
            }),
        }
    }

    /// Transmission of the channel alone, `10^(-loss/10)`.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss_db.is_nan() || self.loss_db < 0.0 {
            return Err(Error::invalid("loss_db", format!("{} must be >= 0", self.loss_db)));
        }
        if let Some(span) = self.provenance {
            if !(span.length_km >= 0.0 && span.attenuation_db_per_km > 0.0) {
                return Err(Error::invalid(
                    "provenance",
                    "fiber length must be >= 0 and attenuation > 0",
                ));
            }
            let implied = span.length_km * span.attenuation_db_per_km;
            let scale = implied.abs().max(self.loss_db.abs()).max(f64::MIN_POSITIVE);
            if (implied - self.loss_db).abs() > PROVENANCE_REL_TOL * scale {
                return Err(Error::invalid(
                    "loss_db",
                    format!(
                        "{} dB disagrees with {} km x {} dB/km",
                        self.loss_db, span.length_km, span.attenuation_db_per_km
                    ),
                ));
            }
        }
        Ok(())
    }
}
