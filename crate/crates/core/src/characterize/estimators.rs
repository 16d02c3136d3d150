use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{Error, Result};
use crate::spad::GateEventLog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeEstimate {
    pub spde: Estimate,
    pub p_illuminated: f64,
    pub p_dark: f64,
    /// Illuminated gates clicked less often than dark ones.
    pub non_physical: bool,
}

/// Inverts `P_ill = 1 - (1 - P_dark) exp(-mu eta)`.
pub fn spde_from_probabilities(p_ill: f64, p_dark: f64, mu: f64) -> f64 {
    ((1.0 - p_dark) / (1.0 - p_ill)).ln() / mu
}

/// Per-pixel SPDE from click fractions in live illuminated and live
/// non-illuminated gates. Pixels the schedule does not reach give `None`.
pub fn estimate_spde(log: &GateEventLog) -> Result<Vec<Option<SpdeEstimate>>> {
    let s = &log.schedule;
    if s.mean_photons <= 0.0 {
        return Err(Error::Domain {
            what: "schedule.mean_photons",
            value: s.mean_photons,
            domain: "(0, inf) for SPDE estimation",
        });
    }
    let mu = s.mean_photons;
    log.pixels
        .iter()
        .enumerate()
        .map(|(j, p)| {
            if !s.hits(j) {
                return Ok(None);
            }
            let [live_d, live_i] = p.live_gates;
            if live_d == 0 || live_i == 0 {
                return Err(Error::Simulation(format!(
                    "pixel {j}: need both illuminated and non-illuminated live gates"
                )));
            }
            let pi = p.counts_illuminated as f64 / live_i as f64;
            let pd = p.counts_dark_gates as f64 / live_d as f64;
            let eta = spde_from_probabilities(pi, pd, mu);
            let var_i = pi * (1.0 - pi) / live_i as f64;
            let var_d = pd * (1.0 - pd) / live_d as f64;
            let se = (var_i / (1.0 - pi).powi(2) + var_d / (1.0 - pd).powi(2)).sqrt() / mu;
            Ok(Some(SpdeEstimate {
                spde: Estimate::new(eta, se),
                p_illuminated: pi,
                p_dark: pd,
                non_physical: pi < pd,
            }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcrEstimate {
    pub dcr_hz: Estimate,
    /// Primary dark-count probability per live gate.
    pub per_gate: Estimate,
}

/// Dark count rate from a run without illumination.
///
/// Clicks in a dark run include afterpulses of earlier dark counts; given
/// per-pixel APR values these are removed (a fraction `1 - exp(-APR)` of
/// all clicks). Pass zeros when no APR is known yet.
pub fn estimate_dcr(dark: &GateEventLog, gate_rate_ghz: f64, apr: &[f64]) -> Result<Vec<DcrEstimate>> {
    if dark.gates[1] != 0 {
        return Err(Error::Simulation("DCR needs a run without illumination".into()));
    }
    dark.pixels
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let live = p.live_gates[0];
            if live == 0 {
                return Err(Error::Simulation(format!("pixel {j}: no live gates")));
            }
            let keep = (-apr.get(j).copied().unwrap_or(0.0)).exp();
            let n = p.counts_total as f64;
            let d = n / live as f64 * keep;
            let se = n.sqrt() / live as f64 * keep;
            let hz = gate_rate_ghz * 1e9;
            Ok(DcrEstimate {
                dcr_hz: Estimate::new(d * hz, se * hz),
                per_gate: Estimate::new(d, se),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprEstimate {
    /// Integrated afterpulse hazard per avalanche.
    pub apr: Estimate,
    /// Fraction of all clicks attributed to afterpulsing.
    pub click_fraction: f64,
    /// The dark-subtracted excess was negative and the estimate clamped to 0.
    pub clamped: bool,
}

/// Afterpulse probability from the excess of clicks in non-illuminated gates
/// over the dark-count expectation.
///
/// The excess is scaled from non-illuminated to all live gates and divided
/// by the number of avalanches, giving the fraction of clicks that are
/// afterpulses. That fraction is `1 - exp(-APR)` for an integrated hazard APR.
pub fn estimate_apr(log: &GateEventLog, dark_per_gate: &[Estimate]) -> Result<Vec<AprEstimate>> {
    log.pixels
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let d = dark_per_gate.get(j).ok_or_else(|| {
                Error::Simulation(format!("no dark-count estimate for pixel {j}"))
            })?;
            let [live_d, live_i] = p.live_gates;
            let n = p.counts_total as f64;
            if live_d == 0 || n == 0.0 {
                return Ok(AprEstimate {
                    apr: Estimate::new(0.0, f64::NAN),
                    click_fraction: 0.0,
                    clamped: false,
                });
            }
            let ld = live_d as f64;
            let scale = (live_d + live_i) as f64 / ld;
            let x = p.counts_dark_gates as f64;
            let excess = x - d.value * ld;
            let r = excess * scale / n;
            let var_r = (x + (ld * d.stderr).powi(2)) * (scale / n).powi(2) + r * r / n;
            let clamped = r < 0.0;
            let r = r.clamp(0.0, 1.0 - 1e-12);
            Ok(AprEstimate {
                apr: Estimate::new(-(-r).ln_1p(), var_r.sqrt() / (1.0 - r)),
                click_fraction: r,
                clamped,
            })
        })
        .collect()
}
