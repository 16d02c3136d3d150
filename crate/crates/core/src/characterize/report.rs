use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    estimate_apr, estimate_dcr, estimate_spde, measure_crosstalk, specificity_from_logs,
    AprEstimate, CrosstalkMatrices, DcrEstimate, Estimate, SpdeEstimate, SpecificityMatrix,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::spad::{run_gates, GateEventLog, IlluminationSchedule, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelReport {
    pub spde: SpdeEstimate,
    pub dcr: DcrEstimate,
    pub apr: AprEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub n_gates_per_run: u64,
    pub seed: u64,
    pub period_gates: u64,
    pub mean_photons: f64,
    pub pixels: Vec<PixelReport>,
    /// Row `a` is measured in the run that illuminates pixel `a`.
    pub crosstalk: CrosstalkMatrices,
    pub specificity: SpecificityMatrix,
}

/// Joint DCR/APR refinement passes; the correction converges after one or two.
const DCR_APR_PASSES: usize = 4;

/// Full blind characterization: a dark run plus one run per pixel with that
/// pixel alone illuminated on the configured schedule.
///
/// Runs use substreams `0..n` (illuminated) and `n` (dark) of `rng`.
pub fn characterize(cfg: &SystemConfig, n_gates: u64, rng: RngSpec) -> Result<CharacterizationReport> {
    let array = &cfg.detectors;
    let n = array.n_pixels;
    let ch = &cfg.characterization;
    if ch.mean_photons <= 0.0 {
        return Err(Error::Domain {
            what: "characterization.mean_photons",
            value: ch.mean_photons,
            domain: "(0, inf)",
        });
    }
    let mut logs: Vec<GateEventLog> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let schedule = if i < n {
                IlluminationSchedule::new(ch.period_gates, ch.mean_photons, Target::Pixel(i))
            } else {
                IlluminationSchedule::dark()
            };
            run_gates(array, &schedule, n_gates, rng.substream(i as u64))
        })
        .collect::<Result<_>>()?;
    let dark = logs.pop().expect("dark run");
    let runs = logs;

    let mut apr_values = vec![0.0; n];
    let mut dcr = Vec::new();
    let mut apr: Vec<AprEstimate> = Vec::new();
    for _ in 0..DCR_APR_PASSES {
        dcr = estimate_dcr(&dark, array.gate_rate_ghz(), &apr_values)?;
        let per_gate: Vec<Estimate> = dcr.iter().map(|d| d.per_gate).collect();
        apr = (0..n)
            .map(|i| estimate_apr(&runs[i], &per_gate).map(|v| v[i]))
            .collect::<Result<_>>()?;
        apr_values = apr.iter().map(|a| a.apr.value).collect();
    }
    let pixels = (0..n)
        .map(|i| {
            let spde = estimate_spde(&runs[i])?[i].expect("pixel illuminated in its own run");
            Ok(PixelReport {
                spde,
                dcr: dcr[i],
                apr: apr[i],
            })
        })
        .collect::<Result<_>>()?;

    let per_run: Vec<CrosstalkMatrices> = runs.iter().map(measure_crosstalk).collect();
    let crosstalk = CrosstalkMatrices {
        sync: (0..n).map(|a| per_run[a].sync[a].clone()).collect(),
        async_: (0..n).map(|a| per_run[a].async_[a].clone()).collect(),
        aggressor_counts: (0..n).map(|a| per_run[a].aggressor_counts[a]).collect(),
        low_confidence: (0..n).map(|a| per_run[a].low_confidence[a]).collect(),
    };
    let specificity = specificity_from_logs(&dark, &runs, array.gate_period_ns())?;
    Ok(CharacterizationReport {
        n_gates_per_run: n_gates,
        seed: rng.seed,
        period_gates: ch.period_gates,
        mean_photons: ch.mean_photons,
        pixels,
        crosstalk,
        specificity,
    })
}

fn write_pairs<W: Write>(w: W, rows: &[Vec<Estimate>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "column", "value", "stderr"])?;
    for (a, row) in rows.iter().enumerate() {
        for (v, e) in row.iter().enumerate() {
            out.write_record([a.to_string(), v.to_string(), e.value.to_string(), e.stderr.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

impl CharacterizationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Synchronous crosstalk, rows = aggressor, columns = victim.
    pub fn write_sync_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows: Vec<Vec<Estimate>> =
            self.crosstalk.sync.iter().map(|r| r.iter().map(|p| p.value).collect()).collect();
        write_pairs(w, &rows)
    }

    pub fn write_async_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows: Vec<Vec<Estimate>> =
            self.crosstalk.async_.iter().map(|r| r.iter().map(|p| p.value).collect()).collect();
        write_pairs(w, &rows)
    }

    /// Net count rates in Hz, rows = illuminated pixel, columns = counting pixel.
    pub fn write_specificity_csv<W: Write>(&self, w: W) -> Result<()> {
        write_pairs(w, &self.specificity.net_rate_hz)
    }
}
