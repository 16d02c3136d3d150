use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::spad::{run_gates, GateEventLog, IlluminationSchedule};

/// Dark-subtracted count rates, `net_rate_hz[i][j]` on pixel `j` while
/// pixel `i` is illuminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityMatrix {
    pub net_rate_hz: Vec<Vec<Estimate>>,
    pub dark_rate_hz: Vec<Estimate>,
    /// `diag_i / net_rate_hz[i][j]`; `None` where the off-diagonal rate is not positive.
    pub ratio: Vec<Vec<Option<f64>>>,
    /// Smallest defined ratio over all pairs.
    pub min_ratio: Option<f64>,
}

fn rate(log: &GateEventLog, j: usize, period_ns: f64) -> Estimate {
    let t = log.n_gates_simulated as f64 * period_ns * 1e-9;
    let c = log.pixels[j].counts_total as f64;
    Estimate::new(c / t, c.sqrt() / t)
}

/// Builds the matrix from a dark run and one run per illuminated pixel.
pub fn specificity_from_logs(
    dark: &GateEventLog,
    runs: &[GateEventLog],
    period_ns: f64,
) -> Result<SpecificityMatrix> {
    let n = dark.n_pixels();
    if runs.len() != n || runs.iter().any(|r| r.n_pixels() != n) {
        return Err(Error::Simulation(format!(
            "specificity needs {n} runs of a {n}-pixel array"
        )));
    }
    let dark_rate: Vec<Estimate> = (0..n).map(|j| rate(dark, j, period_ns)).collect();
    let net: Vec<Vec<Estimate>> = runs
        .iter()
        .map(|log| {
            (0..n)
                .map(|j| {
                    let r = rate(log, j, period_ns);
                    Estimate::new(r.value - dark_rate[j].value, r.stderr.hypot(dark_rate[j].stderr))
                })
                .collect()
        })
        .collect();
    let ratio: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let off = net[i][j].value;
                    (i != j && off > 0.0).then(|| net[i][i].value / off)
                })
                .collect()
        })
        .collect();
    let min_ratio = ratio.iter().flatten().flatten().copied().reduce(f64::min);
    Ok(SpecificityMatrix {
        net_rate_hz: net,
        dark_rate_hz: dark_rate,
        ratio,
        min_ratio,
    })
}

/// Runs a dark acquisition and one acquisition per schedule (schedule `i`
/// illuminating pixel `i`), each of `n_gates` gates on its own substream.
pub fn specificity_matrix(
    array: &ArrayConfig,
    schedules: &[IlluminationSchedule],
    n_gates: u64,
    rng: RngSpec,
) -> Result<SpecificityMatrix> {
    let n = array.n_pixels;
    let dark = run_gates(array, &IlluminationSchedule::dark(), n_gates, rng.substream(n as u64))?;
    let runs = schedules
        .iter()
        .enumerate()
        .map(|(i, s)| run_gates(array, s, n_gates, rng.substream(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    specificity_from_logs(&dark, &runs, array.gate_period_ns())
}
