use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::spad::GateEventLog;

/// Aggressor click counts below this are flagged as low confidence.
pub const LOW_CONFIDENCE_AGGRESSORS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub value: Estimate,
    /// The accidental-subtracted count was negative and `value` clamped to 0.
    pub clamped: bool,
}

/// Crosstalk probabilities per aggressor click, indexed `[aggressor][victim]`.
/// Diagonal entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrices {
    pub sync: Vec<Vec<PairEstimate>>,
    #[serde(rename = "async")]
    pub async_: Vec<Vec<PairEstimate>>,
    pub aggressor_counts: Vec<u64>,
    pub low_confidence: Vec<bool>,
}

fn subtract(observed: u64, accidental: f64, var_acc: f64, n_a: f64) -> PairEstimate {
    if n_a == 0.0 {
        return PairEstimate {
            value: Estimate::new(0.0, f64::NAN),
            clamped: false,
        };
    }
    let v = (observed as f64 - accidental) / n_a;
    let se = ((observed as f64).max(1.0) + var_acc).sqrt() / n_a;
    PairEstimate {
        value: Estimate::new(v.max(0.0), se),
        clamped: v < 0.0,
    }
}

/// Blind crosstalk estimate from coincidence statistics, without cause tags.
///
/// Synchronous: victim clicks in the aggressor's click gates, minus the
/// accidental expectation. Asynchronous: victim clicks in the trailing
/// window of dead-time length after each aggressor click, minus accidentals.
/// Accidentals use the victim's click probability in gates outside every
/// aggressor click gate and window, separately for illuminated and
/// non-illuminated gates.
pub fn measure_crosstalk(log: &GateEventLog) -> CrosstalkMatrices {
    let n = log.n_pixels();
    let zero = PairEstimate {
        value: Estimate::new(0.0, 0.0),
        clamped: false,
    };
    let mut sync = vec![vec![zero; n]; n];
    let mut asy = vec![vec![zero; n]; n];
    for a in 0..n {
        let pa = &log.pixels[a];
        let clicks = [pa.counts_dark_gates as f64, pa.counts_illuminated as f64];
        let window = log.window_gates(a).map(|x| x as f64);
        let outside = log.outside_gates(a);
        let n_a = pa.counts_total as f64;
        for v in 0..n {
            if v == a {
                continue;
            }
            let pc = &log.pairs[a][v];
            let (mut acc_s, mut var_s, mut acc_w, mut var_w) = (0.0, 0.0, 0.0, 0.0);
            for c in 0..2 {
                if outside[c] == 0 {
                    continue;
                }
                let g = outside[c] as f64;
                let p = pc.outside_clicks[c] as f64 / g;
                // variance of p is ~ p / g for rare clicks
                acc_s += clicks[c] * p;
                var_s += clicks[c].powi(2) * p / g;
                acc_w += window[c] * p;
                var_w += window[c].powi(2) * p / g;
            }
            sync[a][v] = subtract(pc.coincidences, acc_s, var_s, n_a);
            asy[a][v] = subtract(pc.post_window, acc_w, var_w, n_a);
        }
    }
    let aggressor_counts: Vec<u64> = log.pixels.iter().map(|p| p.counts_total).collect();
    CrosstalkMatrices {
        sync,
        async_: asy,
        low_confidence: aggressor_counts.iter().map(|&c| c < LOW_CONFIDENCE_AGGRESSORS).collect(),
        aggressor_counts,
    }
}
