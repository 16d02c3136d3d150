//! Monte Carlo simulation of a gated SPAD array.

mod afterpulse;
mod crosstalk;
mod deadtime;
mod engine;
mod log;
mod schedule;

use rand::Rng;
use rayon::prelude::*;

pub use afterpulse::{afterpulse_gate_probability, TrapModel, TrapState};
pub use crosstalk::{
    async_fraction, later_fraction, sync_fraction, CrosstalkStimulus, GateTiming, Landing,
};
pub use deadtime::deadtime_blanking;
pub use engine::{Avalanche, AvalancheSink, Cause, Engine, PhotonSource, PixelState};
pub use log::{
    AggressorCoverage, ClassCounts, DeadtimePolicy, GateEventLog, LogBuilder, PairCounts,
    PixelCounts,
};
pub use schedule::{IlluminationSchedule, Target};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::rng::RngSpec;

/// Laser pulses following an [`IlluminationSchedule`].
#[derive(Debug, Clone)]
pub struct ScheduleSource {
    schedule: IlluminationSchedule,
    click: Vec<f64>,
}

impl ScheduleSource {
    pub fn new(array: &ArrayConfig, schedule: IlluminationSchedule) -> Self {
        let click = array
            .pixels
            .iter()
            .enumerate()
            .map(|(j, d)| {
                if schedule.hits(j) {
                    -(-schedule.mean_photons * d.spde).exp_m1()
                } else {
                    0.0
                }
            })
            .collect();
        Self { schedule, click }
    }

    fn sparse(&self) -> bool {
        self.schedule.period_gates > 1 && !self.schedule.is_dark()
    }
}

impl PhotonSource for ScheduleSource {
    type Ctx = ();

    fn photon_bound(&self, pixel: usize) -> f64 {
        if self.sparse() {
            0.0
        } else {
            self.click[pixel]
        }
    }

    fn next_forced(&self, gate: u64) -> u64 {
        if self.sparse() {
            self.schedule.next_illuminated(gate)
        } else {
            u64::MAX
        }
    }

    fn context<R: Rng + ?Sized>(&self, _gate: u64, _rng: &mut R) {}

    fn photon_prob(&self, _ctx: &(), gate: u64, pixel: usize) -> f64 {
        if self.schedule.is_illuminated(gate) {
            self.click[pixel]
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every avalanche in the log.
    pub retain_events: bool,
    /// Split the run into independent stretches of this many gates, each on
    /// its own RNG substream, simulated in parallel. `None` runs sequentially.
    pub chunk_gates: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            retain_events: false,
            chunk_gates: Some(1 << 26),
        }
    }
}

fn check_run(array: &ArrayConfig, schedule: &IlluminationSchedule, n_gates: u64) -> Result<()> {
    array.validate()?;
    schedule.validate(array.n_pixels)?;
    if n_gates == 0 {
        return Err(Error::Simulation("n_gates must be >= 1".into()));
    }
    let horizon_ns = n_gates as f64 * array.gate_period_ns();
    if !horizon_ns.is_finite() || n_gates > u64::MAX / 2 {
        return Err(Error::Simulation(format!("gate index space overflows at {n_gates} gates")));
    }
    Ok(())
}

fn run_stretch(
    array: &ArrayConfig,
    source: &ScheduleSource,
    schedule: IlluminationSchedule,
    start: u64,
    end: u64,
    spec: RngSpec,
    retain: bool,
) -> GateEventLog {
    let dead = array.pixels.iter().map(|d| d.deadtime_gates()).collect();
    let policy = if array.universal_deadtime {
        DeadtimePolicy::Universal
    } else {
        DeadtimePolicy::PerPixel
    };
    let mut sink = LogBuilder::new(schedule, dead, policy, start, end, retain);
    let mut engine = Engine::new(array, source);
    engine.run(start, end, &mut spec.rng(), &mut sink);
    sink.finish()
}

/// Simulates `n_gates` gates of the array under `schedule`.
pub fn run_gates(
    array: &ArrayConfig,
    schedule: &IlluminationSchedule,
    n_gates: u64,
    rng: RngSpec,
) -> Result<GateEventLog> {
    run_gates_with(array, schedule, n_gates, rng, RunOptions::default())
}

pub fn run_gates_with(
    array: &ArrayConfig,
    schedule: &IlluminationSchedule,
    n_gates: u64,
    rng: RngSpec,
    opts: RunOptions,
) -> Result<GateEventLog> {
    check_run(array, schedule, n_gates)?;
    let source = ScheduleSource::new(array, *schedule);
    let retain = opts.retain_events;
    match opts.chunk_gates {
        None => Ok(run_stretch(array, &source, *schedule, 0, n_gates, rng, retain)),
        Some(chunk) => {
            // keep chunk boundaries on the illumination grid
            let p = schedule.period_gates;
            let chunk = chunk.max(1).div_ceil(p) * p;
            let n_chunks = n_gates.div_ceil(chunk);
            let logs: Vec<GateEventLog> = (0..n_chunks)
                .into_par_iter()
                .map(|k| {
                    let start = k * chunk;
                    let end = (start + chunk).min(n_gates);
                    run_stretch(array, &source, *schedule, start, end, rng.substream(k), retain)
                })
                .collect();
            Ok(logs
                .into_iter()
                .reduce(GateEventLog::merge)
                .expect("at least one chunk"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DetectorConfig, Preset};

    fn single(spde: f64, dcr: f64, apr: f64) -> ArrayConfig {
        ArrayConfig::uniform(
            DetectorConfig {
                spde,
                dcr_hz: dcr,
                afterpulse_total: apr,
                ..DetectorConfig::default()
            },
            1,
            &[],
        )
    }

    #[test]
    fn nothing_happens_without_stimulus() {
        let a = Preset::Cold
            .array()
            .map_pixels(|d| {
                d.dcr_hz = 0.0;
                d.afterpulse_total = 0.0
            })
            .with_uniform_crosstalk(0.0);
        let s = IlluminationSchedule::new(64, 0.0, Target::Broadcast);
        let log = run_gates(&a, &s, 1_000_000, RngSpec::new(1)).unwrap();
        assert!(log.pixels.iter().all(|p| p.counts_total == 0));
    }

    #[test]
    fn zero_gates_rejected() {
        let a = single(0.15, 0.0, 0.0);
        assert!(run_gates(&a, &IlluminationSchedule::dark(), 0, RngSpec::new(1)).is_err());
    }

    #[test]
    fn deterministic_for_identical_spec() {
        let a = Preset::Cold.array();
        let s = IlluminationSchedule::new(64, 0.2, Target::Pixel(0));
        let opts = RunOptions {
            retain_events: true,
            chunk_gates: Some(1 << 20),
        };
        let x = run_gates_with(&a, &s, 5_000_000, RngSpec::new(42), opts).unwrap();
        let y = run_gates_with(&a, &s, 5_000_000, RngSpec::new(42), opts).unwrap();
        assert_eq!(x, y);
        let z = run_gates_with(&a, &s, 5_000_000, RngSpec::new(43), opts).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn illuminated_click_fraction_is_poisson() {
        // every gate illuminated so the thinning path is exercised
        let mut a = single(0.15, 0.0, 0.0);
        a.pixels[0].deadtime_ns = 0.0;
        let s = IlluminationSchedule::new(1, 0.2, Target::Broadcast);
        let n = 2_000_000;
        let log = run_gates(&a, &s, n, RngSpec::new(7)).unwrap();
        let p = 1.0 - (-0.03f64).exp();
        let got = log.pixels[0].counts_total as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((got - p).abs() < 4.0 * sd, "{got} vs {p}");
    }

    #[test]
    fn counts_partition_and_coincidence_bound() {
        let a = Preset::Array4.array();
        let s = IlluminationSchedule::new(64, 0.2, Target::Broadcast);
        let log = run_gates(&a, &s, 20_000_000, RngSpec::new(3)).unwrap();
        for (j, p) in log.pixels.iter().enumerate() {
            assert_eq!(p.counts_total, p.counts_illuminated + p.counts_dark_gates);
            for a in 0..4 {
                if a != j {
                    let c = log.pairs[a][j].coincidences;
                    assert!(c <= p.counts_total.min(log.pixels[a].counts_total));
                    assert_eq!(c, log.pairs[j][a].coincidences);
                }
            }
        }
    }
}
