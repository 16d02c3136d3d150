//! Crosstalk stimulus timing.
//!
//! An aggressor avalanche emits at the midpoint of its gate window; the
//! stimulus reaches each victim after an exponential formation delay. It can
//! only trigger the victim if it lands inside an active window: the
//! aggressor's own window (synchronous) or a later one (asynchronous).

use rand::Rng;

use crate::scalar::{lit, Real};

/// Pending stimulus on a victim pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkStimulus {
    /// Gate whose window contains the arrival.
    pub gate: u64,
    pub arrival_time_ns: f64,
    pub source_pixel: usize,
    /// Trigger probability if the victim is live at arrival.
    pub strength: f64,
}

impl Eq for CrosstalkStimulus {}

impl Ord for CrosstalkStimulus {
    // reversed so `BinaryHeap` pops the earliest arrival first
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .gate
            .cmp(&self.gate)
            .then(other.arrival_time_ns.total_cmp(&self.arrival_time_ns))
            .then(other.source_pixel.cmp(&self.source_pixel))
    }
}

impl PartialOrd for CrosstalkStimulus {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Where a stimulus lands relative to the aggressor's gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landing {
    Synchronous,
    /// Inside the window of the gate this many gates later.
    Later(u64),
    /// Between windows; cannot trigger.
    Missed,
}

/// Gate geometry used to place arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTiming {
    pub period_ns: f64,
    pub width_ns: f64,
    pub formation_tau_ns: f64,
}

impl GateTiming {
    /// Classifies an arrival `offset_ns` after the start of the aggressor's gate.
    pub fn land(&self, offset_ns: f64) -> Landing {
        if offset_ns < self.width_ns {
            return Landing::Synchronous;
        }
        let k = (offset_ns / self.period_ns).floor();
        if k >= 1.0 && offset_ns - k * self.period_ns < self.width_ns {
            Landing::Later(k as u64)
        } else {
            Landing::Missed
        }
    }

    /// Draws the arrival offset of one stimulus.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        0.5 * self.width_ns - self.formation_tau_ns * (1.0 - u).ln()
    }
}

/// Fraction of stimuli landing in the aggressor's own window.
pub fn sync_fraction<T: Real>(width_ns: T, tau_ns: T) -> T {
    T::one() - (-width_ns / (lit::<T>(2.0) * tau_ns)).exp()
}

/// Fraction of stimuli landing inside any later window.
pub fn async_fraction<T: Real>(period_ns: T, width_ns: T, tau_ns: T) -> T {
    let one = T::one();
    let half = lit::<T>(0.5);
    (-(period_ns - half * width_ns) / tau_ns).exp() * (one - (-width_ns / tau_ns).exp())
        / (one - (-period_ns / tau_ns).exp())
}

/// Fraction of stimuli landing in the window exactly `k >= 1` gates later.
pub fn later_fraction<T: Real>(k: u32, period_ns: T, width_ns: T, tau_ns: T) -> T {
    let kt = lit::<T>(k as f64) * period_ns;
    let half = lit::<T>(0.5);
    (-(kt - half * width_ns) / tau_ns).exp() * (T::one() - (-width_ns / tau_ns).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;

    #[test]
    fn nominal_gate_suppresses_sync() {
        let s: f64 = 0.01 * sync_fraction(0.4, 2.5);
        assert!((s - 7.688_365_361_336_4e-4).abs() < 1e-15, "{s}");
        let slow: f64 = 0.01 * sync_fraction(25.0, 2.5);
        assert!((slow - 0.009_932_620_530_009_1).abs() < 1e-15, "{slow}");
    }

    #[test]
    fn full_duty_cycle_captures_everything() {
        let w = 3.0_f64;
        let total = sync_fraction(w, 2.5) + async_fraction(w, w, 2.5);
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn later_terms_sum_to_async() {
        let sum: f64 = (1..200).map(|k| later_fraction(k, 1.0, 0.4, 2.5)).sum();
        assert!((sum - async_fraction(1.0, 0.4, 2.5)).abs() < 1e-14);
    }

    #[test]
    fn sampled_landings_match_closed_form() {
        let t = GateTiming {
            period_ns: 1.0,
            width_ns: 0.4,
            formation_tau_ns: 2.5,
        };
        let mut rng = RngSpec::new(9).rng();
        let n = 400_000;
        let (mut s, mut a) = (0u32, 0u32);
        for _ in 0..n {
            match t.land(t.sample_offset(&mut rng)) {
                Landing::Synchronous => s += 1,
                Landing::Later(_) => a += 1,
                Landing::Missed => {}
            }
        }
        let ps: f64 = sync_fraction(0.4, 2.5);
        let pa: f64 = async_fraction(1.0, 0.4, 2.5);
        let sd = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
        assert!((s as f64 / n as f64 - ps).abs() < 4.0 * sd(ps));
        assert!((a as f64 / n as f64 - pa).abs() < 4.0 * sd(pa));
    }
}
