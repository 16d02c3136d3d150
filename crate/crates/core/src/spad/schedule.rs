use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidationReport};

/// Which pixels a laser pulse reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pixel(usize),
    Broadcast,
}

/// Periodic laser illumination: gates `0, period, 2 period, ...` carry a
/// Poisson pulse of `mean_photons` on the target pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationSchedule {
    pub period_gates: u64,
    pub mean_photons: f64,
    pub target: Target,
}

impl IlluminationSchedule {
    pub fn new(period_gates: u64, mean_photons: f64, target: Target) -> Self {
        Self {
            period_gates,
            mean_photons,
            target,
        }
    }

    /// No photons at all.
    pub fn dark() -> Self {
        Self::new(1, 0.0, Target::Broadcast)
    }

    pub fn is_dark(&self) -> bool {
        self.mean_photons == 0.0
    }

    /// A schedule without photons has no illuminated gates.
    pub fn is_illuminated(&self, gate: u64) -> bool {
        !self.is_dark() && gate.is_multiple_of(self.period_gates)
    }

    pub fn hits(&self, pixel: usize) -> bool {
        match self.target {
            Target::Broadcast => true,
            Target::Pixel(p) => p == pixel,
        }
    }

    /// Number of illuminated gates in `[lo, hi)`.
    pub fn illuminated_in(&self, lo: u64, hi: u64) -> u64 {
        if hi <= lo || self.is_dark() {
            return 0;
        }
        let p = self.period_gates;
        // multiples of p in [0, x) = ceil(x / p)
        hi.div_ceil(p) - lo.div_ceil(p)
    }

    /// First illuminated gate at or after `gate`.
    pub fn next_illuminated(&self, gate: u64) -> u64 {
        if self.is_dark() {
            return u64::MAX;
        }
        gate.div_ceil(self.period_gates) * self.period_gates
    }

    pub fn validate(&self, n_pixels: usize) -> Result<()> {
        let mut r = ValidationReport::default();
        if self.period_gates < 1 {
            r.push("schedule.period_gates", "must be >= 1");
        }
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            r.push(
                "schedule.mean_photons",
                format!("must be finite and >= 0, got {}", self.mean_photons),
            );
        }
        if let Target::Pixel(p) = self.target {
            if p >= n_pixels {
                r.push(
                    "schedule.target",
                    format!("pixel {p} out of range for a {n_pixels}-pixel array"),
                );
            }
        }
        r.into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_illuminated_gates() {
        let s = IlluminationSchedule::new(64, 0.2, Target::Broadcast);
        assert_eq!(s.illuminated_in(0, 64), 1);
        assert_eq!(s.illuminated_in(0, 65), 2);
        assert_eq!(s.illuminated_in(1, 64), 0);
        assert_eq!(s.illuminated_in(1, 129), 2);
        let brute = (37..1000).filter(|&g| s.is_illuminated(g)).count() as u64;
        assert_eq!(s.illuminated_in(37, 1000), brute);
        assert_eq!(s.next_illuminated(1), 64);
        assert_eq!(s.next_illuminated(128), 128);
    }

    #[test]
    fn rejects_bad_target() {
        let s = IlluminationSchedule::new(0, 0.2, Target::Pixel(4));
        assert!(s.validate(4).is_err());
    }
}
