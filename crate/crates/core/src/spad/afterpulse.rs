//! Trap-population afterpulse model.
//!
//! Each avalanche adds one unit of trap charge which decays as
//! `exp(-t / trap_tau)`. Once the pixel is live again the per-gate afterpulse
//! hazard is the current charge times a constant chosen so that the hazards
//! summed from the end of the dead time onwards equal `afterpulse_total`.

use crate::config::DetectorConfig;

/// Afterpulse constants of one pixel in gate units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapModel {
    /// Gates per trap time constant.
    pub tau_gates: f64,
    pub deadtime_gates: u64,
    /// Hazard on the first live gate right after a lone avalanche.
    pub first_hazard: f64,
}

impl TrapModel {
    pub fn new(det: &DetectorConfig) -> Self {
        let tau_gates = det.trap_tau_ns * det.gate_rate_ghz;
        let q = (-1.0 / tau_gates).exp();
        Self {
            tau_gates,
            deadtime_gates: det.deadtime_gates(),
            first_hazard: det.afterpulse_total * (1.0 - q),
        }
    }

    /// Per-gate decay factor of the trap charge.
    pub fn q(&self) -> f64 {
        (-1.0 / self.tau_gates).exp()
    }

    /// Hazard `n` gates after an avalanche, for a single unit of charge.
    pub fn hazard_after(&self, n: u64) -> f64 {
        if n <= self.deadtime_gates {
            return 0.0;
        }
        let k = (n - self.deadtime_gates - 1) as f64;
        self.first_hazard * (-k / self.tau_gates).exp()
    }
}

/// Trap charge of one pixel, stored as its value at a reference gate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrapState {
    pub charge: f64,
    pub ref_gate: u64,
}

impl TrapState {
    pub fn charge_at(&self, gate: u64, m: &TrapModel) -> f64 {
        if self.charge == 0.0 {
            return 0.0;
        }
        self.charge * (-(gate.saturating_sub(self.ref_gate) as f64) / m.tau_gates).exp()
    }

    /// Adds the charge of an avalanche at `gate`.
    pub fn deposit(&mut self, gate: u64, m: &TrapModel) {
        self.charge = self.charge_at(gate, m) + 1.0;
        self.ref_gate = gate;
    }
}

/// Per-gate afterpulse probability of a live pixel at `gate`.
///
/// Callers are responsible for returning zero while the pixel is dead; the
/// normalization assumes the charge is read at least `deadtime + 1` gates
/// after its most recent deposit.
pub fn afterpulse_gate_probability(state: &TrapState, model: &TrapModel, gate: u64) -> f64 {
    if state.charge == 0.0 {
        return 0.0;
    }
    let d = model.deadtime_gates as f64 + 1.0;
    let age = gate.saturating_sub(state.ref_gate) as f64;
    let h = state.charge * model.first_hazard * (-(age - d) / model.tau_gates).exp();
    h.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(apr: f64, dead: f64, tau: f64) -> DetectorConfig {
        DetectorConfig {
            afterpulse_total: apr,
            deadtime_ns: dead,
            trap_tau_ns: tau,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn empty_trap_gives_zero() {
        let m = TrapModel::new(&det(0.04, 100.0, 50.0));
        assert_eq!(afterpulse_gate_probability(&TrapState::default(), &m, 1234), 0.0);
    }

    #[test]
    fn hazards_after_deadtime_sum_to_total() {
        let m = TrapModel::new(&det(0.04, 100.0, 50.0));
        let mut s = TrapState::default();
        s.deposit(1000, &m);
        // brute-force sum of the decaying hazard over every live gate
        let mut sum = 0.0;
        for g in 1101..1101 + 20_000 {
            sum += afterpulse_gate_probability(&s, &m, g);
        }
        assert!((sum - 0.04).abs() < 1e-6, "{sum}");
        assert_eq!(m.hazard_after(101), afterpulse_gate_probability(&s, &m, 1101));
    }

    #[test]
    fn deposits_superpose() {
        let m = TrapModel::new(&det(0.0223, 100.0, 20.0));
        let mut a = TrapState::default();
        a.deposit(0, &m);
        a.deposit(150, &m);
        let g = 400;
        let sum = m.hazard_after(g) + m.hazard_after(g - 150);
        let got = afterpulse_gate_probability(&a, &m, g);
        assert!((got - sum).abs() < 1e-15 * sum.max(1e-300) + 1e-18);
    }

    #[test]
    fn charge_decays_monotonically() {
        let m = TrapModel::new(&det(0.03, 100.0, 20.0));
        let mut s = TrapState::default();
        s.deposit(10, &m);
        let mut prev = f64::INFINITY;
        for g in (10..500).step_by(7) {
            let c = s.charge_at(g, &m);
            assert!(c <= prev);
            prev = c;
        }
    }
}
