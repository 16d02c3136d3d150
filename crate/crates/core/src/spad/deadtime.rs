use super::log::{DeadtimePolicy, GateEventLog, LogBuilder};
use crate::error::{Error, Result};

/// Re-applies dead time to a log's retained avalanches under `policy`.
///
/// With [`DeadtimePolicy::PerPixel`] an avalanche is removed if it falls
/// within the dead time of the same pixel's previous kept avalanche. With
/// [`DeadtimePolicy::Universal`] any kept avalanche also blanks every other
/// pixel; avalanches in the same gate are kept. All counters are rebuilt.
pub fn deadtime_blanking(log: &GateEventLog, policy: DeadtimePolicy) -> Result<GateEventLog> {
    let events = log.events.as_ref().ok_or_else(|| {
        Error::Simulation("deadtime_blanking needs a log with retained events".into())
    })?;
    let start = log.first_gate;
    let mut b = LogBuilder::new(
        log.schedule,
        log.deadtime_gates.clone(),
        policy,
        start,
        start + log.n_gates_simulated,
        true,
    );
    for chunk in events.chunk_by(|x, y| x.gate == y.gate) {
        b.push_gate(chunk);
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spad::engine::{Avalanche, Cause};
    use crate::spad::schedule::IlluminationSchedule;

    fn log_of(events: &[(u64, usize)], dead: u64, n_pix: usize, policy: DeadtimePolicy) -> GateEventLog {
        let mut b = LogBuilder::new(
            IlluminationSchedule::dark(),
            vec![dead; n_pix],
            policy,
            0,
            10_000,
            true,
        );
        let avs: Vec<Avalanche> = events
            .iter()
            .map(|&(gate, pixel)| Avalanche {
                gate,
                pixel,
                cause: Cause::Dark,
                aggressor: None,
            })
            .collect();
        for c in avs.chunk_by(|x, y| x.gate == y.gate) {
            b.push_gate(c);
        }
        b.finish()
    }

    #[test]
    fn empty_log_unchanged() {
        let log = log_of(&[], 100, 2, DeadtimePolicy::PerPixel);
        let out = deadtime_blanking(&log, DeadtimePolicy::Universal).unwrap();
        assert_eq!(out.pixels, log.pixels);
        assert_eq!(out.events, Some(vec![]));
    }

    #[test]
    fn same_pixel_within_deadtime_removed() {
        // raw avalanches 50 gates (50 ns at 1 GHz) apart; build without any blanking first
        let raw = log_of(&[(10, 0), (60, 0)], 0, 1, DeadtimePolicy::PerPixel);
        assert_eq!(raw.pixels[0].counts_total, 2);
        let mut with_dead = raw.clone();
        with_dead.deadtime_gates = vec![100];
        let out = deadtime_blanking(&with_dead, DeadtimePolicy::PerPixel).unwrap();
        assert_eq!(out.pixels[0].counts_total, 1);
        assert_eq!(out.events.unwrap()[0].gate, 10);
    }

    #[test]
    fn universal_removes_later_crosstalk_only() {
        // aggressor at gate 100, victim 10 gates later and one in the same gate
        let raw = log_of(&[(100, 0), (100, 2), (110, 1)], 100, 3, DeadtimePolicy::PerPixel);
        let per = deadtime_blanking(&raw, DeadtimePolicy::PerPixel).unwrap();
        assert_eq!(per.pixels[1].counts_total, 1);
        let uni = deadtime_blanking(&raw, DeadtimePolicy::Universal).unwrap();
        assert_eq!(uni.pixels[1].counts_total, 0);
        assert_eq!(uni.pixels[2].counts_total, 1);
        assert_eq!(uni.pixels[0].counts_total, 1);
        assert_eq!(uni.pairs[0][2].coincidences, 1);
    }

    #[test]
    fn live_gates_exclude_blanked_gates() {
        let log = log_of(&[(0, 0), (500, 0)], 100, 2, DeadtimePolicy::PerPixel);
        assert_eq!(log.pixels[0].live_gates[0], 10_000 - 200);
        assert_eq!(log.pixels[1].live_gates[0], 10_000);
        let uni = deadtime_blanking(&log, DeadtimePolicy::Universal).unwrap();
        assert_eq!(uni.pixels[1].live_gates[0], 10_000 - 200);
    }
}
