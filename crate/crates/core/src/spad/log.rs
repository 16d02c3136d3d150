use std::io::Write;

use serde::{Deserialize, Serialize};

use super::engine::{Avalanche, AvalancheSink};
use super::schedule::IlluminationSchedule;
use crate::error::Result;

/// Which pixels an avalanche blanks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadtimePolicy {
    #[default]
    PerPixel,
    Universal,
}

/// Gate class: 0 = non-illuminated, 1 = illuminated.
pub type ClassCounts = [u64; 2];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub counts_illuminated: u64,
    pub counts_dark_gates: u64,
    pub counts_total: u64,
    /// Armed gates by class; the denominators of the rate estimators.
    pub live_gates: ClassCounts,
}

/// Statistics of victim clicks relative to one aggressor's clicks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Gates in which both pixels fired.
    pub coincidences: u64,
    /// Victim clicks inside the aggressor's trailing window.
    pub post_window: u64,
    /// Victim clicks in gates outside the aggressor's click gates and windows.
    pub outside_clicks: ClassCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggressorCoverage {
    /// Trailing window length in gates.
    pub window: u64,
    /// Gates covered by the union of click gates and trailing windows.
    pub covered: ClassCounts,
}

/// Counters accumulated over a run, in the form a blind experimenter sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEventLog {
    pub first_gate: u64,
    pub n_gates_simulated: u64,
    pub schedule: IlluminationSchedule,
    pub policy: DeadtimePolicy,
    pub deadtime_gates: Vec<u64>,
    /// Gates in the run by class.
    pub gates: ClassCounts,
    pub pixels: Vec<PixelCounts>,
    /// `pairs[a][v]`, aggressor `a`, victim `v`.
    pub pairs: Vec<Vec<PairCounts>>,
    pub coverage: Vec<AggressorCoverage>,
    /// Every avalanche in gate order, if retained.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub events: Option<Vec<Avalanche>>,
}

impl GateEventLog {
    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    /// Gates outside `a`'s covered set, by class.
    pub fn outside_gates(&self, a: usize) -> ClassCounts {
        let c = &self.coverage[a].covered;
        [self.gates[0] - c[0], self.gates[1] - c[1]]
    }

    /// Trailing-window gates of `a` (covered minus its own click gates), by class.
    pub fn window_gates(&self, a: usize) -> ClassCounts {
        let c = &self.coverage[a].covered;
        let p = &self.pixels[a];
        [
            c[0].saturating_sub(p.counts_dark_gates),
            c[1].saturating_sub(p.counts_illuminated),
        ]
    }

    /// Sums logs of disjoint stretches of one experiment.
    pub fn merge(mut self, other: GateEventLog) -> GateEventLog {
        self.first_gate = self.first_gate.min(other.first_gate);
        self.n_gates_simulated += other.n_gates_simulated;
        for c in 0..2 {
            self.gates[c] += other.gates[c];
        }
        for (p, q) in self.pixels.iter_mut().zip(&other.pixels) {
            p.counts_illuminated += q.counts_illuminated;
            p.counts_dark_gates += q.counts_dark_gates;
            p.counts_total += q.counts_total;
            for c in 0..2 {
                p.live_gates[c] += q.live_gates[c];
            }
        }
        for (row, orow) in self.pairs.iter_mut().zip(&other.pairs) {
            for (p, q) in row.iter_mut().zip(orow) {
                p.coincidences += q.coincidences;
                p.post_window += q.post_window;
                for c in 0..2 {
                    p.outside_clicks[c] += q.outside_clicks[c];
                }
            }
        }
        for (p, q) in self.coverage.iter_mut().zip(&other.coverage) {
            for c in 0..2 {
                p.covered[c] += q.covered[c];
            }
        }
        self.events = match (self.events, other.events) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        self
    }

    /// Writes one CSV record per avalanche. Requires retained events.
    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["gate_index", "pixel", "cause", "aggressor_pixel"])?;
        for e in self.events.as_deref().unwrap_or_default() {
            let agg = e.aggressor.map_or(-1, |a| a as i64);
            out.write_record([
                e.gate.to_string(),
                e.pixel.to_string(),
                e.cause.name().to_string(),
                agg.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds a [`GateEventLog`] from avalanches delivered in gate order.
///
/// Dead time is re-applied here: an avalanche on a pixel that the policy
/// says is blanked is dropped. On raw engine output with a matching policy
/// nothing is dropped.
#[derive(Debug, Clone)]
pub struct LogBuilder {
    end: u64,
    log: GateEventLog,
    live_from: Vec<u64>,
    dead: Vec<ClassCounts>,
    covered_until: Vec<Option<u64>>,
    kept: Vec<usize>,
}

impl LogBuilder {
    pub fn new(
        schedule: IlluminationSchedule,
        deadtime_gates: Vec<u64>,
        policy: DeadtimePolicy,
        start: u64,
        end: u64,
        retain_events: bool,
    ) -> Self {
        let n = deadtime_gates.len();
        let ill = schedule.illuminated_in(start, end);
        let log = GateEventLog {
            first_gate: start,
            n_gates_simulated: end - start,
            schedule,
            policy,
            gates: [end - start - ill, ill],
            pixels: vec![PixelCounts::default(); n],
            pairs: vec![vec![PairCounts::default(); n]; n],
            coverage: deadtime_gates
                .iter()
                .map(|&d| AggressorCoverage {
                    window: d.max(1),
                    covered: [0, 0],
                })
                .collect(),
            deadtime_gates,
            events: retain_events.then(Vec::new),
        };
        Self {
            end,
            log,
            live_from: vec![start; n],
            dead: vec![[0, 0]; n],
            covered_until: vec![None; n],
            kept: Vec::with_capacity(n),
        }
    }

    fn class_split(&self, lo: u64, hi: u64) -> ClassCounts {
        let hi = hi.min(self.end);
        if hi <= lo {
            return [0, 0];
        }
        let ill = self.log.schedule.illuminated_in(lo, hi);
        [hi - lo - ill, ill]
    }

    /// Feeds the avalanches of one gate.
    pub fn push_gate(&mut self, avalanches: &[Avalanche]) {
        let Some(first) = avalanches.first() else {
            return;
        };
        let g = first.gate;
        let class = usize::from(self.log.schedule.is_illuminated(g));
        self.kept.clear();
        for av in avalanches {
            if g >= self.live_from[av.pixel] && !self.kept.contains(&av.pixel) {
                self.kept.push(av.pixel);
                if let Some(ev) = self.log.events.as_mut() {
                    ev.push(*av);
                }
            }
        }
        if self.kept.is_empty() {
            return;
        }
        let n = self.log.pixels.len();
        for &v in &self.kept {
            let p = &mut self.log.pixels[v];
            p.counts_total += 1;
            if class == 1 {
                p.counts_illuminated += 1;
            } else {
                p.counts_dark_gates += 1;
            }
            for a in 0..n {
                if a == v {
                    continue;
                }
                let pc = &mut self.log.pairs[a][v];
                if self.kept.contains(&a) {
                    pc.coincidences += 1;
                } else if self.covered_until[a].is_some_and(|c| g <= c) {
                    pc.post_window += 1;
                } else {
                    pc.outside_clicks[class] += 1;
                }
            }
        }
        // coverage of the aggressor windows
        for i in 0..self.kept.len() {
            let a = self.kept[i];
            let lo = self.covered_until[a].map_or(g, |c| g.max(c + 1));
            let hi = g + self.log.coverage[a].window + 1;
            let add = self.class_split(lo, hi);
            for c in 0..2 {
                self.log.coverage[a].covered[c] += add[c];
            }
            self.covered_until[a] = Some((hi - 1).min(self.end - 1));
        }
        // dead time
        let blank = |d: u64| g + d + 1;
        let universal_until = self
            .kept
            .iter()
            .map(|&j| blank(self.log.deadtime_gates[j]))
            .max()
            .unwrap_or(0);
        for j in 0..n {
            let until = if self.log.policy == DeadtimePolicy::Universal {
                universal_until
            } else if self.kept.contains(&j) {
                blank(self.log.deadtime_gates[j])
            } else {
                continue;
            };
            if until > self.live_from[j] {
                let lo = self.live_from[j].max(g + 1);
                let add = self.class_split(lo, until);
                for c in 0..2 {
                    self.dead[j][c] += add[c];
                }
                self.live_from[j] = until;
            }
        }
    }

    pub fn finish(mut self) -> GateEventLog {
        for (p, d) in self.log.pixels.iter_mut().zip(&self.dead) {
            p.live_gates = [self.log.gates[0] - d[0], self.log.gates[1] - d[1]];
        }
        self.log
    }
}

impl<C> AvalancheSink<C> for LogBuilder {
    fn record(&mut self, _ctx: &C, avalanches: &[Avalanche]) {
        self.push_gate(avalanches);
    }
}
