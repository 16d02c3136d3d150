//! Event-driven gate engine.
//!
//! Gates on which nothing can happen are skipped by thinning: the engine
//! bounds the per-gate avalanche probability of the whole array, jumps ahead
//! by a geometric number of gates and accepts the candidate gate with the
//! ratio of the true probability to the bound. Gates with deterministic
//! structure (sparse laser pulses, crosstalk arrivals) are evaluated directly.

use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::afterpulse::{afterpulse_gate_probability, TrapModel, TrapState};
use super::crosstalk::{CrosstalkStimulus, GateTiming, Landing};
use crate::config::ArrayConfig;

/// What triggered an avalanche. The first present cause in declaration
/// order is reported when several coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Photon,
    Dark,
    Afterpulse,
    Crosstalk,
}

impl Cause {
    pub fn name(self) -> &'static str {
        match self {
            Cause::Photon => "photon",
            Cause::Dark => "dark",
            Cause::Afterpulse => "afterpulse",
            Cause::Crosstalk => "crosstalk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Avalanche {
    pub gate: u64,
    pub pixel: usize,
    pub cause: Cause,
    /// Source pixel of a crosstalk avalanche.
    pub aggressor: Option<usize>,
}

/// Dynamic state of one pixel.
#[derive(Debug, Clone, Default)]
pub struct PixelState {
    pub trap: TrapState,
    /// First gate at which the pixel is armed again.
    pub live_from: u64,
    pub spde_effective: f64,
    pub pending_stimuli: BinaryHeap<CrosstalkStimulus>,
}

impl PixelState {
    pub fn is_live(&self, gate: u64) -> bool {
        gate >= self.live_from
    }

    pub fn dead_until_gate(&self) -> Option<u64> {
        self.live_from.checked_sub(1)
    }

    fn next_stimulus(&self) -> u64 {
        self.pending_stimuli.peek().map_or(u64::MAX, |s| s.gate)
    }
}

/// Photon arrivals seen by the array.
pub trait PhotonSource {
    /// Per-gate context shared by all pixels (pulse settings, receiver basis...).
    type Ctx: Copy;

    /// Bound on `photon_prob` of `pixel` over every gate that is not forced.
    fn photon_bound(&self, pixel: usize) -> f64;

    /// First gate `>= gate` that must be evaluated explicitly, or `u64::MAX`.
    fn next_forced(&self, gate: u64) -> u64;

    fn context<R: Rng + ?Sized>(&self, gate: u64, rng: &mut R) -> Self::Ctx;

    /// Probability that photons alone trigger `pixel` on this gate.
    fn photon_prob(&self, ctx: &Self::Ctx, gate: u64, pixel: usize) -> f64;
}

/// Receives the avalanches of every gate that has at least one.
pub trait AvalancheSink<C> {
    fn record(&mut self, ctx: &C, avalanches: &[Avalanche]);
}

impl<C> AvalancheSink<C> for Vec<Avalanche> {
    fn record(&mut self, _ctx: &C, avalanches: &[Avalanche]) {
        self.extend_from_slice(avalanches);
    }
}

#[derive(Debug, Clone)]
struct PixelParams {
    dark: f64,
    trap: TrapModel,
    deadtime: u64,
}

/// Stateful array simulator. One engine instance runs one contiguous stretch
/// of gates; independent stretches use independent engines.
pub struct Engine<'a, S: PhotonSource> {
    source: &'a S,
    xt: Vec<Vec<f64>>,
    timing: GateTiming,
    universal: bool,
    params: Vec<PixelParams>,
    pub pixels: Vec<PixelState>,
    // scratch
    probs: Vec<f64>,
    fired: Vec<bool>,
    queue: Vec<(usize, Cause, Option<usize>)>,
    causes: Vec<(f64, Cause, Option<usize>)>,
    out: Vec<Avalanche>,
}

impl<'a, S: PhotonSource> Engine<'a, S> {
    pub fn new(array: &ArrayConfig, source: &'a S) -> Self {
        let n = array.n_pixels;
        let params = array
            .pixels
            .iter()
            .map(|d| PixelParams {
                dark: d.dark_per_gate().min(1.0),
                trap: TrapModel::new(d),
                deadtime: d.deadtime_gates(),
            })
            .collect();
        let pixels = array
            .pixels
            .iter()
            .map(|d| PixelState {
                spde_effective: d.spde,
                ..PixelState::default()
            })
            .collect();
        Self {
            source,
            xt: array.crosstalk_intrinsic.clone(),
            timing: GateTiming {
                period_ns: array.gate_period_ns(),
                width_ns: array.gate_width_ns(),
                formation_tau_ns: array.formation_tau_ns,
            },
            universal: array.universal_deadtime,
            params,
            pixels,
            probs: vec![0.0; n],
            fired: vec![false; n],
            queue: Vec::with_capacity(n),
            causes: Vec::new(),
            out: Vec::with_capacity(n),
        }
    }

    fn n(&self) -> usize {
        self.pixels.len()
    }

    fn ap(&self, j: usize, gate: u64) -> f64 {
        afterpulse_gate_probability(&self.pixels[j].trap, &self.params[j].trap, gate)
    }

    /// Simulates gates `[start, end)`.
    pub fn run<R, K>(&mut self, start: u64, end: u64, rng: &mut R, sink: &mut K)
    where
        R: Rng + ?Sized,
        K: AvalancheSink<S::Ctx>,
    {
        let mut g = start;
        while g < end {
            let stim = self.pixels.iter().map(PixelState::next_stimulus).min().unwrap_or(u64::MAX);
            let forced = self.source.next_forced(g).min(stim);
            if g == forced {
                self.evaluate_forced(g, rng, sink);
                g += 1;
                continue;
            }
            let wake = self
                .pixels
                .iter()
                .filter(|p| p.live_from > g)
                .map(|p| p.live_from)
                .min()
                .unwrap_or(u64::MAX);
            let horizon = forced.min(wake).min(end);

            let mut bound = 0.0;
            for j in 0..self.n() {
                if self.pixels[j].is_live(g) {
                    bound += self.source.photon_bound(j) + self.params[j].dark + self.ap(j, g);
                }
            }
            let bound = bound.min(1.0);
            if bound > 0.0 {
                let skip = if bound >= 1.0 {
                    0.0
                } else {
                    let u: f64 = rng.random();
                    ((1.0 - u).ln() / (-bound).ln_1p()).floor()
                };
                if skip < (horizon - g) as f64 {
                    let cand = g + skip as u64;
                    self.evaluate_candidate(cand, bound, rng, sink);
                    g = cand + 1;
                    continue;
                }
            }
            g = horizon;
        }
    }

    /// Thinned gate: no stimuli pending here by construction.
    fn evaluate_candidate<R, K>(&mut self, g: u64, bound: f64, rng: &mut R, sink: &mut K)
    where
        R: Rng + ?Sized,
        K: AvalancheSink<S::Ctx>,
    {
        let ctx = self.source.context(g, rng);
        let mut none = 1.0;
        for j in 0..self.n() {
            let p = if self.pixels[j].is_live(g) {
                let ph = self.source.photon_prob(&ctx, g, j);
                1.0 - (1.0 - ph) * (1.0 - self.params[j].dark) * (1.0 - self.ap(j, g))
            } else {
                0.0
            };
            self.probs[j] = p;
            none *= 1.0 - p;
        }
        let any = 1.0 - none;
        if rng.random::<f64>() * bound >= any {
            return;
        }
        // draw the fired set conditional on it being non-empty
        self.queue.clear();
        let mut conditioned = true;
        for j in 0..self.n() {
            let p = self.probs[j];
            let fires = if conditioned {
                let rest: f64 = 1.0 - self.probs[j..].iter().map(|x| 1.0 - x).product::<f64>();
                rest > 0.0 && rng.random::<f64>() * rest < p
            } else {
                rng.random::<f64>() < p
            };
            if fires {
                conditioned = false;
                let ph = self.source.photon_prob(&ctx, g, j);
                let causes = [
                    (ph, Cause::Photon, None),
                    (self.params[j].dark, Cause::Dark, None),
                    (self.ap(j, g), Cause::Afterpulse, None),
                ];
                let (cause, agg) = first_cause(&causes, rng);
                self.queue.push((j, cause, agg));
            }
        }
        self.resolve(g, &ctx, rng, sink);
    }

    fn evaluate_forced<R, K>(&mut self, g: u64, rng: &mut R, sink: &mut K)
    where
        R: Rng + ?Sized,
        K: AvalancheSink<S::Ctx>,
    {
        let ctx = self.source.context(g, rng);
        self.queue.clear();
        let mut causes = std::mem::take(&mut self.causes);
        for j in 0..self.n() {
            causes.clear();
            let live = self.pixels[j].is_live(g);
            while self.pixels[j].next_stimulus() == g {
                let s = self.pixels[j].pending_stimuli.pop().expect("peeked");
                if live {
                    causes.push((s.strength, Cause::Crosstalk, Some(s.source_pixel)));
                }
            }
            if !live {
                continue;
            }
            let ph = self.source.photon_prob(&ctx, g, j);
            causes.splice(
                0..0,
                [
                    (ph, Cause::Photon, None),
                    (self.params[j].dark, Cause::Dark, None),
                    (self.ap(j, g), Cause::Afterpulse, None),
                ],
            );
            let none: f64 = causes.iter().map(|c| 1.0 - c.0).product();
            if rng.random::<f64>() < 1.0 - none {
                let (cause, agg) = first_cause(&causes, rng);
                self.queue.push((j, cause, agg));
            }
        }
        self.causes = causes;
        if !self.queue.is_empty() {
            self.resolve(g, &ctx, rng, sink);
        }
    }

    /// Propagates crosstalk from the queued avalanches of gate `g`, then
    /// applies dead time and trap deposits.
    fn resolve<R, K>(&mut self, g: u64, ctx: &S::Ctx, rng: &mut R, sink: &mut K)
    where
        R: Rng + ?Sized,
        K: AvalancheSink<S::Ctx>,
    {
        let n = self.n();
        self.fired.iter_mut().for_each(|f| *f = false);
        for &(j, _, _) in &self.queue {
            self.fired[j] = true;
        }
        self.out.clear();
        let mut i = 0;
        while i < self.queue.len() {
            let (a, cause, aggressor) = self.queue[i];
            i += 1;
            self.out.push(Avalanche {
                gate: g,
                pixel: a,
                cause,
                aggressor,
            });
            for v in 0..n {
                let s = self.xt[a][v];
                if v == a || s == 0.0 {
                    continue;
                }
                let offset = self.timing.sample_offset(rng);
                match self.timing.land(offset) {
                    Landing::Synchronous => {
                        if !self.fired[v] && self.pixels[v].is_live(g) && rng.random::<f64>() < s {
                            self.fired[v] = true;
                            self.queue.push((v, Cause::Crosstalk, Some(a)));
                        }
                    }
                    Landing::Later(k) => {
                        self.pixels[v].pending_stimuli.push(CrosstalkStimulus {
                            gate: g.saturating_add(k),
                            arrival_time_ns: g as f64 * self.timing.period_ns + offset,
                            source_pixel: a,
                            strength: s,
                        });
                    }
                    Landing::Missed => {}
                }
            }
        }
        let mut blank_all = 0;
        for av in &self.out {
            let j = av.pixel;
            let p = &self.params[j];
            let st = &mut self.pixels[j];
            st.trap.deposit(g, &p.trap);
            let until = g + p.deadtime + 1;
            st.live_from = st.live_from.max(until);
            blank_all = blank_all.max(until);
        }
        if self.universal {
            for st in &mut self.pixels {
                st.live_from = st.live_from.max(blank_all);
            }
        }
        sink.record(ctx, &self.out);
    }
}

/// Picks the first cause that occurs, conditional on at least one occurring.
fn first_cause<R: Rng + ?Sized>(
    causes: &[(f64, Cause, Option<usize>)],
    rng: &mut R,
) -> (Cause, Option<usize>) {
    for (i, &(p, c, a)) in causes.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let rest = 1.0 - causes[i..].iter().map(|x| 1.0 - x.0).product::<f64>();
        if p >= rest || rng.random::<f64>() * rest < p {
            return (c, a);
        }
    }
    let last = causes.iter().rev().find(|c| c.0 > 0.0).unwrap_or(&causes[0]);
    (last.1, last.2)
}
