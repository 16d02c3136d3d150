//! Pulse-level BB84 Monte Carlo on top of the array engine.
//!
//! Alice repeats a fixed pseudorandom pattern. Every gate carries one pulse;
//! Bob's basis and the double-click coin are drawn only for gates the engine
//! actually evaluates, which leaves the statistics of detected pulses intact.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FiniteKeyConfig, Intensity, ProtocolConfig};
use crate::error::{Error, Result};
use crate::keyrate::{secure_key_length, KeyRateReport};
use crate::link::{transmittance, BlockCounts, OperatingPoint, PulseMix};
use crate::rng::RngSpec;
use crate::spad::{Avalanche, AvalancheSink, Engine, PhotonSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pulse {
    /// 0 = majority basis, 1 = minority basis.
    pub basis: u8,
    pub bit: u8,
    pub class: Intensity,
}

impl Pulse {
    /// Encoding phase in radians: `basis * pi/2 + bit * pi`.
    pub fn phase(&self) -> f64 {
        f64::from(self.basis) * PI / 2.0 + f64::from(self.bit) * PI
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulsePattern {
    pub pulses: Vec<Pulse>,
    pub seed: u64,
    pub stream_id: u64,
}

impl PulsePattern {
    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Pulses per `[class][basis][bit]`.
    pub fn counts(&self) -> [[[u64; 2]; 2]; 3] {
        let mut c = [[[0u64; 2]; 2]; 3];
        for p in &self.pulses {
            c[p.class.index()][p.basis as usize][p.bit as usize] += 1;
        }
        c
    }

    pub fn class_counts(&self) -> [u64; 3] {
        let c = self.counts();
        [0, 1, 2].map(|k| c[k].iter().flatten().sum())
    }

    /// `protocol` with class probabilities and basis bias replaced by the
    /// frequencies realized in this pattern, which is what Alice actually
    /// emitted.
    pub fn effective_protocol(&self, protocol: &ProtocolConfig) -> ProtocolConfig {
        let n = self.len().max(1) as f64;
        let k = self.class_counts();
        let majority = self.pulses.iter().filter(|p| p.basis == 0).count() as f64;
        ProtocolConfig {
            p_signal: k[0] as f64 / n,
            p_decoy: k[1] as f64 / n,
            p_vacuum: k[2] as f64 / n,
            basis_bias: majority / n,
            ..protocol.clone()
        }
    }
}

/// Draws class, basis and bit of every pattern pulse independently.
pub fn generate_pattern(protocol: &ProtocolConfig, rng: RngSpec) -> Result<PulsePattern> {
    let mut report = crate::error::ValidationReport::default();
    protocol.check("protocol", &mut report);
    report.into_result()?;
    let mut r = rng.rng();
    let probs = protocol.probs();
    let pulses = (0..protocol.pattern_length)
        .map(|_| {
            let u: f64 = r.random();
            let class = if u < probs[0] {
                Intensity::Signal
            } else if u < probs[0] + probs[1] {
                Intensity::Decoy
            } else {
                Intensity::Vacuum
            };
            let basis = u8::from(r.random::<f64>() >= protocol.basis_bias);
            let bit = u8::from(r.random::<bool>());
            Pulse { basis, bit, class }
        })
        .collect();
    Ok(PulsePattern {
        pulses,
        seed: rng.seed,
        stream_id: rng.stream_id,
    })
}

/// One detected pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub pattern_idx: u32,
    pub alice_basis: u8,
    pub alice_bit: u8,
    pub intensity: &'static str,
    pub bob_basis: u8,
    /// `0`, `1` or `both`.
    pub detector: &'static str,
    pub sifted: bool,
    pub error: bool,
}

/// Integer outcome of a simulated stretch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiftedBlock {
    /// Sifted bits and errors, `[class][basis]`.
    pub sifted: [[u64; 2]; 3],
    pub errors: [[u64; 2]; 3],
    /// Pulses with at least one click, per class.
    pub detected: [u64; 3],
    /// Pulses emitted per class.
    pub emitted: [u64; 3],
    pub double_clicks: u64,
    /// Avalanches per detector.
    pub avalanches: [u64; 2],
    pub gates: u64,
    pub duration_s: f64,
    /// Detected pulses only; pulses without a click are not listed.
    #[serde(skip)]
    pub trace: Option<Vec<TraceRow>>,
}

impl SiftedBlock {
    pub fn merge(mut self, o: SiftedBlock) -> SiftedBlock {
        for k in 0..3 {
            for b in 0..2 {
                self.sifted[k][b] += o.sifted[k][b];
                self.errors[k][b] += o.errors[k][b];
            }
            self.detected[k] += o.detected[k];
            self.emitted[k] += o.emitted[k];
        }
        self.double_clicks += o.double_clicks;
        self.avalanches[0] += o.avalanches[0];
        self.avalanches[1] += o.avalanches[1];
        self.gates += o.gates;
        self.duration_s += o.duration_s;
        self.trace = match (self.trace, o.trace) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            (a, b) => a.or(b),
        };
        self
    }

    pub fn counts(&self) -> BlockCounts<f64> {
        let col = |src: &[[u64; 2]; 3], b: usize| [0, 1, 2].map(|k| src[k][b] as f64);
        BlockCounts {
            n_x: col(&self.sifted, 0),
            m_x: col(&self.errors, 0),
            n_z: col(&self.sifted, 1),
            m_z: col(&self.errors, 1),
            duration_s: self.duration_s,
        }
    }

    pub fn sifted_majority(&self) -> u64 {
        self.sifted.iter().map(|s| s[0]).sum()
    }

    /// Click probability per emitted pulse of class `k`, with its binomial
    /// standard error.
    pub fn gain(&self, k: Intensity) -> (f64, f64) {
        binomial(self.detected[k.index()], self.emitted[k.index()])
    }

    /// Majority-basis error rate of class `k`, with its binomial standard error.
    pub fn qber(&self, k: Intensity) -> (f64, f64) {
        binomial(self.errors[k.index()][0], self.sifted[k.index()][0])
    }

    pub fn raw_rate_hz(&self) -> f64 {
        if self.duration_s > 0.0 {
            (self.avalanches[0] + self.avalanches[1]) as f64 / self.duration_s
        } else {
            0.0
        }
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let rows = self
            .trace
            .as_ref()
            .ok_or_else(|| Error::Simulation("block was simulated without a trace".into()))?;
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn binomial(x: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let p = x as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct PulseCtx {
    idx: u32,
    bob: u8,
    coin: bool,
}

/// Alice's repeating pattern seen through channel, AMZI and detectors.
struct PatternSource {
    len: u64,
    /// `[idx][bob basis][detector]` photon click probability.
    click: Vec<[[f64; 2]; 2]>,
    bound: [f64; 2],
    basis_bias: f64,
}

impl PatternSource {
    fn new(pattern: &PulsePattern, op: &OperatingPoint) -> Result<Self> {
        let c = &op.config;
        let t: f64 = transmittance(op)?;
        let v = c.receiver.visibility;
        let mus = c.protocol.mus();
        let click: Vec<[[f64; 2]; 2]> = pattern
            .pulses
            .iter()
            .map(|p| {
                [0u8, 1].map(|bob| {
                    let cos = if p.basis == bob {
                        if p.bit == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        0.0
                    };
                    let share0 = 0.5 * (1.0 + v * cos);
                    [0, 1].map(|j| {
                        let share = if j == 0 { share0 } else { 1.0 - share0 };
                        let eta = c.detectors.pixels[j].spde;
                        -(-mus[p.class.index()] * t * eta * share).exp_m1()
                    })
                })
            })
            .collect();
        let mut bound = [0.0f64; 2];
        for row in &click {
            for per_basis in row {
                for j in 0..2 {
                    bound[j] = bound[j].max(per_basis[j]);
                }
            }
        }
        Ok(Self {
            len: pattern.len() as u64,
            click,
            bound,
            basis_bias: c.protocol.basis_bias,
        })
    }
}

impl PhotonSource for PatternSource {
    type Ctx = PulseCtx;

    fn photon_bound(&self, pixel: usize) -> f64 {
        self.bound[pixel]
    }

    fn next_forced(&self, _gate: u64) -> u64 {
        u64::MAX
    }

    fn context<R: Rng + ?Sized>(&self, gate: u64, rng: &mut R) -> PulseCtx {
        PulseCtx {
            idx: (gate % self.len) as u32,
            bob: u8::from(rng.random::<f64>() >= self.basis_bias),
            coin: rng.random(),
        }
    }

    fn photon_prob(&self, ctx: &PulseCtx, _gate: u64, pixel: usize) -> f64 {
        self.click[ctx.idx as usize][ctx.bob as usize][pixel]
    }
}

struct SiftSink<'a> {
    pattern: &'a PulsePattern,
    block: SiftedBlock,
}

impl AvalancheSink<PulseCtx> for SiftSink<'_> {
    fn record(&mut self, ctx: &PulseCtx, avalanches: &[Avalanche]) {
        let mut fired = [false; 2];
        for a in avalanches {
            fired[a.pixel] = true;
            self.block.avalanches[a.pixel] += 1;
        }
        let p = self.pattern.pulses[ctx.idx as usize];
        let k = p.class.index();
        self.block.detected[k] += 1;
        let both = fired[0] && fired[1];
        if both {
            self.block.double_clicks += 1;
        }
        let bob_bit = if both { u8::from(ctx.coin) } else { u8::from(fired[1]) };
        let sifted = p.basis == ctx.bob;
        let error = sifted && bob_bit != p.bit;
        if sifted {
            self.block.sifted[k][p.basis as usize] += 1;
            if error {
                self.block.errors[k][p.basis as usize] += 1;
            }
        }
        if let Some(t) = self.block.trace.as_mut() {
            t.push(TraceRow {
                pattern_idx: ctx.idx,
                alice_basis: p.basis,
                alice_bit: p.bit,
                intensity: p.class.name(),
                bob_basis: ctx.bob,
                detector: if both {
                    "both"
                } else if fired[0] {
                    "0"
                } else {
                    "1"
                },
                sifted,
                error,
            });
        }
    }
}

/// Pattern repeats simulated by one engine before its state is reset.
pub const REPEATS_PER_CHUNK: u64 = 4096;

/// Simulates `n_repeats` passes of `pattern`.
pub fn simulate_block(pattern: &PulsePattern, op: &OperatingPoint, n_repeats: u64, rng: RngSpec) -> Result<SiftedBlock> {
    simulate_block_with(pattern, op, n_repeats, rng, false)
}

/// [`simulate_block`] with an optional per-pulse trace.
pub fn simulate_block_with(
    pattern: &PulsePattern,
    op: &OperatingPoint,
    n_repeats: u64,
    rng: RngSpec,
    trace: bool,
) -> Result<SiftedBlock> {
    if n_repeats == 0 {
        return Err(Error::Simulation("n_repeats must be >= 1".into()));
    }
    if pattern.is_empty() {
        return Err(Error::Simulation("empty pulse pattern".into()));
    }
    let source = PatternSource::new(pattern, op)?;
    let len = pattern.len() as u64;
    let per_class = pattern.class_counts();
    let rate_hz = op.config.detectors.gate_rate_ghz() * 1e9;
    let n_chunks = n_repeats.div_ceil(REPEATS_PER_CHUNK);
    let blocks: Vec<SiftedBlock> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let reps = REPEATS_PER_CHUNK.min(n_repeats - c * REPEATS_PER_CHUNK);
            let gates = reps * len;
            let mut sink = SiftSink {
                pattern,
                block: SiftedBlock {
                    emitted: per_class.map(|n| n * reps),
                    gates,
                    duration_s: gates as f64 / rate_hz,
                    trace: trace.then(Vec::new),
                    ..SiftedBlock::default()
                },
            };
            let mut engine = Engine::new(&op.config.detectors, &source);
            engine.run(0, gates, &mut rng.substream(c).rng(), &mut sink);
            sink.block
        })
        .collect();
    Ok(blocks.into_iter().reduce(SiftedBlock::merge).expect("at least one chunk"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRunOptions {
    /// Largest modeled acquisition time, in seconds, before giving up.
    pub duration_cap_s: f64,
    pub trace: bool,
}

impl Default for BlockRunOptions {
    fn default() -> Self {
        Self {
            duration_cap_s: 3600.0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRun {
    pub pattern_seed: u64,
    pub block: SiftedBlock,
    pub report: KeyRateReport<f64>,
}

/// Repeats the pattern until `fk.block_bits` majority-basis bits are sifted,
/// then computes the finite-key report.
pub fn run_to_block_size(op: &OperatingPoint, fk: &FiniteKeyConfig, rng: RngSpec) -> Result<BlockRun> {
    run_to_block_size_with(op, fk, rng, BlockRunOptions::default())
}

pub fn run_to_block_size_with(
    op: &OperatingPoint,
    fk: &FiniteKeyConfig,
    rng: RngSpec,
    opts: BlockRunOptions,
) -> Result<BlockRun> {
    if fk.block_bits == 0 {
        return Err(Error::Domain {
            what: "finite_key.block_bits",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    let pattern = generate_pattern(&op.config.protocol, rng.substream(0))?;
    let len = pattern.len() as u64;
    let rate_hz = op.config.detectors.gate_rate_ghz() * 1e9;
    let repeat_s = len as f64 / rate_hz;
    let target = fk.block_bits;

    let mut block: Option<SiftedBlock> = None;
    let mut batch = REPEATS_PER_CHUNK;
    let mut round = 1u64;
    loop {
        let b = simulate_block_with(&pattern, op, batch, rng.substream(round), opts.trace)?;
        round += 1;
        let acc = match block.take() {
            Some(a) => a.merge(b),
            None => b,
        };
        let have = acc.sifted_majority();
        if have >= target {
            block = Some(acc);
            break;
        }
        let per_s = have as f64 / acc.duration_s;
        let projected = if per_s > 0.0 { target as f64 / per_s } else { f64::INFINITY };
        if projected > opts.duration_cap_s {
            return Err(Error::PartialBlock {
                sifted: have,
                target,
                projected_s: projected,
                cap_s: opts.duration_cap_s,
                raw_rate_hz: acc.raw_rate_hz(),
                qber: acc.qber(Intensity::Signal).0,
            });
        }
        // aim slightly past the target so one more batch usually suffices
        let missing_s = (target - have) as f64 / per_s * 1.02;
        batch = ((missing_s / repeat_s).ceil() as u64).max(REPEATS_PER_CHUNK);
        block = Some(acc);
    }
    let block = block.expect("loop exits with a block");
    let protocol = pattern.effective_protocol(&op.config.protocol);
    let mut report = secure_key_length(&block.counts(), &protocol, fk);
    report.raw_rate_hz = block.raw_rate_hz();
    Ok(BlockRun {
        pattern_seed: pattern.seed,
        block,
        report,
    })
}

/// Pulse mix of a realized pattern, for conditioning the analytic model.
pub fn pattern_mix(pattern: &PulsePattern) -> PulseMix<f64> {
    PulseMix::from_counts(&pattern.counts())
}
