//! Closed-form model of the two-detector BB84 receiver.
//!
//! Each detector is a discrete renewal process: after an avalanche it is dead
//! for `D` gates, then fires on live gate `m` with hazard
//! `1 - (1 - p)(1 - h_m)`, where `p` is the mean primary (photon, dark,
//! crosstalk) click probability and `h_m` the afterpulse hazard of the trap
//! charge accumulated over earlier avalanches. The renewal gives the live
//! fraction, the mean afterpulse hazard on live gates and the throughput;
//! per-pulse click probabilities then follow with both detectors treated as
//! independently live.

use serde::{Deserialize, Serialize};

use crate::config::{Intensity, SystemConfig};
use crate::error::{Error, Result, ValidationReport};
use crate::scalar::{lit, Real};
use crate::spad::{async_fraction, sync_fraction};
use crate::units::db_to_transmittance;

/// Alice basis index: 0 = majority (key) basis, 1 = minority basis.
pub type Basis = usize;

/// Validated two-detector receiver with its channel and protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub config: SystemConfig,
}

impl OperatingPoint {
    pub fn new(config: SystemConfig) -> Result<Self> {
        let config = config.validate()?;
        let mut r = ValidationReport::default();
        let det = &config.detectors;
        if det.n_pixels != 2 {
            r.push(
                "detectors.n_pixels",
                format!("the receiver needs exactly 2 pixels (one per interferometer output), got {}", det.n_pixels),
            );
        } else {
            let rate = det.gate_rate_ghz();
            if (config.protocol.rep_rate_ghz - rate).abs() > 1e-12 * rate {
                r.push(
                    "protocol.rep_rate_ghz",
                    format!(
                        "must equal detectors gate rate ({rate} GHz), got {}",
                        config.protocol.rep_rate_ghz
                    ),
                );
            }
            let m = efficiency_mismatch(&det.pixels.iter().map(|p| p.spde).collect::<Vec<_>>());
            if m > config.receiver.efficiency_mismatch_max {
                r.push(
                    "detectors.pixels",
                    format!(
                        "efficiency mismatch {m:.4} exceeds receiver.efficiency_mismatch_max {}",
                        config.receiver.efficiency_mismatch_max
                    ),
                );
            }
        }
        r.into_result()?;
        Ok(Self { config })
    }

    /// Same point with the channel replaced by a plain attenuation.
    pub fn with_attenuation(&self, db: f64) -> Result<Self> {
        let mut c = self.config.clone();
        c.channel = crate::config::ChannelConfig {
            db_per_km: c.channel.db_per_km,
            ..crate::config::ChannelConfig::attenuation(db)
        };
        Self::new(c)
    }

    pub fn channel_loss_db(&self) -> f64 {
        self.config.channel.loss_db()
    }
}

/// `(max - min) / mean` of per-pixel efficiencies.
pub fn efficiency_mismatch(spde: &[f64]) -> f64 {
    if spde.is_empty() {
        return 0.0;
    }
    let max = spde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = spde.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = spde.iter().sum::<f64>() / spde.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        (max - min) / mean
    }
}

/// Channel and receiver transmittance, excluding detector efficiency.
pub fn transmittance<T: Real>(op: &OperatingPoint) -> Result<T> {
    let c = &op.config;
    db_to_transmittance(lit::<T>(op.channel_loss_db() + c.receiver.insertion_loss_db))
}

/// Mean detector SPDE times channel and receiver transmittance.
pub fn eta_system<T: Real>(op: &OperatingPoint) -> Result<T> {
    let px = &op.config.detectors.pixels;
    let spde = px.iter().map(|p| p.spde).sum::<f64>() / px.len() as f64;
    Ok(lit::<T>(spde) * transmittance::<T>(op)?)
}

/// Click probability per pulse of mean photon number `mu`:
/// `1 - (1 - p_noise) exp(-mu eta)`.
pub fn gain_with_noise<T: Real>(mu: T, eta_sys: T, p_noise: T) -> T {
    T::one() - (T::one() - p_noise) * (-mu * eta_sys).exp()
}

/// [`gain_with_noise`] with the dark and mean afterpulse click probabilities
/// of both detectors from the solved link.
pub fn gain<T: Real>(mu: T, op: &OperatingPoint) -> Result<T> {
    let sol = LinkModel::new(op).solve()?;
    let noise = sol.detectors.iter().fold(T::zero(), |a, d| a + d.dark + d.ap_hazard);
    Ok(gain_with_noise(mu, eta_system(op)?, noise))
}

/// Non-paralyzable dead-time saturation of `rate_in_hz` shared evenly by
/// `n_detectors`.
pub fn saturate<T: Real>(rate_in_hz: T, deadtime_ns: T, n_detectors: usize) -> T {
    let n = lit::<T>(n_detectors as f64);
    let r = rate_in_hz / n;
    let tau = deadtime_ns * lit(1e-9);
    n * r / (T::one() + r * tau)
}

/// Solved renewal state of one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorState<T> {
    /// Fraction of gates on which the detector is armed.
    pub live_fraction: T,
    /// Mean afterpulse hazard over live gates.
    pub ap_hazard: T,
    /// Mean firing probability over live gates.
    pub fire_given_live: T,
    /// Avalanches per gate.
    pub rate_per_gate: T,
    /// Mean primary click probability (photon or dark) per gate.
    pub primary: T,
    pub dark: T,
}

/// Effective crosstalk probabilities between the two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crosstalk<T> {
    /// Trigger probability in the aggressor's own gate, `[aggressor][victim]`.
    pub sync: [[T; 2]; 2],
    /// Trigger probability summed over later gates.
    #[serde(rename = "async")]
    pub async_: [[T; 2]; 2],
}

impl<T: Real> Crosstalk<T> {
    pub fn zero() -> Self {
        Self {
            sync: [[T::zero(); 2]; 2],
            async_: [[T::zero(); 2]; 2],
        }
    }

    /// Same probability in both directions.
    pub fn symmetric(sync: T, async_: T) -> Self {
        let z = T::zero();
        Self {
            sync: [[z, sync], [sync, z]],
            async_: [[z, async_], [async_, z]],
        }
    }
}

/// Probability weights of each emitted pulse type `[class][alice basis][bit]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseMix<T> {
    pub weights: [[[T; 2]; 2]; 3],
}

impl<T: Real> PulseMix<T> {
    /// Independent class, basis and uniform bit, as configured.
    pub fn from_protocol(p: &crate::config::ProtocolConfig) -> Self {
        let mut weights = [[[T::zero(); 2]; 2]; 3];
        for k in Intensity::ALL {
            for a in 0..2 {
                let pb = if a == 0 { p.basis_bias } else { 1.0 - p.basis_bias };
                for b in 0..2 {
                    weights[k.index()][a][b] = lit(p.prob(k) * pb * 0.5);
                }
            }
        }
        Self { weights }
    }

    /// Empirical frequencies of a concrete pattern, from per-type counts.
    pub fn from_counts(counts: &[[[u64; 2]; 2]; 3]) -> Self {
        let total: u64 = counts.iter().flatten().flatten().sum();
        let mut weights = [[[T::zero(); 2]; 2]; 3];
        for k in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    weights[k][a][b] = lit(counts[k][a][b] as f64 / total.max(1) as f64);
                }
            }
        }
        Self { weights }
    }

    pub fn class_weight(&self, k: usize) -> T {
        self.weights[k].iter().flatten().fold(T::zero(), |a, &b| a + b)
    }

    pub fn basis_weight(&self, k: usize, a: Basis) -> T {
        self.weights[k][a][0] + self.weights[k][a][1]
    }
}

/// Per-gate outcome probabilities of one pulse class in one (matched) basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    /// Any click, per pulse of this class and basis with Bob in the same basis.
    pub gain: T,
    /// Error probability per sifted bit.
    pub error: T,
}

/// Everything the analytic model predicts for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSolution<T> {
    pub eta_system: T,
    pub detectors: [DetectorState<T>; 2],
    pub crosstalk: Crosstalk<T>,
    /// `[class][alice basis]`, matched Bob basis.
    pub matched: [[Outcome<T>; 2]; 3],
    /// Click probability per emitted pulse of each class, any Bob basis.
    pub class_gain: [T; 3],
    /// Sifted bits per gate, `[class][basis]`.
    pub sifted_per_gate: [[T; 2]; 3],
    /// Sifted errors per gate, `[class][basis]`.
    pub errors_per_gate: [[T; 2]; 3],
    /// Avalanches per second over both detectors.
    pub raw_rate_hz: T,
    pub gate_rate_hz: T,
}

impl<T: Real> LinkSolution<T> {
    pub fn sifted_rate_hz(&self) -> T {
        self.sifted_per_gate
            .iter()
            .flatten()
            .fold(T::zero(), |a, &b| a + b)
            * self.gate_rate_hz
    }
}

/// QBER split into additive contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberContributions<T> {
    pub optical: T,
    pub dark: T,
    pub afterpulse: T,
    pub crosstalk: T,
}

impl<T: Real> QberContributions<T> {
    pub fn total(&self) -> T {
        self.optical + self.dark + self.afterpulse + self.crosstalk
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates<T> {
    pub class: Intensity,
    /// Click probability per emitted pulse.
    pub gain: T,
    /// Majority-basis error rate of sifted bits.
    pub error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown<T> {
    pub classes: Vec<ClassRates<T>>,
    pub raw_rate_hz: T,
    pub sifted_rate_hz: T,
    /// Signal-class majority-basis QBER.
    pub qber: T,
    pub contributions: QberContributions<T>,
}

#[derive(Debug, Clone, Copy)]
struct Noise {
    dark: bool,
    afterpulse: bool,
    crosstalk: bool,
}

const FULL: Noise = Noise {
    dark: true,
    afterpulse: true,
    crosstalk: true,
};

/// Configurable analytic link model.
#[derive(Debug, Clone)]
pub struct LinkModel<'a, T> {
    op: &'a OperatingPoint,
    mix: PulseMix<T>,
    crosstalk: Crosstalk<T>,
}

/// Per-detector renewal summary.
#[derive(Debug, Clone, Copy)]
struct Renewal<T> {
    expected_wait: T,
    ap_hazard: T,
    rho: T,
}

/// Renewal of a detector with primary click probability `p` per live gate and
/// afterpulse hazard `a q^m` on live gate `m`; `dead` gates follow each
/// avalanche.
fn renewal<T: Real>(p: T, a: T, q: T, dead: T) -> Renewal<T> {
    let one = T::one();
    let tiny = lit::<T>(1e-17);
    let mut s = one;
    let mut ew = T::zero();
    let mut hs = T::zero();
    let mut eq = T::zero();
    let mut h = a;
    // charge carried into the next cycle decays over dead time and wait
    let mut qm = q.powf(dead + one);
    let mut m = 0usize;
    while h > tiny && s > lit(1e-300) && m < 1_000_000 {
        let hh = h.min(one);
        let r = one - (one - p) * (one - hh);
        ew = ew + s;
        hs = hs + s * hh;
        eq = eq + s * r * qm;
        s = s * (one - r);
        h = h * q;
        qm = qm * q;
        m += 1;
    }
    if p > T::zero() {
        // remaining live gates have hazard ~ p: geometric tail
        let denom = one - q * (one - p);
        ew = ew + s / p;
        hs = hs + s * h / denom;
        eq = eq + s * qm * p / denom;
    } else if s > lit(1e-300) {
        ew = T::infinity();
    }
    Renewal {
        expected_wait: ew,
        ap_hazard: if ew.is_finite() { hs / ew } else { T::zero() },
        rho: eq,
    }
}

impl<'a, T: Real> LinkModel<'a, T> {
    pub fn new(op: &'a OperatingPoint) -> Self {
        let det = &op.config.detectors;
        let k_s: T = sync_fraction(lit(det.gate_width_ns()), lit(det.formation_tau_ns));
        let k_a: T = async_fraction(
            lit(det.gate_period_ns()),
            lit(det.gate_width_ns()),
            lit(det.formation_tau_ns),
        );
        let mut crosstalk = Crosstalk::zero();
        for a in 0..2 {
            for v in 0..2 {
                let s = lit::<T>(det.crosstalk(a, v));
                crosstalk.sync[a][v] = s * k_s;
                crosstalk.async_[a][v] = s * k_a;
            }
        }
        Self {
            op,
            mix: PulseMix::from_protocol(&op.config.protocol),
            crosstalk,
        }
    }

    /// Uses a specific pulse mix (e.g. the realized frequencies of a pattern).
    pub fn with_mix(mut self, mix: PulseMix<T>) -> Self {
        self.mix = mix;
        self
    }

    /// Overrides the effective crosstalk probabilities.
    pub fn with_crosstalk(mut self, crosstalk: Crosstalk<T>) -> Self {
        self.crosstalk = crosstalk;
        self
    }

    /// Photon click probability of detector `j` for pulse `(k, a, bit)` with
    /// Bob in basis `beta`.
    fn photon(&self, j: usize, k: usize, a: Basis, bit: usize, beta: Basis, t: T) -> T {
        let c = &self.op.config;
        let v = lit::<T>(c.receiver.visibility);
        let one = T::one();
        let half = lit::<T>(0.5);
        // cos of the phase difference: +-1 in the matched basis, 0 otherwise
        let cos = if a == beta {
            if bit == 0 {
                one
            } else {
                -one
            }
        } else {
            T::zero()
        };
        let share0 = half * (one + v * cos);
        let share = if j == 0 { share0 } else { one - share0 };
        let mu = lit::<T>(c.protocol.mus()[k]);
        let eta = lit::<T>(c.detectors.pixels[j].spde);
        -(-mu * t * eta * share).exp_m1()
    }

    fn bob_weight(&self, beta: Basis) -> T {
        let pb = self.op.config.protocol.basis_bias;
        lit(if beta == 0 { pb } else { 1.0 - pb })
    }

    pub fn solve(&self) -> Result<LinkSolution<T>> {
        let t = transmittance::<T>(self.op)?;
        let c = &self.op.config;
        let one = T::one();
        let px = &c.detectors.pixels;
        let dark: [T; 2] = [lit(px[0].dark_per_gate()), lit(px[1].dark_per_gate())];

        // mean primary click probability per detector
        let mut primary = [T::zero(); 2];
        for (j, pj) in primary.iter_mut().enumerate() {
            for k in 0..3 {
                for a in 0..2 {
                    for bit in 0..2 {
                        let w = self.mix.weights[k][a][bit];
                        for beta in 0..2 {
                            let ph = self.photon(j, k, a, bit, beta, t);
                            let p = one - (one - ph) * (one - dark[j]);
                            *pj = *pj + w * self.bob_weight(beta) * p;
                        }
                    }
                }
            }
        }

        let models: Vec<crate::spad::TrapModel> = px.iter().map(crate::spad::TrapModel::new).collect();
        let dead: [T; 2] = [lit(models[0].deadtime_gates as f64), lit(models[1].deadtime_gates as f64)];
        let q: [T; 2] = [lit(models[0].q()), lit(models[1].q())];
        let a0: [T; 2] = [lit(models[0].first_hazard), lit(models[1].first_hazard)];

        let mut live = [one; 2];
        let mut fire = primary;
        let mut rate = [T::zero(); 2];
        let mut hazard = [T::zero(); 2];
        let mut rho = [T::zero(); 2];
        let xs = self.crosstalk.sync;
        let xa = self.crosstalk.async_;
        for _ in 0..500 {
            let mut change = T::zero();
            for j in 0..2 {
                let o = 1 - j;
                let p = one
                    - (one - primary[j])
                        * (one - xs[o][j] * live[o] * fire[o])
                        * (one - xa[o][j] * rate[o]);
                let r = renewal(p, a0[j] / (one - rho[j]), q[j], dead[j]);
                let (l, f, rt) = if r.expected_wait.is_finite() {
                    let cyc = dead[j] + r.expected_wait;
                    (r.expected_wait / cyc, one / r.expected_wait, one / cyc)
                } else {
                    (one, T::zero(), T::zero())
                };
                change = change.max((rt - rate[j]).abs()).max((r.rho - rho[j]).abs());
                live[j] = l;
                fire[j] = f;
                rate[j] = rt;
                hazard[j] = r.ap_hazard;
                rho[j] = r.rho.min(lit(0.999_999));
            }
            if change < lit(1e-16) {
                break;
            }
        }
        if live.iter().chain(&rate).any(|x| !x.is_finite()) {
            return Err(Error::Model("link renewal did not converge".into()));
        }
        let detectors = [0, 1].map(|j| DetectorState {
            live_fraction: live[j],
            ap_hazard: hazard[j],
            fire_given_live: fire[j],
            rate_per_gate: rate[j],
            primary: primary[j],
            dark: dark[j],
        });

        let mut sol = LinkSolution {
            eta_system: eta_system(self.op)?,
            detectors,
            crosstalk: self.crosstalk,
            matched: [[Outcome { gain: T::zero(), error: T::zero() }; 2]; 3],
            class_gain: [T::zero(); 3],
            sifted_per_gate: [[T::zero(); 2]; 3],
            errors_per_gate: [[T::zero(); 2]; 3],
            raw_rate_hz: (rate[0] + rate[1]) * lit(c.detectors.gate_rate_ghz() * 1e9),
            gate_rate_hz: lit(c.detectors.gate_rate_ghz() * 1e9),
        };
        self.fill_outcomes(&mut sol, t, FULL);
        Ok(sol)
    }

    /// Per-class outcomes for the solved detector states with selected noise
    /// sources switched on.
    fn fill_outcomes(&self, sol: &mut LinkSolution<T>, t: T, noise: Noise) {
        let one = T::one();
        let half = lit::<T>(0.5);
        let d = &sol.detectors;
        let on = |b: bool, x: T| if b { x } else { T::zero() };
        let xs = self.crosstalk.sync;
        let xa = self.crosstalk.async_;
        let (l0, l1) = (d[0].live_fraction, d[1].live_fraction);
        for k in 0..3 {
            let mut class_clicks = T::zero();
            for a in 0..2 {
                let (mut sift, mut err) = (T::zero(), T::zero());
                for beta in 0..2 {
                    for bit in 0..2 {
                        let w = self.mix.weights[k][a][bit] * self.bob_weight(beta);
                        let pi = [0, 1].map(|j| {
                            let o = 1 - j;
                            let ph = self.photon(j, k, a, bit, beta, t);
                            one - (one - ph)
                                * (one - on(noise.dark, d[j].dark))
                                * (one - on(noise.afterpulse, d[j].ap_hazard))
                                * (one - on(noise.crosstalk, xa[o][j] * d[o].rate_per_gate))
                        });
                        let x01 = on(noise.crosstalk, xs[0][1]);
                        let x10 = on(noise.crosstalk, xs[1][0]);
                        // joint outcome with detector liveness independent
                        let both = pi[0] * pi[1] + pi[0] * (one - pi[1]) * x01 + pi[1] * (one - pi[0]) * x10;
                        let only0 = l0 * l1 * pi[0] * (one - pi[1]) * (one - x01) + l0 * (one - l1) * pi[0];
                        let only1 = l0 * l1 * pi[1] * (one - pi[0]) * (one - x10) + l1 * (one - l0) * pi[1];
                        let both = l0 * l1 * both;
                        let q = only0 + only1 + both;
                        class_clicks = class_clicks + w * q;
                        if a == beta {
                            let wrong = if bit == 0 { only1 } else { only0 };
                            sift = sift + w * q;
                            err = err + w * (wrong + half * both);
                        }
                    }
                }
                sol.sifted_per_gate[k][a] = sift;
                sol.errors_per_gate[k][a] = err;
                let matched_w = self.mix.basis_weight(k, a) * self.bob_weight(a);
                sol.matched[k][a] = Outcome {
                    gain: if matched_w > T::zero() { sift / matched_w } else { T::zero() },
                    error: if sift > T::zero() { err / sift } else { T::zero() },
                };
            }
            let cw = self.mix.class_weight(k);
            sol.class_gain[k] = if cw > T::zero() { class_clicks / cw } else { T::zero() };
        }
    }

    /// Rates, per-class gains and errors, and the QBER contributions.
    pub fn breakdown(&self) -> Result<RateBreakdown<T>> {
        let sol = self.solve()?;
        let t = transmittance::<T>(self.op)?;
        let e = |noise: Noise| {
            let mut s = sol.clone();
            self.fill_outcomes(&mut s, t, noise);
            s.matched[0][0].error
        };
        let e0 = e(Noise {
            dark: false,
            afterpulse: false,
            crosstalk: false,
        });
        let e1 = e(Noise {
            dark: true,
            afterpulse: false,
            crosstalk: false,
        });
        let e2 = e(Noise {
            dark: true,
            afterpulse: true,
            crosstalk: false,
        });
        let e3 = sol.matched[0][0].error;
        Ok(RateBreakdown {
            classes: Intensity::ALL
                .iter()
                .map(|&k| ClassRates {
                    class: k,
                    gain: sol.class_gain[k.index()],
                    error: sol.matched[k.index()][0].error,
                })
                .collect(),
            raw_rate_hz: sol.raw_rate_hz,
            sifted_rate_hz: sol.sifted_rate_hz(),
            qber: e3,
            contributions: QberContributions {
                optical: e0,
                dark: e1 - e0,
                afterpulse: e2 - e1,
                crosstalk: e3 - e2,
            },
        })
    }
}

/// Rates and QBER decomposition of an operating point.
pub fn qber<T: Real>(op: &OperatingPoint) -> Result<RateBreakdown<T>> {
    LinkModel::new(op).breakdown()
}

/// Sifted counts and errors of one post-processing block, `[class]` indexed
/// by [`Intensity::index`]. Real-valued for expectations, integral for
/// simulated blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockCounts<T> {
    /// Majority-basis sifted bits.
    pub n_x: [T; 3],
    pub m_x: [T; 3],
    /// Minority-basis sifted bits.
    pub n_z: [T; 3],
    pub m_z: [T; 3],
    pub duration_s: T,
}

impl<T: Real> BlockCounts<T> {
    pub fn zero() -> Self {
        let z = [T::zero(); 3];
        Self {
            n_x: z,
            m_x: z,
            n_z: z,
            m_z: z,
            duration_s: T::zero(),
        }
    }

    pub fn total_x(&self) -> T {
        self.n_x.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn total(&self) -> T {
        self.n_x.iter().chain(&self.n_z).fold(T::zero(), |a, &b| a + b)
    }

    /// Signal-class majority-basis error rate.
    pub fn qber_signal(&self) -> T {
        let n = self.n_x[0];
        if n > T::zero() {
            self.m_x[0] / n
        } else {
            T::zero()
        }
    }

    /// Expected counts from a solved link over `duration_s` seconds.
    pub fn expected(sol: &LinkSolution<T>, duration_s: T) -> Self {
        let gates = duration_s * sol.gate_rate_hz;
        let col = |src: &[[T; 2]; 3], b: usize| [0, 1, 2].map(|k| src[k][b] * gates);
        Self {
            n_x: col(&sol.sifted_per_gate, 0),
            m_x: col(&sol.errors_per_gate, 0),
            n_z: col(&sol.sifted_per_gate, 1),
            m_z: col(&sol.errors_per_gate, 1),
            duration_s,
        }
    }
}

/// Expected block counts for `duration_s` seconds of operation.
pub fn expected_block_counts<T: Real>(op: &OperatingPoint, duration_s: T) -> Result<BlockCounts<T>> {
    if duration_s < T::zero() {
        return Err(Error::Domain {
            what: "duration_s",
            value: crate::scalar::to_f64(duration_s),
            domain: "[0, inf)",
        });
    }
    let sol = LinkModel::new(op).solve()?;
    Ok(BlockCounts::expected(&sol, duration_s))
}
