//! Decoy-state finite-key secure key length.
//!
//! Vacuum and single-photon events in the majority basis are lower-bounded
//! with the vacuum + weak-decoy closed forms, each class count widened by a
//! concentration deviation at confidence `eps_sec / 19`. The single-photon
//! phase error comes from signal-class errors in the minority basis, with a
//! random-sampling correction when the block is finite.

use serde::{Deserialize, Serialize};

use crate::config::{Concentration, FiniteKeyConfig, ProtocolConfig};
use crate::error::{Error, Result};
use crate::link::{BlockCounts, LinkModel, LinkSolution, OperatingPoint};
use crate::scalar::{lit, Real};

/// Decoy-state estimates for one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds<T> {
    /// Vacuum events among signal-class majority-basis sifted bits.
    pub s0: T,
    /// Single-photon events among signal-class majority-basis sifted bits.
    pub s1: T,
    /// Upper bound on the single-photon phase error rate.
    pub phi1: T,
    /// Point estimate of the phase error before the sampling correction.
    pub phase_error: T,
    /// Sampling correction added to `phase_error`.
    pub phase_deviation: T,
    /// Vacuum bound summed over all classes.
    pub s0_all_classes: T,
    /// Single-photon bound summed over all classes.
    pub s1_all_classes: T,
    /// Single-photon bound in the minority basis, all classes.
    pub s1_minority: T,
    /// True when the single-photon bound came out negative.
    pub crossover: bool,
}

/// A method for bounding single-photon contributions from decoy counts.
pub trait DecoyAnalysis<T: Real> {
    /// `finite = false` drops every statistical correction.
    fn bounds(&self, counts: &BlockCounts<T>, protocol: &ProtocolConfig, fk: &FiniteKeyConfig, finite: bool)
        -> DecoyBounds<T>;
}

/// Three-intensity vacuum + weak-decoy closed-form bounds.
#[derive(Debug, Clone, Copy, Default)]
pub struct VacuumWeakDecoy;

fn deviation<T: Real>(x: T, total: T, ln_e: T, conc: Concentration) -> T {
    match conc {
        Concentration::Chernoff => (lit::<T>(2.0) * x.max(T::zero()) * ln_e).sqrt(),
        Concentration::Hoeffding => (total.max(T::zero()) / lit(2.0) * ln_e).sqrt(),
    }
}

impl<T: Real> DecoyAnalysis<T> for VacuumWeakDecoy {
    fn bounds(&self, c: &BlockCounts<T>, p: &ProtocolConfig, fk: &FiniteKeyConfig, finite: bool) -> DecoyBounds<T> {
        let zero = T::zero();
        let mu: [T; 3] = p.mus().map(lit);
        let pk: [T; 3] = p.probs().map(lit);
        let ln_e = lit::<T>((19.0 / fk.eps_sec).ln());
        let dev = |x: T, total: T| if finite { deviation(x, total, ln_e, fk.concentration) } else { zero };

        let tau0 = (0..3).fold(zero, |a, k| a + pk[k] * (-mu[k]).exp());
        let tau1 = (0..3).fold(zero, |a, k| a + pk[k] * (-mu[k]).exp() * mu[k]);
        let total_x = c.total_x();
        let scaled = |k: usize, x: T| mu[k].exp() / pk[k] * x;
        let hi = |k: usize| scaled(k, c.n_x[k] + dev(c.n_x[k], total_x));
        let lo = |k: usize| scaled(k, c.n_x[k] - dev(c.n_x[k], total_x));
        let (m1, m2, m3) = (mu[0], mu[1], mu[2]);

        let s0_all = (tau0 * (m2 * lo(2) - m3 * hi(1)) / (m2 - m3)).max(zero);
        let s1_all = tau1 * m1 * (lo(1) - hi(2) - (m2 * m2 - m3 * m3) / (m1 * m1) * (hi(0) - s0_all / tau0))
            / (m1 * (m2 - m3) - m2 * m2 + m3 * m3);
        let crossover = s1_all < zero || !s1_all.is_finite();
        let s1_all = if crossover { zero } else { s1_all };

        let pb = lit::<T>(p.basis_bias);
        let qx = pb * pb;
        let qz = (T::one() - pb) * (T::one() - pb);
        let s1_z = s1_all * qz / qx;
        let s0_z = s0_all * qz / qx;

        let sig1 = pk[0] * (-m1).exp() * m1 / tau1;
        let s1 = s1_all * sig1;
        let s0 = s0_all * pk[0] * (-m1).exp() / tau0;
        let c_z = s1_z * sig1;

        let half = lit::<T>(0.5);
        let (b, g) = if s1_z > zero {
            let mz = c.m_z[0];
            let total_mz = c.m_z.iter().fold(zero, |a, &b| a + b);
            let mz_hi = mz + dev(mz, total_mz);
            let v1 = m1.exp() * mz_hi / (pk[0] * m1) - s0_z / (lit::<T>(2.0) * tau0 * m1);
            let b = (v1 / (s1_z / tau1)).max(zero).min(half);
            let g = if finite && b > zero && b < half && c_z > zero && s1 > zero {
                let cd = c_z * s1;
                let w = b * (T::one() - b);
                let eps2 = lit::<T>((19.0 / fk.eps_sec).powi(2));
                ((c_z + s1) * w / (cd * lit::<T>(std::f64::consts::LN_2)) * ((c_z + s1) / (cd * w) * eps2).log2()).sqrt()
            } else {
                zero
            };
            (b, g)
        } else {
            (half, zero)
        };
        DecoyBounds {
            s0,
            s1,
            phi1: (b + g).min(half),
            phase_error: b,
            phase_deviation: g,
            s0_all_classes: s0_all,
            s1_all_classes: s1_all,
            s1_minority: s1_z,
            crossover,
        }
    }
}

/// Binary entropy with `h(p) = 0` outside the open unit interval.
fn h<T: Real>(p: T) -> T {
    let one = T::one();
    if p <= T::zero() || p >= one {
        T::zero()
    } else {
        -p * p.log2() - (one - p) * (one - p).log2()
    }
}

/// Secure key length and every intermediate for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport<T> {
    pub secure_bits: T,
    pub secure_rate_hz: T,
    pub qber_majority: T,
    /// Detector avalanches per second, when known.
    pub raw_rate_hz: T,
    pub sifted_bits: T,
    pub block_duration_s: T,
    pub n_signal: T,
    pub s0: T,
    pub s1: T,
    pub phi1: T,
    pub phase_error: T,
    pub phase_deviation: T,
    pub s0_all_classes: T,
    pub s1_all_classes: T,
    pub s1_minority: T,
    pub lambda_ec: T,
    /// `6 log2(19/eps_sec) + log2(2/eps_cor)`; zero in the asymptotic limit.
    pub penalty: T,
    pub finite: bool,
    pub diagnostic: Option<String>,
}

/// Key length from `counts` with an arbitrary decoy analysis.
pub fn key_length_with<T: Real, A: DecoyAnalysis<T>>(
    analysis: &A,
    counts: &BlockCounts<T>,
    protocol: &ProtocolConfig,
    fk: &FiniteKeyConfig,
    finite: bool,
) -> KeyRateReport<T> {
    let zero = T::zero();
    let b = analysis.bounds(counts, protocol, fk, finite);
    let n_sig = counts.n_x[0];
    let e_sig = counts.qber_signal();
    let lambda_ec = lit::<T>(fk.f_ec) * n_sig * h(e_sig);
    let penalty = if finite {
        lit::<T>(6.0 * (19.0 / fk.eps_sec).log2() + (2.0 / fk.eps_cor()).log2())
    } else {
        zero
    };
    let raw = b.s0 + b.s1 * (T::one() - h(b.phi1)) - lambda_ec - penalty;
    let secure_bits = if b.crossover { zero } else { raw.max(zero) };
    let rate = if counts.duration_s > zero { secure_bits / counts.duration_s } else { zero };
    let diagnostic = if b.crossover {
        Some("single-photon bound crossed below zero; no key".to_string())
    } else if n_sig == zero {
        Some("no signal-class sifted bits".to_string())
    } else {
        None
    };
    KeyRateReport {
        secure_bits,
        secure_rate_hz: rate,
        qber_majority: e_sig,
        raw_rate_hz: zero,
        sifted_bits: counts.total(),
        block_duration_s: counts.duration_s,
        n_signal: n_sig,
        s0: b.s0,
        s1: b.s1,
        phi1: b.phi1,
        phase_error: b.phase_error,
        phase_deviation: b.phase_deviation,
        s0_all_classes: b.s0_all_classes,
        s1_all_classes: b.s1_all_classes,
        s1_minority: b.s1_minority,
        lambda_ec,
        penalty,
        finite,
        diagnostic,
    }
}

/// Finite-block decoy bounds with [`VacuumWeakDecoy`].
pub fn decoy_bounds<T: Real>(counts: &BlockCounts<T>, protocol: &ProtocolConfig, fk: &FiniteKeyConfig) -> DecoyBounds<T> {
    VacuumWeakDecoy.bounds(counts, protocol, fk, true)
}

/// `l = s0 + s1 (1 - h(phi1)) - f_ec n_sig h(E_sig) - penalty`, clamped at 0.
pub fn secure_key_length<T: Real>(counts: &BlockCounts<T>, protocol: &ProtocolConfig, fk: &FiniteKeyConfig) -> KeyRateReport<T> {
    key_length_with(&VacuumWeakDecoy, counts, protocol, fk, true)
}

/// Expected-value block holding `block_bits` majority-basis sifted bits.
pub fn expected_block<T: Real>(sol: &LinkSolution<T>, block_bits: u64) -> BlockCounts<T> {
    let per_gate = (0..3).fold(T::zero(), |a, k| a + sol.sifted_per_gate[k][0]);
    if per_gate <= T::zero() {
        return BlockCounts::zero();
    }
    let duration = lit::<T>(block_bits as f64) / (per_gate * sol.gate_rate_hz);
    BlockCounts::expected(sol, duration)
}

/// Finite-key report from the analytic link model.
pub fn finite_key_report<T: Real>(op: &OperatingPoint, fk: &FiniteKeyConfig) -> Result<KeyRateReport<T>> {
    if fk.block_bits == 0 {
        return Err(Error::Domain {
            what: "finite_key.block_bits",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    let sol = LinkModel::new(op).solve()?;
    let counts = expected_block(&sol, fk.block_bits);
    let mut r = secure_key_length(&counts, &op.config.protocol, fk);
    r.raw_rate_hz = sol.raw_rate_hz;
    Ok(r)
}

/// Infinite-key report: expected values, no statistical corrections.
pub fn asymptotic_report<T: Real>(op: &OperatingPoint) -> Result<KeyRateReport<T>> {
    let sol = LinkModel::new(op).solve()?;
    let counts = BlockCounts::expected(&sol, T::one());
    let mut r = key_length_with(&VacuumWeakDecoy, &counts, &op.config.protocol, &op.config.finite_key, false);
    r.raw_rate_hz = sol.raw_rate_hz;
    Ok(r)
}

/// Infinite-key secure rate in Hz.
pub fn asymptotic_key_rate<T: Real>(op: &OperatingPoint) -> Result<T> {
    Ok(asymptotic_report(op)?.secure_rate_hz)
}
