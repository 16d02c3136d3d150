//! Declarative system description, validation and shipped presets.
//!
//! Every struct deserializes from JSON with all fields optional; missing
//! fields take the defaults documented on each field, which reproduce the
//! `cold` receiver (-30 C detectors). [`SystemConfig::validate`] checks every
//! invariant and reports all violations at once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};

/// One SPAD pixel under gated operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Single-photon detection efficiency at the gate peak.
    pub spde: f64,
    /// Dark count rate in Hz (gated, per pixel).
    pub dcr_hz: f64,
    /// Afterpulse probability per avalanche, integrated from the end of the dead time.
    pub afterpulse_total: f64,
    pub deadtime_ns: f64,
    /// Gates per nanosecond (1.0 = 1 GHz).
    pub gate_rate_ghz: f64,
    pub gate_width_ps: f64,
    /// Detrapping time constant of the afterpulse hazard.
    pub trap_tau_ns: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            spde: 0.15,
            dcr_hz: 1930.0,
            afterpulse_total: 0.0223,
            deadtime_ns: 100.0,
            gate_rate_ghz: 1.0,
            gate_width_ps: 400.0,
            trap_tau_ns: 20.0,
        }
    }
}

impl DetectorConfig {
    pub fn gate_period_ns(&self) -> f64 {
        1.0 / self.gate_rate_ghz
    }

    pub fn gate_width_ns(&self) -> f64 {
        self.gate_width_ps * 1e-3
    }

    /// Dead time expressed in whole gates (rounded to nearest).
    pub fn deadtime_gates(&self) -> u64 {
        (self.deadtime_ns * self.gate_rate_ghz).round().max(0.0) as u64
    }

    /// Dark count probability per gate.
    pub fn dark_per_gate(&self) -> f64 {
        crate::units::per_gate_probability(self.dcr_hz, self.gate_rate_ghz)
    }

    fn check(&self, path: &str, r: &mut ValidationReport) {
        let p = |f: &str| format!("{path}.{f}");
        if !(0.0..=1.0).contains(&self.spde) {
            r.push(p("spde"), format!("must lie in [0, 1], got {}", self.spde));
        }
        if !(self.dcr_hz >= 0.0 && self.dcr_hz.is_finite()) {
            r.push(p("dcr_hz"), format!("must be finite and >= 0, got {}", self.dcr_hz));
        }
        if !(self.afterpulse_total >= 0.0 && self.afterpulse_total < 1.0) {
            r.push(
                p("afterpulse_total"),
                format!("must lie in [0, 1), got {}", self.afterpulse_total),
            );
        }
        if !(self.deadtime_ns >= 0.0 && self.deadtime_ns.is_finite()) {
            r.push(p("deadtime_ns"), format!("must be finite and >= 0, got {}", self.deadtime_ns));
        }
        if !(self.gate_rate_ghz > 0.0 && self.gate_rate_ghz.is_finite()) {
            r.push(p("gate_rate_ghz"), format!("must be > 0, got {}", self.gate_rate_ghz));
        } else if !(self.gate_width_ps > 0.0 && self.gate_width_ns() <= self.gate_period_ns() * (1.0 + 1e-12)) {
            r.push(
                p("gate_width_ps"),
                format!(
                    "must lie in (0, {}] (the gate period), got {}",
                    self.gate_period_ns() * 1e3,
                    self.gate_width_ps
                ),
            );
        }
        if !(self.trap_tau_ns > 0.0 && self.trap_tau_ns.is_finite()) {
            r.push(p("trap_tau_ns"), format!("must be > 0, got {}", self.trap_tau_ns));
        }
    }
}

/// A collectively gated linear array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_pixels: usize,
    pub pixels: Vec<DetectorConfig>,
    /// `crosstalk_intrinsic[a][v]`: probability that an avalanche in `a`
    /// triggers `v` if the stimulus lands inside an active gate of a live `v`.
    pub crosstalk_intrinsic: Vec<Vec<f64>>,
    /// Mean of the exponential crosstalk formation delay.
    pub formation_tau_ns: f64,
    /// A detection blanks every pixel, not only the one that fired.
    pub universal_deadtime: bool,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Preset::Cold.array()
    }
}

impl ArrayConfig {
    /// Uniform array with nearest-neighbour style coupling given per pixel distance.
    pub fn uniform(pixel: DetectorConfig, n: usize, crosstalk_by_distance: &[f64]) -> Self {
        let crosstalk_intrinsic = (0..n)
            .map(|a| {
                (0..n)
                    .map(|v| {
                        let d = a.abs_diff(v);
                        if d == 0 {
                            0.0
                        } else {
                            crosstalk_by_distance.get(d - 1).copied().unwrap_or(0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            n_pixels: n,
            pixels: vec![pixel; n],
            crosstalk_intrinsic,
            formation_tau_ns: 2.5,
            universal_deadtime: false,
        }
    }

    pub fn gate_period_ns(&self) -> f64 {
        self.pixels[0].gate_period_ns()
    }

    pub fn gate_width_ns(&self) -> f64 {
        self.pixels[0].gate_width_ns()
    }

    pub fn gate_rate_ghz(&self) -> f64 {
        self.pixels[0].gate_rate_ghz
    }

    pub fn crosstalk(&self, aggressor: usize, victim: usize) -> f64 {
        self.crosstalk_intrinsic[aggressor][victim]
    }

    /// Sets every off-diagonal coupling to `s`.
    pub fn with_uniform_crosstalk(mut self, s: f64) -> Self {
        for (a, row) in self.crosstalk_intrinsic.iter_mut().enumerate() {
            for (v, x) in row.iter_mut().enumerate() {
                *x = if a == v { 0.0 } else { s };
            }
        }
        self
    }

    /// Applies `f` to every pixel.
    pub fn map_pixels(mut self, f: impl Fn(&mut DetectorConfig)) -> Self {
        self.pixels.iter_mut().for_each(f);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut r = ValidationReport::default();
        self.check("detectors", &mut r);
        r.into_result()
    }

    fn check(&self, path: &str, r: &mut ValidationReport) {
        if self.n_pixels < 1 {
            r.push(format!("{path}.n_pixels"), "must be >= 1");
        }
        if self.pixels.len() != self.n_pixels {
            r.push(
                format!("{path}.pixels"),
                format!("has {} entries but n_pixels = {}", self.pixels.len(), self.n_pixels),
            );
        }
        for (i, px) in self.pixels.iter().enumerate() {
            px.check(&format!("{path}.pixels[{i}]"), r);
        }
        if let Some(first) = self.pixels.first() {
            for (i, px) in self.pixels.iter().enumerate().skip(1) {
                if px.gate_rate_ghz != first.gate_rate_ghz || px.gate_width_ps != first.gate_width_ps {
                    r.push(
                        format!("{path}.pixels[{i}]"),
                        "gate_rate_ghz and gate_width_ps must match pixels[0] (shared gate drive)",
                    );
                }
            }
        }
        let m = &self.crosstalk_intrinsic;
        if m.len() != self.n_pixels || m.iter().any(|row| row.len() != self.n_pixels) {
            r.push(
                format!("{path}.crosstalk_intrinsic"),
                format!("must be a {0}x{0} matrix", self.n_pixels),
            );
        } else {
            for (a, row) in m.iter().enumerate() {
                for (v, &x) in row.iter().enumerate() {
                    let here = format!("{path}.crosstalk_intrinsic[{a}][{v}]");
                    if a == v && x != 0.0 {
                        r.push(here, "diagonal entries must be 0");
                    } else if !(0.0..1.0).contains(&x) {
                        r.push(here, format!("must lie in [0, 1), got {x}"));
                    }
                }
            }
        }
        if !(self.formation_tau_ns > 0.0 && self.formation_tau_ns.is_finite()) {
            r.push(
                format!("{path}.formation_tau_ns"),
                format!("must be > 0, got {}", self.formation_tau_ns),
            );
        }
    }
}

/// Quantum channel: either a plain attenuation or a fibre length. A
/// document that gives neither gets a 0 dB attenuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default = "ChannelConfig::unset", deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fibre_km: Option<f64>,
    /// Fibre loss coefficient; also used for equivalent-distance columns.
    pub db_per_km: f64,
    /// Measured loss of a real spool, replacing `fibre_km * db_per_km`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_override_db: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::attenuation(0.0)
    }
}

impl ChannelConfig {
    fn unset() -> Self {
        Self {
            attenuation_db: None,
            ..Self::attenuation(0.0)
        }
    }

    pub fn attenuation(db: f64) -> Self {
        Self {
            attenuation_db: Some(db),
            fibre_km: None,
            db_per_km: 0.18,
            loss_override_db: None,
        }
    }

    pub fn fibre(km: f64) -> Self {
        Self {
            attenuation_db: None,
            fibre_km: Some(km),
            db_per_km: 0.18,
            loss_override_db: None,
        }
    }

    /// Channel loss in dB.
    pub fn loss_db(&self) -> f64 {
        match (self.attenuation_db, self.fibre_km, self.loss_override_db) {
            (Some(db), _, _) => db,
            (None, Some(_), Some(over)) => over,
            (None, Some(km), None) => km * self.db_per_km,
            (None, None, _) => 0.0,
        }
    }

    fn check(&self, path: &str, r: &mut ValidationReport) {
        match (self.attenuation_db, self.fibre_km) {
            (Some(_), Some(_)) => r.push(
                path,
                "exactly one of attenuation_db and fibre_km may be given, found both",
            ),
            (None, None) => r.push(path, "one of attenuation_db or fibre_km is required"),
            _ => {}
        }
        for (name, v) in [
            ("attenuation_db", self.attenuation_db),
            ("fibre_km", self.fibre_km),
            ("loss_override_db", self.loss_override_db),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    r.push(format!("{path}.{name}"), format!("must be finite and >= 0, got {v}"));
                }
            }
        }
        if self.loss_override_db.is_some() && self.fibre_km.is_none() {
            r.push(
                format!("{path}.loss_override_db"),
                "only meaningful together with fibre_km",
            );
        }
        if !(self.db_per_km > 0.0 && self.db_per_km.is_finite()) {
            r.push(format!("{path}.db_per_km"), format!("must be > 0, got {}", self.db_per_km));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Waveguide chip plus phase modulator.
    pub insertion_loss_db: f64,
    /// Interference visibility of the AMZI; optical error floor is (1 - V) / 2.
    pub visibility: f64,
    /// Largest accepted (max - min) / mean spread of detector efficiencies.
    pub efficiency_mismatch_max: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            insertion_loss_db: 4.2,
            visibility: 0.96,
            efficiency_mismatch_max: 0.01,
        }
    }
}

impl ReceiverConfig {
    pub fn optical_error(&self) -> f64 {
        (1.0 - self.visibility) / 2.0
    }

    fn check(&self, path: &str, r: &mut ValidationReport) {
        if !(self.insertion_loss_db >= 0.0 && self.insertion_loss_db.is_finite()) {
            r.push(
                format!("{path}.insertion_loss_db"),
                format!("must be finite and >= 0, got {}", self.insertion_loss_db),
            );
        }
        if !(self.visibility > 0.5 && self.visibility <= 1.0) {
            r.push(
                format!("{path}.visibility"),
                format!("must lie in (0.5, 1], got {}", self.visibility),
            );
        }
        if !(0.0..1.0).contains(&self.efficiency_mismatch_max) {
            r.push(
                format!("{path}.efficiency_mismatch_max"),
                format!("must lie in [0, 1), got {}", self.efficiency_mismatch_max),
            );
        }
    }
}

/// Intensity classes of the three-level decoy scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Signal,
    Decoy,
    Vacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Signal, Intensity::Decoy, Intensity::Vacuum];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Intensity::Signal => "signal",
            Intensity::Decoy => "decoy",
            Intensity::Vacuum => "vacuum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Pulse rate in GHz; must equal the detector gate rate.
    pub rep_rate_ghz: f64,
    pub mu_signal: f64,
    pub mu_decoy: f64,
    /// Weakest state; 1% of the signal flux, not a true vacuum.
    pub mu_vacuum: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    /// Probability of the majority (key) basis, used by both parties.
    pub basis_bias: f64,
    pub pattern_length: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            rep_rate_ghz: 1.0,
            mu_signal: 0.4,
            mu_decoy: 0.1,
            mu_vacuum: 0.004,
            p_signal: 14.0 / 16.0,
            p_decoy: 1.0 / 16.0,
            p_vacuum: 1.0 / 16.0,
            basis_bias: 0.9375,
            pattern_length: 4096,
        }
    }
}

impl ProtocolConfig {
    pub fn mu(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.mu_signal,
            Intensity::Decoy => self.mu_decoy,
            Intensity::Vacuum => self.mu_vacuum,
        }
    }

    pub fn prob(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.p_signal,
            Intensity::Decoy => self.p_decoy,
            Intensity::Vacuum => self.p_vacuum,
        }
    }

    pub fn mus(&self) -> [f64; 3] {
        [self.mu_signal, self.mu_decoy, self.mu_vacuum]
    }

    pub fn probs(&self) -> [f64; 3] {
        [self.p_signal, self.p_decoy, self.p_vacuum]
    }

    /// Probability that both parties pick the same basis.
    pub fn sifting_factor(&self) -> f64 {
        let p = self.basis_bias;
        p * p + (1.0 - p) * (1.0 - p)
    }

    pub(crate) fn check(&self, path: &str, r: &mut ValidationReport) {
        let p = |f: &str| format!("{path}.{f}");
        if !(self.rep_rate_ghz > 0.0 && self.rep_rate_ghz.is_finite()) {
            r.push(p("rep_rate_ghz"), format!("must be > 0, got {}", self.rep_rate_ghz));
        }
        if !(self.mu_vacuum >= 0.0) {
            r.push(p("mu_vacuum"), format!("must be >= 0, got {}", self.mu_vacuum));
        }
        if !(self.mu_decoy > self.mu_vacuum) {
            r.push(
                p("mu_decoy"),
                format!(
                    "{path}.mu_decoy ({}) must exceed {path}.mu_vacuum ({})",
                    self.mu_decoy, self.mu_vacuum
                ),
            );
        }
        if !(self.mu_signal > self.mu_decoy) {
            r.push(
                p("mu_decoy"),
                format!(
                    "{path}.mu_signal ({}) must exceed {path}.mu_decoy ({})",
                    self.mu_signal, self.mu_decoy
                ),
            );
        }
        if !(self.mu_signal.is_finite()) {
            r.push(p("mu_signal"), "must be finite");
        }
        let probs = [
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
        ];
        for (name, v) in probs {
            if !(v > 0.0 && v <= 1.0) {
                r.push(p(name), format!("must lie in (0, 1], got {v}"));
            }
        }
        let sum: f64 = probs.iter().map(|(_, v)| v).sum();
        if (sum - 1.0).abs() > 1e-9 {
            r.push(
                format!("{path}.p_*"),
                format!("p_signal + p_decoy + p_vacuum must equal 1, got {sum}"),
            );
        }
        if !(self.basis_bias >= 0.5 && self.basis_bias <= 1.0) {
            r.push(p("basis_bias"), format!("must lie in [0.5, 1], got {}", self.basis_bias));
        }
        if self.pattern_length < 1 {
            r.push(p("pattern_length"), "must be >= 1");
        }
    }
}

/// Concentration inequality used to turn observed counts into
/// confidence intervals for the decoy-state bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concentration {
    /// Per-class multiplicative deviation `sqrt(2 n ln(19/eps))`.
    #[default]
    Chernoff,
    /// Deviation `sqrt(N/2 ln(19/eps))` on the total basis count for every class.
    Hoeffding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteKeyConfig {
    /// Majority-basis sifted bits per post-processing block.
    pub block_bits: u64,
    pub eps_sec: f64,
    /// Error-correction efficiency (leakage = f_ec * n * h(E)).
    pub f_ec: f64,
    pub concentration: Concentration,
}

impl Default for FiniteKeyConfig {
    fn default() -> Self {
        Self {
            block_bits: 5_000_000,
            eps_sec: 1e-10,
            f_ec: 1.15,
            concentration: Concentration::Chernoff,
        }
    }
}

impl FiniteKeyConfig {
    /// Correctness parameter; tied to the secrecy parameter.
    pub fn eps_cor(&self) -> f64 {
        self.eps_sec
    }

    fn check(&self, path: &str, r: &mut ValidationReport) {
        if self.block_bits == 0 {
            r.push(format!("{path}.block_bits"), "must be > 0");
        }
        if !(self.eps_sec > 0.0 && self.eps_sec < 1.0) {
            r.push(format!("{path}.eps_sec"), format!("must lie in (0, 1), got {}", self.eps_sec));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            r.push(format!("{path}.f_ec"), format!("must be >= 1, got {}", self.f_ec));
        }
    }
}

/// Illumination used by the characterization command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizationConfig {
    /// One gate in `period_gates` carries a laser pulse.
    pub period_gates: u64,
    /// Mean photons per laser pulse at the detector aperture.
    pub mean_photons: f64,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        Self {
            period_gates: 64,
            mean_photons: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub detectors: ArrayConfig,
    pub channel: ChannelConfig,
    pub receiver: ReceiverConfig,
    pub protocol: ProtocolConfig,
    pub finite_key: FiniteKeyConfig,
    pub characterization: CharacterizationConfig,
}

impl SystemConfig {
    /// Checks every invariant, returning the config unchanged or the full
    /// list of violations.
    pub fn validate(mut self) -> Result<Self> {
        if self.channel.attenuation_db.is_none() && self.channel.fibre_km.is_none() {
            self.channel.attenuation_db = Some(0.0);
        }
        let mut r = ValidationReport::default();
        self.detectors.check("detectors", &mut r);
        self.channel.check("channel", &mut r);
        self.receiver.check("receiver", &mut r);
        self.protocol.check("protocol", &mut r);
        self.finite_key.check("finite_key", &mut r);
        if self.characterization.period_gates < 1 {
            r.push("characterization.period_gates", "must be >= 1");
        }
        if !(self.characterization.mean_photons >= 0.0 && self.characterization.mean_photons.is_finite()) {
            r.push("characterization.mean_photons", "must be finite and >= 0");
        }
        r.into_result().map(|_| self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        cfg.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        name.parse::<Preset>().map(Preset::system)
    }
}

/// Shipped operating points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two-pixel receiver at -30 C.
    Cold,
    /// Two-pixel receiver at room temperature.
    Room,
    /// Four-pixel array under the characterization protocol.
    Array4,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(Preset::Cold),
            "room" => Ok(Preset::Room),
            "array4" => Ok(Preset::Array4),
            other => {
                let mut r = ValidationReport::default();
                r.push("preset", format!("unknown preset {other:?}; expected cold, room or array4"));
                Err(Error::Validation(r))
            }
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Cold => "cold",
            Preset::Room => "room",
            Preset::Array4 => "array4",
        }
    }

    pub fn array(self) -> ArrayConfig {
        match self {
            // combined DCR 3.86 kHz over two pixels
            Preset::Cold => ArrayConfig::uniform(DetectorConfig::default(), 2, &[1e-3]),
            // combined DCR 130 kHz over two pixels
            Preset::Room => ArrayConfig::uniform(
                DetectorConfig {
                    spde: 0.19,
                    dcr_hz: 65_000.0,
                    afterpulse_total: 0.0147,
                    ..DetectorConfig::default()
                },
                2,
                &[1e-3],
            ),
            Preset::Array4 => {
                let mut a = ArrayConfig::uniform(DetectorConfig::default(), 4, &[1e-3, 3e-4, 1e-4]);
                let dcr = [4100.0, 5600.0, 3200.0, 6800.0];
                let apr = [0.031, 0.027, 0.035, 0.029];
                for (i, px) in a.pixels.iter_mut().enumerate() {
                    px.dcr_hz = dcr[i];
                    px.afterpulse_total = apr[i];
                }
                a
            }
        }
    }

    pub fn system(self) -> SystemConfig {
        SystemConfig {
            detectors: self.array(),
            ..SystemConfig::default()
        }
    }
}
