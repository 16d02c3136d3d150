use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use qkdsim::characterize::{characterize as run_characterization, coupling_loss};
use qkdsim::config::{ChannelConfig, Intensity, SystemConfig};
use qkdsim::keyrate::{finite_key_report, KeyRateReport};
use qkdsim::link::{qber, OperatingPoint, RateBreakdown};
use qkdsim::protocol::{run_to_block_size_with, BlockRunOptions, SiftedBlock};
use qkdsim::{equivalent_km, RngSpec};

use crate::{Common, Mode};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_MODEL: u8 = 4;

/// Bad command-line usage; exits with the validation code.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(c: &Common, default_preset: &str) -> anyhow::Result<SystemConfig> {
    match (&c.config, &c.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(SystemConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?)
        }
        (None, Some(name)) => Ok(SystemConfig::preset(name)?),
        (None, None) => Ok(SystemConfig::preset(default_preset)?),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn characterize(c: &Common, gates: u64, out: &Path) -> anyhow::Result<()> {
    if gates == 0 {
        return Err(Usage("--gates must be >= 1".into()).into());
    }
    let cfg = load_config(c, "array4")?;
    let report = run_characterization(&cfg, gates, RngSpec::new(c.seed))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = create(&out.join("characterization.json"))?;
    w.write_all(report.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    report.write_sync_csv(create(&out.join("crosstalk_sync.csv"))?)?;
    report.write_async_csv(create(&out.join("crosstalk_async.csv"))?)?;
    report.write_specificity_csv(create(&out.join("specificity.csv"))?)?;
    for (i, p) in report.pixels.iter().enumerate() {
        eprintln!(
            "pixel {i}: spde {:.4}  dcr {:.1} Hz  apr {:.4}",
            p.spde.spde.value, p.dcr.dcr_hz.value, p.apr.apr.value
        );
    }
    Ok(())
}

/// Attenuation grid from an explicit list or a start/stop/step range.
pub fn grid(start: Option<f64>, stop: Option<f64>, step: Option<f64>, list: Option<Vec<f64>>) -> anyhow::Result<Vec<f64>> {
    let g = match (list, start, stop, step) {
        (Some(l), ..) => l,
        (None, Some(a), Some(b), Some(s)) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Usage(format!("--step must be positive, got {s}")).into());
            }
            if !(a.is_finite() && b.is_finite()) || b < a {
                return Err(Usage(format!("empty attenuation grid: start {a}, stop {b}")).into());
            }
            let n = ((b - a) / s + 1e-9).floor() as usize + 1;
            (0..n).map(|i| ((a + i as f64 * s) * 1e9).round() / 1e9).collect()
        }
        _ => return Err(Usage("give either --list or all of --start, --stop, --step".into()).into()),
    };
    if g.is_empty() {
        return Err(Usage("empty attenuation grid".into()).into());
    }
    if g.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Usage("attenuations must be finite and >= 0 dB".into()).into());
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Usage("attenuation grid must be strictly increasing".into()).into());
    }
    Ok(g)
}

#[derive(Debug, Serialize)]
struct PointOutput {
    attenuation_db: f64,
    equivalent_km: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fibre_km: Option<f64>,
    mode: &'static str,
    raw_rate_hz: f64,
    qber: f64,
    secure_rate_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<KeyRateReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown: Option<RateBreakdown<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block: Option<SiftedBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct Evaluation {
    out: PointOutput,
    block: Option<SiftedBlock>,
}

fn evaluate(op: &OperatingPoint, mode: Mode, rng: RngSpec, opts: BlockRunOptions, db_per_km: f64) -> anyhow::Result<Evaluation> {
    let db = op.channel_loss_db();
    let base = PointOutput {
        attenuation_db: db,
        equivalent_km: equivalent_km(db, db_per_km),
        fibre_km: op.config.channel.fibre_km,
        mode: mode.name(),
        raw_rate_hz: 0.0,
        qber: 0.0,
        secure_rate_hz: 0.0,
        report: None,
        breakdown: None,
        block: None,
        error: None,
    };
    match mode {
        Mode::Analytic => {
            let b = qber::<f64>(op)?;
            let r = finite_key_report::<f64>(op, &op.config.finite_key)?;
            Ok(Evaluation {
                out: PointOutput {
                    raw_rate_hz: b.raw_rate_hz,
                    qber: b.qber,
                    secure_rate_hz: r.secure_rate_hz,
                    report: Some(r),
                    breakdown: Some(b),
                    ..base
                },
                block: None,
            })
        }
        Mode::Montecarlo => match run_to_block_size_with(op, &op.config.finite_key, rng, opts) {
            Ok(run) => {
                let mut block = run.block;
                let trace = block.trace.take().map(|t| SiftedBlock {
                    trace: Some(t),
                    ..SiftedBlock::default()
                });
                Ok(Evaluation {
                    out: PointOutput {
                        raw_rate_hz: block.raw_rate_hz(),
                        qber: block.qber(Intensity::Signal).0,
                        secure_rate_hz: run.report.secure_rate_hz,
                        report: Some(run.report),
                        block: Some(block),
                        ..base
                    },
                    block: trace,
                })
            }
            // the block cannot be filled in time: no key at this point
            Err(e @ qkdsim::Error::PartialBlock { raw_rate_hz, qber, .. }) => Ok(Evaluation {
                out: PointOutput {
                    raw_rate_hz,
                    qber,
                    error: Some(e.to_string()),
                    ..base
                },
                block: None,
            }),
            Err(e) => Err(e.into()),
        },
        Mode::Both => unreachable!("expanded by the caller"),
    }
}

pub fn sweep(c: &Common, mode: Mode, grid: &[f64], db_per_km: Option<f64>, cap_s: f64, out: &Path) -> anyhow::Result<()> {
    let cfg = load_config(c, "cold")?;
    let db_per_km = db_per_km.unwrap_or(cfg.channel.db_per_km);
    let base = OperatingPoint::new(cfg.clone())?;
    let opts = BlockRunOptions {
        duration_cap_s: cap_s,
        trace: false,
    };
    let jobs: Vec<(usize, f64, Mode)> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, &db)| mode.expand().iter().map(move |&m| (i, db, m)))
        .collect();
    let results: Vec<PointOutput> = jobs
        .par_iter()
        .map(|&(i, db, m)| {
            let op = base.with_attenuation(db)?;
            let rng = RngSpec::new(c.seed).substream(i as u64);
            Ok(evaluate(&op, m, rng, opts, db_per_km)?.out)
        })
        .collect::<anyhow::Result<_>>()?;

    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["attenuation_db", "equivalent_km", "raw_rate_hz", "qber", "secure_rate_hz", "mode"])?;
    for r in &results {
        w.write_record([
            r.attenuation_db.to_string(),
            r.equivalent_km.to_string(),
            r.raw_rate_hz.to_string(),
            r.qber.to_string(),
            r.secure_rate_hz.to_string(),
            r.mode.to_string(),
        ])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        seed: u64,
        db_per_km: f64,
        config: &'a SystemConfig,
        points: &'a [PointOutput],
    }
    let sidecar = out.with_extension("json");
    let mut j = create(&sidecar)?;
    serde_json::to_writer_pretty(
        &mut j,
        &Sidecar {
            seed: c.seed,
            db_per_km,
            config: &cfg,
            points: &results,
        },
    )?;
    j.write_all(b"\n")?;
    j.flush()?;
    Ok(())
}

pub struct ChannelChoice {
    pub attenuation_db: Option<f64>,
    pub fibre_km: Option<f64>,
    pub loss_override_db: Option<f64>,
    pub db_per_km: Option<f64>,
}

pub fn point(
    c: &Common,
    mode: Mode,
    ch: ChannelChoice,
    cap_s: f64,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(c, "cold")?;
    let db_per_km = ch.db_per_km.unwrap_or(cfg.channel.db_per_km);
    if let Some(db) = ch.attenuation_db {
        cfg.channel = ChannelConfig {
            db_per_km,
            ..ChannelConfig::attenuation(db)
        };
    } else if let Some(km) = ch.fibre_km {
        cfg.channel = ChannelConfig {
            db_per_km,
            loss_override_db: ch.loss_override_db,
            ..ChannelConfig::fibre(km)
        };
    } else {
        cfg.channel.db_per_km = db_per_km;
    }
    if trace.is_some() && mode == Mode::Analytic {
        return Err(Usage("--trace needs --mode montecarlo or both".into()).into());
    }
    let op = OperatingPoint::new(cfg)?;
    let opts = BlockRunOptions {
        duration_cap_s: cap_s,
        trace: trace.is_some(),
    };
    let mut outputs = Vec::new();
    for &m in mode.expand() {
        let e = evaluate(&op, m, RngSpec::new(c.seed), opts, db_per_km)?;
        if let (Some(path), Some(b)) = (trace, &e.block) {
            b.write_trace_csv(path)?;
        }
        outputs.push(e.out);
    }
    let text = if outputs.len() == 1 {
        serde_json::to_string_pretty(&outputs[0])?
    } else {
        serde_json::to_string_pretty(&outputs)?
    };
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

const COUPLING_COLUMNS: [&str; 3] = ["system_spde_pct", "channel_loss_db", "spad_spde_pct"];

pub fn coupling(input: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 3];
    for (k, name) in COUPLING_COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Usage(format!("{}: line 1: missing column {name}", input.display())))?;
    }
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = headers.iter().map(str::to_string).collect();
    header.push("coupling_loss_db".into());
    w.write_record(&header)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Usage(format!("{}: line {line}: {e}", input.display()))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut v = [0.0f64; 3];
        for k in 0..3 {
            let cell = rec.get(idx[k]).unwrap_or("");
            v[k] = cell.parse().map_err(|_| {
                Usage(format!(
                    "{}: line {line}: {} = {cell:?} is not a number",
                    input.display(),
                    COUPLING_COLUMNS[k]
                ))
            })?;
        }
        let loss = coupling_loss(v[0] / 100.0, v[1], v[2] / 100.0)
            .with_context(|| format!("{}: line {line}", input.display()))?;
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        row.push(format_db(loss.loss_db));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Two decimals, without a negative zero.
fn format_db(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}
