mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Usage, EXIT_IO, EXIT_MODEL, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(name = "qkdsim", version, about = "Gated SPAD array and decoy-state BB84 link simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON system configuration; overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in operating point: cold, room or array4.
    #[arg(long, global = true)]
    preset: Option<String>,

    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Montecarlo,
    Both,
}

impl Mode {
    fn expand(self) -> &'static [Mode] {
        match self {
            Mode::Analytic => &[Mode::Analytic],
            Mode::Montecarlo => &[Mode::Montecarlo],
            Mode::Both => &[Mode::Analytic, Mode::Montecarlo],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::Montecarlo => "montecarlo",
            Mode::Both => "both",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blind characterization of a detector array (default preset array4).
    Characterize {
        /// Gates per acquisition run.
        #[arg(long, default_value_t = 100_000_000)]
        gates: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Key rate against channel attenuation.
    Sweep {
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        #[arg(long, requires_all = ["stop", "step"], conflicts_with = "list")]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Comma-separated attenuations in dB.
        #[arg(long, value_delimiter = ',')]
        list: Option<Vec<f64>>,
        /// Fibre loss used for the equivalent_km column.
        #[arg(long)]
        db_per_km: Option<f64>,
        /// Modeled acquisition time allowed per Monte Carlo block, seconds.
        #[arg(long, default_value_t = 3600.0)]
        duration_cap_s: f64,
        /// CSV output; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// One operating point, reported as JSON.
    Point {
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        #[arg(long, conflicts_with = "fibre_km")]
        attenuation_db: Option<f64>,
        #[arg(long)]
        fibre_km: Option<f64>,
        /// Measured spool loss replacing fibre_km * db_per_km.
        #[arg(long, requires = "fibre_km")]
        loss_override_db: Option<f64>,
        #[arg(long)]
        db_per_km: Option<f64>,
        #[arg(long, default_value_t = 3600.0)]
        duration_cap_s: f64,
        /// Monte Carlo per-pulse trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coupling loss for rows of system_spde_pct, channel_loss_db, spad_spde_pct.
    Coupling {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("QKDSIM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Usage(format!("QKDSIM_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Usage("QKDSIM_THREADS must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let c = &cli.common;
    match cli.command {
        Command::Characterize { gates, out } => commands::characterize(c, gates, &out),
        Command::Sweep {
            mode,
            start,
            stop,
            step,
            list,
            db_per_km,
            duration_cap_s,
            out,
        } => {
            let grid = commands::grid(start, stop, step, list)?;
            commands::sweep(c, mode, &grid, db_per_km, duration_cap_s, &out)
        }
        Command::Point {
            mode,
            attenuation_db,
            fibre_km,
            loss_override_db,
            db_per_km,
            duration_cap_s,
            trace,
            out,
        } => commands::point(
            c,
            mode,
            commands::ChannelChoice {
                attenuation_db,
                fibre_km,
                loss_override_db,
                db_per_km,
            },
            duration_cap_s,
            trace.as_deref(),
            out.as_deref(),
        ),
        Command::Coupling { input, out } => commands::coupling(&input, out.as_deref()),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return EXIT_VALIDATION;
    }
    if let Some(q) = e.downcast_ref::<qkdsim::Error>() {
        return match q {
            qkdsim::Error::Validation(_) | qkdsim::Error::Json(_) => EXIT_VALIDATION,
            qkdsim::Error::Io(_) => EXIT_IO,
            qkdsim::Error::Csv(c) if c.is_io_error() => EXIT_IO,
            qkdsim::Error::Csv(_) => EXIT_VALIDATION,
            _ => EXIT_MODEL,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_IO;
    }
    if let Some(c) = e.downcast_ref::<csv::Error>() {
        return if c.is_io_error() { EXIT_IO } else { EXIT_VALIDATION };
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return EXIT_VALIDATION;
    }
    EXIT_MODEL
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
