mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "wgmconv", version, about = "Whispering-gallery microwave-to-optical up-converter design tools")]
struct Cli {
    /// Run configuration (TOML). Omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also emit SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rim curvature for prism coupling.
    DesignRim,
    /// Fundamental ring-mode frequency over the configured L_c range.
    Dispersion {
        /// Overlay the phase-matching line on the SVG.
        #[arg(long)]
        line: bool,
    },
    /// Integer L_c where the dispersion curve meets the phase-matching line.
    Phasematch,
    /// Coupling rate, efficiency and unity-efficiency pump power.
    Efficiency,
    /// Transmission spectrum analysis.
    Spectrum {
        #[command(subcommand)]
        action: SpectrumAction,
    },
    /// Coupled-mode time evolution and small-signal cross-check.
    Dynamics {
        /// Overrides dynamics.duration_periods.
        #[arg(long, allow_negative_numbers = true)]
        periods: Option<f64>,
    },
    /// Mesh and field exports.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
}

#[derive(Subcommand, Debug)]
enum SpectrumAction {
    /// Fit a Lorentzian to every dip.
    Fit { data: PathBuf },
    /// Fit dips and assign each the nearest L_c from a dispersion CSV.
    Label {
        data: PathBuf,
        #[arg(long)]
        dispersion: PathBuf,
    },
    /// Recover a free geometry parameter from labeled dips at several radii.
    FitGeometry {
        /// CSV with columns `r_outer_mm, L_c, f0_GHz, sigma_GHz`.
        series: PathBuf,
        #[arg(long, value_enum, default_value_t = FreeParam::RIn)]
        free: FreeParam,
        /// Search interval in metres.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        interval: Option<Vec<f64>>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FreeParam {
    RIn,
}

#[derive(Subcommand, Debug)]
enum MeshAction {
    /// Write the cross-section mesh (VTK) and profile (CSV).
    Export {
        /// Also solve the L_c = conversion.l_c mode and write its field map.
        #[arg(long)]
        field: bool,
    },
}

/// Invalid input detected before any computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if cli.svg {
        cfg.output.svg = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.resolved()?.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(UsageError("no subcommand given (see --help)".into()).into());
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build()?;
    pool.install(|| match command {
        Command::DesignRim => commands::design_rim(&cfg),
        Command::Dispersion { line } => commands::dispersion(&cfg, line),
        Command::Phasematch => commands::phasematch(&cfg),
        Command::Efficiency => commands::efficiency(&cfg),
        Command::Spectrum { action } => match action {
            SpectrumAction::Fit { data } => commands::spectrum_fit(&cfg, &data, None),
            SpectrumAction::Label { data, dispersion } => commands::spectrum_fit(&cfg, &data, Some(&dispersion)),
            SpectrumAction::FitGeometry { series, free, interval } => {
                debug_assert_eq!(free, FreeParam::RIn);
                commands::fit_geometry(&cfg, &series, interval.map(|v| (v[0], v[1])))
            }
        },
        Command::Dynamics { periods } => commands::dynamics(&cfg, periods),
        Command::Mesh { action: MeshAction::Export { field } } => commands::mesh_export(&cfg, field),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
