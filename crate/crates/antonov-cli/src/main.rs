//! `antonov`: steady states, band structure, spectral scans, scattering residuals and
//! damping runs from a single JSON configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use antonov::dynamics::InitialData;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Profile, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "antonov", version, about = "Antonov operator toolkit for plane-symmetric Vlasov-Poisson steady states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steady state and tabulate the energy-angle chart.
    Steady(Common),
    /// Band edges, segments, gaps and the no-gap condition.
    Bands(Common),
    /// Eigenvalue report and embedded-eigenvalue scan.
    Modes(Common),
    /// Generalized Fourier maps and scattering residuals.
    Scatter {
        #[command(flatten)]
        common: Common,
        /// Also evaluate residuals on the grid with N_E and N_beta doubled.
        #[arg(long)]
        refine: bool,
    },
    /// Evolve the Antonov wave equation and report damping metrics.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        initial: InitialArgs,
    },
    /// Run the acceptance suite; exits with 4 when a criterion fails.
    Accept {
        #[command(flatten)]
        common: Common,
        /// Criteria to run, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Polytrope,
    King,
    Harmonic,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialKind {
    Bump,
    Random,
    Eigenvector,
    Lowest,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Ignore cached results.
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Polytropic exponent.
    #[arg(long)]
    k: Option<f64>,
    /// Frequency of the harmonic test potential.
    #[arg(long)]
    omega: Option<f64>,
    /// Central depth h.
    #[arg(long, allow_negative_numbers = true)]
    depth: Option<f64>,
    /// Target total mass (replaces the depth).
    #[arg(long, allow_negative_numbers = true)]
    mass: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    lmax: Option<usize>,
    #[arg(long)]
    n_energy: Option<usize>,
    #[arg(long)]
    n_beta: Option<usize>,
    /// Energy margin relative to E0 - Emin.
    #[arg(long)]
    delta_rel: Option<f64>,
    #[arg(long)]
    scan_points: Option<usize>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n_time: Option<usize>,
}

#[derive(Args)]
struct InitialArgs {
    #[arg(long, value_enum)]
    initial: Option<InitialKind>,
    /// Seed of the random initial data.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Eigenvector index in ascending order.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Evolve the raw initial data without the a.c. projection.
    #[arg(long)]
    no_project: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        if let Some(p) = self.profile {
            c.profile = match p {
                ProfileArg::Polytrope => Profile::Polytrope { k: 1.0 },
                ProfileArg::King => Profile::King,
                ProfileArg::Harmonic => Profile::Harmonic { omega: 1.0 },
            };
        }
        match (&mut c.profile, self.k, self.omega) {
            (Profile::Polytrope { k }, Some(v), _) => *k = v,
            (Profile::Harmonic { omega }, _, Some(v)) => *omega = v,
            _ => {}
        }
        if let Some(v) = self.depth {
            c.depth = v;
            c.target_mass = None;
        }
        if let Some(v) = self.mass {
            c.target_mass = Some(v);
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src { c.$($dst).+ = v; })*
            };
        }
        set!(
            tol => tol,
            lmax => lmax,
            n_energy => n_energy,
            n_beta => n_beta,
            delta_rel => delta_rel,
            scan_points => scan.points,
            n_time => evolve.n_time,
        );
        if self.gamma_min.is_some() {
            c.scan.gamma_min = self.gamma_min;
        }
        if self.gamma_max.is_some() {
            c.scan.gamma_max = self.gamma_max;
        }
        if self.horizon.is_some() {
            c.evolve.horizon = self.horizon;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

impl InitialArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(kind) = self.initial {
            c.evolve.initial = match kind {
                InitialKind::Bump => InitialData::default(),
                InitialKind::Random => InitialData::Random { seed: self.seed },
                InitialKind::Eigenvector => InitialData::Eigenvector { index: self.index },
                InitialKind::Lowest => InitialData::Eigenvector { index: 0 },
            };
        }
        if self.no_project {
            c.evolve.project_ac = false;
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Steady(c) => commands::steady(&c.resolve()?, c.force),
        Command::Bands(c) => commands::bands(&c.resolve()?, c.force),
        Command::Modes(c) => commands::modes(&c.resolve()?, c.force),
        Command::Scatter { common, refine } => commands::scatter(&common.resolve()?, refine, common.force),
        Command::Evolve { common, initial } => {
            let mut cfg = common.resolve()?;
            initial.apply(&mut cfg);
            commands::evolve(&cfg, common.force)
        }
        Command::Accept { common, only } => commands::accept(&common.resolve()?, &only),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
