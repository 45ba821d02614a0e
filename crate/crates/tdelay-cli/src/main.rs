//! `tdelay`: scattering time delays from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "tdelay", version, about = "Quantum and classical scattering time delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classical trajectory delays under every convention (CSV)
    Classical(Opts),
    /// S-matrix at one energy (JSON) or along a sweep (CSV)
    Smatrix(Opts),
    /// Eisenbud-Wigner, transmission and reflection delays along a sweep (CSV)
    Delay(Opts),
    /// Local delay against region radius (CSV)
    SojournScan(Opts),
    /// Fuzzy local delay against fuzzy width at fixed radius (CSV)
    FuzzySweep(Opts),
    /// Time-dependent direct sojourn of a packet (JSON)
    PacketSojourn(Opts),
    /// Larmor, dissipative and energy clock readings (CSV)
    Clocks(Opts),
    /// Linear response of the S-matrix to a region coupling (JSON)
    LinearResponse(Opts),
    /// Floquet sideband S-matrix (JSON)
    Floquet(Opts),
    /// Floquet delays and sideband decomposition (JSON)
    FloquetDelay(Opts),
    /// Lorentzian fit of a resonance (JSON)
    Resonance(Opts),
    /// Conditional fuzzy-region delay (JSON)
    GeneralDelay(Opts),
}

impl Command {
    fn split(&self) -> (&'static str, &Opts) {
        match self {
            Command::Classical(o) => ("classical", o),
            Command::Smatrix(o) => ("smatrix", o),
            Command::Delay(o) => ("delay", o),
            Command::SojournScan(o) => ("sojourn-scan", o),
            Command::FuzzySweep(o) => ("fuzzy-sweep", o),
            Command::PacketSojourn(o) => ("packet-sojourn", o),
            Command::Clocks(o) => ("clocks", o),
            Command::LinearResponse(o) => ("linear-response", o),
            Command::Floquet(o) => ("floquet", o),
            Command::FloquetDelay(o) => ("floquet-delay", o),
            Command::Resonance(o) => ("resonance", o),
            Command::GeneralDelay(o) => ("general-delay", o),
        }
    }
}

#[derive(Args, Default)]
struct Opts {
    /// Run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential file; bare keys are read as `potential.<key>`
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Override any key, e.g. --set region.shape=halfcos
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<String>,
    #[arg(long)]
    emin: Option<String>,
    #[arg(long)]
    emax: Option<String>,
    /// Number of energies in a sweep
    #[arg(long)]
    n: Option<String>,
    /// left | right
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    rmin: Option<String>,
    #[arg(long)]
    rmax: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// Fixed fuzzy width of a sojourn scan
    #[arg(long)]
    fuzzy_rho: Option<String>,
    /// cos2 | halfcos
    #[arg(long)]
    shape: Option<String>,
    /// Region radius
    #[arg(long)]
    r: Option<String>,
    /// Region fuzzy width
    #[arg(long)]
    rho: Option<String>,
    /// in | out | symmetric | free-flight
    #[arg(long)]
    reference: Option<String>,
    /// none | transmit | reflect-left | reflect-right | sideband:n
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    k0: Option<String>,
    #[arg(long)]
    sigma_k: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    amplitude: Option<String>,
    /// Comma-separated clock couplings
    #[arg(long)]
    couplings: Option<String>,
}

impl Opts {
    fn flags(&self) -> Vec<(&'static str, &'static str, &Option<String>)> {
        vec![
            ("output", "--out", &self.out),
            ("energy", "--energy", &self.energy),
            ("emin", "--emin", &self.emin),
            ("emax", "--emax", &self.emax),
            ("n", "--n", &self.n),
            ("direction", "--direction", &self.direction),
            ("scan.rmin", "--rmin", &self.rmin),
            ("scan.rmax", "--rmax", &self.rmax),
            ("scan.steps", "--steps", &self.steps),
            ("fuzzy.rho", "--fuzzy-rho", &self.fuzzy_rho),
            ("region.shape", "--shape", &self.shape),
            ("region.r", "--r", &self.r),
            ("region.rho", "--rho", &self.rho),
            ("reference", "--reference", &self.reference),
            ("condition", "--condition", &self.condition),
            ("packet.k0", "--k0", &self.k0),
            ("packet.sigma_k", "--sigma-k", &self.sigma_k),
            ("floquet.n_max", "--n-max", &self.n_max),
            ("drive.omega", "--omega", &self.omega),
            ("drive.amplitude", "--amplitude", &self.amplitude),
            ("clock.couplings", "--couplings", &self.couplings),
        ]
    }

    /// Config file, then potential file, then `--set`, then named flags.
    fn resolve(&self, command: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::new(command);
        if let Some(p) = &self.config {
            cfg.load(p, None)?;
        }
        if let Some(p) = &self.potential {
            cfg.load(p, Some("potential"))?;
        }
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        for (key, flag, v) in self.flags() {
            if let Some(v) = v {
                cfg.set(key, v, flag)?;
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts) = cli.command.split();
    let cfg = match opts.resolve(name) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let text = match commands::run(&cfg) {
        Ok(t) => t,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match cfg.str("output") {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {path}: {e}");
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
