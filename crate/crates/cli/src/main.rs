//! `caprigid` command-line driver.
//!
//! Every subcommand writes a JSON report (and a CSV table where one makes
//! sense), prints one line per check, and exits 0 only when all checks
//! pass. Failures before a report exists print a JSON error block and exit 2.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;
use report::{envelope, error_block, write_outputs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] caprigid::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        use caprigid::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::Domain(_) => "domain",
                E::Precondition(_) => "precondition",
                E::Numeric(_) => "numeric",
                E::Config(_) => "config",
                E::BasisDependence(_) => "basis_dependence",
                E::IllConditioned { .. } => "ill_conditioned",
                E::RoundingFloor { .. } => "rounding_floor",
            },
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "caprigid", version, about = "Rigidity experiments on spherical caps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Background identities and quadrature sanity.
    CheckBackground(Flags),
    /// Cubic scaling of the scalar or mean curvature remainder.
    ExpansionOrder(Flags),
    /// Projection onto the divergence-free slice.
    Project(Flags),
    /// Integral identities and their scaling.
    Identities(Flags),
    /// Key estimate and the sign structure of Q.
    KeyEstimate(Flags),
    /// Boundary coefficients and the height threshold.
    Threshold(Flags),
    /// Ritz coercivity spectrum.
    Spectrum(Flags),
    /// Numerical rigidity certificate.
    Certify(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Dimension of the sphere.
    #[arg(long)]
    n: Option<usize>,
    /// Cap height in (0,1).
    #[arg(long)]
    c: Option<f64>,
    /// Quadrature nodes: radial then angular counts.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Use central differences with this step instead of analytic jets.
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sup-norm of the perturbation.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Polynomial degree of the perturbation or Ritz basis.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    gauge_degree: Option<usize>,
    /// Scaling grid, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// `scalar`/`mean` for expansion-order; identity names for identities.
    #[arg(long)]
    which: Option<String>,
    /// Grid size for threshold.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    c_fit: Option<f64>,
    /// Output `.json` file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            c: self.c,
            nodes: self.nodes.clone(),
            fd_step: self.fd_step,
            seed: self.seed,
            amplitude: self.amplitude,
            degree: self.degree,
            gauge_degree: self.gauge_degree,
            eps: self.eps.clone(),
            which: self.which.clone(),
            samples: self.samples,
            c_fit: self.c_fit,
            out: self.out.clone(),
        }
    }
}

fn run(name: &str, flags: &Flags) -> Result<bool, CliError> {
    let cfg = config::resolve(flags.config.as_deref(), &flags.overrides())?;
    let outcome = match name {
        "check-background" => commands::check_background(&cfg)?,
        "expansion-order" => commands::expansion_order(&cfg)?,
        "project" => commands::project(&cfg)?,
        "identities" => commands::identities(&cfg)?,
        "key-estimate" => commands::key_estimate(&cfg)?,
        "threshold" => commands::threshold(&cfg)?,
        "spectrum" => commands::spectrum_cmd(&cfg)?,
        "certify" => commands::certify(&cfg)?,
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    };
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let doc = envelope(name, &cfg, &outcome, &stamp);
    let path = write_outputs(&cfg.out, name, &doc, outcome.csv.as_ref())?;
    for c in &outcome.checks {
        println!("{}", c.summary_line());
    }
    let passed = outcome.checks.iter().filter(|c| c.pass).count();
    println!(
        "{name}: {passed}/{} checks passed; report {}",
        outcome.checks.len(),
        path.display()
    );
    Ok(passed == outcome.checks.len())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            println!("{}", error_block("", "usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let (name, flags) = match &cli.command {
        Command::CheckBackground(f) => ("check-background", f),
        Command::ExpansionOrder(f) => ("expansion-order", f),
        Command::Project(f) => ("project", f),
        Command::Identities(f) => ("identities", f),
        Command::KeyEstimate(f) => ("key-estimate", f),
        Command::Threshold(f) => ("threshold", f),
        Command::Spectrum(f) => ("spectrum", f),
        Command::Certify(f) => ("certify", f),
    };
    match run(name, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            println!("{}", error_block(name, e.kind(), &e.to_string()));
            ExitCode::from(2)
        }
    }
}
