//! `qbh` command line: stability, band structure, Krein gaps, vacuum
//! correlations, entanglement, metric-tensor scans, parameter sweeps, and the
//! self-check harness, emitting deterministic CSV/JSON with a run manifest
//! next to every output file.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 instability where a stable model was required.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use qbh::QbhError;

#[derive(Parser)]
#[command(name = "qbh", version, about = "spectral and vacuum analysis of quadratic bosonic lattice models", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// built-in model (harmonic | imaghop | interpolation | double) or a
    /// path to a JSON model file
    #[arg(long)]
    pub model: String,
    /// on-site energy (harmonic, imaghop, interpolation)
    #[arg(long = "Omega", default_value_t = 1.0)]
    pub omega: f64,
    /// hopping amplitude (harmonic, imaghop, interpolation)
    #[arg(long = "J", default_value_t = 0.0)]
    pub j: f64,
    /// pairing amplitude (interpolation)
    #[arg(long = "Delta", default_value_t = 0.0)]
    pub delta: f64,
    /// interpolation weight in [0, 1]
    #[arg(long = "s", default_value_t = 0.0)]
    pub s: f64,
    /// imaginary-hopping strength (imaghop)
    #[arg(long = "gamma", default_value_t = 0.0)]
    pub gamma: f64,
    /// momentum-channel mass (double)
    #[arg(long = "Omega1", default_value_t = 0.5)]
    pub omega1: f64,
    /// position-channel mass (double)
    #[arg(long = "Omega2", default_value_t = 0.5)]
    pub omega2: f64,
    /// momentum-channel stiffness (double)
    #[arg(long = "K1", default_value_t = 1.0)]
    pub k1: f64,
    /// position-channel stiffness (double)
    #[arg(long = "K2", default_value_t = 1.0)]
    pub k2: f64,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// output file (stdout when omitted; a .manifest.json is written next
    /// to file outputs)
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// output format for report-style commands
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Dynamical/energy-bound verdicts, Krein gaps, singular momenta
    Stability {
        #[command(flatten)]
        model: ModelArgs,
        /// momentum grid points per axis (odd)
        #[arg(long, default_value_t = 1025)]
        grid: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Band structure export: k, band, Re/Im energy, signature, rigidity
    Bands {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 257)]
        grid: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Direct and indirect Krein gaps with the minimizing momentum
    Gap {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1025)]
        grid: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Vacuum correlations in real space (or a composite stencil correlator)
    Correlations {
        #[command(flatten)]
        model: ModelArgs,
        /// largest separation
        #[arg(long, default_value_t = 40)]
        rmax: i64,
        /// composite observable, e.g. "x@0+p@1"
        #[arg(long)]
        stencil: Option<String>,
        /// proceed at closed-gap parameters (divergent entries become inf)
        #[arg(long)]
        allow_gapless: bool,
        /// absolute quadrature tolerance per entry
        #[arg(long, default_value_t = 1e-10)]
        quad_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Entanglement entropy and logarithmic negativity of a site range
    Entanglement {
        #[command(flatten)]
        model: ModelArgs,
        /// ring size
        #[arg(long = "N", default_value_t = 64)]
        sites: usize,
        /// region: "half", a size, or "a..b"
        #[arg(long = "B", default_value = "half")]
        region: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Metric tensor over model parameters (single point or a scan)
    Qmt {
        #[command(flatten)]
        model: ModelArgs,
        /// comma-separated parameter names to vary, e.g. "Omega1,Omega2"
        #[arg(long)]
        vary: String,
        /// momentum (comma-separated for multi-dimensional models)
        #[arg(long, default_value = "0")]
        k: String,
        /// relative finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        h_fd: f64,
        /// particle band index
        #[arg(long, default_value_t = 0)]
        band: usize,
        /// scan ranges "from..to" per varied parameter, comma-separated
        #[arg(long)]
        scan: Option<String>,
        /// scan steps per varied parameter, comma-separated
        #[arg(long, default_value = "20")]
        steps: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sweep one or two parameters and emit metrics in long format
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// first swept parameter name
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// second swept parameter name
        #[arg(long)]
        param2: Option<String>,
        #[arg(long)]
        from2: Option<f64>,
        #[arg(long)]
        to2: Option<f64>,
        #[arg(long)]
        steps2: Option<usize>,
        /// metrics: gap, indirect, energy, ee, en (comma-separated)
        #[arg(long, default_value = "gap")]
        emit: String,
        /// ring size for entanglement metrics
        #[arg(long = "N", default_value_t = 64)]
        sites: usize,
        /// worker threads for sweep points (default: QBH_THREADS or all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// skip points already present in the output file
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cross-validation harness: dense-ring oracle and state checks
    Verify {
        /// run the full (slower) check set
        #[arg(long)]
        all: bool,
        /// seed for the random-model checks
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn exit_code(err: &QbhError) -> i32 {
    match err {
        QbhError::ParamDomain { .. }
        | QbhError::InvalidInput(_)
        | QbhError::ModelFile(_)
        | QbhError::Unsupported(_) => 2,
        QbhError::EigenFailure { .. }
        | QbhError::Quadrature(_)
        | QbhError::FitRejected(_)
        | QbhError::Io(_) => 3,
        QbhError::SingularPoint { .. }
        | QbhError::SingularMomentum { .. }
        | QbhError::UnstableRing(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stability { model, grid, out } => commands::stability(&model, grid, &out),
        Command::Bands { model, grid, out } => commands::bands(&model, grid, &out),
        Command::Gap { model, grid, out } => commands::gap(&model, grid, &out),
        Command::Correlations { model, rmax, stencil, allow_gapless, quad_tol, out } => {
            commands::correlations(&model, rmax, stencil.as_deref(), allow_gapless, quad_tol, &out)
        }
        Command::Entanglement { model, sites, region, out } => {
            commands::entanglement(&model, sites, &region, &out)
        }
        Command::Qmt { model, vary, k, h_fd, band, scan, steps, out } => {
            commands::qmt(&model, &vary, &k, h_fd, band, scan.as_deref(), &steps, &out)
        }
        Command::Sweep {
            model,
            param,
            from,
            to,
            steps,
            param2,
            from2,
            to2,
            steps2,
            emit,
            sites,
            threads,
            resume,
            out,
        } => commands::sweep(commands::SweepConfig {
            model,
            axes: {
                let mut axes = vec![commands::SweepAxis { name: param, from, to, steps }];
                if let Some(p2) = param2 {
                    axes.push(commands::SweepAxis {
                        name: p2,
                        from: from2.unwrap_or(0.0),
                        to: to2.unwrap_or(1.0),
                        steps: steps2.unwrap_or(steps),
                    });
                }
                axes
            },
            emit,
            sites,
            threads,
            resume,
            out,
        }),
        Command::Verify { all, seed } => commands::verify(all, seed),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
