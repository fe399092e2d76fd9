//! Command-line driver for the plate bending multigrid experiments.

use clap::Parser;
use platemg::cli::{run, Mode, RunConfig};
use platemg::mesh::Domain;
use std::path::PathBuf;
use std::process::ExitCode;

/// Kirchhoff plate bending: HHJ mixed elements with V-cycle multigrid.
#[derive(Parser, Debug)]
#[command(name = "platemg", version, about)]
struct Args {
    /// Domain: square | lshape
    #[arg(long, default_value = "square")]
    domain: String,

    /// Number of mesh levels (level 1 is the coarsest grid)
    #[arg(long, default_value_t = 6)]
    levels: usize,

    /// Poisson ratio; defaults to 0.3 on the square and 0 on the L-shape
    #[arg(long)]
    nu: Option<f64>,

    /// Pre-smoothing sweeps per V-cycle
    #[arg(long, default_value_t = 1)]
    m1: usize,

    /// Post-smoothing sweeps per V-cycle
    #[arg(long, default_value_t = 1)]
    m2: usize,

    /// Relative residual stopping tolerance
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Maximum number of V-cycles per solve
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,

    /// Mode: solve | certify | convergence
    #[arg(long, default_value = "solve")]
    mode: String,

    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Coarse mesh file ("nv nc", vertex lines, cell lines) for the square
    /// pipeline on a custom simply connected mesh
    #[arg(long)]
    mesh: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = (|| -> platemg::Result<()> {
        let config = RunConfig {
            domain: args.domain.parse::<Domain>()?,
            levels: args.levels,
            nu: args.nu,
            m1: args.m1,
            m2: args.m2,
            tol: args.tol,
            max_iter: args.max_iter,
            out: args.out.clone(),
            mode: args.mode.parse::<Mode>()?,
            mesh: args.mesh.clone(),
        };
        run(&config)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("platemg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
