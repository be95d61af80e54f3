//! `joycekit`: run the checks of the joycekit library from the command line.
//!
//! Every subcommand writes `report.json` to `--out-dir`. Exit status is 0
//! when all checks pass, 1 when a defect exceeds its tolerance and 2 on
//! invalid input.

mod commands;
mod input;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use joycekit::acceptance::DEFAULT_SEED;
use joycekit::grid::GridSpec;
use joycekit::Precision;

use crate::input::TolSpec;
use crate::report::{Context, Report};

#[derive(Debug, Parser)]
#[command(name = "joycekit", version, about = "Verification toolkit for Joyce structures")]
struct Cli {
    /// Directory for report.json and any plots.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Seed for sampled grids.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Working precision where a choice exists: double or extended.
    #[arg(long, global = true, env = "JOYCEKIT_PRECISION", default_value = "double", value_parser = parse_precision)]
    precision: Precision,
    /// Tolerance override, `name=value` or a bare value for the command's main tolerance. Repeatable.
    #[arg(long, global = true, value_name = "TOL")]
    tol: Vec<TolSpec>,
    #[command(subcommand)]
    command: Command,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: joycekit::Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    s.parse().map_err(|e: joycekit::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Heavenly residual, flatness of the pencil and declared symmetries on a grid.
    HeavenlyCheck {
        #[arg(long)]
        w: PathBuf,
        /// Half the base dimension.
        #[arg(long, default_value_t = 1)]
        frame: usize,
        /// `count[:lo:hi[:jitter]]`.
        #[arg(long, default_value = "3", value_parser = parse_grid)]
        grid: GridSpec,
    },
    /// Quaternion and metric identities, closedness and the Joyce connection.
    HkVerify {
        #[arg(long)]
        w: PathBuf,
        #[arg(long, default_value_t = 1)]
        frame: usize,
        #[arg(long, default_value = "3", value_parser = parse_grid)]
        grid: GridSpec,
        /// Finite-difference step of the closedness test.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Good-Lagrangian verdict for `z_{d+1..2d} = fix`.
    LagrangianCheck {
        #[arg(long)]
        w: PathBuf,
        /// The `d` fixed coordinate values, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        fix: String,
        #[arg(long, default_value = "3", value_parser = parse_grid)]
        grid: GridSpec,
    },
    /// Integrate a twistor line along a path in the eps-plane.
    Twistor {
        #[arg(long)]
        w: PathBuf,
        /// `z_1,..,z_n;theta_1,..,theta_n`.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Waypoints in the eps-plane, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        path: String,
        /// Always integrate numerically.
        #[arg(long)]
        numeric: bool,
        /// Also write twistor.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Stokes rays, factors and the monodromy check of `dY/deps = (U/eps^2 + V/eps) Y`.
    Stokes {
        /// Rows separated by `;`, entries by `,`.
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        /// Also write stokes.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Compose wall-crossing automorphisms and report the identity defect.
    Wallcross {
        #[arg(long, default_value_t = 2)]
        rank: usize,
        /// Antisymmetric integer matrix, rows separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        pairing: Option<String>,
        /// One wall per line; without it the built-in pentagon runs.
        #[arg(long)]
        rays: Option<PathBuf>,
        /// Quadratic refinement on the basis, e.g. `-1,-1`.
        #[arg(long, allow_hyphen_values = true)]
        sigma: Option<String>,
        #[arg(long, default_value_t = 12)]
        order: u32,
    },
    /// Periods, intersection matrix and period-map rank of `y^2 = Q(x)`.
    Periods {
        /// Coefficients in ascending powers, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        /// Cycle file; consecutive-root ellipses when omitted.
        #[arg(long)]
        cycles: Option<PathBuf>,
    },
    /// Run the full acceptance suite.
    Selftest,
}

fn run(cli: &Cli) -> Result<Report> {
    let ctx = Context {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        precision: cli.precision,
        tol: cli.tol.clone(),
    };
    std::fs::create_dir_all(&ctx.out_dir).with_context(|| format!("cannot create {}", ctx.out_dir.display()))?;
    match &cli.command {
        Command::HeavenlyCheck { w, frame, grid } => commands::heavenly_check(&ctx, w, *frame, grid),
        Command::HkVerify { w, frame, grid, step } => commands::hk_verify(&ctx, w, *frame, grid, *step),
        Command::LagrangianCheck { w, fix, grid } => commands::lagrangian_check(&ctx, w, &input::complex_list(fix)?, grid),
        Command::Twistor { w, x, path, numeric, svg } => commands::twistor(
            &ctx,
            &commands::TwistorArgs {
                w,
                x: &input::point(x)?,
                path: &input::complex_list(path)?,
                numeric: *numeric,
                svg: *svg,
            },
        ),
        Command::Stokes { u, v, svg } => commands::stokes(&ctx, u, v, *svg),
        Command::Wallcross { rank, pairing, rays, sigma, order } => commands::wallcross(
            &ctx,
            &commands::WallcrossArgs {
                rank: *rank,
                pairing: pairing.as_deref(),
                rays: rays.as_deref(),
                sigma: sigma.as_deref(),
                order: *order,
            },
        ),
        Command::Periods { q, cycles } => commands::periods(&ctx, q, cycles.as_deref()),
        Command::Selftest => commands::selftest(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rep = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let path = cli.out_dir.join("report.json");
    if let Err(e) = std::fs::write(&path, rep.to_json()) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::from(2);
    }
    for c in &rep.checks {
        println!("{} {}: {} (tolerance {})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    println!("wrote {}", path.display());
    let bad = rep.violations();
    if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("defect above tolerance: {}", bad.join("; "));
        ExitCode::from(1)
    }
}
