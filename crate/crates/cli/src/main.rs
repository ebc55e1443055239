#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod out;
mod run;

#[derive(Parser, Debug)]
#[command(name = "pgl3", version, about = "Pinned Ginzburg-Landau lab on a 3D staggered grid")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML experiment file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cells per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Comma-separated ε values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Vec<f64>,
    /// constant | azimuthal | gradient | file:PATH
    #[arg(long, global = true)]
    field: Option<String>,
    /// Pinning floor b; below 1 puts a centered inclusion of radius `--core`.
    #[arg(long, global = true)]
    b: Option<f64>,
    #[arg(long, global = true, default_value_t = 0.4)]
    core: f64,
    /// Box half-side over ball radius.
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write VTK and tabular files for external plotting.
    #[arg(long, global = true)]
    plot_data: bool,
    /// Write field snapshots.
    #[arg(long, global = true)]
    save_fields: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum InitArg {
    Meissner,
    Random,
    Vortex,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum FixtureArg {
    Line,
    Ring,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Pinned density ρ_ε for each ε.
    RhoSolve {
        #[command(flatten)]
        common: Common,
    },
    /// Meissner potential A⁰, B⁰ and the optimality residuals.
    Meissner {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        tests: usize,
    },
    /// Energy splitting identity on random configurations.
    SplitCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 5.0])]
        h: Vec<f64>,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Weighted isoflux ratio of B⁰ and H_c1.
    Isoflux {
        #[command(flatten)]
        common: Common,
        /// Lattice points per cell.
        #[arg(long, default_value_t = 1)]
        resolution: usize,
        #[arg(long, default_value = "6", value_parser = ["6", "26"])]
        neighbors: String,
    },
    /// Polyhedral vortex approximation ν of a configuration.
    VortexDetect {
        #[command(flatten)]
        common: Common,
        /// Order parameter snapshot (complex cell field).
        #[arg(long, requires = "potential")]
        input: Option<PathBuf>,
        /// Vector potential snapshot (face field).
        #[arg(long)]
        potential: Option<PathBuf>,
        /// Applied intensity of the input configuration.
        #[arg(long, default_value_t = 0.0)]
        h: f64,
        #[arg(long, value_enum, default_value_t = FixtureArg::Line)]
        fixture: FixtureArg,
        /// Cube side in cells.
        #[arg(long)]
        delta_cells: Option<f64>,
    },
    /// Minimize GL at one applied intensity.
    GlMinimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        h: f64,
        #[arg(long, value_enum, default_value_t = InitArg::Meissner)]
        init: InitArg,
    },
    /// Applied-field sweep and vortex onset.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `start:step:stop[xHc1]` or a comma list.
        #[arg(long)]
        h: Option<String>,
    },
    /// Ball construction on degree-one disk slices.
    BallLab {
        #[command(flatten)]
        common: Common,
        /// Slice resolution.
        #[arg(long, default_value_t = 400)]
        n: usize,
        /// Constant ρ².
        #[arg(long, default_value_t = 1.0)]
        rho2: f64,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(s) = std::env::var("PGL3_THREADS") {
        let n: usize = s.parse().map_err(|_| pgl3::Error::Config(format!("PGL3_THREADS={s} is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.cmd {
        Cmd::RhoSolve { common } => run::rho_solve(&common),
        Cmd::Meissner { common, tests } => run::meissner(&common, tests),
        Cmd::SplitCheck { common, trials, h, tol } => run::split_check(&common, trials, &h, tol),
        Cmd::Isoflux { common, resolution, neighbors } => run::isoflux(&common, resolution, neighbors == "26"),
        Cmd::VortexDetect { common, input, potential, h, fixture, delta_cells } => {
            run::vortex_detect(&common, input.zip(potential), h, fixture, delta_cells)
        }
        Cmd::GlMinimize { common, h, init } => run::gl_minimize(&common, h, init),
        Cmd::Sweep { common, h } => run::sweep(&common, h.as_deref()),
        Cmd::BallLab { common, n, rho2 } => run::ball_lab(&common, n, rho2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<pgl3::Error>() {
                Some(p) => p.exit_code(),
                None if e.downcast_ref::<std::io::Error>().is_some() => 2,
                None => 3,
            };
            ExitCode::from(code as u8)
        }
    }
}
