use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mechbio_core::io::{Config, ConfigError, Geometry};
use mechbio_core::mesh::{BoundaryTag, Subdomain};
use mechbio_core::orchestrator::{RunMode, RunReport, Simulation};
use mechbio_core::verification::mms::{mms_cells, MmsSetup};
use mechbio_core::verification::terzaghi::{terzaghi, TerzaghiSetup};

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;

fn long_version() -> &'static str {
    let v = format!(
        "{} ({}, {}-{})",
        env!("CARGO_PKG_VERSION"),
        env!("CARGO_PKG_NAME"),
        std::env::consts::OS,
        std::env::consts::ARCH
    );
    Box::leak(v.into_boxed_str())
}

#[derive(Parser, Debug)]
#[command(name = "mechbio", version, long_version = long_version(), about = "Mechanobiology of scaffold cartilage regeneration")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// TOML configuration; built-in defaults when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// coupled | fallback | biology-only | mechanics-only
    #[arg(long)]
    mode: Option<RunMode>,
    /// unit-square-porous | porous-with-inflow | channel-over-porous | three-squares | gmsh
    #[arg(long)]
    geometry: Option<Geometry>,
    /// Resume from a checkpoint written for the same configuration and mesh
    #[arg(long)]
    restart: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cell model, driven by the configured mechanics (biology-only by default)
    RunCells(RunArgs),
    /// Poroelastic wall alone, pressurised on its inflow edge
    RunPoro(RunArgs),
    /// Stokes channel coupled to the poroelastic wall, driving the cells
    RunCoupled(RunArgs),
    /// Manufactured-solution convergence study of the cell model
    Mms {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// diffusion | taxis | all
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Terzaghi consolidation study
    Terzaghi {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a configuration
    CheckConfig {
        #[arg(value_name = "PATH", required_unless_present = "config")]
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print mesh statistics for a configuration
    MeshInfo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<Geometry>,
    },
}

/// Message and exit code of a failed command.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.to_string(),
        }
    }

    fn solver(message: impl ToString) -> Self {
        Failure {
            code: EXIT_SOLVER,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        if e.is_validation() || matches!(e, ConfigError::Io { .. }) {
            Failure::validation(e)
        } else {
            Failure::solver(e)
        }
    }
}

fn load(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn base_dir(path: Option<&Path>) -> Option<&Path> {
    path.and_then(Path::parent)
}

fn prepare(args: &RunArgs, implied: RunMode) -> Result<Config, Failure> {
    let mut cfg = load(args.config.as_deref())?;
    cfg.run.mode = args.mode.unwrap_or(implied);
    if let Some(g) = args.geometry {
        cfg.mesh.geometry = g;
    } else {
        // pick a geometry the mode can run on when the configured one cannot
        let g = cfg.mesh.geometry;
        let needs_fluid = cfg.run.mode == RunMode::Coupled;
        let needs_inflow = matches!(cfg.run.mode, RunMode::Fallback | RunMode::MechanicsOnly);
        if needs_fluid
            && matches!(
                g,
                Geometry::UnitSquarePorous | Geometry::PorousWithInflow | Geometry::ThreeSquares
            )
        {
            info!("geometry {g:?} has no fluid region; using channel-over-porous");
            cfg.mesh.geometry = Geometry::ChannelOverPorous;
        } else if needs_inflow && g == Geometry::UnitSquarePorous {
            info!("geometry {g:?} has no inflow edge; using porous-with-inflow");
            cfg.mesh.geometry = Geometry::PorousWithInflow;
        }
    }
    if let Some(n) = args.steps {
        cfg.run.n_steps = n;
    }
    if let Some(dt) = args.dt {
        cfg.run.dt = dt;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.clone();
    }
    cfg.validate().map_err(Failure::validation)?;
    Ok(cfg)
}

fn run(args: &RunArgs, implied: RunMode) -> Result<(), Failure> {
    let cfg = prepare(args, implied)?;
    let mesh = cfg.build_mesh(base_dir(args.config.as_deref()))?;
    info!(
        "{} elements, mode {:?}, {} steps of {}",
        mesh.n_elements(),
        cfg.run.mode,
        cfg.run.n_steps,
        cfg.run.dt
    );
    let classify = |e: mechbio_core::orchestrator::RunError| {
        if e.is_validation() {
            Failure::validation(e)
        } else {
            Failure::solver(e)
        }
    };
    let out_dir = cfg.run.out_dir.clone();
    let mut sim = match &args.restart {
        Some(p) => Simulation::restore(cfg, mesh, p).map_err(classify)?,
        None => Simulation::new(cfg, mesh).map_err(classify)?,
    };
    let report: RunReport = sim.run().map_err(classify)?;
    print!("{}", report.to_text());
    println!("out_dir: {}", out_dir.display());
    Ok(())
}

fn mms(levels: usize, suite: &str, out: Option<&Path>) -> Result<(), Failure> {
    let suites: Vec<(&str, MmsSetup, f64)> = match suite {
        "diffusion" => vec![("diffusion", MmsSetup::diffusion(), 1.8)],
        "taxis" => vec![("taxis", MmsSetup::full_with_taxis(), 1.5)],
        "all" => vec![
            ("diffusion", MmsSetup::diffusion(), 1.8),
            ("taxis", MmsSetup::full_with_taxis(), 1.5),
        ],
        other => {
            return Err(Failure::validation(format!(
                "unknown suite `{other}` (expected diffusion, taxis or all)"
            )))
        }
    };
    let mut ok = true;
    for (name, setup, threshold) in suites {
        let report = mms_cells(&setup, levels, threshold).map_err(|e| match e {
            mechbio_core::verification::mms::MmsError::Convergence(_) => Failure::validation(e),
            _ => Failure::solver(e),
        })?;
        println!("MMS {name} (required order {threshold} for c1, c2)");
        print!("{}", report.table());
        let pass = report.passes();
        println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
        if let Some(dir) = out {
            write_out(dir, &format!("mms_{name}.csv"), &report.csv())?;
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::solver(
            "convergence orders below the required thresholds",
        ))
    }
}

fn run_terzaghi(levels: usize, out: Option<&Path>) -> Result<(), Failure> {
    let report = terzaghi(&TerzaghiSetup::default(), levels).map_err(|e| match e {
        mechbio_core::verification::terzaghi::TerzaghiError::Convergence(_) => {
            Failure::validation(e)
        }
        _ => Failure::solver(e),
    })?;
    print!("{}", report.table());
    let f = report.finest();
    let degree_ok = (f.degree - 0.931).abs() <= 0.02;
    let error_ok = f.pressure_error < 0.02;
    println!(
        "U(T_v = 1) = {:.4} (series {:.4}): {}",
        f.degree,
        f.degree_exact,
        if degree_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "finest relative L2 pressure error = {:.3e}: {}",
        f.pressure_error,
        if error_ok { "PASS" } else { "FAIL" }
    );
    if let Some(dir) = out {
        write_out(dir, "terzaghi.csv", &report.convergence.csv())?;
    }
    if degree_ok && error_ok {
        Ok(())
    } else {
        Err(Failure::solver("Terzaghi tolerances not met"))
    }
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::solver(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Failure::solver(format!("{}: {e}", p.display())))
}

fn check_config(path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(path)?;
    let mesh = cfg.build_mesh(base_dir(Some(path)))?;
    println!("{}: ok", path.display());
    println!("config_hash: {}", cfg.hash());
    println!(
        "mesh: {} elements, {} vertices",
        mesh.n_elements(),
        mesh.n_vertices()
    );
    Ok(())
}

fn mesh_info(config: Option<&Path>, geometry: Option<Geometry>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(g) = geometry {
        cfg.mesh.geometry = g;
        cfg.validate().map_err(Failure::validation)?;
    }
    let mesh = cfg.build_mesh(base_dir(config))?;
    println!("vertices: {}", mesh.n_vertices());
    println!("elements: {}", mesh.n_elements());
    println!("faces: {}", mesh.n_faces());
    for sub in [Subdomain::Porous, Subdomain::Fluid] {
        let n = mesh.subdomains.iter().filter(|&&s| s == sub).count();
        println!(
            "{sub:?}: {n} elements, area {:.6}",
            mesh.subdomain_area(sub)
        );
    }
    for tag in BoundaryTag::ALL {
        let m = mesh.tag_measure(tag);
        if m > 0.0 {
            println!("{tag}: length {m:.6}");
        }
    }
    let comps = mesh.components(None);
    println!("components: {}", comps.iter().max().map_or(0, |c| c + 1));
    println!("h_max: {:.6}", mesh.max_element_diameter());
    println!("fingerprint: {}", mesh.fingerprint());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::solver)?;
    }
    match &cli.command {
        Command::RunCells(a) => run(a, RunMode::BiologyOnly),
        Command::RunPoro(a) => run(a, RunMode::MechanicsOnly),
        Command::RunCoupled(a) => run(a, RunMode::Coupled),
        Command::Mms { levels, suite, out } => mms(*levels, suite, out.as_deref()),
        Command::Terzaghi { levels, out } => run_terzaghi(*levels, out.as_deref()),
        Command::CheckConfig { path, config } => check_config(
            path.as_deref()
                .or(config.as_deref())
                .expect("required by clap"),
        ),
        Command::MeshInfo { config, geometry } => mesh_info(config.as_deref(), *geometry),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
