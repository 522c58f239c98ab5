use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frachem::config::RunConfig;
use frachem::error::{exit_code, Error, Result};
use frachem::fractional::{write_coordinate, FractionalOperatorSet};
use frachem::mesh::QuadratureRule;
use frachem::output::{simulate, write_outputs};
use frachem::suite::{run_suite, write_report, Suite};

/// Exit status when any suite criterion fails.
const SUITE_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "frachem",
    version,
    about = "Viscous fractional Cahn-Hilliard with memory on an interval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write trajectory.csv, summary.txt and checkpoints.
    Run { config: PathBuf },
    /// Run an acceptance suite: wellposedness, contraction, dissipation, operators or all.
    Suite { name: String, config: PathBuf },
    /// Parse and validate a config, then print it with defaults filled in.
    Validate { config: PathBuf },
    /// Write the assembled operators in coordinate form.
    DumpOperators { config: PathBuf },
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os("FRACHEM_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output.dir.clone())
}

fn run(path: &Path) -> Result<u8> {
    let cfg = RunConfig::from_file(path)?;
    let outcome = simulate(&cfg)?;
    let dir = output_dir(&cfg);
    write_outputs(&dir, &cfg, &outcome)?;
    if let Some(b) = outcome.trajectory.breach {
        return Err(Error::InvariantBreach(format!(
            "energy rose by {:.3e} at step {} (t = {})",
            b.increase, b.step, b.t
        )));
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn suite(name: &str, path: &Path) -> Result<u8> {
    let suite: Suite = name.parse()?;
    let cfg = RunConfig::from_file(path)?;
    let results = run_suite(suite, &cfg);
    for r in &results {
        println!("{r}");
    }
    let report = write_report(&output_dir(&cfg), suite, &results)?;
    println!("report: {}", report.display());
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        SUITE_FAILURE
    })
}

fn validate(path: &Path) -> Result<u8> {
    let cfg = RunConfig::from_file(path)?;
    print!("{}", cfg.to_toml()?);
    Ok(0)
}

fn dump_operators(path: &Path) -> Result<u8> {
    let cfg = RunConfig::from_file(path)?;
    let mesh = cfg.mesh()?;
    let quad = QuadratureRule::gauss_legendre(cfg.solver.quadrature_points);
    let ops = FractionalOperatorSet::assemble(&mesh, cfg.solver.beta, &quad)?;
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir)?;
    for (name, m) in [
        ("s_restricted", &ops.s_restricted),
        ("s_regional", &ops.s_regional),
        ("v_weights", &ops.v_weights),
        ("mass", &ops.mass),
    ] {
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}.txt")))?);
        write_coordinate(&mut w, m)?;
    }
    let eig: String = ops
        .eigen
        .values
        .iter()
        .map(|v| format!("{v:.16e}\n"))
        .collect();
    std::fs::write(dir.join("eigenvalues.txt"), eig)?;
    println!(
        "wrote operators for {} interior nodes to {}",
        mesh.interior_count(),
        dir.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Suite { name, config } => suite(name, config),
        Command::Validate { config } => validate(config),
        Command::DumpOperators { config } => dump_operators(config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
