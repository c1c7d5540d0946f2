use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use latticemc::{execute, parse_config, ConfigError, RunError};

/// Semi-classical Monte-Carlo of atoms in a driven lin-perp-lin lattice.
///
/// Commands: geometry, single, sweep-gamma, sweep-delta, bunching, spectrum,
/// sr-scaling. Any config key can be overridden as `key=value`.
#[derive(Parser, Debug)]
#[command(name = "latticemc", version)]
struct Cli {
    command: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    atoms: Option<String>,
    #[arg(long)]
    tmax: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides.
    overrides: Vec<String>,
}

fn threads() -> Result<Option<usize>, String> {
    match std::env::var("LATTICEMC_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("LATTICEMC_THREADS: cannot read `{v}` as a count")),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides = vec![("command".to_string(), cli.command.clone())];
    for (key, value) in [("seed", cli.seed), ("atoms", cli.atoms), ("tmax", cli.tmax)] {
        if let Some(v) = value {
            overrides.push((key.to_string(), v));
        }
    }
    if let Some(out) = cli.out {
        overrides.push(("out".to_string(), out.display().to_string()));
    }
    for item in &cli.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| RunError::Config(ConfigError::BadOverride(item.clone())))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let spec = parse_config(&text, &overrides)?;
    let threads = threads().map_err(|e| RunError::Config(ConfigError::Invalid(e)))?;
    let tables = execute(&spec, threads)?;
    for table in &tables {
        eprintln!("wrote {}", spec.out.join(table.name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latticemc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
