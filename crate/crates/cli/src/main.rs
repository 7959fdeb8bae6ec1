use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gapdiff_cli::{parse_config, run, CliError};

/// Singular diffusion solver: spectra, semigroup, jump process.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(base) = args.config.parent() {
        config.resolve_paths(base);
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    let manifest = run(&config)?;
    log::info!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        manifest.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
