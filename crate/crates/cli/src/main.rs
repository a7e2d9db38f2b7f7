use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ybsim::error::Error;
use ybsim::experiments::artifact::output_dir;
use ybsim::experiments::{self, OutputFormat, Overrides, ResolvedConfig, Scenario};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Simulated 171Yb+/174Yb+ measurement scenarios with reproducible artifacts.
#[derive(Parser)]
#[command(name = "ybsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dark and bright photon-count histograms and detection fidelity.
    Detect(RunArgs),
    /// Microwave Rabi flopping scan.
    Rabi(RunArgs),
    /// Branching ratio from decay traces at several probe powers.
    Branching(RunArgs),
    /// Two-stage 935 nm sideband scan for the hyperfine splittings.
    Hyperfine(RunArgs),
    /// Two-ion echo parity fringes and coherence time.
    Ramsey(RunArgs),
    /// Resolve and validate a configuration without running anything.
    ValidateConfig {
        /// Configuration file; defaults alone when omitted.
        path: Option<PathBuf>,
        #[arg(long = "config", conflicts_with = "path")]
        config: Option<PathBuf>,
        /// Print the resolved configuration.
        #[arg(long)]
        print: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration merged over the shipped defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shot count per point, replacing every configured shot count.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn resolve(path: Option<&Path>, overrides: Overrides) -> Result<ResolvedConfig, Error> {
    match path {
        Some(p) => ResolvedConfig::load(p, overrides),
        None => ResolvedConfig::with_overrides("", overrides),
    }
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<(), Error> {
    let resolved = resolve(args.config.as_deref(), Overrides { seed: args.seed, shots: args.shots })?;
    if let Some(s) = resolved.config.scenario.filter(|&s| s != scenario) {
        return Err(Error::Config(format!("configuration is for scenario `{}`, not `{}`", s.id(), scenario.id())));
    }
    let art = experiments::run(scenario, &resolved)?;
    let dir = output_dir(args.out.as_deref(), resolved.config.output_dir.as_deref(), scenario.id());
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    for path in art.write(&dir, format)? {
        println!("wrote {}", path.display());
    }
    println!("{}", serde_json::to_string_pretty(&art.derived)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (scenario, args) = match &cli.command {
        Command::ValidateConfig { path, config, print } => {
            let resolved = resolve(path.as_deref().or(config.as_deref()), Overrides::default())?;
            if *print {
                print!("{}", resolved.resolved_toml);
            }
            println!("ok {}", resolved.hash);
            return Ok(());
        }
        Command::Detect(a) => (Scenario::Detection, a),
        Command::Rabi(a) => (Scenario::Rabi, a),
        Command::Branching(a) => (Scenario::Branching, a),
        Command::Hyperfine(a) => (Scenario::Hyperfine, a),
        Command::Ramsey(a) => (Scenario::Ramsey, a),
    };
    run(scenario, args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprint!("error[config]: {}", text.strip_prefix("error: ").unwrap_or(&text));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            eprintln!("error[config]: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error[runtime]: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
