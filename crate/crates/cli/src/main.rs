use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use consensus_lab::{bundled_examples, find_example, run, CliError, ConfigSource, Mode, Overrides};

#[derive(Parser)]
#[command(
    name = "consensus-lab",
    version,
    about = "Consensus experiments with discontinuous coupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Root set, weights, scrambling and bounds for one graph
    Analyze(RunArgs),
    /// Simulate on a fixed graph
    Fixed(RunArgs),
    /// Simulate over a random sequence of listed graphs
    Switching(RunArgs),
    /// Simulate on a blinking network
    Blinking(RunArgs),
    /// Monte Carlo estimate of the expected scrambling coefficient
    ExpectedEta(RunArgs),
    /// List bundled example configs, or print one
    Examples {
        /// Print this example's config
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "example"])))]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled example name instead of a config file
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Independent runs with derived seeds, executed concurrently
    #[arg(long)]
    runs: Option<usize>,
}

fn execute(mode: Mode, args: RunArgs) -> Result<(), CliError> {
    let source = match (&args.config, &args.example) {
        (Some(path), _) => ConfigSource::from_path(path)?,
        (None, Some(name)) => ConfigSource::bundled(name)?,
        (None, None) => unreachable!("clap enforces a config source"),
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        t_max: args.t_max,
        runs: args.runs,
    };
    let report = run(mode, &source, &overrides)?;
    println!("{}", report.headline);
    println!("results in {}", report.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Analyze(a) => (Mode::Analyze, a),
        Command::Fixed(a) => (Mode::Fixed, a),
        Command::Switching(a) => (Mode::Switching, a),
        Command::Blinking(a) => (Mode::Blinking, a),
        Command::ExpectedEta(a) => (Mode::ExpectedEta, a),
        Command::Examples { show: None } => {
            for e in bundled_examples() {
                println!("{:<22} {:<13} {}", e.name, e.mode.name(), e.description);
            }
            return ExitCode::SUCCESS;
        }
        Command::Examples { show: Some(name) } => {
            return match find_example(&name) {
                Some(e) => {
                    print!("{}", e.text);
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("no bundled example `{name}`");
                    ExitCode::from(2)
                }
            };
        }
    };
    match execute(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("consensus-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
