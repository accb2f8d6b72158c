use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use steersim_cli::report::to_canonical_json;
use steersim_cli::runner::{run_scenario, RunnerError};
use steersim_cli::scenario::{builtin, parse_scenario, OutFormat, Scenario, BUILTINS};

const EXIT_PARSE: u8 = 2;
const EXIT_SEMANTIC: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "steersim",
    about = "Single-photon steering and interaction-free measurement simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in scenario by name.
    Run {
        /// Scenario file path or built-in name (see `list-builtins`).
        scenario: String,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format (json or csv), overriding the scenario.
        #[arg(long)]
        format: Option<String>,
        /// Dump per-trial event logs as JSON lines (steering sessions).
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Parse and semantically validate a scenario file.
    Validate {
        file: PathBuf,
    },
    /// List the built-in scenarios.
    ListBuiltins,
}

fn load_scenario(spec: &str) -> Result<String, ExitCode> {
    if let Some(text) = builtin(spec) {
        return Ok(text.to_string());
    }
    fs::read_to_string(spec).map_err(|e| {
        eprintln!("steersim: cannot read `{spec}`: {e}");
        ExitCode::from(EXIT_RUNTIME)
    })
}

fn parse_and_override(
    text: &str,
    seed: Option<u64>,
    trials: Option<u64>,
    format: Option<&str>,
) -> Result<Scenario, ExitCode> {
    let mut scenario = parse_scenario(text).map_err(|e| {
        eprintln!("steersim: parse error at {e}");
        ExitCode::from(EXIT_PARSE)
    })?;
    if let Some(seed) = seed {
        scenario.seed = Some(seed);
    }
    if let Some(trials) = trials {
        scenario.trials = Some(trials);
    }
    match format {
        None => {}
        Some("json") => scenario.format = Some(OutFormat::Json),
        Some("csv") => scenario.format = Some(OutFormat::Csv),
        Some(other) => {
            eprintln!("steersim: unknown format `{other}` (expected json or csv)");
            return Err(ExitCode::from(EXIT_PARSE));
        }
    }
    scenario.validate().map_err(|e| {
        eprintln!("steersim: semantic error: {e}");
        ExitCode::from(EXIT_SEMANTIC)
    })?;
    Ok(scenario)
}

fn cmd_run(
    spec: &str,
    seed: Option<u64>,
    trials: Option<u64>,
    out: Option<PathBuf>,
    format: Option<String>,
    events: Option<PathBuf>,
) -> ExitCode {
    let text = match load_scenario(spec) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let scenario = match parse_and_override(&text, seed, trials, format.as_deref()) {
        Ok(s) => s,
        Err(code) => return code,
    };

    let mut event_file = match &events {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Some(f),
            Err(e) => {
                eprintln!("steersim: cannot create event log `{}`: {e}", path.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
        },
        None => None,
    };
    let sink: Option<&mut dyn Write> = event_file.as_mut().map(|f| f as &mut dyn Write);

    let report = match run_scenario(&scenario, sink) {
        Ok(r) => r,
        Err(RunnerError::Semantic(e)) => {
            eprintln!("steersim: semantic error: {e}");
            return ExitCode::from(EXIT_SEMANTIC);
        }
        Err(RunnerError::Runtime(e)) => {
            eprintln!("steersim: runtime error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };

    let bytes = match report.format {
        OutFormat::Json => match to_canonical_json(&report.value) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("steersim: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        },
        OutFormat::Csv => report
            .csv
            .expect("csv reports are validated to exist")
            .into_bytes(),
    };

    let write_result = match &out {
        Some(path) => fs::write(path, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = write_result {
        eprintln!("steersim: cannot write report: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::SUCCESS
}

fn cmd_validate(file: PathBuf) -> ExitCode {
    let text = match fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("steersim: cannot read `{}`: {e}", file.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match parse_and_override(&text, None, None, None) {
        Ok(scenario) => {
            println!(
                "{}: ok",
                scenario.name.unwrap_or_else(|| file.display().to_string())
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn cmd_list_builtins() -> ExitCode {
    for (name, text) in BUILTINS {
        let description = text
            .lines()
            .find(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim())
            .unwrap_or("");
        println!("{name:16} {description}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, trials, out, format, events } => {
            cmd_run(&scenario, seed, trials, out, format, events)
        }
        Command::Validate { file } => cmd_validate(file),
        Command::ListBuiltins => cmd_list_builtins(),
    }
}
