//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on configuration faults, 2 when `--assert`
//! is set and the measured success rate falls below the configured
//! threshold.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crn_harness::config::{ExperimentConfig, OutputFormat, PlayerKind, Scenario};
use crn_harness::emit::{to_bytes, write_output};
use crn_harness::runner::{run, Execution, HarnessError};
use crn_harness::sweep::{sweep, SweepAxis};
use crn_sim::topology::NetworkInstance;

#[derive(Parser)]
#[command(name = "crn", about = "Cognitive radio network protocol experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the output format (csv or json).
    #[arg(long)]
    format: Option<String>,
    /// Run trials on one thread (results are identical either way).
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and emit per-trial records plus a summary.
    Run {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Exit 2 if the success rate misses the config's threshold.
        #[arg(long)]
        assert: bool,
    },
    /// Run a scenario across an axis of values and fit the scaling slope.
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// One of: n, c, k, k_hat, delta, diam.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 4,8,16,32.
        #[arg(long)]
        values: String,
    },
    /// Play hitting games without writing a config file.
    Game {
        /// bipartite, complete, or reduction.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        c: u16,
        /// Matching size; defaults to c for the complete variant, 1 otherwise.
        #[arg(long)]
        k: Option<u16>,
        /// uniform, fresh-pair, or reduction.
        #[arg(long, default_value = "uniform")]
        player: String,
        #[arg(long, default_value_t = 1000)]
        games: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_rounds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        serial: bool,
    },
    /// Validate an instance file against every model invariant.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
}

fn apply_overrides(config: &mut ExperimentConfig, common: &CommonRunArgs) -> Result<(), String> {
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(format) = &common.format {
        config.format = match format.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(format!("unknown format {other:?} (use csv or json)")),
        };
    }
    Ok(())
}

fn emit(output: &crn_harness::runner::RunOutput, out: &Option<PathBuf>) -> Result<(), HarnessError> {
    match out {
        Some(path) => write_output(output, path),
        None => {
            let bytes = to_bytes(output)?;
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

fn cmd_run(common: CommonRunArgs, assert: bool) -> Result<ExitCode, HarnessError> {
    let mut config = ExperimentConfig::from_path(&common.config)?;
    apply_overrides(&mut config, &common).map_err(HarnessError::Other)?;
    let output = run(
        &config,
        Execution {
            parallel: !common.serial,
        },
    )?;
    emit(&output, &common.out)?;
    eprintln!(
        "{}: {} trials, success rate {:.3}, median {:.1}",
        output.summary.scenario,
        output.summary.trials,
        output.summary.success_rate,
        output.summary.median
    );
    if assert {
        if let Some(threshold) = config.assert_success_rate {
            if output.summary.success_rate < threshold {
                eprintln!(
                    "assertion failed: success rate {:.3} below threshold {threshold:.3}",
                    output.summary.success_rate
                );
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(common: CommonRunArgs, axis: String, values: String) -> Result<ExitCode, HarnessError> {
    let mut config = ExperimentConfig::from_path(&common.config)?;
    apply_overrides(&mut config, &common).map_err(HarnessError::Other)?;
    let axis: SweepAxis = axis.parse().map_err(HarnessError::Other)?;
    let values: Vec<u64> = values
        .split(',')
        .map(|v| v.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Other(format!("bad sweep values: {e}")))?;
    let output = sweep(
        &config,
        axis,
        &values,
        Execution {
            parallel: !common.serial,
        },
    )?;
    let json =
        serde_json::to_string_pretty(&output).map_err(|e| HarnessError::Other(e.to_string()))?;
    match &common.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    if let Some(fit) = &output.slope {
        eprintln!("slope {:.3} (residual max {:.3})", fit.slope, fit.residual_max);
    } else {
        eprintln!("slope fit refused (fewer than two usable points)");
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_game(
    variant: String,
    c: u16,
    k: Option<u16>,
    player: String,
    games: u64,
    max_rounds: u64,
    seed: u64,
    out: Option<PathBuf>,
    serial: bool,
) -> Result<ExitCode, HarnessError> {
    let player = match player.as_str() {
        "uniform" => PlayerKind::Uniform,
        "fresh-pair" => PlayerKind::FreshPair,
        "reduction" => PlayerKind::Reduction,
        other => {
            return Err(HarnessError::Other(format!(
                "unknown player {other:?} (use uniform, fresh-pair, or reduction)"
            )))
        }
    };
    let scenario = match variant.as_str() {
        "bipartite" => Scenario::GameBipartite {
            c,
            k: k.unwrap_or(1),
            player,
            max_rounds,
        },
        "complete" => Scenario::GameComplete {
            c,
            player,
            max_rounds,
        },
        "reduction" => Scenario::GameReduction {
            c,
            k: k.unwrap_or(1),
        },
        other => {
            return Err(HarnessError::Other(format!(
                "unknown game variant {other:?} (use bipartite, complete, or reduction)"
            )))
        }
    };
    let config = ExperimentConfig {
        scenario,
        instance: None,
        protocol: Default::default(),
        trials: games,
        master_seed: seed,
        slot_budget_cap: None,
        assert_success_rate: None,
        format: OutputFormat::Csv,
    };
    config.validate()?;
    let output = run(&config, Execution { parallel: !serial })?;
    emit(&output, &out)?;
    eprintln!(
        "{}: {} games, win rate {:.3}, median rounds {:.1}",
        output.summary.scenario,
        output.summary.trials,
        output.summary.success_rate,
        output.summary.median
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(instance: PathBuf) -> Result<ExitCode, HarnessError> {
    let net = NetworkInstance::load(&instance)?;
    let violations = net.validate();
    if violations.is_empty() {
        println!("ok: {} nodes, {} edges", net.n(), net.edges().len());
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, assert } => cmd_run(common, assert),
        Command::Sweep {
            common,
            axis,
            values,
        } => cmd_sweep(common, axis, values),
        Command::Game {
            variant,
            c,
            k,
            player,
            games,
            max_rounds,
            seed,
            out,
            serial,
        } => cmd_game(variant, c, k, player, games, max_rounds, seed, out, serial),
        Command::Validate { instance } => cmd_validate(instance),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
