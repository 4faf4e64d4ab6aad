//! Command line front end. [`cli_main`] returns the process exit code:
//! 0 on success, 2 for usage or configuration errors, 3 for runtime failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epimove_core::attractiveness::{build_grid, CellGrid};
use epimove_core::harness::{run_replications, RunOptions};
use epimove_core::oracle::{enumerate_step, exact_quantities, NodeRole};
use epimove_core::rng::{StreamKey, StreamRole};
use epimove_core::scenario::{
    parse_config, parse_trigger, preset_emerging, preset_industrialized, InterventionSchedule,
};
use epimove_core::{ConfigError, Error, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(
    name = "epimove",
    version,
    about = "Mobility-driven SIR epidemic simulator on attractiveness-weighted cells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write per-replicate traces and summaries.
    Run(RunArgs),
    /// Print a preset scenario config for a population size.
    Preset(PresetArgs),
    /// Print exact quantities for a grid as CSV.
    Oracle(OracleArgs),
    /// Parse and validate a config file, then print it in normal form.
    Validate {
        /// Config file to check.
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file (`key=value` lines). Flags below override its keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Power-law exponent of cell attractiveness (must exceed 2).
    #[arg(long)]
    alpha: Option<f64>,
    /// Cells per node.
    #[arg(long)]
    kappa: Option<f64>,
    /// Steps a node stays infectious.
    #[arg(long)]
    tau: Option<u32>,
    /// Per-contact transmission probability.
    #[arg(long)]
    beta: Option<f64>,
    /// Nodes infected at step 0.
    #[arg(long)]
    initial_infected: Option<usize>,
    /// Step cap per replicate.
    #[arg(long)]
    max_steps: Option<u32>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicates.
    #[arg(long)]
    replications: Option<usize>,
    /// Intervention `time:STEP->k=v,...` or `prevalence:FRACTION->k=v,...`.
    /// Repeatable; replaces any triggers from the config file.
    #[arg(long = "trigger", value_name = "TRIGGER")]
    triggers: Vec<String>,
    /// Output directory.
    #[arg(long, env = "EPIMOVE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Also write per-step cell assignments (large).
    #[arg(long)]
    log_cells: bool,
    /// Let nodes infected in a step transmit within the same step.
    #[arg(long)]
    same_step_transmission: bool,
    /// Worker threads for replicates (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Parallelize movement within a step as well.
    #[arg(long)]
    parallel_movement: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PresetKind {
    /// alpha 2.8, kappa 1, tau round(ln ln n).
    Emerging,
    /// alpha 6, kappa 16, tau 2.
    Industrialized,
}

#[derive(Args, Debug)]
struct PresetArgs {
    kind: PresetKind,
    /// Number of nodes (at least 100).
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    n: u64,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Explicit cell attractiveness values, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "n",
        required_unless_present = "n"
    )]
    weights: Vec<u32>,
    /// Draw a grid for this many nodes instead of giving weights.
    #[arg(long)]
    n: Option<usize>,
    /// Exponent for a drawn grid.
    #[arg(long, default_value_t = 2.8, requires = "n")]
    alpha: f64,
    /// Cells per node for a drawn grid.
    #[arg(long, default_value_t = 1.0, requires = "n")]
    kappa: f64,
    /// Seed for a drawn grid.
    #[arg(long, default_value_t = 0, requires = "n")]
    seed: u64,
    /// Infectious node count for the expected-infection bound.
    #[arg(long, default_value_t = 1)]
    infected: usize,
    /// Uninfected node count for the expected-infection bound.
    #[arg(long, default_value_t = 1)]
    uninfected: usize,
    /// Print the per-cell choice probabilities instead of the summary.
    #[arg(long, conflicts_with = "enumerate")]
    cells: bool,
    /// Exact single-step distribution for these node roles, one letter per
    /// node: I infectious, S susceptible, R inert.
    #[arg(long, value_name = "ROLES")]
    enumerate: Option<String>,
    /// Transmission probability for --enumerate.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Preset(a) => Ok(preset(a)),
        Command::Oracle(a) => oracle(a),
        Command::Validate { file } => load_config(&file).map(|c| c.to_string()),
    };
    match result {
        Ok(out) => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let mut stdout = std::io::stdout().lock();
            match stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
            {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error: writing output: {e}");
                    3
                }
                _ => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Config(ConfigError::new(
            0,
            "config",
            format!("cannot read {}: {e}", path.display()),
        ))
    })?;
    parse_config(&text).map_err(|mut e| {
        e.message = format!("{} (in {})", e.message, path.display());
        Error::Config(e)
    })
}

fn run(a: RunArgs) -> Result<String, Error> {
    let mut config = match &a.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    let p = &mut config.params;
    if let Some(v) = a.n {
        p.n = v;
    }
    if let Some(v) = a.alpha {
        p.alpha = v;
    }
    if let Some(v) = a.kappa {
        p.kappa = v;
    }
    if let Some(v) = a.tau {
        p.tau = v;
    }
    if let Some(v) = a.beta {
        p.beta = v;
    }
    if let Some(v) = a.initial_infected {
        p.initial_infected = v;
    }
    if let Some(v) = a.max_steps {
        p.max_steps = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.replications {
        config.replications = v;
    }
    if !a.triggers.is_empty() {
        let parsed = a
            .triggers
            .iter()
            .map(|t| parse_trigger(0, t))
            .collect::<Result<Vec<_>, _>>()?;
        config.schedule = InterventionSchedule::new(parsed);
    }
    if let Some(v) = a.out_dir {
        config.out_dir = v;
    }
    config.log_cells |= a.log_cells;
    config.same_step_transmission |= a.same_step_transmission;
    config.validate()?;

    let mut options = RunOptions {
        parallel_movement: a.parallel_movement,
        ..RunOptions::default()
    };
    if let Some(w) = a.workers {
        options.workers = w.max(1);
    }
    let res = run_replications(&config, &options)?;
    let agg = &res.aggregate;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "replicates: {}, extinct: {}",
        agg.replicates, agg.extinct
    );
    if let Some(q) = &agg.extinction_step {
        let _ = writeln!(
            out,
            "extinction step: median {} (min {}, max {})",
            q.median, q.min, q.max
        );
    }
    if let Some(q) = &agg.ever_infected {
        let _ = writeln!(
            out,
            "ever infected: median {} (min {}, max {})",
            q.median, q.min, q.max
        );
    }
    if let Some(q) = &agg.survivor_fraction {
        let _ = writeln!(out, "survivor fraction: median {:.4}", q.median);
    }
    let _ = writeln!(out, "outputs: {}", config.out_dir.display());
    Ok(out)
}

fn preset(a: PresetArgs) -> String {
    let n = a.n as usize;
    match a.kind {
        PresetKind::Emerging => preset_emerging(n),
        PresetKind::Industrialized => preset_industrialized(n),
    }
    .to_string()
}

fn parse_roles(text: &str) -> Result<Vec<NodeRole>, Error> {
    text.chars()
        .map(|c| match c.to_ascii_uppercase() {
            'I' => Ok(NodeRole::Infectious),
            'S' | 'U' => Ok(NodeRole::Susceptible),
            'R' | '.' => Ok(NodeRole::Inert),
            other => Err(Error::Config(ConfigError::new(
                0,
                "enumerate",
                format!("unknown role '{other}'; use I, S or R"),
            ))),
        })
        .collect()
}

fn oracle(a: OracleArgs) -> Result<String, Error> {
    let grid = match a.n {
        Some(n) => {
            let params = epimove_core::EpidemicParams {
                n,
                alpha: a.alpha,
                kappa: a.kappa,
                ..Default::default()
            };
            params.validate()?;
            build_grid(&params, StreamKey::root(a.seed).role(StreamRole::Grid))?
        }
        None => CellGrid::from_weights(a.weights)?,
    };
    let mut out = String::new();
    if let Some(roles) = &a.enumerate {
        if !(0.0..=1.0).contains(&a.beta) {
            return Err(Error::Config(ConfigError::new(
                0,
                "beta",
                "must lie in [0, 1]",
            )));
        }
        let pmf = enumerate_step(&grid, &parse_roles(roles)?, a.beta)?;
        out.push_str("new_infections,probability\n");
        for (k, p) in pmf.iter().enumerate() {
            let _ = writeln!(out, "{k},{p}");
        }
    } else if a.cells {
        out.push_str("cell,attractiveness,choice_prob\n");
        for (v, d) in grid.attractiveness().iter().enumerate() {
            let _ = writeln!(out, "{v},{d},{}", grid.choice_probability(v));
        }
    } else {
        let q = exact_quantities(&grid, a.infected, a.uninfected);
        out.push_str("quantity,value\n");
        let _ = writeln!(out, "cells,{}", grid.num_cells());
        let _ = writeln!(out, "total_weight,{}", grid.total_weight());
        let _ = writeln!(out, "max_attractiveness,{}", grid.max_attractiveness());
        let _ = writeln!(out, "pair_meet_prob,{}", q.pair_meet_prob);
        let _ = writeln!(out, "infected,{}", a.infected);
        let _ = writeln!(out, "uninfected,{}", a.uninfected);
        let _ = writeln!(
            out,
            "expected_new_infections_bound,{}",
            q.expected_new_infections_bound
        );
    }
    Ok(out)
}
