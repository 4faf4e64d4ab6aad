//! Seeded Monte Carlo replications and their on-disk outputs.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! manifest.json            config snapshot, seeds, engine version, wall clock
//! summary.csv              replicate,seed,extinction_step,ever_infected,survivors
//! aggregate.json           mean and quantiles across replicates
//! replicate_0000.csv       per-step trace
//! replicate_0000_cells.csv per-step cell assignment (only with log_cells)
//! ```
//!
//! Every file except the wall-clock fields of `manifest.json` is a pure
//! function of the config, whatever the worker count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::attractiveness::build_grid;
use crate::dynamics::{self, init_population, DynamicsOptions, DynamicsStreams};
use crate::error::{Error, ParamError, Result};
use crate::metrics::{num_groups, Extinction, InterventionEvent, SimulationTrace};
use crate::rng::{replicate_seed, StreamKey, StreamRole};
use crate::scenario::{apply_intervention, ScenarioConfig};

pub const ENGINE_VERSION: &str = concat!("epimove-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Parallelize movement inside each step as well as across replicates.
    pub parallel_movement: bool,
    /// Write files to the config's `out_dir`.
    pub write_outputs: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            parallel_movement: false,
            write_outputs: true,
        }
    }
}

/// Trace width: enough group columns for the base grid and every overlay grid.
fn trace_groups(config: &ScenarioConfig) -> usize {
    let base = &config.params;
    config
        .schedule
        .triggers()
        .iter()
        .map(|t| t.overlay.resolve(base).max_attractiveness())
        .chain(std::iter::once(base.max_attractiveness()))
        .map(num_groups)
        .max()
        .unwrap_or(0)
}

/// One replicate: grid draw, initial infection, then steps until extinction
/// or `max_steps`. Triggers are checked before each step.
pub fn simulate_replicate(
    config: &ScenarioConfig,
    seed: u64,
    parallel_movement: bool,
) -> Result<SimulationTrace, ParamError> {
    let root = StreamKey::from_raw(seed);
    let grid_key = root.role(StreamRole::Grid);
    let mut params = config.params.clone();
    let mut grid = build_grid(&params, grid_key)?;
    let mut state = init_population(&params, root.role(StreamRole::Init))?;
    let streams = DynamicsStreams::new(root);
    let options = DynamicsOptions {
        same_step_transmission: config.same_step_transmission,
        parallel_movement,
        log_cells: config.log_cells,
    };
    let triggers = config.schedule.triggers();
    let mut fired = vec![false; triggers.len()];
    let mut rebuilds = 0u64;

    let mut trace = SimulationTrace::new(&state, trace_groups(config));
    loop {
        if state.infected_count() == 0 || state.step() >= config.params.max_steps {
            break;
        }
        for (i, t) in triggers.iter().enumerate() {
            if !fired[i]
                && t.condition
                    .is_met(state.step(), state.infected_count(), state.n())
            {
                fired[i] = true;
                rebuilds += 1;
                let (g, p) =
                    apply_intervention(&config.params, &t.overlay, grid_key.child(rebuilds))?;
                grid = g;
                params = p;
                trace.interventions.push(InterventionEvent {
                    step: state.step(),
                    trigger: i,
                });
            }
        }
        let report = dynamics::step(&mut state, &grid, &params, &streams, &options);
        trace.record(report, &state);
    }
    trace.finish(&state);
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub master_seed: u64,
    pub replications: usize,
    pub config: String,
    pub replicate_seeds: Vec<u64>,
    pub started_unix_ms: Option<u128>,
    pub finished_unix_ms: Option<u128>,
}

impl RunManifest {
    pub fn new(config: &ScenarioConfig) -> Self {
        RunManifest {
            engine_version: ENGINE_VERSION.to_string(),
            master_seed: config.seed,
            replications: config.replications,
            config: config.to_string(),
            replicate_seeds: (0..config.replications as u64)
                .map(|r| replicate_seed(config.seed, r))
                .collect(),
            started_unix_ms: None,
            finished_unix_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SummaryRow {
    pub replicate: usize,
    pub seed: u64,
    pub extinction: Extinction,
    pub ever_infected: usize,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replicates: usize,
    pub extinct: usize,
    /// Over replicates that went extinct.
    pub extinction_step: Option<Quantiles>,
    pub survivor_fraction: Option<Quantiles>,
    pub ever_infected: Option<Quantiles>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub rows: Vec<SummaryRow>,
    pub traces: Vec<SimulationTrace>,
    pub aggregate: Aggregate,
}

/// Linear interpolation between closest ranks (Hyndman-Fan type 7) on
/// ascending `sorted` data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quantiles {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        min: v[0],
        q05: quantile(&v, 0.05),
        q25: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q75: quantile(&v, 0.75),
        q95: quantile(&v, 0.95),
        max: v[v.len() - 1],
    })
}

pub fn aggregate(rows: &[SummaryRow], n: usize) -> Aggregate {
    let ext: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.extinction.step())
        .map(f64::from)
        .collect();
    let surv: Vec<f64> = rows.iter().map(|r| r.survivors as f64 / n as f64).collect();
    let ever: Vec<f64> = rows.iter().map(|r| r.ever_infected as f64).collect();
    Aggregate {
        replicates: rows.len(),
        extinct: ext.len(),
        extinction_step: summarize(&ext),
        survivor_fraction: summarize(&surv),
        ever_infected: summarize(&ever),
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn replicate_path(out_dir: &Path, replicate: usize) -> PathBuf {
    out_dir.join(format!("replicate_{replicate:04}.csv"))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "replicate,seed,extinction_step,ever_infected,survivors"
    )?;
    for r in rows {
        let ext = match r.extinction {
            Extinction::At(s) => s.to_string(),
            Extinction::CapReached => "cap".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            r.replicate, r.seed, ext, r.ever_infected, r.survivors
        )?;
    }
    Ok(())
}

/// Runs every replicate of `config` on a pool of `options.workers` threads.
pub fn run_replications(config: &ScenarioConfig, options: &RunOptions) -> Result<RunResult> {
    config.validate()?;
    let mut manifest = RunManifest::new(config);
    manifest.started_unix_ms = Some(unix_ms());
    let out_dir = options.write_outputs.then(|| config.out_dir.clone());
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .expect("thread pool construction");
    let seeds = manifest.replicate_seeds.clone();
    let traces: Vec<SimulationTrace> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(r, &seed)| -> Result<SimulationTrace> {
                let trace = simulate_replicate(config, seed, options.parallel_movement)?;
                if let Some(dir) = &out_dir {
                    write_file(&replicate_path(dir, r), |w| trace.write_csv(w))?;
                    if config.log_cells {
                        let path = dir.join(format!("replicate_{r:04}_cells.csv"));
                        write_file(&path, |w| trace.write_cell_log(w))?;
                    }
                }
                Ok(trace)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rows: Vec<SummaryRow> = traces
        .iter()
        .zip(&seeds)
        .enumerate()
        .map(|(r, (t, &seed))| {
            let o = t.outcome.expect("finished trace");
            SummaryRow {
                replicate: r,
                seed,
                extinction: o.extinction,
                ever_infected: o.ever_infected,
                survivors: o.survivors,
            }
        })
        .collect();
    let aggregate = aggregate(&rows, config.params.n);
    manifest.finished_unix_ms = Some(unix_ms());

    if let Some(dir) = &out_dir {
        write_file(&dir.join("summary.csv"), |w| write_summary_csv(&rows, w))?;
        write_file(&dir.join("aggregate.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &aggregate)?;
            writeln!(w)
        })?;
        write_file(&dir.join("manifest.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            writeln!(w)
        })?;
    }

    Ok(RunResult {
        manifest,
        rows,
        traces,
        aggregate,
    })
}
