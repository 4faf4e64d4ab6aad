//! Epidemic spreading among nodes that relocate every step over cells of
//! power-law distributed attractiveness.
//!
//! The crate is organized around the simulation pipeline:
//! [`attractiveness`] builds the cell grid, [`dynamics`] advances a
//! population one step at a time, [`scenario`] holds presets, interventions
//! and config parsing, [`metrics`] records traces, [`oracle`] computes exact
//! reference quantities on small or realized instances, and [`harness`] runs
//! seeded replications and writes their outputs.

pub mod alias;
pub mod attractiveness;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scenario;

pub use attractiveness::{build_grid, power_law_pmf, CellGrid, EpidemicParams};
pub use dynamics::{NodeStatus, PopulationState, StepReport};
pub use error::{ConfigError, Error, OracleError, ParamError, Result};
pub use harness::{run_replications, RunOptions, RunResult};
pub use metrics::{Extinction, SimulationTrace};
pub use scenario::{parse_config, preset_emerging, preset_industrialized, ScenarioConfig};
