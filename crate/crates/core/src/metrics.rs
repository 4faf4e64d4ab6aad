//! Per-step traces, attractiveness-group statistics, and run outcomes.

use std::io::{self, Write};

use crate::dynamics::{CellLog, PopulationState, StepReport};
use crate::error::ParamError;

/// Group `k` holds cells with attractiveness in `[2^k, 2^(k+1) - 1]`.
pub fn group_index(d: u32) -> Result<usize, ParamError> {
    if d < 2 {
        return Err(ParamError::AttractivenessBelowTwo(d));
    }
    Ok(d.ilog2() as usize)
}

/// Number of groups `G_1 ..= G_K` a grid with this cutoff can populate.
pub fn num_groups(max_attractiveness: u32) -> usize {
    max_attractiveness.max(1).ilog2() as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub step: u32,
    pub infected: usize,
    pub uninfected: usize,
    pub recovered: usize,
    pub new_total: u64,
    /// Entry `k - 1` is the count for group `G_k`.
    pub new_by_group: Vec<u64>,
    pub newly_recovered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extinction {
    At(u32),
    CapReached,
}

impl Extinction {
    pub fn step(self) -> Option<u32> {
        match self {
            Extinction::At(s) => Some(s),
            Extinction::CapReached => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub extinction: Extinction,
    pub ever_infected: usize,
    pub survivors: usize,
}

/// An intervention that fired before step `step + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterventionEvent {
    pub step: u32,
    pub trigger: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub num_groups: usize,
    pub records: Vec<StepRecord>,
    pub outcome: Option<Outcome>,
    pub interventions: Vec<InterventionEvent>,
    pub cell_log: Vec<CellLog>,
}

impl SimulationTrace {
    /// Starts a trace with the step-0 record of `state`.
    pub fn new(state: &PopulationState, num_groups: usize) -> Self {
        let first = StepRecord {
            step: state.step(),
            infected: state.infected_count(),
            uninfected: state.uninfected_count(),
            recovered: state.recovered_count(),
            new_total: 0,
            new_by_group: vec![0; num_groups],
            newly_recovered: 0,
        };
        SimulationTrace {
            n: state.n(),
            num_groups,
            records: vec![first],
            outcome: None,
            interventions: Vec::new(),
            cell_log: Vec::new(),
        }
    }

    pub fn record(&mut self, report: StepReport, state: &PopulationState) {
        let mut new_by_group = vec![0; self.num_groups];
        for (k, &c) in report.new_infections_by_group.iter().enumerate().skip(1) {
            if c > 0 {
                assert!(
                    k <= self.num_groups,
                    "infection in group {k} beyond trace width {}",
                    self.num_groups
                );
                new_by_group[k - 1] = c;
            }
        }
        self.records.push(StepRecord {
            step: report.step,
            infected: state.infected_count(),
            uninfected: state.uninfected_count(),
            recovered: state.recovered_count(),
            new_total: report.new_infections_total,
            new_by_group,
            newly_recovered: report.newly_recovered,
        });
        if let Some(log) = report.log {
            self.cell_log.push(log);
        }
    }

    pub fn finish(&mut self, state: &PopulationState) {
        let extinction = if state.infected_count() == 0 {
            Extinction::At(state.step())
        } else {
            Extinction::CapReached
        };
        self.outcome = Some(Outcome {
            extinction,
            ever_infected: state.ever_infected(),
            survivors: state.uninfected_count(),
        });
    }

    pub fn last(&self) -> &StepRecord {
        self.records
            .last()
            .expect("trace always holds the initial record")
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("step,I,U,R,new_total");
        for k in 1..=self.num_groups {
            h.push_str(&format!(",new_g{k}"));
        }
        h.push_str(",recovered");
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{}",
                r.step, r.infected, r.uninfected, r.recovered, r.new_total
            )?;
            for c in &r.new_by_group {
                write!(out, ",{c}")?;
            }
            writeln!(out, ",{}", r.newly_recovered)?;
        }
        Ok(())
    }

    pub fn write_cell_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        use crate::dynamics::NodeStatus;
        writeln!(out, "step,node,cell,status")?;
        for log in &self.cell_log {
            for (node, (cell, st)) in log.cells.iter().zip(&log.status_before).enumerate() {
                let tag = match st {
                    NodeStatus::Uninfected => "U",
                    NodeStatus::Infected { .. } => "I",
                    NodeStatus::Recovered => "R",
                };
                writeln!(out, "{},{node},{cell},{tag}", log.step)?;
            }
        }
        Ok(())
    }
}

/// `|U| / n` at the end of the run, falling back to the last record.
pub fn survivor_fraction(trace: &SimulationTrace) -> f64 {
    let survivors = match trace.outcome {
        Some(o) => o.survivors,
        None => trace.last().uninfected,
    };
    survivors as f64 / trace.n as f64
}

/// First step with no infected node.
pub fn extinction_time(trace: &SimulationTrace) -> Extinction {
    trace
        .records
        .iter()
        .find(|r| r.infected == 0)
        .map(|r| Extinction::At(r.step))
        .unwrap_or(Extinction::CapReached)
}

/// `(|I| at super-step start, |I| at super-step end)` for consecutive blocks of
/// `sigma` steps. A final partial block ends at the last record.
pub fn prevalence_walk(trace: &SimulationTrace, sigma: u32) -> Vec<(usize, usize)> {
    let sigma = sigma.max(1) as usize;
    let last = trace.records.len() - 1;
    let mut walk = Vec::new();
    let mut start = 0;
    while start < last {
        let end = (start + sigma).min(last);
        walk.push((trace.records[start].infected, trace.records[end].infected));
        start = end;
    }
    walk
}

/// Share of super-steps whose prevalence strictly shrank.
pub fn contraction_fraction(walk: &[(usize, usize)]) -> f64 {
    if walk.is_empty() {
        return 0.0;
    }
    walk.iter().filter(|(a, b)| b < a).count() as f64 / walk.len() as f64
}
