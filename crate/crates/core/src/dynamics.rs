//! Per-step epidemic state machine.
//!
//! Step `j` runs three substeps in order:
//! 1. every node (recovered ones included) draws a new cell;
//! 2. every node infected before step `j` exposes the uninfected nodes in its
//!    cell, each exposure succeeding independently with probability `beta`;
//! 3. nodes whose infection is `tau` steps old are retired to `Recovered`.
//!
//! A node infected in step `j` therefore transmits in steps `j+1 ..= j+tau`.

use rand::seq::index;
use rayon::prelude::*;

use crate::attractiveness::{CellGrid, EpidemicParams};
use crate::error::ParamError;
use crate::rng::{unit_f64, StreamKey, StreamRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Uninfected,
    Infected { infected_at: u32 },
    Recovered,
}

impl NodeStatus {
    pub fn is_infected(self) -> bool {
        matches!(self, NodeStatus::Infected { .. })
    }
}

#[derive(Debug, Clone)]
pub struct PopulationState {
    status: Vec<NodeStatus>,
    cell: Vec<u32>,
    step: u32,
    infected: Vec<u32>,
    uninfected: usize,
    recovered: usize,
    // Infectious nodes per cell; all zero between substeps.
    load: Vec<u32>,
}

impl PopulationState {
    /// State from explicit statuses, as of the end of step `step`. Cell
    /// assignments are meaningless until the first movement substep.
    pub fn from_statuses(status: Vec<NodeStatus>, step: u32) -> Self {
        let infected = status
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_infected())
            .map(|(i, _)| i as u32)
            .collect();
        let uninfected = status
            .iter()
            .filter(|s| **s == NodeStatus::Uninfected)
            .count();
        let recovered = status
            .iter()
            .filter(|s| **s == NodeStatus::Recovered)
            .count();
        let n = status.len();
        PopulationState {
            status,
            cell: vec![0; n],
            step,
            infected,
            uninfected,
            recovered,
            load: Vec::new(),
        }
    }

    /// Replaces every status in place, keeping allocated buffers. `status`
    /// must have the same length as the current population.
    pub fn reset(&mut self, status: &[NodeStatus], step: u32) {
        assert_eq!(status.len(), self.status.len(), "population size changed");
        self.status.copy_from_slice(status);
        self.infected.clear();
        self.infected.extend(
            status
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_infected())
                .map(|(i, _)| i as u32),
        );
        self.uninfected = status
            .iter()
            .filter(|s| **s == NodeStatus::Uninfected)
            .count();
        self.recovered = status
            .iter()
            .filter(|s| **s == NodeStatus::Recovered)
            .count();
        self.step = step;
    }

    pub fn n(&self) -> usize {
        self.status.len()
    }

    /// Last completed step; 0 before the first step.
    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn status(&self) -> &[NodeStatus] {
        &self.status
    }

    pub fn cells(&self) -> &[u32] {
        &self.cell
    }

    pub fn infected_count(&self) -> usize {
        self.infected.len()
    }

    pub fn uninfected_count(&self) -> usize {
        self.uninfected
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered
    }

    pub fn ever_infected(&self) -> usize {
        self.n() - self.uninfected
    }

    fn infect(&mut self, node: u32, at: u32) {
        debug_assert_eq!(self.status[node as usize], NodeStatus::Uninfected);
        self.status[node as usize] = NodeStatus::Infected { infected_at: at };
        self.infected.push(node);
        self.uninfected -= 1;
    }
}

/// Replicate-level keys for the per-step movement and transmission draws.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsStreams {
    movement: StreamKey,
    transmission: StreamKey,
}

impl DynamicsStreams {
    pub fn new(replicate: StreamKey) -> Self {
        DynamicsStreams {
            movement: replicate.role(StreamRole::Movement),
            transmission: replicate.role(StreamRole::Transmission),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DynamicsOptions {
    /// Let nodes infected in step `j` transmit within step `j` as well.
    pub same_step_transmission: bool,
    /// Draw movement in parallel. Results are identical either way.
    pub parallel_movement: bool,
    /// Attach the cell assignment and pre-transmission statuses to each report.
    pub log_cells: bool,
}

/// Snapshot taken after movement and before transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLog {
    pub step: u32,
    pub cells: Vec<u32>,
    pub status_before: Vec<NodeStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u32,
    pub new_infections_total: u64,
    /// Entry `k` counts infections that happened in cells of group `G_k`
    /// (attractiveness in `[2^k, 2^(k+1) - 1]`).
    pub new_infections_by_group: Vec<u64>,
    pub newly_recovered: u64,
    pub occupancy_checksum: u64,
    pub log: Option<CellLog>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmitOutcome {
    pub total: u64,
    pub by_group: Vec<u64>,
}

pub fn init_population(
    params: &EpidemicParams,
    stream: StreamKey,
) -> Result<PopulationState, ParamError> {
    params.validate()?;
    let mut status = vec![NodeStatus::Uninfected; params.n];
    let mut rng = stream.rng();
    let mut chosen = index::sample(&mut rng, params.n, params.initial_infected).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        status[i] = NodeStatus::Infected { infected_at: 0 };
    }
    Ok(PopulationState::from_statuses(status, 0))
}

/// Redraws every node's cell for the step in progress.
pub fn substep_move(
    state: &mut PopulationState,
    grid: &CellGrid,
    streams: &DynamicsStreams,
    parallel: bool,
) {
    let key = streams.movement.child((state.step + 1) as u64);
    let place = |(i, c): (usize, &mut u32)| *c = grid.choose_cell(key.draw(i as u64)) as u32;
    if parallel {
        state
            .cell
            .par_iter_mut()
            .with_min_len(4096)
            .enumerate()
            .for_each(place);
    } else {
        state.cell.iter_mut().enumerate().for_each(place);
    }
}

fn group_of(d: u32) -> usize {
    d.max(1).ilog2() as usize
}

/// Uninfected nodes that catch the infection from `sources` (already placed).
/// Does not change any status.
fn expose(state: &mut PopulationState, beta: f64, key: StreamKey, sources: &[u32]) -> Vec<u32> {
    if sources.is_empty() || beta <= 0.0 {
        return Vec::new();
    }
    for &s in sources {
        state.load[state.cell[s as usize] as usize] += 1;
    }
    let mut caught = Vec::new();
    for (i, (&st, &c)) in state.status.iter().zip(&state.cell).enumerate() {
        if st != NodeStatus::Uninfected {
            continue;
        }
        let m = state.load[c as usize];
        if m == 0 {
            continue;
        }
        let hit = beta >= 1.0 || {
            let p = 1.0 - (1.0 - beta).powi(m as i32);
            unit_f64(key.draw(i as u64)) < p
        };
        if hit {
            caught.push(i as u32);
        }
    }
    for &s in sources {
        state.load[state.cell[s as usize] as usize] = 0;
    }
    caught
}

/// Resolves exposures for the step in progress. Only nodes infected in an
/// earlier step act as sources unless `same_step` is set.
pub fn substep_transmit(
    state: &mut PopulationState,
    grid: &CellGrid,
    beta: f64,
    streams: &DynamicsStreams,
    same_step: bool,
) -> TransmitOutcome {
    let j = state.step + 1;
    if state.load.len() != grid.num_cells() {
        state.load = vec![0; grid.num_cells()];
    }
    let mut by_group = vec![0u64; group_of(grid.max_attractiveness()) + 1];
    let key = streams.transmission.child(j as u64);

    let mut sources: Vec<u32> = state
        .infected
        .iter()
        .copied()
        .filter(|&i| matches!(state.status[i as usize], NodeStatus::Infected { infected_at } if infected_at < j))
        .collect();
    let mut total = 0;
    let mut round = 0u64;
    loop {
        let round_key = if round == 0 { key } else { key.child(round) };
        let caught = expose(state, beta, round_key, &sources);
        for &i in &caught {
            let d = grid.attractiveness()[state.cell[i as usize] as usize];
            let g = group_of(d);
            if g >= by_group.len() {
                by_group.resize(g + 1, 0);
            }
            by_group[g] += 1;
            state.infect(i, j);
        }
        total += caught.len() as u64;
        if !same_step || caught.is_empty() {
            break;
        }
        sources = caught;
        round += 1;
    }
    TransmitOutcome { total, by_group }
}

/// Retires every node infected at least `tau` steps before the step in progress.
pub fn substep_recover(state: &mut PopulationState, tau: u32) -> u64 {
    let j = state.step + 1;
    let mut retired = 0;
    let status = &mut state.status;
    state.infected.retain(|&i| match status[i as usize] {
        NodeStatus::Infected { infected_at } if j >= infected_at.saturating_add(tau) => {
            status[i as usize] = NodeStatus::Recovered;
            retired += 1;
            false
        }
        _ => true,
    });
    state.recovered += retired as usize;
    retired
}

/// One full step: move, transmit, recover. `params` supplies `tau` and `beta`.
pub fn step(
    state: &mut PopulationState,
    grid: &CellGrid,
    params: &EpidemicParams,
    streams: &DynamicsStreams,
    options: &DynamicsOptions,
) -> StepReport {
    substep_move(state, grid, streams, options.parallel_movement);
    let log = options.log_cells.then(|| CellLog {
        step: state.step + 1,
        cells: state.cell.clone(),
        status_before: state.status.clone(),
    });
    let occupancy_checksum = state
        .cell
        .iter()
        .filter(|&&c| (c as usize) < grid.num_cells())
        .count() as u64;
    let outcome = substep_transmit(
        state,
        grid,
        params.beta,
        streams,
        options.same_step_transmission,
    );
    let newly_recovered = substep_recover(state, params.tau);
    state.step += 1;
    StepReport {
        step: state.step,
        new_infections_total: outcome.total,
        new_infections_by_group: outcome.by_group,
        newly_recovered,
        occupancy_checksum,
        log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn streams(seed: u64) -> DynamicsStreams {
        DynamicsStreams::new(StreamKey::root(seed))
    }

    fn params(tau: u32, beta: f64) -> EpidemicParams {
        EpidemicParams {
            tau,
            beta,
            ..Default::default()
        }
    }

    fn counts_ok(s: &PopulationState) -> bool {
        s.infected_count() + s.uninfected_count() + s.recovered_count() == s.n()
    }

    #[test]
    fn init_all_infected() {
        let p = EpidemicParams {
            n: 5,
            initial_infected: 5,
            kappa: 4.0,
            alpha: 2.1,
            ..Default::default()
        };
        let s = init_population(&p, StreamKey::root(1)).unwrap();
        assert_eq!(s.infected_count(), 5);
        assert!(s
            .status()
            .iter()
            .all(|st| *st == NodeStatus::Infected { infected_at: 0 }));
    }

    #[test]
    fn init_rejects_zero_infected() {
        let p = EpidemicParams {
            n: 5,
            initial_infected: 0,
            kappa: 4.0,
            alpha: 2.1,
            ..Default::default()
        };
        assert_eq!(
            init_population(&p, StreamKey::root(1)).unwrap_err(),
            ParamError::NoInitialInfected
        );
    }

    #[test]
    fn init_is_reproducible() {
        let p = EpidemicParams {
            n: 10_000,
            initial_infected: 10,
            ..Default::default()
        };
        let a = init_population(&p, StreamKey::root(9)).unwrap();
        let b = init_population(&p, StreamKey::root(9)).unwrap();
        assert_eq!(a.status(), b.status());
        assert_eq!(a.infected_count(), 10);
    }

    #[test]
    fn single_cell_colocates_everyone() {
        let grid = CellGrid::from_weights(vec![3]).unwrap();
        let mut s = PopulationState::from_statuses(vec![NodeStatus::Uninfected; 50], 0);
        let before = s.status().to_vec();
        substep_move(&mut s, &grid, &streams(1), false);
        assert!(s.cells().iter().all(|&c| c == 0));
        assert_eq!(s.status(), &before[..]);
    }

    #[test]
    fn parallel_and_serial_movement_agree() {
        let grid = CellGrid::from_weights((2..200).collect()).unwrap();
        let mut a = PopulationState::from_statuses(vec![NodeStatus::Uninfected; 100_000], 4);
        let mut b = a.clone();
        substep_move(&mut a, &grid, &streams(2), false);
        substep_move(&mut b, &grid, &streams(2), true);
        assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn no_sources_no_infections() {
        let grid = CellGrid::from_weights(vec![2]).unwrap();
        let mut s = PopulationState::from_statuses(vec![NodeStatus::Uninfected; 10], 0);
        substep_move(&mut s, &grid, &streams(1), false);
        let out = substep_transmit(&mut s, &grid, 1.0, &streams(1), false);
        assert_eq!(out.total, 0);
    }

    #[test]
    fn certain_transmission_in_shared_cell() {
        let grid = CellGrid::from_weights(vec![2]).unwrap();
        let mut st = vec![NodeStatus::Uninfected; 8];
        st[0] = NodeStatus::Infected { infected_at: 0 };
        let mut s = PopulationState::from_statuses(st, 0);
        substep_move(&mut s, &grid, &streams(1), false);
        let out = substep_transmit(&mut s, &grid, 1.0, &streams(1), false);
        assert_eq!(out.total, 7);
        assert_eq!(out.by_group, vec![0, 7]);
    }

    #[test]
    fn partial_transmission_matches_binomial() {
        // 2 infectious + 1000 uninfected in one cell, beta 0.3.
        let grid = CellGrid::from_weights(vec![2]).unwrap();
        let mut st = vec![NodeStatus::Uninfected; 1002];
        st[0] = NodeStatus::Infected { infected_at: 0 };
        st[1] = NodeStatus::Infected { infected_at: 0 };
        let mut s = PopulationState::from_statuses(st, 0);
        substep_move(&mut s, &grid, &streams(3), false);
        let out = substep_transmit(&mut s, &grid, 0.3, &streams(3), false);
        let p = 1.0 - 0.7f64 * 0.7;
        let mean = 1000.0 * p;
        let sd = (1000.0 * p * (1.0 - p)).sqrt();
        assert!(
            (out.total as f64 - mean).abs() < 3.0 * sd,
            "{} vs {mean}",
            out.total
        );
    }

    #[test]
    fn fresh_infections_do_not_transmit_same_step() {
        let grid = CellGrid::from_weights(vec![2]).unwrap();
        let st = vec![
            NodeStatus::Infected { infected_at: 1 },
            NodeStatus::Uninfected,
            NodeStatus::Uninfected,
        ];
        // Step in progress is 1, so node 0 is not yet infectious.
        let mut s = PopulationState::from_statuses(st, 0);
        substep_move(&mut s, &grid, &streams(1), false);
        assert_eq!(
            substep_transmit(&mut s, &grid, 1.0, &streams(1), false).total,
            0
        );
    }

    #[test]
    fn same_step_chaining_spreads_further() {
        // With beta < 1 chaining can only add infections.
        let grid = CellGrid::from_weights(vec![2]).unwrap();
        let mut st = vec![NodeStatus::Uninfected; 400];
        st[0] = NodeStatus::Infected { infected_at: 0 };
        let base = PopulationState::from_statuses(st, 0);
        let mut a = base.clone();
        let mut b = base;
        substep_move(&mut a, &grid, &streams(4), false);
        substep_move(&mut b, &grid, &streams(4), false);
        let plain = substep_transmit(&mut a, &grid, 0.05, &streams(4), false).total;
        let chained = substep_transmit(&mut b, &grid, 0.05, &streams(4), true).total;
        assert!(chained > plain, "{chained} <= {plain}");
        assert!(counts_ok(&b));
    }

    #[test]
    fn recovery_timing() {
        // tau = 2, infected at step 5: infectious in 6 and 7, recovered at end of 7.
        let grid = CellGrid::from_weights(vec![2, 2, 2]).unwrap();
        let p = params(2, 0.0);
        let st = vec![
            NodeStatus::Infected { infected_at: 5 },
            NodeStatus::Uninfected,
        ];
        let mut s = PopulationState::from_statuses(st, 5);
        let opts = DynamicsOptions::default();
        let r6 = step(&mut s, &grid, &p, &streams(1), &opts);
        assert_eq!((r6.step, r6.newly_recovered), (6, 0));
        let r7 = step(&mut s, &grid, &p, &streams(1), &opts);
        assert_eq!((r7.step, r7.newly_recovered), (7, 1));
        assert_eq!(s.status()[0], NodeStatus::Recovered);
    }

    #[test]
    fn no_retirement_when_nothing_is_due() {
        let st = vec![
            NodeStatus::Infected { infected_at: 3 },
            NodeStatus::Recovered,
        ];
        let mut s = PopulationState::from_statuses(st, 3);
        assert_eq!(substep_recover(&mut s, 2), 0);
    }

    #[test]
    fn huge_tau_never_recovers() {
        let grid = CellGrid::from_weights(vec![2; 10]).unwrap();
        let p = EpidemicParams {
            n: 20,
            tau: 1000,
            ..Default::default()
        };
        let mut st = vec![NodeStatus::Uninfected; 20];
        st[0] = NodeStatus::Infected { infected_at: 0 };
        let mut s = PopulationState::from_statuses(st, 0);
        for _ in 0..200 {
            let r = step(&mut s, &grid, &p, &streams(8), &DynamicsOptions::default());
            assert_eq!(r.newly_recovered, 0);
        }
        assert_eq!(s.recovered_count(), 0);
    }

    #[test]
    fn extinct_state_is_absorbing() {
        let grid = CellGrid::from_weights(vec![2, 3]).unwrap();
        let st = vec![
            NodeStatus::Uninfected,
            NodeStatus::Recovered,
            NodeStatus::Uninfected,
        ];
        let mut s = PopulationState::from_statuses(st, 0);
        let r = step(
            &mut s,
            &grid,
            &params(2, 1.0),
            &streams(1),
            &DynamicsOptions::default(),
        );
        assert_eq!(r.new_infections_total, 0);
        assert_eq!(r.newly_recovered, 0);
        assert_eq!(r.occupancy_checksum, 3);
    }

    #[test]
    fn pair_meets_one_time_in_three() {
        // 1 infectious + 1 uninfected on 3 equal cells: P(infection) = 1/3.
        let grid = CellGrid::from_weights(vec![2, 2, 2]).unwrap();
        let p = params(5, 1.0);
        let trials = 60_000u64;
        let mut hits = 0;
        for t in 0..trials {
            let st = vec![
                NodeStatus::Infected { infected_at: 0 },
                NodeStatus::Uninfected,
            ];
            let mut s = PopulationState::from_statuses(st, 0);
            let streams = DynamicsStreams::new(StreamKey::root(77).child(t));
            hits +=
                step(&mut s, &grid, &p, &streams, &DynamicsOptions::default()).new_infections_total;
        }
        let f = hits as f64 / trials as f64;
        let se = (2.0 / 9.0 / trials as f64).sqrt();
        assert!((f - 1.0 / 3.0).abs() < 3.0 * se, "{f}");
    }

    #[test]
    fn bookkeeping_identity_holds() {
        let grid = CellGrid::from_weights(vec![2, 2, 3, 5, 8]).unwrap();
        let p = params(3, 0.6);
        let mut st = vec![NodeStatus::Uninfected; 60];
        st[0] = NodeStatus::Infected { infected_at: 0 };
        st[1] = NodeStatus::Infected { infected_at: 0 };
        let mut s = PopulationState::from_statuses(st, 0);
        for _ in 0..40 {
            let before = s.infected_count() as i64;
            let r = step(&mut s, &grid, &p, &streams(12), &DynamicsOptions::default());
            let after = s.infected_count() as i64;
            assert_eq!(
                after - before,
                r.new_infections_total as i64 - r.newly_recovered as i64
            );
            assert_eq!(
                r.new_infections_by_group.iter().sum::<u64>(),
                r.new_infections_total
            );
            assert!(counts_ok(&s));
        }
    }
}
