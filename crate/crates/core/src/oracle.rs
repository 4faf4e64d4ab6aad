//! Exact reference quantities on realized grids.
//!
//! Everything here is computed by direct summation or exhaustive enumeration
//! and shares no sampling code with the engine, except
//! [`sparse_contact_check`], which deliberately drives the engine and sets the
//! observed frequency next to the exact bound.

use crate::attractiveness::{CellGrid, EpidemicParams};
use crate::dynamics::{self, DynamicsOptions, DynamicsStreams, NodeStatus, PopulationState};
use crate::error::OracleError;
use crate::rng::{StreamKey, StreamRole};

/// Largest node count and cell count [`enumerate_step`] accepts.
pub const ENUMERATION_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactQuantities {
    /// Probability that two independent nodes pick the same cell.
    pub pair_meet_prob: f64,
    /// Union bound on expected new infections, `|U| |I| pair_meet_prob`.
    pub expected_new_infections_bound: f64,
    pub per_cell_choice_prob: Vec<f64>,
}

pub fn exact_quantities(grid: &CellGrid, infected: usize, uninfected: usize) -> ExactQuantities {
    ExactQuantities {
        pair_meet_prob: exact_meeting_probability(grid),
        expected_new_infections_bound: expected_new_infections_bound(grid, infected, uninfected),
        per_cell_choice_prob: (0..grid.num_cells())
            .map(|v| grid.choice_probability(v))
            .collect(),
    }
}

/// `sum_v (d_v / W)^2`.
pub fn exact_meeting_probability(grid: &CellGrid) -> f64 {
    let w = grid.total_weight() as f64;
    grid.attractiveness()
        .iter()
        .map(|&d| {
            let p = d as f64 / w;
            p * p
        })
        .sum()
}

/// `mu = |U| |I| sum_v (d_v / W)^2`.
pub fn expected_new_infections_bound(grid: &CellGrid, infected: usize, uninfected: usize) -> f64 {
    uninfected as f64 * infected as f64 * exact_meeting_probability(grid)
}

/// Role of a node in a single enumerated step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Infectious,
    Susceptible,
    /// Occupies a cell but neither transmits nor catches anything.
    Inert,
}

/// Exact distribution of the number of new infections in one step.
///
/// Walks all `cells^nodes` placements, weights each by the product of the
/// nodes' choice probabilities, and within a placement convolves the per-cell
/// binomial outcomes (`u_v` susceptible nodes, each caught with probability
/// `1 - (1 - beta)^{m_v}` given `m_v` infectious nodes). Entry `k` of the
/// result is `P(k new infections)`.
pub fn enumerate_step(
    grid: &CellGrid,
    roles: &[NodeRole],
    beta: f64,
) -> Result<Vec<f64>, OracleError> {
    let cells = grid.num_cells();
    let nodes = roles.len();
    if nodes > ENUMERATION_LIMIT || cells > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge { nodes, cells });
    }
    let susceptible = roles
        .iter()
        .filter(|r| **r == NodeRole::Susceptible)
        .count();
    let probs: Vec<f64> = (0..cells).map(|v| grid.choice_probability(v)).collect();
    let mut pmf = vec![0.0; susceptible + 1];

    let mut placement = vec![0usize; nodes];
    let mut infectious_in = vec![0u32; cells];
    let mut susceptible_in = vec![0usize; cells];
    loop {
        infectious_in.iter_mut().for_each(|c| *c = 0);
        susceptible_in.iter_mut().for_each(|c| *c = 0);
        let mut weight = 1.0;
        for (role, &v) in roles.iter().zip(&placement) {
            weight *= probs[v];
            match role {
                NodeRole::Infectious => infectious_in[v] += 1,
                NodeRole::Susceptible => susceptible_in[v] += 1,
                NodeRole::Inert => {}
            }
        }

        let mut local = vec![1.0];
        for v in 0..cells {
            let u = susceptible_in[v];
            if u == 0 {
                continue;
            }
            let q = if infectious_in[v] == 0 {
                0.0
            } else {
                1.0 - (1.0 - beta).powi(infectious_in[v] as i32)
            };
            local = convolve(&local, &binomial_pmf(u, q));
        }
        for (k, p) in local.iter().enumerate() {
            pmf[k] += weight * p;
        }

        // Odometer increment over placements.
        let mut digit = 0;
        loop {
            if digit == nodes {
                // Summation can overshoot 1 by an ulp.
                pmf.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
                return Ok(pmf);
            }
            placement[digit] += 1;
            if placement[digit] < cells {
                break;
            }
            placement[digit] = 0;
            digit += 1;
        }
    }
}

fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(trials + 1);
    let mut choose = 1.0;
    for k in 0..=trials {
        if k > 0 {
            choose = choose * (trials - k + 1) as f64 / k as f64;
        }
        out.push(choose * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32));
    }
    out
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Mean of a distribution indexed by outcome.
pub fn pmf_mean(pmf: &[f64]) -> f64 {
    pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseContactCheck {
    pub trials: u64,
    pub zero_infection_trials: u64,
    pub observed_zero_frequency: f64,
    pub mu: f64,
    /// `1 - mu`, the Markov-inequality lower bound on the zero-infection probability.
    pub analytic_bound: f64,
}

/// Runs `trials` independent engine steps with `infected` infectious and
/// `uninfected` susceptible nodes on `grid` and counts steps without a new
/// infection.
///
/// Requires `infected * uninfected <= n^(2 epsilon)` and
/// `epsilon < (1 - 1/alpha) / 2`, the small-prevalence regime in which `mu`
/// vanishes as `n` grows. The remaining `n - infected - uninfected` nodes are
/// recovered and cannot influence transmission, so they are not simulated.
pub fn sparse_contact_check(
    params: &EpidemicParams,
    grid: &CellGrid,
    infected: usize,
    uninfected: usize,
    epsilon: f64,
    trials: u64,
    stream: StreamKey,
) -> Result<SparseContactCheck, OracleError> {
    let n = params.n as f64;
    let eps_limit = (1.0 - 1.0 / params.alpha) / 2.0;
    if !(epsilon > 0.0 && epsilon < eps_limit) {
        return Err(OracleError::RegimeViolated(format!(
            "epsilon {epsilon} must lie in (0, {eps_limit:.6})"
        )));
    }
    let budget = n.powf(2.0 * epsilon);
    if (infected * uninfected) as f64 > budget {
        return Err(OracleError::RegimeViolated(format!(
            "|I| |U| = {} exceeds n^(2 epsilon) = {budget:.3}",
            infected * uninfected
        )));
    }
    if infected + uninfected > params.n {
        return Err(OracleError::RegimeViolated(format!(
            "|I| + |U| = {} exceeds n = {}",
            infected + uninfected,
            params.n
        )));
    }

    let mut statuses = vec![NodeStatus::Infected { infected_at: 0 }; infected];
    statuses.extend(std::iter::repeat_n(NodeStatus::Uninfected, uninfected));
    let mut state = PopulationState::from_statuses(statuses.clone(), 0);
    let options = DynamicsOptions::default();
    let trial_key = stream.role(StreamRole::Trial);
    let mut zero = 0;
    for t in 0..trials {
        state.reset(&statuses, 0);
        let streams = DynamicsStreams::new(trial_key.child(t));
        let report = dynamics::step(&mut state, grid, params, &streams, &options);
        if report.new_infections_total == 0 {
            zero += 1;
        }
    }
    let mu = expected_new_infections_bound(grid, infected, uninfected);
    Ok(SparseContactCheck {
        trials,
        zero_infection_trials: zero,
        observed_zero_frequency: if trials == 0 {
            1.0
        } else {
            zero as f64 / trials as f64
        },
        mu,
        analytic_bound: 1.0 - mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use NodeRole::*;

    fn grid(w: &[u32]) -> CellGrid {
        CellGrid::from_weights(w.to_vec()).unwrap()
    }

    #[test]
    fn meeting_probability_examples() {
        assert!((exact_meeting_probability(&grid(&[3; 7])) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(exact_meeting_probability(&grid(&[9])), 1.0);
        assert!((exact_meeting_probability(&grid(&[2, 2, 4])) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn mu_examples() {
        let g = grid(&[2, 2, 4]);
        assert_eq!(expected_new_infections_bound(&g, 0, 5), 0.0);
        assert!((expected_new_infections_bound(&g, 2, 3) - 2.25).abs() < 1e-12);
        let q = exact_quantities(&g, 2, 3);
        assert_eq!(q.per_cell_choice_prob, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn enumerate_pair_on_equal_cells() {
        let pmf = enumerate_step(&grid(&[2, 2, 2]), &[Infectious, Susceptible], 1.0).unwrap();
        assert!((pmf[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pmf[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_pair_on_unequal_cells() {
        let pmf = enumerate_step(&grid(&[2, 4]), &[Infectious, Susceptible], 1.0).unwrap();
        assert!((pmf[1] - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_rejects_large_instances() {
        let roles = vec![Susceptible; 9];
        assert_eq!(
            enumerate_step(&grid(&[2, 2]), &roles, 1.0),
            Err(OracleError::TooLarge { nodes: 9, cells: 2 })
        );
        assert!(enumerate_step(&grid(&[2; 9]), &[Infectious], 1.0).is_err());
    }

    #[test]
    fn inert_nodes_do_not_matter() {
        let g = grid(&[2, 3, 5]);
        let a = enumerate_step(&g, &[Infectious, Susceptible, Susceptible], 0.5).unwrap();
        let b = enumerate_step(
            &g,
            &[Infectious, Inert, Susceptible, Inert, Susceptible],
            0.5,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    /// Second route: given the infectious placement, susceptible nodes are
    /// caught independently with the same probability.
    fn conditional_binomial(
        g: &CellGrid,
        infectious: usize,
        susceptible: usize,
        beta: f64,
    ) -> Vec<f64> {
        let m = g.num_cells();
        let probs: Vec<f64> = (0..m).map(|v| g.choice_probability(v)).collect();
        let mut pmf = vec![0.0; susceptible + 1];
        let mut place = vec![0usize; infectious];
        loop {
            let mut load = vec![0i32; m];
            let mut w = 1.0;
            for &v in &place {
                load[v] += 1;
                w *= probs[v];
            }
            let q: f64 = (0..m)
                .map(|v| probs[v] * (1.0 - (1.0 - beta).powi(load[v])))
                .sum();
            for (k, p) in binomial_pmf(susceptible, q).into_iter().enumerate() {
                pmf[k] += w * p;
            }
            let mut d = 0;
            loop {
                if d == infectious {
                    return pmf;
                }
                place[d] += 1;
                if place[d] < m {
                    break;
                }
                place[d] = 0;
                d += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn enumeration_agrees_with_conditional_route(
            weights in prop::collection::vec(1u32..9, 1..5),
            infectious in 0usize..3,
            susceptible in 0usize..4,
            beta in prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]),
        ) {
            let g = grid(&weights);
            let mut roles = vec![Infectious; infectious];
            roles.extend(vec![Susceptible; susceptible]);
            let exact = enumerate_step(&g, &roles, beta).unwrap();
            let other = conditional_binomial(&g, infectious, susceptible, beta);
            prop_assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (x, y) in exact.iter().zip(&other) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            // Union bound on the mean.
            prop_assert!(pmf_mean(&exact) <= expected_new_infections_bound(&g, infectious, susceptible) + 1e-12);
        }

        #[test]
        fn meeting_probability_is_permutation_invariant(weights in prop::collection::vec(1u32..50, 1..30), seed in any::<u64>()) {
            let mut shuffled = weights.clone();
            let k = StreamKey::root(seed);
            for i in (1..shuffled.len()).rev() {
                let j = (k.draw(i as u64) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let a = exact_meeting_probability(&grid(&weights));
            let b = exact_meeting_probability(&grid(&shuffled));
            prop_assert!((a - b).abs() < 1e-14);
        }

        // Appending weight w lowers sum (d/W)^2 exactly when w (W^2 - S) < 2 S W,
        // S = sum d^2; any w <= 2 S / W qualifies.
        #[test]
        fn appending_a_light_cell_lowers_meeting_probability(weights in prop::collection::vec(1u32..50, 1..30), frac in 0.01f64..1.0) {
            let s: f64 = weights.iter().map(|&d| (d as f64).powi(2)).sum();
            let w_tot: f64 = weights.iter().map(|&d| d as f64).sum();
            let extra = ((2.0 * s / w_tot) * frac).floor().max(1.0) as u32;
            let before = exact_meeting_probability(&grid(&weights));
            let mut more = weights.clone();
            more.push(extra);
            let after = exact_meeting_probability(&grid(&more));
            prop_assert!(after < before);
        }
    }

    #[test]
    fn appending_a_heavy_cell_can_raise_meeting_probability() {
        // Ten unit cells (0.1) plus one cell of weight 3: 19 / 169 > 0.1.
        let before = exact_meeting_probability(&grid(&[1; 10]));
        let mut w = vec![1; 10];
        w.push(3);
        let after = exact_meeting_probability(&grid(&w));
        assert!(after > before);
    }

    #[test]
    fn sparse_contact_degenerate_cases() {
        let params = EpidemicParams {
            n: 10_000,
            ..Default::default()
        };
        let g = grid(&[2, 2, 3]);
        let none = sparse_contact_check(&params, &g, 0, 5, 0.3, 200, StreamKey::root(1)).unwrap();
        assert_eq!(none.observed_zero_frequency, 1.0);

        let single = grid(&[2]);
        let always =
            sparse_contact_check(&params, &single, 1, 1, 0.3, 200, StreamKey::root(1)).unwrap();
        assert_eq!(always.observed_zero_frequency, 0.0);
    }

    #[test]
    fn sparse_contact_rejects_regime_violations() {
        let params = EpidemicParams {
            n: 10_000,
            ..Default::default()
        };
        let g = grid(&[2, 2, 3]);
        // n^(2 * 0.1) = 6.3 < 10 * 10
        assert!(matches!(
            sparse_contact_check(&params, &g, 10, 10, 0.1, 10, StreamKey::root(1)),
            Err(OracleError::RegimeViolated(_))
        ));
        assert!(sparse_contact_check(&params, &g, 1, 1, 0.4, 10, StreamKey::root(1)).is_err());
    }
}
