//! Cells, their power-law attractiveness, and the node-choice distribution.
//!
//! Cells form a flat indexed collection of `round(kappa * n)` locations. The
//! square layout of the city is never used by the dynamics, so no geometry is
//! stored.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::alias::AliasTable;
use crate::error::ParamError;
use crate::rng::StreamKey;

/// Full parameterization of one epidemic run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicParams {
    /// Population size.
    pub n: usize,
    /// Cells per node.
    pub kappa: f64,
    /// Power-law exponent of the attractiveness law.
    pub alpha: f64,
    /// Steps a node stays infectious after the step it was infected in.
    pub tau: u32,
    /// Per-exposure transmission probability.
    pub beta: f64,
    pub initial_infected: usize,
    /// Hard cap on simulated steps.
    pub max_steps: u32,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        EpidemicParams {
            n: 10_000,
            kappa: 1.0,
            alpha: 2.8,
            tau: 2,
            beta: 1.0,
            initial_infected: 1,
            max_steps: 10_000,
        }
    }
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n == 0 {
            return Err(ParamError::EmptyPopulation);
        }
        if !self.alpha.is_finite() || self.alpha <= 2.0 {
            return Err(ParamError::AlphaTooSmall(self.alpha));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(ParamError::NonPositiveKappa(self.kappa));
        }
        if self.tau == 0 {
            return Err(ParamError::ZeroTau);
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(ParamError::BetaOutOfRange(self.beta));
        }
        if self.initial_infected == 0 {
            return Err(ParamError::NoInitialInfected);
        }
        if self.initial_infected > self.n {
            return Err(ParamError::TooManyInfected {
                infected: self.initial_infected,
                n: self.n,
            });
        }
        let cells = self.num_cells();
        if cells == 0 {
            return Err(ParamError::NoCells(cells));
        }
        let cutoff = self.max_attractiveness();
        if cutoff < 2 {
            return Err(ParamError::CutoffTooSmall(cutoff));
        }
        Ok(())
    }

    /// `round(kappa * n)`.
    pub fn num_cells(&self) -> usize {
        (self.kappa * self.n as f64).round() as usize
    }

    /// `floor((kappa * n)^(1/alpha))`.
    pub fn max_attractiveness(&self) -> u32 {
        attractiveness_cutoff(self.kappa * self.n as f64, self.alpha)
    }
}

/// `floor(cells^(1/alpha))`, corrected for floating point error at exact
/// integer roots (e.g. `1024^(1/2) = 32`).
pub fn attractiveness_cutoff(cells: f64, alpha: f64) -> u32 {
    if cells.is_nan() || cells < 1.0 || alpha.is_nan() || alpha <= 0.0 {
        return 0;
    }
    let root = cells.powf(1.0 / alpha);
    let mut d = root.floor();
    let tol = 1e-12 * cells;
    while (d + 1.0).powf(alpha) <= cells + tol {
        d += 1.0;
    }
    while d > 0.0 && d.powf(alpha) > cells + tol {
        d -= 1.0;
    }
    d as u32
}

/// Truncated discrete power law: `p(d) = d^-alpha / sum_{i=2}^{max_attr} i^-alpha`.
///
/// Entry `i` of the returned table is `p(i + 2)`.
pub fn power_law_pmf(alpha: f64, max_attr: u32) -> Result<Vec<f64>, ParamError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(ParamError::InvalidExponent(alpha));
    }
    if max_attr < 2 {
        return Err(ParamError::DegenerateSupport(max_attr));
    }
    let raw: Vec<f64> = (2..=max_attr).map(|d| (d as f64).powf(-alpha)).collect();
    // Sum smallest terms first.
    let norm: f64 = raw.iter().rev().sum();
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// Realized attractiveness of every cell plus the constant-time choice table.
#[derive(Debug, Clone)]
pub struct CellGrid {
    attractiveness: Vec<u32>,
    total_weight: u64,
    max_attractiveness: u32,
    table: AliasTable,
}

impl CellGrid {
    /// Grid over explicit positive weights. The model's grids come from
    /// [`build_grid`]; this constructor serves small hand-made instances.
    pub fn from_weights(weights: Vec<u32>) -> Result<Self, ParamError> {
        if weights.is_empty() {
            return Err(ParamError::EmptyGrid);
        }
        if let Some(i) = weights.iter().position(|&w| w == 0) {
            return Err(ParamError::ZeroWeight(i));
        }
        let max = weights.iter().copied().max().unwrap_or(0);
        Ok(Self::assemble(weights, max))
    }

    fn assemble(attractiveness: Vec<u32>, max_attractiveness: u32) -> Self {
        let wide: Vec<u64> = attractiveness.iter().map(|&d| d as u64).collect();
        let total_weight = wide.iter().sum();
        let table = AliasTable::new(&wide);
        CellGrid {
            attractiveness,
            total_weight,
            max_attractiveness,
            table,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.attractiveness.len()
    }

    pub fn attractiveness(&self) -> &[u32] {
        &self.attractiveness
    }

    /// `W`, the sum of all cell weights.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    /// Upper end of the attractiveness support the grid was drawn from.
    pub fn max_attractiveness(&self) -> u32 {
        self.max_attractiveness
    }

    /// `d_v / W`.
    pub fn choice_probability(&self, cell: usize) -> f64 {
        self.attractiveness[cell] as f64 / self.total_weight as f64
    }

    /// Maps one uniform 64-bit draw to a cell, with `P(v) = d_v / W`.
    #[inline]
    pub fn choose_cell(&self, draw: u64) -> usize {
        self.table.sample(draw)
    }

    /// Choice probabilities as encoded in the sampling table.
    pub fn table_probability(&self, cell: usize) -> f64 {
        self.table.implied_probability(cell)
    }
}

/// Draws every cell's attractiveness i.i.d. from the truncated power law.
pub fn build_grid(params: &EpidemicParams, stream: StreamKey) -> Result<CellGrid, ParamError> {
    params.validate()?;
    let cells = params.num_cells();
    let max_attr = params.max_attractiveness();
    let pmf = power_law_pmf(params.alpha, max_attr)?;
    let law = WeightedIndex::new(&pmf).expect("power-law table is a valid weight vector");
    let mut rng = stream.rng();
    let attractiveness = (0..cells)
        .map(|_| law.sample(&mut rng) as u32 + 2)
        .collect();
    Ok(CellGrid::assemble(attractiveness, max_attr))
}
