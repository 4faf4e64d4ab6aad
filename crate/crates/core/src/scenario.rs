//! Scenario presets, awareness interventions, and the `key=value` config format.
//!
//! ```text
//! # emerging-country run with a warning at 2% prevalence
//! n=10000
//! alpha=2.8
//! kappa=1
//! tau=2
//! trigger=prevalence:0.02->alpha=6,kappa=16,tau=2
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use crate::attractiveness::{build_grid, CellGrid, EpidemicParams};
use crate::error::{ConfigError, ParamError};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerCondition {
    /// Fires once `step` steps have completed.
    TimeReached(u32),
    /// Fires once `|I| >= fraction * n`.
    PrevalenceReached(f64),
}

impl TriggerCondition {
    pub fn is_met(&self, step: u32, infected: usize, n: usize) -> bool {
        match *self {
            TriggerCondition::TimeReached(s) => step >= s,
            TriggerCondition::PrevalenceReached(f) => infected as f64 >= f * n as f64,
        }
    }

    fn sort_key(&self) -> (u8, f64) {
        match *self {
            TriggerCondition::TimeReached(s) => (0, s as f64),
            TriggerCondition::PrevalenceReached(f) => (1, f),
        }
    }
}

/// Replacement values for the environment and disease parameters. Fields left
/// `None` keep the scenario's base value, so every overlay resolves to a full
/// parameter set regardless of which triggers fired before it.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamOverlay {
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub tau: Option<u32>,
    pub beta: Option<f64>,
}

impl ParamOverlay {
    pub fn resolve(&self, base: &EpidemicParams) -> EpidemicParams {
        EpidemicParams {
            alpha: self.alpha.unwrap_or(base.alpha),
            kappa: self.kappa.unwrap_or(base.kappa),
            tau: self.tau.unwrap_or(base.tau),
            beta: self.beta.unwrap_or(base.beta),
            ..base.clone()
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == ParamOverlay::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub condition: TriggerCondition,
    pub overlay: ParamOverlay,
}

/// Ordered triggers: time triggers by step, then prevalence triggers by
/// fraction. Each fires at most once per run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionSchedule {
    triggers: Vec<Trigger>,
}

impl InterventionSchedule {
    pub fn new(mut triggers: Vec<Trigger>) -> Self {
        triggers.sort_by(|a, b| {
            let (ka, va) = a.condition.sort_key();
            let (kb, vb) = b.condition.sort_key();
            ka.cmp(&kb).then(va.total_cmp(&vb))
        });
        InterventionSchedule { triggers }
    }

    pub fn triggers(&self) -> &[Trigger] {
        &self.triggers
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    /// Checks every trigger's condition and overlay against `base`.
    pub fn validate(&self, base: &EpidemicParams) -> Result<(), (usize, String)> {
        for (i, t) in self.triggers.iter().enumerate() {
            if let TriggerCondition::PrevalenceReached(f) = t.condition {
                if !(f > 0.0 && f <= 1.0) {
                    return Err((
                        i,
                        format!("prevalence fraction must lie in (0, 1] (got {f})"),
                    ));
                }
            }
            if t.overlay.is_empty() {
                return Err((i, "overlay sets no parameter".into()));
            }
            t.overlay
                .resolve(base)
                .validate()
                .map_err(|e| (i, e.to_string()))?;
        }
        Ok(())
    }
}

/// Builds the post-intervention environment. Node statuses and infection
/// timestamps are untouched; the returned parameters govern the next step.
pub fn apply_intervention(
    base: &EpidemicParams,
    overlay: &ParamOverlay,
    stream: StreamKey,
) -> Result<(CellGrid, EpidemicParams), ParamError> {
    let params = overlay.resolve(base);
    let grid = build_grid(&params, stream)?;
    Ok((grid, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: EpidemicParams,
    pub schedule: InterventionSchedule,
    pub seed: u64,
    pub replications: usize,
    pub out_dir: PathBuf,
    pub log_cells: bool,
    pub same_step_transmission: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            params: EpidemicParams::default(),
            schedule: InterventionSchedule::default(),
            seed: 0,
            replications: 1,
            out_dir: PathBuf::from("out"),
            log_cells: false,
            same_step_transmission: false,
        }
    }
}

fn round_ln(x: f64) -> usize {
    x.ln().round().max(1.0) as usize
}

/// Minimal countermeasures: `alpha = 2.8`, `kappa = 1`, `tau = round(ln ln n)`.
pub fn preset_emerging(n: usize) -> ScenarioConfig {
    let ln_ln = (n as f64).ln().ln();
    ScenarioConfig {
        params: EpidemicParams {
            n,
            kappa: 1.0,
            alpha: 2.8,
            tau: ln_ln.round().max(1.0) as u32,
            beta: 1.0,
            initial_infected: round_ln(n as f64),
            max_steps: 10_000,
        },
        ..Default::default()
    }
}

/// Warnings and isolation in force: `alpha = 6`, `kappa = 16`, `tau = 2`.
pub fn preset_industrialized(n: usize) -> ScenarioConfig {
    ScenarioConfig {
        params: EpidemicParams {
            n,
            kappa: 16.0,
            alpha: 6.0,
            tau: 2,
            beta: 1.0,
            initial_infected: round_ln(n as f64),
            max_steps: 10_000,
        },
        ..Default::default()
    }
}

const KEYS: &[&str] = &[
    "n",
    "alpha",
    "kappa",
    "tau",
    "beta",
    "initial_infected",
    "max_steps",
    "seed",
    "replications",
    "trigger",
    "out_dir",
    "log_cells",
    "same_step_transmission",
];

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::new(line, key, format!("cannot parse {value:?}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::new(
            line,
            key,
            format!("expected a boolean, got {value:?}"),
        )),
    }
}

/// Parses `time:STEP->k=v,...` or `prevalence:FRACTION->k=v,...`.
pub fn parse_trigger(line: usize, text: &str) -> Result<Trigger, ConfigError> {
    let err = |msg: String| ConfigError::new(line, "trigger", msg);
    let (cond, overlay_text) = text.split_once("->").ok_or_else(|| {
        err(format!(
            "expected <time:STEP|prevalence:FRACTION>-><k=v,...>, got {text:?}"
        ))
    })?;
    let (kind, value) = cond
        .trim()
        .split_once(':')
        .ok_or_else(|| err(format!("malformed condition {cond:?}")))?;
    let value = value.trim();
    let condition = match kind.trim() {
        "time" => TriggerCondition::TimeReached(
            value
                .parse()
                .map_err(|_| err(format!("bad step {value:?}")))?,
        ),
        "prevalence" => {
            let f: f64 = value
                .parse()
                .map_err(|_| err(format!("bad fraction {value:?}")))?;
            if !(f > 0.0 && f <= 1.0) {
                return Err(err(format!(
                    "prevalence fraction must lie in (0, 1] (got {f})"
                )));
            }
            TriggerCondition::PrevalenceReached(f)
        }
        other => return Err(err(format!("unknown condition {other:?}"))),
    };
    let mut overlay = ParamOverlay::default();
    for item in overlay_text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| err(format!("overlay entry {item:?} is not k=v")))?;
        let (k, v) = (k.trim(), v.trim());
        let bad = || err(format!("cannot parse {k}={v:?}"));
        match k {
            "alpha" => overlay.alpha = Some(v.parse().map_err(|_| bad())?),
            "kappa" => overlay.kappa = Some(v.parse().map_err(|_| bad())?),
            "tau" => overlay.tau = Some(v.parse().map_err(|_| bad())?),
            "beta" => overlay.beta = Some(v.parse().map_err(|_| bad())?),
            _ => {
                return Err(err(format!(
                    "overlay key {k:?} is not one of alpha, kappa, tau, beta"
                )))
            }
        }
    }
    if overlay.is_empty() {
        return Err(err("overlay sets no parameter".into()));
    }
    Ok(Trigger { condition, overlay })
}

fn param_key(e: &ParamError) -> &'static str {
    match e {
        ParamError::EmptyPopulation | ParamError::CutoffTooSmall(_) => "n",
        ParamError::AlphaTooSmall(_)
        | ParamError::InvalidExponent(_)
        | ParamError::DegenerateSupport(_) => "alpha",
        ParamError::NonPositiveKappa(_) | ParamError::NoCells(_) => "kappa",
        ParamError::ZeroTau => "tau",
        ParamError::BetaOutOfRange(_) => "beta",
        ParamError::NoInitialInfected | ParamError::TooManyInfected { .. } => "initial_infected",
        ParamError::EmptyGrid
        | ParamError::ZeroWeight(_)
        | ParamError::AttractivenessBelowTwo(_) => "grid",
    }
}

impl ScenarioConfig {
    /// Sets one key from its textual value. `trigger` appends.
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "n" => self.params.n = parse_num(line, key, value)?,
            "alpha" => self.params.alpha = parse_num(line, key, value)?,
            "kappa" => self.params.kappa = parse_num(line, key, value)?,
            "tau" => self.params.tau = parse_num(line, key, value)?,
            "beta" => self.params.beta = parse_num(line, key, value)?,
            "initial_infected" => self.params.initial_infected = parse_num(line, key, value)?,
            "max_steps" => self.params.max_steps = parse_num(line, key, value)?,
            "seed" => self.seed = parse_num(line, key, value)?,
            "replications" => self.replications = parse_num(line, key, value)?,
            "out_dir" => {
                if value.is_empty() {
                    return Err(ConfigError::new(line, key, "must not be empty"));
                }
                self.out_dir = PathBuf::from(value);
            }
            "log_cells" => self.log_cells = parse_bool(line, key, value)?,
            "same_step_transmission" => self.same_step_transmission = parse_bool(line, key, value)?,
            "trigger" => {
                let t = parse_trigger(line, value)?;
                let mut all = self.schedule.triggers.clone();
                all.push(t);
                self.schedule = InterventionSchedule::new(all);
            }
            _ => {
                return Err(ConfigError::new(
                    line,
                    key,
                    format!("unknown key; expected one of {}", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// Whole-config checks. `lines` maps keys to the line they were set on.
    pub fn validate_with_lines(&self, lines: &HashMap<String, usize>) -> Result<(), ConfigError> {
        let line_of = |k: &str| lines.get(k).copied().unwrap_or(0);
        if let Err(e) = self.params.validate() {
            let key = param_key(&e);
            return Err(ConfigError::new(line_of(key), key, e.to_string()));
        }
        if self.replications == 0 {
            return Err(ConfigError::new(
                line_of("replications"),
                "replications",
                "must be at least 1",
            ));
        }
        if let Err((i, msg)) = self.schedule.validate(&self.params) {
            let text = self.schedule.triggers()[i].to_string();
            return Err(ConfigError::new(
                line_of("trigger"),
                "trigger",
                format!("{text}: {msg}"),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_lines(&HashMap::new())
    }
}

/// Parses config text. Every key is optional; see [`ScenarioConfig::default`].
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut config = ScenarioConfig::default();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line, content, "expected key=value"))?;
        let key = key.trim();
        if key != "trigger" {
            if let Some(prev) = lines.get(key) {
                return Err(ConfigError::new(
                    line,
                    key,
                    format!("duplicate key (first set on line {prev})"),
                ));
            }
        }
        config.set(line, key, value)?;
        lines.insert(key.to_string(), line);
    }
    config.validate_with_lines(&lines)?;
    Ok(config)
}

impl fmt::Display for TriggerCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerCondition::TimeReached(s) => write!(f, "time:{s}"),
            TriggerCondition::PrevalenceReached(x) => write!(f, "prevalence:{x}"),
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->", self.condition)?;
        let o = &self.overlay;
        let mut parts = Vec::new();
        if let Some(a) = o.alpha {
            parts.push(format!("alpha={a}"));
        }
        if let Some(k) = o.kappa {
            parts.push(format!("kappa={k}"));
        }
        if let Some(t) = o.tau {
            parts.push(format!("tau={t}"));
        }
        if let Some(b) = o.beta {
            parts.push(format!("beta={b}"));
        }
        write!(f, "{}", parts.join(","))
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "n={}", p.n)?;
        writeln!(f, "alpha={}", p.alpha)?;
        writeln!(f, "kappa={}", p.kappa)?;
        writeln!(f, "tau={}", p.tau)?;
        writeln!(f, "beta={}", p.beta)?;
        writeln!(f, "initial_infected={}", p.initial_infected)?;
        writeln!(f, "max_steps={}", p.max_steps)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "replications={}", self.replications)?;
        writeln!(f, "out_dir={}", self.out_dir.display())?;
        writeln!(f, "log_cells={}", self.log_cells)?;
        writeln!(f, "same_step_transmission={}", self.same_step_transmission)?;
        for t in self.schedule.triggers() {
            writeln!(f, "trigger={t}")?;
        }
        Ok(())
    }
}
