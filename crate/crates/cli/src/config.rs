//! Experiment configuration files.
//!
//! TOML, parsed strictly: unknown keys are errors. Every section is optional
//! and filled with the defaults below when the experiment kind uses it; a
//! section the kind does not use is rejected.
//!
//! ```toml
//! kind = "ifqi_car_on_hill"
//! seeds = [0, 1, 2]
//!
//! [ifqi]
//! window_sizes = [1, 20]
//! learning_rate = 3e-4
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// i-FQI on car-on-hill: performance loss and error sum per iteration.
    IfqiCarOnHill,
    /// i-DQN on a deterministic chain MDP, checked against its exact values.
    IdqnTabular,
    /// One-step QN against a two-network chain on the scalar LQR.
    LqrGeometry,
    /// i-FQI on car-on-hill with snapshot-pair diagnostics and their summary metrics.
    Table1,
    /// Checks of the sufficient condition and the loss/distance identity.
    PropChecks,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::IfqiCarOnHill => "ifqi_car_on_hill",
            ExperimentKind::IdqnTabular => "idqn_tabular",
            ExperimentKind::LqrGeometry => "lqr_geometry",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::PropChecks => "prop_checks",
        }
    }
}

/// Car-on-hill dataset and oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarOnHillSection {
    /// Transitions collected with a uniform policy from `(−0.5, 0)`. Default 10 000.
    pub samples: usize,
    /// Seed of the dataset; unset draws a fresh dataset per run seed.
    pub dataset_seed: Option<u64>,
    /// Default 0.95.
    pub gamma: f64,
    /// Nodes per axis of the discretized oracle. Default 257.
    pub oracle_resolution: usize,
    /// Exact-dynamics steps on top of the grid value. Default 12.
    pub oracle_lookahead: usize,
}

impl Default for CarOnHillSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            dataset_seed: None,
            gamma: iqn::envs::CAR_ON_HILL_GAMMA,
            oracle_resolution: iqn::diagnostics::ORACLE_RESOLUTION,
            oracle_lookahead: iqn::diagnostics::ORACLE_LOOKAHEAD,
        }
    }
}

/// Offline training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IfqiSection {
    /// Window sizes `K` to run. Default `[1, 20]`.
    pub window_sizes: Vec<usize>,
    /// Bellman iterations `N`. Default 40.
    pub n_iterations: usize,
    /// Gradient steps per run, shared by every `K`. Default 5000.
    pub gradient_budget: u64,
    /// Default 100.
    pub batch_size: usize,
    /// `D`, in gradient steps. Default 1.
    pub rolling_period: u64,
    /// Adam step size. Default 3e-4.
    pub learning_rate: f64,
    /// Hidden layer widths. Default `[50]`.
    pub hidden: Vec<usize>,
    /// Update the `K` networks on separate threads. Default false.
    pub parallel: bool,
    /// Gradient steps between checkpoints; 0 writes only the final one. Default 1000.
    pub checkpoint_every: u64,
}

impl Default for IfqiSection {
    fn default() -> Self {
        Self {
            window_sizes: vec![1, 20],
            n_iterations: 40,
            gradient_budget: 5_000,
            batch_size: 100,
            rolling_period: 1,
            learning_rate: 3e-4,
            hidden: vec![50],
            parallel: false,
            checkpoint_every: 1_000,
        }
    }
}

/// Snapshot-pair and iterate measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Record the pair `(t, t + 1)` when `t` is a multiple of this; 0 turns
    /// pair diagnostics off. Default 5.
    pub pair_stride: u64,
    /// Size of the evenly spaced subsample of the dataset used as `ν` for
    /// pairs. Default 500.
    pub pair_samples: usize,
    /// Performance loss of every completed iterate. Default true.
    pub performance_loss: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { pair_stride: 5, pair_samples: 500, performance_loss: true }
    }
}

/// Deterministic chain MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    /// Default 6.
    pub states: usize,
    /// Default 0.9.
    pub gamma: f64,
    /// Episode step limit. Default 20.
    pub horizon: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self { states: 6, gamma: 0.9, horizon: 20 }
    }
}

/// Online training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdqnSection {
    /// Default `[1, 3]`.
    pub window_sizes: Vec<usize>,
    /// Environment steps. Default 3000.
    pub total_steps: u64,
    /// `G`. Default 1.
    pub gradient_period: u64,
    /// `T`, in environment steps. Default 100.
    pub shift_period: u64,
    /// `D`, in environment steps. Default 10.
    pub rolling_period: u64,
    /// Default 32.
    pub batch_size: usize,
    /// Default 5000.
    pub buffer_capacity: usize,
    /// Default 100.
    pub learning_starts: usize,
    /// Linear ε decay from `epsilon_start` to `epsilon_end` over
    /// `epsilon_decay` steps. Defaults 1.0, 0.05, 1500.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: u64,
    /// Default 1e-3.
    pub learning_rate: f64,
    /// Default `[16]`.
    pub hidden: Vec<usize>,
    pub parallel: bool,
    /// Environment steps between checkpoints; 0 writes only the final one. Default 1000.
    pub checkpoint_every: u64,
}

impl Default for IdqnSection {
    fn default() -> Self {
        Self {
            window_sizes: vec![1, 3],
            total_steps: 3_000,
            gradient_period: 1,
            shift_period: 100,
            rolling_period: 10,
            batch_size: 32,
            buffer_capacity: 5_000,
            learning_starts: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 1_500,
            learning_rate: 1e-3,
            hidden: vec![16],
            parallel: false,
            checkpoint_every: 1_000,
        }
    }
}

/// Scalar LQR geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrSection {
    /// Default 0.4.
    pub gamma: f64,
    /// Points per axis of the state-action grid over `[−1, 1]²`. Default 21.
    pub grid: usize,
    /// Default 30.
    pub steps: usize,
    /// Default 0.05.
    pub learning_rate: f64,
    /// Initial `M` and `G` are drawn uniformly from these ranges per seed.
    /// Defaults `[-1.0, -0.05]` and `[-0.4, 0.4]`.
    pub m_range: [f64; 2],
    pub g_range: [f64; 2],
}

impl Default for LqrSection {
    fn default() -> Self {
        Self { gamma: 0.4, grid: 21, steps: 30, learning_rate: 0.05, m_range: [-1.0, -0.05], g_range: [-0.4, 0.4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Default `[0]`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Where runs are written; see [`ExperimentConfig::output_root`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub car_on_hill: Option<CarOnHillSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ifqi: Option<IfqiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idqn: Option<IdqnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrSection>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "IQN_OUTPUT_ROOT";

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Reads, parses, fills defaults and validates a config file.
pub fn parse_config(path: &Path) -> CliResult<ExperimentConfig> {
    if !path.is_file() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { context: format!("reading {}", path.display()), source })?;
    parse_config_str(&text, path)
}

/// [`parse_config`] on text already in memory; `path` only labels errors.
pub fn parse_config_str(text: &str, path: &Path) -> CliResult<ExperimentConfig> {
    if let Err(e) = text.parse::<toml::Table>() {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        return Err(CliError::Syntax { path: path.to_path_buf(), line, column, message: e.message().to_string() });
    }
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let location = e.span().map_or_else(String::new, |s| {
            let (line, column) = line_col(text, s.start);
            format!(" at line {line}, column {column}")
        });
        let message = e.message().to_string();
        match message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            Some(key) => CliError::UnknownKey { path: path.to_path_buf(), key: key.to_string(), location },
            None => CliError::Schema { path: path.to_path_buf(), location, message },
        }
    })?;
    config.resolve()
}

impl ExperimentConfig {
    fn uses(&self) -> [bool; 6] {
        use ExperimentKind::*;
        // car_on_hill, ifqi, diagnostics, chain, idqn, lqr
        match self.kind {
            IfqiCarOnHill | Table1 | PropChecks => [true, true, true, false, false, false],
            IdqnTabular => [false, false, false, true, true, false],
            LqrGeometry => [false, false, false, false, false, true],
        }
    }

    /// Fills every section the kind uses with defaults, rejects the others,
    /// and validates.
    pub fn resolve(mut self) -> CliResult<Self> {
        let uses = self.uses();
        let present = [
            ("car_on_hill", self.car_on_hill.is_some()),
            ("ifqi", self.ifqi.is_some()),
            ("diagnostics", self.diagnostics.is_some()),
            ("chain", self.chain.is_some()),
            ("idqn", self.idqn.is_some()),
            ("lqr", self.lqr.is_some()),
        ];
        for ((name, is_present), used) in present.into_iter().zip(uses) {
            if is_present && !used {
                return Err(CliError::invariant(name, format!("section is not used by kind `{}`", self.kind.name())));
            }
        }
        if uses[0] {
            self.car_on_hill.get_or_insert_with(Default::default);
        }
        if uses[1] {
            self.ifqi.get_or_insert_with(Default::default);
        }
        if uses[2] {
            self.diagnostics.get_or_insert_with(Default::default);
        }
        if uses[3] {
            self.chain.get_or_insert_with(Default::default);
        }
        if uses[4] {
            self.idqn.get_or_insert_with(Default::default);
        }
        if uses[5] {
            self.lqr.get_or_insert_with(Default::default);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::invariant("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(CliError::invariant("seeds", "seeds must be distinct"));
        }
        if let Some(c) = &self.car_on_hill {
            if c.samples == 0 {
                return Err(CliError::invariant("car_on_hill.samples", "must be positive"));
            }
            if !(0.0..1.0).contains(&c.gamma) {
                return Err(CliError::invariant("car_on_hill.gamma", "must lie in [0, 1)"));
            }
            if c.oracle_resolution < 17 || (c.oracle_resolution - 1) % 16 != 0 {
                return Err(CliError::invariant(
                    "car_on_hill.oracle_resolution",
                    "must be 16·m + 1 ≥ 17 so the evaluation nodes are grid nodes",
                ));
            }
        }
        if let Some(t) = &self.ifqi {
            check_windows("ifqi.window_sizes", &t.window_sizes)?;
            check_hidden("ifqi.hidden", &t.hidden)?;
            check_lr("ifqi.learning_rate", t.learning_rate)?;
            for &k in &t.window_sizes {
                self.ifqi_config(k, 0).validate().map_err(|e| CliError::invariant(format!("ifqi (K = {k})"), e.to_string()))?;
            }
        }
        if let Some(d) = &self.diagnostics {
            if d.pair_stride > 0 && d.pair_samples == 0 {
                return Err(CliError::invariant("diagnostics.pair_samples", "must be positive when pairs are recorded"));
            }
            if self.kind == ExperimentKind::Table1 && d.pair_stride == 0 {
                return Err(CliError::invariant("diagnostics.pair_stride", "table1 needs pair diagnostics"));
            }
        }
        if let Some(c) = &self.chain {
            if c.states < 2 || c.horizon == 0 || !(0.0..1.0).contains(&c.gamma) {
                return Err(CliError::invariant("chain", "needs ≥ 2 states, a positive horizon and γ in [0, 1)"));
            }
        }
        if let Some(q) = &self.idqn {
            check_windows("idqn.window_sizes", &q.window_sizes)?;
            check_hidden("idqn.hidden", &q.hidden)?;
            check_lr("idqn.learning_rate", q.learning_rate)?;
            for &k in &q.window_sizes {
                self.idqn_config(k, 0).validate().map_err(|e| CliError::invariant(format!("idqn (K = {k})"), e.to_string()))?;
            }
        }
        if let Some(l) = &self.lqr {
            iqn::envs::LqrModel::new(l.gamma).map_err(|e| CliError::invariant("lqr.gamma", e.to_string()))?;
            if l.grid < 2 || l.steps == 0 {
                return Err(CliError::invariant("lqr", "grid needs ≥ 2 points and steps must be positive"));
            }
            check_lr("lqr.learning_rate", l.learning_rate)?;
            if !(l.m_range[0] < l.m_range[1] && l.m_range[1] <= iqn::approximator::M_CEILING) {
                return Err(CliError::invariant("lqr.m_range", "must be an increasing range of negative values"));
            }
            let g = iqn::approximator::G_BOUND;
            if !(l.g_range[0] < l.g_range[1] && l.g_range[0] >= -g && l.g_range[1] <= g) {
                return Err(CliError::invariant("lqr.g_range", format!("must be an increasing range inside [−{g}, {g}]")));
            }
        }
        Ok(())
    }

    /// Core training configuration for one window size and seed.
    pub fn ifqi_config(&self, k: usize, seed: u64) -> iqn::chain::IfqiConfig {
        let t = self.ifqi.as_ref().expect("resolved config has an ifqi section");
        let c = self.car_on_hill.as_ref().expect("resolved config has a car_on_hill section");
        iqn::chain::IfqiConfig {
            k,
            n_iterations: t.n_iterations,
            gradient_budget: t.gradient_budget,
            batch_size: t.batch_size,
            rolling_period: t.rolling_period,
            gamma: c.gamma,
            adam: iqn::approximator::AdamConfig::with_learning_rate(t.learning_rate),
            parallel: t.parallel,
            seed,
        }
    }

    pub fn idqn_config(&self, k: usize, seed: u64) -> iqn::chain::IdqnConfig {
        let q = self.idqn.as_ref().expect("resolved config has an idqn section");
        let c = self.chain.as_ref().expect("resolved config has a chain section");
        iqn::chain::IdqnConfig {
            k,
            total_steps: q.total_steps,
            gradient_period: q.gradient_period,
            shift_period: q.shift_period,
            rolling_period: q.rolling_period,
            batch_size: q.batch_size,
            buffer_capacity: q.buffer_capacity,
            learning_starts: q.learning_starts,
            epsilon: iqn::chain::EpsilonSchedule { start: q.epsilon_start, end: q.epsilon_end, decay_steps: q.epsilon_decay },
            gamma: c.gamma,
            adam: iqn::approximator::AdamConfig::with_learning_rate(q.learning_rate),
            parallel: q.parallel,
            seed,
        }
    }

    /// Canonical JSON: object keys sorted, defaults filled in.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("JSON value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `--out` if given, else `output_dir`, else `<root>/<kind>-<hash prefix>`
    /// with the root taken from `IQN_OUTPUT_ROOT` or `runs`.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("{}-{}", self.kind.name(), &self.hash()[..12]))
    }
}

fn check_windows(field: &str, ks: &[usize]) -> CliResult<()> {
    if ks.is_empty() {
        return Err(CliError::invariant(field, "list at least one window size"));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(CliError::invariant(field, "K must be at least 1"));
    }
    if ks.iter().collect::<BTreeSet<_>>().len() != ks.len() {
        return Err(CliError::invariant(field, "window sizes must be distinct"));
    }
    Ok(())
}

fn check_hidden(field: &str, hidden: &[usize]) -> CliResult<()> {
    if hidden.contains(&0) {
        return Err(CliError::invariant(field, "layer widths must be positive"));
    }
    Ok(())
}

fn check_lr(field: &str, lr: f64) -> CliResult<()> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(CliError::invariant(field, "must be a finite non-negative number"));
    }
    Ok(())
}

/// Parses `--seeds`: `a..b` (half-open), `a..=b`, or a comma list.
pub fn parse_seeds(spec: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::invariant("--seeds", format!("cannot read `{spec}`; use `0..10`, `0..=9` or `1,2,5`"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        spec.split(',').map(num).collect::<CliResult<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
