//! Flat `section.key = value` experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment                 (also allowed after a value)
//! section.key = value
//! ```
//!
//! Blank lines are ignored, keys may appear at most once, and every key not
//! listed by `--print-defaults` is rejected. Lists are comma separated; probes
//! are `player:type` pairs with 1-based indices, or `auto`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { line: usize, key: String, suggestion: Option<String> },
    #[error("{key}: {message}")]
    Range { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkMode {
    Complete,
    Ring,
    RoundRobin,
    RandomGossip,
}

impl NetworkMode {
    pub fn name(self) -> &'static str {
        match self {
            NetworkMode::Complete => "complete",
            NetworkMode::Ring => "ring",
            NetworkMode::RoundRobin => "round-robin",
            NetworkMode::RandomGossip => "random-gossip",
        }
    }
}

impl FromStr for NetworkMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "complete" => Ok(NetworkMode::Complete),
            "ring" | "ring-static" => Ok(NetworkMode::Ring),
            "round-robin" => Ok(NetworkMode::RoundRobin),
            "random-gossip" => Ok(NetworkMode::RandomGossip),
            other => Err(format!("unknown network mode `{other}` (complete, ring, round-robin, random-gossip)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Zeros,
    Midpoint,
    Random,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Zeros => "zeros",
            InitKind::Midpoint => "midpoint",
            InitKind::Random => "random",
        }
    }
}

impl FromStr for InitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zeros" => Ok(InitKind::Zeros),
            "midpoint" => Ok(InitKind::Midpoint),
            "random" => Ok(InitKind::Random),
            other => Err(format!("unknown init rule `{other}` (zeros, midpoint, random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub model: String,
    pub n: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub sign: i64,
    pub d: f64,
    pub delta_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationConfig {
    pub n_points: usize,
    pub n_list: Vec<usize>,
    pub n_fine: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub mode: NetworkMode,
    pub seed: u64,
    /// `None` picks the mode's own window.
    pub window: Option<usize>,
    /// `None` uses `1/n`.
    pub eta: Option<f64>,
    pub extra_edge_prob: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub a: f64,
    pub b: f64,
    pub record_every: usize,
    pub init: InitKind,
    pub seed: u64,
    pub chain: bool,
    pub per_type_scaling: bool,
    pub threads: usize,
    pub oracle_tol: f64,
    pub oracle_max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// 1-based `(player, type)`; `None` picks every player at two interior types.
    pub probes: Option<Vec<(usize, usize)>>,
    pub emit_svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    pub discretization: DiscretizationConfig,
    pub network: NetworkConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            game: GameConfig {
                model: "cournot".into(),
                n: 5,
                box_lo: 0.0,
                box_hi: 20.0,
                theta_lo: 1.0,
                theta_hi: 2.0,
                sign: -1,
                d: 60.0,
                delta_step: 20.0,
            },
            discretization: DiscretizationConfig { n_points: 50, n_list: vec![10, 20, 40], n_fine: 160 },
            network: NetworkConfig {
                mode: NetworkMode::Complete,
                seed: 0,
                window: None,
                eta: None,
                extra_edge_prob: 0.2,
                horizon: 200,
            },
            solver: SolverConfig {
                iterations: 50_000,
                a: 2.0,
                b: 10.0,
                record_every: 100,
                init: InitKind::Midpoint,
                seed: 0,
                chain: true,
                per_type_scaling: true,
                threads: 1,
                oracle_tol: 1e-8,
                oracle_max_iters: 200_000,
            },
            output: OutputConfig { dir: PathBuf::from("out"), probes: None, emit_svg: true },
        }
    }
}

/// Every accepted key, in `--print-defaults` order.
pub const KEYS: &[&str] = &[
    "game.model",
    "game.n",
    "game.box_lo",
    "game.box_hi",
    "game.theta_lo",
    "game.theta_hi",
    "game.sign",
    "game.d",
    "game.delta_step",
    "discretization.N",
    "discretization.N_list",
    "discretization.N_fine",
    "network.mode",
    "network.seed",
    "network.B",
    "network.eta",
    "network.extra_edge_prob",
    "network.horizon",
    "solver.T",
    "solver.a",
    "solver.b",
    "solver.record_every",
    "solver.init",
    "solver.seed",
    "solver.chain",
    "solver.per_type_scaling",
    "solver.threads",
    "solver.oracle_tol",
    "solver.oracle_max_iters",
    "output.dir",
    "output.probes",
    "output.emit_svg",
];

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range { key: key.to_string(), message: message.into() }
}

fn parse_num<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| range(key, format!("expected {what}, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(range(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value.split(',').map(|v| parse_num(key, v.trim(), "a comma-separated list of positive integers")).collect()
}

fn parse_auto<T: FromStr>(key: &str, value: &str, what: &str) -> Result<Option<T>, ConfigError> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value, what).map(Some)
    }
}

fn parse_probes(key: &str, value: &str) -> Result<Option<Vec<(usize, usize)>>, ConfigError> {
    if value == "auto" {
        return Ok(None);
    }
    if value.is_empty() {
        return Ok(Some(Vec::new()));
    }
    value
        .split(',')
        .map(|pair| {
            let (i, k) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| range(key, format!("expected player:type, got `{}`", pair.trim())))?;
            Ok((parse_num(key, i.trim(), "a player index")?, parse_num(key, k.trim(), "a type index")?))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn show_auto<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (g, d, net, s, o) =
            (&mut self.game, &mut self.discretization, &mut self.network, &mut self.solver, &mut self.output);
        let real = "a real number";
        let count = "a nonnegative integer";
        match key {
            "game.model" => g.model = value.to_string(),
            "game.n" => g.n = parse_num(key, value, count)?,
            "game.box_lo" => g.box_lo = parse_num(key, value, real)?,
            "game.box_hi" => g.box_hi = parse_num(key, value, real)?,
            "game.theta_lo" => g.theta_lo = parse_num(key, value, real)?,
            "game.theta_hi" => g.theta_hi = parse_num(key, value, real)?,
            "game.sign" => g.sign = parse_num(key, value, "1 or -1")?,
            "game.d" => g.d = parse_num(key, value, real)?,
            "game.delta_step" => g.delta_step = parse_num(key, value, real)?,
            "discretization.N" => d.n_points = parse_num(key, value, count)?,
            "discretization.N_list" => d.n_list = parse_list(key, value)?,
            "discretization.N_fine" => d.n_fine = parse_num(key, value, count)?,
            "network.mode" => net.mode = value.parse().map_err(|e: String| range(key, e))?,
            "network.seed" => net.seed = parse_num(key, value, "an unsigned 64-bit integer")?,
            "network.B" => net.window = parse_auto(key, value, "a positive integer or auto")?,
            "network.eta" => net.eta = parse_auto(key, value, "a real in (0, 1] or auto")?,
            "network.extra_edge_prob" => net.extra_edge_prob = parse_num(key, value, real)?,
            "network.horizon" => net.horizon = parse_num(key, value, count)?,
            "solver.T" => s.iterations = parse_num(key, value, count)?,
            "solver.a" => s.a = parse_num(key, value, real)?,
            "solver.b" => s.b = parse_num(key, value, real)?,
            "solver.record_every" => s.record_every = parse_num(key, value, count)?,
            "solver.init" => s.init = value.parse().map_err(|e: String| range(key, e))?,
            "solver.seed" => s.seed = parse_num(key, value, "an unsigned 64-bit integer")?,
            "solver.chain" => s.chain = parse_bool(key, value)?,
            "solver.per_type_scaling" => s.per_type_scaling = parse_bool(key, value)?,
            "solver.threads" => s.threads = parse_num(key, value, count)?,
            "solver.oracle_tol" => s.oracle_tol = parse_num(key, value, real)?,
            "solver.oracle_max_iters" => s.oracle_max_iters = parse_num(key, value, count)?,
            "output.dir" => o.dir = PathBuf::from(value),
            "output.probes" => o.probes = parse_probes(key, value)?,
            "output.emit_svg" => o.emit_svg = parse_bool(key, value)?,
            _ => unreachable!("keys are checked against KEYS before set"),
        }
        Ok(())
    }

    /// `(key, value)` pairs in the order of [`KEYS`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (g, d, net, s, o) = (&self.game, &self.discretization, &self.network, &self.solver, &self.output);
        let probes = match &o.probes {
            None => "auto".to_string(),
            Some(p) => p.iter().map(|(i, k)| format!("{i}:{k}")).collect::<Vec<_>>().join(","),
        };
        let values = vec![
            g.model.clone(),
            g.n.to_string(),
            g.box_lo.to_string(),
            g.box_hi.to_string(),
            g.theta_lo.to_string(),
            g.theta_hi.to_string(),
            g.sign.to_string(),
            g.d.to_string(),
            g.delta_step.to_string(),
            d.n_points.to_string(),
            join(&d.n_list),
            d.n_fine.to_string(),
            net.mode.name().to_string(),
            net.seed.to_string(),
            show_auto(&net.window),
            show_auto(&net.eta),
            net.extra_edge_prob.to_string(),
            net.horizon.to_string(),
            s.iterations.to_string(),
            s.a.to_string(),
            s.b.to_string(),
            s.record_every.to_string(),
            s.init.name().to_string(),
            s.seed.to_string(),
            s.chain.to_string(),
            s.per_type_scaling.to_string(),
            s.threads.to_string(),
            s.oracle_tol.to_string(),
            s.oracle_max_iters.to_string(),
            o.dir.display().to_string(),
            probes,
            o.emit_svg.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    /// Text accepted by [`parse_config`] that reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in self.entries() {
            let head = key.split('.').next().unwrap_or_default();
            if head != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "# {head}");
                section = head;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Probes as 0-based pairs, resolving `auto`.
    pub fn probes(&self) -> Vec<(usize, usize)> {
        match &self.output.probes {
            Some(p) => p.iter().map(|&(i, k)| (i - 1, k - 1)).collect(),
            None => {
                let big_n = self.discretization.n_points;
                let picks = [(3 * big_n) / 10, (7 * big_n) / 10];
                let mut rows: Vec<usize> = picks.iter().map(|&k| k.min(big_n - 1)).collect();
                rows.dedup();
                (0..self.game.n).flat_map(|i| rows.iter().map(move |&k| (i, k))).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (g, d, net, s) = (&self.game, &self.discretization, &self.network, &self.solver);
        if g.model != "cournot" {
            return Err(range("game.model", format!("unknown model `{}` (available: cournot)", g.model)));
        }
        if g.n < 2 {
            return Err(range("game.n", "need at least 2 players"));
        }
        if !(g.box_lo < g.box_hi) {
            return Err(range("game.box_hi", "must exceed game.box_lo"));
        }
        if !(g.theta_lo < g.theta_hi) {
            return Err(range("game.theta_hi", "must exceed game.theta_lo"));
        }
        if g.sign != 1 && g.sign != -1 {
            return Err(range("game.sign", "must be 1 or -1"));
        }
        for (key, v) in [("game.d", g.d), ("game.delta_step", g.delta_step), ("game.box_lo", g.box_lo), ("game.theta_lo", g.theta_lo)] {
            if !v.is_finite() {
                return Err(range(key, "must be finite"));
            }
        }
        if d.n_points < 1 {
            return Err(range("discretization.N", "must be at least 1"));
        }
        if d.n_list.is_empty() || d.n_list.contains(&0) {
            return Err(range("discretization.N_list", "needs positive grid sizes"));
        }
        if let Some(bad) = d.n_list.iter().find(|&&m| d.n_fine == 0 || d.n_fine % m != 0) {
            return Err(range("discretization.N_fine", format!("must be a positive multiple of every N_list entry ({bad})")));
        }
        if net.window == Some(0) {
            return Err(range("network.B", "must be positive"));
        }
        if let Some(eta) = net.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(range("network.eta", "must lie in (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&net.extra_edge_prob) {
            return Err(range("network.extra_edge_prob", "must lie in [0, 1]"));
        }
        if net.horizon < 1 {
            return Err(range("network.horizon", "must be at least 1"));
        }
        if !(s.a > 0.0 && s.a.is_finite()) {
            return Err(range("solver.a", "must be positive"));
        }
        if !(s.b >= 1.0 && s.b.is_finite()) {
            return Err(range("solver.b", "must be at least 1"));
        }
        if s.record_every < 1 {
            return Err(range("solver.record_every", "must be at least 1"));
        }
        if s.threads < 1 {
            return Err(range("solver.threads", "must be at least 1"));
        }
        if !(s.oracle_tol > 0.0) {
            return Err(range("solver.oracle_tol", "must be positive"));
        }
        if let Some(probes) = &self.output.probes {
            for &(i, k) in probes {
                if i < 1 || i > g.n || k < 1 || k > d.n_points {
                    return Err(range("output.probes", format!("probe {i}:{k} outside players 1..={} and types 1..={}", g.n, d.n_points)));
                }
            }
        }
        Ok(())
    }
}

/// Parses config text on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, message: format!("expected `section.key = value`, got `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            let suggestion = KEYS
                .iter()
                .map(|k| (strsim::jaro_winkler(k, key), *k))
                .filter(|(score, _)| *score > 0.8)
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, k)| k.to_string());
            return Err(ConfigError::UnknownKey { line, key: key.to_string(), suggestion });
        };
        if seen.contains(&known) {
            return Err(ConfigError::Parse { line, message: format!("`{key}` is set twice") });
        }
        seen.push(known);
        config.set(known, value)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
        assert_eq!(parse_config("# nothing\n\n   \n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn single_override() {
        let c = parse_config("discretization.N = 200 # finer\n").unwrap();
        let mut expected = ExperimentConfig::default();
        expected.discretization.n_points = 200;
        assert_eq!(c, expected);
    }

    #[test]
    fn negative_iterations_name_the_key() {
        let err = parse_config("solver.T = -1").unwrap_err();
        assert!(matches!(&err, ConfigError::Range { key, .. } if key == "solver.T"), "{err}");
    }

    #[test]
    fn unknown_key_suggests() {
        let err = parse_config("\nsolver.recordevery = 5").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, suggestion, .. } => {
                assert_eq!(line, 2);
                assert_eq!(suggestion.as_deref(), Some("solver.record_every"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("zzz = 1"), Err(ConfigError::UnknownKey { suggestion: None, .. })));
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(matches!(parse_config("game.n 5"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("game.n = 5\ngame.n = 6"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn range_checks() {
        for text in [
            "game.n = 1",
            "game.sign = 2",
            "game.box_hi = -1",
            "discretization.N_fine = 150",
            "network.mode = star",
            "network.eta = 1.5",
            "solver.b = 0.5",
            "solver.init = ones",
            "output.probes = 6:1",
            "output.probes = 1:51",
            "output.probes = 1-2",
            "solver.chain = yes",
        ] {
            assert!(matches!(parse_config(text), Err(ConfigError::Range { .. })), "{text}");
        }
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        c.network.window = Some(7);
        c.network.eta = Some(0.125);
        c.network.mode = NetworkMode::RandomGossip;
        c.solver.a = 0.1 + 0.2;
        c.solver.oracle_tol = 3e-11;
        c.output.probes = Some(vec![(1, 2), (5, 50)]);
        c.discretization.n_list = vec![5, 8];
        c.discretization.n_fine = 40;
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn auto_probes_cover_every_player() {
        let c = ExperimentConfig::default();
        let p = c.probes();
        assert_eq!(p.len(), 10);
        assert!(p.contains(&(0, 15)) && p.contains(&(4, 35)));
        let mut small = c.clone();
        small.discretization.n_points = 1;
        assert_eq!(small.probes().len(), 5);
    }
}
