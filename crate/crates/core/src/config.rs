//! Declarative experiment configuration (TOML) and its resolution into the
//! typed policies used by the library.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellsys::{Boundary, CellState, CellularSystem, WorldState};
use crate::inference::LikelihoodModel;
use crate::structures::{EnumerationLimits, Space, SpaceFamily, DEFAULT_MAX_SPACE_SIZE, DEFAULT_MAX_STRUCTURES};
use crate::udsl::{
    self, enumerate_hypotheses, make_prior, parse, HypothesisSet, HypothesisWorld, Operator, OperatorWhitelist,
    PriorMode, Unit, UtilityExpr, DEFAULT_MAX_HYPOTHESES,
};
use crate::welfare::{TruncationPolicy, DEFAULT_TIE_TOLERANCE};

/// A validation failure, tagged with the offending key.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl ToString) -> Self {
        ConfigError {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tie_tolerance")]
    pub tie_tolerance: f64,
    /// Seed for randomized subcommands.
    #[serde(default)]
    pub seed: u64,
    /// Initial state: a literal over the alphabet or a name from `states`.
    pub initial: String,
    /// Pair of initial states for `compare`.
    #[serde(default)]
    pub compare: Option<[String; 2]>,
    /// Named states usable wherever a state is expected.
    #[serde(default)]
    pub states: BTreeMap<String, String>,
    pub system: SystemSpec,
    pub spaces: SpaceFamily,
    pub hypotheses: HypothesisSpec,
    #[serde(default)]
    pub posterior: Option<PosteriorTarget>,
    #[serde(default)]
    pub limits: LimitsSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_beta() -> f64 {
    1.0
}

fn default_tie_tolerance() -> f64 {
    DEFAULT_TIE_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    Elementary {
        rule: u32,
        width: usize,
        #[serde(default)]
        boundary: Boundary,
    },
    Lifelike {
        /// Rulestring such as `B3/S23`.
        rule: String,
        width: usize,
        height: usize,
        #[serde(default)]
        boundary: Boundary,
    },
    Table {
        cells: usize,
        states: usize,
        neighborhoods: Vec<Vec<usize>>,
        /// Neighborhood tuple written as alphabet digits, mapped to the next state.
        table: BTreeMap<String, CellState>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Mdl,
    Uniform,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSpec {
    /// Inline DSL hypotheses, in declaration order.
    #[serde(default)]
    pub exprs: Vec<String>,
    #[serde(default)]
    pub enumerate: Option<EnumerateSpec>,
    pub prior: PriorKind,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateSpec {
    pub max_nodes: usize,
    pub operators: Vec<Operator>,
    #[serde(default)]
    pub constants: Option<Vec<f64>>,
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
    #[serde(default)]
    pub spaces: Vec<Space>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorTarget {
    pub space: Vec<usize>,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSpec {
    pub max_structures: u64,
    pub max_space_size: usize,
    pub max_hypotheses: usize,
}

impl Default for LimitsSpec {
    fn default() -> Self {
        LimitsSpec {
            max_structures: DEFAULT_MAX_STRUCTURES,
            max_space_size: DEFAULT_MAX_SPACE_SIZE,
            max_hypotheses: DEFAULT_MAX_HYPOTHESES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub threads: usize,
    pub top: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("welfarium-out"),
            format: OutputFormat::Json,
            threads: 1,
            top: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub random_cases: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { random_cases: 200 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub horizon: Option<usize>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub state_a: Option<String>,
    pub state_b: Option<String>,
    pub posterior_space: Option<Vec<usize>>,
    pub posterior_time: Option<usize>,
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: CellularSystem,
    pub initial: WorldState,
    pub compare: Option<(WorldState, WorldState)>,
    pub policy: TruncationPolicy,
    pub posterior: Option<(Space, usize)>,
    pub output: OutputSpec,
    pub seed: u64,
    pub verify_cases: usize,
    pub max_hypotheses: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = unknown_field(&message).unwrap_or_else(|| "config".into());
            ConfigError::new(key, e.to_string().trim_end())
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.beta {
            self.beta = v;
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.threads {
            self.output.threads = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.output.dir = v.clone();
        }
        if let Some(v) = o.format {
            self.output.format = v;
        }
        match (&o.state_a, &o.state_b, &mut self.compare) {
            (Some(a), Some(b), slot) => *slot = Some([a.clone(), b.clone()]),
            (Some(a), None, Some(pair)) => pair[0] = a.clone(),
            (None, Some(b), Some(pair)) => pair[1] = b.clone(),
            (Some(a), None, slot) => *slot = Some([a.clone(), self.initial.clone()]),
            (None, Some(b), slot) => *slot = Some([self.initial.clone(), b.clone()]),
            (None, None, _) => {}
        }
        if o.posterior_space.is_some() || o.posterior_time.is_some() {
            let current = self.posterior.take();
            self.posterior = Some(PosteriorTarget {
                space: o
                    .posterior_space
                    .clone()
                    .or_else(|| current.as_ref().map(|p| p.space.clone()))
                    .unwrap_or_else(|| vec![0]),
                time: o.posterior_time.or(current.map(|p| p.time)).unwrap_or(0),
            });
        }
    }

    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        let system = self.build_system()?;
        let state = |key: &str, text: &str| -> Result<WorldState, ConfigError> {
            let literal = self.states.get(text).map(String::as_str).unwrap_or(text);
            system.parse_state(literal).map_err(|e| ConfigError::new(key, e))
        };
        let initial = state("initial", &self.initial)?;
        let compare = match &self.compare {
            Some([a, b]) => Some((state("compare[0]", a)?, state("compare[1]", b)?)),
            None => None,
        };

        let limits = EnumerationLimits {
            max_structures: self.limits.max_structures,
            max_space_size: self.limits.max_space_size,
        };
        let hypotheses = self.build_hypotheses(&system)?;
        let model = LikelihoodModel::new(self.beta).map_err(|e| ConfigError::new("beta", e))?;
        let policy = TruncationPolicy::new(self.horizon, self.spaces.clone(), hypotheses, model)
            .with_tie_tolerance(self.tie_tolerance)
            .map_err(|e| ConfigError::new("tie_tolerance", e))?
            .with_limits(limits);
        if let SpaceFamily::ExplicitList { spaces } = &self.spaces {
            for s in spaces {
                s.check(system.cell_count())
                    .map_err(|e| ConfigError::new("spaces.spaces", e))?;
            }
        }

        let posterior = match &self.posterior {
            Some(p) => {
                let space = Space::new(p.space.clone())
                    .and_then(|s| s.check(system.cell_count()).map(|_| s))
                    .map_err(|e| ConfigError::new("posterior.space", e))?;
                if p.time > self.horizon {
                    return Err(ConfigError::new(
                        "posterior.time",
                        format!("{} is beyond the horizon {}", p.time, self.horizon),
                    ));
                }
                Some((space, p.time))
            }
            None => None,
        };
        if self.output.threads == 0 {
            return Err(ConfigError::new("output.threads", "must be at least 1"));
        }

        Ok(Experiment {
            system,
            initial,
            compare,
            policy,
            posterior,
            output: self.output.clone(),
            seed: self.seed,
            verify_cases: self.verify.random_cases,
            max_hypotheses: self.limits.max_hypotheses,
        })
    }

    fn build_system(&self) -> Result<CellularSystem, ConfigError> {
        let err = |e| ConfigError::new("system", e);
        match &self.system {
            SystemSpec::Elementary { rule, width, boundary } => {
                CellularSystem::elementary(*rule, *width, *boundary).map_err(err)
            }
            SystemSpec::Lifelike {
                rule,
                width,
                height,
                boundary,
            } => {
                let (birth, survive) = parse_rulestring(rule)
                    .ok_or_else(|| ConfigError::new("system.rule", format!("`{rule}` is not a B/S rulestring")))?;
                CellularSystem::life_like(&birth, &survive, *width, *height, *boundary).map_err(err)
            }
            SystemSpec::Table {
                cells,
                states,
                neighborhoods,
                table,
            } => {
                let mut entries = BTreeMap::new();
                for (key, &out) in table {
                    let tuple =
                        WorldState::parse(key).map_err(|e| ConfigError::new(format!("system.table.{key}"), e))?;
                    entries.insert(tuple.values().to_vec(), out);
                }
                CellularSystem::table(*cells, *states, neighborhoods.clone(), entries).map_err(err)
            }
        }
    }

    fn build_hypotheses(&self, system: &CellularSystem) -> Result<HypothesisSet, ConfigError> {
        let spec = &self.hypotheses;
        let mut exprs: Vec<UtilityExpr> = Vec::new();
        for (k, text) in spec.exprs.iter().enumerate() {
            let key = format!("hypotheses.exprs[{k}]");
            let e = parse(text).map_err(|e| ConfigError::new(&key, e))?;
            udsl::check(&e, system.cell_count(), system.state_count(), self.horizon)
                .map_err(|e| ConfigError::new(&key, e))?;
            exprs.push(e);
        }
        if let Some(en) = &spec.enumerate {
            let mut wl = OperatorWhitelist::new(en.operators.iter().copied());
            if let Some(c) = &en.constants {
                wl.constants = units(c, "hypotheses.enumerate.constants")?;
            }
            if let Some(g) = &en.gammas {
                wl.gammas = units(g, "hypotheses.enumerate.gammas")?;
            }
            for s in &en.spaces {
                s.check(system.cell_count())
                    .map_err(|e| ConfigError::new("hypotheses.enumerate.spaces", e))?;
            }
            wl.spaces = en.spaces.clone();
            let world = HypothesisWorld {
                cell_count: system.cell_count(),
                state_count: system.state_count(),
                horizon: self.horizon,
            };
            let generated = enumerate_hypotheses(world, en.max_nodes, &wl, self.limits.max_hypotheses)
                .map_err(|e| ConfigError::new("hypotheses.enumerate", e))?;
            for e in generated {
                if !exprs.contains(&e) {
                    exprs.push(e);
                }
            }
        }
        let mode = match spec.prior {
            PriorKind::Mdl => PriorMode::Mdl,
            PriorKind::Uniform => PriorMode::Uniform,
            PriorKind::Explicit => PriorMode::Explicit(
                spec.weights
                    .clone()
                    .ok_or_else(|| ConfigError::new("hypotheses.weights", "required for explicit priors"))?,
            ),
        };
        make_prior(exprs, &mode).map_err(|e| ConfigError::new("hypotheses", e))
    }
}

fn units(values: &[f64], key: &str) -> Result<Vec<Unit>, ConfigError> {
    values
        .iter()
        .map(|&v| Unit::new(v).ok_or_else(|| ConfigError::new(key, format!("{v} is outside [0, 1]"))))
        .collect()
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Parses `B3/S23`-style rulestrings into birth and survival counts.
pub fn parse_rulestring(text: &str) -> Option<(Vec<u8>, Vec<u8>)> {
    let (b, s) = text.trim().split_once('/')?;
    let digits = |part: &str, prefix: char| -> Option<Vec<u8>> {
        let rest = part
            .strip_prefix(prefix)
            .or_else(|| part.strip_prefix(prefix.to_ascii_lowercase()))?;
        rest.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect()
    };
    Some((digits(b, 'B')?, digits(s, 'S')?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
horizon = 1
beta = 1.0
initial = "alive"
compare = ["alive", "dead"]

[states]
alive = "1"
dead = "0"

[system]
kind = "table"
cells = 1
states = 2
neighborhoods = [[0]]
table = { "0" = 0, "1" = 1 }

[spaces]
policy = "all-up-to-size"
k = 1

[hypotheses]
exprs = ["(const 0.5)", "(alive 0 1)"]
prior = "uniform"
"#;

    #[test]
    fn resolves_worked_example() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let ex = cfg.resolve().unwrap();
        assert_eq!(ex.initial.to_string(), "1");
        assert_eq!(ex.compare.as_ref().unwrap().1.to_string(), "0");
        assert_eq!(ex.policy.hypotheses.len(), 2);
        assert_eq!(ex.policy.model.beta(), 1.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_toml(&BASE.replace("beta = 1.0", "beta = 1.0\nbetta = 2")).unwrap_err();
        assert_eq!(err.key, "betta");
        let err = ExperimentConfig::from_toml(&BASE.replace("k = 1", "k = 1\nsize = 3")).unwrap_err();
        assert_eq!(err.key, "size");
    }

    #[test]
    fn semantic_errors_are_named() {
        let cfg = ExperimentConfig::from_toml(&BASE.replace("(alive 0 1)", "(alive 0 7)")).unwrap();
        assert_eq!(cfg.resolve().unwrap_err().key, "hypotheses.exprs[1]");
        let cfg = ExperimentConfig::from_toml(&BASE.replace("beta = 1.0", "beta = -1.0")).unwrap();
        assert_eq!(cfg.resolve().unwrap_err().key, "beta");
        let cfg = ExperimentConfig::from_toml(&BASE.replace("initial = \"alive\"", "initial = \"2\"")).unwrap();
        assert_eq!(cfg.resolve().unwrap_err().key, "initial");
        let cfg = ExperimentConfig::from_toml(&BASE.replace("prior = \"uniform\"", "prior = \"explicit\"")).unwrap();
        assert_eq!(cfg.resolve().unwrap_err().key, "hypotheses.weights");
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::from_toml(BASE).unwrap();
        cfg.apply(&Overrides {
            beta: Some(0.0),
            horizon: Some(3),
            state_a: Some("dead".into()),
            posterior_time: Some(2),
            ..Default::default()
        });
        assert_eq!(cfg.beta, 0.0);
        assert_eq!(cfg.horizon, 3);
        assert_eq!(cfg.compare, Some(["dead".to_string(), "dead".to_string()]));
        assert_eq!(cfg.posterior.as_ref().unwrap().time, 2);
    }

    #[test]
    fn enumerated_hypotheses() {
        let text = BASE.replace(
            "exprs = [\"(const 0.5)\", \"(alive 0 1)\"]\nprior = \"uniform\"",
            "prior = \"mdl\"\n[hypotheses.enumerate]\nmax_nodes = 1\noperators = [\"const\", \"alive\"]",
        );
        let ex = ExperimentConfig::from_toml(&text).unwrap().resolve().unwrap();
        let printed: Vec<String> = ex.policy.hypotheses.exprs().map(|e| e.to_string()).collect();
        assert_eq!(
            printed,
            ["(const 0)", "(const 0.5)", "(const 1)", "(alive 0 0)", "(alive 0 1)"]
        );
    }

    #[test]
    fn rulestrings() {
        assert_eq!(parse_rulestring("B3/S23"), Some((vec![3], vec![2, 3])));
        assert_eq!(parse_rulestring("b36/s23"), Some((vec![3, 6], vec![2, 3])));
        assert_eq!(parse_rulestring("B/S"), Some((vec![], vec![])));
        assert_eq!(parse_rulestring("23/3"), None);
    }
}
