//! Experiment configuration files.
//!
//! ```toml
//! seed = 42                       # master seed, at most 2^63 - 1
//! out_dir = "out"                 # relative to this file
//! strategies = ["LocalBid_HB", "StraightMU8", "AverageMU8"]
//!
//! [environment]
//! family = "U"                    # U (scheduling) or H (homogeneous)
//! goods = 3
//! agents = 3
//!
//! [predictions]                   # names usable as pred=scpp:NAME
//! U33_HB = "predictions/U33_HB.toml"
//!
//! [scpp]
//! games = 10000
//! max_iterations = 50
//! tau = 0.05
//! kappa = "harmonic"              # or a constant in (0, 1]
//! viewpoints = "single"           # or "all"
//! verify_games = 10000
//!
//! [egta]
//! instances = 10000
//! profiles = "all"                # or a list of strategy lists
//! resamples = 200
//! quantile = 0.9
//! tolerance = 1e-6
//! replicator_iterations = 100000
//! starts = 10
//!
//! [oracle]
//! trials = 500
//! grid_step = 1.0
//!
//! [valuation]
//! count = 10
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use sealedbid::scpp::{KappaSchedule, Viewpoints, DEFAULT_GAMES, DEFAULT_MAX_ITERATIONS, DEFAULT_TAU};
use sealedbid::{Environment, PredictionSource, StrategySpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    seed: u64,
    out_dir: Option<String>,
    #[serde(default)]
    strategies: Vec<String>,
    environment: RawEnvironment,
    #[serde(default)]
    predictions: BTreeMap<String, String>,
    #[serde(default)]
    scpp: ScppSettings,
    #[serde(default)]
    egta: RawEgta,
    #[serde(default)]
    oracle: OracleSettings,
    #[serde(default)]
    valuation: ValuationSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    family: String,
    goods: usize,
    agents: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScppSettings {
    pub games: usize,
    pub max_iterations: usize,
    pub tau: f64,
    pub kappa: String,
    pub viewpoints: String,
    pub verify_games: usize,
}

impl Default for ScppSettings {
    fn default() -> Self {
        ScppSettings {
            games: DEFAULT_GAMES,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tau: DEFAULT_TAU,
            kappa: "harmonic".into(),
            viewpoints: "single".into(),
            verify_games: DEFAULT_GAMES,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawProfiles {
    Keyword(String),
    List(Vec<Vec<String>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEgta {
    instances: usize,
    profiles: RawProfiles,
    resamples: usize,
    quantile: f64,
    tolerance: f64,
    replicator_iterations: usize,
    starts: usize,
}

impl Default for RawEgta {
    fn default() -> Self {
        RawEgta {
            instances: 10_000,
            profiles: RawProfiles::Keyword("all".into()),
            resamples: 200,
            quantile: 0.9,
            tolerance: 1e-6,
            replicator_iterations: 100_000,
            starts: 10,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub trials: usize,
    pub grid_step: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            trials: 500,
            grid_step: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValuationSettings {
    pub count: usize,
}

impl Default for ValuationSettings {
    fn default() -> Self {
        ValuationSettings { count: 10 }
    }
}

#[derive(Clone, Debug)]
pub enum ProfileSelection {
    /// Every multiset of roster strategies.
    All,
    List(Vec<Vec<StrategySpec>>),
}

#[derive(Clone, Debug)]
pub struct EgtaSettings {
    pub instances: usize,
    pub profiles: ProfileSelection,
    pub resamples: usize,
    pub quantile: f64,
    pub tolerance: f64,
    pub replicator_iterations: usize,
    pub starts: usize,
}

/// A parsed, validated experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub environment: Environment,
    pub strategies: Vec<StrategySpec>,
    /// Named prediction files, resolved against the config's directory.
    pub predictions: BTreeMap<String, PathBuf>,
    pub scpp: ScppSettings,
    pub kappa: KappaSchedule,
    pub viewpoints: Viewpoints,
    pub egta: EgtaSettings,
    pub oracle: OracleSettings,
    pub valuation: ValuationSettings,
    pub out_dir: PathBuf,
    /// SHA-256 of the config text, hex encoded.
    pub hash: String,
}

/// 1-based line of the first occurrence of `needle` in `text`.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| l.contains(needle)).map(|i| i + 1)
}

fn parse_spec(text: &str, s: &str) -> Result<StrategySpec> {
    s.parse::<StrategySpec>().map_err(|e| match line_of(text, s) {
        Some(line) => anyhow!("line {line}: {e}"),
        None => anyhow!("{e}"),
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        let family = raw.environment.family.parse()?;
        let environment = Environment::new(family, raw.environment.goods, raw.environment.agents)?;

        let strategies = raw
            .strategies
            .iter()
            .map(|s| parse_spec(text, s))
            .collect::<Result<Vec<_>>>()?;

        let egta = raw.egta;
        let profiles = match egta.profiles {
            RawProfiles::Keyword(k) if k == "all" => ProfileSelection::All,
            RawProfiles::Keyword(k) => bail!("egta.profiles must be \"all\" or a list of strategy lists, got \"{k}\""),
            RawProfiles::List(list) => ProfileSelection::List(
                list.iter()
                    .map(|p| {
                        if p.len() != environment.agents {
                            bail!("profile {p:?} lists {} strategies, {environment} has {} agents", p.len(), environment.agents);
                        }
                        p.iter().map(|s| parse_spec(text, s)).collect()
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        if egta.instances == 0 {
            bail!("egta.instances must be at least 1");
        }
        if !(0.0..=1.0).contains(&egta.quantile) {
            bail!("egta.quantile must lie in [0, 1]");
        }
        if raw.oracle.grid_step.is_nan() || raw.oracle.grid_step <= 0.0 {
            bail!("oracle.grid_step must be positive");
        }
        if raw.scpp.verify_games == 0 {
            bail!("scpp.verify_games must be at least 1");
        }
        let kappa: KappaSchedule = raw.scpp.kappa.parse()?;
        let viewpoints: Viewpoints = raw.scpp.viewpoints.parse()?;

        let predictions: BTreeMap<String, PathBuf> = raw
            .predictions
            .into_iter()
            .map(|(name, p)| (name, base.join(p)))
            .collect();
        for (name, path) in &predictions {
            if !path.is_file() {
                bail!("prediction `{name}` refers to missing file {}", path.display());
            }
        }
        let listed = match &profiles {
            ProfileSelection::All => Vec::new(),
            ProfileSelection::List(list) => list.iter().flatten().collect(),
        };
        for spec in strategies.iter().chain(listed) {
            if let PredictionSource::Named(name) = &spec.source {
                if !predictions.contains_key(name) {
                    let line = line_of(text, &format!("scpp:{name}")).map_or(String::new(), |l| format!("line {l}: "));
                    bail!("{line}strategy `{spec}` uses prediction `{name}`, which [predictions] does not define");
                }
            }
        }

        Ok(ExperimentConfig {
            seed: raw.seed,
            environment,
            strategies,
            predictions,
            scpp: raw.scpp,
            kappa,
            viewpoints,
            egta: EgtaSettings {
                instances: egta.instances,
                profiles,
                resamples: egta.resamples,
                quantile: egta.quantile,
                tolerance: egta.tolerance,
                replicator_iterations: egta.replicator_iterations,
                starts: egta.starts,
            },
            oracle: raw.oracle,
            valuation: raw.valuation,
            out_dir: base.join(raw.out_dir.unwrap_or_else(|| "out".into())),
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    /// One-line provenance stamp for output files.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }
}
