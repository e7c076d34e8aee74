//! Text serialization of price predictions.
//!
//! ```toml
//! environment = "U[3,3]"
//! statistic = "HB"
//! p_max = 50
//! goods = 3
//! strategy = "StraightMU8_HB"
//! iterations = 7
//! games_per_iteration = 10000
//! converged = true
//! final_ks_marg = 0.0132
//! seed = "42"                  # a string: seeds span the full u64 range
//! config_hash = "..."
//!
//! [[marginal]]
//! mass = [0.0, 0.012, ...]
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! yields bit-identical mass vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Marginal, PriceHistogram, Statistic};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MarginalRecord {
    mass: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Record {
    environment: String,
    statistic: Statistic,
    p_max: usize,
    goods: usize,
    strategy: String,
    iterations: usize,
    games_per_iteration: usize,
    converged: bool,
    final_ks_marg: f64,
    seed: String,
    config_hash: String,
    marginal: Vec<MarginalRecord>,
}

/// A stored prediction plus the metadata of the run that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFile {
    pub environment: String,
    pub statistic: Statistic,
    pub strategy: String,
    pub iterations: usize,
    pub games_per_iteration: usize,
    pub converged: bool,
    pub final_ks_marg: f64,
    pub seed: u64,
    pub config_hash: String,
    pub prediction: PriceHistogram,
}

impl PredictionFile {
    pub fn to_toml_string(&self) -> String {
        let record = Record {
            environment: self.environment.clone(),
            statistic: self.statistic,
            p_max: self.prediction.p_max(),
            goods: self.prediction.goods(),
            strategy: self.strategy.clone(),
            iterations: self.iterations,
            games_per_iteration: self.games_per_iteration,
            converged: self.converged,
            final_ks_marg: self.final_ks_marg,
            seed: self.seed.to_string(),
            config_hash: self.config_hash.clone(),
            marginal: self
                .prediction
                .marginals()
                .iter()
                .map(|m| MarginalRecord {
                    mass: m.mass().to_vec(),
                })
                .collect(),
        };
        toml::to_string(&record).expect("prediction records always serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let record: Record =
            toml::from_str(text).map_err(|e| Error::Format(format!("prediction file: {e}")))?;
        if record.marginal.len() != record.goods {
            return Err(Error::Format(format!(
                "prediction file declares {} goods but holds {} marginals",
                record.goods,
                record.marginal.len()
            )));
        }
        let marginals = record
            .marginal
            .into_iter()
            .map(|m| {
                if m.mass.len() != record.p_max + 1 {
                    return Err(Error::Format(format!(
                        "marginal has {} bins, expected {}",
                        m.mass.len(),
                        record.p_max + 1
                    )));
                }
                Marginal::from_mass(m.mass)
            })
            .collect::<Result<_>>()?;
        Ok(PredictionFile {
            environment: record.environment,
            statistic: record.statistic,
            strategy: record.strategy,
            iterations: record.iterations,
            games_per_iteration: record.games_per_iteration,
            converged: record.converged,
            final_ks_marg: record.final_ks_marg,
            seed: record
                .seed
                .parse()
                .map_err(|e| Error::Format(format!("prediction file: bad seed `{}`: {e}", record.seed)))?,
            config_hash: record.config_hash,
            prediction: PriceHistogram::new(marginals)?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
