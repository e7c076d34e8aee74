//! Self-confirming price prediction search.
//!
//! Starting from a uniform prediction, all agents repeatedly play the
//! strategy against the current prediction, the resulting prices are
//! tallied, and the prediction moves toward the tally until the two agree
//! in the per-good KS sense.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::run_auction;
use crate::prediction::{blend, ks_marginal, PriceHistogram, Statistic};
use crate::seed::{self, stream};
use crate::strategies::StrategyKind;
use crate::valuation::Environment;

/// Instances simulated per work unit. Fixed so that results never depend
/// on how many threads run.
const CHUNK: usize = 256;

/// Weight `κ_t` given to the new tally at iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KappaSchedule {
    /// `κ_t = 1/t`: the prediction is the running average of all tallies.
    Harmonic,
    Constant(f64),
}

impl KappaSchedule {
    /// `t` counts from 1.
    pub fn kappa(self, t: usize) -> f64 {
        match self {
            KappaSchedule::Harmonic => 1.0 / t.max(1) as f64,
            KappaSchedule::Constant(k) => k,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            KappaSchedule::Constant(k) if !(k > 0.0 && k <= 1.0) => Err(Error::Config(format!(
                "constant kappa must lie in (0, 1], got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for KappaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSchedule::Harmonic => f.write_str("harmonic"),
            KappaSchedule::Constant(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for KappaSchedule {
    type Err = Error;

    /// `harmonic` or a constant such as `0.5`.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("harmonic") {
            return Ok(KappaSchedule::Harmonic);
        }
        let k: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("kappa schedule `{s}` is neither `harmonic` nor a number")))?;
        let schedule = KappaSchedule::Constant(k);
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Whose highest-other-bid the HB statistic records in each instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Viewpoints {
    /// One agent chosen uniformly per instance.
    Single,
    /// Every agent.
    All,
}

impl FromStr for Viewpoints {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Viewpoints::Single),
            "all" => Ok(Viewpoints::All),
            _ => Err(Error::Config(format!("viewpoints must be `single` or `all`, got `{s}`"))),
        }
    }
}

impl fmt::Display for Viewpoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Viewpoints::Single => "single",
            Viewpoints::All => "all",
        })
    }
}

pub const DEFAULT_GAMES: usize = 10_000;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct ScppConfig {
    pub strategy: StrategyKind,
    pub environment: Environment,
    pub statistic: Statistic,
    /// Game instances per iteration.
    pub games: usize,
    pub max_iterations: usize,
    pub kappa: KappaSchedule,
    pub tau: f64,
    pub viewpoints: Viewpoints,
    pub seed: u64,
}

impl ScppConfig {
    /// Default search parameters for `strategy` in `environment`.
    pub fn new(strategy: StrategyKind, environment: Environment, seed: u64) -> Self {
        ScppConfig {
            strategy,
            environment,
            statistic: Statistic::HighestBid,
            games: DEFAULT_GAMES,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            kappa: KappaSchedule::Harmonic,
            tau: DEFAULT_TAU,
            viewpoints: Viewpoints::Single,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.games == 0 {
            return Err(Error::Config("games per iteration must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max iterations must be at least 1".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        self.kappa.validate()?;
        self.strategy.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScppResult {
    pub prediction: PriceHistogram,
    pub iterations_used: usize,
    pub converged: bool,
    /// KS distance between the prediction and the tally of the last
    /// iteration run.
    pub final_ks_marg: f64,
    pub ks_trace: Vec<f64>,
}

/// Seed of the tally at iteration `t` of a search seeded with `seed`.
/// Replaying [`verify_self_confirming`] with this seed and the same game
/// count reproduces the recorded KS value of a converged search.
pub fn iteration_seed(seed: u64, t: usize) -> u64 {
    seed::derive(seed, &[stream::SCPP_ITERATION, t as u64])
}

/// Simulates `games` instances with every agent playing `strategy` against
/// `prediction` and tallies the chosen price statistic, floored onto the
/// prediction's grid, into per-good histograms.
pub fn tally_outcomes(
    strategy: &StrategyKind,
    prediction: &PriceHistogram,
    environment: &Environment,
    games: usize,
    statistic: Statistic,
    viewpoints: Viewpoints,
    seed: u64,
) -> Result<PriceHistogram> {
    if games == 0 {
        return Err(Error::Config("games per iteration must be at least 1".into()));
    }
    if prediction.goods() != environment.goods {
        return Err(Error::Config(format!(
            "prediction covers {} goods but {environment} has {}",
            prediction.goods(),
            environment.goods
        )));
    }
    let goods = environment.goods;
    let p_max = prediction.p_max();
    let bin = |x: f64| (x.floor() as usize).min(p_max);

    let chunks = games.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![vec![0u64; p_max + 1]; goods];
            for instance in c * CHUNK..((c + 1) * CHUNK).min(games) {
                let mut rng = seed::rng(seed, &[stream::TALLY, instance as u64]);
                let bids = (0..environment.agents)
                    .map(|_| {
                        let v = environment.sample_valuation(&mut rng);
                        strategy.bid(&v, prediction, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let outcome = run_auction(&bids, &mut rng)?;
                match (statistic, viewpoints) {
                    (Statistic::Price, _) => {
                        for (j, &p) in outcome.clearing_prices.as_slice().iter().enumerate() {
                            counts[j][bin(p)] += 1;
                        }
                    }
                    (Statistic::HighestBid, Viewpoints::Single) => {
                        let agent = rng.gen_range(0..environment.agents);
                        for (j, &q) in outcome.highest_other_bids[agent].as_slice().iter().enumerate() {
                            counts[j][bin(q)] += 1;
                        }
                    }
                    (Statistic::HighestBid, Viewpoints::All) => {
                        for hb in &outcome.highest_other_bids {
                            for (j, &q) in hb.as_slice().iter().enumerate() {
                                counts[j][bin(q)] += 1;
                            }
                        }
                    }
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![vec![0u64; p_max + 1]; goods];
    for counts in partial {
        for (t, c) in total.iter_mut().zip(counts) {
            for (a, b) in t.iter_mut().zip(c) {
                *a += b;
            }
        }
    }
    PriceHistogram::from_counts(&total)
}

/// Runs the search: tally, stop if the tally is within `tau` of the
/// prediction, otherwise blend `κ_t` of the tally into the prediction.
pub fn derive_scpp(config: &ScppConfig) -> Result<ScppResult> {
    derive_scpp_with(config, |_, _| {})
}

/// [`derive_scpp`] with a callback receiving each iteration's number and KS
/// value.
pub fn derive_scpp_with(config: &ScppConfig, mut progress: impl FnMut(usize, f64)) -> Result<ScppResult> {
    config.validate()?;
    let env = &config.environment;
    let mut prediction = PriceHistogram::uniform(env.goods, env.price_cap());
    let mut trace = Vec::with_capacity(config.max_iterations);
    for t in 1..=config.max_iterations {
        let tally = tally_outcomes(
            &config.strategy,
            &prediction,
            env,
            config.games,
            config.statistic,
            config.viewpoints,
            iteration_seed(config.seed, t),
        )?;
        let ks = ks_marginal(&prediction, &tally)?;
        trace.push(ks);
        progress(t, ks);
        if ks < config.tau {
            return Ok(ScppResult {
                prediction,
                iterations_used: t,
                converged: true,
                final_ks_marg: ks,
                ks_trace: trace,
            });
        }
        prediction = blend(&prediction, &tally, config.kappa.kappa(t))?;
    }
    Ok(ScppResult {
        prediction,
        iterations_used: config.max_iterations,
        converged: false,
        final_ks_marg: *trace.last().expect("at least one iteration"),
        ks_trace: trace,
    })
}

/// Replays `games` fresh instances against `prediction` and returns the KS
/// distance between the prediction and what actually happened.
pub fn verify_self_confirming(
    strategy: &StrategyKind,
    prediction: &PriceHistogram,
    environment: &Environment,
    games: usize,
    statistic: Statistic,
    viewpoints: Viewpoints,
    seed: u64,
) -> Result<f64> {
    let tally = tally_outcomes(strategy, prediction, environment, games, statistic, viewpoints, seed)?;
    ks_marginal(prediction, &tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::Marginal;

    fn closed_form(opponents: i32) -> PriceHistogram {
        // values uniform on 1..=50; highest of `opponents` values
        let cdf: Vec<f64> = (0..=50).map(|q| (q as f64 / 50.0).powi(opponents)).collect();
        let mass: Vec<f64> = (0..=50).map(|q| if q == 0 { cdf[0] } else { cdf[q] - cdf[q - 1] }).collect();
        PriceHistogram::new(vec![Marginal::from_weights(&mass).unwrap()]).unwrap()
    }

    #[test]
    fn truthful_tally_matches_opponent_values() {
        let env = Environment::scheduling(1, 2).unwrap();
        let uniform = PriceHistogram::uniform(1, 50);
        let tally = tally_outcomes(
            &StrategyKind::Truthful,
            &uniform,
            &env,
            100_000,
            Statistic::HighestBid,
            Viewpoints::Single,
            1,
        )
        .unwrap();
        assert!(ks_marginal(&tally, &closed_form(1)).unwrap() < 0.02);
        let mass: f64 = tally.marginal(0).mass().iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bids_tally_a_point_mass() {
        let env = Environment::homogeneous(2, 3).unwrap();
        let pi = PriceHistogram::uniform(2, env.price_cap());
        for stat in [Statistic::HighestBid, Statistic::Price] {
            let tally = tally_outcomes(&StrategyKind::Zero, &pi, &env, 500, stat, Viewpoints::All, 2).unwrap();
            assert_eq!(tally, PriceHistogram::point(&[0, 0], env.price_cap()).unwrap());
        }
    }

    #[test]
    fn tallies_ignore_thread_count() {
        let env = Environment::scheduling(2, 3).unwrap();
        let pi = PriceHistogram::uniform(2, 50);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    tally_outcomes(
                        &StrategyKind::StraightMu { samples: 4 },
                        &pi,
                        &env,
                        3_000,
                        Statistic::HighestBid,
                        Viewpoints::Single,
                        9,
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn three_agent_truthful_search_finds_the_order_statistic() {
        let env = Environment::scheduling(1, 3).unwrap();
        let mut config = ScppConfig::new(StrategyKind::Truthful, env, 3);
        config.games = 100_000;
        config.max_iterations = 20;
        config.tau = 0.01;
        let result = derive_scpp(&config).unwrap();
        assert!(result.converged, "{:?}", result.ks_trace);
        assert!(result.final_ks_marg < config.tau);
        assert_eq!(result.ks_trace.len(), result.iterations_used);
        assert!(ks_marginal(&result.prediction, &closed_form(2)).unwrap() < 0.03);
    }

    #[test]
    fn large_tau_converges_immediately() {
        let env = Environment::scheduling(2, 2).unwrap();
        let mut config = ScppConfig::new(StrategyKind::StraightMv, env, 4);
        config.games = 100;
        config.tau = 1.5;
        let result = derive_scpp(&config).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations_used, 1);
        assert_eq!(result.prediction, PriceHistogram::uniform(2, 50));
    }

    #[test]
    fn prediction_blind_strategy_settles_after_one_blend() {
        let env = Environment::scheduling(2, 3).unwrap();
        let mut config = ScppConfig::new(StrategyKind::Truthful, env, 5);
        config.games = 20_000;
        let result = derive_scpp(&config).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations_used, 2);
    }

    #[test]
    fn unconverged_search_reports_the_last_distance() {
        let env = Environment::scheduling(2, 3).unwrap();
        let mut config = ScppConfig::new(StrategyKind::StraightMu { samples: 2 }, env, 6);
        config.games = 200;
        config.max_iterations = 3;
        config.tau = 1e-6;
        let result = derive_scpp(&config).unwrap();
        assert!(!result.converged);
        assert_eq!(result.ks_trace.len(), 3);
        assert_eq!(result.final_ks_marg, result.ks_trace[2]);
    }

    #[test]
    fn verification_replays_the_final_tally() {
        let env = Environment::scheduling(2, 3).unwrap();
        let mut config = ScppConfig::new(StrategyKind::StraightMu { samples: 8 }, env, 7);
        config.games = 5_000;
        config.tau = 0.1;
        let result = derive_scpp(&config).unwrap();
        assert!(result.converged);
        let replay = verify_self_confirming(
            &config.strategy,
            &result.prediction,
            &env,
            config.games,
            config.statistic,
            config.viewpoints,
            iteration_seed(config.seed, result.iterations_used),
        )
        .unwrap();
        assert_eq!(replay, result.final_ks_marg);

        let uniform = PriceHistogram::uniform(1, 50);
        let score = verify_self_confirming(
            &StrategyKind::Truthful,
            &uniform,
            &Environment::scheduling(1, 3).unwrap(),
            20_000,
            Statistic::HighestBid,
            Viewpoints::Single,
            8,
        )
        .unwrap();
        assert!(score >= 0.2, "{score}");
    }

    #[test]
    fn config_validation() {
        let env = Environment::scheduling(2, 2).unwrap();
        let good = ScppConfig::new(StrategyKind::StraightMv, env, 0);
        assert!(good.validate().is_ok());
        for bad in [
            ScppConfig { games: 0, ..good.clone() },
            ScppConfig { max_iterations: 0, ..good.clone() },
            ScppConfig { tau: 0.0, ..good.clone() },
            ScppConfig { kappa: KappaSchedule::Constant(0.0), ..good.clone() },
            ScppConfig { kappa: KappaSchedule::Constant(1.5), ..good.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        assert_eq!("harmonic".parse::<KappaSchedule>().unwrap(), KappaSchedule::Harmonic);
        assert_eq!("0.25".parse::<KappaSchedule>().unwrap(), KappaSchedule::Constant(0.25));
        assert!("2".parse::<KappaSchedule>().is_err());
        assert_eq!(KappaSchedule::Harmonic.kappa(4), 0.25);
    }
}
