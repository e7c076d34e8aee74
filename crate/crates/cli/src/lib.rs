//! Command-line driver: runs experiments described by a TOML config.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sealedbid::egta::{self, EmpiricalGame, MixedProfile, Profile, ReplicatorConfig, RosterEntry};
use sealedbid::oracle;
use sealedbid::prediction::PredictionFile;
use sealedbid::scpp::{self, ScppConfig};
use sealedbid::seed::{self, stream};
use sealedbid::{Bundle, Environment, PredictionSource, PriceHistogram, StrategySpec};

pub use config::ExperimentConfig;

const STRATEGY_HELP: &str = "\
Strategy strings: FAMILY[COUNT][(KEY=VALUE,...)][_HB|_price]
  families  Zero, Truthful, StraightMV (SMV), StraightMU (SMU), AverageMU (AMU),
            BidEval, BidEvalMix, LocalBid
  keys      init=STRATEGY (LocalBid), gen=STRATEGY (BidEval), K=10, Ns=64, C=10,
            Ne=64, k=8, pred=self|uniform|scpp:NAME|point:P1/P2/...
  suffix    _HB (default) or _price picks the statistic of a self-confirming
            prediction derived on the fly
Examples: AverageMU64_HB, LocalBid(init=StraightMU8,K=10,Ns=64,pred=scpp:U53_HB)

Config defaults: scpp games=10000 max_iterations=50 tau=0.05 kappa=harmonic
viewpoints=single verify_games=10000; egta instances=10000 profiles=all
resamples=200 quantile=0.9 tolerance=1e-6 replicator_iterations=100000 starts=10;
oracle trials=500 grid_step=1; valuation count=10; out_dir=out";

#[derive(Debug, Parser)]
#[command(name = "sealedbid", version, about = "Price prediction strategies for simultaneous sealed-bid auctions", after_help = STRATEGY_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config's out_dir.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Valuation sampling.
    #[command(subcommand)]
    Valuation(ValuationCommand),
    /// Self-confirming price predictions.
    #[command(subcommand)]
    Scpp(ScppCommand),
    /// Simulate strategy profiles into a payoff table.
    Simulate,
    /// Empirical game analysis of a payoff table.
    #[command(subcommand)]
    Egta(EgtaCommand),
    /// Compare strategies with the exhaustive best response.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Subcommand)]
pub enum ValuationCommand {
    /// Write sampled valuations, one row per valuation and one column per bundle.
    Sample {
        /// Number of valuations; defaults to valuation.count.
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScppCommand {
    /// Derive a self-confirming prediction for each self-predicting roster strategy.
    Derive {
        /// Derive for this strategy only.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Replay fresh games against a stored prediction and report its KS distance.
    Verify {
        #[arg(long)]
        prediction: PathBuf,
        /// Strategy to replay; defaults to the one recorded in the file.
        #[arg(long)]
        strategy: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EgtaCommand {
    /// Regret of every fully estimated pure profile.
    Regret {
        #[arg(long)]
        payoffs: PathBuf,
    },
    /// Symmetric mixed equilibria with bootstrap regret bounds.
    Solve {
        #[arg(long)]
        payoffs: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Per-trial expected utility of each roster strategy against the optimum.
    Compare {
        /// Compare this strategy only.
        #[arg(long)]
        strategy: Option<String>,
    },
}

/// Runs a parsed command line and returns its one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    if let Some(workers) = cli.global.workers {
        if workers == 0 {
            bail!("--workers must be at least 1");
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let Some(path) = cli.global.config.as_deref() else {
        bail!("missing --config FILE");
    };
    let config = ExperimentConfig::load(path)?;
    let ctx = Session {
        out_dir: cli.global.out_dir.clone().unwrap_or_else(|| config.out_dir.clone()),
        force: cli.global.force,
        config,
    };
    match cli.command {
        Command::Valuation(ValuationCommand::Sample { count }) => ctx.valuation_sample(count),
        Command::Scpp(ScppCommand::Derive { strategy }) => ctx.scpp_derive(strategy.as_deref()),
        Command::Scpp(ScppCommand::Verify { prediction, strategy }) => {
            ctx.scpp_verify(&prediction, strategy.as_deref())
        }
        Command::Simulate => ctx.simulate(),
        Command::Egta(EgtaCommand::Regret { payoffs }) => ctx.egta_regret(&payoffs),
        Command::Egta(EgtaCommand::Solve { payoffs }) => ctx.egta_solve(&payoffs),
        Command::Oracle(OracleCommand::Compare { strategy }) => ctx.oracle_compare(strategy.as_deref()),
    }
}

/// File-name-safe form of a strategy label.
pub fn file_stem(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            'A'..='Z' | 'a'..='z' | '0'..='9' | '-' => out.push(c),
            '=' => out.push('-'),
            '.' => out.push('p'),
            _ if !out.ends_with('_') => out.push('_'),
            _ => {}
        }
    }
    out.trim_end_matches('_').to_string()
}

/// File name of `path`, so outputs do not depend on where inputs live.
fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Seed of the self-confirming search for `spec` under `master`.
pub fn scpp_seed(master: u64, spec: &StrategySpec) -> u64 {
    seed::derive(master, &[stream::SCPP_ITERATION, seed::label_hash(&spec.to_string())])
}

fn csv_record<I, S>(out: &mut String, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
}

struct Session {
    config: ExperimentConfig,
    out_dir: PathBuf,
    force: bool,
}

impl Session {
    fn env(&self) -> Environment {
        self.config.environment
    }

    fn comment(&self) -> String {
        format!("# {}\n", self.config.provenance())
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        if path.exists() && !self.force {
            bail!("refusing to overwrite {}; pass --force", path.display());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    fn parse_strategy(&self, text: &str) -> Result<StrategySpec> {
        let spec: StrategySpec = text.parse()?;
        if let PredictionSource::Named(name) = &spec.source {
            if !self.config.predictions.contains_key(name) {
                bail!("strategy `{spec}` uses prediction `{name}`, which [predictions] does not define");
            }
        }
        Ok(spec)
    }

    fn scpp_config(&self, spec: &StrategySpec) -> Result<ScppConfig> {
        let PredictionSource::SelfConfirming(statistic) = spec.source else {
            bail!("`{spec}` does not use a self-confirming prediction");
        };
        let c = &self.config;
        Ok(ScppConfig {
            statistic,
            games: c.scpp.games,
            max_iterations: c.scpp.max_iterations,
            kappa: c.kappa,
            tau: c.scpp.tau,
            viewpoints: c.viewpoints,
            ..ScppConfig::new(spec.kind.clone(), self.env(), scpp_seed(c.seed, spec))
        })
    }

    /// Runs the self-confirming search for `spec`; returns the file record and KS trace.
    fn derive(&self, spec: &StrategySpec) -> Result<(PredictionFile, Vec<f64>)> {
        let config = self.scpp_config(spec)?;
        let result = scpp::derive_scpp(&config)?;
        let file = PredictionFile {
            environment: self.env().to_string(),
            statistic: config.statistic,
            strategy: spec.to_string(),
            iterations: result.iterations_used,
            games_per_iteration: config.games,
            converged: result.converged,
            final_ks_marg: result.final_ks_marg,
            seed: config.seed,
            config_hash: self.config.hash.clone(),
            prediction: result.prediction,
        };
        Ok((file, result.ks_trace))
    }

    fn load_named(&self, name: &str) -> Result<PriceHistogram> {
        let path = &self.config.predictions[name];
        let file = PredictionFile::read(path)?;
        if file.environment != self.env().to_string() {
            bail!(
                "prediction `{name}` ({}) was derived for {}, not {}",
                path.display(),
                file.environment,
                self.env()
            );
        }
        Ok(file.prediction)
    }

    /// The prediction `spec` bids against, deriving it when self-confirming.
    fn resolve(&self, spec: &StrategySpec) -> Result<PriceHistogram> {
        let env = self.env();
        match &spec.source {
            PredictionSource::SelfConfirming(_) => Ok(self.derive(spec)?.0.prediction),
            PredictionSource::Uniform => Ok(PriceHistogram::uniform(env.goods, env.price_cap())),
            PredictionSource::Named(name) => self.load_named(name),
            PredictionSource::Point(prices) => {
                if prices.len() != env.goods {
                    bail!("`{spec}` gives {} point prices for {} goods", prices.len(), env.goods);
                }
                Ok(PriceHistogram::point(prices, env.price_cap())?)
            }
        }
    }

    fn valuation_sample(&self, count: Option<usize>) -> Result<String> {
        let env = self.env();
        let count = count.unwrap_or(self.config.valuation.count);
        let mut out = self.comment();
        let mut header = vec!["valuation".to_string()];
        header.extend(Bundle::all(env.goods).map(|b| b.to_string()));
        csv_record(&mut out, &header);
        for i in 0..count {
            let mut rng = seed::rng(self.config.seed, &[stream::VALUATION, i as u64]);
            let v = env.sample_valuation(&mut rng);
            let mut row = vec![i.to_string()];
            row.extend(v.table().iter().map(|x| x.to_string()));
            csv_record(&mut out, &row);
        }
        let path = self.write("valuations.csv", &out)?;
        Ok(format!("sampled {count} {env} valuations into {}", path.display()))
    }

    fn scpp_derive(&self, strategy: Option<&str>) -> Result<String> {
        let specs: Vec<StrategySpec> = match strategy {
            Some(s) => vec![self.parse_strategy(s)?],
            None => self
                .config
                .strategies
                .iter()
                .filter(|s| matches!(s.source, PredictionSource::SelfConfirming(_)))
                .cloned()
                .collect(),
        };
        if specs.is_empty() {
            bail!("no roster strategy uses a self-confirming prediction; pass --strategy");
        }
        let mut notes = Vec::new();
        for spec in &specs {
            let (file, trace_values) = self.derive(spec)?;
            let stem = format!("{}_{}", self.env().short_label(), file_stem(&spec.to_string()));
            self.write(&format!("scpp/{stem}.toml"), &file.to_toml_string())?;
            let mut trace = self.comment();
            csv_record(&mut trace, ["iteration", "ks_marg"]);
            for (t, ks) in trace_values.iter().enumerate() {
                csv_record(&mut trace, [(t + 1).to_string(), ks.to_string()]);
            }
            self.write(&format!("scpp/{stem}_trace.csv"), &trace)?;
            notes.push(format!(
                "{spec}: {} after {} iterations, KS {:.4}",
                if file.converged { "converged" } else { "not converged" },
                file.iterations,
                file.final_ks_marg
            ));
        }
        Ok(format!("derived {} prediction(s) for {}: {}", specs.len(), self.env(), notes.join("; ")))
    }

    fn scpp_verify(&self, path: &Path, strategy: Option<&str>) -> Result<String> {
        let file = PredictionFile::read(path)?;
        if file.environment != self.env().to_string() {
            bail!("{} was derived for {}, not {}", path.display(), file.environment, self.env());
        }
        let spec = self.parse_strategy(strategy.unwrap_or(&file.strategy))?;
        let games = self.config.scpp.verify_games;
        let seed = seed::derive(self.config.seed, &[stream::VERIFY, seed::label_hash(&spec.to_string())]);
        let ks = scpp::verify_self_confirming(
            &spec.kind,
            &file.prediction,
            &self.env(),
            games,
            file.statistic,
            self.config.viewpoints,
            seed,
        )?;
        let mut out = self.comment();
        csv_record(&mut out, ["prediction", "strategy", "statistic", "games", "ks_marg"]);
        csv_record(
            &mut out,
            [
                display_name(path),
                spec.to_string(),
                file.statistic.to_string(),
                games.to_string(),
                ks.to_string(),
            ],
        );
        let name = format!(
            "verify/{}.csv",
            path.file_stem().map_or_else(|| "prediction".into(), |s| s.to_string_lossy().into_owned())
        );
        let written = self.write(&name, &out)?;
        Ok(format!("{spec} against {}: KS {ks:.4} over {games} games, written to {}", path.display(), written.display()))
    }

    fn profiles(&self) -> Result<Vec<Profile>> {
        let agents = self.env().agents;
        match &self.config.egta.profiles {
            config::ProfileSelection::List(list) => list
                .iter()
                .map(|p| Ok(Profile::from_labels(&p.iter().map(|s| s.to_string()).collect::<Vec<_>>())?))
                .collect(),
            config::ProfileSelection::All => {
                let mut names: Vec<String> = self.config.strategies.iter().map(|s| s.to_string()).collect();
                names.sort();
                names.dedup();
                if names.is_empty() {
                    bail!("the strategy roster is empty");
                }
                let mut out = Vec::new();
                multisets(names.len(), agents, &mut vec![], &mut |counts| {
                    let map: BTreeMap<String, usize> = names
                        .iter()
                        .zip(counts)
                        .filter(|(_, &c)| c > 0)
                        .map(|(n, &c)| (n.clone(), c))
                        .collect();
                    out.push(map);
                });
                out.into_iter().map(|m| Ok(Profile::new(m)?)).collect()
            }
        }
    }

    fn simulate(&self) -> Result<String> {
        let profiles = self.profiles()?;
        let mut specs: BTreeMap<String, StrategySpec> = BTreeMap::new();
        for p in &profiles {
            for s in p.strategies() {
                if !specs.contains_key(s) {
                    specs.insert(s.to_string(), self.parse_strategy(s)?);
                }
            }
        }
        let roster = specs
            .iter()
            .map(|(name, spec)| {
                Ok(RosterEntry {
                    name: name.clone(),
                    kind: spec.kind.clone(),
                    prediction: Arc::new(self.resolve(spec)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let instances = self.config.egta.instances;
        let mut game = EmpiricalGame::new();
        for profile in &profiles {
            let seed = egta::profile_seed(self.config.seed, profile);
            let stats = egta::simulate_profile(profile, &roster, &self.env(), instances, seed)?;
            let range = format!("seed={seed} instances=0..{instances}");
            for (strategy, s) in stats {
                game.insert(profile, &strategy, s, &range)?;
            }
        }
        let path = self.write("payoffs.csv", &game.to_csv_string(Some(&self.config.provenance())))?;
        Ok(format!(
            "simulated {} profile(s) x {instances} instances on {} into {}",
            profiles.len(),
            self.env(),
            path.display()
        ))
    }

    fn load_game(&self, path: &Path) -> Result<EmpiricalGame> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let game = EmpiricalGame::from_csv_str(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(p) = game.players() {
            if p != self.env().agents {
                bail!("{} holds {p}-player profiles but {} has {} agents", path.display(), self.env(), self.env().agents);
            }
        }
        Ok(game)
    }

    fn egta_regret(&self, path: &Path) -> Result<String> {
        let game = self.load_game(path)?;
        let mut out = self.comment();
        csv_record(&mut out, ["profile", "regret", "missing_deviations"]);
        let mut best: Option<(f64, Profile)> = None;
        for profile in game.profiles().into_iter().filter(|p| game.is_complete(p)) {
            match egta::regret(&game, &profile) {
                Ok(r) => {
                    csv_record(&mut out, [profile.to_string(), r.to_string(), String::new()]);
                    if best.as_ref().is_none_or(|(b, _)| r < *b) {
                        best = Some((r, profile));
                    }
                }
                Err(sealedbid::Error::Incomplete(missing)) => {
                    csv_record(&mut out, [profile.to_string(), String::new(), missing.join(" | ")]);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let written = self.write("regret.csv", &out)?;
        Ok(match best {
            Some((r, p)) => format!("lowest pure-profile regret {r:.6} at {p}; table in {}", written.display()),
            None => format!("no profile has all deviations estimated; table in {}", written.display()),
        })
    }

    fn egta_solve(&self, path: &Path) -> Result<String> {
        let game = self.load_game(path)?;
        let e = &self.config.egta;
        let replicator = ReplicatorConfig {
            iterations: e.replicator_iterations,
            tolerance: e.tolerance,
            starts: e.starts,
            seed: seed::derive(self.config.seed, &[stream::REPLICATOR]),
        };
        let found = egta::find_equilibria(&game, &replicator)?;
        let boot_seed = seed::derive(self.config.seed, &[stream::BOOTSTRAP]);
        let mut records = Vec::new();
        for eq in &found {
            let bound = match eq.regret {
                Some(_) => match egta::bootstrap_regret_bound(&game, &eq.mixture, e.resamples, e.quantile, boot_seed) {
                    Ok(b) => Some(b),
                    Err(sealedbid::Error::InsufficientSamples(_)) => None,
                    Err(err) => return Err(err.into()),
                },
                None => None,
            };
            records.push(EquilibriumRecord::new(&eq.mixture, eq.regret, bound, eq.confirmed, e.tolerance));
        }
        let report = SolveReport {
            config_hash: self.config.hash.clone(),
            seed: self.config.seed,
            payoffs: display_name(path),
            tolerance: e.tolerance,
            bootstrap_resamples: e.resamples,
            bootstrap_quantile: e.quantile,
            equilibria: records,
        };
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        let written = self.write("equilibria.json", &json)?;
        let confirmed = report.equilibria.iter().filter(|r| r.confirmed).count();
        let mut summary = format!("{} candidate equilibria, {confirmed} confirmed", report.equilibria.len());
        if let Some(top) = report.equilibria.first() {
            let _ = write!(summary, "; best {}", top.label);
        }
        let _ = write!(summary, "; written to {}", written.display());
        Ok(summary)
    }

    fn oracle_compare(&self, strategy: Option<&str>) -> Result<String> {
        let specs: Vec<StrategySpec> = match strategy {
            Some(s) => vec![self.parse_strategy(s)?],
            None => self.config.strategies.clone(),
        };
        if specs.is_empty() {
            bail!("the strategy roster is empty; pass --strategy");
        }
        let o = &self.config.oracle;
        let mut notes = Vec::new();
        for spec in &specs {
            let prediction = self.resolve(spec)?;
            let seed = seed::derive(self.config.seed, &[stream::ORACLE, seed::label_hash(&spec.to_string())]);
            let summary = oracle::optimality_ratio(&spec.kind, &self.env(), &prediction, o.trials, o.grid_step, seed)?;
            let mut out = self.comment();
            csv_record(&mut out, ["trial", "strategy_eu", "optimal_eu"]);
            for r in &summary.trials {
                csv_record(&mut out, [r.trial.to_string(), r.strategy_eu.to_string(), r.optimal_eu.to_string()]);
            }
            let stem = format!("{}_{}", self.env().short_label(), file_stem(&spec.to_string()));
            self.write(&format!("oracle/{stem}.csv"), &out)?;
            notes.push(format!(
                "{spec} {:.2}%{}",
                100.0 * summary.ratio,
                if summary.approximate { " (grid approximate)" } else { "" }
            ));
        }
        Ok(format!("optimality over {} trials on {}: {}", o.trials, self.env(), notes.join("; ")))
    }
}

/// Calls `f` with every vector of `k` nonnegative counts summing to `n`.
fn multisets(k: usize, n: usize, prefix: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if prefix.len() + 1 == k {
        prefix.push(n);
        f(prefix);
        prefix.pop();
        return;
    }
    for c in (0..=n).rev() {
        prefix.push(c);
        multisets(k, n - c, prefix, f);
        prefix.pop();
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    config_hash: String,
    seed: u64,
    payoffs: String,
    tolerance: f64,
    bootstrap_resamples: usize,
    bootstrap_quantile: f64,
    equilibria: Vec<EquilibriumRecord>,
}

#[derive(Debug, Serialize)]
struct EquilibriumRecord {
    label: String,
    support: Vec<String>,
    probabilities: BTreeMap<String, f64>,
    /// Regret against every strategy in the table, if all deviations are known.
    regret: Option<f64>,
    bootstrap_bound: Option<f64>,
    /// Regret within the tolerance.
    confirmed: bool,
    /// Regret within the tolerance plus twice the bootstrap bound.
    within_noise: bool,
}

impl EquilibriumRecord {
    fn new(mix: &MixedProfile, regret: Option<f64>, bound: Option<f64>, confirmed: bool, tolerance: f64) -> Self {
        EquilibriumRecord {
            label: mix.to_string(),
            support: mix.support(),
            probabilities: mix.weights().clone(),
            regret,
            bootstrap_bound: bound,
            confirmed,
            within_noise: matches!((regret, bound), (Some(r), Some(b)) if r <= tolerance + 2.0 * b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("LocalBid(init=StraightMU8,K=10,Ns=64)_HB"), "LocalBid_init-StraightMU8_K-10_Ns-64_HB");
        assert_eq!(file_stem("StraightMV(pred=point:3/4/5)"), "StraightMV_pred-point_3_4_5");
    }

    #[test]
    fn multisets_are_enumerated_once() {
        let mut seen = Vec::new();
        multisets(3, 3, &mut vec![], &mut |c| seen.push(c.to_vec()));
        // C(5, 2)
        assert_eq!(seen.len(), 10);
        assert!(seen.iter().all(|c| c.iter().sum::<usize>() == 3));
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }
}
