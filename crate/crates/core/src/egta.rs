//! Empirical game analysis over symmetric strategy profiles.
//!
//! Profiles are multisets of strategy names. The payoff table keeps running
//! sums per (profile, strategy), which is enough for means, variances and a
//! normal-approximation bootstrap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::run_auction;
use crate::prediction::PriceHistogram;
use crate::seed::{self, stream};
use crate::strategies::StrategyKind;
use crate::valuation::Environment;

/// Instances per work unit; fixed so sums never depend on thread count.
const CHUNK: usize = 256;

/// Mixed profiles closer than this in every coordinate are the same.
const DEDUPE_DISTANCE: f64 = 1e-3;

/// A symmetric pure profile: how many players use each strategy.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Profile(BTreeMap<String, usize>);

impl Profile {
    pub fn new(counts: BTreeMap<String, usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Parameter("a profile needs at least one player".into()));
        }
        if let Some((s, _)) = counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Parameter(format!("strategy `{s}` has a zero count")));
        }
        if let Some(s) = counts.keys().find(|s| s.is_empty() || s.contains(';')) {
            return Err(Error::Parameter(format!("strategy name `{s}` is empty or contains `;`")));
        }
        Ok(Profile(counts))
    }

    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for l in labels {
            *counts.entry(l.as_ref().to_string()).or_insert(0) += 1;
        }
        Self::new(counts)
    }

    /// Everyone plays `strategy`.
    pub fn pure(strategy: &str, players: usize) -> Result<Self> {
        Self::new(BTreeMap::from([(strategy.to_string(), players)]))
    }

    pub fn players(&self) -> usize {
        self.0.values().sum()
    }

    pub fn count(&self, strategy: &str) -> usize {
        self.0.get(strategy).copied().unwrap_or(0)
    }

    pub fn strategies(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.0
    }

    /// One player switches from `from` to `to`; `None` if nobody plays
    /// `from`.
    pub fn deviate(&self, from: &str, to: &str) -> Option<Profile> {
        let mut counts = self.0.clone();
        let c = counts.get_mut(from)?;
        *c -= 1;
        if *c == 0 {
            counts.remove(from);
        }
        *counts.entry(to.to_string()).or_insert(0) += 1;
        Some(Profile(counts))
    }

    /// Players in canonical order, one entry per player.
    pub fn expand(&self) -> Vec<&str> {
        self.0
            .iter()
            .flat_map(|(s, &c)| std::iter::repeat_n(s.as_str(), c))
            .collect()
    }
}

/// Canonical form: player strategies sorted and joined by `;`.
impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expand().join(";"))
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels: Vec<&str> = s.split(';').map(str::trim).collect();
        Self::from_labels(&labels)
    }
}

/// Running sums of payoff samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PayoffStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl PayoffStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &PayoffStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PayoffEntry {
    pub stats: PayoffStats,
    /// Where the samples came from, e.g. `seed=42 instances=0..10000`.
    pub seed_range: String,
}

/// Payoff estimates keyed by (profile, strategy).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmpiricalGame {
    table: BTreeMap<(Profile, String), PayoffEntry>,
}

pub const CSV_HEADER: [&str; 8] = [
    "profile", "strategy", "count", "mean", "variance", "sum", "sum_sq", "seed_range",
];

impl EmpiricalGame {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds samples for `strategy` in `profile`, merging with any stored
    /// entry.
    pub fn insert(&mut self, profile: &Profile, strategy: &str, stats: PayoffStats, seed_range: &str) -> Result<()> {
        if profile.count(strategy) == 0 {
            return Err(Error::Parameter(format!("`{strategy}` is not played in profile {profile}")));
        }
        if stats.count == 0 {
            return Err(Error::InsufficientSamples(format!("no samples for `{strategy}` in {profile}")));
        }
        if let Some(p) = self.players() {
            if p != profile.players() {
                return Err(Error::Parameter(format!(
                    "profile {profile} has {} players, the game has {p}",
                    profile.players()
                )));
            }
        }
        let key = (profile.clone(), strategy.to_string());
        match self.table.get_mut(&key) {
            Some(entry) => {
                entry.stats.merge(&stats);
                entry.seed_range = format!("{} + {seed_range}", entry.seed_range);
            }
            None => {
                self.table.insert(
                    key,
                    PayoffEntry {
                        stats,
                        seed_range: seed_range.to_string(),
                    },
                );
            }
        }
        Ok(())
    }

    pub fn players(&self) -> Option<usize> {
        self.table.keys().next().map(|(p, _)| p.players())
    }

    /// Every strategy appearing in some stored profile.
    pub fn strategies(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.table.keys().flat_map(|(p, _)| p.strategies()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn profiles(&self) -> Vec<Profile> {
        let set: BTreeSet<&Profile> = self.table.keys().map(|(p, _)| p).collect();
        set.into_iter().cloned().collect()
    }

    pub fn entry(&self, profile: &Profile, strategy: &str) -> Option<&PayoffEntry> {
        self.table.get(&(profile.clone(), strategy.to_string()))
    }

    pub fn payoff(&self, profile: &Profile, strategy: &str) -> Option<f64> {
        self.entry(profile, strategy).map(|e| e.stats.mean())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Profile, &str, &PayoffEntry)> {
        self.table.iter().map(|((p, s), e)| (p, s.as_str(), e))
    }

    /// Whether every strategy in the profile has an estimate.
    pub fn is_complete(&self, profile: &Profile) -> bool {
        profile.strategies().all(|s| self.payoff(profile, s).is_some())
    }

    /// CSV with an optional leading `#` comment line.
    pub fn to_csv_string(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for ((p, s), e) in &self.table {
            w.write_record([
                p.to_string(),
                s.clone(),
                e.stats.count.to_string(),
                e.stats.mean().to_string(),
                e.stats.variance().to_string(),
                e.stats.sum.to_string(),
                e.stats.sum_sq.to_string(),
                e.seed_range.clone(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::Format(format!("payoff table: {e}")))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Format(format!("payoff table lacks a `{name}` column")))
        };
        let (ip, is, ic, isum, isq) = (col("profile")?, col("strategy")?, col("count")?, col("sum")?, col("sum_sq")?);
        let iseed = headers.iter().position(|h| h == "seed_range");
        let mut game = EmpiricalGame::new();
        for (row, record) in r.records().enumerate() {
            let record = record.map_err(|e| Error::Format(format!("payoff table: {e}")))?;
            let line = record.position().map_or(row + 2, |p| p.line() as usize);
            let field = |i: usize| record.get(i).unwrap_or("");
            let bad = |what: &str, e: &dyn fmt::Display| Error::Format(format!("payoff table line {line}: bad {what}: {e}"));
            let profile: Profile = field(ip).parse().map_err(|e| bad("profile", &e))?;
            let stats = PayoffStats {
                count: field(ic).parse().map_err(|e| bad("count", &e))?,
                sum: field(isum).parse().map_err(|e| bad("sum", &e))?,
                sum_sq: field(isq).parse().map_err(|e| bad("sum_sq", &e))?,
            };
            game.insert(&profile, field(is), stats, iseed.map_or("", field))
                .map_err(|e| Error::Format(format!("payoff table line {line}: {e}")))?;
        }
        Ok(game)
    }
}

/// A strategy available to the simulator: its name in profiles, the
/// heuristic and the prediction it bids against.
#[derive(Clone, Debug)]
pub struct RosterEntry {
    pub name: String,
    pub kind: StrategyKind,
    pub prediction: Arc<PriceHistogram>,
}

/// Seed for simulating `profile`, independent of simulation order.
pub fn profile_seed(master: u64, profile: &Profile) -> u64 {
    seed::derive(master, &[stream::PROFILE, seed::label_hash(&profile.to_string())])
}

/// Simulates `instances` games of `profile`. Each instance contributes one
/// sample per strategy: the mean utility of the agents playing it.
pub fn simulate_profile(
    profile: &Profile,
    roster: &[RosterEntry],
    environment: &Environment,
    instances: usize,
    seed: u64,
) -> Result<BTreeMap<String, PayoffStats>> {
    if instances == 0 {
        return Err(Error::Parameter("need at least one instance per profile".into()));
    }
    if profile.players() != environment.agents {
        return Err(Error::Config(format!(
            "profile {profile} has {} players but {environment} has {}",
            profile.players(),
            environment.agents
        )));
    }
    let names: Vec<&str> = profile.strategies().collect();
    let lookup = |name: &str| {
        roster
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    };
    for name in &names {
        let entry = lookup(name)?;
        if entry.prediction.goods() != environment.goods {
            return Err(Error::Config(format!(
                "prediction for `{name}` covers {} goods, {environment} has {}",
                entry.prediction.goods(),
                environment.goods
            )));
        }
    }
    let agents: Vec<(usize, &RosterEntry)> = profile
        .expand()
        .into_iter()
        .map(|s| Ok((names.iter().position(|n| *n == s).expect("listed"), lookup(s)?)))
        .collect::<Result<_>>()?;

    let chunks = instances.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stats = vec![PayoffStats::default(); names.len()];
            let mut sums = vec![0.0; names.len()];
            for instance in c * CHUNK..((c + 1) * CHUNK).min(instances) {
                let mut rng = seed::rng(seed, &[instance as u64]);
                let vals: Vec<_> = agents.iter().map(|_| environment.sample_valuation(&mut rng)).collect();
                let bids = agents
                    .iter()
                    .zip(&vals)
                    .map(|((_, r), v)| r.kind.bid(v, &r.prediction, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let outcome = run_auction(&bids, &mut rng)?;
                sums.iter_mut().for_each(|s| *s = 0.0);
                for (i, ((k, _), v)) in agents.iter().zip(&vals).enumerate() {
                    sums[*k] += outcome.utility(i, v);
                }
                for (k, s) in stats.iter_mut().enumerate() {
                    s.push(sums[k] / profile.count(names[k]) as f64);
                }
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![PayoffStats::default(); names.len()];
    for stats in partial {
        for (t, s) in total.iter_mut().zip(&stats) {
            t.merge(s);
        }
    }
    Ok(names.into_iter().map(String::from).zip(total).collect())
}

/// Largest gain any player gets by switching strategy, counting staying
/// put, so never negative.
pub fn regret(game: &EmpiricalGame, profile: &Profile) -> Result<f64> {
    let strategies = game.strategies();
    let mut missing = BTreeSet::new();
    let mut best: f64 = 0.0;
    for s in profile.strategies() {
        let Some(u) = game.payoff(profile, s) else {
            missing.insert(profile.to_string());
            continue;
        };
        for t in &strategies {
            let dev = profile.deviate(s, t).expect("s is played");
            match game.payoff(&dev, t) {
                Some(x) => best = best.max(x - u),
                None => {
                    missing.insert(dev.to_string());
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(best)
    } else {
        Err(Error::Incomplete(missing.into_iter().collect()))
    }
}

/// A symmetric mixed strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedProfile(BTreeMap<String, f64>);

impl MixedProfile {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.values().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Parameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(MixedProfile(weights.into_iter().filter(|(_, p)| *p > 0.0).collect()))
    }

    pub fn pure(strategy: &str) -> Self {
        MixedProfile(BTreeMap::from([(strategy.to_string(), 1.0)]))
    }

    pub fn prob(&self, strategy: &str) -> f64 {
        self.0.get(strategy).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    /// Largest coordinate difference, over the union of supports.
    pub fn distance(&self, other: &MixedProfile) -> f64 {
        self.0
            .keys()
            .chain(other.0.keys())
            .map(|s| (self.prob(s) - other.prob(s)).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for MixedProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, p)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}: {p:.6}")?;
        }
        Ok(())
    }
}

/// All ways to split `total` players among `parts` strategies.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Opponent multisets of `players − 1` drawn from `support`, each with its
/// multinomial log-coefficient.
fn opponent_profiles(support: &[String], players: usize) -> Vec<(Vec<usize>, f64)> {
    let others = players - 1;
    compositions(others, support.len())
        .into_iter()
        .map(|k| {
            let coef = ln_factorial(others) - k.iter().map(|&c| ln_factorial(c)).sum::<f64>();
            (k, coef)
        })
        .collect()
}

fn with_player(support: &[String], opponents: &[usize], strategy: &str) -> Profile {
    let mut counts: BTreeMap<String, usize> = support
        .iter()
        .zip(opponents)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| (s.clone(), c))
        .collect();
    *counts.entry(strategy.to_string()).or_insert(0) += 1;
    Profile(counts)
}

/// Payoff table restricted to what expected payoffs against mixtures over
/// `support` need, for each strategy in `targets`.
struct MixedTable {
    support: Vec<String>,
    opponents: Vec<(Vec<usize>, f64)>,
    /// `payoffs[t][o]`: target `t` against opponent multiset `o`.
    payoffs: Vec<Vec<f64>>,
}

impl MixedTable {
    fn build(game: &EmpiricalGame, support: &[String], targets: &[String]) -> Result<Self> {
        let players = game
            .players()
            .ok_or_else(|| Error::Incomplete(vec!["(empty payoff table)".into()]))?;
        let opponents = opponent_profiles(support, players);
        let mut missing = BTreeSet::new();
        let payoffs = targets
            .iter()
            .map(|t| {
                opponents
                    .iter()
                    .map(|(k, _)| {
                        let p = with_player(support, k, t);
                        game.payoff(&p, t).unwrap_or_else(|| {
                            missing.insert(p.to_string());
                            f64::NAN
                        })
                    })
                    .collect()
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Incomplete(missing.into_iter().collect()));
        }
        Ok(MixedTable {
            support: support.to_vec(),
            opponents,
            payoffs,
        })
    }

    /// Expected payoff of each target when opponents draw from `x`, a
    /// probability vector over the support.
    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let weights: Vec<f64> = self
            .opponents
            .iter()
            .map(|(k, coef)| {
                let mut w = coef.exp();
                for (&c, &p) in k.iter().zip(x) {
                    if c > 0 {
                        w *= p.powi(c as i32);
                    }
                }
                w
            })
            .collect();
        self.payoffs
            .iter()
            .map(|row| row.iter().zip(&weights).map(|(u, w)| u * w).sum())
            .collect()
    }

    fn vector(&self, mix: &MixedProfile) -> Vec<f64> {
        self.support.iter().map(|s| mix.prob(s)).collect()
    }
}

/// Expected payoff of each strategy in `targets` against opponents drawn
/// from `mix`, by exact expansion over opponent multisets.
pub fn mixed_payoffs(game: &EmpiricalGame, mix: &MixedProfile, targets: &[String]) -> Result<Vec<f64>> {
    let table = MixedTable::build(game, &mix.support(), targets)?;
    Ok(table.evaluate(&table.vector(mix)))
}

/// Largest gain from deviating from `mix` to any strategy in the game.
pub fn mixed_regret(game: &EmpiricalGame, mix: &MixedProfile) -> Result<f64> {
    mixed_regret_over(game, mix, &game.strategies())
}

/// [`mixed_regret`] with deviations limited to `deviations`.
pub fn mixed_regret_over(game: &EmpiricalGame, mix: &MixedProfile, deviations: &[String]) -> Result<f64> {
    let support = mix.support();
    let mut targets: Vec<String> = support.clone();
    targets.extend(deviations.iter().filter(|d| !support.contains(d)).cloned());
    let u = mixed_payoffs(game, mix, &targets)?;
    let own: f64 = support.iter().zip(&u).map(|(s, x)| mix.prob(s) * x).sum();
    Ok(u.iter().map(|x| x - own).fold(0.0, f64::max))
}

/// Payoff an agent loses by switching from the equilibrium mixture to
/// `strategy` while everyone else keeps playing it.
pub fn ne_regret(game: &EmpiricalGame, equilibrium: &MixedProfile, strategy: &str) -> Result<f64> {
    let support = equilibrium.support();
    let mut targets = support.clone();
    targets.push(strategy.to_string());
    let u = mixed_payoffs(game, equilibrium, &targets)?;
    let own: f64 = support.iter().zip(&u).map(|(s, x)| equilibrium.prob(s) * x).sum();
    Ok(own - u[support.len()])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicatorConfig {
    pub iterations: usize,
    /// Restricted regret a fixed point may have.
    pub tolerance: f64,
    /// Random starting points in addition to the uniform mixture.
    pub starts: usize,
    pub seed: u64,
}

impl Default for ReplicatorConfig {
    fn default() -> Self {
        ReplicatorConfig {
            iterations: 100_000,
            tolerance: 1e-6,
            starts: 10,
            seed: 0,
        }
    }
}

fn to_mixture(support: &[String], x: &[f64]) -> MixedProfile {
    let total: f64 = x.iter().sum();
    MixedProfile(
        support
            .iter()
            .zip(x)
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (s.clone(), p / total))
            .collect(),
    )
}

fn restricted_regret(x: &[f64], u: &[f64]) -> f64 {
    let own: f64 = x.iter().zip(u).map(|(p, v)| p * v).sum();
    u.iter().map(|v| v - own).fold(0.0, f64::max)
}

/// Discrete replicator dynamics on the game restricted to `support`, run
/// from the uniform mixture and from random starts. Returns the distinct
/// end points whose regret within the support is at most the tolerance,
/// best first.
pub fn replicator_solve(game: &EmpiricalGame, support: &[String], config: &ReplicatorConfig) -> Result<Vec<MixedProfile>> {
    if support.is_empty() {
        return Err(Error::Parameter("support must name at least one strategy".into()));
    }
    let table = MixedTable::build(game, support, support)?;
    let k = support.len();
    // shift payoffs positive so the update keeps weights nonnegative
    let floor = table.payoffs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let ceiling = table.payoffs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = 1.0 + (ceiling - floor).max(0.0) * 1e-3 - floor;

    let mut rng = seed::rng(config.seed, &[stream::REPLICATOR]);
    let mut starts = vec![vec![1.0 / k as f64; k]];
    for _ in 0..config.starts {
        let e: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = e.iter().sum();
        starts.push(e.into_iter().map(|x: f64| x / total).collect());
    }

    let mut found: Vec<(f64, MixedProfile)> = Vec::new();
    for mut x in starts {
        let mut regret = f64::INFINITY;
        for _ in 0..config.iterations {
            let u = table.evaluate(&x);
            regret = restricted_regret(&x, &u);
            if regret <= config.tolerance * 1e-6 {
                break;
            }
            let fitness: Vec<f64> = u.iter().map(|v| v + shift).collect();
            let mean: f64 = x.iter().zip(&fitness).map(|(p, f)| p * f).sum();
            for (p, f) in x.iter_mut().zip(&fitness) {
                *p *= f / mean;
            }
        }
        if regret.is_infinite() {
            regret = restricted_regret(&x, &table.evaluate(&x));
        }
        if regret <= config.tolerance {
            let mix = to_mixture(support, &x);
            match found.iter_mut().find(|(_, m)| m.distance(&mix) < DEDUPE_DISTANCE) {
                Some(slot) if slot.0 <= regret => {}
                Some(slot) => *slot = (regret, mix),
                None => found.push((regret, mix)),
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found.into_iter().map(|(_, m)| m).collect())
}

/// Upper `quantile` of the equilibrium's regret over `resamples` payoff
/// tables, each entry redrawn as `N(mean, variance / count)`.
pub fn bootstrap_regret_bound(
    game: &EmpiricalGame,
    equilibrium: &MixedProfile,
    resamples: usize,
    quantile: f64,
    seed: u64,
) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::Parameter("need at least one resample".into()));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Parameter(format!("quantile {quantile} outside [0, 1]")));
    }
    if let Some((p, s, _)) = game.entries().find(|(_, _, e)| e.stats.count < 2) {
        return Err(Error::InsufficientSamples(format!(
            "`{s}` in {p} has fewer than two samples, so no variance estimate"
        )));
    }
    // fail early on missing entries
    mixed_regret(game, equilibrium)?;
    let mut regrets = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed, &[stream::BOOTSTRAP, r as u64]);
            let mut perturbed = EmpiricalGame::new();
            for ((p, s), e) in &game.table {
                let n = e.stats.count as f64;
                let z: f64 = StandardNormal.sample(&mut rng);
                let mean = e.stats.mean() + z * (e.stats.variance() / n).sqrt();
                perturbed.table.insert(
                    (p.clone(), s.clone()),
                    PayoffEntry {
                        stats: PayoffStats {
                            count: e.stats.count,
                            sum: mean * n,
                            sum_sq: e.stats.sum_sq,
                        },
                        seed_range: String::new(),
                    },
                );
            }
            mixed_regret(&perturbed, equilibrium)
        })
        .collect::<Result<Vec<f64>>>()?;
    regrets.sort_by(f64::total_cmp);
    let rank = ((quantile * resamples as f64).ceil() as usize).clamp(1, resamples);
    Ok(regrets[rank - 1])
}

/// An equilibrium candidate and its standing in the full game.
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub mixture: MixedProfile,
    /// Regret against every strategy in the game, when all deviation
    /// payoffs are known.
    pub regret: Option<f64>,
    pub confirmed: bool,
}

/// Searches every support whose profiles are fully estimated, then checks
/// each candidate against all deviations.
pub fn find_equilibria(game: &EmpiricalGame, config: &ReplicatorConfig) -> Result<Vec<Equilibrium>> {
    let strategies = game.strategies();
    if strategies.is_empty() {
        return Err(Error::Incomplete(vec!["(empty payoff table)".into()]));
    }
    if strategies.len() > 16 {
        return Err(Error::Capability(format!(
            "support enumeration handles up to 16 strategies, got {}",
            strategies.len()
        )));
    }
    let mut candidates: Vec<MixedProfile> = Vec::new();
    for mask in 1u32..(1 << strategies.len()) {
        let support: Vec<String> = strategies
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, s)| s.clone())
            .collect();
        let found = match replicator_solve(game, &support, config) {
            Ok(found) => found,
            Err(Error::Incomplete(_)) => continue,
            Err(e) => return Err(e),
        };
        for mix in found {
            if !candidates.iter().any(|c| c.distance(&mix) < DEDUPE_DISTANCE) {
                candidates.push(mix);
            }
        }
    }
    let mut out: Vec<Equilibrium> = candidates
        .into_iter()
        .map(|mixture| {
            let regret = mixed_regret(game, &mixture).ok();
            Equilibrium {
                confirmed: regret.is_some_and(|r| r <= config.tolerance),
                regret,
                mixture,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.confirmed
            .cmp(&a.confirmed)
            .then(a.regret.unwrap_or(f64::INFINITY).total_cmp(&b.regret.unwrap_or(f64::INFINITY)))
    });
    Ok(out)
}

/// Draws a payoff-table perturbation used by tests and synthetic games.
pub fn synthetic_game<R: Rng + ?Sized>(
    payoffs: &[(Profile, &str, f64)],
    noise_sd: f64,
    samples: u64,
    rng: &mut R,
) -> Result<EmpiricalGame> {
    let mut game = EmpiricalGame::new();
    for (p, s, mean) in payoffs {
        let mut stats = PayoffStats::default();
        for _ in 0..samples {
            let z: f64 = StandardNormal.sample(rng);
            stats.push(mean + noise_sd * z);
        }
        game.insert(p, s, stats, "synthetic")?;
    }
    Ok(game)
}
