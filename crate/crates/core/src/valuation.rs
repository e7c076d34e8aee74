//! Bundle valuations: the scheduling (`U`) and homogeneous-good (`H`)
//! generators, surplus, the acquisition problem and both marginal-value
//! notions.
//!
//! A [`Valuation`] is stored as a table with one entry per bundle bitmask, so
//! bundle lookups in the simulation inner loops are a single index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mechanism::PriceVector;

/// Upper limit on goods for anything that enumerates all bundles.
pub const MAX_GOODS: usize = 20;

/// Largest completion value drawn by the scheduling generator.
pub const SCHEDULING_MAX_VALUE: u32 = 50;

/// Largest first-unit marginal value drawn by the homogeneous generator.
pub const HOMOGENEOUS_MAX_MARGINAL: u32 = 127;

/// A set of goods as a bitmask; bit `j` is good `j` (0-based).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bundle(u32);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub fn from_bits(bits: u32) -> Self {
        Bundle(bits)
    }

    pub fn full(goods: usize) -> Self {
        debug_assert!(goods <= MAX_GOODS);
        Bundle(((1u64 << goods) - 1) as u32)
    }

    /// Builds a bundle from 0-based good indices.
    pub fn from_goods(goods: &[usize]) -> Self {
        Bundle(goods.iter().fold(0u32, |acc, &j| acc | (1 << j)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, good: usize) -> bool {
        self.0 & (1 << good) != 0
    }

    pub fn with(self, good: usize) -> Self {
        Bundle(self.0 | (1 << good))
    }

    pub fn without(self, good: usize) -> Self {
        Bundle(self.0 & !(1 << good))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    /// 0-based goods in ascending order.
    pub fn goods(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |j| bits & (1 << j) != 0)
    }

    /// All bundles over `goods` goods, in bitmask order.
    pub fn all(goods: usize) -> impl Iterator<Item = Bundle> {
        (0..1u32 << goods).map(Bundle)
    }
}

impl fmt::Debug for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Goods are shown 1-based, as `{1,3}`.
impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.goods().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        f.write_str("}")
    }
}

/// A bundle-to-value function over `goods` goods, tabulated for every bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct Valuation {
    goods: usize,
    table: Vec<f64>,
    max_value: f64,
}

impl Valuation {
    pub fn from_table(goods: usize, table: Vec<f64>) -> Result<Self> {
        if goods == 0 || goods > MAX_GOODS {
            return Err(Error::Capability(format!(
                "valuations support 1..={MAX_GOODS} goods, got {goods}"
            )));
        }
        check_len(1 << goods, table.len())?;
        if let Some(bad) = table.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Parameter(format!(
                "bundle values must be finite and nonnegative, found {bad}"
            )));
        }
        let max_value = table.iter().copied().fold(0.0, f64::max);
        Ok(Valuation {
            goods,
            table,
            max_value,
        })
    }

    pub fn from_fn(goods: usize, f: impl Fn(Bundle) -> f64) -> Result<Self> {
        if goods == 0 || goods > MAX_GOODS {
            return Err(Error::Capability(format!(
                "valuations support 1..={MAX_GOODS} goods, got {goods}"
            )));
        }
        Self::from_table(goods, Bundle::all(goods).map(f).collect())
    }

    /// Each good has its own value and bundle values add up.
    pub fn additive(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |x| x.goods().map(|j| values[j]).sum())
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    #[inline]
    pub fn value(&self, bundle: Bundle) -> f64 {
        self.table[bundle.index()]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// The bound V̄ of this instance: the largest bundle value.
    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    /// A price at which no optimal acquisition ever contains the good.
    pub fn unavailable_price(&self) -> f64 {
        self.max_value + 1.0
    }

    /// `X ⊆ X'` implies `v(X) <= v(X')`.
    pub fn has_free_disposal(&self) -> bool {
        Bundle::all(self.goods).all(|x| {
            (0..self.goods)
                .filter(|&j| !x.contains(j))
                .all(|j| self.value(x) <= self.value(x.with(j)))
        })
    }

    /// Value of the bundle minus its cost at `prices`.
    pub fn surplus(&self, bundle: Bundle, prices: &PriceVector) -> Result<f64> {
        check_len(self.goods, prices.len())?;
        let cost: f64 = bundle.goods().map(|j| prices[j]).sum();
        Ok(self.value(bundle) - cost)
    }

    /// Solves the acquisition problem by enumerating every bundle.
    ///
    /// Returns the surplus-maximizing bundle (lowest bitmask among ties) and
    /// the optimal surplus, which is never negative since the empty bundle is
    /// always feasible.
    pub fn acquire(&self, prices: &PriceVector) -> Result<(Bundle, f64)> {
        check_len(self.goods, prices.len())?;
        let costs = bundle_costs(prices.as_slice());
        let mut best = (Bundle::EMPTY, self.table[0]);
        for (mask, (&value, &cost)) in self.table.iter().zip(&costs).enumerate().skip(1) {
            let surplus = value - cost;
            if surplus > best.1 {
                best = (Bundle(mask as u32), surplus);
            }
        }
        Ok(best)
    }

    /// `v(X ∪ {x}) − v(X)` for a good outside the bundle.
    pub fn marginal_value_bundle(&self, good: usize, bundle: Bundle) -> Result<f64> {
        if good >= self.goods {
            return Err(Error::Parameter(format!(
                "good {} out of range 1..={}",
                good + 1,
                self.goods
            )));
        }
        if bundle.contains(good) {
            return Err(Error::Parameter(format!(
                "good {} already belongs to bundle {bundle}",
                good + 1
            )));
        }
        Ok(self.value(bundle.with(good)) - self.value(bundle))
    }

    /// Optimal surplus with the good free minus optimal surplus with the
    /// good unavailable, other prices held at `prices`.
    pub fn marginal_value_at_prices(&self, good: usize, prices: &PriceVector) -> Result<f64> {
        check_len(self.goods, prices.len())?;
        if good >= self.goods {
            return Err(Error::Parameter(format!(
                "good {} out of range 1..={}",
                good + 1,
                self.goods
            )));
        }
        Ok(self.marginal_values_at_prices(prices)?[good])
    }

    /// Marginal values at prices for every good in one pass over the bundles.
    pub fn marginal_values_at_prices(&self, prices: &PriceVector) -> Result<Vec<f64>> {
        check_len(self.goods, prices.len())?;
        let mut out = vec![0.0; self.goods];
        self.marginal_values_into(prices.as_slice(), &mut out);
        Ok(out)
    }

    /// Slice form of [`Self::marginal_values_at_prices`]; lengths must match.
    pub(crate) fn marginal_values_into(&self, prices: &[f64], out: &mut [f64]) {
        let costs = bundle_costs(prices);
        for (j, slot) in out.iter_mut().enumerate() {
            let bit = 1usize << j;
            // best surplus among bundles without j, and among bundles with j
            // when j itself is free
            let mut without = f64::NEG_INFINITY;
            let mut with_free = f64::NEG_INFINITY;
            for (mask, &value) in self.table.iter().enumerate() {
                if mask & bit == 0 {
                    without = without.max(value - costs[mask]);
                } else {
                    with_free = with_free.max(value - costs[mask & !bit]);
                }
            }
            *slot = (with_free.max(without) - without).max(0.0);
        }
    }
}

/// Total price of every bundle, indexed by bitmask.
pub(crate) fn bundle_costs(prices: &[f64]) -> Vec<f64> {
    let mut costs = vec![0.0; 1 << prices.len()];
    for mask in 1..costs.len() {
        let low = mask.trailing_zeros() as usize;
        costs[mask] = costs[mask & (mask - 1)] + prices[low];
    }
    costs
}

/// Earliest time slot by which `bundle` holds at least `lambda` slots, or
/// `None` when it never does. Times are 1-based.
pub fn completion_time(bundle: Bundle, lambda: usize, goods: usize) -> Result<Option<usize>> {
    if lambda == 0 || lambda > goods {
        return Err(Error::Parameter(format!(
            "task length {lambda} outside 1..={goods}"
        )));
    }
    let mut held = 0;
    for t in 0..goods {
        if bundle.contains(t) {
            held += 1;
            if held == lambda {
                return Ok(Some(t + 1));
            }
        }
    }
    Ok(None)
}

/// A market-based scheduling valuation: a task of `lambda` slots whose
/// value depends on when it completes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingValuation {
    pub lambda: usize,
    /// `completion_values[t-1]` is the value of finishing at time `t`.
    pub completion_values: Vec<u32>,
}

impl SchedulingValuation {
    pub fn new(lambda: usize, completion_values: Vec<u32>) -> Result<Self> {
        let goods = completion_values.len();
        if lambda == 0 || lambda > goods {
            return Err(Error::Parameter(format!(
                "task length {lambda} outside 1..={goods}"
            )));
        }
        if completion_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Parameter(
                "completion values must be nonincreasing in time".into(),
            ));
        }
        Ok(SchedulingValuation {
            lambda,
            completion_values,
        })
    }

    /// Makes raw completion-value draws nonincreasing with a backward
    /// running maximum, then builds the valuation.
    pub fn from_draws(lambda: usize, mut draws: Vec<u32>) -> Result<Self> {
        for t in (0..draws.len().saturating_sub(1)).rev() {
            draws[t] = draws[t].max(draws[t + 1]);
        }
        Self::new(lambda, draws)
    }

    pub fn goods(&self) -> usize {
        self.completion_values.len()
    }

    pub fn value(&self, bundle: Bundle) -> f64 {
        match completion_time(bundle, self.lambda, self.goods()) {
            Ok(Some(t)) => f64::from(self.completion_values[t - 1]),
            _ => 0.0,
        }
    }

    pub fn to_valuation(&self) -> Valuation {
        Valuation::from_fn(self.goods(), |x| self.value(x)).expect("scheduling valuation is valid")
    }
}

/// Homogeneous goods: the value depends only on how many units are held.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomogeneousValuation {
    /// `marginals[k]` is the value of the `(k+1)`-th unit.
    pub marginals: Vec<u32>,
}

impl HomogeneousValuation {
    pub fn new(marginals: Vec<u32>) -> Result<Self> {
        if marginals.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Parameter(
                "unit marginal values must be nonincreasing".into(),
            ));
        }
        Ok(HomogeneousValuation { marginals })
    }

    pub fn goods(&self) -> usize {
        self.marginals.len()
    }

    pub fn value(&self, bundle: Bundle) -> f64 {
        self.marginals[..bundle.len()].iter().map(|&x| f64::from(x)).sum()
    }

    pub fn to_valuation(&self) -> Valuation {
        Valuation::from_fn(self.goods(), |x| self.value(x)).expect("homogeneous valuation is valid")
    }
}

/// Task length uniform on `1..=m`; completion values iid uniform on
/// `1..=50`, pruned to be nonincreasing.
pub fn sample_scheduling_valuation<R: Rng + ?Sized>(goods: usize, rng: &mut R) -> SchedulingValuation {
    assert!(goods >= 1, "scheduling valuations need at least one good");
    let lambda = rng.gen_range(1..=goods);
    let draws = (0..goods)
        .map(|_| rng.gen_range(1..=SCHEDULING_MAX_VALUE))
        .collect();
    SchedulingValuation::from_draws(lambda, draws).expect("pruned draws are monotone")
}

/// First-unit marginal uniform on `0..=127`; each further unit's marginal
/// uniform on `0..=` the previous unit's.
pub fn sample_homogeneous_valuation<R: Rng + ?Sized>(goods: usize, rng: &mut R) -> HomogeneousValuation {
    assert!(goods >= 1, "homogeneous valuations need at least one good");
    let mut marginals = Vec::with_capacity(goods);
    let mut cap = HOMOGENEOUS_MAX_MARGINAL;
    for _ in 0..goods {
        let x = rng.gen_range(0..=cap);
        marginals.push(x);
        cap = x;
    }
    HomogeneousValuation { marginals }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValuationFamily {
    /// Scheduling valuations, labelled `U`.
    #[serde(rename = "U")]
    Scheduling,
    /// Homogeneous-good valuations, labelled `H`.
    #[serde(rename = "H")]
    Homogeneous,
}

impl ValuationFamily {
    pub fn label(self) -> &'static str {
        match self {
            ValuationFamily::Scheduling => "U",
            ValuationFamily::Homogeneous => "H",
        }
    }
}

impl FromStr for ValuationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" => Ok(ValuationFamily::Scheduling),
            "H" => Ok(ValuationFamily::Homogeneous),
            other => Err(Error::Config(format!(
                "unknown valuation distribution `{other}` (expected U or H)"
            ))),
        }
    }
}

/// A symmetric IPV auction environment such as `U[5,5]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Environment {
    pub family: ValuationFamily,
    pub goods: usize,
    pub agents: usize,
}

impl Environment {
    pub fn new(family: ValuationFamily, goods: usize, agents: usize) -> Result<Self> {
        if goods == 0 || goods > MAX_GOODS {
            return Err(Error::Config(format!(
                "goods must be in 1..={MAX_GOODS}, got {goods}"
            )));
        }
        if agents < 2 {
            return Err(Error::Config(format!(
                "an auction needs at least 2 agents, got {agents}"
            )));
        }
        Ok(Environment {
            family,
            goods,
            agents,
        })
    }

    pub fn scheduling(goods: usize, agents: usize) -> Result<Self> {
        Self::new(ValuationFamily::Scheduling, goods, agents)
    }

    pub fn homogeneous(goods: usize, agents: usize) -> Result<Self> {
        Self::new(ValuationFamily::Homogeneous, goods, agents)
    }

    /// Largest bundle value any sampled valuation can have.
    pub fn value_bound(&self) -> f64 {
        match self.family {
            ValuationFamily::Scheduling => f64::from(SCHEDULING_MAX_VALUE),
            ValuationFamily::Homogeneous => {
                f64::from(HOMOGENEOUS_MAX_MARGINAL) * self.goods as f64
            }
        }
    }

    /// Top of the integer price grid: the largest marginal value, and hence
    /// the largest rational bid, any sampled valuation can produce.
    pub fn price_cap(&self) -> usize {
        match self.family {
            ValuationFamily::Scheduling => SCHEDULING_MAX_VALUE as usize,
            ValuationFamily::Homogeneous => HOMOGENEOUS_MAX_MARGINAL as usize,
        }
    }

    pub fn sample_valuation<R: Rng + ?Sized>(&self, rng: &mut R) -> Valuation {
        match self.family {
            ValuationFamily::Scheduling => sample_scheduling_valuation(self.goods, rng).to_valuation(),
            ValuationFamily::Homogeneous => {
                sample_homogeneous_valuation(self.goods, rng).to_valuation()
            }
        }
    }

    /// Compact label without brackets, e.g. `U53`.
    pub fn short_label(&self) -> String {
        format!("{}{}{}", self.family.label(), self.goods, self.agents)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.family.label(), self.goods, self.agents)
    }
}

impl FromStr for Environment {
    type Err = Error;

    /// Parses `U[m,n]` or `H[m,n]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("environment label `{s}` is not of the form U[m,n] or H[m,n]"));
        let s = s.trim();
        let open = s.find('[').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(']').ok_or_else(bad)?;
        let family: ValuationFamily = s[..open].parse()?;
        let (m, n) = inner.split_once(',').ok_or_else(bad)?;
        let goods = m.trim().parse().map_err(|_| bad())?;
        let agents = n.trim().parse().map_err(|_| bad())?;
        Environment::new(family, goods, agents)
    }
}
