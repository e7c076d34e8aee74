//! Probabilistic price predictions.
//!
//! A prediction is a product of independent per-good distributions over the
//! integer price grid `0..=p_max`. Win probabilities use the strict rule of
//! the predictive auction semantics: a bid `b` wins against price `q` only
//! if `q < b`.

mod distance;
mod file;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use distance::{blend, bp_distance, ks_joint, ks_joint_monte_carlo, ks_marginal, KS_JOINT_MAX_GOODS};
pub use file::PredictionFile;

use crate::error::{check_len, Error, Result};
use crate::mechanism::{BidVector, PriceVector};
use crate::valuation::{Bundle, Valuation, MAX_GOODS};

/// Tolerance on probability normalization.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Point price estimates are plain price vectors.
pub type PointPrediction = PriceVector;

/// Which per-instance outcome feeds a price prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    /// The highest bid among the other agents (`HB`).
    #[serde(rename = "HB")]
    HighestBid,
    /// The transaction price, i.e. the second-highest bid (`price`).
    #[serde(rename = "price")]
    Price,
}

impl Statistic {
    pub fn label(self) -> &'static str {
        match self {
            Statistic::HighestBid => "HB",
            Statistic::Price => "price",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HB" => Ok(Statistic::HighestBid),
            "price" => Ok(Statistic::Price),
            other => Err(Error::Config(format!(
                "unknown price statistic `{other}` (expected HB or price)"
            ))),
        }
    }
}

/// Distribution of one good's price over `0..=p_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    mass: Vec<f64>,
    /// `cdf[x] = Pr(q <= x)`; the last entry is exactly 1.
    cdf: Vec<f64>,
    /// `moment[x] = Σ_{y <= x} y Pr(q = y)`.
    moment: Vec<f64>,
}

impl Marginal {
    /// Wraps a mass vector that already sums to one.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Parameter("a marginal needs at least one price bin".into()));
        }
        if let Some(bad) = mass.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Parameter(format!(
                "probability mass must be finite and nonnegative, found {bad}"
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Parameter(format!(
                "probability mass sums to {total}, not 1"
            )));
        }
        Ok(Self::build(mass))
    }

    /// Normalizes nonnegative weights (e.g. tallies) into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Parameter(
                "weights must be nonnegative with a positive total".into(),
            ));
        }
        Ok(Self::build(weights.iter().map(|w| w / total).collect()))
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&weights)
    }

    pub fn uniform(p_max: usize) -> Self {
        let n = p_max + 1;
        Self::build(vec![1.0 / n as f64; n])
    }

    pub fn point(price: usize, p_max: usize) -> Result<Self> {
        if price > p_max {
            return Err(Error::Parameter(format!(
                "point price {price} is above the grid maximum {p_max}"
            )));
        }
        let mut mass = vec![0.0; p_max + 1];
        mass[price] = 1.0;
        Ok(Self::build(mass))
    }

    fn build(mass: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(mass.len());
        let mut moment = Vec::with_capacity(mass.len());
        let (mut c, mut mo) = (0.0, 0.0);
        for (x, &p) in mass.iter().enumerate() {
            c += p;
            mo += x as f64 * p;
            cdf.push(c);
            moment.push(mo);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        Marginal { mass, cdf, moment }
    }

    pub fn p_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    /// `Pr(q <= x)`, flooring `x` onto the grid.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= self.p_max() as f64 {
            1.0
        } else {
            self.cdf[x.floor() as usize]
        }
    }

    /// Index of the largest grid price strictly below `bid`, if any.
    #[inline]
    fn last_below(&self, bid: f64) -> Option<usize> {
        if bid <= 0.0 {
            None
        } else {
            Some(((bid.ceil() as usize).saturating_sub(1)).min(self.p_max()))
        }
    }

    /// `Pr(q < bid)`: the probability that `bid` wins this good.
    #[inline]
    pub fn prob_below(&self, bid: f64) -> f64 {
        self.last_below(bid).map_or(0.0, |k| self.cdf[k])
    }

    /// `E[q · 1{q < bid}]`: the expected second-price payment for this good.
    #[inline]
    pub fn payment_below(&self, bid: f64) -> f64 {
        self.last_below(bid).map_or(0.0, |k| self.moment[k])
    }

    pub fn mean(&self) -> f64 {
        *self.moment.last().expect("nonempty")
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.mass
            .iter()
            .enumerate()
            .map(|(x, p)| p * (x as f64 - mean).powi(2))
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.p_max())
    }
}

/// A product-form price prediction: one [`Marginal`] per good on a shared
/// grid `0..=p_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceHistogram {
    p_max: usize,
    marginals: Vec<Marginal>,
}

impl PriceHistogram {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        let first = marginals
            .first()
            .ok_or_else(|| Error::Parameter("a prediction needs at least one good".into()))?;
        let p_max = first.p_max();
        if let Some(m) = marginals.iter().find(|m| m.p_max() != p_max) {
            return Err(Error::GridMismatch(format!(
                "marginal grids 0..={p_max} and 0..={} differ",
                m.p_max()
            )));
        }
        if marginals.len() > MAX_GOODS {
            return Err(Error::Capability(format!(
                "predictions support at most {MAX_GOODS} goods"
            )));
        }
        Ok(PriceHistogram { p_max, marginals })
    }

    /// Every integer price in `0..=p_max` equally likely, for every good.
    pub fn uniform(goods: usize, p_max: usize) -> Self {
        PriceHistogram {
            p_max,
            marginals: vec![Marginal::uniform(p_max); goods],
        }
    }

    /// Point masses at integer prices.
    pub fn point(prices: &[usize], p_max: usize) -> Result<Self> {
        let marginals = prices
            .iter()
            .map(|&p| Marginal::point(p, p_max))
            .collect::<Result<_>>()?;
        Self::new(marginals)
    }

    /// Per-good tallies, `counts[j][x]` occurrences of price `x` for good `j`.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        Self::new(counts.iter().map(|c| Marginal::from_counts(c)).collect::<Result<_>>()?)
    }

    /// Empirical per-good marginals of a set of grid-valued price vectors.
    pub fn from_samples(samples: &[Vec<usize>], goods: usize, p_max: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("need at least one price sample".into()));
        }
        let mut counts = vec![vec![0u64; p_max + 1]; goods];
        for s in samples {
            check_len(goods, s.len())?;
            for (j, &x) in s.iter().enumerate() {
                counts[j][x.min(p_max)] += 1;
            }
        }
        Self::from_counts(&counts)
    }

    pub fn goods(&self) -> usize {
        self.marginals.len()
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn marginal(&self, good: usize) -> &Marginal {
        &self.marginals[good]
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub(crate) fn same_grid(&self, other: &PriceHistogram) -> Result<()> {
        if self.goods() != other.goods() || self.p_max != other.p_max {
            return Err(Error::GridMismatch(format!(
                "{} goods on 0..={} versus {} goods on 0..={}",
                self.goods(),
                self.p_max,
                other.goods(),
                other.p_max
            )));
        }
        Ok(())
    }

    /// Joint CDF `Pr(p <= q)` as the product of the marginal CDFs.
    pub fn cdf(&self, q: &PriceVector) -> Result<f64> {
        check_len(self.goods(), q.len())?;
        Ok(self
            .marginals
            .iter()
            .zip(q.as_slice())
            .map(|(m, &x)| m.cdf(x))
            .product())
    }

    /// One independent inverse-CDF draw per good.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PriceVector {
        PriceVector::from_vec_unchecked(
            self.marginals.iter().map(|m| m.sample(rng) as f64).collect(),
        )
    }

    pub(crate) fn sample_grid<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    /// Exact per-good means.
    pub fn expected_point(&self) -> PointPrediction {
        PriceVector::from_vec_unchecked(self.marginals.iter().map(Marginal::mean).collect())
    }

    /// Componentwise mean of `k` draws.
    pub fn sampled_point<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<PointPrediction> {
        if k == 0 {
            return Err(Error::Parameter("sampled point needs k >= 1 samples".into()));
        }
        let mut sum = vec![0.0; self.goods()];
        for _ in 0..k {
            for (acc, m) in sum.iter_mut().zip(&self.marginals) {
                *acc += m.sample(rng) as f64;
            }
        }
        Ok(PriceVector::from_vec_unchecked(
            sum.into_iter().map(|s| s / k as f64).collect(),
        ))
    }

    /// Per-good probabilities that `bid` wins.
    pub(crate) fn win_probs(&self, bid: &[f64]) -> Vec<f64> {
        self.marginals
            .iter()
            .zip(bid)
            .map(|(m, &b)| m.prob_below(b))
            .collect()
    }

    /// `Pr(w(b, q) = X)` for a single bundle.
    pub fn bundle_prob(&self, bid: &BidVector, bundle: Bundle) -> Result<f64> {
        check_len(self.goods(), bid.len())?;
        Ok(self
            .marginals
            .iter()
            .zip(bid.as_slice())
            .enumerate()
            .map(|(j, (m, &b))| {
                let win = m.prob_below(b);
                if bundle.contains(j) {
                    win
                } else {
                    1.0 - win
                }
            })
            .product())
    }

    /// Probability of every possible winning set, indexed by bitmask.
    pub fn bundle_distribution(&self, bid: &BidVector) -> Result<Vec<f64>> {
        check_len(self.goods(), bid.len())?;
        Ok(bundle_distribution_from_probs(&self.win_probs(bid.as_slice())))
    }

    /// `E[ψ(b, q)]`, separable across goods.
    pub fn expected_payment(&self, bid: &BidVector) -> Result<f64> {
        check_len(self.goods(), bid.len())?;
        Ok(self
            .marginals
            .iter()
            .zip(bid.as_slice())
            .map(|(m, &b)| m.payment_below(b))
            .sum())
    }

    /// `E[v(w(b, q))]` over all winning sets.
    pub fn expected_value(&self, v: &Valuation, bid: &BidVector) -> Result<f64> {
        check_len(self.goods(), v.goods())?;
        let dist = self.bundle_distribution(bid)?;
        Ok(dist.iter().zip(v.table()).map(|(p, x)| p * x).sum())
    }
}

/// Distribution over winning sets given independent per-good win
/// probabilities, indexed by bitmask.
pub(crate) fn bundle_distribution_from_probs(win: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; 1 << win.len()];
    dist[0] = 1.0;
    for (j, &p) in win.iter().enumerate() {
        let bit = 1 << j;
        for mask in 0..bit {
            let base = dist[mask];
            dist[mask] = base * (1.0 - p);
            dist[mask | bit] = base * p;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn bv(x: &[f64]) -> BidVector {
        BidVector::new(x.to_vec()).unwrap()
    }

    fn pv(x: &[f64]) -> PriceVector {
        PriceVector::new(x.to_vec()).unwrap()
    }

    fn random_histogram(rng: &mut impl Rng, goods: usize, p_max: usize) -> PriceHistogram {
        let marginals = (0..goods)
            .map(|_| {
                let mut w: Vec<f64> = (0..=p_max)
                    .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
                    .collect();
                w[rng.gen_range(0..=p_max)] += 0.1;
                Marginal::from_weights(&w).unwrap()
            })
            .collect();
        PriceHistogram::new(marginals).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let h = random_histogram(&mut seed::rng(1, &[]), 3, 10);
        assert_eq!(h.cdf(&pv(&[10.0, 12.0, 99.0])).unwrap(), 1.0);
        // price vectors cannot hold negatives, so check the marginal directly
        assert_eq!(h.marginal(1).cdf(-1.0), 0.0);

        let points = PriceHistogram::point(&[3, 3], 10).unwrap();
        assert_eq!(points.cdf(&pv(&[3.0, 2.0])).unwrap(), 0.0);
        assert_eq!(points.cdf(&pv(&[3.0, 3.5])).unwrap(), 1.0);
        assert!(points.cdf(&pv(&[3.0])).is_err());
    }

    #[test]
    fn marginals_are_normalized() {
        let h = random_histogram(&mut seed::rng(2, &[]), 4, 30);
        for m in h.marginals() {
            assert!((m.mass().iter().sum::<f64>() - 1.0).abs() < MASS_TOLERANCE);
            assert!(m.cdf_table().windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*m.cdf_table().last().unwrap(), 1.0);
        }
        assert!(Marginal::from_mass(vec![0.5, 0.4]).is_err());
        assert!(Marginal::from_mass(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn expected_point_examples() {
        assert_eq!(PriceHistogram::uniform(2, 10).expected_point(), pv(&[5.0, 5.0]));
        assert_eq!(PriceHistogram::point(&[7], 10).unwrap().expected_point(), pv(&[7.0]));
        let mut mass = vec![0.0; 11];
        mass[0] = 0.5;
        mass[10] = 0.5;
        let h = PriceHistogram::new(vec![Marginal::from_mass(mass).unwrap()]).unwrap();
        assert_eq!(h.expected_point(), pv(&[5.0]));
    }

    #[test]
    fn point_masses_sample_their_point() {
        let h = PriceHistogram::point(&[4, 0, 9], 9).unwrap();
        let mut rng = seed::rng(4, &[]);
        for _ in 0..100 {
            assert_eq!(h.sample(&mut rng), pv(&[4.0, 0.0, 9.0]));
        }
        assert_eq!(h.sampled_point(5, &mut rng).unwrap(), pv(&[4.0, 0.0, 9.0]));
        assert!(h.sampled_point(0, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let h = random_histogram(&mut seed::rng(5, &[]), 3, 20);
        let mut a = seed::rng(77, &[]);
        let mut b = seed::rng(77, &[]);
        for _ in 0..50 {
            assert_eq!(h.sample(&mut a), h.sample(&mut b));
        }
        let mut a = seed::rng(78, &[]);
        let mut b = seed::rng(78, &[]);
        let single = h.sampled_point(1, &mut a).unwrap();
        assert_eq!(single, h.sample(&mut b));
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let h = random_histogram(&mut seed::rng(6, &[]), 3, 25);
        let mut rng = seed::rng(7, &[]);
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            for (s, x) in sum.iter_mut().zip(h.sample(&mut rng).as_slice()) {
                *s += x;
            }
        }
        for (j, s) in sum.iter().enumerate() {
            let sd = (h.marginal(j).variance() / n as f64).sqrt();
            let mean = s / n as f64;
            assert!((mean - h.marginal(j).mean()).abs() <= 3.0 * sd, "good {j}");
        }
    }

    #[test]
    fn sampled_point_converges() {
        let h = random_histogram(&mut seed::rng(8, &[]), 2, 40);
        let k = 10_000;
        let p = h.sampled_point(k, &mut seed::rng(9, &[])).unwrap();
        for j in 0..2 {
            let sd = (h.marginal(j).variance() / k as f64).sqrt();
            assert!((p[j] - h.marginal(j).mean()).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn win_probability_is_strict() {
        let m = Marginal::point(3, 10).unwrap();
        assert_eq!(m.prob_below(3.0), 0.0);
        assert_eq!(m.prob_below(3.0001), 1.0);
        assert_eq!(m.payment_below(3.5), 3.0);
        assert_eq!(m.prob_below(0.0), 0.0);
        assert_eq!(m.prob_below(11.0), 1.0);
        assert_eq!(m.prob_below(1e9), 1.0);
    }

    #[test]
    fn bundle_prob_examples() {
        let h = random_histogram(&mut seed::rng(10, &[]), 3, 10);
        assert_eq!(h.bundle_prob(&bv(&[0.0; 3]), Bundle::EMPTY).unwrap(), 1.0);
        assert_eq!(h.bundle_prob(&bv(&[11.0; 3]), Bundle::full(3)).unwrap(), 1.0);
        let b = bv(&[2.5, 7.0, 4.0]);
        let total: f64 = Bundle::all(3).map(|x| h.bundle_prob(&b, x).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let dist = h.bundle_distribution(&b).unwrap();
        for x in Bundle::all(3) {
            assert!((dist[x.index()] - h.bundle_prob(&b, x).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_payment_and_value_match_enumeration() {
        let mut rng = seed::rng(12, &[]);
        let h = random_histogram(&mut rng, 2, 6);
        let v = Valuation::from_table(2, vec![0.0, 4.0, 3.0, 11.0]).unwrap();
        let b = bv(&[3.5, 5.0]);
        let (mut pay, mut val) = (0.0, 0.0);
        for x in 0..=6 {
            for y in 0..=6 {
                let p = h.marginal(0).mass()[x] * h.marginal(1).mass()[y];
                let q = [x as f64, y as f64];
                let won = crate::mechanism::winnings_raw(b.as_slice(), &q);
                pay += p * won.goods().map(|j| q[j]).sum::<f64>();
                val += p * v.value(won);
            }
        }
        assert!((h.expected_payment(&b).unwrap() - pay).abs() < 1e-12);
        assert!((h.expected_value(&v, &b).unwrap() - val).abs() < 1e-12);
    }

    #[test]
    fn from_samples_tallies_marginals() {
        let h = PriceHistogram::from_samples(&[vec![1, 2], vec![1, 0], vec![3, 2]], 2, 4).unwrap();
        assert!((h.marginal(0).mass()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((h.marginal(1).mass()[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!(PriceHistogram::from_samples(&[], 2, 4).is_err());
    }

    #[test]
    fn mixed_grids_are_rejected() {
        let r = PriceHistogram::new(vec![Marginal::uniform(3), Marginal::uniform(4)]);
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }
}
