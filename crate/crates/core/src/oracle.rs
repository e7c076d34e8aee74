//! Exact expected utility and brute-force optimal bids against a
//! product-form prediction.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::mechanism::BidVector;
use crate::prediction::{bp_distance, bundle_distribution_from_probs, ks_joint, PriceHistogram};
use crate::seed::{self, stream, SimRng};
use crate::strategies::StrategyKind;
use crate::valuation::{Environment, Valuation};

/// Largest good count for [`exact_expected_utility`].
pub const EXACT_EU_MAX_GOODS: usize = 6;

/// Largest good count searched regardless of grid size.
pub const EXHAUSTIVE_MAX_GOODS: usize = 3;

/// Largest good count searched at all, and then only on coarse grids.
pub const COARSE_MAX_GOODS: usize = 5;

/// Largest unrestricted search grid, `(p_max/step + 2)^m`, accepted above
/// [`EXHAUSTIVE_MAX_GOODS`] goods.
pub const COARSE_MAX_POINTS: f64 = 2.0e7;

/// Utility gains smaller than this do not displace an earlier grid bid.
const IMPROVEMENT_EPS: f64 = 1e-12;

/// `E[v(w(b, q))] − E[ψ(b, q)]` with no bound on the good count; lengths
/// are the caller's responsibility.
pub(crate) fn expected_utility_raw(v: &Valuation, bid: &[f64], prediction: &PriceHistogram) -> f64 {
    let dist = bundle_distribution_from_probs(&prediction.win_probs(bid));
    let value: f64 = dist.iter().zip(v.table()).map(|(p, x)| p * x).sum();
    let payment: f64 = prediction
        .marginals()
        .iter()
        .zip(bid)
        .map(|(m, &b)| m.payment_below(b))
        .sum();
    value - payment
}

/// [`exact_expected_utility`] without the good-count limit.
pub fn expected_utility_unbounded(
    v: &Valuation,
    bid: &BidVector,
    prediction: &PriceHistogram,
) -> Result<f64> {
    check_len(v.goods(), bid.len())?;
    check_len(v.goods(), prediction.goods())?;
    Ok(expected_utility_raw(v, bid.as_slice(), prediction))
}

/// Expected utility of bidding `bid` when prices follow `prediction`,
/// computed exactly from the winning-set distribution and the per-good
/// payment sums.
pub fn exact_expected_utility(v: &Valuation, bid: &BidVector, prediction: &PriceHistogram) -> Result<f64> {
    if v.goods() > EXACT_EU_MAX_GOODS {
        return Err(Error::Capability(format!(
            "exact expected utility supports up to {EXACT_EU_MAX_GOODS} goods, got {}",
            v.goods()
        )));
    }
    expected_utility_unbounded(v, bid, prediction)
}

/// Candidate bids for one good: `0, step, 2·step, …` up to `p_max`, then
/// `p_max + step`.
pub fn bid_grid(p_max: usize, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("grid step must be positive, got {step}")));
    }
    let top = p_max as f64;
    let count = (top / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| i as f64 * step).collect();
    grid.push(count as f64 * step + step);
    if *grid.last().expect("nonempty") <= top {
        grid.push(top + step);
    }
    Ok(grid)
}

/// Whether a step resolves every integer price threshold, making the grid
/// optimum the optimum over all real bids.
pub fn grid_is_exact(step: f64) -> bool {
    let inverse = 1.0 / step;
    (inverse - inverse.round()).abs() < 1e-9 && inverse.round() >= 1.0
}

fn check_search(goods: usize, p_max: usize, step: f64) -> Result<()> {
    if goods <= EXHAUSTIVE_MAX_GOODS {
        return Ok(());
    }
    if goods > COARSE_MAX_GOODS {
        return Err(Error::Capability(format!(
            "optimal bid search supports up to {COARSE_MAX_GOODS} goods, got {goods}"
        )));
    }
    let points = (p_max as f64 / step + 2.0).powi(goods as i32);
    if points > COARSE_MAX_POINTS {
        return Err(Error::Capability(format!(
            "a {goods}-good search at step {step} visits {points:.3e} grid points; \
             the limit is {COARSE_MAX_POINTS:.0e}, use a coarser step"
        )));
    }
    Ok(())
}

/// Grid bid maximizing exact expected utility, with its utility.
///
/// Ties go to the lexicographically smallest bid. Bids on good `j` above the
/// first grid point at or past its largest marginal value are never needed:
/// lowering such a bid only gives up prices the good is never worth, so the
/// search skips them without changing the result.
pub fn optimal_bid(v: &Valuation, prediction: &PriceHistogram, grid_step: f64) -> Result<(BidVector, f64)> {
    check_len(v.goods(), prediction.goods())?;
    let goods = v.goods();
    check_search(goods, prediction.p_max(), grid_step)?;
    let grid = bid_grid(prediction.p_max(), grid_step)?;

    let table = v.table();
    let axes: Vec<Vec<(f64, f64, f64)>> = (0..goods)
        .map(|j| {
            let bit = 1usize << j;
            let largest = (0..table.len())
                .filter(|mask| mask & bit == 0)
                .map(|mask| table[mask | bit] - table[mask])
                .fold(0.0, f64::max);
            let stop = grid
                .iter()
                .position(|&g| g >= largest - 1e-12)
                .unwrap_or(grid.len() - 1);
            let m = prediction.marginal(j);
            grid[..=stop]
                .iter()
                .map(|&b| (b, m.prob_below(b), m.payment_below(b)))
                .collect()
        })
        .collect();

    // odometer with the last good varying fastest, so visiting order is
    // lexicographic and strict improvement keeps the smallest argmax
    let mut idx = vec![0usize; goods];
    let mut win = vec![0.0; goods];
    let mut best_idx = idx.clone();
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut payment = 0.0;
        for (j, &i) in idx.iter().enumerate() {
            win[j] = axes[j][i].1;
            payment += axes[j][i].2;
        }
        let dist = bundle_distribution_from_probs(&win);
        let eu = dist.iter().zip(table).map(|(p, x)| p * x).sum::<f64>() - payment;
        if eu > best + IMPROVEMENT_EPS {
            best = eu;
            best_idx.copy_from_slice(&idx);
        }

        let mut j = goods;
        loop {
            if j == 0 {
                let bid = best_idx.iter().enumerate().map(|(j, &i)| axes[j][i].0).collect();
                return Ok((BidVector::from_vec_unchecked(bid), best));
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// A strategy's bid set against the grid optimum for one valuation.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub optimal_bid: BidVector,
    pub optimal_eu: f64,
    pub strategy_bid: BidVector,
    pub strategy_eu: f64,
    /// `strategy_eu / optimal_eu`, when the optimum is positive.
    pub ratio: Option<f64>,
}

impl OracleReport {
    pub fn new(
        v: &Valuation,
        prediction: &PriceHistogram,
        strategy_bid: BidVector,
        grid_step: f64,
    ) -> Result<Self> {
        let (optimal_bid, optimal_eu) = optimal_bid(v, prediction, grid_step)?;
        let strategy_eu = exact_expected_utility(v, &strategy_bid, prediction)?;
        Ok(OracleReport {
            optimal_bid,
            optimal_eu,
            strategy_bid,
            strategy_eu,
            ratio: (optimal_eu > 0.0).then(|| strategy_eu / optimal_eu),
        })
    }
}

/// One point of the strategy-versus-optimal scatter.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub strategy_eu: f64,
    pub optimal_eu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalitySummary {
    pub trials: Vec<TrialRecord>,
    pub mean_strategy_eu: f64,
    pub mean_optimal_eu: f64,
    /// Ratio of means; zero when the mean optimum is zero.
    pub ratio: f64,
    /// Set when the grid does not resolve every price threshold, so the
    /// "optimum" is only the best grid bid.
    pub approximate: bool,
}

/// Compares `bidder` with the grid optimum over `trials` valuations drawn
/// from `environment`. Trial `t` uses its own valuation and bidding streams
/// derived from `seed`, so results do not depend on thread count.
pub fn optimality_ratio_with<F>(
    bidder: F,
    environment: &Environment,
    prediction: &PriceHistogram,
    trials: usize,
    grid_step: f64,
    seed: u64,
) -> Result<OptimalitySummary>
where
    F: Fn(&Valuation, &PriceHistogram, &mut SimRng) -> Result<BidVector> + Sync,
{
    check_len(environment.goods, prediction.goods())?;
    check_search(environment.goods, prediction.p_max(), grid_step)?;
    if trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let records = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut vrng = seed::rng(seed, &[stream::ORACLE, t as u64, stream::VALUATION]);
            let mut brng = seed::rng(seed, &[stream::ORACLE, t as u64, stream::BIDDING]);
            let v = environment.sample_valuation(&mut vrng);
            let bid = bidder(&v, prediction, &mut brng)?;
            let report = OracleReport::new(&v, prediction, bid, grid_step)?;
            Ok(TrialRecord {
                trial: t,
                strategy_eu: report.strategy_eu,
                optimal_eu: report.optimal_eu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let mean_strategy_eu = records.iter().map(|r| r.strategy_eu).sum::<f64>() / n;
    let mean_optimal_eu = records.iter().map(|r| r.optimal_eu).sum::<f64>() / n;
    Ok(OptimalitySummary {
        trials: records,
        mean_strategy_eu,
        mean_optimal_eu,
        ratio: if mean_optimal_eu > 0.0 {
            mean_strategy_eu / mean_optimal_eu
        } else {
            0.0
        },
        approximate: !grid_is_exact(grid_step),
    })
}

/// [`optimality_ratio_with`] for a named strategy.
pub fn optimality_ratio(
    strategy: &StrategyKind,
    environment: &Environment,
    prediction: &PriceHistogram,
    trials: usize,
    grid_step: f64,
    seed: u64,
) -> Result<OptimalitySummary> {
    strategy.validate()?;
    optimality_ratio_with(
        |v, p, rng| strategy.bid(v, p, rng),
        environment,
        prediction,
        trials,
        grid_step,
        seed,
    )
}

/// Both sides of the payment, value and utility bounds relating
/// expectations under two predictions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub ks: f64,
    pub bp: f64,
    /// `E_Π[ψ]` and `E_Π′[ψ] + 2·KS·‖b‖₁`.
    pub payment: (f64, f64),
    /// `E_Π[v(w)]` and `E_Π′[v(w)] − BP·V̄`.
    pub value: (f64, f64),
    /// `E_Π[u]` and `E_Π′[u] − BP·V̄ − 2·KS·‖b‖₁`.
    pub utility: (f64, f64),
}

impl BoundCheck {
    /// Evaluates the three inequalities for `bid` under `pi` and `pi_prime`,
    /// with `value_bound` at least the largest bundle value of `v`.
    pub fn evaluate(
        v: &Valuation,
        bid: &BidVector,
        pi: &PriceHistogram,
        pi_prime: &PriceHistogram,
        value_bound: f64,
    ) -> Result<Self> {
        if value_bound < v.max_value() {
            return Err(Error::Parameter(format!(
                "value bound {value_bound} is below the valuation's maximum {}",
                v.max_value()
            )));
        }
        let ks = ks_joint(pi, pi_prime)?;
        let bp = bp_distance(pi, pi_prime, bid)?;
        let norm = bid.l1_norm();
        let pay = pi.expected_payment(bid)?;
        let pay_prime = pi_prime.expected_payment(bid)?;
        let val = pi.expected_value(v, bid)?;
        let val_prime = pi_prime.expected_value(v, bid)?;
        Ok(BoundCheck {
            ks,
            bp,
            payment: (pay, pay_prime + 2.0 * ks * norm),
            value: (val, val_prime - bp * value_bound),
            utility: (
                val - pay,
                val_prime - pay_prime - bp * value_bound - 2.0 * ks * norm,
            ),
        })
    }

    pub fn payment_holds(&self, tol: f64) -> bool {
        self.payment.0 <= self.payment.1 + tol
    }

    pub fn value_holds(&self, tol: f64) -> bool {
        self.value.0 >= self.value.1 - tol
    }

    pub fn utility_holds(&self, tol: f64) -> bool {
        self.utility.0 >= self.utility.1 - tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::utility;
    use crate::prediction::Marginal;
    use crate::valuation::{Bundle, SchedulingValuation};
    use rand::Rng;

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

    fn bid(x: &[f64]) -> BidVector {
        BidVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn exact_eu_examples() {
        let v = Valuation::additive(&[10.0]).unwrap();
        let point = PriceHistogram::point(&[3], 20).unwrap();
        assert_eq!(exact_expected_utility(&v, &bid(&[5.0]), &point).unwrap(), 7.0);
        assert_eq!(exact_expected_utility(&v, &bid(&[0.0]), &point).unwrap(), 0.0);
        let v7 = Valuation::additive(&[1.0; 7]).unwrap();
        assert!(matches!(
            exact_expected_utility(&v7, &BidVector::zeros(7), &PriceHistogram::uniform(7, 3)),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn exact_eu_matches_monte_carlo() {
        let mut rng = seed::rng(11, &[]);
        for _ in 0..4 {
            let env = Environment::scheduling(3, 2).unwrap();
            let v = env.sample_valuation(&mut rng);
            let pi = random_histogram(&mut rng, 3, 50);
            let b = bid(&[rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)]);
            let exact = exact_expected_utility(&v, &b, &pi).unwrap();
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let u = utility(&v, &b, &pi.sample(&mut rng)).unwrap();
                s += u;
                s2 += u * u;
            }
            let mean = s / n as f64;
            let sd = ((s2 / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
            assert!((mean - exact).abs() <= 4.0 * sd + 1e-12, "{mean} vs {exact} (sd {sd})");
        }
    }

    #[test]
    fn piecewise_constant_between_breakpoints() {
        let mut rng = seed::rng(12, &[]);
        let v = Environment::scheduling(3, 2).unwrap().sample_valuation(&mut rng);
        let pi = random_histogram(&mut rng, 3, 30);
        for _ in 0..50 {
            let base: Vec<f64> = (0..3).map(|_| rng.gen_range(0..30) as f64 + 1.0).collect();
            let eu = exact_expected_utility(&v, &bid(&base), &pi).unwrap();
            let mut moved = base.clone();
            let j = rng.gen_range(0..3);
            // any bid in (k − 1, k] wins exactly the prices below k
            moved[j] -= rng.gen_range(0.0..0.999);
            assert_eq!(exact_expected_utility(&v, &bid(&moved), &pi).unwrap(), eu);
        }
    }

    #[test]
    fn single_good_optimum_is_truthful() {
        let pi = PriceHistogram::uniform(1, 50);
        for value in [0.0, 1.0, 17.0, 50.0] {
            let v = Valuation::additive(&[value]).unwrap();
            let (b, eu) = optimal_bid(&v, &pi, 1.0).unwrap();
            assert_eq!(b.as_slice(), &[value]);
            let direct: f64 = (0..50).filter(|&x| (x as f64) < value).map(|x| (value - x as f64) / 51.0).sum();
            assert!((eu - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_optimum_is_separable() {
        let mut rng = seed::rng(13, &[]);
        let pi = random_histogram(&mut rng, 3, 20);
        let v = Valuation::additive(&[4.0, 11.0, 19.0]).unwrap();
        let (b, eu) = optimal_bid(&v, &pi, 1.0).unwrap();
        let truthful = exact_expected_utility(&v, &bid(&[4.0, 11.0, 19.0]), &pi).unwrap();
        assert!((eu - truthful).abs() < 1e-12);
        // the chosen bid may be lower where the prediction has no mass
        for (j, &x) in b.as_slice().iter().enumerate() {
            let m = pi.marginal(j);
            assert_eq!(m.prob_below(x), m.prob_below(v.value(Bundle::EMPTY.with(j))));
        }
    }

    #[test]
    fn complementary_pair_matches_hand_enumeration() {
        // v({1,2}) = 10, singletons worthless; prices 0 or 4 with probability ½
        let v = Valuation::from_fn(2, |x| if x.len() == 2 { 10.0 } else { 0.0 }).unwrap();
        let m = Marginal::from_mass(vec![0.5, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let pi = PriceHistogram::new(vec![m.clone(), m]).unwrap();
        // step 2.5 grid: {0, 2.5, 6.5}
        assert_eq!(bid_grid(4, 2.5).unwrap(), vec![0.0, 2.5, 5.0]);
        let eu = |a: f64, b: f64| {
            let w = |x: f64| if x > 4.0 { 1.0 } else if x > 0.0 { 0.5 } else { 0.0 };
            let pay = |x: f64| if x > 4.0 { 2.0 } else { 0.0 };
            w(a) * w(b) * 10.0 - pay(a) - pay(b)
        };
        let grid = [0.0, 2.5, 5.0];
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for &a in &grid {
            for &b in &grid {
                if eu(a, b) > best.0 + 1e-12 {
                    best = (eu(a, b), a, b);
                }
            }
        }
        let (b, value) = optimal_bid(&v, &pi, 2.5).unwrap();
        assert!((value - best.0).abs() < 1e-12);
        assert_eq!(b.as_slice(), &[best.1, best.2]);
        assert_eq!(value, 6.0);
    }

    #[test]
    fn optimum_dominates_strategies_and_refines_monotonically() {
        let mut rng = seed::rng(14, &[]);
        let env = Environment::scheduling(3, 3).unwrap();
        for _ in 0..10 {
            let v = env.sample_valuation(&mut rng);
            let pi = random_histogram(&mut rng, 3, 50);
            let (_, exact) = optimal_bid(&v, &pi, 1.0).unwrap();
            let mut previous = f64::NEG_INFINITY;
            for step in [8.0, 4.0, 2.0, 1.0, 0.5] {
                let (_, eu) = optimal_bid(&v, &pi, step).unwrap();
                assert!(eu >= previous - 1e-12);
                previous = eu;
            }
            assert!((previous - exact).abs() < 1e-12);
            for kind in [
                StrategyKind::StraightMv,
                StrategyKind::AverageMu { samples: 16 },
                StrategyKind::local_bid(StrategyKind::StraightMu { samples: 8 }),
            ] {
                let b = kind.bid(&v, &pi, &mut rng).unwrap();
                assert!(exact_expected_utility(&v, &b, &pi).unwrap() <= exact + 1e-9);
            }
        }
    }

    #[test]
    fn restricted_search_matches_full_grid() {
        let mut rng = seed::rng(15, &[]);
        for _ in 0..5 {
            let v = SchedulingValuation::from_draws(2, vec![rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=12)])
                .unwrap()
                .to_valuation();
            let pi = random_histogram(&mut rng, 3, 12);
            let (b, eu) = optimal_bid(&v, &pi, 1.0).unwrap();
            let grid = bid_grid(12, 1.0).unwrap();
            let mut best = (f64::NEG_INFINITY, vec![]);
            for &x in &grid {
                for &y in &grid {
                    for &z in &grid {
                        let e = exact_expected_utility(&v, &bid(&[x, y, z]), &pi).unwrap();
                        if e > best.0 + 1e-12 {
                            best = (e, vec![x, y, z]);
                        }
                    }
                }
            }
            assert!((eu - best.0).abs() < 1e-12);
            assert_eq!(b.as_slice(), &best.1[..]);
        }
    }

    #[test]
    fn search_limits() {
        let v5 = Valuation::additive(&[1.0; 5]).unwrap();
        assert!(matches!(optimal_bid(&v5, &PriceHistogram::uniform(5, 50), 1.0), Err(Error::Capability(_))));
        assert!(optimal_bid(&v5, &PriceHistogram::uniform(5, 50), 10.0).is_ok());
        let v6 = Valuation::additive(&[1.0; 6]).unwrap();
        assert!(matches!(optimal_bid(&v6, &PriceHistogram::uniform(6, 5), 5.0), Err(Error::Capability(_))));
        assert!(grid_is_exact(1.0) && grid_is_exact(0.5) && !grid_is_exact(2.0) && !grid_is_exact(0.4));
    }

    #[test]
    fn ratio_extremes() {
        let env = Environment::scheduling(2, 3).unwrap();
        let pi = PriceHistogram::uniform(2, 50);
        let optimal = optimality_ratio_with(
            |v, p, _| Ok(optimal_bid(v, p, 1.0)?.0),
            &env,
            &pi,
            20,
            1.0,
            3,
        )
        .unwrap();
        assert_eq!(optimal.ratio, 1.0);
        assert!(!optimal.approximate);
        let zero = optimality_ratio(&StrategyKind::Zero, &env, &pi, 20, 1.0, 3).unwrap();
        assert!(zero.mean_optimal_eu > 0.0);
        assert_eq!(zero.ratio, 0.0);
        assert_eq!(zero.trials.len(), 20);
        assert_eq!(zero.trials[7].optimal_eu, optimal.trials[7].optimal_eu);
    }

    #[test]
    fn bound_inequalities_hold() {
        let mut rng = seed::rng(16, &[]);
        let env = Environment::homogeneous(3, 2).unwrap();
        for _ in 0..200 {
            let v = env.sample_valuation(&mut rng);
            let pi = random_histogram(&mut rng, 3, 20);
            let pi2 = random_histogram(&mut rng, 3, 20);
            let b = bid(&[rng.gen_range(0.0..22.0), rng.gen_range(0.0..22.0), rng.gen_range(0.0..22.0)]);
            let c = BoundCheck::evaluate(&v, &b, &pi, &pi2, env.value_bound()).unwrap();
            assert!(c.payment_holds(1e-9) && c.value_holds(1e-9) && c.utility_holds(1e-9), "{c:?}");
        }
    }
}
