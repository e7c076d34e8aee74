//! Price-prediction bidding heuristics.
//!
//! Every strategy maps a valuation and a price prediction to a bid vector.
//! Randomized strategies draw from the caller's stream, so a bid is a pure
//! function of (valuation, prediction, seed).

mod spec;

use rand::Rng;

pub use spec::{PredictionSource, StrategySpec};

use crate::error::{check_len, Error, Result};
use crate::mechanism::{utility_raw, BidVector, PriceVector};
use crate::prediction::{bundle_distribution_from_probs, PriceHistogram};
use crate::valuation::Valuation;

pub const DEFAULT_LOCAL_BID_ITERATIONS: usize = 10;
pub const DEFAULT_LOCAL_BID_SAMPLES: usize = 64;
pub const DEFAULT_BID_EVAL_CANDIDATES: usize = 10;
pub const DEFAULT_BID_EVAL_SAMPLES: usize = 64;
pub const DEFAULT_MIX_SAMPLES: usize = 8;

/// A LocalBid sweep that moves no bid by more than this counts as converged.
pub const LOCAL_BID_TOLERANCE: f64 = 1e-9;

/// A bidding heuristic and its sampling parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Bids nothing.
    Zero,
    /// Bids each good's standalone value `v({j})`.
    Truthful,
    /// Marginal value at the expected prices of the prediction.
    StraightMv,
    /// StraightMV at the mean of `samples` draws; `samples == 0` uses the
    /// exact expectation.
    StraightMu { samples: usize },
    /// Mean over `samples` draws of the marginal value at the drawn prices.
    AverageMu { samples: usize },
    /// Best of `candidates` bids proposed by `generator`, scored on
    /// `eval_samples` shared draws (`0` scores exactly).
    BidEval {
        generator: Box<StrategyKind>,
        candidates: usize,
        eval_samples: usize,
    },
    /// BidEval whose candidates cycle through StraightMU, AverageMU and
    /// LocalBid, each with `samples` draws.
    BidEvalMix {
        samples: usize,
        candidates: usize,
        eval_samples: usize,
    },
    /// Coordinate ascent from `init`'s bid, `iterations` sweeps, against the
    /// empirical marginals of `samples` draws (`0` uses the prediction).
    LocalBid {
        init: Box<StrategyKind>,
        iterations: usize,
        samples: usize,
    },
}

impl StrategyKind {
    pub fn local_bid(init: StrategyKind) -> Self {
        StrategyKind::LocalBid {
            init: Box::new(init),
            iterations: DEFAULT_LOCAL_BID_ITERATIONS,
            samples: DEFAULT_LOCAL_BID_SAMPLES,
        }
    }

    pub fn bid_eval(generator: StrategyKind) -> Self {
        StrategyKind::BidEval {
            generator: Box::new(generator),
            candidates: DEFAULT_BID_EVAL_CANDIDATES,
            eval_samples: DEFAULT_BID_EVAL_SAMPLES,
        }
    }

    /// Whether the bid depends on the price prediction at all.
    pub fn uses_prediction(&self) -> bool {
        !matches!(self, StrategyKind::Zero | StrategyKind::Truthful)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::AverageMu { samples: 0 } => {
                Err(Error::Parameter("AverageMU needs at least one sample".into()))
            }
            StrategyKind::BidEval {
                generator,
                candidates,
                ..
            } => {
                if *candidates == 0 {
                    return Err(Error::Parameter("BidEval needs at least one candidate".into()));
                }
                generator.validate()
            }
            StrategyKind::BidEvalMix {
                samples,
                candidates,
                ..
            } => {
                if *candidates == 0 || *samples == 0 {
                    return Err(Error::Parameter(
                        "BidEvalMix needs positive candidate and sample counts".into(),
                    ));
                }
                Ok(())
            }
            StrategyKind::LocalBid {
                init, iterations, ..
            } => {
                if *iterations == 0 {
                    return Err(Error::Parameter("LocalBid needs at least one iteration".into()));
                }
                init.validate()
            }
            _ => Ok(()),
        }
    }

    /// Computes this strategy's bid.
    pub fn bid<R: Rng + ?Sized>(
        &self,
        v: &Valuation,
        prediction: &PriceHistogram,
        rng: &mut R,
    ) -> Result<BidVector> {
        check_len(v.goods(), prediction.goods())?;
        match self {
            StrategyKind::Zero => Ok(BidVector::zeros(v.goods())),
            StrategyKind::Truthful => Ok(truthful(v)),
            StrategyKind::StraightMv => straight_mv(v, &prediction.expected_point()),
            StrategyKind::StraightMu { samples } => straight_mu(v, prediction, *samples, rng),
            StrategyKind::AverageMu { samples } => average_mu(v, prediction, *samples, rng),
            StrategyKind::BidEval {
                generator,
                candidates,
                eval_samples,
            } => bid_eval(v, prediction, generator, *candidates, *eval_samples, rng),
            StrategyKind::BidEvalMix {
                samples,
                candidates,
                eval_samples,
            } => bid_eval_mix(v, prediction, *samples, *candidates, *eval_samples, rng),
            StrategyKind::LocalBid {
                init,
                iterations,
                samples,
            } => local_bid(v, prediction, init, *iterations, *samples, rng),
        }
    }
}

fn truthful(v: &Valuation) -> BidVector {
    let bids = (0..v.goods())
        .map(|j| v.value(crate::valuation::Bundle::EMPTY.with(j)))
        .collect();
    BidVector::from_vec_unchecked(bids)
}

/// Bids the marginal value at prices `p` on every good.
pub fn straight_mv(v: &Valuation, p: &PriceVector) -> Result<BidVector> {
    Ok(BidVector::from_vec_unchecked(v.marginal_values_at_prices(p)?))
}

/// StraightMV at the mean of `k` sampled price vectors, or at the exact
/// expected prices when `k == 0`.
pub fn straight_mu<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    k: usize,
    rng: &mut R,
) -> Result<BidVector> {
    let point = if k == 0 {
        prediction.expected_point()
    } else {
        prediction.sampled_point(k, rng)?
    };
    straight_mv(v, &point)
}

/// Average over `k` sampled price vectors of the marginal values at those
/// prices.
pub fn average_mu<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    k: usize,
    rng: &mut R,
) -> Result<BidVector> {
    if k == 0 {
        return Err(Error::Parameter("AverageMU needs at least one sample".into()));
    }
    check_len(v.goods(), prediction.goods())?;
    let goods = v.goods();
    let mut sum = vec![0.0; goods];
    let mut mv = vec![0.0; goods];
    for _ in 0..k {
        let p = prediction.sample(rng);
        v.marginal_values_into(p.as_slice(), &mut mv);
        for (s, x) in sum.iter_mut().zip(&mv) {
            *s += x;
        }
    }
    Ok(BidVector::from_vec_unchecked(
        sum.into_iter().map(|s| s / k as f64).collect(),
    ))
}

/// Scores of a candidate set: mean utility over `eval_samples` shared price
/// draws, or exact expected utility when `eval_samples == 0`.
pub fn score_candidates<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    candidates: &[BidVector],
    eval_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    for c in candidates {
        check_len(v.goods(), c.len())?;
    }
    if eval_samples == 0 {
        return candidates
            .iter()
            .map(|b| crate::oracle::expected_utility_unbounded(v, b, prediction))
            .collect();
    }
    let draws: Vec<PriceVector> = (0..eval_samples).map(|_| prediction.sample(rng)).collect();
    Ok(candidates
        .iter()
        .map(|b| {
            draws
                .iter()
                .map(|q| utility_raw(v, b.as_slice(), q.as_slice()))
                .sum::<f64>()
                / eval_samples as f64
        })
        .collect())
}

/// Index of the highest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best })
        .0
}

/// Generates `c` candidates with `generator` (fresh draws each call) and
/// returns the one with the best score on a shared evaluation set.
pub fn bid_eval<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    generator: &StrategyKind,
    c: usize,
    eval_samples: usize,
    rng: &mut R,
) -> Result<BidVector> {
    if c == 0 {
        return Err(Error::Parameter("BidEval needs at least one candidate".into()));
    }
    let candidates = (0..c)
        .map(|_| generator.bid(v, prediction, rng))
        .collect::<Result<Vec<_>>>()?;
    pick_best(v, prediction, candidates, eval_samples, rng)
}

fn pick_best<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    mut candidates: Vec<BidVector>,
    eval_samples: usize,
    rng: &mut R,
) -> Result<BidVector> {
    if candidates.len() == 1 {
        return Ok(candidates.pop().expect("one candidate"));
    }
    let scores = score_candidates(v, prediction, &candidates, eval_samples, rng)?;
    Ok(candidates.swap_remove(argmax(&scores)))
}

/// Candidate generators cycled by BidEvalMix.
pub fn mix_generators(samples: usize) -> [StrategyKind; 3] {
    [
        StrategyKind::StraightMu { samples },
        StrategyKind::AverageMu { samples },
        StrategyKind::local_bid(StrategyKind::StraightMu { samples }),
    ]
}

pub fn bid_eval_mix<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    samples: usize,
    c: usize,
    eval_samples: usize,
    rng: &mut R,
) -> Result<BidVector> {
    if c == 0 || samples == 0 {
        return Err(Error::Parameter(
            "BidEvalMix needs positive candidate and sample counts".into(),
        ));
    }
    let generators = mix_generators(samples);
    let candidates = (0..c)
        .map(|i| generators[i % generators.len()].bid(v, prediction, rng))
        .collect::<Result<Vec<_>>>()?;
    pick_best(v, prediction, candidates, eval_samples, rng)
}

/// One coordinate update made by LocalBid.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBidUpdate {
    pub sweep: usize,
    pub good: usize,
    pub before: f64,
    pub after: f64,
    pub utility_before: f64,
    pub utility_after: f64,
}

/// Full record of a LocalBid run.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBidTrace {
    pub initial: BidVector,
    pub result: BidVector,
    /// The distribution the search optimizes against.
    pub evaluation: PriceHistogram,
    pub updates: Vec<LocalBidUpdate>,
    pub sweeps: usize,
    pub converged: bool,
}

/// The distribution LocalBid optimizes against: the product of the
/// empirical per-good marginals of `samples` draws, or the prediction itself
/// when `samples == 0`.
fn evaluation_distribution<R: Rng + ?Sized>(
    prediction: &PriceHistogram,
    samples: usize,
    rng: &mut R,
) -> Result<PriceHistogram> {
    if samples == 0 {
        return Ok(prediction.clone());
    }
    let draws: Vec<Vec<usize>> = (0..samples).map(|_| prediction.sample_grid(rng)).collect();
    PriceHistogram::from_samples(&draws, prediction.goods(), prediction.p_max())
}

/// Expected marginal value of `good` given the other bids in `bid`: the
/// value of adding the good to whatever the rest of the bid wins.
pub fn expected_marginal_value(
    v: &Valuation,
    evaluation: &PriceHistogram,
    bid: &[f64],
    good: usize,
) -> f64 {
    let mut win = evaluation.win_probs(bid);
    win[good] = 0.0;
    let dist = bundle_distribution_from_probs(&win);
    let bit = 1usize << good;
    let table = v.table();
    dist.iter()
        .enumerate()
        .filter(|(mask, _)| mask & bit == 0)
        .map(|(mask, p)| p * (table[mask | bit] - table[mask]))
        .sum()
}

/// LocalBid, returning only the bid.
pub fn local_bid<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    init: &StrategyKind,
    iterations: usize,
    samples: usize,
    rng: &mut R,
) -> Result<BidVector> {
    Ok(local_bid_traced(v, prediction, init, iterations, samples, rng, false)?.result)
}

/// LocalBid: starting from `init`'s bid, repeatedly sets each good's bid to
/// its expected marginal value given the other bids.
///
/// The evaluation set is drawn once. With `record` set, every coordinate
/// update is logged with the exact expected utility before and after it.
pub fn local_bid_traced<R: Rng + ?Sized>(
    v: &Valuation,
    prediction: &PriceHistogram,
    init: &StrategyKind,
    iterations: usize,
    samples: usize,
    rng: &mut R,
    record: bool,
) -> Result<LocalBidTrace> {
    if iterations == 0 {
        return Err(Error::Parameter("LocalBid needs at least one iteration".into()));
    }
    let initial = init.bid(v, prediction, rng)?;
    let evaluation = evaluation_distribution(prediction, samples, rng)?;
    let mut bid = initial.as_slice().to_vec();
    let mut updates = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 0..iterations {
        sweeps = sweep + 1;
        let mut largest_move: f64 = 0.0;
        for good in 0..v.goods() {
            let before = bid[good];
            let after = expected_marginal_value(v, &evaluation, &bid, good);
            if record {
                let utility_before = crate::oracle::expected_utility_raw(v, &bid, &evaluation);
                bid[good] = after;
                let utility_after = crate::oracle::expected_utility_raw(v, &bid, &evaluation);
                updates.push(LocalBidUpdate {
                    sweep,
                    good,
                    before,
                    after,
                    utility_before,
                    utility_after,
                });
            }
            bid[good] = after;
            largest_move = largest_move.max((after - before).abs());
        }
        if largest_move <= LOCAL_BID_TOLERANCE {
            converged = true;
            break;
        }
    }

    Ok(LocalBidTrace {
        initial,
        result: BidVector::from_vec_unchecked(bid),
        evaluation,
        updates,
        sweeps,
        converged,
    })
}
