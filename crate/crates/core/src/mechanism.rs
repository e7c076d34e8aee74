//! Simultaneous one-shot second-price sealed-bid auctions.
//!
//! Two tie semantics coexist. The predictive functions ([`winnings`],
//! [`payment`], [`utility`]) take `q` as the highest other-agent bids and
//! award a good only on a strictly higher bid. [`run_auction`] executes the
//! mechanism and breaks ties among high bidders uniformly at random. In both,
//! a zero bid never wins: a good nobody bids on stays unsold.

use std::ops::Index;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::valuation::{Bundle, Valuation};

macro_rules! nonneg_vector {
    ($name:ident, $what:literal) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if let Some(bad) = values.iter().find(|x| !x.is_finite() || **x < 0.0) {
                    return Err(Error::Parameter(format!(
                        concat!($what, " entries must be finite and nonnegative, found {}"),
                        bad
                    )));
                }
                Ok($name(values))
            }

            pub fn zeros(goods: usize) -> Self {
                $name(vec![0.0; goods])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn l1_norm(&self) -> f64 {
                self.0.iter().sum()
            }

            pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
                debug_assert!(values.iter().all(|x| x.is_finite() && *x >= 0.0));
                $name(values)
            }
        }

        impl Index<usize> for $name {
            type Output = f64;

            fn index(&self, j: usize) -> &f64 {
                &self.0[j]
            }
        }
    };
}

nonneg_vector!(BidVector, "bid");
nonneg_vector!(PriceVector, "price");

impl BidVector {
    /// Fails if any bid exceeds `cap`.
    pub fn check_cap(&self, cap: f64) -> Result<()> {
        match self.0.iter().find(|&&b| b > cap) {
            Some(b) => Err(Error::Parameter(format!("bid {b} exceeds the bid cap {cap}"))),
            None => Ok(()),
        }
    }
}

/// Goods won when bidding `b` against highest other-agent bids `q`: those
/// with `b_j > q_j`. Ties lose.
pub fn winnings(b: &BidVector, q: &PriceVector) -> Result<Bundle> {
    check_len(b.len(), q.len())?;
    Ok(winnings_raw(b.as_slice(), q.as_slice()))
}

#[inline]
pub(crate) fn winnings_raw(b: &[f64], q: &[f64]) -> Bundle {
    let bits = b
        .iter()
        .zip(q)
        .enumerate()
        .fold(0u32, |acc, (j, (bj, qj))| if bj > qj { acc | (1 << j) } else { acc });
    Bundle::from_bits(bits)
}

/// Second-price payment: the sum of `q_j` over goods won.
pub fn payment(b: &BidVector, q: &PriceVector) -> Result<f64> {
    let won = winnings(b, q)?;
    Ok(won.goods().map(|j| q[j]).sum())
}

/// `v(w(b,q)) − ψ(b,q)`. Negative when the agent is exposed.
pub fn utility(v: &Valuation, b: &BidVector, q: &PriceVector) -> Result<f64> {
    check_len(v.goods(), b.len())?;
    check_len(b.len(), q.len())?;
    Ok(utility_raw(v, b.as_slice(), q.as_slice()))
}

#[inline]
pub(crate) fn utility_raw(v: &Valuation, b: &[f64], q: &[f64]) -> f64 {
    let won = winnings_raw(b, q);
    v.value(won) - won.goods().map(|j| q[j]).sum::<f64>()
}

/// Outcome of one round of simultaneous second-price auctions.
#[derive(Clone, Debug, PartialEq)]
pub struct AuctionResult {
    /// Bundle won by each agent.
    pub allocation: Vec<Bundle>,
    /// Total payment of each agent.
    pub payments: Vec<f64>,
    /// Winning agent per good; `None` when every bid on it is zero.
    pub winners: Vec<Option<usize>>,
    /// Per agent, the highest bid of any other agent on each good.
    pub highest_other_bids: Vec<PriceVector>,
    /// Second-highest bid on each good; what the winner pays.
    pub clearing_prices: PriceVector,
}

impl AuctionResult {
    pub fn utility(&self, agent: usize, v: &Valuation) -> f64 {
        v.value(self.allocation[agent]) - self.payments[agent]
    }
}

/// Runs every good's auction. The unique high bidder wins, or one of the
/// tied high bidders chosen uniformly; the winner pays the highest bid among
/// the other agents. A good whose highest bid is zero goes unsold.
pub fn run_auction<R: Rng + ?Sized>(bids: &[BidVector], rng: &mut R) -> Result<AuctionResult> {
    let agents = bids.len();
    if agents < 2 {
        return Err(Error::Config(format!(
            "an auction needs at least 2 agents, got {agents}"
        )));
    }
    let goods = bids[0].len();
    for b in bids {
        check_len(goods, b.len())?;
    }

    let mut allocation = vec![Bundle::EMPTY; agents];
    let mut payments = vec![0.0; agents];
    let mut winners = Vec::with_capacity(goods);
    let mut hb = vec![vec![0.0; goods]; agents];
    let mut clearing = Vec::with_capacity(goods);
    let mut tied = Vec::with_capacity(agents);

    for j in 0..goods {
        let top = bids.iter().map(|b| b[j]).fold(f64::NEG_INFINITY, f64::max);
        tied.clear();
        tied.extend((0..agents).filter(|&i| bids[i][j] == top));
        let second = if tied.len() > 1 {
            top
        } else {
            bids.iter()
                .enumerate()
                .filter(|&(i, _)| i != tied[0])
                .map(|(_, b)| b[j])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for (i, row) in hb.iter_mut().enumerate() {
            row[j] = if bids[i][j] == top && tied.len() == 1 { second } else { top };
        }
        clearing.push(second);
        if top <= 0.0 {
            winners.push(None);
            continue;
        }
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.gen_range(0..tied.len())]
        };
        allocation[winner] = allocation[winner].with(j);
        payments[winner] += second;
        winners.push(Some(winner));
    }

    Ok(AuctionResult {
        allocation,
        payments,
        winners,
        highest_other_bids: hb.into_iter().map(PriceVector::from_vec_unchecked).collect(),
        clearing_prices: PriceVector::from_vec_unchecked(clearing),
    })
}
