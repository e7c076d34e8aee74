use rand::Rng;

use super::{bundle_distribution_from_probs, Marginal, PriceHistogram};
use crate::error::{check_len, Error, Result};
use crate::mechanism::BidVector;

/// Largest good count for the exact joint KS statistic, which visits every
/// point of the `(p_max + 1)^m` price grid.
pub const KS_JOINT_MAX_GOODS: usize = 4;

/// Largest good count for the bundle probability distance.
pub const BP_MAX_GOODS: usize = 6;

fn ks_1d(a: &Marginal, b: &Marginal) -> f64 {
    a.cdf_table()
        .iter()
        .zip(b.cdf_table())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest per-good KS statistic.
pub fn ks_marginal(f: &PriceHistogram, g: &PriceHistogram) -> Result<f64> {
    f.same_grid(g)?;
    Ok(f.marginals()
        .iter()
        .zip(g.marginals())
        .map(|(a, b)| ks_1d(a, b))
        .fold(0.0, f64::max))
}

/// Multivariate KS statistic `sup_q |Π(q) − Π′(q)|`.
///
/// Both CDFs are step functions constant between grid points, so the
/// supremum is a maximum over the grid.
pub fn ks_joint(f: &PriceHistogram, g: &PriceHistogram) -> Result<f64> {
    f.same_grid(g)?;
    let goods = f.goods();
    if goods > KS_JOINT_MAX_GOODS {
        return Err(Error::Capability(format!(
            "exact joint KS supports up to {KS_JOINT_MAX_GOODS} goods, got {goods}; \
             use ks_joint_monte_carlo for an approximate value"
        )));
    }
    let side = f.p_max() + 1;
    let mut idx = vec![0usize; goods];
    let mut best: f64 = 0.0;
    loop {
        let (mut a, mut b) = (1.0, 1.0);
        for (j, &x) in idx.iter().enumerate() {
            a *= f.marginal(j).cdf_table()[x];
            b *= g.marginal(j).cdf_table()[x];
        }
        best = best.max((a - b).abs());

        let mut j = 0;
        loop {
            if j == goods {
                return Ok(best);
            }
            idx[j] += 1;
            if idx[j] < side {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Approximate joint KS for larger markets: the maximum CDF gap over
/// `points` random grid points drawn from an even mixture of `f` and `g`.
/// This is a lower bound on the exact statistic.
pub fn ks_joint_monte_carlo<R: Rng + ?Sized>(
    f: &PriceHistogram,
    g: &PriceHistogram,
    points: usize,
    rng: &mut R,
) -> Result<f64> {
    f.same_grid(g)?;
    if points == 0 {
        return Err(Error::Parameter("need at least one evaluation point".into()));
    }
    let mut best: f64 = 0.0;
    for _ in 0..points {
        let q = if rng.gen_bool(0.5) { f.sample_grid(rng) } else { g.sample_grid(rng) };
        let (mut a, mut b) = (1.0, 1.0);
        for (j, &x) in q.iter().enumerate() {
            a *= f.marginal(j).cdf_table()[x];
            b *= g.marginal(j).cdf_table()[x];
        }
        best = best.max((a - b).abs());
    }
    Ok(best)
}

/// Bundle probability distance: total variation between the winning-set
/// distributions the two predictions induce at bid `b`.
pub fn bp_distance(f: &PriceHistogram, g: &PriceHistogram, b: &BidVector) -> Result<f64> {
    f.same_grid(g)?;
    check_len(f.goods(), b.len())?;
    if f.goods() > BP_MAX_GOODS {
        return Err(Error::Capability(format!(
            "bundle probability distance supports up to {BP_MAX_GOODS} goods, got {}",
            f.goods()
        )));
    }
    let p = bundle_distribution_from_probs(&f.win_probs(b.as_slice()));
    let q = bundle_distribution_from_probs(&g.win_probs(b.as_slice()));
    Ok(0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `kappa · g + (1 − kappa) · f`, good by good.
///
/// The endpoints return the corresponding input unchanged.
pub fn blend(f: &PriceHistogram, g: &PriceHistogram, kappa: f64) -> Result<PriceHistogram> {
    f.same_grid(g)?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Parameter(format!("blend weight {kappa} outside [0, 1]")));
    }
    if kappa == 0.0 {
        return Ok(f.clone());
    }
    if kappa == 1.0 {
        return Ok(g.clone());
    }
    let marginals = f
        .marginals()
        .iter()
        .zip(g.marginals())
        .map(|(a, b)| {
            let mixed: Vec<f64> = a
                .mass()
                .iter()
                .zip(b.mass())
                .map(|(x, y)| kappa * y + (1.0 - kappa) * x)
                .collect();
            Marginal::from_weights(&mixed)
        })
        .collect::<Result<_>>()?;
    PriceHistogram::new(marginals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn random_histogram(rng: &mut impl Rng, goods: usize, p_max: usize) -> PriceHistogram {
        let marginals = (0..goods)
            .map(|_| {
                let mut w: Vec<f64> = (0..=p_max)
                    .map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen::<f64>() })
                    .collect();
                w[rng.gen_range(0..=p_max)] += 0.1;
                Marginal::from_weights(&w).unwrap()
            })
            .collect();
        PriceHistogram::new(marginals).unwrap()
    }

    #[test]
    fn ks_marginal_examples() {
        let mut rng = seed::rng(1, &[]);
        let f = random_histogram(&mut rng, 3, 12);
        let g = random_histogram(&mut rng, 3, 12);
        assert_eq!(ks_marginal(&f, &f).unwrap(), 0.0);
        assert_eq!(ks_marginal(&f, &g).unwrap(), ks_marginal(&g, &f).unwrap());

        let low = PriceHistogram::point(&[0], 12).unwrap();
        let high = PriceHistogram::point(&[12], 12).unwrap();
        assert_eq!(ks_marginal(&low, &high).unwrap(), 1.0);

        let other = PriceHistogram::uniform(3, 13);
        assert!(matches!(ks_marginal(&f, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn ks_joint_reduces_to_one_dimension() {
        let mut rng = seed::rng(2, &[]);
        let f = random_histogram(&mut rng, 1, 20);
        let g = random_histogram(&mut rng, 1, 20);
        assert_eq!(ks_joint(&f, &g).unwrap(), ks_marginal(&f, &g).unwrap());
        assert_eq!(ks_joint(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn ks_joint_matches_double_loop() {
        let mut rng = seed::rng(3, &[]);
        for _ in 0..20 {
            let f = random_histogram(&mut rng, 2, 6);
            let g = random_histogram(&mut rng, 2, 6);
            let mut expected: f64 = 0.0;
            // include points off the grid on both sides
            for x in -1..=8 {
                for y in -1..=8 {
                    let cdf = |h: &PriceHistogram| {
                        h.marginal(0).cdf(x as f64 + 0.5) * h.marginal(1).cdf(y as f64 + 0.5)
                    };
                    expected = expected.max((cdf(&f) - cdf(&g)).abs());
                }
            }
            assert!((ks_joint(&f, &g).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn ks_joint_has_a_goods_limit() {
        let f = PriceHistogram::uniform(5, 3);
        assert!(matches!(ks_joint(&f, &f), Err(Error::Capability(_))));
        let g = blend(&f, &PriceHistogram::point(&[0, 1, 2, 3, 0], 3).unwrap(), 0.5).unwrap();
        let approx = ks_joint_monte_carlo(&f, &g, 2_000, &mut seed::rng(4, &[])).unwrap();
        assert!(approx > 0.0 && approx <= 1.0);
    }

    #[test]
    fn ks_joint_zero_iff_marginals_equal() {
        let mut rng = seed::rng(5, &[]);
        let f = random_histogram(&mut rng, 3, 5);
        let g = random_histogram(&mut rng, 3, 5);
        assert!(ks_joint(&f, &g).unwrap() > 0.0);
        let mut mixed = f.marginals().to_vec();
        mixed[2] = g.marginal(2).clone();
        let h = PriceHistogram::new(mixed).unwrap();
        assert!(ks_joint(&f, &h).unwrap() > 0.0);
        assert_eq!(ks_joint(&f, &f.clone()).unwrap(), 0.0);
    }

    #[test]
    fn bp_distance_examples() {
        let mut rng = seed::rng(6, &[]);
        let f = random_histogram(&mut rng, 3, 10);
        let g = random_histogram(&mut rng, 3, 10);
        let b = BidVector::new(vec![4.0, 6.0, 2.0]).unwrap();
        assert_eq!(bp_distance(&f, &f, &b).unwrap(), 0.0);
        assert_eq!(bp_distance(&f, &g, &BidVector::zeros(3)).unwrap(), 0.0);
        let d = bp_distance(&f, &g, &b).unwrap();
        assert!((0.0..=1.0).contains(&d));
        assert_eq!(d, bp_distance(&g, &f, &b).unwrap());

        let below = PriceHistogram::point(&[1, 1], 10).unwrap();
        let above = PriceHistogram::point(&[9, 9], 10).unwrap();
        let mid = BidVector::new(vec![5.0, 5.0]).unwrap();
        assert_eq!(bp_distance(&below, &above, &mid).unwrap(), 1.0);

        let big = PriceHistogram::uniform(7, 2);
        assert!(matches!(
            bp_distance(&big, &big, &BidVector::zeros(7)),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn blend_endpoints_and_normalization() {
        let mut rng = seed::rng(7, &[]);
        let f = random_histogram(&mut rng, 2, 9);
        let g = random_histogram(&mut rng, 2, 9);
        assert_eq!(blend(&f, &g, 1.0).unwrap(), g);
        assert_eq!(blend(&f, &g, 0.0).unwrap(), f);
        let h = blend(&f, &g, 0.3).unwrap();
        for m in h.marginals() {
            assert!((m.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((h.marginal(0).mass()[4] - (0.3 * g.marginal(0).mass()[4] + 0.7 * f.marginal(0).mass()[4])).abs() < 1e-12);
        assert!(blend(&f, &g, 1.5).is_err());
        assert!(blend(&f, &g, -0.1).is_err());
    }
}
