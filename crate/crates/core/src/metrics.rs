//! Energy/weight distributions and total variation distance.

use crate::error::{Error, Result};
use crate::model::Population;

/// Deviations with magnitude at or below this are treated as zero.
pub const ZERO_DEVIATION_TOL: f64 = 1e-12;

/// A normalized non-negative vector over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalizes non-negative masses. Fails when they sum to zero.
    pub fn from_masses(masses: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut probs: Vec<f64> = masses.into_iter().collect();
        if let Some(bad) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!("negative or non-finite mass {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution);
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Energy share of each agent.
pub fn energy_distribution(pop: &Population) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_masses(pop.energies())
}

/// Weight share of each agent; constant over a run.
pub fn weight_distribution(pop: &Population) -> DiscreteDistribution {
    DiscreteDistribution::from_masses(pop.weights()).expect("weights are strictly positive")
}

fn check_lengths(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// Half the L1 distance.
pub fn tvd(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    tvd_slices(p.probs(), q.probs())
}

pub(crate) fn tvd_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let d = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    debug_assert!({
        let (over, under) = one_sided_sums(p, q);
        (d - over).abs() <= 1e-12 && (d - under).abs() <= 1e-12
    });
    Ok(d)
}

/// The two one-sided forms: mass where `p > q`, and mass where `p < q`.
/// Both equal the total variation distance.
pub fn tvd_one_sided(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<(f64, f64)> {
    check_lengths(p.probs(), q.probs())?;
    Ok(one_sided_sums(p.probs(), q.probs()))
}

fn one_sided_sums(p: &[f64], q: &[f64]) -> (f64, f64) {
    p.iter().zip(q).fold((0.0, 0.0), |(over, under), (a, b)| {
        if a > b {
            (over + (a - b), under)
        } else {
            (over, under + (b - a))
        }
    })
}

/// TVD between the energy and weight distributions of `pop`.
pub fn balance_tvd(pop: &Population) -> Result<f64> {
    tvd(&energy_distribution(pop)?, &weight_distribution(pop))
}

/// Same value as [`balance_tvd`] (bit for bit) with the weight shares
/// precomputed and no allocation.
pub(crate) fn balance_tvd_with(pop: &Population, weight_shares: &[f64]) -> Result<f64> {
    let total = pop.total_energy();
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let sum: f64 = pop
        .energies()
        .zip(weight_shares)
        .map(|(e, q)| (e / total - q).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Whether `pop` is within `alpha` of weighted energy balance.
pub fn is_weighted_balanced(pop: &Population, alpha: f64) -> Result<bool> {
    Ok(balance_tvd(pop)? <= alpha)
}

/// Per-agent deviation `z(x) = energy_share(x) - weight_share(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationVector {
    z: Vec<f64>,
}

impl DeviationVector {
    pub fn new(energy: &DiscreteDistribution, weight: &DiscreteDistribution) -> Result<Self> {
        check_lengths(energy.probs(), weight.probs())?;
        let z = energy.probs().iter().zip(weight.probs()).map(|(e, w)| e - w).collect();
        Ok(Self { z })
    }

    pub fn of(pop: &Population) -> Result<Self> {
        Self::new(&energy_distribution(pop)?, &weight_distribution(pop))
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    /// Agents above their weighted share.
    pub fn above(&self) -> Vec<usize> {
        self.indices(|z| z > ZERO_DEVIATION_TOL)
    }

    /// Agents below their weighted share.
    pub fn below(&self) -> Vec<usize> {
        self.indices(|z| z < -ZERO_DEVIATION_TOL)
    }

    /// Agents on their weighted share (within tolerance).
    pub fn level(&self) -> Vec<usize> {
        self.indices(|z| z.abs() <= ZERO_DEVIATION_TOL)
    }

    /// `(|A+|, |A-|, |A=|)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.z.iter().fold((0, 0, 0), |(p, n, e), &z| {
            if z > ZERO_DEVIATION_TOL {
                (p + 1, n, e)
            } else if z < -ZERO_DEVIATION_TOL {
                (p, n + 1, e)
            } else {
                (p, n, e + 1)
            }
        })
    }

    fn indices(&self, pred: impl Fn(f64) -> bool) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| pred(self.z[i])).collect()
    }

    pub fn positive_mass(&self) -> f64 {
        self.z.iter().filter(|&&z| z > 0.0).sum()
    }

    pub fn negative_mass(&self) -> f64 {
        -self.z.iter().filter(|&&z| z < 0.0).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_masses(v.iter().copied()).unwrap()
    }

    #[test]
    fn energy_distribution_examples() {
        let pop = Population::uniform(&[1.0, 1.0, 2.0], 0.0).unwrap();
        assert_eq!(energy_distribution(&pop).unwrap().probs(), &[0.25, 0.25, 0.5]);

        let pop = Population::uniform(&[0.0, 0.0, 0.0, 5.0], 0.0).unwrap();
        assert_eq!(energy_distribution(&pop).unwrap().probs(), &[0.0, 0.0, 0.0, 1.0]);

        let mut pop = Population::uniform(&[10.0, 2.0], 0.2).unwrap();
        pop.apply_transfer(0, 1, 4.0).unwrap();
        let e = energy_distribution(&pop).unwrap();
        assert_relative_eq!(e.probs()[0], 6.0 / 11.2, epsilon = 1e-14);
        assert_relative_eq!(e.probs()[1], 5.2 / 11.2, epsilon = 1e-14);

        let pop = Population::uniform(&[0.0, 0.0], 0.0).unwrap();
        assert_eq!(energy_distribution(&pop), Err(Error::DegenerateDistribution));
    }

    #[test]
    fn weight_distribution_examples() {
        let pop = Population::from_vectors(&[1.0; 4], &[1.0; 4], 0.0).unwrap();
        assert_eq!(weight_distribution(&pop).probs(), &[0.25; 4]);
        let pop = Population::from_vectors(&[1.0; 3], &[10.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(
            weight_distribution(&pop).probs(),
            &[10.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0]
        );
        let pop = Population::from_vectors(&[1.0; 2], &[2.0, 1.0], 0.0).unwrap();
        assert_eq!(weight_distribution(&pop).probs(), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn tvd_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap(), 0.5);
        assert_relative_eq!(tvd(&p, &dist(&[0.25, 0.25, 0.5])).unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(
            tvd(&dist(&[1.0, 1.0]), &dist(&[1.0, 1.0, 1.0])),
            Err(Error::LengthMismatch(2, 3))
        );
    }

    #[test]
    fn balance_examples() {
        let pop = Population::from_vectors(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(is_weighted_balanced(&pop, 0.0).unwrap());
        let pop = Population::uniform(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(balance_tvd(&pop).unwrap(), 0.5);
        assert!(!is_weighted_balanced(&pop, 0.4).unwrap());
        assert!(is_weighted_balanced(&pop, 1.0).unwrap());
        let pop = Population::uniform(&[0.0, 0.0], 0.0).unwrap();
        assert!(is_weighted_balanced(&pop, 1.0).is_err());
    }

    #[test]
    fn deviation_partition() {
        let pop = Population::from_vectors(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0], 0.0).unwrap();
        let z = DeviationVector::of(&pop).unwrap();
        assert_eq!(z.above(), vec![0]);
        assert_eq!(z.below(), vec![1]);
        assert_eq!(z.level(), vec![2]);
        assert_eq!(z.counts(), (1, 1, 1));
    }

    fn masses(m: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, m).prop_filter("positive", |v| v.iter().sum::<f64>() > 0.0)
    }

    proptest! {
        #[test]
        fn tvd_forms_agree((a, b) in (2usize..40).prop_flat_map(|m| (masses(m..m + 1), masses(m..m + 1)))) {
            let (p, q) = (dist(&a), dist(&b));
            let d = tvd(&p, &q).unwrap();
            let (over, under) = tvd_one_sided(&p, &q).unwrap();
            prop_assert!((0.0..=1.0 + 1e-15).contains(&d));
            prop_assert_eq!(d, tvd(&q, &p).unwrap());
            prop_assert!((d - over).abs() <= 1e-12);
            prop_assert!((d - under).abs() <= 1e-12);
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn deviation_invariants(
            e in prop::collection::vec(0.1f64..100.0, 2..30),
            seed in any::<u64>(),
        ) {
            let w: Vec<f64> = e.iter().enumerate().map(|(i, _)| 1.0 + ((seed >> (i % 60)) & 7) as f64).collect();
            let pop = Population::from_vectors(&e, &w, 0.0).unwrap();
            let z = DeviationVector::of(&pop).unwrap();
            let d = balance_tvd(&pop).unwrap();
            let (p, n, l) = z.counts();
            prop_assert_eq!(p + n + l, e.len());
            prop_assert!(z.values().iter().sum::<f64>().abs() <= 1e-12);
            prop_assert!((z.positive_mass() - d).abs() <= 1e-12);
            prop_assert!((z.negative_mass() - d).abs() <= 1e-12);
        }

        #[test]
        fn zero_tvd_iff_proportional(w in prop::collection::vec(0.5f64..10.0, 2..20), scale in 0.1f64..50.0, bump in 0.0f64..1.0) {
            let e: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let pop = Population::from_vectors(&e, &w, 0.0).unwrap();
            prop_assert!(balance_tvd(&pop).unwrap() <= 1e-12);

            let mut e2 = e.clone();
            e2[0] += bump * scale + 0.1;
            let pop = Population::from_vectors(&e2, &w, 0.0).unwrap();
            let (te, tw) = (pop.total_energy(), pop.total_weight());
            let proportional = pop.agents().iter().all(|a| ((a.energy() * tw) - (a.weight() * te)).abs() <= 1e-10 * te * tw);
            prop_assert!(!proportional);
            prop_assert!(balance_tvd(&pop).unwrap() > 1e-12);
        }
    }
}
