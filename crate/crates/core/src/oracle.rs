//! Analytical checks by exhaustive pair enumeration.
//!
//! Under the probabilistic scheduler every unordered pair is chosen with
//! probability `1 / C(m,2)`, so the conditional expectation of any one-step
//! quantity is the plain average over all pairs. [`exact_one_step`] computes
//! that average by applying the protocol to a copy of the population for
//! each pair; the bound checks compare it against closed-form bounds.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{balance_tvd, DeviationVector};
use crate::model::Population;
use crate::par::{map_indexed, ordered_sum, Execution};
use crate::protocol::{Protocol, ProtocolRunner, SwtConfig};
use crate::scheduler::{pair_count, sample_pair, unrank_pair};

/// Largest number of pairs [`exact_one_step`] will enumerate.
pub const MAX_ENUMERATED_PAIRS: u64 = 1_000_000;

/// Absolute slack on every bound comparison.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEntry {
    pub pair: (usize, usize),
    pub tvd_after: f64,
    pub useful: bool,
}

/// Exact one-step expectations for a population.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepReport {
    pub tvd_before: f64,
    pub expected_tvd_after: f64,
    /// Expected change in balance TVD over one scheduler step.
    pub expected_delta: f64,
    pub pairs: Vec<PairEntry>,
}

/// Enumerates every pair, applying `runner`'s protocol to a copy each time.
pub fn exact_one_step(pop: &Population, runner: &ProtocolRunner, exec: Execution) -> Result<OneStepReport> {
    let m = pop.len();
    let n_pairs = pair_count(m);
    if n_pairs > MAX_ENUMERATED_PAIRS {
        return Err(Error::EnumerationLimit {
            pairs: n_pairs,
            limit: MAX_ENUMERATED_PAIRS,
        });
    }
    let tvd_before = balance_tvd(pop)?;
    let entries = map_indexed(exec, n_pairs as usize, |rank| -> Result<PairEntry> {
        let (i, j) = unrank_pair(m, rank as u64);
        let mut after = pop.clone();
        let mut state = runner.clone();
        let outcome = state.interact(&mut after, i, j)?;
        let tvd_after = if outcome.useful {
            balance_tvd(&after)?
        } else {
            tvd_before
        };
        Ok(PairEntry {
            pair: (i, j),
            tvd_after,
            useful: outcome.useful,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = n_pairs as f64;
    let after: Vec<f64> = entries.iter().map(|e| e.tvd_after).collect();
    let deltas: Vec<f64> = entries.iter().map(|e| e.tvd_after - tvd_before).collect();
    Ok(OneStepReport {
        tvd_before,
        expected_tvd_after: ordered_sum(&after) / n,
        expected_delta: ordered_sum(&deltas) / n,
        pairs: entries,
    })
}

/// Monte Carlo estimate of the expected one-step TVD change:
/// `(mean, standard error)` over `draws` independent scheduler draws.
pub fn sampled_one_step<R: Rng + ?Sized>(
    pop: &Population,
    runner: &ProtocolRunner,
    draws: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::Domain("need at least 2 draws".into()));
    }
    let before = balance_tvd(pop)?;
    // Welford
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for n in 1..=draws {
        let (i, j) = sample_pair(pop.len(), rng)?;
        let mut after = pop.clone();
        let mut state = runner.clone();
        let outcome = state.interact(&mut after, i, j)?;
        let x = if outcome.useful {
            balance_tvd(&after)? - before
        } else {
            0.0
        };
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok((mean, (var / draws as f64).sqrt()))
}

/// Left side, right side, and verdict of a bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + BOUND_TOLERANCE,
        }
    }
}

/// Loss-less contraction: expected TVD after one step under the oblivious
/// weighted share is at most `(1 - 1/C(m,2))` times the current TVD.
pub fn contraction_bound_check(pop: &Population, exec: Execution) -> Result<BoundCheck> {
    if !pop.beta().is_lossless() {
        return Err(Error::WrongRegime(format!(
            "contraction bound needs beta = 0, got {}",
            pop.beta().get()
        )));
    }
    let runner = ProtocolRunner::new(Protocol::Ows { threshold: None }, pop);
    let report = exact_one_step(pop, &runner, exec)?;
    let rhs = (1.0 - 1.0 / pair_count(pop.len()) as f64) * report.tvd_before;
    Ok(BoundCheck::new(report.expected_tvd_after, rhs))
}

/// Upper bound on the number of scheduler steps until the expected TVD of
/// the loss-less oblivious protocol drops to `c`: `C(m,2) * ln(tvd0 / c)`.
pub fn convergence_time_bound(m: usize, tvd0: f64, c: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidPopulation(m));
    }
    if !(tvd0 > 0.0 && tvd0 <= 1.0) {
        return Err(Error::Domain(format!("initial tvd must lie in (0, 1], got {tvd0}")));
    }
    if !(c > 0.0 && c < tvd0) {
        return Err(Error::Domain(format!(
            "target {c} must lie in (0, {tvd0}); the bound would be zero or negative"
        )));
    }
    Ok(pair_count(m) as f64 * (tvd0 / c).ln())
}

/// The worst case for the lossy oblivious protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialInstance {
    /// Uniform weights; agents `0..m-1` hold `m` units, agent `m-1` holds 0.
    pub population: Population,
    pub initial_tvd: f64,
    /// `2/m - (2 - beta)/(2m - 2 - beta)`: the TVD after the empty agent
    /// meets any other agent.
    pub predicted_tvd_after: f64,
}

pub fn adversarial_instance(m: usize, beta: f64) -> Result<AdversarialInstance> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let min_m = (2.0 + beta) / beta;
    if !(m as f64 > min_m) {
        return Err(Error::Domain(format!("need m > (2 + beta)/beta = {min_m:.4}, got {m}")));
    }
    let mut energies = vec![m as f64; m];
    energies[m - 1] = 0.0;
    let population = Population::uniform(&energies, beta)?;
    let mf = m as f64;
    Ok(AdversarialInstance {
        population,
        initial_tvd: 1.0 / mf,
        predicted_tvd_after: 2.0 / mf - (2.0 - beta) / (2.0 * mf - 2.0 - beta),
    })
}

/// A population where agent `deviator` holds `excess` more than its weighted
/// share of `total`, and the shortfall is spread over everyone else in
/// proportion to weight. `excess` may be negative.
pub fn single_deviator(weights: &[f64], total: f64, deviator: usize, excess: f64, beta: f64) -> Result<Population> {
    if deviator >= weights.len() {
        return Err(Error::Domain(format!("no agent {deviator}")));
    }
    let w_total: f64 = weights.iter().sum();
    let w_rest = w_total - weights[deviator];
    let energies: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(x, &w)| {
            let share = w / w_total * total;
            if x == deviator {
                share + excess
            } else {
                share - excess * w / w_rest
            }
        })
        .collect();
    Population::from_vectors(&energies, weights, beta)
}

/// Lossy drift bound for uniform weights:
/// `E[change in TVD] <= 4/E_t * (beta - |A+| |A-| / (m (m - 1)))`.
///
/// The left side is the exact expectation under the flat-quantum transfer
/// rule ([`crate::protocol::quantum_interact`]); `E_t` is the total energy
/// after a useful step, `E - beta * d_epsilon`.
pub fn drift_bound_check(pop: &Population, d_epsilon: f64, exec: Execution) -> Result<BoundCheck> {
    let (drift, e_next, occupancy) = quantum_drift(pop, d_epsilon, exec)?;
    let beta = pop.beta().get();
    Ok(BoundCheck::new(drift, 4.0 / e_next * (beta - occupancy)))
}

/// Companion to [`drift_bound_check`] with the quantum on the right side and
/// the deviation measured as `sum |z|` (twice the TVD):
/// `E[change in sum |z|] <= 4 d_epsilon / E_t * (beta - |A+| |A-| / (m (m - 1)))`.
///
/// This is the form the case analysis behind the bound actually establishes.
pub fn drift_scaled_check(pop: &Population, d_epsilon: f64, exec: Execution) -> Result<BoundCheck> {
    let (drift, e_next, occupancy) = quantum_drift(pop, d_epsilon, exec)?;
    let beta = pop.beta().get();
    Ok(BoundCheck::new(
        2.0 * drift,
        4.0 * d_epsilon / e_next * (beta - occupancy),
    ))
}

/// `(E[change in TVD], E_t, |A+| |A-| / (m (m - 1)))`.
fn quantum_drift(pop: &Population, d_epsilon: f64, exec: Execution) -> Result<(f64, f64, f64)> {
    if !pop.has_uniform_weights() {
        return Err(Error::WrongRegime(
            "lossy drift bound is stated for uniform weights".into(),
        ));
    }
    let cfg = SwtConfig::new(d_epsilon)?;
    let runner = ProtocolRunner::new(Protocol::Quantum(cfg), pop);
    let report = exact_one_step(pop, &runner, exec)?;
    let (above, below, _) = DeviationVector::of(pop)?.counts();
    let m = pop.len() as f64;
    let e_next = pop.total_energy() - pop.beta().get() * d_epsilon;
    Ok((report.expected_delta, e_next, (above * below) as f64 / (m * (m - 1.0))))
}
