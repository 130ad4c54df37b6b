//! Population state, the linear loss law, and single energy transfers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent: its current energy and its (fixed) importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    energy: f64,
    weight: f64,
}

impl AgentState {
    pub fn new(energy: f64, weight: f64) -> Result<Self> {
        if !(energy.is_finite() && energy >= 0.0) {
            return Err(Error::Domain(format!("agent energy must be >= 0, got {energy}")));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Domain(format!("agent weight must be > 0, got {weight}")));
        }
        Ok(Self { energy, weight })
    }

    #[inline]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Energy per unit of weight.
    #[inline]
    pub fn relative_energy(&self) -> f64 {
        self.energy / self.weight
    }
}

/// The loss constant of the charging equipment, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub const LOSSLESS: Beta = Beta(0.0);

    pub fn new(beta: f64) -> Result<Self> {
        if (0.0..1.0).contains(&beta) {
            Ok(Self(beta))
        } else {
            Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_lossless(self) -> bool {
        self.0 == 0.0
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Beta::new(v)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

/// Energy lost in transit when `epsilon` units are sent: `beta * epsilon`.
pub fn loss(epsilon: f64, beta: Beta) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("transfer amount must be >= 0, got {epsilon}")));
    }
    Ok(lost_in_transit(epsilon, beta))
}

#[inline]
pub(crate) fn lost_in_transit(epsilon: f64, beta: Beta) -> f64 {
    beta.0 * epsilon
}

/// What actually arrives at the receiver when `epsilon` is sent.
///
/// Every transfer in the crate goes through this so that the protocol
/// functions and [`Population::apply_transfer`] round identically.
#[inline]
pub(crate) fn delivered(epsilon: f64, beta: Beta) -> f64 {
    epsilon - lost_in_transit(epsilon, beta)
}

/// Bookkeeping for one completed transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRecord {
    pub sender: usize,
    pub receiver: usize,
    pub sent: f64,
    pub lost: f64,
}

/// The full system state: agents plus the loss constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    agents: Vec<AgentState>,
    beta: Beta,
}

impl Population {
    pub fn new(agents: Vec<AgentState>, beta: Beta) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::InvalidPopulation(agents.len()));
        }
        Ok(Self { agents, beta })
    }

    /// Builds a population from parallel energy and weight vectors.
    pub fn from_vectors(energies: &[f64], weights: &[f64], beta: f64) -> Result<Self> {
        if energies.len() != weights.len() {
            return Err(Error::LengthMismatch(energies.len(), weights.len()));
        }
        let agents = energies
            .iter()
            .zip(weights)
            .map(|(&e, &w)| AgentState::new(e, w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(agents, Beta::new(beta)?)
    }

    /// Uniform unit weights.
    pub fn uniform(energies: &[f64], beta: f64) -> Result<Self> {
        Self::from_vectors(energies, &vec![1.0; energies.len()], beta)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    #[inline]
    pub fn beta(&self) -> Beta {
        self.beta
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    #[inline]
    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn energies(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.agents.iter().map(|a| a.energy)
    }

    pub fn weights(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.agents.iter().map(|a| a.weight)
    }

    pub fn total_energy(&self) -> f64 {
        self.energies().sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().sum()
    }

    /// True when every agent carries the same weight.
    pub fn has_uniform_weights(&self) -> bool {
        let w0 = self.agents[0].weight;
        self.agents.iter().all(|a| a.weight == w0)
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.len() || j >= self.len() {
            return Err(Error::InvalidPair(i, j));
        }
        Ok(())
    }

    /// Moves `epsilon` from `sender` to `receiver`; the receiver gets
    /// `epsilon - loss(epsilon)`.
    pub fn apply_transfer(&mut self, sender: usize, receiver: usize, epsilon: f64) -> Result<TransferRecord> {
        self.check_pair(sender, receiver)?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("transfer amount must be >= 0, got {epsilon}")));
        }
        let available = self.agents[sender].energy;
        if epsilon > available {
            return Err(Error::InsufficientEnergy {
                agent: sender,
                available,
                requested: epsilon,
            });
        }
        let lost = lost_in_transit(epsilon, self.beta);
        if epsilon > 0.0 {
            self.agents[sender].energy = available - epsilon;
            self.agents[receiver].energy += delivered(epsilon, self.beta);
        }
        Ok(TransferRecord {
            sender,
            receiver,
            sent: epsilon,
            lost,
        })
    }

    /// Overwrites the energies of an interacting pair with protocol output.
    pub(crate) fn set_pair_energies(&mut self, i: usize, j: usize, ei: f64, ej: f64) {
        debug_assert!(ei >= 0.0 && ej >= 0.0, "negative energy ({ei}, {ej})");
        self.agents[i].energy = ei;
        self.agents[j].energy = ej;
    }
}

/// Sum of agent energies.
pub fn total_energy(pop: &Population) -> f64 {
    pop.total_energy()
}
