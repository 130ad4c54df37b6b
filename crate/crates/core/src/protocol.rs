//! The pairwise interaction protocols.
//!
//! Each protocol is a pure function of the two agents' energies and weights
//! (plus, for the online-average protocol, their local registers). Agents
//! have no identity at this boundary; the engine maps indices to arguments.
//!
//! * `ows`: oblivious weighted share. Splits the pair's energy in proportion to
//!   weight. With loss, the relatively richer agent sends the amount that
//!   would balance the pair loss-lessly.
//! * `swt`: small weighted transfer. Moves `phi * d_epsilon` where `phi` is the
//!   gap in relative energy, guarded against overshoot.
//! * `owa`: online weighted average. Agents accumulate the energy and weight
//!   they observe and only transfer when exactly one of the pair sits above
//!   its local estimate of its target.
//! * `quantum`: a flat `d_epsilon` exchange between agents whose relative
//!   energies differ by more than `d_epsilon`. This is the transfer rule the
//!   lossy drift bound in [`crate::oracle::drift_bound_check`] is stated for.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{delivered, lost_in_transit, Beta, Population};

/// Default energy quantum for the small-transfer protocols.
pub const DEFAULT_D_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    UToV,
    VToU,
}

/// Result of a single pairwise interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOutcome {
    pub new_energy_u: f64,
    pub new_energy_v: f64,
    /// Amount sent by the sending side (0 when nothing moved).
    pub transferred: f64,
    pub lost: f64,
    pub useful: bool,
    pub direction: Option<Direction>,
}

impl ProtocolOutcome {
    fn idle(eps_u: f64, eps_v: f64) -> Self {
        Self {
            new_energy_u: eps_u,
            new_energy_v: eps_v,
            transferred: 0.0,
            lost: 0.0,
            useful: false,
            direction: None,
        }
    }

    fn send(eps_u: f64, eps_v: f64, amount: f64, direction: Direction, beta: Beta) -> Self {
        if amount <= 0.0 {
            return Self::idle(eps_u, eps_v);
        }
        let (new_u, new_v) = match direction {
            Direction::UToV => (eps_u - amount, eps_v + delivered(amount, beta)),
            Direction::VToU => (eps_u + delivered(amount, beta), eps_v - amount),
        };
        Self {
            new_energy_u: new_u,
            new_energy_v: new_v,
            transferred: amount,
            lost: lost_in_transit(amount, beta),
            useful: true,
            direction: Some(direction),
        }
    }

    /// The same outcome seen with the two agents swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            new_energy_u: self.new_energy_v,
            new_energy_v: self.new_energy_u,
            direction: self.direction.map(|d| match d {
                Direction::UToV => Direction::VToU,
                Direction::VToU => Direction::UToV,
            }),
            ..*self
        }
    }
}

/// The amount that equalizes relative energies without loss:
/// `|w_v * eps_u - w_u * eps_v| / (w_u + w_v)`.
#[inline]
fn balancing_amount(eps_u: f64, w_u: f64, eps_v: f64, w_v: f64) -> f64 {
    ((w_v * eps_u - w_u * eps_v) / (w_u + w_v)).abs()
}

/// Oblivious weighted share.
pub fn ows_interact(eps_u: f64, w_u: f64, eps_v: f64, w_v: f64, beta: Beta) -> ProtocolOutcome {
    ows_interact_with_threshold(eps_u, w_u, eps_v, w_v, beta, None)
}

/// Oblivious weighted share that only fires when the relative-energy gap
/// `|eps_u/w_u - eps_v/w_v|` exceeds `threshold`.
pub fn ows_interact_with_threshold(
    eps_u: f64,
    w_u: f64,
    eps_v: f64,
    w_v: f64,
    beta: Beta,
    threshold: Option<f64>,
) -> ProtocolOutcome {
    let (rel_u, rel_v) = (eps_u / w_u, eps_v / w_v);
    if let Some(t) = threshold {
        if !((rel_u - rel_v).abs() > t) {
            return ProtocolOutcome::idle(eps_u, eps_v);
        }
    }
    let delta = balancing_amount(eps_u, w_u, eps_v, w_v);
    if delta == 0.0 {
        return ProtocolOutcome::idle(eps_u, eps_v);
    }
    let direction = if rel_u > rel_v {
        Direction::UToV
    } else {
        Direction::VToU
    };
    if beta.is_lossless() {
        let pooled = eps_u + eps_v;
        let total_w = w_u + w_v;
        return ProtocolOutcome {
            new_energy_u: w_u * pooled / total_w,
            new_energy_v: w_v * pooled / total_w,
            transferred: delta,
            lost: 0.0,
            useful: true,
            direction: Some(direction),
        };
    }
    ProtocolOutcome::send(eps_u, eps_v, delta, direction, beta)
}

/// Small-transfer configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwtConfig {
    d_epsilon: f64,
}

impl SwtConfig {
    pub fn new(d_epsilon: f64) -> Result<Self> {
        if d_epsilon.is_finite() && d_epsilon > 0.0 {
            Ok(Self { d_epsilon })
        } else {
            Err(Error::Domain(format!("d_epsilon must be > 0, got {d_epsilon}")))
        }
    }

    pub fn d_epsilon(&self) -> f64 {
        self.d_epsilon
    }
}

impl Default for SwtConfig {
    fn default() -> Self {
        Self {
            d_epsilon: DEFAULT_D_EPSILON,
        }
    }
}

/// Small weighted transfer.
///
/// The two guards are evaluated literally; the first is non-strict and the
/// second strict, so the protocol is not perfectly symmetric on the boundary.
pub fn swt_interact(eps_u: f64, w_u: f64, eps_v: f64, w_v: f64, beta: Beta, cfg: SwtConfig) -> ProtocolOutcome {
    let phi = (eps_u / w_u - eps_v / w_v).abs();
    let amount = phi * cfg.d_epsilon;
    if (eps_u - amount) / w_u >= (eps_v + amount) / w_v {
        ProtocolOutcome::send(eps_u, eps_v, amount, Direction::UToV, beta)
    } else if (eps_u + amount) / w_u < (eps_v - amount) / w_v {
        ProtocolOutcome::send(eps_u, eps_v, amount, Direction::VToU, beta)
    } else {
        ProtocolOutcome::idle(eps_u, eps_v)
    }
}

/// Flat-quantum exchange: if relative energies differ by more than
/// `d_epsilon`, the richer agent sends exactly `d_epsilon`.
pub fn quantum_interact(eps_u: f64, w_u: f64, eps_v: f64, w_v: f64, beta: Beta, cfg: SwtConfig) -> ProtocolOutcome {
    let gap = eps_u / w_u - eps_v / w_v;
    let d = cfg.d_epsilon;
    if gap > d && eps_u >= d {
        ProtocolOutcome::send(eps_u, eps_v, d, Direction::UToV, beta)
    } else if -gap > d && eps_v >= d {
        ProtocolOutcome::send(eps_u, eps_v, d, Direction::VToU, beta)
    } else {
        ProtocolOutcome::idle(eps_u, eps_v)
    }
}

/// Local registers of the online weighted average protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwaRegisters {
    /// Cumulative observed energy.
    pub nrg: f64,
    /// Cumulative observed weight.
    pub wt: f64,
}

impl OwaRegisters {
    /// Registers seeded with the agent's own initial energy and weight.
    pub fn init(energy: f64, weight: f64) -> Self {
        Self {
            nrg: energy,
            wt: weight,
        }
    }

    /// The agent's current estimate of its weighted target energy.
    #[inline]
    pub fn estimate(&self, weight: f64) -> f64 {
        weight / self.wt * self.nrg
    }

    fn observe(&mut self, energy: f64, weight: f64) {
        self.nrg += energy;
        self.wt += weight;
    }
}

/// Online weighted average.
///
/// Registers are updated first, from pre-interaction energies, whether or not
/// a transfer follows.
pub fn owa_interact(
    eps_u: f64,
    w_u: f64,
    reg_u: OwaRegisters,
    eps_v: f64,
    w_v: f64,
    reg_v: OwaRegisters,
    beta: Beta,
) -> (ProtocolOutcome, OwaRegisters, OwaRegisters) {
    let mut reg_u = reg_u;
    let mut reg_v = reg_v;
    reg_u.observe(eps_v, w_v);
    reg_v.observe(eps_u, w_u);

    let u_above = eps_u > reg_u.estimate(w_u);
    let v_above = eps_v > reg_v.estimate(w_v);
    if u_above == v_above {
        return (ProtocolOutcome::idle(eps_u, eps_v), reg_u, reg_v);
    }
    let delta = balancing_amount(eps_u, w_u, eps_v, w_v);
    let direction = if eps_u / w_u > eps_v / w_v {
        Direction::UToV
    } else {
        Direction::VToU
    };
    (
        ProtocolOutcome::send(eps_u, eps_v, delta, direction, beta),
        reg_u,
        reg_v,
    )
}

/// Protocol selector used in configuration files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Ows,
    Swt,
    Owa,
    Quantum,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [Self::Ows, Self::Swt, Self::Owa, Self::Quantum];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ows => "ows",
            Self::Swt => "swt",
            Self::Owa => "owa",
            Self::Quantum => "quantum",
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ows" => Ok(Self::Ows),
            "swt" => Ok(Self::Swt),
            "owa" => Ok(Self::Owa),
            "quantum" => Ok(Self::Quantum),
            other => Err(Error::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

/// A fully parameterized protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    Ows { threshold: Option<f64> },
    Swt(SwtConfig),
    Owa,
    Quantum(SwtConfig),
}

impl Protocol {
    pub fn from_kind(kind: ProtocolKind, d_epsilon: f64, ows_threshold: Option<f64>) -> Result<Self> {
        Ok(match kind {
            ProtocolKind::Ows => Protocol::Ows {
                threshold: ows_threshold,
            },
            ProtocolKind::Swt => Protocol::Swt(SwtConfig::new(d_epsilon)?),
            ProtocolKind::Owa => Protocol::Owa,
            ProtocolKind::Quantum => Protocol::Quantum(SwtConfig::new(d_epsilon)?),
        })
    }

    pub fn kind(&self) -> ProtocolKind {
        match self {
            Protocol::Ows { .. } => ProtocolKind::Ows,
            Protocol::Swt(_) => ProtocolKind::Swt,
            Protocol::Owa => ProtocolKind::Owa,
            Protocol::Quantum(_) => ProtocolKind::Quantum,
        }
    }
}

/// A protocol bound to a population, carrying any per-agent protocol state.
#[derive(Debug, Clone)]
pub struct ProtocolRunner {
    protocol: Protocol,
    registers: Vec<OwaRegisters>,
}

impl ProtocolRunner {
    pub fn new(protocol: Protocol, pop: &Population) -> Self {
        let registers = match protocol {
            Protocol::Owa => pop
                .agents()
                .iter()
                .map(|a| OwaRegisters::init(a.energy(), a.weight()))
                .collect(),
            _ => Vec::new(),
        };
        Self { protocol, registers }
    }

    /// Resumes with explicit registers (one per agent).
    pub fn with_registers(protocol: Protocol, registers: Vec<OwaRegisters>) -> Self {
        Self { protocol, registers }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn registers(&self) -> &[OwaRegisters] {
        &self.registers
    }

    /// Computes the outcome for agents `i` and `j` without mutating anything.
    pub fn outcome(&self, pop: &Population, i: usize, j: usize) -> ProtocolOutcome {
        let (a, b) = (pop.agent(i), pop.agent(j));
        let beta = pop.beta();
        match self.protocol {
            Protocol::Ows { threshold } => {
                ows_interact_with_threshold(a.energy(), a.weight(), b.energy(), b.weight(), beta, threshold)
            }
            Protocol::Swt(cfg) => swt_interact(a.energy(), a.weight(), b.energy(), b.weight(), beta, cfg),
            Protocol::Quantum(cfg) => quantum_interact(a.energy(), a.weight(), b.energy(), b.weight(), beta, cfg),
            Protocol::Owa => {
                owa_interact(
                    a.energy(),
                    a.weight(),
                    self.registers[i],
                    b.energy(),
                    b.weight(),
                    self.registers[j],
                    beta,
                )
                .0
            }
        }
    }

    /// Lets agents `i` and `j` interact, updating both the population and
    /// the protocol state.
    pub fn interact(&mut self, pop: &mut Population, i: usize, j: usize) -> Result<ProtocolOutcome> {
        if i == j || i >= pop.len() || j >= pop.len() {
            return Err(Error::InvalidPair(i, j));
        }
        let outcome = if let Protocol::Owa = self.protocol {
            let (a, b) = (*pop.agent(i), *pop.agent(j));
            let (outcome, reg_i, reg_j) = owa_interact(
                a.energy(),
                a.weight(),
                self.registers[i],
                b.energy(),
                b.weight(),
                self.registers[j],
                pop.beta(),
            );
            self.registers[i] = reg_i;
            self.registers[j] = reg_j;
            outcome
        } else {
            self.outcome(pop, i, j)
        };
        if outcome.useful {
            pop.set_pair_energies(i, j, outcome.new_energy_u, outcome.new_energy_v);
        }
        Ok(outcome)
    }
}
