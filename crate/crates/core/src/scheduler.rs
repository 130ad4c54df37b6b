//! Pair selection.
//!
//! The probabilistic scheduler draws one unordered pair per step, uniformly
//! among the `m(m-1)/2` candidates, by drawing a single rank in
//! `[0, C(m,2))` and unranking it. Scripted schedules replay a fixed
//! sequence for deterministic tests and worst-case replays.
//!
//! # Streams
//!
//! All randomness comes from ChaCha8 keyed by [`StreamKey`]. A key is the
//! SplitMix64 expansion of `(master_seed, domain, cell, replication)`, so
//! every (experiment cell, replication) pair owns an independent stream and
//! adding replications never perturbs existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of unordered pairs among `m` agents.
#[inline]
pub fn pair_count(m: usize) -> u64 {
    let m = m as u64;
    m * m.saturating_sub(1) / 2
}

/// Maps a rank in `[0, C(m,2))` to the pair `(i, j)`, `i < j`, in
/// lexicographic order: `(0,1), (0,2), ..., (0,m-1), (1,2), ...`.
pub fn unrank_pair(m: usize, rank: u64) -> (usize, usize) {
    debug_assert!(rank < pair_count(m));
    let mut i = 0usize;
    let mut rest = rank;
    let mut row = (m - 1) as u64;
    while rest >= row {
        rest -= row;
        row -= 1;
        i += 1;
    }
    (i, i + 1 + rest as usize)
}

/// Inverse of [`unrank_pair`].
pub fn rank_pair(m: usize, i: usize, j: usize) -> u64 {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    let (m, i, j) = (m as u64, i as u64, j as u64);
    i * (2 * m - i - 1) / 2 + (j - i - 1)
}

/// Draws one pair uniformly among all unordered pairs of `m` agents.
pub fn sample_pair<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<(usize, usize)> {
    if m < 2 {
        return Err(Error::InvalidPopulation(m));
    }
    let rank = rng.gen_range(0..pair_count(m));
    Ok(unrank_pair(m, rank))
}

/// Source of interacting pairs.
pub trait PairSchedule: Send {
    /// Next pair as `(i, j)` with `i < j`.
    fn next_pair(&mut self, m: usize) -> Result<(usize, usize)>;
}

impl<S: PairSchedule + ?Sized> PairSchedule for Box<S> {
    fn next_pair(&mut self, m: usize) -> Result<(usize, usize)> {
        (**self).next_pair(m)
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which consumer a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamDomain {
    Initialization = 1,
    Scheduling = 2,
    Sampling = 3,
}

/// Identifies an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub domain: StreamDomain,
    pub cell: u64,
    pub replication: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, domain: StreamDomain, cell: u64, replication: u64) -> Self {
        Self {
            master_seed,
            domain,
            cell,
            replication,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master_seed;
        let mut seed = [0u8; 32];
        let mut mix = 0u64;
        for word in [self.domain as u64, self.cell, self.replication] {
            state ^= splitmix64(&mut mix) ^ word;
            splitmix64(&mut state);
        }
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// A stable 64-bit identifier for arbitrary labels (used for experiment cells).
pub fn label_id(parts: &[u64]) -> u64 {
    let mut state = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        state ^= p;
        splitmix64(&mut state);
    }
    splitmix64(&mut state)
}

/// The probabilistic scheduler.
#[derive(Debug, Clone)]
pub struct ProbabilisticScheduler {
    rng: ChaCha8Rng,
    draws: u64,
}

impl ProbabilisticScheduler {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng, draws: 0 }
    }

    /// Scheduler on the scheduling stream of a single run seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(StreamKey::new(seed, StreamDomain::Scheduling, 0, 0).rng())
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl PairSchedule for ProbabilisticScheduler {
    fn next_pair(&mut self, m: usize) -> Result<(usize, usize)> {
        let pair = sample_pair(m, &mut self.rng)?;
        self.draws += 1;
        Ok(pair)
    }
}

/// Replays a fixed list of pairs, then fails.
#[derive(Debug, Clone)]
pub struct ScriptedSchedule {
    pairs: Vec<(usize, usize)>,
    cursor: usize,
}

impl ScriptedSchedule {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        let pairs = pairs
            .into_iter()
            .map(|(i, j)| if i <= j { (i, j) } else { (j, i) })
            .collect();
        Self { pairs, cursor: 0 }
    }

    /// Builds a script and checks every index against a population size.
    pub fn for_population(pairs: Vec<(usize, usize)>, m: usize) -> Result<Self> {
        let script = Self::new(pairs);
        script.validate(m)?;
        Ok(script)
    }

    fn validate(&self, m: usize) -> Result<()> {
        match self.pairs.iter().find(|&&(i, j)| i == j || j >= m) {
            Some(&(i, j)) => Err(Error::InvalidPair(i, j)),
            None => Ok(()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.pairs.len() - self.cursor
    }
}

impl PairSchedule for ScriptedSchedule {
    fn next_pair(&mut self, m: usize) -> Result<(usize, usize)> {
        let &(i, j) = self
            .pairs
            .get(self.cursor)
            .ok_or(Error::ScheduleExhausted(self.pairs.len()))?;
        if i == j || j >= m {
            return Err(Error::InvalidPair(i, j));
        }
        self.cursor += 1;
        Ok((i, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrank_enumerates_all_pairs_in_order() {
        for m in 2..12 {
            let mut expected = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    expected.push((i, j));
                }
            }
            let got: Vec<_> = (0..pair_count(m)).map(|r| unrank_pair(m, r)).collect();
            assert_eq!(got, expected);
            for (r, &(i, j)) in expected.iter().enumerate() {
                assert_eq!(rank_pair(m, i, j), r as u64);
                assert_eq!(rank_pair(m, j, i), r as u64);
            }
        }
    }

    #[test]
    fn two_agents_always_pair() {
        let mut s = ProbabilisticScheduler::from_seed(9);
        for _ in 0..100 {
            assert_eq!(s.next_pair(2).unwrap(), (0, 1));
        }
        assert_eq!(s.draws(), 100);
    }

    #[test]
    fn small_population_rejected() {
        let mut s = ProbabilisticScheduler::from_seed(1);
        assert_eq!(s.next_pair(1), Err(Error::InvalidPopulation(1)));
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = ProbabilisticScheduler::from_seed(42);
        let mut b = ProbabilisticScheduler::from_seed(42);
        let mut c = ProbabilisticScheduler::from_seed(43);
        let sa: Vec<_> = (0..500).map(|_| a.next_pair(17).unwrap()).collect();
        let sb: Vec<_> = (0..500).map(|_| b.next_pair(17).unwrap()).collect();
        let sc: Vec<_> = (0..500).map(|_| c.next_pair(17).unwrap()).collect();
        assert_eq!(sa, sb);
        assert_ne!(sa, sc);
    }

    #[test]
    fn streams_differ_by_every_key_component() {
        let base = StreamKey::new(7, StreamDomain::Scheduling, 3, 11);
        let first = |k: StreamKey| k.rng().gen::<u64>();
        let x = first(base);
        assert_eq!(x, first(base));
        assert_ne!(x, first(StreamKey { master_seed: 8, ..base }));
        assert_ne!(
            x,
            first(StreamKey {
                domain: StreamDomain::Initialization,
                ..base
            })
        );
        assert_ne!(x, first(StreamKey { cell: 4, ..base }));
        assert_ne!(
            x,
            first(StreamKey {
                replication: 12,
                ..base
            })
        );
    }

    #[test]
    fn scripted_replay() {
        let mut s = ScriptedSchedule::new(vec![(0, 1), (1, 2)]);
        assert_eq!(s.next_pair(3).unwrap(), (0, 1));
        assert_eq!(s.next_pair(3).unwrap(), (1, 2));
        assert_eq!(s.next_pair(3), Err(Error::ScheduleExhausted(2)));

        let mut s = ScriptedSchedule::new(vec![]);
        assert!(matches!(s.next_pair(3), Err(Error::ScheduleExhausted(0))));

        let mut s = ScriptedSchedule::new(vec![(2, 0)]);
        assert_eq!(s.next_pair(3).unwrap(), (0, 2));
    }

    #[test]
    fn scripted_index_validation() {
        assert_eq!(
            ScriptedSchedule::for_population(vec![(0, 3)], 3).unwrap_err(),
            Error::InvalidPair(0, 3)
        );
        assert!(ScriptedSchedule::for_population(vec![(1, 1)], 3).is_err());
        let mut s = ScriptedSchedule::new(vec![(0, 5)]);
        assert_eq!(s.next_pair(3), Err(Error::InvalidPair(0, 5)));
    }
}
