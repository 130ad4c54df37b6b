//! Cross-replication statistics aligned on the useful-interaction index.

use serde::Serialize;

use crate::engine::Trajectory;

/// Summary statistics of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Samples outside the Tukey fences `[q1 - 1.5 IQR, q3 + 1.5 IQR]`.
    pub outliers: usize,
}

impl Summary {
    /// Quartiles use linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(Self {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            q1,
            q3,
            outliers: values.iter().filter(|&&v| v < lo || v > hi).count(),
        })
    }
}

/// `q`-quantile of an ascending slice, interpolating between neighbours.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Statistics at one useful-interaction index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRow {
    pub k: u64,
    pub total_energy: Summary,
    pub tvd: Summary,
    pub cumulative_loss: Summary,
    pub draws: Summary,
}

/// Per-index statistics across replications. Row `k = 0` is the initial
/// state. Runs that were truncated contribute only to the indices they
/// reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSeries {
    pub rows: Vec<AggregateRow>,
}

impl AggregateSeries {
    pub fn from_trajectories(runs: &[Trajectory]) -> Self {
        let longest = runs.iter().map(|t| t.rows.len()).max().unwrap_or(0);
        if runs.is_empty() {
            return Self { rows: Vec::new() };
        }
        let rows = (0..=longest)
            .map(|k| {
                let mut energy = Vec::with_capacity(runs.len());
                let mut tvd = Vec::with_capacity(runs.len());
                let mut loss = Vec::with_capacity(runs.len());
                let mut draws = Vec::with_capacity(runs.len());
                for t in runs {
                    if k == 0 {
                        energy.push(t.initial_total_energy);
                        tvd.push(t.initial_tvd);
                        loss.push(0.0);
                        draws.push(0.0);
                    } else if let Some(r) = t.rows.get(k - 1) {
                        energy.push(r.total_energy);
                        tvd.push(r.tvd);
                        loss.push(r.cumulative_loss);
                        draws.push(r.draws as f64);
                    }
                }
                AggregateRow {
                    k: k as u64,
                    total_energy: Summary::of(&energy).expect("k <= longest run"),
                    tvd: Summary::of(&tvd).expect("k <= longest run"),
                    cumulative_loss: Summary::of(&loss).expect("k <= longest run"),
                    draws: Summary::of(&draws).expect("k <= longest run"),
                }
            })
            .collect();
        Self { rows }
    }

    /// `(mean remaining energy, mean tvd)` by index, starting at `k = 0`.
    pub fn mean_efficiency(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.total_energy.mean, r.tvd.mean)).collect()
    }

    pub fn mean_total_energy(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total_energy.mean).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TrajectoryRow;
    use crate::model::Population;

    fn constant_run(e: f64, tvd: f64, n: usize) -> Trajectory {
        Trajectory {
            initial_total_energy: e,
            initial_tvd: tvd,
            rows: (1..=n as u64)
                .map(|k| TrajectoryRow {
                    k,
                    draws: k,
                    total_energy: e,
                    tvd,
                    cumulative_loss: 0.0,
                })
                .collect(),
            draws: n as u64,
            truncated: false,
            final_population: Population::uniform(&[e / 2.0, e / 2.0], 0.0).unwrap(),
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn tukey_outliers() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.outliers, 1);
        assert!(s.q1 <= s.median && s.median <= s.q3);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn constant_runs_aggregate_to_the_constant() {
        let runs: Vec<_> = (0..5).map(|_| constant_run(42.0, 0.125, 10)).collect();
        let agg = AggregateSeries::from_trajectories(&runs);
        assert_eq!(agg.rows.len(), 11);
        for r in &agg.rows {
            assert_eq!(r.total_energy.mean, 42.0);
            assert_eq!(r.tvd.mean, 0.125);
            assert_eq!((r.tvd.q1, r.tvd.median, r.tvd.q3), (0.125, 0.125, 0.125));
            assert_eq!(r.tvd.outliers, 0);
        }
    }

    #[test]
    fn single_replication_is_the_trajectory() {
        let mut run = constant_run(10.0, 0.5, 3);
        run.rows[1].tvd = 0.25;
        let agg = AggregateSeries::from_trajectories(std::slice::from_ref(&run));
        assert_eq!(agg.rows[2].tvd.mean, 0.25);
        assert_eq!(agg.rows[2].tvd.median, 0.25);
        assert_eq!(agg.rows[0].tvd.mean, 0.5);
    }

    #[test]
    fn ragged_runs() {
        let runs = vec![constant_run(1.0, 0.1, 2), constant_run(3.0, 0.3, 4)];
        let agg = AggregateSeries::from_trajectories(&runs);
        assert_eq!(agg.rows.len(), 5);
        assert_eq!(agg.rows[2].tvd.n, 2);
        assert_eq!(agg.rows[3].tvd.n, 1);
        assert_eq!(agg.rows[3].total_energy.mean, 3.0);
        assert!(AggregateSeries::from_trajectories(&[]).rows.is_empty());
    }
}
