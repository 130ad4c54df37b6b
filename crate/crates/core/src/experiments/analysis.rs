//! Derived series used to compare protocols: efficiency curves, linear
//! fits, loss profiles, and interpolation at matched energy levels.

use crate::engine::Trajectory;

/// `(remaining total energy, tvd)` after each useful interaction, in order.
pub fn efficiency_series(trajectory: &Trajectory) -> Vec<(f64, f64)> {
    trajectory.rows.iter().map(|r| (r.total_energy, r.tvd)).collect()
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
/// A constant `y` is fitted perfectly and returns 1.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Share of a run's total loss incurred during its first `fraction` of
/// useful interactions. `None` when the run lost nothing.
pub fn early_loss_share(trajectory: &Trajectory, fraction: f64) -> Option<f64> {
    let total = trajectory.total_loss();
    if !(total > 0.0) {
        return None;
    }
    let n = trajectory.rows.len();
    let cut = ((fraction * n as f64).round() as usize).min(n);
    let early = if cut == 0 {
        0.0
    } else {
        trajectory.rows[cut - 1].cumulative_loss
    };
    Some(early / total)
}

/// Linearly interpolates `tvd` at remaining-energy `level` along a curve
/// whose energy is non-increasing. `None` when `level` is outside the curve.
pub fn tvd_at_energy(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    let first = curve.first()?;
    if level > first.0 {
        return None;
    }
    for w in curve.windows(2) {
        let ((e0, t0), (e1, t1)) = (w[0], w[1]);
        if level <= e0 && level >= e1 {
            if e0 == e1 {
                return Some(t1);
            }
            return Some(t0 + (t1 - t0) * (e0 - level) / (e0 - e1));
        }
    }
    (level == first.0).then_some(first.1)
}

/// Lowest remaining energy reached by the curve.
pub fn final_energy(curve: &[(f64, f64)]) -> Option<f64> {
    curve.last().map(|p| p.0)
}
