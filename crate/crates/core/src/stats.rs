//! Order statistics, distribution distances, and log-log slope fits used by
//! tests and the experiment harness.

use serde::Serialize;

pub fn mean_u64(values: &[u64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile_u64(sorted: &[u64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    if sorted.len() == 1 {
        return sorted[0] as f64;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

pub fn median_u64(values: &[u64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    quantile_u64(&sorted, 0.5)
}

/// Kolmogorov-Smirnov distance between an empirical sample and the geometric
/// distribution on support 1, 2, ... with success probability `p`:
/// `F(t) = 1 - (1-p)^t`.
pub fn ks_distance_geometric(samples: &[u64], p: f64) -> f64 {
    assert!(!samples.is_empty());
    assert!(p > 0.0 && p < 1.0);
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0usize;
    while i < sorted.len() {
        let v = sorted[i];
        let first = i;
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
        // Discrete support: compare the model CDF at v against the empirical
        // step after v, and the model CDF at v-1 against the step before v.
        let model_at = 1.0 - (1.0 - p).powf(v as f64);
        let model_before = 1.0 - (1.0 - p).powf(v as f64 - 1.0);
        let emp_left = first as f64 / n;
        let emp_right = i as f64 / n;
        d = d
            .max((model_at - emp_right).abs())
            .max((model_before - emp_left).abs());
    }
    d
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub residual_max: f64,
    pub residual_rms: f64,
}

/// Least-squares fit of `ln y` against `ln x`. Requires at least two points
/// with positive coordinates.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<SlopeFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mut residual_max: f64 = 0.0;
    let mut sq_sum = 0.0;
    for (lx, ly) in &logs {
        let r = ly - (intercept + slope * lx);
        residual_max = residual_max.max(r.abs());
        sq_sum += r * r;
    }
    Some(SlopeFit {
        slope,
        intercept,
        residual_max,
        residual_rms: (sq_sum / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let sorted = [1u64, 2, 3, 4];
        assert_eq!(quantile_u64(&sorted, 0.0), 1.0);
        assert_eq!(quantile_u64(&sorted, 1.0), 4.0);
        assert_eq!(quantile_u64(&sorted, 0.5), 2.5);
        assert_eq!(median_u64(&[5, 1, 9]), 5.0);
        assert_eq!(mean_u64(&[2, 4]), 3.0);
    }

    #[test]
    fn ks_detects_fit_and_misfit() {
        // Exact geometric CDF sample via inverse transform on a fine grid.
        let p = 0.25f64;
        let n = 20_000;
        let samples: Vec<u64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                ((1.0 - u).ln() / (1.0 - p).ln()).ceil() as u64
            })
            .map(|v| v.max(1))
            .collect();
        assert!(ks_distance_geometric(&samples, p) < 0.01);
        assert!(ks_distance_geometric(&samples, 0.5) > 0.2);
    }

    #[test]
    fn loglog_fit_recovers_exponents() {
        let quad: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&x| (x, 3.0 * x * x))
            .collect();
        let fit = fit_loglog(&quad).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!(fit.residual_max < 1e-9);
        assert!(fit_loglog(&quad[..1]).is_none());
        assert!(fit_loglog(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }
}
