use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-interpolation quantile (`q` in `[0, 1]`) of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

pub(crate) fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Median and central 80% band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            median: quantile_sorted(&s, 0.5),
            lo: quantile_sorted(&s, 0.1),
            hi: quantile_sorted(&s, 0.9),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log–log fit.
    pub residual: f64,
    /// Sizes whose medians were not positive and were left out.
    pub dropped: Vec<usize>,
}

/// Ordinary least squares of `log median` on `log n`.
///
/// Nonpositive or non-finite medians are dropped and listed; fewer than four
/// remaining points is an error.
pub fn fit_rate(sizes: &[usize], medians: &[f64]) -> Result<RateFit> {
    if sizes.len() != medians.len() {
        return Err(Error::Fit(format!("{} sizes but {} medians", sizes.len(), medians.len())));
    }
    let mut dropped = Vec::new();
    let mut pts = Vec::new();
    for (&n, &m) in sizes.iter().zip(medians) {
        if m > 0.0 && m.is_finite() && n > 0 {
            pts.push(((n as f64).ln(), m.ln()));
        } else {
            dropped.push(n);
        }
    }
    if pts.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 positive medians, have {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all sizes are equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / k).sqrt(),
        dropped,
    })
}

/// Per-size statistics of a transfer or sampling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Distance to the reference, per size.
    pub distance: Vec<Band>,
    /// Magnitude of the output itself, per size.
    pub value: Vec<Band>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    /// Median output magnitude nondecreasing in `n` and at least 10x larger at
    /// the largest size than at the smallest.
    pub diverged: bool,
    /// Every distance at most `1e-9`.
    pub constant: bool,
    pub reference: Option<Vec<f64>>,
    pub reference_error: Option<f64>,
}

pub const CONSTANT_TOL: f64 = 1e-9;

impl RateReport {
    /// Builds the report from per-size samples (`distances[s][trial]`).
    pub fn from_samples(sizes: &[usize], distances: &[Vec<f64>], values: &[Vec<f64>]) -> Self {
        let distance: Vec<Band> = distances.iter().map(|d| Band::of(d)).collect();
        let value: Vec<Band> = values.iter().map(|v| Band::of(v)).collect();
        let medians: Vec<f64> = distance.iter().map(|b| b.median).collect();
        let (fit, fit_error) = match fit_rate(sizes, &medians) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let vm: Vec<f64> = value.iter().map(|b| b.median.abs()).collect();
        let diverged = vm.len() >= 2 && vm.windows(2).all(|w| w[1] >= w[0]) && vm[vm.len() - 1] >= 10.0 * vm[0];
        let constant = distances.iter().flatten().all(|d| *d <= CONSTANT_TOL);
        Self {
            sizes: sizes.to_vec(),
            trials: distances.first().map_or(0, |d| d.len()),
            distance,
            value,
            fit,
            fit_error,
            diverged,
            constant,
            reference: None,
            reference_error: None,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn medians(&self) -> Vec<f64> {
        self.distance.iter().map(|b| b.median).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngStream;

    #[test]
    fn exact_power_law() {
        let sizes: Vec<usize> = (4..=12).map(|k| 1 << k).collect();
        let med: Vec<f64> = sizes.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        let f = fit_rate(&sizes, &med).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0_f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn constant_medians_have_zero_slope() {
        let sizes = [10, 20, 40, 80, 160];
        let f = fit_rate(&sizes, &[0.7; 5]).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_inverse_law() {
        let mut rng = RngStream::new(21);
        let sizes: Vec<usize> = (3..=12).map(|k| 1 << k).collect();
        let med: Vec<f64> = sizes
            .iter()
            .map(|&n| (1.0 + 0.01 * rng.gaussian()) / n as f64)
            .collect();
        let f = fit_rate(&sizes, &med).unwrap();
        assert!((f.slope + 1.0).abs() < 0.05);
    }

    #[test]
    fn nonpositive_points_are_dropped() {
        let sizes = [1, 2, 4, 8, 16, 32];
        let med = [1.0, 0.0, 0.25, -1.0, 1.0 / 16.0, 1.0 / 32.0];
        let f = fit_rate(&sizes, &med).unwrap();
        assert_eq!(f.dropped, vec![2, 8]);
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(matches!(fit_rate(&sizes[..4], &med[..4]), Err(Error::Fit(_))));
    }

    #[test]
    fn band_quantiles() {
        let v: Vec<f64> = (0..=10).map(|i| i as f64).rev().collect();
        let b = Band::of(&v);
        assert_eq!((b.median, b.lo, b.hi), (5.0, 1.0, 9.0));
    }
}
