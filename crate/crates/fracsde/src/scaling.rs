//! Log-log scaling regressions with bootstrap confidence intervals.

use crate::error::{Error, Result};
use crate::rng::{self, label};
use rand::Rng;
use serde::Serialize;

/// Result of an ordinary least squares fit on log-log axes.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Half width of the 95% confidence interval for the slope. From the
    /// bootstrap when an ensemble was supplied, otherwise from the OLS
    /// standard error.
    pub ci_half_width: f64,
    pub n_points: usize,
}

fn ols(lx: &[f64], ly: &[f64]) -> (f64, f64, f64, f64) {
    let n = lx.len() as f64;
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(ly).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ly.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot < 1e-300 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    // OLS slope standard error, t ~ 2 for the 95% band
    let dof = (lx.len().max(3) - 2) as f64;
    let se = (ss_res / dof / (sxx - sx * sx / n)).sqrt();
    (slope, intercept, r_squared, 2.0 * se)
}

/// OLS on `log(statistic)` against `log(scale)`.
///
/// Rejects fewer than 4 points and nonpositive entries (logs must exist).
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 4 {
        return Err(Error::domain(format!(
            "scaling fit needs >= 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(s, v)| s <= 0.0 || v <= 0.0 || !s.is_finite() || !v.is_finite()) {
        return Err(Error::domain(
            "scaling fit requires strictly positive finite scales and statistics",
        ));
    }
    let lx: Vec<f64> = points.iter().map(|&(s, _)| s.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r_squared, ci) = ols(&lx, &ly);
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        ci_half_width: ci,
        n_points: points.len(),
    })
}

/// Mean of `values` with `frac` trimmed off each tail.
///
/// Local-time style increments are heavy tailed at feasible ensemble sizes;
/// trimming keeps the fitted slopes stable.
pub fn trimmed_mean(values: &[f64], frac: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (v.len() as f64 * frac).floor() as usize;
    let kept = &v[k..v.len() - k.min(v.len() / 2)];
    kept.iter().sum::<f64>() / kept.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit with per-scale ensembles: the statistic per scale is the `trim`-trimmed
/// mean over the ensemble, and the slope CI comes from 200 bootstrap
/// resamples of paths (resampling whole paths keeps cross-scale dependence).
pub fn fit_scaling_with_ensemble(
    scales: &[f64],
    ensemble: &[Vec<f64>],
    trim: f64,
    seed: u64,
) -> Result<ExponentFit> {
    if scales.len() != ensemble.len() {
        return Err(Error::domain("one ensemble per scale required"));
    }
    let n_paths = ensemble.first().map(|e| e.len()).unwrap_or(0);
    if ensemble.iter().any(|e| e.len() != n_paths) || n_paths == 0 {
        return Err(Error::domain("ensembles must be nonempty and same length"));
    }
    let points: Vec<(f64, f64)> = scales
        .iter()
        .zip(ensemble)
        .map(|(&s, e)| (s, trimmed_mean(e, trim)))
        .collect();
    let mut fit = fit_scaling_exponent(&points)?;

    const RESAMPLES: usize = 200;
    let mut slopes = Vec::with_capacity(RESAMPLES);
    for b in 0..RESAMPLES {
        let mut rng = rng::substream(seed, label::BOOTSTRAP, b as u64);
        let idx: Vec<usize> = (0..n_paths).map(|_| rng.gen_range(0..n_paths)).collect();
        let pts: Vec<(f64, f64)> = scales
            .iter()
            .zip(ensemble)
            .map(|(&s, e)| {
                let sample: Vec<f64> = idx.iter().map(|&i| e[i]).collect();
                (s, trimmed_mean(&sample, trim))
            })
            .collect();
        if pts.iter().all(|&(_, v)| v > 0.0) {
            if let Ok(f) = fit_scaling_exponent(&pts) {
                slopes.push(f.slope);
            }
        }
    }
    if slopes.len() >= RESAMPLES / 2 {
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = slopes[(slopes.len() as f64 * 0.025) as usize];
        let hi = slopes[((slopes.len() as f64 * 0.975) as usize).min(slopes.len() - 1)];
        fit.ci_half_width = 0.5 * (hi - lo);
    }
    Ok(fit)
}
