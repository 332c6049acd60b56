//! Path roughness estimation from dyadic increments.

use crate::error::{Error, Result};
use crate::fbm::FbmPath;
use crate::scaling::{fit_scaling_exponent, median, ExponentFit};

/// Slope of log median |increment| against log lag. For fBM the estimate
/// approaches H; sampled paths must not look smoother than that.
pub fn holder_exponent_estimate(path: &FbmPath, lags: &[usize]) -> Result<ExponentFit> {
    if lags.len() < 4 {
        return Err(Error::domain("need at least 4 dyadic lags"));
    }
    let n = path.grid.n_points();
    let d = path.dim();
    let dt = path.grid.dt();
    let mut points = Vec::with_capacity(lags.len());
    for &lag in lags {
        if lag == 0 || lag >= n {
            return Err(Error::domain(format!("lag {lag} outside the grid")));
        }
        let mut incs = Vec::with_capacity(n - lag);
        for i in 0..n - lag {
            let mut s = 0.0;
            for c in 0..d {
                let diff = path.value(i + lag, c) - path.value(i, c);
                s += diff * diff;
            }
            incs.push(s.sqrt());
        }
        let m = median(&incs);
        if m <= 0.0 {
            return Err(Error::domain("degenerate (constant) path"));
        }
        points.push((lag as f64 * dt, m));
    }
    fit_scaling_exponent(&points)
}
