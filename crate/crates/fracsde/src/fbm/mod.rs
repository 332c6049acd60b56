//! Exact sampling of fractional Brownian motion and the Volterra transforms
//! between fBM and Brownian motion.

mod circulant;
mod holder;
pub mod kernel;
mod transform;

pub use circulant::CirculantSampler;
pub use holder::holder_exponent_estimate;
pub use kernel::{kernel_value, KernelTable};
pub use transform::{inverse_transform, volterra_forward, InverseSettings, VolterraKernelMatrix};

use crate::error::{Error, Result};
use crate::rng::{self, label};
use rayon::prelude::*;
use std::io::{BufRead, Write};

/// Hurst parameter, constrained to (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h < 1.0 {
            Ok(HurstParameter(h))
        } else {
            Err(Error::domain(format!("Hurst parameter must be in (0,1), got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

/// Uniform time grid t_i = i * horizon / n_steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::domain("time grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    /// Grid over [0, 1].
    pub fn unit(n_steps: usize) -> Result<Self> {
        TimeGrid::new(1.0, n_steps)
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.horizon / self.n_steps as f64
    }

    /// Grid index of time `t`, rounded.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt()).round() as usize).min(self.n_steps)
    }
}

/// A sampled d-dimensional path on a uniform grid, zero at the origin.
#[derive(Debug, Clone)]
pub struct FbmPath {
    pub grid: TimeGrid,
    pub h: HurstParameter,
    pub seed: u64,
    d: usize,
    /// Row-major, `values[i * d + c]`.
    values: Vec<f64>,
}

impl FbmPath {
    pub fn from_values(
        grid: TimeGrid,
        h: HurstParameter,
        seed: u64,
        d: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != grid.n_points() * d {
            return Err(Error::domain("value buffer does not match grid x dimension"));
        }
        if values[..d].iter().any(|&v| v != 0.0) {
            return Err(Error::domain("fBM path must start at the origin"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("fBM path has non-finite entries"));
        }
        Ok(FbmPath { grid, h, seed, d, values })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.d + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy of one coordinate as a plain series.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.grid.n_points()).map(|i| self.value(i, c)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Write `t, x_1..x_d` rows; the header carries h, seed and the grid.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# h={} seed={} n_steps={} horizon={} d={}",
            self.h.value(),
            self.seed,
            self.grid.n_steps(),
            self.grid.horizon(),
            self.d
        )?;
        write!(w, "t")?;
        for c in 0..self.d {
            write!(w, ",x_{}", c + 1)?;
        }
        writeln!(w)?;
        for i in 0..self.grid.n_points() {
            write!(w, "{}", self.grid.point(i))?;
            for c in 0..self.d {
                write!(w, ",{}", self.value(i, c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut h = None;
        let mut seed = 0u64;
        let mut n_steps = None;
        let mut horizon = 1.0;
        let mut d = 1usize;
        let mut values: Vec<f64> = Vec::new();
        for line in r.lines() {
            let line = line?;
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    let mut it = tok.splitn(2, '=');
                    match (it.next(), it.next()) {
                        (Some("h"), Some(v)) => h = Some(v.parse().map_err(|_| Error::domain("bad h"))?),
                        (Some("seed"), Some(v)) => seed = v.parse().unwrap_or(0),
                        (Some("n_steps"), Some(v)) => {
                            n_steps = Some(v.parse().map_err(|_| Error::domain("bad n_steps"))?)
                        }
                        (Some("horizon"), Some(v)) => {
                            horizon = v.parse().map_err(|_| Error::domain("bad horizon"))?
                        }
                        (Some("d"), Some(v)) => d = v.parse().map_err(|_| Error::domain("bad d"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with('t') || line.trim().is_empty() {
                continue;
            }
            for (k, tok) in line.split(',').enumerate() {
                if k == 0 {
                    continue;
                }
                values.push(tok.parse().map_err(|_| Error::domain("bad value"))?);
            }
        }
        let h = HurstParameter::new(h.ok_or_else(|| Error::domain("missing h header"))?)?;
        let n = n_steps.ok_or_else(|| Error::domain("missing n_steps header"))?;
        FbmPath::from_values(TimeGrid::new(horizon, n)?, h, seed, d, values)
    }
}

/// fBM covariance (1/2)(s^{2H} + t^{2H} - |t-s|^{2H}).
pub fn fbm_covariance(h: HurstParameter, s: f64, t: f64) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::domain("fBM covariance needs nonnegative times"));
    }
    let hh = 2.0 * h.value();
    Ok(0.5 * (s.powf(hh) + t.powf(hh) - (t - s).abs().powf(hh)))
}

/// Exact fBM sampling: circulant embedding of the increments, components
/// independent, derived per-(path, component) substreams.
pub fn sample_fbm(
    h: HurstParameter,
    grid: TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
) -> Result<Vec<FbmPath>> {
    sample_fbm_map(h, grid, n_paths, d, seed, |_, p| p)
}

/// Streaming variant: sample paths in parallel, apply `f` to each, return
/// outputs in path order. Results do not depend on the number of threads.
pub fn sample_fbm_map<T, F>(
    h: HurstParameter,
    grid: TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, FbmPath) -> T + Sync,
{
    if grid.n_steps() < 2 {
        return Err(Error::domain("sampling needs at least 2 steps"));
    }
    if n_paths == 0 {
        return Err(Error::domain("sampling needs at least one path"));
    }
    if d == 0 {
        return Err(Error::domain("dimension must be positive"));
    }
    let sampler = CirculantSampler::new(h, grid.n_steps(), grid.dt())?;
    let n = grid.n_points();
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut values = vec![0.0f64; n * d];
            let mut fgn = vec![0.0f64; grid.n_steps()];
            for c in 0..d {
                let mut rng = rng::substream(seed, label::FBM_PATH, (p * d + c) as u64);
                sampler.sample_increments(&mut rng, &mut fgn)?;
                let mut acc = 0.0;
                for (i, &g) in fgn.iter().enumerate() {
                    acc += g;
                    values[(i + 1) * d + c] = acc;
                }
            }
            let path = FbmPath { grid, h, seed, d, values };
            Ok(f(p, path))
        })
        .collect()
}
