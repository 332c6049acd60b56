//! Circulant embedding of fractional Gaussian noise, with a dense Cholesky
//! fallback for the (never observed in practice) case of a negative
//! eigenvalue in the embedding.

use crate::error::{Error, Result};
use crate::fbm::HurstParameter;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Sampler for the n stationary increments of fBM on a grid with spacing dt.
pub struct CirculantSampler {
    n: usize,
    /// sqrt of circulant eigenvalues, length 2n, when the embedding is PSD.
    sqrt_eigs: Option<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    /// Lower-triangular Cholesky factor of the fGN covariance (fallback).
    chol: Option<Vec<f64>>,
}

/// fGN autocovariance at lag k for unit-variance increments, scaled by dt^{2h}.
fn fgn_autocov(h: f64, k: usize, dt: f64) -> f64 {
    let k = k as f64;
    let two_h = 2.0 * h;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
        * dt.powf(two_h)
}

const CHOL_FALLBACK_MAX: usize = 4096;

impl CirculantSampler {
    pub fn new(h: HurstParameter, n_steps: usize, dt: f64) -> Result<Self> {
        let h = h.value();
        let n = n_steps;
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);

        let gamma: Vec<f64> = (0..=n).map(|k| fgn_autocov(h, k, dt)).collect();
        let mut c: Vec<Complex<f64>> = Vec::with_capacity(m);
        c.extend(gamma[..n].iter().map(|&g| Complex::new(g, 0.0)));
        c.push(Complex::new(gamma[n], 0.0));
        c.extend(gamma[1..n].iter().rev().map(|&g| Complex::new(g, 0.0)));
        fft.process(&mut c);

        let eigs: Vec<f64> = c.iter().map(|z| z.re).collect();
        let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);

        if min_eig >= -1e-10 * max_eig {
            let sqrt_eigs = eigs.iter().map(|&e| e.max(0.0).sqrt()).collect();
            return Ok(CirculantSampler { n, sqrt_eigs: Some(sqrt_eigs), fft, chol: None });
        }

        // Fallback: dense Cholesky of the exact fGN covariance.
        if n > CHOL_FALLBACK_MAX {
            return Err(Error::numerical(format!(
                "circulant embedding not nonnegative-definite (min eig {min_eig:.3e}) and \
                 Cholesky fallback refused for n={n} > {CHOL_FALLBACK_MAX}"
            )));
        }
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = gamma[i - j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::numerical(
                            "circulant embedding failed and fGN covariance is not positive \
                             definite in the Cholesky fallback",
                        ));
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(CirculantSampler { n, sqrt_eigs: None, fft, chol: Some(l) })
    }

    /// Fill `out` (length n) with one fGN sample.
    pub fn sample_increments<R: Rng>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        assert_eq!(out.len(), self.n);
        if let Some(sq) = &self.sqrt_eigs {
            let n = self.n;
            let m = 2 * n;
            let mut v = vec![Complex::new(0.0, 0.0); m];
            let g0: f64 = rng.sample(StandardNormal);
            v[0] = Complex::new(sq[0] * g0, 0.0);
            for k in 1..n {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let s = sq[k] * std::f64::consts::FRAC_1_SQRT_2;
                v[k] = Complex::new(s * a, s * b);
                v[m - k] = v[k].conj();
            }
            let gn: f64 = rng.sample(StandardNormal);
            v[n] = Complex::new(sq[n] * gn, 0.0);
            self.fft.process(&mut v);
            let scale = 1.0 / (m as f64).sqrt();
            for (o, z) in out.iter_mut().zip(v.iter().take(n)) {
                *o = z.re * scale;
            }
            return Ok(());
        }
        let l = self.chol.as_ref().expect("either eigenvalues or Cholesky");
        let n = self.n;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[i * n + k] * z[k];
            }
            out[i] = s;
        }
        Ok(())
    }

    pub fn used_fallback(&self) -> bool {
        self.chol.is_some()
    }
}
