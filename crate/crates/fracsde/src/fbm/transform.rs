//! Discrete Volterra transform W = K dB and its inverse operator chain.

use crate::error::{Error, Result};
use crate::fbm::kernel::{operator_chain_constant, KernelTable};
use crate::fbm::{FbmPath, HurstParameter, TimeGrid};
use statrs::function::gamma::gamma;

/// Lower-triangular kernel matrix K[i][j] = K_H(t_i, m_j) evaluated at cell
/// midpoints m_j, with rows rescaled so the discrete integral reproduces
/// Var(W_{t_i}) = t_i^{2H} exactly.
pub struct VolterraKernelMatrix {
    pub h: HurstParameter,
    n: usize,
    dt: f64,
    /// packed rows: row i has i entries, offset i(i-1)/2
    entries: Vec<f64>,
}

impl VolterraKernelMatrix {
    pub fn build(table: &KernelTable, grid: &TimeGrid) -> Self {
        let n = grid.n_steps();
        let dt = grid.dt();
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        let mut row = Vec::with_capacity(n);
        for i in 1..=n {
            let ti = i as f64 * dt;
            row.clear();
            let mut sq = 0.0;
            for j in 0..i {
                let mj = (j as f64 + 0.5) * dt;
                let k = table.kernel(ti, mj);
                sq += k * k;
                row.push(k);
            }
            let scale = ti.powf(table.hurst()) / (sq * dt).sqrt();
            entries.extend(row.iter().map(|k| k * scale));
        }
        VolterraKernelMatrix {
            h: HurstParameter::new(table.hurst()).unwrap(),
            n,
            dt,
            entries,
        }
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n
    }

    /// K[i][j] for 1 <= i <= n, 0 <= j < i.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * (i - 1) / 2 + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let off = i * (i - 1) / 2;
        &self.entries[off..off + i]
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Discrete Volterra sum W_i = sum_{j<i} K[i][j] (B_{j+1} - B_j), applied
/// per component. `h_target = 1/2` returns the input unchanged.
pub fn volterra_forward(
    table: &KernelTable,
    b_path: &FbmPath,
    h_target: HurstParameter,
) -> Result<FbmPath> {
    if !b_path.h.is_brownian() {
        return Err(Error::domain("volterra_forward expects a Brownian input path"));
    }
    if h_target.is_brownian() {
        let mut out = b_path.clone();
        out.h = h_target;
        return Ok(out);
    }
    if (table.hurst() - h_target.value()).abs() > 1e-12 {
        return Err(Error::domain("kernel table does not match target Hurst parameter"));
    }
    let grid = b_path.grid;
    let n = grid.n_steps();
    let d = b_path.dim();
    let dt = grid.dt();
    let mut db = vec![0.0f64; n * d];
    for i in 0..n {
        for c in 0..d {
            db[i * d + c] = b_path.value(i + 1, c) - b_path.value(i, c);
        }
    }
    let mut values = vec![0.0f64; (n + 1) * d];
    let mut row = vec![0.0f64; n];
    for i in 1..=n {
        let ti = grid.point(i);
        let mut sq = 0.0;
        for (j, r) in row.iter_mut().enumerate().take(i) {
            let mj = (grid.point(j) + grid.point(j + 1)) * 0.5;
            let k = table.kernel(ti, mj);
            sq += k * k;
            *r = k;
        }
        let scale = ti.powf(table.hurst()) / (sq * dt).sqrt();
        for c in 0..d {
            let mut acc = 0.0;
            for j in 0..i {
                acc += row[j] * db[j * d + c];
            }
            values[i * d + c] = acc * scale;
        }
    }
    FbmPath::from_values(grid, h_target, b_path.seed, d, values)
}

/// Settings for the inverse transform.
#[derive(Debug, Clone, Copy)]
pub struct InverseSettings {
    /// Refinement factor of the internal grid used for the centered-difference
    /// discretization of I^alpha with alpha in (-1, 0].
    pub refine: usize,
}

impl Default for InverseSettings {
    fn default() -> Self {
        InverseSettings { refine: 2 }
    }
}

/// t^alpha f(t) - alpha int_0^t s^{alpha-1} f(s) ds for piecewise-linear f
/// with f(0) = 0; the cell integrals are closed forms, exact for the
/// interpolant, so the s -> 0 singularity needs no special casing.
fn pi_tilde(alpha: f64, f: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = f.len() - 1;
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (i as f64 * dt, (i + 1) as f64 * dt);
        let (fa, fb) = (f[i], f[i + 1]);
        let cell = if i == 0 {
            // f(s) = fb s / b: exponent alpha + 1 > 0 keeps this finite
            fb / b * b.powf(alpha + 1.0) / (alpha + 1.0)
        } else {
            let slope = (fb - fa) / dt;
            let c0 = fa - slope * a;
            c0 * (b.powf(alpha) - a.powf(alpha)) / alpha
                + slope * (b.powf(alpha + 1.0) - a.powf(alpha + 1.0)) / (alpha + 1.0)
        };
        acc += cell;
        if !acc.is_finite() {
            return Err(Error::numerical(
                "singular quadrature failure near t=0 in the multiplication operator",
            ));
        }
        out[i + 1] = b.powf(alpha) * f[i + 1] - alpha * acc;
    }
    Ok(out)
}

/// Riemann-Liouville I^alpha for alpha > 0, piecewise-linear f, f(0) = 0.
fn frac_integral_pos(alpha: f64, f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let mut pow_a = vec![0.0; n + 1];
    let mut pow_a1 = vec![0.0; n + 1];
    for k in 0..=n {
        let u = k as f64 * dt;
        pow_a[k] = u.powf(alpha);
        pow_a1[k] = u.powf(alpha + 1.0);
    }
    let inv_gamma = 1.0 / gamma(alpha);
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        let ti = i as f64 * dt;
        let mut s = 0.0;
        for j in 0..i {
            let (fa, fb) = (f[j], f[j + 1]);
            let slope = (fb - fa) / dt;
            let a0 = fa + slope * (ti - j as f64 * dt);
            let (k1, k2) = (i - j, i - j - 1);
            s += a0 * (pow_a[k1] - pow_a[k2]) / alpha
                - slope * (pow_a1[k1] - pow_a1[k2]) / (alpha + 1.0);
        }
        out[i] = s * inv_gamma;
    }
    out
}

/// I^alpha for alpha in (-1, 0]: d/dt I^{alpha+1}, by centered differences of
/// the (alpha+1)-integral computed on a refined grid.
fn frac_integral(alpha: f64, f: &[f64], dt: f64, refine: usize) -> Vec<f64> {
    if alpha > 0.0 {
        return frac_integral_pos(alpha, f, dt);
    }
    let r = refine.max(2);
    let n = f.len() - 1;
    let fine_dt = dt / r as f64;
    let mut fine = vec![0.0; n * r + 1];
    for i in 0..n {
        for k in 0..r {
            let fr = k as f64 / r as f64;
            fine[i * r + k] = f[i] * (1.0 - fr) + f[i + 1] * fr;
        }
    }
    fine[n * r] = f[n];
    let g = frac_integral_pos(alpha + 1.0, &fine, fine_dt);
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        out[i] = (g[i * r + 1] - g[i * r - 1]) / (2.0 * fine_dt);
    }
    out[n] = (g[n * r] - g[n * r - 1]) / fine_dt;
    out
}

/// Recover the driving Brownian motion from an fBM path by the composed
/// operator chain Pi^{H-1/2} I^{1/2-H} Pi^{1/2-H}, rescaled to match the
/// unit-variance kernel normalization. H = 1/2 is the identity.
pub fn inverse_transform(w_path: &FbmPath, settings: InverseSettings) -> Result<FbmPath> {
    let h = w_path.h.value();
    if w_path.h.is_brownian() {
        return Ok(w_path.clone());
    }
    let grid = w_path.grid;
    let n = grid.n_steps();
    let d = w_path.dim();
    let dt = grid.dt();
    let scale = operator_chain_constant(w_path.h)
        / crate::fbm::kernel::unit_variance_constant(w_path.h);
    let mut values = vec![0.0f64; (n + 1) * d];
    for c in 0..d {
        let f: Vec<f64> = w_path.component(c);
        let g1 = pi_tilde(0.5 - h, &f, dt)?;
        let g2 = frac_integral(0.5 - h, &g1, dt, settings.refine);
        let g3 = pi_tilde(h - 0.5, &g2, dt)?;
        for i in 0..=n {
            let v = g3[i] * scale;
            if !v.is_finite() {
                return Err(Error::numerical("inverse transform produced non-finite output"));
            }
            values[i * d + c] = v;
        }
    }
    FbmPath::from_values(grid, HurstParameter::new(0.5).unwrap(), w_path.seed, d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{fbm_covariance, sample_fbm};
    use approx::assert_abs_diff_eq;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn identity_for_brownian_target() {
        let grid = TimeGrid::unit(32).unwrap();
        let b = sample_fbm(h(0.5), grid, 1, 1, 1).unwrap().pop().unwrap();
        let table = KernelTable::new(h(0.5));
        let w = volterra_forward(&table, &b, h(0.5)).unwrap();
        assert_eq!(w.values(), b.values());
        let back = inverse_transform(&b, InverseSettings::default()).unwrap();
        assert_eq!(back.values(), b.values());
    }

    #[test]
    fn zero_path_maps_to_zero_and_sum_is_linear() {
        let grid = TimeGrid::unit(64).unwrap();
        let table = KernelTable::new(h(0.3));
        let zero = FbmPath::from_values(grid, h(0.5), 0, 1, vec![0.0; 65]).unwrap();
        let w = volterra_forward(&table, &zero, h(0.3)).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));

        // linearity: Psi(a B1 + b B2) = a Psi(B1) + b Psi(B2) exactly
        let b1 = sample_fbm(h(0.5), grid, 1, 1, 2).unwrap().pop().unwrap();
        let b2 = sample_fbm(h(0.5), grid, 1, 1, 3).unwrap().pop().unwrap();
        let (ca, cb) = (1.7, -0.4);
        let mixed: Vec<f64> = b1
            .values()
            .iter()
            .zip(b2.values())
            .map(|(&x, &y)| ca * x + cb * y)
            .collect();
        let bmix = FbmPath::from_values(grid, h(0.5), 0, 1, mixed).unwrap();
        let w1 = volterra_forward(&table, &b1, h(0.3)).unwrap();
        let w2 = volterra_forward(&table, &b2, h(0.3)).unwrap();
        let wm = volterra_forward(&table, &bmix, h(0.3)).unwrap();
        for i in 0..=64 {
            assert_abs_diff_eq!(
                wm.value(i, 0),
                ca * w1.value(i, 0) + cb * w2.value(i, 0),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn forward_covariance_matches_analytic() {
        // Monte Carlo vs analytic covariance, 4 sigma gate
        let hq = h(0.25);
        let table = KernelTable::new(hq);
        let grid = TimeGrid::unit(256).unwrap();
        let n_paths = 4096;
        let paths = sample_fbm(h(0.5), grid, n_paths, 1, 9).unwrap();
        let ws: Vec<FbmPath> = paths
            .iter()
            .map(|b| volterra_forward(&table, b, hq).unwrap())
            .collect();
        for &(i, j) in &[(64usize, 64usize), (256, 256), (64, 192), (128, 256)] {
            let emp: f64 =
                ws.iter().map(|w| w.value(i, 0) * w.value(j, 0)).sum::<f64>() / n_paths as f64;
            let ana = fbm_covariance(hq, grid.point(i), grid.point(j)).unwrap();
            let vi = grid.point(i).powf(0.5);
            let vj = grid.point(j).powf(0.5);
            let se = (vi * vj * (1.0 + (ana / (vi * vj)).powi(2)) / n_paths as f64).sqrt();
            assert!(
                (emp - ana).abs() < 4.0 * se,
                "cov({i},{j}): emp {emp} vs {ana} (4se {})",
                4.0 * se
            );
        }
    }

    #[test]
    fn matrix_rows_match_forward_sum() {
        let hq = h(0.3);
        let table = KernelTable::new(hq);
        let grid = TimeGrid::unit(32).unwrap();
        let km = VolterraKernelMatrix::build(&table, &grid);
        let b = sample_fbm(h(0.5), grid, 1, 1, 4).unwrap().pop().unwrap();
        let w = volterra_forward(&table, &b, hq).unwrap();
        for i in [1usize, 7, 32] {
            let mut acc = 0.0;
            for j in 0..i {
                acc += km.entry(i, j) * (b.value(j + 1, 0) - b.value(j, 0));
            }
            assert_abs_diff_eq!(acc, w.value(i, 0), epsilon = 1e-12);
        }
    }

    #[test]
    fn roundtrip_recovers_known_brownian_driver() {
        // forward-then-inverse at 2^10 for speed; acceptance runs 2^12
        for hv in [0.3, 0.7] {
            let hq = h(hv);
            let table = KernelTable::new(hq);
            let grid = TimeGrid::unit(1024).unwrap();
            let b = sample_fbm(h(0.5), grid, 1, 1, 6).unwrap().pop().unwrap();
            let w = volterra_forward(&table, &b, hq).unwrap();
            let back = inverse_transform(&w, InverseSettings::default()).unwrap();
            let err: f64 = (0..=1024)
                .map(|i| (back.value(i, 0) - b.value(i, 0)).abs())
                .fold(0.0, f64::max);
            let rel = err / b.sup_norm();
            assert!(rel < 0.08, "h={hv}: forward-inverse rel err {rel}");
        }
    }
}
