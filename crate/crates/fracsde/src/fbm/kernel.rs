//! The Volterra kernel K_H(t,s), its normalization, and derived quantities.
//!
//! The kernel is homogeneous, K_H(lt, ls) = l^{H-1/2} K_H(t, s), so
//! everything reduces to the profile kappa(x) = K_H(1, x) on (0,1).
//! `kernel_value` evaluates kappa by direct quadrature (reference path);
//! `KernelTable` tabulates the smooth factor of kappa once per H for bulk
//! use, together with the cumulative square integral that gives
//! sigma^2(u,t) = int_u^t K_H(t,r)^2 dr.
//!
//! The normalization constant is fixed by Var(W_t) = t^{2H}
//! (int_0^1 kappa^2 = 1), computed by quadrature once per H.

use crate::error::{Error, Result};
use crate::fbm::HurstParameter;
use statrs::function::gamma::gamma;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of n-point Gauss-Legendre on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (mut p0, mut p1) = (1.0f64, 0.0f64);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p2) / (k as f64 + 1.0);
            }
            let dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, 0.0f64);
        for k in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p2) / (k as f64 + 1.0);
        }
        let dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(32))
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(8))
}

/// Gauss-Legendre on geometrically graded panels accumulating at 0; resolves
/// boundary layers of any scale in integrands on (0, up].
fn quad_graded<F: Fn(f64) -> f64>(f: F, up: f64) -> f64 {
    if up <= 0.0 {
        return 0.0;
    }
    let (xs, ws) = gl8();
    let mut total = 0.0;
    let mut hi = up;
    for _ in 0..60 {
        let lo = hi * 0.5;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut s = 0.0;
        for (x, w) in xs.iter().zip(ws) {
            s += w * f(mid + half * x);
        }
        total += s * half;
        hi = lo;
    }
    total
}

/// Composite Gauss-Legendre over [a, b] in `panels` equal panels.
fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (xs, ws) = gl32();
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * w;
        let mid = lo + 0.5 * w;
        let half = 0.5 * w;
        let mut s = 0.0;
        for (x, wt) in xs.iter().zip(ws) {
            s += wt * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// Unnormalized K_H(1, x) with the complement 1-x passed explicitly, so
/// callers near x = 1 avoid cancellation. The inner integrals have power
/// singularities at r = x; the substitution u = (r-x)^{H+-1/2} flattens
/// them exactly.
fn kappa_unnorm_c(h: f64, x: f64, omx: f64) -> f64 {
    debug_assert!(x > 0.0 && omx > 0.0);
    if h == 0.5 {
        return 1.0;
    }
    if h > 0.5 {
        let q = h - 0.5;
        let up = omx.powf(q);
        let j = quad_graded(|u| (x + u.powf(1.0 / q)).powf(h - 0.5), up) / q;
        x.powf(0.5 - h) * j
    } else {
        let q = h + 0.5;
        let up = omx.powf(q);
        let j = quad_graded(|u| (x + u.powf(1.0 / q)).powf(h - 1.5), up) / q;
        x.powf(0.5 - h) * (omx.powf(h - 0.5) + (0.5 - h) * j)
    }
}

fn kappa_unnorm(h: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0 && x < 1.0);
    kappa_unnorm_c(h, x, 1.0 - x)
}

/// int_0^1 kappa_unnorm^2 dx, with endpoint substitutions that remove the
/// x^{-2|H-1/2|} and (1-x)^{2H-1} singularities.
fn kappa_sq_integral(h: f64) -> f64 {
    if h == 0.5 {
        return 1.0;
    }
    let a = (h - 0.5).abs();
    let p = 1.0 / (1.0 - 2.0 * a);
    let i1 = quad(
        |v| {
            let x = v.powf(p);
            kappa_unnorm(h, x).powi(2) * p * v.powf(p - 1.0)
        },
        0.0,
        0.5f64.powf(1.0 / p),
        16,
    );
    let ph = if h < 0.5 { 1.0 / (2.0 * h) } else { 1.0 };
    let i2 = quad(
        |w| {
            let omx = w.powf(ph);
            let x = 1.0 - omx;
            kappa_unnorm_c(h, x, omx).powi(2) * ph * w.powf(ph - 1.0)
        },
        0.0,
        0.5f64.powf(1.0 / ph),
        16,
    );
    i1 + i2
}

fn cached_unit_const(h: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = h.to_bits();
    if let Some(&c) = cache.lock().unwrap().get(&key) {
        return c;
    }
    let c = 1.0 / kappa_sq_integral(h).sqrt();
    cache.lock().unwrap().insert(key, c);
    c
}

/// Normalization constant C(H) with Var(W_t) = t^{2H}.
pub fn unit_variance_constant(h: HurstParameter) -> f64 {
    cached_unit_const(h.value())
}

/// The kernel constant for which B = Pi^{H-1/2} I^{1/2-H} Pi^{1/2-H} W^H
/// holds with Riemann-Liouville fractional integrals: 1/Gamma(H+1/2) below
/// the Brownian point and 1/Gamma(H-1/2) above it.
pub fn operator_chain_constant(h: HurstParameter) -> f64 {
    let h = h.value();
    if h == 0.5 {
        1.0
    } else if h < 0.5 {
        1.0 / gamma(h + 0.5)
    } else {
        1.0 / gamma(h - 0.5)
    }
}

/// K_H(t,s) by direct quadrature (unit-variance normalization).
pub fn kernel_value(h: HurstParameter, t: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return Err(Error::domain(format!("kernel needs 0 < s < t, got s={s}, t={t}")));
    }
    let hv = h.value();
    if hv == 0.5 {
        return Ok(1.0);
    }
    let c = cached_unit_const(hv);
    Ok(c * t.powf(hv - 0.5) * kappa_unnorm(hv, s / t))
}

/// Tabulated kernel profile and cumulative square integral for one H.
pub struct KernelTable {
    h: f64,
    a: f64,
    c_unit: f64,
    /// Smooth factor rho on the Chebyshev-mapped grid x = (1-cos(pi u))/2:
    /// kappa(x) = C x^{-a} (1-x)^{h-1/2} rho(x).
    rho: Vec<f64>,
    /// Q(x_j) = int_0^{x_j} kappa^2 on a uniform x grid, normalized so
    /// Q(1) = 1.
    q: Vec<f64>,
}

const RHO_POINTS: usize = 2048;
const Q_CELLS: usize = 4096;

impl KernelTable {
    pub fn new(h: HurstParameter) -> Self {
        let hv = h.value();
        let a = (hv - 0.5).abs();
        let c_unit = cached_unit_const(hv);
        let n = RHO_POINTS;
        let mut rho = vec![1.0; n + 1];
        if hv != 0.5 {
            for (j, r) in rho.iter_mut().enumerate() {
                let u = j as f64 / n as f64;
                // x = sin^2(pi u / 2), complement computed without cancellation
                let half = 0.5 * std::f64::consts::PI * u;
                let x = half.sin().powi(2).max(1e-300);
                let omx = half.cos().powi(2).max(1e-300);
                *r = kappa_unnorm_c(hv, x, omx) * x.powf(a) * omx.powf(0.5 - hv);
            }
            rho[0] = 2.0 * rho[1] - rho[2];
            rho[n] = 2.0 * rho[n - 1] - rho[n - 2];
        }

        // cumulative square integral on a uniform x grid; first and last
        // cells integrated with their exact local power law
        let m = Q_CELLS;
        let mut q = vec![0.0; m + 1];
        let mut qx = vec![0.0; m + 1];
        for j in 0..=m {
            qx[j] = j as f64 / m as f64;
        }
        let table_kappa = |this: &Self, x: f64| -> f64 {
            let u = (1.0 - 2.0 * x).clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
            let pos = u * RHO_POINTS as f64;
            let j = (pos.floor() as usize).min(RHO_POINTS - 1);
            let fr = pos - j as f64;
            let r = this.rho[j] * (1.0 - fr) + this.rho[j + 1] * fr;
            this.c_unit * x.powf(-this.a) * (1.0 - x).powf(this.h - 0.5) * r
        };
        let tmp = KernelTable { h: hv, a, c_unit, rho: rho.clone(), q: vec![] };
        for j in 0..m {
            let (x0, x1) = (qx[j], qx[j + 1]);
            let xm = 0.5 * (x0 + x1);
            let k2m = if hv == 0.5 { 1.0 } else { table_kappa(&tmp, xm).powi(2) };
            let cell = if hv == 0.5 {
                x1 - x0
            } else if j == 0 {
                let c2 = k2m * xm.powf(2.0 * a);
                c2 * x1.powf(1.0 - 2.0 * a) / (1.0 - 2.0 * a)
            } else if j == m - 1 && hv < 0.5 {
                let c2 = k2m * (1.0 - xm).powf(1.0 - 2.0 * hv);
                c2 * (x1 - x0).powf(2.0 * hv) / (2.0 * hv)
            } else {
                let (gx, gw) = gl32();
                let mid = xm;
                let half = 0.5 * (x1 - x0);
                let mut s = 0.0;
                for (x, w) in gx.iter().zip(gw).take(8) {
                    s += w * table_kappa(&tmp, mid + half * x).powi(2);
                }
                // 8 of the 32 nodes: re-weight
                let wsum: f64 = gw.iter().take(8).sum();
                s * half * 2.0 / wsum
            };
            q[j + 1] = q[j] + cell;
        }
        let total = q[m];
        for v in q.iter_mut() {
            *v /= total;
        }
        KernelTable { h: hv, a, c_unit, rho, q }
    }

    #[inline]
    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn unit_constant(&self) -> f64 {
        self.c_unit
    }

    /// kappa(x) = K_H(1, x) from the table.
    pub fn kappa(&self, x: f64) -> f64 {
        if self.h == 0.5 {
            return 1.0;
        }
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let u = (1.0 - 2.0 * x).clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
        let pos = u * RHO_POINTS as f64;
        let j = (pos.floor() as usize).min(RHO_POINTS - 1);
        let fr = pos - j as f64;
        let r = self.rho[j] * (1.0 - fr) + self.rho[j + 1] * fr;
        self.c_unit * x.powf(-self.a) * (1.0 - x).powf(self.h - 0.5) * r
    }

    /// K_H(t, s) from the table.
    #[inline]
    pub fn kernel(&self, t: f64, s: f64) -> f64 {
        if s <= 0.0 || s >= t {
            return 0.0;
        }
        t.powf(self.h - 0.5) * self.kappa(s / t)
    }

    /// Q(y) = int_0^y kappa^2 dx, with Q(1) = 1.
    pub fn cumulative_square(&self, y: f64) -> f64 {
        if self.h == 0.5 {
            return y.clamp(0.0, 1.0);
        }
        let y = y.clamp(0.0, 1.0);
        let pos = y * Q_CELLS as f64;
        let j = (pos.floor() as usize).min(Q_CELLS - 1);
        let fr = pos - j as f64;
        self.q[j] * (1.0 - fr) + self.q[j + 1] * fr
    }

    /// sigma^2(u, t) = int_u^t K_H(t,r)^2 dr = t^{2H} (1 - Q(u/t)).
    pub fn sigma2(&self, u: f64, t: f64) -> f64 {
        if t <= u {
            return 0.0;
        }
        t.powf(2.0 * self.h) * (1.0 - self.cumulative_square(u / t))
    }
}

/// Largest c with K_H(t,s) >= c (t-s)^{H-1/2} over the probe set; the lower
/// kernel bound holds exactly when this is strictly positive.
pub fn fitted_kernel_lower_constant(table: &KernelTable, pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|&(t, s)| table.kernel(t, s) / (t - s).powf(table.hurst() - 0.5))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (xs, ws) = gauss_legendre(8);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(6)).sum();
        assert_abs_diff_eq!(s, 2.0 / 7.0, epsilon = 1e-13);
    }

    #[test]
    fn brownian_kernel_is_one() {
        assert_abs_diff_eq!(kernel_value(h(0.5), 1.0, 0.3).unwrap(), 1.0);
        assert!(kernel_value(h(0.5), 1.0, 1.0).is_err());
        assert!(kernel_value(h(0.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn unit_constant_matches_closed_form_below_half() {
        // c_H^2 = 2H Gamma(3/2-H) / (Gamma(H+1/2) Gamma(2-2H)) for the
        // unit-variance Molchan-Golosov normalization, H < 1/2
        for hv in [0.1, 0.25, 0.3, 0.45] {
            let c = unit_variance_constant(h(hv));
            let closed = (2.0 * hv * gamma(1.5 - hv) / (gamma(hv + 0.5) * gamma(2.0 - 2.0 * hv)))
                .sqrt();
            assert!(
                (c / closed - 1.0).abs() < 2e-6,
                "h={hv}: {c} vs {closed}"
            );
        }
    }

    #[test]
    fn kernel_induced_variance_is_power_law() {
        // int_0^t K^2 = t^{2h} : check via the table's Q plus homogeneity
        for hv in [0.25, 0.6, 0.75] {
            let table = KernelTable::new(h(hv));
            for t in [0.3, 1.0] {
                let v = table.sigma2(0.0, t);
                assert_abs_diff_eq!(v, t.powf(2.0 * hv), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn table_matches_direct_quadrature() {
        for hv in [0.25, 0.75] {
            let table = KernelTable::new(h(hv));
            for s in [0.02, 0.1, 0.5, 0.9, 0.98] {
                let direct = kernel_value(h(hv), 1.0, s).unwrap();
                let tab = table.kernel(1.0, s);
                assert!(
                    (tab / direct - 1.0).abs() < 1e-5,
                    "h={hv} s={s}: table {tab} direct {direct}"
                );
            }
        }
    }

    #[test]
    fn kernel_homogeneity() {
        let table = KernelTable::new(h(0.3));
        let k1 = table.kernel(1.0, 0.4);
        let k2 = table.kernel(0.5, 0.2);
        assert_abs_diff_eq!(k2, 0.5f64.powf(0.3 - 0.5) * k1, epsilon = 1e-10 * k1.abs());
    }

    #[test]
    fn lower_bound_constant_is_positive() {
        for hv in [0.25, 0.75] {
            let table = KernelTable::new(h(hv));
            let mut pairs = Vec::new();
            for k in 0..100 {
                let gap = 10f64.powf(-4.0 + 3.69 * k as f64 / 99.0);
                pairs.push((1.0, 1.0 - gap));
                pairs.push((0.5, 0.5 - 0.45 * gap));
            }
            let c = fitted_kernel_lower_constant(&table, &pairs);
            assert!(c > 0.0 && c.is_finite(), "h={hv}: c={c}");
        }
    }

    #[test]
    fn sigma2_lower_bound() {
        // sigma^2(u,t) >= c (t-u)^{2H}
        for hv in [0.25, 0.75] {
            let table = KernelTable::new(h(hv));
            let mut worst = f64::INFINITY;
            for k in 0..100 {
                let gap = 10f64.powf(-4.0 + 4.0 * k as f64 / 99.0) * 0.9;
                let ratio = table.sigma2(1.0 - gap, 1.0) / gap.powf(2.0 * hv);
                worst = worst.min(ratio);
            }
            assert!(worst > 0.0, "h={hv}: {worst}");
        }
    }
}
