//! Simulation of dX = b(X) dt + dW^H with mollified drifts,
//! existence-regime classification, drift-variation statistics, and skew
//! fractional Brownian motion.

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, HurstParameter};
use crate::localtime::LocalTimeField;
use crate::mollify::{gaussian_nd, heat_mollify, Atom, DriftSpec, GridFunction, Integrability, SpatialGrid};
use crate::rng::{self, label};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::sync::Arc;

/// Weak-existence classification of (H, d, p) against d/p < 1/H - 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum RegimeVerdict {
    WeakExistence,
    CounterexampleRegime,
    Boundary,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RegimeClassification {
    pub verdict: RegimeVerdict,
    /// (1/H - 1) - d/p; positive in the weak-existence regime.
    pub margin: f64,
}

pub fn classify_regime(h: HurstParameter, d: usize, p: Integrability) -> RegimeClassification {
    let margin = (1.0 / h.value() - 1.0) - p.d_over_p(d);
    let verdict = if margin.abs() < 1e-12 {
        RegimeVerdict::Boundary
    } else if margin > 0.0 {
        RegimeVerdict::WeakExistence
    } else {
        RegimeVerdict::CounterexampleRegime
    };
    RegimeClassification { verdict, margin }
}

/// Pointwise-evaluable drift: either a closure or an interpolated grid
/// function (multilinear, extended by zero outside the grid).
#[derive(Clone)]
pub enum DriftEvaluator {
    Callable(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
    Grid(Arc<GridFunction>),
}

impl DriftEvaluator {
    pub fn zero() -> Self {
        DriftEvaluator::Callable(Arc::new(|_, out| out.iter_mut().for_each(|v| *v = 0.0)))
    }

    pub fn constant(c: Vec<f64>) -> Self {
        DriftEvaluator::Callable(Arc::new(move |_, out| out.copy_from_slice(&c)))
    }

    /// The mollified point mass beta P_t(delta_0), evaluated analytically.
    pub fn mollified_delta(beta: f64, t: f64) -> Self {
        DriftEvaluator::Callable(Arc::new(move |x, out| {
            let g = beta * gaussian_nd(x, t);
            out.iter_mut().for_each(|v| *v = g);
        }))
    }

    /// Evaluate into `out`; returns false when a grid drift was queried
    /// outside its grid (extended by zero).
    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self {
            DriftEvaluator::Callable(f) => {
                f(x, out);
                true
            }
            DriftEvaluator::Grid(g) => {
                g.interpolate(x, out);
                x.iter().all(|&xi| xi.abs() <= g.grid.extent() - 0.5 * g.grid.cell_width())
            }
        }
    }
}

/// A solution path X = x0 + psi + W with the drift part stored separately,
/// so psi is exactly zero for zero drift and exactly monotone for signed
/// drifts.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub w: FbmPath,
    pub x0: Vec<f64>,
    /// row-major psi values, (n_points x d)
    psi: Vec<f64>,
    /// drift evaluations that fell outside a grid drift's support
    pub outside_grid_evals: usize,
}

impl SolutionPath {
    #[inline]
    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    #[inline]
    pub fn psi(&self, i: usize, c: usize) -> f64 {
        self.psi[i * self.dim() + c]
    }

    #[inline]
    pub fn x(&self, i: usize, c: usize) -> f64 {
        self.x0[c] + self.psi(i, c) + self.w.value(i, c)
    }

    /// Values of X as a row-major buffer.
    pub fn x_values(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.psi.len()];
        for i in 0..self.w.grid.n_points() {
            for c in 0..d {
                out[i * d + c] = self.x(i, c);
            }
        }
        out
    }

    pub fn psi_values(&self) -> &[f64] {
        &self.psi
    }

    pub fn sup_distance(&self, other: &SolutionPath) -> f64 {
        let d = self.dim();
        let mut best: f64 = 0.0;
        for i in 0..self.w.grid.n_points() {
            let mut s = 0.0;
            for c in 0..d {
                let diff = self.x(i, c) - other.x(i, c);
                s += diff * diff;
            }
            best = best.max(s.sqrt());
        }
        best
    }

    /// CSV rows `t, x.., w.., psi..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        writeln!(
            w,
            "# h={} seed={} n_steps={} horizon={} d={}",
            self.w.h.value(),
            self.w.seed,
            self.w.grid.n_steps(),
            self.w.grid.horizon(),
            d
        )?;
        write!(w, "t")?;
        for c in 0..d {
            write!(w, ",x_{}", c + 1)?;
        }
        for c in 0..d {
            write!(w, ",w_{}", c + 1)?;
        }
        for c in 0..d {
            write!(w, ",psi_{}", c + 1)?;
        }
        writeln!(w)?;
        for i in 0..self.w.grid.n_points() {
            write!(w, "{}", self.w.grid.point(i))?;
            for c in 0..d {
                write!(w, ",{}", self.x(i, c))?;
            }
            for c in 0..d {
                write!(w, ",{}", self.w.value(i, c))?;
            }
            for c in 0..d {
                write!(w, ",{}", self.psi(i, c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Left-point Euler with exact noise increments: psi accumulates b(X) dt and
/// X is reconstructed as x0 + psi + W, which makes the zero-drift identity
/// bitwise and keeps psi exactly monotone for signed drifts.
pub fn euler_solve(drift: &DriftEvaluator, w: &FbmPath, x0: &[f64]) -> Result<SolutionPath> {
    let d = w.dim();
    if x0.len() != d {
        return Err(Error::domain("initial condition dimension mismatch"));
    }
    let n = w.grid.n_steps();
    let dt = w.grid.dt();
    let mut psi = vec![0.0; (n + 1) * d];
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut outside = 0usize;
    for i in 0..n {
        for c in 0..d {
            x[c] = x0[c] + psi[i * d + c] + w.value(i, c);
        }
        if !drift.eval(&x, &mut b) {
            outside += 1;
        }
        for c in 0..d {
            psi[(i + 1) * d + c] = psi[i * d + c] + b[c] * dt;
        }
    }
    Ok(SolutionPath { w: w.clone(), x0: x0.to_vec(), psi, outside_grid_evals: outside })
}

/// Mollified solution family against one shared noise path, with
/// sup-distances between consecutive mollification levels.
pub struct RegularizedFamily {
    pub n_list: Vec<u32>,
    pub solutions: Vec<SolutionPath>,
    pub consecutive_sup_distances: Vec<f64>,
}

/// Solve with the mollified drifts P_{1/n} b for each n in `n_list`, all
/// against the same noise path. Requires the weak-existence regime for the
/// drift's integrability class (p = 1 for measures).
pub fn regularized_solution(
    b: &DriftSpec,
    x0: &[f64],
    n_list: &[u32],
    w: &FbmPath,
    grid: SpatialGrid,
) -> Result<RegularizedFamily> {
    let p = b.integrability();
    let class = classify_regime(w.h, w.dim(), p);
    if class.verdict != RegimeVerdict::WeakExistence {
        return Err(Error::RegimeRefusal {
            h: w.h.value(),
            d: w.dim(),
            d_over_p: p.d_over_p(w.dim()),
            margin: class.margin,
            reason: "regularized solutions need the weak-existence regime d/p < 1/H - 1".into(),
        });
    }
    let mut solutions = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::domain("mollification level must be >= 1"));
        }
        let drift = mollified_drift(b, n, grid)?;
        solutions.push(euler_solve(&drift, w, x0)?);
    }
    let consecutive_sup_distances = solutions
        .windows(2)
        .map(|pair| pair[0].sup_distance(&pair[1]))
        .collect();
    Ok(RegularizedFamily { n_list: n_list.to_vec(), solutions, consecutive_sup_distances })
}

/// P_{1/n} b as a pointwise-evaluable drift; pure atoms become closed-form
/// Gaussians, everything else goes through the grid.
pub fn mollified_drift(b: &DriftSpec, n: u32, grid: SpatialGrid) -> Result<DriftEvaluator> {
    let t = 1.0 / n as f64;
    match b {
        DriftSpec::Measure { atoms, density } if density.is_none() => {
            let atoms = atoms.clone();
            Ok(DriftEvaluator::Callable(Arc::new(move |x: &[f64], out: &mut [f64]| {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut diff = vec![0.0; x.len()];
                for atom in &atoms {
                    for (dc, (xv, av)) in x.iter().zip(&atom.location).enumerate() {
                        diff[dc] = xv - av;
                    }
                    let g = gaussian_nd(&diff, t);
                    for (o, wgt) in out.iter_mut().zip(&atom.weight) {
                        *o += wgt * g;
                    }
                }
            })))
        }
        _ => Ok(DriftEvaluator::Grid(Arc::new(heat_mollify(b, t, grid)?))),
    }
}

/// ell-variation of the drift part psi over [s, t].
#[derive(Debug, Clone, Copy)]
pub struct VariationStatistic {
    pub ell: f64,
    pub interval: (f64, f64),
    pub value: f64,
    /// For ell > 1 the finest-grid sum is only a lower bound for the
    /// supremum over partitions; for ell = 1 it is exact on the grid.
    pub is_lower_bound: bool,
}

pub fn drift_variation(sol: &SolutionPath, s: f64, t: f64, ell: f64) -> Result<VariationStatistic> {
    if !(ell >= 1.0) {
        return Err(Error::domain("ell-variation needs ell >= 1"));
    }
    if s >= t {
        return Err(Error::domain("variation interval needs s < t"));
    }
    let grid = sol.w.grid;
    let (i0, i1) = (grid.index_of(s), grid.index_of(t));
    let d = sol.dim();
    let mut acc = 0.0;
    for i in i0..i1 {
        let mut step = 0.0;
        for c in 0..d {
            let diff = sol.psi(i + 1, c) - sol.psi(i, c);
            step += diff * diff;
        }
        acc += step.sqrt().powf(ell);
    }
    Ok(VariationStatistic {
        ell,
        interval: (grid.point(i0), grid.point(i1)),
        value: acc.powf(1.0 / ell),
        is_lower_bound: ell > 1.0,
    })
}

/// Skew fBM: dX = beta delta_0(X) dt + dW^H at mollification level n.
/// Outside the existence regime H < 1/(d+1) it still simulates (for
/// boundary studies) and reports the classification alongside.
pub struct SkewOutcome {
    pub path: SolutionPath,
    pub regime_ok: bool,
}

pub fn skew_fbm(beta: f64, n_moll: u32, w: &FbmPath, x0: &[f64]) -> Result<SkewOutcome> {
    if n_moll == 0 {
        return Err(Error::domain("mollification level must be >= 1"));
    }
    let d = w.dim();
    let h = w.h.value();
    let drift = DriftEvaluator::mollified_delta(beta, 1.0 / n_moll as f64);
    let path = euler_solve(&drift, w, x0)?;
    Ok(SkewOutcome { path, regime_ok: h * (d as f64 + 1.0) < 1.0 })
}

/// Direct skew Brownian motion oracle: simulate B on the grid and resign
/// each excursion of |B| independently, positive with probability
/// (1 + s)/2. The sign at t = 1 has exactly that law, so this is an
/// unbiased Monte Carlo oracle for P(X_1 > 0) = (1 + s)/2.
pub fn skew_bm_oracle(skew: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&skew) {
        return Err(Error::domain("skew parameter must lie in [-1, 1]"));
    }
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::domain("oracle needs paths and steps"));
    }
    let p_up = 0.5 * (1.0 + skew);
    let dt = 1.0 / n_steps as f64;
    let sq = dt.sqrt();
    use rayon::prelude::*;
    let positives: usize = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::substream(seed, label::SKEW_ORACLE, p as u64);
            let mut b = 0.0f64;
            let mut sign = if rng.gen::<f64>() < p_up { 1.0 } else { -1.0 };
            let mut prev = 0.0f64;
            for _ in 0..n_steps {
                let z: f64 = rng.sample(StandardNormal);
                b += sq * z;
                let sb = b.signum();
                if sb != prev && sb != 0.0 {
                    if prev != 0.0 {
                        sign = if rng.gen::<f64>() < p_up { 1.0 } else { -1.0 };
                    }
                    prev = sb;
                }
            }
            usize::from(sign > 0.0 && b != 0.0)
        })
        .sum();
    Ok(positives as f64 / n_paths as f64)
}

/// sup over the field's t-list of
/// |X_t - x0 - sum_atoms w L(t, y) - int L(t, y) rho(y) dy - W_t|.
pub fn measure_drift_residual(
    sol: &SolutionPath,
    atoms: &[Atom],
    density: Option<&GridFunction>,
    field: &LocalTimeField,
) -> Result<f64> {
    let d = sol.dim();
    if d != 1 {
        return Err(Error::domain("measure-drift residual implemented for d = 1"));
    }
    let grid = sol.w.grid;
    let mut worst: f64 = 0.0;
    for (ti, &t) in field.t_list.iter().enumerate() {
        let i = grid.index_of(t);
        let mut drift_term = 0.0;
        for atom in atoms {
            drift_term += atom.weight[0] * field.interpolate_space(ti, atom.location[0]);
        }
        if let Some(rho) = density {
            let g = rho.grid;
            let dv = g.cell_volume();
            let mut x = vec![0.0; 1];
            for cell in 0..g.cell_count() {
                g.center(cell, &mut x);
                drift_term += field.interpolate_space(ti, x[0]) * rho.value(cell, 0) * dv;
            }
        }
        let resid = (sol.x(i, 0) - sol.x0[0] - drift_term - sol.w.value(i, 0)).abs();
        worst = worst.max(resid);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, TimeGrid};
    use approx::assert_abs_diff_eq;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn regime_classification_matches_inequality() {
        let c = classify_regime(h(0.25), 1, Integrability::Finite(1.0));
        assert_eq!(c.verdict, RegimeVerdict::WeakExistence);
        assert_abs_diff_eq!(c.margin, 2.0, epsilon = 1e-12);

        let c = classify_regime(h(0.5), 1, Integrability::Finite(1.0));
        assert_eq!(c.verdict, RegimeVerdict::Boundary);

        let c = classify_regime(h(0.75), 2, Integrability::Finite(3.0));
        assert_eq!(c.verdict, RegimeVerdict::CounterexampleRegime);

        let c = classify_regime(h(0.75), 5, Integrability::Infinity);
        assert_eq!(c.verdict, RegimeVerdict::WeakExistence);
    }

    #[test]
    fn zero_drift_identity_is_bitwise() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(256).unwrap(), 1, 2, 4)
            .unwrap()
            .pop()
            .unwrap();
        let sol = euler_solve(&DriftEvaluator::zero(), &w, &[0.25, -1.0]).unwrap();
        for i in 0..=256 {
            assert_eq!(sol.x(i, 0), 0.25 + w.value(i, 0));
            assert_eq!(sol.x(i, 1), -1.0 + w.value(i, 1));
            assert_eq!(sol.psi(i, 0), 0.0);
        }
    }

    #[test]
    fn constant_drift_gives_linear_psi() {
        let w = sample_fbm(h(0.5), TimeGrid::unit(128).unwrap(), 1, 1, 4)
            .unwrap()
            .pop()
            .unwrap();
        let sol = euler_solve(&DriftEvaluator::constant(vec![2.5]), &w, &[0.0]).unwrap();
        for i in 0..=128 {
            assert_abs_diff_eq!(sol.psi(i, 0), 2.5 * w.grid.point(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn nonnegative_drift_gives_monotone_psi() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(512).unwrap(), 1, 1, 11)
            .unwrap()
            .pop()
            .unwrap();
        let sol = skew_fbm(1.0, 64, &w, &[0.0]).unwrap();
        assert!(sol.regime_ok);
        for i in 1..=512 {
            assert!(sol.path.psi(i, 0) >= sol.path.psi(i - 1, 0));
        }
        let flat = skew_fbm(0.0, 64, &w, &[0.0]).unwrap();
        for i in 0..=512 {
            assert_eq!(flat.path.x(i, 0), w.value(i, 0));
        }
        // boundary case still simulates, with the regime flag down
        let wb = sample_fbm(h(0.5), TimeGrid::unit(64).unwrap(), 1, 1, 11)
            .unwrap()
            .pop()
            .unwrap();
        assert!(!skew_fbm(1.0, 64, &wb, &[0.0]).unwrap().regime_ok);
    }

    #[test]
    fn variation_of_monotone_psi_telescopes() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(256).unwrap(), 1, 1, 12)
            .unwrap()
            .pop()
            .unwrap();
        let sol = skew_fbm(1.0, 64, &w, &[0.0]).unwrap().path;
        let v = drift_variation(&sol, 0.25, 0.75, 1.0).unwrap();
        assert!(!v.is_lower_bound);
        let i0 = w.grid.index_of(0.25);
        let i1 = w.grid.index_of(0.75);
        assert_abs_diff_eq!(v.value, sol.psi(i1, 0) - sol.psi(i0, 0), epsilon = 1e-12);
        assert!(drift_variation(&sol, 0.75, 0.25, 1.0).is_err());

        // superadditivity holds with equality on grid-aligned splits
        let a = drift_variation(&sol, 0.0, 0.5, 1.0).unwrap().value;
        let b = drift_variation(&sol, 0.5, 1.0, 1.0).unwrap().value;
        let total = drift_variation(&sol, 0.0, 1.0, 1.0).unwrap().value;
        assert_abs_diff_eq!(a + b, total, epsilon = 1e-12);
        assert!(drift_variation(&sol, 0.0, 1.0, 2.0).unwrap().is_lower_bound);
    }

    #[test]
    fn regularized_family_trivial_case_and_refusal() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(128).unwrap(), 1, 1, 13)
            .unwrap()
            .pop()
            .unwrap();
        let grid = SpatialGrid::new(1, 4.0, 512).unwrap();

        let b0 = DriftSpec::Measure {
            atoms: vec![Atom { location: vec![0.0], weight: vec![0.0] }],
            density: None,
        };
        let fam = regularized_solution(&b0, &[0.0], &[4, 16, 64], &w, grid).unwrap();
        for dist in &fam.consecutive_sup_distances {
            assert_eq!(*dist, 0.0);
        }
        for s in &fam.solutions {
            for i in 0..=128 {
                assert_eq!(s.x(i, 0), w.value(i, 0));
            }
        }

        let w2 = sample_fbm(h(0.75), TimeGrid::unit(128).unwrap(), 1, 1, 13)
            .unwrap()
            .pop()
            .unwrap();
        let res = regularized_solution(&DriftSpec::delta(1, 1.0), &[0.0], &[4], &w2, grid);
        assert!(matches!(res, Err(Error::RegimeRefusal { .. })));
    }

    #[test]
    fn skew_oracle_matches_closed_form() {
        let s = (1.0 - (-2.0f64).exp()) / (1.0 + (-2.0f64).exp());
        let est = skew_bm_oracle(s, 20_000, 4096, 3).unwrap();
        let target = 0.5 * (1.0 + s);
        let se = (target * (1.0 - target) / 20_000.0).sqrt();
        assert!((est - target).abs() < 4.0 * se, "oracle {est} vs {target}");
    }

    #[test]
    fn residual_of_zero_drift_is_zero() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(512).unwrap(), 1, 1, 14)
            .unwrap()
            .pop()
            .unwrap();
        let sol = euler_solve(&DriftEvaluator::zero(), &w, &[0.0]).unwrap();
        let extent = w.sup_norm() + 0.5;
        let sg = SpatialGrid::new(1, extent, 128).unwrap();
        let xs = sol.x_values();
        let field = crate::localtime::local_time(
            crate::localtime::PathView::new(&xs, 1, w.grid).unwrap(),
            crate::localtime::default_bandwidth(&sg),
            sg,
            &[0.5, 1.0],
        )
        .unwrap();
        let r = measure_drift_residual(&sol, &[], None, &field).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn residual_vanishes_when_path_never_meets_the_atom() {
        let w = sample_fbm(h(0.3), TimeGrid::unit(512).unwrap(), 1, 1, 15)
            .unwrap()
            .pop()
            .unwrap();
        let x0 = 5.0;
        // drift atom at 0.5 with the path far above: psi stays ~ 0 and the
        // local time at the atom is 0
        let atom = Atom { location: vec![0.5], weight: vec![1.0] };
        let b = DriftSpec::Measure { atoms: vec![atom.clone()], density: None };
        let grid = SpatialGrid::new(1, 8.0, 1024).unwrap();
        let drift = mollified_drift(&b, 256, grid).unwrap();
        let sol = euler_solve(&drift, &w, &[x0]).unwrap();
        let extent = x0 + w.sup_norm() + 1.0;
        let sg = SpatialGrid::new(1, extent, 256).unwrap();
        let xs = sol.x_values();
        let field = crate::localtime::local_time(
            crate::localtime::PathView::new(&xs, 1, w.grid).unwrap(),
            crate::localtime::default_bandwidth(&sg),
            sg,
            &[1.0],
        )
        .unwrap();
        let r = measure_drift_residual(&sol, &[atom], None, &field).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }
}
