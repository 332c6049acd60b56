//! Occupation measures, local-time fields, and their Hölder-exponent
//! estimators.
//!
//! All time integrals of indicators are computed exactly on the linear
//! interpolation of the sampled path: each segment is split at the times it
//! crosses a cell boundary or a ball boundary, which removes the O(dt)
//! occupancy bias of naive sampling near crossings.

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, TimeGrid};
use crate::mollify::{unit_ball_volume, SpatialGrid};
use crate::scaling::{fit_scaling_with_ensemble, ExponentFit};
use std::io::Write;

/// Borrowed view of any sampled path (fBM, solution, perturbed sum).
#[derive(Clone, Copy)]
pub struct PathView<'a> {
    values: &'a [f64],
    d: usize,
    grid: TimeGrid,
}

impl<'a> PathView<'a> {
    pub fn new(values: &'a [f64], d: usize, grid: TimeGrid) -> Result<Self> {
        if values.len() != grid.n_points() * d {
            return Err(Error::domain("path view length mismatch"));
        }
        Ok(PathView { values, d, grid })
    }

    pub fn from_fbm(p: &'a FbmPath) -> Self {
        PathView { values: p.values(), d: p.dim(), grid: p.grid }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn value(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.d + c]
    }

    fn component_range(&self, c: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.grid.n_points() {
            let v = self.value(i, c);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Histogram of int_0^t 1(X_s in cell) ds over the cells of a spatial grid.
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    pub t: f64,
    pub grid: SpatialGrid,
    mass: Vec<f64>,
}

impl OccupationMeasure {
    pub fn mass(&self, cell: usize) -> f64 {
        self.mass[cell]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Occupation of an axis interval [lo, hi] (d = 1), splitting boundary
    /// cells proportionally.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let dx = self.grid.cell_width();
        let mut total = 0.0;
        for k in 0..self.grid.n_cells() {
            let c = self.grid.axis_center(k);
            let (a, b) = (c - 0.5 * dx, c + 0.5 * dx);
            let ol = (b.min(hi) - a.max(lo)).max(0.0);
            if ol > 0.0 {
                total += self.mass[k] * ol / dx;
            }
        }
        total
    }
}

/// Occupation measure of the path up to time `t`, on `grid` or an enlarged
/// copy of it when the path leaves the requested extent.
pub fn occupation_measure(
    path: PathView<'_>,
    t: f64,
    grid: SpatialGrid,
) -> Result<OccupationMeasure> {
    let d = path.dim();
    if grid.dim() != d {
        return Err(Error::domain("grid dimension must match the path"));
    }
    let upto = path.grid().index_of(t);
    let mut need = grid.extent();
    for c in 0..d {
        let (lo, hi) = path.component_range(c);
        need = need.max(lo.abs()).max(hi.abs());
    }
    let grid = if need > grid.extent() {
        let dx = grid.cell_width();
        let n = (((2.0 * need * 1.01) / dx).ceil() as usize).max(grid.n_cells());
        SpatialGrid::new(d, 0.5 * n as f64 * dx, n)?
    } else {
        grid
    };

    let dt = path.grid().dt();
    let mut mass = vec![0.0; grid.cell_count()];
    let dx = grid.cell_width();
    let n_cells = grid.n_cells();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut cuts: Vec<f64> = Vec::with_capacity(16);
    for i in 0..upto {
        for c in 0..d {
            a[c] = path.value(i, c);
            b[c] = path.value(i + 1, c);
        }
        // split the segment at every axis cell boundary it crosses
        cuts.clear();
        cuts.push(0.0);
        cuts.push(1.0);
        for c in 0..d {
            if (b[c] - a[c]).abs() < 1e-300 {
                continue;
            }
            let (lo, hi) = if a[c] <= b[c] { (a[c], b[c]) } else { (b[c], a[c]) };
            let k0 = ((lo + grid.extent()) / dx).ceil() as i64;
            let k1 = ((hi + grid.extent()) / dx).floor() as i64;
            for k in k0..=k1 {
                let boundary = -grid.extent() + k as f64 * dx;
                let theta = (boundary - a[c]) / (b[c] - a[c]);
                if theta > 0.0 && theta < 1.0 {
                    cuts.push(theta);
                }
            }
        }
        cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for w in 0..cuts.len() - 1 {
            let (t0, t1) = (cuts[w], cuts[w + 1]);
            if t1 - t0 <= 0.0 {
                continue;
            }
            let mid = 0.5 * (t0 + t1);
            let mut idx = 0usize;
            let mut ok = true;
            for c in 0..d {
                let x = a[c] + mid * (b[c] - a[c]);
                match grid.axis_index(x) {
                    Some(k) if k < n_cells => idx = idx * n_cells + k,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                mass[idx] += (t1 - t0) * dt;
            }
        }
    }
    Ok(OccupationMeasure { t: upto as f64 * dt, grid, mass })
}

/// Time spent inside B(x, r) up to each t in `t_list`, exact on the linear
/// interpolation of the path.
pub fn ball_time(path: PathView<'_>, x: &[f64], r: f64, t_list: &[f64]) -> Result<Vec<f64>> {
    if x.len() != path.dim() {
        return Err(Error::domain("ball center dimension mismatch"));
    }
    let dt = path.grid().dt();
    let n = path.grid().n_steps();
    let d = path.dim();
    let mut sorted: Vec<(usize, usize)> = t_list
        .iter()
        .enumerate()
        .map(|(k, &t)| (path.grid().index_of(t), k))
        .collect();
    sorted.sort();
    let mut res = vec![0.0; t_list.len()];
    let mut acc = 0.0;
    let mut ti = 0usize;
    for i in 0..n {
        while ti < sorted.len() && sorted[ti].0 <= i {
            res[sorted[ti].1] = acc;
            ti += 1;
        }
        let frac = if d == 1 {
            let a = path.value(i, 0) - x[0];
            let b = path.value(i + 1, 0) - x[0];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if hi - lo < 1e-300 {
                if a.abs() < r {
                    1.0
                } else {
                    0.0
                }
            } else {
                ((hi.min(r) - lo.max(-r)) / (hi - lo)).clamp(0.0, 1.0)
            }
        } else {
            // |A + theta (B - A)|^2 < r^2 for theta in [0, 1]
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for c in 0..d {
                let av = path.value(i, c) - x[c];
                let dv = path.value(i + 1, c) - path.value(i, c);
                aa += av * av;
                bb += dv * dv;
                ab += av * dv;
            }
            if bb < 1e-300 {
                if aa < r * r {
                    1.0
                } else {
                    0.0
                }
            } else {
                let disc = ab * ab - bb * (aa - r * r);
                if disc <= 0.0 {
                    0.0
                } else {
                    let sq = disc.sqrt();
                    let t0 = ((-ab - sq) / bb).clamp(0.0, 1.0);
                    let t1 = ((-ab + sq) / bb).clamp(0.0, 1.0);
                    (t1 - t0).max(0.0)
                }
            }
        };
        acc += frac * dt;
    }
    while ti < sorted.len() {
        res[sorted[ti].1] = acc;
        ti += 1;
    }
    Ok(res)
}

/// Fixed-bandwidth occupation-density estimate at one point:
/// L(t, x) = time in B(x, R) / (v_d R^d).
pub fn ball_occupancy(path: PathView<'_>, x: &[f64], r: f64, t_list: &[f64]) -> Result<Vec<f64>> {
    let norm = 1.0 / (unit_ball_volume(path.dim()) * r.powi(path.dim() as i32));
    Ok(ball_time(path, x, r, t_list)?.into_iter().map(|v| v * norm).collect())
}

/// Estimated occupation density L(t_i, x_j) on a time x space grid.
#[derive(Debug, Clone)]
pub struct LocalTimeField {
    pub t_list: Vec<f64>,
    pub grid: SpatialGrid,
    pub bandwidth: f64,
    /// row-major `values[ti * cells + cell]`
    values: Vec<f64>,
}

impl LocalTimeField {
    #[inline]
    pub fn value(&self, ti: usize, cell: usize) -> f64 {
        self.values[ti * self.grid.cell_count() + cell]
    }

    /// Linear interpolation in space at time index `ti` (d = 1).
    pub fn interpolate_space(&self, ti: usize, x: f64) -> f64 {
        debug_assert_eq!(self.grid.dim(), 1);
        let dx = self.grid.cell_width();
        let pos = (x + self.grid.extent()) / dx - 0.5;
        if pos <= 0.0 {
            return self.value(ti, 0);
        }
        let n = self.grid.n_cells();
        if pos >= (n - 1) as f64 {
            return self.value(ti, n - 1);
        }
        let j = pos.floor() as usize;
        let fr = pos - j as f64;
        self.value(ti, j) * (1.0 - fr) + self.value(ti, j + 1) * fr
    }

    /// Grid integral of L(t_i, .) over space.
    pub fn space_integral(&self, ti: usize) -> f64 {
        let dv = self.grid.cell_volume();
        (0..self.grid.cell_count()).map(|c| self.value(ti, c)).sum::<f64>() * dv
    }

    /// CSV rows `t, x_1..x_d, L`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# bandwidth={} extent={} n_cells={}",
            self.bandwidth,
            self.grid.extent(),
            self.grid.n_cells()
        )?;
        let mut x = vec![0.0; self.grid.dim()];
        for (ti, t) in self.t_list.iter().enumerate() {
            for cell in 0..self.grid.cell_count() {
                self.grid.center(cell, &mut x);
                write!(w, "{t}")?;
                for xv in &x {
                    write!(w, ",{xv}")?;
                }
                writeln!(w, ",{}", self.value(ti, cell))?;
            }
        }
        Ok(())
    }
}

/// Default bandwidth dx sqrt(n_cells) / 8: a few cells per ball, shrinking
/// with resolution.
pub fn default_bandwidth(grid: &SpatialGrid) -> f64 {
    grid.cell_width() * (grid.n_cells() as f64).sqrt() / 8.0
}

/// Local-time field of a path. Requires R >= 2 dx and a grid covering the
/// path range plus a bandwidth margin.
pub fn local_time(
    path: PathView<'_>,
    r: f64,
    grid: SpatialGrid,
    t_list: &[f64],
) -> Result<LocalTimeField> {
    if grid.dim() != path.dim() {
        return Err(Error::domain("grid dimension must match the path"));
    }
    if r < 2.0 * grid.cell_width() {
        return Err(Error::GridTooCoarse {
            dx: grid.cell_width(),
            required: r / 2.0,
            context: "local-time bandwidth below grid resolution".into(),
        });
    }
    for c in 0..path.dim() {
        let (lo, hi) = path.component_range(c);
        if lo - r < -grid.extent() || hi + r > grid.extent() {
            return Err(Error::domain(format!(
                "grid extent {} does not cover path range [{lo}, {hi}] plus bandwidth {r}",
                grid.extent()
            )));
        }
    }
    let cells = grid.cell_count();
    let mut values = vec![0.0; t_list.len() * cells];
    let mut x = vec![0.0; grid.dim()];
    for cell in 0..cells {
        grid.center(cell, &mut x);
        let col = ball_occupancy(path, &x, r, t_list)?;
        for (ti, v) in col.into_iter().enumerate() {
            values[ti * cells + cell] = v;
        }
    }
    Ok(LocalTimeField { t_list: t_list.to_vec(), grid, bandwidth: r, values })
}

/// Local time of an fBM path; refuses Hd >= 1, where no continuous local
/// time exists.
pub fn fbm_local_time(
    path: &FbmPath,
    r: f64,
    grid: SpatialGrid,
    t_list: &[f64],
) -> Result<LocalTimeField> {
    let h = path.h.value();
    let d = path.dim();
    if h * d as f64 >= 1.0 {
        return Err(Error::RegimeRefusal {
            h,
            d,
            d_over_p: d as f64,
            margin: 1.0 - h * d as f64,
            reason: "local time of fBM needs Hd < 1".into(),
        });
    }
    local_time(PathView::from_fbm(path), r, grid, t_list)
}

/// Local time of W + psi for a finite-variation perturbation; refuses
/// H(d+1) >= 1 (sharp: reflected BM sits at the boundary and its local time
/// is discontinuous at 0).
pub fn perturbed_local_time(
    w: &FbmPath,
    psi: &[f64],
    r: f64,
    grid: SpatialGrid,
    t_list: &[f64],
) -> Result<LocalTimeField> {
    let h = w.h.value();
    let d = w.dim();
    if h * (d as f64 + 1.0) >= 1.0 {
        return Err(Error::RegimeRefusal {
            h,
            d,
            d_over_p: d as f64,
            margin: 1.0 - h * (d as f64 + 1.0),
            reason: "perturbed local time needs H(d+1) < 1".into(),
        });
    }
    if psi.len() != w.values().len() {
        return Err(Error::domain("perturbation must share the noise grid"));
    }
    let sum: Vec<f64> = w.values().iter().zip(psi).map(|(a, b)| a + b).collect();
    let view = PathView::new(&sum, d, w.grid)?;
    local_time(view, r, grid, t_list)
}

/// Regression of log E L([0, delta], x) against log delta over an ensemble
/// of per-path increments (10% trimmed means, bootstrap CI).
pub fn time_holder_exponent(
    deltas: &[f64],
    samples_per_delta: &[Vec<f64>],
    seed: u64,
) -> Result<ExponentFit> {
    if deltas.len() < 4 {
        return Err(Error::domain("need at least 4 dyadic scales"));
    }
    fit_scaling_with_ensemble(deltas, samples_per_delta, 0.1, seed)
}

/// Regression of log E|L(t, x) - L(t, y)| against log |x - y|.
pub fn space_holder_exponent(
    offsets: &[f64],
    samples_per_offset: &[Vec<f64>],
    seed: u64,
) -> Result<ExponentFit> {
    if offsets.len() < 3 {
        return Err(Error::domain("need at least 3 offsets"));
    }
    fit_scaling_with_ensemble(offsets, samples_per_offset, 0.1, seed)
}

/// Report for the reflected-Brownian-motion boundary case H(d+1) = 1.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GapReport {
    pub straddle_gamma: f64,
    pub away_gamma: f64,
    pub away_center: f64,
    pub straddle_pass: bool,
    pub away_pass: bool,
}

/// Spatial-exponent gap across x = 0 for reflected Brownian motion.
///
/// The local time of |B| is discontinuous at 0: the estimated spatial
/// exponent in a window straddling 0 collapses toward 0, while away from 0
/// it stays near the Brownian value 1/2.
pub fn reflected_bm_negative_test(
    n_paths: usize,
    n_steps: usize,
    bandwidth: f64,
    offset_js: &[i32],
    seed: u64,
) -> Result<GapReport> {
    use crate::fbm::{sample_fbm_map, HurstParameter};
    let h = HurstParameter::new(0.5).unwrap();
    let grid = TimeGrid::unit(n_steps)?;
    let offs: Vec<f64> = offset_js.iter().map(|&j| 2f64.powi(-j)).collect();
    let away = 0.3;
    let per_path = sample_fbm_map(h, grid, n_paths, 1, seed, |_, p| {
        let refl: Vec<f64> = p.values().iter().map(|v| v.abs()).collect();
        let view = PathView::new(&refl, 1, grid).unwrap();
        let mut st = Vec::with_capacity(offs.len());
        let mut aw = Vec::with_capacity(offs.len());
        for &o in &offs {
            let l_pos = ball_occupancy(view, &[o / 2.0], bandwidth, &[1.0]).unwrap()[0];
            let l_neg = ball_occupancy(view, &[-o / 2.0], bandwidth, &[1.0]).unwrap()[0];
            st.push((l_pos - l_neg).abs());
            let l_a = ball_occupancy(view, &[away + o / 2.0], bandwidth, &[1.0]).unwrap()[0];
            let l_b = ball_occupancy(view, &[away - o / 2.0], bandwidth, &[1.0]).unwrap()[0];
            aw.push((l_a - l_b).abs());
        }
        (st, aw)
    })?;
    let mut st_ens = vec![Vec::with_capacity(n_paths); offs.len()];
    let mut aw_ens = vec![Vec::with_capacity(n_paths); offs.len()];
    for (st, aw) in per_path {
        for (k, v) in st.into_iter().enumerate() {
            st_ens[k].push(v);
        }
        for (k, v) in aw.into_iter().enumerate() {
            aw_ens[k].push(v);
        }
    }
    let straddle = space_holder_exponent(&offs, &st_ens, seed ^ 1)?;
    let away_fit = space_holder_exponent(&offs, &aw_ens, seed ^ 2)?;
    Ok(GapReport {
        straddle_gamma: straddle.slope,
        away_gamma: away_fit.slope,
        away_center: away,
        straddle_pass: straddle.slope <= 0.1,
        away_pass: away_fit.slope >= 0.4,
    })
}
