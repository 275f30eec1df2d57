//! Oscillation integrals and the quasi-Hölder seminorm
//! `|f|_α = sup_{0<ε≤ε₀} ε^{−α} ∫ osc(f, B_ε(x)) dx` for cell functions.
//!
//! For a piecewise-constant `f` the map `x ↦ osc(f, B_ε(x))` is piecewise
//! constant along every line parallel to an axis, with breakpoints where the
//! ball starts or stops touching a cell. The integral along the last axis is
//! therefore computed exactly by sweeping those breakpoints; the remaining
//! axes use a midpoint rule with `sublines` nodes per cell.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UlamPartition;
use crate::map_model::Rectangle;
use crate::ulam_transfer::TransferMatrix;

/// How `f` is seen outside the phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// `f` is a function on `ℝ^d` vanishing outside `M`; the integral runs
    /// over all of `ℝ^d`, so the boundary of `M` counts as a jump.
    #[default]
    Zero,
    /// Balls are clipped to `M` and `x` ranges over `M` only.
    Intrinsic,
}

/// A real function that is constant on the cells of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub partition: UlamPartition,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(partition: UlamPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len(), got: values.len() });
        }
        Ok(Self { partition, values })
    }

    pub fn constant(partition: UlamPartition, c: f64) -> Self {
        let values = vec![c; partition.len()];
        Self { partition, values }
    }

    /// Cell averages of the indicator of `rect`.
    pub fn indicator(partition: UlamPartition, rect: &Rectangle) -> Self {
        let vol = partition.cell_volume();
        let values = (0..partition.len())
            .map(|j| partition.cell(j).intersect(rect).map_or(0.0, |r| r.volume() / vol))
            .collect();
        Self { partition, values }
    }

    /// Samples `g` at cell midpoints.
    pub fn from_fn(partition: UlamPartition, g: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..partition.len()).map(|j| g(&partition.midpoint(j))).collect();
        Self { partition, values }
    }

    /// `‖f‖_{L¹(m)}` with `m` the normalized Lebesgue measure.
    pub fn l1(&self) -> f64 {
        crate::ulam_transfer::l1_norm(&self.values, &self.partition)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { partition: self.partition.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.partition != other.partition {
            return Err(Error::GridMismatch("grid functions live on different partitions".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { partition: self.partition.clone(), values })
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `K f`, checking that `K` lives on the same grid.
    pub fn pushed(&self, k: &TransferMatrix<f64>) -> Result<Self> {
        if k.partition() != &self.partition {
            return Err(Error::GridMismatch("transfer matrix and function use different partitions".into()));
        }
        Ok(Self { partition: self.partition.clone(), values: k.apply(&self.values)? })
    }
}

/// Distance from `t` to the interval `[a, b]`.
fn interval_distance(t: f64, a: f64, b: f64) -> f64 {
    if t < a {
        a - t
    } else if t > b {
        t - b
    } else {
        0.0
    }
}

/// `osc(f, B_ε(x))`: max minus min of the cell values met by the open ball
/// (and of the value 0 outside `M` under [`Extension::Zero`]).
pub fn oscillation(f: &GridFunction, eps: f64, x: &[f64], extension: Extension) -> f64 {
    let p = &f.partition;
    let b = &p.bounds;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if extension == Extension::Zero && (0..p.dim()).any(|k| x[k] - eps < b.lower[k] || x[k] + eps > b.upper[k]) {
        lo = 0.0;
        hi = 0.0;
    }
    for j in 0..p.len() {
        let c = p.cell(j);
        let d2: f64 = (0..p.dim()).map(|k| interval_distance(x[k], c.lower[k], c.upper[k]).powi(2)).sum();
        if d2 < eps * eps {
            lo = lo.min(f.values[j]);
            hi = hi.max(f.values[j]);
        }
    }
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

/// Midpoint nodes `(coordinate, weight)` along a transverse axis.
fn transverse_nodes(p: &UlamPartition, axis: usize, eps: f64, sublines: usize, extension: Extension) -> Vec<(f64, f64)> {
    let lo = p.bounds.lower[axis];
    let hi = p.bounds.upper[axis];
    let h = p.cell_width(axis) / sublines as f64;
    let mut nodes = Vec::new();
    let mut segment = |a: f64, b: f64| {
        let m = ((b - a) / h).ceil().max(1.0) as usize;
        let w = (b - a) / m as f64;
        nodes.extend((0..m).map(|i| (a + (i as f64 + 0.5) * w, w)));
    };
    if extension == Extension::Zero {
        segment(lo - eps, lo);
    }
    for k in 0..p.shape[axis] {
        segment(p.edge(axis, k), p.edge(axis, k + 1));
    }
    if extension == Extension::Zero {
        segment(hi, hi + eps);
    }
    nodes
}

struct RankedValues {
    ranks: Vec<usize>,
    levels: Vec<f64>,
    zero_rank: usize,
}

fn rank_values(values: &[f64]) -> RankedValues {
    // Adding 0.0 folds −0 into +0 so the total order agrees with `==`.
    let values: Vec<f64> = values.iter().map(|v| v + 0.0).collect();
    let mut levels = values.clone();
    levels.push(0.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank = |v: f64| levels.binary_search_by(|l| l.total_cmp(&v)).expect("value is present");
    RankedValues { ranks: values.iter().map(|&v| rank(v)).collect(), zero_rank: rank(0.0), levels }
}

/// Counted multiset of value ranks with O(log n) extremes.
#[derive(Default)]
struct ActiveSet(BTreeMap<usize, u32>);

impl ActiveSet {
    fn insert(&mut self, r: usize) {
        *self.0.entry(r).or_default() += 1;
    }

    fn remove(&mut self, r: usize) {
        if let Some(c) = self.0.get_mut(&r) {
            *c -= 1;
            if *c == 0 {
                self.0.remove(&r);
            }
        }
    }

    fn spread(&self, levels: &[f64]) -> f64 {
        match (self.0.first_key_value(), self.0.last_key_value()) {
            (Some((&a, _)), Some((&b, _))) => levels[b] - levels[a],
            _ => 0.0,
        }
    }
}

/// `∫ osc(f, B_ε(x)) dx` (Lebesgue `dx`).
pub fn integrated_oscillation(f: &GridFunction, eps: f64, extension: Extension, sublines: usize) -> f64 {
    let p = &f.partition;
    let d = p.dim();
    let last = d - 1;
    let ranked = rank_values(&f.values);
    let per_axis: Vec<Vec<(f64, f64)>> = (0..last).map(|k| transverse_nodes(p, k, eps, sublines.max(1), extension)).collect();
    let lines: usize = per_axis.iter().map(Vec::len).product();
    let contributions: Vec<f64> = (0..lines)
        .into_par_iter()
        .map(|mut flat| {
            let mut t = vec![0.0; last];
            let mut weight = 1.0;
            for k in (0..last).rev() {
                let (c, w) = per_axis[k][flat % per_axis[k].len()];
                flat /= per_axis[k].len();
                t[k] = c;
                weight *= w;
            }
            weight * line_integral(f, &ranked, &t, eps, extension)
        })
        .collect();
    // Sequential sum keeps the result independent of the thread count.
    contributions.iter().sum()
}

/// Exact integral along the last axis for transverse coordinates `t`.
fn line_integral(f: &GridFunction, ranked: &RankedValues, t: &[f64], eps: f64, extension: Extension) -> f64 {
    let p = &f.partition;
    let b = &p.bounds;
    let last = t.len();
    let n_last = p.shape[last];

    // Transverse cells within ε, with their squared distance.
    let mut rows: Vec<(usize, f64)> = vec![(0, 0.0)];
    for (k, &tk) in t.iter().enumerate() {
        let i0 = p.axis_index(k, tk - eps);
        let i1 = p.axis_index(k, tk + eps);
        let mut next = Vec::new();
        for &(base, d2) in &rows {
            for i in i0..=i1 {
                let dk = interval_distance(tk, p.edge(k, i), p.edge(k, i + 1));
                let nd2 = d2 + dk * dk;
                if nd2 < eps * eps {
                    next.push((base * p.shape[k] + i, nd2));
                }
            }
        }
        rows = next;
    }

    let mut active = ActiveSet::default();
    let mut events: Vec<(f64, bool, usize)> = Vec::with_capacity(2 * rows.len() * n_last + 2);
    for &(base, d2) in &rows {
        let r = (eps * eps - d2).sqrt();
        for i in 0..n_last {
            let rank = ranked.ranks[base * n_last + i];
            events.push((p.edge(last, i) - r, true, rank));
            events.push((p.edge(last, i + 1) + r, false, rank));
        }
    }

    let (lo, hi) = (b.lower[last], b.upper[last]);
    let (s_start, s_end) = match extension {
        Extension::Zero => (lo - eps, hi + eps),
        Extension::Intrinsic => (lo, hi),
    };
    if extension == Extension::Zero {
        let transverse_out = t.iter().enumerate().any(|(k, &tk)| tk - eps < b.lower[k] || tk + eps > b.upper[k]);
        active.insert(ranked.zero_rank);
        if !transverse_out && lo + eps < hi - eps {
            events.push((lo + eps, false, ranked.zero_rank));
            events.push((hi - eps, true, ranked.zero_rank));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut total = 0.0;
    let mut cur = s_start;
    for (pos, enter, rank) in events {
        if pos > cur {
            let end = pos.min(s_end);
            if end > cur {
                total += active.spread(&ranked.levels) * (end - cur);
            }
            cur = pos;
        }
        if enter {
            active.insert(rank);
        } else {
            active.remove(rank);
        }
    }
    if s_end > cur {
        total += active.spread(&ranked.levels) * (s_end - cur);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l1: f64,
    pub seminorm_alpha: f64,
    pub norm_alpha: f64,
    pub alpha: f64,
    pub epsilon0: f64,
    pub epsilon_grid: Vec<f64>,
    /// `ε^{−α} ∫ osc` at each grid value.
    pub ratios: Vec<f64>,
    pub argmax_epsilon: f64,
    pub extension: Extension,
}

/// Options for [`seminorm_alpha`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormOptions {
    pub n_eps: usize,
    pub extension: Extension,
    pub sublines: usize,
}

impl Default for SeminormOptions {
    fn default() -> Self {
        Self { n_eps: 20, extension: Extension::Zero, sublines: 2 }
    }
}

/// Geometric grid of `n` values from `ε₀/100` to `ε₀`.
pub fn epsilon_grid(eps0: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![eps0];
    }
    let lo = eps0 / 100.0;
    (0..n).map(|i| lo * 100f64.powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn seminorm_alpha(f: &GridFunction, alpha: f64, eps0: f64, opts: SeminormOptions) -> Result<NormReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(eps0 > 0.0) || opts.n_eps == 0 {
        return Err(Error::InvalidArgument("epsilon0 must be positive and n_eps at least 1".into()));
    }
    let grid = epsilon_grid(eps0, opts.n_eps);
    let ratios: Vec<f64> = grid
        .iter()
        .map(|&e| e.powf(-alpha) * integrated_oscillation(f, e, opts.extension, opts.sublines))
        .collect();
    let (imax, &sup) = ratios.iter().enumerate().fold((0, &0.0), |best, (i, r)| if *r > *best.1 { (i, r) } else { best });
    let l1 = f.l1();
    Ok(NormReport {
        l1,
        seminorm_alpha: sup,
        norm_alpha: l1 + sup,
        alpha,
        epsilon0: eps0,
        argmax_epsilon: grid[imax],
        epsilon_grid: grid,
        ratios,
        extension: opts.extension,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasotaYorkeStep {
    pub k: usize,
    pub norm_alpha: f64,
    pub l1: f64,
}

/// Norms of `Pᵏf` together with a fit `‖Pᵏf‖_α ≈ A ηᵏ ‖f‖_α + B ‖f‖_{L¹}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasotaYorkeReport {
    pub steps: Vec<LasotaYorkeStep>,
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    /// Root-mean-square fit residual relative to the spread of the norms.
    pub relative_residual: f64,
    pub contraction_observed: bool,
}

/// Largest relative residual for which a fitted η < 1 counts as contraction.
pub const LY_RESIDUAL_TOL: f64 = 0.1;

pub fn lasota_yorke_probe(
    k: &TransferMatrix<f64>,
    f: &GridFunction,
    alpha: f64,
    eps0: f64,
    k_max: usize,
    opts: SeminormOptions,
) -> Result<LasotaYorkeReport> {
    if k.partition() != &f.partition {
        return Err(Error::GridMismatch("transfer matrix and function use different partitions".into()));
    }
    let mut steps = Vec::with_capacity(k_max + 1);
    let mut g = f.clone();
    for step in 0..=k_max {
        let r = seminorm_alpha(&g, alpha, eps0, opts)?;
        steps.push(LasotaYorkeStep { k: step, norm_alpha: r.norm_alpha, l1: r.l1 });
        if step < k_max {
            g = g.pushed(k)?;
        }
    }
    let y: Vec<f64> = steps.iter().map(|s| s.norm_alpha).collect();
    let (eta, a_fit, b_fit, ss) = fit_geometric(&y);
    let spread = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let relative_residual = if spread > 1e-12 { (ss / y.len() as f64).sqrt() / spread } else { 0.0 };
    let norm0 = steps[0].norm_alpha;
    let l10 = steps[0].l1;
    Ok(LasotaYorkeReport {
        eta,
        a: if norm0 > 0.0 { a_fit / norm0 } else { 0.0 },
        b: if l10 > 0.0 { b_fit / l10 } else { 0.0 },
        relative_residual,
        contraction_observed: eta < 1.0 && relative_residual <= LY_RESIDUAL_TOL,
        steps,
    })
}

/// Least squares for `y_k ≈ A ηᵏ + B`: linear in `(A, B)` for fixed `η`,
/// scanned then refined in `η`. Returns `(η, A, B, residual sum of squares)`.
fn fit_geometric(y: &[f64]) -> (f64, f64, f64, f64) {
    let solve = |eta: f64| -> (f64, f64, f64) {
        let n = y.len() as f64;
        let x: Vec<f64> = (0..y.len()).map(|k| eta.powi(k as i32)).collect();
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        let (a, b) = if det.abs() < 1e-300 { (0.0, sy / n) } else { ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det) };
        let ss = x.iter().zip(y).map(|(xi, yi)| (a * xi + b - yi).powi(2)).sum();
        (a, b, ss)
    };
    const SCAN: usize = 300;
    const ETA_MAX: f64 = 1.5;
    let etas: Vec<f64> = (1..=SCAN).map(|i| ETA_MAX * i as f64 / SCAN as f64).collect();
    let best = (0..SCAN).min_by(|&i, &j| solve(etas[i]).2.total_cmp(&solve(etas[j]).2)).unwrap_or(0);
    let lo = if best == 0 { 1e-6 } else { etas[best - 1] };
    let hi = etas[(best + 1).min(SCAN - 1)];
    let eta = golden_min(|e| solve(e).2, lo, hi, 1e-10);
    let (a, b, ss) = solve(eta);
    (eta, a, b, ss)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub(crate) fn golden_min(mut g: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while (b - a).abs() > tol {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

/// Twenty deterministic test functions on `partition`: indicators,
/// constants, smooth bumps and random step functions.
pub fn test_family(partition: &UlamPartition) -> Vec<GridFunction> {
    let d = partition.dim();
    let b = &partition.bounds;
    let at = |frac: &[f64]| -> Vec<f64> { (0..d).map(|k| b.lower[k] + frac[k] * b.width(k)).collect() };
    let mut out = Vec::with_capacity(20);
    for (lo, hi) in [(0.0, 0.5), (0.25, 0.75), (0.1, 0.3), (0.5, 1.0), (0.0, 1.0)] {
        let rect = Rectangle { lower: at(&vec![lo; d]), upper: at(&vec![hi; d]) };
        out.push(GridFunction::indicator(partition.clone(), &rect));
    }
    out.push(GridFunction::constant(partition.clone(), -1.5));
    for freq in 1..=5 {
        let fr = freq as f64;
        out.push(GridFunction::from_fn(partition.clone(), |x| {
            (0..d).map(|k| (fr * std::f64::consts::TAU * (x[k] - b.lower[k]) / b.width(k)).sin()).sum()
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    while out.len() < 20 {
        let steps = 2 + out.len() % 5;
        let levels: Vec<f64> = (0..steps).map(|_| rng.random_range(-2.0..2.0)).collect();
        out.push(GridFunction::from_fn(partition.clone(), |x| {
            let u = (x[0] - b.lower[0]) / b.width(0);
            levels[((u * steps as f64) as usize).min(steps - 1)]
        }));
    }
    out
}

/// Largest ratio `‖fg‖_α / (‖f‖_α ‖g‖_α)` over all pairs from `family`.
pub fn algebra_constant(family: &[GridFunction], alpha: f64, eps0: f64, opts: SeminormOptions) -> Result<f64> {
    let norms = family.iter().map(|f| seminorm_alpha(f, alpha, eps0, opts).map(|r| r.norm_alpha)).collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..family.len() {
        for j in i..family.len() {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let fg = family[i].product(&family[j])?;
            let n = seminorm_alpha(&fg, alpha, eps0, opts)?.norm_alpha;
            worst = worst.max(n / (norms[i] * norms[j]));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::builtin;
    use crate::ulam_transfer::{build_ulam, AssemblyMethod};

    fn line(n: usize) -> UlamPartition {
        UlamPartition::new(Rectangle::unit(1), vec![n]).unwrap()
    }

    fn half_indicator(n: usize) -> GridFunction {
        GridFunction::indicator(line(n), &Rectangle::new(vec![0.0], vec![0.5]).unwrap())
    }

    #[test]
    fn oscillation_examples() {
        let c = GridFunction::constant(line(64), 2.0);
        assert_eq!(oscillation(&c, 0.01, &[0.3], Extension::Zero), 0.0);
        assert_eq!(oscillation(&c, 0.01, &[0.001], Extension::Intrinsic), 0.0);
        let f = half_indicator(64);
        assert_eq!(oscillation(&f, 0.01, &[0.5], Extension::Zero), 1.0);
        assert_eq!(oscillation(&f, 0.01, &[0.25], Extension::Zero), 0.0);
    }

    #[test]
    fn oscillation_monotone_in_eps() {
        let f = GridFunction::from_fn(line(50), |x| (7.0 * x[0]).sin());
        for x in [0.1, 0.37, 0.5, 0.93] {
            let mut prev = 0.0;
            for e in [0.001, 0.01, 0.03, 0.1, 0.2] {
                let o = oscillation(&f, e, &[x], Extension::Zero);
                assert!(o >= prev);
                prev = o;
            }
        }
    }

    #[test]
    fn half_indicator_seminorm_is_four() {
        let f = half_indicator(4096);
        let r = seminorm_alpha(&f, 1.0, 1.0 / 16.0, SeminormOptions::default()).unwrap();
        assert!((r.seminorm_alpha - 4.0).abs() <= 0.08, "{}", r.seminorm_alpha);
        assert!((r.l1 - 0.5).abs() < 1e-15);
        assert_eq!(r.norm_alpha, r.l1 + r.seminorm_alpha);
        let r3 = seminorm_alpha(&f.scaled(3.0), 1.0, 1.0 / 16.0, SeminormOptions::default()).unwrap();
        assert!((r3.seminorm_alpha - 12.0).abs() < 1e-9);
        // Clipped to M only the interior jump is left.
        let ri = seminorm_alpha(&f, 1.0, 1.0 / 16.0, SeminormOptions { extension: Extension::Intrinsic, ..Default::default() }).unwrap();
        assert!((ri.seminorm_alpha - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_seminorm() {
        let c = GridFunction::constant(line(128), -0.7);
        let opts = SeminormOptions { extension: Extension::Intrinsic, ..Default::default() };
        let r = seminorm_alpha(&c, 0.5, 0.05, opts).unwrap();
        assert_eq!(r.seminorm_alpha, 0.0);
        assert!((r.l1 - 0.7).abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_square_indicator() {
        // Indicator of [1/4, 3/4]²: perimeter 2, so ∫osc ≈ 2ε · 2 = 4ε.
        let p = UlamPartition::new(Rectangle::unit(2), vec![64, 64]).unwrap();
        let f = GridFunction::indicator(p, &Rectangle::new(vec![0.25, 0.25], vec![0.75, 0.75]).unwrap());
        let i = integrated_oscillation(&f, 0.05, Extension::Zero, 4);
        // Corners add the area of a quarter disc each minus the square, a small correction.
        assert!((i / 0.05 - 4.0).abs() < 0.1, "{}", i / 0.05);
    }

    #[test]
    fn lasota_yorke_examples() {
        let m = builtin("doubling").unwrap();
        let p = line(256);
        let k = build_ulam(&m, &p, &AssemblyMethod::ExactAffine).unwrap();
        let one = GridFunction::constant(p.clone(), 1.0);
        let r = lasota_yorke_probe(&k, &one, 1.0, 1.0 / 16.0, 5, SeminormOptions::default()).unwrap();
        for s in &r.steps {
            assert!((s.norm_alpha - r.steps[0].norm_alpha).abs() < 1e-9);
        }
        let digit = GridFunction::new(p.clone(), (0..256).map(|j| if j < 128 { 0.5 } else { -0.5 }).collect()).unwrap();
        let r = lasota_yorke_probe(&k, &digit, 1.0, 1.0 / 16.0, 3, SeminormOptions::default()).unwrap();
        assert!(r.steps[1..].iter().all(|s| s.l1 < 1e-15));
        let g = GridFunction::indicator(p.clone(), &Rectangle::new(vec![0.0], vec![0.3]).unwrap()).scaled(1.0 / 0.3);
        let r = lasota_yorke_probe(&k, &g, 1.0, 1.0 / 16.0, 10, SeminormOptions::default()).unwrap();
        assert!(r.contraction_observed, "{r:?}");
        assert!(r.eta < 1.0);
        let mut h = g.clone();
        for _ in 0..5 {
            h = h.pushed(&k).unwrap();
            assert!(h.values.iter().all(|&v| v >= 0.0));
            assert!((h.l1() - g.l1()).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_rejects_other_grid() {
        let k = build_ulam(&builtin("doubling").unwrap(), &line(8), &AssemblyMethod::ExactAffine).unwrap();
        let f = GridFunction::constant(line(16), 1.0);
        assert!(matches!(lasota_yorke_probe(&k, &f, 1.0, 0.1, 2, SeminormOptions::default()), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn family_is_twenty_and_algebra_constant_finite() {
        let p = line(128);
        let fam = test_family(&p);
        assert_eq!(fam.len(), 20);
        let c = algebra_constant(&fam[..6], 1.0, 1.0 / 16.0, SeminormOptions { n_eps: 5, ..Default::default() }).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn geometric_fit_recovers_parameters() {
        let y: Vec<f64> = (0..12).map(|k| 3.0 * 0.6f64.powi(k) + 1.5).collect();
        let (eta, a, b, ss) = fit_geometric(&y);
        assert!((eta - 0.6).abs() < 1e-6);
        assert!((a - 3.0).abs() < 1e-5);
        assert!((b - 1.5).abs() < 1e-5);
        assert!(ss < 1e-12);
    }
}
