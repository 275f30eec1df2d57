//! Piecewise affine expanding maps on a box `M ⊂ ℝ^d`.
//!
//! Branch domains are axis-aligned rectangles; each branch acts as
//! `x ↦ A x + b`, optionally reduced modulo the phase-space width along
//! selected axes.

mod builtin;
mod observable;
mod regularity;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use observable::{center_observable, quadrature_mean, Observable, ObservableKind};
pub use regularity::{complexity_y, eta0, eta0_from_parts, unit_ball_volume, RegularityReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for volume bookkeeping (tiling, containment).
const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidRectangle(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidRectangle(format!("axis {k}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    /// Open-interior membership.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| lo < v && v < hi)
    }

    /// Closed membership.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    pub fn contains_rect(&self, other: &Rectangle, tol: f64) -> bool {
        (0..self.dim()).all(|k| other.lower[k] >= self.lower[k] - tol && other.upper[k] <= self.upper[k] + tol)
    }

    /// Intersection with positive volume, if any.
    pub fn intersect(&self, other: &Rectangle) -> Option<Rectangle> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let lo = self.lower[k].max(other.lower[k]);
            let hi = self.upper[k].min(other.upper[k]);
            if hi <= lo {
                return None;
            }
            lower.push(lo);
            upper.push(hi);
        }
        Some(Rectangle { lower, upper })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub domain: Rectangle,
    /// Row-major `d × d` linear part `DT_i`.
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
    /// Per-axis reduction of the image modulo the phase-space width.
    pub wrap: Vec<bool>,
}

impl Branch {
    pub fn new(label: impl Into<String>, domain: Rectangle, linear: Vec<f64>, offset: Vec<f64>) -> Self {
        let d = domain.dim();
        Self { label: label.into(), domain, linear, offset, wrap: vec![false; d] }
    }

    pub fn with_wrap(mut self, wrap: Vec<bool>) -> Self {
        self.wrap = wrap;
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.linear)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.linear[row * self.dim() + col]
    }

    pub fn abs_det(&self) -> f64 {
        self.matrix().determinant().abs()
    }

    /// Operator 2-norm of `DT_i^{-1}`, i.e. `1 / σ_min(DT_i)`.
    pub fn inverse_norm(&self) -> Result<f64> {
        let sv = self.matrix().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > f64::EPSILON * smax.max(1.0) * self.dim() as f64) {
            return Err(Error::SingularBranch { label: self.label.clone() });
        }
        Ok(1.0 / smin)
    }

    /// For a generalized permutation matrix, `perm[r]` is the source axis
    /// feeding target axis `r`. `None` for any other linear part.
    pub fn axis_permutation(&self) -> Option<Vec<usize>> {
        let d = self.dim();
        let mut perm = Vec::with_capacity(d);
        let mut used = vec![false; d];
        for r in 0..d {
            let nz: Vec<usize> = (0..d).filter(|&c| self.entry(r, c) != 0.0).collect();
            if nz.len() != 1 || used[nz[0]] {
                return None;
            }
            used[nz[0]] = true;
            perm.push(nz[0]);
        }
        Some(perm)
    }

    /// Unwrapped affine image `A x + b`.
    pub fn affine(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for r in 0..d {
            let row = &self.linear[r * d..(r + 1) * d];
            out[r] = row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.offset[r];
        }
    }
}

/// Reduce `y` into `[lo, lo + width)`.
pub(crate) fn wrap_into(y: f64, lo: f64, width: f64) -> f64 {
    let r = (y - lo).rem_euclid(width);
    if r >= width {
        lo
    } else {
        lo + r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffineMap {
    pub name: String,
    pub alpha: f64,
    pub phase_space: Rectangle,
    pub branches: Vec<Branch>,
}

impl PiecewiseAffineMap {
    /// Validates dimensions, disjointness, tiling and image containment.
    /// Expansion is not required here; see [`PiecewiseAffineMap::expansion_constant`].
    pub fn new(name: impl Into<String>, alpha: f64, phase_space: Rectangle, branches: Vec<Branch>) -> Result<Self> {
        let d = phase_space.dim();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if branches.is_empty() {
            return Err(Error::InvalidArgument("map has no branches".into()));
        }
        let tol = GEOM_TOL * phase_space.volume().max(1.0);
        for b in &branches {
            let bad = |reason: String| Error::InvalidBranch { label: b.label.clone(), reason };
            if b.dim() != d || b.linear.len() != d * d || b.offset.len() != d || b.wrap.len() != d {
                return Err(bad(format!("dimensions do not match phase space dimension {d}")));
            }
            if !phase_space.contains_rect(&b.domain, tol) {
                return Err(bad("domain leaves the phase space".into()));
            }
            if b.inverse_norm().is_err() {
                return Err(Error::SingularBranch { label: b.label.clone() });
            }
        }
        for (i, a) in branches.iter().enumerate() {
            for b in &branches[i + 1..] {
                if let Some(overlap) = a.domain.intersect(&b.domain) {
                    if overlap.volume() > tol {
                        return Err(Error::InvalidBranch {
                            label: b.label.clone(),
                            reason: format!("domain overlaps branch {}", a.label),
                        });
                    }
                }
            }
        }
        let covered: f64 = branches.iter().map(|b| b.domain.volume()).sum();
        if (covered - phase_space.volume()).abs() > 1e-9 * phase_space.volume() {
            return Err(Error::InvalidArgument(format!(
                "branch domains cover volume {covered}, phase space has volume {}",
                phase_space.volume()
            )));
        }
        let map = Self { name: name.into(), alpha, phase_space, branches };
        for b in &map.branches {
            map.check_image(b)?;
        }
        Ok(map)
    }

    fn check_image(&self, b: &Branch) -> Result<()> {
        let d = self.dim();
        let m = &self.phase_space;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut corner = vec![0.0; d];
        let mut img = vec![0.0; d];
        for mask in 0..(1usize << d) {
            for k in 0..d {
                corner[k] = if mask >> k & 1 == 1 { b.domain.upper[k] } else { b.domain.lower[k] };
            }
            b.affine(&corner, &mut img);
            for k in 0..d {
                lo[k] = lo[k].min(img[k]);
                hi[k] = hi[k].max(img[k]);
            }
        }
        for k in 0..d {
            if b.wrap[k] {
                continue;
            }
            let tol = GEOM_TOL * m.width(k).max(1.0);
            if lo[k] < m.lower[k] - tol || hi[k] > m.upper[k] + tol {
                return Err(Error::InvalidBranch {
                    label: b.label.clone(),
                    reason: format!("image leaves the phase space along axis {k} ([{}, {}])", lo[k], hi[k]),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.phase_space.dim()
    }

    /// Index of the branch whose open domain contains `x`.
    pub fn branch_of(&self, x: &[f64]) -> Result<usize> {
        if let Some(i) = self.branches.iter().position(|b| b.domain.contains_interior(x)) {
            return Ok(i);
        }
        if self.phase_space.contains_closed(x) {
            Err(Error::BoundaryPoint { point: x.to_vec() })
        } else {
            Err(Error::OutsideDomain { point: x.to_vec() })
        }
    }

    /// Applies `T` in place into `out`, returning the branch index.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<usize> {
        let i = self.branch_of(x)?;
        let b = &self.branches[i];
        b.affine(x, out);
        for k in 0..self.dim() {
            if b.wrap[k] {
                out[k] = wrap_into(out[k], self.phase_space.lower[k], self.phase_space.width(k));
            }
        }
        Ok(i)
    }

    /// `T(x)` together with the label of the branch used.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Vec<f64>, &str)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut out = vec![0.0; self.dim()];
        let i = self.evaluate_into(x, &mut out)?;
        Ok((out, self.branches[i].label.as_str()))
    }

    /// `s(T) = max_i ‖DT_i^{-1}‖₂`.
    pub fn expansion_constant(&self) -> Result<f64> {
        let mut s: f64 = 0.0;
        for b in &self.branches {
            s = s.max(b.inverse_norm()?);
        }
        Ok(s)
    }

    /// Hölder constant of `det DT_i^{-1}`; identically zero for affine branches.
    pub fn distortion_constant(&self) -> f64 {
        0.0
    }

    /// Default ball-radius cap: 1/16 of the smallest branch-domain side.
    pub fn default_epsilon0(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| (0..b.dim()).map(move |k| b.domain.width(k)))
            .fold(f64::INFINITY, f64::min)
            / 16.0
    }

    /// True when every branch can be assembled exactly.
    pub fn supports_exact_assembly(&self) -> bool {
        self.branches.iter().all(|b| b.axis_permutation().is_some())
    }
}
