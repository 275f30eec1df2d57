//! Uniform product grids over the phase space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_model::Rectangle;

/// Uniform product partition of `M` into cells `B_j`, indexed row-major
/// with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamPartition {
    pub bounds: Rectangle,
    pub shape: Vec<usize>,
}

impl UlamPartition {
    pub fn new(bounds: Rectangle, shape: Vec<usize>) -> Result<Self> {
        if shape.len() != bounds.dim() {
            return Err(Error::DimensionMismatch { expected: bounds.dim(), got: shape.len() });
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::EmptyPartition);
        }
        Ok(Self { bounds, shape })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalized cell measure `m(B_j) = 1/N` (the phase space has unit mass).
    pub fn cell_measure(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Coordinate (Lebesgue) volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.bounds.volume() / self.len() as f64
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.bounds.width(axis) / self.shape[axis] as f64
    }

    /// Coordinate of the `k`-th grid line along `axis`.
    pub fn edge(&self, axis: usize, k: usize) -> f64 {
        if k == self.shape[axis] {
            return self.bounds.upper[axis];
        }
        self.bounds.lower[axis] + self.bounds.width(axis) * (k as f64 / self.shape[axis] as f64)
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        out
    }

    pub fn cell(&self, flat: usize) -> Rectangle {
        let multi = self.multi_index(flat);
        let lower = multi.iter().enumerate().map(|(k, &i)| self.edge(k, i)).collect();
        let upper = multi.iter().enumerate().map(|(k, &i)| self.edge(k, i + 1)).collect();
        Rectangle { lower, upper }
    }

    pub fn midpoint(&self, flat: usize) -> Vec<f64> {
        let c = self.cell(flat);
        c.lower.iter().zip(&c.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Cell index along `axis` containing coordinate `x`, clamped to the grid.
    pub fn axis_index(&self, axis: usize, x: f64) -> usize {
        let t = (x - self.bounds.lower[axis]) / self.bounds.width(axis) * self.shape[axis] as f64;
        (t.floor().max(0.0) as usize).min(self.shape[axis] - 1)
    }

    /// Flat index of the cell containing `x` (clamped at the outer faces).
    pub fn locate(&self, x: &[f64]) -> usize {
        (0..self.dim()).fold(0, |acc, k| acc * self.shape[k] + self.axis_index(k, x[k]))
    }

    /// Overlap lengths of `[a, b]` with the cells along `axis`.
    pub fn axis_overlaps(&self, axis: usize, a: f64, b: f64) -> Vec<(usize, f64)> {
        let n = self.shape[axis];
        let lo = self.bounds.lower[axis];
        let w = self.bounds.width(axis);
        let a = a.max(lo);
        let b = b.min(self.bounds.upper[axis]);
        if b <= a {
            return Vec::new();
        }
        let first = (((a - lo) / w * n as f64).floor().max(0.0) as usize).min(n - 1);
        let last = (((b - lo) / w * n as f64).ceil() as usize).clamp(first + 1, n);
        (first..last)
            .filter_map(|k| {
                let len = b.min(self.edge(axis, k + 1)) - a.max(self.edge(axis, k));
                (len > 0.0).then_some((k, len))
            })
            .collect()
    }

    /// True when `coarse` nests in `self` (every axis count divides).
    pub fn refines(&self, coarse: &UlamPartition) -> bool {
        self.bounds == coarse.bounds && self.shape.iter().zip(&coarse.shape).all(|(f, c)| f % c == 0)
    }

    /// Lifts a coarse cell vector onto this (finer) grid.
    pub fn refine_values(&self, coarse: &UlamPartition, values: &[f64]) -> Result<Vec<f64>> {
        if !self.refines(coarse) {
            return Err(Error::GridMismatch(format!("{:?} does not refine {:?}", self.shape, coarse.shape)));
        }
        if values.len() != coarse.len() {
            return Err(Error::DimensionMismatch { expected: coarse.len(), got: values.len() });
        }
        let ratio: Vec<usize> = self.shape.iter().zip(&coarse.shape).map(|(f, c)| f / c).collect();
        Ok((0..self.len())
            .map(|j| {
                let m = self.multi_index(j);
                let cm: Vec<usize> = m.iter().zip(&ratio).map(|(i, r)| i / r).collect();
                values[coarse.flat_index(&cm)]
            })
            .collect())
    }

    /// Weighted integral `Σ_j f_j m(B_j)` against the normalized measure.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_measure()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let p = UlamPartition::new(Rectangle::unit(3), vec![3, 4, 5]).unwrap();
        for j in 0..p.len() {
            assert_eq!(p.flat_index(&p.multi_index(j)), j);
            assert_eq!(p.locate(&p.midpoint(j)), j);
        }
    }

    #[test]
    fn overlaps_sum_to_length() {
        let p = UlamPartition::new(Rectangle::unit(1), vec![7]).unwrap();
        let ov = p.axis_overlaps(0, 0.123, 0.789);
        let total: f64 = ov.iter().map(|(_, l)| l).sum();
        assert!((total - 0.666).abs() < 1e-15);
        assert!(p.axis_overlaps(0, 0.3, 0.3).is_empty());
    }

    #[test]
    fn empty_partition_rejected() {
        assert!(matches!(UlamPartition::new(Rectangle::unit(1), vec![0]), Err(Error::EmptyPartition)));
    }

    #[test]
    fn refine_values_lifts() {
        let c = UlamPartition::new(Rectangle::unit(2), vec![2, 2]).unwrap();
        let f = UlamPartition::new(Rectangle::unit(2), vec![4, 6]).unwrap();
        let v = f.refine_values(&c, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[5], 2.0);
        assert_eq!(v[f.len() - 1], 4.0);
    }
}
