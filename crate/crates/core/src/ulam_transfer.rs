//! Ulam discretization of the transfer operator and its twisted versions.
//!
//! Densities are stored as cell averages. With cells `B_j` the matrix is
//! `K[j][i] = m(B_i ∩ T⁻¹B_j) / m(B_j)`, so for a uniform grid every column
//! of the untwisted matrix sums to one and `Σ_j m(B_j) (Kf)_j = Σ_i m(B_i) f_i`.
//! Twisting multiplies on the right, `K_z = K · diag(e^{zφ})`, which is the
//! cell-level form of `P_z f = P(e^{zφ} f)`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UlamPartition;
use crate::map_model::{wrap_into, Branch, PiecewiseAffineMap, Rectangle};
use crate::scalar::Scalar;

pub use crate::grid::UlamPartition as Partition;

/// Minimum number of random points per source cell for sampled assembly.
pub const MIN_SAMPLES_PER_CELL: usize = 1000;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMethod {
    #[default]
    ExactAffine,
    Sampled { samples_per_cell: usize, seed: u64 },
}

/// Sparse `N × N` matrix in compressed-column storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<T: Scalar = f64> {
    partition: UlamPartition,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<T>,
    pub method: AssemblyMethod,
    pub twist: Complex64,
}

impl<T: Scalar> TransferMatrix<T> {
    fn from_columns(partition: UlamPartition, columns: Vec<Vec<(u32, T)>>, method: AssemblyMethod, twist: Complex64) -> Self {
        let nnz = columns.iter().map(Vec::len).sum();
        let mut col_ptr = Vec::with_capacity(columns.len() + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for col in columns {
            for (r, v) in col {
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Self { partition, col_ptr, row_idx, values, method, twist }
    }

    pub fn dim(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn partition(&self) -> &UlamPartition {
        &self.partition
    }

    /// Entries `(row, value)` of column `i`.
    pub fn column(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.col_ptr[i]..self.col_ptr[i + 1];
        self.row_idx[r.clone()].iter().map(|&j| j as usize).zip(self.values[r].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.column(col).find(|&(j, _)| j == row).map_or(T::ZERO, |(_, v)| v)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// `out = K f`.
    pub fn apply_into(&self, f: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::ZERO);
        for (i, &fi) in f.iter().enumerate() {
            if fi == T::ZERO {
                continue;
            }
            for e in self.col_ptr[i]..self.col_ptr[i + 1] {
                out[self.row_idx[e] as usize] += self.values[e] * fi;
            }
        }
    }

    /// `K f`.
    pub fn apply(&self, f: &[T]) -> Result<Vec<T>> {
        self.check_len(f.len())?;
        let mut out = vec![T::ZERO; self.dim()];
        self.apply_into(f, &mut out);
        Ok(out)
    }

    /// `out = Kᵀ w` (plain transpose, no conjugation).
    pub fn apply_transpose_into(&self, w: &[T], out: &mut [T]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = T::ZERO;
            for e in self.col_ptr[i]..self.col_ptr[i + 1] {
                acc += self.values[e] * w[self.row_idx[e] as usize];
            }
            *o = acc;
        });
    }

    pub fn apply_transpose(&self, w: &[T]) -> Result<Vec<T>> {
        self.check_len(w.len())?;
        let mut out = vec![T::ZERO; self.dim()];
        self.apply_transpose_into(w, &mut out);
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut d = vec![vec![T::ZERO; n]; n];
        for i in 0..n {
            for (j, v) in self.column(i) {
                d[j][i] = v;
            }
        }
        d
    }

    /// Plain-text sparse triplets: a header `N nnz`, then one `j i value`
    /// line per stored entry (0-based row `j`, column `i`); complex entries
    /// are written as `j i re im`.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dim(), self.nnz())?;
        for i in 0..self.dim() {
            for (j, v) in self.column(i) {
                let c = v.to_complex();
                if self.twist.im == 0.0 && c.im == 0.0 {
                    writeln!(w, "{j} {i} {:e}", c.re)?;
                } else {
                    writeln!(w, "{j} {i} {:e} {:e}", c.re, c.im)?;
                }
            }
        }
        Ok(())
    }
}

impl TransferMatrix<f64> {
    /// The identity operator on `partition`.
    pub fn identity(partition: UlamPartition) -> Self {
        let cols = (0..partition.len()).map(|i| vec![(i as u32, 1.0)]).collect();
        Self::from_columns(partition, cols, AssemblyMethod::ExactAffine, Complex64::new(0.0, 0.0))
    }

    /// Largest relative mass defect `|Σ_j m(B_j) K[j][i] − m(B_i)| / m(B_i)`.
    pub fn mass_defect(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.column(i).map(|(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

/// Weighted `L¹(m)` norm `Σ_j |f_j| m(B_j)`.
pub fn l1_norm<T: Scalar>(f: &[T], partition: &UlamPartition) -> f64 {
    f.iter().map(|v| v.modulus()).sum::<f64>() * partition.cell_measure()
}

/// Assembles the Ulam matrix of `map` on `partition`.
pub fn build_ulam(map: &PiecewiseAffineMap, partition: &UlamPartition, method: &AssemblyMethod) -> Result<TransferMatrix<f64>> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if partition.bounds != map.phase_space {
        return Err(Error::GridMismatch("partition does not cover the phase space of the map".into()));
    }
    let columns: Vec<Vec<(u32, f64)>> = match method {
        AssemblyMethod::ExactAffine => {
            let perms = map
                .branches
                .iter()
                .map(|b| b.axis_permutation().ok_or_else(|| Error::NonAffineExact { label: b.label.clone() }))
                .collect::<Result<Vec<_>>>()?;
            (0..partition.len()).into_par_iter().map(|i| exact_column(map, &perms, partition, i)).collect()
        }
        AssemblyMethod::Sampled { samples_per_cell, seed } => {
            if *samples_per_cell < MIN_SAMPLES_PER_CELL {
                return Err(Error::InvalidArgument(format!(
                    "sampled assembly needs at least {MIN_SAMPLES_PER_CELL} samples per cell, got {samples_per_cell}"
                )));
            }
            (0..partition.len())
                .into_par_iter()
                .map(|i| sampled_column(map, partition, i, *samples_per_cell, *seed))
                .collect::<Result<_>>()?
        }
    };
    Ok(TransferMatrix::from_columns(partition.clone(), columns, method.clone(), Complex64::new(0.0, 0.0)))
}

/// Splits `[a, b]` into pieces reduced modulo the axis width.
fn wrapped_pieces(a: f64, b: f64, lo: f64, width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let sliver = 4.0 * f64::EPSILON * width.max(1.0);
    let mut cur = a;
    while b - cur > sliver {
        let m = ((cur - lo) / width).floor();
        let end = b.min(lo + (m + 1.0) * width);
        let start = wrap_into(cur, lo, width);
        let shift = cur - start;
        if end - cur > sliver {
            out.push((start, end - shift));
        }
        if end <= cur {
            break;
        }
        cur = end;
    }
    out
}

/// Image of the box `src` under an axis-permuting branch, one interval
/// list per target axis.
fn image_pieces(branch: &Branch, perm: &[usize], src: &Rectangle, bounds: &Rectangle) -> Vec<Vec<(f64, f64)>> {
    (0..perm.len())
        .map(|r| {
            let p = perm[r];
            let a = branch.entry(r, p);
            let (mut lo, mut hi) = (a * src.lower[p] + branch.offset[r], a * src.upper[p] + branch.offset[r]);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            if branch.wrap[r] {
                wrapped_pieces(lo, hi, bounds.lower[r], bounds.width(r))
            } else {
                vec![(lo, hi)]
            }
        })
        .collect()
}

/// Visits every combination of per-axis `(index, length)` overlaps.
fn for_each_product(axes: &[Vec<(usize, f64)>], partition: &UlamPartition, mut visit: impl FnMut(usize, f64)) {
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    let d = axes.len();
    let mut idx = vec![0usize; d];
    loop {
        let mut flat = 0;
        let mut vol = 1.0;
        for k in 0..d {
            let (c, len) = axes[k][idx[k]];
            flat = flat * partition.shape[k] + c;
            vol *= len;
        }
        visit(flat, vol);
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn merge_column(mut entries: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|e| e.1 > 0.0);
    out
}

fn exact_column(map: &PiecewiseAffineMap, perms: &[Vec<usize>], partition: &UlamPartition, i: usize) -> Vec<(u32, f64)> {
    let cell = partition.cell(i);
    let cell_vol = partition.cell_volume();
    let mut entries = Vec::new();
    for (branch, perm) in map.branches.iter().zip(perms) {
        let Some(src) = cell.intersect(&branch.domain) else { continue };
        let inv_det = 1.0 / branch.abs_det();
        let pieces = image_pieces(branch, perm, &src, &partition.bounds);
        let axes: Vec<Vec<(usize, f64)>> = pieces
            .iter()
            .enumerate()
            .map(|(r, ps)| ps.iter().flat_map(|&(a, b)| partition.axis_overlaps(r, a, b)).collect())
            .collect();
        for_each_product(&axes, partition, |j, vol| entries.push((j as u32, vol * inv_det / cell_vol)));
    }
    merge_column(entries)
}

fn sampled_column(map: &PiecewiseAffineMap, partition: &UlamPartition, i: usize, samples: usize, seed: u64) -> Result<Vec<(u32, f64)>> {
    let d = partition.dim();
    let cell = partition.cell(i);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let q = ((samples as f64).powf(1.0 / d as f64).floor() as usize).max(1);
    let strata = q.pow(d as u32);
    let mut counts = std::collections::BTreeMap::<u32, u64>::new();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for s in 0..samples {
        let mut t = s % strata;
        for k in (0..d).rev() {
            let u = ((t % q) as f64 + rng.random::<f64>()) / q as f64;
            x[k] = cell.lower[k] + u * (cell.upper[k] - cell.lower[k]);
            t /= q;
        }
        let mut tries = 0;
        loop {
            match map.evaluate_into(&x, &mut y) {
                Ok(_) => break,
                Err(Error::BoundaryPoint { .. }) if tries < 8 => {
                    x.iter_mut().for_each(|v| *v = v.next_up());
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        }
        *counts.entry(partition.locate(&y) as u32).or_default() += 1;
    }
    Ok(counts.into_iter().map(|(j, c)| (j, c as f64 / samples as f64)).collect())
}

/// `K_z = K · diag(e^{zφ})` for a complex twist.
pub fn twist(k: &TransferMatrix<f64>, phi: &[f64], z: Complex64) -> Result<TransferMatrix<Complex64>> {
    twist_with(k, phi, z, |v, p| Complex64::new(v, 0.0) * (z * p).exp())
}

/// `K_θ = K · diag(e^{θφ})` for a real twist; stays real and nonnegative.
pub fn twist_real(k: &TransferMatrix<f64>, phi: &[f64], theta: f64) -> Result<TransferMatrix<f64>> {
    twist_with(k, phi, Complex64::new(theta, 0.0), |v, p| v * (theta * p).exp())
}

fn twist_with<T: Scalar>(
    k: &TransferMatrix<f64>,
    phi: &[f64],
    z: Complex64,
    entry: impl Fn(f64, f64) -> T + Sync,
) -> Result<TransferMatrix<T>> {
    if phi.len() != k.dim() {
        return Err(Error::GridMismatch(format!("observable has {} cells, matrix has dimension {}", phi.len(), k.dim())));
    }
    if k.twist != Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidArgument("twist must be applied to the untwisted operator".into()));
    }
    let mut values = Vec::with_capacity(k.nnz());
    for (i, &p) in phi.iter().enumerate() {
        for e in k.col_ptr[i]..k.col_ptr[i + 1] {
            values.push(entry(k.values[e], p));
        }
    }
    Ok(TransferMatrix {
        partition: k.partition.clone(),
        col_ptr: k.col_ptr.clone(),
        row_idx: k.row_idx.clone(),
        values,
        method: k.method.clone(),
        twist: z,
    })
}

/// `|∫ f·(g∘T) dm − ∫ (Kf)·g dm|` for cell functions `f`, `g`.
///
/// With `n_samples == 0` the left side is computed from exact preimage
/// volumes (pulling each target cell back through every branch), which is
/// independent of the push-forward used in assembly; otherwise by Monte
/// Carlo with `n_samples` uniform points.
pub fn duality_check(k: &TransferMatrix<f64>, map: &PiecewiseAffineMap, f: &[f64], g: &[f64], n_samples: usize) -> Result<f64> {
    let partition = k.partition();
    if f.len() != k.dim() || g.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: f.len().min(g.len()) });
    }
    let kf = k.apply(f)?;
    let rhs = kf.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * partition.cell_measure();
    let lhs = if n_samples == 0 {
        pullback_pairing(map, partition, f, g)?
    } else {
        sampled_pairing(map, partition, f, g, n_samples)?
    };
    Ok((lhs - rhs).abs())
}

fn pullback_pairing(map: &PiecewiseAffineMap, partition: &UlamPartition, f: &[f64], g: &[f64]) -> Result<f64> {
    let d = partition.dim();
    let bounds = &partition.bounds;
    let total = bounds.volume();
    let mut acc = 0.0;
    for branch in &map.branches {
        let perm = branch.axis_permutation().ok_or_else(|| Error::NonAffineExact { label: branch.label.clone() })?;
        let dom = &branch.domain;
        // Range of the unwrapped image along each target axis.
        let img: Vec<(f64, f64)> = (0..d)
            .map(|r| {
                let p = perm[r];
                let a = branch.entry(r, p);
                let (u, v) = (a * dom.lower[p] + branch.offset[r], a * dom.upper[p] + branch.offset[r]);
                (u.min(v), u.max(v))
            })
            .collect();
        let part: f64 = (0..partition.len())
            .into_par_iter()
            .map(|j| {
                if g[j] == 0.0 {
                    return 0.0;
                }
                let target = partition.cell(j);
                let mut axes: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
                for r in 0..d {
                    let p = perm[r];
                    let a = branch.entry(r, p);
                    let (c, e) = (target.lower[r], target.upper[r]);
                    let shifts: Vec<f64> = if branch.wrap[r] {
                        let w = bounds.width(r);
                        let m0 = ((img[r].0 - e) / w).ceil() as i64;
                        let m1 = ((img[r].1 - c) / w).floor() as i64;
                        (m0..=m1).map(|m| m as f64 * w).collect()
                    } else {
                        vec![0.0]
                    };
                    for s in shifts {
                        let lo = (c + s).max(img[r].0);
                        let hi = (e + s).min(img[r].1);
                        if hi <= lo {
                            continue;
                        }
                        let (x0, x1) = ((lo - branch.offset[r]) / a, (hi - branch.offset[r]) / a);
                        let (x0, x1) = (x0.min(x1).max(dom.lower[p]), x0.max(x1).min(dom.upper[p]));
                        axes[p].extend(partition.axis_overlaps(p, x0, x1));
                    }
                }
                let mut s = 0.0;
                for_each_product(&axes, partition, |i, vol| s += f[i] * vol);
                g[j] * s
            })
            .sum();
        acc += part;
    }
    Ok(acc / total)
}

fn sampled_pairing(map: &PiecewiseAffineMap, partition: &UlamPartition, f: &[f64], g: &[f64], n: usize) -> Result<f64> {
    let d = partition.dim();
    let b = &partition.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..n {
        for k in 0..d {
            x[k] = b.lower[k] + rng.random::<f64>() * b.width(k);
        }
        if map.evaluate_into(&x, &mut y).is_err() {
            continue;
        }
        acc += f[partition.locate(&x)] * g[partition.locate(&y)];
    }
    Ok(acc / n as f64)
}
