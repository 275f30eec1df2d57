//! Orbit ensembles and empirical Birkhoff-sum statistics.
//!
//! Every sample owns a ChaCha8 stream keyed by `(seed, sample index)`, so
//! results do not depend on the number of worker threads.
//!
//! Floating-point orbits of expanding maps lose one or more mantissa bits
//! per step (the doubling map sends every double to 0 within ~53 steps).
//! After each step the state is therefore perturbed by uniform noise of
//! relative width [`MonteCarloOptions::jitter`], far below any cell scale.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UlamPartition;
use crate::ldp_core::ZERO_VARIANCE_TOL;
use crate::map_model::{wrap_into, Observable, PiecewiseAffineMap};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959964;

/// Law of the initial point `x₀`.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    /// Normalized Lebesgue measure on `M`.
    Uniform,
    /// Density constant on the cells of `grid`.
    Density { grid: UlamPartition, values: Vec<f64>, weights: WeightedIndex<f64> },
}

impl InitialLaw {
    /// Checks nonnegativity and unit mass (to `10⁻⁹`).
    pub fn density(grid: UlamPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("initial density must be nonnegative".into()));
        }
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("initial density integrates to {mass}, expected 1")));
        }
        let weights = WeightedIndex::new(&values).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self::Density { grid, values, weights })
    }

    fn sample(&self, bounds: &crate::map_model::Rectangle, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        match self {
            Self::Uniform => {
                for (k, v) in x.iter_mut().enumerate() {
                    *v = bounds.lower[k] + rng.random::<f64>() * bounds.width(k);
                }
            }
            Self::Density { grid, weights, .. } => {
                let cell = grid.cell(weights.sample(rng));
                for (k, v) in x.iter_mut().enumerate() {
                    *v = cell.lower[k] + rng.random::<f64>() * (cell.upper[k] - cell.lower[k]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    /// Width of the per-step noise relative to each axis; 0 disables it.
    pub jitter: f64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { jitter: 2f64.powi(-40) }
    }
}

fn step(map: &PiecewiseAffineMap, x: &mut Vec<f64>, y: &mut Vec<f64>) -> Result<()> {
    let mut tries = 0;
    loop {
        match map.evaluate_into(x, y) {
            Ok(_) => {
                std::mem::swap(x, y);
                return Ok(());
            }
            Err(Error::BoundaryPoint { .. }) if tries < 8 => {
                x.iter_mut().for_each(|v| *v = v.next_up());
                tries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn observe(phi: &Observable, x: &mut [f64]) -> Result<f64> {
    let mut tries = 0;
    loop {
        match phi.value_at(x) {
            Err(Error::BoundaryPoint { .. }) if tries < 8 => {
                x.iter_mut().for_each(|v| *v = v.next_up());
                tries += 1;
            }
            other => return other,
        }
    }
}

/// Partial Birkhoff sums `S_n` of one orbit, recorded at each `n` of the
/// increasing `schedule`.
fn orbit_sums(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    schedule: &[usize],
    seed: u64,
    index: u64,
    opts: MonteCarloOptions,
) -> Result<Vec<f64>> {
    let bounds = &map.phase_space;
    let d = map.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    law.sample(bounds, &mut rng, &mut x);
    let n_max = *schedule.last().unwrap_or(&0);
    let mut out = Vec::with_capacity(schedule.len());
    let mut next = 0;
    let mut s = 0.0;
    for k in 1..=n_max {
        s += observe(phi, &mut x)?;
        if k == schedule[next] {
            out.push(s);
            next += 1;
        }
        if k < n_max {
            step(map, &mut x, &mut y)?;
            if opts.jitter > 0.0 {
                for (i, v) in x.iter_mut().enumerate() {
                    let w = bounds.width(i);
                    *v = wrap_into(*v + (rng.random::<f64>() - 0.5) * opts.jitter * w, bounds.lower[i], w);
                }
            }
        }
    }
    Ok(out)
}

fn check_schedule(schedule: &[usize], samples: usize) -> Result<()> {
    if samples == 0 || schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("need samples ≥ 1 and a strictly increasing schedule of n ≥ 1".into()));
    }
    Ok(())
}

/// `S_n` for every `n` in `schedule` along the same orbits; row `r` holds
/// the samples for `schedule[r]`.
pub fn simulate_schedule(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    schedule: &[usize],
    samples: usize,
    seed: u64,
    opts: MonteCarloOptions,
) -> Result<Vec<Vec<f64>>> {
    check_schedule(schedule, samples)?;
    let per_sample: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| orbit_sums(map, phi, law, schedule, seed, i, opts))
        .collect::<Result<_>>()?;
    Ok((0..schedule.len()).map(|r| per_sample.iter().map(|s| s[r]).collect()).collect())
}

/// `samples` independent draws of `S_n`.
pub fn simulate_birkhoff(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    n: usize,
    samples: usize,
    seed: u64,
    opts: MonteCarloOptions,
) -> Result<Vec<f64>> {
    Ok(simulate_schedule(map, phi, law, &[n], samples, seed, opts)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n: usize,
    pub eps: f64,
    pub samples: usize,
    pub hits: usize,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// `−(1/n) log p̂`, absent when there were no hits.
    pub empirical_rate: Option<f64>,
    pub seed: u64,
}

/// Wilson score interval for `hits` successes out of `samples`.
pub fn wilson_interval(hits: usize, samples: usize, z: f64) -> (f64, f64) {
    let n = samples as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Counts `S_n > nε`. The threshold carries a relative guard of `10⁻⁹` so
/// that lattice values of `S_n` sitting exactly on `nε` are not counted
/// through rounding of the product.
pub fn tail_from_samples(sums: &[f64], n: usize, eps: f64, seed: u64) -> TailEstimate {
    let threshold = n as f64 * eps;
    let threshold = threshold + 1e-9 * threshold.abs().max(1.0);
    let hits = sums.iter().filter(|&&s| s > threshold).count();
    let samples = sums.len();
    let p_hat = hits as f64 / samples as f64;
    TailEstimate {
        n,
        eps,
        samples,
        hits,
        p_hat,
        ci95: wilson_interval(hits, samples, Z95),
        empirical_rate: (hits > 0).then(|| -p_hat.ln() / n as f64),
        seed,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn tail_estimate(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    n: usize,
    eps: f64,
    samples: usize,
    seed: u64,
    opts: MonteCarloOptions,
) -> Result<TailEstimate> {
    let sums = simulate_birkhoff(map, phi, law, n, samples, seed, opts)?;
    Ok(tail_from_samples(&sums, n, eps, seed))
}

/// Tail estimates for each `n` of an increasing schedule. All lengths
/// share the same orbits, so each entry equals a separate
/// [`tail_estimate`] call with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn empirical_rate_sweep(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    schedule: &[usize],
    eps: f64,
    samples: usize,
    seed: u64,
    opts: MonteCarloOptions,
) -> Result<Vec<TailEstimate>> {
    let rows = simulate_schedule(map, phi, law, schedule, samples, seed, opts)?;
    Ok(rows.iter().zip(schedule).map(|(s, &n)| tail_from_samples(s, n, eps, seed)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltEmpirical {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub ks_distance: f64,
    pub sample_variance: f64,
    pub mean: f64,
}

/// `N(0, σ²)` distribution function.
pub fn normal_cdf(x: f64, sigma2: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / (2.0 * sigma2).sqrt()))
}

/// Kolmogorov–Smirnov distance of the sample to `cdf`; ties are handled by
/// the sorted-index form of the statistic.
pub fn ks_distance(values: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

pub fn clt_from_samples(sums: &[f64], n: usize, seed: u64, sigma2: f64) -> Result<CltEmpirical> {
    if !(sigma2 > ZERO_VARIANCE_TOL) {
        return Err(Error::ZeroVariance { sigma2 });
    }
    let root = (n as f64).sqrt();
    let mut scaled: Vec<f64> = sums.iter().map(|s| s / root).collect();
    let m = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / m;
    let sample_variance = if scaled.len() > 1 { scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    let ks = ks_distance(&mut scaled, |x| normal_cdf(x, sigma2));
    Ok(CltEmpirical { n, samples: sums.len(), seed, ks_distance: ks, sample_variance, mean })
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_clt(
    map: &PiecewiseAffineMap,
    phi: &Observable,
    law: &InitialLaw,
    n: usize,
    samples: usize,
    seed: u64,
    sigma2: f64,
    opts: MonteCarloOptions,
) -> Result<CltEmpirical> {
    if !(sigma2 > ZERO_VARIANCE_TOL) {
        return Err(Error::ZeroVariance { sigma2 });
    }
    let sums = simulate_birkhoff(map, phi, law, n, samples, seed, opts)?;
    clt_from_samples(&sums, n, seed, sigma2)
}

const BSUM_MAGIC: &[u8; 4] = b"BSUM";

/// Raw `S_n` samples: magic `BSUM`, then `n`, sample count and seed as
/// little-endian `u64`, then the samples as little-endian `f64`.
pub fn write_bsum<W: Write>(mut w: W, n: u64, seed: u64, values: &[f64]) -> std::io::Result<()> {
    w.write_all(BSUM_MAGIC)?;
    for h in [n, values.len() as u64, seed] {
        w.write_all(&h.to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Inverse of [`write_bsum`]: `(n, seed, values)`.
pub fn read_bsum<R: Read>(mut r: R) -> std::io::Result<(u64, u64, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BSUM_MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "missing BSUM header"));
    }
    let mut word = [0u8; 8];
    let mut header = [0u64; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word);
    }
    let mut values = Vec::with_capacity(header[1] as usize);
    for _ in 0..header[1] {
        r.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    Ok((header[0], header[2], values))
}
