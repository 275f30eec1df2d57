//! Leading eigenpairs, spectral gap, correlations and Green–Kubo variance.
//!
//! Pairings use two conventions. `⟨m, f⟩ = Σ_j f_j m(B_j)` integrates a
//! density against the reference measure. The left eigenvector `φ*` is a
//! list of cell weights paired with densities by the plain sum
//! `⟨φ*, f⟩ = Σ_j φ*_j f_j`, so for an untwisted operator `φ*_j = m(B_j)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::ulam_transfer::{l1_norm, TransferMatrix};

pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_GAP_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Normalization of [`SpectralData`] vectors.
pub const NORMALIZATION: &str = "<m,v> = 1, sum_j phi*_j v_j = 1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralData<T: Scalar> {
    pub lambda: T,
    /// Eigenvalue found independently by iterating the transpose.
    pub left_lambda: T,
    pub right: Vec<T>,
    pub left: Vec<T>,
    /// `‖Kv − λv‖₂ / ‖v‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_EIGEN_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}

/// Pairwise summation of `term(lo..hi)`. Naive summation of a few
/// thousand terms leaves ~10⁻¹³ noise in the pairings, enough to stall
/// power iteration at the fine tolerance.
fn pairwise_sum<T: Scalar>(lo: usize, hi: usize, term: &impl Fn(usize) -> T) -> T {
    if hi - lo <= 16 {
        return (lo..hi).map(term).fold(T::ZERO, |a, b| a + b);
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_sum(lo, mid, term) + pairwise_sum(mid, hi, term)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    pairwise_sum(0, a.len().min(b.len()), &|i| a[i] * b[i])
}

fn sum<T: Scalar>(a: &[T]) -> T {
    pairwise_sum(0, a.len(), &|i| a[i])
}

/// Scales `v` so that its pairing `pair(v)` is one, falling back to the
/// largest entry when the pairing is too small to divide by.
fn normalize_by<T: Scalar>(v: &mut [T], pair: T) {
    let scale = if pair.modulus() > 1e-300 {
        T::ONE / pair
    } else {
        let big = v.iter().copied().fold(T::ZERO, |a, b| if b.modulus() > a.modulus() { b } else { a });
        T::ONE / big
    };
    v.iter_mut().for_each(|x| *x = *x * scale);
}

/// Power iteration. `step` computes the next iterate; `pair` is the linear
/// functional used both for the eigenvalue estimate and normalization.
fn power_iterate<T: Scalar>(
    n: usize,
    opts: EigenOptions,
    start: Option<&[T]>,
    step: impl Fn(&[T], &mut [T]),
    pair: impl Fn(&[T]) -> T,
) -> Result<(T, Vec<T>, usize)> {
    let mut v = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => vec![T::ONE; n],
    };
    let p0 = pair(&v);
    normalize_by(&mut v, p0);
    let mut w = vec![T::ZERO; n];
    let mut prev: Option<T> = None;
    for it in 1..=opts.max_iter {
        step(&v, &mut w);
        if norm2(&w) == 0.0 {
            return Err(Error::ZeroIterate);
        }
        let pv = pair(&v);
        let pw = pair(&w);
        let lambda = if pv.modulus() > 1e-300 && pw.modulus() > 1e-300 {
            pw / pv
        } else {
            // Pairing degenerate: compare the largest entries instead.
            let k = (0..n).max_by(|&a, &b| v[a].modulus().total_cmp(&v[b].modulus())).unwrap_or(0);
            w[k] / v[k]
        };
        normalize_by(&mut w, pw);
        let size = w.iter().fold(0.0f64, |a, x| a.max(x.modulus()));
        let change = v.iter().zip(&w).fold(0.0f64, |a, (&x, &y)| a.max((x - y).modulus()));
        std::mem::swap(&mut v, &mut w);
        // A conserved pairing makes the eigenvalue estimate exact long
        // before the vector settles, so both must be stationary.
        if let Some(p) = prev {
            // Vector entries carry rounding noise well above 1e-14.
            if (lambda - p).modulus() < opts.tol * lambda.modulus().max(1.0) && change <= opts.tol.max(1e-13) * size {
                return Ok((lambda, v, it));
            }
        }
        prev = Some(lambda);
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, estimate: prev.map_or(f64::NAN, |l| l.modulus()) })
}

/// Leading eigenvalue with right and left eigenvectors.
pub fn leading_eigen<T: Scalar>(k: &TransferMatrix<T>, opts: EigenOptions) -> Result<SpectralData<T>> {
    let n = k.dim();
    let weights = vec![T::from_real(k.partition().cell_measure()); n];
    let (lambda, mut right, it_r) = power_iterate(n, opts, None, |v, w| k.apply_into(v, w), |v| dot(&weights, v))?;
    let mass = dot(&weights, &right);
    normalize_by(&mut right, mass);
    let (left_lambda, mut left, it_l) =
        power_iterate(n, opts, None, |v, w| k.apply_transpose_into(v, w), |v| sum(v))?;
    let pairing = dot(&left, &right);
    if pairing.modulus() < 1e-300 {
        return Err(Error::ZeroIterate);
    }
    normalize_by(&mut left, pairing);
    let kv = k.apply(&right)?;
    let diff: Vec<T> = kv.iter().zip(&right).map(|(&a, &b)| a - lambda * b).collect();
    let residual = norm2(&diff) / norm2(&right);
    Ok(SpectralData { lambda, left_lambda, right, left, residual, iterations: it_r.max(it_l) })
}

/// Leading eigenvalue and right eigenvector only (normalized `⟨m, v⟩ = 1`),
/// optionally warm-started from a nearby eigenvector.
pub fn leading_eigenvalue<T: Scalar>(k: &TransferMatrix<T>, opts: EigenOptions, start: Option<&[T]>) -> Result<(T, Vec<T>)> {
    let weights = vec![T::from_real(k.partition().cell_measure()); k.dim()];
    let (lambda, mut v, _) = power_iterate(k.dim(), opts, start, |v, w| k.apply_into(v, w), |v| dot(&weights, v))?;
    let mass = dot(&weights, &v);
    normalize_by(&mut v, mass);
    Ok((lambda, v))
}

/// Invariant density of an untwisted operator.
pub fn invariant_density(k: &TransferMatrix<f64>, opts: EigenOptions) -> Result<SpectralData<f64>> {
    if k.twist.norm() != 0.0 {
        return Err(Error::InvalidArgument("invariant density needs the untwisted operator".into()));
    }
    let sd = leading_eigen(k, opts)?;
    if (sd.lambda - 1.0).abs() > 1e-8 {
        return Err(Error::EigenvalueNotOne { lambda: sd.lambda });
    }
    Ok(sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub lambda1: f64,
    pub lambda2_modulus: f64,
    /// Fitted rate of `‖Kⁿp − v‖_{L¹} → 0` for a probability vector `p`.
    pub decay_rate_fit: f64,
    pub mixing_flag: bool,
    pub threshold: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    pub threshold: f64,
    pub max_iter: usize,
    /// Relative change of the modulus estimate that counts as converged.
    pub tol: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { threshold: DEFAULT_GAP_THRESHOLD, max_iter: 20_000, tol: 1e-5 }
    }
}

/// Below this one-step contraction the deflated operator is treated as nilpotent.
const NILPOTENT_RATIO: f64 = 1e-13;
/// Spacing of convergence checks in the deflated iteration.
const GAP_WINDOW: usize = 16;

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `|λ₂|` by power iteration on `f ↦ Kf − λ₁⟨φ*, f⟩v`.
pub fn spectral_gap(k: &TransferMatrix<f64>, sd: &SpectralData<f64>, opts: GapOptions) -> Result<GapReport> {
    let n = k.dim();
    let deflate = |f: &mut [f64]| {
        let c = dot(&sd.left, f);
        f.iter_mut().zip(&sd.right).for_each(|(x, v)| *x -= c * v);
    };
    let mut f = pseudo_random(n, 0x9a9);
    deflate(&mut f);
    let mut g = vec![0.0; n];
    let mut log_ratios: Vec<f64> = Vec::new();
    let mut estimate = None;
    let mut iterations = 0;
    let mut nf = norm2(&f);
    if nf == 0.0 {
        estimate = Some(0.0);
    }
    let mut prev_est = f64::NAN;
    while estimate.is_none() && iterations < opts.max_iter {
        iterations += 1;
        k.apply_into(&f, &mut g);
        let c = dot(&sd.left, &f);
        g.iter_mut().zip(&sd.right).for_each(|(x, v)| *x -= sd.lambda * c * v);
        let ng = norm2(&g);
        let mu = ng / nf;
        if mu < NILPOTENT_RATIO {
            estimate = Some(mu);
            break;
        }
        log_ratios.push(mu.ln());
        g.iter_mut().for_each(|x| *x /= ng);
        std::mem::swap(&mut f, &mut g);
        nf = 1.0;
        let len = log_ratios.len();
        if len >= 4 * GAP_WINDOW && len % GAP_WINDOW == 0 {
            // Averaging over a long tail smooths the rotation of a complex pair.
            let tail = &log_ratios[len / 2..];
            let est = (tail.iter().sum::<f64>() / tail.len() as f64).exp();
            if (est - prev_est).abs() <= opts.tol * est.max(1e-300) {
                estimate = Some(est);
            }
            prev_est = est;
        }
    }
    let lambda2 = match estimate {
        Some(e) => e,
        None => {
            let tail = &log_ratios[log_ratios.len() / 2..];
            let best = (tail.iter().sum::<f64>() / tail.len().max(1) as f64).exp();
            // A defective λ₂ (repeated in a product map, for instance) makes
            // the ratios converge only like 1/n. The estimate still decides
            // mixing when it sits far from the threshold.
            if sd.lambda.abs() - best <= 10.0 * opts.threshold {
                return Err(Error::NoConvergence { iterations, estimate: best });
            }
            best
        }
    };
    let decay_rate_fit = projection_decay_rate(k, sd)?;
    Ok(GapReport {
        lambda1: sd.lambda,
        lambda2_modulus: lambda2,
        decay_rate_fit,
        mixing_flag: sd.lambda.abs() - lambda2 > opts.threshold,
        threshold: opts.threshold,
        iterations,
    })
}

/// Rate of `‖Kⁿp − v‖_{L¹}` for a pseudo-random probability density `p`.
fn projection_decay_rate(k: &TransferMatrix<f64>, sd: &SpectralData<f64>) -> Result<f64> {
    let part = k.partition();
    let mut p = pseudo_random(k.dim(), 0x51ab);
    let mass = part.integrate(&p);
    p.iter_mut().for_each(|x| *x /= mass);
    let mut errs = Vec::new();
    let mut q = vec![0.0; k.dim()];
    for _ in 0..200 {
        let diff: Vec<f64> = p.iter().zip(&sd.right).map(|(a, b)| a - b).collect();
        let e = l1_norm(&diff, part);
        errs.push(e);
        // Below this the eigenvector's own error takes over.
        if e < 1e-9 * errs[0] {
            break;
        }
        k.apply_into(&p, &mut q);
        std::mem::swap(&mut p, &mut q);
    }
    Ok(envelope_rate(&errs, 1e-9 * errs[0].max(f64::MIN_POSITIVE)))
}

/// Geometric rate of the upper envelope of `|seq|` above `floor`, fitted on
/// the later half of the points. Sequences that fall below the floor at
/// once have rate zero.
pub fn envelope_rate(seq: &[f64], floor: f64) -> f64 {
    let mut env: Vec<f64> = seq.iter().map(|v| v.abs()).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let pts: Vec<(f64, f64)> = env.iter().enumerate().filter(|(_, &e)| e > floor).map(|(n, &e)| (n as f64, e.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let pts = &pts[pts.len() / 2..];
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    (num / den).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// `C₀, …, C_{n_max}`.
    pub values: Vec<f64>,
    pub decay_rate_fit: f64,
}

impl Correlations {
    /// Fitted decay no faster than the gap estimate allows (plus `10⁻²`).
    pub fn consistent_with(&self, gap: &GapReport) -> bool {
        self.decay_rate_fit <= gap.lambda2_modulus + 1e-2
    }
}

fn check_cells(k: &TransferMatrix<f64>, v: &[f64]) -> Result<()> {
    if v.len() != k.dim() {
        return Err(Error::GridMismatch(format!("vector has {} cells, operator has dimension {}", v.len(), k.dim())));
    }
    Ok(())
}

/// `Cₙ = ⟨g, Kⁿ(f·v)⟩_m − ⟨f⟩_μ⟨g⟩_μ` for `n = 0..=n_max`.
pub fn correlation_sequence(k: &TransferMatrix<f64>, sd: &SpectralData<f64>, f: &[f64], g: &[f64], n_max: usize) -> Result<Correlations> {
    check_cells(k, f)?;
    check_cells(k, g)?;
    let m = k.partition().cell_measure();
    let v = &sd.right;
    let mean = |h: &[f64]| h.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * m;
    let offset = mean(f) * mean(g);
    let mut w: Vec<f64> = f.iter().zip(v).map(|(a, b)| a * b).collect();
    let mut tmp = vec![0.0; w.len()];
    let mut values = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            k.apply_into(&w, &mut tmp);
            std::mem::swap(&mut w, &mut tmp);
        }
        values.push(dot(g, &w) * m - offset);
    }
    let scale = values.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let decay_rate_fit = envelope_rate(&values[1.min(values.len() - 1)..], 1e-12 * scale.max(f64::MIN_POSITIVE));
    Ok(Correlations { values, decay_rate_fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub sigma2: f64,
    pub c0: f64,
    /// `C₁, …, C_{truncation_n}`.
    pub correlations: Vec<f64>,
    pub truncation_n: usize,
    /// Bound on the neglected tail `Σ_{n>N} |Cₙ|`.
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenKuboOptions {
    pub tail_tol: f64,
    pub n_max: usize,
    /// Geometric decay rate for the tail bound, usually `|λ₂|`. Estimated
    /// from the iterates when absent.
    pub rate: Option<f64>,
}

impl Default for GreenKuboOptions {
    fn default() -> Self {
        Self { tail_tol: DEFAULT_TAIL_TOL, n_max: 100_000, rate: None }
    }
}

/// Largest `|∫φ dμ|` accepted as centered.
pub const CENTERING_TOL: f64 = 1e-10;

/// `σ² = C₀ + 2 Σ_{n≥1} Cₙ`, truncated once
/// `‖φ‖_∞ ‖Kⁿ(φv)‖_{L¹} < tail_tol · (1 − ρ)`.
pub fn green_kubo_variance(k: &TransferMatrix<f64>, sd: &SpectralData<f64>, phi: &[f64], opts: GreenKuboOptions) -> Result<VarianceReport> {
    check_cells(k, phi)?;
    let part = k.partition();
    let m = part.cell_measure();
    let mean = phi.iter().zip(&sd.right).map(|(a, b)| a * b).sum::<f64>() * m;
    if mean.abs() > CENTERING_TOL {
        return Err(Error::NotCentered { mean });
    }
    let sup = phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut w: Vec<f64> = phi.iter().zip(&sd.right).map(|(a, b)| a * b).collect();
    let c0 = dot(phi, &w) * m;
    let mut tmp = vec![0.0; w.len()];
    let mut correlations = Vec::new();
    let mut first_norm: Option<f64> = None;
    for n in 1..=opts.n_max {
        k.apply_into(&w, &mut tmp);
        std::mem::swap(&mut w, &mut tmp);
        correlations.push(dot(phi, &w) * m);
        let wn = l1_norm(&w, part);
        let rho = opts.rate.unwrap_or_else(|| match first_norm {
            Some(w1) if n > 1 && w1 > 0.0 => (wn / w1).powf(1.0 / (n - 1) as f64),
            _ => 0.5,
        });
        let rho = rho.clamp(0.0, 0.999);
        first_norm.get_or_insert(wn);
        let bound = sup * wn;
        if bound < opts.tail_tol * (1.0 - rho) {
            let sigma2 = c0 + 2.0 * correlations.iter().sum::<f64>();
            return Ok(VarianceReport { sigma2, c0, truncation_n: n, truncation_bound: bound / (1.0 - rho), correlations });
        }
    }
    Err(Error::NonSummable { n_max: opts.n_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UlamPartition;
    use crate::map_model::{builtin, Rectangle};
    use crate::ulam_transfer::{build_ulam, twist, twist_real, AssemblyMethod};
    use num_complex::Complex64;

    fn ulam(name: &str, shape: Vec<usize>) -> TransferMatrix {
        let p = UlamPartition::new(Rectangle::unit(shape.len()), shape).unwrap();
        build_ulam(&builtin(name).unwrap(), &p, &AssemblyMethod::ExactAffine).unwrap()
    }

    fn digit(n: usize) -> Vec<f64> {
        (0..n).map(|j| if j < n / 2 { -0.5 } else { 0.5 }).collect()
    }

    #[test]
    fn doubling_invariant_density_is_uniform() {
        for n in [2, 16, 1024] {
            let sd = invariant_density(&ulam("doubling", vec![n]), EigenOptions::default()).unwrap();
            assert!((sd.lambda - 1.0).abs() < 1e-14);
            assert!(sd.right.iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(sd.left.iter().all(|w| (w - 1.0 / n as f64).abs() < 1e-14));
        }
    }

    #[test]
    fn twisted_two_cell_eigenvalue() {
        let k = twist_real(&ulam("doubling", vec![2]), &[-0.5, 0.5], 1.0).unwrap();
        let sd = leading_eigen(&k, EigenOptions::default()).unwrap();
        assert!((sd.lambda - 0.5f64.cosh()).abs() < 1e-14);
        assert!((sd.lambda - 1.127_626_0).abs() < 1e-7);
        assert!((dot(&sd.left, &sd.right) - 1.0).abs() < 1e-10);
        assert!(sd.right.iter().chain(&sd.left).all(|&x| x >= 0.0));
        assert!((sd.lambda - sd.left_lambda).abs() < 1e-10);
    }

    #[test]
    fn complex_twist_matches_cosh() {
        let k = twist(&ulam("doubling", vec![64]), &digit(64), Complex64::new(0.0, 0.3)).unwrap();
        let sd = leading_eigen(&k, EigenOptions::default()).unwrap();
        let want = (Complex64::new(0.0, 0.3) / 2.0).cosh();
        assert!((sd.lambda - want).norm() < 1e-13);
    }

    #[test]
    fn identity_is_degenerate() {
        let p = UlamPartition::new(Rectangle::unit(1), vec![8]).unwrap();
        let k = TransferMatrix::identity(p);
        let sd = invariant_density(&k, EigenOptions::default()).unwrap();
        assert_eq!(sd.lambda, 1.0);
        let gap = spectral_gap(&k, &sd, GapOptions::default()).unwrap();
        assert!((gap.lambda2_modulus - 1.0).abs() < 1e-12);
        assert!(!gap.mixing_flag);
    }

    #[test]
    fn doubling_gap_is_nilpotent() {
        let k = ulam("doubling", vec![256]);
        let sd = invariant_density(&k, EigenOptions::default()).unwrap();
        let gap = spectral_gap(&k, &sd, GapOptions::default()).unwrap();
        assert!(gap.lambda2_modulus <= 1e-8, "{gap:?}");
        assert!(gap.mixing_flag);
    }

    #[test]
    fn beta_gap_and_correlations() {
        let k = ulam("beta-2.5", vec![512]);
        let sd = invariant_density(&k, EigenOptions::default()).unwrap();
        assert!(sd.right.iter().all(|&v| v >= -1e-12));
        let gap = spectral_gap(&k, &sd, GapOptions::default()).unwrap();
        assert!(gap.lambda2_modulus < 1.0 && gap.mixing_flag, "{gap:?}");
        assert!(gap.decay_rate_fit <= gap.lambda2_modulus + 1e-2, "{gap:?}");
        let f: Vec<f64> = (0..512).map(|j| (j as f64 / 512.0 * 6.0).sin()).collect();
        let c = correlation_sequence(&k, &sd, &f, &f, 60).unwrap();
        assert!(c.consistent_with(&gap), "{} vs {}", c.decay_rate_fit, gap.lambda2_modulus);
        let ones = vec![1.0; 512];
        let c1 = correlation_sequence(&k, &sd, &f, &ones, 10).unwrap();
        assert!(c1.values.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn digit_correlations_and_variance() {
        let k = ulam("doubling", vec![1024]);
        let sd = invariant_density(&k, EigenOptions::default()).unwrap();
        let phi = digit(1024);
        let c = correlation_sequence(&k, &sd, &phi, &phi, 5).unwrap();
        assert!((c.values[0] - 0.25).abs() < 1e-14);
        assert!(c.values[1..].iter().all(|v| v.abs() < 1e-15));
        let v = green_kubo_variance(&k, &sd, &phi, GreenKuboOptions::default()).unwrap();
        assert!((v.sigma2 - 0.25).abs() < 1e-14);
        assert_eq!(v.truncation_n, 1);
        let zero = green_kubo_variance(&k, &sd, &vec![0.0; 1024], GreenKuboOptions::default()).unwrap();
        assert_eq!(zero.sigma2, 0.0);
        let shifted: Vec<f64> = phi.iter().map(|x| x + 0.1).collect();
        assert!(matches!(green_kubo_variance(&k, &sd, &shifted, GreenKuboOptions::default()), Err(Error::NotCentered { .. })));
    }

    #[test]
    fn coboundary_variance_vanishes() {
        let n = 256;
        let k = ulam("doubling", vec![n]);
        let sd = invariant_density(&k, EigenOptions::default()).unwrap();
        // ψ = 1[0,1/2), ψ∘T = 1 on [0,1/4) ∪ [1/2,3/4).
        let phi: Vec<f64> = (0..n)
            .map(|j| {
                let x = (j as f64 + 0.5) / n as f64;
                let psi = f64::from(x < 0.5);
                let psi_t = f64::from((2.0 * x).fract() < 0.5);
                psi - psi_t
            })
            .collect();
        let v = green_kubo_variance(&k, &sd, &phi, GreenKuboOptions::default()).unwrap();
        assert!(v.sigma2.abs() <= 1e-8, "{v:?}");
    }

    #[test]
    fn envelope_rate_recovers_geometric() {
        let seq: Vec<f64> = (0..40).map(|n| 0.7f64.powi(n) * if n % 3 == 0 { 1.0 } else { 0.5 }).collect();
        assert!((envelope_rate(&seq, 1e-20) - 0.7).abs() < 1e-2);
        assert_eq!(envelope_rate(&[1.0, 0.0, 0.0], 1e-12), 0.0);
    }
}
