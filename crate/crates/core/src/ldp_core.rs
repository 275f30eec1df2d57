//! The pressure curve `Λ(θ) = log λ(θ)` of the twisted operators, its
//! derivatives at zero, the Legendre transform `c(ε)`, and the
//! characteristic-function check behind the central limit theorem.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quasi_holder::golden_min;
use crate::spectral::{leading_eigen, leading_eigenvalue, spectral_gap, EigenOptions, GapOptions, GapReport};
use crate::ulam_transfer::{twist, twist_real, TransferMatrix};

/// Smallest σ² for which the rate function is computed.
pub const ZERO_VARIANCE_TOL: f64 = 1e-8;
/// Second divided differences of `Λ` above this count as convex.
pub const CONVEXITY_TOL: f64 = -1e-8;
/// Relative margin kept between the ε grid and `ε_±`.
pub const EPS_MARGIN: f64 = 0.02;
/// Eigen tolerance for finite differences and Legendre refinement.
pub const FINE_TOL: f64 = 1e-14;

/// `θ ↦ K_θ` for a fixed untwisted matrix and cell observable.
#[derive(Debug, Clone)]
pub struct TiltedFamily<'a> {
    pub base: &'a TransferMatrix<f64>,
    pub phi: Vec<f64>,
    pub opts: EigenOptions,
}

impl<'a> TiltedFamily<'a> {
    pub fn new(base: &'a TransferMatrix<f64>, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != base.dim() {
            return Err(Error::GridMismatch(format!("observable has {} cells, matrix has dimension {}", phi.len(), base.dim())));
        }
        Ok(Self { base, phi, opts: EigenOptions::default() })
    }

    pub fn with_tol(&self, tol: f64) -> Self {
        Self { opts: EigenOptions { tol, ..self.opts }, ..self.clone() }
    }

    pub fn lambda(&self, theta: f64) -> Result<f64> {
        Ok(leading_eigenvalue(&twist_real(self.base, &self.phi, theta)?, self.opts, None)?.0)
    }

    /// `λ(θ)`, starting from and updating a nearby eigenvector.
    pub fn lambda_warm(&self, theta: f64, start: &mut Vec<f64>) -> Result<f64> {
        let k = twist_real(self.base, &self.phi, theta)?;
        let (lambda, v) = leading_eigenvalue(&k, self.opts, Some(start.as_slice()))?;
        *start = v;
        Ok(lambda)
    }

    pub fn lambda_complex(&self, z: Complex64) -> Result<Complex64> {
        Ok(leading_eigenvalue(&twist(self.base, &self.phi, z)?, self.opts, None)?.0)
    }

    /// `λ(θ)` and `|λ₂(θ)|` of the twisted matrix.
    pub fn lambda_and_gap(&self, theta: f64, gap: GapOptions) -> Result<(f64, f64)> {
        let k = twist_real(self.base, &self.phi, theta)?;
        let sd = leading_eigen(&k, self.opts)?;
        let g = spectral_gap(&k, &sd, gap)?;
        Ok((sd.lambda, g.lambda2_modulus))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCurve {
    pub theta_grid: Vec<f64>,
    pub lambda_values: Vec<f64>,
    #[serde(rename = "Lambda_values")]
    pub big_lambda_values: Vec<f64>,
    /// `|λ₂(θ)|`; NaN where the twisted eigenproblem failed.
    pub gap_values: Vec<f64>,
    pub valid_window: (f64, f64),
}

impl LambdaCurve {
    pub fn theta_cap(&self) -> f64 {
        self.valid_window.1
    }

    fn in_window(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.theta_grid.len()).filter(|&i| self.theta_grid[i].abs() <= self.theta_cap() * (1.0 + 1e-12))
    }

    /// Smallest second divided difference of `Λ` inside the valid window.
    pub fn min_second_difference(&self) -> f64 {
        let idx: Vec<usize> = self.in_window().collect();
        idx.windows(3).map(|w| second_difference(&self.theta_grid, &self.big_lambda_values, w[1])).fold(f64::INFINITY, f64::min)
    }
}

fn second_difference(theta: &[f64], big: &[f64], i: usize) -> f64 {
    let (h1, h2) = (theta[i] - theta[i - 1], theta[i + 1] - theta[i]);
    2.0 * ((big[i + 1] - big[i]) / h2 - (big[i] - big[i - 1]) / h1) / (h1 + h2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub theta_max: f64,
    pub n_theta: usize,
    pub gap: GapOptions,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { theta_max: 2.0, n_theta: 21, gap: GapOptions::default() }
    }
}

/// Evaluates `λ(θ)` on a symmetric grid and trims the valid window.
///
/// `base_gap` is the gap report of the untwisted matrix; a non-mixing
/// operator is refused.
pub fn lambda_curve(family: &TiltedFamily, base_gap: &GapReport, opts: CurveOptions) -> Result<LambdaCurve> {
    if !base_gap.mixing_flag {
        return Err(Error::NotMixing { lambda1: base_gap.lambda1, lambda2: base_gap.lambda2_modulus });
    }
    let n = opts.n_theta;
    if n < 9 || n % 2 == 0 || !(opts.theta_max > 0.0) {
        return Err(Error::InvalidArgument(format!("need an odd n_theta ≥ 9 and θ_max > 0, got {n} and {}", opts.theta_max)));
    }
    let mid = n / 2;
    let theta_grid: Vec<f64> = (0..n)
        .map(|i| if i == mid { 0.0 } else { opts.theta_max * (i as f64 - mid as f64) / mid as f64 })
        .collect();
    let evals: Vec<(f64, f64)> = theta_grid
        .par_iter()
        .map(|&t| family.lambda_and_gap(t, opts.gap).unwrap_or((f64::NAN, f64::NAN)))
        .collect();
    let lambda_values: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let gap_values: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let big_lambda_values: Vec<f64> = lambda_values.iter().map(|l| l.ln()).collect();

    let point_ok = |i: usize| {
        let (l, g) = evals[i];
        l.is_finite() && l > 0.0 && g.is_finite() && l - g > opts.gap.threshold * l
    };
    let convex_at = |i: usize| second_difference(&theta_grid, &big_lambda_values, i) >= CONVEXITY_TOL;
    let mut edge = 0;
    if point_ok(mid) {
        for r in 1..=mid {
            let ok = point_ok(mid - r) && point_ok(mid + r) && convex_at(mid - r + 1) && convex_at(mid + r - 1);
            if !ok {
                break;
            }
            edge = r;
        }
    }
    if edge == 0 {
        return Err(Error::WindowCollapse);
    }
    let cap = theta_grid[mid + edge];
    Ok(LambdaCurve { theta_grid, lambda_values, big_lambda_values, gap_values, valid_window: (-cap, cap) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub h: f64,
    pub first: f64,
    pub second: f64,
    pub sigma2: f64,
    /// `|Λ″(0) − σ²| / max(σ², 10⁻¹²)`.
    pub rel_error: f64,
    pub passes: bool,
}

/// Fourth-order central differences of `Λ` at 0 from fresh eigenvalues at
/// `±h, ±2h`.
pub fn check_derivatives(family: &TiltedFamily, curve: &LambdaCurve, sigma2: f64, h: f64) -> Result<DerivativeReport> {
    if !(h > 0.0) || 2.0 * h > curve.theta_cap() {
        return Err(Error::WindowTooNarrow { window: curve.theta_cap(), h });
    }
    let fine = family.with_tol(FINE_TOL);
    let big = |t: f64| fine.lambda(t).map(f64::ln);
    let (m2, m1, z, p1, p2) = (big(-2.0 * h)?, big(-h)?, big(0.0)?, big(h)?, big(2.0 * h)?);
    let first = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let second = (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * h * h);
    let rel_error = (second - sigma2).abs() / sigma2.max(1e-12);
    Ok(DerivativeReport { h, first, second, sigma2, rel_error, passes: first.abs() <= 1e-6 && rel_error <= 1e-3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub theta_cap: f64,
    pub eps_minus: f64,
    pub eps_plus: f64,
    pub eps_grid: Vec<f64>,
    pub c_values: Vec<f64>,
    pub argmax_theta: Vec<f64>,
    pub lambda_at_argmax: Vec<f64>,
}

impl RateFunction {
    /// `c(ε)` for an ε on the grid.
    pub fn value_at(&self, eps: f64) -> Result<f64> {
        self.eps_grid
            .iter()
            .position(|&e| (e - eps).abs() <= 1e-12 * eps.abs().max(1.0))
            .map(|i| self.c_values[i])
            .ok_or(Error::EpsilonMismatch { eps })
    }
}

/// ε grid: `n_eps` uniform points per half inside `(ε₋, ε₊)` with a 2%
/// margin, plus 0 and any `extra` values strictly inside the interval.
pub fn eps_grid(eps_minus: f64, eps_plus: f64, n_eps: usize, extra: &[f64]) -> Vec<f64> {
    let half = (n_eps / 2).max(1);
    let lo = eps_minus * (1.0 - EPS_MARGIN);
    let hi = eps_plus * (1.0 - EPS_MARGIN);
    let mut grid: Vec<f64> = (0..half).map(|i| lo * (half - i) as f64 / half as f64).collect();
    grid.push(0.0);
    grid.extend((1..=half).map(|i| hi * i as f64 / half as f64));
    grid.extend(extra.iter().copied().filter(|&e| e > eps_minus && e < eps_plus));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    grid
}

/// Legendre transform `c(ε) = sup_{|θ|≤θ_Λ} {θε − Λ(θ)}` on the ε grid.
pub fn rate_function(family: &TiltedFamily, curve: &LambdaCurve, sigma2: f64, n_eps: usize, extra: &[f64]) -> Result<RateFunction> {
    if !(sigma2 > ZERO_VARIANCE_TOL) {
        return Err(Error::ZeroVariance { sigma2 });
    }
    let idx: Vec<usize> = curve.in_window().collect();
    for w in idx.windows(3) {
        if second_difference(&curve.theta_grid, &curve.big_lambda_values, w[1]) < CONVEXITY_TOL {
            return Err(Error::NonConvexCurve { theta: curve.theta_grid[w[1]] });
        }
    }
    let cap = curve.theta_cap();
    let (i_lo, i_hi) = (idx[0], idx[idx.len() - 1]);
    let eps_plus = curve.big_lambda_values[i_hi] / cap;
    let eps_minus = curve.big_lambda_values[i_lo] / -cap;
    let grid = eps_grid(eps_minus, eps_plus, n_eps, extra);
    let fine = family.with_tol(FINE_TOL);

    let solved: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&eps| {
            if eps == 0.0 {
                let l0 = fine.lambda(0.0)?;
                return Ok((0.0, -l0.ln(), l0));
            }
            let coarse = idx
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    let fa = curve.theta_grid[a] * eps - curve.big_lambda_values[a];
                    let fb = curve.theta_grid[b] * eps - curve.big_lambda_values[b];
                    fa.total_cmp(&fb)
                })
                .expect("window is not empty");
            let lo = curve.theta_grid[coarse.saturating_sub(1).max(i_lo)];
            let hi = curve.theta_grid[(coarse + 1).min(i_hi)];
            let mut start = Vec::new();
            let objective = |t: f64| match fine.lambda_warm(t, &mut start) {
                Ok(l) => l.ln() - t * eps,
                Err(_) => f64::INFINITY,
            };
            let theta = golden_min(objective, lo, hi, 1e-10);
            let lam = fine.lambda(theta)?;
            Ok((theta, theta * eps - lam.ln(), lam))
        })
        .collect::<Result<_>>()?;
    Ok(RateFunction {
        theta_cap: cap,
        eps_minus,
        eps_plus,
        eps_grid: grid,
        c_values: solved.iter().map(|s| s.1).collect(),
        argmax_theta: solved.iter().map(|s| s.0).collect(),
        lambda_at_argmax: solved.iter().map(|s| s.2).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltCheck {
    pub n: u32,
    pub t_grid: Vec<f64>,
    pub lhs: Vec<Complex64>,
    pub rhs: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub max_abs_error: f64,
}

/// Compares `λ(it/√n)ⁿ` with `e^{−t²σ²/2}` for every `n` in `schedule`.
pub fn clt_characteristic_check(family: &TiltedFamily, sigma2: f64, t_grid: &[f64], schedule: &[u32]) -> Result<Vec<CltCheck>> {
    if t_grid.iter().any(|t| t.abs() > 3.0) {
        return Err(Error::InvalidArgument("t grid must lie in [−3, 3]".into()));
    }
    let fine = family.with_tol(FINE_TOL);
    schedule
        .iter()
        .map(|&n| {
            let lhs = t_grid
                .par_iter()
                .map(|&t| {
                    let z = Complex64::new(0.0, t / (n as f64).sqrt());
                    match fine.lambda_complex(z) {
                        Ok(l) => Ok(l.powu(n)),
                        Err(Error::NoConvergence { estimate, .. }) => Err(Error::ComplexEigenFailure { re: estimate, im: z.im }),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let rhs: Vec<f64> = t_grid.iter().map(|t| (-t * t * sigma2 / 2.0).exp()).collect();
            let abs_errors: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| (l - r).norm()).collect();
            let max_abs_error = abs_errors.iter().copied().fold(0.0, f64::max);
            Ok(CltCheck { n, t_grid: t_grid.to_vec(), lhs, rhs, abs_errors, max_abs_error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UlamPartition;
    use crate::map_model::{builtin, Rectangle};
    use crate::spectral::invariant_density;
    use crate::ulam_transfer::{build_ulam, AssemblyMethod};

    fn doubling(n: usize) -> TransferMatrix {
        let p = UlamPartition::new(Rectangle::unit(1), vec![n]).unwrap();
        build_ulam(&builtin("doubling").unwrap(), &p, &AssemblyMethod::ExactAffine).unwrap()
    }

    fn digit(n: usize) -> Vec<f64> {
        (0..n).map(|j| if j < n / 2 { -0.5 } else { 0.5 }).collect()
    }

    fn base_gap(k: &TransferMatrix) -> GapReport {
        let sd = invariant_density(k, EigenOptions::default()).unwrap();
        spectral_gap(k, &sd, GapOptions::default()).unwrap()
    }

    #[test]
    fn digit_curve_matches_cosh() {
        let k = doubling(64);
        let fam = TiltedFamily::new(&k, digit(64)).unwrap();
        let curve = lambda_curve(&fam, &base_gap(&k), CurveOptions::default()).unwrap();
        for (t, l) in curve.theta_grid.iter().zip(&curve.lambda_values) {
            assert!((l - (t / 2.0).cosh()).abs() < 1e-10, "θ={t}");
        }
        let mid = curve.theta_grid.len() / 2;
        assert!(curve.big_lambda_values[mid].abs() < 1e-14);
        assert_eq!(curve.valid_window, (-2.0, 2.0));
        let n = curve.theta_grid.len();
        for i in 0..n {
            assert!((curve.big_lambda_values[i] - curve.big_lambda_values[n - 1 - i]).abs() < 1e-12);
        }
        assert!((fam.lambda(1.0).unwrap().ln() - 0.120_114_5).abs() < 1e-7);
    }

    #[test]
    fn identity_refused() {
        let p = UlamPartition::new(Rectangle::unit(1), vec![4]).unwrap();
        let k = TransferMatrix::identity(p);
        let fam = TiltedFamily::new(&k, digit(4)).unwrap();
        assert!(matches!(lambda_curve(&fam, &base_gap(&k), CurveOptions::default()), Err(Error::NotMixing { .. })));
    }

    #[test]
    fn derivatives_and_scaling() {
        let k = doubling(32);
        let g = base_gap(&k);
        let fam = TiltedFamily::new(&k, digit(32)).unwrap();
        let curve = lambda_curve(&fam, &g, CurveOptions::default()).unwrap();
        let d = check_derivatives(&fam, &curve, 0.25, 1e-3).unwrap();
        assert!(d.passes, "{d:?}");
        let fam2 = TiltedFamily::new(&k, digit(32).iter().map(|x| 2.0 * x).collect()).unwrap();
        let curve2 = lambda_curve(&fam2, &g, CurveOptions { theta_max: 1.0, ..Default::default() }).unwrap();
        let d2 = check_derivatives(&fam2, &curve2, 1.0, 1e-3).unwrap();
        assert!((d2.second / d.second - 4.0).abs() < 1e-4);
        assert!(matches!(check_derivatives(&fam, &curve, 0.25, 1.5), Err(Error::WindowTooNarrow { .. })));
        let zero = TiltedFamily::new(&k, vec![0.0; 32]).unwrap();
        let cz = lambda_curve(&zero, &g, CurveOptions::default()).unwrap();
        let dz = check_derivatives(&zero, &cz, 0.0, 1e-3).unwrap();
        assert!(dz.first.abs() < 1e-9 && dz.second.abs() < 1e-6);
    }

    #[test]
    fn digit_rate_function() {
        let k = doubling(16);
        let fam = TiltedFamily::new(&k, digit(16)).unwrap();
        let curve = lambda_curve(&fam, &base_gap(&k), CurveOptions::default()).unwrap();
        let rf = rate_function(&fam, &curve, 0.25, 20, &[0.1, -0.1]).unwrap();
        let cramer = |e: f64| (0.5 + e) * (1.0 + 2.0 * e).ln() + (0.5 - e) * (1.0 - 2.0 * e).ln();
        assert!((rf.value_at(0.1).unwrap() - 0.020_135_5).abs() < 1e-6);
        assert!((rf.value_at(0.1).unwrap() - cramer(0.1)).abs() < 1e-12);
        assert_eq!(rf.value_at(0.0).unwrap().abs() < 1e-15, true);
        for (i, &e) in rf.eps_grid.iter().enumerate() {
            let c = rf.c_values[i];
            assert!((c - rf.value_at(-e).unwrap()).abs() < 1e-8);
            assert_eq!(c, rf.argmax_theta[i] * e - rf.lambda_at_argmax[i].ln());
            if e != 0.0 {
                assert!(c > 0.0);
                assert!((c - cramer(e)).abs() < 1e-10, "ε={e}");
            }
        }
        assert!(matches!(rf.value_at(0.123), Err(Error::EpsilonMismatch { .. })));
        assert!(matches!(rate_function(&fam, &curve, 1e-9, 20, &[]), Err(Error::ZeroVariance { .. })));
    }

    #[test]
    fn clt_examples() {
        let k = doubling(64);
        let fam = TiltedFamily::new(&k, digit(64)).unwrap();
        let t: Vec<f64> = (0..=12).map(|i| -3.0 + 0.5 * i as f64).collect();
        let checks = clt_characteristic_check(&fam, 0.25, &t, &[100, 400]).unwrap();
        for c in &checks {
            for (ti, l) in c.t_grid.iter().zip(&c.lhs) {
                let oracle = (ti / (2.0 * (c.n as f64).sqrt())).cos().powi(c.n as i32);
                assert!((l - oracle).norm() < 1e-10);
            }
            assert!((c.rhs[8] - 0.882_496_9).abs() < 1e-7);
            assert!((c.lhs[6] - 1.0).norm() < 1e-14);
        }
        assert!(checks[1].max_abs_error <= 0.25 * checks[0].max_abs_error);
    }
}
