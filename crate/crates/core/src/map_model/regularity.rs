use serde::{Deserialize, Serialize};

use super::PiecewiseAffineMap;
use crate::error::{Error, Result};

/// Expansion, distortion and boundary-complexity constants of a map, and
/// the combined constant `η₀ = s^α + 4s/(1−s) · Y · γ_{d−1}/γ_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub s: f64,
    pub distortion_c: f64,
    #[serde(rename = "Y")]
    pub y: u64,
    pub alpha: f64,
    pub dim: usize,
    pub eta0: f64,
    pub gamma_prev: f64,
    pub gamma_d: f64,
    pub epsilon0: f64,
    pub passes: bool,
}

impl RegularityReport {
    /// Recomputes η₀ from the stored fields.
    pub fn reassembled_eta0(&self) -> f64 {
        eta0_formula(self.s, self.alpha, self.y, self.gamma_prev, self.gamma_d)
    }
}

/// Volume of the unit ball in `ℝ^d`, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    (half * std::f64::consts::PI.ln() - statrs::function::gamma::ln_gamma(half + 1.0)).exp()
}

fn eta0_formula(s: f64, alpha: f64, y: u64, gamma_prev: f64, gamma_d: f64) -> f64 {
    s.powf(alpha) + 4.0 * s / (1.0 - s) * y as f64 * (gamma_prev / gamma_d)
}

/// Fills a report from raw inputs; `passes` is `s < 1 && η₀ < 1`.
pub fn eta0_from_parts(s: f64, y: u64, alpha: f64, dim: usize, distortion_c: f64, epsilon0: f64) -> Result<RegularityReport> {
    if !(s < 1.0) {
        return Err(Error::ExpansionViolation { s });
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let gamma_prev = unit_ball_volume(dim - 1);
    let gamma_d = unit_ball_volume(dim);
    let eta0 = eta0_formula(s, alpha, y, gamma_prev, gamma_d);
    Ok(RegularityReport {
        s,
        distortion_c,
        y,
        alpha,
        dim,
        eta0,
        gamma_prev,
        gamma_d,
        epsilon0,
        passes: eta0 < 1.0,
    })
}

/// Regularity report for a map. `η₀ ≥ 1` is reported, not raised.
pub fn eta0(map: &PiecewiseAffineMap) -> Result<RegularityReport> {
    let s = map.expansion_constant()?;
    eta0_from_parts(s, complexity_y(map), map.alpha, map.dim(), map.distortion_constant(), map.default_epsilon0())
}

/// Boundary complexity `Y(T)`: the largest number of rectangle faces,
/// counted once per branch that owns them, passing through a single point.
///
/// Faces of a box are closed axis-aligned slabs; the maximum of the count is
/// attained at a vertex of the arrangement, so the candidates are all points
/// whose coordinates are face coordinates.
pub fn complexity_y(map: &PiecewiseAffineMap) -> u64 {
    let d = map.dim();
    let coords: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut c: Vec<f64> = map.branches.iter().flat_map(|b| [b.domain.lower[k], b.domain.upper[k]]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();
    let total: usize = coords.iter().map(Vec::len).product();
    let mut best = 0u64;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    for _ in 0..total {
        for k in 0..d {
            point[k] = coords[k][idx[k]];
        }
        let count: u64 = map.branches.iter().map(|b| faces_through(&b.domain.lower, &b.domain.upper, &point)).sum();
        best = best.max(count);
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < coords[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    best
}

fn faces_through(lower: &[f64], upper: &[f64], p: &[f64]) -> u64 {
    let inside = p.iter().zip(lower.iter().zip(upper)).all(|(&v, (&lo, &hi))| lo <= v && v <= hi);
    if !inside {
        return 0;
    }
    p.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| u64::from(v == lo) + u64::from(v == hi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::{builtin, Branch, Rectangle};

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(0) - 1.0).abs() < 1e-15);
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.188_790_204_786_391).abs() < 1e-13);
    }

    #[test]
    fn ball_volume_recurrence() {
        for d in 2..=10 {
            let lhs = unit_ball_volume(d);
            let rhs = unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64;
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0), "d={d}");
        }
    }

    #[test]
    fn eta0_hand_values() {
        let r = eta0_from_parts(0.1, 2, 1.0, 2, 0.0, 0.01).unwrap();
        assert!((r.eta0 - 0.665_884).abs() < 5e-7, "{}", r.eta0);
        assert!(r.passes);
        let r = eta0_from_parts(0.5, 2, 1.0, 1, 0.0, 0.01).unwrap();
        assert!((r.eta0 - 4.5).abs() < 1e-12);
        assert!(!r.passes);
        let r = eta0_from_parts(1e-12, 3, 0.5, 2, 0.0, 0.01).unwrap();
        assert!(r.eta0 < 1e-5);
        assert!(matches!(eta0_from_parts(1.0, 2, 1.0, 1, 0.0, 0.0), Err(Error::ExpansionViolation { .. })));
    }

    #[test]
    fn complexity_of_builtins() {
        assert_eq!(complexity_y(&builtin("doubling").unwrap()), 2);
        assert_eq!(complexity_y(&builtin("beta-2.5").unwrap()), 2);
        assert_eq!(complexity_y(&builtin("triple-2d").unwrap()), 8);
    }

    #[test]
    fn complexity_of_offset_rectangles() {
        // Two stacked strips whose vertical faces do not line up.
        let m = crate::map_model::PiecewiseAffineMap::new(
            "bricks",
            1.0,
            Rectangle::unit(2),
            vec![
                Branch::new("a", Rectangle::new(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap(), vec![1.0, 0.0, 0.0, 2.0], vec![0.0, 0.0]),
                Branch::new("b", Rectangle::new(vec![0.0, 0.5], vec![1.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0, 2.0], vec![0.0, -1.0]),
            ],
        )
        .unwrap();
        // Corner (0, 1/2): two faces of each strip.
        assert_eq!(complexity_y(&m), 4);
    }

    #[test]
    fn report_reassembles() {
        for name in ["doubling", "beta-2.5", "triple-2d"] {
            let r = eta0(&builtin(name).unwrap()).unwrap();
            assert_eq!(r.eta0, r.reassembled_eta0());
        }
        let r = eta0(&builtin("doubling").unwrap()).unwrap();
        assert!((r.eta0 - 4.5).abs() < 1e-12);
    }
}
