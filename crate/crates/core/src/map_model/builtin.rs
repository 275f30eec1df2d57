use super::{Branch, PiecewiseAffineMap, Rectangle};
use crate::error::{Error, Result};

/// Names accepted by [`builtin`]. `identity` is a degenerate (non-mixing)
/// fixture used to exercise refusal paths.
pub const BUILTIN_NAMES: [&str; 4] = ["doubling", "beta-2.5", "triple-2d", "identity"];

pub fn builtin(name: &str) -> Result<PiecewiseAffineMap> {
    match name {
        "doubling" => beta_like(name, 2.0),
        "beta-2.5" => beta_like(name, 2.5),
        "triple-2d" => triple_2d(),
        "identity" => {
            let b = Branch::new("1", Rectangle::unit(1), vec![1.0], vec![0.0]);
            PiecewiseAffineMap::new(name, 1.0, Rectangle::unit(1), vec![b])
        }
        other => Err(Error::UnknownMap(other.to_string())),
    }
}

/// `x ↦ βx mod 1` on `[0, 1]`, one branch per preimage of `[0, 1)`.
fn beta_like(name: &str, beta: f64) -> Result<PiecewiseAffineMap> {
    let full = beta.ceil() as usize;
    let branches = (0..full)
        .map(|k| {
            let lo = k as f64 / beta;
            let hi = ((k + 1) as f64 / beta).min(1.0);
            let dom = Rectangle::new(vec![lo], vec![hi])?;
            Ok(Branch::new((k + 1).to_string(), dom, vec![beta], vec![-(k as f64)]))
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseAffineMap::new(name, 1.0, Rectangle::unit(1), branches)
}

/// `(x, y) ↦ (3x mod 1, 3y mod 1)` with nine square branches.
fn triple_2d() -> Result<PiecewiseAffineMap> {
    let mut branches = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let dom = Rectangle::new(
                vec![i as f64 / 3.0, j as f64 / 3.0],
                vec![(i + 1) as f64 / 3.0, (j + 1) as f64 / 3.0],
            )?;
            branches.push(Branch::new(
                format!("({i},{j})"),
                dom,
                vec![3.0, 0.0, 0.0, 3.0],
                vec![-(i as f64), -(j as f64)],
            ));
        }
    }
    PiecewiseAffineMap::new("triple-2d", 1.0, Rectangle::unit(2), branches)
}
