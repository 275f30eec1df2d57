use std::fmt;
use std::sync::Arc;

use evalexpr::{build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value};

use super::{PiecewiseAffineMap, Rectangle};
use crate::error::{Error, Result};
use crate::grid::UlamPartition;

/// Sub-samples per axis used when projecting a pointwise observable onto cells.
const PROJECTION_SUBSAMPLES: usize = 4;

/// A bounded real observable `φ`, stored as a raw representation minus a
/// constant shift (the shift is how centering is recorded).
#[derive(Clone)]
pub struct Observable {
    pub kind: ObservableKind,
    pub shift: f64,
    bound: f64,
}

#[derive(Clone)]
pub enum ObservableKind {
    /// Piecewise constant on a product grid.
    Cells { grid: UlamPartition, values: Vec<f64> },
    /// Closed-form expression in `x`, `y`, `z`.
    Expr { source: String, tree: Arc<Node<DefaultNumericTypes>> },
    /// `ψ − ψ∘T`.
    Coboundary { psi: Box<Observable>, map: Arc<PiecewiseAffineMap> },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ObservableKind::Cells { grid, .. } => format!("Cells{:?}", grid.shape),
            ObservableKind::Expr { source, .. } => format!("Expr({source})"),
            ObservableKind::Coboundary { psi, .. } => format!("Coboundary({psi:?})"),
        };
        f.debug_struct("Observable").field("kind", &kind).field("shift", &self.shift).field("bound", &self.bound).finish()
    }
}

const VAR_NAMES: [&str; 3] = ["x", "y", "z"];

struct PointContext {
    values: Vec<Value<DefaultNumericTypes>>,
}

impl Context for PointContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value<DefaultNumericTypes>> {
        VAR_NAMES.iter().position(|&n| n == identifier).and_then(|k| self.values.get(k))
    }

    fn call_function(&self, identifier: &str, _argument: &Value<DefaultNumericTypes>) -> EvalexprResult<Value<DefaultNumericTypes>, DefaultNumericTypes> {
        Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Ok(())
    }
}

fn eval_tree(tree: &Node<DefaultNumericTypes>, x: &[f64]) -> Result<f64> {
    let ctx = PointContext { values: x.iter().map(|&v| Value::Float(v)).collect() };
    match tree.eval_with_context(&ctx) {
        Ok(Value::Float(v)) => Ok(v),
        Ok(Value::Int(v)) => Ok(v as f64),
        Ok(other) => Err(Error::Expression(format!("expression produced non-numeric value {other:?}"))),
        Err(e) => Err(Error::Expression(e.to_string())),
    }
}

impl Observable {
    pub fn from_cells(grid: UlamPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { kind: ObservableKind::Cells { grid, values }, shift: 0.0, bound })
    }

    /// Indicator of the upper half of the first axis (uncentered).
    pub fn digit(phase_space: &Rectangle) -> Self {
        let mut shape = vec![1; phase_space.dim()];
        shape[0] = 2;
        let grid = UlamPartition::new(phase_space.clone(), shape).expect("nonempty shape");
        let mut values = vec![0.0; grid.len()];
        for (j, v) in values.iter_mut().enumerate() {
            *v = grid.multi_index(j)[0] as f64;
        }
        Self::from_cells(grid, values).expect("matching length")
    }

    /// Parses an expression in the variables `x`, `y`, `z`; its sup norm is
    /// estimated on a lattice of midpoints.
    pub fn expr(source: &str, phase_space: &Rectangle) -> Result<Self> {
        if phase_space.dim() > VAR_NAMES.len() {
            return Err(Error::Expression(format!("expressions support at most {} dimensions", VAR_NAMES.len())));
        }
        let tree = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| Error::Expression(e.to_string()))?;
        let per_axis = match phase_space.dim() {
            1 => 4096,
            2 => 64,
            _ => 16,
        };
        let lattice = UlamPartition::new(phase_space.clone(), vec![per_axis; phase_space.dim()])?;
        let mut bound = 0.0f64;
        for j in 0..lattice.len() {
            bound = bound.max(eval_tree(&tree, &lattice.midpoint(j))?.abs());
        }
        Ok(Self { kind: ObservableKind::Expr { source: source.to_string(), tree: Arc::new(tree) }, shift: 0.0, bound })
    }

    pub fn coboundary(psi: Observable, map: Arc<PiecewiseAffineMap>) -> Self {
        let bound = 2.0 * psi.bound();
        Self { kind: ObservableKind::Coboundary { psi: Box::new(psi), map }, shift: 0.0, bound }
    }

    /// Returns `self − c`.
    pub fn shifted(mut self, c: f64) -> Self {
        self.shift += c;
        self
    }

    /// Returns `a·self`.
    pub fn scaled(&self, a: f64) -> Self {
        let kind = match &self.kind {
            ObservableKind::Cells { grid, values } => {
                ObservableKind::Cells { grid: grid.clone(), values: values.iter().map(|v| a * v).collect() }
            }
            ObservableKind::Expr { source, .. } => {
                let src = format!("({a:?}) * ({source})");
                let tree = build_operator_tree::<DefaultNumericTypes>(&src).expect("scaled expression parses");
                ObservableKind::Expr { source: src, tree: Arc::new(tree) }
            }
            ObservableKind::Coboundary { psi, map } => {
                ObservableKind::Coboundary { psi: Box::new(psi.scaled(a)), map: map.clone() }
            }
        };
        Self { kind, shift: a * self.shift, bound: a.abs() * self.bound }
    }

    /// Sup-norm bound of the raw representation plus the shift.
    pub fn bound(&self) -> f64 {
        self.bound + self.shift.abs()
    }

    fn raw_value(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            ObservableKind::Cells { grid, values } => Ok(values[grid.locate(x)]),
            ObservableKind::Expr { tree, .. } => eval_tree(tree, x),
            ObservableKind::Coboundary { psi, map } => {
                let mut y = vec![0.0; x.len()];
                let mut xs = x.to_vec();
                let mut tries = 0;
                loop {
                    match map.evaluate_into(&xs, &mut y) {
                        Ok(_) => break,
                        Err(Error::BoundaryPoint { .. }) if tries < 8 => {
                            for v in xs.iter_mut() {
                                *v = v.next_up();
                            }
                            tries += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok(psi.value_at(&xs)? - psi.value_at(&y)?)
            }
        }
    }

    /// `φ(x)`.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.raw_value(x)? - self.shift)
    }

    /// Cell values of `φ` on `partition`: exact averages for cell tables,
    /// midpoint sub-sampling for pointwise observables.
    pub fn cell_values(&self, partition: &UlamPartition) -> Result<Vec<f64>> {
        let raw = match &self.kind {
            ObservableKind::Cells { grid, values } => {
                if grid == partition {
                    values.clone()
                } else if partition.refines(grid) {
                    partition.refine_values(grid, values)?
                } else if grid.refines(partition) {
                    let mut acc = vec![0.0; partition.len()];
                    let per = (grid.len() / partition.len()) as f64;
                    for (j, v) in values.iter().enumerate() {
                        acc[partition.locate(&grid.midpoint(j))] += v / per;
                    }
                    acc
                } else if grid.bounds == partition.bounds {
                    overlap_average(grid, values, partition)
                } else {
                    return Err(Error::GridMismatch("observable grid and partition cover different boxes".into()));
                }
            }
            _ => {
                let d = partition.dim();
                let q = PROJECTION_SUBSAMPLES;
                let sub = q.pow(d as u32);
                let mut out = Vec::with_capacity(partition.len());
                let mut p = vec![0.0; d];
                for j in 0..partition.len() {
                    let cell = partition.cell(j);
                    let mut acc = 0.0;
                    for s in 0..sub {
                        let mut t = s;
                        for k in (0..d).rev() {
                            let frac = ((t % q) as f64 + 0.5) / q as f64;
                            p[k] = cell.lower[k] + frac * (cell.upper[k] - cell.lower[k]);
                            t /= q;
                        }
                        acc += self.raw_value(&p)?;
                    }
                    out.push(acc / sub as f64);
                }
                out
            }
        };
        Ok(raw.into_iter().map(|v| v - self.shift).collect())
    }
}

/// Exact averages of a cell table over the cells of a grid that does not
/// nest with it.
fn overlap_average(grid: &UlamPartition, values: &[f64], target: &UlamPartition) -> Vec<f64> {
    let d = target.dim();
    (0..target.len())
        .map(|j| {
            let cell = target.cell(j);
            let axes: Vec<Vec<(usize, f64)>> = (0..d).map(|k| grid.axis_overlaps(k, cell.lower[k], cell.upper[k])).collect();
            let mut acc = 0.0;
            let mut idx = vec![0usize; d];
            let mut multi = vec![0usize; d];
            'outer: loop {
                let mut w = 1.0;
                for k in 0..d {
                    let (c, len) = axes[k][idx[k]];
                    multi[k] = c;
                    w *= len;
                }
                acc += w * values[grid.flat_index(&multi)];
                for k in (0..d).rev() {
                    idx[k] += 1;
                    if idx[k] < axes[k].len() {
                        continue 'outer;
                    }
                    idx[k] = 0;
                }
                break;
            }
            acc / target.cell_volume()
        })
        .collect()
}

/// `Σ_j φ_j v_j m(B_j)`.
pub fn quadrature_mean(phi: &[f64], density: &[f64], partition: &UlamPartition) -> f64 {
    phi.iter().zip(density).map(|(a, b)| a * b).sum::<f64>() * partition.cell_measure()
}

/// `φ − ∫φ dμ`, with the integral taken by cell quadrature against `density`.
pub fn center_observable(phi: &Observable, density: &[f64], partition: &UlamPartition) -> Result<Observable> {
    if density.len() != partition.len() {
        return Err(Error::GridMismatch(format!("density has {} cells, partition {}", density.len(), partition.len())));
    }
    let values = phi.cell_values(partition)?;
    let mean = quadrature_mean(&values, density, partition);
    Ok(phi.clone().shifted(mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::builtin;

    fn grid(n: usize) -> UlamPartition {
        UlamPartition::new(Rectangle::unit(1), vec![n]).unwrap()
    }

    #[test]
    fn constant_centers_to_zero() {
        let g = grid(8);
        let phi = Observable::from_cells(g.clone(), vec![5.0; 8]).unwrap();
        let dens: Vec<f64> = (0..8).map(|j| (j as f64 + 1.0) / 4.5).collect();
        let c = center_observable(&phi, &dens, &g).unwrap();
        assert!(c.cell_values(&g).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn digit_centers_to_plus_minus_half() {
        let g = grid(16);
        let phi = Observable::digit(&Rectangle::unit(1));
        let c = center_observable(&phi, &vec![1.0; 16], &g).unwrap();
        let v = c.cell_values(&g).unwrap();
        assert_eq!(v[0], -0.5);
        assert_eq!(v[15], 0.5);
        assert_eq!(c.value_at(&[0.7]).unwrap(), 0.5);
        let again = center_observable(&c, &vec![1.0; 16], &g).unwrap();
        assert_eq!(again.shift, c.shift);
    }

    #[test]
    fn centered_mean_vanishes() {
        let g = grid(64);
        let values: Vec<f64> = (0..64).map(|j| ((j * 37) % 11) as f64 - 3.2).collect();
        let dens: Vec<f64> = (0..64).map(|j| 0.5 + (j as f64) / 63.0).collect();
        let phi = Observable::from_cells(g.clone(), values).unwrap();
        let c = center_observable(&phi, &dens, &g).unwrap();
        let m = quadrature_mean(&c.cell_values(&g).unwrap(), &dens, &g);
        assert!(m.abs() <= 1e-12, "{m}");
    }

    #[test]
    fn non_nested_grids_average_exactly() {
        let phi = Observable::from_cells(grid(3), vec![1.0, 2.0, 3.0]).unwrap();
        let v = phi.cell_values(&grid(4)).unwrap();
        let want = [1.0, (1.0 / 12.0 + 2.0 * 2.0 / 12.0) * 4.0, (2.0 * 2.0 / 12.0 + 3.0 / 12.0) * 4.0, 3.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
        let other = UlamPartition::new(Rectangle::new(vec![0.0], vec![2.0]).unwrap(), vec![4]).unwrap();
        assert!(matches!(phi.cell_values(&other), Err(Error::GridMismatch(_))));
        assert_eq!(phi.cell_values(&grid(6)).unwrap(), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn expression_observable() {
        let phi = Observable::expr("x * x", &Rectangle::unit(1)).unwrap();
        assert!((phi.value_at(&[0.5]).unwrap() - 0.25).abs() < 1e-15);
        assert!((phi.bound() - 1.0).abs() < 1e-3);
        let v = phi.cell_values(&grid(2)).unwrap();
        // midpoint rule with four sub-points on [0, 1/2]
        let exact: f64 = [0.0625f64, 0.1875, 0.3125, 0.4375].iter().map(|t| t * t).sum::<f64>() / 4.0;
        assert!((v[0] - exact).abs() < 1e-15);
        assert!(Observable::expr("x +", &Rectangle::unit(1)).is_err());
    }

    #[test]
    fn coboundary_of_doubling_on_dyadic_grid() {
        let map = Arc::new(builtin("doubling").unwrap());
        let g4 = grid(4);
        let psi = Observable::from_cells(grid(2), vec![1.0, 0.0]).unwrap();
        let phi = Observable::coboundary(psi, map);
        assert_eq!(phi.cell_values(&g4).unwrap(), vec![0.0, 1.0, -1.0, 0.0]);
    }
}
