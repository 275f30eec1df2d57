use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::UlamPartition;
use crate::map_model::{builtin, Branch, Observable, PiecewiseAffineMap, Rectangle};
use crate::monte_carlo::InitialLaw;
use crate::quasi_holder::Extension;
use crate::spectral::{DEFAULT_EIGEN_TOL, DEFAULT_GAP_THRESHOLD, DEFAULT_TAIL_TOL};
use crate::ulam_transfer::AssemblyMethod;

/// A validated job description. Every optional field is filled in by
/// [`parse_config`], so serializing a parsed config records all defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub map: MapSpec,
    /// Hölder exponent of the seminorm; overrides the map's own value.
    #[serde(default = "one")]
    pub alpha: f64,
    pub resolution: Vec<usize>,
    #[serde(default)]
    pub observable: ObservableSpec,
    #[serde(default)]
    pub assembly: AssemblyMethod,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default)]
    pub monte_carlo: MonteCarloParams,
    #[serde(default)]
    pub quasi_holder: QuasiHolderParams,
    /// CSV with columns `n,eps,p` holding exact tail probabilities.
    #[serde(default)]
    pub oracle: Option<String>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Builtin(String),
    Explicit(ExplicitMap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitMap {
    #[serde(default = "explicit_name")]
    pub name: String,
    pub phase_space: BoxSpec,
    pub branches: Vec<BranchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub domain: BoxSpec,
    /// Row-major `d × d` matrix.
    pub linear: Vec<f64>,
    pub offset: Vec<f64>,
    /// Per-axis reduction modulo the phase space; all false when absent.
    #[serde(default)]
    pub wrap: Option<Vec<bool>>,
}

/// Cell table on a product grid covering the phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTable {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSpec {
    /// Indicator of the upper half of the first axis.
    #[default]
    Digit,
    Cells(CellTable),
    /// Expression in `x`, `y`, `z`.
    Expr(String),
    /// `ψ − ψ∘T`.
    Coboundary(Box<ObservableSpec>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawSpec {
    #[default]
    Uniform,
    Density(CellTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub theta_max: f64,
    pub n_theta: usize,
    pub n_eps: usize,
    pub eigen_tol: f64,
    pub gap_threshold: f64,
    pub tail_tol: f64,
    /// Step of the finite-difference check of `Λ′(0)` and `Λ″(0)`.
    pub fd_step: f64,
    pub t_grid: Vec<f64>,
    /// Values of `n` for the characteristic-function check.
    pub n_schedule: Vec<u32>,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            theta_max: 2.0,
            n_theta: 21,
            n_eps: 40,
            eigen_tol: DEFAULT_EIGEN_TOL,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            tail_tol: DEFAULT_TAIL_TOL,
            fd_step: 1e-3,
            t_grid: (0..=24).map(|i| -3.0 + 0.25 * i as f64).collect(),
            n_schedule: vec![100, 400],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloParams {
    pub n_schedule: Vec<usize>,
    pub eps: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub clt_n: usize,
    pub clt_samples: usize,
    pub jitter: f64,
    pub initial_law: LawSpec,
    /// Stream raw `S_n` samples to `samples_n{n}.bsum`.
    pub write_samples: bool,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self {
            n_schedule: vec![25, 50, 100],
            eps: vec![0.1],
            samples: 100_000,
            seed: 1,
            clt_n: 100,
            clt_samples: 100_000,
            jitter: 2f64.powi(-40),
            initial_law: LawSpec::Uniform,
            write_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiHolderParams {
    /// Defaults to the map's own ε₀.
    pub epsilon0: Option<f64>,
    pub n_eps: usize,
    pub sublines: usize,
    pub extension: Extension,
    pub ly_steps: usize,
}

impl Default for QuasiHolderParams {
    fn default() -> Self {
        Self { epsilon0: None, n_eps: 20, sublines: 2, extension: Extension::Zero, ly_steps: 10 }
    }
}

fn one() -> f64 {
    1.0
}

fn explicit_name() -> String {
    "explicit".into()
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaError { path: path.into(), message: message.into() }
}

/// Parses and validates a job document. Unknown keys, non-positive sizes
/// and out-of-range parameters are [`Error::SchemaError`]s; map problems
/// surface as [`Error::UnknownMap`] or [`Error::InvalidBranch`].
pub fn parse_config(document: &str) -> Result<JobConfig> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let mut cfg: JobConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner().to_string())
    })?;
    if cfg.quasi_holder.epsilon0.is_some_and(|e| !(e > 0.0)) {
        return Err(schema("quasi_holder.epsilon0", "must be positive"));
    }
    cfg.validate()?;
    let map = cfg.build_map()?;
    if cfg.quasi_holder.epsilon0.is_none() {
        cfg.quasi_holder.epsilon0 = Some(map.default_epsilon0());
    }
    cfg.build_observable(&Arc::new(map.clone()))?;
    cfg.build_law(&map)?;
    Ok(cfg)
}

impl JobConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(schema("alpha", "must lie in (0, 1]"));
        }
        if self.resolution.is_empty() {
            return Err(schema("resolution", "must list one size per axis"));
        }
        for (i, &r) in self.resolution.iter().enumerate() {
            if r == 0 {
                return Err(schema(&format!("resolution[{i}]"), "must be positive"));
            }
        }
        let a = &self.analysis;
        if !(a.theta_max > 0.0) {
            return Err(schema("analysis.theta_max", "must be positive"));
        }
        if a.n_theta < 9 || a.n_theta % 2 == 0 {
            return Err(schema("analysis.n_theta", "must be odd and at least 9"));
        }
        if a.n_eps < 2 {
            return Err(schema("analysis.n_eps", "must be at least 2"));
        }
        for (path, v) in [
            ("analysis.eigen_tol", a.eigen_tol),
            ("analysis.gap_threshold", a.gap_threshold),
            ("analysis.tail_tol", a.tail_tol),
            ("analysis.fd_step", a.fd_step),
        ] {
            if !(v > 0.0) {
                return Err(schema(path, "must be positive"));
            }
        }
        if let Some(i) = a.t_grid.iter().position(|t| !(t.abs() <= 3.0)) {
            return Err(schema(&format!("analysis.t_grid[{i}]"), "must lie in [-3, 3]"));
        }
        if let Some(i) = a.n_schedule.iter().position(|&n| n == 0) {
            return Err(schema(&format!("analysis.n_schedule[{i}]"), "must be positive"));
        }
        let mc = &self.monte_carlo;
        if mc.samples == 0 {
            return Err(schema("monte_carlo.samples", "must be positive"));
        }
        if mc.clt_samples < 2 || mc.clt_n == 0 {
            return Err(schema("monte_carlo.clt_samples", "need clt_n ≥ 1 and at least two samples"));
        }
        if mc.n_schedule.is_empty() || mc.n_schedule.contains(&0) || mc.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(schema("monte_carlo.n_schedule", "must be nonempty, positive and strictly increasing"));
        }
        if let Some(i) = mc.eps.iter().position(|e| !e.is_finite()) {
            return Err(schema(&format!("monte_carlo.eps[{i}]"), "must be finite"));
        }
        if !(mc.jitter >= 0.0 && mc.jitter < 1.0) {
            return Err(schema("monte_carlo.jitter", "must lie in [0, 1)"));
        }
        let q = &self.quasi_holder;
        if q.n_eps == 0 || q.sublines == 0 || q.ly_steps < 3 {
            return Err(schema("quasi_holder", "n_eps and sublines must be positive, ly_steps at least 3"));
        }
        Ok(())
    }

    /// Builds the map with the configured `alpha`.
    pub fn build_map(&self) -> Result<PiecewiseAffineMap> {
        let map = self.map.build(self.alpha)?;
        if self.resolution.len() != map.dim() {
            return Err(schema("resolution", format!("map has dimension {}, got {} sizes", map.dim(), self.resolution.len())));
        }
        Ok(map)
    }

    pub fn partition(&self, map: &PiecewiseAffineMap) -> Result<UlamPartition> {
        UlamPartition::new(map.phase_space.clone(), self.resolution.clone())
    }

    /// The uncentered observable.
    pub fn build_observable(&self, map: &Arc<PiecewiseAffineMap>) -> Result<Observable> {
        build_observable(&self.observable, map, "observable")
    }

    pub fn build_law(&self, map: &PiecewiseAffineMap) -> Result<InitialLaw> {
        match &self.monte_carlo.initial_law {
            LawSpec::Uniform => Ok(InitialLaw::Uniform),
            LawSpec::Density(t) => {
                let grid = table_grid(t, map, "monte_carlo.initial_law.density")?;
                InitialLaw::density(grid, t.values.clone())
            }
        }
    }

    /// Canonical form: sorted keys, no whitespace.
    pub fn canonical_json(&self) -> String {
        // serde_json's default map is ordered, so a round trip through
        // `Value` sorts every object's keys.
        serde_json::to_value(self).map(|v| v.to_string()).expect("config serializes")
    }

    /// Hex SHA-256 of [`JobConfig::canonical_json`].
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

impl MapSpec {
    /// Explicit maps must be expanding on every branch; the degenerate
    /// built-in fixtures are accepted and refused later by the pipeline.
    pub fn build(&self, alpha: f64) -> Result<PiecewiseAffineMap> {
        let mut map = match self {
            MapSpec::Builtin(name) => builtin(name)?,
            MapSpec::Explicit(spec) => {
                let rect = |b: &BoxSpec| Rectangle::new(b.lower.clone(), b.upper.clone());
                let phase_space = rect(&spec.phase_space)?;
                let branches = spec
                    .branches
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let label = b.label.clone().unwrap_or_else(|| (i + 1).to_string());
                        let dom = rect(&b.domain)?;
                        let d = dom.dim();
                        let branch = Branch::new(label, dom, b.linear.clone(), b.offset.clone());
                        Ok(branch.with_wrap(b.wrap.clone().unwrap_or_else(|| vec![false; d])))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let map = PiecewiseAffineMap::new(spec.name.clone(), alpha, phase_space, branches)?;
                for b in &map.branches {
                    let s = b.inverse_norm()?;
                    if !(s < 1.0) {
                        return Err(Error::InvalidBranch {
                            label: b.label.clone(),
                            reason: format!("not expanding: ‖A⁻¹‖ = {s}"),
                        });
                    }
                }
                map
            }
        };
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(schema("alpha", "must lie in (0, 1]"));
        }
        map.alpha = alpha;
        Ok(map)
    }
}

fn table_grid(t: &CellTable, map: &PiecewiseAffineMap, path: &str) -> Result<UlamPartition> {
    if t.shape.len() != map.dim() || t.shape.contains(&0) {
        return Err(schema(&format!("{path}.shape"), format!("need {} positive sizes", map.dim())));
    }
    let grid = UlamPartition::new(map.phase_space.clone(), t.shape.clone())?;
    if grid.len() != t.values.len() {
        return Err(schema(&format!("{path}.values"), format!("expected {} values, got {}", grid.len(), t.values.len())));
    }
    Ok(grid)
}

fn build_observable(spec: &ObservableSpec, map: &Arc<PiecewiseAffineMap>, path: &str) -> Result<Observable> {
    match spec {
        ObservableSpec::Digit => Ok(Observable::digit(&map.phase_space)),
        ObservableSpec::Cells(t) => {
            let grid = table_grid(t, map, &format!("{path}.cells"))?;
            Observable::from_cells(grid, t.values.clone())
        }
        ObservableSpec::Expr(src) => Observable::expr(src, &map.phase_space),
        ObservableSpec::Coboundary(psi) => {
            let psi = build_observable(psi, map, &format!("{path}.coboundary"))?;
            Ok(Observable::coboundary(psi, map.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_doubling_fills_defaults() {
        let cfg = parse_config(r#"{"map":"doubling","observable":"digit","resolution":[256]}"#).unwrap();
        assert_eq!(cfg.analysis, AnalysisParams::default());
        assert_eq!(cfg.monte_carlo, MonteCarloParams::default());
        assert_eq!(cfg.quasi_holder.epsilon0, Some(builtin("doubling").unwrap().default_epsilon0()));
        let json: serde_json::Value = serde_json::from_str(&cfg.canonical_json()).unwrap();
        assert_eq!(json["analysis"]["n_theta"], 21);
        assert_eq!(json["observable"], "digit");
        assert_eq!(json["assembly"], "exact_affine");
    }

    #[test]
    fn round_trip_preserves_hash() {
        let cfg = parse_config(r#"{"map":"beta-2.5","resolution":[64],"monte_carlo":{"seed":9}}"#).unwrap();
        let again = parse_config(&serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.config_hash(), again.config_hash());
        assert_eq!(cfg.config_hash().len(), 64);
        let other = parse_config(r#"{"map":"beta-2.5","resolution":[64],"monte_carlo":{"seed":10}}"#).unwrap();
        assert_ne!(cfg.config_hash(), other.config_hash());
    }

    #[test]
    fn canonical_json_has_sorted_keys_and_no_whitespace() {
        let cfg = parse_config(r#"{"resolution":[8],"map":"doubling"}"#).unwrap();
        let s = cfg.canonical_json();
        assert!(!s.contains(' ') && !s.contains('\n'));
        assert!(s.find("\"alpha\"").unwrap() < s.find("\"analysis\"").unwrap());
        assert!(s.find("\"map\"").unwrap() < s.find("\"resolution\"").unwrap());
    }

    #[test]
    fn zero_resolution_is_schema_error() {
        match parse_config(r#"{"map":"doubling","resolution":[0]}"#) {
            Err(Error::SchemaError { path, .. }) => assert_eq!(path, "resolution[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_report_their_path() {
        match parse_config(r#"{"map":"doubling","resolution":[8],"analysis":{"thetamax":1}}"#) {
            Err(Error::SchemaError { path, message }) => {
                assert_eq!(path, "analysis.thetamax");
                assert!(message.contains("thetamax"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(r#"{"map":"doubling","resolution":[8],"colour":1}"#), Err(Error::SchemaError { .. })));
    }

    #[test]
    fn unknown_map_and_dimension_mismatch() {
        assert!(matches!(parse_config(r#"{"map":"tent","resolution":[8]}"#), Err(Error::UnknownMap(_))));
        assert!(matches!(parse_config(r#"{"map":"triple-2d","resolution":[8]}"#), Err(Error::SchemaError { .. })));
    }

    fn explicit(branches: &str) -> String {
        format!(r#"{{"map":{{"phase_space":{{"lower":[0],"upper":[1]}},"branches":{branches}}},"resolution":[16]}}"#)
    }

    #[test]
    fn explicit_map_parses() {
        let cfg = parse_config(&explicit(
            r#"[{"domain":{"lower":[0],"upper":[0.5]},"linear":[2],"offset":[0]},
               {"domain":{"lower":[0.5],"upper":[1]},"linear":[2],"offset":[-1]}]"#,
        ))
        .unwrap();
        let map = cfg.build_map().unwrap();
        assert_eq!(map.branches.len(), 2);
        assert_eq!(map.evaluate(&[0.75]).unwrap().0, vec![0.5]);
    }

    #[test]
    fn overlapping_domains_are_invalid_branches() {
        let r = parse_config(&explicit(
            r#"[{"domain":{"lower":[0],"upper":[0.6]},"linear":[2],"offset":[0]},
               {"domain":{"lower":[0.4],"upper":[1]},"linear":[2],"offset":[-1]}]"#,
        ));
        assert!(matches!(r, Err(Error::InvalidBranch { .. })), "{r:?}");
    }

    #[test]
    fn non_expanding_explicit_branch_is_invalid() {
        let r = parse_config(&explicit(r#"[{"domain":{"lower":[0],"upper":[1]},"linear":[1],"offset":[0]}]"#));
        assert!(matches!(r, Err(Error::InvalidBranch { .. })), "{r:?}");
    }

    #[test]
    fn observable_and_law_variants() {
        let cfg = parse_config(
            r#"{"map":"doubling","resolution":[8],
                "observable":{"coboundary":{"cells":{"shape":[2],"values":[1,0]}}},
                "monte_carlo":{"initial_law":{"density":{"shape":[2],"values":[2,0]}}}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.observable, ObservableSpec::Coboundary(_)));
        assert!(matches!(cfg.build_law(&cfg.build_map().unwrap()).unwrap(), InitialLaw::Density { .. }));
        let bad = r#"{"map":"doubling","resolution":[8],"monte_carlo":{"initial_law":{"density":{"shape":[2],"values":[1,0]}}}}"#;
        assert!(matches!(parse_config(bad), Err(Error::InvalidArgument(_))));
        let expr = parse_config(r#"{"map":"doubling","resolution":[8],"observable":{"expr":"x - 0.5"}}"#).unwrap();
        assert_eq!(expr.observable, ObservableSpec::Expr("x - 0.5".into()));
        assert!(matches!(
            parse_config(r#"{"map":"doubling","resolution":[8],"observable":{"expr":"x +"}}"#),
            Err(Error::Expression(_))
        ));
    }

    #[test]
    fn parameter_ranges_are_checked() {
        for doc in [
            r#"{"map":"doubling","resolution":[8],"analysis":{"n_theta":10}}"#,
            r#"{"map":"doubling","resolution":[8],"alpha":0}"#,
            r#"{"map":"doubling","resolution":[8],"analysis":{"t_grid":[4]}}"#,
            r#"{"map":"doubling","resolution":[8],"monte_carlo":{"n_schedule":[50,25]}}"#,
        ] {
            assert!(matches!(parse_config(doc), Err(Error::SchemaError { .. })), "{doc}");
        }
    }
}
