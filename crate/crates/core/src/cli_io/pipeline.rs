use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::compare::{compare_report, OracleTable, COMPARISON_HEADER};
use super::config::JobConfig;
use crate::error::{Error, Result};
use crate::grid::UlamPartition;
use crate::ldp_core::{check_derivatives, clt_characteristic_check, lambda_curve, rate_function, CurveOptions, RateFunction, TiltedFamily};
use crate::map_model::{center_observable, eta0, Observable, PiecewiseAffineMap, Rectangle, RegularityReport};
use crate::monte_carlo::{clt_from_samples, simulate_birkhoff, simulate_schedule, tail_from_samples, write_bsum, MonteCarloOptions, TailEstimate};
use crate::quasi_holder::{lasota_yorke_probe, seminorm_alpha, GridFunction, LasotaYorkeReport, NormReport, SeminormOptions};
use crate::spectral::{
    green_kubo_variance, invariant_density, spectral_gap, EigenOptions, GapOptions, GapReport, GreenKuboOptions, SpectralData,
    VarianceReport, DEFAULT_MAX_ITER, NORMALIZATION,
};
use crate::ulam_transfer::{build_ulam, TransferMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Check,
    Density,
    Spectrum,
    Variance,
    Ldp,
    Clt,
    Simulate,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 8] =
        [Stage::Check, Stage::Density, Stage::Spectrum, Stage::Variance, Stage::Ldp, Stage::Clt, Stage::Simulate, Stage::Compare];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Check => "check",
            Stage::Density => "density",
            Stage::Spectrum => "spectrum",
            Stage::Variance => "variance",
            Stage::Ldp => "ldp",
            Stage::Clt => "clt",
            Stage::Simulate => "simulate",
            Stage::Compare => "compare",
        }
    }

    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Check | Stage::Density => &[],
            Stage::Spectrum => &[Stage::Density],
            Stage::Variance => &[Stage::Spectrum],
            Stage::Ldp | Stage::Clt | Stage::Simulate => &[Stage::Variance],
            Stage::Compare => &[Stage::Ldp, Stage::Simulate],
        }
    }

    /// `requested` plus everything it depends on, in execution order.
    pub fn closure(requested: &[Stage]) -> Vec<Stage> {
        let mut set = BTreeSet::new();
        let mut todo = requested.to_vec();
        while let Some(s) = todo.pop() {
            if set.insert(s) {
                todo.extend_from_slice(s.requires());
            }
        }
        set.into_iter().collect()
    }

    /// Parses a comma-separated list such as `check,ldp`.
    pub fn parse_list(list: &str) -> Result<Vec<Stage>> {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub eps: f64,
    pub c: f64,
}

/// Headline numbers of a run. Each field is copied from the artifact named
/// alongside it in `artifacts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<Stage>,
    pub regularity: Option<RegularityReport>,
    pub warnings: Vec<String>,
    pub lambda1: Option<f64>,
    pub lambda2_modulus: Option<f64>,
    pub sigma2: Option<f64>,
    pub eps_window: Option<(f64, f64)>,
    /// `c(ε)` at the Monte Carlo thresholds.
    pub rate_points: Vec<RatePoint>,
    /// Quantity → artifact file it was taken from.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

/// Where a pipeline writes and resolves relative paths.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub out_dir: PathBuf,
    /// Base for a relative oracle path; the working directory when `None`.
    pub base_dir: Option<PathBuf>,
}

impl RunPaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), base_dir: None }
    }
}

struct Run<'a> {
    cfg: &'a JobConfig,
    paths: &'a RunPaths,
    map: Arc<PiecewiseAffineMap>,
    partition: UlamPartition,
    summary: RunSummary,
    k: Option<TransferMatrix<f64>>,
    sd: Option<SpectralData<f64>>,
    phi: Option<Observable>,
    phi_cells: Vec<f64>,
    gap: Option<GapReport>,
    variance: Option<VarianceReport>,
    rate: Option<RateFunction>,
    tails: Vec<TailEstimate>,
}

/// Runs `stages` and their dependencies in order, writing artifacts to
/// `paths.out_dir`. Stage failures come back wrapped in
/// [`Error::Stage`]; `summary.json` is written only after every stage
/// succeeds.
pub fn run_pipeline(config: &JobConfig, stages: &[Stage], paths: &RunPaths) -> Result<RunSummary> {
    let map = Arc::new(config.build_map()?);
    let partition = config.partition(&map)?;
    fs::create_dir_all(&paths.out_dir)?;
    let order = Stage::closure(stages);
    let mut run = Run {
        cfg: config,
        paths,
        map,
        partition,
        summary: RunSummary {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.config_hash(),
            stages: order.clone(),
            regularity: None,
            warnings: Vec::new(),
            lambda1: None,
            lambda2_modulus: None,
            sigma2: None,
            eps_window: None,
            rate_points: Vec::new(),
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
        },
        k: None,
        sd: None,
        phi: None,
        phi_cells: Vec::new(),
        gap: None,
        variance: None,
        rate: None,
        tails: Vec::new(),
    };
    for stage in order {
        let start = Instant::now();
        run.stage(stage).map_err(|e| e.in_stage(stage.name()))?;
        run.summary.timings.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
    }
    write_json(&paths.out_dir.join("summary.json"), &run.summary)?;
    Ok(run.summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

impl Run<'_> {
    fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        write_json(&self.paths.out_dir.join(file), value)
    }

    fn csv(&mut self, file: &str, header: &str, body: &str) -> Result<()> {
        fs::write(self.paths.out_dir.join(file), format!("{header}\n{body}"))?;
        Ok(())
    }

    fn record(&mut self, quantity: &str, file: &str) {
        self.summary.artifacts.insert(quantity.to_string(), file.to_string());
    }

    fn eigen_opts(&self) -> EigenOptions {
        EigenOptions { tol: self.cfg.analysis.eigen_tol, max_iter: DEFAULT_MAX_ITER }
    }

    fn gap_opts(&self) -> GapOptions {
        GapOptions { threshold: self.cfg.analysis.gap_threshold, ..GapOptions::default() }
    }

    fn family(&self) -> Result<TiltedFamily<'_>> {
        let k = self.k.as_ref().expect("density stage ran");
        let mut family = TiltedFamily::new(k, self.phi_cells.clone())?;
        family.opts = self.eigen_opts();
        Ok(family)
    }

    fn sigma2(&self) -> f64 {
        self.variance.as_ref().expect("variance stage ran").sigma2
    }

    fn stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Check => self.check(),
            Stage::Density => self.density(),
            Stage::Spectrum => self.spectrum(),
            Stage::Variance => self.variance(),
            Stage::Ldp => self.ldp(),
            Stage::Clt => self.clt(),
            Stage::Simulate => self.simulate(),
            Stage::Compare => self.compare(),
        }
    }

    /// A map that fails the expansion test is reported, not refused: the
    /// spectral stages decide whether the operator is still usable.
    fn check(&mut self) -> Result<()> {
        match eta0(&self.map) {
            Ok(report) => {
                self.json("regularity.json", &report)?;
                self.summary.regularity = Some(report);
            }
            Err(Error::ExpansionViolation { s }) => {
                self.json("regularity.json", &serde_json::json!({ "expansion_violation": { "s": s } }))?;
                self.summary.warnings.push(format!("map is not expanding (s = {s})"));
            }
            Err(e) => return Err(e),
        }
        self.record("regularity", "regularity.json");
        Ok(())
    }

    fn density(&mut self) -> Result<()> {
        let k = build_ulam(&self.map, &self.partition, &self.cfg.assembly)?;
        let sd = invariant_density(&k, self.eigen_opts())?;
        let obs = self.cfg.build_observable(&self.map)?;
        let phi = center_observable(&obs, &sd.right, &self.partition)?;
        self.phi_cells = phi.cell_values(&self.partition)?;
        self.json(
            "spectral.json",
            &serde_json::json!({
                "normalization": NORMALIZATION,
                "dim": k.dim(),
                "nnz": k.nnz(),
                "mass_defect": k.mass_defect(),
                "lambda": sd.lambda,
                "left_lambda": sd.left_lambda,
                "residual": sd.residual,
                "iterations": sd.iterations,
                "observable_mean": phi.shift,
                "density": sd.right,
                "left": sd.left,
            }),
        )?;
        self.record("density", "spectral.json");
        self.k = Some(k);
        self.sd = Some(sd);
        self.phi = Some(phi);
        Ok(())
    }

    fn spectrum(&mut self) -> Result<()> {
        let gap = spectral_gap(self.k.as_ref().expect("density stage ran"), self.sd.as_ref().expect("density stage ran"), self.gap_opts())?;
        self.json("gap.json", &gap)?;
        self.record("lambda1", "gap.json");
        self.record("lambda2_modulus", "gap.json");
        self.summary.lambda1 = Some(gap.lambda1);
        self.summary.lambda2_modulus = Some(gap.lambda2_modulus);
        if !gap.mixing_flag {
            return Err(Error::NotMixing { lambda1: gap.lambda1, lambda2: gap.lambda2_modulus });
        }
        self.gap = Some(gap);
        Ok(())
    }

    fn variance(&mut self) -> Result<()> {
        let opts = GreenKuboOptions {
            tail_tol: self.cfg.analysis.tail_tol,
            rate: self.gap.as_ref().map(|g| g.lambda2_modulus),
            ..GreenKuboOptions::default()
        };
        let report = green_kubo_variance(self.k.as_ref().expect("density stage ran"), self.sd.as_ref().expect("density stage ran"), &self.phi_cells, opts)?;
        let mut body = String::new();
        writeln!(body, "0,{}", report.c0).unwrap();
        for (n, c) in report.correlations.iter().enumerate() {
            writeln!(body, "{},{c}", n + 1).unwrap();
        }
        self.json("variance.json", &report)?;
        self.csv("correlations.csv", "n,C_n", &body)?;
        self.record("sigma2", "variance.json");
        self.summary.sigma2 = Some(report.sigma2);
        self.variance = Some(report);
        Ok(())
    }

    /// Everything is computed before anything is written, so a refusal
    /// leaves no partial curve on disk.
    fn ldp(&mut self) -> Result<()> {
        let sigma2 = self.sigma2();
        let family = self.family()?;
        let a = &self.cfg.analysis;
        let curve_opts = CurveOptions { theta_max: a.theta_max, n_theta: a.n_theta, gap: self.gap_opts() };
        let curve = lambda_curve(&family, self.gap.as_ref().expect("spectrum stage ran"), curve_opts)?;
        let rate = rate_function(&family, &curve, sigma2, a.n_eps, &self.cfg.monte_carlo.eps)?;
        let derivatives = check_derivatives(&family, &curve, sigma2, a.fd_step)?;

        let mut body = String::new();
        for i in 0..curve.theta_grid.len() {
            writeln!(
                body,
                "{},{},{},{}",
                curve.theta_grid[i], curve.lambda_values[i], curve.big_lambda_values[i], curve.gap_values[i]
            )
            .unwrap();
        }
        self.csv("lambda_curve.csv", "theta,lambda,Lambda,gap", &body)?;
        let mut body = String::new();
        for i in 0..rate.eps_grid.len() {
            writeln!(body, "{},{},{}", rate.eps_grid[i], rate.c_values[i], rate.argmax_theta[i]).unwrap();
        }
        self.csv("rate_function.csv", "eps,c,argmax_theta", &body)?;
        self.json(
            "rate_window.json",
            &serde_json::json!({
                "valid_window": curve.valid_window,
                "theta_cap": rate.theta_cap,
                "eps_minus": rate.eps_minus,
                "eps_plus": rate.eps_plus,
            }),
        )?;
        self.json("derivatives.json", &derivatives)?;
        if !derivatives.passes {
            self.summary.warnings.push(format!(
                "finite-difference check failed: Λ′(0) = {:e}, relative σ² error {:e}",
                derivatives.first, derivatives.rel_error
            ));
        }
        self.summary.eps_window = Some((rate.eps_minus, rate.eps_plus));
        for &eps in &self.cfg.monte_carlo.eps {
            if let Ok(c) = rate.value_at(eps) {
                self.summary.rate_points.push(RatePoint { eps, c });
            }
        }
        self.record("eps_window", "rate_window.json");
        self.record("rate_points", "rate_function.csv");
        self.rate = Some(rate);
        Ok(())
    }

    fn clt(&mut self) -> Result<()> {
        let sigma2 = self.sigma2();
        let a = &self.cfg.analysis;
        let checks = clt_characteristic_check(&self.family()?, sigma2, &a.t_grid, &a.n_schedule)?;
        let mut body = String::new();
        for c in &checks {
            for (i, t) in c.t_grid.iter().enumerate() {
                writeln!(body, "{t},{},{},{},{},{}", c.n, c.lhs[i].re, c.lhs[i].im, c.rhs[i], c.abs_errors[i]).unwrap();
            }
        }
        self.csv("clt_check.csv", "t,n,re_lhs,im_lhs,rhs,abs_error", &body)?;
        Ok(())
    }

    fn simulate(&mut self) -> Result<()> {
        let mc = &self.cfg.monte_carlo;
        let law = self.cfg.build_law(&self.map)?;
        let phi = self.phi.as_ref().expect("density stage ran");
        let opts = MonteCarloOptions { jitter: mc.jitter };
        let rows = simulate_schedule(&self.map, phi, &law, &mc.n_schedule, mc.samples, mc.seed, opts)?;
        let mut tails = Vec::new();
        for &eps in &mc.eps {
            for (sums, &n) in rows.iter().zip(&mc.n_schedule) {
                tails.push(tail_from_samples(sums, n, eps, mc.seed));
            }
        }
        if mc.write_samples {
            for (sums, &n) in rows.iter().zip(&mc.n_schedule) {
                let file = fs::File::create(self.paths.out_dir.join(format!("samples_n{n}.bsum")))?;
                write_bsum(BufWriter::new(file), n as u64, mc.seed, sums)?;
            }
        }
        let sums = simulate_birkhoff(&self.map, phi, &law, mc.clt_n, mc.clt_samples, mc.seed, opts)?;
        let clt = clt_from_samples(&sums, mc.clt_n, mc.seed, self.sigma2())?;
        self.json("tails.json", &tails)?;
        self.json("clt_empirical.json", &clt)?;
        self.record("tails", "tails.json");
        self.record("clt_empirical", "clt_empirical.json");
        self.tails = tails;
        Ok(())
    }

    fn compare(&mut self) -> Result<()> {
        let oracle = match &self.cfg.oracle {
            Some(p) => {
                let p = Path::new(p);
                let path = match &self.paths.base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p.to_path_buf(),
                };
                Some(OracleTable::load(&path)?)
            }
            None => None,
        };
        let rows = compare_report(self.rate.as_ref().expect("ldp stage ran"), &self.tails, oracle.as_ref())?;
        let body: String = rows.iter().map(|r| r.csv_line() + "\n").collect();
        self.csv("comparison.csv", COMPARISON_HEADER, &body)?;
        for r in &rows {
            if r.verdict == super::compare::Verdict::Disagree {
                self.summary.warnings.push(format!("oracle tail outside the 95% interval at n = {}, ε = {}", r.n, r.eps));
            }
        }
        self.record("comparison", "comparison.csv");
        Ok(())
    }
}

/// Norms of the configured observable and a Lasota–Yorke probe started
/// from a normalized indicator of the lower 30% of the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhNormReport {
    pub config_hash: String,
    pub observable: NormReport,
    pub lasota_yorke: LasotaYorkeReport,
}

pub fn qh_norm(config: &JobConfig) -> Result<QhNormReport> {
    let map = Arc::new(config.build_map()?);
    let partition = config.partition(&map)?;
    let q = &config.quasi_holder;
    let eps0 = q.epsilon0.unwrap_or_else(|| map.default_epsilon0());
    let opts = SeminormOptions { n_eps: q.n_eps, extension: q.extension, sublines: q.sublines };
    let obs = config.build_observable(&map)?;
    let f = GridFunction::new(partition.clone(), obs.cell_values(&partition)?)?;
    let observable = seminorm_alpha(&f, config.alpha, eps0, opts)?;

    let m = &map.phase_space;
    let mut upper = m.upper.clone();
    upper[0] = m.lower[0] + 0.3 * m.width(0);
    let rect = Rectangle::new(m.lower.clone(), upper)?;
    let g = GridFunction::indicator(partition.clone(), &rect);
    let g = g.scaled(1.0 / g.l1());
    let k = build_ulam(&map, &partition, &config.assembly)?;
    let lasota_yorke = lasota_yorke_probe(&k, &g, config.alpha, eps0, q.ly_steps, opts)?;
    Ok(QhNormReport { config_hash: config.config_hash(), observable, lasota_yorke })
}
