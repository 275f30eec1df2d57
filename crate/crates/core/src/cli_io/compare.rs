use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp_core::RateFunction;
use crate::monte_carlo::TailEstimate;

/// Exact tail probabilities `P(S_n > nε)` keyed by `(n, ε)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleTable {
    pub rows: Vec<(usize, f64, f64)>,
}

impl OracleTable {
    /// Reads CSV text with header `n,eps,p`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
        if header != ["n", "eps", "p"] {
            return Err(Error::InvalidArgument(format!("oracle header must be `n,eps,p`, got {header:?}")));
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::InvalidArgument(format!("oracle row {}: cannot parse `{line}`", i + 1));
                let mut it = line.split(',').map(str::trim);
                let n = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                let eps = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                let p: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                if it.next().is_some() || !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Ok((n, eps, p))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn lookup(&self, n: usize, eps: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|&&(m, e, _)| m == n && (e - eps).abs() <= 1e-12 * eps.abs().max(1.0))
            .map(|r| r.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The oracle tail lies in the Wilson interval.
    Agree,
    Disagree,
    /// No exceedances, so there is no empirical rate to judge.
    InsufficientSamples,
    /// No oracle value for this row.
    Unchecked,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Agree => "agree",
            Verdict::Disagree => "disagree",
            Verdict::InsufficientSamples => "insufficient_samples",
            Verdict::Unchecked => "unchecked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub eps: f64,
    pub c_eps: f64,
    pub empirical_rate: Option<f64>,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    pub hits: usize,
    pub oracle_p: Option<f64>,
    pub verdict: Verdict,
}

pub const COMPARISON_HEADER: &str = "n,eps,c_eps,empirical_rate,p_hat,ci_lo,ci_hi,hits,oracle_p,verdict";

impl ComparisonRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.eps,
            self.c_eps,
            opt(self.empirical_rate),
            self.p_hat,
            self.ci95.0,
            self.ci95.1,
            self.hits,
            opt(self.oracle_p),
            self.verdict.as_str()
        )
    }
}

/// One row per tail estimate, pairing it with `c(ε)` and, when supplied,
/// the exact tail. Every `ε` must lie on the rate function's grid.
pub fn compare_report(rate: &RateFunction, tails: &[TailEstimate], oracle: Option<&OracleTable>) -> Result<Vec<ComparisonRow>> {
    tails
        .iter()
        .map(|t| {
            let c_eps = rate.value_at(t.eps)?;
            let oracle_p = oracle.and_then(|o| o.lookup(t.n, t.eps));
            let verdict = match oracle_p {
                _ if t.hits == 0 => Verdict::InsufficientSamples,
                None => Verdict::Unchecked,
                Some(p) if t.ci95.0 <= p && p <= t.ci95.1 => Verdict::Agree,
                Some(_) => Verdict::Disagree,
            };
            Ok(ComparisonRow {
                n: t.n,
                eps: t.eps,
                c_eps,
                empirical_rate: t.empirical_rate,
                p_hat: t.p_hat,
                ci95: t.ci95,
                hits: t.hits,
                oracle_p,
                verdict,
            })
        })
        .collect()
}
