//! Job configuration, the staged pipeline and its artifacts.
//!
//! Artifacts written by [`run_pipeline`], one per stage output:
//!
//! | file | columns or content |
//! |---|---|
//! | `regularity.json` | regularity report, or the expansion violation |
//! | `spectral.json` | λ, residual, invariant density and left vector |
//! | `gap.json` | `|λ₂|`, fitted decay, mixing flag |
//! | `variance.json`, `correlations.csv` | σ²; `n,C_n` |
//! | `lambda_curve.csv` | `theta,lambda,Lambda,gap` |
//! | `rate_function.csv`, `rate_window.json` | `eps,c,argmax_theta`; `ε_±` and the θ window |
//! | `derivatives.json` | finite-difference `Λ′(0)`, `Λ″(0)` |
//! | `clt_check.csv` | `t,n,re_lhs,im_lhs,rhs,abs_error` |
//! | `tails.json`, `clt_empirical.json` | Monte Carlo estimates |
//! | `comparison.csv` | see [`COMPARISON_HEADER`] |
//! | `summary.json` | [`RunSummary`] |

mod compare;
mod config;
mod pipeline;

pub use compare::{compare_report, ComparisonRow, OracleTable, Verdict, COMPARISON_HEADER};
pub use config::{
    parse_config, AnalysisParams, BoxSpec, BranchSpec, CellTable, ExplicitMap, JobConfig, LawSpec, MapSpec, MonteCarloParams,
    ObservableSpec, QuasiHolderParams,
};
pub use pipeline::{qh_norm, run_pipeline, QhNormReport, RatePoint, RunPaths, RunSummary, Stage};

use crate::error::Error;

/// Process exit code for a pipeline outcome: 0 success, 2 refusal, 1 error.
pub fn exit_code(result: &Result<(), Error>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_refusal() => 2,
        Err(_) => 1,
    }
}
