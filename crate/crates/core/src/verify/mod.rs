//! Monte Carlo checks of the identities, paired on common random numbers.

mod holder;
mod identities;
mod rules;

pub use holder::{fit_power_law, run_holder_scan, HolderReport, HolderSource};
pub use identities::{
    run_bismut, run_carre_du_champ, run_ibp, run_ibp_with_bias, run_bismut_with_bias, run_reversibility,
    LineExperiment, OuSampler, CARRE_DU_CHAMP_GAPS,
};
pub use rules::{
    ks_two_sample, ou_cross_validation, run_rules_suite, sheet_covariance_check, CovarianceProbe, KsResult, COVARIANCE_PAIRS,
    RuleCheck, RulesReport,
};

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monte Carlo settings shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Worker threads; 0 uses one per available core.
    #[serde(default)]
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McConfig {
            n_paths,
            seed,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::config("mc.n_paths", "at least two paths are required"));
        }
        Ok(())
    }
}

/// Evaluates `f` on path indices `0..n_paths` in a pool of `workers`
/// threads. Results come back in path order, so every statistic computed
/// from them is independent of the worker count.
pub fn run_paths<T, F>(cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("mc.workers", e.to_string()))?;
    pool.install(|| (0..cfg.n_paths as u64).into_par_iter().map(&f).collect())
}

/// Mean and standard error from per-path values, summed in path order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Summary {
        mean,
        se: (var / nf).sqrt(),
        n,
    }
}

/// Paired estimate of two expectations on shared paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs_mean: f64,
    pub rhs_se: f64,
    /// Mean and standard error of the per-path difference `lhs − rhs`.
    pub diff_mean: f64,
    pub diff_se: f64,
    pub n_paths: usize,
    /// `diff_mean / diff_se`; the paired variance accounts for the common
    /// random numbers.
    pub z_score: f64,
    pub config_digest: String,
    pub workers: usize,
    pub notes: Vec<String>,
    /// Named auxiliary quantities, such as bias budgets.
    pub diagnostics: BTreeMap<String, f64>,
}

impl MCReport {
    pub fn from_pairs(lhs: &[f64], rhs: &[f64]) -> Result<Self> {
        if lhs.len() != rhs.len() {
            return Err(Error::Shape("paired samples differ in length".into()));
        }
        if lhs.len() < 2 {
            return Err(Error::config("mc.n_paths", "at least two paths are required"));
        }
        let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let (l, r, d) = (summarize(lhs), summarize(rhs), summarize(&diff));
        let z_score = if d.se > 0.0 {
            d.mean / d.se
        } else if d.mean == 0.0 {
            0.0
        } else {
            d.mean.signum() * f64::INFINITY
        };
        Ok(MCReport {
            lhs_mean: l.mean,
            lhs_se: l.se,
            rhs_mean: r.mean,
            rhs_se: r.se,
            diff_mean: d.mean,
            diff_se: d.se,
            n_paths: lhs.len(),
            z_score,
            config_digest: String::new(),
            workers: 0,
            notes: Vec::new(),
            diagnostics: BTreeMap::new(),
        })
    }

    /// `|lhs − target| ≤ k·lhs_se + bias`, and likewise for `rhs`.
    pub fn sides_within(&self, target: f64, k: f64, lhs_bias: f64, rhs_bias: f64) -> bool {
        (self.lhs_mean - target).abs() <= k * self.lhs_se + lhs_bias
            && (self.rhs_mean - target).abs() <= k * self.rhs_se + rhs_bias
    }

    pub fn diagnostic(&self, name: &str) -> f64 {
        self.diagnostics.get(name).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# sheetcalc mc-report v1 digest={}", self.config_digest)?;
        writeln!(w, "quantity,mean,se")?;
        writeln!(w, "lhs,{},{}", self.lhs_mean, self.lhs_se)?;
        writeln!(w, "rhs,{},{}", self.rhs_mean, self.rhs_se)?;
        writeln!(w, "diff,{},{}", self.diff_mean, self.diff_se)?;
        for (k, v) in &self.diagnostics {
            writeln!(w, "{k},{v},")?;
        }
        Ok(())
    }
}

/// Pretty JSON with object keys in sorted order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let tree = serde_json::to_value(value).expect("report types serialize");
    serde_json::to_string_pretty(&tree).expect("json value serializes")
}
