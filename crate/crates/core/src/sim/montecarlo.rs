//! Rejection rates of the dominance tests on the linear DGPs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{dominance_test, BootstrapPlan, DominanceOptions, RefitMode, SupremumGrid};
use crate::rng::derive_seed;
use crate::sim::dgp::{generate, DgpConfig, DgpKind};
use crate::sim::ols::fit_interaction_rows;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub dgp: DgpConfig,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub bootstrap: usize,
    pub level: f64,
    pub grid: SupremumGrid,
}

impl MonteCarloConfig {
    pub fn new(kind: DgpKind) -> Self {
        Self {
            dgp: DgpConfig::new(kind, 500),
            sample_sizes: vec![500, 1000, 2000],
            reps: 500,
            bootstrap: 499,
            level: 0.05,
            grid: SupremumGrid::SamplePoints,
        }
    }
}

/// Share of replications with p-value below the level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionRates {
    pub n: usize,
    pub centered_plus: f64,
    pub centered_minus: f64,
    pub uncentered_plus: f64,
    pub uncentered_minus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionTable {
    pub dgp: DgpKind,
    pub reps: usize,
    pub bootstrap: usize,
    pub rows: Vec<RejectionRates>,
}

impl RejectionTable {
    /// CSV with one line per hypothesis and one column per N × centering.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dgp,hypothesis");
        for c in ["uncentered", "recentered"] {
            for r in &self.rows {
                out.push_str(&format!(",{c}_n{}", r.n));
            }
        }
        out.push('\n');
        type Pick = fn(&RejectionRates) -> (f64, f64);
        let lines: [(&str, Pick); 2] = [
            ("H0+", |r| (r.uncentered_plus, r.centered_plus)),
            ("H0-", |r| (r.uncentered_minus, r.centered_minus)),
        ];
        for (name, pick) in lines {
            out.push_str(&format!("{},{name}", self.dgp.label()));
            for r in &self.rows {
                out.push_str(&format!(",{:.3}", pick(r).0));
            }
            for r in &self.rows {
                out.push_str(&format!(",{:.3}", pick(r).1));
            }
            out.push('\n');
        }
        out
    }
}

/// p-values of one simulated dataset: (centered +, centered −, uncentered +, uncentered −).
pub fn simulate_once(dgp: &DgpConfig, n: usize, bootstrap: usize, grid: SupremumGrid, seed: u64) -> Result<[f64; 4]> {
    let cfg = DgpConfig { n, ..dgp.clone() };
    let (ds, _) = generate::<f64>(&cfg, derive_seed(seed, "mc-data", 0))?;
    let x: Vec<f64> = ds.records().iter().map(|o| o.covariates[0]).collect();
    let d = ds.treatments();
    let y = ds.outcomes();
    let all: Vec<usize> = (0..ds.len()).collect();
    let fit = fit_interaction_rows(&x, &d, &y, &all)?;
    let cates: Vec<f64> = x.iter().map(|&v| fit.cate(v)).collect();
    let plan = BootstrapPlan::new(bootstrap, derive_seed(seed, "mc-bootstrap", 0))?;
    let opts = DominanceOptions {
        grid,
        refit: RefitMode::Full,
    };
    let r = dominance_test(&ds.rows_by_cluster(), &all, &cates, &plan, &opts, |rs, _| {
        let f = fit_interaction_rows(&x, &d, &y, &rs.rows)?;
        Ok(rs.rows.iter().map(|&i| f.cate(x[i])).collect())
    })?;
    Ok([
        r.recentered.plus,
        r.recentered.minus,
        r.uncentered.plus,
        r.uncentered.minus,
    ])
}

/// Runs `reps` simulated datasets per sample size. Replication `k` at sample
/// size `n` is seeded from `(seed, n, k)` alone.
pub fn run_monte_carlo(cfg: &MonteCarloConfig, seed: u64) -> Result<RejectionTable> {
    if cfg.reps == 0 {
        return Err(Error::Config("Monte Carlo needs at least one replication".into()));
    }
    if !matches!(cfg.dgp.kind, DgpKind::Dgp1 | DgpKind::Dgp2) {
        return Err(Error::Config(
            "the Monte Carlo harness uses the single-covariate linear DGPs".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        let pv: Vec<[f64; 4]> = (0..cfg.reps)
            .into_par_iter()
            .map(|k| {
                let s = derive_seed(derive_seed(seed, "monte-carlo", n as u64), "replication", k as u64);
                simulate_once(&cfg.dgp, n, cfg.bootstrap, cfg.grid, s)
            })
            .collect::<Result<_>>()?;
        let rate = |j: usize| pv.iter().filter(|p| p[j] < cfg.level).count() as f64 / cfg.reps as f64;
        rows.push(RejectionRates {
            n,
            centered_plus: rate(0),
            centered_minus: rate(1),
            uncentered_plus: rate(2),
            uncentered_minus: rate(3),
        });
    }
    Ok(RejectionTable {
        dgp: cfg.dgp.kind,
        reps: cfg.reps,
        bootstrap: cfg.bootstrap,
        rows,
    })
}
