//! Layered run configuration: a TOML file with one table per subcommand,
//! overlaid by command-line flags.
//!
//! The manifest written next to every artifact uses the same layout, so
//! `cate --config <dir>/manifest.toml <command>` repeats a run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const OUTPUT_DIR_ENV: &str = "CATE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "cate-out";
pub const DEFAULT_SEED: u64 = 1;
const GLOBAL_KEYS: [&str; 5] = ["seed", "workers", "out", "command", "version"];

/// Parsed config file, or an empty one.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: Table,
    path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self {
            table,
            path: Some(path.to_path_buf()),
        })
    }

    fn describe(&self) -> String {
        self.path
            .as_ref()
            .map_or_else(|| "<flags>".to_string(), |p| p.display().to_string())
    }

    fn global<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.table
            .get(key)
            .cloned()
            .map(|v| {
                v.try_into()
                    .with_context(|| format!("{}: key `{key}`", self.describe()))
            })
            .transpose()
    }

    /// Resolved seed, worker count and output directory. Flags win over the
    /// file; the output directory falls back to the environment, then to
    /// `cate-out`.
    pub fn globals(&self, seed: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) -> Result<Globals> {
        for key in self.table.keys() {
            let known = GLOBAL_KEYS.contains(&key.as_str()) || self.table[key].is_table();
            if !known {
                bail!("{}: unknown top-level key `{key}`", self.describe());
            }
        }
        let out = match out.or(self.global("out")?) {
            Some(p) => p,
            None => std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        Ok(Globals {
            seed: seed.or(self.global("seed")?).unwrap_or(DEFAULT_SEED),
            workers: workers.or(self.global("workers")?),
            out,
        })
    }

    /// Merges the `[section]` table with the flags and deserializes the
    /// result. Keys the target type does not know are rejected.
    pub fn resolve<F, R>(&self, section: &str, flags: &F) -> Result<R>
    where
        F: Serialize,
        R: Serialize + DeserializeOwned,
    {
        let mut merged = match self.table.get(section) {
            Some(Value::Table(t)) => t.clone(),
            Some(_) => bail!("{}: `{section}` must be a table", self.describe()),
            None => Table::new(),
        };
        let overlay = Table::try_from(flags).context("encoding flags")?;
        for (k, v) in overlay {
            merged.insert(k, v);
        }
        let resolved: R = Value::Table(merged.clone())
            .try_into()
            .with_context(|| format!("{}: section [{section}]", self.describe()))?;
        let known = Table::try_from(&resolved).context("encoding resolved config")?;
        if let Some(k) = merged.keys().find(|k| !known.contains_key(*k)) {
            bail!("{}: unknown key `{k}` in [{section}]", self.describe());
        }
        Ok(resolved)
    }
}

#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

/// The manifest. Worker count and output directory are left out: neither
/// changes the artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub version: &'a str,
    #[serde(flatten)]
    pub section: std::collections::BTreeMap<&'a str, &'a C>,
}

pub fn manifest_text<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<String> {
    let m = Manifest {
        command,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        section: [(command, config)].into_iter().collect(),
    };
    toml::to_string(&m).context("encoding manifest")
}

/// Panel CSV layout and the estimation pipeline settings shared by `fit`,
/// `test`, `score` and `qte-compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EstimateConfig {
    pub data: Option<PathBuf>,
    pub id_column: String,
    pub period_column: String,
    pub treatment_column: String,
    pub outcome_column: String,
    /// Covariate columns to read; all remaining columns when absent.
    pub columns: Option<Vec<String>>,
    pub drop_rows: Vec<usize>,
    pub estimator: String,
    /// Covariates the CATE model may use; every loaded covariate when absent.
    pub covariates: Option<Vec<String>>,
    pub score: String,
    pub trees: usize,
    pub min_leaf: usize,
    pub nuisance_trees: Option<usize>,
    pub tree_min_leaf: Option<usize>,
    pub cv_folds: usize,
    pub clip: f64,
    /// `pooled`, or the prior-earnings covariate for the earnings-by-period
    /// partition of the local constant model.
    pub partition: String,
    pub median: Option<f64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            data: None,
            id_column: "id".into(),
            period_column: "period".into(),
            treatment_column: "d".into(),
            outcome_column: "y".into(),
            columns: None,
            drop_rows: Vec::new(),
            estimator: "forest".into(),
            covariates: None,
            score: "orthogonal".into(),
            trees: 1000,
            min_leaf: 10,
            nuisance_trees: None,
            tree_min_leaf: None,
            cv_folds: 10,
            clip: 0.01,
            partition: "pooled".into(),
            median: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SimulateConfig {
    pub dgp: String,
    pub n: Option<usize>,
    /// Monte Carlo replications; 0 writes a single dataset instead.
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub sizes: Option<Vec<usize>>,
    pub grid: String,
    pub level: f64,
    pub effect_noise_sd: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            dgp: "dgp1".into(),
            n: None,
            reps: 0,
            b: 499,
            sizes: None,
            grid: "sample-points".into(),
            level: 0.05,
            effect_noise_sd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitConfig {
    #[serde(flatten)]
    pub estimate: EstimateConfig,
    /// `outcome` or a covariate name; no curve when absent.
    pub curve_running: Option<String>,
    pub curve_arm: String,
    pub curve_cap: Option<f64>,
    pub curve_grid: usize,
    #[serde(rename = "curve-B")]
    pub curve_b: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            curve_running: None,
            curve_arm: "all".into(),
            curve_cap: None,
            curve_grid: 200,
            curve_b: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TestConfig {
    #[serde(flatten)]
    pub estimate: EstimateConfig,
    /// `name=arm:band[:threshold[:variable]]`.
    pub subgroups: Vec<String>,
    pub hypothesis: String,
    #[serde(rename = "B")]
    pub b: usize,
    pub recenter: bool,
    pub refit: String,
    pub grid: String,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            subgroups: vec!["all=all:any".into()],
            hypothesis: "both".into(),
            b: 1999,
            recenter: true,
            refit: "full".into(),
            grid: "exact".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ScoreConfig {
    #[serde(flatten)]
    pub estimate: EstimateConfig,
    #[serde(rename = "B")]
    pub b: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            b: 499,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct QteConfig {
    #[serde(flatten)]
    pub estimate: EstimateConfig,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub tau_step: f64,
    #[serde(rename = "B")]
    pub b: usize,
    /// Also run the KS nesting test with CATEs from the estimator.
    pub ks: bool,
    pub refit: String,
}

impl Default for QteConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            tau_lo: 0.05,
            tau_hi: 0.95,
            tau_step: 0.05,
            b: 499,
            ks: false,
            refit: "full".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ReportConfig {
    /// Directory holding a `tests.csv` written by `test`.
    pub from: Option<PathBuf>,
    pub format: String,
    pub title: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            from: None,
            format: "markdown".into(),
            title: "CATE sign tests".into(),
        }
    }
}
