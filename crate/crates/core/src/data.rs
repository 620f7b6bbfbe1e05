//! Clustered panel data: ingestion, covariate selection, subgroup filters and
//! balance diagnostics.
//!
//! A [`PanelDataset`] holds one [`Observation`] per (individual, period) pair.
//! Individuals are the clustering unit: treatment is assigned per individual
//! and every resampling or sample split in the crate moves whole individuals.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{mean_var_population, Scalar};

/// One row of the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub individual_id: String,
    pub period: i64,
    pub treated: bool,
    pub outcome: T,
    pub covariates: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    /// Treatment as a 0/1 scalar.
    pub fn d(&self) -> T {
        if self.treated {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Immutable, validated panel of observations.
#[derive(Debug, Clone)]
pub struct PanelDataset<T> {
    records: Vec<Observation<T>>,
    covariate_names: Vec<String>,
    /// Dense cluster index per row.
    cluster: Vec<usize>,
    /// Individual id per cluster index.
    cluster_keys: Vec<String>,
    /// Unit used for fold and honesty splits. Equals `cluster` except in
    /// bootstrap resamples, where copies of one individual share a group.
    split_group: Vec<usize>,
    n_periods: usize,
}

impl<T: Scalar> PanelDataset<T> {
    /// Validates and indexes `records`.
    pub fn new(records: Vec<Observation<T>>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let width = covariate_names.len();
        let mut cluster_of: HashMap<&str, usize> = HashMap::new();
        let mut cluster_keys = Vec::new();
        let mut arm_of: Vec<bool> = Vec::new();
        let mut cluster = Vec::with_capacity(records.len());
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        let mut periods = BTreeSet::new();
        for (row, obs) in records.iter().enumerate() {
            if !obs.outcome.is_finite() {
                return Err(Error::InvalidRow {
                    row,
                    message: "outcome is not finite".into(),
                });
            }
            if obs.covariates.len() != width {
                return Err(Error::InvalidRow {
                    row,
                    message: format!("expected {width} covariates, found {}", obs.covariates.len()),
                });
            }
            if obs.covariates.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidRow {
                    row,
                    message: "covariate is not finite".into(),
                });
            }
            let c = match cluster_of.get(obs.individual_id.as_str()) {
                Some(&c) => {
                    if arm_of[c] != obs.treated {
                        return Err(Error::TreatmentVaries {
                            individual: obs.individual_id.clone(),
                        });
                    }
                    c
                }
                None => {
                    let c = cluster_keys.len();
                    cluster_of.insert(obs.individual_id.as_str(), c);
                    cluster_keys.push(obs.individual_id.clone());
                    arm_of.push(obs.treated);
                    c
                }
            };
            if !seen.insert((c, obs.period)) {
                return Err(Error::DuplicateObservation {
                    individual: obs.individual_id.clone(),
                    period: obs.period,
                });
            }
            periods.insert(obs.period);
            cluster.push(c);
        }
        let split_group = cluster.clone();
        Ok(Self {
            records,
            covariate_names,
            cluster,
            cluster_keys,
            split_group,
            n_periods: periods.len(),
        })
    }

    pub fn records(&self) -> &[Observation<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_individuals(&self) -> usize {
        self.cluster_keys.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Dense cluster (individual) index per row.
    pub fn clusters(&self) -> &[usize] {
        &self.cluster
    }

    pub fn cluster_key(&self, cluster: usize) -> &str {
        &self.cluster_keys[cluster]
    }

    /// Split-group index per row; see the field docs.
    pub fn split_groups(&self) -> &[usize] {
        &self.split_group
    }

    pub fn outcomes(&self) -> Vec<T> {
        self.records.iter().map(|o| o.outcome).collect()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.records.iter().map(|o| o.treated).collect()
    }

    /// Row indices per cluster, in row order.
    pub fn rows_by_cluster(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_keys.len()];
        for (row, &c) in self.cluster.iter().enumerate() {
            out[c].push(row);
        }
        out
    }

    /// Share of treated rows.
    pub fn treated_share(&self) -> T {
        let n1 = self.records.iter().filter(|o| o.treated).count();
        T::from_count(n1) / T::from_count(self.len())
    }

    /// Builds the resample containing every row of each drawn cluster, with
    /// multiplicity. The k-th draw becomes individual `"{id}#{k}"`; all copies
    /// of one original individual keep a common split group so that fold and
    /// honesty splits never separate them.
    pub fn from_cluster_draws(&self, draws: &[usize]) -> Result<Self> {
        let by_cluster = self.rows_by_cluster();
        let mut records = Vec::new();
        let mut split_group = Vec::new();
        for (k, &c) in draws.iter().enumerate() {
            for &row in &by_cluster[c] {
                let mut obs = self.records[row].clone();
                obs.individual_id = format!("{}#{k}", obs.individual_id);
                records.push(obs);
                split_group.push(c);
            }
        }
        let mut ds = Self::new(records, self.covariate_names.clone())?;
        ds.split_group = split_group;
        Ok(ds)
    }

    /// Subset of rows (in the given order) as a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let records = rows.iter().map(|&r| self.records[r].clone()).collect();
        let mut ds = Self::new(records, self.covariate_names.clone())?;
        ds.split_group = rows.iter().map(|&r| self.split_group[r]).collect();
        Ok(ds)
    }
}

/// Row-major dense feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Vec<T>,
    n_rows: usize,
    n_cols: usize,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(data: Vec<T>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), n_cols)
    }

    /// Single-column matrix.
    pub fn column(values: &[T]) -> Self {
        Self {
            data: values.to_vec(),
            n_rows: values.len(),
            n_cols: 1,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_cols + j]
    }

    /// Rows in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            data,
            n_rows: rows.len(),
            n_cols: self.n_cols,
        }
    }
}

/// Named subset of covariate columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSet {
    pub name: String,
    pub column_indices: Vec<usize>,
}

impl CovariateSet {
    pub fn new(name: impl Into<String>, column_indices: Vec<usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &i in &column_indices {
            if !seen.insert(i) {
                return Err(Error::Config(format!("duplicate covariate index {i}")));
            }
        }
        Ok(Self {
            name: name.into(),
            column_indices,
        })
    }

    /// Every covariate column, in order.
    pub fn all(n_covariates: usize) -> Self {
        Self {
            name: "all".into(),
            column_indices: (0..n_covariates).collect(),
        }
    }

    /// Resolves column names against a dataset's covariate names.
    pub fn from_names(name: impl Into<String>, names: &[&str], available: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                available
                    .iter()
                    .position(|a| a == n)
                    .ok_or_else(|| Error::MissingColumn {
                        column: (*n).to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, idx)
    }
}

/// Copies the selected covariate columns into a row-major matrix.
pub fn select_covariates<T: Scalar>(ds: &PanelDataset<T>, cs: &CovariateSet) -> Result<FeatureMatrix<T>> {
    let width = ds.n_covariates();
    if let Some(&bad) = cs.column_indices.iter().find(|&&i| i >= width) {
        return Err(Error::OutOfBounds { index: bad, len: width });
    }
    let mut data = Vec::with_capacity(ds.len() * cs.column_indices.len());
    for obs in ds.records() {
        data.extend(cs.column_indices.iter().map(|&j| obs.covariates[j]));
    }
    FeatureMatrix::new(data, ds.len(), cs.column_indices.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    All,
    Treated,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeBand<T> {
    Any,
    Zero,
    /// 0 < v < threshold
    PositiveBelow(T),
    /// v ≥ threshold
    AtOrAbove(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandVariable {
    Outcome,
    Covariate(usize),
}

/// Arm and value-band predicate over rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgroupFilter<T> {
    pub arm: Arm,
    pub band: OutcomeBand<T>,
    pub band_variable: BandVariable,
}

impl<T: Scalar> SubgroupFilter<T> {
    pub fn new(arm: Arm, band: OutcomeBand<T>, band_variable: BandVariable) -> Result<Self> {
        match band {
            OutcomeBand::PositiveBelow(t) | OutcomeBand::AtOrAbove(t) if !(t.is_finite() && t > T::zero()) => {
                Err(Error::Config("band threshold must be finite and > 0".into()))
            }
            _ => Ok(Self {
                arm,
                band,
                band_variable,
            }),
        }
    }

    pub fn everything() -> Self {
        Self {
            arm: Arm::All,
            band: OutcomeBand::Any,
            band_variable: BandVariable::Outcome,
        }
    }

    pub fn matches(&self, obs: &Observation<T>) -> bool {
        let arm_ok = match self.arm {
            Arm::All => true,
            Arm::Treated => obs.treated,
            Arm::Control => !obs.treated,
        };
        if !arm_ok {
            return false;
        }
        let v = match self.band_variable {
            BandVariable::Outcome => obs.outcome,
            BandVariable::Covariate(j) => match obs.covariates.get(j) {
                Some(&v) => v,
                None => return false,
            },
        };
        match self.band {
            OutcomeBand::Any => true,
            OutcomeBand::Zero => v == T::zero(),
            OutcomeBand::PositiveBelow(t) => v > T::zero() && v < t,
            OutcomeBand::AtOrAbove(t) => v >= t,
        }
    }
}

/// Indices of rows satisfying the filter, ascending.
pub fn apply_filter<T: Scalar>(ds: &PanelDataset<T>, f: &SubgroupFilter<T>) -> Vec<usize> {
    ds.records()
        .iter()
        .enumerate()
        .filter(|(_, o)| f.matches(o))
        .map(|(i, _)| i)
        .collect()
}

/// Absolute standardized difference in percentage points,
/// `|mean(a) − mean(b)| / sqrt((var(a) + var(b)) / 2) × 100`, with population
/// variances.
pub fn standardized_difference<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let (ma, va) = mean_var_population(a).ok_or(Error::EmptyDataset)?;
    let (mb, vb) = mean_var_population(b).ok_or(Error::EmptyDataset)?;
    let pooled = ((va + vb) / T::lit(2.0)).sqrt();
    let gap = (ma - mb).abs();
    if pooled == T::zero() {
        return if gap == T::zero() {
            Ok(T::zero())
        } else {
            Err(Error::UndefinedSd)
        };
    }
    Ok(gap / pooled * T::lit(100.0))
}

/// Maps logical panel columns onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id: String,
    pub period: String,
    pub treatment: String,
    pub outcome: String,
    /// Covariate columns; `None` takes every remaining column in header order.
    pub covariates: Option<Vec<String>>,
    /// Zero-based data rows to drop before validation.
    pub drop_rows: Vec<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            period: "period".into(),
            treatment: "d".into(),
            outcome: "y".into(),
            covariates: None,
            drop_rows: Vec::new(),
        }
    }
}

/// Suffix of the indicator column synthesized for a covariate with blanks.
pub const MISSING_SUFFIX: &str = "_missing";

pub fn load_panel_csv<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<PanelDataset<T>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel_csv(file, schema)
}

/// Parses a panel from CSV text.
///
/// Blank covariate cells are imputed as 0 and a `<name>_missing` indicator
/// column is appended for every covariate that had at least one blank.
pub fn read_panel_csv<T: Scalar, R: Read>(reader: R, schema: &CsvSchema) -> Result<PanelDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };
    let id_col = find(&schema.id)?;
    let period_col = find(&schema.period)?;
    let d_col = find(&schema.treatment)?;
    let y_col = find(&schema.outcome)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, period_col, d_col, y_col].contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_cols = cov_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let drop: BTreeSet<usize> = schema.drop_rows.iter().copied().collect();
    let mut records = Vec::new();
    let mut missing: Vec<Vec<bool>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if drop.contains(&row) {
            continue;
        }
        let cell = |col: usize| rec.get(col).unwrap_or("");
        let id = cell(id_col);
        if id.is_empty() {
            return Err(Error::InvalidRow {
                row,
                message: "empty individual id".into(),
            });
        }
        let period: i64 = parse_number::<f64>(cell(period_col), row, &schema.period).and_then(|p| {
            if p.fract() == 0.0 {
                Ok(p as i64)
            } else {
                Err(Error::InvalidRow {
                    row,
                    message: format!("period `{p}` is not an integer"),
                })
            }
        })?;
        let d: f64 = parse_number(cell(d_col), row, &schema.treatment)?;
        let treated = if d == 1.0 {
            true
        } else if d == 0.0 {
            false
        } else {
            return Err(Error::InvalidRow {
                row,
                message: format!("treatment `{}` is not 0/1", cell(d_col)),
            });
        };
        let outcome: T = parse_number(cell(y_col), row, &schema.outcome)?;
        let mut covariates = Vec::with_capacity(cov_cols.len());
        let mut miss = Vec::with_capacity(cov_cols.len());
        for (&col, name) in cov_cols.iter().zip(&cov_names) {
            let raw = cell(col);
            if raw.is_empty() {
                covariates.push(T::zero());
                miss.push(true);
            } else {
                covariates.push(parse_number(raw, row, name)?);
                miss.push(false);
            }
        }
        records.push(Observation {
            individual_id: id.to_string(),
            period,
            treated,
            outcome,
            covariates,
        });
        missing.push(miss);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut names = cov_names.clone();
    let flagged: Vec<usize> = (0..cov_names.len()).filter(|&j| missing.iter().any(|m| m[j])).collect();
    for &j in &flagged {
        names.push(format!("{}{MISSING_SUFFIX}", cov_names[j]));
    }
    for (obs, miss) in records.iter_mut().zip(&missing) {
        for &j in &flagged {
            obs.covariates.push(if miss[j] { T::one() } else { T::zero() });
        }
    }
    PanelDataset::new(records, names)
}

fn parse_number<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<T> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .and_then(T::from_f64)
        .ok_or_else(|| Error::InvalidRow {
            row,
            message: format!("column `{column}`: cannot parse `{raw}` as a finite number"),
        })
}

/// Writes the panel with header `id,period,d,y,<covariates...>`.
///
/// Numbers use the shortest representation that parses back to the same
/// value, so `read_panel_csv` recovers the numeric content bit-exactly.
pub fn write_panel_csv<T: Scalar, W: Write>(ds: &PanelDataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "period".into(), "d".into(), "y".into()];
    header.extend(ds.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for obs in ds.records() {
        let mut rec = vec![
            obs.individual_id.clone(),
            obs.period.to_string(),
            if obs.treated { "1".into() } else { "0".into() },
            format_number(obs.outcome),
        ];
        rec.extend(obs.covariates.iter().map(|&c| format_number(c)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Shortest round-trip decimal for the value at its native precision.
pub fn format_number<T: Scalar>(v: T) -> String {
    // f32 values print through f32 to keep the representation short.
    if std::mem::size_of::<T>() == 4 {
        format!("{}", v.to_f32().unwrap_or(f32::NAN))
    } else {
        format!("{}", v.to_f64_lossy())
    }
}
