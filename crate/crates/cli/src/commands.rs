//! Subcommand bodies. Each returns the artifacts it produced as
//! `(file name, contents)` pairs; `main` writes them next to the manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cate_core::cate::{smooth_cates, CateModel, CateTreeConfig, PartitionSpec, SmoothOptions};
use cate_core::data::{
    apply_filter, format_number, load_panel_csv, Arm, BandVariable, CovariateSet, CsvSchema, OutcomeBand,
    SubgroupFilter,
};
use cate_core::inference::{BootstrapPlan, DominanceOptions, RefitMode, SupremumGrid};
use cate_core::nuisance::{cross_fit_nuisances, NuisanceFit};
use cate_core::pipeline::{estimate_cates, full_refit, run_battery, Estimator, Subgroup};
use cate_core::qte::{ks_nesting_test, qte, qte_bands, tau_grid};
use cate_core::rng::derive_seed;
use cate_core::score::{ate, orthogonal_score, unadjusted_score, ScoreKind};
use cate_core::sim::{generate, run_monte_carlo, DgpConfig, DgpKind, MonteCarloConfig};
use cate_core::{Dataset, Pipeline};

use crate::config::{EstimateConfig, FitConfig, QteConfig, ReportConfig, ScoreConfig, SimulateConfig, TestConfig};
use crate::report::{Cell, Format, ReportTable};

pub type Artifacts = Vec<(String, String)>;

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn num(v: f64) -> String {
    format_number(v)
}

fn parse_grid(s: &str) -> Result<SupremumGrid> {
    match s {
        "exact" => Ok(SupremumGrid::Exact),
        "sample-points" => Ok(SupremumGrid::SamplePoints),
        other => bail!("unknown supremum grid `{other}` (exact, sample-points)"),
    }
}

fn parse_refit(s: &str) -> Result<RefitMode> {
    match s {
        "full" => Ok(RefitMode::Full),
        "fixed" => Ok(RefitMode::FixedModel),
        other => bail!("unknown refit mode `{other}` (full, fixed)"),
    }
}

fn parse_score(s: &str) -> Result<ScoreKind> {
    match s {
        "orthogonal" => Ok(ScoreKind::Orthogonal),
        "unadjusted" => Ok(ScoreKind::Unadjusted),
        other => bail!("unknown score `{other}` (orthogonal, unadjusted)"),
    }
}

pub fn load_data(est: &EstimateConfig) -> Result<Dataset> {
    let Some(path) = &est.data else {
        bail!("no input data: pass --data or set `data` in the config");
    };
    let schema = CsvSchema {
        id: est.id_column.clone(),
        period: est.period_column.clone(),
        treatment: est.treatment_column.clone(),
        outcome: est.outcome_column.clone(),
        covariates: est.columns.clone(),
        drop_rows: est.drop_rows.clone(),
    };
    load_panel_csv(path, &schema).with_context(|| format!("data: loading {}", path.display()))
}

fn covariate_set(est: &EstimateConfig, ds: &Dataset) -> Result<CovariateSet> {
    Ok(match &est.covariates {
        None => CovariateSet::all(ds.n_covariates()),
        Some(names) => {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            CovariateSet::from_names(names.join("+"), &refs, ds.covariate_names())?
        }
    })
}

fn covariate_index(ds: &Dataset, name: &str) -> Result<usize> {
    ds.covariate_names()
        .iter()
        .position(|c| c == name)
        .with_context(|| format!("covariate `{name}` not found"))
}

pub fn pipeline_config(est: &EstimateConfig, ds: &Dataset) -> Result<Pipeline> {
    let mut cfg = Pipeline::new(Estimator::parse(&est.estimator)?, covariate_set(est, ds)?);
    cfg.score = parse_score(&est.score)?;
    cfg.cate_forest.trees = est.trees;
    cfg.cate_forest.min_leaf = est.min_leaf;
    cfg.nuisance.forest.trees = est.nuisance_trees.unwrap_or(est.trees);
    cfg.nuisance.forest.min_leaf = est.min_leaf;
    cfg.nuisance.clip = est.clip;
    cfg.tree = CateTreeConfig {
        cv_folds: est.cv_folds,
        fixed_min_leaf: est.tree_min_leaf,
        ..CateTreeConfig::default()
    };
    cfg.partition = match est.partition.as_str() {
        "pooled" => PartitionSpec::Pooled,
        column => PartitionSpec::EarningsByPeriod {
            column: covariate_index(ds, column)?,
            median: est.median,
        },
    };
    Ok(cfg)
}

fn id_period(ds: &Dataset, i: usize) -> [String; 2] {
    let o = &ds.records()[i];
    [o.individual_id.clone(), o.period.to_string()]
}

fn cate_csv(ds: &Dataset, values: &[f64]) -> Result<String> {
    csv_text(
        &["id", "period", "cate"],
        values.iter().enumerate().map(|(i, &c)| {
            let [id, p] = id_period(ds, i);
            vec![id, p, num(c)]
        }),
    )
}

fn nuisance_csv(ds: &Dataset, nf: &NuisanceFit<f64>, score: &[f64]) -> Result<String> {
    csv_text(
        &["id", "period", "fold", "mu1", "mu0", "p_raw", "p", "score"],
        (0..ds.len()).map(|i| {
            let [id, p] = id_period(ds, i);
            vec![
                id,
                p,
                nf.fold[i].label().to_string(),
                num(nf.mu1_hat[i]),
                num(nf.mu0_hat[i]),
                num(nf.p_raw[i]),
                num(nf.p_hat[i]),
                num(score[i]),
            ]
        }),
    )
}

pub fn simulate(cfg: &SimulateConfig, seed: u64) -> Result<Artifacts> {
    let kind = DgpKind::parse(&cfg.dgp)?;
    if cfg.reps == 0 {
        let mut dgp = DgpConfig::new(kind, cfg.n.unwrap_or(1000));
        if let Some(sd) = cfg.effect_noise_sd {
            dgp.shift.effect_noise_sd = sd;
        }
        let (ds, truth) = generate::<f64>(&dgp, seed).context("simulate: generating data")?;
        let mut data = Vec::new();
        cate_core::data::write_panel_csv(&ds, &mut data)?;
        let truth_csv = csv_text(
            &["id", "period", "true_cate"],
            truth.true_cate.iter().enumerate().map(|(i, &c)| {
                let [id, p] = id_period(&ds, i);
                vec![id, p, num(c)]
            }),
        )?;
        log::info!("simulated {} rows, true ATE {}", ds.len(), truth.true_ate);
        return Ok(vec![
            ("data.csv".into(), String::from_utf8(data)?),
            ("truth.csv".into(), truth_csv),
        ]);
    }
    let mut mc = MonteCarloConfig::new(kind);
    mc.reps = cfg.reps;
    mc.bootstrap = cfg.b;
    mc.level = cfg.level;
    mc.grid = parse_grid(&cfg.grid)?;
    if let Some(s) = &cfg.sizes {
        mc.sample_sizes = s.clone();
    } else if let Some(n) = cfg.n {
        mc.sample_sizes = vec![n];
    }
    let table = run_monte_carlo(&mc, seed).context("simulate: Monte Carlo")?;
    Ok(vec![("rejection.csv".into(), table.to_csv())])
}

pub fn fit(cfg: &FitConfig, seed: u64) -> Result<Artifacts> {
    let ds = load_data(&cfg.estimate)?;
    let pc = pipeline_config(&cfg.estimate, &ds)?;
    let out = estimate_cates(&ds, &pc, seed).context("fit")?;
    let mut arts = vec![("cates.csv".to_string(), cate_csv(&ds, &out.cates.values)?)];
    if let (Some(nf), Some(sv)) = (&out.nuisance, &out.score) {
        arts.push(("nuisances.csv".into(), nuisance_csv(&ds, nf, &sv.values)?));
    }
    let names: Vec<String> = pc
        .covariates
        .column_indices
        .iter()
        .map(|&j| ds.covariate_names()[j].clone())
        .collect();
    match &out.model {
        CateModel::Tree(t) => arts.push(("tree.txt".into(), t.render(&names))),
        CateModel::LocalConstant(m) => {
            let rows = m
                .groups
                .iter()
                .zip(m.gamma.iter().zip(&m.delta))
                .map(|(g, (&c, &d))| vec![g.to_string(), num(c), num(d)]);
            arts.push((
                "groups.csv".into(),
                csv_text(&["group", "control_mean", "effect"], rows)?,
            ));
        }
        CateModel::Forests(_) => {}
    }
    if let Some(running) = &cfg.curve_running {
        arts.push(("curve.csv".into(), curve(cfg, &ds, &out.cates.values, running, seed)?));
    }
    Ok(arts)
}

fn curve(cfg: &FitConfig, ds: &Dataset, cates: &[f64], running: &str, seed: u64) -> Result<String> {
    let xs: Vec<f64> = if running == "outcome" {
        ds.outcomes()
    } else {
        let j = covariate_index(ds, running)?;
        ds.records().iter().map(|o| o.covariates[j]).collect()
    };
    let arm = parse_arm(&cfg.curve_arm)?;
    let filter = SubgroupFilter::new(arm, OutcomeBand::Any, BandVariable::Outcome)?;
    let idx = apply_filter(ds, &filter);
    let opts = SmoothOptions {
        grid_size: cfg.curve_grid,
        cap: cfg.curve_cap,
    };
    let by = ds.rows_by_cluster();
    let plan;
    let bands = if cfg.curve_b > 0 {
        plan = BootstrapPlan::new(cfg.curve_b, derive_seed(seed, "curve-bands", 0))?;
        Some((by.as_slice(), &plan))
    } else {
        None
    };
    let c = smooth_cates(cates, &xs, &idx, &opts, bands).context("fit: smoothing CATEs")?;
    csv_text(
        &["x", "effect", "ci_low", "ci_high", "bandwidth"],
        (0..c.grid.len()).map(|k| {
            vec![
                num(c.grid[k]),
                num(c.effect[k]),
                num(c.ci_low[k]),
                num(c.ci_high[k]),
                num(c.bandwidth),
            ]
        }),
    )
}

pub fn score(cfg: &ScoreConfig, seed: u64) -> Result<Artifacts> {
    let ds = load_data(&cfg.estimate)?;
    let pc = pipeline_config(&cfg.estimate, &ds)?;
    let mut arts = Vec::new();
    let sv = match pc.score {
        ScoreKind::Orthogonal => {
            let nf = cross_fit_nuisances(&ds, &pc.covariates, &pc.nuisance, derive_seed(seed, "nuisance", 0))
                .context("score: nuisance")?;
            let sv = orthogonal_score(&ds, &nf)?;
            arts.push(("scores.csv".into(), nuisance_csv(&ds, &nf, &sv.values)?));
            sv
        }
        ScoreKind::Unadjusted => {
            let sv = unadjusted_score(&ds, None)?;
            let rows = (0..ds.len()).map(|i| {
                let [id, p] = id_period(&ds, i);
                vec![id, p, num(sv.values[i])]
            });
            arts.push(("scores.csv".into(), csv_text(&["id", "period", "score"], rows)?));
            sv
        }
    };
    let plan = BootstrapPlan::new(cfg.b, derive_seed(seed, "ate", 0))?;
    let a = ate(&sv, &plan).context("score: ATE")?;
    arts.push((
        "ate.csv".into(),
        csv_text(
            &["score", "estimate", "ci_low", "ci_high", "B"],
            [vec![
                pc.score.label().to_string(),
                num(a.estimate),
                num(a.ci_low),
                num(a.ci_high),
                cfg.b.to_string(),
            ]],
        )?,
    ));
    Ok(arts)
}

fn parse_arm(s: &str) -> Result<Arm> {
    match s {
        "all" => Ok(Arm::All),
        "treated" => Ok(Arm::Treated),
        "control" => Ok(Arm::Control),
        other => bail!("unknown arm `{other}` (all, treated, control)"),
    }
}

/// `name=arm:band[:threshold[:variable]]`, e.g. `above=control:at-or-above:3000`.
pub fn parse_subgroup(spec: &str, ds: &Dataset) -> Result<Subgroup<f64>> {
    let (name, rest) = spec
        .split_once('=')
        .with_context(|| format!("subgroup `{spec}`: expected name=arm:band[:threshold[:variable]]"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() < 2 || parts.len() > 4 {
        bail!("subgroup `{spec}`: expected name=arm:band[:threshold[:variable]]");
    }
    let arm = parse_arm(parts[0])?;
    let threshold = || -> Result<f64> {
        parts
            .get(2)
            .with_context(|| format!("subgroup `{spec}`: band `{}` needs a threshold", parts[1]))?
            .parse()
            .with_context(|| format!("subgroup `{spec}`: bad threshold"))
    };
    let band = match parts[1] {
        "any" => OutcomeBand::Any,
        "zero" => OutcomeBand::Zero,
        "positive-below" => OutcomeBand::PositiveBelow(threshold()?),
        "at-or-above" => OutcomeBand::AtOrAbove(threshold()?),
        other => bail!("subgroup `{spec}`: unknown band `{other}` (any, zero, positive-below, at-or-above)"),
    };
    let variable = match parts.get(3) {
        None | Some(&"outcome") => BandVariable::Outcome,
        Some(c) => BandVariable::Covariate(covariate_index(ds, c)?),
    };
    Ok(Subgroup {
        name: name.to_string(),
        filter: SubgroupFilter::new(arm, band, variable)?,
    })
}

pub const TEST_HEADER: [&str; 11] = [
    "subgroup",
    "n",
    "pct_positive",
    "pct_negative",
    "d_plus",
    "d_minus",
    "statistic",
    "p_plus",
    "p_minus",
    "completed",
    "dropped",
];

pub fn test(cfg: &TestConfig, seed: u64) -> Result<Artifacts> {
    let (want_plus, want_minus) = match cfg.hypothesis.as_str() {
        "both" => (true, true),
        "plus" => (true, false),
        "minus" => (false, true),
        other => bail!("unknown hypothesis `{other}` (plus, minus, both)"),
    };
    let ds = load_data(&cfg.estimate)?;
    let pc = pipeline_config(&cfg.estimate, &ds)?;
    let subgroups = cfg
        .subgroups
        .iter()
        .map(|s| parse_subgroup(s, &ds))
        .collect::<Result<Vec<_>>>()?;
    let out = estimate_cates(&ds, &pc, seed).context("test: estimating CATEs")?;
    let plan = BootstrapPlan::new(cfg.b, derive_seed(seed, "dominance", 0))?;
    let opts = DominanceOptions {
        grid: parse_grid(&cfg.grid)?,
        refit: parse_refit(&cfg.refit)?,
    };
    let reports = run_battery(&ds, &out.cates.values, &subgroups, &plan, &opts, full_refit(&ds, &pc))
        .context("test: dominance battery")?;
    let statistic = if cfg.recenter { "recentered" } else { "uncentered" };
    let rows = reports.iter().map(|r| {
        let p = r.test.p_values(cfg.recenter);
        vec![
            r.name.clone(),
            r.n.to_string(),
            num(r.shares.pct_positive),
            num(r.shares.pct_negative),
            num(r.test.d_plus),
            num(r.test.d_minus),
            statistic.to_string(),
            if want_plus { num(p.plus) } else { String::new() },
            if want_minus { num(p.minus) } else { String::new() },
            r.test.completed.to_string(),
            r.test.dropped.to_string(),
        ]
    });
    Ok(vec![
        ("tests.csv".into(), csv_text(&TEST_HEADER, rows)?),
        ("cates.csv".into(), cate_csv(&ds, &out.cates.values)?),
    ])
}

pub fn qte_compare(cfg: &QteConfig, seed: u64) -> Result<Artifacts> {
    let ds = load_data(&cfg.estimate)?;
    let taus = tau_grid(cfg.tau_lo, cfg.tau_hi, cfg.tau_step)?;
    let curve = qte(&ds, &taus).context("qte-compare: quantiles")?;
    let plan = BootstrapPlan::new(cfg.b, derive_seed(seed, "qte-bands", 0))?;
    let bands = qte_bands(&ds, &taus, &plan).context("qte-compare: bands")?;
    let rows = (0..taus.len()).map(|k| {
        vec![
            num(taus[k]),
            num(curve.q1[k]),
            num(curve.q0[k]),
            num(curve.qte[k]),
            num(bands[k].low),
            num(bands[k].high),
        ]
    });
    let mut arts = vec![(
        "qte.csv".to_string(),
        csv_text(&["tau", "q_treated", "q_control", "qte", "ci_low", "ci_high"], rows)?,
    )];
    if cfg.ks {
        let pc = pipeline_config(&cfg.estimate, &ds)?;
        let out = estimate_cates(&ds, &pc, seed).context("qte-compare: estimating CATEs")?;
        let plan = BootstrapPlan::new(cfg.b, derive_seed(seed, "ks", 0))?;
        let r = ks_nesting_test(
            &ds,
            &out.cates.values,
            &plan,
            parse_refit(&cfg.refit)?,
            full_refit(&ds, &pc),
        )
        .context("qte-compare: KS nesting test")?;
        let rows = [
            ("treated", r.ks_treated, r.p_treated),
            ("control", r.ks_control, r.p_control),
            ("joint", r.ks_joint, r.p_joint),
        ]
        .map(|(a, s, p)| {
            vec![
                a.to_string(),
                num(s),
                num(p),
                r.completed.to_string(),
                r.dropped.to_string(),
            ]
        });
        arts.push((
            "ks.csv".into(),
            csv_text(&["arm", "statistic", "p_value", "completed", "dropped"], rows)?,
        ));
        arts.push(("cates.csv".into(), cate_csv(&ds, &out.cates.values)?));
    }
    Ok(arts)
}

/// Renders the `tests.csv` of a `test` run as a sign-test table.
pub fn report(cfg: &ReportConfig) -> Result<Artifacts> {
    let Some(dir) = &cfg.from else {
        bail!("report: pass --from <directory of a `test` run>");
    };
    let formats: Vec<Format> = match cfg.format.as_str() {
        "both" => vec![Format::Markdown, Format::Csv],
        f => vec![Format::parse(f)?],
    };
    let table = table_from_tests(&dir.join("tests.csv"), &cfg.title)?;
    formats
        .into_iter()
        .map(|f| Ok((format!("report.{}", f.extension()), table.render(f)?)))
        .collect()
}

fn table_from_tests(path: &Path, title: &str) -> Result<ReportTable> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("report: reading {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TEST_HEADER {
        bail!("report: {} is not a `test` result table", path.display());
    }
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let has = |col: usize| records.iter().any(|r| !r[col].is_empty());
    let (plus, minus) = (has(7), has(8));
    let mut columns: Vec<String> = vec!["N".into(), "Positive CATEs".into(), "Negative CATEs".into()];
    if plus {
        columns.push("p-value H0+".into());
    }
    if minus {
        columns.push("p-value H0-".into());
    }
    let mut t = ReportTable::new(title, columns);
    let f = |s: &str| -> Result<f64> { s.parse().with_context(|| format!("report: bad number `{s}`")) };
    let mut reps = Vec::new();
    for r in &records {
        let mut cells = vec![
            Cell::Count(r[1].parse().context("report: bad count")?),
            Cell::Share(f(&r[2])?),
            Cell::Share(f(&r[3])?),
        ];
        if plus {
            cells.push(Cell::PValue(f(&r[7])?));
        }
        if minus {
            cells.push(Cell::PValue(f(&r[8])?));
        }
        t.push(&r[0], cells)?;
        reps.push((r[6].to_string(), r[9].to_string()));
    }
    reps.dedup();
    if let [(statistic, completed)] = reps.as_slice() {
        t.footnote = format!("p-values from {completed} cluster bootstrap replications, {statistic} statistics.");
    }
    Ok(t)
}
