//! `cate`: simulate data, estimate CATEs and run the sign and nesting tests.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ConfigFile, FitConfig, QteConfig, ReportConfig, ScoreConfig, SimulateConfig, TestConfig};

#[derive(Parser, Debug)]
#[command(
    name = "cate",
    version,
    about = "Heterogeneous treatment effects in randomized experiments"
)]
struct Cli {
    /// TOML config with one table per subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory [default: $CATE_OUTPUT_DIR, else ./cate-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset, or run the dominance-test Monte Carlo with --reps.
    Simulate(SimulateArgs),
    /// Estimate CATEs and write them with nuisances, tree and curve.
    Fit(FitArgs),
    /// Sign shares and dominance tests per subgroup.
    Test(TestArgs),
    /// Quantile treatment effects and the KS nesting test.
    QteCompare(QteArgs),
    /// Render the table of a `test` run as markdown or CSV.
    Report(ReportArgs),
    /// Per-row scores and the ATE.
    Score(ScoreArgs),
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SimulateArgs {
    /// dgp1, dgp2, kink or shift.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dgp: Option<String>,
    /// Individuals.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Monte Carlo replications; 0 writes one dataset.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<usize>,
    /// Bootstrap replications inside each Monte Carlo replication.
    #[arg(long = "B")]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    /// Sample sizes of the Monte Carlo, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sizes: Option<Vec<usize>>,
    /// exact or sample-points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    /// Standard deviation of the idiosyncratic effect in the shift DGP.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    effect_noise_sd: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EstimateArgs {
    /// Panel CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    id_column: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period_column: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    treatment_column: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome_column: Option<String>,
    /// Covariate columns to load [default: all remaining columns].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    columns: Option<Vec<String>>,
    /// Zero-based data rows to drop.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    drop_rows: Option<Vec<usize>>,
    /// local-constant, tree or forest.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<String>,
    /// Covariates for the CATE model [default: all loaded].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    covariates: Option<Vec<String>>,
    /// orthogonal or unadjusted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trees: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_leaf: Option<usize>,
    /// Trees per nuisance forest [default: --trees].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nuisance_trees: Option<usize>,
    /// Fix the CATE tree's leaf size instead of cross-validating it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tree_min_leaf: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_folds: Option<usize>,
    /// Propensity clipping bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    clip: Option<f64>,
    /// pooled, or the prior-earnings covariate for earnings-by-period groups.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<String>,
    /// Tier cut for the partition [default: median of positive values].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    median: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    estimate: EstimateArgs,
    /// Smooth the CATEs against `outcome` or a covariate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_running: Option<String>,
    /// Rows entering the curve: all, treated or control.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_arm: Option<String>,
    /// Drop rows whose running value exceeds the cap.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_cap: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_grid: Option<usize>,
    /// Bootstrap replications for the curve bands; 0 disables them.
    #[arg(long = "curve-B")]
    #[serde(rename = "curve-B", skip_serializing_if = "Option::is_none")]
    curve_b: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    estimate: EstimateArgs,
    /// Repeatable. name=arm:band[:threshold[:variable]], e.g.
    /// above=control:at-or-above:3000.
    #[arg(long = "subgroup")]
    #[serde(rename = "subgroups", skip_serializing_if = "Option::is_none")]
    subgroups: Option<Vec<String>>,
    /// plus, minus or both.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hypothesis: Option<String>,
    #[arg(long = "B")]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    /// Use the re-centered bootstrap statistics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    recenter: Option<bool>,
    /// full re-estimates the pipeline per replicate; fixed resamples the CATEs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    refit: Option<String>,
    /// exact or sample-points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct QteArgs {
    #[command(flatten)]
    #[serde(flatten)]
    estimate: EstimateArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_lo: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_hi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_step: Option<f64>,
    #[arg(long = "B")]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    /// Also run the KS nesting test on the estimated CATEs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    ks: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    refit: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ReportArgs {
    /// Output directory of a `test` run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<PathBuf>,
    /// markdown, csv or both.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    title: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    estimate: EstimateArgs,
    /// Bootstrap replications for the ATE interval.
    #[arg(long = "B")]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
}

fn write_all(dir: &Path, manifest: String, artifacts: commands::Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in std::iter::once(("manifest.toml".to_string(), manifest)).chain(artifacts) {
        let path = dir.join(&name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let g = file.globals(cli.seed, cli.workers, cli.out)?;
    if let Some(w) = g.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("starting the worker pool")?;
    }
    let seed = g.seed;
    let (name, manifest, artifacts) = match &cli.command {
        Command::Simulate(a) => {
            let c: SimulateConfig = file.resolve("simulate", a)?;
            (
                "simulate",
                config::manifest_text("simulate", seed, &c)?,
                commands::simulate(&c, seed)?,
            )
        }
        Command::Fit(a) => {
            let c: FitConfig = file.resolve("fit", a)?;
            ("fit", config::manifest_text("fit", seed, &c)?, commands::fit(&c, seed)?)
        }
        Command::Test(a) => {
            let c: TestConfig = file.resolve("test", a)?;
            (
                "test",
                config::manifest_text("test", seed, &c)?,
                commands::test(&c, seed)?,
            )
        }
        Command::QteCompare(a) => {
            let c: QteConfig = file.resolve("qte-compare", a)?;
            (
                "qte-compare",
                config::manifest_text("qte-compare", seed, &c)?,
                commands::qte_compare(&c, seed)?,
            )
        }
        Command::Report(a) => {
            let c: ReportConfig = file.resolve("report", a)?;
            (
                "report",
                config::manifest_text("report", seed, &c)?,
                commands::report(&c)?,
            )
        }
        Command::Score(a) => {
            let c: ScoreConfig = file.resolve("score", a)?;
            (
                "score",
                config::manifest_text("score", seed, &c)?,
                commands::score(&c, seed)?,
            )
        }
    };
    write_all(&g.out, manifest, artifacts).with_context(|| format!("{name}: writing artifacts"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors repeat their source in their own message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.ends_with(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
