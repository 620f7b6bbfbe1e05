use cate_core::data::{CovariateSet, Observation, PanelDataset};
use cate_core::inference::BootstrapPlan;
use cate_core::nuisance::{cross_fit_nuisances, Fold, ForestConfig, NuisanceConfig, NuisanceFit};
use cate_core::score::{ate, orthogonal_score, orthogonal_value, unadjusted_score, ScoreKind, ScoreVector};
use cate_core::sim::{generate, DgpConfig, DgpKind};
use proptest::prelude::*;

/// A world with X ∈ {0, 1}, D ∈ {0, 1}, Y ∈ {0, 1}: `p[x]` is Pr(D = 1 | x)
/// and `m[d][x]` is Pr(Y = 1 | x, d).
struct World {
    p: [f64; 2],
    m: [[f64; 2]; 2],
}

impl World {
    /// `E[Y* | X = x]` by summing over the four (D, Y) cells, with the
    /// nuisances `mu1`, `mu0`, `ph` plugged into the score.
    fn expected_score(&self, x: usize, mu1: f64, mu0: f64, ph: f64) -> f64 {
        let mut e = 0.0;
        for d in [false, true] {
            let pd = if d { self.p[x] } else { 1.0 - self.p[x] };
            let m = self.m[usize::from(d)][x];
            for y in [0.0, 1.0] {
                let py = if y == 1.0 { m } else { 1.0 - m };
                e += pd * py * orthogonal_value(d, y, mu1, mu0, ph);
            }
        }
        e
    }
}

#[test]
fn conditional_mean_of_score_is_the_cate() {
    let worlds = [
        World {
            p: [0.5, 0.5],
            m: [[0.2, 0.6], [0.7, 0.65]],
        },
        World {
            p: [0.3, 0.8],
            m: [[0.1, 0.9], [0.4, 0.2]],
        },
    ];
    for w in &worlds {
        for x in 0..2 {
            let cate = w.m[1][x] - w.m[0][x];
            let oracle = w.expected_score(x, w.m[1][x], w.m[0][x], w.p[x]);
            assert!((oracle - cate).abs() < 1e-10, "x={x}: {oracle} vs {cate}");
            // wrong outcome models, right propensity
            let wrong_mu = w.expected_score(x, 0.33, 0.91, w.p[x]);
            assert!((wrong_mu - cate).abs() < 1e-10);
            // right outcome models, wrong propensity
            let wrong_p = w.expected_score(x, w.m[1][x], w.m[0][x], 0.17);
            assert!((wrong_p - cate).abs() < 1e-10);
        }
    }
}

#[test]
fn unadjusted_examples() {
    let mk = |d: bool, y: f64, id: &str| Observation {
        individual_id: id.into(),
        period: 1,
        treated: d,
        outcome: y,
        covariates: vec![],
    };
    let ds = PanelDataset::new(
        vec![mk(true, 10.0, "a"), mk(false, 10.0, "b"), mk(true, 4.0, "c")],
        vec![],
    )
    .unwrap();
    let half = unadjusted_score(&ds, Some(0.5)).unwrap();
    assert_eq!(half.values[..2], [20.0, -20.0]);
    let quarter = unadjusted_score(&ds, Some(0.25)).unwrap();
    assert_eq!(quarter.values[2], 16.0);
    assert_eq!(quarter.kind, ScoreKind::Unadjusted);
}

/// Across seeded RCT draws the mean orthogonal score sits within three
/// standard errors of the true ATE.
#[test]
fn mean_score_recovers_ate() {
    let cfg = NuisanceConfig {
        forest: ForestConfig {
            trees: 100,
            min_leaf: 10,
            ..ForestConfig::default()
        },
        clip: 0.01,
    };
    let runs = 20;
    let mut within = 0;
    let mut z_sum = 0.0;
    for seed in 0..runs {
        let (ds, truth) = generate::<f64>(&DgpConfig::new(DgpKind::Dgp1, 2000), 100 + seed).unwrap();
        let nf = cross_fit_nuisances(&ds, &CovariateSet::all(1), &cfg, seed).unwrap();
        let sv = orthogonal_score(&ds, &nf).unwrap();
        let n = sv.len() as f64;
        let mean = sv.values.iter().sum::<f64>() / n;
        let var = sv.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let z = (mean - truth.true_ate) / (var / n).sqrt();
        if z.abs() <= 3.0 {
            within += 1;
        }
        z_sum += z;
    }
    assert!(within >= runs - 1, "{within} of {runs} within 3 SE");
    // the average z of independent runs has sd 1/sqrt(runs)
    let z_bar = z_sum / runs as f64;
    assert!(z_bar.abs() * (runs as f64).sqrt() <= 3.0, "mean z {z_bar}");
}

/// True nuisances of the first linear DGP: μ₁ = 2x, μ₀ = x, p = 1/2.
fn oracle(ds: &cate_core::Dataset) -> NuisanceFit<f64> {
    let x: Vec<f64> = ds.records().iter().map(|o| o.covariates[0]).collect();
    NuisanceFit {
        mu1_hat: x.iter().map(|v| 2.0 * v).collect(),
        mu0_hat: x.clone(),
        p_hat: vec![0.5; x.len()],
        p_raw: vec![0.5; x.len()],
        fold: vec![Fold::A; x.len()],
        training_groups: [Vec::new(), Vec::new()],
        n_clipped: 0,
    }
}

#[test]
fn oracle_score_mean_matches_expanded_form() {
    let (ds, _) = generate::<f64>(&DgpConfig::new(DgpKind::Dgp1, 1000), 7).unwrap();
    let nf = oracle(&ds);
    let sv = orthogonal_score(&ds, &nf).unwrap();
    let mean = sv.values.iter().sum::<f64>() / sv.len() as f64;
    // D·Y/p − (1−D)·Y/(1−p) + μ₁(1 − D/p) − μ₀(1 − (1−D)/(1−p))
    let mut total = 0.0;
    for (i, o) in ds.records().iter().enumerate() {
        let d = if o.treated { 1.0 } else { 0.0 };
        let p = nf.p_hat[i];
        total += d * o.outcome / p - (1.0 - d) * o.outcome / (1.0 - p) + nf.mu1_hat[i] * (1.0 - d / p)
            - nf.mu0_hat[i] * (1.0 - (1.0 - d) / (1.0 - p));
    }
    let expanded = total / ds.len() as f64;
    assert!(
        (mean - expanded).abs() <= 1e-12 * expanded.abs().max(1.0),
        "{mean} vs {expanded}"
    );
}

/// With the right propensity and outcome models set to zero the mean score
/// still converges to the ATE at the root-n rate.
#[test]
fn wrong_outcome_models_still_converge() {
    let runs = 100;
    let rmse = |n: usize| {
        let mut ss = 0.0;
        for r in 0..runs {
            let (ds, truth) = generate::<f64>(&DgpConfig::new(DgpKind::Dgp1, n), 1000 + r).unwrap();
            let mut nf = oracle(&ds);
            nf.mu1_hat
                .iter_mut()
                .chain(nf.mu0_hat.iter_mut())
                .for_each(|v| *v = 0.0);
            let sv = orthogonal_score(&ds, &nf).unwrap();
            let mean = sv.values.iter().sum::<f64>() / n as f64;
            ss += (mean - truth.true_ate).powi(2);
        }
        (ss / runs as f64).sqrt()
    };
    let e: Vec<f64> = [1000, 4000, 16000].into_iter().map(rmse).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.0..=4.0).contains(&ratio), "errors {e:?}");
    }
}

#[test]
fn unclipped_propensities_pass_through() {
    let (ds, _) = generate::<f64>(&DgpConfig::new(DgpKind::Dgp1, 600), 8).unwrap();
    let cfg = NuisanceConfig {
        forest: ForestConfig {
            trees: 30,
            ..ForestConfig::default()
        },
        clip: 0.01,
    };
    let nf = cross_fit_nuisances(&ds, &CovariateSet::all(1), &cfg, 9).unwrap();
    assert_eq!(nf.n_clipped, 0);
    assert_eq!(nf.p_hat, nf.p_raw);
}

#[test]
fn ate_examples() {
    let plan = BootstrapPlan::new(50, 1).unwrap();
    let sv = ScoreVector::new(vec![7.0; 4], ScoreKind::Orthogonal, vec![0, 1, 2, 3]).unwrap();
    let a = ate(&sv, &plan).unwrap();
    assert_eq!((a.estimate, a.ci_low, a.ci_high), (7.0, 7.0, 7.0));
    let sv = ScoreVector::new(vec![-1.0, 1.0], ScoreKind::Orthogonal, vec![0, 1]).unwrap();
    assert_eq!(ate(&sv, &plan).unwrap().estimate, 0.0);
}

proptest! {
    /// With a correct propensity the score is linear in Y with slope
    /// ±1/p̂ or ∓1/(1 − p̂) and the residual terms vanish at Y = μ̂_D.
    #[test]
    fn score_at_fitted_value_is_model_difference(
        mu1 in -100.0..100.0f64,
        mu0 in -100.0..100.0f64,
        p in 0.01..0.99f64,
        d in any::<bool>(),
    ) {
        let y = if d { mu1 } else { mu0 };
        let v = orthogonal_value(d, y, mu1, mu0, p);
        prop_assert!((v - (mu1 - mu0)).abs() <= 1e-12 * (1.0 + mu1.abs() + mu0.abs()));
        let step = orthogonal_value(d, y + 1.0, mu1, mu0, p) - v;
        let slope = if d { 1.0 / p } else { -1.0 / (1.0 - p) };
        prop_assert!((step - slope).abs() <= 1e-9 * slope.abs().max(1.0) * (1.0 + y.abs()));
    }
}
