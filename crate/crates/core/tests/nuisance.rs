use cate_core::data::{CovariateSet, FeatureMatrix, Observation, PanelDataset};
use cate_core::nuisance::{
    cross_fit_nuisances, fit_regression_forest, predict_forest, Fold, ForestConfig, Node, NuisanceConfig,
    RegressionTree,
};
use cate_core::rng::stream;
use cate_core::scalar::stable_mean;
use rand::Rng;

fn forest(trees: usize, min_leaf: usize) -> ForestConfig {
    ForestConfig {
        trees,
        min_leaf,
        ..ForestConfig::default()
    }
}

/// One row per individual, covariates `x`, outcome from `y(x, d, rng)`.
fn rct<F>(n: usize, p: usize, seed: u64, y: F) -> PanelDataset<f64>
where
    F: Fn(&[f64], bool, &mut cate_core::rng::StreamRng) -> f64,
{
    let mut rng = stream(seed, "test-rct", 0);
    let records = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let d = rng.random::<bool>();
            let outcome = y(&x, d, &mut rng);
            Observation {
                individual_id: format!("i{i}"),
                period: 1,
                treated: d,
                outcome,
                covariates: x,
            }
        })
        .collect();
    PanelDataset::new(records, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
}

#[test]
fn constant_target_predicts_constant() {
    let mut rng = stream(1, "t", 0);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
    let x = FeatureMatrix::from_rows(&rows).unwrap();
    let y = vec![0.3; 200];
    let clusters: Vec<usize> = (0..200).collect();
    let f = fit_regression_forest(&x, &y, &clusters, &forest(25, 5), 3).unwrap();
    assert!(predict_forest(&f, &x).unwrap().iter().all(|&v| v == 0.3));
}

#[test]
fn single_leaf_tree_returns_estimation_half_mean() {
    let mut rng = stream(2, "t", 0);
    let n = 60;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random()]).collect();
    let x = FeatureMatrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..50) as f64).collect();
    let groups: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..n).collect();
    let t = RegressionTree::fit_honest(&x, &y, &groups, &all, &[0], n, &mut stream(2, "h", 0)).unwrap();
    assert_eq!(t.n_leaves(), 1);
    let est: Vec<f64> = t.estimation_groups().iter().map(|&g| y[g]).collect();
    let oracle = est.iter().sum::<f64>() / est.len() as f64;
    assert_eq!(t.predict_row(&[0.5]), oracle);
}

/// y = 1{x > 0.5}: the forest's squared error against the true regression
/// function stays small.
#[test]
fn step_function_is_learned() {
    let n = 2000;
    let mut rng = stream(3, "t", 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random()]).collect();
    let x = FeatureMatrix::from_rows(&rows).unwrap();
    let truth = |v: f64| if v > 0.5 { 1.0 } else { 0.0 };
    let y: Vec<f64> = rows.iter().map(|r| truth(r[0])).collect();
    let clusters: Vec<usize> = (0..n).collect();
    let f = fit_regression_forest(&x, &y, &clusters, &forest(200, 5), 4).unwrap();
    let grid: Vec<Vec<f64>> = (0..1000).map(|k| vec![(k as f64 + 0.5) / 1000.0]).collect();
    let gx = FeatureMatrix::from_rows(&grid).unwrap();
    let pred = predict_forest(&f, &gx).unwrap();
    let mse = grid
        .iter()
        .zip(&pred)
        .map(|(g, p)| (p - truth(g[0])).powi(2))
        .sum::<f64>()
        / grid.len() as f64;
    assert!(mse < 0.02, "mse {mse}");
}

#[test]
fn forest_prediction_is_the_mean_of_its_trees() {
    let ds = rct(300, 3, 5, |x, d, r| x[0] + f64::from(u8::from(d)) + r.random::<f64>());
    let x = cate_core::data::select_covariates(&ds, &CovariateSet::all(3)).unwrap();
    let y = ds.outcomes();
    let f = fit_regression_forest(&x, &y, ds.clusters(), &forest(40, 3), 6).unwrap();
    let pred = predict_forest(&f, &x).unwrap();
    for (i, &p) in pred.iter().enumerate() {
        let per_tree: Vec<f64> = f.trees().iter().map(|t| t.predict_row(x.row(i))).collect();
        assert_eq!(p, stable_mean(per_tree.iter().copied()).unwrap());
        let naive = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
        assert!((p - naive).abs() <= 1e-12 * naive.abs().max(1.0));
    }
}

/// Integer targets make every mean exact whatever the summation order.
#[test]
fn honest_leaves_equal_estimation_half_means() {
    let n = 400;
    let mut rng = stream(7, "t", 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
    let x = FeatureMatrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| (10.0 * r[0]).floor() + rng.random_range(0..4) as f64)
        .collect();
    // two rows per group
    let groups: Vec<usize> = (0..n).map(|i| i / 2).collect();
    let all: Vec<usize> = (0..n).collect();
    let t = RegressionTree::fit_honest(&x, &y, &groups, &all, &[0, 1], 10, &mut stream(7, "h", 0)).unwrap();
    assert!(t.n_leaves() > 2);
    let est: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&r| t.estimation_groups().contains(&groups[r]))
        .collect();
    let mut checked = 0;
    for (leaf, node) in t.nodes().iter().enumerate() {
        let Node::Leaf {
            value,
            n_estimation,
            fallback: false,
        } = node
        else {
            continue;
        };
        let members: Vec<f64> = est
            .iter()
            .filter(|&&r| t.leaf_of(x.row(r)) == leaf)
            .map(|&r| y[r])
            .collect();
        assert_eq!(members.len(), *n_estimation);
        let oracle = members.iter().sum::<f64>() / members.len() as f64;
        assert_eq!(*value, oracle, "leaf {leaf}");
        checked += 1;
    }
    assert!(checked > 2);
}

#[test]
fn honest_halves_are_individual_disjoint() {
    let ds = rct(200, 2, 8, |x, _, _| x[0]);
    let x = cate_core::data::select_covariates(&ds, &CovariateSet::all(2)).unwrap();
    let f = fit_regression_forest(&x, &ds.outcomes(), ds.clusters(), &forest(30, 2), 9).unwrap();
    for t in f.trees() {
        let tr = t.training_groups();
        assert!(!tr.is_empty());
        assert!(t.estimation_groups().iter().all(|g| !tr.contains(g)));
    }
}

#[test]
fn propensity_of_a_fair_coin() {
    let ds = rct(2000, 3, 10, |x, d, r| x[0] + f64::from(u8::from(d)) + r.random::<f64>());
    let cfg = NuisanceConfig {
        forest: forest(100, 10),
        clip: 0.01,
    };
    let nf = cross_fit_nuisances(&ds, &CovariateSet::all(3), &cfg, 11).unwrap();
    let m = nf.p_hat.iter().sum::<f64>() / nf.len() as f64;
    assert!((0.45..=0.55).contains(&m), "mean p_hat {m}");
}

#[test]
fn zero_outcome_gives_zero_outcome_models() {
    let ds = rct(120, 2, 12, |_, _, _| 0.0);
    let cfg = NuisanceConfig {
        forest: forest(20, 2),
        clip: 0.01,
    };
    let nf = cross_fit_nuisances(&ds, &CovariateSet::all(2), &cfg, 13).unwrap();
    assert!(nf.mu1_hat.iter().chain(&nf.mu0_hat).all(|&v| v == 0.0));
}

/// Panel with several periods per individual.
fn panel(n: usize, periods: i64, seed: u64) -> PanelDataset<f64> {
    let mut rng = stream(seed, "panel", 0);
    let mut records = Vec::new();
    for i in 0..n {
        let d = rng.random::<bool>();
        let base: f64 = rng.random();
        for t in 1..=periods {
            let x = vec![base, t as f64, rng.random()];
            records.push(Observation {
                individual_id: format!("p{i}"),
                period: t,
                treated: d,
                outcome: base * 3.0 + f64::from(u8::from(d)) * base + rng.random::<f64>(),
                covariates: x,
            });
        }
    }
    PanelDataset::new(records, vec!["base".into(), "t".into(), "noise".into()]).unwrap()
}

#[test]
fn cross_fitting_never_uses_own_individual() {
    let ds = panel(80, 4, 14);
    let cfg = NuisanceConfig {
        forest: forest(20, 3),
        clip: 0.01,
    };
    let nf = cross_fit_nuisances(&ds, &CovariateSet::all(3), &cfg, 15).unwrap();
    let groups = ds.split_groups();
    for (r, f) in nf.fold.iter().enumerate() {
        let trained_on = &nf.training_groups[f.other().index()];
        assert!(trained_on.binary_search(&groups[r]).is_err(), "row {r}");
    }
    // all rows of an individual share a fold
    for rows in ds.rows_by_cluster() {
        assert!(rows.iter().all(|&r| nf.fold[r] == nf.fold[rows[0]]));
    }
    // behavioural check: perturbing fold-A outcomes leaves fold-A predictions alone
    let perturbed: Vec<Observation<f64>> = ds
        .records()
        .iter()
        .zip(&nf.fold)
        .map(|(o, f)| {
            let mut o = o.clone();
            if *f == Fold::A {
                o.outcome += 1000.0;
            }
            o
        })
        .collect();
    let ds2 = PanelDataset::new(perturbed, ds.covariate_names().to_vec()).unwrap();
    let nf2 = cross_fit_nuisances(&ds2, &CovariateSet::all(3), &cfg, 15).unwrap();
    assert_eq!(nf.fold, nf2.fold);
    for r in nf.rows_in(Fold::A) {
        assert_eq!(nf.mu1_hat[r], nf2.mu1_hat[r]);
        assert_eq!(nf.mu0_hat[r], nf2.mu0_hat[r]);
    }
    assert!(nf.rows_in(Fold::B).iter().any(|&r| nf.mu1_hat[r] != nf2.mu1_hat[r]));
}

#[test]
fn forests_do_not_depend_on_thread_count() {
    let ds = rct(300, 3, 16, |x, d, r| {
        x[1] + f64::from(u8::from(d)) * x[0] + r.random::<f64>()
    });
    let cfg = NuisanceConfig {
        forest: forest(30, 3),
        clip: 0.01,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cross_fit_nuisances(&ds, &CovariateSet::all(3), &cfg, 17).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a.mu1_hat, b.mu1_hat);
    assert_eq!(a.mu0_hat, b.mu0_hat);
    assert_eq!(a.p_hat, b.p_hat);
}
