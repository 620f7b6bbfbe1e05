use cate_core::cate::{fit_local_constant, PartitionSpec};
use cate_core::data::{CovariateSet, Observation, PanelDataset};
use cate_core::inference::{sup_abs_combination, BootstrapPlan, Edf, RefitMode};
use cate_core::pipeline::{estimate_cates, Estimator, PipelineConfig};
use cate_core::qte::{empirical_quantiles, ks_nesting_test, qte, simulated_distribution, tau_grid, PotentialArm};
use cate_core::rng::stream;
use cate_core::sim::{generate, DgpConfig, DgpKind};
use rand::Rng;

#[test]
fn uniform_quantiles_track_the_identity() {
    let mut rng = stream(1, "uniform", 0);
    let v: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let taus: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    let q = empirical_quantiles(&v, &taus).unwrap();
    let worst = q.iter().zip(&taus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.03, "max deviation {worst}");
}

#[test]
fn quantiles_invert_the_edf() {
    let mut rng = stream(2, "inverse", 0);
    let v: Vec<f64> = (0..500).map(|_| rng.random_range(0..40) as f64).collect();
    let f = Edf::from_values(&v).unwrap();
    let taus = tau_grid(0.05, 0.95, 0.05).unwrap();
    for (&t, &q) in taus.iter().zip(&empirical_quantiles(&v, &taus).unwrap()) {
        assert!(f.eval(q) >= t);
    }
    for &y in f.points() {
        let t = f.eval(y);
        if t < 1.0 {
            assert!(empirical_quantiles(&v, &[t]).unwrap()[0] <= y);
        }
    }
}

/// Integer outcomes; individuals alternate between the arms.
fn integer_rct(n: usize, seed: u64) -> PanelDataset<f64> {
    let mut rng = stream(seed, "integer-rct", 0);
    let records = (0..n)
        .map(|i| Observation {
            individual_id: format!("i{i}"),
            period: 1,
            treated: i % 2 == 0,
            outcome: rng.random_range(-50..200) as f64,
            covariates: vec![(i % 5) as f64],
        })
        .collect();
    PanelDataset::new(records, vec!["s".into()]).unwrap()
}

#[test]
fn qte_shifts_with_the_treated_outcomes() {
    let ds = integer_rct(400, 3);
    let taus = tau_grid(0.05, 0.95, 0.05).unwrap();
    let base = qte(&ds, &taus).unwrap();
    let shifted: Vec<Observation<f64>> = ds
        .records()
        .iter()
        .map(|o| Observation {
            outcome: if o.treated { o.outcome + 17.0 } else { o.outcome },
            ..o.clone()
        })
        .collect();
    let moved = qte(&PanelDataset::new(shifted, vec!["s".into()]).unwrap(), &taus).unwrap();
    for (a, b) in base.qte.iter().zip(&moved.qte) {
        assert_eq!(*b, a + 17.0);
    }
    assert!(base.q1.windows(2).all(|w| w[0] <= w[1]));
}

fn control_edf(ds: &PanelDataset<f64>) -> Edf<f64> {
    let y0: Vec<f64> = ds.records().iter().filter(|o| !o.treated).map(|o| o.outcome).collect();
    Edf::from_values(&y0).unwrap()
}

#[test]
fn simulated_distribution_shift_identities() {
    let ds = integer_rct(300, 4);
    let f0 = control_edf(&ds);
    assert_eq!(
        simulated_distribution(&ds, &vec![0.0; ds.len()], PotentialArm::Treated).unwrap(),
        f0
    );

    let c = 25.0;
    let s = simulated_distribution(&ds, &vec![c; ds.len()], PotentialArm::Treated).unwrap();
    let shifted: Vec<f64> = f0.points().iter().map(|p| p + c).collect();
    assert_eq!(s.points(), &shifted[..]);
    for &p in f0.points() {
        assert_eq!(s.eval(p + c), f0.eval(p));
        assert_eq!(s.eval(p + c - 0.5), f0.eval(p - 0.5));
    }
}

/// Within one stratum the local constant CATE is a single number, so the
/// simulated distribution is the control distribution moved by it.
#[test]
fn local_constant_simulation_within_a_stratum() {
    let ds = integer_rct(200, 5);
    let m = fit_local_constant(&ds, &PartitionSpec::Pooled).unwrap();
    let cates = m.predict(&ds).unwrap();
    let s = simulated_distribution(&ds, &cates, PotentialArm::Treated).unwrap();
    let moved: Vec<f64> = ds
        .records()
        .iter()
        .filter(|o| !o.treated)
        .map(|o| o.outcome + m.delta[0])
        .collect();
    assert_eq!(s, Edf::from_values(&moved).unwrap());
}

#[test]
fn homogeneous_effect_is_reproduced_by_oracle_cates() {
    let (ds, truth) = generate::<f64>(&DgpConfig::new(DgpKind::Shift, 4000), 6).unwrap();
    let s = simulated_distribution(&ds, &truth.true_cate, PotentialArm::Treated).unwrap();
    let y1: Vec<f64> = ds.records().iter().filter(|o| o.treated).map(|o| o.outcome).collect();
    let a = Edf::from_values(&y1).unwrap();
    let gap = sup_abs_combination(&[(&a, 1), (&s, -1)]).to_scalar::<f64>();
    assert!(gap < 0.05, "sup gap {gap}");
}

#[test]
fn swapping_arms_swaps_the_ks_statistics() {
    let (ds, truth) = generate::<f64>(&DgpConfig::new(DgpKind::Shift, 300), 7).unwrap();
    let plan = BootstrapPlan::new(19, 8).unwrap();
    let none = |_: &_, _| unreachable!();
    let a = ks_nesting_test(&ds, &truth.true_cate, &plan, RefitMode::FixedModel, none).unwrap();
    let swapped: Vec<Observation<f64>> = ds
        .records()
        .iter()
        .map(|o| Observation {
            treated: !o.treated,
            ..o.clone()
        })
        .collect();
    let ds2 = PanelDataset::new(swapped, ds.covariate_names().to_vec()).unwrap();
    let neg: Vec<f64> = truth.true_cate.iter().map(|c| -c).collect();
    let b = ks_nesting_test(&ds2, &neg, &plan, RefitMode::FixedModel, none).unwrap();
    assert_eq!((a.ks_treated, a.ks_control), (b.ks_control, b.ks_treated));
    assert_eq!(a.ks_joint, b.ks_joint);
    assert_eq!(a.ks_joint, a.ks_treated.max(a.ks_control));
}

/// Censoring at zero moves mass onto the zero point that no additive CATE
/// can account for, so nesting fails for every estimator.
#[test]
fn kink_nesting_is_rejected_for_every_estimator() {
    let (ds, _) = generate::<f64>(&DgpConfig::new(DgpKind::Kink, 4000), 9).unwrap();
    let plan = BootstrapPlan::new(199, 10).unwrap();
    for est in [Estimator::LocalConstant, Estimator::Tree, Estimator::Forest] {
        let mut cfg = PipelineConfig::new(est, CovariateSet::all(ds.n_covariates()));
        cfg.cate_forest.trees = 200;
        cfg.nuisance.forest.trees = 200;
        cfg.partition = PartitionSpec::EarningsByPeriod {
            column: 0,
            median: None,
        };
        let cates = estimate_cates(&ds, &cfg, 11).unwrap().cates.values;
        let r = ks_nesting_test(&ds, &cates, &plan, RefitMode::FixedModel, |_, _| unreachable!()).unwrap();
        assert!(r.p_joint < 0.05, "{}: joint p {}", est.label(), r.p_joint);
    }
}
