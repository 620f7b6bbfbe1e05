use cate_core::data::{Observation, PanelDataset};
use cate_core::inference::{
    bootstrap_ci, cluster_bootstrap_indices, dominance_statistics, dominance_test, dominance_test_fixed,
    rows_by_cluster, BootstrapPlan, DominanceOptions, RefitMode, SupremumGrid,
};
use cate_core::rng::stream;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn two_clusters_draw_each_pattern_a_quarter_of_the_time() {
    let by = vec![vec![0], vec![1]];
    let mut rng = stream(3, "two-clusters", 0);
    let mut counts = [0usize; 4];
    let draws = 10_000;
    for _ in 0..draws {
        let rs = cluster_bootstrap_indices(&by, &mut rng);
        counts[rs.draws[0] * 2 + rs.draws[1]] += 1;
        assert_eq!(rs.rows, rs.draws);
    }
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 0.25).abs() <= 0.02, "{counts:?}");
    }
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, "gaussian", 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn gaussian_cates_split_evenly() {
    let v = gaussian(10_000, 4);
    let n = v.len() as f64;
    let neg = v.iter().filter(|&&c| c < 0.0).count() as f64;
    let pos = v.iter().filter(|&&c| c > 0.0).count() as f64;
    let s = dominance_statistics(&v, SupremumGrid::Exact).unwrap();
    assert_eq!(s.d_plus, neg / n);
    assert_eq!(s.d_minus, pos / n);
    assert!((s.d_plus - 0.5).abs() <= 0.02 && (s.d_minus - 0.5).abs() <= 0.02);
    // on sample points alone the jump at zero is reached only from the
    // smallest positive value
    let sp = dominance_statistics(&v, SupremumGrid::SamplePoints).unwrap();
    assert_eq!(sp.d_plus, s.d_plus);
    assert_eq!(sp.d_minus, (pos - 1.0) / n);
}

/// Percentile interval of a sample mean against the normal approximation.
#[test]
fn bootstrap_interval_of_a_mean_has_clt_width() {
    let n = 1000;
    let v = gaussian(n, 5);
    let by = rows_by_cluster(&(0..n).collect::<Vec<_>>());
    let plan = BootstrapPlan::new(999, 6).unwrap();
    let ci = bootstrap_ci(&by, &plan, |rows| {
        Ok(rows.iter().map(|&r| v[r]).sum::<f64>() / rows.len() as f64)
    })
    .unwrap();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let target = 2.0 * 1.96 * sd / (n as f64).sqrt();
    let width = ci.high - ci.low;
    assert!((width / target - 1.0).abs() <= 0.2, "width {width} vs {target}");
    assert!(ci.low <= mean && mean <= ci.high);
}

/// Rows grouped into individuals of 1, 2 or 3 periods.
fn ragged_panel() -> PanelDataset<f64> {
    let mut records = Vec::new();
    for i in 0..30 {
        for t in 0..(1 + i % 3) as i64 {
            records.push(Observation {
                individual_id: format!("u{i}"),
                period: t + 1,
                treated: i % 2 == 0,
                outcome: (i * 10) as f64 + t as f64,
                covariates: vec![],
            });
        }
    }
    PanelDataset::new(records, vec![]).unwrap()
}

#[test]
fn resamples_carry_whole_individuals() {
    let ds = ragged_panel();
    let by = ds.rows_by_cluster();
    let mut rng = stream(7, "whole", 0);
    for _ in 0..200 {
        let rs = cluster_bootstrap_indices(&by, &mut rng);
        assert_eq!(rs.draws.len(), by.len());
        let expected: Vec<usize> = rs.draws.iter().flat_map(|&c| by[c].clone()).collect();
        assert_eq!(rs.rows, expected);
        let boot = ds.from_cluster_draws(&rs.draws).unwrap();
        assert_eq!(boot.len(), rs.rows.len());
        assert_eq!(boot.n_individuals(), by.len());
        // every resampled individual has the full period set of its source
        for (k, rows) in boot.rows_by_cluster().iter().enumerate() {
            assert_eq!(rows.len(), by[rs.draws[k]].len());
        }
    }
}

#[test]
fn constant_pipeline_gives_zero_bootstrap_statistics() {
    let ds = ragged_panel();
    let by = ds.rows_by_cluster();
    let cates = vec![2.0; ds.len()];
    let all: Vec<usize> = (0..ds.len()).collect();
    let plan = BootstrapPlan::new(49, 8).unwrap();
    let opts = DominanceOptions {
        grid: SupremumGrid::Exact,
        refit: RefitMode::Full,
    };
    let r = dominance_test(&by, &all, &cates, &plan, &opts, |rs, _| Ok(vec![2.0; rs.rows.len()])).unwrap();
    assert_eq!((r.d_plus, r.d_minus), (0.0, 1.0));
    assert_eq!((r.recentered.plus, r.recentered.minus), (0.0, 0.0));
    assert_eq!((r.uncentered.plus, r.uncentered.minus), (0.0, 0.0));
    assert_eq!(r.completed, 49);
}

#[test]
fn dominance_test_does_not_depend_on_thread_count() {
    let ds = ragged_panel();
    let by = ds.rows_by_cluster();
    let cates: Vec<f64> = (0..ds.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let sub: Vec<usize> = (0..ds.len()).filter(|i| i % 3 != 0).collect();
    let plan = BootstrapPlan::new(99, 9).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| dominance_test_fixed(&by, &sub, &cates, &plan, SupremumGrid::Exact).unwrap())
    };
    assert_eq!(run(1), run(8));
}

proptest! {
    #[test]
    fn statistics_are_sign_shares(v in proptest::collection::vec(-3i32..=3, 1..60)) {
        let cates: Vec<f64> = v.iter().map(|&x| x as f64 * 0.5).collect();
        let n = cates.len() as f64;
        let s = dominance_statistics(&cates, SupremumGrid::Exact).unwrap();
        prop_assert_eq!(s.d_plus, cates.iter().filter(|&&c| c < 0.0).count() as f64 / n);
        prop_assert_eq!(s.d_minus, cates.iter().filter(|&&c| c > 0.0).count() as f64 / n);
    }

    #[test]
    fn a_negative_cate_never_lowers_d_plus(
        v in proptest::collection::vec(-5.0..5.0f64, 1..40),
        extra in -5.0..-1e-6f64,
    ) {
        let before = dominance_statistics(&v, SupremumGrid::Exact).unwrap().d_plus;
        let mut w = v.clone();
        w.push(extra);
        prop_assert!(dominance_statistics(&w, SupremumGrid::Exact).unwrap().d_plus >= before);
    }
}
