use cate_core::data::{
    apply_filter, load_panel_csv, read_panel_csv, standardized_difference, write_panel_csv, Arm, BandVariable,
    CsvSchema, Observation, OutcomeBand, PanelDataset, SubgroupFilter,
};
use cate_core::rng::stream;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn read(text: &str) -> cate_core::Result<PanelDataset<f64>> {
    read_panel_csv(text.as_bytes(), &CsvSchema::default())
}

#[test]
fn small_panel_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "id,period,d,y,x\na,1,1,3.5,0\na,2,1,4,0\nb,1,0,0,1\nb,2,0,2,1\n").unwrap();
    let ds: PanelDataset<f64> = load_panel_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!((ds.n_individuals(), ds.n_periods(), ds.len()), (2, 2, 4));
    assert_eq!(ds.outcomes(), vec![3.5, 4.0, 0.0, 2.0]);
}

#[test]
fn treatment_switch_is_rejected_by_individual() {
    let err = read("id,period,d,y\n7,1,0,1\n7,2,1,1\n8,1,0,2\n").unwrap_err();
    assert!(err.to_string().contains('7'), "{err}");
}

#[test]
fn header_only_file_is_empty() {
    assert!(matches!(read("id,period,d,y,x\n"), Err(cate_core::Error::EmptyDataset)));
}

/// Two-pass mean and population variance, written out longhand.
fn two_pass(v: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    let m = s / v.len() as f64;
    let mut ss = 0.0;
    for x in v {
        ss += (x - m) * (x - m);
    }
    (m, ss / v.len() as f64)
}

#[test]
fn standardized_difference_matches_two_pass_oracle() {
    assert_eq!(standardized_difference(&[2.0, 0.0], &[1.0, -1.0]).unwrap(), 100.0);
    assert_eq!(
        standardized_difference(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
        0.0
    );
    let mut rng = stream(1, "gauss", 0);
    let a: Vec<f64> = Normal::new(10.0, 3.0)
        .unwrap()
        .sample_iter(&mut rng)
        .take(5000)
        .collect();
    let b: Vec<f64> = Normal::new(9.2, 2.0)
        .unwrap()
        .sample_iter(&mut rng)
        .take(3000)
        .collect();
    let (ma, va) = two_pass(&a);
    let (mb, vb) = two_pass(&b);
    let oracle = (ma - mb).abs() / ((va + vb) / 2.0).sqrt() * 100.0;
    let got = standardized_difference(&a, &b).unwrap();
    assert!(((got - oracle) / oracle).abs() < 1e-10, "{got} vs {oracle}");
}

#[test]
fn zero_variance_with_a_gap_is_undefined() {
    assert!(standardized_difference(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    assert_eq!(standardized_difference(&[1.0, 1.0], &[1.0]).unwrap(), 0.0);
}

fn row(id: &str, treated: bool, y: f64) -> Observation<f64> {
    Observation {
        individual_id: id.into(),
        period: 1,
        treated,
        outcome: y,
        covariates: vec![y * 2.0],
    }
}

fn six_rows() -> PanelDataset<f64> {
    let rows = [
        (false, 0.0),
        (false, 50.0),
        (false, 3000.0),
        (true, 10.0),
        (false, 2999.5),
        (true, 0.0),
    ];
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(d, y))| row(&format!("r{i}"), d, y))
        .collect();
    PanelDataset::new(records, vec!["x".into()]).unwrap()
}

/// Every arm and band against a direct scan of the rows.
#[test]
fn filters_match_enumeration() {
    let ds = six_rows();
    let arms = [Arm::All, Arm::Treated, Arm::Control];
    let bands = [
        OutcomeBand::Any,
        OutcomeBand::Zero,
        OutcomeBand::PositiveBelow(3000.0),
        OutcomeBand::AtOrAbove(3000.0),
    ];
    for arm in arms {
        for band in bands {
            for var in [BandVariable::Outcome, BandVariable::Covariate(0)] {
                let f = SubgroupFilter::new(arm, band, var).unwrap();
                let got = apply_filter(&ds, &f);
                let mut want = Vec::new();
                for (i, o) in ds.records().iter().enumerate() {
                    let arm_ok = match arm {
                        Arm::All => true,
                        Arm::Treated => o.treated,
                        Arm::Control => !o.treated,
                    };
                    let v = match var {
                        BandVariable::Outcome => o.outcome,
                        BandVariable::Covariate(_) => o.covariates[0],
                    };
                    let band_ok = match band {
                        OutcomeBand::Any => true,
                        OutcomeBand::Zero => v == 0.0,
                        OutcomeBand::PositiveBelow(t) => 0.0 < v && v < t,
                        OutcomeBand::AtOrAbove(t) => v >= t,
                    };
                    if arm_ok && band_ok {
                        want.push(i);
                    }
                }
                assert_eq!(got, want, "{arm:?} {band:?} {var:?}");
            }
        }
    }
    let ctrl_pos =
        SubgroupFilter::new(Arm::Control, OutcomeBand::PositiveBelow(3000.0), BandVariable::Outcome).unwrap();
    assert_eq!(apply_filter(&ds, &ctrl_pos), vec![1, 4]);
    assert_eq!(apply_filter(&ds, &SubgroupFilter::everything()).len(), 6);
}

#[test]
fn control_filter_on_all_treated_is_empty() {
    let records = (0..4).map(|i| row(&format!("t{i}"), true, 0.0)).collect();
    let ds = PanelDataset::new(records, vec!["x".into()]).unwrap();
    let f = SubgroupFilter::new(Arm::Control, OutcomeBand::Zero, BandVariable::Outcome).unwrap();
    assert!(apply_filter(&ds, &f).is_empty());
}

fn panel_strategy() -> impl Strategy<Value = PanelDataset<f64>> {
    (1usize..6, 1i64..4, 0usize..3).prop_flat_map(|(n, periods, p)| {
        let cells = n * periods as usize;
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(-1e6..1e6f64, cells),
            proptest::collection::vec(-1e3..1e3f64, cells * p),
        )
            .prop_map(move |(d, y, x)| {
                let mut records = Vec::new();
                for (i, &treated) in d.iter().enumerate() {
                    for t in 0..periods {
                        let c = i * periods as usize + t as usize;
                        records.push(Observation {
                            individual_id: format!("id{i}"),
                            period: t + 1,
                            treated,
                            outcome: y[c],
                            covariates: x[c * p..(c + 1) * p].to_vec(),
                        });
                    }
                }
                PanelDataset::new(records, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(ds in panel_strategy()) {
        let mut buf = Vec::new();
        write_panel_csv(&ds, &mut buf).unwrap();
        let back: PanelDataset<f64> = read_panel_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back.records(), ds.records());
        prop_assert_eq!(back.covariate_names(), ds.covariate_names());
    }

    #[test]
    fn filtering_is_idempotent(ds in panel_strategy(), t in 1.0..1e6f64) {
        let f = SubgroupFilter::new(Arm::Control, OutcomeBand::PositiveBelow(t), BandVariable::Outcome).unwrap();
        let idx = apply_filter(&ds, &f);
        prop_assert!(idx.iter().all(|&i| i < ds.len()));
        if !idx.is_empty() {
            let sub = ds.subset(&idx).unwrap();
            prop_assert_eq!(apply_filter(&sub, &f).len(), idx.len());
        }
    }
}
