use std::collections::BTreeMap;

use metalattice_lab::config::RunConfig;
use metalattice_lab::grid::{parse_matrix, LambdaGrid};
use metalattice_lab::output::Output;
use metalattice_lab::row;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -10.0..10.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn csv_floats_read_back_exactly(vals in prop::collection::vec(finite(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path()).unwrap();
        let mut t = out.table("v.csv", &[("v", "1")]).unwrap();
        for v in &vals {
            t.row(row![*v]).unwrap();
        }
        t.finish().unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("v.csv")).unwrap();
        let back: Vec<f64> = rd.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
        prop_assert_eq!(back, vals);
    }

    #[test]
    fn run_configs_round_trip(
        eta in finite(), seed in any::<u64>(), ks in prop::collection::vec(1usize..9, 0..4),
        eps in prop::collection::vec(1e-3..1.0f64, 0..4), tol in finite(),
    ) {
        let mut c = RunConfig::new("density-sweep", seed);
        c.eta = Some(eta);
        c.k = ks;
        c.epsilons = eps;
        c.grid = Some("random:4".into());
        c.param("max_iter", 600).param("list", [1.5, -2.0]);
        c.tolerance("zero", tol);
        c.outputs = vec!["density.csv".into()];
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn matrices_parse_what_they_print(a in finite(), b in finite(), c in finite(), d in finite()) {
        let m = parse_matrix(&format!("{a:?},{b:?},{c:?},{d:?}")).unwrap();
        prop_assert_eq!([m.m00, m.m01, m.m10, m.m11], [a, b, c, d]);
    }

    #[test]
    fn random_grids_depend_only_on_seed(n in 1usize..30, seed in any::<u64>()) {
        let g: LambdaGrid = format!("random:{n}").parse().unwrap();
        prop_assert_eq!(g.to_string(), format!("random:{n}"));
        let a = g.matrices(seed).unwrap();
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(a, g.matrices(seed).unwrap());
    }
}

#[test]
fn params_keep_a_stable_order() {
    let mut c = RunConfig::new("x", 0);
    c.param("b", 1).param("a", 2);
    let keys: Vec<_> = c.params.keys().cloned().collect();
    assert_eq!(keys, ["a", "b"]);
    let _: BTreeMap<String, serde_json::Value> = c.params;
}
