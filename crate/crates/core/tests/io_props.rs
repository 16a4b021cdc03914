//! Instance files, generators, and ratings ingestion.

use proptest::prelude::*;
use tatonnement::io::{
    filter_ratings, format_instance, generate_synthetic, ingest_ratings, parse_instance, read_instance, read_ratings,
    write_instance, Distribution, Fill, IngestOptions, RatingsTable, SyntheticSpec,
};
use tatonnement::market::{validate_instance, MarketInstance, UtilityKind};

fn any_distribution() -> impl Strategy<Value = Distribution> {
    prop::sample::select(Distribution::ALL.to_vec())
}

fn any_real() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        (0.0f64..1.0),
        (-300i32..300).prop_map(|k| 10f64.powi(k)),
    ]
}

fn ratings() -> impl Strategy<Value = RatingsTable> {
    prop::collection::vec((0u32..12, 0u32..8, 0u32..6), 0..80).prop_map(|triples| {
        let mut t = RatingsTable::default();
        for (u, i, r) in triples {
            t.insert(&format!("u{u}"), &format!("{i}"), f64::from(r));
        }
        t
    })
}

proptest! {
    #[test]
    fn text_format_round_trips_bitwise(
        (n, m, vals, ql) in (1usize..5, 1usize..5).prop_flat_map(|(n, m)| {
            (Just(n), Just(m), prop::collection::vec(any_real(), n + n * m), any::<bool>())
        })
    ) {
        let utility = if ql { UtilityKind::QuasiLinear } else { UtilityKind::Linear };
        let inst = MarketInstance::from_flat(vals[..n].to_vec(), m, vals[n..].to_vec(), utility).unwrap();
        let back = parse_instance(&format_instance(&inst)).unwrap();
        for (a, b) in back.budgets().iter().chain(back.valuations()).zip(inst.budgets().iter().chain(inst.valuations())) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.utility(), utility);
    }

    #[test]
    fn synthetic_instances_validate(d in any_distribution(), n in 1usize..12, m in 1usize..12, seed in any::<u64>(), ql in any::<bool>()) {
        let mut spec = SyntheticSpec::new(d, n, m, seed);
        if ql {
            spec = spec.quasi_linear();
        }
        let inst = generate_synthetic(&spec).unwrap();
        prop_assert!(validate_instance(&inst).is_ok());
        prop_assert_eq!(generate_synthetic(&spec).unwrap(), inst);
    }

    #[test]
    fn filtering_is_idempotent_and_monotone(t in ratings(), k in 0usize..5) {
        let once = filter_ratings(&t, k);
        prop_assert_eq!(&filter_ratings(&once, k), &once);
        prop_assert!(once.iter().all(|r| t.iter().any(|s| s == r)));
        let tighter = filter_ratings(&t, k + 1);
        prop_assert!(tighter.iter().all(|r| once.iter().any(|s| s == r)));
    }

    #[test]
    fn reingesting_filtered_output_changes_nothing(t in ratings(), k in 1usize..4) {
        let once = filter_ratings(&t, k);
        let mut buf = Vec::new();
        once.write_csv(&mut buf).unwrap();
        let reread = read_ratings(buf.as_slice()).unwrap();
        prop_assert_eq!(&reread, &once);
        prop_assert_eq!(&filter_ratings(&reread, k), &once);
    }
}

#[test]
fn files_on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate_synthetic(&SyntheticSpec::new(Distribution::LogNormalStd, 4, 6, 11).quasi_linear()).unwrap();
    let path = dir.path().join("m.txt");
    write_instance(&path, &inst).unwrap();
    assert_eq!(read_instance(&path).unwrap(), inst);
    assert!(read_instance(dir.path().join("missing.txt")).is_err());
}

#[test]
fn ingest_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ratings.csv");
    std::fs::write(&path, "user_id,item_id,rating\n1,1,5\n1,2,3\n2,1,4\n2,2,1\n3,1,2\n").unwrap();
    let inst = ingest_ratings(&path, &IngestOptions::new(2, Fill::Fail, 1)).unwrap();
    assert_eq!((inst.n(), inst.m()), (2, 2));
    assert_eq!(inst.row(1), &[0.8, 0.2]);
}
