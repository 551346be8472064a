use std::path::PathBuf;

use proptest::prelude::*;
use pulsekin::trace::{ingest_trace, parse_trace, RgbTrace};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/traces")
}

fn expected() -> Vec<(String, i32)> {
    let text = std::fs::read_to_string(corpus().join("expected.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (f, c) = l.split_once(',').unwrap();
            (f.to_string(), c.parse().unwrap())
        })
        .collect()
}

#[test]
fn corpus_is_large_enough() {
    let cases = expected();
    assert!(cases.iter().filter(|(_, c)| *c == 0).count() >= 10);
    assert!(cases.iter().filter(|(_, c)| *c != 0).count() >= 10);
}

#[test]
fn corpus_codes_match() {
    for (file, code) in expected() {
        let got = match ingest_trace(corpus().join(&file)) {
            Ok(_) => 0,
            Err(e) => e.code() as i32,
        };
        assert_eq!(got, code, "{file}");
    }
}

#[test]
fn accepted_fixtures_reencode_losslessly() {
    for (file, code) in expected() {
        if code == 0 {
            let t = ingest_trace(corpus().join(&file)).unwrap();
            assert_eq!(parse_trace(&t.to_csv()).unwrap(), t, "{file}");
        }
    }
}

fn arb_trace() -> impl Strategy<Value = RgbTrace> {
    (1usize..4, 2usize..30, 1.0f64..240.0).prop_flat_map(|(rois, frames, fps)| {
        proptest::collection::vec(-1e6f64..1e6, rois * frames * 3)
            .prop_map(move |data| RgbTrace::new("s", "v", fps, rois, data).unwrap())
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_stable(t in arb_trace()) {
        // `%.9g` text is not exact, but a second encoding must reproduce the first.
        let once = parse_trace(&t.to_csv()).unwrap();
        let twice = parse_trace(&once.to_csv()).unwrap();
        prop_assert_eq!(&once.to_csv(), &twice.to_csv());
        prop_assert_eq!(once.frames(), t.frames());
        for (a, b) in once.data().iter().zip(t.data()) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }
}
