use std::collections::BTreeSet;
use std::fs;

use vblast_core::report::{
    replay, run_figure, FigureId, FigureOptions, RunManifest, CSV_HEADER, MANIFEST_FILE,
};

#[test]
fn figure_bundle_lists_every_file_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let opts = FigureOptions {
        seed: 21,
        trials: Some(5000),
        ..Default::default()
    };
    let bundle = run_figure(FigureId::Fig2, &opts, &a).unwrap();
    let on_disk: BTreeSet<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let mut listed: BTreeSet<String> = bundle.manifest.outputs.iter().cloned().collect();
    listed.insert(MANIFEST_FILE.into());
    assert_eq!(on_disk, listed);
    assert_eq!(
        RunManifest::read(&a.join(MANIFEST_FILE)).unwrap(),
        bundle.manifest
    );

    for f in bundle
        .manifest
        .outputs
        .iter()
        .filter(|f| f.ends_with(".csv") && *f != "comparison.csv")
    {
        let body = fs::read_to_string(a.join(f)).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let mut last = f64::NEG_INFINITY;
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            let x: f64 = cols[0].parse().unwrap();
            assert!(x > last, "{f}: grid not increasing");
            last = x;
            for c in &cols[2..5] {
                if let Ok(p) = c.parse::<f64>() {
                    assert!((0.0..=1.0).contains(&p), "{f}: {p}");
                }
            }
            let is_mc = f.starts_with("mc-");
            assert_eq!(!cols[3].is_empty(), is_mc, "{f}: CI columns");
            assert_eq!(!cols[5].is_empty(), is_mc, "{f}: trials column");
        }
    }
    assert_eq!(
        bundle
            .manifest
            .outputs
            .iter()
            .filter(|f| f.starts_with("mc-outage-step"))
            .count(),
        3
    );

    replay(&a.join(MANIFEST_FILE), &b, 1).unwrap();
    for f in &bundle.manifest.outputs {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn error_figure_with_small_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = FigureOptions {
        trials: Some(300),
        ..Default::default()
    };
    let b = run_figure(FigureId::Fig5, &opts, tmp.path()).unwrap();
    for d in ["3x3", "4x3"] {
        for kind in ["bler", "tber"] {
            assert!(b
                .manifest
                .outputs
                .contains(&format!("mc-{kind}-{d}-optimal-bpsk.csv")));
        }
        assert!(b
            .manifest
            .outputs
            .contains(&format!("approx-bler-two-step-{d}-bpsk.csv")));
    }
    let cmp = fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
    assert!(cmp.lines().count() > 1);
}
