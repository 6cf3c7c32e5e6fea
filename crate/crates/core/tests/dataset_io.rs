use std::fs;
use std::path::Path;

use bofn_core::dataset::{load_manifest, Dataset, DatasetError, ResultIssue, Split};
use bofn_core::metrics::MetricKind;
use bofn_core::select::{evaluate_bofn, Level, Portfolio, SelectionPolicy, TrackerPool};

const MANIFEST: &str = "\
name = tiny
results = results

[attributes]
occlusion
fast-motion

[trackers]
beta frame_cost=0.05
alpha

[sequences]
s1 gt=seq/s1.txt attributes=seq/s1.attr split=train size=64x48
s2 gt=seq/s2.txt split=test
";

fn put(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, text).unwrap();
}

fn fixture(root: &Path) {
    put(root, "manifest.txt", MANIFEST);
    put(root, "seq/s1.txt", "0,0,10,10\n1,0,10,10\n2,0,10,10\n");
    put(root, "seq/s1.attr", "occlusion\n");
    put(root, "seq/s2.txt", "5\t5\t8\t8\r\n5,6,8,8\r\n");
    put(root, "results/alpha/s1.txt", "0,0,10,10\n1,0,10,10\n2,0,10,10\n");
    put(root, "results/alpha/s2.txt", "5,5,8,8\nnan,nan,nan,nan\n");
    put(root, "results/beta/s1.txt", "0,0,10,10\n\n9,9,1,1\n");
    put(root, "results/beta/s2.txt", "5,5,8,8\n5,6,8,8\n");
}

#[test]
fn loads_manifest_sequences_and_results() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let ds = Dataset::load(&dir.path().join("manifest.txt")).unwrap();
    assert_eq!(ds.manifest.tracker_ids(), vec!["beta", "alpha"]);
    assert_eq!(ds.manifest.frame_costs(), vec![0.05, 1.0 / 50.0]);
    assert_eq!(ds.sequences.len(), 2);
    assert_eq!(ds.split(Split::Train)[0].frame_size, Some((64.0, 48.0)));
    assert!(ds.sequences[0].attributes.contains("occlusion"));

    let sets = ds.load_results(&ds.manifest.results_dir().unwrap()).unwrap();
    assert_eq!(sets[0].tracker_id, "beta");
    assert!(sets[0].entries["s1"].boxes[1].is_none());

    // alpha is perfect on s1, beta on s2
    let portfolio = Portfolio::new(&sets);
    let e = evaluate_bofn(
        &ds.sequences,
        &portfolio,
        &ds.manifest.frame_costs(),
        &TrackerPool::all(2),
        &SelectionPolicy::Oracle(MetricKind::SuccessAuc),
        Level::Video,
    )
    .unwrap();
    assert_eq!(e.plans[0].intervals[0].tracker, "alpha");
    assert_eq!(e.plans[1].intervals[0].tracker, "beta");
}

#[test]
fn ties_follow_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    // make both trackers perfect everywhere
    for t in ["alpha", "beta"] {
        put(
            dir.path(),
            &format!("results/{t}/s1.txt"),
            "0,0,10,10\n1,0,10,10\n2,0,10,10\n",
        );
        put(dir.path(), &format!("results/{t}/s2.txt"), "5,5,8,8\n5,6,8,8\n");
    }
    let ds = Dataset::load(&dir.path().join("manifest.txt")).unwrap();
    let sets = ds.load_results(&ds.manifest.results_dir().unwrap()).unwrap();
    let portfolio = Portfolio::new(&sets);
    for level in [Level::Video, Level::Frame { k: 1 }] {
        let e = evaluate_bofn(
            &ds.sequences,
            &portfolio,
            &ds.manifest.frame_costs(),
            &TrackerPool::all(2),
            &SelectionPolicy::Oracle(MetricKind::AverageOverlap),
            level,
        )
        .unwrap();
        assert!(e.plans.iter().flat_map(|p| &p.intervals).all(|iv| iv.tracker == "beta"));
    }
}

#[test]
fn result_problems_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    fs::remove_file(dir.path().join("results/alpha/s1.txt")).unwrap();
    put(dir.path(), "results/beta/s2.txt", "5,5,8,8\n");
    put(dir.path(), "results/alpha/s2.txt", "5,5,8\n1,1,1,1\n");
    let ds = Dataset::load(&dir.path().join("manifest.txt")).unwrap();
    let err = ds.load_results(&dir.path().join("results")).unwrap_err();
    let DatasetError::Results(issues) = &err else {
        panic!("unexpected {err}")
    };
    assert_eq!(issues.len(), 3);
    assert!(issues
        .iter()
        .any(|i| matches!(i, ResultIssue::MissingFile { tracker, .. } if tracker == "alpha")));
    assert!(issues.iter().any(|i| matches!(
        i,
        ResultIssue::LengthMismatch {
            expected: 2,
            got: 1,
            ..
        }
    )));
    assert!(issues.iter().any(|i| matches!(i, ResultIssue::Parse { .. })));
    assert!(err.to_string().starts_with("3 result problem(s)"));
}

#[test]
fn sequence_errors_are_specific() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    put(dir.path(), "seq/s1.attr", "night\n");
    let err = Dataset::load(&dir.path().join("manifest.txt")).unwrap_err();
    assert!(matches!(err, DatasetError::UnknownAttribute { ref tag, .. } if tag == "night"));

    fixture(dir.path());
    put(dir.path(), "seq/s2.txt", "5,5,8,8\n");
    let err = Dataset::load(&dir.path().join("manifest.txt")).unwrap_err();
    assert!(matches!(err, DatasetError::TooShort { frames: 1, .. }));

    fixture(dir.path());
    put(dir.path(), "seq/s2.txt", "5,5,8,8\n5,5,-8,8\n");
    let err = Dataset::load(&dir.path().join("manifest.txt")).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");

    let err = load_manifest(&dir.path().join("absent.txt")).unwrap_err();
    assert!(matches!(err, DatasetError::Io { .. }));
}
