mod common;

use common::{eval_pose, write_eval_dataset};
use surgpose::bop::{write_results, PoseEstimate};
use surgpose::core::geometry::rot_z;
use surgpose::core::metrics::{summarize_and_histogram, Truncation};
use surgpose::core::{MetricRecord, Pose, Vec3};
use surgpose::eval::{self, evaluate_run, read_metrics_csv, write_evaluation};

fn exact(k: u32) -> PoseEstimate {
    PoseEstimate::new(0, k, 1, 1.0, eval_pose(k), 0.01)
}

#[test]
fn perfect_estimates_score_zero() {
    let tmp = tempfile::tempdir().unwrap();
    write_eval_dataset(tmp.path(), &[1.0; 5], false);
    let est = tmp.path().join("est.csv");
    write_results(&est, &(0..5).map(exact).collect::<Vec<_>>()).unwrap();
    let ev = evaluate_run(tmp.path(), &est, 0.3).unwrap();
    assert_eq!(ev.records.len(), 5);
    for r in &ev.records {
        assert_eq!(r.e_te, 0.0);
        assert!(r.e_mssd < 1e-9, "{}", r.e_mssd);
        assert!(r.e_re < 1e-6, "{}", r.e_re);
    }
}

#[test]
fn visibility_filter_and_misses_are_counted_separately() {
    let tmp = tempfile::tempdir().unwrap();
    let visib = [0.9, 0.2, 0.5, 0.29, 1.0, 0.31, 0.0, 0.7, 0.3, 0.8];
    write_eval_dataset(tmp.path(), &visib, false);
    let est = tmp.path().join("est.csv");
    let estimates: Vec<PoseEstimate> = (0..10).filter(|k| *k != 7).map(exact).collect();
    write_results(&est, &estimates).unwrap();
    let ev = evaluate_run(tmp.path(), &est, 0.3).unwrap();
    assert_eq!((ev.records.len(), ev.excluded.len(), ev.missing.len(), ev.total_gt), (6, 3, 1, 10));
    assert_eq!(ev.missing[0].im_id, 7);
    assert!(ev.records.iter().all(|r| r.visib_fract >= 0.3));
}

#[test]
fn estimate_without_ground_truth_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_eval_dataset(tmp.path(), &[1.0; 2], false);
    let est = tmp.path().join("est.csv");
    write_results(&est, &[exact(0), PoseEstimate::new(0, 9, 1, 1.0, eval_pose(0), 0.0)]).unwrap();
    assert!(evaluate_run(tmp.path(), &est, 0.3).is_err());
}

#[test]
fn configured_symmetry_absorbs_a_half_turn() {
    let tmp = tempfile::tempdir().unwrap();
    write_eval_dataset(tmp.path(), &[1.0; 3], true);
    let est = tmp.path().join("est.csv");
    let flipped = |k: u32| {
        let pose = eval_pose(k).compose(&Pose::new(rot_z(std::f64::consts::PI), Vec3::zeros()).unwrap());
        PoseEstimate::new(0, k, 1, 1.0, pose, 0.0)
    };
    write_results(&est, &(0..3).map(flipped).collect::<Vec<_>>()).unwrap();
    let ev = evaluate_run(tmp.path(), &est, 0.0).unwrap();
    for r in &ev.records {
        assert!(r.e_mssd < 1e-9, "{}", r.e_mssd);
        assert!((r.e_re - 180.0).abs() < 1e-6);
    }
}

fn record(v: f64) -> MetricRecord {
    MetricRecord { scene_id: 0, im_id: 0, obj_id: 1, e_te: v, e_re: v, e_mssd: v, visib_fract: 1.0 }
}

#[test]
fn summary_statistics_and_overflow_bin() {
    let (summary, hists) =
        summarize_and_histogram(&[record(1.0), record(2.0), record(3.0)], 10, &Truncation::default()).unwrap();
    let s = summary.e_te;
    assert_eq!((s.mean, s.median, s.min, s.max), (2.0, 2.0, 1.0, 3.0));
    assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

    let trunc = Truncation { e_te: 10.0, ..Default::default() };
    let (_, hists2) = summarize_and_histogram(&[record(33.01), record(4.0)], 5, &trunc).unwrap();
    let te = hists2.iter().find(|h| h.metric.name() == "e_te").unwrap();
    assert_eq!(te.overflow(), 1);
    assert_eq!(te.counts.iter().sum::<u64>(), 2);
    assert_eq!(hists.len(), 3);

    let one = summarize_and_histogram(&[record(4.5)], 4, &Truncation::default()).unwrap().0;
    assert_eq!((one.e_re.mean, one.e_re.median, one.e_re.std), (4.5, 4.5, 0.0));
}

#[test]
fn evaluation_writes_metrics_and_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    write_eval_dataset(tmp.path(), &[1.0, 0.8, 0.1, 0.6], false);
    let est = tmp.path().join("est.csv");
    let nudged = |k: u32| {
        let p = eval_pose(k);
        let pose = Pose::new(*p.rotation(), p.translation() + Vec3::new(0.0, 0.0, 1.5 * k as f64)).unwrap();
        PoseEstimate::new(0, k, 1, 1.0, pose, 0.0)
    };
    write_results(&est, &(0..4).map(nudged).collect::<Vec<_>>()).unwrap();
    let ev = evaluate_run(tmp.path(), &est, 0.3).unwrap();
    let out = tmp.path().join("report");
    let summary = write_evaluation(&out, &ev, 0.3, 10, &Truncation::default()).unwrap().unwrap();
    assert_eq!(summary.n, 3);
    let metrics = read_metrics_csv(&out.join("metrics.csv")).unwrap();
    assert_eq!(metrics, ev.records);
    let te: Vec<f64> = metrics.iter().map(|r| r.e_te).collect();
    assert!(te.iter().zip([0.0, 1.5, 4.5]).all(|(a, b)| (a - b).abs() < 1e-12), "{te:?}");

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 3);
    assert_eq!(json["excluded"], 1);
    assert_eq!(json["missing"], 0);
    assert_eq!(json["e_te"]["unit"], "mm");
    let table = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    for row in ["mean", "std", "median", "min", "max", "e_RE [deg]", "e_TE [mm]", "e_MSSD [mm]"] {
        assert!(table.contains(row), "{row} missing from\n{table}");
    }
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("metric,bin,lower,upper,count\n"));
    assert_eq!(hist.lines().count(), 1 + 3 * 11);

    let restats = tmp.path().join("restats");
    let again = eval::write_stats(&restats, &metrics, 10, &Truncation::default(), None).unwrap();
    assert_eq!(again, summary);
}
