//! Scoring a results CSV against a generated dataset and exporting the
//! statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use surgpose_core::metrics::{
    evaluate, summarize_and_histogram, EstimateEntry, Evaluation, FrameKey, GtEntry, Histogram, Metric, ObjectModel,
    Summary, Truncation,
};
use surgpose_core::{MetricRecord, SummaryStats};

use crate::bop::{self, PoseEstimate};
use crate::error::{read_to_string, write_file, Error, Result};

pub const DEFAULT_MIN_VISIB: f64 = 0.3;
pub const DEFAULT_BINS: usize = 20;

/// GT entries of every scene under `root`, keyed by the scene directory
/// name.
pub fn load_gt(root: &Path) -> Result<Vec<GtEntry>> {
    let mut out = Vec::new();
    for dir in bop::find_scene_dirs(root)? {
        let scene_id = bop::scene_id_from_dir(&dir)
            .ok_or_else(|| Error::Config(format!("{}: scene directory name is not a 6-digit id", dir.display())))?;
        let scene = bop::read_scene(&dir)?;
        for (im_id, list) in &scene.record.gt {
            let infos = &scene.record.gt_info[im_id];
            for (g, info) in list.iter().zip(infos) {
                let pose = g.pose().map_err(|m| Error::schema(dir.join(bop::SCENE_GT), format!("{im_id}"), m))?;
                out.push(GtEntry {
                    key: FrameKey { scene_id, im_id: *im_id, obj_id: g.obj_id },
                    pose,
                    visib_fract: info.visib_fract,
                });
            }
        }
    }
    Ok(out)
}

/// Object models from the `models/` directory next to the scenes.
pub fn load_models(root: &Path) -> Result<BTreeMap<u32, ObjectModel>> {
    let mut dir = Some(root);
    while let Some(d) = dir {
        let models = d.join("models");
        if models.join(bop::MODELS_INFO).exists() {
            return Ok(bop::read_models(&models)?
                .into_iter()
                .map(|(id, m)| (id, ObjectModel { vertices: m.mesh.vertices().to_vec(), symmetries: m.symmetries }))
                .collect());
        }
        dir = d.parent();
    }
    Err(Error::Config(format!("no models/{} found at or above {}", bop::MODELS_INFO, root.display())))
}

pub fn evaluate_estimates(gt_root: &Path, estimates: &[PoseEstimate], min_visib: f64) -> Result<Evaluation> {
    let gt = load_gt(gt_root)?;
    let models = load_models(gt_root)?;
    let est: Vec<EstimateEntry> = estimates
        .iter()
        .map(|e| EstimateEntry {
            key: FrameKey { scene_id: e.scene_id, im_id: e.im_id, obj_id: e.obj_id },
            score: e.score,
            pose: e.pose,
        })
        .collect();
    Ok(evaluate(&gt, &est, &models, min_visib)?)
}

pub fn evaluate_run(gt_root: &Path, est_csv: &Path, min_visib: f64) -> Result<Evaluation> {
    if !(0.0..=1.0).contains(&min_visib) {
        return Err(Error::Config(format!("min visibility {min_visib} outside [0, 1]")));
    }
    let estimates = bop::read_results(est_csv)?;
    evaluate_estimates(gt_root, &estimates, min_visib)
}

pub const METRICS_HEADER: &str = "scene_id,im_id,obj_id,e_te,e_re,e_mssd,visib_fract";

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.scene_id, r.im_id, r.obj_id, r.e_te, r.e_re, r.e_mssd, r.visib_fract);
    }
    s
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {METRICS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (line, l) in lines.filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(path, line, format!("expected 7 fields, got {}", f.len())));
        }
        let int = |i: usize| f[i].trim().parse::<u32>().map_err(|_| Error::parse(path, line, format!("invalid integer {:?}", f[i])));
        let real = |i: usize| {
            f[i].trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::parse(path, line, format!("invalid value {:?}", f[i])))
        };
        out.push(MetricRecord {
            scene_id: int(0)?,
            im_id: int(1)?,
            obj_id: int(2)?,
            e_te: real(3)?,
            e_re: real(4)?,
            e_mssd: real(5)?,
            visib_fract: real(6)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct StatsJson {
    unit: &'static str,
    mean: f64,
    std: f64,
    median: f64,
    min: f64,
    max: f64,
}

impl StatsJson {
    fn new(m: Metric, s: &SummaryStats) -> Self {
        Self { unit: m.unit(), mean: s.mean, std: s.std, median: s.median, min: s.min, max: s.max }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryJson {
    n: usize,
    excluded: Option<usize>,
    missing: Option<usize>,
    total_gt: Option<usize>,
    min_visib: Option<f64>,
    e_re: StatsJson,
    e_te: StatsJson,
    e_mssd: StatsJson,
}

/// Counts from the join, when the records came from an evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bookkeeping {
    pub excluded: usize,
    pub missing: usize,
    pub total_gt: usize,
    pub min_visib: f64,
}

pub fn summary_json(summary: &Summary, book: Option<Bookkeeping>) -> String {
    let doc = SummaryJson {
        n: summary.n,
        excluded: book.map(|b| b.excluded),
        missing: book.map(|b| b.missing),
        total_gt: book.map(|b| b.total_gt),
        min_visib: book.map(|b| b.min_visib),
        e_re: StatsJson::new(Metric::Re, &summary.e_re),
        e_te: StatsJson::new(Metric::Te, &summary.e_te),
        e_mssd: StatsJson::new(Metric::Mssd, &summary.e_mssd),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}

/// Statistics as rows, metrics as columns.
pub fn summary_table(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "N={}", summary.n);
    let _ = writeln!(s, "{:<8}{:>14}{:>14}{:>14}", "", "e_RE [deg]", "e_TE [mm]", "e_MSSD [mm]");
    let rows: [(&str, fn(&SummaryStats) -> f64); 5] = [
        ("mean", |s| s.mean),
        ("std", |s| s.std),
        ("median", |s| s.median),
        ("min", |s| s.min),
        ("max", |s| s.max),
    ];
    for (name, get) in rows {
        let _ = writeln!(s, "{name:<8}{:>14.2}{:>14.2}{:>14.2}", get(&summary.e_re), get(&summary.e_te), get(&summary.e_mssd));
    }
    s
}

pub fn histogram_csv(hists: &[Histogram]) -> String {
    let mut s = String::from("metric,bin,lower,upper,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let lower = h.bin_width * i as f64;
            if i == h.bins() {
                let _ = writeln!(s, "{},{i},{},inf,{c}", h.metric.name(), h.truncation);
            } else {
                let upper = if i + 1 == h.bins() { h.truncation } else { h.bin_width * (i + 1) as f64 };
                let _ = writeln!(s, "{},{i},{lower},{upper},{c}", h.metric.name());
            }
        }
    }
    s
}

/// Writes `summary.json`, `summary.txt` and `histogram.csv` into `out`.
pub fn write_stats(out: &Path, records: &[MetricRecord], bins: usize, trunc: &Truncation, book: Option<Bookkeeping>) -> Result<Summary> {
    let (summary, hists) = summarize_and_histogram(records, bins, trunc)?;
    write_file(&out.join("summary.json"), summary_json(&summary, book).as_bytes())?;
    let mut table = summary_table(&summary);
    if let Some(b) = book {
        let _ = writeln!(
            table,
            "\n{} GT frames: {} evaluated, {} below visibility {}, {} without estimate",
            b.total_gt, summary.n, b.excluded, b.min_visib, b.missing
        );
    }
    write_file(&out.join("summary.txt"), table.as_bytes())?;
    write_file(&out.join("histogram.csv"), histogram_csv(&hists).as_bytes())?;
    Ok(summary)
}

/// Writes `metrics.csv` and, when anything was evaluated, the statistics.
pub fn write_evaluation(out: &Path, eval: &Evaluation, min_visib: f64, bins: usize, trunc: &Truncation) -> Result<Option<Summary>> {
    write_file(&out.join("metrics.csv"), metrics_csv(&eval.records).as_bytes())?;
    if eval.records.is_empty() {
        return Ok(None);
    }
    let book = Bookkeeping { excluded: eval.excluded.len(), missing: eval.missing.len(), total_gt: eval.total_gt, min_visib };
    write_stats(out, &eval.records, bins, trunc, Some(book)).map(Some)
}
