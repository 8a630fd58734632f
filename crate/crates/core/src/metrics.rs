//! Pose error metrics, evaluation bookkeeping and summary statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{rotation_angle, Mat3, Pose, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no records to summarize")]
    EmptyInput,
    #[error("estimate for scene {scene_id} image {im_id} object {obj_id} has no ground truth")]
    MissingGt { scene_id: u32, im_id: u32, obj_id: u32 },
    #[error("no model registered for object {0}")]
    MissingModel(u32),
    #[error("histogram needs at least one bin and a positive truncation")]
    InvalidHistogram,
}

/// Translation error: Euclidean distance between translations (mm).
pub fn e_te(t_gt: &Vec3, t_est: &Vec3) -> f64 {
    (t_gt - t_est).norm()
}

/// Rotation error in degrees: angle of `R_gt · R_estᵀ`, in `[0, 180]`.
pub fn e_re(r_gt: &Mat3, r_est: &Mat3) -> f64 {
    rotation_angle(&(r_gt * r_est.transpose())).to_degrees()
}

/// Rigid transforms under which an object looks the same. Always holds the
/// identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet(Vec<Pose>);

impl Default for SymmetrySet {
    fn default() -> Self {
        Self::identity_only()
    }
}

impl SymmetrySet {
    pub fn identity_only() -> Self {
        Self(alloc::vec![Pose::identity()])
    }

    /// Adds the identity in front unless one is already present.
    pub fn new(transforms: Vec<Pose>) -> Self {
        let is_identity = |p: &Pose| {
            (p.rotation() - Mat3::identity()).amax() <= 1e-12 && p.translation().amax() <= 1e-12
        };
        let mut all = transforms;
        if !all.iter().any(is_identity) {
            all.insert(0, Pose::identity());
        }
        Self(all)
    }

    pub fn transforms(&self) -> &[Pose] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maximum symmetry-aware surface distance (mm):
/// `min over S of max over x of ‖P_est·x − P_gt·S·x‖`.
pub fn e_mssd(p_gt: &Pose, p_est: &Pose, vertices: &[Vec3], symmetries: &SymmetrySet) -> f64 {
    let mut best = f64::INFINITY;
    for s in symmetries.transforms() {
        let gt_s = p_gt.compose(s);
        let mut worst_sq = 0.0f64;
        for x in vertices {
            let d = (p_est.transform_point(x) - gt_s.transform_point(x)).norm_squared();
            if d > worst_sq {
                worst_sq = d;
                if worst_sq >= best * best {
                    break;
                }
            }
        }
        let worst = libm::sqrt(worst_sq);
        if worst < best {
            best = worst;
        }
    }
    if vertices.is_empty() {
        0.0
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub e_te: f64,
    pub e_re: f64,
    pub e_mssd: f64,
    pub visib_fract: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub key: FrameKey,
    pub pose: Pose,
    pub visib_fract: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateEntry {
    pub key: FrameKey,
    pub score: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub vertices: Vec<Vec3>,
    pub symmetries: SymmetrySet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub records: Vec<MetricRecord>,
    /// GT frames below the visibility threshold.
    pub excluded: Vec<FrameKey>,
    /// GT frames that passed the threshold but had no estimate.
    pub missing: Vec<FrameKey>,
    pub total_gt: usize,
}

/// Joins estimates to ground truth and scores every GT entry whose
/// visibility reaches `min_visib`. For several estimates of one key the
/// highest score is used.
pub fn evaluate(
    gt: &[GtEntry],
    estimates: &[EstimateEntry],
    models: &BTreeMap<u32, ObjectModel>,
    min_visib: f64,
) -> Result<Evaluation, MetricsError> {
    let mut gt_keys = alloc::collections::BTreeSet::new();
    for g in gt {
        gt_keys.insert(g.key);
    }
    let mut best: BTreeMap<FrameKey, &EstimateEntry> = BTreeMap::new();
    for e in estimates {
        if !gt_keys.contains(&e.key) {
            let FrameKey { scene_id, im_id, obj_id } = e.key;
            return Err(MetricsError::MissingGt { scene_id, im_id, obj_id });
        }
        best.entry(e.key)
            .and_modify(|cur| {
                if e.score > cur.score {
                    *cur = e;
                }
            })
            .or_insert(e);
    }
    let mut out = Evaluation { total_gt: gt.len(), ..Default::default() };
    for g in gt {
        if g.visib_fract < min_visib {
            out.excluded.push(g.key);
            continue;
        }
        let Some(est) = best.get(&g.key) else {
            out.missing.push(g.key);
            continue;
        };
        let model = models.get(&g.key.obj_id).ok_or(MetricsError::MissingModel(g.key.obj_id))?;
        out.records.push(MetricRecord {
            scene_id: g.key.scene_id,
            im_id: g.key.im_id,
            obj_id: g.key.obj_id,
            e_te: e_te(g.pose.translation(), est.pose.translation()),
            e_re: e_re(g.pose.rotation(), est.pose.rotation()),
            e_mssd: e_mssd(&g.pose, &est.pose, &model.vertices, &model.symmetries),
            visib_fract: g.visib_fract,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Self { mean, std: libm::sqrt(var), median, min: sorted[0], max: sorted[n - 1], n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Re,
    Te,
    Mssd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Re, Metric::Te, Metric::Mssd];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Re => "e_re",
            Metric::Te => "e_te",
            Metric::Mssd => "e_mssd",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Re => "deg",
            Metric::Te | Metric::Mssd => "mm",
        }
    }

    pub fn of(&self, r: &MetricRecord) -> f64 {
        match self {
            Metric::Re => r.e_re,
            Metric::Te => r.e_te,
            Metric::Mssd => r.e_mssd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub e_re: SummaryStats,
    pub e_te: SummaryStats,
    pub e_mssd: SummaryStats,
}

impl Summary {
    pub fn get(&self, m: Metric) -> &SummaryStats {
        match m {
            Metric::Re => &self.e_re,
            Metric::Te => &self.e_te,
            Metric::Mssd => &self.e_mssd,
        }
    }
}

pub fn summarize(records: &[MetricRecord]) -> Result<Summary, MetricsError> {
    let values = |m: Metric| records.iter().map(|r| m.of(r)).collect::<Vec<_>>();
    Ok(Summary {
        n: records.len(),
        e_re: SummaryStats::from_values(&values(Metric::Re))?,
        e_te: SummaryStats::from_values(&values(Metric::Te))?,
        e_mssd: SummaryStats::from_values(&values(Metric::Mssd))?,
    })
}

/// Equal-width bins on `[0, truncation]` plus a final bin for values above
/// the truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub metric: Metric,
    pub truncation: f64,
    pub bin_width: f64,
    /// `bins + 1` counts; the last one is the overflow bin.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(metric: Metric, values: impl IntoIterator<Item = f64>, bins: usize, truncation: f64) -> Result<Self, MetricsError> {
        if bins == 0 || !(truncation > 0.0 && truncation.is_finite()) {
            return Err(MetricsError::InvalidHistogram);
        }
        let bin_width = truncation / bins as f64;
        let mut counts = alloc::vec![0u64; bins + 1];
        for v in values {
            let slot = if v > truncation {
                bins
            } else {
                ((v / bin_width) as usize).min(bins - 1)
            };
            counts[slot] += 1;
        }
        Ok(Self { metric, truncation, bin_width, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn overflow(&self) -> u64 {
        self.counts[self.bins()]
    }
}

/// Histogram truncations (`e_re` in degrees, `e_te`/`e_mssd` in mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub e_re: f64,
    pub e_te: f64,
    pub e_mssd: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { e_re: 15.0, e_te: 70.0, e_mssd: 10.0 }
    }
}

impl Truncation {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Re => self.e_re,
            Metric::Te => self.e_te,
            Metric::Mssd => self.e_mssd,
        }
    }
}

pub fn summarize_and_histogram(
    records: &[MetricRecord],
    bins: usize,
    truncation: &Truncation,
) -> Result<(Summary, Vec<Histogram>), MetricsError> {
    let summary = summarize(records)?;
    let hists = Metric::ALL
        .iter()
        .map(|m| Histogram::build(*m, records.iter().map(|r| m.of(r)), bins, truncation.get(*m)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((summary, hists))
}
