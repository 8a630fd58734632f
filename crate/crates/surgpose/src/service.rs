//! Local HTTP service backing the trajectory authoring UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/scene` | camera, instances, mesh metadata, joint limits |
//! | PUT | `/api/instance/{id}/pose` | `{"R": [9], "t": [3]}` |
//! | PUT | `/api/ecm/joints` | `{"joints": [4]}` |
//! | GET | `/api/preview?width&height` | PNG, GT summary in `x-gt-info` / `x-visib-fract` |
//! | GET, PUT | `/api/trajectory` | trajectory document |
//! | POST | `/api/trajectory/keyframe` | `{"t": s}`, appends the current state |
//! | POST | `/api/jobs` | starts a generation job |
//! | GET | `/api/jobs/{id}` | job status |
//!
//! Malformed bodies give 400, unknown ids 404, a second job while one is
//! active 409, and joint-limit violations 422.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use surgpose_core::kinematics::{KinematicsError, JOINT_COUNT, JOINT_NAMES};
use surgpose_core::trajectory::TrajectoryInstance;
use surgpose_core::{mesh_diameter, Keyframe, Pose};

use crate::config::{
    keyframe_json, CameraJson, GenerationJob, InstanceJson, PoseJson, RandomizationJson, Sampling, SceneConfig,
    TrajectoryDoc, DEFAULT_SAMPLE_RATE_HZ,
};
use crate::error::Error;
use crate::pipeline::{run_generation_with, Progress, MANIFEST};
use crate::preview::{render_preview, GtSummary};

const MAX_PREVIEW_SIDE: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub job_id: u32,
    pub state: JobState,
    pub frames_done: u64,
    pub frames_total: u64,
    pub out: String,
    pub manifest: Option<String>,
    pub error: Option<String>,
}

struct JobRecord {
    state: Mutex<(JobState, Option<String>)>,
    progress: Progress,
    out: PathBuf,
}

impl JobRecord {
    /// Moves the state forward; terminal states never change.
    fn advance(&self, next: JobState, error: Option<String>) {
        let mut s = self.state.lock().expect("job lock");
        if !s.0.is_terminal() {
            *s = (next, error);
        }
    }

    fn status(&self, job_id: u32) -> JobStatus {
        let (state, error) = self.state.lock().expect("job lock").clone();
        let (done, total) = self.progress.snapshot();
        JobStatus {
            job_id,
            state,
            frames_done: done.min(total),
            frames_total: total,
            out: self.out.display().to_string(),
            manifest: (state == JobState::Done).then(|| self.out.join(MANIFEST).display().to_string()),
            error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct MeshInfo {
    name: String,
    annotate: bool,
    vertices: usize,
    triangles: usize,
    diameter: f64,
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
}

struct Studio {
    scene: Arc<SceneConfig>,
    mesh_info: Vec<MeshInfo>,
    instances: Vec<(TrajectoryInstance, Pose)>,
    joints: [f64; JOINT_COUNT],
    trajectory: TrajectoryDoc,
    jobs: BTreeMap<u32, Arc<JobRecord>>,
    next_job: u32,
    out_root: PathBuf,
    single_job: bool,
}

#[derive(Clone)]
pub struct AppState(Arc<RwLock<Studio>>);

impl AppState {
    /// Jobs write to `out_root/job_NNNN`.
    pub fn new(scene: SceneConfig, out_root: PathBuf) -> Self {
        let mesh_info = scene
            .meshes
            .values()
            .map(|m| {
                let (lo, hi) = m.mesh.bounds();
                MeshInfo {
                    name: m.name.clone(),
                    annotate: m.annotate,
                    vertices: m.mesh.vertices().len(),
                    triangles: m.mesh.triangles().len(),
                    diameter: mesh_diameter(&m.mesh),
                    bounds_min: lo.into(),
                    bounds_max: hi.into(),
                }
            })
            .collect();
        let plain: Vec<_> = scene.instances.iter().map(|(i, _)| i.clone()).collect();
        let studio = Studio {
            mesh_info,
            instances: scene.instances.clone(),
            joints: scene.rig.joints,
            trajectory: TrajectoryDoc::empty("studio", &plain),
            scene: Arc::new(scene),
            jobs: BTreeMap::new(),
            next_job: 1,
            out_root,
            single_job: true,
        };
        Self(Arc::new(RwLock::new(studio)))
    }

    pub fn with_trajectory(self, doc: TrajectoryDoc) -> Self {
        self.0.write().expect("state lock").trajectory = doc;
        self
    }

    pub fn allow_concurrent_jobs(self) -> Self {
        self.0.write().expect("state lock").single_job = false;
        self
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Studio> {
        self.0.read().expect("state lock")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Studio> {
        self.0.write().expect("state lock")
    }
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }
    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Kinematics(KinematicsError::JointLimit { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Config(_) | Error::Schema { .. } | Error::Parse { .. } | Error::Geometry(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/scene", get(get_scene))
        .route("/api/instance/{id}/pose", put(put_pose))
        .route("/api/ecm/joints", put(put_joints))
        .route("/api/preview", get(get_preview))
        .route("/api/trajectory", get(get_trajectory).put(put_trajectory))
        .route("/api/trajectory/keyframe", post(post_keyframe))
        .route("/api/jobs", post(post_job))
        .route("/api/jobs/{id}", get(get_job))
        .with_state(state)
}

fn instance_json(inst: &TrajectoryInstance, pose: &Pose) -> InstanceJson {
    InstanceJson { instance_id: inst.instance_id, obj_id: inst.obj_id, mesh: inst.mesh.clone(), pose: PoseJson::from_pose(pose) }
}

async fn get_scene(State(state): State<AppState>) -> Json<serde_json::Value> {
    let s = state.read();
    Json(json!({
        "camera": CameraJson::from_camera(&s.scene.camera),
        "depth_scale": s.scene.depth_scale,
        "instances": s.instances.iter().map(|(i, p)| instance_json(i, p)).collect::<Vec<_>>(),
        "meshes": s.mesh_info,
        "ecm": {
            "joint_names": JOINT_NAMES,
            "joints": s.joints,
            "limits": s.scene.rig.limits.0,
            "base_pose": PoseJson::from_pose(&s.scene.rig.base_pose),
        },
        "randomization": s.scene.randomization,
    }))
}

async fn put_pose(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<InstanceJson>> {
    let id: u32 = id.parse().map_err(|_| ApiError::not_found(format!("unknown instance {id:?}")))?;
    let pose: PoseJson = parse_body(&body)?;
    let pose = pose.to_pose().map_err(ApiError::bad_request)?;
    let mut s = state.write();
    let (inst, p) = s
        .instances
        .iter_mut()
        .find(|(i, _)| i.instance_id == id)
        .ok_or_else(|| ApiError::not_found(format!("unknown instance {id}")))?;
    *p = pose;
    Ok(Json(instance_json(inst, p)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointsBody {
    joints: [f64; JOINT_COUNT],
}

async fn put_joints(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let JointsBody { joints } = parse_body(&body)?;
    if !joints.iter().all(|q| q.is_finite()) {
        return Err(ApiError::bad_request("joint values must be finite"));
    }
    let mut s = state.write();
    s.scene.rig.limits.check(&joints).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    s.joints = joints;
    Ok(Json(json!({ "joints": joints })))
}

async fn get_preview(State(state): State<AppState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let dim = |name: &str| -> ApiResult<Option<u32>> {
        match q.get(name) {
            None => Ok(None),
            Some(v) => match v.parse::<u32>() {
                Ok(n) if (1..=MAX_PREVIEW_SIDE).contains(&n) => Ok(Some(n)),
                _ => Err(ApiError::bad_request(format!("{name} must be an integer in 1..={MAX_PREVIEW_SIDE}"))),
            },
        }
    };
    let (w, h) = (dim("width")?, dim("height")?);
    let (scene, instances, joints) = {
        let s = state.read();
        (s.scene.clone(), s.instances.clone(), s.joints)
    };
    let size = match (w, h) {
        (None, None) => None,
        (w, h) => Some((w.unwrap_or(scene.camera.width()), h.unwrap_or(scene.camera.height()))),
    };
    let preview = tokio::task::spawn_blocking(move || render_preview(&scene, &instances, &joints, size))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let summary: Vec<GtSummary> = preview.objects.iter().map(GtSummary::from).collect();
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    let info = serde_json::to_string(&summary).expect("summary serializes");
    headers.insert("x-gt-info", HeaderValue::from_str(&info).expect("ascii json"));
    if let Some(first) = summary.first() {
        headers.insert("x-visib-fract", HeaderValue::from_str(&first.visib_fract.to_string()).expect("ascii number"));
    }
    Ok((StatusCode::OK, headers, preview.png).into_response())
}

async fn get_trajectory(State(state): State<AppState>) -> Json<TrajectoryDoc> {
    Json(state.read().trajectory.clone())
}

async fn put_trajectory(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<TrajectoryDoc>> {
    let doc: TrajectoryDoc = parse_body(&body)?;
    doc.check_partial().map_err(|(k, m)| ApiError::bad_request(format!("{k}: {m}")))?;
    let mut s = state.write();
    s.scene.check_instances(&doc.core_instances()).map_err(ApiError::bad_request)?;
    for (i, kf) in doc.keyframes.iter().enumerate() {
        s.scene
            .rig
            .limits
            .check(&kf.ecm)
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("keyframes[{i}].ecm: {e}")))?;
    }
    s.trajectory = doc.clone();
    Ok(Json(doc))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeBody {
    t: f64,
}

async fn post_keyframe(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<TrajectoryDoc>> {
    let KeyframeBody { t } = parse_body(&body)?;
    if !t.is_finite() {
        return Err(ApiError::bad_request("t must be finite"));
    }
    let mut s = state.write();
    let current: Vec<TrajectoryInstance> = s.instances.iter().map(|(i, _)| i.clone()).collect();
    if s.trajectory.keyframes.is_empty() {
        let name = s.trajectory.name.clone();
        let source = s.trajectory.source.clone();
        s.trajectory = TrajectoryDoc { name, source, ..TrajectoryDoc::empty("", &current) };
    } else if s.trajectory.core_instances() != current {
        return Err(ApiError::bad_request("the trajectory's instances differ from the scene's; replace or clear the trajectory first"));
    }
    let kf = keyframe_json(&Keyframe {
        time: t,
        poses: s.instances.iter().map(|(i, p)| (i.instance_id, *p)).collect(),
        ecm: s.joints,
    });
    if let Some(last) = s.trajectory.keyframes.last() {
        if last.t == t && *last == kf {
            return Ok(Json(s.trajectory.clone()));
        }
        if t <= last.t {
            return Err(ApiError::bad_request(format!("keyframe time {t} must be after the last keyframe at {}", last.t)));
        }
    }
    s.trajectory.keyframes.push(kf);
    Ok(Json(s.trajectory.clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobBody {
    replays: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    randomization: Option<RandomizationJson>,
    #[serde(default)]
    samples_per_replay: Option<usize>,
    #[serde(default)]
    sample_rate_hz: Option<f64>,
    #[serde(default)]
    min_visibility: f64,
    #[serde(default)]
    scene_id_base: u32,
    #[serde(default)]
    split: Option<String>,
}

async fn post_job(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let req: JobBody = parse_body(&body)?;
    let mut s = state.write();
    if s.single_job && s.jobs.values().any(|j| !j.state.lock().expect("job lock").0.is_terminal()) {
        return Err(ApiError(StatusCode::CONFLICT, "a generation job is already running".into()));
    }
    let trajectory = s.trajectory.to_trajectory().map_err(|(k, m)| ApiError::bad_request(format!("trajectory {k}: {m}")))?;
    let sampling = match (req.samples_per_replay, req.sample_rate_hz) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give samples_per_replay or sample_rate_hz, not both")),
        (Some(n), None) => Sampling::Count(n),
        (None, Some(hz)) => Sampling::RateHz(hz),
        (None, None) => Sampling::RateHz(DEFAULT_SAMPLE_RATE_HZ),
    };
    let job_id = s.next_job;
    let out = s.out_root.join(format!("job_{job_id:04}"));
    let job = GenerationJob {
        scene: (*s.scene).clone(),
        trajectory,
        trajectory_file: "trajectory.json".into(),
        replays: req.replays,
        sampling,
        randomization: req.randomization.unwrap_or(s.scene.randomization).with_seed(req.seed),
        min_visibility: req.min_visibility,
        scene_id_base: req.scene_id_base,
        split: req.split.unwrap_or_else(|| "train".into()),
        out: out.clone(),
    };
    job.validate().map_err(|(k, m)| match k.contains(".ecm") {
        true => ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("{k}: {m}")),
        false => ApiError::bad_request(format!("{k}: {m}")),
    })?;
    s.next_job += 1;
    let record = Arc::new(JobRecord { state: Mutex::new((JobState::Queued, None)), progress: Progress::default(), out });
    s.jobs.insert(job_id, record.clone());
    let doc = s.trajectory.clone();
    drop(s);

    let status = record.status(job_id);
    std::thread::spawn(move || {
        record.advance(JobState::Running, None);
        let result = doc.save(&job.out.join("trajectory.json")).and_then(|_| {
            run_generation_with(&job, &record.progress, &mut |scene| {
                log::info!("job {job_id}: scene {:06} done ({} kept)", scene.scene_id, scene.frames_kept);
            })
        });
        match result {
            Ok(_) => record.advance(JobState::Done, None),
            Err(e) => record.advance(JobState::Failed, Some(e.to_string())),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobStatus>> {
    let id: u32 = id.parse().map_err(|_| ApiError::not_found(format!("unknown job {id:?}")))?;
    let s = state.read();
    let job = s.jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    Ok(Json(job.status(id)))
}

/// Serves until the process is interrupted.
pub fn serve(state: AppState, addr: SocketAddr) -> crate::error::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Config(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        println!("listening on http://{addr}");
        axum::serve(listener, router(state)).await.map_err(|e| Error::Config(format!("server error: {e}")))
    })
}
