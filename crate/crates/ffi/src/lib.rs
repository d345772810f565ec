//! C ABI over the dynsimplex library.
//!
//! Every function returns a [`DsStatus`]. On failure a message is stored per
//! thread and can be read with [`ds_last_error`]. Handles are opaque and must
//! be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use dynsimplex::config::{ConfigError, ExperimentConfig};
use dynsimplex::domain::{Belief, ControllerId, RewardWeights, RoadType, SceneFeatures, SystemState, TrafficDensity, Weather};
use dynsimplex::experiment::{build_surrogate, run_matrix, ExperimentError};
use dynsimplex::monitors::{detect_occlusion, Frame, OcclusionConfig};
use dynsimplex::reward;
use dynsimplex::sim::{run_episode, FailureSchedule};
use dynsimplex::surrogate::{build_lut, load_lut, Surrogate};
use dynsimplex::switcher::Strategy;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsController {
    Performant = 0,
    Safety = 1,
}

impl From<DsController> for ControllerId {
    fn from(c: DsController) -> Self {
        match c {
            DsController::Performant => ControllerId::Performant,
            DsController::Safety => ControllerId::Safety,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub m_s: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsBelief {
    /// normalized speed in [0, 1]
    pub perf_score: f64,
    /// collision likelihood in [0, 1]
    pub safety_score: f64,
    /// mean speed of the neighbours, m/s
    pub raw_speed: f64,
}

/// Situation for a lookup-table query. `road_type` is a NUL-terminated name
/// such as "MainRoad"; `density` is 0 (low), 1 (medium) or 2 (high).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsBeliefQuery {
    pub road_type: *const c_char,
    pub curvature: f64,
    pub traffic_sign: bool,
    pub cloudiness: f64,
    pub precipitation: f64,
    pub precipitation_deposit: f64,
    pub density: u32,
    pub degraded: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsOcclusionReport {
    pub occluded: bool,
    pub blob_ratio: f64,
    pub blobs: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsEpisodeMetrics {
    pub travel_time: f64,
    pub route_completion: f64,
    pub vehicle_collision: bool,
    pub object_collision: bool,
    pub switch_count: u32,
    pub reverse_switches: u32,
    pub infraction: f64,
    pub mean_decision_latency_ms: f64,
    pub timed_out: bool,
}

/// Opaque lookup-table surrogate.
pub struct DsLut {
    surrogate: Surrogate,
}

/// Opaque experiment configuration with a lazily built surrogate.
pub struct DsExperiment {
    config: ExperimentConfig,
    surrogate: OnceLock<Surrogate>,
}

struct Failure(DsStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure(DsStatus::Io, e.to_string()),
            _ => Failure(DsStatus::Config, e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let status = match e {
            ExperimentError::Config(_) => DsStatus::Config,
            ExperimentError::Io(_) => DsStatus::Io,
            _ => DsStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DsStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DsStatus::Panic
        }
    }
}

fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(DsStatus::NullPointer, format!("{name} is null")))
}

fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a valid pointer.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(DsStatus::NullPointer, format!("{name} is null")))
}

fn in_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DsStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null, and callers promise a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

fn weights(w: &DsWeights) -> Result<RewardWeights, Failure> {
    RewardWeights::new(w.alpha1, w.alpha2, w.alpha3, w.m_s).map_err(|e| invalid(e.to_string()))
}

fn belief(perf: f64, collision: f64) -> Result<Belief, Failure> {
    Belief::new(perf, collision, 0.0).map_err(|e| invalid(e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Switching penalty: 0 for `omega` <= 1, else `omega / m_s` capped at 1.
#[no_mangle]
pub extern "C" fn ds_switch_cost(omega: u32, m_s: u32, out: *mut f64) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = reward::switch_cost(omega, m_s).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_forward_reward(perf: f64, collision: f64, w: *const DsWeights, out: *mut f64) -> DsStatus {
    guard(|| {
        let w = weights(in_ref(w, "weights")?)?;
        let out = out_ref(out, "out")?;
        *out = reward::forward_reward(&belief(perf, collision)?, &w);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_reverse_reward(
    perf: f64,
    collision: f64,
    omega: u32,
    w: *const DsWeights,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let w = weights(in_ref(w, "weights")?)?;
        let out = out_ref(out, "out")?;
        *out = reward::reverse_reward(&belief(perf, collision)?, omega, &w);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_infraction_score(
    route_completion: f64,
    vehicle_collision: bool,
    object_collision: bool,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = reward::infraction_score(route_completion, vehicle_collision, object_collision)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Runs the occlusion detector with default thresholds on a row-major 8-bit
/// grayscale image of `width * height` bytes.
#[no_mangle]
pub extern "C" fn ds_detect_occlusion(
    pixels: *const u8,
    width: usize,
    height: usize,
    out: *mut DsOcclusionReport,
) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if pixels.is_null() {
            return Err(Failure(DsStatus::NullPointer, "pixels is null".into()));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| invalid("width * height overflows"))?;
        if n == 0 {
            return Err(invalid("frame has zero area"));
        }
        // SAFETY: non-null, caller promises `width * height` readable bytes.
        let data = unsafe { std::slice::from_raw_parts(pixels, n) }.to_vec();
        let frame = Frame::new(width, height, data).map_err(|e| invalid(e.to_string()))?;
        let r = detect_occlusion(&frame, &OcclusionConfig::default()).map_err(|e| invalid(e.to_string()))?;
        *out = DsOcclusionReport {
            occluded: r.occluded,
            blob_ratio: r.blob_ratio,
            blobs: r.blobs,
        };
        Ok(())
    })
}

/// Loads a lookup-table CSV. `k` neighbours, `v_max` m/s speed normalizer.
#[no_mangle]
pub extern "C" fn ds_lut_load(path: *const c_char, k: usize, v_max: f64, out: *mut *mut DsLut) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = in_str(path, "path")?;
        let records = load_lut(Path::new(path)).map_err(|e| Failure(DsStatus::Io, e.to_string()))?;
        let table = build_lut(records).map_err(|e| invalid(e.to_string()))?;
        let surrogate = Surrogate::new(table, k, v_max).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(DsLut { surrogate }));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_lut_len(lut: *const DsLut, out: *mut usize) -> DsStatus {
    guard(|| {
        let lut = in_ref(lut, "lut")?;
        *out_ref(out, "out")? = lut.surrogate.table.len();
        Ok(())
    })
}

/// Belief of `controller` in the queried situation.
#[no_mangle]
pub extern "C" fn ds_lut_belief(
    lut: *const DsLut,
    query: *const DsBeliefQuery,
    controller: DsController,
    out: *mut DsBelief,
) -> DsStatus {
    guard(|| {
        let lut = in_ref(lut, "lut")?;
        let q = in_ref(query, "query")?;
        let out = out_ref(out, "out")?;
        let road: RoadType = in_str(q.road_type, "road_type")?
            .parse()
            .map_err(|e: dynsimplex::domain::DomainError| invalid(e.to_string()))?;
        if q.density > 2 {
            return Err(invalid(format!("density {} outside 0..=2", q.density)));
        }
        let scene = SceneFeatures::new(road, q.curvature, q.traffic_sign, 1.0).map_err(|e| invalid(e.to_string()))?;
        let mut state = SystemState::new(3, controller.into());
        state.weather = Weather::new(q.cloudiness, q.precipitation, q.precipitation_deposit);
        state.traffic_density = TrafficDensity::from_index(q.density as usize);
        state.failures[1] = q.degraded;
        let b = lut
            .surrogate
            .belief(&state, &scene, controller.into())
            .map_err(|e| Failure(DsStatus::Runtime, e.to_string()))?;
        *out = DsBelief {
            perf_score: b.perf_score,
            safety_score: b.safety_score,
            raw_speed: b.raw_speed,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_lut_free(lut: *mut DsLut) {
    if !lut.is_null() {
        // SAFETY: the pointer came from `ds_lut_load` and is freed once.
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(lut) })));
    }
}

fn new_experiment(config: ExperimentConfig, out: &mut *mut DsExperiment) {
    *out = Box::into_raw(Box::new(DsExperiment {
        config,
        surrogate: OnceLock::new(),
    }));
}

/// Parses an experiment configuration document.
#[no_mangle]
pub extern "C" fn ds_experiment_from_json(json: *const c_char, out: *mut *mut DsExperiment) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = ExperimentConfig::from_json(in_str(json, "json")?)?;
        new_experiment(cfg, out);
        Ok(())
    })
}

/// Reads a configuration file; the DS_SEED environment variable overrides its seed.
#[no_mangle]
pub extern "C" fn ds_experiment_load(path: *const c_char, out: *mut *mut DsExperiment) -> DsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = ExperimentConfig::load(Path::new(in_str(path, "path")?))?;
        new_experiment(cfg, out);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_experiment_set_seed(exp: *mut DsExperiment, seed: u64) -> DsStatus {
    guard(|| {
        out_ref(exp, "experiment")?.config.master_seed = seed;
        Ok(())
    })
}

/// Runs the whole matrix into `out_dir` (NULL: the configured directory).
#[no_mangle]
pub extern "C" fn ds_experiment_run(
    exp: *const DsExperiment,
    out_dir: *const c_char,
    jobs: u32,
    episodes: *mut usize,
) -> DsStatus {
    guard(|| {
        let exp = in_ref(exp, "experiment")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(in_str(out_dir, "out_dir")?))
        };
        let report = run_matrix(&exp.config, jobs.max(1) as usize, dir.as_deref())?;
        // SAFETY: null or a valid, writable pointer.
        if let Some(n) = unsafe { episodes.as_mut() } {
            *n = report.episodes;
        }
        Ok(())
    })
}

/// Runs one episode of `strategy` (e.g. "DS") on a track named in the config.
/// `schedule` is "none", "permanent_at_random" or "intermittent".
#[no_mangle]
pub extern "C" fn ds_experiment_run_episode(
    exp: *const DsExperiment,
    track: *const c_char,
    strategy: *const c_char,
    schedule: *const c_char,
    seed: u64,
    out: *mut DsEpisodeMetrics,
) -> DsStatus {
    guard(|| {
        let exp = in_ref(exp, "experiment")?;
        let out = out_ref(out, "out")?;
        let strategy: Strategy = in_str(strategy, "strategy")?
            .parse()
            .map_err(|e: dynsimplex::switcher::SwitchError| invalid(e.to_string()))?;
        let schedule_name = in_str(schedule, "schedule")?;
        let schedule = [FailureSchedule::None, FailureSchedule::PermanentAtRandom, FailureSchedule::Intermittent]
            .into_iter()
            .find(|s| s.as_str() == schedule_name)
            .ok_or_else(|| invalid(format!("unknown failure schedule `{schedule_name}`")))?;
        let name = in_str(track, "track")?;
        let tracks = exp.config.resolve_tracks()?;
        let track = tracks
            .iter()
            .find(|t| t.id == name)
            .ok_or_else(|| invalid(format!("track `{name}` is not in the configuration")))?;
        let surrogate = match exp.surrogate.get() {
            Some(s) => s,
            None => {
                let s = build_surrogate(&exp.config, &tracks)?;
                exp.surrogate.get_or_init(|| s)
            }
        };
        let m = run_episode(track, strategy, &exp.config.sim_config(schedule), Some(surrogate), seed)
            .map_err(|e| Failure(DsStatus::Runtime, e.to_string()))?;
        *out = DsEpisodeMetrics {
            travel_time: m.travel_time,
            route_completion: m.route_completion,
            vehicle_collision: m.vehicle_collision,
            object_collision: m.object_collision,
            switch_count: m.switch_count,
            reverse_switches: m.reverse_switches,
            infraction: m.infraction,
            mean_decision_latency_ms: m.mean_decision_latency_ms(),
            timed_out: m.timed_out,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ds_experiment_free(exp: *mut DsExperiment) {
    if !exp.is_null() {
        // SAFETY: the pointer came from a `ds_experiment_*` constructor and is freed once.
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(exp) })));
    }
}
