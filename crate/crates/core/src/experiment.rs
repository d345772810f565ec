//! Experiment matrix execution, metrics CSV IO, summaries, sensitivity
//! sweeps, and the planner timing table.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::domain::{ControllerId, SystemState, Track, Weather};
use crate::planner::{Interrupt, MctsConfig, SmdpModel};
use crate::seed::derive_seed;
use crate::sim::benchmark::{history, V_MAX};
use crate::sim::{run_episode_logged, EpisodeMetrics, FailureSchedule, SimConfig, SimError};
use crate::surrogate::{build_lut, load_lut, write_lut_csv, Surrogate, SurrogateError};
use crate::switcher::Strategy;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("lookup table: {0}")]
    Surrogate(#[from] SurrogateError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub const METRICS_HEADER: [&str; 10] = [
    "strategy",
    "track",
    "seed",
    "travel_time",
    "rc",
    "col_v",
    "col_o",
    "switches",
    "infraction",
    "mean_decision_latency_ms",
];

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub track: String,
    pub seed: u64,
    pub travel_time: f64,
    pub rc: f64,
    pub col_v: u8,
    pub col_o: u8,
    pub switches: u32,
    pub infraction: f64,
    pub mean_decision_latency_ms: f64,
}

impl From<&EpisodeMetrics> for MetricsRow {
    fn from(m: &EpisodeMetrics) -> Self {
        MetricsRow {
            strategy: m.strategy.as_str().to_string(),
            track: m.track.clone(),
            seed: m.seed,
            travel_time: m.travel_time,
            rc: m.route_completion,
            col_v: u8::from(m.vehicle_collision),
            col_o: u8::from(m.object_collision),
            switches: m.switch_count,
            infraction: m.infraction,
            mean_decision_latency_ms: m.mean_decision_latency_ms(),
        }
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.track.clone(),
            r.seed.to_string(),
            f6(r.travel_time),
            f6(r.rc),
            r.col_v.to_string(),
            r.col_o.to_string(),
            r.switches.to_string(),
            f6(r.infraction),
            f6(r.mean_decision_latency_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| ExperimentError::Schema(e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(ExperimentError::Schema(format!(
            "expected columns {}, got {}",
            METRICS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let rows = r
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| ExperimentError::Schema(format!("row {}: {e}", i + 2))))
        .collect::<Result<Vec<MetricsRow>, _>>()?;
    if rows.is_empty() {
        return Err(ExperimentError::Schema("no data rows".into()));
    }
    Ok(rows)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub track: String,
    pub runs: usize,
    pub median_travel_time: f64,
    pub iqr_travel_time: f64,
    pub completion_failures: usize,
    pub median_infraction: f64,
    pub mean_switches: f64,
}

/// Per (strategy, track) cell, in first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Schema("no data rows".into()));
    }
    let mut cells: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.strategy.clone(), r.track.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    Ok(cells
        .into_iter()
        .map(|(strategy, track)| {
            let cell: Vec<&MetricsRow> = rows.iter().filter(|r| r.strategy == strategy && r.track == track).collect();
            let mut tt: Vec<f64> = cell.iter().map(|r| r.travel_time).collect();
            tt.sort_by(f64::total_cmp);
            let mut inf: Vec<f64> = cell.iter().map(|r| r.infraction).collect();
            inf.sort_by(f64::total_cmp);
            SummaryRow {
                runs: cell.len(),
                median_travel_time: quantile(&tt, 0.5),
                iqr_travel_time: quantile(&tt, 0.75) - quantile(&tt, 0.25),
                completion_failures: cell.iter().filter(|r| r.rc < 1.0).count(),
                median_infraction: quantile(&inf, 0.5),
                mean_switches: cell.iter().map(|r| f64::from(r.switches)).sum::<f64>() / cell.len() as f64,
                strategy,
                track,
            }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(
    rows: &[(Option<FailureSchedule>, SummaryRow)],
    out: W,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schedule",
        "strategy",
        "track",
        "runs",
        "median_travel_time",
        "iqr_travel_time",
        "completion_failures",
        "median_infraction",
        "mean_switches",
    ])?;
    for (sched, r) in rows {
        w.write_record([
            sched.map_or("", |s| s.as_str()).to_string(),
            r.strategy.clone(),
            r.track.clone(),
            r.runs.to_string(),
            f6(r.median_travel_time),
            f6(r.iqr_travel_time),
            r.completion_failures.to_string(),
            f6(r.median_infraction),
            f6(r.mean_switches),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Lookup table from the configured CSV, or generated history.
pub fn build_surrogate(cfg: &ExperimentConfig, tracks: &[Track]) -> Result<Surrogate, ExperimentError> {
    let records = match &cfg.lut_path {
        Some(p) => load_lut(p)?,
        None => history(tracks, &cfg.surfaces, SimConfig::new(cfg.surfaces.clone()).n_cameras, &cfg.history)?,
    };
    let table = build_lut(records)?;
    for t in tracks {
        table.check_coverage(t)?;
    }
    Ok(Surrogate::new(table, cfg.history.k, cfg.history.v_max)?)
}

/// Writes the generated history as a lookup-table CSV.
pub fn write_history<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<usize, ExperimentError> {
    let tracks = cfg.resolve_tracks()?;
    let records = history(&tracks, &cfg.surfaces, SimConfig::new(cfg.surfaces.clone()).n_cameras, &cfg.history)?;
    write_lut_csv(&records, out)?;
    Ok(records.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub schedule_index: usize,
    pub schedule: FailureSchedule,
    pub strategy: Strategy,
    pub track_index: usize,
    pub run: usize,
}

impl Cell {
    /// Strategies share seeds so they face the same weather, traffic and faults.
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, &[self.schedule_index as u64, self.track_index as u64, self.run as u64])
    }
}

pub fn cells(cfg: &ExperimentConfig, n_tracks: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    for (schedule_index, &schedule) in cfg.failure_schedules.iter().enumerate() {
        for &strategy in &cfg.strategies {
            for track_index in 0..n_tracks {
                for run in 0..cfg.runs_per_cell {
                    out.push(Cell {
                        schedule_index,
                        schedule,
                        strategy,
                        track_index,
                        run,
                    });
                }
            }
        }
    }
    out
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Runs every cell of the matrix. Results are in cell order regardless of `jobs`.
pub fn run_cells(
    cfg: &ExperimentConfig,
    tracks: &[Track],
    surrogate: &Surrogate,
    jobs: usize,
    event_dir: Option<&Path>,
) -> Result<Vec<(Cell, EpisodeMetrics)>, ExperimentError> {
    let all = cells(cfg, tracks.len());
    let sims: Vec<SimConfig> = cfg.failure_schedules.iter().map(|&s| cfg.sim_config(s)).collect();
    pool(jobs)?.install(|| {
        all.par_iter()
            .map(|cell| {
                let seed = cell.seed(cfg.master_seed);
                let track = &tracks[cell.track_index];
                let rec = run_episode_logged(track, cell.strategy, &sims[cell.schedule_index], Some(surrogate), seed)?;
                if let Some(dir) = event_dir {
                    let name = format!(
                        "{}_{}_{}_{}.jsonl",
                        cell.schedule.as_str(),
                        cell.strategy.as_str(),
                        track.id,
                        cell.run
                    );
                    let f = fs::File::create(dir.join(name))?;
                    rec.write_jsonl(std::io::BufWriter::new(f))?;
                }
                Ok((*cell, rec.metrics))
            })
            .collect()
    })
}

/// Wall-clock duration of reverse-switch planning calls at `iterations`,
/// from safety-driven states spread over the track.
pub fn measure_planner_latency(
    track: &Track,
    surrogate: &Surrogate,
    sim: &SimConfig,
    iterations: usize,
    calls: usize,
    seed: u64,
) -> Result<Vec<Duration>, ExperimentError> {
    let env = sim.failure_schedule.restrict(&sim.env);
    let model = SmdpModel {
        track,
        surrogate,
        env: &env,
        weights: sim.weights,
        cfg: MctsConfig {
            iterations,
            ..sim.mcts
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interrupt = Interrupt::new();
    let mut out = Vec::with_capacity(calls);
    for i in 0..calls {
        let mut s = SystemState::new(sim.n_cameras, ControllerId::Safety);
        s.segment_index = i % track.len();
        s.weather = Weather::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        s.switch_count = 1;
        let start = Instant::now();
        model
            .plan_reverse_switch(&s, sim.mcts.tau_q, &mut rng, &interrupt)
            .map_err(|e| ExperimentError::Sim(SimError::Config(e.to_string())))?;
        out.push(start.elapsed());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub iterations: usize,
    pub calls: usize,
    pub mean_wall_ms: f64,
    pub sd_wall_ms: f64,
    pub simulated_ms: f64,
}

pub fn timing_table(
    cfg: &ExperimentConfig,
    track: &Track,
    surrogate: &Surrogate,
) -> Result<Vec<TimingRow>, ExperimentError> {
    let sim = cfg.sim_config(cfg.failure_schedules[0]);
    cfg.timing_iterations
        .iter()
        .map(|&n| {
            let d = measure_planner_latency(track, surrogate, &sim, n, cfg.timing_calls, cfg.master_seed)?;
            let ms: Vec<f64> = d.iter().map(|d| d.as_secs_f64() * 1e3).collect();
            let mean = ms.iter().sum::<f64>() / ms.len().max(1) as f64;
            let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ms.len().max(2) - 1) as f64;
            Ok(TimingRow {
                iterations: n,
                calls: ms.len(),
                mean_wall_ms: mean,
                sd_wall_ms: var.sqrt(),
                simulated_ms: 1e3 * cfg.latency.planner(n),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub metrics_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub timing_file: Option<PathBuf>,
    pub episodes: usize,
}

pub fn metrics_file_name(schedule: FailureSchedule) -> String {
    format!("metrics_{}.csv", schedule.as_str())
}

/// Runs the whole matrix and writes metrics, summary and timing files.
pub fn run_matrix(cfg: &ExperimentConfig, jobs: usize, out_dir: Option<&Path>) -> Result<MatrixReport, ExperimentError> {
    cfg.validate()?;
    let out = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    fs::create_dir_all(&out)?;
    let tracks = cfg.resolve_tracks()?;
    let surrogate = build_surrogate(cfg, &tracks)?;
    let event_dir = if cfg.write_event_logs {
        let d = out.join("events");
        fs::create_dir_all(&d)?;
        Some(d)
    } else {
        None
    };
    let results = run_cells(cfg, &tracks, &surrogate, jobs, event_dir.as_deref())?;
    let mut metrics_files = Vec::new();
    let mut summary = Vec::new();
    for (i, &schedule) in cfg.failure_schedules.iter().enumerate() {
        let rows: Vec<MetricsRow> = results
            .iter()
            .filter(|(c, _)| c.schedule_index == i)
            .map(|(_, m)| MetricsRow::from(m))
            .collect();
        let path = out.join(metrics_file_name(schedule));
        write_metrics_csv(&rows, std::io::BufWriter::new(fs::File::create(&path)?))?;
        metrics_files.push(path);
        summary.extend(summarize(&rows)?.into_iter().map(|r| (Some(schedule), r)));
    }
    let summary_file = out.join("summary.csv");
    write_summary_csv(&summary, fs::File::create(&summary_file)?)?;
    let timing_file = if cfg.timing_iterations.is_empty() || cfg.timing_calls == 0 {
        None
    } else {
        let rows = timing_table(cfg, &tracks[0], &surrogate)?;
        let path = out.join("timing.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["iterations", "calls", "mean_wall_ms", "sd_wall_ms", "simulated_ms"])?;
        for r in rows {
            w.write_record([
                r.iterations.to_string(),
                r.calls.to_string(),
                format!("{:.3}", r.mean_wall_ms),
                format!("{:.3}", r.sd_wall_ms),
                format!("{:.3}", r.simulated_ms),
            ])?;
        }
        w.flush()?;
        Some(path)
    };
    Ok(MatrixReport {
        metrics_files,
        summary_file,
        timing_file,
        episodes: results.len(),
    })
}

/// Scalar parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha1,
    Alpha2,
    Alpha3,
    MaxSwitches,
    Iterations,
    CUct,
    Gamma,
    HorizonScenes,
    TauQ,
    TauS,
    Warmup,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha1 => "alpha1",
            SweepParam::Alpha2 => "alpha2",
            SweepParam::Alpha3 => "alpha3",
            SweepParam::MaxSwitches => "m_s",
            SweepParam::Iterations => "iterations",
            SweepParam::CUct => "c_uct",
            SweepParam::Gamma => "gamma",
            SweepParam::HorizonScenes => "horizon_scenes",
            SweepParam::TauQ => "tau_q",
            SweepParam::TauS => "tau_s",
            SweepParam::Warmup => "warmup",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, v: f64) {
        match self {
            SweepParam::Alpha1 => cfg.weights.alpha1 = v,
            SweepParam::Alpha2 => cfg.weights.alpha2 = v,
            SweepParam::Alpha3 => cfg.weights.alpha3 = v,
            SweepParam::MaxSwitches => cfg.weights.m_s = v.round().max(0.0) as u32,
            SweepParam::Iterations => cfg.mcts.iterations = v.round().max(0.0) as usize,
            SweepParam::CUct => cfg.mcts.c_uct = v,
            SweepParam::Gamma => cfg.mcts.gamma = v,
            SweepParam::HorizonScenes => cfg.mcts.horizon_scenes = v.round().max(0.0) as usize,
            SweepParam::TauQ => cfg.mcts.tau_q = v,
            SweepParam::TauS => {
                let mut s = cfg.sim_config(cfg.failure_schedules[0]).switch_config();
                s.tau_s = v;
                cfg.switch = Some(s);
            }
            SweepParam::Warmup => {
                let mut s = cfg.sim_config(cfg.failure_schedules[0]).switch_config();
                s.warmup_duration = v;
                cfg.switch = Some(s);
            }
        }
    }
}

impl FromStr for SweepParam {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use SweepParam::*;
        [Alpha1, Alpha2, Alpha3, MaxSwitches, Iterations, CUct, Gamma, HorizonScenes, TauQ, TauS, Warmup]
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::Invalid(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub schedule: FailureSchedule,
    pub strategy: Strategy,
    pub track: String,
    pub runs: usize,
    /// mean of (distance covered / travel time) / v_max
    pub performance_score: f64,
    pub infraction_score: f64,
    pub switch_number: f64,
    pub mean_travel_time: f64,
}

/// Cartesian-product sweep. Every grid point reuses the same seeds.
pub fn sweep(
    base: &ExperimentConfig,
    params: &[(SweepParam, Vec<f64>)],
    jobs: usize,
) -> Result<Vec<SweepRow>, ExperimentError> {
    if params.is_empty() || params.iter().any(|(_, v)| v.is_empty()) {
        return Err(ConfigError::Invalid("sweep needs at least one parameter with values".into()).into());
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for (_, values) in params {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    let tracks = base.resolve_tracks()?;
    let surrogate = build_surrogate(base, &tracks)?;
    let mut rows = Vec::new();
    for point in grid {
        let mut cfg = base.clone();
        for ((p, _), &v) in params.iter().zip(&point) {
            p.apply(&mut cfg, v);
        }
        cfg.validate()?;
        let results = run_cells(&cfg, &tracks, &surrogate, jobs, None)?;
        for (si, &schedule) in cfg.failure_schedules.iter().enumerate() {
            for &strategy in &cfg.strategies {
                for (ti, track) in tracks.iter().enumerate() {
                    let ms: Vec<&EpisodeMetrics> = results
                        .iter()
                        .filter(|(c, _)| c.schedule_index == si && c.strategy == strategy && c.track_index == ti)
                        .map(|(_, m)| m)
                        .collect();
                    let n = ms.len() as f64;
                    let total = track.total_length();
                    rows.push(SweepRow {
                        values: point.clone(),
                        schedule,
                        strategy,
                        track: track.id.clone(),
                        runs: ms.len(),
                        performance_score: ms
                            .iter()
                            .map(|m| (m.route_completion * total / m.travel_time.max(1e-9) / V_MAX).min(1.0))
                            .sum::<f64>()
                            / n,
                        infraction_score: ms.iter().map(|m| m.infraction).sum::<f64>() / n,
                        switch_number: ms.iter().map(|m| f64::from(m.switch_count)).sum::<f64>() / n,
                        mean_travel_time: ms.iter().map(|m| m.travel_time).sum::<f64>() / n,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(params: &[SweepParam], rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = params.iter().map(|p| p.name().to_string()).collect();
    header.extend(
        [
            "schedule",
            "strategy",
            "track",
            "runs",
            "performance_score",
            "infraction_score",
            "switch_number",
            "mean_travel_time",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.values.iter().map(|v| format!("{v}")).collect();
        rec.extend([
            r.schedule.as_str().to_string(),
            r.strategy.as_str().to_string(),
            r.track.clone(),
            r.runs.to_string(),
            f6(r.performance_score),
            f6(r.infraction_score),
            f6(r.switch_number),
            f6(r.mean_travel_time),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, tt: f64, rc: f64, sw: u32) -> MetricsRow {
        MetricsRow {
            strategy: strategy.into(),
            track: "t".into(),
            seed: 1,
            travel_time: tt,
            rc,
            col_v: 0,
            col_o: 0,
            switches: sw,
            infraction: 0.5 * rc + 0.5,
            mean_decision_latency_ms: 0.0,
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn single_row_summary_is_that_row() {
        let s = summarize(&[row("DS", 120.0, 1.0, 3)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].median_travel_time, 120.0);
        assert_eq!(s[0].iqr_travel_time, 0.0);
        assert_eq!(s[0].mean_switches, 3.0);
        assert_eq!(s[0].completion_failures, 0);
    }

    #[test]
    fn empty_and_malformed_csv_rejected() {
        assert!(matches!(read_metrics_csv("".as_bytes()), Err(ExperimentError::Schema(_))));
        let header_only = METRICS_HEADER.join(",") + "\n";
        assert!(matches!(read_metrics_csv(header_only.as_bytes()), Err(ExperimentError::Schema(_))));
        assert!(matches!(read_metrics_csv("a,b\n1,2\n".as_bytes()), Err(ExperimentError::Schema(_))));
        let bad = header_only + "DS,t,1,x,1,0,0,0,1,0\n";
        assert!(matches!(read_metrics_csv(bad.as_bytes()), Err(ExperimentError::Schema(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("DS", 120.5, 1.0, 3), row("GS", 99.25, 0.5, 7)];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sweep_param_names() {
        assert_eq!("alpha3".parse::<SweepParam>().unwrap(), SweepParam::Alpha3);
        assert!("nope".parse::<SweepParam>().is_err());
    }
}
