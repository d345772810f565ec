//! Historical-performance lookup table and the clustered kNN belief query.
//!
//! Records are clustered by structural label, then split by whether any
//! perception fault was present. A query picks one (cluster, partition) pair
//! and averages the `k` nearest records of the requested controller.

mod truth;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Belief, ControllerId, RoadType, SceneFeatures, StructuralLabel, SystemState, TrafficDensity, Track, Weather,
};

pub use truth::{synth_ground_truth, ControllerSurfaces, GroundTruthConfig, ResponseSurface};

/// Added to the weather distance when traffic density differs from the query.
pub const DENSITY_MISMATCH_PENALTY: f64 = 1.0;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("cannot build a lookup table from zero records")]
    EmptyRecords,
    #[error("no records for structural label {0}")]
    MissingCluster(StructuralLabel),
    #[error("no {controller} records in the {partition} partition of {label}")]
    EmptyPartition {
        label: StructuralLabel,
        partition: &'static str,
        controller: ControllerId,
    },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("response surface has no entry for {0}")]
    SurfaceGap(RoadType),
    #[error("invalid speed term {0}")]
    SurfaceSpeed(f64),
    #[error("observed speed must be >= 0, got {0}")]
    NegativeSpeed(f64),
    #[error("v_max must be > 0")]
    BadSpeedLimit,
    #[error("lookup table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("lookup table csv row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutRecord {
    pub structural_label: StructuralLabel,
    pub weather: Weather,
    pub traffic_density: TrafficDensity,
    pub failures: Vec<bool>,
    pub controller: ControllerId,
    pub observed_speed: f64,
    pub collided: bool,
}

impl LutRecord {
    pub fn has_failure(&self) -> bool {
        self.failures.iter().any(|&f| f)
    }
}

#[derive(Debug, Clone, Default)]
struct Partition {
    /// record indices per controller, ascending
    by_controller: [Vec<u32>; 2],
}

impl Partition {
    fn len(&self) -> usize {
        self.by_controller.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Default)]
struct Cluster {
    nominal: Partition,
    failed: Partition,
}

/// Immutable table of historical records, clustered for kNN queries.
#[derive(Debug, Clone)]
pub struct LookupTable {
    records: Vec<LutRecord>,
    clusters: BTreeMap<StructuralLabel, Cluster>,
}

/// What a belief query needs to know about the current situation.
#[derive(Debug, Clone, Copy)]
pub struct BeliefQuery<'a> {
    pub label: StructuralLabel,
    pub weather: Weather,
    pub density: TrafficDensity,
    pub failures: &'a [bool],
    /// selects the failure partition
    pub degraded: bool,
}

impl<'a> BeliefQuery<'a> {
    pub fn from_state(state: &'a SystemState, scene: &SceneFeatures) -> Self {
        BeliefQuery {
            label: scene.label(),
            weather: state.weather,
            density: state.traffic_density,
            failures: &state.failures,
            degraded: state.degraded(),
        }
    }
}

/// Ordering key for neighbours: distance, then whether the exact failure
/// signature differs, then record index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Rank {
    distance: f64,
    signature_mismatch: bool,
    index: u32,
}

impl Rank {
    fn before(&self, other: &Rank) -> bool {
        match self.distance.total_cmp(&other.distance) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                (self.signature_mismatch, self.index) < (other.signature_mismatch, other.index)
            }
        }
    }
}

/// Neighbour distance: Euclidean over weather channels scaled to [0, 1], plus
/// a fixed penalty when traffic density differs.
pub fn neighbor_distance(record: &LutRecord, weather: &Weather, density: TrafficDensity) -> f64 {
    let a = record.weather.normalized();
    let b = weather.normalized();
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    let penalty = if record.traffic_density == density {
        0.0
    } else {
        DENSITY_MISMATCH_PENALTY
    };
    sq.sqrt() + penalty
}

fn same_signature(a: &[bool], b: &[bool]) -> bool {
    let n = a.len().max(b.len());
    (0..n).all(|i| a.get(i).copied().unwrap_or(false) == b.get(i).copied().unwrap_or(false))
}

pub fn build_lut(records: Vec<LutRecord>) -> Result<LookupTable, SurrogateError> {
    LookupTable::build(records)
}

impl LookupTable {
    pub fn build(records: Vec<LutRecord>) -> Result<Self, SurrogateError> {
        if records.is_empty() {
            return Err(SurrogateError::EmptyRecords);
        }
        let mut clusters: BTreeMap<StructuralLabel, Cluster> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if !(r.observed_speed >= 0.0) {
                return Err(SurrogateError::NegativeSpeed(r.observed_speed));
            }
            let cluster = clusters.entry(r.structural_label).or_default();
            let part = if r.has_failure() {
                &mut cluster.failed
            } else {
                &mut cluster.nominal
            };
            part.by_controller[r.controller.index()].push(i as u32);
        }
        Ok(LookupTable { records, clusters })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LutRecord] {
        &self.records
    }

    pub fn labels(&self) -> impl Iterator<Item = &StructuralLabel> {
        self.clusters.keys()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Sizes of the (nominal, failed) partitions of a cluster.
    pub fn partition_sizes(&self, label: &StructuralLabel) -> Option<(usize, usize)> {
        self.clusters.get(label).map(|c| (c.nominal.len(), c.failed.len()))
    }

    /// Record indices of one controller in a partition, ascending.
    pub fn partition(&self, label: &StructuralLabel, degraded: bool, controller: ControllerId) -> Option<&[u32]> {
        self.clusters.get(label).map(|c| {
            let p = if degraded { &c.failed } else { &c.nominal };
            p.by_controller[controller.index()].as_slice()
        })
    }

    /// Indices of the `k` nearest records (capped at partition size), nearest first.
    pub fn nearest(
        &self,
        query: &BeliefQuery<'_>,
        controller: ControllerId,
        k: usize,
    ) -> Result<Vec<usize>, SurrogateError> {
        if k == 0 {
            return Err(SurrogateError::ZeroK);
        }
        let cluster = self
            .clusters
            .get(&query.label)
            .ok_or(SurrogateError::MissingCluster(query.label))?;
        let (partition, name) = if query.degraded {
            (&cluster.failed, "failure")
        } else {
            (&cluster.nominal, "no-failure")
        };
        let candidates = &partition.by_controller[controller.index()];
        if candidates.is_empty() {
            return Err(SurrogateError::EmptyPartition {
                label: query.label,
                partition: name,
                controller,
            });
        }
        let k = k.min(candidates.len());
        // bounded insertion into a sorted buffer; k is small
        let mut best: Vec<Rank> = Vec::with_capacity(k + 1);
        for &idx in candidates {
            let rec = &self.records[idx as usize];
            let rank = Rank {
                distance: neighbor_distance(rec, &query.weather, query.density),
                signature_mismatch: !same_signature(&rec.failures, query.failures),
                index: idx,
            };
            if best.len() == k && !rank.before(&best[k - 1]) {
                continue;
            }
            let pos = best.iter().position(|b| rank.before(b)).unwrap_or(best.len());
            best.insert(pos, rank);
            best.truncate(k);
        }
        Ok(best.into_iter().map(|r| r.index as usize).collect())
    }

    /// Averages the nearest records into a belief; `v_max` normalizes speed.
    pub fn query_belief(
        &self,
        query: &BeliefQuery<'_>,
        controller: ControllerId,
        k: usize,
        v_max: f64,
    ) -> Result<Belief, SurrogateError> {
        if !(v_max > 0.0) {
            return Err(SurrogateError::BadSpeedLimit);
        }
        let idx = self.nearest(query, controller, k)?;
        let n = idx.len() as f64;
        let (speed, collisions) = idx.iter().fold((0.0, 0.0), |(s, c), &i| {
            let r = &self.records[i];
            (s + r.observed_speed, c + if r.collided { 1.0 } else { 0.0 })
        });
        Ok(Belief::from_speed(speed / n, collisions / n, v_max))
    }

    /// Checks that every scene on the track can be answered for both
    /// controllers in both partitions.
    pub fn check_coverage(&self, track: &Track) -> Result<(), SurrogateError> {
        for scene in &track.segments {
            let label = scene.label();
            for degraded in [false, true] {
                for c in [ControllerId::Performant, ControllerId::Safety] {
                    match self.partition(&label, degraded, c) {
                        None => return Err(SurrogateError::MissingCluster(label)),
                        Some([]) => {
                            return Err(SurrogateError::EmptyPartition {
                                label,
                                partition: if degraded { "failure" } else { "no-failure" },
                                controller: c,
                            })
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        Ok(())
    }
}

/// A lookup table plus the query parameters used everywhere a belief is needed.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub table: LookupTable,
    pub k: usize,
    pub v_max: f64,
}

impl Surrogate {
    pub fn new(table: LookupTable, k: usize, v_max: f64) -> Result<Self, SurrogateError> {
        if k == 0 {
            return Err(SurrogateError::ZeroK);
        }
        if !(v_max > 0.0) {
            return Err(SurrogateError::BadSpeedLimit);
        }
        Ok(Surrogate { table, k, v_max })
    }

    pub fn belief(
        &self,
        state: &SystemState,
        scene: &SceneFeatures,
        controller: ControllerId,
    ) -> Result<Belief, SurrogateError> {
        self.table
            .query_belief(&BeliefQuery::from_state(state, scene), controller, self.k, self.v_max)
    }
}

/// Source of controller beliefs for the current state.
pub trait BeliefSource {
    fn belief(&self, state: &SystemState, controller: ControllerId) -> Result<Belief, SurrogateError>;
}

/// A surrogate bound to the track the vehicle is driving.
#[derive(Debug, Clone, Copy)]
pub struct TrackSurrogate<'a> {
    pub surrogate: &'a Surrogate,
    pub track: &'a Track,
}

impl BeliefSource for TrackSurrogate<'_> {
    fn belief(&self, state: &SystemState, controller: ControllerId) -> Result<Belief, SurrogateError> {
        self.surrogate
            .belief(state, self.track.scene(state.segment_index), controller)
    }
}

pub const LUT_CSV_HEADER: [&str; 9] = [
    "structural_label",
    "cloudiness",
    "precipitation",
    "deposit",
    "density",
    "failures",
    "controller",
    "speed",
    "collided",
];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    structural_label: String,
    cloudiness: f64,
    precipitation: f64,
    deposit: f64,
    density: String,
    failures: String,
    controller: String,
    speed: f64,
    collided: u8,
}

pub fn write_lut_csv<W: Write>(records: &[LutRecord], out: W) -> Result<(), SurrogateError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            structural_label: r.structural_label.to_string(),
            cloudiness: r.weather.cloudiness,
            precipitation: r.weather.precipitation,
            deposit: r.weather.precipitation_deposit,
            density: r.traffic_density.as_str().to_owned(),
            failures: r.failures.iter().map(|&f| if f { '1' } else { '0' }).collect(),
            controller: r.controller.as_str().to_owned(),
            speed: r.observed_speed,
            collided: u8::from(r.collided),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lut_csv<R: Read>(input: R) -> Result<Vec<LutRecord>, SurrogateError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(LUT_CSV_HEADER.iter().copied()) {
        return Err(SurrogateError::Parse {
            row: 0,
            msg: format!("expected header {}", LUT_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let bad = |msg: String| SurrogateError::Parse { row: i + 1, msg };
        let failures = row
            .failures
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(bad(format!("failure bit `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.collided > 1 {
            return Err(bad(format!("collided must be 0 or 1, got {}", row.collided)));
        }
        out.push(LutRecord {
            structural_label: row.structural_label.parse().map_err(|e| bad(format!("{e}")))?,
            weather: Weather::new(row.cloudiness, row.precipitation, row.deposit),
            traffic_density: row.density.parse().map_err(|e| bad(format!("{e}")))?,
            failures,
            controller: row.controller.parse().map_err(|e| bad(format!("{e}")))?,
            observed_speed: row.speed,
            collided: row.collided == 1,
        });
    }
    Ok(out)
}

pub fn save_lut(records: &[LutRecord], path: &Path) -> Result<(), SurrogateError> {
    let f = std::fs::File::create(path)?;
    write_lut_csv(records, std::io::BufWriter::new(f))
}

pub fn load_lut(path: &Path) -> Result<Vec<LutRecord>, SurrogateError> {
    let f = std::fs::File::open(path)?;
    read_lut_csv(std::io::BufReader::new(f))
}
