//! End-to-end geolocation experiments over a measured or simulated
//! campaign.
//!
//! An experiment file is TOML:
//!
//! ```toml
//! algorithm = "cbg"          # or "geoget"
//! mode = "modified"          # or "original"
//! threshold = 0.7
//! grid_km = 10.0
//! seed = 42
//! candidate_areas = 1
//! targets = 100
//!
//! [dataset]
//! preset = "cn-like"         # or topology = "path.toml", or hosts + rtt
//! ```
//!
//! Paths in `[dataset]` are resolved relative to the experiment file.
//! GeoGet targets are probing hosts, located from their delays to the
//! landmarks. CBG targets are landmarks held out of bestline calibration.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::corr_model::{probe_corr_reports, DelayDistanceSample, DEFAULT_STRONG_THRESHOLD};
use crate::dataset::{self, HostRecord, MinRtts, Registry};
use crate::error::{Error, Result};
use crate::geodesy::Coordinate;
use crate::geoloc::{
    cbg_locate, cbg_select_probes, estimate_distance, fit_bestline, geoget_locate, AreaMap,
    Bestline, BestlineScope, GeolocationResult, Mode, Outcome, Truth, DEFAULT_GRID_KM,
};
use crate::netsim::{self, Topology, TopologyConfig};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TARGETS: usize = 100;
pub const DEFAULT_CANDIDATE_AREAS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cbg,
    Geoget,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Cbg => "cbg",
            Algorithm::Geoget => "geoget",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbg" => Ok(Algorithm::Cbg),
            "geoget" => Ok(Algorithm::Geoget),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Where the campaign comes from.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub hosts: Option<PathBuf>,
    pub rtt: Option<PathBuf>,
    pub topology: Option<PathBuf>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_grid")]
    pub grid_km: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_candidate_areas")]
    pub candidate_areas: usize,
    #[serde(default = "default_targets")]
    pub targets: usize,
    pub dataset: DatasetSpec,
}

fn default_mode() -> Mode {
    Mode::Modified
}
fn default_threshold() -> f64 {
    DEFAULT_STRONG_THRESHOLD
}
fn default_grid() -> f64 {
    DEFAULT_GRID_KM
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_candidate_areas() -> usize {
    DEFAULT_CANDIDATE_AREAS
}
fn default_targets() -> usize {
    DEFAULT_TARGETS
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Load and resolve dataset paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut spec.dataset.hosts,
            &mut spec.dataset.rtt,
            &mut spec.dataset.topology,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && (-1.0..=1.0).contains(&self.threshold)) {
            return Err(Error::InvalidValue {
                what: "threshold",
                value: self.threshold,
            });
        }
        if !(self.grid_km.is_finite() && self.grid_km > 0.0) {
            return Err(Error::InvalidValue {
                what: "grid_km",
                value: self.grid_km,
            });
        }
        if self.candidate_areas == 0 {
            return Err(Error::Config("candidate_areas must be at least 1".into()));
        }
        if self.targets == 0 {
            return Err(Error::Config("targets must be at least 1".into()));
        }
        let d = &self.dataset;
        let files = d.hosts.is_some() || d.rtt.is_some();
        let sim = d.topology.is_some() as u8 + d.preset.is_some() as u8;
        match (files, sim) {
            (true, 0) if d.hosts.is_some() && d.rtt.is_some() => Ok(()),
            (true, 0) => Err(Error::Config("dataset needs both `hosts` and `rtt`".into())),
            (false, 1) => Ok(()),
            _ => Err(Error::Config(
                "dataset must name exactly one of: hosts + rtt, topology, preset".into(),
            )),
        }
    }
}

/// Everything an experiment needs from a campaign.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub registry: Registry,
    pub min_rtts: MinRtts,
    pub areas: AreaMap,
}

impl Campaign {
    pub fn from_topology(topology: &Topology, seed: u64) -> Result<Self> {
        let obs = netsim::simulate_campaign(topology, topology.path_model(), seed)?;
        Ok(Self {
            min_rtts: dataset::ingest_rtt(&obs, topology.hosts())?,
            registry: topology.hosts().clone(),
            areas: AreaMap::from_topology(topology)?,
        })
    }

    pub fn from_files(hosts: &Path, rtt: &Path) -> Result<Self> {
        let registry = dataset::load_hosts(hosts)?;
        let obs = dataset::load_rtt(rtt)?;
        Ok(Self {
            min_rtts: dataset::ingest_rtt(&obs, &registry)?,
            areas: AreaMap::nearest_center(&registry)?,
            registry,
        })
    }

    pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Self> {
        match (&spec.hosts, &spec.rtt, &spec.topology, &spec.preset) {
            (Some(h), Some(r), None, None) => Self::from_files(h, r),
            (None, None, Some(t), None) => {
                Self::from_topology(&netsim::build_topology(&TopologyConfig::load(t)?)?, seed)
            }
            (None, None, None, Some(p)) => {
                Self::from_topology(&netsim::build_topology(&preset(p)?)?, seed)
            }
            _ => Err(Error::Config(
                "dataset must name exactly one of: hosts + rtt, topology, preset".into(),
            )),
        }
    }

    pub fn samples(&self) -> Result<Vec<DelayDistanceSample>> {
        dataset::join_distances(&self.min_rtts, &self.registry)
    }
}

/// A bundled topology by name.
pub fn preset(name: &str) -> Result<TopologyConfig> {
    match name {
        "cn-like" => Ok(TopologyConfig::cn_like()),
        other => Err(Error::Config(format!("unknown preset `{other}`"))),
    }
}

/// Seeded choice of `n` ids, returned sorted. All ids when `n` covers them.
pub fn choose_targets(ids: &[&str], n: usize, seed: u64, label: &str) -> Vec<String> {
    let mut ids: Vec<&str> = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if n < ids.len() {
        let mut rng = netsim::keyed_rng(seed, &["targets", label]);
        ids.shuffle(&mut rng);
        ids.truncate(n);
        ids.sort_unstable();
    }
    ids.into_iter().map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRun {
    pub target_id: String,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub result: GeolocationResult,
}

/// Locate probing hosts by their delays to landmarks.
pub fn run_geoget(
    campaign: &Campaign,
    targets: &[String],
    mode: Mode,
    candidate_areas: usize,
) -> Result<Vec<TargetRun>> {
    let landmarks: Vec<HostRecord> = campaign.registry.landmarks().cloned().collect();
    targets
        .par_iter()
        .map(|t| {
            let target = campaign.registry.require(t)?;
            let delay = |l: &str| campaign.min_rtts.get(t, l);
            let result = match geoget_locate(
                &landmarks,
                &campaign.areas,
                delay,
                &target.isp,
                mode,
                candidate_areas,
            ) {
                Ok(a) => GeolocationResult {
                    outcome: Outcome::Located {
                        location: a.coordinate,
                        city: Some(a.city),
                    },
                    region: Vec::new(),
                },
                Err(e) => GeolocationResult::failed(e.to_string()),
            };
            Ok(TargetRun {
                target_id: t.clone(),
                algorithm: Algorithm::Geoget,
                mode,
                result,
            })
        })
        .collect()
}

/// Per-probe calibration points split by landmark ISP.
struct Calibration<'a> {
    probes: BTreeMap<&'a str, &'a HostRecord>,
    points: BTreeMap<(&'a str, &'a str), Vec<(f64, f64)>>,
}

impl<'a> Calibration<'a> {
    fn new(registry: &'a Registry, samples: &'a [DelayDistanceSample]) -> Self {
        let mut points: BTreeMap<(&str, &str), Vec<(f64, f64)>> = BTreeMap::new();
        for s in samples {
            points
                .entry((&s.probe_id, &s.landmark_isp))
                .or_default()
                .push(s.point());
        }
        Self {
            probes: registry.probes().map(|p| (p.id.as_str(), p)).collect(),
            points,
        }
    }

    fn bestline(&self, probe: &str, scope: &BestlineScope) -> Option<Bestline> {
        let host = self.probes.get(probe)?;
        let pts: Vec<(f64, f64)> = match scope {
            BestlineScope::Intra => self.points.get(&(probe, host.isp.as_str()))?.clone(),
            BestlineScope::Inter(isp) => self.points.get(&(probe, isp.as_str()))?.clone(),
            BestlineScope::Overall => self
                .points
                .range((probe, "")..)
                .take_while(|((p, _), _)| *p == probe)
                .flat_map(|(_, v)| v.iter().copied())
                .collect(),
        };
        fit_bestline(&pts, scope.clone()).ok()
    }
}

/// Locate held-out landmarks with CBG.
///
/// Bestlines are calibrated on every landmark except the targets. Modified
/// mode picks probes per city by correlation; original mode uses one
/// seeded random probe per city with its all-landmark bestline.
pub fn run_cbg(
    campaign: &Campaign,
    targets: &[String],
    mode: Mode,
    threshold: f64,
    grid_km: f64,
    seed: u64,
) -> Result<Vec<TargetRun>> {
    let held_out: std::collections::BTreeSet<&str> = targets.iter().map(String::as_str).collect();
    let samples: Vec<DelayDistanceSample> = campaign
        .samples()?
        .into_iter()
        .filter(|s| !held_out.contains(s.landmark_id.as_str()))
        .collect();
    let calib = Calibration::new(&campaign.registry, &samples);
    let reports = probe_corr_reports(&samples);

    // original mode: a fixed random probe per city
    let mut by_city: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in campaign.registry.probes() {
        by_city.entry(&p.city).or_default().push(&p.id);
    }
    let random_pick: Vec<(String, BestlineScope)> = by_city
        .iter_mut()
        .map(|(city, ids)| {
            ids.sort_unstable();
            let mut rng = netsim::keyed_rng(seed, &["cbg-original", city]);
            let i = rng.random_range(0..ids.len());
            (ids[i].to_string(), BestlineScope::Overall)
        })
        .collect();

    let mut isps: Vec<&str> = campaign
        .registry
        .isps()
        .iter()
        .map(String::as_str)
        .collect();
    isps.sort_unstable();
    let modified_pick: BTreeMap<&str, Vec<(String, BestlineScope)>> = isps
        .iter()
        .map(|isp| {
            let picks = cbg_select_probes(&reports, isp, threshold)
                .into_iter()
                .map(|s| (s.probe_id, s.scope))
                .collect();
            (*isp, picks)
        })
        .collect();

    let mut bestlines: BTreeMap<(String, BestlineScope), Option<Bestline>> = BTreeMap::new();
    for picks in modified_pick.values().chain(std::iter::once(&random_pick)) {
        for (probe, scope) in picks {
            bestlines
                .entry((probe.clone(), scope.clone()))
                .or_insert_with(|| calib.bestline(probe, scope));
        }
    }

    targets
        .par_iter()
        .map(|t| {
            let target = campaign.registry.require(t)?;
            let picks = match mode {
                Mode::Modified => &modified_pick[target.isp.as_str()],
                Mode::Original => &random_pick,
            };
            let circles: Vec<(Coordinate, crate::geodesy::Kilometers)> = picks
                .iter()
                .filter_map(|(probe, scope)| {
                    let line = bestlines[&(probe.clone(), scope.clone())].as_ref()?;
                    let delay = campaign.min_rtts.get(probe, t)?;
                    let pos = calib.probes.get(probe.as_str())?.coordinate;
                    Some((pos, estimate_distance(line, delay).distance))
                })
                .collect();
            Ok(TargetRun {
                target_id: t.clone(),
                algorithm: Algorithm::Cbg,
                mode,
                result: cbg_locate(&circles, grid_km),
            })
        })
        .collect()
}

/// Run a full experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TargetRun>> {
    spec.validate()?;
    let campaign = Campaign::load(&spec.dataset, spec.seed)?;
    run_on_campaign(spec, &campaign)
}

/// Run an experiment on an already loaded campaign; `spec.dataset` is
/// ignored.
pub fn run_on_campaign(spec: &ExperimentSpec, campaign: &Campaign) -> Result<Vec<TargetRun>> {
    match spec.algorithm {
        Algorithm::Geoget => {
            let ids: Vec<&str> = campaign.registry.probes().map(|h| h.id.as_str()).collect();
            let targets = choose_targets(&ids, spec.targets, spec.seed, "geoget");
            run_geoget(campaign, &targets, spec.mode, spec.candidate_areas)
        }
        Algorithm::Cbg => {
            let ids: Vec<&str> = campaign
                .registry
                .landmarks()
                .map(|h| h.id.as_str())
                .collect();
            let targets = choose_targets(&ids, spec.targets, spec.seed, "cbg");
            run_cbg(
                campaign,
                &targets,
                spec.mode,
                spec.threshold,
                spec.grid_km,
                spec.seed,
            )
        }
    }
}

const RUN_HEADER: [&str; 8] = [
    "target_id",
    "algorithm",
    "mode",
    "status",
    "lat",
    "lon",
    "city",
    "reason",
];

/// Write `target_id,algorithm,mode,status,lat,lon,city,reason`.
pub fn write_runs<W: Write>(runs: &[TargetRun], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for r in runs {
        let (status, lat, lon, city, reason) = match &r.result.outcome {
            Outcome::Located { location, city } => (
                "located",
                location.lat().to_string(),
                location.lon().to_string(),
                city.clone().unwrap_or_default(),
                String::new(),
            ),
            Outcome::Failed { reason } => (
                "failed",
                String::new(),
                String::new(),
                String::new(),
                reason.clone(),
            ),
        };
        w.write_record([
            r.target_id.as_str(),
            &r.algorithm.to_string(),
            &r.mode.to_string(),
            status,
            &lat,
            &lon,
            &city,
            &reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RunRow {
    target_id: String,
    algorithm: String,
    mode: String,
    status: String,
    lat: Option<f64>,
    lon: Option<f64>,
    city: Option<String>,
    reason: Option<String>,
}

/// Read a run file back. Region points are not stored.
pub fn read_runs<R: Read>(input: R) -> Result<Vec<TargetRun>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::csv("run file", e))?
        .clone();
    if header.iter().ne(RUN_HEADER) {
        return Err(Error::Config(format!(
            "run file header must be `{}`",
            RUN_HEADER.join(",")
        )));
    }
    let mut runs = Vec::new();
    for (i, row) in rdr.deserialize::<RunRow>().enumerate() {
        let row = row.map_err(|e| Error::csv("run file", e))?;
        let outcome = match (row.status.as_str(), row.lat, row.lon) {
            ("located", Some(lat), Some(lon)) => Outcome::Located {
                location: Coordinate::new(lat, lon)?,
                city: row.city.filter(|c| !c.is_empty()),
            },
            ("failed", _, _) => Outcome::Failed {
                reason: row.reason.unwrap_or_default(),
            },
            (s, _, _) => {
                return Err(Error::Config(format!(
                    "run file row {}: bad status `{s}` or missing coordinates",
                    i + 2
                )))
            }
        };
        runs.push(TargetRun {
            target_id: row.target_id,
            algorithm: row.algorithm.parse()?,
            mode: row.mode.parse()?,
            result: GeolocationResult {
                outcome,
                region: Vec::new(),
            },
        });
    }
    Ok(runs)
}

pub fn load_runs(path: &Path) -> Result<Vec<TargetRun>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_runs(f).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

/// Ground truth for each run's target, from the host registry.
pub fn truth_for(runs: &[TargetRun], registry: &Registry) -> Result<Vec<Truth>> {
    runs.iter()
        .map(|r| {
            let h = registry.require(&r.target_id)?;
            Ok(Truth {
                id: h.id.clone(),
                coordinate: h.coordinate,
                city: h.city.clone(),
            })
        })
        .collect()
}
