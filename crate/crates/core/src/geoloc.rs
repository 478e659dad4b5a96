//! Delay-based geolocation: GeoGet (shortest-delay landmark, two-phase
//! area search) and CBG (per-probe bestline, distance circles, centroid of
//! the intersection), both in their original form and with the
//! correlation-aware probe/landmark selection, plus error metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use crate::corr_model::ProbeCorrReport;
use crate::dataset::{HostRecord, Registry, Role};
use crate::error::{Error, Result};
use crate::geodesy::{geodesic_distance, great_circle_km, Coordinate, Kilometers};
use crate::netsim::Topology;

/// Default CBG grid resolution.
pub const DEFAULT_GRID_KM: f64 = 10.0;

const FEASIBILITY_TOL: f64 = 1e-9;

/// Which of a probe's calibration samples a bestline was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BestlineScope {
    /// Landmarks in the probe's own ISP.
    Intra,
    /// Landmarks in the named foreign ISP.
    Inter(String),
    /// Every landmark.
    Overall,
}

impl fmt::Display for BestlineScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BestlineScope::Intra => f.write_str("intra"),
            BestlineScope::Inter(isp) => write!(f, "inter:{isp}"),
            BestlineScope::Overall => f.write_str("overall"),
        }
    }
}

/// Lower linear bound `delay = slope · distance + intercept` of a probe's
/// `(distance km, delay ms)` calibration points.
#[derive(Debug, Clone, PartialEq)]
pub struct Bestline {
    /// ms per km, > 0.
    pub slope: f64,
    /// ms, >= 0.
    pub intercept: f64,
    pub scope: BestlineScope,
    /// Sum of vertical gaps between the points and the line.
    pub deviation: f64,
}

impl Bestline {
    pub fn delay_at(&self, distance_km: f64) -> f64 {
        self.slope * distance_km + self.intercept
    }
}

/// Total vertical deviation of `points` above the line.
pub fn total_deviation(points: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| y - (slope * x + intercept))
        .sum()
}

/// Tightest lower bound with positive slope and non-negative intercept.
///
/// Among lines lying on or below every point, picks the one minimizing the
/// total vertical deviation. The optimum is attained on an edge of the
/// lower convex hull or on the steepest line through the origin, so only
/// those candidates are scored. Ties go to the smaller slope.
pub fn fit_bestline(points: &[(f64, f64)], scope: BestlineScope) -> Result<Bestline> {
    if points.len() < 2 {
        return Err(Error::TooFew {
            what: "bestline points",
            needed: 2,
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !x.is_finite() || !y.is_finite() || *x < 0.0)
    {
        return Err(Error::Degenerate(format!("bad bestline point ({x}, {y})")));
    }

    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // lowest delay per distance
    sorted.dedup_by(|later, first| later.0 == first.0);
    if sorted.len() < 2 {
        return Err(Error::Degenerate(
            "bestline needs at least two distinct distances".into(),
        ));
    }

    let hull = lower_hull(&sorted);
    let mut candidates: Vec<(f64, f64)> = hull
        .windows(2)
        .map(|w| {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            (slope, w[0].1 - slope * w[0].0)
        })
        .collect();
    if let Some(through_origin) = sorted
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|p| p.1 / p.0)
        .min_by(f64::total_cmp)
    {
        if sorted.iter().all(|p| p.0 > 0.0 || p.1 >= 0.0) {
            candidates.push((through_origin, 0.0));
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for (slope, intercept) in candidates {
        if !(slope > 0.0 && intercept >= 0.0 && slope.is_finite()) {
            continue;
        }
        let dev = total_deviation(points, slope, intercept);
        best = match best {
            None => Some((slope, intercept, dev)),
            Some(cur) => {
                let tie = (dev - cur.2).abs() <= 1e-12 * dev.abs().max(cur.2.abs()).max(1.0);
                if (tie && slope < cur.0) || (!tie && dev < cur.2) {
                    Some((slope, intercept, dev))
                } else {
                    Some(cur)
                }
            }
        };
    }
    let (slope, intercept, deviation) = best.ok_or_else(|| {
        Error::Degenerate("no lower bound with positive slope and non-negative intercept".into())
    })?;
    Ok(Bestline {
        slope,
        intercept,
        scope,
        deviation,
    })
}

/// Lower convex hull of points sorted by x with distinct x, collinear
/// interior points dropped.
fn lower_hull(sorted: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in sorted {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Check that a line lies on or below all points.
pub fn is_feasible(points: &[(f64, f64)], slope: f64, intercept: f64) -> bool {
    points
        .iter()
        .all(|&(x, y)| slope * x + intercept <= y + FEASIBILITY_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub distance: Kilometers,
    /// The delay was below the intercept and the distance was clamped to 0.
    pub clamped: bool,
}

/// Invert a bestline: `(delay − intercept) / slope`, clamped at zero.
pub fn estimate_distance(bestline: &Bestline, delay_ms: f64) -> DistanceEstimate {
    let raw = (delay_ms - bestline.intercept) / bestline.slope;
    if raw < 0.0 || !raw.is_finite() {
        DistanceEstimate {
            distance: Kilometers::ZERO,
            clamped: true,
        }
    } else {
        DistanceEstimate {
            distance: Kilometers(raw),
            clamped: false,
        }
    }
}

fn highest_corr(candidates: Vec<(&ProbeCorrReport, f64)>) -> Option<&ProbeCorrReport> {
    candidates
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.probe_id.cmp(&a.0.probe_id)))
        .map(|(r, _)| r)
}

/// A probe chosen for a CBG run and the bestline it should use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSelection {
    pub probe_id: String,
    pub city: String,
    pub scope: BestlineScope,
}

/// Correlation-aware probe choice: one probe per city.
///
/// In each city, the same-ISP probe with the highest intra-ISP correlation
/// above `threshold` is taken with its intra bestline; failing that, the
/// foreign-ISP probe with the highest inter-ISP correlation toward
/// `target_isp` above `threshold`, with its inter bestline. Cities with
/// neither contribute nothing. Ties go to the smaller probe id.
pub fn cbg_select_probes(
    reports: &[ProbeCorrReport],
    target_isp: &str,
    threshold: f64,
) -> Vec<ProbeSelection> {
    let mut by_city: BTreeMap<&str, Vec<&ProbeCorrReport>> = BTreeMap::new();
    for r in reports {
        by_city.entry(&r.probe_city).or_default().push(r);
    }
    let mut out = Vec::new();
    for (city, probes) in by_city {
        let same: Vec<_> = probes
            .iter()
            .filter(|r| r.probe_isp == target_isp)
            .filter_map(|r| {
                r.intra
                    .corr
                    .value()
                    .filter(|&v| v > threshold)
                    .map(|v| (*r, v))
            })
            .collect();
        if let Some(r) = highest_corr(same) {
            out.push(ProbeSelection {
                probe_id: r.probe_id.clone(),
                city: city.to_string(),
                scope: BestlineScope::Intra,
            });
            continue;
        }
        let other: Vec<_> = probes
            .iter()
            .filter(|r| r.probe_isp != target_isp)
            .filter_map(|r| {
                r.inter
                    .get(target_isp)
                    .and_then(|c| c.corr.value())
                    .filter(|&v| v > threshold)
                    .map(|v| (*r, v))
            })
            .collect();
        if let Some(r) = highest_corr(other) {
            out.push(ProbeSelection {
                probe_id: r.probe_id.clone(),
                city: city.to_string(),
                scope: BestlineScope::Inter(target_isp.to_string()),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Located {
        location: Coordinate,
        city: Option<String>,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeolocationResult {
    pub outcome: Outcome,
    /// CBG region sample points; empty for GeoGet and failures.
    pub region: Vec<Coordinate>,
}

impl GeolocationResult {
    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            outcome: Outcome::Failed {
                reason: reason.into(),
            },
            region: Vec::new(),
        }
    }

    pub fn location(&self) -> Option<Coordinate> {
        match &self.outcome {
            Outcome::Located { location, .. } => Some(*location),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn city(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Located { city, .. } => city.as_deref(),
            Outcome::Failed { .. } => None,
        }
    }
}

/// Degree box, `lon_min > lon_max` never occurs (no antimeridian wrap).
#[derive(Debug, Clone, Copy)]
struct BBox {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

impl BBox {
    fn around(c: Coordinate, radius_km: f64) -> Self {
        // 110.5 km per degree of latitude is a lower bound on the ellipsoid
        let dlat = radius_km / 110.5 + 0.01;
        let lat_min = (c.lat() - dlat).max(-90.0);
        let lat_max = (c.lat() + dlat).min(90.0);
        if lat_min <= -90.0 || lat_max >= 90.0 {
            return Self {
                lat_min,
                lat_max,
                lon_min: -180.0,
                lon_max: 180.0,
            };
        }
        let widest = lat_min.abs().max(lat_max.abs()).to_radians().cos();
        let dlon = radius_km / (111.0 * widest) + 0.01;
        Self {
            lat_min,
            lat_max,
            lon_min: (c.lon() - dlon).max(-180.0),
            lon_max: (c.lon() + dlon).min(180.0),
        }
    }

    fn intersect(self, o: BBox) -> Option<BBox> {
        let b = BBox {
            lat_min: self.lat_min.max(o.lat_min),
            lat_max: self.lat_max.min(o.lat_max),
            lon_min: self.lon_min.max(o.lon_min),
            lon_max: self.lon_max.min(o.lon_max),
        };
        (b.lat_min <= b.lat_max && b.lon_min <= b.lon_max).then_some(b)
    }
}

/// Whether `p` lies within `radius` (km) of `center` on the ellipsoid.
/// The spherical distance decides clear cases; within 1% of the boundary
/// the ellipsoidal distance is computed.
fn within(p: Coordinate, center: Coordinate, radius: f64) -> bool {
    let approx = great_circle_km(p, center);
    if approx > radius * 1.01 + 0.5 {
        false
    } else if approx < radius * 0.99 - 0.5 {
        true
    } else {
        geodesic_distance(p, center).value() <= radius
    }
}

/// Intersect the distance circles on a geographic grid and return the
/// centroid of the grid points inside all of them.
///
/// Each circle is widened by half a grid diagonal so that any non-empty
/// continuous intersection keeps at least one grid point.
pub fn cbg_locate(circles: &[(Coordinate, Kilometers)], grid_km: f64) -> GeolocationResult {
    if circles.is_empty() {
        return GeolocationResult::failed("no probes");
    }
    if !(grid_km.is_finite() && grid_km > 0.0) {
        return GeolocationResult::failed(format!("invalid grid resolution {grid_km}"));
    }
    let slack = grid_km / std::f64::consts::SQRT_2;
    let mut order: Vec<(Coordinate, f64)> = circles
        .iter()
        .map(|(c, r)| (*c, r.value() + slack))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));

    let Some(bbox) = order
        .iter()
        .map(|(c, r)| BBox::around(*c, *r))
        .try_fold(None::<BBox>, |acc, b| match acc {
            None => Some(Some(b)),
            Some(a) => a.intersect(b).map(Some),
        })
        .flatten()
    else {
        return GeolocationResult::failed("empty intersection");
    };

    let mid_lat = (bbox.lat_min + bbox.lat_max) / 2.0;
    let mid_lon = (bbox.lon_min + bbox.lon_max) / 2.0;
    let lat_step = grid_km / 110.574;
    let lon_step = grid_km / (111.32 * mid_lat.to_radians().cos().max(1e-3));
    let n_lat = ((bbox.lat_max - bbox.lat_min) / 2.0 / lat_step).floor() as i64;
    let n_lon = ((bbox.lon_max - bbox.lon_min) / 2.0 / lon_step).floor() as i64;

    let mut region = Vec::new();
    for i in -n_lat..=n_lat {
        let lat = mid_lat + i as f64 * lat_step;
        for j in -n_lon..=n_lon {
            let lon = mid_lon + j as f64 * lon_step;
            let Ok(p) = Coordinate::new(lat, lon) else {
                continue;
            };
            if order.iter().all(|&(c, r)| within(p, c, r)) {
                region.push(p);
            }
        }
    }
    if region.is_empty() {
        return GeolocationResult::failed("empty intersection");
    }
    let n = region.len() as f64;
    let lat = region.iter().map(Coordinate::lat).sum::<f64>() / n;
    let lon = region.iter().map(Coordinate::lon).sum::<f64>() / n;
    GeolocationResult {
        outcome: Outcome::Located {
            location: Coordinate::new(lat, lon).expect("mean of valid coordinates"),
            city: None,
        },
        region,
    }
}

/// Partition of cities into areas, each with one center city.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaMap {
    area_of_city: BTreeMap<String, String>,
    center_of_area: BTreeMap<String, String>,
}

impl AreaMap {
    pub fn new(
        area_of_city: BTreeMap<String, String>,
        center_of_area: BTreeMap<String, String>,
    ) -> Result<Self> {
        for (area, center) in &center_of_area {
            if area_of_city.get(center) != Some(area) {
                return Err(Error::Config(format!(
                    "center city `{center}` of area `{area}` is not assigned to it"
                )));
            }
        }
        for (city, area) in &area_of_city {
            if !center_of_area.contains_key(area) {
                return Err(Error::Config(format!(
                    "city `{city}` is in area `{area}`, which has no center"
                )));
            }
        }
        Ok(Self {
            area_of_city,
            center_of_area,
        })
    }

    /// Every regional-center city heads its own area; other cities join the
    /// geodesically nearest center. City positions are taken from the
    /// lexicographically first host in each city.
    pub fn nearest_center(registry: &Registry) -> Result<Self> {
        let mut city_pos: BTreeMap<&str, (&str, Coordinate, bool)> = BTreeMap::new();
        for h in registry.hosts() {
            let e = city_pos.entry(h.city.as_str()).or_insert((
                h.id.as_str(),
                h.coordinate,
                h.is_regional_center,
            ));
            if h.id.as_str() < e.0 {
                *e = (h.id.as_str(), h.coordinate, h.is_regional_center);
            }
        }
        let centers: Vec<(&str, Coordinate)> = city_pos
            .iter()
            .filter(|(_, v)| v.2)
            .map(|(c, v)| (*c, v.1))
            .collect();
        if centers.is_empty() {
            return Err(Error::Config("no regional-center city in registry".into()));
        }
        let area_of_city = city_pos
            .iter()
            .map(|(&city, &(_, pos, is_center))| {
                let area = if is_center {
                    city
                } else {
                    centers
                        .iter()
                        .min_by(|a, b| {
                            geodesic_distance(pos, a.1)
                                .value()
                                .total_cmp(&geodesic_distance(pos, b.1).value())
                        })
                        .map(|c| c.0)
                        .expect("non-empty")
                };
                (city.to_string(), area.to_string())
            })
            .collect();
        let center_of_area = centers
            .iter()
            .map(|(c, _)| (c.to_string(), c.to_string()))
            .collect();
        Self::new(area_of_city, center_of_area)
    }

    /// Areas are the topology's regions.
    pub fn from_topology(topology: &Topology) -> Result<Self> {
        let area_of_city = topology
            .cities()
            .iter()
            .map(|c| (c.id.clone(), c.region_id.clone()))
            .collect();
        let center_of_area = topology
            .region_ids()
            .map(|r| {
                let center = topology.center_of(r).expect("region has a center");
                (r.to_string(), center.id.clone())
            })
            .collect();
        Self::new(area_of_city, center_of_area)
    }

    pub fn area_of(&self, city: &str) -> Option<&str> {
        self.area_of_city.get(city).map(String::as_str)
    }

    pub fn center_of(&self, area: &str) -> Option<&str> {
        self.center_of_area.get(area).map(String::as_str)
    }

    pub fn areas(&self) -> impl Iterator<Item = &str> {
        self.center_of_area.keys().map(String::as_str)
    }

    pub fn area_count(&self) -> usize {
        self.center_of_area.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Landmarks outside the target's ISP (the contrast group).
    Original,
    /// Landmarks inside the target's ISP.
    Modified,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Original => "original",
            Mode::Modified => "modified",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Mode::Original),
            "modified" => Ok(Mode::Modified),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoGetAnswer {
    pub city: String,
    pub landmark_id: String,
    pub coordinate: Coordinate,
    pub delay_ms: f64,
    pub candidate_areas: Vec<String>,
}

/// Two-phase shortest-delay geolocation.
///
/// `delay` gives the target's delay to a landmark id, `None` when
/// unmeasured. Phase one ranks areas by the shortest delay to landmarks in
/// their center city and keeps the best `candidate_areas`; phase two maps
/// the target to the city of the shortest-delay landmark in those areas.
/// Ties go to the smaller area or landmark id.
pub fn geoget_locate<F>(
    landmarks: &[HostRecord],
    areas: &AreaMap,
    delay: F,
    target_isp: &str,
    mode: Mode,
    candidate_areas: usize,
) -> Result<GeoGetAnswer>
where
    F: Fn(&str) -> Option<f64>,
{
    let mut eligible: Vec<&HostRecord> = landmarks
        .iter()
        .filter(|l| l.role == Role::Landmark)
        .filter(|l| match mode {
            Mode::Modified => l.isp == target_isp,
            Mode::Original => l.isp != target_isp,
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Degenerate(format!(
            "no landmarks pass the {mode} ISP filter for `{target_isp}`"
        )));
    }
    eligible.sort_by(|a, b| a.id.cmp(&b.id));

    let mut area_score: BTreeMap<&str, f64> = areas.areas().map(|a| (a, f64::INFINITY)).collect();
    for l in &eligible {
        let Some(area) = areas.area_of(&l.city) else {
            continue;
        };
        if areas.center_of(area) != Some(l.city.as_str()) {
            continue;
        }
        if let Some(d) = delay(&l.id) {
            let s = area_score.get_mut(area).expect("known area");
            *s = s.min(d);
        }
    }
    let mut ranked: Vec<(&str, f64)> = area_score.into_iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
    let chosen: BTreeSet<&str> = ranked
        .iter()
        .take(candidate_areas.max(1))
        .map(|a| a.0)
        .collect();

    let mut best: Option<(&HostRecord, f64)> = None;
    for l in &eligible {
        if !areas.area_of(&l.city).is_some_and(|a| chosen.contains(a)) {
            continue;
        }
        let Some(d) = delay(&l.id) else { continue };
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((l, d));
        }
    }
    let (l, d) = best
        .ok_or_else(|| Error::Degenerate("no measured landmark in the candidate areas".into()))?;
    Ok(GeoGetAnswer {
        city: l.city.clone(),
        landmark_id: l.id.clone(),
        coordinate: l.coordinate,
        delay_ms: d,
        candidate_areas: chosen.into_iter().map(str::to_string).collect(),
    })
}

/// Ground truth for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub id: String,
    pub coordinate: Coordinate,
    pub city: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetError {
    pub target_id: String,
    pub error_km: Option<f64>,
    pub city_correct: Option<bool>,
}

/// Error-distance summary over a set of targets. Failed targets have no
/// error distance and count against city accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub targets: Vec<TargetError>,
    pub located: usize,
    pub failed: usize,
    pub median_km: Option<f64>,
    pub mean_km: Option<f64>,
    /// `(error km, fraction of all targets with error <= it)`, ascending.
    pub cdf: Vec<(f64, f64)>,
    /// Share of all targets mapped to their true city, when results carry
    /// cities.
    pub city_accuracy: Option<f64>,
}

pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

pub fn evaluate_results(results: &[GeolocationResult], truth: &[Truth]) -> Result<ErrorReport> {
    if results.len() != truth.len() {
        return Err(Error::Degenerate(format!(
            "{} results for {} targets",
            results.len(),
            truth.len()
        )));
    }
    let has_cities = results.iter().any(|r| r.city().is_some());
    let targets: Vec<TargetError> = results
        .iter()
        .zip(truth)
        .map(|(r, t)| TargetError {
            target_id: t.id.clone(),
            error_km: r
                .location()
                .map(|loc| geodesic_distance(loc, t.coordinate).value()),
            city_correct: has_cities.then(|| r.city() == Some(t.city.as_str())),
        })
        .collect();
    let mut errors: Vec<f64> = targets.iter().filter_map(|t| t.error_km).collect();
    errors.sort_by(f64::total_cmp);
    let total = targets.len();
    let cdf = errors
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / total as f64))
        .collect();
    let city_accuracy = has_cities.then(|| {
        targets
            .iter()
            .filter(|t| t.city_correct == Some(true))
            .count() as f64
            / total as f64
    });
    Ok(ErrorReport {
        located: errors.len(),
        failed: total - errors.len(),
        median_km: median(&errors),
        mean_km: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        cdf,
        city_accuracy,
        targets,
    })
}

impl ErrorReport {
    /// Two-column `error_km,fraction` CSV.
    pub fn write_cdf<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["error_km", "fraction"])?;
        for (e, f) in &self.cdf {
            w.write_record([e.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per target (`target_id,status,error_km,city_correct`), a
    /// blank line, then a `metric,value` summary block. Missing values are
    /// empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["target_id", "status", "error_km", "city_correct"])?;
            for t in &self.targets {
                w.write_record([
                    t.target_id.clone(),
                    if t.error_km.is_some() {
                        "located"
                    } else {
                        "failed"
                    }
                    .to_string(),
                    t.error_km.map(|e| e.to_string()).unwrap_or_default(),
                    t.city_correct.map(|c| c.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
        writeln!(out)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for (k, v) in [
            ("targets", self.targets.len().to_string()),
            ("located", self.located.to_string()),
            ("failed", self.failed.to_string()),
            ("median_error_km", opt(self.median_km)),
            ("mean_error_km", opt(self.mean_km)),
            ("city_accuracy", opt(self.city_accuracy)),
        ] {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}
