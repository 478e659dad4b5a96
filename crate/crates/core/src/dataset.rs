//! Host registries, RTT observations and the joined delay-distance samples,
//! with their CSV forms.
//!
//! | file        | columns                                                                                  |
//! |-------------|------------------------------------------------------------------------------------------|
//! | hosts.csv   | `id,role,city,isp,lat,lon,is_regional_center`                                            |
//! | rtt.csv     | `probe_id,landmark_id,timestamp_iso8601,rtt_ms`                                          |
//! | samples.csv | `probe_id,landmark_id,min_rtt_ms,distance_km,probe_isp,landmark_isp,probe_city,landmark_city` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Serialize};

use crate::corr_model::DelayDistanceSample;
use crate::error::{Error, Result};
use crate::geodesy::{geodesic_distance, Coordinate, Kilometers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Probe,
    Landmark,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Probe => "probe",
            Role::Landmark => "landmark",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probe" => Ok(Role::Probe),
            "landmark" => Ok(Role::Landmark),
            other => Err(Error::Config(format!("unknown host role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostRecord {
    pub id: String,
    pub role: Role,
    pub city: String,
    pub isp: String,
    pub coordinate: Coordinate,
    pub is_regional_center: bool,
}

/// Validated hosts indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    hosts: Vec<HostRecord>,
    index: BTreeMap<String, usize>,
    isps: Vec<String>,
    cities: Vec<String>,
}

impl Registry {
    pub fn get(&self, id: &str) -> Option<&HostRecord> {
        self.index.get(id).map(|&i| &self.hosts[i])
    }

    pub fn require(&self, id: &str) -> Result<&HostRecord> {
        self.get(id).ok_or_else(|| Error::NotFound {
            kind: "host",
            id: id.to_string(),
        })
    }

    /// Hosts in input order.
    pub fn hosts(&self) -> &[HostRecord] {
        &self.hosts
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &HostRecord> {
        self.hosts.iter().filter(move |h| h.role == role)
    }

    pub fn probes(&self) -> impl Iterator<Item = &HostRecord> {
        self.with_role(Role::Probe)
    }

    pub fn landmarks(&self) -> impl Iterator<Item = &HostRecord> {
        self.with_role(Role::Landmark)
    }

    /// Distinct ISPs, sorted.
    pub fn isps(&self) -> &[String] {
        &self.isps
    }

    /// Distinct cities, sorted.
    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn count(&self, role: Role) -> usize {
        self.with_role(role).count()
    }
}

/// Build an indexed registry, rejecting duplicate ids.
pub fn validate_registry(records: Vec<HostRecord>) -> Result<Registry> {
    let mut index = BTreeMap::new();
    let mut problems = Vec::new();
    for (row, h) in records.iter().enumerate() {
        if let Some(&first) = index.get(&h.id) {
            problems.push(format!(
                "row {}: duplicate id `{}` (first seen at row {})",
                row + 1,
                h.id,
                first + 1
            ));
        } else {
            index.insert(h.id.clone(), row);
        }
    }
    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    let isps = records
        .iter()
        .map(|h| h.isp.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cities = records
        .iter()
        .map(|h| h.city.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(Registry {
        hosts: records,
        index,
        isps,
        cities,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct HostRow {
    id: String,
    role: Role,
    city: String,
    isp: String,
    lat: f64,
    lon: f64,
    is_regional_center: bool,
}

/// Parse hosts.csv. Coordinate and duplicate-id problems are reported
/// together with their row numbers.
pub fn read_hosts<R: Read>(input: R) -> Result<Registry> {
    let mut reader = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.deserialize::<HostRow>().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {}: {e}", i + 1));
                continue;
            }
        };
        match Coordinate::new(row.lat, row.lon) {
            Ok(coordinate) => records.push(HostRecord {
                id: row.id,
                role: row.role,
                city: row.city,
                isp: row.isp,
                coordinate,
                is_regional_center: row.is_regional_center,
            }),
            Err(e) => problems.push(format!("row {} (`{}`): {e}", i + 1, row.id)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    validate_registry(records)
}

pub fn load_hosts(path: &Path) -> Result<Registry> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_hosts(file).map_err(|e| match e {
        Error::Registry(mut p) => {
            p.insert(0, format!("in {}", path.display()));
            Error::Registry(p)
        }
        other => other,
    })
}

pub fn write_hosts<'a, W: Write>(
    hosts: impl IntoIterator<Item = &'a HostRecord>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for h in hosts {
        w.serialize(HostRow {
            id: h.id.clone(),
            role: h.role,
            city: h.city.clone(),
            isp: h.isp.clone(),
            lat: h.coordinate.lat(),
            lon: h.coordinate.lon(),
            is_regional_center: h.is_regional_center,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One RTT measurement between a probe and a landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RttObservation {
    pub probe_id: String,
    pub landmark_id: String,
    pub timestamp: DateTime<FixedOffset>,
    rtt_ms: f64,
}

impl RttObservation {
    pub fn new(
        probe_id: impl Into<String>,
        landmark_id: impl Into<String>,
        timestamp: DateTime<FixedOffset>,
        rtt_ms: f64,
    ) -> Result<Self> {
        if !rtt_ms.is_finite() || rtt_ms <= 0.0 {
            return Err(Error::InvalidValue {
                what: "rtt (ms)",
                value: rtt_ms,
            });
        }
        Ok(Self {
            probe_id: probe_id.into(),
            landmark_id: landmark_id.into(),
            timestamp,
            rtt_ms,
        })
    }

    pub fn rtt_ms(&self) -> f64 {
        self.rtt_ms
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RttRow {
    probe_id: String,
    landmark_id: String,
    timestamp_iso8601: String,
    rtt_ms: f64,
}

/// Parse an RFC 3339 timestamp such as `2016-01-04T00:00:00Z`.
pub fn parse_timestamp(text: &str) -> Result<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(text)
        .map_err(|e| Error::Config(format!("timestamp `{text}`: {e}")))
}

pub fn read_rtt<R: Read>(input: R) -> Result<Vec<RttObservation>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.deserialize::<RttRow>().enumerate() {
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            let ts = DateTime::parse_from_rfc3339(&row.timestamp_iso8601)
                .map_err(|e| format!("timestamp `{}`: {e}", row.timestamp_iso8601))?;
            RttObservation::new(row.probe_id, row.landmark_id, ts, row.rtt_ms)
                .map_err(|e| e.to_string())
        });
        match parsed {
            Ok(o) => out.push(o),
            Err(e) => problems.push(format!("row {}: {e}", i + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    Ok(out)
}

pub fn load_rtt(path: &Path) -> Result<Vec<RttObservation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rtt(file)
}

pub fn write_rtt<W: Write>(observations: &[RttObservation], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in observations {
        w.serialize(RttRow {
            probe_id: o.probe_id.clone(),
            landmark_id: o.landmark_id.clone(),
            timestamp_iso8601: o.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            rtt_ms: o.rtt_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Minimum RTT per measured `(probe, landmark)` pair. Unmeasured pairs are
/// absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinRtts(BTreeMap<(String, String), f64>);

impl MinRtts {
    pub fn get(&self, probe_id: &str, landmark_id: &str) -> Option<f64> {
        // BTreeMap<(String, String)> cannot be queried by (&str, &str)
        self.0
            .get(&(probe_id.to_string(), landmark_id.to_string()))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.0
            .iter()
            .map(|((p, l), &v)| (p.as_str(), l.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<((String, String), f64)> for MinRtts {
    fn from_iter<I: IntoIterator<Item = ((String, String), f64)>>(iter: I) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in iter {
            map.entry(k)
                .and_modify(|m: &mut f64| *m = m.min(v))
                .or_insert(v);
        }
        MinRtts(map)
    }
}

/// Per-pair minimum RTT over all observations.
pub fn ingest_rtt(observations: &[RttObservation], registry: &Registry) -> Result<MinRtts> {
    ingest(observations.iter(), registry)
}

/// As [`ingest_rtt`], keeping only observations with `start <= timestamp < end`.
pub fn ingest_rtt_within(
    observations: &[RttObservation],
    registry: &Registry,
    start: DateTime<FixedOffset>,
    end: DateTime<FixedOffset>,
) -> Result<MinRtts> {
    ingest(
        observations
            .iter()
            .filter(|o| o.timestamp >= start && o.timestamp < end),
        registry,
    )
}

fn ingest<'a>(
    observations: impl Iterator<Item = &'a RttObservation>,
    registry: &Registry,
) -> Result<MinRtts> {
    let mut map: BTreeMap<(String, String), f64> = BTreeMap::new();
    for o in observations {
        registry.require(&o.probe_id)?;
        registry.require(&o.landmark_id)?;
        map.entry((o.probe_id.clone(), o.landmark_id.clone()))
            .and_modify(|m| *m = m.min(o.rtt_ms))
            .or_insert(o.rtt_ms);
    }
    Ok(MinRtts(map))
}

/// Attach geodesic distances and ISP/city tags to each measured pair.
pub fn join_distances(min_rtts: &MinRtts, registry: &Registry) -> Result<Vec<DelayDistanceSample>> {
    min_rtts
        .iter()
        .map(|(p, l, delay_ms)| {
            let probe = registry.require(p)?;
            let landmark = registry.require(l)?;
            Ok(DelayDistanceSample {
                probe_id: probe.id.clone(),
                landmark_id: landmark.id.clone(),
                delay_ms,
                distance: geodesic_distance(probe.coordinate, landmark.coordinate),
                probe_isp: probe.isp.clone(),
                landmark_isp: landmark.isp.clone(),
                probe_city: probe.city.clone(),
                landmark_city: landmark.city.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    probe_id: String,
    landmark_id: String,
    min_rtt_ms: f64,
    distance_km: f64,
    probe_isp: String,
    landmark_isp: String,
    probe_city: String,
    landmark_city: String,
}

pub fn write_samples<W: Write>(samples: &[DelayDistanceSample], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(SampleRow {
            probe_id: s.probe_id.clone(),
            landmark_id: s.landmark_id.clone(),
            min_rtt_ms: s.delay_ms,
            distance_km: s.distance.value(),
            probe_isp: s.probe_isp.clone(),
            landmark_isp: s.landmark_isp.clone(),
            probe_city: s.probe_city.clone(),
            landmark_city: s.landmark_city.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(input: R) -> Result<Vec<DelayDistanceSample>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.deserialize::<SampleRow>().enumerate() {
        let parsed = row.map_err(|e| e.to_string()).and_then(|r| {
            if !r.min_rtt_ms.is_finite() || r.min_rtt_ms <= 0.0 {
                return Err(format!("min_rtt_ms must be positive, got {}", r.min_rtt_ms));
            }
            let distance = Kilometers::new(r.distance_km).map_err(|e| e.to_string())?;
            Ok(DelayDistanceSample {
                probe_id: r.probe_id,
                landmark_id: r.landmark_id,
                delay_ms: r.min_rtt_ms,
                distance,
                probe_isp: r.probe_isp,
                landmark_isp: r.landmark_isp,
                probe_city: r.probe_city,
                landmark_city: r.landmark_city,
            })
        });
        match parsed {
            Ok(s) => out.push(s),
            Err(e) => problems.push(format!("row {}: {e}", i + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    Ok(out)
}

pub fn load_samples(path: &Path) -> Result<Vec<DelayDistanceSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn host(id: &str, role: Role, lat: f64, lon: f64) -> HostRecord {
        HostRecord {
            id: id.into(),
            role,
            city: "beijing".into(),
            isp: "telecom".into(),
            coordinate: Coordinate::new(lat, lon).unwrap(),
            is_regional_center: true,
        }
    }

    fn ts(min: u32) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(&format!("2016-01-04T00:{min:02}:00Z")).unwrap()
    }

    fn obs(p: &str, l: &str, min: u32, rtt: f64) -> RttObservation {
        RttObservation::new(p, l, ts(min), rtt).unwrap()
    }

    #[test]
    fn empty_registry() {
        let r = validate_registry(Vec::new()).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn duplicate_ids_are_named() {
        let err = validate_registry(vec![
            host("a", Role::Probe, 0.0, 0.0),
            host("a", Role::Landmark, 1.0, 1.0),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate id `a`"), "{err}");
    }

    #[test]
    fn bad_rows_listed() {
        let csv = "id,role,city,isp,lat,lon,is_regional_center\n\
                   a,probe,x,t,91,0,false\n\
                   b,landmark,x,t,10,10,true\n\
                   b,landmark,x,t,10,10,true\n";
        let err = read_hosts(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1 (`a`)"), "{msg}");
    }

    #[test]
    fn minimum_per_pair() {
        let reg = validate_registry(vec![
            host("p", Role::Probe, 39.9, 116.4),
            host("l", Role::Landmark, 31.2, 121.5),
            host("m", Role::Landmark, 31.2, 121.5),
        ])
        .unwrap();
        let o = [
            obs("p", "l", 0, 12.1),
            obs("p", "l", 1, 11.8),
            obs("p", "l", 2, 30.5),
        ];
        let min = ingest_rtt(&o, &reg).unwrap();
        assert_eq!(min.get("p", "l"), Some(11.8));
        assert_eq!(min.get("p", "m"), None);
        assert_eq!(min.len(), 1);

        let single = ingest_rtt(&[obs("p", "m", 0, 7.25)], &reg).unwrap();
        assert_eq!(single.get("p", "m"), Some(7.25));

        let windowed = ingest_rtt_within(&o, &reg, ts(1), ts(3)).unwrap();
        assert_eq!(windowed.get("p", "l"), Some(11.8));
        let late = ingest_rtt_within(&o, &reg, ts(2), ts(3)).unwrap();
        assert_eq!(late.get("p", "l"), Some(30.5));
    }

    #[test]
    fn unknown_host_rejected() {
        let reg = validate_registry(vec![host("p", Role::Probe, 0.0, 0.0)]).unwrap();
        assert!(matches!(
            ingest_rtt(&[obs("p", "ghost", 0, 1.0)], &reg),
            Err(Error::NotFound { .. })
        ));
    }

    #[test]
    fn rtt_must_be_positive() {
        assert!(RttObservation::new("p", "l", ts(0), 0.0).is_err());
        assert!(RttObservation::new("p", "l", ts(0), f64::NAN).is_err());
    }

    #[test]
    fn colocated_pair_has_zero_distance() {
        let reg = validate_registry(vec![
            host("p", Role::Probe, 30.0, 100.0),
            host("l", Role::Landmark, 30.0, 100.0),
        ])
        .unwrap();
        let min = ingest_rtt(&[obs("p", "l", 0, 0.4)], &reg).unwrap();
        let s = join_distances(&min, &reg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].distance, Kilometers::ZERO);
        assert_eq!(s[0].delay_ms, 0.4);
    }

    #[test]
    fn csv_formats_round_trip() {
        let reg = validate_registry(vec![
            host("p", Role::Probe, 39.9042, 116.4074),
            host("l", Role::Landmark, 31.2304, 121.4737),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_hosts(reg.hosts(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,role,city,isp,lat,lon,is_regional_center\n"));
        let back = read_hosts(buf.as_slice()).unwrap();
        assert_eq!(back.hosts(), reg.hosts());

        let o = vec![obs("p", "l", 5, 13.5)];
        let mut buf = Vec::new();
        write_rtt(&o, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "probe_id,landmark_id,timestamp_iso8601,rtt_ms\np,l,2016-01-04T00:05:00Z,13.5\n"
        );
        assert_eq!(read_rtt(buf.as_slice()).unwrap(), o);

        let samples = join_distances(&ingest_rtt(&o, &reg).unwrap(), &reg).unwrap();
        let mut buf = Vec::new();
        write_samples(&samples, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with(
            "probe_id,landmark_id,min_rtt_ms,distance_km,probe_isp,landmark_isp,probe_city,landmark_city\n"
        ));
        assert_eq!(read_samples(buf.as_slice()).unwrap(), samples);
    }
}
