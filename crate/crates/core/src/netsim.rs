//! Deterministic generator of hierarchical ISP topologies and RTT campaigns.
//!
//! Every city belongs to a region with exactly one regional center. Traffic
//! inside one ISP climbs from the source city to its regional center, hops
//! to the destination's regional center and descends; traffic between ISPs
//! additionally crosses the IXP city that minimizes the center-to-center
//! detour. Path delay is `R·T·D / v` where `T` is the routed length over the
//! direct distance and `R - 1` is log-normal with separate intra- and
//! inter-ISP parameters.
//!
//! Randomness is drawn from ChaCha streams keyed by a hash of the seed and
//! the ids involved, so a pair's draws never depend on which other hosts
//! exist or on evaluation order.
//!
//! # Config file
//!
//! TOML with these tables (see `configs/cn-like.toml`):
//!
//! ```toml
//! [path_model]            # optional, defaults shown in PathModelConfig
//! v_km_s = 200000.0
//! intra_r = { mu = -0.9, sigma = 0.35 }   # R - 1 ~ LogNormal(mu, sigma)
//! inter_r = { mu = 0.0, sigma = 0.8 }
//! jitter = 0.3            # observation = base * (1 + jitter * U[0,1))
//! samples_per_pair = 5
//! host_scatter_km = 15.0  # hosts are placed within this radius of their city
//!
//! [[regions]]
//! id = "beijing"
//!
//! [[cities]]
//! id = "beijing"
//! lat = 39.9042
//! lon = 116.4074
//! region = "beijing"
//! is_center = true
//!
//! [[isps]]
//! id = "telecom"
//! ixps = ["beijing"]
//!
//! [[hosts]]
//! role = "landmark"       # or "probe"
//! city = "beijing"
//! isp = "telecom"
//! count = 5               # ids become lm-beijing-telecom-1 .. -5
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::corr_model::{synth_delay, PathFactors, Speed};
use crate::dataset::{validate_registry, HostRecord, Registry, Role, RttObservation};
use crate::error::{Error, Result};
use crate::geodesy::{geodesic_distance, Coordinate, Kilometers};

/// Distances shorter than this are raised to it when forming path factors.
pub const MIN_PATH_DISTANCE_KM: f64 = 0.1;

const CN_LIKE: &str = include_str!("../configs/cn-like.toml");

/// First observation timestamp of a simulated campaign.
pub const CAMPAIGN_EPOCH: &str = "2016-01-04T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathModelConfig {
    pub v_km_s: f64,
    pub intra_r: LogNormalParams,
    pub inter_r: LogNormalParams,
    pub jitter: f64,
    pub samples_per_pair: usize,
    pub host_scatter_km: f64,
}

impl Default for PathModelConfig {
    fn default() -> Self {
        Self {
            v_km_s: Speed::FIBER.km_per_s(),
            intra_r: LogNormalParams {
                mu: -0.9,
                sigma: 0.35,
            },
            inter_r: LogNormalParams {
                mu: 0.0,
                sigma: 0.8,
            },
            jitter: 0.3,
            samples_per_pair: 5,
            host_scatter_km: 15.0,
        }
    }
}

impl PathModelConfig {
    pub fn validate(&self) -> Result<()> {
        Speed::new(self.v_km_s)?;
        for p in [self.intra_r, self.inter_r] {
            if !p.mu.is_finite() || !p.sigma.is_finite() || p.sigma < 0.0 {
                return Err(Error::Config(format!(
                    "log-normal parameters must be finite with sigma >= 0, got mu={} sigma={}",
                    p.mu, p.sigma
                )));
            }
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 {
            return Err(Error::Config(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        if self.samples_per_pair == 0 {
            return Err(Error::Config("samples_per_pair must be >= 1".into()));
        }
        if !self.host_scatter_km.is_finite() || self.host_scatter_km < 0.0 {
            return Err(Error::Config(format!(
                "host_scatter_km must be >= 0, got {}",
                self.host_scatter_km
            )));
        }
        Ok(())
    }

    pub fn speed(&self) -> Speed {
        Speed::new(self.v_km_s).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitySpec {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub region: String,
    #[serde(default)]
    pub is_center: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IspSpec {
    pub id: String,
    #[serde(default)]
    pub ixps: Vec<String>,
}

/// `count` hosts of one role in one city and ISP. A single host may be
/// given an explicit `id`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostGroupSpec {
    pub role: Role,
    pub city: String,
    pub isp: String,
    #[serde(default = "one")]
    pub count: usize,
    pub id: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub regions: Vec<RegionSpec>,
    pub cities: Vec<CitySpec>,
    pub isps: Vec<IspSpec>,
    #[serde(default)]
    pub hosts: Vec<HostGroupSpec>,
    #[serde(default)]
    pub path_model: PathModelConfig,
}

impl TopologyConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The bundled 30-region, 3-ISP configuration.
    pub fn cn_like() -> Self {
        Self::parse(CN_LIKE).expect("bundled cn-like config parses")
    }

    pub fn cn_like_text() -> &'static str {
        CN_LIKE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub id: String,
    pub coordinate: Coordinate,
    pub is_regional_center: bool,
    pub region_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Isp {
    pub id: String,
    /// Indices into [`Topology::cities`]; always regional centers.
    pub ixp_cities: Vec<usize>,
}

/// A validated topology with hosts placed in cities.
#[derive(Debug, Clone)]
pub struct Topology {
    cities: Vec<City>,
    isps: Vec<Isp>,
    /// region id -> center city index
    centers: BTreeMap<String, usize>,
    hosts: Registry,
    host_city: BTreeMap<String, usize>,
    /// (isp a, isp b) with a < b -> shared IXP cities
    shared_ixps: BTreeMap<(usize, usize), Vec<usize>>,
    path_model: PathModelConfig,
}

impl Topology {
    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn isps(&self) -> &[Isp] {
        &self.isps
    }

    pub fn path_model(&self) -> &PathModelConfig {
        &self.path_model
    }

    pub fn hosts(&self) -> &Registry {
        &self.hosts
    }

    pub fn city(&self, id: &str) -> Option<&City> {
        self.cities.iter().find(|c| c.id == id)
    }

    /// Center city of a region.
    pub fn center_of(&self, region_id: &str) -> Option<&City> {
        self.centers.get(region_id).map(|&i| &self.cities[i])
    }

    pub fn region_ids(&self) -> impl Iterator<Item = &str> {
        self.centers.keys().map(String::as_str)
    }

    fn host_city(&self, host_id: &str) -> Result<(&HostRecord, usize)> {
        let host = self.hosts.require(host_id)?;
        Ok((host, self.host_city[host_id]))
    }

    fn isp_index(&self, id: &str) -> usize {
        self.isps.iter().position(|i| i.id == id).unwrap()
    }
}

/// Validate a config and place its hosts.
pub fn build_topology(config: &TopologyConfig) -> Result<Topology> {
    config.path_model.validate()?;
    let mut problems = Vec::new();

    let mut region_ids = BTreeSet::new();
    for r in &config.regions {
        if !region_ids.insert(r.id.as_str()) {
            problems.push(format!("duplicate region `{}`", r.id));
        }
    }

    let mut cities = Vec::new();
    let mut city_index = BTreeMap::new();
    let mut centers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for c in &config.cities {
        if city_index.contains_key(c.id.as_str()) {
            problems.push(format!("duplicate city `{}`", c.id));
            continue;
        }
        if !region_ids.contains(c.region.as_str()) {
            problems.push(format!(
                "city `{}` names unknown region `{}`",
                c.id, c.region
            ));
        }
        let coordinate = match Coordinate::new(c.lat, c.lon) {
            Ok(co) => co,
            Err(e) => {
                problems.push(format!("city `{}`: {e}", c.id));
                continue;
            }
        };
        city_index.insert(c.id.as_str(), cities.len());
        if c.is_center {
            centers
                .entry(c.region.clone())
                .or_default()
                .push(cities.len());
        }
        cities.push(City {
            id: c.id.clone(),
            coordinate,
            is_regional_center: c.is_center,
            region_id: c.region.clone(),
        });
    }
    for r in &region_ids {
        match centers.get(*r).map(Vec::len) {
            Some(1) => {}
            None => problems.push(format!("region `{r}` has no regional center")),
            Some(n) => problems.push(format!("region `{r}` has {n} regional centers")),
        }
    }

    let mut isps = Vec::new();
    let mut isp_ids = BTreeSet::new();
    for isp in &config.isps {
        if !isp_ids.insert(isp.id.as_str()) {
            problems.push(format!("duplicate isp `{}`", isp.id));
            continue;
        }
        let mut ixp_cities = Vec::new();
        for ixp in &isp.ixps {
            match city_index.get(ixp.as_str()) {
                Some(&i) if cities[i].is_regional_center => ixp_cities.push(i),
                Some(_) => problems.push(format!(
                    "isp `{}`: IXP city `{ixp}` is not a regional center",
                    isp.id
                )),
                None => problems.push(format!("isp `{}`: unknown IXP city `{ixp}`", isp.id)),
            }
        }
        ixp_cities.sort_unstable();
        ixp_cities.dedup();
        isps.push(Isp {
            id: isp.id.clone(),
            ixp_cities,
        });
    }
    let mut shared_ixps = BTreeMap::new();
    for a in 0..isps.len() {
        for b in a + 1..isps.len() {
            let shared: Vec<usize> = isps[a]
                .ixp_cities
                .iter()
                .filter(|c| isps[b].ixp_cities.contains(c))
                .copied()
                .collect();
            if shared.is_empty() {
                problems.push(format!(
                    "isps `{}` and `{}` share no IXP city",
                    isps[a].id, isps[b].id
                ));
            }
            shared_ixps.insert((a, b), shared);
        }
    }

    let mut records = Vec::new();
    let mut host_city = BTreeMap::new();
    let scatter = config.path_model.host_scatter_km;
    for (g, group) in config.hosts.iter().enumerate() {
        let Some(&ci) = city_index.get(group.city.as_str()) else {
            problems.push(format!(
                "host group {}: unknown city `{}`",
                g + 1,
                group.city
            ));
            continue;
        };
        if !isp_ids.contains(group.isp.as_str()) {
            problems.push(format!("host group {}: unknown isp `{}`", g + 1, group.isp));
            continue;
        }
        if group.id.is_some() && group.count != 1 {
            problems.push(format!(
                "host group {}: an explicit id requires count = 1",
                g + 1
            ));
            continue;
        }
        let prefix = match group.role {
            Role::Probe => "pr",
            Role::Landmark => "lm",
        };
        for k in 1..=group.count {
            let id = group
                .id
                .clone()
                .unwrap_or_else(|| format!("{prefix}-{}-{}-{k}", group.city, group.isp));
            let city = &cities[ci];
            host_city.insert(id.clone(), ci);
            records.push(HostRecord {
                coordinate: scatter_around(city.coordinate, scatter, &id),
                id,
                role: group.role,
                city: city.id.clone(),
                isp: group.isp.clone(),
                is_regional_center: city.is_regional_center,
            });
        }
    }

    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    let hosts = validate_registry(records)?;
    Ok(Topology {
        cities,
        isps,
        centers: centers.into_iter().map(|(k, v)| (k, v[0])).collect(),
        hosts,
        host_city,
        shared_ixps,
        path_model: config.path_model.clone(),
    })
}

/// ChaCha stream keyed by `seed` and a list of labels.
pub fn keyed_rng(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Deterministic placement within `radius_km` of `center`, keyed by host id.
fn scatter_around(center: Coordinate, radius_km: f64, id: &str) -> Coordinate {
    if radius_km == 0.0 {
        return center;
    }
    let mut rng = keyed_rng(0, &["placement", id]);
    let bearing = rng.random::<f64>() * std::f64::consts::TAU;
    let r = radius_km * rng.random::<f64>().sqrt();
    let km_per_deg = 111.32;
    let lat = (center.lat() + r * bearing.cos() / km_per_deg).clamp(-90.0, 90.0);
    let lon_scale = km_per_deg * center.lat().to_radians().cos().max(1e-6);
    let lon = (center.lon() + r * bearing.sin() / lon_scale).clamp(-180.0, 180.0);
    Coordinate::new(lat, lon).unwrap_or(center)
}

/// A routed path between two hosts.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Coordinate>,
    pub direct: Kilometers,
    pub routed: Kilometers,
    /// Routed length over direct distance; 1 for co-located endpoints.
    pub tortuosity: f64,
    pub inter_isp: bool,
}

/// Route between two hosts through regional centers and, across ISPs, an IXP.
///
/// Same-city, same-ISP traffic goes direct. Otherwise the route is
/// `src → center(src) → [ixp] → center(dst) → dst`, where a center hop is
/// dropped when the host is already in that center city and repeated
/// cities collapse.
pub fn route_path(topology: &Topology, src: &str, dst: &str) -> Result<Route> {
    let (s, sc) = topology.host_city(src)?;
    let (d, dc) = topology.host_city(dst)?;
    let inter_isp = s.isp != d.isp;

    let mut cities_on_path: Vec<usize> = Vec::new();
    if inter_isp || sc != dc {
        let s_center = topology.centers[&topology.cities[sc].region_id];
        let d_center = topology.centers[&topology.cities[dc].region_id];
        cities_on_path.push(s_center);
        if inter_isp {
            let (a, b) = {
                let (a, b) = (topology.isp_index(&s.isp), topology.isp_index(&d.isp));
                (a.min(b), a.max(b))
            };
            let ixp = nearest_ixp(topology, &topology.shared_ixps[&(a, b)], s_center, d_center);
            cities_on_path.push(ixp);
        }
        cities_on_path.push(d_center);
        cities_on_path.dedup();
        // a host already in a center city does not hop to it
        if cities_on_path.first() == Some(&sc) {
            cities_on_path.remove(0);
        }
        if cities_on_path.last() == Some(&dc) {
            cities_on_path.pop();
        }
    }

    let mut waypoints = vec![s.coordinate];
    waypoints.extend(
        cities_on_path
            .iter()
            .map(|&c| topology.cities[c].coordinate),
    );
    waypoints.push(d.coordinate);
    waypoints.dedup();

    let direct = geodesic_distance(s.coordinate, d.coordinate);
    let routed: f64 = waypoints
        .windows(2)
        .map(|w| geodesic_distance(w[0], w[1]).value())
        .sum();
    let tortuosity = if direct.value() == 0.0 {
        1.0
    } else {
        (routed / direct.value()).max(1.0)
    };
    Ok(Route {
        waypoints,
        direct,
        routed: Kilometers(routed),
        tortuosity,
        inter_isp,
    })
}

fn nearest_ixp(topology: &Topology, candidates: &[usize], from: usize, to: usize) -> usize {
    let c = |i: usize| topology.cities[i].coordinate;
    candidates
        .iter()
        .copied()
        .min_by(|&x, &y| {
            let dx =
                geodesic_distance(c(from), c(x)).value() + geodesic_distance(c(x), c(to)).value();
            let dy =
                geodesic_distance(c(from), c(y)).value() + geodesic_distance(c(y), c(to)).value();
            dx.total_cmp(&dy).then(x.cmp(&y))
        })
        .expect("validated topologies share an IXP between every ISP pair")
}

/// Draw `(R, T, D)` for one host pair.
pub fn sample_path_factors<R: Rng + ?Sized>(
    topology: &Topology,
    config: &PathModelConfig,
    src: &str,
    dst: &str,
    rng: &mut R,
) -> Result<PathFactors> {
    let route = route_path(topology, src, dst)?;
    let params = if route.inter_isp {
        config.inter_r
    } else {
        config.intra_r
    };
    let overhead = LogNormal::new(params.mu, params.sigma)
        .map_err(|e| Error::Config(format!("log-normal: {e}")))?
        .sample(rng);
    let r = 1.0 + overhead;
    let d = Kilometers(route.direct.value().max(MIN_PATH_DISTANCE_KM));
    PathFactors::new(r, route.tortuosity, d)
}

fn campaign_epoch() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339(CAMPAIGN_EPOCH).expect("valid epoch")
}

/// Observations for one `(src, dst)` pair, on its own keyed stream.
pub fn simulate_pair(
    topology: &Topology,
    config: &PathModelConfig,
    seed: u64,
    src: &str,
    dst: &str,
) -> Result<Vec<RttObservation>> {
    let mut rng = keyed_rng(seed, &["pair", src, dst]);
    let factors = sample_path_factors(topology, config, src, dst, &mut rng)?;
    let base = synth_delay(&factors, config.speed());
    let epoch = campaign_epoch();
    (0..config.samples_per_pair)
        .map(|k| {
            let noise = config.jitter * rng.random::<f64>();
            RttObservation::new(
                src,
                dst,
                epoch + Duration::minutes(k as i64),
                base * (1.0 + noise),
            )
        })
        .collect()
}

/// Measure every probe against every landmark. Output is ordered by probe
/// id, landmark id, then observation index.
pub fn simulate_campaign(
    topology: &Topology,
    config: &PathModelConfig,
    seed: u64,
) -> Result<Vec<RttObservation>> {
    config.validate()?;
    let mut probes: Vec<&str> = topology.hosts.probes().map(|h| h.id.as_str()).collect();
    let mut landmarks: Vec<&str> = topology.hosts.landmarks().map(|h| h.id.as_str()).collect();
    probes.sort_unstable();
    landmarks.sort_unstable();
    let per_probe: Vec<Vec<RttObservation>> = probes
        .par_iter()
        .map(|p| {
            let mut out = Vec::with_capacity(landmarks.len() * config.samples_per_pair);
            for l in &landmarks {
                out.extend(simulate_pair(topology, config, seed, p, l)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_probe.into_iter().flatten().collect())
}

/// A distribution for one path factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorDistribution {
    PointMass(f64),
    /// Uniform on `[low, high)`.
    Uniform {
        low: f64,
        high: f64,
    },
    /// `offset + LogNormal(mu, sigma)`.
    LogNormal {
        offset: f64,
        mu: f64,
        sigma: f64,
    },
}

impl FactorDistribution {
    fn lower_bound(&self) -> f64 {
        match *self {
            FactorDistribution::PointMass(v) => v,
            FactorDistribution::Uniform { low, .. } => low,
            FactorDistribution::LogNormal { offset, .. } => offset,
        }
    }

    /// The lower bound above which every draw lies; `strict` means the
    /// bound itself is excluded.
    fn check(&self, what: &str, min: f64, strict: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{what} distribution: {msg}")));
        match *self {
            FactorDistribution::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && low <= high) =>
            {
                return bad(format!("need finite low <= high, got [{low}, {high})"));
            }
            FactorDistribution::LogNormal { mu, sigma, offset }
                if !(mu.is_finite() && sigma.is_finite() && offset.is_finite() && sigma >= 0.0) =>
            {
                return bad(format!("invalid log-normal ({offset}, {mu}, {sigma})"));
            }
            FactorDistribution::PointMass(v) if !v.is_finite() => return bad(format!("{v}")),
            _ => {}
        }
        let lb = self.lower_bound();
        // log-normal draws are strictly above their offset
        let strictly_above = matches!(self, FactorDistribution::LogNormal { .. });
        let ok = if strict && !strictly_above {
            lb > min
        } else {
            lb >= min
        };
        if ok {
            Ok(())
        } else {
            bad(format!(
                "support must lie {} {min}",
                if strict { "above" } else { "at or above" }
            ))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FactorDistribution::PointMass(v) => v,
            FactorDistribution::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            FactorDistribution::LogNormal { offset, mu, sigma } => {
                offset + LogNormal::new(mu, sigma).expect("checked").sample(rng)
            }
        }
    }
}

impl std::str::FromStr for FactorDistribution {
    type Err = Error;

    /// `const:V`, `uniform:LOW:HIGH` or `lognormal:OFFSET:MU:SIGMA`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{t}` in `{s}`")))
        };
        match parts.as_slice() {
            ["const", v] => Ok(Self::PointMass(num(v)?)),
            ["uniform", lo, hi] => Ok(Self::Uniform {
                low: num(lo)?,
                high: num(hi)?,
            }),
            ["lognormal", off, mu, sigma] => Ok(Self::LogNormal {
                offset: num(off)?,
                mu: num(mu)?,
                sigma: num(sigma)?,
            }),
            _ => Err(Error::Config(format!(
                "distribution `{s}`: expected const:V, uniform:LOW:HIGH or lognormal:OFFSET:MU:SIGMA"
            ))),
        }
    }
}

/// `n` factor triples with `R`, `T` and `D` drawn independently.
pub fn sample_independent<R: Rng + ?Sized>(
    r_dist: FactorDistribution,
    t_dist: FactorDistribution,
    d_dist: FactorDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PathFactors>> {
    if n < 2 {
        return Err(Error::TooFew {
            what: "factor sample",
            needed: 2,
            got: n,
        });
    }
    r_dist.check("R", 1.0, true)?;
    t_dist.check("T", 1.0, false)?;
    d_dist.check("D", 0.0, true)?;
    (0..n)
        .map(|_| {
            let r = r_dist.sample(rng);
            let t = t_dist.sample(rng);
            let d = d_dist.sample(rng);
            PathFactors::new(r, t, Kilometers::new(d)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[regions]]
        id = "r"
        [[cities]]
        id = "a"
        lat = 30.0
        lon = 110.0
        region = "r"
        is_center = true
        [[isps]]
        id = "x"
        [[hosts]]
        role = "probe"
        city = "a"
        isp = "x"
        [[hosts]]
        role = "landmark"
        city = "a"
        isp = "x"
    "#;

    #[test]
    fn minimal_topology() {
        let topo = build_topology(&TopologyConfig::parse(MINIMAL).unwrap()).unwrap();
        assert_eq!(topo.hosts().count(Role::Probe), 1);
        assert_eq!(topo.hosts().count(Role::Landmark), 1);
        assert_eq!(topo.center_of("r").unwrap().id, "a");
    }

    #[test]
    fn ixp_must_be_center() {
        let text = MINIMAL.replace(
            "[[isps]]",
            "[[cities]]\nid = \"b\"\nlat = 31.0\nlon = 111.0\nregion = \"r\"\n[[isps]]",
        ) + "\n";
        let text = text.replace("id = \"x\"\n", "id = \"x\"\nixps = [\"b\"]\n");
        let err = build_topology(&TopologyConfig::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("not a regional center"), "{err}");
    }

    #[test]
    fn region_needs_center() {
        let text = MINIMAL.replace("is_center = true", "is_center = false");
        let err = build_topology(&TopologyConfig::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("no regional center"), "{err}");
    }

    #[test]
    fn cn_like_builds() {
        let topo = build_topology(&TopologyConfig::cn_like()).unwrap();
        assert_eq!(topo.region_ids().count(), 30);
        assert_eq!(topo.isps().len(), 3);
        for isp in topo.isps() {
            assert_eq!(isp.ixp_cities.len(), 3);
        }
        assert!(topo.hosts().count(Role::Landmark) >= 450);
        assert!(topo.hosts().count(Role::Probe) >= 100);
    }

    #[test]
    fn sigma_zero_is_constant() {
        let topo = build_topology(&TopologyConfig::parse(MINIMAL).unwrap()).unwrap();
        let cfg = PathModelConfig {
            intra_r: LogNormalParams {
                mu: 0.5,
                sigma: 0.0,
            },
            ..PathModelConfig::default()
        };
        let mut rng = keyed_rng(1, &[]);
        for _ in 0..20 {
            let f = sample_path_factors(&topo, &cfg, "pr-a-x-1", "lm-a-x-1", &mut rng).unwrap();
            assert_eq!(f.r(), 1.0 + 0.5f64.exp());
        }
    }

    #[test]
    fn keyed_streams_are_stable() {
        let a: u64 = keyed_rng(42, &["pair", "p", "l"]).random();
        let b: u64 = keyed_rng(42, &["pair", "p", "l"]).random();
        let c: u64 = keyed_rng(42, &["pair", "pl", ""]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn distribution_parsing_and_checks() {
        let d: FactorDistribution = "uniform:1.1:3".parse().unwrap();
        assert_eq!(
            d,
            FactorDistribution::Uniform {
                low: 1.1,
                high: 3.0
            }
        );
        assert!("gauss:1".parse::<FactorDistribution>().is_err());
        let mut rng = keyed_rng(0, &[]);
        let one = FactorDistribution::PointMass(1.0);
        assert!(
            sample_independent(one, one, FactorDistribution::PointMass(5.0), 10, &mut rng).is_err()
        );
        let r = FactorDistribution::PointMass(2.0);
        assert!(
            sample_independent(r, one, FactorDistribution::PointMass(0.0), 10, &mut rng).is_err()
        );
        assert!(
            sample_independent(r, one, FactorDistribution::PointMass(5.0), 1, &mut rng).is_err()
        );
        let ok =
            sample_independent(r, one, FactorDistribution::PointMass(5.0), 4, &mut rng).unwrap();
        assert!(ok.iter().all(|f| *f == ok[0]));
    }
}
