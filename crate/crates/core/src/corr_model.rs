//! Delay-distance correlation.
//!
//! Two routes to the same quantity live here: the empirical Pearson
//! coefficient over measured `(distance, delay)` samples, and the analytic
//! RTD model, which predicts the coefficient from the moments of the path
//! factors `R` (ratio of whole delay to propagation delay), `T` (path
//! tortuosity) and `D` (direct distance), assuming the three are independent
//! and `delay = R·T·D / v`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geodesy::Kilometers;

/// Default threshold above which a correlation counts as strong.
pub const DEFAULT_STRONG_THRESHOLD: f64 = 0.7;

/// Fewer samples than this give an undefined correlation.
pub const MIN_CORR_SAMPLES: usize = 3;

/// Variances at or below this fraction of the squared mean are treated as zero.
const ZERO_VARIANCE_REL: f64 = 1e-12;

/// One (probe, landmark) pair: minimum RTT and direct distance, with tags.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistanceSample {
    pub probe_id: String,
    pub landmark_id: String,
    /// Minimum RTT in milliseconds.
    pub delay_ms: f64,
    pub distance: Kilometers,
    pub probe_isp: String,
    pub landmark_isp: String,
    pub probe_city: String,
    pub landmark_city: String,
}

impl DelayDistanceSample {
    pub fn is_intra_isp(&self) -> bool {
        self.probe_isp == self.landmark_isp
    }

    /// `(distance km, delay ms)` point.
    pub fn point(&self) -> (f64, f64) {
        (self.distance.value(), self.delay_ms)
    }
}

/// Propagation speed in km/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Speed(f64);

impl Speed {
    /// Roughly two thirds of the speed of light, typical for fiber.
    pub const FIBER: Speed = Speed(200_000.0);

    pub fn new(km_per_s: f64) -> Result<Self> {
        if !km_per_s.is_finite() || km_per_s <= 0.0 {
            return Err(Error::InvalidValue {
                what: "propagation speed (km/s)",
                value: km_per_s,
            });
        }
        Ok(Self(km_per_s))
    }

    pub fn km_per_s(self) -> f64 {
        self.0
    }
}

impl Default for Speed {
    fn default() -> Self {
        Speed::FIBER
    }
}

/// The `(R, T, D)` triple describing one network path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFactors {
    r: f64,
    t: f64,
    d: Kilometers,
}

impl PathFactors {
    /// `r > 1`, `t >= 1`, `d > 0`.
    pub fn new(r: f64, t: f64, d: Kilometers) -> Result<Self> {
        if !r.is_finite() || r <= 1.0 {
            return Err(Error::InvalidValue {
                what: "propagation delay ratio R",
                value: r,
            });
        }
        if !t.is_finite() || t < 1.0 {
            return Err(Error::InvalidValue {
                what: "tortuosity T",
                value: t,
            });
        }
        if d.value() <= 0.0 {
            return Err(Error::InvalidValue {
                what: "direct distance D",
                value: d.value(),
            });
        }
        Ok(Self { r, t, d })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn d(&self) -> Kilometers {
        self.d
    }

    pub fn rt(&self) -> f64 {
        self.r * self.t
    }

    /// Length of the routed path, `T·D`.
    pub fn routed_length(&self) -> Kilometers {
        Kilometers(self.t * self.d.value())
    }

    /// Propagation time along the routed path, in seconds.
    pub fn propagation_time_s(&self, v: Speed) -> f64 {
        self.t * self.d.value() / v.0
    }

    /// Propagation time along the direct path, in seconds.
    pub fn ideal_time_s(&self, v: Speed) -> f64 {
        self.d.value() / v.0
    }
}

/// Whole delay `R·T·D / v` in milliseconds.
pub fn synth_delay(f: &PathFactors, v: Speed) -> f64 {
    f.r * f.t * f.d.value() / v.0 * 1000.0
}

/// A correlation coefficient, or the marker for inputs where it is undefined
/// (too few samples, or a zero-variance margin).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CorrValue {
    Value(f64),
    #[default]
    Undefined,
}

impl CorrValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CorrValue::Value(v) => Some(v),
            CorrValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, CorrValue::Value(_))
    }

    /// Strictly greater than `threshold`; undefined is never above.
    pub fn exceeds(self, threshold: f64) -> bool {
        matches!(self, CorrValue::Value(v) if v > threshold)
    }
}

impl fmt::Display for CorrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrValue::Value(v) => write!(f, "{v:.4}"),
            CorrValue::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrStrength {
    Strong,
    Weak,
}

impl fmt::Display for CorrStrength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrStrength::Strong => "strong",
            CorrStrength::Weak => "weak",
        })
    }
}

/// Strong iff the value is strictly above `threshold`. Negative and
/// undefined values are weak.
pub fn classify_corr(c: CorrValue, threshold: f64) -> CorrStrength {
    if c.exceeds(threshold) {
        CorrStrength::Strong
    } else {
        CorrStrength::Weak
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

fn is_zero_variance(var: f64, mean: f64) -> bool {
    var <= ZERO_VARIANCE_REL * mean * mean || var == 0.0
}

/// Pearson coefficient of `(x, y)` points.
pub fn pearson_points(points: &[(f64, f64)]) -> Result<CorrValue> {
    if points.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    if points.len() < MIN_CORR_SAMPLES {
        return Ok(CorrValue::Undefined);
    }
    let n = points.len() as f64;
    let mx = mean(points.iter().map(|p| p.0));
    let my = mean(points.iter().map(|p| p.1));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if is_zero_variance(sxx / n, mx) || is_zero_variance(syy / n, my) {
        return Ok(CorrValue::Undefined);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(CorrValue::Value(r.clamp(-1.0, 1.0)))
}

/// Pearson delay-distance correlation of a sample list.
pub fn pearson_corr(samples: &[DelayDistanceSample]) -> Result<CorrValue> {
    let points: Vec<_> = samples.iter().map(DelayDistanceSample::point).collect();
    pearson_points(&points)
}

fn pearson_of<'a>(samples: impl IntoIterator<Item = &'a DelayDistanceSample>) -> CorrCell {
    let points: Vec<_> = samples
        .into_iter()
        .map(DelayDistanceSample::point)
        .collect();
    let corr = if points.is_empty() {
        CorrValue::Undefined
    } else {
        pearson_points(&points).unwrap_or_default()
    };
    CorrCell {
        corr,
        samples: points.len(),
    }
}

/// Plug-in (population) moments of `R·T` and `D` over a factor set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorMoments {
    pub n: usize,
    pub mean_rt: f64,
    pub mean_rt_sq: f64,
    pub var_rt: f64,
    pub mean_d: f64,
    pub mean_d_sq: f64,
    pub var_d: f64,
}

impl FactorMoments {
    pub fn from_factors(factors: &[PathFactors]) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::TooFew {
                what: "path factor set",
                needed: 2,
                got: factors.len(),
            });
        }
        let n = factors.len();
        let mean_rt = mean(factors.iter().map(PathFactors::rt));
        let mean_d = mean(factors.iter().map(|f| f.d.value()));
        let mean_rt_sq = mean(factors.iter().map(|f| f.rt().powi(2)));
        let mean_d_sq = mean(factors.iter().map(|f| f.d.value().powi(2)));
        let var_rt = mean(factors.iter().map(|f| (f.rt() - mean_rt).powi(2)));
        let var_d = mean(factors.iter().map(|f| (f.d.value() - mean_d).powi(2)));
        Ok(Self {
            n,
            mean_rt,
            mean_rt_sq,
            var_rt,
            mean_d,
            mean_d_sq,
            var_d,
        })
    }
}

/// Algebraic form used to evaluate the RTD model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelForm {
    /// `E(RT)·V(D) / (sqrt(V(RT)·E(D²) + E²(RT)·V(D)) · sqrt(V(D)))`
    Variance,
    /// `sqrt((E²(RT)·E(D²) − E²(RT)·E²(D)) / (E[(RT)²]·E(D²) − E²(RT)·E²(D)))`
    RawMoment,
}

impl FactorMoments {
    /// Model correlation; undefined when both `R·T` and `D` are constant,
    /// zero when only `D` is.
    pub fn model_corr(&self, form: ModelForm) -> CorrValue {
        let rt_const = is_zero_variance(self.var_rt, self.mean_rt);
        let d_const = is_zero_variance(self.var_d, self.mean_d);
        match (rt_const, d_const) {
            (true, true) => return CorrValue::Undefined,
            (_, true) => return CorrValue::Value(0.0),
            _ => {}
        }
        let e2_rt = self.mean_rt * self.mean_rt;
        let value = match form {
            ModelForm::Variance => {
                let denom =
                    (self.var_rt * self.mean_d_sq + e2_rt * self.var_d).sqrt() * self.var_d.sqrt();
                self.mean_rt * self.var_d / denom
            }
            ModelForm::RawMoment => {
                let e2_d = self.mean_d * self.mean_d;
                let num = e2_rt * self.mean_d_sq - e2_rt * e2_d;
                let den = self.mean_rt_sq * self.mean_d_sq - e2_rt * e2_d;
                (num / den).max(0.0).sqrt()
            }
        };
        CorrValue::Value(value.clamp(0.0, 1.0))
    }
}

/// Correlation predicted by the RTD model from the sample moments of a
/// factor set.
pub fn rtd_model_corr(factors: &[PathFactors]) -> Result<CorrValue> {
    rtd_model_corr_with(factors, ModelForm::Variance)
}

pub fn rtd_model_corr_with(factors: &[PathFactors], form: ModelForm) -> Result<CorrValue> {
    Ok(FactorMoments::from_factors(factors)?.model_corr(form))
}

/// Correlation value with the number of samples behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorrCell {
    pub corr: CorrValue,
    pub samples: usize,
}

/// Pearson correlation per (probe ISP, landmark ISP) group. Diagonal cells
/// are intra-ISP, off-diagonal cells inter-ISP.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    isps: Vec<String>,
    cells: Vec<Vec<CorrCell>>,
}

impl CorrMatrix {
    /// ISP labels in row/column order (sorted).
    pub fn isps(&self) -> &[String] {
        &self.isps
    }

    pub fn get(&self, row: usize, col: usize) -> CorrCell {
        self.cells[row][col]
    }

    pub fn cell(&self, probe_isp: &str, landmark_isp: &str) -> Option<CorrCell> {
        let i = self.isps.iter().position(|s| s == probe_isp)?;
        let j = self.isps.iter().position(|s| s == landmark_isp)?;
        Some(self.cells[i][j])
    }

    pub fn len(&self) -> usize {
        self.isps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isps.is_empty()
    }

    /// Table-shaped CSV: `probe_isp,<isp>...`, one row per probe ISP,
    /// undefined cells left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["probe_isp".to_string()];
        header.extend(self.isps.iter().cloned());
        w.write_record(&header)?;
        for (isp, row) in self.isps.iter().zip(&self.cells) {
            let mut rec = vec![isp.clone()];
            rec.extend(row.iter().map(|c| fmt_corr(c.corr)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long CSV: `probe_isp,landmark_isp,scope,corr,samples`.
    pub fn write_long_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["probe_isp", "landmark_isp", "scope", "corr", "samples"])?;
        for (i, p) in self.isps.iter().enumerate() {
            for (j, l) in self.isps.iter().enumerate() {
                let c = self.cells[i][j];
                let scope = if i == j { "intra" } else { "inter" };
                w.write_record([
                    p.as_str(),
                    l.as_str(),
                    scope,
                    &fmt_corr(c.corr),
                    &c.samples.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// CSV rendering of a correlation: empty when undefined.
pub fn fmt_corr(c: CorrValue) -> String {
    c.value().map(|v| v.to_string()).unwrap_or_default()
}

/// Group samples by (probe ISP, landmark ISP) and correlate each group.
pub fn corr_matrix(samples: &[DelayDistanceSample]) -> CorrMatrix {
    let isps: Vec<String> = samples
        .iter()
        .flat_map(|s| [s.probe_isp.clone(), s.landmark_isp.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |isp: &str| isps.binary_search_by(|s| s.as_str().cmp(isp)).unwrap();
    let mut groups = vec![vec![Vec::new(); isps.len()]; isps.len()];
    for s in samples {
        groups[index(&s.probe_isp)][index(&s.landmark_isp)].push(s);
    }
    let cells = groups
        .into_iter()
        .map(|row| row.into_iter().map(pearson_of).collect())
        .collect();
    CorrMatrix { isps, cells }
}

/// One probe's intra-ISP correlation and its inter-ISP correlation toward
/// every other landmark ISP present in the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCorrReport {
    pub probe_id: String,
    pub probe_isp: String,
    pub probe_city: String,
    pub intra: CorrCell,
    pub inter: BTreeMap<String, CorrCell>,
    /// Over all of the probe's samples regardless of ISP.
    pub overall: CorrCell,
}

impl ProbeCorrReport {
    /// Correlation the probe has toward landmarks of `isp`.
    pub fn toward(&self, isp: &str) -> CorrCell {
        if isp == self.probe_isp {
            self.intra
        } else {
            self.inter.get(isp).copied().unwrap_or_default()
        }
    }
}

fn landmark_isps(samples: &[DelayDistanceSample]) -> BTreeSet<&str> {
    samples.iter().map(|s| s.landmark_isp.as_str()).collect()
}

fn build_report(
    probe_samples: &[&DelayDistanceSample],
    all_isps: &BTreeSet<&str>,
) -> ProbeCorrReport {
    let first = probe_samples[0];
    let intra = pearson_of(probe_samples.iter().copied().filter(|s| s.is_intra_isp()));
    let inter = all_isps
        .iter()
        .filter(|&&isp| isp != first.probe_isp)
        .map(|&isp| {
            let cell = pearson_of(
                probe_samples
                    .iter()
                    .copied()
                    .filter(|s| s.landmark_isp == isp),
            );
            (isp.to_string(), cell)
        })
        .collect();
    ProbeCorrReport {
        probe_id: first.probe_id.clone(),
        probe_isp: first.probe_isp.clone(),
        probe_city: first.probe_city.clone(),
        intra,
        inter,
        overall: pearson_of(probe_samples.iter().copied()),
    }
}

/// Report for a single probe.
pub fn probe_corr_report(
    samples: &[DelayDistanceSample],
    probe_id: &str,
) -> Result<ProbeCorrReport> {
    let mine: Vec<_> = samples.iter().filter(|s| s.probe_id == probe_id).collect();
    if mine.is_empty() {
        return Err(Error::NotFound {
            kind: "probe",
            id: probe_id.to_string(),
        });
    }
    Ok(build_report(&mine, &landmark_isps(samples)))
}

/// Reports for every probe, ordered by probe id.
pub fn probe_corr_reports(samples: &[DelayDistanceSample]) -> Vec<ProbeCorrReport> {
    let isps = landmark_isps(samples);
    let mut by_probe: BTreeMap<&str, Vec<&DelayDistanceSample>> = BTreeMap::new();
    for s in samples {
        by_probe.entry(&s.probe_id).or_default().push(s);
    }
    by_probe
        .values()
        .map(|mine| build_report(mine, &isps))
        .collect()
}

/// Long CSV of per-probe reports:
/// `probe_id,probe_isp,probe_city,landmark_isp,scope,corr,samples`.
pub fn write_probe_reports_csv<W: Write>(reports: &[ProbeCorrReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "probe_id",
        "probe_isp",
        "probe_city",
        "landmark_isp",
        "scope",
        "corr",
        "samples",
    ])?;
    for r in reports {
        let rows = std::iter::once(("intra", r.probe_isp.as_str(), r.intra))
            .chain(r.inter.iter().map(|(isp, c)| ("inter", isp.as_str(), *c)))
            .chain(std::iter::once(("overall", "*", r.overall)));
        for (scope, isp, cell) in rows {
            w.write_record([
                r.probe_id.as_str(),
                &r.probe_isp,
                &r.probe_city,
                isp,
                scope,
                &fmt_corr(cell.corr),
                &cell.samples.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rich-connected sub-networks found in a dataset.
///
/// A sub-network is one (probe, landmark ISP) cell of the per-probe
/// reports; it is rich when its correlation is strictly above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RichSubnets {
    pub threshold: f64,
    pub rich_probes_intra: Vec<String>,
    /// `(probe id, foreign landmark ISP)`.
    pub rich_probes_inter: Vec<(String, String)>,
    pub probe_count: usize,
    pub inter_cell_count: usize,
    /// Rich intra cells / probes.
    pub intra_fraction: f64,
    /// Rich inter cells / inter cells.
    pub inter_fraction: f64,
    /// Rich cells / all cells.
    pub overall_fraction: f64,
}

pub fn discover_rich_subnets(samples: &[DelayDistanceSample], threshold: f64) -> RichSubnets {
    discover_from_reports(&probe_corr_reports(samples), threshold)
}

pub fn discover_from_reports(reports: &[ProbeCorrReport], threshold: f64) -> RichSubnets {
    let rich_probes_intra: Vec<String> = reports
        .iter()
        .filter(|r| r.intra.corr.exceeds(threshold))
        .map(|r| r.probe_id.clone())
        .collect();
    let rich_probes_inter: Vec<(String, String)> = reports
        .iter()
        .flat_map(|r| {
            r.inter
                .iter()
                .filter(|(_, c)| c.corr.exceeds(threshold))
                .map(|(isp, _)| (r.probe_id.clone(), isp.clone()))
        })
        .collect();
    let probe_count = reports.len();
    let inter_cell_count: usize = reports.iter().map(|r| r.inter.len()).sum();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    RichSubnets {
        threshold,
        intra_fraction: ratio(rich_probes_intra.len(), probe_count),
        inter_fraction: ratio(rich_probes_inter.len(), inter_cell_count),
        overall_fraction: ratio(
            rich_probes_intra.len() + rich_probes_inter.len(),
            probe_count + inter_cell_count,
        ),
        rich_probes_intra,
        rich_probes_inter,
        probe_count,
        inter_cell_count,
    }
}

impl RichSubnets {
    /// `probe_id,scope,landmark_isp`, intra cells first.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["probe_id", "scope", "landmark_isp"])?;
        for p in &self.rich_probes_intra {
            w.write_record([p.as_str(), "intra", ""])?;
        }
        for (p, isp) in &self.rich_probes_inter {
            w.write_record([p.as_str(), "inter", isp.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(serde::Deserialize)]
struct FactorRow {
    r: f64,
    t: f64,
    d_km: f64,
}

/// Read factor triples from a CSV with header `r,t,d_km`.
pub fn read_factors<R: std::io::Read>(input: R) -> Result<Vec<PathFactors>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in rdr.deserialize::<FactorRow>().enumerate() {
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            Kilometers::new(row.d_km)
                .and_then(|d| PathFactors::new(row.r, row.t, d))
                .map_err(|e| e.to_string())
        });
        match parsed {
            Ok(f) => out.push(f),
            Err(e) => problems.push(format!("row {}: {e}", i + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Registry(problems));
    }
    Ok(out)
}

pub fn load_factors(path: &std::path::Path) -> Result<Vec<PathFactors>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_factors(f)
}
