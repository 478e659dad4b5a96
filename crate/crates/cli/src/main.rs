//! `delaycorr` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or validation errors, 2 for
//! runtime failures such as unwritable outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use delaycorr_core::corr_model::{
    self, discover_rich_subnets, load_factors, pearson_points, probe_corr_reports,
    rtd_model_corr_with, synth_delay, ModelForm,
};
use delaycorr_core::dataset::{self, write_hosts, write_rtt};
use delaycorr_core::experiment::{
    self, load_runs, truth_for, write_runs, Algorithm, DatasetSpec, ExperimentSpec,
    DEFAULT_CANDIDATE_AREAS, DEFAULT_SEED, DEFAULT_TARGETS,
};
use delaycorr_core::geoloc::{evaluate_results, ErrorReport, GeolocationResult, Mode};
use delaycorr_core::netsim::{self, sample_independent, FactorDistribution, TopologyConfig};
use delaycorr_core::{CorrValue, Speed, DEFAULT_GRID_KM, DEFAULT_STRONG_THRESHOLD};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] delaycorr_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "delaycorr",
    version,
    about = "Delay-distance correlation analysis and delay-based IP geolocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce raw RTTs to per-pair minima joined with distances.
    Ingest(IngestArgs),
    /// Correlation matrix by ISP pair, or per-probe reports.
    Corr(CorrArgs),
    /// List rich-connected (probe, ISP) sub-networks.
    Discover(DiscoverArgs),
    /// Evaluate the analytic R·T·D correlation model.
    Model(ModelArgs),
    /// Simulate a measurement campaign over a topology.
    Simulate(SimulateArgs),
    /// Run a GeoGet or CBG experiment.
    Geolocate(GeolocateArgs),
    /// Score geolocation results against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    hosts: PathBuf,
    #[arg(long)]
    rtt: PathBuf,
    /// Keep observations at or after this RFC 3339 time.
    #[arg(long, requires = "end")]
    start: Option<String>,
    /// Keep observations before this RFC 3339 time.
    #[arg(long, requires = "start")]
    end: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrBy {
    Isp,
    Probe,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Wide,
    Long,
}

#[derive(Args)]
struct CorrArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value = "isp")]
    by: CorrBy,
    /// Layout of the ISP matrix.
    #[arg(long, value_enum, default_value = "wide")]
    format: MatrixFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STRONG_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// CSV of factor triples with header `r,t,d_km`.
    #[arg(long, conflicts_with_all = ["r", "t", "d"])]
    factors: Option<PathBuf>,
    /// Distribution of R: const:V, uniform:LO:HI or lognormal:OFFSET:MU:SIGMA.
    #[arg(long, requires_all = ["t", "d"])]
    r: Option<String>,
    #[arg(long, requires_all = ["r", "d"])]
    t: Option<String>,
    /// Distribution of D in km.
    #[arg(long, requires_all = ["r", "t"])]
    d: Option<String>,
    /// Number of draws.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Propagation speed in km/s.
    #[arg(long, default_value_t = Speed::FIBER.km_per_s())]
    v: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Topology TOML file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled topology (`cn-like`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GeolocateArgs {
    /// Experiment TOML file; other experiment flags are then ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long, value_enum, default_value = "modified")]
    mode: ModeArg,
    #[arg(long)]
    hosts: Option<PathBuf>,
    #[arg(long)]
    rtt: Option<PathBuf>,
    /// Topology TOML file to simulate.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_STRONG_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_KM)]
    grid_km: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_AREAS)]
    candidate_areas: usize,
    #[arg(long, default_value_t = DEFAULT_TARGETS)]
    targets: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Cbg,
    Geoget,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Original,
    Modified,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run file written by `geolocate`.
    #[arg(long)]
    results: PathBuf,
    /// hosts.csv with the targets' true locations.
    #[arg(long)]
    truth: PathBuf,
    /// Write the error CDF here.
    #[arg(long)]
    cdf: Option<PathBuf>,
    /// Write per-target errors and the summary block here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Corr(a) => corr(a),
        Command::Discover(a) => discover(a),
        Command::Model(a) => model(a),
        Command::Simulate(a) => simulate(a),
        Command::Geolocate(a) => geolocate(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn header(seed: u64, threshold: f64, grid_km: f64, v_km_s: f64) {
    println!("# seed={seed} threshold={threshold} grid_km={grid_km} v_km_s={v_km_s}");
}

fn default_header() {
    header(
        DEFAULT_SEED,
        DEFAULT_STRONG_THRESHOLD,
        DEFAULT_GRID_KM,
        Speed::FIBER.km_per_s(),
    );
}

fn require_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

/// Write through a buffered file; any I/O failure maps to a runtime error.
fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    f(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

fn csv_io<E: std::error::Error + Send + Sync + 'static>(e: E) -> std::io::Error {
    std::io::Error::other(e)
}

fn ingest(a: IngestArgs) -> Result<()> {
    require_input(&a.hosts)?;
    require_input(&a.rtt)?;
    let registry = dataset::load_hosts(&a.hosts)?;
    let obs = dataset::load_rtt(&a.rtt)?;
    let mins = match (&a.start, &a.end) {
        (Some(s), Some(e)) => dataset::ingest_rtt_within(
            &obs,
            &registry,
            dataset::parse_timestamp(s)?,
            dataset::parse_timestamp(e)?,
        )?,
        _ => dataset::ingest_rtt(&obs, &registry)?,
    };
    let samples = dataset::join_distances(&mins, &registry)?;
    write_file(&a.out, |w| {
        dataset::write_samples(&samples, w).map_err(csv_io)
    })?;
    default_header();
    println!("observations: {}", obs.len());
    println!("pairs: {}", samples.len());
    Ok(())
}

fn corr(a: CorrArgs) -> Result<()> {
    require_input(&a.samples)?;
    let samples = dataset::load_samples(&a.samples)?;
    default_header();
    match a.by {
        CorrBy::Isp => {
            let m = corr_model::corr_matrix(&samples);
            write_file(&a.out, |w| {
                match a.format {
                    MatrixFormat::Wide => m.write_csv(w),
                    MatrixFormat::Long => m.write_long_csv(w),
                }
                .map_err(csv_io)
            })?;
            println!("isps: {}", m.isps().join(","));
        }
        CorrBy::Probe => {
            let reports = probe_corr_reports(&samples);
            write_file(&a.out, |w| {
                corr_model::write_probe_reports_csv(&reports, w).map_err(csv_io)
            })?;
            println!("probes: {}", reports.len());
        }
    }
    Ok(())
}

fn discover(a: DiscoverArgs) -> Result<()> {
    require_input(&a.samples)?;
    if !(-1.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!(
            "threshold must lie in [-1, 1], got {}",
            a.threshold
        )));
    }
    let samples = dataset::load_samples(&a.samples)?;
    let rich = discover_rich_subnets(&samples, a.threshold);
    if let Some(out) = &a.out {
        write_file(out, |w| rich.write_csv(w).map_err(csv_io))?;
    }
    header(
        DEFAULT_SEED,
        a.threshold,
        DEFAULT_GRID_KM,
        Speed::FIBER.km_per_s(),
    );
    println!("probes: {}", rich.probe_count);
    println!(
        "rich intra-ISP probes: {} ({:.4})",
        rich.rich_probes_intra.len(),
        rich.intra_fraction
    );
    println!(
        "rich inter-ISP cells: {} of {} ({:.4})",
        rich.rich_probes_inter.len(),
        rich.inter_cell_count,
        rich.inter_fraction
    );
    println!("rich overall: {:.4}", rich.overall_fraction);
    Ok(())
}

fn fmt_value(c: CorrValue) -> String {
    corr_model::fmt_corr(c)
}

fn model(a: ModelArgs) -> Result<()> {
    let speed = Speed::new(a.v)?;
    let factors = match (&a.factors, &a.r, &a.t, &a.d) {
        (Some(path), None, None, None) => {
            require_input(path)?;
            load_factors(path)?
        }
        (None, Some(r), Some(t), Some(d)) => {
            let r: FactorDistribution = r.parse()?;
            let t: FactorDistribution = t.parse()?;
            let d: FactorDistribution = d.parse()?;
            let mut rng = netsim::keyed_rng(a.seed, &["model"]);
            sample_independent(r, t, d, a.n, &mut rng)?
        }
        _ => {
            return Err(CliError::Usage(
                "give either --factors or all of --r, --t, --d".into(),
            ))
        }
    };
    let variance = rtd_model_corr_with(&factors, ModelForm::Variance)?;
    let raw = rtd_model_corr_with(&factors, ModelForm::RawMoment)?;
    let points: Vec<(f64, f64)> = factors
        .iter()
        .map(|f| (f.d().value(), synth_delay(f, speed)))
        .collect();
    let empirical = pearson_points(&points)?;
    header(a.seed, DEFAULT_STRONG_THRESHOLD, DEFAULT_GRID_KM, a.v);
    let rows = [
        ("factor_sets", factors.len().to_string()),
        ("model_corr", fmt_value(variance)),
        ("model_corr_raw_moment", fmt_value(raw)),
        ("empirical_corr", fmt_value(empirical)),
    ];
    for (k, v) in &rows {
        println!("{k}: {v}");
    }
    if let Some(out) = &a.out {
        write_file(out, |w| {
            writeln!(w, "metric,value")?;
            for (k, v) in &rows {
                writeln!(w, "{k},{v}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn topology_config(config: &Option<PathBuf>, preset: &Option<String>) -> Result<TopologyConfig> {
    match (config, preset) {
        (Some(path), None) => {
            require_input(path)?;
            Ok(TopologyConfig::load(path)?)
        }
        (None, Some(name)) => Ok(experiment::preset(name)?),
        _ => Err(CliError::Usage(
            "give exactly one of --config or --preset".into(),
        )),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let config = topology_config(&a.config, &a.preset)?;
    let topology = netsim::build_topology(&config)?;
    let obs = netsim::simulate_campaign(&topology, &config.path_model, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|source| CliError::Write {
        path: a.out_dir.clone(),
        source,
    })?;
    let mut hosts: Vec<_> = topology.hosts().hosts().iter().collect();
    hosts.sort_by(|x, y| x.id.cmp(&y.id));
    write_file(&a.out_dir.join("hosts.csv"), |w| {
        write_hosts(hosts, w).map_err(csv_io)
    })?;
    write_file(&a.out_dir.join("rtt.csv"), |w| {
        write_rtt(&obs, w).map_err(csv_io)
    })?;
    header(
        a.seed,
        DEFAULT_STRONG_THRESHOLD,
        DEFAULT_GRID_KM,
        config.path_model.v_km_s,
    );
    println!("cities: {}", topology.cities().len());
    println!("probes: {}", topology.hosts().probes().count());
    println!("landmarks: {}", topology.hosts().landmarks().count());
    println!("observations: {}", obs.len());
    Ok(())
}

fn geolocate(a: GeolocateArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            require_input(path)?;
            ExperimentSpec::load(path)?
        }
        None => {
            let algorithm = match a.algorithm {
                Some(AlgorithmArg::Cbg) => Algorithm::Cbg,
                Some(AlgorithmArg::Geoget) => Algorithm::Geoget,
                None => return Err(CliError::Usage("give --spec or --algorithm".into())),
            };
            for p in [&a.hosts, &a.rtt, &a.config].into_iter().flatten() {
                require_input(p)?;
            }
            let spec = ExperimentSpec {
                algorithm,
                mode: match a.mode {
                    ModeArg::Original => Mode::Original,
                    ModeArg::Modified => Mode::Modified,
                },
                threshold: a.threshold,
                grid_km: a.grid_km,
                seed: a.seed,
                candidate_areas: a.candidate_areas,
                targets: a.targets,
                dataset: DatasetSpec {
                    hosts: a.hosts.clone(),
                    rtt: a.rtt.clone(),
                    topology: a.config.clone(),
                    preset: a.preset.clone(),
                },
            };
            spec.validate()?;
            spec
        }
    };
    let runs = experiment::run_experiment(&spec)?;
    write_file(&a.out, |w| write_runs(&runs, w).map_err(csv_io))?;
    header(
        spec.seed,
        spec.threshold,
        spec.grid_km,
        Speed::FIBER.km_per_s(),
    );
    let located = runs
        .iter()
        .filter(|r| r.result.location().is_some())
        .count();
    println!("algorithm: {} ({})", spec.algorithm, spec.mode);
    println!("targets: {}", runs.len());
    println!("located: {located}");
    println!("failed: {}", runs.len() - located);
    Ok(())
}

fn print_report(r: &ErrorReport) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.1}"));
    println!("targets: {}", r.targets.len());
    println!("located: {}", r.located);
    println!("failed: {}", r.failed);
    println!("median error km: {}", opt(r.median_km));
    println!("mean error km: {}", opt(r.mean_km));
    if let Some(acc) = r.city_accuracy {
        println!("city accuracy: {acc:.4}");
    }
}

/// Write the error CDF as `error_km,fraction`.
fn emit_cdf(report: &ErrorReport, path: &Path) -> Result<()> {
    write_file(path, |w| report.write_cdf(w).map_err(csv_io))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    require_input(&a.results)?;
    require_input(&a.truth)?;
    let runs = load_runs(&a.results)?;
    let registry = dataset::load_hosts(&a.truth)?;
    let truth = truth_for(&runs, &registry)?;
    let results: Vec<GeolocationResult> = runs.into_iter().map(|r| r.result).collect();
    let report = evaluate_results(&results, &truth)?;
    if let Some(path) = &a.cdf {
        emit_cdf(&report, path)?;
    }
    if let Some(path) = &a.out {
        write_file(path, |w| report.write_csv(w))?;
    }
    default_header();
    print_report(&report);
    Ok(())
}
