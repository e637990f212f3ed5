use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use pcnm::coverage::{rasterize, select_verification_points, CoverageError, GridGeometry, Mask, DEFAULT_CELL_M};
use pcnm::dominance::{assign_dominances, partition_stats, DominanceError};
use pcnm::protocol::MeasurementRecord;
use pcnm::route::{brute_force_route, optimize_route, GaParams, RouteError};
use pcnm::sim::{
    check_trace, parse_trace, run_campaign_with, run_sweep_cell, sweep_cells, sweep_convergence_csv, sweep_csv,
    RunMode, SimConfig, SimError, TraceError, SWEEP_AREA_M,
};
use pcnm::telemetry::{parse_cell_info, parse_nmea, TelemetryError};
use pcnm::{load_campaign, Campaign, CampaignError, MeasurementPoint, Point2D};

#[derive(Parser)]
#[command(name = "pcnm", version, about = "Cellular drive-test campaign planning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign campaign points to their closest sensor.
    Partition {
        #[command(flatten)]
        campaign: CampaignArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Optimize a visiting order for one sensor.
    Route(RouteArgs),
    /// Run a full simulated campaign.
    Simulate(SimulateArgs),
    /// Run a grid of simulated campaigns over point and sensor counts.
    Sweep(SweepArgs),
    /// Parse NMEA GGA/RMC sentences, one per line.
    ParseNmea {
        /// Input file; standard input when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse SIM-AT cell blocks, each terminated by an `OK` line.
    ParseCell {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Average measurement records into a coverage grid.
    Rasterize(RasterizeArgs),
    /// Pick verification points on the frontier of predicted coverage.
    SelectPoints {
        /// Predicted coverage mask (CSV).
        #[arg(long)]
        predicted: PathBuf,
        /// Demand node mask (CSV).
        #[arg(long)]
        demand: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check a simulator message trace against its campaign.
    TraceReplay {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign configuration (JSON).
    #[arg(long)]
    campaign: PathBuf,
    /// Overrides the campaign seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    ga_pop: Option<usize>,
    #[arg(long)]
    ga_gens: Option<usize>,
    #[arg(long)]
    ga_mut: Option<f64>,
    #[arg(long)]
    ga_elite: Option<usize>,
}

impl GaArgs {
    fn params(&self, seed: u64) -> GaParams {
        let d = GaParams::with_seed(seed);
        GaParams {
            population_size: self.ga_pop.unwrap_or(d.population_size),
            generations: self.ga_gens.unwrap_or(d.generations),
            mutation_rate: self.ga_mut.unwrap_or(d.mutation_rate),
            elite_count: self.ga_elite.unwrap_or(d.elite_count),
            ..d
        }
    }
}

#[derive(Args)]
struct RouteArgs {
    /// Points file: JSON array of `{"id","x","y"}`.
    #[arg(long, conflicts_with = "campaign")]
    points: Option<PathBuf>,
    /// Use the campaign's points; the path starts at its lowest-id sensor.
    #[arg(long)]
    campaign: Option<PathBuf>,
    /// Number of points: the first n of the input, or n uniform points in a
    /// 50 km square when no input is given.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Start position `x,y` in meters.
    #[arg(long, value_parser = parse_point)]
    start: Option<Point2D>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exhaustive optimum instead of the GA (at most 10 points).
    #[arg(long)]
    brute_force: bool,
    /// Writes the GA convergence trace as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    ga: GaArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    K,
    Single,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::K)]
    mode: ModeArg,
    /// Seconds spent measuring at each point.
    #[arg(long, default_value_t = 0.0)]
    dwell: f64,
    /// One-way message delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    /// Writes the message trace (`<time_s> sensor/<id> <message>` lines).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    ga: GaArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Point counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    /// Sensor counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Writes per-generation best lengths as CSV.
    #[arg(long)]
    convergence_out: Option<PathBuf>,
    #[command(flatten)]
    ga: GaArgs,
    /// Summary CSV (`n,k,rep,overall_time_s`); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RasterizeArgs {
    /// Records: a JSON array of measurement records, or a simulate report.
    #[arg(long)]
    records: PathBuf,
    /// Grid extent taken from this campaign's area.
    #[arg(long)]
    campaign: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CELL_M)]
    cell_m: f64,
    #[arg(long, default_value_t = SWEEP_AREA_M)]
    width: f64,
    #[arg(long, default_value_t = SWEEP_AREA_M)]
    height: f64,
    /// Grayscale PGM of the mean levels.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// PGM mask of populated cells.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// CSV matrix of mean levels; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Point2D, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x '{x}'"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y '{y}'"))?;
    let p = Point2D::new(x, y);
    if p.is_finite() {
        Ok(p)
    } else {
        Err("coordinates must be finite".into())
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("IoError: {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("SchemaError: {0}")]
    Input(String),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Dominance(#[from] DominanceError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn read_input(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) => read_text(p),
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|source| CliError::Io { path: "<stdin>".into(), source })?;
            Ok(s)
        }
    }
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

fn emit(output: &OutputArgs, json_value: impl FnOnce() -> String, csv: impl FnOnce() -> String) -> Result<(), CliError> {
    let mut text = match output.format {
        Format::Json => json_value(),
        Format::Csv => csv(),
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_bytes(output.out.as_deref(), text.as_bytes())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn load(args: &CampaignArgs) -> Result<Campaign, CliError> {
    let mut c = load_campaign(&read_text(&args.campaign)?)?;
    if let Some(seed) = args.seed {
        c.seed = seed;
    }
    Ok(c)
}

fn partition(args: &CampaignArgs, output: &OutputArgs) -> Result<(), CliError> {
    let c = load(args)?;
    let a = assign_dominances(&c.sensors, &c.points)?;
    let stats = partition_stats(&a);
    emit(output, || pretty(&json!({"assignment": a, "stats": stats})), || a.to_csv())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    id: u32,
    x: f64,
    y: f64,
}

fn route(args: &RouteArgs) -> Result<(), CliError> {
    let (mut points, mut start) = if let Some(path) = &args.points {
        let docs: Vec<PointDoc> =
            serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let pts: Vec<MeasurementPoint> =
            docs.into_iter().map(|d| MeasurementPoint::new(d.id, Point2D::new(d.x, d.y))).collect();
        (pts, Point2D::new(0.0, 0.0))
    } else if let Some(path) = &args.campaign {
        let mut c = load_campaign(&read_text(path)?)?;
        c.seed = args.seed;
        let start = c.sensors.iter().min_by_key(|s| s.id).map(|s| s.position).unwrap_or_default();
        (c.points, start)
    } else {
        let n = args.n.ok_or_else(|| CliError::Input("one of --points, --campaign or --n is required".into()))?;
        let pts = pcnm::sim::generate_points(n as usize, SWEEP_AREA_M, SWEEP_AREA_M, args.seed);
        (pts, Point2D::new(SWEEP_AREA_M / 2.0, SWEEP_AREA_M / 2.0))
    };
    if let Some(n) = args.n {
        points.truncate(n as usize);
    }
    if let Some(s) = args.start {
        start = s;
    }
    if args.brute_force {
        let r = brute_force_route(start, &points)?;
        return emit_route(&args.output, &r, &points);
    }
    let (r, trace) = optimize_route(start, &points, &args.ga.params(args.seed))?;
    if let Some(p) = &args.trace_out {
        write_bytes(Some(p), trace.to_csv().as_bytes())?;
    }
    emit_route(&args.output, &r, &points)
}

fn emit_route(output: &OutputArgs, r: &pcnm::Route, points: &[MeasurementPoint]) -> Result<(), CliError> {
    emit(output, || pretty(r), || {
        let mut s = String::from("rank,point_id,x,y\n");
        for (i, id) in r.order.iter().enumerate() {
            let p = points.iter().find(|p| p.id == *id).expect("route visits input points");
            s.push_str(&format!("{},{},{},{}\n", i + 1, id, p.position.x, p.position.y));
        }
        s
    })
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let c = load(&args.campaign)?;
    let ga = args.ga.params(c.seed);
    let cfg = SimConfig { dwell_s: args.dwell, latency_s: args.latency, ..SimConfig::default() };
    if !(cfg.dwell_s.is_finite() && cfg.dwell_s >= 0.0 && cfg.latency_s.is_finite() && cfg.latency_s >= 0.0) {
        return Err(CliError::Input("--dwell and --latency must be finite and non-negative".into()));
    }
    let modes: Vec<(&str, RunMode)> = match args.mode {
        ModeArg::K => vec![("k", RunMode::KAsConfigured)],
        ModeArg::Single => vec![("single", RunMode::ForceSingleSensor)],
        ModeArg::Both => vec![("k", RunMode::KAsConfigured), ("single", RunMode::ForceSingleSensor)],
    };
    let mut reports = Vec::new();
    for (label, mode) in &modes {
        reports.push((*label, run_campaign_with(&c, &ga, *mode, &cfg)?));
    }
    if let Some(p) = &args.trace_out {
        let text: String = reports.iter().map(|(_, r)| r.trace_text()).collect();
        write_bytes(Some(p), text.as_bytes())?;
    }
    for (label, r) in &reports {
        eprintln!("{label}: {} sensor(s), overall time {:.1} s", r.per_sensor_time.len(), r.overall_time);
    }
    emit(
        &args.output,
        || {
            if reports.len() == 1 {
                pretty(&reports[0].1)
            } else {
                let map: serde_json::Map<String, serde_json::Value> = reports
                    .iter()
                    .map(|(l, r)| (l.to_string(), serde_json::to_value(r).expect("report serializes")))
                    .collect();
                pretty(&map)
            }
        },
        || {
            if reports.len() == 1 {
                return reports[0].1.to_csv();
            }
            let mut s = String::from("mode,sensor_id,distance_m,time_s\n");
            for (label, r) in &reports {
                for line in r.to_csv().lines().skip(1) {
                    s.push_str(&format!("{label},{line}\n"));
                }
            }
            s
        },
    )
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.ns.contains(&0) || args.ks.contains(&0) {
        return Err(CliError::Input("point and sensor counts must be positive".into()));
    }
    let ga = args.ga.params(args.seed);
    let cells = sweep_cells(&args.ns, &args.ks, args.reps);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    // par_iter().collect() keeps input order, so output does not depend on scheduling
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, k, rep)| run_sweep_cell(n, k, rep, args.seed, &ga))
            .collect::<Result<Vec<_>, _>>()
    })?;
    if let Some(p) = &args.convergence_out {
        write_bytes(Some(p), sweep_convergence_csv(&rows).as_bytes())?;
    }
    write_bytes(args.out.as_deref(), sweep_csv(&rows).as_bytes())
}

fn parse_nmea_cmd(input: Option<&Path>, output: &OutputArgs) -> Result<(), CliError> {
    let text = read_input(input)?;
    let fixes = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(parse_nmea)
        .collect::<Result<Vec<_>, _>>()?;
    emit(
        output,
        || fixes.iter().map(|f| serde_json::to_string(f).expect("fix serializes") + "\n").collect(),
        || {
            let mut s = String::from("kind,latitude,longitude,time_utc,quality,satellites\n");
            for f in &fixes {
                let sats = f.satellites.map(|n| n.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{:?},{},{},{},{},{}\n",
                    f.kind, f.latitude, f.longitude, f.time_utc, f.quality, sats
                ));
            }
            s
        },
    )
}

fn parse_cell_cmd(input: Option<&Path>, output: &OutputArgs) -> Result<(), CliError> {
    let text = read_input(input)?;
    let mut blocks = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() && current.is_empty() {
            continue;
        }
        current.push_str(line);
        current.push('\n');
        if line.trim() == "OK" {
            blocks.push(std::mem::take(&mut current));
        }
    }
    if !current.trim().is_empty() {
        blocks.push(current);
    }
    let mut cells = Vec::new();
    for b in &blocks {
        let c = parse_cell_info(b)?;
        let prev = cells.last();
        let c = c.with_deltas(prev);
        cells.push(c);
    }
    emit(
        output,
        || cells.iter().map(|c| serde_json::to_string(c).expect("cell serializes") + "\n").collect(),
        || {
            let opt = |v: Option<String>| v.unwrap_or_default();
            let mut s =
                String::from("cid,ta,mcc,mnc,lac,rssi_dbm,rssi_delta,ber_pct,ber_delta,bcc,btcc,ncc\n");
            for c in &cells {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    c.cell_id,
                    c.timing_advance,
                    c.mcc,
                    c.mnc,
                    c.lac,
                    opt(c.rssi_dbm.map(|v| v.to_string())),
                    opt(c.rssi_delta.map(|v| v.to_string())),
                    opt(c.ber_pct.map(|v| v.to_string())),
                    opt(c.ber_delta.map(|v| v.to_string())),
                    c.bcc,
                    c.btcc,
                    c.ncc
                ));
            }
            s
        },
    )
}

fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let records = match value {
        serde_json::Value::Object(mut m) => m.remove("records").unwrap_or(serde_json::Value::Null),
        other => other,
    };
    serde_json::from_value(records).map_err(|e| CliError::Input(format!("{}: records: {e}", path.display())))
}

fn rasterize_cmd(args: &RasterizeArgs) -> Result<(), CliError> {
    let records = load_records(&args.records)?;
    let (w, h) = match &args.campaign {
        Some(p) => {
            let c = load_campaign(&read_text(p)?)?;
            (c.width, c.height)
        }
        None => (args.width, args.height),
    };
    let geometry = GridGeometry::covering(w, h, args.cell_m)?;
    let grid = rasterize(&records, geometry)?;
    if let Some(p) = &args.pgm {
        write_bytes(Some(p), &grid.to_pgm())?;
    }
    if let Some(p) = &args.mask {
        write_bytes(Some(p), &grid.mask_pgm())?;
    }
    write_bytes(args.out.as_deref(), grid.to_csv().as_bytes())
}

fn select_points(predicted: &Path, demand: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let pred = Mask::parse_csv(&read_text(predicted)?)?;
    let dem = Mask::parse_csv(&read_text(demand)?)?;
    let pts = select_verification_points(&pred, &dem)?;
    emit(
        output,
        || {
            let v: Vec<_> = pts.iter().map(|p| json!({"id": p.id, "x": p.position.x, "y": p.position.y})).collect();
            pretty(&v)
        },
        || {
            let mut s = String::from("id,x,y\n");
            for p in &pts {
                s.push_str(&format!("{},{},{}\n", p.id, p.position.x, p.position.y));
            }
            s
        },
    )
}

fn trace_replay(trace: &Path, campaign: &CampaignArgs) -> Result<(), CliError> {
    let c = load(campaign)?;
    let lines = parse_trace(&read_text(trace)?)?;
    let summary = check_trace(&c, &lines)?;
    println!("{}", pretty(&summary));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Partition { campaign, output } => partition(campaign, output),
        Command::Route(args) => route(args),
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::ParseNmea { input, output } => parse_nmea_cmd(input.as_deref(), output),
        Command::ParseCell { input, output } => parse_cell_cmd(input.as_deref(), output),
        Command::Rasterize(args) => rasterize_cmd(args),
        Command::SelectPoints { predicted, demand, output } => select_points(predicted, demand, output),
        Command::TraceReplay { trace, campaign } => trace_replay(trace, campaign),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
