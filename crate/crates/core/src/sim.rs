//! Deterministic discrete-event campaign simulator.
//!
//! A run wires the central and sensor state machines together through a
//! single event queue ordered by `(time, insertion)`. The central node
//! partitions and plans at time 0; sensors then drive along their routes at
//! constant speed, sample the simulated modem at each point and hand their
//! stores back when done.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::campaign::{
    euclidean_distance, kmh_to_mps, BaseStation, Campaign, CampaignError, MeasurementPoint, Point2D, Route, SensorNode,
};
use crate::protocol::central::Outbound;
use crate::protocol::sensor::PlanStep;
use crate::protocol::{
    encode, CentralEvent, CentralState, MeasurementRecord, MessageEnvelope, MessageKind, OperatorCommand,
    ProtocolError, SensorEvent, SensorMode, SensorState, POSITION_PERIOD_S,
};
use crate::rng::{derive_seed, seeded};
use crate::route::{ConvergenceTrace, GaParams};
use crate::telemetry::{simulate_cell, TelemetryError};

/// Side of the square test area used by [`sweep`], in meters.
pub const SWEEP_AREA_M: f64 = 50_000.0;
/// Sensor speed used by [`sweep`], in km/h.
pub const SWEEP_SPEED_KMH: f64 = 30.0;
/// Number of base stations placed in [`sweep`] campaigns.
pub const SWEEP_BASE_STATIONS: u32 = 16;

/// Safety net against runaway event loops.
const MAX_EVENTS: u64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("Incomplete: collected {got} of {expected} measurements")]
    Incomplete { expected: usize, got: usize },
    #[error("Stalled: event budget exhausted at t = {0} s")]
    Stalled(f64),
}

impl SimError {
    pub fn name(&self) -> &'static str {
        match self {
            SimError::Campaign(e) => e.name(),
            SimError::Protocol(e) => e.name(),
            SimError::Telemetry(e) => e.name(),
            SimError::Incomplete { .. } => "Incomplete",
            SimError::Stalled(_) => "Stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Use every sensor of the campaign.
    KAsConfigured,
    /// Keep only the lowest-id sensor.
    ForceSingleSensor,
}

/// Which deliveries are duplicated in transit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Duplicates {
    #[default]
    None,
    All,
    /// Only the delivery with this 0-based index.
    Only(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Time spent sampling at each point, in seconds.
    pub dwell_s: f64,
    /// One-way message delay, in seconds.
    pub latency_s: f64,
    pub position_period_s: f64,
    pub duplicates: Duplicates,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dwell_s: 0.0, latency_s: 0.0, position_period_s: POSITION_PERIOD_S, duplicates: Duplicates::None }
    }
}

/// One line of the message log, as seen by the central node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub time: f64,
    /// The sensor on the other end of the link.
    pub peer: u32,
    /// Wire line without its newline.
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub per_sensor_time: BTreeMap<u32, f64>,
    pub overall_time: f64,
    pub total_distance: BTreeMap<u32, f64>,
    pub routes: BTreeMap<u32, Route>,
    pub convergence: BTreeMap<u32, ConvergenceTrace>,
    /// Records collected by the central node, ordered by point id.
    pub records: Vec<MeasurementRecord>,
    /// Final contents of each sensor's store.
    pub sensor_stores: BTreeMap<u32, Vec<MeasurementRecord>>,
    pub trace: Vec<TraceEntry>,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with header `sensor_id,distance_m,time_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sensor_id,distance_m,time_s\n");
        for (id, t) in &self.per_sensor_time {
            out.push_str(&format!("{},{},{}\n", id, self.total_distance[id], t));
        }
        out
    }

    /// Replayable message log: `<time_s> sensor/<peer> <wire line>` per line.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&format!("{} sensor/{} {}\n", e.time, e.peer, e.line));
        }
        out
    }
}

/// `n` points drawn uniformly over the `width` x `height` area, ids `1..=n`.
pub fn generate_points(n: usize, width: f64, height: f64, seed: u64) -> Vec<MeasurementPoint> {
    let mut rng = seeded(seed);
    (1..=n as u32)
        .map(|id| {
            let x = rng.gen_range(0.0..=width);
            let y = rng.gen_range(0.0..=height);
            MeasurementPoint::new(id, Point2D::new(x, y))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Moving { from: Point2D, to: Point2D, depart: f64, arrive: f64 },
    Sampling { at: Point2D },
}

impl Pending {
    fn target(&self) -> Point2D {
        match self {
            Pending::Moving { to, .. } => *to,
            Pending::Sampling { at } => *at,
        }
    }
}

#[derive(Debug)]
enum EventKind {
    ToSensor { to: u32, env: MessageEnvelope },
    ToCentral { from: u32, env: MessageEnvelope },
    Arrive { sensor: u32, epoch: u64 },
    SampleDone { sensor: u32, epoch: u64 },
    PositionTimer { sensor: u32 },
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct SimSensor {
    state: SensorState,
    pending: Option<Pending>,
    epoch: u64,
    started: bool,
    vector_at: Option<f64>,
    last_sample: Option<f64>,
    distance: f64,
    noise_base: u64,
}

impl SimSensor {
    fn position_at(&self, now: f64) -> Point2D {
        match self.pending {
            Some(Pending::Moving { from, to, depart, arrive }) if arrive > depart => {
                let f = ((now - depart) / (arrive - depart)).clamp(0.0, 1.0);
                Point2D::new(from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f)
            }
            _ => self.state.node().position,
        }
    }

    fn stopped(&self) -> bool {
        self.started && self.state.mode() == SensorMode::Idle
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    table: &'a [BaseStation],
    now: f64,
    seq: u64,
    deliveries: u64,
    queue: BinaryHeap<Scheduled>,
    central: CentralState,
    sensors: BTreeMap<u32, SimSensor>,
    trace: Vec<TraceEntry>,
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.queue.push(Scheduled { time, seq: self.seq, kind });
        self.seq += 1;
    }

    fn deliver(&mut self, kind: impl Fn() -> EventKind) {
        let dup = match self.cfg.duplicates {
            Duplicates::None => false,
            Duplicates::All => true,
            Duplicates::Only(i) => i == self.deliveries,
        };
        self.deliveries += 1;
        let at = self.now + self.cfg.latency_s;
        self.schedule(at, kind());
        if dup {
            self.schedule(at, kind());
        }
    }

    fn central_out(&mut self, out: Vec<Outbound>) {
        for o in out {
            self.trace.push(TraceEntry { time: self.now, peer: o.to, line: encode(&o.envelope).trim_end().to_string() });
            let Outbound { to, envelope } = o;
            self.deliver(|| EventKind::ToSensor { to, env: envelope.clone() });
        }
    }

    fn sensor_out(&mut self, from: u32, out: Vec<MessageEnvelope>) {
        for env in out {
            self.deliver(|| EventKind::ToCentral { from, env: env.clone() });
        }
    }

    fn sensor_step(&mut self, id: u32, event: SensorEvent) {
        let s = self.sensors.get_mut(&id).expect("known sensor");
        let out = s.state.step(event);
        if s.state.mode() == SensorMode::Measuring {
            s.started = true;
        }
        self.sensor_out(id, out);
        self.reconcile(id);
    }

    /// Brings the sensor's motion in line with the head of its plan.
    fn reconcile(&mut self, id: u32) {
        let now = self.now;
        let s = self.sensors.get_mut(&id).expect("known sensor");
        let head = s.state.plan().front().map(PlanStep::target);
        if let Some(p) = s.pending {
            if Some(p.target()) == head {
                return;
            }
            // plan changed under us: stop where we are
            if let Pending::Moving { from, .. } = p {
                let here = s.position_at(now);
                s.distance += euclidean_distance(from, here);
                s.state.set_position(here);
            }
            s.pending = None;
            s.epoch += 1;
        }
        let Some(target) = head else { return };
        let from = s.state.node().position;
        let arrive = now + euclidean_distance(from, target) / s.state.node().speed;
        s.pending = Some(Pending::Moving { from, to: target, depart: now, arrive });
        let epoch = s.epoch;
        self.schedule(arrive, EventKind::Arrive { sensor: id, epoch });
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::ToCentral { from, env } => {
                self.trace.push(TraceEntry { time: self.now, peer: from, line: encode(&env).trim_end().to_string() });
                let out = self.central.step(CentralEvent::Inbound(env))?;
                self.central_out(out);
            }
            EventKind::ToSensor { to, env } => {
                let s = self.sensors.get_mut(&to).expect("central only addresses known sensors");
                if matches!(env.kind, MessageKind::Vector { .. })
                    && s.state.mode() == SensorMode::Measuring
                    && s.vector_at.is_none()
                {
                    s.vector_at = Some(self.now);
                }
                self.sensor_step(to, SensorEvent::Inbound(env));
            }
            EventKind::Arrive { sensor, epoch } => {
                let now = self.now;
                let dwell = self.cfg.dwell_s;
                let s = self.sensors.get_mut(&sensor).expect("known sensor");
                if epoch != s.epoch {
                    return Ok(());
                }
                let Some(Pending::Moving { from, to, .. }) = s.pending else { return Ok(()) };
                s.distance += euclidean_distance(from, to);
                let measure = matches!(s.state.plan().front(), Some(PlanStep::Measure(_)));
                s.pending = if measure { Some(Pending::Sampling { at: to }) } else { None };
                if measure {
                    self.schedule(now + dwell, EventKind::SampleDone { sensor, epoch });
                }
                self.sensor_step(sensor, SensorEvent::Arrived { time: now, position: to });
            }
            EventKind::SampleDone { sensor, epoch } => {
                let s = self.sensors.get_mut(&sensor).expect("known sensor");
                if epoch != s.epoch {
                    return Ok(());
                }
                let Some(PlanStep::Measure(w)) = s.state.plan().front().copied() else { return Ok(()) };
                s.pending = None;
                s.last_sample = Some(self.now);
                let cell = simulate_cell(w.position(), self.table, derive_seed(s.noise_base, u64::from(w.id)))?;
                self.sensor_step(sensor, SensorEvent::MeasurementComplete { time: self.now, cell });
            }
            EventKind::PositionTimer { sensor } => {
                let s = &self.sensors[&sensor];
                if s.stopped() {
                    return Ok(());
                }
                if s.state.mode() == SensorMode::Measuring {
                    let position = s.position_at(self.now);
                    self.sensor_step(sensor, SensorEvent::Timer { time: self.now, position });
                }
                let next = self.now + self.cfg.position_period_s;
                self.schedule(next, EventKind::PositionTimer { sensor });
            }
        }
        Ok(())
    }
}

/// Runs a full campaign with the default simulation settings.
pub fn run_campaign(campaign: &Campaign, ga: &GaParams, mode: RunMode) -> Result<CampaignReport, SimError> {
    run_campaign_with(campaign, ga, mode, &SimConfig::default())
}

/// Runs a full campaign. The GA seed in `ga` is ignored: per-sensor seeds
/// derive from the campaign seed.
pub fn run_campaign_with(
    campaign: &Campaign,
    ga: &GaParams,
    mode: RunMode,
    cfg: &SimConfig,
) -> Result<CampaignReport, SimError> {
    campaign.validate()?;
    let campaign = match mode {
        RunMode::KAsConfigured => campaign.clone(),
        RunMode::ForceSingleSensor => campaign.single_sensor(),
    };
    let central = CentralState::new(&campaign)?;
    let sensors = campaign
        .sensors
        .iter()
        .map(|n| {
            let s = SimSensor {
                state: SensorState::new(n.clone()),
                pending: None,
                epoch: 0,
                started: false,
                vector_at: None,
                last_sample: None,
                distance: 0.0,
                noise_base: derive_seed(campaign.seed, u64::from(n.id)),
            };
            (n.id, s)
        })
        .collect();
    let mut sim = Sim {
        cfg,
        table: &campaign.base_stations,
        now: 0.0,
        seq: 0,
        deliveries: 0,
        queue: BinaryHeap::new(),
        central,
        sensors,
        trace: Vec::new(),
    };

    let start = sim.central.step(CentralEvent::Operator(OperatorCommand::Start))?;
    sim.central_out(start);
    let plan = GaParams { seed: campaign.seed, ..ga.clone() };
    let vectors = sim.central.step(CentralEvent::Operator(OperatorCommand::Plan(plan)))?;
    sim.central_out(vectors);
    let ids: Vec<u32> = sim.sensors.keys().copied().collect();
    for id in ids {
        sim.schedule(cfg.position_period_s, EventKind::PositionTimer { sensor: id });
    }

    let mut handled = 0u64;
    while let Some(ev) = sim.queue.pop() {
        debug_assert!(ev.time >= sim.now);
        sim.now = ev.time;
        sim.handle(ev.kind)?;
        handled += 1;
        if handled > MAX_EVENTS {
            return Err(SimError::Stalled(sim.now));
        }
    }

    let records: Vec<MeasurementRecord> = sim.central.records().values().cloned().collect();
    if !sim.central.is_complete() || records.len() != campaign.points.len() {
        return Err(SimError::Incomplete { expected: campaign.points.len(), got: records.len() });
    }
    let mut per_sensor_time = BTreeMap::new();
    let mut total_distance = BTreeMap::new();
    let mut sensor_stores = BTreeMap::new();
    for (id, s) in &sim.sensors {
        let t = match (s.vector_at, s.last_sample) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        per_sensor_time.insert(*id, t);
        total_distance.insert(*id, s.distance);
        sensor_stores.insert(*id, s.state.store().to_vec());
    }
    let overall_time = per_sensor_time.values().copied().fold(0.0, f64::max);
    let (routes, convergence) =
        sim.central.routes().iter().map(|(id, (r, t))| ((*id, r.clone()), (*id, t.clone()))).unzip();
    Ok(CampaignReport {
        per_sensor_time,
        overall_time,
        total_distance,
        routes,
        convergence,
        records,
        sensor_stores,
        trace: sim.trace,
    })
}

fn cell_seed(base: u64, n: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(base, n as u64), rep as u64)
}

/// The campaign evaluated by one sweep cell: `n` uniform points and `k`
/// uniformly placed sensors at 30 km/h in a 50 km square. Points depend on
/// `(base, n, rep)` only and sensor positions come from one stream, so the
/// k = 1 campaign uses the first sensor of every larger k.
pub fn sweep_campaign(n: usize, k: usize, rep: usize, base_seed: u64) -> Campaign {
    let s = cell_seed(base_seed, n, rep);
    let points = generate_points(n, SWEEP_AREA_M, SWEEP_AREA_M, derive_seed(s, 1));
    let mut rng = seeded(derive_seed(s, 2));
    let sensors = (1..=k as u32)
        .map(|id| {
            let p = Point2D::new(rng.gen_range(0.0..=SWEEP_AREA_M), rng.gen_range(0.0..=SWEEP_AREA_M));
            SensorNode::new(id, p, kmh_to_mps(SWEEP_SPEED_KMH))
        })
        .collect();
    let mut rng = seeded(derive_seed(s, 3));
    let base_stations = (1..=SWEEP_BASE_STATIONS)
        .map(|id| BaseStation {
            id,
            position: Point2D::new(rng.gen_range(0.0..=SWEEP_AREA_M), rng.gen_range(0.0..=SWEEP_AREA_M)),
            cell_id: 100 + id,
            antenna: if id % 2 == 0 { "sector-120".into() } else { "omni".into() },
        })
        .collect();
    Campaign {
        width: SWEEP_AREA_M,
        height: SWEEP_AREA_M,
        sensors,
        points,
        base_stations,
        seed: derive_seed(s, 4 + k as u64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub rep: usize,
    pub overall_time: f64,
    pub convergence: BTreeMap<u32, ConvergenceTrace>,
}

/// Every `(n, k, rep)` cell of a sweep, in output order.
pub fn sweep_cells(ns: &[usize], ks: &[usize], repetitions: usize) -> Vec<(usize, usize, usize)> {
    let mut cells = Vec::new();
    for &n in ns {
        for &k in ks {
            for rep in 0..repetitions {
                cells.push((n, k, rep));
            }
        }
    }
    cells
}

pub fn run_sweep_cell(n: usize, k: usize, rep: usize, base_seed: u64, ga: &GaParams) -> Result<SweepRow, SimError> {
    let c = sweep_campaign(n, k, rep, base_seed);
    let report = run_campaign(&c, ga, RunMode::KAsConfigured)?;
    Ok(SweepRow { n, k, rep, overall_time: report.overall_time, convergence: report.convergence })
}

/// Runs every cell of the sweep sequentially.
pub fn sweep(
    ns: &[usize],
    ks: &[usize],
    repetitions: usize,
    base_seed: u64,
    ga: &GaParams,
) -> Result<Vec<SweepRow>, SimError> {
    sweep_cells(ns, ks, repetitions).into_iter().map(|(n, k, rep)| run_sweep_cell(n, k, rep, base_seed, ga)).collect()
}

/// CSV with header `n,k,rep,overall_time_s`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,k,rep,overall_time_s\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.n, r.k, r.rep, r.overall_time));
    }
    out
}

/// CSV with header `n,k,rep,sensor_id,generation,best_length_m`.
pub fn sweep_convergence_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,k,rep,sensor_id,generation,best_length_m\n");
    for r in rows {
        for (sensor, trace) in &r.convergence {
            for (g, l) in trace.best_length.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{},{}\n", r.n, r.k, r.rep, sensor, g + 1, l));
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("MalformedTrace: line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("ClockRegression: line {line} goes back in time")]
    ClockRegression { line: usize },
    #[error("UnknownSensor: line {line}: sensor {sensor}")]
    UnknownSensor { line: usize, sensor: u32 },
    #[error("ClosestBsMismatch: line {line}: expected cell {expected}, found {found:?}")]
    ClosestBsMismatch { line: usize, expected: u32, found: Option<u32> },
    #[error("ConversationShape: {0}")]
    ConversationShape(String),
}

impl TraceError {
    pub fn name(&self) -> &'static str {
        match self {
            TraceError::Malformed { .. } => "MalformedTrace",
            TraceError::ClockRegression { .. } => "ClockRegression",
            TraceError::UnknownSensor { .. } => "UnknownSensor",
            TraceError::ClosestBsMismatch { .. } => "ClosestBsMismatch",
            TraceError::ConversationShape(_) => "ConversationShape",
        }
    }
}

/// One parsed trace line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub time: f64,
    pub peer: u32,
    pub envelope: MessageEnvelope,
}

/// Parses the text produced by [`CampaignReport::trace_text`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| TraceError::Malformed { line, reason };
        let mut parts = raw.splitn(3, ' ');
        let (Some(t), Some(peer), Some(json)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected '<time_s> sensor/<id> <message>'".into()));
        };
        let time: f64 = t.parse().map_err(|_| bad(format!("bad time '{t}'")))?;
        let peer: u32 = peer
            .strip_prefix("sensor/")
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad(format!("bad peer '{peer}'")))?;
        let envelope = crate::protocol::decode(json).map_err(|e| bad(e.to_string()))?;
        if let crate::protocol::Sender::Sensor(id) = envelope.sender {
            if id != peer {
                return Err(bad(format!("message from sensor {id} logged on the link to {peer}")));
            }
        }
        out.push(TraceLine { time, peer, envelope });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceSummary {
    pub messages: usize,
    pub central_messages: usize,
    pub sensor_messages: usize,
    /// Sensors that received a VECTOR.
    pub planned_sensors: Vec<u32>,
}

/// Replays a trace against `campaign`: the clock never goes back, every
/// central message carries the base station closest to its peer's last
/// reported position (ties to the lowest cell id, found by a plain scan of
/// the table), and every planned sensor went through the full measurement
/// conversation.
pub fn check_trace(campaign: &Campaign, lines: &[TraceLine]) -> Result<TraceSummary, TraceError> {
    let mut position: BTreeMap<u32, Point2D> = campaign.sensors.iter().map(|s| (s.id, s.position)).collect();
    let mut last_time = f64::NEG_INFINITY;
    let mut summary = TraceSummary { messages: 0, central_messages: 0, sensor_messages: 0, planned_sensors: Vec::new() };
    for (i, l) in lines.iter().enumerate() {
        let line = i + 1;
        if l.time < last_time {
            return Err(TraceError::ClockRegression { line });
        }
        last_time = l.time;
        let Some(pos) = position.get(&l.peer).copied() else {
            return Err(TraceError::UnknownSensor { line, sensor: l.peer });
        };
        summary.messages += 1;
        if l.envelope.sender.is_central() {
            summary.central_messages += 1;
            let mut best: Option<(f64, u32)> = None;
            for b in &campaign.base_stations {
                let d = ((pos.x - b.position.x).powi(2) + (pos.y - b.position.y).powi(2)).sqrt();
                let better = match best {
                    None => true,
                    Some((bd, bc)) => d < bd || (d == bd && b.cell_id < bc),
                };
                if better {
                    best = Some((d, b.cell_id));
                }
            }
            let found = l.envelope.closest_bs.map(|c| c.cell_id);
            if let Some((_, expected)) = best {
                if found != Some(expected) {
                    return Err(TraceError::ClosestBsMismatch { line, expected, found });
                }
            }
            if matches!(l.envelope.kind, MessageKind::Vector { .. }) && !summary.planned_sensors.contains(&l.peer) {
                summary.planned_sensors.push(l.peer);
            }
        } else {
            summary.sensor_messages += 1;
            if let MessageKind::Position { at, .. } = l.envelope.kind {
                position.insert(l.peer, at);
            }
        }
    }
    summary.planned_sensors.sort_unstable();
    crate::protocol::check_conversation_shape(
        lines.iter().map(|l| (&l.envelope, l.peer)),
        &summary.planned_sensors,
    )
    .map_err(TraceError::ConversationShape)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_ga() -> GaParams {
        GaParams { population_size: 30, generations: 30, ..GaParams::default() }
    }

    fn bs_table() -> Vec<BaseStation> {
        vec![BaseStation { id: 1, position: Point2D::new(100.0, 100.0), cell_id: 11, antenna: "omni".into() }]
    }

    #[test]
    fn generate_points_deterministic_in_bounds() {
        let a = generate_points(200, 1000.0, 500.0, 9);
        assert_eq!(a, generate_points(200, 1000.0, 500.0, 9));
        assert!(a.iter().all(|p| (0.0..=1000.0).contains(&p.position.x) && (0.0..=500.0).contains(&p.position.y)));
        assert_eq!(generate_points(1, 10.0, 10.0, 1).len(), 1);
    }

    #[test]
    fn quadrant_counts_within_three_sigma() {
        let pts = generate_points(10_000, 50_000.0, 50_000.0, 77);
        let mut q = [0usize; 4];
        for p in &pts {
            let i = usize::from(p.position.x >= 25_000.0) + 2 * usize::from(p.position.y >= 25_000.0);
            q[i] += 1;
        }
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for c in q {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{q:?}");
        }
    }

    #[test]
    fn single_point_travel_time() {
        let c = Campaign {
            width: 50_000.0,
            height: 50_000.0,
            sensors: vec![SensorNode::new(1, Point2D::new(0.0, 0.0), kmh_to_mps(30.0))],
            points: vec![MeasurementPoint::new(1, Point2D::new(15_000.0, 20_000.0))],
            base_stations: bs_table(),
            seed: 1,
        };
        let r = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        assert!((r.per_sensor_time[&1] - 3000.0).abs() < 1e-9);
        assert_eq!(r.overall_time, r.per_sensor_time[&1]);
        assert_eq!(r.records.len(), 1);
    }

    #[test]
    fn dwell_and_latency_add_up() {
        let mut c = sweep_campaign(12, 2, 0, 5);
        c.sensors[0].speed = 10.0;
        let cfg = SimConfig { dwell_s: 30.0, latency_s: 0.5, ..SimConfig::default() };
        let r = run_campaign_with(&c, &small_ga(), RunMode::KAsConfigured, &cfg).unwrap();
        for s in &c.sensors {
            let n = r.sensor_stores[&s.id].len() as f64;
            let travel = r.total_distance[&s.id] / s.speed;
            let expected = travel + 30.0 * n;
            assert!((r.per_sensor_time[&s.id] - expected).abs() <= 1e-6 * expected.max(1.0));
        }
        assert_eq!(r.records.len(), 12);
    }

    #[test]
    fn trace_is_time_ordered_and_deterministic() {
        let c = sweep_campaign(15, 3, 1, 8);
        let a = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        let b = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.trace.windows(2).all(|w| w[0].time <= w[1].time));
        let mut ids: Vec<u32> = a.records.iter().map(|r| r.point_id).collect();
        ids.sort();
        assert_eq!(ids, (1..=15).collect::<Vec<_>>());
    }

    #[test]
    fn duplicates_do_not_change_stores() {
        let c = sweep_campaign(10, 2, 0, 3);
        let base = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        let cfg = SimConfig { duplicates: Duplicates::All, ..SimConfig::default() };
        let dup = run_campaign_with(&c, &small_ga(), RunMode::KAsConfigured, &cfg).unwrap();
        assert_eq!(base.sensor_stores, dup.sensor_stores);
        assert_eq!(base.records, dup.records);
        assert!(dup.trace.len() > base.trace.len());
    }

    #[test]
    fn trace_replays_clean() {
        let c = sweep_campaign(25, 4, 0, 12);
        let r = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        let lines = parse_trace(&r.trace_text()).unwrap();
        assert_eq!(lines.len(), r.trace.len());
        let summary = check_trace(&c, &lines).unwrap();
        assert_eq!(summary.messages, r.trace.len());
        assert!(summary.sensor_messages > 0 && summary.central_messages > 0);
    }

    #[test]
    fn tampered_trace_rejected() {
        let c = sweep_campaign(10, 2, 0, 12);
        let r = run_campaign(&c, &small_ga(), RunMode::KAsConfigured).unwrap();
        let mut lines = parse_trace(&r.trace_text()).unwrap();
        let i = lines.iter().position(|l| l.envelope.sender.is_central()).unwrap();
        let mut bs = lines[i].envelope.closest_bs.unwrap();
        bs.cell_id += 1000;
        lines[i].envelope.closest_bs = Some(bs);
        assert_eq!(check_trace(&c, &lines).unwrap_err().name(), "ClosestBsMismatch");

        let mut lines = parse_trace(&r.trace_text()).unwrap();
        lines.retain(|l| l.envelope.kind.tag() != "READY_TO_SEND");
        assert_eq!(check_trace(&c, &lines).unwrap_err().name(), "ConversationShape");
        assert!(parse_trace("0 central {}").is_err());
        assert!(parse_trace("x sensor/1 {}").is_err());
    }

    #[test]
    fn force_single_uses_one_sensor() {
        let c = sweep_campaign(10, 3, 0, 3);
        let r = run_campaign(&c, &small_ga(), RunMode::ForceSingleSensor).unwrap();
        assert_eq!(r.per_sensor_time.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert_eq!(r.records.len(), 10);
    }

    #[test]
    fn sweep_shapes() {
        assert!(sweep(&[5], &[1], 0, 1, &small_ga()).unwrap().is_empty());
        let rows = sweep(&[4, 5, 6], &[1], 1, 1, &small_ga()).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![4, 5, 6]);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("n,k,rep,overall_time_s\n4,1,0,"));
        assert_eq!(csv.lines().count(), 4);
        let conv = sweep_convergence_csv(&rows);
        assert_eq!(conv.lines().count(), 1 + 3 * 30);
    }

    #[test]
    fn sweep_k1_shares_first_sensor() {
        let a = sweep_campaign(20, 1, 2, 4);
        let b = sweep_campaign(20, 5, 2, 4);
        assert_eq!(a.points, b.points);
        assert_eq!(a.sensors[0], b.sensors[0]);
    }
}
