//! Central/sensor coordination protocol.
//!
//! The central node drives measurement cycles with `START`, `STOP`,
//! `MOVE_TO`, `GET_MEASURE` and `VECTOR`; sensors answer with
//! `READY_TO_SEND` and `CELL_INFO`. Around those sit the control messages
//! `POSITION` (periodic position report), `ACK`, `MEASURE_DATA` and
//! `CELL_INFO_REPLY`. Every central-to-sensor envelope carries the base
//! station closest to the sensor's last reported position.
//!
//! Messages travel as line-delimited JSON, see [`codec`].

pub mod central;
pub mod codec;
pub mod sensor;

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{BaseStation, Point2D};
use crate::telemetry::CellMeasurement;

pub use central::{CentralEvent, CentralState, OperatorCommand, Outbound};
pub use codec::{decode, encode, ParseError};
pub use sensor::{PlanStep, SensorEvent, SensorMode, SensorState};

/// Default period of sensor position reports, in seconds.
pub const POSITION_PERIOD_S: f64 = 10.0;
/// Number of recent message ids remembered per sender for duplicate
/// suppression.
pub const DEDUP_WINDOW: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sender {
    Central,
    Sensor(u32),
}

impl Sender {
    pub fn is_central(&self) -> bool {
        matches!(self, Sender::Central)
    }
}

/// Closest base station annotation carried by central messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestBs {
    pub position: Point2D,
    pub cell_id: u32,
}

impl From<&BaseStation> for ClosestBs {
    fn from(bs: &BaseStation) -> Self {
        ClosestBs { position: bs.position, cell_id: bs.cell_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureScope {
    /// Records with a sequence number strictly greater than `since`.
    Partial { since: u64 },
    Complete,
}

/// A position the sensor must visit and measure at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Waypoint {
    pub fn position(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}

/// One measurement taken by a sensor at a measurement point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    /// Per-sensor sequence number, starting at 1.
    pub seq: u64,
    pub point_id: u32,
    pub position: Point2D,
    pub time: f64,
    pub cell: CellMeasurement,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageKind {
    Start,
    Stop,
    MoveTo { target: Point2D },
    GetMeasure { scope: MeasureScope },
    Vector { order: Vec<Waypoint> },
    ReadyToSend { count: u64 },
    CellInfo { cell_id: u32 },
    Position { at: Point2D, time: f64 },
    Ack { of: u64 },
    MeasureData { records: Vec<MeasurementRecord> },
    CellInfoReply { station: BaseStation },
}

impl MessageKind {
    /// Wire tag.
    pub fn tag(&self) -> &'static str {
        match self {
            MessageKind::Start => "START",
            MessageKind::Stop => "STOP",
            MessageKind::MoveTo { .. } => "MOVE_TO",
            MessageKind::GetMeasure { .. } => "GET_MEASURE",
            MessageKind::Vector { .. } => "VECTOR",
            MessageKind::ReadyToSend { .. } => "READY_TO_SEND",
            MessageKind::CellInfo { .. } => "CELL_INFO",
            MessageKind::Position { .. } => "POSITION",
            MessageKind::Ack { .. } => "ACK",
            MessageKind::MeasureData { .. } => "MEASURE_DATA",
            MessageKind::CellInfoReply { .. } => "CELL_INFO_REPLY",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageEnvelope {
    pub msg_id: u64,
    pub sender: Sender,
    /// Present on every central message, absent on sensor messages.
    pub closest_bs: Option<ClosestBs>,
    pub kind: MessageKind,
}

impl MessageEnvelope {
    pub fn check(&self) -> Result<(), ProtocolError> {
        match (self.sender.is_central(), self.closest_bs.is_some()) {
            (true, false) => return Err(ProtocolError::Invalid("central message without closest_bs".into())),
            (false, true) => return Err(ProtocolError::Invalid("sensor message with closest_bs".into())),
            _ => {}
        }
        if let MessageKind::Vector { order } = &self.kind {
            if order.is_empty() {
                return Err(ProtocolError::Invalid("VECTOR with an empty order".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("UnknownSensor: {0}")]
    UnknownSensor(u32),
    #[error("UnknownCell: {0}")]
    UnknownCell(u32),
    #[error("EmptyBsTable: the central node needs at least one base station")]
    EmptyBsTable,
    #[error("InvalidEnvelope: {0}")]
    Invalid(String),
    #[error("PlanFailed: {0}")]
    Plan(String),
}

impl ProtocolError {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolError::UnknownSensor(_) => "UnknownSensor",
            ProtocolError::UnknownCell(_) => "UnknownCell",
            ProtocolError::EmptyBsTable => "EmptyBsTable",
            ProtocolError::Invalid(_) => "InvalidEnvelope",
            ProtocolError::Plan(_) => "PlanFailed",
        }
    }
}

/// Bounded memory of recently seen message ids.
#[derive(Debug, Clone, Default)]
pub struct DedupWindow {
    order: VecDeque<u64>,
    seen: HashSet<u64>,
}

impl DedupWindow {
    /// Records `id`; returns false if it was already in the window.
    pub fn admit(&mut self, id: u64) -> bool {
        if self.seen.contains(&id) {
            return false;
        }
        if self.order.len() == DEDUP_WINDOW {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.order.push_back(id);
        self.seen.insert(id);
        true
    }
}

/// Kinds that make up one sensor's measurement cycle, in order.
pub const CONVERSATION_SHAPE: [&str; 6] =
    ["START", "VECTOR", "READY_TO_SEND", "GET_MEASURE", "MEASURE_DATA", "STOP"];

/// Checks that, for every sensor in `expected`, the envelopes exchanged with
/// it contain [`CONVERSATION_SHAPE`] as a subsequence.
pub fn check_conversation_shape<'a, I>(trace: I, expected: &[u32]) -> Result<(), String>
where
    I: IntoIterator<Item = (&'a MessageEnvelope, u32)>,
{
    let mut progress: BTreeMap<u32, usize> = expected.iter().map(|s| (*s, 0)).collect();
    for (env, peer) in trace {
        if let Some(p) = progress.get_mut(&peer) {
            if *p < CONVERSATION_SHAPE.len() && env.kind.tag() == CONVERSATION_SHAPE[*p] {
                *p += 1;
            }
        }
    }
    for (sensor, p) in progress {
        if p < CONVERSATION_SHAPE.len() {
            return Err(format!(
                "sensor {sensor}: conversation stops before {} (matched {p} of {})",
                CONVERSATION_SHAPE[p],
                CONVERSATION_SHAPE.len()
            ));
        }
    }
    Ok(())
}
