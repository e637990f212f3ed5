//! Central node state machine.

use std::collections::BTreeMap;

use super::{
    ClosestBs, DedupWindow, MeasureScope, MeasurementRecord, MessageEnvelope, MessageKind, ProtocolError, Sender,
    Waypoint,
};
use crate::campaign::{BaseStation, Campaign, MeasurementPoint, Point2D, Route, SensorNode};
use crate::dominance::assign_dominances;
use crate::rng::derive_seed;
use crate::route::{optimize_route, ConvergenceTrace, GaParams};
use crate::telemetry::closest_base_station;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorCommand {
    /// Send START to every sensor.
    Start,
    /// Partition the points, optimize one route per sensor and send the
    /// VECTORs. `seed` in the parameters is the base for per-sensor seeds.
    Plan(GaParams),
    /// Send STOP to every sensor.
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CentralEvent {
    Inbound(MessageEnvelope),
    /// Periodic tick. The central node has no periodic duties; accepted so
    /// drivers can feed a uniform event stream.
    Timer { time: f64 },
    Operator(OperatorCommand),
}

/// A central message addressed to one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: u32,
    pub envelope: MessageEnvelope,
}

#[derive(Debug, Clone)]
struct SensorView {
    position: Point2D,
    closest: ClosestBs,
    assigned: Vec<u32>,
    collected: bool,
    dedup: DedupWindow,
}

/// The central node's view of the campaign.
#[derive(Debug, Clone)]
pub struct CentralState {
    base_stations: Vec<BaseStation>,
    points: Vec<MeasurementPoint>,
    sensors: BTreeMap<u32, SensorView>,
    records: BTreeMap<u32, MeasurementRecord>,
    routes: BTreeMap<u32, (Route, ConvergenceTrace)>,
    next_msg_id: u64,
}

fn closest(position: Point2D, table: &[BaseStation]) -> ClosestBs {
    ClosestBs::from(closest_base_station(position, table).expect("table checked non-empty"))
}

impl CentralState {
    pub fn new(campaign: &Campaign) -> Result<Self, ProtocolError> {
        if campaign.base_stations.is_empty() {
            return Err(ProtocolError::EmptyBsTable);
        }
        let sensors = campaign
            .sensors
            .iter()
            .map(|s| {
                let view = SensorView {
                    position: s.position,
                    closest: closest(s.position, &campaign.base_stations),
                    assigned: Vec::new(),
                    collected: false,
                    dedup: DedupWindow::default(),
                };
                (s.id, view)
            })
            .collect();
        Ok(CentralState {
            base_stations: campaign.base_stations.clone(),
            points: campaign.points.clone(),
            sensors,
            records: BTreeMap::new(),
            routes: BTreeMap::new(),
            next_msg_id: 1,
        })
    }

    /// Last reported position of a sensor.
    pub fn sensor_position(&self, id: u32) -> Option<Point2D> {
        self.sensors.get(&id).map(|s| s.position)
    }

    /// Closest base station to a sensor's last reported position.
    pub fn closest_bs(&self, id: u32) -> Option<ClosestBs> {
        self.sensors.get(&id).map(|s| s.closest)
    }

    /// Records collected so far, keyed by point id.
    pub fn records(&self) -> &BTreeMap<u32, MeasurementRecord> {
        &self.records
    }

    /// Routes and GA traces computed by the last plan.
    pub fn routes(&self) -> &BTreeMap<u32, (Route, ConvergenceTrace)> {
        &self.routes
    }

    /// True once every sensor with assigned points has delivered them all.
    pub fn is_complete(&self) -> bool {
        self.sensors.values().all(|s| s.collected)
    }

    fn send(&mut self, to: u32, kind: MessageKind) -> Outbound {
        let envelope = MessageEnvelope {
            msg_id: self.next_msg_id,
            sender: Sender::Central,
            closest_bs: Some(self.sensors[&to].closest),
            kind,
        };
        self.next_msg_id += 1;
        Outbound { to, envelope }
    }

    fn broadcast(&mut self, kind: MessageKind) -> Vec<Outbound> {
        let ids: Vec<u32> = self.sensors.keys().copied().collect();
        ids.into_iter().map(|id| self.send(id, kind.clone())).collect()
    }

    pub fn step(&mut self, event: CentralEvent) -> Result<Vec<Outbound>, ProtocolError> {
        match event {
            CentralEvent::Timer { .. } => Ok(Vec::new()),
            CentralEvent::Operator(OperatorCommand::Start) => Ok(self.broadcast(MessageKind::Start)),
            CentralEvent::Operator(OperatorCommand::Stop) => Ok(self.broadcast(MessageKind::Stop)),
            CentralEvent::Operator(OperatorCommand::Plan(params)) => self.plan(&params),
            CentralEvent::Inbound(env) => self.inbound(env),
        }
    }

    fn plan(&mut self, params: &GaParams) -> Result<Vec<Outbound>, ProtocolError> {
        params.validate().map_err(|e| ProtocolError::Plan(e.to_string()))?;
        let nodes: Vec<SensorNode> =
            self.sensors.iter().map(|(id, v)| SensorNode::new(*id, v.position, 1.0)).collect();
        let assignment = assign_dominances(&nodes, &self.points).map_err(|e| ProtocolError::Plan(e.to_string()))?;
        let by_id: BTreeMap<u32, MeasurementPoint> = self.points.iter().map(|p| (p.id, p.clone())).collect();

        let mut routes = BTreeMap::new();
        for (sensor, ids) in &assignment.per_sensor {
            if ids.is_empty() {
                continue;
            }
            let pts: Vec<MeasurementPoint> = ids.iter().map(|id| by_id[id].clone()).collect();
            let ga = GaParams { seed: derive_seed(params.seed, u64::from(*sensor)), ..params.clone() };
            let start = self.sensors[sensor].position;
            let planned = optimize_route(start, &pts, &ga).map_err(|e| ProtocolError::Plan(e.to_string()))?;
            routes.insert(*sensor, planned);
        }

        let mut out = Vec::new();
        let ids: Vec<u32> = self.sensors.keys().copied().collect();
        for id in ids {
            match routes.get(&id) {
                Some((route, _)) => {
                    let order: Vec<Waypoint> = route
                        .order
                        .iter()
                        .map(|pid| {
                            let p = by_id[pid].position;
                            Waypoint { id: *pid, x: p.x, y: p.y }
                        })
                        .collect();
                    let view = self.sensors.get_mut(&id).expect("known sensor");
                    view.assigned = route.order.clone();
                    view.collected = false;
                    out.push(self.send(id, MessageKind::Vector { order }));
                }
                None => {
                    let view = self.sensors.get_mut(&id).expect("known sensor");
                    view.assigned.clear();
                    view.collected = true;
                    out.push(self.send(id, MessageKind::Stop));
                }
            }
        }
        self.routes = routes;
        Ok(out)
    }

    fn inbound(&mut self, env: MessageEnvelope) -> Result<Vec<Outbound>, ProtocolError> {
        env.check()?;
        let Sender::Sensor(from) = env.sender else {
            return Err(ProtocolError::Invalid("central received a central message".into()));
        };
        if !self.sensors.contains_key(&from) {
            return Err(ProtocolError::UnknownSensor(from));
        }
        // reject before touching any state
        match &env.kind {
            MessageKind::Start
            | MessageKind::Stop
            | MessageKind::MoveTo { .. }
            | MessageKind::GetMeasure { .. }
            | MessageKind::Vector { .. }
            | MessageKind::CellInfoReply { .. } => {
                return Err(ProtocolError::Invalid(format!("{} is not a sensor message", env.kind.tag())));
            }
            MessageKind::CellInfo { cell_id } => {
                if !self.base_stations.iter().any(|b| b.cell_id == *cell_id) {
                    return Err(ProtocolError::UnknownCell(*cell_id));
                }
            }
            _ => {}
        }
        let view = self.sensors.get_mut(&from).expect("checked above");
        if !view.dedup.admit(env.msg_id) {
            return Ok(Vec::new());
        }

        match env.kind {
            MessageKind::Ack { .. } => Ok(Vec::new()),
            MessageKind::Position { at, .. } => {
                view.position = at;
                view.closest = closest(at, &self.base_stations);
                Ok(Vec::new())
            }
            MessageKind::ReadyToSend { .. } => {
                Ok(vec![self.send(from, MessageKind::GetMeasure { scope: MeasureScope::Complete })])
            }
            MessageKind::CellInfo { cell_id } => {
                let station = self.base_stations.iter().find(|b| b.cell_id == cell_id).expect("checked above").clone();
                Ok(vec![self.send(from, MessageKind::CellInfoReply { station })])
            }
            MessageKind::MeasureData { records } => {
                for r in records {
                    self.records.insert(r.point_id, r);
                }
                let view = &self.sensors[&from];
                let done = !view.collected && view.assigned.iter().all(|p| self.records.contains_key(p));
                if done {
                    self.sensors.get_mut(&from).expect("known sensor").collected = true;
                    Ok(vec![self.send(from, MessageKind::Stop)])
                } else {
                    Ok(Vec::new())
                }
            }
            _ => unreachable!("central kinds rejected above"),
        }
    }
}
