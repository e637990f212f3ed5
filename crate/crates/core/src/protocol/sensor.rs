//! Sensor node state machine.

use std::collections::{BTreeSet, VecDeque};

use super::{ClosestBs, DedupWindow, MeasureScope, MeasurementRecord, MessageEnvelope, MessageKind, Sender, Waypoint};
use crate::campaign::{Point2D, SensorNode};
use crate::telemetry::CellMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorMode {
    Idle,
    Measuring,
}

/// One step of the motion plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanStep {
    /// Go to a measurement point and measure there.
    Measure(Waypoint),
    /// Go to a position without measuring.
    Move(Point2D),
}

impl PlanStep {
    pub fn target(&self) -> Point2D {
        match self {
            PlanStep::Measure(w) => w.position(),
            PlanStep::Move(p) => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorEvent {
    Inbound(MessageEnvelope),
    /// Position-report tick.
    Timer { time: f64, position: Point2D },
    /// The sensor reached the target of the head plan step.
    Arrived { time: f64, position: Point2D },
    /// The modem finished sampling at the head measurement point.
    MeasurementComplete { time: f64, cell: CellMeasurement },
}

#[derive(Debug, Clone)]
pub struct SensorState {
    node: SensorNode,
    mode: SensorMode,
    plan: VecDeque<PlanStep>,
    store: Vec<MeasurementRecord>,
    dedup: DedupWindow,
    next_msg_id: u64,
    known_cells: BTreeSet<u32>,
    serving_bs: Option<ClosestBs>,
}

impl SensorState {
    pub fn new(node: SensorNode) -> Self {
        SensorState {
            node,
            mode: SensorMode::Idle,
            plan: VecDeque::new(),
            store: Vec::new(),
            dedup: DedupWindow::default(),
            next_msg_id: 1,
            known_cells: BTreeSet::new(),
            serving_bs: None,
        }
    }

    pub fn id(&self) -> u32 {
        self.node.id
    }

    pub fn node(&self) -> &SensorNode {
        &self.node
    }

    pub fn mode(&self) -> SensorMode {
        self.mode
    }

    pub fn plan(&self) -> &VecDeque<PlanStep> {
        &self.plan
    }

    pub fn store(&self) -> &[MeasurementRecord] {
        &self.store
    }

    /// Closest base station announced by the last central message.
    pub fn serving_bs(&self) -> Option<ClosestBs> {
        self.serving_bs
    }

    /// Moves the node without any protocol side effect, for drivers that
    /// interrupt a leg part way.
    pub fn set_position(&mut self, position: Point2D) {
        self.node.position = position;
    }

    fn send(&mut self, kind: MessageKind) -> MessageEnvelope {
        let env = MessageEnvelope { msg_id: self.next_msg_id, sender: Sender::Sensor(self.node.id), closest_bs: None, kind };
        self.next_msg_id += 1;
        env
    }

    pub fn step(&mut self, event: SensorEvent) -> Vec<MessageEnvelope> {
        match event {
            SensorEvent::Inbound(env) => self.inbound(env),
            SensorEvent::Timer { time, position } => {
                self.node.position = position;
                vec![self.send(MessageKind::Position { at: position, time })]
            }
            SensorEvent::Arrived { position, .. } => {
                self.node.position = position;
                if let Some(PlanStep::Move(_)) = self.plan.front() {
                    self.plan.pop_front();
                }
                Vec::new()
            }
            SensorEvent::MeasurementComplete { time, cell } => self.measured(time, cell),
        }
    }

    fn inbound(&mut self, env: MessageEnvelope) -> Vec<MessageEnvelope> {
        if !env.sender.is_central() || env.check().is_err() {
            return Vec::new();
        }
        let ack = self.send(MessageKind::Ack { of: env.msg_id });
        if !self.dedup.admit(env.msg_id) {
            return vec![ack];
        }
        self.serving_bs = env.closest_bs;
        let mut out = vec![ack];
        match env.kind {
            MessageKind::Start => self.mode = SensorMode::Measuring,
            MessageKind::Stop => {
                self.mode = SensorMode::Idle;
                self.plan.clear();
            }
            MessageKind::Vector { order } if self.mode == SensorMode::Measuring => {
                self.plan = order.into_iter().map(PlanStep::Measure).collect();
            }
            MessageKind::MoveTo { target } if self.mode == SensorMode::Measuring => {
                self.plan = VecDeque::from([PlanStep::Move(target)]);
            }
            MessageKind::GetMeasure { scope } => {
                let records = match scope {
                    MeasureScope::Complete => self.store.clone(),
                    MeasureScope::Partial { since } => self.store.iter().filter(|r| r.seq > since).cloned().collect(),
                };
                out.push(self.send(MessageKind::MeasureData { records }));
            }
            MessageKind::CellInfoReply { station } => {
                self.known_cells.insert(station.cell_id);
            }
            _ => {}
        }
        out
    }

    fn measured(&mut self, time: f64, cell: CellMeasurement) -> Vec<MessageEnvelope> {
        if self.mode != SensorMode::Measuring {
            return Vec::new();
        }
        let Some(PlanStep::Measure(w)) = self.plan.front().copied() else {
            return Vec::new();
        };
        self.plan.pop_front();
        self.node.position = w.position();
        let cell = cell.with_deltas(self.store.last().map(|r| &r.cell));
        let cell_id = cell.cell_id;
        self.store.push(MeasurementRecord {
            seq: self.store.len() as u64 + 1,
            point_id: w.id,
            position: w.position(),
            time,
            cell,
        });
        let mut out = Vec::new();
        if self.known_cells.insert(cell_id) {
            out.push(self.send(MessageKind::CellInfo { cell_id }));
        }
        if self.plan.is_empty() {
            out.push(self.send(MessageKind::ReadyToSend { count: self.store.len() as u64 }));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::BaseStation;
    use crate::telemetry::simulate_cell;

    fn central(msg_id: u64, kind: MessageKind) -> SensorEvent {
        SensorEvent::Inbound(MessageEnvelope {
            msg_id,
            sender: Sender::Central,
            closest_bs: Some(ClosestBs { position: Point2D::default(), cell_id: 1 }),
            kind,
        })
    }

    fn cell(x: f64) -> CellMeasurement {
        let table = [BaseStation { id: 1, position: Point2D::default(), cell_id: 1, antenna: "omni".into() }];
        simulate_cell(Point2D::new(x, 0.0), &table, 4).unwrap()
    }

    fn sensor() -> SensorState {
        SensorState::new(SensorNode::new(3, Point2D::default(), 8.0))
    }

    fn waypoints(n: u32) -> Vec<Waypoint> {
        (1..=n).map(|i| Waypoint { id: 10 + i, x: 100.0 * f64::from(i), y: 0.0 }).collect()
    }

    #[test]
    fn start_enters_measuring_and_acks() {
        let mut s = sensor();
        let out = s.step(central(7, MessageKind::Start));
        assert_eq!(s.mode(), SensorMode::Measuring);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, MessageKind::Ack { of: 7 });
        assert_eq!(out[0].sender, Sender::Sensor(3));
        assert!(out[0].closest_bs.is_none());
    }

    #[test]
    fn vector_then_measurements() {
        let mut s = sensor();
        s.step(central(1, MessageKind::Start));
        s.step(central(2, MessageKind::Vector { order: waypoints(3) }));
        let mut last = Vec::new();
        for i in 1..=3 {
            last = s.step(SensorEvent::MeasurementComplete { time: f64::from(i), cell: cell(100.0 * f64::from(i)) });
        }
        let ids: Vec<u32> = s.store().iter().map(|r| r.point_id).collect();
        assert_eq!(ids, vec![11, 12, 13]);
        assert_eq!(last.last().unwrap().kind, MessageKind::ReadyToSend { count: 3 });
        let r = s.store();
        assert_eq!(r[0].cell.rssi_delta, None);
        assert_eq!(r[1].cell.rssi_delta, Some(r[1].cell.rssi_dbm.unwrap() - r[0].cell.rssi_dbm.unwrap()));
    }

    #[test]
    fn partial_measure_filters_by_sequence() {
        let mut s = sensor();
        s.step(central(1, MessageKind::Start));
        s.step(central(2, MessageKind::Vector { order: waypoints(5) }));
        for i in 1..=5 {
            s.step(SensorEvent::MeasurementComplete { time: f64::from(i), cell: cell(100.0) });
        }
        let out = s.step(central(3, MessageKind::GetMeasure { scope: MeasureScope::Partial { since: 3 } }));
        let MessageKind::MeasureData { records } = &out[1].kind else { panic!("expected MEASURE_DATA") };
        assert_eq!(records.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![4, 5]);
        let out = s.step(central(4, MessageKind::GetMeasure { scope: MeasureScope::Complete }));
        let MessageKind::MeasureData { records } = &out[1].kind else { panic!("expected MEASURE_DATA") };
        assert_eq!(records.len(), 5);
    }

    #[test]
    fn idle_ignores_vector_but_acks() {
        let mut s = sensor();
        let out = s.step(central(1, MessageKind::Vector { order: waypoints(2) }));
        assert_eq!(out.len(), 1);
        assert!(s.plan().is_empty());
        assert!(s.step(SensorEvent::MeasurementComplete { time: 1.0, cell: cell(1.0) }).is_empty());
    }

    #[test]
    fn duplicate_is_reacked_only() {
        let mut s = sensor();
        s.step(central(1, MessageKind::Start));
        s.step(central(2, MessageKind::Vector { order: waypoints(2) }));
        s.step(SensorEvent::MeasurementComplete { time: 1.0, cell: cell(100.0) });
        let out = s.step(central(2, MessageKind::Vector { order: waypoints(2) }));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, MessageKind::Ack { of: 2 });
        assert_eq!(s.plan().len(), 1);
    }

    #[test]
    fn stop_clears_plan() {
        let mut s = sensor();
        s.step(central(1, MessageKind::Start));
        s.step(central(2, MessageKind::MoveTo { target: Point2D::new(5.0, 5.0) }));
        assert_eq!(s.plan().front().unwrap().target(), Point2D::new(5.0, 5.0));
        s.step(central(3, MessageKind::Stop));
        assert_eq!(s.mode(), SensorMode::Idle);
        assert!(s.plan().is_empty());
    }

    #[test]
    fn timer_reports_position() {
        let mut s = sensor();
        let out = s.step(SensorEvent::Timer { time: 10.0, position: Point2D::new(1.0, 2.0) });
        assert_eq!(out[0].kind, MessageKind::Position { at: Point2D::new(1.0, 2.0), time: 10.0 });
    }

    #[test]
    fn new_cell_triggers_cell_info() {
        let mut s = sensor();
        s.step(central(1, MessageKind::Start));
        s.step(central(2, MessageKind::Vector { order: waypoints(2) }));
        let out = s.step(SensorEvent::MeasurementComplete { time: 1.0, cell: cell(100.0) });
        assert_eq!(out[0].kind, MessageKind::CellInfo { cell_id: 1 });
        let out = s.step(SensorEvent::MeasurementComplete { time: 2.0, cell: cell(200.0) });
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind.tag(), "READY_TO_SEND");
    }
}
