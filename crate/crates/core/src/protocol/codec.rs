//! Line-delimited JSON wire format.
//!
//! One envelope per line:
//!
//! ```text
//! {"id":<u64>,"from":"central"|"sensor/<u32>","bs":{"x":<f64>,"y":<f64>,"cid":<u32>},"kind":"<KIND>",...}\n
//! ```
//!
//! `bs` is present if and only if the sender is the central node. Kind
//! fields follow `kind`:
//!
//! | kind              | fields                                         |
//! |-------------------|------------------------------------------------|
//! | `START`, `STOP`   | none                                           |
//! | `MOVE_TO`         | `target:{x,y}`                                 |
//! | `GET_MEASURE`     | `scope:"COMPLETE"` or `scope:"PARTIAL",since`  |
//! | `VECTOR`          | `order:[{id,x,y},...]` (non-empty)             |
//! | `READY_TO_SEND`   | `count`                                        |
//! | `CELL_INFO`       | `cell_id`                                      |
//! | `POSITION`        | `at:{x,y},time`                                |
//! | `ACK`             | `of`                                           |
//! | `MEASURE_DATA`    | `records:[...]`                                |
//! | `CELL_INFO_REPLY` | `station:{id,position:{x,y},cell_id,antenna}`  |
//!
//! Floats are written in shortest round-trip form.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{ClosestBs, MeasureScope, MessageEnvelope, MessageKind, Sender};
use crate::campaign::Point2D;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("ParseError at byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

fn point(p: Point2D) -> Value {
    json!({"x": p.x, "y": p.y})
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("protocol payloads serialize")
}

/// Encodes an envelope as one newline-terminated line.
pub fn encode(env: &MessageEnvelope) -> String {
    let mut m = Map::new();
    m.insert("id".into(), json!(env.msg_id));
    let from = match env.sender {
        Sender::Central => "central".to_string(),
        Sender::Sensor(id) => format!("sensor/{id}"),
    };
    m.insert("from".into(), Value::String(from));
    if let Some(bs) = env.closest_bs {
        m.insert("bs".into(), json!({"x": bs.position.x, "y": bs.position.y, "cid": bs.cell_id}));
    }
    m.insert("kind".into(), Value::String(env.kind.tag().into()));
    match &env.kind {
        MessageKind::Start | MessageKind::Stop => {}
        MessageKind::MoveTo { target } => {
            m.insert("target".into(), point(*target));
        }
        MessageKind::GetMeasure { scope } => match scope {
            MeasureScope::Complete => {
                m.insert("scope".into(), json!("COMPLETE"));
            }
            MeasureScope::Partial { since } => {
                m.insert("scope".into(), json!("PARTIAL"));
                m.insert("since".into(), json!(since));
            }
        },
        MessageKind::Vector { order } => {
            m.insert("order".into(), to_value(order));
        }
        MessageKind::ReadyToSend { count } => {
            m.insert("count".into(), json!(count));
        }
        MessageKind::CellInfo { cell_id } => {
            m.insert("cell_id".into(), json!(cell_id));
        }
        MessageKind::Position { at, time } => {
            m.insert("at".into(), point(*at));
            m.insert("time".into(), json!(time));
        }
        MessageKind::Ack { of } => {
            m.insert("of".into(), json!(of));
        }
        MessageKind::MeasureData { records } => {
            m.insert("records".into(), to_value(records));
        }
        MessageKind::CellInfoReply { station } => {
            m.insert("station".into(), to_value(station));
        }
    }
    let mut line = Value::Object(m).to_string();
    line.push('\n');
    line
}

struct Fields<'a> {
    line: &'a str,
    map: Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn err(&self, key: &str, reason: impl Into<String>) -> ParseError {
        let offset = self.line.find(&format!("\"{key}\"")).unwrap_or(0);
        ParseError { offset, reason: reason.into() }
    }

    fn take(&mut self, key: &str) -> Result<Value, ParseError> {
        self.map
            .remove(key)
            .ok_or_else(|| ParseError { offset: 0, reason: format!("missing field '{key}'") })
    }

    fn u64(&mut self, key: &str) -> Result<u64, ParseError> {
        let v = self.take(key)?;
        v.as_u64().ok_or_else(|| self.err(key, format!("'{key}' must be an unsigned integer")))
    }

    fn u32(&mut self, key: &str) -> Result<u32, ParseError> {
        let v = self.u64(key)?;
        u32::try_from(v).map_err(|_| self.err(key, format!("'{key}' exceeds u32")))
    }

    fn f64(&mut self, key: &str) -> Result<f64, ParseError> {
        let v = self.take(key)?;
        v.as_f64().ok_or_else(|| self.err(key, format!("'{key}' must be a number")))
    }

    fn str(&mut self, key: &str) -> Result<String, ParseError> {
        match self.take(key)? {
            Value::String(s) => Ok(s),
            _ => Err(self.err(key, format!("'{key}' must be a string"))),
        }
    }

    fn typed<T: DeserializeOwned>(&mut self, key: &str) -> Result<T, ParseError> {
        let v = self.take(key)?;
        serde_json::from_value(v).map_err(|e| self.err(key, format!("'{key}': {e}")))
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(self.err(k, format!("unexpected field '{k}'"))),
        }
    }
}

/// Decodes one line (with or without its trailing newline).
pub fn decode(line: &str) -> Result<MessageEnvelope, ParseError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    let value: Value = serde_json::from_str(body).map_err(|e| ParseError {
        // serde_json reports 1-based line/column; envelopes are single-line
        offset: e.column().saturating_sub(1),
        reason: e.to_string(),
    })?;
    let Value::Object(map) = value else {
        return Err(ParseError { offset: 0, reason: "envelope must be a JSON object".into() });
    };
    let mut f = Fields { line: body, map };

    let msg_id = f.u64("id")?;
    let from = f.str("from")?;
    let sender = if from == "central" {
        Sender::Central
    } else if let Some(id) = from.strip_prefix("sensor/") {
        let id = id
            .parse::<u32>()
            .ok()
            .filter(|_| !id.starts_with('+'))
            .ok_or_else(|| f.err("from", format!("bad sender '{from}'")))?;
        Sender::Sensor(id)
    } else {
        return Err(f.err("from", format!("bad sender '{from}'")));
    };

    let closest_bs = match f.map.remove("bs") {
        None => None,
        Some(Value::Object(bs)) => {
            let mut g = Fields { line: body, map: bs };
            let x = g.f64("x")?;
            let y = g.f64("y")?;
            let cell_id = g.u32("cid")?;
            g.finish()?;
            Some(ClosestBs { position: Point2D::new(x, y), cell_id })
        }
        Some(_) => return Err(f.err("bs", "'bs' must be an object")),
    };
    match (sender.is_central(), closest_bs.is_some()) {
        (true, false) => return Err(f.err("from", "central message lacks 'bs'")),
        (false, true) => return Err(f.err("bs", "sensor message must not carry 'bs'")),
        _ => {}
    }

    let tag = f.str("kind")?;
    let kind = match tag.as_str() {
        "START" => MessageKind::Start,
        "STOP" => MessageKind::Stop,
        "MOVE_TO" => MessageKind::MoveTo { target: f.typed("target")? },
        "GET_MEASURE" => {
            let scope = match f.str("scope")?.as_str() {
                "COMPLETE" => MeasureScope::Complete,
                "PARTIAL" => MeasureScope::Partial { since: f.u64("since")? },
                other => return Err(f.err("scope", format!("unknown scope '{other}'"))),
            };
            MessageKind::GetMeasure { scope }
        }
        "VECTOR" => {
            let order: Vec<super::Waypoint> = f.typed("order")?;
            if order.is_empty() {
                return Err(f.err("order", "VECTOR order must not be empty"));
            }
            MessageKind::Vector { order }
        }
        "READY_TO_SEND" => MessageKind::ReadyToSend { count: f.u64("count")? },
        "CELL_INFO" => MessageKind::CellInfo { cell_id: f.u32("cell_id")? },
        "POSITION" => MessageKind::Position { at: f.typed("at")?, time: f.f64("time")? },
        "ACK" => MessageKind::Ack { of: f.u64("of")? },
        "MEASURE_DATA" => MessageKind::MeasureData { records: f.typed("records")? },
        "CELL_INFO_REPLY" => MessageKind::CellInfoReply { station: f.typed("station")? },
        other => return Err(f.err("kind", format!("unknown kind '{other}'"))),
    };
    f.finish()?;
    Ok(MessageEnvelope { msg_id, sender, closest_bs, kind })
}
