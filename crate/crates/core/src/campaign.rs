//! Campaign domain types, planar geometry and config loading.
//!
//! All coordinates are planar meters in a local tangent plane whose origin
//! is the south-west corner of the campaign area.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planar position in meters (easting, northing).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        euclidean_distance(*self, *other)
    }
}

/// Euclidean distance between two planar points.
///
/// Computed as `sqrt(dx*dx + dy*dy)` so results are bit-identical on every
/// IEEE-754 platform (`hypot` is not guaranteed to be).
pub fn euclidean_distance(a: Point2D, b: Point2D) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// A radio parameter a sensor can be asked to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellField {
    CellId,
    TimingAdvance,
    Mcc,
    Mnc,
    Lac,
    Rssi,
    RssiDelta,
    Ber,
    BerDelta,
    Bcc,
    Btcc,
    Ncc,
}

impl CellField {
    pub const ALL: [CellField; 12] = [
        CellField::CellId,
        CellField::TimingAdvance,
        CellField::Mcc,
        CellField::Mnc,
        CellField::Lac,
        CellField::Rssi,
        CellField::RssiDelta,
        CellField::Ber,
        CellField::BerDelta,
        CellField::Bcc,
        CellField::Btcc,
        CellField::Ncc,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPoint {
    pub id: u32,
    pub position: Point2D,
    pub target_bs: Option<u32>,
    pub required_fields: BTreeSet<CellField>,
}

impl MeasurementPoint {
    /// A point requiring every cell field, not bound to a base station.
    pub fn new(id: u32, position: Point2D) -> Self {
        Self {
            id,
            position,
            target_bs: None,
            required_fields: CellField::ALL.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub id: u32,
    pub position: Point2D,
    /// Meters per second.
    pub speed: f64,
}

impl SensorNode {
    pub fn new(id: u32, position: Point2D, speed: f64) -> Self {
        Self { id, position, speed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: u32,
    pub position: Point2D,
    pub cell_id: u32,
    pub antenna: String,
}

/// An ordered open path for one sensor, starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub start: Point2D,
    /// Measurement point ids in visiting order.
    pub order: Vec<u32>,
    /// Path length in meters.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub width: f64,
    pub height: f64,
    pub sensors: Vec<SensorNode>,
    pub points: Vec<MeasurementPoint>,
    pub base_stations: Vec<BaseStation>,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampaignError {
    #[error("SchemaError: {0}")]
    Schema(String),
    #[error("BoundsError: {what} at ({x}, {y}) lies outside the {width} x {height} area")]
    Bounds {
        what: String,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    #[error("DuplicateId: {kind} {id}")]
    DuplicateId { kind: &'static str, id: u32 },
    #[error("DuplicateVisit: point {0} appears more than once")]
    DuplicateVisit(u32),
}

impl CampaignError {
    /// Short error-kind name, as printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            CampaignError::Schema(_) => "SchemaError",
            CampaignError::Bounds { .. } => "BoundsError",
            CampaignError::DuplicateId { .. } => "DuplicateId",
            CampaignError::DuplicateVisit(_) => "DuplicateVisit",
        }
    }
}

/// Length of the open path starting at `start` and visiting `order` in turn.
/// There is no return leg.
pub fn path_length(start: Point2D, order: &[MeasurementPoint]) -> Result<f64, CampaignError> {
    let mut seen = HashSet::with_capacity(order.len());
    let mut total = 0.0;
    let mut prev = start;
    for p in order {
        if !seen.insert(p.id) {
            return Err(CampaignError::DuplicateVisit(p.id));
        }
        total += euclidean_distance(prev, p.position);
        prev = p.position;
    }
    Ok(total)
}

/// Converts a speed in km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

pub fn mps_to_kmh(mps: f64) -> f64 {
    mps * 3.6
}

// Wire shape of the JSON configuration document.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaDoc {
    width_m: f64,
    height_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorDoc {
    id: u32,
    x: f64,
    y: f64,
    speed_kmh: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    id: u32,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_bs: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseStationDoc {
    id: u32,
    x: f64,
    y: f64,
    cell_id: u32,
    antenna: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignDoc {
    area: AreaDoc,
    seed: u64,
    sensors: Vec<SensorDoc>,
    points: Vec<PointDoc>,
    base_stations: Vec<BaseStationDoc>,
}

/// Parses and validates a JSON campaign document.
pub fn load_campaign(text: &str) -> Result<Campaign, CampaignError> {
    let doc: CampaignDoc =
        serde_json::from_str(text).map_err(|e| CampaignError::Schema(e.to_string()))?;
    let campaign = Campaign {
        width: doc.area.width_m,
        height: doc.area.height_m,
        seed: doc.seed,
        sensors: doc
            .sensors
            .into_iter()
            .map(|s| SensorNode::new(s.id, Point2D::new(s.x, s.y), kmh_to_mps(s.speed_kmh)))
            .collect(),
        points: doc
            .points
            .into_iter()
            .map(|p| {
                let mut mp = MeasurementPoint::new(p.id, Point2D::new(p.x, p.y));
                mp.target_bs = p.target_bs;
                mp
            })
            .collect(),
        base_stations: doc
            .base_stations
            .into_iter()
            .map(|b| BaseStation {
                id: b.id,
                position: Point2D::new(b.x, b.y),
                cell_id: b.cell_id,
                antenna: b.antenna,
            })
            .collect(),
    };
    campaign.validate()?;
    Ok(campaign)
}

impl Campaign {
    /// Checks every campaign invariant.
    pub fn validate(&self) -> Result<(), CampaignError> {
        if !(self.width.is_finite() && self.width > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return Err(CampaignError::Schema(format!(
                "area must be positive and finite, got {} x {}",
                self.width, self.height
            )));
        }
        if self.sensors.is_empty() {
            return Err(CampaignError::Schema("at least one sensor is required".into()));
        }

        let mut ids = HashSet::new();
        for s in &self.sensors {
            if !ids.insert(s.id) {
                return Err(CampaignError::DuplicateId { kind: "sensor", id: s.id });
            }
            if !(s.speed.is_finite() && s.speed > 0.0) {
                return Err(CampaignError::Schema(format!(
                    "sensor {} speed must be positive, got {} m/s",
                    s.id, s.speed
                )));
            }
            self.check_inside(&format!("sensor {}", s.id), s.position)?;
        }

        let mut bs_ids = HashSet::new();
        let mut cell_ids = HashSet::new();
        for b in &self.base_stations {
            if !bs_ids.insert(b.id) {
                return Err(CampaignError::DuplicateId { kind: "base station", id: b.id });
            }
            if !cell_ids.insert(b.cell_id) {
                return Err(CampaignError::DuplicateId { kind: "cell", id: b.cell_id });
            }
            self.check_inside(&format!("base station {}", b.id), b.position)?;
        }

        let mut point_ids = HashSet::new();
        for p in &self.points {
            if !point_ids.insert(p.id) {
                return Err(CampaignError::DuplicateId { kind: "point", id: p.id });
            }
            self.check_inside(&format!("point {}", p.id), p.position)?;
            if let Some(bs) = p.target_bs {
                if !bs_ids.contains(&bs) {
                    return Err(CampaignError::Schema(format!(
                        "point {} targets unknown base station {}",
                        p.id, bs
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2D) -> bool {
        p.is_finite() && (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn check_inside(&self, what: &str, p: Point2D) -> Result<(), CampaignError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(CampaignError::Bounds {
                what: what.to_string(),
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn sensor(&self, id: u32) -> Option<&SensorNode> {
        self.sensors.iter().find(|s| s.id == id)
    }

    /// Copy of this campaign keeping only the lowest-id sensor.
    pub fn single_sensor(&self) -> Campaign {
        let mut c = self.clone();
        if let Some(first) = self.sensors.iter().min_by_key(|s| s.id) {
            c.sensors = vec![first.clone()];
        }
        c
    }

    /// Serializes back to the JSON configuration document.
    pub fn to_json(&self) -> String {
        let doc = CampaignDoc {
            area: AreaDoc { width_m: self.width, height_m: self.height },
            seed: self.seed,
            sensors: self
                .sensors
                .iter()
                .map(|s| SensorDoc {
                    id: s.id,
                    x: s.position.x,
                    y: s.position.y,
                    speed_kmh: mps_to_kmh(s.speed),
                })
                .collect(),
            points: self
                .points
                .iter()
                .map(|p| PointDoc { id: p.id, x: p.position.x, y: p.position.y, target_bs: p.target_bs })
                .collect(),
            base_stations: self
                .base_stations
                .iter()
                .map(|b| BaseStationDoc {
                    id: b.id,
                    x: b.position.x,
                    y: b.position.y,
                    cell_id: b.cell_id,
                    antenna: b.antenna.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("campaign document serializes")
    }
}
