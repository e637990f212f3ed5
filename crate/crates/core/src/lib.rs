//! Planning and simulation toolkit for cellular network measurement campaigns.
//!
//! A campaign is a set of measurement points to be visited by `k` mobile
//! sensor nodes under the control of a central node. The crate provides:
//!
//! - [`campaign`]: shared domain types, planar geometry and config loading
//! - [`dominance`]: nearest-sensor (Voronoi) partitioning of measurement points
//! - [`route`]: genetic-algorithm ordering of a sensor's points into a short
//!   open path, plus an exhaustive oracle for small instances
//! - [`protocol`]: the line-delimited JSON message codec and the central and
//!   sensor state machines
//! - [`telemetry`]: NMEA, `+CSQ` and SIM-AT cell-block parsers and a
//!   deterministic simulated modem
//! - [`sim`]: a deterministic discrete-event simulator running full campaigns
//! - [`coverage`]: coverage rasterization and demand-map verification points

pub mod campaign;
pub mod coverage;
pub mod dominance;
pub mod protocol;
pub mod rng;
pub mod route;
pub mod sim;
pub mod telemetry;

pub use campaign::{
    euclidean_distance, load_campaign, path_length, BaseStation, Campaign, CampaignError,
    MeasurementPoint, Point2D, Route, SensorNode,
};
