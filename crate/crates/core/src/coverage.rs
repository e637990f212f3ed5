//! Coverage cartography and demand-map correction.
//!
//! Grids are row-major. Row 0 is the row at `origin.y`, column 0 the column
//! at `origin.x`; a grid spans `cols * cell_m` by `rows * cell_m` meters and
//! points on the far edges belong to the last row or column.
//!
//! Mask files (demand maps, predicted coverage) are CSV:
//!
//! ```text
//! cell_m,250
//! origin_x,0
//! origin_y,0
//! 0,1,1
//! 1,1,0
//! ```
//!
//! one line per row starting with row 0, cells `0`/`1` (or `false`/`true`).

use serde::Serialize;
use thiserror::Error;

use crate::campaign::{MeasurementPoint, Point2D};
use crate::protocol::MeasurementRecord;

/// Default grid resolution in meters.
pub const DEFAULT_CELL_M: f64 = 250.0;

/// Signal levels mapped to the ends of the grayscale range.
pub const PGM_FLOOR_DBM: f64 = -113.0;
pub const PGM_CEIL_DBM: f64 = -51.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("OutOfExtent: ({x}, {y}) lies outside the grid")]
    OutOfExtent { x: f64, y: f64 },
    #[error("GeometryMismatch: {0}")]
    GeometryMismatch(String),
    #[error("UnknownCell: ({x}, {y}) is not a demand cell")]
    UnknownCell { x: f64, y: f64 },
    #[error("MalformedGrid: {0}")]
    Malformed(String),
}

impl CoverageError {
    pub fn name(&self) -> &'static str {
        match self {
            CoverageError::OutOfExtent { .. } => "OutOfExtent",
            CoverageError::GeometryMismatch(_) => "GeometryMismatch",
            CoverageError::UnknownCell { .. } => "UnknownCell",
            CoverageError::Malformed(_) => "MalformedGrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridGeometry {
    pub cell_m: f64,
    pub origin: Point2D,
    pub cols: usize,
    pub rows: usize,
}

impl GridGeometry {
    pub fn new(cell_m: f64, origin: Point2D, cols: usize, rows: usize) -> Result<Self, CoverageError> {
        if !(cell_m.is_finite() && cell_m > 0.0) || !origin.is_finite() || cols == 0 || rows == 0 {
            return Err(CoverageError::Malformed(format!(
                "invalid geometry: cell {cell_m} m, {cols} x {rows} cells"
            )));
        }
        Ok(GridGeometry { cell_m, origin, cols, rows })
    }

    /// Smallest grid anchored at (0, 0) covering a `width` x `height` area.
    pub fn covering(width: f64, height: f64, cell_m: f64) -> Result<Self, CoverageError> {
        let cols = (width / cell_m).ceil().max(1.0) as usize;
        let rows = (height / cell_m).ceil().max(1.0) as usize;
        GridGeometry::new(cell_m, Point2D::new(0.0, 0.0), cols, rows)
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of the cell holding `p`, if inside the extent.
    pub fn cell_of(&self, p: Point2D) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_m;
        let fy = (p.y - self.origin.y) / self.cell_m;
        if !(fx.is_finite() && fy.is_finite()) || fx < 0.0 || fy < 0.0 {
            return None;
        }
        if fx > self.cols as f64 || fy > self.rows as f64 {
            return None;
        }
        let col = (fx.floor() as usize).min(self.cols - 1);
        let row = (fy.floor() as usize).min(self.rows - 1);
        Some((row, col))
    }

    pub fn center(&self, row: usize, col: usize) -> Point2D {
        Point2D::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_m,
            self.origin.y + (row as f64 + 0.5) * self.cell_m,
        )
    }

    fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Mean signal level per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageGrid {
    pub geometry: GridGeometry,
    /// Mean dBm per cell, row-major; `None` where no sample fell.
    pub values: Vec<Option<f64>>,
    pub counts: Vec<u32>,
}

/// Averages the known `rssi_dbm` of `records` per cell. Records with an
/// unknown level are located but not counted.
pub fn rasterize(records: &[MeasurementRecord], geometry: GridGeometry) -> Result<CoverageGrid, CoverageError> {
    let mut sums = vec![0i64; geometry.len()];
    let mut counts = vec![0u32; geometry.len()];
    for r in records {
        let (row, col) = geometry
            .cell_of(r.position)
            .ok_or(CoverageError::OutOfExtent { x: r.position.x, y: r.position.y })?;
        if let Some(rssi) = r.cell.rssi_dbm {
            let i = geometry.index(row, col);
            sums[i] += i64::from(rssi);
            counts[i] += 1;
        }
    }
    // integer sums make the mean independent of record order
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { Some(*s as f64 / f64::from(*c)) } else { None })
        .collect();
    Ok(CoverageGrid { geometry, values, counts })
}

fn level_to_gray(v: f64) -> u8 {
    let f = (v - PGM_FLOOR_DBM) / (PGM_CEIL_DBM - PGM_FLOOR_DBM);
    (f * 255.0).round().clamp(0.0, 255.0) as u8
}

fn pgm(geometry: &GridGeometry, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", geometry.cols, geometry.rows).into_bytes();
    out.extend(pixels);
    out
}

impl CoverageGrid {
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[self.geometry.index(row, col)]
    }

    /// CSV matrix of mean levels, one line per row, empty fields for cells
    /// without samples.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.geometry.cols) {
            let line: Vec<String> = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Binary PGM: -113 dBm maps to 0, -51 dBm to 255, empty cells to 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm(&self.geometry, self.values.iter().map(|v| v.map(level_to_gray).unwrap_or(0)))
    }

    /// Binary PGM mask: 255 where the cell holds samples, 0 elsewhere.
    pub fn mask_pgm(&self) -> Vec<u8> {
        pgm(&self.geometry, self.counts.iter().map(|c| if *c > 0 { 255 } else { 0 }))
    }
}

/// Boolean raster sharing a grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub geometry: GridGeometry,
    pub cells: Vec<bool>,
}

/// Cells with service demand.
pub type DemandNodeMap = Mask;
/// Cells an external prediction considers covered.
pub type PredictedCoverage = Mask;

impl Mask {
    pub fn new(geometry: GridGeometry) -> Self {
        Mask { cells: vec![false; geometry.len()], geometry }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[self.geometry.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        let i = self.geometry.index(row, col);
        self.cells[i] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn parse_csv(text: &str) -> Result<Mask, CoverageError> {
        let bad = |line: usize, msg: String| CoverageError::Malformed(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = [0.0f64; 3];
        for (slot, key) in header.iter_mut().zip(["cell_m", "origin_x", "origin_y"]) {
            let (n, line) = lines.next().ok_or_else(|| bad(0, format!("missing '{key}' header")))?;
            let (k, v) = line.split_once(',').ok_or_else(|| bad(n + 1, format!("expected '{key},<value>'")))?;
            if k.trim() != key {
                return Err(bad(n + 1, format!("expected '{key}', found '{}'", k.trim())));
            }
            *slot = v.trim().parse().map_err(|_| bad(n + 1, format!("bad {key} value '{}'", v.trim())))?;
        }
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (n, line) in lines {
            let row: Vec<bool> = line
                .split(',')
                .map(|f| match f.trim() {
                    "0" | "false" => Ok(false),
                    "1" | "true" => Ok(true),
                    other => Err(bad(n + 1, format!("bad cell '{other}'"))),
                })
                .collect::<Result<_, _>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(bad(n + 1, format!("row has {} cells, expected {c}", row.len())));
                }
                _ => {}
            }
            cells.extend(row);
            rows += 1;
        }
        let geometry = GridGeometry::new(header[0], Point2D::new(header[1], header[2]), cols.unwrap_or(0), rows)?;
        Ok(Mask { geometry, cells })
    }

    pub fn to_csv(&self) -> String {
        let g = &self.geometry;
        let mut out = format!("cell_m,{}\norigin_x,{}\norigin_y,{}\n", g.cell_m, g.origin.x, g.origin.y);
        for row in self.cells.chunks(g.cols) {
            let line: Vec<&str> = row.iter().map(|c| if *c { "1" } else { "0" }).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn same_geometry(a: &Mask, b: &Mask) -> Result<(), CoverageError> {
    if a.geometry == b.geometry {
        Ok(())
    } else {
        Err(CoverageError::GeometryMismatch(format!("{:?} vs {:?}", a.geometry, b.geometry)))
    }
}

/// Centers of the demand cells on the frontier of predicted coverage: the
/// cell is covered and at least one of its in-grid 4-neighbors is not.
/// Returned in row-major order with ids `1..`.
pub fn select_verification_points(
    pred: &PredictedCoverage,
    demand: &DemandNodeMap,
) -> Result<Vec<MeasurementPoint>, CoverageError> {
    same_geometry(pred, demand)?;
    let g = pred.geometry;
    let mut out = Vec::new();
    for row in 0..g.rows {
        for col in 0..g.cols {
            if !(demand.get(row, col) && pred.get(row, col)) {
                continue;
            }
            let mut neighbors = Vec::with_capacity(4);
            if row > 0 {
                neighbors.push((row - 1, col));
            }
            if row + 1 < g.rows {
                neighbors.push((row + 1, col));
            }
            if col > 0 {
                neighbors.push((row, col - 1));
            }
            if col + 1 < g.cols {
                neighbors.push((row, col + 1));
            }
            if neighbors.iter().any(|(r, c)| !pred.get(*r, *c)) {
                out.push(MeasurementPoint::new(out.len() as u32 + 1, g.center(row, col)));
            }
        }
    }
    Ok(out)
}

/// Clears each demand cell whose verification measurement found coverage.
/// Every result must fall on a demand cell of the input map.
pub fn correct_demand_map(demand: &DemandNodeMap, results: &[(Point2D, bool)]) -> Result<DemandNodeMap, CoverageError> {
    let mut cells = Vec::with_capacity(results.len());
    for (p, covered) in results {
        match demand.geometry.cell_of(*p) {
            Some((r, c)) if demand.get(r, c) => cells.push((r, c, *covered)),
            _ => return Err(CoverageError::UnknownCell { x: p.x, y: p.y }),
        }
    }
    let mut out = demand.clone();
    for (r, c, covered) in cells {
        if covered {
            out.set(r, c, false);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::telemetry::CellMeasurement;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use std::collections::{BTreeMap, BTreeSet};

    fn record(x: f64, y: f64, rssi: Option<i16>) -> MeasurementRecord {
        MeasurementRecord {
            seq: 1,
            point_id: 1,
            position: Point2D::new(x, y),
            time: 0.0,
            cell: CellMeasurement {
                cell_id: 1,
                timing_advance: 0,
                mcc: 208,
                mnc: 10,
                lac: 1,
                rssi_dbm: rssi,
                rssi_delta: None,
                ber_pct: None,
                ber_delta: None,
                bcc: 0,
                btcc: 0,
                ncc: 0,
            },
        }
    }

    fn geo(cols: usize, rows: usize) -> GridGeometry {
        GridGeometry::new(10.0, Point2D::new(0.0, 0.0), cols, rows).unwrap()
    }

    #[test]
    fn one_record_one_cell() {
        let g = rasterize(&[record(15.0, 25.0, Some(-70))], geo(4, 4)).unwrap();
        assert_eq!(g.value(2, 1), Some(-70.0));
        assert_eq!(g.values.iter().filter(|v| v.is_some()).count(), 1);
    }

    #[test]
    fn two_records_mean() {
        let g = rasterize(&[record(1.0, 1.0, Some(-60)), record(2.0, 3.0, Some(-70))], geo(2, 2)).unwrap();
        assert_eq!(g.value(0, 0), Some(-65.0));
        assert_eq!(g.counts[0], 2);
    }

    #[test]
    fn extent_edges() {
        let g = geo(2, 2);
        assert_eq!(g.cell_of(Point2D::new(20.0, 20.0)), Some((1, 1)));
        assert_eq!(g.cell_of(Point2D::new(0.0, 0.0)), Some((0, 0)));
        assert_eq!(g.cell_of(Point2D::new(20.1, 0.0)), None);
        assert_eq!(g.cell_of(Point2D::new(-0.1, 0.0)), None);
        let err = rasterize(&[record(25.0, 1.0, Some(-60))], g).unwrap_err();
        assert_eq!(err.name(), "OutOfExtent");
    }

    #[test]
    fn unknown_rssi_not_counted() {
        let g = rasterize(&[record(1.0, 1.0, None)], geo(1, 1)).unwrap();
        assert_eq!(g.value(0, 0), None);
        assert_eq!(g.counts[0], 0);
    }

    #[test]
    fn random_records_match_group_by_oracle() {
        let mut rng = seeded(11);
        let g = GridGeometry::new(250.0, Point2D::new(1000.0, 2000.0), 20, 12).unwrap();
        let recs: Vec<MeasurementRecord> = (0..1000)
            .map(|_| {
                record(
                    rng.gen_range(1000.0..6000.0),
                    rng.gen_range(2000.0..5000.0),
                    Some(rng.gen_range(-113..=-51)),
                )
            })
            .collect();
        let grid = rasterize(&recs, g).unwrap();
        let mut groups: BTreeMap<(i64, i64), Vec<f64>> = BTreeMap::new();
        for r in &recs {
            let key = (((r.position.y - 2000.0) / 250.0) as i64, ((r.position.x - 1000.0) / 250.0) as i64);
            groups.entry(key).or_default().push(f64::from(r.cell.rssi_dbm.unwrap()));
        }
        for row in 0..12 {
            for col in 0..20 {
                let expect = groups.get(&(row as i64, col as i64)).map(|v| v.iter().sum::<f64>() / v.len() as f64);
                match (grid.value(row, col), expect) {
                    (None, None) => {}
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                    other => panic!("cell ({row},{col}): {other:?}"),
                }
            }
        }
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(rasterize(&shuffled, g).unwrap(), grid);
    }

    #[test]
    fn exports() {
        let g = rasterize(&[record(1.0, 1.0, Some(-51)), record(11.0, 1.0, Some(-113))], geo(3, 1)).unwrap();
        assert_eq!(g.to_csv(), "-51,-113,\n");
        let pgm = g.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&pgm[pgm.len() - 3..], &[255, 0, 0]);
        let mask = g.mask_pgm();
        assert_eq!(&mask[mask.len() - 3..], &[255, 255, 0]);
    }

    fn mask_from(rows: &[&str]) -> Mask {
        let g = geo(rows[0].len(), rows.len());
        let cells = rows.iter().flat_map(|r| r.chars().map(|c| c == '1')).collect();
        Mask { geometry: g, cells }
    }

    #[test]
    fn demand_outside_coverage_selects_nothing() {
        let pred = mask_from(&["110", "110"]);
        let demand = mask_from(&["001", "001"]);
        assert!(select_verification_points(&pred, &demand).unwrap().is_empty());
    }

    #[test]
    fn minimal_frontier() {
        let pred = mask_from(&["10", "11"]);
        let demand = mask_from(&["00", "01"]);
        let pts = select_verification_points(&pred, &demand).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].position, Point2D::new(15.0, 15.0));
        assert_eq!(pts[0].id, 1);
    }

    #[test]
    fn interior_cells_excluded() {
        let pred = mask_from(&["111", "111", "111"]);
        let demand = mask_from(&["111", "111", "111"]);
        // grid edges are not frontier
        assert!(select_verification_points(&pred, &demand).unwrap().is_empty());
    }

    #[test]
    fn geometry_mismatch() {
        let a = mask_from(&["11"]);
        let b = mask_from(&["1", "1"]);
        assert_eq!(select_verification_points(&a, &b).unwrap_err().name(), "GeometryMismatch");
    }

    #[test]
    fn random_masks_match_scan_oracle() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let g = geo(50, 50);
            let pred = Mask { geometry: g, cells: (0..2500).map(|_| rng.gen_bool(0.6)).collect() };
            let demand = Mask { geometry: g, cells: (0..2500).map(|_| rng.gen_bool(0.5)).collect() };
            let got: Vec<Point2D> = select_verification_points(&pred, &demand).unwrap().iter().map(|p| p.position).collect();
            let mut expect = Vec::new();
            for r in 0..50i64 {
                for c in 0..50i64 {
                    let at = |r: i64, c: i64| pred.cells[(r * 50 + c) as usize];
                    if !(demand.cells[(r * 50 + c) as usize] && at(r, c)) {
                        continue;
                    }
                    let frontier = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                        .iter()
                        .any(|&(rr, cc)| (0..50).contains(&rr) && (0..50).contains(&cc) && !at(rr, cc));
                    if frontier {
                        expect.push(Point2D::new(c as f64 * 10.0 + 5.0, r as f64 * 10.0 + 5.0));
                    }
                }
            }
            assert_eq!(got, expect);
            for p in &got {
                let (r, c) = g.cell_of(*p).unwrap();
                assert!(pred.get(r, c) && demand.get(r, c));
            }
        }
    }

    #[test]
    fn correction_rules() {
        let demand = mask_from(&["110", "011"]);
        assert_eq!(correct_demand_map(&demand, &[]).unwrap(), demand);
        let one = correct_demand_map(&demand, &[(Point2D::new(5.0, 5.0), true)]).unwrap();
        assert!(!one.get(0, 0));
        assert_eq!(one.count(), demand.count() - 1);
        let err = correct_demand_map(&demand, &[(Point2D::new(25.0, 5.0), true)]).unwrap_err();
        assert_eq!(err.name(), "UnknownCell");
        assert!(correct_demand_map(&demand, &[(Point2D::new(99.0, 5.0), false)]).is_err());
    }

    #[test]
    fn mixed_batch_matches_set_difference() {
        let mut rng = seeded(9);
        let g = geo(30, 30);
        let demand = Mask { geometry: g, cells: (0..900).map(|_| rng.gen_bool(0.4)).collect() };
        let mut results = Vec::new();
        let mut confirmed = BTreeSet::new();
        for r in 0..30 {
            for c in 0..30 {
                if demand.get(r, c) && rng.gen_bool(0.5) {
                    let covered = rng.gen_bool(0.5);
                    if covered {
                        confirmed.insert((r, c));
                    }
                    results.push((g.center(r, c), covered));
                }
            }
        }
        let out = correct_demand_map(&demand, &results).unwrap();
        let mut diff = BTreeSet::new();
        for r in 0..30 {
            for c in 0..30 {
                assert!(!out.get(r, c) || demand.get(r, c));
                if demand.get(r, c) != out.get(r, c) {
                    diff.insert((r, c));
                }
            }
        }
        assert_eq!(diff, confirmed);
    }

    #[test]
    fn mask_csv_round_trip() {
        let text = "cell_m,250\norigin_x,100\norigin_y,-50\n0,1,1\n1,true,0\n";
        let m = Mask::parse_csv(text).unwrap();
        assert_eq!(m.geometry, GridGeometry::new(250.0, Point2D::new(100.0, -50.0), 3, 2).unwrap());
        assert!(m.get(1, 0) && m.get(1, 1) && !m.get(1, 2));
        assert_eq!(Mask::parse_csv(&m.to_csv()).unwrap(), m);
        assert!(Mask::parse_csv("cell_m,250\norigin_x,0\norigin_y,0\n0,1\n1\n").is_err());
        assert!(Mask::parse_csv("cell_m,250\norigin_y,0\norigin_x,0\n0\n").is_err());
        assert!(Mask::parse_csv("cell_m,250\norigin_x,0\norigin_y,0\n").is_err());
        assert!(Mask::parse_csv("cell_m,250\norigin_x,0\norigin_y,0\n0,2\n").is_err());
    }
}
