//! Telemetry parsers: NMEA position sentences, `+CSQ` signal-quality
//! responses and SIM-AT cell blocks, plus a deterministic simulated modem.
//!
//! A SIM-AT block is the pseudo-modem's answer to a cell interrogation. It
//! carries one `key:value` line per cell parameter, in this order, and ends
//! with `OK`:
//!
//! ```text
//! cid:4660
//! ta:2
//! mcc:208
//! mnc:10
//! lac:1001
//! rssi:-71
//! ber:1.2
//! bcc:5
//! btcc:5
//! ncc:3
//! OK
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{euclidean_distance, BaseStation, Point2D};
use crate::rng::seeded;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("ChecksumMismatch: expected {expected:02X}, computed {computed:02X}")]
    ChecksumMismatch { expected: u8, computed: u8 },
    #[error("UnsupportedSentence: {0}")]
    UnsupportedSentence(String),
    #[error("MalformedField: {0}")]
    MalformedField(String),
    #[error("OutOfRange: {0}")]
    OutOfRange(String),
    #[error("MissingKey: {0}")]
    MissingKey(&'static str),
    #[error("EmptyBsTable: the simulated modem needs at least one base station")]
    EmptyBsTable,
}

impl TelemetryError {
    pub fn name(&self) -> &'static str {
        match self {
            TelemetryError::ChecksumMismatch { .. } => "ChecksumMismatch",
            TelemetryError::UnsupportedSentence(_) => "UnsupportedSentence",
            TelemetryError::MalformedField(_) => "MalformedField",
            TelemetryError::OutOfRange(_) => "OutOfRange",
            TelemetryError::MissingKey(_) => "MissingKey",
            TelemetryError::EmptyBsTable => "EmptyBsTable",
        }
    }
}

fn malformed(msg: impl Into<String>) -> TelemetryError {
    TelemetryError::MalformedField(msg.into())
}

// ---------------------------------------------------------------------------
// NMEA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentenceKind {
    Gga,
    Rmc,
}

/// A position fix from a GGA or RMC sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmeaFix {
    pub kind: SentenceKind,
    /// Decimal degrees, positive north.
    pub latitude: f64,
    /// Decimal degrees, positive east.
    pub longitude: f64,
    /// Seconds since UTC midnight.
    pub time_utc: f64,
    /// GGA fix quality (0..=8). RMC maps status `A` to 1 and `V` to 0.
    pub quality: u8,
    /// Satellites in use; RMC does not carry it.
    pub satellites: Option<u8>,
}

/// XOR of every byte between `$` and `*`.
pub fn nmea_checksum(body: &str) -> u8 {
    body.bytes().fold(0, |acc, b| acc ^ b)
}

fn parse_hhmmss(s: &str) -> Result<f64, TelemetryError> {
    if s.len() < 6 || !s.is_char_boundary(6) {
        return Err(malformed(format!("time '{s}'")));
    }
    let h: u32 = s[0..2].parse().map_err(|_| malformed(format!("time '{s}'")))?;
    let m: u32 = s[2..4].parse().map_err(|_| malformed(format!("time '{s}'")))?;
    let sec: f64 = s[4..].parse().map_err(|_| malformed(format!("time '{s}'")))?;
    if h > 23 || m > 59 || !(0.0..61.0).contains(&sec) {
        return Err(malformed(format!("time '{s}'")));
    }
    Ok(f64::from(h * 3600 + m * 60) + sec)
}

/// `ddmm.mmmm` / `dddmm.mmmm` plus hemisphere to signed decimal degrees.
fn parse_coordinate(value: &str, hemi: &str, deg_digits: usize, limit: f64) -> Result<f64, TelemetryError> {
    let (pos, neg) = if deg_digits == 2 { ("N", "S") } else { ("E", "W") };
    let sign = match hemi {
        h if h == pos => 1.0,
        h if h == neg => -1.0,
        other => return Err(malformed(format!("hemisphere '{other}'"))),
    };
    let dot = value.find('.').unwrap_or(value.len());
    if dot != deg_digits + 2 || !value.is_ascii() {
        return Err(malformed(format!("coordinate '{value}'")));
    }
    let deg: f64 = value[..deg_digits].parse().map_err(|_| malformed(format!("coordinate '{value}'")))?;
    let min: f64 = value[deg_digits..].parse().map_err(|_| malformed(format!("coordinate '{value}'")))?;
    if !(0.0..60.0).contains(&min) {
        return Err(malformed(format!("coordinate minutes '{value}'")));
    }
    let out = deg + min / 60.0;
    if out > limit {
        return Err(malformed(format!("coordinate '{value}' beyond {limit} degrees")));
    }
    Ok(sign * out)
}

/// Parses one GGA or RMC sentence, verifying its checksum.
pub fn parse_nmea(sentence: &str) -> Result<NmeaFix, TelemetryError> {
    let line = sentence.trim_end_matches(['\r', '\n']);
    let rest = line
        .strip_prefix('$')
        .ok_or_else(|| malformed("sentence must start with '$'"))?;
    let (body, cs) = rest
        .rsplit_once('*')
        .ok_or_else(|| malformed("missing '*hh' checksum"))?;
    if cs.len() != 2 {
        return Err(malformed(format!("checksum '{cs}'")));
    }
    let expected = u8::from_str_radix(cs, 16).map_err(|_| malformed(format!("checksum '{cs}'")))?;
    let computed = nmea_checksum(body);
    if expected != computed {
        return Err(TelemetryError::ChecksumMismatch { expected, computed });
    }

    let fields: Vec<&str> = body.split(',').collect();
    let tag = fields[0];
    if tag.len() != 5 || !tag.is_ascii() {
        return Err(TelemetryError::UnsupportedSentence(tag.to_string()));
    }
    match &tag[2..] {
        "GGA" => parse_gga(&fields),
        "RMC" => parse_rmc(&fields),
        _ => Err(TelemetryError::UnsupportedSentence(tag.to_string())),
    }
}

fn parse_gga(f: &[&str]) -> Result<NmeaFix, TelemetryError> {
    if f.len() < 10 {
        return Err(malformed(format!("GGA has {} fields, expected at least 10", f.len())));
    }
    let quality: u8 = f[6].parse().map_err(|_| malformed(format!("fix quality '{}'", f[6])))?;
    if quality > 8 {
        return Err(malformed(format!("fix quality {quality}")));
    }
    let satellites: u8 = f[7].parse().map_err(|_| malformed(format!("satellites '{}'", f[7])))?;
    Ok(NmeaFix {
        kind: SentenceKind::Gga,
        time_utc: parse_hhmmss(f[1])?,
        latitude: parse_coordinate(f[2], f[3], 2, 90.0)?,
        longitude: parse_coordinate(f[4], f[5], 3, 180.0)?,
        quality,
        satellites: Some(satellites),
    })
}

fn parse_rmc(f: &[&str]) -> Result<NmeaFix, TelemetryError> {
    if f.len() < 10 {
        return Err(malformed(format!("RMC has {} fields, expected at least 10", f.len())));
    }
    let quality = match f[2] {
        "A" => 1,
        "V" => 0,
        other => return Err(malformed(format!("RMC status '{other}'"))),
    };
    Ok(NmeaFix {
        kind: SentenceKind::Rmc,
        time_utc: parse_hhmmss(f[1])?,
        latitude: parse_coordinate(f[3], f[4], 2, 90.0)?,
        longitude: parse_coordinate(f[5], f[6], 3, 180.0)?,
        quality,
        satellites: None,
    })
}

// ---------------------------------------------------------------------------
// +CSQ
// ---------------------------------------------------------------------------

/// Representative bit error rate (percent) for RXQUAL classes 0..=7, as
/// assumed by the GSM radio subsystem link control tables.
pub const RXQUAL_BER_PCT: [f32; 8] = [0.14, 0.28, 0.57, 1.13, 2.26, 4.53, 9.05, 18.10];

/// Decoded `+CSQ: <rssi>,<ber>` response. `None` means "not known".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalQuality {
    pub rssi_dbm: Option<i16>,
    pub ber_pct: Option<f32>,
}

pub fn parse_at_csq(line: &str) -> Result<SignalQuality, TelemetryError> {
    let rest = line
        .trim()
        .strip_prefix("+CSQ:")
        .ok_or_else(|| malformed(format!("expected '+CSQ: <n>,<m>', got '{}'", line.trim())))?;
    let (n, m) = rest
        .split_once(',')
        .ok_or_else(|| malformed(format!("expected two comma-separated values in '{}'", rest.trim())))?;
    let n: u8 = n.trim().parse().map_err(|_| malformed(format!("rssi code '{}'", n.trim())))?;
    let m: u8 = m.trim().parse().map_err(|_| malformed(format!("ber code '{}'", m.trim())))?;
    let rssi_dbm = match n {
        0..=31 => Some(-113 + 2 * i16::from(n)),
        99 => None,
        _ => return Err(TelemetryError::OutOfRange(format!("rssi code {n}"))),
    };
    let ber_pct = match m {
        0..=7 => Some(RXQUAL_BER_PCT[m as usize]),
        99 => None,
        _ => return Err(TelemetryError::OutOfRange(format!("ber code {m}"))),
    };
    Ok(SignalQuality { rssi_dbm, ber_pct })
}

// ---------------------------------------------------------------------------
// SIM-AT cell blocks
// ---------------------------------------------------------------------------

/// One sample of serving-cell identity and radio quality.
///
/// `rssi_delta` and `ber_delta` are first differences against the previous
/// sample of the same sensor; parsers leave them `None` and
/// [`CellMeasurement::with_deltas`] fills them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMeasurement {
    pub cell_id: u32,
    pub timing_advance: u8,
    pub mcc: u16,
    pub mnc: u16,
    pub lac: u16,
    pub rssi_dbm: Option<i16>,
    pub rssi_delta: Option<i16>,
    pub ber_pct: Option<f32>,
    pub ber_delta: Option<f32>,
    pub bcc: u8,
    pub btcc: u8,
    pub ncc: u8,
}

impl CellMeasurement {
    /// Returns a copy whose delta fields are relative to `previous`, or
    /// `None` when there is no previous sample or either value is unknown.
    pub fn with_deltas(mut self, previous: Option<&CellMeasurement>) -> Self {
        self.rssi_delta = previous.and_then(|p| Some(self.rssi_dbm? - p.rssi_dbm?));
        self.ber_delta = previous.and_then(|p| Some(self.ber_pct? - p.ber_pct?));
        self
    }

    /// Renders the SIM-AT block for this sample. Unknown rssi/ber cannot be
    /// represented and are written as the range floor (-113 dBm, 0 %).
    pub fn to_sim_at(&self) -> String {
        format!(
            "cid:{}\nta:{}\nmcc:{}\nmnc:{}\nlac:{}\nrssi:{}\nber:{}\nbcc:{}\nbtcc:{}\nncc:{}\nOK\n",
            self.cell_id,
            self.timing_advance,
            self.mcc,
            self.mnc,
            self.lac,
            self.rssi_dbm.unwrap_or(-113),
            self.ber_pct.unwrap_or(0.0),
            self.bcc,
            self.btcc,
            self.ncc
        )
    }
}

const SIM_AT_KEYS: [&str; 10] = ["cid", "ta", "mcc", "mnc", "lac", "rssi", "ber", "bcc", "btcc", "ncc"];

/// Parses a SIM-AT block. Keys may appear in any order but each exactly
/// once; the block must end with an `OK` line.
pub fn parse_cell_info(block: &str) -> Result<CellMeasurement, TelemetryError> {
    let mut values: [Option<&str>; 10] = [None; 10];
    let mut terminated = false;
    for raw in block.lines() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if terminated {
            return Err(malformed(format!("content after OK: '{line}'")));
        }
        if line == "OK" {
            terminated = true;
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| malformed(format!("expected 'key:value', got '{line}'")))?;
        let slot = SIM_AT_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| malformed(format!("unknown key '{key}'")))?;
        if values[slot].replace(value).is_some() {
            return Err(malformed(format!("duplicate key '{key}'")));
        }
    }
    for (slot, key) in SIM_AT_KEYS.iter().enumerate() {
        if values[slot].is_none() {
            return Err(TelemetryError::MissingKey(key));
        }
    }
    if !terminated {
        return Err(TelemetryError::MissingKey("OK"));
    }

    fn num<T: std::str::FromStr>(key: &str, v: Option<&str>) -> Result<T, TelemetryError> {
        let v = v.unwrap_or_default();
        v.parse().map_err(|_| malformed(format!("{key}:'{v}'")))
    }
    let colour = |key: &str, v: Option<&str>| -> Result<u8, TelemetryError> {
        let c: u8 = num(key, v)?;
        if c > 7 {
            return Err(malformed(format!("{key}:{c} outside 0..=7")));
        }
        Ok(c)
    };

    let rssi: i16 = num("rssi", values[5])?;
    if !(-113..=-51).contains(&rssi) {
        return Err(malformed(format!("rssi:{rssi} outside -113..=-51 dBm")));
    }
    let ber: f32 = num("ber", values[6])?;
    if !(0.0..=100.0).contains(&ber) {
        return Err(malformed(format!("ber:{ber} outside 0..=100 %")));
    }
    Ok(CellMeasurement {
        cell_id: num("cid", values[0])?,
        timing_advance: num("ta", values[1])?,
        mcc: num("mcc", values[2])?,
        mnc: num("mnc", values[3])?,
        lac: num("lac", values[4])?,
        rssi_dbm: Some(rssi),
        rssi_delta: None,
        ber_pct: Some(ber),
        ber_delta: None,
        bcc: colour("bcc", values[7])?,
        btcc: colour("btcc", values[8])?,
        ncc: colour("ncc", values[9])?,
    })
}

// ---------------------------------------------------------------------------
// Simulated modem
// ---------------------------------------------------------------------------

/// Distance covered by one GSM timing-advance step.
pub const TA_STEP_M: f64 = 550.0;
/// Largest GSM timing-advance value.
pub const TA_MAX: u8 = 63;

const SIM_MCC: u16 = 208;
const SIM_MNC: u16 = 10;

/// Closest base station to `position`; ties go to the lowest cell id.
pub fn closest_base_station(position: Point2D, table: &[BaseStation]) -> Option<&BaseStation> {
    table.iter().min_by(|a, b| {
        euclidean_distance(position, a.position)
            .total_cmp(&euclidean_distance(position, b.position))
            .then(a.cell_id.cmp(&b.cell_id))
    })
}

/// Log-distance received level: -51 dBm up to 10 m, then 22 dB per decade,
/// shifted by a per-seed offset, rounded and clamped to the reportable
/// range. Non-increasing in distance for a fixed offset.
fn toy_rssi(distance_m: f64, offset_db: f64) -> i16 {
    let d = distance_m.max(10.0);
    let level = -51.0 - 22.0 * (d / 10.0).log10() + offset_db;
    level.round().clamp(-113.0, -51.0) as i16
}

/// Simulated serving-cell sample at `position`. The serving cell is the
/// closest base station; the noise seed only shifts the level and quality
/// classes, so the sample is a pure function of its inputs.
pub fn simulate_cell(
    position: Point2D,
    table: &[BaseStation],
    noise_seed: u64,
) -> Result<CellMeasurement, TelemetryError> {
    let bs = closest_base_station(position, table).ok_or(TelemetryError::EmptyBsTable)?;
    let d = euclidean_distance(position, bs.position);
    let mut rng = seeded(noise_seed);
    let offset_db: f64 = rng.gen_range(-3.0..=3.0);
    let qual_jitter: i32 = rng.gen_range(-1..=1);
    let rssi = toy_rssi(d, offset_db);
    let rxqual = ((i32::from(-51 - rssi) / 8) + qual_jitter).clamp(0, 7) as usize;
    let ta = ((d / TA_STEP_M).floor() as u64).min(u64::from(TA_MAX)) as u8;
    Ok(CellMeasurement {
        cell_id: bs.cell_id,
        timing_advance: ta,
        mcc: SIM_MCC,
        mnc: SIM_MNC,
        lac: 1000 + (bs.id % 64) as u16,
        rssi_dbm: Some(rssi),
        rssi_delta: None,
        ber_pct: Some(RXQUAL_BER_PCT[rxqual]),
        ber_delta: None,
        bcc: (bs.cell_id % 8) as u8,
        btcc: (bs.id % 8) as u8,
        ncc: ((bs.cell_id / 8) % 8) as u8,
    })
}

/// The SIM-AT block a pseudo-modem at `position` would answer with.
pub fn simulated_modem(
    position: Point2D,
    table: &[BaseStation],
    noise_seed: u64,
) -> Result<String, TelemetryError> {
    Ok(simulate_cell(position, table, noise_seed)?.to_sim_at())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GGA: &str = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47";

    fn xor_oracle(s: &str) -> u8 {
        let start = s.find('$').unwrap() + 1;
        let end = s.find('*').unwrap();
        let mut acc = 0u8;
        for b in s[start..end].as_bytes() {
            acc ^= *b;
        }
        acc
    }

    fn with_checksum(body: &str) -> String {
        let cs = xor_oracle(&format!("${body}*"));
        format!("${body}*{cs:02X}")
    }

    fn bs(id: u32, x: f64, y: f64, cell_id: u32) -> BaseStation {
        BaseStation { id, position: Point2D::new(x, y), cell_id, antenna: "omni".into() }
    }

    #[test]
    fn gga_example() {
        assert_eq!(xor_oracle(GGA), 0x47);
        let fix = parse_nmea(GGA).unwrap();
        assert!((fix.latitude - 48.1173).abs() < 1e-6);
        assert!((fix.longitude - 11.516_667).abs() < 1e-6);
        assert_eq!(fix.quality, 1);
        assert_eq!(fix.satellites, Some(8));
        assert_eq!(fix.time_utc, 12.0 * 3600.0 + 35.0 * 60.0 + 19.0);
    }

    #[test]
    fn corrupted_checksum() {
        let bad = GGA.replace("*47", "*48");
        assert!(matches!(parse_nmea(&bad), Err(TelemetryError::ChecksumMismatch { .. })));
    }

    #[test]
    fn single_character_mutations_rejected() {
        let start = 1;
        let end = GGA.find('*').unwrap();
        for i in start..end {
            let mut bytes = GGA.as_bytes().to_vec();
            bytes[i] ^= 0x01;
            let s = String::from_utf8(bytes).unwrap();
            assert!(parse_nmea(&s).is_err(), "mutation at {i} accepted: {s}");
        }
    }

    #[test]
    fn southern_western_hemispheres() {
        let body = "GPGGA,123519,4807.038,S,01131.000,W,1,08,0.9,545.4,M,46.9,M,,";
        let fix = parse_nmea(&with_checksum(body)).unwrap();
        assert!((fix.latitude + 48.1173).abs() < 1e-6);
        assert!((fix.longitude + 11.516_667).abs() < 1e-6);
    }

    #[test]
    fn rmc_sentence() {
        let body = "GPRMC,081836,A,3751.65,S,14507.36,E,000.0,360.0,130998,011.3,E";
        let fix = parse_nmea(&with_checksum(body)).unwrap();
        assert_eq!(fix.kind, SentenceKind::Rmc);
        assert!((fix.latitude + (37.0 + 51.65 / 60.0)).abs() < 1e-9);
        assert!((fix.longitude - (145.0 + 7.36 / 60.0)).abs() < 1e-9);
        assert_eq!(fix.quality, 1);
        assert_eq!(fix.satellites, None);
    }

    #[test]
    fn unsupported_and_malformed() {
        let gsv = with_checksum("GPGSV,3,1,11,03,03,111,00,04,15,270,00,06,01,010,00,13,06,292,00");
        assert!(matches!(parse_nmea(&gsv), Err(TelemetryError::UnsupportedSentence(_))));
        let bad_lat = with_checksum("GPGGA,123519,48x7.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        assert_eq!(parse_nmea(&bad_lat).unwrap_err().name(), "MalformedField");
        assert_eq!(parse_nmea("GPGGA,1*00").unwrap_err().name(), "MalformedField");
        assert_eq!(parse_nmea("$GPGGA,123519").unwrap_err().name(), "MalformedField");
        let short = with_checksum("GPGGA,123519,4807.038,N");
        assert_eq!(parse_nmea(&short).unwrap_err().name(), "MalformedField");
    }

    #[test]
    fn csq_mapping() {
        let q = parse_at_csq("+CSQ: 0,0").unwrap();
        assert_eq!(q.rssi_dbm, Some(-113));
        assert_eq!(q.ber_pct, Some(RXQUAL_BER_PCT[0]));
        let q = parse_at_csq("+CSQ: 99,99").unwrap();
        assert_eq!(q, SignalQuality { rssi_dbm: None, ber_pct: None });
        let q = parse_at_csq("+CSQ: 31,7").unwrap();
        assert_eq!(q.rssi_dbm, Some(-51));
        assert_eq!(q.ber_pct, Some(RXQUAL_BER_PCT[7]));
        for n in 0..=31i16 {
            assert_eq!(parse_at_csq(&format!("+CSQ: {n},99")).unwrap().rssi_dbm, Some(-113 + 2 * n));
        }
        assert_eq!(parse_at_csq("+CSQ: 32,0").unwrap_err().name(), "OutOfRange");
        assert_eq!(parse_at_csq("+CSQ: 5,8").unwrap_err().name(), "OutOfRange");
        assert_eq!(parse_at_csq("+CSQ: a,0").unwrap_err().name(), "MalformedField");
        assert_eq!(parse_at_csq("+CREG: 0,1").unwrap_err().name(), "MalformedField");
    }

    const BLOCK: &str = "cid:4660\nta:2\nmcc:208\nmnc:10\nlac:1001\nrssi:-71\nber:1.2\nbcc:5\nbtcc:5\nncc:3\nOK\n";

    #[test]
    fn cell_block_example() {
        let m = parse_cell_info(BLOCK).unwrap();
        assert_eq!(
            m,
            CellMeasurement {
                cell_id: 4660,
                timing_advance: 2,
                mcc: 208,
                mnc: 10,
                lac: 1001,
                rssi_dbm: Some(-71),
                rssi_delta: None,
                ber_pct: Some(1.2),
                ber_delta: None,
                bcc: 5,
                btcc: 5,
                ncc: 3,
            }
        );
        assert_eq!(m.to_sim_at(), BLOCK);
    }

    #[test]
    fn cell_block_errors() {
        let missing = BLOCK.replace("lac:1001\n", "");
        assert_eq!(parse_cell_info(&missing), Err(TelemetryError::MissingKey("lac")));
        let unterminated = BLOCK.replace("OK\n", "");
        assert_eq!(parse_cell_info(&unterminated), Err(TelemetryError::MissingKey("OK")));
        let dup = BLOCK.replace("ta:2\n", "ta:2\nta:3\n");
        assert_eq!(parse_cell_info(&dup).unwrap_err().name(), "MalformedField");
        let bad = BLOCK.replace("bcc:5", "bcc:9");
        assert_eq!(parse_cell_info(&bad).unwrap_err().name(), "MalformedField");
        let bad = BLOCK.replace("rssi:-71", "rssi:-20");
        assert_eq!(parse_cell_info(&bad).unwrap_err().name(), "MalformedField");
        let bad = BLOCK.replace("ta:2", "ta:two");
        assert_eq!(parse_cell_info(&bad).unwrap_err().name(), "MalformedField");
        let crlf = BLOCK.replace('\n', "\r\n");
        assert!(parse_cell_info(&crlf).is_ok());
    }

    #[test]
    fn deltas_are_first_differences() {
        let a = parse_cell_info(BLOCK).unwrap();
        let b = parse_cell_info(&BLOCK.replace("rssi:-71", "rssi:-75").replace("ber:1.2", "ber:2.26")).unwrap();
        let a = a.with_deltas(None);
        assert_eq!((a.rssi_delta, a.ber_delta), (None, None));
        let b = b.with_deltas(Some(&a));
        assert_eq!(b.rssi_delta, Some(-4));
        assert_eq!(b.ber_delta, Some(2.26f32 - 1.2f32));
    }

    #[test]
    fn modem_examples() {
        let table = [bs(1, 1000.0, 1000.0, 77)];
        let m = simulate_cell(Point2D::new(1000.0, 1000.0), &table, 3).unwrap();
        assert_eq!(m.cell_id, 77);
        assert_eq!(m.timing_advance, 0);
        let m = simulate_cell(Point2D::new(2200.0, 1000.0), &table, 3).unwrap();
        assert_eq!(m.timing_advance, 2);
        assert_eq!(simulated_modem(Point2D::default(), &[], 0), Err(TelemetryError::EmptyBsTable));
        let far = simulate_cell(Point2D::new(1000.0 + 550.0 * 100.0, 1000.0), &table, 3).unwrap();
        assert_eq!(far.timing_advance, TA_MAX);
    }

    #[test]
    fn modem_reports_closest_cell() {
        let table = [bs(1, 0.0, 0.0, 10), bs(2, 5000.0, 0.0, 20), bs(3, 2500.0, 0.0, 5)];
        assert_eq!(simulate_cell(Point2D::new(4000.0, 0.0), &table, 1).unwrap().cell_id, 20);
        // equidistant from cells 10 and 5 -> lowest cell id
        assert_eq!(simulate_cell(Point2D::new(1250.0, 0.0), &table, 1).unwrap().cell_id, 5);
    }

    #[test]
    fn modem_rssi_monotone_in_distance() {
        let table = [bs(1, 0.0, 0.0, 1)];
        for seed in 0..50 {
            let mut prev = i16::MAX;
            for step in 0..200 {
                let p = Point2D::new(step as f64 * 37.0, 0.0);
                let r = simulate_cell(p, &table, seed).unwrap().rssi_dbm.unwrap();
                assert!(r <= prev);
                prev = r;
            }
        }
    }

    #[test]
    fn modem_output_round_trips() {
        let table = [bs(1, 0.0, 0.0, 100), bs(2, 3000.0, 4000.0, 205), bs(9, 9000.0, 100.0, 31)];
        for seed in 0..1000u64 {
            let p = Point2D::new((seed * 37 % 10_000) as f64, (seed * 91 % 7000) as f64);
            let sample = simulate_cell(p, &table, seed).unwrap();
            let text = simulated_modem(p, &table, seed).unwrap();
            assert_eq!(parse_cell_info(&text).unwrap(), sample);
        }
    }
}
