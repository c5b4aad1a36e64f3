//! Parsing, validation and quality filtering of LIVED-format sensor logs.
//!
//! The on-disk format is a 9-column CSV record per measurement:
//! `TS,Type,Value,Unit,Houseid,Mac,Sensor_id,Year,Month`. Smart plugs report
//! load (Watt), work (kWh), frequency, voltage, current and on/off state;
//! multi-sensors report motion, brightness, temperature and battery data.
//! Only LOAD readings feed prediction. WORK counters are ingested for
//! monotonicity checking, multi-sensor records are parsed and counted but
//! otherwise ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Measurement types a smart plug reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlugMeasurement {
    /// Instantaneous power draw in Watt. The only type used for prediction.
    Load,
    Frequency,
    OnState,
    Voltage,
    Current,
    /// Cumulative electrical work in kWh; must be non-decreasing per sensor.
    Work,
}

/// Measurement types a multi-sensor reports. Parsed but never predicted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultiSensorMeasurement {
    Motion,
    BatteryState,
    Brightness,
    BatteryVoltage,
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementType {
    Plug(PlugMeasurement),
    /// Tagged ignorable: kept for counting, excluded from feature extraction.
    MultiSensor(MultiSensorMeasurement),
}

impl MeasurementType {
    pub fn parse(s: &str) -> Option<Self> {
        use MultiSensorMeasurement::*;
        use PlugMeasurement::*;
        let t = match s.trim().to_ascii_uppercase().as_str() {
            "LOAD" | "POWER" => Self::Plug(Load),
            "FREQUENCY" => Self::Plug(Frequency),
            "ON_STATE" | "ONSTATE" | "ON-OFF" => Self::Plug(OnState),
            "VOLTAGE" => Self::Plug(Voltage),
            "CURRENT" => Self::Plug(Current),
            "WORK" => Self::Plug(Work),
            "MOTION" => Self::MultiSensor(Motion),
            "BATTERY_STATE" | "BATTERYSTATE" => Self::MultiSensor(BatteryState),
            "BRIGHTNESS" => Self::MultiSensor(Brightness),
            "BATTERY_VOLTAGE" | "BATTERYVOLTAGE" => Self::MultiSensor(BatteryVoltage),
            "TEMPERATURE" => Self::MultiSensor(Temperature),
            _ => return None,
        };
        Some(t)
    }

    /// Canonical Type column string.
    pub fn as_str(&self) -> &'static str {
        use MultiSensorMeasurement::*;
        use PlugMeasurement::*;
        match self {
            Self::Plug(Load) => "LOAD",
            Self::Plug(Frequency) => "FREQUENCY",
            Self::Plug(OnState) => "ON_STATE",
            Self::Plug(Voltage) => "VOLTAGE",
            Self::Plug(Current) => "CURRENT",
            Self::Plug(Work) => "WORK",
            Self::MultiSensor(Motion) => "MOTION",
            Self::MultiSensor(BatteryState) => "BATTERY_STATE",
            Self::MultiSensor(Brightness) => "BRIGHTNESS",
            Self::MultiSensor(BatteryVoltage) => "BATTERY_VOLTAGE",
            Self::MultiSensor(Temperature) => "TEMPERATURE",
        }
    }

    pub fn is_load(&self) -> bool {
        matches!(self, Self::Plug(PlugMeasurement::Load))
    }

    pub fn is_work(&self) -> bool {
        matches!(self, Self::Plug(PlugMeasurement::Work))
    }

    /// Multi-sensor types are excluded from prediction.
    pub fn is_prediction_relevant(&self) -> bool {
        self.is_load()
    }
}

impl fmt::Display for MeasurementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sensor identifier of the form `<house_id>:<device-number>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensorId(String);

impl SensorId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// House id encoded before the `:`, if well-formed.
    pub fn house_prefix(&self) -> Option<u32> {
        self.0.split(':').next()?.parse().ok()
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const TS_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One timestamped measurement from a sensor, i.e. one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub ts: NaiveDateTime,
    pub mtype: MeasurementType,
    pub value: f64,
    pub unit: String,
    pub house_id: u32,
    pub mac: String,
    pub sensor_id: SensorId,
}

impl SensorReading {
    /// Render the reading back into its 9-column CSV form. Year and Month are
    /// re-derived from the timestamp.
    pub fn to_csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.ts.format(TS_FORMAT),
            self.mtype,
            self.value,
            self.unit,
            self.house_id,
            self.mac,
            self.sensor_id,
            self.ts.year(),
            self.ts.month()
        )
    }
}

/// The fixed, lexicographically ordered set of smart-plug sensors of one
/// household. The ordering pins feature-column identity across retrains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdRoster {
    pub house_id: u32,
    device_ids: Vec<SensorId>,
}

impl HouseholdRoster {
    pub fn new(house_id: u32, mut device_ids: Vec<SensorId>) -> Result<Self, IngestError> {
        device_ids.sort();
        device_ids.dedup();
        if device_ids.is_empty() {
            return Err(IngestError::EmptyRoster { house_id });
        }
        Ok(Self { house_id, device_ids })
    }

    /// Collect the roster from observed LOAD readings.
    pub fn from_readings<'a>(
        house_id: u32,
        readings: impl IntoIterator<Item = &'a SensorReading>,
    ) -> Result<Self, IngestError> {
        let ids: Vec<SensorId> = readings
            .into_iter()
            .filter(|r| r.house_id == house_id && r.mtype.is_load())
            .map(|r| r.sensor_id.clone())
            .collect();
        Self::new(house_id, ids)
    }

    pub fn house_id(&self) -> u32 {
        self.house_id
    }

    pub fn devices(&self) -> &[SensorId] {
        &self.device_ids
    }

    pub fn len(&self) -> usize {
        self.device_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.device_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityIssue {
    Ok,
    GapExceeded,
    MissingDevice,
}

impl fmt::Display for QualityIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Ok => "OK",
            Self::GapExceeded => "GAP_EXCEEDED",
            Self::MissingDevice => "MISSING_DEVICE",
        };
        f.write_str(s)
    }
}

/// Usability verdict for one household-day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayQualityVerdict {
    pub date: NaiveDate,
    pub usable: bool,
    pub reason: QualityIssue,
}

impl DayQualityVerdict {
    fn new(date: NaiveDate, reason: QualityIssue) -> Self {
        Self { date, usable: reason == QualityIssue::Ok, reason }
    }
}

/// Day counts over a selected evaluation range, one summary row per household.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRange {
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub total: usize,
    pub skipped: usize,
    pub used: usize,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed record: {reason}")]
    MalformedRecord { reason: String },
    #[error("redundant field disagrees with primary: {reason}")]
    InconsistentRedundancy { reason: String },
    #[error("unknown measurement type {0:?}")]
    UnknownType(String),
    #[error("household {house_id} has an empty device roster")]
    EmptyRoster { house_id: u32 },
    #[error("no range with at least {min_days} usable days (best has {best})")]
    InsufficientData { min_days: usize, best: usize },
    #[error("work counter of {sensor} regressed from {prev} to {current} kWh")]
    WorkRegression { sensor: SensorId, prev: f64, current: f64 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn malformed(reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRecord { reason: reason.into() }
}

/// Parse one 9-column LIVED CSV record into a validated [`SensorReading`].
///
/// The redundant Year/Month columns are checked against the timestamp and then
/// discarded; the sensor id prefix must match the house id; LOAD values must
/// be finite and non-negative.
pub fn parse_reading(line: &str) -> Result<SensorReading, IngestError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != 9 {
        return Err(malformed(format!("expected 9 fields, got {}", fields.len())));
    }
    let ts = NaiveDateTime::parse_from_str(fields[0].trim(), TS_FORMAT)
        .map_err(|e| malformed(format!("bad timestamp {:?}: {e}", fields[0])))?;
    let type_str = fields[1].trim();
    let mtype = MeasurementType::parse(type_str)
        .ok_or_else(|| IngestError::UnknownType(type_str.to_string()))?;
    let raw_value = fields[2].trim();
    let value = parse_value(raw_value, mtype)?;
    if !value.is_finite() {
        return Err(malformed(format!("non-finite value {raw_value:?}")));
    }
    if mtype.is_load() && value < 0.0 {
        return Err(malformed(format!("negative LOAD value {raw_value}")));
    }
    let unit = fields[3].trim().to_string();
    validate_unit(mtype, &unit)?;
    let house_id: u32 = fields[4]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("bad house id {:?}", fields[4])))?;
    let mac = fields[5].trim().to_string();
    let sensor_id = SensorId::new(fields[6].trim());
    if sensor_id.house_prefix() != Some(house_id) {
        return Err(IngestError::InconsistentRedundancy {
            reason: format!("sensor id {sensor_id} does not belong to house {house_id}"),
        });
    }
    let year: i32 = fields[7]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("bad year {:?}", fields[7])))?;
    let month: u32 = fields[8]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("bad month {:?}", fields[8])))?;
    if year != ts.year() || month != ts.month() {
        return Err(IngestError::InconsistentRedundancy {
            reason: format!(
                "Year/Month columns {year}/{month} disagree with timestamp {}",
                ts.format(TS_FORMAT)
            ),
        });
    }
    Ok(SensorReading { ts, mtype, value, unit, house_id, mac, sensor_id })
}

fn parse_value(raw: &str, mtype: MeasurementType) -> Result<f64, IngestError> {
    if let Ok(v) = raw.parse::<f64>() {
        return Ok(v);
    }
    // ON_STATE and battery state arrive as text in some exports.
    let v = match raw.to_ascii_uppercase().as_str() {
        "ON" | "OK" => 1.0,
        "OFF" | "LOW" => 0.0,
        _ => return Err(malformed(format!("unparseable value {raw:?} for {mtype}"))),
    };
    Ok(v)
}

fn validate_unit(mtype: MeasurementType, unit: &str) -> Result<(), IngestError> {
    use PlugMeasurement::*;
    let ok = match mtype {
        MeasurementType::Plug(Load) => matches!(unit, "Watt" | "W" | "watt"),
        MeasurementType::Plug(Work) => matches!(unit, "kWh" | "kwh" | "Wh"),
        MeasurementType::Plug(Frequency) => matches!(unit, "Hertz" | "Hz"),
        MeasurementType::Plug(Voltage) => matches!(unit, "Volt" | "V"),
        MeasurementType::Plug(Current) => matches!(unit, "Ampere" | "A" | "mA"),
        // on/off state and multi-sensor units are not validated strictly
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(malformed(format!("unit {unit:?} does not match type {mtype}")))
    }
}

/// Tracks per-sensor WORK counters; cumulative work must never decrease.
#[derive(Debug, Default)]
pub struct WorkMonitor {
    last: BTreeMap<SensorId, f64>,
    pub regressions: u64,
}

impl WorkMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, reading: &SensorReading) -> Result<(), IngestError> {
        if !reading.mtype.is_work() {
            return Ok(());
        }
        let entry = self.last.entry(reading.sensor_id.clone()).or_insert(reading.value);
        if reading.value < *entry {
            self.regressions += 1;
            let prev = *entry;
            *entry = reading.value;
            return Err(IngestError::WorkRegression {
                sensor: reading.sensor_id.clone(),
                prev,
                current: reading.value,
            });
        }
        *entry = reading.value;
        Ok(())
    }
}

/// Judge one household-day from its LOAD readings.
///
/// A day is unusable when a roster device has no readings at all
/// (`MISSING_DEVICE`) or when any device is silent for longer than `max_gap`
/// (`GAP_EXCEEDED`). Silence is measured over the whole civil day, so gaps
/// against the day boundaries count too. `readings` must be sorted by ts.
pub fn assess_day_quality(
    date: NaiveDate,
    readings: &[SensorReading],
    roster: &HouseholdRoster,
    max_gap: TimeDelta,
) -> DayQualityVerdict {
    assert!(max_gap > TimeDelta::zero(), "max_gap must be positive");
    if readings.is_empty() {
        return DayQualityVerdict::new(date, QualityIssue::MissingDevice);
    }
    let day_start = date.and_hms_opt(0, 0, 0).unwrap();
    let day_end = day_start + TimeDelta::days(1);
    let mut last_seen: BTreeMap<&SensorId, NaiveDateTime> = BTreeMap::new();
    let mut gap_exceeded = false;
    for r in readings {
        if !r.mtype.is_load() {
            continue;
        }
        let prev = last_seen.get(&r.sensor_id).copied().unwrap_or(day_start);
        if r.ts - prev > max_gap {
            gap_exceeded = true;
        }
        last_seen.insert(&r.sensor_id, r.ts);
    }
    for device in roster.devices() {
        match last_seen.get(device) {
            None => return DayQualityVerdict::new(date, QualityIssue::MissingDevice),
            Some(&ts) => {
                if day_end - ts > max_gap {
                    gap_exceeded = true;
                }
            }
        }
    }
    if gap_exceeded {
        DayQualityVerdict::new(date, QualityIssue::GapExceeded)
    } else {
        DayQualityVerdict::new(date, QualityIssue::Ok)
    }
}

/// Group readings of one household by civil day and judge every day between
/// the first and the last. Days with no readings at all are unusable.
pub fn assess_all_days(
    readings: &[SensorReading],
    roster: &HouseholdRoster,
    max_gap: TimeDelta,
) -> Vec<DayQualityVerdict> {
    if readings.is_empty() {
        return Vec::new();
    }
    let mut by_day: BTreeMap<NaiveDate, Vec<SensorReading>> = BTreeMap::new();
    for r in readings {
        by_day.entry(r.ts.date()).or_default().push(r.clone());
    }
    let first = *by_day.keys().next().unwrap();
    let last = *by_day.keys().last().unwrap();
    let mut verdicts = Vec::new();
    let mut day = first;
    while day <= last {
        let verdict = match by_day.get(&day) {
            Some(day_readings) => assess_day_quality(day, day_readings, roster, max_gap),
            None => DayQualityVerdict::new(day, QualityIssue::MissingDevice),
        };
        verdicts.push(verdict);
        day += TimeDelta::days(1);
    }
    verdicts
}

/// Pick the day range that maximizes usable days; ties go to the shortest
/// range, which trims unusable days off both ends. Fails when fewer than
/// `min_days` usable days exist.
pub fn select_evaluation_range(
    verdicts: &[DayQualityVerdict],
    min_days: usize,
) -> Result<EvaluationRange, IngestError> {
    assert!(min_days >= 1, "min_days must be at least 1");
    let first_usable = verdicts.iter().position(|v| v.usable);
    let last_usable = verdicts.iter().rposition(|v| v.usable);
    let (lo, hi) = match (first_usable, last_usable) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(IngestError::InsufficientData { min_days, best: 0 }),
    };
    let range = &verdicts[lo..=hi];
    let used = range.iter().filter(|v| v.usable).count();
    if used < min_days {
        return Err(IngestError::InsufficientData { min_days, best: used });
    }
    let total = range.len();
    Ok(EvaluationRange {
        first_day: range[0].date,
        last_day: range[total - 1].date,
        total,
        skipped: total - used,
        used,
    })
}

/// Outcome of reading a batch of LIVED files: readings grouped per household
/// plus counters for everything that was set aside.
#[derive(Debug, Default)]
pub struct IngestSummary {
    pub per_household: BTreeMap<u32, Vec<SensorReading>>,
    pub multi_sensor_records: u64,
    pub non_load_plug_records: u64,
    pub malformed_records: u64,
    pub work_regressions: u64,
}

impl IngestSummary {
    pub fn load_readings(&self, house_id: u32) -> &[SensorReading] {
        self.per_household.get(&house_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn households(&self) -> Vec<u32> {
        self.per_household.keys().copied().collect()
    }
}

/// Read one or more LIVED CSV files (plain or gzip, optional header line).
///
/// LOAD readings are kept per household sorted by `(ts, sensor_id)`. WORK
/// readings feed the monotonicity monitor only. Malformed lines are counted,
/// not fatal; unreadable files are.
pub fn read_lived_files<P: AsRef<Path>>(paths: &[P]) -> Result<IngestSummary, IngestError> {
    let mut summary = IngestSummary::default();
    let mut monitor = WorkMonitor::new();
    for path in paths {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
            Box::new(flate2::read::MultiGzDecoder::new(file))
        } else {
            Box::new(file)
        };
        for line in BufReader::new(reader).lines() {
            let line = line.map_err(|e| IngestError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || is_header(trimmed) {
                continue;
            }
            match parse_reading(trimmed) {
                Ok(reading) => ingest_reading(&mut summary, &mut monitor, reading),
                Err(_) => summary.malformed_records += 1,
            }
        }
    }
    summary.work_regressions = monitor.regressions;
    for readings in summary.per_household.values_mut() {
        readings.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
    }
    Ok(summary)
}

fn ingest_reading(summary: &mut IngestSummary, monitor: &mut WorkMonitor, reading: SensorReading) {
    match reading.mtype {
        MeasurementType::MultiSensor(_) => summary.multi_sensor_records += 1,
        MeasurementType::Plug(PlugMeasurement::Load) => {
            summary.per_household.entry(reading.house_id).or_default().push(reading);
        }
        MeasurementType::Plug(_) => {
            summary.non_load_plug_records += 1;
            // counters may regress after a meter swap; counted, not fatal
            let _ = monitor.observe(&reading);
        }
    }
}

fn is_header(line: &str) -> bool {
    line.to_ascii_uppercase().starts_with("TS,")
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORK_ROW: &str = "2013-10-01 00:09:39,WORK,74.973,kWh,1,00:00:00:00:00:00:11,1:98,2013,10";
    const LOAD_ROW: &str = "2015-02-01 00:00:00,LOAD,49,Watt,2,00:00:00:00:00:00:45,2:201,2015,2";

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TS_FORMAT).unwrap()
    }

    fn load_reading(house: u32, sensor: &str, at: &str, watts: f64) -> SensorReading {
        SensorReading {
            ts: ts(at),
            mtype: MeasurementType::Plug(PlugMeasurement::Load),
            value: watts,
            unit: "Watt".into(),
            house_id: house,
            mac: "00:00:00:00:00:00:01".into(),
            sensor_id: SensorId::new(sensor),
        }
    }

    #[test]
    fn parses_work_sample_row() {
        let r = parse_reading(WORK_ROW).unwrap();
        assert_eq!(r.ts, ts("2013-10-01 00:09:39"));
        assert!(r.mtype.is_work());
        assert_eq!(r.value, 74.973);
        assert_eq!(r.house_id, 1);
        assert_eq!(r.sensor_id.as_str(), "1:98");
    }

    #[test]
    fn parses_load_sample_row() {
        let r = parse_reading(LOAD_ROW).unwrap();
        assert!(r.mtype.is_load());
        assert_eq!(r.value, 49.0);
        assert_eq!(r.unit, "Watt");
        assert_eq!(r.house_id, 2);
    }

    #[test]
    fn sample_rows_round_trip_exactly() {
        for row in [WORK_ROW, LOAD_ROW] {
            let parsed = parse_reading(row).unwrap();
            assert_eq!(parsed.to_csv_record(), row);
            assert_eq!(parse_reading(&parsed.to_csv_record()).unwrap(), parsed);
        }
    }

    #[test]
    fn rejects_wrong_arity() {
        let err = parse_reading("2013-10-01 00:09:39,WORK,74.973").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { .. }));
    }

    #[test]
    fn rejects_bad_timestamp() {
        let row = WORK_ROW.replace("2013-10-01 00:09:39", "2013-13-41 99:00:00");
        assert!(matches!(parse_reading(&row), Err(IngestError::MalformedRecord { .. })));
    }

    #[test]
    fn rejects_year_month_mismatch() {
        let row = WORK_ROW.replace(",2013,10", ",2014,10");
        assert!(matches!(parse_reading(&row), Err(IngestError::InconsistentRedundancy { .. })));
        let row = WORK_ROW.replace(",2013,10", ",2013,11");
        assert!(matches!(parse_reading(&row), Err(IngestError::InconsistentRedundancy { .. })));
    }

    #[test]
    fn rejects_sensor_house_mismatch() {
        let row = LOAD_ROW.replace("2:201", "3:201");
        assert!(matches!(parse_reading(&row), Err(IngestError::InconsistentRedundancy { .. })));
    }

    #[test]
    fn rejects_unknown_type() {
        let row = WORK_ROW.replace("WORK", "GRAVITY");
        assert!(matches!(parse_reading(&row), Err(IngestError::UnknownType(_))));
    }

    #[test]
    fn rejects_negative_load() {
        let row = "2015-02-01 00:00:00,LOAD,-3,Watt,2,00:00:00:00:00:00:45,2:201,2015,2";
        assert!(matches!(parse_reading(row), Err(IngestError::MalformedRecord { .. })));
    }

    #[test]
    fn multi_sensor_rows_parse_as_ignorable() {
        let row = "2015-02-01 00:00:00,TEMPERATURE,21.5,Celsius,2,00:00:00:00:00:00:45,2:201,2015,2";
        let r = parse_reading(row).unwrap();
        assert!(matches!(r.mtype, MeasurementType::MultiSensor(_)));
        assert!(!r.mtype.is_prediction_relevant());
    }

    #[test]
    fn work_monitor_flags_regression() {
        let mut monitor = WorkMonitor::new();
        let mut r = parse_reading(WORK_ROW).unwrap();
        monitor.observe(&r).unwrap();
        r.value = 74.0;
        assert!(monitor.observe(&r).is_err());
        assert_eq!(monitor.regressions, 1);
    }

    fn roster(house: u32, sensors: &[&str]) -> HouseholdRoster {
        HouseholdRoster::new(house, sensors.iter().map(|s| SensorId::new(*s)).collect()).unwrap()
    }

    #[test]
    fn roster_is_sorted_and_deduped() {
        let r = roster(1, &["1:98", "1:201", "1:98"]);
        // lexicographic: "1:201" < "1:98"
        assert_eq!(r.devices(), &[SensorId::new("1:201"), SensorId::new("1:98")]);
    }

    fn dense_day(house: u32, sensors: &[&str], date: NaiveDate, period_s: i64) -> Vec<SensorReading> {
        let mut out = Vec::new();
        let start = date.and_hms_opt(0, 0, 0).unwrap();
        let mut t = start;
        while t < start + TimeDelta::days(1) {
            for s in sensors {
                out.push(load_reading(house, s, &t.format(TS_FORMAT).to_string(), 10.0));
            }
            t += TimeDelta::seconds(period_s);
        }
        out
    }

    #[test]
    fn day_with_dense_readings_is_ok() {
        let date = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let readings = dense_day(6, &["6:1", "6:2"], date, 120);
        let v = assess_day_quality(date, &readings, &roster(6, &["6:1", "6:2"]), TimeDelta::hours(1));
        assert_eq!(v.reason, QualityIssue::Ok);
        assert!(v.usable);
    }

    #[test]
    fn two_hour_silence_exceeds_one_hour_gap() {
        let date = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let mut readings = dense_day(6, &["6:1"], date, 120);
        readings.retain(|r| r.ts.time() < ts("2014-03-01 09:00:00").time() || r.ts.time() >= ts("2014-03-01 11:00:00").time());
        let v = assess_day_quality(date, &readings, &roster(6, &["6:1"]), TimeDelta::hours(1));
        assert_eq!(v.reason, QualityIssue::GapExceeded);
        assert!(!v.usable);
    }

    #[test]
    fn absent_roster_device_is_missing() {
        let date = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let readings = dense_day(6, &["6:1"], date, 120);
        let v = assess_day_quality(date, &readings, &roster(6, &["6:1", "6:2"]), TimeDelta::hours(1));
        assert_eq!(v.reason, QualityIssue::MissingDevice);
    }

    #[test]
    fn empty_day_is_missing_device() {
        let date = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let v = assess_day_quality(date, &[], &roster(6, &["6:1"]), TimeDelta::hours(1));
        assert_eq!(v.reason, QualityIssue::MissingDevice);
        assert!(!v.usable);
    }

    fn verdict_run(usable: &[bool]) -> Vec<DayQualityVerdict> {
        let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
        usable
            .iter()
            .enumerate()
            .map(|(i, &u)| DayQualityVerdict {
                date: start + TimeDelta::days(i as i64),
                usable: u,
                reason: if u { QualityIssue::Ok } else { QualityIssue::GapExceeded },
            })
            .collect()
    }

    #[test]
    fn range_counts_match_household_237_shape() {
        // 181 days, 4 unusable in the middle
        let mut usable = vec![true; 181];
        for i in [40, 41, 90, 150] {
            usable[i] = false;
        }
        let range = select_evaluation_range(&verdict_run(&usable), 120).unwrap();
        assert_eq!(range.total, 181);
        assert_eq!(range.skipped, 4);
        assert_eq!(range.used, 177);
    }

    #[test]
    fn all_usable_means_no_skips() {
        let range = select_evaluation_range(&verdict_run(&vec![true; 130]), 120).unwrap();
        assert_eq!(range.used, range.total);
        assert_eq!(range.skipped, 0);
    }

    #[test]
    fn below_min_days_is_insufficient() {
        let err = select_evaluation_range(&verdict_run(&vec![true; 100]), 120).unwrap_err();
        assert!(matches!(err, IngestError::InsufficientData { best: 100, .. }));
    }

    #[test]
    fn range_trims_unusable_edges() {
        let mut usable = vec![true; 10];
        usable[0] = false;
        usable[9] = false;
        let range = select_evaluation_range(&verdict_run(&usable), 1).unwrap();
        assert_eq!(range.total, 8);
        assert_eq!(range.used, 8);
        assert_eq!(range.used + range.skipped, range.total);
    }

    #[test]
    fn round_trip_preserves_typed_reading() {
        // a spread of values with awkward decimal forms
        for (i, v) in [0.0, 49.0, 74.973, 0.0625, 1e-3, 12345.678].iter().enumerate() {
            let r = load_reading(7, "7:3", "2014-06-15 13:37:02", *v);
            let line = r.to_csv_record();
            let parsed = parse_reading(&line).unwrap();
            assert_eq!(parsed, r, "case {i}");
        }
    }
}
