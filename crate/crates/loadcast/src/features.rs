//! Feature extraction over base intervals and kWh targets over target
//! intervals, turning micro-window pairs into training rows.
//!
//! Three features describe the household as a whole (SUMMED, HOUR, WDAY);
//! the rest summarize each device's watt series separately, including the
//! financial-style WILLR and MOMENTUM indicators. A fixed feature layout
//! derived from (combination, roster) keeps column identity stable across
//! rows and retrains.

use std::fmt;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{HouseholdRoster, SensorId};
use crate::windowing::{HistoricWindow, Interval, IntervalPair};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature name `{0}`")]
    UnknownFeature(String),
    #[error("feature combination is empty")]
    EmptyCombination,
    #[error("target interval ends {target_end} but data reaches only {max_ts}")]
    FutureTarget { target_end: NaiveDateTime, max_ts: NaiveDateTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureScope {
    Household,
    PerDevice,
}

/// Every extractable feature, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureId {
    Summed,
    Hour,
    Wday,
    Min,
    Max,
    Mean,
    Variance,
    Stddev,
    Skewness,
    Kurtosis,
    Momentum,
    Willr,
    Consum,
    First,
    Last,
    State,
}

impl FeatureId {
    pub const ALL: [FeatureId; 16] = [
        FeatureId::Summed,
        FeatureId::Hour,
        FeatureId::Wday,
        FeatureId::Min,
        FeatureId::Max,
        FeatureId::Mean,
        FeatureId::Variance,
        FeatureId::Stddev,
        FeatureId::Skewness,
        FeatureId::Kurtosis,
        FeatureId::Momentum,
        FeatureId::Willr,
        FeatureId::Consum,
        FeatureId::First,
        FeatureId::Last,
        FeatureId::State,
    ];

    pub fn scope(&self) -> FeatureScope {
        match self {
            FeatureId::Summed | FeatureId::Hour | FeatureId::Wday => FeatureScope::Household,
            _ => FeatureScope::PerDevice,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureId::Summed => "summed",
            FeatureId::Hour => "hour",
            FeatureId::Wday => "wday",
            FeatureId::Min => "min",
            FeatureId::Max => "max",
            FeatureId::Mean => "mean",
            FeatureId::Variance => "variance",
            FeatureId::Stddev => "stddev",
            FeatureId::Skewness => "skewness",
            FeatureId::Kurtosis => "kurtosis",
            FeatureId::Momentum => "momentum",
            FeatureId::Willr => "willr",
            FeatureId::Consum => "consum",
            FeatureId::First => "first",
            FeatureId::Last => "last",
            FeatureId::State => "state",
        }
    }

    /// Accepts the canonical name plus the spellings used in result tables
    /// ("moum", "williamsrvalue", "weekday", ...).
    pub fn parse(name: &str) -> Result<Self, FeatureError> {
        let key = name.trim().to_ascii_lowercase();
        Ok(match key.as_str() {
            "summed" | "sum" => FeatureId::Summed,
            "hour" => FeatureId::Hour,
            "wday" | "weekday" => FeatureId::Wday,
            "min" | "minvalue" => FeatureId::Min,
            "max" | "maxvalue" => FeatureId::Max,
            "mean" => FeatureId::Mean,
            "variance" | "var" => FeatureId::Variance,
            "stddev" | "std" => FeatureId::Stddev,
            "skewness" | "skew" => FeatureId::Skewness,
            "kurtosis" | "kurt" => FeatureId::Kurtosis,
            "momentum" | "moum" => FeatureId::Momentum,
            "willr" | "williamsr" | "williamsrvalue" => FeatureId::Willr,
            "consum" | "consumption" => FeatureId::Consum,
            "first" | "firstvalue" => FeatureId::First,
            "last" | "lastvalue" => FeatureId::Last,
            "state" => FeatureId::State,
            _ => return Err(FeatureError::UnknownFeature(name.to_string())),
        })
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A non-empty, canonically ordered, duplicate-free feature selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureCombination {
    selected: Vec<FeatureId>,
}

impl FeatureCombination {
    pub fn new(ids: impl IntoIterator<Item = FeatureId>) -> Result<Self, FeatureError> {
        let mut selected: Vec<FeatureId> = ids.into_iter().collect();
        selected.sort();
        selected.dedup();
        if selected.is_empty() {
            return Err(FeatureError::EmptyCombination);
        }
        Ok(Self { selected })
    }

    /// The strongest selection found by exhaustive search.
    pub fn complex() -> Self {
        Self::new([
            FeatureId::Summed,
            FeatureId::Wday,
            FeatureId::Last,
            FeatureId::Max,
            FeatureId::Willr,
        ])
        .expect("non-empty")
    }

    /// The smallest selection that still carries the household signal.
    pub fn minimal() -> Self {
        Self::new([FeatureId::Summed, FeatureId::Wday]).expect("non-empty")
    }

    /// Parse `complex`, `minimal`, or a comma- or dash-separated name list.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "complex" => return Ok(Self::complex()),
            "minimal" => return Ok(Self::minimal()),
            _ => {}
        }
        let ids = text
            .split([',', '-'])
            .filter(|s| !s.trim().is_empty())
            .map(FeatureId::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ids)
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.selected
    }

    pub fn household_features(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.selected.iter().copied().filter(|f| f.scope() == FeatureScope::Household)
    }

    pub fn device_features(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.selected.iter().copied().filter(|f| f.scope() == FeatureScope::PerDevice)
    }
}

impl fmt::Display for FeatureCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in &self.selected {
            if !first {
                f.write_str("-")?;
            }
            f.write_str(id.name())?;
            first = false;
        }
        Ok(())
    }
}

impl TryFrom<String> for FeatureCombination {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value).map_err(|e| e.to_string())
    }
}

impl From<FeatureCombination> for String {
    fn from(value: FeatureCombination) -> Self {
        value.to_string()
    }
}

/// One column of the training matrix: a feature, bound to a device when
/// per-device scoped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureColumn {
    pub feature: FeatureId,
    pub device: Option<SensorId>,
}

impl fmt::Display for FeatureColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.device {
            Some(dev) => write!(f, "{}[{}]", self.feature, dev),
            None => write!(f, "{}", self.feature),
        }
    }
}

/// Fixed column order under one (combination, roster) configuration:
/// household features first, then per-device features grouped by device in
/// roster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    combo: FeatureCombination,
    devices: Vec<SensorId>,
    columns: Vec<FeatureColumn>,
}

impl FeatureLayout {
    pub fn new(combo: FeatureCombination, roster: &HouseholdRoster) -> Self {
        let devices: Vec<SensorId> = roster.devices().to_vec();
        let mut columns = Vec::new();
        for feature in combo.household_features() {
            columns.push(FeatureColumn { feature, device: None });
        }
        for device in &devices {
            for feature in combo.device_features() {
                columns.push(FeatureColumn { feature, device: Some(device.clone()) });
            }
        }
        Self { combo, devices, columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn combination(&self) -> &FeatureCombination {
        &self.combo
    }

    pub fn devices(&self) -> &[SensorId] {
        &self.devices
    }
}

/// Household consumption over a target interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetValue {
    pub kwh: f64,
}

/// Watt series of one device over an interval, gap-filled: an interval
/// without readings holds the last prior value, or 0 before any reading.
pub fn device_series(window: &HistoricWindow, device: &SensorId, interval: Interval) -> Vec<f64> {
    let values: Vec<f64> = window.values_in(device, interval).collect();
    if !values.is_empty() {
        return values;
    }
    vec![window.last_value_before(device, interval.start).unwrap_or(0.0)]
}

/// Single-pass summary of a non-empty series; the moment ratios use the
/// bias-uncorrected estimators m3/m2^1.5 and m4/m2^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub variance: f64,
    pub stddev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub first: f64,
    pub last: f64,
}

impl SeriesStats {
    pub fn of(series: &[f64]) -> Self {
        assert!(!series.is_empty(), "series must be gap-filled before stats");
        let n = series.len() as f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in series {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        let mean = sum / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in series {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skewness, kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2))
        } else {
            (0.0, 0.0)
        };
        Self {
            min,
            max,
            mean,
            variance: m2,
            stddev: m2.sqrt(),
            skewness,
            kurtosis,
            first: series[0],
            last: *series.last().expect("non-empty"),
        }
    }

    /// Net change over the window.
    pub fn momentum(&self) -> f64 {
        self.last - self.first
    }

    /// Position of the last value between the window's high and low, scaled
    /// to [-100, 0]. A flat window (max == min) yields 0.
    pub fn willr(&self) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            (self.max - self.last) / (self.max - self.min) * -100.0
        }
    }

    /// Energy in kWh when the series holds watts over the given interval.
    pub fn consum_kwh(&self, interval: Interval) -> f64 {
        self.mean * interval.hours() / 1000.0
    }

    pub fn value_of(&self, feature: FeatureId, interval: Interval) -> f64 {
        match feature {
            FeatureId::Min => self.min,
            FeatureId::Max => self.max,
            FeatureId::Mean => self.mean,
            FeatureId::Variance => self.variance,
            FeatureId::Stddev => self.stddev,
            FeatureId::Skewness => self.skewness,
            FeatureId::Kurtosis => self.kurtosis,
            FeatureId::Momentum => self.momentum(),
            FeatureId::Willr => self.willr(),
            FeatureId::Consum => self.consum_kwh(interval),
            FeatureId::First => self.first,
            FeatureId::Last => self.last,
            FeatureId::State => {
                if self.last > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FeatureId::Summed | FeatureId::Hour | FeatureId::Wday => {
                panic!("{feature} is household-scoped")
            }
        }
    }
}

/// Per-device feature values in the order of `which`.
pub fn extract_device_features(
    series: &[f64],
    interval: Interval,
    which: impl IntoIterator<Item = FeatureId>,
) -> Vec<f64> {
    let stats = SeriesStats::of(series);
    which.into_iter().map(|f| stats.value_of(f, interval)).collect()
}

/// Household feature values in the order of `which`.
pub fn extract_household_features(
    device_means: &[f64],
    interval: Interval,
    which: impl IntoIterator<Item = FeatureId>,
) -> Vec<f64> {
    which
        .into_iter()
        .map(|f| match f {
            FeatureId::Summed => device_means.iter().sum(),
            FeatureId::Hour => interval.end.hour() as f64,
            FeatureId::Wday => interval.end.weekday().num_days_from_monday() as f64,
            other => panic!("{other} is device-scoped"),
        })
        .collect()
}

/// Aggregated household consumption over a fully observed target interval.
pub fn extract_target(
    window: &HistoricWindow,
    devices: &[SensorId],
    interval: Interval,
) -> Result<TargetValue, FeatureError> {
    let max_ts = window.max_ts().unwrap_or(NaiveDateTime::MIN);
    if max_ts < interval.end {
        return Err(FeatureError::FutureTarget { target_end: interval.end, max_ts });
    }
    let kwh = devices
        .iter()
        .map(|dev| SeriesStats::of(&device_series(window, dev, interval)).consum_kwh(interval))
        .sum();
    Ok(TargetValue { kwh })
}

/// One training row over a base interval, columns per the layout.
pub fn extract_row(window: &HistoricWindow, layout: &FeatureLayout, base: Interval) -> Vec<f64> {
    let per_device: Vec<(SeriesStats, Interval)> = layout
        .devices()
        .iter()
        .map(|dev| (SeriesStats::of(&device_series(window, dev, base)), base))
        .collect();
    let device_means: Vec<f64> = per_device.iter().map(|(s, _)| s.mean).collect();
    let mut row = Vec::with_capacity(layout.width());
    for col in layout.columns() {
        match &col.device {
            None => {
                row.extend(extract_household_features(&device_means, base, [col.feature]));
            }
            Some(dev) => {
                let idx = layout
                    .devices()
                    .iter()
                    .position(|d| d == dev)
                    .expect("layout device known");
                let (stats, iv) = &per_device[idx];
                row.push(stats.value_of(col.feature, *iv));
            }
        }
    }
    row
}

/// Feature rows and kWh targets for every pair whose target is fully
/// observed; trailing pairs reaching past the data are dropped.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

pub fn build_training_matrix(
    window: &HistoricWindow,
    layout: &FeatureLayout,
    pairs: &[IntervalPair],
) -> TrainingMatrix {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for pair in pairs {
        match extract_target(window, layout.devices(), pair.target) {
            Ok(t) => {
                rows.push(extract_row(window, layout, pair.base));
                targets.push(t.kwh);
            }
            // pairs are time-ordered, so the first unobserved target starts
            // the trailing run that must be excluded
            Err(FeatureError::FutureTarget { .. }) => break,
            Err(e) => unreachable!("extract_target only fails on future targets: {e}"),
        }
    }
    TrainingMatrix { rows, targets }
}
