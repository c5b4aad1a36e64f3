//! Time-based sliding history per household, and its split into micro-windows.
//!
//! The historic window keeps the last `history_span` (default 14 days) of
//! LOAD readings per device. Micro-windowing lays adjacent
//! `[base | target]` interval pairs onto an increment grid across that
//! history, which multiplies the training rows that can be extracted from a
//! limited span: with the default 15 min increment, 60 min base and 60 min
//! horizon a full 14-day window yields 1337 pairs.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use chrono::{DateTime, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{SensorId, SensorReading};

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("late arrival: {arrived} is older than window max {max}")]
    LateArrival { arrived: NaiveDateTime, max: NaiveDateTime },
    #[error("window spans {span_s}s, need at least {required_s}s")]
    WindowTooShort { span_s: i64, required_s: i64 },
    #[error("window buffers LOAD readings only")]
    NotLoadReading,
    #[error("window is empty")]
    Empty,
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Interval {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn duration(&self) -> TimeDelta {
        self.end - self.start
    }

    pub fn hours(&self) -> f64 {
        (self.end - self.start).num_seconds() as f64 / 3600.0
    }

    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        self.start <= ts && ts < self.end
    }
}

/// Adjacent, non-overlapping feature-base and prediction-target intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPair {
    pub base: Interval,
    pub target: Interval,
}

impl IntervalPair {
    fn at(t0: NaiveDateTime, base_span: TimeDelta, horizon: TimeDelta) -> Self {
        let mid = t0 + base_span;
        Self { base: Interval::new(t0, mid), target: Interval::new(mid, mid + horizon) }
    }
}

/// Micro-window parametrization: every `increment`, the features of the last
/// `base_span` predict the next `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroWindowSpec {
    pub increment: TimeVal,
    pub base_span: TimeVal,
    pub horizon: TimeVal,
}

/// Duration stored as whole minutes; the serialized configuration unit.
pub type TimeVal = TimeDelta;

/// Forecast horizons evaluated in the error tables, in minutes.
pub const STANDARD_HORIZONS_MIN: [i64; 8] = [15, 30, 60, 90, 120, 360, 720, 1440];

impl MicroWindowSpec {
    pub fn new(increment: TimeDelta, base_span: TimeDelta, horizon: TimeDelta) -> Self {
        assert!(increment > TimeDelta::zero(), "increment must be positive");
        assert!(base_span > TimeDelta::zero(), "base_span must be positive");
        assert!(horizon > TimeDelta::zero(), "horizon must be positive");
        Self { increment, base_span, horizon }
    }

    pub fn from_minutes(increment_min: i64, base_min: i64, horizon_min: i64) -> Self {
        Self::new(
            TimeDelta::minutes(increment_min),
            TimeDelta::minutes(base_min),
            TimeDelta::minutes(horizon_min),
        )
    }

    /// Persistence scaling factor between target and base lengths.
    pub fn horizon_base_ratio(&self) -> f64 {
        self.horizon.num_seconds() as f64 / self.base_span.num_seconds() as f64
    }
}

impl Default for MicroWindowSpec {
    fn default() -> Self {
        Self::from_minutes(15, 60, 60)
    }
}

/// Truncate a timestamp down onto the epoch-anchored `increment` grid.
pub fn truncate_to_grid(ts: NaiveDateTime, increment: TimeDelta) -> NaiveDateTime {
    let secs = ts.and_utc().timestamp();
    let step = increment.num_seconds();
    let rem = secs.rem_euclid(step);
    DateTime::from_timestamp(secs - rem, 0).expect("in range").naive_utc()
}

/// Sliding LOAD-reading history of one household.
///
/// Appends must be time-ordered; a reading older than the newest one already
/// buffered is dropped and counted, never inserted. Appending evicts
/// everything older than `newest - history_span`.
#[derive(Debug, Clone)]
pub struct HistoricWindow {
    house_id: u32,
    history_span: TimeDelta,
    buffers: BTreeMap<SensorId, VecDeque<(NaiveDateTime, f64)>>,
    max_ts: Option<NaiveDateTime>,
    late_drops: u64,
    len: usize,
}

impl HistoricWindow {
    pub fn new(house_id: u32, history_span: TimeDelta) -> Self {
        assert!(history_span > TimeDelta::zero(), "history_span must be positive");
        Self {
            house_id,
            history_span,
            buffers: BTreeMap::new(),
            max_ts: None,
            late_drops: 0,
            len: 0,
        }
    }

    pub fn house_id(&self) -> u32 {
        self.house_id
    }

    pub fn history_span(&self) -> TimeDelta {
        self.history_span
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn late_drops(&self) -> u64 {
        self.late_drops
    }

    pub fn max_ts(&self) -> Option<NaiveDateTime> {
        self.max_ts
    }

    pub fn min_ts(&self) -> Option<NaiveDateTime> {
        self.buffers.values().filter_map(|b| b.front()).map(|(ts, _)| *ts).min()
    }

    pub fn span(&self) -> Option<TimeDelta> {
        Some(self.max_ts? - self.min_ts()?)
    }

    /// Append a LOAD reading and evict history older than the span.
    pub fn advance(&mut self, reading: &SensorReading) -> Result<(), WindowError> {
        if !reading.mtype.is_load() {
            return Err(WindowError::NotLoadReading);
        }
        if let Some(max) = self.max_ts {
            if reading.ts < max {
                self.late_drops += 1;
                return Err(WindowError::LateArrival { arrived: reading.ts, max });
            }
        }
        self.buffers
            .entry(reading.sensor_id.clone())
            .or_default()
            .push_back((reading.ts, reading.value));
        self.len += 1;
        self.max_ts = Some(reading.ts);
        let cutoff = reading.ts - self.history_span;
        for buf in self.buffers.values_mut() {
            while buf.front().is_some_and(|(ts, _)| *ts < cutoff) {
                buf.pop_front();
                self.len -= 1;
            }
        }
        Ok(())
    }

    /// Watt values of one device inside an interval, in time order.
    pub fn values_in<'a>(
        &'a self,
        device: &SensorId,
        interval: Interval,
    ) -> impl Iterator<Item = f64> + 'a {
        let (buf, lo, hi) = match self.buffers.get(device) {
            Some(buf) => {
                let lo = buf.partition_point(|(ts, _)| *ts < interval.start);
                let hi = buf.partition_point(|(ts, _)| *ts < interval.end);
                (Some(buf), lo, hi)
            }
            None => (None, 0, 0),
        };
        (lo..hi).filter_map(move |i| buf.map(|b| b[i].1))
    }

    /// Most recent watt value of a device strictly before `ts`.
    pub fn last_value_before(&self, device: &SensorId, ts: NaiveDateTime) -> Option<f64> {
        let buf = self.buffers.get(device)?;
        let idx = buf.partition_point(|(t, _)| *t < ts);
        if idx == 0 {
            None
        } else {
            Some(buf[idx - 1].1)
        }
    }

    /// Devices that have contributed at least one reading.
    pub fn seen_devices(&self) -> impl Iterator<Item = &SensorId> {
        self.buffers.keys()
    }

    /// Anchor of the micro-window grid: the earliest retained timestamp,
    /// truncated onto the increment grid. Keeps row identities stable across
    /// successive retrains.
    pub fn grid_start(&self, increment: TimeDelta) -> Option<NaiveDateTime> {
        Some(truncate_to_grid(self.min_ts()?, increment))
    }
}

/// All `[base | target]` pairs that fit inside the window, oldest first.
///
/// Pair `i` starts at `grid_start + i * increment`; the last pair's target
/// still ends at or before the newest buffered reading, so every target is
/// fully observed.
pub fn enumerate_micro_windows(
    window: &HistoricWindow,
    spec: &MicroWindowSpec,
) -> Result<Vec<IntervalPair>, WindowError> {
    let start = window.grid_start(spec.increment).ok_or(WindowError::Empty)?;
    let end = window.max_ts().ok_or(WindowError::Empty)?;
    enumerate_between(start, end, spec)
}

/// Grid enumeration between two instants; exposed for walk-forward replays
/// that cap the usable history at the prediction instant.
pub fn enumerate_between(
    start: NaiveDateTime,
    end: NaiveDateTime,
    spec: &MicroWindowSpec,
) -> Result<Vec<IntervalPair>, WindowError> {
    let span = end - start;
    let required = spec.base_span + spec.horizon;
    if span < required {
        return Err(WindowError::WindowTooShort {
            span_s: span.num_seconds(),
            required_s: required.num_seconds(),
        });
    }
    let count = ((span - required).num_seconds() / spec.increment.num_seconds()) + 1;
    let mut pairs = Vec::with_capacity(count as usize);
    for i in 0..count {
        pairs.push(IntervalPair::at(start + spec.increment * (i as i32), spec.base_span, spec.horizon));
    }
    Ok(pairs)
}

/// The live base interval ending at `now`, paired with a target that lies in
/// the future and therefore carries no data yet.
pub fn current_base(
    window: &HistoricWindow,
    spec: &MicroWindowSpec,
    now: NaiveDateTime,
) -> Result<IntervalPair, WindowError> {
    let min = window.min_ts().ok_or(WindowError::Empty)?;
    let base_start = now - spec.base_span;
    if base_start < min {
        return Err(WindowError::WindowTooShort {
            span_s: (now - min).num_seconds(),
            required_s: spec.base_span.num_seconds(),
        });
    }
    Ok(IntervalPair::at(base_start, spec.base_span, spec.horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{MeasurementType, PlugMeasurement, TS_FORMAT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TS_FORMAT).unwrap()
    }

    fn reading(sensor: &str, at: NaiveDateTime, watts: f64) -> SensorReading {
        SensorReading {
            ts: at,
            mtype: MeasurementType::Plug(PlugMeasurement::Load),
            value: watts,
            unit: "Watt".into(),
            house_id: 1,
            mac: "00".into(),
            sensor_id: SensorId::new(sensor),
        }
    }

    const T0: &str = "2014-01-06 00:00:00"; // Monday, grid-aligned

    fn window_spanning(span: TimeDelta) -> HistoricWindow {
        let mut w = HistoricWindow::new(1, TimeDelta::days(30));
        w.advance(&reading("1:1", ts(T0), 5.0)).unwrap();
        w.advance(&reading("1:1", ts(T0) + span, 7.0)).unwrap();
        w
    }

    #[test]
    fn advance_grows_and_orders() {
        let mut w = HistoricWindow::new(1, TimeDelta::days(14));
        assert!(w.is_empty());
        w.advance(&reading("1:1", ts(T0), 10.0)).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.min_ts(), Some(ts(T0)));
        assert_eq!(w.max_ts(), Some(ts(T0)));
    }

    #[test]
    fn eviction_drops_oldest_second() {
        let mut w = HistoricWindow::new(1, TimeDelta::days(14));
        let start = ts(T0);
        w.advance(&reading("1:1", start, 1.0)).unwrap();
        w.advance(&reading("1:1", start + TimeDelta::days(14), 2.0)).unwrap();
        assert_eq!(w.len(), 2, "exactly 14d span is retained");
        w.advance(&reading("1:1", start + TimeDelta::days(14) + TimeDelta::seconds(1), 3.0))
            .unwrap();
        assert_eq!(w.len(), 2, "oldest second evicted");
        assert_eq!(w.min_ts(), Some(start + TimeDelta::days(14)));
    }

    #[test]
    fn late_arrival_dropped_and_counted() {
        let mut w = HistoricWindow::new(1, TimeDelta::days(14));
        w.advance(&reading("1:1", ts(T0) + TimeDelta::minutes(5), 1.0)).unwrap();
        let err = w.advance(&reading("1:1", ts(T0), 9.0)).unwrap_err();
        assert!(matches!(err, WindowError::LateArrival { .. }));
        assert_eq!(w.len(), 1);
        assert_eq!(w.late_drops(), 1);
    }

    #[test]
    fn equal_timestamps_are_accepted() {
        let mut w = HistoricWindow::new(1, TimeDelta::days(14));
        w.advance(&reading("1:1", ts(T0), 1.0)).unwrap();
        w.advance(&reading("1:2", ts(T0), 2.0)).unwrap();
        assert_eq!(w.len(), 2);
    }

    fn brute_force_count(span: TimeDelta, spec: &MicroWindowSpec) -> usize {
        let start = truncate_to_grid(ts(T0), spec.increment);
        let end = ts(T0) + span;
        let mut count = 0;
        let mut t0 = start;
        while t0 + spec.base_span + spec.horizon <= end {
            count += 1;
            t0 += spec.increment;
        }
        count
    }

    #[test]
    fn canonical_configuration_yields_1337_pairs() {
        let w = window_spanning(TimeDelta::days(14));
        let spec = MicroWindowSpec::default();
        let pairs = enumerate_micro_windows(&w, &spec).unwrap();
        assert_eq!(pairs.len(), 1337);
        assert_eq!(pairs.len(), brute_force_count(TimeDelta::days(14), &spec));
        // first pair sits at the window start, last target ends at window end
        assert_eq!(pairs[0].base.start, ts(T0));
        assert_eq!(pairs.last().unwrap().target.end, ts(T0) + TimeDelta::days(14));
    }

    #[test]
    fn exact_span_gives_single_pair() {
        let spec = MicroWindowSpec::default();
        let w = window_spanning(TimeDelta::minutes(120));
        let pairs = enumerate_micro_windows(&w, &spec).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].base, Interval::new(ts(T0), ts(T0) + TimeDelta::minutes(60)));
        assert_eq!(
            pairs[0].target,
            Interval::new(ts(T0) + TimeDelta::minutes(60), ts(T0) + TimeDelta::minutes(120))
        );
    }

    #[test]
    fn one_minute_short_is_an_error() {
        let w = window_spanning(TimeDelta::minutes(119));
        let err = enumerate_micro_windows(&w, &MicroWindowSpec::default()).unwrap_err();
        assert!(matches!(err, WindowError::WindowTooShort { .. }));
    }

    #[test]
    fn count_formula_matches_brute_force_on_random_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(20140106);
        for case in 0..50 {
            let spec = MicroWindowSpec::from_minutes(
                rng.gen_range(1..=60),
                rng.gen_range(1..=240),
                rng.gen_range(1..=1440),
            );
            let span = TimeDelta::minutes(rng.gen_range(1..=30 * 24 * 60));
            let w = window_spanning(span);
            let expected = brute_force_count(span, &spec);
            match enumerate_micro_windows(&w, &spec) {
                Ok(pairs) => assert_eq!(pairs.len(), expected, "case {case} spec {spec:?}"),
                Err(_) => assert_eq!(expected, 0, "case {case} spec {spec:?}"),
            }
        }
    }

    #[test]
    fn pairs_sit_on_the_increment_grid() {
        let spec = MicroWindowSpec::default();
        // unaligned start: 00:07:31 truncates to 00:00:00
        let mut w = HistoricWindow::new(1, TimeDelta::days(30));
        w.advance(&reading("1:1", ts("2014-01-06 00:07:31"), 5.0)).unwrap();
        w.advance(&reading("1:1", ts("2014-01-06 06:00:00"), 7.0)).unwrap();
        let pairs = enumerate_micro_windows(&w, &spec).unwrap();
        assert_eq!(pairs[0].base.start, ts(T0));
        let inc = spec.increment.num_seconds();
        for (a, b) in pairs.iter().zip(pairs.iter().skip(1)) {
            assert!(b.base.start > a.base.start);
            assert_eq!((b.base.start - a.base.start).num_seconds(), inc);
        }
        for p in &pairs {
            assert_eq!(p.base.end, p.target.start, "base and target are adjacent");
            assert_eq!(p.base.start.and_utc().timestamp() % inc, 0);
        }
    }

    #[test]
    fn current_base_is_trailing_span() {
        let spec = MicroWindowSpec::default();
        let w = window_spanning(TimeDelta::hours(5));
        let now = ts(T0) + TimeDelta::hours(5);
        let live = current_base(&w, &spec, now).unwrap();
        assert_eq!(live.base, Interval::new(now - TimeDelta::minutes(60), now));
        assert_eq!(live.target, Interval::new(now, now + TimeDelta::minutes(60)));
    }

    #[test]
    fn current_base_needs_full_base_span() {
        let spec = MicroWindowSpec::default();
        let w = window_spanning(TimeDelta::hours(5));
        let err = current_base(&w, &spec, ts(T0) + TimeDelta::minutes(30)).unwrap_err();
        assert!(matches!(err, WindowError::WindowTooShort { .. }));
    }

    #[test]
    fn current_base_matches_last_enumerated_pair_of_extended_window() {
        // oracle: extend the window by one horizon; the last enumerated pair
        // of the extended window is the live pair at `now`
        let spec = MicroWindowSpec::default();
        let now = ts(T0) + TimeDelta::hours(6);
        let w = window_spanning(TimeDelta::hours(6));
        let live = current_base(&w, &spec, now).unwrap();
        let extended = window_spanning(TimeDelta::hours(7));
        let pairs = enumerate_micro_windows(&extended, &spec).unwrap();
        assert_eq!(*pairs.last().unwrap(), live);
    }

    #[test]
    fn values_in_respects_half_open_bounds() {
        let mut w = HistoricWindow::new(1, TimeDelta::days(1));
        let dev = SensorId::new("1:1");
        for m in 0..10 {
            w.advance(&reading("1:1", ts(T0) + TimeDelta::minutes(m), m as f64)).unwrap();
        }
        let iv = Interval::new(ts(T0) + TimeDelta::minutes(2), ts(T0) + TimeDelta::minutes(5));
        let vals: Vec<f64> = w.values_in(&dev, iv).collect();
        assert_eq!(vals, vec![2.0, 3.0, 4.0]);
        assert_eq!(w.last_value_before(&dev, iv.start), Some(1.0));
        assert_eq!(w.last_value_before(&dev, ts(T0)), None);
    }

    #[test]
    fn eviction_keeps_enumerated_intervals_covered() {
        let spec = MicroWindowSpec::from_minutes(5, 15, 15);
        let mut w = HistoricWindow::new(1, TimeDelta::hours(2));
        let mut t = ts(T0);
        let mut full_log: Vec<(NaiveDateTime, f64)> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for step in 0..600 {
            let v = rng.gen_range(0.0..100.0);
            w.advance(&reading("1:1", t, v)).unwrap();
            full_log.push((t, v));
            t += TimeDelta::seconds(47); // deliberately off-grid cadence
            if step % 50 != 0 {
                continue;
            }
            if let Ok(pairs) = enumerate_micro_windows(&w, &spec) {
                let min = w.min_ts().unwrap();
                let dev = SensorId::new("1:1");
                for p in &pairs {
                    for iv in [p.base, p.target] {
                        let got: Vec<f64> = w.values_in(&dev, iv).collect();
                        let expect: Vec<f64> = full_log
                            .iter()
                            .filter(|(ts, _)| *ts >= min && iv.contains(*ts))
                            .map(|(_, v)| *v)
                            .collect();
                        assert_eq!(got, expect);
                    }
                }
            }
        }
    }
}
