//! Event sources: replay a historical log in batch or paced mode, and
//! generate synthetic household logs for tests and benchmarks.
//!
//! A source hands out readings through a single `next_event` function. Batch
//! mode emits as fast as the consumer pulls; paced mode sleeps the scaled
//! inter-arrival delta between readings so an hour of data replays in
//! `3600/speedup` seconds. Both modes yield identical content.

use std::time::{Duration, Instant};

use chrono::{NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{MeasurementType, PlugMeasurement, SensorId, SensorReading};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("next called after EndOfStream")]
    SourceExhausted,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("speedup must be > 0, got {0}")]
    InvalidSpeedup(f64),
}

/// What a pull on an event feed yields.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedItem {
    Event(SensorReading),
    /// No event available right now, but the feed is not closed. Only
    /// runtime-fed queues produce this; replay sources never do.
    Pending,
    /// The feed is drained. Returned exactly once; later pulls error.
    EndOfStream,
}

/// Anything that can feed readings into a pipeline.
pub trait EventFeed {
    fn next_event(&mut self) -> Result<FeedItem, ReplayError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacingMode {
    Batch,
    Paced { speedup: f64 },
}

/// Replays a time-ordered log of readings.
pub struct EventSource {
    mode: PacingMode,
    log: Vec<SensorReading>,
    cursor: usize,
    exhausted: bool,
    last_emit: Option<Instant>,
}

impl EventSource {
    /// Batch source: emits as fast as the consumer pulls.
    pub fn batch(log: Vec<SensorReading>) -> Self {
        Self::with_mode(log, PacingMode::Batch).expect("batch mode is always valid")
    }

    /// Paced source: sleeps `(ts_next - ts_prev)/speedup` between emissions.
    pub fn paced(log: Vec<SensorReading>, speedup: f64) -> Result<Self, ReplayError> {
        if !(speedup > 0.0) {
            return Err(ReplayError::InvalidSpeedup(speedup));
        }
        Self::with_mode(log, PacingMode::Paced { speedup })
    }

    fn with_mode(mut log: Vec<SensorReading>, mode: PacingMode) -> Result<Self, ReplayError> {
        // stable ordering; already-ordered logs pass through unchanged
        log.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
        Ok(Self { mode, log, cursor: 0, exhausted: false, last_emit: None })
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    fn pace(&mut self) {
        if let PacingMode::Paced { speedup } = self.mode {
            if self.cursor > 0 {
                let delta = self.log[self.cursor].ts - self.log[self.cursor - 1].ts;
                let scaled = Duration::from_secs_f64(
                    (delta.num_milliseconds().max(0) as f64 / 1000.0) / speedup,
                );
                // sleep the remainder of the scaled delta, measured from the
                // previous emission, so consumer processing time is absorbed
                // instead of drifting the schedule
                if let Some(prev) = self.last_emit {
                    let elapsed = prev.elapsed();
                    if scaled > elapsed {
                        std::thread::sleep(scaled - elapsed);
                    }
                } else {
                    std::thread::sleep(scaled);
                }
            }
        }
        self.last_emit = Some(Instant::now());
    }
}

impl EventFeed for EventSource {
    fn next_event(&mut self) -> Result<FeedItem, ReplayError> {
        if self.exhausted {
            return Err(ReplayError::SourceExhausted);
        }
        if self.cursor >= self.log.len() {
            self.exhausted = true;
            return Ok(FeedItem::EndOfStream);
        }
        self.pace();
        let reading = self.log[self.cursor].clone();
        self.cursor += 1;
        Ok(FeedItem::Event(reading))
    }
}

/// One synthetic device: draws an on/off state once per slot and holds it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub base_watts: f64,
    pub on_watts: f64,
    /// Probability that a slot is in the ON state.
    pub on_probability: f64,
    pub slot_minutes: u32,
}

/// Deterministic synthetic household. Same seed, same log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub house_id: u32,
    pub devices: Vec<DeviceProfile>,
    /// Gaussian watt noise added per sample (clamped at zero).
    #[serde(default)]
    pub noise_stddev: f64,
    pub seed: u64,
}

impl SyntheticProfile {
    fn validate(&self) -> Result<(), ReplayError> {
        if self.devices.is_empty() {
            return Err(ReplayError::InvalidProfile("no devices".into()));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.base_watts < 0.0 || d.on_watts < 0.0 {
                return Err(ReplayError::InvalidProfile(format!("device {i}: negative watts")));
            }
            if !(0.0..=1.0).contains(&d.on_probability) {
                return Err(ReplayError::InvalidProfile(format!(
                    "device {i}: on_probability outside [0,1]"
                )));
            }
            if d.slot_minutes == 0 {
                return Err(ReplayError::InvalidProfile(format!("device {i}: zero slot")));
            }
        }
        if self.noise_stddev < 0.0 {
            return Err(ReplayError::InvalidProfile("negative noise stddev".into()));
        }
        Ok(())
    }
}

/// Default sampling cadence of the plug meters.
pub const DEFAULT_SAMPLE_PERIOD: TimeDelta = TimeDelta::seconds(2);

fn synthetic_reading(house_id: u32, device_idx: usize, ts: NaiveDateTime, watts: f64) -> SensorReading {
    SensorReading {
        ts,
        mtype: MeasurementType::Plug(PlugMeasurement::Load),
        value: watts,
        unit: "Watt".into(),
        house_id,
        mac: format!("00:00:00:00:00:00:{:02x}", device_idx + 1),
        sensor_id: SensorId::new(format!("{house_id}:{}", device_idx + 1)),
    }
}

/// Generate a LOAD log for one synthetic household over `[start, start+span)`.
///
/// Every device produces a reading each `sample_period`. A device sits at
/// `base_watts` and jumps to `on_watts` for slots that win the profile's
/// Bernoulli draw; draws and noise come from seeded per-device generators, so
/// the log is reproducible from the profile alone.
pub fn generate_synthetic(
    profile: &SyntheticProfile,
    start: NaiveDateTime,
    span: TimeDelta,
    sample_period: TimeDelta,
) -> Result<Vec<SensorReading>, ReplayError> {
    profile.validate()?;
    if span <= TimeDelta::zero() || sample_period <= TimeDelta::zero() {
        return Err(ReplayError::InvalidProfile("span and sample_period must be positive".into()));
    }
    let mut log = Vec::new();
    for (idx, device) in profile.devices.iter().enumerate() {
        let mut slot_rng =
            ChaCha8Rng::seed_from_u64(profile.seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(idx as u64 + 1)));
        let mut noise_rng =
            ChaCha8Rng::seed_from_u64(profile.seed ^ (0xd1b54a32d192ed03u64.wrapping_mul(idx as u64 + 1)));
        let noise = if profile.noise_stddev > 0.0 {
            Some(Normal::new(0.0, profile.noise_stddev).expect("stddev validated"))
        } else {
            None
        };
        let slot = TimeDelta::minutes(device.slot_minutes as i64);
        let n_slots = ((span.num_seconds() + slot.num_seconds() - 1) / slot.num_seconds()) as usize;
        let states: Vec<bool> =
            (0..n_slots).map(|_| slot_rng.gen_bool(device.on_probability)).collect();
        let mut t = start;
        while t < start + span {
            let slot_idx = ((t - start).num_seconds() / slot.num_seconds()) as usize;
            let level = if states[slot_idx] { device.on_watts } else { device.base_watts };
            let watts = match noise {
                Some(n) => (level + n.sample(&mut noise_rng)).max(0.0),
                None => level,
            };
            log.push(synthetic_reading(profile.house_id, idx, t, watts));
            t += sample_period;
        }
    }
    log.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
    Ok(log)
}

/// Deterministic square-wave household: each device alternates between its
/// two levels every half period, starting on the first level. A fixture for
/// walk-forward and model comparisons where the future is exactly knowable.
pub fn square_wave_household(
    house_id: u32,
    devices: &[(f64, f64)],
    period: TimeDelta,
    start: NaiveDateTime,
    span: TimeDelta,
    sample_period: TimeDelta,
) -> Vec<SensorReading> {
    assert!(period > TimeDelta::zero() && span > TimeDelta::zero());
    let half = period.num_seconds() / 2;
    let mut log = Vec::new();
    for (idx, &(lo, hi)) in devices.iter().enumerate() {
        let mut t = start;
        while t < start + span {
            let phase = ((t - start).num_seconds() / half) % 2;
            let watts = if phase == 0 { lo } else { hi };
            log.push(synthetic_reading(house_id, idx, t, watts));
            t += sample_period;
        }
    }
    log.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
    log
}

/// Drain a feed into a vector. Test and CLI helper.
pub fn drain(feed: &mut dyn EventFeed) -> Result<Vec<SensorReading>, ReplayError> {
    let mut out = Vec::new();
    loop {
        match feed.next_event()? {
            FeedItem::Event(r) => out.push(r),
            FeedItem::Pending => continue,
            FeedItem::EndOfStream => return Ok(out),
        }
    }
}
