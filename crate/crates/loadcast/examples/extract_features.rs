//! Turn a base interval of raw readings into one named feature row plus its
//! target, including the sample-and-hold fill for a device that went silent
//! before the interval.
//!
//! Run with: cargo run --example extract_features

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::features::{extract_row, extract_target, FeatureCombination, FeatureLayout};
use loadcast::ingest::{HouseholdRoster, SensorId, TS_FORMAT};
use loadcast::replay::square_wave_household;
use loadcast::windowing::{HistoricWindow, Interval, MicroWindowSpec};

fn ts(s: &str) -> NaiveDateTime {
    NaiveDateTime::parse_from_str(s, TS_FORMAT).unwrap()
}

fn main() {
    let start = ts("2014-01-06 00:00:00");
    let log = square_wave_household(
        7,
        &[(100.0, 400.0), (25.0, 25.0)],
        TimeDelta::minutes(120),
        start,
        // one extra minute so the last target interval is fully observed
        TimeDelta::hours(4) + TimeDelta::minutes(1),
        TimeDelta::seconds(60),
    );
    // device 7:2 goes silent after 02:30; later intervals hold its last value
    let log: Vec<_> = log
        .into_iter()
        .filter(|r| r.sensor_id != SensorId::new("7:2") || r.ts < ts("2014-01-06 02:30:00"))
        .collect();

    let roster = HouseholdRoster::from_readings(7, log.iter()).unwrap();
    let mut window = HistoricWindow::new(7, TimeDelta::days(14));
    for r in &log {
        window.advance(r).unwrap();
    }

    let combo = FeatureCombination::complex();
    let layout = FeatureLayout::new(combo.clone(), &roster);
    println!("combination {combo} over {} devices -> {} columns:", roster.len(), layout.width());
    for column in layout.columns() {
        println!("  {column}");
    }

    let base = Interval::new(ts("2014-01-06 02:00:00"), ts("2014-01-06 03:00:00"));
    let row = extract_row(&window, &layout, base);
    println!("\nfeature row for base [{} .. {}):", base.start, base.end);
    for (column, value) in layout.columns().iter().zip(&row) {
        println!("  {column:<14} = {value:>10.4}");
    }

    let spec = MicroWindowSpec::default();
    let target = Interval::new(base.end, base.end + spec.horizon);
    let kwh = extract_target(&window, roster.devices(), target).unwrap();
    println!(
        "\ntarget consumption over [{} .. {}): {:.4} kWh",
        target.start, target.end, kwh.kwh
    );
}
