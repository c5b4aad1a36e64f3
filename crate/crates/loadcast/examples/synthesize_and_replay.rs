//! Generate a reproducible synthetic household and replay it both ways:
//! batch (as fast as the consumer pulls) and paced (inter-reading sleeps
//! compressed by a speedup factor). Content is identical; only timing moves.
//!
//! Run with: cargo run --example synthesize_and_replay

use std::time::Instant;

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::ingest::TS_FORMAT;
use loadcast::replay::{drain, DeviceProfile, EventSource, SyntheticProfile};

fn main() {
    let profile = SyntheticProfile {
        house_id: 12,
        devices: vec![
            DeviceProfile {
                base_watts: 60.0,
                on_watts: 450.0,
                on_probability: 0.35,
                slot_minutes: 30,
            },
            DeviceProfile {
                base_watts: 8.0,
                on_watts: 95.0,
                on_probability: 0.6,
                slot_minutes: 15,
            },
        ],
        noise_stddev: 4.0,
        seed: 42,
    };
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let log = loadcast::replay::generate_synthetic(
        &profile,
        start,
        TimeDelta::hours(2),
        TimeDelta::seconds(10),
    )
    .unwrap();
    println!("generated {} readings over 2 h from seed {}", log.len(), profile.seed);
    for r in log.iter().take(4) {
        println!("  {}", r.to_csv_record());
    }

    let batch_started = Instant::now();
    let batch = drain(&mut EventSource::batch(log.clone())).unwrap();
    let batch_elapsed = batch_started.elapsed();

    // 7200 s of data at speedup 14400 should replay in about half a second
    let paced_started = Instant::now();
    let paced = drain(&mut EventSource::paced(log, 14_400.0).unwrap()).unwrap();
    let paced_elapsed = paced_started.elapsed();

    assert_eq!(batch, paced, "pacing must never change content");
    println!(
        "batch replay: {} readings in {:?}; paced at 14400x: same content in {:?}",
        batch.len(),
        batch_elapsed,
        paced_elapsed
    );
}
