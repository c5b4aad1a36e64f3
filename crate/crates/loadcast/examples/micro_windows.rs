//! Split a sliding history into micro-windows: adjacent (base, target)
//! interval pairs laid out on an increment grid. This is how limited
//! history multiplies into many training rows.
//!
//! Run with: cargo run --example micro_windows

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::ingest::TS_FORMAT;
use loadcast::windowing::{
    enumerate_between, truncate_to_grid, MicroWindowSpec, STANDARD_HORIZONS_MIN,
};

fn main() {
    let spec = MicroWindowSpec::default();
    println!(
        "default spec: increment {} min, base {} min, horizon {} min",
        spec.increment.num_minutes(),
        spec.base_span.num_minutes(),
        spec.horizon.num_minutes()
    );

    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let end = start + TimeDelta::days(14);
    let pairs = enumerate_between(start, end, &spec).unwrap();
    println!("a 14 d history yields {} training pairs", pairs.len());
    for p in pairs.iter().take(3) {
        println!("  base [{} .. {})  ->  target [{} .. {})", p.base.start, p.base.end, p.target.start, p.target.end);
    }
    println!("  ...");
    let last = pairs.last().unwrap();
    println!("  base [{} .. {})  ->  target [{} .. {})", last.base.start, last.base.end, last.target.start, last.target.end);

    // off-grid history starts snap backward to the increment grid
    let odd = start + TimeDelta::minutes(7) + TimeDelta::seconds(11);
    println!(
        "\ngrid snapping: {} truncates to {}",
        odd,
        truncate_to_grid(odd, spec.increment)
    );

    println!("\npair counts per standard horizon over the same 14 d:");
    for &h in &STANDARD_HORIZONS_MIN {
        let spec = MicroWindowSpec::from_minutes(15, 60, h);
        let n = enumerate_between(start, end, &spec).unwrap().len();
        println!("  horizon {h:>5} min -> {n:>5} pairs");
    }
}
