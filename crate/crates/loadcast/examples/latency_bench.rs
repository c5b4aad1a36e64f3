//! Time full retrain-plus-predict rounds for every model family on one
//! fixed training matrix and print the latency distribution of each as a
//! five-number boxplot.
//!
//! Run with: cargo run --release --example latency_bench

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::features::{build_training_matrix, FeatureCombination, FeatureLayout};
use loadcast::ingest::{HouseholdRoster, TS_FORMAT};
use loadcast::models::{ModelFamily, ModelSpec};
use loadcast::replay::square_wave_household;
use loadcast::runtime::measure_predictor_latency;
use loadcast::windowing::{enumerate_micro_windows, HistoricWindow, MicroWindowSpec};

fn main() {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let log = square_wave_household(
        4,
        &[(70.0, 280.0), (15.0, 15.0)],
        TimeDelta::minutes(120),
        start,
        TimeDelta::days(7) + TimeDelta::minutes(1),
        TimeDelta::seconds(120),
    );
    let roster = HouseholdRoster::from_readings(4, log.iter()).unwrap();
    let mut window = HistoricWindow::new(4, TimeDelta::days(7));
    for r in &log {
        window.advance(r).unwrap();
    }
    let spec = MicroWindowSpec::default();
    let pairs = enumerate_micro_windows(&window, &spec).unwrap();
    let layout = FeatureLayout::new(FeatureCombination::complex(), &roster);
    let matrix = build_training_matrix(&window, &layout, &pairs);
    let probe = matrix.rows.last().unwrap().clone();

    const REPS: usize = 40;
    println!(
        "timing {REPS} retrain+predict rounds per family on {} rows x {} features\n",
        matrix.rows.len(),
        layout.width(),
    );
    println!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "family", "min us", "q1 us", "median us", "q3 us", "max us",
    );
    for family in ModelFamily::ALL {
        let model_spec = ModelSpec::new(family).with_seed(11);
        let dist =
            measure_predictor_latency(&model_spec, &matrix.rows, &matrix.targets, &probe, REPS)
                .unwrap();
        let b = &dist.boxplot;
        println!(
            "{:<12} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
            family.name(),
            b.min_us,
            b.q1_us,
            b.median_us,
            b.q3_us,
            b.max_us,
        );
    }
    println!("\ntimings are machine-dependent; the spread matters, not the level");
}
