//! Run six households through the keyed parallel runtime, show that worker
//! count never changes the forecasts, and print the router and latency
//! accounting that comes with every run.
//!
//! Run with: cargo run --example parallel_run

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::evaluation::ForecastRecord;
use loadcast::features::FeatureCombination;
use loadcast::ingest::{HouseholdRoster, TS_FORMAT};
use loadcast::models::{ModelFamily, ModelSpec};
use loadcast::pipeline::PipelineConfig;
use loadcast::replay::{square_wave_household, EventSource};
use loadcast::runtime::{run, RunOutcome};

fn fleet() -> (Vec<EventSource>, Vec<PipelineConfig>) {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let mut sources = Vec::new();
    let mut configs = Vec::new();
    for house_id in 1..=6u32 {
        let amp = 50.0 * house_id as f64;
        let log = square_wave_household(
            house_id,
            &[(amp, 4.0 * amp), (10.0, 10.0)],
            TimeDelta::minutes(120),
            start,
            TimeDelta::hours(8),
            TimeDelta::seconds(30),
        );
        let roster = HouseholdRoster::from_readings(house_id, log.iter()).unwrap();
        sources.push(EventSource::batch(log));
        let mut config = PipelineConfig::new(
            roster,
            FeatureCombination::minimal(),
            ModelSpec::new(ModelFamily::Persistence),
        );
        config.history_span = TimeDelta::hours(6);
        configs.push(config);
    }
    (sources, configs)
}

fn by_house(outcome: &RunOutcome) -> BTreeMap<u32, Vec<&ForecastRecord>> {
    let mut map: BTreeMap<u32, Vec<&ForecastRecord>> = BTreeMap::new();
    for f in &outcome.forecasts {
        map.entry(f.house_id).or_default().push(f);
    }
    map
}

fn main() {
    let (sources, configs) = fleet();
    let serial = run(sources, configs, 1).unwrap();
    let (sources, configs) = fleet();
    let parallel = run(sources, configs, 6).unwrap();

    let lhs = by_house(&serial);
    let rhs = by_house(&parallel);
    assert_eq!(lhs.len(), 6);
    for (house, records) in &lhs {
        assert_eq!(records, &rhs[house], "house {house} diverged");
    }
    println!(
        "1 worker and 6 workers produced identical forecasts for all {} households",
        lhs.len(),
    );
    for (house, records) in &lhs {
        let kwh: Vec<String> =
            records.iter().map(|r| format!("{:.3}", r.forecast_kwh)).collect();
        println!("  house {house}: {} forecasts [{}]", records.len(), kwh.join(", "));
    }

    println!(
        "\nrouter: {} readings routed, {} dropped for unknown households",
        parallel.router.routed, parallel.router.dropped_unknown,
    );
    let latency = &parallel.latency;
    println!(
        "latency over {} predictions ({:.0} predictions/s):",
        latency.samples.len(),
        latency.predictions_per_sec,
    );
    let global = latency.global.as_ref().expect("forecasts were emitted");
    println!(
        "  end-to-end  mean {:8.1} us  median {:8.1} us  p95 {:8.1} us  max {:8.1} us",
        global.mean_us, global.median_us, global.p95_us, global.max_us,
    );
    let model = latency.model_share.as_ref().expect("forecasts were emitted");
    println!(
        "  model only  mean {:8.1} us  median {:8.1} us  p95 {:8.1} us  max {:8.1} us",
        model.mean_us, model.median_us, model.p95_us, model.max_us,
    );
    println!("  histogram:");
    for bin in &latency.histogram {
        let label = if bin.le_us == u64::MAX {
            "     > 1 s".to_string()
        } else {
            format!("<= {:7} us", bin.le_us)
        };
        println!("    {label}: {}", bin.count);
    }
    assert!(parallel.panics.is_empty());
}
