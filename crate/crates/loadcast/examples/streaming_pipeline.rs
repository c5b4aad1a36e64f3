//! Drive one household pipeline in both sink modes: first paced like a live
//! stream, printing each forecast as it is emitted, then as a batch ending
//! in a final error report.
//!
//! Run with: cargo run --example streaming_pipeline

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::features::FeatureCombination;
use loadcast::ingest::{HouseholdRoster, SensorReading, TS_FORMAT};
use loadcast::models::{ModelFamily, ModelSpec};
use loadcast::pipeline::{build_pipeline, PipelineConfig, PipelineOutput, SinkKind, StageItem};
use loadcast::replay::{square_wave_household, EventSource};
use loadcast::windowing::MicroWindowSpec;

fn fixture() -> (Vec<SensorReading>, PipelineConfig) {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let log = square_wave_household(
        9,
        &[(90.0, 360.0), (30.0, 30.0)],
        TimeDelta::minutes(120),
        start,
        TimeDelta::hours(8),
        TimeDelta::seconds(30),
    );
    let roster = HouseholdRoster::from_readings(9, log.iter()).unwrap();
    let mut config = PipelineConfig::new(
        roster,
        FeatureCombination::minimal(),
        ModelSpec::new(ModelFamily::Persistence),
    );
    // a short history span keeps the warm-up at 6 h of the 8 h log
    config.history_span = TimeDelta::hours(6);
    config.window_spec = MicroWindowSpec::default();
    (log, config)
}

fn main() {
    // live mode: paced source, forecasts emitted as the stream advances
    let (log, mut config) = fixture();
    let hours = (log.last().unwrap().ts - log[0].ts).num_minutes() as f64 / 60.0;
    println!("pacing {hours:.1} h of readings at 28800x (wall time about 1 s)\n");
    let source = EventSource::paced(log, 28_800.0).unwrap();
    let mut pipeline = build_pipeline(config.clone(), Box::new(source)).unwrap();
    loop {
        match pipeline.advance().unwrap() {
            StageItem::Item(PipelineOutput::Forecast(f)) => println!(
                "  {}  next hour {:.4} kWh  (model time {:?})",
                f.record.t_predict, f.record.forecast_kwh, f.model_time,
            ),
            StageItem::Item(PipelineOutput::Report(_)) => unreachable!("emit sink"),
            StageItem::Pending => std::thread::yield_now(),
            StageItem::EndOfStream => break,
        }
    }

    // analytics mode: same log as a batch, error report at end of stream
    let (log, _) = fixture();
    config.sink = SinkKind::ErrorAnalytics;
    let source = EventSource::batch(log);
    let mut pipeline = build_pipeline(config, Box::new(source)).unwrap();
    let (passed_through, report) = pipeline.drain().unwrap();
    let report = report.expect("analytics sink reports");
    assert!(passed_through.is_empty(), "analytics absorbs forecasts into the report");
    println!(
        "\nbatch replay of the same stream resolved {} forecasts against later readings:",
        report.n,
    );
    println!(
        "  MAPE {:.2} %  NRMSE {:.2} %  (house {}, horizon {} min)",
        report.mape, report.nrmse, report.house_id, report.horizon_min,
    );
}
