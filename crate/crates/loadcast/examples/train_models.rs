//! Fit every model family on the same training matrix, compare their
//! forecasts for a held-out micro-window against the truth, and dump one
//! fitted model as a versioned JSON blob.
//!
//! Run with: cargo run --example train_models

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::features::{
    build_training_matrix, extract_target, FeatureCombination, FeatureLayout,
};
use loadcast::ingest::{HouseholdRoster, TS_FORMAT};
use loadcast::models::{fit, predict, ModelFamily, ModelSpec, PredictContext};
use loadcast::replay::square_wave_household;
use loadcast::windowing::{enumerate_micro_windows, HistoricWindow, MicroWindowSpec};

fn main() {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    // hourly alternation between 60 W and 240 W is trivially learnable, so
    // the trained families should beat plain persistence by a wide margin
    let log = square_wave_household(
        3,
        &[(60.0, 240.0), (20.0, 20.0)],
        TimeDelta::minutes(120),
        start,
        TimeDelta::days(14) + TimeDelta::minutes(1),
        TimeDelta::seconds(60),
    );
    let roster = HouseholdRoster::from_readings(3, log.iter()).unwrap();
    let mut window = HistoricWindow::new(3, TimeDelta::days(14));
    for r in &log {
        window.advance(r).unwrap();
    }

    let spec = MicroWindowSpec::default();
    let pairs = enumerate_micro_windows(&window, &spec).unwrap();
    let layout = FeatureLayout::new(FeatureCombination::complex(), &roster);
    let matrix = build_training_matrix(&window, &layout, &pairs);

    // hold the newest micro-window out as the probe
    let n = matrix.rows.len();
    let (train_x, probe_x) = (&matrix.rows[..n - 1], &matrix.rows[n - 1]);
    let (train_y, truth) = (&matrix.targets[..n - 1], matrix.targets[n - 1]);
    let probe = &pairs[n - 1];
    let base_consum = extract_target(&window, layout.devices(), probe.base).unwrap();
    let ctx = PredictContext {
        current_consum_kwh: base_consum.kwh,
        horizon_base_ratio: spec.horizon_base_ratio(),
    };

    println!(
        "trained on {} rows x {} features; probe base [{} .. {})",
        n - 1,
        layout.width(),
        probe.base.start,
        probe.base.end,
    );
    println!("actual consumption over the probe target hour: {truth:.4} kWh\n");

    for family in ModelFamily::ALL {
        let model_spec = ModelSpec::new(family).with_seed(11);
        let fitted = fit(&model_spec, train_x, train_y).unwrap();
        let forecast = predict(&fitted, probe_x, &ctx).unwrap();
        println!(
            "  {:<12} -> {forecast:.4} kWh  (error {:+.4})",
            family.name(),
            forecast - truth,
        );
    }

    let spec_gnb = ModelSpec::new(ModelFamily::GnbCls).with_seed(11);
    let gnb = fit(&spec_gnb, train_x, train_y).unwrap();
    let blob = gnb.to_json();
    println!(
        "\nserialized {} blob ({} lines), head:",
        gnb.family().name(),
        blob.lines().count()
    );
    for line in blob.lines().take(14) {
        println!("  {line}");
    }
    println!("  ...");
}
