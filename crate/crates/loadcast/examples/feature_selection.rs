//! Rank every k-sized feature combination from a pool by walking two
//! households forward and scoring each combination with average MAPE plus
//! its spread across households.
//!
//! Run with: cargo run --example feature_selection

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::evaluation::{
    enumerate_combinations, error_report, score_combo, walk_forward, ComboScore,
    WalkForwardConfig,
};
use loadcast::features::FeatureId;
use loadcast::ingest::{HouseholdRoster, SensorReading, TS_FORMAT};
use loadcast::models::{ModelFamily, ModelSpec};
use loadcast::replay::square_wave_household;

fn household(house_id: u32, devices: &[(f64, f64)]) -> Vec<SensorReading> {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    square_wave_household(
        house_id,
        devices,
        TimeDelta::minutes(120),
        start,
        TimeDelta::days(15),
        TimeDelta::seconds(120),
    )
}

fn main() {
    let homes = [
        household(1, &[(60.0, 240.0), (20.0, 20.0)]),
        household(2, &[(150.0, 30.0), (10.0, 90.0)]),
    ];

    let pool =
        [FeatureId::Summed, FeatureId::Wday, FeatureId::Hour, FeatureId::Last];
    let combos = enumerate_combinations(&pool, 2).unwrap();
    println!(
        "scoring {} combinations of 2 features from a pool of {} over {} households\n",
        combos.len(),
        pool.len(),
        homes.len(),
    );

    let mut scores: Vec<ComboScore> = combos
        .into_iter()
        .map(|combo| {
            let mapes: Vec<f64> = homes
                .iter()
                .map(|log| {
                    let roster =
                        HouseholdRoster::from_readings(log[0].house_id, log.iter()).unwrap();
                    let mut config = WalkForwardConfig::new(
                        combo.clone(),
                        ModelSpec::new(ModelFamily::GnbCls).with_seed(11),
                    );
                    config.retrain_every = 96;
                    let output = walk_forward(log, &roster, &config).unwrap();
                    error_report(&output.records).unwrap().mape
                })
                .collect();
            score_combo(combo, &mapes).unwrap()
        })
        .collect();
    scores.sort_by(|a, b| a.score.total_cmp(&b.score));

    println!("{:<16} {:>10} {:>10} {:>10}", "combination", "avg MAPE", "stddev", "score");
    for s in &scores {
        println!(
            "{:<16} {:>10.3} {:>10.3} {:>10.3}",
            s.combo.to_string(),
            s.avg_mape,
            s.stddev,
            s.score,
        );
    }
    println!("\nbest combination: {}", scores[0].combo);
}
