//! Walk a household log forward through train-then-predict steps, compare
//! two model families on the same stream, and verify from the retrain audit
//! trail that no training target ever reached past its prediction instant.
//!
//! Run with: cargo run --example walk_forward_eval

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::evaluation::{error_report, walk_forward, WalkForwardConfig};
use loadcast::features::FeatureCombination;
use loadcast::ingest::{HouseholdRoster, TS_FORMAT};
use loadcast::models::{ModelFamily, ModelSpec};
use loadcast::replay::square_wave_household;

fn main() {
    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    // 16 days of data leave 2 days of prediction steps after the 14-day
    // history window has filled
    let log = square_wave_household(
        5,
        &[(80.0, 320.0), (40.0, 40.0)],
        TimeDelta::minutes(120),
        start,
        TimeDelta::days(16),
        TimeDelta::seconds(120),
    );
    let roster = HouseholdRoster::from_readings(5, log.iter()).unwrap();

    for family in [ModelFamily::Persistence, ModelFamily::TreeReg] {
        let mut config = WalkForwardConfig::new(
            FeatureCombination::complex(),
            ModelSpec::new(family).with_seed(11),
        );
        config.retrain_every = 24;
        let output = walk_forward(&log, &roster, &config).unwrap();
        let report = error_report(&output.records).unwrap();
        println!(
            "{:<12} {} forecasts, {} resolved: MAPE {:6.2} %  NRMSE {:6.2} %",
            family.name(),
            output.records.len(),
            report.n,
            report.mape,
            report.nrmse,
        );

        // every retrain must only have seen targets already in the past
        let mut min_slack = TimeDelta::MAX;
        for audit in &output.audits {
            let target_end = audit.max_target_end.expect("retrains saw data");
            assert!(target_end <= audit.t_predict, "leakage at {}", audit.t_predict);
            min_slack = min_slack.min(audit.t_predict - target_end);
        }
        let first = &output.audits[0];
        let last = &output.audits[output.audits.len() - 1];
        println!(
            "  {} retrains; first at {} on {} rows, last at {} on {} rows",
            output.audits.len(),
            first.t_predict,
            first.training_rows,
            last.t_predict,
            last.training_rows,
        );
        println!(
            "  newest training target always ended at or before the prediction \
             instant (tightest gap {} min)\n",
            min_slack.num_minutes(),
        );
    }
}
