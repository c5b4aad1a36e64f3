//! Parse raw 9-column smart-plug CSV records, reject a malformed one, and
//! judge day-level data quality on a log with an injected outage.
//!
//! Run with: cargo run --example parse_lived

use chrono::{NaiveDateTime, TimeDelta};
use loadcast::ingest::{
    assess_all_days, parse_reading, select_evaluation_range, HouseholdRoster, TS_FORMAT,
};
use loadcast::replay::square_wave_household;

fn main() {
    let rows = [
        "2013-10-22 14:00:05,LOAD,126.5,Watt,4,00:26:ab:42:01:9f,4:2,2013,10",
        "2013-10-22 14:00:07,WORK,3.247,kWh,4,00:26:ab:42:01:9f,4:2,2013,10",
    ];
    println!("parsing {} records:", rows.len());
    for row in rows {
        let reading = parse_reading(row).expect("well-formed record");
        println!(
            "  {} {:>4} {:>8.3} {:<4} house {} sensor {}",
            reading.ts, reading.mtype, reading.value, reading.unit, reading.house_id,
            reading.sensor_id
        );
        assert_eq!(reading.to_csv_record(), row, "parsing loses nothing");
    }

    // the Year column must agree with the timestamp; 2014 here does not
    let bad = "2013-10-22 14:00:05,LOAD,126.5,Watt,4,00:26:ab:42:01:9f,4:2,2014,10";
    println!("\nmalformed record rejected: {}", parse_reading(bad).unwrap_err());

    let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT).unwrap();
    let log = square_wave_household(
        4,
        &[(40.0, 200.0), (15.0, 15.0)],
        TimeDelta::minutes(120),
        start,
        TimeDelta::days(5),
        TimeDelta::seconds(30),
    );
    // silence both devices for 3 h on the third day
    let outage_from = start + TimeDelta::days(2) + TimeDelta::hours(9);
    let outage_to = outage_from + TimeDelta::hours(3);
    let log: Vec<_> =
        log.into_iter().filter(|r| r.ts < outage_from || r.ts >= outage_to).collect();

    let roster = HouseholdRoster::from_readings(4, log.iter()).unwrap();
    let verdicts = assess_all_days(&log, &roster, TimeDelta::minutes(60));
    println!("\nday quality with a 3 h outage on day 3 (max gap 60 min):");
    for v in &verdicts {
        println!("  {}  usable={:<5}  {}", v.date, v.usable, v.reason);
    }
    let range = select_evaluation_range(&verdicts, 3).unwrap();
    println!(
        "evaluation range {}..={}: {} days total, {} skipped, {} used",
        range.first_day, range.last_day, range.total, range.skipped, range.used
    );
}
