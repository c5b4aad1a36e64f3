//! Walk-forward evaluation over time-ordered logs, the MAPE/NRMSE error
//! metrics, weekly error stability, and the feature-combination search
//! ranked by Score.
//!
//! Walk-forward never trains on the future: at every prediction instant the
//! training pairs are capped so each target interval ends at or before the
//! instant, and an audit trail of every retrain makes that assertable from
//! the outside.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, NaiveDateTime, TimeDelta};
use itertools::Itertools;
use serde::Serialize;
use thiserror::Error;

use crate::features::{
    build_training_matrix, device_series, extract_row, FeatureCombination, FeatureId,
    FeatureLayout, SeriesStats,
};
use crate::ingest::{HouseholdRoster, SensorReading};
use crate::models::{fit, predict, FittedModel, ModelError, ModelSpec, PredictContext};
use crate::windowing::{
    current_base, enumerate_between, truncate_to_grid, HistoricWindow, MicroWindowSpec,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("every actual in the series is zero; the relative error is undefined")]
    AllZeroActuals,
    #[error("series lengths differ: {actuals} actuals vs {forecasts} forecasts")]
    LengthMismatch { actuals: usize, forecasts: usize },
    #[error("metric needs at least one resolved forecast")]
    EmptySeries,
    #[error("need {need} complete consecutive weeks, found {got}")]
    InsufficientWeeks { got: usize, need: usize },
    #[error("feature pool holds {pool} features, cannot choose {k}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("score needs at least 2 households, got {got}")]
    TooFewHouseholds { got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean absolute percentage error over pairs with a non-zero actual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapeResult {
    pub mape: f64,
    /// Pairs that entered the mean.
    pub n_used: usize,
    /// Pairs excluded because the actual was zero.
    pub zero_actual_count: usize,
}

/// MAPE in percent. Zero-actual pairs cannot contribute a relative error;
/// they are excluded and counted instead of poisoning the mean.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<MapeResult, EvalError> {
    check_series(actuals, forecasts)?;
    let mut sum = 0.0;
    let mut n_used = 0usize;
    let mut zero_actual_count = 0usize;
    for (&a, &f) in actuals.iter().zip(forecasts) {
        if a == 0.0 {
            zero_actual_count += 1;
        } else {
            sum += (a - f).abs() / a;
            n_used += 1;
        }
    }
    if n_used == 0 {
        return Err(EvalError::AllZeroActuals);
    }
    Ok(MapeResult { mape: sum / n_used as f64 * 100.0, n_used, zero_actual_count })
}

/// Root-mean-square error normalized by the actuals' root sum of squares,
/// in percent.
pub fn nrmse(actuals: &[f64], forecasts: &[f64]) -> Result<f64, EvalError> {
    check_series(actuals, forecasts)?;
    let err_ss: f64 = actuals.iter().zip(forecasts).map(|(&a, &f)| (a - f).powi(2)).sum();
    let actual_ss: f64 = actuals.iter().map(|&a| a * a).sum();
    if actual_ss == 0.0 {
        return Err(EvalError::AllZeroActuals);
    }
    Ok((err_ss.sqrt() / actual_ss.sqrt()) * 100.0)
}

fn check_series(actuals: &[f64], forecasts: &[f64]) -> Result<(), EvalError> {
    if actuals.len() != forecasts.len() {
        return Err(EvalError::LengthMismatch {
            actuals: actuals.len(),
            forecasts: forecasts.len(),
        });
    }
    if actuals.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    Ok(())
}

/// One issued forecast; the actual fills in once the target interval has
/// fully elapsed and stays absent for targets past the end of the log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastRecord {
    pub house_id: u32,
    pub horizon_min: i64,
    pub t_predict: NaiveDateTime,
    pub forecast_kwh: f64,
    pub actual_kwh: Option<f64>,
}

/// Proof material for the no-leakage invariant: what each retrain saw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainAudit {
    pub t_predict: NaiveDateTime,
    pub training_rows: usize,
    /// Latest end of any training target interval; never past t_predict.
    pub max_target_end: Option<NaiveDateTime>,
}

#[derive(Debug, Clone)]
pub struct WalkForwardConfig {
    pub history_span: TimeDelta,
    pub window_spec: MicroWindowSpec,
    pub combo: FeatureCombination,
    pub model: ModelSpec,
    /// Predictions per full retrain; 1 retrains at every step.
    pub retrain_every: usize,
}

impl WalkForwardConfig {
    pub fn new(combo: FeatureCombination, model: ModelSpec) -> Self {
        Self {
            history_span: TimeDelta::days(14),
            window_spec: MicroWindowSpec::default(),
            combo,
            model,
            retrain_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WalkForwardOutput {
    pub records: Vec<ForecastRecord>,
    pub audits: Vec<RetrainAudit>,
}

/// Replay a household log through train-then-predict steps on the increment
/// grid. The first step fires once one full history span has been observed;
/// every step trains only on micro-windows whose targets lie entirely in
/// the past of the prediction instant.
pub fn walk_forward(
    readings: &[SensorReading],
    roster: &HouseholdRoster,
    config: &WalkForwardConfig,
) -> Result<WalkForwardOutput, EvalError> {
    assert!(config.retrain_every >= 1, "retrain_every must be at least 1");
    let house_id = roster.house_id();
    let mut load: Vec<&SensorReading> = readings
        .iter()
        .filter(|r| r.house_id == house_id && r.mtype.is_load())
        .collect();
    load.sort_by(|a, b| (a.ts, &a.sensor_id).cmp(&(b.ts, &b.sensor_id)));

    let mut out = WalkForwardOutput { records: Vec::new(), audits: Vec::new() };
    let Some(first) = load.first() else {
        return Ok(out);
    };

    let spec = &config.window_spec;
    let horizon_min = spec.horizon.num_minutes();
    let layout = FeatureLayout::new(config.combo.clone(), roster);
    let mut window = HistoricWindow::new(house_id, config.history_span);

    // first prediction instant: the increment-grid point at or after one
    // full history span of data
    let warm = first.ts + config.history_span;
    let mut trigger = truncate_to_grid(warm, spec.increment);
    if trigger < warm {
        trigger += spec.increment;
    }

    let mut fitted: Option<FittedModel> = None;
    let mut steps_since_retrain = 0usize;
    let mut pending: Vec<(usize, NaiveDateTime)> = Vec::new();

    let step = |window: &HistoricWindow,
                t: NaiveDateTime,
                fitted: &mut Option<FittedModel>,
                steps_since_retrain: &mut usize,
                out: &mut WalkForwardOutput,
                pending: &mut Vec<(usize, NaiveDateTime)>|
     -> Result<(), EvalError> {
        resolve_pending(window, &layout, pending, &mut out.records);

        let Ok(live) = current_base(window, spec, t) else {
            return Ok(()); // not enough buffered history yet
        };
        let max_ts = window.max_ts().expect("window non-empty at a trigger");
        let grid_start = window.grid_start(spec.increment).expect("window non-empty");
        // cap training enumeration so no target interval crosses t
        let Ok(pairs) = enumerate_between(grid_start, max_ts.min(t), spec) else {
            return Ok(());
        };

        let needs_fit = fitted.is_none() || *steps_since_retrain >= config.retrain_every;
        if needs_fit {
            let matrix = build_training_matrix(window, &layout, &pairs);
            match fit(&config.model, &matrix.rows, &matrix.targets) {
                Ok(model) => {
                    out.audits.push(RetrainAudit {
                        t_predict: t,
                        training_rows: matrix.rows.len(),
                        max_target_end: pairs
                            .get(matrix.rows.len().wrapping_sub(1))
                            .map(|p| p.target.end),
                    });
                    *fitted = Some(model);
                    *steps_since_retrain = 0;
                }
                Err(ModelError::EmptyTraining) => return Ok(()),
                Err(e) => return Err(e.into()),
            }
        }
        let model = fitted.as_ref().expect("fitted above");

        let x = extract_row(window, &layout, live.base);
        let current_consum_kwh = layout
            .devices()
            .iter()
            .map(|d| SeriesStats::of(&device_series(window, d, live.base)).consum_kwh(live.base))
            .sum();
        let ctx =
            PredictContext { current_consum_kwh, horizon_base_ratio: spec.horizon_base_ratio() };
        let forecast_kwh = predict(model, &x, &ctx)?;
        *steps_since_retrain += 1;

        out.records.push(ForecastRecord {
            house_id,
            horizon_min,
            t_predict: t,
            forecast_kwh,
            actual_kwh: None,
        });
        pending.push((out.records.len() - 1, live.target.end));
        Ok(())
    };

    for reading in load {
        // predict before admitting the reading: the window then only holds
        // strictly earlier data at the prediction instant
        while reading.ts >= trigger {
            step(
                &window,
                trigger,
                &mut fitted,
                &mut steps_since_retrain,
                &mut out,
                &mut pending,
            )?;
            trigger += spec.increment;
        }
        // late duplicates within one log were already dropped upstream
        let _ = window.advance(reading);
    }
    resolve_pending(&window, &layout, &mut pending, &mut out.records);
    Ok(out)
}

/// Fill in actuals for forecasts whose target interval is now fully
/// observed; targets past the log's end stay unresolved.
fn resolve_pending(
    window: &HistoricWindow,
    layout: &FeatureLayout,
    pending: &mut Vec<(usize, NaiveDateTime)>,
    records: &mut [ForecastRecord],
) {
    let Some(max_ts) = window.max_ts() else {
        return;
    };
    pending.retain(|&(idx, target_end)| {
        if target_end > max_ts {
            return true;
        }
        let record = &mut records[idx];
        let target = crate::windowing::Interval::new(
            record.t_predict,
            record.t_predict + TimeDelta::minutes(record.horizon_min),
        );
        let kwh = layout
            .devices()
            .iter()
            .map(|d| SeriesStats::of(&device_series(window, d, target)).consum_kwh(target))
            .sum();
        record.actual_kwh = Some(kwh);
        false
    });
}

/// Error metrics of one household at one horizon, over resolved forecasts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub house_id: u32,
    pub horizon_min: i64,
    pub mape: f64,
    pub nrmse: f64,
    /// Resolved forecast/actual pairs, including zero-actual ones.
    pub n: usize,
    pub zero_actual_count: usize,
}

pub fn error_report(records: &[ForecastRecord]) -> Result<ErrorReport, EvalError> {
    let resolved: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.actual_kwh.map(|a| (a, r.forecast_kwh)))
        .collect();
    if resolved.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let actuals: Vec<f64> = resolved.iter().map(|p| p.0).collect();
    let forecasts: Vec<f64> = resolved.iter().map(|p| p.1).collect();
    let m = mape(&actuals, &forecasts)?;
    let nr = nrmse(&actuals, &forecasts)?;
    Ok(ErrorReport {
        house_id: records[0].house_id,
        horizon_min: records[0].horizon_min,
        mape: m.mape,
        nrmse: nr,
        n: resolved.len(),
        zero_actual_count: m.zero_actual_count,
    })
}

/// Per-household error volatility: the stddev of weekly MAPE over every run
/// of 8 consecutive complete weeks, averaged per household, then averaged
/// across households.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub per_household: Vec<(u32, f64)>,
    pub mean_stddev: f64,
    pub weeks_required: usize,
}

pub const STABILITY_WEEKS: usize = 8;

pub fn weekly_stability(records: &[ForecastRecord]) -> Result<StabilityReport, EvalError> {
    let mut by_house: BTreeMap<u32, Vec<&ForecastRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.actual_kwh.is_some()) {
        by_house.entry(r.house_id).or_default().push(r);
    }
    if by_house.is_empty() {
        return Err(EvalError::EmptySeries);
    }

    let mut per_household = Vec::new();
    for (house, recs) in by_house {
        let weekly = weekly_mapes(&recs)?;
        let runs = stddevs_over_runs(&weekly, STABILITY_WEEKS)?;
        let mean_run = runs.iter().sum::<f64>() / runs.len() as f64;
        per_household.push((house, mean_run));
    }
    let mean_stddev =
        per_household.iter().map(|(_, s)| s).sum::<f64>() / per_household.len() as f64;
    Ok(StabilityReport { per_household, mean_stddev, weeks_required: STABILITY_WEEKS })
}

/// MAPE per complete calendar week (keyed by the week's Monday), oldest
/// first. A boundary week counts as complete only when the records cover it
/// end to end: a prediction at its very start, and a final target reaching
/// its end.
fn weekly_mapes(records: &[&ForecastRecord]) -> Result<Vec<f64>, EvalError> {
    let mut weeks: BTreeMap<NaiveDate, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let monday = week_monday(r.t_predict.date());
        let bucket = weeks.entry(monday).or_default();
        bucket.0.push(r.actual_kwh.expect("resolved"));
        bucket.1.push(r.forecast_kwh);
    }

    let first_t = records.iter().map(|r| r.t_predict).min().expect("non-empty");
    let last_end = records
        .iter()
        .map(|r| r.t_predict + TimeDelta::minutes(r.horizon_min))
        .max()
        .expect("non-empty");
    let keys: Vec<NaiveDate> = weeks.keys().copied().collect();
    if let Some(&first_week) = keys.first() {
        if first_t > first_week.and_hms_opt(0, 0, 0).expect("valid") {
            weeks.remove(&first_week);
        }
    }
    if let Some(&last_week) = keys.last() {
        let week_end = (last_week + Days::new(7)).and_hms_opt(0, 0, 0).expect("valid");
        if last_end < week_end {
            weeks.remove(&last_week);
        }
    }

    let mut result = Vec::with_capacity(weeks.len());
    for (actuals, forecasts) in weeks.values() {
        result.push(mape(actuals, forecasts)?.mape);
    }
    Ok(result)
}

fn week_monday(date: NaiveDate) -> NaiveDate {
    date - Days::new(date.weekday().num_days_from_monday() as u64)
}

/// Sample standard deviations (N-1 divisor) over each sliding run of
/// `run_len` weeks.
fn stddevs_over_runs(weekly: &[f64], run_len: usize) -> Result<Vec<f64>, EvalError> {
    if weekly.len() < run_len {
        return Err(EvalError::InsufficientWeeks { got: weekly.len(), need: run_len });
    }
    Ok(weekly.windows(run_len).map(sample_stddev).collect())
}

fn sample_stddev(values: &[f64]) -> f64 {
    debug_assert!(values.len() >= 2);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// All size-k feature subsets of the pool, in deterministic lexicographic
/// order of the canonical feature ordering.
pub fn enumerate_combinations(
    pool: &[FeatureId],
    k: usize,
) -> Result<Vec<FeatureCombination>, EvalError> {
    let mut sorted = pool.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() < k {
        return Err(EvalError::PoolTooSmall { pool: sorted.len(), k });
    }
    Ok(sorted
        .into_iter()
        .combinations(k)
        .map(|ids| FeatureCombination::new(ids).expect("k >= 1"))
        .collect())
}

/// Ranking entry: average household MAPE plus its spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboScore {
    pub combo: FeatureCombination,
    pub avg_mape: f64,
    pub stddev: f64,
    pub score: f64,
}

/// Score = mean(MAPE across households) + sample stddev; low scores mean
/// accurate and consistent.
pub fn score_combo(
    combo: FeatureCombination,
    per_household_mapes: &[f64],
) -> Result<ComboScore, EvalError> {
    if per_household_mapes.len() < 2 {
        return Err(EvalError::TooFewHouseholds { got: per_household_mapes.len() });
    }
    let avg_mape =
        per_household_mapes.iter().sum::<f64>() / per_household_mapes.len() as f64;
    let stddev = sample_stddev(per_household_mapes);
    Ok(ComboScore { combo, avg_mape, stddev, score: avg_mape + stddev })
}

/// Midpoint-averaged median.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// One result-table cell: a model/combination/horizon coordinate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CellId {
    pub model: String,
    pub combo: String,
    pub horizon_min: i64,
}

/// Collapse per-household metric values into the per-cell median table.
pub fn median_across_households(rows: &[(CellId, f64)]) -> Vec<(CellId, f64, usize)> {
    let mut cells: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    for (cell, value) in rows {
        cells.entry(cell.clone()).or_default().push(*value);
    }
    cells.into_iter().map(|(cell, vals)| (cell, median(&vals), vals.len())).collect()
}
