//! Per-household prediction pipeline: source adaptor, windowing, feature
//! extraction, prediction, and an analytics or forecast sink, chained as
//! pull-based stages with one uniform advance contract.
//!
//! A pipeline is single-threaded end to end and demand-driven: each advance
//! of the terminal stage pulls exactly as much as needed from upstream, so
//! backpressure is implicit and no queues sit between stages. Batch and
//! live-paced execution use identical wiring; only the event source differs.

use std::cell::RefCell;
use std::rc::Rc;
use std::time::{Duration, Instant};

use chrono::{NaiveDateTime, TimeDelta};
use thiserror::Error;

use crate::evaluation::{error_report, ErrorReport, ForecastRecord};
use crate::features::{
    build_training_matrix, device_series, extract_row, FeatureCombination, FeatureLayout,
    SeriesStats,
};
use crate::ingest::{HouseholdRoster, SensorReading};
use crate::models::{fit, predict, FittedModel, ModelError, ModelFamily, ModelSpec, PredictContext};
use crate::replay::{EventFeed, FeedItem, ReplayError};
use crate::windowing::{
    current_base, enumerate_between, truncate_to_grid, HistoricWindow, Interval, MicroWindowSpec,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage `{stage}`: advance called after EndOfStream")]
    Exhausted { stage: &'static str },
    #[error("stage `{stage}`: {source}")]
    StageFailed {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

fn stage_failed(stage: &'static str, err: impl std::error::Error + Send + Sync + 'static) -> PipelineError {
    PipelineError::StageFailed { stage, source: Box::new(err) }
}

/// What one advance of a stage yields: an output, a not-yet (the upstream is
/// live and has nothing buffered), or exhaustion.
#[derive(Debug, Clone, PartialEq)]
pub enum StageItem<T> {
    Item(T),
    Pending,
    EndOfStream,
}

/// Uniform pull contract. A stage never reorders its upstream and pulls at
/// most what one output requires.
pub trait Stage {
    type Output;

    fn name(&self) -> &'static str;

    fn advance(&mut self) -> Result<StageItem<Self::Output>, PipelineError>;
}

/// Terminal output selection: live forecasts, or one error report at the
/// end of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkKind {
    ForecastEmit,
    ErrorAnalytics,
}

/// Everything one household pipeline needs to run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub roster: HouseholdRoster,
    pub history_span: TimeDelta,
    pub window_spec: MicroWindowSpec,
    pub combo: FeatureCombination,
    pub model: ModelSpec,
    /// Predictions per full retrain; 1 retrains at every step.
    pub retrain_every: usize,
    pub sink: SinkKind,
}

impl PipelineConfig {
    pub fn new(roster: HouseholdRoster, combo: FeatureCombination, model: ModelSpec) -> Self {
        Self {
            roster,
            history_span: TimeDelta::days(14),
            window_spec: MicroWindowSpec::default(),
            combo,
            model,
            retrain_every: 1,
            sink: SinkKind::ForecastEmit,
        }
    }

    pub fn house_id(&self) -> u32 {
        self.roster.house_id()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.retrain_every == 0 {
            return Err(PipelineError::ConfigInvalid("retrain_every must be at least 1".into()));
        }
        if self.history_span <= TimeDelta::zero() {
            return Err(PipelineError::ConfigInvalid("history_span must be positive".into()));
        }
        if self.history_span < self.window_spec.base_span + self.window_spec.horizon {
            return Err(PipelineError::ConfigInvalid(
                "history_span must cover at least base_span + horizon".into(),
            ));
        }
        Ok(())
    }
}

/// Adaptor from an event feed to the stage contract; keeps only this
/// household's LOAD readings.
struct SourceStage {
    feed: Box<dyn EventFeed>,
    house_id: u32,
}

impl Stage for SourceStage {
    type Output = SensorReading;

    fn name(&self) -> &'static str {
        "source"
    }

    fn advance(&mut self) -> Result<StageItem<SensorReading>, PipelineError> {
        loop {
            match self.feed.next_event() {
                Ok(FeedItem::Event(r)) => {
                    if r.house_id == self.house_id && r.mtype.is_load() {
                        return Ok(StageItem::Item(r));
                    }
                }
                Ok(FeedItem::Pending) => return Ok(StageItem::Pending),
                Ok(FeedItem::EndOfStream) => return Ok(StageItem::EndOfStream),
                Err(ReplayError::SourceExhausted) => {
                    return Err(PipelineError::Exhausted { stage: self.name() })
                }
                Err(e) => return Err(stage_failed(self.name(), e)),
            }
        }
    }
}

/// A prediction instant on the increment grid; the shared window holds
/// strictly earlier readings when this fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerPoint {
    pub t: NaiveDateTime,
}

/// Maintains the sliding history and fires one trigger per increment once a
/// full history span has been observed. The reading that proves a trigger
/// has passed is held back until the trigger is emitted, so downstream
/// stages always see a window that predates the prediction instant.
struct WindowingStage<S> {
    upstream: S,
    window: Rc<RefCell<HistoricWindow>>,
    spec: MicroWindowSpec,
    history_span: TimeDelta,
    trigger: Option<NaiveDateTime>,
    lookahead: Option<SensorReading>,
}

impl<S: Stage<Output = SensorReading>> Stage for WindowingStage<S> {
    type Output = TriggerPoint;

    fn name(&self) -> &'static str {
        "windowing"
    }

    fn advance(&mut self) -> Result<StageItem<TriggerPoint>, PipelineError> {
        loop {
            if let (Some(t), Some(r)) = (self.trigger, &self.lookahead) {
                if r.ts >= t {
                    self.trigger = Some(t + self.spec.increment);
                    return Ok(StageItem::Item(TriggerPoint { t }));
                }
            }
            if let Some(r) = self.lookahead.take() {
                // a late reading is dropped and counted by the window itself
                let _ = self.window.borrow_mut().advance(&r);
            }
            match self.upstream.advance()? {
                StageItem::Item(r) => {
                    if self.trigger.is_none() {
                        let warm = r.ts + self.history_span;
                        let mut first = truncate_to_grid(warm, self.spec.increment);
                        if first < warm {
                            first += self.spec.increment;
                        }
                        self.trigger = Some(first);
                    }
                    self.lookahead = Some(r);
                }
                StageItem::Pending => return Ok(StageItem::Pending),
                StageItem::EndOfStream => return Ok(StageItem::EndOfStream),
            }
        }
    }
}

/// Feature row and live consumption for one prediction instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSnapshot {
    pub t: NaiveDateTime,
    pub x: Vec<f64>,
    pub current_consum_kwh: f64,
}

struct FeatureStage<S> {
    upstream: S,
    window: Rc<RefCell<HistoricWindow>>,
    layout: Rc<FeatureLayout>,
    spec: MicroWindowSpec,
}

impl<S: Stage<Output = TriggerPoint>> Stage for FeatureStage<S> {
    type Output = FeatureSnapshot;

    fn name(&self) -> &'static str {
        "features"
    }

    fn advance(&mut self) -> Result<StageItem<FeatureSnapshot>, PipelineError> {
        loop {
            match self.upstream.advance()? {
                StageItem::Item(TriggerPoint { t }) => {
                    let window = self.window.borrow();
                    // the buffered history can still be thinner than one
                    // base span right after warm-up; skip those triggers
                    let Ok(live) = current_base(&window, &self.spec, t) else {
                        continue;
                    };
                    let x = extract_row(&window, &self.layout, live.base);
                    let current_consum_kwh = self
                        .layout
                        .devices()
                        .iter()
                        .map(|d| {
                            SeriesStats::of(&device_series(&window, d, live.base))
                                .consum_kwh(live.base)
                        })
                        .sum();
                    return Ok(StageItem::Item(FeatureSnapshot { t, x, current_consum_kwh }));
                }
                StageItem::Pending => return Ok(StageItem::Pending),
                StageItem::EndOfStream => return Ok(StageItem::EndOfStream),
            }
        }
    }
}

/// A forecast plus the wall time its model spent fitting and predicting,
/// for the latency breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedForecast {
    pub record: ForecastRecord,
    pub model_time: Duration,
}

struct PredictionStage<S> {
    upstream: S,
    window: Rc<RefCell<HistoricWindow>>,
    layout: Rc<FeatureLayout>,
    spec: MicroWindowSpec,
    model_spec: ModelSpec,
    retrain_every: usize,
    fitted: Option<FittedModel>,
    steps_since_retrain: usize,
}

impl<S: Stage<Output = FeatureSnapshot>> Stage for PredictionStage<S> {
    type Output = TimedForecast;

    fn name(&self) -> &'static str {
        "prediction"
    }

    fn advance(&mut self) -> Result<StageItem<TimedForecast>, PipelineError> {
        loop {
            match self.upstream.advance()? {
                StageItem::Item(snapshot) => {
                    match self.predict_at(&snapshot) {
                        Ok(Some(item)) => return Ok(StageItem::Item(item)),
                        Ok(None) => continue, // not enough training data yet
                        Err(e) => return Err(stage_failed(self.name(), e)),
                    }
                }
                StageItem::Pending => return Ok(StageItem::Pending),
                StageItem::EndOfStream => return Ok(StageItem::EndOfStream),
            }
        }
    }
}

impl<S> PredictionStage<S> {
    fn predict_at(&mut self, snapshot: &FeatureSnapshot) -> Result<Option<TimedForecast>, ModelError> {
        let t = snapshot.t;
        let mut model_time = Duration::ZERO;
        let needs_fit = self.fitted.is_none() || self.steps_since_retrain >= self.retrain_every;
        if needs_fit {
            let window = self.window.borrow();
            let (Some(grid_start), Some(max_ts)) =
                (window.grid_start(self.spec.increment), window.max_ts())
            else {
                return Ok(None);
            };
            // cap enumeration at the prediction instant: training targets
            // must lie entirely in its past
            let Ok(pairs) = enumerate_between(grid_start, max_ts.min(t), &self.spec) else {
                return Ok(None);
            };
            // persistence learns nothing; skip the matrix for it
            let matrix = if self.model_spec.family == ModelFamily::Persistence {
                crate::features::TrainingMatrix { rows: Vec::new(), targets: Vec::new() }
            } else {
                build_training_matrix(&window, &self.layout, &pairs)
            };
            let started = Instant::now();
            match fit(&self.model_spec, &matrix.rows, &matrix.targets) {
                Ok(model) => {
                    model_time += started.elapsed();
                    self.fitted = Some(model);
                    self.steps_since_retrain = 0;
                }
                Err(ModelError::EmptyTraining) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        let model = self.fitted.as_ref().expect("fitted above");
        let ctx = PredictContext {
            current_consum_kwh: snapshot.current_consum_kwh,
            horizon_base_ratio: self.spec.horizon_base_ratio(),
        };
        let started = Instant::now();
        let forecast_kwh = predict(model, &snapshot.x, &ctx)?;
        model_time += started.elapsed();
        self.steps_since_retrain += 1;

        let house_id = self.window.borrow().house_id();
        Ok(Some(TimedForecast {
            record: ForecastRecord {
                house_id,
                horizon_min: self.spec.horizon.num_minutes(),
                t_predict: t,
                forecast_kwh,
                actual_kwh: None,
            },
            model_time,
        }))
    }
}

/// Terminal stage output.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutput {
    Forecast(TimedForecast),
    Report(ErrorReport),
}

struct SinkStage<S> {
    upstream: S,
    kind: SinkKind,
    window: Rc<RefCell<HistoricWindow>>,
    layout: Rc<FeatureLayout>,
    /// Resolved and not-yet-resolved forecasts, analytics mode only.
    records: Vec<ForecastRecord>,
    report_emitted: bool,
    upstream_done: bool,
}

impl<S: Stage<Output = TimedForecast>> Stage for SinkStage<S> {
    type Output = PipelineOutput;

    fn name(&self) -> &'static str {
        "sink"
    }

    fn advance(&mut self) -> Result<StageItem<PipelineOutput>, PipelineError> {
        if self.upstream_done {
            return Ok(StageItem::EndOfStream);
        }
        loop {
            match self.upstream.advance()? {
                StageItem::Item(forecast) => match self.kind {
                    SinkKind::ForecastEmit => {
                        return Ok(StageItem::Item(PipelineOutput::Forecast(forecast)))
                    }
                    SinkKind::ErrorAnalytics => {
                        self.records.push(forecast.record);
                        self.resolve_actuals();
                    }
                },
                StageItem::Pending => return Ok(StageItem::Pending),
                StageItem::EndOfStream => {
                    self.upstream_done = true;
                    if self.kind == SinkKind::ErrorAnalytics && !self.report_emitted {
                        self.report_emitted = true;
                        self.resolve_actuals();
                        if let Ok(report) = error_report(&self.records) {
                            return Ok(StageItem::Item(PipelineOutput::Report(report)));
                        }
                    }
                    return Ok(StageItem::EndOfStream);
                }
            }
        }
    }
}

impl<S> SinkStage<S> {
    /// Fill in actuals for forecasts whose target interval the window now
    /// fully covers.
    fn resolve_actuals(&mut self) {
        let window = self.window.borrow();
        let Some(max_ts) = window.max_ts() else {
            return;
        };
        for record in self.records.iter_mut().filter(|r| r.actual_kwh.is_none()) {
            let target = Interval::new(
                record.t_predict,
                record.t_predict + TimeDelta::minutes(record.horizon_min),
            );
            if target.end > max_ts {
                continue;
            }
            let kwh = self
                .layout
                .devices()
                .iter()
                .map(|d| SeriesStats::of(&device_series(&window, d, target)).consum_kwh(target))
                .sum();
            record.actual_kwh = Some(kwh);
        }
    }
}

/// A fully wired household pipeline; advance the terminal stage to run it.
pub struct Pipeline {
    terminal: Box<dyn Stage<Output = PipelineOutput>>,
    house_id: u32,
    exhausted: bool,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("house_id", &self.house_id)
            .field("exhausted", &self.exhausted)
            .finish_non_exhaustive()
    }
}

/// Wire source -> windowing -> features -> prediction -> sink over a shared
/// household window.
pub fn build_pipeline(
    config: PipelineConfig,
    source: Box<dyn EventFeed>,
) -> Result<Pipeline, PipelineError> {
    config.validate()?;
    let house_id = config.house_id();
    let window = Rc::new(RefCell::new(HistoricWindow::new(house_id, config.history_span)));
    let layout = Rc::new(FeatureLayout::new(config.combo.clone(), &config.roster));

    let source = SourceStage { feed: source, house_id };
    let windowing = WindowingStage {
        upstream: source,
        window: Rc::clone(&window),
        spec: config.window_spec,
        history_span: config.history_span,
        trigger: None,
        lookahead: None,
    };
    let features = FeatureStage {
        upstream: windowing,
        window: Rc::clone(&window),
        layout: Rc::clone(&layout),
        spec: config.window_spec,
    };
    let prediction = PredictionStage {
        upstream: features,
        window: Rc::clone(&window),
        layout: Rc::clone(&layout),
        spec: config.window_spec,
        model_spec: config.model,
        retrain_every: config.retrain_every,
        fitted: None,
        steps_since_retrain: 0,
    };
    let sink = SinkStage {
        upstream: prediction,
        kind: config.sink,
        window,
        layout,
        records: Vec::new(),
        report_emitted: false,
        upstream_done: false,
    };
    Ok(Pipeline { terminal: Box::new(sink), house_id, exhausted: false })
}

impl Pipeline {
    pub fn house_id(&self) -> u32 {
        self.house_id
    }

    /// Pull the next output through the whole chain. After EndOfStream has
    /// been returned once, further calls are an error.
    pub fn advance(&mut self) -> Result<StageItem<PipelineOutput>, PipelineError> {
        if self.exhausted {
            return Err(PipelineError::Exhausted { stage: "pipeline" });
        }
        let item = self.terminal.advance()?;
        if matches!(item, StageItem::EndOfStream) {
            self.exhausted = true;
        }
        Ok(item)
    }

    /// Run to exhaustion; only valid for sources that terminate.
    pub fn drain(&mut self) -> Result<(Vec<TimedForecast>, Option<ErrorReport>), PipelineError> {
        let mut forecasts = Vec::new();
        let mut report = None;
        loop {
            match self.advance()? {
                StageItem::Item(PipelineOutput::Forecast(f)) => forecasts.push(f),
                StageItem::Item(PipelineOutput::Report(r)) => report = Some(r),
                StageItem::Pending => {
                    unreachable!("terminating sources never leave the pipeline pending")
                }
                StageItem::EndOfStream => return Ok((forecasts, report)),
            }
        }
    }
}
