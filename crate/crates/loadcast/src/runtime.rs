//! Partitioned parallel execution: route a multi-household stream by
//! household id to per-household pipelines pinned across worker threads,
//! with end-to-end latency measurement.
//!
//! One router fans readings out to workers over channels; each worker owns
//! the pipelines pinned to it, so no pipeline state is ever shared between
//! threads. A panicking household pipeline is isolated and reported without
//! stopping the others. Forecast content is independent of the worker
//! count; only cross-household interleaving varies.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::evaluation::{ErrorReport, ForecastRecord};
use crate::ingest::SensorReading;
use crate::models::{fit, predict, ModelError, ModelSpec, PredictContext};
use crate::pipeline::{build_pipeline, Pipeline, PipelineConfig, PipelineError, PipelineOutput, StageItem};
use crate::replay::{EventFeed, EventSource, FeedItem, ReplayError};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error("household {0} is configured twice")]
    DuplicateHousehold(u32),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Counters of the routing step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RouterStats {
    pub routed: u64,
    /// Readings for households without a configured pipeline.
    pub dropped_unknown: u64,
}

/// End-to-end timing of one emitted forecast, on a monotonic clock: from
/// the reading entering the runtime until the prediction came out, with the
/// model's own fit+predict share broken out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencySample {
    pub house_id: u32,
    pub total: Duration,
    pub model: Duration,
}

/// Order statistics of one latency population, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

impl LatencySummary {
    fn of(mut micros: Vec<f64>) -> Self {
        assert!(!micros.is_empty());
        micros.sort_by(f64::total_cmp);
        let count = micros.len();
        let mean = micros.iter().sum::<f64>() / count as f64;
        let rank = |p: f64| micros[((p * count as f64).ceil() as usize).clamp(1, count) - 1];
        Self {
            count,
            mean_us: mean,
            median_us: median_sorted(&micros),
            p95_us: rank(0.95),
            p99_us: rank(0.99),
            min_us: micros[0],
            max_us: micros[count - 1],
        }
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// One decade bucket of the latency histogram; the last bucket is open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    /// Upper bound in microseconds; u64::MAX marks the open tail.
    pub le_us: u64,
    pub count: usize,
}

/// Latency census of one run: every sample, summaries, and throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub samples: Vec<LatencySample>,
    pub global: Option<LatencySummary>,
    pub model_share: Option<LatencySummary>,
    pub per_household: BTreeMap<u32, LatencySummary>,
    pub histogram: Vec<HistogramBin>,
    pub predictions_per_sec: f64,
    pub wall: Duration,
}

impl LatencyReport {
    fn from_samples(samples: Vec<LatencySample>, wall: Duration) -> Self {
        let micros: Vec<f64> =
            samples.iter().map(|s| s.total.as_secs_f64() * 1e6).collect();
        let global = (!micros.is_empty()).then(|| LatencySummary::of(micros.clone()));
        let model_share = (!samples.is_empty()).then(|| {
            LatencySummary::of(
                samples.iter().map(|s| s.model.as_secs_f64() * 1e6).collect(),
            )
        });

        let mut per_house_micros: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for s in &samples {
            per_house_micros
                .entry(s.house_id)
                .or_default()
                .push(s.total.as_secs_f64() * 1e6);
        }
        let per_household = per_house_micros
            .into_iter()
            .map(|(h, v)| (h, LatencySummary::of(v)))
            .collect();

        let bounds = [1u64, 10, 100, 1_000, 10_000, 100_000, 1_000_000, u64::MAX];
        let mut histogram: Vec<HistogramBin> =
            bounds.iter().map(|&le_us| HistogramBin { le_us, count: 0 }).collect();
        for &us in &micros {
            let bin = bounds.iter().position(|&b| us <= b as f64).expect("open tail");
            histogram[bin].count += 1;
        }

        let predictions_per_sec = if wall > Duration::ZERO {
            samples.len() as f64 / wall.as_secs_f64()
        } else {
            0.0
        };
        Self {
            samples,
            global,
            model_share,
            per_household,
            histogram,
            predictions_per_sec,
            wall,
        }
    }
}

/// Everything a parallel run produces.
#[derive(Debug)]
pub struct RunOutcome {
    /// Emitted forecasts in emission order; per-household order is FIFO.
    pub forecasts: Vec<ForecastRecord>,
    /// Final error reports from analytics-sink pipelines.
    pub reports: Vec<ErrorReport>,
    pub latency: LatencyReport,
    pub router: RouterStats,
    /// Households whose pipeline panicked, with the panic message.
    pub panics: Vec<(u32, String)>,
}

/// Push-based feed a worker fills as routed readings arrive; the pipeline
/// pulls from it and sees Pending when the queue runs dry.
struct PushFeed {
    queue: Rc<RefCell<VecDeque<SensorReading>>>,
    closed: Rc<Cell<bool>>,
    finished: bool,
}

impl EventFeed for PushFeed {
    fn next_event(&mut self) -> Result<FeedItem, ReplayError> {
        if self.finished {
            return Err(ReplayError::SourceExhausted);
        }
        if let Some(r) = self.queue.borrow_mut().pop_front() {
            return Ok(FeedItem::Event(r));
        }
        if self.closed.get() {
            self.finished = true;
            return Ok(FeedItem::EndOfStream);
        }
        Ok(FeedItem::Pending)
    }
}

enum WorkerMsg {
    Reading(Box<SensorReading>, Instant),
    Finish,
}

enum OutMsg {
    Forecast { record: ForecastRecord, sample: LatencySample },
    Report(ErrorReport),
    Panic { house_id: u32, message: String },
}

struct HouseEntry {
    queue: Rc<RefCell<VecDeque<SensorReading>>>,
    closed: Rc<Cell<bool>>,
    pipeline: Pipeline,
    done: bool,
}

/// Drive one pipeline until it runs dry, forwarding outputs; returns false
/// when the pipeline panicked and must be discarded.
fn drive(entry: &mut HouseEntry, handoff: Instant, out: &mpsc::Sender<OutMsg>) -> bool {
    if entry.done {
        return true;
    }
    let result = catch_unwind(AssertUnwindSafe(|| loop {
        match entry.pipeline.advance() {
            Ok(StageItem::Item(PipelineOutput::Forecast(f))) => {
                let sample = LatencySample {
                    house_id: f.record.house_id,
                    total: handoff.elapsed(),
                    model: f.model_time,
                };
                let _ = out.send(OutMsg::Forecast { record: f.record, sample });
            }
            Ok(StageItem::Item(PipelineOutput::Report(r))) => {
                let _ = out.send(OutMsg::Report(r));
            }
            Ok(StageItem::Pending) => return false,
            Ok(StageItem::EndOfStream) => return true,
            Err(e) => panic!("pipeline failed: {e}"),
        }
    }));
    match result {
        Ok(finished) => {
            entry.done = finished;
            true
        }
        Err(payload) => {
            let message = panic_message(payload);
            let _ = out.send(OutMsg::Panic { house_id: entry.pipeline.house_id(), message });
            false
        }
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "opaque panic payload".to_string()
    }
}

/// Run every configured household pipeline over the merged sources with N
/// worker threads. Returns once all sources are exhausted and all pipelines
/// have flushed.
pub fn run(
    sources: Vec<EventSource>,
    configs: Vec<PipelineConfig>,
    parallelism: usize,
) -> Result<RunOutcome, RuntimeError> {
    if parallelism == 0 {
        return Err(RuntimeError::InvalidParallelism);
    }
    for config in &configs {
        config.validate()?;
    }
    let mut houses: Vec<u32> = configs.iter().map(|c| c.house_id()).collect();
    houses.sort_unstable();
    if let Some(dup) = houses.windows(2).find(|w| w[0] == w[1]) {
        return Err(RuntimeError::DuplicateHousehold(dup[0]));
    }
    // pin households to workers round-robin over the sorted id list
    let pin: HashMap<u32, usize> =
        houses.iter().enumerate().map(|(i, &h)| (h, i % parallelism)).collect();
    let mut worker_configs: Vec<Vec<PipelineConfig>> = vec![Vec::new(); parallelism];
    for config in configs {
        worker_configs[pin[&config.house_id()]].push(config);
    }

    let started = Instant::now();
    let (router_stats, collected) = thread::scope(|scope| {
        let (router_tx, router_rx) = mpsc::channel::<(Box<SensorReading>, Instant)>();
        let (out_tx, out_rx) = mpsc::channel::<OutMsg>();

        for source in sources {
            let tx = router_tx.clone();
            scope.spawn(move || {
                let mut source = source;
                loop {
                    match source.next_event() {
                        Ok(FeedItem::Event(r)) => {
                            // handoff stamp: the moment the reading enters
                            // the runtime
                            if tx.send((Box::new(r), Instant::now())).is_err() {
                                return;
                            }
                        }
                        Ok(FeedItem::Pending) => thread::yield_now(),
                        Ok(FeedItem::EndOfStream) | Err(_) => return,
                    }
                }
            });
        }
        drop(router_tx);

        let mut worker_txs = Vec::with_capacity(parallelism);
        for configs in worker_configs {
            let (tx, rx) = mpsc::channel::<WorkerMsg>();
            worker_txs.push(tx);
            let out = out_tx.clone();
            scope.spawn(move || worker_loop(configs, rx, out));
        }
        drop(out_tx);

        let pin_ref = &pin;
        let router = scope.spawn(move || {
            let mut stats = RouterStats::default();
            while let Ok((reading, stamp)) = router_rx.recv() {
                match pin_ref.get(&reading.house_id) {
                    Some(&w) => {
                        stats.routed += 1;
                        let _ = worker_txs[w].send(WorkerMsg::Reading(reading, stamp));
                    }
                    None => stats.dropped_unknown += 1,
                }
            }
            for tx in &worker_txs {
                let _ = tx.send(WorkerMsg::Finish);
            }
            stats
        });

        let mut collected =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        while let Ok(msg) = out_rx.recv() {
            match msg {
                OutMsg::Forecast { record, sample } => {
                    collected.0.push(record);
                    collected.1.push(sample);
                }
                OutMsg::Report(r) => collected.2.push(r),
                OutMsg::Panic { house_id, message } => collected.3.push((house_id, message)),
            }
        }
        let stats = router.join().expect("router thread");
        (stats, collected)
    });

    let (forecasts, samples, reports, panics) = collected;
    Ok(RunOutcome {
        forecasts,
        reports,
        latency: LatencyReport::from_samples(samples, started.elapsed()),
        router: router_stats,
        panics,
    })
}

fn worker_loop(
    configs: Vec<PipelineConfig>,
    rx: mpsc::Receiver<WorkerMsg>,
    out: mpsc::Sender<OutMsg>,
) {
    let mut entries: HashMap<u32, HouseEntry> = HashMap::new();
    for config in configs {
        let house = config.house_id();
        let queue = Rc::new(RefCell::new(VecDeque::new()));
        let closed = Rc::new(Cell::new(false));
        let feed = PushFeed { queue: Rc::clone(&queue), closed: Rc::clone(&closed), finished: false };
        let pipeline = build_pipeline(config, Box::new(feed)).expect("config validated upfront");
        entries.insert(house, HouseEntry { queue, closed, pipeline, done: false });
    }

    while let Ok(msg) = rx.recv() {
        match msg {
            WorkerMsg::Reading(reading, stamp) => {
                let house = reading.house_id;
                let Some(entry) = entries.get_mut(&house) else {
                    continue; // already torn down after a panic
                };
                entry.queue.borrow_mut().push_back(*reading);
                if !drive(entry, stamp, &out) {
                    entries.remove(&house);
                }
            }
            WorkerMsg::Finish => {
                let houses: Vec<u32> = entries.keys().copied().collect();
                for house in houses {
                    let entry = entries.get_mut(&house).expect("listed");
                    entry.closed.set(true);
                    if !drive(entry, Instant::now(), &out) {
                        entries.remove(&house);
                    }
                }
                return;
            }
        }
    }
}

/// Min, quartiles, and max of a sample population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Boxplot {
    pub min_us: f64,
    pub q1_us: f64,
    pub median_us: f64,
    pub q3_us: f64,
    pub max_us: f64,
}

/// Wall-time distribution of single fit+predict rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyDistribution {
    pub samples: Vec<Duration>,
    pub boxplot: Boxplot,
}

/// Repeatedly retrain and predict, timing each round after a fixed warm-up
/// that is excluded from the distribution.
pub fn measure_predictor_latency(
    spec: &ModelSpec,
    rows: &[Vec<f64>],
    targets: &[f64],
    probe: &[f64],
    repetitions: usize,
) -> Result<LatencyDistribution, ModelError> {
    assert!(repetitions >= 30, "need at least 30 repetitions for a stable distribution");
    let ctx = PredictContext { current_consum_kwh: 1.0, horizon_base_ratio: 1.0 };
    const WARMUP: usize = 5;
    let mut samples = Vec::with_capacity(repetitions);
    for i in 0..WARMUP + repetitions {
        let started = Instant::now();
        let model = fit(spec, rows, targets)?;
        let _ = predict(&model, probe, &ctx)?;
        let elapsed = started.elapsed();
        if i >= WARMUP {
            samples.push(elapsed);
        }
    }

    let mut micros: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
    micros.sort_by(f64::total_cmp);
    let lower = &micros[..micros.len() / 2];
    let upper = &micros[micros.len().div_ceil(2)..];
    let boxplot = Boxplot {
        min_us: micros[0],
        q1_us: median_sorted(lower),
        median_us: median_sorted(&micros),
        q3_us: median_sorted(upper),
        max_us: micros[micros.len() - 1],
    };
    Ok(LatencyDistribution { samples, boxplot })
}
