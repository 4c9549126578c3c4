//! The streaming edge service: per-resident sliding windows over live radar
//! records, cooldown-deduplicated fall alerts, and delivery to local and
//! remote sinks.
//!
//! Records arrive one line at a time in the same CSV shape the simulator
//! writes (`hse_id,ts,location,hr,br,d,ps`) and are routed to the resident
//! configured for that location. Each resident keeps the last
//! [`WINDOW_LEN`](crate::preprocess::WINDOW_LEN) seconds of readings; once
//! the buffer is full every new second produces one standardized window and
//! one detector score. A score at or above
//! [`FALL_THRESHOLD`](crate::models::FALL_THRESHOLD) raises an alert unless
//! a previous alert for the same resident is younger than the cooldown,
//! measured in record time so a replayed session alerts identically at any
//! playback rate.
//!
//! Raw readings never leave the process: sinks receive only [`FallAlert`]
//! values, which carry the eight readings that triggered the decision and
//! nothing else about the stream.

mod sinks;

pub use sinks::{
    dispatch_alert, AlertSink, DeliveryRecord, DeliveryStats, Dispatcher, FileSink, RetryPolicy,
    SinkDelivery, WebhookConfig, WebhookSink,
};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::BufRead;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    parse_record_line, AgeGroup, DataError, FdaasQos, HealthCondition, RadarReading, RecordLine,
    ResidentContext, ResourceAvailability, CHANNELS,
};
use crate::models::{Architecture, ModelError, TrainedDetector, FALL_THRESHOLD};
use crate::preprocess::{standardize_values, WINDOW_LEN};
use crate::selection::select_model;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service config: {reason}")]
    ConfigInvalid { reason: String },
    #[error("no detector artifact configured for architecture {architecture}")]
    MissingArtifact { architecture: Architecture },
    #[error("no resident configured for location {location:?}")]
    UnknownResident { location: String },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("invalid alert: {reason}")]
    InvalidAlert { reason: String },
    #[error("sink {sink} failed after {attempts} attempt(s): {reason}")]
    SinkUnavailable {
        sink: &'static str,
        attempts: u32,
        reason: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

fn default_cooldown() -> i64 {
    30
}

/// One monitored resident. `location` defaults to the resident id; the
/// remaining fields are the selection context Algorithm 1 consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidentConfig {
    pub id: String,
    #[serde(default)]
    pub location: Option<String>,
    pub age_group: AgeGroup,
    pub health_condition: HealthCondition,
    pub resource_availability: ResourceAvailability,
    /// Per-resident QoS override; the service default applies when absent.
    #[serde(default)]
    pub qos: Option<FdaasQos>,
}

impl ResidentConfig {
    pub fn location(&self) -> &str {
        self.location.as_deref().unwrap_or(&self.id)
    }

    pub fn context(&self) -> ResidentContext {
        ResidentContext::new(
            self.age_group,
            self.health_condition,
            self.resource_availability,
        )
    }
}

/// Service configuration, usually loaded from a TOML file. Detector paths
/// map architecture names ("fcn", "resnet", "lstm", "inceptiontime") to
/// trained artifacts; every architecture the configured residents select
/// must have an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Minimum record-time seconds between alerts for one resident.
    #[serde(default = "default_cooldown")]
    pub cooldown_seconds: i64,
    /// Line-delimited JSON alert log, appended as alerts are dispatched.
    #[serde(default)]
    pub alert_log: Option<PathBuf>,
    /// Where to write the JSON metrics report at shutdown.
    #[serde(default)]
    pub metrics_file: Option<PathBuf>,
    /// Default QoS attached to selection decisions.
    #[serde(default)]
    pub qos: FdaasQos,
    pub detectors: BTreeMap<String, PathBuf>,
    pub residents: Vec<ResidentConfig>,
    #[serde(default)]
    pub webhook: Option<WebhookConfig>,
}

impl ServiceConfig {
    /// Reads a TOML config. Relative artifact and output paths are resolved
    /// against the config file's directory so the file is self-contained.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ServiceConfig = toml::from_str(&text)?;
        if let Some(base) = path.parent() {
            for artifact in config.detectors.values_mut() {
                resolve_against(base, artifact);
            }
            if let Some(p) = config.alert_log.as_mut() {
                resolve_against(base, p);
            }
            if let Some(p) = config.metrics_file.as_mut() {
                resolve_against(base, p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.residents.is_empty() {
            return Err(ServiceError::ConfigInvalid {
                reason: "at least one resident is required".into(),
            });
        }
        if self.cooldown_seconds < 0 {
            return Err(ServiceError::ConfigInvalid {
                reason: "cooldown_seconds must be non-negative".into(),
            });
        }
        let mut ids = std::collections::HashSet::new();
        let mut locations = std::collections::HashSet::new();
        for r in &self.residents {
            if r.id.is_empty() {
                return Err(ServiceError::ConfigInvalid {
                    reason: "resident id must not be empty".into(),
                });
            }
            if !ids.insert(r.id.as_str()) {
                return Err(ServiceError::ConfigInvalid {
                    reason: format!("duplicate resident id {:?}", r.id),
                });
            }
            if !locations.insert(r.location()) {
                return Err(ServiceError::ConfigInvalid {
                    reason: format!("duplicate location {:?}", r.location()),
                });
            }
        }
        for name in self.detectors.keys() {
            name.parse::<Architecture>()
                .map_err(|_| ServiceError::ConfigInvalid {
                    reason: format!("unknown architecture {name:?} in detectors table"),
                })?;
        }
        for r in &self.residents {
            let architecture = select_model(r.context(), None).architecture;
            if !self.detectors.contains_key(architecture.name()) {
                return Err(ServiceError::MissingArtifact { architecture });
            }
        }
        if let Some(webhook) = &self.webhook {
            webhook.validate()?;
        }
        Ok(())
    }
}

fn resolve_against(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

/// An emitted fall alert: the only data shape that ever leaves the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallAlert {
    pub resident: String,
    /// Record timestamp of the newest reading in the triggering window.
    pub timestamp: i64,
    /// Detector fall probability for the window.
    pub probability: f64,
    pub architecture: Architecture,
    /// The eight raw readings the decision was made on.
    pub window: Vec<RadarReading>,
    /// Wall-clock seconds from reading ingestion to alert emission.
    pub latency_seconds: f64,
}

impl FallAlert {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.resident.is_empty() {
            return Err(ServiceError::InvalidAlert {
                reason: "resident must not be empty".into(),
            });
        }
        if !(FALL_THRESHOLD..=1.0).contains(&self.probability) {
            return Err(ServiceError::InvalidAlert {
                reason: format!(
                    "probability {} outside [{FALL_THRESHOLD}, 1]",
                    self.probability
                ),
            });
        }
        if self.window.len() != WINDOW_LEN {
            return Err(ServiceError::InvalidAlert {
                reason: format!("window has {} readings, expected {WINDOW_LEN}", self.window.len()),
            });
        }
        if !self.latency_seconds.is_finite() || self.latency_seconds < 0.0 {
            return Err(ServiceError::InvalidAlert {
                reason: format!("latency {} is not a non-negative duration", self.latency_seconds),
            });
        }
        Ok(())
    }
}

/// Operational counters, serialized to `metrics_file` at shutdown.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ServiceMetrics {
    /// Records accepted for routing, malformed lines excluded.
    pub readings: u64,
    pub malformed_records: u64,
    pub unknown_locations: u64,
    /// Readings dropped for repeating or preceding the buffered timeline.
    pub out_of_order: u64,
    /// Timestamp gaps that forced a window buffer reset.
    pub timeline_gaps: u64,
    pub windows_scored: u64,
    pub alerts: u64,
    /// Fall-grade scores swallowed by the cooldown.
    pub alerts_suppressed: u64,
    pub alert_latency_ms_mean: f64,
    pub alert_latency_ms_max: f64,
    pub uptime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery: Option<DeliveryStats>,
    #[serde(skip)]
    latency_sum_ms: f64,
}

impl ServiceMetrics {
    fn record_alert_latency(&mut self, seconds: f64) {
        let ms = seconds * 1_000.0;
        self.latency_sum_ms += ms;
        self.alert_latency_ms_max = self.alert_latency_ms_max.max(ms);
        self.alert_latency_ms_mean = self.latency_sum_ms / self.alerts as f64;
    }
}

/// Where a resident's detector came from, for the startup banner and the
/// `serve` report.
#[derive(Debug, Clone, Serialize)]
pub struct Placement {
    pub resident: String,
    pub location: String,
    pub architecture: Architecture,
    pub rationale: String,
}

struct ResidentRuntime {
    id: String,
    architecture: Architecture,
    rationale: String,
    detector: TrainedDetector,
    buffer: VecDeque<(i64, RadarReading)>,
    last_alert_ts: Option<i64>,
}

impl ResidentRuntime {
    fn ingest(
        &mut self,
        ts: i64,
        reading: RadarReading,
        cooldown: i64,
        arrived: Instant,
        metrics: &mut ServiceMetrics,
    ) -> Option<FallAlert> {
        if let Some(&(last_ts, _)) = self.buffer.back() {
            if ts <= last_ts {
                metrics.out_of_order += 1;
                log::warn!("{}: dropped reading at {ts}, timeline already at {last_ts}", self.id);
                return None;
            }
            if ts != last_ts + 1 {
                metrics.timeline_gaps += 1;
                log::info!("{}: {}s gap at {ts}, restarting window buffer", self.id, ts - last_ts);
                self.buffer.clear();
            }
        }
        self.buffer.push_back((ts, reading));
        if self.buffer.len() > WINDOW_LEN {
            self.buffer.pop_front();
        }
        if self.buffer.len() < WINDOW_LEN {
            return None;
        }
        metrics.windows_scored += 1;
        let mut values = Array2::from_shape_fn((WINDOW_LEN, CHANNELS), |(t, c)| {
            self.buffer[t].1.channels()[c]
        });
        standardize_values(&self.detector.stats, &mut values);
        let probability = self
            .detector
            .score_one(&values)
            .expect("service windows always match the trained shape");
        if probability < FALL_THRESHOLD {
            return None;
        }
        let clear = self
            .last_alert_ts
            .map_or(true, |last| ts - last >= cooldown);
        if !clear {
            metrics.alerts_suppressed += 1;
            log::debug!("{}: suppressed alert at {ts} (p={probability:.3}), cooldown active", self.id);
            return None;
        }
        self.last_alert_ts = Some(ts);
        metrics.alerts += 1;
        let alert = FallAlert {
            resident: self.id.clone(),
            timestamp: ts,
            probability,
            architecture: self.architecture,
            window: self.buffer.iter().map(|&(_, r)| r).collect(),
            latency_seconds: arrived.elapsed().as_secs_f64(),
        };
        metrics.record_alert_latency(alert.latency_seconds);
        debug_assert!(alert.validate().is_ok());
        log::info!(
            "{}: fall alert at {ts} (p={probability:.3}, {})",
            self.id,
            self.architecture
        );
        Some(alert)
    }
}

/// The in-process engine: routing, window buffers, scoring, and cooldown
/// bookkeeping. Delivery lives outside in [`Dispatcher`] so the engine stays
/// synchronous and deterministic.
pub struct ServiceEngine {
    residents: Vec<ResidentRuntime>,
    by_location: HashMap<String, usize>,
    locations: Vec<String>,
    cooldown: i64,
    metrics: ServiceMetrics,
}

impl ServiceEngine {
    /// Selects a detector per resident via Algorithm 1 and loads the
    /// matching artifacts. Every resident owns its detector copy, so one
    /// stream can never perturb another's scoring state.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let mut residents = Vec::with_capacity(config.residents.len());
        let mut by_location = HashMap::new();
        let mut locations = Vec::new();
        for r in &config.residents {
            let qos = r.qos.clone().unwrap_or_else(|| config.qos.clone());
            let decision = select_model(r.context(), Some(qos));
            let architecture = decision.architecture;
            let path = config
                .detectors
                .get(architecture.name())
                .ok_or(ServiceError::MissingArtifact { architecture })?;
            let detector = TrainedDetector::load(path)?;
            if detector.architecture != architecture {
                return Err(ServiceError::ConfigInvalid {
                    reason: format!(
                        "artifact {} holds a {} detector but {} selects {}",
                        path.display(),
                        detector.architecture,
                        r.id,
                        architecture
                    ),
                });
            }
            log::info!(
                "resident {} at {:?}: {} ({})",
                r.id,
                r.location(),
                architecture,
                decision.rationale
            );
            by_location.insert(r.location().to_string(), residents.len());
            locations.push(r.location().to_string());
            residents.push(ResidentRuntime {
                id: r.id.clone(),
                architecture,
                rationale: decision.rationale,
                detector,
                buffer: VecDeque::with_capacity(WINDOW_LEN + 1),
                last_alert_ts: None,
            });
        }
        Ok(Self {
            residents,
            by_location,
            locations,
            cooldown: config.cooldown_seconds,
            metrics: ServiceMetrics::default(),
        })
    }

    pub fn placements(&self) -> Vec<Placement> {
        self.residents
            .iter()
            .zip(&self.locations)
            .map(|(r, location)| Placement {
                resident: r.id.clone(),
                location: location.clone(),
                architecture: r.architecture,
                rationale: r.rationale.clone(),
            })
            .collect()
    }

    pub fn metrics(&self) -> &ServiceMetrics {
        &self.metrics
    }

    fn location_of(&self, resident_id: &str) -> Option<&str> {
        self.residents
            .iter()
            .position(|r| r.id == resident_id)
            .map(|i| self.locations[i].as_str())
    }

    /// Parses and ingests one raw record line. Malformed lines are counted
    /// and reported; the caller decides whether to continue.
    pub fn ingest_line(
        &mut self,
        raw: &str,
        line_no: usize,
    ) -> Result<Option<FallAlert>, ServiceError> {
        match parse_record_line(raw, line_no) {
            Ok(record) => self.ingest_record(&record),
            Err(err) => {
                self.metrics.malformed_records += 1;
                let reason = match err {
                    DataError::MalformedRecord { reason, .. } => reason,
                    other => other.to_string(),
                };
                Err(ServiceError::MalformedRecord {
                    line: line_no,
                    reason,
                })
            }
        }
    }

    /// Routes one parsed record to the resident monitoring its location.
    pub fn ingest_record(
        &mut self,
        record: &RecordLine,
    ) -> Result<Option<FallAlert>, ServiceError> {
        let arrived = Instant::now();
        let Some(&idx) = self.by_location.get(&record.location) else {
            self.metrics.unknown_locations += 1;
            return Err(ServiceError::UnknownResident {
                location: record.location.clone(),
            });
        };
        self.metrics.readings += 1;
        Ok(self.residents[idx].ingest(
            record.ts,
            record.reading,
            self.cooldown,
            arrived,
            &mut self.metrics,
        ))
    }
}

/// Where the service reads record lines from.
#[derive(Debug, Clone)]
pub enum InputSource {
    /// Line-per-record piped input, terminated by EOF.
    Stdin,
    /// A recorded session file played back to one resident at `rate` times
    /// real time, preserving the record-time spacing between readings.
    Replay {
        session: PathBuf,
        resident: String,
        rate: f64,
    },
    /// A TCP listener accepting one line-oriented client at a time.
    Tcp { bind: String },
}

#[derive(Debug)]
pub struct ServiceOutcome {
    pub alerts: Vec<FallAlert>,
    pub metrics: ServiceMetrics,
}

/// Runs the service end to end: builds the engine, streams the source until
/// it ends or `shutdown` is raised, pushes alerts through the background
/// dispatcher, and writes the metrics file before returning. The returned
/// outcome carries every alert in emission order.
pub fn run_service(
    config: &ServiceConfig,
    source: InputSource,
    shutdown: &AtomicBool,
) -> Result<ServiceOutcome, ServiceError> {
    let started = Instant::now();
    let mut engine = ServiceEngine::from_config(config)?;
    let mut sinks: Vec<Box<dyn AlertSink>> = Vec::new();
    if let Some(path) = &config.alert_log {
        sinks.push(Box::new(FileSink::open(path)?));
    }
    let mut policy = RetryPolicy::default();
    let mut queue_capacity = 256;
    if let Some(webhook) = &config.webhook {
        sinks.push(Box::new(WebhookSink::new(webhook)));
        policy = webhook.retry_policy();
        queue_capacity = webhook.queue_capacity;
    }
    let dispatcher = (!sinks.is_empty()).then(|| Dispatcher::spawn(sinks, policy, queue_capacity));

    let mut alerts = Vec::new();
    let streamed = match source {
        InputSource::Stdin => {
            let stdin = std::io::stdin();
            pump_lines(stdin.lock(), &mut engine, &dispatcher, &mut alerts, shutdown)
        }
        InputSource::Replay {
            session,
            resident,
            rate,
        } => replay_session(
            &session, &resident, rate, &mut engine, &dispatcher, &mut alerts, shutdown,
        ),
        InputSource::Tcp { bind } => {
            let listener = TcpListener::bind(&bind)?;
            serve_tcp(listener, &mut engine, &dispatcher, &mut alerts, shutdown)
        }
    };

    engine.metrics.delivery = dispatcher.map(Dispatcher::shutdown);
    engine.metrics.uptime_seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &config.metrics_file {
        std::fs::write(path, serde_json::to_string_pretty(&engine.metrics)?)?;
    }
    streamed?;
    Ok(ServiceOutcome {
        alerts,
        metrics: engine.metrics,
    })
}

fn emit(alert: FallAlert, dispatcher: &Option<Dispatcher>, alerts: &mut Vec<FallAlert>) {
    if let Some(d) = dispatcher {
        d.submit(&alert);
    }
    alerts.push(alert);
}

fn handle_line(
    line: &str,
    line_no: usize,
    engine: &mut ServiceEngine,
    dispatcher: &Option<Dispatcher>,
    alerts: &mut Vec<FallAlert>,
) -> Result<(), ServiceError> {
    match engine.ingest_line(line, line_no) {
        Ok(Some(alert)) => {
            emit(alert, dispatcher, alerts);
            Ok(())
        }
        Ok(None) => Ok(()),
        Err(err @ (ServiceError::MalformedRecord { .. } | ServiceError::UnknownResident { .. })) => {
            log::warn!("{err}");
            Ok(())
        }
        Err(err) => Err(err),
    }
}

fn pump_lines<R: BufRead>(
    reader: R,
    engine: &mut ServiceEngine,
    dispatcher: &Option<Dispatcher>,
    alerts: &mut Vec<FallAlert>,
    shutdown: &AtomicBool,
) -> Result<(), ServiceError> {
    for (idx, line) in reader.lines().enumerate() {
        if shutdown.load(Ordering::Relaxed) {
            break;
        }
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        handle_line(line, idx + 1, engine, dispatcher, alerts)?;
    }
    Ok(())
}

/// Sleeps `seconds` of playback time in small slices so a shutdown request
/// is honored promptly.
fn paced_sleep(seconds: f64, shutdown: &AtomicBool) {
    let mut remaining = Duration::from_secs_f64(seconds.max(0.0));
    let slice = Duration::from_millis(25);
    while !remaining.is_zero() {
        if shutdown.load(Ordering::Relaxed) {
            return;
        }
        let step = remaining.min(slice);
        std::thread::sleep(step);
        remaining -= step;
    }
}

fn replay_session(
    session: &Path,
    resident: &str,
    rate: f64,
    engine: &mut ServiceEngine,
    dispatcher: &Option<Dispatcher>,
    alerts: &mut Vec<FallAlert>,
    shutdown: &AtomicBool,
) -> Result<(), ServiceError> {
    if !(rate > 0.0) {
        return Err(ServiceError::ConfigInvalid {
            reason: format!("replay rate must be positive, got {rate}"),
        });
    }
    let location = engine
        .location_of(resident)
        .ok_or_else(|| ServiceError::ConfigInvalid {
            reason: format!("no resident with id {resident:?}"),
        })?
        .to_string();
    let text = std::fs::read_to_string(session)?;
    let mut prev_ts: Option<i64> = None;
    for (idx, raw) in text.lines().enumerate() {
        if shutdown.load(Ordering::Relaxed) {
            break;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match parse_record_line(line, idx + 1) {
            Ok(mut record) => {
                if let Some(prev) = prev_ts {
                    let gap = (record.ts - prev).max(0) as f64;
                    paced_sleep(gap / rate, shutdown);
                }
                prev_ts = Some(record.ts);
                // Replay addresses one resident directly, whatever location
                // the recording carries.
                record.location = location.clone();
                match engine.ingest_record(&record)? {
                    Some(alert) => emit(alert, dispatcher, alerts),
                    None => {}
                }
            }
            Err(err) => {
                engine.metrics.malformed_records += 1;
                log::warn!("replay skipped line {}: {err}", idx + 1);
            }
        }
    }
    Ok(())
}

/// Accepts one line-oriented TCP client at a time. Reads poll with a short
/// timeout so shutdown requests interrupt idle connections; partial lines
/// survive timeouts because the buffer is only cleared after a full line.
fn serve_tcp(
    listener: TcpListener,
    engine: &mut ServiceEngine,
    dispatcher: &Option<Dispatcher>,
    alerts: &mut Vec<FallAlert>,
    shutdown: &AtomicBool,
) -> Result<(), ServiceError> {
    listener.set_nonblocking(true)?;
    let mut line_no = 0usize;
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client connected from {peer}");
                stream.set_nonblocking(false)?;
                stream.set_read_timeout(Some(Duration::from_millis(100)))?;
                let mut reader = std::io::BufReader::new(stream);
                let mut buf = String::new();
                loop {
                    buf.clear();
                    let n = loop {
                        match reader.read_line(&mut buf) {
                            Ok(n) => break n,
                            Err(e)
                                if matches!(
                                    e.kind(),
                                    std::io::ErrorKind::WouldBlock
                                        | std::io::ErrorKind::TimedOut
                                        | std::io::ErrorKind::Interrupted
                                ) =>
                            {
                                if shutdown.load(Ordering::Relaxed) {
                                    break 0;
                                }
                            }
                            Err(e) => {
                                log::warn!("client read failed: {e}");
                                break 0;
                            }
                        }
                    };
                    if n == 0 && buf.trim().is_empty() {
                        break;
                    }
                    let line = buf.trim();
                    if line.is_empty() {
                        continue;
                    }
                    line_no += 1;
                    handle_line(line, line_no, engine, dispatcher, alerts)?;
                    if n == 0 {
                        break;
                    }
                }
                log::info!("client disconnected");
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(25));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActivityLabel, Category, PhysiologicalState};
    use crate::models::{train, TrainConfig};
    use crate::preprocess::{apply_standardizer, fit_standardizer, LabeledWindow, WindowSet};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::atomic::AtomicBool;
    use std::sync::OnceLock;

    fn calm_row(rng: &mut ChaCha8Rng) -> [f64; 4] {
        let n: f64 = rng.sample(StandardNormal);
        let m: f64 = rng.sample(StandardNormal);
        let k: f64 = rng.sample(StandardNormal);
        [
            70.0 + 1.5 * n,
            16.0 + 0.8 * m,
            (1.2 + 0.05 * k).max(0.0),
            if rng.gen_bool(0.3) { 2.0 } else { 1.0 },
        ]
    }

    fn fall_row(rng: &mut ChaCha8Rng) -> [f64; 4] {
        let n: f64 = rng.sample(StandardNormal);
        let m: f64 = rng.sample(StandardNormal);
        let k: f64 = rng.sample(StandardNormal);
        [80.0 + 1.5 * n, 18.0 + 0.8 * m, (2.1 + 0.05 * k).max(0.0), 4.0]
    }

    fn toy_window(rng: &mut ChaCha8Rng, fall_rows: usize) -> LabeledWindow {
        let mut values = Array2::zeros((WINDOW_LEN, CHANNELS));
        for t in 0..WINDOW_LEN {
            let row = if t < WINDOW_LEN - fall_rows {
                calm_row(rng)
            } else {
                fall_row(rng)
            };
            for c in 0..CHANNELS {
                values[[t, c]] = row[c];
            }
        }
        let fall = fall_rows > 0;
        LabeledWindow {
            values,
            label: if fall { Category::Fall } else { Category::Adl },
            code: if fall {
                ActivityLabel::Fob
            } else {
                ActivityLabel::Sta
            },
            session_id: "toy".into(),
            start_time: 0,
        }
    }

    fn toy_train_set() -> WindowSet {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut windows = Vec::new();
        for _ in 0..24 {
            windows.push(toy_window(&mut rng, 0));
        }
        for i in 0..24 {
            windows.push(toy_window(&mut rng, 3 + i % 6));
        }
        let stats = fit_standardizer(&windows, "train").expect("non-empty");
        WindowSet {
            windows: apply_standardizer(&stats, &windows),
            stats: Some(stats),
            role: "train".into(),
            dropped_falls: 0,
        }
    }

    fn detector_bytes() -> &'static [u8] {
        static BYTES: OnceLock<Vec<u8>> = OnceLock::new();
        BYTES.get_or_init(|| {
            let set = toy_train_set();
            let config = TrainConfig {
                batch_size: 8,
                learning_rate: 1e-3,
                epochs: 60,
                seed: 5,
                ..TrainConfig::default()
            };
            let mut detector = train(Architecture::Lstm, &set, &config).expect("toy training");
            let dir = tempfile::tempdir().expect("tempdir");
            let path = dir.path().join("lstm.fdet");
            detector.save(&path).expect("save artifact");
            std::fs::read(&path).expect("read artifact back")
        })
    }

    fn write_detector(dir: &Path) -> PathBuf {
        let path = dir.join("lstm.fdet");
        std::fs::write(&path, detector_bytes()).expect("write artifact");
        path
    }

    fn test_config(dir: &Path) -> ServiceConfig {
        ServiceConfig {
            cooldown_seconds: 10,
            alert_log: None,
            metrics_file: None,
            qos: FdaasQos::default(),
            detectors: BTreeMap::from([("lstm".to_string(), write_detector(dir))]),
            residents: vec![ResidentConfig {
                id: "alice".into(),
                location: Some("bedroom".into()),
                age_group: AgeGroup::Elderly80Plus,
                health_condition: HealthCondition::Stable,
                resource_availability: ResourceAvailability::Limited,
                qos: None,
            }],
            webhook: None,
        }
    }

    fn reading_from(row: [f64; 4]) -> RadarReading {
        RadarReading::new(
            row[0],
            row[1],
            row[2],
            PhysiologicalState::from_u8(row[3] as u8).expect("valid state"),
        )
        .expect("valid reading")
    }

    fn feed(engine: &mut ServiceEngine, ts: i64, row: [f64; 4]) -> Option<FallAlert> {
        engine
            .ingest_record(&RecordLine {
                hse_id: "e000".into(),
                ts,
                location: "bedroom".into(),
                reading: reading_from(row),
            })
            .expect("known location")
    }

    fn record_csv(ts: i64, location: &str, row: [f64; 4]) -> String {
        format!(
            "e000,{ts},{location},{},{},{},{}",
            row[0], row[1], row[2], row[3] as u8
        )
    }

    #[test]
    fn toy_detector_separates_streams() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_detector(dir.path());
        let mut detector = TrainedDetector::load(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let calm = toy_window(&mut rng, 0);
            let fall = toy_window(&mut rng, 4);
            for (window, expect_fall) in [(calm, false), (fall, true)] {
                let mut values = window.values.clone();
                standardize_values(&detector.stats, &mut values);
                let p = detector.score_one(&values).unwrap();
                assert_eq!(p >= FALL_THRESHOLD, expect_fall, "p={p}");
            }
        }
    }

    #[test]
    fn window_fills_before_any_scoring() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for ts in 0..7 {
            assert!(feed(&mut engine, ts, calm_row(&mut rng)).is_none());
        }
        assert_eq!(engine.metrics().windows_scored, 0);
        feed(&mut engine, 7, calm_row(&mut rng));
        assert_eq!(engine.metrics().windows_scored, 1);
        feed(&mut engine, 8, calm_row(&mut rng));
        assert_eq!(engine.metrics().windows_scored, 2);
        assert_eq!(engine.metrics().readings, 9);
    }

    #[test]
    fn timestamp_gap_restarts_the_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for ts in 0..8 {
            feed(&mut engine, ts, calm_row(&mut rng));
        }
        assert_eq!(engine.metrics().windows_scored, 1);
        // 5-second dropout: the old window must not bridge it.
        for ts in 13..20 {
            feed(&mut engine, ts, calm_row(&mut rng));
        }
        assert_eq!(engine.metrics().timeline_gaps, 1);
        assert_eq!(engine.metrics().windows_scored, 1);
        feed(&mut engine, 20, calm_row(&mut rng));
        assert_eq!(engine.metrics().windows_scored, 2);
    }

    #[test]
    fn out_of_order_readings_are_dropped_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for ts in 0..8 {
            feed(&mut engine, ts, calm_row(&mut rng));
        }
        feed(&mut engine, 7, calm_row(&mut rng));
        feed(&mut engine, 3, calm_row(&mut rng));
        assert_eq!(engine.metrics().out_of_order, 2);
        assert_eq!(engine.metrics().windows_scored, 1);
        feed(&mut engine, 8, calm_row(&mut rng));
        assert_eq!(engine.metrics().windows_scored, 2);
    }

    #[test]
    fn malformed_and_unknown_lines_count_and_do_not_stop_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let err = engine.ingest_line("definitely,not,a,record", 1).unwrap_err();
        assert!(matches!(err, ServiceError::MalformedRecord { line: 1, .. }));
        let err = engine
            .ingest_line(&record_csv(0, "garage", [70.0, 16.0, 1.2, 1.0]), 2)
            .unwrap_err();
        assert!(matches!(err, ServiceError::UnknownResident { .. }));
        engine
            .ingest_line(&record_csv(0, "bedroom", [70.0, 16.0, 1.2, 1.0]), 3)
            .unwrap();
        assert_eq!(engine.metrics().malformed_records, 1);
        assert_eq!(engine.metrics().unknown_locations, 1);
        assert_eq!(engine.metrics().readings, 1);
    }

    #[test]
    fn falls_alert_once_per_cooldown() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut alerts = Vec::new();
        for ts in 0..30 {
            if let Some(a) = feed(&mut engine, ts, calm_row(&mut rng)) {
                alerts.push(a);
            }
        }
        assert!(alerts.is_empty(), "calm stream must not alert");
        for ts in 30..70 {
            if let Some(a) = feed(&mut engine, ts, fall_row(&mut rng)) {
                alerts.push(a);
            }
        }
        assert!(
            (3..=5).contains(&alerts.len()),
            "expected a cooldown-spaced alert train, got {}",
            alerts.len()
        );
        let first = &alerts[0];
        assert!(
            (31..=37).contains(&first.timestamp),
            "first alert at {}",
            first.timestamp
        );
        for pair in alerts.windows(2) {
            assert_eq!(
                pair[1].timestamp - pair[0].timestamp,
                engine.cooldown,
                "sustained falls re-alert exactly at the cooldown boundary"
            );
        }
        for alert in &alerts {
            alert.validate().unwrap();
            assert_eq!(alert.resident, "alice");
            assert_eq!(alert.architecture, Architecture::Lstm);
            assert_eq!(alert.window.len(), WINDOW_LEN);
            assert!(alert.latency_seconds < 2.0);
        }
        assert_eq!(engine.metrics().alerts, alerts.len() as u64);
        assert!(engine.metrics().alerts_suppressed > 0);
    }

    #[test]
    fn config_toml_parses_with_defaults() {
        let text = r#"
            [detectors]
            lstm = "artifacts/lstm.fdet"

            [[residents]]
            id = "alice"
            age_group = "other"
            health_condition = "stable"
            resource_availability = "limited"

            [webhook]
            url = "http://127.0.0.1:9999/alerts"
        "#;
        let config: ServiceConfig = toml::from_str(text).unwrap();
        assert_eq!(config.cooldown_seconds, 30);
        assert_eq!(config.residents[0].location(), "alice");
        assert!(config.residents[0].qos.is_none());
        let webhook = config.webhook.unwrap();
        assert_eq!(webhook.max_attempts, 3);
        assert_eq!(webhook.backoff_ms, 100);
        assert_eq!(webhook.queue_capacity, 256);
        assert_eq!(config.qos, FdaasQos::default());
    }

    #[test]
    fn config_enums_roundtrip_through_toml() {
        let resident = ResidentConfig {
            id: "r1".into(),
            location: None,
            age_group: AgeGroup::Elderly80Plus,
            health_condition: HealthCondition::Critical,
            resource_availability: ResourceAvailability::Ample,
            qos: None,
        };
        let text = toml::to_string(&resident).unwrap();
        let back: ResidentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, resident);
    }

    #[test]
    fn config_validation_rejects_structural_mistakes() {
        let dir = tempfile::tempdir().unwrap();
        let good = test_config(dir.path());
        good.validate().unwrap();

        let mut empty = good.clone();
        empty.residents.clear();
        assert!(matches!(
            empty.validate(),
            Err(ServiceError::ConfigInvalid { .. })
        ));

        let mut duplicate = good.clone();
        let mut second = duplicate.residents[0].clone();
        second.id = "bob".into();
        duplicate.residents.push(second);
        assert!(matches!(
            duplicate.validate(),
            Err(ServiceError::ConfigInvalid { reason }) if reason.contains("location")
        ));

        let mut missing = good.clone();
        missing.residents[0].health_condition = HealthCondition::Critical;
        // critical + limited selects fcn, which has no artifact entry
        assert!(matches!(
            missing.validate(),
            Err(ServiceError::MissingArtifact {
                architecture: Architecture::Fcn
            })
        ));

        let mut unknown = good.clone();
        unknown
            .detectors
            .insert("perceptron".into(), PathBuf::from("x"));
        assert!(matches!(
            unknown.validate(),
            Err(ServiceError::ConfigInvalid { reason }) if reason.contains("perceptron")
        ));

        let mut bad_hook = good;
        bad_hook.webhook = Some(WebhookConfig {
            url: String::new(),
            max_attempts: 3,
            backoff_ms: 1,
            timeout_ms: 10,
            queue_capacity: 8,
        });
        assert!(matches!(
            bad_hook.validate(),
            Err(ServiceError::ConfigInvalid { .. })
        ));
    }

    #[test]
    fn config_load_resolves_paths_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        write_detector(dir.path());
        let text = r#"
            alert_log = "out/alerts.jsonl"

            [detectors]
            lstm = "lstm.fdet"

            [[residents]]
            id = "alice"
            location = "bedroom"
            age_group = "elderly80-plus"
            health_condition = "stable"
            resource_availability = "limited"
        "#;
        let path = dir.path().join("service.toml");
        std::fs::write(&path, text).unwrap();
        let config = ServiceConfig::load(&path).unwrap();
        assert_eq!(config.detectors["lstm"], dir.path().join("lstm.fdet"));
        assert_eq!(
            config.alert_log.as_deref(),
            Some(dir.path().join("out/alerts.jsonl").as_path())
        );
    }

    #[test]
    fn alert_serialization_exposes_only_alert_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let alert = FallAlert {
            resident: "alice".into(),
            timestamp: 100,
            probability: 0.91,
            architecture: Architecture::Lstm,
            window: (0..WINDOW_LEN).map(|_| reading_from(fall_row(&mut rng))).collect(),
            latency_seconds: 0.004,
        };
        alert.validate().unwrap();
        let value: serde_json::Value = serde_json::to_value(&alert).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        // Keys come back in serde_json's sorted order; the point is that
        // nothing beyond the alert fields leaves the process.
        assert_eq!(
            keys,
            [
                "architecture",
                "latency_seconds",
                "probability",
                "resident",
                "timestamp",
                "window"
            ]
        );
        let back: FallAlert = serde_json::from_value(value).unwrap();
        assert_eq!(back, alert);
    }

    #[test]
    fn alert_validation_rejects_nonsense() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let good = FallAlert {
            resident: "alice".into(),
            timestamp: 0,
            probability: 0.7,
            architecture: Architecture::Lstm,
            window: (0..WINDOW_LEN).map(|_| reading_from(calm_row(&mut rng))).collect(),
            latency_seconds: 0.0,
        };
        good.validate().unwrap();
        let mut low = good.clone();
        low.probability = 0.49;
        assert!(low.validate().is_err());
        let mut short = good.clone();
        short.window.pop();
        assert!(short.validate().is_err());
        let mut negative = good;
        negative.latency_seconds = -1.0;
        assert!(negative.validate().is_err());
    }

    fn replay_stream_lines() -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut lines = Vec::new();
        for ts in 0..30 {
            lines.push(record_csv(1_000 + ts, "bedroom", calm_row(&mut rng)));
        }
        for ts in 30..55 {
            lines.push(record_csv(1_000 + ts, "bedroom", fall_row(&mut rng)));
        }
        for ts in 55..70 {
            lines.push(record_csv(1_000 + ts, "bedroom", calm_row(&mut rng)));
        }
        lines
    }

    #[test]
    fn replay_is_rate_invariant_and_logs_every_alert() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.records");
        std::fs::write(&session, replay_stream_lines().join("\n")).unwrap();

        let run = |tag: &str, rate: f64| {
            let mut config = test_config(dir.path());
            config.alert_log = Some(dir.path().join(format!("alerts-{tag}.jsonl")));
            config.metrics_file = Some(dir.path().join(format!("metrics-{tag}.json")));
            let outcome = run_service(
                &config,
                InputSource::Replay {
                    session: session.clone(),
                    resident: "alice".into(),
                    rate,
                },
                &AtomicBool::new(false),
            )
            .unwrap();
            (config, outcome)
        };

        let (config_a, fast) = run("fast", 50_000.0);
        let (_, faster) = run("faster", 5_000_000.0);

        assert!(!fast.alerts.is_empty());
        let key = |alerts: &[FallAlert]| {
            alerts
                .iter()
                .map(|a| (a.resident.clone(), a.timestamp, a.probability.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&fast.alerts), key(&faster.alerts));

        let log_text = std::fs::read_to_string(config_a.alert_log.unwrap()).unwrap();
        let logged: Vec<FallAlert> = log_text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(logged.len(), fast.alerts.len());
        for (logged, emitted) in logged.iter().zip(&fast.alerts) {
            assert_eq!(logged, emitted);
        }

        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(config_a.metrics_file.unwrap()).unwrap())
                .unwrap();
        assert_eq!(metrics["readings"].as_u64().unwrap(), 70);
        assert_eq!(metrics["alerts"].as_u64().unwrap(), fast.alerts.len() as u64);
        assert!(metrics["delivery"]["dispatched"].as_u64().unwrap() >= 1);
    }

    #[test]
    fn replay_requires_a_known_resident_and_positive_rate() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.records");
        std::fs::write(&session, replay_stream_lines().join("\n")).unwrap();
        let config = test_config(dir.path());
        let err = run_service(
            &config,
            InputSource::Replay {
                session: session.clone(),
                resident: "nobody".into(),
                rate: 100.0,
            },
            &AtomicBool::new(false),
        )
        .unwrap_err();
        assert!(matches!(err, ServiceError::ConfigInvalid { .. }));
        let err = run_service(
            &config,
            InputSource::Replay {
                session,
                resident: "alice".into(),
                rate: 0.0,
            },
            &AtomicBool::new(false),
        )
        .unwrap_err();
        assert!(matches!(err, ServiceError::ConfigInvalid { .. }));
    }

    #[test]
    fn piped_lines_tolerate_garbage_and_still_alert() {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let mut lines = replay_stream_lines();
        lines.insert(10, "not a record".to_string());
        lines.insert(40, record_csv(9_999, "garage", [70.0, 16.0, 1.2, 1.0]));
        let input = lines.join("\n");
        let mut alerts = Vec::new();
        pump_lines(
            std::io::Cursor::new(input.as_str()),
            &mut engine,
            &None,
            &mut alerts,
            &AtomicBool::new(false),
        )
        .unwrap();
        assert!(!alerts.is_empty());
        assert_eq!(engine.metrics().malformed_records, 1);
        assert_eq!(engine.metrics().unknown_locations, 1);
        assert_eq!(engine.metrics().readings, 70);
    }

    #[test]
    fn tcp_source_streams_until_shutdown() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let mut engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let shutdown = std::sync::Arc::new(AtomicBool::new(false));
        let flag = std::sync::Arc::clone(&shutdown);
        let worker = std::thread::spawn(move || {
            let mut alerts = Vec::new();
            serve_tcp(listener, &mut engine, &None, &mut alerts, &flag).unwrap();
            (alerts, engine.metrics().clone())
        });
        {
            let mut client = std::net::TcpStream::connect(addr).unwrap();
            for line in replay_stream_lines() {
                writeln!(client, "{line}").unwrap();
            }
        }
        std::thread::sleep(Duration::from_millis(400));
        shutdown.store(true, Ordering::Relaxed);
        let (alerts, metrics) = worker.join().unwrap();
        assert!(!alerts.is_empty());
        assert_eq!(metrics.readings, 70);
    }

    #[test]
    fn engine_reports_each_placement() {
        let dir = tempfile::tempdir().unwrap();
        let engine = ServiceEngine::from_config(&test_config(dir.path())).unwrap();
        let placements = engine.placements();
        assert_eq!(placements.len(), 1);
        assert_eq!(placements[0].resident, "alice");
        assert_eq!(placements[0].location, "bedroom");
        assert_eq!(placements[0].architecture, Architecture::Lstm);
        assert!(!placements[0].rationale.is_empty());
    }
}
