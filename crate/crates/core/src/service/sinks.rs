//! Alert delivery: the append-only alert log, the HTTP webhook, retry
//! policy, and the background dispatcher that keeps slow sinks away from the
//! ingestion path.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FallAlert, ServiceError};

/// Anything that can receive an emitted alert. Sinks only ever see
/// [`FallAlert`] values; raw readings have no path out of the process, which
/// is the privacy contract in type form.
pub trait AlertSink: Send {
    fn name(&self) -> &'static str;
    fn deliver(&mut self, alert: &FallAlert) -> Result<(), ServiceError>;
}

/// Line-delimited JSON alert log. Each alert is a single `write_all` of one
/// line, so a reader never observes a partial record.
pub struct FileSink {
    path: PathBuf,
    file: File,
}

impl FileSink {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl AlertSink for FileSink {
    fn name(&self) -> &'static str {
        "alert-log"
    }

    fn deliver(&mut self, alert: &FallAlert) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(alert)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        Ok(())
    }
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    100
}

fn default_timeout_ms() -> u64 {
    1_000
}

fn default_queue_capacity() -> usize {
    256
}

/// Webhook endpoint configuration. `max_attempts` and `backoff_ms` drive the
/// exponential retry; `queue_capacity` bounds both the dispatch channel and
/// the redelivery queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebhookConfig {
    pub url: String,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
}

impl WebhookConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.url.is_empty() {
            return Err(ServiceError::ConfigInvalid {
                reason: "webhook.url must not be empty".into(),
            });
        }
        if self.max_attempts == 0 || self.queue_capacity == 0 {
            return Err(ServiceError::ConfigInvalid {
                reason: "webhook.max_attempts and webhook.queue_capacity must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            initial_backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

/// HTTP POST sink; an attempt succeeds only on a 2xx response.
pub struct WebhookSink {
    url: String,
    agent: ureq::Agent,
}

impl WebhookSink {
    pub fn new(config: &WebhookConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self {
            url: config.url.clone(),
            agent,
        }
    }
}

impl AlertSink for WebhookSink {
    fn name(&self) -> &'static str {
        "webhook"
    }

    fn deliver(&mut self, alert: &FallAlert) -> Result<(), ServiceError> {
        let body = serde_json::to_string(alert)?;
        let outcome = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body);
        let reason = match outcome {
            Ok(resp) if (200..300).contains(&resp.status()) => return Ok(()),
            Ok(resp) => format!("status {}", resp.status()),
            Err(ureq::Error::Status(code, _)) => format!("status {code}"),
            Err(e) => e.to_string(),
        };
        Err(ServiceError::SinkUnavailable {
            sink: "webhook",
            attempts: 1,
            reason,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: default_max_attempts(),
            initial_backoff: Duration::from_millis(default_backoff_ms()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SinkDelivery {
    pub sink: &'static str,
    pub attempts: u32,
    pub delivered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The at-least-once outcome of pushing one alert to every sink.
#[derive(Debug, Clone, Serialize)]
pub struct DeliveryRecord {
    pub resident: String,
    pub timestamp: i64,
    pub deliveries: Vec<SinkDelivery>,
}

impl DeliveryRecord {
    pub fn fully_delivered(&self) -> bool {
        self.deliveries.iter().all(|d| d.delivered)
    }
}

/// Delivers one alert to every sink, retrying each with exponential backoff
/// up to the policy cap. Failures are recorded per sink, never raised.
pub fn dispatch_alert(
    alert: &FallAlert,
    sinks: &mut [Box<dyn AlertSink>],
    policy: &RetryPolicy,
) -> DeliveryRecord {
    let mut deliveries = Vec::with_capacity(sinks.len());
    for sink in sinks.iter_mut() {
        let mut attempts = 0;
        let mut backoff = policy.initial_backoff;
        let mut error = None;
        let delivered = loop {
            attempts += 1;
            match sink.deliver(alert) {
                Ok(()) => break true,
                Err(e) => {
                    log::warn!("sink {} attempt {attempts} failed: {e}", sink.name());
                    error = Some(e.to_string());
                    if attempts >= policy.max_attempts {
                        break false;
                    }
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
            }
        };
        deliveries.push(SinkDelivery {
            sink: sink.name(),
            attempts,
            delivered,
            error: if delivered { None } else { error },
        });
    }
    DeliveryRecord {
        resident: alert.resident.clone(),
        timestamp: alert.timestamp,
        deliveries,
    }
}

/// Counters the dispatcher maintains behind a mutex so the service report
/// can include delivery health.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DeliveryStats {
    /// Alerts accepted onto the dispatch queue.
    pub dispatched: u64,
    /// Alerts delivered to every sink on the first dispatch.
    pub delivered: u64,
    /// Sink-level failures after retries (the alert moves to redelivery).
    pub failed: u64,
    /// Total sink attempts, including retries.
    pub attempts: u64,
    /// Queued sink deliveries that later succeeded.
    pub redelivered: u64,
    /// Redelivery entries dropped because the bounded queue overflowed.
    pub redelivery_dropped: u64,
    /// Entries still awaiting redelivery at shutdown.
    pub undelivered: u64,
    /// Alerts rejected because the dispatch channel was full.
    pub queue_rejected: u64,
}

/// Background alert dispatcher: a bounded channel feeds a worker thread that
/// owns the sinks, so webhook timeouts and backoff sleeps never stall
/// ingestion. Sink deliveries that fail after retries wait in a bounded
/// redelivery queue that is retried on every later alert and once more at
/// shutdown; when that queue overflows the oldest entry is dropped and
/// counted.
pub struct Dispatcher {
    sender: Option<SyncSender<FallAlert>>,
    handle: Option<JoinHandle<()>>,
    stats: Arc<Mutex<DeliveryStats>>,
}

impl Dispatcher {
    pub fn spawn(
        sinks: Vec<Box<dyn AlertSink>>,
        policy: RetryPolicy,
        queue_capacity: usize,
    ) -> Self {
        let (sender, receiver) = sync_channel::<FallAlert>(queue_capacity.max(1));
        let stats = Arc::new(Mutex::new(DeliveryStats::default()));
        let worker_stats = Arc::clone(&stats);
        let handle = std::thread::spawn(move || {
            dispatch_loop(receiver, sinks, policy, queue_capacity.max(1), worker_stats);
        });
        Self {
            sender: Some(sender),
            handle: Some(handle),
            stats,
        }
    }

    /// Hands one alert to the worker without blocking; a full queue is
    /// counted rather than stalling the caller.
    pub fn submit(&self, alert: &FallAlert) {
        let sender = self.sender.as_ref().expect("dispatcher running");
        match sender.try_send(alert.clone()) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                log::error!(
                    "dispatch queue rejected alert for {} at {}",
                    alert.resident,
                    alert.timestamp
                );
                self.stats.lock().expect("stats lock").queue_rejected += 1;
            }
        }
    }

    pub fn stats(&self) -> DeliveryStats {
        self.stats.lock().expect("stats lock").clone()
    }

    /// Closes the queue, waits for the worker to drain and run a final
    /// redelivery pass, and returns the final stats.
    pub fn shutdown(mut self) -> DeliveryStats {
        self.sender.take();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
        self.stats()
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        self.sender.take();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn dispatch_loop(
    receiver: Receiver<FallAlert>,
    mut sinks: Vec<Box<dyn AlertSink>>,
    policy: RetryPolicy,
    redelivery_capacity: usize,
    stats: Arc<Mutex<DeliveryStats>>,
) {
    let mut redelivery: VecDeque<(usize, FallAlert)> = VecDeque::new();
    while let Ok(alert) = receiver.recv() {
        retry_queued(&mut sinks, &mut redelivery, &stats);
        let record = dispatch_alert(&alert, &mut sinks, &policy);
        let mut s = stats.lock().expect("stats lock");
        s.dispatched += 1;
        s.attempts += record.deliveries.iter().map(|d| u64::from(d.attempts)).sum::<u64>();
        if record.fully_delivered() {
            s.delivered += 1;
        }
        for (i, d) in record.deliveries.iter().enumerate() {
            if !d.delivered {
                s.failed += 1;
                if redelivery.len() == redelivery_capacity {
                    redelivery.pop_front();
                    s.redelivery_dropped += 1;
                }
                redelivery.push_back((i, alert.clone()));
            }
        }
    }
    // Shutdown flush: one more full-policy pass over whatever is queued.
    for (sink_idx, alert) in redelivery.drain(..) {
        let record = dispatch_alert(&alert, &mut sinks[sink_idx..=sink_idx], &policy);
        let mut s = stats.lock().expect("stats lock");
        s.attempts += record.deliveries.iter().map(|d| u64::from(d.attempts)).sum::<u64>();
        if record.fully_delivered() {
            s.redelivered += 1;
        } else {
            s.undelivered += 1;
        }
    }
}

fn retry_queued(
    sinks: &mut [Box<dyn AlertSink>],
    redelivery: &mut VecDeque<(usize, FallAlert)>,
    stats: &Arc<Mutex<DeliveryStats>>,
) {
    for _ in 0..redelivery.len() {
        let (sink_idx, alert) = redelivery.pop_front().expect("queue non-empty");
        match sinks[sink_idx].deliver(&alert) {
            Ok(()) => {
                let mut s = stats.lock().expect("stats lock");
                s.attempts += 1;
                s.redelivered += 1;
            }
            Err(_) => {
                stats.lock().expect("stats lock").attempts += 1;
                redelivery.push_back((sink_idx, alert));
            }
        }
    }
}
