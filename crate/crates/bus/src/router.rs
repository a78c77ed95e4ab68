use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use bytes::Bytes;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use vidbus_core::scheduler::{
    Dispatched, MetricsSnapshot, Priority, SchedError, Scheduler, SchedulerConfig, SharedScheduler, Transaction, TxnId,
};
use vidbus_core::time::{Clock, MonotonicClock};

use crate::address::{Address, EndpointBinding};
use crate::envelope::{Envelope, ExchangePattern, Reply, Status};
use crate::BusError;

/// What a handler sees of a dispatched envelope.
#[derive(Clone, Debug)]
pub struct Request {
    pub message_id: String,
    pub address: String,
    pub headers: BTreeMap<String, String>,
    pub body: Bytes,
    pub priority: Priority,
}

impl Request {
    /// The `token` header, or else a top-level `"token"` string in a JSON body.
    pub fn token(&self) -> Option<String> {
        self.headers.get("token").cloned().or_else(|| body_token(&self.body))
    }
}

pub(crate) fn body_token(body: &[u8]) -> Option<String> {
    #[derive(Deserialize)]
    struct Probe {
        token: Option<String>,
    }
    serde_json::from_slice::<Probe>(body).ok().and_then(|p| p.token)
}

/// A named service operation. Runs on a scheduler worker thread.
pub trait Handler: Send + Sync {
    fn handle(&self, req: &Request) -> Reply;
}

impl<F> Handler for F
where
    F: Fn(&Request) -> Reply + Send + Sync,
{
    fn handle(&self, req: &Request) -> Reply {
        self(req)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub workers: usize,
    pub request_timeout_ms: u64,
    /// Priority of requests without a valid session.
    pub default_priority: u8,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { workers: 4, request_timeout_ms: 30_000, default_priority: 5 }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.workers == 0 || self.workers > 1024 {
            return Err(("workers".into(), "must be in 1..=1024".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(("request_timeout_ms".into(), "must be positive".into()));
        }
        if Priority::new(self.default_priority).is_err() {
            return Err(("default_priority".into(), "must be in 0..=9".into()));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}

/// Reply to a request-response envelope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub envelope: Envelope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Reply(Response),
    /// The one-way envelope was accepted by the scheduler.
    Ack { message_id: String },
}

impl Outcome {
    pub fn into_response(self) -> Option<Response> {
        match self {
            Outcome::Reply(r) => Some(r),
            Outcome::Ack { .. } => None,
        }
    }
}

enum ReplySink {
    Async(oneshot::Sender<Response>),
    Sync(mpsc::SyncSender<Response>),
}

struct Pending {
    handler: Arc<dyn Handler>,
    message_id: String,
    address: String,
    headers: BTreeMap<String, String>,
    reply: Option<ReplySink>,
}

type PriorityResolver = Arc<dyn Fn(&str) -> Option<Priority> + Send + Sync>;

struct Inner {
    scheduler: SharedScheduler,
    clock: MonotonicClock,
    config: BusConfig,
    endpoints: RwLock<HashMap<String, EndpointBinding>>,
    handlers: RwLock<HashMap<String, Arc<dyn Handler>>>,
    pending: Mutex<HashMap<TxnId, Pending>>,
    resolver: RwLock<Option<PriorityResolver>>,
    next_txn: AtomicU64,
    next_message: AtomicU64,
    accepting: AtomicBool,
    stopping: AtomicBool,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

/// The message router. Cheap to clone.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

const WORKER_POLL: Duration = Duration::from_millis(100);

impl Bus {
    /// Builds the scheduler and starts the worker and sampler threads.
    pub fn start(scheduler: SchedulerConfig, config: BusConfig) -> Result<Self, BusError> {
        config.validate().map_err(|(k, m)| BusError::InvalidConfig(format!("{k}: {m}")))?;
        let clock = MonotonicClock::new();
        let sample_period = scheduler.sample_period();
        let sched = Scheduler::new(scheduler, clock.now()).map_err(|e| BusError::InvalidConfig(e.to_string()))?;
        let bus = Self {
            inner: Arc::new(Inner {
                scheduler: SharedScheduler::new(sched),
                clock,
                config,
                endpoints: RwLock::new(HashMap::new()),
                handlers: RwLock::new(HashMap::new()),
                pending: Mutex::new(HashMap::new()),
                resolver: RwLock::new(None),
                next_txn: AtomicU64::new(1),
                next_message: AtomicU64::new(1),
                accepting: AtomicBool::new(true),
                stopping: AtomicBool::new(false),
                threads: Mutex::new(Vec::new()),
            }),
        };
        let mut threads = bus.inner.threads.lock();
        for w in 0..bus.inner.config.workers {
            let inner = Arc::clone(&bus.inner);
            threads.push(thread::Builder::new().name(format!("bus-worker-{w}")).spawn(move || inner.worker_loop(w)).expect("spawn worker"));
        }
        let inner = Arc::clone(&bus.inner);
        threads.push(
            thread::Builder::new().name("bus-sampler".into()).spawn(move || inner.sampler_loop(sample_period)).expect("spawn sampler"),
        );
        drop(threads);
        Ok(bus)
    }

    pub fn config(&self) -> &BusConfig {
        &self.inner.config
    }

    pub fn scheduler(&self) -> &SharedScheduler {
        &self.inner.scheduler
    }

    pub fn register_handler(&self, name: impl Into<String>, handler: Arc<dyn Handler>) {
        self.inner.handlers.write().insert(name.into(), handler);
    }

    pub fn register_endpoint(&self, binding: EndpointBinding) -> Result<(), BusError> {
        let key = Address::parse(&binding.address)?.key();
        if !self.inner.handlers.read().contains_key(&binding.handler) {
            return Err(BusError::UnknownHandler(binding.handler));
        }
        let mut endpoints = self.inner.endpoints.write();
        if endpoints.contains_key(&key) {
            return Err(BusError::AddressInUse(binding.address));
        }
        endpoints.insert(key, binding);
        Ok(())
    }

    pub fn set_enabled(&self, address: &str, enabled: bool) -> Result<(), BusError> {
        let key = Address::parse(address)?.key();
        match self.inner.endpoints.write().get_mut(&key) {
            Some(b) => {
                b.enabled = enabled;
                Ok(())
            }
            None => Err(BusError::NoSuchEndpoint(address.to_string())),
        }
    }

    /// Registered bindings, ordered by address key.
    pub fn endpoints(&self) -> Vec<EndpointBinding> {
        let endpoints = self.inner.endpoints.read();
        let mut keys: Vec<_> = endpoints.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| endpoints[k].clone()).collect()
    }

    /// Installs the session lookup used by [`Bus::priority_for`].
    pub fn set_priority_resolver(&self, f: impl Fn(&str) -> Option<Priority> + Send + Sync + 'static) {
        *self.inner.resolver.write() = Some(Arc::new(f));
    }

    /// Priority of the session behind `token`, or the default priority.
    pub fn priority_for(&self, token: Option<&str>) -> Priority {
        let resolved = match (token, self.inner.resolver.read().as_ref()) {
            (Some(t), Some(r)) => r(t),
            _ => None,
        };
        resolved.unwrap_or_else(|| Priority::new(self.inner.config.default_priority).expect("validated"))
    }

    pub fn next_message_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.inner.next_message.fetch_add(1, Ordering::Relaxed))
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.inner.scheduler.snapshot_metrics(self.inner.clock.now())
    }

    pub fn is_accepting(&self) -> bool {
        self.inner.accepting.load(Ordering::Acquire)
    }

    fn submit(&self, env: Envelope, reply: Option<ReplySink>) -> Result<TxnId, BusError> {
        if !self.is_accepting() {
            return Err(BusError::ShuttingDown);
        }
        let key = Address::parse(&env.source_endpoint)?.key();
        let handler = {
            let endpoints = self.inner.endpoints.read();
            let binding = endpoints
                .get(&key)
                .filter(|b| b.enabled)
                .ok_or_else(|| BusError::NoSuchEndpoint(env.source_endpoint.clone()))?;
            self.inner
                .handlers
                .read()
                .get(&binding.handler)
                .cloned()
                .ok_or_else(|| BusError::UnknownHandler(binding.handler.clone()))?
        };
        let id = TxnId(self.inner.next_txn.fetch_add(1, Ordering::Relaxed));
        let mut txn = Transaction::new(id, env.priority, env.body, self.inner.clock.now());
        if env.exchange_pattern == ExchangePattern::RequestResponse {
            txn = txn.with_reply_route(id.0);
        }
        // Registered before submission: a worker may pick the transaction up at once.
        self.inner.pending.lock().insert(
            id,
            Pending { handler, message_id: env.message_id, address: env.source_endpoint, headers: env.headers, reply },
        );
        match self.inner.scheduler.submit(txn) {
            Ok(_) => Ok(id),
            Err(e) => {
                self.inner.pending.lock().remove(&id);
                match e {
                    SchedError::QueueFull { .. } => Err(BusError::Overloaded),
                    other => Err(BusError::Internal(other.to_string())),
                }
            }
        }
    }

    /// Routes `env` through the scheduler to its endpoint's handler.
    pub async fn dispatch(&self, env: Envelope) -> Result<Outcome, BusError> {
        match env.exchange_pattern {
            ExchangePattern::OneWay => {
                let message_id = env.message_id.clone();
                self.submit(env, None)?;
                Ok(Outcome::Ack { message_id })
            }
            ExchangePattern::RequestResponse => {
                let (tx, rx) = oneshot::channel();
                let id = self.submit(env, Some(ReplySink::Async(tx)))?;
                match tokio::time::timeout(self.inner.config.request_timeout(), rx).await {
                    Ok(Ok(resp)) => Ok(Outcome::Reply(resp)),
                    Ok(Err(_)) => Err(BusError::Internal("reply dropped".into())),
                    Err(_) => {
                        self.inner.pending.lock().remove(&id);
                        Err(BusError::Timeout)
                    }
                }
            }
        }
    }

    /// [`Bus::dispatch`] for callers outside an async runtime.
    pub fn dispatch_blocking(&self, env: Envelope) -> Result<Outcome, BusError> {
        match env.exchange_pattern {
            ExchangePattern::OneWay => {
                let message_id = env.message_id.clone();
                self.submit(env, None)?;
                Ok(Outcome::Ack { message_id })
            }
            ExchangePattern::RequestResponse => {
                let (tx, rx) = mpsc::sync_channel(1);
                let id = self.submit(env, Some(ReplySink::Sync(tx)))?;
                match rx.recv_timeout(self.inner.config.request_timeout()) {
                    Ok(resp) => Ok(Outcome::Reply(resp)),
                    Err(mpsc::RecvTimeoutError::Timeout) => {
                        self.inner.pending.lock().remove(&id);
                        Err(BusError::Timeout)
                    }
                    Err(mpsc::RecvTimeoutError::Disconnected) => Err(BusError::Internal("reply dropped".into())),
                }
            }
        }
    }

    fn named_envelope(&self, name: &str, body: Bytes, pattern: ExchangePattern) -> Result<Envelope, BusError> {
        let address = if name.contains("://") { Address::parse(name)? } else { Address::parse(&format!("vm://{name}"))? };
        if !matches!(address, Address::Vm { .. }) {
            return Err(BusError::InvalidAddress(name.to_string()));
        }
        let priority = self.priority_for(body_token(&body).as_deref());
        let mut env = Envelope::request(self.next_message_id("vm"), address.to_string(), body, priority);
        env.exchange_pattern = pattern;
        Ok(env)
    }

    /// In-process delivery to `vm://<name>`; `name` may carry the scheme.
    pub async fn send_named_queue(&self, name: &str, body: impl Into<Bytes>, pattern: ExchangePattern) -> Result<Outcome, BusError> {
        let env = self.named_envelope(name, body.into(), pattern)?;
        self.dispatch(env).await
    }

    pub fn send_named_queue_blocking(&self, name: &str, body: impl Into<Bytes>, pattern: ExchangePattern) -> Result<Outcome, BusError> {
        let env = self.named_envelope(name, body.into(), pattern)?;
        self.dispatch_blocking(env)
    }

    /// Rejects new envelopes from now on.
    pub fn stop_accepting(&self) {
        self.inner.accepting.store(false, Ordering::Release);
    }

    /// Stops accepting, waits up to `drain` for in-flight transactions,
    /// stops the threads and returns the final metrics.
    pub fn shutdown(&self, drain: Duration) -> MetricsSnapshot {
        self.stop_accepting();
        if !self.inner.scheduler.wait_drained(drain) {
            tracing::warn!(in_flight = self.inner.scheduler.in_flight(), "drain timed out");
        }
        self.inner.stopping.store(true, Ordering::Release);
        self.inner.scheduler.close();
        let threads: Vec<_> = self.inner.threads.lock().drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
        self.metrics()
    }
}

impl Inner {
    fn worker_loop(&self, worker: usize) {
        loop {
            match self.scheduler.next_work_blocking(worker, WORKER_POLL) {
                Some(d) => self.run(d, worker),
                None if self.scheduler.is_closed() => return,
                None => {}
            }
        }
    }

    fn run(&self, d: Dispatched, worker: usize) {
        let id = d.txn.id;
        let pending = self.pending.lock().remove(&id);
        let (reply, sink, meta) = match pending {
            Some(p) => {
                let req = Request {
                    message_id: p.message_id,
                    address: p.address,
                    headers: p.headers,
                    body: d.txn.payload,
                    priority: d.txn.priority,
                };
                let reply = catch_unwind(AssertUnwindSafe(|| p.handler.handle(&req))).unwrap_or_else(|_| {
                    tracing::error!(address = %req.address, "handler panicked");
                    Reply::error(Status::Internal, "handler panicked")
                });
                (reply, p.reply, Some(req))
            }
            // The requester timed out before the transaction was dispatched.
            None => (Reply::error(Status::Timeout, "requester gone"), None, None),
        };
        if let Err(e) = self.scheduler.complete(id, worker, self.clock.now()) {
            tracing::error!(error = %e, "completion rejected");
        }
        let (Some(sink), Some(req)) = (sink, meta) else { return };
        let envelope = Envelope {
            message_id: format!("reply-{}", id.0),
            correlation_id: Some(req.message_id),
            source_endpoint: req.address,
            exchange_pattern: ExchangePattern::RequestResponse,
            headers: BTreeMap::from([("status".to_string(), reply.status.as_str().to_string())]),
            body: reply.body,
            priority: req.priority,
        };
        let resp = Response { status: reply.status, envelope };
        match sink {
            ReplySink::Async(tx) => {
                let _ = tx.send(resp);
            }
            ReplySink::Sync(tx) => {
                let _ = tx.try_send(resp);
            }
        }
    }

    fn sampler_loop(&self, period: Duration) {
        let step = period.min(WORKER_POLL);
        let mut waited = Duration::ZERO;
        while !self.stopping.load(Ordering::Acquire) {
            thread::sleep(step);
            waited += step;
            if waited >= period {
                waited = Duration::ZERO;
                if let Err(e) = self.scheduler.sample_all(self.clock.now()) {
                    tracing::error!(error = %e, "sampling failed");
                }
            }
        }
    }
}
