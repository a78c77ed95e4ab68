use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::runtime::Runtime;
use tokio::sync::watch;
use vidbus_core::registry::{ProbeDoc, SourceProbe};
use vidbus_core::scheduler::{MetricsSnapshot, SchedulerConfig};
use vidbus_core::time::unix_millis;

use crate::router::{Bus, BusConfig};
use crate::services::{self, Services};
use crate::{http, tcp, BusError};

/// Fetches a source's status document over HTTP.
pub struct HttpProbe {
    agent: ureq::Agent,
}

impl HttpProbe {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self { agent: config.into() }
    }
}

impl Default for HttpProbe {
    fn default() -> Self {
        Self::new(Duration::from_secs(5))
    }
}

impl SourceProbe for HttpProbe {
    fn fetch(&self, address: &str) -> Result<ProbeDoc, String> {
        let mut resp = self.agent.get(address).call().map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<ProbeDoc>().map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenConfig {
    pub http_addr: SocketAddr,
    pub tcp_addr: SocketAddr,
    pub poll_interval_ms: u64,
    pub drain_timeout_ms: u64,
}

impl Default for ListenConfig {
    fn default() -> Self {
        Self {
            http_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            tcp_addr: SocketAddr::from(([127, 0, 0, 1], 7070)),
            poll_interval_ms: 10_000,
            drain_timeout_ms: 30_000,
        }
    }
}

impl ListenConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.poll_interval_ms == 0 {
            return Err(("poll_interval_ms".into(), "must be positive".into()));
        }
        if self.http_addr.port() != 0 && self.http_addr == self.tcp_addr {
            return Err(("tcp_addr".into(), "must differ from http_addr".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("address {addr} is already in use")]
    PortInUse { addr: SocketAddr },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("runtime: {0}")]
    Runtime(std::io::Error),
    #[error(transparent)]
    Bus(#[from] BusError),
}

fn bind(addr: SocketAddr) -> Result<std::net::TcpListener, DaemonError> {
    let l = std::net::TcpListener::bind(addr).map_err(|source| match source.kind() {
        std::io::ErrorKind::AddrInUse => DaemonError::PortInUse { addr },
        _ => DaemonError::Bind { addr, source },
    })?;
    l.set_nonblocking(true).map_err(|source| DaemonError::Bind { addr, source })?;
    Ok(l)
}

/// A running bus: HTTP and TCP listeners, scheduler workers, the
/// statistics sampler and the source poller.
pub struct Daemon {
    bus: Bus,
    runtime: Runtime,
    http_addr: SocketAddr,
    tcp_addr: SocketAddr,
    stop_tx: watch::Sender<bool>,
    servers: Vec<tokio::task::JoinHandle<()>>,
    poller_stop: Arc<AtomicBool>,
    poller: Option<JoinHandle<()>>,
    drain: Duration,
}

impl Daemon {
    pub fn start(
        listen: &ListenConfig,
        scheduler: SchedulerConfig,
        bus_config: BusConfig,
        services: Arc<Services>,
        probe: Arc<dyn SourceProbe>,
    ) -> Result<Self, DaemonError> {
        let http_std = bind(listen.http_addr)?;
        let tcp_std = bind(listen.tcp_addr)?;
        let http_addr = http_std.local_addr().map_err(DaemonError::Runtime)?;
        let tcp_addr = tcp_std.local_addr().map_err(DaemonError::Runtime)?;

        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("bus-io")
            .enable_all()
            .build()
            .map_err(DaemonError::Runtime)?;
        let bus = Bus::start(scheduler, bus_config)?;
        services::install(&bus, Arc::clone(&services))?;

        let (stop_tx, stop_rx) = watch::channel(false);
        let mut servers = Vec::new();
        {
            let _guard = runtime.enter();
            let http_listener = tokio::net::TcpListener::from_std(http_std).map_err(DaemonError::Runtime)?;
            let tcp_listener = tokio::net::TcpListener::from_std(tcp_std).map_err(DaemonError::Runtime)?;
            let app = http::router(bus.clone());
            let mut http_stop = stop_rx.clone();
            servers.push(runtime.spawn(async move {
                let shutdown = async move {
                    let _ = http_stop.changed().await;
                };
                if let Err(e) = axum::serve(http_listener, app).with_graceful_shutdown(shutdown).await {
                    tracing::error!(error = %e, "http server failed");
                }
            }));
            servers.push(runtime.spawn(tcp::serve(bus.clone(), tcp_listener, stop_rx)));
        }

        let poller_stop = Arc::new(AtomicBool::new(false));
        let poller = {
            let stop = Arc::clone(&poller_stop);
            let registry = Arc::clone(&services.registry);
            let interval = Duration::from_millis(listen.poll_interval_ms);
            thread::Builder::new()
                .name("source-poller".into())
                .spawn(move || poll_loop(&registry, &*probe, interval, &stop))
                .map_err(DaemonError::Runtime)?
        };
        tracing::info!(%http_addr, %tcp_addr, "bus listening");
        Ok(Self {
            bus,
            runtime,
            http_addr,
            tcp_addr,
            stop_tx,
            servers,
            poller_stop,
            poller: Some(poller),
            drain: Duration::from_millis(listen.drain_timeout_ms),
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    /// Runs a future on the daemon's runtime.
    pub fn block_on<F: std::future::Future>(&self, f: F) -> F::Output {
        self.runtime.block_on(f)
    }

    /// Stops accepting work, drains in-flight transactions, stops every
    /// thread and returns the final metrics.
    pub fn shutdown(mut self) -> MetricsSnapshot {
        self.bus.stop_accepting();
        let _ = self.stop_tx.send(true);
        let final_metrics = self.bus.shutdown(self.drain);
        let servers = std::mem::take(&mut self.servers);
        self.runtime.block_on(async {
            for s in servers {
                let _ = tokio::time::timeout(Duration::from_secs(2), s).await;
            }
        });
        self.poller_stop.store(true, Ordering::Release);
        if let Some(p) = self.poller.take() {
            let _ = p.join();
        }
        final_metrics
    }
}

fn poll_loop(registry: &vidbus_core::registry::Registry, probe: &dyn SourceProbe, interval: Duration, stop: &AtomicBool) {
    // Sweeps start on a fixed grid so a slow sweep does not stretch the period.
    let step = Duration::from_millis(20);
    let mut next = Instant::now() + interval;
    while !stop.load(Ordering::Acquire) {
        let now = Instant::now();
        if now < next {
            thread::sleep(step.min(next - now));
            continue;
        }
        next += interval;
        if next <= now {
            next = now + interval;
        }
        match registry.poll_sources(probe, unix_millis()) {
            Ok(changes) => {
                for (id, change) in changes {
                    if change != vidbus_core::registry::PollChange::None {
                        tracing::info!(source = %id, ?change, "source changed");
                    }
                }
            }
            Err(e) => tracing::error!(error = %e, "poll sweep failed"),
        }
    }
}
