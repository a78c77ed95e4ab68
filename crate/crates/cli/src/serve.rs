use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use vidbus_bus::{Daemon, DaemonError, HttpProbe, Services};
use vidbus_core::auth::{AuthError, Authenticator, UserType};
use vidbus_core::registry::{MasterKey, Registry};

use crate::config::Config;
use crate::{CliError, Exit};

pub fn master_key(config: &Config) -> Result<MasterKey, CliError> {
    let var = &config.master_key_env;
    match MasterKey::from_env(var) {
        Ok(Some(k)) => Ok(k),
        Ok(None) => Err(CliError::new(
            Exit::Usage,
            format!("master key missing: set environment variable {var} to 64 hex characters (see `vidbus keygen`)"),
        )),
        Err(e) => Err(CliError::new(Exit::Usage, format!("environment variable {var}: {e}"))),
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p)
            .map_err(|e| CliError::new(Exit::Failure, format!("cannot create {}: {e}", p.display()))),
        _ => Ok(()),
    }
}

pub fn open_users(config: &Config) -> Result<Authenticator, CliError> {
    ensure_parent(&config.store.users_path)?;
    Authenticator::open(config.auth.clone(), &config.store.users_path)
        .map_err(|e| CliError::new(Exit::Failure, format!("user store {}: {e}", config.store.users_path.display())))
}

/// Creates an admin user directly in the user store. Run with the daemon stopped.
pub fn bootstrap(config: &Config, username: &str, password: &str) -> Result<(), CliError> {
    let auth = open_users(config)?;
    auth.add_user(username, password, UserType::Admin).map_err(|e| match e {
        AuthError::WeakPassword(_) | AuthError::InvalidUsername(_) => CliError::new(Exit::Usage, e.to_string()),
        other => CliError::new(Exit::Failure, other.to_string()),
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

/// Runs the daemon until SIGINT or SIGTERM, then drains and exits.
pub fn serve(config: &Config) -> Result<(), CliError> {
    let key = master_key(config)?;
    let auth = open_users(config)?;
    if auth.user_count() == 0 {
        tracing::warn!("user store is empty; create an admin with `vidbus admin bootstrap`");
    }
    ensure_parent(&config.store.registry_path)?;
    let registry = Registry::open(&config.store.registry_path, Some(&key), &config.store.key_id)
        .map_err(|e| CliError::new(Exit::Failure, format!("registry store {}: {e}", config.store.registry_path.display())))?;
    let services = Arc::new(Services { auth: Arc::new(auth), registry: Arc::new(registry) });
    let daemon = Daemon::start(&config.listen, config.scheduler.clone(), config.bus.clone(), services, Arc::new(HttpProbe::default()))
        .map_err(|e| match e {
            DaemonError::PortInUse { .. } => CliError::new(Exit::PortInUse, e.to_string()),
            DaemonError::Bus(_) => CliError::new(Exit::Usage, e.to_string()),
            other => CliError::new(Exit::Failure, other.to_string()),
        })?;
    println!("listening http={} tcp={}", daemon.http_addr(), daemon.tcp_addr());
    let _ = std::io::stdout().flush();

    daemon.block_on(shutdown_signal());
    tracing::info!("shutdown requested, draining");
    let m = daemon.shutdown();
    let t = &m.totals;
    println!("stopped submitted={} completed={} rejected={} in_flight={}", t.submitted, t.completed, t.rejected, t.in_flight);
    Ok(())
}
