//! Admin client for a running daemon's HTTP API.

use std::fmt::Write as _;
use std::time::Duration;

use serde_json::Value;
use vidbus_core::auth::check_password_policy;
use vidbus_core::registry::SourceSummary;
use vidbus_core::scheduler::MetricsSnapshot;

use crate::{CliError, Exit};

pub struct Client {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
}

fn exit_for(code: u16) -> Exit {
    match code {
        400 => Exit::Usage,
        401 | 403 => Exit::Auth,
        _ => Exit::Failure,
    }
}

fn error_message(code: u16, body: &[u8]) -> String {
    let detail = serde_json::from_slice::<Value>(body)
        .ok()
        .and_then(|v| v["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| String::from_utf8_lossy(body).into_owned());
    format!("server answered {code}: {detail}")
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { base: base.trim_end_matches('/').to_string(), agent, token: None }
    }

    pub fn with_token(mut self, token: String) -> Self {
        self.token = Some(token);
        self
    }

    fn send(&self, method: &str, path: &str, body: Option<&Value>) -> Result<Vec<u8>, CliError> {
        let url = format!("{}{path}", self.base);
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        let result = match (method, body) {
            ("GET", _) => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("authorization", a);
                }
                r.call()
            }
            (m, b) => {
                let text = b.map(Value::to_string).unwrap_or_else(|| "{}".into());
                let mut r = if m == "PUT" { self.agent.put(&url) } else { self.agent.post(&url) };
                r = r.header("content-type", "application/json");
                if let Some(a) = &auth {
                    r = r.header("authorization", a);
                }
                r.send(text)
            }
        };
        let mut resp = result.map_err(|e| CliError::new(Exit::Transport, format!("cannot reach {url}: {e}")))?;
        let code = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| CliError::new(Exit::Transport, format!("reading reply from {url}: {e}")))?;
        if code == 200 {
            Ok(bytes)
        } else {
            Err(CliError::new(exit_for(code), error_message(code, &bytes)))
        }
    }

    fn json(&self, method: &str, path: &str, body: Option<&Value>) -> Result<Value, CliError> {
        let bytes = self.send(method, path, body)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::new(Exit::Transport, format!("malformed reply: {e}")))
    }

    /// Logs in and keeps the session token. A refused login exits 4.
    pub fn login(mut self, username: &str, password: &str) -> Result<Self, CliError> {
        let v = self.json("POST", "/user_login", Some(&serde_json::json!({ "username": username, "password": password })))?;
        let token = v["token"].as_str().ok_or_else(|| CliError::new(Exit::Transport, "login reply has no token"))?;
        self.token = Some(token.to_string());
        Ok(self)
    }

    pub fn add_user(&self, username: &str, password: &str, usertype: &str) -> Result<Value, CliError> {
        check_password_policy(password).map_err(|e| CliError::new(Exit::Usage, e.to_string()))?;
        self.json("POST", "/admin/users", Some(&serde_json::json!({ "username": username, "password": password, "usertype": usertype })))
    }

    /// `doc` is `{"source": {..descriptor..}, "params": {..access params..}}`.
    pub fn add_source(&self, doc: &Value) -> Result<Value, CliError> {
        self.json("POST", "/admin/sources", Some(doc))
    }

    pub fn update_source(&self, id: &str, update: &Value) -> Result<Value, CliError> {
        self.json("PUT", &format!("/admin/sources/{id}"), Some(update))
    }

    /// Raw reply bytes of a search.
    pub fn search_raw(&self, region: &str, keyword: Option<&str>) -> Result<Vec<u8>, CliError> {
        let mut body = serde_json::json!({ "region": region });
        if let Some(k) = keyword {
            body["keyword"] = Value::String(k.to_string());
        }
        self.send("POST", "/resources/search", Some(&body))
    }

    pub fn search(&self, region: &str, keyword: Option<&str>) -> Result<Vec<SourceSummary>, CliError> {
        #[derive(serde::Deserialize)]
        struct Items {
            items: Vec<SourceSummary>,
        }
        let bytes = self.search_raw(region, keyword)?;
        serde_json::from_slice::<Items>(&bytes)
            .map(|i| i.items)
            .map_err(|e| CliError::new(Exit::Transport, format!("malformed reply: {e}")))
    }

    pub fn metrics_raw(&self) -> Result<Vec<u8>, CliError> {
        self.send("GET", "/metrics", None)
    }

    pub fn metrics(&self) -> Result<MetricsSnapshot, CliError> {
        serde_json::from_slice(&self.metrics_raw()?).map_err(|e| CliError::new(Exit::Transport, format!("malformed metrics: {e}")))
    }
}

pub fn sources_table(items: &[SourceSummary]) -> String {
    let mut out = format!("{:<12} {:<28} {:<16} {:<12} {:<8} {:>7}\n", "ID", "NAME", "TYPE", "REGION", "STATUS", "VERSION");
    for s in items {
        let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<12} {:<28} {:<16} {:<12} {:<8} {:>7}",
            s.id,
            s.name,
            s.system_type.as_str(),
            s.region,
            status,
            s.params_version
        );
    }
    out
}

pub fn metrics_table(m: &MetricsSnapshot) -> String {
    let t = &m.totals;
    let mut out = String::new();
    let _ = writeln!(out, "submitted  {}", t.submitted);
    let _ = writeln!(out, "completed  {}", t.completed);
    let _ = writeln!(out, "rejected   {}", t.rejected);
    let _ = writeln!(out, "in_flight  {} (queued {}, in service {})", t.in_flight, t.queued, t.in_service);
    let _ = writeln!(out, "conservation {}", if m.check_conservation().is_ok() { "ok" } else { "VIOLATED" });
    let _ = writeln!(out, "\n{:>8} {:>10} {:>10} {:>9} {:>12} {:>12}", "PRIORITY", "SUBMITTED", "COMPLETED", "REJECTED", "MEAN_S", "P95_S");
    for c in &m.classes {
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>10} {:>9} {:>12.6} {:>12.6}",
            c.priority, c.submitted, c.completed, c.rejected, c.latency.mean_s, c.latency.p95_s
        );
    }
    out
}
