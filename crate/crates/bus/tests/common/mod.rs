#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use vidbus_bus::{BusConfig, Daemon, ListenConfig, Services};
use vidbus_core::auth::{AuthConfig, Authenticator, UserType};
use vidbus_core::registry::{AccessParamDoc, Credentials, MasterKey, ProbeDoc, Registry, SourceDescriptor, SourceProbe, SystemType};
use vidbus_core::scheduler::SchedulerConfig;

pub const PASSWORD: &str = "passw0rd-1";

pub fn params(port: u16) -> AccessParamDoc {
    AccessParamDoc {
        endpoint: format!("rtsp://10.1.1.1:{port}/live"),
        protocol: "rtsp".into(),
        credentials: Credentials { username: "cam".into(), password: "Cam-Pass-XYZ".into() },
        codec: "h264".into(),
    }
}

pub fn seeded_services() -> Arc<Services> {
    let auth = Authenticator::in_memory(AuthConfig { kdf_iterations: 1000, ..Default::default() });
    for (name, t) in [("admin", UserType::Admin), ("op", UserType::Operator), ("viewer", UserType::Viewer)] {
        auth.add_user(name, PASSWORD, t).unwrap();
    }
    let registry = Registry::in_memory(Some(&MasterKey::generate()), "k1");
    let rows = [
        ("s1", "淮阴区交通路口1", "淮阴区", SystemType::Traffic),
        ("s2", "淮阴区治安点", "淮阴区", SystemType::PublicSecurity),
        ("s3", "清江浦交通监控", "清江浦区", SystemType::Traffic),
        ("s4", "淮阴区城管", "淮阴区", SystemType::CityManagement),
        ("s5", "Mobile Command Van", "开发区", SystemType::MobileCommand),
    ];
    for (id, name, region, system_type) in rows {
        let desc = SourceDescriptor {
            id: id.into(),
            name: name.into(),
            system_type,
            region: region.into(),
            location: None,
            poll_address: None,
        };
        registry.register_source(desc, &params(554), 1).unwrap();
    }
    Arc::new(Services { auth: Arc::new(auth), registry: Arc::new(registry) })
}

pub struct NoProbe;

impl SourceProbe for NoProbe {
    fn fetch(&self, _address: &str) -> Result<ProbeDoc, String> {
        Err("unreachable".into())
    }
}

pub fn ephemeral() -> ListenConfig {
    ListenConfig {
        http_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
        tcp_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
        poll_interval_ms: 60_000,
        drain_timeout_ms: 5_000,
    }
}

pub fn start(services: Arc<Services>) -> Daemon {
    Daemon::start(&ephemeral(), SchedulerConfig::default(), BusConfig::default(), services, Arc::new(NoProbe)).unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(20)))
        .build()
        .into()
}

/// `(status code, body bytes)`
pub fn http_post(addr: SocketAddr, path: &str, body: &str, token: Option<&str>) -> (u16, Vec<u8>) {
    let mut req = agent().post(format!("http://{addr}{path}")).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let mut resp = req.send(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_vec().unwrap())
}

pub fn http_get(addr: SocketAddr, path: &str, token: Option<&str>) -> (u16, Vec<u8>) {
    let mut req = agent().get(format!("http://{addr}{path}"));
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let mut resp = req.call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_vec().unwrap())
}

pub struct TcpClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpClient {
    pub fn connect(addr: SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        Self { reader: BufReader::new(s.try_clone().unwrap()), writer: s }
    }

    pub fn send(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    pub fn recv(&mut self) -> String {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        line
    }

    pub fn call(&mut self, line: &str) -> String {
        self.send(line);
        self.recv()
    }
}

/// The raw bytes of the `"body"` member of a TCP reply line.
pub fn raw_body(line: &str) -> String {
    #[derive(serde::Deserialize)]
    struct Reply<'a> {
        #[serde(borrow)]
        body: &'a serde_json::value::RawValue,
    }
    serde_json::from_str::<Reply>(line).unwrap().body.get().to_string()
}

pub fn login_token(addr: SocketAddr, user: &str) -> String {
    let (code, body) = http_post(addr, "/user_login", &format!(r#"{{"username":"{user}","password":"{PASSWORD}"}}"#), None);
    assert_eq!(code, 200, "{}", String::from_utf8_lossy(&body));
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    v["token"].as_str().unwrap().to_string()
}
