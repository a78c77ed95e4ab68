use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

const KEY: &str = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";
const ADMIN_PW: &str = "Adm1n-passw0rd";

fn vidbus() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vidbus"));
    c.env("RUST_LOG", "error").env_remove("VIDBUS_URL").env_remove("VIDBUS_TOKEN");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("vidbus.toml");
    let text = format!(
        r#"master_key_env = "VIDBUS_TEST_KEY"

[listen]
http_addr = "127.0.0.1:0"
tcp_addr = "127.0.0.1:0"
drain_timeout_ms = 5000

[auth]
kdf_iterations = 1000

[store]
registry_path = "{}"
users_path = "{}"
{extra}"#,
        dir.join("registry.jsonl").display(),
        dir.join("users.jsonl").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn bad_config_names_the_key() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "\n[scheduler]\npriority_threshold = 12\n");
    let out = vidbus().args(["serve", "--config"]).arg(&path).env("VIDBUS_TEST_KEY", KEY).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("scheduler.priority_threshold"), "{}", stderr(&out));

    std::fs::write(&path, "[listen]\nbogus = 1\n").unwrap();
    let out = vidbus().args(["serve", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));
}

#[test]
fn missing_master_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "");
    let out = vidbus().args(["serve", "--config"]).arg(&path).env_remove("VIDBUS_TEST_KEY").output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("VIDBUS_TEST_KEY"), "{}", stderr(&out));
}

#[test]
fn busy_port_exits_3() {
    let dir = TempDir::new().unwrap();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let path = write_config(dir.path(), "");
    let out = vidbus()
        .args(["serve", "--config"])
        .arg(&path)
        .arg("--http-addr")
        .arg(taken.local_addr().unwrap().to_string())
        .env("VIDBUS_TEST_KEY", KEY)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn unreachable_daemon_exits_5() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = vidbus()
        .args(["admin", "--url", &format!("http://127.0.0.1:{port}"), "--token", "t", "show-metrics"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn simulate_flags() {
    let dir = TempDir::new().unwrap();
    let out = vidbus().args(["simulate", "--policy", "bogus"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = vidbus()
        .args(["simulate", "--policy", "hybrid,rr", "--txns", "500", "--queues", "2,3", "--json", "--report"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("summary.csv").exists());
}

struct Served {
    child: Child,
    url: String,
    stdout: BufReader<std::process::ChildStdout>,
}

fn serve(config: &Path) -> Served {
    let mut child = vidbus()
        .args(["serve", "--config"])
        .arg(config)
        .env("VIDBUS_TEST_KEY", KEY)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let http = line.split_whitespace().find_map(|w| w.strip_prefix("http=")).expect("listening line").to_string();
    Served { child, url: format!("http://{http}"), stdout }
}

fn admin(url: &str, args: &[&str]) -> Output {
    vidbus().args(["admin", "--url", url, "--user", "root", "--password", ADMIN_PW]).args(args).output().unwrap()
}

#[test]
fn daemon_lifecycle_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "");
    let out = vidbus()
        .args(["admin", "bootstrap", "--config"])
        .arg(&config)
        .args(["--username", "root", "--password", ADMIN_PW])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let mut d = serve(&config);
    let url = d.url.clone();

    let out = vidbus().args(["admin", "--url", &url, "--user", "root", "--password", "wrong-passw0rd", "show-metrics"]).output().unwrap();
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert_eq!(code(&admin(&url, &["add-user", "bob", "--new-password", "short"])), 2);
    assert_eq!(code(&admin(&url, &["add-user", "bob", "--new-password", "b0b-passw0rd", "--usertype", "operator"])), 0);

    let out = admin(
        &url,
        &[
            "add-source", "--id", "c1", "--name", "North gate", "--system-type", "traffic", "--region", "north",
            "--endpoint", "rtsp://10.0.0.9/live", "--cred-user", "cam", "--cred-password", "Cam-Pass-1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = admin(&url, &["list-sources", "--region", "north", "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["items"][0]["id"], "c1");
    assert!(!String::from_utf8_lossy(&out.stdout).contains("Cam-Pass-1"));
    let out = admin(&url, &["list-sources", "--region", "north"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("North gate"));

    let out = admin(&url, &["show-metrics", "--json"]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    let t = &m["totals"];
    let n = |k: &str| t[k].as_u64().unwrap();
    assert!(n("submitted") >= 3);
    assert_eq!(n("submitted"), n("completed") + n("in_flight") + n("rejected"));

    let status = Command::new("kill").args(["-TERM", &d.child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit = d.child.wait().unwrap();
    assert_eq!(exit.code(), Some(0));
    let mut last = String::new();
    d.stdout.read_line(&mut last).unwrap();
    let field = |k: &str| -> u64 {
        last.split_whitespace().find_map(|w| w.strip_prefix(&format!("{k}="))).unwrap().parse().unwrap()
    };
    assert!(last.starts_with("stopped"), "{last}");
    assert_eq!(field("submitted"), field("completed") + field("rejected") + field("in_flight"));
    assert_eq!(field("in_flight"), 0);

    let stored = std::fs::read_to_string(dir.path().join("registry.jsonl")).unwrap();
    assert!(stored.contains("c1") && !stored.contains("Cam-Pass-1"));
}
