use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vidbus::admin::{self, Client};
use vidbus::config::Config;
use vidbus::simulate::{self, SimulateArgs};
use vidbus::{serve, CliError, Exit};
use vidbus_core::registry::MasterKey;
use vidbus_core::scheduler::SchedulerConfig;
use vidbus_core::sim::PolicyKind;

#[derive(Parser)]
#[command(name = "vidbus", version, about = "Video service bus daemon, simulator and admin client")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the daemon until SIGINT/SIGTERM.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        http_addr: Option<SocketAddr>,
        #[arg(long)]
        tcp_addr: Option<SocketAddr>,
        #[arg(long)]
        poll_interval_ms: Option<u64>,
    },
    /// Compare scheduling policies on a synthetic workload.
    Simulate(SimulateCmd),
    /// Administer a running daemon.
    Admin(AdminCmd),
    /// Print a fresh random master key.
    Keygen,
}

#[derive(Clone)]
struct PolicyList(Vec<PolicyKind>);

fn parse_policy_list(s: &str) -> Result<PolicyList, String> {
    simulate::parse_policies(s).map(PolicyList)
}

#[derive(Args)]
struct SimulateCmd {
    /// rr, wrr, pq, hybrid, a comma-separated list, or all.
    #[arg(long, default_value = "all", value_parser = parse_policy_list)]
    policy: PolicyList,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    txns: usize,
    /// WRR bank size `W`, or `P,W` for both banks.
    #[arg(long, value_parser = simulate::parse_queues)]
    queues: Option<(Option<usize>, usize)>,
    /// Offered load relative to aggregate worker capacity.
    #[arg(long, default_value_t = 0.9)]
    util: f64,
    /// Share of traffic in the PQ class.
    #[arg(long, default_value_t = 0.2)]
    pq_share: f64,
    /// Output directory for reports.
    #[arg(long, default_value = "sim-report")]
    report: PathBuf,
    /// Take the scheduler section from this config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AdminCmd {
    #[arg(long, env = "VIDBUS_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, env = "VIDBUS_USER")]
    user: Option<String>,
    #[arg(long, env = "VIDBUS_PASSWORD", hide_env_values = true)]
    password: Option<String>,
    /// Use an existing session token instead of logging in.
    #[arg(long, env = "VIDBUS_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    op: AdminOp,
}

#[derive(Subcommand)]
enum AdminOp {
    AddUser {
        username: String,
        #[arg(long)]
        new_password: String,
        #[arg(long, default_value = "viewer")]
        usertype: String,
        #[arg(long)]
        json: bool,
    },
    AddSource {
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        system_type: String,
        #[arg(long)]
        region: String,
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value = "rtsp")]
        protocol: String,
        #[arg(long)]
        cred_user: String,
        #[arg(long)]
        cred_password: String,
        #[arg(long, default_value = "h264")]
        codec: String,
        #[arg(long)]
        poll_address: Option<String>,
        #[arg(long, requires = "lon")]
        lat: Option<f64>,
        #[arg(long, requires = "lat")]
        lon: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    ListSources {
        #[arg(long, default_value = "")]
        region: String,
        #[arg(long)]
        keyword: Option<String>,
        #[arg(long)]
        json: bool,
    },
    ShowMetrics {
        #[arg(long)]
        json: bool,
    },
    /// Create an admin user directly in the user store (daemon stopped).
    Bootstrap {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        username: String,
        #[arg(long, env = "VIDBUS_BOOTSTRAP_PASSWORD", hide_env_values = true)]
        password: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::from(Exit::Ok as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Serve { config, http_addr, tcp_addr, poll_interval_ms } => {
            let mut c = Config::load(&config)?;
            if let Some(a) = http_addr {
                c.listen.http_addr = a;
            }
            if let Some(a) = tcp_addr {
                c.listen.tcp_addr = a;
            }
            if let Some(p) = poll_interval_ms {
                c.listen.poll_interval_ms = p;
            }
            c.validate()?;
            serve::serve(&c)
        }
        Cmd::Simulate(s) => run_simulate(s),
        Cmd::Admin(a) => run_admin(a),
        Cmd::Keygen => {
            println!("{}", MasterKey::generate().to_hex());
            Ok(())
        }
    }
}

fn run_simulate(s: SimulateCmd) -> Result<(), CliError> {
    let mut scheduler = match &s.config {
        Some(p) => Config::load(p)?.scheduler,
        None => SchedulerConfig::default(),
    };
    if let Some((pq, wrr)) = s.queues {
        if let Some(pq) = pq {
            scheduler.pq.queues = pq;
        }
        scheduler.wrr.queues = wrr;
    }
    let policies = s.policy.0;
    let args = SimulateArgs {
        policies,
        seed: s.seed,
        txns: s.txns,
        utilization: s.util,
        pq_share: s.pq_share,
        scheduler,
        report_dir: s.report,
    };
    let reports = simulate::simulate(&args)?;
    print!("{}", simulate::render(&reports, &args, s.json));
    Ok(())
}

fn client(a: &AdminCmd) -> Result<Client, CliError> {
    let c = Client::new(&a.url);
    if let Some(t) = &a.token {
        return Ok(c.with_token(t.clone()));
    }
    match (&a.user, &a.password) {
        (Some(u), Some(p)) => c.login(u, p),
        _ => Err(CliError::new(Exit::Usage, "admin commands need --token, or --user and --password")),
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("json output"));
}

fn run_admin(a: AdminCmd) -> Result<(), CliError> {
    if let AdminOp::Bootstrap { config, username, password } = &a.op {
        let c = Config::load(config)?;
        serve::bootstrap(&c, username, password)?;
        println!("admin user {username} created");
        return Ok(());
    }
    let c = client(&a)?;
    match a.op {
        AdminOp::AddUser { username, new_password, usertype, json } => {
            let v = c.add_user(&username, &new_password, &usertype)?;
            if json {
                print_json(&v);
            } else {
                println!("user {username} ({usertype}) added");
            }
        }
        AdminOp::AddSource {
            id,
            name,
            system_type,
            region,
            endpoint,
            protocol,
            cred_user,
            cred_password,
            codec,
            poll_address,
            lat,
            lon,
            json,
        } => {
            let location = lat.zip(lon).map(|(lat, lon)| serde_json::json!({ "lat": lat, "lon": lon }));
            let doc = serde_json::json!({
                "source": {
                    "id": id, "name": name, "system_type": system_type, "region": region,
                    "location": location, "poll_address": poll_address,
                },
                "params": {
                    "endpoint": endpoint, "protocol": protocol, "codec": codec,
                    "credentials": { "username": cred_user, "password": cred_password },
                },
            });
            let v = c.add_source(&doc)?;
            if json {
                print_json(&v);
            } else {
                println!("source {} added", v["id"].as_str().unwrap_or(&id));
            }
        }
        AdminOp::ListSources { region, keyword, json } => {
            let items = c.search(&region, keyword.as_deref())?;
            if json {
                print_json(&serde_json::json!({ "items": items }));
            } else {
                print!("{}", admin::sources_table(&items));
            }
        }
        AdminOp::ShowMetrics { json } => {
            let m = c.metrics()?;
            if json {
                print_json(&m);
            } else {
                print!("{}", admin::metrics_table(&m));
            }
        }
        AdminOp::Bootstrap { .. } => unreachable!("handled above"),
    }
    Ok(())
}
