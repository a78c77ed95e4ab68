//! Newline-delimited JSON over TCP.
//!
//! Request line: `{"op":"search","token":"..","body":{..},"id":"c1"}`.
//! Reply line: `{"correlation_id":"c1","status":"ok","body":{..}}`, where
//! `body` is the handler's document byte for byte. Pipelined requests on one
//! connection are answered in request order.

use futures::stream::{FuturesOrdered, StreamExt};
use serde::Deserialize;
use serde_json::value::RawValue;
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;

use crate::address::Address;
use crate::envelope::{Envelope, Reply, Status};
use crate::http::bus_error_status;
use crate::router::{body_token, Bus, Outcome};

/// Longest accepted request line, in bytes.
pub const MAX_LINE: usize = 1 << 20;

#[derive(Deserialize)]
struct Line {
    op: String,
    #[serde(default)]
    token: Option<String>,
    #[serde(default)]
    body: Option<Box<RawValue>>,
    #[serde(default)]
    id: Option<Value>,
    #[serde(default)]
    one_way: bool,
}

fn reply_line(correlation: &Value, status: Status, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 64);
    out.extend_from_slice(b"{\"correlation_id\":");
    out.extend_from_slice(&serde_json::to_vec(correlation).expect("id serializes"));
    out.extend_from_slice(b",\"status\":\"");
    out.extend_from_slice(status.as_str().as_bytes());
    out.extend_from_slice(b"\",\"body\":");
    out.extend_from_slice(body);
    out.extend_from_slice(b"}\n");
    out
}

async fn handle_line(bus: Bus, line: String) -> Vec<u8> {
    let req: Line = match serde_json::from_str(&line) {
        Ok(r) => r,
        Err(e) => {
            let r = Reply::error(Status::BadRequest, &format!("malformed request line: {e}"));
            return reply_line(&Value::Null, r.status, &r.body);
        }
    };
    let correlation = req.id.unwrap_or_else(|| Value::String(bus.next_message_id("tcp")));
    let message_id = match &correlation {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let address = match Address::parse(&format!("tcp://localhost/{}", req.op)) {
        Ok(a) => a,
        Err(e) => {
            let r = Reply::error(bus_error_status(&e), &e.to_string());
            return reply_line(&correlation, r.status, &r.body);
        }
    };
    let body: bytes::Bytes = match req.body {
        Some(raw) => bytes::Bytes::from(raw.get().to_string()),
        None => bytes::Bytes::from_static(b"{}"),
    };
    let token = req.token.or_else(|| body_token(&body));
    let mut env = Envelope::request(message_id, address.to_string(), body, bus.priority_for(token.as_deref()));
    if let Some(t) = token {
        env = env.with_header("token", t);
    }
    if req.one_way {
        env = env.one_way();
    }
    match bus.dispatch(env).await {
        Ok(Outcome::Reply(r)) => reply_line(&correlation, r.status, &r.envelope.body),
        Ok(Outcome::Ack { .. }) => reply_line(&correlation, Status::Ok, br#"{"status":"accepted"}"#),
        Err(e) => {
            let r = Reply::error(bus_error_status(&e), &e.to_string());
            reply_line(&correlation, r.status, &r.body)
        }
    }
}

async fn serve_connection(bus: Bus, stream: TcpStream) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut pending = FuturesOrdered::new();
    let mut buf = Vec::new();
    let mut eof = false;
    loop {
        tokio::select! {
            n = read_line(&mut reader, &mut buf), if !eof => {
                match n? {
                    0 => eof = true,
                    _ => {
                        let line = String::from_utf8_lossy(&buf).trim().to_string();
                        buf.clear();
                        if !line.is_empty() {
                            pending.push_back(handle_line(bus.clone(), line));
                        }
                    }
                }
            }
            Some(out) = pending.next(), if !pending.is_empty() => {
                write.write_all(&out).await?;
            }
            else => break,
        }
    }
    write.shutdown().await
}

/// Reads one `\n`-terminated line into `buf`, rejecting lines over [`MAX_LINE`].
async fn read_line<R: AsyncBufReadExt + Unpin>(r: &mut R, buf: &mut Vec<u8>) -> std::io::Result<usize> {
    let n = (&mut *r).take(MAX_LINE as u64 + 1).read_until(b'\n', buf).await?;
    if buf.len() > MAX_LINE {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "request line too long"));
    }
    Ok(n)
}

pub async fn serve(bus: Bus, listener: TcpListener, mut stop: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let bus = bus.clone();
                    tokio::spawn(async move {
                        if let Err(e) = serve_connection(bus, stream).await {
                            tracing::debug!(%peer, error = %e, "tcp connection closed");
                        }
                    });
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
            _ = stop.changed() => return,
        }
    }
}
