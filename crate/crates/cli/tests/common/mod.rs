#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn synthetic(name: &str) -> PathBuf {
    fixtures().join("synthetic").join(name)
}

pub fn q2d(args: &[&str]) -> Output {
    q2d_env(args, &[])
}

pub fn q2d_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_q2d"));
    cmd.args(args).env_remove("Q2D_API_KEY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("q2d runs")
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "q2d failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One received request.
#[derive(Debug, Clone)]
pub struct Received {
    pub head: String,
    pub body: String,
}

/// Minimal HTTP/1.1 server answering each request with `respond(n, body)`,
/// where `n` counts requests from 0.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub received: Arc<Mutex<Vec<Received>>>,
}

impl MockServer {
    pub fn start<F>(respond: F) -> MockServer
    where
        F: Fn(usize, &str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let received = Arc::new(Mutex::new(Vec::new()));
        let (h, r) = (hits.clone(), received.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    let end = line == "\r\n";
                    head.push_str(&line);
                    if end {
                        break;
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).ok();
                let body = String::from_utf8_lossy(&body).to_string();
                let n = h.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = respond(n, &body);
                r.lock().unwrap().push(Received { head, body });
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                stream.write_all(resp.as_bytes()).ok();
            }
        });
        MockServer {
            url,
            hits,
            received,
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Completion reply whose text depends on the request count, so a cache
/// miss is visible in the output.
pub fn counting_completion(n: usize, _body: &str) -> (u16, String) {
    let text = format!(" generated passage {n} about the topic");
    (
        200,
        serde_json::json!({"choices": [{"text": text}]}).to_string(),
    )
}
