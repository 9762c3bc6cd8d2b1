//! Minimal HTTP/1.1 server standing in for the model sidecar.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

/// `(method, path, body) -> (status, body)`.
pub type Handler = Arc<dyn Fn(&str, &str, &serde_json::Value) -> (u16, String) + Send + Sync>;

pub struct MockSidecar {
    pub url: String,
    calls: Arc<Mutex<BTreeMap<String, usize>>>,
}

impl MockSidecar {
    pub fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let calls = Arc::new(Mutex::new(BTreeMap::new()));
        let c = Arc::clone(&calls);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let handler = Arc::clone(&handler);
                let calls = Arc::clone(&c);
                thread::spawn(move || serve(stream, handler, calls));
            }
        });
        Self { url, calls }
    }

    pub fn calls(&self, path: &str) -> usize {
        self.calls.lock().unwrap().get(path).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }
}

fn serve(stream: TcpStream, handler: Handler, calls: Arc<Mutex<BTreeMap<String, usize>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok();
    let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    *calls.lock().unwrap().entry(path.clone()).or_default() += 1;
    let (status, out) = handler(&method, &path, &json);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
        out.len()
    );
}

/// Relevance derived from text length, so it is stable and in `[0, 1]`.
pub fn fake_relevance(query: &str, doc: &str) -> f64 {
    let shared = doc.split_whitespace().filter(|w| query.to_lowercase().contains(&w.to_lowercase())).count();
    shared as f64 / (1 + doc.split_whitespace().count()) as f64
}

/// Well-behaved sidecar: lexical-ish scores, a one-bullet generation, and
/// exact-match similarity.
pub fn healthy() -> Handler {
    Arc::new(|method, path, body| match (method, path) {
        ("GET", "/health") => (200, r#"{"reranker":"mock","generator":"mock","similarity":"mock"}"#.into()),
        ("POST", "/rerank") => {
            let q = body["query"].as_str().unwrap_or("");
            let scores: Vec<f64> = body["documents"]
                .as_array()
                .map(|ds| ds.iter().map(|d| fake_relevance(q, d.as_str().unwrap_or(""))).collect())
                .unwrap_or_default();
            (200, serde_json::json!({ "scores": scores }).to_string())
        }
        ("POST", "/generate") => (200, serde_json::json!({ "text": "- Crews are on scene (Doc 1)" }).to_string()),
        ("POST", "/similarity") => {
            let strs = |k: &str| -> Vec<String> {
                body[k]
                    .as_array()
                    .map(|a| a.iter().map(|v| v.as_str().unwrap_or("").to_string()).collect())
                    .unwrap_or_default()
            };
            let (c, r) = (strs("candidates"), strs("references"));
            let f1: Vec<Vec<f64>> =
                c.iter().map(|a| r.iter().map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
            (200, serde_json::json!({ "f1": f1 }).to_string())
        }
        _ => (404, "{}".into()),
    })
}
