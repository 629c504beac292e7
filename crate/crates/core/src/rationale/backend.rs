use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use crate::encoders::stable_hash;
use crate::error::{Error, Result};
use crate::heads::Category;

use super::{label_token, NEGATIVE_LABEL};

pub const API_KEY_ENV: &str = "MM_API_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl HttpConfig {
    /// Reads the bearer token from `MM_API_KEY` if set.
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            max_tokens: 256,
            timeout: DEFAULT_TIMEOUT,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompletionBackend {
    /// Offline generator: fixed sentence skeletons chosen by a hash of the prompt.
    Stub { seed: u64 },
    /// `POST {base_url}/v1/completions`.
    Http(HttpConfig),
}

const POSITIVE: [&str; 3] = [
    "The meme is {label} because it invokes a {cat} stereotype that demeans women. Its wording and imagery reduce women to a role defined by the {cat} domain.",
    "This {cat} meme is {label}: it mocks women by tying their worth to the {cat} setting. The joke only works if the stereotype is taken for granted.",
    "Labelled {label}, the meme relies on a {cat} cliche about women. It presents that cliche as natural and belittles the women it depicts.",
];

const NEGATIVE: [&str; 3] = [
    "The meme is {label}. It refers to the {cat} domain without demeaning or stereotyping women.",
    "This {cat} meme is {label}: nothing in its text or image mocks women. The {cat} reference is descriptive rather than hostile.",
    "Labelled {label}, the meme mentions a {cat} theme but assigns no degrading role to women.",
];

/// The category named last in the prompt, matching capitalized names only.
fn last_category(prompt: &str) -> Category {
    Category::ALL
        .into_iter()
        .filter_map(|c| prompt.rfind(c.name()).map(|at| (at, c)))
        .max_by_key(|&(at, _)| at)
        .map_or(Category::Other, |(_, c)| c)
}

fn stub(prompt: &str, seed: u64) -> String {
    let h = stable_hash(prompt.as_bytes()) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let label = !prompt.contains(NEGATIVE_LABEL);
    let skeletons = if label { &POSITIVE } else { &NEGATIVE };
    let category = last_category(prompt);
    skeletons[(h % skeletons.len() as u64) as usize]
        .replace("{label}", label_token(label))
        .replace("{cat}", category.name())
}

fn http(prompt: &str, cfg: &HttpConfig) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/v1/completions", cfg.base_url.trim_end_matches('/'));
    let mut req = agent.post(&url);
    if let Some(key) = &cfg.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let transport = |e: ureq::Error| Error::Transport { status: None, message: e.to_string() };
    let mut resp = req
        .send_json(json!({ "model": cfg.model, "prompt": prompt, "max_tokens": cfg.max_tokens }))
        .map_err(transport)?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(Error::Transport { status: Some(status), message: body });
    }
    let body: Value = resp.body_mut().read_json().map_err(|e| Error::Backend(format!("unreadable completion: {e}")))?;
    let text = body["choices"][0]["text"].as_str().unwrap_or_default();
    if text.trim().is_empty() {
        return Err(Error::Backend("empty completion".into()));
    }
    Ok(text.to_string())
}

impl CompletionBackend {
    pub fn generate(&self, prompt: &str) -> Result<String> {
        if prompt.trim().is_empty() {
            return Err(Error::Argument("prompt is empty".into()));
        }
        match self {
            CompletionBackend::Stub { seed } => Ok(stub(prompt, *seed)),
            CompletionBackend::Http(cfg) => http(prompt, cfg),
        }
    }
}

/// Generates one rationale per prompt with at most `workers` concurrent
/// calls. Results keep prompt order; failures stay per item.
pub fn generate_many(backend: &CompletionBackend, prompts: &[String], workers: usize) -> Vec<Result<String>> {
    let slots: Vec<Mutex<Option<Result<String>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, prompts.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = prompts.get(i) else { break };
                *slots[i].lock().expect("slot lock") = Some(backend.generate(p));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one request with a fixed response and returns the raw request.
    fn mock(status: u16, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    fn cfg(url: String) -> HttpConfig {
        HttpConfig { base_url: url, model: "m".into(), max_tokens: 64, timeout: Duration::from_secs(5), api_key: Some("k1".into()) }
    }

    #[test]
    fn http_returns_completion_verbatim() {
        let (url, h) = mock(200, r#"{"choices":[{"text":"  Because it says so.\n"}]}"#);
        let out = CompletionBackend::Http(cfg(url)).generate("why?").unwrap();
        assert_eq!(out, "  Because it says so.\n");
        let req = h.join().unwrap();
        assert!(req.starts_with("POST /v1/completions "));
        assert!(req.contains("Bearer k1"));
        let body: Value = serde_json::from_str(req.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body, json!({"model": "m", "prompt": "why?", "max_tokens": 64}));
    }

    #[test]
    fn http_errors() {
        let (url, h) = mock(503, "busy");
        let err = CompletionBackend::Http(cfg(url)).generate("p").unwrap_err();
        assert!(matches!(err, Error::Transport { status: Some(503), .. }), "{err}");
        h.join().unwrap();
        let (url, h) = mock(200, r#"{"choices":[{"text":""}]}"#);
        assert!(matches!(CompletionBackend::Http(cfg(url)).generate("p"), Err(Error::Backend(_))));
        h.join().unwrap();
        let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let err = CompletionBackend::Http(cfg(format!("http://{closed}"))).generate("p").unwrap_err();
        assert!(matches!(err, Error::Transport { status: None, .. }), "{err}");
    }

    #[test]
    fn stub_contract() {
        let b = CompletionBackend::Stub { seed: 0 };
        let p = "Identified category: Leadership\nDetection label: misogynous";
        assert_eq!(b.generate(p).unwrap(), b.generate(p).unwrap());
        assert!(b.generate(p).unwrap().contains("Leadership"));
        let q = "Detection label: non-misogynous\nIdentified category: Shopping";
        let r = b.generate(q).unwrap();
        assert!(r.contains("Shopping") && r.contains(NEGATIVE_LABEL));
        assert!(matches!(b.generate(" "), Err(Error::Argument(_))));
    }

    #[test]
    fn batch_keeps_order() {
        let b = CompletionBackend::Stub { seed: 3 };
        let prompts: Vec<String> = (0..9).map(|i| format!("{} {i}", Category::ALL[i % 5])).collect();
        let out = generate_many(&b, &prompts, 4);
        for (p, r) in prompts.iter().zip(&out) {
            assert_eq!(r.as_ref().unwrap(), &b.generate(p).unwrap());
        }
        assert!(generate_many(&b, &[], 4).is_empty());
    }
}
