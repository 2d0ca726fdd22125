use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, BackendConfig, BackendError, History, Message};

/// Single-token bucket refilled at `rate` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64) -> Self {
        TokenBucket {
            rate,
            state: Mutex::new((1.0, Instant::now())),
        }
    }

    /// Blocks until a token is available. A non-positive rate never blocks.
    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        let wait = {
            let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let tokens = (st.0 + now.duration_since(st.1).as_secs_f64() * self.rate).min(1.0);
            st.1 = now;
            if tokens >= 1.0 {
                st.0 = tokens - 1.0;
                Duration::ZERO
            } else {
                st.0 = tokens - 1.0;
                Duration::from_secs_f64((1.0 - tokens) / self.rate)
            }
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Chat-completions client. The key is read once from the configured
/// environment variable and only ever placed in the Authorization header.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    seed: u64,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    bucket: TokenBucket,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::Config("remote backend requires an endpoint".into()))?;
        let model = cfg
            .model_name
            .clone()
            .ok_or_else(|| BackendError::Config("remote backend requires a model name".into()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            client,
            endpoint,
            model,
            temperature: cfg.temperature,
            seed: cfg.seed,
            api_key,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(500),
            bucket: TokenBucket::new(cfg.requests_per_second),
        })
    }

    /// Base delay before the first retry; doubled on each further retry.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    fn body(&self, history: &History) -> Value {
        let messages: Vec<Value> = history
            .messages()
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "seed": self.seed,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Message, (bool, BackendError)> {
        self.bucket.acquire();
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| (true, BackendError::Transport(e.without_url().to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (true, BackendError::Transport(e.without_url().to_string())))?;
        if !status.is_success() {
            let transient = status.as_u16() == 429 || status.is_server_error();
            return Err((
                transient,
                BackendError::Status {
                    status: status.as_u16(),
                    body: text.chars().take(500).collect(),
                },
            ));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| (false, BackendError::Malformed(e.to_string())))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(Message::assistant)
            .ok_or_else(|| {
                (
                    false,
                    BackendError::Malformed("missing choices[0].message.content".into()),
                )
            })
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, history: &History) -> Result<Message, BackendError> {
        let body = self.body(history);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(m) => return Ok(m),
                Err((true, e)) if attempt < self.max_retries => {
                    log::warn!("remote call failed ({e}); retry {}", attempt + 1);
                    thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the given (status, body) pairs in order and reports each
    /// request's headers and body.
    fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                tx.send((headers, String::from_utf8(buf).unwrap())).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, rx)
    }

    fn config(url: &str) -> BackendConfig {
        BackendConfig {
            kind: super::super::BackendKind::Remote,
            endpoint: Some(url.into()),
            model_name: Some("m".into()),
            requests_per_second: 0.0,
            max_retries: 3,
            timeout_secs: 10,
            ..BackendConfig::default()
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;

    #[test]
    fn retries_transient_then_succeeds() {
        let (url, rx) = serve(vec![(503, "busy".into()), (429, "slow".into()), (200, OK.into())]);
        let b = RemoteBackend::from_config(&config(&url))
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let mut h = History::new("sys");
        h.push(Message::user("hi"));
        assert_eq!(b.complete(&h).unwrap().content, "hello");
        let (_, body) = rx.recv().unwrap();
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["model"], "m");
        assert_eq!(v["messages"][1]["role"], "user");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["seed"], 0);
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, _rx) = serve(vec![(400, "bad".into())]);
        let b = RemoteBackend::from_config(&config(&url))
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let e = b.complete(&History::new("s")).unwrap_err();
        assert!(matches!(e, BackendError::Status { status: 400, .. }));
    }

    #[test]
    fn malformed_body() {
        let (url, _rx) = serve(vec![(200, "{\"choices\":[]}".into())]);
        let b = RemoteBackend::from_config(&config(&url)).unwrap();
        assert!(matches!(
            b.complete(&History::new("s")),
            Err(BackendError::Malformed(_))
        ));
    }

    #[test]
    fn key_goes_to_header_only() {
        let var = "FORGE_TEST_REMOTE_KEY";
        std::env::set_var(var, "sekrit");
        let (url, rx) = serve(vec![(200, OK.into())]);
        let cfg = BackendConfig {
            api_key_env: Some(var.into()),
            ..config(&url)
        };
        let b = RemoteBackend::from_config(&cfg).unwrap();
        assert!(!format!("{b:?}").contains("sekrit"));
        b.complete(&History::new("s")).unwrap();
        let (headers, body) = rx.recv().unwrap();
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer sekrit"));
        assert!(!body.contains("sekrit"));
    }

    #[test]
    fn unset_key_variable_is_config_error() {
        let cfg = BackendConfig {
            api_key_env: Some("FORGE_TEST_UNSET_KEY_VARIABLE".into()),
            ..config("http://127.0.0.1:9")
        };
        assert!(matches!(RemoteBackend::from_config(&cfg), Err(BackendError::Config(_))));
    }

    #[test]
    fn bucket_spaces_requests() {
        let b = TokenBucket::new(20.0);
        let t = Instant::now();
        for _ in 0..3 {
            b.acquire();
        }
        assert!(t.elapsed() >= Duration::from_millis(90));
    }
}
