use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use serde_json::{json, Value};

use super::{ChatExchange, ChatProvider, ChatRequest, Part, ProviderConfig, ProviderError, Role, TextEmbedder};
use crate::clock::Stopwatch;

/// Counting semaphore capping in-flight requests to one endpoint.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(n: usize) -> Self {
        Semaphore { permits: Mutex::new(n), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore poisoned");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore poisoned");
        }
        *p -= 1;
        Permit(self)
    }
}

pub struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

fn endpoint_semaphore(endpoint: &str, cap: usize) -> Arc<Semaphore> {
    static TABLE: OnceLock<Mutex<HashMap<String, Arc<Semaphore>>>> = OnceLock::new();
    let mut t = TABLE.get_or_init(Default::default).lock().expect("semaphore table poisoned");
    t.entry(endpoint.to_string()).or_insert_with(|| Arc::new(Semaphore::new(cap))).clone()
}

/// Wait before retry number `attempt` (1-based): `base · 2^(attempt−1)`,
/// scaled by `1 + jitter` with `jitter ∈ [−0.1, 0.1]`.
pub fn backoff_delay(attempt: u32, base_s: f64, jitter: f64) -> Duration {
    let j = jitter.clamp(-0.1, 0.1);
    Duration::from_secs_f64((base_s * 2f64.powi(attempt as i32 - 1) * (1.0 + j)).max(0.0))
}

enum Outcome {
    Ok(String),
    Retry(String),
    Fatal(String),
}

/// Blocking client for an OpenAI-compatible server.
#[derive(Clone)]
struct Client {
    role: Role,
    cfg: ProviderConfig,
    agent: ureq::Agent,
    sem: Arc<Semaphore>,
}

impl Client {
    fn new(role: Role, cfg: ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate(role)?;
        let endpoint = cfg.endpoint.clone().unwrap_or_default();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let sem = endpoint_semaphore(&endpoint, cfg.max_concurrency);
        Ok(Client { role, cfg, agent, sem })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.endpoint.as_deref().unwrap_or_default().trim_end_matches('/'))
    }

    fn once(&self, url: &str, body: &str) -> Outcome {
        let _permit = self.sem.acquire();
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = self.cfg.token_env.as_deref().and_then(|v| std::env::var(v).ok()) {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send(body) {
            Err(e) => Outcome::Retry(e.to_string()),
            Ok(resp) => {
                let status = resp.status().as_u16();
                let text = resp.into_body().read_to_string().unwrap_or_default();
                match status {
                    200..=299 => Outcome::Ok(text),
                    429 | 500..=599 => Outcome::Retry(format!("HTTP {status}")),
                    _ => Outcome::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())),
                }
            }
        }
    }

    /// Posts with retries; returns the body and the attempt count.
    fn post(&self, path: &str, body: &Value) -> Result<(String, u32), ProviderError> {
        let url = self.url(path);
        let body = body.to_string();
        let mut rng = rand::rng();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let reason = match self.once(&url, &body) {
                Outcome::Ok(text) => return Ok((text, attempts)),
                Outcome::Fatal(r) => return Err(ProviderError::Unavailable { role: self.role, attempts, reason: r }),
                Outcome::Retry(r) => r,
            };
            if attempts > self.cfg.max_retries {
                return Err(ProviderError::Unavailable { role: self.role, attempts, reason });
            }
            log::warn!("{} request failed ({reason}); retry {attempts}/{}", self.role, self.cfg.max_retries);
            std::thread::sleep(backoff_delay(attempts, self.cfg.backoff_base_s, rng.random_range(-0.1..=0.1)));
        }
    }
}

pub struct HttpChat {
    client: Client,
}

impl HttpChat {
    pub fn new(role: Role, cfg: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(HttpChat { client: Client::new(role, cfg)? })
    }
}

/// Request body in the chat-completions schema.
pub fn chat_body(model: &str, req: &ChatRequest) -> Value {
    let content: Vec<Value> = req
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image(png) => {
                let b64 = base64::engine::general_purpose::STANDARD.encode(png.as_slice());
                json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
            }
        })
        .collect();
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": req.system},
            {"role": "user", "content": content},
        ],
    })
}

impl ChatProvider for HttpChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        let c = &self.client;
        let sw = Stopwatch::start();
        let body = chat_body(c.cfg.model.as_deref().unwrap_or_default(), req);
        let (text, attempts) = c.post("chat/completions", &body)?;
        let bad = |why: &str| ProviderError::Unavailable { role: c.role, attempts, reason: why.to_string() };
        let v: Value = serde_json::from_str(&text).map_err(|_| bad("response is not JSON"))?;
        let reply = v["choices"][0]["message"]["content"].as_str().ok_or_else(|| bad("response has no choices[0].message.content"))?;
        Ok(ChatExchange {
            system: req.system.clone(),
            parts: req.parts.clone(),
            reply: reply.to_string(),
            latency_ms: sw.elapsed_ms(),
            attempts,
        })
    }

    fn is_stub(&self) -> bool {
        false
    }
}

pub struct HttpEmbedder {
    client: Client,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(cfg: ProviderConfig, dim: usize) -> Result<Self, ProviderError> {
        Ok(HttpEmbedder { client: Client::new(Role::Embedder, cfg)?, dim })
    }
}

impl TextEmbedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let c = &self.client;
        let body = json!({"model": c.cfg.model.as_deref().unwrap_or_default(), "input": text});
        let (resp, attempts) = c.post("embeddings", &body)?;
        let v: Value = serde_json::from_str(&resp)
            .map_err(|_| ProviderError::Unavailable { role: c.role, attempts, reason: "response is not JSON".into() })?;
        let arr = v["data"][0]["embedding"].as_array().ok_or_else(|| ProviderError::Unavailable {
            role: c.role,
            attempts,
            reason: "response has no data[0].embedding".into(),
        })?;
        let mut e: Vec<f32> = arr.iter().filter_map(|x| x.as_f64()).map(|x| x as f32).collect();
        if e.len() != self.dim {
            return Err(ProviderError::DimensionMismatch { expected: self.dim, got: e.len() });
        }
        let n = e.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(ProviderError::Unavailable { role: c.role, attempts, reason: "zero embedding".into() });
        }
        e.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        assert_eq!(backoff_delay(1, 1.0, 0.0), Duration::from_secs(1));
        assert_eq!(backoff_delay(3, 1.0, 0.0), Duration::from_secs(4));
        let d = backoff_delay(2, 1.0, 0.5).as_secs_f64();
        assert!((d - 2.2).abs() < 1e-9, "jitter clamps to 10%");
    }

    #[test]
    fn body_has_data_url_image() {
        let req = ChatRequest::text(Role::Verifier, "sys", "q").with_image(Arc::new(vec![0x89, b'P', b'N', b'G']));
        let b = chat_body("m", &req);
        let url = b["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
        assert_eq!(b["messages"][0]["content"], "sys");
    }
}
