//! Plain JSON-over-HTTP clients.
//!
//! Wire formats:
//! - translator: `POST {text, source, target}` → `{text}`
//! - judge: `POST {candidate, reference, prompt}` → `{verdict: 0|1}`
//! - text service (refinement, QA generation): `POST {prompt, ...fields}` → `{text}`
//!
//! Credentials come from the environment variable named in the config and
//! are sent as a bearer token.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClientError, Judge, JudgeError, Translator};

fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_max_backoff() -> u64 {
    8_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubled on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
}

impl HttpClientConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            token_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            max_backoff_ms: default_max_backoff(),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base: Duration::from_millis(self.backoff_ms),
            factor: 2.0,
            max: Duration::from_millis(self.max_backoff_ms),
        }
    }
}

/// Exponential backoff for retryable client errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts = `max_retries + 1`.
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let secs = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(secs.min(self.max.as_secs_f64()))
    }

    pub fn run<T>(&self, op: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        self.run_with_sleep(op, std::thread::sleep)
    }

    pub fn run_with_sleep<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ClientError>,
        mut sleep: impl FnMut(Duration),
    ) -> Result<T, ClientError> {
        let mut retry = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && retry < self.max_retries => {
                    sleep(self.delay(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Posts JSON bodies to one endpoint with retries.
#[derive(Debug)]
pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(config: &HttpClientConfig) -> Result<Self, ClientError> {
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClientError::Transport(format!("credential variable `{var}` is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: config.base_url.clone(),
            token,
            retry: config.retry_policy(),
        })
    }

    fn post_once(&self, body: &Value) -> Result<Value, ClientError> {
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Status { status, body: text });
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| ClientError::InvalidResponse(e.to_string()))
    }

    pub fn post_json(&self, body: &Value) -> Result<Value, ClientError> {
        self.retry.run(|| self.post_once(body))
    }
}

fn text_field(v: &Value) -> Result<String, ClientError> {
    v.get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::InvalidResponse(format!("expected {{\"text\": ...}}, got {v}")))
}

/// Prompt with `{slot}` placeholders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template: String,
}

/// Default judging prompt; the service must answer with a structured verdict.
pub const DEFAULT_JUDGE_PROMPT: &str = "You are given two short answers to the same question.\n\
Decide whether they convey the same meaning. Ignore differences in wording, \
formatting and letter case.\n\n\
Answer A: {candidate}\n\
Answer B: {reference}\n\n\
Reply with 1 if they have the same meaning and 0 otherwise.";

/// Default back-translation verification prompt.
pub const DEFAULT_VERIFY_PROMPT: &str = "Compare the two English sentences below.\n\
Sentence 1: {candidate}\n\
Sentence 2: {reference}\n\n\
Reply with 1 if they are semantically equivalent and 0 otherwise.";

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
        }
    }

    pub fn default_judge() -> Self {
        Self::new(DEFAULT_JUDGE_PROMPT)
    }

    /// Loads `{"template": ...}` (JSON) or `template = ...` (TOML) by extension.
    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = std::fs::read_to_string(path)?;
        let parsed: Result<Self, String> = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => serde_json::from_str(&text).map_err(|e| e.to_string()),
        };
        parsed.map_err(JudgeError::Template)
    }

    pub fn require_slots(&self, slots: &[&str]) -> Result<(), JudgeError> {
        for slot in slots {
            if !self.template.contains(&format!("{{{slot}}}")) {
                return Err(JudgeError::Template(format!("missing `{{{slot}}}` slot")));
            }
        }
        Ok(())
    }

    pub fn render(&self, values: &[(&str, &str)]) -> String {
        values.iter().fold(self.template.clone(), |acc, (k, v)| {
            acc.replace(&format!("{{{k}}}"), v)
        })
    }
}

#[derive(Debug)]
pub struct HttpTranslator {
    client: JsonClient,
    id: String,
}

impl HttpTranslator {
    pub fn new(config: &HttpClientConfig) -> Result<Self, ClientError> {
        Ok(Self {
            client: JsonClient::new(config)?,
            id: format!("http:{}", config.base_url),
        })
    }
}

impl Translator for HttpTranslator {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError> {
        let resp = self
            .client
            .post_json(&json!({"text": text, "source": source, "target": target}))?;
        text_field(&resp)
    }
}

#[derive(Debug)]
pub struct HttpJudge {
    client: JsonClient,
    prompt: PromptTemplate,
    id: String,
}

impl HttpJudge {
    pub fn new(config: &HttpClientConfig, prompt: PromptTemplate) -> Result<Self, JudgeError> {
        prompt.require_slots(&["candidate", "reference"])?;
        let client = JsonClient::new(config).map_err(JudgeError::JudgeUnavailable)?;
        Ok(Self {
            client,
            id: format!("http:{}", config.base_url),
            prompt,
        })
    }
}

impl Judge for HttpJudge {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError> {
        let prompt = self
            .prompt
            .render(&[("candidate", candidate), ("reference", reference)]);
        let resp = self.client.post_json(&json!({
            "candidate": candidate,
            "reference": reference,
            "prompt": prompt,
        }))?;
        match resp.get("verdict").and_then(Value::as_u64) {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(ClientError::InvalidResponse(format!(
                "expected {{\"verdict\": 0|1}}, got {resp}"
            ))),
        }
    }
}

/// Generic prompt-in, text-out service.
#[derive(Debug)]
pub struct HttpTextService {
    client: JsonClient,
}

impl HttpTextService {
    pub fn new(config: &HttpClientConfig) -> Result<Self, ClientError> {
        Ok(Self {
            client: JsonClient::new(config)?,
        })
    }

    /// Sends `prompt` along with extra structured fields.
    pub fn complete(&self, prompt: &str, fields: &[(&str, &str)]) -> Result<String, ClientError> {
        let mut body = serde_json::Map::new();
        body.insert("prompt".into(), Value::String(prompt.to_string()));
        for (k, v) in fields {
            body.insert((*k).to_string(), Value::String((*v).to_string()));
        }
        text_field(&self.client.post_json(&Value::Object(body))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the given (status, body) responses in order, one per
    /// connection, and records the request bodies.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf).to_string();
                    if let Some(pos) = text.find("\r\n\r\n") {
                        let len = text
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= pos + 4 + len {
                            seen2.lock().unwrap().push(text[pos + 4..].to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, seen)
    }

    fn fast(url: &str) -> HttpClientConfig {
        HttpClientConfig {
            backoff_ms: 1,
            max_backoff_ms: 2,
            timeout_secs: 5,
            ..HttpClientConfig::new(url)
        }
    }

    #[test]
    fn translator_wire_format() {
        let (url, seen) = serve(vec![(200, r#"{"text":"blue"}"#)]);
        let t = HttpTranslator::new(&fast(&url)).unwrap();
        assert_eq!(t.translate("Blau", "de", "en").unwrap(), "blue");
        let body: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(body, json!({"text":"Blau","source":"de","target":"en"}));
    }

    #[test]
    fn judge_retries_server_errors() {
        let (url, seen) = serve(vec![(503, "{}"), (200, r#"{"verdict":1}"#)]);
        let j = HttpJudge::new(&fast(&url), PromptTemplate::default_judge()).unwrap();
        assert!(j.equivalent("a", "b").unwrap());
        let bodies = seen.lock().unwrap();
        assert_eq!(bodies.len(), 2);
        let body: Value = serde_json::from_str(&bodies[1]).unwrap();
        assert!(body["prompt"].as_str().unwrap().contains("Answer A: a"));
    }

    #[test]
    fn judge_rejects_free_text_verdict() {
        let (url, _) = serve(vec![(200, r#"{"verdict":"yes"}"#)]);
        let j = HttpJudge::new(&fast(&url), PromptTemplate::default_judge()).unwrap();
        assert!(matches!(
            j.equivalent("a", "b"),
            Err(ClientError::InvalidResponse(_))
        ));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = serve(vec![(400, "bad"), (200, r#"{"text":"x"}"#)]);
        let t = HttpTranslator::new(&fast(&url)).unwrap();
        let err = t.translate("a", "de", "en").unwrap_err();
        assert_eq!(
            err,
            ClientError::Status {
                status: 400,
                body: "bad".into()
            }
        );
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn unreachable_service_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let cfg = HttpClientConfig {
            max_retries: 1,
            ..fast(&url)
        };
        let t = HttpTranslator::new(&cfg).unwrap();
        assert!(matches!(
            t.translate("a", "de", "en"),
            Err(ClientError::Transport(_))
        ));
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy {
            max_retries: 4,
            base: Duration::from_millis(100),
            factor: 2.0,
            max: Duration::from_millis(500),
        };
        let mut slept = Vec::new();
        let mut attempts = 0;
        let r: Result<(), _> = p.run_with_sleep(
            || {
                attempts += 1;
                Err(ClientError::Transport("down".into()))
            },
            |d| slept.push(d.as_millis()),
        );
        assert!(r.is_err());
        assert_eq!(attempts, 5);
        assert_eq!(slept, vec![100, 200, 400, 500]);
    }

    #[test]
    fn missing_credential_variable() {
        let cfg = HttpClientConfig {
            token_env: Some("MMU_EVAL_TEST_TOKEN_THAT_IS_NOT_SET".into()),
            ..HttpClientConfig::new("http://127.0.0.1:9/")
        };
        assert!(HttpTranslator::new(&cfg).is_err());
    }

    #[test]
    fn templates() {
        let t = PromptTemplate::new("A={candidate} B={reference}");
        assert_eq!(
            t.render(&[("candidate", "x"), ("reference", "y")]),
            "A=x B=y"
        );
        assert!(PromptTemplate::new("only {candidate}")
            .require_slots(&["candidate", "reference"])
            .is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("judge.toml");
        std::fs::write(&p, "template = \"{candidate} vs {reference}\"\n").unwrap();
        assert_eq!(
            PromptTemplate::load(&p).unwrap().template,
            "{candidate} vs {reference}"
        );
    }
}
