use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, Generator, PromptInput};
use crate::embedding::{Embedding, SearchBox};

const BODY_LIMIT: u64 = 512 * 1024 * 1024;
const BOX_STDS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteOptions {
    /// Expected embedding width.
    pub dim: usize,
    /// Extra attempts after the first, on transport failure only.
    pub retries: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    #[serde(with = "millis")]
    pub request_timeout: Duration,
    pub prompt_max_new_tokens: u32,
    pub code_max_new_tokens: u32,
    pub code_temperature: f64,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            dim: 4096,
            retries: 3,
            backoff_base: Duration::from_secs(1),
            request_timeout: Duration::from_secs(600),
            prompt_max_new_tokens: 256,
            code_max_new_tokens: 512,
            code_temperature: 0.8,
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// HTTP client for the inference bridge.
pub struct RemoteBackend {
    endpoint: String,
    options: RemoteOptions,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: ErrorDetail,
}

#[derive(Deserialize)]
struct ErrorDetail {
    code: String,
    message: String,
}

#[derive(Deserialize)]
struct EmbedReply {
    embeddings: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct PromptReply {
    prompt: String,
}

#[derive(Deserialize)]
struct CodeReply {
    samples: Vec<String>,
}

#[derive(Deserialize)]
struct StatsReply {
    dim: usize,
    embed_mean: Vec<f64>,
    embed_std: Vec<f64>,
}

fn retryable(err: &ureq::Error) -> bool {
    !matches!(
        err,
        ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::InvalidProxyUrl
    )
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, options: RemoteOptions) -> Result<Self, BackendError> {
        let endpoint = endpoint.into().trim_end_matches('/').to_string();
        if !endpoint.starts_with("http://") {
            return Err(BackendError::InvalidRequest(format!(
                "endpoint {endpoint:?} must be an http:// URL"
            )));
        }
        if options.dim == 0 {
            return Err(BackendError::InvalidRequest("embedding width must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(options.request_timeout))
            .build()
            .into();
        Ok(Self {
            endpoint,
            options,
            agent,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn options(&self) -> &RemoteOptions {
        &self.options
    }

    /// POSTs `body` to `path`. The payload is serialized once and the same
    /// bytes are resent on every retry.
    fn call<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &Value) -> Result<T, BackendError> {
        let url = format!("{}{}", self.endpoint, path);
        let payload = serde_json::to_vec(body).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let attempts = self.options.retries + 1;
        let mut attempt = 0;
        let (status, text) = loop {
            attempt += 1;
            let sent = self
                .agent
                .post(&url)
                .header("Content-Type", "application/json")
                .send(&payload[..])
                .and_then(|mut resp| {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().with_config().limit(BODY_LIMIT).read_to_string()?;
                    Ok((status, text))
                });
            match sent {
                Ok(reply) => break reply,
                Err(e) if retryable(&e) && attempt < attempts => {
                    let wait = self.options.backoff_base * 2u32.saturating_pow(attempt - 1);
                    log::warn!("{path}: attempt {attempt} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
                Err(e) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        };
        if !(200..300).contains(&status) {
            return match serde_json::from_str::<ErrorBody>(&text) {
                Ok(b) => Err(BackendError::Reported {
                    status,
                    code: b.error.code,
                    message: b.error.message,
                }),
                Err(_) => Err(BackendError::ProtocolViolation(format!(
                    "{path}: status {status} without an error object"
                ))),
            };
        }
        serde_json::from_str(&text).map_err(|e| BackendError::ProtocolViolation(format!("{path}: {e}")))
    }

    fn check_width(&self, what: &str, len: usize) -> Result<(), BackendError> {
        if len != self.options.dim {
            return Err(BackendError::ProtocolViolation(format!(
                "{what} has width {len}, expected {}",
                self.options.dim
            )));
        }
        Ok(())
    }
}

impl Generator for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn dim(&self) -> usize {
        self.options.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError> {
        let reply: EmbedReply = self.call("/embed", &json!({ "text": text }))?;
        self.check_width("reported dim", reply.dim)?;
        reply
            .embeddings
            .into_iter()
            .map(|v| {
                self.check_width("embedding", v.len())?;
                Embedding::new(v).map_err(|e| BackendError::ProtocolViolation(e.to_string()))
            })
            .collect()
    }

    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError> {
        for e in input.combined {
            self.check_width("request embedding", e.dim())?;
        }
        let rows: Vec<&[f64]> = input.combined.iter().map(Embedding::as_slice).collect();
        let reply: PromptReply = self.call(
            "/generate_prompt",
            &json!({
                "embeddings": rows,
                "max_new_tokens": self.options.prompt_max_new_tokens,
                "temperature": 0,
            }),
        )?;
        Ok(reply.prompt)
    }

    fn generate_code(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        if n == 0 {
            return Err(BackendError::InvalidRequest("sample count must be positive".into()));
        }
        let reply: CodeReply = self.call(
            "/generate_code",
            &json!({
                "prompt": prompt,
                "n": n,
                "temperature": self.options.code_temperature,
                "max_new_tokens": self.options.code_max_new_tokens,
            }),
        )?;
        if reply.samples.len() != n {
            return Err(BackendError::ProtocolViolation(format!(
                "asked for {n} samples, got {}",
                reply.samples.len()
            )));
        }
        Ok(reply.samples)
    }

    /// `mean ± 3·std` per coordinate of the token-embedding table.
    fn search_box(&self) -> Result<SearchBox, BackendError> {
        let s: StatsReply = self.call("/stats", &json!({}))?;
        self.check_width("stats dim", s.dim)?;
        self.check_width("embed_mean", s.embed_mean.len())?;
        self.check_width("embed_std", s.embed_std.len())?;
        if let Some(i) = s.embed_std.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(BackendError::ProtocolViolation(format!("embed_std[{i}] is not positive")));
        }
        SearchBox::from_moments(&s.embed_mean, &s.embed_std, BOX_STDS)
            .map_err(|e| BackendError::ProtocolViolation(e.to_string()))
    }
}
