//! HTTP client for hosted vision-language models.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use pivot_core::oracle::baseline::{parse_region, region_prompt, RegionOracle, RegionReply};
use pivot_core::oracle::{
    build_prompt_parts, parse_selection, Concurrency, OracleError, PromptPart, SelectionOracle, SelectionQuery,
    SelectionResponse,
};
use pivot_core::Raster;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::imageio::encode_png;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireSchema {
    /// `POST /v1/chat/completions` with `image_url` content parts.
    OpenaiChat,
    /// `POST .../models/{model}:generateContent` with `inline_data` parts.
    GeminiGenerate,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub schema: WireSchema,
    /// Full request URL; `{model}` is replaced by `model`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after a 429, a 5xx or a connection failure.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base delay for exponential backoff when no Retry-After is given.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Clone)]
pub struct RemoteOracle {
    cfg: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteOracle").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

/// Outcome of a single HTTP attempt.
enum Attempt {
    Done(String),
    Retry { err: OracleError, wait: Option<Duration> },
    Fail(OracleError),
}

impl RemoteOracle {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| CliError::Config(format!("oracle.remote: environment variable {var} is not set")))?,
            ),
            None => None,
        };
        if cfg.max_in_flight == 0 {
            return Err(CliError::Config("oracle.remote: max_in_flight must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, api_key, agent })
    }

    fn url(&self) -> String {
        self.cfg.endpoint.replace("{model}", &self.cfg.model)
    }

    fn body(&self, parts: &[PromptPart], png_b64: &str) -> Value {
        match self.cfg.schema {
            WireSchema::OpenaiChat => {
                let content: Vec<Value> = parts
                    .iter()
                    .map(|p| match p {
                        PromptPart::Text(t) => json!({"type": "text", "text": t}),
                        PromptPart::Image => {
                            json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{png_b64}")}})
                        }
                    })
                    .collect();
                let mut body = json!({"model": self.cfg.model, "messages": [{"role": "user", "content": content}]});
                if let Some(t) = self.cfg.temperature {
                    body["temperature"] = json!(t);
                }
                if let Some(m) = self.cfg.max_tokens {
                    body["max_tokens"] = json!(m);
                }
                body
            }
            WireSchema::GeminiGenerate => {
                let content: Vec<Value> = parts
                    .iter()
                    .map(|p| match p {
                        PromptPart::Text(t) => json!({"text": t}),
                        PromptPart::Image => json!({"inline_data": {"mime_type": "image/png", "data": png_b64}}),
                    })
                    .collect();
                let mut gen = serde_json::Map::new();
                if let Some(t) = self.cfg.temperature {
                    gen.insert("temperature".into(), json!(t));
                }
                if let Some(m) = self.cfg.max_tokens {
                    gen.insert("maxOutputTokens".into(), json!(m));
                }
                json!({"contents": [{"role": "user", "parts": content}], "generationConfig": gen})
            }
        }
    }

    fn reply_text(&self, v: &Value) -> Option<String> {
        match self.cfg.schema {
            WireSchema::OpenaiChat => {
                let content = &v["choices"][0]["message"]["content"];
                match content {
                    Value::String(s) => Some(s.clone()),
                    Value::Array(items) => {
                        Some(items.iter().filter_map(|i| i["text"].as_str()).collect::<Vec<_>>().join(""))
                    }
                    _ => None,
                }
            }
            WireSchema::GeminiGenerate => {
                let parts = v["candidates"][0]["content"]["parts"].as_array()?;
                Some(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""))
            }
        }
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = match self.cfg.schema {
                WireSchema::OpenaiChat => req.header("Authorization", &format!("Bearer {key}")),
                WireSchema::GeminiGenerate => req.header("x-goog-api-key", key),
            };
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { err: OracleError::Transport(e.to_string()), wait: None },
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0);
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry { err: OracleError::Transport(e.to_string()), wait: None },
        };
        match status {
            200..=299 => {
                let parsed = serde_json::from_str::<Value>(&text).ok().and_then(|v| self.reply_text(&v));
                match parsed {
                    Some(reply) => Attempt::Done(reply),
                    None => Attempt::Fail(OracleError::Transport(format!("unexpected response body: {}", clip(&text)))),
                }
            }
            429 => Attempt::Retry {
                err: OracleError::RateLimited { retry_after_secs: retry_after },
                wait: retry_after.map(Duration::from_secs_f64),
            },
            500..=599 => Attempt::Retry {
                err: OracleError::Transport(format!("HTTP {status}: {}", clip(&text))),
                wait: retry_after.map(Duration::from_secs_f64),
            },
            _ => Attempt::Fail(OracleError::Transport(format!("HTTP {status}: {}", clip(&text)))),
        }
    }

    /// Sends the prompt and returns the model's reply text, retrying
    /// rate limits and server errors.
    pub fn complete(&self, parts: &[PromptPart], image: &Raster) -> std::result::Result<String, OracleError> {
        let png_b64 = B64.encode(encode_png(image));
        let body = self.body(parts, &png_b64).to_string();
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry { err, wait } => {
                    if attempt >= self.cfg.max_retries {
                        return Err(err);
                    }
                    let backoff = Duration::from_millis(self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16)));
                    std::thread::sleep(wait.unwrap_or(backoff));
                    attempt += 1;
                }
            }
        }
    }
}

fn clip(s: &str) -> String {
    let mut out: String = s.chars().take(200).collect();
    if out.len() < s.len() {
        out.push('…');
    }
    out
}

impl SelectionOracle for RemoteOracle {
    fn select(&mut self, query: &SelectionQuery<'_>) -> std::result::Result<SelectionResponse, OracleError> {
        query.validate()?;
        let parts = build_prompt_parts(query)?;
        let raw_text = self.complete(&parts, &query.annotated.pixels)?;
        match parse_selection(&raw_text, &query.valid_labels()) {
            Ok(ranked_labels) => Ok(SelectionResponse { ranked_labels, raw_text }),
            Err(kind) => Err(OracleError::Parse { kind, raw_text }),
        }
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent { max_in_flight: self.cfg.max_in_flight }
    }
}

impl RegionOracle for RemoteOracle {
    fn pick_region(&mut self, image: &Raster, instruction: &str) -> std::result::Result<RegionReply, OracleError> {
        let parts = [PromptPart::Image, PromptPart::Text(region_prompt(instruction))];
        let raw_text = self.complete(&parts, image)?;
        match parse_region(&raw_text) {
            Some(region) => Ok(RegionReply { region, raw_text }),
            None => Err(OracleError::Parse { kind: pivot_core::oracle::ParseError::Unparseable, raw_text }),
        }
    }
}
