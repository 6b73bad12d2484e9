//! Chat-completions client.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GatewayError, Generator, GeneratorRequest, GeneratorResponse, Usage};

pub const ENV_ENDPOINT: &str = "EVALSCALE_ENDPOINT";
pub const ENV_MODEL: &str = "EVALSCALE_MODEL";
pub const ENV_API_KEY: &str = "EVALSCALE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_s: u64,
}

impl HttpSettings {
    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model =
            std::env::var(ENV_MODEL).map_err(|_| GatewayError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(Self {
            endpoint,
            model,
            api_key: std::env::var(ENV_API_KEY).ok(),
            timeout_s: 1800,
        })
    }
}

pub struct HttpGenerator {
    settings: HttpSettings,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(settings: HttpSettings) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_s))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { settings, client })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::new(HttpSettings::from_env()?)
    }

    /// JSON body for a request.
    pub fn body(&self, request: &GeneratorRequest) -> serde_json::Value {
        json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "n": request.sample_count,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "reasoning_effort": request.reasoning_mode,
        })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Parses a chat-completions response body. Choices without content are dropped.
pub fn parse_response(body: &str) -> Result<(Vec<String>, Usage), GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let candidates: Vec<String> = wire.choices.into_iter().filter_map(|c| c.message.content).collect();
    let (prompt_tokens, completion) = wire
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((0, 0));
    // The wire format reports a total; spread it evenly over candidates.
    let n = candidates.len().max(1) as u64;
    let output_tokens = vec![completion / n; candidates.len()];
    Ok((
        candidates,
        Usage {
            prompt_tokens,
            output_tokens,
        },
    ))
}

impl Generator for HttpGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let started = Instant::now();
        let mut req = self.client.post(&self.settings.endpoint).json(&self.body(request));
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let (candidates, usage) = parse_response(&text)?;
        Ok(GeneratorResponse {
            candidates,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_choices_and_usage() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"a"}},
            {"message":{"role":"assistant","content":null}},
            {"message":{"role":"assistant","content":"b"}}],
            "usage":{"prompt_tokens":12,"completion_tokens":10}}"#;
        let (c, u) = parse_response(body).unwrap();
        assert_eq!(c, ["a", "b"]);
        assert_eq!(u.prompt_tokens, 12);
        assert_eq!(u.output_tokens, [5, 5]);
        assert!(matches!(parse_response("nope"), Err(GatewayError::Protocol(_))));
    }

    #[test]
    fn body_carries_sampling_fields() {
        let g = HttpGenerator::new(HttpSettings {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            api_key: None,
            timeout_s: 1,
        })
        .unwrap();
        let req = GeneratorRequest {
            rendered_prompt: "hi".into(),
            sample_count: 16,
            temperature: 1.0,
            max_output_tokens: 15_536,
            reasoning_mode: "high".into(),
            purpose: Default::default(),
            origin: Default::default(),
        };
        let b = g.body(&req);
        assert_eq!(b["n"], 16);
        assert_eq!(b["max_tokens"], 15_536);
        assert_eq!(b["messages"][0]["content"], "hi");
        // Nothing listens on the discard port: a transport error, which is retryable.
        let err = g.generate(&req).unwrap_err();
        assert!(err.is_retryable(), "{err}");
    }
}
