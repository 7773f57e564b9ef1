//! HTTP-backed relay backend and estimator.
//!
//! Both talk JSON to a configurable endpoint. The relay backend posts a
//! [`DistillRequest`] to `{url}/distill` and expects a [`DistillResponse`];
//! the estimator posts `{text, options}` to `{url}/estimate` and expects
//! `{scores: [{option, strength}]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::conviction::{option_token, Estimator};
use crate::model::OptionLabel;
use crate::relay::{truncate_at_word, DistillRequest, DistillResponse, RelayBackend, RelayError, SUMMARY_MAX_CHARS};

pub const ENV_URL: &str = "CSI_LLM_URL";
pub const ENV_KEY: &str = "CSI_LLM_KEY";
pub const ENV_TIMEOUT_MS: &str = "CSI_LLM_TIMEOUT_MS";
pub const ENV_MODEL: &str = "CSI_LLM_MODEL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl LlmConfig {
    /// Reads `CSI_LLM_URL`, `CSI_LLM_KEY`, `CSI_LLM_TIMEOUT_MS` and
    /// `CSI_LLM_MODEL`. Returns `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.is_empty())?;
        let timeout_ms = std::env::var(ENV_TIMEOUT_MS).ok().and_then(|v| v.parse().ok()).unwrap_or(5000);
        Some(Self {
            url,
            api_key: std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty()),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into()),
            timeout: Duration::from_millis(timeout_ms),
        })
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    model: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub struct LlmClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, reqwest::Error> {
        let http = reqwest::blocking::Client::builder().timeout(config.timeout).build()?;
        Ok(Self { config, http })
    }

    fn post<T: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &T) -> Result<R, String> {
        let url = format!("{}/{}", self.config.url.trim_end_matches('/'), path);
        let mut req = self.http.post(url).json(&Envelope { model: &self.config.model, body });
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let resp = resp.error_for_status().map_err(|e| e.to_string())?;
        resp.json::<R>().map_err(|e| e.to_string())
    }
}

/// Relay backend that asks a language model for the summary. A summary that
/// names any option other than the insight's own is rejected.
pub struct LlmBackend(pub LlmClient);

impl RelayBackend for LlmBackend {
    fn distill(&self, request: &DistillRequest) -> Result<DistillResponse, RelayError> {
        let resp: DistillResponse = self.0.post("distill", request).map_err(RelayError::DistillFailed)?;
        if let Some(other) = resp.summary_text.split_whitespace().filter_map(option_token).find(|o| *o != request.option) {
            return Err(RelayError::DistillFailed(format!("summary mentions option {other}")));
        }
        let summary_text = truncate_at_word(&resp.summary_text, SUMMARY_MAX_CHARS).to_string();
        Ok(DistillResponse { summary_text })
    }
}

#[derive(Serialize)]
struct EstimateRequest<'a> {
    text: &'a str,
    options: &'a [OptionLabel],
}

#[derive(Deserialize)]
struct EstimateResponse {
    scores: Vec<ScoredOption>,
}

#[derive(Deserialize)]
struct ScoredOption {
    option: OptionLabel,
    strength: f64,
}

/// Estimator backed by a language model. Failures score as no signal.
pub struct LlmEstimator(pub LlmClient);

impl Estimator for LlmEstimator {
    fn score(&self, text: &str, options: &[OptionLabel]) -> Vec<(OptionLabel, f64)> {
        let Ok(resp) = self.0.post::<_, EstimateResponse>("estimate", &EstimateRequest { text, options }) else {
            return Vec::new();
        };
        let mut out: Vec<(OptionLabel, f64)> = resp
            .scores
            .into_iter()
            .filter(|s| options.contains(&s.option) && s.strength.is_finite() && s.strength != 0.0)
            .map(|s| (s.option, s.strength.clamp(-1.0, 1.0)))
            .collect();
        out.sort_by_key(|(o, _)| *o);
        out.dedup_by_key(|(o, _)| *o);
        out
    }
}
