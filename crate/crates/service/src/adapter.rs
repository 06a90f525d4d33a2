//! Forwards a question to an external examinee endpoint and returns its raw
//! answer for the expert to grade. Answers are never graded automatically.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("examinee endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("examinee endpoint returned status {0}")]
    BadStatus(u16),
}

/// Body posted to the examinee endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamineeRequest {
    pub prompt: String,
}

#[derive(Deserialize)]
struct ExamineeReply {
    answer: String,
}

#[derive(Debug, Clone)]
pub struct ExamineeAdapter {
    client: reqwest::Client,
    endpoint: String,
}

impl ExamineeAdapter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        Self {
            client,
            endpoint: endpoint.into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Posts `{"prompt": ..}`. A JSON reply with an `answer` field yields
    /// that field; any other body is returned verbatim.
    pub async fn ask(&self, prompt: &str) -> Result<String, AdapterError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&ExamineeRequest {
                prompt: prompt.to_owned(),
            })
            .send()
            .await
            .map_err(|e| AdapterError::EndpointUnreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(AdapterError::BadStatus(resp.status().as_u16()));
        }
        let body = resp
            .text()
            .await
            .map_err(|e| AdapterError::EndpointUnreachable(e.to_string()))?;
        Ok(serde_json::from_str::<ExamineeReply>(&body)
            .map(|r| r.answer)
            .unwrap_or(body))
    }
}
