//! Minimal HTTP-backed providers (chat-completions and embeddings style
//! endpoints). Enabled with the `http-providers` feature; credentials come
//! from an environment variable named in the run config so secrets never
//! land in config files or run artifacts.

use serde::Deserialize;

use super::{EmbeddingProvider, LlmProvider, ProviderError, ProviderRequest};

pub struct HttpLlmProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpLlmProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        HttpLlmProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl LlmProvider for HttpLlmProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let mut prompt = request.prompt.clone();
        for (name, content) in &request.attachments {
            prompt.push_str(&format!("\n\n--- attachment: {name} ---\n{content}"));
        }
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if response.status().as_u16() == 429 {
            return Err(ProviderError::RateLimited("429 from provider".into()));
        }
        if !response.status().is_success() {
            return Err(ProviderError::Unavailable(format!(
                "provider returned {}",
                response.status()
            )));
        }
        let parsed: ChatResponse =
            response.json().map_err(|e| ProviderError::Contract(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Contract("response has no choices".into()))
    }
}

pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbeddingProvider {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dim: usize,
    ) -> Self {
        HttpEmbeddingProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            dim,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::Contract("cannot embed an empty text list".into()));
        }
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ProviderError::Unavailable(format!(
                "provider returned {}",
                response.status()
            )));
        }
        let parsed: EmbeddingResponse =
            response.json().map_err(|e| ProviderError::Contract(e.to_string()))?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("http/{}", self.model)
    }
}
