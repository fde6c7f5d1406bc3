//! HTTP client backend speaking the /v1/forward wire protocol.

use serde::{Deserialize, Serialize};

use crate::dist::ProbDist;
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::token::{TokenId, TokenSeq, Vocab};

#[derive(Serialize)]
struct ForwardRequest<'a> {
    tokens: &'a [TokenId],
    from_position: usize,
}

#[derive(Deserialize)]
struct ForwardResponse {
    vocab_size: usize,
    #[serde(default)]
    probs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    top_k: Option<Vec<Vec<(u32, f64)>>>,
}

#[derive(Deserialize)]
struct VocabResponse {
    size: usize,
    eos_id: u32,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Deterministic given a deterministic backend: no retries, no sampling.
pub struct RemoteModel {
    client: reqwest::blocking::Client,
    base_url: String,
    vocab: Vocab,
}

impl RemoteModel {
    /// Fetches /v1/vocab to pin the vocabulary for the connection.
    pub fn connect(base_url: &str) -> Result<RemoteModel> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::new();
        let resp = client
            .get(format!("{base_url}/v1/vocab"))
            .send()
            .map_err(|e| Error::Transport(format!("GET /v1/vocab: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Protocol(format!(
                "GET /v1/vocab returned {}",
                resp.status()
            )));
        }
        let body: VocabResponse = resp
            .json()
            .map_err(|e| Error::Protocol(format!("vocab response: {e}")))?;
        let vocab = Vocab::new(body.size, TokenId(body.eos_id))?;
        Ok(RemoteModel {
            client,
            base_url,
            vocab,
        })
    }

    fn decode_row_full(&self, row: Vec<f64>) -> Result<ProbDist> {
        if row.len() != self.vocab.size() {
            return Err(Error::Config(format!(
                "backend row of length {} for vocab of size {}",
                row.len(),
                self.vocab.size()
            )));
        }
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Protocol(format!(
                "backend row sums to {sum}, expected 1 within 1e-6"
            )));
        }
        ProbDist::new(row.iter().map(|p| p / sum).collect())
            .map_err(|e| Error::Protocol(format!("backend row: {e}")))
    }

    /// Truncated top-K row: missing ids get probability 0, then renormalize.
    fn decode_row_top_k(&self, row: Vec<(u32, f64)>) -> Result<ProbDist> {
        let mut probs = vec![0.0; self.vocab.size()];
        for (id, p) in row {
            if id as usize >= self.vocab.size() {
                return Err(Error::Protocol(format!("top-k id {id} out of range")));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Protocol(format!("top-k probability {p} invalid")));
            }
            probs[id as usize] = p;
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 || sum > 1.0 + 1e-6 {
            return Err(Error::Protocol(format!("top-k row mass {sum} invalid")));
        }
        ProbDist::new(probs.iter().map(|p| p / sum).collect())
            .map_err(|e| Error::Protocol(format!("top-k row: {e}")))
    }
}

impl LanguageModel for RemoteModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn forward(&self, prompt: &TokenSeq, from_position: usize) -> Result<Vec<ProbDist>> {
        if prompt.is_empty() {
            return Err(Error::Validation("empty prompt for remote forward".into()));
        }
        let request = ForwardRequest {
            tokens: prompt.as_slice(),
            from_position,
        };
        let resp = self
            .client
            .post(format!("{}/v1/forward", self.base_url))
            .json(&request)
            .send()
            .map_err(|e| Error::Transport(format!("POST /v1/forward: {e}")))?;
        if !resp.status().is_success() {
            let status = resp.status();
            let detail = resp
                .json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_else(|_| "no error body".into());
            return Err(Error::Protocol(format!(
                "POST /v1/forward returned {status}: {detail}"
            )));
        }
        let body: ForwardResponse = resp
            .json()
            .map_err(|e| Error::Protocol(format!("forward response: {e}")))?;
        if body.vocab_size != self.vocab.size() {
            return Err(Error::Config(format!(
                "backend vocab size {} does not match connected size {}",
                body.vocab_size,
                self.vocab.size()
            )));
        }
        let expected = prompt.len() - from_position;
        let rows: Vec<ProbDist> = match (body.probs, body.top_k) {
            (Some(rows), None) => rows
                .into_iter()
                .map(|r| self.decode_row_full(r))
                .collect::<Result<_>>()?,
            (None, Some(rows)) => rows
                .into_iter()
                .map(|r| self.decode_row_top_k(r))
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::Protocol(
                    "forward response must carry exactly one of probs or top_k".into(),
                ))
            }
        };
        if rows.len() != expected {
            return Err(Error::Protocol(format!(
                "backend returned {} rows, expected {expected}",
                rows.len()
            )));
        }
        Ok(rows)
    }
}
