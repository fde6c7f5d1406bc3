//! Language-model abstraction, concrete backends, and the simulated
//! KV-cache ledger that accounts for forward-pass cost.

mod ngram;
mod remote;
mod table;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::PromptTemplate;
use crate::dist::ProbDist;
use crate::error::{Error, Result};
use crate::token::{lcp, TokenSeq, Vocab};

pub use ngram::NgramModel;
pub use remote::RemoteModel;
pub use table::TableModel;

/// Batched forward over a token prefix.
///
/// `forward(prompt, from)` returns one distribution per position in
/// `[from, |prompt|)`; the distribution at position `j` predicts the token at
/// `j + 1`. Implementations must be deterministic: identical arguments yield
/// identical output.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    fn forward(&self, prompt: &TokenSeq, from_position: usize) -> Result<Vec<ProbDist>>;
}

/// Simulated KV-cache state and cost counters for one session.
///
/// `validated_len` tracks how many prompt positions hold reusable cache
/// entries. One `forwards` increment per batched call; a call computing more
/// than one position charges `prefill_positions`, a single-position call
/// charges `decode_steps`. Together they conserve the total number of
/// positions computed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheLedger {
    validated_len: usize,
    pub prefill_positions: u64,
    pub decode_steps: u64,
    pub forwards: u64,
    pub wall_nanos: u64,
}

impl CacheLedger {
    pub fn new() -> CacheLedger {
        CacheLedger::default()
    }

    pub fn validated_len(&self) -> usize {
        self.validated_len
    }

    /// Reuse the cached prefix shared by consecutive prompts. Returns the
    /// reusable length `r = min(lcp(prev, new), validated_len)` and shrinks
    /// the validated region to it. Cached state is never trusted past the
    /// textual divergence of the prompts.
    pub fn reuse_prefix(&mut self, prev_prompt: &TokenSeq, new_prompt: &TokenSeq) -> usize {
        let r = lcp(prev_prompt, new_prompt).min(self.validated_len);
        self.validated_len = r;
        r
    }

    /// Drop cache entries past `keep_len`. Counters are unchanged.
    pub fn truncate(&mut self, keep_len: usize) -> Result<()> {
        if keep_len > self.validated_len {
            return Err(Error::Logic(format!(
                "cache truncate to {keep_len} past validated length {}",
                self.validated_len
            )));
        }
        self.validated_len = keep_len;
        Ok(())
    }

    /// Record one batched forward that computed `positions` new positions,
    /// extending the validated region to `prompt_len`.
    pub fn record_forward(&mut self, positions: usize, prompt_len: usize, nanos: u64) {
        self.forwards += 1;
        if positions > 1 {
            self.prefill_positions += positions as u64;
        } else {
            self.decode_steps += 1;
        }
        self.wall_nanos += nanos;
        self.validated_len = prompt_len;
    }

    pub fn snapshot(&self) -> StepCounters {
        StepCounters {
            forwards: self.forwards,
            prefill_positions: self.prefill_positions,
            decode_steps: self.decode_steps,
            wall_nanos: self.wall_nanos,
        }
    }
}

/// Cumulative counter snapshot; differences of two snapshots give per-update
/// costs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub forwards: u64,
    pub prefill_positions: u64,
    pub decode_steps: u64,
    pub wall_nanos: u64,
}

impl StepCounters {
    pub fn delta_since(&self, earlier: &StepCounters) -> StepCounters {
        StepCounters {
            forwards: self.forwards - earlier.forwards,
            prefill_positions: self.prefill_positions - earlier.prefill_positions,
            decode_steps: self.decode_steps - earlier.decode_steps,
            wall_nanos: self.wall_nanos - earlier.wall_nanos,
        }
    }
}

/// On-disk model document: a tagged union of the serializable backends plus
/// an optional prompt template.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Table(TableModel),
    Ngram(NgramModel),
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("model file {}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("model serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelFile::Table(m) => m.validate(),
            ModelFile::Ngram(m) => m.validate(),
        }
    }

    pub fn template(&self) -> PromptTemplate {
        match self {
            ModelFile::Table(m) => m.template().cloned().unwrap_or_default(),
            ModelFile::Ngram(m) => m.template().cloned().unwrap_or_default(),
        }
    }

    pub fn into_model(self) -> Box<dyn LanguageModel> {
        match self {
            ModelFile::Table(m) => Box::new(m),
            ModelFile::Ngram(m) => Box::new(m),
        }
    }

    pub fn as_model(&self) -> &dyn LanguageModel {
        match self {
            ModelFile::Table(m) => m,
            ModelFile::Ngram(m) => m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::TokenId;

    fn seq(ids: &[u32]) -> TokenSeq {
        TokenSeq::from(ids.to_vec())
    }

    #[test]
    fn reuse_prefix_caps_at_validated_len() {
        let mut ledger = CacheLedger::new();
        ledger.record_forward(4, 4, 0);
        assert_eq!(ledger.validated_len(), 4);
        let r = ledger.reuse_prefix(&seq(&[9, 1, 2, 7]), &seq(&[9, 1, 2, 3, 7]));
        assert_eq!(r, 3);
        assert_eq!(ledger.validated_len(), 3);
    }

    #[test]
    fn reuse_prefix_boundaries() {
        let mut ledger = CacheLedger::new();
        ledger.record_forward(3, 3, 0);
        assert_eq!(ledger.reuse_prefix(&seq(&[1, 2, 3]), &seq(&[1, 2, 3])), 3);
        assert_eq!(ledger.reuse_prefix(&seq(&[1, 2, 3]), &seq(&[4, 5])), 0);
    }

    #[test]
    fn truncate_semantics() {
        let mut ledger = CacheLedger::new();
        ledger.record_forward(10, 10, 0);
        ledger.truncate(6).unwrap();
        assert_eq!(ledger.validated_len(), 6);
        ledger.truncate(6).unwrap();
        assert_eq!(ledger.validated_len(), 6);
        ledger.truncate(0).unwrap();
        assert_eq!(ledger.validated_len(), 0);
        assert!(ledger.truncate(1).is_err());
        assert_eq!(ledger.forwards, 1);
        assert_eq!(ledger.prefill_positions, 10);
    }

    #[test]
    fn counters_classify_batched_vs_stepwise() {
        let mut ledger = CacheLedger::new();
        ledger.record_forward(5, 5, 0);
        ledger.record_forward(1, 6, 0);
        ledger.record_forward(1, 7, 0);
        assert_eq!(ledger.forwards, 3);
        assert_eq!(ledger.prefill_positions, 5);
        assert_eq!(ledger.decode_steps, 2);
        assert_eq!(
            ledger.prefill_positions + ledger.decode_steps,
            7,
            "prefill + decode conserves total positions computed"
        );
    }

    #[test]
    fn model_file_round_trip() {
        let vocab = Vocab::new(4, TokenId(0)).unwrap();
        let mut table = TableModel::new(vocab, None);
        table
            .insert(seq(&[1]), ProbDist::one_hot(4, TokenId(2)))
            .unwrap();
        let file = ModelFile::Table(table);
        let dir = std::env::temp_dir().join("ssbd-model-roundtrip.json");
        file.save(&dir).unwrap();
        let loaded = ModelFile::load(&dir).unwrap();
        let d = loaded.as_model().forward(&seq(&[1]), 0).unwrap();
        assert_eq!(d[0].canonical_argmax(), TokenId(2));
        std::fs::remove_file(dir).ok();
    }
}
