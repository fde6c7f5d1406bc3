//! Self-speculative biased decoding engine for streaming re-translation
//! workloads.
//!
//! The engine reuses the previous streaming output as a draft for the
//! current input, verifies it in one batched forward pass with probability
//! biasing, and continues greedy decoding from the divergence point. A
//! cache ledger accounts for forward-pass cost, and the stream/metrics
//! modules measure flicker (normalized erasure), draft acceptance, and
//! step-based speedup against the autoregressive re-translation baseline.

pub mod decoder;
pub mod dist;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod server;
pub mod stream;
pub mod token;

pub use decoder::{
    ar_decode, bias_distribution, display_view, ssbd_update, trim_draft_mask_k, verify_draft,
    DecodeConfig, MaskMode, PromptTemplate, SessionState, UpdateResult, VerificationResult,
};
pub use dist::{logits_to_probs, ProbDist, DIST_TOL};
pub use error::{Error, Result};
pub use metrics::{
    acceptance_stats, efficiency_stats, emit_report, erasure, normalized_erasure,
    AcceptanceStats, EfficiencyStats, SessionReport,
};
pub use model::{
    CacheLedger, LanguageModel, ModelFile, NgramModel, RemoteModel, StepCounters, TableModel,
};
pub use stream::{
    lag_k_updates, load_transcript, run_session, Paradigm, SessionTrace, StreamUpdate,
    UpdateRecord,
};
pub use token::{lcp, TokenId, TokenSeq, Vocab};
