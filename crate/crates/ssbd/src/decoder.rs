//! Decoding paradigms: the autoregressive baseline, biased draft
//! verification, the self-speculative update step, and the mask-k variants.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dist::ProbDist;
use crate::error::{Error, Result};
use crate::model::{CacheLedger, LanguageModel, StepCounters};
use crate::token::{TokenId, TokenSeq};

/// How the mask-k knob is applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    None,
    /// Drop the last k tokens from the draft before verification.
    TrimDraft,
    /// Hide the last k tokens of intermediate outputs in the displayed text
    /// only; engine state is untouched.
    DisplayOnly,
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskMode::None => write!(f, "none"),
            MaskMode::TrimDraft => write!(f, "trim_draft"),
            MaskMode::DisplayOnly => write!(f, "display_only"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Bias weight pulling verification toward the draft token.
    pub beta: f64,
    /// Cap on output length per update; `None` means 4 * |input| + 16,
    /// a guard against non-terminating toy models.
    pub max_new_tokens: Option<usize>,
    pub mask_k: usize,
    pub mask_mode: MaskMode,
}

impl Default for DecodeConfig {
    fn default() -> DecodeConfig {
        DecodeConfig {
            beta: 0.0,
            max_new_tokens: None,
            mask_k: 0,
            mask_mode: MaskMode::None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta {} out of range [0, 1]",
                self.beta
            )));
        }
        if self.max_new_tokens == Some(0) {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }

    fn effective_max_new_tokens(&self, input_len: usize) -> usize {
        self.max_new_tokens.unwrap_or(4 * input_len + 16)
    }
}

/// Deterministic prompt assembly: fixed prefix, the input, fixed separator.
/// The draft, when present, is appended after the separator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(default)]
    pub prefix: TokenSeq,
    #[serde(default)]
    pub separator: TokenSeq,
}

impl PromptTemplate {
    pub fn new(prefix: TokenSeq, separator: TokenSeq) -> PromptTemplate {
        PromptTemplate { prefix, separator }
    }

    pub fn render(&self, input: &TokenSeq) -> TokenSeq {
        let mut prompt = self.prefix.clone();
        prompt.extend_from(input);
        prompt.extend_from(&self.separator);
        prompt
    }
}

/// Per-stream decoding state carried across updates.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub input: TokenSeq,
    /// Previous committed output; always eos-free.
    pub prev_output: TokenSeq,
    /// Prompt the cache was last validated against (base prompt plus the
    /// tokens fed during generation).
    prev_prompt: TokenSeq,
    pub template: PromptTemplate,
    pub ledger: CacheLedger,
    pub config: DecodeConfig,
}

impl SessionState {
    pub fn new(template: PromptTemplate, config: DecodeConfig) -> Result<SessionState> {
        config.validate()?;
        Ok(SessionState {
            input: TokenSeq::new(),
            prev_output: TokenSeq::new(),
            prev_prompt: TokenSeq::new(),
            template,
            ledger: CacheLedger::new(),
            config,
        })
    }
}

/// One scanned draft position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionDecision {
    pub draft_token: TokenId,
    pub model_argmax_unbiased: TokenId,
    pub accepted: bool,
}

/// Outcome of verifying a draft against the model in one batched pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    /// Length of the accepted draft prefix.
    pub accepted: usize,
    /// First token the biased model prefers over the draft; absent when the
    /// whole draft was accepted.
    pub corrected_token: Option<TokenId>,
    pub decisions: Vec<PositionDecision>,
    /// Free token from the verification pass when the whole draft was
    /// accepted and the forward covered the position after it.
    pub bonus_token: Option<TokenId>,
    pub draft_len: usize,
}

/// Per-update decoding outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub output: TokenSeq,
    pub display_output: TokenSeq,
    pub verification: Option<VerificationResult>,
    /// Counter delta for this update.
    pub steps: StepCounters,
    /// Set when max_new_tokens stopped generation before eos.
    pub truncated: bool,
}

/// Convex combination of the model distribution and a one-hot at the draft
/// token: `(1 - beta) * p + beta * onehot(draft)`.
pub fn bias_distribution(p: &ProbDist, draft_token: TokenId, beta: f64) -> Result<ProbDist> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} out of range [0, 1]")));
    }
    if draft_token.index() >= p.len() {
        return Err(Error::InvalidToken {
            id: draft_token.0,
            vocab_size: p.len(),
        });
    }
    let mut probs: Vec<f64> = p.as_slice().iter().map(|v| v * (1.0 - beta)).collect();
    probs[draft_token.index()] += beta;
    ProbDist::new(probs)
}

/// Scan the draft left to right against the verification distributions.
///
/// `dists[i]` must be the distribution predicting `draft[i]`. A position is
/// accepted iff the draft token maximizes the biased distribution, ties
/// resolving toward the draft. On the first rejection the corrected token is
/// the canonical argmax of the biased distribution there. When every position
/// is accepted and one extra distribution is available, the bonus token is
/// taken from it unbiased, since no draft token exists at that position.
pub fn verify_draft(dists: &[ProbDist], draft: &TokenSeq, beta: f64) -> Result<VerificationResult> {
    if dists.len() < draft.len() {
        return Err(Error::Logic(format!(
            "{} verification distributions for a draft of length {}",
            dists.len(),
            draft.len()
        )));
    }
    let mut decisions = Vec::new();
    let mut accepted = 0;
    let mut corrected_token = None;
    for i in 0..draft.len() {
        let draft_token = draft[i];
        let biased = bias_distribution(&dists[i], draft_token, beta)?;
        let max = biased
            .as_slice()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = biased.prob(draft_token) >= max;
        decisions.push(PositionDecision {
            draft_token,
            model_argmax_unbiased: dists[i].canonical_argmax(),
            accepted: ok,
        });
        if ok {
            accepted += 1;
        } else {
            corrected_token = Some(biased.canonical_argmax());
            break;
        }
    }
    let bonus_token = if accepted == draft.len() && dists.len() > draft.len() {
        Some(dists[draft.len()].canonical_argmax())
    } else {
        None
    };
    Ok(VerificationResult {
        accepted,
        corrected_token,
        decisions,
        bonus_token,
        draft_len: draft.len(),
    })
}

/// Draft without its last `min(k, |draft|)` tokens.
pub fn trim_draft_mask_k(draft: &TokenSeq, k: usize) -> TokenSeq {
    draft.prefix(draft.len().saturating_sub(k))
}

/// Displayed view of an intermediate output: the last `k` tokens are hidden
/// except on the final update. Never alters engine state.
pub fn display_view(output: &TokenSeq, k: usize, is_final: bool) -> TokenSeq {
    if is_final {
        output.clone()
    } else {
        output.prefix(output.len().saturating_sub(k))
    }
}

fn timed_forward(
    lm: &dyn LanguageModel,
    ledger: &mut CacheLedger,
    prompt: &TokenSeq,
    from: usize,
) -> Result<Vec<ProbDist>> {
    let start = Instant::now();
    let dists = lm.forward(prompt, from)?;
    let nanos = start.elapsed().as_nanos() as u64;
    ledger.record_forward(prompt.len() - from, prompt.len(), nanos);
    Ok(dists)
}

/// Greedy single-token decode loop shared by both paradigms. `first` is the
/// token already obtained from the preceding batched pass; `prompt` holds the
/// validated context and `output` the committed tokens so far.
fn decode_tail(
    lm: &dyn LanguageModel,
    state: &mut SessionState,
    prompt: &mut TokenSeq,
    output: &mut TokenSeq,
    first: TokenId,
    max_new_tokens: usize,
) -> Result<bool> {
    let eos = lm.vocab().eos_id();
    let mut next = first;
    let mut truncated = false;
    loop {
        if next == eos {
            break;
        }
        output.push(next);
        prompt.push(next);
        if output.len() >= max_new_tokens {
            truncated = true;
            break;
        }
        let dists = timed_forward(lm, &mut state.ledger, prompt, prompt.len() - 1)?;
        next = dists[0].canonical_argmax();
    }
    Ok(truncated)
}

fn finish_update(
    state: &mut SessionState,
    prompt: TokenSeq,
    output: TokenSeq,
    verification: Option<VerificationResult>,
    before: StepCounters,
    truncated: bool,
    is_final: bool,
) -> UpdateResult {
    let display_output = match state.config.mask_mode {
        MaskMode::DisplayOnly => display_view(&output, state.config.mask_k, is_final),
        _ => output.clone(),
    };
    state.prev_output = output.clone();
    state.prev_prompt = prompt;
    UpdateResult {
        output,
        display_output,
        verification,
        steps: state.ledger.snapshot().delta_since(&before),
        truncated,
    }
}

/// Greedy re-translation from scratch: one prefill over the prompt (its last
/// distribution yields the first output token), then one decode step per
/// further token plus the terminating eos check.
pub fn ar_decode(
    lm: &dyn LanguageModel,
    state: &mut SessionState,
    new_input: &TokenSeq,
    is_final: bool,
) -> Result<UpdateResult> {
    if new_input.is_empty() {
        return Err(Error::Validation("empty input update".into()));
    }
    let before = state.ledger.snapshot();
    state.input = new_input.clone();
    let max_new_tokens = state.config.effective_max_new_tokens(new_input.len());

    let mut prompt = state.template.render(new_input);
    let reuse = state.ledger.reuse_prefix(&state.prev_prompt, &prompt);
    let from = reuse.min(prompt.len() - 1);
    let dists = timed_forward(lm, &mut state.ledger, &prompt, from)?;
    let first = dists.last().expect("at least one position").canonical_argmax();

    let mut output = TokenSeq::new();
    let truncated = decode_tail(lm, state, &mut prompt, &mut output, first, max_new_tokens)?;
    Ok(finish_update(state, prompt, output, None, before, truncated, is_final))
}

/// One self-speculative biased decoding update: reuse the previous output as
/// a draft, verify it in a single batched pass with bias `beta`, commit the
/// accepted prefix plus the corrected (or bonus) token, truncate the cache at
/// the divergence boundary, then decode the rest greedily with unbiased
/// distributions.
pub fn ssbd_update(
    lm: &dyn LanguageModel,
    state: &mut SessionState,
    new_input: &TokenSeq,
    is_final: bool,
) -> Result<UpdateResult> {
    if new_input.is_empty() {
        return Err(Error::Validation("empty input update".into()));
    }
    if state.prev_output.is_empty() {
        // No draft exists yet; the first update is plain greedy decoding.
        return ar_decode(lm, state, new_input, is_final);
    }
    let before = state.ledger.snapshot();
    state.input = new_input.clone();
    let max_new_tokens = state.config.effective_max_new_tokens(new_input.len());
    let eos = lm.vocab().eos_id();

    let draft = match state.config.mask_mode {
        MaskMode::TrimDraft => trim_draft_mask_k(&state.prev_output, state.config.mask_k),
        _ => state.prev_output.clone(),
    };
    let base = state.template.render(new_input);
    let mut prompt = base.clone();
    prompt.extend_from(&draft);

    // Verification pass: must cover every draft position, so it never starts
    // past the last base-prompt position even when the cache reaches further.
    let reuse = state.ledger.reuse_prefix(&state.prev_prompt, &prompt);
    let from = reuse.min(base.len() - 1);
    let dists = timed_forward(lm, &mut state.ledger, &prompt, from)?;
    let verify_offset = base.len() - 1 - from;
    let verification = verify_draft(&dists[verify_offset..], &draft, state.config.beta)?;

    let committed = base.len() + verification.accepted;
    state.ledger.truncate(committed)?;
    prompt.truncate(committed);
    let mut output = draft.prefix(verification.accepted);

    let next = if verification.accepted == draft.len() {
        verification
            .bonus_token
            .ok_or_else(|| Error::Logic("verification pass missing bonus position".into()))?
    } else {
        verification
            .corrected_token
            .ok_or_else(|| Error::Logic("rejected draft without corrected token".into()))?
    };

    let truncated = if output.len() >= max_new_tokens && next != eos {
        true
    } else {
        decode_tail(lm, state, &mut prompt, &mut output, next, max_new_tokens)?
    };
    Ok(finish_update(
        state,
        prompt,
        output,
        Some(verification),
        before,
        truncated,
        is_final,
    ))
}
