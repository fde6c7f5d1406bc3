//! Streaming-input production and session orchestration.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{ar_decode, ssbd_update, DecodeConfig, PromptTemplate, SessionState};
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::token::{lcp, TokenSeq, Vocab};

/// One streaming input revision for a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamUpdate {
    #[serde(rename = "session")]
    pub session_id: String,
    pub t: u64,
    #[serde(rename = "input")]
    pub input_text: String,
}

impl StreamUpdate {
    pub fn tokens(&self, vocab: &Vocab) -> Result<TokenSeq> {
        vocab.encode(&self.input_text)
    }
}

/// Which decoding paradigm drives a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Ar,
    Ssbd,
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Paradigm> {
        match s {
            "ar" => Ok(Paradigm::Ar),
            "ssbd" => Ok(Paradigm::Ssbd),
            other => Err(Error::Config(format!("unknown paradigm {other:?}"))),
        }
    }
}

/// One line of the trace file; everything needed to recompute the metrics
/// offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub session: String,
    pub t: u64,
    pub input: String,
    pub output: String,
    pub display_output: String,
    pub accepted: usize,
    pub draft_len: usize,
    pub erasure: usize,
    pub forwards: u64,
    pub prefill_positions: u64,
    pub decode_steps: u64,
    pub wall_nanos: u64,
    pub truncated: bool,
    #[serde(skip)]
    pub output_tokens: TokenSeq,
}

/// Per-session run result: one record per consumed update.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub session_id: String,
    pub records: Vec<UpdateRecord>,
    pub final_output: TokenSeq,
}

/// Emulate streaming input by revealing the sentence in increments of `k`
/// words; the last update always carries the full sentence.
pub fn lag_k_updates(session_id: &str, words: &[&str], k: usize) -> Result<Vec<StreamUpdate>> {
    if k == 0 {
        return Err(Error::Config("lag k must be at least 1".into()));
    }
    if words.is_empty() {
        return Err(Error::Config("empty word list for lag-k updates".into()));
    }
    let mut updates = Vec::new();
    let mut t = 1u64;
    let mut shown = 0usize;
    while shown < words.len() {
        shown = (shown + k).min(words.len());
        updates.push(StreamUpdate {
            session_id: session_id.to_string(),
            t,
            input_text: words[..shown].join(" "),
        });
        t += 1;
    }
    Ok(updates)
}

/// Parse a JSONL transcript into sessions ordered by session id, each with
/// updates in t order. Duplicate (session, t) pairs are rejected.
pub fn load_transcript(path: &Path) -> Result<Vec<Vec<StreamUpdate>>> {
    let file = std::fs::File::open(path)?;
    parse_transcript(BufReader::new(file))
}

pub fn parse_transcript<R: BufRead>(reader: R) -> Result<Vec<Vec<StreamUpdate>>> {
    let mut sessions: BTreeMap<String, BTreeMap<u64, StreamUpdate>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let update: StreamUpdate = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if update.input_text.split_whitespace().next().is_none() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty input".into(),
            });
        }
        let by_t = sessions.entry(update.session_id.clone()).or_default();
        if by_t.insert(update.t, update).is_some() {
            return Err(Error::Validation(format!(
                "duplicate update index t at line {}",
                i + 1
            )));
        }
    }
    Ok(sessions
        .into_values()
        .map(|by_t| by_t.into_values().collect())
        .collect())
}

/// Drive one session through all its updates under the chosen paradigm.
///
/// The ar paradigm decodes every update from scratch with no draft; prompt
/// prefix cache reuse stays on so the step-count comparison is fair.
pub fn run_session(
    lm: &dyn LanguageModel,
    updates: &[StreamUpdate],
    template: &PromptTemplate,
    config: &DecodeConfig,
    paradigm: Paradigm,
) -> Result<SessionTrace> {
    if updates.is_empty() {
        return Err(Error::Validation("session with no updates".into()));
    }
    let session_id = updates[0].session_id.clone();
    let vocab = lm.vocab();
    let mut state = SessionState::new(template.clone(), config.clone())?;
    let mut records = Vec::with_capacity(updates.len());
    for (i, update) in updates.iter().enumerate() {
        if update.session_id != session_id {
            return Err(Error::Validation(format!(
                "update for session {:?} inside session {:?}",
                update.session_id, session_id
            )));
        }
        let is_final = i + 1 == updates.len();
        let annotate = |e: Error| e.in_session(&session_id, update.t);
        let input = update.tokens(vocab).map_err(annotate)?;
        let prev_output = state.prev_output.clone();
        let result = match paradigm {
            Paradigm::Ar => ar_decode(lm, &mut state, &input, is_final),
            Paradigm::Ssbd => ssbd_update(lm, &mut state, &input, is_final),
        }
        .map_err(|e| e.in_session(&session_id, update.t))?;
        let erasure = prev_output.len() - lcp(&prev_output, &result.output);
        let (accepted, draft_len) = result
            .verification
            .as_ref()
            .map(|v| (v.accepted, v.draft_len))
            .unwrap_or((0, 0));
        records.push(UpdateRecord {
            session: session_id.clone(),
            t: update.t,
            input: update.input_text.clone(),
            output: vocab.decode(&result.output),
            display_output: vocab.decode(&result.display_output),
            accepted,
            draft_len,
            erasure,
            forwards: result.steps.forwards,
            prefill_positions: result.steps.prefill_positions,
            decode_steps: result.steps.decode_steps,
            wall_nanos: result.steps.wall_nanos,
            truncated: result.truncated,
            output_tokens: result.output,
        });
    }
    Ok(SessionTrace {
        session_id,
        final_output: records.last().map(|r| r.output_tokens.clone()).unwrap_or_default(),
        records,
    })
}

/// Write traces as JSONL, one record per update, sessions in the given order.
pub fn write_trace<W: Write>(mut w: W, traces: &[SessionTrace], no_timing: bool) -> Result<()> {
    for trace in traces {
        for record in &trace.records {
            let mut record = record.clone();
            if no_timing {
                record.wall_nanos = 0;
            }
            let line = serde_json::to_string(&record)
                .map_err(|e| Error::Validation(format!("trace serialization: {e}")))?;
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_k_increments_and_final_flush() {
        let words = ["w1", "w2", "w3", "w4", "w5"];
        let updates = lag_k_updates("s1", &words, 3).unwrap();
        let inputs: Vec<&str> = updates.iter().map(|u| u.input_text.as_str()).collect();
        assert_eq!(inputs, vec!["w1 w2 w3", "w1 w2 w3 w4 w5"]);
        assert_eq!(updates.iter().map(|u| u.t).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn lag_k_degenerate_cases() {
        let updates = lag_k_updates("s1", &["w1", "w2"], 10).unwrap();
        assert_eq!(updates.len(), 1);
        assert_eq!(updates[0].input_text, "w1 w2");
        let updates = lag_k_updates("s1", &["w1"], 1).unwrap();
        assert_eq!(updates.len(), 1);
        assert!(lag_k_updates("s1", &["w1"], 0).is_err());
        assert!(lag_k_updates("s1", &[], 1).is_err());
    }

    #[test]
    fn transcript_grouping_and_ordering() {
        let text = r#"{"session":"s2","t":1,"input":"b one"}
{"session":"s1","t":1,"input":"a one"}
{"session":"s2","t":2,"input":"b one two"}
{"session":"s1","t":2,"input":"a one two"}
"#;
        let sessions = parse_transcript(text.as_bytes()).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0][0].session_id, "s1");
        assert_eq!(sessions[0].iter().map(|u| u.t).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(sessions[1][1].input_text, "b one two");
    }

    #[test]
    fn transcript_rejects_duplicates_and_garbage() {
        let dup = r#"{"session":"s1","t":1,"input":"a"}
{"session":"s1","t":1,"input":"a b"}
"#;
        assert!(matches!(
            parse_transcript(dup.as_bytes()),
            Err(Error::Validation(_))
        ));
        let bad = "not json\n";
        match parse_transcript(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn shuffled_transcript_reconstructs_sorted_sessions() {
        let ordered = r#"{"session":"s1","t":1,"input":"a"}
{"session":"s1","t":2,"input":"a b"}
{"session":"s1","t":3,"input":"a b c"}
"#;
        let shuffled = r#"{"session":"s1","t":3,"input":"a b c"}
{"session":"s1","t":1,"input":"a"}
{"session":"s1","t":2,"input":"a b"}
"#;
        assert_eq!(
            parse_transcript(ordered.as_bytes()).unwrap(),
            parse_transcript(shuffled.as_bytes()).unwrap()
        );
    }
}
