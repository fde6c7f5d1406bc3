//! Exact-match table model: a deterministic, scriptable oracle backend.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decoder::PromptTemplate;
use crate::dist::ProbDist;
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::token::{TokenId, TokenSeq, Vocab};

/// Maps an exact context (the prompt prefix up to and including a position)
/// to the next-token distribution at that position. Unseen contexts fall back
/// to a configurable distribution, uniform by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TableModelRepr", into = "TableModelRepr")]
pub struct TableModel {
    vocab: Vocab,
    entries: HashMap<Vec<TokenId>, ProbDist>,
    fallback: ProbDist,
    template: Option<PromptTemplate>,
}

impl TableModel {
    pub fn new(vocab: Vocab, fallback: Option<ProbDist>) -> TableModel {
        let fallback = fallback.unwrap_or_else(|| ProbDist::uniform(vocab.size()));
        TableModel {
            vocab,
            entries: HashMap::new(),
            fallback,
            template: None,
        }
    }

    pub fn set_template(&mut self, template: PromptTemplate) {
        self.template = Some(template);
    }

    pub fn template(&self) -> Option<&PromptTemplate> {
        self.template.as_ref()
    }

    pub fn insert(&mut self, context: TokenSeq, dist: ProbDist) -> Result<()> {
        for id in context.iter() {
            self.vocab.check_token(id)?;
        }
        if dist.len() != self.vocab.size() {
            return Err(Error::Config(format!(
                "distribution of length {} for vocab of size {}",
                dist.len(),
                self.vocab.size()
            )));
        }
        self.entries.insert(context.as_slice().to_vec(), dist);
        Ok(())
    }

    pub fn contains(&self, context: &TokenSeq) -> bool {
        self.entries.contains_key(context.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.vocab.validate()?;
        if self.fallback.len() != self.vocab.size() {
            return Err(Error::Config("fallback length mismatch".into()));
        }
        for (context, dist) in &self.entries {
            for id in context {
                self.vocab.check_token(*id)?;
            }
            if dist.len() != self.vocab.size() {
                return Err(Error::Config("entry distribution length mismatch".into()));
            }
        }
        Ok(())
    }
}

impl LanguageModel for TableModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn forward(&self, prompt: &TokenSeq, from_position: usize) -> Result<Vec<ProbDist>> {
        for id in prompt.iter() {
            self.vocab.check_token(id)?;
        }
        if from_position > prompt.len() {
            return Err(Error::Logic(format!(
                "from_position {from_position} past prompt length {}",
                prompt.len()
            )));
        }
        let mut out = Vec::with_capacity(prompt.len() - from_position);
        for j in from_position..prompt.len() {
            let context = &prompt.as_slice()[..=j];
            out.push(
                self.entries
                    .get(context)
                    .cloned()
                    .unwrap_or_else(|| self.fallback.clone()),
            );
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    context: Vec<TokenId>,
    probs: ProbDist,
}

#[derive(Serialize, Deserialize)]
struct TableModelRepr {
    vocab: Vocab,
    entries: Vec<TableEntry>,
    fallback: ProbDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<PromptTemplate>,
}

impl From<TableModel> for TableModelRepr {
    fn from(m: TableModel) -> TableModelRepr {
        let mut entries: Vec<TableEntry> = m
            .entries
            .into_iter()
            .map(|(context, probs)| TableEntry { context, probs })
            .collect();
        entries.sort_by(|a, b| a.context.cmp(&b.context));
        TableModelRepr {
            vocab: m.vocab,
            entries,
            fallback: m.fallback,
            template: m.template,
        }
    }
}

impl TryFrom<TableModelRepr> for TableModel {
    type Error = Error;

    fn try_from(repr: TableModelRepr) -> Result<TableModel> {
        let mut model = TableModel::new(repr.vocab, Some(repr.fallback));
        model.template = repr.template;
        for entry in repr.entries {
            model.insert(TokenSeq::from(entry.context), entry.probs)?;
        }
        Ok(model)
    }
}
