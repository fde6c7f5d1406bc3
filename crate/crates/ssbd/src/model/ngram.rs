//! Add-alpha smoothed n-gram model with backoff to shorter contexts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::decoder::PromptTemplate;
use crate::dist::ProbDist;
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::token::{TokenId, TokenSeq, Vocab};

/// Counts are keyed by contexts of length 0 to order-1; prediction backs off
/// from the longest matching context down to the unigram. Each training
/// sentence is terminated with the vocab's eos id so the model can end
/// generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NgramModelRepr", into = "NgramModelRepr")]
pub struct NgramModel {
    vocab: Vocab,
    order: usize,
    alpha: f64,
    counts: HashMap<Vec<TokenId>, BTreeMap<TokenId, u64>>,
    template: Option<PromptTemplate>,
}

impl NgramModel {
    pub fn train(vocab: Vocab, corpus: &[TokenSeq], order: usize, alpha: f64) -> Result<NgramModel> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if alpha <= 0.0 {
            return Err(Error::Config("smoothing alpha must be positive".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Config("empty training corpus".into()));
        }
        let mut counts: HashMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = HashMap::new();
        for seq in corpus {
            seq.validate(&vocab)?;
            let mut tokens: Vec<TokenId> = seq.iter().collect();
            if tokens.last() != Some(&vocab.eos_id()) {
                tokens.push(vocab.eos_id());
            }
            for i in 0..tokens.len() {
                for l in 0..order.min(i + 1) {
                    let context = tokens[i - l..i].to_vec();
                    *counts.entry(context).or_default().entry(tokens[i]).or_insert(0) += 1;
                }
            }
        }
        Ok(NgramModel {
            vocab,
            order,
            alpha,
            counts,
            template: None,
        })
    }

    pub fn set_template(&mut self, template: PromptTemplate) {
        self.template = Some(template);
    }

    pub fn template(&self) -> Option<&PromptTemplate> {
        self.template.as_ref()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn validate(&self) -> Result<()> {
        self.vocab.validate()?;
        if self.order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config("smoothing alpha must be positive".into()));
        }
        for (context, by_token) in &self.counts {
            if context.len() >= self.order {
                return Err(Error::Config("context longer than order - 1".into()));
            }
            for id in context.iter().chain(by_token.keys()) {
                self.vocab.check_token(*id)?;
            }
        }
        Ok(())
    }

    /// Smoothed distribution for the longest trained suffix of `context`.
    fn predict(&self, context: &[TokenId]) -> ProbDist {
        let longest = context.len().min(self.order - 1);
        let v = self.vocab.size();
        for l in (0..=longest).rev() {
            let key = &context[context.len() - l..];
            if let Some(by_token) = self.counts.get(key) {
                let total: u64 = by_token.values().sum();
                let denom = total as f64 + self.alpha * v as f64;
                let mut probs = vec![self.alpha / denom; v];
                for (tok, c) in by_token {
                    probs[tok.index()] += *c as f64 / denom;
                }
                return ProbDist::new(probs).expect("smoothed counts normalize");
            }
        }
        // Untrained unigram cannot happen after train(); kept as a safe default.
        ProbDist::uniform(v)
    }
}

impl LanguageModel for NgramModel {
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
        Ok((from_position..prompt.len())
            .map(|j| self.predict(&prompt.as_slice()[..=j]))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct NgramEntry {
    context: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
struct NgramModelRepr {
    vocab: Vocab,
    order: usize,
    alpha: f64,
    counts: Vec<NgramEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<PromptTemplate>,
}

impl From<NgramModel> for NgramModelRepr {
    fn from(m: NgramModel) -> NgramModelRepr {
        let mut counts: Vec<NgramEntry> = m
            .counts
            .into_iter()
            .map(|(context, by_token)| NgramEntry {
                context,
                counts: by_token.into_iter().collect(),
            })
            .collect();
        counts.sort_by(|a, b| a.context.cmp(&b.context));
        NgramModelRepr {
            vocab: m.vocab,
            order: m.order,
            alpha: m.alpha,
            counts,
            template: m.template,
        }
    }
}

impl TryFrom<NgramModelRepr> for NgramModel {
    type Error = Error;

    fn try_from(repr: NgramModelRepr) -> Result<NgramModel> {
        let model = NgramModel {
            vocab: repr.vocab,
            order: repr.order,
            alpha: repr.alpha,
            counts: repr
                .counts
                .into_iter()
                .map(|e| (e.context, e.counts.into_iter().collect()))
                .collect(),
            template: repr.template,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ids: &[u32]) -> TokenSeq {
        TokenSeq::from(ids.to_vec())
    }

    #[test]
    fn bigram_counts_match_hand_tally() {
        let vocab = Vocab::new(5, TokenId(0)).unwrap();
        let alpha = 0.5;
        let m = NgramModel::train(vocab, &[seq(&[1, 2, 1, 2])], 2, alpha).unwrap();
        // Context [1] is followed by 2 twice out of two occurrences.
        let d = m.forward(&seq(&[1]), 0).unwrap().remove(0);
        let expected = (2.0 + alpha) / (2.0 + alpha * 5.0);
        assert!((d.prob(TokenId(2)) - expected).abs() < 1e-12);
    }

    #[test]
    fn large_alpha_approaches_uniform() {
        let vocab = Vocab::new(5, TokenId(0)).unwrap();
        let m = NgramModel::train(vocab, &[seq(&[1, 2, 1, 2])], 2, 1e9).unwrap();
        let d = m.forward(&seq(&[1]), 0).unwrap().remove(0);
        for p in d.as_slice() {
            assert!((p - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn training_prefix_reproduces_corpus_argmax() {
        let vocab = Vocab::new(6, TokenId(0)).unwrap();
        let corpus = [seq(&[1, 2, 3, 4, 5])];
        let m = NgramModel::train(vocab, &corpus, 3, 0.01).unwrap();
        let dists = m.forward(&seq(&[1, 2, 3, 4]), 0).unwrap();
        // Every context in the training sentence is unambiguous.
        let expected = [2u32, 3, 4, 5];
        for (d, want) in dists.iter().zip(expected) {
            assert_eq!(d.canonical_argmax(), TokenId(want));
        }
        // After the final word the model predicts eos.
        let d = m.forward(&seq(&[1, 2, 3, 4, 5]), 4).unwrap().remove(0);
        assert_eq!(d.canonical_argmax(), TokenId(0));
    }

    #[test]
    fn rejects_bad_configuration() {
        let vocab = Vocab::new(5, TokenId(0)).unwrap();
        assert!(NgramModel::train(vocab.clone(), &[], 2, 0.5).is_err());
        assert!(NgramModel::train(vocab.clone(), &[seq(&[1])], 0, 0.5).is_err());
        assert!(NgramModel::train(vocab, &[seq(&[1])], 2, 0.0).is_err());
    }
}
