//! Deterministic desk-scale fixtures: scripted table models and seeded
//! random sessions. Used by the test suites and reusable from the CLI crate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::PromptTemplate;
use crate::dist::ProbDist;
use crate::error::Result;
use crate::model::TableModel;
use crate::stream::StreamUpdate;
use crate::token::{TokenId, TokenSeq, Vocab};

/// Word-level vocab with reserved template tokens: id 0 is eos, id 1 an
/// instruction marker, id 2 a separator, then `n_words` plain words.
pub fn fixture_vocab(n_words: usize) -> Vocab {
    let mut words = vec!["</s>".to_string(), "<tr>".to_string(), "<sep>".to_string()];
    for i in 1..=n_words {
        words.push(format!("w{i}"));
    }
    Vocab::with_words(words, TokenId(0)).expect("fixture vocab is well formed")
}

/// Instruction-prefix / separator template over the fixture vocab.
pub fn default_template() -> PromptTemplate {
    PromptTemplate::new(TokenSeq::from([1]), TokenSeq::from([2]))
}

/// Scripts a table model one update at a time. Every scripted distribution
/// is one-hot unless overridden, so argmax is unique everywhere; unseen
/// contexts fall back to one-hot eos and terminate generation.
pub struct ScriptBuilder {
    pub vocab: Vocab,
    pub template: PromptTemplate,
    pub model: TableModel,
}

impl ScriptBuilder {
    pub fn new(vocab: Vocab, template: PromptTemplate) -> ScriptBuilder {
        let fallback = ProbDist::one_hot(vocab.size(), vocab.eos_id());
        let model = TableModel::new(vocab.clone(), Some(fallback));
        ScriptBuilder {
            vocab,
            template,
            model,
        }
    }

    /// Script the greedy path for `input_text`: after each output prefix the
    /// model emits the next output token, then eos.
    pub fn chain(&mut self, input_text: &str, output: &[u32]) -> Result<()> {
        let input = self.vocab.encode(input_text)?;
        let mut context = self.template.render(&input);
        for &id in output {
            self.model
                .insert(context.clone(), ProbDist::one_hot(self.vocab.size(), TokenId(id)))?;
            context.push(TokenId(id));
        }
        self.model.insert(
            context,
            ProbDist::one_hot(self.vocab.size(), self.vocab.eos_id()),
        )?;
        Ok(())
    }

    /// Override the distribution seen after `output_prefix` for `input_text`.
    pub fn dist(&mut self, input_text: &str, output_prefix: &[u32], dist: ProbDist) -> Result<()> {
        let input = self.vocab.encode(input_text)?;
        let mut context = self.template.render(&input);
        for &id in output_prefix {
            context.push(TokenId(id));
        }
        self.model.insert(context, dist)
    }

    pub fn finish(self) -> TableModel {
        let mut model = self.model;
        model.set_template(self.template);
        model
    }
}

pub fn update(session_id: &str, t: u64, input_text: &str) -> StreamUpdate {
    StreamUpdate {
        session_id: session_id.to_string(),
        t,
        input_text: input_text.to_string(),
    }
}

/// A seeded random session over a scripted table model. Outputs share a
/// growing stable prefix of a final sentence plus a volatile random suffix,
/// so consecutive updates produce partially accepted drafts. All scripted
/// distributions are one-hot: argmax is unique at every position.
pub struct TableFixture {
    pub model: TableModel,
    pub template: PromptTemplate,
    pub updates: Vec<StreamUpdate>,
}

pub fn random_table_fixture(seed: u64, session_id: &str) -> TableFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_words = 20usize;
    let vocab = fixture_vocab(n_words);
    let template = default_template();
    let word_id = |rng: &mut ChaCha8Rng| rng.gen_range(3..3 + n_words as u32);

    // 5 to 10 updates: lag-1 over a sentence of that many words.
    let sentence_len = rng.gen_range(5..=10);
    let sentence: Vec<u32> = (0..sentence_len).map(|_| word_id(&mut rng)).collect();
    let words: Vec<String> = sentence.iter().map(|id| format!("w{}", id - 2)).collect();
    let word_refs: Vec<&str> = words.iter().map(|s| s.as_str()).collect();
    let updates = crate::stream::lag_k_updates(session_id, &word_refs, 1)
        .expect("non-empty sentence");

    let final_len = sentence_len + rng.gen_range(0..3);
    let final_output: Vec<u32> = (0..final_len).map(|_| word_id(&mut rng)).collect();

    let n_updates = updates.len();
    let mut builder = ScriptBuilder::new(vocab, template.clone());
    for (u, upd) in updates.iter().enumerate() {
        let stable = if u + 1 == n_updates {
            final_len
        } else {
            (((u + 1) * final_len) / n_updates).max(1)
        };
        let mut output: Vec<u32> = final_output[..stable].to_vec();
        if u + 1 < n_updates {
            for _ in 0..rng.gen_range(0..=2) {
                output.push(word_id(&mut rng));
            }
        }
        builder
            .chain(&upd.input_text, &output)
            .expect("fixture script is consistent");
    }
    TableFixture {
        model: builder.finish(),
        template,
        updates,
    }
}
