//! Seeded toy corpora for demos, tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{prepare_all, PreparedExample, PropertyInventory, Response, Split, SprExample};
use crate::embeddings::{EmbeddingTable, Featurizer};
use crate::Result;

pub struct SyntheticCorpus {
    pub inventory: PropertyInventory,
    pub table: EmbeddingTable,
    pub examples: Vec<SprExample>,
}

impl SyntheticCorpus {
    pub fn featurizer(&self) -> Featurizer {
        Featurizer::new(self.table.clone())
    }

    pub fn split(&self, split: Split) -> Vec<SprExample> {
        crate::dataset::split_of(&self.examples, split)
    }

    pub fn prepared(&self, split: Split, max_len: usize) -> Result<Vec<PreparedExample>> {
        prepare_all(&self.split(split), &self.featurizer(), max_len)
    }
}

fn random_table(words: &[String], dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let entries = words
        .iter()
        .map(|w| (w.clone(), (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()));
    EmbeddingTable::from_entries(dim, entries).expect("dimensions agree")
}

fn respond(positive: bool, responses: usize, rng: &mut ChaCha8Rng) -> Vec<Response> {
    let pick = |rng: &mut ChaCha8Rng| {
        if positive {
            Response::Likert(rng.gen_range(4..=5))
        } else {
            match rng.gen_range(0..4) {
                0 => Response::NotApplicable,
                v => Response::Likert(v),
            }
        }
    };
    // Every response on the same side keeps the mean on that side of 4.
    (0..responses).map(|_| pick(rng)).collect()
}

/// Pairs of examples over the same sentence with predicate and argument
/// swapped. Property `argument_precedes` holds when the argument comes first,
/// `argument_follows` when it comes second. Without markers the two members
/// of a pair have identical inputs. All examples are in the train split.
pub fn span_order_twins(sentences: usize, dim: usize, seed: u64) -> SyntheticCorpus {
    twins(sentences, dim, seed, |_| Split::Train)
}

/// [`span_order_twins`] with sentences split 60/20/20 in order; both members
/// of a pair share a split.
pub fn span_order_corpus(sentences: usize, dim: usize, seed: u64) -> SyntheticCorpus {
    twins(sentences, dim, seed, |s| match s * 10 / sentences.max(1) {
        0..=5 => Split::Train,
        6 | 7 => Split::Dev,
        _ => Split::Test,
    })
}

fn twins(sentences: usize, dim: usize, seed: u64, split_of: impl Fn(usize) -> Split) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let table = random_table(&vocab, dim, &mut rng);
    let inventory = PropertyInventory::new(
        "span_order",
        vec!["argument_precedes".into(), "argument_follows".into()],
        1,
    )
    .expect("valid inventory");
    let mut examples = Vec::with_capacity(2 * sentences);
    for s in 0..sentences {
        let len = rng.gen_range(5..=10);
        let tokens: Vec<String> = (0..len)
            .map(|_| vocab.choose(&mut rng).expect("vocab").clone())
            .collect();
        let a = rng.gen_range(0..len);
        let mut b = rng.gen_range(0..len - 1);
        if b >= a {
            b += 1;
        }
        let (first, second) = (a.min(b), a.max(b));
        for (twin, (pred, arg)) in [(first, second), (second, first)].into_iter().enumerate() {
            let precedes = arg < pred;
            examples.push(SprExample {
                id: format!("s{s}-{twin}"),
                split: split_of(s),
                tokens: tokens.clone(),
                predicate_indices: vec![pred],
                argument_span: (arg, arg),
                annotations: vec![
                    respond(precedes, 1, &mut rng),
                    respond(!precedes, 1, &mut rng),
                ],
            });
        }
    }
    SyntheticCorpus {
        inventory,
        table,
        examples,
    }
}

/// Sentences with one verb and a one- or two-token argument. Properties:
/// `animate` (a hidden attribute of the argument's last word), `precedes`
/// (argument before the verb) and `agentive` (both). Each gold label is
/// flipped with probability `noise`. Splits are 60/20/20 in id order.
pub fn lexical_corpus(
    n: usize,
    dim: usize,
    noise: f64,
    responses: usize,
    seed: u64,
) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nouns: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
    let verbs: Vec<String> = (0..4).map(|i| format!("v{i}")).collect();
    let fillers: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let all: Vec<String> = nouns.iter().chain(&verbs).chain(&fillers).cloned().collect();
    let table = random_table(&all, dim, &mut rng);
    let animate: Vec<bool> = (0..nouns.len()).map(|i| i % 2 == 0).collect();
    let inventory = PropertyInventory::new(
        "lexical",
        vec!["animate".into(), "precedes".into(), "agentive".into()],
        responses,
    )
    .expect("valid inventory");

    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.gen_range(4..=9);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| fillers.choose(&mut rng).expect("fillers").clone())
            .collect();
        let arg_len = rng.gen_range(1..=2);
        let pred = rng.gen_range(0..len);
        let start = loop {
            let s = rng.gen_range(0..=len - arg_len);
            if !(s..s + arg_len).contains(&pred) {
                break s;
            }
        };
        let end = start + arg_len - 1;
        tokens[pred] = verbs.choose(&mut rng).expect("verbs").clone();
        let head = rng.gen_range(0..nouns.len());
        tokens[end] = nouns[head].clone();
        if arg_len == 2 {
            tokens[start] = nouns.choose(&mut rng).expect("nouns").clone();
        }
        let precedes = end < pred;
        let truth = [animate[head], precedes, animate[head] && precedes];
        let annotations = truth
            .iter()
            .map(|&t| {
                let flipped = rng.gen_bool(noise);
                respond(t != flipped, responses, &mut rng)
            })
            .collect();
        let split = match i * 10 / n.max(1) {
            0..=5 => Split::Train,
            6 | 7 => Split::Dev,
            _ => Split::Test,
        };
        examples.push(SprExample {
            id: format!("x{i:04}"),
            split,
            tokens,
            predicate_indices: vec![pred],
            argument_span: (start, end),
            annotations,
        });
    }
    SyntheticCorpus {
        inventory,
        table,
        examples,
    }
}
