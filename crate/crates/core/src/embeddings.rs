//! Frozen word vectors, precomputed contextual vectors, and the learnable
//! marker table.
//!
//! Word-vector files are GloVe-style text: one token per line followed by
//! exactly `dim` whitespace-separated reals. Contextual-vector files use the
//! text container documented on [`ContextualVectors`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dataset::SprExample;
use crate::{Error, Result};

/// What [`EmbeddingTable::lookup`] returns for a token that is not stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Zero,
    /// A vector drawn from `U(-0.1, 0.1)` by a generator keyed on
    /// `(seed, token)`, so repeated lookups agree.
    SeededRandom { seed: u64 },
}

const OOV_RANGE: f32 = 0.1;

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    policy: OovPolicy,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
            policy: OovPolicy::Zero,
        }
    }

    /// Builds a table from in-memory entries. Later duplicates are ignored.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut table = Self::new(dim);
        for (token, v) in entries {
            let token = token.into();
            if v.len() != dim {
                return Err(Error::data(format!(
                    "vector for {token:?} has {} values, expected {dim}",
                    v.len()
                )));
            }
            table.insert(token, &v);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, v: &[f32]) {
        if self.index.contains_key(&token) {
            return;
        }
        self.index.insert(token, self.index.len());
        self.vectors.extend_from_slice(v);
    }

    pub fn with_policy(mut self, policy: OovPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn lookup(&self, token: &str) -> Vec<f32> {
        if let Some(v) = self.get(token) {
            return v.to_vec();
        }
        match self.policy {
            OovPolicy::Zero => vec![0.0; self.dim],
            OovPolicy::SeededRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(token.as_bytes()));
                (0..self.dim)
                    .map(|_| rng.gen_range(-OOV_RANGE..OOV_RANGE))
                    .collect()
            }
        }
    }

    /// `(e_1, …, e_T)` for a token sequence; OOV tokens follow the policy.
    pub fn lookup_sequence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vec<f32>> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    /// Writes the table in the same text format [`load_word_vectors`] reads,
    /// in insertion order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut entries: Vec<(&String, &usize)> = self.index.iter().collect();
        entries.sort_by_key(|(_, &i)| i);
        for (token, &i) in entries {
            write!(out, "{token}").map_err(|e| Error::io(path, e))?;
            for x in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x}").map_err(|e| Error::io(path, e))?;
            }
            writeln!(out).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Reads a GloVe-style text file. The first occurrence of a token wins.
pub fn load_word_vectors(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::new(expected_dim);
    let mut values = Vec::with_capacity(expected_dim);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        values.clear();
        for f in fields {
            let x: f32 = f.parse().map_err(|_| {
                Error::data(format!(
                    "{}:{}: invalid number {f:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.push(x);
        }
        if values.len() != expected_dim {
            return Err(Error::data(format!(
                "{}:{}: expected {expected_dim} values for {token:?}, found {}",
                path.display(),
                lineno + 1,
                values.len()
            )));
        }
        table.insert(token.to_string(), &values);
    }
    Ok(table)
}

/// Index of each marker vector in the learnable `3 × d_m` table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    Argument = 0,
    Predicate = 1,
    Other = 2,
}

pub const MARKER_INIT_RANGE: f32 = 0.05;

/// Initial marker table: three rows drawn from `U(-0.05, 0.05)`.
pub fn init_marker_table(dim: usize, rng: &mut impl Rng) -> Tensor<f32> {
    Tensor::from_fn(3, dim, |_, _| {
        rng.gen_range(-MARKER_INIT_RANGE..=MARKER_INIT_RANGE)
    })
}

/// Per-example, per-token vectors computed outside this crate.
///
/// Text container:
///
/// ```text
/// contextual <d_c>
/// example <id> <n_tokens>
/// <d_c reals>        # one line per token, n_tokens lines
/// example <id> <n_tokens>
/// ...
/// ```
///
/// Ids must not contain whitespace. A file with `d_c = 0` carries no records.
#[derive(Clone, Debug, Default)]
pub struct ContextualVectors {
    dim: usize,
    records: HashMap<String, Vec<Vec<f32>>>,
}

impl ContextualVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, id: impl Into<String>, rows: Vec<Vec<f32>>) -> Result<()> {
        let id = id.into();
        if let Some(bad) = rows.iter().find(|r| r.len() != self.dim) {
            return Err(Error::data(format!(
                "contextual vectors for {id}: row of {} values, expected {}",
                bad.len(),
                self.dim
            )));
        }
        self.records.insert(id, rows);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[Vec<f32>]> {
        self.records.get(id).map(Vec::as_slice)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let bad = |n: usize, msg: &str| Error::data(format!("{}:{}: {msg}", path.display(), n + 1));

        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty contextual file", path.display())))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let dim = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["contextual", d] => d.parse().map_err(|_| bad(n, "invalid dimension"))?,
            _ => return Err(bad(n, "expected header `contextual <dim>`")),
        };
        let mut out = Self::new(dim);
        while let Some((n, line)) = lines.next() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, count) = match line.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["example", id, count] => (
                    id.to_string(),
                    count.parse::<usize>().map_err(|_| bad(n, "invalid token count"))?,
                ),
                _ => return Err(bad(n, "expected `example <id> <n_tokens>`")),
            };
            let mut rows = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, row) = lines
                    .next()
                    .ok_or_else(|| bad(n, &format!("truncated record for {id}")))?;
                let row = row.map_err(|e| Error::io(path, e))?;
                let values = row
                    .split_whitespace()
                    .map(str::parse::<f32>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(n, "invalid number"))?;
                if values.len() != dim {
                    return Err(bad(n, &format!("expected {dim} values, found {}", values.len())));
                }
                rows.push(values);
            }
            out.records.insert(id, rows);
        }
        Ok(out)
    }

    /// Writes records sorted by id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "contextual {}", self.dim).map_err(io)?;
        let mut ids: Vec<&String> = self.records.keys().collect();
        ids.sort();
        for id in ids {
            let rows = &self.records[id];
            writeln!(out, "example {id} {}", rows.len()).map_err(io)?;
            for row in rows {
                let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

/// Concatenates each token's word vector with its contextual vector.
pub fn attach_contextual(
    id: &str,
    word_vectors: Vec<Vec<f32>>,
    contextual: &ContextualVectors,
) -> Result<Vec<Vec<f32>>> {
    if contextual.dim == 0 {
        return Ok(word_vectors);
    }
    let rows = contextual
        .get(id)
        .ok_or_else(|| Error::data(format!("no contextual vectors for example {id}")))?;
    if rows.len() != word_vectors.len() {
        return Err(Error::data(format!(
            "example {id}: {} contextual rows for {} tokens",
            rows.len(),
            word_vectors.len()
        )));
    }
    Ok(word_vectors
        .into_iter()
        .zip(rows)
        .map(|(mut w, c)| {
            w.extend_from_slice(c);
            w
        })
        .collect())
}

/// Turns an example's tokens into input vectors.
#[derive(Clone, Debug)]
pub struct Featurizer {
    pub words: EmbeddingTable,
    pub contextual: Option<ContextualVectors>,
}

impl Featurizer {
    pub fn new(words: EmbeddingTable) -> Self {
        Self {
            words,
            contextual: None,
        }
    }

    pub fn with_contextual(mut self, contextual: ContextualVectors) -> Self {
        self.contextual = Some(contextual);
        self
    }

    pub fn word_dim(&self) -> usize {
        self.words.dim()
    }

    /// `d + d_c`.
    pub fn dim(&self) -> usize {
        self.words.dim() + self.contextual.as_ref().map_or(0, |c| c.dim())
    }

    pub fn token_vectors(&self, example: &SprExample) -> Result<Vec<Vec<f32>>> {
        let words = self.words.lookup_sequence(&example.tokens);
        match &self.contextual {
            Some(ctx) => attach_contextual(&example.id, words, ctx),
            None => Ok(words),
        }
    }
}
