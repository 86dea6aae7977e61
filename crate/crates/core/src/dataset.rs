//! Annotated records, label transforms, and fixed-length input plans.
//!
//! Records are newline-delimited JSON objects:
//!
//! ```json
//! {"id": "s1", "split": "train", "tokens": ["The", "cat", "slept"],
//!  "predicate_indices": [2], "argument_span": [0, 1],
//!  "annotations": {"awareness": [4], "volitional": ["NA"]}}
//! ```
//!
//! Indices are zero-based; `argument_span` is inclusive on both ends. Each
//! property of the active inventory must carry exactly as many responses as
//! the inventory expects (1 for SPR1, 2 for SPR2).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::Tensor;
use crate::embeddings::Featurizer;
use crate::{Error, Result};

pub const MAX_SEQ_LEN: usize = 30;

const SPR1_PROPERTIES: [&str; 18] = [
    "awareness",
    "change_of_location",
    "change_of_state",
    "changes_possession",
    "created",
    "destroyed",
    "existed_after",
    "existed_before",
    "existed_during",
    "exists_as_physical",
    "instigation",
    "location_of_event",
    "makes_physical_contact",
    "manipulated_by_another",
    "predicate_changed_argument",
    "sentient",
    "stationary",
    "volition",
];

const SPR2_PROPERTIES: [&str; 14] = [
    "awareness",
    "change_of_location",
    "change_of_possession",
    "change_of_state",
    "change_of_state_continuous",
    "existed_after",
    "existed_before",
    "existed_during",
    "instigation",
    "partitive",
    "sentient",
    "volition",
    "was_for_benefit",
    "was_used",
];

/// Ordered property names. Output heads are positional, so the order is part
/// of a trained model's identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyInventory {
    name: String,
    properties: Vec<String>,
    responses_per_property: usize,
}

impl PropertyInventory {
    pub fn new(
        name: impl Into<String>,
        properties: Vec<String>,
        responses_per_property: usize,
    ) -> Result<Self> {
        if properties.is_empty() {
            return Err(Error::config("property inventory is empty"));
        }
        if !(1..=2).contains(&responses_per_property) {
            return Err(Error::config(format!(
                "responses per property must be 1 or 2, got {responses_per_property}"
            )));
        }
        let mut seen = BTreeSet::new();
        for p in &properties {
            if p.trim().is_empty() || p.contains(['\n', '\r']) {
                return Err(Error::config(format!("invalid property name {p:?}")));
            }
            if !seen.insert(p.as_str()) {
                return Err(Error::config(format!("duplicate property {p:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            properties,
            responses_per_property,
        })
    }

    /// The 18 singly-annotated properties.
    pub fn spr1() -> Self {
        Self::new("spr1", SPR1_PROPERTIES.map(String::from).to_vec(), 1).unwrap()
    }

    /// The 14 doubly-annotated properties.
    pub fn spr2() -> Self {
        Self::new("spr2", SPR2_PROPERTIES.map(String::from).to_vec(), 2).unwrap()
    }

    /// Inventory file: an optional `responses <n>` line, then one property
    /// name per line. Blank lines and `#` comments are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut responses = 1;
        let mut names = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(n) = line.strip_prefix("responses ") {
                responses = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("{}: bad responses line", path.display())))?;
                continue;
            }
            names.push(line.to_string());
        }
        let name = path
            .file_stem()
            .map_or("custom".into(), |s| s.to_string_lossy().into_owned());
        Self::new(name, names, responses)
    }

    /// `spr1`, `spr2`, or a path to an inventory file.
    pub fn resolve(name: &str) -> Result<Self> {
        match name {
            "spr1" => Ok(Self::spr1()),
            "spr2" => Ok(Self::spr2()),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn responses_per_property(&self) -> usize {
        self.responses_per_property
    }

    pub fn position(&self, property: &str) -> Option<usize> {
        self.properties.iter().position(|p| p == property)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw annotator response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Response {
    Likert(u8),
    NotApplicable,
}

impl Response {
    /// Likert value with NA read as 1.
    pub fn as_likert(self) -> f32 {
        match self {
            Response::Likert(v) => v as f32,
            Response::NotApplicable => 1.0,
        }
    }
}

impl Serialize for Response {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Response::Likert(v) => s.serialize_u8(*v),
            Response::NotApplicable => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for Response {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v @ 1..=5) => Ok(Response::Likert(v as u8)),
            Raw::Int(v) => Err(serde::de::Error::custom(format!("Likert value {v} outside 1..=5"))),
            Raw::Str(s) if s == "NA" => Ok(Response::NotApplicable),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid response {s:?}"))),
        }
    }
}

/// A (sentence, predicate, argument) tuple with per-property responses in
/// inventory order.
#[derive(Clone, Debug, PartialEq)]
pub struct SprExample {
    pub id: String,
    pub split: Split,
    pub tokens: Vec<String>,
    pub predicate_indices: Vec<usize>,
    /// Inclusive `(start, end)`.
    pub argument_span: (usize, usize),
    pub annotations: Vec<Vec<Response>>,
}

impl SprExample {
    pub fn argument_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.argument_span.0..=self.argument_span.1
    }

    pub fn overlaps(&self) -> bool {
        self.predicate_indices
            .iter()
            .any(|i| self.argument_indices().contains(i))
    }

    pub fn multilabel_targets(&self) -> Vec<bool> {
        self.annotations.iter().map(|r| to_multilabel(r)).collect()
    }

    pub fn regression_targets(&self) -> Vec<f32> {
        self.annotations.iter().map(|r| to_regression_target(r)).collect()
    }

    pub fn validate(&self, inventory: &PropertyInventory) -> Result<()> {
        let fail = |msg: String| Err(Error::data(format!("record {}: {msg}", self.id)));
        let n = self.tokens.len();
        if n == 0 {
            return fail("no tokens".into());
        }
        if self.predicate_indices.is_empty() {
            return fail("no predicate indices".into());
        }
        if let Some(i) = self.predicate_indices.iter().find(|&&i| i >= n) {
            return fail(format!("predicate index {i} out of range for {n} tokens"));
        }
        let (start, end) = self.argument_span;
        if start > end {
            return fail(format!("argument span [{start}, {end}] is empty"));
        }
        if end >= n {
            return fail(format!("argument index {end} out of range for {n} tokens"));
        }
        if self.annotations.len() != inventory.len() {
            return fail(format!(
                "{} annotated properties, inventory has {}",
                self.annotations.len(),
                inventory.len()
            ));
        }
        let want = inventory.responses_per_property();
        for (name, responses) in inventory.properties().iter().zip(&self.annotations) {
            if responses.len() != want {
                return fail(format!(
                    "property {name:?} has {} responses, expected {want}",
                    responses.len()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    split: Option<String>,
    tokens: Vec<String>,
    predicate_indices: Vec<usize>,
    argument_span: [usize; 2],
    annotations: BTreeMap<String, Vec<Response>>,
}

/// Parses one record line against `inventory`.
pub fn parse_record(line: &str, inventory: &PropertyInventory) -> Result<SprExample> {
    let record: Record = serde_json::from_str(line).map_err(|e| {
        // Recover the id for the diagnostic when the JSON is otherwise readable.
        let id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(String::from))
            .unwrap_or_else(|| "<unknown>".into());
        Error::data(format!("record {id}: {e}"))
    })?;
    let id = record.id;
    let split = record
        .split
        .ok_or_else(|| Error::data(format!("record {id}: missing split tag")))?
        .parse::<Split>()
        .map_err(|e| Error::data(format!("record {id}: {e}")))?;
    let mut annotations: Vec<Option<Vec<Response>>> = vec![None; inventory.len()];
    for (name, responses) in record.annotations {
        let pos = inventory
            .position(&name)
            .ok_or_else(|| Error::data(format!("record {id}: unknown property {name:?}")))?;
        annotations[pos] = Some(responses);
    }
    let annotations = annotations
        .into_iter()
        .zip(inventory.properties())
        .map(|(a, name)| {
            a.ok_or_else(|| Error::data(format!("record {id}: missing property {name:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let example = SprExample {
        id,
        split,
        tokens: record.tokens,
        predicate_indices: record.predicate_indices,
        argument_span: (record.argument_span[0], record.argument_span[1]),
        annotations,
    };
    example.validate(inventory)?;
    if example.overlaps() {
        log::warn!(
            "record {}: predicate and argument overlap; argument marker wins",
            example.id
        );
    }
    Ok(example)
}

pub fn parse_dataset(path: &Path, inventory: &PropertyInventory) -> Result<Vec<SprExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example = parse_record(&line, inventory)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(example);
    }
    Ok(out)
}

pub fn serialize_record(example: &SprExample, inventory: &PropertyInventory) -> String {
    let record = Record {
        id: example.id.clone(),
        split: Some(example.split.as_str().to_string()),
        tokens: example.tokens.clone(),
        predicate_indices: example.predicate_indices.clone(),
        argument_span: [example.argument_span.0, example.argument_span.1],
        annotations: inventory
            .properties()
            .iter()
            .cloned()
            .zip(example.annotations.iter().cloned())
            .collect(),
    };
    serde_json::to_string(&record).expect("record serializes")
}

pub fn write_dataset(
    path: &Path,
    examples: &[SprExample],
    inventory: &PropertyInventory,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for ex in examples {
        writeln!(out, "{}", serialize_record(ex, inventory)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Binary label for one property: responses are read as Likert values with
/// NA = 1, averaged, and `≥ 4` means the property applies. For a single
/// response this is the {NA,1,2,3} → −, {4,5} → + collapse.
pub fn to_multilabel(responses: &[Response]) -> bool {
    to_regression_target(responses) >= 4.0
}

/// Likert target in `[1, 5]`: NA = 1, multiple responses averaged.
pub fn to_regression_target(responses: &[Response]) -> f32 {
    if responses.is_empty() {
        return 1.0;
    }
    responses.iter().map(|r| r.as_likert()).sum::<f32>() / responses.len() as f32
}

/// Position tag of one input slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Pad,
    Argument,
    Predicate,
    Other,
}

/// Which original token fills each of the `T` slots, and its tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipPlan {
    /// `None` for padding. Padding only occurs as a prefix.
    pub slots: Vec<Option<usize>>,
    pub tags: Vec<Tag>,
}

/// Fits a sentence into exactly `max_len` slots.
///
/// While too long: drop tokens from the left end while they precede every
/// predicate/argument token, then from the right end while they follow every
/// one, then any remaining non-predicate/argument token, farthest from the
/// argument span first. Short sequences are pre-padded.
pub fn clip_and_pad(
    n_tokens: usize,
    predicate: &[usize],
    argument: (usize, usize),
    max_len: usize,
) -> Result<ClipPlan> {
    if n_tokens == 0 {
        return Err(Error::data("cannot clip an empty sentence"));
    }
    let is_arg = |i: usize| (argument.0..=argument.1).contains(&i);
    let marked: BTreeSet<usize> = predicate
        .iter()
        .copied()
        .chain(argument.0..=argument.1)
        .collect();
    if let Some(&bad) = marked.iter().find(|&&i| i >= n_tokens) {
        return Err(Error::data(format!("index {bad} out of range for {n_tokens} tokens")));
    }
    if marked.len() > max_len {
        return Err(Error::data(format!(
            "{} predicate/argument tokens cannot fit into {max_len} slots",
            marked.len()
        )));
    }
    let lo = *marked.first().expect("argument span is non-empty");
    let hi = *marked.last().expect("argument span is non-empty");

    let mut start = 0;
    let mut end = n_tokens; // exclusive
    while end - start > max_len && start < lo {
        start += 1;
    }
    while end - start > max_len && end - 1 > hi {
        end -= 1;
    }
    let mut kept: Vec<usize> = (start..end).collect();
    if kept.len() > max_len {
        let distance = |i: usize| {
            if i < argument.0 {
                argument.0 - i
            } else {
                i.saturating_sub(argument.1)
            }
        };
        let mut removable: Vec<usize> = kept.iter().copied().filter(|i| !marked.contains(i)).collect();
        // Farthest first; on ties the leftmost goes first.
        removable.sort_by_key(|&i| (std::cmp::Reverse(distance(i)), i));
        let excess = kept.len() - max_len;
        let drop: BTreeSet<usize> = removable.into_iter().take(excess).collect();
        kept.retain(|i| !drop.contains(i));
    }

    let pad = max_len - kept.len();
    let mut slots = vec![None; pad];
    slots.extend(kept.into_iter().map(Some));
    let tags = slots
        .iter()
        .map(|s| match *s {
            None => Tag::Pad,
            Some(i) if is_arg(i) => Tag::Argument,
            Some(i) if predicate.contains(&i) => Tag::Predicate,
            Some(_) => Tag::Other,
        })
        .collect();
    Ok(ClipPlan { slots, tags })
}

/// Model-ready example: `T × d` inputs with zero rows at padding, slot tags,
/// and both target encodings.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub id: String,
    pub tags: Vec<Tag>,
    pub inputs: Tensor<f32>,
    pub binary_targets: Vec<bool>,
    pub likert_targets: Vec<f32>,
}

pub fn prepare(
    example: &SprExample,
    featurizer: &Featurizer,
    max_len: usize,
) -> Result<PreparedExample> {
    let plan = clip_and_pad(
        example.tokens.len(),
        &example.predicate_indices,
        example.argument_span,
        max_len,
    )
    .map_err(|e| Error::data(format!("record {}: {e}", example.id)))?;
    let vectors = featurizer.token_vectors(example)?;
    let d = featurizer.dim();
    let mut data = Vec::with_capacity(max_len * d);
    for slot in &plan.slots {
        match slot {
            Some(i) => data.extend_from_slice(&vectors[*i]),
            None => data.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    Ok(PreparedExample {
        id: example.id.clone(),
        tags: plan.tags,
        inputs: Tensor::matrix(max_len, d, data)?,
        binary_targets: example.multilabel_targets(),
        likert_targets: example.regression_targets(),
    })
}

pub fn prepare_all(
    examples: &[SprExample],
    featurizer: &Featurizer,
    max_len: usize,
) -> Result<Vec<PreparedExample>> {
    examples
        .iter()
        .map(|e| prepare(e, featurizer, max_len))
        .collect()
}

pub fn split_of(examples: &[SprExample], split: Split) -> Vec<SprExample> {
    examples.iter().filter(|e| e.split == split).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Response::{Likert, NotApplicable as NA};

    fn tiny_inventory() -> PropertyInventory {
        PropertyInventory::new("t", vec!["p".into(), "q".into()], 1).unwrap()
    }

    #[test]
    fn inventories() {
        assert_eq!(PropertyInventory::spr1().len(), 18);
        assert_eq!(PropertyInventory::spr2().len(), 14);
        assert_eq!(PropertyInventory::spr2().responses_per_property(), 2);
        assert!(PropertyInventory::new("x", vec!["a".into(), "a".into()], 1).is_err());
    }

    #[test]
    fn minimal_record_parses() {
        let line = r#"{"id":"m","split":"train","tokens":["a","b","c"],"predicate_indices":[1],"argument_span":[2,2],"annotations":{"p":["NA"],"q":["NA"]}}"#;
        let ex = parse_record(line, &tiny_inventory()).unwrap();
        assert_eq!(ex.predicate_indices, vec![1]);
        assert_eq!(ex.argument_span, (2, 2));
        assert_eq!(ex.annotations, vec![vec![NA], vec![NA]]);
    }

    #[test]
    fn record_errors_name_the_record() {
        let inv = tiny_inventory();
        let out_of_range = r#"{"id":"r9","split":"dev","tokens":["a","b","c","d","e"],"predicate_indices":[1],"argument_span":[9,9],"annotations":{"p":[1],"q":[1]}}"#;
        let err = parse_record(out_of_range, &inv).unwrap_err().to_string();
        assert!(err.contains("r9") && err.contains('9'), "{err}");

        let unknown = r#"{"id":"u1","split":"dev","tokens":["a"],"predicate_indices":[0],"argument_span":[0,0],"annotations":{"p":[1],"q":[1],"zz":[2]}}"#;
        let err = parse_record(unknown, &inv).unwrap_err().to_string();
        assert!(err.contains("u1") && err.contains("zz"), "{err}");

        let no_split = r#"{"id":"s0","tokens":["a"],"predicate_indices":[0],"argument_span":[0,0],"annotations":{"p":[1],"q":[1]}}"#;
        let err = parse_record(no_split, &inv).unwrap_err().to_string();
        assert!(err.contains("s0") && err.contains("split"), "{err}");

        let bad_likert = r#"{"id":"b6","split":"dev","tokens":["a"],"predicate_indices":[0],"argument_span":[0,0],"annotations":{"p":[6],"q":[1]}}"#;
        assert!(parse_record(bad_likert, &inv).unwrap_err().to_string().contains("b6"));

        let wrong_count = r#"{"id":"w2","split":"dev","tokens":["a"],"predicate_indices":[0],"argument_span":[0,0],"annotations":{"p":[1,2],"q":[1]}}"#;
        assert!(parse_record(wrong_count, &inv).unwrap_err().to_string().contains("w2"));
    }

    #[test]
    fn spr1_collapse() {
        assert!(to_multilabel(&[Likert(4)]));
        assert!(to_multilabel(&[Likert(5)]));
        assert!(!to_multilabel(&[NA]));
        for v in 1..=3 {
            assert!(!to_multilabel(&[Likert(v)]));
        }
    }

    #[test]
    fn spr2_average_then_threshold() {
        assert!(to_multilabel(&[Likert(4), Likert(5)]));
        assert!(!to_multilabel(&[Likert(3), Likert(4)]));
        assert!(!to_multilabel(&[NA, Likert(5)]));
    }

    #[test]
    fn regression_targets() {
        assert_eq!(to_regression_target(&[NA]), 1.0);
        assert_eq!(to_regression_target(&[Likert(5)]), 5.0);
        assert_eq!(to_regression_target(&[NA, Likert(5)]), 3.0);
    }

    #[test]
    fn short_sentence_is_prepadded() {
        let plan = clip_and_pad(10, &[3], (5, 6), 30).unwrap();
        assert_eq!(plan.slots.len(), 30);
        assert!(plan.slots[..20].iter().all(Option::is_none));
        assert_eq!(plan.slots[20], Some(0));
        assert_eq!(plan.tags[23], Tag::Predicate);
        assert_eq!(plan.tags[25], Tag::Argument);
        assert_eq!(plan.tags[26], Tag::Argument);
        assert_eq!(plan.tags[27], Tag::Other);
    }

    #[test]
    fn long_sentence_clips_left_first() {
        let plan = clip_and_pad(40, &[35], (36, 38), 30).unwrap();
        // 10 tokens removed from the left, nothing from the right.
        assert_eq!(plan.slots.first(), Some(&Some(10)));
        assert_eq!(plan.slots.last(), Some(&Some(39)));
        assert_eq!(plan.tags[25], Tag::Predicate);
    }

    #[test]
    fn left_then_right_clipping() {
        let plan = clip_and_pad(50, &[5], (8, 9), 30).unwrap();
        assert_eq!(plan.slots.first(), Some(&Some(5)));
        assert_eq!(plan.slots.last(), Some(&Some(34)));
    }

    #[test]
    fn fallback_removes_interior_tokens() {
        let plan = clip_and_pad(60, &[0], (59, 59), 30).unwrap();
        let kept: Vec<usize> = plan.slots.iter().map(|s| s.unwrap()).collect();
        assert_eq!(kept.len(), 30);
        assert!(kept.contains(&0) && kept.contains(&59));
        // Tokens nearest the argument survive.
        assert!(kept.contains(&58));
        assert!(!kept.contains(&1));
    }

    #[test]
    fn exact_length_unchanged() {
        let plan = clip_and_pad(30, &[0], (29, 29), 30).unwrap();
        let expected: Vec<Option<usize>> = (0..30).map(Some).collect();
        assert_eq!(plan.slots, expected);
    }

    #[test]
    fn overlap_prefers_argument_tag() {
        let plan = clip_and_pad(3, &[1], (1, 2), 3).unwrap();
        assert_eq!(plan.tags, vec![Tag::Other, Tag::Argument, Tag::Argument]);
    }

    #[test]
    fn too_many_marked_tokens() {
        assert!(clip_and_pad(40, &[0], (1, 30), 30).is_err());
    }

    proptest! {
        #[test]
        fn record_roundtrip(
            tokens in prop::collection::vec("[a-z]{1,6}", 1..12),
            raw in prop::collection::vec(prop::option::of(1u8..=5), 2),
            pick in any::<(usize, usize, usize)>(),
        ) {
            let n = tokens.len();
            let start = pick.0 % n;
            let end = start + pick.1 % (n - start);
            let example = SprExample {
                id: "rt".into(),
                split: Split::Dev,
                tokens,
                predicate_indices: vec![pick.2 % n],
                argument_span: (start, end),
                annotations: raw.iter().map(|r| vec![r.map_or(NA, Likert)]).collect(),
            };
            let inv = tiny_inventory();
            let once = parse_record(&serialize_record(&example, &inv), &inv).unwrap();
            let twice = parse_record(&serialize_record(&once, &inv), &inv).unwrap();
            prop_assert_eq!(&once, &example);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn clipping_preserves_order_and_marked_tokens(
            n in 1usize..80,
            seed in any::<(usize, usize, usize)>(),
        ) {
            let pred = seed.0 % n;
            let start = seed.1 % n;
            let end = (start + seed.2 % 4).min(n - 1);
            let plan = clip_and_pad(n, &[pred], (start, end), 30).unwrap();
            prop_assert_eq!(plan.slots.len(), 30);
            let first_real = plan.slots.iter().position(Option::is_some).unwrap();
            prop_assert!(plan.slots[first_real..].iter().all(Option::is_some));
            let kept: Vec<usize> = plan.slots.iter().flatten().copied().collect();
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(kept.contains(&pred));
            for i in start..=end {
                prop_assert!(kept.contains(&i));
            }
            prop_assert!(plan.tags.contains(&Tag::Argument));
            prop_assert!(plan.tags.contains(&Tag::Predicate) || (start..=end).contains(&pred));
        }

        #[test]
        fn regression_and_multilabel_agree(r in prop::option::of(1u8..=5)) {
            let resp = [r.map_or(NA, Likert)];
            prop_assert_eq!(to_regression_target(&resp) >= 4.0, to_multilabel(&resp));
        }
    }
}
