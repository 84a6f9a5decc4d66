//! Sentence-predicate instances, the one-record-per-line corpus format,
//! noisy-parse stripping, labeled-fraction sampling and the synthetic
//! generator.
//!
//! A record is four TAB-separated `key=value` fields in fixed order:
//!
//! ```text
//! tokens=<words>	pred=<index>	tags=<BIO tags|->	parse=<bracketed tree|->
//! ```
//!
//! `-` marks an absent optional field. Parentheses inside tokens are written
//! as `-LRB-` / `-RRB-`.

// The record sample above shows the real TAB separators.
#![allow(clippy::tabs_in_doc_comments)]

mod synth;
mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::span_algebra::{disagreement_counts, spans_from_tags, SpanSet, TagSet};

pub use synth::{generate_synthetic, GenConfig, NoiseRecord, Synthetic};
pub use tree::{parse_bracketed, parse_spans, random_binary_tree, ParseTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
    Unlabeled,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "unlabeled" => Ok(Split::Unlabeled),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

/// One sentence paired with one predicate position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub predicate_index: usize,
    pub gold_tags: Option<Vec<String>>,
    /// Bracketed constituency tree over `tokens`.
    pub parse: Option<String>,
}

impl Instance {
    pub fn new(
        tokens: Vec<String>,
        predicate_index: usize,
        gold_tags: Option<Vec<String>>,
        parse: Option<String>,
    ) -> Result<Self> {
        let instance = Instance {
            tokens,
            predicate_index,
            gold_tags,
            parse,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(field, message)| Error::Invalid(format!("{field}: {message}")))
    }

    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.tokens.is_empty() {
            return Err(("tokens", "empty sentence".into()));
        }
        if let Some(bad) = self
            .tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(("tokens", format!("token {bad:?} is empty or contains whitespace")));
        }
        if self.predicate_index >= self.tokens.len() {
            return Err((
                "pred",
                format!(
                    "predicate index {} outside sentence of length {}",
                    self.predicate_index,
                    self.tokens.len()
                ),
            ));
        }
        if let Some(tags) = &self.gold_tags {
            if tags.len() != self.tokens.len() {
                return Err((
                    "tags",
                    format!("{} tags for {} tokens", tags.len(), self.tokens.len()),
                ));
            }
        }
        if let Some(parse) = &self.parse {
            if parse.contains(['\t', '\n', '\r']) {
                return Err(("parse", "tree text contains a tab or newline".into()));
            }
            parse_bracketed(parse, self.tokens.len()).map_err(|e| ("parse", e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse_tree(&self) -> Result<Option<ParseTree>> {
        self.parse
            .as_deref()
            .map(|p| parse_bracketed(p, self.tokens.len()))
            .transpose()
    }

    pub fn parse_spans(&self) -> Result<Option<SpanSet>> {
        Ok(self.parse_tree()?.as_ref().map(parse_spans))
    }

    /// Gold argument spans, if gold tags are present.
    pub fn gold_spans(&self, tagset: &TagSet) -> Result<Option<SpanSet>> {
        self.gold_tags
            .as_deref()
            .map(|t| spans_from_tags(t, tagset))
            .transpose()
    }

    /// Whether the gold spans disagree with the gold parse. `None` when either is missing.
    pub fn gold_disagrees(&self, tagset: &TagSet) -> Result<Option<bool>> {
        match (self.gold_spans(tagset)?, self.parse_spans()?) {
            (Some(srl), Some(parse)) => Ok(Some(disagreement_counts(&srl, &parse).0 > 0)),
            _ => Ok(None),
        }
    }

    pub fn to_record(&self) -> String {
        let tokens: Vec<String> = self.tokens.iter().map(|t| escape_token(t)).collect();
        let tags = match &self.gold_tags {
            Some(t) => t.join(" "),
            None => "-".to_string(),
        };
        let parse = match &self.parse {
            Some(p) => p.split_whitespace().collect::<Vec<_>>().join(" "),
            None => "-".to_string(),
        };
        format!(
            "tokens={}\tpred={}\ttags={}\tparse={}",
            tokens.join(" "),
            self.predicate_index,
            tags,
            parse
        )
    }

    /// Parses one record; `line` is only used for error reporting.
    pub fn from_record(record: &str, line: usize) -> Result<Self> {
        let err = |field: &'static str, message: String| Error::Record { line, field, message };
        let fields: Vec<&str> = record.split('\t').collect();
        const KEYS: [&str; 4] = ["tokens", "pred", "tags", "parse"];
        if fields.len() != KEYS.len() {
            return Err(err(
                "record",
                format!("expected 4 TAB-separated fields, found {}", fields.len()),
            ));
        }
        let mut values = [""; 4];
        for (i, (field, key)) in fields.iter().zip(KEYS).enumerate() {
            values[i] = field
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| err(key_name(key), format!("expected `{key}=`")))?;
        }
        let tokens: Vec<String> = values[0].split_whitespace().map(unescape_token).collect();
        let predicate_index = values[1]
            .trim()
            .parse::<usize>()
            .map_err(|e| err("pred", format!("{:?}: {e}", values[1])))?;
        let gold_tags = match values[2].trim() {
            "-" => None,
            t => Some(t.split_whitespace().map(str::to_string).collect()),
        };
        let parse = match values[3].trim() {
            "-" => None,
            p => Some(p.to_string()),
        };
        let instance = Instance {
            tokens,
            predicate_index,
            gold_tags,
            parse,
        };
        instance.check().map_err(|(field, message)| err(field, message))?;
        Ok(instance)
    }
}

fn key_name(key: &str) -> &'static str {
    match key {
        "tokens" => "tokens",
        "pred" => "pred",
        "tags" => "tags",
        _ => "parse",
    }
}

fn escape_token(token: &str) -> String {
    token.replace('(', "-LRB-").replace(')', "-RRB-")
}

fn unescape_token(token: &str) -> String {
    token.replace("-LRB-", "(").replace("-RRB-", ")")
}

/// An ordered collection of instances from one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn new(split: Split, instances: Vec<Instance>) -> Self {
        Corpus { split, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    /// Checks the split-level contract: unlabeled instances carry a parse and no gold tags.
    pub fn validate(&self) -> Result<()> {
        if self.split == Split::Unlabeled {
            for (i, inst) in self.instances.iter().enumerate() {
                if inst.gold_tags.is_some() {
                    return Err(Error::Contract(format!("unlabeled instance {i} carries gold tags")));
                }
                if inst.parse.is_none() {
                    return Err(Error::Contract(format!("unlabeled instance {i} has no parse")));
                }
            }
        }
        Ok(())
    }

    /// Tag set covering every role in the gold tags.
    pub fn tagset(&self) -> Result<TagSet> {
        TagSet::from_tag_sequences(self.instances.iter().filter_map(|i| i.gold_tags.as_deref()))
    }

    pub fn parse_str(text: &str, split: Split) -> Result<Self> {
        let mut instances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            instances.push(Instance::from_record(line, i + 1)?);
        }
        let corpus = Corpus { split, instances };
        if split == Split::Unlabeled {
            for (i, inst) in corpus.instances.iter().enumerate() {
                if inst.parse.is_none() {
                    return Err(Error::Record {
                        line: line_of(text, i),
                        field: "parse",
                        message: "unlabeled instances must carry a parse".into(),
                    });
                }
            }
        }
        Ok(corpus)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&inst.to_record());
            out.push('\n');
        }
        out
    }
}

// Line number of the `index`-th non-blank line.
fn line_of(text: &str, index: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .nth(index)
        .map(|(i, _)| i + 1)
        .unwrap_or(0)
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Instance;
    type IntoIter = std::slice::Iter<'a, Instance>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}

pub fn read_corpus(path: impl AsRef<Path>, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse_str(&text, split)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for (i, inst) in corpus.instances.iter().enumerate() {
        inst.validate()
            .map_err(|e| Error::Invalid(format!("instance {i}: {e}")))?;
    }
    fs::write(path, corpus.to_text()).map_err(|e| Error::io(path, e))
}

/// Indices of instances whose gold spans disagree with their gold parse.
pub fn noisy_instances(corpus: &Corpus, tagset: &TagSet) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, inst) in corpus.instances.iter().enumerate() {
        if inst.gold_disagrees(tagset)? == Some(true) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Removes the parse from every instance whose gold spans disagree with it.
/// Everything else, including instance order and count, is untouched.
pub fn strip_noisy_parses(corpus: &Corpus, tagset: &TagSet) -> Result<Corpus> {
    let mut out = corpus.clone();
    for i in noisy_instances(corpus, tagset)? {
        out.instances[i].parse = None;
    }
    Ok(out)
}

/// A labeled subset and its complement.
#[derive(Clone, Debug)]
pub struct Sample {
    pub labeled: Corpus,
    /// Complement of `labeled` with gold tags removed, split `unlabeled`.
    pub remainder: Corpus,
    pub labeled_indices: Vec<usize>,
    pub remainder_indices: Vec<usize>,
}

/// Number of instances a fraction selects: `ceil(fraction * n)`, guarding
/// against representation error in products such as `0.1 * 100`.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 * exact.max(1.0) {
        rounded
    } else {
        exact.ceil()
    };
    (count as usize).min(n)
}

/// Uniform sample of `ceil(fraction * N)` instances without replacement,
/// deterministic in `seed`. Indices in both parts keep corpus order.
pub fn sample_fraction(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Sample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction {fraction} not in (0, 1]")));
    }
    let n = corpus.len();
    let k = fraction_count(fraction, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labeled_indices = order[..k].to_vec();
    let mut remainder_indices = order[k..].to_vec();
    labeled_indices.sort_unstable();
    remainder_indices.sort_unstable();
    let labeled = Corpus::new(
        corpus.split,
        labeled_indices.iter().map(|&i| corpus.instances[i].clone()).collect(),
    );
    let remainder = Corpus::new(
        Split::Unlabeled,
        remainder_indices
            .iter()
            .map(|&i| Instance {
                gold_tags: None,
                ..corpus.instances[i].clone()
            })
            .collect(),
    );
    Ok(Sample {
        labeled,
        remainder,
        labeled_indices,
        remainder_indices,
    })
}

/// Draws `size` instances (or all, if fewer) from an unlabeled pool,
/// keeping only instances that carry a parse.
pub fn draw_pool(remainder: &Corpus, size: usize, seed: u64) -> Corpus {
    let mut candidates: Vec<&Instance> = remainder.instances.iter().filter(|i| i.parse.is_some()).collect();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    candidates.truncate(size);
    Corpus::new(
        Split::Unlabeled,
        candidates
            .into_iter()
            .map(|i| Instance {
                gold_tags: None,
                ..i.clone()
            })
            .collect(),
    )
}
