//! Synthetic sentence-predicate corpora with controllable parse noise.
//!
//! Each sentence gets a random binary-branching tree. Argument candidates
//! are the maximal constituents hanging off the predicate's path to the root
//! (siblings of its ancestors), so clean gold spans are always constituents.
//! Word identities carry three kinds of evidence:
//!
//! - role-specific begin markers and shared end markers at gold span edges,
//! - filler words whose class reflects how high in the tree the boundary
//!   to their left sits,
//! - occasional distractor markers outside any span.
//!
//! Noise moves one boundary of a gold span by one token so that it stops
//! being a constituent; markers follow the moved span, the tree does not.
//!
//! Every instance draws from its own RNG streams keyed by `(seed, index)`,
//! so the structure of instance `i` does not depend on the noise rate.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{parse_spans, random_binary_tree, ParseTree};
use super::{Corpus, Instance, Split};
use crate::error::{Error, Result};
use crate::span_algebra::{tags_from_spans, LabeledSpan, SpanSet, PREDICATE_ROLE};

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub n_instances: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Argument roles; the first is placed left of the predicate, the rest to its right.
    pub roles: Vec<String>,
    /// Probability that each argument role is realized when a candidate exists.
    pub role_rate: f64,
    pub min_span_len: usize,
    pub max_span_len: usize,
    /// Distinct begin-marker words per role (and shared end-marker words).
    pub markers_per_role: usize,
    /// Probability that a span edge carries its marker word.
    pub marker_rate: f64,
    /// Probability that an outside token is replaced by a random begin marker.
    pub distractor_rate: f64,
    pub predicate_words: usize,
    pub words_per_class: usize,
    /// Number of boundary-depth classes for filler words.
    pub depth_classes: usize,
    /// Per-span probability of boundary corruption.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_instances: 1000,
            min_len: 8,
            max_len: 16,
            roles: vec!["ARG0".into(), "ARG1".into(), "ARG2".into()],
            role_rate: 0.85,
            min_span_len: 2,
            max_span_len: 8,
            markers_per_role: 2,
            marker_rate: 0.8,
            distractor_rate: 0.05,
            predicate_words: 3,
            words_per_class: 3,
            depth_classes: 4,
            noise_rate: 0.0,
            seed: 1,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.noise_rate) {
            return Err(Error::Argument(format!("noise rate {} not in [0, 1]", self.noise_rate)));
        }
        for (name, r) in [
            ("role_rate", self.role_rate),
            ("marker_rate", self.marker_rate),
            ("distractor_rate", self.distractor_rate),
        ] {
            if !rate_ok(r) {
                return Err(Error::Argument(format!("{name} {r} not in [0, 1]")));
            }
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return Err(Error::Argument(format!(
                "sentence lengths [{}, {}] must satisfy 2 <= min <= max",
                self.min_len, self.max_len
            )));
        }
        if self.min_span_len < 1 || self.max_span_len < self.min_span_len {
            return Err(Error::Argument(format!(
                "span lengths [{}, {}] must satisfy 1 <= min <= max",
                self.min_span_len, self.max_span_len
            )));
        }
        if self.min_span_len > self.max_len - 1 {
            return Err(Error::Argument(format!(
                "role spans of length >= {} cannot fit beside a predicate in sentences of length <= {}",
                self.min_span_len, self.max_len
            )));
        }
        if self.roles.is_empty() {
            return Err(Error::Argument("at least one argument role is required".into()));
        }
        if self.roles.iter().any(|r| r == PREDICATE_ROLE) {
            return Err(Error::Argument(format!("{PREDICATE_ROLE} is reserved for the predicate")));
        }
        if self.markers_per_role == 0 || self.predicate_words == 0 || self.words_per_class == 0 || self.depth_classes == 0 {
            return Err(Error::Argument("vocabulary sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One corrupted gold span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseRecord {
    pub instance: usize,
    pub role: String,
    pub original: (usize, usize),
    pub perturbed: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub ledger: Vec<NoiseRecord>,
}

impl Synthetic {
    /// Distinct indices of instances with at least one corrupted span.
    pub fn corrupted_instances(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.ledger.iter().map(|r| r.instance).collect();
        out.dedup();
        out
    }

    /// Ledger as TAB-separated lines with a header.
    pub fn ledger_text(&self) -> String {
        let mut out = String::from("instance\trole\toriginal_start\toriginal_end\tperturbed_start\tperturbed_end\n");
        for r in &self.ledger {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.instance, r.role, r.original.0, r.original.1, r.perturbed.0, r.perturbed.1
            ));
        }
        out
    }
}

const STRUCTURE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const TOKEN_STREAM: u64 = 2;

fn instance_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Generates `config.n_instances` instances into the given split.
pub fn generate_synthetic(config: &GenConfig, split: Split) -> Result<Synthetic> {
    config.validate()?;
    let mut instances = Vec::with_capacity(config.n_instances);
    let mut ledger = Vec::new();
    for index in 0..config.n_instances {
        let (instance, records) = generate_one(config, index)?;
        if split == Split::Unlabeled {
            instances.push(Instance {
                gold_tags: None,
                ..instance
            });
        } else {
            instances.push(instance);
        }
        ledger.extend(records);
    }
    Ok(Synthetic {
        corpus: Corpus::new(split, instances),
        ledger,
    })
}

const MAX_ATTEMPTS: usize = 200;

struct Structure {
    n: usize,
    tree: ParseTree,
    predicate: usize,
    spans: Vec<(usize, usize, usize)>, // (start, end, role)
}

/// Draws trees until one admits at least one argument span.
fn draw_structure(config: &GenConfig, index: usize) -> Result<Structure> {
    let mut rng = instance_rng(config.seed, index, STRUCTURE_STREAM);
    for _ in 0..MAX_ATTEMPTS {
        let n = rng.gen_range(config.min_len..=config.max_len);
        let placeholder: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let tree = random_binary_tree(&placeholder, &mut rng);
        let predicate = rng.gen_range(0..n);

        let fits = |&(s, e): &(usize, usize)| {
            let len = e - s + 1;
            len >= config.min_span_len && len <= config.max_span_len
        };
        let candidates = argument_candidates(&tree, predicate);
        let mut left: Vec<(usize, usize)> = candidates.iter().copied().filter(|c| c.1 < predicate && fits(c)).collect();
        let mut right: Vec<(usize, usize)> = candidates.iter().copied().filter(|c| c.0 > predicate && fits(c)).collect();
        left.shuffle(&mut rng);
        right.shuffle(&mut rng);

        let mut spans = Vec::new();
        if rng.gen_bool(config.role_rate) {
            if let Some((s, e)) = left.pop() {
                spans.push((s, e, 0));
            }
        }
        let mut right_spans = Vec::new();
        for _ in 1..config.roles.len() {
            if rng.gen_bool(config.role_rate) {
                if let Some(c) = right.pop() {
                    right_spans.push(c);
                }
            }
        }
        // Right-side roles are numbered in surface order.
        right_spans.sort_unstable();
        spans.extend(right_spans.into_iter().enumerate().map(|(k, (s, e))| (s, e, k + 1)));
        if !spans.is_empty() {
            return Ok(Structure {
                n,
                tree,
                predicate,
                spans,
            });
        }
    }
    Err(Error::Argument(format!(
        "no argument span of length {}..={} found for instance {index} after {MAX_ATTEMPTS} attempts",
        config.min_span_len, config.max_span_len
    )))
}

fn generate_one(config: &GenConfig, index: usize) -> Result<(Instance, Vec<NoiseRecord>)> {
    let Structure {
        n,
        tree,
        predicate,
        mut spans,
    } = draw_structure(config, index)?;
    let parse = parse_spans(&tree);

    // Boundary noise.
    let mut noise_rng = instance_rng(config.seed, index, NOISE_STREAM);
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| spans[i].0);
    for i in order {
        let (s, e, role) = spans[i];
        let draw: f64 = noise_rng.gen();
        if s == e || draw >= config.noise_rate {
            continue;
        }
        let mut moves = [(1isize, 0isize), (0, -1), (-1, 0), (0, 1)];
        moves.shuffle(&mut noise_rng);
        for (ds, de) in moves {
            let ns = s as isize + ds;
            let ne = e as isize + de;
            if ns < 0 || ne >= n as isize || ne - ns < 1 {
                continue;
            }
            let (ns, ne) = (ns as usize, ne as usize);
            if parse.contains_bounds(ns, ne) || (ns..=ne).contains(&predicate) {
                continue;
            }
            let clash = spans
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && ns <= o.1 && o.0 <= ne);
            if clash {
                continue;
            }
            spans[i] = (ns, ne, role);
            records.push(NoiseRecord {
                instance: index,
                role: config.roles[role].clone(),
                original: (s, e),
                perturbed: (ns, ne),
            });
            break;
        }
    }

    // Words.
    let mut tok_rng = instance_rng(config.seed, index, TOKEN_STREAM);
    let gaps = gap_depths(&tree, n);
    let mut tokens: Vec<String> = (0..n)
        .map(|i| {
            let class = if i == 0 { 0 } else { gaps[i - 1].min(config.depth_classes - 1) };
            format!("c{}w{}", class, tok_rng.gen_range(0..config.words_per_class))
        })
        .collect();
    let mut covered = vec![false; n];
    covered[predicate] = true;
    for &(s, e, role) in &spans {
        for c in &mut covered[s..=e] {
            *c = true;
        }
        if tok_rng.gen_bool(config.marker_rate) {
            tokens[s] = begin_marker(&config.roles[role], tok_rng.gen_range(0..config.markers_per_role));
        }
        if e > s && tok_rng.gen_bool(config.marker_rate) {
            tokens[e] = format!("end{}", tok_rng.gen_range(0..config.markers_per_role));
        }
    }
    for i in 0..n {
        if !covered[i] && tok_rng.gen_bool(config.distractor_rate) {
            let role = tok_rng.gen_range(0..config.roles.len());
            tokens[i] = begin_marker(&config.roles[role], tok_rng.gen_range(0..config.markers_per_role));
        }
    }
    tokens[predicate] = format!("verb{}", tok_rng.gen_range(0..config.predicate_words));

    let mut labeled: Vec<LabeledSpan> = spans
        .iter()
        .map(|&(s, e, role)| LabeledSpan::role(s, e, config.roles[role].clone()))
        .collect();
    labeled.push(LabeledSpan {
        start: predicate,
        end: predicate,
        label: Some(PREDICATE_ROLE.to_string()),
        predicate: true,
    });
    let tags = tags_from_spans(&SpanSet::srl(labeled)?, n)?;

    let parse_text = relabel_leaves(&tree, &tokens).to_bracketed();
    let instance = Instance::new(tokens, predicate, Some(tags), Some(parse_text))?;
    Ok((instance, records))
}

fn begin_marker(role: &str, k: usize) -> String {
    format!("{}b{}", role.to_ascii_lowercase(), k)
}

/// Siblings of every node on the path from the predicate leaf to the root.
fn argument_candidates(tree: &ParseTree, predicate: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut node = tree;
    loop {
        match node {
            ParseTree::Leaf { .. } => break,
            ParseTree::Node { children, .. } => {
                let mut next = None;
                for c in children {
                    let (s, e) = c.span();
                    if (s..=e).contains(&predicate) {
                        next = Some(c);
                    } else {
                        out.push((s, e));
                    }
                }
                match next {
                    Some(c) => node = c,
                    None => break,
                }
            }
        }
    }
    out
}

/// Depth of the lowest common ancestor of leaves `i` and `i + 1`, for each gap.
fn gap_depths(tree: &ParseTree, n: usize) -> Vec<usize> {
    fn visit(node: &ParseTree, depth: usize, out: &mut [usize]) {
        if let ParseTree::Node { children, .. } = node {
            for pair in children.windows(2) {
                let gap = pair[0].span().1;
                out[gap] = depth;
            }
            for c in children {
                visit(c, depth + 1, out);
            }
        }
    }
    let mut out = vec![0; n.saturating_sub(1)];
    visit(tree, 0, &mut out);
    out
}

fn relabel_leaves(tree: &ParseTree, tokens: &[String]) -> ParseTree {
    match tree {
        ParseTree::Leaf { index, .. } => ParseTree::Leaf {
            index: *index,
            word: tokens[*index].replace('(', "-LRB-").replace(')', "-RRB-"),
        },
        ParseTree::Node { label, children } => ParseTree::Node {
            label: label.clone(),
            children: children.iter().map(|c| relabel_leaves(c, tokens)).collect(),
        },
    }
}
