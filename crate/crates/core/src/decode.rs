//! Decoders over emission matrices.
//!
//! All decoders share one tie-breaking rule: among equally scored sequences
//! the lexicographically smallest tag-index sequence wins. This makes
//! oracle comparisons exact sequence equalities.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::span_algebra::{
    disagreement_rate, extract_spans, violates_parse, ExtractMode, SpanSet, TagSet,
};
use crate::tagger::EmissionMatrix;

/// Upper bound on the sequence count [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum ConstraintMode {
    #[default]
    Off,
    /// Any violation makes a sequence infeasible.
    Hard,
    /// Each violation costs the given nonnegative weight.
    Penalty(f64),
}

impl ConstraintMode {
    pub fn is_off(self) -> bool {
        self == ConstraintMode::Off
    }

    /// Cost of `count` violations.
    pub fn cost(self, count: usize) -> f64 {
        match self {
            _ if count == 0 => 0.0,
            ConstraintMode::Off => 0.0,
            ConstraintMode::Hard => f64::INFINITY,
            ConstraintMode::Penalty(w) => w * count as f64,
        }
    }
}

/// The active structural constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub bio: bool,
    pub syntactic: ConstraintMode,
    pub unique_core: ConstraintMode,
    /// Role indices that may begin at most once.
    pub core_roles: Vec<usize>,
    /// Continuation-role constraints; declared but not implemented.
    pub continuation: bool,
    /// Reference-role constraints; declared but not implemented.
    pub reference: bool,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet::bio()
    }
}

impl ConstraintSet {
    pub fn none() -> Self {
        ConstraintSet {
            bio: false,
            syntactic: ConstraintMode::Off,
            unique_core: ConstraintMode::Off,
            core_roles: Vec::new(),
            continuation: false,
            reference: false,
        }
    }

    pub fn bio() -> Self {
        ConstraintSet {
            bio: true,
            ..ConstraintSet::none()
        }
    }

    pub fn with_syntactic(mut self, mode: ConstraintMode) -> Self {
        self.syntactic = mode;
        self
    }

    pub fn with_unique_core(mut self, mode: ConstraintMode, core_roles: Vec<usize>) -> Self {
        self.unique_core = mode;
        self.core_roles = core_roles;
        self
    }

    /// Checks the set against a tag inventory and the availability of a parse.
    pub fn validate(&self, tagset: &TagSet, parse: Option<&SpanSet>) -> Result<()> {
        if self.continuation {
            return Err(Error::Unsupported("continuation-role constraints".into()));
        }
        if self.reference {
            return Err(Error::Unsupported("reference-role constraints".into()));
        }
        for mode in [self.syntactic, self.unique_core] {
            if let ConstraintMode::Penalty(w) = mode {
                if !(w >= 0.0) || w.is_infinite() {
                    return Err(Error::Argument(format!("penalty weight {w} must be finite and nonnegative")));
                }
            }
        }
        if !self.syntactic.is_off() && parse.is_none() {
            return Err(Error::Argument("syntactic constraints need a parse".into()));
        }
        if let Some(&r) = self.core_roles.iter().find(|&&r| r >= tagset.num_roles() || r >= 64) {
            return Err(Error::Argument(format!("core role index {r} is not a role of the tag set")));
        }
        Ok(())
    }
}

/// Core roles by convention: numbered arguments `ARG0`..`ARG5`.
pub fn default_core_roles(tagset: &TagSet) -> Vec<usize> {
    (0..tagset.num_roles())
        .filter(|&r| {
            let name = &tagset.roles()[r];
            name.strip_prefix("ARG").is_some_and(|d| d.len() == 1 && ('0'..='5').contains(&d.chars().next().unwrap()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub tags: Vec<usize>,
    /// Log-likelihood minus penalties under the active constraints.
    pub score: f64,
    pub expanded_nodes: usize,
    pub iterations: usize,
    /// Set when every sequence was infinitely penalized and the result
    /// falls back to the best BIO-valid sequence.
    pub degenerate: bool,
}

impl DecodeResult {
    fn plain(tags: Vec<usize>, score: f64) -> Self {
        DecodeResult {
            tags,
            score,
            expanded_nodes: 0,
            iterations: 0,
            degenerate: false,
        }
    }
}

fn check_tagset(emissions: &EmissionMatrix, tagset: &TagSet) -> Result<()> {
    if emissions.num_tags() != tagset.len() {
        return Err(Error::Argument(format!(
            "emissions have {} columns but the tag set has {} tags",
            emissions.num_tags(),
            tagset.len()
        )));
    }
    Ok(())
}

fn inside_role(t: usize) -> Option<usize> {
    (t > 0 && t.is_multiple_of(2)).then(|| (t - 2) / 2)
}

fn begin_role(t: usize) -> Option<usize> {
    (t % 2 == 1).then(|| (t - 1) / 2)
}

fn bio_ok(prev: Option<usize>, next: usize) -> bool {
    match inside_role(next) {
        None => true,
        Some(r) => prev.is_some_and(|p| p != 0 && (p - 1) / 2 == r),
    }
}

/// Exact argmax of Σ log p over BIO-valid sequences (or all sequences when
/// `bio` is off). Syntactic and core-role constraints are not expressible here.
pub fn viterbi(emissions: &EmissionMatrix, tagset: &TagSet, constraints: &ConstraintSet) -> Result<DecodeResult> {
    check_tagset(emissions, tagset)?;
    if !constraints.syntactic.is_off() || !constraints.unique_core.is_off() {
        return Err(Error::Argument("viterbi supports BIO constraints only".into()));
    }
    constraints.validate(tagset, None)?;
    Ok(viterbi_bio(emissions, constraints.bio))
}

fn viterbi_bio(emissions: &EmissionMatrix, bio: bool) -> DecodeResult {
    let n = emissions.n();
    let t_count = emissions.num_tags();
    // best[i][t]: best score of positions i+1..n given tag t at position i.
    let mut best = vec![vec![0.0; t_count]; n];
    for i in (0..n.saturating_sub(1)).rev() {
        for t in 0..t_count {
            let mut m = f64::NEG_INFINITY;
            for u in 0..t_count {
                if bio && !bio_ok(Some(t), u) {
                    continue;
                }
                let v = emissions.logprob(i + 1, u) + best[i + 1][u];
                if v > m {
                    m = v;
                }
            }
            best[i][t] = m;
        }
    }
    let mut tags = Vec::with_capacity(n);
    let mut prev = None;
    for i in 0..n {
        let mut choice = 0;
        let mut m = f64::NEG_INFINITY;
        for t in 0..t_count {
            if bio && !bio_ok(prev, t) {
                continue;
            }
            let v = emissions.logprob(i, t) + best[i][t];
            if v > m {
                m = v;
                choice = t;
            }
        }
        tags.push(choice);
        prev = Some(choice);
    }
    let score = emissions.sequence_logprob(&tags);
    DecodeResult::plain(tags, score)
}

/// Number of `B-r` tags beyond the first, summed over core roles.
pub fn unique_core_violations(prefix: &[usize], core_roles: &[usize]) -> usize {
    core_roles
        .iter()
        .map(|&r| prefix.iter().filter(|&&t| begin_role(t) == Some(r)).count().saturating_sub(1))
        .sum()
}

/// Penalty for repeated core roles in `prefix`.
pub fn unique_core_penalty(prefix: &[usize], core_roles: &[usize], mode: ConstraintMode) -> f64 {
    mode.cost(unique_core_violations(prefix, core_roles))
}

/// Total penalty of a complete sequence, computed from its extracted spans.
pub fn sequence_penalty(
    tags: &[usize],
    tagset: &TagSet,
    constraints: &ConstraintSet,
    parse: Option<&SpanSet>,
) -> Result<f64> {
    let mut penalty = 0.0;
    if let (false, Some(parse)) = (constraints.syntactic.is_off(), parse) {
        let spans = extract_spans(tags, tagset, ExtractMode::Lenient)?;
        let violations = spans.iter().filter(|s| violates_parse(s, parse)).count();
        penalty += constraints.syntactic.cost(violations);
    }
    if !constraints.unique_core.is_off() {
        penalty += unique_core_penalty(tags, &constraints.core_roles, constraints.unique_core);
    }
    Ok(penalty)
}

/// f(y) = Σ log p(y_i) − penalties, or −∞ for BIO-invalid sequences under `bio`.
pub fn constrained_score(
    emissions: &EmissionMatrix,
    tags: &[usize],
    tagset: &TagSet,
    constraints: &ConstraintSet,
    parse: Option<&SpanSet>,
) -> Result<f64> {
    if constraints.bio && !is_bio_valid(tags) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(emissions.sequence_logprob(tags) - sequence_penalty(tags, tagset, constraints, parse)?)
}

pub fn is_bio_valid(tags: &[usize]) -> bool {
    let mut prev = None;
    for &t in tags {
        if !bio_ok(prev, t) {
            return false;
        }
        prev = Some(t);
    }
    true
}

/// Exhaustive argmax of the constrained score.
pub fn brute_force(
    emissions: &EmissionMatrix,
    tagset: &TagSet,
    constraints: &ConstraintSet,
    parse: Option<&SpanSet>,
) -> Result<DecodeResult> {
    check_tagset(emissions, tagset)?;
    constraints.validate(tagset, parse)?;
    let n = emissions.n();
    let t_count = emissions.num_tags();
    let size = (t_count as f64).powi(n as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::Size {
            size,
            bound: BRUTE_FORCE_LIMIT,
        });
    }
    let mut tags = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut best_bio: Option<(f64, Vec<usize>)> = None;
    loop {
        if !constraints.bio || is_bio_valid(&tags) {
            let ll: f64 = tags.iter().enumerate().map(|(i, &t)| emissions.logprob(i, t)).sum();
            if best_bio.as_ref().is_none_or(|(b, _)| ll > *b) {
                best_bio = Some((ll, tags.clone()));
            }
            let f = ll - sequence_penalty(&tags, tagset, constraints, parse)?;
            if f > f64::NEG_INFINITY && best.as_ref().is_none_or(|(b, _)| f > *b) {
                best = Some((f, tags.clone()));
            }
        }
        // Odometer increment, last position fastest: lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(match best {
                    Some((score, tags)) => DecodeResult::plain(tags, score),
                    None => {
                        let (_, tags) = best_bio.expect("all-outside is always BIO-valid");
                        DecodeResult {
                            degenerate: true,
                            ..DecodeResult::plain(tags, f64::NEG_INFINITY)
                        }
                    }
                });
            }
            i -= 1;
            tags[i] += 1;
            if tags[i] < t_count {
                break;
            }
            tags[i] = 0;
        }
    }
}

#[derive(Debug)]
struct Node {
    f: f64,
    g: f64,
    prefix: Vec<usize>,
    open_start: usize,
    mask: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Highest f first; among equal f the lexicographically smaller prefix,
    // with a proper prefix ahead of its extensions.
    fn cmp(&self, other: &Self) -> Ordering {
        self.f.total_cmp(&other.f).then_with(|| other.prefix.cmp(&self.prefix))
    }
}

/// Best-first search for the exact argmax of the constrained score.
///
/// The heuristic sums the per-position maximum log-probability over the
/// remaining positions; penalties are charged when a span closes.
pub fn astar(
    emissions: &EmissionMatrix,
    tagset: &TagSet,
    constraints: &ConstraintSet,
    parse: Option<&SpanSet>,
) -> Result<DecodeResult> {
    check_tagset(emissions, tagset)?;
    constraints.validate(tagset, parse)?;
    let n = emissions.n();
    let t_count = emissions.num_tags();
    let mut h = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let m = emissions.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        h[i] = h[i + 1] + m;
    }
    let syntactic = constraints.syntactic;
    let unique = constraints.unique_core;
    let core_mask: u64 = constraints.core_roles.iter().fold(0, |m, &r| m | (1u64 << r));
    let predicate_role = tagset.predicate_role();

    // Penalty for closing the span `start..=end` of `role`.
    let close_cost = |start: usize, end: usize, role: usize| -> f64 {
        if syntactic.is_off() || Some(role) == predicate_role || start == end {
            return 0.0;
        }
        let parse = parse.expect("validated");
        if parse.contains_bounds(start, end) {
            0.0
        } else {
            syntactic.cost(1)
        }
    };
    const NO_SPAN: usize = usize::MAX;

    let mut open = BinaryHeap::new();
    let mut closed: HashSet<(usize, Option<usize>, usize, u64)> = HashSet::new();
    open.push(Node {
        f: h[0],
        g: 0.0,
        prefix: Vec::new(),
        open_start: NO_SPAN,
        mask: 0,
    });
    let mut expanded = 0;
    while let Some(node) = open.pop() {
        let depth = node.prefix.len();
        let last = node.prefix.last().copied();
        let key = (depth, last, node.open_start, node.mask);
        if !closed.insert(key) {
            continue;
        }
        expanded += 1;
        if depth == n {
            return Ok(DecodeResult {
                tags: node.prefix,
                score: node.g,
                expanded_nodes: expanded,
                iterations: 0,
                degenerate: false,
            });
        }
        let open_role = last.and_then(|l| begin_role(l).or_else(|| inside_role(l)));
        for t in 0..t_count {
            if constraints.bio && !bio_ok(last, t) {
                continue;
            }
            let continues = open_role.is_some() && inside_role(t) == open_role;
            let mut penalty = 0.0;
            if !continues {
                if let Some(role) = open_role {
                    penalty += close_cost(node.open_start, depth - 1, role);
                }
            }
            let mut mask = node.mask;
            if let Some(r) = begin_role(t) {
                let bit = 1u64 << r;
                if core_mask & bit != 0 {
                    if mask & bit != 0 {
                        penalty += unique.cost(1);
                    }
                    mask |= bit;
                }
            }
            let new_role = begin_role(t).or_else(|| inside_role(t));
            let open_start = match new_role {
                None => NO_SPAN,
                Some(_) if continues => node.open_start,
                Some(_) => depth,
            };
            let mut g = node.g + emissions.logprob(depth, t) - penalty;
            if depth + 1 == n {
                if let Some(role) = new_role {
                    g -= close_cost(open_start, n - 1, role);
                }
            }
            if g == f64::NEG_INFINITY || g.is_nan() {
                continue;
            }
            // States differ only in what can affect the future score.
            let open_start = if syntactic.is_off() { NO_SPAN } else { open_start };
            let mut prefix = Vec::with_capacity(depth + 1);
            prefix.extend_from_slice(&node.prefix);
            prefix.push(t);
            open.push(Node {
                f: g + h[depth + 1],
                g,
                prefix,
                open_start,
                mask: if unique.is_off() { 0 } else { mask },
            });
        }
    }
    let fallback = viterbi_bio(emissions, constraints.bio);
    Ok(DecodeResult {
        score: f64::NEG_INFINITY,
        expanded_nodes: expanded,
        degenerate: true,
        ..fallback
    })
}

/// Test-time optimization of the logits against the parse.
///
/// Each round decodes with BIO Viterbi, scores the decode against the parse,
/// and takes one gradient step on `s · Σ log p(ŷ)` with respect to the
/// logits. The model is untouched. Returns the decode with the lowest
/// disagreement seen, preferring higher likelihood under the original
/// emissions on ties; `iterations` counts gradient steps taken.
pub fn gradient_inference(
    emissions: &EmissionMatrix,
    tagset: &TagSet,
    parse: &SpanSet,
    steps: usize,
    step_size: f64,
) -> Result<DecodeResult> {
    check_tagset(emissions, tagset)?;
    if steps == 0 || !(step_size > 0.0) {
        return Err(Error::Argument(format!(
            "gradient inference needs steps >= 1 and step_size > 0, got {steps} and {step_size}"
        )));
    }
    let n = emissions.n();
    let t_count = emissions.num_tags();
    let mut current = emissions.clone();
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    let mut iterations = 0;
    loop {
        let decode = viterbi_bio(&current, true);
        let spans = extract_spans(&decode.tags, tagset, ExtractMode::Lenient)?;
        let d = disagreement_rate(&spans, parse);
        let ll = emissions.sequence_logprob(&decode.tags);
        let better = match &best {
            None => true,
            Some((bd, bll, _)) => d < *bd || (d == *bd && ll > *bll),
        };
        if better {
            best = Some((d, ll, decode.tags.clone()));
        }
        if d == 0.0 || iterations == steps {
            break;
        }
        let s = 2.0 * d - 1.0;
        let mut logits = current.logits().to_vec();
        for i in 0..n {
            for t in 0..t_count {
                let onehot = if decode.tags[i] == t { 1.0 } else { 0.0 };
                logits[i * t_count + t] -= step_size * s * (onehot - current.prob(i, t));
            }
        }
        current = EmissionMatrix::from_logits(n, t_count, logits)?;
        iterations += 1;
    }
    let (_, ll, tags) = best.expect("at least one decode");
    Ok(DecodeResult {
        tags,
        score: ll,
        expanded_nodes: 0,
        iterations,
        degenerate: false,
    })
}

/// Which search procedure [`decode`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    Viterbi,
    Astar,
    Gradient,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Viterbi => "viterbi",
            DecoderKind::Astar => "astar",
            DecoderKind::Gradient => "gradient",
        }
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(DecoderKind::Viterbi),
            "astar" => Ok(DecoderKind::Astar),
            "gradient" => Ok(DecoderKind::Gradient),
            other => Err(Error::Argument(format!("unknown decoder {other:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `hard` or `penalty:<rho>`.
pub fn parse_constraint_mode(text: &str) -> Result<ConstraintMode> {
    match text.split_once(':') {
        None if text == "hard" => Ok(ConstraintMode::Hard),
        Some(("penalty", rho)) => {
            let rho: f64 = rho
                .parse()
                .map_err(|_| Error::Argument(format!("bad penalty weight {rho:?}")))?;
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(Error::Argument(format!("penalty weight {rho} must be finite and >= 0")));
            }
            Ok(ConstraintMode::Penalty(rho))
        }
        _ => Err(Error::Argument(format!("syntax mode {text:?} is not hard or penalty:<rho>"))),
    }
}

impl ConstraintSet {
    /// Builds a set from a comma list drawn from `bio`, `syn`, `u`. Both
    /// `syn` and `u` use `mode`; `u` covers [`default_core_roles`].
    pub fn from_names(names: &str, mode: ConstraintMode, tagset: &TagSet) -> Result<Self> {
        let mut set = ConstraintSet::none();
        for name in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "bio" => set.bio = true,
                "syn" => set.syntactic = mode,
                "u" => {
                    set.unique_core = mode;
                    set.core_roles = default_core_roles(tagset);
                }
                other => return Err(Error::Argument(format!("unknown constraint {other:?}"))),
            }
        }
        if !set.bio {
            return Err(Error::Argument("constraint list must include bio".into()));
        }
        Ok(set)
    }
}

/// Settings for [`decode`].
#[derive(Clone, Debug)]
pub struct DecodeOptions {
    pub decoder: DecoderKind,
    /// Used by the A* decoder; Viterbi and gradient inference apply BIO only.
    pub constraints: ConstraintSet,
    pub steps: usize,
    pub step_size: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            decoder: DecoderKind::Viterbi,
            constraints: ConstraintSet::bio(),
            steps: 20,
            step_size: 0.1,
        }
    }
}

impl DecodeOptions {
    /// True when the decoder consults parses at all.
    pub fn needs_parses(&self) -> bool {
        match self.decoder {
            DecoderKind::Viterbi => false,
            DecoderKind::Astar => !self.constraints.syntactic.is_off(),
            DecoderKind::Gradient => true,
        }
    }
}

/// Decodes one instance. Parse-dependent decoders fall back when the
/// instance has no parse: A* drops the syntactic constraint and gradient
/// inference reduces to BIO Viterbi.
pub fn decode(
    emissions: &EmissionMatrix,
    tagset: &TagSet,
    parse: Option<&SpanSet>,
    options: &DecodeOptions,
) -> Result<DecodeResult> {
    match (options.decoder, parse) {
        (DecoderKind::Viterbi, _) => viterbi(emissions, tagset, &ConstraintSet::bio()),
        (DecoderKind::Astar, Some(parse)) => astar(emissions, tagset, &options.constraints, Some(parse)),
        (DecoderKind::Astar, None) => {
            let constraints = options.constraints.clone().with_syntactic(ConstraintMode::Off);
            astar(emissions, tagset, &constraints, None)
        }
        (DecoderKind::Gradient, Some(parse)) => {
            gradient_inference(emissions, tagset, parse, options.steps, options.step_size)
        }
        (DecoderKind::Gradient, None) => viterbi(emissions, tagset, &ConstraintSet::bio()),
    }
}
