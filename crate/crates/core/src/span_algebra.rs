//! BIO tag sets, argument/constituent span sets, and the span-level
//! agreement measures between a predicted labeling and a parse.
//!
//! Tag indices are dense: `0` is `O`, role `r` owns `1 + 2r` (`B-r`) and
//! `2 + 2r` (`I-r`).

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Role name conventionally used for the predicate itself.
pub const PREDICATE_ROLE: &str = "V";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl Tag {
    pub fn role(self) -> Option<usize> {
        match self {
            Tag::Outside => None,
            Tag::Begin(r) | Tag::Inside(r) => Some(r),
        }
    }
}

/// The tag inventory: `O` plus `B-r`/`I-r` for every role.
#[derive(Clone, Debug, PartialEq)]
pub struct TagSet {
    roles: Vec<String>,
    predicate_role: Option<usize>,
    lookup: HashMap<String, usize>,
}

impl TagSet {
    /// Builds a tag set over `roles` in the given order. A role named `V`,
    /// when present, is designated as the predicate role.
    pub fn new<I, S>(roles: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let roles: Vec<String> = roles.into_iter().map(Into::into).collect();
        let mut lookup = HashMap::with_capacity(2 * roles.len() + 1);
        lookup.insert("O".to_string(), 0);
        for (r, role) in roles.iter().enumerate() {
            if role.is_empty() {
                return Err(Error::Invalid("empty role name".into()));
            }
            if role.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!("role name {role:?} contains whitespace")));
            }
            if lookup.insert(format!("B-{role}"), 1 + 2 * r).is_some() {
                return Err(Error::Invalid(format!("duplicate role name {role:?}")));
            }
            lookup.insert(format!("I-{role}"), 2 + 2 * r);
        }
        let predicate_role = roles.iter().position(|r| r == PREDICATE_ROLE);
        Ok(TagSet {
            roles,
            predicate_role,
            lookup,
        })
    }

    /// Overrides which role (if any) marks the predicate.
    pub fn with_predicate_role(mut self, role: Option<&str>) -> Result<Self> {
        self.predicate_role = match role {
            None => None,
            Some(name) => Some(
                self.role_index(name)
                    .ok_or_else(|| Error::Invalid(format!("unknown predicate role {name:?}")))?,
            ),
        };
        Ok(self)
    }

    /// Collects the roles mentioned in `sequences` into a tag set with
    /// alphabetically ordered roles.
    pub fn from_tag_sequences<'a, I, S>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut roles = std::collections::BTreeSet::new();
        for seq in sequences {
            for tag in seq {
                let tag = tag.as_ref();
                if tag == "O" {
                    continue;
                }
                match tag.split_once('-') {
                    Some(("B" | "I", role)) if !role.is_empty() => {
                        roles.insert(role.to_string());
                    }
                    _ => return Err(Error::Format(format!("unknown tag {tag:?}"))),
                }
            }
        }
        TagSet::new(roles)
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn num_roles(&self) -> usize {
        self.roles.len()
    }

    /// Number of tags, `2 * roles + 1`.
    pub fn len(&self) -> usize {
        2 * self.roles.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn predicate_role(&self) -> Option<usize> {
        self.predicate_role
    }

    pub fn role_index(&self, name: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == name)
    }

    pub fn tag(&self, index: usize) -> Tag {
        assert!(index < self.len(), "tag index {index} out of range");
        match index {
            0 => Tag::Outside,
            i if i % 2 == 1 => Tag::Begin((i - 1) / 2),
            i => Tag::Inside((i - 2) / 2),
        }
    }

    pub fn index_of(&self, tag: Tag) -> usize {
        match tag {
            Tag::Outside => 0,
            Tag::Begin(r) => 1 + 2 * r,
            Tag::Inside(r) => 2 + 2 * r,
        }
    }

    pub fn begin(&self, role: usize) -> usize {
        1 + 2 * role
    }

    pub fn inside(&self, role: usize) -> usize {
        2 + 2 * role
    }

    pub fn name(&self, index: usize) -> String {
        match self.tag(index) {
            Tag::Outside => "O".to_string(),
            Tag::Begin(r) => format!("B-{}", self.roles[r]),
            Tag::Inside(r) => format!("I-{}", self.roles[r]),
        }
    }

    pub fn parse_tag(&self, tag: &str) -> Result<usize> {
        self.lookup
            .get(tag)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown tag {tag:?}")))
    }

    pub fn parse_tags<S: AsRef<str>>(&self, tags: &[S]) -> Result<Vec<usize>> {
        tags.iter().map(|t| self.parse_tag(t.as_ref())).collect()
    }

    pub fn names(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.name(i)).collect()
    }

    /// BIO transition validity on tag indices; `prev = None` is the sentence start.
    pub fn is_valid_transition(&self, prev: Option<usize>, next: usize) -> bool {
        is_valid_transition(prev.map(|p| self.tag(p)), self.tag(next))
    }
}

/// `next` may follow `prev` iff it is `O`, any `B-r`, or an `I-r` continuing
/// a `B-r`/`I-r` of the same role. `prev = None` marks the sentence start.
pub fn is_valid_transition(prev: Option<Tag>, next: Tag) -> bool {
    match next {
        Tag::Outside | Tag::Begin(_) => true,
        Tag::Inside(r) => matches!(prev, Some(Tag::Begin(p)) | Some(Tag::Inside(p)) if p == r),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    /// Role name for argument spans, `None` for parse constituents.
    pub label: Option<String>,
    /// Set on spans carrying the predicate role.
    pub predicate: bool,
}

impl LabeledSpan {
    pub fn role(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            label: Some(label.into()),
            predicate: false,
        }
    }

    pub fn unlabeled(start: usize, end: usize) -> Self {
        LabeledSpan {
            start,
            end,
            label: None,
            predicate: false,
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.start == self.end
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &LabeledSpan) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "({},{},{})", self.start, self.end, l),
            None => write!(f, "({},{})", self.start, self.end),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanKind {
    /// Argument spans read off a BIO labeling; never overlapping.
    Srl,
    /// Unlabeled constituent boundaries; membership is on `(start, end)` only.
    Parse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanSet {
    kind: SpanKind,
    spans: Vec<LabeledSpan>,
}

impl SpanSet {
    pub fn empty(kind: SpanKind) -> Self {
        SpanSet {
            kind,
            spans: Vec::new(),
        }
    }

    /// Argument spans; rejects overlapping members.
    pub fn srl(mut spans: Vec<LabeledSpan>) -> Result<Self> {
        spans.sort();
        spans.dedup();
        for pair in spans.windows(2) {
            if pair[0].overlaps(&pair[1]) {
                return Err(Error::Invalid(format!(
                    "overlapping spans {} and {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(SpanSet {
            kind: SpanKind::Srl,
            spans,
        })
    }

    /// Constituent boundaries, deduplicated; labels are discarded.
    pub fn parse<I: IntoIterator<Item = (usize, usize)>>(bounds: I) -> Self {
        let mut spans: Vec<LabeledSpan> = bounds
            .into_iter()
            .map(|(s, e)| LabeledSpan::unlabeled(s, e))
            .collect();
        spans.sort();
        spans.dedup();
        SpanSet {
            kind: SpanKind::Parse,
            spans,
        }
    }

    pub fn kind(&self) -> SpanKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSpan> {
        self.spans.iter()
    }

    pub fn spans(&self) -> &[LabeledSpan] {
        &self.spans
    }

    pub fn bounds(&self) -> Vec<(usize, usize)> {
        self.spans.iter().map(LabeledSpan::bounds).collect()
    }

    /// Whether any member has exactly these boundaries.
    pub fn contains_bounds(&self, start: usize, end: usize) -> bool {
        self.spans
            .binary_search_by(|s| (s.start, s.end).cmp(&(start, end)))
            .is_ok()
    }

    /// Spans entering the disagreement rate: everything except predicate spans.
    pub fn counted(&self) -> impl Iterator<Item = &LabeledSpan> {
        self.spans.iter().filter(|s| !s.predicate)
    }
}

impl<'a> IntoIterator for &'a SpanSet {
    type Item = &'a LabeledSpan;
    type IntoIter = std::slice::Iter<'a, LabeledSpan>;

    fn into_iter(self) -> Self::IntoIter {
        self.spans.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExtractMode {
    /// An `I-r` with no open `r` span starts a new span.
    #[default]
    Lenient,
    /// An `I-r` with no open `r` span is an error.
    Strict,
}

/// Reads argument spans off a sequence of tag indices.
pub fn extract_spans(tags: &[usize], tagset: &TagSet, mode: ExtractMode) -> Result<SpanSet> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let close = |open: &mut Option<(usize, usize)>, end: usize, spans: &mut Vec<LabeledSpan>| {
        if let Some((start, role)) = open.take() {
            spans.push(LabeledSpan {
                start,
                end,
                label: Some(tagset.roles[role].clone()),
                predicate: tagset.predicate_role == Some(role),
            });
        }
    };
    for (i, &t) in tags.iter().enumerate() {
        if t >= tagset.len() {
            return Err(Error::Format(format!("tag index {t} out of range")));
        }
        match tagset.tag(t) {
            Tag::Outside => close(&mut open, i.wrapping_sub(1), &mut spans),
            Tag::Begin(r) => {
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((i, r));
            }
            Tag::Inside(r) => match open {
                Some((_, o)) if o == r => {}
                _ => {
                    if mode == ExtractMode::Strict {
                        return Err(Error::Format(format!(
                            "{} at position {i} does not continue a span",
                            tagset.name(t)
                        )));
                    }
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((i, r));
                }
            },
        }
    }
    close(&mut open, tags.len().wrapping_sub(1), &mut spans);
    Ok(SpanSet {
        kind: SpanKind::Srl,
        spans,
    })
}

/// Reads argument spans off BIO tag strings (lenient repair of orphan `I-` tags).
pub fn spans_from_tags<S: AsRef<str>>(tags: &[S], tagset: &TagSet) -> Result<SpanSet> {
    extract_spans(&tagset.parse_tags(tags)?, tagset, ExtractMode::Lenient)
}

/// Like [`spans_from_tags`] but rejects `I-` tags that do not continue a span.
pub fn spans_from_tags_strict<S: AsRef<str>>(tags: &[S], tagset: &TagSet) -> Result<SpanSet> {
    extract_spans(&tagset.parse_tags(tags)?, tagset, ExtractMode::Strict)
}

/// Inverse of [`spans_from_tags`] on BIO-valid sequences; uncovered tokens are `O`.
pub fn tags_from_spans(spans: &SpanSet, n: usize) -> Result<Vec<String>> {
    let mut tags = vec!["O".to_string(); n];
    for (span, label) in checked_layout(spans, n)? {
        tags[span.start] = format!("B-{label}");
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = format!("I-{label}");
        }
    }
    Ok(tags)
}

/// Index-valued variant of [`tags_from_spans`].
pub fn tag_indices_from_spans(spans: &SpanSet, n: usize, tagset: &TagSet) -> Result<Vec<usize>> {
    let mut tags = vec![0; n];
    for (span, label) in checked_layout(spans, n)? {
        let role = tagset
            .role_index(label)
            .ok_or_else(|| Error::Format(format!("unknown role {label:?}")))?;
        tags[span.start] = tagset.begin(role);
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = tagset.inside(role);
        }
    }
    Ok(tags)
}

fn checked_layout(spans: &SpanSet, n: usize) -> Result<Vec<(&LabeledSpan, &str)>> {
    let mut out: Vec<(&LabeledSpan, &str)> = Vec::with_capacity(spans.len());
    for span in spans {
        if span.start > span.end || span.end >= n {
            return Err(Error::Invalid(format!("span {span} outside sentence of length {n}")));
        }
        let label = span
            .label
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("span {span} has no role label")))?;
        if let Some((prev, _)) = out.iter().find(|(o, _)| o.overlaps(span)) {
            return Err(Error::Invalid(format!("overlapping spans {prev} and {span}")));
        }
        out.push((span, label));
    }
    Ok(out)
}

/// Whether a counted span breaks the syntactic constraint: non-singleton and
/// absent from the parse.
pub fn violates_parse(span: &LabeledSpan, parse: &SpanSet) -> bool {
    !span.predicate && !span.is_singleton() && !parse.contains_bounds(span.start, span.end)
}

/// Argument spans whose boundaries are not parse constituents. Predicate spans
/// and single-token spans never disagree.
pub fn disagreeing_spans(srl: &SpanSet, parse: &SpanSet) -> SpanSet {
    debug_assert_eq!(srl.kind, SpanKind::Srl);
    debug_assert_eq!(parse.kind, SpanKind::Parse);
    SpanSet {
        kind: SpanKind::Srl,
        spans: srl
            .spans
            .iter()
            .filter(|s| violates_parse(s, parse))
            .cloned()
            .collect(),
    }
}

/// `(disagreeing, counted)` span counts.
pub fn disagreement_counts(srl: &SpanSet, parse: &SpanSet) -> (usize, usize) {
    let mut disagreeing = 0;
    let mut counted = 0;
    for span in srl.counted() {
        counted += 1;
        if violates_parse(span, parse) {
            disagreeing += 1;
        }
    }
    (disagreeing, counted)
}

/// Fraction of counted argument spans that disagree with the parse; zero when
/// there are no counted spans.
pub fn disagreement_rate(srl: &SpanSet, parse: &SpanSet) -> f64 {
    match disagreement_counts(srl, parse) {
        (_, 0) => 0.0,
        (d, c) => d as f64 / c as f64,
    }
}

/// Maps a disagreement rate in `[0, 1]` to `2d - 1` in `[-1, 1]`.
pub fn inconsistency_score(d: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&d), "disagreement rate {d} out of range");
    2.0 * d - 1.0
}
