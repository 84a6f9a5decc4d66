//! Penn-Treebank-style bracketed constituency trees.

use rand::Rng;

use crate::error::{Error, Result};
use crate::span_algebra::SpanSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseTree {
    Node { label: String, children: Vec<ParseTree> },
    Leaf { index: usize, word: String },
}

impl ParseTree {
    /// Leftmost and rightmost leaf index covered by this node.
    pub fn span(&self) -> (usize, usize) {
        match self {
            ParseTree::Leaf { index, .. } => (*index, *index),
            ParseTree::Node { children, .. } => {
                let first = children.first().expect("nodes have children").span().0;
                let last = children.last().expect("nodes have children").span().1;
                (first, last)
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        let (s, e) = self.span();
        e - s + 1
    }

    /// Visits every node (internal and leaf) in pre-order.
    pub fn walk<F: FnMut(&ParseTree)>(&self, f: &mut F) {
        f(self);
        if let ParseTree::Node { children, .. } = self {
            for c in children {
                c.walk(f);
            }
        }
    }

    pub fn to_bracketed(&self) -> String {
        let mut out = String::new();
        self.write_bracketed(&mut out);
        out
    }

    fn write_bracketed(&self, out: &mut String) {
        match self {
            ParseTree::Leaf { word, .. } => out.push_str(word),
            ParseTree::Node { label, children } => {
                out.push('(');
                out.push_str(label);
                for c in children {
                    out.push(' ');
                    c.write_bracketed(out);
                }
                out.push(')');
            }
        }
    }
}

/// Every node's `(start, end)`, internal and leaf, deduplicated; labels dropped.
pub fn parse_spans(tree: &ParseTree) -> SpanSet {
    let mut bounds = Vec::new();
    tree.walk(&mut |node| bounds.push(node.span()));
    SpanSet::parse(bounds)
}

#[derive(Debug, PartialEq)]
enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Option<(usize, Lexeme<'a>)> {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        match bytes.get(start)? {
            b'(' => {
                self.pos += 1;
                Some((start, Lexeme::Open))
            }
            b')' => {
                self.pos += 1;
                Some((start, Lexeme::Close))
            }
            _ => {
                while self.pos < bytes.len()
                    && !bytes[self.pos].is_ascii_whitespace()
                    && bytes[self.pos] != b'('
                    && bytes[self.pos] != b')'
                {
                    self.pos += 1;
                }
                Some((start, Lexeme::Atom(&self.text[start..self.pos])))
            }
        }
    }

    fn peek(&mut self) -> Option<(usize, Lexeme<'a>)> {
        let saved = self.pos;
        let item = self.next();
        self.pos = saved;
        item
    }
}

fn parse_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Parses a bracketed tree such as `(S (NP a b) (VP c))` whose leaves must
/// number exactly `n`.
pub fn parse_bracketed(text: &str, n: usize) -> Result<ParseTree> {
    let mut lexer = Lexer { text, pos: 0 };
    let mut next_leaf = 0;
    let tree = match lexer.next() {
        Some((_, Lexeme::Open)) => parse_node(&mut lexer, &mut next_leaf)?,
        Some((offset, _)) => return Err(parse_error(offset, "expected `(`")),
        None => return Err(parse_error(0, "empty tree text")),
    };
    if let Some((offset, _)) = lexer.next() {
        return Err(parse_error(offset, "trailing content after tree"));
    }
    if next_leaf != n {
        return Err(parse_error(
            text.len(),
            format!("tree has {next_leaf} leaves, expected {n}"),
        ));
    }
    Ok(tree)
}

// Called just after an opening parenthesis has been consumed.
fn parse_node(lexer: &mut Lexer<'_>, next_leaf: &mut usize) -> Result<ParseTree> {
    let open_at = lexer.pos - 1;
    let label = match lexer.peek() {
        Some((_, Lexeme::Atom(a))) => {
            lexer.next();
            a.to_string()
        }
        _ => String::new(),
    };
    let mut children = Vec::new();
    loop {
        match lexer.next() {
            Some((_, Lexeme::Open)) => children.push(parse_node(lexer, next_leaf)?),
            Some((_, Lexeme::Atom(word))) => {
                children.push(ParseTree::Leaf {
                    index: *next_leaf,
                    word: word.to_string(),
                });
                *next_leaf += 1;
            }
            Some((offset, Lexeme::Close)) => {
                if children.is_empty() {
                    return Err(parse_error(offset, "empty constituent"));
                }
                return Ok(ParseTree::Node { label, children });
            }
            None => return Err(parse_error(open_at, "unbalanced `(`")),
        }
    }
}

const LABELS: [&str; 5] = ["S", "NP", "VP", "PP", "SBAR"];

/// Random binary-branching tree over `words`; split points are uniform.
pub fn random_binary_tree<R: Rng + ?Sized, S: AsRef<str>>(words: &[S], rng: &mut R) -> ParseTree {
    assert!(!words.is_empty(), "cannot build a tree over zero words");
    fn build<R: Rng + ?Sized, S: AsRef<str>>(words: &[S], offset: usize, rng: &mut R, top: bool) -> ParseTree {
        if words.len() == 1 {
            let leaf = ParseTree::Leaf {
                index: offset,
                word: words[0].as_ref().to_string(),
            };
            return if top {
                ParseTree::Node {
                    label: "S".into(),
                    children: vec![leaf],
                }
            } else {
                leaf
            };
        }
        let split = rng.gen_range(1..words.len());
        let label = if top {
            "S".to_string()
        } else {
            LABELS[rng.gen_range(1..LABELS.len())].to_string()
        };
        let left = build(&words[..split], offset, rng, false);
        let right = build(&words[split..], offset + split, rng, false);
        ParseTree::Node {
            label,
            children: vec![left, right],
        }
    }
    build(words, 0, rng, true)
}
