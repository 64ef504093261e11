//! Textual preprocessing of Python-style programs into token streams.
//!
//! The pipeline is deliberately lenient: it never parses, it only edits text.
//! Order of application is [`strip_comments`], [`mask_strings`],
//! [`normalize_structure`], then [`tokenize`]. See [`prepare_submission`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Submission;

/// Replacement token for masked string literals.
pub const STR_TOKEN: &str = "<STR>";

const TAB_WIDTH: usize = 4;

/// Multi-character operators, longest first. Each is one token.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "//", "**", "->", "<<", ">>", ":=",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PrepError {
    #[error("inconsistent indentation at logical line {line}: dedent to column {column} never opened")]
    IndentationInconsistent { line: usize, column: usize },
    #[error("submission {id:?}: {source}")]
    InSubmission {
        id: String,
        #[source]
        source: Box<PrepError>,
    },
    #[error("empty vocabulary: no token occurs at least {min_count} times")]
    EmptyVocabulary { min_count: usize },
    #[error("min_count must be at least 1")]
    InvalidMinCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    /// String literals with more characters than this are masked.
    pub max_string_len: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { max_string_len: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub submission_id: String,
    pub tokens: Vec<String>,
}

/// Scans a string literal starting at `start` (which must be a quote).
/// Returns `(end, content_start, content_end)` as byte offsets, `end` exclusive.
fn scan_string(src: &str, start: usize) -> (usize, usize, usize) {
    let bytes = src.as_bytes();
    let quote = bytes[start];
    let triple = bytes.len() >= start + 3 && bytes[start + 1] == quote && bytes[start + 2] == quote;
    let open = if triple { 3 } else { 1 };
    let mut i = start + open;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\\' {
            i += 2;
            continue;
        }
        if !triple && b == b'\n' {
            // Unterminated single-line literal ends at the line break.
            return (i, start + 1, i);
        }
        if b == quote {
            if !triple {
                return (i + 1, start + 1, i);
            }
            if bytes.len() >= i + 3 && bytes[i + 1] == quote && bytes[i + 2] == quote {
                return (i + 3, start + 3, i);
            }
        }
        i += 1;
    }
    let end = bytes.len();
    (end, (start + open).min(end), end)
}

fn is_quote(b: u8) -> bool {
    b == b'\'' || b == b'"'
}

/// Removes `#` comments that are outside string literals and trims trailing
/// whitespace from every line. Line count is preserved.
pub fn strip_comments(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if is_quote(b) {
            let (end, _, _) = scan_string(source, i);
            out.push_str(&source[i..end]);
            i = end;
        } else if b == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else {
            let next = next_boundary(source, i);
            out.push_str(&source[i..next]);
            i = next;
        }
    }
    out.split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Byte offset of the next char boundary after `i`.
fn next_boundary(s: &str, i: usize) -> usize {
    let mut j = i + 1;
    while j < s.len() && !s.is_char_boundary(j) {
        j += 1;
    }
    j
}

/// Replaces every string literal whose content exceeds `max_len` characters with `<STR>`.
pub fn mask_strings(source: &str, max_len: usize) -> String {
    let bytes = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut i = 0;
    while i < bytes.len() {
        if is_quote(bytes[i]) {
            let (end, cs, ce) = scan_string(source, i);
            if source[cs..ce].chars().count() > max_len {
                out.push_str(STR_TOKEN);
            } else {
                out.push_str(&source[i..end]);
            }
            i = end;
        } else {
            let next = next_boundary(source, i);
            out.push_str(&source[i..next]);
            i = next;
        }
    }
    out
}

#[derive(Debug, PartialEq, Eq)]
enum Lexeme<'a> {
    Token(&'a str),
    Newline,
    /// Backslash line continuation.
    Continuation,
}

/// Lenient lexer shared by [`normalize_structure`] and [`tokenize`].
fn lex(src: &str) -> Vec<Lexeme<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let c = src[i..].chars().next().unwrap();
        if b == b'\n' {
            out.push(Lexeme::Newline);
            i += 1;
        } else if b == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
            out.push(Lexeme::Continuation);
            i += 2;
        } else if c.is_whitespace() {
            i += c.len_utf8();
        } else if src[i..].starts_with(STR_TOKEN) {
            out.push(Lexeme::Token(STR_TOKEN));
            i += STR_TOKEN.len();
        } else if is_quote(b) {
            let (end, _, _) = scan_string(src, i);
            out.push(Lexeme::Token(&src[i..end]));
            i = end;
        } else if c.is_alphabetic() || c == '_' {
            let end = src[i..]
                .char_indices()
                .find(|&(_, ch)| !(ch.is_alphanumeric() || ch == '_'))
                .map_or(src.len(), |(k, _)| i + k);
            out.push(Lexeme::Token(&src[i..end]));
            i = end;
        } else if c.is_ascii_digit() {
            let end = src[i..]
                .char_indices()
                .find(|&(_, ch)| !(ch.is_alphanumeric() || ch == '_' || ch == '.'))
                .map_or(src.len(), |(k, _)| i + k);
            out.push(Lexeme::Token(&src[i..end]));
            i = end;
        } else if let Some(op) = OPERATORS.iter().find(|op| src[i..].starts_with(**op)) {
            out.push(Lexeme::Token(&src[i..i + op.len()]));
            i += op.len();
        } else {
            let end = i + c.len_utf8();
            out.push(Lexeme::Token(&src[i..end]));
            i = end;
        }
    }
    out
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width += TAB_WIDTH - width % TAB_WIDTH,
            _ => break,
        }
    }
    width
}

/// Splits text into logical lines: `(indent, tokens)`, joining physical lines
/// inside open brackets or after a backslash continuation. Blank lines vanish.
fn logical_lines(src: &str) -> Vec<(usize, Vec<&str>)> {
    let line_indents: Vec<usize> = src.split('\n').map(indent_width).collect();
    let mut lines = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut indent = 0;
    let mut physical = 0;
    let mut depth: usize = 0;
    for lexeme in lex(src) {
        match lexeme {
            Lexeme::Token(t) => {
                if current.is_empty() {
                    indent = line_indents[physical];
                }
                match t {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth = depth.saturating_sub(1),
                    _ => {}
                }
                // Multi-line string tokens advance the physical line counter.
                physical += t.matches('\n').count();
                current.push(t);
            }
            Lexeme::Continuation => physical += 1,
            Lexeme::Newline => {
                physical += 1;
                if depth == 0 && !current.is_empty() {
                    lines.push((indent, std::mem::take(&mut current)));
                }
            }
        }
    }
    if !current.is_empty() {
        lines.push((indent, current));
    }
    lines
}

/// Rewrites text into one logical statement per line, tokens separated by a
/// single space. Statements end with ` ;`; a `:` header followed by deeper
/// indentation ends with ` {`, and every dedent closes with a `}` line.
pub fn normalize_structure(source: &str) -> Result<String, PrepError> {
    let lines = logical_lines(source);
    let mut out: Vec<String> = Vec::with_capacity(lines.len() * 2);
    let mut levels = vec![0usize];
    for (n, (indent, tokens)) in lines.iter().enumerate() {
        let mut dedented = false;
        while *indent < *levels.last().unwrap() {
            levels.pop();
            out.push("}".to_owned());
            dedented = true;
        }
        // A dedent must land exactly on an opened level. Over-indentation
        // without a header is tolerated as a continuation.
        if dedented && *indent != *levels.last().unwrap() {
            return Err(PrepError::IndentationInconsistent {
                line: n + 1,
                column: *indent,
            });
        }
        let opens = tokens.last() == Some(&":")
            && lines.get(n + 1).is_some_and(|(next, _)| next > indent);
        let mut text = tokens.join(" ");
        if opens {
            text.push_str(" {");
            levels.push(lines[n + 1].0);
        } else {
            text.push_str(" ;");
        }
        out.push(text);
    }
    for _ in 1..levels.len() {
        out.push("}".to_owned());
    }
    Ok(out.join("\n"))
}

/// Splits text into tokens. Identifiers, numerals, operators, string
/// literals, `;`, `{`, `}` and `<STR>` are single tokens.
pub fn tokenize(submission_id: impl Into<String>, source: &str) -> TokenStream {
    let tokens = lex(source)
        .into_iter()
        .filter_map(|l| match l {
            Lexeme::Token(t) => Some(t.to_owned()),
            _ => None,
        })
        .collect();
    TokenStream {
        submission_id: submission_id.into(),
        tokens,
    }
}

/// Full preprocessing of one program's text, before tokenization.
pub fn preprocess(source: &str, cfg: &PrepConfig) -> Result<String, PrepError> {
    let stripped = strip_comments(source);
    let masked = mask_strings(&stripped, cfg.max_string_len);
    normalize_structure(&masked)
}

pub fn prepare_submission(sub: &Submission, cfg: &PrepConfig) -> Result<TokenStream, PrepError> {
    let text = preprocess(&sub.source_text, cfg).map_err(|e| PrepError::InSubmission {
        id: sub.id.clone(),
        source: Box::new(e),
    })?;
    Ok(tokenize(sub.id.clone(), &text))
}

/// Frequency-filtered token vocabulary with dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    /// Absent when the vocabulary was restored from an embedding file.
    counts: Option<Vec<u64>>,
    min_count: usize,
}

impl Vocab {
    /// Vocabulary from tokens already in index order, without counts.
    pub fn from_ordered_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            counts: None,
            min_count: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn count_of(&self, token: &str) -> Option<u64> {
        let i = self.index_of(token)?;
        self.counts.as_ref().map(|c| c[i])
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// In-vocabulary indices of a stream, skipping unknown tokens.
    pub fn encode(&self, stream: &TokenStream) -> Vec<usize> {
        stream
            .tokens
            .iter()
            .filter_map(|t| self.index_of(t))
            .collect()
    }
}

/// Keeps tokens with total count `>= min_count`, indexed by descending count
/// with lexicographic tie-breaking.
pub fn build_vocab(streams: &[TokenStream], min_count: usize) -> Result<Vocab, PrepError> {
    if min_count == 0 {
        return Err(PrepError::InvalidMinCount);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in streams {
        for t in &s.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    if kept.is_empty() {
        return Err(PrepError::EmptyVocabulary { min_count });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocab::from_ordered_tokens(kept.iter().map(|(t, _)| t.to_string()).collect());
    vocab.counts = Some(kept.iter().map(|&(_, c)| c).collect());
    vocab.min_count = min_count;
    Ok(vocab)
}
