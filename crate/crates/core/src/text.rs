//! Tokenization and string normalization shared by linking, scoring, and
//! corpus statistics.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters; everything
//! else (whitespace, punctuation, symbols) is a boundary.

use std::ops::Range;

/// A token with its byte span in the source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub span: Range<usize>,
}

impl Token<'_> {
    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

/// Splits `text` into alphanumeric tokens with byte offsets.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(Token {
                text: &text[s..i],
                span: s..i,
            });
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &text[s..],
            span: s..text.len(),
        });
    }
    out
}

/// Lowercased token strings.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).iter().map(Token::lower).collect()
}

/// Lowercase, drop punctuation, collapse whitespace.
///
/// Punctuation is replaced by a space so that "Kym Karath's" and
/// "Kym Karath s" normalize identically and token boundaries survive.
pub fn normalize_loose(text: &str) -> String {
    words(text).join(" ")
}

/// True when the normalized form of `needle` occurs in the normalized form
/// of `haystack` on token boundaries. Empty needles never match.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = normalize_loose(needle);
    if needle.is_empty() {
        return false;
    }
    let hay = format!(" {} ", normalize_loose(haystack));
    hay.contains(&format!(" {needle} "))
}
