//! Pluggable tokenization. The shipped default splits on whitespace plus
//! punctuation so the toolkit carries no model dependency; a byte-pair
//! tokenizer can be attached through the same trait.

use std::ops::Range;

/// A deterministic tokenizer over UTF-8 text.
///
/// Implementations report token byte spans so that chunking can slice the
/// original text at token boundaries. Spans must be non-overlapping and in
/// document order.
pub trait Tokenizer: Sync {
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }

    fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }
}

/// Whitespace-plus-punctuation splitter: maximal alphanumeric runs are one
/// token each, every other non-whitespace character is its own token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespacePunct;

impl Tokenizer for WhitespacePunct {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                word_start.get_or_insert(i);
            } else {
                if let Some(start) = word_start.take() {
                    spans.push(start..i);
                }
                if !ch.is_whitespace() {
                    spans.push(i..i + ch.len_utf8());
                }
            }
        }
        if let Some(start) = word_start {
            spans.push(start..text.len());
        }
        spans
    }
}
