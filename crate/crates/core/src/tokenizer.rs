//! Token counting.
//!
//! Exact provider tokenizers are not needed here: the chunker and the cost
//! model only require counts that are consistent across a run. The default
//! [`WordPunctTokenizer`] treats each maximal run of alphanumeric characters
//! as one token and every other non-whitespace character as its own token.

use std::ops::Range;

/// A pluggable tokenizer. Spans are byte ranges into the input, in order and
/// non-overlapping.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if word_start.is_none() {
                    word_start = Some(i);
                }
                continue;
            }
            if let Some(start) = word_start.take() {
                spans.push(start..i);
            }
            if !ch.is_whitespace() {
                spans.push(i..i + ch.len_utf8());
            }
        }
        if let Some(start) = word_start {
            spans.push(start..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        // Same rule as `spans`, without allocating.
        let mut count = 0;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !ch.is_whitespace() {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Count tokens with the default tokenizer.
pub fn count_tokens(text: &str) -> usize {
    WordPunctTokenizer.count(text)
}
