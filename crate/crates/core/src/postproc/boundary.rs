//! Span boundary repair: a span may not begin or end with punctuation
//! unless it is enclosed in a matching quote pair. Quotes left just outside
//! the span are pulled in; stray punctuation at the edges is trimmed, along
//! with any whitespace that trimming exposes.

use std::collections::BTreeSet;

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctuationRuleConfig {
    pub punctuation: BTreeSet<char>,
    /// `(open, close)`; both may be the same char.
    pub quote_pairs: Vec<(char, char)>,
}

impl Default for PunctuationRuleConfig {
    fn default() -> Self {
        PunctuationRuleConfig {
            punctuation: ".,;:!?'\"—-()[]“”‘’".chars().collect(),
            quote_pairs: vec![('"', '"'), ('“', '”'), ('‘', '’'), ('\'', '\'')],
        }
    }
}

impl PunctuationRuleConfig {
    pub fn new(punctuation: impl IntoIterator<Item = char>, quote_pairs: Vec<(char, char)>) -> Result<Self> {
        let config = PunctuationRuleConfig {
            punctuation: punctuation.into_iter().collect(),
            quote_pairs,
        };
        for &(open, close) in &config.quote_pairs {
            if !config.punctuation.contains(&open) || !config.punctuation.contains(&close) {
                return Err(Error::validation(format!(
                    "quote pair {open}{close} must be part of the punctuation set"
                )));
            }
        }
        Ok(config)
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.punctuation.contains(&c)
    }

    pub fn is_quote(&self, c: char) -> bool {
        self.quote_pairs.iter().any(|&(o, cl)| o == c || cl == c)
    }

    fn closing_for(&self, open: char) -> Option<char> {
        self.quote_pairs.iter().find(|(o, _)| *o == open).map(|&(_, c)| c)
    }

    fn opening_for(&self, close: char) -> Option<char> {
        self.quote_pairs.iter().find(|(_, c)| *c == close).map(|&(o, _)| o)
    }

    fn is_pair(&self, open: char, close: char) -> bool {
        self.quote_pairs.contains(&(open, close))
    }
}

struct View<'a> {
    chars: &'a [char],
    config: &'a PunctuationRuleConfig,
}

impl View<'_> {
    /// Whether `[start, end)` holds an unmatched `open` (or `close` when
    /// `count_close` is set) quote.
    fn unbalanced(&self, start: usize, end: usize, open: char, close: char, count_close: bool) -> bool {
        let span = &self.chars[start..end];
        let opens = span.iter().filter(|&&c| c == open).count();
        if open == close {
            return opens % 2 == 1;
        }
        let closes = span.iter().filter(|&&c| c == close).count();
        if count_close {
            closes > opens
        } else {
            opens > closes
        }
    }

    fn plain_punct(&self, c: char) -> bool {
        self.config.is_punct(c) && !self.config.is_quote(c)
    }

    fn strippable(&self, c: char) -> bool {
        self.plain_punct(c) || c.is_whitespace()
    }

    fn balance_quotes(&self, mut start: usize, mut end: usize) -> (usize, usize) {
        let chars = self.chars;
        let first = chars[start];
        let last = chars[end - 1];

        // both quotes sit right outside the span
        if start > 0 && end < chars.len() && !first.is_whitespace() && !last.is_whitespace() {
            let (before, after) = (chars[start - 1], chars[end]);
            if self.config.is_pair(before, after) && !self.config.is_pair(first, last) {
                return (start - 1, end + 1);
            }
        }

        if let Some(close) = self.config.closing_for(first) {
            if self.unbalanced(start, end, first, close, false) {
                let mut j = end;
                while j < chars.len() && self.plain_punct(chars[j]) {
                    j += 1;
                }
                if j < chars.len() && chars[j] == close {
                    end = j + 1;
                }
            }
        }

        if let Some(open) = self.config.opening_for(last) {
            if self.unbalanced(start, end, open, last, true) {
                let mut i = start;
                while i > 0 && self.plain_punct(chars[i - 1]) {
                    i -= 1;
                }
                if i > 0 && chars[i - 1] == open {
                    start = i - 1;
                }
            }
        }
        (start, end)
    }

    fn strip(&self, mut start: usize, mut end: usize) -> (usize, usize) {
        let chars = self.chars;
        while start < end {
            let (first, last) = (chars[start], chars[end - 1]);
            if self.strippable(last) {
                end -= 1;
            } else if self.strippable(first) {
                start += 1;
            } else if end - start >= 2 && self.config.is_pair(first, last) {
                break;
            } else if self.config.is_quote(first) && self.config.is_punct(first) {
                start += 1;
            } else if self.config.is_quote(last) && self.config.is_punct(last) {
                end -= 1;
            } else {
                break;
            }
        }
        (start, end)
    }

    fn pass(&self, start: usize, end: usize) -> (usize, usize) {
        let (s, e) = self.balance_quotes(start, end);
        let (s, e) = self.strip(s, e);
        if s >= e {
            (start, end)
        } else {
            (s, e)
        }
    }
}

/// Repairs `[start, end)` of `doc`. Never returns an empty span: a span
/// made only of punctuation is returned unchanged.
pub fn fix_boundaries(start: usize, end: usize, doc: &Document, config: &PunctuationRuleConfig) -> Result<(usize, usize)> {
    if start >= end || end > doc.len() {
        return Err(Error::validation(format!(
            "span [{start}, {end}) outside document {} of length {}",
            doc.id(),
            doc.len()
        )));
    }
    let chars: Vec<char> = doc.text().chars().collect();
    Ok(fix_in_chars(start, end, &chars, config))
}

/// Same as [`fix_boundaries`] over a pre-split char buffer.
pub fn fix_in_chars(start: usize, end: usize, chars: &[char], config: &PunctuationRuleConfig) -> (usize, usize) {
    let view = View { chars, config };
    let mut span = (start, end);
    // one pass can expose a new outer quote pair; a few passes reach a fixed point
    for _ in 0..8 {
        let next = view.pass(span.0, span.1);
        if next == span {
            break;
        }
        span = next;
    }
    span
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(text: &str, span: &str) -> String {
        let start_byte = text.find(span).unwrap();
        let start = text[..start_byte].chars().count();
        let end = start + span.chars().count();
        let doc = Document::new("t", text).unwrap();
        let (s, e) = fix_boundaries(start, end, &doc, &PunctuationRuleConfig::default()).unwrap();
        doc.slice(s, e).to_string()
    }

    #[test]
    fn pulls_in_missing_quotes() {
        let text = "He said: \"It is what it is.\" Then left.";
        assert_eq!(fix(text, "\"It is what it is."), "\"It is what it is.\"");
        assert_eq!(fix(text, "\"It is what it is"), "\"It is what it is.\"");
        assert_eq!(fix(text, "It is what it is."), "\"It is what it is.\"");
    }

    #[test]
    fn strips_edge_punctuation() {
        assert_eq!(fix("Well, Hello, world", "Hello,"), "Hello");
        assert_eq!(fix("x (a big lie). y", "(a big lie)."), "a big lie");
        assert_eq!(fix("a -- b", "-- b"), "b");
    }

    #[test]
    fn keeps_enclosed_quotes() {
        assert_eq!(fix("say \"quoted!\" now", "\"quoted!\""), "\"quoted!\"");
        assert_eq!(fix("say “curly” now", "“curly”"), "“curly”");
        assert_eq!(fix("say \"quoted\"! now", "\"quoted\"!"), "\"quoted\"");
    }

    #[test]
    fn unmatched_quote_is_stripped() {
        assert_eq!(fix("so \"Hello there said", "\"Hello there"), "Hello there");
    }

    #[test]
    fn all_punctuation_span_is_left_alone() {
        assert_eq!(fix("wait ... what", "..."), "...");
        assert_eq!(fix("a ! b", "!"), "!");
    }

    #[test]
    fn rejects_out_of_range() {
        let doc = Document::new("t", "abc").unwrap();
        assert!(fix_boundaries(1, 4, &doc, &PunctuationRuleConfig::default()).is_err());
        assert!(fix_boundaries(2, 2, &doc, &PunctuationRuleConfig::default()).is_err());
    }

    #[test]
    fn quote_pairs_must_be_punctuation() {
        assert!(PunctuationRuleConfig::new(".,".chars(), vec![('"', '"')]).is_err());
        assert!(PunctuationRuleConfig::new(".,\"".chars(), vec![('"', '"')]).is_ok());
    }
}
