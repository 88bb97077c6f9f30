use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::sequencing::{LANG_SEP, MASK_TOKEN};

pub const UNK: &str = "[UNK]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte span in the source string.
    pub span: Range<usize>,
}

fn is_han(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FFFF)
}

/// Word-level tokenization: special tokens, lowercased alphanumeric runs,
/// single Han characters, and single punctuation characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = text.len();
    while i < bytes {
        let rest = &text[i..];
        if let Some(special) = [LANG_SEP, MASK_TOKEN].into_iter().find(|s| rest.starts_with(s)) {
            out.push(Token {
                text: special.to_string(),
                span: i..i + special.len(),
            });
            i += special.len();
            continue;
        }
        let c = rest.chars().next().expect("non-empty");
        if c.is_whitespace() {
            i += c.len_utf8();
        } else if is_han(c) || !c.is_alphanumeric() {
            out.push(Token {
                text: c.to_string(),
                span: i..i + c.len_utf8(),
            });
            i += c.len_utf8();
        } else {
            let end = rest
                .char_indices()
                .find(|&(_, ch)| !ch.is_alphanumeric() || is_han(ch))
                .map_or(rest.len(), |(j, _)| j);
            out.push(Token {
                text: rest[..end].to_lowercase(),
                span: i..i + end,
            });
            i += end;
        }
    }
    out
}

/// Word-level vocabulary; index 0 is `[UNK]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times, most frequent first.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok.text).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && w != LANG_SEP && w != MASK_TOKEN)
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [UNK, LANG_SEP, MASK_TOKEN]
            .into_iter()
            .map(str::to_string)
            .chain(words.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_specials_words_and_han() {
        let toks = tokenize("[/s] Husband | hubby : A woman's [MASK] 婚姻伴侣 [/s]");
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(
            texts,
            ["[/s]", "husband", "|", "hubby", ":", "a", "woman", "'", "s", "[MASK]", "婚", "姻", "伴", "侣", "[/s]"]
        );
        assert_eq!(toks[1].span, 5..12);
    }

    #[test]
    fn mask_inside_han_run() {
        let toks = tokenize("女人的[MASK]伴侣");
        assert_eq!(toks[3].text, "[MASK]");
        assert_eq!(toks[3].span, 9..15);
    }

    #[test]
    fn vocabulary_orders_by_frequency() {
        let v = Vocabulary::build(["b a a", "a c"], 1);
        assert_eq!(v.token(3), "a");
        assert_eq!(v.id("zzz"), 0);
        assert_eq!(v.id("[/s]"), 1);
        let v2 = Vocabulary::build(["b a a", "a c"], 2);
        assert_eq!(v2.len(), 4);
    }
}
