//! Character-level text helpers shared across modules.
//!
//! All offsets in this crate count Unicode scalar values, never bytes.

use sha2::{Digest, Sha256};

/// Byte positions of every char boundary of a string, for O(1) char slicing.
#[derive(Debug, Clone)]
pub struct CharIndexed<'a> {
    text: &'a str,
    bounds: Vec<usize>,
}

impl<'a> CharIndexed<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        Self { text, bounds }
    }

    /// Length in chars.
    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slice by char offsets; `None` when out of bounds or reversed.
    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.bounds[start]..self.bounds[end]])
    }
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Lowercased, space-padded character n-grams in order of occurrence.
///
/// `"abc"` with `n = 3` yields `" ab"`, `"abc"`, `"bc "`. A padded string
/// shorter than `n` yields nothing.
pub fn padded_char_ngrams(s: &str, n: usize) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(s.chars().flat_map(char::to_lowercase))
        .chain(std::iter::once(' '))
        .collect();
    if n == 0 || padded.len() < n {
        return Vec::new();
    }
    padded.windows(n).map(|w| w.iter().collect()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slicing_is_scalar_based() {
        let t = CharIndexed::new("crème brûlée");
        assert_eq!(t.len(), 12);
        assert_eq!(t.slice(0, 5), Some("crème"));
        assert_eq!(t.slice(6, 12), Some("brûlée"));
        assert_eq!(t.slice(6, 13), None);
        assert_eq!(t.slice(3, 2), None);
    }

    #[test]
    fn trigram_padding() {
        assert_eq!(padded_char_ngrams("abc", 3), vec![" ab", "abc", "bc "]);
        assert_eq!(padded_char_ngrams("A", 3), vec![" a "]);
        assert!(padded_char_ngrams("", 3).is_empty());
    }
}
