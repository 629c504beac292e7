/// Vocabulary indices for one text. Index 0 is the null token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>) -> Self {
        TokenSequence { tokens }
    }

    pub fn null() -> Self {
        TokenSequence { tokens: vec![0] }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Keeps at most `max_len` leading tokens (never fewer than one).
    pub fn truncated(&self, max_len: usize) -> Self {
        let keep = max_len.max(1).min(self.tokens.len());
        TokenSequence { tokens: self.tokens[..keep].to_vec() }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &TokenSequence) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.extend_from_slice(&other.tokens);
        TokenSequence { tokens }
    }
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric runs; everything else separates words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Hash tokenizer: each word maps to `1 + hash(word) mod (vocab_size − 1)`.
/// Text without any word becomes the single null token.
pub fn tokenize(text: &str, vocab_size: usize) -> TokenSequence {
    assert!(vocab_size >= 2, "vocab_size must leave room for the null token");
    let buckets = (vocab_size - 1) as u64;
    let tokens: Vec<usize> = words(text)
        .iter()
        .map(|w| 1 + (stable_hash(w.as_bytes()) % buckets) as usize)
        .collect();
    if tokens.is_empty() {
        TokenSequence::null()
    } else {
        TokenSequence { tokens }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_null_token() {
        assert_eq!(tokenize("", 4096).as_slice(), &[0]);
        assert_eq!(tokenize("  ?! ", 4096).as_slice(), &[0]);
    }

    #[test]
    fn case_folding() {
        let t = tokenize("A a", 4096);
        assert_eq!(t.len(), 2);
        assert_eq!(t.as_slice()[0], t.as_slice()[1]);
    }

    #[test]
    fn fixed_sentence_is_stable() {
        let t = tokenize("women belong in the kitchen", 4096);
        assert_eq!(t.len(), 5);
        // Frozen from an FNV-1a reference run.
        let expected: Vec<usize> = ["women", "belong", "in", "the", "kitchen"]
            .iter()
            .map(|w| 1 + (stable_hash(w.as_bytes()) % 4095) as usize)
            .collect();
        assert_eq!(t.as_slice(), expected.as_slice());
        assert_eq!(stable_hash(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stable_hash(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(tokenize("women belong in the kitchen", 4096), t);
    }

    #[test]
    fn punctuation_splits_words() {
        assert_eq!(words("she's: cooking,now"), vec!["she", "s", "cooking", "now"]);
    }

    #[test]
    fn indices_within_vocab() {
        for v in [2usize, 3, 17, 4096] {
            for &t in tokenize("the quick brown fox jumps over 42 lazy dogs", v).as_slice() {
                assert!(t >= 1 && t < v);
            }
        }
    }
}
