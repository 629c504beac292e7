use crate::error::{Error, Result};

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
/// Segments without any word are dropped. Abbreviations are not special-cased.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if boundary {
            out.push(&text[start..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| s.chars().any(char::is_alphanumeric)).collect()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups (`aeiouy`), minus a silent trailing `e` that follows a
/// consonant, never below 1.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
    let mut groups = 0;
    let mut prev = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = letters.len();
    if n >= 2 && letters[n - 1] == 'e' && !is_vowel(letters[n - 2]) && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

/// Words are whitespace-separated chunks containing a letter or digit.
pub fn text_counts(text: &str) -> TextCounts {
    let words: Vec<&str> = text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric)).collect();
    TextCounts {
        words: words.len(),
        sentences: sentences(text).len(),
        syllables: words.iter().map(|w| syllables(w)).sum(),
    }
}

/// Flesch Reading Ease clamped to `[0, 100]` and divided by 100.
pub fn readability(text: &str) -> Result<f64> {
    let c = text_counts(text);
    if c.words == 0 {
        return Err(Error::Argument("readability needs at least one word".into()));
    }
    let w = c.words as f64;
    let flesch = 206.835 - 1.015 * (w / c.sentences as f64) - 84.6 * (c.syllables as f64 / w);
    Ok(flesch.clamp(0.0, 100.0) / 100.0)
}
