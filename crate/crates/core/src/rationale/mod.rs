//! Detection and reasoning prompts plus rationale generation.
//!
//! The aligned multimodal context reaches the language model as a short
//! textual summary of the meme text with its category and salient words.
//! Prompt building is pure string work; only [`CompletionBackend::Http`]
//! touches the network.

mod backend;
mod template;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::MemeRecord;
use crate::encoders::words;
use crate::error::{Error, Result};
use crate::heads::Category;

pub use backend::{generate_many, CompletionBackend, HttpConfig, API_KEY_ENV, DEFAULT_TIMEOUT, DEFAULT_WORKERS};
pub use template::PromptTemplate;

pub const POSITIVE_LABEL: &str = "misogynous";
pub const NEGATIVE_LABEL: &str = "non-misogynous";
pub const SALIENT_WORDS: usize = 5;
pub const SUPPORTED_SHOTS: [usize; 3] = [0, 2, 5];

pub const DETECTION_INSTRUCTIONS: &str = "Decide whether the meme below is misogynous, that is undignified, hateful, \
mocking or stereotyping toward women. Answer with misogynous or non-misogynous and name its category: \
Kitchen, Leadership, Working, Shopping or Other.";

pub const REASONING_INSTRUCTIONS: &str = "Explain in two or three sentences why the meme received this label, \
specifically relating it to the identified category.";

const DEFAULT_POOL: &str = include_str!("../../../../data/fewshot_pool.jsonl");

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "are", "as", "at", "be", "because", "but", "by", "can", "do", "for",
    "from", "had", "has", "have", "he", "her", "his", "i", "if", "in", "into", "is", "it", "its", "just", "me", "my",
    "no", "not", "of", "on", "or", "our", "she", "so", "that", "the", "their", "them", "then", "there", "they",
    "this", "to", "up", "was", "we", "were", "what", "when", "which", "who", "will", "with", "you", "your",
];

pub fn label_token(label: bool) -> &'static str {
    if label { POSITIVE_LABEL } else { NEGATIVE_LABEL }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub text: String,
    pub label: bool,
    pub category: Category,
    pub rationale: String,
}

pub fn parse_pool(text: &str) -> Result<Vec<FewShotExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: FewShotExample =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if ex.rationale.trim().is_empty() {
            return Err(Error::Validation(format!("few-shot line {}: empty rationale", i + 1)));
        }
        out.push(ex);
    }
    Ok(out)
}

/// The few-shot pool shipped with the crate.
pub fn default_pool() -> Vec<FewShotExample> {
    parse_pool(DEFAULT_POOL).expect("shipped pool is valid")
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<Vec<FewShotExample>> {
    parse_pool(&fs::read_to_string(path)?)
}

fn check_shots(k: usize) -> Result<()> {
    if SUPPORTED_SHOTS.contains(&k) {
        Ok(())
    } else {
        Err(Error::Argument(format!("unsupported shot count {k}; use 0, 2 or 5")))
    }
}

/// The first `k` examples of the pool.
pub fn select_shots(pool: &[FewShotExample], k: usize) -> Result<&[FewShotExample]> {
    check_shots(k)?;
    pool.get(..k).ok_or_else(|| Error::Argument(format!("pool holds {} examples, {k} requested", pool.len())))
}

/// Numbered example block; a longer selection from the same pool extends
/// the block of a shorter one.
pub fn example_block(shots: &[FewShotExample]) -> String {
    let mut out = String::new();
    for (i, s) in shots.iter().enumerate() {
        writeln!(
            out,
            "Example {}:\nMeme: {}\nLabel: {}\nCategory: {}\nRationale: {}\n",
            i + 1,
            s.text,
            label_token(s.label),
            s.category,
            s.rationale
        )
        .unwrap();
    }
    out
}

fn display_text(text: &str) -> &str {
    if text.trim().is_empty() { "(no text, image only)" } else { text }
}

pub fn build_detection_prompt(meme: &MemeRecord, shots: &[FewShotExample], tpl: &PromptTemplate) -> Result<String> {
    check_shots(shots.len())?;
    let text = meme.meme_text();
    tpl.render(&[
        ("instructions", DETECTION_INSTRUCTIONS),
        ("shots", &example_block(shots)),
        ("context_summary", display_text(&text)),
    ])
}

pub fn build_reasoning_prompt(summary: &str, label: bool, category: Category, tpl: &PromptTemplate) -> Result<String> {
    if summary.trim().is_empty() {
        return Err(Error::Argument("reasoning prompt needs a context summary".into()));
    }
    tpl.render(&[
        ("context_summary", summary),
        ("label", label_token(label)),
        ("category", category.name()),
        ("instructions", REASONING_INSTRUCTIONS),
    ])
}

/// Up to `k` distinct non-stopwords, longest first, earlier first on ties.
pub fn salient_words(text: &str, k: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut ws: Vec<String> =
        words(text).into_iter().filter(|w| !STOPWORDS.contains(&w.as_str()) && seen.insert(w.clone())).collect();
    ws.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()));
    ws.truncate(k);
    ws
}

/// Textual stand-in for the aligned multimodal context.
pub fn context_summary(meme_text: &str, category: Category) -> String {
    let salient = salient_words(meme_text, SALIENT_WORDS);
    let salient = if salient.is_empty() { "none".to_string() } else { salient.join(", ") };
    format!("Meme text: \"{}\". Category: {category}. Salient words: {salient}.", display_text(meme_text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TextKind;

    fn meme(text: &str) -> MemeRecord {
        MemeRecord {
            id: "m".into(),
            category: Category::Kitchen,
            text_kind: TextKind::Same,
            caption: text.into(),
            overlay: text.into(),
            image_ref: "m.mme".into(),
            misogyny_label: None,
        }
    }

    #[test]
    fn shipped_pool_parses() {
        let pool = default_pool();
        assert!(pool.len() >= 5);
        assert!(pool.iter().all(|s| !s.rationale.is_empty()));
    }

    #[test]
    fn zero_shot_has_no_example_block() {
        let p = build_detection_prompt(&meme("go make dinner"), &[], &PromptTemplate::detection()).unwrap();
        assert!(!p.contains("Example 1"));
        assert!(p.contains("go make dinner"));
        assert!(p.starts_with(DETECTION_INSTRUCTIONS));
    }

    #[test]
    fn two_shots_in_order() {
        let pool = default_pool();
        let shots = select_shots(&pool, 2).unwrap();
        let p = build_detection_prompt(&meme("x"), shots, &PromptTemplate::detection()).unwrap();
        let a = p.find(&pool[0].rationale).unwrap();
        let b = p.find(&pool[1].rationale).unwrap();
        assert!(a < b);
    }

    #[test]
    fn five_shot_block_extends_two_shot_block() {
        let pool = default_pool();
        let two = example_block(select_shots(&pool, 2).unwrap());
        let five = example_block(select_shots(&pool, 5).unwrap());
        assert!(five.starts_with(&two) && five.len() > two.len());
    }

    #[test]
    fn unsupported_shot_counts() {
        let pool = default_pool();
        assert!(matches!(select_shots(&pool, 3), Err(Error::Argument(_))));
        let p = build_detection_prompt(&meme("x"), &pool[..1], &PromptTemplate::detection());
        assert!(matches!(p, Err(Error::Argument(_))));
    }

    #[test]
    fn reasoning_prompt_order() {
        let summary = context_summary("back to the kitchen woman", Category::Kitchen);
        let p = build_reasoning_prompt(&summary, true, Category::Kitchen, &PromptTemplate::reasoning()).unwrap();
        let s = p.find(&summary).unwrap();
        let l = s + summary.len() + p[s + summary.len()..].find(POSITIVE_LABEL).unwrap();
        let c = l + p[l..].find("Kitchen").unwrap();
        let i = c + p[c..].find("specifically relating it to the identified category").unwrap();
        assert!(s < l && l < c && c < i);
        assert_eq!(p, build_reasoning_prompt(&summary, true, Category::Kitchen, &PromptTemplate::reasoning()).unwrap());
        let neg = build_reasoning_prompt("s", false, Category::Other, &PromptTemplate::reasoning()).unwrap();
        assert!(neg.contains(NEGATIVE_LABEL) && neg.contains("Other"));
        assert!(matches!(build_reasoning_prompt(" ", true, Category::Other, &PromptTemplate::reasoning()), Err(Error::Argument(_))));
    }

    #[test]
    fn salient_word_rules() {
        assert_eq!(salient_words("The kitchen is where she belongs, kitchen forever", 3), vec!["kitchen", "belongs", "forever"]);
        assert!(salient_words("the of and", 5).is_empty());
        let s = context_summary("", Category::Shopping);
        assert!(s.contains("image only") && s.contains("Shopping") && s.ends_with("Salient words: none."));
    }
}
