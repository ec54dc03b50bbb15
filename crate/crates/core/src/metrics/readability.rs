//! Readability formulas over normalized tweet text, syllable heuristics and
//! MTLD lexical diversity.

use serde::{Deserialize, Serialize};

use crate::corpus::{URL_TOKEN, USER_TOKEN};
use crate::error::{Error, Result};

pub const MTLD_THRESHOLD: f64 = 0.72;

// Words the vowel-group heuristic gets wrong.
const SYLLABLE_EXCEPTIONS: &[(&str, usize)] = &[
    ("area", 3),
    ("business", 2),
    ("every", 3),
    ("idea", 3),
    ("people", 2),
    ("poem", 2),
    ("quiet", 2),
    ("real", 1),
    ("science", 2),
    ("being", 2),
    ("create", 2),
    ("going", 2),
    ("doing", 2),
    ("video", 3),
    ("radio", 3),
    ("media", 3),
    ("covid", 2),
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group count with silent-e handling; at least 1 for any word.
pub fn count_syllables(word: &str) -> usize {
    let w: String = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if w.is_empty() {
        return 0;
    }
    if let Some((_, n)) = SYLLABLE_EXCEPTIONS.iter().find(|(e, _)| *e == w) {
        return *n;
    }
    let chars: Vec<char> = w.chars().collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for (i, &c) in chars.iter().enumerate() {
        let v = is_vowel(c) && !(c == 'y' && i == 0);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = chars.len();
    if groups > 1 && chars[n - 1] == 'e' {
        let consonant_le = n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    } else if groups > 1 && n >= 3 && chars[n - 2] == 'e' && chars[n - 1] == 'd' && !matches!(chars[n - 3], 't' | 'd') {
        groups -= 1;
    }
    groups.max(1)
}

fn is_special_token(tok: &str) -> bool {
    tok == USER_TOKEN
        || tok == URL_TOKEN
        || (tok.len() > 2 && tok.starts_with(':') && tok.ends_with(':'))
}

/// Readability words: non-special tokens stripped of edge punctuation that
/// still contain a letter.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .filter(|t| !is_special_token(t))
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| t.chars().any(char::is_alphabetic))
        .collect()
}

/// Runs of terminal punctuation, minimum 1.
pub fn count_sentences(text: &str) -> usize {
    let mut n = 0;
    let mut in_run = false;
    for c in text.chars() {
        let term = matches!(c, '.' | '!' | '?');
        if term && !in_run {
            n += 1;
        }
        in_run = term;
    }
    n.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub letters: usize,
    /// Words of three or more syllables.
    pub hard_words: usize,
}

pub fn text_counts(text: &str) -> TextCounts {
    let ws = words(text);
    let syl: Vec<usize> = ws.iter().map(|w| count_syllables(w)).collect();
    TextCounts {
        words: ws.len(),
        sentences: count_sentences(text),
        syllables: syl.iter().sum(),
        letters: ws.iter().map(|w| w.chars().filter(|c| c.is_alphanumeric()).count()).sum(),
        hard_words: syl.iter().filter(|s| **s >= 3).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityScores {
    pub flesch_ease: f64,
    pub flesch_kincaid_grade: f64,
    pub ari: f64,
    pub linsear_write: f64,
}

/// `None` when the text has no words.
pub fn readability(c: &TextCounts) -> Option<ReadabilityScores> {
    if c.words == 0 {
        return None;
    }
    let w = c.words as f64;
    let wps = w / c.sentences as f64;
    let spw = c.syllables as f64 / w;
    let easy = (c.words - c.hard_words) as f64;
    let r = (easy + 3.0 * c.hard_words as f64) / c.sentences as f64;
    Some(ReadabilityScores {
        flesch_ease: 206.835 - 1.015 * wps - 84.6 * spw,
        flesch_kincaid_grade: 0.39 * wps + 11.8 * spw - 15.59,
        ari: 4.71 * (c.letters as f64 / w) + 0.5 * wps - 21.43,
        linsear_write: if r > 20.0 { r / 2.0 } else { r / 2.0 - 1.0 },
    })
}

fn mtld_factors<'a>(tokens: impl Iterator<Item = &'a str>) -> f64 {
    let mut factors = 0.0;
    let mut types = std::collections::HashSet::new();
    let mut count = 0usize;
    let mut ttr = 1.0;
    for tok in tokens {
        types.insert(tok);
        count += 1;
        ttr = types.len() as f64 / count as f64;
        if ttr <= MTLD_THRESHOLD {
            factors += 1.0;
            types.clear();
            count = 0;
            ttr = 1.0;
        }
    }
    if count > 0 {
        factors += (1.0 - ttr) / (1.0 - MTLD_THRESHOLD);
    }
    factors
}

/// Bidirectional MTLD: token count over the mean of forward and backward
/// factor counts. With no completed or partial factor the token count itself
/// is returned.
pub fn mtld(tokens: &[&str]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("mtld of empty token list"));
    }
    let fwd = mtld_factors(tokens.iter().copied());
    let bwd = mtld_factors(tokens.iter().rev().copied());
    let factors = (fwd + bwd) / 2.0;
    let n = tokens.len() as f64;
    Ok(if factors > 0.0 { n / factors } else { n })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Textbook formulas written out longhand from counts.
    fn reference(w: f64, s: f64, syl: f64, letters: f64) -> (f64, f64, f64) {
        let fre = 206.835 - 1.015 * (w / s) - 84.6 * (syl / w);
        let fk = 0.39 * (w / s) + 11.8 * (syl / w) - 15.59;
        let ari = 4.71 * (letters / w) + 0.5 * (w / s) - 21.43;
        (fre, fk, ari)
    }

    #[test]
    fn cat_sat_on_the_mat() {
        let c = text_counts("The cat sat on the mat.");
        assert_eq!(
            c,
            TextCounts { words: 6, sentences: 1, syllables: 6, letters: 17, hard_words: 0 }
        );
        let r = readability(&c).unwrap();
        assert!((r.flesch_ease - 116.145).abs() < 1e-6);
        assert!((r.ari - (-5.085)).abs() < 1e-6);
        let (fre, fk, ari) = reference(6.0, 1.0, 6.0, 17.0);
        assert!((r.flesch_ease - fre).abs() < 1e-9);
        assert!((r.flesch_kincaid_grade - fk).abs() < 1e-9);
        assert!((r.ari - ari).abs() < 1e-9);
    }

    #[test]
    fn linsear_branches() {
        let long = vec!["cat"; 100].join(" ") + ".";
        let r = readability(&text_counts(&long)).unwrap();
        assert!((r.linsear_write - 50.0).abs() < 1e-9);
        // r = 6 → 6/2 - 1
        let r = readability(&text_counts("The cat sat on the mat.")).unwrap();
        assert!((r.linsear_write - 2.0).abs() < 1e-9);
    }

    #[test]
    fn syllable_table() {
        for (w, n) in [
            ("the", 1), ("cat", 1), ("table", 2), ("make", 1), ("beautiful", 3),
            ("yesterday", 3), ("wanted", 2), ("jumped", 1), ("people", 2),
            ("education", 4), ("a", 1), ("rhythm", 1), ("", 0),
        ] {
            assert_eq!(count_syllables(w), n, "{w}");
        }
    }

    #[test]
    fn special_tokens_are_not_words() {
        assert_eq!(words("@USER hi HTTPURL :fire: #tag 123 ..."), vec!["hi", "tag"]);
        assert_eq!(count_sentences("no terminal"), 1);
        assert_eq!(count_sentences("One. Two?! Three"), 2);
    }

    fn reference_mtld_pass(tokens: &[&str]) -> f64 {
        let mut factors = 0.0;
        let mut start = 0;
        let mut i = 0;
        while i < tokens.len() {
            let seg = &tokens[start..=i];
            let mut uniq = seg.to_vec();
            uniq.sort();
            uniq.dedup();
            let ttr = uniq.len() as f64 / seg.len() as f64;
            if ttr <= 0.72 {
                factors += 1.0;
                start = i + 1;
            }
            i += 1;
        }
        if start < tokens.len() {
            let seg = &tokens[start..];
            let mut uniq = seg.to_vec();
            uniq.sort();
            uniq.dedup();
            let ttr = uniq.len() as f64 / seg.len() as f64;
            factors += (1.0 - ttr) / 0.28;
        }
        factors
    }

    #[test]
    fn mtld_examples() {
        let same = vec!["x"; 50];
        let oracle = {
            let rev: Vec<&str> = same.iter().rev().copied().collect();
            50.0 / ((reference_mtld_pass(&same) + reference_mtld_pass(&rev)) / 2.0)
        };
        let m = mtld(&same).unwrap();
        assert!((m - oracle).abs() < 1e-12);
        assert!(m < 10.0);

        let names: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let distinct: Vec<&str> = names.iter().map(String::as_str).collect();
        assert_eq!(mtld(&distinct).unwrap(), 50.0);
        assert_eq!(mtld(&["solo"]).unwrap(), 1.0);
        assert!(mtld(&[]).is_err());
    }

    #[test]
    fn mtld_matches_reference_on_text() {
        let text = "the quick brown fox jumps over the lazy dog and the dog sleeps while the fox runs \
                    over the hill and the sun sets over the quiet town where the dog and the fox live";
        let toks: Vec<&str> = text.split_whitespace().collect();
        let rev: Vec<&str> = toks.iter().rev().copied().collect();
        let oracle = toks.len() as f64 / ((reference_mtld_pass(&toks) + reference_mtld_pass(&rev)) / 2.0);
        assert!((mtld(&toks).unwrap() - oracle).abs() < 1e-9);
    }
}
