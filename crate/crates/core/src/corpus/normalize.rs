//! Tweet text normalization: special tokens for mentions and URLs, emoji
//! aliases, whitespace collapse.

use std::sync::LazyLock;

use regex::Regex;

pub const USER_TOKEN: &str = "@USER";
pub const URL_TOKEN: &str = "HTTPURL";

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").expect("url regex"));
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").expect("mention regex"));
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\w+)").expect("hashtag regex"));

// Longest emoji sequence we try to match (ZWJ families, flags with tags).
const MAX_EMOJI_CHARS: usize = 10;

pub fn normalize_tweet(text_raw: &str) -> String {
    let text = URL_RE.replace_all(text_raw, URL_TOKEN);
    let text = MENTION_RE.replace_all(&text, USER_TOKEN);
    let text = replace_emoji(&text);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replaces each emoji sequence that has a known shortcode with `:name:`.
/// Unknown emoji are left untouched.
pub fn replace_emoji(text: &str) -> String {
    if text.is_ascii() {
        return text.to_owned();
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_ascii() {
            out.push(c);
            i += 1;
            continue;
        }
        let max_len = MAX_EMOJI_CHARS.min(chars.len() - i);
        let mut matched = None;
        for len in (1..=max_len).rev() {
            let end = chars.get(i + len).map_or(text.len(), |&(b, _)| b);
            if let Some(code) = emojis::get(&text[start..end]).and_then(|e| e.shortcode()) {
                matched = Some((len, code));
                break;
            }
        }
        match matched {
            Some((len, code)) => {
                out.push(':');
                out.push_str(code);
                out.push(':');
                i += len;
            }
            None => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Lowercased, `#`-stripped hashtags found in raw text.
pub fn extract_hashtags(text_raw: &str) -> Vec<String> {
    HASHTAG_RE
        .captures_iter(text_raw)
        .map(|c| c[1].to_lowercase())
        .collect()
}

pub fn extract_urls(text_raw: &str) -> Vec<String> {
    URL_RE.find_iter(text_raw).map(|m| m.as_str().to_owned()).collect()
}

pub fn count_mentions(text_raw: &str) -> u32 {
    MENTION_RE.find_iter(text_raw).count() as u32
}

pub fn clean_hashtag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

pub fn token_count(text_norm: &str) -> usize {
    text_norm.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn special_tokens() {
        assert_eq!(
            normalize_tweet("hi @bob see https://x.co/a"),
            "hi @USER see HTTPURL"
        );
        assert_eq!(normalize_tweet("visit www.example.org/x now"), "visit HTTPURL now");
    }

    #[test]
    fn empty_and_whitespace() {
        assert_eq!(normalize_tweet(""), "");
        assert_eq!(normalize_tweet("  a \t\n b  "), "a b");
    }

    #[test]
    fn emoji_alias() {
        // U+1F525 FIRE has shortcode "fire" in the bundled table.
        assert_eq!(emojis::get("\u{1F525}").unwrap().shortcode(), Some("fire"));
        assert_eq!(normalize_tweet("go 🔥 now"), "go :fire: now");
        assert_eq!(normalize_tweet("❤️x"), ":heart:x");
    }

    #[test]
    fn unknown_non_ascii_passes_through() {
        assert_eq!(normalize_tweet("café ñ 中文"), "café ñ 中文");
    }

    #[test]
    fn hashtags_lowercase_and_stripped() {
        assert_eq!(extract_hashtags("#A b #Foo_1"), vec!["a", "foo_1"]);
        assert_eq!(clean_hashtag("#MAGA"), "maga");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,80}") {
            let once = normalize_tweet(&s);
            prop_assert_eq!(normalize_tweet(&once), once);
        }

        #[test]
        fn normalize_is_idempotent_on_tweetlike(
            parts in proptest::collection::vec(
                prop_oneof![
                    "[a-z]{1,8}", "@[a-zA-Z0-9_]{1,10}", "https?://[a-z./]{1,12}",
                    "#[a-z]{1,6}", Just("🔥".to_owned()), Just("👍🏽".to_owned()),
                    Just("👨‍👩‍👧".to_owned()), "[ \t\n]{1,3}",
                ],
                0..20,
            )
        ) {
            let s: String = parts.concat();
            let once = normalize_tweet(&s);
            prop_assert!(!once.contains("http://") && !once.contains("https://"));
            prop_assert_eq!(normalize_tweet(&once), once);
        }
    }
}
