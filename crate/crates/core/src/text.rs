//! Text normalization shared by the exact-match clusterer and ROUGE-L.

use unicode_normalization::UnicodeNormalization;

/// NFKC, lowercase, drop ASCII punctuation, collapse whitespace runs to a
/// single space and trim.
pub fn normalize(text: &str) -> String {
    let folded: String = text
        .nfkc()
        .flat_map(char::to_lowercase)
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}
