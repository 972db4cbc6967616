//! Tokenisation shared by the stub embedder and the rules parser.

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "that", "is", "are", "which", "of", "to", "and", "with", "this", "it",
    "its", "one", "some", "any",
];

pub fn is_stopword(tok: &str) -> bool {
    STOPWORDS.contains(&tok)
}

/// Lower-cased alphanumeric words in order of appearance.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Distinct non-stopword tokens, sorted. Bag semantics: word order and
/// repetition do not matter.
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut toks: Vec<String> = words(text).into_iter().filter(|w| !is_stopword(w)).collect();
    toks.sort();
    toks.dedup();
    toks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bag_of_tokens() {
        assert_eq!(content_tokens("The red chair, red!"), vec!["chair", "red"]);
        assert_eq!(content_tokens("chair red"), content_tokens("red chair"));
        assert!(content_tokens("the a of").is_empty());
    }
}
