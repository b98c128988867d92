//! The shared metric tokenizer: lowercase, split on whitespace and
//! punctuation. Every metric in this module uses it.

pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Counts of n-grams (joined with an unprintable separator) in a token list.
pub fn ngram_counts(tokens: &[String], n: usize) -> std::collections::HashMap<String, usize> {
    let mut map = std::collections::HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *map.entry(w.join("\u{1}")).or_insert(0) += 1;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_strips_punctuation() {
        assert_eq!(metric_tokens("The cat, sat!"), vec!["the", "cat", "sat"]);
    }

    #[test]
    fn empty_and_punct_only() {
        assert!(metric_tokens("").is_empty());
        assert!(metric_tokens("!!! ...").is_empty());
    }

    #[test]
    fn ngram_counting() {
        let toks = metric_tokens("a b a b");
        let bi = ngram_counts(&toks, 2);
        assert_eq!(bi.get("a\u{1}b"), Some(&2));
        assert_eq!(bi.get("b\u{1}a"), Some(&1));
        assert!(ngram_counts(&toks, 5).is_empty());
    }
}
