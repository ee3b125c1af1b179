use std::sync::LazyLock;

use regex::Regex;

static PUNCTUATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\p{P}").expect("static pattern compiles"));

/// Remove Unicode punctuation, lowercase, and collapse whitespace.
///
/// Accented letters are kept: `"¿Cómo estás?"` becomes `"cómo estás"`.
pub fn clean_sentence(s: &str) -> String {
    let stripped = PUNCTUATION.replace_all(s, "");
    let lower = stripped.to_lowercase();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokenisation of an already cleaned sentence.
pub fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split_whitespace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(clean_sentence("Hello, World!"), "hello world");
        assert_eq!(clean_sentence("¿Cómo estás?"), "cómo estás");
        assert_eq!(clean_sentence(""), "");
        assert_eq!(clean_sentence("I'm   fine.\t Thanks"), "im fine thanks");
        assert_eq!(clean_sentence("«Ñandú» ÉL"), "ñandú él");
        assert_eq!(clean_sentence("..."), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = clean_sentence(&s);
            prop_assert_eq!(clean_sentence(&once), once);
        }
    }
}
