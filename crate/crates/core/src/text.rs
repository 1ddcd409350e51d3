//! Stop-word list and a rule-based lemmatizer.
//!
//! Both are fixed and versioned so cleaned corpora are reproducible. The
//! stop list is a common English function-word list; apostrophes are
//! already stripped by normalization, so contractions appear fused
//! (`dont`, `isnt`).

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const STOPLIST_VERSION: &str = "en-1";

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "arent", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "couldnt", "did", "didnt", "do", "does", "doesnt", "doing", "dont",
    "down", "during", "each", "few", "for", "from", "further", "had", "hadnt", "has", "hasnt",
    "have", "havent", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
    "how", "i", "if", "in", "into", "is", "isnt", "it", "its", "itself", "just", "me", "more",
    "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she", "should",
    "shouldnt", "so", "some", "such", "than", "that", "thats", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "wasnt", "we", "were", "werent", "what", "when",
    "where", "which", "while", "who", "whom", "why", "will", "with", "wont", "would", "wouldnt",
    "you", "your", "yours", "yourself", "yourselves",
];

#[derive(Debug)]
pub struct StopList {
    words: HashSet<&'static str>,
}

impl StopList {
    pub fn english() -> &'static StopList {
        static LIST: OnceLock<StopList> = OnceLock::new();
        LIST.get_or_init(|| StopList {
            words: ENGLISH_STOPWORDS.iter().copied().collect(),
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Suffix-rule lemmatizer.
///
/// Noun rules (always on): `-ies -> -y`, `-sses/-xes/-zes/-ches/-shes` drop
/// `-es`, other `-s` dropped unless the word ends in `ss`, `us` or `is`.
/// Verb rules (`-ing`, `-ed` stripping) are off by default, which matches a
/// dictionary lemmatizer run with its default noun part of speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemmatizer {
    pub min_stem: usize,
    pub strip_verb_suffixes: bool,
}

impl Default for Lemmatizer {
    fn default() -> Self {
        Lemmatizer {
            min_stem: 3,
            strip_verb_suffixes: false,
        }
    }
}

impl Lemmatizer {
    pub fn lemmatize(&self, token: &str) -> String {
        if !token.is_ascii() {
            return token.to_string();
        }
        let n = token.len();
        let stem_ok = |cut: usize| n >= cut && n - cut >= self.min_stem;

        if token.ends_with("ies") && stem_ok(3) {
            return format!("{}y", &token[..n - 3]);
        }
        for suf in ["sses", "xes", "zes", "ches", "shes"] {
            if token.ends_with(suf) && stem_ok(2) {
                return token[..n - 2].to_string();
            }
        }
        if token.ends_with('s')
            && !token.ends_with("ss")
            && !token.ends_with("us")
            && !token.ends_with("is")
            && stem_ok(1)
        {
            return token[..n - 1].to_string();
        }
        if self.strip_verb_suffixes {
            if token.ends_with("ing") && stem_ok(3) {
                return undouble(&token[..n - 3]);
            }
            if token.ends_with("ed") && stem_ok(2) {
                return undouble(&token[..n - 2]);
            }
        }
        token.to_string()
    }
}

// "stopped" -> "stop", "fixing" -> "fix"
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && !matches!(b[n - 1], b'l' | b's' | b'z') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stoplist_size_and_members() {
        let s = StopList::english();
        assert!(s.len() >= 140 && s.len() <= 160, "{}", s.len());
        for w in ["is", "was", "the", "of", "were"] {
            assert!(s.contains(w));
        }
        for w in ["todo", "fixme", "hack", "later", "fix"] {
            assert!(!s.contains(w));
        }
    }

    #[test]
    fn noun_rules() {
        let l = Lemmatizer::default();
        let cases = [
            ("files", "file"),
            ("classes", "class"),
            ("boxes", "box"),
            ("patches", "patch"),
            ("dependencies", "dependency"),
            ("does", "doe"),
            ("status", "status"),
            ("analysis", "analysis"),
            ("class", "class"),
            ("gas", "gas"),
            ("fudging", "fudging"),
            ("used", "used"),
            ("todo", "todo"),
        ];
        for (i, o) in cases {
            assert_eq!(l.lemmatize(i), o, "{i}");
        }
    }

    #[test]
    fn verb_rules_when_enabled() {
        let l = Lemmatizer {
            strip_verb_suffixes: true,
            ..Default::default()
        };
        assert_eq!(l.lemmatize("fixing"), "fix");
        assert_eq!(l.lemmatize("stopped"), "stop");
        assert_eq!(l.lemmatize("called"), "call");
        assert_eq!(l.lemmatize("red"), "red");
        assert_eq!(l.lemmatize("thing"), "thing");
    }
}
