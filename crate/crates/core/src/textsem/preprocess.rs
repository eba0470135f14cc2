use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textsem::porter;

/// Pinned English stopword list used when no override file is given.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    /// Tokens shorter than this (in characters, before stemming) are dropped.
    pub min_token_length: usize,
    pub stopwords: BTreeSet<String>,
    pub stemming: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_token_length: 3,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            stemming: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_length == 0 {
            return Err(Error::InvalidConfig("min_token_length must be >= 1".into()));
        }
        if let Some(w) = self.stopwords.iter().find(|w| w.to_lowercase() != **w) {
            return Err(Error::InvalidConfig(format!("stopword {w:?} is not lowercase")));
        }
        Ok(())
    }

    /// Replaces the stopword list with one lowercase term per line from `path`.
    /// Blank lines are ignored.
    pub fn with_stopword_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() {
                continue;
            }
            if w.to_lowercase() != w {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("stopword {w:?} is not lowercase"),
                });
            }
            words.insert(w.to_string());
        }
        self.stopwords = words;
        Ok(self)
    }
}

/// Lowercases, splits on every non-alphabetic character, drops stopwords and
/// short tokens, then stems. Token order is preserved.
pub fn preprocess(text: &str, cfg: &PreprocessConfig) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .filter(|t| t.chars().count() >= cfg.min_token_length)
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(|t| {
            if cfg.stemming {
                porter::stem(t)
            } else {
                t.to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(stop: &[&str], min: usize, stemming: bool) -> PreprocessConfig {
        PreprocessConfig {
            min_token_length: min,
            stopwords: stop.iter().map(|s| s.to_string()).collect(),
            stemming,
        }
    }

    #[test]
    fn punctuation_case_stopwords_and_length() {
        let c = cfg(&["a", "in"], 3, true);
        assert_eq!(preprocess("A man, in RED!", &c), vec!["man", "red"]);
    }

    #[test]
    fn empty_text() {
        assert!(preprocess("", &PreprocessConfig::default()).is_empty());
        assert!(preprocess("... 42 !!", &PreprocessConfig::default()).is_empty());
    }

    #[test]
    fn digits_split_tokens() {
        let c = cfg(&[], 1, false);
        assert_eq!(preprocess("abc123def", &c), vec!["abc", "def"]);
    }

    #[test]
    fn stemming_toggle() {
        let on = cfg(&[], 3, true);
        let off = cfg(&[], 3, false);
        assert_eq!(preprocess("running runners ran", &on), vec!["run", "runner", "ran"]);
        assert_eq!(
            preprocess("running runners ran", &off),
            vec!["running", "runners", "ran"]
        );
    }

    #[test]
    fn rejects_bad_config() {
        assert!(cfg(&[], 0, true).validate().is_err());
        assert!(cfg(&["The"], 1, true).validate().is_err());
        assert!(PreprocessConfig::default().validate().is_ok());
    }

    #[test]
    fn stopword_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stop.txt");
        std::fs::write(&p, "man\n\nred\n").unwrap();
        let c = PreprocessConfig::default().with_stopword_file(&p).unwrap();
        // "the" is no longer a stopword once the list is replaced.
        assert_eq!(preprocess("the man in red", &c), vec!["the"]);
        std::fs::write(&p, "Man\n").unwrap();
        assert!(PreprocessConfig::default().with_stopword_file(&p).is_err());
    }
}
