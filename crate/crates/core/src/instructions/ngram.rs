//! N-gram overlap between two instruction corpora.
//!
//! Overlap is the fraction of distinct n-grams of corpus B that also occur
//! anywhere in corpus A, as a percentage. "Distinct" is per instruction:
//! each instruction contributes its set of distinct n-grams, and those sets
//! are pooled across the corpus. Counting runs over normalized words of the
//! raw text, not vocabulary ids, so out-of-vocabulary words stay distinct
//! instead of collapsing into the unknown token.

use std::collections::HashSet;

use thiserror::Error;

use super::TokenSeq;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("n must be at least 1")]
    ZeroN,
    #[error("both corpora must be non-empty")]
    EmptyCorpus,
    #[error("no sequence in corpus_b has {n} or more words; overlap undefined")]
    Undefined { n: usize },
}

fn grams(words: &[String], n: usize) -> HashSet<Vec<&str>> {
    if words.len() < n {
        return HashSet::new();
    }
    words
        .windows(n)
        .map(|w| w.iter().map(|s| s.as_str()).collect())
        .collect()
}

/// Percentage of corpus B's distinct n-grams that occur in corpus A.
pub fn ngram_overlap(
    corpus_a: &[TokenSeq],
    corpus_b: &[TokenSeq],
    n: usize,
) -> Result<f64, NgramError> {
    if n == 0 {
        return Err(NgramError::ZeroN);
    }
    if corpus_a.is_empty() || corpus_b.is_empty() {
        return Err(NgramError::EmptyCorpus);
    }

    let a_words: Vec<Vec<String>> = corpus_a.iter().map(|s| s.words()).collect();
    let mut pool: HashSet<Vec<&str>> = HashSet::new();
    for words in &a_words {
        pool.extend(grams(words, n));
    }

    let mut total = 0usize;
    let mut shared = 0usize;
    for seq in corpus_b {
        let words = seq.words();
        for gram in grams(&words, n) {
            total += 1;
            if pool.contains(&gram) {
                shared += 1;
            }
        }
    }
    if total == 0 {
        return Err(NgramError::Undefined { n });
    }
    Ok(100.0 * shared as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Vec<TokenSeq> {
        texts
            .iter()
            .map(|t| TokenSeq { tokens: vec![], raw_text: t.to_string() })
            .collect()
    }

    #[test]
    fn identical_corpora_are_100() {
        let a = corpus(&["go to the lamp", "turn left at the sofa"]);
        for n in 1..=4 {
            assert_eq!(ngram_overlap(&a, &a, n).unwrap(), 100.0);
        }
    }

    #[test]
    fn disjoint_vocabularies_are_0() {
        let a = corpus(&["go left"]);
        let b = corpus(&["walk right"]);
        for n in 1..=2 {
            assert_eq!(ngram_overlap(&a, &b, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_enumerated_unigram_case() {
        // b's distinct unigrams per instruction: {go,left} and {go,up},
        // pooled 4; "up" is the only one absent from a.
        let a = corpus(&["go left", "go right"]);
        let b = corpus(&["go left", "go up"]);
        assert_eq!(ngram_overlap(&a, &b, 1).unwrap(), 75.0);
    }

    #[test]
    fn undefined_when_n_exceeds_every_sequence() {
        let a = corpus(&["go to the lamp"]);
        let b = corpus(&["go left"]);
        assert!(matches!(
            ngram_overlap(&a, &b, 3),
            Err(NgramError::Undefined { n: 3 })
        ));
    }
}
