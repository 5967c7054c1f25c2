//! Unigram METEOR with exact, stem and optional synonym matching stages.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use unicode_segmentation::UnicodeSegmentation;

/// Above this many explored states the aligner falls back to a greedy pass.
const MAX_SEARCH_STATES: usize = 200_000;

pub trait Stemmer: Send + Sync {
    fn stem(&self, word: &str) -> String;
}

/// Strips the longest listed suffix that leaves at least `min_stem` characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixStemmer {
    pub suffixes: Vec<String>,
    pub min_stem: usize,
}

impl Default for SuffixStemmer {
    fn default() -> Self {
        let suffixes = [
            "ations", "ation", "ments", "ment", "ness", "ings", "ing", "edly", "ed", "ers", "er",
            "est", "ies", "es", "ly", "s", "en", "e",
        ];
        Self {
            suffixes: suffixes.iter().map(|s| s.to_string()).collect(),
            min_stem: 3,
        }
    }
}

impl Stemmer for SuffixStemmer {
    fn stem(&self, word: &str) -> String {
        let n = word.chars().count();
        self.suffixes
            .iter()
            .filter(|s| word.ends_with(s.as_str()) && n >= s.chars().count() + self.min_stem)
            .max_by_key(|s| s.len())
            .map(|s| undouble(&word[..word.len() - s.len()]))
            .unwrap_or_else(|| word.to_string())
    }
}

/// "runn" -> "run"; only ASCII consonants are undoubled.
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 4 && b[n - 1] == b[n - 2] && b[n - 1].is_ascii_alphabetic() && !b"aeiouls".contains(&b[n - 1]) {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Word groups treated as synonyms. One group per line, words separated by whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    group_of: HashMap<String, Vec<usize>>,
}

impl SynonymTable {
    pub fn parse(text: &str) -> Self {
        let mut group_of: HashMap<String, Vec<usize>> = HashMap::new();
        for (g, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            for w in line.split_whitespace() {
                group_of.entry(w.to_lowercase()).or_default().push(g);
            }
        }
        Self { group_of }
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        match (self.group_of.get(a), self.group_of.get(b)) {
            (Some(ga), Some(gb)) => ga.iter().any(|g| gb.contains(g)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorStats {
    pub matches: usize,
    pub chunks: usize,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub score: f64,
}

#[derive(Clone)]
pub struct Meteor {
    stemmer: Arc<dyn Stemmer>,
    synonyms: Option<SynonymTable>,
}

impl fmt::Debug for Meteor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Meteor")
            .field("synonyms", &self.synonyms.is_some())
            .finish()
    }
}

impl Default for Meteor {
    fn default() -> Self {
        Self {
            stemmer: Arc::new(SuffixStemmer::default()),
            synonyms: None,
        }
    }
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.unicode_words().map(str::to_lowercase).collect()
}

/// Score from match and chunk counts.
pub fn meteor_formula(matches: usize, chunks: usize, hyp_len: usize, ref_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / hyp_len as f64;
    let r = matches as f64 / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// Stage at which a pair matched: 0 exact, 1 stem, 2 synonym.
type Stage = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
struct Objective {
    by_stage: [usize; 3],
    neg_chunks: isize,
}

impl Objective {
    fn add(mut self, stage: Stage, new_chunk: bool) -> Self {
        self.by_stage[stage] += 1;
        if new_chunk {
            self.neg_chunks -= 1;
        }
        self
    }
}

impl Meteor {
    pub fn with_stemmer(mut self, stemmer: Arc<dyn Stemmer>) -> Self {
        self.stemmer = stemmer;
        self
    }

    pub fn with_synonyms(mut self, table: SynonymTable) -> Self {
        self.synonyms = Some(table);
        self
    }

    pub fn score(&self, candidate: &str, reference: &str) -> f64 {
        self.stats(candidate, reference).score
    }

    pub fn stats(&self, candidate: &str, reference: &str) -> MeteorStats {
        let hyp = tokenize(candidate);
        let refs = tokenize(reference);
        let (matches, chunks) = self.align(&hyp, &refs);
        MeteorStats {
            matches,
            chunks,
            hyp_len: hyp.len(),
            ref_len: refs.len(),
            score: meteor_formula(matches, chunks, hyp.len(), refs.len()),
        }
    }

    /// Best stage at which two tokens match, if any.
    pub fn match_stage(&self, a: &str, b: &str) -> Option<Stage> {
        if a == b {
            Some(0)
        } else if self.stemmer.stem(a) == self.stemmer.stem(b) {
            Some(1)
        } else if self.synonyms.as_ref().is_some_and(|t| t.are_synonyms(a, b)) {
            Some(2)
        } else {
            None
        }
    }

    /// Returns (matches, chunks) for the best alignment.
    fn align(&self, hyp: &[String], refs: &[String]) -> (usize, usize) {
        let candidates: Vec<Vec<(usize, Stage)>> = hyp
            .iter()
            .map(|h| {
                refs.iter()
                    .enumerate()
                    .filter_map(|(j, r)| self.match_stage(h, r).map(|s| (j, s)))
                    .collect()
            })
            .collect();
        let objective = if refs.len() <= 128 {
            let mut search = Search {
                candidates: &candidates,
                memo: HashMap::new(),
            };
            search.best(0, 0, None)
        } else {
            None
        }
        .unwrap_or_else(|| greedy(&candidates));
        let matches: usize = objective.by_stage.iter().sum();
        (matches, (-objective.neg_chunks) as usize)
    }
}

struct Search<'a> {
    candidates: &'a [Vec<(usize, Stage)>],
    memo: HashMap<(usize, u128, Option<usize>), Objective>,
}

impl Search<'_> {
    /// `None` once the state budget is exhausted.
    fn best(&mut self, i: usize, used: u128, prev: Option<usize>) -> Option<Objective> {
        if i == self.candidates.len() {
            return Some(Objective::default());
        }
        if let Some(o) = self.memo.get(&(i, used, prev)) {
            return Some(*o);
        }
        if self.memo.len() >= MAX_SEARCH_STATES {
            return None;
        }
        let mut best = self.best(i + 1, used, None)?;
        for &(j, stage) in &self.candidates[i] {
            if used & (1u128 << j) != 0 {
                continue;
            }
            let new_chunk = !(j > 0 && prev == Some(j - 1));
            let rest = self.best(i + 1, used | (1u128 << j), Some(j))?;
            best = best.max(rest.add(stage, new_chunk));
        }
        self.memo.insert((i, used, prev), best);
        Some(best)
    }
}

/// Stage by stage, each hypothesis token takes the first free reference token,
/// preferring the one that extends the current chunk.
fn greedy(candidates: &[Vec<(usize, Stage)>]) -> Objective {
    let n_ref = candidates
        .iter()
        .flatten()
        .map(|(j, _)| j + 1)
        .max()
        .unwrap_or(0);
    let mut used = vec![false; n_ref];
    let mut assigned: Vec<Option<(usize, Stage)>> = vec![None; candidates.len()];
    for stage in 0..3 {
        for (i, cands) in candidates.iter().enumerate() {
            if assigned[i].is_some() {
                continue;
            }
            let prev = i.checked_sub(1).and_then(|p| assigned[p]).map(|(j, _)| j);
            let free = |&&(j, s): &&(usize, Stage)| s == stage && !used[j];
            let pick = cands
                .iter()
                .filter(free)
                .find(|(j, _)| prev.is_some_and(|p| p + 1 == *j))
                .or_else(|| cands.iter().find(free));
            if let Some(&(j, s)) = pick {
                used[j] = true;
                assigned[i] = Some((j, s));
            }
        }
    }
    let mut obj = Objective::default();
    let mut prev: Option<usize> = None;
    for a in &assigned {
        match a {
            Some((j, s)) => {
                obj = obj.add(*s, !(*j > 0 && prev == Some(j - 1)));
                prev = Some(*j);
            }
            None => prev = None,
        }
    }
    obj
}

/// METEOR with the default stemmer and no synonym stage.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    Meteor::default().score(candidate, reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_ten_tokens() {
        let s = "the quick brown fox jumps over the lazy dog today";
        assert!((meteor(s, s) - 0.9995).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(meteor("alpha beta", "gamma delta"), 0.0);
        assert_eq!(meteor("", "gamma delta"), 0.0);
    }

    #[test]
    fn case_and_punctuation_ignored() {
        assert_eq!(meteor("Hello, World!", "hello world"), meteor("hello world", "hello world"));
    }

    #[test]
    fn stem_stage_matches() {
        let st = Meteor::default().stats("cats running", "cat runs");
        assert_eq!(st.matches, 2);
    }

    #[test]
    fn reordering_costs_chunks() {
        let st = Meteor::default().stats("c d a b", "a b c d");
        assert_eq!((st.matches, st.chunks), (4, 2));
    }

    #[test]
    fn repeated_words_prefer_contiguous_alignment() {
        // a greedy left-to-right alignment would give 3 chunks here
        let st = Meteor::default().stats("the cat the", "on the mat the cat");
        assert_eq!(st.matches, 3);
        assert_eq!(st.chunks, 2);
    }

    #[test]
    fn synonyms_off_by_default() {
        let table = SynonymTable::parse("big large\nsmall little\n");
        assert!(meteor("big house", "large house") < 0.9);
        let m = Meteor::default().with_synonyms(table);
        assert_eq!(m.stats("big house", "large house").matches, 2);
    }

    #[test]
    fn stemmer_keeps_short_words() {
        let s = SuffixStemmer::default();
        assert_eq!(s.stem("is"), "is");
        assert_eq!(s.stem("jumping"), "jump");
    }

    #[test]
    fn long_inputs_use_greedy_fallback() {
        let words: Vec<String> = (0..300).map(|i| format!("w{}", i % 7)).collect();
        let s = words.join(" ");
        let v = meteor(&s, &s);
        assert!(v > 0.0 && v <= 1.0);
    }
}
