//! Phenotype synonym groups and the multi-pattern mention matcher.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use aho_corasick::{AhoCorasick, MatchKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon has no groups")]
    Empty,
    #[error("line {line}: empty group_id")]
    EmptyGroupId { line: usize },
    #[error("line {line}: term is empty after normalization")]
    EmptyTerm { line: usize },
    #[error("group `{group_id}` has no terms")]
    EmptyGroup { group_id: String },
    #[error("line {line}: group `{group_id}` was already declared in an earlier block")]
    DuplicateGroup { group_id: String, line: usize },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("failed to build matcher: {0}")]
    Automaton(String),
}

/// A named symptom category and its synonym phrases, as spelled in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhenotypeGroup {
    pub group_id: String,
    pub display_name: String,
    pub terms: Vec<String>,
}

/// One `(group_id, term)` row of a lexicon file. `line` is used for error reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconRecord {
    pub line: usize,
    pub group_id: String,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    groups: Vec<PhenotypeGroup>,
    term_index: BTreeMap<String, BTreeSet<String>>,
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Single-char lowercase mapping. Characters whose lowercase form expands to
/// several chars, or changes UTF-8 width, are kept unchanged so that byte
/// offsets stay one-to-one.
pub(crate) fn fold_char(c: char) -> char {
    if c.is_ascii() {
        return c.to_ascii_lowercase();
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) if l.len_utf8() == c.len_utf8() => l,
        _ => c,
    }
}

fn collapse_whitespace(text: &str, fold: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(if fold { fold_char(c) } else { c });
            in_space = false;
        }
    }
    out
}

/// Lowercases, collapses internal whitespace and strips surrounding punctuation.
pub fn normalize_term(term: &str) -> String {
    collapse_whitespace(term, true)
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn strip_term(term: &str) -> String {
    collapse_whitespace(term, false)
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Short all-caps abbreviations ("HA", "SOB", "HA's") only match with the
/// same capitalization in the text.
pub fn is_case_sensitive(term: &str) -> bool {
    let stripped = strip_term(term);
    let base = stripped
        .strip_suffix("'s")
        .or_else(|| stripped.strip_suffix("\u{2019}s"))
        .unwrap_or(&stripped);
    let n = base.chars().count();
    (1..=3).contains(&n) && base.chars().all(|c| c.is_ascii_uppercase())
}

impl Lexicon {
    /// Builds a lexicon from two-column records. Records of one group must be
    /// contiguous; a group that reappears after another group started is an
    /// error. Repeated terms inside a group are kept once.
    pub fn from_records<I>(records: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = LexiconRecord>,
    {
        let mut groups: Vec<PhenotypeGroup> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for rec in records {
            let group_id = rec.group_id.trim();
            if group_id.is_empty() {
                return Err(LexiconError::EmptyGroupId { line: rec.line });
            }
            if normalize_term(&rec.term).is_empty() {
                return Err(LexiconError::EmptyTerm { line: rec.line });
            }
            let term = strip_term(&rec.term);
            match groups.last_mut() {
                Some(g) if g.group_id == group_id => {
                    if !g.terms.contains(&term) {
                        g.terms.push(term);
                    }
                }
                _ => {
                    if !seen.insert(group_id.to_string()) {
                        return Err(LexiconError::DuplicateGroup {
                            group_id: group_id.to_string(),
                            line: rec.line,
                        });
                    }
                    groups.push(PhenotypeGroup {
                        group_id: group_id.to_string(),
                        display_name: group_id.to_string(),
                        terms: alloc::vec![term],
                    });
                }
            }
        }
        Self::from_groups(groups)
    }

    pub fn from_groups(groups: Vec<PhenotypeGroup>) -> Result<Self, LexiconError> {
        if groups.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut ids = BTreeSet::new();
        let mut term_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for g in &groups {
            if g.group_id.trim().is_empty() {
                return Err(LexiconError::EmptyGroupId { line: 0 });
            }
            if !ids.insert(g.group_id.clone()) {
                return Err(LexiconError::DuplicateGroup { group_id: g.group_id.clone(), line: 0 });
            }
            if g.terms.is_empty() {
                return Err(LexiconError::EmptyGroup { group_id: g.group_id.clone() });
            }
            for t in &g.terms {
                let norm = normalize_term(t);
                if norm.is_empty() {
                    return Err(LexiconError::EmptyTerm { line: 0 });
                }
                term_index.entry(norm).or_default().insert(g.group_id.clone());
            }
        }
        Ok(Self { groups, term_index })
    }

    pub fn groups(&self) -> &[PhenotypeGroup] {
        &self.groups
    }

    pub fn group(&self, group_id: &str) -> Option<&PhenotypeGroup> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    pub fn group_ids(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.group_id.as_str())
    }

    /// Normalized term to the set of groups listing it.
    pub fn term_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.term_index
    }

    pub fn groups_for(&self, term: &str) -> Option<&BTreeSet<String>> {
        self.term_index.get(&normalize_term(term))
    }

    /// Terms listed under exactly one group, i.e. not cross-listed.
    pub fn exclusive_terms<'a>(&'a self, group_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.group(group_id)
            .into_iter()
            .flat_map(|g| g.terms.iter())
            .filter(move |t| {
                self.groups_for(t).is_some_and(|s| s.len() == 1 && s.contains(group_id))
            })
            .map(String::as_str)
    }
}

/// A matched term inside a sentence. `span` is in bytes of the sentence text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention<'m> {
    pub term: &'m str,
    pub span: Range<usize>,
    pub group_ids: &'m [String],
}

#[derive(Debug, Clone)]
struct Pattern {
    term: String,
    // exact spelling required in the source text, for short abbreviations
    spelling: Option<String>,
    group_ids: Vec<String>,
}

/// Immutable multi-pattern matcher over a [`Lexicon`].
#[derive(Debug, Clone)]
pub struct Matcher {
    automaton: AhoCorasick,
    patterns: Vec<Pattern>,
}

/// Whitespace-collapsed, lowercased copy of a sentence with a byte map back
/// into the original.
pub(crate) struct FoldedText {
    pub text: String,
    offsets: Vec<usize>,
}

impl FoldedText {
    pub fn new(original: &str) -> Self {
        let mut text = String::with_capacity(original.len());
        let mut offsets = Vec::with_capacity(original.len() + 1);
        let mut in_space = false;
        for (i, c) in original.char_indices() {
            let out = if c.is_whitespace() {
                if in_space {
                    continue;
                }
                in_space = true;
                ' '
            } else {
                in_space = false;
                fold_char(c)
            };
            text.push(out);
            offsets.extend(core::iter::repeat_n(i, out.len_utf8()));
        }
        offsets.push(original.len());
        Self { text, offsets }
    }

    pub fn original_span(&self, folded: &Range<usize>) -> Range<usize> {
        self.offsets[folded.start]..self.offsets[folded.end]
    }

    pub fn on_boundaries(&self, span: &Range<usize>) -> bool {
        let before = self.text[..span.start].chars().next_back();
        let after = self.text[span.end..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    }
}

impl Matcher {
    pub fn new(lexicon: &Lexicon) -> Result<Self, LexiconError> {
        let mut spellings: BTreeMap<String, (bool, String)> = BTreeMap::new();
        for g in lexicon.groups() {
            for t in &g.terms {
                let sensitive = is_case_sensitive(t);
                let entry = spellings
                    .entry(normalize_term(t))
                    .or_insert_with(|| (sensitive, strip_term(t)));
                // one case-insensitive spelling makes the whole term insensitive
                entry.0 &= sensitive;
            }
        }
        let patterns: Vec<Pattern> = lexicon
            .term_index()
            .iter()
            .map(|(term, groups)| {
                let (sensitive, spelling) = &spellings[term];
                Pattern {
                    term: term.clone(),
                    spelling: sensitive.then(|| spelling.clone()),
                    group_ids: groups.iter().cloned().collect(),
                }
            })
            .collect();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(patterns.iter().map(|p| p.term.as_str()))
            .map_err(|e| LexiconError::Automaton(e.to_string()))?;
        Ok(Self { automaton, patterns })
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// All maximal matches on token boundaries, ordered by start offset.
    ///
    /// A match strictly contained in another match is dropped, so
    /// "vomiting diarrhea" yields one mention rather than three. Matches that
    /// only partially overlap are both kept.
    pub fn find_mentions<'m>(&'m self, sentence: &str) -> Vec<Mention<'m>> {
        if sentence.is_empty() {
            return Vec::new();
        }
        let folded = FoldedText::new(sentence);
        let mut candidates: Vec<(Range<usize>, usize)> = Vec::new();
        for m in self.automaton.find_overlapping_iter(folded.text.as_str()) {
            let span = m.start()..m.end();
            if !folded.on_boundaries(&span) {
                continue;
            }
            let pattern = &self.patterns[m.pattern().as_usize()];
            let original = folded.original_span(&span);
            if let Some(spelling) = &pattern.spelling {
                if &sentence[original.clone()] != spelling {
                    continue;
                }
            }
            candidates.push((original, m.pattern().as_usize()));
        }
        candidates.sort_by(|a, b| a.0.start.cmp(&b.0.start).then(b.0.end.cmp(&a.0.end)));
        let mut out = Vec::with_capacity(candidates.len());
        let mut max_end = 0usize;
        for (span, idx) in candidates {
            if !out.is_empty() && span.end <= max_end {
                continue;
            }
            max_end = span.end;
            let p = &self.patterns[idx];
            out.push(Mention { term: &p.term, span, group_ids: &p.group_ids });
        }
        out
    }
}
