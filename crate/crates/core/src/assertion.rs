//! Assertion labels for symptom mentions, the classifier seam, a rule-based
//! classifier and evaluation metrics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexicon::{fold_char, is_word_char};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AssertionLabel {
    /// Symptom present.
    Yes,
    /// Absent or denied.
    No,
    /// Suspected.
    Maybe,
    /// Not about the patient, e.g. family history or education material.
    Other,
}

impl AssertionLabel {
    pub const ALL: [AssertionLabel; 4] =
        [AssertionLabel::Yes, AssertionLabel::No, AssertionLabel::Maybe, AssertionLabel::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            AssertionLabel::Yes => "YES",
            AssertionLabel::No => "NO",
            AssertionLabel::Maybe => "MAYBE",
            AssertionLabel::Other => "OTHER",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AssertionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssertionError {
    #[error("unknown assertion label `{0}`")]
    UnknownLabel(String),
    #[error("gold has {gold} labels but predictions have {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("no labels to evaluate")]
    Empty,
}

impl FromStr for AssertionLabel {
    type Err = AssertionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        AssertionLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| AssertionError::UnknownLabel(t.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: AssertionLabel,
    pub confidence: f64,
}

/// Labels a mention given its sentence. Implementations must be deterministic
/// and shareable across threads once built.
pub trait Classifier: Send + Sync {
    /// `span` is the mention's byte range inside `sentence`.
    fn classify(&self, sentence: &str, span: Range<usize>) -> Classification;

    fn descriptor(&self) -> &str;
}

/// Cue lists and window sizes for [`RuleClassifier`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub before_window: usize,
    pub after_window: usize,
    pub scope_breakers: Vec<String>,
    pub negation: Vec<String>,
    pub uncertainty: Vec<String>,
    pub attribution: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            before_window: 6,
            after_window: 3,
            scope_breakers: strings(&["but", "however", ";", "although"]),
            negation: strings(&["no", "denies", "denied", "without", "negative for", "not"]),
            uncertainty: strings(&[
                "possible",
                "possibly",
                "suspected",
                "cannot rule out",
                "concern for",
                "r/o",
            ]),
            attribution: strings(&[
                "family history",
                "mother",
                "father",
                "sister",
                "brother",
                "fhx",
                "education",
                "handout",
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    span: (usize, usize),
}

/// Lowercased tokens: runs of word characters, or single punctuation marks.
fn tokenize(text: &str) -> (String, Vec<(usize, usize)>) {
    let folded: String = text.chars().map(fold_char).collect();
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in folded.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            spans.push((s, i));
        }
        if !c.is_whitespace() {
            spans.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = word_start {
        spans.push((s, folded.len()));
    }
    (folded, spans)
}

fn cue_tokens(cue: &str) -> Vec<String> {
    let (folded, spans) = tokenize(cue);
    spans.into_iter().map(|(a, b)| folded[a..b].to_string()).collect()
}

fn matches_at(tokens: &[Token<'_>], at: usize, cue: &[String]) -> bool {
    at + cue.len() <= tokens.len() && cue.iter().zip(&tokens[at..]).all(|(c, t)| c == t.text)
}

fn contains_cue(window: &[Token<'_>], cues: &[Vec<String>]) -> bool {
    cues.iter()
        .filter(|c| !c.is_empty())
        .any(|cue| (0..window.len()).any(|i| matches_at(window, i, cue)))
}

/// Window-and-cue assertion classifier.
///
/// Looks at up to `before_window` tokens before the mention and
/// `after_window` tokens after it; both windows stop at a scope breaker.
/// When several cue families fire the precedence is OTHER > NO > MAYBE,
/// and YES is returned when none fire. Confidence is always 1.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    before_window: usize,
    after_window: usize,
    breakers: Vec<Vec<String>>,
    negation: Vec<Vec<String>>,
    uncertainty: Vec<Vec<String>>,
    attribution: Vec<Vec<String>>,
    descriptor: String,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        Self::new(&RuleConfig::default())
    }
}

impl RuleClassifier {
    pub const NAME: &'static str = "rule-window";

    pub fn new(config: &RuleConfig) -> Self {
        let tok = |v: &[String]| v.iter().map(|c| cue_tokens(c)).collect::<Vec<_>>();
        Self {
            before_window: config.before_window,
            after_window: config.after_window,
            breakers: tok(&config.scope_breakers),
            negation: tok(&config.negation),
            uncertainty: tok(&config.uncertainty),
            attribution: tok(&config.attribution),
            descriptor: alloc::format!("{}/v1 before={} after={}", Self::NAME, config.before_window, config.after_window),
        }
    }

    fn breaker_ends_at(&self, tokens: &[Token<'_>], end: usize) -> bool {
        self.breakers
            .iter()
            .filter(|b| !b.is_empty() && b.len() <= end + 1)
            .any(|b| matches_at(tokens, end + 1 - b.len(), b))
    }

    fn breaker_starts_at(&self, tokens: &[Token<'_>], start: usize) -> bool {
        self.breakers.iter().filter(|b| !b.is_empty()).any(|b| matches_at(tokens, start, b))
    }

    /// Token index ranges of the two scan windows.
    fn windows(&self, tokens: &[Token<'_>], span: &Range<usize>) -> (Range<usize>, Range<usize>) {
        let first_after = tokens.iter().position(|t| t.span.0 >= span.end).unwrap_or(tokens.len());
        let last_before = tokens.iter().rposition(|t| t.span.1 <= span.start);

        let before_end = last_before.map_or(0, |i| i + 1);
        let mut before_start = before_end;
        while before_start > 0 && before_end - before_start < self.before_window {
            if self.breaker_ends_at(tokens, before_start - 1) {
                break;
            }
            before_start -= 1;
        }

        let mut after_end = first_after;
        while after_end < tokens.len() && after_end - first_after < self.after_window {
            if self.breaker_starts_at(tokens, after_end) {
                break;
            }
            after_end += 1;
        }
        (before_start..before_end, first_after..after_end)
    }

    pub fn label(&self, sentence: &str, span: Range<usize>) -> AssertionLabel {
        let (folded, spans) = tokenize(sentence);
        let tokens: Vec<Token<'_>> =
            spans.into_iter().map(|(a, b)| Token { text: &folded[a..b], span: (a, b) }).collect();
        let (before, after) = self.windows(&tokens, &span);
        let fires = |cues: &[Vec<String>]| {
            contains_cue(&tokens[before.clone()], cues) || contains_cue(&tokens[after.clone()], cues)
        };
        if fires(&self.attribution) {
            AssertionLabel::Other
        } else if fires(&self.negation) {
            AssertionLabel::No
        } else if fires(&self.uncertainty) {
            AssertionLabel::Maybe
        } else {
            AssertionLabel::Yes
        }
    }
}

impl Classifier for RuleClassifier {
    fn classify(&self, sentence: &str, span: Range<usize>) -> Classification {
        Classification { label: self.label(sentence, span), confidence: 1.0 }
    }

    fn descriptor(&self) -> &str {
        &self.descriptor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold instances of the label.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub n_total: usize,
    pub accuracy: f64,
    /// One-vs-rest metrics for every label seen in gold or predictions.
    pub per_label: BTreeMap<AssertionLabel, LabelMetrics>,
    /// `confusion[gold][predicted]`, indexed in [`AssertionLabel::ALL`] order.
    pub confusion: [[usize; 4]; 4],
    /// YES-vs-rest rates.
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(gold: &[AssertionLabel], predicted: &[AssertionLabel]) -> Result<EvalMetrics, AssertionError> {
    if gold.len() != predicted.len() {
        return Err(AssertionError::LengthMismatch { gold: gold.len(), predicted: predicted.len() });
    }
    if gold.is_empty() {
        return Err(AssertionError::Empty);
    }
    let mut confusion = [[0usize; 4]; 4];
    for (g, p) in gold.iter().zip(predicted) {
        confusion[g.index()][p.index()] += 1;
    }
    let n = gold.len();
    let correct: usize = (0..4).map(|i| confusion[i][i]).sum();

    let mut per_label = BTreeMap::new();
    for label in AssertionLabel::ALL {
        let i = label.index();
        let gold_count: usize = confusion[i].iter().sum();
        let pred_count: usize = (0..4).map(|g| confusion[g][i]).sum();
        if gold_count == 0 && pred_count == 0 {
            continue;
        }
        let tp = confusion[i][i];
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, gold_count);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_label.insert(label, LabelMetrics { precision, recall, f1, support: gold_count });
    }

    let yes = AssertionLabel::Yes.index();
    let tp = confusion[yes][yes];
    let fn_ = confusion[yes].iter().sum::<usize>() - tp;
    let fp = (0..4).filter(|&g| g != yes).map(|g| confusion[g][yes]).sum::<usize>();
    let tn = n - tp - fn_ - fp;

    Ok(EvalMetrics {
        n_total: n,
        accuracy: ratio(correct, n),
        per_label,
        confusion,
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, tp + fn_),
    })
}
