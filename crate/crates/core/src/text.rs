//! Notes, patients, sentence segmentation and date alignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("invalid date `{0}`, expected YYYY-MM-DD")]
    InvalidDate(String),
    #[error("invalid PCR result `{0}`, expected pos or neg")]
    InvalidResult(String),
    #[error("template threshold must be at least 2, got {0}")]
    Threshold(usize),
    #[error("invalid day range {from}..{to}")]
    DayRange { from: i64, to: i64 },
}

/// Calendar date at day precision (proleptic Gregorian).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    days: i64,
}

impl Date {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Self { days: days_from_civil(year as i64, month as i64, day as i64) })
    }

    pub fn from_days(days: i64) -> Self {
        Self { days }
    }

    /// Days since 1970-01-01.
    pub fn days(self) -> i64 {
        self.days
    }

    pub fn ymd(self) -> (i32, u32, u32) {
        civil_from_days(self.days)
    }

    pub fn add_days(self, n: i64) -> Self {
        Self { days: self.days + n }
    }
}

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        _ => 28,
    }
}

// Howard Hinnant's days_from_civil / civil_from_days.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i32, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
    (y as i32, m as u32, d as u32)
}

impl FromStr for Date {
    type Err = TextError;

    /// Accepts `YYYY-MM-DD`, optionally followed by a time part which is
    /// dropped (`2020-03-10T14:05:00`, `2020-03-10 14:05`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TextError::InvalidDate(s.into());
        let s = s.trim();
        let head = s.get(..10).ok_or_else(err)?;
        let rest = &s[10..];
        if !(rest.is_empty() || rest.starts_with('T') || rest.starts_with(' ')) {
            return Err(err());
        }
        let b = head.as_bytes();
        if b[4] != b'-' || b[7] != b'-' {
            return Err(err());
        }
        let num = |r: Range<usize>| -> Result<u32, TextError> {
            let part = &head[r];
            if !part.bytes().all(|c| c.is_ascii_digit()) {
                return Err(err());
            }
            part.parse().map_err(|_| err())
        };
        let (y, m, d) = (num(0..4)?, num(5..7)?, num(8..10)?);
        Date::from_ymd(y as i32, m, d).ok_or_else(err)
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d) = self.ymd();
        write!(f, "{y:04}-{m:02}-{d:02}")
    }
}

impl Serialize for Date {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Signed whole-day difference `note_date - pcr_date`.
pub fn relative_day(note_date: Date, pcr_date: Date) -> i64 {
    note_date.days - pcr_date.days
}

/// Inclusive interval of relative days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRange {
    pub from: i64,
    pub to: i64,
}

impl DayRange {
    pub fn new(from: i64, to: i64) -> Result<Self, TextError> {
        if from > to {
            return Err(TextError::DayRange { from, to });
        }
        Ok(Self { from, to })
    }

    pub fn contains(&self, day: i64) -> bool {
        (self.from..=self.to).contains(&day)
    }

    pub fn contains_range(&self, other: &DayRange) -> bool {
        self.from <= other.from && other.to <= self.to
    }

    pub fn days(&self) -> impl Iterator<Item = i64> {
        self.from..=self.to
    }

    pub fn len(&self) -> usize {
        (self.to - self.from + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for DayRange {
    /// The study window, day -14 to day +14.
    fn default() -> Self {
        Self { from: -14, to: 14 }
    }
}

impl fmt::Display for DayRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.from, self.to)
    }
}

impl FromStr for DayRange {
    type Err = TextError;

    /// Parses `A..B`, e.g. `-7..-1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TextError::DayRange { from: 0, to: -1 };
        let (a, b) = s.trim().split_once("..").ok_or_else(bad)?;
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        DayRange::new(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub patient_id: String,
    pub note_id: String,
    pub date: Date,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PcrResult {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl PcrResult {
    pub fn as_str(self) -> &'static str {
        match self {
            PcrResult::Positive => "pos",
            PcrResult::Negative => "neg",
        }
    }
}

impl FromStr for PcrResult {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pos" => Ok(PcrResult::Positive),
            "neg" => Ok(PcrResult::Negative),
            other => Err(TextError::InvalidResult(other.into())),
        }
    }
}

impl fmt::Display for PcrResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub pcr_date: Date,
    pub pcr_result: PcrResult,
}

/// One test per patient. Duplicates collapse to the earliest test date; two
/// conflicting results on that date resolve to positive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    patients: BTreeMap<String, (Date, PcrResult)>,
}

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: PatientRecord) {
        let PatientRecord { patient_id, pcr_date, pcr_result } = record;
        let slot = self.patients.entry(patient_id).or_insert((pcr_date, pcr_result));
        if pcr_date < slot.0 {
            *slot = (pcr_date, pcr_result);
        } else if pcr_date == slot.0 && pcr_result == PcrResult::Positive {
            slot.1 = PcrResult::Positive;
        }
    }

    pub fn get(&self, patient_id: &str) -> Option<(Date, PcrResult)> {
        self.patients.get(patient_id).copied()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn count(&self, result: PcrResult) -> usize {
        self.patients.values().filter(|(_, r)| *r == result).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Date, PcrResult)> {
        self.patients.iter().map(|(id, (d, r))| (id.as_str(), *d, *r))
    }
}

impl FromIterator<PatientRecord> for Roster {
    fn from_iter<T: IntoIterator<Item = PatientRecord>>(iter: T) -> Self {
        let mut roster = Roster::new();
        for r in iter {
            roster.insert(r);
        }
        roster
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence<'a> {
    pub note_id: &'a str,
    pub index: usize,
    /// Byte offsets into the note text.
    pub span: Range<usize>,
    pub text: &'a str,
    pub is_template: bool,
}

/// Tokens that end in a period without ending the sentence.
pub const GUARD_ABBREVIATIONS: [&str; 6] = ["dr", "pt", "hx", "mr", "mrs", "vs"];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn word_before(text: &str, end: usize) -> &str {
    let head = &text[..end];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| !c.is_alphanumeric())
        .map_or(0, |(i, c)| i + c.len_utf8());
    &head[start..]
}

/// Splits a note into sentences on `.`, `!`, `?` followed by whitespace (or
/// end of text) and on blank lines. A period after a guard abbreviation such
/// as "Dr." does not split. Spans are trimmed of surrounding whitespace and
/// keep their terminators.
pub fn segment_sentences(note: &ClinicalNote) -> Vec<Sentence<'_>> {
    segment_text(&note.note_id, &note.text)
}

pub fn segment_text<'a>(note_id: &'a str, text: &'a str) -> Vec<Sentence<'a>> {
    let mut cuts: Vec<usize> = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if is_terminator(c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, n)) = chars.peek() {
                if is_terminator(n) {
                    end = j + n.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let followed_by_space = text[end..].chars().next().is_none_or(char::is_whitespace);
            if !followed_by_space {
                continue;
            }
            let single_period = end == i + 1 && c == '.';
            if single_period {
                let w = word_before(text, i);
                if GUARD_ABBREVIATIONS.iter().any(|g| w.eq_ignore_ascii_case(g)) {
                    continue;
                }
            }
            cuts.push(end);
        } else if c == '\n' {
            // blank line: newline, optional horizontal whitespace, newline
            let rest = &text[i + 1..];
            let gap = rest.find(|ch: char| !ch.is_whitespace() || ch == '\n');
            if let Some(g) = gap {
                if rest[g..].starts_with('\n') {
                    cuts.push(i);
                }
            }
        }
    }
    cuts.push(text.len());

    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts {
        if cut < start {
            continue;
        }
        let piece = &text[start..cut];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            let s = start + lead;
            out.push(Sentence {
                note_id,
                index: out.len(),
                span: s..s + trimmed.len(),
                text: trimmed,
                is_template: false,
            });
        }
        start = cut;
    }
    out
}

/// Lowercased, whitespace-collapsed sentence text.
pub fn fingerprint(sentence: &str) -> String {
    let mut out = String::with_capacity(sentence.len());
    for word in sentence.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().map(crate::lexicon::fold_char));
    }
    out
}

pub const DEFAULT_TEMPLATE_THRESHOLD: usize = 20;

/// Fingerprint to distinct-patient counter. Partial counters from separate
/// workers combine with [`TemplateCounter::merge`] in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateCounter {
    seen: BTreeMap<String, BTreeSet<String>>,
}

impl TemplateCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, patient_id: &str, sentence: &str) {
        let fp = fingerprint(sentence);
        match self.seen.get_mut(&fp) {
            Some(set) => {
                if !set.contains(patient_id) {
                    set.insert(patient_id.into());
                }
            }
            None => {
                self.seen.insert(fp, BTreeSet::from([String::from(patient_id)]));
            }
        }
    }

    pub fn add_note(&mut self, note: &ClinicalNote) {
        for s in segment_sentences(note) {
            self.add(&note.patient_id, s.text);
        }
    }

    pub fn merge(&mut self, other: TemplateCounter) {
        for (fp, patients) in other.seen {
            self.seen.entry(fp).or_default().extend(patients);
        }
    }

    /// Fingerprints seen in notes of at least `threshold` distinct patients.
    pub fn templates(&self, threshold: usize) -> Result<BTreeSet<String>, TextError> {
        if threshold < 2 {
            return Err(TextError::Threshold(threshold));
        }
        Ok(self
            .seen
            .iter()
            .filter(|(_, p)| p.len() >= threshold)
            .map(|(fp, _)| fp.clone())
            .collect())
    }
}

pub fn detect_templates<'a, I>(sentences: I, threshold: usize) -> Result<BTreeSet<String>, TextError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut counter = TemplateCounter::new();
    for (patient, sentence) in sentences {
        counter.add(patient, sentence);
    }
    counter.templates(threshold)
}
