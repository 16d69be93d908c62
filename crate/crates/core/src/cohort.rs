//! The inverted presence map: (phenotype group, relative day) to the set of
//! patients with at least one affirmed mention.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use crate::assertion::{AssertionLabel, Classifier};
use crate::lexicon::Matcher;
use crate::text::{fingerprint, relative_day, segment_sentences, ClinicalNote, DayRange, PcrResult, Roster};

/// The two arms of the cohort, split by PCR result.
pub type Cohort = PcrResult;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CohortError {
    #[error("window {window} is not inside the study range {range}")]
    Window { window: DayRange, range: DayRange },
    #[error("patient `{0}` is not in the roster")]
    UnknownPatient(String),
    #[error("unknown phenotype group `{0}`")]
    UnknownGroup(String),
    #[error("day {day} is outside the study range {range}")]
    DayOutOfRange { day: i64, range: DayRange },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub note_id: String,
    pub patient_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MentionRecord {
    pub sentence_index: usize,
    pub mention_index: usize,
    pub sentence: String,
    /// Byte range of the mention in `sentence`.
    pub span: Range<usize>,
    pub term: String,
    pub group_ids: Vec<String>,
    pub label: AssertionLabel,
    pub confidence: f64,
}

/// Everything learned from one note.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteCuration {
    pub note_id: String,
    pub patient_id: String,
    pub arm: Cohort,
    pub day: i64,
    pub sentences: usize,
    pub template_sentences: usize,
    /// Mentions in non-template sentences, in text order.
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CurationSettings {
    pub day_range: DayRange,
    /// Count MAYBE as present (sensitivity analysis).
    pub include_maybe: bool,
}

impl CurationSettings {
    pub fn counts_as_present(&self, label: AssertionLabel) -> bool {
        label == AssertionLabel::Yes || (self.include_maybe && label == AssertionLabel::Maybe)
    }
}

/// Segments, drops template sentences, matches and classifies one note.
pub fn curate_note(
    note: &ClinicalNote,
    roster: &Roster,
    matcher: &Matcher,
    classifier: &dyn Classifier,
    templates: Option<&BTreeSet<String>>,
) -> Result<NoteCuration, Reject> {
    let Some((pcr_date, arm)) = roster.get(&note.patient_id) else {
        return Err(Reject {
            note_id: note.note_id.clone(),
            patient_id: note.patient_id.clone(),
            reason: "unknown patient_id".into(),
        });
    };
    let sentences = segment_sentences(note);
    let mut out = NoteCuration {
        note_id: note.note_id.clone(),
        patient_id: note.patient_id.clone(),
        arm,
        day: relative_day(note.date, pcr_date),
        sentences: sentences.len(),
        template_sentences: 0,
        mentions: Vec::new(),
    };
    for s in sentences {
        if templates.is_some_and(|t| t.contains(&fingerprint(s.text))) {
            out.template_sentences += 1;
            continue;
        }
        for (mention_index, m) in matcher.find_mentions(s.text).into_iter().enumerate() {
            let c = classifier.classify(s.text, m.span.clone());
            out.mentions.push(MentionRecord {
                sentence_index: s.index,
                mention_index,
                sentence: s.text.to_string(),
                span: m.span,
                term: m.term.to_string(),
                group_ids: m.group_ids.to_vec(),
                label: c.label,
                confidence: c.confidence,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomPresenceTable {
    groups: Vec<String>,
    arms: BTreeMap<String, Cohort>,
    day_range: DayRange,
    presence: BTreeMap<(String, i64), BTreeSet<String>>,
}

/// Accumulates curated notes into a presence table. Partial builders from
/// different workers merge associatively and commutatively.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceBuilder {
    settings: CurationSettings,
    presence: BTreeMap<(String, i64), BTreeSet<String>>,
    pub rejects: Vec<Reject>,
    pub notes_seen: usize,
    pub notes_outside_range: usize,
}

impl PresenceBuilder {
    pub fn new(settings: CurationSettings) -> Self {
        Self {
            settings,
            presence: BTreeMap::new(),
            rejects: Vec::new(),
            notes_seen: 0,
            notes_outside_range: 0,
        }
    }

    pub fn add(&mut self, outcome: &Result<NoteCuration, Reject>) {
        self.notes_seen += 1;
        let note = match outcome {
            Ok(n) => n,
            Err(r) => {
                self.rejects.push(r.clone());
                return;
            }
        };
        if !self.settings.day_range.contains(note.day) {
            self.notes_outside_range += 1;
            return;
        }
        for m in note.mentions.iter().filter(|m| self.settings.counts_as_present(m.label)) {
            for g in &m.group_ids {
                let key = (g.clone(), note.day);
                let set = self.presence.entry(key).or_default();
                if !set.contains(&note.patient_id) {
                    set.insert(note.patient_id.clone());
                }
            }
        }
    }

    pub fn merge(&mut self, other: PresenceBuilder) {
        for (k, v) in other.presence {
            self.presence.entry(k).or_default().extend(v);
        }
        self.rejects.extend(other.rejects);
        self.notes_seen += other.notes_seen;
        self.notes_outside_range += other.notes_outside_range;
    }

    /// Rejects are sorted by note id so the report does not depend on the
    /// order in which partial builders were merged.
    pub fn finish(mut self, groups: Vec<String>, roster: &Roster) -> (SymptomPresenceTable, Vec<Reject>) {
        self.rejects.sort_by(|a, b| a.note_id.cmp(&b.note_id).then(a.patient_id.cmp(&b.patient_id)));
        let table = SymptomPresenceTable {
            groups,
            arms: roster.iter().map(|(id, _, arm)| (id.to_string(), arm)).collect(),
            day_range: self.settings.day_range,
            presence: self.presence,
        };
        (table, self.rejects)
    }
}

/// Sequential end-to-end build: curate every note and invert into the table.
pub fn build_presence(
    notes: &[ClinicalNote],
    roster: &Roster,
    matcher: &Matcher,
    classifier: &dyn Classifier,
    templates: Option<&BTreeSet<String>>,
    groups: Vec<String>,
    settings: CurationSettings,
) -> (SymptomPresenceTable, Vec<Reject>) {
    let mut builder = PresenceBuilder::new(settings);
    for note in notes {
        builder.add(&curate_note(note, roster, matcher, classifier, templates));
    }
    builder.finish(groups, roster)
}

/// Patients of one group split by arm.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArmSets<'a> {
    pub positive: BTreeSet<&'a str>,
    pub negative: BTreeSet<&'a str>,
}

impl<'a> ArmSets<'a> {
    pub fn get(&self, arm: Cohort) -> &BTreeSet<&'a str> {
        match arm {
            PcrResult::Positive => &self.positive,
            PcrResult::Negative => &self.negative,
        }
    }
}

impl SymptomPresenceTable {
    /// Builds a table from `(group, day, patient)` triples, e.g. read back
    /// from a per-patient export.
    pub fn from_entries<I>(
        groups: Vec<String>,
        roster: &Roster,
        day_range: DayRange,
        entries: I,
    ) -> Result<Self, CohortError>
    where
        I: IntoIterator<Item = (String, i64, String)>,
    {
        let known: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
        let mut presence: BTreeMap<(String, i64), BTreeSet<String>> = BTreeMap::new();
        for (g, day, patient) in entries {
            if !known.contains(g.as_str()) {
                return Err(CohortError::UnknownGroup(g));
            }
            if !day_range.contains(day) {
                return Err(CohortError::DayOutOfRange { day, range: day_range });
            }
            if roster.get(&patient).is_none() {
                return Err(CohortError::UnknownPatient(patient));
            }
            presence.entry((g, day)).or_default().insert(patient);
        }
        Ok(Self {
            groups,
            arms: roster.iter().map(|(id, _, arm)| (id.to_string(), arm)).collect(),
            day_range,
            presence,
        })
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn day_range(&self) -> DayRange {
        self.day_range
    }

    pub fn cohort_size(&self, arm: Cohort) -> usize {
        self.arms.values().filter(|a| **a == arm).count()
    }

    pub fn arm_of(&self, patient_id: &str) -> Option<Cohort> {
        self.arms.get(patient_id).copied()
    }

    pub fn patients(&self, group_id: &str, day: i64) -> Option<&BTreeSet<String>> {
        self.presence.get(&(group_id.to_string(), day))
    }

    /// Number of patients of `arm` present in the cell.
    pub fn count(&self, group_id: &str, day: i64, arm: Cohort) -> usize {
        self.patients(group_id, day)
            .map_or(0, |s| s.iter().filter(|p| self.arm_of(p) == Some(arm)).count())
    }

    /// Non-empty cells in `(group, day)` order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, i64, &BTreeSet<String>)> {
        self.presence.iter().map(|((g, d), s)| (g.as_str(), *d, s))
    }

    pub fn is_empty(&self) -> bool {
        self.presence.is_empty()
    }

    /// Union of daily patient sets over `window`, split by arm. Every group of
    /// the table is present in the result, possibly with empty sets.
    pub fn window_presence(&self, window: DayRange) -> Result<BTreeMap<&str, ArmSets<'_>>, CohortError> {
        if !self.day_range.contains_range(&window) {
            return Err(CohortError::Window { window, range: self.day_range });
        }
        let mut out: BTreeMap<&str, ArmSets<'_>> =
            self.groups.iter().map(|g| (g.as_str(), ArmSets::default())).collect();
        let lo = (String::new(), window.from);
        for ((g, day), patients) in self.presence.range(lo..) {
            if !window.contains(*day) {
                continue;
            }
            let Some(entry) = out.get_mut(g.as_str()) else { continue };
            for p in patients {
                match self.arms.get(p) {
                    Some(PcrResult::Positive) => entry.positive.insert(p.as_str()),
                    Some(PcrResult::Negative) => entry.negative.insert(p.as_str()),
                    None => false,
                };
            }
        }
        Ok(out)
    }
}
