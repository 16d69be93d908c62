//! Seeded synthetic cohorts with known mention labels.
//!
//! Each patient draws from its own ChaCha8 stream: the generator is seeded
//! with `seed` and the stream number is the patient index, so patients can be
//! produced in any order or in parallel with identical output. For every
//! configured `(group, day)` cell a Bernoulli draw decides presence; present
//! cells become affirmative sentences in that day's note. Notes may also carry
//! one negated, uncertain or attributed sentence and one boilerplate
//! sentence. Every sentence carries a random clock time so that ordinary
//! sentences are not mistaken for templates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assertion::AssertionLabel;
use crate::cohort::Cohort;
use crate::lexicon::Lexicon;
use crate::text::{ClinicalNote, Date, PatientRecord, PcrResult, DEFAULT_TEMPLATE_THRESHOLD};

/// Bumped whenever a frame or template sentence changes.
pub const FRAME_BANK_VERSION: u32 = 1;

const AFFIRMATIVE: &[&str] = &[
    "Patient reports {t} at {time}.",
    "Complains of {t} since {time}.",
    "Presents with {t} at {time}.",
    "Endorses {t} as of {time}.",
    "Today the patient has {t} at {time}.",
    "Seen at {time} with {t}.",
];

const NEGATED: &[&str] = &[
    "Patient denies {t} at {time}.",
    "No {t} reported at {time}.",
    "Negative for {t} at {time}.",
    "Patient without {t} at {time}.",
    "Patient does not have {t} at {time}.",
    "Denied {t} when asked at {time}.",
];

const UNCERTAIN: &[&str] = &[
    "Possible {t} at {time}.",
    "Concern for {t} at {time}.",
    "Suspected {t} at {time}.",
    "Cannot rule out {t} at {time}.",
    "R/O {t} at {time}.",
];

const ATTRIBUTED: &[&str] = &[
    "Family history of {t} noted at {time}.",
    "Mother with {t} at {time}.",
    "Father reports {t} at {time}.",
    "Sister had {t} at {time}.",
    "Patient given education handout on {t} at {time}.",
];

/// Boilerplate sentences, verbatim across patients.
pub const TEMPLATES: &[&str] = &[
    "Education handout on fever reviewed with the patient.",
    "Handout on cough hygiene provided.",
    "Education given on hand washing and masking.",
    "Visitor policy reviewed at check in.",
    "Education handout about diarrhea and hydration given.",
    "Call the clinic with any questions about this visit.",
    "Handout given regarding headache warning signs.",
    "Discharge instructions reviewed and understood.",
];

pub fn frames(label: AssertionLabel) -> &'static [&'static str] {
    match label {
        AssertionLabel::Yes => AFFIRMATIVE,
        AssertionLabel::No => NEGATED,
        AssertionLabel::Maybe => UNCERTAIN,
        AssertionLabel::Other => ATTRIBUTED,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("cohort sizes must be positive")]
    EmptyCohort,
    #[error("probability {value} for {group_id} day {day} is outside [0, 1]")]
    Probability { group_id: String, day: i64, value: f64 },
    #[error("percentage {value} for {group_id} day {day} is outside [0, 100]")]
    Percentage { group_id: String, day: i64, value: f64 },
    #[error("phrasing rates must each lie in [0, 1] and sum to at most 1")]
    Rates,
    #[error("template rate must lie in [0, 1]")]
    TemplateRate,
    #[error("template threshold must be at least 2")]
    Threshold,
    #[error("group {0:?} is not in the lexicon")]
    UnknownGroup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub day_probs: BTreeMap<(String, Cohort, i64), f64>,
    pub negation_rate: f64,
    pub uncertainty_rate: f64,
    pub other_rate: f64,
    pub template_rate: f64,
    /// Templates reaching fewer distinct patients are stripped after generation.
    pub template_threshold: usize,
    pub seed: u64,
    /// PCR dates cycle over the 60 days starting here.
    pub start_date: Date,
}

impl SynthConfig {
    pub fn new(n_pos: usize, n_neg: usize, seed: u64) -> Self {
        Self {
            n_pos,
            n_neg,
            day_probs: BTreeMap::new(),
            negation_rate: 0.3,
            uncertainty_rate: 0.1,
            other_rate: 0.1,
            template_rate: 0.2,
            template_threshold: DEFAULT_TEMPLATE_THRESHOLD,
            seed,
            start_date: Date::from_ymd(2020, 3, 1).expect("valid date"),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(SynthError::EmptyCohort);
        }
        for ((g, _, day), p) in &self.day_probs {
            if !(0.0..=1.0).contains(p) {
                return Err(SynthError::Probability { group_id: g.clone(), day: *day, value: *p });
            }
        }
        let rates = [self.negation_rate, self.uncertainty_rate, self.other_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0 {
            return Err(SynthError::Rates);
        }
        if !(0.0..=1.0).contains(&self.template_rate) {
            return Err(SynthError::TemplateRate);
        }
        if self.template_threshold < 2 {
            return Err(SynthError::Threshold);
        }
        Ok(())
    }

    pub fn cohort_size(&self, arm: Cohort) -> usize {
        match arm {
            PcrResult::Positive => self.n_pos,
            PcrResult::Negative => self.n_neg,
        }
    }
}

/// One cell of a percentage table such as the daily timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub group_id: String,
    pub cohort: Cohort,
    pub day: i64,
    pub pct: f64,
}

/// Presence probability of each cell is `pct / 100`.
pub fn calibrate_from_daily_table(
    records: &[CalibrationRecord],
    n_pos: usize,
    n_neg: usize,
) -> Result<SynthConfig, SynthError> {
    let mut config = SynthConfig::new(n_pos, n_neg, 42);
    for r in records {
        if !(0.0..=100.0).contains(&r.pct) {
            return Err(SynthError::Percentage { group_id: r.group_id.clone(), day: r.day, value: r.pct });
        }
        config.day_probs.insert((r.group_id.clone(), r.cohort, r.day), r.pct / 100.0);
    }
    config.validate()?;
    Ok(config)
}

/// `round(p * n)`, the count a printed percentage stands for.
pub fn expected_count(p: f64, n: usize) -> u64 {
    libm::round(p * n as f64) as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabel {
    pub sentence_id: String,
    pub mention_index: usize,
    pub label: AssertionLabel,
}

pub fn sentence_id(note_id: &str, index: usize) -> String {
    format!("{note_id}#{index}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum DraftSentence {
    Mention { text: String, label: AssertionLabel },
    Template(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DraftNote {
    note_id: String,
    date: Date,
    sentences: Vec<DraftSentence>,
}

/// Output for a single patient before the corpus-wide template pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientDraft {
    pub record: PatientRecord,
    notes: Vec<DraftNote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynthCorpus {
    pub patients: Vec<PatientRecord>,
    pub notes: Vec<ClinicalNote>,
    pub gold: Vec<GoldLabel>,
    /// Template sentences that survived the threshold pass.
    pub templates: Vec<String>,
}

pub struct Generator<'a> {
    config: &'a SynthConfig,
    synonyms: Vec<Vec<&'a str>>,
    /// Per arm: day -> (group index, probability), group indices ascending.
    cells: [BTreeMap<i64, Vec<(usize, f64)>>; 2],
}

fn arm_slot(arm: Cohort) -> usize {
    match arm {
        PcrResult::Positive => 0,
        PcrResult::Negative => 1,
    }
}

impl<'a> Generator<'a> {
    pub fn new(config: &'a SynthConfig, lexicon: &'a Lexicon) -> Result<Self, SynthError> {
        config.validate()?;
        let ids: Vec<&str> = lexicon.group_ids().collect();
        let synonyms = ids
            .iter()
            .map(|g| {
                let exclusive: Vec<&str> = lexicon.exclusive_terms(g).collect();
                if exclusive.is_empty() {
                    lexicon.group(g).map(|grp| grp.terms.iter().map(String::as_str).collect()).unwrap_or_default()
                } else {
                    exclusive
                }
            })
            .collect();
        let mut cells: [BTreeMap<i64, Vec<(usize, f64)>>; 2] = Default::default();
        for ((g, arm, day), p) in &config.day_probs {
            let gi = ids.iter().position(|id| id == g).ok_or_else(|| SynthError::UnknownGroup(g.clone()))?;
            cells[arm_slot(*arm)].entry(*day).or_default().push((gi, *p));
        }
        for by_day in &mut cells {
            for v in by_day.values_mut() {
                v.sort_by_key(|(gi, _)| *gi);
            }
        }
        Ok(Self { config, synonyms, cells })
    }

    pub fn n_patients(&self) -> usize {
        self.config.n_pos + self.config.n_neg
    }

    fn sentence(&self, rng: &mut ChaCha8Rng, group: usize, label: AssertionLabel) -> Option<DraftSentence> {
        let terms = &self.synonyms[group];
        if terms.is_empty() {
            return None;
        }
        let term = terms[rng.random_range(0..terms.len())];
        let bank = frames(label);
        let frame = bank[rng.random_range(0..bank.len())];
        let time = format!("{:02}:{:02}", rng.random_range(0..24u32), rng.random_range(0..60u32));
        let text = frame.replace("{t}", term).replace("{time}", &time);
        Some(DraftSentence::Mention { text, label })
    }

    /// Patients `0..n_pos` are positive, the rest negative.
    pub fn patient(&self, index: usize) -> PatientDraft {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        let arm = if index < self.config.n_pos { PcrResult::Positive } else { PcrResult::Negative };
        let patient_id = format!("P{index:06}");
        let pcr_date = self.config.start_date.add_days((index % 60) as i64);
        let n_groups = self.synonyms.len();
        let c = self.config;

        let mut notes = Vec::new();
        for (&day, cells) in &self.cells[arm_slot(arm)] {
            let present: Vec<usize> =
                cells.iter().filter(|(_, p)| rng.random::<f64>() < *p).map(|(g, _)| *g).collect();
            if present.is_empty() {
                continue;
            }
            let mut sentences: Vec<DraftSentence> =
                present.iter().filter_map(|&g| self.sentence(&mut rng, g, AssertionLabel::Yes)).collect();
            let u: f64 = rng.random();
            let extra = if u < c.negation_rate {
                Some(AssertionLabel::No)
            } else if u < c.negation_rate + c.uncertainty_rate {
                Some(AssertionLabel::Maybe)
            } else if u < c.negation_rate + c.uncertainty_rate + c.other_rate {
                Some(AssertionLabel::Other)
            } else {
                None
            };
            if let Some(label) = extra {
                let g = rng.random_range(0..n_groups);
                sentences.extend(self.sentence(&mut rng, g, label));
            }
            if rng.random::<f64>() < c.template_rate {
                let t = rng.random_range(0..TEMPLATES.len());
                let at = rng.random_range(0..=sentences.len());
                sentences.insert(at, DraftSentence::Template(t));
            }
            let sign = if day < 0 { 'm' } else { 'p' };
            notes.push(DraftNote {
                note_id: format!("{patient_id}-{sign}{:02}", day.unsigned_abs()),
                date: pcr_date.add_days(day),
                sentences,
            });
        }
        PatientDraft { record: PatientRecord { patient_id, pcr_date, pcr_result: arm }, notes }
    }

    /// Joins patient drafts in the given order, dropping template sentences
    /// that reached fewer than `template_threshold` distinct patients.
    pub fn assemble(&self, drafts: Vec<PatientDraft>) -> SynthCorpus {
        let mut reach: Vec<BTreeSet<&str>> = (0..TEMPLATES.len()).map(|_| BTreeSet::new()).collect();
        for d in &drafts {
            for n in &d.notes {
                for s in &n.sentences {
                    if let DraftSentence::Template(t) = s {
                        reach[*t].insert(&d.record.patient_id);
                    }
                }
            }
        }
        let kept: Vec<bool> = reach.iter().map(|r| r.len() >= self.config.template_threshold).collect();

        let mut corpus = SynthCorpus {
            templates: TEMPLATES.iter().zip(&kept).filter(|(_, k)| **k).map(|(t, _)| String::from(*t)).collect(),
            ..Default::default()
        };
        for d in drafts {
            for n in d.notes {
                let mut text = String::new();
                let mut index = 0;
                for s in n.sentences {
                    let piece = match &s {
                        DraftSentence::Template(t) if !kept[*t] => continue,
                        DraftSentence::Template(t) => TEMPLATES[*t],
                        DraftSentence::Mention { text, label } => {
                            corpus.gold.push(GoldLabel {
                                sentence_id: sentence_id(&n.note_id, index),
                                mention_index: 0,
                                label: *label,
                            });
                            text.as_str()
                        }
                    };
                    if !text.is_empty() {
                        text.push(' ');
                    }
                    text.push_str(piece);
                    index += 1;
                }
                corpus.notes.push(ClinicalNote {
                    patient_id: d.record.patient_id.clone(),
                    note_id: n.note_id,
                    date: n.date,
                    text,
                });
            }
            corpus.patients.push(d.record);
        }
        corpus
    }
}

/// Sequential generation; identical to assembling [`Generator::patient`]
/// outputs produced in any order and then sorted by patient index.
pub fn generate(config: &SynthConfig, lexicon: &Lexicon) -> Result<SynthCorpus, SynthError> {
    let g = Generator::new(config, lexicon)?;
    let drafts = (0..g.n_patients()).map(|i| g.patient(i)).collect();
    Ok(g.assemble(drafts))
}
