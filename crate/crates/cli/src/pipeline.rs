//! The parallel note-processing stage.
//!
//! Work is split across a rayon pool but every reduction runs in input order,
//! so outputs do not depend on the worker count.

use std::collections::BTreeSet;

use phenotrace_core::assertion::Classifier;
use phenotrace_core::cohort::{curate_note, CurationSettings, NoteCuration, PresenceBuilder, Reject, SymptomPresenceTable};
use phenotrace_core::lexicon::{Lexicon, Matcher};
use phenotrace_core::synth::sentence_id;
use phenotrace_core::text::{ClinicalNote, DayRange, Roster, TemplateCounter};
use rayon::prelude::*;

use crate::io::LabelRow;
use crate::{internal, invalid, CliError};

#[derive(Debug, Clone)]
pub struct CurateOptions {
    pub day_range: DayRange,
    pub include_maybe: bool,
    pub template_threshold: usize,
    /// When false, template sentences are kept and counted like any other.
    pub template_exclusion: bool,
}

impl Default for CurateOptions {
    fn default() -> Self {
        Self {
            day_range: DayRange::default(),
            include_maybe: false,
            template_threshold: phenotrace_core::text::DEFAULT_TEMPLATE_THRESHOLD,
            template_exclusion: true,
        }
    }
}

#[derive(Debug)]
pub struct CurateOutput {
    pub table: SymptomPresenceTable,
    pub rejects: Vec<Reject>,
    pub predictions: Vec<LabelRow>,
    pub templates: BTreeSet<String>,
    pub notes_seen: usize,
    pub notes_outside_range: usize,
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(internal)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Fingerprints of sentences seen in at least `threshold` distinct patients.
pub fn find_templates(notes: &[ClinicalNote], threshold: usize) -> Result<BTreeSet<String>, CliError> {
    let counter = notes
        .par_iter()
        .fold(TemplateCounter::new, |mut c, n| {
            c.add_note(n);
            c
        })
        .reduce(TemplateCounter::new, |mut a, b| {
            a.merge(b);
            a
        });
    counter.templates(threshold).map_err(invalid)
}

pub type NoteOutcomes = Vec<Result<NoteCuration, Reject>>;

/// Template detection plus per-note curation, results in note order.
pub fn curate_all(
    notes: &[ClinicalNote],
    roster: &Roster,
    matcher: &Matcher,
    classifier: &dyn Classifier,
    options: &CurateOptions,
) -> Result<(BTreeSet<String>, NoteOutcomes), CliError> {
    let templates =
        if options.template_exclusion { find_templates(notes, options.template_threshold)? } else { BTreeSet::new() };
    let outcomes = notes
        .par_iter()
        .map(|n| curate_note(n, roster, matcher, classifier, Some(&templates)))
        .collect();
    Ok((templates, outcomes))
}

pub fn curate(
    notes: &[ClinicalNote],
    roster: &Roster,
    lexicon: &Lexicon,
    classifier: &dyn Classifier,
    options: &CurateOptions,
) -> Result<CurateOutput, CliError> {
    let matcher = Matcher::new(lexicon).map_err(invalid)?;
    let (templates, outcomes) = curate_all(notes, roster, &matcher, classifier, options)?;
    log::info!("{} notes curated, {} template fingerprints", outcomes.len(), templates.len());

    let mut predictions = Vec::new();
    for (note, mention) in outcomes.iter().flatten().flat_map(|c| c.mentions.iter().map(move |m| (c, m))) {
        predictions.push(LabelRow {
            sentence_id: sentence_id(&note.note_id, mention.sentence_index),
            mention_index: mention.mention_index,
            label: mention.label,
            confidence: Some(mention.confidence),
        });
    }

    let settings = CurationSettings { day_range: options.day_range, include_maybe: options.include_maybe };
    let mut builder = PresenceBuilder::new(settings);
    for o in &outcomes {
        builder.add(o);
    }
    let (notes_seen, notes_outside_range) = (builder.notes_seen, builder.notes_outside_range);
    let groups = lexicon.group_ids().map(String::from).collect();
    let (table, rejects) = builder.finish(groups, roster);
    Ok(CurateOutput { table, rejects, predictions, templates, notes_seen, notes_outside_range })
}
