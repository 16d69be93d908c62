//! Symptom curation and temporal enrichment statistics for clinical notes.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! file system, the command line or threads lives in the `phenotrace` crate;
//! this crate holds the algorithms:
//!
//! - [`lexicon`]: phenotype synonym groups and a token-boundary aware
//!   multi-pattern matcher.
//! - [`text`]: the note data model, sentence segmentation, template sentence
//!   detection and alignment of note dates to the PCR test date.
//! - [`assertion`]: the YES/NO/MAYBE/OTHER label taxonomy, a classifier seam
//!   with a rule-based implementation, and evaluation metrics.
//! - [`cohort`]: the inverted presence map (phenotype, relative day) to the
//!   set of patients with an affirmed mention.
//! - [`stats`]: two-proportion z-tests with log-space tails, Fisher exact
//!   tests, Benjamini-Hochberg adjustment and the table builders.
//! - [`synth`]: seeded synthetic cohorts calibrated from daily proportions.
//! - [`coexpr`]: single-cell co-expression summaries on cp10k-normalized data.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assertion;
pub mod coexpr;
pub mod cohort;
pub mod lexicon;
pub mod stats;
pub mod synth;
pub mod text;

pub use assertion::{AssertionLabel, Classification, Classifier, EvalMetrics, RuleClassifier, RuleConfig};
pub use coexpr::{CoexprParams, ExpressionMatrix, PopulationSummary};
pub use cohort::{Cohort, PresenceBuilder, SymptomPresenceTable};
pub use lexicon::{Lexicon, LexiconError, Matcher, Mention, PhenotypeGroup};
pub use stats::{PValue, StatsError};
pub use synth::{SynthConfig, SynthCorpus};
pub use text::{ClinicalNote, Date, DayRange, PatientRecord, PcrResult, Roster, Sentence};


