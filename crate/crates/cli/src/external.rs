//! Bridge to an out-of-process assertion model.
//!
//! `--emit-batch` writes one JSON line per mention in curation order. The
//! model answers with one `{label, confidence}` line per request, in the same
//! order, and `--predictions` feeds those answers back as a classifier.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use phenotrace_core::assertion::{AssertionLabel, Classification, Classifier};
use phenotrace_core::cohort::{NoteCuration, Reject};
use serde::{Deserialize, Serialize};

use crate::{internal, invalid, CliError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub sentence: String,
    pub span_start: usize,
    pub span_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct BatchResponse {
    pub label: AssertionLabel,
    pub confidence: f64,
}

pub fn requests(outcomes: &[Result<NoteCuration, Reject>]) -> Vec<BatchRequest> {
    outcomes
        .iter()
        .flatten()
        .flat_map(|c| &c.mentions)
        .map(|m| BatchRequest { sentence: m.sentence.clone(), span_start: m.span.start, span_end: m.span.end })
        .collect()
}

pub fn write_batch(path: &Path, batch: &[BatchRequest]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| internal(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for r in batch {
        serde_json::to_writer(&mut w, r).map_err(internal)?;
        w.write_all(b"\n").map_err(internal)?;
    }
    w.flush().map_err(internal)
}

pub fn read_responses(path: &Path) -> Result<Vec<BatchResponse>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: BatchResponse =
            serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(invalid(format!("{}:{}: confidence must be in [0, 1]", path.display(), i + 1)));
        }
        out.push(r);
    }
    Ok(out)
}

/// Answers from a fixed table keyed by `(sentence, span)`.
pub struct LookupClassifier {
    table: HashMap<(String, usize, usize), Classification>,
    misses: AtomicUsize,
}

impl LookupClassifier {
    /// Pairs requests with responses one to one. The same request appearing
    /// twice must receive the same answer.
    pub fn new(batch: &[BatchRequest], responses: &[BatchResponse]) -> Result<Self, CliError> {
        if batch.len() != responses.len() {
            return Err(invalid(format!(
                "predictions file has {} lines but the batch has {} mentions",
                responses.len(),
                batch.len()
            )));
        }
        let mut table = HashMap::with_capacity(batch.len());
        for (i, (req, resp)) in batch.iter().zip(responses).enumerate() {
            let c = Classification { label: resp.label, confidence: resp.confidence };
            let key = (req.sentence.clone(), req.span_start, req.span_end);
            if let Some(prev) = table.insert(key, c) {
                if prev.label != c.label {
                    return Err(invalid(format!("prediction {} contradicts an earlier answer for the same mention", i + 1)));
                }
            }
        }
        Ok(Self { table, misses: AtomicUsize::new(0) })
    }

    /// Mentions that had no answer; non-zero means the notes changed since the
    /// batch was emitted.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl Classifier for LookupClassifier {
    fn classify(&self, sentence: &str, span: Range<usize>) -> Classification {
        match self.table.get(&(sentence.to_string(), span.start, span.end)) {
            Some(c) => *c,
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                Classification { label: AssertionLabel::Other, confidence: 0.0 }
            }
        }
    }

    fn descriptor(&self) -> &str {
        "external"
    }
}
