//! Readers and writers for every file format the tool consumes or emits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use phenotrace_core::assertion::{AssertionLabel, EvalMetrics, RuleConfig};
use phenotrace_core::coexpr::{CellAnnotation, CoexprReport};
use phenotrace_core::cohort::{Reject, SymptomPresenceTable};
use phenotrace_core::lexicon::{Lexicon, LexiconError, LexiconRecord};
use phenotrace_core::stats::{
    format_ratio, DailyCounts, DailyRow, EnrichmentRow, GroupCounts, PairCounts, PairRow, RatioUndefined,
};
use phenotrace_core::synth::{CalibrationRecord, GoldLabel};
use phenotrace_core::text::{ClinicalNote, Date, DayRange, PatientRecord, PcrResult, Roster};
use serde::Deserialize;

use crate::{internal, invalid, CliError};

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| internal(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str], source: &str) -> Result<(), CliError> {
    let found = rdr.headers().map_err(|e| invalid(format!("{source}: {e}")))?;
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(invalid(format!(
            "{source}: expected header `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Lexicon CSV with header `group_id,term`.
pub fn parse_lexicon(text: &str, source: &str) -> Result<Lexicon, CliError> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &["group_id", "term"], source)?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{source}: {e}")))?;
        let line = line_of(&rec) as usize;
        if rec.len() != 2 {
            let reason = format!("expected 2 fields, found {}", rec.len());
            return Err(invalid(format!("{source}: {}", LexiconError::Malformed { line, reason })));
        }
        records.push(LexiconRecord { line, group_id: rec[0].to_string(), term: rec[1].to_string() });
    }
    Lexicon::from_records(records).map_err(|e| invalid(format!("{source}: {e}")))
}

/// The given lexicon file, or the bundled one.
pub fn load_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    match path {
        Some(p) => parse_lexicon(&read_text(p)?, &p.display().to_string()),
        None => parse_lexicon(crate::data::LEXICON, "bundled lexicon"),
    }
}

pub fn load_rules(path: Option<&Path>) -> Result<RuleConfig, CliError> {
    let (text, source) = match path {
        Some(p) => (read_text(p)?, p.display().to_string()),
        None => (crate::data::RULES.to_string(), "bundled rules".to_string()),
    };
    toml::from_str(&text).map_err(|e| invalid(format!("{source}: {e}")))
}

/// JSON-lines notes. Blank lines are skipped; note ids must be unique.
pub fn read_notes(path: &Path) -> Result<Vec<ClinicalNote>, CliError> {
    let reader = BufReader::new(open(path)?);
    let mut notes = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let note: ClinicalNote =
            serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !ids.insert(note.note_id.clone()) {
            return Err(invalid(format!("{}:{}: duplicate note_id `{}`", path.display(), i + 1, note.note_id)));
        }
        notes.push(note);
    }
    Ok(notes)
}

pub fn write_notes(path: &Path, notes: &[ClinicalNote]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for n in notes {
        serde_json::to_writer(&mut w, n).map_err(internal)?;
        w.write_all(b"\n").map_err(internal)?;
    }
    w.flush().map_err(internal)
}

/// Patients CSV `patient_id,pcr_date,pcr_result`.
pub fn read_patients(path: &Path) -> Result<Roster, CliError> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    let mut rdr = csv_reader(&text);
    check_header(&mut rdr, &["patient_id", "pcr_date", "pcr_result"], &source)?;
    let mut roster = Roster::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{source}: {e}")))?;
        let line = line_of(&rec);
        let bad = |e: &dyn std::fmt::Display| invalid(format!("{source}:{line}: {e}"));
        if rec.len() != 3 {
            return Err(bad(&format!("expected 3 fields, found {}", rec.len())));
        }
        let pcr_date: Date = rec[1].parse().map_err(|e| bad(&e))?;
        let pcr_result: PcrResult = rec[2].parse().map_err(|e| bad(&e))?;
        roster.insert(PatientRecord { patient_id: rec[0].trim().to_string(), pcr_date, pcr_result });
    }
    Ok(roster)
}

pub fn write_patients(path: &Path, patients: &[PatientRecord]) -> Result<(), CliError> {
    write_rows(
        path,
        &header(&["patient_id", "pcr_date", "pcr_result"]),
        patients.iter().map(|p| vec![p.patient_id.clone(), p.pcr_date.to_string(), p.pcr_result.to_string()]),
    )
}

/// A row of a gold or prediction label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub sentence_id: String,
    pub mention_index: usize,
    pub label: AssertionLabel,
    pub confidence: Option<f64>,
}

/// Label CSV with at least `sentence_id,mention_index,label`; an optional
/// `confidence` column is kept, other columns are ignored.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|e| invalid(format!("{source}: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(si), Some(mi), Some(li)) = (col("sentence_id"), col("mention_index"), col("label")) else {
        return Err(invalid(format!("{source}: header must contain sentence_id,mention_index,label")));
    };
    let ci = col("confidence");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{source}: {e}")))?;
        let line = line_of(&rec);
        let field = |i: usize| rec.get(i).ok_or_else(|| invalid(format!("{source}:{line}: missing field")));
        let mention_index =
            field(mi)?.trim().parse().map_err(|e| invalid(format!("{source}:{line}: mention_index: {e}")))?;
        let label = field(li)?.parse().map_err(|e| invalid(format!("{source}:{line}: {e}")))?;
        let confidence = match ci {
            Some(i) => Some(field(i)?.trim().parse().map_err(|e| invalid(format!("{source}:{line}: confidence: {e}")))?),
            None => None,
        };
        out.push(LabelRow { sentence_id: field(si)?.to_string(), mention_index, label, confidence });
    }
    Ok(out)
}

pub fn write_gold(path: &Path, gold: &[GoldLabel]) -> Result<(), CliError> {
    write_rows(
        path,
        &header(&["sentence_id", "mention_index", "label"]),
        gold.iter().map(|g| vec![g.sentence_id.clone(), g.mention_index.to_string(), g.label.to_string()]),
    )
}

pub fn write_predictions(path: &Path, rows: &[LabelRow]) -> Result<(), CliError> {
    write_rows(
        path,
        &header(&["sentence_id", "mention_index", "label", "confidence"]),
        rows.iter().map(|r| {
            vec![
                r.sentence_id.clone(),
                r.mention_index.to_string(),
                r.label.to_string(),
                format!("{:.4}", r.confidence.unwrap_or(1.0)),
            ]
        }),
    )
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<(), CliError> {
    write_rows(
        path,
        &header(&["note_id", "patient_id", "reason"]),
        rejects.iter().map(|r| vec![r.note_id.clone(), r.patient_id.clone(), r.reason.clone()]),
    )
}

/// Per-cell patient counts, one row per non-empty `(group, day, arm)`.
pub fn write_presence(path: &Path, table: &SymptomPresenceTable) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (g, day, _) in table.cells() {
        for arm in [PcrResult::Positive, PcrResult::Negative] {
            let n = table.count(g, day, arm);
            if n > 0 {
                rows.push(vec![g.to_string(), day.to_string(), arm.to_string(), n.to_string()]);
            }
        }
    }
    write_rows(path, &header(&["group_id", "relative_day", "cohort", "patient_count"]), rows)
}

/// One row per `(group, day, patient)`.
pub fn write_presence_long(path: &Path, table: &SymptomPresenceTable) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (g, day, patients) in table.cells() {
        for p in patients {
            let arm = table.arm_of(p).map_or("", PcrResult::as_str);
            rows.push(vec![g.to_string(), day.to_string(), arm.to_string(), p.clone()]);
        }
    }
    write_rows(path, &header(&["group_id", "relative_day", "cohort", "patient_id"]), rows)
}

pub fn read_presence_long(
    path: &Path,
    groups: Vec<String>,
    roster: &Roster,
    day_range: DayRange,
) -> Result<SymptomPresenceTable, CliError> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    let mut rdr = csv_reader(&text);
    check_header(&mut rdr, &["group_id", "relative_day", "cohort", "patient_id"], &source)?;
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{source}: {e}")))?;
        let line = line_of(&rec);
        if rec.len() != 4 {
            return Err(invalid(format!("{source}:{line}: expected 4 fields")));
        }
        let day: i64 = rec[1].trim().parse().map_err(|e| invalid(format!("{source}:{line}: {e}")))?;
        let arm: PcrResult = rec[2].parse().map_err(|e| invalid(format!("{source}:{line}: {e}")))?;
        let patient = rec[3].trim().to_string();
        if roster.get(&patient).is_some_and(|(_, a)| a != arm) {
            return Err(invalid(format!("{source}:{line}: cohort of `{patient}` disagrees with the roster")));
        }
        entries.push((rec[0].to_string(), day, patient));
    }
    SymptomPresenceTable::from_entries(groups, roster, day_range, entries)
        .map_err(|e| invalid(format!("{source}: {e}")))
}

fn deserialize_all<T: for<'de> Deserialize<'de>>(text: &str, expected: &[&str], source: &str) -> Result<Vec<T>, CliError> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, expected, source)?;
    rdr.deserialize().map(|r| r.map_err(|e| invalid(format!("{source}: {e}")))).collect()
}

/// `group_id,k_pos,k_neg,n_pos,n_neg`
pub fn parse_group_counts(text: &str, source: &str) -> Result<Vec<GroupCounts>, CliError> {
    deserialize_all(text, &["group_id", "k_pos", "k_neg", "n_pos", "n_neg"], source)
}

/// `group_a,group_b,k_pos,k_neg,n_pos,n_neg`
pub fn parse_pair_counts(text: &str, source: &str) -> Result<Vec<PairCounts>, CliError> {
    deserialize_all(text, &["group_a", "group_b", "k_pos", "k_neg", "n_pos", "n_neg"], source)
}

#[derive(Deserialize)]
struct PercentRow {
    group_id: String,
    cohort: PcrResult,
    day: i64,
    pct: f64,
}

/// `group_id,cohort,day,pct` with percentages in [0, 100].
pub fn parse_percentages(text: &str, source: &str) -> Result<Vec<CalibrationRecord>, CliError> {
    let rows: Vec<PercentRow> = deserialize_all(text, &["group_id", "cohort", "day", "pct"], source)?;
    rows.into_iter()
        .map(|r| {
            if !(0.0..=100.0).contains(&r.pct) {
                return Err(invalid(format!("{source}: percentage {} for {} day {} is outside [0, 100]", r.pct, r.group_id, r.day)));
            }
            Ok(CalibrationRecord { group_id: r.group_id, cohort: r.cohort, day: r.day, pct: r.pct })
        })
        .collect()
}

/// Pairs the two arms of each `(group, day)` and converts percentages to
/// counts as `round(pct * n / 100)`. Order follows first appearance.
pub fn daily_counts_from_percentages(
    records: &[CalibrationRecord],
    n_pos: u64,
    n_neg: u64,
) -> Result<Vec<DailyCounts>, CliError> {
    let mut keys: Vec<(String, i64)> = Vec::new();
    let mut pct = std::collections::HashMap::new();
    for r in records {
        let key = (r.group_id.clone(), r.day);
        if !keys.contains(&key) {
            keys.push(key.clone());
        }
        if pct.insert((key, r.cohort), r.pct).is_some() {
            return Err(invalid(format!("duplicate percentage for {} {} day {}", r.group_id, r.cohort, r.day)));
        }
    }
    keys.into_iter()
        .map(|(g, day)| {
            let get = |arm| {
                pct.get(&((g.clone(), day), arm))
                    .copied()
                    .ok_or_else(|| invalid(format!("missing {arm} percentage for {g} day {day}")))
            };
            let (pp, pn) = (get(PcrResult::Positive)?, get(PcrResult::Negative)?);
            Ok(DailyCounts {
                group_id: g.clone(),
                day,
                k_pos: (pp * n_pos as f64 / 100.0).round() as u64,
                k_neg: (pn * n_neg as f64 / 100.0).round() as u64,
                n_pos,
                n_neg,
            })
        })
        .collect()
}

/// Daily counts, either `group_id,day,k_pos,k_neg,n_pos,n_neg` or the
/// percentage schema, which needs the cohort sizes.
pub fn parse_daily_counts(text: &str, source: &str, sizes: Option<(u64, u64)>) -> Result<Vec<DailyCounts>, CliError> {
    let first = text.lines().next().unwrap_or("");
    if first.split(',').any(|c| c.trim() == "pct") {
        let (n_pos, n_neg) = sizes.ok_or_else(|| {
            invalid(format!("{source}: percentage input needs --n-pos and --n-neg to recover counts"))
        })?;
        daily_counts_from_percentages(&parse_percentages(text, source)?, n_pos, n_neg)
    } else {
        deserialize_all(text, &["group_id", "day", "k_pos", "k_neg", "n_pos", "n_neg"], source)
    }
}

fn sci(p: phenotrace_core::PValue) -> String {
    p.to_sci()
}

pub fn write_enrichment(
    path: &Path,
    rows: &[EnrichmentRow],
    sizes: (u64, u64),
    policy: RatioUndefined,
) -> Result<(), CliError> {
    let (np, nn) = sizes;
    let cols = vec![
        "Phenotype".to_string(),
        format!("COVID+ count (N={np})"),
        format!("COVID- count (N = {nn})"),
        format!("COVID+ proportion (N={np})"),
        format!("COVID- proportion (N={nn})"),
        "(COVID+/COVID-) relative ratio".to_string(),
        "2-tailed p-value".to_string(),
    ];
    write_rows(
        path,
        &cols,
        rows.iter().map(|r| {
            vec![
                r.group_id.clone(),
                r.k_pos.to_string(),
                r.k_neg.to_string(),
                format!("{:.2}", r.p_pos),
                format!("{:.2}", r.p_neg),
                format_ratio(r.ratio, policy),
                sci(r.p_value),
            ]
        }),
    )
}

pub fn write_timeline(path: &Path, rows: &[DailyRow], sizes: (u64, u64), policy: RatioUndefined) -> Result<(), CliError> {
    let (np, nn) = sizes;
    let cols = vec![
        "Phenotype".to_string(),
        "Day".to_string(),
        format!("Positive (n = {np})"),
        format!("Negative (n = {nn})"),
        "Ratio (Positive/Negative)".to_string(),
        "p-value".to_string(),
    ];
    write_rows(
        path,
        &cols,
        rows.iter().map(|r| {
            vec![
                r.group_id.clone(),
                r.day.to_string(),
                format!("{:.2}", r.pct_pos),
                format!("{:.2}", r.pct_neg),
                format_ratio(r.ratio, policy),
                sci(r.p_value),
            ]
        }),
    )
}

pub fn write_pairwise(path: &Path, rows: &[PairRow], sizes: (u64, u64), policy: RatioUndefined) -> Result<(), CliError> {
    let (np, nn) = sizes;
    let cols = vec![
        "Phenotype 1".to_string(),
        "Phenotype 2".to_string(),
        format!("COVID+ count (N={np})"),
        format!("COVID- count (N={nn})"),
        format!("COVID+ % (N={np})"),
        format!("COVID- % (N={nn})"),
        "(COVID+)/(COVID-) ratio".to_string(),
        "raw p-value".to_string(),
        "BH-corrected p-value".to_string(),
    ];
    write_rows(
        path,
        &cols,
        rows.iter().map(|r| {
            vec![
                r.group_a.clone(),
                r.group_b.clone(),
                r.k_pos.to_string(),
                r.k_neg.to_string(),
                format!("{:.2}", r.pct_pos),
                format!("{:.2}", r.pct_neg),
                format_ratio(r.ratio, policy),
                sci(r.p_raw),
                sci(r.p_adjusted),
            ]
        }),
    )
}

/// Long format `metric,label,value`; overall metrics have an empty label.
pub fn write_metrics(path: &Path, m: &EvalMetrics) -> Result<(), CliError> {
    let f = |x: f64| format!("{x:.4}");
    let mut rows = vec![
        vec!["n_total".into(), String::new(), m.n_total.to_string()],
        vec!["accuracy".into(), String::new(), f(m.accuracy)],
        vec!["tpr".into(), String::new(), f(m.tpr)],
        vec!["fpr".into(), String::new(), f(m.fpr)],
        vec!["fnr".into(), String::new(), f(m.fnr)],
    ];
    for (label, lm) in &m.per_label {
        for (name, v) in [("precision", f(lm.precision)), ("recall", f(lm.recall)), ("f1", f(lm.f1))] {
            rows.push(vec![name.into(), label.to_string(), v]);
        }
        rows.push(vec!["support".into(), label.to_string(), lm.support.to_string()]);
    }
    write_rows(path, &header(&["metric", "label", "value"]), rows)
}

/// Rows are gold labels, columns predicted labels.
pub fn write_confusion(path: &Path, m: &EvalMetrics) -> Result<(), CliError> {
    let mut cols = vec!["gold\\predicted".to_string()];
    cols.extend(AssertionLabel::ALL.iter().map(|l| l.to_string()));
    write_rows(
        path,
        &cols,
        AssertionLabel::ALL.iter().enumerate().map(|(i, l)| {
            let mut row = vec![l.to_string()];
            row.extend(m.confusion[i].iter().map(|c| c.to_string()));
            row
        }),
    )
}

/// `(cell, gene, count)`
pub type Triplet = (usize, usize, u64);

/// Sparse triplets: a header `n_cells n_genes n_entries`, then one
/// `cell gene count` line per entry with 0-based indices. Lines starting with
/// `%` are comments.
pub fn read_triplets(path: &Path) -> Result<(usize, usize, Vec<Triplet>), CliError> {
    let reader = BufReader::new(open(path)?);
    let src = path.display().to_string();
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| invalid(format!("{src}: {e}")))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let nums: Vec<u64> = t
            .split_whitespace()
            .map(|x| x.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| invalid(format!("{src}:{}: {e}", i + 1)))?;
        if nums.len() != 3 {
            return Err(invalid(format!("{src}:{}: expected three integers", i + 1)));
        }
        match dims {
            None => dims = Some((nums[0] as usize, nums[1] as usize, nums[2] as usize)),
            Some(_) => entries.push((nums[0] as usize, nums[1] as usize, nums[2])),
        }
    }
    let (n_cells, n_genes, n_entries) = dims.ok_or_else(|| invalid(format!("{src}: missing header line")))?;
    if entries.len() != n_entries {
        return Err(invalid(format!("{src}: header announces {n_entries} entries, found {}", entries.len())));
    }
    Ok((n_cells, n_genes, entries))
}

/// `cell_id,tissue,cell_type`; row order is the cell index.
pub fn read_cells(path: &Path) -> Result<Vec<CellAnnotation>, CliError> {
    let text = read_text(path)?;
    deserialize_all(&text, &["cell_id", "tissue", "cell_type"], &path.display().to_string())
}

/// One gene symbol per line; row order is the gene index.
pub fn read_genes(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_text(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn write_coexpr(path: &Path, report: &CoexprReport, gene_a: &str, gene_b: &str) -> Result<(), CliError> {
    let cols = vec![
        "tissue".to_string(),
        "cell_type".to_string(),
        "n_cells".to_string(),
        format!("mean_{gene_a}"),
        format!("mean_{gene_b}"),
        "frac_coexpress".to_string(),
        "passes_filter".to_string(),
    ];
    write_rows(
        path,
        &cols,
        report.populations.iter().map(|p| {
            vec![
                p.tissue.clone(),
                p.cell_type.clone(),
                p.n_cells.to_string(),
                format!("{:.6}", p.mean_a),
                format!("{:.6}", p.mean_b),
                format!("{:.6}", p.frac_coexpress),
                p.passes_filter.to_string(),
            ]
        }),
    )
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = impl AsRef<str>>) -> Result<(), CliError> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{}", l.as_ref()).map_err(internal)?;
    }
    w.flush().map_err(internal)
}
