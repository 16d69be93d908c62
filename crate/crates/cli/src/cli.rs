//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use phenotrace_core::assertion::{evaluate, AssertionLabel, Classifier, RuleClassifier};
use phenotrace_core::coexpr::{coexpression_summary, CoexprParams, ExpressionMatrix};
use phenotrace_core::cohort::SymptomPresenceTable;
use phenotrace_core::lexicon::{Lexicon, Matcher};
use phenotrace_core::stats::{
    daily_rows, daily_table, enrichment_rows, enrichment_table, pair_rows, pairwise_table, RatioUndefined, StatConfig,
};
use phenotrace_core::synth::{calibrate_from_daily_table, Generator, SynthConfig};
use phenotrace_core::text::{Date, DayRange, PcrResult, Roster};
use rayon::prelude::*;

use crate::external::{self, LookupClassifier};
use crate::io;
use crate::manifest::Manifest;
use crate::pipeline::{self, CurateOptions};
use crate::{internal, invalid, CliError};

#[derive(Debug, Parser)]
#[command(name = "phenotrace", version, about = "Symptom curation and cohort enrichment statistics for clinical notes")]
pub struct Cli {
    /// Worker threads for note processing; defaults to available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment, match and classify notes into a presence table.
    Curate(CurateArgs),
    /// Window-level enrichment per phenotype.
    Enrich(StatsArgs),
    /// Per-day enrichment per phenotype.
    Timeline(StatsArgs),
    /// Co-occurrence of phenotype pairs with Fisher tests and BH adjustment.
    Pairwise(StatsArgs),
    /// Compare predicted assertion labels against gold labels.
    Eval(EvalArgs),
    /// Generate a synthetic cohort with gold labels.
    Synth(SynthArgs),
    /// Two-gene co-expression summary per cell population.
    Coexpr(CoexprArgs),
    /// Re-run a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct CurationFlags {
    /// Lexicon CSV (`group_id,term`); defaults to the bundled lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Assertion rule configuration (TOML); defaults to the bundled rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value = "-14..14", allow_hyphen_values = true)]
    day_range: DayRange,
    /// Sentences shared by at least this many patients are boilerplate.
    #[arg(long, default_value_t = phenotrace_core::text::DEFAULT_TEMPLATE_THRESHOLD)]
    template_threshold: usize,
    /// Keep boilerplate sentences.
    #[arg(long)]
    no_template_exclusion: bool,
    /// Count MAYBE mentions as present.
    #[arg(long)]
    include_maybe: bool,
}

impl CurationFlags {
    fn options(&self) -> CurateOptions {
        CurateOptions {
            day_range: self.day_range,
            include_maybe: self.include_maybe,
            template_threshold: self.template_threshold,
            template_exclusion: !self.no_template_exclusion,
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.lexicon.iter().chain(&self.rules).cloned().collect()
    }
}

#[derive(Debug, Args)]
struct CurateArgs {
    /// Notes as JSON lines `{patient_id, note_id, date, text}`.
    #[arg(long)]
    notes: PathBuf,
    /// Patients CSV `patient_id,pcr_date,pcr_result`.
    #[arg(long)]
    patients: PathBuf,
    #[command(flatten)]
    flags: CurationFlags,
    /// Also write the per-patient presence table.
    #[arg(long)]
    per_patient: bool,
    /// Write the mentions to classify as `batch.jsonl` for an external model.
    #[arg(long)]
    emit_batch: bool,
    /// Labels from an external model, one JSON line per batch entry.
    #[arg(long, conflicts_with = "emit_batch")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RatioPolicy {
    Dash,
    Inf,
    Empty,
}

impl From<RatioPolicy> for RatioUndefined {
    fn from(p: RatioPolicy) -> Self {
        match p {
            RatioPolicy::Dash => RatioUndefined::Dash,
            RatioPolicy::Inf => RatioUndefined::Infinity,
            RatioPolicy::Empty => RatioUndefined::Empty,
        }
    }
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Pre-tabulated counts instead of a presence table.
    #[arg(long, conflicts_with_all = ["presence", "notes"])]
    from_counts: Option<PathBuf>,
    /// Per-patient presence CSV written by `curate --per-patient`.
    #[arg(long, requires = "patients", conflicts_with = "notes")]
    presence: Option<PathBuf>,
    /// Notes to curate on the fly.
    #[arg(long, requires = "patients")]
    notes: Option<PathBuf>,
    #[arg(long)]
    patients: Option<PathBuf>,
    #[command(flatten)]
    flags: CurationFlags,
    #[arg(long, default_value = "-7..-1", allow_hyphen_values = true)]
    window: DayRange,
    /// BH family size; defaults to the number of pairs tested.
    #[arg(long)]
    m_tests: Option<usize>,
    /// Cohort sizes, needed when count input is given as percentages.
    #[arg(long, requires = "n_neg")]
    n_pos: Option<u64>,
    #[arg(long, requires = "n_pos")]
    n_neg: Option<u64>,
    /// How to print a ratio whose denominator is zero.
    #[arg(long, value_enum, default_value = "dash")]
    ratio_undefined: RatioPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MissingPolicy {
    /// Fail when a gold mention has no prediction.
    Error,
    /// Score a missing prediction as OTHER.
    Other,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Gold CSV `sentence_id,mention_index,label`.
    #[arg(long)]
    gold: PathBuf,
    /// Predictions CSV with the same key columns.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, value_enum, default_value = "error")]
    missing: MissingPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 635)]
    n_pos: usize,
    #[arg(long, default_value_t = 29859)]
    n_neg: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Daily percentages `group_id,cohort,day,pct`; defaults to the bundled timeline.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    negation_rate: Option<f64>,
    #[arg(long)]
    uncertainty_rate: Option<f64>,
    #[arg(long)]
    other_rate: Option<f64>,
    #[arg(long)]
    template_rate: Option<f64>,
    #[arg(long)]
    template_threshold: Option<usize>,
    #[arg(long)]
    start_date: Option<Date>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CoexprArgs {
    /// Sparse counts: header `n_cells n_genes n_entries`, then `cell gene count`, 0-based.
    #[arg(long)]
    matrix: PathBuf,
    /// Cell annotations CSV `cell_id,tissue,cell_type`, in matrix row order.
    #[arg(long)]
    cells: PathBuf,
    /// Gene symbols, one per line, in matrix column order.
    #[arg(long)]
    genes: PathBuf,
    #[arg(long, default_value = "ACE2")]
    gene_a: String,
    #[arg(long, default_value = "TMPRSS2")]
    gene_b: String,
    #[arg(long, default_value_t = 100)]
    min_cells: usize,
    #[arg(long, default_value_t = 0.01)]
    min_frac: f64,
    /// Logarithm base for `log(1 + cp10k)`; natural log when omitted.
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn run() -> i32 {
    match run_from_args(std::env::args()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_from_args<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(invalid(e.render().to_string().trim_end())),
    };
    let workers = cli.workers.unwrap_or_else(pipeline::default_workers);
    if workers == 0 {
        return Err(invalid("--workers must be at least 1"));
    }
    let pool = pipeline::thread_pool(workers)?;
    let recorded = argv.get(1..).unwrap_or_default().to_vec();
    pool.install(|| dispatch(cli.command, &recorded))
}

fn dispatch(command: Command, args: &[String]) -> Result<(), CliError> {
    match command {
        Command::Curate(a) => cmd_curate(a, args),
        Command::Enrich(a) => cmd_stats(StatsKind::Enrich, a, args),
        Command::Timeline(a) => cmd_stats(StatsKind::Timeline, a, args),
        Command::Pairwise(a) => cmd_stats(StatsKind::Pairwise, a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::Synth(a) => cmd_synth(a, args),
        Command::Coexpr(a) => cmd_coexpr(a, args),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))
}

fn finish(command: &str, args: &[String], inputs: &[PathBuf], seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    Manifest::collect(command, args, inputs, seed, out)?.write(out)
}

fn cmd_curate(a: CurateArgs, args: &[String]) -> Result<(), CliError> {
    let lexicon = io::load_lexicon(a.flags.lexicon.as_deref())?;
    let rules = io::load_rules(a.flags.rules.as_deref())?;
    let roster = io::read_patients(&a.patients)?;
    let notes = io::read_notes(&a.notes)?;
    let options = a.flags.options();
    prepare_out(&a.out)?;

    let rule_classifier = RuleClassifier::new(&rules);
    let mut inputs = vec![a.notes.clone(), a.patients.clone()];
    inputs.extend(a.flags.inputs());

    let lookup = match &a.predictions {
        Some(p) => {
            inputs.push(p.clone());
            let matcher = Matcher::new(&lexicon).map_err(invalid)?;
            let (_, outcomes) = pipeline::curate_all(&notes, &roster, &matcher, &rule_classifier, &options)?;
            Some(LookupClassifier::new(&external::requests(&outcomes), &external::read_responses(p)?)?)
        }
        None => None,
    };
    let classifier: &dyn Classifier = match &lookup {
        Some(l) => l,
        None => &rule_classifier,
    };

    let result = pipeline::curate(&notes, &roster, &lexicon, classifier, &options)?;
    if let Some(misses) = lookup.as_ref().map(LookupClassifier::misses).filter(|m| *m > 0) {
        return Err(internal(format!("{misses} mentions had no external prediction")));
    }
    log::info!(
        "{} notes, {} outside {}, {} rejected",
        result.notes_seen,
        result.notes_outside_range,
        options.day_range,
        result.rejects.len()
    );

    io::write_presence(&a.out.join("presence.csv"), &result.table)?;
    if a.per_patient {
        io::write_presence_long(&a.out.join("presence_long.csv"), &result.table)?;
    }
    io::write_rejects(&a.out.join("rejects.csv"), &result.rejects)?;
    io::write_predictions(&a.out.join("predictions.csv"), &result.predictions)?;
    io::write_lines(&a.out.join("templates.txt"), &result.templates)?;
    if a.emit_batch {
        let matcher = Matcher::new(&lexicon).map_err(invalid)?;
        let (_, outcomes) = pipeline::curate_all(&notes, &roster, &matcher, &rule_classifier, &options)?;
        external::write_batch(&a.out.join("batch.jsonl"), &external::requests(&outcomes))?;
    }
    finish("curate", args, &inputs, None, &a.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StatsKind {
    Enrich,
    Timeline,
    Pairwise,
}

fn presence_from(a: &StatsArgs, inputs: &mut Vec<PathBuf>) -> Result<SymptomPresenceTable, CliError> {
    let lexicon: Lexicon = io::load_lexicon(a.flags.lexicon.as_deref())?;
    inputs.extend(a.flags.inputs());
    let patients = a.patients.as_ref().ok_or_else(|| invalid("--patients is required"))?;
    inputs.push(patients.clone());
    let roster: Roster = io::read_patients(patients)?;
    if let Some(p) = &a.presence {
        inputs.push(p.clone());
        let groups = lexicon.group_ids().map(String::from).collect();
        return io::read_presence_long(p, groups, &roster, a.flags.day_range);
    }
    let notes_path = a.notes.as_ref().ok_or_else(|| invalid("one of --from-counts, --presence or --notes is required"))?;
    inputs.push(notes_path.clone());
    let notes = io::read_notes(notes_path)?;
    let classifier = RuleClassifier::new(&io::load_rules(a.flags.rules.as_deref())?);
    Ok(pipeline::curate(&notes, &roster, &lexicon, &classifier, &a.flags.options())?.table)
}

fn sizes_of<T>(rows: &[T], f: impl Fn(&T) -> (u64, u64)) -> (u64, u64) {
    rows.first().map_or((0, 0), f)
}

fn cmd_stats(kind: StatsKind, a: StatsArgs, args: &[String]) -> Result<(), CliError> {
    if !a.flags.day_range.contains_range(&a.window) {
        return Err(invalid(format!("window {} is not inside the day range {}", a.window, a.flags.day_range)));
    }
    let policy: RatioUndefined = a.ratio_undefined.into();
    let stats_err = |e: phenotrace_core::StatsError| invalid(e);
    let mut inputs = Vec::new();
    prepare_out(&a.out)?;

    let name = match kind {
        StatsKind::Enrich => "enrich",
        StatsKind::Timeline => "timeline",
        StatsKind::Pairwise => "pairwise",
    };

    if let Some(path) = &a.from_counts {
        inputs.push(path.clone());
        let text = io::read_text(path)?;
        let src = path.display().to_string();
        match kind {
            StatsKind::Enrich => {
                let counts = io::parse_group_counts(&text, &src)?;
                let rows = enrichment_rows(&counts).map_err(stats_err)?;
                io::write_enrichment(&a.out.join("enrichment.csv"), &rows, sizes_of(&counts, |c| (c.n_pos, c.n_neg)), policy)?;
            }
            StatsKind::Timeline => {
                let sizes = a.n_pos.zip(a.n_neg);
                let mut counts = io::parse_daily_counts(&text, &src, sizes)?;
                counts.retain(|c| a.window.contains(c.day));
                let rows = daily_rows(&counts).map_err(stats_err)?;
                io::write_timeline(&a.out.join("timeline.csv"), &rows, sizes_of(&counts, |c| (c.n_pos, c.n_neg)), policy)?;
            }
            StatsKind::Pairwise => {
                let counts = io::parse_pair_counts(&text, &src)?;
                let rows = if counts.is_empty() { Vec::new() } else { pair_rows(&counts, a.m_tests).map_err(stats_err)? };
                io::write_pairwise(&a.out.join("pairwise.csv"), &rows, sizes_of(&counts, |c| (c.n_pos, c.n_neg)), policy)?;
            }
        }
        return finish(name, args, &inputs, None, &a.out);
    }

    let table = presence_from(&a, &mut inputs)?;
    let sizes =
        (table.cohort_size(PcrResult::Positive) as u64, table.cohort_size(PcrResult::Negative) as u64);
    let empty = table.is_empty();
    match kind {
        StatsKind::Enrich => {
            let rows = if empty { Vec::new() } else { enrichment_table(&table, a.window).map_err(stats_err)? };
            io::write_enrichment(&a.out.join("enrichment.csv"), &rows, sizes, policy)?;
        }
        StatsKind::Timeline => {
            let rows = if empty { Vec::new() } else { daily_table(&table, a.window).map_err(stats_err)? };
            io::write_timeline(&a.out.join("timeline.csv"), &rows, sizes, policy)?;
        }
        StatsKind::Pairwise => {
            let config = StatConfig { m_tests: a.m_tests, window: a.window, ratio_undefined: policy };
            let rows = if empty { Vec::new() } else { pairwise_table(&table, &config).map_err(stats_err)? };
            io::write_pairwise(&a.out.join("pairwise.csv"), &rows, sizes, policy)?;
        }
    }
    finish(name, args, &inputs, None, &a.out)
}

fn cmd_eval(a: EvalArgs, args: &[String]) -> Result<(), CliError> {
    let gold = io::read_labels(&a.gold)?;
    let predicted = io::read_labels(&a.predictions)?;
    let mut by_key = std::collections::HashMap::with_capacity(predicted.len());
    for p in &predicted {
        if by_key.insert((p.sentence_id.as_str(), p.mention_index), p.label).is_some() {
            return Err(invalid(format!(
                "{}: duplicate prediction for {} #{}",
                a.predictions.display(),
                p.sentence_id,
                p.mention_index
            )));
        }
    }
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    let mut missing = 0usize;
    for row in &gold {
        let label = match by_key.get(&(row.sentence_id.as_str(), row.mention_index)) {
            Some(l) => *l,
            None => {
                missing += 1;
                AssertionLabel::Other
            }
        };
        g.push(row.label);
        p.push(label);
    }
    if missing > 0 {
        match a.missing {
            MissingPolicy::Error => {
                return Err(invalid(format!("{missing} gold mentions have no prediction (see --missing)")))
            }
            MissingPolicy::Other => log::warn!("{missing} gold mentions had no prediction and were scored as OTHER"),
        }
    }
    let metrics = evaluate(&g, &p).map_err(invalid)?;
    prepare_out(&a.out)?;
    io::write_metrics(&a.out.join("metrics.csv"), &metrics)?;
    io::write_confusion(&a.out.join("confusion.csv"), &metrics)?;
    finish("eval", args, &[a.gold, a.predictions], None, &a.out)
}

fn cmd_synth(a: SynthArgs, args: &[String]) -> Result<(), CliError> {
    let lexicon = io::load_lexicon(a.lexicon.as_deref())?;
    let mut inputs: Vec<PathBuf> = a.lexicon.iter().cloned().collect();
    let records = match &a.calibration {
        Some(p) => {
            inputs.push(p.clone());
            io::parse_percentages(&io::read_text(p)?, &p.display().to_string())?
        }
        None => io::parse_percentages(crate::data::TIMELINE_PERCENTAGES, "bundled calibration")?,
    };
    let mut config: SynthConfig = calibrate_from_daily_table(&records, a.n_pos, a.n_neg).map_err(invalid)?;
    config.seed = a.seed;
    if let Some(r) = a.negation_rate {
        config.negation_rate = r;
    }
    if let Some(r) = a.uncertainty_rate {
        config.uncertainty_rate = r;
    }
    if let Some(r) = a.other_rate {
        config.other_rate = r;
    }
    if let Some(r) = a.template_rate {
        config.template_rate = r;
    }
    if let Some(t) = a.template_threshold {
        config.template_threshold = t;
    }
    if let Some(d) = a.start_date {
        config.start_date = d;
    }
    let generator = Generator::new(&config, &lexicon).map_err(invalid)?;
    let drafts = (0..generator.n_patients()).into_par_iter().map(|i| generator.patient(i)).collect();
    let corpus = generator.assemble(drafts);
    log::info!("{} patients, {} notes, {} gold mentions", corpus.patients.len(), corpus.notes.len(), corpus.gold.len());

    prepare_out(&a.out)?;
    io::write_notes(&a.out.join("notes.jsonl"), &corpus.notes)?;
    io::write_patients(&a.out.join("patients.csv"), &corpus.patients)?;
    io::write_gold(&a.out.join("gold.csv"), &corpus.gold)?;
    io::write_lines(&a.out.join("templates.txt"), &corpus.templates)?;
    finish("synth", args, &inputs, Some(a.seed), &a.out)
}

fn cmd_coexpr(a: CoexprArgs, args: &[String]) -> Result<(), CliError> {
    let (n_cells, n_genes, entries) = io::read_triplets(&a.matrix)?;
    let cells = io::read_cells(&a.cells)?;
    let genes = io::read_genes(&a.genes)?;
    if cells.len() != n_cells || genes.len() != n_genes {
        return Err(invalid(format!(
            "matrix is {n_cells} x {n_genes} but {} cells and {} genes were annotated",
            cells.len(),
            genes.len()
        )));
    }
    let matrix = ExpressionMatrix::new(cells, genes, entries).map_err(invalid)?;
    let mut params = CoexprParams::new(a.gene_a.clone(), a.gene_b.clone());
    params.min_cells = a.min_cells;
    params.min_frac = a.min_frac;
    if let Some(b) = a.log_base {
        params.log_base = b;
    }
    let report = coexpression_summary(&matrix, &params).map_err(invalid)?;
    prepare_out(&a.out)?;
    io::write_coexpr(&a.out.join("coexpr.csv"), &report, &a.gene_a, &a.gene_b)?;
    io::write_lines(&a.out.join("dropped_cells.txt"), &report.dropped_cells)?;
    finish("coexpr", args, &[a.matrix, a.cells, a.genes], None, &a.out)
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = Manifest::read(&a.manifest)?;
    if manifest.command == "replay" {
        return Err(invalid("cannot replay a replay"));
    }
    manifest.check_inputs()?;
    let mut argv = vec![manifest.tool.clone()];
    argv.extend(manifest.args.iter().cloned());
    argv.push("--out".into());
    argv.push(a.out.to_string_lossy().into_owned());
    run_from_args(argv)?;
    let diff = manifest.diff_outputs(&a.out)?;
    if !diff.is_empty() {
        return Err(internal(format!("replay produced different outputs:\n  {}", diff.join("\n  "))));
    }
    log::info!("replay of `{}` reproduced {} files", manifest.command, manifest.outputs.len());
    Ok(())
}
