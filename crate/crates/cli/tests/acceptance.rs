//! Acceptance criteria. Each criterion prints one PASS/FAIL line and the
//! process exits non-zero if any fails. Pass a criterion number to run only
//! that one: `cargo test -p phenotrace --test acceptance -- 4`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic;
use std::path::Path;
use std::time::{Duration, Instant};

use phenotrace::io::{self, LabelRow};
use phenotrace::pipeline::{self, CurateOptions};
use phenotrace_core::assertion::{evaluate, AssertionLabel, RuleClassifier};
use phenotrace_core::coexpr::{coexpression_summary, normalize_cp10k, CellAnnotation, CoexprParams, ExpressionMatrix};
use phenotrace_core::lexicon::{normalize_term, Lexicon, Matcher};
use phenotrace_core::stats::{
    bh_adjust, bh_adjust_log10, daily_rows, daily_table, enrichment_rows, enrichment_table, fisher_exact_two_sided,
    format_ratio, log10_normal_two_tailed, pair_rows, RatioUndefined,
};
use phenotrace_core::synth::{calibrate_from_daily_table, Generator, SynthConfig, SynthCorpus};
use phenotrace_core::text::{DayRange, PcrResult, Roster};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

const N_POS: u64 = 635;
const N_NEG: u64 = 29859;
const ANOSMIA: &str = "Altered or diminished sense of taste or smell";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = fn() -> Outcome;

fn main() {
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "enrichment reproduction", c1_enrichment),
        (2, "timeline reproduction", c2_timeline),
        (3, "pairwise reproduction and BH oracle", c3_pairwise),
        (4, "Fisher exhaustive oracle, margins <= 40", c4_fisher),
        (5, "extreme-tail z against high-precision oracle", c5_tail),
        (6, "lexicon exhaustiveness and brute-force matcher oracle", c6_lexicon),
        (7, "synth -> curate -> timeline round trip", c7_round_trip),
        (8, "classifier evaluation", c8_eval),
        (9, "curation throughput and worker determinism", c9_throughput),
        (10, "co-expression filters, cp10k and properties", c10_coexpr),
    ];
    let (mut passed, mut failed) = (0, 0);
    for (n, title, f) in criteria {
        if only.as_deref().is_some_and(|o| o != n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if result.pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {} {title}: {} [{:.2?}]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}

fn expected(name: &str) -> Vec<csv::StringRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    let mut rdr = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    rdr.records().map(|r| r.unwrap()).collect()
}

fn log10_of(s: &str) -> f64 {
    s.trim().parse::<f64>().unwrap_or_else(|_| panic!("bad p-value `{s}`")).log10()
}

fn c1_enrichment() -> Outcome {
    let start = Instant::now();
    let counts = io::parse_group_counts(phenotrace::data::ENRICHMENT_COUNTS, "enrichment counts").unwrap();
    let rows = enrichment_rows(&counts).unwrap();
    let elapsed = start.elapsed();

    let exp = expected("enrichment_expected.csv");
    let (mut max_dr, mut max_dp) = (0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for e in &exp {
        let Some(row) = rows.iter().find(|r| r.group_id == e[0]) else {
            bad.push(format!("{} missing", &e[0]));
            continue;
        };
        let dr = (row.ratio.unwrap_or(f64::NAN) - e[1].parse::<f64>().unwrap()).abs();
        let dp = (row.p_value.log10() - log10_of(&e[2])).abs();
        max_dr = max_dr.max(dr);
        max_dp = max_dp.max(dp);
        if !(dr <= 0.01 && dp <= 0.31) {
            bad.push(format!("{}: ratio {:?} p {}", &e[0], row.ratio, row.p_value.to_sci()));
        }
    }
    let spot = |g: &str| {
        rows.iter()
            .find(|r| r.group_id == g)
            .map(|r| (format_ratio(r.ratio, RatioUndefined::Dash), r.p_value.to_sci()))
    };
    let spots_ok = spot(ANOSMIA) == Some(("37.44".into(), "2.95E-187".into()))
        && spot("Fever / chills") == Some(("2.13".into(), "1.29E-36".into()));
    let pass = rows.len() == 26 && exp.len() == 26 && bad.is_empty() && spots_ok && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "{}/{} rows within tolerance, max |dratio| {max_dr:.4}, max |dlog10 p| {max_dp:.4}, spot rows {}, {elapsed:.2?}{}",
            exp.len() - bad.len(),
            exp.len(),
            if spots_ok { "ok" } else { "WRONG" },
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join("; ")) }
        ),
    )
}

fn c2_timeline() -> Outcome {
    let records = io::parse_percentages(phenotrace::data::TIMELINE_PERCENTAGES, "timeline percentages").unwrap();
    let counts = io::daily_counts_from_percentages(&records, N_POS, N_NEG).unwrap();
    let rows = daily_rows(&counts).unwrap();
    let exp = expected("timeline_expected.csv");
    let p_tol = 3f64.log10();
    let mut bad = Vec::new();
    for e in &exp {
        let day: i64 = e[1].parse().unwrap();
        let Some(row) = rows.iter().find(|r| r.group_id == e[0] && r.day == day) else {
            bad.push(format!("{} {day} missing", &e[0]));
            continue;
        };
        let ratio_ok = match (&e[2], row.ratio) {
            ("-", None) => true,
            ("-", Some(_)) | (_, None) => false,
            (printed, Some(r)) => (r - printed.parse::<f64>().unwrap()).abs() <= 0.05,
        };
        let p_ok = (row.p_value.log10() - log10_of(&e[3])).abs() <= p_tol;
        if !(ratio_ok && p_ok) {
            bad.push(format!(
                "{} day {day} (k {}/{}): ratio {} vs {}, p {} vs {}",
                &e[0],
                row.k_pos,
                row.k_neg,
                format_ratio(row.ratio, RatioUndefined::Dash),
                &e[2],
                row.p_value.to_sci(),
                &e[3]
            ));
        }
    }
    let spot = |g: &str, d: i64| {
        rows.iter()
            .find(|r| r.group_id == g && r.day == d)
            .map(|r| (format_ratio(r.ratio, RatioUndefined::Dash), r.p_value.to_sci()))
    };
    // Spot rows are held to the same tolerance as every other cell; only the
    // undefined ratio has to print exactly.
    let near = |g: &str, d: i64, ratio: f64, p: &str| {
        rows.iter().find(|r| r.group_id == g && r.day == d).is_some_and(|r| {
            r.ratio.is_some_and(|x| (x - ratio).abs() <= 0.05) && (r.p_value.log10() - log10_of(p)).abs() <= p_tol
        })
    };
    let spots_ok = near("Cough", -7, 3.94, "1.40E-09")
        && near("Fever / chills", -6, 5.14, "7.33E-15")
        && spot(ANOSMIA, -6).is_some_and(|(r, _)| r == "-");
    let spot_text = [("Cough", -7), ("Fever / chills", -6), (ANOSMIA, -6)]
        .iter()
        .filter_map(|&(g, d)| spot(g, d).map(|(r, p)| format!("{} {d} {r}/{p}", g.split_whitespace().next().unwrap())))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        bad.is_empty() && spots_ok && exp.len() == rows.len(),
        format!(
            "{}/{} cells within tolerance, spot rows {} ({spot_text}){}",
            exp.len() - bad.len(),
            exp.len(),
            if spots_ok { "ok" } else { "WRONG" },
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join("; ")) }
        ),
    )
}

/// Step-up BH written directly from its definition: the adjusted value of
/// `p_i` is the smallest `m * p_j / rank_j` over every `p_j >= p_i`, where
/// `rank_j` counts the p-values not exceeding `p_j`, capped at 1.
fn bh_brute_force(p: &[f64], m: usize) -> Vec<f64> {
    p.iter()
        .map(|&pi| {
            p.iter()
                .filter(|&&pj| pj >= pi)
                .map(|&pj| {
                    let rank = p.iter().filter(|&&pl| pl <= pj).count();
                    m as f64 * pj / rank as f64
                })
                .fold(1.0f64, f64::min)
        })
        .collect()
}

fn c3_pairwise() -> Outcome {
    let counts = io::parse_pair_counts(phenotrace::data::PAIRWISE_COUNTS, "pairwise counts").unwrap();
    let rows = pair_rows(&counts, Some(277)).unwrap();
    let exp = expected("pairwise_expected.csv");
    let mut bad = Vec::new();
    let mut max_raw = 0.0f64;
    for e in &exp {
        let Some(row) = rows.iter().find(|r| r.group_a == e[0] && r.group_b == e[1]) else {
            bad.push(format!("{}+{} missing", &e[0], &e[1]));
            continue;
        };
        let d = (row.p_raw.log10() - log10_of(&e[5])).abs();
        max_raw = max_raw.max(d);
        if d > 2f64.log10() {
            bad.push(format!("{}+{}: raw p {} vs {}", &e[0], &e[1], row.p_raw.to_sci(), &e[5]));
        }
    }
    let mut by_p: Vec<&csv::StringRecord> = exp.iter().collect();
    by_p.sort_by(|a, b| log10_of(&a[5]).total_cmp(&log10_of(&b[5])));
    let mut max_adj = 0.0f64;
    for e in by_p.iter().take(5) {
        if let Some(row) = rows.iter().find(|r| r.group_a == e[0] && r.group_b == e[1]) {
            let rel = (10f64.powf(row.p_adjusted.log10() - log10_of(&e[6])) - 1.0).abs();
            max_adj = max_adj.max(rel);
            if rel > 0.02 {
                bad.push(format!("{}+{}: BH {} vs {}", &e[0], &e[1], row.p_adjusted.to_sci(), &e[6]));
            }
        }
    }
    let spot = rows.iter().find(|r| r.group_a == "Diarrhea" && r.group_b == "Cough").map(|r| r.p_raw.to_sci());
    let spot_ok = spot.as_deref() == Some("1.89E-18");

    let mut rng = StdRng::seed_from_u64(20200301);
    let (mut exact, mut log_ok) = (0usize, 0usize);
    for _ in 0..1000 {
        let n = rng.random_range(1..=60);
        let mut p: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { 10f64.powf(-rng.random_range(0.0..30.0)) } else { rng.random_range(1e-6..=1.0) })
            .collect();
        for _ in 0..rng.random_range(0..=n / 3) {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            p[i] = p[j];
        }
        let m = n + rng.random_range(0..=n);
        let want = bh_brute_force(&p, m);
        if bh_adjust(&p, m).unwrap() == want {
            exact += 1;
        }
        let logs: Vec<f64> = p.iter().map(|x| x.log10()).collect();
        let got = bh_adjust_log10(&logs, m).unwrap();
        if got.iter().zip(&want).all(|(g, w)| (10f64.powf(*g) / w - 1.0).abs() < 1e-12) {
            log_ok += 1;
        }
    }
    outcome(
        bad.is_empty() && spot_ok && exp.len() == 19 && exact == 1000 && log_ok == 1000,
        format!(
            "{}/19 raw p within x2 (max |dlog10| {max_raw:.3}), top-5 BH max rel err {:.2}% at m=277, spot {}, BH oracle {exact}/1000 exact, log-space {log_ok}/1000{}",
            exp.len() - bad.len(),
            100.0 * max_adj,
            spot.unwrap_or_default(),
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join("; ")) }
        ),
    )
}

fn c4_fisher() -> Outcome {
    const MAX: usize = 40;
    let mut binom = vec![vec![0u128; 2 * MAX + 1]; 2 * MAX + 1];
    for n in 0..=2 * MAX {
        binom[n][0] = 1;
        for k in 1..=n {
            binom[n][k] = binom[n - 1][k - 1] + if k < n { binom[n - 1][k] } else { 0 };
        }
    }
    let start = Instant::now();
    let (mut tables, mut worst, mut failures) = (0u64, 0.0f64, Vec::new());
    for r1 in 0..=MAX {
        for r2 in 0..=MAX {
            let n = r1 + r2;
            if n == 0 {
                continue;
            }
            for c1 in n.saturating_sub(MAX)..=n.min(MAX) {
                let lo = c1.saturating_sub(r2);
                let hi = r1.min(c1);
                let weights: Vec<u128> = (lo..=hi).map(|x| binom[r1][x] * binom[r2][c1 - x]).collect();
                let total = binom[n][c1];
                for a in lo..=hi {
                    let w = weights[a - lo];
                    let tail: u128 = weights.iter().filter(|&&v| v <= w).sum();
                    let oracle = tail as f64 / total as f64;
                    let (b, c) = (r1 - a, c1 - a);
                    let d = r2 - c;
                    let got = fisher_exact_two_sided(a as u64, b as u64, c as u64, d as u64).unwrap().value();
                    let rel = (got - oracle).abs() / oracle;
                    tables += 1;
                    worst = worst.max(rel);
                    if (rel.is_nan() || rel >= 1e-10) && failures.len() < 5 {
                        failures.push(format!("({a},{b},{c},{d}) {got:e} vs {oracle:e}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{tables} tables, max relative error {worst:.2e}, {elapsed:.2?}{}",
            if failures.is_empty() { String::new() } else { format!("; e.g. {}", failures.join("; ")) }
        ),
    )
}

fn c5_tail() -> Outcome {
    #[allow(clippy::excessive_precision)]
    // log10(erfc(z / sqrt 2)), evaluated with 50-digit arithmetic and frozen here.
    const ORACLE: [(f64, f64); 6] = [
        (1.0, -0.49851554582798930482),
        (5.0, -6.2416156767266733011),
        (10.0, -22.817023409822094699),
        (20.0, -88.259065347411610725),
        (29.19, -186.58543349933349276),
        (35.0, -267.64785195408898969),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut pass = true;
    for (z, want) in ORACLE {
        let got = log10_normal_two_tailed(z);
        let rel = ((got - want) / want).abs();
        worst = worst.max(rel);
        pass &= got.is_finite() && got < 0.0 && rel < 5e-4;
        parts.push(format!("z={z}: {got:.4}"));
    }
    outcome(pass, format!("max relative error {worst:.1e}; {}", parts.join(", ")))
}

struct OraclePattern {
    term: String,
    spelling: Option<String>,
}

fn word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

fn short_caps(spelling: &str) -> bool {
    let base = spelling.strip_suffix("'s").unwrap_or(spelling);
    (1..=3).contains(&base.chars().count()) && base.chars().all(|c| c.is_ascii_uppercase())
}

fn trimmed(term: &str) -> &str {
    term.trim_matches(|c: char| !c.is_alphanumeric())
}

fn oracle_patterns(lex: &Lexicon) -> Vec<OraclePattern> {
    let mut spellings: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for g in lex.groups() {
        for t in &g.terms {
            spellings.entry(normalize_term(t)).or_default().push(trimmed(t));
        }
    }
    spellings
        .into_iter()
        .map(|(term, s)| {
            let spelling = s.iter().all(|x| short_caps(x)).then(|| s[0].to_string());
            OraclePattern { term, spelling }
        })
        .collect()
}

fn match_at(chars: &[(usize, char)], mut j: usize, term: &str) -> Option<usize> {
    for tc in term.chars() {
        if tc == ' ' {
            if !chars.get(j).is_some_and(|c| c.1.is_whitespace()) {
                return None;
            }
            while chars.get(j).is_some_and(|c| c.1.is_whitespace()) {
                j += 1;
            }
        } else {
            let &(_, oc) = chars.get(j)?;
            if oc.is_whitespace() || oc.to_ascii_lowercase() != tc {
                return None;
            }
            j += 1;
        }
    }
    Some(j)
}

/// Every boundary-aligned occurrence of every pattern, minus the ones lying
/// strictly inside another occurrence.
fn brute_force_mentions(sentence: &str, patterns: &[OraclePattern]) -> BTreeSet<(usize, usize, String)> {
    let chars: Vec<(usize, char)> = sentence.char_indices().collect();
    let mut found = Vec::new();
    for p in patterns {
        for si in 0..chars.len() {
            let Some(ei) = match_at(&chars, si, &p.term) else { continue };
            if si > 0 && word_char(chars[si - 1].1) || chars.get(ei).is_some_and(|c| word_char(c.1)) {
                continue;
            }
            let (start, end) = (chars[si].0, chars.get(ei).map_or(sentence.len(), |c| c.0));
            if p.spelling.as_deref().is_some_and(|s| s != &sentence[start..end]) {
                continue;
            }
            found.push((start, end, p.term.clone()));
        }
    }
    found
        .iter()
        .filter(|c| !found.iter().any(|o| o != *c && o.0 <= c.0 && c.1 <= o.1))
        .cloned()
        .collect()
}

fn random_sentence(rng: &mut StdRng, terms: &[&str]) -> String {
    const FILLER: [&str; 22] = [
        "pt", "reports", "denies", "no", "with", "and", "mild", "the", "since", "yesterday", "x3", "days", "(", ")",
        "w/", "h/o", "café", "naïve", "feels", "was", "noted", "–",
    ];
    const JOIN: [&str; 12] = [" ", " ", " ", " ", "  ", ", ", ". ", "-", "/", "", "'", "\t"];
    let mut s = String::new();
    for i in 0..rng.random_range(1..=8) {
        if i > 0 {
            s.push_str(JOIN[rng.random_range(0..JOIN.len())]);
        }
        if rng.random_bool(0.5) {
            s.push_str(FILLER[rng.random_range(0..FILLER.len())]);
            continue;
        }
        let t = terms[rng.random_range(0..terms.len())];
        let mut t = match rng.random_range(0..5) {
            0 => t.to_uppercase(),
            1 => t.to_lowercase(),
            2 => {
                let mut c = t.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
            }
            _ => t.to_string(),
        };
        if rng.random_bool(0.2) {
            t = t.replace(' ', ["  ", "\t", " \n "][rng.random_range(0..3)]);
        }
        s.push_str(&t);
    }
    s
}

fn c6_lexicon() -> Outcome {
    let lex = io::load_lexicon(None).unwrap();
    let matcher = Matcher::new(&lex).unwrap();
    let mut checked = 0;
    let mut cross_listed = BTreeSet::new();
    let mut bad = Vec::new();
    for g in lex.groups() {
        for t in &g.terms {
            let core = trimmed(t);
            let sentence = format!("Pt with {t} since yesterday.");
            let start = "Pt with ".len() + t.find(core).unwrap();
            let want: BTreeSet<&str> =
                lex.groups_for(&normalize_term(t)).unwrap().iter().map(String::as_str).collect();
            if want.len() > 1 {
                cross_listed.insert(normalize_term(t));
            }
            let got = matcher.find_mentions(&sentence);
            let ok = got.len() == 1
                && got[0].span == (start..start + core.len())
                && got[0].group_ids.iter().map(String::as_str).collect::<BTreeSet<_>>() == want;
            checked += 1;
            if !ok {
                bad.push(format!("`{t}`"));
            }
        }
    }

    let patterns = oracle_patterns(&lex);
    let terms: Vec<&str> = lex.groups().iter().flat_map(|g| g.terms.iter().map(String::as_str)).collect();
    let mut rng = StdRng::seed_from_u64(7);
    let mut disagree = Vec::new();
    let mut mentions = 0;
    for _ in 0..10_000 {
        let s = random_sentence(&mut rng, &terms);
        let want = brute_force_mentions(&s, &patterns);
        let got_mentions = matcher.find_mentions(&s);
        let groups_ok = got_mentions
            .iter()
            .all(|m| lex.groups_for(m.term).is_some_and(|g| g.iter().eq(m.group_ids.iter())));
        let got: BTreeSet<(usize, usize, String)> =
            got_mentions.iter().map(|m| (m.span.start, m.span.end, m.term.to_string())).collect();
        mentions += want.len();
        if got != want || !groups_ok {
            if disagree.len() < 3 {
                disagree.push(format!("{s:?}"));
            } else {
                disagree.push(String::new());
            }
        }
    }
    outcome(
        bad.is_empty() && disagree.is_empty(),
        format!(
            "{}/{checked} terms matched in carrier sentences ({} cross-listed terms); brute-force agreement on {}/10000 sentences ({mentions} mentions){}{}",
            checked - bad.len(),
            cross_listed.len(),
            10_000 - disagree.len(),
            if bad.is_empty() { String::new() } else { format!("; missed: {}", bad.join(", ")) },
            if disagree.is_empty() {
                String::new()
            } else {
                format!("; e.g. {}", disagree.iter().filter(|d| !d.is_empty()).cloned().collect::<Vec<_>>().join(" | "))
            }
        ),
    )
}

fn generate(config: &SynthConfig, lex: &Lexicon) -> SynthCorpus {
    let g = Generator::new(config, lex).unwrap();
    let drafts = (0..g.n_patients()).into_par_iter().map(|i| g.patient(i)).collect();
    g.assemble(drafts)
}

fn roster_of(corpus: &SynthCorpus) -> Roster {
    corpus.patients.iter().cloned().collect()
}

fn c7_round_trip() -> Outcome {
    let start = Instant::now();
    let lex = io::load_lexicon(None).unwrap();
    let records = io::parse_percentages(phenotrace::data::TIMELINE_PERCENTAGES, "timeline").unwrap();
    let config = calibrate_from_daily_table(&records, N_POS as usize, N_NEG as usize).unwrap();
    let corpus = generate(&config, &lex);
    let roster = roster_of(&corpus);
    let out =
        pipeline::curate(&corpus.notes, &roster, &lex, &RuleClassifier::default(), &CurateOptions::default()).unwrap();
    let window = DayRange::new(-7, -1).unwrap();
    let timeline = daily_table(&out.table, window).unwrap();

    let (mut checked, mut outside, mut worst) = (0, Vec::new(), 0.0f64);
    for ((g, arm, day), &p) in &config.day_probs {
        let n = config.cohort_size(*arm) as f64;
        if n * p < 1.0 {
            continue;
        }
        let Some(row) = timeline.iter().find(|r| &r.group_id == g && r.day == *day) else {
            outside.push(format!("{g} {day} missing"));
            continue;
        };
        let k = match arm {
            PcrResult::Positive => row.k_pos,
            PcrResult::Negative => row.k_neg,
        } as f64;
        let z = (k - n * p) / (n * p * (1.0 - p)).sqrt();
        checked += 1;
        worst = worst.max(z.abs());
        if z.abs() > 3.0 {
            outside.push(format!("{g} {arm} day {day}: {k} vs {:.1} (z {z:.2})", n * p));
        }
    }
    let enrich = enrichment_table(&out.table, window).unwrap();
    let anosmia = enrich.iter().find(|r| r.group_id == ANOSMIA).and_then(|r| r.ratio);
    let elapsed = start.elapsed();
    outcome(
        outside.is_empty() && anosmia.is_some_and(|r| r > 10.0) && elapsed < Duration::from_secs(300),
        format!(
            "{} notes; {}/{checked} cells within 3 sd (max |z| {worst:.2}); anosmia window ratio {}; {elapsed:.2?}{}",
            corpus.notes.len(),
            checked - outside.len(),
            anosmia.map_or("-".into(), |r| format!("{r:.2}")),
            if outside.is_empty() { String::new() } else { format!("; outside: {}", outside.join("; ")) }
        ),
    )
}

fn c8_eval() -> Outcome {
    use AssertionLabel::*;
    // Hand-tabulated: 5 YES (4 right, 1 called NO), 3 NO (2 right, 1 called
    // YES), 2 MAYBE (1 right, 1 called YES).
    let gold = [Yes, Yes, Yes, Yes, Yes, No, No, No, Maybe, Maybe];
    let pred = [Yes, Yes, Yes, Yes, No, No, No, Yes, Maybe, Yes];
    let m = evaluate(&gold, &pred).unwrap();
    let mut fixture_ok = m.n_total == 10
        && m.accuracy == 0.7
        && m.confusion == [[4, 1, 0, 0], [1, 2, 0, 0], [1, 0, 1, 0], [0, 0, 0, 0]]
        && m.tpr == 0.8
        && m.fnr == 0.2
        && (m.fpr - 2.0 / 5.0).abs() < 1e-15
        && !m.per_label.contains_key(&Other);
    let expect = [(Yes, 4.0 / 6.0, 0.8, 8.0 / 11.0, 5), (No, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 3), (Maybe, 1.0, 0.5, 2.0 / 3.0, 2)];
    for (label, p, r, f1, support) in expect {
        let l = m.per_label[&label];
        fixture_ok &= (l.precision - p).abs() < 1e-12
            && (l.recall - r).abs() < 1e-12
            && (l.f1 - f1).abs() < 1e-12
            && l.support == support;
    }
    // A second fixture with an OTHER column and a label never predicted.
    let m2 = evaluate(&[Other, Other, Maybe, No], &[Other, No, No, No]).unwrap();
    fixture_ok &= m2.accuracy == 0.5
        && m2.per_label[&Maybe].precision == 0.0
        && m2.per_label[&Maybe].f1 == 0.0
        && m2.per_label[&No].precision == 1.0 / 3.0
        && m2.per_label[&Other].recall == 0.5
        && m2.tpr == 0.0
        && m2.fpr == 0.0;

    let lex = io::load_lexicon(None).unwrap();
    let records = io::parse_percentages(phenotrace::data::TIMELINE_PERCENTAGES, "timeline").unwrap();
    let config = calibrate_from_daily_table(&records, N_POS as usize, 5000).unwrap();
    let corpus = generate(&config, &lex);
    let out = pipeline::curate(&corpus.notes, &roster_of(&corpus), &lex, &RuleClassifier::default(), &CurateOptions::default())
        .unwrap();
    let by_key: BTreeMap<(&str, usize), &LabelRow> =
        out.predictions.iter().map(|p| ((p.sentence_id.as_str(), p.mention_index), p)).collect();
    let mut missing = 0;
    let (g, p): (Vec<_>, Vec<_>) = corpus
        .gold
        .iter()
        .map(|gl| {
            let predicted = by_key.get(&(gl.sentence_id.as_str(), gl.mention_index)).map(|p| p.label);
            missing += usize::from(predicted.is_none());
            // a missing prediction is scored as a wrong one
            let wrong = if gl.label == Other { Yes } else { Other };
            (gl.label, predicted.unwrap_or(wrong))
        })
        .unzip();
    let metrics = evaluate(&g, &p).unwrap();
    outcome(
        fixture_ok && metrics.accuracy >= 0.95,
        format!(
            "hand-computed fixtures {}; rule classifier accuracy {:.4} on {} synthetic gold mentions ({} unmatched)",
            if fixture_ok { "match" } else { "DIFFER" },
            metrics.accuracy,
            metrics.n_total,
            missing
        ),
    )
}

fn presence_bytes(table: &phenotrace_core::cohort::SymptomPresenceTable) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("presence.csv");
    io::write_presence(&path, table).unwrap();
    std::fs::read(path).unwrap()
}

fn c9_throughput() -> Outcome {
    let lex = io::load_lexicon(None).unwrap();
    let mut config = SynthConfig::new(1200, 4000, 42);
    for g in lex.group_ids() {
        for arm in [PcrResult::Positive, PcrResult::Negative] {
            for day in -14..=14 {
                config.day_probs.insert((g.to_string(), arm, day), 0.05);
            }
        }
    }
    let corpus = generate(&config, &lex);
    let roster = roster_of(&corpus);
    let rules = RuleClassifier::default();
    let opts = CurateOptions::default();

    let timed = |workers: usize| {
        let pool = pipeline::thread_pool(workers).unwrap();
        let start = Instant::now();
        let out = pool.install(|| pipeline::curate(&corpus.notes, &roster, &lex, &rules, &opts)).unwrap();
        (start.elapsed(), presence_bytes(&out.table))
    };
    let (t1, bytes1) = timed(1);
    let cpus = pipeline::default_workers();
    let many = cpus.max(4);
    let (tn, bytesn) = timed(many);
    let identical = bytes1 == bytesn;
    let rate = corpus.notes.len() as f64 / t1.as_secs_f64();
    let scaling = if cpus >= 2 {
        format!("speedup x{:.2} on {cpus} cpus", t1.as_secs_f64() / tn.as_secs_f64())
    } else {
        "speedup not measurable on a single cpu".to_string()
    };
    let scales = cpus < 2 || tn < t1;
    outcome(
        corpus.notes.len() >= 100_000 && t1 < Duration::from_secs(60) && identical && scales,
        format!(
            "{} notes in {t1:.2?} on 1 worker ({rate:.0} notes/s); {many} workers {tn:.2?}, {scaling}; presence tables {}",
            corpus.notes.len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn cell(i: usize, tissue: &str, cell_type: &str) -> CellAnnotation {
    CellAnnotation { cell_id: format!("c{i}"), tissue: tissue.into(), cell_type: cell_type.into() }
}

fn genes() -> Vec<String> {
    vec!["ACE2".into(), "TMPRSS2".into(), "GAPDH".into()]
}

/// `n` cells, the first `both` of which express both genes.
fn population(n: usize, both: usize) -> ExpressionMatrix {
    let cells = (0..n).map(|i| cell(i, "lung", "AT2")).collect();
    let mut entries = Vec::new();
    for i in 0..n {
        entries.push((i, 2, 100));
        if i < both {
            entries.push((i, 0, 1));
            entries.push((i, 1, 2));
        }
    }
    ExpressionMatrix::new(cells, genes(), entries).unwrap()
}

fn summarize(m: &ExpressionMatrix) -> phenotrace_core::coexpr::CoexprReport {
    coexpression_summary(m, &CoexprParams::new("ACE2", "TMPRSS2")).unwrap()
}

fn c10_coexpr() -> Outcome {
    let passes = |n, both| summarize(&population(n, both)).populations[0].passes_filter;
    let filters_ok = !passes(99, 99) && passes(100, 1) && !passes(100, 0) && !passes(1000, 9) && passes(1000, 10);

    let e = std::f64::consts::E;
    let cp_ok = (normalize_cp10k(3, 2000, e).unwrap() - 16f64.ln()).abs() < 1e-12
        && (normalize_cp10k(3, 2000, 10.0).unwrap() - 16f64.log10()).abs() < 1e-12
        && normalize_cp10k(0, 5, e).unwrap() == 0.0
        && normalize_cp10k(1, 0, e).is_err();
    let one = ExpressionMatrix::new(vec![cell(0, "nose", "goblet")], genes(), vec![(0, 0, 3), (0, 2, 1997)]).unwrap();
    let s = &summarize(&one).populations[0];
    let summary_ok = (s.mean_a - 16f64.ln()).abs() < 1e-12 && s.mean_b == 0.0 && s.frac_coexpress == 0.0;

    let strategy = (1usize..25).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::collection::vec(0u64..40, 3), n),
            proptest::collection::vec(0usize..3, n),
            1u64..7,
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    });
    let build = |rows: &[Vec<u64>], types: &[usize], scale: u64, order: &[usize]| {
        let cells = order.iter().map(|&i| cell(i, "lung", ["AT1", "AT2", "club"][types[i]])).collect();
        let entries = order
            .iter()
            .enumerate()
            .flat_map(|(new, &old)| rows[old].iter().enumerate().map(move |(g, &c)| (new, g, c * scale)))
            .collect::<Vec<_>>();
        ExpressionMatrix::new(cells, genes(), entries).unwrap()
    };
    let mut runner = TestRunner::new(Config { cases: 512, failure_persistence: None, ..Config::default() });
    let props = runner.run(&strategy, |(rows, types, scale, order)| {
        let identity: Vec<usize> = (0..rows.len()).collect();
        let base = summarize(&build(&rows, &types, 1, &identity));
        let scaled = summarize(&build(&rows, &types, scale, &identity));
        prop_assert_eq!(base.populations.len(), scaled.populations.len());
        for (a, b) in base.populations.iter().zip(&scaled.populations) {
            prop_assert!((a.mean_a - b.mean_a).abs() < 1e-9 && (a.mean_b - b.mean_b).abs() < 1e-9);
            prop_assert_eq!(a.frac_coexpress, b.frac_coexpress);
        }
        let permuted = summarize(&build(&rows, &types, 1, &order));
        prop_assert_eq!(&base.populations, &permuted.populations);
        let (mut d1, mut d2) = (base.dropped_cells.clone(), permuted.dropped_cells.clone());
        d1.sort();
        d2.sort();
        prop_assert_eq!(d1, d2);
        Ok(())
    });
    outcome(
        filters_ok && cp_ok && summary_ok && props.is_ok(),
        format!(
            "population filters {}, cp10k formula {}, summary means {}, scale/permutation properties {}",
            if filters_ok { "ok" } else { "WRONG" },
            if cp_ok { "ok" } else { "WRONG" },
            if summary_ok { "ok" } else { "WRONG" },
            match &props {
                Ok(()) => "hold on 512 cases".to_string(),
                Err(e) => format!("FAIL: {e}"),
            }
        ),
    )
}
