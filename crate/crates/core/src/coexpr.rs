//! Per-population co-expression of two genes in single-cell count data.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoexprError {
    #[error("unknown gene symbol {0:?}")]
    UnknownGene(String),
    #[error("cell index {index} out of range ({n_cells} cells)")]
    CellIndex { index: usize, n_cells: usize },
    #[error("gene index {index} out of range ({n_genes} genes)")]
    GeneIndex { index: usize, n_genes: usize },
    #[error("cell total is zero")]
    ZeroTotal,
    #[error("{0}")]
    Parameter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAnnotation {
    pub cell_id: String,
    pub tissue: String,
    pub cell_type: String,
}

/// Sparse cells x genes count matrix. Each row is sorted by gene index with
/// duplicate entries summed and zeros removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    cells: Vec<CellAnnotation>,
    genes: Vec<String>,
    rows: Vec<Vec<(usize, u64)>>,
    cell_totals: Vec<u64>,
}

impl ExpressionMatrix {
    pub fn new<I>(cells: Vec<CellAnnotation>, genes: Vec<String>, entries: I) -> Result<Self, CoexprError>
    where
        I: IntoIterator<Item = (usize, usize, u64)>,
    {
        let (n_cells, n_genes) = (cells.len(), genes.len());
        let mut maps: Vec<BTreeMap<usize, u64>> = (0..n_cells).map(|_| BTreeMap::new()).collect();
        for (cell, gene, count) in entries {
            if cell >= n_cells {
                return Err(CoexprError::CellIndex { index: cell, n_cells });
            }
            if gene >= n_genes {
                return Err(CoexprError::GeneIndex { index: gene, n_genes });
            }
            if count > 0 {
                *maps[cell].entry(gene).or_insert(0) += count;
            }
        }
        let rows: Vec<Vec<(usize, u64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let cell_totals = rows.iter().map(|r| r.iter().map(|(_, c)| c).sum()).collect();
        Ok(Self { cells, genes, rows, cell_totals })
    }

    pub fn cells(&self) -> &[CellAnnotation] {
        &self.cells
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn cell_totals(&self) -> &[u64] {
        &self.cell_totals
    }

    pub fn gene_index(&self, symbol: &str) -> Result<usize, CoexprError> {
        self.genes
            .iter()
            .position(|g| g == symbol)
            .ok_or_else(|| CoexprError::UnknownGene(symbol.into()))
    }

    /// Raw count of `gene` in `cell`.
    pub fn count(&self, cell: usize, gene: usize) -> u64 {
        let row = &self.rows[cell];
        row.binary_search_by_key(&gene, |(g, _)| *g).map_or(0, |i| row[i].1)
    }

    pub fn row(&self, cell: usize) -> &[(usize, u64)] {
        &self.rows[cell]
    }
}

/// `log_base(count / total * 10000 + 1)`; natural log when `log_base` is e.
pub fn normalize_cp10k(count: u64, cell_total: u64, log_base: f64) -> Result<f64, CoexprError> {
    if cell_total == 0 {
        return Err(CoexprError::ZeroTotal);
    }
    let v = libm::log1p(count as f64 / cell_total as f64 * 10_000.0);
    Ok(if log_base == core::f64::consts::E { v } else { v / libm::log(log_base) })
}

/// Normalizes a dense count row against its own sum.
pub fn normalize_row(counts: &[u64], log_base: f64) -> Result<Vec<f64>, CoexprError> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| normalize_cp10k(c, total, log_base)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoexprParams {
    pub gene_a: String,
    pub gene_b: String,
    pub min_cells: usize,
    pub min_frac: f64,
    pub log_base: f64,
}

impl CoexprParams {
    pub fn new(gene_a: impl Into<String>, gene_b: impl Into<String>) -> Self {
        Self {
            gene_a: gene_a.into(),
            gene_b: gene_b.into(),
            min_cells: 100,
            min_frac: 0.01,
            log_base: core::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub tissue: String,
    pub cell_type: String,
    pub n_cells: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub frac_coexpress: f64,
    pub passes_filter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoexprReport {
    /// Ordered by `(tissue, cell_type)`.
    pub populations: Vec<PopulationSummary>,
    /// Cells with a zero total, excluded from every population.
    pub dropped_cells: Vec<String>,
}

// Summing sorted values keeps the mean independent of cell order.
fn ordered_mean(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn coexpression_summary(matrix: &ExpressionMatrix, params: &CoexprParams) -> Result<CoexprReport, CoexprError> {
    if params.min_cells < 1 {
        return Err(CoexprError::Parameter("min_cells must be at least 1"));
    }
    if !(0.0..=1.0).contains(&params.min_frac) {
        return Err(CoexprError::Parameter("min_frac must lie in [0, 1]"));
    }
    if !(params.log_base > 0.0 && params.log_base != 1.0) {
        return Err(CoexprError::Parameter("log base must be positive and not 1"));
    }
    let ga = matrix.gene_index(&params.gene_a)?;
    let gb = matrix.gene_index(&params.gene_b)?;

    #[derive(Default)]
    struct Acc {
        a: Vec<f64>,
        b: Vec<f64>,
        both: usize,
    }
    let mut pops: BTreeMap<(&str, &str), Acc> = BTreeMap::new();
    let mut dropped = Vec::new();
    for (i, cell) in matrix.cells.iter().enumerate() {
        let total = matrix.cell_totals[i];
        if total == 0 {
            dropped.push(cell.cell_id.clone());
            continue;
        }
        let (ca, cb) = (matrix.count(i, ga), matrix.count(i, gb));
        let acc = pops.entry((cell.tissue.as_str(), cell.cell_type.as_str())).or_default();
        acc.a.push(normalize_cp10k(ca, total, params.log_base)?);
        acc.b.push(normalize_cp10k(cb, total, params.log_base)?);
        if ca > 0 && cb > 0 {
            acc.both += 1;
        }
    }
    let populations = pops
        .into_iter()
        .map(|((tissue, cell_type), acc)| {
            let n_cells = acc.a.len();
            let frac_coexpress = acc.both as f64 / n_cells as f64;
            PopulationSummary {
                tissue: tissue.into(),
                cell_type: cell_type.into(),
                n_cells,
                mean_a: ordered_mean(acc.a),
                mean_b: ordered_mean(acc.b),
                frac_coexpress,
                passes_filter: n_cells >= params.min_cells && frac_coexpress >= params.min_frac,
            }
        })
        .collect();
    Ok(CoexprReport { populations, dropped_cells: dropped })
}
