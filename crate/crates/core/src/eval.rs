//! Retrieval scoring: average precision at a cutoff, mAP over a query set,
//! and method × code-length comparison reports.
//!
//! AP@k = Σ_{i≤k} P(i)·rel(i) / min(R, k), where R counts database items that
//! share the query's label. The cutoff truncates the ranking and caps the
//! normalizer.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{fit_itq, fit_lsh, fit_pca_rr, fit_sh, HasherKind};
use crate::error::{Error, Result};
use crate::hash_head::{train, TrainConfig};
use crate::index::{encode_dataset, search_topk, BinaryEncoder, PackedCodeSet};
use crate::ingest::{Dataset, VideoRecord};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// AP over the first `k` flags, normalized by `min(relevant_total, k)`; 0 when nothing is relevant.
pub fn average_precision(relevance: &[bool], k: usize, relevant_total: usize) -> f64 {
    let denom = relevant_total.min(k);
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / denom as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRanking {
    pub label: u32,
    /// Labels of retrieved items in rank order; `None` never counts as relevant.
    pub neighbor_labels: Vec<Option<u32>>,
    /// Database items sharing the query's label.
    pub relevant_total: usize,
}

impl QueryRanking {
    pub fn relevance(&self) -> Vec<bool> {
        self.neighbor_labels
            .iter()
            .map(|l| *l == Some(self.label))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalRun {
    pub k: usize,
    pub queries: Vec<QueryRanking>,
}

pub fn map_at_k(run: &RetrievalRun) -> Result<f64> {
    if run.queries.is_empty() {
        return Err(Error::Empty("retrieval run has no queries"));
    }
    if run.k == 0 {
        return Err(Error::invalid("cutoff k must be >= 1"));
    }
    let aps: Vec<f64> = run
        .queries
        .par_iter()
        .map(|q| average_precision(&q.relevance(), run.k, q.relevant_total))
        .collect();
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Searches every query against the database.
///
/// With `exclude_self`, a database item whose id equals the query's id is
/// dropped from its ranking and from its relevant count.
pub fn retrieval_run(
    db: &PackedCodeSet,
    queries: &PackedCodeSet,
    k: usize,
    exclude_self: bool,
) -> Result<RetrievalRun> {
    if db.bits() != queries.bits() {
        return Err(Error::DimensionMismatch {
            context: "query vs database code bits",
            expected: db.bits(),
            found: queries.bits(),
        });
    }
    let mut per_label = std::collections::HashMap::new();
    for i in 0..db.len() {
        if let Some(l) = db.label(i) {
            *per_label.entry(l).or_insert(0usize) += 1;
        }
    }
    let rankings: Result<Vec<QueryRanking>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let label = queries
                .label(q)
                .ok_or_else(|| Error::invalid(format!("query {} has no label", queries.id(q))))?;
            let fetch = if exclude_self { k + 1 } else { k };
            let hits = search_topk(db, queries.code(q), fetch)?;
            let mut relevant_total = per_label.get(&label).copied().unwrap_or(0);
            let mut neighbor_labels = Vec::with_capacity(k);
            for n in hits.neighbors {
                if exclude_self && n.id == queries.id(q) {
                    if n.label == Some(label) {
                        relevant_total -= 1;
                    }
                    continue;
                }
                if neighbor_labels.len() < k {
                    neighbor_labels.push(n.label);
                }
            }
            Ok(QueryRanking {
                label,
                neighbor_labels,
                relevant_total,
            })
        })
        .collect();
    Ok(RetrievalRun {
        k,
        queries: rankings?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// The trained hashing head.
    Ours,
    Baseline(HasherKind),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ours") || s.eq_ignore_ascii_case("head") {
            Ok(Method::Ours)
        } else {
            s.parse().map(Method::Baseline)
        }
    }
}

pub struct ComparisonData<'a> {
    pub database: &'a Dataset,
    pub queries: &'a Dataset,
    /// Frame-level features; `database_records` index into them.
    pub frames: &'a Matrix,
    pub database_records: &'a [VideoRecord],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonConfig {
    pub k: usize,
    pub seed: u64,
    /// Bits and seed are overridden per cell.
    pub train: TrainConfig,
    pub itq_iterations: usize,
    /// Measure wall time per cell. Off keeps reports byte-reproducible.
    pub record_timing: bool,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            k: 10,
            seed: 0,
            train: TrainConfig::default(),
            itq_iterations: 50,
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportCell {
    pub method: Method,
    pub bits: usize,
    /// mAP@k, or the error that stopped this cell.
    pub map: std::result::Result<f64, String>,
    pub queries: usize,
    pub k: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub methods: Vec<Method>,
    pub bits: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub database_size: usize,
    /// Method-major order.
    pub cells: Vec<ReportCell>,
}

impl ComparisonReport {
    pub fn cell(&self, method: Method, bits: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.bits == bits)
    }

    pub fn map(&self, method: Method, bits: usize) -> Option<f64> {
        self.cell(method, bits)
            .and_then(|c| c.map.as_ref().ok().copied())
    }

    /// `method,bits,map,queries,k,seconds`; failed cells carry `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,bits,map,queries,k,seconds\n");
        for c in &self.cells {
            let map = match &c.map {
                Ok(v) => format!("{v}"),
                Err(_) => "NaN".to_string(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                c.method, c.bits, map, c.queries, c.k, c.seconds
            )
            .unwrap();
        }
        out
    }

    /// Methods down, code lengths across, then any per-cell errors.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "mAP@{} over {} queries, database {} (seed {})",
            self.k,
            self.cells.first().map_or(0, |c| c.queries),
            self.database_size,
            self.seed
        )
        .unwrap();
        write!(out, "{:<8}", "method").unwrap();
        for b in &self.bits {
            write!(out, "{:>10}", format!("{b}bits")).unwrap();
        }
        out.push('\n');
        let mut errors = Vec::new();
        for &m in &self.methods {
            write!(out, "{:<8}", m.name()).unwrap();
            for &b in &self.bits {
                match self.cell(m, b).map(|c| &c.map) {
                    Some(Ok(v)) => write!(out, "{v:>10.4}").unwrap(),
                    Some(Err(e)) => {
                        write!(out, "{:>10}", "error").unwrap();
                        errors.push(format!("{m}@{b}: {e}"));
                    }
                    None => write!(out, "{:>10}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        for e in errors {
            writeln!(out, "! {e}").unwrap();
        }
        out
    }
}

fn run_cell(
    method: Method,
    bits: usize,
    data: &ComparisonData<'_>,
    cfg: &ComparisonConfig,
) -> Result<f64> {
    let x = &data.database.features;
    let mut rng = Rng::new(cfg.seed);
    let encoder: Box<dyn BinaryEncoder> = match method {
        Method::Ours => {
            let tc = TrainConfig {
                bits,
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            Box::new(train(data.database, data.frames, data.database_records, &tc)?.params)
        }
        Method::Baseline(HasherKind::Lsh) => Box::new(fit_lsh(x, bits, &mut rng)?),
        Method::Baseline(HasherKind::PcaRr) => Box::new(fit_pca_rr(x, bits, &mut rng)?.0),
        Method::Baseline(HasherKind::Itq) => {
            Box::new(fit_itq(x, bits, cfg.itq_iterations, &mut rng)?.0)
        }
        Method::Baseline(HasherKind::Sh) => Box::new(fit_sh(x, bits)?),
    };
    let db = encode_dataset(encoder.as_ref(), data.database)?;
    let queries = encode_dataset(encoder.as_ref(), data.queries)?;
    map_at_k(&retrieval_run(&db, &queries, cfg.k, false)?)
}

/// Fits or trains every method at every code length on the database split and
/// scores mAP@k for the queries. A failing cell records its error and the rest continue.
pub fn run_comparison(
    methods: &[Method],
    bit_lengths: &[usize],
    data: &ComparisonData<'_>,
    cfg: &ComparisonConfig,
) -> Result<ComparisonReport> {
    if methods.is_empty() || bit_lengths.is_empty() {
        return Err(Error::invalid(
            "comparison needs at least one method and one code length",
        ));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("cutoff k must be >= 1"));
    }
    if data.queries.is_empty() || data.database.is_empty() {
        return Err(Error::Empty("comparison database or query set"));
    }
    let mut cells = Vec::with_capacity(methods.len() * bit_lengths.len());
    for &method in methods {
        for &bits in bit_lengths {
            let start = Instant::now();
            let map = run_cell(method, bits, data, cfg).map_err(|e| e.to_string());
            let seconds = if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            cells.push(ReportCell {
                method,
                bits,
                map,
                queries: data.queries.len(),
                k: cfg.k,
                seconds,
            });
        }
    }
    Ok(ComparisonReport {
        methods: methods.to_vec(),
        bits: bit_lengths.to_vec(),
        k: cfg.k,
        seed: cfg.seed,
        database_size: data.database.len(),
        cells,
    })
}
