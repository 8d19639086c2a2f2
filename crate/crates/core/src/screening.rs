//! Candidate scoring, ranking, average precision and precision@k.
//!
//! Scores follow a single convention: higher means more likely to bind.
//! pTMEnergy (lower is better) is negated when a candidate is scored from
//! its logits; precomputed scores are taken as given.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{self, TmKernel};
use crate::tensor_io::{
    read_chain_map, read_npy, ChainMap, ChainMapError, NpyError, PaeLogits, ScreeningRow, ScreeningTable,
};

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreeningError {
    #[error("average precision needs at least one positive candidate")]
    NoPositives,
    #[error("average precision needs at least one negative candidate")]
    NoNegatives,
    #[error("k = {k} exceeds the {n} scored candidates")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    InvalidK,
    /// `io` separates unreadable inputs from invalid ones.
    #[error("candidate {id:?}: {message}")]
    Candidate { id: String, message: String, io: bool },
    #[error("candidate {0:?} has a non-finite score")]
    NonFiniteScore(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningMetric {
    PtmEnergy,
    Iptm,
    IptmMean,
}

impl ScreeningMetric {
    pub fn name(self) -> &'static str {
        match self {
            ScreeningMetric::PtmEnergy => "ptm_energy",
            ScreeningMetric::Iptm => "iptm",
            ScreeningMetric::IptmMean => "iptm_mean",
        }
    }

    /// Score with the higher-is-better convention.
    pub fn score(self, logits: &PaeLogits<f64>, chains: &ChainMap, kernel: &TmKernel<f64>) -> Result<f64, metrics::MetricsError> {
        Ok(match self {
            ScreeningMetric::PtmEnergy => -metrics::ptm_energy(logits, chains, kernel)?,
            ScreeningMetric::Iptm => metrics::iptm(logits, chains, kernel)?,
            ScreeningMetric::IptmMean => metrics::iptm_mean(logits, chains, kernel)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub candidate_id: String,
    pub label: u8,
    pub score: f64,
}

impl ScoredCandidate {
    pub fn new(candidate_id: impl Into<String>, label: u8, score: f64) -> Self {
        Self {
            candidate_id: candidate_id.into(),
            label,
            score,
        }
    }
}

/// Where each candidate's chain map comes from.
#[derive(Clone, Debug)]
pub enum ChainSource {
    /// One chain map file for every candidate.
    Shared(PathBuf),
    /// `<stem>.chains.toml` beside each logits file, falling back to the
    /// shared file when given.
    Sibling { fallback: Option<PathBuf> },
}

impl ChainSource {
    pub fn sibling_path(logits_path: &Path) -> PathBuf {
        let stem = logits_path.file_stem().unwrap_or_default().to_string_lossy();
        logits_path.with_file_name(format!("{stem}.chains.toml"))
    }

    pub fn resolve(&self, logits_path: &Path, len: usize) -> Result<ChainMap, ChainMapError> {
        let path = match self {
            ChainSource::Shared(p) => p.clone(),
            ChainSource::Sibling { fallback } => {
                let sibling = Self::sibling_path(logits_path);
                match (sibling.exists(), fallback) {
                    (true, _) => sibling,
                    (false, Some(f)) => f.clone(),
                    (false, None) => {
                        return Err(ChainMapError::Io(format!("no chain map at {}", sibling.display())))
                    }
                }
            }
        };
        read_chain_map(&path, len)
    }
}

fn score_row(
    row: &ScreeningRow,
    metric: ScreeningMetric,
    chains: &ChainSource,
    bin_centers: &[f64],
) -> Result<ScoredCandidate, ScreeningError> {
    let fail = |message: String, io: bool| ScreeningError::Candidate {
        id: row.candidate_id.clone(),
        message,
        io,
    };
    let invalid = |e: &dyn std::fmt::Display| fail(e.to_string(), false);
    let score = match (row.precomputed_score, &row.logits_path) {
        (Some(s), _) => s,
        (None, Some(path)) => {
            let array = read_npy(path)
                .map_err(|e| fail(format!("{}: {e}", path.display()), matches!(e, NpyError::Io(_))))?;
            let logits = PaeLogits::from_npy(array).map_err(|e| invalid(&e))?;
            let map = chains
                .resolve(path, logits.len())
                .map_err(|e| fail(e.to_string(), matches!(e, ChainMapError::Io(_))))?;
            let kernel = TmKernel::new(logits.len(), bin_centers.to_vec()).map_err(|e| invalid(&e))?;
            metric.score(&logits, &map, &kernel).map_err(|e| invalid(&e))?
        }
        (None, None) => return Err(fail("neither logits_path nor score given".into(), false)),
    };
    if !score.is_finite() {
        return Err(ScreeningError::NonFiniteScore(row.candidate_id.clone()));
    }
    Ok(ScoredCandidate::new(row.candidate_id.clone(), row.label, score))
}

/// One candidate per table row, in table order. A row carrying both a
/// precomputed score and a logits path uses the score.
pub fn score_candidates(
    table: &ScreeningTable,
    metric: ScreeningMetric,
    chains: &ChainSource,
    bin_centers: &[f64],
) -> Result<Vec<ScoredCandidate>, ScreeningError> {
    table
        .rows
        .par_iter()
        .map(|row| score_row(row, metric, chains, bin_centers))
        .collect()
}

fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

/// Score descending, candidate id ascending among equal scores.
pub fn rank(scored: &[ScoredCandidate]) -> Vec<ScoredCandidate> {
    let mut out = scored.to_vec();
    out.sort_by(rank_order);
    out
}

/// Step-wise average precision `sum_n (R_n - R_{n-1}) P_n`.
pub fn auprc(scored: &[ScoredCandidate]) -> Result<f64, ScreeningError> {
    let positives = scored.iter().filter(|c| c.label == 1).count();
    if positives == 0 {
        return Err(ScreeningError::NoPositives);
    }
    if positives == scored.len() {
        return Err(ScreeningError::NoNegatives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (n, c) in rank(scored).iter().enumerate() {
        if c.label == 1 {
            hits += 1;
            sum += hits as f64 / (n + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

pub fn precision_at_k(scored: &[ScoredCandidate], k: usize) -> Result<f64, ScreeningError> {
    if k == 0 {
        return Err(ScreeningError::InvalidK);
    }
    if k > scored.len() {
        return Err(ScreeningError::KTooLarge { k, n: scored.len() });
    }
    let hits = rank(scored).iter().take(k).filter(|c| c.label == 1).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrecisionAtK {
    pub k: usize,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub positives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScreeningReport {
    pub candidates: usize,
    pub positives: usize,
    pub auprc: f64,
    pub precision_at_k: Vec<PrecisionAtK>,
    pub histogram: Vec<HistogramBin>,
    /// Scores of the true binders, in rank order.
    pub positive_scores: Vec<f64>,
    /// 1-based ranks of the true binders.
    pub positive_ranks: Vec<usize>,
    #[serde(skip)]
    pub ranking: Vec<ScoredCandidate>,
}

/// Equal-width bins spanning the score range; the top edge is inclusive.
pub fn score_histogram(scored: &[ScoredCandidate], bins: usize) -> Vec<HistogramBin> {
    if scored.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = scored.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let hi = scored.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: lo + width * b as f64,
            upper: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
            count: 0,
            positives: 0,
        })
        .collect();
    for c in scored {
        let b = if width > 0.0 {
            (((c.score - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        out[b].count += 1;
        out[b].positives += usize::from(c.label == 1);
    }
    out
}

pub fn screening_report(scored: &[ScoredCandidate], ks: &[usize]) -> Result<ScreeningReport, ScreeningError> {
    let ranking = rank(scored);
    let precision_at_k = ks
        .iter()
        .map(|&k| precision_at_k(scored, k).map(|precision| PrecisionAtK { k, precision }))
        .collect::<Result<_, _>>()?;
    let (positive_ranks, positive_scores) = ranking
        .iter()
        .enumerate()
        .filter(|(_, c)| c.label == 1)
        .map(|(n, c)| (n + 1, c.score))
        .unzip();
    Ok(ScreeningReport {
        candidates: scored.len(),
        positives: scored.iter().filter(|c| c.label == 1).count(),
        auprc: auprc(scored)?,
        precision_at_k,
        histogram: score_histogram(scored, HISTOGRAM_BINS),
        positive_scores,
        positive_ranks,
        ranking,
    })
}

impl ScreeningReport {
    pub fn ranking_csv(&self) -> String {
        let mut out = String::from("rank,candidate_id,label,score\n");
        for (n, c) in self.ranking.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", n + 1, c.candidate_id, c.label, c.score);
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lower,upper,count,positives\n");
        for b in &self.histogram {
            let _ = writeln!(out, "{},{},{},{}", b.lower, b.upper, b.count, b.positives);
        }
        out
    }
}
