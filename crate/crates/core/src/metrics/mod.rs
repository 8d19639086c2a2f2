//! Confidence metrics derived from pAE logits.
//!
//! Every metric here reads the per-pair bin logits `l_ij` and the TM-score
//! kernel `g(d_b) = 1 / (1 + (d_b / d0)^2)`. pTM and ipTM take softmax
//! expectations of `g`; pTMEnergy instead treats the logits as unnormalised
//! negative energies and scores each interface pair by
//! `-log sum_b g_b exp(l_ijb)`.

mod filters;

pub use filters::{apply_filters_with, apply_folding_filters, Criterion, FilterError, FilterThresholds, FilterVerdict, MetricsReport};

use thiserror::Error;

use crate::scalar::{log_sum_exp, softmax_into, Scalar};
use crate::tensor_io::{ChainMap, PaeLogits};

/// Smallest residue count for which `d0` is positive.
pub const D0_MIN_RESIDUES: usize = 19;

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("logits have {logits} bins but the kernel has {kernel}")]
    BinCountMismatch { logits: usize, kernel: usize },
    #[error("chain map covers {chains} residues but logits cover {logits}")]
    ChainLengthMismatch { chains: usize, logits: usize },
    #[error("bin centers must be strictly increasing (violated at index {0})")]
    NonMonotoneBins(usize),
    #[error("bin center {0} is negative or not finite")]
    NegativeBinCenter(usize),
    #[error("at least one bin center is required")]
    EmptyBins,
    #[error("pair ({i}, {j}) out of range for {len} residues")]
    IndexOutOfRange { i: usize, j: usize, len: usize },
    #[error("confidence at residue {index} is {value}, outside [0, 1]")]
    OutOfRangeConfidence { index: usize, value: f64 },
}

/// `d0(n) = 1.24 (n_c - 15)^(1/3) - 1.8` with `n_c = max(n, 19)`.
pub fn compute_d0<S: Scalar>(n: usize) -> S {
    let n_c = n.max(D0_MIN_RESIDUES);
    S::of(1.24) * (S::of_usize(n_c) - S::of(15.0)).cbrt() - S::of(1.8)
}

/// Evenly spaced bin centers `width/2, 3width/2, ...`.
pub fn uniform_bin_centers<S: Scalar>(bins: usize, width: f64) -> Vec<S> {
    (0..bins).map(|b| S::of(width * (b as f64 + 0.5))).collect()
}

/// 64 centers from 0.25 to 31.75 Angstrom.
pub fn default_bin_centers<S: Scalar>() -> Vec<S> {
    uniform_bin_centers(DEFAULT_BINS, DEFAULT_BIN_WIDTH)
}

/// TM-score kernel evaluated at the bin centers.
#[derive(Clone, Debug, PartialEq)]
pub struct TmKernel<S> {
    n_eff: usize,
    d0: S,
    bin_centers: Vec<S>,
    weights: Vec<S>,
    log_weights: Vec<S>,
}

impl<S: Scalar> TmKernel<S> {
    /// Build the kernel for a complex of `n` residues.
    pub fn new(n: usize, bin_centers: Vec<S>) -> Result<Self, MetricsError> {
        if bin_centers.is_empty() {
            return Err(MetricsError::EmptyBins);
        }
        for (b, &d) in bin_centers.iter().enumerate() {
            if !d.is_finite() || d < S::zero() {
                return Err(MetricsError::NegativeBinCenter(b));
            }
            if b > 0 && d <= bin_centers[b - 1] {
                return Err(MetricsError::NonMonotoneBins(b));
            }
        }
        let d0 = compute_d0::<S>(n);
        let weights: Vec<S> = bin_centers
            .iter()
            .map(|&d| {
                let r = d / d0;
                S::one() / (S::one() + r * r)
            })
            .collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            n_eff: n.max(D0_MIN_RESIDUES),
            d0,
            bin_centers,
            weights,
            log_weights,
        })
    }

    pub fn with_default_bins(n: usize) -> Self {
        Self::new(n, default_bin_centers()).expect("default grid is valid")
    }

    pub fn n_eff(&self) -> usize {
        self.n_eff
    }

    pub fn d0(&self) -> S {
        self.d0
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_centers(&self) -> &[S] {
        &self.bin_centers
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[S] {
        &self.log_weights
    }

    /// Same kernel at another precision. Weights are converted, not
    /// recomputed, so both instances evaluate the same function.
    pub fn cast<T: Scalar>(&self) -> TmKernel<T> {
        let c = |v: &[S]| v.iter().map(|x| T::of(x.to_f64_lossy())).collect();
        TmKernel {
            n_eff: self.n_eff,
            d0: T::of(self.d0.to_f64_lossy()),
            bin_centers: c(&self.bin_centers),
            weights: c(&self.weights),
            log_weights: c(&self.log_weights),
        }
    }
}

pub(crate) fn check_bins<S: Scalar>(logits: &PaeLogits<S>, kernel: &TmKernel<S>) -> Result<(), MetricsError> {
    if logits.bins() != kernel.bins() {
        return Err(MetricsError::BinCountMismatch {
            logits: logits.bins(),
            kernel: kernel.bins(),
        });
    }
    Ok(())
}

pub(crate) fn check_chains(len: usize, chains: &ChainMap) -> Result<(), MetricsError> {
    if chains.len() != len {
        return Err(MetricsError::ChainLengthMismatch {
            chains: chains.len(),
            logits: len,
        });
    }
    Ok(())
}

/// `sum_b softmax(l)_b w_b` for one pair.
pub fn kernel_expectation<S: Scalar>(pair_logits: &[S], weights: &[S], scratch: &mut Vec<S>) -> S {
    scratch.resize(pair_logits.len(), S::zero());
    softmax_into(pair_logits, scratch);
    scratch.iter().zip(weights).map(|(&q, &w)| q * w).sum()
}

/// Per-reference-residue mean kernel expectation over the residues `j`
/// selected by `include(i, j)`.
fn tm_rows<S: Scalar>(
    logits: &PaeLogits<S>,
    kernel: &TmKernel<S>,
    include: impl Fn(usize, usize) -> bool,
) -> Vec<S> {
    let len = logits.len();
    let mut scratch = Vec::with_capacity(logits.bins());
    (0..len)
        .map(|i| {
            let mut acc = S::zero();
            let mut count = 0usize;
            for j in (0..len).filter(|&j| include(i, j)) {
                acc += kernel_expectation(logits.pair(i, j), kernel.weights(), &mut scratch);
                count += 1;
            }
            acc / S::of_usize(count)
        })
        .collect()
}

/// Maximum with ties resolved to the lowest index.
fn argmax<S: Scalar>(values: &[S]) -> (S, usize) {
    let mut best = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// Predicted TM-score: `max_i (1/L) sum_j sum_b q_ijb g_b`.
pub fn ptm<S: Scalar>(logits: &PaeLogits<S>, kernel: &TmKernel<S>) -> Result<S, MetricsError> {
    check_bins(logits, kernel)?;
    Ok(argmax(&tm_rows(logits, kernel, |_, _| true)).0)
}

/// Interface rows: for each residue `i`, the kernel expectation averaged over
/// residues on other chains.
pub fn iptm_rows<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
) -> Result<Vec<S>, MetricsError> {
    check_bins(logits, kernel)?;
    check_chains(logits.len(), chains)?;
    Ok(tm_rows(logits, kernel, |i, j| chains.is_cross(i, j)))
}

/// ipTM together with the reference residue attaining the maximum (lowest
/// index on ties).
pub fn iptm_with_argmax<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
) -> Result<(S, usize), MetricsError> {
    Ok(argmax(&iptm_rows(logits, chains, kernel)?))
}

pub fn iptm<S: Scalar>(logits: &PaeLogits<S>, chains: &ChainMap, kernel: &TmKernel<S>) -> Result<S, MetricsError> {
    Ok(iptm_with_argmax(logits, chains, kernel)?.0)
}

/// ipTM with the maximum over reference residues replaced by the mean.
pub fn iptm_mean<S: Scalar>(logits: &PaeLogits<S>, chains: &ChainMap, kernel: &TmKernel<S>) -> Result<S, MetricsError> {
    let rows = iptm_rows(logits, chains, kernel)?;
    let n = S::of_usize(rows.len());
    let max = argmax(&rows).0;
    // summation rounding can push the mean of equal rows one ulp past them
    Ok((rows.into_iter().sum::<S>() / n).min(max))
}

/// `-log sum_b exp(l_ijb)`.
pub fn pairwise_energy<S: Scalar>(logits: &PaeLogits<S>, i: usize, j: usize) -> Result<S, MetricsError> {
    let len = logits.len();
    if i >= len || j >= len {
        return Err(MetricsError::IndexOutOfRange { i, j, len });
    }
    Ok(-log_sum_exp(logits.pair(i, j), None))
}

/// pTMEnergy: `-(1/|I|) sum_{(i,j) in I} log sum_b g_b exp(l_ijb)` over
/// ordered cross-chain pairs. Lower is more favourable.
pub fn ptm_energy<S: Scalar>(logits: &PaeLogits<S>, chains: &ChainMap, kernel: &TmKernel<S>) -> Result<S, MetricsError> {
    check_bins(logits, kernel)?;
    check_chains(logits.len(), chains)?;
    let lw = kernel.log_weights();
    let total: S = chains
        .interface_pairs()
        .map(|(i, j)| log_sum_exp(logits.pair(i, j), Some(lw)))
        .sum();
    Ok(-total / S::of_usize(chains.interface_len()))
}

/// Mean expected aligned error `sum_b q_ijb d_b` over the given pairs, raw
/// (Angstrom) and divided by the largest bin center.
pub fn expected_pae_over<S: Scalar>(
    logits: &PaeLogits<S>,
    bin_centers: &[S],
    pairs: impl Iterator<Item = (usize, usize)>,
) -> Result<(S, S), MetricsError> {
    if logits.bins() != bin_centers.len() {
        return Err(MetricsError::BinCountMismatch {
            logits: logits.bins(),
            kernel: bin_centers.len(),
        });
    }
    let mut scratch = Vec::with_capacity(logits.bins());
    let mut acc = S::zero();
    let mut count = 0usize;
    for (i, j) in pairs {
        acc += kernel_expectation(logits.pair(i, j), bin_centers, &mut scratch);
        count += 1;
    }
    let raw = acc / S::of_usize(count);
    let d_max = bin_centers[bin_centers.len() - 1];
    Ok((raw, raw / d_max))
}

/// Expected pAE averaged over interface pairs.
pub fn expected_interface_pae<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    bin_centers: &[S],
) -> Result<(S, S), MetricsError> {
    check_chains(logits.len(), chains)?;
    expected_pae_over(logits, bin_centers, chains.interface_pairs())
}

/// Expected pAE averaged over all ordered binder-binder pairs (diagonal
/// included).
pub fn expected_binder_pae<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    bin_centers: &[S],
) -> Result<(S, S), MetricsError> {
    check_chains(logits.len(), chains)?;
    let binder = chains.binder_residues();
    let pairs = binder.iter().flat_map(|&i| binder.iter().map(move |&j| (i, j)));
    expected_pae_over(logits, bin_centers, pairs)
}

/// Mean per-residue confidence over the binder chain.
pub fn plddt_mean<S: Scalar>(plddt: &[S], chains: &ChainMap) -> Result<S, MetricsError> {
    check_chains(plddt.len(), chains)?;
    if let Some((index, v)) = plddt
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= S::zero() && v <= S::one()))
    {
        return Err(MetricsError::OutOfRangeConfidence {
            index,
            value: v.to_f64_lossy(),
        });
    }
    let binder = chains.binder_residues();
    let n = S::of_usize(binder.len());
    Ok(binder.iter().map(|&i| plddt[i]).sum::<S>() / n)
}
