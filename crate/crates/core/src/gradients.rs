//! Closed-form gradients of pTMEnergy and ipTM with respect to the pAE
//! logits, a central-difference oracle, and a top-k sparsity analysis of
//! gradient traces.
//!
//! For pTMEnergy every interface pair `(i, j)` receives
//! `dE/dl_ijb = -(1/|I|) w_ijb` with `w_ijb = softmax(l_ij + log g)_b`, so the
//! gradient is dense over the interface and each pair's bins sum to
//! `-1/|I|`. ipTM is a maximum over reference residues; its subgradient is
//! confined to the cross-chain pairs of the single maximising row.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{self, check_bins, check_chains, iptm_rows, MetricsError, TmKernel};
use crate::scalar::{softmax_into, Scalar};
use crate::tensor_io::{ChainMap, PaeLogits};

/// Elements above which [`finite_difference`] refuses to run.
pub const FD_MAX_ELEMENTS: usize = 10_000;

/// Floor on the reference magnitude in [`max_relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradientError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("finite-difference oracle limited to {FD_MAX_ELEMENTS} elements, got {0}")]
    TooLargeForOracle(usize),
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("gradient at step {step} has shape {found:?}, expected {expected:?}")]
    ShapeMismatchAcrossSteps {
        step: usize,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("at least one gradient step is required")]
    NoSteps,
    #[error("k must be at least 1")]
    ZeroK,
}

/// `dmetric / dl_ijb`, same layout as [`PaeLogits`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradTensor<S> {
    data: Vec<S>,
    len: usize,
    bins: usize,
}

impl<S: Scalar> GradTensor<S> {
    pub fn zeros(len: usize, bins: usize) -> Self {
        Self {
            data: vec![S::zero(); len * len * bins],
            len,
            bins,
        }
    }

    pub fn from_vec(data: Vec<S>, len: usize, bins: usize) -> Self {
        assert_eq!(data.len(), len * len * bins, "gradient shape mismatch");
        Self { data, len, bins }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.len, self.len, self.bins]
    }

    pub fn pair(&self, i: usize, j: usize) -> &[S] {
        let o = (i * self.len + j) * self.bins;
        &self.data[o..o + self.bins]
    }

    pub fn pair_mut(&mut self, i: usize, j: usize) -> &mut [S] {
        let o = (i * self.len + j) * self.bins;
        &mut self.data[o..o + self.bins]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn scale(&mut self, s: S) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Accumulate `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Self, scale: S) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Number of (i, j) pairs with at least one nonzero bin.
    pub fn support_pairs(&self) -> usize {
        (0..self.len)
            .flat_map(|i| (0..self.len).map(move |j| (i, j)))
            .filter(|&(i, j)| self.pair(i, j).iter().any(|v| !v.is_zero()))
            .count()
    }

    pub fn to_f64(&self) -> GradTensor<f64> {
        GradTensor {
            data: self.data.iter().map(|v| v.to_f64_lossy()).collect(),
            len: self.len,
            bins: self.bins,
        }
    }
}

/// Scalar metrics the oracle and the optimiser can differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Ptm,
    Iptm,
    IptmMean,
    PtmEnergy,
}

impl Metric {
    pub fn evaluate<S: Scalar>(
        self,
        logits: &PaeLogits<S>,
        chains: &ChainMap,
        kernel: &TmKernel<S>,
    ) -> Result<S, MetricsError> {
        match self {
            Metric::Ptm => metrics::ptm(logits, kernel),
            Metric::Iptm => metrics::iptm(logits, chains, kernel),
            Metric::IptmMean => metrics::iptm_mean(logits, chains, kernel),
            Metric::PtmEnergy => metrics::ptm_energy(logits, chains, kernel),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ptm => "ptm",
            Metric::Iptm => "iptm",
            Metric::IptmMean => "iptm_mean",
            Metric::PtmEnergy => "ptm_energy",
        }
    }
}

/// Analytic gradient of pTMEnergy. Zero off the interface.
pub fn grad_ptm_energy<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
) -> Result<GradTensor<S>, MetricsError> {
    check_bins(logits, kernel)?;
    check_chains(logits.len(), chains)?;
    let (len, bins) = (logits.len(), logits.bins());
    let scale = -S::one() / S::of_usize(chains.interface_len());
    let mut grad = GradTensor::zeros(len, bins);
    let mut shifted = vec![S::zero(); bins];
    for (i, j) in chains.interface_pairs() {
        for ((s, &l), &lw) in shifted.iter_mut().zip(logits.pair(i, j)).zip(kernel.log_weights()) {
            *s = l + lw;
        }
        let out = grad.pair_mut(i, j);
        softmax_into(&shifted, out);
        for v in out.iter_mut() {
            *v *= scale;
        }
    }
    Ok(grad)
}

/// Subgradient of ipTM along with the row it was taken at.
#[derive(Clone, Debug)]
pub struct IptmGradient<S> {
    pub grad: GradTensor<S>,
    pub value: S,
    /// Maximising reference residue; lowest index on ties.
    pub argmax: usize,
}

/// Gradient of one ipTM row `r_i = (1/|J_i|) sum_{j in J_i} sum_b q_ijb g_b`,
/// scaled by `scale` and accumulated into `grad`.
fn accumulate_row_gradient<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
    row: usize,
    scale: S,
    grad: &mut GradTensor<S>,
) {
    let factor = scale / S::of_usize(chains.partner_count(row));
    let mut q = vec![S::zero(); logits.bins()];
    for j in chains.partners(row) {
        softmax_into(logits.pair(row, j), &mut q);
        let mean_g: S = q.iter().zip(kernel.weights()).map(|(&a, &g)| a * g).sum();
        let out = grad.pair_mut(row, j);
        for ((o, &qb), &gb) in out.iter_mut().zip(&q).zip(kernel.weights()) {
            *o += factor * qb * (gb - mean_g);
        }
    }
}

pub fn grad_iptm<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
) -> Result<IptmGradient<S>, MetricsError> {
    let (value, argmax) = metrics::iptm_with_argmax(logits, chains, kernel)?;
    let mut grad = GradTensor::zeros(logits.len(), logits.bins());
    accumulate_row_gradient(logits, chains, kernel, argmax, S::one(), &mut grad);
    Ok(IptmGradient { grad, value, argmax })
}

/// Gradient of the mean-over-rows ipTM variant; every row contributes.
pub fn grad_iptm_mean<S: Scalar>(
    logits: &PaeLogits<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
) -> Result<GradTensor<S>, MetricsError> {
    iptm_rows(logits, chains, kernel)?;
    let len = logits.len();
    let scale = S::one() / S::of_usize(len);
    let mut grad = GradTensor::zeros(len, logits.bins());
    for i in 0..len {
        accumulate_row_gradient(logits, chains, kernel, i, scale, &mut grad);
    }
    Ok(grad)
}

/// Accumulate `scale * d(norm)/dl` into `grad`, where `norm` is the second
/// output of [`metrics::expected_pae_over`] for the same pairs.
pub fn accumulate_expected_pae_norm<S: Scalar>(
    logits: &PaeLogits<S>,
    bin_centers: &[S],
    pairs: &[(usize, usize)],
    scale: S,
    grad: &mut GradTensor<S>,
) -> Result<(), MetricsError> {
    if logits.bins() != bin_centers.len() {
        return Err(MetricsError::BinCountMismatch {
            logits: logits.bins(),
            kernel: bin_centers.len(),
        });
    }
    let d_max = bin_centers[bin_centers.len() - 1];
    let factor = scale / (S::of_usize(pairs.len()) * d_max);
    let mut q = vec![S::zero(); logits.bins()];
    for &(i, j) in pairs {
        softmax_into(logits.pair(i, j), &mut q);
        let mean_d: S = q.iter().zip(bin_centers).map(|(&a, &d)| a * d).sum();
        for ((o, &qb), &db) in grad.pair_mut(i, j).iter_mut().zip(&q).zip(bin_centers) {
            *o += factor * qb * (db - mean_d);
        }
    }
    Ok(())
}

/// Central differences `(f(l + eps e) - f(l - eps e)) / 2 eps` for every
/// coordinate, with the metric evaluated at precision `W`.
///
/// Use `W = DoubleDouble` when the result is compared against an analytic
/// gradient at tight relative tolerance; in `f64` the subtraction alone
/// costs about `1e-16 / eps` absolute error.
pub fn finite_difference<W: Scalar>(
    metric: Metric,
    logits: &PaeLogits<f64>,
    chains: &ChainMap,
    kernel: &TmKernel<f64>,
    epsilon: f64,
) -> Result<GradTensor<f64>, GradientError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GradientError::InvalidEpsilon(epsilon));
    }
    let n = logits.as_slice().len();
    if n > FD_MAX_ELEMENTS {
        return Err(GradientError::TooLargeForOracle(n));
    }
    let wide = logits.cast::<W>();
    let wide_kernel = kernel.cast::<W>();
    // surfaces shape errors once instead of per coordinate
    metric.evaluate(&wide, chains, &wide_kernel)?;

    let eps = W::of(epsilon);
    let two_eps = eps + eps;
    let data: Result<Vec<f64>, MetricsError> = (0..n)
        .into_par_iter()
        .map(|k| {
            let x = wide.as_slice()[k];
            let plus = metric.evaluate(&wide.with_element(k, x + eps), chains, &wide_kernel)?;
            let minus = metric.evaluate(&wide.with_element(k, x - eps), chains, &wide_kernel)?;
            Ok(((plus - minus) / two_eps).to_f64_lossy())
        })
        .collect();
    Ok(GradTensor::from_vec(data?, logits.len(), logits.bins()))
}

/// `max_k |a_k - r_k| / max(|r_k|, 1e-12)`.
pub fn max_relative_error(analytic: &GradTensor<f64>, reference: &GradTensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), reference.shape());
    analytic
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, r)| (a - r).abs() / r.abs().max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

/// Summary of which binder-target pairs and target residues carry gradient
/// signal over a sequence of steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub k: usize,
    pub steps: usize,
    pub binder_residues: Vec<usize>,
    pub target_residues: Vec<usize>,
    /// `binder x target`: max over steps and bins of `|grad|` (both pair
    /// orientations), divided by the global maximum.
    pub per_pair_max: Vec<Vec<f64>>,
    /// Per target residue: number of steps in which it ranked in the top k.
    pub topk_frequency: Vec<usize>,
    pub engaged_fraction: f64,
}

impl GradientReport {
    /// CSV heatmap, binder residues as rows and target residues as columns.
    pub fn heatmap_csv(&self) -> String {
        let mut out = String::from("binder_residue");
        for t in &self.target_residues {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (b, row) in self.binder_residues.iter().zip(&self.per_pair_max) {
            let _ = write!(out, "{b}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn engaged_count(&self) -> usize {
        self.topk_frequency.iter().filter(|&&c| c > 0).count()
    }
}

/// Incremental form of [`sparsity_report`]; lets long optimisation runs
/// record gradients without retaining every tensor.
#[derive(Clone, Debug)]
pub struct SparsityAccumulator {
    k: usize,
    len: usize,
    shape: Option<[usize; 3]>,
    binder: Vec<usize>,
    target: Vec<usize>,
    pair_max: Vec<Vec<f64>>,
    frequency: Vec<usize>,
    steps: usize,
}

impl SparsityAccumulator {
    pub fn new(chains: &ChainMap, k: usize) -> Result<Self, GradientError> {
        if k == 0 {
            return Err(GradientError::ZeroK);
        }
        let binder = chains.binder_residues();
        let target = chains.target_residues();
        Ok(Self {
            k,
            len: chains.len(),
            shape: None,
            pair_max: vec![vec![0.0; target.len()]; binder.len()],
            frequency: vec![0; target.len()],
            binder,
            target,
            steps: 0,
        })
    }

    pub fn push<S: Scalar>(&mut self, grad: &GradTensor<S>) -> Result<(), GradientError> {
        let shape = grad.shape();
        let expected = *self.shape.get_or_insert([self.len, self.len, grad.bins()]);
        if shape != expected {
            return Err(GradientError::ShapeMismatchAcrossSteps {
                step: self.steps,
                expected,
                found: shape,
            });
        }
        let mut per_target = vec![0.0_f64; self.target.len()];
        for (bi, &b) in self.binder.iter().enumerate() {
            for (ti, &t) in self.target.iter().enumerate() {
                let m = grad
                    .pair(b, t)
                    .iter()
                    .chain(grad.pair(t, b))
                    .map(|v| v.to_f64_lossy().abs())
                    .fold(0.0, f64::max);
                self.pair_max[bi][ti] = self.pair_max[bi][ti].max(m);
                per_target[ti] = per_target[ti].max(m);
            }
        }
        let mut order: Vec<usize> = (0..self.target.len()).filter(|&t| per_target[t] > 0.0).collect();
        // stable sort keeps index order among equal magnitudes
        order.sort_by(|&a, &b| per_target[b].total_cmp(&per_target[a]));
        for &t in order.iter().take(self.k) {
            self.frequency[t] += 1;
        }
        self.steps += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<GradientReport, GradientError> {
        if self.steps == 0 {
            return Err(GradientError::NoSteps);
        }
        let global = self.pair_max.iter().flatten().copied().fold(0.0, f64::max);
        let per_pair_max = self
            .pair_max
            .iter()
            .map(|row| row.iter().map(|&v| if global > 0.0 { v / global } else { 0.0 }).collect())
            .collect();
        let engaged = self.frequency.iter().filter(|&&c| c > 0).count();
        Ok(GradientReport {
            k: self.k,
            steps: self.steps,
            binder_residues: self.binder.clone(),
            target_residues: self.target.clone(),
            per_pair_max,
            topk_frequency: self.frequency.clone(),
            engaged_fraction: engaged as f64 / self.target.len() as f64,
        })
    }
}

/// Rank target residues at each step by their largest gradient magnitude
/// over binder partners and bins, and count top-k appearances.
pub fn sparsity_report<S: Scalar>(
    grads: &[GradTensor<S>],
    chains: &ChainMap,
    k: usize,
) -> Result<GradientReport, GradientError> {
    let mut acc = SparsityAccumulator::new(chains, k)?;
    for g in grads {
        acc.push(g)?;
    }
    acc.finish()
}
