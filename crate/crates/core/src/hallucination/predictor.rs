use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::gradients::GradTensor;
use crate::metrics::{uniform_bin_centers, DEFAULT_BIN_WIDTH};
use crate::scalar::Scalar;
use crate::tensor_io::PaeLogits;

use super::ALPHABET_SIZE;

/// Opaque predictor error; aborts the trajectory with the message recorded.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("predictor failure: {0}")]
pub struct PredictorFailure(pub String);

/// Predictor output for a full complex, binder residues first.
#[derive(Clone, Debug)]
pub struct ConfidenceBundle<S> {
    pub pae_logits: PaeLogits<S>,
    pub plddt: Vec<S>,
    pub coords: Vec<[S; 3]>,
}

impl<S: Scalar> ConfidenceBundle<S> {
    pub fn len(&self) -> usize {
        self.plddt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plddt.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let l = self.pae_logits.len();
        self.plddt.len() == l
            && self.coords.len() == l
            && self.coords.iter().flatten().all(|c| c.is_finite())
    }
}

/// Gradient of a scalar loss with respect to each bundle field.
#[derive(Clone, Debug)]
pub struct BundleGradient<S> {
    pub pae_logits: GradTensor<S>,
    pub plddt: Vec<S>,
    pub coords: Vec<[S; 3]>,
}

impl<S: Scalar> BundleGradient<S> {
    pub fn zeros(len: usize, bins: usize) -> Self {
        Self {
            pae_logits: GradTensor::zeros(len, bins),
            plddt: vec![S::zero(); len],
            coords: vec![[S::zero(); 3]; len],
        }
    }
}

/// A structure predictor as seen by the design loop.
///
/// `binder_probs` is row-major `L_b x 20`. Implementations must be
/// deterministic and safe to share across concurrently running trajectories.
pub trait Predictor<S: Scalar>: Sync {
    fn target_len(&self) -> usize;

    fn bins(&self) -> usize;

    fn bin_centers(&self) -> Vec<S> {
        uniform_bin_centers(self.bins(), DEFAULT_BIN_WIDTH)
    }

    fn predict(&self, binder_probs: &[S]) -> Result<ConfidenceBundle<S>, PredictorFailure>;

    /// Pull a bundle gradient back to `dL/d binder_probs` at `binder_probs`.
    fn pullback(&self, binder_probs: &[S], upstream: &BundleGradient<S>) -> Result<Vec<S>, PredictorFailure>;
}

pub const HELIX_RADIUS: f64 = 2.3;
pub const HELIX_RISE: f64 = 1.5;
pub const HELIX_TWIST_DEG: f64 = 100.0;
const LOGIT_SCALE: f64 = 0.5;

/// Linear residue embedding with bilinear pair compatibility.
///
/// `h_i = p_i W` for binder rows and fixed target features otherwise;
/// `s_ij = h_i . h_j / sqrt(F)`; `l_ijb = s_ij (m - b) c` with `m` the bin
/// midpoint, so higher compatibility moves mass to low-error bins;
/// `plddt_i = logistic(mean_j s_ij)`; coordinates sit on an ideal helix
/// displaced by `tanh(h_i[0..3])`.
#[derive(Clone, Debug)]
pub struct ToyPredictor<S> {
    weights: Vec<S>,
    target_features: Vec<S>,
    features: usize,
    target_len: usize,
    bins: usize,
    // (m - b) c for every bin
    bin_slopes: Vec<S>,
}

fn standard_normal_matrix<S: Scalar>(rows: usize, cols: usize, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * cols)
        .map(|_| S::of(StandardNormal.sample(&mut rng)))
        .collect()
}

impl<S: Scalar> ToyPredictor<S> {
    /// Embedding weights from `seed`, target features from `target_seed`.
    pub fn seeded(target_len: usize, features: usize, bins: usize, seed: u64, target_seed: u64) -> Self {
        let weights = standard_normal_matrix(ALPHABET_SIZE, features, seed);
        let target = standard_normal_matrix(target_len, features, target_seed);
        Self::from_parts(weights, target, features, bins)
    }

    /// `weights` is `20 x F`, `target_features` is `T x F`, both row-major.
    pub fn from_parts(weights: Vec<S>, target_features: Vec<S>, features: usize, bins: usize) -> Self {
        assert!(features >= 3, "coordinates need at least three features");
        assert!(bins >= 1);
        assert_eq!(weights.len(), ALPHABET_SIZE * features);
        assert_eq!(target_features.len() % features, 0);
        let midpoint = (bins as f64 + 1.0) / 2.0;
        let bin_slopes = (1..=bins).map(|b| S::of((midpoint - b as f64) * LOGIT_SCALE)).collect();
        Self {
            target_len: target_features.len() / features,
            weights,
            target_features,
            features,
            bins,
            bin_slopes,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    fn binder_len(&self, binder_probs: &[S]) -> Result<usize, PredictorFailure> {
        if binder_probs.is_empty() || !binder_probs.len().is_multiple_of(ALPHABET_SIZE) {
            return Err(PredictorFailure(format!(
                "binder probability matrix has {} entries, not a positive multiple of {ALPHABET_SIZE}",
                binder_probs.len()
            )));
        }
        Ok(binder_probs.len() / ALPHABET_SIZE)
    }

    fn embed(&self, binder_probs: &[S], binder_len: usize) -> Vec<S> {
        let f = self.features;
        let mut h = Vec::with_capacity((binder_len + self.target_len) * f);
        for p in binder_probs.chunks_exact(ALPHABET_SIZE) {
            for c in 0..f {
                h.push((0..ALPHABET_SIZE).map(|a| p[a] * self.weights[a * f + c]).sum());
            }
        }
        h.extend_from_slice(&self.target_features);
        h
    }

    fn compatibility(&self, h: &[S], len: usize) -> Vec<S> {
        let f = self.features;
        let norm = S::of_usize(f).sqrt();
        let mut s = vec![S::zero(); len * len];
        for i in 0..len {
            for j in i..len {
                let v = (0..f).map(|c| h[i * f + c] * h[j * f + c]).sum::<S>() / norm;
                s[i * len + j] = v;
                s[j * len + i] = v;
            }
        }
        s
    }
}

pub(crate) fn helix_point<S: Scalar>(k: usize) -> [S; 3] {
    let angle = (HELIX_TWIST_DEG * k as f64).to_radians();
    [
        S::of(HELIX_RADIUS * angle.cos()),
        S::of(HELIX_RADIUS * angle.sin()),
        S::of(HELIX_RISE * k as f64),
    ]
}

impl<S: Scalar> Predictor<S> for ToyPredictor<S> {
    fn target_len(&self) -> usize {
        self.target_len
    }

    fn bins(&self) -> usize {
        self.bins
    }

    fn predict(&self, binder_probs: &[S]) -> Result<ConfidenceBundle<S>, PredictorFailure> {
        let lb = self.binder_len(binder_probs)?;
        let len = lb + self.target_len;
        let f = self.features;
        let h = self.embed(binder_probs, lb);
        let s = self.compatibility(&h, len);
        let pae_logits = PaeLogits::from_fn(len, self.bins, |i, j, b| s[i * len + j] * self.bin_slopes[b])
            .map_err(|e| PredictorFailure(e.to_string()))?;
        let inv_len = S::one() / S::of_usize(len);
        let plddt = s
            .chunks_exact(len)
            .map(|row| (row.iter().copied().sum::<S>() * inv_len).logistic())
            .collect();
        let coords = (0..len)
            .map(|k| {
                let base = helix_point::<S>(k);
                [0, 1, 2].map(|c| base[c] + h[k * f + c].tanh())
            })
            .collect();
        Ok(ConfidenceBundle { pae_logits, plddt, coords })
    }

    fn pullback(&self, binder_probs: &[S], upstream: &BundleGradient<S>) -> Result<Vec<S>, PredictorFailure> {
        let lb = self.binder_len(binder_probs)?;
        let len = lb + self.target_len;
        if upstream.pae_logits.shape() != [len, len, self.bins]
            || upstream.plddt.len() != len
            || upstream.coords.len() != len
        {
            return Err(PredictorFailure("upstream gradient shape does not match the complex".into()));
        }
        let f = self.features;
        let h = self.embed(binder_probs, lb);
        let s = self.compatibility(&h, len);
        let inv_len = S::one() / S::of_usize(len);

        // d/ds_ij from the pAE logits and from pLDDT's row mean
        let mut s_bar = vec![S::zero(); len * len];
        for i in 0..len {
            let row_mean = s[i * len..(i + 1) * len].iter().copied().sum::<S>() * inv_len;
            let p = row_mean.logistic();
            let from_plddt = upstream.plddt[i] * p * (S::one() - p) * inv_len;
            for j in 0..len {
                let from_pae: S = upstream
                    .pae_logits
                    .pair(i, j)
                    .iter()
                    .zip(&self.bin_slopes)
                    .map(|(&g, &a)| g * a)
                    .sum();
                s_bar[i * len + j] = from_pae + from_plddt;
            }
        }

        let norm = S::of_usize(f).sqrt();
        let mut grad = vec![S::zero(); lb * ALPHABET_SIZE];
        let mut h_bar = vec![S::zero(); f];
        for i in 0..lb {
            h_bar.iter_mut().for_each(|v| *v = S::zero());
            for j in 0..len {
                let w = (s_bar[i * len + j] + s_bar[j * len + i]) / norm;
                if w.is_zero() {
                    continue;
                }
                for c in 0..f {
                    h_bar[c] += w * h[j * f + c];
                }
            }
            for c in 0..3 {
                let t = h[i * f + c].tanh();
                h_bar[c] += upstream.coords[i][c] * (S::one() - t * t);
            }
            for a in 0..ALPHABET_SIZE {
                grad[i * ALPHABET_SIZE + a] = (0..f).map(|c| self.weights[a * f + c] * h_bar[c]).sum();
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_probs(lb: usize) -> Vec<f64> {
        vec![1.0 / ALPHABET_SIZE as f64; lb * ALPHABET_SIZE]
    }

    #[test]
    fn zero_weights_give_flat_outputs() {
        let p = ToyPredictor::from_parts(vec![0.0; ALPHABET_SIZE * 4], vec![0.0; 3 * 4], 4, 5);
        let out = p.predict(&uniform_probs(2)).unwrap();
        assert!(out.pae_logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.plddt.iter().all(|&v| v == 0.5));
        for (k, c) in out.coords.iter().enumerate() {
            assert_eq!(*c, helix_point::<f64>(k));
        }
    }

    #[test]
    fn identical_rows_identical_binder_logits() {
        let p = ToyPredictor::<f64>::seeded(3, 6, 4, 1, 2);
        let mut probs = vec![0.0; 2 * ALPHABET_SIZE];
        for row in probs.chunks_exact_mut(ALPHABET_SIZE) {
            row[3] = 0.25;
            row[7] = 0.75;
        }
        let out = p.predict(&probs).unwrap();
        for j in 0..5 {
            assert_eq!(out.pae_logits.pair(0, j), out.pae_logits.pair(1, j));
        }
        assert!(out.is_consistent());
    }

    #[test]
    fn bin_slopes_are_centred() {
        let p = ToyPredictor::<f64>::seeded(1, 3, 4, 0, 0);
        assert_eq!(p.bin_slopes, vec![0.75, 0.25, -0.25, -0.75]);
    }

    #[test]
    fn rejects_ragged_probabilities() {
        let p = ToyPredictor::<f64>::seeded(2, 3, 4, 0, 0);
        assert!(p.predict(&[0.5; 7]).is_err());
    }
}
