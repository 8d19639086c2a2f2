use serde::Serialize;
use thiserror::Error;

use super::config::{DesignConfig, LossWeights, Objective};
use super::predictor::{BundleGradient, ConfidenceBundle};
use crate::gradients::{accumulate_expected_pae_norm, grad_iptm, grad_iptm_mean, grad_ptm_energy};
use crate::metrics::{self, MetricsError, TmKernel};
use crate::scalar::Scalar;
use crate::tensor_io::ChainMap;

/// Soft contacts per residue saturate at this count.
pub const CONTACT_CAP: f64 = 4.0;
/// Radius of gyration of a compact chain of `n` residues is about
/// `2.38 n^0.365` Angstrom.
pub const RG_PREFACTOR: f64 = 2.38;
pub const RG_EXPONENT: f64 = 0.365;
pub const DEFAULT_CLASH_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("contact cutoff must be positive, got {0}")]
    NonPositiveCutoff(f64),
    #[error("contact sharpness must be positive, got {0}")]
    NonPositiveSharpness(f64),
    #[error("clash threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("confidence bundle fields disagree on length or contain non-finite coordinates")]
    InconsistentBundle,
}

/// Unweighted loss terms. `plddt` is `1 - mean binder pLDDT`; contact terms
/// enter the total with a negative sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossComponents<S> {
    pub energy: S,
    pub plddt: S,
    pub ipae: S,
    pub intra_pae: S,
    pub con_inter: S,
    pub con_intra: S,
    pub rad_gyr: S,
}

impl<S: Scalar> LossComponents<S> {
    pub fn total(&self, w: &LossWeights) -> S {
        S::of(w.energy) * self.energy + S::of(w.plddt) * self.plddt + S::of(w.ipae) * self.ipae
            + S::of(w.intra_pae) * self.intra_pae
            - S::of(w.con_inter) * self.con_inter
            - S::of(w.con_intra) * self.con_intra
            + S::of(w.rad_gyr) * self.rad_gyr
    }

    pub fn to_f64(&self) -> LossComponents<f64> {
        LossComponents {
            energy: self.energy.to_f64_lossy(),
            plddt: self.plddt.to_f64_lossy(),
            ipae: self.ipae.to_f64_lossy(),
            intra_pae: self.intra_pae.to_f64_lossy(),
            con_inter: self.con_inter.to_f64_lossy(),
            con_intra: self.con_intra.to_f64_lossy(),
            rad_gyr: self.rad_gyr.to_f64_lossy(),
        }
    }
}

fn distance<S: Scalar>(a: &[S; 3], b: &[S; 3]) -> S {
    let d: S = (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum();
    d.sqrt()
}

fn check_contact_params(cutoff: f64, sharpness: f64) -> Result<(), LossError> {
    if !(cutoff > 0.0) {
        return Err(LossError::NonPositiveCutoff(cutoff));
    }
    if !(sharpness > 0.0) {
        return Err(LossError::NonPositiveSharpness(sharpness));
    }
    Ok(())
}

/// Saturating soft-contact score over binder residues `i` and partners `j`
/// selected by `include`, optionally with its coordinate gradient.
fn soft_contacts<S: Scalar>(
    coords: &[[S; 3]],
    binder: &[usize],
    include: impl Fn(usize, usize) -> bool,
    cutoff: S,
    sharpness: S,
    mut grad: Option<&mut [[S; 3]]>,
) -> S {
    let cap = S::of(CONTACT_CAP);
    let inv = S::one() / (cap * S::of_usize(binder.len()));
    let mut total = S::zero();
    for &i in binder {
        let partners: Vec<usize> = (0..coords.len()).filter(|&j| include(i, j)).collect();
        let count: S = partners
            .iter()
            .map(|&j| ((cutoff - distance(&coords[i], &coords[j])) / sharpness).logistic())
            .sum();
        total += count.min(cap) * inv;
        let Some(g) = grad.as_deref_mut() else { continue };
        if count >= cap {
            continue;
        }
        for &j in &partners {
            let d = distance(&coords[i], &coords[j]);
            if d.is_zero() {
                continue;
            }
            let sig = ((cutoff - d) / sharpness).logistic();
            // d(score)/dd, then chain through d = |x_i - x_j|
            let dd = -inv * sig * (S::one() - sig) / sharpness;
            for c in 0..3 {
                let u = dd * (coords[i][c] - coords[j][c]) / d;
                g[i][c] += u;
                g[j][c] -= u;
            }
        }
    }
    total
}

fn is_inter(chains: &ChainMap) -> impl Fn(usize, usize) -> bool + '_ {
    move |i, j| chains.is_cross(i, j)
}

fn is_intra(chains: &ChainMap) -> impl Fn(usize, usize) -> bool + '_ {
    move |i, j| !chains.is_cross(i, j) && i.abs_diff(j) > 1
}

/// `(con_inter, con_intra)`, each `mean_i min(c_i, 4) / 4` over binder
/// residues with `c_i = sum_j logistic((cutoff - d_ij) / sharpness)`.
pub fn contact_losses<S: Scalar>(
    coords: &[[S; 3]],
    chains: &ChainMap,
    cutoff: f64,
    sharpness: f64,
) -> Result<(S, S), LossError> {
    check_contact_params(cutoff, sharpness)?;
    let binder = chains.binder_residues();
    let (c, s) = (S::of(cutoff), S::of(sharpness));
    Ok((
        soft_contacts(coords, &binder, is_inter(chains), c, s, None),
        soft_contacts(coords, &binder, is_intra(chains), c, s, None),
    ))
}

/// Coordinate gradients of [`contact_losses`], `(d con_inter, d con_intra)`.
pub fn contact_loss_gradients<S: Scalar>(
    coords: &[[S; 3]],
    chains: &ChainMap,
    cutoff: f64,
    sharpness: f64,
) -> Result<(Vec<[S; 3]>, Vec<[S; 3]>), LossError> {
    check_contact_params(cutoff, sharpness)?;
    let binder = chains.binder_residues();
    let (c, s) = (S::of(cutoff), S::of(sharpness));
    let mut inter = vec![[S::zero(); 3]; coords.len()];
    let mut intra = vec![[S::zero(); 3]; coords.len()];
    soft_contacts(coords, &binder, is_inter(chains), c, s, Some(&mut inter));
    soft_contacts(coords, &binder, is_intra(chains), c, s, Some(&mut intra));
    Ok((inter, intra))
}

fn rg_scale(n: usize) -> f64 {
    RG_PREFACTOR * (n as f64).powf(RG_EXPONENT)
}

/// `(raw, scaled)`: RMS distance to the centroid in Angstrom, and the same
/// divided by the compact-chain expectation `2.38 n^0.365`.
pub fn radius_of_gyration<S: Scalar>(coords: &[[S; 3]]) -> (S, S) {
    let n = coords.len();
    assert!(n > 0, "radius of gyration needs at least one residue");
    let centroid = centroid(coords);
    let msd: S = coords
        .iter()
        .map(|x| (0..3).map(|c| (x[c] - centroid[c]) * (x[c] - centroid[c])).sum::<S>())
        .sum::<S>()
        / S::of_usize(n);
    let raw = msd.sqrt();
    (raw, raw / S::of(rg_scale(n)))
}

fn centroid<S: Scalar>(coords: &[[S; 3]]) -> [S; 3] {
    let n = S::of_usize(coords.len());
    [0, 1, 2].map(|c| coords.iter().map(|x| x[c]).sum::<S>() / n)
}

/// Gradient of the scaled radius of gyration; zero when all points coincide.
pub fn radius_of_gyration_gradient<S: Scalar>(coords: &[[S; 3]]) -> Vec<[S; 3]> {
    let n = coords.len();
    let (raw, _) = radius_of_gyration(coords);
    if raw.is_zero() {
        return vec![[S::zero(); 3]; n];
    }
    let c = centroid(coords);
    let factor = S::one() / (S::of_usize(n) * raw * S::of(rg_scale(n)));
    coords.iter().map(|x| [0, 1, 2].map(|k| factor * (x[k] - c[k]))).collect()
}

/// Residue pairs closer than `threshold`, skipping sequence neighbours on
/// the same chain.
pub fn clash_count<S: Scalar>(coords: &[[S; 3]], chains: &ChainMap, threshold: f64) -> Result<usize, LossError> {
    if !(threshold > 0.0) {
        return Err(LossError::NonPositiveThreshold(threshold));
    }
    let t = S::of(threshold);
    let mut n = 0;
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            if (chains.is_cross(i, j) || j - i > 1) && distance(&coords[i], &coords[j]) < t {
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Loss terms that do not depend on the objective. Returned separately so
/// callers can differentiate only what they need.
struct Terms<S> {
    components: LossComponents<S>,
    interface: Vec<(usize, usize)>,
    binder_pairs: Vec<(usize, usize)>,
    binder: Vec<usize>,
}

fn evaluate_terms<S: Scalar>(
    bundle: &ConfidenceBundle<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
    config: &DesignConfig,
) -> Result<Terms<S>, LossError> {
    if !bundle.is_consistent() || bundle.len() != chains.len() {
        return Err(LossError::InconsistentBundle);
    }
    let logits = &bundle.pae_logits;
    let centers = kernel.bin_centers();
    let energy = match config.objective {
        Objective::PtmEnergy => metrics::ptm_energy(logits, chains, kernel)?,
        Objective::Iptm => S::one() - metrics::iptm(logits, chains, kernel)?,
        Objective::IptmMean => S::one() - metrics::iptm_mean(logits, chains, kernel)?,
        Objective::None => S::zero(),
    };
    let binder = chains.binder_residues();
    let interface: Vec<_> = chains.interface_pairs().collect();
    let binder_pairs: Vec<_> = binder.iter().flat_map(|&i| binder.iter().map(move |&j| (i, j))).collect();
    let (_, ipae) = metrics::expected_pae_over(logits, centers, interface.iter().copied())?;
    let (_, intra_pae) = metrics::expected_pae_over(logits, centers, binder_pairs.iter().copied())?;
    let plddt = S::one() - metrics::plddt_mean(&bundle.plddt, chains)?;
    let (con_inter, con_intra) = contact_losses(&bundle.coords, chains, config.contact_cutoff, config.contact_sharpness)?;
    let binder_coords: Vec<_> = binder.iter().map(|&i| bundle.coords[i]).collect();
    let (_, rad_gyr) = radius_of_gyration(&binder_coords);
    Ok(Terms {
        components: LossComponents {
            energy,
            plddt,
            ipae,
            intra_pae,
            con_inter,
            con_intra,
            rad_gyr,
        },
        interface,
        binder_pairs,
        binder,
    })
}

/// Weighted design loss and its unweighted terms.
pub fn composite_loss<S: Scalar>(
    bundle: &ConfidenceBundle<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
    config: &DesignConfig,
) -> Result<(S, LossComponents<S>), LossError> {
    let terms = evaluate_terms(bundle, chains, kernel, config)?;
    Ok((terms.components.total(&config.weights), terms.components))
}

/// Gradient of the objective slot alone (unweighted) with respect to the
/// pAE logits; zero for [`Objective::None`].
pub fn objective_gradient<S: Scalar>(
    bundle: &ConfidenceBundle<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
    objective: Objective,
) -> Result<BundleGradient<S>, LossError> {
    let logits = &bundle.pae_logits;
    let mut out = BundleGradient::zeros(logits.len(), logits.bins());
    match objective {
        Objective::PtmEnergy => out.pae_logits = grad_ptm_energy(logits, chains, kernel)?,
        Objective::Iptm => out.pae_logits.add_scaled(&grad_iptm(logits, chains, kernel)?.grad, -S::one()),
        Objective::IptmMean => out.pae_logits.add_scaled(&grad_iptm_mean(logits, chains, kernel)?, -S::one()),
        Objective::None => {}
    }
    Ok(out)
}

/// [`composite_loss`] together with its gradient with respect to every
/// bundle field.
pub fn composite_loss_with_grad<S: Scalar>(
    bundle: &ConfidenceBundle<S>,
    chains: &ChainMap,
    kernel: &TmKernel<S>,
    config: &DesignConfig,
) -> Result<(S, LossComponents<S>, BundleGradient<S>), LossError> {
    let terms = evaluate_terms(bundle, chains, kernel, config)?;
    let w = &config.weights;
    let mut grad = objective_gradient(bundle, chains, kernel, config.objective)?;
    grad.pae_logits.scale(S::of(w.energy));

    let logits = &bundle.pae_logits;
    let centers = kernel.bin_centers();
    accumulate_expected_pae_norm(logits, centers, &terms.interface, S::of(w.ipae), &mut grad.pae_logits)?;
    accumulate_expected_pae_norm(logits, centers, &terms.binder_pairs, S::of(w.intra_pae), &mut grad.pae_logits)?;

    let per_residue = -S::of(w.plddt) / S::of_usize(terms.binder.len());
    for &i in &terms.binder {
        grad.plddt[i] += per_residue;
    }

    let (d_inter, d_intra) =
        contact_loss_gradients(&bundle.coords, chains, config.contact_cutoff, config.contact_sharpness)?;
    let (wi, wx) = (S::of(w.con_inter), S::of(w.con_intra));
    for (g, (a, b)) in grad.coords.iter_mut().zip(d_inter.iter().zip(&d_intra)) {
        for c in 0..3 {
            g[c] -= wi * a[c] + wx * b[c];
        }
    }
    let binder_coords: Vec<_> = terms.binder.iter().map(|&i| bundle.coords[i]).collect();
    let wr = S::of(w.rad_gyr);
    for (&i, d) in terms.binder.iter().zip(radius_of_gyration_gradient(&binder_coords)) {
        for c in 0..3 {
            grad.coords[i][c] += wr * d[c];
        }
    }
    Ok((terms.components.total(w), terms.components, grad))
}
