use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    expected_interface_pae, iptm, iptm_mean, plddt_mean, ptm, ptm_energy, MetricsError, TmKernel,
};
use crate::tensor_io::{ChainMap, PaeLogits};

/// All confidence metrics for one complex. Fields are optional so that
/// partially populated reports (e.g. from `--metric ptm`) round-trip.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iptm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iptm_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptm_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_pae_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_pae_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plddt_mean: Option<f64>,
}

impl MetricsReport {
    /// Every metric; pLDDT only when per-residue confidences are supplied.
    pub fn compute(
        logits: &PaeLogits<f64>,
        chains: &ChainMap,
        kernel: &TmKernel<f64>,
        plddt: Option<&[f64]>,
    ) -> Result<Self, MetricsError> {
        let (raw, norm) = expected_interface_pae(logits, chains, kernel.bin_centers())?;
        Ok(Self {
            ptm: Some(ptm(logits, kernel)?),
            iptm: Some(iptm(logits, chains, kernel)?),
            iptm_mean: Some(iptm_mean(logits, chains, kernel)?),
            ptm_energy: Some(ptm_energy(logits, chains, kernel)?),
            interface_pae_raw: Some(raw),
            interface_pae_norm: Some(norm),
            plddt_mean: plddt.map(|p| plddt_mean(p, chains)).transpose()?,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("metrics report is missing field {0:?}")]
    MissingField(&'static str),
}

/// Acceptance thresholds for a designed complex. All comparisons are strict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FilterThresholds {
    pub plddt_min: f64,
    pub iptm_min: f64,
    pub ptm_min: f64,
    pub interface_pae_max: f64,
}

impl FilterThresholds {
    pub const FOLDING_MODEL: Self = Self {
        plddt_min: 0.8,
        iptm_min: 0.5,
        ptm_min: 0.45,
        interface_pae_max: 0.4,
    };
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self::FOLDING_MODEL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub name: &'static str,
    /// `">"` or `"<"`.
    pub comparison: &'static str,
    pub threshold: f64,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterVerdict {
    pub pass: bool,
    pub criteria: Vec<Criterion>,
}

impl FilterVerdict {
    pub fn failed(&self) -> impl Iterator<Item = &Criterion> {
        self.criteria.iter().filter(|c| !c.pass)
    }
}

pub fn apply_folding_filters(report: &MetricsReport) -> Result<FilterVerdict, FilterError> {
    apply_filters_with(report, &FilterThresholds::FOLDING_MODEL)
}

pub fn apply_filters_with(report: &MetricsReport, t: &FilterThresholds) -> Result<FilterVerdict, FilterError> {
    let need = |v: Option<f64>, name: &'static str| v.ok_or(FilterError::MissingField(name));
    let plddt = need(report.plddt_mean, "plddt_mean")?;
    let iptm = need(report.iptm, "iptm")?;
    let ptm = need(report.ptm, "ptm")?;
    let ipae = need(report.interface_pae_norm, "interface_pae_norm")?;

    let above = |name, threshold, value: f64| Criterion {
        name,
        comparison: ">",
        threshold,
        value,
        pass: value > threshold,
    };
    let criteria = vec![
        above("plddt_mean", t.plddt_min, plddt),
        above("iptm", t.iptm_min, iptm),
        above("ptm", t.ptm_min, ptm),
        Criterion {
            name: "interface_pae_norm",
            comparison: "<",
            threshold: t.interface_pae_max,
            value: ipae,
            pass: ipae < t.interface_pae_max,
        },
    ];
    Ok(FilterVerdict {
        pass: criteria.iter().all(|c| c.pass),
        criteria,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(plddt: f64, iptm: f64, ptm: f64, ipae: f64) -> MetricsReport {
        MetricsReport {
            plddt_mean: Some(plddt),
            iptm: Some(iptm),
            ptm: Some(ptm),
            interface_pae_norm: Some(ipae),
            ..Default::default()
        }
    }

    #[test]
    fn boundary_fixtures() {
        assert!(apply_folding_filters(&report(0.9, 0.6, 0.46, 0.3)).unwrap().pass);

        let v = apply_folding_filters(&report(0.9, 0.6, 0.46, 0.4)).unwrap();
        assert!(!v.pass);
        assert_eq!(v.failed().map(|c| c.name).collect::<Vec<_>>(), ["interface_pae_norm"]);

        let v = apply_folding_filters(&report(0.8, 0.6, 0.46, 0.3)).unwrap();
        assert_eq!(v.failed().map(|c| c.name).collect::<Vec<_>>(), ["plddt_mean"]);

        let v = apply_folding_filters(&report(0.9, 0.5, 0.45, 0.3)).unwrap();
        assert_eq!(v.failed().map(|c| c.name).collect::<Vec<_>>(), ["iptm", "ptm"]);
    }

    #[test]
    fn missing_field() {
        let mut r = report(0.9, 0.6, 0.46, 0.3);
        r.ptm = None;
        assert_eq!(apply_folding_filters(&r), Err(FilterError::MissingField("ptm")));
    }
}
