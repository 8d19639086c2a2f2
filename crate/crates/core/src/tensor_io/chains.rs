use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainMapError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("cannot parse chain map: {0}")]
    Parse(String),
    #[error("chain lengths sum to {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("binder chain {0:?} is not a declared chain")]
    UnknownBinderLabel(String),
    #[error("target chain {0:?} is not a declared chain")]
    UnknownTargetLabel(String),
    #[error("no target chains declared")]
    EmptyTargets,
    #[error("chain label {0:?} declared more than once")]
    DuplicateChainLabel(String),
    #[error("binder chain {0:?} is also listed as a target")]
    BinderIsTarget(String),
    #[error("chain {0:?} has no residues")]
    EmptyChain(String),
}

/// One declared chain: label and residue count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub label: String,
    pub length: usize,
}

impl ChainSpec {
    pub fn new(label: impl Into<String>, length: usize) -> Self {
        Self {
            label: label.into(),
            length,
        }
    }
}

#[derive(Deserialize)]
struct ChainMapDoc {
    chains: Vec<ChainSpec>,
    binder: String,
    targets: Vec<String>,
}

/// Per-residue chain assignment with a designated binder chain and one or
/// more target chains.
///
/// The interface set is the set of *ordered* residue pairs `(i, j)` whose
/// chains differ; it always contains `(j, i)` alongside `(i, j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainMap {
    labels: Vec<String>,
    chain_of: Vec<usize>,
    lengths: Vec<usize>,
    binder: usize,
    targets: Vec<usize>,
}

impl ChainMap {
    /// Contiguous layout: residues are assigned to chains in declaration order.
    pub fn new(chains: &[ChainSpec], binder: &str, targets: &[&str]) -> Result<Self, ChainMapError> {
        let mut chain_of = Vec::new();
        for (c, spec) in chains.iter().enumerate() {
            chain_of.extend(std::iter::repeat_n(c, spec.length));
        }
        let labels: Vec<String> = chains.iter().map(|c| c.label.clone()).collect();
        Self::from_assignment(labels, chain_of, binder, targets)
    }

    /// Two-chain shorthand: binder `A` of `binder_len` residues followed by
    /// target `B`.
    pub fn binder_target(binder_len: usize, target_len: usize) -> Result<Self, ChainMapError> {
        Self::new(
            &[ChainSpec::new("A", binder_len), ChainSpec::new("B", target_len)],
            "A",
            &["B"],
        )
    }

    /// Arbitrary assignment, interleaving allowed. File input always goes
    /// through [`ChainMap::new`]; this exists for constructed instances.
    pub fn from_assignment(
        labels: Vec<String>,
        chain_of: Vec<usize>,
        binder: &str,
        targets: &[&str],
    ) -> Result<Self, ChainMapError> {
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ChainMapError::DuplicateChainLabel(l.clone()));
            }
        }
        let find = |l: &str| labels.iter().position(|x| x == l);
        let binder_idx = find(binder).ok_or_else(|| ChainMapError::UnknownBinderLabel(binder.to_string()))?;
        if targets.is_empty() {
            return Err(ChainMapError::EmptyTargets);
        }
        let mut target_idx = Vec::with_capacity(targets.len());
        for &t in targets {
            let idx = find(t).ok_or_else(|| ChainMapError::UnknownTargetLabel(t.to_string()))?;
            if idx == binder_idx {
                return Err(ChainMapError::BinderIsTarget(t.to_string()));
            }
            if !target_idx.contains(&idx) {
                target_idx.push(idx);
            }
        }
        let mut counts = vec![0usize; labels.len()];
        for &c in &chain_of {
            counts[c] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(ChainMapError::EmptyChain(labels[c].clone()));
        }
        Ok(Self {
            labels,
            chain_of,
            lengths: counts,
            binder: binder_idx,
            targets: target_idx,
        })
    }

    /// Total residue count `L`.
    pub fn len(&self) -> usize {
        self.chain_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_of.is_empty()
    }

    pub fn chain_index(&self, residue: usize) -> usize {
        self.chain_of[residue]
    }

    pub fn label_of(&self, residue: usize) -> &str {
        &self.labels[self.chain_of[residue]]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn binder_label(&self) -> &str {
        &self.labels[self.binder]
    }

    pub fn target_labels(&self) -> Vec<&str> {
        self.targets.iter().map(|&t| self.labels[t].as_str()).collect()
    }

    #[inline]
    pub fn is_cross(&self, i: usize, j: usize) -> bool {
        self.chain_of[i] != self.chain_of[j]
    }

    pub fn is_binder(&self, residue: usize) -> bool {
        self.chain_of[residue] == self.binder
    }

    pub fn is_target(&self, residue: usize) -> bool {
        self.targets.contains(&self.chain_of[residue])
    }

    pub fn binder_residues(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_binder(i)).collect()
    }

    pub fn target_residues(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_target(i)).collect()
    }

    pub fn chain_lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Residues on a different chain from `i` (the set `J_i`).
    pub fn partners(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let ci = self.chain_of[i];
        (0..self.len()).filter(move |&j| self.chain_of[j] != ci)
    }

    pub fn partner_count(&self, i: usize) -> usize {
        self.len() - self.lengths[self.chain_of[i]]
    }

    /// Ordered cross-chain pairs.
    pub fn interface_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| self.partners(i).map(move |j| (i, j)))
    }

    /// `|I| = L^2 - sum_c L_c^2`.
    pub fn interface_len(&self) -> usize {
        let l = self.len();
        l * l - self.lengths.iter().map(|n| n * n).sum::<usize>()
    }
}

pub fn parse_chain_map(text: &str, expected_len: usize) -> Result<ChainMap, ChainMapError> {
    let doc: ChainMapDoc = toml::from_str(text).map_err(|e| ChainMapError::Parse(e.message().to_string()))?;
    let found: usize = doc.chains.iter().map(|c| c.length).sum();
    if found != expected_len {
        return Err(ChainMapError::LengthMismatch {
            expected: expected_len,
            found,
        });
    }
    let targets: Vec<&str> = doc.targets.iter().map(String::as_str).collect();
    ChainMap::new(&doc.chains, &doc.binder, &targets)
}

/// Read a TOML chain-map document:
///
/// ```toml
/// binder = "A"
/// targets = ["B"]
/// chains = [{ label = "A", length = 2 }, { label = "B", length = 3 }]
/// ```
pub fn read_chain_map(path: impl AsRef<Path>, expected_len: usize) -> Result<ChainMap, ChainMapError> {
    let text = fs::read_to_string(path).map_err(|e| ChainMapError::Io(e.to_string()))?;
    parse_chain_map(&text, expected_len)
}
