use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::corpus::{BucketTable, CompiledNtd, Corpus};
use crate::ids::ScoredItem;

/// What the selection maximizes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// The (history-filtered) walk probability of each candidate.
    #[default]
    WalkProbability,
    /// A numeric article feature such as `published_at`.
    Feature(String),
}

/// Per-article lookups the constraint builder needs.
pub trait ItemAttributes {
    /// Bucket of `id` in NTD dimension `dimension`.
    fn bucket(&self, id: &str, dimension: usize) -> Option<usize>;
    /// Numeric feature `name` of `id`.
    fn feature(&self, id: &str, name: &str) -> Option<f64>;
}

/// [`ItemAttributes`] backed by a corpus and its precomputed bucket table.
#[derive(Debug, Clone, Copy)]
pub struct CorpusAttributes<'a> {
    pub corpus: &'a Corpus,
    pub table: &'a BucketTable,
}

impl ItemAttributes for CorpusAttributes<'_> {
    fn bucket(&self, id: &str, dimension: usize) -> Option<usize> {
        self.table.bucket(self.corpus.index_of(id)?, dimension)
    }

    fn feature(&self, id: &str, name: &str) -> Option<f64> {
        self.corpus.get(id)?.numeric_feature(name)
    }
}

/// Bucket vectors keyed by id; handy for hand-built instances.
impl ItemAttributes for BTreeMap<String, Vec<usize>> {
    fn bucket(&self, id: &str, dimension: usize) -> Option<usize> {
        self.get(id)?.get(dimension).copied()
    }

    fn feature(&self, _id: &str, _name: &str) -> Option<f64> {
        None
    }
}

/// The binary selection problem `A x = b`, `x ∈ {0,1}^n`, maximize `c·x`.
///
/// Row 0 of `A` is all ones with target `list_size`; then one indicator row
/// per (dimension, bucket). Each dimension's rows partition the candidates,
/// so the system is stored as one bucket index per candidate and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub(crate) candidates: Vec<String>,
    pub(crate) objective: Vec<f64>,
    pub(crate) membership: Vec<Vec<usize>>,
    pub(crate) ntd: CompiledNtd,
}

impl ConstraintSystem {
    /// Assembles a system from explicit parts. `membership[c][d]` is the
    /// bucket of candidate `c` in dimension `d`.
    pub fn from_parts(
        candidates: Vec<String>,
        objective: Vec<f64>,
        membership: Vec<Vec<usize>>,
        ntd: CompiledNtd,
    ) -> Result<Self, SamplerError> {
        if candidates.len() != objective.len() || candidates.len() != membership.len() {
            return Err(SamplerError::Shape);
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(SamplerError::DuplicateCandidate(dup.clone()));
        }
        for (c, m) in membership.iter().enumerate() {
            if m.len() != ntd.dimensions.len()
                || m.iter()
                    .zip(&ntd.dimensions)
                    .any(|(&b, d)| b >= d.counts.len())
            {
                return Err(SamplerError::MissingAttribute(candidates[c].clone()));
            }
        }
        Ok(Self {
            candidates,
            objective,
            membership,
            ntd,
        })
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    /// The objective vector `c`.
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn list_size(&self) -> usize {
        self.ntd.list_size
    }

    pub fn ntd(&self) -> &CompiledNtd {
        &self.ntd
    }

    pub fn membership(&self, candidate: usize) -> &[usize] {
        &self.membership[candidate]
    }

    pub fn row_count(&self) -> usize {
        1 + self.ntd.dimensions.iter().map(|d| d.counts.len()).sum::<usize>()
    }

    /// Row index of a (dimension, bucket label) pair.
    pub fn row_of(&self, dimension: &str, label: &str) -> Option<usize> {
        let mut row = 1;
        for d in &self.ntd.dimensions {
            if d.name == dimension {
                return d.labels.iter().position(|l| l == label).map(|b| row + b);
            }
            row += d.counts.len();
        }
        None
    }

    /// The dense 0/1 matrix `A`, row-major.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.candidates.len();
        let mut a = vec![vec![0u8; n]; self.row_count()];
        a[0].iter_mut().for_each(|x| *x = 1);
        for (c, m) in self.membership.iter().enumerate() {
            let mut offset = 1;
            for (d, &b) in m.iter().enumerate() {
                a[offset + b][c] = 1;
                offset += self.ntd.dimensions[d].counts.len();
            }
        }
        a
    }

    /// The right-hand side `b`.
    pub fn rhs(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.row_count());
        b.push(self.ntd.list_size);
        for d in &self.ntd.dimensions {
            b.extend_from_slice(&d.counts);
        }
        b
    }

    /// Same candidates with bucket targets re-rounded for `list_size`.
    pub fn with_size(&self, list_size: usize) -> Result<Self, SamplerError> {
        Ok(Self {
            candidates: self.candidates.clone(),
            objective: self.objective.clone(),
            membership: self.membership.clone(),
            ntd: self.ntd.resized(list_size)?,
        })
    }

    /// Whether the candidate indices satisfy `A x = b`.
    pub fn is_satisfied_by(&self, selected: &[usize]) -> bool {
        let mut seen = vec![false; self.candidates.len()];
        for &c in selected {
            if c >= seen.len() || core::mem::replace(&mut seen[c], true) {
                return false;
            }
        }
        if selected.len() != self.ntd.list_size {
            return false;
        }
        self.ntd.dimensions.iter().enumerate().all(|(d, dim)| {
            let mut counts = vec![0usize; dim.counts.len()];
            for &c in selected {
                counts[self.membership[c][d]] += 1;
            }
            counts == dim.counts
        })
    }
}

/// Builds the selection system over scored candidates. Every candidate must
/// have a bucket in every dimension (and the objective feature, if one is
/// named).
pub fn build_constraints(
    candidates: &[ScoredItem],
    compiled: &CompiledNtd,
    attributes: &impl ItemAttributes,
    objective: &Objective,
) -> Result<ConstraintSystem, SamplerError> {
    let dims = compiled.dimensions.len();
    let mut ids = Vec::with_capacity(candidates.len());
    let mut c = Vec::with_capacity(candidates.len());
    let mut membership = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let buckets: Option<Vec<usize>> =
            (0..dims).map(|d| attributes.bucket(&cand.id, d)).collect();
        let buckets = buckets.ok_or_else(|| SamplerError::MissingAttribute(cand.id.clone()))?;
        let value = match objective {
            Objective::WalkProbability => cand.score,
            Objective::Feature(name) => attributes
                .feature(&cand.id, name)
                .ok_or_else(|| SamplerError::MissingFeature {
                    id: cand.id.clone(),
                    feature: name.clone(),
                })?,
        };
        ids.push(cand.id.clone());
        c.push(value);
        membership.push(buckets);
    }
    ConstraintSystem::from_parts(ids, c, membership, compiled.clone())
}
