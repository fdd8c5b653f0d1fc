//! Penalty norms: l1, weighted l1 and non-overlapping group norms, with their
//! duals and proximity operators.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrexError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    #[serde(rename = "weighted")]
    WeightedL1,
    Group,
}

/// A penalty `Omega` on `R^p`.
///
/// Internally every kind is a list of groups with weights: l1 is singleton
/// groups with unit weights, weighted l1 is singleton groups, and the group
/// norm is `sum_G w_G ||beta_G||_2`. Files use 1-based indices for the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormSpecFile", into = "NormSpecFile")]
pub struct NormSpec {
    kind: NormKind,
    dim: usize,
    weights: Vec<f64>,
    partition: Vec<Vec<usize>>,
}

impl NormSpec {
    pub fn l1(dim: usize) -> Self {
        Self {
            kind: NormKind::L1,
            dim,
            weights: vec![1.0; dim],
            partition: (0..dim).map(|j| vec![j]).collect(),
        }
    }

    pub fn weighted_l1(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let dim = weights.len();
        Ok(Self { kind: NormKind::WeightedL1, dim, weights, partition: (0..dim).map(|j| vec![j]).collect() })
    }

    /// Group norm over a 0-based partition of `0..dim`.
    pub fn group(dim: usize, partition: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        if weights.len() != partition.len() {
            return Err(TrexError::Parameter(format!(
                "{} group weights for {} groups",
                weights.len(),
                partition.len()
            )));
        }
        let mut seen = vec![false; dim];
        for g in &partition {
            if g.is_empty() {
                return Err(TrexError::Parameter("empty group".into()));
            }
            for &j in g {
                if j >= dim {
                    return Err(TrexError::Parameter(format!("index {} out of range 1..={dim}", j + 1)));
                }
                if seen[j] {
                    return Err(TrexError::Parameter(format!("index {} appears in two groups", j + 1)));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(TrexError::Parameter(format!("index {} is not covered by any group", j + 1)));
        }
        Ok(Self { kind: NormKind::Group, dim, weights, partition })
    }

    /// Contiguous groups of `size` (the last one possibly shorter), unit weights.
    pub fn contiguous_groups(dim: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(TrexError::Parameter("group size must be positive".into()));
        }
        let partition: Vec<Vec<usize>> =
            (0..dim).collect::<Vec<_>>().chunks(size).map(|c| c.to_vec()).collect();
        let weights = vec![1.0; partition.len()];
        Self::group(dim, partition, weights)
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// 0-based partition; singletons for the l1 kinds.
    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn num_groups(&self) -> usize {
        self.partition.len()
    }

    /// Whether every group is a single coordinate (l1 or weighted l1 in disguise).
    pub fn is_separable(&self) -> bool {
        self.partition.iter().all(|g| g.len() == 1)
    }

    /// Per-coordinate weights for separable norms.
    pub fn coordinate_weights(&self) -> Option<Vec<f64>> {
        if !self.is_separable() {
            return None;
        }
        let mut w = vec![0.0; self.dim];
        for (g, &wg) in self.partition.iter().zip(&self.weights) {
            w[g[0]] = wg;
        }
        Some(w)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.partition.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Restricts the norm to the given coordinates (in order). Groups must lie
    /// entirely inside or entirely outside `keep`; groups outside are dropped.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        self.restrict_with_map(keep).map(|(spec, _)| spec)
    }

    /// Like [`restrict`](Self::restrict), also returning for each kept group
    /// its index in `self`.
    pub fn restrict_with_map(&self, keep: &[usize]) -> Result<(Self, Vec<usize>)> {
        let mut pos = vec![None; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.dim {
                return Err(TrexError::Parameter(format!("index {} out of range", old + 1)));
            }
            pos[old] = Some(new);
        }
        let mut partition: Vec<Vec<usize>> = Vec::new();
        let mut weights = Vec::new();
        let mut origin = Vec::new();
        for (k, (g, w)) in self.groups().enumerate() {
            let mapped: Vec<Option<usize>> = g.iter().map(|&j| pos[j]).collect();
            if mapped.iter().all(Option::is_some) {
                partition.push(mapped.into_iter().flatten().collect());
                weights.push(w);
                origin.push(k);
            } else if mapped.iter().any(Option::is_some) {
                return Err(TrexError::Parameter(
                    "a penalty group straddles penalized and unpenalized coordinates".into(),
                ));
            }
        }
        let dim = keep.len();
        let spec = match self.kind {
            NormKind::L1 => Self::l1(dim),
            NormKind::WeightedL1 => {
                let mut w = vec![0.0; dim];
                for (g, wg) in partition.iter().zip(weights) {
                    w[g[0]] = wg;
                }
                Self::weighted_l1(w)?
            }
            NormKind::Group => Self::group(dim, partition, weights)?,
        };
        Ok((spec, origin))
    }

    fn check_len(&self, v: &DVector<f64>) {
        assert_eq!(v.len(), self.dim, "vector length does not match norm dimension");
    }

    /// `Omega(beta)`.
    pub fn omega(&self, beta: &DVector<f64>) -> f64 {
        self.check_len(beta);
        self.groups().map(|(g, w)| w * block_norm(beta, g)).sum()
    }

    /// Dual norm `Omega*(v) = sup { v^T b : Omega(b) <= 1 }`.
    pub fn omega_dual(&self, v: &DVector<f64>) -> f64 {
        self.check_len(v);
        self.groups().fold(0.0, |m, (g, w)| m.max(block_norm(v, g) / w))
    }

    /// Index of the group attaining the dual norm (first one on ties).
    pub fn dual_argmax(&self, v: &DVector<f64>) -> usize {
        self.check_len(v);
        let mut best = (0, f64::NEG_INFINITY);
        for (k, (g, w)) in self.groups().enumerate() {
            let val = block_norm(v, g) / w;
            if val > best.1 {
                best = (k, val);
            }
        }
        best.0
    }

    /// `argmin_z 1/2 ||z - v||^2 + t Omega(z)`.
    pub fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        self.check_len(v);
        assert!(t >= 0.0, "prox step must be nonnegative");
        let mut z = v.clone();
        for (g, w) in self.groups() {
            let thr = t * w;
            if g.len() == 1 {
                let j = g[0];
                z[j] = soft_threshold(v[j], thr);
            } else {
                let norm = block_norm(v, g);
                // Zero block at norm 0 (limit of the shrinkage factor).
                let factor = if norm > thr { 1.0 - thr / norm } else { 0.0 };
                for &j in g {
                    z[j] = v[j] * factor;
                }
            }
        }
        z
    }

    /// `Omega*(v) - bound`; positive means the dual constraint is violated.
    pub fn dual_feasibility_gap(&self, v: &DVector<f64>, bound: f64) -> f64 {
        self.omega_dual(v) - bound
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    match w.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        Some(bad) => Err(TrexError::Parameter(format!("weights must be positive and finite, got {bad}"))),
        None => Ok(()),
    }
}

fn block_norm(v: &DVector<f64>, g: &[usize]) -> f64 {
    if g.len() == 1 {
        v[g[0]].abs()
    } else {
        g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt()
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Serialize, Deserialize)]
struct NormSpecFile {
    kind: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    weights: Vec<f64>,
    /// 1-based index lists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    partition: Vec<Vec<usize>>,
}

impl TryFrom<NormSpecFile> for NormSpec {
    type Error = TrexError;

    fn try_from(f: NormSpecFile) -> Result<Self> {
        match f.kind {
            NormKind::L1 => {
                let dim = f.dim.ok_or_else(|| TrexError::Parameter("l1 norm needs `dim`".into()))?;
                Ok(Self::l1(dim))
            }
            NormKind::WeightedL1 => Self::weighted_l1(f.weights),
            NormKind::Group => {
                let mut partition = Vec::with_capacity(f.partition.len());
                for g in f.partition {
                    if g.contains(&0) {
                        return Err(TrexError::Parameter("partition indices are 1-based".into()));
                    }
                    partition.push(g.into_iter().map(|j| j - 1).collect::<Vec<_>>());
                }
                let dim = f.dim.unwrap_or_else(|| partition.iter().map(Vec::len).sum());
                let weights = if f.weights.is_empty() { vec![1.0; partition.len()] } else { f.weights };
                Self::group(dim, partition, weights)
            }
        }
    }
}

impl From<NormSpec> for NormSpecFile {
    fn from(s: NormSpec) -> Self {
        match s.kind {
            NormKind::L1 => NormSpecFile { kind: s.kind, dim: Some(s.dim), weights: vec![], partition: vec![] },
            NormKind::WeightedL1 => NormSpecFile { kind: s.kind, dim: None, weights: s.weights, partition: vec![] },
            NormKind::Group => NormSpecFile {
                kind: s.kind,
                dim: Some(s.dim),
                weights: s.weights,
                partition: s.partition.iter().map(|g| g.iter().map(|j| j + 1).collect()).collect(),
            },
        }
    }
}
