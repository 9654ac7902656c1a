//! Parametric distances between fitted recordings and hierarchical
//! clustering.
//!
//! The five scalar parameters are compared by absolute difference. Each
//! transition row is compared by a quadratic form in the precision of its
//! Dirichlet prior; the Dirichlet covariance has rank `k − 1`, so the
//! precision is its pseudo-inverse. Every one of the eight component
//! matrices is scaled to a maximum of one before summing, which bounds the
//! total distance by 8.

use crate::error::{Error, Result};
use crate::tempo_model::{ThetaTempo, PRIOR_ROW_ACCEL, PRIOR_ROW_CONST, PRIOR_ROW_DECEL};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Number of component matrices summed into the total distance.
pub const COMPONENTS: usize = 8;

/// Relative eigenvalue cutoff for the Dirichlet pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Covariance of a Dirichlet(α) vector:
/// `Σᵢⱼ = (αᵢ α₀ δᵢⱼ − αᵢ αⱼ) / (α₀² (α₀ + 1))`.
pub fn dirichlet_cov(alpha: &[f64]) -> Result<DMatrix<f64>> {
    if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidInput(
            "Dirichlet concentrations must be positive; drop zero components first".into(),
        ));
    }
    let k = alpha.len();
    let a0: f64 = alpha.iter().sum();
    let denom = a0 * a0 * (a0 + 1.0);
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { alpha[i] * a0 } else { 0.0 };
        (diag - alpha[i] * alpha[j]) / denom
    }))
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let inv = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| {
            if lmax > 0.0 && *v > rel_cutoff * lmax {
                1.0 / v
            } else {
                0.0
            }
        }),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Precomputed prior precision for one transition row.
#[derive(Debug, Clone)]
pub struct RowMetric {
    omega: DMatrix<f64>,
}

impl RowMetric {
    pub fn new(alpha: &[f64]) -> Result<Self> {
        Ok(Self {
            omega: pinv_symmetric(&dirichlet_cov(alpha)?, PINV_CUTOFF),
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    /// `(p − p′)ᵀ Ω (p − p′)`.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let k = self.dim();
        if p.len() != k || q.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "row distance on a {k}-simplex got vectors of length {} and {}",
                p.len(),
                q.len()
            )));
        }
        let delta = DVector::from_iterator(k, p.iter().zip(q).map(|(a, b)| a - b));
        Ok((delta.transpose() * &self.omega * &delta)[(0, 0)].max(0.0))
    }
}

/// One-shot form of [`RowMetric::distance`].
pub fn row_distance(p: &[f64], q: &[f64], alpha: &[f64]) -> Result<f64> {
    RowMetric::new(alpha)?.distance(p, q)
}

/// Symmetric matrix of pairwise distances with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix must be {n}×{n} to match its labels"
            )));
        }
        Ok(Self { labels, values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Restrict to the given row indices, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            values: idx
                .iter()
                .map(|&i| idx.iter().map(|&j| self.values[i][j]).collect())
                .collect(),
        }
    }
}

fn component_values(theta: &ThetaTempo) -> [f64; 5] {
    [
        theta.sigma2_eps,
        theta.mu_tempo,
        theta.mu_acc,
        theta.mu_stress,
        theta.sigma2_tempo,
    ]
}

const COMPONENT_NAMES: [&str; COMPONENTS] = [
    "sigma2_eps",
    "mu_tempo",
    "mu_acc",
    "mu_stress",
    "sigma2_tempo",
    "row_const",
    "row_decel",
    "row_accel",
];

/// The eight unnormalized component matrices, in the order σ²_ε, μ_tempo,
/// μ_acc, μ_stress, σ²_tempo, constant row, deceleration row, acceleration
/// row.
pub fn component_matrices(thetas: &[ThetaTempo]) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = thetas.len();
    let metrics = [
        RowMetric::new(&PRIOR_ROW_CONST)?,
        RowMetric::new(&PRIOR_ROW_DECEL)?,
        RowMetric::new(&PRIOR_ROW_ACCEL)?,
    ];
    let mut comps = vec![vec![vec![0.0; n]; n]; COMPONENTS];
    for a in 0..n {
        for b in (a + 1)..n {
            let (ta, tb) = (&thetas[a], &thetas[b]);
            let (sa, sb) = (component_values(ta), component_values(tb));
            let mut d = [0.0; COMPONENTS];
            for k in 0..5 {
                d[k] = (sa[k] - sb[k]).abs();
            }
            d[5] = metrics[0].distance(&ta.row_const, &tb.row_const)?;
            d[6] = metrics[1].distance(&ta.row_decel, &tb.row_decel)?;
            d[7] = metrics[2].distance(&ta.row_accel, &tb.row_accel)?;
            for k in 0..COMPONENTS {
                comps[k][a][b] = d[k];
                comps[k][b][a] = d[k];
            }
        }
    }
    Ok(comps)
}

/// Sum of the max-normalized component matrices. Components that are zero
/// for every pair are skipped.
pub fn distance_matrix(labels: &[String], thetas: &[ThetaTempo]) -> Result<DistanceMatrix> {
    if labels.len() != thetas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} parameter sets",
            labels.len(),
            thetas.len()
        )));
    }
    if thetas.len() < 2 {
        return Err(Error::InvalidInput("need at least two recordings".into()));
    }
    let n = thetas.len();
    let mut total = vec![vec![0.0; n]; n];
    for (k, comp) in component_matrices(thetas)?.into_iter().enumerate() {
        let max = comp.iter().flatten().copied().fold(0.0f64, f64::max);
        if max == 0.0 {
            log::warn!(
                "component {} is identical across recordings; skipped",
                COMPONENT_NAMES[k]
            );
            continue;
        }
        for a in 0..n {
            for b in 0..n {
                total[a][b] += comp[a][b] / max;
            }
        }
    }
    DistanceMatrix::new(labels.to_vec(), total)
}

/// Screening rule for recordings with no close neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierScreen {
    /// Which nearest neighbour to measure (3 = third nearest).
    pub k: usize,
    /// Threshold on `distance / scale`.
    pub threshold: f64,
    pub scale: f64,
}

impl Default for OutlierScreen {
    fn default() -> Self {
        Self {
            k: 3,
            threshold: 0.35,
            scale: COMPONENTS as f64,
        }
    }
}

/// Indices of kept and removed recordings (both ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screening {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Remove every recording whose `k`-th nearest other recording is farther
/// than `threshold · scale`.
pub fn screen_outliers(d: &DistanceMatrix, screen: &OutlierScreen) -> Result<Screening> {
    let n = d.len();
    if screen.k == 0 || screen.k >= n {
        return Err(Error::InvalidInput(format!(
            "outlier k must lie in 1..{n}, got {}",
            screen.k
        )));
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d.get(i, j)).collect();
        row.sort_by(|a, b| a.total_cmp(b));
        if row[screen.k - 1] / screen.scale > screen.threshold {
            removed.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok(Screening { kept, removed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Average,
    #[default]
    Complete,
}

impl FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::InvalidInput(format!("unknown linkage '{other}'"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        })
    }
}

/// One agglomeration step. Cluster ids below the leaf count are leaves;
/// merge `m` creates cluster id `leaves + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaves in left-to-right drawing order; at each merge the subtree
    /// holding the smaller leaf index is drawn first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.leaves;
        if n == 0 {
            return Vec::new();
        }
        if self.merges.is_empty() {
            return vec![0];
        }
        let mut min_leaf: Vec<usize> = (0..n).collect();
        for m in &self.merges {
            min_leaf.push(min_leaf[m.left].min(min_leaf[m.right]));
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![n + self.merges.len() - 1];
        while let Some(id) = stack.pop() {
            if id < n {
                out.push(id);
            } else {
                let m = &self.merges[id - n];
                let (first, second) = if min_leaf[m.left] <= min_leaf[m.right] {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                stack.push(second);
                stack.push(first);
            }
        }
        out
    }

    /// Group labels after undoing the last `k − 1` merges. Groups are
    /// numbered from 0 in order of their smallest leaf.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.leaves;
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!("cannot cut {n} leaves into {k} clusters")));
        }
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().take(n - k).enumerate() {
            let id = n + m;
            let a = find(&mut parent, merge.left);
            let b = find(&mut parent, merge.right);
            parent[a] = id;
            parent[b] = id;
        }
        let mut names: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(n);
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            let next = names.len();
            labels.push(*names.entry(root).or_insert(next));
        }
        Ok(labels)
    }
}

/// Agglomerative clustering by Lance–Williams updates. Ties in the closest
/// pair are broken by the smallest (left, right) cluster ids.
pub fn hclust(d: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = d.len();
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            if !v.is_finite() || v < 0.0 || (v - d.get(j, i)).abs() > 1e-12 {
                return Err(Error::InvalidInput(
                    "distance matrix must be finite, non-negative and symmetric".into(),
                ));
            }
        }
    }
    // active clusters: (id, size); dist indexed by position in `active`
    let mut active: Vec<(usize, usize)> = (0..n).map(|i| (i, 1)).collect();
    let mut dist: Vec<Vec<f64>> = d.values.clone();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let v = dist[a][b];
                let ids = ordered(active[a].0, active[b].0);
                let better = match best {
                    None => true,
                    Some((bv, ba, bb)) => v < bv || (v == bv && ids < ordered(active[ba].0, active[bb].0)),
                };
                if better {
                    best = Some((v, a, b));
                }
            }
        }
        let (h, a, b) = best.expect("at least two active clusters");
        let (ida, sa) = active[a];
        let (idb, sb) = active[b];
        let (left, right) = ordered(ida, idb);
        let new_id = n + merges.len();
        merges.push(Merge {
            left,
            right,
            height: h,
            size: sa + sb,
        });
        // merged cluster takes slot `a`; slot `b` is removed
        for c in 0..active.len() {
            if c == a || c == b {
                continue;
            }
            let (dac, dbc) = (dist[a][c], dist[b][c]);
            let v = match linkage {
                Linkage::Single => dac.min(dbc),
                Linkage::Complete => dac.max(dbc),
                Linkage::Average => (sa as f64 * dac + sb as f64 * dbc) / (sa + sb) as f64,
            };
            dist[a][c] = v;
            dist[c][a] = v;
        }
        active[a] = (new_id, sa + sb);
        active.remove(b);
        dist.remove(b);
        for row in dist.iter_mut() {
            row.remove(b);
        }
    }
    Ok(Dendrogram { leaves: n, merges })
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
