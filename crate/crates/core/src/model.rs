//! Domain types shared by every module: parameter blocks, column views,
//! graphs, datasets and the sufficient-statistic basis.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{QuasrError, Result};

/// Identifies one penalized group: a vertex block or an unordered edge block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    Vertex(usize),
    /// Always stored with `i < j`; build through [`GroupKey::edge`].
    Edge(usize, usize),
}

impl GroupKey {
    /// Canonical edge key for the unordered pair `{i, j}`.
    ///
    /// Panics on a self-loop; vertex parameters use [`GroupKey::Vertex`].
    pub fn edge(i: usize, j: usize) -> Self {
        assert_ne!(i, j, "edge key requires distinct endpoints");
        if i < j {
            GroupKey::Edge(i, j)
        } else {
            GroupKey::Edge(j, i)
        }
    }

    /// Group key for the `(i, j)` entry of the symmetric parametrization.
    pub fn pair(i: usize, j: usize) -> Self {
        if i == j {
            GroupKey::Vertex(i)
        } else {
            GroupKey::edge(i, j)
        }
    }

    /// Number of times the group appears in `sum_{i,j in V} ||theta_ij||`.
    pub fn multiplicity(&self) -> f64 {
        match self {
            GroupKey::Vertex(_) => 1.0,
            GroupKey::Edge(..) => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    RealLine,
    UnitCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Gaussian,
    LegendrePairwise,
}

/// Sufficient-statistic family.
///
/// `Gaussian` has one parameter per vertex and per edge. `LegendrePairwise`
/// uses degrees `1..=m1` of the orthonormal Legendre basis per vertex and the
/// tensor products of degrees `1..=m2` per edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub m1: usize,
    pub m2: usize,
}

impl BasisSpec {
    pub fn gaussian() -> Self {
        BasisSpec { kind: BasisKind::Gaussian, m1: 1, m2: 1 }
    }

    pub fn legendre(m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(QuasrError::InvalidArgument(format!("truncation must be at least 1, got m1={m1} m2={m2}")));
        }
        if m1.max(m2) > crate::legendre::MAX_DEGREE {
            return Err(QuasrError::InvalidArgument(format!(
                "truncation above the supported degree {}",
                crate::legendre::MAX_DEGREE
            )));
        }
        Ok(BasisSpec { kind: BasisKind::LegendrePairwise, m1, m2 })
    }

    pub fn vertex_dim(&self) -> usize {
        match self.kind {
            BasisKind::Gaussian => 1,
            BasisKind::LegendrePairwise => self.m1,
        }
    }

    pub fn edge_dim(&self) -> usize {
        match self.kind {
            BasisKind::Gaussian => 1,
            BasisKind::LegendrePairwise => self.m2 * self.m2,
        }
    }

    /// Length of a column `theta_{.,i}` for `d` variables.
    pub fn column_dim(&self, d: usize) -> usize {
        self.vertex_dim() + d.saturating_sub(1) * self.edge_dim()
    }

    pub fn support(&self) -> Support {
        match self.kind {
            BasisKind::Gaussian => Support::RealLine,
            BasisKind::LegendrePairwise => Support::UnitCube,
        }
    }

    /// Index maps placing this basis' vertex and edge entries inside a larger
    /// truncation of the same family.
    pub fn embedding_into(&self, larger: &BasisSpec) -> Result<BlockEmbedding> {
        if self.kind != larger.kind || larger.m1 < self.m1 || larger.m2 < self.m2 {
            return Err(QuasrError::InvalidArgument(format!("cannot embed {self:?} into {larger:?}")));
        }
        let vertex = (0..self.vertex_dim()).collect();
        let edge = match self.kind {
            BasisKind::Gaussian => vec![0],
            BasisKind::LegendrePairwise => {
                (0..self.m2).flat_map(|k| (0..self.m2).map(move |l| k * larger.m2 + l)).collect()
            }
        };
        Ok(BlockEmbedding { vertex, edge })
    }

    /// For each entry of column `i` under this basis, its position in column
    /// `i` under `larger`.
    pub fn column_embedding(&self, larger: &BasisSpec, d: usize, i: usize) -> Result<Vec<usize>> {
        let emb = self.embedding_into(larger)?;
        let (vd, ed) = (larger.vertex_dim(), larger.edge_dim());
        let mut out = Vec::with_capacity(self.column_dim(d));
        out.extend(emb.vertex.iter().copied());
        for j in (0..d).filter(|&j| j != i) {
            let off = column_block_offset(vd, ed, i, j);
            out.extend(emb.edge.iter().map(|p| off + p));
        }
        Ok(out)
    }
}

/// Positions of the entries of a smaller block inside the enlarged block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEmbedding {
    pub vertex: Vec<usize>,
    pub edge: Vec<usize>,
}

/// Offset of neighbor `j`'s block inside column `i`.
pub fn column_block_offset(vertex_dim: usize, edge_dim: usize, i: usize, j: usize) -> usize {
    if i == j {
        0
    } else {
        let rank = if j < i { j } else { j - 1 };
        vertex_dim + rank * edge_dim
    }
}

/// Undirected graph on `d` vertices without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn empty(d: usize) -> Self {
        Graph { d, edges: BTreeSet::new() }
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(d: usize, edges: I) -> Result<Self> {
        let mut g = Graph::empty(d);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(QuasrError::InvalidArgument(format!("self-loop at vertex {i}")));
        }
        if i >= self.d || j >= self.d {
            return Err(QuasrError::InvalidArgument(format!("edge ({i}, {j}) out of range for d={}", self.d)));
        }
        self.edges.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(i, j)| i == v || j == v).count()
    }

    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.d];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Number of unordered non-self pairs, `d(d-1)/2`.
    pub fn pair_count(&self) -> usize {
        self.d * self.d.saturating_sub(1) / 2
    }
}

/// Group-structured parameter vector.
///
/// Every vertex block is stored; edge blocks are stored only when set, and
/// an absent edge block is exactly zero. One block per unordered pair makes
/// `theta_ij = theta_ji` structural.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlocks {
    d: usize,
    vertex_dim: usize,
    edge_dim: usize,
    vertices: Vec<Vec<f64>>,
    edges: BTreeMap<(usize, usize), Vec<f64>>,
}

impl ParamBlocks {
    pub fn zeros(d: usize, vertex_dim: usize, edge_dim: usize) -> Self {
        ParamBlocks { d, vertex_dim, edge_dim, vertices: vec![vec![0.0; vertex_dim]; d], edges: BTreeMap::new() }
    }

    pub fn for_basis(d: usize, basis: &BasisSpec) -> Self {
        Self::zeros(d, basis.vertex_dim(), basis.edge_dim())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vertex_dim(&self) -> usize {
        self.vertex_dim
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn column_dim(&self) -> usize {
        self.vertex_dim + self.d.saturating_sub(1) * self.edge_dim
    }

    fn block_len(&self, key: GroupKey) -> usize {
        match key {
            GroupKey::Vertex(_) => self.vertex_dim,
            GroupKey::Edge(..) => self.edge_dim,
        }
    }

    fn check_key(&self, key: GroupKey) -> Result<()> {
        let ok = match key {
            GroupKey::Vertex(i) => i < self.d,
            GroupKey::Edge(i, j) => i < j && j < self.d,
        };
        if ok {
            Ok(())
        } else {
            Err(QuasrError::InvalidArgument(format!("group {key:?} invalid for d={}", self.d)))
        }
    }

    /// Stored block, or `None` for an absent (zero) edge block.
    pub fn block(&self, key: GroupKey) -> Option<&[f64]> {
        match key {
            GroupKey::Vertex(i) => self.vertices.get(i).map(Vec::as_slice),
            GroupKey::Edge(i, j) => self.edges.get(&(i, j)).map(Vec::as_slice),
        }
    }

    /// Block values with absent blocks materialized as zeros.
    pub fn block_values(&self, key: GroupKey) -> Vec<f64> {
        self.block(key).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; self.block_len(key)])
    }

    pub fn set_block(&mut self, key: GroupKey, values: Vec<f64>) -> Result<()> {
        self.check_key(key)?;
        if values.len() != self.block_len(key) {
            return Err(QuasrError::DimensionMismatch(format!(
                "block {key:?} expects {} values, got {}",
                self.block_len(key),
                values.len()
            )));
        }
        match key {
            GroupKey::Vertex(i) => self.vertices[i] = values,
            GroupKey::Edge(i, j) => {
                self.edges.insert((i, j), values);
            }
        }
        Ok(())
    }

    /// Mutable access, inserting a zero edge block when absent.
    pub fn block_mut(&mut self, key: GroupKey) -> &mut [f64] {
        match key {
            GroupKey::Vertex(i) => &mut self.vertices[i],
            GroupKey::Edge(i, j) => {
                let len = self.edge_dim;
                self.edges.entry((i, j)).or_insert_with(|| vec![0.0; len])
            }
        }
    }

    /// Drops stored edge blocks that are exactly zero.
    pub fn prune_zeros(&mut self) {
        self.edges.retain(|_, v| v.iter().any(|&x| x != 0.0));
    }

    /// Every vertex group followed by every stored edge group, in key order.
    pub fn groups(&self) -> impl Iterator<Item = (GroupKey, &[f64])> + '_ {
        let vertices = self.vertices.iter().enumerate().map(|(i, v)| (GroupKey::Vertex(i), v.as_slice()));
        let edges = self.edges.iter().map(|(&(i, j), v)| (GroupKey::Edge(i, j), v.as_slice()));
        vertices.chain(edges)
    }

    pub fn column(&self, i: usize) -> ColumnView<'_> {
        assert!(i < self.d, "column {i} out of range");
        ColumnView { owner: self, i }
    }

    /// Gathers `theta_{.,i}` into a dense vector in column layout.
    pub fn column_vector(&self, i: usize) -> DVector<f64> {
        let view = self.column(i);
        DVector::from_iterator(view.len(), (0..view.len()).map(|k| view.entry(k)))
    }

    /// Writes entry `u` of neighbor `j`'s block as seen from column `i`.
    pub fn set_column_entry(&mut self, i: usize, j: usize, u: usize, value: f64) {
        self.block_mut(GroupKey::pair(i, j))[u] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.groups().flat_map(|(_, v)| v.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest elementwise difference, treating absent blocks as zero.
    pub fn max_abs_diff(&self, other: &ParamBlocks) -> f64 {
        assert_eq!(
            (self.d, self.vertex_dim, self.edge_dim),
            (other.d, other.vertex_dim, other.edge_dim),
            "parameter layouts differ"
        );
        let mut keys: BTreeSet<GroupKey> = self.groups().map(|(k, _)| k).collect();
        keys.extend(other.groups().map(|(k, _)| k));
        keys.into_iter()
            .map(|k| {
                let a = self.block_values(k);
                let b = other.block_values(k);
                a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .fold(0.0, f64::max)
    }

    /// `rho*`: smallest max-norm among nonzero edge blocks.
    pub fn min_edge_signal(&self) -> Option<f64> {
        self.edges
            .values()
            .map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .filter(|&m| m > 0.0)
            .min_by(f64::total_cmp)
    }

    /// `kappa_1`: largest absolute column sum over the column layout.
    pub fn max_column_l1(&self) -> f64 {
        (0..self.d).map(|i| self.column_vector(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Gaussian parameters from a symmetric precision matrix.
    pub fn from_precision(omega: &DMatrix<f64>) -> Result<Self> {
        let d = omega.nrows();
        if omega.ncols() != d {
            return Err(QuasrError::DimensionMismatch("precision matrix must be square".into()));
        }
        let mut theta = ParamBlocks::zeros(d, 1, 1);
        for i in 0..d {
            theta.vertices[i][0] = omega[(i, i)];
            for j in (i + 1)..d {
                let v = 0.5 * (omega[(i, j)] + omega[(j, i)]);
                if v != 0.0 {
                    theta.edges.insert((i, j), vec![v]);
                }
            }
        }
        Ok(theta)
    }

    /// Inverse of [`ParamBlocks::from_precision`]; requires unit block lengths.
    pub fn to_precision(&self) -> Result<DMatrix<f64>> {
        if self.vertex_dim != 1 || self.edge_dim != 1 {
            return Err(QuasrError::DimensionMismatch("precision view requires one parameter per block".into()));
        }
        let mut omega = DMatrix::zeros(self.d, self.d);
        for i in 0..self.d {
            omega[(i, i)] = self.vertices[i][0];
        }
        for (&(i, j), v) in &self.edges {
            omega[(i, j)] = v[0];
            omega[(j, i)] = v[0];
        }
        Ok(omega)
    }

    /// Re-lays the parameters inside a larger truncation, filling new entries with zeros.
    pub fn zero_padded(&self, embedding: &BlockEmbedding, vertex_dim: usize, edge_dim: usize) -> Self {
        let mut out = ParamBlocks::zeros(self.d, vertex_dim, edge_dim);
        for (i, v) in self.vertices.iter().enumerate() {
            for (k, &x) in v.iter().enumerate() {
                out.vertices[i][embedding.vertex[k]] = x;
            }
        }
        for (&key, v) in &self.edges {
            let mut block = vec![0.0; edge_dim];
            for (k, &x) in v.iter().enumerate() {
                block[embedding.edge[k]] = x;
            }
            out.edges.insert(key, block);
        }
        out
    }
}

/// Read-only projection of [`ParamBlocks`] onto column `i`: the vertex block
/// of `i` followed by the edge block of every `j != i` in ascending `j`.
#[derive(Debug, Clone, Copy)]
pub struct ColumnView<'a> {
    owner: &'a ParamBlocks,
    i: usize,
}

impl<'a> ColumnView<'a> {
    pub fn index(&self) -> usize {
        self.i
    }

    pub fn len(&self) -> usize {
        self.owner.column_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(block key, offset)` for every block in column order.
    pub fn layout(&self) -> Vec<(GroupKey, usize)> {
        let (vd, ed) = (self.owner.vertex_dim, self.owner.edge_dim);
        (0..self.owner.d).map(|j| (GroupKey::pair(self.i, j), column_block_offset(vd, ed, self.i, j))).collect()
    }

    /// Entry `u` of neighbor `j`'s block (`j == i` addresses the vertex block).
    pub fn get(&self, j: usize, u: usize) -> f64 {
        self.owner.block(GroupKey::pair(self.i, j)).map(|b| b[u]).unwrap_or(0.0)
    }

    /// Entry at flat column position `k`.
    pub fn entry(&self, k: usize) -> f64 {
        let (vd, ed) = (self.owner.vertex_dim, self.owner.edge_dim);
        if k < vd {
            return self.get(self.i, k);
        }
        let rank = (k - vd) / ed;
        let j = if rank < self.i { rank } else { rank + 1 };
        self.get(j, (k - vd) % ed)
    }
}

/// `||theta_g||_2` for every vertex group and every stored edge group.
pub fn group_norms(theta: &ParamBlocks) -> BTreeMap<GroupKey, f64> {
    theta.groups().map(|(k, v)| (k, l2_norm(v))).collect()
}

/// Group penalty `sum_{i,j in V} ||theta_ij||_2` (edges count for both orientations).
///
/// With `penalize_vertices == false` the vertex groups are exempt.
pub fn group_penalty(theta: &ParamBlocks, penalize_vertices: bool) -> f64 {
    theta
        .groups()
        .filter(|(k, _)| penalize_vertices || matches!(k, GroupKey::Edge(..)))
        .map(|(k, v)| k.multiplicity() * l2_norm(v))
        .sum()
}

/// Edges whose group norm exceeds `tol`.
pub fn edge_set_of(theta: &ParamBlocks, tol: f64) -> Graph {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let mut g = Graph::empty(theta.d);
    for (k, v) in theta.groups() {
        if let GroupKey::Edge(i, j) = k {
            if l2_norm(v) > tol {
                g.edges.insert((i, j));
            }
        }
    }
    g
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// n x d sample matrix with support metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    support: Support,
    standardized: bool,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, support: Support) -> Result<Self> {
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(QuasrError::InvalidArgument(format!("non-finite value {bad}")));
        }
        if support == Support::UnitCube {
            if let Some(&bad) = values.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                return Err(QuasrError::Support(format!("value {bad} outside [0, 1]")));
            }
        }
        Ok(Dataset { values, support, standardized: false })
    }

    pub fn from_rows(rows: &[Vec<f64>], support: Support) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(QuasrError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |r, c| rows[r][c]), support)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.values.row(r).iter().copied().collect()
    }

    /// Centers each column and scales it to unit variance (1/n normalization),
    /// so the sample second-moment matrix has a unit diagonal.
    pub fn standardize(&self) -> Result<Dataset> {
        if self.n() == 0 {
            return Err(QuasrError::EmptyData);
        }
        let n = self.n() as f64;
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd == 0.0 {
                return Err(QuasrError::InvalidArgument("constant column cannot be standardized".into()));
            }
            col /= sd;
        }
        Ok(Dataset { values, support: Support::RealLine, standardized: true })
    }

    /// First `n_first` rows and the remainder.
    pub fn split_at(&self, n_first: usize) -> (Dataset, Dataset) {
        let n_first = n_first.min(self.n());
        let head = self.values.rows(0, n_first).into_owned();
        let tail = self.values.rows(n_first, self.n() - n_first).into_owned();
        (
            Dataset { values: head, support: self.support, standardized: false },
            Dataset { values: tail, support: self.support, standardized: false },
        )
    }
}

/// Solved parameters at one regularization level plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub lambda: f64,
    pub theta: ParamBlocks,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Last relative parameter change seen by the stopping rule.
    pub last_change: f64,
    /// Penalized objective after each sweep, when requested.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn edges(&self) -> Graph {
        edge_set_of(&self.theta, 0.0)
    }

    /// Turns an unconverged fit into [`QuasrError::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(QuasrError::NotConverged { iterations: self.iterations, last_change: self.last_change })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edge_set_examples() {
        let mut theta = ParamBlocks::zeros(3, 1, 2);
        assert_eq!(edge_set_of(&theta, 0.0).edge_count(), 0);
        theta.set_block(GroupKey::edge(1, 2), vec![0.3, 0.0]).unwrap();
        let g = edge_set_of(&theta, 0.0);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 2)]);

        theta.set_block(GroupKey::edge(1, 2), vec![1e-9, 0.0]).unwrap();
        assert_eq!(edge_set_of(&theta, 1e-8).edge_count(), 0);
    }

    #[test]
    fn explicit_zero_blocks_do_not_add_edges() {
        let mut theta = ParamBlocks::zeros(4, 1, 1);
        theta.set_block(GroupKey::edge(0, 3), vec![0.7]).unwrap();
        let before = edge_set_of(&theta, 0.0);
        theta.set_block(GroupKey::edge(1, 2), vec![0.0]).unwrap();
        theta.block_mut(GroupKey::edge(0, 2));
        assert_eq!(edge_set_of(&theta, 0.0), before);
    }

    #[test]
    fn group_norm_examples() {
        let mut theta = ParamBlocks::zeros(3, 2, 2);
        theta.set_block(GroupKey::edge(1, 2), vec![3.0, 4.0]).unwrap();
        assert_eq!(group_norms(&theta)[&GroupKey::Edge(1, 2)], 5.0);

        let zero = ParamBlocks::zeros(3, 2, 2);
        assert!(group_norms(&zero).values().all(|&v| v == 0.0));
        assert_eq!(group_penalty(&zero, true), 0.0);

        let eye = ParamBlocks::from_precision(&DMatrix::identity(2, 2)).unwrap();
        let norms = group_norms(&eye);
        assert_eq!(norms[&GroupKey::Vertex(0)], 1.0);
        assert_eq!(norms[&GroupKey::Vertex(1)], 1.0);
        assert_eq!(eye.block_values(GroupKey::edge(0, 1)), vec![0.0]);
        assert_eq!(group_penalty(&eye, true), 2.0);
    }

    #[test]
    fn column_layout_and_length() {
        let theta = ParamBlocks::zeros(4, 3, 4);
        let view = theta.column(2);
        assert_eq!(view.len(), 3 + 3 * 4);
        let layout = view.layout();
        assert_eq!(layout[0], (GroupKey::edge(0, 2), 3));
        assert_eq!(layout[2], (GroupKey::Vertex(2), 0));
        assert_eq!(layout[3], (GroupKey::edge(2, 3), 3 + 2 * 4));
    }

    #[test]
    fn precision_round_trip() {
        let omega = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.0, -0.5, 1.5, 0.25, 0.0, 0.25, 1.0]);
        let theta = ParamBlocks::from_precision(&omega).unwrap();
        assert_eq!(theta.to_precision().unwrap(), omega);
        assert_eq!(edge_set_of(&theta, 0.0).edge_count(), 2);
        assert_eq!(theta.column_vector(1).as_slice(), &[1.5, -0.5, 0.25]);
    }

    #[test]
    fn graph_rejects_self_loops_and_out_of_range() {
        let mut g = Graph::empty(3);
        assert!(g.add_edge(1, 1).is_err());
        assert!(g.add_edge(0, 3).is_err());
        g.add_edge(2, 0).unwrap();
        assert!(g.contains(0, 2) && g.contains(2, 0));
        assert_eq!(g.max_degree(), 1);
    }

    #[test]
    fn unit_cube_dataset_validation() {
        assert!(Dataset::from_rows(&[vec![0.2, 1.2]], Support::UnitCube).is_err());
        assert!(Dataset::from_rows(&[vec![0.2, 1.0]], Support::UnitCube).is_ok());
    }

    #[test]
    fn standardized_moments() {
        let rows: Vec<Vec<f64>> = (0..50).map(|r| vec![r as f64, (r * r) as f64 % 7.0 + 0.5]).collect();
        let data = Dataset::from_rows(&rows, Support::RealLine).unwrap().standardize().unwrap();
        assert!(data.is_standardized());
        for col in data.values().column_iter() {
            let mean = col.sum() / 50.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_places_old_entries() {
        let small = BasisSpec::legendre(1, 2).unwrap();
        let big = BasisSpec::legendre(3, 3).unwrap();
        let emb = small.embedding_into(&big).unwrap();
        assert_eq!(emb.vertex, vec![0]);
        assert_eq!(emb.edge, vec![0, 1, 3, 4]);
        assert!(big.embedding_into(&small).is_err());
    }

    fn arb_theta() -> impl Strategy<Value = (ParamBlocks, ParamBlocks)> {
        (2usize..5, 1usize..3, 1usize..3).prop_flat_map(|(d, vd, ed)| {
            let n = d * vd + d * (d - 1) / 2 * ed;
            (proptest::collection::vec(-5.0f64..5.0, n), proptest::collection::vec(-5.0f64..5.0, n))
                .prop_map(move |(a, b)| (fill(d, vd, ed, &a), fill(d, vd, ed, &b)))
        })
    }

    fn fill(d: usize, vd: usize, ed: usize, vals: &[f64]) -> ParamBlocks {
        let mut theta = ParamBlocks::zeros(d, vd, ed);
        let mut it = vals.iter().copied();
        for i in 0..d {
            theta.set_block(GroupKey::Vertex(i), it.by_ref().take(vd).collect()).unwrap();
        }
        for i in 0..d {
            for j in (i + 1)..d {
                theta.set_block(GroupKey::edge(i, j), it.by_ref().take(ed).collect()).unwrap();
            }
        }
        theta
    }

    fn scaled(theta: &ParamBlocks, a: f64) -> ParamBlocks {
        let mut out = theta.clone();
        let keys: Vec<_> = theta.groups().map(|(k, _)| k).collect();
        for k in keys {
            out.block_mut(k).iter_mut().for_each(|x| *x *= a);
        }
        out
    }

    fn summed(x: &ParamBlocks, y: &ParamBlocks) -> ParamBlocks {
        let mut out = x.clone();
        for (k, v) in y.groups() {
            out.block_mut(k).iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        out
    }

    proptest! {
        #[test]
        fn column_write_is_visible_from_partner(
            (d, ed, i, j, u) in (2usize..6, 1usize..5).prop_flat_map(|(d, ed)| {
                (Just(d), Just(ed), 0..d, 1..d, 0..ed).prop_map(|(d, ed, i, shift, u)| (d, ed, i, (i + shift) % d, u))
            }),
            value in -10.0f64..10.0
        ) {
            let mut theta = ParamBlocks::zeros(d, 2, ed);
            theta.set_column_entry(i, j, u, value);
            prop_assert_eq!(theta.column(j).get(i, u), value);
            prop_assert_eq!(theta.column(i).get(j, u), value);
            let off_j = column_block_offset(2, ed, j, i);
            prop_assert_eq!(theta.column_vector(j)[off_j + u], value);
        }

        #[test]
        fn penalty_is_a_norm((x, y) in arb_theta(), a in -3.0f64..3.0) {
            let r = |t: &ParamBlocks| group_penalty(t, true);
            prop_assert!((r(&scaled(&x, a)) - a.abs() * r(&x)).abs() <= 1e-12 * (1.0 + r(&x)));
            prop_assert!(r(&summed(&x, &y)) <= r(&x) + r(&y) + 1e-12);
        }
    }
}
