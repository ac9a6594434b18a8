//! Penalty graphs over features.
//!
//! A [`PenaltyGraph`] is a sparse symmetric PSD matrix `G`; the solver adds
//! `(λG/2) βᵀGβ` to the objective. Lattice Laplacians make that term the sum of
//! squared coefficient differences across neighbouring voxels.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor_io::LatticeShape;

/// Undirected weighted adjacency with per-node neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self { rows: vec![Vec::new(); p] }
    }

    /// Build from undirected edges; each edge is stored in both directions and
    /// repeated edges accumulate their weights.
    pub fn from_edges(p: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = Self::empty(p);
        for &(i, j, w) in edges {
            if i >= p || j >= p {
                return Err(Error::Graph(format!("edge ({i},{j}) out of range for {p} nodes")));
            }
            if i == j {
                return Err(Error::Graph(format!("self-edge at node {i}")));
            }
            if !w.is_finite() {
                return Err(Error::Graph(format!("edge ({i},{j}) has non-finite weight")));
            }
            adj.add_directed(i, j, w);
            adj.add_directed(j, i, w);
        }
        Ok(adj)
    }

    /// Build from explicit neighbour lists without symmetrizing. Used to hand
    /// externally produced structures to [`laplacian`], which validates them.
    pub fn from_neighbor_lists(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    fn add_directed(&mut self, i: usize, j: usize, w: f64) {
        match self.rows[i].iter_mut().find(|(k, _)| *k == j) {
            Some(e) => e.1 += w,
            None => self.rows[i].push((j, w)),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, w)| w).sum()
    }

    /// Edges with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().filter(move |&&(j, _)| i < j).map(move |&(j, w)| (i, j, w)))
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| {
            r.iter().all(|&(j, w)| {
                j < self.rows.len() && self.rows[j].iter().any(|&(k, v)| k == i && v == w)
            })
        })
    }
}

/// Unit-weight lattice adjacency over masked-in voxels: neighbours differ by
/// ±1 in exactly one of x, y, z (and t when `connect_time`).
pub fn lattice_adjacency(shape: &LatticeShape, connect_time: bool) -> Result<Adjacency> {
    let p = shape.p();
    if p == 0 {
        return Err(Error::Graph("mask selects no voxels".into()));
    }
    let dims = shape.dims();
    let axes = if connect_time { 4 } else { 3 };
    let mut adj = Adjacency::empty(p);
    for f in 0..p {
        let c = shape.coords(shape.voxel_of(f));
        for axis in 0..axes {
            // Forward neighbour only; the edge is added in both directions.
            if c[axis] + 1 < dims[axis] {
                let mut d = c;
                d[axis] += 1;
                if let Some(g) = shape.feature_of(shape.linear_index(d)) {
                    adj.rows[f].push((g, 1.0));
                    adj.rows[g].push((f, 1.0));
                }
            }
        }
    }
    for r in adj.rows.iter_mut() {
        r.sort_by_key(|&(j, _)| j);
    }
    Ok(adj)
}

/// Read a text edge list, one `i j weight` triple (0-based) per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_edge_list(path: impl AsRef<Path>, p: usize) -> Result<Adjacency> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let bad = || Error::DataAt { row: lineno + 1, col: 1, msg: format!("expected `i j weight`, got {t:?}") };
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        let w: f64 = parts[2].parse().map_err(|_| bad())?;
        edges.push((i, j, w));
    }
    Adjacency::from_edges(p, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Laplacian,
    Identity,
    Custom,
}

/// Sparse symmetric penalty matrix: base diagonal plus a uniform diagonal
/// shift, with off-diagonal entries in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGraph {
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag_shift: f64,
    kind: GraphKind,
}

impl PenaltyGraph {
    fn from_rows(diag: Vec<f64>, rows: Vec<Vec<(usize, f64)>>, kind: GraphKind) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|&(j, _)| j);
            for (j, v) in r {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { diag, row_ptr, cols, vals, diag_shift: 0.0, kind }
    }

    pub fn identity(p: usize) -> Self {
        Self::from_rows(vec![1.0; p], vec![Vec::new(); p], GraphKind::Identity)
    }

    /// The zero matrix, i.e. the Laplacian of an edgeless graph.
    pub fn zero(p: usize) -> Self {
        Self::from_rows(vec![0.0; p], vec![Vec::new(); p], GraphKind::Laplacian)
    }

    /// Arbitrary symmetric matrix from `(i, j, value)` triples over the upper
    /// or lower triangle (mirrored automatically) and the diagonal.
    pub fn custom(p: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut diag = vec![0.0; p];
        let mut rows = vec![Vec::new(); p];
        for &(i, j, v) in entries {
            if i >= p || j >= p {
                return Err(Error::Graph(format!("entry ({i},{j}) out of range for size {p}")));
            }
            if i == j {
                diag[i] += v;
            } else {
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        Ok(Self::from_rows(diag, rows, GraphKind::Custom))
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn diag_shift(&self) -> f64 {
        self.diag_shift
    }

    /// Number of stored off-diagonal nonzeros (both triangles).
    pub fn offdiag_nnz(&self) -> usize {
        self.cols.len()
    }

    /// `G_jj` including the shift.
    #[inline]
    pub fn diag(&self, j: usize) -> f64 {
        self.diag[j] + self.diag_shift
    }

    /// Off-diagonal entries `(k, G_jk)` of row `j`.
    #[inline]
    pub fn row(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[j], self.row_ptr[j + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// `Σ_{k≠j} G_jk β_k`.
    #[inline]
    pub fn offdiag_dot(&self, j: usize, beta: &[f64]) -> f64 {
        let (a, b) = (self.row_ptr[j], self.row_ptr[j + 1]);
        let mut s = 0.0;
        for idx in a..b {
            s += self.vals[idx] * beta[self.cols[idx]];
        }
        s
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag(i)
        } else {
            self.row(i).find(|&(k, _)| k == j).map_or(0.0, |(_, v)| v)
        }
    }

    /// `(Gβ)_j` for every `j`.
    pub fn matvec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.size()).map(|j| self.diag(j) * beta[j] + self.offdiag_dot(j, beta)).collect()
    }

    /// `βᵀGβ` without dimension checks; iterates only over nonzero `β_j`.
    pub fn quad_form(&self, beta: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                s += b * (self.diag(j) * b + self.offdiag_dot(j, beta));
            }
        }
        s
    }

    /// `G + (λ2/λG) I`, or `G + λ2 I` when `λG = 0`.
    pub fn shift_diagonal(&self, lambda2: f64, lambda_g: f64) -> Result<Self> {
        if !(lambda2 >= 0.0 && lambda_g >= 0.0) || !lambda2.is_finite() || !lambda_g.is_finite() {
            return Err(Error::Parameter(format!(
                "diagonal shift needs lambda2 >= 0 and lambdaG >= 0, got {lambda2} and {lambda_g}"
            )));
        }
        let eta = if lambda_g > 0.0 { 1.0 / lambda_g } else { 1.0 };
        let mut g = self.clone();
        g.diag_shift += lambda2 * eta;
        Ok(g)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.size();
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            m[(j, j)] = self.diag(j);
            for (k, v) in self.row(j) {
                m[(j, k)] = v;
            }
        }
        m
    }

    /// Dense restriction `G_AA` to the given index set.
    pub fn restrict_dense(&self, active: &[usize]) -> DMatrix<f64> {
        let a = active.len();
        let mut pos = std::collections::HashMap::with_capacity(a);
        for (i, &j) in active.iter().enumerate() {
            pos.insert(j, i);
        }
        let mut m = DMatrix::zeros(a, a);
        for (i, &j) in active.iter().enumerate() {
            m[(i, i)] = self.diag(j);
            for (k, v) in self.row(j) {
                if let Some(&c) = pos.get(&k) {
                    m[(i, c)] = v;
                }
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size()).all(|i| self.row(i).all(|(j, v)| self.entry(j, i) == v))
    }
}

/// `L = D − A` for a symmetric adjacency without self-edges.
pub fn laplacian(adj: &Adjacency) -> Result<PenaltyGraph> {
    let p = adj.len();
    for i in 0..p {
        for &(j, _) in adj.neighbors(i) {
            if j >= p {
                return Err(Error::Graph(format!("neighbour {j} of node {i} out of range")));
            }
            if j == i {
                return Err(Error::Graph(format!("self-edge at node {i}")));
            }
        }
    }
    if !adj.is_symmetric() {
        return Err(Error::Graph("adjacency is not symmetric".into()));
    }
    let diag = (0..p).map(|i| adj.degree(i)).collect();
    let rows = (0..p)
        .map(|i| adj.neighbors(i).iter().map(|&(j, w)| (j, -w)).collect())
        .collect();
    Ok(PenaltyGraph::from_rows(diag, rows, GraphKind::Laplacian))
}

/// `βᵀGβ` with dimension checking.
pub fn graph_penalty_value(g: &PenaltyGraph, beta: &[f64]) -> Result<f64> {
    if beta.len() != g.size() {
        return Err(Error::Shape(format!(
            "coefficient vector has length {} but the graph has size {}",
            beta.len(),
            g.size()
        )));
    }
    Ok(g.quad_form(beta))
}

/// Zero-padded block extension of a penalty graph to the augmented variable
/// vector `[β α]` (regression) or `[β0 β α]` (with intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    pub base: PenaltyGraph,
    pub n: usize,
    pub with_intercept: bool,
}

impl AugmentedGraph {
    fn offset(&self) -> usize {
        usize::from(self.with_intercept)
    }

    pub fn total_size(&self) -> usize {
        self.offset() + self.base.size() + self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let o = self.offset();
        let p = self.base.size();
        if i < o || j < o || i >= o + p || j >= o + p {
            0.0
        } else {
            self.base.entry(i - o, j - o)
        }
    }

    /// `γᵀG′γ`, which only sees the `β` block.
    pub fn penalty_value(&self, gamma: &[f64]) -> Result<f64> {
        if gamma.len() != self.total_size() {
            return Err(Error::Shape(format!(
                "augmented vector has length {}, expected {}",
                gamma.len(),
                self.total_size()
            )));
        }
        let o = self.offset();
        Ok(self.base.quad_form(&gamma[o..o + self.base.size()]))
    }
}

pub fn augment(g: &PenaltyGraph, n: usize, with_intercept: bool) -> AugmentedGraph {
    AugmentedGraph { base: g.clone(), n, with_intercept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain3() -> PenaltyGraph {
        laplacian(&Adjacency::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()).unwrap()
    }

    #[test]
    fn time_chain_lattice() {
        let shape = LatticeShape::full([1, 1, 1, 3]).unwrap();
        let adj = lattice_adjacency(&shape, true).unwrap();
        assert_eq!(adj.edges(), vec![(0, 1, 1.0), (1, 2, 1.0)]);
        assert!(lattice_adjacency(&shape, false).unwrap().edges().is_empty());
    }

    #[test]
    fn two_voxel_lattice() {
        let shape = LatticeShape::full([2, 1, 1, 1]).unwrap();
        assert_eq!(lattice_adjacency(&shape, true).unwrap().edges(), vec![(0, 1, 1.0)]);
    }

    #[test]
    fn empty_mask_is_error() {
        let shape = LatticeShape::with_mask([2, 2, 1, 1], vec![false; 4]).unwrap();
        assert!(matches!(lattice_adjacency(&shape, true), Err(Error::Graph(_))));
    }

    #[test]
    fn masked_lattice_skips_holes() {
        // 3x1x1 line with the middle voxel masked out: no edges survive.
        let shape = LatticeShape::with_mask([3, 1, 1, 1], vec![true, false, true]).unwrap();
        assert!(lattice_adjacency(&shape, true).unwrap().edges().is_empty());
    }

    #[test]
    fn laplacian_examples() {
        let l = chain3().to_dense();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, want);
        assert_eq!(laplacian(&Adjacency::empty(3)).unwrap().to_dense(), DMatrix::zeros(3, 3));
        let two = laplacian(&Adjacency::from_edges(2, &[(0, 1, 1.0)]).unwrap()).unwrap();
        assert_eq!(two.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_rejects_asymmetric() {
        let adj = Adjacency::from_neighbor_lists(vec![vec![(1, 1.0)], vec![]]);
        assert!(matches!(laplacian(&adj), Err(Error::Graph(_))));
        let adj = Adjacency::from_neighbor_lists(vec![vec![(0, 1.0)]]);
        assert!(matches!(laplacian(&adj), Err(Error::Graph(_))));
    }

    #[test]
    fn shift_examples() {
        let z = PenaltyGraph::zero(3).shift_diagonal(1.0, 1.0).unwrap();
        assert_eq!(z.to_dense(), DMatrix::identity(3, 3));
        assert_eq!(chain3().shift_diagonal(0.0, 5.0).unwrap().to_dense(), chain3().to_dense());
        let s = chain3().shift_diagonal(10.0, 10.0).unwrap();
        assert_eq!((s.diag(0), s.diag(1), s.diag(2)), (2.0, 3.0, 2.0));
        let s = chain3().shift_diagonal(2.0, 0.0).unwrap();
        assert_eq!(s.diag(1), 4.0);
        assert!(matches!(chain3().shift_diagonal(-1.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(chain3().shift_diagonal(1.0, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(graph_penalty_value(&chain3(), &[1.0, 2.0, 4.0]).unwrap(), 5.0);
        assert_eq!(graph_penalty_value(&chain3(), &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(graph_penalty_value(&PenaltyGraph::identity(2), &[3.0, 4.0]).unwrap(), 25.0);
        assert!(matches!(graph_penalty_value(&chain3(), &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn augment_examples() {
        let a = augment(&PenaltyGraph::identity(2), 1, false);
        assert_eq!(a.total_size(), 3);
        let dense = DMatrix::from_fn(3, 3, |i, j| a.entry(i, j));
        let mut want = DMatrix::zeros(3, 3);
        want[(0, 0)] = 1.0;
        want[(1, 1)] = 1.0;
        assert_eq!(dense, want);

        let g = chain3();
        let a = augment(&g, 4, false);
        let beta = [0.5, -1.0, 2.0];
        let gamma = [0.5, -1.0, 2.0, 9.0, -3.0, 1.0, 7.0];
        assert_eq!(a.penalty_value(&gamma).unwrap(), graph_penalty_value(&g, &beta).unwrap());

        let ai = augment(&g, 2, true);
        assert_eq!(ai.total_size(), 6);
        assert_eq!(ai.entry(0, 0), 0.0);
        assert_eq!(ai.entry(1, 1), 1.0);
        assert_eq!(ai.entry(2, 1), -1.0);
        assert_eq!(ai.entry(5, 5), 0.0);
    }

    #[test]
    fn edge_list_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        std::fs::write(&path, "# comment\n0 1 2.5\n1 2 1\n").unwrap();
        let adj = read_edge_list(&path, 3).unwrap();
        assert_eq!(adj.edges(), vec![(0, 1, 2.5), (1, 2, 1.0)]);
        let l = laplacian(&adj).unwrap();
        assert_eq!(l.diag(1), 3.5);
        std::fs::write(&path, "0 1\n").unwrap();
        assert!(read_edge_list(&path, 3).is_err());
    }

    #[test]
    fn small_laplacian_is_psd() {
        let shape = LatticeShape::full([3, 2, 2, 2]).unwrap();
        let l = laplacian(&lattice_adjacency(&shape, true).unwrap()).unwrap();
        let eig = l.to_dense().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-9));
    }

    fn random_lattice(seed: u64) -> (LatticeShape, Adjacency) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4)];
        let total: usize = dims.iter().product();
        let mut mask: Vec<bool> = (0..total).map(|_| rng.random_bool(0.8)).collect();
        mask[0] = true;
        let shape = LatticeShape::with_mask(dims, mask).unwrap();
        let adj = lattice_adjacency(&shape, rng.random_bool(0.5)).unwrap();
        (shape, adj)
    }

    proptest! {
        #[test]
        fn laplacian_quad_form_matches_edge_sum(seed in any::<u64>()) {
            let (shape, adj) = random_lattice(seed);
            let l = laplacian(&adj).unwrap();
            prop_assert!(l.is_symmetric());
            for i in 0..l.size() {
                let row_sum: f64 = l.diag(i) + l.row(i).map(|(_, v)| v).sum::<f64>();
                prop_assert_eq!(row_sum, 0.0);
                prop_assert!(l.row(i).all(|(_, v)| v <= 0.0));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let beta: Vec<f64> = (0..shape.p()).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let q = graph_penalty_value(&l, &beta).unwrap();
            let e: f64 = adj.edges().iter().map(|&(i, j, _)| (beta[i] - beta[j]).powi(2)).sum();
            prop_assert!(q >= 0.0);
            prop_assert!((q - e).abs() < 1e-10);
            // Constant vectors lie in the null space.
            let c = vec![rng.random::<f64>(); shape.p()];
            prop_assert!(graph_penalty_value(&l, &c).unwrap().abs() < 1e-10);
        }

        #[test]
        fn lattice_degree_bound(seed in any::<u64>()) {
            let (_, adj) = random_lattice(seed);
            for i in 0..adj.len() {
                prop_assert!(adj.neighbors(i).len() <= 8);
            }
        }
    }

    #[test]
    fn spatial_lattice_degree_bound() {
        let shape = LatticeShape::full([4, 4, 4, 3]).unwrap();
        let adj = lattice_adjacency(&shape, false).unwrap();
        assert_eq!((0..adj.len()).map(|i| adj.neighbors(i).len()).max(), Some(6));
        let adj = lattice_adjacency(&shape, true).unwrap();
        assert_eq!((0..adj.len()).map(|i| adj.neighbors(i).len()).max(), Some(8));
    }
}
