//! Vectorized expression graph.
//!
//! Scalar nodes hold one value; vector nodes hold a column of `N` values,
//! one per mesh point. Full-derivative index vectors store only a leading
//! decision-vector index per entry, plus a stride: row `k` of a stride-1
//! entry refers to `leading + k`, a stride-0 entry refers to `leading` on
//! every row. Derivative values are column-major matrices with `N` rows
//! (vector nodes) or one row (scalar nodes); a one-row operand feeding a
//! vector node is broadcast rather than copied.
//!
//! Index vectors depend only on topology and are computed as nodes are
//! added. Values live in a [`VecWorkspace`], so several workspaces can be
//! evaluated concurrently over one graph.

use thiserror::Error;

pub use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VecGraphError {
    #[error("decision index range {start}..{end} exceeds {len} variables")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("argument node {0} does not exist")]
    UnknownArgument(usize),
    #[error("partial index {position} out of range for {n_args} arguments")]
    PartialIndexOutOfRange { position: usize, n_args: usize },
    #[error("partial Hessian pair ({0}, {1}) appears more than once")]
    DuplicateHessianPair(usize, usize),
    #[error("scalar node cannot depend on vector node {0}")]
    ScalarDependsOnVector(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("node {node} swept before its argument {arg}")]
    SweepOrderViolation { node: usize, arg: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Scalar,
    Vector,
}

/// Leading decision index plus row stride (0 or 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexEntry {
    pub leading: usize,
    pub stride: usize,
}

impl IndexEntry {
    pub fn scalar(index: usize) -> Self {
        IndexEntry {
            leading: index,
            stride: 0,
        }
    }

    pub fn block(leading: usize) -> Self {
        IndexEntry { leading, stride: 1 }
    }

    #[inline]
    pub fn at(self, row: usize) -> usize {
        self.leading + row * self.stride
    }
}

/// Column-major matrix whose row count is either 1 (broadcast) or `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self, VecGraphError> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(VecGraphError::DimensionMismatch {
                    expected: format!("column of length {rows}"),
                    got: format!("length {}", c.len()),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(ColMatrix {
            rows,
            cols: columns.len(),
            data,
        })
    }

    /// Build from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, VecGraphError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut out = ColMatrix::zeros(n, m);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(VecGraphError::DimensionMismatch {
                    expected: format!("row of length {m}"),
                    got: format!("length {}", r.len()),
                });
            }
            for (c, &v) in r.iter().enumerate() {
                out.data[c * n + k] = v;
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Logical `n`-row view; a one-row matrix is replicated without copying.
    pub fn broadcast_rows(&self, n: usize) -> Result<Broadcast<'_>, VecGraphError> {
        Broadcast::new(self, n)
    }
}

/// Read-only `n x cols` view over a matrix with 1 or `n` rows.
#[derive(Clone, Copy, Debug)]
pub struct Broadcast<'a> {
    src: &'a ColMatrix,
    rows: usize,
}

impl<'a> Broadcast<'a> {
    fn new(src: &'a ColMatrix, rows: usize) -> Result<Self, VecGraphError> {
        if src.rows != 1 && src.rows != rows {
            return Err(VecGraphError::DimensionMismatch {
                expected: format!("1 or {rows} rows"),
                got: format!("{} rows", src.rows),
            });
        }
        Ok(Broadcast { src, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.src.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.src.rows == 1 {
            self.src.data[col]
        } else {
            self.src.data[col * self.rows + row]
        }
    }

    pub fn to_matrix(&self) -> ColMatrix {
        let mut out = ColMatrix::zeros(self.rows, self.cols());
        for c in 0..self.cols() {
            for k in 0..self.rows {
                out.data[c * self.rows + k] = self.get(k, c);
            }
        }
        out
    }
}

// Kernels over columns of length 1 (broadcast) or n.

#[inline]
fn scale_into(out: &mut [f64], a: &[f64], b: &[f64]) {
    match (a.len() == 1, b.len() == 1) {
        (true, true) => out.fill(a[0] * b[0]),
        (true, false) => out.iter_mut().zip(b).for_each(|(o, &y)| *o = a[0] * y),
        (false, true) => out.iter_mut().zip(a).for_each(|(o, &x)| *o = x * b[0]),
        (false, false) => out
            .iter_mut()
            .zip(a.iter().zip(b))
            .for_each(|(o, (&x, &y))| *o = x * y),
    }
}

#[inline]
fn triple_into(out: &mut [f64], h: &[f64], a: &[f64], b: &[f64]) {
    if h.len() == 1 {
        let s = h[0];
        match (a.len() == 1, b.len() == 1) {
            (true, true) => out.fill(s * a[0] * b[0]),
            (true, false) => out.iter_mut().zip(b).for_each(|(o, &y)| *o = s * a[0] * y),
            (false, true) => out.iter_mut().zip(a).for_each(|(o, &x)| *o = s * x * b[0]),
            (false, false) => out
                .iter_mut()
                .zip(a.iter().zip(b))
                .for_each(|(o, (&x, &y))| *o = s * x * y),
        }
    } else {
        let at = |v: &[f64], k: usize| if v.len() == 1 { v[0] } else { v[k] };
        for (k, o) in out.iter_mut().enumerate() {
            *o = h[k] * at(a, k) * at(b, k);
        }
    }
}

/// Row-wise Kronecker (Khatri-Rao) product: row `k` of the result is
/// `kron(a[k, :], b[k, :])`. One-row operands broadcast.
pub fn rowwise_kron(a: &ColMatrix, b: &ColMatrix) -> Result<ColMatrix, VecGraphError> {
    let rows = match (a.rows, b.rows) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        (x, y) => {
            return Err(VecGraphError::DimensionMismatch {
                expected: format!("{x} rows"),
                got: format!("{y} rows"),
            })
        }
    };
    let mut out = ColMatrix::zeros(rows, a.cols * b.cols);
    let one = [1.0];
    for i in 0..a.cols {
        for j in 0..b.cols {
            let c = i * b.cols + j;
            triple_into(
                &mut out.data[c * rows..(c + 1) * rows],
                &one,
                a.col(i),
                b.col(j),
            );
        }
    }
    Ok(out)
}

/// Sparsity pattern of a node's own partial derivatives (argument
/// positions). Hessian pairs are half-storage: each unordered pair once,
/// diagonal values at half the second partial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartialPattern {
    pub grad: Vec<usize>,
    pub hess: Vec<(usize, usize)>,
}

impl PartialPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grad(mut self, position: usize) -> Self {
        self.grad.push(position);
        self
    }

    pub fn hess(mut self, row: usize, col: usize) -> Self {
        self.hess.push((row, col));
        self
    }
}

#[derive(Clone, Debug)]
struct Topo {
    kind: NodeKind,
    args: Vec<NodeId>,
    partial: PartialPattern,
    input: bool,
    full_grad: Vec<IndexEntry>,
    full_hess: Vec<(IndexEntry, IndexEntry)>,
}

#[derive(Clone, Debug)]
pub struct VecGraph {
    n: usize,
    n_z: usize,
    nodes: Vec<Topo>,
}

impl VecGraph {
    /// Graph whose vector nodes have `n` rows, over `n_z` decision variables.
    pub fn new(n: usize, n_z: usize) -> Self {
        VecGraph {
            n,
            n_z,
            nodes: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0].kind
    }

    pub fn args(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].args
    }

    pub fn partial_pattern(&self, id: NodeId) -> &PartialPattern {
        &self.nodes[id.0].partial
    }

    /// Row count of a node's values: `N` for vector nodes, 1 for scalars.
    pub fn rows(&self, id: NodeId) -> usize {
        match self.nodes[id.0].kind {
            NodeKind::Scalar => 1,
            NodeKind::Vector => self.n,
        }
    }

    pub fn full_gradient_index(&self, id: NodeId) -> &[IndexEntry] {
        &self.nodes[id.0].full_grad
    }

    pub fn full_hessian_index(&self, id: NodeId) -> &[(IndexEntry, IndexEntry)] {
        &self.nodes[id.0].full_hess
    }

    fn push_input(&mut self, kind: NodeKind, entry: IndexEntry) -> NodeId {
        self.nodes.push(Topo {
            kind,
            args: Vec::new(),
            partial: PartialPattern::default(),
            input: true,
            full_grad: vec![entry],
            full_hess: Vec::new(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_scalar_input(&mut self, var_index: usize) -> Result<NodeId, VecGraphError> {
        if var_index >= self.n_z {
            return Err(VecGraphError::IndexOutOfRange {
                start: var_index,
                end: var_index + 1,
                len: self.n_z,
            });
        }
        Ok(self.push_input(NodeKind::Scalar, IndexEntry::scalar(var_index)))
    }

    /// Vector input occupying decision indices `leading..leading + N`.
    pub fn add_vector_input(&mut self, leading: usize) -> Result<NodeId, VecGraphError> {
        if leading + self.n > self.n_z {
            return Err(VecGraphError::IndexOutOfRange {
                start: leading,
                end: leading + self.n,
                len: self.n_z,
            });
        }
        Ok(self.push_input(NodeKind::Vector, IndexEntry::block(leading)))
    }

    /// Append an operation node. Its full-derivative index vectors are
    /// derived immediately from the arguments' (structure only).
    pub fn add_vec_node(
        &mut self,
        kind: NodeKind,
        args: &[NodeId],
        partial: PartialPattern,
    ) -> Result<NodeId, VecGraphError> {
        for a in args {
            let Some(arg) = self.nodes.get(a.0) else {
                return Err(VecGraphError::UnknownArgument(a.0));
            };
            if kind == NodeKind::Scalar && arg.kind == NodeKind::Vector {
                return Err(VecGraphError::ScalarDependsOnVector(a.0));
            }
        }
        let n_args = args.len();
        for &p in partial
            .grad
            .iter()
            .chain(partial.hess.iter().flat_map(|(r, c)| [r, c]))
        {
            if p >= n_args {
                return Err(VecGraphError::PartialIndexOutOfRange {
                    position: p,
                    n_args,
                });
            }
        }
        let mut pairs: Vec<(usize, usize)> = partial
            .hess
            .iter()
            .map(|&(r, c)| (r.min(c), r.max(c)))
            .collect();
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(VecGraphError::DuplicateHessianPair(w[0].0, w[0].1));
        }

        let mut full_grad = Vec::new();
        for &p in &partial.grad {
            full_grad.extend_from_slice(&self.nodes[args[p].0].full_grad);
        }
        let mut full_hess = Vec::new();
        for &p in &partial.grad {
            full_hess.extend_from_slice(&self.nodes[args[p].0].full_hess);
        }
        for &(r, c) in &partial.hess {
            let a = &self.nodes[args[r].0].full_grad;
            let b = &self.nodes[args[c].0].full_grad;
            for &ea in a {
                for &eb in b {
                    full_hess.push((ea, eb));
                }
            }
        }
        self.nodes.push(Topo {
            kind,
            args: args.to_vec(),
            partial,
            input: false,
            full_grad,
            full_hess,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Fresh numeric workspace sized from the structure. Input nodes get
    /// their unit gradients; everything else starts at zero.
    pub fn workspace(&self) -> VecWorkspace {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let rows = self.rows(NodeId(k));
                let fill = if t.input { 1.0 } else { 0.0 };
                NodeData {
                    rows,
                    value: vec![0.0; rows],
                    pgrad: t.partial.grad.iter().map(|_| vec![0.0; rows]).collect(),
                    phess: t.partial.hess.iter().map(|_| vec![0.0; rows]).collect(),
                    fgrad: vec![fill; rows * t.full_grad.len()],
                    fhess: vec![0.0; rows * t.full_hess.len()],
                }
            })
            .collect();
        VecWorkspace {
            nodes,
            swept: vec![false; self.nodes.len()],
        }
    }

    /// Propagate full derivatives through every node in order.
    pub fn sweep(&self, ws: &mut VecWorkspace) -> Result<(), VecGraphError> {
        ws.swept.fill(false);
        for k in 0..self.nodes.len() {
            self.sweep_node(ws, NodeId(k))?;
        }
        Ok(())
    }

    /// Forward gradient and Hessian for a single node; its arguments must
    /// already be swept in this workspace.
    pub fn sweep_node(&self, ws: &mut VecWorkspace, id: NodeId) -> Result<(), VecGraphError> {
        let topo = &self.nodes[id.0];
        if topo.input {
            ws.swept[id.0] = true;
            return Ok(());
        }
        if let Some(a) = topo.args.iter().find(|a| !ws.swept[a.0]) {
            return Err(VecGraphError::SweepOrderViolation {
                node: id.0,
                arg: a.0,
            });
        }
        let (before, rest) = ws.nodes.split_at_mut(id.0);
        let node = &mut rest[0];
        let rows = node.rows;

        // gradient: concat of g * argument gradient
        let mut off = 0;
        for (pj, &p) in topo.partial.grad.iter().enumerate() {
            let arg = &before[topo.args[p].0];
            let g = &node.pgrad[pj];
            let ra = arg.rows;
            for c in 0..arg.fgrad.len() / ra {
                let src = &arg.fgrad[c * ra..(c + 1) * ra];
                scale_into(&mut node.fgrad[off..off + rows], g, src);
                off += rows;
            }
        }
        debug_assert_eq!(off, node.fgrad.len());

        // Hessian, first part: g * argument Hessian
        let mut off = 0;
        for (pj, &p) in topo.partial.grad.iter().enumerate() {
            let arg = &before[topo.args[p].0];
            let g = &node.pgrad[pj];
            let ra = arg.rows;
            for c in 0..arg.fhess.len() / ra {
                let src = &arg.fhess[c * ra..(c + 1) * ra];
                scale_into(&mut node.fhess[off..off + rows], g, src);
                off += rows;
            }
        }
        // second part: h * rowwise_kron(grad A, grad B)
        for (e, &(r, c)) in topo.partial.hess.iter().enumerate() {
            let a = &before[topo.args[r].0];
            let b = &before[topo.args[c].0];
            let h = &node.phess[e];
            let (ra, rb) = (a.rows, b.rows);
            for ia in 0..a.fgrad.len() / ra {
                let ga = &a.fgrad[ia * ra..(ia + 1) * ra];
                for ib in 0..b.fgrad.len() / rb {
                    let gb = &b.fgrad[ib * rb..(ib + 1) * rb];
                    triple_into(&mut node.fhess[off..off + rows], h, ga, gb);
                    off += rows;
                }
            }
        }
        debug_assert_eq!(off, node.fhess.len());
        ws.swept[id.0] = true;
        Ok(())
    }

    /// Expand a node's full gradient to `(decision index, mesh row, value)`.
    /// Duplicates are kept.
    pub fn flatten_gradient(&self, ws: &VecWorkspace, id: NodeId) -> Vec<(usize, usize, f64)> {
        let rows = self.rows(id);
        let vals = &ws.nodes[id.0].fgrad;
        let mut out = Vec::with_capacity(vals.len());
        for (c, e) in self.nodes[id.0].full_grad.iter().enumerate() {
            for k in 0..rows {
                out.push((e.at(k), k, vals[c * rows + k]));
            }
        }
        out
    }

    /// Expand a node's full half-Hessian to `(row index, col index, mesh
    /// row, value)`.
    pub fn flatten_hessian(
        &self,
        ws: &VecWorkspace,
        id: NodeId,
    ) -> Vec<(usize, usize, usize, f64)> {
        let rows = self.rows(id);
        let vals = &ws.nodes[id.0].fhess;
        let mut out = Vec::with_capacity(vals.len());
        for (c, (ea, eb)) in self.nodes[id.0].full_hess.iter().enumerate() {
            for k in 0..rows {
                out.push((ea.at(k), eb.at(k), k, vals[c * rows + k]));
            }
        }
        out
    }

    /// Decision indices of a flattened gradient, in value order.
    pub fn gradient_indices(&self, id: NodeId) -> impl Iterator<Item = (usize, usize)> + '_ {
        let rows = self.rows(id);
        self.nodes[id.0]
            .full_grad
            .iter()
            .flat_map(move |e| (0..rows).map(move |k| (e.at(k), k)))
    }

    /// Decision index pairs of a flattened half-Hessian, in value order.
    pub fn hessian_indices(&self, id: NodeId) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let rows = self.rows(id);
        self.nodes[id.0]
            .full_hess
            .iter()
            .flat_map(move |(a, b)| (0..rows).map(move |k| (a.at(k), b.at(k), k)))
    }
}

#[derive(Clone, Debug)]
struct NodeData {
    rows: usize,
    value: Vec<f64>,
    pgrad: Vec<Vec<f64>>,
    phess: Vec<Vec<f64>>,
    fgrad: Vec<f64>,
    fhess: Vec<f64>,
}

/// Numeric state for one evaluation point.
#[derive(Clone, Debug)]
pub struct VecWorkspace {
    nodes: Vec<NodeData>,
    swept: Vec<bool>,
}

fn check_len(len: usize, rows: usize) -> Result<(), VecGraphError> {
    if len == rows || len == 1 {
        Ok(())
    } else {
        Err(VecGraphError::DimensionMismatch {
            expected: format!("1 or {rows} rows"),
            got: format!("{len} rows"),
        })
    }
}

impl VecWorkspace {
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn set_value(&mut self, id: NodeId, value: &[f64]) -> Result<(), VecGraphError> {
        let node = &mut self.nodes[id.0];
        if value.len() != node.rows {
            return Err(VecGraphError::DimensionMismatch {
                expected: format!("{} values", node.rows),
                got: format!("{} values", value.len()),
            });
        }
        node.value.copy_from_slice(value);
        Ok(())
    }

    pub fn value_mut(&mut self, id: NodeId) -> &mut [f64] {
        &mut self.nodes[id.0].value
    }

    /// Partial gradient column `j` (pattern order). A one-element column is
    /// broadcast across rows.
    pub fn set_partial_grad(
        &mut self,
        id: NodeId,
        j: usize,
        col: &[f64],
    ) -> Result<(), VecGraphError> {
        let node = &mut self.nodes[id.0];
        check_len(col.len(), node.rows)?;
        let dst = &mut node.pgrad[j];
        dst.clear();
        dst.extend_from_slice(col);
        Ok(())
    }

    pub fn set_partial_hess(
        &mut self,
        id: NodeId,
        e: usize,
        col: &[f64],
    ) -> Result<(), VecGraphError> {
        let node = &mut self.nodes[id.0];
        check_len(col.len(), node.rows)?;
        let dst = &mut node.phess[e];
        dst.clear();
        dst.extend_from_slice(col);
        Ok(())
    }

    /// Mutable materialized partial gradient column (length = node rows).
    pub fn partial_grad_mut(&mut self, id: NodeId, j: usize) -> &mut [f64] {
        let node = &mut self.nodes[id.0];
        node.pgrad[j].resize(node.rows, 0.0);
        &mut node.pgrad[j]
    }

    pub fn partial_hess_mut(&mut self, id: NodeId, e: usize) -> &mut [f64] {
        let node = &mut self.nodes[id.0];
        node.phess[e].resize(node.rows, 0.0);
        &mut node.phess[e]
    }

    /// Set both partial matrices at once. Each matrix has 1 or node-rows
    /// rows and one column per pattern entry.
    pub fn set_partials(
        &mut self,
        id: NodeId,
        grad: &ColMatrix,
        hess: &ColMatrix,
    ) -> Result<(), VecGraphError> {
        let node = &self.nodes[id.0];
        for (m, n_cols) in [(grad, node.pgrad.len()), (hess, node.phess.len())] {
            check_len(m.rows, node.rows)?;
            if m.cols != n_cols {
                return Err(VecGraphError::DimensionMismatch {
                    expected: format!("{n_cols} columns"),
                    got: format!("{} columns", m.cols),
                });
            }
        }
        for j in 0..grad.cols {
            self.set_partial_grad(id, j, grad.col(j))?;
        }
        for e in 0..hess.cols {
            self.set_partial_hess(id, e, hess.col(e))?;
        }
        Ok(())
    }

    /// Full gradient values, column-major (`rows x entries`).
    pub fn full_gradient(&self, id: NodeId) -> ColMatrix {
        let n = &self.nodes[id.0];
        ColMatrix {
            rows: n.rows,
            cols: n.fgrad.len() / n.rows,
            data: n.fgrad.clone(),
        }
    }

    pub fn full_hessian(&self, id: NodeId) -> ColMatrix {
        let n = &self.nodes[id.0];
        ColMatrix {
            rows: n.rows,
            cols: n.fhess.len() / n.rows,
            data: n.fhess.clone(),
        }
    }

    pub fn full_gradient_values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].fgrad
    }

    pub fn full_hessian_values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].fhess
    }
}
