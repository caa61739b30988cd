//! Scalar sparse expression graph with forward gradient and forward
//! half-Hessian propagation.
//!
//! Every node carries the sparse partial derivatives of its own operation
//! with respect to its arguments. A forward sweep in insertion order turns
//! them into full derivatives with respect to the input variables by
//! concatenation: gradients are concatenated argument gradients scaled by
//! the partial gradient, Hessians are the argument Hessians scaled by the
//! partial gradient followed by Cartesian/Kronecker products of argument
//! gradients scaled by the partial Hessian. Duplicate indices mean
//! summation and are only merged at export.

use thiserror::Error;

use crate::coo::{symmetrize_lower, CooError, CooMatrix, SparseVector, VectorAssembler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("input index {index} out of range for {len} decision variables")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("argument node {0} does not exist")]
    UnknownArgument(usize),
    #[error("partial index {position} out of range for {n_args} arguments")]
    PartialIndexOutOfRange { position: usize, n_args: usize },
    #[error("partial Hessian pair ({0}, {1}) appears more than once")]
    DuplicateHessianPair(usize, usize),
    #[error("partial derivative index/value length mismatch")]
    LengthMismatch,
    #[error("node {node} swept before its argument {arg}")]
    SweepOrderViolation { node: usize, arg: usize },
}

/// Dense index into a graph's node store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Partial derivatives of a node with respect to its arguments.
/// Indices are argument positions. Diagonal Hessian values are stored at
/// half the true second partial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartialDerivs {
    pub grad_idx: Vec<usize>,
    pub grad: Vec<f64>,
    pub hess_row: Vec<usize>,
    pub hess_col: Vec<usize>,
    pub hess: Vec<f64>,
}

impl PartialDerivs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grad(mut self, position: usize, value: f64) -> Self {
        self.grad_idx.push(position);
        self.grad.push(value);
        self
    }

    pub fn hess(mut self, row: usize, col: usize, value: f64) -> Self {
        self.hess_row.push(row);
        self.hess_col.push(col);
        self.hess.push(value);
        self
    }

    fn validate(&self, n_args: usize) -> Result<(), GraphError> {
        if self.grad_idx.len() != self.grad.len()
            || self.hess_row.len() != self.hess.len()
            || self.hess_col.len() != self.hess.len()
        {
            return Err(GraphError::LengthMismatch);
        }
        for &p in self
            .grad_idx
            .iter()
            .chain(&self.hess_row)
            .chain(&self.hess_col)
        {
            if p >= n_args {
                return Err(GraphError::PartialIndexOutOfRange {
                    position: p,
                    n_args,
                });
            }
        }
        let mut seen: Vec<(usize, usize)> = self
            .hess_row
            .iter()
            .zip(&self.hess_col)
            .map(|(&r, &c)| (r.min(c), r.max(c)))
            .collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateHessianPair(w[0].0, w[0].1));
        }
        Ok(())
    }
}

/// Full derivatives with respect to the input variables. Indices may repeat;
/// repeated entries are summed. The Hessian triplets `T` represent the
/// symmetric matrix `T + T^T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FullDerivs {
    pub grad_idx: Vec<usize>,
    pub grad: Vec<f64>,
    pub hess_row: Vec<usize>,
    pub hess_col: Vec<usize>,
    pub hess: Vec<f64>,
}

impl FullDerivs {
    /// Deduplicated gradient over `n` input variables.
    pub fn gradient(&self, n: usize) -> Result<SparseVector, CooError> {
        Ok(VectorAssembler::new(n, &self.grad_idx)?.assemble(&self.grad))
    }

    /// Deduplicated lower triangle of the symmetric Hessian.
    pub fn symmetrize_lower(&self, n: usize) -> Result<CooMatrix, CooError> {
        symmetrize_lower(n, &self.hess_row, &self.hess_col, &self.hess)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Pending,
    Gradient,
    Complete,
}

#[derive(Clone, Debug)]
pub struct ScalarNode {
    pub value: f64,
    pub args: Vec<NodeId>,
    pub partial: PartialDerivs,
    full: FullDerivs,
    stage: Stage,
    input: bool,
}

impl ScalarNode {
    pub fn full(&self) -> Option<&FullDerivs> {
        (self.stage == Stage::Complete).then_some(&self.full)
    }

    pub fn is_input(&self) -> bool {
        self.input
    }
}

#[derive(Clone, Debug)]
pub struct ScalarGraph {
    n_inputs: usize,
    nodes: Vec<ScalarNode>,
}

impl ScalarGraph {
    /// Graph over `n_inputs` decision variables.
    pub fn new(n_inputs: usize) -> Self {
        ScalarGraph {
            n_inputs,
            nodes: Vec::new(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &ScalarNode {
        &self.nodes[id.0]
    }

    pub fn full(&self, id: NodeId) -> Option<&FullDerivs> {
        self.nodes[id.0].full()
    }

    /// Input node for decision variable `var_index`: unit gradient, empty
    /// Hessian.
    pub fn add_input(&mut self, var_index: usize, value: f64) -> Result<NodeId, GraphError> {
        if var_index >= self.n_inputs {
            return Err(GraphError::IndexOutOfRange {
                index: var_index,
                len: self.n_inputs,
            });
        }
        self.nodes.push(ScalarNode {
            value,
            args: Vec::new(),
            partial: PartialDerivs::default(),
            full: FullDerivs {
                grad_idx: vec![var_index],
                grad: vec![1.0],
                ..FullDerivs::default()
            },
            stage: Stage::Complete,
            input: true,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn add_node(
        &mut self,
        args: &[NodeId],
        partial: PartialDerivs,
        value: f64,
    ) -> Result<NodeId, GraphError> {
        if let Some(bad) = args.iter().find(|a| a.0 >= self.nodes.len()) {
            return Err(GraphError::UnknownArgument(bad.0));
        }
        partial.validate(args.len())?;
        self.nodes.push(ScalarNode {
            value,
            args: args.to_vec(),
            partial,
            full: FullDerivs::default(),
            stage: Stage::Pending,
            input: false,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn split(&mut self, id: NodeId) -> (&[ScalarNode], &mut ScalarNode) {
        let (before, rest) = self.nodes.split_at_mut(id.0);
        (before, &mut rest[0])
    }

    fn require(
        before: &[ScalarNode],
        node: usize,
        arg: NodeId,
        stage: Stage,
    ) -> Result<&ScalarNode, GraphError> {
        let a = &before[arg.0];
        let ok = match stage {
            Stage::Gradient => a.stage != Stage::Pending,
            _ => a.stage == Stage::Complete,
        };
        if ok {
            Ok(a)
        } else {
            Err(GraphError::SweepOrderViolation { node, arg: arg.0 })
        }
    }

    /// Full gradient of `id` from its arguments' full gradients.
    pub fn forward_gradient(&mut self, id: NodeId) -> Result<(), GraphError> {
        if self.nodes[id.0].input {
            return Ok(());
        }
        let (before, node) = self.split(id);
        let mut len = 0;
        for &p in &node.partial.grad_idx {
            len += Self::require(before, id.0, node.args[p], Stage::Gradient)?
                .full
                .grad
                .len();
        }
        let mut grad_idx = Vec::with_capacity(len);
        let mut grad = Vec::with_capacity(len);
        for (&p, &g) in node.partial.grad_idx.iter().zip(&node.partial.grad) {
            let a = &before[node.args[p].0].full;
            grad_idx.extend_from_slice(&a.grad_idx);
            grad.extend(a.grad.iter().map(|v| g * v));
        }
        node.full.grad_idx = grad_idx;
        node.full.grad = grad;
        node.stage = Stage::Gradient;
        Ok(())
    }

    /// Full half-Hessian of `id`. Requires its gradient and all arguments'
    /// full derivatives.
    pub fn forward_hessian(&mut self, id: NodeId) -> Result<(), GraphError> {
        if self.nodes[id.0].input {
            return Ok(());
        }
        let (before, node) = self.split(id);
        if node.stage == Stage::Pending {
            return Err(GraphError::SweepOrderViolation {
                node: id.0,
                arg: id.0,
            });
        }
        let p = &node.partial;
        let mut len = 0;
        for &gi in &p.grad_idx {
            len += Self::require(before, id.0, node.args[gi], Stage::Complete)?
                .full
                .hess
                .len();
        }
        for (&r, &c) in p.hess_row.iter().zip(&p.hess_col) {
            let a = Self::require(before, id.0, node.args[r], Stage::Complete)?;
            let b = Self::require(before, id.0, node.args[c], Stage::Complete)?;
            len += a.full.grad.len() * b.full.grad.len();
        }
        let mut rows = Vec::with_capacity(len);
        let mut cols = Vec::with_capacity(len);
        let mut vals = Vec::with_capacity(len);
        // argument Hessians scaled by the partial gradient
        for (&gi, &g) in p.grad_idx.iter().zip(&p.grad) {
            let a = &before[node.args[gi].0].full;
            rows.extend_from_slice(&a.hess_row);
            cols.extend_from_slice(&a.hess_col);
            vals.extend(a.hess.iter().map(|v| g * v));
        }
        // partial Hessian times the product of argument gradients
        for ((&r, &c), &h) in p.hess_row.iter().zip(&p.hess_col).zip(&p.hess) {
            let a = &before[node.args[r].0].full;
            let b = &before[node.args[c].0].full;
            for (&ia, &ga) in a.grad_idx.iter().zip(&a.grad) {
                for (&ib, &gb) in b.grad_idx.iter().zip(&b.grad) {
                    rows.push(ia);
                    cols.push(ib);
                    vals.push(h * ga * gb);
                }
            }
        }
        node.full.hess_row = rows;
        node.full.hess_col = cols;
        node.full.hess = vals;
        node.stage = Stage::Complete;
        Ok(())
    }

    /// Propagate full derivatives through every node in insertion order.
    pub fn forward_sweep(&mut self) -> Result<(), GraphError> {
        for k in 0..self.nodes.len() {
            self.forward_gradient(NodeId(k))?;
            self.forward_hessian(NodeId(k))?;
        }
        Ok(())
    }

    /// Forget all computed derivatives of non-input nodes.
    pub fn reset(&mut self) {
        for n in self.nodes.iter_mut().filter(|n| !n.input) {
            n.full = FullDerivs::default();
            n.stage = Stage::Pending;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_has_unit_gradient() {
        let mut g = ScalarGraph::new(7);
        let a = g.add_input(0, 1.0).unwrap();
        let f = g.full(a).unwrap();
        assert_eq!(f.grad_idx, vec![0]);
        assert_eq!(f.grad, vec![1.0]);
        assert!(f.hess.is_empty() && f.hess_row.is_empty());
        let b = g.add_input(5, 0.0).unwrap();
        let c = g.add_input(6, 0.0).unwrap();
        assert!(b < c);
        assert_eq!(
            g.add_input(9, 0.0),
            Err(GraphError::IndexOutOfRange { index: 9, len: 7 })
        );
    }

    #[test]
    fn node_validation() {
        let mut g = ScalarGraph::new(2);
        let a = g.add_input(0, 3.0).unwrap();
        let b = g.add_input(1, 2.0).unwrap();
        let prod = PartialDerivs::new()
            .grad(0, 2.0)
            .grad(1, 3.0)
            .hess(0, 1, 1.0);
        assert!(g.add_node(&[a, b], prod, 6.0).is_ok());
        let square = PartialDerivs::new().grad(0, 6.0).hess(0, 0, 1.0);
        assert!(g.add_node(&[a], square, 9.0).is_ok());
        let bad = PartialDerivs::new().grad(2, 1.0);
        assert_eq!(
            g.add_node(&[a, b], bad, 0.0),
            Err(GraphError::PartialIndexOutOfRange {
                position: 2,
                n_args: 2
            })
        );
        let dup = PartialDerivs::new().hess(0, 1, 1.0).hess(1, 0, 1.0);
        assert_eq!(
            g.add_node(&[a, b], dup, 0.0),
            Err(GraphError::DuplicateHessianPair(0, 1))
        );
        assert_eq!(
            g.add_node(&[NodeId(40)], PartialDerivs::new(), 0.0),
            Err(GraphError::UnknownArgument(40))
        );
    }

    #[test]
    fn time_interval_gradient() {
        let mut g = ScalarGraph::new(7);
        let t0 = g.add_input(5, 0.0).unwrap();
        let tf = g.add_input(6, 1.0).unwrap();
        let dt = g
            .add_node(
                &[t0, tf],
                PartialDerivs::new().grad(0, -1.0).grad(1, 1.0),
                1.0,
            )
            .unwrap();
        g.forward_sweep().unwrap();
        let f = g.full(dt).unwrap();
        assert_eq!(f.grad_idx, vec![5, 6]);
        assert_eq!(f.grad, vec![-1.0, 1.0]);
        assert!(f.hess.is_empty());
    }

    #[test]
    fn constant_node_has_empty_gradient() {
        let mut g = ScalarGraph::new(1);
        let x = g.add_input(0, 1.0).unwrap();
        let c = g.add_node(&[x], PartialDerivs::new(), 4.0).unwrap();
        g.forward_sweep().unwrap();
        assert!(g.full(c).unwrap().grad_idx.is_empty());
    }

    #[test]
    fn product_hessian() {
        let mut g = ScalarGraph::new(2);
        let x = g.add_input(0, 3.0).unwrap();
        let y = g.add_input(1, 2.0).unwrap();
        let p = g
            .add_node(
                &[x, y],
                PartialDerivs::new()
                    .grad(0, 2.0)
                    .grad(1, 3.0)
                    .hess(0, 1, 1.0),
                6.0,
            )
            .unwrap();
        g.forward_sweep().unwrap();
        let f = g.full(p).unwrap();
        assert_eq!(
            (f.hess_row.clone(), f.hess_col.clone(), f.hess.clone()),
            (vec![0], vec![1], vec![1.0])
        );
        let dense = f.symmetrize_lower(2).unwrap().lower_to_dense_symmetric();
        assert_eq!(dense, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn square_hessian_doubles_on_export() {
        let mut g = ScalarGraph::new(1);
        let x = g.add_input(0, 3.0).unwrap();
        let s = g
            .add_node(&[x], PartialDerivs::new().grad(0, 6.0).hess(0, 0, 1.0), 9.0)
            .unwrap();
        g.forward_sweep().unwrap();
        let f = g.full(s).unwrap();
        assert_eq!(f.hess, vec![1.0]);
        let lower = f.symmetrize_lower(1).unwrap();
        assert_eq!(lower.iter().collect::<Vec<_>>(), vec![(0, 0, 2.0)]);
    }

    fn x2y(x: f64, y: f64) -> (ScalarGraph, NodeId) {
        // m = x*y, f = m*x
        let mut g = ScalarGraph::new(2);
        let xi = g.add_input(0, x).unwrap();
        let yi = g.add_input(1, y).unwrap();
        let m = g
            .add_node(
                &[xi, yi],
                PartialDerivs::new().grad(0, y).grad(1, x).hess(0, 1, 1.0),
                x * y,
            )
            .unwrap();
        let f = g
            .add_node(
                &[m, xi],
                PartialDerivs::new()
                    .grad(0, x)
                    .grad(1, x * y)
                    .hess(0, 1, 1.0),
                x * x * y,
            )
            .unwrap();
        (g, f)
    }

    #[test]
    fn chained_product_matches_hand_derivatives() {
        let (mut g, f) = x2y(3.0, 2.0);
        g.forward_sweep().unwrap();
        let full = g.full(f).unwrap();
        let grad = full.gradient(2).unwrap();
        assert_eq!(grad.to_dense(), vec![12.0, 9.0]);
        let h = full.symmetrize_lower(2).unwrap();
        // the (1,1) entry never appears: no pair produces it
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![(0, 0, 4.0), (1, 0, 6.0)]);
    }

    #[test]
    fn sweep_out_of_order_is_reported() {
        let (mut g, f) = x2y(3.0, 2.0);
        assert_eq!(
            g.forward_gradient(f),
            Err(GraphError::SweepOrderViolation { node: 3, arg: 2 })
        );
        assert!(matches!(
            g.forward_hessian(f),
            Err(GraphError::SweepOrderViolation { .. })
        ));
    }

    #[test]
    fn sweep_on_inputs_only_is_noop() {
        let mut g = ScalarGraph::new(3);
        g.add_input(0, 1.0).unwrap();
        g.add_input(2, 1.0).unwrap();
        g.forward_sweep().unwrap();
        assert_eq!(g.full(NodeId(1)).unwrap().grad_idx, vec![2]);
    }

    #[test]
    fn long_squaring_chain() {
        // y_{k+1} = y_k^2 from x = 1: derivative 2^100
        let mut g = ScalarGraph::new(1);
        let mut prev = g.add_input(0, 1.0).unwrap();
        for _ in 0..100 {
            prev = g
                .add_node(
                    &[prev],
                    PartialDerivs::new().grad(0, 2.0).hess(0, 0, 1.0),
                    1.0,
                )
                .unwrap();
        }
        g.forward_sweep().unwrap();
        let grad = g.full(prev).unwrap().gradient(1).unwrap();
        assert_eq!(grad.vals, vec![2f64.powi(100)]);
        assert!(grad.vals[0].is_finite());
    }

    #[test]
    fn sweep_is_idempotent() {
        let (mut g, f) = x2y(1.5, -0.5);
        g.forward_sweep().unwrap();
        let first = g.full(f).unwrap().clone();
        g.reset();
        assert!(g.full(f).is_none());
        g.forward_sweep().unwrap();
        assert_eq!(g.full(f).unwrap(), &first);
    }
}
