//! Discretized optimal control problem: decision layout, the vectorized
//! expression graph for `FΔt` and `G_jΔt`, and NLP callbacks in COO form.
//!
//! Only the nonlinear parts go through the graph. The `D·X̄` term is linear
//! and constant, boundary rows are unit rows, and the quadrature weights are
//! applied as a row scale while flattening.

mod pointwise;
mod problem;

use thiserror::Error;

use crate::coo::{CooAssembler, CooError, CooMatrix, SparseVector, VectorAssembler};
use crate::expr::{partial_spec, Ast, CompiledExpr, ExprError, Scratch, Var};
use crate::graph::GraphError;
use crate::lgr::{time_map, Mesh};
use crate::vecgraph::{NodeId, NodeKind, PartialPattern, VecGraph, VecGraphError, VecWorkspace};

pub use pointwise::PointGraph;
pub use problem::{builtin, Bound, Bounds, MeshFile, ProblemFile, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscribeError {
    #[error("{what}: {source}")]
    Expr {
        what: String,
        #[source]
        source: ExprError,
    },
    #[error("non-finite value evaluating {output} (`{expr}`) at mesh point {row}")]
    Domain {
        output: String,
        row: usize,
        expr: String,
    },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("decision variable {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("fixed boundary values must be finite")]
    NonFiniteBound,
    #[error("invalid problem file: {0}")]
    Json(String),
    #[error(transparent)]
    Graph(#[from] VecGraphError),
    #[error(transparent)]
    ScalarGraph(#[from] GraphError),
    #[error(transparent)]
    Coo(#[from] CooError),
}

/// Position of every decision variable in `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionLayout {
    pub n: usize,
    pub n_x: usize,
    pub n_u: usize,
}

impl DecisionLayout {
    /// Start of state column `j` (`N + 1` entries: collocation points then
    /// the final point).
    pub fn x_offset(&self, j: usize) -> usize {
        j * (self.n + 1)
    }

    /// Start of control column `i` (`N` entries).
    pub fn u_offset(&self, i: usize) -> usize {
        self.n_x * (self.n + 1) + i * self.n
    }

    pub fn t0(&self) -> usize {
        self.n_z() - 2
    }

    pub fn tf(&self) -> usize {
        self.n_z() - 1
    }

    pub fn n_z(&self) -> usize {
        self.n_x * (self.n + 1) + self.n_u * self.n + 2
    }

    /// Number of collocation (dynamics) rows.
    pub fn n_dynamics(&self) -> usize {
        self.n_x * self.n
    }
}

/// Node handles of the transcription graph.
#[derive(Clone, Debug)]
pub struct GraphNodes {
    pub t0: NodeId,
    pub tf: NodeId,
    pub x: Vec<NodeId>,
    pub u: Vec<NodeId>,
    pub dt: NodeId,
    pub time: NodeId,
    pub f: NodeId,
    pub f_dt: NodeId,
    pub g: Vec<NodeId>,
    pub g_dt: Vec<NodeId>,
}

/// Compiled partials of one user expression over `Var::all(n_x, n_u)`.
#[derive(Clone, Debug)]
struct Kernel {
    label: String,
    value: CompiledExpr,
    grad: Vec<CompiledExpr>,
    hess: Vec<CompiledExpr>,
    grad_positions: Vec<usize>,
    hess_positions: Vec<(usize, usize)>,
}

impl Kernel {
    fn build(
        label: String,
        ast: &Ast,
        args: &[Var],
    ) -> Result<(Self, PartialPattern), TranscribeError> {
        let spec = partial_spec(ast, args);
        let compile = |a: &Ast| {
            CompiledExpr::compile(a, args).map_err(|source| TranscribeError::Expr {
                what: label.clone(),
                source,
            })
        };
        let mut pattern = PartialPattern::new();
        let mut grad = Vec::with_capacity(spec.grad.len());
        for (p, a) in &spec.grad {
            pattern = pattern.grad(*p);
            grad.push(compile(a)?);
        }
        let mut hess = Vec::with_capacity(spec.hess.len());
        for (r, c, a) in &spec.hess {
            pattern = pattern.hess(*r, *c);
            hess.push(compile(a)?);
        }
        let value = compile(&spec.value)?;
        let kernel = Kernel {
            label,
            value,
            grad,
            hess,
            grad_positions: pattern.grad.clone(),
            hess_positions: pattern.hess.clone(),
        };
        Ok((kernel, pattern))
    }

    fn domain(&self, e: ExprError) -> TranscribeError {
        match e {
            ExprError::Domain { row, expr } => TranscribeError::Domain {
                output: self.label.clone(),
                row,
                expr,
            },
            source => TranscribeError::Expr {
                what: self.label.clone(),
                source,
            },
        }
    }

    /// Write value and partial columns of `node`.
    fn eval(
        &self,
        node: NodeId,
        cols: &[&[f64]],
        ws: &mut VecWorkspace,
        scratch: &mut Scratch,
    ) -> Result<(), TranscribeError> {
        self.value
            .eval_into(cols, ws.value_mut(node), scratch)
            .map_err(|e| self.domain(e))?;
        for (j, g) in self.grad.iter().enumerate() {
            match g.as_const() {
                Some(c) => ws.set_partial_grad(node, j, &[c])?,
                None => g
                    .eval_into(cols, ws.partial_grad_mut(node, j), scratch)
                    .map_err(|e| self.domain(e))?,
            }
        }
        for (e, h) in self.hess.iter().enumerate() {
            match h.as_const() {
                Some(c) => ws.set_partial_hess(node, e, &[c])?,
                None => h
                    .eval_into(cols, ws.partial_hess_mut(node, e), scratch)
                    .map_err(|e| self.domain(e))?,
            }
        }
        Ok(())
    }
}

/// Objective value with sparse gradient and lower-triangle Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: SparseVector,
    pub hessian: CooMatrix,
}

/// Constraint residuals and Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintEval {
    pub residual: Vec<f64>,
    pub jacobian: CooMatrix,
}

/// Sparsity patterns reported to an NLP solver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Structures {
    pub jacobian_rows: Vec<usize>,
    pub jacobian_cols: Vec<usize>,
    pub hessian_rows: Vec<usize>,
    pub hessian_cols: Vec<usize>,
}

/// Mutable numeric state for evaluations. One per thread.
#[derive(Clone, Debug)]
pub struct Workspace {
    graph: VecWorkspace,
    scratch_times: Vec<f64>,
    buf: Vec<f64>,
    last: Option<Vec<f64>>,
}

impl Workspace {
    /// Numeric state of the underlying vector graph after the last sweep.
    pub fn graph(&self) -> &VecWorkspace {
        &self.graph
    }

    /// Forget the cached point so the next evaluation sweeps again.
    pub fn clear_cache(&mut self) {
        self.last = None;
    }
}

/// An assembled, immutable transcription.
#[derive(Clone, Debug)]
pub struct Transcription {
    spec: ProblemSpec,
    mesh: Mesh,
    layout: DecisionLayout,
    graph: VecGraph,
    nodes: GraphNodes,
    f_kernel: Kernel,
    g_kernels: Vec<Kernel>,
    /// `(decision index, fixed value)` in constraint-row order.
    boundary: Vec<(usize, f64)>,
    obj_grad: VectorAssembler,
    obj_hess: CooAssembler,
    jacobian: CooAssembler,
    /// Raw Jacobian values with the constant `D` and boundary parts filled.
    jac_template: Vec<f64>,
    /// Where each `G_jΔt` block starts in the raw Jacobian stream.
    jac_g_start: Vec<usize>,
    lagrangian: CooAssembler,
}

impl Transcription {
    pub fn build(spec: ProblemSpec, mesh: Mesh) -> Result<Self, TranscribeError> {
        spec.validate()?;
        let n = mesh.n();
        let layout = DecisionLayout {
            n,
            n_x: spec.n_x,
            n_u: spec.n_u,
        };
        let n_z = layout.n_z();
        let mut graph = VecGraph::new(n, n_z);

        let t0 = graph.add_scalar_input(layout.t0())?;
        let tf = graph.add_scalar_input(layout.tf())?;
        let x = (0..spec.n_x)
            .map(|j| graph.add_vector_input(layout.x_offset(j)))
            .collect::<Result<Vec<_>, _>>()?;
        let u = (0..spec.n_u)
            .map(|i| graph.add_vector_input(layout.u_offset(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let linear = PartialPattern::new().grad(0).grad(1);
        let dt = graph.add_vec_node(NodeKind::Scalar, &[t0, tf], linear.clone())?;
        let time = graph.add_vec_node(NodeKind::Vector, &[t0, tf], linear)?;

        let vars = Var::all(spec.n_x, spec.n_u);
        let var_nodes: Vec<NodeId> = x.iter().chain(&u).copied().chain([time]).collect();
        let coupling = PartialPattern::new().grad(0).grad(1).hess(0, 1);

        let (f_kernel, f_pattern) = Kernel::build("objective".into(), &spec.objective, &vars)?;
        let f = graph.add_vec_node(NodeKind::Vector, &var_nodes, f_pattern)?;
        let f_dt = graph.add_vec_node(NodeKind::Vector, &[f, dt], coupling.clone())?;

        let mut g = Vec::with_capacity(spec.n_x);
        let mut g_dt = Vec::with_capacity(spec.n_x);
        let mut g_kernels = Vec::with_capacity(spec.n_x);
        for (j, ast) in spec.dynamics.iter().enumerate() {
            let (kernel, pattern) = Kernel::build(format!("dynamics[{j}]"), ast, &vars)?;
            let gj = graph.add_vec_node(NodeKind::Vector, &var_nodes, pattern)?;
            g_dt.push(graph.add_vec_node(NodeKind::Vector, &[gj, dt], coupling.clone())?);
            g.push(gj);
            g_kernels.push(kernel);
        }
        let nodes = GraphNodes {
            t0,
            tf,
            x,
            u,
            dt,
            time,
            f,
            f_dt,
            g,
            g_dt,
        };

        let mut boundary = Vec::new();
        for (j, b) in spec.x_initial.iter().enumerate() {
            if let Some(v) = b.fixed() {
                boundary.push((layout.x_offset(j), v));
            }
        }
        for (j, b) in spec.x_final.iter().enumerate() {
            if let Some(v) = b.fixed() {
                boundary.push((layout.x_offset(j) + n, v));
            }
        }
        if let Some(v) = spec.t0.fixed() {
            boundary.push((layout.t0(), v));
        }
        if let Some(v) = spec.tf.fixed() {
            boundary.push((layout.tf(), v));
        }

        let grad_idx: Vec<usize> = graph.gradient_indices(f_dt).map(|(i, _)| i).collect();
        let obj_grad = VectorAssembler::new(n_z, &grad_idx)?;
        let (hr, hc): (Vec<usize>, Vec<usize>) =
            graph.hessian_indices(f_dt).map(|(r, c, _)| (r, c)).unzip();
        let obj_hess = CooAssembler::lower_symmetric(n_z, &hr, &hc)?;

        let (mut jr, mut jc, mut jac_template) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..spec.n_x {
            for &(r, c, v) in &mesh.d_triplets {
                jr.push(j * n + r);
                jc.push(layout.x_offset(j) + c);
                jac_template.push(v);
            }
        }
        let mut jac_g_start = Vec::with_capacity(spec.n_x);
        for (j, &node) in nodes.g_dt.iter().enumerate() {
            jac_g_start.push(jr.len());
            for (idx, k) in graph.gradient_indices(node) {
                jr.push(j * n + k);
                jc.push(idx);
                jac_template.push(0.0);
            }
        }
        let m_dyn = layout.n_dynamics();
        for (b, &(idx, _)) in boundary.iter().enumerate() {
            jr.push(m_dyn + b);
            jc.push(idx);
            jac_template.push(1.0);
        }
        let jacobian = CooAssembler::general(m_dyn + boundary.len(), n_z, &jr, &jc)?;

        let (mut lr, mut lc) = (hr, hc);
        for &node in &nodes.g_dt {
            for (r, c, _) in graph.hessian_indices(node) {
                lr.push(r);
                lc.push(c);
            }
        }
        let lagrangian = CooAssembler::lower_symmetric(n_z, &lr, &lc)?;

        Ok(Transcription {
            spec,
            mesh,
            layout,
            graph,
            nodes,
            f_kernel,
            g_kernels,
            boundary,
            obj_grad,
            obj_hess,
            jacobian,
            jac_template,
            jac_g_start,
            lagrangian,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> DecisionLayout {
        self.layout
    }

    pub fn graph(&self) -> &VecGraph {
        &self.graph
    }

    pub fn nodes(&self) -> &GraphNodes {
        &self.nodes
    }

    pub fn n_z(&self) -> usize {
        self.layout.n_z()
    }

    /// Dynamics rows followed by one row per fixed boundary value.
    pub fn n_constraints(&self) -> usize {
        self.layout.n_dynamics() + self.boundary.len()
    }

    /// Fixed boundary conditions as `(decision index, value)`, in row order.
    pub fn boundary_rows(&self) -> &[(usize, f64)] {
        &self.boundary
    }

    pub fn workspace(&self) -> Workspace {
        let mut graph = self.graph.workspace();
        let m = &self.mesh.points;
        let one_minus: Vec<f64> = m.iter().map(|p| 1.0 - p).collect();
        let set = |ws: &mut VecWorkspace| -> Result<(), VecGraphError> {
            ws.set_partial_grad(self.nodes.dt, 0, &[-1.0])?;
            ws.set_partial_grad(self.nodes.dt, 1, &[1.0])?;
            ws.set_partial_grad(self.nodes.time, 0, &one_minus)?;
            ws.set_partial_grad(self.nodes.time, 1, m)?;
            for &node in std::iter::once(&self.nodes.f_dt).chain(&self.nodes.g_dt) {
                ws.set_partial_hess(node, 0, &[1.0])?;
            }
            Ok(())
        };
        set(&mut graph).expect("constant partials match the graph built alongside them");
        Workspace {
            graph,
            scratch_times: Vec::new(),
            buf: Vec::new(),
            last: None,
        }
    }

    fn check_point(&self, z: &[f64]) -> Result<(), TranscribeError> {
        if z.len() != self.n_z() {
            return Err(TranscribeError::DimensionMismatch {
                what: "decision vector".into(),
                expected: self.n_z(),
                got: z.len(),
            });
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(TranscribeError::NonFiniteInput { index });
        }
        Ok(())
    }

    /// Load `z` into the workspace and sweep, unless it is already loaded.
    fn prepare(&self, ws: &mut Workspace, z: &[f64]) -> Result<(), TranscribeError> {
        self.check_point(z)?;
        if ws.last.as_deref() == Some(z) {
            return Ok(());
        }
        ws.last = None;
        let l = self.layout;
        let n = l.n;
        let (t0, tf) = (z[l.t0()], z[l.tf()]);
        let dt = tf - t0;
        ws.scratch_times = time_map(t0, tf, &self.mesh.points);

        let Workspace {
            graph: g,
            scratch_times: times,
            buf,
            ..
        } = ws;
        let nodes = &self.nodes;
        g.set_value(nodes.t0, &[t0])?;
        g.set_value(nodes.tf, &[tf])?;
        g.set_value(nodes.dt, &[dt])?;
        g.set_value(nodes.time, times)?;
        let mut cols: Vec<&[f64]> = Vec::with_capacity(l.n_x + l.n_u + 1);
        for (j, &node) in nodes.x.iter().enumerate() {
            let col = &z[l.x_offset(j)..l.x_offset(j) + n];
            g.set_value(node, col)?;
            cols.push(col);
        }
        for (i, &node) in nodes.u.iter().enumerate() {
            let col = &z[l.u_offset(i)..l.u_offset(i) + n];
            g.set_value(node, col)?;
            cols.push(col);
        }
        cols.push(times);

        let mut scratch = Scratch::default();
        let outputs = std::iter::once((&self.f_kernel, nodes.f, nodes.f_dt)).chain(
            self.g_kernels
                .iter()
                .zip(&nodes.g)
                .zip(&nodes.g_dt)
                .map(|((k, &a), &b)| (k, a, b)),
        );
        for (kernel, inner, outer) in outputs {
            kernel.eval(inner, &cols, g, &mut scratch)?;
            buf.clear();
            buf.extend_from_slice(g.value(inner));
            for (o, &v) in g.value_mut(outer).iter_mut().zip(buf.iter()) {
                *o = v * dt;
            }
            g.set_partial_grad(outer, 0, &[dt])?;
            g.partial_grad_mut(outer, 1).copy_from_slice(buf);
        }
        self.graph.sweep(g)?;
        ws.last = Some(z.to_vec());
        Ok(())
    }

    /// `J = Σ_k W_k (FΔt)_k` with gradient and lower-triangle Hessian.
    pub fn eval_objective(
        &self,
        ws: &mut Workspace,
        z: &[f64],
    ) -> Result<ObjectiveEval, TranscribeError> {
        self.prepare(ws, z)?;
        let w = &self.mesh.weights;
        let n = self.layout.n;
        let f_dt = self.nodes.f_dt;
        let value = ws.graph.value(f_dt).iter().zip(w).map(|(v, w)| v * w).sum();
        let scaled = |vals: &[f64]| -> Vec<f64> {
            vals.iter().enumerate().map(|(i, v)| v * w[i % n]).collect()
        };
        let gradient = self
            .obj_grad
            .assemble(&scaled(ws.graph.full_gradient_values(f_dt)));
        let hessian = self
            .obj_hess
            .assemble(&scaled(ws.graph.full_hessian_values(f_dt)));
        Ok(ObjectiveEval {
            value,
            gradient,
            hessian,
        })
    }

    /// Residual `D·X̄_j − G_jΔt` per state column, then boundary rows, and
    /// the Jacobian.
    pub fn eval_constraints(
        &self,
        ws: &mut Workspace,
        z: &[f64],
    ) -> Result<ConstraintEval, TranscribeError> {
        self.prepare(ws, z)?;
        let l = self.layout;
        let n = l.n;
        let mut residual = vec![0.0; self.n_constraints()];
        for j in 0..l.n_x {
            let xbar = &z[l.x_offset(j)..l.x_offset(j) + n + 1];
            let rows = &mut residual[j * n..(j + 1) * n];
            for &(r, c, v) in &self.mesh.d_triplets {
                rows[r] += v * xbar[c];
            }
            for (r, g) in rows.iter_mut().zip(ws.graph.value(self.nodes.g_dt[j])) {
                *r -= g;
            }
        }
        for (b, &(idx, v)) in self.boundary.iter().enumerate() {
            residual[l.n_dynamics() + b] = z[idx] - v;
        }

        let mut raw = self.jac_template.clone();
        for (&node, &start) in self.nodes.g_dt.iter().zip(&self.jac_g_start) {
            let vals = ws.graph.full_gradient_values(node);
            for (dst, v) in raw[start..start + vals.len()].iter_mut().zip(vals) {
                *dst = -v;
            }
        }
        Ok(ConstraintEval {
            residual,
            jacobian: self.jacobian.assemble(&raw),
        })
    }

    /// Lower triangle of `σ ∇²J + Σ λ_r ∇²c_r`.
    pub fn eval_lagrangian_hessian(
        &self,
        ws: &mut Workspace,
        z: &[f64],
        sigma: f64,
        lambda: &[f64],
    ) -> Result<CooMatrix, TranscribeError> {
        if lambda.len() != self.n_constraints() {
            return Err(TranscribeError::DimensionMismatch {
                what: "multipliers".into(),
                expected: self.n_constraints(),
                got: lambda.len(),
            });
        }
        if let Some(index) = lambda.iter().position(|v| !v.is_finite()) {
            return Err(TranscribeError::NonFiniteInput { index });
        }
        self.prepare(ws, z)?;
        let w = &self.mesh.weights;
        let n = self.layout.n;
        let mut raw = Vec::with_capacity(self.lagrangian.raw_len());
        let obj = ws.graph.full_hessian_values(self.nodes.f_dt);
        raw.extend(obj.iter().enumerate().map(|(i, v)| sigma * w[i % n] * v));
        for (j, &node) in self.nodes.g_dt.iter().enumerate() {
            let lam = &lambda[j * n..(j + 1) * n];
            let vals = ws.graph.full_hessian_values(node);
            raw.extend(vals.iter().enumerate().map(|(i, v)| -lam[i % n] * v));
        }
        Ok(self.lagrangian.assemble(&raw))
    }

    /// Jacobian and Lagrangian Hessian patterns; identical to those of every
    /// numeric evaluation.
    pub fn structures(&self) -> Structures {
        Structures {
            jacobian_rows: self.jacobian.rows().to_vec(),
            jacobian_cols: self.jacobian.cols().to_vec(),
            hessian_rows: self.lagrangian.rows().to_vec(),
            hessian_cols: self.lagrangian.cols().to_vec(),
        }
    }

    /// Nonzero indices of the objective gradient.
    pub fn objective_gradient_indices(&self) -> &[usize] {
        self.obj_grad.indices()
    }
}

#[cfg(test)]
mod tests;
