//! The same graph evaluated one mesh point at a time on scalars. Used to
//! confirm that every row of the vectorized computation is an independent
//! scalar chain rule.

use crate::graph::{NodeId, PartialDerivs, ScalarGraph};

use super::{Kernel, TranscribeError, Transcription};

/// A swept scalar graph for a single mesh point.
#[derive(Clone, Debug)]
pub struct PointGraph {
    pub graph: ScalarGraph,
    pub f: NodeId,
    pub f_dt: NodeId,
    pub g: Vec<NodeId>,
    pub g_dt: Vec<NodeId>,
}

impl Kernel {
    fn point(&self, args: &[f64]) -> Result<(f64, PartialDerivs), TranscribeError> {
        let value = self.value.eval_point(args).map_err(|e| self.domain(e))?;
        let mut partial = PartialDerivs::new();
        for (g, p) in self.grad.iter().zip(&self.grad_positions) {
            partial = partial.grad(*p, g.eval_point(args).map_err(|e| self.domain(e))?);
        }
        for (h, &(r, c)) in self.hess.iter().zip(&self.hess_positions) {
            partial = partial.hess(r, c, h.eval_point(args).map_err(|e| self.domain(e))?);
        }
        Ok((value, partial))
    }
}

impl Transcription {
    /// Scalar graph for mesh point `k` at `z`, fully swept.
    pub fn pointwise_graph(&self, z: &[f64], k: usize) -> Result<PointGraph, TranscribeError> {
        self.check_point(z)?;
        let l = self.layout;
        if k >= l.n {
            return Err(TranscribeError::DimensionMismatch {
                what: "mesh point".into(),
                expected: l.n,
                got: k,
            });
        }
        let mut graph = ScalarGraph::new(l.n_z());
        let (t0v, tfv) = (z[l.t0()], z[l.tf()]);
        let t0 = graph.add_input(l.t0(), t0v)?;
        let tf = graph.add_input(l.tf(), tfv)?;
        let mut vars = Vec::with_capacity(l.n_x + l.n_u + 1);
        let mut vals = Vec::with_capacity(l.n_x + l.n_u + 1);
        for j in 0..l.n_x {
            let idx = l.x_offset(j) + k;
            vars.push(graph.add_input(idx, z[idx])?);
            vals.push(z[idx]);
        }
        for i in 0..l.n_u {
            let idx = l.u_offset(i) + k;
            vars.push(graph.add_input(idx, z[idx])?);
            vals.push(z[idx]);
        }
        let dt = tfv - t0v;
        let dt_node = graph.add_node(
            &[t0, tf],
            PartialDerivs::new().grad(0, -1.0).grad(1, 1.0),
            dt,
        )?;
        let m = self.mesh.points[k];
        let time = crate::lgr::time_map(t0v, tfv, &[m])[0];
        let t_node = graph.add_node(
            &[t0, tf],
            PartialDerivs::new().grad(0, 1.0 - m).grad(1, m),
            time,
        )?;
        vars.push(t_node);
        vals.push(time);

        let couple = |graph: &mut ScalarGraph,
                      kernel: &Kernel|
         -> Result<(NodeId, NodeId), TranscribeError> {
            let (v, partial) = kernel.point(&vals)?;
            let inner = graph.add_node(&vars, partial, v)?;
            let outer = graph.add_node(
                &[inner, dt_node],
                PartialDerivs::new().grad(0, dt).grad(1, v).hess(0, 1, 1.0),
                v * dt,
            )?;
            Ok((inner, outer))
        };
        let (f, f_dt) = couple(&mut graph, &self.f_kernel)?;
        let mut g = Vec::with_capacity(l.n_x);
        let mut g_dt = Vec::with_capacity(l.n_x);
        for kernel in &self.g_kernels {
            let (a, b) = couple(&mut graph, kernel)?;
            g.push(a);
            g_dt.push(b);
        }
        graph.forward_sweep()?;
        Ok(PointGraph {
            graph,
            f,
            f_dt,
            g,
            g_dt,
        })
    }
}
