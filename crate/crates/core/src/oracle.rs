//! Independent verification: central finite differences, a dense
//! per-mesh-point second-order forward AD evaluator, and error reports.
//!
//! The dense evaluator walks the [`Ast`] directly and shares nothing with the
//! graph modules besides the elementary operator definitions.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::coo::{CooMatrix, SparseVector};
use crate::expr::{Ast, BinaryOp, UnaryOp, Var};
use crate::lgr::Mesh;
use crate::transcribe::{DecisionLayout, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("function not finite in the finite-difference stencil of coordinate {index}")]
    NonFiniteStencil { index: usize },
    #[error("shape mismatch: sparse is {sparse:?}, reference is {reference:?}")]
    ShapeMismatch {
        sparse: (usize, usize),
        reference: (usize, usize),
    },
    #[error("non-finite value evaluating `{expr}` at mesh point {row}")]
    Domain { row: usize, expr: String },
    #[error("decision vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Central differences with per-coordinate step `h·max(1, |z_i|)`.
pub fn fd_gradient(
    mut fun: impl FnMut(&[f64]) -> f64,
    z: &[f64],
    h: f64,
) -> Result<Vec<f64>, OracleError> {
    let mut p = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let step = h * z[i].abs().max(1.0);
        p[i] = z[i] + step;
        let plus = fun(&p);
        p[i] = z[i] - step;
        let minus = fun(&p);
        p[i] = z[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(OracleError::NonFiniteStencil { index: i });
        }
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector function; row-major `m x n`.
pub fn fd_jacobian(
    mut fun: impl FnMut(&[f64]) -> Vec<f64>,
    z: &[f64],
    h: f64,
) -> Result<Vec<f64>, OracleError> {
    let n = z.len();
    let mut p = z.to_vec();
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let step = h * z[i].abs().max(1.0);
        p[i] = z[i] + step;
        let plus = fun(&p);
        p[i] = z[i] - step;
        let minus = fun(&p);
        p[i] = z[i];
        if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteStencil { index: i });
        }
        columns.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect::<Vec<_>>(),
        );
    }
    let m = columns.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m * n];
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            out[r * n + c] = *v;
        }
    }
    Ok(out)
}

/// Hessian by central differences of an exact gradient, symmetrized.
pub fn fd_hessian(
    grad: impl FnMut(&[f64]) -> Vec<f64>,
    z: &[f64],
    h: f64,
) -> Result<Vec<f64>, OracleError> {
    let n = z.len();
    let mut hess = fd_jacobian(grad, z, h)?;
    for r in 0..n {
        for c in 0..r {
            let avg = 0.5 * (hess[r * n + c] + hess[c * n + r]);
            hess[r * n + c] = avg;
            hess[c * n + r] = avg;
        }
    }
    Ok(hess)
}

/// Value with dense gradient and dense symmetric Hessian (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDerivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl DenseDerivs {
    fn zero(n: usize) -> Self {
        DenseDerivs {
            value: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }
}

/// Objective and every constraint row, each with dense derivatives.
#[derive(Clone, Debug)]
pub struct DenseNlp {
    pub n_z: usize,
    pub objective: DenseDerivs,
    pub constraints: Vec<DenseDerivs>,
}

impl DenseNlp {
    pub fn residual(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value).collect()
    }

    /// Row-major `m x n_z` Jacobian.
    pub fn jacobian(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .flat_map(|c| c.grad.iter().copied())
            .collect()
    }

    /// Dense `σ ∇²J + Σ λ_r ∇²c_r`.
    pub fn lagrangian_hessian(&self, sigma: f64, lambda: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.objective.hess.iter().map(|v| sigma * v).collect();
        for (c, &l) in self.constraints.iter().zip(lambda) {
            if l != 0.0 {
                for (o, v) in out.iter_mut().zip(&c.hess) {
                    *o += l * v;
                }
            }
        }
        out
    }
}

/// Second-order forward dual number over `n` local variables.
#[derive(Clone, Debug)]
struct Dual2 {
    v: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Dual2 {
    fn constant(v: f64, n: usize) -> Self {
        Dual2 {
            v,
            g: vec![0.0; n],
            h: vec![0.0; n * n],
        }
    }

    fn n(&self) -> usize {
        self.g.len()
    }

    fn linear(v: f64, g: Vec<f64>) -> Self {
        let n = g.len();
        Dual2 {
            v,
            g,
            h: vec![0.0; n * n],
        }
    }

    fn add(&self, o: &Dual2, sign: f64) -> Dual2 {
        Dual2 {
            v: self.v + sign * o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a + sign * b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a + sign * b).collect(),
        }
    }

    fn mul(&self, o: &Dual2) -> Dual2 {
        let n = self.n();
        let mut h = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                h[i] = self.v * o.h[i] + o.v * self.h[i] + self.g[r] * o.g[c] + o.g[r] * self.g[c];
            }
        }
        Dual2 {
            v: self.v * o.v,
            g: self
                .g
                .iter()
                .zip(&o.g)
                .map(|(a, b)| self.v * b + o.v * a)
                .collect(),
            h,
        }
    }

    /// `φ(self)` given `φ`, `φ'`, `φ''` at `self.v`.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Dual2 {
        let n = self.n();
        let mut h = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                h[r * n + c] = f1 * self.h[r * n + c] + f2 * self.g[r] * self.g[c];
            }
        }
        Dual2 {
            v: f0,
            g: self.g.iter().map(|a| f1 * a).collect(),
            h,
        }
    }

    fn finite(&self) -> bool {
        self.v.is_finite() && self.g.iter().chain(&self.h).all(|v| v.is_finite())
    }
}

fn unary(op: UnaryOp, a: &Dual2) -> Dual2 {
    let x = a.v;
    let (f1, f2) = match op {
        UnaryOp::Neg => (-1.0, 0.0),
        UnaryOp::Sin => (x.cos(), -x.sin()),
        UnaryOp::Cos => (-x.sin(), -x.cos()),
        UnaryOp::Tan => {
            let s = 1.0 / (x.cos() * x.cos());
            (s, 2.0 * s * x.tan())
        }
        UnaryOp::Exp => (x.exp(), x.exp()),
        UnaryOp::Log => (1.0 / x, -1.0 / (x * x)),
        UnaryOp::Sqrt => {
            let s = x.sqrt();
            (0.5 / s, -0.25 / (s * x))
        }
    };
    a.chain(op.apply(x), f1, f2)
}

fn binary(op: BinaryOp, a: &Dual2, b: &Dual2, b_const: Option<f64>) -> Dual2 {
    match op {
        BinaryOp::Add => a.add(b, 1.0),
        BinaryOp::Sub => a.add(b, -1.0),
        BinaryOp::Mul => a.mul(b),
        BinaryOp::Div => {
            let y = b.v;
            a.mul(&b.chain(1.0 / y, -1.0 / (y * y), 2.0 / (y * y * y)))
        }
        BinaryOp::Pow => match b_const {
            Some(c) => {
                let x = a.v;
                let p = |e: f64| BinaryOp::Pow.apply(x, e);
                let f1 = if c == 0.0 { 0.0 } else { c * p(c - 1.0) };
                let f2 = if c == 0.0 || c == 1.0 {
                    0.0
                } else {
                    c * (c - 1.0) * p(c - 2.0)
                };
                a.chain(BinaryOp::Pow.apply(x, c), f1, f2)
            }
            None => {
                let log_a = unary(UnaryOp::Log, a);
                unary(UnaryOp::Exp, &b.mul(&log_a))
            }
        },
    }
}

/// Evaluate `ast` with duals for its variables.
fn eval_dual(ast: &Ast, vars: &dyn Fn(Var) -> Dual2, n: usize) -> Dual2 {
    match ast {
        Ast::Const(c) => Dual2::constant(*c, n),
        Ast::Var(v) => vars(*v),
        Ast::Unary(op, a) => unary(*op, &eval_dual(a, vars, n)),
        Ast::Binary(op, a, b) => {
            let da = eval_dual(a, vars, n);
            let db = eval_dual(b, vars, n);
            binary(*op, &da, &db, b.as_const())
        }
    }
}

/// Evaluate the discretized problem at `z`, one mesh point at a time, with
/// dense derivatives and no sparsity.
pub fn dense_eval(spec: &ProblemSpec, mesh: &Mesh, z: &[f64]) -> Result<DenseNlp, OracleError> {
    let n = mesh.n();
    let layout = DecisionLayout {
        n,
        n_x: spec.n_x,
        n_u: spec.n_u,
    };
    let n_z = layout.n_z();
    if z.len() != n_z {
        return Err(OracleError::DimensionMismatch {
            expected: n_z,
            got: z.len(),
        });
    }
    let (n_x, n_u) = (spec.n_x, spec.n_u);
    // local variables per mesh point: x_1..x_nx, u_1..u_nu, t0, tf
    let nl = n_x + n_u + 2;
    let (lt0, ltf) = (nl - 2, nl - 1);
    let (t0, tf) = (z[layout.t0()], z[layout.tf()]);
    let unit = |i: usize| {
        let mut g = vec![0.0; nl];
        g[i] = 1.0;
        g
    };
    let mut dt_grad = vec![0.0; nl];
    dt_grad[lt0] = -1.0;
    dt_grad[ltf] = 1.0;
    let dt = Dual2::linear(tf - t0, dt_grad);

    let mut objective = DenseDerivs::zero(n_z);
    let mut dynamics: Vec<DenseDerivs> = (0..n_x * n).map(|_| DenseDerivs::zero(n_z)).collect();

    for k in 0..n {
        let m = mesh.points[k];
        let global: Vec<usize> = (0..n_x)
            .map(|j| layout.x_offset(j) + k)
            .chain((0..n_u).map(|i| layout.u_offset(i) + k))
            .chain([layout.t0(), layout.tf()])
            .collect();
        let vars = |v: Var| match v {
            Var::X(j) => Dual2::linear(z[global[j]], unit(j)),
            Var::U(i) => Dual2::linear(z[global[n_x + i]], unit(n_x + i)),
            Var::T => {
                let mut g = vec![0.0; nl];
                g[lt0] = 1.0 - m;
                g[ltf] = m;
                Dual2::linear((1.0 - m) * t0 + m * tf, g)
            }
        };
        let check = |d: Dual2, ast: &Ast| {
            if d.finite() {
                Ok(d)
            } else {
                Err(OracleError::Domain {
                    row: k,
                    expr: ast.to_string(),
                })
            }
        };
        let f = check(eval_dual(&spec.objective, &vars, nl), &spec.objective)?;
        scatter(&mut objective, &f.mul(&dt), mesh.weights[k], &global);
        for (j, g_ast) in spec.dynamics.iter().enumerate() {
            let g = check(eval_dual(g_ast, &vars, nl), g_ast)?;
            scatter(&mut dynamics[j * n + k], &g.mul(&dt), -1.0, &global);
        }
    }

    for j in 0..n_x {
        let off = layout.x_offset(j);
        for &(r, c, v) in &mesh.d_triplets {
            let row = &mut dynamics[j * n + r];
            row.value += v * z[off + c];
            row.grad[off + c] += v;
        }
    }

    let mut constraints = dynamics;
    let mut fixed = Vec::new();
    for (j, b) in spec.x_initial.iter().enumerate() {
        fixed.extend(b.fixed().map(|v| (layout.x_offset(j), v)));
    }
    for (j, b) in spec.x_final.iter().enumerate() {
        fixed.extend(b.fixed().map(|v| (layout.x_offset(j) + n, v)));
    }
    fixed.extend(spec.t0.fixed().map(|v| (layout.t0(), v)));
    fixed.extend(spec.tf.fixed().map(|v| (layout.tf(), v)));
    for (idx, v) in fixed {
        let mut row = DenseDerivs::zero(n_z);
        row.value = z[idx] - v;
        row.grad[idx] = 1.0;
        constraints.push(row);
    }
    Ok(DenseNlp {
        n_z,
        objective,
        constraints,
    })
}

fn scatter(out: &mut DenseDerivs, d: &Dual2, scale: f64, global: &[usize]) {
    let nl = global.len();
    let n_z = out.grad.len();
    out.value += scale * d.v;
    for (a, &ga) in global.iter().enumerate() {
        out.grad[ga] += scale * d.g[a];
        for (b, &gb) in global.iter().enumerate() {
            out.hess[ga * n_z + gb] += scale * d.h[a * nl + b];
        }
    }
}

/// Error summary of a sparse result against a dense reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub max_abs: f64,
    /// Relative error with denominator `max(1, |reference|)`.
    pub max_rel: f64,
    /// `(row, col)` of the largest relative error; `col` is 0 for vectors.
    pub worst: Option<(usize, usize)>,
    pub tol: f64,
    pub pass: bool,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_abs={:.3e} max_rel={:.3e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_abs,
            self.max_rel,
            self.tol
        )?;
        if let Some((r, c)) = self.worst {
            write!(f, " worst=({r}, {c})")?;
        }
        Ok(())
    }
}

fn report(got: &[f64], reference: &[f64], ncols: usize, tol: f64) -> CompareReport {
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut worst = None;
    for (i, (a, b)) in got.iter().zip(reference).enumerate() {
        let abs = (a - b).abs();
        let rel = abs / b.abs().max(1.0);
        // NaN compares false, so treat it explicitly as the worst entry
        if rel > max_rel || (rel.is_nan() && !max_rel.is_nan()) {
            max_rel = rel;
            worst = Some((i / ncols, i % ncols));
        }
        if abs > max_abs || abs.is_nan() {
            max_abs = abs;
        }
    }
    CompareReport {
        max_abs,
        max_rel,
        worst,
        tol,
        pass: max_rel <= tol,
    }
}

pub fn compare_vector(
    sparse: &SparseVector,
    dense: &[f64],
    tol: f64,
) -> Result<CompareReport, OracleError> {
    if sparse.len != dense.len() {
        return Err(OracleError::ShapeMismatch {
            sparse: (sparse.len, 1),
            reference: (dense.len(), 1),
        });
    }
    Ok(report(&sparse.to_dense(), dense, 1, tol))
}

fn check_shape(
    sparse: &CooMatrix,
    rows: usize,
    cols: usize,
    len: usize,
) -> Result<(), OracleError> {
    if (sparse.nrows, sparse.ncols) != (rows, cols) || rows * cols != len {
        return Err(OracleError::ShapeMismatch {
            sparse: (sparse.nrows, sparse.ncols),
            reference: (rows, cols),
        });
    }
    Ok(())
}

/// Compare a general COO matrix with a row-major dense `rows x cols` matrix.
pub fn compare_matrix(
    sparse: &CooMatrix,
    dense: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
) -> Result<CompareReport, OracleError> {
    check_shape(sparse, rows, cols, dense.len())?;
    Ok(report(&sparse.to_dense(), dense, cols, tol))
}

/// Compare a lower-triangle COO with a dense symmetric matrix. The reference
/// is folded to its lower triangle; upper-triangle sparse entries are folded
/// onto their mirror.
pub fn compare_lower(
    sparse: &CooMatrix,
    dense: &[f64],
    n: usize,
    tol: f64,
) -> Result<CompareReport, OracleError> {
    check_shape(sparse, n, n, dense.len())?;
    let mut got = vec![0.0; n * n];
    for (r, c, v) in sparse.iter() {
        got[r.max(c) * n + r.min(c)] += v;
    }
    let mut lower = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..=r {
            lower[r * n + c] = dense[r * n + c];
        }
    }
    Ok(report(&got, &lower, n, tol))
}
