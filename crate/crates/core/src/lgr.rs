//! Legendre-Gauss-Radau collocation data on a segmented mesh over `[0, 1]`.
//!
//! Each segment of degree `d` contributes `d` collocation points (the roots
//! of `P_{d-1} + P_d`, which include the left endpoint), their quadrature
//! weights, and a `d x (d + 1)` differentiation block whose extra support
//! node is the segment's right endpoint. Blocks are placed on the diagonal
//! of the global `N x (N + 1)` matrix `D`, so `nnz(D)` grows linearly with
//! the number of segments.

use thiserror::Error;

pub const MAX_DEGREE: usize = 64;

/// Largest Newton correction `|f / f'|` accepted at a polished root. The raw
/// value `|f|` itself bottoms out near `d * eps` from recurrence roundoff.
const ROOT_RESIDUAL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LgrError {
    #[error("degree {0} outside 1..={MAX_DEGREE}")]
    DegreeOutOfRange(usize),
    #[error("root polishing for degree {degree} stalled at residual {residual:e}")]
    ConvergenceFailure { degree: usize, residual: f64 },
    #[error("mesh boundaries must be strictly increasing (at index {0})")]
    MeshNotIncreasing(usize),
    #[error("mesh boundaries must start at 0 and end at 1")]
    MeshEndpoints,
    #[error("degree count {degrees} does not match segment count {segments}")]
    DegreeCountMismatch { degrees: usize, segments: usize },
}

fn check_degree(d: usize) -> Result<(), LgrError> {
    if (1..=MAX_DEGREE).contains(&d) {
        Ok(())
    } else {
        Err(LgrError::DegreeOutOfRange(d))
    }
}

/// `(P_n(x), P_n'(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64, f64) {
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp, p_prev)
}

/// `P_{d-1}(x) + P_d(x)` and its derivative.
fn radau_poly(d: usize, x: f64) -> (f64, f64) {
    let (p, dp, p_prev) = legendre(d, x);
    let (_, dp_prev, _) = legendre(d - 1, x);
    (p_prev + p, dp_prev + dp)
}

/// Jacobi `P_n^{(0,1)}(x)` and its derivative. Its roots are the interior
/// LGR points: `P_{d-1} + P_d = (1 + x) P_{d-1}^{(0,1)}` up to a constant.
fn jacobi01(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, (3.0 * x - 1.0) / 2.0);
    let (mut dp_prev, mut dp) = (0.0, 1.5);
    for k in 2..=n {
        let kf = k as f64;
        let a = (2.0 * kf + 1.0) * (2.0 * kf - 1.0);
        let b = (kf - 1.0) * (2.0 * kf + 1.0);
        let c = (kf + 1.0) * (2.0 * kf - 1.0);
        let p_next = ((a * x - 1.0) * p - b * p_prev) / c;
        let dp_next = (a * p + (a * x - 1.0) * dp - b * dp_prev) / c;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Double-double value `hi + lo` for residual evaluation near a root.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd(s, lo - (s - hi))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        Dd::norm(s.0, s.1 + self.1 + o.1)
    }

    fn scale(self, c: f64) -> Dd {
        let p = self.0 * c;
        Dd::norm(p, self.0.mul_add(c, -p) + self.1 * c)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        Dd::norm(p, self.0.mul_add(o.0, -p) + self.0 * o.1 + self.1 * o.0)
    }

    fn div_dd(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        let r = self.add(o.scale(-q));
        Dd::norm(q, r.0 / o.0)
    }

    fn div(self, c: f64) -> Dd {
        let q = self.0 / c;
        let r = self.add(Dd(q, 0.0).scale(-c));
        Dd::norm(q, r.0 / c)
    }
}

/// `P_n'(x)` accumulated in double-double.
fn legendre_deriv_dd(n: usize, xd: Dd) -> Dd {
    if n == 0 {
        return Dd(0.0, 0.0);
    }
    let (mut p_prev, mut p) = (Dd(1.0, 0.0), xd);
    let (mut dp_prev, mut dp) = (Dd(0.0, 0.0), Dd(1.0, 0.0));
    for k in 1..n {
        let kf = k as f64;
        let p_next = xd
            .mul(p)
            .scale(2.0 * kf + 1.0)
            .add(p_prev.scale(-kf))
            .div(kf + 1.0);
        let dp_next = dp_prev.add(p.scale(2.0 * kf + 1.0));
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    dp
}

/// [`jacobi01`] with the value accumulated in double-double.
fn jacobi01_dd(n: usize, x: f64) -> (f64, f64) {
    let (_, dp) = jacobi01(n, x);
    if n == 0 {
        return (1.0, dp);
    }
    let xd = Dd(x, 0.0);
    let mut p_prev = Dd(1.0, 0.0);
    let mut p = xd.scale(3.0).add(Dd(-1.0, 0.0)).div(2.0);
    for k in 2..=n {
        let kf = k as f64;
        let a = (2.0 * kf + 1.0) * (2.0 * kf - 1.0);
        let b = (kf - 1.0) * (2.0 * kf + 1.0);
        let c = (kf + 1.0) * (2.0 * kf - 1.0);
        let lead = xd.scale(a).add(Dd(-1.0, 0.0));
        let next = lead.mul(p).add(p_prev.scale(-b)).div(c);
        p_prev = p;
        p = next;
    }
    (p.0 + p.1, dp)
}

/// LGR points on `[-1, 1)`, ascending, first point exactly `-1`.
pub fn lgr_points(d: usize) -> Result<Vec<f64>, LgrError> {
    check_degree(d)?;
    let m = d - 1;
    let mut roots: Vec<f64> = (1..d)
        .map(|k| -(2.0 * std::f64::consts::PI * k as f64 / (2 * d - 1) as f64).cos())
        .collect();

    // Simultaneous Newton with deflation against the other roots (Aberth).
    for _ in 0..200 {
        let mut max_step: f64 = 0.0;
        for i in 0..m {
            let xi = roots[i];
            let (f, df) = jacobi01(m, xi);
            if f == 0.0 {
                continue;
            }
            let ratio = f / df;
            let repel: f64 = roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| 1.0 / (xi - xj))
                .sum();
            let step = ratio / (1.0 - ratio * repel);
            roots[i] = xi - step;
            max_step = max_step.max(step.abs());
        }
        if max_step <= 1e-16 {
            break;
        }
    }
    // polish to the last ulp with an extended-precision residual
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let (f, df) = jacobi01_dd(m, *r);
            let next = *r - f / df;
            if next == *r || f == 0.0 {
                break;
            }
            *r = next;
        }
    }
    roots.insert(0, -1.0);
    roots.sort_by(f64::total_cmp);
    for &r in &roots {
        let (f, df) = radau_poly(d, r);
        let correction = (f / df).abs();
        if !(correction <= ROOT_RESIDUAL) || !(-1.0..1.0).contains(&r) {
            return Err(LgrError::ConvergenceFailure {
                degree: d,
                residual: correction,
            });
        }
    }
    if roots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LgrError::ConvergenceFailure {
            degree: d,
            residual: f64::NAN,
        });
    }
    Ok(roots)
}

fn weights_at(d: usize, points: &[f64]) -> Result<Vec<f64>, LgrError> {
    let d2 = (d * d) as f64;
    // interior: 1 / ((1 - x) P'_{d-1}(x)^2), equal to (1 - x) / (d P_{d-1}(x))^2
    // at the roots; evaluated at the double-double root so the rounding of
    // the stored point does not leak into the weight
    let w: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 {
                2.0 / d2
            } else {
                // the root to double-double precision: x - f/f'
                let (f, df) = jacobi01_dd(d - 1, x);
                let xd = Dd::norm(x, -f / df);
                let dp = legendre_deriv_dd(d - 1, xd);
                let denom = Dd(1.0, 0.0).add(xd.scale(-1.0)).mul(dp).mul(dp);
                let w = Dd(1.0, 0.0).div_dd(denom);
                w.0 + w.1
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if (total - 2.0).abs() > 1e-12 || w.iter().any(|&v| !(v > 0.0)) {
        return Err(LgrError::ConvergenceFailure {
            degree: d,
            residual: (total - 2.0).abs(),
        });
    }
    Ok(w)
}

/// LGR quadrature weights on `[-1, 1]`; they sum to 2 and integrate
/// polynomials up to degree `2d - 2` exactly.
pub fn lgr_weights(d: usize) -> Result<Vec<f64>, LgrError> {
    let points = lgr_points(d)?;
    weights_at(d, &points)
}

/// Barycentric differentiation matrix rows for the first `rows` nodes.
fn barycentric_diff(support: &[f64], rows: usize) -> Vec<Vec<f64>> {
    let m = support.len();
    let lambda: Vec<f64> = (0..m)
        .map(|j| {
            let prod: f64 = (0..m)
                .filter(|&k| k != j)
                .map(|k| support[j] - support[k])
                .product();
            1.0 / prod
        })
        .collect();
    (0..rows)
        .map(|k| {
            let mut row = vec![0.0; m];
            let mut diag = 0.0;
            for j in 0..m {
                if j != k {
                    row[j] = lambda[j] / lambda[k] / (support[k] - support[j]);
                    diag -= row[j];
                }
            }
            row[k] = diag;
            row
        })
        .collect()
}

/// `d x (d + 1)` differentiation block on `[-1, 1]`: entry `(k, j)` is the
/// derivative of the `j`-th Lagrange basis polynomial over the support
/// nodes (LGR points and `+1`) at collocation point `k`.
pub fn differentiation_block(d: usize) -> Result<Vec<Vec<f64>>, LgrError> {
    let mut support = lgr_points(d)?;
    support.push(1.0);
    Ok(barycentric_diff(&support, d))
}

/// Segmented mesh description: `boundaries[0] = 0 < ... < boundaries[S] = 1`
/// and one degree per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub boundaries: Vec<f64>,
    pub degrees: Vec<usize>,
}

impl MeshSpec {
    pub fn new(boundaries: Vec<f64>, degrees: Vec<usize>) -> Self {
        MeshSpec {
            boundaries,
            degrees,
        }
    }

    /// `segments` equal segments of the same degree.
    pub fn uniform(segments: usize, degree: usize) -> Self {
        let boundaries = (0..=segments)
            .map(|i| {
                if i == segments {
                    1.0
                } else {
                    i as f64 / segments as f64
                }
            })
            .collect();
        MeshSpec {
            boundaries,
            degrees: vec![degree; segments],
        }
    }

    pub fn validate(&self) -> Result<(), LgrError> {
        let segments = self.boundaries.len().saturating_sub(1);
        if self.degrees.len() != segments || segments == 0 {
            return Err(LgrError::DegreeCountMismatch {
                degrees: self.degrees.len(),
                segments,
            });
        }
        if self.boundaries[0] != 0.0 || self.boundaries[segments] != 1.0 {
            return Err(LgrError::MeshEndpoints);
        }
        if let Some(i) = self.boundaries.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(LgrError::MeshNotIncreasing(i + 1));
        }
        for &d in &self.degrees {
            check_degree(d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    /// Global index of the segment's first collocation point.
    pub offset: usize,
    pub degree: usize,
    pub start: f64,
    pub length: f64,
}

/// Global collocation data: points `M`, weights `W` and the block-diagonal
/// `N x (N + 1)` differentiation matrix `D` (row-major triplets).
#[derive(Clone, Debug)]
pub struct Mesh {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub d_triplets: Vec<(usize, usize, f64)>,
    pub segments: Vec<Segment>,
}

impl Mesh {
    /// Number of collocation points `N`.
    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// The `N + 1` support nodes: collocation points followed by `1`.
    pub fn support_nodes(&self) -> Vec<f64> {
        let mut s = self.points.clone();
        s.push(1.0);
        s
    }

    /// Row-major dense copy of `D`.
    pub fn d_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n + 1]; n];
        for &(r, c, v) in &self.d_triplets {
            out[r][c] = v;
        }
        out
    }
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh, LgrError> {
    spec.validate()?;
    let n: usize = spec.degrees.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut d_triplets = Vec::with_capacity(spec.degrees.iter().map(|d| d * (d + 1)).sum());
    let mut segments = Vec::with_capacity(spec.degrees.len());
    let mut offset = 0;
    for (s, &d) in spec.degrees.iter().enumerate() {
        let start = spec.boundaries[s];
        let length = spec.boundaries[s + 1] - start;
        let xi = lgr_points(d)?;
        let w = weights_at(d, &xi)?;
        let mut support = xi.clone();
        support.push(1.0);
        let block = barycentric_diff(&support, d);
        for (k, (&x, &wk)) in xi.iter().zip(&w).enumerate() {
            // first point lands exactly on the boundary since x = -1
            points.push(if k == 0 {
                start
            } else {
                start + length * (x + 1.0) / 2.0
            });
            weights.push(length / 2.0 * wk);
        }
        let scale = 2.0 / length;
        for (k, row) in block.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                d_triplets.push((offset + k, offset + j, scale * v));
            }
        }
        segments.push(Segment {
            offset,
            degree: d,
            start,
            length,
        });
        offset += d;
    }
    Ok(Mesh {
        points,
        weights,
        d_triplets,
        segments,
    })
}

/// Times at the mesh points: `(1 - M) t0 + M tf`.
pub fn time_map(t0: f64, tf: f64, points: &[f64]) -> Vec<f64> {
    points.iter().map(|&m| (1.0 - m) * t0 + m * tf).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn low_degree_points() {
        assert_eq!(lgr_points(1).unwrap(), vec![-1.0]);
        let p = lgr_points(2).unwrap();
        assert_eq!(p[0], -1.0);
        assert_eq!(p[1], 1.0 / 3.0);
        // (3x - 1)(x + 1) / 2 has residual below 1e-15 at the computed root
        assert!(((3.0 * p[1] - 1.0) * (p[1] + 1.0) / 2.0).abs() < 1e-15);
        let p = lgr_points(3).unwrap();
        assert_eq!(p.len(), 3);
        for x in p {
            assert!(radau_poly(3, x).0.abs() < 1e-14);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn degree_five_reference() {
        // 40-digit reference values
        let x = [
            -1.0,
            -0.7204802713124388957,
            -0.16718086473783364011,
            0.44631397272375234464,
            0.88579160777096463561,
        ];
        let w = [
            0.08,
            0.44620780216714148881,
            0.62365304595148250816,
            0.56271203029892412038,
            0.28742712158245188265,
        ];
        for (a, b) in lgr_points(5).unwrap().iter().zip(x) {
            assert!(close(*a, b, 2e-16), "{a} vs {b}");
        }
        for (a, b) in lgr_weights(5).unwrap().iter().zip(w) {
            assert!(close(*a, b, 2e-16), "{a} vs {b}");
        }
    }

    #[test]
    fn degree_bounds() {
        assert_eq!(lgr_points(0), Err(LgrError::DegreeOutOfRange(0)));
        assert_eq!(lgr_points(65), Err(LgrError::DegreeOutOfRange(65)));
        for d in 1..=MAX_DEGREE {
            let p = lgr_points(d).unwrap_or_else(|e| panic!("degree {d}: {e}"));
            assert_eq!(p.len(), d);
            assert!(p.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn low_degree_weights() {
        assert_eq!(lgr_weights(1).unwrap(), vec![2.0]);
        assert_eq!(lgr_weights(2).unwrap(), vec![0.5, 1.5]);
        let x = lgr_points(3).unwrap();
        let w = lgr_weights(3).unwrap();
        assert!(close(w.iter().sum(), 2.0, 1e-14));
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!(close(q, 0.4, 1e-13));
    }

    #[test]
    fn differentiation_blocks() {
        assert_eq!(differentiation_block(1).unwrap(), vec![vec![-0.5, 0.5]]);
        let d = differentiation_block(2).unwrap();
        let expected = [[-1.25, 2.25, -1.0], [-0.25, -0.75, 1.0]];
        for (row, e) in d.iter().zip(expected) {
            for (a, b) in row.iter().zip(e) {
                assert!(close(*a, b, 1e-14), "{d:?}");
            }
        }
        for deg in 1..=20 {
            let mut support = lgr_points(deg).unwrap();
            support.push(1.0);
            for row in differentiation_block(deg).unwrap() {
                let s: f64 = row.iter().sum();
                let dx: f64 = row.iter().zip(&support).map(|(a, x)| a * x).sum();
                assert!(s.abs() < 1e-12);
                assert!(close(dx, 1.0, 1e-12));
            }
        }
    }

    #[test]
    fn single_segment_degree_two() {
        let mesh = build_mesh(&MeshSpec::new(vec![0.0, 1.0], vec![2])).unwrap();
        assert_eq!(mesh.points[0], 0.0);
        assert!(close(mesh.points[1], 2.0 / 3.0, 1e-15));
        assert!(close(mesh.weights[0], 0.25, 1e-15) && close(mesh.weights[1], 0.75, 1e-15));
        let expected = [[-2.5, 4.5, -2.0], [-0.5, -1.5, 2.0]];
        for (row, e) in mesh.d_dense().iter().zip(expected) {
            for (a, b) in row.iter().zip(e) {
                assert!(close(*a, b, 1e-14));
            }
        }
        let first_moment: f64 = mesh
            .weights
            .iter()
            .zip(&mesh.points)
            .map(|(w, m)| w * m)
            .sum();
        assert!(close(first_moment, 0.5, 1e-15));
    }

    #[test]
    fn two_linear_segments() {
        let mesh = build_mesh(&MeshSpec::new(vec![0.0, 0.5, 1.0], vec![1, 1])).unwrap();
        assert_eq!(mesh.points, vec![0.0, 0.5]);
        assert_eq!(mesh.weights, vec![0.5, 0.5]);
        assert_eq!(
            mesh.d_dense(),
            vec![vec![-2.0, 2.0, 0.0], vec![0.0, -2.0, 2.0]]
        );
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(
            build_mesh(&MeshSpec::new(vec![0.0, 0.5, 0.4, 1.0], vec![1, 1, 1])).unwrap_err(),
            LgrError::MeshNotIncreasing(2)
        );
        assert_eq!(
            build_mesh(&MeshSpec::new(vec![0.0, 0.5, 1.0], vec![1])).unwrap_err(),
            LgrError::DegreeCountMismatch {
                degrees: 1,
                segments: 2
            }
        );
        assert_eq!(
            build_mesh(&MeshSpec::new(vec![0.1, 1.0], vec![1])).unwrap_err(),
            LgrError::MeshEndpoints
        );
        assert_eq!(
            build_mesh(&MeshSpec::new(vec![0.0, 1.0], vec![0])).unwrap_err(),
            LgrError::DegreeOutOfRange(0)
        );
    }

    #[test]
    fn block_sparsity_and_boundaries() {
        let spec = MeshSpec::new(vec![0.0, 0.1, 0.45, 1.0], vec![3, 5, 2]);
        let mesh = build_mesh(&spec).unwrap();
        assert_eq!(mesh.n(), 10);
        assert_eq!(mesh.d_triplets.len(), 3 * 4 + 5 * 6 + 2 * 3);
        for seg in &mesh.segments {
            assert_eq!(mesh.points[seg.offset], seg.start);
        }
        for &(r, c, _) in &mesh.d_triplets {
            let seg = mesh
                .segments
                .iter()
                .find(|s| r >= s.offset && r < s.offset + s.degree)
                .unwrap();
            assert!(c >= seg.offset && c <= seg.offset + seg.degree);
        }
        assert!(close(mesh.weights.iter().sum(), 1.0, 1e-14));
    }

    #[test]
    fn time_map_examples() {
        assert_eq!(time_map(0.0, 2.0, &[0.0, 2.0 / 3.0]), vec![0.0, 4.0 / 3.0]);
        assert_eq!(time_map(1.0, 1.0, &[0.0, 0.3, 0.9]), vec![1.0, 1.0, 1.0]);
        assert_eq!(time_map(1.0, 0.0, &[0.0, 0.5]), vec![1.0, 0.5]);
    }
}
