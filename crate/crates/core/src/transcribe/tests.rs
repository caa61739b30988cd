use super::*;
use crate::lgr::{build_mesh, MeshSpec};

fn energy(spec: &MeshSpec) -> Transcription {
    let file = builtin::energy();
    Transcription::build(file.spec().unwrap(), build_mesh(spec).unwrap()).unwrap()
}

fn energy_single() -> Transcription {
    energy(&MeshSpec::new(vec![0.0, 1.0], vec![2]))
}

/// x = (0, 2/3, 1), u = (1, 1), t0 = 0, tf = 1.
fn reference_z() -> Vec<f64> {
    vec![0.0, 2.0 / 3.0, 1.0, 1.0, 1.0, 0.0, 1.0]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn entries(m: &CooMatrix) -> Vec<(usize, usize, f64)> {
    m.iter().collect()
}

#[test]
fn layout_offsets() {
    let l = DecisionLayout {
        n: 4,
        n_x: 2,
        n_u: 3,
    };
    assert_eq!(l.x_offset(1), 5);
    assert_eq!(l.u_offset(0), 10);
    assert_eq!(l.u_offset(2), 18);
    assert_eq!(l.n_z(), 24);
    assert_eq!((l.t0(), l.tf()), (22, 23));
}

#[test]
fn energy_graph_topology() {
    let tr = energy_single();
    // t0, tf, X1, U1, Δt, T, F, FΔt, G1, G1Δt
    assert_eq!(tr.graph().len(), 10);
    assert_eq!(tr.graph().kind(tr.nodes().dt), NodeKind::Scalar);
    assert_eq!(tr.graph().kind(tr.nodes().time), NodeKind::Vector);
    assert_eq!(tr.n_z(), 7);
    assert_eq!(tr.n_constraints(), 6);
}

#[test]
fn two_states_share_inputs() {
    let tr = Transcription::build(
        builtin::nonlinear().spec().unwrap(),
        build_mesh(&MeshSpec::uniform(2, 3)).unwrap(),
    )
    .unwrap();
    let nodes = tr.nodes();
    assert_eq!(nodes.g_dt.len(), 2);
    for &g in &nodes.g_dt {
        assert_eq!(tr.graph().args(g)[1], nodes.dt);
    }
}

#[test]
fn unknown_variable_is_reported() {
    let b = Bounds {
        t0: Bound::Fixed(0.0),
        tf: Bound::Fixed(1.0),
        x_initial: vec![Bound::Free],
        x_final: vec![Bound::Free],
    };
    let err = ProblemSpec::from_text(1, 1, "u1", &["u3"], b).unwrap_err();
    assert!(matches!(
        err,
        TranscribeError::Expr {
            source: ExprError::UnknownVariable { .. },
            ..
        }
    ));
}

#[test]
fn energy_objective() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let ev = tr.eval_objective(&mut ws, &reference_z()).unwrap();
    assert!(close(ev.value, 0.5, 1e-15));
    assert_eq!(ev.gradient.idx, vec![3, 4, 5, 6]);
    let want = [0.25, 0.75, -0.5, 0.5];
    for (got, want) in ev.gradient.vals.iter().zip(want) {
        assert!(close(*got, want, 1e-15), "{got} vs {want}");
    }
    let want = [
        (3, 3, 0.25),
        (4, 4, 0.75),
        (5, 3, -0.25),
        (5, 4, -0.75),
        (6, 3, 0.25),
        (6, 4, 0.75),
    ];
    let got = entries(&ev.hessian);
    assert_eq!(got.len(), 6);
    for (r, c, v) in want {
        let e = got
            .iter()
            .find(|e| e.0 == r && e.1 == c)
            .expect("entry present");
        assert!(close(e.2, v, 1e-15), "({r},{c}) {} vs {v}", e.2);
    }
}

#[test]
fn zero_interval_gives_zero_objective() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let z = [0.3, 0.1, 0.2, 1.4, 0.7, 0.5, 0.5];
    assert_eq!(tr.eval_objective(&mut ws, &z).unwrap().value, 0.0);
}

#[test]
fn constant_integrand_gives_interval_length() {
    let b = Bounds {
        t0: Bound::Free,
        tf: Bound::Free,
        x_initial: vec![Bound::Free],
        x_final: vec![Bound::Free],
    };
    let spec = ProblemSpec::from_text(1, 1, "1", &["u1"], b).unwrap();
    let tr = Transcription::build(spec, build_mesh(&MeshSpec::uniform(3, 3)).unwrap()).unwrap();
    let mut ws = tr.workspace();
    let mut z = vec![0.7; tr.n_z()];
    z[tr.layout().t0()] = 0.25;
    z[tr.layout().tf()] = 2.0;
    let ev = tr.eval_objective(&mut ws, &z).unwrap();
    assert!(close(ev.value, 1.75, 1e-14));
    assert_eq!(ev.gradient.idx, vec![tr.layout().t0(), tr.layout().tf()]);
    assert!(close(ev.gradient.vals[0], -1.0, 1e-14));
    assert!(close(ev.gradient.vals[1], 1.0, 1e-14));
    assert_eq!(ev.hessian.nnz(), 0);
}

#[test]
fn energy_residuals() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let ev = tr.eval_constraints(&mut ws, &reference_z()).unwrap();
    assert_eq!(ev.residual.len(), 6);
    for r in &ev.residual {
        assert!(r.abs() <= 1e-14, "{:?}", ev.residual);
    }

    let z = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
    let ev = tr.eval_constraints(&mut ws, &z).unwrap();
    assert!(close(ev.residual[0], -1.0, 1e-15));
    assert!(close(ev.residual[1], -1.0, 1e-15));
    // boundary rows: x_initial, x_final, t0, tf
    assert_eq!(&ev.residual[2..], &[0.0, -1.0, 0.0, 0.0]);
}

#[test]
fn energy_jacobian_structure() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let z = reference_z();
    let jac = tr.eval_constraints(&mut ws, &z).unwrap().jacobian;
    assert_eq!(jac.nnz(), 16);
    for k in 0..2 {
        let row: Vec<_> = jac.iter().filter(|e| e.0 == k).collect();
        let cols: Vec<usize> = row.iter().map(|e| e.1).collect();
        assert_eq!(cols, vec![0, 1, 2, 3 + k, 5, 6]);
        assert_eq!(row[3].2, -1.0);
        assert_eq!(row[4].2, z[3 + k]);
        assert_eq!(row[5].2, -z[3 + k]);
    }
    let s = tr.structures();
    assert_eq!(s.jacobian_rows, jac.rows);
    assert_eq!(s.jacobian_cols, jac.cols);
}

#[test]
fn lagrangian_with_zero_multipliers_is_objective_hessian() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let z = reference_z();
    let obj = tr.eval_objective(&mut ws, &z).unwrap().hessian;
    let lag = tr
        .eval_lagrangian_hessian(&mut ws, &z, 1.0, &[0.0; 6])
        .unwrap();
    let nonzero: Vec<_> = lag.iter().filter(|e| e.2 != 0.0).collect();
    assert_eq!(nonzero, entries(&obj));
}

#[test]
fn lagrangian_constraint_part_energy() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    let lambda = [0.3, -1.7, 5.0, 5.0, 5.0, 5.0];
    let lag = tr
        .eval_lagrangian_hessian(&mut ws, &reference_z(), 0.0, &lambda)
        .unwrap();
    let got: Vec<_> = lag.iter().filter(|e| e.2 != 0.0).collect();
    let want = vec![(5, 3, 0.3), (5, 4, -1.7), (6, 3, -0.3), (6, 4, 1.7)];
    assert_eq!(got, want);
}

#[test]
fn lagrangian_nonlinear_diagonal() {
    // g2 = u1 - x1^2 contributes +2 λ Δt on the x1 diagonal.
    let tr = Transcription::build(
        builtin::nonlinear().spec().unwrap(),
        build_mesh(&MeshSpec::new(vec![0.0, 1.0], vec![3])).unwrap(),
    )
    .unwrap();
    let l = tr.layout();
    let mut ws = tr.workspace();
    let mut z = vec![1.0; tr.n_z()];
    z[l.t0()] = 0.0;
    z[l.tf()] = 2.5;
    let mut lambda = vec![0.0; tr.n_constraints()];
    lambda[l.n + 1] = 0.75; // state 2, mesh point 1
    let lag = tr
        .eval_lagrangian_hessian(&mut ws, &z, 0.0, &lambda)
        .unwrap();
    let e = lag.iter().find(|e| e.0 == 1 && e.1 == 1).unwrap();
    assert!(close(e.2, 2.0 * 0.75 * 2.5, 1e-14));
}

#[test]
fn multiplier_length_is_checked() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    assert!(matches!(
        tr.eval_lagrangian_hessian(&mut ws, &reference_z(), 1.0, &[0.0; 5]),
        Err(TranscribeError::DimensionMismatch {
            expected: 6,
            got: 5,
            ..
        })
    ));
}

#[test]
fn bad_points_are_rejected() {
    let tr = energy_single();
    let mut ws = tr.workspace();
    assert!(matches!(
        tr.eval_objective(&mut ws, &[0.0; 6]),
        Err(TranscribeError::DimensionMismatch {
            expected: 7,
            got: 6,
            ..
        })
    ));
    let mut z = reference_z();
    z[2] = f64::NAN;
    assert_eq!(
        tr.eval_constraints(&mut ws, &z),
        Err(TranscribeError::NonFiniteInput { index: 2 })
    );
}

#[test]
fn domain_error_names_mesh_point() {
    let b = Bounds {
        t0: Bound::Fixed(0.0),
        tf: Bound::Fixed(1.0),
        x_initial: vec![Bound::Free],
        x_final: vec![Bound::Free],
    };
    let spec = ProblemSpec::from_text(1, 1, "log(u1)", &["u1"], b).unwrap();
    let tr = Transcription::build(spec, build_mesh(&MeshSpec::uniform(1, 3)).unwrap()).unwrap();
    let mut ws = tr.workspace();
    let mut z = vec![1.0; tr.n_z()];
    z[tr.layout().u_offset(0) + 2] = -1.0;
    match tr.eval_objective(&mut ws, &z) {
        Err(TranscribeError::Domain { output, row, .. }) => {
            assert_eq!(output, "objective");
            assert_eq!(row, 2);
        }
        other => panic!("{other:?}"),
    }
    // a failed evaluation does not poison the workspace
    z[tr.layout().u_offset(0) + 2] = 1.0;
    assert!(tr.eval_objective(&mut ws, &z).is_ok());
}

#[test]
fn nnz_grows_linearly_with_segments() {
    let counts: Vec<(usize, usize)> = [10, 20, 40]
        .iter()
        .map(|&s| {
            let tr = energy(&MeshSpec::uniform(s, 4));
            let st = tr.structures();
            (st.jacobian_rows.len(), st.hessian_rows.len())
        })
        .collect();
    let d2 = |f: fn(&(usize, usize)) -> usize| {
        let v: Vec<i64> = counts.iter().map(|c| f(c) as i64).collect();
        (v[1] - 2 * v[0], v[2] - 2 * v[1])
    };
    let (a, b) = d2(|c| c.0);
    assert_eq!(a, b);
    let (a, b) = d2(|c| c.1);
    assert_eq!(a, b);
}

#[test]
fn pointwise_graph_matches_vector_rows() {
    let tr = Transcription::build(
        builtin::nonlinear().spec().unwrap(),
        build_mesh(&MeshSpec::uniform(2, 3)).unwrap(),
    )
    .unwrap();
    let z: Vec<f64> = (0..tr.n_z())
        .map(|i| 0.5 + (i as f64 * 0.37).sin().abs())
        .collect();
    let mut ws = tr.workspace();
    tr.eval_objective(&mut ws, &z).unwrap();
    for k in 0..tr.layout().n {
        let pg = tr.pointwise_graph(&z, k).unwrap();
        let pairs = std::iter::once((tr.nodes().f_dt, pg.f_dt))
            .chain(tr.nodes().g_dt.iter().copied().zip(pg.g_dt.iter().copied()));
        for (vec_node, scalar_node) in pairs {
            let full = pg.graph.full(scalar_node).unwrap();
            let row: Vec<(usize, f64)> = tr
                .graph()
                .flatten_gradient(ws.graph(), vec_node)
                .into_iter()
                .filter(|e| e.1 == k)
                .map(|e| (e.0, e.2))
                .collect();
            let scalar: Vec<(usize, f64)> = full
                .grad_idx
                .iter()
                .copied()
                .zip(full.grad.iter().copied())
                .collect();
            assert_eq!(row, scalar);
        }
    }
}

#[test]
fn problem_file_round_trip() {
    let file = builtin::nonlinear();
    let back = ProblemFile::from_json(&file.to_json()).unwrap();
    assert_eq!(back, file);
    assert!(ProblemFile::from_json("{\"n_x\": 1}").is_err());
}
