//! Browser demo: LGR basis tables, sparsity patterns and derivative checks.
//!
//! The plain functions return JSON strings and are tested natively; the
//! `#[wasm_bindgen]` wrappers expose them to JavaScript.

use colloc_ad::cli::{multipliers, point, verify, At};
use colloc_ad::lgr::{build_mesh, Mesh, MeshSpec};
use colloc_ad::transcribe::{builtin, ProblemFile, Transcription};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;
use wasm_bindgen::JsValue;

/// Largest mesh the page will build; keeps the dense oracle responsive.
pub const MAX_POINTS: usize = 400;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("invalid {what} `{s}`")))
        .collect()
}

fn mesh(segments: usize, degree: usize) -> Result<Mesh, String> {
    if segments.saturating_mul(degree) > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} collocation points"));
    }
    build_mesh(&MeshSpec::uniform(segments, degree)).map_err(|e| e.to_string())
}

fn transcription(problem: &str, segments: usize, degree: usize) -> Result<Transcription, String> {
    let file = match problem {
        "energy" => builtin::energy(),
        "nonlinear" => builtin::nonlinear(),
        text => ProblemFile::from_json(text).map_err(|e| e.to_string())?,
    };
    let spec = file.spec().map_err(|e| e.to_string())?;
    Transcription::build(spec, mesh(segments, degree)?).map_err(|e| e.to_string())
}

/// Points, weights and differentiation matrix for comma-separated degrees
/// and (optional) boundaries.
pub fn basis_json(degrees: &str, boundaries: &str) -> Result<String, String> {
    let degrees: Vec<usize> = parse_list(degrees, "degree")?;
    let spec = if boundaries.trim().is_empty() {
        let mut spec = MeshSpec::uniform(degrees.len(), 0);
        spec.degrees = degrees;
        spec
    } else {
        MeshSpec::new(parse_list(boundaries, "boundary")?, degrees)
    };
    if spec.degrees.iter().sum::<usize>() > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} collocation points"));
    }
    let m = build_mesh(&spec).map_err(|e| e.to_string())?;
    Ok(json!({
        "points": m.points,
        "weights": m.weights,
        "support": m.support_nodes(),
        "D": m.d_dense(),
    })
    .to_string())
}

/// Jacobian and Lagrangian-Hessian patterns. `problem` is a built-in name
/// or a problem JSON document.
pub fn sparsity_json(problem: &str, segments: usize, degree: usize) -> Result<String, String> {
    let tr = transcription(problem, segments, degree)?;
    let s = tr.structures();
    Ok(json!({
        "n_z": tr.n_z(),
        "n_constraints": tr.n_constraints(),
        "jacobian": { "rows": s.jacobian_rows, "cols": s.jacobian_cols },
        "hessian": { "rows": s.hessian_rows, "cols": s.hessian_cols },
    })
    .to_string())
}

/// Sparse derivatives against the dense oracle and finite differences at a
/// seeded random point.
pub fn check_json(
    problem: &str,
    segments: usize,
    degree: usize,
    seed: u64,
) -> Result<String, String> {
    let tr = transcription(problem, segments, degree)?;
    let z = point(&tr, At::Random, seed);
    let lambda = multipliers(&tr, seed);
    let lines = verify(&tr, &z, 1.0, &lambda, 1e-5, 1e-6).map_err(|e| e.to_string())?;
    Ok(json!({
        "n_z": tr.n_z(),
        "pass": lines.iter().all(|l| l.report.pass),
        "lines": lines,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn basis(degrees: &str, boundaries: &str) -> Result<String, JsValue> {
    basis_json(degrees, boundaries).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sparsity(problem: &str, segments: usize, degree: usize) -> Result<String, JsValue> {
    sparsity_json(problem, segments, degree).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn check(problem: &str, segments: usize, degree: usize, seed: u32) -> Result<String, JsValue> {
    check_json(problem, segments, degree, seed.into()).map_err(|e| JsValue::from_str(&e))
}

/// JSON text of a built-in problem, for the page's editor.
#[wasm_bindgen]
pub fn builtin_problem(name: &str) -> Result<String, JsValue> {
    match name {
        "energy" => Ok(builtin::ENERGY_JSON.into()),
        "nonlinear" => Ok(builtin::NONLINEAR_JSON.into()),
        _ => Err(JsValue::from_str("unknown built-in problem")),
    }
}
