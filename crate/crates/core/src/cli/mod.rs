//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

mod format;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::lgr::{build_mesh, LgrError, MeshSpec};
use crate::oracle::{self, CompareReport, OracleError};
use crate::transcribe::{ProblemFile, TranscribeError, Transcription};

pub use format::{g17, read_matrix_market, write_matrix_market, LOWER_COMMENT, MM_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Problem(#[from] TranscribeError),
    #[error(transparent)]
    Mesh(#[from] LgrError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "colloc-ad",
    version,
    about = "Sparse second-order AD for LGR collocation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print LGR mesh points, weights and differentiation matrix.
    Basis(BasisArgs),
    /// Verify sparse derivatives against the dense oracle and finite differences.
    Check(CheckArgs),
    /// Write Jacobian and Hessian as Matrix Market files.
    Export(ExportArgs),
    /// Report nonzero counts and evaluation time against mesh size.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Polynomial degree per segment.
    #[arg(long, value_delimiter = ',', required = true)]
    pub degrees: Vec<usize>,
    /// Segment boundaries on [0, 1]; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<f64>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum At {
    Ones,
    Random,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Problem JSON file.
    #[arg(long)]
    pub problem: PathBuf,
    /// Evaluation point.
    #[arg(long, value_enum, default_value = "random")]
    pub at: At,
    /// Seed for random points and multipliers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    /// Maximum relative error for a pass.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Multipliers {
    Zero,
    Random,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Problem JSON file.
    #[arg(long)]
    pub problem: PathBuf,
    /// `ones`, `random`, or `@FILE` with whitespace-separated values.
    #[arg(long, default_value = "ones")]
    pub point: String,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for random points and multipliers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constraint multipliers used for the Lagrangian Hessian (σ = 1).
    #[arg(long, value_enum, default_value = "zero")]
    pub multipliers: Multipliers,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Problem JSON file.
    #[arg(long)]
    pub problem: PathBuf,
    /// Comma-separated segment counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub segments: Vec<usize>,
    /// Degree of every segment.
    #[arg(long)]
    pub degree: usize,
    /// Timed evaluations per mesh; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, conflicts_with = "json")]
    pub csv: bool,
    #[arg(long)]
    pub json: bool,
    /// Omit timings so output is deterministic.
    #[arg(long)]
    pub no_time: bool,
    /// Seed for random points and multipliers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut text = String::new();
    let result = match &cli.command {
        Command::Basis(a) => basis(a, &mut text).map(|()| true),
        Command::Check(a) => check(a, &mut text),
        Command::Export(a) => export(a, &mut text).map(|()| true),
        Command::Bench(a) => bench(a, &mut text).map(|()| true),
    };
    let _ = out.write_all(text.as_bytes());
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn load(path: &Path) -> Result<ProblemFile, CliError> {
    Ok(ProblemFile::from_json(&read(path)?)?)
}

fn transcribe(file: &ProblemFile, mesh: &MeshSpec) -> Result<Transcription, CliError> {
    Ok(Transcription::build(file.spec()?, build_mesh(mesh)?)?)
}

fn mesh_spec(degrees: &[usize], boundaries: Option<&[f64]>) -> MeshSpec {
    match boundaries {
        Some(b) => MeshSpec::new(b.to_vec(), degrees.to_vec()),
        None => {
            let s = degrees.len();
            let b = (0..=s).map(|k| k as f64 / s as f64).collect();
            MeshSpec::new(b, degrees.to_vec())
        }
    }
}

fn json_list(values: impl Iterator<Item = String>) -> String {
    format!("[{}]", values.collect::<Vec<_>>().join(", "))
}

fn basis(a: &BasisArgs, out: &mut String) -> Result<(), CliError> {
    let mesh = build_mesh(&mesh_spec(&a.degrees, a.boundaries.as_deref()))?;
    if a.json {
        let d = mesh
            .d_triplets
            .iter()
            .map(|&(r, c, v)| format!("[{r}, {c}, {}]", g17(v)));
        let _ = writeln!(
            out,
            "{{\"M\": {}, \"W\": {}, \"D\": {}}}",
            json_list(mesh.points.iter().map(|&v| g17(v))),
            json_list(mesh.weights.iter().map(|&v| g17(v))),
            json_list(d)
        );
    } else {
        let row = |v: &[f64]| v.iter().map(|&x| g17(x)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "N {}", mesh.n());
        let _ = writeln!(out, "M {}", row(&mesh.points));
        let _ = writeln!(out, "W {}", row(&mesh.weights));
        let _ = writeln!(out, "D {} triplets (row col value)", mesh.d_triplets.len());
        for &(r, c, v) in &mesh.d_triplets {
            let _ = writeln!(out, "{r} {c} {}", g17(v));
        }
    }
    Ok(())
}

/// Evaluation point: `ones` sets states and controls to 1 on `[0, 1]`;
/// `random` draws every coordinate from `[0.5, 1.5]`.
pub fn point(tr: &Transcription, at: At, seed: u64) -> Vec<f64> {
    match at {
        At::Ones => {
            let mut z = vec![1.0; tr.n_z()];
            z[tr.layout().t0()] = 0.0;
            z[tr.layout().tf()] = 1.0;
            z
        }
        At::Random => uniform(tr.n_z(), &mut ChaCha8Rng::seed_from_u64(seed)),
    }
}

fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
}

/// Multipliers for `check`, drawn after the point from the same seed.
pub fn multipliers(tr: &Transcription, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    uniform(tr.n_constraints(), &mut rng)
}

/// One line of a verification report.
#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub quantity: &'static str,
    pub reference: &'static str,
    pub report: CompareReport,
}

/// Compare every sparse output at `z` with the dense oracle and finite
/// differences.
pub fn verify(
    tr: &Transcription,
    z: &[f64],
    sigma: f64,
    lambda: &[f64],
    h: f64,
    tol: f64,
) -> Result<Vec<CheckLine>, CliError> {
    let n_z = tr.n_z();
    let m = tr.n_constraints();
    let mut ws = tr.workspace();
    let obj = tr.eval_objective(&mut ws, z)?;
    let con = tr.eval_constraints(&mut ws, z)?;
    let lag = tr.eval_lagrangian_hessian(&mut ws, z, sigma, lambda)?;
    let dense = oracle::dense_eval(tr.spec(), tr.mesh(), z)?;

    let mut fd_ws = tr.workspace();
    let mut value = |p: &[f64]| {
        tr.eval_objective(&mut fd_ws, p)
            .map_or(f64::NAN, |e| e.value)
    };
    let fd_grad = oracle::fd_gradient(&mut value, z, h)?;
    let mut residual = |p: &[f64]| {
        tr.eval_constraints(&mut fd_ws, p)
            .map_or_else(|_| vec![f64::NAN; m], |e| e.residual)
    };
    let fd_jac = oracle::fd_jacobian(&mut residual, z, h)?;
    let mut gradient = |p: &[f64]| {
        tr.eval_objective(&mut fd_ws, p)
            .map_or_else(|_| vec![f64::NAN; n_z], |e| e.gradient.to_dense())
    };
    let fd_hess = oracle::fd_hessian(&mut gradient, z, h)?;
    // exact Lagrangian gradient sigma * grad J + J^T lambda
    let mut lag_gradient = |p: &[f64]| {
        let (Ok(o), Ok(c)) = (
            tr.eval_objective(&mut fd_ws, p),
            tr.eval_constraints(&mut fd_ws, p),
        ) else {
            return vec![f64::NAN; n_z];
        };
        let mut g: Vec<f64> = o.gradient.to_dense().iter().map(|v| sigma * v).collect();
        for (r, col, v) in c.jacobian.iter() {
            g[col] += lambda[r] * v;
        }
        g
    };
    let fd_lag = oracle::fd_hessian(&mut lag_gradient, z, h)?;

    let line = |quantity, reference, report| CheckLine {
        quantity,
        reference,
        report,
    };
    Ok(vec![
        line("objective value", "oracle", {
            let g = crate::coo::SparseVector {
                len: 1,
                idx: vec![0],
                vals: vec![obj.value],
            };
            oracle::compare_vector(&g, &[dense.objective.value], tol)?
        }),
        line(
            "objective gradient",
            "oracle",
            oracle::compare_vector(&obj.gradient, &dense.objective.grad, tol)?,
        ),
        line(
            "objective gradient",
            "fd",
            oracle::compare_vector(&obj.gradient, &fd_grad, tol)?,
        ),
        line(
            "objective hessian",
            "oracle",
            oracle::compare_lower(&obj.hessian, &dense.objective.hess, n_z, tol)?,
        ),
        line(
            "objective hessian",
            "fd",
            oracle::compare_lower(&obj.hessian, &fd_hess, n_z, tol)?,
        ),
        line("constraint residual", "oracle", {
            let r = crate::coo::SparseVector {
                len: m,
                idx: (0..m).collect(),
                vals: con.residual.clone(),
            };
            oracle::compare_vector(&r, &dense.residual(), tol)?
        }),
        line(
            "constraint jacobian",
            "oracle",
            oracle::compare_matrix(&con.jacobian, &dense.jacobian(), m, n_z, tol)?,
        ),
        line(
            "constraint jacobian",
            "fd",
            oracle::compare_matrix(&con.jacobian, &fd_jac, m, n_z, tol)?,
        ),
        line(
            "lagrangian hessian",
            "oracle",
            oracle::compare_lower(&lag, &dense.lagrangian_hessian(sigma, lambda), n_z, tol)?,
        ),
        line(
            "lagrangian hessian",
            "fd",
            oracle::compare_lower(&lag, &fd_lag, n_z, tol)?,
        ),
    ])
}

fn check(a: &CheckArgs, out: &mut String) -> Result<bool, CliError> {
    let file = load(&a.problem)?;
    let tr = transcribe(&file, &file.mesh_spec())?;
    let z = point(&tr, a.at, a.seed);
    let lambda = multipliers(&tr, a.seed);
    let lines = verify(&tr, &z, 1.0, &lambda, a.fd_step, a.tol)?;
    let _ = writeln!(
        out,
        "problem: N={} n_z={} constraints={} point={} seed={}",
        tr.layout().n,
        tr.n_z(),
        tr.n_constraints(),
        match a.at {
            At::Ones => "ones",
            At::Random => "random",
        },
        a.seed
    );
    for l in &lines {
        let _ = writeln!(out, "{:<20} vs {:<6} {}", l.quantity, l.reference, l.report);
    }
    let pass = lines.iter().all(|l| l.report.pass);
    let _ = writeln!(
        out,
        "{}",
        if pass {
            "all checks passed"
        } else {
            "verification FAILED"
        }
    );
    Ok(pass)
}

fn parse_point(text: &str, n_z: usize) -> Result<Vec<f64>, CliError> {
    let z: Vec<f64> = text
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Input(format!("invalid number `{s}` in point file")))
        })
        .collect::<Result<_, _>>()?;
    if z.len() != n_z {
        return Err(CliError::Input(format!(
            "point file has {} values, expected n_z = {n_z}",
            z.len()
        )));
    }
    Ok(z)
}

fn export(a: &ExportArgs, out: &mut String) -> Result<(), CliError> {
    let file = load(&a.problem)?;
    let tr = transcribe(&file, &file.mesh_spec())?;
    let z = match a.point.as_str() {
        "ones" => point(&tr, At::Ones, a.seed),
        "random" => point(&tr, At::Random, a.seed),
        p => match p.strip_prefix('@') {
            Some(path) => parse_point(&read(Path::new(path))?, tr.n_z())?,
            None => {
                return Err(CliError::Input(format!(
                    "unknown point `{p}`: use ones, random or @FILE"
                )))
            }
        },
    };
    let lambda = match a.multipliers {
        Multipliers::Zero => vec![0.0; tr.n_constraints()],
        Multipliers::Random => multipliers(&tr, a.seed),
    };
    let mut ws = tr.workspace();
    let obj = tr.eval_objective(&mut ws, &z)?;
    let con = tr.eval_constraints(&mut ws, &z)?;
    let hess = tr.eval_lagrangian_hessian(&mut ws, &z, 1.0, &lambda)?;

    std::fs::create_dir_all(&a.out).map_err(|source| CliError::Io {
        path: a.out.clone(),
        source,
    })?;
    write(
        &a.out.join("jacobian.mtx"),
        &write_matrix_market(&con.jacobian, false),
    )?;
    write(
        &a.out.join("hessian.mtx"),
        &write_matrix_market(&hess, true),
    )?;
    let mut grad = String::new();
    for (&i, &v) in obj.gradient.idx.iter().zip(&obj.gradient.vals) {
        let _ = writeln!(grad, "{i} {}", g17(v));
    }
    write(&a.out.join("gradient.txt"), &grad)?;
    let residual: String = con.residual.iter().map(|&v| g17(v) + "\n").collect();
    write(&a.out.join("residual.txt"), &residual)?;
    let _ = writeln!(out, "objective {}", g17(obj.value));
    let _ = writeln!(
        out,
        "wrote jacobian.mtx ({} nnz), hessian.mtx ({} nnz), gradient.txt, residual.txt to {}",
        con.jacobian.nnz(),
        hess.nnz(),
        a.out.display()
    );
    Ok(())
}

/// One row of the scaling benchmark.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub segments: usize,
    pub n: usize,
    pub n_z: usize,
    pub nnz_jacobian: usize,
    pub nnz_hessian: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_seconds: Option<f64>,
}

/// Median wall time of `repeat` full evaluations (objective, constraints,
/// Lagrangian Hessian), each with a fresh sweep.
pub fn time_evaluation(
    tr: &Transcription,
    z: &[f64],
    lambda: &[f64],
    repeat: usize,
) -> Result<f64, CliError> {
    let mut ws = tr.workspace();
    let mut times = Vec::with_capacity(repeat);
    for _ in 0..repeat.max(1) {
        ws.clear_cache();
        let start = Instant::now();
        tr.eval_objective(&mut ws, z)?;
        tr.eval_constraints(&mut ws, z)?;
        tr.eval_lagrangian_hessian(&mut ws, z, 1.0, lambda)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

pub fn bench_rows(a: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let file = load(&a.problem)?;
    let mut rows = Vec::with_capacity(a.segments.len());
    for &s in &a.segments {
        let tr = transcribe(&file, &MeshSpec::uniform(s, a.degree))?;
        let s_nnz = tr.structures();
        let median_seconds = if a.no_time {
            None
        } else {
            let z = point(&tr, At::Random, a.seed);
            let lambda = multipliers(&tr, a.seed);
            Some(time_evaluation(&tr, &z, &lambda, a.repeat)?)
        };
        rows.push(BenchRow {
            segments: s,
            n: tr.layout().n,
            n_z: tr.n_z(),
            nnz_jacobian: s_nnz.jacobian_rows.len(),
            nnz_hessian: s_nnz.hessian_rows.len(),
            median_seconds,
        });
    }
    Ok(rows)
}

fn bench(a: &BenchArgs, out: &mut String) -> Result<(), CliError> {
    if a.segments.contains(&0) {
        return Err(CliError::Input("segment counts must be positive".into()));
    }
    let rows = bench_rows(a)?;
    if a.json {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&rows).expect("rows serialize")
        );
        return Ok(());
    }
    let time = |r: &BenchRow| {
        r.median_seconds
            .map(|t| format!("{:.3e}", t))
            .unwrap_or_default()
    };
    if a.csv {
        let _ = writeln!(
            out,
            "segments,n,n_z,nnz_jacobian,nnz_hessian{}",
            if a.no_time { "" } else { ",median_seconds" }
        );
        for r in &rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.segments, r.n, r.n_z, r.nnz_jacobian, r.nnz_hessian
            );
            let _ = writeln!(
                out,
                "{}",
                if a.no_time {
                    String::new()
                } else {
                    format!(",{}", time(r))
                }
            );
        }
        return Ok(());
    }
    let _ = write!(
        out,
        "{:>8} {:>8} {:>8} {:>12} {:>12}",
        "segments", "N", "n_z", "nnz(jac)", "nnz(hess)"
    );
    let _ = writeln!(
        out,
        "{}",
        if a.no_time {
            String::new()
        } else {
            format!(" {:>12}", "median(s)")
        }
    );
    for r in &rows {
        let _ = write!(
            out,
            "{:>8} {:>8} {:>8} {:>12} {:>12}",
            r.segments, r.n, r.n_z, r.nnz_jacobian, r.nnz_hessian
        );
        let _ = writeln!(
            out,
            "{}",
            if a.no_time {
                String::new()
            } else {
                format!(" {:>12}", time(r))
            }
        );
    }
    Ok(())
}
