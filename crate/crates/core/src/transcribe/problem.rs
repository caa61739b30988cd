use serde::{Deserialize, Serialize};

use crate::expr::{parse, Ast};
use crate::lgr::MeshSpec;

use super::TranscribeError;

/// Boundary condition on a scalar decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Fixed(f64),
    Free,
}

impl Bound {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Bound::Fixed(v) => Some(v),
            Bound::Free => None,
        }
    }
}

/// Single-phase problem: minimize the integral of `objective` subject to
/// `x' = dynamics(x, u, t)` and boundary conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub n_x: usize,
    pub n_u: usize,
    pub objective: Ast,
    pub dynamics: Vec<Ast>,
    pub t0: Bound,
    pub tf: Bound,
    pub x_initial: Vec<Bound>,
    pub x_final: Vec<Bound>,
}

impl ProblemSpec {
    /// Parse objective and dynamics from text.
    pub fn from_text(
        n_x: usize,
        n_u: usize,
        objective: &str,
        dynamics: &[&str],
        bounds: Bounds,
    ) -> Result<Self, TranscribeError> {
        let objective = parse(objective, n_x, n_u).map_err(|source| TranscribeError::Expr {
            what: "objective".into(),
            source,
        })?;
        let dynamics = dynamics
            .iter()
            .enumerate()
            .map(|(j, text)| {
                parse(text, n_x, n_u).map_err(|source| TranscribeError::Expr {
                    what: format!("dynamics[{j}]"),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spec = ProblemSpec {
            n_x,
            n_u,
            objective,
            dynamics,
            t0: bounds.t0,
            tf: bounds.tf,
            x_initial: bounds.x_initial,
            x_final: bounds.x_final,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TranscribeError> {
        let check = |what: &str, got: usize| {
            if got == self.n_x {
                Ok(())
            } else {
                Err(TranscribeError::DimensionMismatch {
                    what: what.into(),
                    expected: self.n_x,
                    got,
                })
            }
        };
        check("dynamics", self.dynamics.len())?;
        check("x_initial", self.x_initial.len())?;
        check("x_final", self.x_final.len())?;
        for b in [self.t0, self.tf]
            .iter()
            .chain(&self.x_initial)
            .chain(&self.x_final)
        {
            if let Bound::Fixed(v) = b {
                if !v.is_finite() {
                    return Err(TranscribeError::NonFiniteBound);
                }
            }
        }
        Ok(())
    }
}

/// Boundary conditions of a [`ProblemSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub t0: Bound,
    pub tf: Bound,
    pub x_initial: Vec<Bound>,
    pub x_final: Vec<Bound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub boundaries: Vec<f64>,
    pub degrees: Vec<usize>,
}

/// On-disk problem description (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n_x: usize,
    pub n_u: usize,
    pub objective: String,
    pub dynamics: Vec<String>,
    pub t0: Bound,
    pub tf: Bound,
    pub x_initial: Vec<Bound>,
    pub x_final: Vec<Bound>,
    pub mesh: MeshFile,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, TranscribeError> {
        serde_json::from_str(text).map_err(|e| TranscribeError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn spec(&self) -> Result<ProblemSpec, TranscribeError> {
        let dynamics: Vec<&str> = self.dynamics.iter().map(String::as_str).collect();
        ProblemSpec::from_text(
            self.n_x,
            self.n_u,
            &self.objective,
            &dynamics,
            Bounds {
                t0: self.t0,
                tf: self.tf,
                x_initial: self.x_initial.clone(),
                x_final: self.x_final.clone(),
            },
        )
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        MeshSpec::new(self.mesh.boundaries.clone(), self.mesh.degrees.clone())
    }
}

/// Problems used throughout the test and acceptance suites.
pub mod builtin {
    use super::ProblemFile;

    pub const ENERGY_JSON: &str = include_str!("../../problems/energy.json");
    pub const NONLINEAR_JSON: &str = include_str!("../../problems/nonlinear.json");

    /// `min ∫ u²/2` with `x' = u`, `x(0) = 0`, `x(1) = 1`.
    pub fn energy() -> ProblemFile {
        ProblemFile::from_json(ENERGY_JSON).expect("bundled problem parses")
    }

    /// `min ∫ u² + x1 x2` with `x1' = x2`, `x2' = u - x1²`, free final time.
    pub fn nonlinear() -> ProblemFile {
        ProblemFile::from_json(NONLINEAR_JSON).expect("bundled problem parses")
    }
}
