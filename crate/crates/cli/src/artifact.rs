//! On-disk policy artifact written by `solve` and read back by `simulate`.

use std::fs;
use std::path::Path;

use covsteer_core::linalg::{from_rows, to_rows};
use covsteer_core::{parse_spec, render_spec, BoundaryConditions, LtvSystem, Mat};
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, Exit};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Innovation feedback driven by the terminal multiplier.
    Multiplier { lambda: Vec<Vec<f64>> },
    /// Noise-free steering of a selected block, `u = ubar + L (x_0 - mu_0)`.
    InitialStateFeedback { gain: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverInfo {
    pub strategy: String,
    pub iterations: usize,
    pub residual_norm: f64,
    pub second_order_ok: bool,
    pub second_order_margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyArtifact {
    #[serde(flatten)]
    pub policy: PolicyKind,
    pub mean_plan: Vec<Vec<f64>>,
    pub solver: Option<SolverInfo>,
    pub j_mu: f64,
    pub j_sigma: f64,
    /// The problem the policy was solved for.
    pub spec: serde_json::Value,
}

impl PolicyArtifact {
    pub fn embed(system: &LtvSystem, bc: &BoundaryConditions) -> Result<serde_json::Value, CliError> {
        let text = render_spec(system, bc).map_err(CliError::from)?;
        serde_json::from_str(&text).map_err(|e| CliError::new(Exit::Io, format!("cannot embed spec: {e}")))
    }

    pub fn problem(&self) -> Result<(LtvSystem, BoundaryConditions), CliError> {
        parse_spec(&self.spec.to_string()).map_err(CliError::from)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("artifact serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::new(
                Exit::Io,
                format!(
                    "cannot read policy artifact {}: {e}; run `covsteer solve` first",
                    path.display()
                ),
            )
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::new(Exit::Io, format!("invalid policy artifact {}: {e}", path.display())))
    }
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    to_rows(m)
}

pub fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    from_rows(rows, rows.first().map(|r| r.len()))
        .ok_or_else(|| CliError::new(Exit::Io, format!("policy artifact field `{field}` is ragged")))
}
