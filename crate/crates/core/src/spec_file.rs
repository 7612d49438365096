//! JSON problem files.
//!
//! ```json
//! { "n": 2, "m": 1, "r": 1, "N": 100,
//!   "A": [[1.9986, -1], [1, 0]], "B": [[0.03125], [0]], "G": [[0], [0.03]],
//!   "mu0": [-1, 1], "Sigma0": [[2, -1], [-1, 3]],
//!   "muF": [1, -1], "SigmaF": [[1, 0.1], [0.1, 2]] }
//! ```
//!
//! `A`, `B` and `G` are either one matrix, repeated for every step, or a
//! list of `N + 1` matrices. Matrices are row-major nested arrays. Shape
//! mismatches against `n`, `m`, `r` are left for [`crate::validate`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{asymmetry, from_rows, symmetrize, to_rows, Mat, Vector};
use crate::system::{BoundaryConditions, LtvSystem, EPS_SYM};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("field `{field}`: {detail}")]
    Shape { field: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixOrSequence {
    Single(Vec<Vec<f64>>),
    Sequence(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    n: usize,
    m: usize,
    r: usize,
    #[serde(rename = "N")]
    horizon: usize,
    #[serde(rename = "A")]
    a: MatrixOrSequence,
    #[serde(rename = "B")]
    b: MatrixOrSequence,
    #[serde(rename = "G")]
    g: MatrixOrSequence,
    mu0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    sigma0: Vec<Vec<f64>>,
    #[serde(rename = "muF")]
    mu_f: Vec<f64>,
    #[serde(rename = "SigmaF")]
    sigma_f: Vec<Vec<f64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<Vec<f64>>>,
}

fn matrix(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<Mat, SpecError> {
    from_rows(rows, Some(cols)).ok_or_else(|| SpecError::Shape {
        field: field.into(),
        detail: "rows have different lengths".into(),
    })
}

/// Column count when the rows do not say (an empty matrix).
fn width(rows: &[Vec<f64>], fallback: usize) -> usize {
    rows.first().map_or(fallback, |r| r.len())
}

fn sequence(field: &str, value: &MatrixOrSequence, steps: usize, cols: usize) -> Result<Vec<Mat>, SpecError> {
    match value {
        MatrixOrSequence::Single(rows) => {
            let m = matrix(field, rows, width(rows, cols))?;
            Ok(vec![m; steps])
        }
        MatrixOrSequence::Sequence(seq) => seq
            .iter()
            .enumerate()
            .map(|(k, rows)| matrix(&format!("{field}[{k}]"), rows, width(rows, cols)))
            .collect(),
    }
}

fn covariance(field: &str, rows: &[Vec<f64>]) -> Result<Mat, SpecError> {
    let m = matrix(field, rows, width(rows, rows.len()))?;
    if m.is_square() && asymmetry(&m) <= EPS_SYM {
        Ok(symmetrize(&m))
    } else {
        Ok(m)
    }
}

fn compress(seq: &[Mat]) -> MatrixOrSequence {
    match seq.first() {
        Some(first) if seq.iter().all(|m| m == first) => MatrixOrSequence::Single(to_rows(first)),
        _ => MatrixOrSequence::Sequence(seq.iter().map(to_rows).collect()),
    }
}

/// Parse a spec document.
pub fn parse_spec(text: &str) -> Result<(LtvSystem, BoundaryConditions), SpecError> {
    let spec: SpecFile = serde_json::from_str(text)?;
    let steps = spec.horizon + 1;
    let system = LtvSystem {
        n: spec.n,
        m: spec.m,
        r: spec.r,
        horizon: spec.horizon,
        a: sequence("A", &spec.a, steps, spec.n)?,
        b: sequence("B", &spec.b, steps, spec.m)?,
        g: sequence("G", &spec.g, steps, spec.r)?,
    };
    let mut bc = BoundaryConditions::new(
        Vector::from_vec(spec.mu0),
        covariance("Sigma0", &spec.sigma0)?,
        Vector::from_vec(spec.mu_f),
        covariance("SigmaF", &spec.sigma_f)?,
    );
    if let Some(d) = &spec.d {
        bc = bc.with_selector(matrix("D", d, width(d, spec.n))?);
    }
    Ok((system, bc))
}

/// Serialize; constant sequences use the single-matrix shorthand.
pub fn render_spec(system: &LtvSystem, bc: &BoundaryConditions) -> Result<String, SpecError> {
    let spec = SpecFile {
        n: system.n,
        m: system.m,
        r: system.r,
        horizon: system.horizon,
        a: compress(&system.a),
        b: compress(&system.b),
        g: compress(&system.g),
        mu0: bc.mu0.iter().copied().collect(),
        sigma0: to_rows(&bc.sigma0),
        mu_f: bc.mu_f.iter().copied().collect(),
        sigma_f: to_rows(&bc.sigma_f),
        d: bc.selector.as_ref().map(to_rows),
    };
    Ok(serde_json::to_string_pretty(&spec)?)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<(LtvSystem, BoundaryConditions), SpecError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text)
}

pub fn save_spec(path: impl AsRef<Path>, system: &LtvSystem, bc: &BoundaryConditions) -> Result<(), SpecError> {
    let path = path.as_ref();
    let text = render_spec(system, bc)?;
    fs::write(path, text + "\n").map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}
