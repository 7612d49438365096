//! Discrete LTV stochastic system `x_{k+1} = A_k x_k + B_k u_k + G_k w_k`,
//! `k = 0..=N`, with unit-covariance white noise `w_k`, plus the Gaussian
//! boundary data and input validation.

use std::fmt;

use crate::error::{Result, SteerError};
use crate::linalg::{asymmetry, max_eigenvalue, min_eigenvalue, Mat, Vector};

/// Relative symmetry tolerance.
pub const EPS_SYM: f64 = 1e-10;
/// PSD tolerance, relative to the largest eigenvalue.
pub const EPS_PSD: f64 = 1e-10;
/// Controllability threshold on `lambda_min(W_0) / lambda_max(W_0)`.
pub const EPS_CTRL: f64 = 1e-10;

/// Time-varying system matrices for steps `k = 0..=horizon`.
///
/// Fields are public so malformed systems can be built and run through
/// [`validate`]; solvers assume a system that validates cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    /// Index of the last transition; the terminal state is `x_{horizon+1}`.
    pub horizon: usize,
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
    pub g: Vec<Mat>,
}

impl LtvSystem {
    /// Build from per-step sequences, rejecting inconsistent shapes.
    pub fn new(a: Vec<Mat>, b: Vec<Mat>, g: Vec<Mat>) -> Result<Self> {
        let first = a
            .first()
            .ok_or_else(|| SteerError::DimensionMismatch("empty A sequence".into()))?;
        let n = first.nrows();
        let m = b.first().map_or(0, |b| b.ncols());
        let r = g.first().map_or(0, |g| g.ncols());
        let system = Self {
            n,
            m,
            r,
            horizon: a.len() - 1,
            a,
            b,
            g,
        };
        if let Some(v) = system.shape_violations().into_iter().next() {
            return Err(SteerError::DimensionMismatch(v.to_string()));
        }
        Ok(system)
    }

    /// Time-invariant system repeated over `horizon + 1` steps.
    pub fn lti(a: Mat, b: Mat, g: Mat, horizon: usize) -> Result<Self> {
        let steps = horizon + 1;
        Self::new(vec![a; steps], vec![b; steps], vec![g; steps])
    }

    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn is_diffusionless(&self) -> bool {
        self.r == 0 || self.g.iter().all(|g| g.iter().all(|v| *v == 0.0))
    }

    /// One transition of the dynamics.
    pub fn step(&self, k: usize, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        let mut next = &self.a[k] * x + &self.b[k] * u;
        if self.r > 0 {
            next += &self.g[k] * w;
        }
        next
    }

    /// Same system with every `G_k` scaled by `alpha`.
    pub fn with_noise_scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for g in &mut out.g {
            *g *= alpha;
        }
        out
    }

    fn shape_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push(Violation::Dimension {
                what: "n".into(),
                expected: "positive".into(),
                found: "0".into(),
            });
        }
        if self.m == 0 {
            out.push(Violation::Dimension {
                what: "m".into(),
                expected: "positive".into(),
                found: "0".into(),
            });
        }
        let steps = self.horizon + 1;
        for (name, seq) in [("A", &self.a), ("B", &self.b), ("G", &self.g)] {
            if seq.len() != steps {
                out.push(Violation::Dimension {
                    what: format!("{name} sequence length"),
                    expected: steps.to_string(),
                    found: seq.len().to_string(),
                });
            }
        }
        let expect = |out: &mut Vec<Violation>, what: String, m: &Mat, rows: usize, cols: usize| {
            if m.shape() != (rows, cols) {
                out.push(Violation::Dimension {
                    what,
                    expected: format!("{rows}x{cols}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
        };
        for (k, a) in self.a.iter().enumerate() {
            expect(&mut out, format!("A_{k}"), a, self.n, self.n);
        }
        for (k, b) in self.b.iter().enumerate() {
            expect(&mut out, format!("B_{k}"), b, self.n, self.m);
        }
        for (k, g) in self.g.iter().enumerate() {
            expect(&mut out, format!("G_{k}"), g, self.n, self.r);
        }
        out
    }
}

/// Initial and target Gaussian moments, optionally with a selector `D`
/// constraining only `D Sigma_{N+1} D'`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub mu0: Vector,
    pub sigma0: Mat,
    pub mu_f: Vector,
    pub sigma_f: Mat,
    pub selector: Option<Mat>,
}

impl BoundaryConditions {
    pub fn new(mu0: Vector, sigma0: Mat, mu_f: Vector, sigma_f: Mat) -> Self {
        Self {
            mu0,
            sigma0,
            mu_f,
            sigma_f,
            selector: None,
        }
    }

    pub fn with_selector(mut self, d: Mat) -> Self {
        self.selector = Some(d);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        what: String,
        expected: String,
        found: String,
    },
    Asymmetric {
        what: String,
        relative: f64,
    },
    NotPsd {
        what: String,
        min_eigenvalue: f64,
    },
    RankDeficient {
        what: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { what, expected, found } => write!(f, "{what}: expected {expected}, found {found}"),
            Violation::Asymmetric { what, relative } => {
                write!(f, "{what} is not symmetric (relative asymmetry {relative:.3e})")
            }
            Violation::NotPsd { what, min_eigenvalue } => {
                write!(f, "{what} is not PSD (smallest eigenvalue {min_eigenvalue:.3e})")
            }
            Violation::RankDeficient { what } => write!(f, "{what} does not have full row rank"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_covariance(out: &mut Vec<Violation>, what: &str, m: &Mat, dim: usize) {
    if m.shape() != (dim, dim) {
        out.push(Violation::Dimension {
            what: what.into(),
            expected: format!("{dim}x{dim}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
        return;
    }
    let asym = asymmetry(m);
    if asym > EPS_SYM {
        out.push(Violation::Asymmetric {
            what: what.into(),
            relative: asym,
        });
    }
    let lo = min_eigenvalue(m);
    let hi = max_eigenvalue(m).max(0.0);
    if lo < -EPS_PSD * hi.max(f64::MIN_POSITIVE) {
        out.push(Violation::NotPsd {
            what: what.into(),
            min_eigenvalue: lo,
        });
    }
}

/// Collect every shape, symmetry and PSD problem in the problem data.
pub fn validate(system: &LtvSystem, bc: &BoundaryConditions) -> ValidationReport {
    let mut out = system.shape_violations();
    let n = system.n;
    for (what, v) in [("mu0", &bc.mu0), ("muF", &bc.mu_f)] {
        if v.len() != n {
            out.push(Violation::Dimension {
                what: what.into(),
                expected: n.to_string(),
                found: v.len().to_string(),
            });
        }
    }
    check_covariance(&mut out, "Sigma0", &bc.sigma0, n);
    let target_dim = match &bc.selector {
        Some(d) => {
            if d.ncols() != n || d.nrows() > n || d.nrows() == 0 {
                out.push(Violation::Dimension {
                    what: "D".into(),
                    expected: format!("n_p x {n} with 1 <= n_p <= {n}"),
                    found: format!("{}x{}", d.nrows(), d.ncols()),
                });
            } else {
                let gram = d * d.transpose();
                let hi = max_eigenvalue(&gram);
                if !(min_eigenvalue(&gram) > EPS_CTRL * hi) {
                    out.push(Violation::RankDeficient { what: "D".into() });
                }
            }
            d.nrows()
        }
        None => n,
    };
    check_covariance(&mut out, "SigmaF", &bc.sigma_f, target_dim);
    ValidationReport { violations: out }
}
