//! Problem definition files.
//!
//! TOML with scalar keys `n`, `m`, `p` (and `k` for LQG), matrices written as
//! arrays of rows, and vectors as plain arrays:
//!
//! ```toml
//! n = 1
//! m = 1
//! p = 0.1
//! F = [[0.9]]
//! G = [[1.0]]
//! Q = [[1.0]]
//! R = [[1.0]]
//! Qf = [[1.0]]
//! ```
//!
//! The presence of `H` makes the file an LQG problem; `OmegaXi`,
//! `OmegaZeta`, `Sigma1` then default to zero and `xhat1` to the origin.

use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::config::line_of;
use crate::error::{LqError, Result};
use crate::matrix::{Mat, SymMat, Vector};
use crate::model::{LqProblem, LqgProblem};

#[derive(Debug, Clone)]
pub enum Problem {
    Lq(LqProblem),
    Lqg(LqgProblem),
}

impl Problem {
    /// The underlying LQ problem (the embedded one for LQG).
    pub fn base(&self) -> &LqProblem {
        match self {
            Problem::Lq(p) => p,
            Problem::Lqg(p) => p.base(),
        }
    }
}

type Rows = Spanned<Vec<Vec<f64>>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n: Spanned<usize>,
    m: Spanned<usize>,
    k: Option<Spanned<usize>>,
    p: f64,
    #[serde(rename = "F")]
    f: Rows,
    #[serde(rename = "G")]
    g: Rows,
    #[serde(rename = "Q")]
    q: Rows,
    #[serde(rename = "R")]
    r: Rows,
    #[serde(rename = "Qf")]
    qf: Rows,
    #[serde(rename = "H")]
    h: Option<Rows>,
    #[serde(rename = "OmegaXi")]
    omega_xi: Option<Rows>,
    #[serde(rename = "OmegaZeta")]
    omega_zeta: Option<Rows>,
    #[serde(rename = "Sigma1")]
    sigma1: Option<Rows>,
    xhat1: Option<Spanned<Vec<f64>>>,
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, start: usize, key: &str, message: impl Into<String>) -> LqError {
        LqError::Parse {
            line: Some(line_of(self.text, start)),
            key: key.into(),
            message: message.into(),
        }
    }

    fn matrix(&self, key: &str, raw: &Rows, rows: usize, cols: usize) -> Result<Mat> {
        let data = raw.get_ref();
        let start = raw.span().start;
        if data.len() != rows {
            return Err(self.err(start, key, format!("expected {rows} rows, found {}", data.len())));
        }
        if let Some((i, row)) = data.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(self.err(start, key, format!("row {i} has {} entries, expected {cols}", row.len())));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(self.err(start, key, "entries must be finite"));
        }
        Ok(Mat::from_fn(rows, cols, |i, j| data[i][j]))
    }

    fn symmetric(&self, key: &str, raw: &Rows, dim: usize) -> Result<SymMat> {
        let m = self.matrix(key, raw, dim, dim)?;
        SymMat::new(m).map_err(|_| self.err(raw.span().start, key, "matrix is not symmetric"))
    }

    fn symmetric_or_zero(&self, key: &str, raw: Option<&Rows>, dim: usize) -> Result<SymMat> {
        match raw {
            Some(r) => self.symmetric(key, r, dim),
            None => Ok(SymMat::zeros(dim)),
        }
    }
}

/// Parses problem text; see the module docs for the format.
pub fn parse_problem_str(text: &str) -> Result<Problem> {
    let raw: RawProblem = toml::from_str(text).map_err(|e| LqError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        key: "problem".into(),
        message: e.message().to_string(),
    })?;
    let cx = Ctx { text };
    let (n, m) = (*raw.n.get_ref(), *raw.m.get_ref());
    if n == 0 {
        return Err(cx.err(raw.n.span().start, "n", "state dimension must be at least 1"));
    }
    if m == 0 {
        return Err(cx.err(raw.m.span().start, "m", "control dimension must be at least 1"));
    }
    let base = LqProblem::new(
        cx.matrix("F", &raw.f, n, n)?,
        cx.matrix("G", &raw.g, n, m)?,
        cx.symmetric("Q", &raw.q, n)?,
        cx.symmetric("R", &raw.r, m)?,
        cx.symmetric("Qf", &raw.qf, n)?,
        raw.p,
    )?;
    let Some(h) = raw.h.as_ref() else {
        for (key, present) in [
            ("k", raw.k.is_some()),
            ("OmegaXi", raw.omega_xi.is_some()),
            ("OmegaZeta", raw.omega_zeta.is_some()),
            ("Sigma1", raw.sigma1.is_some()),
            ("xhat1", raw.xhat1.is_some()),
        ] {
            if present {
                return Err(LqError::Parse {
                    line: None,
                    key: key.into(),
                    message: "only allowed together with H".into(),
                });
            }
        }
        return Ok(Problem::Lq(base));
    };
    let k = h.get_ref().len();
    if let Some(kk) = &raw.k {
        if *kk.get_ref() != k {
            return Err(cx.err(kk.span().start, "k", format!("k = {} but H has {k} rows", kk.get_ref())));
        }
    }
    if k == 0 {
        return Err(cx.err(h.span().start, "H", "observation map needs at least one row"));
    }
    let x_hat_1 = match &raw.xhat1 {
        Some(v) if v.get_ref().len() != n => {
            return Err(cx.err(v.span().start, "xhat1", format!("expected {n} entries, found {}", v.get_ref().len())))
        }
        Some(v) => Vector::from_column_slice(v.get_ref()),
        None => Vector::zeros(n),
    };
    let lqg = LqgProblem::new(
        base,
        cx.matrix("H", h, k, n)?,
        cx.symmetric_or_zero("OmegaXi", raw.omega_xi.as_ref(), n)?,
        cx.symmetric_or_zero("OmegaZeta", raw.omega_zeta.as_ref(), k)?,
        x_hat_1,
        cx.symmetric_or_zero("Sigma1", raw.sigma1.as_ref(), n)?,
    )?;
    Ok(Problem::Lqg(lqg))
}

pub fn parse_problem(path: &Path) -> Result<Problem> {
    parse_problem_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = "n = 1\nm = 1\np = 0.1\nF = [[0.9]]\nG = [[1.0]]\nQ = [[1.0]]\nR = [[1.0]]\nQf = [[1.0]]\n";

    #[test]
    fn minimal_scalar_file() {
        match parse_problem_str(SCALAR).unwrap() {
            Problem::Lq(p) => {
                assert_eq!(p.f[(0, 0)], 0.9);
                assert_eq!(p.p, 0.1);
            }
            Problem::Lqg(_) => panic!("no H, expected LQ"),
        }
    }

    #[test]
    fn h_makes_it_lqg() {
        let text = format!("{SCALAR}H = [[1.0]]\nOmegaZeta = [[0.5]]\nxhat1 = [0.2]\n");
        match parse_problem_str(&text).unwrap() {
            Problem::Lqg(p) => {
                assert_eq!(p.obs_dim(), 1);
                assert_eq!(p.omega_zeta().get(0, 0), 0.5);
                assert_eq!(p.omega_xi().get(0, 0), 0.0);
                assert_eq!(p.x_hat_1()[0], 0.2);
            }
            Problem::Lq(_) => panic!("expected LQG"),
        }
    }

    #[test]
    fn zero_r_is_a_validation_error() {
        let text = SCALAR.replace("R = [[1.0]]", "R = [[0.0]]");
        let err = parse_problem_str(&text).unwrap_err();
        assert!(matches!(err, LqError::Invalid(_)));
        assert!(err.to_string().contains("R not positive definite"), "{err}");
    }

    #[test]
    fn shape_errors_carry_line_and_key() {
        let text = SCALAR.replace("G = [[1.0]]", "G = [[1.0, 2.0]]");
        match parse_problem_str(&text).unwrap_err() {
            LqError::Parse { line, key, .. } => {
                assert_eq!(line, Some(5));
                assert_eq!(key, "G");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_toml_reports_a_line() {
        let text = SCALAR.replace("p = 0.1", "p = ");
        match parse_problem_str(&text).unwrap_err() {
            LqError::Parse { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_cost_is_rejected() {
        let text = "n = 2\nm = 1\np = 0.1\nF = [[1.0, 0.0], [0.0, 1.0]]\nG = [[1.0], [0.0]]\n\
                    Q = [[1.0, 0.5], [0.0, 1.0]]\nR = [[1.0]]\nQf = [[1.0, 0.0], [0.0, 1.0]]\n";
        match parse_problem_str(text).unwrap_err() {
            LqError::Parse { key, line, .. } => {
                assert_eq!(key, "Q");
                assert_eq!(line, Some(6));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filter_keys_need_h() {
        let text = format!("{SCALAR}Sigma1 = [[1.0]]\n");
        assert!(matches!(parse_problem_str(&text), Err(LqError::Parse { key, .. }) if key == "Sigma1"));
    }
}
