//! Block one-step schemes `V_{n+1} = A V_n + Δt B F(V_n)` with explicit
//! input/output abscissae, the built-in registry, and the JSON file format.
//!
//! Block components are ordered by descending abscissa, so row 0 of `A` and
//! `B` produces the latest output time and the last row produces the value
//! at `t_{n+1}` itself.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{ExactError, ExactMatrix, ExactVector, Rational};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("unknown builtin '{0}' (expected one of S2, BUTCHER2, S3A, S3B, S3C)")]
    UnknownBuiltin(String),
    #[error("block size s must be positive")]
    EmptyBlock,
    #[error("{field}: expected {expected} abscissae, found {found}")]
    AbscissaeLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field}: abscissae not descending")]
    NotDescending { field: &'static str },
    #[error("c_in: last abscissa must be 0, found {0}")]
    LastAbscissaNotZero(Rational),
    #[error("c_out[{index}] = {output} does not exceed c_in[{index}] = {input}")]
    OutputNotAhead {
        index: usize,
        output: Rational,
        input: Rational,
    },
    #[error("{field} not square of size s = {s} (found {rows}x{cols})")]
    NotSquare {
        field: &'static str,
        s: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{field}: {source}")]
    Matrix {
        field: &'static str,
        source: ExactError,
    },
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// An explicit block one-step method with exact coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheme {
    name: String,
    c_in: ExactVector,
    c_out: ExactVector,
    a: ExactMatrix,
    b: ExactMatrix,
}

pub const BUILTIN_NAMES: [&str; 5] = ["S2", "BUTCHER2", "S3A", "S3B", "S3C"];

impl Scheme {
    /// Validates shapes and abscissa ordering.
    pub fn new(
        name: impl Into<String>,
        c_in: ExactVector,
        c_out: ExactVector,
        a: ExactMatrix,
        b: ExactMatrix,
    ) -> Result<Self, SchemeError> {
        let s = c_in.len();
        if c_out.len() != s {
            return Err(SchemeError::AbscissaeLength {
                field: "c_out",
                expected: s,
                found: c_out.len(),
            });
        }
        for (field, c) in [("c_in", &c_in), ("c_out", &c_out)] {
            if c.entries().windows(2).any(|w| w[0] <= w[1]) {
                return Err(SchemeError::NotDescending { field });
            }
        }
        if !c_in[s - 1].is_zero() {
            return Err(SchemeError::LastAbscissaNotZero(c_in[s - 1].clone()));
        }
        for i in 0..s {
            if c_out[i] <= c_in[i] {
                return Err(SchemeError::OutputNotAhead {
                    index: i,
                    output: c_out[i].clone(),
                    input: c_in[i].clone(),
                });
            }
        }
        for (field, m) in [("A", &a), ("B", &b)] {
            if m.rows() != s || m.cols() != s {
                return Err(SchemeError::NotSquare {
                    field,
                    s,
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            c_in,
            c_out,
            a,
            b,
        })
    }

    /// Looks up one of the built-in schemes by name (case-insensitive).
    pub fn builtin(name: &str) -> Result<Self, SchemeError> {
        let q = Rational::ratio;
        let s3_in = ExactVector::from_ratios(&[(2, 3), (1, 3), (0, 1)]);
        let s3_out = ExactVector::from_ratios(&[(5, 3), (4, 3), (1, 1)]);
        let rank_one =
            |scale: Rational, row: &[i64]| ExactMatrix::scaled_integers(scale, &[row, row, row]);
        let scheme = match name.to_ascii_uppercase().as_str() {
            "S2" => Self::new(
                "S2",
                ExactVector::from_ratios(&[(1, 2), (0, 1)]),
                ExactVector::from_ratios(&[(3, 2), (1, 1)]),
                ExactMatrix::scaled_integers(q(1, 6), &[&[-1, 7], &[-1, 7]]),
                ExactMatrix::scaled_integers(q(1, 24), &[&[55, -17], &[25, 1]]),
            ),
            "BUTCHER2" => Self::new(
                "BUTCHER2",
                ExactVector::from_ratios(&[(1, 1), (0, 1)]),
                ExactVector::from_ratios(&[(2, 1), (1, 1)]),
                ExactMatrix::scaled_integers(q(1, 4), &[&[7, -3], &[7, -3]]),
                ExactMatrix::scaled_integers(q(1, 8), &[&[9, -7], &[-3, -3]]),
            ),
            "S3A" => Self::new(
                "S3A",
                s3_in,
                s3_out,
                rank_one(q(1, 768), &[467, -1996, 2297]),
                ExactMatrix::scaled_integers(
                    q(1, 1152),
                    &[&[5439, -6046, 3058], &[2399, -1694, 1362], &[703, 354, 626]],
                ),
            ),
            "S3B" => Self::new(
                "S3B",
                s3_in,
                s3_out,
                rank_one(q(1, 1020), &[449, -1966, 2537]),
                ExactMatrix::scaled_integers(
                    q(1, 6120),
                    &[
                        &[29123, -32576, 15789],
                        &[12973, -9456, 6779],
                        &[3963, 1424, 2869],
                    ],
                ),
            ),
            "S3C" => {
                let row = vec![q(-101, 96), q(97, 24), q(-191, 96)];
                Self::new(
                    "S3C",
                    s3_in,
                    s3_out,
                    ExactMatrix::from_rows(vec![row.clone(), row.clone(), row]).expect("3x3"),
                    ExactMatrix::from_rows(vec![
                        vec![q(733, 144), q(-431, 72), q(23, 12)],
                        vec![q(353, 144), q(-53, 24), q(4, 9)],
                        vec![q(47, 48), q(-31, 72), q(-7, 36)],
                    ])
                    .expect("3x3"),
                )
            }
            _ => return Err(SchemeError::UnknownBuiltin(name.to_string())),
        };
        Ok(scheme.expect("builtin schemes satisfy the invariants"))
    }

    pub fn builtins() -> Vec<Self> {
        BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("registered"))
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Block size `s`.
    pub fn size(&self) -> usize {
        self.c_in.len()
    }

    pub fn c_in(&self) -> &ExactVector {
        &self.c_in
    }

    pub fn c_out(&self) -> &ExactVector {
        &self.c_out
    }

    pub fn a(&self) -> &ExactMatrix {
        &self.a
    }

    pub fn b(&self) -> &ExactMatrix {
        &self.b
    }

    pub fn to_json(&self) -> String {
        let file = SchemeFile {
            name: self.name.clone(),
            s: self.size(),
            c_in: self.c_in.entries().to_vec(),
            c_out: self.c_out.entries().to_vec(),
            a: self.a.to_rows(),
            b: self.b.to_rows(),
        };
        serde_json::to_string_pretty(&file).expect("scheme serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemeError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: SchemeFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            SchemeError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        file.into_scheme()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SchemeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SchemeError> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|source| SchemeError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeFile {
    name: String,
    s: usize,
    c_in: Vec<Rational>,
    c_out: Vec<Rational>,
    #[serde(rename = "A")]
    a: Vec<Vec<Rational>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Rational>>,
}

impl SchemeFile {
    fn into_scheme(self) -> Result<Scheme, SchemeError> {
        let s = self.s;
        if s == 0 {
            return Err(SchemeError::EmptyBlock);
        }
        for (field, c) in [("c_in", &self.c_in), ("c_out", &self.c_out)] {
            if c.len() != s {
                return Err(SchemeError::AbscissaeLength {
                    field,
                    expected: s,
                    found: c.len(),
                });
            }
        }
        let matrix = |field: &'static str, rows: Vec<Vec<Rational>>| {
            let found_rows = rows.len();
            let found_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
            if found_rows != s || rows.iter().any(|r| r.len() != s) {
                return Err(SchemeError::NotSquare {
                    field,
                    s,
                    rows: found_rows,
                    cols: found_cols,
                });
            }
            ExactMatrix::from_rows(rows).map_err(|source| SchemeError::Matrix { field, source })
        };
        let a = matrix("A", self.a)?;
        let b = matrix("B", self.b)?;
        let c_in = ExactVector::new(self.c_in).map_err(|source| SchemeError::Matrix {
            field: "c_in",
            source,
        })?;
        let c_out = ExactVector::new(self.c_out).map_err(|source| SchemeError::Matrix {
            field: "c_out",
            source,
        })?;
        Scheme::new(self.name, c_in, c_out, a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_coefficients() {
        let s2 = Scheme::builtin("S2").unwrap();
        assert_eq!(s2.a().get(0, 1), &Rational::ratio(7, 6));
        assert_eq!(s2.size(), 2);
        let s3a = Scheme::builtin("s3a").unwrap();
        assert_eq!(s3a.b().get(2, 1), &Rational::ratio(59, 192));
        assert_eq!(
            s3a.c_out(),
            &ExactVector::from_ratios(&[(5, 3), (4, 3), (1, 1)])
        );
        let c = Scheme::builtin("S3C").unwrap();
        assert_eq!(c.a().get(2, 2), &Rational::ratio(-191, 96));
    }

    #[test]
    fn unknown_builtin() {
        let err = Scheme::builtin("NOPE").unwrap_err();
        assert!(err.to_string().starts_with("unknown builtin"));
    }

    #[test]
    fn builtin_rows_of_a_sum_to_one() {
        for scheme in Scheme::builtins() {
            for i in 0..scheme.size() {
                assert!(
                    scheme.a().row(i).sum().is_one(),
                    "{} row {i}",
                    scheme.name()
                );
            }
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        for scheme in Scheme::builtins() {
            let path = dir.path().join(format!("{}.json", scheme.name()));
            scheme.save(&path).unwrap();
            assert_eq!(Scheme::load(&path).unwrap(), scheme);
        }
    }

    fn s2_json() -> serde_json::Value {
        serde_json::from_str(&Scheme::builtin("S2").unwrap().to_json()).unwrap()
    }

    #[test]
    fn ascending_abscissae_rejected() {
        let mut v = s2_json();
        v["c_in"] = serde_json::json!(["0", "1/2"]);
        let err = Scheme::from_json(&v.to_string()).unwrap_err();
        assert_eq!(err.to_string(), "c_in: abscissae not descending");
    }

    #[test]
    fn non_square_a_rejected() {
        let mut v = s2_json();
        v["A"] = serde_json::json!([["1", "0", "0"], ["1", "0", "0"]]);
        let err = Scheme::from_json(&v.to_string()).unwrap_err();
        assert!(
            err.to_string().starts_with("A not square of size s"),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_carry_field_and_line() {
        let text = "{\n  \"name\": \"x\",\n  \"s\": 2,\n  \"c_in\": [\"1/2\", \"zero\"],\n  \"c_out\": [], \"A\": [], \"B\": []\n}";
        match Scheme::from_json(text).unwrap_err() {
            SchemeError::Parse {
                path,
                line,
                message,
                ..
            } => {
                assert_eq!(path, "c_in[1]");
                assert_eq!(line, 4);
                assert!(message.contains("invalid rational 'zero'"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        let mut v = s2_json();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(
            Scheme::from_json(&v.to_string()),
            Err(SchemeError::Parse { .. })
        ));
    }

    #[test]
    fn other_invariants() {
        let mut v = s2_json();
        v["c_in"] = serde_json::json!(["1", "1/2"]);
        assert!(matches!(
            Scheme::from_json(&v.to_string()),
            Err(SchemeError::LastAbscissaNotZero(_))
        ));
        let mut v = s2_json();
        v["c_out"] = serde_json::json!(["1/2", "-1"]);
        assert!(matches!(
            Scheme::from_json(&v.to_string()),
            Err(SchemeError::OutputNotAhead { index: 0, .. })
        ));
        let mut v = s2_json();
        v["s"] = serde_json::json!(3);
        assert!(matches!(
            Scheme::from_json(&v.to_string()),
            Err(SchemeError::AbscissaeLength { .. })
        ));
    }
}
