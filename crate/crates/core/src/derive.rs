//! Construction of rank-one block schemes `A = 1·aᵀ`.
//!
//! For fixed abscissae and a row `a` with `aᵀ1 = 1`, the conditions
//! `d_1 = … = d_s = 0` are `s` independent moment systems, one per row of
//! `B`, all sharing the matrix `M[p][k] = c_in[k]^p / p!` (`p = 0..s-1`).
//! What remains free is `a`, and the error-inhibiting requirement is the
//! scalar equation `aᵀ d_{s+1}(a) = 0`.

use std::fmt;

use thiserror::Error;

use crate::analysis::{residual_from_parts, truncation_order, DEFAULT_P_MAX};
use crate::exact::{solve_linear, ExactError, ExactMatrix, ExactVector, Rational};
use crate::scheme::{Scheme, SchemeError};

/// Bisection stops once the bracket is narrower than this.
pub const BISECTION_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("row sum violation: sum(a) = {0}, expected 1")]
    RowSum(Rational),
    #[error("singular moment matrix (repeated abscissae)")]
    SingularMoments,
    #[error("length mismatch: a has {a}, c_in has {c_in}, c_out has {c_out}")]
    Length { a: usize, c_in: usize, c_out: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("empty range: {lo} > {hi}")]
    EmptyRange { lo: Rational, hi: Rational },
    #[error("invalid slice: {0}")]
    Slice(String),
    #[error("EIS constraint vanishes identically along this line")]
    Degenerate,
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Default abscissae `c_in = ((s-1)/s, …, 1/s, 0)` and `c_out = c_in + 1`.
pub fn default_abscissae(s: usize) -> (ExactVector, ExactVector) {
    let s = s.max(1) as i64;
    let c_in =
        ExactVector::new((0..s).map(|j| Rational::ratio(s - 1 - j, s)).collect()).expect("s >= 1");
    let c_out = shift_by_one(&c_in);
    (c_in, c_out)
}

pub fn shift_by_one(c_in: &ExactVector) -> ExactVector {
    c_in.map(|c| c + Rational::one())
}

fn check_shapes(
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
) -> Result<(), DeriveError> {
    if a.len() != c_in.len() || c_in.len() != c_out.len() {
        return Err(DeriveError::Length {
            a: a.len(),
            c_in: c_in.len(),
            c_out: c_out.len(),
        });
    }
    let sum = a.sum();
    if !sum.is_one() {
        return Err(DeriveError::RowSum(sum));
    }
    Ok(())
}

/// The unique `B` with `d_p = 0` for `p = 1..=s`, given `A = 1·aᵀ`.
pub fn solve_b(
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
) -> Result<ExactMatrix, DeriveError> {
    check_shapes(a, c_in, c_out)?;
    let s = c_in.len();
    let moments = ExactMatrix::from_rows(
        (0..s as u32)
            .map(|p| {
                c_in.iter()
                    .map(|c| c.pow(p) * Rational::inv_factorial(p))
                    .collect()
            })
            .collect(),
    )?;
    // a·c_in^p / p! is shared by every row.
    let a_terms: Vec<Rational> = (1..=s as u32)
        .map(|p| {
            a.iter()
                .zip(c_in.iter())
                .map(|(ak, ck)| ak * ck.pow(p))
                .sum::<Rational>()
                * Rational::inv_factorial(p)
        })
        .collect();
    let mut rows = Vec::with_capacity(s);
    for out in c_out.iter() {
        let rhs = (1..=s as u32)
            .map(|p| out.pow(p) * Rational::inv_factorial(p) - &a_terms[p as usize - 1])
            .collect();
        let row = solve_linear(&moments, &ExactVector::new(rhs)?).map_err(|e| match e {
            ExactError::Singular => DeriveError::SingularMoments,
            other => other.into(),
        })?;
        rows.push(row.into_vec());
    }
    Ok(ExactMatrix::from_rows(rows)?)
}

/// `aᵀ d_{s+1}` for the scheme assembled from `a`.
pub fn eis_constraint(
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
) -> Result<Rational, DeriveError> {
    let b = solve_b(a, c_in, c_out)?;
    let a_mat = ExactMatrix::outer(&ExactVector::ones(a.len()), a);
    let d = residual_from_parts(&a_mat, &b, c_in, c_out, c_in.len() as u32 + 1);
    Ok(a.dot(&d)?)
}

/// Builds the scheme `A = 1·aᵀ`, `B = solve_b(a)`.
pub fn assemble(
    name: &str,
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
) -> Result<Scheme, DeriveError> {
    let b = solve_b(a, c_in, c_out)?;
    let a_mat = ExactMatrix::outer(&ExactVector::ones(a.len()), a);
    Ok(Scheme::new(name, c_in.clone(), c_out.clone(), a_mat, b)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationResult {
    pub a: ExactVector,
    pub b: ExactMatrix,
    /// Re-detected truncation order; at least `s`.
    pub achieved_order: u32,
    /// `aᵀ d_{q+1}` at the achieved order.
    pub eis_residual: Rational,
}

pub fn derive(
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
) -> Result<DerivationResult, DeriveError> {
    let scheme = assemble("derived", a, c_in, c_out)?;
    let order = truncation_order(&scheme, DEFAULT_P_MAX);
    let eis_residual = a.dot(&order.leading)?;
    Ok(DerivationResult {
        a: a.clone(),
        b: scheme.b().clone(),
        achieved_order: order.order,
        eis_residual,
    })
}

/// A root of the EIS constraint along a search line.
#[derive(Clone, Debug, PartialEq)]
pub enum Root {
    Exact(Rational),
    /// Bracketed and bisected to [`BISECTION_TOL`].
    Approximate(f64),
}

impl Root {
    pub fn to_f64(&self) -> f64 {
        match self {
            Self::Exact(q) => q.to_f64(),
            Self::Approximate(x) => *x,
        }
    }

    /// The exact value of the root, or of its double approximation.
    pub fn to_rational(&self) -> Rational {
        match self {
            Self::Exact(q) => q.clone(),
            Self::Approximate(x) => Rational::from_f64(*x).expect("finite root"),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact(_))
    }
}

impl fmt::Display for Root {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact(q) => write!(f, "{q} (exact)"),
            Self::Approximate(x) => write!(f, "{x:.17e} (bisected)"),
        }
    }
}

/// A root together with the full row `a` it corresponds to.
#[derive(Clone, Debug, PartialEq)]
pub struct LineRoot {
    pub parameter: Root,
    pub a: ExactVector,
}

/// The affine family `a(t) = base + t·direction`, with `sum(base) = 1` and
/// `sum(direction) = 0`.
#[derive(Clone, Debug)]
struct SearchLine {
    base: ExactVector,
    direction: ExactVector,
}

impl SearchLine {
    fn at(&self, t: &Rational) -> ExactVector {
        self.base
            .try_add(&self.direction.scale(t))
            .expect("same length")
    }
}

/// `c0 + c1 t + c2 t²` with exact coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Quadratic {
    c0: Rational,
    c1: Rational,
    c2: Rational,
}

impl Quadratic {
    fn eval(&self, t: &Rational) -> Rational {
        (&self.c2 * t + &self.c1) * t + &self.c0
    }

    fn is_zero(&self) -> bool {
        self.c0.is_zero() && self.c1.is_zero() && self.c2.is_zero()
    }

    /// Real roots when all of them are rational; `None` if they are irrational.
    fn rational_roots(&self) -> Option<Vec<Rational>> {
        if self.c2.is_zero() {
            if self.c1.is_zero() {
                return Some(Vec::new());
            }
            return Some(vec![-&self.c0 / &self.c1]);
        }
        let disc = &self.c1 * &self.c1 - Rational::integer(4) * &self.c2 * &self.c0;
        if disc.is_negative() {
            return Some(Vec::new());
        }
        let root = disc.sqrt_exact()?;
        let two_a = Rational::integer(2) * &self.c2;
        let mut roots = vec![(-&self.c1 - &root) / &two_a, (-&self.c1 + &root) / &two_a];
        roots.sort();
        roots.dedup();
        Some(roots)
    }
}

/// Roots of a quadratic in `[lo, hi]`: exact when rational, otherwise every
/// sign change on a `samples`-point grid is bisected.
pub(crate) fn quadratic_roots_in(
    g: &Quadratic,
    lo: &Rational,
    hi: &Rational,
    samples: usize,
) -> Result<Vec<Root>, DeriveError> {
    if samples < 2 {
        return Err(DeriveError::TooFewSamples(samples));
    }
    if lo > hi {
        return Err(DeriveError::EmptyRange {
            lo: lo.clone(),
            hi: hi.clone(),
        });
    }
    if g.is_zero() {
        return Err(DeriveError::Degenerate);
    }
    if let Some(roots) = g.rational_roots() {
        return Ok(roots
            .into_iter()
            .filter(|r| r >= lo && r <= hi)
            .map(Root::Exact)
            .collect());
    }
    let width = hi - lo;
    let grid: Vec<Rational> = (0..samples)
        .map(|k| lo + &width * Rational::ratio(k as i64, samples as i64 - 1))
        .collect();
    let signs: Vec<std::cmp::Ordering> = grid
        .iter()
        .map(|t| g.eval(t).cmp(&Rational::zero()))
        .collect();
    let mut roots = Vec::new();
    for k in 0..samples - 1 {
        if signs[k].is_ne() && signs[k + 1].is_ne() && signs[k] != signs[k + 1] {
            roots.push(Root::Approximate(bisect(
                g,
                grid[k].to_f64(),
                grid[k + 1].to_f64(),
                signs[k],
            )));
        }
    }
    Ok(roots)
}

fn bisect(g: &Quadratic, mut lo: f64, mut hi: f64, lo_sign: std::cmp::Ordering) -> f64 {
    let sign_at = |t: f64| {
        g.eval(&Rational::from_f64(t).expect("finite"))
            .cmp(&Rational::zero())
    };
    while hi - lo > BISECTION_TOL * lo.abs().max(hi.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = sign_at(mid);
        if s.is_eq() {
            return mid;
        }
        if s == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn search_line(
    line: &SearchLine,
    c_in: &ExactVector,
    c_out: &ExactVector,
    range: (&Rational, &Rational),
    samples: usize,
) -> Result<Vec<LineRoot>, DeriveError> {
    // The constraint has degree at most 2 in a, hence in t; recover it from three points.
    let g = |t: i64| eis_constraint(&line.at(&Rational::integer(t)), c_in, c_out);
    let (g0, g1, g2) = (g(0)?, g(1)?, g(2)?);
    let c2 = (&g2 - Rational::integer(2) * &g1 + &g0) / Rational::integer(2);
    let c1 = &g1 - &g0 - &c2;
    let poly = Quadratic { c0: g0, c1, c2 };
    let roots = quadratic_roots_in(&poly, range.0, range.1, samples)?;
    Ok(roots
        .into_iter()
        .map(|r| LineRoot {
            a: line.at(&r.to_rational()),
            parameter: r,
        })
        .collect())
}

/// Roots of `g(a1) = eis_constraint((a1, 1 - a1))` in `a1_range`.
pub fn search_s2(
    c_in: &ExactVector,
    c_out: &ExactVector,
    a1_range: (&Rational, &Rational),
    samples: usize,
) -> Result<Vec<LineRoot>, DeriveError> {
    if c_in.len() != 2 {
        return Err(DeriveError::Length {
            a: 2,
            c_in: c_in.len(),
            c_out: c_out.len(),
        });
    }
    let line = SearchLine {
        base: ExactVector::from_ratios(&[(0, 1), (1, 1)]),
        direction: ExactVector::from_ratios(&[(1, 1), (-1, 1)]),
    };
    search_line(&line, c_in, c_out, a1_range, samples)
}

/// One-dimensional slice of the `s = 3` family: `a[fixed_index] = fixed_value`,
/// the lowest remaining index is the search parameter, and the last one
/// absorbs `sum(a) = 1`.
pub fn search_s3_slice(
    c_in: &ExactVector,
    c_out: &ExactVector,
    fixed_index: usize,
    fixed_value: &Rational,
    range: (&Rational, &Rational),
    samples: usize,
) -> Result<Vec<LineRoot>, DeriveError> {
    if c_in.len() != 3 {
        return Err(DeriveError::Length {
            a: 3,
            c_in: c_in.len(),
            c_out: c_out.len(),
        });
    }
    if fixed_index > 2 {
        return Err(DeriveError::Slice(format!(
            "fixed index {fixed_index} out of range 0..3"
        )));
    }
    let (free, rest) = slice_indices(fixed_index);
    let mut base = vec![Rational::zero(); 3];
    base[fixed_index] = fixed_value.clone();
    base[rest] = Rational::one() - fixed_value;
    let mut direction = vec![Rational::zero(); 3];
    direction[free] = Rational::one();
    direction[rest] = -Rational::one();
    let line = SearchLine {
        base: ExactVector::new(base)?,
        direction: ExactVector::new(direction)?,
    };
    search_line(&line, c_in, c_out, range, samples)
}

/// `(search parameter index, dependent index)` for a fixed index in an `s = 3` slice.
pub fn slice_indices(fixed_index: usize) -> (usize, usize) {
    let mut others = (0..3).filter(|&i| i != fixed_index);
    (
        others.next().expect("two others"),
        others.next().expect("two others"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{residual_vector, verify_conditions};
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::ratio(p, d)
    }

    fn v(entries: &[(i64, i64)]) -> ExactVector {
        ExactVector::from_ratios(entries)
    }

    #[test]
    fn default_abscissae_match_builtins() {
        let (c_in, c_out) = default_abscissae(3);
        let s3a = Scheme::builtin("S3A").unwrap();
        assert_eq!(&c_in, s3a.c_in());
        assert_eq!(&c_out, s3a.c_out());
    }

    #[test]
    fn reproduces_builtin_derivative_matrices() {
        for name in ["S2", "BUTCHER2", "S3A", "S3B", "S3C"] {
            let scheme = Scheme::builtin(name).unwrap();
            let a = scheme.a().row(0);
            let b = solve_b(&a, scheme.c_in(), scheme.c_out()).unwrap();
            assert_eq!(&b, scheme.b(), "{name}");
        }
        let (c_in, c_out) = default_abscissae(2);
        let b = solve_b(&v(&[(-1, 6), (7, 6)]), &c_in, &c_out).unwrap();
        assert_eq!(
            b,
            ExactMatrix::scaled_integers(q(1, 24), &[&[55, -17], &[25, 1]])
        );
    }

    #[test]
    fn solve_b_errors() {
        let (c_in, c_out) = default_abscissae(2);
        let err = solve_b(&v(&[(1, 2), (1, 3)]), &c_in, &c_out).unwrap_err();
        assert!(err.to_string().starts_with("row sum violation"), "{err}");
        let repeated = v(&[(0, 1), (0, 1)]);
        let err = solve_b(&v(&[(1, 2), (1, 2)]), &repeated, &shift_by_one(&repeated)).unwrap_err();
        assert_eq!(
            err.to_string(),
            "singular moment matrix (repeated abscissae)"
        );
        assert!(matches!(
            solve_b(&v(&[(1, 1)]), &c_in, &c_out),
            Err(DeriveError::Length { .. })
        ));
    }

    #[test]
    fn eis_constraint_examples() {
        let (c_in, c_out) = default_abscissae(2);
        assert!(eis_constraint(&v(&[(-1, 6), (7, 6)]), &c_in, &c_out)
            .unwrap()
            .is_zero());
        let b2 = Scheme::builtin("BUTCHER2").unwrap();
        assert_eq!(
            eis_constraint(&v(&[(7, 4), (-3, 4)]), b2.c_in(), b2.c_out()).unwrap(),
            q(19, 24)
        );
        let generic = eis_constraint(&v(&[(1, 1), (0, 1)]), &c_in, &c_out).unwrap();
        assert!(!generic.is_zero());
        // Independent evaluation: assemble the scheme and read d_3 off the analysis module.
        let scheme = assemble("x", &v(&[(1, 1), (0, 1)]), &c_in, &c_out).unwrap();
        let d3 = residual_vector(&scheme, 3);
        assert_eq!(generic, d3[0].clone());
    }

    #[test]
    fn derive_reports_order_and_residual() {
        let (c_in, c_out) = default_abscissae(3);
        let r = derive(&v(&[(467, 768), (-1996, 768), (2297, 768)]), &c_in, &c_out).unwrap();
        assert_eq!(r.achieved_order, 3);
        assert!(r.eis_residual.is_zero());
        assert_eq!(&r.b, Scheme::builtin("S3A").unwrap().b());
    }

    #[test]
    fn search_s2_recovers_s2() {
        let (c_in, c_out) = default_abscissae(2);
        let roots = search_s2(&c_in, &c_out, (&q(-2, 1), &q(2, 1)), 41).unwrap();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].parameter, Root::Exact(q(-1, 6)));
        assert_eq!(roots[0].a, v(&[(-1, 6), (7, 6)]));
    }

    #[test]
    fn search_s2_on_butcher_abscissae_excludes_butcher_row() {
        let b2 = Scheme::builtin("BUTCHER2").unwrap();
        let roots = search_s2(b2.c_in(), b2.c_out(), (&q(-2, 1), &q(2, 1)), 41).unwrap();
        assert!(roots.iter().all(|r| r.parameter != Root::Exact(q(7, 4))));
        for r in &roots {
            let scheme = assemble("cand", &r.a, b2.c_in(), b2.c_out()).unwrap();
            assert!(verify_conditions(&scheme).all_passed());
        }
    }

    #[test]
    fn search_s2_degenerate_range() {
        let (c_in, c_out) = default_abscissae(2);
        assert!(search_s2(&c_in, &c_out, (&q(0, 1), &q(0, 1)), 2)
            .unwrap()
            .is_empty());
        assert!(matches!(
            search_s2(&c_in, &c_out, (&q(0, 1), &q(1, 1)), 1),
            Err(DeriveError::TooFewSamples(1))
        ));
    }

    #[test]
    fn s3_slices_recover_builtin_rows() {
        let (c_in, c_out) = default_abscissae(3);
        for name in ["S3A", "S3B", "S3C"] {
            let row = Scheme::builtin(name).unwrap().a().row(0);
            let roots =
                search_s3_slice(&c_in, &c_out, 0, &row[0], (&q(-10, 1), &q(10, 1)), 64).unwrap();
            assert_eq!(roots.len(), 1, "{name}");
            assert_eq!(roots[0].parameter, Root::Exact(row[1].clone()), "{name}");
            assert_eq!(roots[0].a, row, "{name}");
        }
        // Fix the middle entry instead.
        let row = Scheme::builtin("S3B").unwrap().a().row(0);
        let roots = search_s3_slice(&c_in, &c_out, 1, &row[1], (&q(-10, 1), &q(10, 1)), 8).unwrap();
        assert_eq!(roots[0].a, row);
    }

    #[test]
    fn s3_slice_without_root_in_range() {
        let (c_in, c_out) = default_abscissae(3);
        let roots =
            search_s3_slice(&c_in, &c_out, 0, &q(467, 768), (&q(0, 1), &q(1, 1)), 16).unwrap();
        assert!(roots.is_empty());
        assert!(search_s3_slice(&c_in, &c_out, 3, &q(0, 1), (&q(0, 1), &q(1, 1)), 16).is_err());
    }

    #[test]
    fn bisection_path_on_irrational_roots() {
        // t² - 2 has roots ±√2.
        let g = Quadratic {
            c0: q(-2, 1),
            c1: q(0, 1),
            c2: q(1, 1),
        };
        let roots = quadratic_roots_in(&g, &q(-2, 1), &q(2, 1), 9).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots.iter().all(|r| !r.is_exact()));
        assert!((roots[0].to_f64() + 2f64.sqrt()).abs() < 1e-14);
        assert!((roots[1].to_f64() - 2f64.sqrt()).abs() < 1e-14);
        // Rational roots short-circuit to exact values.
        let g = Quadratic {
            c0: q(-1, 4),
            c1: q(0, 1),
            c2: q(1, 1),
        };
        let roots = quadratic_roots_in(&g, &q(-1, 1), &q(1, 1), 3).unwrap();
        assert_eq!(roots, vec![Root::Exact(q(-1, 2)), Root::Exact(q(1, 2))]);
        // Complex roots.
        let g = Quadratic {
            c0: q(1, 1),
            c1: q(0, 1),
            c2: q(1, 1),
        };
        assert!(quadratic_roots_in(&g, &q(-1, 1), &q(1, 1), 3)
            .unwrap()
            .is_empty());
    }

    fn random_row(s: usize) -> impl Strategy<Value = ExactVector> {
        prop::collection::vec((-50i64..50, 1i64..30), s - 1).prop_map(move |parts| {
            let mut row: Vec<Rational> = parts.into_iter().map(|(p, d)| q(p, d)).collect();
            let rest = Rational::one() - row.iter().sum::<Rational>();
            row.push(rest);
            ExactVector::new(row).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn solved_b_annihilates_low_order_residuals_s2(a in random_row(2)) {
            let (c_in, c_out) = default_abscissae(2);
            let scheme = assemble("r", &a, &c_in, &c_out).unwrap();
            for p in 0..=2 {
                prop_assert!(residual_vector(&scheme, p).is_zero());
            }
            let report = verify_conditions(&scheme);
            if report.order == 2 {
                prop_assert_eq!(Some(eis_constraint(&a, &c_in, &c_out).unwrap()), report.eis_residual);
            }
        }

        #[test]
        fn solved_b_annihilates_low_order_residuals_s3(a in random_row(3)) {
            let (c_in, c_out) = default_abscissae(3);
            let scheme = assemble("r", &a, &c_in, &c_out).unwrap();
            for p in 0..=3 {
                prop_assert!(residual_vector(&scheme, p).is_zero());
            }
            let report = verify_conditions(&scheme);
            if report.order == 3 {
                prop_assert_eq!(Some(eis_constraint(&a, &c_in, &c_out).unwrap()), report.eis_residual);
            }
        }

        #[test]
        fn every_root_assembles_into_an_eis_scheme(lo in -5i64..0, hi in 0i64..5, num in -40i64..40, den in 1i64..20) {
            let c_in = ExactVector::new(vec![q(num.abs() + 1, den), q(0, 1)]).unwrap();
            let c_out = shift_by_one(&c_in);
            let roots = search_s2(&c_in, &c_out, (&q(lo, 1), &q(hi, 1)), 16).unwrap();
            for r in roots {
                let scheme = assemble("root", &r.a, &c_in, &c_out).unwrap();
                let report = verify_conditions(&scheme);
                if r.parameter.is_exact() {
                    prop_assert!(report.all_passed());
                } else {
                    prop_assert!(report.eis_residual.unwrap().to_f64().abs() <= 1e-12);
                }
            }
        }
    }
}
