use std::fmt;
use std::ops::Index;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use super::{ExactError, Rational};

/// A non-empty vector of exact rationals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExactVector(Vec<Rational>);

impl ExactVector {
    pub fn new(entries: Vec<Rational>) -> Result<Self, ExactError> {
        if entries.is_empty() {
            return Err(ExactError::Empty);
        }
        Ok(Self(entries))
    }

    pub fn from_ratios(entries: &[(i64, i64)]) -> Self {
        Self::new(
            entries
                .iter()
                .map(|&(p, q)| Rational::ratio(p, q))
                .collect(),
        )
        .expect("non-empty literal")
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![Rational::one(); n.max(1)])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Rational::zero(); n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entries(&self) -> &[Rational] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rational> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Rational::is_zero)
    }

    pub fn dot(&self, other: &Self) -> Result<Rational, ExactError> {
        if self.len() != other.len() {
            return Err(ExactError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> Rational {
        self.0.iter().sum()
    }

    pub fn scale(&self, k: &Rational) -> Self {
        Self(self.0.iter().map(|x| x * k).collect())
    }

    pub fn map(&self, f: impl Fn(&Rational) -> Rational) -> Self {
        Self(self.0.iter().map(f).collect())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, ExactError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, ExactError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(&Rational, &Rational) -> Rational,
    ) -> Result<Self, ExactError> {
        if self.len() != other.len() {
            return Err(ExactError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| f(a, b)).collect(),
        ))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(Rational::to_f64).collect()
    }

    pub fn into_vec(self) -> Vec<Rational> {
        self.0
    }
}

impl Index<usize> for ExactVector {
    type Output = Rational;
    fn index(&self, i: usize) -> &Rational {
        &self.0[i]
    }
}

impl fmt::Display for ExactVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for ExactVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExactMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl ExactMatrix {
    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self, ExactError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(ExactError::Empty);
        }
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(ExactError::Ragged {
                expected: c,
                found: bad.len(),
            });
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// `scale * [[n, ...], ...]` from integer literals.
    pub fn scaled_integers(scale: Rational, rows: &[&[i64]]) -> Self {
        let rows = rows
            .iter()
            .map(|row| row.iter().map(|&n| &scale * Rational::integer(n)).collect())
            .collect();
        Self::from_rows(rows).expect("well-formed literal matrix")
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rational::one();
        }
        m
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        let (rows, cols) = (rows.max(1), cols.max(1));
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    /// `u vᵀ`.
    pub fn outer(u: &ExactVector, v: &ExactVector) -> Self {
        let data = u
            .iter()
            .flat_map(|x| v.iter().map(move |y| x * y))
            .collect();
        Self {
            rows: u.len(),
            cols: v.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> ExactVector {
        ExactVector(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn row_slice(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<Rational>> {
        (0..self.rows).map(|i| self.row_slice(i).to_vec()).collect()
    }

    pub fn trace(&self) -> Rational {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, k: &Rational) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Rational::is_zero)
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn scale_row(&mut self, i: usize, k: &Rational) {
        for j in 0..self.cols {
            let v = self.get(i, j) * k;
            self.data[i * self.cols + j] = v;
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(Rational::to_f64).collect()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, ExactError> {
        if self.cols != other.rows {
            return Err(ExactError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                data.push(
                    (0..self.cols)
                        .map(|k| self.get(i, k) * other.get(k, j))
                        .sum(),
                );
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }
}

impl fmt::Display for ExactMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = self.data.iter().map(ToString::to_string).collect();
        let width = cells.iter().map(String::len).max().unwrap_or(1);
        for i in 0..self.rows {
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, "  ")?;
                }
                write!(f, "{:>width$}", cells[i * self.cols + j])?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ExactMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

pub fn matvec(m: &ExactMatrix, v: &ExactVector) -> Result<ExactVector, ExactError> {
    if m.cols != v.len() {
        return Err(ExactError::DimensionMismatch {
            expected: m.cols,
            found: v.len(),
        });
    }
    Ok(ExactVector(
        (0..m.rows)
            .map(|i| {
                m.row_slice(i)
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect(),
    ))
}

/// Clears the denominators of one row: returns integers proportional to `row`.
fn integer_row<'a>(row: impl Iterator<Item = &'a Rational> + Clone) -> Vec<BigInt> {
    let lcm = row.clone().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    row.map(|x| x.numer() * (&lcm / x.denom())).collect()
}

/// Fraction-free forward elimination in place, pivoting only in the first
/// `pivot_cols` columns. Returns the pivot columns in row order.
///
/// Every intermediate entry is a minor of the input, so the divisions by the
/// previous pivot are exact.
fn bareiss_forward(m: &mut [Vec<BigInt>], pivot_cols: usize) -> Vec<usize> {
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut prev = BigInt::one();
    let mut r = 0;
    for col in 0..pivot_cols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..nrows {
            for j in col + 1..ncols {
                let v = &m[r][col] * &m[i][j] - &m[i][col] * &m[r][j];
                debug_assert!((&v % &prev).is_zero());
                m[i][j] = v / &prev;
            }
            m[i][col] = BigInt::zero();
        }
        prev = m[r][col].clone();
        pivots.push(col);
        r += 1;
    }
    pivots
}

/// Exact rank by fraction-free Gaussian elimination.
pub fn rank(m: &ExactMatrix) -> usize {
    let mut ints: Vec<Vec<BigInt>> = (0..m.rows)
        .map(|i| integer_row(m.row_slice(i).iter()))
        .collect();
    bareiss_forward(&mut ints, m.cols).len()
}

/// Solves `m x = rhs` for square nonsingular `m`.
pub fn solve_linear(m: &ExactMatrix, rhs: &ExactVector) -> Result<ExactVector, ExactError> {
    if !m.is_square() {
        return Err(ExactError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if rhs.len() != m.rows {
        return Err(ExactError::DimensionMismatch {
            expected: m.rows,
            found: rhs.len(),
        });
    }
    let n = m.rows;
    let mut aug: Vec<Vec<BigInt>> = (0..n)
        .map(|i| integer_row(m.row_slice(i).iter().chain(std::iter::once(&rhs[i]))))
        .collect();
    let pivots = bareiss_forward(&mut aug, n);
    if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| c != i) {
        return Err(ExactError::Singular);
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::integer(aug[i][n].clone());
        for j in i + 1..n {
            acc = acc - Rational::integer(aug[i][j].clone()) * &x[j];
        }
        x[i] = acc.checked_div(&Rational::integer(aug[i][i].clone()))?;
    }
    Ok(ExactVector(x))
}
