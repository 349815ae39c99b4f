//! Exact truncation residuals of a block scheme and the four structural
//! conditions that make it error inhibiting.
//!
//! For an exact solution `u`, the one-step residual expands as
//!
//! ```text
//! U_{n+1} - A U_n - Δt B U'_n = Σ_{p≥0} d_p Δt^p u^(p)(t_n)
//! d_p = c_out^p / p! - A c_in^p / p! - B c_in^(p-1) / (p-1)!
//! ```
//!
//! with elementwise powers, so the normalized truncation error is
//! `τ_n = Σ_p d_p Δt^(p-1) u^(p)(t_n)`. None of this depends on the ODE.

mod stability;

pub use stability::{
    spectral_radius, stability_scan, write_stability_csv, StabilityError, StabilityPoint,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::exact::{matvec, rank, ExactMatrix, ExactVector, Rational};
use crate::scheme::Scheme;

/// Taylor coefficient `d_p` of the one-step residual.
///
/// `p = 0` gives the consistency defect `1 - A·1`; the derivative term only
/// enters from `p = 1` on.
pub fn residual_vector(scheme: &Scheme, p: u32) -> ExactVector {
    residual_from_parts(scheme.a(), scheme.b(), scheme.c_in(), scheme.c_out(), p)
}

pub(crate) fn residual_from_parts(
    a: &ExactMatrix,
    b: &ExactMatrix,
    c_in: &ExactVector,
    c_out: &ExactVector,
    p: u32,
) -> ExactVector {
    let fp = Rational::inv_factorial(p);
    let out_term = c_out.map(|c| c.pow(p) * &fp);
    let in_pow = c_in.map(|c| c.pow(p) * &fp);
    let mut d = out_term
        .try_sub(&matvec(a, &in_pow).expect("square"))
        .expect("same length");
    if p >= 1 {
        let fq = Rational::inv_factorial(p - 1);
        let deriv = c_in.map(|c| c.pow(p - 1) * &fq);
        d = d
            .try_sub(&matvec(b, &deriv).expect("square"))
            .expect("same length");
    }
    d
}

/// `d_1 ..= d_{p_max}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualTable(BTreeMap<u32, ExactVector>);

impl ResidualTable {
    pub fn compute(scheme: &Scheme, p_max: u32) -> Self {
        Self(
            (1..=p_max)
                .map(|p| (p, residual_vector(scheme, p)))
                .collect(),
        )
    }

    pub fn get(&self, p: u32) -> Option<&ExactVector> {
        self.0.get(&p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &ExactVector)> {
        self.0.iter().map(|(p, d)| (*p, d))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationOrder {
    /// Largest `q` with `d_p = 0` for all `1 ≤ p ≤ q`.
    pub order: u32,
    /// `d_{q+1}`.
    pub leading: ExactVector,
    /// `q` reached `p_max`; the true order may be higher.
    pub saturated: bool,
}

pub fn truncation_order(scheme: &Scheme, p_max: u32) -> TruncationOrder {
    let mut q = 0;
    while q < p_max && residual_vector(scheme, q + 1).is_zero() {
        q += 1;
    }
    TruncationOrder {
        order: q,
        leading: residual_vector(scheme, q + 1),
        saturated: q == p_max,
    }
}

/// Default search depth for the order: high enough to expose any order the
/// built-in block sizes can reach.
pub const DEFAULT_P_MAX: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionStatus {
    Pass,
    Fail,
    NotEvaluated,
}

impl fmt::Display for ConditionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotEvaluated => "NOT_EVALUATED",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Rank(usize),
    /// `A·1`.
    RowSums(Vec<Rational>),
    Trace(Rational),
    EisResidual(Rational),
    /// `A·d_{q+1}` when `A` is not of the form `1·aᵀ`.
    Annihilated(Vec<Rational>),
    None,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Rational]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        match self {
            Self::Rank(r) => write!(f, "rank={r}"),
            Self::RowSums(v) => write!(f, "A*1=({})", list(v)),
            Self::Trace(t) => write!(f, "trace={t}"),
            Self::EisResidual(r) => write!(f, "eis_residual={r}"),
            Self::Annihilated(v) => write!(f, "A*d=({})", list(v)),
            Self::None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionResult {
    pub id: &'static str,
    pub status: ConditionStatus,
    pub witness: Witness,
}

impl ConditionResult {
    pub fn passed(&self) -> bool {
        self.status == ConditionStatus::Pass
    }
}

impl fmt::Display for ConditionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.id, self.status)?;
        if self.witness != Witness::None {
            write!(f, " {}", self.witness)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub scheme: String,
    pub conditions: [ConditionResult; 4],
    /// Detected truncation order `q`.
    pub order: u32,
    pub order_saturated: bool,
    /// `d_{q+1}`.
    pub leading: Vec<Rational>,
    /// The common row `a` of `A = 1·aᵀ`, when C1 and C2 hold.
    pub row: Option<Vec<Rational>>,
    /// `aᵀ d_{q+1}`, when C1 and C2 hold.
    pub eis_residual: Option<Rational>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(ConditionResult::passed)
    }

    pub fn condition(&self, id: &str) -> &ConditionResult {
        self.conditions
            .iter()
            .find(|c| c.id == id)
            .expect("condition id C1..C4")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            writeln!(f, "{c}")?;
        }
        let leading = self
            .leading
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        write!(
            f,
            "truncation order {}{} leading=({leading})",
            self.order,
            if self.order_saturated { "+" } else { "" }
        )
    }
}

/// Checks C1–C4 exactly.
///
/// C3 follows from C1 and C2: `A = 1·aᵀ` with `aᵀ1 = 1` has the nonzero
/// eigenvalue 1 and an `(s-1)`-dimensional kernel, so it is diagonalizable.
/// C4 is tested at leading order, `aᵀ d_{q+1} = 0`, which is the same as
/// `A d_{q+1} = 0` for such `A`.
pub fn verify_conditions(scheme: &Scheme) -> VerificationReport {
    let a = scheme.a();
    let s = scheme.size();
    let r = rank(a);
    let c1 = ConditionResult {
        id: "C1",
        status: pass_if(r == 1),
        witness: Witness::Rank(r),
    };

    let row_sums = matvec(a, &ExactVector::ones(s)).expect("square");
    let c2_ok = row_sums.iter().all(Rational::is_one);
    let c2 = ConditionResult {
        id: "C2",
        status: pass_if(c2_ok),
        witness: Witness::RowSums(row_sums.into_vec()),
    };

    let trace = a.trace();
    let c3 = if c1.passed() && c2_ok {
        ConditionResult {
            id: "C3",
            status: pass_if(!trace.is_zero()),
            witness: Witness::Trace(trace),
        }
    } else {
        ConditionResult {
            id: "C3",
            status: ConditionStatus::NotEvaluated,
            witness: Witness::None,
        }
    };

    let order = truncation_order(scheme, DEFAULT_P_MAX);
    let (row, eis_residual, c4) = if c1.passed() && c2_ok {
        // Rank one with A·1 = 1 forces every row to equal a.
        let row = a.row(0);
        let eis = row.dot(&order.leading).expect("same length");
        let c4 = ConditionResult {
            id: "C4",
            status: pass_if(eis.is_zero()),
            witness: Witness::EisResidual(eis.clone()),
        };
        (Some(row.into_vec()), Some(eis), c4)
    } else {
        let image = matvec(a, &order.leading).expect("square");
        let c4 = ConditionResult {
            id: "C4",
            status: pass_if(image.is_zero()),
            witness: Witness::Annihilated(image.into_vec()),
        };
        (None, None, c4)
    };

    VerificationReport {
        scheme: scheme.name().to_string(),
        conditions: [c1, c2, c3, c4],
        order: order.order,
        order_saturated: order.saturated,
        leading: order.leading.into_vec(),
        row,
        eis_residual,
    }
}

fn pass_if(ok: bool) -> ConditionStatus {
    if ok {
        ConditionStatus::Pass
    } else {
        ConditionStatus::Fail
    }
}
