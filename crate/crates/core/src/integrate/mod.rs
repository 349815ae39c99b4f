//! Floating-point time stepping of block schemes on nonlinear systems.
//!
//! A block state holds `s` rows of `m` values; row `j` approximates
//! `u(t_n + c_in[j]·Δt)`. One step applies
//! `V_{n+1} = A V_n + Δt B F(V_n)` with `F` evaluated rowwise.

mod problem;

pub use problem::{ExactFn, Problem, Rhs, BUILTIN_PROBLEMS};

use thiserror::Error;

use crate::scheme::Scheme;

/// RK4 substeps per abscissa interval when bootstrapping without an exact solution.
pub const BOOTSTRAP_SUBSTEPS: usize = 1000;
/// Doubling tolerance for [`rk4_reference`].
pub const REFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("non-finite state at step {step}")]
    NonFinite { step: u64 },
    #[error("non-positive step dt = {0}")]
    NonPositiveStep(f64),
    #[error("T not reachable with this dt: (T - t0)/dt = {ratio}")]
    Unreachable { ratio: f64 },
    #[error("problem '{0}' has no exact solution")]
    MissingExact(String),
    #[error(
        "reference not converged: doubling {n_steps} RK4 steps changed the result by {diff:e}"
    )]
    ReferenceNotConverged { n_steps: usize, diff: f64 },
    #[error("unknown problem '{0}' (expected one of P1, P2, P3, P4)")]
    UnknownProblem(String),
    #[error("exact solution of '{name}' misses u0 by {err:e}")]
    InconsistentExact { name: String, err: f64 },
    #[error("block state has {found} values, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("n_steps must be at least 1")]
    NoSteps,
}

/// Double-precision rendering of a scheme's exact coefficients, rounded to
/// nearest once.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatScheme {
    pub name: String,
    pub s: usize,
    pub c_in: Vec<f64>,
    /// Row-major `s × s`.
    pub a: Vec<f64>,
    /// Row-major `s × s`.
    pub b: Vec<f64>,
}

impl From<&Scheme> for FloatScheme {
    fn from(scheme: &Scheme) -> Self {
        Self {
            name: scheme.name().to_string(),
            s: scheme.size(),
            c_in: scheme.c_in().to_f64(),
            a: scheme.a().to_f64(),
            b: scheme.b().to_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    pub n: u64,
    pub base_time: f64,
    pub s: usize,
    pub m: usize,
    /// Row-major `s × m`, rows in the scheme's abscissa order.
    pub values: Vec<f64>,
}

impl BlockState {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.m..(j + 1) * self.m]
    }

    /// The row at abscissa 0, i.e. the value at `base_time`.
    pub fn current(&self) -> &[f64] {
        self.row(self.s - 1)
    }

    /// Times of every row.
    pub fn row_times(&self, scheme: &FloatScheme, dt: f64) -> Vec<f64> {
        scheme
            .c_in
            .iter()
            .map(|c| self.base_time + c * dt)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    /// Every block from the start, or only the last one.
    pub states: Vec<BlockState>,
}

impl Trajectory {
    pub fn last(&self) -> &BlockState {
        self.states
            .last()
            .expect("trajectory holds at least the starting block")
    }
}

fn check_dt(dt: f64) -> Result<(), IntegrateError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(IntegrateError::NonPositiveStep(dt))
    }
}

/// Dot product accurate to about one rounding (error-free products and sums).
///
/// The rows of `A` sum to 1 but their absolute values do not, so plain
/// summation loses several ulps on constant states.
fn compensated_dot(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for (x, y) in pairs {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        let s_err = (sum - (t - z)) + (p - z);
        sum = t;
        carry += p_err + s_err;
    }
    sum + carry
}

/// One block step.
pub fn step(
    scheme: &FloatScheme,
    problem: &Problem,
    state: &BlockState,
    dt: f64,
) -> Result<BlockState, IntegrateError> {
    check_dt(dt)?;
    let (s, m) = (scheme.s, problem.dim());
    if state.values.len() != s * m {
        return Err(IntegrateError::Shape {
            expected: s * m,
            found: state.values.len(),
        });
    }
    let mut f = vec![0.0; s * m];
    for j in 0..s {
        let t = state.base_time + scheme.c_in[j] * dt;
        problem.rhs_into(t, state.row(j), &mut f[j * m..(j + 1) * m]);
    }
    let mut values = vec![0.0; s * m];
    for i in 0..s {
        for c in 0..m {
            let free =
                compensated_dot((0..s).map(|j| (scheme.a[i * s + j], state.values[j * m + c])));
            let deriv: f64 = (0..s).map(|j| scheme.b[i * s + j] * f[j * m + c]).sum();
            values[i * m + c] = free + dt * deriv;
        }
    }
    let n = state.n + 1;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFinite { step: n });
    }
    Ok(BlockState {
        n,
        base_time: state.base_time + dt,
        s,
        m,
        values,
    })
}

/// Starting block: exact values when available, otherwise RK4 with
/// [`BOOTSTRAP_SUBSTEPS`] substeps per abscissa interval.
pub fn bootstrap(
    scheme: &FloatScheme,
    problem: &Problem,
    dt: f64,
) -> Result<BlockState, IntegrateError> {
    bootstrap_with_substeps(scheme, problem, dt, BOOTSTRAP_SUBSTEPS)
}

pub fn bootstrap_with_substeps(
    scheme: &FloatScheme,
    problem: &Problem,
    dt: f64,
    substeps: usize,
) -> Result<BlockState, IntegrateError> {
    check_dt(dt)?;
    let (s, m, t0) = (scheme.s, problem.dim(), problem.t0());
    let mut values = vec![0.0; s * m];
    if problem.has_exact() {
        for j in 0..s {
            let u = problem
                .exact(t0 + scheme.c_in[j] * dt)
                .expect("exact present");
            values[j * m..(j + 1) * m].copy_from_slice(&u);
        }
    } else {
        // c_in is descending, so walk the rows backwards.
        let mut t = t0;
        let mut u = problem.u0().to_vec();
        for j in (0..s).rev() {
            let target = t0 + scheme.c_in[j] * dt;
            if target > t {
                u = rk4_advance(problem, t, &u, target, substeps);
                t = target;
            }
            values[j * m..(j + 1) * m].copy_from_slice(&u);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { step: 0 });
        }
    }
    Ok(BlockState {
        n: 0,
        base_time: t0,
        s,
        m,
        values,
    })
}

/// Number of block steps from `t0` to `t_end`, if it is an integer to within a few ulps.
pub fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<u64, IntegrateError> {
    check_dt(dt)?;
    let ratio = (t_end - t0) / dt;
    let k = ratio.round();
    if ratio.is_nan() || ratio < -0.5 || (ratio - k).abs() > 4.0 * f64::EPSILON * k.max(1.0) {
        return Err(IntegrateError::Unreachable { ratio });
    }
    Ok(k as u64)
}

/// Steps from the bootstrap block until the abscissa-0 row sits at `t_end`.
pub fn integrate(
    scheme: &FloatScheme,
    problem: &Problem,
    dt: f64,
    t_end: f64,
    keep_all: bool,
) -> Result<Trajectory, IntegrateError> {
    let steps = step_count(problem.t0(), t_end, dt)?;
    let mut state = bootstrap(scheme, problem, dt)?;
    let mut states = Vec::new();
    for k in 1..=steps {
        let mut next = step(scheme, problem, &state, dt)?;
        // Keep base times free of accumulated rounding.
        next.base_time = problem.t0() + k as f64 * dt;
        if keep_all {
            states.push(std::mem::replace(&mut state, next));
        } else {
            state = next;
        }
    }
    states.push(state);
    Ok(Trajectory { dt, states })
}

/// Classical RK4 with `n` equal steps from `(t_start, u)` to `t_end`.
pub fn rk4_advance(problem: &Problem, t_start: f64, u: &[f64], t_end: f64, n: usize) -> Vec<f64> {
    let m = u.len();
    let h = (t_end - t_start) / n as f64;
    let mut y = u.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for i in 0..n {
        let t = t_start + i as f64 * h;
        problem.rhs_into(t, &y, &mut k1);
        for c in 0..m {
            tmp[c] = y[c] + 0.5 * h * k1[c];
        }
        problem.rhs_into(t + 0.5 * h, &tmp, &mut k2);
        for c in 0..m {
            tmp[c] = y[c] + 0.5 * h * k2[c];
        }
        problem.rhs_into(t + 0.5 * h, &tmp, &mut k3);
        for c in 0..m {
            tmp[c] = y[c] + h * k3[c];
        }
        problem.rhs_into(t + h, &tmp, &mut k4);
        for c in 0..m {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    y
}

/// RK4 solution at `t_end` with `2·n_steps` steps, accepted only if it moved
/// less than [`REFERENCE_TOL`] from the `n_steps` solution.
pub fn rk4_reference(
    problem: &Problem,
    t_end: f64,
    n_steps: usize,
) -> Result<Vec<f64>, IntegrateError> {
    if n_steps == 0 {
        return Err(IntegrateError::NoSteps);
    }
    let coarse = rk4_advance(problem, problem.t0(), problem.u0(), t_end, n_steps);
    let fine = rk4_advance(problem, problem.t0(), problem.u0(), t_end, 2 * n_steps);
    let diff = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if diff.is_nan() || diff >= REFERENCE_TOL {
        return Err(IntegrateError::ReferenceNotConverged { n_steps, diff });
    }
    Ok(fine)
}

/// Per block component (flattened `row·m + i`), the largest `|τ_n|` over all
/// steps to `t_end`, with `τ_n = (U_{n+1} - A U_n - Δt B F(U_n)) / Δt` built
/// from the exact solution.
pub fn measure_lte(
    scheme: &FloatScheme,
    problem: &Problem,
    dt: f64,
    t_end: f64,
) -> Result<Vec<f64>, IntegrateError> {
    if !problem.has_exact() {
        return Err(IntegrateError::MissingExact(problem.name().to_string()));
    }
    let steps = step_count(problem.t0(), t_end, dt)?;
    let (s, m) = (scheme.s, problem.dim());
    let block_at = |base: f64| -> Vec<f64> {
        scheme
            .c_in
            .iter()
            .flat_map(|c| problem.exact(base + c * dt).expect("exact present"))
            .collect()
    };
    let mut worst = vec![0.0f64; s * m];
    let mut current = block_at(problem.t0());
    for k in 0..steps {
        let base = problem.t0() + k as f64 * dt;
        let next = block_at(problem.t0() + (k + 1) as f64 * dt);
        let exact_state = BlockState {
            n: k,
            base_time: base,
            s,
            m,
            values: current,
        };
        let predicted = step(scheme, problem, &exact_state, dt)?;
        for (w, (u, v)) in worst.iter_mut().zip(next.iter().zip(&predicted.values)) {
            *w = w.max(((u - v) / dt).abs());
        }
        current = next;
    }
    Ok(worst)
}
