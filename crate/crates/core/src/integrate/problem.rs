use std::fmt;
use std::sync::Arc;

use super::IntegrateError;

/// Right-hand side `F(t, u)` written into the output slice.
pub type Rhs = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Exact solution `u(t)` written into the output slice.
pub type ExactFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Tolerance on `exact(t0) = u0`.
const EXACT_START_TOL: f64 = 1e-14;

pub const BUILTIN_PROBLEMS: [&str; 4] = ["P1", "P2", "P3", "P4"];

/// An initial value problem `u' = F(t, u)`, `u(t0) = u0`.
#[derive(Clone)]
pub struct Problem {
    name: String,
    u0: Vec<f64>,
    t0: f64,
    rhs: Rhs,
    exact: Option<ExactFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("u0", &self.u0)
            .field("t0", &self.t0)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        t0: f64,
        u0: Vec<f64>,
        rhs: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            u0,
            t0,
            rhs: Arc::new(rhs),
            exact: None,
        }
    }

    /// Attaches an exact solution; it must reproduce `u0` at `t0`.
    pub fn with_exact(
        mut self,
        exact: impl Fn(f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self, IntegrateError> {
        let mut start = vec![0.0; self.dim()];
        exact(self.t0, &mut start);
        let err = start
            .iter()
            .zip(&self.u0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err.is_nan() || err > EXACT_START_TOL {
            return Err(IntegrateError::InconsistentExact {
                name: self.name.clone(),
                err,
            });
        }
        self.exact = Some(Arc::new(exact));
        Ok(self)
    }

    pub fn builtin(name: &str) -> Result<Self, IntegrateError> {
        match name.to_ascii_uppercase().as_str() {
            "P1" => Ok(Self::riccati()),
            "P2" => Ok(Self::van_der_pol()),
            "P3" => Ok(Self::dahlquist(-1.0)),
            "P4" => Ok(Self::cosine_coefficient()),
            _ => Err(IntegrateError::UnknownProblem(name.to_string())),
        }
    }

    /// P1: `u' = -u²`, `u(0) = 1`, `u = 1/(1+t)`.
    pub fn riccati() -> Self {
        Self::new("P1", 0.0, vec![1.0], |_, u, du| du[0] = -u[0] * u[0])
            .with_exact(|t, u| u[0] = 1.0 / (1.0 + t))
            .expect("consistent")
    }

    /// P2: van der Pol with damping 0.1, `u(0) = (2, 0)`. No closed form.
    pub fn van_der_pol() -> Self {
        Self::new("P2", 0.0, vec![2.0, 0.0], |_, u, du| {
            du[0] = u[1];
            du[1] = 0.1 * (1.0 - u[0] * u[0]) * u[1] - u[0];
        })
    }

    /// P3: `u' = λu`, `u(0) = 1`.
    pub fn dahlquist(lambda: f64) -> Self {
        Self::new("P3", 0.0, vec![1.0], move |_, u, du| du[0] = lambda * u[0])
            .with_exact(move |t, u| u[0] = (lambda * t).exp())
            .expect("consistent")
    }

    /// P4: `u' = cos(t) u`, `u(0) = 1`, `u = exp(sin t)`.
    pub fn cosine_coefficient() -> Self {
        Self::new("P4", 0.0, vec![1.0], |t, u, du| du[0] = t.cos() * u[0])
            .with_exact(|t, u| u[0] = t.sin().exp())
            .expect("consistent")
    }

    /// `u' = 0` with the constant solution `values`.
    pub fn constant(values: Vec<f64>) -> Self {
        let c = values.clone();
        Self::new("ZERO", 0.0, values, |_, _, du| du.fill(0.0))
            .with_exact(move |_, u| u.copy_from_slice(&c))
            .expect("consistent")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn rhs_into(&self, t: f64, u: &[f64], du: &mut [f64]) {
        (self.rhs)(t, u, du)
    }

    pub fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut du = vec![0.0; self.dim()];
        (self.rhs)(t, u, &mut du);
        du
    }

    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|f| {
            let mut u = vec![0.0; self.dim()];
            f(t, &mut u);
            u
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_start_consistently() {
        for name in BUILTIN_PROBLEMS {
            let p = Problem::builtin(name).unwrap();
            if let Some(u) = p.exact(p.t0()) {
                assert_eq!(u, p.u0());
            }
        }
        assert!(!Problem::builtin("P2").unwrap().has_exact());
        assert!(matches!(
            Problem::builtin("P9"),
            Err(IntegrateError::UnknownProblem(_))
        ));
    }

    #[test]
    fn inconsistent_exact_rejected() {
        let err = Problem::new("bad", 0.0, vec![1.0], |_, _, du| du[0] = 0.0)
            .with_exact(|_, u| u[0] = 2.0)
            .unwrap_err();
        assert!(matches!(err, IntegrateError::InconsistentExact { .. }));
    }

    #[test]
    fn exact_solutions_satisfy_the_ode() {
        // Central difference of the exact solution against the right-hand side.
        let h = 1e-5;
        for name in ["P1", "P3", "P4"] {
            let p = Problem::builtin(name).unwrap();
            for t in [0.1, 0.5, 0.9] {
                let up = p.exact(t + h).unwrap()[0];
                let um = p.exact(t - h).unwrap()[0];
                let fd = (up - um) / (2.0 * h);
                let f = p.rhs(t, &p.exact(t).unwrap())[0];
                assert!((fd - f).abs() < 1e-8, "{name} t={t}: {fd} vs {f}");
            }
        }
    }
}
