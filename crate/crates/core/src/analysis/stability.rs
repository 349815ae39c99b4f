//! Spectral radius of the amplification matrix `Q(z) = A + zB` over a grid of
//! complex `z = λΔt`. Diagnostic only: a scan, not a region optimizer.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::scheme::Scheme;

/// Below this the Cardano cube root is treated as a triple root.
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("grid needs at least 2 points per axis, got {0}")]
    GridTooSmall(usize),
    #[error("closed-form eigenvalues only for s <= 3, got s = {0}")]
    UnsupportedSize(usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityPoint {
    pub re: f64,
    pub im: f64,
    pub rho: f64,
}

/// `ρ(A + zB)` from the roots of the characteristic polynomial.
pub fn spectral_radius(scheme: &Scheme, z: Complex64) -> Result<f64, StabilityError> {
    let s = scheme.size();
    let a = scheme.a().to_f64();
    let b = scheme.b().to_f64();
    let q: Vec<Complex64> = a.iter().zip(&b).map(|(&x, &y)| x + z * y).collect();
    let roots = eigenvalues(&q, s)?;
    Ok(roots.iter().map(|r| r.norm()).fold(0.0, f64::max))
}

fn eigenvalues(m: &[Complex64], s: usize) -> Result<Vec<Complex64>, StabilityError> {
    let at = |i: usize, j: usize| m[i * s + j];
    match s {
        1 => Ok(vec![at(0, 0)]),
        2 => {
            let tr = at(0, 0) + at(1, 1);
            let det = at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0);
            Ok(quadratic_roots(-tr, det).to_vec())
        }
        3 => {
            let tr = at(0, 0) + at(1, 1) + at(2, 2);
            let minors = at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0) + at(0, 0) * at(2, 2)
                - at(0, 2) * at(2, 0)
                + at(1, 1) * at(2, 2)
                - at(1, 2) * at(2, 1);
            let det = at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1))
                - at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0))
                + at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
            Ok(cubic_roots(-tr, minors, -det).to_vec())
        }
        _ => Err(StabilityError::UnsupportedSize(s)),
    }
}

/// Roots of `x² + b x + c`.
fn quadratic_roots(b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - 4.0 * c).sqrt();
    // Pick the sign that avoids cancellation, then use Vieta for the other root.
    let big = if (-b + disc).norm() >= (-b - disc).norm() {
        (-b + disc) / 2.0
    } else {
        (-b - disc) / 2.0
    };
    if big.norm() == 0.0 {
        return [Complex64::new(0.0, 0.0); 2];
    }
    [big, c / big]
}

/// Roots of `x³ + c2 x² + c1 x + c0` by Cardano, polished with Newton.
fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let w = if (-q / 2.0 + disc).norm() >= (-q / 2.0 - disc).norm() {
        -q / 2.0 + disc
    } else {
        -q / 2.0 - disc
    };
    let cbrt = w.powf(1.0 / 3.0);
    let omega = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
    let mut roots = if cbrt.norm() < ROOT_TOL {
        [Complex64::new(0.0, 0.0); 3]
    } else {
        let mut r = [Complex64::new(0.0, 0.0); 3];
        let mut k = Complex64::new(1.0, 0.0);
        for root in &mut r {
            let c = k * cbrt;
            *root = c - p / (3.0 * c);
            k *= omega;
        }
        r
    };
    for t in &mut roots {
        *t -= shift;
        polish(t, c2, c1, c0);
    }
    roots
}

fn polish(x: &mut Complex64, c2: Complex64, c1: Complex64, c0: Complex64) {
    let f = |x: Complex64| ((x + c2) * x + c1) * x + c0;
    let df = |x: Complex64| (3.0 * x + 2.0 * c2) * x + c1;
    for _ in 0..4 {
        let d = df(*x);
        if d.norm() < ROOT_TOL {
            return;
        }
        let step = f(*x) / d;
        let next = *x - step;
        if f(next).norm() >= f(*x).norm() {
            return;
        }
        *x = next;
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Evaluates `ρ(A + zB)` on a `grid_n × grid_n` grid, rows ordered by
/// imaginary part then real part.
pub fn stability_scan(
    scheme: &Scheme,
    re_range: (f64, f64),
    im_range: (f64, f64),
    grid_n: usize,
) -> Result<Vec<StabilityPoint>, StabilityError> {
    if grid_n < 2 {
        return Err(StabilityError::GridTooSmall(grid_n));
    }
    if scheme.size() > 3 {
        return Err(StabilityError::UnsupportedSize(scheme.size()));
    }
    let res: Vec<f64> = linspace(re_range.0, re_range.1, grid_n).collect();
    let ims: Vec<f64> = linspace(im_range.0, im_range.1, grid_n).collect();
    ims.iter()
        .flat_map(|&im| res.iter().map(move |&re| (re, im)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(re, im)| {
            Ok(StabilityPoint {
                re,
                im,
                rho: spectral_radius(scheme, Complex64::new(re, im))?,
            })
        })
        .collect()
}

pub fn write_stability_csv(
    points: &[StabilityPoint],
    path: impl AsRef<Path>,
) -> Result<(), StabilityError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "re,im,rho")?;
    for p in points {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", p.re, p.im, p.rho)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Growth rate of `‖Q^n v‖` by repeated multiplication, independent of
    /// the characteristic polynomial.
    fn power_iteration_radius(scheme: &Scheme, z: f64) -> f64 {
        let s = scheme.size();
        let a = scheme.a().to_f64();
        let b = scheme.b().to_f64();
        let q: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + z * y).collect();
        let mut v: Vec<f64> = (0..s).map(|i| 1.0 + 0.37 * i as f64).collect();
        let mut log_growth = 0.0;
        let n = 4000;
        for _ in 0..n {
            let w: Vec<f64> = (0..s)
                .map(|i| (0..s).map(|j| q[i * s + j] * v[j]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            log_growth += norm.ln();
            v = w.iter().map(|x| x / norm).collect();
        }
        (log_growth / n as f64).exp()
    }

    #[test]
    fn unit_radius_at_origin() {
        for scheme in Scheme::builtins() {
            let rho = spectral_radius(&scheme, Complex64::new(0.0, 0.0)).unwrap();
            assert!((rho - 1.0).abs() <= 1e-12, "{}: {rho}", scheme.name());
        }
    }

    #[test]
    fn s2_decays_left_and_grows_right() {
        let s2 = Scheme::builtin("S2").unwrap();
        for z in [-0.1, 0.1] {
            let rho = spectral_radius(&s2, Complex64::new(z, 0.0)).unwrap();
            let oracle = power_iteration_radius(&s2, z);
            assert!((rho - oracle).abs() < 1e-3, "z={z}: {rho} vs {oracle}");
            if z < 0.0 {
                assert!(rho < 1.0 && oracle < 1.0);
            } else {
                assert!(rho > 1.0 && oracle > 1.0);
            }
        }
    }

    #[test]
    fn cubic_roots_match_power_iteration() {
        for name in ["S3A", "S3B", "S3C"] {
            let scheme = Scheme::builtin(name).unwrap();
            for z in [-0.3, -0.05, 0.2] {
                let rho = spectral_radius(&scheme, Complex64::new(z, 0.0)).unwrap();
                let oracle = power_iteration_radius(&scheme, z);
                assert!(
                    (rho - oracle).abs() < 1e-3 * oracle.max(1.0),
                    "{name} z={z}: {rho} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn cubic_with_known_roots() {
        // (x - 1)(x - 2i)(x + 3)
        let r = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-3.0, 0.0),
        ];
        let c2 = -(r[0] + r[1] + r[2]);
        let c1 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let c0 = -(r[0] * r[1] * r[2]);
        let roots = cubic_roots(c2, c1, c0);
        for want in r {
            assert!(
                roots.iter().any(|x| (x - want).norm() < 1e-12),
                "{want} not in {roots:?}"
            );
        }
        let triple = cubic_roots(
            Complex64::new(-3.0, 0.0),
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
        );
        assert!(triple.iter().all(|x| (x - 1.0).norm() < 1e-5));
    }

    #[test]
    fn scan_grid_shape_and_errors() {
        let s2 = Scheme::builtin("S2").unwrap();
        let grid = stability_scan(&s2, (-1.0, 0.0), (-0.5, 0.5), 5).unwrap();
        assert_eq!(grid.len(), 25);
        assert_eq!((grid[0].re, grid[0].im), (-1.0, -0.5));
        assert_eq!((grid[24].re, grid[24].im), (0.0, 0.5));
        assert!(matches!(
            stability_scan(&s2, (0.0, 1.0), (0.0, 1.0), 1),
            Err(StabilityError::GridTooSmall(1))
        ));
    }

    #[test]
    fn csv_output() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.csv");
        let grid =
            stability_scan(&Scheme::builtin("S3A").unwrap(), (-0.5, 0.0), (0.0, 0.0), 3).unwrap();
        write_stability_csv(&grid, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re,im,rho");
        assert_eq!(lines.len(), 10);
        let last: Vec<f64> = lines[9].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], 0.0);
        assert!((last[2] - 1.0).abs() < 1e-12);
    }
}
