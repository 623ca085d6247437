use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::sparse::{dot, norm2, SparseOperator};
use super::FemError;

/// Largest system the dense Cholesky path accepts.
pub const DIRECT_MAX: usize = 4000;

/// Relative compatibility threshold for pure-Neumann right-hand sides.
pub const NEUMANN_COMPAT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    Cg,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Direct => "direct",
            SolveMethod::Cg => "cg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub method: SolveMethod,
    /// Singular system with constants in the kernel: pin one unknown per
    /// connected component of the matrix graph after checking compatibility.
    pub neumann: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            method: SolveMethod::Cg,
            neumann: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn neumann(mut self) -> Self {
        self.neumann = true;
        self
    }

    pub fn direct(mut self) -> Self {
        self.method = SolveMethod::Direct;
        self
    }
}

/// Solve `A x = b` for symmetric positive (semi)definite `A`.
pub fn solve_spd(
    a: &SparseOperator,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    PreparedSystem::new(a.clone(), *opts).solve(b, None)
}

/// [`solve_spd`] with an optional starting guess for CG.
pub fn solve_spd_from(
    a: &SparseOperator,
    b: &[f64],
    guess: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    PreparedSystem::new(a.clone(), *opts).solve(b, guess)
}

/// A matrix with its constraint handling done once, for repeated solves.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    full: SparseOperator,
    opts: SolveOptions,
    pin: Option<Pinning>,
}

#[derive(Debug, Clone)]
struct Pinning {
    reduced: SparseOperator,
    label: Vec<usize>,
    ncomp: usize,
    keep: Vec<bool>,
    map: Vec<Option<usize>>,
}

impl PreparedSystem {
    pub fn new(a: SparseOperator, opts: SolveOptions) -> Self {
        let pin = opts.neumann.then(|| {
            let n = a.dim();
            let (label, ncomp) = a.components();
            let mut keep = vec![true; n];
            let mut pinned = vec![false; ncomp];
            for i in 0..n {
                if !pinned[label[i]] {
                    pinned[label[i]] = true;
                    keep[i] = false;
                }
            }
            let (reduced, map) = a.restrict(&keep);
            Pinning {
                reduced,
                label,
                ncomp,
                keep,
                map,
            }
        });
        Self { full: a, opts, pin }
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.full
    }

    pub fn dim(&self) -> usize {
        self.full.dim()
    }

    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
        let n = self.full.dim();
        if b.len() != n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let Some(pin) = &self.pin else {
            return solve_regular(&self.full, b, guess, &self.opts);
        };
        let bnorm = norm2(b);
        let mut sums = vec![0.0; pin.ncomp];
        for (i, &bi) in b.iter().enumerate() {
            sums[pin.label[i]] += bi;
        }
        for (component, &sum) in sums.iter().enumerate() {
            if sum.abs() > NEUMANN_COMPAT * bnorm.max(f64::MIN_POSITIVE) {
                return Err(FemError::IncompatibleNeumann {
                    component,
                    sum,
                    norm: bnorm,
                });
            }
        }
        let br: Vec<f64> = (0..n).filter(|&i| pin.keep[i]).map(|i| b[i]).collect();
        let gr: Option<Vec<f64>> = guess.map(|g| {
            // Shift so the pinned unknown of each component is zero.
            let mut shift = vec![0.0; pin.ncomp];
            for i in 0..n {
                if !pin.keep[i] {
                    shift[pin.label[i]] = g[i];
                }
            }
            (0..n)
                .filter(|&i| pin.keep[i])
                .map(|i| g[i] - shift[pin.label[i]])
                .collect()
        });
        let (xr, mut report) = solve_regular(&pin.reduced, &br, gr.as_deref(), &self.opts)?;
        let mut x = vec![0.0; n];
        for i in 0..n {
            if let Some(k) = pin.map[i] {
                x[i] = xr[k];
            }
        }
        report.relative_residual = relative_residual(&self.full, &x, b);
        Ok((x, report))
    }
}

fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect();
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

fn solve_regular(
    a: &SparseOperator,
    b: &[f64],
    guess: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    let n = a.dim();
    if n == 0 || norm2(b) == 0.0 {
        return Ok((
            vec![0.0; n],
            LinearSolveReport {
                iterations: 0,
                relative_residual: 0.0,
                method: opts.method,
            },
        ));
    }
    match opts.method {
        SolveMethod::Direct => solve_direct(a, b),
        SolveMethod::Cg => match solve_cg(a, b, guess, opts.tol) {
            Ok(r) => Ok(r),
            Err(FemError::NotConverged(rep)) if n <= DIRECT_MAX => {
                log::warn!(
                    "CG stalled at residual {:.3e} after {} iterations; using dense Cholesky",
                    rep.relative_residual,
                    rep.iterations
                );
                solve_direct(a, b)
            }
            Err(e) => Err(e),
        },
    }
}

fn solve_direct(a: &SparseOperator, b: &[f64]) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    let n = a.dim();
    if n > DIRECT_MAX {
        return Err(FemError::DirectTooLarge(n));
    }
    let chol = a.to_dense().cholesky().ok_or(FemError::NotPositiveDefinite)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    let x: Vec<f64> = x.iter().copied().collect();
    let res = relative_residual(a, &x, b);
    Ok((
        x,
        LinearSolveReport {
            iterations: 1,
            relative_residual: res,
            method: SolveMethod::Direct,
        },
    ))
}

/// Iteration cap for CG on `n` unknowns.
pub fn cg_cap(n: usize) -> usize {
    ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50)
}

fn solve_cg(
    a: &SparseOperator,
    b: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
) -> Result<(Vec<f64>, LinearSolveReport), FemError> {
    let n = a.dim();
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm2(b);
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r: Vec<f64> = {
        let ax = a.matvec(&x);
        b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect()
    };
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = cg_cap(n);
    let mut it = 0;
    let mut rel = norm2(&r) / bnorm;
    while rel > tol && it < cap {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let report = LinearSolveReport {
        iterations: it,
        relative_residual: relative_residual(a, &x, b),
        method: SolveMethod::Cg,
    };
    // The recursive residual can drift from the true one; accept a small slack.
    if report.relative_residual > tol * 10.0 {
        return Err(FemError::NotConverged(report));
    }
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::TripletBuilder;

    fn periodic_laplacian(n: usize) -> SparseOperator {
        let h = 1.0 / n as f64;
        let mut tb = TripletBuilder::new(n);
        for i in 0..n {
            let j = (i + 1) % n;
            tb.push(i, i, 1.0 / h);
            tb.push(j, j, 1.0 / h);
            tb.push(i, j, -1.0 / h);
            tb.push(j, i, -1.0 / h);
        }
        tb.build(true)
    }

    #[test]
    fn identity_returns_rhs() {
        let a = SparseOperator::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        for opts in [SolveOptions::default(), SolveOptions::default().direct()] {
            let (x, rep) = solve_spd(&a, &b, &opts).unwrap();
            assert_eq!(x, b);
            assert!(rep.relative_residual <= 1e-10);
        }
    }

    #[test]
    fn incompatible_neumann_rejected() {
        let a = periodic_laplacian(8);
        let mut b = vec![0.0; 8];
        b[0] = 1.0;
        assert!(matches!(
            solve_spd(&a, &b, &SolveOptions::default().neumann()),
            Err(FemError::IncompatibleNeumann { .. })
        ));
    }

    #[test]
    fn neumann_solution_has_zero_residual() {
        let n = 32;
        let a = periodic_laplacian(n);
        let b: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let (x, rep) = solve_spd(&a, &b, &SolveOptions::default().neumann()).unwrap();
        assert!(rep.relative_residual < 1e-10);
        assert_eq!(x[0], 0.0);
    }
}
