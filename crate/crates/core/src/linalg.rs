//! Graininess-parametric Lyapunov equation, Hilger-circle stability
//! tests, and time-scale transition matrices.
//!
//! The central object is the equation
//!
//! ```text
//! A^T Q + Q A + mu A^T Q A = M,    M = M^T,
//! ```
//!
//! which reduces to the classical continuous-time Lyapunov equation at
//! mu = 0 and to the discrete-time one as mu grows. It is solved exactly
//! (up to LU roundoff) by vectorization, never by quadrature.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::timescale::{TimeScale, MEMBERSHIP_TOL};

/// Entrywise asymmetry allowed in a matrix that claims to be symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Largest residual accepted from the vectorized Lyapunov solve.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

/// Largest order accepted by the dense vectorized solver.
pub const MAX_ORDER: usize = 32;

/// Entrywise max-norm.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Error unless M is symmetric within [`SYMMETRY_TOL`].
pub fn require_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = max_norm(&(m - m.transpose()));
    if defect > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { defect });
    }
    Ok(())
}

/// True when m is symmetric positive definite (Cholesky succeeds).
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    require_symmetric(m).is_ok() && m.clone().cholesky().is_some()
}

/// Solve A^T Q + Q A + mu A^T Q A = M for symmetric Q.
///
/// The map Q -> A^T Q + Q A + mu A^T Q A is vectorized into the n^2 x n^2
/// system (I (*) A^T + A^T (*) I + mu A^T (*) A^T) vec(Q) = vec(M) and
/// solved by dense LU; the result is symmetrized, and the residual is
/// checked against [`LYAPUNOV_RESIDUAL_TOL`]. The map is singular exactly
/// when some eigenvalue pair of A satisfies
/// lambda_i + lambda_j + mu lambda_i lambda_j = 0; failures report the
/// offending pair.
pub fn lyapunov_solve(a: &DMatrix<f64>, m: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "coefficient matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 || n > MAX_ORDER {
        return Err(Error::Dimension(format!(
            "order {n} outside supported range 1..={MAX_ORDER}"
        )));
    }
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "right-hand side is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Config(format!(
            "graininess must be a nonnegative real, got {mu}"
        )));
    }
    require_symmetric(m)?;

    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let map = eye.kronecker(&at) + at.kronecker(&eye) + at.kronecker(&at) * mu;
    let rhs = DVector::from_column_slice(m.as_slice());

    let solved = map.lu().solve(&rhs);
    let q = match solved {
        Some(vec_q) => DMatrix::from_column_slice(n, n, vec_q.as_slice()),
        None => return Err(singular_map_error(a, mu)),
    };
    let q = (&q + q.transpose()) * 0.5;

    let residual = max_norm(&(&at * &q + &q * a + (&at * &q * a) * mu - m));
    if !(residual <= LYAPUNOV_RESIDUAL_TOL * (1.0 + max_norm(m))) {
        return Err(singular_map_error(a, mu));
    }
    Ok(q)
}

/// Locate the eigenvalue pair that (nearly) annihilates the Lyapunov map.
fn singular_map_error(a: &DMatrix<f64>, mu: f64) -> Error {
    let eigs = a.complex_eigenvalues();
    let mut best = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), f64::INFINITY);
    for i in 0..eigs.len() {
        for j in i..eigs.len() {
            let li = eigs[i];
            let lj = eigs[j];
            let r = (li + lj + li * lj * mu).norm();
            if r < best.2 {
                best = (li, lj, r);
            }
        }
    }
    Error::SingularLyapunov {
        mu,
        lambda_i: best.0,
        lambda_j: best.1,
        residual: best.2,
    }
}

/// Closed-form solution of the Lyapunov equation for the worked example
/// A = [[0,1],[-1,1]], M = I, as a function of graininess:
///
/// ```text
/// Q(mu) = 1/d * [[ 2(mu^2 + 2mu + 3),  -(mu^2 + mu + 2) ],
///                [  -(mu^2 + mu + 2),    mu^2 + mu + 4  ]],
/// d = mu^3 + 3mu^2 + 6mu + 4.
/// ```
///
/// Serves as the independent oracle for [`lyapunov_solve`].
pub fn q_of_mu_formula(mu: f64) -> DMatrix<f64> {
    let d = mu * mu * mu + 3.0 * mu * mu + 6.0 * mu + 4.0;
    let q11 = 2.0 * (mu * mu + 2.0 * mu + 3.0) / d;
    let q12 = -(mu * mu + mu + 2.0) / d;
    let q22 = (mu * mu + mu + 4.0) / d;
    DMatrix::from_row_slice(2, 2, &[q11, q12, q12, q22])
}

/// Stability report against the Hilger circle at one graininess value.
#[derive(Debug, Clone)]
pub struct HilgerReport {
    pub mu: f64,
    pub eigenvalues: Vec<Complex64>,
    /// inside[i] holds iff (mu = 0 and Re lambda_i < 0) or
    /// (mu > 0 and |1 + mu lambda_i| < 1).
    pub inside: Vec<bool>,
    pub all_inside: bool,
    /// Human-readable description of the stability region.
    pub region: String,
}

/// Test the eigenvalues of A against the Hilger circle for graininess mu.
/// At mu = 0 the circle degenerates to the open left half-plane.
pub fn hilger_check(a: &DMatrix<f64>, mu: f64) -> Result<HilgerReport> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Config(format!(
            "graininess must be a nonnegative real, got {mu}"
        )));
    }
    let eigenvalues: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let inside: Vec<bool> = eigenvalues
        .iter()
        .map(|l| {
            if mu == 0.0 {
                l.re < 0.0
            } else {
                (Complex64::new(1.0, 0.0) + l * mu).norm() < 1.0
            }
        })
        .collect();
    let all_inside = inside.iter().all(|&b| b);
    let region = if mu == 0.0 {
        "open left half-plane".to_string()
    } else {
        format!(
            "open disc centered at {} with radius {}",
            -1.0 / mu,
            1.0 / mu
        )
    };
    Ok(HilgerReport {
        mu,
        eigenvalues,
        inside,
        all_inside,
        region,
    })
}

/// Direction spanning the null space of B^T Q: the singular set of the
/// strategy, where the switching term loses its preferred direction. The
/// returned columns are orthonormal; each column's entry of largest
/// magnitude is made positive so the representation is unique.
pub fn singular_directions(q: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "B has {} rows but Q is {}x{}",
            b.nrows(),
            q.nrows(),
            q.ncols()
        )));
    }
    let w = b.transpose() * q;
    // ker(W) is the zero-eigenvalue eigenspace of the Gram matrix W^T W.
    // Roundoff perturbs the zero eigenvalues by O(eps * lambda_max), so
    // the rank cut sits well above that and far below any true rank.
    let gram = w.transpose() * &w;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let threshold = 1e-12 * lmax;
    let null_cols: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] <= threshold)
        .collect();
    let n = q.nrows();
    let mut basis = DMatrix::zeros(n, null_cols.len());
    for (col, &i) in null_cols.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        // Sign-normalize on the largest-magnitude entry.
        let lead = v.iter().cloned().fold(0.0f64, |acc, e| {
            if e.abs() > acc.abs() {
                e
            } else {
                acc
            }
        });
        if lead < 0.0 {
            v = -v;
        }
        basis.set_column(col, &v);
    }
    Ok(basis)
}

/// Transition matrix of x^Delta = A x from t0 to t1 on the time scale:
/// the ordered product of (I + mu(t) A) across every scattered point and
/// matrix exponentials exp(A dt) over dense stretches, the latter chunked
/// into sub-steps no wider than `dense_step`.
pub fn transition_matrix(
    a: &DMatrix<f64>,
    ts: &TimeScale,
    t0: f64,
    t1: f64,
    dense_step: f64,
) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !ts.contains(t0) {
        return Err(Error::NotMember {
            t: t0,
            tol: MEMBERSHIP_TOL,
        });
    }
    if !ts.contains(t1) {
        return Err(Error::NotMember {
            t: t1,
            tol: MEMBERSHIP_TOL,
        });
    }
    if t1 < t0 {
        return Err(Error::ReversedBounds { a: t0, b: t1 });
    }
    if !(dense_step > 0.0) || !dense_step.is_finite() {
        return Err(Error::Config(format!(
            "dense_step must be positive, got {dense_step}"
        )));
    }
    let n = a.nrows();
    let segs = ts.segments();
    let mut phi = DMatrix::<f64>::identity(n, n);
    for (i, s) in segs.iter().enumerate() {
        let lo = s.left.max(t0);
        let hi = s.right.min(t1);
        if hi >= lo - MEMBERSHIP_TOL && hi - lo > MEMBERSHIP_TOL {
            let span = hi - lo;
            let chunks = (span / dense_step).ceil().max(1.0) as usize;
            let step = (a * (span / chunks as f64)).exp();
            for _ in 0..chunks {
                phi = &step * &phi;
            }
        }
        // Jump factor across the gap after this segment when it lies in [t0, t1).
        if i + 1 < segs.len() && s.right >= t0 - MEMBERSHIP_TOL && s.right < t1 - MEMBERSHIP_TOL {
            let mu = segs[i + 1].left - s.right;
            let factor = DMatrix::<f64>::identity(n, n) + a * mu;
            let smin = factor.clone().svd(false, false).singular_values.min();
            let smax = factor.clone().svd(false, false).singular_values.max();
            if smin <= 1e-12 * smax.max(1.0) {
                return Err(Error::NotRegressive { t: s.right, mu });
            }
            phi = &factor * &phi;
        }
    }
    Ok(phi)
}
