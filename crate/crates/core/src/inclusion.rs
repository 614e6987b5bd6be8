//! Constructive selection for discretized differential inclusions:
//! lexicographic minimum of a finite point set and Filippov-style
//! extraction of the control that explains an observed motion.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default extraction tolerance, applied relative to ||xdelta||_inf + 1.
pub const EXTRACT_TOL_DEFAULT: f64 = 1e-7;

/// Nonempty finite set of points in R^n.
#[derive(Debug, Clone)]
pub struct FinitePointSet {
    points: Vec<DVector<f64>>,
}

impl FinitePointSet {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(
                "point set mixes vectors of different lengths".into(),
            ));
        }
        Ok(Self { points })
    }

    #[inline]
    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }
}

/// Finite discretization of a compact control set, with a designated
/// fallback element for motions no grid control explains.
#[derive(Debug, Clone)]
pub struct ControlGrid {
    values: Vec<DVector<f64>>,
    fallback: usize,
}

impl ControlGrid {
    pub fn new(values: Vec<DVector<f64>>, fallback: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySet);
        }
        if fallback >= values.len() {
            return Err(Error::Config(format!(
                "fallback index {fallback} out of range for {} grid values",
                values.len()
            )));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension(
                "control grid mixes vectors of different lengths".into(),
            ));
        }
        Ok(Self { values, fallback })
    }

    #[inline]
    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    #[inline]
    pub fn fallback(&self) -> &DVector<f64> {
        &self.values[self.fallback]
    }
}

/// Lexicographic minimum by iterative coordinate minimization: restrict
/// to the points minimizing coordinate 1, then coordinate 2 within those,
/// and so on. Comparisons are exact; floating-point ties are genuine ties
/// (a tolerance-based order would not be transitive).
pub fn lex_min(s: &FinitePointSet) -> DVector<f64> {
    let mut alive: Vec<usize> = (0..s.points.len()).collect();
    let dim = s.points[0].len();
    for coord in 0..dim {
        if alive.len() == 1 {
            break;
        }
        let xi = alive
            .iter()
            .map(|&i| s.points[i][coord])
            .fold(f64::INFINITY, f64::min);
        alive.retain(|&i| s.points[i][coord] == xi);
    }
    s.points[alive[0]].clone()
}

/// Result of one extraction: the selected control and whether the
/// fallback branch fired.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub control: DVector<f64>,
    pub fallback: bool,
}

/// Recover the control behind an observed delta derivative: collect the
/// matching set W = { w in grid : ||f(t, x, w) - xdelta||_inf <= tol } and
/// return its lexicographic minimum, or the designated fallback when W is
/// empty. `tol` is absolute.
pub fn filippov_extract(
    f: &dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    grid: &ControlGrid,
    t: f64,
    x: &DVector<f64>,
    xdelta: &DVector<f64>,
    tol: f64,
) -> Extraction {
    let matching: Vec<DVector<f64>> = grid
        .values
        .iter()
        .filter(|w| {
            let err = f(t, x, w) - xdelta;
            err.amax() <= tol
        })
        .cloned()
        .collect();
    match FinitePointSet::new(matching) {
        Ok(set) => Extraction {
            control: lex_min(&set),
            fallback: false,
        },
        Err(_) => Extraction {
            control: grid.fallback().clone(),
            fallback: true,
        },
    }
}

/// Per-sample extraction along a motion. Each sample uses the absolute
/// tolerance tol * (||xdelta||_inf + 1), so fast motions are not punished
/// for scale. Returns the control signal and the number of fallback
/// activations (the exceptional set, reported rather than hidden).
pub fn extract_along_trajectory(
    f: &dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    grid: &ControlGrid,
    samples: &[(f64, DVector<f64>, DVector<f64>)],
    tol: f64,
) -> (Vec<DVector<f64>>, usize) {
    let mut controls = Vec::with_capacity(samples.len());
    let mut mismatches = 0usize;
    for (t, x, xdelta) in samples {
        let scaled = tol * (xdelta.amax() + 1.0);
        let ex = filippov_extract(f, grid, *t, x, xdelta, scaled);
        if ex.fallback {
            mismatches += 1;
        }
        controls.push(ex.control);
    }
    (controls, mismatches)
}
