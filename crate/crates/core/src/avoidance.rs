//! Evader strategy synthesis, avoidance sets and safety zones, and the
//! sampled verification of the two avoidance conditions: the level gap
//! between the safety zone and the avoidance set, and growth of
//! V = x^T Q x along the closed loop against every admissible pursuer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    hilger_check, is_positive_definite, lyapunov_solve, max_norm, require_symmetric,
    spectral_norm, HilgerReport,
};
use crate::timescale::TimeScale;

/// Largest residual accepted for the matching condition C = B D.
pub const MATCHING_TOL: f64 = 1e-8;

/// Default deadband on ||B^T Q x|| inside which the switching term is
/// dropped; a deterministic admissible choice on the singular set.
pub const DEADBAND_DEFAULT: f64 = 1e-9;

/// Half-width of the band classified as the avoidance-set boundary.
pub const SET_TOL: f64 = 1e-9;

/// Default margin tolerance for the sampled condition checks.
pub const VERIFY_TOL: f64 = 1e-8;

/// Two-agent linear plant x^Delta = A x + B u1 + C u2 with norm-bounded
/// control sets ||u1|| <= alpha1, ||u2|| <= alpha2.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl LinearPlant {
    /// Validate dimensions and bounds. The evader bound must be positive;
    /// the pursuer bound may be zero (no adversary).
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "drift matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "evader input map must be {n}xd1 with d1 >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.nrows() != n || c.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "pursuer input map must be {n}xd2 with d2 >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if !(alpha1 > 0.0) || !alpha1.is_finite() {
            return Err(Error::Config(format!(
                "evader bound alpha1 must be positive, got {alpha1}"
            )));
        }
        if !(alpha2 >= 0.0) || !alpha2.is_finite() {
            return Err(Error::Config(format!(
                "pursuer bound alpha2 must be nonnegative, got {alpha2}"
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            alpha1,
            alpha2,
        })
    }

    #[inline]
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    #[inline]
    pub fn evader_dim(&self) -> usize {
        self.b.ncols()
    }

    #[inline]
    pub fn pursuer_dim(&self) -> usize {
        self.c.ncols()
    }

    /// Right-hand side A x + B u1 + C u2.
    pub fn drift(&self, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u1 + &self.c * u2
    }
}

/// Parameters of the synthesized evader strategy
/// u1 = K x + gain * unit(B^T Q x), with a deadband fallback to K x.
#[derive(Debug, Clone)]
pub struct StrategyParams {
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Switching magnitude ||D|| alpha2 (spectral norm).
    pub gain: f64,
    pub deadband: f64,
}

impl StrategyParams {
    pub fn new(
        k: DMatrix<f64>,
        q: DMatrix<f64>,
        d: DMatrix<f64>,
        gain: f64,
        deadband: f64,
    ) -> Result<Self> {
        require_symmetric(&q)?;
        if !is_positive_definite(&q) {
            return Err(Error::Config(
                "strategy matrix Q must be positive definite".into(),
            ));
        }
        if k.ncols() != q.nrows() {
            return Err(Error::Dimension(format!(
                "gain K has {} columns but the state dimension is {}",
                k.ncols(),
                q.nrows()
            )));
        }
        if d.nrows() != k.nrows() {
            return Err(Error::Dimension(format!(
                "matching matrix D has {} rows but the evader dimension is {}",
                d.nrows(),
                k.nrows()
            )));
        }
        if !(deadband >= 0.0) || !deadband.is_finite() {
            return Err(Error::Config(format!(
                "deadband must be nonnegative, got {deadband}"
            )));
        }
        if !gain.is_finite() {
            return Err(Error::Config(format!("gain must be finite, got {gain}")));
        }
        Ok(Self {
            k,
            q,
            d,
            gain,
            deadband,
        })
    }
}

/// Which form the evader strategy takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// K x plus the switching term; the general stabilizable case.
    Stabilized,
    /// alpha1 * unit(B^T Q x) alone, for plants whose drift already grows
    /// V (no feedback gain needed); admissible only when
    /// alpha1 >= ||D|| alpha2.
    Pure,
}

/// Avoidance set {x : x^T Q x <= a}, safety zone
/// {x : a < x^T Q x <= a + epsilon}, and the surrounding domain box.
#[derive(Debug, Clone)]
pub struct AvoidanceProblem {
    pub q: DMatrix<f64>,
    pub level: f64,
    pub epsilon: f64,
    /// Per-coordinate closed bounds of the domain box.
    pub domain: Vec<(f64, f64)>,
}

impl AvoidanceProblem {
    pub fn new(q: DMatrix<f64>, level: f64, epsilon: f64, domain: Vec<(f64, f64)>) -> Result<Self> {
        require_symmetric(&q)?;
        if !is_positive_definite(&q) {
            return Err(Error::Config(
                "avoidance matrix Q must be positive definite".into(),
            ));
        }
        if !(level > 0.0) || !level.is_finite() {
            return Err(Error::Config(format!(
                "avoidance level must be positive, got {level}"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!(
                "safety-zone width must be positive, got {epsilon}"
            )));
        }
        if domain.len() != q.nrows() {
            return Err(Error::Dimension(format!(
                "domain box has {} coordinates but the state dimension is {}",
                domain.len(),
                q.nrows()
            )));
        }
        for &(lo, hi) in &domain {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "degenerate domain interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            q,
            level,
            epsilon,
            domain,
        })
    }

    /// Problem with an effectively unbounded domain box.
    pub fn unbounded(q: DMatrix<f64>, level: f64, epsilon: f64) -> Result<Self> {
        let n = q.nrows();
        Self::new(q, level, epsilon, vec![(-f64::MAX, f64::MAX); n])
    }

    /// Quadratic level V(x) = x^T Q x.
    #[inline]
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)]
    }

    /// True when x lies in the domain box.
    pub fn in_domain(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(&self.domain)
            .all(|(&xi, &(lo, hi))| xi >= lo && xi <= hi)
    }
}

/// Position of a state relative to the avoidance set and safety zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    InsideA,
    BoundaryA,
    SafetyZone,
    OutsideEps,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::InsideA => "inside_A",
            Region::BoundaryA => "boundary_A",
            Region::SafetyZone => "safety_zone",
            Region::OutsideEps => "outside_eps",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Classify x by q = x^T Q x against the level a and the zone cap
/// a + epsilon, with boundary half-width [`SET_TOL`]. Every state maps to
/// exactly one region.
pub fn set_membership(ap: &AvoidanceProblem, x: &DVector<f64>) -> Region {
    let q = ap.value(x);
    if q < ap.level - SET_TOL {
        Region::InsideA
    } else if q <= ap.level + SET_TOL {
        Region::BoundaryA
    } else if q <= ap.level + ap.epsilon + SET_TOL {
        Region::SafetyZone
    } else {
        Region::OutsideEps
    }
}

/// Minimum-norm solution D of C = B D by least squares (SVD pseudoinverse).
/// The matching condition is what lets the evader cancel any pursuer
/// action through its own input channel; an inexact match voids the
/// avoidance guarantee, so residuals above [`MATCHING_TOL`] are errors.
pub fn solve_matching(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != c.nrows() {
        return Err(Error::Dimension(format!(
            "B has {} rows but C has {}",
            b.nrows(),
            c.nrows()
        )));
    }
    let svd = b.clone().svd(true, true);
    let d = svd
        .solve(c, 1e-13)
        .map_err(|e| Error::Dimension(format!("least squares failed: {e}")))?;
    let residual = max_norm(&(c - b * &d));
    if residual > MATCHING_TOL {
        return Err(Error::MatchingViolation {
            residual,
            tol: MATCHING_TOL,
        });
    }
    Ok(d)
}

/// Synthesis output: the strategy parameters plus the informational
/// Hilger-circle diagnostics for -(A + B K) at the same graininess.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub params: StrategyParams,
    pub hilger: HilgerReport,
}

/// Synthesize the strategy for one graininess value: D from the matching
/// condition, Q from the closed-loop equation
/// (A+BK)^T Q + Q (A+BK) + mu (A+BK)^T Q (A+BK) = M, gain = ||D|| alpha2.
///
/// The Hilger report on -(A+BK) is informational: the avoidance argument
/// rests on the Lyapunov identity, not on the eigenvalue location, and
/// for large graininess the eigenvalues may leave the circle.
pub fn synthesize(
    plant: &LinearPlant,
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    mu: f64,
    deadband: f64,
) -> Result<Synthesis> {
    if k.nrows() != plant.evader_dim() || k.ncols() != plant.state_dim() {
        return Err(Error::Dimension(format!(
            "gain K must be {}x{}, got {}x{}",
            plant.evader_dim(),
            plant.state_dim(),
            k.nrows(),
            k.ncols()
        )));
    }
    require_symmetric(m)?;
    if !is_positive_definite(m) {
        return Err(Error::Config(
            "cost matrix M must be positive definite".into(),
        ));
    }
    let d = solve_matching(&plant.b, &plant.c)?;
    let a_cl = &plant.a + &plant.b * k;
    let q = lyapunov_solve(&a_cl, m, mu)?;
    let gain = spectral_norm(&d) * plant.alpha2;
    let hilger = hilger_check(&(-&a_cl), mu)?;
    let params = StrategyParams::new(k.clone(), q, d, gain, deadband)?;
    Ok(Synthesis { params, hilger })
}

/// Evader strategy u1 = K x + gain * w / ||w|| with w = B^T Q x; inside
/// the deadband the switching term is dropped and K x alone is returned
/// (a deterministic admissible choice on the singular set).
pub fn evader_control(sp: &StrategyParams, b: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut u = &sp.k * x;
    let w = b.transpose() * (&sp.q * x);
    let norm = w.norm();
    if norm > sp.deadband {
        u += w * (sp.gain / norm);
    }
    u
}

/// Pure strategy alpha1 * unit(B^T Q x) for plants whose drift grows V on
/// its own; zero inside the deadband. Admissibility alpha1 >= ||D|| alpha2
/// is the caller's obligation and is what verification probes.
pub fn pure_evader_control(
    q: &DMatrix<f64>,
    b: &DMatrix<f64>,
    alpha1: f64,
    x: &DVector<f64>,
    deadband: f64,
) -> DVector<f64> {
    let w = b.transpose() * (q * x);
    let norm = w.norm();
    if norm > deadband {
        w * (alpha1 / norm)
    } else {
        DVector::zeros(b.ncols())
    }
}

/// Adversarial pursuer -alpha2 * unit(C^T Q x): the direction that most
/// decreases V at right-dense points; zero inside the deadband.
pub fn worst_pursuer_control(
    sp: &StrategyParams,
    c: &DMatrix<f64>,
    alpha2: f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    let w = c.transpose() * (&sp.q * x);
    let norm = w.norm();
    if norm > sp.deadband {
        w * (-alpha2 / norm)
    } else {
        DVector::zeros(c.ncols())
    }
}

/// Generalized rate of V = x^T Q x along a motion with derivative f at
/// graininess mu: the exact quadratic quotient
/// ((x + mu f)^T Q (x + mu f) - x^T Q x) / mu at scattered points and the
/// classical derivative 2 x^T Q f at dense ones.
pub fn quadratic_d_operator(
    q: &DMatrix<f64>,
    mu: f64,
    x: &DVector<f64>,
    f: &DVector<f64>,
) -> f64 {
    let qf = q * f;
    let qx = q * x;
    if mu > 0.0 {
        // Expansion of the quotient: 2 x^T Q f + mu f^T Q f, exact.
        2.0 * x.dot(&qf) + mu * f.dot(&qf)
    } else {
        2.0 * f.dot(&qx)
    }
}

/// Deterministic unit directions in dimension `dim`: the sign pair in 1D,
/// equally spaced angles in 2D, a Fibonacci sphere in 3D, and seeded
/// normalized Gaussians above (fixed stream, so runs are reproducible).
pub fn sphere_directions(dim: usize, count: usize) -> Vec<DVector<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        ],
        2 => (0..count.max(1))
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count.max(1) as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count.max(1))
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count.max(1) as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha12Rng::seed_from_u64(0x5EED_BA11);
            (0..count.max(1))
                .map(|_| {
                    let mut v = DVector::zeros(dim);
                    loop {
                        for i in 0..dim {
                            // Box-Muller from two uniforms.
                            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            v[i] = (-2.0 * u1.ln()).sqrt()
                                * (2.0 * std::f64::consts::PI * u2).cos();
                        }
                        let n = v.norm();
                        if n > 1e-6 {
                            v /= n;
                            return v;
                        }
                    }
                })
                .collect()
        }
    }
}

/// Sampling density of the verification grid over the closed safety zone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    /// Number of level rings spanning [a, a + epsilon].
    pub levels: usize,
    /// Directions per ring.
    pub angles: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            levels: 40,
            angles: 40,
        }
    }
}

/// Worst sample found by verification: the grid point and pursuer value
/// minimizing the rate of V.
#[derive(Debug, Clone)]
pub struct Witness {
    pub t: f64,
    pub mu: f64,
    pub x: DVector<f64>,
    pub u2: DVector<f64>,
    pub dv: f64,
}

/// Outcome of the sampled two-condition verification.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// min over safety-zone samples of V(x) - a; must be positive.
    pub condition_i_margin: f64,
    /// min over (t, x, u2) samples of the rate of V; must be >= -tol.
    pub condition_ii_margin: f64,
    pub witness: Witness,
    pub pass: bool,
    pub tolerance: f64,
    pub points_checked: usize,
    pub notes: Vec<String>,
}

/// Points x with x^T Q x = c along each direction: x = sqrt(c) R d where
/// R = Q^{-1/2} from the symmetric eigendecomposition.
fn inverse_sqrt(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = q.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Config(
            "avoidance matrix Q must be positive definite".into(),
        ));
    }
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let col = scaled.column(j) / l.sqrt();
        scaled.set_column(j, &col);
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Representative instant for each distinct graininess value in the
/// window: a left endpoint of a dense stretch for zero, the left edge of
/// the matching gap otherwise.
fn graininess_representatives(ts: &TimeScale) -> Vec<(f64, f64)> {
    let segs = ts.segments();
    let mut reps: Vec<(f64, f64)> = Vec::new();
    let push = |mu: f64, t: f64, reps: &mut Vec<(f64, f64)>| {
        if !reps.iter().any(|&(m, _)| (m - mu).abs() <= 1e-9) {
            reps.push((mu, t));
        }
    };
    for (i, s) in segs.iter().enumerate() {
        if !s.is_point() {
            push(0.0, s.left, &mut reps);
        }
        if i + 1 < segs.len() {
            push(segs[i + 1].left - s.right, s.right, &mut reps);
        }
    }
    reps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    reps
}

/// Sampled verification of the two avoidance conditions for V = x^T Q x.
///
/// Condition (i): V is time-invariant, so the required gap between the
/// zone and the set boundary reduces to min V(x) - a > 0 over safety-zone
/// samples. Condition (ii): at every grid point of the closed zone, every
/// distinct graininess of the window, and every sampled pursuer value
/// (unit directions scaled by alpha2, plus the adversarial direction),
/// the rate of V along the strategy must stay above -tol, evaluated by
/// the exact quadratic update at scattered points.
pub fn verify_conditions(
    plant: &LinearPlant,
    sp: &StrategyParams,
    mode: StrategyMode,
    ap: &AvoidanceProblem,
    ts: &TimeScale,
    grid: &GridSpec,
    pursuer_samples: usize,
    tol: f64,
) -> Result<VerifyReport> {
    if grid.levels < 2 || grid.angles == 0 {
        return Err(Error::Config(format!(
            "grid must have at least 2 levels and 1 angle, got {}x{}",
            grid.levels, grid.angles
        )));
    }
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::Config(format!(
            "tolerance must be nonnegative, got {tol}"
        )));
    }
    let n = plant.state_dim();
    if ap.q.nrows() != n {
        return Err(Error::Dimension(format!(
            "avoidance matrix is {}x{} but the state dimension is {n}",
            ap.q.nrows(),
            ap.q.ncols()
        )));
    }

    let mut notes = Vec::new();
    if mode == StrategyMode::Pure && plant.alpha1 < sp.gain {
        notes.push(format!(
            "pure strategy is inadmissible: alpha1 = {} < ||D|| alpha2 = {}",
            plant.alpha1, sp.gain
        ));
    }

    // Annulus samples of the closed zone a <= x^T Q x <= a + epsilon,
    // kept only where they lie inside the domain box.
    let root = inverse_sqrt(&ap.q)?;
    let directions = sphere_directions(n, grid.angles);
    let mut boundary: Vec<DVector<f64>> = Vec::new();
    let mut zone: Vec<DVector<f64>> = Vec::new();
    for j in 0..grid.levels {
        let c = ap.level + ap.epsilon * j as f64 / (grid.levels - 1) as f64;
        for d in &directions {
            let x = &root * d * c.sqrt();
            if !ap.in_domain(&x) {
                continue;
            }
            if j == 0 {
                boundary.push(x);
            } else {
                zone.push(x);
            }
        }
    }
    if zone.is_empty() {
        return Err(Error::EmptyGrid(
            "no safety-zone sample lies inside the domain box".into(),
        ));
    }

    // Condition (i): gap between zone values and the set level.
    let condition_i_margin = zone
        .iter()
        .map(|x| ap.value(x) - ap.level)
        .fold(f64::INFINITY, f64::min);

    // Condition (ii): rate of V over graininess values x grid x pursuers.
    let reps = graininess_representatives(ts);
    let pursuers = sphere_directions(plant.pursuer_dim(), pursuer_samples);
    let mut worst: Option<Witness> = None;
    let mut points_checked = 0usize;
    for &(mu, t) in &reps {
        for x in boundary.iter().chain(zone.iter()) {
            let u1 = match mode {
                StrategyMode::Stabilized => evader_control(sp, &plant.b, x),
                StrategyMode::Pure => {
                    pure_evader_control(&sp.q, &plant.b, plant.alpha1, x, sp.deadband)
                }
            };
            let mut check = |u2: &DVector<f64>| {
                let f = plant.drift(x, &u1, u2);
                let dv = quadratic_d_operator(&ap.q, mu, x, &f);
                points_checked += 1;
                if worst.as_ref().map_or(true, |w| dv < w.dv) {
                    worst = Some(Witness {
                        t,
                        mu,
                        x: x.clone(),
                        u2: u2.clone(),
                        dv,
                    });
                }
            };
            check(&worst_pursuer_control(sp, &plant.c, plant.alpha2, x));
            for dir in &pursuers {
                check(&(dir * plant.alpha2));
            }
        }
    }
    let witness = worst.expect("zone is nonempty, so at least one sample was checked");
    let condition_ii_margin = witness.dv;
    let pass = condition_i_margin > 0.0 && condition_ii_margin >= -tol;
    Ok(VerifyReport {
        condition_i_margin,
        condition_ii_margin,
        witness,
        pass,
        tolerance: tol,
        points_checked,
        notes,
    })
}
