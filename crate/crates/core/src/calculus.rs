//! Delta calculus on a time scale: derivatives, Cauchy integrals, the
//! jump-compensated operators zeta and D, the chain rule, and the step
//! extension of a signal to the real line.
//!
//! At a right-scattered instant every operator reduces to an exact finite
//! difference across the gap, so no discretization error enters there.
//! Quadrature and finite differences appear only on dense stretches.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::timescale::{TimeScale, MEMBERSHIP_TOL};

/// Default step for one-sided difference quotients at right-dense points.
pub const H_FD_DEFAULT: f64 = 1e-6;

/// Default maximum quadrature panel width for dense-segment integration.
pub const QUAD_STEP_DEFAULT: f64 = 1e-3;

/// Default Gauss-Legendre node count for the chain-rule average.
pub const GL_NODES_DEFAULT: usize = 16;

/// Band around zero inside which a D-operator value counts as flat when
/// classifying monotonicity.
pub const MONOTONICITY_TOL: f64 = 1e-8;

/// Scalar signal f: T -> R, optionally carrying its exact derivative for
/// use at right-dense points.
pub struct ScalarSignal {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl ScalarSignal {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            df: None,
        }
    }

    /// Signal with an exact classical derivative, consulted instead of a
    /// difference quotient wherever the point is right-dense.
    pub fn with_derivative(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            df: Some(Box::new(df)),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    #[inline]
    fn exact_derivative(&self, t: f64) -> Option<f64> {
        self.df.as_ref().map(|df| df(t))
    }
}

/// State function v: T x R^n -> R, optionally carrying exact partials.
pub struct StateFunction {
    v: Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>,
    vt: Option<Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>>,
    vx: Option<Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>>,
}

impl StateFunction {
    pub fn new(v: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            v: Box::new(v),
            vt: None,
            vx: None,
        }
    }

    /// State function with exact time partial and state gradient, used at
    /// right-dense points instead of finite differences.
    pub fn with_gradients(
        v: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
        vt: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
        vx: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            v: Box::new(v),
            vt: Some(Box::new(vt)),
            vx: Some(Box::new(vx)),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &DVector<f64>) -> f64 {
        (self.v)(t, x)
    }
}

/// Scalar map f: R -> R with its exact derivative, as required by the
/// chain rule integrand.
pub struct SmoothMap {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl SmoothMap {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            df: Box::new(df),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

/// Delta derivative of f at t.
///
/// At a right-scattered point this is the exact quotient
/// (f(sigma(t)) - f(t)) / mu(t). At a right-dense point it is the exact
/// derivative when the signal carries one, otherwise a second-order
/// one-sided difference quotient with step at most `h_fd`, clipped so all
/// probes stay inside the containing segment. The window maximum is only
/// admissible when left-dense, where the backward quotient applies.
pub fn delta_derivative(f: &ScalarSignal, ts: &TimeScale, t: f64, h_fd: f64) -> Result<f64> {
    let mu = ts.graininess(t)?;
    if mu > MEMBERSHIP_TOL {
        return Ok((f.eval(ts.sigma(t)?) - f.eval(t)) / mu);
    }
    if let Some(d) = f.exact_derivative(t) {
        if !ts.is_max(t) {
            return Ok(d);
        }
    }
    let seg = ts.segment_containing(t)?;
    if ts.is_max(t) {
        // Right side is exhausted; fall back to the dense left side.
        if t - seg.left <= MEMBERSHIP_TOL {
            return Err(Error::DerivativeAtMax { t });
        }
        if let Some(d) = f.exact_derivative(t) {
            return Ok(d);
        }
        let h = h_fd.min((t - seg.left) / 2.0);
        return Ok((3.0 * f.eval(t) - 4.0 * f.eval(t - h) + f.eval(t - 2.0 * h)) / (2.0 * h));
    }
    let h = h_fd.min((seg.right - t) / 2.0);
    Ok((4.0 * f.eval(t + h) - 3.0 * f.eval(t) - f.eval(t + 2.0 * h)) / (2.0 * h))
}

/// Cauchy delta integral of f over [a, b] in the time scale.
///
/// Dense overlaps contribute composite Simpson quadrature with panels no
/// wider than `quad_step`; each right-scattered point s in [a, b)
/// contributes the exact term f(s) * mu(s). On purely discrete scales the
/// result is therefore the exact finite sum.
pub fn delta_integral(
    f: &ScalarSignal,
    ts: &TimeScale,
    a: f64,
    b: f64,
    quad_step: f64,
) -> Result<f64> {
    if !ts.contains(a) {
        return Err(Error::NotMember {
            t: a,
            tol: MEMBERSHIP_TOL,
        });
    }
    if !ts.contains(b) {
        return Err(Error::NotMember {
            t: b,
            tol: MEMBERSHIP_TOL,
        });
    }
    if b < a {
        return Err(Error::ReversedBounds { a, b });
    }
    if !(quad_step > 0.0) || !quad_step.is_finite() {
        return Err(Error::Config(format!(
            "quad_step must be positive, got {quad_step}"
        )));
    }
    let segs = ts.segments();
    let mut total = 0.0;
    for (i, s) in segs.iter().enumerate() {
        let lo = s.left.max(a);
        let hi = s.right.min(b);
        if hi < lo - MEMBERSHIP_TOL {
            continue;
        }
        if hi - lo > MEMBERSHIP_TOL {
            total += simpson(f, lo, hi, quad_step);
        }
        // Jump term across the gap after this segment, if it starts in [a, b).
        if i + 1 < segs.len() && s.right >= a - MEMBERSHIP_TOL && s.right < b - MEMBERSHIP_TOL {
            total += f.eval(s.right) * (segs[i + 1].left - s.right);
        }
    }
    Ok(total)
}

/// Composite Simpson rule with panel width at most `max_step`; nodes are
/// placed by interpolation so the endpoints are hit exactly.
fn simpson(f: &ScalarSignal, lo: f64, hi: f64, max_step: f64) -> f64 {
    let mut n = ((hi - lo) / max_step).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (hi - lo) / n as f64;
    let node = |k: usize| {
        let th = k as f64 / n as f64;
        lo * (1.0 - th) + hi * th
    };
    let mut acc = f.eval(lo) + f.eval(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f.eval(node(k));
    }
    acc * h / 3.0
}

/// Jump compensation zeta(v)(t, x) = v(t + mu(t), x + mu(t) * xdelta):
/// the value of v after the state advances across the gap at t. At a
/// right-dense point it degenerates to v(t, x).
pub fn zeta(
    v: &StateFunction,
    ts: &TimeScale,
    t: f64,
    x: &DVector<f64>,
    xdelta: &DVector<f64>,
) -> Result<f64> {
    let mu = ts.graininess(t)?;
    Ok(v.eval(t + mu, &(x + xdelta * mu)))
}

/// Delta-Dini operator along a motion with derivative xdelta:
///
/// * mu(t) > 0: (zeta(v) - v) / mu(t), the exact rate across the gap;
/// * mu(t) = 0: dv/dt + grad_x(v) . xdelta, from exact partials when the
///   function carries them, otherwise by finite differences (the time
///   probe staying inside the containing dense segment).
pub fn d_operator(
    v: &StateFunction,
    ts: &TimeScale,
    t: f64,
    x: &DVector<f64>,
    xdelta: &DVector<f64>,
) -> Result<f64> {
    let mu = ts.graininess(t)?;
    if mu > MEMBERSHIP_TOL {
        return Ok((zeta(v, ts, t, x, xdelta)? - v.eval(t, x)) / mu);
    }
    let vt = match &v.vt {
        Some(vt) => vt(t, x),
        None => fd_time_partial(v, ts, t, x)?,
    };
    let grad = match &v.vx {
        Some(vx) => vx(t, x),
        None => fd_state_gradient(v, t, x),
    };
    Ok(vt + grad.dot(xdelta))
}

/// Second-order one-sided time partial that never probes outside the
/// containing segment.
fn fd_time_partial(v: &StateFunction, ts: &TimeScale, t: f64, x: &DVector<f64>) -> Result<f64> {
    let seg = ts.segment_containing(t)?;
    let forward_room = seg.right - t;
    let backward_room = t - seg.left;
    if forward_room <= MEMBERSHIP_TOL && backward_room <= MEMBERSHIP_TOL {
        // Isolated point with mu = 0 can only be the window maximum; v is
        // constant in admissible time directions there.
        return Ok(0.0);
    }
    if forward_room >= backward_room {
        let h = H_FD_DEFAULT.min(forward_room / 2.0);
        Ok((4.0 * v.eval(t + h, x) - 3.0 * v.eval(t, x) - v.eval(t + 2.0 * h, x)) / (2.0 * h))
    } else {
        let h = H_FD_DEFAULT.min(backward_room / 2.0);
        Ok((3.0 * v.eval(t, x) - 4.0 * v.eval(t - h, x) + v.eval(t - 2.0 * h, x)) / (2.0 * h))
    }
}

/// Central-difference state gradient with per-coordinate relative step.
fn fd_state_gradient(v: &StateFunction, t: f64, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut grad = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = H_FD_DEFAULT * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let hi = v.eval(t, &probe);
        probe[i] = x[i] - h;
        let lo = v.eval(t, &probe);
        probe[i] = x[i];
        grad[i] = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Chain rule for f composed with g on a time scale:
///
/// (f o g)^Delta (t) = [ integral_0^1 f'(g(t) + h mu(t) g^Delta(t)) dh ] * g^Delta(t)
///
/// The unit-interval average is evaluated by `quad_nodes`-point
/// Gauss-Legendre quadrature; at right-dense points it collapses to
/// f'(g(t)) g^Delta(t).
pub fn chain_rule_delta(
    map: &SmoothMap,
    g: &ScalarSignal,
    ts: &TimeScale,
    t: f64,
    quad_nodes: usize,
    h_fd: f64,
) -> Result<f64> {
    if quad_nodes == 0 {
        return Err(Error::Config("quad_nodes must be at least 1".into()));
    }
    let mu = ts.graininess(t)?;
    let gd = delta_derivative(g, ts, t, h_fd)?;
    let gt = g.eval(t);
    if mu <= MEMBERSHIP_TOL {
        return Ok(map.derivative(gt) * gd);
    }
    let (nodes, weights) = gauss_legendre_unit(quad_nodes);
    let mut avg = 0.0;
    for (u, w) in nodes.iter().zip(&weights) {
        avg += w * map.derivative(gt + u * mu * gd);
    }
    Ok(avg * gd)
}

/// Gauss-Legendre nodes and weights on [0, 1], by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1]; x descends with i so mirror indices.
        nodes[i] = (1.0 - x) / 2.0;
        nodes[n - 1 - i] = (1.0 + x) / 2.0;
        weights[i] = w / 2.0;
        weights[n - 1 - i] = w / 2.0;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and derivative P_n' at x by the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One point of a sampled motion: instant, state, and delta derivative of
/// the state there.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: DVector<f64>,
    pub xdelta: DVector<f64>,
}

/// Sign classification of the D-operator at one sample. Values within
/// [`MONOTONICITY_TOL`] of zero satisfy both one-sided conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Both,
    Indefinite,
}

/// Classify the right-side monotonicity of v along each sample: v is
/// nondecreasing to the right where D(v) >= -tol and nonincreasing where
/// D(v) <= tol.
pub fn right_monotonicity(
    v: &StateFunction,
    ts: &TimeScale,
    samples: &[TrajectorySample],
    tol: f64,
) -> Result<Vec<Monotonicity>> {
    samples
        .iter()
        .map(|s| {
            let m = d_operator(v, ts, s.t, &s.x, &s.xdelta)?;
            Ok(if m.is_nan() {
                Monotonicity::Indefinite
            } else if m > tol {
                Monotonicity::Nondecreasing
            } else if m < -tol {
                Monotonicity::Nonincreasing
            } else {
                Monotonicity::Both
            })
        })
        .collect()
}

/// Aggregate per-sample classifications along a whole motion. Mixed signs
/// yield `Indefinite`; `Both` is absorbed by either one-sided class.
pub fn overall_monotonicity(classes: &[Monotonicity]) -> Monotonicity {
    let mut any_up = false;
    let mut any_down = false;
    for c in classes {
        match c {
            Monotonicity::Nondecreasing => any_up = true,
            Monotonicity::Nonincreasing => any_down = true,
            Monotonicity::Both => {}
            Monotonicity::Indefinite => return Monotonicity::Indefinite,
        }
    }
    match (any_up, any_down) {
        (true, true) => Monotonicity::Indefinite,
        (true, false) => Monotonicity::Nondecreasing,
        (false, true) => Monotonicity::Nonincreasing,
        (false, false) => Monotonicity::Both,
    }
}

/// Step extension of a signal to the window hull: on members it is the
/// signal itself; inside a gap it holds the value at the gap's left edge.
pub struct StepExtension<'a> {
    f: &'a ScalarSignal,
    ts: &'a TimeScale,
}

/// Build the step extension of f over the hull of ts.
pub fn step_extension<'a>(f: &'a ScalarSignal, ts: &'a TimeScale) -> StepExtension<'a> {
    StepExtension { f, ts }
}

impl StepExtension<'_> {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if self.ts.contains(t) {
            return Ok(self.f.eval(t));
        }
        if !self.ts.hull_contains(t) {
            let (lo, hi) = self.ts.window();
            return Err(Error::OutsideHull { t, lo, hi });
        }
        // t lies strictly inside a gap: hold from the segment to its left.
        let segs = self.ts.segments();
        let i = segs.partition_point(|s| s.right < t);
        Ok(self.f.eval(segs[i - 1].right))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square() -> ScalarSignal {
        ScalarSignal::new(|t| t * t)
    }

    #[test]
    fn derivative_scattered_is_exact_quotient() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        // (t^2)^Delta = 2t + mu on any scale; mu = 1 here.
        let d = delta_derivative(&square(), &ts, 2.0, H_FD_DEFAULT).unwrap();
        assert_eq!(d, 5.0);
        let ts = TimeScale::h_grid(0.5, 0.0, 2.0).unwrap();
        let d = delta_derivative(&square(), &ts, 1.0, H_FD_DEFAULT).unwrap();
        assert_relative_eq!(d, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn derivative_dense_exact_and_quotient() {
        let ts = TimeScale::reals(0.0, 1.0).unwrap();
        let f = ScalarSignal::with_derivative(|t| t * t, |t| 2.0 * t);
        assert_eq!(delta_derivative(&f, &ts, 0.5, H_FD_DEFAULT).unwrap(), 1.0);
        let d = delta_derivative(&square(), &ts, 0.5, H_FD_DEFAULT).unwrap();
        assert!((d - 1.0).abs() <= 1e-6, "quotient error {}", (d - 1.0).abs());
    }

    #[test]
    fn derivative_at_window_max() {
        // Left-dense maximum: backward quotient applies.
        let ts = TimeScale::reals(0.0, 1.0).unwrap();
        let d = delta_derivative(&square(), &ts, 1.0, H_FD_DEFAULT).unwrap();
        assert!((d - 2.0).abs() <= 1e-6);
        // Isolated maximum: no admissible quotient.
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let err = delta_derivative(&square(), &ts, 5.0, H_FD_DEFAULT).unwrap_err();
        assert!(matches!(err, Error::DerivativeAtMax { .. }));
    }

    #[test]
    fn integral_discrete_is_exact_sum() {
        let ts = TimeScale::integers(0.0, 3.0).unwrap();
        let f = ScalarSignal::new(|t| t);
        let v = delta_integral(&f, &ts, 0.0, 3.0, QUAD_STEP_DEFAULT).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn integral_dense_matches_classical() {
        let ts = TimeScale::reals(0.0, 1.0).unwrap();
        let f = ScalarSignal::new(|t| t);
        let v = delta_integral(&f, &ts, 0.0, 1.0, QUAD_STEP_DEFAULT).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn integral_mixed_scale() {
        // On [0,1] u [3,4] u [6,7] with f(t) = t over [0, 4]:
        // dense [0,1] gives 1/2, the jump at 1 gives 1 * 2, dense [3,4]
        // gives 7/2; total 6.
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 7.0).unwrap();
        let f = ScalarSignal::new(|t| t);
        let v = delta_integral(&f, &ts, 0.0, 4.0, QUAD_STEP_DEFAULT).unwrap();
        assert_relative_eq!(v, 6.0, max_relative = 1e-12);
    }

    #[test]
    fn integral_is_additive() {
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 7.0).unwrap();
        let f = ScalarSignal::new(|t| t * t * t - t);
        let whole = delta_integral(&f, &ts, 0.0, 7.0, QUAD_STEP_DEFAULT).unwrap();
        let first = delta_integral(&f, &ts, 0.0, 4.0, QUAD_STEP_DEFAULT).unwrap();
        let second = delta_integral(&f, &ts, 4.0, 7.0, QUAD_STEP_DEFAULT).unwrap();
        assert!((first + second - whole).abs() <= 1e-8);
    }

    #[test]
    fn integral_rejects_bad_bounds() {
        let ts = TimeScale::integers(0.0, 3.0).unwrap();
        let f = ScalarSignal::new(|t| t);
        assert!(matches!(
            delta_integral(&f, &ts, 3.0, 0.0, 1e-3).unwrap_err(),
            Error::ReversedBounds { .. }
        ));
        assert!(matches!(
            delta_integral(&f, &ts, 0.5, 3.0, 1e-3).unwrap_err(),
            Error::NotMember { .. }
        ));
        let empty = delta_integral(&f, &ts, 2.0, 2.0, 1e-3).unwrap();
        assert_eq!(empty, 0.0);
    }

    #[test]
    fn zeta_advances_across_gap() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let v = StateFunction::new(|_, x: &DVector<f64>| x[0] * x[0]);
        let x = DVector::from_vec(vec![2.0]);
        let xd = DVector::from_vec(vec![3.0]);
        // x + mu * xdelta = 5, so zeta(v) = 25.
        assert_eq!(zeta(&v, &ts, 1.0, &x, &xd).unwrap(), 25.0);
        let ts = TimeScale::reals(0.0, 1.0).unwrap();
        assert_eq!(zeta(&v, &ts, 0.5, &x, &xd).unwrap(), 4.0);
    }

    #[test]
    fn d_operator_scattered_matches_quadratic_quotient() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let v = StateFunction::new(|_, x: &DVector<f64>| x[0] * x[0] + 2.0 * x[1] * x[1]);
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let xd = DVector::from_vec(vec![0.5, 2.0]);
        let got = d_operator(&v, &ts, 2.0, &x, &xd).unwrap();
        let next = &x + &xd;
        let want = (next[0] * next[0] + 2.0 * next[1] * next[1]) - (1.0 + 2.0);
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }

    #[test]
    fn d_operator_dense_exact_and_fd_agree() {
        let ts = TimeScale::reals(0.0, 2.0).unwrap();
        let plain = StateFunction::new(|t, x: &DVector<f64>| t * x[0] + x[1] * x[1]);
        let exact = StateFunction::with_gradients(
            |t, x| t * x[0] + x[1] * x[1],
            |_, x| x[0],
            |t, x| DVector::from_vec(vec![t, 2.0 * x[1]]),
        );
        let x = DVector::from_vec(vec![1.5, -0.5]);
        let xd = DVector::from_vec(vec![1.0, 2.0]);
        let want = d_operator(&exact, &ts, 1.0, &x, &xd).unwrap();
        // vt + grad . xd = x0 + t*xd0 + 2*x1*xd1 = 1.5 + 1 - 2 = 0.5.
        assert_relative_eq!(want, 0.5, max_relative = 1e-12);
        let got = d_operator(&plain, &ts, 1.0, &x, &xd).unwrap();
        assert!((got - want).abs() <= 1e-6);
    }

    #[test]
    fn chain_rule_matches_square_expansion() {
        // With f(x) = x^2 and g(t) = t, (f o g)^Delta = 2t + mu exactly.
        let map = SmoothMap::new(|x| x * x, |x| 2.0 * x);
        let g = ScalarSignal::with_derivative(|t| t, |_| 1.0);
        for (ts, t, mu) in [
            (TimeScale::integers(0.0, 5.0).unwrap(), 2.0, 1.0),
            (TimeScale::h_grid(0.5, 0.0, 3.0).unwrap(), 1.5, 0.5),
            (TimeScale::reals(0.0, 3.0).unwrap(), 1.5, 0.0),
        ] {
            let got = chain_rule_delta(&map, &g, &ts, t, GL_NODES_DEFAULT, H_FD_DEFAULT).unwrap();
            assert!((got - (2.0 * t + mu)).abs() <= 1e-6, "got {got} at mu = {mu}");
        }
    }

    #[test]
    fn chain_rule_matches_direct_delta_derivative() {
        // Cross-check against the quotient applied to the composite.
        let map = SmoothMap::new(|x| x * x * x, |x| 3.0 * x * x);
        let g = ScalarSignal::with_derivative(|t| t * t, |t| 2.0 * t);
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 7.0).unwrap();
        for t in [0.5, 1.0, 3.5, 4.0] {
            let composite = ScalarSignal::with_derivative(
                |t| (t * t) * (t * t) * (t * t),
                |t| 6.0 * t.powi(5),
            );
            let want = delta_derivative(&composite, &ts, t, H_FD_DEFAULT).unwrap();
            let got = chain_rule_delta(&map, &g, &ts, t, GL_NODES_DEFAULT, H_FD_DEFAULT).unwrap();
            assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "t = {t}");
        }
    }

    #[test]
    fn monotonicity_classification() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let v = StateFunction::new(|_, x: &DVector<f64>| x[0] * x[0]);
        let up = TrajectorySample {
            t: 1.0,
            x: DVector::from_vec(vec![1.0]),
            xdelta: DVector::from_vec(vec![1.0]),
        };
        let down = TrajectorySample {
            t: 1.0,
            x: DVector::from_vec(vec![1.0]),
            xdelta: DVector::from_vec(vec![-1.0]),
        };
        let flat = TrajectorySample {
            t: 1.0,
            x: DVector::from_vec(vec![1.0]),
            xdelta: DVector::from_vec(vec![0.0]),
        };
        let classes =
            right_monotonicity(&v, &ts, &[up.clone(), down.clone(), flat.clone()], MONOTONICITY_TOL)
                .unwrap();
        assert_eq!(
            classes,
            vec![
                Monotonicity::Nondecreasing,
                Monotonicity::Nonincreasing,
                Monotonicity::Both
            ]
        );
        assert_eq!(overall_monotonicity(&classes), Monotonicity::Indefinite);
        let all_up = right_monotonicity(&v, &ts, &[up, flat], MONOTONICITY_TOL).unwrap();
        assert_eq!(overall_monotonicity(&all_up), Monotonicity::Nondecreasing);
    }

    #[test]
    fn step_extension_holds_across_gaps() {
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 7.0).unwrap();
        let f = ScalarSignal::new(|t| t * t);
        let ext = step_extension(&f, &ts);
        // Member: identity.
        assert_eq!(ext.eval(0.5).unwrap(), 0.25);
        // Gap (1, 3): value held from t = 1.
        assert_eq!(ext.eval(2.0).unwrap(), 1.0);
        assert_eq!(ext.eval(2.999).unwrap(), 1.0);
        // Outside the hull: error.
        assert!(matches!(
            ext.eval(7.5).unwrap_err(),
            Error::OutsideHull { .. }
        ));
        assert!(matches!(
            ext.eval(-0.5).unwrap_err(),
            Error::OutsideHull { .. }
        ));
    }
}
