//! Closed-loop simulation of the two-agent system over a time-scale
//! window: exact updates across scattered points, RK4 with zero-order
//! held controls over dense stretches, and avoidance verdicts.
//!
//! The walk visits every point of `TimeScale::sample`, so consecutive
//! dense samples are at most `dense_step` apart and every scattered point
//! is hit exactly. All per-step arithmetic runs in preallocated buffers;
//! one simulation allocates only its record list.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::avoidance::{
    set_membership, AvoidanceProblem, LinearPlant, Region, StrategyParams, SET_TOL,
};
use crate::error::{Error, Result};
use crate::timescale::{TimeScale, MEMBERSHIP_TOL};

/// Default width of dense integration sub-steps.
pub const DENSE_STEP_DEFAULT: f64 = 1e-3;

/// How the pursuer chooses u2 at each sample.
#[derive(Debug, Clone)]
pub enum PursuerPolicy {
    /// Adversarial direction -alpha2 * unit(C^T Q x).
    WorstCase,
    /// Direction uniform on the sphere, magnitude uniform in [0, alpha2],
    /// resampled at every scattered point and dense sub-step boundary.
    Random,
    /// Fixed vector.
    Constant(DVector<f64>),
    /// Piecewise-constant signal: value i applies from times[i] until the
    /// next breakpoint; the first value also covers earlier instants.
    Scripted {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

/// Full description of one closed-loop run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub plant: LinearPlant,
    pub strategy: StrategyParams,
    pub problem: AvoidanceProblem,
    pub ts: TimeScale,
    pub x0: DVector<f64>,
    pub policy: PursuerPolicy,
    pub dense_step: f64,
    pub seed: u64,
}

/// One sampled instant of a trajectory.
#[derive(Debug, Clone)]
pub struct Record {
    pub t: f64,
    pub x: DVector<f64>,
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub xdelta: DVector<f64>,
    pub v: f64,
    pub dv: f64,
    pub region: Region,
}

/// Avoidance outcome of a run; the first event in time wins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Verdict {
    #[serde(rename = "avoided")]
    Avoided,
    #[serde(rename = "entered_A_at")]
    EnteredA { t: f64 },
    #[serde(rename = "left_domain_at")]
    LeftDomain { t: f64 },
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Avoided => write!(f, "avoided"),
            Verdict::EnteredA { t } => write!(f, "entered_A_at t={t}"),
            Verdict::LeftDomain { t } => write!(f, "left_domain_at t={t}"),
        }
    }
}

/// A simulated run: per-sample records plus the verdict.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub verdict: Verdict,
}

/// Scalar digest of a run, for callers that do not need the trace.
#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub verdict: Verdict,
    /// min over records of V(x).
    pub min_v: f64,
    /// min over records of the rate of V.
    pub min_dv: f64,
    /// min over steps of (V_next - V) / (1 + V): relative per-step growth.
    pub min_v_step_rel: f64,
}

/// Coordinatewise hull of bundle states at one time index.
#[derive(Debug, Clone)]
pub struct FunnelSample {
    pub t: f64,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

/// Aggregates over a bundle of runs from one initial state.
#[derive(Debug, Clone)]
pub struct BundleSummary {
    pub min_v: f64,
    pub entered_count: usize,
    pub left_domain_count: usize,
    pub funnel: Vec<FunnelSample>,
}

/// Runs differing only in their pursuer randomization.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub trajectories: Vec<Trajectory>,
    pub summary: BundleSummary,
}

/// Outcome of one integration step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub t_next: f64,
    pub x_next: DVector<f64>,
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub xdelta: DVector<f64>,
}

/// Preallocated per-run arithmetic buffers.
struct Workspace {
    u1: DVector<f64>,
    u2: DVector<f64>,
    xd: DVector<f64>,
    qx: DVector<f64>,
    qxd: DVector<f64>,
    w: DVector<f64>,
    w2: DVector<f64>,
    bc: DVector<f64>,
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    xs: DVector<f64>,
}

impl Workspace {
    fn new(plant: &LinearPlant) -> Self {
        let n = plant.state_dim();
        Self {
            u1: DVector::zeros(plant.evader_dim()),
            u2: DVector::zeros(plant.pursuer_dim()),
            xd: DVector::zeros(n),
            qx: DVector::zeros(n),
            qxd: DVector::zeros(n),
            w: DVector::zeros(plant.evader_dim()),
            w2: DVector::zeros(plant.pursuer_dim()),
            bc: DVector::zeros(n),
            k1: DVector::zeros(n),
            k2: DVector::zeros(n),
            k3: DVector::zeros(n),
            k4: DVector::zeros(n),
            xs: DVector::zeros(n),
        }
    }

    /// u1 = K x + gain * unit(B^T Q x), buffered
    /// [`crate::avoidance::evader_control`].
    fn evader(&mut self, sp: &StrategyParams, plant: &LinearPlant, x: &DVector<f64>) {
        self.qx.gemv(1.0, &sp.q, x, 0.0);
        self.u1.gemv(1.0, &sp.k, x, 0.0);
        self.w.gemv_tr(1.0, &plant.b, &self.qx, 0.0);
        let norm = self.w.norm();
        if norm > sp.deadband {
            self.u1.axpy(sp.gain / norm, &self.w, 1.0);
        }
    }

    /// Pursuer value by policy; `evader` must have refreshed qx = Q x.
    fn pursuer(
        &mut self,
        policy: &PursuerPolicy,
        sp: &StrategyParams,
        plant: &LinearPlant,
        t: f64,
        rng: &mut ChaCha12Rng,
    ) {
        match policy {
            PursuerPolicy::WorstCase => {
                self.w2.gemv_tr(1.0, &plant.c, &self.qx, 0.0);
                let norm = self.w2.norm();
                if norm > sp.deadband {
                    self.u2.copy_from(&self.w2);
                    self.u2 *= -plant.alpha2 / norm;
                } else {
                    self.u2.fill(0.0);
                }
            }
            PursuerPolicy::Random => loop {
                for i in 0..self.u2.len() {
                    // Box-Muller normal from two uniforms.
                    let a: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let b: f64 = rng.gen_range(0.0..1.0);
                    self.u2[i] =
                        (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos();
                }
                let norm = self.u2.norm();
                if norm > 1e-9 {
                    let magnitude: f64 = rng.gen_range(0.0..=1.0);
                    self.u2 *= plant.alpha2 * magnitude / norm;
                    break;
                }
            },
            PursuerPolicy::Constant(v) => self.u2.copy_from(v),
            PursuerPolicy::Scripted { times, values } => {
                let i = times.partition_point(|&s| s <= t + MEMBERSHIP_TOL);
                self.u2.copy_from(&values[i.saturating_sub(1)]);
            }
        }
    }

    /// xd = A x + B u1 + C u2 from the buffered controls.
    fn drift(&mut self, plant: &LinearPlant, x: &DVector<f64>) {
        self.xd.gemv(1.0, &plant.a, x, 0.0);
        self.xd.gemv(1.0, &plant.b, &self.u1, 1.0);
        self.xd.gemv(1.0, &plant.c, &self.u2, 1.0);
    }

    /// Advance x in place: exact jump when mu > 0, otherwise one RK4 step
    /// of width h with the buffered controls held constant.
    fn advance(&mut self, plant: &LinearPlant, x: &mut DVector<f64>, mu: f64, h: f64) {
        if mu > MEMBERSHIP_TOL {
            x.axpy(mu, &self.xd, 1.0);
            return;
        }
        // Control contribution is constant across the stages.
        self.bc.gemv(1.0, &plant.b, &self.u1, 0.0);
        self.bc.gemv(1.0, &plant.c, &self.u2, 1.0);
        self.k1.copy_from(&self.xd);
        self.stage(plant, x, h / 2.0, 1);
        self.stage(plant, x, h / 2.0, 2);
        self.stage(plant, x, h, 3);
        x.axpy(h / 6.0, &self.k1, 1.0);
        x.axpy(h / 3.0, &self.k2, 1.0);
        x.axpy(h / 3.0, &self.k3, 1.0);
        x.axpy(h / 6.0, &self.k4, 1.0);
    }

    /// k_{s+1} = A (x + c * k_s) + B u1 + C u2.
    fn stage(&mut self, plant: &LinearPlant, x: &DVector<f64>, c: f64, s: usize) {
        let prev = match s {
            1 => &self.k1,
            2 => &self.k2,
            _ => &self.k3,
        };
        self.xs.copy_from(x);
        self.xs.axpy(c, prev, 1.0);
        let out = match s {
            1 => &mut self.k2,
            2 => &mut self.k3,
            _ => &mut self.k4,
        };
        out.copy_from(&self.bc);
        out.gemv(1.0, &plant.a, &self.xs, 1.0);
    }

    /// Rate of V = x^T Q x along xd at graininess mu, exact at jumps.
    fn rate(&mut self, q: &nalgebra::DMatrix<f64>, mu: f64, x: &DVector<f64>) -> f64 {
        self.qxd.gemv(1.0, q, &self.xd, 0.0);
        if mu > MEMBERSHIP_TOL {
            2.0 * x.dot(&self.qxd) + mu * self.xd.dot(&self.qxd)
        } else {
            2.0 * x.dot(&self.qxd)
        }
    }
}

fn validate(cfg: &SimConfig) -> Result<()> {
    let n = cfg.plant.state_dim();
    if cfg.x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has {} coordinates but the state dimension is {n}",
            cfg.x0.len()
        )));
    }
    if cfg.problem.q.nrows() != n || cfg.strategy.q.nrows() != n {
        return Err(Error::Dimension(
            "strategy and problem matrices must match the state dimension".into(),
        ));
    }
    if !(cfg.dense_step > 0.0) || !cfg.dense_step.is_finite() {
        return Err(Error::Config(format!(
            "dense_step must be positive, got {}",
            cfg.dense_step
        )));
    }
    if cfg.problem.value(&cfg.x0) <= cfg.problem.level + SET_TOL {
        return Err(Error::Config(format!(
            "initial state starts inside the avoidance set: V(x0) = {} <= level {}",
            cfg.problem.value(&cfg.x0),
            cfg.problem.level
        )));
    }
    if let PursuerPolicy::Constant(v) = &cfg.policy {
        if v.len() != cfg.plant.pursuer_dim() {
            return Err(Error::Dimension(
                "constant pursuer value has the wrong dimension".into(),
            ));
        }
    }
    if let PursuerPolicy::Scripted { times, values } = &cfg.policy {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Config(
                "scripted policy needs matching nonempty times and values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "scripted policy times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| v.len() != cfg.plant.pursuer_dim()) {
            return Err(Error::Dimension(
                "scripted pursuer value has the wrong dimension".into(),
            ));
        }
    }
    Ok(())
}

/// Everything a per-sample observer sees; buffers are borrowed from the
/// running workspace.
struct Frame<'a> {
    t: f64,
    x: &'a DVector<f64>,
    u1: &'a DVector<f64>,
    u2: &'a DVector<f64>,
    xdelta: &'a DVector<f64>,
    v: f64,
    dv: f64,
    region: Region,
}

/// Shared walk: visits every sample point, computes controls, records the
/// frame, then advances. The observer is called once per sample point in
/// time order.
fn run_core(
    cfg: &SimConfig,
    rng: &mut ChaCha12Rng,
    mut observe: impl FnMut(&Frame),
) -> Result<Verdict> {
    validate(cfg)?;
    let grid = cfg.ts.sample(cfg.dense_step)?;
    let mus: Vec<f64> = grid
        .iter()
        .map(|&t| cfg.ts.graininess(t))
        .collect::<Result<_>>()?;
    let mut ws = Workspace::new(&cfg.plant);
    let mut x = cfg.x0.clone();
    let mut verdict = Verdict::Avoided;
    for k in 0..grid.len() {
        let t = grid[k];
        let mu = mus[k];
        ws.evader(&cfg.strategy, &cfg.plant, &x);
        ws.pursuer(&cfg.policy, &cfg.strategy, &cfg.plant, t, rng);
        ws.drift(&cfg.plant, &x);
        let v = cfg.problem.value(&x);
        let dv = ws.rate(&cfg.problem.q, mu, &x);
        let region = set_membership(&cfg.problem, &x);
        if verdict == Verdict::Avoided {
            if region == Region::InsideA {
                verdict = Verdict::EnteredA { t };
            } else if !cfg.problem.in_domain(&x) {
                verdict = Verdict::LeftDomain { t };
            }
        }
        observe(&Frame {
            t,
            x: &x,
            u1: &ws.u1,
            u2: &ws.u2,
            xdelta: &ws.xd,
            v,
            dv,
            region,
        });
        if k + 1 < grid.len() {
            let h = grid[k + 1] - t;
            ws.advance(&cfg.plant, &mut x, mu, h);
        }
    }
    Ok(verdict)
}

/// One integration step from (t, x): controls, delta derivative, and the
/// next state — exact across a gap, RK4 of width
/// min(dense_step, distance to segment end) on a dense stretch.
pub fn step(
    plant: &LinearPlant,
    strategy: &StrategyParams,
    policy: &PursuerPolicy,
    ts: &TimeScale,
    t: f64,
    x: &DVector<f64>,
    dense_step: f64,
    rng: &mut ChaCha12Rng,
) -> Result<StepOutcome> {
    if !(dense_step > 0.0) || !dense_step.is_finite() {
        return Err(Error::Config(format!(
            "dense_step must be positive, got {dense_step}"
        )));
    }
    if ts.is_max(t) {
        return Err(Error::Config(format!(
            "cannot step from the window maximum t = {t}"
        )));
    }
    let mu = ts.graininess(t)?;
    let mut ws = Workspace::new(plant);
    ws.evader(strategy, plant, x);
    ws.pursuer(policy, strategy, plant, t, rng);
    ws.drift(plant, x);
    let mut x_next = x.clone();
    let (h, t_next) = if mu > MEMBERSHIP_TOL {
        (0.0, ts.sigma(t)?)
    } else {
        let seg = ts.segment_containing(t)?;
        let h = dense_step.min(seg.right - t);
        (h, t + h)
    };
    ws.advance(plant, &mut x_next, mu, h);
    Ok(StepOutcome {
        t_next,
        x_next,
        u1: ws.u1.clone(),
        u2: ws.u2.clone(),
        xdelta: ws.xd.clone(),
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate one run, materializing every record.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    simulate_stream(cfg, 0)
}

fn simulate_stream(cfg: &SimConfig, stream: u64) -> Result<Trajectory> {
    let mut rng = rng_for(cfg.seed, stream);
    let mut records = Vec::new();
    let verdict = run_core(cfg, &mut rng, |f| {
        records.push(Record {
            t: f.t,
            x: f.x.clone(),
            u1: f.u1.clone(),
            u2: f.u2.clone(),
            xdelta: f.xdelta.clone(),
            v: f.v,
            dv: f.dv,
            region: f.region,
        });
    })?;
    Ok(Trajectory { records, verdict })
}

/// Simulate one run, keeping only scalar aggregates. Behaves exactly like
/// [`simulate`] (same walk, same randomness) without storing the trace.
pub fn simulate_summary(cfg: &SimConfig) -> Result<RunSummary> {
    summary_stream(cfg, 0)
}

fn summary_stream(cfg: &SimConfig, stream: u64) -> Result<RunSummary> {
    let mut rng = rng_for(cfg.seed, stream);
    let mut min_v = f64::INFINITY;
    let mut min_dv = f64::INFINITY;
    let mut min_step = f64::INFINITY;
    let mut prev_v: Option<f64> = None;
    let verdict = run_core(cfg, &mut rng, |f| {
        min_v = min_v.min(f.v);
        min_dv = min_dv.min(f.dv);
        if let Some(pv) = prev_v {
            min_step = min_step.min((f.v - pv) / (1.0 + pv));
        }
        prev_v = Some(f.v);
    })?;
    Ok(RunSummary {
        verdict,
        min_v,
        min_dv,
        min_v_step_rel: min_step,
    })
}

/// Run n_runs simulations differing only in the pursuer randomization
/// (run i uses RNG stream i, so run 0 reproduces [`simulate`]); results
/// are merged in run-index order regardless of scheduling.
pub fn bundle(cfg: &SimConfig, n_runs: usize) -> Result<Bundle> {
    if n_runs == 0 {
        return Err(Error::Config("bundle needs at least one run".into()));
    }
    let trajectories: Vec<Trajectory> = (0..n_runs as u64)
        .into_par_iter()
        .map(|stream| simulate_stream(cfg, stream))
        .collect::<Result<_>>()?;

    let mut min_v = f64::INFINITY;
    let mut entered_count = 0usize;
    let mut left_domain_count = 0usize;
    for tr in &trajectories {
        match tr.verdict {
            Verdict::EnteredA { .. } => entered_count += 1,
            Verdict::LeftDomain { .. } => left_domain_count += 1,
            Verdict::Avoided => {}
        }
        for r in &tr.records {
            min_v = min_v.min(r.v);
        }
    }
    let len = trajectories[0].records.len();
    let n = cfg.plant.state_dim();
    let mut funnel = Vec::with_capacity(len);
    for k in 0..len {
        let t = trajectories[0].records[k].t;
        let mut lo = DVector::from_element(n, f64::INFINITY);
        let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
        for tr in &trajectories {
            let x = &tr.records[k].x;
            for i in 0..n {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        funnel.push(FunnelSample { t, lo, hi });
    }
    Ok(Bundle {
        trajectories,
        summary: BundleSummary {
            min_v,
            entered_count,
            left_domain_count,
            funnel,
        },
    })
}

/// Write a trajectory as CSV: t, x1..xn, u1_1.., u2_1.., V, DV, region.
/// Formatting is shortest-round-trip decimal, so identical runs serialize
/// to identical bytes.
pub fn write_csv<W: std::io::Write>(traj: &Trajectory, out: &mut W) -> std::io::Result<()> {
    let (n, d1, d2) = match traj.records.first() {
        Some(r) => (r.x.len(), r.u1.len(), r.u2.len()),
        None => (0, 0, 0),
    };
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=d1 {
        header.push_str(&format!(",u1_{i}"));
    }
    for i in 1..=d2 {
        header.push_str(&format!(",u2_{i}"));
    }
    header.push_str(",V,DV,region");
    writeln!(out, "{header}")?;
    for r in &traj.records {
        let mut line = format!("{}", r.t);
        for v in r.x.iter().chain(r.u1.iter()).chain(r.u2.iter()) {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{},{},{}", r.v, r.dv, r.region));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Trajectory as a JSON value: verdict, per-record arrays, and the caller
/// supplied configuration echo.
pub fn trajectory_json(traj: &Trajectory, config_echo: serde_json::Value) -> serde_json::Value {
    let records: Vec<serde_json::Value> = traj
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "t": r.t,
                "x": r.x.as_slice(),
                "u1": r.u1.as_slice(),
                "u2": r.u2.as_slice(),
                "xdelta": r.xdelta.as_slice(),
                "V": r.v,
                "DV": r.dv,
                "region": r.region.label(),
            })
        })
        .collect();
    serde_json::json!({
        "verdict": traj.verdict,
        "records": records,
        "config": config_echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avoidance::{synthesize, DEADBAND_DEFAULT};
    use crate::linalg::{max_norm, transition_matrix};
    use nalgebra::DMatrix;

    fn example_plant() -> LinearPlant {
        LinearPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn example_config(ts: TimeScale, mu: f64, x0: Vec<f64>, policy: PursuerPolicy) -> SimConfig {
        let plant = example_plant();
        let k = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let syn = synthesize(&plant, &k, &DMatrix::identity(2, 2), mu, DEADBAND_DEFAULT).unwrap();
        let problem = AvoidanceProblem::unbounded(syn.params.q.clone(), 1.0, 1.0).unwrap();
        SimConfig {
            plant,
            strategy: syn.params,
            problem,
            ts,
            x0: DVector::from_vec(x0),
            policy,
            dense_step: DENSE_STEP_DEFAULT,
            seed: 42,
        }
    }

    /// Strategy with no feedback and no switching: u1 = 0 identically.
    fn null_strategy(n: usize, d1: usize) -> StrategyParams {
        StrategyParams::new(
            DMatrix::zeros(d1, n),
            DMatrix::identity(n, n),
            DMatrix::identity(d1, d1),
            0.0,
            DEADBAND_DEFAULT,
        )
        .unwrap()
    }

    #[test]
    fn step_examples() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let mut rng = rng_for(0, 0);

        // Zero dynamics with null controls: state is fixed.
        let plant = LinearPlant::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            1.0,
            0.0,
        )
        .unwrap();
        let sp = null_strategy(2, 1);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let out = step(
            &plant,
            &sp,
            &PursuerPolicy::Constant(DVector::zeros(1)),
            &ts,
            0.0,
            &x,
            1e-3,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.x_next, x);
        assert_eq!(out.t_next, 1.0);

        // Example drift with u = 0: x_next = x + mu A x.
        let plant = example_plant();
        let out = step(
            &plant,
            &sp,
            &PursuerPolicy::Constant(DVector::zeros(1)),
            &ts,
            0.0,
            &DVector::from_vec(vec![0.0, 1.0]),
            1e-3,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.x_next, DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(out.xdelta, DVector::from_vec(vec![1.0, 0.0]));

        // Dense RK4 on polynomial dynamics is exact to roundoff:
        // x(t) = (x1 + t x2, x2).
        let ts = TimeScale::reals(0.0, 1.0).unwrap();
        let out = step(
            &plant,
            &sp,
            &PursuerPolicy::Constant(DVector::zeros(1)),
            &ts,
            0.0,
            &DVector::from_vec(vec![1.0, 2.0]),
            0.25,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.t_next, 0.25);
        assert!((out.x_next[0] - 1.5).abs() <= 1e-10);
        assert!((out.x_next[1] - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn simulate_avoids_on_integers_with_worst_pursuer() {
        let ts = TimeScale::integers(0.0, 30.0).unwrap();
        let cfg = example_config(ts, 1.0, vec![2.0, 2.0], PursuerPolicy::WorstCase);
        let tr = simulate(&cfg).unwrap();
        assert_eq!(tr.verdict, Verdict::Avoided);
        assert_eq!(tr.records.len(), 31);
        // V never decreases along the closed loop.
        for w in tr.records.windows(2) {
            assert!(w[1].v >= w[0].v - 1e-7 * (1.0 + w[0].v));
        }
        // Scattered identity: x_next = x + mu * xdelta exactly.
        for w in tr.records.windows(2) {
            let jump = &w[0].x + &w[0].xdelta * 1.0;
            assert_eq!(jump, w[1].x);
        }
    }

    #[test]
    fn summary_agrees_with_full_run() {
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 10.0).unwrap();
        let cfg = example_config(ts, 0.0, vec![1.1, 0.4], PursuerPolicy::Random);
        let tr = simulate(&cfg).unwrap();
        let sm = simulate_summary(&cfg).unwrap();
        assert_eq!(sm.verdict, tr.verdict);
        let min_v = tr.records.iter().map(|r| r.v).fold(f64::INFINITY, f64::min);
        let min_dv = tr.records.iter().map(|r| r.dv).fold(f64::INFINITY, f64::min);
        assert_eq!(sm.min_v, min_v);
        assert_eq!(sm.min_dv, min_dv);
    }

    #[test]
    fn deterministic_replay() {
        let ts = TimeScale::integers(0.0, 20.0).unwrap();
        let cfg = example_config(ts, 1.0, vec![1.5, 1.0], PursuerPolicy::Random);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.u1, rb.u1);
            assert_eq!(ra.u2, rb.u2);
            assert_eq!(ra.v, rb.v);
            assert_eq!(ra.dv, rb.dv);
        }
    }

    #[test]
    fn entering_run_is_detected() {
        // No evader action, constant pursuer pushing x1 down: V = |x|^2
        // crosses the level from x0 = (1.3, 0).
        let plant = LinearPlant::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            1.0,
            1.0,
        )
        .unwrap();
        let problem =
            AvoidanceProblem::unbounded(DMatrix::identity(2, 2), 1.0, 1.0).unwrap();
        let cfg = SimConfig {
            plant,
            strategy: null_strategy(2, 2),
            problem,
            ts: TimeScale::reals(0.0, 2.0).unwrap(),
            x0: DVector::from_vec(vec![1.3, 0.0]),
            policy: PursuerPolicy::Constant(DVector::from_vec(vec![-1.0, 0.0])),
            dense_step: 1e-3,
            seed: 0,
        };
        let tr = simulate(&cfg).unwrap();
        match tr.verdict {
            Verdict::EnteredA { t } => assert!(t > 0.3 && t < 0.35, "entered at {t}"),
            other => panic!("expected entry, got {other:?}"),
        }
    }

    #[test]
    fn domain_exit_is_detected() {
        let plant = LinearPlant::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            1.0,
            1.0,
        )
        .unwrap();
        let problem = AvoidanceProblem::new(
            DMatrix::identity(2, 2),
            1.0,
            1.0,
            vec![(-2.0, 2.0), (-2.0, 2.0)],
        )
        .unwrap();
        let cfg = SimConfig {
            plant,
            strategy: null_strategy(2, 2),
            problem,
            ts: TimeScale::reals(0.0, 2.0).unwrap(),
            x0: DVector::from_vec(vec![1.5, 0.0]),
            policy: PursuerPolicy::Constant(DVector::from_vec(vec![1.0, 0.0])),
            dense_step: 1e-3,
            seed: 0,
        };
        let tr = simulate(&cfg).unwrap();
        assert!(matches!(tr.verdict, Verdict::LeftDomain { .. }));
    }

    #[test]
    fn start_inside_set_is_rejected() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let cfg = example_config(ts, 1.0, vec![0.1, 0.1], PursuerPolicy::WorstCase);
        assert!(matches!(
            simulate(&cfg).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn uncontrolled_trajectory_matches_transition_matrix() {
        // Null strategy and zero pursuer: motion is x = Phi(t, t0) x0.
        let plant = example_plant();
        let ts = TimeScale::periodic(1.0, 2.0, 0.0, 7.0).unwrap();
        let cfg = SimConfig {
            plant: plant.clone(),
            strategy: null_strategy(2, 1),
            problem: AvoidanceProblem::unbounded(DMatrix::identity(2, 2), 1.0, 1.0).unwrap(),
            ts: ts.clone(),
            x0: DVector::from_vec(vec![1.5, 0.7]),
            policy: PursuerPolicy::Constant(DVector::zeros(1)),
            dense_step: 1e-3,
            seed: 0,
        };
        let tr = simulate(&cfg).unwrap();
        for k in [0, 500, 1001, 1002, 1500, tr.records.len() - 1] {
            let r = &tr.records[k];
            let phi = transition_matrix(&plant.a, &ts, 0.0, r.t, 1e-3).unwrap();
            let want = &phi * &cfg.x0;
            assert!(
                max_norm(&DMatrix::from_column_slice(2, 1, (&r.x - &want).as_slice())) <= 1e-8,
                "t = {}",
                r.t
            );
        }
    }

    #[test]
    fn bundle_aggregates_and_reproduces_single_run() {
        let ts = TimeScale::integers(0.0, 10.0).unwrap();
        let cfg = example_config(ts, 1.0, vec![1.5, 1.0], PursuerPolicy::WorstCase);
        let single = simulate(&cfg).unwrap();
        let b = bundle(&cfg, 1).unwrap();
        assert_eq!(b.trajectories.len(), 1);
        assert_eq!(b.trajectories[0].records.len(), single.records.len());
        for (ra, rb) in b.trajectories[0].records.iter().zip(&single.records) {
            assert_eq!(ra.x, rb.x);
        }
        assert_eq!(b.summary.entered_count, 0);

        let cfg = SimConfig {
            policy: PursuerPolicy::Random,
            ..cfg
        };
        let b = bundle(&cfg, 8).unwrap();
        assert_eq!(b.trajectories.len(), 8);
        // Funnel hull bounds every trajectory coordinatewise.
        for (k, f) in b.summary.funnel.iter().enumerate() {
            for tr in &b.trajectories {
                for i in 0..2 {
                    assert!(f.lo[i] <= tr.records[k].x[i] && tr.records[k].x[i] <= f.hi[i]);
                }
            }
        }
        assert!(bundle(&cfg, 0).is_err());
    }

    #[test]
    fn csv_shape_and_stability() {
        let ts = TimeScale::integers(0.0, 5.0).unwrap();
        let cfg = example_config(ts, 1.0, vec![1.5, 1.0], PursuerPolicy::Random);
        let tr = simulate(&cfg).unwrap();
        let mut a = Vec::new();
        write_csv(&tr, &mut a).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,u1_1,u2_1,V,DV,region");
        assert_eq!(text.lines().count(), 7);

        let tr2 = simulate(&cfg).unwrap();
        let mut b = Vec::new();
        write_csv(&tr2, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_policy_lookup() {
        let ts = TimeScale::integers(0.0, 4.0).unwrap();
        let mut cfg = example_config(ts, 1.0, vec![1.5, 1.0], PursuerPolicy::WorstCase);
        cfg.policy = PursuerPolicy::Scripted {
            times: vec![0.0, 2.0],
            values: vec![
                DVector::from_vec(vec![0.25]),
                DVector::from_vec(vec![-0.5]),
            ],
        };
        let tr = simulate(&cfg).unwrap();
        assert_eq!(tr.records[0].u2[0], 0.25);
        assert_eq!(tr.records[1].u2[0], 0.25);
        assert_eq!(tr.records[2].u2[0], -0.5);
        assert_eq!(tr.records[4].u2[0], -0.5);
    }
}
