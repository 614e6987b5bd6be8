//! JSON run configuration: one top-level document drives synthesize,
//! simulate, and verify. Matrices are row-major arrays of arrays; every
//! tolerance has a documented default and can be overridden per run.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use tsavoid_core::avoidance::{
    synthesize, AvoidanceProblem, GridSpec, LinearPlant, StrategyMode, StrategyParams, Synthesis,
    DEADBAND_DEFAULT, VERIFY_TOL,
};
use tsavoid_core::simulator::{PursuerPolicy, SimConfig, DENSE_STEP_DEFAULT};
use tsavoid_core::{Error, Result, TimeScale};

/// Time-scale description: `generator` selects the family, the remaining
/// fields apply to the families that use them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScaleSpec {
    /// "reals" | "hgrid" | "periodic" | "explicit".
    pub generator: String,
    /// Grid spacing (hgrid).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Dense-run length (periodic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Gap length (periodic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Closed intervals [l, r] (explicit); points are [p, p].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<[f64; 2]>>,
    /// [t0, t1], required except for explicit (where it defaults to the
    /// hull of the segments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl TimeScaleSpec {
    pub fn build(&self) -> Result<TimeScale> {
        let window = |what: &str| -> Result<(f64, f64)> {
            self.window
                .map(|w| (w[0], w[1]))
                .ok_or_else(|| Error::Config(format!("timescale generator {what} needs a window")))
        };
        match self.generator.as_str() {
            "reals" => {
                let (t0, t1) = window("reals")?;
                TimeScale::reals(t0, t1)
            }
            "hgrid" => {
                let h = self
                    .h
                    .ok_or_else(|| Error::Config("hgrid generator needs h".into()))?;
                let (t0, t1) = window("hgrid")?;
                TimeScale::h_grid(h, t0, t1)
            }
            "periodic" => {
                let a = self
                    .a
                    .ok_or_else(|| Error::Config("periodic generator needs a".into()))?;
                let b = self
                    .b
                    .ok_or_else(|| Error::Config("periodic generator needs b".into()))?;
                let (t0, t1) = window("periodic")?;
                TimeScale::periodic(a, b, t0, t1)
            }
            "explicit" => {
                let segments = self
                    .segments
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit generator needs segments".into()))?;
                let pairs: Vec<(f64, f64)> = segments.iter().map(|s| (s[0], s[1])).collect();
                TimeScale::explicit(&pairs)
            }
            other => Err(Error::Config(format!(
                "unknown timescale generator {other:?}; expected reals, hgrid, periodic, or explicit"
            ))),
        }
    }
}

/// Plant matrices (row-major) and the norm bounds on the two controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Avoidance set level a, safety-zone width epsilon, optional domain box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub a: f64,
    pub epsilon: f64,
    /// Per-coordinate [lo, hi]; omitted means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
}

/// Pursuer policy selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PursuerSpec {
    WorstCase,
    Random,
    Constant { value: Vec<f64> },
    Scripted { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Default for PursuerSpec {
    fn default() -> Self {
        PursuerSpec::WorstCase
    }
}

impl PursuerSpec {
    pub fn build(&self) -> PursuerPolicy {
        match self {
            PursuerSpec::WorstCase => PursuerPolicy::WorstCase,
            PursuerSpec::Random => PursuerPolicy::Random,
            PursuerSpec::Constant { value } => {
                PursuerPolicy::Constant(DVector::from_vec(value.clone()))
            }
            PursuerSpec::Scripted { times, values } => PursuerPolicy::Scripted {
                times: times.clone(),
                values: values.iter().map(|v| DVector::from_vec(v.clone())).collect(),
            },
        }
    }
}

/// Which evader law the run applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Stabilized,
    Pure,
}

impl ModeSpec {
    pub fn to_mode(self) -> StrategyMode {
        match self {
            ModeSpec::Stabilized => StrategyMode::Stabilized,
            ModeSpec::Pure => StrategyMode::Pure,
        }
    }
}

/// Verification grid sizes and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_angles")]
    pub angles: usize,
    #[serde(default = "default_pursuer_directions")]
    pub pursuer_directions: usize,
    #[serde(default = "default_verify_tol")]
    pub tolerance: f64,
}

fn default_levels() -> usize {
    40
}
fn default_angles() -> usize {
    40
}
fn default_pursuer_directions() -> usize {
    64
}
fn default_verify_tol() -> f64 {
    VERIFY_TOL
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            angles: default_angles(),
            pursuer_directions: default_pursuer_directions(),
            tolerance: default_verify_tol(),
        }
    }
}

impl VerifySpec {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            levels: self.levels,
            angles: self.angles,
        }
    }
}

fn default_dense_step() -> f64 {
    DENSE_STEP_DEFAULT
}
fn default_deadband() -> f64 {
    DEADBAND_DEFAULT
}
fn default_n_runs() -> usize {
    1
}

/// One run document. Unset optional fields take the documented defaults;
/// `TSAVOID_SEED` in the environment overrides `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub timescale: TimeScaleSpec,
    pub plant: PlantSpec,
    /// Feedback gain, evader_dim x state_dim.
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    /// Lyapunov right-hand side; identity when omitted.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
    pub problem: ProblemSpec,
    /// Initial states (simulate).
    #[serde(default)]
    pub x0: Vec<Vec<f64>>,
    #[serde(default)]
    pub pursuer: PursuerSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default = "default_dense_step")]
    pub dense_step: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_deadband")]
    pub deadband: f64,
    /// Graininess at which the strategy matrix Q is synthesized; default
    /// is the graininess at the window start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_mu: Option<f64>,
    /// Replaces the switching gain (normally ||D|| alpha2, or alpha1 in
    /// pure mode); mainly for studying sabotaged strategies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_override: Option<f64>,
    /// Runs per initial state (simulate); randomized policies get one RNG
    /// stream per run.
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn to_dmatrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{what} must have at least one row")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Config(format!(
            "{what} must have at least one column"
        )));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what} has a non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Ok(seed) = std::env::var("TSAVOID_SEED") {
            cfg.seed = seed
                .parse()
                .map_err(|e| Error::Config(format!("invalid TSAVOID_SEED {seed:?}: {e}")))?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.dense_step > 0.0) {
            return Err(Error::Config(format!(
                "dense_step must be positive, got {}",
                self.dense_step
            )));
        }
        if !(self.verify.tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "verify.tolerance must be nonnegative, got {}",
                self.verify.tolerance
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_timescale(&self) -> Result<TimeScale> {
        self.timescale.build()
    }

    pub fn build_plant(&self) -> Result<LinearPlant> {
        LinearPlant::new(
            to_dmatrix(&self.plant.a, "plant.A")?,
            to_dmatrix(&self.plant.b, "plant.B")?,
            to_dmatrix(&self.plant.c, "plant.C")?,
            self.plant.alpha1,
            self.plant.alpha2,
        )
    }

    pub fn k_matrix(&self) -> Result<DMatrix<f64>> {
        to_dmatrix(&self.k, "K")
    }

    pub fn m_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match &self.m {
            Some(rows) => to_dmatrix(rows, "M"),
            None => Ok(DMatrix::identity(n, n)),
        }
    }

    /// Graininess at which Q is synthesized: explicit override, else the
    /// graininess at the window start.
    pub fn strategy_mu(&self, ts: &TimeScale) -> Result<f64> {
        match self.strategy_mu {
            Some(mu) if mu >= 0.0 && mu.is_finite() => Ok(mu),
            Some(mu) => Err(Error::Config(format!(
                "strategy_mu must be a nonnegative number, got {mu}"
            ))),
            None => ts.graininess(ts.window().0),
        }
    }

    /// Synthesis at one graininess value.
    pub fn synthesize_at(&self, plant: &LinearPlant, mu: f64) -> Result<Synthesis> {
        let k = self.k_matrix()?;
        let m = self.m_matrix(plant.state_dim())?;
        synthesize(plant, &k, &m, mu, self.deadband)
    }

    /// Strategy actually applied in the loop: pure mode drops K and runs
    /// at magnitude alpha1; gain_override replaces the magnitude either
    /// way.
    pub fn applied_strategy(&self, plant: &LinearPlant, syn: &Synthesis) -> Result<StrategyParams> {
        let (k, gain) = match self.mode {
            ModeSpec::Stabilized => (syn.params.k.clone(), syn.params.gain),
            ModeSpec::Pure => (
                DMatrix::zeros(plant.evader_dim(), plant.state_dim()),
                plant.alpha1,
            ),
        };
        let gain = self.gain_override.unwrap_or(gain);
        StrategyParams::new(k, syn.params.q.clone(), syn.params.d.clone(), gain, self.deadband)
    }

    /// Avoidance problem around the synthesized Q.
    pub fn build_problem(&self, q: DMatrix<f64>) -> Result<AvoidanceProblem> {
        match &self.problem.domain {
            Some(bounds) => AvoidanceProblem::new(
                q,
                self.problem.a,
                self.problem.epsilon,
                bounds.iter().map(|b| (b[0], b[1])).collect(),
            ),
            None => AvoidanceProblem::unbounded(q, self.problem.a, self.problem.epsilon),
        }
    }

    /// Simulation setup for initial state `index`.
    pub fn sim_config(&self, index: usize) -> Result<SimConfig> {
        let x0 = self
            .x0
            .get(index)
            .ok_or_else(|| Error::Config(format!("no initial state at index {index}")))?;
        let ts = self.build_timescale()?;
        let plant = self.build_plant()?;
        let mu = self.strategy_mu(&ts)?;
        let syn = self.synthesize_at(&plant, mu)?;
        let strategy = self.applied_strategy(&plant, &syn)?;
        let problem = self.build_problem(strategy.q.clone())?;
        Ok(SimConfig {
            plant,
            strategy,
            problem,
            ts,
            x0: DVector::from_vec(x0.clone()),
            policy: self.pursuer.build(),
            dense_step: self.dense_step,
            seed: self.seed,
        })
    }
}

/// Row-major copy of a matrix for JSON output.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
