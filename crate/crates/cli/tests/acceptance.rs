//! Acceptance gate: one test per release criterion, each printing a
//! single PASS line with the measured figures. Criteria 1-5, 7, 8 drive
//! the library directly; 6 and 9 drive the installed binary.

use std::process::Output;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use tsavoid_core::avoidance::{
    synthesize, AvoidanceProblem, LinearPlant, DEADBAND_DEFAULT,
};
use tsavoid_core::calculus::{
    chain_rule_delta, delta_derivative, delta_integral, ScalarSignal, SmoothMap,
};
use tsavoid_core::inclusion::{extract_along_trajectory, lex_min, ControlGrid, FinitePointSet};
use tsavoid_core::linalg::{lyapunov_solve, q_of_mu_formula, singular_directions, transition_matrix};
use tsavoid_core::simulator::{simulate_summary, PursuerPolicy, SimConfig, Verdict};
use tsavoid_core::TimeScale;

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

fn closed_loop() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0])
}

#[test]
fn criterion_1_reference_lyapunov_solutions() {
    let started = Instant::now();
    let a_cl = closed_loop();
    let m = DMatrix::identity(2, 2);
    let cases: [(f64, [f64; 4]); 3] = [
        (0.0, [1.5, -0.5, -0.5, 1.0]),
        (1.0, [6.0 / 7.0, -2.0 / 7.0, -2.0 / 7.0, 3.0 / 7.0]),
        (2.0, [11.0 / 18.0, -2.0 / 9.0, -2.0 / 9.0, 5.0 / 18.0]),
    ];
    let mut worst = 0.0f64;
    for (mu, exact) in cases {
        let q = lyapunov_solve(&a_cl, &m, mu).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &exact);
        let err = (&q - &want).abs().max();
        assert!(err <= 1e-12, "mu = {mu}: |Q - exact| = {err:e}");
        worst = worst.max(err);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "PASS criterion 1: reference Q at mu=0,1,2 within 1e-12 (worst {worst:.2e}, {:.3}s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_solver_matches_closed_formula() {
    let a_cl = closed_loop();
    let m = DMatrix::identity(2, 2);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mu: f64 = rng.gen_range(0.0..10.0);
        if mu == 0.0 {
            continue;
        }
        let q = lyapunov_solve(&a_cl, &m, mu).unwrap();
        let formula = q_of_mu_formula(mu);
        let err = (&q - &formula).abs().max();
        assert!(err <= 1e-9, "mu = {mu}: |Q - formula| = {err:e}");
        worst = worst.max(err);
    }
    println!("PASS criterion 2: solver matches closed formula on 200 random mu in (0,10) (worst {worst:.2e})");
}

#[test]
fn criterion_3_singular_lines() {
    let plant = example_plant();
    let a_cl = closed_loop();
    let m = DMatrix::identity(2, 2);
    // Line c1 x1 = c2 x2 has direction (c2, c1).
    let lines: [(f64, (f64, f64)); 3] = [(0.0, (2.0, 1.0)), (1.0, (3.0, 2.0)), (2.0, (5.0, 4.0))];
    let mut worst = 1.0f64;
    for (mu, dir) in lines {
        let q = lyapunov_solve(&a_cl, &m, mu).unwrap();
        let basis = singular_directions(&q, &plant.b).unwrap();
        assert_eq!(basis.ncols(), 1, "mu = {mu}: singular set must be a line");
        let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
        let cosine = (basis[(0, 0)] * dir.0 + basis[(1, 0)] * dir.1).abs() / norm;
        assert!(cosine >= 1.0 - 1e-9, "mu = {mu}: cosine = {cosine}");
        worst = worst.min(cosine);
    }
    println!("PASS criterion 3: singular lines x1=2x2, 2x1=3x2, 4x1=5x2 (worst cosine 1-{:.2e})", 1.0 - worst);
}

/// Reference strategy and problem on one time scale; Q synthesized at the
/// graininess of the window start.
fn example_sim(ts: TimeScale, x0: DVector<f64>, policy: PursuerPolicy, seed: u64) -> SimConfig {
    let plant = example_plant();
    let k = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
    let mu0 = ts.graininess(ts.window().0).unwrap();
    let syn = synthesize(&plant, &k, &DMatrix::identity(2, 2), mu0, DEADBAND_DEFAULT).unwrap();
    let problem = AvoidanceProblem::unbounded(syn.params.q.clone(), 1.0, 1.0).unwrap();
    SimConfig {
        plant,
        strategy: syn.params,
        problem,
        ts,
        x0,
        policy,
        dense_step: 1e-3,
        seed,
    }
}

/// 100 starts rejection-sampled from the safety zone 1 < x^T Q x < 2.
fn zone_starts(problem: &AvoidanceProblem, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(100);
    while starts.len() < 100 {
        let x = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        let v = problem.value(&x);
        if v > problem.level + 1e-6 && v < problem.level + problem.epsilon - 1e-6 {
            starts.push(x);
        }
    }
    starts
}

/// Worst-case plus 100 random pursuers from each start; returns the
/// worst per-step V margin and the worst rate of V seen anywhere.
fn sweep(base: &SimConfig) -> (f64, f64) {
    let starts = zone_starts(&base.problem, 7);
    let mut min_step = f64::INFINITY;
    let mut min_dv = f64::INFINITY;
    for (i, x0) in starts.iter().enumerate() {
        for j in 0..101u64 {
            let cfg = SimConfig {
                x0: x0.clone(),
                policy: if j == 0 {
                    PursuerPolicy::WorstCase
                } else {
                    PursuerPolicy::Random
                },
                seed: i as u64 * 101 + j,
                ..base.clone()
            };
            let s = simulate_summary(&cfg).unwrap();
            assert_eq!(
                s.verdict,
                Verdict::Avoided,
                "start {i} policy {j}: {:?}",
                s.verdict
            );
            min_step = min_step.min(s.min_v_step_rel);
            min_dv = min_dv.min(s.min_dv);
        }
    }
    (min_step, min_dv)
}

#[test]
fn criterion_4_avoidance_on_the_integer_grid() {
    let started = Instant::now();
    let ts = TimeScale::integers(0.0, 50.0).unwrap();
    let base = example_sim(ts, DVector::zeros(2), PursuerPolicy::WorstCase, 0);
    let (min_step, _) = sweep(&base);
    assert!(min_step >= -1e-7, "worst per-step V margin {min_step:e}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "PASS criterion 4: 0 entries in 10100 integer-grid runs, V-step margin {min_step:.2e} (runtime {:.1}s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_5_avoidance_on_dense_scales() {
    let started = Instant::now();
    let mut reported = Vec::new();
    for (name, ts) in [
        ("R", TimeScale::reals(0.0, 20.0).unwrap()),
        ("P_{1,2}", TimeScale::periodic(1.0, 2.0, 0.0, 20.0).unwrap()),
    ] {
        let base = example_sim(ts, DVector::zeros(2), PursuerPolicy::WorstCase, 0);
        let (_, min_dv) = sweep(&base);
        assert!(min_dv >= -1e-6, "{name}: min DV = {min_dv:e}");
        reported.push(format!("{name} min DV {min_dv:.3}"));
    }
    println!(
        "PASS criterion 5: 0 entries in 2x10100 dense-scale runs ({}) (runtime {:.1}s)",
        reported.join(", "),
        started.elapsed().as_secs_f64()
    );
}

fn tsavoid(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_tsavoid"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn example_config_json(timescale: &str, extra: &str) -> String {
    format!(
        r#"{{
  "timescale": {timescale},
  "plant": {{"A": [[0,1],[0,0]], "B": [[0],[1]], "C": [[0],[1]], "alpha1": 1.0, "alpha2": 1.0}},
  "K": [[-1,1]],
  "problem": {{"a": 1.0, "epsilon": 1.0}}{extra}
}}"#
    )
}

#[test]
fn criterion_6_verifier_passes_and_flips() {
    let dir = tempfile::tempdir().unwrap();
    let scales = [
        ("reals", r#"{"generator": "reals", "window": [0, 20]}"#),
        ("Z", r#"{"generator": "hgrid", "h": 1.0, "window": [0, 50]}"#),
        ("P_{1,2}", r#"{"generator": "periodic", "a": 1.0, "b": 2.0, "window": [0, 20]}"#),
    ];
    let mut margins = Vec::new();
    for (name, ts) in scales {
        let path = dir.path().join(format!("{name}.json").replace(['{', '}', ','], "_"));
        std::fs::write(&path, example_config_json(ts, "")).unwrap();
        let out = tsavoid(&["verify", "-c", path.to_str().unwrap()], &[]);
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}: {stdout}");
        let margin: f64 = stdout
            .lines()
            .find_map(|l| l.strip_prefix("condition (ii) worst margin: "))
            .expect("margin line")
            .parse()
            .unwrap();
        assert!(margin >= -1e-8, "{name}: margin {margin}");
        margins.push(format!("{name} {margin:.3}"));
    }

    // Breaking alpha1 >= ||D|| alpha2 in pure mode must flip to FAIL
    // with a printed witness.
    let path = dir.path().join("sabotaged.json");
    let cfg = example_config_json(
        r#"{"generator": "reals", "window": [0, 20]}"#,
        r#", "mode": "pure""#,
    )
    .replace(r#""alpha1": 1.0"#, r#""alpha1": 0.5"#);
    std::fs::write(&path, cfg).unwrap();
    let out = tsavoid(&["verify", "-c", path.to_str().unwrap()], &[]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(5), "sabotage must exit 5: {stdout}");
    assert!(stdout.contains("witness:"), "witness missing: {stdout}");
    println!(
        "PASS criterion 6: verifier passes on reals/Z/P_{{1,2}} (condition-ii margins {}), sabotaged pure mode exits 5 with witness",
        margins.join(", ")
    );
}

#[test]
fn criterion_7_filippov_round_trip() {
    // Scattered trajectory on [0,60]_Z driven by piecewise-constant
    // controls from a 9-point grid.
    let plant = example_plant();
    let grid_values: Vec<DVector<f64>> = (0..9)
        .map(|i| DVector::from_vec(vec![-2.0 + 0.5 * i as f64]))
        .collect();
    let grid = ControlGrid::new(grid_values.clone(), 4).unwrap();
    let f = |_t: f64, x: &DVector<f64>, w: &DVector<f64>| &plant.a * x + &plant.b * w;
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut x = DVector::from_vec(vec![1.0, 0.0]);
    let mut samples = Vec::new();
    let mut applied = Vec::new();
    for k in 0..60 {
        let w = &grid_values[rng.gen_range(0..9)];
        let xd = f(k as f64, &x, w);
        samples.push((k as f64, x.clone(), xd.clone()));
        applied.push(w.clone());
        x += xd;
    }
    let (extracted, mismatches) = extract_along_trajectory(&f, &grid, &samples, 1e-7);
    let recovered = extracted.iter().zip(&applied).filter(|(e, a)| e == a).count();
    assert!(
        recovered as f64 >= 0.99 * samples.len() as f64,
        "recovered {recovered}/{}",
        samples.len()
    );
    assert_eq!(mismatches, 0);

    // Lexicographic selection against a brute-force pairwise oracle.
    fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
        for i in 0..a.len() {
            if a[i] < b[i] {
                return true;
            }
            if a[i] > b[i] {
                return false;
            }
        }
        false
    }
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    for case in 0..1000 {
        let dim = rng.gen_range(1..=4);
        let size = rng.gen_range(1..=20);
        let pts: Vec<DVector<f64>> = (0..size)
            .map(|_| {
                // Half-integer coordinates force plenty of ties.
                DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-4i32..=4) as f64 * 0.5))
            })
            .collect();
        let set = FinitePointSet::new(pts.clone()).unwrap();
        let got = lex_min(&set);
        let want = pts
            .iter()
            .fold(None::<&DVector<f64>>, |best, p| match best {
                Some(b) if !lex_less(p, b) => Some(b),
                _ => Some(p),
            })
            .unwrap();
        assert_eq!(&got, want, "case {case}");
    }
    println!(
        "PASS criterion 7: {recovered}/60 controls recovered on the scattered trajectory, lex_min matches brute force on 1000 sets"
    );
}

#[test]
fn criterion_8_calculus_kernel() {
    // Integral of t over [0,3]_Z is exactly 0 + 1 + 2.
    let ts = TimeScale::integers(0.0, 3.0).unwrap();
    let f = ScalarSignal::new(|t: f64| t);
    let integral = delta_integral(&f, &ts, 0.0, 3.0, 1e-3).unwrap();
    assert_eq!(integral, 3.0);

    // Chain rule against the direct derivative of the composition.
    let mut worst = 0.0f64;
    for ts in [
        TimeScale::integers(0.0, 6.0).unwrap(),
        TimeScale::h_grid(0.5, 0.0, 6.0).unwrap(),
        TimeScale::reals(0.0, 6.0).unwrap(),
    ] {
        let g = ScalarSignal::with_derivative(|t: f64| 0.3 * t * t + 0.5 * t, |t: f64| 0.6 * t + 0.5);
        let fmap = SmoothMap::new(|x: f64| x * x * x - 2.0 * x, |x: f64| 3.0 * x * x - 2.0);
        for t in [0.0, 1.0, 2.5, 4.0] {
            if !ts.contains(t) {
                continue;
            }
            let via_chain = chain_rule_delta(&fmap, &g, &ts, t, 16, 1e-6).unwrap();
            let composed = ScalarSignal::new(|s: f64| {
                let gs = 0.3 * s * s + 0.5 * s;
                gs * gs * gs - 2.0 * gs
            });
            let direct = delta_derivative(&composed, &ts, t, 1e-6).unwrap();
            let err = (via_chain - direct).abs();
            assert!(err <= 1e-6, "t = {t}: chain {via_chain} vs direct {direct}");
            worst = worst.max(err);
        }
    }

    // Transition-matrix cocycle identity on the alternating scale.
    let ts = TimeScale::periodic(1.0, 2.0, 0.0, 10.0).unwrap();
    let a = example_plant().a;
    let phi_20 = transition_matrix(&a, &ts, 0.0, 7.0, 1e-3).unwrap();
    let phi_21 = transition_matrix(&a, &ts, 3.5, 7.0, 1e-3).unwrap();
    let phi_10 = transition_matrix(&a, &ts, 0.0, 3.5, 1e-3).unwrap();
    let cocycle_err = (&phi_21 * &phi_10 - &phi_20).abs().max();
    assert!(cocycle_err <= 1e-8, "cocycle residual {cocycle_err:e}");
    println!(
        "PASS criterion 8: exact integer-grid integral, chain rule within 1e-6 (worst {worst:.2e}), cocycle residual {cocycle_err:.2e}"
    );
}

#[test]
fn criterion_9_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        example_config_json(
            r#"{"generator": "periodic", "a": 1.0, "b": 2.0, "window": [0, 10]}"#,
            r#", "x0": [[1.5, 0.5], [-1.2, 0.3]], "pursuer": {"policy": "random"}, "seed": 421"#,
        ),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let outdir = dir.path().join(run);
        let out = tsavoid(
            &["simulate", "-c", path.to_str().unwrap(), "-d", outdir.to_str().unwrap()],
            &[],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let mut bytes = Vec::new();
        for state in ["state_000.csv", "state_001.csv"] {
            bytes.extend(std::fs::read(outdir.join(state)).unwrap());
        }
        bytes.extend(out.stdout);
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1], "reruns must be byte-identical");
    println!(
        "PASS criterion 9: repeated simulate runs with a fixed seed are byte-identical ({} bytes compared)",
        outputs[0].len()
    );
}
