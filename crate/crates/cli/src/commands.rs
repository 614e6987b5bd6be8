//! Command implementations. Each returns the process exit code:
//! 0 success, 1 configuration error, 2 matching failure, 3 singular
//! Lyapunov map, 4 avoidance violated, 5 condition failure, 6 reference
//! reproduction mismatch. Output is deterministic given config + seed.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use tsavoid_core::avoidance::{verify_conditions, LinearPlant, Synthesis};
use tsavoid_core::simulator::{bundle, trajectory_json, write_csv, Trajectory, Verdict};
use tsavoid_core::{Error, Result};

use crate::config::{matrix_rows, RunConfig};

/// Exit code for a failed `Result`, per the command contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MatchingViolation { .. } => 2,
        Error::SingularLyapunov { .. } => 3,
        _ => 1,
    }
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn synthesis_block(mu: f64, syn: &Synthesis) -> String {
    let eigs: Vec<String> = syn
        .hilger
        .eigenvalues
        .iter()
        .map(|l| format!("{}{}{}i", l.re, if l.im < 0.0 { "" } else { "+" }, l.im))
        .collect();
    let inside: Vec<String> = syn.hilger.inside.iter().map(|b| b.to_string()).collect();
    format!(
        "mu = {mu}\n  Q = {}\n  D = {}\n  gain = {}\n  Hilger check of -(A+BK): lambda = {}; inside = [{}]; {}\n",
        format_matrix(&syn.params.q),
        format_matrix(&syn.params.d),
        syn.params.gain,
        eigs.join(", "),
        inside.join(", "),
        syn.hilger.region,
    )
}

/// Print Q, D, gain, and Hilger diagnostics for every distinct graininess
/// value of the window; optionally write the same data as JSON.
pub fn cmd_synthesize(config: &Path, output: Option<&Path>) -> Result<i32> {
    let cfg = RunConfig::from_path(config)?;
    let plant = cfg.build_plant()?;
    let ts = cfg.build_timescale()?;
    let mut blocks = Vec::new();
    for mu in ts.graininess_values() {
        let syn = cfg.synthesize_at(&plant, mu)?;
        print!("{}", synthesis_block(mu, &syn));
        blocks.push(serde_json::json!({
            "mu": mu,
            "Q": matrix_rows(&syn.params.q),
            "D": matrix_rows(&syn.params.d),
            "gain": syn.params.gain,
            "hilger": {
                "eigenvalues": syn.hilger.eigenvalues.iter()
                    .map(|l| [l.re, l.im]).collect::<Vec<_>>(),
                "inside": syn.hilger.inside,
                "all_inside": syn.hilger.all_inside,
                "region": syn.hilger.region,
            },
        }));
    }
    if let Some(path) = output {
        let doc = serde_json::json!({ "per_graininess": blocks });
        std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(0)
}

fn run_extremes(tr: &Trajectory) -> (f64, f64) {
    let min_v = tr.records.iter().map(|r| r.v).fold(f64::INFINITY, f64::min);
    let min_dv = tr.records.iter().map(|r| r.dv).fold(f64::INFINITY, f64::min);
    (min_v, min_dv)
}

/// Simulate every initial state (n_runs randomizations each), write one
/// CSV + JSON per state, and print a verdict line per run. Exit 4 unless
/// every run avoided the set.
pub fn cmd_simulate(config: &Path, outdir: &Path) -> Result<i32> {
    let cfg = RunConfig::from_path(config)?;
    if cfg.x0.is_empty() {
        return Err(Error::Config("x0 list is empty; nothing to simulate".into()));
    }
    std::fs::create_dir_all(outdir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", outdir.display())))?;
    let echo = serde_json::to_value(&cfg).unwrap();
    let mut all_avoided = true;
    for i in 0..cfg.x0.len() {
        let sim = cfg.sim_config(i)?;
        let b = bundle(&sim, cfg.n_runs)?;
        for (j, tr) in b.trajectories.iter().enumerate() {
            let (min_v, min_dv) = run_extremes(tr);
            println!("state {i} run {j}: {} min_V={min_v} min_DV={min_dv}", tr.verdict);
            if tr.verdict != Verdict::Avoided {
                all_avoided = false;
            }
        }
        let csv_path = outdir.join(format!("state_{i:03}.csv"));
        let mut file = std::fs::File::create(&csv_path)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", csv_path.display())))?;
        write_csv(&b.trajectories[0], &mut file)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", csv_path.display())))?;

        let mut doc = trajectory_json(&b.trajectories[0], echo.clone());
        doc["bundle"] = serde_json::json!({
            "n_runs": cfg.n_runs,
            "entered_count": b.summary.entered_count,
            "left_domain_count": b.summary.left_domain_count,
            "min_V": b.summary.min_v,
        });
        let json_path = outdir.join(format!("state_{i:03}.json"));
        let mut file = std::fs::File::create(&json_path)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", json_path.display())))?;
        file.write_all(serde_json::to_string_pretty(&doc).unwrap().as_bytes())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", json_path.display())))?;
    }
    Ok(if all_avoided { 0 } else { 4 })
}

/// Check both avoidance conditions on the configured problem; print the
/// margins, and the witness on failure. Exit 5 when a condition fails.
pub fn cmd_verify(config: &Path) -> Result<i32> {
    let cfg = RunConfig::from_path(config)?;
    let plant = cfg.build_plant()?;
    let ts = cfg.build_timescale()?;
    let mu = cfg.strategy_mu(&ts)?;
    let syn = cfg.synthesize_at(&plant, mu)?;
    let sp = cfg.applied_strategy(&plant, &syn)?;
    let problem = cfg.build_problem(sp.q.clone())?;
    let report = verify_conditions(
        &plant,
        &sp,
        cfg.mode.to_mode(),
        &problem,
        &ts,
        &cfg.verify.grid(),
        cfg.verify.pursuer_directions,
        cfg.verify.tolerance,
    )?;
    println!("strategy graininess: {mu}");
    println!("condition (i) margin: {}", report.condition_i_margin);
    println!("condition (ii) worst margin: {}", report.condition_ii_margin);
    println!("points checked: {}", report.points_checked);
    for note in &report.notes {
        println!("note: {note}");
    }
    if report.pass {
        println!("PASS (tolerance {})", report.tolerance);
        Ok(0)
    } else {
        let w = &report.witness;
        println!("FAIL (tolerance {})", report.tolerance);
        let x: Vec<String> = w.x.iter().map(|v| format!("{v}")).collect();
        let u2: Vec<String> = w.u2.iter().map(|v| format!("{v}")).collect();
        println!(
            "witness: t={} mu={} x=[{}] u2=[{}] DV={}",
            w.t,
            w.mu,
            x.join(", "),
            u2.join(", "),
            w.dv
        );
        Ok(5)
    }
}

/// One reference branch: graininess, exact Q as integer fractions
/// (row-major upper triangle q11,q12,q22), and the singular line
/// c1 x1 = c2 x2.
struct Branch {
    scale: &'static str,
    mu: f64,
    q11: (i64, i64),
    q12: (i64, i64),
    q22: (i64, i64),
    line: (i64, i64),
}

const BRANCHES: [Branch; 4] = [
    Branch { scale: "R (continuous)", mu: 0.0, q11: (3, 2), q12: (-1, 2), q22: (1, 1), line: (1, 2) },
    Branch { scale: "Z (unit grid)", mu: 1.0, q11: (6, 7), q12: (-2, 7), q22: (3, 7), line: (2, 3) },
    Branch { scale: "P_{1,2}, dense branch", mu: 0.0, q11: (3, 2), q12: (-1, 2), q22: (1, 1), line: (1, 2) },
    Branch { scale: "P_{1,2}, scattered branch", mu: 2.0, q11: (11, 18), q12: (-2, 9), q22: (5, 18), line: (4, 5) },
];

fn frac(f: (i64, i64)) -> String {
    if f.1 == 1 {
        format!("{}", f.0)
    } else {
        format!("{}/{}", f.0, f.1)
    }
}

fn line_eq(line: (i64, i64)) -> String {
    let side = |c: i64, x: &str| if c == 1 { x.to_string() } else { format!("{c} {x}") };
    format!("{} = {}", side(line.0, "x1"), side(line.1, "x2"))
}

/// Reproduce the double-integrator reference controllers on the three
/// showcase time scales; every printed value is checked against the
/// exact fractions to 1e-12, and any deviation exits with code 6.
pub fn cmd_reproduce_paper() -> Result<i32> {
    let plant = LinearPlant::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        1.0,
        1.0,
    )?;
    let k = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
    let m = DMatrix::identity(2, 2);
    let mut mismatches: Vec<String> = Vec::new();
    for br in &BRANCHES {
        let syn = tsavoid_core::avoidance::synthesize(&plant, &k, &m, br.mu, 1e-9)?;
        let q = &syn.params.q;
        println!("== {} (mu = {}) ==", br.scale, br.mu);
        let entries = [
            ("q11", q[(0, 0)], br.q11),
            ("q12", q[(0, 1)], br.q12),
            ("q21", q[(1, 0)], br.q12),
            ("q22", q[(1, 1)], br.q22),
        ];
        println!("Q (row-major):");
        for (name, got, exact) in entries {
            let want = exact.0 as f64 / exact.1 as f64;
            println!("  {name} = {got:.16e}  (= {})", frac(exact));
            if (got - want).abs() > 1e-12 {
                mismatches.push(format!(
                    "{}: {name} = {got:.16e}, expected {} (|diff| = {:e})",
                    br.scale,
                    frac(exact),
                    (got - want).abs()
                ));
            }
        }
        // Switching sign argument w(x) = (B^T Q x) = q12 x1 + q22 x2; its
        // zero set is the singular line of the strategy.
        let w = plant.b.transpose() * q;
        println!("strategy: u1 = K x + {} * w(x)/|w(x)|,  w(x) = w1 x1 + w2 x2:", syn.params.gain);
        for (name, got, exact) in [("w1", w[(0, 0)], br.q12), ("w2", w[(0, 1)], br.q22)] {
            let want = exact.0 as f64 / exact.1 as f64;
            println!("  {name} = {got:.16e}  (= {})", frac(exact));
            if (got - want).abs() > 1e-12 {
                mismatches.push(format!(
                    "{}: {name} = {got:.16e}, expected {} (|diff| = {:e})",
                    br.scale,
                    frac(exact),
                    (got - want).abs()
                ));
            }
        }
        println!("singular line: {}", line_eq(br.line));
    }
    if mismatches.is_empty() {
        println!("all values match the exact fractions to 1e-12");
        Ok(0)
    } else {
        for m in &mismatches {
            println!("MISMATCH {m}");
        }
        Ok(6)
    }
}
