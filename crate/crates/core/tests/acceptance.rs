//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; the process exits nonzero if
//! any of them fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scnp::convex_sets::{generalized_projection, ConvexSet, Halfspace};
use scnp::harness::{compare_with_reference, first_index_below, reference_instance, Battery, ProblemFile};
use scnp::monotone::{generalized_resolvent, resolvent_residual, MonotoneOp};
use scnp::solver::StoppingRule;
use scnp::{SpaceGeometry, Vector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("1 reference example matches the scalar recurrence", golden_example),
        (
            "2 reference iterates reach |x_n| < 1e-3 on schedule",
            reference_convergence,
        ),
        ("3 property battery", property_battery),
        ("4 structural invariants on the 5x3 box SFP", structural_invariants),
        ("5 p = 1.5 projection and resolvent", non_hilbert_machinery),
        ("6 CLI contract", cli_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(note) => println!("PASS  {name} ({secs:.2} s): {note}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2} s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn problems_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems")
}

fn golden_example() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for x1 in [0.0, 0.25, 0.5, 1.0] {
        let c = compare_with_reference(x1, 1000).map_err(|e| e.to_string())?;
        ensure(c.worst() <= 1e-9, || format!("x1 = {x1}: deviation {:.3e}", c.worst()))?;
        worst = worst.max(c.worst());
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("max deviation {worst:.3e} over 4 starts x 1000 steps"))
}

fn reference_convergence() -> Outcome {
    let threshold = 1e-3;
    let oracle_n = first_index_below(1.0, threshold, 100_000)
        .map_err(|e| e.to_string())?
        .ok_or("recurrence never dropped below the threshold")?;
    let inst = reference_instance(1.0).map_err(|e| e.to_string())?;
    let stop = StoppingRule {
        tol: 0.0,
        max_iters: oracle_n + 10,
        ..Default::default()
    };
    let states = inst.run(&stop).map_err(|e| e.to_string())?.states;
    let solver_n = states
        .iter()
        .find(|st| st.x[0].abs() < threshold)
        .map(|st| st.n)
        .ok_or("solver never dropped below the threshold")?;
    ensure(solver_n.abs_diff(oracle_n) <= 1, || {
        format!("solver N = {solver_n}, oracle N = {oracle_n}")
    })?;
    let rises = states
        .windows(2)
        .filter(|w| w[1].x[0].abs() > w[0].x[0].abs() + 1e-15)
        .count();
    ensure(rises == 0, || format!("|x_n| increased {rises} times"))?;
    Ok(format!("oracle N = {oracle_n}, solver N = {solver_n}"))
}

fn property_battery() -> Outcome {
    let start = Instant::now();
    let report = Battery::new(1).run();
    let elapsed = start.elapsed();
    let short: Vec<&str> = report.rows.iter().filter(|r| r.cases < 1000).map(|r| r.name).collect();
    ensure(short.is_empty(), || format!("fewer than 1000 cases: {short:?}"))?;
    ensure(report.all_passed(), || {
        let failed: Vec<String> = report
            .rows
            .iter()
            .filter(|r| !r.passed())
            .map(|r| format!("{} ({})", r.name, r.first_failure.clone().unwrap_or_default()))
            .collect();
        failed.join("; ")
    })?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    let worst = report.rows.iter().map(|r| r.worst_ratio).fold(0.0, f64::max);
    Ok(format!(
        "{} properties, worst residual/tol {worst:.2e}",
        report.rows.len()
    ))
}

fn max_over(states: &[scnp::solver::IterateState], from: usize, f: impl Fn(&scnp::solver::IterateState) -> f64) -> f64 {
    states
        .iter()
        .filter(|st| (from..from + 10).contains(&st.n))
        .map(f)
        .fold(0.0, f64::max)
}

fn structural_invariants() -> Outcome {
    let file = ProblemFile::load(&problems_dir().join("sfp_box.json")).map_err(|e| e.to_string())?;
    let (inst, _) = file.to_instance().map_err(|e| e.to_string())?;
    let stop = StoppingRule {
        tol: 0.0,
        max_iters: 1000,
        ..Default::default()
    };
    let states = inst.run(&stop).map_err(|e| e.to_string())?.states;
    ensure(states.len() == 1000, || format!("only {} iterations", states.len()))?;
    let solution = Vector::zeros(3);
    let c = &inst.spec().c;
    for st in &states {
        for (k, cut) in st.cuts.iter().enumerate() {
            ensure(cut.contains(&st.x_next, 1e-8), || {
                format!(
                    "n = {}: x_(n+1) violates cut {k} by {:.3e}",
                    st.n,
                    cut.violation(&st.x_next)
                )
            })?;
            ensure(cut.contains(&solution, 1e-8), || {
                format!(
                    "n = {}: cut {k} excludes the solution by {:.3e}",
                    st.n,
                    cut.violation(&solution)
                )
            })?;
        }
        ensure(c.contains(&st.x_next, 1e-8).map_err(|e| e.to_string())?, || {
            format!("n = {}: x_(n+1) left C", st.n)
        })?;
    }
    for w in states.windows(2) {
        ensure(w[1].diagnostics.phi_x1 >= w[0].diagnostics.phi_x1 - 1e-10, || {
            format!(
                "phi(x_n, x_1) fell from {} to {} at n = {}",
                w[0].diagnostics.phi_x1, w[1].diagnostics.phi_x1, w[1].n
            )
        })?;
    }
    let step = (
        max_over(&states, 10, |s| s.diagnostics.step_norm),
        max_over(&states, 991, |s| s.diagnostics.step_norm),
    );
    let split = (
        max_over(&states, 10, |s| s.diagnostics.split_residual),
        max_over(&states, 991, |s| s.diagnostics.split_residual),
    );
    ensure(step.1 * 10.0 <= step.0, || {
        format!("step norm only fell from {:.3e} to {:.3e}", step.0, step.1)
    })?;
    ensure(split.1 * 10.0 <= split.0, || {
        format!("split residual only fell from {:.3e} to {:.3e}", split.0, split.1)
    })?;
    Ok(format!(
        "step norm {:.1}x lower, split residual {:.1}x lower",
        step.0 / step.1,
        split.0 / split.1
    ))
}

// Independent of the library: J_p and phi written out from their definitions.
fn lp(x: &[f64], p: f64) -> f64 {
    x.iter().map(|t| t.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn phi_direct(y: &[f64], x: &[f64], p: f64) -> f64 {
    let nx = lp(x, p);
    let pair: f64 = if nx == 0.0 {
        0.0
    } else {
        y.iter()
            .zip(x)
            .map(|(yi, xi)| yi * xi.signum() * xi.abs().powf(p - 1.0) * nx.powf(2.0 - p))
            .sum()
    };
    lp(y, p).powi(2) - 2.0 * pair + nx * nx
}

/// Brute-force minimum of `phi(., x)` over `<a, y> <= b`: a 21^3 grid that
/// shrinks around its best point until the spacing is below 1e-4.
fn grid_projection(x: &[f64], a: &[f64], b: f64, p: f64) -> f64 {
    let feasible = |y: &[f64]| y.iter().zip(a).map(|(s, t)| s * t).sum::<f64>() <= b;
    let mut center = [0.0; 3];
    let mut half = 2.0 * lp(x, 2.0) + b.abs() + 1.0;
    let mut best = f64::INFINITY;
    loop {
        let h = half / 10.0;
        let mut best_point = center;
        for i in -10..=10 {
            for j in -10..=10 {
                for k in -10..=10 {
                    let y = [
                        center[0] + i as f64 * h,
                        center[1] + j as f64 * h,
                        center[2] + k as f64 * h,
                    ];
                    if feasible(&y) {
                        let v = phi_direct(&y, x, p);
                        if v < best {
                            best = v;
                            best_point = y;
                        }
                    }
                }
            }
        }
        if h < 1e-4 {
            return best;
        }
        center = best_point;
        half = 3.0 * h;
    }
}

fn non_hilbert_machinery() -> Outcome {
    let p = 1.5;
    let g = SpaceGeometry::new(3, p).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst_gap = 0.0f64;
    let mut outside = 0;
    for case in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let set = ConvexSet::halfspaces(
            3,
            vec![Halfspace::new(Vector::from_row_slice(&a), b).map_err(|e| e.to_string())?],
        )
        .map_err(|e| e.to_string())?;
        outside += usize::from(x.iter().zip(&a).map(|(s, t)| s * t).sum::<f64>() > b);
        let y = generalized_projection(&Vector::from_row_slice(&x), &set, &g, 1e-12).map_err(|e| e.to_string())?;
        let lib = phi_direct(y.as_slice(), &x, p);
        let grid = grid_projection(&x, &a, b, p);
        let violation = y.dot(&Vector::from_row_slice(&a)) - b;
        ensure(violation <= 1e-9, || {
            format!("projection case {case} infeasible by {violation:.3e}")
        })?;
        let gap = (lib - grid).abs();
        ensure(gap <= 1e-3, || {
            format!("projection case {case}: phi {lib} vs grid {grid}")
        })?;
        worst_gap = worst_gap.max(gap);
    }

    ensure(outside >= 10, || {
        format!("only {outside} of 20 points start outside the halfspace")
    })?;

    let mut worst_res = 0.0f64;
    for case in 0..100 {
        let x = Vector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
        let r = rng.random_range(0.1..5.0);
        let op = if case % 2 == 0 {
            MonotoneOp::scaling(rng.random_range(0.1..5.0))
        } else {
            let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            MonotoneOp::linear_psd(&m * m.transpose())
        }
        .map_err(|e| e.to_string())?;
        let u = generalized_resolvent(&op, r, &x, &g, 1e-12).map_err(|e| format!("resolvent case {case}: {e}"))?;
        let res = resolvent_residual(&op, r, &x, &u, &g).map_err(|e| e.to_string())?;
        ensure(res <= 1e-8, || format!("resolvent case {case}: residual {res:.3e}"))?;
        worst_res = worst_res.max(res);
    }
    Ok(format!(
        "worst phi gap to grid {worst_gap:.2e} (20 cases, {outside} outside), worst resolvent residual {worst_res:.2e} (100 cases)"
    ))
}

fn scnp(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scnp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().ok_or("killed by a signal")?;
    Ok((code, String::from_utf8_lossy(&out.stderr).into_owned()))
}

fn cli_contract() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = |name: &str| tmp.path().join(name);
    let path_str = |p: &Path| p.to_string_lossy().into_owned();

    for (file, expected) in [("scalar_example", 0), ("sfp_1d", 0), ("sfp_box", 0)] {
        let problem = path_str(&problems_dir().join(format!("{file}.json")));
        let first = trace(&format!("{file}.1.csv"));
        let second = trace(&format!("{file}.2.csv"));
        for out in [&first, &second] {
            let (code, err) = scnp(&["run", "--problem", &problem, "--trace", &path_str(out)])?;
            ensure(code == expected, || {
                format!("{file}: exit {code}, expected {expected}: {err}")
            })?;
        }
        let (a, b) = (std::fs::read(&first), std::fs::read(&second));
        let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
        ensure(a == b, || format!("{file}: traces differ between runs"))?;
    }

    let short = trace("budget.csv");
    let problem = path_str(&problems_dir().join("sfp_box.json"));
    let (code, _) = scnp(&[
        "run",
        "--problem",
        &problem,
        "--max-iters",
        "10",
        "--trace",
        &path_str(&short),
    ])?;
    ensure(code == 2, || {
        format!("sfp_box with 10 iterations: exit {code}, expected 2")
    })?;
    let rows = std::fs::read_to_string(&short)
        .map_err(|e| e.to_string())?
        .lines()
        .count()
        - 1;
    ensure(rows == 10, || format!("budget trace has {rows} rows"))?;

    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, "{}").map_err(|e| e.to_string())?;
    let (code, err) = scnp(&["run", "--problem", &path_str(&empty)])?;
    ensure(code == 1 && err.contains("schema"), || {
        format!("empty problem: exit {code}, stderr {err:?}")
    })?;

    let mut rdr = csv::Reader::from_path(trace("scalar_example.1.csv")).map_err(|e| e.to_string())?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let n: f64 = rec[0].parse().map_err(|e| format!("{e}"))?;
        let x: f64 = rec[1].parse().map_err(|e| format!("{e}"))?;
        let z: f64 = rec[3].parse().map_err(|e| format!("{e}"))?;
        let want = 2.0 / 3.0 * (x + 1.0 / n);
        ensure((z - want).abs() <= 1e-12, || {
            format!("scalar example row {n}: z = {z}, want {want}")
        })?;
    }
    Ok("documented exit codes, reproducible traces, z-column closed form".into())
}
