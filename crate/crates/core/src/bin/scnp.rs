use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scnp::harness::{
    compare_with_reference, exact_duality_map, skewed_duality_map, write_trace, Battery, HarnessError, ProblemFile,
    COMPONENTS,
};
use scnp::solver::RunStatus;

/// Hybrid projection solver for split common null point problems in l_p spaces.
#[derive(Parser)]
#[command(name = "scnp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file, or every `*.json` in a directory.
    Run {
        #[arg(long)]
        problem: PathBuf,
        /// CSV trace file; a directory when `--problem` is one.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Compare the solver with the scalar reference recurrence.
    OracleExample {
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        x1: f64,
    },
    /// Run the randomized property battery.
    CheckProperties {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_BUDGET: u8 = 2;

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run {
            problem,
            trace,
            max_iters,
            tol,
        } => cli_run(&problem, trace.as_deref(), max_iters, tol),
        Command::OracleExample { steps, x1 } => cli_oracle(steps, x1),
        Command::CheckProperties {
            seed,
            cases,
            inject_fault,
        } => {
            let duality = if inject_fault {
                skewed_duality_map
            } else {
                exact_duality_map
            };
            let report = Battery::new(seed).with_cases(cases).with_duality(duality).run();
            print!("{}", report.render());
            if report.all_passed() {
                EXIT_OK
            } else {
                EXIT_ERROR
            }
        }
    };
    ExitCode::from(code)
}

fn cli_run(problem: &Path, trace: Option<&Path>, max_iters: Option<usize>, tol: Option<f64>) -> u8 {
    if !problem.is_dir() {
        return report(problem, solve_one(problem, trace, max_iters, tol));
    }
    let mut files: Vec<PathBuf> = match std::fs::read_dir(problem) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => {
            eprintln!("error: cannot list {}: {e}", problem.display());
            return EXIT_ERROR;
        }
    };
    files.sort();
    if let Some(dir) = trace {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: cannot create trace directory {}: {e}", dir.display());
            return EXIT_ERROR;
        }
    }
    let outcomes: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|file| {
                let trace_path = trace.map(|dir| dir.join(file.file_stem().unwrap_or_default()).with_extension("csv"));
                scope.spawn(move || solve_one(file, trace_path.as_deref(), max_iters, tol))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    files
        .iter()
        .zip(outcomes)
        .map(|(file, outcome)| report(file, outcome))
        .max()
        .map_or(EXIT_OK, |worst| {
            if worst == EXIT_ERROR || worst == EXIT_OK {
                worst
            } else {
                EXIT_BUDGET
            }
        })
}

struct Solved {
    status: RunStatus,
    iterations: usize,
    point: Vec<f64>,
}

fn solve_one(
    path: &Path,
    trace: Option<&Path>,
    max_iters: Option<usize>,
    tol: Option<f64>,
) -> Result<Solved, HarnessError> {
    let file = ProblemFile::load(path)?;
    let (inst, mut stop) = file.to_instance().map_err(|source| HarnessError::Invalid {
        path: path.to_path_buf(),
        source,
    })?;
    stop.max_iters = max_iters.unwrap_or(stop.max_iters);
    stop.tol = tol.unwrap_or(stop.tol);
    let outcome = inst.run(&stop).map_err(|source| HarnessError::Solver {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(trace) = trace {
        let trace_err = |message: String| HarnessError::Trace {
            path: trace.to_path_buf(),
            message,
        };
        let out = File::create(trace).map_err(|e| trace_err(e.to_string()))?;
        write_trace(BufWriter::new(out), &outcome.states).map_err(|e| trace_err(e.to_string()))?;
    }
    Ok(Solved {
        status: outcome.status,
        iterations: outcome.states.len(),
        point: outcome.final_point().map(|x| x.as_slice().to_vec()).unwrap_or_default(),
    })
}

fn report(path: &Path, outcome: Result<Solved, HarnessError>) -> u8 {
    match outcome {
        Ok(s) => {
            let point: Vec<String> = s.point.iter().map(|v| format!("{v:.9e}")).collect();
            let (what, code) = match s.status {
                RunStatus::Converged => ("converged", EXIT_OK),
                RunStatus::BudgetExhausted => ("budget exhausted", EXIT_BUDGET),
            };
            println!(
                "{}: {what} after {} iterations, x = [{}]",
                path.display(),
                s.iterations,
                point.join(", ")
            );
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn cli_oracle(steps: usize, x1: f64) -> u8 {
    if !(0.0..=1.0).contains(&x1) {
        eprintln!("error: --x1 must lie in [0, 1], got {x1}");
        return EXIT_ERROR;
    }
    match compare_with_reference(x1, steps) {
        Ok(c) => {
            println!("reference example, x1 = {x1}, {steps} steps");
            for (name, dev) in COMPONENTS.iter().zip(c.max_deviation) {
                println!("  {name:<10} max deviation {dev:.3e}");
            }
            let ok = c.worst() <= 1e-9;
            println!("max deviation {:.3e}: {}", c.worst(), if ok { "PASS" } else { "FAIL" });
            if ok {
                EXIT_OK
            } else {
                EXIT_ERROR
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
