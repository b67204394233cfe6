//! Subcommand implementations. Each returns the process exit code.

use std::path::{Path, PathBuf};

use robust_cbf::model::{check_jets_fd, AgentState};
use robust_cbf::oracle::{run_verify, worst_case_z, VerifyConfig};
use robust_cbf::rng::XorShift64Star;
use robust_cbf::sdp::{solve_safe_control, solve_safe_control_relaxed, SolveStatus};
use robust_cbf::sim::{run_simulation, safety_report};
use robust_cbf::Error;

use crate::config::RunConfig;
use crate::output::{trajectory_csv, trajectory_svg};

pub struct GlobalFlags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub svg: bool,
    pub dry_run: bool,
    pub slack_mode: bool,
}

fn vector_line(name: &str, v: &nalgebra::DVector<f64>) -> String {
    let body = v
        .iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ");
    format!("{name} = {body}")
}

/// One-shot solve at a state snapshot; exit 0 on Optimal, 2 on Infeasible,
/// 1 on errors.
pub fn cmd_solve(config_path: &Path, flags: &GlobalFlags) -> i32 {
    let assembled = (|| -> Result<_, String> {
        let cfg = RunConfig::load(config_path).map_err(|e| e.to_string())?;
        let model = cfg.model().map_err(|e| e.to_string())?;
        let state = cfg.state().map_err(|e| e.to_string())?;
        let gains = cfg.gains().map_err(|e| e.to_string())?;
        let est = cfg.estimate().map_err(|e| e.to_string())?;
        let opts = cfg.solver_options().map_err(|e| e.to_string())?;
        let slack = flags.slack_mode || cfg.slack_mode().map_err(|e| e.to_string())?;

        let jet_m = robust_cbf::model::eval_model_jet(&model, &state).map_err(|e| e.to_string())?;
        let jet_b =
            robust_cbf::model::eval_barrier_jet(&model, &state.xa).map_err(|e| e.to_string())?;
        let raw = robust_cbf::constraint::assemble_constraint(&jet_m, &jet_b, &gains)
            .map_err(|e| e.to_string())?;
        let tilde = raw.normalize(&est).map_err(|e| e.to_string())?;
        Ok((tilde, opts, slack))
    })();
    let (tilde, opts, slack) = match assembled {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };

    let solved = if slack {
        solve_safe_control_relaxed(&tilde, &opts)
    } else {
        solve_safe_control(&tilde, &opts)
    };
    let sol = match solved {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    println!("status = {}", sol.status);
    println!("{}", vector_line("u", &sol.u));
    println!("lambda = {:.6}", sol.lambda);
    println!("t = {:.6}", sol.t);
    println!("kkt_residual = {:.3e}", sol.kkt_residual);
    if let Some(r) = sol.slack {
        println!("slack = {r:.6}");
    }
    match sol.status {
        SolveStatus::Optimal => {
            println!("robust_margin = {:.6e}", worst_case_z(&tilde, &sol.u).value);
            0
        }
        SolveStatus::Infeasible => 2,
        SolveStatus::MaxIter | SolveStatus::NumericalFailure => 1,
    }
}

/// Closed-loop run with CSV (and optional SVG) output; exit 2 on setup
/// errors, 1 on other failures.
pub fn cmd_simulate(config_path: &Path, flags: &GlobalFlags) -> i32 {
    let cfg = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let mut scenario = match cfg.scenario() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(seed) = flags.seed {
        scenario.seed = seed;
    }
    if flags.slack_mode {
        scenario.slack_mode = true;
    }

    if let Err(e) = scenario.validate() {
        eprintln!("error: {e}");
        return 2;
    }
    if flags.dry_run {
        println!("config ok: {} steps at dt = {}", scenario.steps(), scenario.dt);
        return 0;
    }

    let log = match run_simulation(&scenario) {
        Ok(l) => l,
        Err(Error::Setup(msg)) => {
            eprintln!("error: setup error: {msg}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    let out_path = flags
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    if let Err(e) = std::fs::write(&out_path, trajectory_csv(&log)) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return 1;
    }
    println!("wrote {}", out_path.display());
    if flags.svg {
        let svg_path = out_path.with_extension("svg");
        if let Err(e) = std::fs::write(&svg_path, trajectory_svg(&log)) {
            eprintln!("error: cannot write {}: {e}", svg_path.display());
            return 1;
        }
        println!("wrote {}", svg_path.display());
    }

    match safety_report(&log) {
        Ok(report) => {
            println!("records = {}", report.records);
            println!("min_h = {:.6e}", report.min_h);
            println!("min_margin = {:.6e}", report.min_margin);
            println!("infeasible_steps = {}", report.infeasible_steps);
            println!("eta_monotone = {}", report.eta_monotone);
            println!("final_eta = {:.6}", report.final_eta);
            println!(
                "{}",
                vector_line("final_theta_hat", &report.final_theta_hat)
            );
            println!("containment_violations = {}", report.containment_violations);
            println!("degraded = {}", report.degraded);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Cross-method verification on random instances; exit 0 iff every check
/// passes.
pub fn cmd_verify(instances: usize, seed: u64, p: usize, m: usize) -> i32 {
    if instances == 0 || p == 0 || m == 0 {
        eprintln!("error: instance count and dimensions must be at least 1");
        return 1;
    }
    let cfg = VerifyConfig {
        instances,
        seed,
        p_choices: vec![p],
        m,
        ..VerifyConfig::default()
    };
    let report = run_verify(&cfg);
    print!("{report}");
    if report.all_pass() {
        0
    } else {
        1
    }
}

/// Finite-difference validation of the configured model at random states.
pub fn cmd_check_derivs(config_path: &Path, flags: &GlobalFlags) -> i32 {
    let prepared = (|| -> Result<_, String> {
        let cfg = RunConfig::load(config_path).map_err(|e| e.to_string())?;
        let seed = flags.seed.map_or_else(|| cfg.seed().map_err(|e| e.to_string()), Ok)?;
        let model = cfg.model().map_err(|e| e.to_string())?;
        Ok((model, seed))
    })();
    let (model, seed) = match prepared {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };

    let n = model.state_dim();
    let mut rng = XorShift64Star::new(seed);
    let mut all_pass = true;
    let mut worst: Vec<(String, f64)> = Vec::new();
    for _ in 0..20 {
        let state = match AgentState::new(rng.gaussian_vector(n), rng.gaussian_vector(n)) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        };
        let report = match check_jets_fd(&model, &state, 1e-6, 1e-5) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        };
        for block in report.blocks {
            match worst.iter_mut().find(|(name, _)| *name == block.block) {
                Some((_, err)) => *err = err.max(block.max_rel_err),
                None => worst.push((block.block.clone(), block.max_rel_err)),
            }
            if !block.pass {
                all_pass = false;
                println!("[FAIL] {} rel err {:.3e}", block.block, block.max_rel_err);
            }
        }
    }
    for (name, err) in &worst {
        println!(
            "[{}] {name}: max rel err {err:.3e} (tol 1e-5, 20 states)",
            if *err <= 1e-5 { "PASS" } else { "FAIL" }
        );
    }
    if all_pass {
        0
    } else {
        1
    }
}
