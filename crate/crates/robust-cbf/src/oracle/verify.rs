//! Randomized cross-method verification: the SDP solver against the
//! cutting-plane method, exact worst-case margins, ball sampling, the
//! S-procedure identity and dual lower bounds, all on seeded instances.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::constraint::{ConstraintData, ParameterEstimate, TildeConstraint};
use crate::rng::XorShift64Star;
use crate::sdp::{build_robust_lmi, build_slemma_pair, solve_safe_control, SolveStatus,
    SolverOptions};

use super::{dual_lower_bound, sample_verify, solve_robust_qp_cutting_plane, worst_case_z};

/// Raw constraint with unit-Gaussian coefficients.
pub fn random_raw_constraint(rng: &mut XorShift64Star, p: usize, m: usize) -> ConstraintData {
    ConstraintData {
        control_coef: DMatrix::from_fn(p, m, |_, _| rng.next_gaussian()),
        control_offset: rng.gaussian_vector(m),
        bound_quad: DMatrix::from_fn(p, p, |_, _| rng.next_gaussian()),
        bound_lin: rng.gaussian_vector(p),
        bound_const: rng.next_gaussian(),
    }
}

/// Gaussian center with radius uniform in `[eta_lo, eta_hi]`.
pub fn random_estimate(
    rng: &mut XorShift64Star,
    p: usize,
    eta_lo: f64,
    eta_hi: f64,
) -> ParameterEstimate {
    ParameterEstimate::new(
        rng.gaussian_vector(p),
        eta_lo + (eta_hi - eta_lo) * rng.next_f64(),
    )
    .expect("radius range must be nonnegative")
}

/// Normalized constraint from a random raw draw, η ∈ [0.1, 1].
pub fn random_tilde(rng: &mut XorShift64Star, p: usize, m: usize) -> TildeConstraint {
    let raw = random_raw_constraint(rng, p, m);
    let est = random_estimate(rng, p, 0.1, 1.0);
    raw.normalize(&est).expect("dimensions agree by construction")
}

/// The scalar interval instance: `θ̃·u ≤ −1` for `θ̃ ∈ [0.5, 1.5]`,
/// normalized; its minimum-norm solution is `u = −2` with the LMI
/// singular at `λ = 0.5`.
pub fn golden_scalar_instance() -> TildeConstraint {
    TildeConstraint {
        control_coef: DMatrix::from_row_slice(1, 1, &[0.5]),
        control_offset: DVector::from_row_slice(&[1.0]),
        bound_quad: DMatrix::zeros(1, 1),
        bound_lin: DVector::zeros(1),
        bound_const: -1.0,
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Number of feasible instances the cross-method loop must process.
    pub instances: usize,
    pub seed: u64,
    /// Parameter dimensions cycled per instance index.
    pub p_choices: Vec<usize>,
    /// Control dimension.
    pub m: usize,
    /// Points per ball-sampling soundness check.
    pub sample_count: usize,
    pub solver: SolverOptions,
    /// Cutting-plane stopping margin and cut budget.
    pub cp_tol: f64,
    pub max_cuts: usize,
    /// Trials for the S-procedure identity and the dual-bound grid.
    pub slemma_trials: usize,
    pub dual_trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 7,
            p_choices: vec![1, 2, 3],
            m: 2,
            sample_count: 10_000,
            solver: SolverOptions::default(),
            cp_tol: 1e-9,
            max_cuts: 300,
            slemma_trials: 1000,
            dual_trials: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckSection {
    pub name: String,
    pub pass: usize,
    pub fail: usize,
    /// Section-specific extremum: worst deviation or smallest margin seen.
    pub worst: f64,
    pub failures: Vec<String>,
}

impl CheckSection {
    fn new(name: &str, init_worst: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: 0,
            fail: 0,
            worst: init_worst,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
            if self.failures.len() < 5 {
                self.failures.push(detail());
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub sections: Vec<CheckSection>,
    pub feasible_instances: usize,
    /// Draws rejected because the cutting-plane oracle could not certify
    /// feasibility.
    pub skipped_instances: usize,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.sections.iter().all(|s| s.fail == 0)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sections {
            writeln!(
                f,
                "[{}] {}: {}/{} pass (extreme {:+.3e})",
                if s.fail == 0 { "PASS" } else { "FAIL" },
                s.name,
                s.pass,
                s.pass + s.fail,
                s.worst
            )?;
            for msg in &s.failures {
                writeln!(f, "       {msg}")?;
            }
        }
        writeln!(
            f,
            "feasible instances: {} ({} infeasible draws skipped)",
            self.feasible_instances, self.skipped_instances
        )
    }
}

/// Run the full cross-method suite. Deterministic in the configuration.
pub fn run_verify(cfg: &VerifyConfig) -> VerifyReport {
    let mut rng = XorShift64Star::new(cfg.seed);
    let mut agreement = CheckSection::new("sdp vs cutting-plane agreement", 0.0);
    let mut margin = CheckSection::new("soundness: worst-case margin", f64::INFINITY);
    let mut sampled = CheckSection::new("soundness: ball sampling", f64::INFINITY);
    let mut identity = CheckSection::new("s-lemma identity", 0.0);
    let mut dual = CheckSection::new("dual lower bound", 0.0);
    let mut golden: Option<CheckSection> = None;

    // Golden instance, available only at the scalar dimensions.
    if cfg.m == 1 && cfg.p_choices.contains(&1) {
        let mut section = CheckSection::new("golden scalar instance", 0.0);
        let t = golden_scalar_instance();
        let sol = solve_safe_control(&t, &cfg.solver).expect("options validated");
        let u_dev = (sol.u[0] + 2.0).abs();
        let det = build_robust_lmi(&t).eval(&sol.u, sol.lambda).determinant();
        section.worst = u_dev.max(det.abs());
        section.record(
            sol.status == SolveStatus::Optimal && u_dev <= 1e-6 && det.abs() <= 1e-6,
            || format!("u = {:.9} (want -2), det = {det:.3e}, status {}", sol.u[0], sol.status),
        );
        golden = Some(section);
    }

    let mut feasible = 0usize;
    let mut skipped = 0usize;
    let mut attempts = 0usize;
    let attempt_cap = 50 * cfg.instances.max(1);
    while feasible < cfg.instances && attempts < attempt_cap {
        attempts += 1;
        let p = cfg.p_choices[feasible % cfg.p_choices.len()];
        let t = random_tilde(&mut rng, p, cfg.m);
        let Ok(cp) = solve_robust_qp_cutting_plane(&t, cfg.cp_tol, cfg.max_cuts) else {
            skipped += 1;
            continue;
        };
        feasible += 1;

        let sol = solve_safe_control(&t, &cfg.solver).expect("options validated");
        if sol.status != SolveStatus::Optimal {
            let detail = format!(
                "instance {feasible} (p={p}): cutting plane feasible but SDP returned {}",
                sol.status
            );
            agreement.record(false, || detail);
            continue;
        }
        let dev = (&sol.u - &cp.u).norm() / (1.0 + sol.u.norm());
        agreement.worst = agreement.worst.max(dev);
        agreement.record(dev <= 1e-4, || {
            format!("instance {feasible} (p={p}): normalized deviation {dev:.3e}")
        });

        let wc = worst_case_z(&t, &sol.u).value;
        margin.worst = margin.worst.min(wc);
        margin.record(wc >= -1e-6, || {
            format!("instance {feasible} (p={p}): worst-case margin {wc:.3e}")
        });

        let sample_seed = cfg.seed ^ (feasible as u64).wrapping_mul(0x9E3779B97F4A7C15);
        let sv = sample_verify(&t, &sol.u, cfg.sample_count, sample_seed);
        sampled.worst = sampled.worst.min(sv);
        sampled.record(sv >= -1e-6, || {
            format!("instance {feasible} (p={p}): sampled margin {sv:.3e}")
        });
    }

    for trial in 0..cfg.slemma_trials {
        let p = cfg.p_choices[trial % cfg.p_choices.len()];
        let t = random_tilde(&mut rng, p, cfg.m);
        let lmi = build_robust_lmi(&t);
        let pair = build_slemma_pair(&t);
        let u = rng.gaussian_vector(cfg.m);
        let lambda = rng.next_gaussian().abs() * 2.0;
        let mut lhs = pair.q_at(&u);
        for (dst, src) in lhs.iter_mut().zip(pair.p_mat.iter()) {
            *dst -= lambda * src;
        }
        let dev = (&lhs - lmi.eval(&u, lambda)).amax();
        identity.worst = identity.worst.max(dev);
        identity.record(dev == 0.0, || {
            format!("trial {trial} (p={p}): max abs deviation {dev:e}")
        });
    }

    for trial in 0..cfg.dual_trials {
        let p = cfg.p_choices[trial % cfg.p_choices.len()];
        let t = random_tilde(&mut rng, p, cfg.m);
        let u = rng.gaussian_vector(cfg.m);
        let inner = worst_case_z(&t, &u).value;
        let mut ok = true;
        let mut worst_gap = f64::NEG_INFINITY;
        for k in 0..=100 {
            let lambda = k as f64 * 0.1;
            let g = dual_lower_bound(&t, &u, lambda).expect("lambda >= 0");
            if g.is_finite() {
                worst_gap = worst_gap.max(g - inner);
                if g > inner + 1e-9 {
                    ok = false;
                }
            }
        }
        if worst_gap.is_finite() {
            dual.worst = dual.worst.max(worst_gap);
        }
        dual.record(ok, || {
            format!("trial {trial} (p={p}): dual exceeds inner minimum by {worst_gap:.3e}")
        });
    }

    let mut sections = Vec::new();
    if let Some(g) = golden {
        sections.push(g);
    }
    sections.extend([agreement, margin, sampled, identity, dual]);
    VerifyReport {
        sections,
        feasible_instances: feasible,
        skipped_instances: skipped,
    }
}
