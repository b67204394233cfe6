//! Closed-loop simulation: the SDP safety filter in the loop with RK4
//! integration of the coupled agent dynamics and a sound set-membership
//! parameter estimator whose radius never grows.

use nalgebra::{DMatrix, DVector};

use crate::constraint::{assemble_constraint, assemble_hdot, GainPair, ParameterEstimate};
use crate::error::{Error, Result};
use crate::model::{eval_barrier_jet, eval_model_jet, AgentState, ScenarioModel};
use crate::oracle::worst_case_z;
use crate::sdp::{solve_safe_control, solve_safe_control_relaxed, SdpSolution, SolveStatus,
    SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Keep the initial estimate for the whole run.
    Static,
    /// Shrink the ball by intersecting with measurement-consistent sets.
    SetMembership,
}

/// Everything a run needs. `theta_true` drives the simulated human;
/// the filter only ever sees the estimate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ScenarioModel,
    pub initial_state: AgentState,
    pub theta_true: DVector<f64>,
    pub initial_estimate: ParameterEstimate,
    pub gains: GainPair,
    pub dt: f64,
    pub duration: f64,
    pub estimator: EstimatorMode,
    /// Steps between estimator updates.
    pub estimator_period: usize,
    pub solver: SolverOptions,
    pub slack_mode: bool,
    pub seed: u64,
}

impl Scenario {
    /// Load-time checks: positive dt, containment of the true parameter,
    /// consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Setup(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0) {
            return Err(Error::Setup(format!(
                "duration must be nonnegative, got {}",
                self.duration
            )));
        }
        if self.estimator_period == 0 {
            return Err(Error::Setup("estimator period must be at least 1".into()));
        }
        if self.initial_state.dim() != self.model.state_dim() {
            return Err(Error::Setup(format!(
                "initial state dimension {} != model dimension {}",
                self.initial_state.dim(),
                self.model.state_dim()
            )));
        }
        if self.theta_true.len() != self.model.param_dim()
            || self.initial_estimate.theta_hat.len() != self.model.param_dim()
        {
            return Err(Error::Setup(
                "parameter dimensions inconsistent with the model".into(),
            ));
        }
        if !self.initial_estimate.contains(&self.theta_true) {
            return Err(Error::Setup(format!(
                "true parameter outside the initial ball: deviation {} > eta {}",
                (&self.theta_true - &self.initial_estimate.theta_hat).norm(),
                self.initial_estimate.eta
            )));
        }
        self.solver.validate().map_err(|e| Error::Setup(e.to_string()))
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }
}

/// One logged step of a run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub time: f64,
    pub xa: DVector<f64>,
    pub xr: DVector<f64>,
    pub u: DVector<f64>,
    pub h: f64,
    /// ḣ along the true dynamics.
    pub hdot: f64,
    /// Exact worst-case constraint slack at the applied control.
    pub margin: f64,
    pub status: SolveStatus,
    pub lambda: Option<f64>,
    pub theta_hat: DVector<f64>,
    pub eta: f64,
    pub slack: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub theta_true: DVector<f64>,
    /// Set when any step fell back to u = 0 after a failed solve.
    pub degraded: bool,
    /// Estimator updates where containment of the true parameter failed.
    pub containment_violations: usize,
    /// Estimator updates clamped because the projection left the ball
    /// (only possible under numerical noise).
    pub estimator_clamps: usize,
}

/// Classical RK4 step of the coupled system `ẋ_A = G·θ + f`, `ẋ_R = u`
/// with the control held constant over the step.
pub fn step_rk4(
    model: &ScenarioModel,
    theta: &DVector<f64>,
    u: &DVector<f64>,
    s: &AgentState,
    dt: f64,
) -> Result<AgentState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let deriv = |st: &AgentState| -> Result<DVector<f64>> {
        Ok(eval_model_jet(model, st)?.velocity(theta))
    };
    let at = |base: &AgentState, ka: &DVector<f64>, scale: f64| -> Result<AgentState> {
        AgentState::new(&base.xa + scale * ka, &base.xr + scale * u)
    };
    let k1 = deriv(s)?;
    let k2 = deriv(&at(s, &k1, dt / 2.0)?)?;
    let k3 = deriv(&at(s, &k2, dt / 2.0)?)?;
    let k4 = deriv(&at(s, &k3, dt)?)?;
    let xa = &s.xa + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let xr = &s.xr + dt * u;
    if xa.iter().chain(xr.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite state after RK4 step".into()));
    }
    AgentState::new(xa, xr)
}

/// Shrink the estimate with one exact measurement `G·θ = ẋ_A − f`.
///
/// The new center is the orthogonal projection of the old one onto the
/// measurement-consistent affine set, and the radius shrinks in
/// quadrature by the moved distance: the smallest ball containing the
/// intersection of the old ball with that set. Returns the new estimate
/// and whether the update had to be clamped (projection distance beyond
/// the radius, impossible with exact data).
pub fn update_estimate(
    est: &ParameterEstimate,
    g: &DMatrix<f64>,
    xdot_minus_f: &DVector<f64>,
) -> (ParameterEstimate, bool) {
    let residual = g * &est.theta_hat - xdot_minus_f;
    let svd = g.clone().svd(true, true);
    let correction = match svd.solve(&residual, 1e-12) {
        Ok(c) => c,
        Err(_) => return (est.clone(), true),
    };
    let moved = correction.norm();
    if moved > est.eta + 1e-9 {
        return (est.clone(), true);
    }
    let theta_new = &est.theta_hat - &correction;
    let eta_new = (est.eta * est.eta - moved * moved).max(0.0).sqrt();
    (
        ParameterEstimate {
            theta_hat: theta_new,
            eta: eta_new,
        },
        false,
    )
}

/// Run the closed loop and log every step.
///
/// Each step assembles the constraint at the current state, normalizes it
/// with the current estimate, solves the SDP, applies the control over one
/// RK4 step, and periodically updates the estimate from an exact velocity
/// measurement. A failed solve without slack mode applies `u = 0` and
/// marks the run degraded.
pub fn run_simulation(sc: &Scenario) -> Result<TrajectoryLog> {
    sc.validate()?;

    // Initial-condition check making the comparison argument valid:
    // h(0) ≥ 0 and ḣ(0) + λ₂·h(0) ≥ 0.
    {
        let jm = eval_model_jet(&sc.model, &sc.initial_state)?;
        let jb = eval_barrier_jet(&sc.model, &sc.initial_state.xa)?;
        let hd = assemble_hdot(&jm, &jb, &sc.theta_true)?;
        if jb.h < 0.0 {
            return Err(Error::Setup(format!("initial barrier value negative: {}", jb.h)));
        }
        let lam2 = sc.gains.slow_root();
        if hd.hdot + lam2 * jb.h < 0.0 {
            return Err(Error::Setup(format!(
                "initial condition violates hdot + {lam2}*h >= 0 (hdot {}, h {})",
                hd.hdot, jb.h
            )));
        }
    }

    let steps = sc.steps();
    let mut state = sc.initial_state.clone();
    let mut est = sc.initial_estimate.clone();
    let mut log = TrajectoryLog {
        records: Vec::with_capacity(steps + 1),
        theta_true: sc.theta_true.clone(),
        degraded: false,
        containment_violations: 0,
        estimator_clamps: 0,
    };

    for k in 0..=steps {
        let jm = eval_model_jet(&sc.model, &state)?;
        let jb = eval_barrier_jet(&sc.model, &state.xa)?;
        let hd = assemble_hdot(&jm, &jb, &sc.theta_true)?;
        let raw = assemble_constraint(&jm, &jb, &sc.gains)?;
        let tilde = raw.normalize(&est)?;

        let sol: SdpSolution = if sc.slack_mode {
            solve_safe_control_relaxed(&tilde, &sc.solver)?
        } else {
            solve_safe_control(&tilde, &sc.solver)?
        };
        let (u, lambda) = match sol.status {
            SolveStatus::Optimal => (sol.u.clone(), Some(sol.lambda)),
            _ => {
                log.degraded = true;
                (DVector::zeros(sc.model.state_dim()), None)
            }
        };

        log.records.push(StepRecord {
            time: k as f64 * sc.dt,
            xa: state.xa.clone(),
            xr: state.xr.clone(),
            u: u.clone(),
            h: jb.h,
            hdot: hd.hdot,
            margin: worst_case_z(&tilde, &u).value,
            status: sol.status,
            lambda,
            theta_hat: est.theta_hat.clone(),
            eta: est.eta,
            slack: sol.slack,
        });

        if k == steps {
            break;
        }
        state = step_rk4(&sc.model, &sc.theta_true, &u, &state, sc.dt)?;

        if sc.estimator == EstimatorMode::SetMembership && (k + 1) % sc.estimator_period == 0 {
            let jm_new = eval_model_jet(&sc.model, &state)?;
            // Exact velocity measurement: ẋ_A − f = G·θ_true.
            let observed = &jm_new.g * &sc.theta_true;
            let (updated, clamped) = update_estimate(&est, &jm_new.g, &observed);
            if clamped {
                log.estimator_clamps += 1;
            }
            if !updated.contains(&sc.theta_true) {
                log.containment_violations += 1;
            }
            est = updated;
        }
    }

    Ok(log)
}

/// Aggregate safety summary of a run.
#[derive(Debug, Clone)]
pub struct SafetySummary {
    pub records: usize,
    pub min_h: f64,
    pub min_margin: f64,
    pub infeasible_steps: usize,
    pub final_theta_hat: DVector<f64>,
    pub final_eta: f64,
    /// η never grew (within 1e-12) over the run.
    pub eta_monotone: bool,
    pub degraded: bool,
    pub containment_violations: usize,
}

pub fn safety_report(log: &TrajectoryLog) -> Result<SafetySummary> {
    let last = log
        .records
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory log".into()))?;
    let eta_monotone = log
        .records
        .windows(2)
        .all(|w| w[1].eta <= w[0].eta + 1e-12);
    Ok(SafetySummary {
        records: log.records.len(),
        min_h: log.records.iter().map(|r| r.h).fold(f64::INFINITY, f64::min),
        min_margin: log
            .records
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min),
        infeasible_steps: log
            .records
            .iter()
            .filter(|r| r.status == SolveStatus::Infeasible)
            .count(),
        final_theta_hat: last.theta_hat.clone(),
        final_eta: last.eta,
        eta_monotone,
        degraded: log.degraded,
        containment_violations: log.containment_violations,
    })
}
