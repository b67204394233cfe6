//! Exact SDP reformulation of the robust safety constraint and its solver.
//!
//! The semi-infinite constraint over the unit parameter ball is equivalent
//! to the linear matrix inequality
//!
//! ```text
//!     M(u, λ) = [ H̃ + λI        (f̃ − C̃u)/2 ]  ⪰ 0 ,   λ ≥ 0 ,
//!               [ (f̃ − C̃u)ᵀ/2   g̃ − d̃ᵀu − λ ]
//! ```
//!
//! and the minimum-norm control is recovered by minimizing an epigraph
//! variable `t` with `[[I, u], [uᵀ, t]] ⪰ 0`. The same feasible set arises
//! from the S-procedure as `Q(u) ⪰ λP`; [`build_slemma_pair`] exposes that
//! form and shares its coefficients with [`build_robust_lmi`] so the two
//! derivations agree entrywise, exactly.

mod ipm;

use nalgebra::{DMatrix, DVector};

use crate::constraint::TildeConstraint;
use crate::error::{Error, Result};
use ipm::{min_eigenvalue, AffineBlock, ConeProgram, PathOptions, PathStatus};

/// Radius of the Phase-I ball over `(u, λ)`; controls beyond this scale
/// are treated as unavailable.
const PHASE1_RADIUS: f64 = 1e6;

/// The affine LMI `M(u, λ) = constant + Σᵢ uᵢ·coeff_u[i] + λ·coeff_lambda`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: DMatrix<f64>,
    pub coeff_u: Vec<DMatrix<f64>>,
    pub coeff_lambda: DMatrix<f64>,
}

impl LmiBlock {
    pub fn control_dim(&self) -> usize {
        self.coeff_u.len()
    }

    /// Evaluate `M(u, λ)`. The affine accumulation order here is the one
    /// [`SLemmaPair::q_at`] uses, which makes the identity
    /// `Q(u) − λP = M(u, λ)` hold bit-for-bit.
    pub fn eval(&self, u: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
        let mut m = affine_eval(&self.constant, &self.coeff_u, u);
        for (dst, src) in m.iter_mut().zip(self.coeff_lambda.iter()) {
            *dst += lambda * src;
        }
        m
    }
}

fn affine_eval(constant: &DMatrix<f64>, coeffs: &[DMatrix<f64>], u: &DVector<f64>) -> DMatrix<f64> {
    assert_eq!(coeffs.len(), u.len(), "control dimension mismatch");
    let mut m = constant.clone();
    for (coeff, &ui) in coeffs.iter().zip(u.iter()) {
        for (dst, src) in m.iter_mut().zip(coeff.iter()) {
            *dst += ui * src;
        }
    }
    m
}

/// Build the robust LMI from the normalized constraint.
pub fn build_robust_lmi(t: &TildeConstraint) -> LmiBlock {
    let p = t.param_dim();
    let m = t.control_dim();
    let q = p + 1;

    let mut constant = DMatrix::zeros(q, q);
    constant.view_mut((0, 0), (p, p)).copy_from(&t.bound_quad);
    for i in 0..p {
        constant[(i, p)] = t.bound_lin[i] / 2.0;
        constant[(p, i)] = t.bound_lin[i] / 2.0;
    }
    constant[(p, p)] = t.bound_const;

    let coeff_u = (0..m)
        .map(|j| {
            let mut a = DMatrix::zeros(q, q);
            for i in 0..p {
                a[(i, p)] = -t.control_coef[(i, j)] / 2.0;
                a[(p, i)] = -t.control_coef[(i, j)] / 2.0;
            }
            a[(p, p)] = -t.control_offset[j];
            a
        })
        .collect();

    let mut coeff_lambda = DMatrix::identity(q, q);
    coeff_lambda[(p, p)] = -1.0;

    LmiBlock {
        size: q,
        constant,
        coeff_u,
        coeff_lambda,
    }
}

/// The S-procedure pair: `P = diag(−I, 1)` and the affine
/// `Q(u) = [[H̃, (f̃ − C̃u)/2], [(f̃ − C̃u)ᵀ/2, g̃ − d̃ᵀu]]`. By
/// construction `Q(u) − λ·P` equals [`LmiBlock::eval`] entrywise.
#[derive(Debug, Clone)]
pub struct SLemmaPair {
    pub p_mat: DMatrix<f64>,
    pub q_constant: DMatrix<f64>,
    pub q_coeff_u: Vec<DMatrix<f64>>,
}

impl SLemmaPair {
    pub fn q_at(&self, u: &DVector<f64>) -> DMatrix<f64> {
        affine_eval(&self.q_constant, &self.q_coeff_u, u)
    }
}

/// Build the S-procedure pair; shares coefficients with the robust LMI.
pub fn build_slemma_pair(t: &TildeConstraint) -> SLemmaPair {
    let lmi = build_robust_lmi(t);
    SLemmaPair {
        p_mat: -lmi.coeff_lambda,
        q_constant: lmi.constant,
        q_coeff_u: lmi.coeff_u,
    }
}

/// True iff the smallest eigenvalue of the symmetric input is ≥ −slack.
pub fn check_psd(m: &DMatrix<f64>, slack: f64) -> Result<bool> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("PSD check needs a square matrix".into()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidArgument(format!(
            "PSD check needs a symmetric matrix (asymmetry {asym:e})"
        )));
    }
    Ok(min_eigenvalue(m) >= -slack)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::MaxIter => "MaxIter",
            SolveStatus::NumericalFailure => "NumericalFailure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub u: DVector<f64>,
    pub lambda: f64,
    /// Epigraph value; equals `‖u‖²` at the optimum up to the gap.
    pub t: f64,
    pub status: SolveStatus,
    /// Newton iterations spent (both phases).
    pub iterations: usize,
    /// At `Optimal`: the barrier-gap optimality certificate relative to
    /// the objective scale, plus any primal violations (zero for interior
    /// iterates). At `Infeasible`: the Phase-I certificate value.
    pub kkt_residual: f64,
    /// Constraint relaxation used, when solved in slack mode.
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    /// Newton-iteration budget per solve phase.
    pub max_iter: usize,
    /// Initial barrier weight μ₀.
    pub initial_weight: f64,
    /// Geometric factor by which μ grows between centerings.
    pub barrier_factor: f64,
    /// Interior margin Phase I must certify; anything thinner is reported
    /// Infeasible.
    pub phase1_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            initial_weight: 1.0,
            barrier_factor: 10.0,
            phase1_margin: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.initial_weight > 0.0) || !(self.barrier_factor > 1.0) {
            return Err(Error::InvalidArgument(
                "initial weight must be > 0 and barrier factor > 1".into(),
            ));
        }
        if !(self.phase1_margin > 0.0) {
            return Err(Error::InvalidArgument("phase1 margin must be > 0".into()));
        }
        Ok(())
    }
}

/// The epigraph SDP: minimize `t` subject to `M(u, λ) ⪰ 0`, `λ ≥ 0`,
/// `[[I, u], [uᵀ, t]] ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub lmi: LmiBlock,
}

impl SdpProblem {
    pub fn new(lmi: LmiBlock) -> Self {
        Self { lmi }
    }

    pub fn control_dim(&self) -> usize {
        self.lmi.control_dim()
    }

    fn param_block_dim(&self) -> usize {
        self.lmi.size
    }

    /// Starting λ keeping the top-left block of the LMI interior.
    fn lambda_start(&self) -> f64 {
        let p = self.param_block_dim() - 1;
        if p == 0 {
            return 1.0;
        }
        let top_left = self.lmi.constant.view((0, 0), (p, p)).clone_owned();
        (1.1 * (-min_eigenvalue(&top_left)).max(0.0)).max(1.0)
    }

    /// Constraint blocks of the main solve over x = (u, λ, t).
    fn main_blocks(&self) -> Vec<AffineBlock> {
        let m = self.control_dim();
        let q = self.param_block_dim();
        let nvars = m + 2;

        let mut lmi_coeffs: Vec<DMatrix<f64>> = Vec::with_capacity(nvars);
        lmi_coeffs.extend(self.lmi.coeff_u.iter().cloned());
        lmi_coeffs.push(self.lmi.coeff_lambda.clone());
        lmi_coeffs.push(DMatrix::zeros(q, q));
        let lmi_block = AffineBlock {
            constant: self.lmi.constant.clone(),
            coeffs: lmi_coeffs,
        };

        // λ ≥ 0
        let mut lam_coeffs = vec![DMatrix::zeros(1, 1); nvars];
        lam_coeffs[m] = DMatrix::from_row_slice(1, 1, &[1.0]);
        let lam_block = AffineBlock {
            constant: DMatrix::zeros(1, 1),
            coeffs: lam_coeffs,
        };

        // [[I, u], [uᵀ, t]] ⪰ 0
        let k = m + 1;
        let mut k_const = DMatrix::zeros(k, k);
        for i in 0..m {
            k_const[(i, i)] = 1.0;
        }
        let mut k_coeffs = Vec::with_capacity(nvars);
        for i in 0..m {
            let mut e = DMatrix::zeros(k, k);
            e[(i, m)] = 1.0;
            e[(m, i)] = 1.0;
            k_coeffs.push(e);
        }
        let mut et = DMatrix::zeros(k, k);
        et[(m, m)] = 1.0;
        k_coeffs.push(DMatrix::zeros(k, k)); // λ
        k_coeffs.push(et); // t
        let k_block = AffineBlock {
            constant: k_const,
            coeffs: k_coeffs,
        };

        vec![lmi_block, lam_block, k_block]
    }

    /// Blocks of the minimal-relaxation solve over x = (u, λ, r):
    /// `M(u, λ) + r·E_corner ⪰ 0`, `λ ≥ 0`, `r ≥ 0`, `‖(u, λ)‖ ≤ R`.
    fn relaxation_blocks(&self) -> Vec<AffineBlock> {
        let m = self.control_dim();
        let q = self.param_block_dim();
        let nvars = m + 2;

        let mut corner = DMatrix::zeros(q, q);
        corner[(q - 1, q - 1)] = 1.0;
        let mut lmi_coeffs: Vec<DMatrix<f64>> = Vec::with_capacity(nvars);
        lmi_coeffs.extend(self.lmi.coeff_u.iter().cloned());
        lmi_coeffs.push(self.lmi.coeff_lambda.clone());
        lmi_coeffs.push(corner);
        let lmi_block = AffineBlock {
            constant: self.lmi.constant.clone(),
            coeffs: lmi_coeffs,
        };

        let mut lam_coeffs = vec![DMatrix::zeros(1, 1); nvars];
        lam_coeffs[m] = DMatrix::from_row_slice(1, 1, &[1.0]);
        let lam_block = AffineBlock {
            constant: DMatrix::zeros(1, 1),
            coeffs: lam_coeffs,
        };

        let mut r_coeffs = vec![DMatrix::zeros(1, 1); nvars];
        r_coeffs[m + 1] = DMatrix::from_row_slice(1, 1, &[1.0]);
        let r_block = AffineBlock {
            constant: DMatrix::zeros(1, 1),
            coeffs: r_coeffs,
        };

        // Same compactification as Phase I; the minimal relaxation can
        // otherwise recede along an unbounded direction in u.
        let k = m + 2;
        let mut ball_const = DMatrix::zeros(k, k);
        for i in 0..k {
            ball_const[(i, i)] = PHASE1_RADIUS;
        }
        let mut ball_coeffs = Vec::with_capacity(nvars);
        for i in 0..m + 1 {
            let mut e = DMatrix::zeros(k, k);
            e[(i, k - 1)] = 1.0;
            e[(k - 1, i)] = 1.0;
            ball_coeffs.push(e);
        }
        ball_coeffs.push(DMatrix::zeros(k, k)); // r
        let ball_block = AffineBlock {
            constant: ball_const,
            coeffs: ball_coeffs,
        };

        vec![lmi_block, lam_block, r_block, ball_block]
    }

    /// Phase I over x = (u, λ, s): minimize s with `M(u, λ) + s·I ⪰ 0`,
    /// `λ + s ≥ 0` and `‖(u, λ)‖ ≤ R`.
    ///
    /// Without the ball the Phase-I infimum need not be attained (it can
    /// recede along an unbounded direction in u), leaving the path without
    /// a center. The ball compactifies the search; instances whose only
    /// feasible controls exceed `PHASE1_RADIUS` are reported Infeasible.
    fn phase1_blocks(&self) -> Vec<AffineBlock> {
        let m = self.control_dim();
        let q = self.param_block_dim();
        let nvars = m + 2;

        let mut lmi_coeffs: Vec<DMatrix<f64>> = Vec::with_capacity(nvars);
        lmi_coeffs.extend(self.lmi.coeff_u.iter().cloned());
        lmi_coeffs.push(self.lmi.coeff_lambda.clone());
        lmi_coeffs.push(DMatrix::identity(q, q));
        let lmi_block = AffineBlock {
            constant: self.lmi.constant.clone(),
            coeffs: lmi_coeffs,
        };

        let mut lam_coeffs = vec![DMatrix::zeros(1, 1); nvars];
        lam_coeffs[m] = DMatrix::from_row_slice(1, 1, &[1.0]);
        lam_coeffs[m + 1] = DMatrix::from_row_slice(1, 1, &[1.0]);
        let lam_block = AffineBlock {
            constant: DMatrix::zeros(1, 1),
            coeffs: lam_coeffs,
        };

        // [[R·I, v], [vᵀ, R]] ⪰ 0 ⟺ ‖v‖ ≤ R for v = (u, λ).
        let k = m + 2;
        let mut ball_const = DMatrix::zeros(k, k);
        for i in 0..k {
            ball_const[(i, i)] = PHASE1_RADIUS;
        }
        let mut ball_coeffs = Vec::with_capacity(nvars);
        for i in 0..m + 1 {
            let mut e = DMatrix::zeros(k, k);
            e[(i, k - 1)] = 1.0;
            e[(k - 1, i)] = 1.0;
            ball_coeffs.push(e);
        }
        ball_coeffs.push(DMatrix::zeros(k, k)); // s
        let ball_block = AffineBlock {
            constant: ball_const,
            coeffs: ball_coeffs,
        };

        vec![lmi_block, lam_block, ball_block]
    }

    /// Feasibility of the λ-only LMI when the constraint does not involve
    /// u at all: maximize the concave λ ↦ λ_min(M(0, λ)) by ternary
    /// search.
    fn lambda_only_solve(&self, m_dim: usize) -> SdpSolution {
        let zero_u = DVector::zeros(m_dim);
        let eigmin = |lam: f64| min_eigenvalue(&self.lmi.eval(&zero_u, lam));
        let q = self.param_block_dim();
        let scale = 1.0 + self.lmi.constant.amax();
        let corner = self.lmi.constant[(q - 1, q - 1)];
        let mut lo = 0.0f64;
        let mut hi = (corner + scale + 1.0).max(1.0);
        for _ in 0..300 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if eigmin(a) < eigmin(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let mid = 0.5 * (lo + hi);
        let (best_lam, best_val) = [0.0, mid, hi]
            .into_iter()
            .map(|l| (l, eigmin(l)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best_val >= -1e-9 * scale {
            SdpSolution {
                u: zero_u,
                lambda: best_lam,
                t: 0.0,
                status: SolveStatus::Optimal,
                iterations: 0,
                kkt_residual: (-best_val).max(0.0),
                slack: None,
            }
        } else {
            SdpSolution {
                u: zero_u,
                lambda: best_lam,
                t: 0.0,
                status: SolveStatus::Infeasible,
                iterations: 0,
                kkt_residual: -best_val,
                slack: None,
            }
        }
    }

    /// Best interior margin available at a fixed control, maximizing the
    /// concave λ ↦ min(λ, λ_min(M(u, λ))) by ternary search. Returns the
    /// margin and its λ.
    fn best_lambda_at(&self, u: &DVector<f64>, lam_hint: f64) -> (f64, f64) {
        let q = self.param_block_dim();
        let at_zero = self.lmi.eval(u, 0.0);
        let corner = at_zero[(q - 1, q - 1)];
        let joint = |lam: f64| min_eigenvalue(&self.lmi.eval(u, lam)).min(lam);
        let mut lo = 0.0f64;
        let mut hi = (corner.abs() + at_zero.amax() + 1.0).max(1.1 * lam_hint).max(1.0);
        for _ in 0..48 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if joint(a) < joint(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let lam = 0.5 * (lo + hi);
        (joint(lam), lam)
    }

    /// Pull a strictly feasible Phase-I exit control back toward zero.
    /// The projection of the feasible set onto u is convex and the best
    /// margin over λ is concave along the segment `τ·u₁`, so bisecting
    /// for the smallest τ still meeting the target margin (with λ
    /// re-optimized at each τ) trims the overshoot a Phase-I path can
    /// accumulate chasing an unbounded certificate.
    fn trim_start(&self, u1: &DVector<f64>, lam1: f64, target: f64) -> (DVector<f64>, f64) {
        let margin_at = |tau: f64| self.best_lambda_at(&(tau * u1), lam1);
        if margin_at(1.0).0 < target {
            // λ re-optimization should only improve on the Phase-I exit;
            // if it does not, keep that exit untouched.
            return (u1.clone(), lam1);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if margin_at(0.0).0 >= target {
            hi = 0.0;
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if margin_at(mid).0 >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        // Concavity keeps every τ ≥ τ* at least at the target margin, so
        // a small relative buffer suffices; staying close to τ* keeps the
        // Phase-II start at a sane scale.
        let tau = (hi * 1.05 + 1e-4).min(1.0);
        let u = tau * u1;
        let (_, lam) = self.best_lambda_at(&u, lam1);
        (u, lam)
    }

    /// Optimality certificate at a near-central iterate: the barrier gap
    /// bound (ν + δ·√ν)/μ relative to the objective scale, plus any
    /// primal violations (zero for interior points).
    fn kkt_residual(&self, u: &DVector<f64>, lambda: f64, t: f64, gap_cert: f64) -> f64 {
        let viol_m = (-min_eigenvalue(&self.lmi.eval(u, lambda))).max(0.0);
        let viol_lam = (-lambda).max(0.0);
        let viol_t = (u.norm_squared() - t).max(0.0);
        gap_cert.max(viol_m).max(viol_lam).max(viol_t)
    }

    /// Minimum-norm solve. Statuses other than `Optimal` are reported in
    /// the solution, not as errors.
    pub fn solve(&self, opts: &SolverOptions) -> Result<SdpSolution> {
        opts.validate()?;
        let m = self.control_dim();
        if self.lmi.coeff_u.iter().all(|a| a.amax() == 0.0) {
            // u-independent constraint: u = 0 is optimal whenever the
            // λ-only LMI is feasible at all.
            return Ok(self.lambda_only_solve(m));
        }

        let mut total_iters = 0usize;
        let lam0 = self.lambda_start();
        let margin0 = min_eigenvalue(&self.lmi.eval(&DVector::zeros(m), lam0));

        let start = if margin0 > opts.phase1_margin {
            let mut x = DVector::zeros(m + 2);
            x[m] = lam0;
            x[m + 1] = 1.0;
            Some(x)
        } else {
            // Phase I from the analytic interior start.
            let prog = ConeProgram::new(
                {
                    let mut c = DVector::zeros(m + 2);
                    c[m + 1] = 1.0;
                    c
                },
                self.phase1_blocks(),
            );
            let mut x0 = DVector::zeros(m + 2);
            x0[m] = lam0;
            x0[m + 1] = (-margin0).max(0.0) + 1.0;
            // Stop as soon as the iterate is strictly feasible for the
            // original constraints; waiting for s itself to certify can
            // chase an unbounded Phase-I optimum.
            let strict = |x: &DVector<f64>| -> bool {
                let u = x.rows(0, m).clone_owned();
                let lam = x[m];
                lam > 10.0 * opts.phase1_margin
                    && min_eigenvalue(&self.lmi.eval(&u, lam)) > 10.0 * opts.phase1_margin
            };
            // Feasible paths exit through `strict` as soon as s crosses
            // −10·margin, so the gap only blurs hairline classifications;
            // a loose target avoids grinding against the boundary of an
            // infeasible instance at extreme μ.
            let res = prog.solve_path(
                x0,
                &PathOptions {
                    gap_tol: (0.1 * opts.phase1_margin).max(1e-4),
                    mu0: opts.initial_weight,
                    mu_factor: opts.barrier_factor,
                    budget: opts.max_iter,
                },
                Some(&strict),
            );
            total_iters += res.newton_iters;
            let s = res.x[m + 1];
            let strictly_feasible = strict(&res.x)
                || (s < -opts.phase1_margin && res.x[m] > 0.0);
            if strictly_feasible {
                let u1 = res.x.rows(0, m).clone_owned();
                let (u_start, lam_start) = self.trim_start(&u1, res.x[m], opts.phase1_margin);
                let mut x = DVector::zeros(m + 2);
                x.rows_mut(0, m).copy_from(&u_start);
                x[m] = lam_start;
                x[m + 1] = u_start.norm_squared() + 1.0;
                Some(x)
            } else {
                match res.status {
                    PathStatus::Converged => {
                        return Ok(SdpSolution {
                            u: DVector::zeros(m),
                            lambda: res.x[m],
                            t: 0.0,
                            status: SolveStatus::Infeasible,
                            iterations: total_iters,
                            kkt_residual: s,
                            slack: None,
                        });
                    }
                    PathStatus::IterationLimit => {
                        return Ok(self.failed(m, total_iters, SolveStatus::MaxIter));
                    }
                    PathStatus::Stalled | PathStatus::EarlyStopped => {
                        return Ok(self.failed(m, total_iters, SolveStatus::NumericalFailure));
                    }
                }
            }
        };

        let x0 = start.expect("phase II start point");
        let prog = ConeProgram::new(
            {
                let mut c = DVector::zeros(m + 2);
                c[m + 1] = 1.0;
                c
            },
            self.main_blocks(),
        );
        let res = prog.solve_path(
            x0,
            &PathOptions {
                gap_tol: opts.tol,
                mu0: opts.initial_weight,
                mu_factor: opts.barrier_factor,
                budget: opts.max_iter.saturating_sub(total_iters).max(1),
            },
            None,
        );
        total_iters += res.newton_iters;
        let u = res.x.rows(0, m).clone_owned();
        let lambda = res.x[m];
        let t = res.x[m + 1];
        let status = match res.status {
            // The gap certificate needs a near-central point; a large
            // final decrement means the last centering jammed.
            PathStatus::Converged if res.decrement <= 0.9 => SolveStatus::Optimal,
            PathStatus::Converged => SolveStatus::NumericalFailure,
            PathStatus::IterationLimit => SolveStatus::MaxIter,
            PathStatus::Stalled | PathStatus::EarlyStopped => SolveStatus::NumericalFailure,
        };
        let nu = prog.nu();
        let gap_cert = (nu + res.decrement.min(1.0) * nu.sqrt()) / (res.mu * (1.0 + t.abs()));
        Ok(SdpSolution {
            kkt_residual: self.kkt_residual(&u, lambda, t, gap_cert),
            u,
            lambda,
            t,
            status,
            iterations: total_iters,
            slack: None,
        })
    }

    /// Relaxed solve for simulation continuity: first find the smallest
    /// corner lift `r ≥ 0` making the LMI feasible, then solve the
    /// minimum-norm problem under that lift. This is the heavily-weighted
    /// `t + ρ·r` objective taken to its limit, which sidesteps the merit
    /// scaling ρ would force on the barrier. The relaxation actually used
    /// is reported in `slack` (zero when none was needed).
    pub fn solve_relaxed(&self, opts: &SolverOptions) -> Result<SdpSolution> {
        opts.validate()?;
        let m = self.control_dim();
        let q = self.param_block_dim();
        let lam0 = self.lambda_start();

        // Grow r until the lifted LMI is comfortably interior.
        let zero_u = DVector::zeros(m);
        let mut corner = DMatrix::zeros(q, q);
        corner[(q - 1, q - 1)] = 1.0;
        let mut r0 = 1.0;
        let mut tries = 0;
        while min_eigenvalue(&(self.lmi.eval(&zero_u, lam0) + r0 * &corner)) <= 1e-6 {
            r0 *= 4.0;
            tries += 1;
            if tries > 200 {
                return Ok(self.failed(m, 0, SolveStatus::NumericalFailure));
            }
        }
        r0 *= 2.0;

        // Stage 1: minimize the relaxation alone.
        let mut objective = DVector::zeros(m + 2);
        objective[m + 1] = 1.0;
        let prog = ConeProgram::new(objective, self.relaxation_blocks());
        let mut x0 = DVector::zeros(m + 2);
        x0[m] = lam0;
        x0[m + 1] = r0;
        let res = prog.solve_path(
            x0,
            &PathOptions {
                gap_tol: opts.tol.max(1e-10),
                mu0: opts.initial_weight,
                mu_factor: opts.barrier_factor,
                budget: opts.max_iter,
            },
            None,
        );
        if matches!(res.status, PathStatus::Stalled) {
            return Ok(self.failed(m, res.newton_iters, SolveStatus::NumericalFailure));
        }
        let r_min = res.x[m + 1].max(0.0);

        // Stage 2: minimum-norm control under the (slightly padded)
        // minimal lift. A genuinely feasible instance is first retried
        // without any relaxation.
        let lifted_solve = |r_used: f64| -> Result<SdpSolution> {
            let lifted = LmiBlock {
                size: self.lmi.size,
                constant: {
                    let mut c = self.lmi.constant.clone();
                    c[(q - 1, q - 1)] += r_used;
                    c
                },
                coeff_u: self.lmi.coeff_u.clone(),
                coeff_lambda: self.lmi.coeff_lambda.clone(),
            };
            let mut sol = SdpProblem::new(lifted).solve(opts)?;
            sol.slack = Some(r_used);
            Ok(sol)
        };
        // The pad keeps the lifted problem comfortably inside Phase I's
        // resolution, at the price of a slightly larger logged relaxation.
        let pad = (100.0 * opts.phase1_margin).max(1e-3);
        if r_min <= 10.0 * opts.tol.max(1e-10) {
            let mut sol = lifted_solve(0.0)?;
            if sol.status == SolveStatus::Optimal {
                sol.iterations += res.newton_iters;
                return Ok(sol);
            }
        }
        let mut sol = lifted_solve(r_min + pad)?;
        sol.iterations += res.newton_iters;
        Ok(sol)
    }

    fn failed(&self, m: usize, iterations: usize, status: SolveStatus) -> SdpSolution {
        SdpSolution {
            u: DVector::zeros(m),
            lambda: 0.0,
            t: 0.0,
            status,
            iterations,
            kkt_residual: f64::INFINITY,
            slack: None,
        }
    }
}

/// Rescale an instance so the expected control magnitude and the
/// constraint row are O(1): substitute `u = σ·û` and multiply the whole
/// inequality by κ. Same feasible set, far better conditioned when the
/// barrier gradient degenerates and the required control is huge.
fn precondition(t: &TildeConstraint) -> (TildeConstraint, f64, f64) {
    let d_norm = t.control_offset.norm();
    let sigma = if t.bound_const < 0.0 && d_norm > 1e-12 {
        (t.bound_const.abs() / d_norm).max(1.0)
    } else {
        1.0
    };
    let kappa = 1.0
        / (1.0
            + t.bound_const.abs()
            + sigma * d_norm
            + sigma * t.control_coef.norm()
            + t.bound_quad.norm()
            + t.bound_lin.norm());
    let scaled = TildeConstraint {
        control_coef: kappa * sigma * &t.control_coef,
        control_offset: kappa * sigma * &t.control_offset,
        bound_quad: kappa * &t.bound_quad,
        bound_lin: kappa * &t.bound_lin,
        bound_const: kappa * t.bound_const,
    };
    (scaled, sigma, kappa)
}

/// Minimum-norm robustly safe control for the normalized constraint.
pub fn solve_safe_control(t: &TildeConstraint, opts: &SolverOptions) -> Result<SdpSolution> {
    let (scaled, sigma, kappa) = precondition(t);
    let mut sol = SdpProblem::new(build_robust_lmi(&scaled)).solve(opts)?;
    unscale(&mut sol, t, sigma, kappa);
    Ok(sol)
}

/// Slack-mode variant: lifts the constraint bound by the smallest
/// feasible `r ≥ 0`; the relaxation used is reported in
/// `SdpSolution::slack`.
pub fn solve_safe_control_relaxed(
    t: &TildeConstraint,
    opts: &SolverOptions,
) -> Result<SdpSolution> {
    let (scaled, sigma, kappa) = precondition(t);
    let mut sol = SdpProblem::new(build_robust_lmi(&scaled)).solve_relaxed(opts)?;
    unscale(&mut sol, t, sigma, kappa);
    Ok(sol)
}

/// Map a scaled solution back to the original instance and fold the
/// original-space primal violations into the reported residual.
fn unscale(sol: &mut SdpSolution, original: &TildeConstraint, sigma: f64, kappa: f64) {
    sol.u *= sigma;
    sol.lambda /= kappa;
    sol.t *= sigma * sigma;
    if let Some(r) = sol.slack.as_mut() {
        *r /= kappa;
    }
    if sol.status == SolveStatus::Optimal {
        let lifted = sol.slack.unwrap_or(0.0);
        let mut lmi = build_robust_lmi(original);
        let q = lmi.size;
        lmi.constant[(q - 1, q - 1)] += lifted;
        let viol_m = (-min_eigenvalue(&lmi.eval(&sol.u, sol.lambda))).max(0.0);
        sol.kkt_residual = sol
            .kkt_residual
            .max(viol_m)
            .max((-sol.lambda).max(0.0))
            .max((sol.u.norm_squared() - sol.t).max(0.0));
    } else if sol.status == SolveStatus::Infeasible {
        // Phase-I certificate back in original units.
        sol.kkt_residual /= kappa;
    }
}
