//! Internal log-det barrier path-following engine.
//!
//! Solves `min cᵀx  s.t.  Bₖ(x) ⪰ 0` for affine symmetric blocks
//! `Bₖ(x) = Aₖ₀ + Σᵢ xᵢ·Aₖᵢ` by Newton centering of
//! `μ·cᵀx − Σₖ logdet Bₖ(x)`, increasing μ geometrically until the
//! barrier gap `ν/μ` (ν = total block size) reaches the target. Blocks of
//! size one encode scalar inequalities. Problem sizes here are tiny, so
//! every step uses dense factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Smallest eigenvalue of the symmetric part.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// One affine symmetric-matrix-valued function of the decision vector.
#[derive(Debug, Clone)]
pub(crate) struct AffineBlock {
    pub constant: DMatrix<f64>,
    /// One coefficient matrix per decision variable (zero matrices allowed).
    pub coeffs: Vec<DMatrix<f64>>,
}

impl AffineBlock {
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (coeff, &xi) in self.coeffs.iter().zip(x.iter()) {
            for (dst, src) in m.iter_mut().zip(coeff.iter()) {
                *dst += xi * src;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub objective: DVector<f64>,
    pub blocks: Vec<AffineBlock>,
    /// `active[k][i]`: block k actually depends on variable i.
    active: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PathOptions {
    /// Target barrier gap ν/μ.
    pub gap_tol: f64,
    pub mu0: f64,
    pub mu_factor: f64,
    /// Total Newton-iteration budget.
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PathStatus {
    /// Gap target reached.
    Converged,
    /// The caller's early-stop predicate fired.
    EarlyStopped,
    /// Newton budget exhausted.
    IterationLimit,
    /// Line search could not make progress.
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct PathResult {
    pub x: DVector<f64>,
    pub status: PathStatus,
    pub newton_iters: usize,
    pub mu: f64,
    /// Newton decrement at the returned point. Together with μ it yields
    /// the certified optimality bound (ν + δ·√ν)/μ of a near-central
    /// iterate.
    pub decrement: f64,
}

struct NewtonData {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl ConeProgram {
    pub fn new(objective: DVector<f64>, blocks: Vec<AffineBlock>) -> Self {
        let nvars = objective.len();
        let active = blocks
            .iter()
            .map(|b| {
                assert_eq!(b.coeffs.len(), nvars, "coefficient count != variable count");
                b.coeffs.iter().map(|c| c.amax() != 0.0).collect()
            })
            .collect();
        Self {
            objective,
            blocks,
            active,
        }
    }

    /// Barrier parameter: total dimension of all blocks.
    pub fn nu(&self) -> f64 {
        self.blocks.iter().map(|b| b.constant.nrows() as f64).sum()
    }

    fn factorize(&self, x: &DVector<f64>) -> Option<Vec<Cholesky<f64, nalgebra::Dyn>>> {
        self.blocks
            .iter()
            .map(|b| Cholesky::new(b.eval(x)))
            .collect()
    }

    /// μ·cᵀx − Σ logdet Bₖ(x) from existing factorizations.
    fn merit(&self, mu: f64, x: &DVector<f64>, chols: &[Cholesky<f64, nalgebra::Dyn>]) -> f64 {
        let mut f = mu * self.objective.dot(x);
        for chol in chols {
            let l = chol.l_dirty();
            for i in 0..l.nrows() {
                f -= 2.0 * l[(i, i)].ln();
            }
        }
        f
    }

    fn newton_data(
        &self,
        mu: f64,
        chols: &[Cholesky<f64, nalgebra::Dyn>],
    ) -> NewtonData {
        let n = self.objective.len();
        let mut grad = mu * &self.objective;
        let mut hess = DMatrix::zeros(n, n);
        for (k, block) in self.blocks.iter().enumerate() {
            let inv = chols[k].inverse();
            let vars: Vec<usize> = (0..n).filter(|&i| self.active[k][i]).collect();
            let s: Vec<DMatrix<f64>> = vars.iter().map(|&i| &inv * &block.coeffs[i]).collect();
            for (a, &i) in vars.iter().enumerate() {
                grad[i] -= s[a].trace();
                for (b, &j) in vars.iter().enumerate().skip(a) {
                    let mut t = 0.0;
                    let q = s[a].nrows();
                    for r in 0..q {
                        for c in 0..q {
                            t += s[a][(r, c)] * s[b][(c, r)];
                        }
                    }
                    hess[(i, j)] += t;
                    if i != j {
                        hess[(j, i)] = hess[(i, j)];
                    }
                }
            }
        }
        NewtonData { grad, hess }
    }

    /// Follow the central path from the strictly feasible `x0`.
    pub fn solve_path(
        &self,
        x0: DVector<f64>,
        opts: &PathOptions,
        early_stop: Option<&dyn Fn(&DVector<f64>) -> bool>,
    ) -> PathResult {
        let nu = self.nu();
        let mut x = x0;
        // Scale the initial weight to the starting objective so the first
        // center is interior rather than pinned against the boundary when
        // the optimum lives at a large objective value.
        let obj0 = self.objective.dot(&x).abs();
        let mut mu = (opts.mu0 * nu / nu.max(obj0)).max(1e-12);
        let mut iters = 0usize;
        let mut dec = f64::INFINITY;
        let mut chols = match self.factorize(&x) {
            Some(c) => c,
            None => {
                return PathResult {
                    x,
                    status: PathStatus::Stalled,
                    newton_iters: 0,
                    mu,
                    decrement: f64::INFINITY,
                }
            }
        };

        let finish = |x: DVector<f64>, status: PathStatus, iters: usize, mu: f64, dec: f64| {
            PathResult {
                x,
                status,
                newton_iters: iters,
                mu,
                decrement: dec,
            }
        };

        loop {
            // Center at the current μ. Intermediate stages only need to
            // stay in Newton's quadratic region; the last stage centers to
            // the rounding floor so the gap certificate is tight. The gap
            // target is relative to the objective scale (an absolute
            // target at a large optimum would demand more than f64 can
            // certify), and the 0.9 keeps the certificate (ν + δ√ν)/μ
            // under it even with a nonzero final decrement.
            let final_stage =
                nu / mu <= 0.9 * opts.gap_tol * (1.0 + self.objective.dot(&x).abs());
            let target_dec_sq = if final_stage { 2e-13 } else { 1e-4 };
            let mut prev_dec_sq = f64::INFINITY;
            let mut jammed = 0usize;
            loop {
                if std::env::var_os("RCBF_IPM_TRACE").is_some() {
                    eprintln!("ipm: mu={mu:.3e} iters={iters} x={:?}", x.as_slice());
                }
                if let Some(stop) = early_stop {
                    if stop(&x) {
                        return finish(x, PathStatus::EarlyStopped, iters, mu, dec);
                    }
                }
                if iters >= opts.budget {
                    return finish(x, PathStatus::IterationLimit, iters, mu, dec);
                }
                let nd = self.newton_data(mu, &chols);
                // The barrier Hessian can be singular when a block leaves
                // some directions unconstrained (e.g. Phase I with a
                // rank-deficient control coupling). A baseline Tikhonov
                // term keeps the solve out of the null space; escalate it
                // if the factorization still fails.
                let dir = {
                    let scale = nd.hess.diagonal().amax().max(1.0);
                    let mut found = None;
                    for attempt in 0..5 {
                        let mut h = nd.hess.clone();
                        let reg = scale * 1e-12 * 1000f64.powi(attempt);
                        for i in 0..h.nrows() {
                            h[(i, i)] += reg;
                        }
                        if let Some(ch) = Cholesky::new(h) {
                            found = Some(ch.solve(&(-&nd.grad)));
                            break;
                        }
                    }
                    match found {
                        Some(d) if d.iter().all(|v| v.is_finite()) => d,
                        _ => return finish(x, PathStatus::Stalled, iters, mu, dec),
                    }
                };
                let gd = nd.grad.dot(&dir);
                let dec_sq = (-gd).max(0.0); // Newton decrement squared (H ≻ 0)
                dec = dec_sq.sqrt();
                if dec_sq <= target_dec_sq {
                    break;
                }
                // Rounding floor: a decrement this small that has stopped
                // contracting will not improve further in f64.
                if dec_sq < 1e-6 && dec_sq > 0.5 * prev_dec_sq {
                    break;
                }
                prev_dec_sq = dec_sq;

                iters += 1;
                let f0 = self.merit(mu, &x, &chols);
                // Cap the raw step so one iteration cannot fling the
                // iterate far outside the region the factorizations were
                // computed in (possible along nearly flat directions).
                let max_step = 1e3 * (1.0 + x.norm());
                let mut alpha = (max_step / dir.norm().max(1e-300)).min(1.0);
                let mut accepted = false;
                // Inside the quadratic-convergence region the full step is
                // valid and the merit comparison is below rounding noise.
                let skip_armijo = dec_sq <= 1e-4;
                let mut f1 = f0;
                for _ in 0..60 {
                    let cand = &x + alpha * &dir;
                    if !cand.iter().all(|v| v.is_finite()) {
                        alpha *= 0.5;
                        continue;
                    }
                    if let Some(cand_chols) = self.factorize(&cand) {
                        let fc = self.merit(mu, &cand, &cand_chols);
                        let ok = skip_armijo || fc <= f0 + 0.3 * alpha * gd;
                        if ok {
                            x = cand;
                            chols = cand_chols;
                            accepted = true;
                            f1 = fc;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    return finish(x, PathStatus::Stalled, iters, mu, dec);
                }
                // Boundary jam: steps are accepted but the merit no longer
                // moves (line search throttled against a nearly singular
                // block). Treat the centering as finished at this floor.
                if f0 - f1 <= 1e-13 * (1.0 + f0.abs()) {
                    jammed += 1;
                    if jammed >= 5 {
                        break;
                    }
                } else {
                    jammed = 0;
                }
            }

            if final_stage {
                return finish(x, PathStatus::Converged, iters, mu, dec);
            }
            mu = (mu * opts.mu_factor).min(1e300);
        }
    }
}
