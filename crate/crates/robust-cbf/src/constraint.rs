//! Assembly of the relative-degree-two safety constraint.
//!
//! From the jets of the dynamics and barrier, this module forms the scalar
//! inequality
//!
//! ```text
//!     (Cᵀθ + d)ᵀ u  ≤  θᵀ H θ + fᵀ θ + g
//! ```
//!
//! equivalent to `ḧ + α·ḣ + β·h ≥ 0` along the closed loop, and rewrites it
//! over the unit ball via `θ = θ̂ + η·z`, `‖z‖ ≤ 1`, yielding the
//! normalized ("tilde") coefficients the SDP and the oracles consume.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{BarrierJet, ModelJet};

/// Gains `(α, β)` of the invariance condition `ḧ + α·ḣ + β·h ≥ 0`.
///
/// Both must be positive with `α² ≥ 4β`, so `s² + αs + β` has real
/// negative roots and the scalar comparison argument applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    alpha: f64,
    beta: f64,
}

impl GainPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gains must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        if alpha * alpha < 4.0 * beta {
            return Err(Error::InvalidArgument(format!(
                "alpha^2 >= 4 beta required for real roots, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Magnitude of the smaller root of `s² + αs + β`; the initial
    /// condition `ḣ(0) + λ₂·h(0) ≥ 0` uses this.
    pub fn slow_root(&self) -> f64 {
        (self.alpha - (self.alpha * self.alpha - 4.0 * self.beta).sqrt()) / 2.0
    }
}

impl Default for GainPair {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
        }
    }
}

/// First barrier derivative split into its parameter-dependent part:
/// `ḣ = wᵀθ + v`.
#[derive(Debug, Clone)]
pub struct HDotData {
    pub w: DVector<f64>,
    pub v: f64,
    pub h: f64,
    pub hdot: f64,
}

/// Coefficients of the raw constraint `(Cᵀθ + d)ᵀu ≤ θᵀHθ + fᵀθ + g`.
///
/// `control_coef` is `C` (p×m), `control_offset` is `d` (m),
/// `bound_quad` is `H` (p×p, not necessarily symmetric), `bound_lin` is
/// `f` (p) and `bound_const` is `g`. The control dimension m equals the
/// state dimension n (the robot is velocity controlled in the same space).
#[derive(Debug, Clone)]
pub struct ConstraintData {
    pub control_coef: DMatrix<f64>,
    pub control_offset: DVector<f64>,
    pub bound_quad: DMatrix<f64>,
    pub bound_lin: DVector<f64>,
    pub bound_const: f64,
}

impl ConstraintData {
    pub fn param_dim(&self) -> usize {
        self.control_coef.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.control_coef.ncols()
    }

    /// Constraint slack `θᵀHθ + fᵀθ + g − (Cᵀθ + d)ᵀu` at a concrete
    /// parameter vector; nonnegative iff the inequality holds there.
    pub fn residual_at(&self, theta: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let row = self.control_coef.transpose() * theta + &self.control_offset;
        (theta.transpose() * &self.bound_quad * theta)[(0, 0)] + self.bound_lin.dot(theta)
            + self.bound_const
            - row.dot(u)
    }

    /// Rewrite over the unit ball via `θ = θ̂ + η·z`.
    ///
    /// The quadratic coefficient is symmetrized exactly
    /// (`H̃ = η²·(H + Hᵀ)/2`) and the linear one uses `η·(H + Hᵀ)·θ̂`: the
    /// expansion of `(θ̂ + ηz)ᵀH(θ̂ + ηz)` produces the symmetric part in
    /// both, and `2ηHθ̂` would be wrong for non-symmetric `H`.
    pub fn normalize(&self, est: &ParameterEstimate) -> Result<TildeConstraint> {
        if est.theta_hat.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "estimate dimension {} != parameter dimension {}",
                est.theta_hat.len(),
                self.param_dim()
            )));
        }
        let eta = est.eta;
        let sym = (&self.bound_quad + self.bound_quad.transpose()) * 0.5;
        Ok(TildeConstraint {
            control_coef: eta * &self.control_coef,
            control_offset: self.control_coef.transpose() * &est.theta_hat
                + &self.control_offset,
            bound_quad: eta * eta * &sym,
            bound_lin: eta * &self.bound_lin + eta * (2.0 * &sym) * &est.theta_hat,
            bound_const: (est.theta_hat.transpose() * &self.bound_quad * &est.theta_hat)
                [(0, 0)]
                + self.bound_lin.dot(&est.theta_hat)
                + self.bound_const,
        })
    }
}

/// Ball of parameters: `‖θ − θ̂‖ ≤ η`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    pub theta_hat: DVector<f64>,
    pub eta: f64,
}

impl ParameterEstimate {
    pub fn new(theta_hat: DVector<f64>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uncertainty radius must be >= 0, got {eta}"
            )));
        }
        if theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite estimate".into()));
        }
        Ok(Self { theta_hat, eta })
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        (theta - &self.theta_hat).norm() <= self.eta + 1e-12
    }
}

/// Ball-normalized constraint `(zᵀC̃ + d̃ᵀ)u ≤ zᵀH̃z + f̃ᵀz + g̃` for all
/// `‖z‖ ≤ 1`. `bound_quad` is symmetric by construction.
#[derive(Debug, Clone)]
pub struct TildeConstraint {
    pub control_coef: DMatrix<f64>,
    pub control_offset: DVector<f64>,
    pub bound_quad: DMatrix<f64>,
    pub bound_lin: DVector<f64>,
    pub bound_const: f64,
}

impl TildeConstraint {
    pub fn param_dim(&self) -> usize {
        self.control_coef.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.control_coef.ncols()
    }

    /// Constraint slack `zᵀH̃z + (f̃ − C̃u)ᵀz + g̃ − d̃ᵀu` at one `(u, z)`;
    /// nonnegativity is exactly the normalized inequality at that point.
    /// `z` need not lie in the ball — callers enforce membership where it
    /// matters.
    pub fn residual(&self, u: &DVector<f64>, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.bound_quad * z)[(0, 0)]
            + (&self.bound_lin - &self.control_coef * u).dot(z)
            + self.bound_const
            - self.control_offset.dot(u)
    }
}

/// Form `ḣ = wᵀθ + v` at one state: `w = Gᵀ∇h`, `v = fᵀ∇h`.
pub fn assemble_hdot(
    jet_m: &ModelJet,
    jet_b: &BarrierJet,
    theta: &DVector<f64>,
) -> Result<HDotData> {
    let n = jet_m.state_dim();
    if jet_b.grad_h.len() != n || theta.len() != jet_m.param_dim() {
        return Err(Error::DimensionMismatch(
            "hdot assembly: jet/parameter dimensions disagree".into(),
        ));
    }
    let w = jet_m.g.transpose() * &jet_b.grad_h;
    let v = jet_m.f.dot(&jet_b.grad_h);
    Ok(HDotData {
        hdot: w.dot(theta) + v,
        w,
        v,
        h: jet_b.h,
    })
}

/// Assemble the raw constraint coefficients at one state.
///
/// With `w = Gᵀ∇h` and `v = fᵀ∇h`:
///
/// ```text
///   ∂w/∂x_A = (∂G/∂x_A)ᵀ∇h + Gᵀ∇²h        (p×n; ∇h depends on x_A only)
///   ∂w/∂x_R = (∂G/∂x_R)ᵀ∇h                 (p×n)
///   ∂v/∂x_A = (∂f/∂x_A)ᵀ∇h + ∇²h·f         (n)
///   ∂v/∂x_R = (∂f/∂x_R)ᵀ∇h                 (n)
///   C = −∂w/∂x_R            d = −∂v/∂x_R
///   H = (∂w/∂x_A)·G
///   f = (∂w/∂x_A)·f + Gᵀ·(∂v/∂x_A) + α·w
///   g = (∂v/∂x_A)ᵀ·f + α·v + β·h
/// ```
pub fn assemble_constraint(
    jet_m: &ModelJet,
    jet_b: &BarrierJet,
    gains: &GainPair,
) -> Result<ConstraintData> {
    let n = jet_m.state_dim();
    let p = jet_m.param_dim();
    if jet_b.grad_h.len() != n {
        return Err(Error::DimensionMismatch(
            "constraint assembly: barrier dimension != state dimension".into(),
        ));
    }

    let hdot = assemble_hdot(jet_m, jet_b, &DVector::zeros(p))?;
    let gt_hess = jet_m.g.transpose() * &jet_b.hess_h;

    let mut dw_dxa = DMatrix::zeros(p, n);
    let mut dw_dxr = DMatrix::zeros(p, n);
    for j in 0..p {
        let row_a = jet_m.dg_dxa[j].transpose() * &jet_b.grad_h;
        let row_r = jet_m.dg_dxr[j].transpose() * &jet_b.grad_h;
        for k in 0..n {
            dw_dxa[(j, k)] = row_a[k] + gt_hess[(j, k)];
            dw_dxr[(j, k)] = row_r[k];
        }
    }
    let dv_dxa = jet_m.df_dxa.transpose() * &jet_b.grad_h + &jet_b.hess_h * &jet_m.f;
    let dv_dxr = jet_m.df_dxr.transpose() * &jet_b.grad_h;

    Ok(ConstraintData {
        control_coef: -&dw_dxr,
        control_offset: -dv_dxr,
        bound_quad: &dw_dxa * &jet_m.g,
        bound_lin: &dw_dxa * &jet_m.f + jet_m.g.transpose() * &dv_dxa
            + gains.alpha * &hdot.w,
        bound_const: dv_dxa.dot(&jet_m.f) + gains.alpha * hdot.v + gains.beta * jet_b.h,
    })
}

/// Evaluate the same constraint slack two ways: through the tilde
/// coefficients at `(u, z)` and through the raw coefficients at
/// `θ = θ̂ + η·z`. The substitution is exact, so both must agree.
pub fn residual_pair(
    raw: &ConstraintData,
    est: &ParameterEstimate,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<(f64, f64)> {
    let tilde = raw.normalize(est)?;
    let theta = &est.theta_hat + est.eta * z;
    Ok((tilde.residual(u, z), raw.residual_at(&theta, u)))
}
