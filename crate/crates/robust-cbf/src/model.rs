//! Parameter-affine agent dynamics `ẋ_A = G(x_A, x_R)·θ + f(x_A, x_R)`
//! and barrier functions `h(x_A)`, evaluated together with every first and
//! second derivative the constraint assembly needs, plus finite-difference
//! validation of those derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Positions of the human (`xa`) and the robot (`xr`), both in ℝⁿ (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub xa: DVector<f64>,
    pub xr: DVector<f64>,
}

impl AgentState {
    pub fn new(xa: DVector<f64>, xr: DVector<f64>) -> Result<Self> {
        if xa.len() != xr.len() || xa.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "agent state needs equal nonzero dimensions, got xa={} xr={}",
                xa.len(),
                xr.len()
            )));
        }
        if xa.iter().chain(xr.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite agent state".into()));
        }
        Ok(Self { xa, xr })
    }

    pub fn dim(&self) -> usize {
        self.xa.len()
    }
}

/// Dynamics evaluated at one state: the basis matrix `G` (n×p), the drift
/// `f` (n), and all four partial-derivative blocks.
///
/// `dg_dxa[j]` is the n×n Jacobian of column `j` of `G` with respect to
/// `x_A` (entry `(i, k)` is `∂G[i,j]/∂x_A[k]`); `dg_dxr[j]` likewise for
/// `x_R`. Storing the full third-order arrays lets the constraint assembly
/// form `∂w/∂x_A` and `∂w/∂x_R` without re-evaluating the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelJet {
    pub g: DMatrix<f64>,
    pub f: DVector<f64>,
    pub dg_dxa: Vec<DMatrix<f64>>,
    pub dg_dxr: Vec<DMatrix<f64>>,
    pub df_dxa: DMatrix<f64>,
    pub df_dxr: DMatrix<f64>,
}

impl ModelJet {
    pub fn state_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.g.ncols()
    }

    /// Velocity of the human for a given parameter vector: `G·θ + f`.
    pub fn velocity(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.g * theta + &self.f
    }

    fn check_shapes(&self) -> Result<()> {
        let (n, p) = (self.state_dim(), self.param_dim());
        let square = |m: &DMatrix<f64>| m.nrows() == n && m.ncols() == n;
        let ok = self.f.len() == n
            && self.dg_dxa.len() == p
            && self.dg_dxr.len() == p
            && self.dg_dxa.iter().all(square)
            && self.dg_dxr.iter().all(square)
            && square(&self.df_dxa)
            && square(&self.df_dxr);
        if !ok {
            return Err(Error::DimensionMismatch(
                "model jet blocks inconsistent with (n, p)".into(),
            ));
        }
        let finite = self.g.iter().all(|v| v.is_finite())
            && self.f.iter().all(|v| v.is_finite())
            && self.dg_dxa.iter().chain(&self.dg_dxr).all(|m| m.iter().all(|v| v.is_finite()))
            && self.df_dxa.iter().chain(self.df_dxr.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical("non-finite model jet".into()));
        }
        Ok(())
    }
}

/// Barrier value with gradient and Hessian at one human position.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierJet {
    pub h: f64,
    pub grad_h: DVector<f64>,
    pub hess_h: DMatrix<f64>,
}

impl BarrierJet {
    fn check_shapes(&self, n: usize) -> Result<()> {
        if self.grad_h.len() != n || self.hess_h.nrows() != n || self.hess_h.ncols() != n {
            return Err(Error::DimensionMismatch("barrier jet shape".into()));
        }
        let scale = 1.0 + self.hess_h.amax();
        let asym = (&self.hess_h - self.hess_h.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "barrier Hessian asymmetric by {asym:e}"
            )));
        }
        if !self.h.is_finite()
            || self.grad_h.iter().any(|v| !v.is_finite())
            || self.hess_h.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("non-finite barrier jet".into()));
        }
        Ok(())
    }
}

/// Dynamics evaluator. Implementations must be pure: identical inputs
/// produce bit-identical jets.
pub trait DynamicsEval: Send + Sync {
    /// `(n, p)`: state dimension and parameter dimension.
    fn dims(&self) -> (usize, usize);
    fn eval(&self, s: &AgentState) -> ModelJet;
}

/// Barrier evaluator over the human position. Must be pure.
pub trait BarrierEval: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, xa: &DVector<f64>) -> BarrierJet;
}

/// A named bundle of one dynamics evaluator and one barrier evaluator with
/// consistent dimensions.
#[derive(Clone)]
pub struct ScenarioModel {
    name: String,
    n: usize,
    p: usize,
    dynamics: Arc<dyn DynamicsEval>,
    barrier: Arc<dyn BarrierEval>,
}

impl std::fmt::Debug for ScenarioModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .finish()
    }
}

impl ScenarioModel {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn DynamicsEval>,
        barrier: Arc<dyn BarrierEval>,
    ) -> Result<Self> {
        let (n, p) = dynamics.dims();
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("zero model dimension".into()));
        }
        if barrier.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "barrier dimension {} != state dimension {}",
                barrier.dim(),
                n
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            p,
            dynamics,
            barrier,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn param_dim(&self) -> usize {
        self.p
    }
}

/// Evaluate `G`, `f` and their derivative blocks at `s`.
pub fn eval_model_jet(model: &ScenarioModel, s: &AgentState) -> Result<ModelJet> {
    if s.dim() != model.n {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} != model dimension {}",
            s.dim(),
            model.n
        )));
    }
    let jet = model.dynamics.eval(s);
    if jet.state_dim() != model.n || jet.param_dim() != model.p {
        return Err(Error::DimensionMismatch(
            "dynamics evaluator returned wrong dimensions".into(),
        ));
    }
    jet.check_shapes()?;
    Ok(jet)
}

/// Evaluate `h`, `∇h`, `∇²h` at `xa`.
pub fn eval_barrier_jet(model: &ScenarioModel, xa: &DVector<f64>) -> Result<BarrierJet> {
    if xa.len() != model.n {
        return Err(Error::DimensionMismatch(format!(
            "position dimension {} != model dimension {}",
            xa.len(),
            model.n
        )));
    }
    let jet = model.barrier.eval(xa);
    jet.check_shapes(model.n)?;
    Ok(jet)
}

// ── built-in dynamics ──────────────────────────────────────────────────

/// `G = [x_A − x_R]`, `f = 0` (p = 1): the human is repelled from the
/// robot at a rate proportional to their separation.
#[derive(Debug, Clone)]
pub struct RepelDynamics {
    pub n: usize,
}

impl DynamicsEval for RepelDynamics {
    fn dims(&self) -> (usize, usize) {
        (self.n, 1)
    }

    fn eval(&self, s: &AgentState) -> ModelJet {
        let n = self.n;
        ModelJet {
            g: DMatrix::from_column_slice(n, 1, (&s.xa - &s.xr).as_slice()),
            f: DVector::zeros(n),
            dg_dxa: vec![DMatrix::identity(n, n)],
            dg_dxr: vec![-DMatrix::identity(n, n)],
            df_dxa: DMatrix::zeros(n, n),
            df_dxr: DMatrix::zeros(n, n),
        }
    }
}

/// `G = [x_A − x_R, goal − x_A]`, `f = 0` (p = 2): repulsion from the
/// robot plus attraction toward a fixed goal.
#[derive(Debug, Clone)]
pub struct AttractRepelDynamics {
    pub goal: DVector<f64>,
}

impl DynamicsEval for AttractRepelDynamics {
    fn dims(&self) -> (usize, usize) {
        (self.goal.len(), 2)
    }

    fn eval(&self, s: &AgentState) -> ModelJet {
        let n = self.goal.len();
        let mut g = DMatrix::zeros(n, 2);
        g.set_column(0, &(&s.xa - &s.xr));
        g.set_column(1, &(&self.goal - &s.xa));
        ModelJet {
            g,
            f: DVector::zeros(n),
            dg_dxa: vec![DMatrix::identity(n, n), -DMatrix::identity(n, n)],
            dg_dxr: vec![-DMatrix::identity(n, n), DMatrix::zeros(n, n)],
            df_dxa: DMatrix::zeros(n, n),
            df_dxr: DMatrix::zeros(n, n),
        }
    }
}

/// [`AttractRepelDynamics`] plus a linear drift `f = −k·x_A`.
#[derive(Debug, Clone)]
pub struct DriftDynamics {
    pub goal: DVector<f64>,
    pub gain: f64,
}

impl DynamicsEval for DriftDynamics {
    fn dims(&self) -> (usize, usize) {
        (self.goal.len(), 2)
    }

    fn eval(&self, s: &AgentState) -> ModelJet {
        let base = AttractRepelDynamics {
            goal: self.goal.clone(),
        }
        .eval(s);
        let n = self.goal.len();
        ModelJet {
            f: -self.gain * &s.xa,
            df_dxa: -self.gain * DMatrix::identity(n, n),
            ..base
        }
    }
}

// ── built-in barriers ──────────────────────────────────────────────────

/// Stay inside a disk: `h = R² − ‖x − c‖²`.
#[derive(Debug, Clone)]
pub struct DiskBarrier {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BarrierEval for DiskBarrier {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, xa: &DVector<f64>) -> BarrierJet {
        let d = xa - &self.center;
        let n = self.center.len();
        BarrierJet {
            h: self.radius * self.radius - d.norm_squared(),
            grad_h: -2.0 * &d,
            hess_h: -2.0 * DMatrix::identity(n, n),
        }
    }
}

/// Stay outside a ring: `h = ‖x − c‖² − r²`.
#[derive(Debug, Clone)]
pub struct RingBarrier {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BarrierEval for RingBarrier {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, xa: &DVector<f64>) -> BarrierJet {
        let d = xa - &self.center;
        let n = self.center.len();
        BarrierJet {
            h: d.norm_squared() - self.radius * self.radius,
            grad_h: 2.0 * &d,
            hess_h: 2.0 * DMatrix::identity(n, n),
        }
    }
}

/// Look up a built-in dynamics model by its configuration name.
///
/// `goal` is required by `attract-repel` and `drift`; `gain` by `drift`.
pub fn dynamics_by_name(
    name: &str,
    n: usize,
    goal: Option<&DVector<f64>>,
    gain: Option<f64>,
) -> Result<Arc<dyn DynamicsEval>> {
    let need_goal = || -> Result<DVector<f64>> {
        let g = goal.ok_or_else(|| {
            Error::InvalidArgument(format!("model `{name}` requires a goal point"))
        })?;
        if g.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "goal dimension {} != state dimension {n}",
                g.len()
            )));
        }
        Ok(g.clone())
    };
    match name {
        "linear" => Ok(Arc::new(RepelDynamics { n })),
        "attract-repel" => Ok(Arc::new(AttractRepelDynamics { goal: need_goal()? })),
        "drift" => Ok(Arc::new(DriftDynamics {
            goal: need_goal()?,
            gain: gain.ok_or_else(|| {
                Error::InvalidArgument("model `drift` requires a drift gain".into())
            })?,
        })),
        other => Err(Error::InvalidArgument(format!(
            "unknown dynamics model `{other}` (expected linear, attract-repel or drift)"
        ))),
    }
}

/// Look up a built-in barrier by its configuration name.
pub fn barrier_by_name(
    name: &str,
    center: DVector<f64>,
    radius: f64,
) -> Result<Arc<dyn BarrierEval>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "barrier radius must be positive, got {radius}"
        )));
    }
    match name {
        "disk" => Ok(Arc::new(DiskBarrier { center, radius })),
        "ring" => Ok(Arc::new(RingBarrier { center, radius })),
        other => Err(Error::InvalidArgument(format!(
            "unknown barrier `{other}` (expected disk or ring)"
        ))),
    }
}

// ── finite-difference validation ───────────────────────────────────────

/// Outcome of comparing one analytic derivative block against central
/// finite differences.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub block: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub blocks: Vec<BlockCheck>,
    pub tol: f64,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.blocks.iter().all(|b| b.pass)
    }
}

/// Relative error of a finite-difference block against the analytic one,
/// normalized by `1 + max|analytic|` so zero blocks compare absolutely.
fn block_error(fd: &[f64], analytic: &[f64]) -> f64 {
    let scale = 1.0 + analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    fd.iter()
        .zip(analytic)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
        / scale
}

/// Check every analytic derivative block of the model and barrier at `s`
/// against central finite differences with the given step.
pub fn check_jets_fd(
    model: &ScenarioModel,
    s: &AgentState,
    step: f64,
    tol: f64,
) -> Result<ValidationReport> {
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step and tolerance must be positive".into(),
        ));
    }
    let n = model.n;
    let p = model.p;
    let jet = eval_model_jet(model, s)?;
    let barrier = eval_barrier_jet(model, &s.xa)?;

    let perturbed = |which_xa: bool, k: usize, delta: f64| -> Result<ModelJet> {
        let mut st = s.clone();
        if which_xa {
            st.xa[k] += delta;
        } else {
            st.xr[k] += delta;
        }
        eval_model_jet(model, &st)
    };

    // FD of G and f with respect to one coordinate of xa or xr.
    let mut fd_dg_dxa = vec![DMatrix::zeros(n, n); p];
    let mut fd_dg_dxr = vec![DMatrix::zeros(n, n); p];
    let mut fd_df_dxa = DMatrix::zeros(n, n);
    let mut fd_df_dxr = DMatrix::zeros(n, n);
    for k in 0..n {
        for (which_xa, fd_dg, fd_df) in [
            (true, &mut fd_dg_dxa, &mut fd_df_dxa),
            (false, &mut fd_dg_dxr, &mut fd_df_dxr),
        ] {
            let plus = perturbed(which_xa, k, step)?;
            let minus = perturbed(which_xa, k, -step)?;
            let dg = (&plus.g - &minus.g) / (2.0 * step);
            let df = (&plus.f - &minus.f) / (2.0 * step);
            for j in 0..p {
                for i in 0..n {
                    fd_dg[j][(i, k)] = dg[(i, j)];
                }
            }
            for i in 0..n {
                fd_df[(i, k)] = df[i];
            }
        }
    }

    // FD of h and ∇h with respect to xa.
    let mut fd_grad = DVector::zeros(n);
    let mut fd_hess = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut plus = s.xa.clone();
        let mut minus = s.xa.clone();
        plus[k] += step;
        minus[k] -= step;
        let bp = eval_barrier_jet(model, &plus)?;
        let bm = eval_barrier_jet(model, &minus)?;
        fd_grad[k] = (bp.h - bm.h) / (2.0 * step);
        let col = (&bp.grad_h - &bm.grad_h) / (2.0 * step);
        fd_hess.set_column(k, &col);
    }

    let flatten = |ms: &[DMatrix<f64>]| -> Vec<f64> {
        ms.iter().flat_map(|m| m.iter().copied()).collect()
    };
    let checks = vec![
        ("dG/dxA", block_error(&flatten(&fd_dg_dxa), &flatten(&jet.dg_dxa))),
        ("dG/dxR", block_error(&flatten(&fd_dg_dxr), &flatten(&jet.dg_dxr))),
        (
            "df/dxA",
            block_error(fd_df_dxa.as_slice(), jet.df_dxa.as_slice()),
        ),
        (
            "df/dxR",
            block_error(fd_df_dxr.as_slice(), jet.df_dxr.as_slice()),
        ),
        (
            "grad_h",
            block_error(fd_grad.as_slice(), barrier.grad_h.as_slice()),
        ),
        (
            "hess_h",
            block_error(fd_hess.as_slice(), barrier.hess_h.as_slice()),
        ),
    ];

    Ok(ValidationReport {
        blocks: checks
            .into_iter()
            .map(|(name, err)| BlockCheck {
                block: name.to_string(),
                max_rel_err: err,
                pass: err <= tol,
            })
            .collect(),
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::XorShift64Star;

    pub(crate) fn linear_disk(n: usize, radius: f64) -> ScenarioModel {
        ScenarioModel::new(
            "linear/disk",
            Arc::new(RepelDynamics { n }),
            Arc::new(DiskBarrier {
                center: DVector::zeros(n),
                radius,
            }),
        )
        .unwrap()
    }

    fn state2(xa: [f64; 2], xr: [f64; 2]) -> AgentState {
        AgentState::new(DVector::from_row_slice(&xa), DVector::from_row_slice(&xr)).unwrap()
    }

    #[test]
    fn linear_model_jet_matches_hand_values() {
        let model = linear_disk(2, 2.0);
        let s = state2([1.0, 0.0], [2.0, 0.0]);
        let jet = eval_model_jet(&model, &s).unwrap();
        assert_eq!(jet.g, DMatrix::from_column_slice(2, 1, &[-1.0, 0.0]));
        assert_eq!(jet.f, DVector::zeros(2));
        assert_eq!(jet.dg_dxa[0], DMatrix::identity(2, 2));
        assert_eq!(jet.dg_dxr[0], -DMatrix::identity(2, 2));
        assert_eq!(jet.df_dxa, DMatrix::zeros(2, 2));
        assert_eq!(jet.df_dxr, DMatrix::zeros(2, 2));
    }

    #[test]
    fn attract_repel_columns_match_hand_values() {
        let model = ScenarioModel::new(
            "attract-repel/disk",
            Arc::new(AttractRepelDynamics {
                goal: DVector::zeros(2),
            }),
            Arc::new(DiskBarrier {
                center: DVector::zeros(2),
                radius: 2.0,
            }),
        )
        .unwrap();
        let jet = eval_model_jet(&model, &state2([1.0, 0.0], [2.0, 0.0])).unwrap();
        assert_eq!(jet.g.column(0), DVector::from_row_slice(&[-1.0, 0.0]).column(0));
        assert_eq!(jet.g.column(1), DVector::from_row_slice(&[-1.0, 0.0]).column(0));
    }

    #[test]
    fn disk_barrier_jet_matches_hand_values() {
        let model = linear_disk(2, 2.0);
        let b = eval_barrier_jet(&model, &DVector::from_row_slice(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(b.h, 3.0);
        assert_eq!(b.grad_h, DVector::from_row_slice(&[-2.0, 0.0]));
        assert_eq!(b.hess_h, -2.0 * DMatrix::identity(2, 2));

        let at_center = eval_barrier_jet(&model, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(at_center.h, 4.0);
        assert_eq!(at_center.grad_h, DVector::zeros(2));
    }

    #[test]
    fn ring_barrier_jet_matches_hand_values() {
        let model = ScenarioModel::new(
            "linear/ring",
            Arc::new(RepelDynamics { n: 2 }),
            Arc::new(RingBarrier {
                center: DVector::zeros(2),
                radius: 1.0,
            }),
        )
        .unwrap();
        let b = eval_barrier_jet(&model, &DVector::from_row_slice(&[2.0, 0.0])).unwrap();
        assert_relative_eq!(b.h, 3.0);
        assert_eq!(b.grad_h, DVector::from_row_slice(&[4.0, 0.0]));
        assert_eq!(b.hess_h, 2.0 * DMatrix::identity(2, 2));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = linear_disk(2, 2.0);
        let s3 = AgentState::new(DVector::zeros(3), DVector::zeros(3)).unwrap();
        assert!(matches!(
            eval_model_jet(&model, &s3),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            eval_barrier_jet(&model, &DVector::zeros(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn first_order_taylor_agrees_with_jet() {
        let model = ScenarioModel::new(
            "drift/disk",
            Arc::new(DriftDynamics {
                goal: DVector::from_row_slice(&[0.5, -0.25]),
                gain: 0.7,
            }),
            Arc::new(DiskBarrier {
                center: DVector::zeros(2),
                radius: 2.0,
            }),
        )
        .unwrap();
        let s = state2([0.8, -0.4], [1.5, 0.3]);
        let jet = eval_model_jet(&model, &s).unwrap();
        let delta = 1e-5;
        let mut s2 = s.clone();
        s2.xa[0] += delta;
        s2.xr[1] -= delta;
        let jet2 = eval_model_jet(&model, &s2).unwrap();

        let mut predicted_f = jet.f.clone();
        predicted_f += jet.df_dxa.column(0) * delta;
        predicted_f -= jet.df_dxr.column(1) * delta;
        assert!((jet2.f - predicted_f).amax() < 1e-9);

        for j in 0..2 {
            let mut predicted_col = jet.g.column(j).clone_owned();
            predicted_col += jet.dg_dxa[j].column(0) * delta;
            predicted_col -= jet.dg_dxr[j].column(1) * delta;
            assert!((jet2.g.column(j) - predicted_col).amax() < 1e-9);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let model = linear_disk(2, 2.0);
        let s = state2([0.3, -1.2], [0.9, 0.4]);
        assert_eq!(
            eval_model_jet(&model, &s).unwrap(),
            eval_model_jet(&model, &s).unwrap()
        );
        assert_eq!(
            eval_barrier_jet(&model, &s.xa).unwrap(),
            eval_barrier_jet(&model, &s.xa).unwrap()
        );
    }

    #[test]
    fn fd_validation_passes_for_builtins() {
        let goal = DVector::from_row_slice(&[0.2, -0.1]);
        let models: Vec<ScenarioModel> = vec![
            linear_disk(2, 2.0),
            ScenarioModel::new(
                "attract-repel/ring",
                Arc::new(AttractRepelDynamics { goal: goal.clone() }),
                Arc::new(RingBarrier {
                    center: DVector::zeros(2),
                    radius: 1.0,
                }),
            )
            .unwrap(),
            ScenarioModel::new(
                "drift/disk",
                Arc::new(DriftDynamics { goal, gain: 0.5 }),
                Arc::new(DiskBarrier {
                    center: DVector::from_row_slice(&[0.1, 0.1]),
                    radius: 3.0,
                }),
            )
            .unwrap(),
        ];
        let mut rng = XorShift64Star::new(11);
        for model in &models {
            for _ in 0..100 {
                let s = AgentState::new(rng.gaussian_vector(2), rng.gaussian_vector(2)).unwrap();
                let report = check_jets_fd(model, &s, 1e-6, 1e-5).unwrap();
                assert!(
                    report.all_pass(),
                    "model {} failed: {:?}",
                    model.name(),
                    report.blocks
                );
            }
        }
    }

    #[test]
    fn linear_model_fd_error_is_tiny() {
        let model = linear_disk(2, 2.0);
        let report =
            check_jets_fd(&model, &state2([1.0, 0.0], [2.0, 0.0]), 1e-6, 1e-5).unwrap();
        for block in &report.blocks {
            assert!(block.pass);
            assert!(block.max_rel_err <= 1e-9, "{block:?}");
        }
    }

    #[test]
    fn corrupted_jacobian_is_detected() {
        struct Corrupted(RepelDynamics);
        impl DynamicsEval for Corrupted {
            fn dims(&self) -> (usize, usize) {
                self.0.dims()
            }
            fn eval(&self, s: &AgentState) -> ModelJet {
                let mut jet = self.0.eval(s);
                jet.dg_dxa[0][(0, 1)] += 0.1;
                jet
            }
        }
        let model = ScenarioModel::new(
            "corrupted",
            Arc::new(Corrupted(RepelDynamics { n: 2 })),
            Arc::new(DiskBarrier {
                center: DVector::zeros(2),
                radius: 2.0,
            }),
        )
        .unwrap();
        let report =
            check_jets_fd(&model, &state2([1.0, 0.0], [2.0, 0.0]), 1e-6, 1e-5).unwrap();
        let bad: Vec<_> = report.blocks.iter().filter(|b| !b.pass).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].block, "dG/dxA");
    }

    #[test]
    fn hessian_symmetry_is_exact_for_builtins() {
        let model = linear_disk(2, 2.0);
        let mut rng = XorShift64Star::new(3);
        for _ in 0..20 {
            let b = eval_barrier_jet(&model, &rng.gaussian_vector(2)).unwrap();
            assert_eq!((&b.hess_h - b.hess_h.transpose()).amax(), 0.0);
        }
    }

    #[test]
    fn n_equals_one_works() {
        let model = linear_disk(1, 2.0);
        let s = AgentState::new(
            DVector::from_row_slice(&[0.5]),
            DVector::from_row_slice(&[1.5]),
        )
        .unwrap();
        let jet = eval_model_jet(&model, &s).unwrap();
        assert_relative_eq!(jet.g[(0, 0)], -1.0);
        assert!(check_jets_fd(&model, &s, 1e-6, 1e-5).unwrap().all_pass());
    }
}
