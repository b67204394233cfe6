//! Independent verification machinery for the SDP safety filter.
//!
//! Everything here reaches the same robust constraint by a different route
//! than the barrier solver: an exact trust-region subproblem for the inner
//! minimization over the parameter ball, the Lagrange dual lower bound, a
//! cutting-plane method for the full semi-infinite program, a closed-form
//! minimum-norm QP, and seeded uniform-ball sampling.

mod verify;

pub use verify::{golden_scalar_instance, random_estimate, random_raw_constraint,
    random_tilde, run_verify, CheckSection, VerifyConfig, VerifyReport};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::constraint::TildeConstraint;
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Global minimizer of a quadratic over the unit ball.
#[derive(Debug, Clone)]
pub struct TrsResult {
    pub z_star: DVector<f64>,
    pub value: f64,
    /// True when the minimizer lies on the unit sphere.
    pub boundary: bool,
    /// KKT multiplier ν ≥ 0 of `‖z‖² ≤ 1` in `(A + νI)z = −b/2`.
    pub multiplier: f64,
}

/// Eigen-decomposition of the symmetric part, eigenvalues ascending,
/// every eigenvector oriented so its first nonzero coordinate is positive
/// (deterministic tie-breaking for non-unique minimizers).
fn oriented_eigen(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vals = Vec::with_capacity(order.len());
    let mut vecs = Vec::with_capacity(order.len());
    for &i in &order {
        vals.push(eig.eigenvalues[i]);
        let mut v = eig.eigenvectors.column(i).clone_owned();
        if let Some(lead) = v.iter().find(|x| x.abs() > 1e-12) {
            if *lead < 0.0 {
                v = -v;
            }
        }
        vecs.push(v);
    }
    (vals, vecs)
}

/// Minimize `zᵀAz + bᵀz + c` over `‖z‖ ≤ 1` exactly.
///
/// `a` is assumed symmetric; only its symmetric part is read. The solve
/// goes through the eigendecomposition and Newton on the secular equation,
/// with the hard case (no `b` component along the bottom eigenspace)
/// handled by adding a bottom-eigenvector component to reach the sphere.
pub fn solve_trs(a: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> TrsResult {
    let p = b.len();
    assert_eq!(a.nrows(), p, "quadratic/linear dimensions disagree");
    assert_eq!(a.ncols(), p, "quadratic term must be square");

    let (vals, vecs) = oriented_eigen(a);
    let bt: Vec<f64> = vecs.iter().map(|v| v.dot(b)).collect();
    let lam_min = vals[0];
    let lam_max_abs = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = 1.0 + lam_max_abs + b.norm();
    let null_tol = 1e-11 * scale;

    let sym = (a + a.transpose()) * 0.5;
    let objective = |z: &DVector<f64>| (z.transpose() * &sym * z)[(0, 0)] + b.dot(z) + c;
    let point_at = |nu: f64| -> DVector<f64> {
        let mut z = DVector::zeros(p);
        for i in 0..p {
            z += &vecs[i] * (-bt[i] / (2.0 * (vals[i] + nu)));
        }
        z
    };

    // Unconstrained stationary point, valid when A ⪰ 0 and b lies in the
    // range of A.
    if lam_min >= -1e-12 * scale {
        let cutoff = 1e-12 * (1.0 + lam_max_abs);
        let in_range = (0..p).all(|i| vals[i] > cutoff || bt[i].abs() <= null_tol);
        if in_range {
            let mut z = DVector::zeros(p);
            for i in 0..p {
                if vals[i] > cutoff {
                    z += &vecs[i] * (-bt[i] / (2.0 * vals[i]));
                }
            }
            let norm = z.norm();
            if norm <= 1.0 + 1e-12 {
                return TrsResult {
                    value: objective(&z),
                    boundary: norm >= 1.0 - 1e-9,
                    multiplier: 0.0,
                    z_star: z,
                };
            }
        }
    }

    // Boundary regime: ν ≥ ν_low with ‖z(ν)‖ = 1 where
    // (A + νI) z = −b/2.
    let nu_low = (-lam_min).max(0.0);
    let bottom: Vec<usize> = (0..p)
        .filter(|&i| vals[i] + nu_low <= 1e-10 * scale)
        .collect();
    let bottom_coupling = bottom
        .iter()
        .fold(0.0f64, |acc, &i| acc.max(bt[i].abs()));

    let norm_sq_at = |nu: f64| -> f64 {
        (0..p)
            .map(|i| {
                let d = vals[i] + nu;
                (bt[i] / (2.0 * d)).powi(2)
            })
            .sum()
    };

    // Hard case: no b along the bottom eigenspace and the remaining
    // components stay inside the ball even at ν = ν_low.
    if !bottom.is_empty() && bottom_coupling <= null_tol {
        let perp_sq: f64 = (0..p)
            .filter(|i| !bottom.contains(i))
            .map(|i| (bt[i] / (2.0 * (vals[i] + nu_low))).powi(2))
            .sum();
        if perp_sq < 1.0 {
            let mut z = DVector::zeros(p);
            for i in 0..p {
                if !bottom.contains(&i) {
                    z += &vecs[i] * (-bt[i] / (2.0 * (vals[i] + nu_low)));
                }
            }
            z += &vecs[bottom[0]] * (1.0 - perp_sq).max(0.0).sqrt();
            return TrsResult {
                value: objective(&z),
                boundary: true,
                multiplier: nu_low,
                z_star: z,
            };
        }
    }

    // Easy case: φ(ν) = ‖z(ν)‖² crosses 1 on (ν_low, ν_hi]. Safeguarded
    // Newton on ψ(ν) = 1 − 1/√φ(ν), which is nearly linear in ν.
    let bt_norm = bt.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut lo = nu_low;
    let mut hi = nu_low + bt_norm / 2.0 + 1e-12 * scale;
    while norm_sq_at(hi) > 1.0 {
        hi = nu_low + 2.0 * (hi - nu_low); // paranoia against rounding
    }
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let phi = norm_sq_at(nu);
        if (phi - 1.0).abs() <= 1e-13 || (hi - lo) <= 1e-15 * (1.0 + nu) {
            break;
        }
        if phi > 1.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        // ψ = 1 − φ^{-1/2}, ψ' = φ'/(2 φ^{3/2}), φ' = −Σ b̃²/(2 dᵢ³).
        let dphi: f64 = (0..p)
            .map(|i| {
                let d = vals[i] + nu;
                -bt[i] * bt[i] / (2.0 * d * d * d)
            })
            .sum();
        let psi = 1.0 - phi.powf(-0.5);
        let dpsi = dphi / (2.0 * phi.powf(1.5));
        let newton = nu - psi / dpsi;
        nu = if dpsi.abs() > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // Near the hard case the pole limits how well ν resolves ‖z‖, so
    // project the iterate onto the sphere before evaluating: the point is
    // then feasible, and with a vanishing tangential gradient at the
    // constrained minimum the value error is second order in the
    // projection.
    let mut z = point_at(nu);
    let norm = z.norm();
    if norm > 0.0 {
        z /= norm;
    }
    TrsResult {
        value: objective(&z),
        boundary: true,
        multiplier: nu,
        z_star: z,
    }
}

/// Worst-case slack of the normalized constraint at control `u`: the exact
/// infimum of the residual over the unit parameter ball, with its
/// minimizing `z`.
pub fn worst_case_z(t: &TildeConstraint, u: &DVector<f64>) -> TrsResult {
    let b = &t.bound_lin - &t.control_coef * u;
    let c = t.bound_const - t.control_offset.dot(u);
    solve_trs(&t.bound_quad, &b, c)
}

/// Lagrange dual lower bound `g(λ)` of the inner ball minimization.
///
/// Returns `−∞` when `H̃ + λI` has a negative eigenvalue or when
/// `f̃ − C̃u` has a component outside its range (least-squares residual
/// above `1e-9` relative to `1 + ‖f̃ − C̃u‖`); otherwise
/// `−¼·bᵀ(H̃+λI)⁺b + g̃ − d̃ᵀu − λ`.
pub fn dual_lower_bound(t: &TildeConstraint, u: &DVector<f64>, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dual multiplier must be nonnegative, got {lambda}"
        )));
    }
    let p = t.param_dim();
    let shifted = &t.bound_quad + lambda * DMatrix::identity(p, p);
    let (vals, vecs) = oriented_eigen(&shifted);
    let lam_max_abs = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if vals[0] < -1e-12 * (1.0 + lam_max_abs) {
        return Ok(f64::NEG_INFINITY);
    }
    let b = &t.bound_lin - &t.control_coef * u;
    let cutoff = 1e-12 * (1.0 + lam_max_abs);
    let mut pinv_b = DVector::zeros(p);
    for i in 0..p {
        if vals[i] > cutoff {
            pinv_b += &vecs[i] * (vecs[i].dot(&b) / vals[i]);
        }
    }
    let residual = (&b - &shifted * &pinv_b).norm();
    if residual > 1e-9 * (1.0 + b.norm()) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-0.25 * b.dot(&pinv_b) + t.bound_const - t.control_offset.dot(u) - lambda)
}

/// One linear constraint `normalᵀu ≤ offset` separating a worst-case `z`.
#[derive(Debug, Clone)]
pub struct Cut {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// Accumulated cuts of the cutting-plane method. Each derives from a point
/// `‖z‖ ≤ 1` via `normal = C̃ᵀz + d̃`, `offset = zᵀH̃z + f̃ᵀz + g̃`.
#[derive(Debug, Clone, Default)]
pub struct CutSet {
    pub cuts: Vec<Cut>,
}

/// Build the cut induced by one ball point.
pub fn cut_at(t: &TildeConstraint, z: &DVector<f64>) -> Cut {
    Cut {
        normal: t.control_coef.transpose() * z + &t.control_offset,
        offset: (z.transpose() * &t.bound_quad * z)[(0, 0)] + t.bound_lin.dot(z)
            + t.bound_const,
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Minimum-norm `u` with `normalᵢᵀu ≤ offsetᵢ` for every cut.
///
/// Exact active-set search by enumeration: every candidate active set of
/// size ≤ m is solved as an equality system, then screened by primal
/// feasibility and nonnegative multipliers. Carathéodory guarantees the
/// optimum (when one exists) is certified by some such subset, so a run
/// with no surviving candidate is an infeasibility proof. Intended for
/// desk-scale cut counts.
pub fn solve_nominal_qp(cuts: &[Cut]) -> Result<DVector<f64>> {
    solve_nominal_qp_anchored(cuts, None)
}

/// As [`solve_nominal_qp`], but only candidate sets containing
/// `anchor` are enumerated. Sound when the anchored cut is known to be
/// active at the optimum — in the cutting-plane loop the newly added cut
/// always is, since the previous iterate violated it and the minimizer is
/// unique.
fn solve_nominal_qp_anchored(cuts: &[Cut], anchor: Option<usize>) -> Result<DVector<f64>> {
    if cuts.is_empty() {
        return Err(Error::InvalidArgument("empty constraint list".into()));
    }
    let m = cuts[0].normal.len();
    if cuts.iter().any(|c| c.normal.len() != m) {
        return Err(Error::DimensionMismatch(
            "cuts have inconsistent control dimensions".into(),
        ));
    }

    let feasible = |u: &DVector<f64>| {
        cuts.iter().all(|c| {
            c.normal.dot(u) <= c.offset + 1e-9 * (1.0 + c.offset.abs() + c.normal.norm())
        })
    };
    if feasible(&DVector::zeros(m)) {
        return Ok(DVector::zeros(m));
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut try_subset = |combo: &[usize]| {
        let size = combo.len();
        let rows = DMatrix::from_fn(size, m, |i, j| cuts[combo[i]].normal[j]);
        let rhs = DVector::from_fn(size, |i, _| cuts[combo[i]].offset);
        let svd = rows.clone().svd(true, true);
        let Ok(u) = svd.solve(&rhs, 1e-12) else {
            return;
        };
        // Consistency of the equality system (skips e.g. parallel cuts
        // with different offsets).
        if (&rows * &u - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
            return;
        }
        // Stationarity 2u + Σ μᵢ aᵢ = 0 with μ ≥ 0.
        let at = rows.transpose();
        let svd_t = at.clone().svd(true, true);
        let Ok(mu) = svd_t.solve(&(-2.0 * &u), 1e-12) else {
            return;
        };
        if (&at * &mu + 2.0 * &u).norm() > 1e-8 * (1.0 + u.norm()) {
            return;
        }
        if mu.iter().any(|&v| v < -1e-9) {
            return;
        }
        if !feasible(&u) {
            return;
        }
        let nsq = u.norm_squared();
        if best.as_ref().map_or(true, |(bn, _)| nsq < *bn) {
            best = Some((nsq, u));
        }
    };

    match anchor {
        Some(a) => {
            let others: Vec<usize> = (0..cuts.len()).filter(|&i| i != a).collect();
            try_subset(&[a]);
            for size in 1..m.min(cuts.len()) {
                for combo in combinations(others.len(), size) {
                    let mut subset: Vec<usize> = combo.iter().map(|&i| others[i]).collect();
                    subset.push(a);
                    try_subset(&subset);
                }
            }
        }
        None => {
            for size in 1..=m.min(cuts.len()) {
                for combo in combinations(cuts.len(), size) {
                    try_subset(&combo);
                }
            }
        }
    }
    best.map(|(_, u)| u)
        .ok_or_else(|| Error::Infeasible("no KKT point over the cut set".into()))
}

/// Result of the cutting-plane solve: the final control, the cuts that
/// produced it, and the norm of each iterate (non-decreasing, since every
/// cut shrinks the relaxation).
#[derive(Debug, Clone)]
pub struct CuttingPlaneResult {
    pub u: DVector<f64>,
    pub cuts: CutSet,
    pub iterations: usize,
    pub iterate_norms: Vec<f64>,
}

/// Solve the semi-infinite robust QP by cutting planes: repeatedly find the
/// worst-case `z` at the current minimum-norm iterate and add its cut until
/// the worst-case slack is at least `−tol`.
pub fn solve_robust_qp_cutting_plane(
    t: &TildeConstraint,
    tol: f64,
    max_cuts: usize,
) -> Result<CuttingPlaneResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("cutting-plane tol must be > 0".into()));
    }
    let m = t.control_dim();
    let mut cuts = CutSet::default();
    let mut u = DVector::zeros(m);
    let mut norms = vec![0.0];
    loop {
        let worst = worst_case_z(t, &u);
        if worst.value >= -tol {
            return Ok(CuttingPlaneResult {
                u,
                iterations: cuts.cuts.len(),
                cuts,
                iterate_norms: norms,
            });
        }
        if cuts.cuts.len() >= max_cuts {
            return Err(Error::NonConvergence(format!(
                "cutting plane: {} cuts, worst margin {:.3e}",
                cuts.cuts.len(),
                worst.value
            )));
        }
        cuts.cuts.push(cut_at(t, &worst.z_star));
        u = solve_nominal_qp_anchored(&cuts.cuts, Some(cuts.cuts.len() - 1))?;
        norms.push(u.norm());
    }
}

/// Minimum residual over `count` points drawn uniformly in the unit ball
/// with the given seed. Deterministic in `(t, u, count, seed)`.
pub fn sample_verify(t: &TildeConstraint, u: &DVector<f64>, count: usize, seed: u64) -> f64 {
    assert!(count >= 1, "sample count must be at least 1");
    let p = t.param_dim();
    let mut rng = XorShift64Star::new(seed);
    let mut min = f64::INFINITY;
    for _ in 0..count {
        let z = rng.ball_point(p);
        min = min.min(t.residual(u, &z));
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The ledger instance used throughout: the interval constraint
    /// `θ̃·u ≤ −1` for `θ̃ ∈ [0.5, 1.5]`, normalized.
    fn scalar_interval() -> TildeConstraint {
        TildeConstraint {
            control_coef: DMatrix::from_row_slice(1, 1, &[0.5]),
            control_offset: DVector::from_row_slice(&[1.0]),
            bound_quad: DMatrix::zeros(1, 1),
            bound_lin: DVector::zeros(1),
            bound_const: -1.0,
        }
    }

    #[test]
    fn trs_interior_minimum() {
        let r = solve_trs(
            &DMatrix::identity(2, 2),
            &DVector::from_row_slice(&[-1.0, 0.0]),
            0.0,
        );
        assert_relative_eq!(r.z_star[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.z_star[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.value, -0.25, epsilon = 1e-12);
        assert!(!r.boundary);
        assert_eq!(r.multiplier, 0.0);
    }

    #[test]
    fn trs_hard_case_tie_break() {
        let r = solve_trs(
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]),
            &DVector::zeros(2),
            3.0,
        );
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-12);
        assert!(r.boundary);
        assert_relative_eq!(r.multiplier, 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.z_star[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.z_star[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trs_uniform_negative_curvature() {
        let r = solve_trs(&(-DMatrix::identity(2, 2)), &DVector::zeros(2), 1.0);
        assert_relative_eq!(r.value, 0.0, epsilon = 1e-12);
        assert!(r.boundary);
        assert_relative_eq!(r.multiplier, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.z_star.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trs_easy_boundary_case() {
        // A singular PSD, b outside the range: forced onto the sphere.
        let r = solve_trs(
            &DMatrix::zeros(1, 1),
            &DVector::from_row_slice(&[1.0]),
            1.0,
        );
        assert_relative_eq!(r.value, 0.0, epsilon = 1e-10);
        assert_relative_eq!(r.z_star[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(r.multiplier, 0.5, epsilon = 1e-10);
        assert!(r.boundary);
    }

    #[test]
    fn worst_case_scalar_interval() {
        let t = scalar_interval();
        let r = worst_case_z(&t, &DVector::from_row_slice(&[-2.0]));
        assert_relative_eq!(r.value, 0.0, epsilon = 1e-9);
        assert_relative_eq!(r.z_star[0], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn worst_case_constant_objective() {
        let t = TildeConstraint {
            control_coef: DMatrix::zeros(1, 2),
            control_offset: DVector::zeros(2),
            bound_quad: DMatrix::zeros(1, 1),
            bound_lin: DVector::zeros(1),
            bound_const: 5.0,
        };
        let r = worst_case_z(&t, &DVector::zeros(2));
        assert_relative_eq!(r.value, 5.0, epsilon = 1e-12);
    }

    /// Global-optimality certificate plus grid/sampling brackets on random
    /// instances. The certificate ((A+νI) ⪰ 0, stationarity,
    /// complementarity) is the exact optimality condition; the sphere grid
    /// gives a computable two-sided bracket for boundary minima.
    #[test]
    fn trs_global_optimality_on_random_instances() {
        let mut rng = XorShift64Star::new(31);
        for trial in 0..100 {
            let p = 1 + trial % 3;
            let raw = DMatrix::from_fn(p, p, |_, _| rng.next_gaussian());
            let a = (&raw + raw.transpose()) * 0.5;
            let b = rng.gaussian_vector(p);
            let c = rng.next_gaussian();
            let r = solve_trs(&a, &b, c);
            let scale = 1.0 + a.amax() + b.norm();

            // Feasibility and complementarity.
            assert!(r.z_star.norm() <= 1.0 + 1e-9);
            assert!(r.multiplier >= 0.0);
            assert!(
                (r.multiplier * (r.z_star.norm_squared() - 1.0)).abs() <= 1e-9 * scale,
                "complementarity violated"
            );
            if r.boundary {
                assert!((r.z_star.norm() - 1.0).abs() <= 1e-9);
            }

            // Certificate: stationarity and A + νI ⪰ 0.
            let station =
                (2.0 * (&a + r.multiplier * DMatrix::identity(p, p)) * &r.z_star + &b).norm();
            assert!(station <= 1e-7 * scale, "stationarity residual {station}");
            let (vals, _) = oriented_eigen(&(&a + r.multiplier * DMatrix::identity(p, p)));
            assert!(vals[0] >= -1e-9 * scale, "A + νI not PSD: {}", vals[0]);

            // One-sided random-ball bracket.
            let mut sample_rng = XorShift64Star::new(1000 + trial as u64);
            let mut sampled = f64::INFINITY;
            for _ in 0..100_000 {
                let z = sample_rng.ball_point(p);
                sampled = sampled.min((z.transpose() * &a * &z)[(0, 0)] + b.dot(&z) + c);
            }
            assert!(r.value <= sampled + 1e-9, "value above sampled minimum");

            // Two-sided bracket from a deterministic sphere grid (boundary
            // candidates; interior case is already certified above).
            let mut grid_min = f64::INFINITY;
            let eval = |z: &DVector<f64>| (z.transpose() * &a * z)[(0, 0)] + b.dot(z) + c;
            match p {
                1 => {
                    grid_min = eval(&DVector::from_row_slice(&[1.0]))
                        .min(eval(&DVector::from_row_slice(&[-1.0])));
                }
                2 => {
                    for k in 0..20_000 {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / 20_000.0;
                        grid_min =
                            grid_min.min(eval(&DVector::from_row_slice(&[th.cos(), th.sin()])));
                    }
                }
                _ => {
                    for i in 0..400 {
                        let phi = std::f64::consts::PI * (i as f64 + 0.5) / 400.0;
                        for j in 0..800 {
                            let th = 2.0 * std::f64::consts::PI * j as f64 / 800.0;
                            let z = DVector::from_row_slice(&[
                                phi.sin() * th.cos(),
                                phi.sin() * th.sin(),
                                phi.cos(),
                            ]);
                            grid_min = grid_min.min(eval(&z));
                        }
                    }
                }
            }
            assert!(r.value <= grid_min + 1e-9);
            if r.boundary {
                assert!(
                    grid_min - r.value <= 1e-3 * scale,
                    "sphere grid min {grid_min} far above reported {}",
                    r.value
                );
            }
        }
    }

    #[test]
    fn dual_bound_scalar_interval() {
        let t = scalar_interval();
        let u = DVector::from_row_slice(&[-2.0]);
        let g = dual_lower_bound(&t, &u, 0.5).unwrap();
        assert_relative_eq!(g, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_bound_negative_eigenvalue_is_minus_infinity() {
        let t = TildeConstraint {
            control_coef: DMatrix::zeros(1, 1),
            control_offset: DVector::zeros(1),
            bound_quad: DMatrix::from_row_slice(1, 1, &[-0.6]),
            bound_lin: DVector::zeros(1),
            bound_const: 1.0,
        };
        // H̃ + 0.5·I has eigenvalue −0.1.
        let g = dual_lower_bound(&t, &DVector::zeros(1), 0.5).unwrap();
        assert_eq!(g, f64::NEG_INFINITY);
    }

    #[test]
    fn dual_bound_range_failure_is_minus_infinity() {
        let t = TildeConstraint {
            control_coef: DMatrix::zeros(1, 1),
            control_offset: DVector::zeros(1),
            bound_quad: DMatrix::zeros(1, 1),
            bound_lin: DVector::from_row_slice(&[1.0]),
            bound_const: 0.0,
        };
        let g = dual_lower_bound(&t, &DVector::zeros(1), 0.0).unwrap();
        assert_eq!(g, f64::NEG_INFINITY);
    }

    #[test]
    fn dual_bound_rejects_negative_lambda() {
        let t = scalar_interval();
        assert!(dual_lower_bound(&t, &DVector::zeros(1), -0.1).is_err());
    }

    /// Weak duality: g(λ) never exceeds the exact inner minimum.
    #[test]
    fn dual_bound_below_worst_case_on_grid() {
        let mut rng = XorShift64Star::new(77);
        for trial in 0..100 {
            let p = 1 + trial % 3;
            let m = 2;
            let t = verify::random_tilde(&mut rng, p, m);
            let u = rng.gaussian_vector(m);
            let inner = worst_case_z(&t, &u).value;
            for k in 0..=100 {
                let lambda = k as f64 * 0.1;
                let g = dual_lower_bound(&t, &u, lambda).unwrap();
                if g.is_finite() {
                    assert!(
                        g <= inner + 1e-9,
                        "g({lambda}) = {g} above inner minimum {inner}"
                    );
                }
            }
        }
    }

    #[test]
    fn nominal_qp_single_constraint_projection() {
        let u = solve_nominal_qp(&[Cut {
            normal: DVector::from_row_slice(&[1.0, 0.0]),
            offset: -2.0,
        }])
        .unwrap();
        assert_relative_eq!(u[0], -2.0, epsilon = 1e-10);
        assert_relative_eq!(u[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn nominal_qp_origin_feasible() {
        let u = solve_nominal_qp(&[Cut {
            normal: DVector::from_row_slice(&[1.0, 0.0]),
            offset: 3.0,
        }])
        .unwrap();
        assert_eq!(u, DVector::zeros(2));
    }

    #[test]
    fn nominal_qp_two_active_constraints() {
        let u = solve_nominal_qp(&[
            Cut {
                normal: DVector::from_row_slice(&[1.0, 0.0]),
                offset: -1.0,
            },
            Cut {
                normal: DVector::from_row_slice(&[0.0, 1.0]),
                offset: -1.0,
            },
        ])
        .unwrap();
        assert_relative_eq!(u[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(u[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn nominal_qp_detects_infeasible() {
        let cuts = [
            Cut {
                normal: DVector::from_row_slice(&[1.0, 0.0]),
                offset: -1.0,
            },
            Cut {
                normal: DVector::from_row_slice(&[-1.0, 0.0]),
                offset: -1.0,
            },
        ];
        assert!(matches!(
            solve_nominal_qp(&cuts),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn nominal_qp_rejects_empty_input() {
        assert!(matches!(
            solve_nominal_qp(&[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    /// KKT conditions at the returned point on random feasible systems.
    #[test]
    fn nominal_qp_kkt_on_random_instances() {
        let mut rng = XorShift64Star::new(12);
        for _ in 0..50 {
            let m = 2;
            let k = 1 + (rng.next_u64() % 5) as usize;
            // Anchor feasibility at a random point.
            let anchor = rng.gaussian_vector(m);
            let cuts: Vec<Cut> = (0..k)
                .map(|_| {
                    let normal = rng.gaussian_vector(m);
                    let slack = rng.next_f64();
                    Cut {
                        offset: normal.dot(&anchor) + slack,
                        normal,
                    }
                })
                .collect();
            let u = solve_nominal_qp(&cuts).unwrap();
            // Primal feasibility.
            for c in &cuts {
                assert!(c.normal.dot(&u) <= c.offset + 1e-8);
            }
            // Complementary slackness / dual feasibility via the active set.
            let active: Vec<&Cut> = cuts
                .iter()
                .filter(|c| (c.normal.dot(&u) - c.offset).abs() <= 1e-6)
                .collect();
            if active.is_empty() {
                assert!(u.norm() <= 1e-9, "inactive optimum must be the origin");
            } else {
                let rows =
                    DMatrix::from_fn(active.len(), m, |i, j| active[i].normal[j]).transpose();
                let mu = rows.clone().svd(true, true).solve(&(-2.0 * &u), 1e-12).unwrap();
                assert!((&rows * &mu + 2.0 * &u).norm() <= 1e-6 * (1.0 + u.norm()));
                assert!(mu.iter().all(|&v| v >= -1e-6));
            }
        }
    }

    #[test]
    fn cutting_plane_scalar_interval() {
        let t = scalar_interval();
        let r = solve_robust_qp_cutting_plane(&t, 1e-9, 64).unwrap();
        assert!(r.iterations <= 10);
        assert!((r.u[0] - (-2.0)).abs() <= 1e-6, "u = {}", r.u[0]);
    }

    #[test]
    fn cutting_plane_trivially_satisfied() {
        let t = TildeConstraint {
            control_coef: DMatrix::zeros(1, 2),
            control_offset: DVector::zeros(2),
            bound_quad: DMatrix::zeros(1, 1),
            bound_lin: DVector::zeros(1),
            bound_const: 5.0,
        };
        let r = solve_robust_qp_cutting_plane(&t, 1e-9, 64).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.u, DVector::zeros(2));
    }

    #[test]
    fn cutting_plane_norms_are_monotone() {
        let mut rng = XorShift64Star::new(21);
        let mut converged = 0;
        for trial in 0..30 {
            let p = 1 + trial % 3;
            let t = verify::random_tilde(&mut rng, p, 2);
            let Ok(r) = solve_robust_qp_cutting_plane(&t, 1e-8, 128) else {
                continue;
            };
            converged += 1;
            for w in r.iterate_norms.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "norms decreased: {:?}", r.iterate_norms);
            }
            assert!(worst_case_z(&t, &r.u).value >= -1e-8);
        }
        assert!(converged >= 15, "only {converged} instances converged");
    }

    #[test]
    fn sample_verify_constant_residual() {
        let t = TildeConstraint {
            control_coef: DMatrix::zeros(1, 2),
            control_offset: DVector::zeros(2),
            bound_quad: DMatrix::zeros(1, 1),
            bound_lin: DVector::zeros(1),
            bound_const: 1.0,
        };
        let v = sample_verify(&t, &rand_u(), 100, 9);
        assert_eq!(v, 1.0);
    }

    fn rand_u() -> DVector<f64> {
        DVector::from_row_slice(&[0.4, -1.3])
    }

    #[test]
    fn sample_verify_is_deterministic() {
        let t = scalar_interval();
        let u = DVector::from_row_slice(&[-2.0]);
        assert_eq!(sample_verify(&t, &u, 5000, 42), sample_verify(&t, &u, 5000, 42));
    }

    #[test]
    fn sample_verify_brackets_worst_case() {
        let mut rng = XorShift64Star::new(55);
        for trial in 0..20 {
            let p = 1 + trial % 3;
            let t = verify::random_tilde(&mut rng, p, 2);
            let u = rng.gaussian_vector(2);
            let exact = worst_case_z(&t, &u).value;
            let sampled = sample_verify(&t, &u, 100_000, 7 + trial as u64);
            assert!(sampled >= exact - 1e-9, "sampled {sampled} below exact {exact}");
        }
    }
}
