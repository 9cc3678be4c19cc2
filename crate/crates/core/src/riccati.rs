//! Backward Riccati recursion and the pathwise cost decomposition.

use crate::error::{Error, Result};
use crate::model::{CostSpec, TimeVaryingLinearSystem};
use crate::numerics::{solve_spd, symmetrize, Matrix};
use crate::simulate::TrajectoryRecord;

/// Output of [`backward_riccati`].
///
/// `s` and `gamma` are indexed `0..=N+1`; `l` and `lambda` are indexed
/// `0..=N`. `gamma[N+1]` is the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub s: Vec<Matrix>,
    pub gamma: Vec<Matrix>,
    /// Feedback gains, `u_k = −L_k x_k` in the full-information problem.
    pub l: Vec<Matrix>,
    /// `Λ_k = B_kᵀ S_{k+1} B_k + R_k`.
    pub lambda: Vec<Matrix>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.l.len() - 1
    }

    pub fn s(&self, k: usize) -> &Matrix {
        &self.s[k]
    }

    pub fn gamma(&self, k: usize) -> &Matrix {
        &self.gamma[k]
    }

    pub fn l(&self, k: usize) -> &Matrix {
        &self.l[k]
    }

    pub fn lambda(&self, k: usize) -> &Matrix {
        &self.lambda[k]
    }
}

/// Run the Riccati recursion from `S_{N+1} = Q_{N+1}` down to `S_0`.
///
/// For each `k`: `Λ_k = BᵀS_{k+1}B + R`, `L_k = Λ_k⁻¹BᵀS_{k+1}A` (SPD solve),
/// `Γ_k = AᵀS_{k+1}B Λ_k⁻¹ BᵀS_{k+1}A` and `S_k = Q_k + AᵀS_{k+1}A − Γ_k`,
/// with `S_k`, `Γ_k` and `Λ_k` re-symmetrized after every step.
pub fn backward_riccati(sys: &TimeVaryingLinearSystem, cost: &CostSpec) -> Result<RiccatiSolution> {
    let horizon = sys.horizon;
    if cost.horizon != horizon {
        return Err(Error::Dimension(format!(
            "system horizon {horizon} but cost horizon {}",
            cost.horizon
        )));
    }
    let n = sys.state_dim();
    let mut s = vec![Matrix::zeros(n, n); horizon + 2];
    let mut gamma = vec![Matrix::zeros(n, n); horizon + 2];
    let mut l = Vec::with_capacity(horizon + 1);
    let mut lambda = Vec::with_capacity(horizon + 1);

    s[horizon + 1] = cost.q_terminal.clone();
    for k in (0..=horizon).rev() {
        let (a, b) = (sys.a(k), sys.b(k));
        let s_next = &s[k + 1];
        let bt_s = b.transpose() * s_next;
        let mut lam = &bt_s * b + cost.r(k);
        symmetrize(&mut lam);
        let bt_s_a = &bt_s * a;
        let gain = solve_spd(&lam, &bt_s_a, "Lambda").map_err(|e| e.at(k))?;
        let mut g = bt_s_a.transpose() * &gain;
        symmetrize(&mut g);
        let mut s_k = cost.q(k) + a.transpose() * s_next * a - &g;
        symmetrize(&mut s_k);
        s[k] = s_k;
        gamma[k] = g;
        l.push(gain);
        lambda.push(lam);
    }
    l.reverse();
    lambda.reverse();
    Ok(RiccatiSolution { s, gamma, l, lambda })
}

/// Relative residual of the pathwise cost decomposition on a logged path.
///
/// Compares the realized cost `x_{N+1}ᵀQ_{N+1}x_{N+1} + Σ (xᵀQx + uᵀRu + θδ)`
/// with `x_0ᵀS_0x_0 + Σ (θδ + wᵀS_{k+1}w + 2(A x + B u)ᵀS_{k+1}w +
/// (u + Lx)ᵀΛ(u + Lx))`. The identity holds for every path and every pair of
/// policies; `A_k x_k + B_k u_k` is recovered as `x_{k+1} − w_k`.
pub fn lemma1_residual(traj: &TrajectoryRecord, ric: &RiccatiSolution, cost: &CostSpec) -> Result<f64> {
    let horizon = ric.horizon();
    if traj.steps.len() != horizon + 1 {
        return Err(Error::IncompleteTrajectory(format!(
            "{} logged steps for horizon {horizon}",
            traj.steps.len()
        )));
    }
    let n = traj.x_terminal.len();
    let mut lhs = quad(&traj.x_terminal, cost.q(horizon + 1));
    let mut rhs = quad(&traj.steps[0].x, ric.s(0));
    for (k, step) in traj.steps.iter().enumerate() {
        if step.w.len() != n {
            return Err(Error::IncompleteTrajectory(format!("process noise missing at k={k}")));
        }
        let price = if step.delta { cost.theta(k) } else { 0.0 };
        lhs += quad(&step.x, cost.q(k)) + quad(&step.u, cost.r(k)) + price;

        let x_next = match traj.steps.get(k + 1) {
            Some(next) => &next.x,
            None => &traj.x_terminal,
        };
        let drift = x_next - &step.w;
        let s_next = ric.s(k + 1);
        let dev = &step.u + ric.l(k) * &step.x;
        rhs += price
            + quad(&step.w, s_next)
            + 2.0 * drift.dot(&(s_next * &step.w))
            + quad(&dev, ric.lambda(k));
    }
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

fn quad(x: &crate::Vector, m: &Matrix) -> f64 {
    x.dot(&(m * x))
}
