//! Control and triggering policies.
//!
//! Control is certainty equivalence, `u_k = −L_k x̂_k`, for every triggering
//! rule. The triggering rules here transmit iff a value of information is
//! non-negative. The rollout variants score a transmission against a
//! continuation that transmits at every later step. Under perfect information
//! that continuation makes the tail term vanish. Under imperfect information
//! it is evaluated by running the controller's hypothetical filter forward on
//! both branches.

mod dp;
mod rollout;

pub use dp::{exact_voi_scalar, scalar_dp_value, GridSpec, ScalarDpTable};

use crate::error::{Error, Result};
use crate::estimators::TriggerSignals;
use crate::model::TimeVaryingLinearSystem;
use crate::numerics::{Matrix, Vector};
use crate::riccati::RiccatiSolution;

/// A value of information and the decision it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiResult {
    pub value: f64,
    /// `value ≥ 0`; ties transmit.
    pub transmit: bool,
    /// Immediate change in expected estimation cost at `k + 1`.
    pub instantaneous: f64,
    /// Communication price `θ_k`.
    pub price: f64,
    /// Change in the expected continuation cost (`ρ_k` or its rollout
    /// approximation).
    pub tail: f64,
    /// Set when the value was read from outside a tabulated range.
    pub extrapolated: bool,
}

impl VoiResult {
    fn new(instantaneous: f64, price: f64, tail: f64) -> Self {
        let value = instantaneous - price + tail;
        Self {
            value,
            transmit: value >= 0.0,
            instantaneous,
            price,
            tail,
            extrapolated: false,
        }
    }
}

/// Certainty-equivalence control `u_k = −L_k x̂_k`.
pub fn ce_control(ric: &RiccatiSolution, k: usize, xhat: &Vector) -> Result<Vector> {
    let horizon = ric.horizon();
    if k > horizon {
        return Err(Error::IndexOutOfRange { k, horizon });
    }
    Ok(-(ric.l(k) * xhat))
}

/// Rollout value of information under perfect information,
/// `eᵀ A_kᵀ Γ_{k+1} A_k e − θ_k`.
pub fn voi_perfect(
    ric: &RiccatiSolution,
    sys: &TimeVaryingLinearSystem,
    k: usize,
    e: &Vector,
    theta_k: f64,
) -> Result<VoiResult> {
    sys.check_index(k)?;
    let a = sys.a(k);
    if e.len() != a.ncols() {
        return Err(Error::Dimension(format!("error has dimension {}, state has {}", e.len(), a.ncols())));
    }
    let ae = a * e;
    let instantaneous = ae.dot(&(ric.gamma(k + 1) * &ae));
    Ok(VoiResult::new(instantaneous, theta_k, 0.0))
}

/// Rollout value of information under imperfect information.
///
/// The immediate term is `νᵀKᵀΓ_{k+1}(2Aε − Kν)`. The tail follows the
/// controller's would-be estimation error from `k + 1` to `N` on the two
/// branches, silence (`0`) and transmission (`1`), assuming a transmission
/// at every later step. Each branch carries the conditional mean `ē`, the
/// conditional covariance `P̄` of the controller's error, and the
/// controller's own covariance `P` that sets its gain. The tail is
/// `Σ_{t=k+2}^{N} [ē⁰ᵀΓ_tē⁰ + tr(Γ_tP̄⁰) − ē¹ᵀΓ_tē¹ − tr(Γ_tP̄¹)]`.
pub fn voi_imperfect(
    ric: &RiccatiSolution,
    sys: &TimeVaryingLinearSystem,
    k: usize,
    signals: &TriggerSignals,
    sigma_k: &Matrix,
    p_k: &Matrix,
    theta_k: f64,
) -> Result<VoiResult> {
    sys.check_index(k)?;
    let sensor = sys.sensor_ref("voi_imperfect")?;
    let (nu, gain) = match (&signals.nu, &signals.gain) {
        (Some(nu), Some(gain)) => (nu, gain),
        _ => {
            return Err(Error::Pattern {
                op: "voi_imperfect signals",
                expected: "imperfect",
            })
        }
    };
    let n = sys.state_dim();
    let eps = &signals.eps;
    let (a, w) = (sys.a(k), sys.w(k));
    if eps.len() != n || sigma_k.shape() != (n, n) || p_k.shape() != (n, n) || gain.nrows() != n || gain.ncols() != nu.len() {
        return Err(Error::Dimension("voi_imperfect inputs disagree with the state dimension".into()));
    }

    let a_eps = a * eps;
    let k_nu = gain * nu;
    let instantaneous = k_nu.dot(&(ric.gamma(k + 1) * (&a_eps * 2.0 - &k_nu)));

    let tail = if k + 2 <= sys.horizon {
        let pbar = a * sigma_k * a.transpose() + w;
        let p_pred = a * p_k * a.transpose() + w;
        let p_post = &p_pred - gain * sensor.c.at(k) * p_k * a.transpose();
        rollout::branch_tail(ric, sys, k, &a_eps, &(&a_eps - &k_nu), &pbar, &p_pred, &p_post)?
    } else {
        0.0
    };
    Ok(VoiResult::new(instantaneous, theta_k, tail))
}

/// Transmit every `period` steps, starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicSpec {
    period: usize,
    offset: usize,
}

impl PeriodicSpec {
    pub fn new(period: usize, offset: usize) -> Result<Self> {
        if period == 0 || offset >= period {
            return Err(Error::InvalidInput(format!(
                "periodic schedule needs period ≥ 1 and offset < period, got period {period}, offset {offset}"
            )));
        }
        Ok(Self { period, offset })
    }

    pub fn every_step() -> Self {
        Self { period: 1, offset: 0 }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn offset(&self) -> usize {
        self.offset
    }
}

/// `δ̄_k = 1` iff `(k − offset) mod period = 0`.
pub fn periodic_trigger(spec: &PeriodicSpec, k: usize) -> bool {
    (k as i128 - spec.offset as i128).rem_euclid(spec.period as i128) == 0
}
