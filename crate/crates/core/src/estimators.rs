//! Conditional-Gaussian estimators for both ends of the channel.
//!
//! The controller only learns from transmitted payloads and discards the
//! information carried by silence, so its belief stays Gaussian. Under
//! perfect information a transmission reveals the state itself; under
//! imperfect information it reveals one noisy output. The trigger runs an
//! ordinary Kalman filter on every output.
//!
//! All step functions take a belief by reference and return the next one.

use crate::error::{Error, Result};
use crate::model::{InfoPattern, TimeVaryingLinearSystem};
use crate::numerics::{solve_spd_right, symmetrize, Matrix, Vector};

/// Controller-side belief `x_k | I^c_k ~ N(xhat, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerBelief {
    pub k: usize,
    pub xhat: Vector,
    pub p: Matrix,
}

impl ControllerBelief {
    /// Prior at `k = 0`: `x̂_0 = m_0`, `P_0 = M_0`.
    pub fn initial(sys: &TimeVaryingLinearSystem) -> Self {
        Self {
            k: 0,
            xhat: sys.m0.clone(),
            p: sys.m0_cov.clone(),
        }
    }
}

/// Trigger-side belief `x_k | I^e_k ~ N(xcheck, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerBelief {
    pub k: usize,
    pub xcheck: Vector,
    pub sigma: Matrix,
}

/// What the trigger observes at step `k`.
#[derive(Debug, Clone, Copy)]
pub enum Observation<'a> {
    State(&'a Vector),
    Output(&'a Vector),
}

/// Quantities the triggering rule is allowed to depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSignals {
    /// `e_k = x_k − x̂_k`; perfect information only.
    pub e: Option<Vector>,
    /// `ε_k = x̌_k − x̂_k`, equal to `e_k` under perfect information.
    pub eps: Vector,
    /// Innovation `ν_k = y_k − C_k x̂_k`; imperfect information only.
    pub nu: Option<Vector>,
    /// Controller gain `K_k`; imperfect information only.
    pub gain: Option<Matrix>,
}

fn need_payload(payload: Option<&Vector>, k: usize) -> Result<&Vector> {
    payload.ok_or(Error::MissingPayload { k })
}

/// Controller update under perfect information.
///
/// `x̂_{k+1} = A x̂ + B u + δ A (x_k − x̂)`, `P_{k+1} = A P Aᵀ + W − δ A P Aᵀ`.
/// A transmission resets the covariance to `W_k` exactly.
pub fn perfect_controller_step(
    b: &ControllerBelief,
    sys: &TimeVaryingLinearSystem,
    u: &Vector,
    delta: bool,
    x_k: Option<&Vector>,
) -> Result<ControllerBelief> {
    let k = b.k;
    sys.check_index(k)?;
    let (a, bm, w) = (sys.a(k), sys.b(k), sys.w(k));
    let (xhat, p) = if delta {
        let x = need_payload(x_k, k)?;
        (a * x + bm * u, w.clone())
    } else {
        let mut p = a * &b.p * a.transpose() + w;
        symmetrize(&mut p);
        (a * &b.xhat + bm * u, p)
    };
    Ok(ControllerBelief { k: k + 1, xhat, p })
}

/// `K_k = A_k P C_kᵀ (C_k P C_kᵀ + V_k)⁻¹`.
pub fn controller_gain(sys: &TimeVaryingLinearSystem, k: usize, p: &Matrix) -> Result<Matrix> {
    let sensor = sys.sensor_ref("controller_gain")?;
    let (a, c, v) = (sys.a(k), sensor.c.at(k), sensor.v.at(k));
    let pct = p * c.transpose();
    let innov = c * &pct + v;
    solve_spd_right(&(a * pct), &innov, "controller innovation covariance").map_err(|e| e.at(k))
}

/// Controller update under imperfect information.
///
/// `x̂_{k+1} = A x̂ + B u + δ K (y_k − C x̂)`, `P_{k+1} = A P Aᵀ + W − δ K C P Aᵀ`.
/// Returns the next belief and, when a payload arrived, the gain `K_k`. The
/// gain is not formed on silent steps, where `P_k` may have grown beyond
/// what the innovation covariance can resolve.
pub fn controller_intermittent_step(
    b: &ControllerBelief,
    sys: &TimeVaryingLinearSystem,
    u: &Vector,
    delta: bool,
    y_k: Option<&Vector>,
) -> Result<(ControllerBelief, Option<Matrix>)> {
    let k = b.k;
    sys.check_index(k)?;
    let sensor = sys.sensor_ref("controller_intermittent_step")?;
    let c = sensor.c.at(k);
    let (a, bm, w) = (sys.a(k), sys.b(k), sys.w(k));
    let mut xhat = a * &b.xhat + bm * u;
    let mut p = a * &b.p * a.transpose() + w;
    let mut used_gain = None;
    if delta {
        let y = need_payload(y_k, k)?;
        let gain = controller_gain(sys, k, &b.p)?;
        xhat += &gain * (y - c * &b.xhat);
        p -= &gain * c * &b.p * a.transpose();
        used_gain = Some(gain);
    }
    symmetrize(&mut p);
    Ok((ControllerBelief { k: k + 1, xhat, p }, used_gain))
}

/// Measurement update of a Gaussian prior `N(mean, cov)` with output `y`.
fn kf_update(
    sys: &TimeVaryingLinearSystem,
    k: usize,
    mean: Vector,
    cov: Matrix,
    y: &Vector,
) -> Result<TriggerBelief> {
    let sensor = sys.sensor_ref("trigger_kf_step")?;
    let (c, v) = (sensor.c.at(k), sensor.v.at(k));
    if y.len() != c.nrows() {
        return Err(Error::Dimension(format!(
            "output has dimension {}, C_k has {} rows",
            y.len(),
            c.nrows()
        )));
    }
    if nalgebra::Cholesky::new(v.clone()).is_none() {
        return Err(Error::singular("V", Some(k)));
    }
    let cov_ct = &cov * c.transpose();
    let innov = c * &cov_ct + v;
    // H_k = Σ_k Cᵀ V⁻¹ = Σ⁻ Cᵀ (C Σ⁻ Cᵀ + V)⁻¹
    let gain = solve_spd_right(&cov_ct, &innov, "trigger innovation covariance").map_err(|e| e.at(k))?;
    let xcheck = &mean + &gain * (y - c * &mean);
    let mut sigma = &cov - &gain * cov_ct.transpose();
    symmetrize(&mut sigma);
    Ok(TriggerBelief { k, xcheck, sigma })
}

/// Trigger filter at `k = 0`, conditioning the prior `N(m_0, M_0)` on `y_0`.
///
/// Uses the covariance form `Σ_0 = M_0 − M_0C₀ᵀ(C₀M_0C₀ᵀ+V₀)⁻¹C₀M_0`, which
/// stays valid for singular `M_0`.
pub fn trigger_kf_init(sys: &TimeVaryingLinearSystem, y0: &Vector) -> Result<TriggerBelief> {
    kf_update(sys, 0, sys.m0.clone(), sys.m0_cov.clone(), y0)
}

/// One Kalman filter step: predict with `(A_{k−1}, B_{k−1}, W_{k−1})` and
/// `u_{k−1}`, then condition on `y_k`.
pub fn trigger_kf_step(
    b: &TriggerBelief,
    sys: &TimeVaryingLinearSystem,
    u: &Vector,
    y_next: &Vector,
) -> Result<TriggerBelief> {
    let k = b.k;
    sys.check_index(k + 1)?;
    let (a, bm, w) = (sys.a(k), sys.b(k), sys.w(k));
    let mean = a * &b.xcheck + bm * u;
    let mut cov = a * &b.sigma * a.transpose() + w;
    symmetrize(&mut cov);
    kf_update(sys, k + 1, mean, cov, y_next)
}

/// Signals available to the trigger at step `k`.
///
/// `tb` must be the trigger belief at the same step under imperfect
/// information and `None` under perfect information.
pub fn trigger_signals(
    tb: Option<&TriggerBelief>,
    cb: &ControllerBelief,
    sys: &TimeVaryingLinearSystem,
    observation: Observation<'_>,
) -> Result<TriggerSignals> {
    match (sys.info_pattern(), observation, tb) {
        (InfoPattern::Perfect, Observation::State(x), None) => {
            let e = x - &cb.xhat;
            Ok(TriggerSignals {
                eps: e.clone(),
                e: Some(e),
                nu: None,
                gain: None,
            })
        }
        (InfoPattern::Imperfect, Observation::Output(y), Some(tb)) => {
            if tb.k != cb.k {
                return Err(Error::InvalidInput(format!(
                    "trigger belief at k={} but controller belief at k={}",
                    tb.k, cb.k
                )));
            }
            let k = cb.k;
            let c = sys.c(k)?;
            Ok(TriggerSignals {
                e: None,
                eps: &tb.xcheck - &cb.xhat,
                nu: Some(y - c * &cb.xhat),
                gain: Some(controller_gain(sys, k, &cb.p)?),
            })
        }
        (InfoPattern::Perfect, ..) => Err(Error::Pattern {
            op: "trigger_signals with a state observation",
            expected: "perfect",
        }),
        (InfoPattern::Imperfect, ..) => Err(Error::Pattern {
            op: "trigger_signals with an output observation and trigger belief",
            expected: "imperfect",
        }),
    }
}
