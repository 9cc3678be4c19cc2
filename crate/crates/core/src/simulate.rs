//! Closed-loop simulation with the one-step transmission delay, plus
//! Monte-Carlo aggregation.
//!
//! Each step `k` runs the same fixed sequence:
//!
//! 1. observe `x_k`, or form `y_k = C_k x_k + v_k`;
//! 2. update the trigger's Kalman filter with `y_k` (imperfect information);
//! 3. compute the trigger signals against the controller's current belief;
//! 4. decide `δ_k`;
//! 5. compute `u_k` from `x̂_k`, which only reflects payloads sent before `k`;
//! 6. accumulate `x_kᵀQ_kx_k + u_kᵀR_ku_k + θ_kδ_k`;
//! 7. hand `(δ_k, payload)` to the controller, producing `x̂_{k+1}`;
//! 8. step the plant with `w_k`.
//!
//! All randomness for one run is drawn up front into a [`NoisePanel`] in the
//! order `x_0, (w_0, v_0), (w_1, v_1), …`, so different policies can be run
//! against identical noise.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::{
    controller_intermittent_step, perfect_controller_step, trigger_kf_init, trigger_kf_step, trigger_signals,
    ControllerBelief, Observation, TriggerBelief, TriggerSignals,
};
use crate::model::{measure, step_process, CostSpec, InfoPattern, TimeVaryingLinearSystem};
use crate::numerics::{GaussianSampler, Matrix, RngStream, Vector};
use crate::policies::{
    ce_control, exact_voi_scalar, periodic_trigger, voi_imperfect, voi_perfect, PeriodicSpec, ScalarDpTable,
};
use crate::riccati::RiccatiSolution;

/// Rule deciding `δ_k`.
#[derive(Debug, Clone)]
pub enum TriggerPolicy {
    /// Rollout value of information against always-transmit.
    Voi,
    Periodic(PeriodicSpec),
    Always,
    Never,
    /// Exact value of information from a scalar DP table.
    ExactScalarDp(Arc<ScalarDpTable>),
    /// Fixed transmission sequence of length `N + 1`.
    Schedule(Vec<bool>),
}

impl TriggerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            TriggerPolicy::Voi => "voi",
            TriggerPolicy::Periodic(_) => "periodic",
            TriggerPolicy::Always => "always",
            TriggerPolicy::Never => "never",
            TriggerPolicy::ExactScalarDp(_) => "exact_scalar_dp",
            TriggerPolicy::Schedule(_) => "schedule",
        }
    }
}

/// Rule producing `u_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy {
    /// `u_k = −L_k x̂_k`.
    CertaintyEquivalence,
    /// Fixed inputs of length `N + 1`, ignoring all measurements.
    Open(Vec<Vector>),
}

/// One run's worth of noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePanel {
    pub x0: Vector,
    pub w: Vec<Vector>,
    /// Measurement noise, present iff the information pattern is imperfect.
    pub v: Option<Vec<Vector>>,
    pub seed: u64,
    pub stream_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vector,
    pub u: Vector,
    pub w: Vector,
    pub y: Option<Vector>,
    pub v: Option<Vector>,
    pub delta: bool,
    /// Value of information, when the trigger computes one.
    pub voi: Option<f64>,
    pub xhat: Vector,
    pub p: Matrix,
    pub xcheck: Option<Vector>,
    pub sigma: Option<Matrix>,
    pub eps: Option<Vector>,
    pub nu: Option<Vector>,
    /// `x_kᵀQ_kx_k + u_kᵀR_ku_k + θ_kδ_k`.
    pub stage_cost: f64,
    /// `θ_k δ_k`.
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    pub x_terminal: Vector,
    pub xhat_terminal: Vector,
    pub terminal_cost: f64,
    pub seed: u64,
    pub stream_index: u64,
    pub rng_algorithm: &'static str,
}

impl TrajectoryRecord {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn transmissions(&self) -> usize {
        self.steps.iter().filter(|s| s.delta).count()
    }

    /// Realized `Σ (xᵀQx + uᵀRu + θδ) + x_{N+1}ᵀQ_{N+1}x_{N+1}`.
    pub fn psi(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum::<f64>() + self.terminal_cost
    }

    /// Realized communication spend `Σ θ_k δ_k`.
    pub fn communication_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.price).sum()
    }

    pub fn outcome(&self) -> RunOutcome {
        let steps = self.steps.len() as f64;
        let psi = self.psi();
        let control = self.steps.iter().map(|s| s.stage_cost - s.price).sum::<f64>() + self.terminal_cost;
        RunOutcome {
            stream_index: self.stream_index,
            j: control / steps,
            r: self.transmissions() as f64 / steps,
            psi,
            transmissions: self.transmissions(),
            x_terminal: self.x_terminal.clone(),
        }
    }
}

/// Per-run scalar results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub stream_index: u64,
    /// Control cost normalized by `N + 1`.
    pub j: f64,
    /// Transmission rate over `N + 1` steps.
    pub r: f64,
    /// Unnormalized total cost including communication.
    pub psi: f64,
    pub transmissions: usize,
    pub x_terminal: Vector,
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Two-pass estimate in slice order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub n_runs: usize,
    pub base_seed: u64,
    pub j: Estimate,
    pub r: Estimate,
    pub psi: Estimate,
    pub transmissions: Estimate,
    pub transmissions_min: usize,
    pub transmissions_max: usize,
    pub outcomes: Vec<RunOutcome>,
}

impl RunSummary {
    fn from_outcomes(outcomes: Vec<RunOutcome>, base_seed: u64) -> Self {
        let col = |f: fn(&RunOutcome) -> f64| Estimate::from_samples(&outcomes.iter().map(f).collect::<Vec<_>>());
        Self {
            n_runs: outcomes.len(),
            base_seed,
            j: col(|o| o.j),
            r: col(|o| o.r),
            psi: col(|o| o.psi),
            transmissions: col(|o| o.transmissions as f64),
            transmissions_min: outcomes.iter().map(|o| o.transmissions).min().unwrap_or(0),
            transmissions_max: outcomes.iter().map(|o| o.transmissions).max().unwrap_or(0),
            outcomes,
        }
    }
}

/// Paired difference `Ψ_A − Ψ_B` over runs sharing their noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub n_runs: usize,
    pub difference: Estimate,
    pub a: RunSummary,
    pub b: RunSummary,
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub rate: Estimate,
    pub j: Estimate,
    pub n_runs: usize,
}

fn pick<T>(items: &[T], k: usize) -> &T {
    if items.len() == 1 {
        &items[0]
    } else {
        &items[k]
    }
}

fn quad(x: &Vector, m: &Matrix) -> f64 {
    x.dot(&(m * x))
}

/// Closed-loop simulator for one system, cost and Riccati solution, with
/// pre-factored noise covariances.
pub struct Simulator<'a> {
    sys: &'a TimeVaryingLinearSystem,
    cost: &'a CostSpec,
    ric: &'a RiccatiSolution,
    x0: GaussianSampler,
    w: Vec<GaussianSampler>,
    v: Option<Vec<GaussianSampler>>,
}

impl<'a> Simulator<'a> {
    pub fn new(sys: &'a TimeVaryingLinearSystem, cost: &'a CostSpec, ric: &'a RiccatiSolution) -> Result<Self> {
        if cost.horizon != sys.horizon || ric.horizon() != sys.horizon {
            return Err(Error::Dimension(format!(
                "horizons disagree: system {}, cost {}, Riccati {}",
                sys.horizon,
                cost.horizon,
                ric.horizon()
            )));
        }
        let x0 = GaussianSampler::new(sys.m0.clone(), &sys.m0_cov)?;
        let w = sys.w.entries().iter().map(GaussianSampler::zero_mean).collect::<Result<Vec<_>>>()?;
        let v = match &sys.sensor {
            Some(s) => Some(s.v.entries().iter().map(GaussianSampler::zero_mean).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        Ok(Self { sys, cost, ric, x0, w, v })
    }

    pub fn system(&self) -> &TimeVaryingLinearSystem {
        self.sys
    }

    pub fn draw_noise(&self, rng: &mut RngStream) -> NoisePanel {
        let x0 = self.x0.sample(rng);
        let mut w = Vec::with_capacity(self.sys.horizon + 1);
        let mut v = self.v.as_ref().map(|_| Vec::with_capacity(self.sys.horizon + 1));
        for k in 0..=self.sys.horizon {
            w.push(pick(&self.w, k).sample(rng));
            if let (Some(samplers), Some(v)) = (&self.v, v.as_mut()) {
                v.push(pick(samplers, k).sample(rng));
            }
        }
        NoisePanel {
            x0,
            w,
            v,
            seed: rng.seed(),
            stream_index: rng.stream_index(),
        }
    }

    /// Noise for run `stream_index` of a Monte-Carlo batch.
    pub fn noise_for(&self, base_seed: u64, stream_index: u64) -> NoisePanel {
        self.draw_noise(&mut RngStream::new(base_seed, stream_index))
    }

    fn decide(
        &self,
        trigger: &TriggerPolicy,
        k: usize,
        signals: &TriggerSignals,
        tb: Option<&TriggerBelief>,
        cb: &ControllerBelief,
    ) -> Result<(bool, Option<f64>)> {
        let theta = self.cost.theta(k);
        Ok(match trigger {
            TriggerPolicy::Voi => {
                let r = match tb {
                    None => voi_perfect(self.ric, self.sys, k, &signals.eps, theta)?,
                    Some(tb) => voi_imperfect(self.ric, self.sys, k, signals, &tb.sigma, &cb.p, theta)?,
                };
                (r.transmit, Some(r.value))
            }
            TriggerPolicy::ExactScalarDp(table) => {
                let e = signals.e.as_ref().ok_or(Error::Pattern {
                    op: "exact scalar DP trigger",
                    expected: "perfect",
                })?;
                let r = exact_voi_scalar(table, self.ric, self.sys, k, e[0], theta)?;
                (r.transmit, Some(r.value))
            }
            TriggerPolicy::Periodic(spec) => (periodic_trigger(spec, k), None),
            TriggerPolicy::Always => (true, None),
            TriggerPolicy::Never => (false, None),
            TriggerPolicy::Schedule(deltas) => (deltas[k], None),
        })
    }

    /// Run one closed loop against the given noise.
    pub fn run(&self, noise: &NoisePanel, trigger: &TriggerPolicy, control: &ControlPolicy) -> Result<TrajectoryRecord> {
        let sys = self.sys;
        let horizon = sys.horizon;
        let len = horizon + 1;
        if noise.w.len() != len || noise.v.as_ref().is_some_and(|v| v.len() != len) {
            return Err(Error::InvalidInput("noise panel does not match the horizon".into()));
        }
        if let TriggerPolicy::Schedule(d) = trigger {
            if d.len() != len {
                return Err(Error::InvalidInput(format!("schedule has {} entries, need {len}", d.len())));
            }
        }
        if let ControlPolicy::Open(u) = control {
            if u.len() != len {
                return Err(Error::InvalidInput(format!("open-loop input has {} entries, need {len}", u.len())));
            }
        }
        let imperfect = sys.info_pattern() == InfoPattern::Imperfect;

        let mut x = noise.x0.clone();
        let mut cb = ControllerBelief::initial(sys);
        let mut tb: Option<TriggerBelief> = None;
        let mut u_prev: Option<Vector> = None;
        let mut steps = Vec::with_capacity(len);

        for k in 0..=horizon {
            // (1) observe
            let (y, v) = match &noise.v {
                Some(vs) if imperfect => {
                    let v = vs[k].clone();
                    (Some(measure(sys, k, &x, &v)?), Some(v))
                }
                _ => (None, None),
            };
            // (2) trigger-side filter
            if let Some(y) = &y {
                tb = Some(match (&tb, &u_prev) {
                    (Some(prev), Some(u)) => trigger_kf_step(prev, sys, u, y)?,
                    _ => trigger_kf_init(sys, y)?,
                });
            }
            // (3) signals against the controller's belief at k
            let observation = match &y {
                Some(y) => Observation::Output(y),
                None => Observation::State(&x),
            };
            let signals = match (&tb, &y) {
                // Only the rollout needs K_k; skipping it keeps silent open-loop
                // runs alive after P_k has outgrown double precision.
                (Some(tb), Some(y)) if !matches!(trigger, TriggerPolicy::Voi) => TriggerSignals {
                    e: None,
                    eps: &tb.xcheck - &cb.xhat,
                    nu: Some(y - sys.c(k)? * &cb.xhat),
                    gain: None,
                },
                _ => trigger_signals(tb.as_ref(), &cb, sys, observation)?,
            };
            // (4) decision
            let (delta, voi) = self.decide(trigger, k, &signals, tb.as_ref(), &cb)?;
            // (5) control from x̂_k, before the k-th payload is delivered
            debug_assert_eq!(cb.k, k, "controller belief must still be at step k when u_k is formed");
            let u = match control {
                ControlPolicy::CertaintyEquivalence => ce_control(self.ric, k, &cb.xhat)?,
                ControlPolicy::Open(us) => us[k].clone(),
            };
            // (6) accounting
            let price = if delta { self.cost.theta(k) } else { 0.0 };
            let stage_cost = quad(&x, self.cost.q(k)) + quad(&u, self.cost.r(k)) + price;
            // (7) deliver (δ_k, payload) to the controller
            let next_cb = if imperfect {
                controller_intermittent_step(&cb, sys, &u, delta, y.as_ref())?.0
            } else {
                perfect_controller_step(&cb, sys, &u, delta, Some(&x))?
            };
            // (8) plant
            let w = noise.w[k].clone();
            let x_next = step_process(sys, k, &x, &u, &w)?;

            steps.push(StepRecord {
                k,
                x,
                u: u.clone(),
                w,
                y,
                v,
                delta,
                voi,
                xhat: std::mem::replace(&mut cb, next_cb).xhat,
                p: Matrix::zeros(0, 0),
                xcheck: tb.as_ref().map(|t| t.xcheck.clone()),
                sigma: tb.as_ref().map(|t| t.sigma.clone()),
                eps: imperfect.then(|| signals.eps.clone()),
                nu: signals.nu,
                stage_cost,
                price,
            });
            x = x_next;
            u_prev = Some(u);
        }
        let terminal_cost = quad(&x, self.cost.q(horizon + 1));
        let mut record = TrajectoryRecord {
            steps,
            x_terminal: x,
            xhat_terminal: cb.xhat,
            terminal_cost,
            seed: noise.seed,
            stream_index: noise.stream_index,
            rng_algorithm: RngStream::ALGORITHM_ID,
        };
        fill_covariances(&mut record, sys)?;
        Ok(record)
    }
}

/// Recompute the controller covariance at each logged step.
///
/// `P_k` depends only on the transmission pattern, so it is replayed from the
/// logged decisions rather than cloned inside the loop.
fn fill_covariances(record: &mut TrajectoryRecord, sys: &TimeVaryingLinearSystem) -> Result<()> {
    let mut p = sys.m0_cov.clone();
    for step in &mut record.steps {
        let k = step.k;
        let (a, w) = (sys.a(k), sys.w(k));
        let mut next = a * &p * a.transpose() + w;
        if step.delta {
            next = match &sys.sensor {
                None => w.clone(),
                Some(s) => {
                    let c = s.c.at(k);
                    let gain = crate::estimators::controller_gain(sys, k, &p)?;
                    next - gain * c * &p * a.transpose()
                }
            };
        }
        crate::numerics::symmetrize(&mut next);
        step.p = std::mem::replace(&mut p, next);
    }
    Ok(())
}

/// Simulate one closed loop, drawing its noise from `rng`.
pub fn run_trajectory(
    sys: &TimeVaryingLinearSystem,
    cost: &CostSpec,
    ric: &RiccatiSolution,
    trigger: &TriggerPolicy,
    control: &ControlPolicy,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord> {
    let sim = Simulator::new(sys, cost, ric)?;
    let noise = sim.draw_noise(rng);
    sim.run(&noise, trigger, control)
}

fn check_runs(n_runs: usize) -> Result<()> {
    if n_runs < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 runs, got {n_runs}")));
    }
    Ok(())
}

/// `n_runs` independent runs, run `r` using stream `r` of `base_seed`.
pub fn monte_carlo(
    sys: &TimeVaryingLinearSystem,
    cost: &CostSpec,
    ric: &RiccatiSolution,
    trigger: &TriggerPolicy,
    control: &ControlPolicy,
    n_runs: usize,
    base_seed: u64,
) -> Result<RunSummary> {
    check_runs(n_runs)?;
    let sim = Simulator::new(sys, cost, ric)?;
    let outcomes = (0..n_runs as u64)
        .map(|r| sim.run(&sim.noise_for(base_seed, r), trigger, control).map(|t| t.outcome()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary::from_outcomes(outcomes, base_seed))
}

/// Compare two triggering rules on common random numbers.
pub fn paired_comparison(
    sys: &TimeVaryingLinearSystem,
    cost: &CostSpec,
    ric: &RiccatiSolution,
    policy_a: &TriggerPolicy,
    policy_b: &TriggerPolicy,
    n_runs: usize,
    base_seed: u64,
) -> Result<PairedDifference> {
    check_runs(n_runs)?;
    let sim = Simulator::new(sys, cost, ric)?;
    let control = ControlPolicy::CertaintyEquivalence;
    let mut a = Vec::with_capacity(n_runs);
    let mut b = Vec::with_capacity(n_runs);
    for r in 0..n_runs as u64 {
        let noise = sim.noise_for(base_seed, r);
        a.push(sim.run(&noise, policy_a, &control)?.outcome());
        b.push(sim.run(&noise, policy_b, &control)?.outcome());
    }
    let per_run: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a.psi - b.psi).collect();
    Ok(PairedDifference {
        n_runs,
        difference: Estimate::from_samples(&per_run),
        a: RunSummary::from_outcomes(a, base_seed),
        b: RunSummary::from_outcomes(b, base_seed),
        per_run,
    })
}

/// Rate/performance trade-off of the value-of-information trigger, one
/// point per `λ`, all points sharing the same noise.
pub fn lambda_sweep(
    sys: &TimeVaryingLinearSystem,
    cost_template: &CostSpec,
    ric: &RiccatiSolution,
    lambdas: &[f64],
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<TradeoffPoint>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("empty lambda list".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::InvalidInput(format!("lambda must be finite and non-negative, got {bad}")));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let cost = cost_template.with_lambda(lambda);
            let summary = monte_carlo(
                sys,
                &cost,
                ric,
                &TriggerPolicy::Voi,
                &ControlPolicy::CertaintyEquivalence,
                n_runs,
                base_seed,
            )?;
            Ok(TradeoffPoint {
                lambda,
                rate: summary.r,
                j: summary.j,
                n_runs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::policies::{scalar_dp_value, GridSpec};
    use crate::riccati::{backward_riccati, lemma1_residual};

    fn s1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn ce() -> ControlPolicy {
        ControlPolicy::CertaintyEquivalence
    }

    fn setup(sys: &TimeVaryingLinearSystem, cost: &CostSpec) -> RiccatiSolution {
        backward_riccati(sys, cost).unwrap()
    }

    #[test]
    fn noiseless_loop_is_deterministic_lqr() {
        let (mut sys, cost) = presets::scalar(1.0);
        sys.w = crate::model::Sequence::constant(s1(0.0));
        sys.m0 = Vector::from_element(1, 2.0);
        sys.m0_cov = s1(0.0);
        let ric = setup(&sys, &cost);
        let traj = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(traj.transmissions(), 0);
        let mut x = 2.0;
        for step in &traj.steps {
            assert_eq!(step.x[0], x);
            assert_eq!(step.xhat[0], x);
            x = 1.1 * x - ric.l(step.k)[(0, 0)] * x;
        }
    }

    #[test]
    fn always_transmit_has_unit_rate() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let spec = PeriodicSpec::every_step();
        let traj =
            run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Periodic(spec), &ce(), &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(traj.outcome().r, 1.0);
        assert_eq!(traj.steps.len(), 101);
    }

    #[test]
    fn never_transmit_has_zero_rate() {
        let (sys, cost) = presets::pendulum();
        let ric = setup(&sys, &cost);
        let traj = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Never, &ce(), &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(traj.outcome().r, 0.0);
        assert_eq!(traj.communication_cost(), 0.0);
    }

    #[test]
    fn pathwise_identity_holds_for_every_policy() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let table = Arc::new(scalar_dp_value(&sys, &cost, &ric, GridSpec::default(), 32).unwrap());
        let mut rng = RngStream::new(4, 99);
        let open = ControlPolicy::Open((0..=100).map(|_| rng.standard_normal_vector(1)).collect());
        let policies = [
            TriggerPolicy::Voi,
            TriggerPolicy::Periodic(PeriodicSpec::new(3, 1).unwrap()),
            TriggerPolicy::Always,
            TriggerPolicy::Never,
            TriggerPolicy::ExactScalarDp(table),
        ];
        for (i, trigger) in policies.iter().enumerate() {
            for control in [ce(), open.clone()] {
                let traj = run_trajectory(&sys, &cost, &ric, trigger, &control, &mut RngStream::new(5, i as u64)).unwrap();
                assert!(lemma1_residual(&traj, &ric, &cost).unwrap() <= 1e-8);
            }
        }
        let (sys, cost) = presets::pendulum();
        let ric = setup(&sys, &cost);
        for trigger in [TriggerPolicy::Voi, TriggerPolicy::Always, TriggerPolicy::Never] {
            let traj = run_trajectory(&sys, &cost, &ric, &trigger, &ce(), &mut RngStream::new(6, 0)).unwrap();
            assert!(lemma1_residual(&traj, &ric, &cost).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn truncated_trajectory_is_rejected() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let mut traj = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Always, &ce(), &mut RngStream::new(7, 0)).unwrap();
        traj.steps.pop();
        assert!(matches!(lemma1_residual(&traj, &ric, &cost), Err(Error::IncompleteTrajectory(_))));
    }

    #[test]
    fn runs_are_reproducible() {
        let (sys, cost) = presets::pendulum();
        let ric = setup(&sys, &cost);
        let a = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), &mut RngStream::new(8, 3)).unwrap();
        let b = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), &mut RngStream::new(8, 3)).unwrap();
        assert_eq!(a, b);
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let s1 = monte_carlo(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), 50, 9).unwrap();
        let s2 = monte_carlo(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), 50, 9).unwrap();
        assert_eq!(s1, s2);
        assert!(monte_carlo(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), 1, 9).is_err());
    }

    #[test]
    fn logged_beliefs_follow_the_estimators() {
        let (sys, cost) = presets::pendulum();
        let ric = setup(&sys, &cost);
        let traj = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), &mut RngStream::new(10, 0)).unwrap();
        let mut cb = ControllerBelief::initial(&sys);
        for step in &traj.steps {
            assert_eq!(step.xhat, cb.xhat);
            assert!((&step.p - &cb.p).norm() <= 1e-12 * cb.p.norm());
            let eps = step.xcheck.as_ref().unwrap() - &step.xhat;
            assert_eq!(step.eps.as_ref().unwrap(), &eps);
            cb = controller_intermittent_step(&cb, &sys, &step.u, step.delta, step.y.as_ref()).unwrap().0;
        }
        assert_eq!(traj.xhat_terminal, cb.xhat);
    }

    #[test]
    fn accounting_identity() {
        let (sys, cost) = presets::scalar(0.7);
        let ric = setup(&sys, &cost);
        let traj = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Voi, &ce(), &mut RngStream::new(11, 0)).unwrap();
        let o = traj.outcome();
        let lhs = o.psi / 101.0;
        let rhs = o.j + 0.7 * o.r;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    /// `E[J]` under always-transmit from the pathwise identity: the control
    /// deviation is `L_k e_k` with `e_0 ~ N(0, M_0)` and `e_k = w_{k−1}` after.
    fn always_transmit_expected_j(sys: &TimeVaryingLinearSystem, cost: &CostSpec, ric: &RiccatiSolution) -> f64 {
        let horizon = sys.horizon;
        let m0 = &sys.m0;
        let mut total = quad(m0, ric.s(0)) + (ric.s(0) * &sys.m0_cov).trace();
        for k in 0..=horizon {
            total += (ric.s(k + 1) * sys.w(k)).trace();
            let e_cov = if k == 0 { sys.m0_cov.clone() } else { sys.w(k - 1).clone() };
            total += (ric.gamma(k) * e_cov).trace();
        }
        let _ = cost;
        total / (horizon + 1) as f64
    }

    #[test]
    fn always_transmit_cost_matches_closed_form() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let summary = monte_carlo(&sys, &cost, &ric, &TriggerPolicy::Always, &ce(), 10_000, 12).unwrap();
        let expected = always_transmit_expected_j(&sys, &cost, &ric);
        assert!(
            (summary.j.mean - expected).abs() <= 5.0 * summary.j.stderr,
            "{} ± {} vs {expected}",
            summary.j.mean,
            summary.j.stderr
        );
    }

    #[test]
    fn price_only_reprices_fixed_schedules() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let schedule = TriggerPolicy::Schedule((0..=100).map(|k| k % 3 == 0).collect());
        let a = monte_carlo(&sys, &cost, &ric, &schedule, &ce(), 200, 13).unwrap();
        let b = monte_carlo(&sys, &cost.with_lambda(2.0), &ric, &schedule, &ce(), 200, 13).unwrap();
        assert_eq!(a.j, b.j);
        assert_eq!(a.r, b.r);
        assert!(b.psi.mean > a.psi.mean);
    }

    #[test]
    fn identical_policies_pair_to_zero() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let d = paired_comparison(&sys, &cost, &ric, &TriggerPolicy::Voi, &TriggerPolicy::Voi, 100, 14).unwrap();
        assert!(d.per_run.iter().all(|&x| x == 0.0));
        assert_eq!(d.difference.mean, 0.0);
    }

    #[test]
    fn zero_price_sweep_transmits_always() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let points = lambda_sweep(&sys, &cost, &ric, &[0.0, 1.0], 50, 15).unwrap();
        assert_eq!(points[0].rate.mean, 1.0);
        assert!(points[1].rate.mean < 1.0);
        assert!(lambda_sweep(&sys, &cost, &ric, &[], 50, 15).is_err());
        assert!(lambda_sweep(&sys, &cost, &ric, &[-1.0], 50, 15).is_err());
    }

    #[test]
    fn bad_schedule_length_is_rejected() {
        let (sys, cost) = presets::scalar(1.0);
        let ric = setup(&sys, &cost);
        let err = run_trajectory(&sys, &cost, &ric, &TriggerPolicy::Schedule(vec![true; 5]), &ce(), &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    /// Under a state-independent schedule the controller's belief is the
    /// exact conditional law, so the empirical spread of `x − x̂` matches `P`.
    #[test]
    fn controller_covariance_is_calibrated() {
        let (sys, cost) = presets::pendulum();
        let ric = setup(&sys, &cost);
        let schedule = TriggerPolicy::Periodic(PeriodicSpec::new(7, 2).unwrap());
        let sim = Simulator::new(&sys, &cost, &ric).unwrap();
        let k = 60;
        let runs = 4000;
        let mut acc = Matrix::zeros(4, 4);
        let mut p = Matrix::zeros(4, 4);
        for r in 0..runs {
            let traj = sim.run(&sim.noise_for(16, r), &schedule, &ce()).unwrap();
            let e = &traj.steps[k].x - &traj.steps[k].xhat;
            acc += &e * e.transpose();
            p = traj.steps[k].p.clone();
        }
        acc /= runs as f64;
        for i in 0..4 {
            let sd = p[(i, i)] * (2.0 / runs as f64).sqrt();
            assert!((acc[(i, i)] - p[(i, i)]).abs() <= 5.0 * sd, "{i}: {} vs {}", acc[(i, i)], p[(i, i)]);
        }
    }
}
