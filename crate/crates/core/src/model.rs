//! System and cost definitions, validation, ZOH discretization and the raw
//! process/sensor step primitives.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{expm, is_symmetric_pd, is_symmetric_psd, Matrix, Vector};

const PSD_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for the controllability/observability ranks.
const RANK_TOL: f64 = 1e-10;

/// A value indexed by time step. A single entry is broadcast to every index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<T>(Vec<T>);

impl<T> Sequence<T> {
    pub fn constant(value: T) -> Self {
        Self(vec![value])
    }

    /// # Panics
    /// If `values` is empty.
    pub fn from_vec(values: Vec<T>) -> Self {
        assert!(!values.is_empty(), "a sequence needs at least one entry");
        Self(values)
    }

    pub fn at(&self, k: usize) -> &T {
        if self.0.len() == 1 {
            &self.0[0]
        } else {
            &self.0[k]
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.0.len() == 1
    }

    pub fn entries(&self) -> &[T] {
        &self.0
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Sequence<U> {
        Sequence(self.0.iter().map(f).collect())
    }

    /// Iterate over the stored entries with the time index each one applies
    /// from (`0` for a broadcast entry).
    fn indexed(&self) -> impl Iterator<Item = (usize, &T)> {
        self.0.iter().enumerate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoPattern {
    /// The trigger observes the state itself.
    Perfect,
    /// The trigger observes `y_k = C_k x_k + v_k`.
    Imperfect,
}

impl InfoPattern {
    pub fn name(self) -> &'static str {
        match self {
            InfoPattern::Perfect => "perfect",
            InfoPattern::Imperfect => "imperfect",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub c: Sequence<Matrix>,
    pub v: Sequence<Matrix>,
}

/// `x_{k+1} = A_k x_k + B_k u_k + w_k`, optionally observed through
/// `y_k = C_k x_k + v_k`, over steps `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingLinearSystem {
    pub horizon: usize,
    pub a: Sequence<Matrix>,
    pub b: Sequence<Matrix>,
    pub w: Sequence<Matrix>,
    /// Present iff the information pattern is imperfect.
    pub sensor: Option<Sensor>,
    /// Mean of `x_0`.
    pub m0: Vector,
    /// Covariance of `x_0`.
    pub m0_cov: Matrix,
}

impl TimeVaryingLinearSystem {
    pub fn time_invariant(
        horizon: usize,
        a: Matrix,
        b: Matrix,
        w: Matrix,
        m0: Vector,
        m0_cov: Matrix,
    ) -> Self {
        Self {
            horizon,
            a: Sequence::constant(a),
            b: Sequence::constant(b),
            w: Sequence::constant(w),
            sensor: None,
            m0,
            m0_cov,
        }
    }

    pub fn with_sensor(mut self, c: Matrix, v: Matrix) -> Self {
        self.sensor = Some(Sensor {
            c: Sequence::constant(c),
            v: Sequence::constant(v),
        });
        self
    }

    pub fn info_pattern(&self) -> InfoPattern {
        if self.sensor.is_some() {
            InfoPattern::Imperfect
        } else {
            InfoPattern::Perfect
        }
    }

    pub fn state_dim(&self) -> usize {
        self.m0.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.at(0).ncols()
    }

    /// Output dimension, zero under perfect information.
    pub fn output_dim(&self) -> usize {
        self.sensor.as_ref().map_or(0, |s| s.c.at(0).nrows())
    }

    pub fn a(&self, k: usize) -> &Matrix {
        self.a.at(k)
    }

    pub fn b(&self, k: usize) -> &Matrix {
        self.b.at(k)
    }

    pub fn w(&self, k: usize) -> &Matrix {
        self.w.at(k)
    }

    pub fn c(&self, k: usize) -> Result<&Matrix> {
        self.sensor_ref("C_k")
            .map(|s| s.c.at(k))
    }

    pub fn v(&self, k: usize) -> Result<&Matrix> {
        self.sensor_ref("V_k").map(|s| s.v.at(k))
    }

    pub fn sensor_ref(&self, op: &'static str) -> Result<&Sensor> {
        self.sensor.as_ref().ok_or(Error::Pattern {
            op,
            expected: "imperfect",
        })
    }

    pub(crate) fn check_index(&self, k: usize) -> Result<()> {
        if k > self.horizon {
            Err(Error::IndexOutOfRange {
                k,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }
}

/// Stage and terminal weights plus the communication price `θ_k = ℓ_k λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub horizon: usize,
    /// Stage weights `Q_k`, `k = 0..=horizon`.
    pub q: Sequence<Matrix>,
    /// Terminal weight `Q_{N+1}`.
    pub q_terminal: Matrix,
    pub r: Sequence<Matrix>,
    /// Relative communication costs `ℓ_k`.
    pub ell: Sequence<f64>,
    /// Lagrange multiplier on the sampling rate.
    pub lambda: f64,
}

impl CostSpec {
    pub fn time_invariant(horizon: usize, q: Matrix, q_terminal: Matrix, r: Matrix, lambda: f64) -> Self {
        Self {
            horizon,
            q: Sequence::constant(q),
            q_terminal,
            r: Sequence::constant(r),
            ell: Sequence::constant(1.0),
            lambda,
        }
    }

    /// `Q_k` for `k ≤ N`, `Q_{N+1}` for `k = N + 1`.
    pub fn q(&self, k: usize) -> &Matrix {
        if k > self.horizon {
            &self.q_terminal
        } else {
            self.q.at(k)
        }
    }

    pub fn r(&self, k: usize) -> &Matrix {
        self.r.at(k)
    }

    pub fn ell(&self, k: usize) -> f64 {
        *self.ell.at(k)
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.ell(k) * self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// `ẋ = A_c x + B_c u` sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearSystem {
    pub ac: Matrix,
    pub bc: Matrix,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub k: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn error(field: &str, k: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: field.to_string(),
            k,
            message: message.into(),
        }
    }

    fn warning(field: &str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field: field.to_string(),
            k: None,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: {} {}", self.field, self.message)?;
        if let Some(k) = self.k {
            write!(f, " at k={k}")?;
        }
        Ok(())
    }
}

struct Checker {
    out: Vec<Diagnostic>,
}

impl Checker {
    fn err(&mut self, field: &str, k: Option<usize>, msg: impl Into<String>) {
        self.out.push(Diagnostic::error(field, k, msg));
    }

    fn length(&mut self, field: &str, len: usize, expected: usize) -> bool {
        if len == 1 || len == expected {
            true
        } else {
            self.err(
                field,
                None,
                format!("has {len} entries, expected 1 or {expected}"),
            );
            false
        }
    }

    fn shape(&mut self, field: &str, k: usize, m: &Matrix, rows: usize, cols: usize) -> bool {
        if m.nrows() == rows && m.ncols() == cols {
            if m.iter().all(|v| v.is_finite()) {
                return true;
            }
            self.err(field, Some(k), "has non-finite entries");
        } else {
            self.err(
                field,
                Some(k),
                format!("is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols()),
            );
        }
        false
    }

    fn seq(&mut self, field: &str, s: &Sequence<Matrix>, len: usize, rows: usize, cols: usize) -> bool {
        if !self.length(field, s.len(), len) {
            return false;
        }
        let mut ok = true;
        for (k, m) in s.indexed() {
            ok &= self.shape(field, k, m, rows, cols);
        }
        ok
    }

    fn pd(&mut self, field: &str, s: &Sequence<Matrix>) {
        for (k, m) in s.indexed() {
            if !is_symmetric_pd(m, PSD_TOL * m.norm().max(1.0)) {
                self.err(field, Some(k), "not PD");
            }
        }
    }

    fn psd(&mut self, field: &str, s: &Sequence<Matrix>) {
        for (k, m) in s.indexed() {
            if !is_symmetric_psd(m, PSD_TOL * m.norm().max(1.0)).unwrap_or(false) {
                self.err(field, Some(k), "not PSD");
            }
        }
    }
}

/// Check every standing assumption on a system/cost pair.
///
/// Returns an empty list iff all invariants hold. Violations are reported as
/// errors naming the field and time index; lack of controllability or
/// observability over the horizon is reported as a warning.
pub fn validate_system(sys: &TimeVaryingLinearSystem, cost: &CostSpec) -> Vec<Diagnostic> {
    let mut ck = Checker { out: Vec::new() };
    let horizon = sys.horizon;
    let steps = horizon + 1;
    if cost.horizon != horizon {
        ck.err(
            "horizon",
            None,
            format!("mismatch: system N={horizon}, cost N={}", cost.horizon),
        );
    }

    let n = sys.m0.len();
    let m = sys.b.at(0).ncols();
    if n == 0 {
        ck.err("m0", None, "state dimension must be positive");
        return ck.out;
    }
    if m == 0 {
        ck.err("B", None, "input dimension must be positive");
        return ck.out;
    }
    if sys.m0.iter().any(|v| !v.is_finite()) {
        ck.err("m0", None, "has non-finite entries");
    }

    let mut dims_ok = ck.seq("A", &sys.a, steps, n, n);
    dims_ok &= ck.seq("B", &sys.b, steps, n, m);
    if ck.seq("W", &sys.w, steps, n, n) {
        ck.pd("W", &sys.w);
    }
    if ck.shape("M0", 0, &sys.m0_cov, n, n) {
        ck.psd("M0", &Sequence::constant(sys.m0_cov.clone()));
    }
    if let Some(sensor) = &sys.sensor {
        let p = sensor.c.at(0).nrows();
        if p == 0 {
            ck.err("C", None, "output dimension must be positive");
            dims_ok = false;
        } else {
            dims_ok &= ck.seq("C", &sensor.c, steps, p, n);
            if ck.seq("V", &sensor.v, steps, p, p) {
                ck.pd("V", &sensor.v);
            }
        }
    }

    if ck.seq("Q", &cost.q, steps, n, n) {
        ck.psd("Q", &cost.q);
    }
    if ck.shape("Q_terminal", horizon + 1, &cost.q_terminal, n, n) {
        ck.psd("Q_terminal", &Sequence::constant(cost.q_terminal.clone()));
    }
    if ck.seq("R", &cost.r, steps, m, m) {
        ck.pd("R", &cost.r);
    }
    if ck.length("ell", cost.ell.len(), steps) {
        for (k, &l) in cost.ell.indexed() {
            if !(l.is_finite() && l >= 0.0) {
                ck.err("ell", Some(k), "must be finite and non-negative");
            }
        }
    }
    if !(cost.lambda.is_finite() && cost.lambda >= 0.0) {
        ck.err("lambda", None, "must be finite and non-negative");
    }

    if dims_ok && ck.out.is_empty() {
        let h = steps.min(n);
        if reachability_rank(sys, h) < n {
            ck.out.push(Diagnostic::warning(
                "A,B",
                format!("not controllable over the first {h} steps"),
            ));
        }
        if sys.sensor.is_some() && observability_rank(sys, h) < n {
            ck.out.push(Diagnostic::warning(
                "A,C",
                format!("not observable over the first {h} steps"),
            ));
        }
    }
    ck.out
}

fn numerical_rank(m: &Matrix) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Rank of `[Φ(h,1)B_0, Φ(h,2)B_1, …, B_{h−1}]`.
fn reachability_rank(sys: &TimeVaryingLinearSystem, h: usize) -> usize {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut blocks = Matrix::zeros(n, h * m);
    let mut phi = Matrix::identity(n, n);
    for j in (0..h).rev() {
        blocks
            .view_mut((0, j * m), (n, m))
            .copy_from(&(&phi * sys.b(j)));
        phi = &phi * sys.a(j);
    }
    numerical_rank(&blocks)
}

/// Rank of `[C_0; C_1 Φ(1,0); …; C_{h−1} Φ(h−1,0)]`.
fn observability_rank(sys: &TimeVaryingLinearSystem, h: usize) -> usize {
    let n = sys.state_dim();
    let p = sys.output_dim();
    let mut blocks = Matrix::zeros(h * p, n);
    let mut phi = Matrix::identity(n, n);
    for j in 0..h {
        let c = sys.c(j).expect("imperfect pattern checked by caller");
        blocks.view_mut((j * p, 0), (p, n)).copy_from(&(c * &phi));
        phi = sys.a(j) * &phi;
    }
    numerical_rank(&blocks)
}

/// Zero-order-hold discretization.
///
/// Both matrices come out of one exponential of the augmented generator
/// `[[A_c, B_c], [0, 0]] · dt`: the top-left block is `A` and the top-right
/// block is `∫₀^dt e^{A_c s} ds · B_c`.
pub fn zoh_discretize(c: &ContinuousLinearSystem) -> Result<(Matrix, Matrix)> {
    let n = c.ac.nrows();
    let m = c.bc.ncols();
    if !c.ac.is_square() || c.bc.nrows() != n {
        return Err(Error::Dimension(format!(
            "A_c is {}x{}, B_c is {}x{}",
            c.ac.nrows(),
            c.ac.ncols(),
            c.bc.nrows(),
            m
        )));
    }
    if !(c.dt.is_finite() && c.dt > 0.0) {
        return Err(Error::InvalidInput(format!("sampling period {}", c.dt)));
    }
    if c.ac.iter().chain(c.bc.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite continuous-time entry".into()));
    }
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&c.ac * c.dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(&c.bc * c.dt));
    let e = expm(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// `A_k x + B_k u + w`.
pub fn step_process(
    sys: &TimeVaryingLinearSystem,
    k: usize,
    x: &Vector,
    u: &Vector,
    w: &Vector,
) -> Result<Vector> {
    sys.check_index(k)?;
    let (a, b) = (sys.a(k), sys.b(k));
    if x.len() != a.ncols() || u.len() != b.ncols() || w.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "step_process: x {}, u {}, w {} against n={}, m={}",
            x.len(),
            u.len(),
            w.len(),
            a.nrows(),
            b.ncols()
        )));
    }
    Ok(a * x + b * u + w)
}

/// `C_k x + v`; only defined under imperfect information.
pub fn measure(sys: &TimeVaryingLinearSystem, k: usize, x: &Vector, v: &Vector) -> Result<Vector> {
    let sensor = sys.sensor_ref("measure")?;
    sys.check_index(k)?;
    let c = sensor.c.at(k);
    if x.len() != c.ncols() || v.len() != c.nrows() {
        return Err(Error::Dimension(format!(
            "measure: x {}, v {} against C {}x{}",
            x.len(),
            v.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(c * x + v)
}

/// Physical parameters of a cart-pole linearized about the upright position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Pendulum moment of inertia [kg m²].
    pub inertia: f64,
    /// Pendulum mass [kg].
    pub mass: f64,
    /// Distance to the pendulum's center of mass [m].
    pub length: f64,
    pub gravity: f64,
    /// Cart mass [kg].
    pub cart_mass: f64,
    /// Cart friction coefficient [N/m/s].
    pub friction: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            inertia: 0.006,
            mass: 0.2,
            length: 0.3,
            gravity: 9.81,
            cart_mass: 0.5,
            friction: 0.1,
        }
    }
}

impl PendulumParams {
    /// Continuous model with state `[cart position, cart velocity, pitch
    /// angle, pitch rate]` and the cart force as input.
    pub fn continuous(&self, dt: f64) -> ContinuousLinearSystem {
        let Self {
            inertia,
            mass: m,
            length: l,
            gravity: g,
            cart_mass,
            friction: b,
        } = *self;
        let p = inertia + m * l * l;
        let den = (cart_mass + m) * p - m * m * l * l;
        #[rustfmt::skip]
        let ac = Matrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            0.0, -b * p / den, m * m * l * l * g / den, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, -m * l * b / den, m * g * l * (cart_mass + m) / den, 0.0,
        ]);
        let bc = Matrix::from_column_slice(4, 1, &[0.0, p / den, 0.0, m * l / den]);
        ContinuousLinearSystem { ac, bc, dt }
    }
}

/// Ready-made experiment definitions.
pub mod presets {
    use super::*;

    /// Scalar process `x_{k+1} = 1.1 x_k + u_k + w_k` with `W = 3`,
    /// `x_0 ~ N(0, 1)`, `N = 100`, `Q = Q_{N+1} = 1`, `R = 0.1`, `ℓ = 1`.
    pub fn scalar(lambda: f64) -> (TimeVaryingLinearSystem, CostSpec) {
        let s = |v: f64| Matrix::from_element(1, 1, v);
        let sys = TimeVaryingLinearSystem::time_invariant(
            100,
            s(1.1),
            s(1.0),
            s(3.0),
            Vector::zeros(1),
            s(1.0),
        );
        let cost = CostSpec::time_invariant(100, s(1.0), s(1.0), s(0.1), lambda);
        (sys, cost)
    }

    #[rustfmt::skip]
    pub fn pendulum_a() -> Matrix {
        Matrix::from_row_slice(4, 4, &[
            1.0000, 0.0100, 0.0001, 0.0000,
            0.0000, 0.9982, 0.0267, 0.0001,
            0.0000, 0.0000, 1.0016, 0.0100,
            0.0000, -0.0045, 0.3122, 1.0016,
        ])
    }

    pub fn pendulum_b() -> Matrix {
        Matrix::from_column_slice(4, 1, &[0.0001, 0.0182, 0.0002, 0.0454])
    }

    #[rustfmt::skip]
    pub fn pendulum_c() -> Matrix {
        Matrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ])
    }

    pub fn pendulum_v() -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0020, 0.0, 0.0, 0.0010])
    }

    #[rustfmt::skip]
    pub fn pendulum_w() -> Matrix {
        Matrix::from_row_slice(4, 4, &[
            0.0006, 0.0003, 0.0001, 0.0006,
            0.0003, 0.0008, 0.0003, 0.0004,
            0.0001, 0.0003, 0.0007, 0.0006,
            0.0006, 0.0004, 0.0006, 0.0031,
        ])
    }

    /// Cart-pole over CAN with the 4-decimal matrices of the 100 Hz model,
    /// position and pitch measured, `N = 500`, `λ = 0.0067`.
    pub fn pendulum() -> (TimeVaryingLinearSystem, CostSpec) {
        let w = pendulum_w();
        let sys = TimeVaryingLinearSystem::time_invariant(
            500,
            pendulum_a(),
            pendulum_b(),
            w.clone(),
            Vector::from_vec(vec![0.0, 0.0, 0.2, 0.0]),
            w * 10.0,
        )
        .with_sensor(pendulum_c(), pendulum_v());
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 1000.0, 1.0]));
        let cost = CostSpec::time_invariant(500, q.clone(), q, Matrix::identity(1, 1), 0.0067);
        (sys, cost)
    }
}
