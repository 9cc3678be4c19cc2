//! Exact triggering value function for scalar plants with perfect
//! information, by backward induction on a grid.
//!
//! With `e_{k+1} = (1 − δ_k) a_k e_k + w_k` and `γ = Γ_{k+1}`,
//!
//! ```text
//! V_k(e) = γ W_k + min{ a²γe² + E[V_{k+1}(a e + w)],  θ_k + E[V_{k+1}(w)] },
//! ```
//!
//! with `V_{N+1} ≡ 0`. Once `a²γe² ≥ θ_k` transmitting is optimal, so `V_k`
//! is flat beyond `|e| = √(θ_k / (a²γ))`. The grid is sized to cover every
//! such saturation point and values outside it are held at the end value.

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

use super::VoiResult;
use crate::error::{Error, Result};
use crate::model::{CostSpec, TimeVaryingLinearSystem};
use crate::riccati::RiccatiSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of grid points; forced odd so that `e = 0` is a node.
    pub points: usize,
    /// Half-width of the symmetric grid; chosen automatically when `None`.
    pub half_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 2001,
            half_width: None,
        }
    }
}

/// Tabulated value function and decisions.
///
/// `values[k][i]` is `V_k(grid[i])` for `k = 0..=N+1`; `transmit[k][i]` and
/// `rho[k][i]` cover `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDpTable {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub transmit: Vec<Vec<bool>>,
    /// `ρ_k(e) = E[V_{k+1} | δ_k = 0] − E[V_{k+1} | δ_k = 1]`.
    pub rho: Vec<Vec<f64>>,
    pub quadrature_order: usize,
}

impl ScalarDpTable {
    pub fn horizon(&self) -> usize {
        self.transmit.len() - 1
    }

    pub fn half_width(&self) -> f64 {
        *self.grid.last().expect("grid is never empty")
    }

    fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Piecewise-linear interpolation of `row`, held constant outside the grid.
    fn interpolate(&self, row: &[f64], e: f64) -> f64 {
        let last = self.grid.len() - 1;
        if e <= self.grid[0] {
            return row[0];
        }
        if e >= self.grid[last] {
            return row[last];
        }
        let pos = (e - self.grid[0]) / self.step();
        let i = (pos.floor() as usize).min(last - 1);
        let frac = pos - i as f64;
        row[i] + frac * (row[i + 1] - row[i])
    }

    pub fn value(&self, k: usize, e: f64) -> f64 {
        self.interpolate(&self.values[k], e)
    }

    pub fn rho(&self, k: usize, e: f64) -> f64 {
        self.interpolate(&self.rho[k], e)
    }

    /// Smallest `|e|` on the grid at which step `k` transmits, or `None` if
    /// it never does.
    pub fn threshold(&self, k: usize) -> Option<f64> {
        self.grid
            .iter()
            .zip(&self.transmit[k])
            .filter(|(_, &t)| t)
            .map(|(e, _)| e.abs())
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    }
}

fn scalar(m: &crate::Matrix) -> f64 {
    m[(0, 0)]
}

/// Quadrature nodes and weights for `E[f(w)]`, `w ~ N(0, 1)`, symmetrized
/// so that node `i` and node `n − 1 − i` are exact negatives.
fn standard_normal_rule(order: usize) -> Result<Vec<(f64, f64)>> {
    let deg = NonZeroUsize::new(order).ok_or_else(|| Error::InvalidInput("quadrature order must be positive".into()))?;
    let rule = GaussHermite::new(deg);
    let pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
        .collect();
    let n = pairs.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = (pairs[i], pairs[n - 1 - i]);
            (0.5 * (a.0 - b.0), 0.5 * (a.1 + b.1))
        })
        .collect())
}

/// Tabulate the optimal triggering value function of a scalar plant.
pub fn scalar_dp_value(
    sys: &TimeVaryingLinearSystem,
    cost: &CostSpec,
    ric: &RiccatiSolution,
    grid: GridSpec,
    quadrature_order: usize,
) -> Result<ScalarDpTable> {
    let n = sys.state_dim();
    if n != 1 {
        return Err(Error::UnsupportedDimension { n });
    }
    if sys.sensor.is_some() {
        return Err(Error::Pattern {
            op: "scalar_dp_value",
            expected: "perfect",
        });
    }
    if grid.points < 3 {
        return Err(Error::InvalidInput("grid needs at least 3 points".into()));
    }
    let horizon = sys.horizon;
    let rule = standard_normal_rule(quadrature_order)?;

    let half_width = match grid.half_width {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::InvalidInput(format!("grid half-width {h}"))),
        None => auto_half_width(sys, cost, ric),
    };
    let half_points = grid.points / 2;
    let grid_e: Vec<f64> = (0..=2 * half_points)
        .map(|i| half_width * (i as f64 - half_points as f64) / half_points as f64)
        .collect();

    let mut table = ScalarDpTable {
        grid: grid_e,
        values: vec![Vec::new(); horizon + 2],
        transmit: vec![Vec::new(); horizon + 1],
        rho: vec![Vec::new(); horizon + 1],
        quadrature_order,
    };
    table.values[horizon + 1] = vec![0.0; table.grid.len()];

    for k in (0..=horizon).rev() {
        let a = scalar(sys.a(k));
        let w_var = scalar(sys.w(k));
        let sd = w_var.sqrt();
        let gamma = scalar(ric.gamma(k + 1));
        let theta = cost.theta(k);
        let next = &table.values[k + 1];
        let expect = |mean: f64| -> f64 {
            rule.iter()
                .map(|&(z, wt)| wt * table.interpolate(next, mean + sd * z))
                .sum()
        };
        let sent = expect(0.0);
        let mut values = Vec::with_capacity(table.grid.len());
        let mut transmit = Vec::with_capacity(table.grid.len());
        let mut rho = Vec::with_capacity(table.grid.len());
        for &e in &table.grid {
            let ae = a * e;
            let silent = expect(ae);
            let instantaneous = gamma * ae * ae;
            // δ = 1 iff a²γe² − θ + ρ ≥ 0
            let go = instantaneous - theta + (silent - sent) >= 0.0;
            let best = if go { theta + sent } else { instantaneous + silent };
            values.push(gamma * w_var + best);
            transmit.push(go);
            rho.push(silent - sent);
        }
        table.values[k] = values;
        table.transmit[k] = transmit;
        table.rho[k] = rho;
    }
    Ok(table)
}

/// Half-width covering every saturation point `√(θ_k / (a_k²Γ_{k+1}))`,
/// the stationary silent-error spread when the plant is stable, and six
/// noise standard deviations.
fn auto_half_width(sys: &TimeVaryingLinearSystem, cost: &CostSpec, ric: &RiccatiSolution) -> f64 {
    let mut width: f64 = 0.0;
    for k in 0..=sys.horizon {
        let a = scalar(sys.a(k));
        let w_sd = scalar(sys.w(k)).sqrt();
        let gain = a * a * scalar(ric.gamma(k + 1));
        let saturation = if gain > 0.0 { (cost.theta(k) / gain).sqrt() } else { 0.0 };
        width = width.max(1.25 * saturation + 6.0 * w_sd);
        if a.abs() < 1.0 {
            width = width.max(6.0 * w_sd / (1.0 - a * a).sqrt());
        }
    }
    width
}

/// Exact value of information `a²Γ_{k+1}e² − θ_k + ρ_k(e)` with `ρ_k` read
/// from the table.
pub fn exact_voi_scalar(
    table: &ScalarDpTable,
    ric: &RiccatiSolution,
    sys: &TimeVaryingLinearSystem,
    k: usize,
    e: f64,
    theta_k: f64,
) -> Result<VoiResult> {
    if k > table.horizon() {
        return Err(Error::IndexOutOfRange {
            k,
            horizon: table.horizon(),
        });
    }
    if sys.state_dim() != 1 {
        return Err(Error::UnsupportedDimension { n: sys.state_dim() });
    }
    let ae = scalar(sys.a(k)) * e;
    let instantaneous = scalar(ric.gamma(k + 1)) * ae * ae;
    let mut out = VoiResult::new(instantaneous, theta_k, table.rho(k, e));
    out.extrapolated = e.abs() > table.half_width();
    Ok(out)
}
