//! Dense linear-algebra helpers and reproducible Gaussian sampling.
//!
//! Matrices and vectors are plain `nalgebra` dynamic types. Everything the
//! rest of the crate needs beyond ordinary arithmetic lives here: a PSD test,
//! SPD solves that report which matrix failed, and a seeded normal generator
//! whose draw sequence is fixed by `(seed, stream_index)`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry tolerated before a covariance is rejected.
const SYMMETRY_TOL: f64 = 1e-9;

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replace `m` by `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetric_eigenvalues(m: &Matrix) -> Vector {
    SymmetricEigen::new(m.clone()).eigenvalues
}

/// True iff `m` is symmetric to `tol` (entrywise) and its smallest eigenvalue
/// is at least `-tol`.
pub fn is_symmetric_psd(m: &Matrix, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "PSD test needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    if max_asymmetry(m) > tol {
        return Ok(false);
    }
    if m.nrows() == 0 {
        return Ok(true);
    }
    let min_eig = symmetric_eigenvalues(m).min();
    Ok(min_eig >= -tol)
}

/// Positive definiteness via Cholesky on the symmetric part.
pub fn is_symmetric_pd(m: &Matrix, tol: f64) -> bool {
    m.is_square()
        && m.iter().all(|v| v.is_finite())
        && max_asymmetry(m) <= tol
        && Cholesky::new(m.clone()).is_some()
}

/// Solve `m · X = b` for symmetric positive definite `m`.
///
/// `role` names the matrix in the error raised when the Cholesky
/// factorization fails.
pub fn solve_spd(m: &Matrix, b: &Matrix, role: &str) -> Result<Matrix> {
    if !m.is_square() || m.ncols() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve with {role}: {}x{} against {}x{}",
            m.nrows(),
            m.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let chol = Cholesky::new(m.clone()).ok_or_else(|| Error::singular(role, None))?;
    Ok(chol.solve(b))
}

/// Solve `X · m = b` for symmetric positive definite `m`, i.e. `X = b · m⁻¹`.
pub fn solve_spd_right(b: &Matrix, m: &Matrix, role: &str) -> Result<Matrix> {
    let xt = solve_spd(m, &b.transpose(), role)?;
    Ok(xt.transpose())
}

/// A factor `F` with `F Fᵀ = cov`.
///
/// Positive definite inputs get their lower Cholesky factor. Semidefinite
/// inputs fall back to `U · diag(√max(λ, 0))` from the symmetric
/// eigen-decomposition, so a zero covariance yields a zero factor.
pub fn covariance_factor(cov: &Matrix) -> Result<Matrix> {
    if !cov.is_square() {
        return Err(Error::InvalidCovariance(format!(
            "covariance must be square, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let scale = max_abs(cov).max(1.0);
    let asym = max_asymmetry(cov);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidCovariance(format!(
            "asymmetric by {asym:e}"
        )));
    }
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(Error::InvalidCovariance(format!(
            "negative eigenvalue {min:e}"
        )));
    }
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

/// Seeded source of uniform and standard-normal draws.
///
/// Backed by ChaCha8 with the 64-bit seed expanded by `seed_from_u64` and the
/// stream selected by `stream_index`, so distinct Monte-Carlo runs get
/// independent, individually replayable sequences.
///
/// Normals come from Box–Muller: each pair of uniforms `(u1, u2)` yields
/// `r·cos(2πu2)` first and `r·sin(2πu2)` second, with `r = √(−2 ln u1)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub const ALGORITHM_ID: &'static str = "chacha8-boxmuller";

    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self {
            seed,
            stream_index,
            rng,
            spare: None,
        }
    }

    pub fn algorithm_id(&self) -> &'static str {
        Self::ALGORITHM_ID
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Rewind to the first draw.
    pub fn reset(&mut self) {
        *self = Self::new(self.seed, self.stream_index);
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phase = std::f64::consts::TAU * u2;
        self.spare = Some(r * phase.sin());
        r * phase.cos()
    }

    pub fn standard_normal_vector(&mut self, dim: usize) -> Vector {
        Vector::from_fn(dim, |_, _| self.next_standard_normal())
    }
}

/// Pre-factored Gaussian distribution for repeated sampling.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vector,
    factor: Matrix,
}

impl GaussianSampler {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has dimension {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let factor = covariance_factor(cov)?;
        Ok(Self { mean, factor })
    }

    pub fn zero_mean(cov: &Matrix) -> Result<Self> {
        Self::new(Vector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let z = rng.standard_normal_vector(self.dim());
        &self.mean + &self.factor * z
    }
}

/// Draw `mean + F z` with `F Fᵀ = cov` and `z` standard normal.
pub fn sample_gaussian(mean: &Vector, cov: &Matrix, rng: &mut RngStream) -> Result<Vector> {
    Ok(GaussianSampler::new(mean.clone(), cov)?.sample(rng))
}

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series.
///
/// The argument is halved until its 1-norm is at most 1/2, and the series is
/// cut once the tail bound `‖X‖^{j+1}/(j+1)! · 1/(1 − ‖X‖/(j+2))` falls below
/// 1e-16, well inside the 1e-12 truncation budget.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "exponential of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    let norm = one_norm(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = m / 2f64.powi(squarings);
    let x_norm = one_norm(&x);

    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    let mut bound = 1.0;
    for j in 1..=40 {
        term = &term * &x / j as f64;
        result += &term;
        bound *= x_norm / j as f64;
        let tail = bound * x_norm / (j + 1) as f64 / (1.0 - x_norm / (j + 2) as f64);
        if tail < 1e-16 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
