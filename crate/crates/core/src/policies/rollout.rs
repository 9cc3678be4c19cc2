//! Forward branch recursions for the imperfect-information rollout.
//!
//! Runs once per trigger decision over up to `N` steps, so the kernels work
//! on preallocated column-major slices. Common sizes are monomorphized so the
//! inner loops unroll.

use crate::error::{Error, Result};
use crate::model::TimeVaryingLinearSystem;
use crate::numerics::{Matrix, Vector};
use crate::riccati::RiccatiSolution;

/// State and output dimensions.
trait Dims: Copy {
    fn n(self) -> usize;
    fn p(self) -> usize;
}

#[derive(Clone, Copy)]
struct Fixed<const N: usize, const P: usize>;

impl<const N: usize, const P: usize> Dims for Fixed<N, P> {
    #[inline(always)]
    fn n(self) -> usize {
        N
    }
    #[inline(always)]
    fn p(self) -> usize {
        P
    }
}

#[derive(Clone, Copy)]
struct Dynamic {
    n: usize,
    p: usize,
}

impl Dims for Dynamic {
    #[inline(always)]
    fn n(self) -> usize {
        self.n
    }
    #[inline(always)]
    fn p(self) -> usize {
        self.p
    }
}

/// System matrices at one step, as column-major slices.
struct StepData<'a> {
    a: &'a [f64],
    c: &'a [f64],
    w: &'a [f64],
    v: &'a [f64],
}

impl<'a> StepData<'a> {
    fn at(sys: &'a TimeVaryingLinearSystem, t: usize) -> Result<Self> {
        Ok(Self {
            a: sys.a(t).as_slice(),
            c: sys.c(t)?.as_slice(),
            w: sys.w(t).as_slice(),
            v: sys.v(t)?.as_slice(),
        })
    }
}

struct Branch {
    e: Vec<f64>,
    /// Covariance of the controller's error given the trigger's information.
    pbar: Vec<f64>,
    /// Controller covariance, which sets the gain.
    p: Vec<f64>,
}

/// Scratch space for one branch step.
struct Work {
    apct: Vec<f64>,
    innov: Vec<f64>,
    gain: Vec<f64>,
    closed: Vec<f64>,
    kv: Vec<f64>,
    tmp: Vec<f64>,
    e_tmp: Vec<f64>,
    row: Vec<f64>,
}

impl Work {
    fn new(n: usize, p: usize) -> Self {
        Self {
            apct: vec![0.0; n * p],
            innov: vec![0.0; p * p],
            gain: vec![0.0; n * p],
            closed: vec![0.0; n * n],
            kv: vec![0.0; n * p],
            tmp: vec![0.0; n * n],
            e_tmp: vec![0.0; n],
            row: vec![0.0; p],
        }
    }
}

/// Advance one branch from `t` to `t + 1` with a transmission at `t`:
/// `K = APCᵀ(CPCᵀ+V)⁻¹`, `F = A − KC`, `ē ← Fē`, `P̄ ← FP̄Fᵀ + W + KVKᵀ`,
/// `P ← APAᵀ + W − K(APCᵀ)ᵀ`.
#[inline(always)]
fn advance<D: Dims>(d: D, b: &mut Branch, s: &StepData<'_>, w: &mut Work, t: usize) -> Result<()> {
    let (n, p) = (d.n(), d.p());
    let (nn, np, pp) = (n * n, n * p, p * p);
    // Fixed-length views let the bounds checks fold away.
    let (a, c, wn, v) = (&s.a[..nn], &s.c[..np], &s.w[..nn], &s.v[..pp]);
    let (bp, bpbar, be) = (&mut b.p[..nn], &mut b.pbar[..nn], &mut b.e[..n]);
    let (tmp, closed) = (&mut w.tmp[..nn], &mut w.closed[..nn]);
    let (apct, gain, kv) = (&mut w.apct[..np], &mut w.gain[..np], &mut w.kv[..np]);
    let (innov, row, e_tmp) = (&mut w.innov[..pp], &mut w.row[..p], &mut w.e_tmp[..n]);

    // tmp(:, 0..p) = P Cᵀ
    for j in 0..p {
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += bp[i + l * n] * c[j + l * p];
            }
            tmp[i + j * n] = acc;
        }
    }
    // innov = C P Cᵀ + V, apct = A P Cᵀ
    for j in 0..p {
        for i in 0..p {
            let mut acc = v[i + j * p];
            for l in 0..n {
                acc += c[i + l * p] * tmp[l + j * n];
            }
            innov[i + j * p] = acc;
        }
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += a[i + l * n] * tmp[l + j * n];
            }
            apct[i + j * n] = acc;
        }
    }
    // Cholesky of innov, lower triangle in place.
    for j in 0..p {
        let mut diag = innov[j + j * p];
        for l in 0..j {
            diag -= innov[j + l * p] * innov[j + l * p];
        }
        if !(diag > 0.0 && diag.is_finite()) {
            return Err(Error::singular("controller innovation covariance", Some(t)));
        }
        let diag = diag.sqrt();
        innov[j + j * p] = diag;
        for i in (j + 1)..p {
            let mut acc = innov[i + j * p];
            for l in 0..j {
                acc -= innov[i + l * p] * innov[j + l * p];
            }
            innov[i + j * p] = acc / diag;
        }
    }
    // gain rows: r ← r·innov⁻¹
    for i in 0..n {
        for j in 0..p {
            let mut acc = apct[i + j * n];
            for l in 0..j {
                acc -= innov[j + l * p] * row[l];
            }
            row[j] = acc / innov[j + j * p];
        }
        for j in (0..p).rev() {
            let mut acc = row[j];
            for l in (j + 1)..p {
                acc -= innov[l + j * p] * row[l];
            }
            row[j] = acc / innov[j + j * p];
        }
        for j in 0..p {
            gain[i + j * n] = row[j];
        }
    }

    // P ← A (P Aᵀ) + W − K apctᵀ
    for j in 0..n {
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += bp[i + l * n] * a[j + l * n];
            }
            tmp[i + j * n] = acc;
        }
    }
    for j in 0..n {
        for i in 0..n {
            let mut acc = wn[i + j * n];
            for l in 0..n {
                acc += a[i + l * n] * tmp[l + j * n];
            }
            for l in 0..p {
                acc -= gain[i + l * n] * apct[j + l * n];
            }
            bp[i + j * n] = acc;
        }
    }
    symmetrize(bp, n);

    // F = A − K C
    for j in 0..n {
        for i in 0..n {
            let mut acc = a[i + j * n];
            for l in 0..p {
                acc -= gain[i + l * n] * c[l + j * p];
            }
            closed[i + j * n] = acc;
        }
    }
    // ē ← F ē
    for i in 0..n {
        let mut acc = 0.0;
        for l in 0..n {
            acc += closed[i + l * n] * be[l];
        }
        e_tmp[i] = acc;
    }
    be.copy_from_slice(e_tmp);

    // P̄ ← F (P̄ Fᵀ) + W + (K V) Kᵀ
    for j in 0..n {
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += bpbar[i + l * n] * closed[j + l * n];
            }
            tmp[i + j * n] = acc;
        }
    }
    for j in 0..p {
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..p {
                acc += gain[i + l * n] * v[l + j * p];
            }
            kv[i + j * n] = acc;
        }
    }
    for j in 0..n {
        for i in 0..n {
            let mut acc = wn[i + j * n];
            for l in 0..n {
                acc += closed[i + l * n] * tmp[l + j * n];
            }
            for l in 0..p {
                acc += kv[i + l * n] * gain[j + l * n];
            }
            bpbar[i + j * n] = acc;
        }
    }
    symmetrize(bpbar, n);
    Ok(())
}

#[inline(always)]
fn symmetrize(m: &mut [f64], n: usize) {
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[i + j * n] + m[j + i * n]);
            m[i + j * n] = avg;
            m[j + i * n] = avg;
        }
    }
}

/// `ēᵀΓē + tr(ΓP̄)` for symmetric `Γ`.
#[inline(always)]
fn cost<D: Dims>(d: D, b: &Branch, gamma: &[f64]) -> f64 {
    let n = d.n();
    let (gamma, e, pbar) = (&gamma[..n * n], &b.e[..n], &b.pbar[..n * n]);
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            let g = gamma[i + j * n];
            col += g * e[i];
            acc += g * pbar[i + j * n];
        }
        acc += col * e[j];
    }
    acc
}

fn run<D: Dims>(d: D, ric: &RiccatiSolution, sys: &TimeVaryingLinearSystem, k: usize, silent: &mut Branch, sent: &mut Branch) -> Result<f64> {
    let mut work = Work::new(d.n(), d.p());
    let mut tail = 0.0;
    for t in (k + 1)..sys.horizon {
        let step = StepData::at(sys, t)?;
        advance(d, silent, &step, &mut work, t)?;
        advance(d, sent, &step, &mut work, t)?;
        let g = ric.gamma(t + 1).as_slice();
        tail += cost(d, silent, g) - cost(d, sent, g);
    }
    Ok(tail)
}

/// Tail of the rollout, given both branches at `k + 1`: the silent branch
/// `(ē⁰, P̄, P⁰)` and the transmitting branch `(ē¹, P̄, P¹)`.
#[allow(clippy::too_many_arguments)]
pub(super) fn branch_tail(
    ric: &RiccatiSolution,
    sys: &TimeVaryingLinearSystem,
    k: usize,
    e_silent: &Vector,
    e_sent: &Vector,
    pbar: &Matrix,
    p_silent: &Matrix,
    p_sent: &Matrix,
) -> Result<f64> {
    let mut silent = Branch {
        e: e_silent.as_slice().to_vec(),
        pbar: pbar.as_slice().to_vec(),
        p: p_silent.as_slice().to_vec(),
    };
    let mut sent = Branch {
        e: e_sent.as_slice().to_vec(),
        pbar: pbar.as_slice().to_vec(),
        p: p_sent.as_slice().to_vec(),
    };
    let (n, p) = (sys.state_dim(), sys.output_dim());
    match (n, p) {
        (1, 1) => run(Fixed::<1, 1>, ric, sys, k, &mut silent, &mut sent),
        (2, 1) => run(Fixed::<2, 1>, ric, sys, k, &mut silent, &mut sent),
        (2, 2) => run(Fixed::<2, 2>, ric, sys, k, &mut silent, &mut sent),
        (4, 2) => run(Fixed::<4, 2>, ric, sys, k, &mut silent, &mut sent),
        _ => run(Dynamic { n, p }, ric, sys, k, &mut silent, &mut sent),
    }
}
