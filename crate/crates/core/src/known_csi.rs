//! Sum-MSE design with perfect channel knowledge.
//!
//! Block-coordinate descent over the precoder, the receive scalars and the
//! RIS phases. The precoder and filter have closed forms; the unit-modulus
//! phase problem `min φᴴΞφ − 2Re{φᴴd*}` is solved by majorization-minimization
//! with the majorizer `λ_max I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_model::{exact_sum_mse, ChannelRealization, Design, C64};

/// Solves the Hermitian positive-definite system `A X = B`, falling back to
/// LU when the Cholesky factorization fails.
fn solve_hpd(a: DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(x);
        }
    }
    a.lu()
        .solve(b)
        .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| Error::Degenerate("regularized normal matrix is singular".into()))
}

/// Regularized zero-forcing direction and its power scaling.
///
/// `W̄ = (G_cᴴG_c + (σ²/P) tr(C̄ᴴC̄) I)⁻¹ G_cᴴ` with `G_c = C̄FΦH`, and
/// `α = √P / ‖W̄‖_F`. The transmitted precoder is `αW̄`, the matching filter
/// `C̄/α`.
pub fn update_precoder(
    c_bar: &DVector<C64>,
    phi: &DVector<C64>,
    ch: &ChannelRealization,
    power: f64,
    noise_var: f64,
) -> Result<(DMatrix<C64>, f64)> {
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("power must be > 0, got {power}")));
    }
    if c_bar.len() != ch.users() {
        return Err(Error::ShapeMismatch(format!("filter has {} entries, K = {}", c_bar.len(), ch.users())));
    }
    let mut gc = ch.cascade(phi)?;
    for (mut row, c) in gc.row_iter_mut().zip(c_bar.iter()) {
        row *= *c;
    }
    let gch = gc.adjoint();
    let reg = noise_var / power * c_bar.norm_squared();
    let m = ch.antennas();
    let a = &gch * &gc + DMatrix::<C64>::identity(m, m) * C64::from(reg);
    let w_bar = solve_hpd(a, &gch)?;
    let norm = w_bar.norm();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("precoder direction vanished".into()));
    }
    Ok((w_bar, power.sqrt() / norm))
}

/// Per-user Wiener receive scalars `c_k = g_kk* / (Σ_j |g_kj|² + σ²)` for
/// `G = FΦHW` with the transmitted precoder `W`.
pub fn update_filter(w: &DMatrix<C64>, phi: &DVector<C64>, ch: &ChannelRealization, noise_var: f64) -> Result<DVector<C64>> {
    if w.nrows() != ch.antennas() || w.ncols() != ch.users() {
        return Err(Error::ShapeMismatch(format!("W is {}x{}", w.nrows(), w.ncols())));
    }
    let g = ch.cascade(phi)? * w;
    let k = g.nrows();
    let mut c = DVector::zeros(k);
    for i in 0..k {
        let den = g.row(i).norm_squared() + noise_var;
        if !(den > 0.0) {
            return Err(Error::Degenerate(format!("user {i} sees no signal and no noise")));
        }
        c[i] = g[(i, i)].conj() / den;
    }
    Ok(c)
}

/// The phase subproblem `f(φ) = φᴴΞφ − 2Re{φᴴd*}` for fixed `W` and `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmState {
    pub phi: DVector<C64>,
    /// `Ξ = A ⊙ Bᵀ`, `A = FᴴCᴴCF`, `B = HWWᴴHᴴ`.
    pub xi: DMatrix<C64>,
    /// `d = diag(HWCF)`.
    pub d: DVector<C64>,
    pub lambda_max: f64,
}

impl MmState {
    pub fn objective(&self, phi: &DVector<C64>) -> f64 {
        let quad = (phi.adjoint() * &self.xi * phi)[(0, 0)].re;
        let lin = phi.dotc(&self.d.conjugate()).re;
        quad - 2.0 * lin
    }
}

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_MAX: usize = 10_000;

/// Largest eigenvalue of a Hermitian positive-semidefinite matrix by power
/// iteration from the normalized all-ones vector.
pub fn lambda_max(a: &DMatrix<C64>) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("empty matrix"));
    }
    let mut v = DVector::from_element(n, C64::from(1.0 / (n as f64).sqrt()));
    let mut lambda = 0.0;
    for step in 0..POWER_ITERATION_MAX {
        let av = a * &v;
        let norm = av.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = v.dotc(&av).re;
        v = av / C64::from(norm);
        if step > 0 && (next - lambda).abs() <= POWER_ITERATION_TOL * next.abs() {
            // Rayleigh quotient of the final iterate
            return Ok(v.dotc(&(a * &v)).re.max(next));
        }
        lambda = next;
    }
    Err(Error::PowerIteration(POWER_ITERATION_MAX))
}

pub fn build_mm_problem(w: &DMatrix<C64>, c: &DVector<C64>, phi: &DVector<C64>, ch: &ChannelRealization) -> Result<MmState> {
    let (m, n, k) = (ch.antennas(), ch.elements(), ch.users());
    if w.nrows() != m || w.ncols() != k || c.len() != k || phi.len() != n {
        return Err(Error::ShapeMismatch("design does not match channel".into()));
    }
    let mut cf = ch.f.clone();
    for (mut row, ci) in cf.row_iter_mut().zip(c.iter()) {
        row *= *ci;
    }
    let a = cf.adjoint() * &cf;
    let hw = &ch.h * w;
    let b = &hw * hw.adjoint();
    let xi = a.component_mul(&b.transpose());
    let d = (hw * cf).diagonal();
    let lambda_max = lambda_max(&xi)?;
    Ok(MmState {
        phi: phi.clone(),
        xi,
        d,
        lambda_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmOutcome {
    pub phi: DVector<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// `f(φᵗ)` for `t = 0..=iterations`.
    pub objective: Vec<f64>,
}

/// Iterates `q = (λ_max I − Ξ)φᵗ + d*`, `φᵗ⁺¹ = e^{j arg q}` until
/// `|f(φᵗ⁺¹) − f(φᵗ)| < tol` or `max_iter` steps.
pub fn mm_phase(state: &MmState, tol: f64, max_iter: usize) -> MmOutcome {
    let n = state.phi.len();
    let lam = C64::from(state.lambda_max);
    let d_conj = state.d.conjugate();
    let mut phi = state.phi.clone();
    let mut objective = vec![state.objective(&phi)];
    for it in 1..=max_iter {
        let q = &phi * lam - &state.xi * &phi + &d_conj;
        let next = DVector::from_iterator(
            n,
            q.iter().zip(phi.iter()).map(|(qi, pi)| if qi.norm() > 0.0 { C64::from_polar(1.0, qi.arg()) } else { *pi }),
        );
        let f = state.objective(&next);
        let prev = *objective.last().unwrap_or(&f);
        phi = next;
        objective.push(f);
        if (f - prev).abs() < tol {
            return MmOutcome {
                phi,
                iterations: it,
                converged: true,
                objective,
            };
        }
    }
    MmOutcome {
        phi,
        iterations: max_iter,
        converged: false,
        objective,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Outer stopping tolerance on the sum-MSE change.
    pub tolerance: f64,
    pub max_outer: usize,
    pub mm_tolerance: f64,
    pub mm_max_iter: usize,
    /// Precoder/filter alternations per outer iteration.
    pub inner_alternations: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_outer: 500,
            mm_tolerance: 1e-10,
            mm_max_iter: 5_000,
            inner_alternations: 2,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.mm_tolerance > 0.0) {
            return Err(Error::Config("baseline tolerances must be > 0".into()));
        }
        if self.max_outer == 0 || self.mm_max_iter == 0 {
            return Err(Error::Config("baseline iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownCsiSolution {
    pub design: Design,
    /// Sum MSE after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl KnownCsiSolution {
    pub fn final_mse(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// One precoder step followed by the Wiener filter, starting from the
/// current transmitted `(W, C)`.
fn alternate(design: &mut Design, ch: &ChannelRealization, power: f64, noise_var: f64) -> Result<()> {
    let (w_bar, alpha) = update_precoder(&design.c, &design.phi, ch, power, noise_var)?;
    design.w = w_bar * C64::from(alpha);
    design.c = update_filter(&design.w, &design.phi, ch, noise_var)?;
    Ok(())
}

/// Alternating optimization from `φ = 1`, `C = I`.
pub fn solve_known_csi(ch: &ChannelRealization, cfg: &BaselineConfig, noise_var: f64, power: f64) -> Result<KnownCsiSolution> {
    cfg.validate()?;
    let (m, n, k) = (ch.antennas(), ch.elements(), ch.users());
    let mut design = Design {
        w: DMatrix::zeros(m, k),
        phi: DVector::from_element(n, C64::from(1.0)),
        c: DVector::from_element(k, C64::from(1.0)),
    };
    alternate(&mut design, ch, power, noise_var)?;
    let mut trace = vec![exact_sum_mse(&design, ch, noise_var)?];
    let mut converged = false;
    for _ in 0..cfg.max_outer {
        let state = build_mm_problem(&design.w, &design.c, &design.phi, ch)?;
        design.phi = mm_phase(&state, cfg.mm_tolerance, cfg.mm_max_iter).phi;
        for _ in 0..cfg.inner_alternations {
            alternate(&mut design, ch, power, noise_var)?;
        }
        let f = exact_sum_mse(&design, ch, noise_var)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(f);
        if (prev - f).abs() < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(KnownCsiSolution {
        design,
        trace,
        converged,
    })
}
