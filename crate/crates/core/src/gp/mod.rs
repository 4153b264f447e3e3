//! Gaussian-process surrogate over a sliding window of observations.
//!
//! Zero-mean prior, stationary kernel of the Euclidean distance, posterior
//!
//! ```text
//! μ(x)  = k̄ᵀ K̄⁻¹ y
//! σ²(x) = k(0) − k̄ᵀ K̄⁻¹ k̄
//! ```
//!
//! conditioned only on the last `W` samples. `K̄` carries a diagonal jitter
//! that doubles as observation-noise variance and is escalated ×10 (up to
//! `1e-2`) whenever the Cholesky factorization fails.

mod bessel;

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub use bessel::bessel_k;

const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KernelKind {
    SquaredExponential,
    Matern { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Length-scale `h` in normalized units.
    pub lengthscale: f64,
    /// Diagonal added to the kernel matrix.
    pub jitter: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::squared_exponential(0.5)
    }
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64) -> Self {
        Self {
            kind: KernelKind::SquaredExponential,
            lengthscale,
            jitter: 1e-6,
        }
    }

    pub fn matern(nu: f64, lengthscale: f64) -> Self {
        Self {
            kind: KernelKind::Matern { nu },
            lengthscale,
            jitter: 1e-6,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        self.lengthscale = lengthscale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!("length-scale must be > 0, got {}", self.lengthscale)));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        if let KernelKind::Matern { nu } = self.kind {
            if !(nu > 0.0) {
                return Err(Error::InvalidArgument(format!("Matérn smoothness must be > 0, got {nu}")));
            }
        }
        Ok(())
    }

    /// Kernel value at distance `a ≥ 0`; `k(0) = 1`.
    pub fn eval(&self, a: f64) -> f64 {
        let h = self.lengthscale;
        match self.kind {
            KernelKind::SquaredExponential => (-a * a / (2.0 * h * h)).exp(),
            KernelKind::Matern { nu } => {
                if a == 0.0 {
                    return 1.0;
                }
                let z = (2.0 * nu).sqrt() * a / h;
                if z > 700.0 {
                    return 0.0;
                }
                let v = 2f64.powf(1.0 - nu) / gamma(nu) * z.powf(nu) * bessel_k(nu, z);
                if v.is_finite() {
                    v.min(1.0)
                } else {
                    1.0
                }
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: f64) -> f64 {
    spec.eval(a)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The most recent `capacity` (x, y) pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    capacity: usize,
    xs: VecDeque<Vec<f64>>,
    ys: VecDeque<f64>,
}

impl SampleWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        Self {
            capacity,
            xs: VecDeque::with_capacity(capacity),
            ys: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.xs.front().map(Vec::len)
    }

    /// Appends a sample, evicting the oldest one when full.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::ShapeMismatch(format!("window holds {d}-dim points, got {}", x.len())));
            }
        }
        if self.len() == self.capacity {
            self.xs.pop_front();
            self.ys.pop_front();
        }
        self.xs.push_back(x);
        self.ys.push_back(y);
        Ok(())
    }

    pub fn xs(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone {
        self.xs.iter().map(Vec::as_slice)
    }

    pub fn ys(&self) -> impl ExactSizeIterator<Item = f64> + Clone + '_ {
        self.ys.iter().copied()
    }

    /// Copy with targets mapped through `f`.
    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            capacity: self.capacity,
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| f(*y)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mu: f64,
    pub sigma2: f64,
}

impl Posterior {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Lower confidence bound `μ − √β σ`.
pub fn acquisition(p: &Posterior, beta: f64) -> f64 {
    p.mu - beta.sqrt() * p.sigma()
}

/// `β_{t+1} = scale · ln(2t + 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub scale: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self { scale: 0.4 }
    }
}

impl BetaSchedule {
    /// β used to pick the query that follows iteration `t`.
    pub fn beta(&self, t: usize) -> f64 {
        self.scale * (2.0 * t as f64 + 2.0).ln()
    }
}

/// Kernel matrix `K(i, j) = k(‖x_i − x_j‖)` without jitter.
pub fn kernel_matrix<'a>(spec: &KernelSpec, xs: impl ExactSizeIterator<Item = &'a [f64]> + Clone) -> DMatrix<f64> {
    let pts: Vec<&[f64]> = xs.collect();
    let n = pts.len();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = spec.eval(euclidean(pts[i], pts[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factored kernel matrix plus `K̄⁻¹ y`, ready for repeated predictions.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    xs: Vec<Vec<f64>>,
    ys: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub fn fit(win: &SampleWindow, spec: &KernelSpec) -> Result<Self> {
        if win.is_empty() {
            return Err(Error::EmptyInput("sample window is empty"));
        }
        spec.validate()?;
        let k = kernel_matrix(spec, win.xs());
        Self::from_kernel_matrix(win, k, spec)
    }

    /// Uses a caller-supplied kernel matrix (without jitter) instead of the
    /// full-distance one.
    pub fn from_kernel_matrix(win: &SampleWindow, k: DMatrix<f64>, spec: &KernelSpec) -> Result<Self> {
        if k.nrows() != win.len() || k.ncols() != win.len() {
            return Err(Error::ShapeMismatch("kernel matrix does not match window".into()));
        }
        let ys = DVector::from_iterator(win.len(), win.ys());
        let mut jitter = spec.jitter;
        loop {
            let mut kj = k.clone();
            for i in 0..kj.nrows() {
                kj[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(kj) {
                let alpha = chol.solve(&ys);
                if alpha.iter().all(|v| v.is_finite()) {
                    return Ok(Self {
                        spec: KernelSpec { jitter, ..*spec },
                        xs: win.xs().map(<[f64]>::to_vec).collect(),
                        ys,
                        chol,
                        alpha,
                    });
                }
            }
            let next = (jitter * 10.0).max(1e-10);
            if next > MAX_JITTER {
                return Err(Error::SingularKernel { jitter });
            }
            log::debug!("kernel factorization failed at jitter {jitter:e}, retrying with {next:e}");
            jitter = next;
        }
    }

    /// Kernel spec with the jitter that was actually used.
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn cross_kernel(&self, xq: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.xs.len(), self.xs.iter().map(|x| self.spec.eval(euclidean(x, xq))))
    }

    pub fn predict(&self, xq: &[f64]) -> Posterior {
        self.predict_with(&self.cross_kernel(xq))
    }

    /// Posterior for an arbitrary cross-covariance vector `k̄`.
    pub fn predict_with(&self, kbar: &DVector<f64>) -> Posterior {
        let mu = kbar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(kbar)
            .unwrap_or_else(|| DVector::from_element(kbar.len(), f64::NAN));
        let sigma2 = 1.0 - v.norm_squared();
        Posterior {
            mu,
            sigma2: if sigma2.is_finite() { sigma2.max(0.0) } else { 0.0 },
        }
    }

    /// `−½ yᵀK̄⁻¹y − ½ log det K̄ − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.ys.len() as f64;
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * self.ys.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Windowed posterior at `xq`.
pub fn posterior(win: &SampleWindow, xq: &[f64], spec: &KernelSpec) -> Result<Posterior> {
    if let Some(d) = win.dim() {
        if d != xq.len() {
            return Err(Error::ShapeMismatch(format!("query has dim {}, window {d}", xq.len())));
        }
    }
    Ok(GpModel::fit(win, spec)?.predict(xq))
}

/// Log-spaced length-scale candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LengthscaleGrid {
    fn default() -> Self {
        Self {
            min: 0.05,
            max: 5.0,
            count: 16,
        }
    }
}

impl LengthscaleGrid {
    pub fn candidates(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

/// Maximum-likelihood length-scale over the grid. Ties keep the smaller
/// candidate.
pub fn fit_lengthscale(win: &SampleWindow, template: &KernelSpec, grid: &LengthscaleGrid) -> Result<KernelSpec> {
    fit_hyperparameters(win, template, grid, &[])
}

/// Joint maximum-likelihood fit of the length-scale and the diagonal noise
/// term. An empty `noise` list keeps the template's jitter. Ties keep the
/// earlier candidate (noise outer, length-scale inner).
pub fn fit_hyperparameters(
    win: &SampleWindow,
    template: &KernelSpec,
    grid: &LengthscaleGrid,
    noise: &[f64],
) -> Result<KernelSpec> {
    if win.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "hyperparameter fit needs at least 3 samples, window has {}",
            win.len()
        )));
    }
    let noise: Vec<f64> = if noise.is_empty() { vec![template.jitter] } else { noise.to_vec() };
    let mut best: Option<(f64, KernelSpec)> = None;
    for &jitter in &noise {
        for h in grid.candidates() {
            let spec = template.with_lengthscale(h).with_jitter(jitter);
            let Ok(model) = GpModel::fit(win, &spec) else {
                continue;
            };
            let lml = model.log_marginal_likelihood();
            if lml.is_finite() && best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, spec));
            }
        }
    }
    best.map(|(_, s)| s).ok_or(Error::SingularKernel { jitter: MAX_JITTER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Gauss–Jordan inverse, no pivot-free shortcuts.
    pub(crate) fn dense_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
            m.swap_rows(col, piv);
            inv.swap_rows(col, piv);
            let d = m[(col, col)];
            for j in 0..n {
                m[(col, j)] /= d;
                inv[(col, j)] /= d;
            }
            for i in 0..n {
                if i != col {
                    let f = m[(i, col)];
                    for j in 0..n {
                        m[(i, j)] -= f * m[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
        inv
    }

    fn random_window<R: Rng>(n: usize, dim: usize, rng: &mut R) -> SampleWindow {
        let mut w = SampleWindow::new(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            w.push(x, rng.random_range(-2.0..2.0)).unwrap();
        }
        w
    }

    #[test]
    fn kernel_values() {
        let se = KernelSpec::squared_exponential(0.7);
        assert_eq!(se.eval(0.0), 1.0);
        assert!((se.eval(0.7) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((se.eval(0.7) - 0.60653).abs() < 1e-5);
        for nu in [0.5, 1.5, 2.5, 0.8] {
            assert_eq!(KernelSpec::matern(nu, 0.3).eval(0.0), 1.0);
            // k(a) → 1 continuously as a → 0
            assert!((KernelSpec::matern(nu, 0.3).eval(1e-9) - 1.0).abs() < 1e-5);
        }
        let m = KernelSpec::matern(0.5, 1.3);
        assert!((m.eval(1.3) - (-1f64).exp()).abs() < 1e-6);
        let m = KernelSpec::matern(1.5, 0.9);
        let z = 3f64.sqrt() * 0.4 / 0.9;
        assert!((m.eval(0.4) - (1.0 + z) * (-z).exp()).abs() < 1e-12);
    }

    #[test]
    fn se_monotone() {
        let se = KernelSpec::squared_exponential(0.4);
        let mut prev = 1.0;
        for i in 1..200 {
            let v = se.eval(i as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn window_slides() {
        let mut w = SampleWindow::new(3);
        for i in 0..5 {
            w.push(vec![i as f64], i as f64).unwrap();
        }
        assert_eq!(w.len(), 3);
        assert_eq!(w.ys().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        assert!(w.push(vec![0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn interpolates_single_point() {
        let mut w = SampleWindow::new(4);
        w.push(vec![0.2, 0.4], 1.7).unwrap();
        let spec = KernelSpec::squared_exponential(0.5).with_jitter(0.0);
        let p = posterior(&w, &[0.2, 0.4], &spec).unwrap();
        assert!((p.mu - 1.7).abs() < 1e-10);
        assert!(p.sigma2.abs() < 1e-10);

        let q = [0.5, 0.0];
        let k = spec.eval(euclidean(&q, &[0.2, 0.4]));
        let p = posterior(&w, &q, &spec).unwrap();
        assert!((p.mu - k * 1.7).abs() < 1e-12);
        assert!((p.sigma2 - (1.0 - k * k)).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        let w = SampleWindow::new(4);
        assert!(matches!(posterior(&w, &[0.0], &KernelSpec::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..100 {
            let spec = KernelSpec::squared_exponential(rng.random_range(0.2..1.5)).with_jitter(1e-6);
            let w = random_window(20, 13, &mut rng);
            let xq: Vec<f64> = (0..13).map(|_| rng.random()).collect();
            let p = posterior(&w, &xq, &spec).unwrap();

            let mut k = kernel_matrix(&spec, w.xs());
            for i in 0..20 {
                k[(i, i)] += 1e-6;
            }
            let kinv = dense_inverse(&k);
            let kbar = DVector::from_iterator(20, w.xs().map(|x| spec.eval(euclidean(x, &xq))));
            let y = DVector::from_iterator(20, w.ys());
            let mu = (kbar.transpose() * &kinv * y)[0];
            let s2 = 1.0 - (kbar.transpose() * &kinv * &kbar)[0];
            assert!((p.mu - mu).abs() < 1e-8, "trial {trial}: mu {} vs {mu}", p.mu);
            assert!((p.sigma2 - s2.max(0.0)).abs() < 1e-8, "trial {trial}");
        }
    }

    #[test]
    fn observed_points_have_small_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = KernelSpec::squared_exponential(0.3).with_jitter(1e-6);
        let w = random_window(15, 3, &mut rng);
        let model = GpModel::fit(&w, &spec).unwrap();
        for x in w.xs() {
            let p = model.predict(x);
            assert!(p.sigma2 >= 0.0);
            assert!(p.sigma2 <= model.spec().jitter + 1e-10);
        }
    }

    #[test]
    fn duplicate_point_barely_moves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = KernelSpec::squared_exponential(0.4).with_jitter(1e-9);
        let w = random_window(10, 2, &mut rng);
        let mut w2 = SampleWindow::new(11);
        for (x, y) in w.xs().zip(w.ys()) {
            w2.push(x.to_vec(), y).unwrap();
        }
        let (x0, y0) = (w.xs().next().unwrap().to_vec(), w.ys().next().unwrap());
        w2.push(x0, y0).unwrap();
        let a = GpModel::fit(&w, &spec).unwrap();
        let b = GpModel::fit(&w2, &spec).unwrap();
        for _ in 0..50 {
            let q: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            assert!((a.predict(&q).mu - b.predict(&q).mu).abs() < 1e-6);
        }
    }

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        let mut w = SampleWindow::new(3);
        for y in [1.0, 2.0, 3.0] {
            w.push(vec![0.5], y).unwrap();
        }
        let model = GpModel::fit(&w, &KernelSpec::squared_exponential(0.5).with_jitter(0.0)).unwrap();
        assert!(model.spec().jitter > 0.0);
        let p = model.predict(&[0.5]);
        assert!(p.mu.is_finite());
    }

    #[test]
    fn acquisition_examples() {
        let p = Posterior { mu: 0.0, sigma2: 1.0 };
        assert_eq!(acquisition(&p, 4.0), -2.0);
        let p = Posterior { mu: 0.3, sigma2: 0.5 };
        assert_eq!(acquisition(&p, 0.0), 0.3);
        let b = BetaSchedule::default();
        assert!((b.beta(0) - 0.4 * 2f64.ln()).abs() < 1e-15);
        assert!((b.beta(0) - 0.27726).abs() < 1e-5);
    }

    #[test]
    fn lengthscale_grid_bounds() {
        let g = LengthscaleGrid::default();
        let c = g.candidates();
        assert_eq!(c.len(), 16);
        assert!((c[0] - 0.05).abs() < 1e-15 && (c[15] - 5.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = random_window(12, 4, &mut rng);
            let s = fit_lengthscale(&w, &KernelSpec::default(), &g).unwrap();
            assert!(s.lengthscale >= 0.05 - 1e-12 && s.lengthscale <= 5.0 + 1e-12);
        }
        let mut small = SampleWindow::new(2);
        small.push(vec![0.0], 0.0).unwrap();
        small.push(vec![1.0], 0.0).unwrap();
        assert!(fit_lengthscale(&small, &KernelSpec::default(), &g).is_err());
    }

    #[test]
    fn constant_targets_pick_flattest() {
        let g = LengthscaleGrid::default();
        let candidates = g.candidates();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = SampleWindow::new(10);
        for _ in 0..10 {
            w.push(vec![rng.random(), rng.random()], 0.8).unwrap();
        }
        // likelihood oracle over the same grid with a dense inverse
        let lml = |h: f64| {
            let spec = KernelSpec::default().with_lengthscale(h);
            let mut k = kernel_matrix(&spec, w.xs());
            for i in 0..10 {
                k[(i, i)] += spec.jitter;
            }
            let y = DVector::from_iterator(10, w.ys());
            let quad = (y.transpose() * dense_inverse(&k) * &y)[0];
            -0.5 * quad - 0.5 * k.determinant().ln()
        };
        let oracle = candidates.iter().copied().max_by(|a, b| lml(*a).total_cmp(&lml(*b))).unwrap();
        let fitted = fit_lengthscale(&w, &KernelSpec::default(), &g).unwrap().lengthscale;
        assert_eq!(fitted, oracle);
        assert_eq!(fitted, *candidates.last().unwrap());
    }

    #[test]
    fn recovers_generating_lengthscale() {
        let g = LengthscaleGrid::default();
        let c = g.candidates();
        let nearest = (0..c.len()).min_by(|&i, &j| (c[i] / 0.3).ln().abs().total_cmp(&(c[j] / 0.3).ln().abs())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = KernelSpec::squared_exponential(0.3);
        let mut hits = 0;
        for _ in 0..100 {
            let xs: Vec<f64> = (0..20).map(|_| rng.random()).collect();
            let mut k = DMatrix::from_fn(20, 20, |i, j| truth.eval((xs[i] - xs[j]).abs()));
            for i in 0..20 {
                k[(i, i)] += 1e-8;
            }
            let l = Cholesky::new(k).unwrap().unpack();
            let z = DVector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
            let y = l * z;
            let mut w = SampleWindow::new(20);
            for i in 0..20 {
                w.push(vec![xs[i]], y[i]).unwrap();
            }
            let h = fit_lengthscale(&w, &KernelSpec::squared_exponential(1.0), &g).unwrap().lengthscale;
            let idx = c.iter().position(|v| *v == h).unwrap();
            if idx.abs_diff(nearest) <= 1 {
                hits += 1;
            }
        }
        assert!(hits >= 80, "only {hits}/100 fits near h = 0.3");
    }

    #[test]
    fn noise_fit_detects_noisy_targets() {
        let g = LengthscaleGrid::default();
        let noise = [1e-6, 1e-2, 0.1, 0.5, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut clean = SampleWindow::new(30);
        let mut noisy = SampleWindow::new(30);
        for _ in 0..30 {
            let x: f64 = rng.random();
            let f = (6.0 * x).sin();
            clean.push(vec![x], f).unwrap();
            let e: f64 = StandardNormal.sample(&mut rng);
            noisy.push(vec![x], f + 0.7 * e).unwrap();
        }
        let a = fit_hyperparameters(&clean, &KernelSpec::default(), &g, &noise).unwrap();
        let b = fit_hyperparameters(&noisy, &KernelSpec::default(), &g, &noise).unwrap();
        assert!(a.jitter <= 1e-2);
        assert!(b.jitter >= 0.1);
        let c = fit_hyperparameters(&clean, &KernelSpec::default().with_jitter(3e-6), &g, &[]).unwrap();
        assert_eq!(c.jitter, 3e-6);
    }
}
