//! Windowed Bayesian optimization with an additive decomposition of the
//! decision vector.
//!
//! The search space is the unit cube `[0, 1]^D`; callers map it onto their
//! own [`DomainBox`](crate::parametrization::DomainBox). Each query is built
//! segment by segment: the coordinates are split into disjoint segments, each
//! segment minimizes its own lower-confidence-bound acquisition on a grid, and
//! the segment minimizers are concatenated.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, BetaSchedule, GpModel, KernelSpec, LengthscaleGrid, Posterior, SampleWindow};

/// Disjoint coordinate segments covering `0..dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    segments: Vec<Vec<usize>>,
    dim: usize,
}

impl Partition {
    pub fn new(segments: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for seg in &segments {
            if seg.is_empty() {
                return Err(Error::InvalidArgument("partition has an empty segment".into()));
            }
            for &i in seg {
                if i >= dim {
                    return Err(Error::IndexOutOfRange { index: i, len: dim });
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("coordinate {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("coordinate {i} is not covered")));
        }
        Ok(Self { segments, dim })
    }

    /// A single segment holding every coordinate in order.
    pub fn whole(dim: usize) -> Self {
        Self {
            segments: vec![(0..dim).collect()],
            dim,
        }
    }

    pub fn segments(&self) -> &[Vec<usize>] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_segment_dim(&self) -> usize {
        self.segments.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// How the segment posterior treats the window kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentModel {
    /// Full-dimension `K̄`, segment-restricted `k̄`.
    #[default]
    Mixed,
    /// `K̄ = Σ_ℓ K^(ℓ)`, the posterior of an additive-kernel GP.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis for one-dimensional segments.
    pub res_1d: usize,
    /// Points per axis for two- and three-dimensional segments.
    pub res_multi: usize,
    /// Number of step-halving passes around the incumbent.
    pub refinements: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            res_1d: 64,
            res_multi: 16,
            refinements: 3,
        }
    }
}

impl GridConfig {
    pub fn resolution(&self, dim: usize) -> usize {
        if dim <= 1 { self.res_1d } else { self.res_multi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    /// Iteration budget `T` after partition selection.
    pub iterations: usize,
    /// Window size `W`, also the number of initial random evaluations.
    pub window: usize,
    /// Candidate partitions `Q`; `None` uses the input dimension.
    pub partitions: Option<usize>,
    pub beta: BetaSchedule,
    pub grid: GridConfig,
    pub max_segment_dim: usize,
    pub kernel: KernelSpec,
    /// Length-scale refit period in iterations; 0 keeps the initial kernel.
    pub refit_period: usize,
    pub lengthscale_grid: LengthscaleGrid,
    /// Candidate noise variances (standardized units) fitted jointly with
    /// the length-scale; empty keeps the kernel jitter.
    pub noise_grid: Vec<f64>,
    pub segment_model: SegmentModel,
    /// Standardize window targets before fitting.
    pub standardize: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            iterations: 350,
            window: 20,
            partitions: None,
            beta: BetaSchedule::default(),
            grid: GridConfig::default(),
            max_segment_dim: 1,
            kernel: KernelSpec::default(),
            refit_period: 25,
            lengthscale_grid: LengthscaleGrid::default(),
            noise_grid: Vec::new(),
            segment_model: SegmentModel::default(),
            standardize: true,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("bo.iterations must be >= 1".into()));
        }
        if self.window < 2 {
            return Err(Error::Config("bo.window must be >= 2".into()));
        }
        if self.partitions == Some(0) {
            return Err(Error::Config("bo.partitions must be >= 1".into()));
        }
        if self.grid.res_1d < 2 || self.grid.res_multi < 2 {
            return Err(Error::Config("grid resolution must be >= 2".into()));
        }
        if !(1..=3).contains(&self.max_segment_dim) {
            return Err(Error::Config("bo.max_segment_dim must be in 1..=3".into()));
        }
        if self.noise_grid.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("bo.noise_grid entries must be >= 0".into()));
        }
        if !(self.beta.scale >= 0.0) {
            return Err(Error::Config("beta scale must be >= 0".into()));
        }
        self.kernel.validate()
    }

    pub fn partition_count(&self, dim: usize) -> usize {
        self.partitions.unwrap_or(dim)
    }

    /// Total evaluations of one run: `W + Q + T`.
    pub fn budget(&self, dim: usize) -> usize {
        self.window + self.partition_count(dim) + self.iterations
    }
}

/// `Q` random partitions: a uniform shuffle of `0..dim` cut into chunks of at
/// most `max_segment_dim` coordinates.
pub fn make_partitions<R: Rng + ?Sized>(dim: usize, cfg: &BoConfig, rng: &mut R) -> Result<Vec<Partition>> {
    if dim == 0 {
        return Err(Error::EmptyInput("cannot partition a zero-dimensional space"));
    }
    let seg = cfg.max_segment_dim.max(1);
    Ok((0..cfg.partition_count(dim))
        .map(|_| {
            let mut idx: Vec<usize> = (0..dim).collect();
            idx.shuffle(rng);
            Partition {
                segments: idx.chunks(seg).map(<[usize]>::to_vec).collect(),
                dim,
            }
        })
        .collect())
}

/// Per-segment posteriors for one window and partition.
#[derive(Debug, Clone)]
pub struct SegmentSurrogate {
    model: GpModel,
    partition: Partition,
}

impl SegmentSurrogate {
    pub fn fit(win: &SampleWindow, part: &Partition, spec: &KernelSpec, kind: SegmentModel) -> Result<Self> {
        if let Some(d) = win.dim() {
            if d != part.dim() {
                return Err(Error::ShapeMismatch(format!("window dim {d}, partition dim {}", part.dim())));
            }
        }
        let model = match kind {
            SegmentModel::Mixed => GpModel::fit(win, spec)?,
            SegmentModel::Additive => {
                if win.is_empty() {
                    return Err(Error::EmptyInput("sample window is empty"));
                }
                spec.validate()?;
                let pts: Vec<&[f64]> = win.xs().collect();
                let n = pts.len();
                let k = DMatrix::from_fn(n, n, |i, j| {
                    part.segments()
                        .iter()
                        .map(|seg| spec.eval(segment_distance(seg, pts[i], pts[j])))
                        .sum::<f64>()
                });
                GpModel::from_kernel_matrix(win, k, spec)?
            }
        };
        Ok(Self {
            model,
            partition: part.clone(),
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn spec(&self) -> &KernelSpec {
        self.model.spec()
    }

    /// Posterior of segment `l` at segment coordinates `xq_seg`.
    pub fn posterior(&self, l: usize, xq_seg: &[f64]) -> Result<Posterior> {
        let seg = self
            .partition
            .segments()
            .get(l)
            .ok_or(Error::IndexOutOfRange { index: l, len: self.partition.len() })?;
        if seg.len() != xq_seg.len() {
            return Err(Error::ShapeMismatch(format!(
                "segment {l} has {} coordinates, query has {}",
                seg.len(),
                xq_seg.len()
            )));
        }
        Ok(self.posterior_unchecked(seg, xq_seg))
    }

    fn posterior_unchecked(&self, seg: &[usize], xq_seg: &[f64]) -> Posterior {
        let spec = self.model.spec();
        let pts = self.model.points();
        let kbar = DVector::from_iterator(
            pts.len(),
            pts.iter().map(|x| {
                let d2: f64 = seg.iter().zip(xq_seg).map(|(&i, q)| (x[i] - q) * (x[i] - q)).sum();
                spec.eval(d2.sqrt())
            }),
        );
        self.model.predict_with(&kbar)
    }
}

fn segment_distance(seg: &[usize], a: &[f64], b: &[f64]) -> f64 {
    seg.iter().map(|&i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt()
}

/// Posterior of `f^(ℓ)` at `xq_seg` given the window.
pub fn segment_posterior(
    win: &SampleWindow,
    part: &Partition,
    l: usize,
    xq_seg: &[f64],
    spec: &KernelSpec,
    kind: SegmentModel,
) -> Result<Posterior> {
    SegmentSurrogate::fit(win, part, spec, kind)?.posterior(l, xq_seg)
}

/// Minimizes `f` over `[0, 1]^dim`: a uniform grid (lexicographic order,
/// first coordinate most significant) followed by `refinements` passes over
/// the `3^dim` neighbourhood of the incumbent with the step halved each pass.
/// Only strict improvements replace the incumbent.
pub fn grid_minimize(dim: usize, grid: &GridConfig, mut f: impl FnMut(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let g = grid.resolution(dim).max(2);
    let mut step = 1.0 / (g - 1) as f64;
    let total = g.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let mut best_x = vec![0.0; dim];
    let mut best_v = f64::INFINITY;
    for flat in 0..total {
        let mut rem = flat;
        for c in (0..dim).rev() {
            point[c] = (rem % g) as f64 * step;
            rem /= g;
        }
        let v = f(&point);
        if v < best_v || (best_v.is_infinite() && flat == 0) {
            best_v = v;
            best_x.copy_from_slice(&point);
        }
    }
    let neighbours = 3usize.pow(dim as u32);
    for _ in 0..grid.refinements {
        step *= 0.5;
        let centre = best_x.clone();
        for flat in 0..neighbours {
            let mut rem = flat;
            let mut is_centre = true;
            for c in (0..dim).rev() {
                let offset = (rem % 3) as f64 - 1.0;
                rem /= 3;
                is_centre &= offset == 0.0;
                point[c] = (centre[c] + offset * step).clamp(0.0, 1.0);
            }
            if is_centre {
                continue;
            }
            let v = f(&point);
            if v < best_v {
                best_v = v;
                best_x.copy_from_slice(&point);
            }
        }
    }
    (best_x, best_v)
}

/// Grid minimizer of segment `l`'s acquisition `μ^(ℓ) − √β σ^(ℓ)`.
pub fn optimize_segment(sur: &SegmentSurrogate, l: usize, beta: f64, grid: &GridConfig) -> Result<Vec<f64>> {
    let seg = sur
        .partition()
        .segments()
        .get(l)
        .ok_or(Error::IndexOutOfRange { index: l, len: sur.partition().len() })?;
    let (x, _) = grid_minimize(seg.len(), grid, |xq| gp::acquisition(&sur.posterior_unchecked(seg, xq), beta));
    Ok(x)
}

/// Concatenates the segment minimizers into a full query in `[0, 1]^D`.
pub fn next_query(sur: &SegmentSurrogate, beta: f64, grid: &GridConfig) -> Result<Vec<f64>> {
    let part = sur.partition();
    let mut x = vec![0.0; part.dim()];
    for (l, seg) in part.segments().iter().enumerate() {
        let xs = optimize_segment(sur, l, beta, grid)?;
        for (&i, v) in seg.iter().zip(xs) {
            x[i] = v;
        }
    }
    Ok(x)
}

/// Objective queried on the unit cube.
pub trait BlackBox {
    fn dim(&self) -> usize;

    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;

    /// Draws one initialization point; uniform on the cube by default.
    fn initial_point(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random::<f64>()).collect()
    }
}

/// Adapts a closure into a [`BlackBox`].
pub struct FnBlackBox<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> Result<f64>> FnBlackBox<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> Result<f64>> BlackBox for FnBlackBox<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Init,
    Partition,
    Update,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    pub phase: Phase,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub records: Vec<TraceRecord>,
    pub partition: Option<Partition>,
    best_index: Option<usize>,
}

impl BoTrace {
    fn record(&mut self, phase: Phase, x: Vec<f64>, y: f64) {
        let index = self.records.len();
        let best_so_far = match self.best_index {
            Some(b) if self.records[b].y <= y => self.records[b].y,
            _ => {
                self.best_index = Some(index);
                y
            }
        };
        self.records.push(TraceRecord {
            index,
            phase,
            x,
            y,
            best_so_far,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Argmin over the trace.
    pub fn best(&self) -> Option<&TraceRecord> {
        self.best_index.map(|i| &self.records[i])
    }

    /// The last query, `x_T`.
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }
}

/// A run stopped by an oracle or surrogate failure, with everything
/// evaluated so far.
#[derive(Debug)]
pub struct BoAbort {
    pub partial: BoTrace,
    pub source: Error,
}

impl fmt::Display for BoAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "optimization aborted after {} evaluations: {}", self.partial.len(), self.source)
    }
}

impl std::error::Error for BoAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<BoAbort> for Error {
    fn from(a: BoAbort) -> Self {
        a.source
    }
}

struct Runner<'a> {
    cfg: &'a BoConfig,
    dim: usize,
    spec: KernelSpec,
    window: SampleWindow,
    trace: BoTrace,
}

impl Runner<'_> {
    fn fit_window(&self) -> SampleWindow {
        if !self.cfg.standardize || self.window.is_empty() {
            return self.window.clone();
        }
        let n = self.window.len() as f64;
        let mean = self.window.ys().sum::<f64>() / n;
        let var = self.window.ys().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let sd = if sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE) { sd } else { 1.0 };
        self.window.map_targets(|y| (y - mean) / sd)
    }

    fn refit(&mut self) {
        if self.cfg.refit_period == 0 || self.window.len() < 3 {
            return;
        }
        match gp::fit_hyperparameters(&self.fit_window(), &self.spec, &self.cfg.lengthscale_grid, &self.cfg.noise_grid) {
            Ok(s) => self.spec = s,
            Err(e) => log::warn!("length-scale fit failed, keeping h = {}: {e}", self.spec.lengthscale),
        }
    }

    fn query(&self, part: &Partition, beta: f64) -> Result<Vec<f64>> {
        let sur = SegmentSurrogate::fit(&self.fit_window(), part, &self.spec, self.cfg.segment_model)?;
        next_query(&sur, beta, &self.cfg.grid)
    }

    fn observe<B: BlackBox + ?Sized>(&mut self, bb: &mut B, phase: Phase, x: Vec<f64>, push: bool) -> Result<f64> {
        let y = bb.evaluate(&x)?;
        if !y.is_finite() {
            return Err(Error::Oracle(format!("objective returned {y} at evaluation {}", self.trace.len())));
        }
        if push {
            self.window.push(x.clone(), y)?;
        }
        self.trace.record(phase, x, y);
        Ok(y)
    }

    fn run<B: BlackBox + ?Sized>(&mut self, bb: &mut B, rng: &mut dyn RngCore) -> Result<()> {
        for _ in 0..self.cfg.window {
            let x = bb.initial_point(rng);
            if x.len() != self.dim {
                return Err(Error::ShapeMismatch("initial point has wrong dimension".into()));
            }
            self.observe(bb, Phase::Init, x, true)?;
        }

        let parts = make_partitions(self.dim, self.cfg, rng)?;
        self.refit();
        let beta0 = self.cfg.beta.beta(0);
        let mut chosen: Option<(usize, Vec<f64>, f64)> = None;
        for (q, part) in parts.iter().enumerate() {
            let x = self.query(part, beta0)?;
            let y = self.observe(bb, Phase::Partition, x.clone(), false)?;
            if chosen.as_ref().is_none_or(|(_, _, b)| y < *b) {
                chosen = Some((q, x, y));
            }
        }
        let (q, x1, y1) = chosen.ok_or(Error::EmptyInput("no candidate partitions"))?;
        self.window.push(x1, y1)?;
        let part = parts[q].clone();
        self.trace.partition = Some(part.clone());

        for t in 1..=self.cfg.iterations {
            if self.cfg.refit_period > 0 && t % self.cfg.refit_period == 0 {
                self.refit();
            }
            let x = self.query(&part, self.cfg.beta.beta(t))?;
            self.observe(bb, Phase::Update, x, true)?;
        }
        Ok(())
    }
}

/// Runs the full loop: `W` initial evaluations, `Q` partition trials, `T`
/// updates. All queries lie in `[0, 1]^D`.
pub fn run_bo<B: BlackBox + ?Sized, R: RngCore>(bb: &mut B, cfg: &BoConfig, rng: &mut R) -> Result<BoTrace, BoAbort> {
    let abort = |source| BoAbort {
        partial: BoTrace::default(),
        source,
    };
    cfg.validate().map_err(abort)?;
    let dim = bb.dim();
    if dim == 0 {
        return Err(abort(Error::EmptyInput("objective has zero dimension")));
    }
    let mut runner = Runner {
        cfg,
        dim,
        spec: cfg.kernel,
        window: SampleWindow::new(cfg.window),
        trace: BoTrace::default(),
    };
    match runner.run(bb, rng) {
        Ok(()) => Ok(runner.trace),
        Err(source) => Err(BoAbort {
            partial: runner.trace,
            source,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::{
        gp, grid_minimize, make_partitions, next_query, optimize_segment, run_bo, segment_posterior, BoConfig, BoTrace, DMatrix,
        DVector, Error, FnBlackBox, GridConfig, KernelSpec, Partition, Phase, SampleWindow, SegmentModel, SegmentSurrogate,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window_from<R: Rng>(n: usize, dim: usize, rng: &mut R, f: impl Fn(&[f64]) -> f64) -> SampleWindow {
        let mut w = SampleWindow::new(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            let y = f(&x);
            w.push(x, y).unwrap();
        }
        w
    }

    #[test]
    fn partitions_have_requested_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = BoConfig::default();
        let parts = make_partitions(13, &cfg, &mut rng).unwrap();
        assert_eq!(parts.len(), 13);
        for p in &parts {
            assert_eq!(p.len(), 13);
            assert!(p.segments().iter().all(|s| s.len() == 1));
        }
        assert!(make_partitions(0, &cfg, &mut rng).is_err());
    }

    #[test]
    fn partitions_are_deterministic() {
        let cfg = BoConfig {
            max_segment_dim: 3,
            ..BoConfig::default()
        };
        let a = make_partitions(10, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = make_partitions(10, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn partitions_cover_disjointly(dim in 1usize..40, seg in 1usize..4, q in 1usize..5, seed in any::<u64>()) {
            let cfg = BoConfig { max_segment_dim: seg, partitions: Some(q), ..BoConfig::default() };
            let parts = make_partitions(dim, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(parts.len(), q);
            for p in parts {
                let mut count = vec![0usize; dim];
                for s in p.segments() {
                    prop_assert!(!s.is_empty() && s.len() <= seg);
                    for &i in s {
                        count[i] += 1;
                    }
                }
                prop_assert!(count.iter().all(|&c| c == 1));
                prop_assert!(Partition::new(p.segments().to_vec(), dim).is_ok());
            }
        }

        #[test]
        fn segment_variance_in_bounds(seed in any::<u64>(), kind in prop_oneof![Just(SegmentModel::Mixed), Just(SegmentModel::Additive)]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let win = window_from(10, 4, &mut rng, |x| x.iter().sum());
            let cfg = BoConfig { max_segment_dim: 2, partitions: Some(1), ..BoConfig::default() };
            let part = make_partitions(4, &cfg, &mut rng).unwrap().remove(0);
            let sur = SegmentSurrogate::fit(&win, &part, &KernelSpec::squared_exponential(0.4), kind).unwrap();
            for l in 0..part.len() {
                let q: Vec<f64> = (0..part.segments()[l].len()).map(|_| rng.random()).collect();
                let p = sur.posterior(l, &q).unwrap();
                prop_assert!(p.sigma2 >= 0.0 && p.sigma2 <= 1.0);
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0], vec![0]], 1).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![], vec![0]], 1).is_err());
        assert!(Partition::new(vec![vec![1], vec![0]], 2).is_ok());
    }

    #[test]
    fn whole_segment_equals_full_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = KernelSpec::squared_exponential(0.6);
        let win = window_from(15, 5, &mut rng, |x| x[0] - x[3]);
        let part = Partition::whole(5);
        for _ in 0..20 {
            let q: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let a = segment_posterior(&win, &part, 0, &q, &spec, SegmentModel::Mixed).unwrap();
            let b = gp::posterior(&win, &q, &spec).unwrap();
            assert!((a.mu - b.mu).abs() < 1e-10);
            assert!((a.sigma2 - b.sigma2).abs() < 1e-10);
        }
    }

    #[test]
    fn singleton_segments_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = KernelSpec::squared_exponential(0.8);
        let win = window_from(20, 13, &mut rng, |x| x.iter().map(|v| v.sin()).sum());
        let cfg = BoConfig {
            partitions: Some(1),
            ..BoConfig::default()
        };
        let part = make_partitions(13, &cfg, &mut rng).unwrap().remove(0);
        let pts: Vec<Vec<f64>> = win.xs().map(<[f64]>::to_vec).collect();
        let mut kfull = DMatrix::from_fn(20, 20, |i, j| {
            let d: f64 = (0..13).map(|c| (pts[i][c] - pts[j][c]).powi(2)).sum();
            (-d / (2.0 * 0.64)).exp()
        });
        for i in 0..20 {
            kfull[(i, i)] += spec.jitter;
        }
        let kinv = kfull.try_inverse().unwrap();
        let y = DVector::from_iterator(20, win.ys());
        let sur = SegmentSurrogate::fit(&win, &part, &spec, SegmentModel::Mixed).unwrap();
        for (l, seg) in part.segments().iter().enumerate() {
            let c = seg[0];
            let q = rng.random::<f64>();
            let kbar = DVector::from_fn(20, |i, _| (-(pts[i][c] - q).powi(2) / (2.0 * 0.64)).exp());
            let mu = (kbar.transpose() * &kinv * &y)[0];
            let s2 = 1.0 - (kbar.transpose() * &kinv * &kbar)[0];
            let p = sur.posterior(l, &[q]).unwrap();
            assert!((p.mu - mu).abs() < 1e-8, "segment {l}");
            assert!((p.sigma2 - s2.max(0.0)).abs() < 1e-8, "segment {l}");
        }
    }

    #[test]
    fn constant_acquisition_picks_lowest_index() {
        for dim in 1..=3 {
            let (x, v) = grid_minimize(dim, &GridConfig::default(), |_| 1.5);
            assert_eq!(x, vec![0.0; dim]);
            assert_eq!(v, 1.5);
        }
    }

    #[test]
    fn refined_point_beats_coarse_grid() {
        let grid = GridConfig::default();
        let f = |x: &[f64]| (x[0] - 0.4137).powi(2) + (x[1] - 0.777).powi(2);
        let (x, v) = grid_minimize(2, &grid, f);
        for i in 0..16 {
            for j in 0..16 {
                assert!(v <= f(&[i as f64 / 15.0, j as f64 / 15.0]));
            }
        }
        assert!((x[0] - 0.4137).abs() <= 1.0 / 15.0 / 8.0 + 1e-12);
    }

    #[test]
    fn one_dimensional_segment_matches_fine_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = GridConfig::default();
        for trial in 0..10 {
            let centre = rng.random_range(0.1..0.9);
            let win = window_from(8, 1, &mut rng, |x| (x[0] - centre).powi(2));
            let sur = SegmentSurrogate::fit(&win, &Partition::whole(1), &KernelSpec::squared_exponential(0.3), SegmentModel::Mixed).unwrap();
            let beta = 0.3;
            let x = optimize_segment(&sur, 0, beta, &grid).unwrap()[0];
            let acq = |v: f64| gp::acquisition(&sur.posterior(0, &[v]).unwrap(), beta);
            let oracle = (0..10_000)
                .map(|i| i as f64 / 9_999.0)
                .min_by(|a, b| acq(*a).total_cmp(&acq(*b)))
                .unwrap();
            let step = 1.0 / 63.0 / 8.0;
            assert!((x - oracle).abs() <= step + 1e-4, "trial {trial}: {x} vs {oracle}");
        }
    }

    #[test]
    fn segment_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let win = window_from(12, 6, &mut rng, |x| x.iter().enumerate().map(|(i, v)| (v - 0.1 * i as f64).powi(2)).sum());
        let spec = KernelSpec::squared_exponential(0.5);
        let cfg = BoConfig {
            max_segment_dim: 2,
            partitions: Some(1),
            ..BoConfig::default()
        };
        let part = make_partitions(6, &cfg, &mut rng).unwrap().remove(0);
        let mut rev = part.segments().to_vec();
        rev.reverse();
        let rev = Partition::new(rev, 6).unwrap();
        for kind in [SegmentModel::Mixed, SegmentModel::Additive] {
            let a = next_query(&SegmentSurrogate::fit(&win, &part, &spec, kind).unwrap(), 0.5, &cfg.grid).unwrap();
            let b = next_query(&SegmentSurrogate::fit(&win, &rev, &spec, kind).unwrap(), 0.5, &cfg.grid).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn single_segment_is_full_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let win = window_from(10, 2, &mut rng, |x| x[0] * x[1]);
        let spec = KernelSpec::squared_exponential(0.5);
        let grid = GridConfig::default();
        let sur = SegmentSurrogate::fit(&win, &Partition::whole(2), &spec, SegmentModel::Mixed).unwrap();
        let a = next_query(&sur, 0.7, &grid).unwrap();
        let (b, _) = grid_minimize(2, &grid, |x| gp::acquisition(&gp::posterior(&win, x, &spec).unwrap(), 0.7));
        assert_eq!(a, b);
    }

    fn quadratic_run(seed: u64) -> BoTrace {
        let mut bb = FnBlackBox::new(1, |x: &[f64]| Ok((x[0] - 0.3).powi(2)));
        let cfg = BoConfig {
            iterations: 30,
            ..BoConfig::default()
        };
        run_bo(&mut bb, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn finds_quadratic_minimum() {
        let trace = quadratic_run(11);
        let best = trace.best().unwrap();
        assert!(best.y <= 0.0025, "best {}", best.y);
        assert!((best.x[0] - 0.3).abs() <= 0.05);
    }

    #[test]
    fn trace_accounting_and_monotonicity() {
        let mut bb = FnBlackBox::new(4, |x: &[f64]| Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum()));
        let cfg = BoConfig {
            iterations: 12,
            window: 6,
            ..BoConfig::default()
        };
        let trace = run_bo(&mut bb, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(trace.len(), 6 + 4 + 12);
        assert_eq!(trace.len(), cfg.budget(4));
        let phases: Vec<Phase> = trace.records.iter().map(|r| r.phase).collect();
        assert!(phases[..6].iter().all(|p| *p == Phase::Init));
        assert!(phases[6..10].iter().all(|p| *p == Phase::Partition));
        assert!(phases[10..].iter().all(|p| *p == Phase::Update));
        let bsf = trace.best_so_far();
        assert!(bsf.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.records.iter().all(|r| r.x.iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(trace.best().unwrap().y, *bsf.last().unwrap());
    }

    #[test]
    fn runs_are_bit_identical() {
        assert_eq!(quadratic_run(21), quadratic_run(21));
    }

    #[test]
    fn oracle_failure_keeps_partial_trace() {
        let mut calls = 0;
        let mut bb = FnBlackBox::new(2, |_: &[f64]| {
            calls += 1;
            if calls > 7 { Err(Error::Oracle("boom".into())) } else { Ok(calls as f64) }
        });
        let cfg = BoConfig {
            iterations: 5,
            window: 4,
            ..BoConfig::default()
        };
        let err = run_bo(&mut bb, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert_eq!(err.partial.len(), 7);
        assert!(matches!(err.source, Error::Oracle(_)));
    }

    /// Plain full-space loop on the same samples, no decomposition.
    #[test]
    fn reduces_to_plain_loop_with_one_segment() {
        let dim = 2;
        let cfg = BoConfig {
            iterations: 15,
            window: 40,
            partitions: Some(1),
            max_segment_dim: 3,
            refit_period: 0,
            standardize: false,
            kernel: KernelSpec::squared_exponential(0.3),
            ..BoConfig::default()
        };
        let f = |x: &[f64]| (x[0] - 0.6).powi(2) + 0.5 * (x[1] - 0.2).powi(2);
        let mut bb = FnBlackBox::new(dim, |x: &[f64]| Ok(f(x)));
        let trace = run_bo(&mut bb, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let w0 = cfg.window;
        for n in w0..trace.len() {
            let mut win = SampleWindow::new(cfg.window);
            for r in &trace.records[..n] {
                win.push(r.x.clone(), r.y).unwrap();
            }
            let t = n - w0;
            let beta = cfg.beta.beta(t);
            let (x, _) = grid_minimize(dim, &cfg.grid, |q| gp::acquisition(&gp::posterior(&win, q, &cfg.kernel).unwrap(), beta));
            assert_eq!(trace.records[n].x, x, "query {n}");
        }
    }
}
