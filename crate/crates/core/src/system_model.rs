//! Downlink signal model for the RIS-assisted multi-user MISO link.
//!
//! The BS (M antennas) precodes K unit-variance streams with `W`, the RIS
//! (N elements) reflects with `Φ = diag(e^{jθ})`, and user `k` scales its
//! received sample by `c_k`:
//!
//! ```text
//! ŝ = C F Φ H W s + C u,   u ~ CN(0, γ² I)
//! ```
//!
//! There is no direct BS–user path. Everything here is pure given an RNG
//! handle.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Pilot symbol alphabet. Both have unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotAlphabet {
    #[default]
    Qpsk,
    Gaussian,
}

impl PilotAlphabet {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> C64 {
        match self {
            PilotAlphabet::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                C64::new(re, im)
            }
            PilotAlphabet::Gaussian => complex_normal(rng, 1.0),
        }
    }
}

/// Antenna/element/user counts, power budget and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas (M).
    pub antennas: usize,
    /// RIS elements (N).
    pub elements: usize,
    /// Single-antenna users (K).
    pub users: usize,
    /// Transmit power budget P (linear).
    pub power: f64,
    /// Per-user noise variance γ² (linear).
    pub noise_var: f64,
    /// Pilot vectors per feedback (κ).
    pub pilot_count: usize,
    pub pilot: PilotAlphabet,
}

impl SystemConfig {
    /// `P = 1`, 20 dB SNR, one QPSK pilot per feedback.
    pub fn new(antennas: usize, elements: usize, users: usize) -> Self {
        Self {
            antennas,
            elements,
            users,
            power: 1.0,
            noise_var: 0.01,
            pilot_count: 1,
            pilot: PilotAlphabet::Qpsk,
        }
    }

    /// Sets γ² so that `P / γ² = 10^(snr_db / 10)`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_var = self.power / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power / self.noise_var).log10()
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.elements == 0 || self.users == 0 {
            return Err(Error::Config(format!(
                "antennas, elements and users must be >= 1 (got M={}, N={}, K={})",
                self.antennas, self.elements, self.users
            )));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::Config(format!("power must be > 0, got {}", self.power)));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::Config(format!(
                "noise variance must be >= 0, got {}",
                self.noise_var
            )));
        }
        if self.pilot_count == 0 {
            return Err(Error::Config("pilot count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Log-distance path loss `κ = ς d^{-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LargeScaleModel {
    /// Path-loss exponent α.
    pub exponent: f64,
    /// Linear gain ς at the 1 m reference distance.
    pub reference_gain: f64,
    /// BS→RIS distance in metres.
    pub bs_ris_distance: f64,
    /// RIS→user distance in metres.
    pub ris_user_distance: f64,
}

impl Default for LargeScaleModel {
    fn default() -> Self {
        Self {
            exponent: 2.2,
            reference_gain: 1e-3,
            bs_ris_distance: 10.0,
            ris_user_distance: 40.0,
        }
    }
}

impl LargeScaleModel {
    pub fn gain(&self, distance: f64) -> f64 {
        self.reference_gain * distance.powf(-self.exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.exponent > 0.0
            && self.reference_gain > 0.0
            && self.bs_ris_distance > 0.0
            && self.ris_user_distance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid large-scale model {self:?}")))
        }
    }
}

/// One draw of the BS→RIS and RIS→user channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// N×M, BS→RIS.
    pub h: DMatrix<C64>,
    /// K×N, RIS→users.
    pub f: DMatrix<C64>,
    /// Power gain applied to `h` (1 when large-scale fading is off).
    pub bs_ris_gain: f64,
    /// Power gain applied to `f`.
    pub ris_user_gain: f64,
}

impl ChannelRealization {
    pub fn new(h: DMatrix<C64>, f: DMatrix<C64>) -> Result<Self> {
        if f.ncols() != h.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "F is {}x{} but H is {}x{}",
                f.nrows(),
                f.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        Ok(Self {
            h,
            f,
            bs_ris_gain: 1.0,
            ris_user_gain: 1.0,
        })
    }

    pub fn antennas(&self) -> usize {
        self.h.ncols()
    }

    pub fn elements(&self) -> usize {
        self.h.nrows()
    }

    pub fn users(&self) -> usize {
        self.f.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.f.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// The cascaded channel `F Φ H` (K×M) for the phase vector `phi`.
    pub fn cascade(&self, phi: &DVector<C64>) -> Result<DMatrix<C64>> {
        if phi.len() != self.elements() {
            return Err(Error::ShapeMismatch(format!(
                "phase vector has {} entries, RIS has {} elements",
                phi.len(),
                self.elements()
            )));
        }
        let mut f_phi = self.f.clone();
        for (mut col, p) in f_phi.column_iter_mut().zip(phi.iter()) {
            col *= *p;
        }
        Ok(f_phi * &self.h)
    }
}

/// Transmit/receive design `(W, Φ, C)`. `Φ` and `C` are diagonal and stored
/// as their diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// M×K precoder.
    pub w: DMatrix<C64>,
    /// RIS reflection coefficients, unit modulus.
    pub phi: DVector<C64>,
    /// Per-user receive scalars.
    pub c: DVector<C64>,
}

impl Design {
    pub fn from_phases(w: DMatrix<C64>, theta: &[f64], c: DVector<C64>) -> Self {
        let phi = DVector::from_iterator(theta.len(), theta.iter().map(|t| C64::from_polar(1.0, *t)));
        Self { w, phi, c }
    }

    pub fn transmit_power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// Checks `tr(WᴴW) ≤ P` (with 1e-9 slack) and `|φ_n| = 1` to 1e-12.
    pub fn check_invariants(&self, power: f64) -> Result<()> {
        let p = self.transmit_power();
        if p > power + 1e-9 {
            return Err(Error::OutOfRange(format!("transmit power {p} exceeds budget {power}")));
        }
        if let Some(bad) = self.phi.iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::OutOfRange(format!("phase coefficient {bad} is not unit modulus")));
        }
        Ok(())
    }

    fn check_shapes(&self, ch: &ChannelRealization) -> Result<()> {
        let (m, k) = (self.w.nrows(), self.w.ncols());
        if m != ch.antennas() || k != ch.users() || self.c.len() != k || self.phi.len() != ch.elements() {
            return Err(Error::ShapeMismatch(format!(
                "design (W {}x{}, |phi| {}, |c| {}) vs channel (M {}, N {}, K {})",
                m,
                k,
                self.phi.len(),
                self.c.len(),
                ch.antennas(),
                ch.elements(),
                ch.users()
            )));
        }
        Ok(())
    }

    /// `G = F Φ H W` (K×K).
    pub fn effective_gain(&self, ch: &ChannelRealization) -> Result<DMatrix<C64>> {
        self.check_shapes(ch)?;
        Ok(ch.cascade(&self.phi)? * &self.w)
    }
}

/// `CN(0, var)`: real and imaginary parts independent `N(0, var/2)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn complex_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> DMatrix<C64> {
    // column-major fill so the draw order is fixed
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_normal(rng, var)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Rayleigh channels: i.i.d. `CN(0, 1)` entries, scaled by `√κ` of each hop
/// when a large-scale model is supplied.
pub fn sample_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    large_scale: Option<&LargeScaleModel>,
    rng: &mut R,
) -> ChannelRealization {
    let (m, n, k) = (cfg.antennas, cfg.elements, cfg.users);
    let mut h = complex_normal_matrix(n, m, 1.0, rng);
    let mut f = complex_normal_matrix(k, n, 1.0, rng);
    let (gh, gf) = match large_scale {
        Some(ls) => (ls.gain(ls.bs_ris_distance), ls.gain(ls.ris_user_distance)),
        None => (1.0, 1.0),
    };
    if gh != 1.0 {
        h *= C64::from(gh.sqrt());
    }
    if gf != 1.0 {
        f *= C64::from(gf.sqrt());
    }
    ChannelRealization {
        h,
        f,
        bs_ris_gain: gh,
        ris_user_gain: gf,
    }
}

/// Slow-fading step: `H + ΔH`, `F + ΔF` with `CN(0, ν²)` increments.
/// `nu == 0` returns the input unchanged and draws nothing.
pub fn drift_channels<R: Rng + ?Sized>(ch: &ChannelRealization, nu: f64, rng: &mut R) -> ChannelRealization {
    if nu == 0.0 {
        return ch.clone();
    }
    let var = nu * nu;
    let dh = complex_normal_matrix(ch.h.nrows(), ch.h.ncols(), var, rng);
    let df = complex_normal_matrix(ch.f.nrows(), ch.f.ncols(), var, rng);
    ChannelRealization {
        h: &ch.h + dh,
        f: &ch.f + df,
        ..ch.clone()
    }
}

/// Closed-form sum MSE `‖C G − I‖²_F + γ² ‖c‖²`.
pub fn exact_sum_mse(d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<f64> {
    let g = d.effective_gain(ch)?;
    let k = g.nrows();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut e = d.c[i] * g[(i, j)];
            if i == j {
                e -= C64::from(1.0);
            }
            total += e.norm_sqr();
        }
    }
    Ok(total + noise_var * d.c.norm_squared())
}

/// MSE of user `k` (0-based), interference from every stream included.
pub fn per_user_mse(k: usize, d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<f64> {
    let g = d.effective_gain(ch)?;
    if k >= g.nrows() {
        return Err(Error::IndexOutOfRange { index: k, len: g.nrows() });
    }
    Ok(user_mse_from_gain(&g, &d.c, k, noise_var))
}

/// All per-user MSEs at once.
pub fn per_user_mse_all(d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<Vec<f64>> {
    let g = d.effective_gain(ch)?;
    Ok((0..g.nrows()).map(|k| user_mse_from_gain(&g, &d.c, k, noise_var)).collect())
}

fn user_mse_from_gain(g: &DMatrix<C64>, c: &DVector<C64>, k: usize, noise_var: f64) -> f64 {
    let ck = c[k];
    let received: f64 = g.row(k).iter().map(|gkj| (ck * gkj).norm_sqr()).sum();
    received - 2.0 * (ck * g[(k, k)]).re + noise_var * ck.norm_sqr() + 1.0
}

/// Harvested power at every user, `|f_k Φ H W|² + γ²`.
pub fn harvested_power_per_user(d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<Vec<f64>> {
    if d.w.nrows() != ch.antennas() || d.phi.len() != ch.elements() {
        return Err(Error::ShapeMismatch("design does not match channel".into()));
    }
    let g = ch.cascade(&d.phi)? * &d.w;
    Ok(g.row_iter().map(|row| row.norm_squared() + noise_var).collect())
}

/// Total harvested power `tr(F Φ H W Wᴴ Hᴴ Φᴴ Fᴴ) + γ² K`.
pub fn harvested_power_total(d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<f64> {
    Ok(harvested_power_per_user(d, ch, noise_var)?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

/// Log-sum-exp smoothing of max (`η ln Σ e^{v/η}`) or min
/// (`−η ln Σ e^{−v/η}`), shifted by the extreme value to avoid overflow.
pub fn smooth_extremum(values: &[f64], eta: f64, mode: Extremum) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("smooth_extremum needs at least one value"));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
    }
    let sign = match mode {
        Extremum::Max => 1.0,
        Extremum::Min => -1.0,
    };
    let peak = values.iter().map(|v| sign * v).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| ((sign * v - peak) / eta).exp()).sum();
    Ok(sign * (peak + eta * sum.ln()))
}

/// Runs `count` pilot vectors through `G` and hands each `(s, r)` pair to
/// `visit`, where `r = G s + u` is the unfiltered received vector.
fn simulate_pilots<R: Rng + ?Sized>(
    g: &DMatrix<C64>,
    noise_var: f64,
    count: usize,
    alphabet: PilotAlphabet,
    rng: &mut R,
    mut visit: impl FnMut(&DVector<C64>, &DVector<C64>),
) {
    let k = g.ncols();
    let users = g.nrows();
    for _ in 0..count {
        let s = DVector::from_iterator(k, (0..k).map(|_| alphabet.sample(rng)));
        let mut r = g * &s;
        if noise_var > 0.0 {
            for i in 0..users {
                r[i] += complex_normal(rng, noise_var);
            }
        }
        visit(&s, &r);
    }
}

/// Pilot-based per-user squared error `(1/κ) Σ |c_k r_k(n) − s_k(n)|²`.
pub fn estimate_per_user_mse<R: Rng + ?Sized>(
    d: &Design,
    ch: &ChannelRealization,
    noise_var: f64,
    pilot_count: usize,
    alphabet: PilotAlphabet,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if pilot_count == 0 {
        return Err(Error::InvalidArgument("pilot count must be >= 1".into()));
    }
    let g = d.effective_gain(ch)?;
    let mut acc = vec![0.0; g.nrows()];
    simulate_pilots(&g, noise_var, pilot_count, alphabet, rng, |s, r| {
        for (k, a) in acc.iter_mut().enumerate() {
            *a += (d.c[k] * r[k] - s[k]).norm_sqr();
        }
    });
    let scale = 1.0 / pilot_count as f64;
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// Pilot-based sum MSE `(1/κ) Σ ‖ŝ(n) − s(n)‖²`.
pub fn estimate_sum_mse<R: Rng + ?Sized>(
    d: &Design,
    ch: &ChannelRealization,
    noise_var: f64,
    pilot_count: usize,
    alphabet: PilotAlphabet,
    rng: &mut R,
) -> Result<f64> {
    Ok(estimate_per_user_mse(d, ch, noise_var, pilot_count, alphabet, rng)?.iter().sum())
}

/// Received-energy estimate `(1/κ) Σ |r_k(n)|²` per user.
pub fn estimate_harvested_power<R: Rng + ?Sized>(
    d: &Design,
    ch: &ChannelRealization,
    noise_var: f64,
    pilot_count: usize,
    alphabet: PilotAlphabet,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if pilot_count == 0 {
        return Err(Error::InvalidArgument("pilot count must be >= 1".into()));
    }
    if d.w.nrows() != ch.antennas() || d.phi.len() != ch.elements() {
        return Err(Error::ShapeMismatch("design does not match channel".into()));
    }
    let g = ch.cascade(&d.phi)? * &d.w;
    let mut acc = vec![0.0; g.nrows()];
    simulate_pilots(&g, noise_var, pilot_count, alphabet, rng, |_, r| {
        for (k, a) in acc.iter_mut().enumerate() {
            *a += r[k].norm_sqr();
        }
    });
    let scale = 1.0 / pilot_count as f64;
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// The objectives the optimizer can target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Sum MSE, minimized.
    SumMse,
    /// Smoothed max of per-user MSEs, minimized.
    MinMaxMse { eta: f64 },
    /// Total harvested power, maximized.
    PowerTotal,
    /// Smoothed min of per-user powers (in units of γ²), maximized.
    PowerMinMax { eta: f64 },
}

impl Objective {
    pub fn maximize(&self) -> bool {
        matches!(self, Objective::PowerTotal | Objective::PowerMinMax { .. })
    }

    pub fn uses_filter(&self) -> bool {
        !self.maximize()
    }

    /// Noise-free value of the objective.
    pub fn exact(&self, d: &Design, ch: &ChannelRealization, noise_var: f64) -> Result<f64> {
        match *self {
            Objective::SumMse => exact_sum_mse(d, ch, noise_var),
            Objective::MinMaxMse { eta } => {
                smooth_extremum(&per_user_mse_all(d, ch, noise_var)?, eta, Extremum::Max)
            }
            Objective::PowerTotal => harvested_power_total(d, ch, noise_var),
            Objective::PowerMinMax { eta } => {
                let p = harvested_power_per_user(d, ch, noise_var)?;
                smooth_min_in_noise_units(&p, noise_var, eta)
            }
        }
    }

    /// Value fed back by the users after `cfg.pilot_count` pilots.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        d: &Design,
        ch: &ChannelRealization,
        cfg: &SystemConfig,
        rng: &mut R,
    ) -> Result<f64> {
        let (nv, kappa, alphabet) = (cfg.noise_var, cfg.pilot_count, cfg.pilot);
        match *self {
            Objective::SumMse => estimate_sum_mse(d, ch, nv, kappa, alphabet, rng),
            Objective::MinMaxMse { eta } => {
                let v = estimate_per_user_mse(d, ch, nv, kappa, alphabet, rng)?;
                smooth_extremum(&v, eta, Extremum::Max)
            }
            Objective::PowerTotal => Ok(estimate_harvested_power(d, ch, nv, kappa, alphabet, rng)?.iter().sum()),
            Objective::PowerMinMax { eta } => {
                let p = estimate_harvested_power(d, ch, nv, kappa, alphabet, rng)?;
                smooth_min_in_noise_units(&p, nv, eta)
            }
        }
    }
}

// Per-user powers are tiny in absolute units; smoothing happens relative to
// the noise floor and the result is mapped back.
fn smooth_min_in_noise_units(p: &[f64], noise_var: f64, eta: f64) -> Result<f64> {
    let unit = if noise_var > 0.0 { noise_var } else { 1.0 };
    let scaled: Vec<f64> = p.iter().map(|v| v / unit).collect();
    Ok(unit * smooth_extremum(&scaled, eta, Extremum::Min)?)
}
