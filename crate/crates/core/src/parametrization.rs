//! Unconstrained real encoding of a design.
//!
//! A design `(W, Φ, C)` maps to `x = [θ; ψ; γ]` with
//!
//! - `θ ∈ [0, 2π]^N` the RIS phases,
//! - `ψ` the `2MK − 1` spherical angles of `w̃ = [Re vec(W); Im vec(W)]`
//!   on the sphere of radius `√P`,
//! - `γ ∈ [0, π]^{2K}` with `c̃ = cos γ` the real/imaginary parts of the
//!   receive scalars.
//!
//! `vec(W)` is column-major. The last spherical angle lives in `[0, π]` in
//! half-sphere mode (which forces the last weight coordinate non-negative)
//! and in `[0, 2π)` in full-sphere mode.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system_model::{Design, SystemConfig, C64};

/// Maps spherical angles to a real vector of norm `√P`.
///
/// `w̃_m = √P cos ψ_m Π_{n<m} sin ψ_n` for every angle, and the trailing
/// coordinate is `√P Π_n sin ψ_n`.
pub fn spherical_to_weights(psi: &[f64], power: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(psi.len() + 1);
    let mut prefix = power.sqrt();
    for &angle in psi {
        out.push(prefix * angle.cos());
        prefix *= angle.sin();
    }
    out.push(prefix);
    out
}

/// Inverse of [`spherical_to_weights`].
///
/// `w` is first rescaled to norm `√P`. Once the remaining tail has no mass,
/// the leftover angles are set to `π/2`. With `full_sphere` the last angle
/// is reflected into `(π, 2π)` when the last coordinate is negative.
pub fn weights_to_spherical(w: &[f64], power: f64, full_sphere: bool) -> Result<Vec<f64>> {
    if w.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "weight vector needs at least 2 coordinates, got {}",
            w.len()
        )));
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroNorm("weight vector has zero norm"));
    }
    let scale = power.sqrt() / norm;
    let w: Vec<f64> = w.iter().map(|v| v * scale).collect();

    // tail[m] = ‖w[m..]‖
    let mut tail = vec![0.0_f64; w.len() + 1];
    for m in (0..w.len()).rev() {
        tail[m] = tail[m + 1].hypot(w[m]);
    }
    let degenerate = 1e-300_f64.max(power.sqrt() * 1e-15);
    let last = w.len() - 2;
    let mut psi = Vec::with_capacity(w.len() - 1);
    for m in 0..=last {
        if tail[m] <= degenerate {
            psi.push(FRAC_PI_2);
            continue;
        }
        let angle = if m == last {
            let a = w[m + 1].atan2(w[m]);
            if a >= 0.0 {
                a
            } else if full_sphere {
                a + TAU
            } else {
                -a
            }
        } else {
            tail[m + 1].atan2(w[m])
        };
        psi.push(angle);
    }
    Ok(psi)
}

/// Per-coordinate box `[lower, upper]` with affine maps to the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch("bound vectors differ in length".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / (self.upper[i] - self.lower[i]))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * (self.upper[i] - self.lower[i]))
            .collect()
    }
}

/// Real design vector split into its three blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub gamma_f: Vec<f64>,
}

impl DesignVector {
    pub fn len(&self) -> usize {
        self.theta.len() + self.psi.len() + self.gamma_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.psi);
        v.extend_from_slice(&self.gamma_f);
        v
    }
}

/// Shape of the encoding for a given system.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub antennas: usize,
    pub elements: usize,
    pub users: usize,
    pub power: f64,
    /// Last spherical angle in `[0, 2π)` instead of `[0, π]`.
    pub full_sphere: bool,
    /// `c̃ = filter_scale · cos γ`; 1 reproduces the Rayleigh-range map.
    pub filter_scale: f64,
    /// When false the γ block is dropped and `C = 0` (power transfer).
    pub with_filter: bool,
}

impl Layout {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self {
            antennas: cfg.antennas,
            elements: cfg.elements,
            users: cfg.users,
            power: cfg.power,
            full_sphere: true,
            filter_scale: 1.0,
            with_filter: true,
        }
    }

    pub fn half_sphere(mut self) -> Self {
        self.full_sphere = false;
        self
    }

    pub fn without_filter(mut self) -> Self {
        self.with_filter = false;
        self
    }

    pub fn psi_len(&self) -> usize {
        2 * self.antennas * self.users - 1
    }

    pub fn filter_len(&self) -> usize {
        if self.with_filter {
            2 * self.users
        } else {
            0
        }
    }

    /// `D = 2(M+1)K + N − 1` with the filter block, `2MK + N − 1` without.
    pub fn dim(&self) -> usize {
        self.elements + self.psi_len() + self.filter_len()
    }

    pub fn domain(&self) -> DomainBox {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for _ in 0..self.elements {
            lower.push(0.0);
            upper.push(TAU);
        }
        for i in 0..self.psi_len() {
            lower.push(0.0);
            let last = i + 1 == self.psi_len();
            upper.push(if last && self.full_sphere { TAU } else { PI });
        }
        for _ in 0..self.filter_len() {
            lower.push(0.0);
            upper.push(PI);
        }
        DomainBox { lower, upper }
    }

    pub fn split(&self, flat: &[f64]) -> Result<DesignVector> {
        if flat.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "design vector has length {}, expected D = {}",
                flat.len(),
                self.dim()
            )));
        }
        let (theta, rest) = flat.split_at(self.elements);
        let (psi, gamma_f) = rest.split_at(self.psi_len());
        Ok(DesignVector {
            theta: theta.to_vec(),
            psi: psi.to_vec(),
            gamma_f: gamma_f.to_vec(),
        })
    }

    fn check_blocks(&self, x: &DesignVector) -> Result<()> {
        if x.theta.len() != self.elements || x.psi.len() != self.psi_len() || x.gamma_f.len() != self.filter_len() {
            return Err(Error::ShapeMismatch(format!(
                "blocks ({}, {}, {}) do not match layout ({}, {}, {})",
                x.theta.len(),
                x.psi.len(),
                x.gamma_f.len(),
                self.elements,
                self.psi_len(),
                self.filter_len()
            )));
        }
        Ok(())
    }

    pub fn decode(&self, x: &DesignVector) -> Result<Design> {
        self.check_blocks(x)?;
        let (m, k) = (self.antennas, self.users);
        let mk = m * k;
        let wt = spherical_to_weights(&x.psi, self.power);
        let w = DMatrix::from_iterator(m, k, (0..mk).map(|i| C64::new(wt[i], wt[mk + i])));
        let c = if self.with_filter {
            let ct: Vec<f64> = x.gamma_f.iter().map(|g| self.filter_scale * g.cos()).collect();
            DVector::from_iterator(k, (0..k).map(|i| C64::new(ct[i], ct[k + i])))
        } else {
            DVector::zeros(k)
        };
        Ok(Design::from_phases(w, &x.theta, c))
    }

    pub fn decode_flat(&self, flat: &[f64]) -> Result<Design> {
        self.decode(&self.split(flat)?)
    }

    /// Inverse of [`Layout::decode`]. `W` is rescaled to full power.
    pub fn encode(&self, d: &Design) -> Result<DesignVector> {
        let (m, k) = (self.antennas, self.users);
        if d.w.shape() != (m, k) || d.phi.len() != self.elements || d.c.len() != k {
            return Err(Error::ShapeMismatch("design does not match layout".into()));
        }
        let theta = d.phi.iter().map(|p| p.arg().rem_euclid(TAU)).collect();
        let mut wt: Vec<f64> = d.w.iter().map(|z| z.re).collect();
        wt.extend(d.w.iter().map(|z| z.im));
        let psi = weights_to_spherical(&wt, self.power, self.full_sphere)?;
        let gamma_f = if self.with_filter {
            let mut ct: Vec<f64> = d.c.iter().map(|z| z.re).collect();
            ct.extend(d.c.iter().map(|z| z.im));
            ct.iter()
                .map(|v| {
                    let r = v / self.filter_scale;
                    if r.abs() > 1.0 + 1e-12 {
                        Err(Error::OutOfRange(format!(
                            "filter component {v} exceeds the representable range ±{}",
                            self.filter_scale
                        )))
                    } else {
                        Ok(r.clamp(-1.0, 1.0).acos())
                    }
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(DesignVector { theta, psi, gamma_f })
    }
}
