//! Seeded Monte Carlo experiments over the system model and CSV output.

pub mod config;
pub mod results;
pub mod scenarios;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::additive_bo::BlackBox;
use crate::error::Result;
use crate::parametrization::{weights_to_spherical, DesignVector, DomainBox, Layout};
use crate::system_model::{drift_channels, ChannelRealization, Design, Objective, SystemConfig};

pub use config::{ExperimentConfig, Scenario};
pub use results::{emit_results, parse_results, ResultRow, ResultTable};
pub use scenarios::{run_realization, run_scenario};

/// Independent random streams of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel = 0,
    Optimizer = 1,
    Pilots = 2,
    Drift = 3,
}

/// Generator for stream `stream` of realization `r`, seeded with
/// `base ⊕ r`.
pub fn realization_rng(base: u64, r: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ r as u64);
    rng.set_stream(stream as u64);
    rng
}

/// Random initial design: uniform phases and filter angles, precoder
/// uniform on the power sphere.
pub fn init_design<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> Result<DesignVector> {
    let tau = std::f64::consts::TAU;
    let theta = (0..layout.elements).map(|_| rng.random_range(0.0..tau)).collect();
    let len = 2 * layout.antennas * layout.users;
    let w: Vec<f64> = loop {
        let w: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        if w.iter().any(|v| *v != 0.0) {
            break w;
        }
    };
    let psi = weights_to_spherical(&w, layout.power, layout.full_sphere)?;
    let angle = Uniform::new_inclusive(0.0, std::f64::consts::PI).expect("valid range");
    let gamma_f = (0..layout.filter_len()).map(|_| angle.sample(rng)).collect();
    Ok(DesignVector { theta, psi, gamma_f })
}

/// The simulated link as a black box on the unit cube: decodes the query,
/// sends pilots through the current channel and returns the feedback
/// (negated for maximized objectives). The channel drifts after every
/// feedback when `nu > 0`.
#[derive(Debug, Clone)]
pub struct LinkOracle {
    layout: Layout,
    domain: DomainBox,
    objective: Objective,
    system: SystemConfig,
    channel: ChannelRealization,
    nu: f64,
    pilots: ChaCha8Rng,
    drift: ChaCha8Rng,
    exact: Vec<f64>,
}

impl LinkOracle {
    pub fn new(
        layout: Layout,
        objective: Objective,
        system: SystemConfig,
        channel: ChannelRealization,
        pilots: ChaCha8Rng,
    ) -> Self {
        Self {
            domain: layout.domain(),
            layout,
            objective,
            system,
            channel,
            nu: 0.0,
            pilots,
            drift: ChaCha8Rng::seed_from_u64(0),
            exact: Vec::new(),
        }
    }

    pub fn with_drift(mut self, nu: f64, rng: ChaCha8Rng) -> Self {
        self.nu = nu;
        self.drift = rng;
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Channel as of the next feedback.
    pub fn channel(&self) -> &ChannelRealization {
        &self.channel
    }

    pub fn decode(&self, u: &[f64]) -> Result<Design> {
        self.layout.decode_flat(&self.domain.denormalize(u))
    }

    /// Noise-free objective at every evaluation so far, on the channel it
    /// was evaluated on.
    pub fn exact_values(&self) -> &[f64] {
        &self.exact
    }

    pub fn exact(&self, d: &Design) -> Result<f64> {
        self.objective.exact(d, &self.channel, self.system.noise_var)
    }
}

impl BlackBox for LinkOracle {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn evaluate(&mut self, u: &[f64]) -> Result<f64> {
        let design = self.decode(u)?;
        let est = self.objective.estimate(&design, &self.channel, &self.system, &mut self.pilots)?;
        self.exact.push(self.exact(&design)?);
        if self.nu > 0.0 {
            self.channel = drift_channels(&self.channel, self.nu, &mut self.drift);
        }
        Ok(if self.objective.maximize() { -est } else { est })
    }

    fn initial_point(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let x = init_design(&self.layout, rng).expect("nonzero Gaussian draw has a spherical inverse");
        self.domain.normalize(&x.to_flat())
    }
}
