use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::additive_bo::BoConfig;
use crate::error::{Error, Result};
use crate::known_csi::BaselineConfig;
use crate::system_model::{LargeScaleModel, PilotAlphabet, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SumMseBo,
    SumMseKnownCsi,
    MinmaxMse,
    PowerTransferTotal,
    PowerTransferMinmax,
    SlowFading,
    PilotStudy,
    ElementSweep,
    ConvergenceTrace,
    RandomSearchBaseline,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::SumMseBo,
        Scenario::SumMseKnownCsi,
        Scenario::MinmaxMse,
        Scenario::PowerTransferTotal,
        Scenario::PowerTransferMinmax,
        Scenario::SlowFading,
        Scenario::PilotStudy,
        Scenario::ElementSweep,
        Scenario::ConvergenceTrace,
        Scenario::RandomSearchBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SumMseBo => "sum-mse-bo",
            Scenario::SumMseKnownCsi => "sum-mse-known-csi",
            Scenario::MinmaxMse => "minmax-mse",
            Scenario::PowerTransferTotal => "power-transfer-total",
            Scenario::PowerTransferMinmax => "power-transfer-minmax",
            Scenario::SlowFading => "slow-fading",
            Scenario::PilotStudy => "pilot-study",
            Scenario::ElementSweep => "element-sweep",
            Scenario::ConvergenceTrace => "convergence-trace",
            Scenario::RandomSearchBaseline => "random-search-baseline",
        }
    }

    pub fn uses_bo(self) -> bool {
        !matches!(self, Scenario::SumMseKnownCsi)
    }

    pub fn is_power_transfer(self) -> bool {
        matches!(self, Scenario::PowerTransferTotal | Scenario::PowerTransferMinmax)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// `[system]` table. The noise level comes from the SNR grid (or the
/// power-transfer noise floor), so it is not configured here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub antennas: usize,
    pub elements: usize,
    pub users: usize,
    /// Transmit power P (linear) for the MSE scenarios.
    pub power: f64,
    pub pilot_count: usize,
    pub pilot: PilotAlphabet,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            antennas: 2,
            elements: 2,
            users: 2,
            power: 1.0,
            pilot_count: 1,
            pilot: PilotAlphabet::Qpsk,
        }
    }
}

impl SystemSection {
    pub fn at_snr(&self, snr_db: f64) -> SystemConfig {
        SystemConfig {
            antennas: self.antennas,
            elements: self.elements,
            users: self.users,
            power: self.power,
            noise_var: 0.0,
            pilot_count: self.pilot_count,
            pilot: self.pilot,
        }
        .with_snr_db(snr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    /// Log-sum-exp smoothing parameter η.
    pub eta: f64,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self { eta: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerTransferSection {
    /// Transmit powers swept on the x axis (dBm).
    pub transmit_dbm: Vec<f64>,
    /// Receiver noise floor (dBm).
    pub noise_dbm: f64,
    /// Grid points per relative phase for the brute-force reference
    /// (single-user, two-element systems only; 0 disables it).
    pub oracle_grid: usize,
}

impl Default for PowerTransferSection {
    fn default() -> Self {
        Self {
            transmit_dbm: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            noise_dbm: -110.0,
            oracle_grid: 3600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlowFadingSection {
    /// Per-feedback drift variance scale ν.
    pub nu: f64,
}

impl Default for SlowFadingSection {
    fn default() -> Self {
        Self { nu: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotStudySection {
    pub pilot_counts: Vec<usize>,
    pub snr_db: f64,
}

impl Default for PilotStudySection {
    fn default() -> Self {
        Self {
            pilot_counts: vec![1, 2, 4, 8],
            snr_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementSweepSection {
    pub elements: Vec<usize>,
    pub snr_db: f64,
}

impl Default for ElementSweepSection {
    fn default() -> Self {
        Self {
            elements: vec![2, 4, 6, 8, 10],
            snr_db: 20.0,
        }
    }
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_snr_grid")]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub objective: ObjectiveSection,
    pub bo: Option<BoConfig>,
    pub baseline: Option<BaselineConfig>,
    pub large_scale: Option<LargeScaleModel>,
    pub power_transfer: Option<PowerTransferSection>,
    pub slow_fading: Option<SlowFadingSection>,
    pub pilot_study: Option<PilotStudySection>,
    pub element_sweep: Option<ElementSweepSection>,
}

fn default_seed() -> u64 {
    1
}

fn default_realizations() -> usize {
    100
}

fn default_snr_grid() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

impl ExperimentConfig {
    /// Minimal config for `scenario` with every section it needs at its
    /// defaults.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = Self {
            scenario,
            seed: default_seed(),
            realizations: default_realizations(),
            snr_db: default_snr_grid(),
            output: None,
            system: SystemSection::default(),
            objective: ObjectiveSection::default(),
            bo: None,
            baseline: None,
            large_scale: None,
            power_transfer: None,
            slow_fading: None,
            pilot_study: None,
            element_sweep: None,
        };
        cfg.fill_required_sections();
        cfg
    }

    fn fill_required_sections(&mut self) {
        let s = self.scenario;
        if s.uses_bo() {
            self.bo.get_or_insert_with(BoConfig::default);
        }
        if matches!(s, Scenario::SumMseKnownCsi | Scenario::ElementSweep) {
            self.baseline.get_or_insert_with(BaselineConfig::default);
        }
        if s.is_power_transfer() {
            self.large_scale.get_or_insert_with(LargeScaleModel::default);
            self.power_transfer.get_or_insert_with(PowerTransferSection::default);
        }
        match s {
            Scenario::SlowFading => {
                self.slow_fading.get_or_insert_with(SlowFadingSection::default);
            }
            Scenario::PilotStudy => {
                self.pilot_study.get_or_insert_with(PilotStudySection::default);
            }
            Scenario::ElementSweep => {
                self.element_sweep.get_or_insert_with(ElementSweepSection::default);
            }
            _ => {}
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bo(&self) -> Result<&BoConfig> {
        self.bo.as_ref().ok_or_else(|| missing(self.scenario, "bo"))
    }

    pub fn baseline(&self) -> Result<&BaselineConfig> {
        self.baseline.as_ref().ok_or_else(|| missing(self.scenario, "baseline"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db grid must be nonempty".into()));
        }
        if self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("snr_db entries must be finite".into()));
        }
        if !(self.objective.eta > 0.0) {
            return Err(Error::Config("objective.eta must be > 0".into()));
        }
        self.system.at_snr(self.snr_db[0]).validate()?;
        let s = self.scenario;
        if s.uses_bo() {
            self.bo()?.validate()?;
        }
        if matches!(s, Scenario::SumMseKnownCsi | Scenario::ElementSweep) {
            self.baseline()?.validate()?;
        }
        if s.is_power_transfer() {
            self.large_scale.as_ref().ok_or_else(|| missing(s, "large_scale"))?.validate()?;
            let pt = self.power_transfer.as_ref().ok_or_else(|| missing(s, "power_transfer"))?;
            if pt.transmit_dbm.is_empty() || pt.transmit_dbm.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("power_transfer.transmit_dbm must be a nonempty list of finite values".into()));
            }
            if !pt.noise_dbm.is_finite() {
                return Err(Error::Config("power_transfer.noise_dbm must be finite".into()));
            }
        }
        match s {
            Scenario::SlowFading => {
                let sf = self.slow_fading.as_ref().ok_or_else(|| missing(s, "slow_fading"))?;
                if !(sf.nu >= 0.0) || !sf.nu.is_finite() {
                    return Err(Error::Config("slow_fading.nu must be >= 0".into()));
                }
            }
            Scenario::PilotStudy => {
                let ps = self.pilot_study.as_ref().ok_or_else(|| missing(s, "pilot_study"))?;
                if ps.pilot_counts.is_empty() || ps.pilot_counts.contains(&0) {
                    return Err(Error::Config("pilot_study.pilot_counts must be nonempty and >= 1".into()));
                }
            }
            Scenario::ElementSweep => {
                let es = self.element_sweep.as_ref().ok_or_else(|| missing(s, "element_sweep"))?;
                if es.elements.is_empty() || es.elements.contains(&0) {
                    return Err(Error::Config("element_sweep.elements must be nonempty and >= 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn missing(s: Scenario, section: &str) -> Error {
    Error::Config(format!("scenario `{s}` requires a [{section}] section"))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_roundtrip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }

    #[test]
    fn defaults_validate() {
        for s in Scenario::ALL {
            ExperimentConfig::for_scenario(s).validate().unwrap();
        }
    }

    #[test]
    fn toml_roundtrip() {
        for s in Scenario::ALL {
            let cfg = ExperimentConfig::for_scenario(s);
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn missing_section_is_rejected() {
        let cfg = ExperimentConfig::from_toml("scenario = \"sum-mse-bo\"\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml("scenario = \"sum-mse-bo\"\n[bo]\niterations = 5\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.bo().unwrap().iterations, 5);
        assert_eq!(cfg.bo().unwrap().window, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("scenario = \"sum-mse-bo\"\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"warp-drive\"\n").is_err());
        let bad = "scenario = \"sum-mse-bo\"\nrealizations = 0\n[bo]\n";
        assert!(ExperimentConfig::from_toml(bad).unwrap().validate().is_err());
    }

    #[test]
    fn power_units() {
        assert!((dbm_to_mw(30.0) - 1000.0).abs() < 1e-9);
        assert!((mw_to_dbm(dbm_to_mw(-110.0)) + 110.0).abs() < 1e-9);
    }
}
