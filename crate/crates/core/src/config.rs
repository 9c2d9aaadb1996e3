//! On-disk configuration: a TOML document with flat sections mirroring the
//! domain types (`[grid]`, `[channel]`, `[fleet]`, `[[types]]`, `[solver]`,
//! `[leo]`, `[error_model]`, `[trial]`). Unknown keys are rejected so config
//! drift fails fast.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granularity::ErrorModelParams;
use crate::grid::{make_grid, ChannelParams, DataRateProfile, FleetConfig, Grid, TypeParams};
use crate::leo::{default_c_leo, LeoConfig};
use crate::sim::TrialConfig;
use crate::solver::{SolverConfig, StepMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_q: usize,
    pub n_t: usize,
    pub q_max: f64,
    pub horizon_t: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_q: 50,
            n_t: 60,
            q_max: 10.0,
            horizon_t: 0.06,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSection {
    pub n_vehicles: usize,
    /// Number of types when `types` is empty (auto-generated fleet).
    pub k_types: usize,
    /// Empty means balanced.
    pub proportions: Vec<f64>,
    /// Heterogeneity spread multiplier for the auto-generated fleet.
    pub spread_scale: f64,
}

impl Default for FleetSection {
    fn default() -> Self {
        Self {
            n_vehicles: 500,
            k_types: 3,
            proportions: Vec::new(),
            spread_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSection {
    pub theta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub terminal_c: f64,
    pub sigma: f64,
    pub data_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// "adaptive" or a fixed product in (0,1) written as a number.
    pub step_mode: StepModeSection,
    pub kappa: f64,
    pub varrho: f64,
    pub mu: f64,
    pub safety_margin: f64,
    pub lipschitz_l: f64,
    pub lipschitz_lb: f64,
    pub primal_scale: f64,
    pub dual_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepModeSection {
    Named(String),
    FixedProduct(f64),
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            step_mode: StepModeSection::Named("adaptive".into()),
            kappa: d.kappa,
            varrho: d.varrho,
            mu: d.mu,
            safety_margin: d.safety_margin,
            lipschitz_l: d.lipschitz_l,
            lipschitz_lb: d.lipschitz_lb,
            primal_scale: d.primal_scale,
            dual_scale: d.dual_scale,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeoSection {
    pub delta_tau: f64,
    pub rate_low: f64,
    pub rate_high: f64,
    pub mu: f64,
    /// One of "static", "slow", "fast", or an explicit bound.
    pub scenario: String,
    pub delta_phi_bound: Option<f64>,
    pub links_per_path: usize,
    pub i_sat_bound: f64,
    pub c_leo: f64,
}

impl Default for LeoSection {
    fn default() -> Self {
        Self {
            delta_tau: 60.0,
            rate_low: 300.0,
            rate_high: 350.0,
            mu: 0.5,
            scenario: "static".into(),
            delta_phi_bound: None,
            links_per_path: 4,
            i_sat_bound: 0.0,
            c_leo: default_c_leo(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModelSection {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub alpha: Option<f64>,
    pub beta_exp: Option<f64>,
    pub delta_init: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSection {
    pub n_vehicles: usize,
    pub trials: usize,
    pub rng_seed: u64,
    pub snr_db: Option<f64>,
    pub qos_threshold_ms: f64,
}

impl Default for TrialSection {
    fn default() -> Self {
        let d = TrialConfig::default();
        Self {
            n_vehicles: d.n_vehicles,
            trials: d.trials,
            rng_seed: d.rng_seed,
            snr_db: d.snr_db,
            qos_threshold_ms: d.qos_threshold_ms,
        }
    }
}

/// Root of the configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub channel: Option<ChannelParams>,
    pub fleet: FleetSection,
    pub types: Vec<TypeSection>,
    pub solver: SolverSection,
    pub leo: LeoSection,
    pub error_model: ErrorModelSection,
    pub trial: TrialSection,
}

impl ConfigFile {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_str(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(
            self.grid.n_q,
            self.grid.n_t,
            self.grid.q_max,
            self.grid.horizon_t,
        )
    }

    pub fn channel(&self) -> ChannelParams {
        self.channel.clone().unwrap_or_default()
    }

    pub fn fleet(&self, grid: &Grid) -> Result<FleetConfig> {
        if !self.types.is_empty() {
            let types: Vec<TypeParams> = self
                .types
                .iter()
                .map(|t| TypeParams {
                    theta: t.theta,
                    beta1: t.beta1,
                    beta2: t.beta2,
                    terminal_c: t.terminal_c,
                    sigma: t.sigma,
                    data_rate: DataRateProfile::Constant { rate: t.data_rate },
                })
                .collect();
            let k = types.len();
            let proportions = if self.fleet.proportions.is_empty() {
                vec![1.0 / k as f64; k]
            } else {
                self.fleet.proportions.clone()
            };
            let initial = crate::grid::default_initial_profiles(k, grid);
            FleetConfig::new(self.fleet.n_vehicles, proportions, types, initial)
        } else if !self.fleet.proportions.is_empty() {
            FleetConfig::with_proportions(
                self.fleet.n_vehicles,
                self.fleet.proportions.clone(),
                grid,
                self.fleet.spread_scale,
            )
        } else {
            FleetConfig::with_proportions(
                self.fleet.n_vehicles,
                vec![1.0 / self.fleet.k_types as f64; self.fleet.k_types],
                grid,
                self.fleet.spread_scale,
            )
        }
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let step_mode = match &self.solver.step_mode {
            StepModeSection::Named(s) if s == "adaptive" => StepMode::Adaptive,
            StepModeSection::Named(s) => {
                return Err(Error::Config(format!("unknown step mode '{s}'")))
            }
            StepModeSection::FixedProduct(p) => StepMode::Fixed(*p),
        };
        Ok(SolverConfig {
            max_iterations: self.solver.max_iterations,
            tolerance: self.solver.tolerance,
            step_mode,
            kappa: self.solver.kappa,
            varrho: self.solver.varrho,
            mu: self.solver.mu,
            safety_margin: self.solver.safety_margin,
            lipschitz_l: self.solver.lipschitz_l,
            lipschitz_lb: self.solver.lipschitz_lb,
            primal_scale: self.solver.primal_scale,
            dual_scale: self.solver.dual_scale,
            divergence_cap: SolverConfig::default().divergence_cap,
        })
    }

    pub fn leo(&self) -> Result<LeoConfig> {
        let delta_phi_bound = match (self.leo.scenario.as_str(), self.leo.delta_phi_bound) {
            (_, Some(b)) => b,
            ("static", None) => 0.0,
            ("slow", None) => 0.01,
            ("fast", None) => 0.05,
            (other, None) => {
                return Err(Error::Config(format!("unknown LEO scenario '{other}'")))
            }
        };
        let cfg = LeoConfig {
            delta_tau: self.leo.delta_tau,
            rate_low: self.leo.rate_low,
            rate_high: self.leo.rate_high,
            mu: self.leo.mu,
            delta_phi_bound,
            links_per_path: self.leo.links_per_path,
            i_sat_bound: self.leo.i_sat_bound,
            c_leo: self.leo.c_leo,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn error_model(&self) -> Result<ErrorModelParams> {
        let d = ErrorModelParams::default();
        let p = ErrorModelParams {
            c1: self.error_model.c1.unwrap_or(d.c1),
            c2: self.error_model.c2.unwrap_or(d.c2),
            c3: self.error_model.c3.unwrap_or(d.c3),
            alpha: self.error_model.alpha.unwrap_or(d.alpha),
            beta_exp: self.error_model.beta_exp.unwrap_or(d.beta_exp),
            delta_init: self.error_model.delta_init.unwrap_or(d.delta_init),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn trial(&self) -> TrialConfig {
        let d = TrialConfig::default();
        TrialConfig {
            n_vehicles: self.trial.n_vehicles,
            trials: self.trial.trials,
            rng_seed: self.trial.rng_seed,
            snr_db: self.trial.snr_db,
            qos_threshold_ms: self.trial.qos_threshold_ms,
            rate_floor: d.rate_floor,
            delay_cap_s: d.delay_cap_s,
        }
    }

    /// Canonical serialized form used for the output-metadata hash.
    pub fn canonical_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ConfigFile::default();
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.n_q, 50);
        let fleet = cfg.fleet(&grid).unwrap();
        assert_eq!(fleet.k_types, 3);
        assert!(cfg.solver().is_ok());
        assert!(cfg.leo().is_ok());
        assert!(cfg.error_model().is_ok());
    }

    #[test]
    fn parses_explicit_types() {
        let text = r#"
[grid]
n_q = 25
n_t = 30
q_max = 10.0
horizon_t = 0.06

[fleet]
n_vehicles = 200

[[types]]
theta = 0.0
beta1 = 0.5
beta2 = 1.0
terminal_c = 0.5
sigma = 1.0
data_rate = 20.0

[[types]]
theta = 1.0
beta1 = 1.0
beta2 = 0.6
terminal_c = 0.5
sigma = 1.5
data_rate = 40.0

[solver]
step_mode = 0.99

[leo]
scenario = "fast"
"#;
        let cfg = ConfigFile::from_str(text).unwrap();
        let grid = cfg.grid().unwrap();
        let fleet = cfg.fleet(&grid).unwrap();
        assert_eq!(fleet.k_types, 2);
        assert_eq!(fleet.proportions, vec![0.5, 0.5]);
        assert!(matches!(cfg.solver().unwrap().step_mode, StepMode::Fixed(p) if p == 0.99));
        assert_eq!(cfg.leo().unwrap().delta_phi_bound, 0.05);
    }

    #[test]
    fn unknown_keys_fail_fast() {
        let text = r#"
[grid]
n_q = 25
n_t = 30
q_max = 10.0
horizon_t = 0.06
typo_key = 1
"#;
        assert!(ConfigFile::from_str(text).is_err());
    }
}
