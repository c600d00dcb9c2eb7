use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How agents share what they learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Periodic partial-participation parameter averaging.
    #[default]
    Fl,
    /// Independent learners that never communicate after initialization.
    Dl,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Fl => "fl",
            Mode::Dl => "dl",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fl" => Ok(Mode::Fl),
            "dl" => Ok(Mode::Dl),
            other => Err(Error::config(
                "mode",
                format!("expected `fl` or `dl`, got `{other}`"),
            )),
        }
    }
}

/// Every knob of a run. Field names double as the JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub n_channels: usize,
    pub area_side: f64,
    pub bandwidth_hz: f64,
    pub pu_occupancy: f64,
    pub pu_p_off_to_on: f64,
    pub pu_p_on_to_off: f64,
    pub pathloss_a: f64,
    pub pathloss_b: f64,
    /// Rician K-factor (line-of-sight to scattered power ratio).
    pub rician_k: f64,
    pub noise_density_dbm_hz: f64,
    pub tx_power_dbm: f64,
    pub pairing_radius_m: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    /// Discount factor for returns.
    pub gamma: f64,
    pub hidden_width: usize,
    pub aggregation_period_episodes: usize,
    /// Agents drawn per aggregation round; `None` means all of them.
    pub participants_u: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    pub baseline_enabled: bool,
    /// Bits/s/Hz that maps to a normalized reward of 1.
    pub spectral_efficiency_cap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 8,
            n_channels: 4,
            area_side: 400.0,
            bandwidth_hz: 10e6,
            pu_occupancy: 0.2,
            pu_p_off_to_on: 0.05,
            pu_p_on_to_off: 0.2,
            pathloss_a: 41.0,
            pathloss_b: 22.7,
            rician_k: 5.0,
            noise_density_dbm_hz: -174.0,
            tx_power_dbm: 23.0,
            pairing_radius_m: 100.0,
            episodes: 50_000,
            steps_per_episode: 50,
            learning_rate: 0.01,
            gamma: 0.9,
            hidden_width: 32,
            aggregation_period_episodes: 4,
            participants_u: None,
            mode: Mode::Fl,
            seed: 0,
            baseline_enabled: true,
            spectral_efficiency_cap: 10.0,
        }
    }
}

/// Tolerance between `pu_occupancy` and the occupancy implied by the chain.
pub const OCCUPANCY_TOLERANCE: f64 = 1e-9;

impl ScenarioConfig {
    /// Number of participants per aggregation round.
    pub fn participants(&self) -> usize {
        self.participants_u.unwrap_or(self.n_agents)
    }

    /// Size of the action space: idle plus one code per channel.
    pub fn n_actions(&self) -> usize {
        self.n_channels + 1
    }

    /// Flattened observation dimension.
    pub fn observation_dim(&self) -> usize {
        2 * self.n_channels
    }

    pub fn area_diagonal(&self) -> f64 {
        self.area_side * std::f64::consts::SQRT_2
    }

    /// Checks every scenario invariant, reporting the first offending key.
    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    key,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        }
        fn probability(key: &str, v: f64) -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("must lie in [0, 1], got {v}")))
            }
        }
        fn at_least_one(key: &str, v: usize) -> Result<()> {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::config(key, "must be at least 1"))
            }
        }
        fn finite(key: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite, got {v}")))
            }
        }

        at_least_one("n_agents", self.n_agents)?;
        at_least_one("n_channels", self.n_channels)?;
        if self.n_channels > u8::MAX as usize - 1 {
            return Err(Error::config("n_channels", "too many channels"));
        }
        positive("area_side", self.area_side)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        probability("pu_occupancy", self.pu_occupancy)?;
        probability("pu_p_off_to_on", self.pu_p_off_to_on)?;
        probability("pu_p_on_to_off", self.pu_p_on_to_off)?;
        let flux = self.pu_p_off_to_on + self.pu_p_on_to_off;
        if flux <= 0.0 {
            return Err(Error::config(
                "pu_p_off_to_on",
                "both transition probabilities are zero, occupancy is undefined",
            ));
        }
        let implied = self.pu_p_off_to_on / flux;
        if (implied - self.pu_occupancy).abs() > OCCUPANCY_TOLERANCE {
            return Err(Error::config(
                "pu_occupancy",
                format!("transition probabilities imply stationary occupancy {implied}"),
            ));
        }
        finite("pathloss_a", self.pathloss_a)?;
        finite("pathloss_b", self.pathloss_b)?;
        if self.rician_k.is_nan() || self.rician_k < 0.0 {
            return Err(Error::config("rician_k", "must be non-negative"));
        }
        finite("noise_density_dbm_hz", self.noise_density_dbm_hz)?;
        finite("tx_power_dbm", self.tx_power_dbm)?;
        positive("pairing_radius_m", self.pairing_radius_m)?;
        if self.pairing_radius_m >= self.area_diagonal() {
            return Err(Error::config(
                "pairing_radius_m",
                "must be smaller than the area diagonal",
            ));
        }
        at_least_one("steps_per_episode", self.steps_per_episode)?;
        positive("learning_rate", self.learning_rate)?;
        probability("gamma", self.gamma)?;
        at_least_one("hidden_width", self.hidden_width)?;
        at_least_one(
            "aggregation_period_episodes",
            self.aggregation_period_episodes,
        )?;
        if let Some(u) = self.participants_u {
            if u == 0 || u > self.n_agents {
                return Err(Error::config(
                    "participants_u",
                    format!("must lie in [1, n_agents = {}], got {u}", self.n_agents),
                ));
            }
        }
        positive("spectral_efficiency_cap", self.spectral_efficiency_cap)?;
        Ok(())
    }

    /// Parses a flat JSON document; missing keys take defaults.
    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Reads and validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = ScenarioConfig::from_json_str(&text).map_err(|source| Error::ConfigParse {
        path: path.to_path_buf(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_object_gives_table_defaults() {
        let f = write("{}");
        let c = load_config(f.path()).unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.bandwidth_hz, 10e6);
        assert_eq!(c.pathloss_a, 41.0);
        assert_eq!(c.pathloss_b, 22.7);
        assert_eq!(c.rician_k, 5.0);
        assert_eq!(c.noise_density_dbm_hz, -174.0);
        assert_eq!(c.episodes, 50_000);
        assert_eq!(c.steps_per_episode, 50);
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.gamma, 0.9);
        assert_eq!(c.n_agents, 8);
        assert_eq!(c.n_channels, 4);
        assert_eq!(c.area_side, 400.0);
        assert_eq!(c.pu_occupancy, 0.2);
        assert_eq!(c.aggregation_period_episodes, 4);
        assert_eq!(c.participants(), 8);
    }

    #[test]
    fn oversized_participation_names_the_key() {
        let f = write(r#"{"participants_u": 99}"#);
        let err = load_config(f.path()).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("participants_u"), "{err}");
    }

    #[test]
    fn mode_dl_parses() {
        let f = write(r#"{"mode":"dl"}"#);
        assert_eq!(load_config(f.path()).unwrap().mode, Mode::Dl);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let f = write(r#"{"n_agents": 8, "warp_factor": 9}"#);
        let err = load_config(f.path()).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("warp_factor"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        let f = write("{ not json");
        assert!(load_config(f.path()).unwrap_err().is_config_error());
    }

    #[test]
    fn inconsistent_occupancy_is_rejected() {
        let f = write(r#"{"pu_p_off_to_on": 0.1}"#);
        let err = load_config(f.path()).unwrap_err();
        assert!(err.to_string().contains("pu_occupancy"), "{err}");
    }

    #[test]
    fn pairing_radius_bounds() {
        let mut c = ScenarioConfig {
            pairing_radius_m: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.pairing_radius_m = 400.0 * 2f64.sqrt();
        assert!(c.validate().is_err());
        c.pairing_radius_m = 50.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_config("/nonexistent/fedspec.json").unwrap_err();
        assert!(!err.is_config_error());
        assert!(err.to_string().contains("/nonexistent/fedspec.json"));
    }
}
