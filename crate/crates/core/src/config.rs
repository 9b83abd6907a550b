//! TOML run configuration shared by the command-line tool and examples.
//!
//! Every section and key is optional; missing values take the defaults of
//! the corresponding library type. A minimal OCP config:
//!
//! ```toml
//! [ocp]
//! horizon = "sliding"
//!
//! [ocp.spec]
//! cost = "mf"
//! stabilizer_enabled = false
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::fatigue::FatigueParams;
use crate::horizon::ProtocolConfig;
use crate::integrate::IvpConfig;
use crate::studies::{Study1Config, Study2Config};
use crate::transcription::OcpSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub study1: Study1Section,
    pub study2: Study2Section,
    pub ocp: OcpSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study1Section {
    pub fatigue: FatigueParams,
    pub target_load: f64,
    /// Simulated time (s).
    pub duration: f64,
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
}

impl Default for Study1Section {
    fn default() -> Self {
        let d = Study1Config::default();
        Study1Section {
            fatigue: d.params,
            target_load: d.target_load,
            duration: d.ivp.t_span.1,
            rtol: d.ivp.rtol,
            atol: d.ivp.atol,
            samples: d.samples,
        }
    }
}

impl Study1Section {
    pub fn to_config(&self) -> Result<Study1Config> {
        Ok(Study1Config {
            params: self.fatigue,
            target_load: self.target_load,
            ivp: ivp(self.duration, self.rtol, self.atol)?,
            samples: self.samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study2Section {
    /// Rates and gains; `S` is overridden by `stabilization`.
    pub fatigue: FatigueParams,
    pub target_load: f64,
    pub duration: f64,
    pub rtol: f64,
    pub atol: f64,
    pub stabilization: Vec<f64>,
    pub initial_rest: Vec<f64>,
    pub orders: Vec<i32>,
}

impl Default for Study2Section {
    fn default() -> Self {
        let d = Study2Config::default();
        Study2Section {
            fatigue: d.params,
            target_load: d.target_load,
            duration: d.ivp.t_span.1,
            rtol: d.ivp.rtol,
            atol: d.ivp.atol,
            stabilization: d.stabilization,
            initial_rest: d.initial_rest,
            orders: d.orders,
        }
    }
}

impl Study2Section {
    pub fn to_config(&self) -> Result<Study2Config> {
        if self.stabilization.is_empty() || self.initial_rest.is_empty() {
            return Err(Error::invalid("study2", "needs at least one S and one mr0"));
        }
        Ok(Study2Config {
            params: self.fatigue,
            target_load: self.target_load,
            ivp: ivp(self.duration, self.rtol, self.atol)?,
            stabilization: self.stabilization.clone(),
            initial_rest: self.initial_rest.clone(),
            orders: self.orders.clone(),
        })
    }
}

fn ivp(duration: f64, rtol: f64, atol: f64) -> Result<IvpConfig> {
    if !(duration > 0.0) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::invalid("rtol", "tolerances must be > 0"));
    }
    Ok(IvpConfig {
        rtol,
        atol,
        ..IvpConfig::new(0.0, duration)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Full,
    #[default]
    Sliding,
}

impl Horizon {
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::Full => "full",
            Horizon::Sliding => "sliding",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpSection {
    pub horizon: Horizon,
    pub spec: OcpSpec,
    pub model: ArmModel,
    pub protocol: ProtocolConfig,
}

impl OcpSection {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.model.validate()?;
        self.protocol.validate()
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: "<string>".into(),
            reason: e.to_string(),
        })
    }

    /// Reads and parses `path`; every failure is an [`Error::Config`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }
}
