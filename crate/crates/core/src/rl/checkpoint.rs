//! JSON checkpoints of the policy/value network.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::PolicyValueNet;
use crate::error::{invalid, Result};

pub const FORMAT: &str = "aoi-sched-policy";
pub const VERSION: u32 = 1;
pub const LAYOUT: &str = "mlp-tanh/policy+value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layout: String,
    /// Semantic feature dimension d.
    pub d: usize,
    pub n_cameras: usize,
    pub omega_max: usize,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_net(net: &PolicyValueNet, d: usize, n_cameras: usize) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            layout: LAYOUT.into(),
            d,
            n_cameras,
            omega_max: net.n_actions() - 1,
            input_dim: net.input_dim(),
            hidden: net.hidden().to_vec(),
            params: net.params.clone(),
        }
    }

    pub fn to_net(&self) -> Result<PolicyValueNet> {
        if self.format != FORMAT || self.layout != LAYOUT {
            return Err(invalid(format!("unrecognised checkpoint {}/{}", self.format, self.layout)));
        }
        if self.version != VERSION {
            return Err(invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        PolicyValueNet::from_params(self.input_dim, &self.hidden, self.omega_max + 1, self.params.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
