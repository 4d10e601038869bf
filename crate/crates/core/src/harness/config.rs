//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelProcess, GeneratorMatrix, LinkMode, StateRates};
use crate::error::{Error, Result};
use crate::metrics::MetricParams;
use crate::policies::{EmbeddingScorer, PolicyKind};
use crate::rl::PpoParams;
use crate::scene::SceneParams;
use crate::streaming::{GenerationMode, Rig, RigKind, SimParams};

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "AOI_SCHED_SEED";

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Named traffic settings; applying one overwrites the channel rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficPreset {
    /// λ_g = 1/60, λ_d = 1/60.
    High,
    /// λ_g = 1/120, λ_d = 1/30.
    Low,
    /// Two-state Gilbert-Elliott chain, μ1 = μ2 = 1/30, with
    /// λ_g = (1/120, 1/30) and λ_d = (1/30, 1/60) in the low/high states.
    Ge,
}

impl TrafficPreset {
    pub fn name(self) -> &'static str {
        match self {
            TrafficPreset::High => "high",
            TrafficPreset::Low => "low",
            TrafficPreset::Ge => "ge",
        }
    }

    pub fn channel(self, seed: u64, links: LinkMode) -> ChannelConfig {
        let (mu, lambda_g, lambda_d) = match self {
            TrafficPreset::High => (vec![0.0, 0.0], vec![1.0 / 60.0; 2], vec![1.0 / 60.0; 2]),
            TrafficPreset::Low => (vec![0.0, 0.0], vec![1.0 / 120.0; 2], vec![1.0 / 30.0; 2]),
            TrafficPreset::Ge => (
                vec![1.0 / 30.0, 1.0 / 30.0],
                vec![1.0 / 120.0, 1.0 / 30.0],
                vec![1.0 / 30.0, 1.0 / 60.0],
            ),
        };
        ChannelConfig {
            m_states: 2,
            mu,
            lambda_g,
            lambda_d,
            seed,
            links,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub m_states: usize,
    /// Row-major off-diagonal transition rates.
    pub mu: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub lambda_d: Vec<f64>,
    pub seed: u64,
    pub links: LinkMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        TrafficPreset::Ge.channel(0, LinkMode::PerCamera)
    }
}

impl ChannelConfig {
    pub fn generator(&self) -> Result<GeneratorMatrix> {
        GeneratorMatrix::from_off_diagonal(self.m_states, &self.mu)
    }

    pub fn rates(&self) -> Result<Vec<StateRates>> {
        if self.lambda_g.len() != self.m_states || self.lambda_d.len() != self.m_states {
            return Err(config_err(format!(
                "channel needs {} arrival and service rates",
                self.m_states
            )));
        }
        self.lambda_g
            .iter()
            .zip(&self.lambda_d)
            .map(|(&g, &d)| StateRates::new(g, d))
            .collect()
    }

    pub fn build(&self, n_cameras: usize, seed: u64) -> Result<ChannelProcess> {
        ChannelProcess::new(self.generator()?, self.rates()?, self.links, n_cameras, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_cameras: usize,
    pub capture_interval: u64,
    pub slot_duration_s: f64,
    pub horizon_slots: u64,
    /// Slots simulated before the first decision.
    pub warmup_slots: u64,
    pub seed: u64,
    pub rig: RigKind,
    /// Camera distance from the world centre; defaults per rig kind.
    pub rig_radius: Option<f64>,
    pub orbit_speed: f64,
    pub generation: GenerationMode,
    /// Decision cadence E of the threshold and embedding policies.
    pub render_epoch: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_cameras: 18,
            capture_interval: 1,
            slot_duration_s: 0.03,
            horizon_slots: 4000,
            warmup_slots: 400,
            seed: 1,
            rig: RigKind::Inward,
            rig_radius: None,
            orbit_speed: 0.0,
            generation: GenerationMode::Capture,
            render_epoch: 10,
        }
    }
}

impl SimConfig {
    pub fn params(&self) -> SimParams {
        SimParams {
            n_cameras: self.n_cameras,
            capture_interval: self.capture_interval,
            slot_duration_s: self.slot_duration_s,
            phases: None,
            generation: self.generation,
            record_log: false,
        }
    }

    pub fn rig(&self, scene: &SceneParams) -> Rig {
        let center = (scene.world.w as f64 / 2.0, scene.world.h as f64 / 2.0);
        // Inward: windows centred 24 px from the world centre. Outward:
        // windows on a ring of radius look_distance + 16.
        let radius = self.rig_radius.unwrap_or(match self.rig {
            RigKind::Inward => scene.look_distance + 24.0,
            RigKind::Outward => 16.0,
        });
        let mut rig = Rig::new(self.rig, self.n_cameras + 1, center, radius);
        rig.orbit_speed = self.orbit_speed;
        rig
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Fixed ω for `simulate`.
    pub omega: u64,
    pub omega_max: u64,
    pub embedding: EmbeddingScorer,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Wait,
            omega: 30,
            omega_max: 120,
            embedding: EmbeddingScorer::default(),
        }
    }
}

/// Which environment `train` runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainEnv {
    #[default]
    Simulator,
    /// Known-optimum bandit, reward −(ω − optimum)²/1000.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    #[serde(flatten)]
    pub ppo: PpoParams,
    pub env: TrainEnv,
    pub synthetic_optimum: usize,
    pub synthetic_dim: usize,
    pub eval_episodes: usize,
    /// Held-out worlds the evaluation episodes are spread over.
    pub eval_worlds: usize,
    /// Evaluation world `j` uses base seed `sim.seed + eval_seed_offset + j`.
    /// With the default 0 these are the sweep's replication worlds.
    pub eval_seed_offset: u64,
    /// The training world uses base seed `sim.seed + train_seed_offset`,
    /// kept apart from the evaluation worlds.
    pub train_seed_offset: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            ppo: PpoParams::default(),
            env: TrainEnv::Simulator,
            synthetic_optimum: 37,
            synthetic_dim: 4,
            eval_episodes: 200,
            eval_worlds: 10,
            eval_seed_offset: 0,
            train_seed_offset: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub replications: usize,
    pub output_dir: PathBuf,
    /// Fan sweep jobs out over threads when the build supports it.
    pub parallel: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            replications: 10,
            output_dir: PathBuf::from("out"),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub traffic: Option<TrafficPreset>,
    pub channel: ChannelConfig,
    pub sim: SimConfig,
    pub scene: SceneParams,
    pub metrics: MetricParams,
    pub policy: PolicyConfig,
    pub rl: RlConfig,
    pub harness: HarnessConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            traffic: Some(TrafficPreset::Ge),
            channel: ChannelConfig::default(),
            sim: SimConfig::default(),
            scene: SceneParams::default(),
            metrics: MetricParams::default(),
            policy: PolicyConfig::default(),
            rl: RlConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn with_traffic(mut self, preset: TrafficPreset) -> Self {
        self.traffic = Some(preset);
        self.apply_preset();
        self
    }

    /// Overwrite channel rates from the traffic preset, if any.
    pub fn apply_preset(&mut self) {
        if let Some(p) = self.traffic {
            self.channel = p.channel(self.channel.seed, self.channel.links);
        }
    }

    pub fn traffic_name(&self) -> &'static str {
        self.traffic.map_or("custom", TrafficPreset::name)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::InvalidInput(m) => config_err(m),
            other => other,
        };
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.channel.generator().map_err(wrap)?;
        self.channel.rates().map_err(wrap)?;
        if self.sim.n_cameras == 0 {
            return Err(config_err("sim.n_cameras must be positive"));
        }
        if self.sim.capture_interval == 0 || self.sim.render_epoch == 0 {
            return Err(config_err("capture_interval and render_epoch must be positive"));
        }
        if self.sim.horizon_slots <= self.sim.warmup_slots {
            return Err(config_err("horizon_slots must exceed warmup_slots"));
        }
        self.scene.validate().map_err(wrap)?;
        let geometry = self.scene.geometry();
        let rig = self.sim.rig(&self.scene);
        for v in 0..rig.n_views {
            geometry
                .window_origin(&rig.pose(v, 0))
                .map_err(|e| config_err(format!("rig view {v}: {e}")))?;
        }
        self.metrics.validate().map_err(wrap)?;
        self.policy.embedding.validate().map_err(wrap)?;
        if self.policy.omega > self.policy.omega_max {
            return Err(config_err("policy.omega exceeds policy.omega_max"));
        }
        self.rl.ppo.validate().map_err(wrap)?;
        if self.rl.ppo.omega_max as u64 != self.policy.omega_max {
            return Err(config_err("rl.omega_max must equal policy.omega_max"));
        }
        if self.rl.synthetic_optimum > self.rl.ppo.omega_max || self.rl.synthetic_dim == 0 {
            return Err(config_err("synthetic bandit optimum/dimension out of range"));
        }
        if self.rl.eval_worlds == 0 {
            return Err(config_err("rl.eval_worlds must be at least 1"));
        }
        let eval = self.rl.eval_seed_offset..self.rl.eval_seed_offset.saturating_add(self.rl.eval_worlds as u64);
        if eval.contains(&self.rl.train_seed_offset) {
            return Err(config_err("the training world must not be an evaluation world"));
        }
        if self.harness.replications == 0 {
            return Err(config_err("harness.replications must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.apply_preset();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file, then apply the `AOI_SCHED_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.sim.seed = v
                .trim()
                .parse()
                .map_err(|_| config_err(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
