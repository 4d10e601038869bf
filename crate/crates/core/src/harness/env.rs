//! Simulation environments: world construction per replication, the
//! fit/render/score pipeline, delivery traces for offline sweeps, and the
//! one-step environment the PPO agent trains against.

use std::collections::HashMap;

use super::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::metrics::{Evaluator, FeatureMap, FidelityReport};
use crate::policies::{embedding_select, threshold_select, wait_select_advance, PolicyKind, Selection};
use crate::rl::{build_state, extract_features, BanditEnv, InputScale, SemanticFeature, FEATURE_DIM};
use crate::scene::{DynamicScene, ReconstructionBackend, ViewImage};
use crate::seed;
use crate::streaming::{CameraPose, Frame, SimWorld};

/// Base seed of replication `rep`: `sim.seed + rep`.
pub fn replication_seed(cfg: &ExperimentConfig, rep: u64) -> u64 {
    cfg.sim.seed.wrapping_add(rep)
}

pub fn build_world(cfg: &ExperimentConfig, base_seed: u64, record_log: bool) -> Result<SimWorld> {
    let channel = cfg
        .channel
        .build(cfg.sim.n_cameras, seed::derive(base_seed, cfg.channel.seed, 1))?;
    let mut params = cfg.sim.params();
    params.record_log = record_log;
    SimWorld::new(params, channel, cfg.sim.rig(&cfg.scene))
}

pub fn build_scene(cfg: &ExperimentConfig, base_seed: u64) -> Result<DynamicScene> {
    let mut params = cfg.scene.clone();
    params.seed = seed::derive(base_seed, cfg.scene.seed, 2);
    DynamicScene::new(params)
}

/// PSNR (raw), SSIM and perceptual distance of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScores {
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: f64,
}

/// Scene plus backend plus metrics, with caches for frame images, their
/// descriptors, and the current ground truth.
pub struct Renderer {
    scene: DynamicScene,
    backend: Box<dyn ReconstructionBackend>,
    evaluator: Evaluator,
    images: HashMap<(usize, u64), ViewImage>,
    features: HashMap<(usize, u64), SemanticFeature>,
    truth: Option<(u64, ViewImage, Vec<FeatureMap>)>,
}

impl Renderer {
    pub fn new(cfg: &ExperimentConfig, scene: DynamicScene) -> Result<Self> {
        let backend = cfg.scene.backend.build(scene.fill_value(), cfg.scene.kappa);
        Ok(Self {
            evaluator: Evaluator::new(cfg.metrics)?,
            backend,
            scene,
            images: HashMap::new(),
            features: HashMap::new(),
            truth: None,
        })
    }

    pub fn scene(&self) -> &DynamicScene {
        &self.scene
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// Pixels of a captured frame.
    pub fn frame_image(&mut self, f: &Frame) -> Result<&ViewImage> {
        let key = (f.camera, f.generation_slot);
        if !self.images.contains_key(&key) {
            let img = self.scene.observe(&f.pose, f.generation_slot)?;
            self.images.insert(key, img);
        }
        Ok(&self.images[&key])
    }

    pub fn frame_features(&mut self, f: &Frame) -> Result<SemanticFeature> {
        let key = (f.camera, f.generation_slot);
        if let Some(z) = self.features.get(&key) {
            return Ok(z.clone());
        }
        let z = extract_features(self.frame_image(f)?);
        self.features.insert(key, z.clone());
        Ok(z)
    }

    /// Drop cached frames generated before `slot`.
    pub fn evict_before(&mut self, slot: u64) {
        self.images.retain(|k, _| k.1 >= slot);
        self.features.retain(|k, _| k.1 >= slot);
    }

    /// Fit the chosen frames, render the novel view and score it against
    /// the ground truth at `truth_slot`.
    pub fn score(&mut self, chosen: &[(usize, Frame, CameraPose)], truth_slot: u64, novel: &CameraPose) -> Result<ImageScores> {
        if self.truth.as_ref().is_none_or(|t| t.0 != truth_slot) {
            let img = self.scene.observe(novel, truth_slot)?;
            let feats = self.evaluator.lpips().features(&img);
            self.truth = Some((truth_slot, img, feats));
        }
        let mut views = Vec::with_capacity(chosen.len());
        for (_, f, p) in chosen {
            views.push((self.frame_image(f)?.clone(), *p));
        }
        let geometry = self.scene.geometry();
        let rendered = self.backend.fit_render(&geometry, &views, novel)?;
        let (_, truth, feats) = self.truth.as_ref().expect("set above");
        let r = self.evaluator.report_with_features(truth, feats, &rendered, 0.0)?;
        Ok(ImageScores {
            psnr: r.psnr,
            ssim: r.ssim,
            lpips: r.lpips_proxy,
        })
    }

    pub fn report(&self, s: &ImageScores, aaoi: f64) -> FidelityReport {
        FidelityReport::from_metrics(s.psnr, s.ssim, s.lpips, aaoi, &self.evaluator.params)
    }
}

/// Delivery history of one run, indexed for AoI and selection queries at
/// arbitrary slots.
#[derive(Debug, Clone)]
pub struct DeliveryTrace {
    per_camera: Vec<Vec<Frame>>,
    /// Per camera: index of the freshest frame among the first k+1.
    best: Vec<Vec<usize>>,
}

impl DeliveryTrace {
    pub fn new(n_cameras: usize, log: &[Frame]) -> Result<Self> {
        let mut per_camera = vec![Vec::new(); n_cameras];
        for f in log {
            if f.arrival_slot.is_none() {
                return Err(invalid("trace contains an undelivered frame"));
            }
            per_camera
                .get_mut(f.camera)
                .ok_or_else(|| invalid(format!("unknown camera {}", f.camera)))?
                .push(*f);
        }
        for frames in &mut per_camera {
            frames.sort_by_key(|f| (f.arrival_slot, f.generation_slot));
        }
        let best = per_camera
            .iter()
            .map(|frames| {
                let mut out: Vec<usize> = Vec::with_capacity(frames.len());
                for (i, f) in frames.iter().enumerate() {
                    let keep = match out.last() {
                        Some(&j) if frames[j].generation_slot >= f.generation_slot => j,
                        _ => i,
                    };
                    out.push(keep);
                }
                out
            })
            .collect();
        Ok(Self { per_camera, best })
    }

    pub fn n_cameras(&self) -> usize {
        self.per_camera.len()
    }

    /// Freshest frame of camera `n` delivered by slot `t`.
    pub fn latest_by(&self, n: usize, t: u64) -> Option<&Frame> {
        let frames = &self.per_camera[n];
        let k = frames.partition_point(|f| f.arrival_slot.is_some_and(|d| d <= t));
        (k > 0).then(|| &frames[self.best[n][k - 1]])
    }

    pub fn aoi(&self, n: usize, t: u64) -> u64 {
        t - self.latest_by(n, t).map_or(0, |f| f.generation_slot)
    }

    pub fn average_aoi(&self, t: u64) -> f64 {
        let n = self.n_cameras();
        (0..n).map(|c| self.aoi(c, t) as f64).sum::<f64>() / n as f64
    }

    pub fn threshold(&self, t: u64, omega: u64) -> Vec<(usize, Frame, CameraPose)> {
        (0..self.n_cameras())
            .filter_map(|n| self.latest_by(n, t).filter(|f| t - f.generation_slot < omega).map(|f| (n, *f, f.pose)))
            .collect()
    }

    /// Newest frame per camera arriving in (t, t+ω].
    pub fn wait(&self, t: u64, omega: u64) -> Vec<(usize, Frame, CameraPose)> {
        (0..self.n_cameras())
            .filter_map(|n| {
                let frames = &self.per_camera[n];
                let lo = frames.partition_point(|f| f.arrival_slot.is_some_and(|d| d <= t));
                let hi = frames.partition_point(|f| f.arrival_slot.is_some_and(|d| d <= t + omega));
                frames[lo..hi]
                    .iter()
                    .max_by_key(|f| f.generation_slot)
                    .map(|f| (n, *f, f.pose))
            })
            .collect()
    }
}

/// Simulate replication `base_seed` for `slots` slots, recording deliveries.
pub fn record_trace(cfg: &ExperimentConfig, base_seed: u64, slots: u64) -> Result<DeliveryTrace> {
    let mut world = build_world(cfg, base_seed, true)?;
    world.advance_by(slots)?;
    DeliveryTrace::new(world.n_cameras(), world.delivery_log().expect("recording enabled"))
}

/// One decision of the online environment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub decision_slot: u64,
    pub selection: Selection,
    pub report: FidelityReport,
}

/// Live simulator wrapped as a one-step environment: each episode is one
/// scheduling decision with ω as the action.
pub struct SchedEnv {
    policy: PolicyKind,
    render_epoch: u64,
    omega_max: u64,
    world: SimWorld,
    renderer: Renderer,
    scale: InputScale,
    embedding: crate::policies::EmbeddingScorer,
}

impl SchedEnv {
    /// World and scene for replication seed `base_seed`, advanced past the
    /// warm-up period.
    pub fn new(cfg: &ExperimentConfig, policy: PolicyKind, base_seed: u64) -> Result<Self> {
        let mut world = build_world(cfg, base_seed, false)?;
        world.advance_by(cfg.sim.warmup_slots)?;
        let renderer = Renderer::new(cfg, build_scene(cfg, base_seed)?)?;
        Ok(Self {
            policy,
            render_epoch: cfg.sim.render_epoch,
            omega_max: cfg.policy.omega_max,
            world,
            renderer,
            scale: InputScale {
                aoi: cfg.policy.omega_max.max(1) as f64,
                world_w: cfg.scene.world.w as f64,
                world_h: cfg.scene.world.h as f64,
            },
            embedding: cfg.policy.embedding,
        })
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    /// Run the world forward to `slot` if it is still ahead.
    pub fn skip_to(&mut self, slot: u64) -> Result<()> {
        let now = self.world.now();
        if slot > now {
            self.world.advance_by(slot - now)?;
        }
        Ok(())
    }

    /// Scaled network input for the current slot.
    pub fn state(&mut self) -> Result<Vec<f64>> {
        let t = self.world.now();
        let renderer = &mut self.renderer;
        let s = build_state(&self.world, t, FEATURE_DIM, &mut |f| renderer.frame_features(f))?;
        Ok(s.to_input(&self.scale))
    }

    /// Apply the policy with parameter `omega` at the current slot and move
    /// the clock to the next decision.
    pub fn decide(&mut self, omega: u64) -> Result<StepOutcome> {
        if omega > self.omega_max {
            return Err(invalid(format!("omega {omega} exceeds omega_max {}", self.omega_max)));
        }
        let t = self.world.now();
        let novel = self.world.held_out_pose(t);
        let (selection, aaoi) = match self.policy {
            PolicyKind::Threshold => {
                let sel = threshold_select(self.world.tracker(), t, omega);
                (sel, self.world.tracker().average_aoi(t))
            }
            PolicyKind::Embedding => {
                let renderer = &mut self.renderer;
                let mut norm = |f: &Frame| renderer.frame_features(f).map(|z| z.norm()).unwrap_or(0.0);
                let sel = embedding_select(self.world.tracker(), t, &self.embedding, &novel, &mut norm);
                (sel, self.world.tracker().average_aoi(t))
            }
            PolicyKind::Wait => {
                let sel = wait_select_advance(&mut self.world, t, omega)?;
                let aaoi = self.world.tracker().average_aoi(sel.render_slot);
                (sel, aaoi)
            }
        };
        let scores = self.renderer.score(&selection.chosen, t, &novel)?;
        let report = self.renderer.report(&scores, aaoi);
        let next = match self.policy {
            PolicyKind::Wait => t + omega.max(1),
            _ => t + self.render_epoch,
        };
        let now = self.world.now();
        self.world.advance_by(next - now)?;
        self.renderer.evict_before(t.saturating_sub(4 * self.omega_max + 1000));
        Ok(StepOutcome {
            decision_slot: t,
            selection,
            report,
        })
    }
}

impl BanditEnv for SchedEnv {
    fn input_dim(&self) -> usize {
        self.world.n_cameras() * (FEATURE_DIM + 6)
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        self.state()
    }

    fn step(&mut self, action: usize) -> Result<f64> {
        Ok(self.decide(action as u64)?.report.reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::wait_select;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.n_cameras = 6;
        cfg.sim.warmup_slots = 100;
        cfg.sim.horizon_slots = 600;
        cfg
    }

    #[test]
    fn trace_matches_live_tracker() {
        let cfg = small_cfg();
        let mut world = build_world(&cfg, 3, true).unwrap();
        let mut snapshots = Vec::new();
        for _ in 0..400 {
            world.advance().unwrap();
            snapshots.push((world.now(), world.tracker().aoi_vector(world.now())));
        }
        let trace = DeliveryTrace::new(6, world.delivery_log().unwrap()).unwrap();
        for (t, aoi) in snapshots {
            let got: Vec<u64> = (0..6).map(|n| trace.aoi(n, t)).collect();
            assert_eq!(got, aoi);
        }
    }

    #[test]
    fn trace_wait_matches_live_wait() {
        let cfg = small_cfg();
        let mut world = build_world(&cfg, 4, true).unwrap();
        world.advance_by(150).unwrap();
        let t = world.now();
        let live: Vec<_> = [0, 1, 7, 30, 90]
            .iter()
            .map(|&w| wait_select(&world, t, w).unwrap().chosen)
            .collect();
        world.advance_by(200).unwrap();
        let trace = DeliveryTrace::new(6, world.delivery_log().unwrap()).unwrap();
        for (k, &w) in [0, 1, 7, 30, 90].iter().enumerate() {
            assert_eq!(trace.wait(t, w), live[k], "omega {w}");
        }
    }

    #[test]
    fn env_decisions_follow_policy_cadence() {
        let cfg = small_cfg();
        let mut env = SchedEnv::new(&cfg, PolicyKind::Wait, 5).unwrap();
        let t0 = env.world().now();
        let out = env.decide(20).unwrap();
        assert_eq!(out.decision_slot, t0);
        assert_eq!(out.selection.render_slot, t0 + 20);
        assert_eq!(env.world().now(), t0 + 20);
        let out = env.decide(0).unwrap();
        assert!(out.selection.is_empty());
        assert_eq!(env.world().now(), t0 + 21);

        let mut env = SchedEnv::new(&cfg, PolicyKind::Threshold, 5).unwrap();
        env.decide(50).unwrap();
        assert_eq!(env.world().now(), t0 + cfg.sim.render_epoch);
        assert_eq!(env.input_dim(), 6 * 22);
        assert_eq!(env.state().unwrap().len(), 6 * 22);
    }

    #[test]
    fn reward_is_negated_objective() {
        let cfg = small_cfg();
        let mut env = SchedEnv::new(&cfg, PolicyKind::Wait, 6).unwrap();
        let out = env.decide(40).unwrap();
        assert_eq!(out.report.reward, -out.report.f_w);
        assert!(out.report.f_w.is_finite());
    }
}
