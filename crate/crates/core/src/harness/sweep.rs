//! Fixed-ω sweeps over replications.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::env::{build_scene, record_trace, replication_seed, DeliveryTrace, ImageScores, Renderer};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::policies::PolicyKind;
use crate::streaming::{CameraPose, Frame};

/// Per-replication averages at one ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    /// Mean of capped PSNR over decisions.
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: f64,
    pub aaoi: f64,
    pub fw: f64,
    pub decisions: usize,
}

/// Mean and sample standard deviation over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }

    /// Standard error of the mean over `n` samples.
    pub fn se(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: u64,
    pub psnr: Stat,
    pub ssim: Stat,
    pub lpips: Stat,
    pub aaoi: Stat,
    pub fw: Stat,
    pub reps: Vec<RepMetrics>,
}

impl SweepPoint {
    fn from_reps(omega: u64, reps: Vec<RepMetrics>) -> Self {
        let col = |f: fn(&RepMetrics) -> f64| Stat::of(&reps.iter().map(f).collect::<Vec<_>>());
        Self {
            omega,
            psnr: col(|r| r.psnr),
            ssim: col(|r| r.ssim),
            lpips: col(|r| r.lpips),
            aaoi: col(|r| r.aaoi),
            fw: col(|r| r.fw),
            reps,
        }
    }

    pub fn reward_mean(&self) -> f64 {
        -self.fw.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub policy: PolicyKind,
    pub traffic: String,
    pub replications: usize,
    pub points: Vec<SweepPoint>,
    pub argmin_omega: u64,
}

impl SweepResult {
    pub fn argmin(&self) -> &SweepPoint {
        self.point(self.argmin_omega).expect("argmin is a grid point")
    }

    pub fn point(&self, omega: u64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.omega == omega)
    }
}

/// Inclusive ω grid `min, min+step, …, ≤ max`.
pub fn omega_grid(min: u64, max: u64, step: u64) -> Result<Vec<u64>> {
    if step == 0 || min > max {
        return Err(Error::Config(format!("bad omega grid {min}..={max} step {step}")));
    }
    Ok((min..=max).step_by(step as usize).collect())
}

/// Sweep the configured policy over `grid` with `cfg.harness.replications`
/// replications, fanned out per `cfg.harness.parallel`.
pub fn run_sweep(cfg: &ExperimentConfig, grid: &[u64]) -> Result<SweepResult> {
    let exec = if cfg.harness.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    run_sweep_with(cfg, cfg.policy.kind, grid, exec)
}

pub fn run_sweep_with(cfg: &ExperimentConfig, policy: PolicyKind, grid: &[u64], exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("omega grid is empty".into()));
    }
    if let Some(w) = grid.iter().find(|&&w| w > cfg.policy.omega_max) {
        return Err(Error::Config(format!("omega {w} exceeds omega_max {}", cfg.policy.omega_max)));
    }
    if policy == PolicyKind::Embedding {
        return Err(Error::Config("the embedding policy has no omega to sweep".into()));
    }
    if cfg.harness.replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let reps: Vec<u64> = (0..cfg.harness.replications as u64).collect();
    let per_rep = par::map(exec, reps, |rep| sweep_replication(cfg, policy, grid, rep))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<SweepPoint> = grid
        .iter()
        .enumerate()
        .map(|(i, &w)| SweepPoint::from_reps(w, per_rep.iter().map(|r| r[i]).collect()))
        .collect();
    for p in &points {
        if !(p.fw.mean.is_finite() && p.psnr.mean.is_finite()) {
            return Err(Error::Numerical(format!("non-finite sweep aggregate at omega {}", p.omega)));
        }
    }
    let argmin_omega = points
        .iter()
        .min_by(|a, b| a.fw.mean.total_cmp(&b.fw.mean))
        .map(|p| p.omega)
        .expect("grid is nonempty");
    Ok(SweepResult {
        policy,
        traffic: cfg.traffic_name().to_string(),
        replications: cfg.harness.replications,
        points,
        argmin_omega,
    })
}

/// Slots at which a fixed-ω policy decides.
pub fn decision_slots(cfg: &ExperimentConfig, policy: PolicyKind, omega: u64) -> impl Iterator<Item = u64> {
    let step = match policy {
        PolicyKind::Wait => omega.max(1),
        _ => cfg.sim.render_epoch,
    };
    (cfg.sim.warmup_slots..cfg.sim.horizon_slots).step_by(step as usize)
}

struct Decision {
    t: u64,
    grid_index: usize,
    chosen: Vec<(usize, Frame, CameraPose)>,
    aaoi: f64,
}

/// One replication: simulate once, then replay every ω against the trace.
fn sweep_replication(cfg: &ExperimentConfig, policy: PolicyKind, grid: &[u64], rep: u64) -> Result<Vec<RepMetrics>> {
    let base = replication_seed(cfg, rep);
    let slots = cfg.sim.horizon_slots + cfg.policy.omega_max + 1;
    let trace = record_trace(cfg, base, slots)?;
    let mut renderer = Renderer::new(cfg, build_scene(cfg, base)?)?;
    let mut decisions = Vec::new();
    for (i, &w) in grid.iter().enumerate() {
        for t in decision_slots(cfg, policy, w) {
            decisions.push(select(&trace, policy, t, w, i));
        }
    }
    // Group by truth slot so each ground truth is computed once.
    decisions.sort_by_key(|d| (d.t, d.grid_index));

    let rig = cfg.sim.rig(&cfg.scene);
    let cap = cfg.metrics.psnr_cap_db;
    let mut sums = vec![[0.0f64; 5]; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    let mut cache: HashMap<Vec<(usize, u64)>, ImageScores> = HashMap::new();
    let mut cache_slot = u64::MAX;
    for d in decisions {
        if d.t != cache_slot {
            cache.clear();
            cache_slot = d.t;
            renderer.evict_before(d.t.saturating_sub(4 * cfg.policy.omega_max + 1000));
        }
        let key: Vec<(usize, u64)> = d.chosen.iter().map(|(n, f, _)| (*n, f.generation_slot)).collect();
        let scores = match cache.get(&key) {
            Some(s) => *s,
            None => {
                let s = renderer.score(&d.chosen, d.t, &rig.held_out(d.t))?;
                cache.insert(key, s);
                s
            }
        };
        let r = renderer.report(&scores, d.aaoi);
        let acc = &mut sums[d.grid_index];
        acc[0] += r.psnr_capped(cap);
        acc[1] += r.ssim;
        acc[2] += r.lpips_proxy;
        acc[3] += r.aaoi;
        acc[4] += r.f_w;
        counts[d.grid_index] += 1;
    }
    sums.iter()
        .zip(&counts)
        .zip(grid)
        .map(|((s, &n), w)| {
            if n == 0 {
                return Err(Error::Config(format!("no decision slots for omega {w}; horizon too short")));
            }
            let k = n as f64;
            Ok(RepMetrics {
                psnr: s[0] / k,
                ssim: s[1] / k,
                lpips: s[2] / k,
                aaoi: s[3] / k,
                fw: s[4] / k,
                decisions: n,
            })
        })
        .collect()
}

fn select(trace: &DeliveryTrace, policy: PolicyKind, t: u64, omega: u64, grid_index: usize) -> Decision {
    let (chosen, aaoi) = match policy {
        PolicyKind::Wait => (trace.wait(t, omega), trace.average_aoi(t + omega)),
        _ => (trace.threshold(t, omega), trace.average_aoi(t)),
    };
    Decision {
        t,
        grid_index,
        chosen,
        aaoi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::env::SchedEnv;

    fn small_cfg(reps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.n_cameras = 6;
        cfg.sim.warmup_slots = 100;
        cfg.sim.horizon_slots = 400;
        cfg.harness.replications = reps;
        cfg
    }

    #[test]
    fn stat_uses_sample_std() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn grid_construction() {
        assert_eq!(omega_grid(1, 10, 4).unwrap(), vec![1, 5, 9]);
        assert!(omega_grid(3, 2, 1).is_err());
        assert!(omega_grid(1, 2, 0).is_err());
    }

    #[test]
    fn single_point_is_reproducible() {
        let cfg = small_cfg(1);
        let a = run_sweep_with(&cfg, PolicyKind::Threshold, &[10], Execution::Sequential).unwrap();
        let b = run_sweep_with(&cfg, PolicyKind::Threshold, &[10], Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 1);
        assert_eq!(a.argmin_omega, 10);
        assert_eq!(a.points[0].reps[0].decisions, 30);
    }

    #[test]
    fn parallel_equals_sequential() {
        let cfg = small_cfg(3);
        let grid = [1, 15, 60];
        for policy in [PolicyKind::Threshold, PolicyKind::Wait] {
            let s = run_sweep_with(&cfg, policy, &grid, Execution::Sequential).unwrap();
            let p = run_sweep_with(&cfg, policy, &grid, Execution::Parallel).unwrap();
            assert_eq!(s, p);
        }
    }

    #[test]
    fn trace_replay_matches_live_environment() {
        let cfg = small_cfg(1);
        for (policy, omega) in [(PolicyKind::Threshold, 25), (PolicyKind::Wait, 17)] {
            let swept = run_sweep_with(&cfg, policy, &[omega], Execution::Sequential).unwrap();
            let mut env = SchedEnv::new(&cfg, policy, replication_seed(&cfg, 0)).unwrap();
            let mut fw = Vec::new();
            while env.world().now() < cfg.sim.horizon_slots {
                fw.push(env.decide(omega).unwrap().report.f_w);
            }
            let rep = swept.points[0].reps[0];
            assert_eq!(rep.decisions, fw.len());
            let mean = fw.iter().sum::<f64>() / fw.len() as f64;
            assert!((rep.fw - mean).abs() < 1e-12, "{policy:?}: {} vs {mean}", rep.fw);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = small_cfg(1);
        let seq = Execution::Sequential;
        assert!(matches!(run_sweep_with(&cfg, PolicyKind::Wait, &[], seq), Err(Error::Config(_))));
        assert!(matches!(run_sweep_with(&cfg, PolicyKind::Wait, &[121], seq), Err(Error::Config(_))));
        assert!(run_sweep_with(&cfg, PolicyKind::Embedding, &[5], seq).is_err());
    }
}
