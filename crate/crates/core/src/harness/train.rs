//! PPO training runs, held-out evaluation and their file outputs.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TrainEnv};
use super::env::SchedEnv;
use crate::error::{Error, Result};
use crate::policies::PolicyKind;
use crate::rl::{greedy_action, train, BanditEnv, Checkpoint, PolicyValueNet, SyntheticBandit, FEATURE_DIM};
use crate::seed;

/// Greedy-policy evaluation over held-out episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: PolicyKind,
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    /// Mean capped PSNR, SSIM, perceptual distance and aAoI; zero for the
    /// synthetic environment.
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: f64,
    pub aaoi: f64,
    pub mean_omega: f64,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub policy: PolicyKind,
    pub net: PolicyValueNet,
    pub rewards: Vec<f64>,
    pub actions: Vec<usize>,
    pub eval: EvalReport,
}

impl TrainingReport {
    /// Mean training reward over the last `k` episodes.
    pub fn tail_mean(&self, k: usize) -> f64 {
        let tail = &self.rewards[self.rewards.len().saturating_sub(k)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Streams `episode,omega,reward` rows as the agent trains.
struct Recording<'a, W: Write> {
    inner: &'a mut dyn BanditEnv,
    out: Option<csv::Writer<W>>,
    episode: usize,
}

impl<W: Write> BanditEnv for Recording<'_, W> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        self.inner.observe()
    }

    fn step(&mut self, action: usize) -> Result<f64> {
        let r = self.inner.step(action)?;
        if let Some(w) = self.out.as_mut() {
            w.write_record([self.episode.to_string(), action.to_string(), r.to_string()])?;
        }
        self.episode += 1;
        Ok(r)
    }
}

fn training_env(cfg: &ExperimentConfig, policy: PolicyKind, held_out: bool) -> Result<Box<dyn BanditEnv>> {
    let offset = if held_out {
        cfg.rl.eval_seed_offset
    } else {
        cfg.rl.train_seed_offset
    };
    let base = cfg.sim.seed.wrapping_add(offset);
    Ok(match cfg.rl.env {
        TrainEnv::Simulator => Box::new(SchedEnv::new(cfg, policy, base)?),
        TrainEnv::Synthetic => Box::new(SyntheticBandit::new(
            cfg.rl.synthetic_optimum,
            cfg.rl.synthetic_dim,
            seed::derive(base, cfg.rl.ppo.seed, 3),
        )),
    })
}

/// Train `policy` per `cfg.rl`, evaluate on held-out seeds and, when
/// `out_dir` is given, write `rewards_<policy>.csv`,
/// `checkpoint_<policy>.json` and `eval_<policy>.json`.
pub fn run_training(cfg: &ExperimentConfig, policy: PolicyKind, out_dir: Option<&Path>) -> Result<TrainingReport> {
    cfg.validate()?;
    let mut env = training_env(cfg, policy, false)?;
    let name = policy.name();
    let writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = csv::Writer::from_writer(File::create(dir.join(format!("rewards_{name}.csv")))?);
            w.write_record(["episode", "omega", "reward"])?;
            Some(w)
        }
        None => None,
    };
    let mut rec = Recording {
        inner: env.as_mut(),
        out: writer,
        episode: 0,
    };
    let outcome = train(&mut rec, &cfg.rl.ppo);
    if let Some(w) = rec.out.as_mut() {
        w.flush()?;
    }
    let outcome = outcome?;

    let eval = evaluate(cfg, policy, &outcome.net)?;
    if let Some(dir) = out_dir {
        checkpoint_for(cfg, &outcome.net).save(&dir.join(format!("checkpoint_{name}.json")))?;
        write_eval(&eval, dir)?;
    }
    Ok(TrainingReport {
        policy,
        net: outcome.net,
        rewards: outcome.rewards,
        actions: outcome.actions,
        eval,
    })
}

pub fn checkpoint_for(cfg: &ExperimentConfig, net: &PolicyValueNet) -> Checkpoint {
    let (d, n) = match cfg.rl.env {
        TrainEnv::Simulator => (FEATURE_DIM, cfg.sim.n_cameras),
        TrainEnv::Synthetic => (cfg.rl.synthetic_dim, 1),
    };
    Checkpoint::from_net(net, d, n)
}

/// Greedy evaluation of `net` for `cfg.rl.eval_episodes` episodes, spread
/// over `cfg.rl.eval_worlds` worlds the agent never trained on.
pub fn evaluate(cfg: &ExperimentConfig, policy: PolicyKind, net: &PolicyValueNet) -> Result<EvalReport> {
    let episodes = cfg.rl.eval_episodes;
    let mut rewards = Vec::with_capacity(episodes);
    let mut actions = Vec::with_capacity(episodes);
    let mut sums = [0.0f64; 4];
    match cfg.rl.env {
        TrainEnv::Simulator => {
            let worlds = cfg.rl.eval_worlds.clamp(1, episodes.max(1));
            let span = cfg.sim.horizon_slots - cfg.sim.warmup_slots;
            let mut env = None;
            for ep in 0..episodes {
                // Episodes are dealt to worlds in contiguous blocks and
                // spaced evenly over each world's [warmup, horizon) window.
                let w = ep * worlds / episodes;
                let first = (w * episodes).div_ceil(worlds);
                let per_world = ((w + 1) * episodes).div_ceil(worlds) - first;
                if ep == first {
                    let base = cfg.sim.seed.wrapping_add(cfg.rl.eval_seed_offset).wrapping_add(w as u64);
                    let e = SchedEnv::new(cfg, policy, base)?;
                    check_dims(net, e.input_dim(), cfg)?;
                    env = Some(e);
                }
                let env = env.as_mut().expect("created above");
                env.skip_to(cfg.sim.warmup_slots + ((ep - first) as u64 * span) / per_world as u64)?;
                let s = env.state()?;
                let a = greedy_action(net, &s)?;
                let r = env.decide(a as u64)?.report;
                rewards.push(r.reward);
                actions.push(a);
                sums[0] += r.psnr_capped(cfg.metrics.psnr_cap_db);
                sums[1] += r.ssim;
                sums[2] += r.lpips_proxy;
                sums[3] += r.aaoi;
            }
        }
        TrainEnv::Synthetic => {
            let mut env = training_env(cfg, policy, true)?;
            check_dims(net, env.input_dim(), cfg)?;
            for _ in 0..episodes {
                let s = env.observe()?;
                let a = greedy_action(net, &s)?;
                rewards.push(env.step(a)?);
                actions.push(a);
            }
        }
    }
    let k = episodes.max(1) as f64;
    let mean_reward = rewards.iter().sum::<f64>() / k;
    let std_reward = if episodes > 1 {
        (rewards.iter().map(|r| (r - mean_reward).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        policy,
        episodes,
        mean_reward,
        std_reward,
        psnr: sums[0] / k,
        ssim: sums[1] / k,
        lpips: sums[2] / k,
        aaoi: sums[3] / k,
        mean_omega: actions.iter().sum::<usize>() as f64 / k,
        actions,
    })
}

fn check_dims(net: &PolicyValueNet, input_dim: usize, cfg: &ExperimentConfig) -> Result<()> {
    if net.input_dim() != input_dim || net.n_actions() != cfg.policy.omega_max as usize + 1 {
        return Err(Error::Config(format!(
            "checkpoint shape ({} inputs, {} actions) does not match the configured environment ({} inputs, {} actions)",
            net.input_dim(),
            net.n_actions(),
            input_dim,
            cfg.policy.omega_max + 1
        )));
    }
    Ok(())
}

/// Save `eval_<policy>.json` in `dir`.
pub fn write_eval(report: &EvalReport, dir: &Path) -> Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("eval_{}.json", report.policy.name()));
    write_json(&path, report)?;
    Ok(path)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
