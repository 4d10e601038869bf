//! Single-step (contextual-bandit) PPO.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{log_softmax, softmax, Adam, PolicyValueNet};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoParams {
    pub omega_max: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epsilon: f64,
    pub batch: usize,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for PpoParams {
    fn default() -> Self {
        Self {
            omega_max: 120,
            hidden: vec![128, 128],
            lr: 3e-4,
            epsilon: 0.2,
            batch: 64,
            epochs: 4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            episodes: 2000,
            seed: 0,
        }
    }
}

impl PpoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(invalid("batch and epochs must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden widths must be positive"));
        }
        if !(self.entropy_coef.is_finite() && self.value_coef.is_finite()) {
            return Err(invalid("loss coefficients must be finite"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.omega_max + 1
    }
}

/// One bandit episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub state: Vec<f64>,
    pub action: usize,
    pub logp: f64,
    pub reward: f64,
    pub value: f64,
}

/// A = r − V (Q = r for a one-step episode).
pub fn advantage(rec: &EpisodeRecord) -> f64 {
    rec.reward - rec.value
}

/// Draw an action from the policy head. Returns (action, log-prob, value).
pub fn sample_action(net: &PolicyValueNet, state: &[f64], rng: &mut impl Rng) -> Result<(usize, f64, f64)> {
    let pass = net.forward(state)?;
    let (a, logp) = sample_from_logits(&pass.logits, rng)?;
    Ok((a, logp, pass.value))
}

pub fn sample_from_logits(logits: &[f64], rng: &mut impl Rng) -> Result<(usize, f64)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits".into()));
    }
    let p = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut a = p.len() - 1;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            a = i;
            break;
        }
    }
    Ok((a, log_softmax(logits)[a]))
}

/// Most probable action.
pub fn greedy_action(net: &PolicyValueNet, state: &[f64]) -> Result<usize> {
    let pass = net.forward(state)?;
    Ok(pass
        .logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0)
}

/// Mean of min(ρA, clip(ρ, 1−ε, 1+ε)A).
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], epsilon: f64) -> f64 {
    let s: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - epsilon, 1.0 + epsilon) * a))
        .sum();
    s / ratios.len() as f64
}

/// Batch-normalised advantages (mean 0, std 1, std floored at 1e-8).
pub fn normalized_advantages(batch: &[EpisodeRecord]) -> Vec<f64> {
    let a: Vec<f64> = batch.iter().map(advantage).collect();
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    a.iter().map(|v| (v - mean) / std).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossStats {
    pub loss: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Loss to minimise, `−surrogate + c_v·mean (V − r)² − c_e·mean H`, and its
/// exact gradient.
pub fn ppo_loss_and_grad(
    net: &PolicyValueNet,
    batch: &[EpisodeRecord],
    advantages: &[f64],
    params: &PpoParams,
) -> Result<(LossStats, Vec<f64>)> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut stats = LossStats::default();
    let eps = params.epsilon;
    for (rec, &adv) in batch.iter().zip(advantages) {
        let pass = net.forward(&rec.state)?;
        let logp = log_softmax(&pass.logits);
        let p = softmax(&pass.logits);
        let ratio = (logp[rec.action] - rec.logp).exp();
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let unclipped_active = ratio * adv <= clipped * adv;
        stats.surrogate += (ratio * adv).min(clipped * adv);
        let entropy: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
        stats.entropy += entropy;
        let verr = pass.value - rec.reward;
        stats.value_loss += verr * verr;

        let mut dlogits = vec![0.0; p.len()];
        if unclipped_active {
            // d(ρA)/dz = ρA(onehot − π); negated for the loss.
            let g = -ratio * adv / n;
            for (j, d) in dlogits.iter_mut().enumerate() {
                *d += g * (f64::from(u8::from(j == rec.action)) - p[j]);
            }
        }
        // dH/dz_j = −π_j (log π_j + H); loss carries −c_e·H.
        for (j, d) in dlogits.iter_mut().enumerate() {
            *d += params.entropy_coef / n * p[j] * (logp[j] + entropy);
        }
        let dvalue = params.value_coef * 2.0 * verr / n;
        net.backward(&pass, &dlogits, dvalue, &mut grad);
    }
    stats.surrogate /= n;
    stats.entropy /= n;
    stats.value_loss /= n;
    stats.loss = -stats.surrogate + params.value_coef * stats.value_loss - params.entropy_coef * stats.entropy;
    if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite PPO loss or gradient".into()));
    }
    Ok((stats, grad))
}

/// K full-batch epochs. On a numerical failure the parameters and optimiser
/// are left as they were before the call.
pub fn ppo_update(
    net: &mut PolicyValueNet,
    batch: &[EpisodeRecord],
    params: &PpoParams,
    opt: &mut Adam,
) -> Result<Vec<LossStats>> {
    if batch.is_empty() {
        return Err(invalid("empty PPO batch"));
    }
    let advantages = normalized_advantages(batch);
    let saved = (net.params.clone(), opt.clone());
    let mut out = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        match ppo_loss_and_grad(net, batch, &advantages, params) {
            Ok((stats, grad)) => {
                opt.step(&mut net.params, &grad);
                out.push(stats);
            }
            Err(e) => {
                net.params = saved.0;
                *opt = saved.1;
                return Err(e);
            }
        }
    }
    if net.params.iter().any(|v| !v.is_finite()) {
        net.params = saved.0;
        *opt = saved.1;
        return Err(Error::Numerical("update produced non-finite parameters".into()));
    }
    Ok(out)
}

/// One-step environment: observe a context, act, receive a reward.
pub trait BanditEnv {
    fn input_dim(&self) -> usize;
    fn observe(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub rewards: Vec<f64>,
    pub actions: Vec<usize>,
    pub losses: Vec<LossStats>,
}

/// Collect episodes with the current policy and update after every full
/// batch (plus a final partial one).
pub fn train(env: &mut dyn BanditEnv, params: &PpoParams) -> Result<TrainOutcome> {
    params.validate()?;
    let net = PolicyValueNet::new(env.input_dim(), &params.hidden, params.n_actions(), params.seed)?;
    train_from(env, params, net)
}

pub fn train_from(env: &mut dyn BanditEnv, params: &PpoParams, mut net: PolicyValueNet) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(params.seed, 0x5a, 0));
    let mut opt = Adam::new(net.param_count(), params.lr);
    let mut rewards = Vec::with_capacity(params.episodes);
    let mut actions = Vec::with_capacity(params.episodes);
    let mut losses = Vec::new();
    let mut batch = Vec::with_capacity(params.batch);
    for ep in 0..params.episodes {
        let state = env.observe()?;
        let (action, logp, value) = sample_action(&net, &state, &mut rng)?;
        let reward = env.step(action)?;
        if !reward.is_finite() {
            return Err(Error::Numerical(format!("non-finite reward at episode {ep}")));
        }
        rewards.push(reward);
        actions.push(action);
        batch.push(EpisodeRecord {
            state,
            action,
            logp,
            reward,
            value,
        });
        if batch.len() == params.batch || ep + 1 == params.episodes {
            losses.extend(ppo_update(&mut net, &batch, params, &mut opt)?);
            batch.clear();
        }
    }
    Ok(TrainOutcome {
        net,
        rewards,
        actions,
        losses,
    })
}

/// Known-optimum bandit: reward −(ω − ω*)² / 1000 with an uninformative
/// random context.
#[derive(Debug, Clone)]
pub struct SyntheticBandit {
    pub optimum: usize,
    pub dim: usize,
    rng: ChaCha8Rng,
}

impl SyntheticBandit {
    pub fn new(optimum: usize, dim: usize, seed: u64) -> Self {
        Self {
            optimum,
            dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reward(&self, action: usize) -> f64 {
        -((action as f64 - self.optimum as f64).powi(2)) / 1000.0
    }
}

impl BanditEnv for SyntheticBandit {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        Ok((0..self.dim).map(|_| self.rng.random_range(-1.0..1.0)).collect())
    }

    fn step(&mut self, action: usize) -> Result<f64> {
        Ok(self.reward(action))
    }
}

/// Probability mass the policy puts on actions in `lo..=hi`, averaged over
/// the given states.
pub fn mass_in_range(net: &PolicyValueNet, states: &[Vec<f64>], lo: usize, hi: usize) -> Result<f64> {
    let mut total = 0.0;
    for s in states {
        let p = softmax(&net.forward(s)?.logits);
        total += p[lo.min(p.len())..=hi.min(p.len() - 1)].iter().sum::<f64>();
    }
    Ok(total / states.len() as f64)
}
