//! Soft actor-critic agent for the initial-PA placement problem: Gaussian
//! reparameterized policy with tanh squashing onto the physical coordinate
//! range, twin critics with soft-synchronized targets, learned entropy
//! temperature, and a uniform replay buffer.
//!
//! All gradients are hand-derived and validated against central finite
//! differences (see [`gradient_suite`]).

mod buffer;
mod mlp;

pub use buffer::{ReplayBuffer, Transition};
pub use mlp::{Mlp, Optimizer, OptimizerKind};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOG_SIGMA_MIN: f64 = -20.0;
const LOG_SIGMA_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacHyper {
    pub hidden_dim: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub target_entropy: f64,
    pub tau: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub min_buffer: usize,
    pub grad_steps_per_cpi: usize,
    pub optimizer: OptimizerKind,
    /// Rewards are multiplied by this inside the learner so Q values sit at
    /// the reward scale; the buffer keeps raw rewards.
    pub reward_scale: f64,
    /// Entropy weight at episode start.
    pub initial_temperature: f64,
}

impl Default for SacHyper {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            actor_lr: 3e-4,
            critic_lr: 3e-3,
            temperature_lr: 3e-4,
            target_entropy: -3.0,
            tau: 0.005,
            discount: 0.99,
            batch_size: 64,
            buffer_capacity: 1000,
            min_buffer: 100,
            grad_steps_per_cpi: 1,
            optimizer: OptimizerKind::Adam,
            reward_scale: 1.0,
            initial_temperature: 1.0,
        }
    }
}

/// Losses and diagnostics of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: f64,
    pub mean_log_prob: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(x)^2)` evaluated stably.
fn ln_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x))
}

/// One reparameterized draw with everything the backward pass needs.
#[derive(Debug, Clone)]
struct ActionSample {
    /// Physical action in `[0, bound]`.
    action: Vec<f64>,
    log_prob: f64,
    eps: Vec<f64>,
    tanh_raw: Vec<f64>,
    sigma: Vec<f64>,
    /// Per-head mask: false where the log-sigma clamp was active.
    sigma_grad_live: Vec<bool>,
    cache: mlp::MlpCache,
}

/// Tanh-squashed Gaussian policy over the initial-PA coordinates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub action_dim: usize,
    /// Upper edge of the physical action interval `[0, bound]`.
    pub bound: f64,
}

impl GaussianPolicy {
    fn sample(&self, state_norm: &[f64], eps: &[f64]) -> Result<ActionSample> {
        let (out, cache) = self.net.forward(state_norm);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDivergence("policy produced non-finite output".into()));
        }
        let d = self.action_dim;
        let mut action = vec![0.0; d];
        let mut tanh_raw = vec![0.0; d];
        let mut sigma = vec![0.0; d];
        let mut live = vec![true; d];
        let mut log_prob = 0.0;
        for i in 0..d {
            let mu = out[i];
            let ls_raw = out[d + i];
            let ls = ls_raw.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            live[i] = ls_raw > LOG_SIGMA_MIN && ls_raw < LOG_SIGMA_MAX;
            let s = ls.exp();
            let raw = mu + s * eps[i];
            let t = raw.tanh();
            action[i] = self.bound * (t + 1.0) / 2.0;
            tanh_raw[i] = t;
            sigma[i] = s;
            log_prob += -0.5 * eps[i] * eps[i] - ls - 0.5 * LN_2PI;
            log_prob -= (self.bound / 2.0).ln() + ln_one_minus_tanh_sq(raw);
        }
        Ok(ActionSample { action, log_prob, eps: eps.to_vec(), tanh_raw, sigma, sigma_grad_live: live, cache })
    }

    /// Density of the squashed policy at a physical action; used by the
    /// normalization check.
    pub fn log_density(mu: f64, sigma: f64, bound: f64, action: f64) -> f64 {
        let t = (2.0 * action / bound - 1.0).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
        let raw = t.atanh();
        let z = (raw - mu) / sigma;
        -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI - (bound / 2.0).ln() - ln_one_minus_tanh_sq(raw)
    }
}

/// Versioned full-state checkpoint. Field order is the serialization
/// contract (JSON object keys appear in declaration order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub policy: GaussianPolicy,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_temperature: f64,
    pub policy_opt: Optimizer,
    pub critic_opts: [Optimizer; 2],
    pub temperature_opt: Optimizer,
    pub rng: ChaCha12Rng,
    pub buffer: ReplayBuffer,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Soft actor-critic agent owning its networks, buffer, and RNG stream.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub policy: GaussianPolicy,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_temperature: f64,
    pub hyper: SacHyper,
    pub buffer: ReplayBuffer,
    /// States and actions are divided by this scale inside the networks.
    pub norm_scale: f64,
    policy_opt: Optimizer,
    critic_opts: [Optimizer; 2],
    temperature_opt: Optimizer,
    rng: ChaCha12Rng,
}

impl SacAgent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        bound: f64,
        norm_scale: f64,
        hyper: SacHyper,
        mut rng: ChaCha12Rng,
    ) -> Result<Self> {
        Self::with_dims(state_dim, action_dim, bound, norm_scale, hyper, &mut rng).map(|mut a| {
            a.rng = rng;
            a
        })
    }

    fn with_dims(
        state_dim: usize,
        action_dim: usize,
        bound: f64,
        norm_scale: f64,
        hyper: SacHyper,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        if bound <= 0.0 || norm_scale <= 0.0 {
            return Err(Error::Config("action bound and norm scale must be positive".into()));
        }
        let h = hyper.hidden_dim;
        let policy_net = Mlp::new(&[state_dim, h, h, 2 * action_dim], rng)?;
        let c1 = Mlp::new(&[state_dim + action_dim, h, h, 1], rng)?;
        let c2 = Mlp::new(&[state_dim + action_dim, h, h, 1], rng)?;
        let (t1, t2) = (c1.clone(), c2.clone());
        let policy = GaussianPolicy { net: policy_net, action_dim, bound };
        let policy_opt = Optimizer::new(hyper.optimizer, policy.net.n_params());
        let critic_opts = [
            Optimizer::new(hyper.optimizer, c1.n_params()),
            Optimizer::new(hyper.optimizer, c2.n_params()),
        ];
        let temperature_opt = Optimizer::new(hyper.optimizer, 1);
        let buffer = ReplayBuffer::new(hyper.buffer_capacity);
        let log_temperature = hyper.initial_temperature.ln();
        Ok(Self {
            policy,
            critics: [c1, c2],
            targets: [t1, t2],
            log_temperature,
            hyper,
            buffer,
            norm_scale,
            policy_opt,
            critic_opts,
            temperature_opt,
            rng: ChaCha12Rng::seed_from_u64(0),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|v| v / self.norm_scale).collect()
    }

    fn critic_input(&self, state_norm: &[f64], action_phys: &[f64]) -> Vec<f64> {
        let mut x = state_norm.to_vec();
        x.extend(action_phys.iter().map(|a| a / self.norm_scale));
        x
    }

    fn draw_eps(&mut self, n: usize) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    /// Samples an action for the physical state; `deterministic` returns the
    /// squashed mean. Also reports the action's log density.
    pub fn act(&mut self, state: &[f64], deterministic: bool) -> Result<(Vec<f64>, f64)> {
        let eps = if deterministic {
            vec![0.0; self.policy.action_dim]
        } else {
            self.draw_eps(self.policy.action_dim)
        };
        let s_norm = self.normalize_state(state);
        let sample = self.policy.sample(&s_norm, &eps)?;
        Ok((sample.action, sample.log_prob))
    }

    /// Stores one transition.
    pub fn observe(&mut self, state: Vec<f64>, action: Vec<f64>, reward: f64, next_state: Vec<f64>) {
        self.buffer.push(Transition { state, action, reward, next_state });
    }

    fn q_value(&self, net: &Mlp, input: &[f64]) -> (f64, mlp::MlpCache) {
        let (out, cache) = net.forward(input);
        (out[0], cache)
    }

    /// Bellman targets `r + gamma * min_j Q_j_tar(s', a' ~ pi) - phi log pi(a'|s')`
    /// for a batch; the fresh next actions consume `eps` rows.
    fn critic_targets_with(&self, batch: &[usize], eps: &[Vec<f64>]) -> Result<Vec<f64>> {
        let phi = self.temperature();
        let mut out = Vec::with_capacity(batch.len());
        for (k, &i) in batch.iter().enumerate() {
            let tr = self.buffer.get(i);
            let s_next = self.normalize_state(&tr.next_state);
            let sample = self.policy.sample(&s_next, &eps[k])?;
            let input = self.critic_input(&s_next, &sample.action);
            let q1 = self.q_value(&self.targets[0], &input).0;
            let q2 = self.q_value(&self.targets[1], &input).0;
            let r = tr.reward * self.hyper.reward_scale;
            out.push(r + self.hyper.discount * q1.min(q2) - phi * sample.log_prob);
        }
        Ok(out)
    }

    /// One gradient step per critic on the mean squared Bellman error;
    /// returns the pre-step loss averaged over both critics.
    fn update_critics(&mut self, batch: &[usize], targets_y: &[f64]) -> Result<f64> {
        let inv = 1.0 / batch.len() as f64;
        let mut loss_total = 0.0;
        for c in 0..2 {
            let mut grads = vec![0.0; self.critics[c].n_params()];
            let mut loss = 0.0;
            for (k, &i) in batch.iter().enumerate() {
                let tr = self.buffer.get(i);
                let s = self.normalize_state(&tr.state);
                let input = self.critic_input(&s, &tr.action);
                let (q, cache) = self.q_value(&self.critics[c], &input);
                let err = q - targets_y[k];
                loss += 0.5 * err * err * inv;
                self.critics[c].backward(&cache, &[err * inv], &mut grads);
            }
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence("critic loss is not finite".into()));
            }
            self.critic_opts[c].step(self.critics[c].params_mut(), &grads, self.hyper.critic_lr);
            loss_total += loss;
        }
        Ok(loss_total / 2.0)
    }

    /// Actor loss `E[phi log pi - min_j Q_j]` and its gradient through the
    /// reparameterized action; returns `(loss, grads, mean log prob)`.
    fn actor_loss_grads(&self, batch: &[usize], eps: &[Vec<f64>]) -> Result<(f64, Vec<f64>, f64)> {
        let phi = self.temperature();
        let inv = 1.0 / batch.len() as f64;
        let d = self.policy.action_dim;
        let mut grads = vec![0.0; self.policy.net.n_params()];
        let mut loss = 0.0;
        let mut mean_logp = 0.0;
        let mut critic_scratch = vec![0.0; self.critics[0].n_params()];
        for (k, &i) in batch.iter().enumerate() {
            let tr = self.buffer.get(i);
            let s = self.normalize_state(&tr.state);
            let sample = self.policy.sample(&s, &eps[k])?;
            let input = self.critic_input(&s, &sample.action);
            let (q1, cache1) = self.q_value(&self.critics[0], &input);
            let (q2, cache2) = self.q_value(&self.critics[1], &input);
            let (q_min, cache_min, net_min) = if q1 <= q2 {
                (q1, cache1, &self.critics[0])
            } else {
                (q2, cache2, &self.critics[1])
            };
            loss += (phi * sample.log_prob - q_min) * inv;
            mean_logp += sample.log_prob * inv;

            // dQ/d(action), through the normalized critic input.
            critic_scratch.iter_mut().for_each(|g| *g = 0.0);
            let input_grad = net_min.backward(&cache_min, &[1.0], &mut critic_scratch);
            let state_dim = s.len();
            // Gradient on the policy head outputs [mu; log_sigma].
            let mut head = vec![0.0; 2 * d];
            for a in 0..d {
                let t = sample.tanh_raw[a];
                let da_draw = self.policy.bound / 2.0 * (1.0 - t * t);
                let dq_da = input_grad[state_dim + a] / self.norm_scale;
                let dlogp_draw = 2.0 * t;
                // d loss / d raw_a
                let dl_draw = (phi * dlogp_draw - dq_da * da_draw) * inv;
                head[a] += dl_draw;
                if sample.sigma_grad_live[a] {
                    let draw_dls = sample.sigma[a] * sample.eps[a];
                    head[d + a] += dl_draw * draw_dls - phi * inv;
                }
            }
            self.policy.net.backward(&sample.cache, &head, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence("actor loss is not finite".into()));
        }
        Ok((loss, grads, mean_logp))
    }

    fn update_actor(&mut self, batch: &[usize], eps: &[Vec<f64>]) -> Result<(f64, f64)> {
        let (loss, grads, mean_logp) = self.actor_loss_grads(batch, eps)?;
        self.policy_opt.step(self.policy.net.params_mut(), &grads, self.hyper.actor_lr);
        Ok((loss, mean_logp))
    }

    /// Temperature step on `log phi`; rises while the policy entropy sits
    /// below the target.
    fn update_temperature(&mut self, mean_log_prob: f64) -> f64 {
        let phi = self.temperature();
        // L(log phi) = -phi (E[log pi] + H0)
        let grad = -phi * (mean_log_prob + self.hyper.target_entropy);
        let mut param = [self.log_temperature];
        self.temperature_opt.step(&mut param, &[grad], self.hyper.temperature_lr);
        self.log_temperature = param[0];
        self.temperature()
    }

    /// Convex blend of target parameters toward the critics.
    pub fn soft_sync(&mut self) {
        let tau = self.hyper.tau;
        for c in 0..2 {
            let src = self.critics[c].params().to_vec();
            for (t, s) in self.targets[c].params_mut().iter_mut().zip(src) {
                *t = tau * s + (1.0 - tau) * *t;
            }
        }
    }

    /// One full training step (critics, actor, temperature, target sync);
    /// returns `None` while the buffer is below its minimal size.
    pub fn train_step(&mut self) -> Result<Option<TrainStats>> {
        let batch = match self.buffer.sample_indices(
            self.hyper.batch_size,
            self.hyper.min_buffer,
            &mut self.rng,
        ) {
            Ok(b) => b,
            Err(Error::BufferNotReady { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let d = self.policy.action_dim;
        let eps_next: Vec<Vec<f64>> = (0..batch.len()).map(|_| self.draw_eps(d)).collect();
        let targets_y = self.critic_targets_with(&batch, &eps_next)?;
        let critic_loss = self.update_critics(&batch, &targets_y)?;
        let eps_cur: Vec<Vec<f64>> = (0..batch.len()).map(|_| self.draw_eps(d)).collect();
        let (actor_loss, mean_logp) = self.update_actor(&batch, &eps_cur)?;
        let temperature = self.update_temperature(mean_logp);
        self.soft_sync();
        Ok(Some(TrainStats { critic_loss, actor_loss, temperature, mean_log_prob: mean_logp }))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            policy: self.policy.clone(),
            critics: self.critics.clone(),
            targets: self.targets.clone(),
            log_temperature: self.log_temperature,
            policy_opt: self.policy_opt.clone(),
            critic_opts: self.critic_opts.clone(),
            temperature_opt: self.temperature_opt.clone(),
            rng: self.rng.clone(),
            buffer: self.buffer.clone(),
        }
    }

    pub fn restore(&mut self, ck: Checkpoint) -> Result<()> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        self.policy = ck.policy;
        self.critics = ck.critics;
        self.targets = ck.targets;
        self.log_temperature = ck.log_temperature;
        self.policy_opt = ck.policy_opt;
        self.critic_opts = ck.critic_opts;
        self.temperature_opt = ck.temperature_opt;
        self.rng = ck.rng;
        self.buffer = ck.buffer;
        Ok(())
    }
}

/// Result of one finite-difference validation.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: &'static str,
    pub worst_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.worst_rel_err <= self.tolerance
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1e-8)
}

/// Finite-difference validation battery on miniature networks (hidden
/// width 4): network parameter gradients, the critic Bellman step, the
/// reparameterized actor gradient, the temperature gradient, and the
/// squashed-density normalization.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    use rand::SeedableRng;
    let mut checks = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // 1. Raw network gradients.
    let mut worst: f64 = 0.0;
    for dims in [vec![3, 4, 2], vec![4, 4, 4, 1]] {
        let net = Mlp::new(&dims, &mut rng)?;
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probe: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x);
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&cache, &probe, &mut grads);
        let f = |n: &Mlp| n.forward(&x).0.iter().zip(&probe).map(|(o, p)| o * p).sum::<f64>();
        for i in 0..net.n_params() {
            let mut hi = net.clone();
            hi.params_mut()[i] += 1e-6;
            let mut lo = net.clone();
            lo.params_mut()[i] -= 1e-6;
            worst = worst.max(rel_err(grads[i], (f(&hi) - f(&lo)) / 2e-6));
        }
    }
    checks.push(GradCheck { name: "network parameter gradients", worst_rel_err: worst, tolerance: 1e-4 });

    // Miniature agent with synthetic experience for the remaining checks.
    let hyper = SacHyper {
        hidden_dim: 4,
        batch_size: 4,
        min_buffer: 4,
        buffer_capacity: 32,
        optimizer: OptimizerKind::Sgd,
        ..SacHyper::default()
    };
    let mut agent = SacAgent::new(3, 2, 2.0, 1.0, hyper, ChaCha12Rng::seed_from_u64(seed ^ 0x5ac))?;
    for _ in 0..8 {
        let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..2.0)).collect();
        let s2: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        agent.observe(s, a, rng.gen_range(0.0..1.0), s2);
    }
    let batch = vec![0, 2, 4, 6];
    let eps: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();

    // 2. Critic Bellman gradient on a single-sample batch.
    let y = agent.critic_targets_with(&[1], &eps[..1].to_vec())?;
    let mut worst: f64 = 0.0;
    {
        let tr = agent.buffer.get(1).clone();
        let s = agent.normalize_state(&tr.state);
        let input = agent.critic_input(&s, &tr.action);
        let (q, cache) = agent.q_value(&agent.critics[0], &input);
        let mut grads = vec![0.0; agent.critics[0].n_params()];
        agent.critics[0].backward(&cache, &[q - y[0]], &mut grads);
        let f = |net: &Mlp| {
            let q = net.forward(&input).0[0];
            0.5 * (q - y[0]).powi(2)
        };
        for i in 0..agent.critics[0].n_params() {
            let mut hi = agent.critics[0].clone();
            hi.params_mut()[i] += 1e-6;
            let mut lo = agent.critics[0].clone();
            lo.params_mut()[i] -= 1e-6;
            worst = worst.max(rel_err(grads[i], (f(&hi) - f(&lo)) / 2e-6));
        }
    }
    checks.push(GradCheck { name: "critic Bellman gradient", worst_rel_err: worst, tolerance: 1e-4 });

    // 3. Actor gradient through the reparameterized action.
    let (_, grads, _) = agent.actor_loss_grads(&batch, &eps)?;
    let mut worst: f64 = 0.0;
    for i in 0..agent.policy.net.n_params() {
        let mut hi = agent.clone();
        hi.policy.net.params_mut()[i] += 1e-6;
        let mut lo = agent.clone();
        lo.policy.net.params_mut()[i] -= 1e-6;
        let (lh, _, _) = hi.actor_loss_grads(&batch, &eps)?;
        let (ll, _, _) = lo.actor_loss_grads(&batch, &eps)?;
        worst = worst.max(rel_err(grads[i], (lh - ll) / 2e-6));
    }
    checks.push(GradCheck { name: "actor reparameterized gradient", worst_rel_err: worst, tolerance: 1e-4 });

    // 4. Temperature gradient on log phi.
    let (_, _, mean_logp) = agent.actor_loss_grads(&batch, &eps)?;
    let phi = agent.temperature();
    let analytic = -phi * (mean_logp + agent.hyper.target_entropy);
    let l = |log_phi: f64| -> f64 {
        let p = log_phi.exp();
        -p * mean_logp - p * agent.hyper.target_entropy
    };
    let fd = (l(agent.log_temperature + 1e-7) - l(agent.log_temperature - 1e-7)) / 2e-7;
    checks.push(GradCheck {
        name: "temperature gradient",
        worst_rel_err: rel_err(analytic, fd),
        tolerance: 1e-6,
    });

    // 5. Squashed-density normalization: the 1-D density must integrate
    // to one over the bounded interval.
    let (mu, sigma, bound) = (0.3, 0.8, 2.0);
    let n = 40_001;
    let h = bound / (n - 1) as f64;
    let mut integral = 0.0;
    for k in 0..n {
        let a = (k as f64 * h).clamp(1e-12, bound - 1e-12);
        let w = if k == 0 || k == n - 1 {
            0.5
        } else {
            1.0
        };
        integral += w * GaussianPolicy::log_density(mu, sigma, bound, a).exp() * h;
    }
    checks.push(GradCheck {
        name: "squashed log-density normalization",
        worst_rel_err: (integral - 1.0).abs(),
        tolerance: 1e-3,
    });

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_agent(seed: u64) -> SacAgent {
        let hyper = SacHyper {
            hidden_dim: 4,
            batch_size: 4,
            min_buffer: 4,
            buffer_capacity: 16,
            optimizer: OptimizerKind::Sgd,
            ..SacHyper::default()
        };
        SacAgent::new(3, 2, 2.0, 1.0, hyper, ChaCha12Rng::seed_from_u64(seed)).unwrap()
    }

    fn fill_buffer(agent: &mut SacAgent, n: usize, seed: u64) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..n {
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..2.0)).collect();
            let s2: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            agent.observe(s, a, rng.gen_range(0.0..2.0), s2);
        }
    }

    #[test]
    fn gradient_suite_passes() {
        for check in gradient_suite(7).unwrap() {
            assert!(
                check.passed(),
                "{}: {} > {}",
                check.name,
                check.worst_rel_err,
                check.tolerance
            );
        }
    }

    #[test]
    fn actions_respect_bounds() {
        let mut agent = tiny_agent(1);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (a, logp) = agent.act(&s, false).unwrap();
            assert!(a.iter().all(|&x| (0.0..=2.0).contains(&x)));
            assert!(logp.is_finite());
        }
    }

    #[test]
    fn deterministic_action_is_squashed_mean() {
        let mut agent = tiny_agent(3);
        let s = [0.2, -0.4, 0.9];
        let (a1, _) = agent.act(&s, true).unwrap();
        let (a2, _) = agent.act(&s, true).unwrap();
        assert_eq!(a1, a2);
        let (out, _) = agent.policy.net.forward(&agent.normalize_state(&s));
        for i in 0..2 {
            let expect = 2.0 * (out[i].tanh() + 1.0) / 2.0;
            assert!((a1[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn presquash_mean_matches_mu_statistically() {
        let mut agent = tiny_agent(4);
        let s = [0.1, 0.5, -0.3];
        let s_norm = agent.normalize_state(&s);
        let (out, _) = agent.policy.net.forward(&s_norm);
        let n = 100_000;
        let mut sums = [0.0f64; 2];
        let mut sqs = [0.0f64; 2];
        for _ in 0..n {
            let eps = agent.draw_eps(2);
            let sample = agent.policy.sample(&s_norm, &eps).unwrap();
            for i in 0..2 {
                let raw = sample.tanh_raw[i].atanh();
                sums[i] += raw;
                sqs[i] += raw * raw;
            }
        }
        for i in 0..2 {
            let mean = sums[i] / n as f64;
            let var = sqs[i] / n as f64 - mean * mean;
            let tol = 3.0 * var.sqrt() / (n as f64).sqrt();
            assert!((mean - out[i]).abs() <= tol, "head {i}: {mean} vs {}", out[i]);
        }
    }

    #[test]
    fn critic_target_gamma_zero_is_reward() {
        let mut agent = tiny_agent(5);
        agent.hyper.discount = 0.0;
        agent.log_temperature = f64::NEG_INFINITY; // phi = 0
        fill_buffer(&mut agent, 8, 6);
        let eps = vec![vec![0.1, -0.2]];
        let y = agent.critic_targets_with(&[3], &eps).unwrap();
        assert!((y[0] - agent.buffer.get(3).reward).abs() < 1e-12);
    }

    #[test]
    fn critic_target_matches_hand_composition() {
        let mut agent = tiny_agent(7);
        fill_buffer(&mut agent, 8, 8);
        let eps = vec![vec![0.7, -1.1]];
        let y = agent.critic_targets_with(&[2], &eps).unwrap();

        let tr = agent.buffer.get(2);
        let s_next = agent.normalize_state(&tr.next_state);
        let sample = agent.policy.sample(&s_next, &eps[0]).unwrap();
        let input = agent.critic_input(&s_next, &sample.action);
        let q1 = agent.targets[0].forward(&input).0[0];
        let q2 = agent.targets[1].forward(&input).0[0];
        let expect = tr.reward + agent.hyper.discount * q1.min(q2)
            - agent.temperature() * sample.log_prob;
        assert!((y[0] - expect).abs() <= 1e-10);

        // Identical critics: min is either one.
        let mut twin = agent.clone();
        twin.targets[1] = twin.targets[0].clone();
        let y_twin = twin.critic_targets_with(&[2], &eps).unwrap();
        let q = twin.targets[0].forward(&input).0[0];
        let expect_twin = tr.reward + twin.hyper.discount * q - twin.temperature() * sample.log_prob;
        assert!((y_twin[0] - expect_twin).abs() <= 1e-10);
    }

    #[test]
    fn zero_error_batch_leaves_critics_unchanged() {
        let mut agent = tiny_agent(9);
        fill_buffer(&mut agent, 8, 10);
        let batch = vec![0, 1];
        // Targets equal to current Q values: gradient must vanish.
        let ys: Vec<f64> = batch
            .iter()
            .map(|&i| {
                let tr = agent.buffer.get(i);
                let s = agent.normalize_state(&tr.state);
                let input = agent.critic_input(&s, &tr.action);
                agent.critics[0].forward(&input).0[0]
            })
            .collect();
        let before = agent.critics[0].params().to_vec();
        // Use critic 0's own values; critic 1 sees nonzero error, so only
        // check critic 0 stays fixed.
        agent.update_critics(&batch, &ys).unwrap();
        for (a, b) in agent.critics[0].params().iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn critic_loss_decreases_on_fixed_batch() {
        let mut agent = tiny_agent(11);
        fill_buffer(&mut agent, 8, 12);
        let batch: Vec<usize> = (0..8).collect();
        let ys: Vec<f64> = (0..8).map(|i| 0.3 * i as f64).collect();
        let first = agent.update_critics(&batch, &ys).unwrap();
        let mut last = first;
        for _ in 0..99 {
            last = agent.update_critics(&batch, &ys).unwrap();
        }
        assert!(last < first * 0.95, "loss {first} -> {last} did not decrease");
    }

    #[test]
    fn actor_gradient_vanishes_with_constant_critics_and_zero_phi() {
        let mut agent = tiny_agent(13);
        fill_buffer(&mut agent, 8, 14);
        agent.log_temperature = f64::NEG_INFINITY; // phi = 0
        // Zero every critic parameter: Q is identically zero, so dQ/da = 0.
        for c in 0..2 {
            agent.critics[c].params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        let eps = vec![vec![0.3, -0.8], vec![1.2, 0.1]];
        let (_, grads, _) = agent.actor_loss_grads(&[0, 1], &eps).unwrap();
        assert!(grads.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn entropy_term_increases_when_sigma_shrinks() {
        // With critics zeroed the loss is phi E[log pi]; a tighter policy
        // has larger log density, hence larger loss.
        let mut agent = tiny_agent(15);
        fill_buffer(&mut agent, 8, 16);
        for c in 0..2 {
            agent.critics[c].params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        agent.log_temperature = 0.0; // phi = 1
        let eps = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let (loss_wide, _, _) = agent.actor_loss_grads(&[0, 1], &eps).unwrap();
        // Shrink sigma by biasing the log-sigma heads down.
        let d = agent.policy.action_dim;
        let n_params = agent.policy.net.n_params();
        let out_dim = 2 * d;
        let bias_offset = n_params - out_dim;
        for i in 0..d {
            agent.policy.net.params_mut()[bias_offset + d + i] -= 2.0;
        }
        let (loss_tight, _, _) = agent.actor_loss_grads(&[0, 1], &eps).unwrap();
        assert!(loss_tight > loss_wide, "{loss_tight} <= {loss_wide}");
    }

    #[test]
    fn temperature_moves_toward_target_entropy() {
        let mut agent = tiny_agent(17);
        // Entropy below target: E[-log pi] < H0  =>  E[log pi] > -H0.
        agent.hyper.target_entropy = -3.0;
        let before = agent.log_temperature;
        agent.update_temperature(5.0); // log pi = 5 > 3 = -H0
        assert!(agent.log_temperature > before, "phi should rise");
        let mut agent = tiny_agent(18);
        agent.update_temperature(-10.0); // entropy above target
        assert!(agent.log_temperature < 0.0, "phi should fall");
        // Exactly at the target: zero gradient.
        let mut agent = tiny_agent(19);
        agent.update_temperature(3.0);
        assert_eq!(agent.log_temperature, 0.0);
    }

    #[test]
    fn soft_sync_blends_geometrically() {
        let mut agent = tiny_agent(21);
        // Hard copy at tau = 1.
        agent.hyper.tau = 1.0;
        agent.critics[0].params_mut()[0] = 5.0;
        agent.soft_sync();
        assert_eq!(agent.targets[0].params()[0], 5.0);
        // Frozen at tau = 0.
        agent.hyper.tau = 0.0;
        agent.critics[0].params_mut()[0] = -3.0;
        agent.soft_sync();
        assert_eq!(agent.targets[0].params()[0], 5.0);
        // Geometric approach at intermediate tau.
        agent.hyper.tau = 0.25;
        let target0 = agent.targets[0].params()[0];
        let critic0 = agent.critics[0].params()[0];
        let mut gap = target0 - critic0;
        for _ in 0..10 {
            agent.soft_sync();
            let new_gap = agent.targets[0].params()[0] - critic0;
            assert!((new_gap - 0.75 * gap).abs() < 1e-12);
            gap = new_gap;
        }
    }

    #[test]
    fn train_step_waits_for_minimal_buffer() {
        let mut agent = tiny_agent(23);
        fill_buffer(&mut agent, 3, 24);
        assert!(agent.train_step().unwrap().is_none());
        fill_buffer(&mut agent, 1, 25);
        assert!(agent.train_step().unwrap().is_some());
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let run = |seed: u64| -> Vec<f64> {
            let mut agent = tiny_agent(seed);
            fill_buffer(&mut agent, 8, 99);
            for _ in 0..20 {
                agent.train_step().unwrap();
            }
            let mut all = agent.policy.net.params().to_vec();
            all.extend_from_slice(agent.critics[0].params());
            all.extend_from_slice(agent.targets[1].params());
            all.push(agent.log_temperature);
            all
        };
        let a = run(31);
        let b = run(31);
        assert_eq!(a, b, "same seed must reproduce bit-identical parameters");
        let c = run(32);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_roundtrip_resumes_identically() {
        let mut agent = tiny_agent(41);
        fill_buffer(&mut agent, 8, 42);
        for _ in 0..5 {
            agent.train_step().unwrap();
        }
        let json = serde_json::to_string(&agent.checkpoint()).unwrap();
        let ck: Checkpoint = serde_json::from_str(&json).unwrap();
        let mut restored = tiny_agent(99);
        restored.restore(ck).unwrap();
        let s1 = agent.train_step().unwrap().unwrap();
        let s2 = restored.train_step().unwrap().unwrap();
        assert_eq!(s1, s2);
        assert_eq!(agent.policy.net.params(), restored.policy.net.params());
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let agent = tiny_agent(43);
        let mut ck = agent.checkpoint();
        ck.format_version = 999;
        let mut other = tiny_agent(44);
        assert!(other.restore(ck).is_err());
    }
}
