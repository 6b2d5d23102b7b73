//! Truncated Quantile Critics.
//!
//! Critics map `(state, squashed action)` to `N` quantile atoms. The critic
//! target pools the atoms of all target critics at the next state, drops the
//! largest ones and broadcasts the truncated mean (minus the entropy term) to
//! every atom. The actor is a tanh-squashed Gaussian trained by
//! reparameterization through the online critics.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::{softplus, Activation, DenseNet, Gradients, NetCheckpoint, OptimizerState};
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Which atoms are discarded when truncating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Pool all `K*N` atoms and drop the largest `K*drop_per_critic`.
    #[default]
    Pooled,
    /// Drop the largest `drop_per_critic` atoms of each critic separately.
    PerCritic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Temperature {
    /// Tuned toward the target entropy, starting from the given value.
    Auto(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TqcConfig {
    pub num_critics: usize,
    pub num_quantiles: usize,
    pub drop_per_critic: usize,
    pub truncation: Truncation,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub rho_polyak: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub temperature: Temperature,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub kappa: f64,
    pub buffer_capacity: usize,
    /// Uniformly random actions before the first update.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub episodes: usize,
    /// Episode cut-off in environment steps.
    pub max_episode_steps: usize,
    /// Rewards are multiplied by this before storage.
    pub reward_scale: f64,
    /// Reset every episode with the training seed instead of `seed + episode`.
    pub fixed_episode_seed: bool,
    /// Where to dump the agent if training diverges.
    pub divergence_checkpoint: Option<PathBuf>,
}

impl Default for TqcConfig {
    fn default() -> Self {
        Self {
            num_critics: 5,
            num_quantiles: 25,
            drop_per_critic: 2,
            truncation: Truncation::Pooled,
            hidden: vec![256, 256],
            gamma: 0.99,
            batch_size: 256,
            rho_polyak: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            temperature: Temperature::Auto(1.0),
            target_entropy: None,
            kappa: 1.0,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            updates_per_step: 1,
            episodes: 100,
            max_episode_steps: 10_000,
            reward_scale: 1.0,
            fixed_episode_seed: false,
            divergence_checkpoint: None,
        }
    }
}

impl TqcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_critics < 2 {
            return Err(Error::param("num_critics", "need at least two critics"));
        }
        if self.num_quantiles == 0 {
            return Err(Error::param("num_quantiles", "need at least one quantile"));
        }
        if self.drop_per_critic >= self.num_quantiles {
            return Err(Error::param("drop_per_critic", "must be below num_quantiles"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", "must lie in [0, 1]"));
        }
        if !(self.rho_polyak > 0.0 && self.rho_polyak <= 1.0) {
            return Err(Error::param("rho_polyak", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::param("batch_size", "batch and buffer must be nonempty"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::param("kappa", "must be positive"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::param(name, "must be finite and nonnegative"));
            }
        }
        match self.temperature {
            Temperature::Auto(a) | Temperature::Fixed(a) if !(a >= 0.0 && a.is_finite()) => {
                Err(Error::param("temperature", "must be finite and nonnegative"))
            }
            Temperature::Auto(0.0) => Err(Error::param("temperature", "auto-tuning needs a positive start")),
            _ => Ok(()),
        }
    }

    pub fn total_drop(&self) -> usize {
        self.num_critics * self.drop_per_critic
    }
}

/// Pools `values`, sorts ascending and averages all but the largest `d_trunc`.
pub fn truncated_mean<T: Scalar>(values: &[T], d_trunc: usize) -> Result<T> {
    if d_trunc >= values.len() {
        return Err(Error::param(
            "d_trunc",
            format!("{d_trunc} atoms dropped out of {}", values.len()),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let keep = values.len() - d_trunc;
    let sum = sorted[..keep].iter().fold(T::zero(), |acc, &v| acc + v);
    Ok(sum / T::lit(keep as f64))
}

/// Truncated mean of one row of `K*N` atoms (critic `j` occupies
/// `j*N..(j+1)*N`) and the weight of each atom in it.
fn truncated_row<T: Scalar>(atoms: ArrayView1<T>, k: usize, n: usize, drop: usize, mode: Truncation) -> (T, Vec<T>) {
    let by_value = |idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| atoms[a].partial_cmp(&atoms[b]).unwrap_or(std::cmp::Ordering::Equal))
    };
    let mut weights = vec![T::zero(); k * n];
    let kept: Vec<usize> = match mode {
        Truncation::Pooled => {
            let mut idx: Vec<usize> = (0..k * n).collect();
            by_value(&mut idx);
            idx.truncate(k * n - k * drop);
            idx
        }
        Truncation::PerCritic => (0..k)
            .flat_map(|j| {
                let mut idx: Vec<usize> = (j * n..(j + 1) * n).collect();
                by_value(&mut idx);
                idx.truncate(n - drop);
                idx
            })
            .collect(),
    };
    let w = T::one() / T::lit(kept.len() as f64);
    let mut sum = T::zero();
    for &i in &kept {
        weights[i] = w;
        sum += atoms[i];
    }
    (sum * w, weights)
}

/// `R + gamma (1 - done) (q_trunc - alpha logpi_next)`.
pub fn critic_target<T: Scalar>(reward: T, gamma: T, done: bool, q_trunc: T, alpha: T, logp_next: T) -> T {
    if done {
        reward
    } else {
        reward + gamma * (q_trunc - alpha * logp_next)
    }
}

fn huber<T: Scalar>(u: T, kappa: T) -> T {
    let a = u.abs();
    if a <= kappa {
        T::lit(0.5) * u * u
    } else {
        kappa * (a - T::lit(0.5) * kappa)
    }
}

/// `|tau - 1{u < 0}| H_kappa(u) / kappa` with `u = y - z`.
pub fn quantile_huber_loss<T: Scalar>(z: T, y: T, tau: T, kappa: T) -> T {
    let u = y - z;
    let indicator = if u < T::zero() { T::one() } else { T::zero() };
    (tau - indicator).abs() * huber(u, kappa) / kappa
}

/// Derivative of [`quantile_huber_loss`] with respect to `z`.
pub fn quantile_huber_grad<T: Scalar>(z: T, y: T, tau: T, kappa: T) -> T {
    let u = y - z;
    let indicator = if u < T::zero() { T::one() } else { T::zero() };
    -(tau - indicator).abs() * u.max(-kappa).min(kappa) / kappa
}

/// Quantile fractions `(2i - 1) / 2N`, `i = 1..N`.
pub fn quantile_fractions<T: Scalar>(n: usize) -> Vec<T> {
    (1..=n).map(|i| T::lit((2 * i - 1) as f64 / (2 * n) as f64)).collect()
}

/// Mean over the batch of the atom-summed quantile Huber loss of one critic
/// against scalar targets `y`, with its parameter gradients.
pub fn critic_loss_grad<T: Scalar>(
    net: &DenseNet<T>,
    states: ArrayView2<T>,
    actions: ArrayView2<T>,
    y: ArrayView1<T>,
    kappa: T,
) -> Result<(T, Gradients<T>)> {
    let input = concatenate![Axis(1), states, actions];
    let trace = net.forward_trace(input.view())?;
    let z = trace.output();
    let (batch, n) = z.dim();
    let taus = quantile_fractions::<T>(n);
    let inv_b = T::one() / T::lit(batch as f64);
    let mut loss = T::zero();
    let mut dz = Array2::zeros((batch, n));
    for b in 0..batch {
        for i in 0..n {
            loss += quantile_huber_loss(z[[b, i]], y[b], taus[i], kappa);
            dz[[b, i]] = quantile_huber_grad(z[[b, i]], y[b], taus[i], kappa) * inv_b;
        }
    }
    let (grads, _) = net.backward(&trace, dz.view())?;
    Ok((loss * inv_b, grads))
}

/// Tanh-squashed Gaussian policy over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticActor<T> {
    pub net: DenseNet<T>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Reparameterized draw for a batch of states.
#[derive(Debug, Clone)]
pub struct ActorSample<T> {
    /// Squashed actions in `[-1, 1]`.
    pub actions: Array2<T>,
    pub log_prob: Array1<T>,
}

impl<T: Scalar> StochasticActor<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, low: Vec<f64>, high: Vec<f64>, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::param("action_bounds", "low and high must be nonempty and equal length"));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l <= h)) {
            return Err(Error::param("action_bounds", "low must not exceed high"));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend(hidden);
        sizes.push(2 * low.len());
        let net = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self { net, low, high })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    /// Maps squashed actions in `[-1, 1]` onto the action box.
    pub fn to_env(&self, squashed: &[T]) -> Vec<f64> {
        squashed
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&t, (&lo, &hi))| {
                let t = t.to_f64_lossy().clamp(-1.0, 1.0);
                (lo + 0.5 * (t + 1.0) * (hi - lo)).clamp(lo, hi)
            })
            .collect()
    }

    /// Mean action `tanh(mu)` for one state.
    pub fn deterministic(&self, state: &[T]) -> Result<Vec<T>> {
        let out = self.net.forward_one(state)?;
        Ok(out[..self.action_dim()].iter().map(|m| m.tanh()).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, states: ArrayView2<T>, rng: &mut R) -> Result<ActorSample<T>> {
        let eps = Array2::from_shape_simple_fn((states.nrows(), self.action_dim()), || T::sample_standard_normal(rng));
        let out = self.net.forward(states)?;
        let pass = squash(&out, eps.view(), self.action_dim());
        Ok(ActorSample {
            actions: pass.t,
            log_prob: pass.log_prob,
        })
    }
}

struct Squashed<T> {
    t: Array2<T>,
    log_prob: Array1<T>,
    std_eps: Array2<T>,
    in_range: Array2<bool>,
}

fn squash<T: Scalar>(out: &Array2<T>, eps: ArrayView2<T>, a: usize) -> Squashed<T> {
    let batch = out.nrows();
    let half_log_2pi = T::lit(0.5 * (std::f64::consts::TAU).ln());
    let ln2 = T::lit(std::f64::consts::LN_2);
    let two = T::lit(2.0);
    let mut t = Array2::zeros((batch, a));
    let mut std_eps = Array2::zeros((batch, a));
    let mut in_range = Array2::from_elem((batch, a), true);
    let mut log_prob = Array1::zeros(batch);
    for b in 0..batch {
        let mut lp = T::zero();
        for j in 0..a {
            let raw = out[[b, a + j]];
            let lo = T::lit(LOG_STD_MIN);
            let hi = T::lit(LOG_STD_MAX);
            in_range[[b, j]] = raw >= lo && raw <= hi;
            let log_std = raw.max(lo).min(hi);
            let e = eps[[b, j]];
            let se = log_std.exp() * e;
            let u = out[[b, j]] + se;
            t[[b, j]] = u.tanh();
            std_eps[[b, j]] = se;
            // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
            let log_jac = two * (ln2 - u - softplus(-two * u));
            lp += -T::lit(0.5) * e * e - log_std - half_log_2pi - log_jac;
        }
        log_prob[b] = lp;
    }
    Squashed {
        t,
        log_prob,
        std_eps,
        in_range,
    }
}

/// Loss, gradients and policy log-probabilities of one actor update.
#[derive(Debug, Clone)]
pub struct ActorPass<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub log_prob: Array1<T>,
}

/// Mean over the batch of `alpha logpi(a|s) - Q_trunc(s, a)`, with `a`
/// reparameterized by the fixed noise `eps` and `Q_trunc` the truncated mean
/// of the online critics' atoms. Critic parameters are not updated.
#[allow(clippy::too_many_arguments)]
pub fn actor_loss_grad<T: Scalar>(
    actor: &StochasticActor<T>,
    critics: &[DenseNet<T>],
    states: ArrayView2<T>,
    eps: ArrayView2<T>,
    alpha: T,
    drop_per_critic: usize,
    mode: Truncation,
) -> Result<ActorPass<T>> {
    let a = actor.action_dim();
    let batch = states.nrows();
    if eps.dim() != (batch, a) {
        return Err(Error::Shape {
            expected: batch * a,
            got: eps.len(),
        });
    }
    let trace = actor.net.forward_trace(states)?;
    let sq = squash(trace.output(), eps, a);
    let input = concatenate![Axis(1), states, sq.t.view()];
    let obs_dim = states.ncols();
    let k = critics.len();
    let traces = critics
        .iter()
        .map(|c| c.forward_trace(input.view()))
        .collect::<Result<Vec<_>>>()?;
    let n = traces[0].output().ncols();
    let atoms = concatenate(Axis(1), &traces.iter().map(|t| t.output().view()).collect::<Vec<_>>())
        .map_err(|e| Error::Shape {
            expected: k * n,
            got: e.to_string().len(),
        })?;
    let inv_b = T::one() / T::lit(batch as f64);

    let mut loss = T::zero();
    let mut atom_grad = Array2::zeros((batch, k * n));
    for b in 0..batch {
        let (q, w) = truncated_row(atoms.row(b), k, n, drop_per_critic, mode);
        loss += alpha * sq.log_prob[b] - q;
        for (i, wi) in w.into_iter().enumerate() {
            atom_grad[[b, i]] = -wi * inv_b;
        }
    }
    // dL/dt through the critics.
    let mut dt = Array2::<T>::zeros((batch, a));
    for (j, (c, tr)) in critics.iter().zip(&traces).enumerate() {
        let g = atom_grad.slice(s![.., j * n..(j + 1) * n]);
        let (_, gx) = c.backward(tr, g)?;
        dt += &gx.slice(s![.., obs_dim..]);
    }
    let two = T::lit(2.0);
    let mut dout = Array2::zeros((batch, 2 * a));
    for b in 0..batch {
        for j in 0..a {
            let t = sq.t[[b, j]];
            let se = sq.std_eps[[b, j]];
            let du = dt[[b, j]] * (T::one() - t * t);
            // d logpi / du = 2 tanh(u); d logpi / dlog_std = -1 + (2 tanh(u)) std eps
            let dlogp_du = two * t;
            dout[[b, j]] = du + alpha * dlogp_du * inv_b;
            if sq.in_range[[b, j]] {
                dout[[b, a + j]] = du * se + alpha * (-T::one() + dlogp_du * se) * inv_b;
            }
        }
    }
    let (grads, _) = actor.net.backward(&trace, dout.view())?;
    Ok(ActorPass {
        loss: loss * inv_b,
        grads,
        log_prob: sq.log_prob,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    /// Squashed action in `[-1, 1]`.
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub dones: Vec<bool>,
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    data: Vec<Transition<T>>,
    next: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.data.len() < self.capacity { 0 } else { self.next };
        self.data[split..].iter().chain(&self.data[..split])
    }

    /// Draws `size` stored transitions uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch<T>> {
        if self.data.is_empty() {
            return Err(Error::Training("sampling an empty replay buffer".into()));
        }
        let picks: Vec<&Transition<T>> = (0..size).map(|_| &self.data[rng.random_range(0..self.data.len())]).collect();
        let rows = |f: &dyn Fn(&Transition<T>) -> &Vec<T>| {
            let width = f(picks[0]).len();
            Array2::from_shape_vec((size, width), picks.iter().flat_map(|t| f(t).iter().copied()).collect())
                .expect("uniform transition widths")
        };
        Ok(Batch {
            states: rows(&|t| &t.state),
            actions: rows(&|t| &t.action),
            rewards: picks.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state),
            dones: picks.iter().map(|t| t.done).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct QuantileCriticEnsemble<T> {
    pub online: Vec<DenseNet<T>>,
    pub target: Vec<DenseNet<T>>,
    pub num_quantiles: usize,
}

impl<T: Scalar> QuantileCriticEnsemble<T> {
    pub fn new<R: Rng + ?Sized>(k: usize, n: usize, input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if k < 2 || n == 0 {
            return Err(Error::param("num_critics", "need K >= 2 critics and N >= 1 quantiles"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(hidden);
        sizes.push(n);
        let online = (0..k)
            .map(|_| DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            target: online.clone(),
            online,
            num_quantiles: n,
        })
    }

    /// Atoms of all `nets` at `(states, actions)`, shape `(batch, K*N)`.
    pub fn atoms(nets: &[DenseNet<T>], states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>> {
        let input = concatenate![Axis(1), states, actions];
        let outs = nets.iter().map(|c| c.forward(input.view())).collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        concatenate(Axis(1), &views).map_err(|e| Error::Training(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

/// Learner state: actor, critics, their targets, optimizers and buffer.
#[derive(Debug, Clone)]
pub struct Tqc<T> {
    pub cfg: TqcConfig,
    pub actor: StochasticActor<T>,
    pub target_actor: StochasticActor<T>,
    pub critics: QuantileCriticEnsemble<T>,
    pub buffer: ReplayBuffer<T>,
    actor_opt: OptimizerState<T>,
    critic_opts: Vec<OptimizerState<T>>,
    alpha_opt: OptimizerState<T>,
    log_alpha: T,
    target_entropy: T,
    rng: ChaCha8Rng,
    updates: u64,
}

impl<T: Scalar> Tqc<T> {
    pub fn new(cfg: TqcConfig, obs_dim: usize, low: Vec<f64>, high: Vec<f64>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = StochasticActor::new(obs_dim, low, high, &cfg.hidden, &mut rng)?;
        let a = actor.action_dim();
        let critics = QuantileCriticEnsemble::new(cfg.num_critics, cfg.num_quantiles, obs_dim + a, &cfg.hidden, &mut rng)?;
        let alpha0 = match cfg.temperature {
            Temperature::Auto(v) | Temperature::Fixed(v) => v,
        };
        Ok(Self {
            actor_opt: OptimizerState::for_net(&actor.net, T::lit(cfg.actor_lr)),
            critic_opts: critics.online.iter().map(|c| OptimizerState::for_net(c, T::lit(cfg.critic_lr))).collect(),
            alpha_opt: OptimizerState::adam(1, T::lit(cfg.alpha_lr)),
            log_alpha: T::lit(alpha0.ln()),
            target_entropy: T::lit(cfg.target_entropy.unwrap_or(-(a as f64))),
            target_actor: actor.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            actor,
            critics,
            rng,
            updates: 0,
            cfg,
        })
    }

    pub fn alpha(&self) -> T {
        match self.cfg.temperature {
            Temperature::Fixed(a) => T::lit(a),
            Temperature::Auto(_) => self.log_alpha.exp(),
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.net.input_dim()
    }

    /// Squashed action for `state`: a policy draw, or `tanh(mean)` when
    /// `deterministic`.
    pub fn act(&mut self, state: &[T], deterministic: bool) -> Result<Vec<T>> {
        if deterministic {
            return self.actor.deterministic(state);
        }
        let view = ArrayView2::from_shape((1, state.len()), state).map_err(|_| Error::Shape {
            expected: self.obs_dim(),
            got: state.len(),
        })?;
        Ok(self.actor.sample(view, &mut self.rng)?.actions.into_raw_vec_and_offset().0)
    }

    pub fn random_action(&mut self) -> Vec<T> {
        (0..self.actor.action_dim())
            .map(|_| T::lit(self.rng.random_range(-1.0..=1.0)))
            .collect()
    }

    /// One critic, actor, temperature and target update on a sampled batch.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng)?;
        let alpha = self.alpha();
        let k = self.cfg.num_critics;
        let n = self.cfg.num_quantiles;

        // Targets use only the target actor and target critics.
        let next = self.target_actor.sample(batch.next_states.view(), &mut self.rng)?;
        let next_atoms = QuantileCriticEnsemble::atoms(&self.critics.target, batch.next_states.view(), next.actions.view())?;
        let gamma = T::lit(self.cfg.gamma);
        let y: Array1<T> = (0..batch.rewards.len())
            .map(|b| {
                let (q, _) = truncated_row(next_atoms.row(b), k, n, self.cfg.drop_per_critic, self.cfg.truncation);
                critic_target(batch.rewards[b], gamma, batch.dones[b], q, alpha, next.log_prob[b])
            })
            .collect();

        let kappa = T::lit(self.cfg.kappa);
        let mut critic_loss = 0.0;
        for (net, opt) in self.critics.online.iter_mut().zip(&mut self.critic_opts) {
            let (loss, grads) = critic_loss_grad(net, batch.states.view(), batch.actions.view(), y.view(), kappa)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite critic loss at update {}", self.updates)));
            }
            critic_loss += loss.to_f64_lossy() / k as f64;
            opt.step_net(net, &grads)?;
        }

        let eps = Array2::from_shape_simple_fn((batch.states.nrows(), self.actor.action_dim()), || {
            T::sample_standard_normal(&mut self.rng)
        });
        let pass = actor_loss_grad(
            &self.actor,
            &self.critics.online,
            batch.states.view(),
            eps.view(),
            alpha,
            self.cfg.drop_per_critic,
            self.cfg.truncation,
        )?;
        if !pass.loss.is_finite() {
            return Err(Error::Training(format!("non-finite actor loss at update {}", self.updates)));
        }
        self.actor_opt.step_net(&mut self.actor.net, &pass.grads)?;

        let mean_logp = pass.log_prob.mean().unwrap_or(T::zero());
        if let Temperature::Auto(_) = self.cfg.temperature {
            // J(log alpha) = -log alpha * mean(logpi + target_entropy)
            let g = -(mean_logp + self.target_entropy);
            let mut p = [self.log_alpha];
            self.alpha_opt.step_slice(&mut p, &[g])?;
            self.log_alpha = p[0];
        }

        let rho = T::lit(self.cfg.rho_polyak);
        for (t, o) in self.critics.target.iter_mut().zip(&self.critics.online) {
            t.soft_update_from(o, rho)?;
        }
        self.target_actor.net.soft_update_from(&self.actor.net, rho)?;
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: pass.loss.to_f64_lossy(),
            alpha: self.alpha().to_f64_lossy(),
            entropy: -mean_logp.to_f64_lossy(),
        })
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            version: crate::nn::CHECKPOINT_VERSION,
            action_low: self.actor.low.clone(),
            action_high: self.actor.high.clone(),
            actor: self.actor.net.to_checkpoint(),
            target_actor: self.target_actor.net.to_checkpoint(),
            critics: self.critics.online.iter().map(DenseNet::to_checkpoint).collect(),
            target_critics: self.critics.target.iter().map(DenseNet::to_checkpoint).collect(),
            log_alpha: self.log_alpha.to_f64_lossy(),
            updates: self.updates,
        }
    }
}

/// Serialized learner networks (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub actor: NetCheckpoint,
    pub target_actor: NetCheckpoint,
    pub critics: Vec<NetCheckpoint>,
    pub target_critics: Vec<NetCheckpoint>,
    pub log_alpha: f64,
    pub updates: u64,
}

impl AgentCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.version != crate::nn::CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn actor<T: Scalar>(&self) -> Result<StochasticActor<T>> {
        Ok(StochasticActor {
            net: DenseNet::from_checkpoint(&self.actor)?,
            low: self.action_low.clone(),
            high: self.action_high.clone(),
        })
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub drops: usize,
    pub collisions: usize,
    pub energy_violations: usize,
    pub wall_time: f64,
}

/// SHA-256 over every log field except wall time.
pub fn log_checksum(log: &[EpisodeLog]) -> String {
    let mut h = Sha256::new();
    for e in log {
        h.update(e.episode.to_le_bytes());
        h.update(e.episode_return.to_le_bytes());
        h.update(e.avg_aoi.to_le_bytes());
        h.update(e.min_sss.to_le_bytes());
        h.update(e.drops.to_le_bytes());
        h.update(e.collisions.to_le_bytes());
        h.update(e.energy_violations.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn log_to_csv(log: &[EpisodeLog]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in log {
        w.serialize(e).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub struct TrainOutcome<T> {
    pub agent: Tqc<T>,
    pub log: Vec<EpisodeLog>,
}

fn to_scalar<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

/// Collect-and-learn loop: one environment step, then `updates_per_step`
/// gradient updates once warm-up is over and a full batch is stored.
/// Episode `e` resets the environment with seed `seed + e` (or `seed` when
/// `fixed_episode_seed` is set).
pub fn train<T: Scalar, E: Environment>(env: &mut E, cfg: TqcConfig, seed: u64) -> Result<TrainOutcome<T>> {
    let (low, high) = env.action_bounds();
    let mut agent = Tqc::<T>::new(cfg.clone(), env.observation_dim(), low, high, seed)?;
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut total_steps = 0usize;
    let started = Instant::now();
    let scale = T::lit(cfg.reward_scale);
    for episode in 0..cfg.episodes {
        let episode_seed = if cfg.fixed_episode_seed { seed } else { seed.wrapping_add(episode as u64) };
        let mut obs: Vec<T> = to_scalar(&env.reset(episode_seed));
        let mut ret = 0.0;
        for _ in 0..cfg.max_episode_steps {
            let action = if total_steps < cfg.warmup_steps {
                agent.random_action()
            } else {
                agent.act(&obs, false)?
            };
            let step = env.step(&agent.actor.to_env(&action))?;
            ret += step.reward;
            let next: Vec<T> = to_scalar(&step.observation);
            agent.buffer.push(Transition {
                state: obs,
                action,
                reward: T::lit(step.reward) * scale,
                next_state: next.clone(),
                done: step.done,
            });
            obs = next;
            total_steps += 1;
            if total_steps >= cfg.warmup_steps && agent.buffer.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    if let Err(e) = agent.update() {
                        if let Some(path) = &cfg.divergence_checkpoint {
                            agent.checkpoint().save(path)?;
                            log::error!("training aborted at episode {episode}; agent written to {}", path.display());
                        }
                        return Err(e);
                    }
                }
            }
            if step.done {
                break;
            }
        }
        let summary = env.episode_summary();
        let entry = EpisodeLog {
            episode,
            episode_return: ret,
            avg_aoi: summary.avg_aoi,
            min_sss: summary.min_sss,
            drops: summary.drops,
            collisions: summary.collisions,
            energy_violations: summary.energy_violations,
            wall_time: started.elapsed().as_secs_f64(),
        };
        log::debug!("episode {episode}: return {ret:.3}, alpha {:.4}", agent.alpha().to_f64_lossy());
        log.push(entry);
    }
    Ok(TrainOutcome { agent, log })
}

/// One-step environment with reward `-(a - optimum)^2` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub optimum: f64,
}

impl Environment for BanditEnv {
    fn observation_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0], vec![1.0])
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<crate::env::EnvStep> {
        if action.len() != 1 {
            return Err(Error::Shape {
                expected: 1,
                got: action.len(),
            });
        }
        Ok(crate::env::EnvStep {
            observation: vec![0.0],
            reward: -(action[0] - self.optimum).powi(2),
            done: true,
        })
    }
}
