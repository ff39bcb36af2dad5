use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::advantage::{discounted_returns_bootstrapped, gae, normalize};
use super::policy::{states_array, GaussianPolicy, ValueFunction};
use super::rollout::Trajectory;
use crate::autodiff::{Adam, Array, Graph, Inputs, ParamId, ParameterStore};
use crate::math;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateConfig {
    pub delta_kl: f64,
    pub max_tries: usize,
    pub min_batch: usize,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            delta_kl: 0.01,
            max_tries: 10,
            min_batch: 1,
            gamma: 0.95,
            lambda: 0.95,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_kl > 0.0) {
            return Err(Error::InvalidArgument("delta_kl must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(
                "need 0 < gamma < 1 and 0 <= lambda <= 1".into(),
            ));
        }
        if self.max_tries == 0 {
            return Err(Error::InvalidArgument("max_tries must be positive".into()));
        }
        Ok(())
    }
}

/// Flattened training data for one policy and value update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyBatch {
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub log_probs: Vec<f64>,
    /// Normalized advantages.
    pub advantages: Vec<f64>,
    /// Discounted returns, bootstrapped at truncation.
    pub returns: Vec<f64>,
}

impl PolicyBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Scored trajectories to a batch. Every trajectory needs rewards.
    pub fn from_trajectories(
        trajs: &[&Trajectory],
        value: &ValueFunction,
        store: &ParameterStore,
        cfg: &UpdateConfig,
    ) -> Result<Self> {
        let mut batch = PolicyBatch::default();
        for t in trajs {
            if t.is_empty() {
                return Err(Error::EmptyTrajectory);
            }
            if t.rewards.len() != t.len() {
                return Err(Error::LengthMismatch(t.rewards.len(), t.len()));
            }
            let mut states = t.states.clone();
            states.push(t.final_state.clone());
            let mut v = value.predict(store, &states)?;
            let last = v.pop().unwrap_or(0.0);
            let boot = if t.terminated { 0.0 } else { last };
            batch
                .advantages
                .extend(gae(&t.rewards, &v, boot, cfg.gamma, cfg.lambda)?);
            batch.returns.extend(discounted_returns_bootstrapped(
                &t.rewards, cfg.gamma, boot,
            )?);
            batch.states.extend(t.states.iter().cloned());
            batch.actions.extend(t.actions.iter().cloned());
            batch.log_probs.extend(t.log_probs.iter().copied());
        }
        normalize(&mut batch.advantages);
        Ok(batch)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    pub accepted: bool,
    /// Measured mean KL(old || new) of the accepted step, else of the last try.
    pub kl: f64,
    pub surrogate_gain: f64,
    pub step_size: f64,
    pub tries: usize,
    pub grad_norm: f64,
}

fn snapshot(store: &ParameterStore, ids: &[ParamId]) -> Vec<Array> {
    ids.iter().map(|&id| store.value(id).clone()).collect()
}

fn set_step(
    store: &mut ParameterStore,
    ids: &[ParamId],
    base: &[Array],
    dir: &[Vec<f32>],
    alpha: f64,
) {
    for (k, &id) in ids.iter().enumerate() {
        let v = store.value_mut(id).data_mut();
        for (i, x) in v.iter_mut().enumerate() {
            *x = (base[k].data()[i] as f64 + alpha * dir[k][i] as f64) as f32;
        }
    }
}

fn restore(store: &mut ParameterStore, ids: &[ParamId], base: &[Array]) {
    for (k, &id) in ids.iter().enumerate() {
        *store.value_mut(id) = base[k].clone();
    }
}

struct Probe {
    kl: f64,
    surrogate: f64,
}

fn probe(
    policy: &GaussianPolicy,
    store: &ParameterStore,
    batch: &PolicyBatch,
    old_means: &[Vec<f32>],
    old_lp: &[f64],
    std: &[f64],
) -> Result<Option<Probe>> {
    let means = policy.means(store, &batch.states)?;
    let n = batch.len() as f64;
    let (mut kl, mut sur) = (0.0, 0.0);
    for i in 0..batch.len() {
        for j in 0..policy.act_dim {
            let d = means[i][j] as f64 - old_means[i][j] as f64;
            kl += d * d / (2.0 * std[j] * std[j]);
        }
        let lp = policy.log_prob(store, &means[i], &batch.actions[i]);
        sur += math::exp64(lp - old_lp[i]) * batch.advantages[i];
    }
    let (kl, sur) = (kl / n, sur / n);
    Ok((kl.is_finite() && sur.is_finite()).then_some(Probe { kl, surrogate: sur }))
}

/// Ascends the importance-weighted surrogate along its gradient. The step
/// is sized from a small probe step so the predicted KL equals `delta_kl`,
/// then halved until the measured KL fits and the surrogate improves.
/// Parameters are left unchanged when no try qualifies.
pub fn policy_update(
    policy: &GaussianPolicy,
    store: &mut ParameterStore,
    batch: &PolicyBatch,
    cfg: &UpdateConfig,
) -> Result<UpdateReport> {
    cfg.validate()?;
    let n = batch.len();
    if n < cfg.min_batch.max(1) {
        return Err(Error::InvalidArgument(format!(
            "policy batch of {n} below minimum {}",
            cfg.min_batch
        )));
    }
    let ids = policy.mean_ids();

    let mut g = Graph::<f32>::new();
    let s = g.input("states");
    let a = g.input("actions");
    let adv = g.input("adv");
    let lp = policy.log_prob_node(&mut g, s, a, n);
    let weighted = g.mul(lp, adv);
    let obj = g.mean(weighted);
    let adv_data: Vec<f32> = batch.advantages.iter().map(|&x| x as f32).collect();
    let inputs = Inputs::new()
        .with("states", states_array(&batch.states, policy.obs_dim)?)
        .with("actions", states_array(&batch.actions, policy.act_dim)?)
        .with("adv", Array::from_vec(adv_data));
    store.zero_grad_of(&ids);
    g.forward(store, &inputs)?;
    g.backward(obj, Array::scalar(1.0), store)?;

    let mut dir = Vec::with_capacity(ids.len());
    let mut norm2 = 0.0f64;
    for &id in &ids {
        let grad = store.grad(id).data();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(store.name(id).to_string()));
        }
        norm2 += grad.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
        dir.push(grad.to_vec());
    }
    let grad_norm = math::sqrt64(norm2);
    let mut report = UpdateReport {
        grad_norm,
        ..UpdateReport::default()
    };
    if grad_norm == 0.0 {
        return Ok(report);
    }

    let base = snapshot(store, &ids);
    let std = policy.std(store);
    let old_means = policy.means(store, &batch.states)?;
    let old_lp: Vec<f64> = (0..n)
        .map(|i| policy.log_prob(store, &old_means[i], &batch.actions[i]))
        .collect();
    let old_sur = batch.advantages.iter().sum::<f64>() / n as f64;

    let probe_alpha = 1e-3 / grad_norm;
    set_step(store, &ids, &base, &dir, probe_alpha);
    let mut alpha = match probe(policy, store, batch, &old_means, &old_lp, &std)? {
        // Aim slightly inside the budget; KL grows faster than quadratically
        // once relu units switch.
        Some(p) if p.kl > 0.0 => probe_alpha * math::sqrt64(0.9 * cfg.delta_kl / p.kl),
        _ => probe_alpha,
    };
    for t in 0..cfg.max_tries {
        set_step(store, &ids, &base, &dir, alpha);
        report.tries = t + 1;
        if let Some(p) = probe(policy, store, batch, &old_means, &old_lp, &std)? {
            report.kl = p.kl;
            report.surrogate_gain = p.surrogate - old_sur;
            if p.kl <= cfg.delta_kl && p.surrogate > old_sur {
                report.accepted = true;
                report.step_size = alpha;
                return Ok(report);
            }
        }
        alpha *= 0.5;
    }
    restore(store, &ids, &base);
    Ok(report)
}

/// One Adam step on the mean squared error between `V(s_t)` and the
/// batch returns. Returns the error after the step.
pub fn value_update(
    value: &ValueFunction,
    store: &mut ParameterStore,
    adam: &mut Adam,
    batch: &PolicyBatch,
    lr: f32,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = batch.len();
    let mut g = Graph::<f32>::new();
    let s = g.input("states");
    let target = g.input("returns");
    let v = value.node(&mut g, s);
    let v = g.reshape(v, &[n]);
    let diff = g.sub(v, target);
    let sq = g.square(diff);
    let mse = g.mean(sq);
    let returns: Vec<f32> = batch.returns.iter().map(|&x| x as f32).collect();
    let inputs = Inputs::new()
        .with("states", states_array(&batch.states, value.obs_dim)?)
        .with("returns", Array::from_vec(returns));
    store.zero_grad_of(adam.ids());
    g.forward(store, &inputs)?;
    g.backward(mse, Array::scalar(1.0), store)?;
    for &id in adam.ids() {
        if store.grad(id).data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(store.name(id).to_string()));
        }
    }
    adam.lr = lr;
    adam.step(store);
    g.forward(store, &inputs)?;
    Ok(g.value(mse).item() as f64)
}
