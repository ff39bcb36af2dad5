use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Array, Graph, Inputs, NodeId, ParamId, ParameterStore};
use crate::env::{PoseState, J};
use crate::math::{self, Real};
use crate::nn::Dense;
use crate::rng::normal;
use crate::{Error, Result};

/// Width of [`observe`]'s output.
pub const OBS_DIM: usize = 2 * J + 4;

/// Policy input: angles, scaled velocities, hip height and vertical speed,
/// and the clock phase as a point on the unit circle. No pixels.
pub fn observe(pose: &PoseState) -> Vec<f32> {
    let mut s = Vec::with_capacity(OBS_DIM);
    s.extend_from_slice(&pose.angles);
    s.extend(pose.velocities.iter().map(|v| 0.1 * v));
    s.push(pose.root[1]);
    s.push(0.1 * pose.root_vel[1]);
    let w = 2.0 * core::f32::consts::PI * pose.phase;
    s.push(math::sin(w));
    s.push(math::cos(w));
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    /// Multiplier on the final layer's initial weights.
    pub out_init_scale: f32,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: alloc::vec![512, 256],
            out_init_scale: 0.01,
        }
    }
}

impl MlpConfig {
    pub fn small() -> Self {
        Self {
            hidden: alloc::vec![64, 64],
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        inputs: usize,
        outputs: usize,
        cfg: &MlpConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument(
                "hidden sizes must be positive".into(),
            ));
        }
        let mut layers = Vec::new();
        let mut width = inputs;
        for (i, &h) in cfg.hidden.iter().enumerate() {
            layers.push(Dense::register(
                store,
                &format!("{prefix}.l{i}"),
                width,
                h,
                rng,
            )?);
            width = h;
        }
        let out = Dense::register(store, &format!("{prefix}.out"), width, outputs, rng)?;
        for v in store.value_mut(out.w).data_mut() {
            *v *= cfg.out_init_scale;
        }
        layers.push(out);
        Ok(Self { layers })
    }

    fn apply<T: Real>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.apply(g, h);
            if i < last {
                h = g.relu(h);
            }
        }
        h
    }

    fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }
}

pub(crate) fn states_array<T: Real>(rows: &[Vec<f32>], width: usize) -> Result<Array<T>> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::LengthMismatch(r.len(), width));
        }
        data.extend(r.iter().map(|&v| T::from_f32(v)));
    }
    Array::new(alloc::vec![rows.len(), width], data)
}

/// `a ~ N(mu(s), diag(sigma^2))` with a state-independent `log_std`.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    mean: Mlp,
    pub log_std: ParamId,
    pub obs_dim: usize,
    pub act_dim: usize,
}

pub const POLICY_PREFIX: &str = "policy";

impl GaussianPolicy {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        obs_dim: usize,
        act_dim: usize,
        cfg: &MlpConfig,
        init_std: f32,
        rng: &mut R,
    ) -> Result<Self> {
        if !(init_std > 0.0) || !init_std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "init_std must be positive, got {init_std}"
            )));
        }
        let mean = Mlp::register(
            store,
            &format!("{POLICY_PREFIX}.mean"),
            obs_dim,
            act_dim,
            cfg,
            rng,
        )?;
        let log_std = store.insert(
            &format!("{POLICY_PREFIX}.log_std"),
            Array::filled(&[act_dim], math::ln(init_std)),
        )?;
        Ok(Self {
            mean,
            log_std,
            obs_dim,
            act_dim,
        })
    }

    /// Parameters of the mean network. `log_std` is held fixed by training.
    pub fn mean_ids(&self) -> Vec<ParamId> {
        self.mean.ids()
    }

    pub fn mean_node<T: Real>(&self, g: &mut Graph<T>, states: NodeId) -> NodeId {
        self.mean.apply(g, states)
    }

    /// Per-row log densities `[N]` of `actions` under the policy at `states`.
    pub fn log_prob_node<T: Real>(
        &self,
        g: &mut Graph<T>,
        states: NodeId,
        actions: NodeId,
        n: usize,
    ) -> NodeId {
        let mu = self.mean_node(g, states);
        let diff = g.sub(actions, mu);
        let ls = g.param(self.log_std);
        let neg = g.scale(ls, -1.0);
        let inv = g.exp(neg);
        let inv = g.broadcast_rows(inv, n);
        let z = g.mul(diff, inv);
        let sq = g.square(z);
        let q = g.sum_last(sq);
        let half_log_2pi = 0.5 * math::ln(2.0 * core::f32::consts::PI);
        let base = g.affine(q, -0.5, -(self.act_dim as f32) * half_log_2pi);
        let lsum = g.sum(ls);
        let lsum = g.broadcast_rows(lsum, n);
        let lsum = g.reshape(lsum, &[n]);
        g.sub(base, lsum)
    }

    pub fn std(&self, store: &ParameterStore) -> Vec<f64> {
        store
            .value(self.log_std)
            .data()
            .iter()
            .map(|&l| math::exp64(l as f64))
            .collect()
    }

    /// Mean actions for a batch of states.
    pub fn means(&self, store: &ParameterStore, states: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::<f32>::new();
        let s = g.input("states");
        let mu = self.mean_node(&mut g, s);
        let inputs = Inputs::new().with("states", states_array(states, self.obs_dim)?);
        let out = g.run(store, &inputs, mu)?;
        Ok((0..states.len()).map(|i| out.row(i).to_vec()).collect())
    }

    /// Exact diagonal-Gaussian log density, evaluated in f64.
    pub fn log_prob(&self, store: &ParameterStore, mean: &[f32], action: &[f32]) -> f64 {
        let std = self.std(store);
        let half_log_2pi = 0.5 * math::ln64(2.0 * core::f64::consts::PI);
        (0..self.act_dim)
            .map(|i| {
                let z = (action[i] as f64 - mean[i] as f64) / std[i];
                -0.5 * z * z - math::ln64(std[i]) - half_log_2pi
            })
            .sum()
    }

    /// Draws `mu + sigma * n` and returns it with its log density.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        store: &ParameterStore,
        state: &[f32],
        rng: &mut R,
    ) -> Result<(Vec<f32>, f64)> {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite policy state".into()));
        }
        let mu = self.means(store, &[state.to_vec()])?.remove(0);
        let std = self.std(store);
        let a: Vec<f32> = mu
            .iter()
            .zip(&std)
            .map(|(&m, &s)| (m as f64 + s * normal(rng) as f64) as f32)
            .collect();
        let lp = self.log_prob(store, &mu, &a);
        Ok((a, lp))
    }
}

/// State-value regressor `V(s)`.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    net: Mlp,
    pub obs_dim: usize,
}

pub const VALUE_PREFIX: &str = "value";

impl ValueFunction {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        obs_dim: usize,
        cfg: &MlpConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let cfg = MlpConfig {
            out_init_scale: 1.0,
            ..cfg.clone()
        };
        let net = Mlp::register(store, VALUE_PREFIX, obs_dim, 1, &cfg, rng)?;
        Ok(Self { net, obs_dim })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.net.ids()
    }

    /// `[N, 1]` predictions.
    pub fn node<T: Real>(&self, g: &mut Graph<T>, states: NodeId) -> NodeId {
        self.net.apply(g, states)
    }

    pub fn predict(&self, store: &ParameterStore, states: &[Vec<f32>]) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::<f32>::new();
        let s = g.input("states");
        let v = self.node(&mut g, s);
        let inputs = Inputs::new().with("states", states_array(states, self.obs_dim)?);
        Ok(g.run(store, &inputs, v)?
            .data()
            .iter()
            .map(|&x| x as f64)
            .collect())
    }
}
