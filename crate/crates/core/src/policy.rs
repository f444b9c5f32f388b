//! Node-selection policy: epsilon-greedy DQN over weight-space states, FIFO
//! replay memory, and TD(0) targets.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{AdamState, DqnModelSpec, ModelWeights};
use crate::nn::loss::mse;
use crate::state::SystemState;
use crate::{Error, Result, Scalar, Tensor};

/// Selection reward: `base^(val_acc - goal_acc) - distance - 1`. The
/// exponential term approaches 1 as the model nears the goal, the distance
/// term charges the hop to the chosen node, and the constant charges the
/// round itself.
pub fn compute_reward(val_acc: f64, goal_acc: f64, distance: f64, base: f64) -> f64 {
    base.powf(val_acc - goal_acc) - distance - 1.0
}

/// Discounted return `sum_t discount^t * rewards[t]` (t zero-based).
pub fn episode_return(rewards: &[f64], discount: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for &r in rewards {
        total += weight * r;
        weight *= discount;
    }
    total
}

/// One multiplicative epsilon decay step: `epsilon * e^(-decay)`.
pub fn decay_epsilon(epsilon: f64, decay: f64) -> f64 {
    epsilon * (-decay).exp()
}

/// Exploration schedule starting at 1.0 and decaying once per episode, so
/// after `T` episodes epsilon equals `e^(-decay * T)` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn new(decay: f64) -> Self {
        Self {
            epsilon: 1.0,
            decay,
        }
    }

    pub fn decay_once(&mut self) {
        self.epsilon = decay_epsilon(self.epsilon, self.decay);
    }
}

/// One stored interaction. `next_state` is the state observed after training
/// the chosen node; `terminal` marks episode ends, where targets skip the
/// bootstrap term.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub state: SystemState<T>,
    pub action: usize,
    pub reward: f64,
    pub next_state: SystemState<T>,
    pub terminal: bool,
}

/// FIFO replay buffer. Training is a no-op until `min_fill` transitions have
/// arrived; once `capacity` is reached the oldest transition is evicted per
/// push.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    min_fill: usize,
    buf: VecDeque<Transition<T>>,
}

impl<T: Scalar> ReplayMemory<T> {
    pub fn new(capacity: usize, min_fill: usize) -> Result<Self> {
        if capacity == 0 || min_fill == 0 || min_fill > capacity {
            return Err(Error::InvalidConfig(format!(
                "replay memory needs 0 < min_fill <= capacity, got {min_fill}/{capacity}"
            )));
        }
        Ok(Self {
            capacity,
            min_fill,
            buf: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_fill(&self) -> usize {
        self.min_fill
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_ready(&self) -> bool {
        self.buf.len() >= self.min_fill
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.buf.iter()
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    /// Uniform sample of `min(batch, len)` distinct indices.
    fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let amount = batch.min(self.buf.len());
        rand::seq::index::sample(rng, self.buf.len(), amount).into_vec()
    }
}

/// Agent hyperparameters. Defaults follow the nominal scenario; the update
/// cadence applies one DQN fit per round ("step") or one per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub discount: f64,
    pub epsilon_decay: f64,
    pub dqn_batch: usize,
    pub dqn_epochs: usize,
    pub dqn_learning_rate: f64,
    pub replay_capacity: usize,
    pub replay_min_fill: usize,
    /// Base of the exponential accuracy term in the reward.
    pub reward_base: f64,
    pub update_cadence: UpdateCadence,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            epsilon_decay: 0.02,
            dqn_batch: 32,
            dqn_epochs: 1,
            dqn_learning_rate: 0.001,
            replay_capacity: 50_000,
            replay_min_fill: 128,
            reward_base: 32.0,
            update_cadence: UpdateCadence::Step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateCadence {
    Step,
    Episode,
}

/// The node selector: DQN weights, optimizer, and replay memory.
#[derive(Debug, Clone)]
pub struct Agent<T> {
    pub spec: DqnModelSpec,
    pub weights: ModelWeights<T>,
    pub adam: AdamState<T>,
    pub memory: ReplayMemory<T>,
    pub config: AgentConfig,
}

impl<T: Scalar> Agent<T> {
    pub fn new(nodes: usize, config: AgentConfig, init_seed: u64) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidConfig("agent needs nodes >= 1".into()));
        }
        let spec = DqnModelSpec::for_nodes(nodes);
        let weights = spec.init_weights(init_seed);
        let adam = AdamState::new(weights.len(), config.dqn_learning_rate);
        let memory = ReplayMemory::new(config.replay_capacity, config.replay_min_fill)?;
        Ok(Self {
            spec,
            weights,
            adam,
            memory,
            config,
        })
    }

    /// Rebuilds an agent around existing weights (checkpoint restore). The
    /// optimizer and memory start fresh; only weights ship in checkpoints.
    pub fn with_weights(
        weights: ModelWeights<T>,
        nodes: usize,
        config: AgentConfig,
    ) -> Result<Self> {
        let spec = DqnModelSpec::for_nodes(nodes);
        if weights.layout() != &spec.layout() {
            return Err(Error::CheckpointMismatch(format!(
                "weight vector of {} values does not fit a {}-node selector ({})",
                weights.len(),
                nodes,
                spec.param_count()
            )));
        }
        let adam = AdamState::new(weights.len(), config.dqn_learning_rate);
        let memory = ReplayMemory::new(config.replay_capacity, config.replay_min_fill)?;
        Ok(Self {
            spec,
            weights,
            adam,
            memory,
            config,
        })
    }

    fn state_tensor(&self, state: &SystemState<T>) -> Result<Tensor<T>> {
        Tensor::new(vec![1, self.spec.input_dim], state.values().to_vec())
    }

    /// Q-values of one state.
    pub fn q_values(&self, state: &SystemState<T>) -> Result<Vec<T>> {
        let (q, _) = self.spec.forward(&self.weights, &self.state_tensor(state)?)?;
        Ok(q.into_data())
    }

    /// Greedy action: argmax over Q-values, ties to the lowest node id.
    /// Consults no randomness.
    pub fn select_greedy(&self, state: &SystemState<T>) -> Result<usize> {
        let q = self.q_values(state)?;
        let mut best = 0usize;
        for (j, &v) in q.iter().enumerate().skip(1) {
            if v > q[best] {
                best = j;
            }
        }
        Ok(best)
    }

    /// Epsilon-greedy pick: draws `u` uniform in `[0,1)`; exploits the greedy
    /// argmax when `u > epsilon`, otherwise explores uniformly over all nodes
    /// (staying put is allowed). Returns the node and whether it explored.
    /// Equality falls to the explore branch, so epsilon 1 always explores.
    /// The uniform draw is consumed on every pick regardless of branch, which
    /// keeps selectors sharing a stream aligned until their branches diverge.
    pub fn select_action(
        &self,
        state: &SystemState<T>,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, bool)> {
        let u: f64 = rng.gen();
        if u > epsilon {
            Ok((self.select_greedy(state)?, false))
        } else {
            Ok((rng.gen_range(0..self.spec.actions), true))
        }
    }

    pub fn store(&mut self, t: Transition<T>) {
        self.memory.push(t);
    }

    /// One TD(0) fit per configured epoch on a sampled minibatch: targets
    /// equal the prediction except at the taken action, which becomes
    /// `r + discount * max_a Q(next)` (just `r` on terminal transitions).
    /// No-op (returns `None`) until the memory reaches its minimum fill.
    pub fn train_dqn(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
        if !self.memory.is_ready() {
            return Ok(None);
        }
        let mut last_loss = 0.0;
        for _ in 0..self.config.dqn_epochs.max(1) {
            let indices = self.memory.sample_indices(self.config.dqn_batch, rng);
            let b = indices.len();
            let dim = self.spec.input_dim;
            let mut states = Vec::with_capacity(b * dim);
            let mut next_states = Vec::with_capacity(b * dim);
            for &i in &indices {
                let t = &self.memory.buf[i];
                if t.state.len() != dim || t.next_state.len() != dim {
                    return Err(Error::ShapeMismatch {
                        context: "dqn training states",
                        expected: vec![dim],
                        got: vec![t.state.len(), t.next_state.len()],
                    });
                }
                states.extend_from_slice(t.state.values());
                next_states.extend_from_slice(t.next_state.values());
            }
            let states = Tensor::new(vec![b, dim], states)?;
            let next_states = Tensor::new(vec![b, dim], next_states)?;
            let (q, cache) = self.spec.forward(&self.weights, &states)?;
            let (q_next, _) = self.spec.forward(&self.weights, &next_states)?;
            let mut targets = q.data().to_vec();
            for (row, &i) in indices.iter().enumerate() {
                let t = &self.memory.buf[i];
                let target = if t.terminal {
                    t.reward
                } else {
                    let qn = &q_next.data()[row * self.spec.actions..(row + 1) * self.spec.actions];
                    let best = qn
                        .iter()
                        .map(|v| v.into64())
                        .fold(f64::NEG_INFINITY, f64::max);
                    t.reward + self.config.discount * best
                };
                targets[row * self.spec.actions + t.action] = T::from64(target);
            }
            let (loss, dq) = mse(q.data(), &targets)?;
            let dq = Tensor::new(vec![b, self.spec.actions], dq)?;
            let grad = self.spec.backward(&self.weights, &cache, &dq)?;
            self.adam.step(self.weights.values_mut(), &grad)?;
            last_loss = loss;
        }
        Ok(Some(last_loss))
    }
}
