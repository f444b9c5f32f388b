//! Simulation orchestration: environment assembly, the episode loop, policy
//! training, greedy application, the three reference baselines, and cost
//! comparison.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_synthetic, load_idx, partition_non_iid, LabeledSet, NodeShard, PartitionSpec,
    DIGIT_CLASSES,
};
use crate::nn::{DqnModelSpec, FoundationModelSpec, ModelWeights, TrainOptions};
use crate::policy::{
    compute_reward, episode_return, Agent, AgentConfig, EpsilonSchedule, Transition,
    UpdateCadence,
};
use crate::rng::{derive_seed, stream_rng};
use crate::state::{build_state, export_embedding, fit_pca, EmbeddingRow, PcaModel};
use crate::topology::DistanceMatrix;
use crate::{Error, Result, Scalar};

/// Checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;
/// Identifier of the state-construction protocol a checkpoint was trained
/// under; apply-phase runs must rebuild states the same way.
pub const STATE_PROTOCOL: &str = "resident-pca-v1";
/// Episodes a random-policy experiment contributes to a comparison, chosen to
/// match the trailing window used for the learned policy.
pub const COMPARE_WINDOW: usize = 5;

/// Dataset backing a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    /// IDX digit files under `data_dir` (canonical filenames).
    Mnist,
    /// Seeded synthetic blocks-and-noise digits.
    Synthetic,
}

/// Local-training hyperparameters of the circulating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoundationTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for FoundationTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 32,
            learning_rate: 0.001,
        }
    }
}

/// Standalone-baseline stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StandaloneConfig {
    /// Consecutive epochs without a validation-loss improvement before
    /// stopping.
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for StandaloneConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            max_epochs: 200,
        }
    }
}

/// Full run configuration. Every field has a nominal default, so an empty
/// config file is valid; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub nodes: usize,
    /// Main-class fraction of each shard.
    pub alpha: f64,
    pub samples_per_node: usize,
    pub classes: usize,
    pub goal_acc: f64,
    pub max_steps: usize,
    pub episodes: usize,
    /// Experiment repetitions in a comparison.
    pub experiments: usize,
    pub starter_node: usize,
    /// Upper bound of generated node distances.
    pub beta: f64,
    pub seed: u64,
    pub dataset: DatasetSource,
    pub data_dir: String,
    /// Cap on the training pool size (prefix truncation).
    pub train_limit: usize,
    pub synthetic_per_class: usize,
    pub synthetic_val_per_class: usize,
    pub foundation: FoundationTrainConfig,
    pub agent: AgentConfig,
    pub standalone: StandaloneConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            nodes: 10,
            alpha: 0.8,
            samples_per_node: 500,
            classes: 10,
            goal_acc: 0.8,
            max_steps: 35,
            episodes: 120,
            experiments: 10,
            starter_node: 0,
            beta: 0.1,
            seed: 0,
            dataset: DatasetSource::Mnist,
            data_dir: "data".into(),
            train_limit: 50_000,
            synthetic_per_class: 600,
            synthetic_val_per_class: 100,
            foundation: FoundationTrainConfig::default(),
            agent: AgentConfig::default(),
            standalone: StandaloneConfig::default(),
        }
    }
}

impl SimConfig {
    /// Range and consistency checks; error messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if self.nodes == 0 {
            return err("nodes must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return err(format!("alpha must be in [0,1], got {}", self.alpha));
        }
        if self.samples_per_node == 0 {
            return err("samples_per_node must be >= 1".into());
        }
        if self.classes < 2 || self.classes > DIGIT_CLASSES {
            return err(format!("classes must be in 2..=10, got {}", self.classes));
        }
        if self.dataset == DatasetSource::Mnist && self.classes != DIGIT_CLASSES {
            return err(format!(
                "the mnist dataset has 10 classes, classes = {} is inconsistent",
                self.classes
            ));
        }
        if !(0.0..=1.0).contains(&self.goal_acc) {
            return err(format!("goal_acc must be in [0,1], got {}", self.goal_acc));
        }
        if self.max_steps == 0 {
            return err("max_steps must be >= 1".into());
        }
        if self.episodes == 0 {
            return err("episodes must be >= 1".into());
        }
        if self.experiments == 0 {
            return err("experiments must be >= 1".into());
        }
        if self.starter_node >= self.nodes {
            return err(format!(
                "starter_node {} out of range for {} nodes",
                self.starter_node, self.nodes
            ));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return err(format!("beta must be positive, got {}", self.beta));
        }
        if self.train_limit == 0 {
            return err("train_limit must be >= 1".into());
        }
        if self.synthetic_per_class == 0 || self.synthetic_val_per_class == 0 {
            return err("synthetic sample counts must be >= 1".into());
        }
        if self.foundation.epochs == 0 || self.foundation.batch_size == 0 {
            return err("foundation epochs and batch_size must be >= 1".into());
        }
        if !(self.foundation.learning_rate > 0.0) {
            return err("foundation learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.agent.discount) {
            return err(format!(
                "agent discount must be in [0,1], got {}",
                self.agent.discount
            ));
        }
        if self.agent.epsilon_decay < 0.0 {
            return err("agent epsilon_decay must be >= 0".into());
        }
        if self.agent.dqn_batch == 0 || self.agent.dqn_epochs == 0 {
            return err("agent dqn_batch and dqn_epochs must be >= 1".into());
        }
        if !(self.agent.dqn_learning_rate > 0.0) {
            return err("agent dqn_learning_rate must be positive".into());
        }
        if self.agent.replay_capacity == 0
            || self.agent.replay_min_fill == 0
            || self.agent.replay_min_fill > self.agent.replay_capacity
        {
            return err(format!(
                "agent replay memory needs 0 < replay_min_fill <= replay_capacity, got {}/{}",
                self.agent.replay_min_fill, self.agent.replay_capacity
            ));
        }
        if !(self.agent.reward_base > 0.0) {
            return err("agent reward_base must be positive".into());
        }
        if self.standalone.patience == 0 || self.standalone.max_epochs == 0 {
            return err("standalone patience and max_epochs must be >= 1".into());
        }
        Ok(())
    }

    /// Copy with a different master seed (per-experiment derivation).
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// Everything a run needs: shards, validation set, topology, the shared
/// initial weights, per-node resident models, and the PCA basis over them.
///
/// Residents are each node's one-epoch training of the shared init on its own
/// shard. Episodes re-derive the same initialization and therefore the same
/// residents, so they are computed once per environment.
pub struct Env<T> {
    pub config: SimConfig,
    pub foundation: FoundationModelSpec,
    pub shards: Vec<NodeShard<T>>,
    pub validation: LabeledSet<T>,
    pub matrix: DistanceMatrix,
    pub init_weights: ModelWeights<T>,
    pub residents: Vec<ModelWeights<T>>,
    pub pca: PcaModel,
}

/// Loads the dataset pair for `config`: training pool and validation set.
pub fn load_dataset<T: Scalar>(config: &SimConfig) -> Result<(LabeledSet<T>, LabeledSet<T>)> {
    match config.dataset {
        DatasetSource::Mnist => {
            let dir = Path::new(&config.data_dir);
            let mut pool = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let validation = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            pool.truncate(config.train_limit);
            Ok((pool, validation))
        }
        DatasetSource::Synthetic => {
            // Both splits share the class patterns; only the sample-level
            // jitter and noise streams differ.
            let patterns = derive_seed(config.seed, "synthetic-task", &[]);
            let mut pool = gen_synthetic(
                config.classes,
                config.synthetic_per_class,
                patterns,
                derive_seed(config.seed, "synthetic-train", &[]),
            )?;
            let validation = gen_synthetic(
                config.classes,
                config.synthetic_val_per_class,
                patterns,
                derive_seed(config.seed, "synthetic-val", &[]),
            )?;
            pool.truncate(config.train_limit);
            Ok((pool, validation))
        }
    }
}

/// Assembles the environment: dataset, non-IID shards, distance matrix,
/// shared init, residents, and the PCA basis (one component per node).
pub fn build_env<T: Scalar>(config: &SimConfig) -> Result<Env<T>> {
    config.validate()?;
    let (pool, validation) = load_dataset::<T>(config)?;
    let shards = partition_non_iid(
        &pool,
        &PartitionSpec {
            nodes: config.nodes,
            per_node: config.samples_per_node,
            alpha: config.alpha,
            seed: derive_seed(config.seed, "partition", &[]),
        },
    )?;
    let matrix = DistanceMatrix::generate(
        config.nodes,
        config.beta,
        derive_seed(config.seed, "distance", &[]),
    )?;
    let foundation = FoundationModelSpec {
        classes: config.classes,
        ..FoundationModelSpec::digits()
    };
    foundation.validate()?;
    let init_weights: ModelWeights<T> =
        foundation.init_weights(derive_seed(config.seed, "foundation-init", &[]));
    let mut residents = Vec::with_capacity(config.nodes);
    for shard in &shards {
        let (w, _) = foundation.train_epochs(
            init_weights.clone(),
            &shard.set,
            &TrainOptions {
                epochs: config.foundation.epochs,
                batch_size: config.foundation.batch_size,
                learning_rate: config.foundation.learning_rate,
                shuffle_seed: derive_seed(config.seed, "resident-train", &[shard.node_id as u64]),
            },
        )?;
        residents.push(w);
    }
    let rows: Vec<&[T]> = residents.iter().map(|w| w.values()).collect();
    let pca = fit_pca(&rows, config.nodes)?;
    Ok(Env {
        config: config.clone(),
        foundation,
        shards,
        validation,
        matrix,
        init_weights,
        residents,
        pca,
    })
}

/// Selection behavior of one episode.
pub enum EpisodePolicy<'a, T> {
    /// Epsilon-greedy selection with replay storage and DQN updates.
    Learn {
        agent: &'a mut Agent<T>,
        epsilon: f64,
    },
    /// Greedy rollout of a frozen policy; exploration is never consulted.
    Greedy { agent: &'a Agent<T> },
    /// Uniform node choice, equivalent to epsilon pinned at 1, no learning.
    Random,
}

/// One evaluation round within an episode. `next_node`, `reward`, and
/// `distance` are absent on the terminal round (no selection happens there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub step: usize,
    pub node: usize,
    pub val_acc: f64,
    pub val_loss: f64,
    pub next_node: Option<usize>,
    pub reward: Option<f64>,
    pub distance: Option<f64>,
}

/// Log of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Exploration rate the episode ran with (1.0 for the random policy,
    /// 0.0 for greedy application).
    pub epsilon: f64,
    pub rounds: Vec<RoundRecord>,
    pub total_rounds: usize,
    pub episode_return: f64,
    pub total_comm_cost: f64,
    pub reached_goal: bool,
    /// Node visit sequence, starting at the starter node.
    pub visits: Vec<usize>,
}

struct Pending<T> {
    state: crate::state::SystemState<T>,
    action: usize,
    reward: f64,
}

/// Runs one episode: the circulating model starts from the shared init at the
/// starter node; each round trains it on the current shard, evaluates on the
/// validation set, and (unless the goal or the round cap ends the episode)
/// selects the next node. Learning mode additionally stores transitions
/// (completed lazily once the follow-up state exists) and fits the DQN per
/// the configured cadence.
pub fn run_episode<T: Scalar>(
    env: &Env<T>,
    policy: EpisodePolicy<'_, T>,
    episode: usize,
) -> Result<EpisodeLog> {
    let config = &env.config;
    let mut policy = policy;
    let epsilon_logged = match &policy {
        EpisodePolicy::Learn { epsilon, .. } => *epsilon,
        EpisodePolicy::Greedy { .. } => 0.0,
        EpisodePolicy::Random => 1.0,
    };
    let mut explore_rng = stream_rng(config.seed, "explore", &[episode as u64]);
    let mut dqn_rng = stream_rng(config.seed, "dqn-sample", &[episode as u64]);
    let resident_rows: Vec<&[T]> = env.residents.iter().map(|w| w.values()).collect();

    let mut inner = env.init_weights.clone();
    let mut current = config.starter_node;
    let mut visits = vec![current];
    let mut rewards: Vec<f64> = Vec::new();
    let mut records: Vec<RoundRecord> = Vec::new();
    let mut pending: Option<Pending<T>> = None;
    let mut reached_goal = false;

    for step in 0..config.max_steps {
        let (w, _) = env.foundation.train_epochs(
            inner,
            &env.shards[current].set,
            &TrainOptions {
                epochs: config.foundation.epochs,
                batch_size: config.foundation.batch_size,
                learning_rate: config.foundation.learning_rate,
                shuffle_seed: derive_seed(
                    config.seed,
                    "local-train",
                    &[episode as u64, step as u64],
                ),
            },
        )?;
        inner = w;
        let eval = env.foundation.evaluate(&inner, &env.validation)?;
        let state = build_state(&env.pca, &resident_rows, inner.values(), current)?;
        let ended = eval.accuracy >= config.goal_acc || step + 1 == config.max_steps;

        if let EpisodePolicy::Learn { agent, .. } = &mut policy {
            if let Some(p) = pending.take() {
                agent.store(Transition {
                    state: p.state,
                    action: p.action,
                    reward: p.reward,
                    next_state: state.clone(),
                    terminal: ended,
                });
                if agent.config.update_cadence == UpdateCadence::Step {
                    agent.train_dqn(&mut dqn_rng)?;
                }
            }
        }

        records.push(RoundRecord {
            step,
            node: current,
            val_acc: eval.accuracy,
            val_loss: eval.mean_loss,
            next_node: None,
            reward: None,
            distance: None,
        });

        if ended {
            reached_goal = eval.accuracy >= config.goal_acc;
            break;
        }

        let next = match &mut policy {
            EpisodePolicy::Learn { agent, epsilon } => {
                agent.select_action(&state, *epsilon, &mut explore_rng)?.0
            }
            EpisodePolicy::Greedy { agent } => agent.select_greedy(&state)?,
            EpisodePolicy::Random => {
                let _u: f64 = explore_rng.gen();
                explore_rng.gen_range(0..config.nodes)
            }
        };
        let distance = env.matrix.get(current, next);
        let reward = compute_reward(
            eval.accuracy,
            config.goal_acc,
            distance,
            config.agent.reward_base,
        );
        rewards.push(reward);
        let last = records.last_mut().expect("round was just recorded");
        last.next_node = Some(next);
        last.reward = Some(reward);
        last.distance = Some(distance);
        if matches!(policy, EpisodePolicy::Learn { .. }) {
            pending = Some(Pending {
                state,
                action: next,
                reward,
            });
        }
        visits.push(next);
        current = next;
    }

    if let EpisodePolicy::Learn { agent, .. } = &mut policy {
        if agent.config.update_cadence == UpdateCadence::Episode {
            agent.train_dqn(&mut dqn_rng)?;
        }
    }

    let total_comm_cost = env.matrix.path_cost(&visits)?;
    Ok(EpisodeLog {
        episode,
        epsilon: epsilon_logged,
        total_rounds: records.len(),
        episode_return: episode_return(&rewards, config.agent.discount),
        total_comm_cost,
        reached_goal,
        visits,
        rounds: records,
    })
}

/// Serialized policy: enough to rebuild the selector and verify it matches
/// the applying configuration. Weights are stored as f64, which is lossless
/// for both supported scalar types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub state_protocol: String,
    pub nodes: usize,
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub weights: Vec<f64>,
    pub trained_config: SimConfig,
}

impl PolicyCheckpoint {
    pub fn from_agent<T: Scalar>(agent: &Agent<T>, config: &SimConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            state_protocol: STATE_PROTOCOL.into(),
            nodes: agent.spec.actions,
            input_dim: agent.spec.input_dim,
            hidden1: agent.spec.hidden1,
            hidden2: agent.spec.hidden2,
            weights: agent.weights.values().iter().map(|v| v.into64()).collect(),
            trained_config: config.clone(),
        }
    }

    /// Validates compatibility with `config` and rebuilds the agent.
    pub fn into_agent<T: Scalar>(self, config: &SimConfig) -> Result<Agent<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.state_protocol != STATE_PROTOCOL {
            return Err(Error::CheckpointMismatch(format!(
                "state protocol {:?} unsupported (expected {STATE_PROTOCOL:?})",
                self.state_protocol
            )));
        }
        if self.nodes != config.nodes {
            return Err(Error::CheckpointMismatch(format!(
                "trained for {} nodes, config has {}",
                self.nodes, config.nodes
            )));
        }
        let spec = DqnModelSpec::for_nodes(config.nodes);
        if self.input_dim != spec.input_dim
            || self.hidden1 != spec.hidden1
            || self.hidden2 != spec.hidden2
            || self.weights.len() != spec.param_count()
        {
            return Err(Error::CheckpointMismatch(format!(
                "architecture {}/{}/{} with {} weights does not match {}/{}/{} with {}",
                self.input_dim,
                self.hidden1,
                self.hidden2,
                self.weights.len(),
                spec.input_dim,
                spec.hidden1,
                spec.hidden2,
                spec.param_count()
            )));
        }
        let values: Vec<T> = self.weights.iter().map(|&v| T::from64(v)).collect();
        let weights = ModelWeights::from_values(spec.layout(), values)?;
        Agent::with_weights(weights, config.nodes, config.agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trains the selection policy for `config.episodes` episodes, decaying
/// epsilon once per episode. Returns the per-episode logs and the final
/// policy.
pub fn train_policy<T: Scalar>(config: &SimConfig) -> Result<(Vec<EpisodeLog>, PolicyCheckpoint)> {
    let env = build_env::<T>(config)?;
    train_policy_in_env(&env)
}

/// [`train_policy`] over a prebuilt environment.
pub fn train_policy_in_env<T: Scalar>(
    env: &Env<T>,
) -> Result<(Vec<EpisodeLog>, PolicyCheckpoint)> {
    let config = &env.config;
    let mut agent: Agent<T> = Agent::new(
        config.nodes,
        config.agent,
        derive_seed(config.seed, "dqn-init", &[]),
    )?;
    let mut schedule = EpsilonSchedule::new(config.agent.epsilon_decay);
    let mut logs = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let log = run_episode(
            env,
            EpisodePolicy::Learn {
                agent: &mut agent,
                epsilon: schedule.epsilon,
            },
            episode,
        )?;
        logs.push(log);
        schedule.decay_once();
    }
    let checkpoint = PolicyCheckpoint::from_agent(&agent, config);
    Ok((logs, checkpoint))
}

/// Greedy application of a trained policy: one rollout, no exploration, no
/// updates.
pub fn apply_policy<T: Scalar>(
    config: &SimConfig,
    checkpoint: PolicyCheckpoint,
) -> Result<EpisodeLog> {
    let env = build_env::<T>(config)?;
    let agent: Agent<T> = checkpoint.into_agent(config)?;
    run_episode(&env, EpisodePolicy::Greedy { agent: &agent }, 0)
}

/// Random-selection baseline: `episodes` independent episodes with uniform
/// node choice. Shares the episode loop (and RNG streams) with learning runs,
/// so an episode's visit sequence matches what epsilon = 1 would produce.
pub fn run_baseline_random<T: Scalar>(
    config: &SimConfig,
    episodes: usize,
) -> Result<Vec<EpisodeLog>> {
    let env = build_env::<T>(config)?;
    run_baseline_random_in_env(&env, episodes)
}

/// [`run_baseline_random`] over a prebuilt environment.
pub fn run_baseline_random_in_env<T: Scalar>(
    env: &Env<T>,
    episodes: usize,
) -> Result<Vec<EpisodeLog>> {
    (0..episodes)
        .map(|e| run_episode(env, EpisodePolicy::Random, e))
        .collect()
}

/// One epoch of a baseline training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_acc: f64,
    pub val_loss: f64,
}

/// Training curve of a non-hopping baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub method: String,
    /// Training-set size the curve was fitted on.
    pub samples: usize,
    pub records: Vec<EpochRecord>,
    pub reached_goal: bool,
    /// Whether the validation-loss plateau rule fired (standalone only).
    pub stopped_early: bool,
}

/// Standalone baseline: the starter node trains alone on its shard with
/// persistent Adam, evaluating each epoch, until the validation accuracy
/// reaches the goal, the validation loss fails to improve for `patience`
/// consecutive epochs, or `max_epochs` is hit. `stopped_early` is true only
/// when the loss-plateau rule fired.
pub fn run_standalone<T: Scalar>(config: &SimConfig) -> Result<TrainingCurve> {
    let env = build_env::<T>(config)?;
    run_standalone_in_env(&env)
}

/// [`run_standalone`] over a prebuilt environment.
pub fn run_standalone_in_env<T: Scalar>(env: &Env<T>) -> Result<TrainingCurve> {
    let config = &env.config;
    let shard = &env.shards[config.starter_node];
    let mut weights = env.init_weights.clone();
    let mut adam = crate::nn::AdamState::new(weights.len(), config.foundation.learning_rate);
    let mut rng = stream_rng(config.seed, "standalone-train", &[]);
    let mut records = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;
    for epoch in 0..config.standalone.max_epochs {
        env.foundation.train_epoch(
            &mut weights,
            &mut adam,
            &shard.set,
            config.foundation.batch_size,
            &mut rng,
        )?;
        let eval = env.foundation.evaluate(&weights, &env.validation)?;
        records.push(EpochRecord {
            epoch,
            val_acc: eval.accuracy,
            val_loss: eval.mean_loss,
        });
        if eval.accuracy >= config.goal_acc {
            break;
        }
        if eval.mean_loss < best_loss {
            best_loss = eval.mean_loss;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.standalone.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let reached_goal = records.iter().any(|r| r.val_acc >= config.goal_acc);
    Ok(TrainingCurve {
        method: "standalone".into(),
        samples: shard.set.len(),
        records,
        reached_goal,
        stopped_early,
    })
}

/// Centralized baseline: all shards pooled on one trainer with persistent
/// Adam, evaluating each epoch (one epoch is one comparison round), stopping
/// at the goal or at the standalone epoch cap.
pub fn run_centralized<T: Scalar>(config: &SimConfig) -> Result<TrainingCurve> {
    let env = build_env::<T>(config)?;
    run_centralized_in_env(&env)
}

/// [`run_centralized`] over a prebuilt environment.
pub fn run_centralized_in_env<T: Scalar>(env: &Env<T>) -> Result<TrainingCurve> {
    let config = &env.config;
    let sets: Vec<&LabeledSet<T>> = env.shards.iter().map(|s| &s.set).collect();
    let pool = LabeledSet::concat(&sets)?;
    let mut weights = env.init_weights.clone();
    let mut adam = crate::nn::AdamState::new(weights.len(), config.foundation.learning_rate);
    let mut rng = stream_rng(config.seed, "centralized-train", &[]);
    let mut records = Vec::new();
    let mut reached_goal = false;
    for epoch in 0..config.standalone.max_epochs {
        env.foundation.train_epoch(
            &mut weights,
            &mut adam,
            &pool,
            config.foundation.batch_size,
            &mut rng,
        )?;
        let eval = env.foundation.evaluate(&weights, &env.validation)?;
        records.push(EpochRecord {
            epoch,
            val_acc: eval.accuracy,
            val_loss: eval.mean_loss,
        });
        if eval.accuracy >= config.goal_acc {
            reached_goal = true;
            break;
        }
    }
    Ok(TrainingCurve {
        method: "centralized".into(),
        samples: pool.len(),
        records,
        reached_goal,
        stopped_early: false,
    })
}

/// Per-method comparison statistics: each experiment contributes its best
/// (minimum) round count and best path cost over the trailing
/// [`COMPARE_WINDOW`] episodes, taken independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub best_rounds: Vec<usize>,
    pub best_costs: Vec<f64>,
    pub rounds_p25: f64,
    pub rounds_p50: f64,
    pub rounds_p75: f64,
    pub cost_p25: f64,
    pub cost_p50: f64,
    pub cost_p75: f64,
}

/// Cost comparison between the learned policy and the random baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub hl: MethodSummary,
    pub random: MethodSummary,
    /// Median round-count reduction, `(random - hl) / random * 100`.
    pub median_rounds_reduction_pct: f64,
    /// Median path-cost reduction, `(random - hl) / random * 100`.
    pub median_cost_reduction_pct: f64,
}

/// Linear-interpolation percentile (the `(n-1) * q` rank convention) of an
/// unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput {
            context: "percentile",
            detail: format!("q must be in [0,1], got {q}"),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("percentile inputs are finite"));
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn summarize(runs: &[Vec<EpisodeLog>]) -> Result<MethodSummary> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("comparison runs"));
    }
    let mut best_rounds = Vec::with_capacity(runs.len());
    let mut best_costs = Vec::with_capacity(runs.len());
    for run in runs {
        if run.is_empty() {
            return Err(Error::EmptyInput("comparison run episodes"));
        }
        let window = &run[run.len().saturating_sub(COMPARE_WINDOW)..];
        best_rounds.push(
            window
                .iter()
                .map(|l| l.total_rounds)
                .min()
                .expect("window is non-empty"),
        );
        best_costs.push(
            window
                .iter()
                .map(|l| l.total_comm_cost)
                .fold(f64::INFINITY, f64::min),
        );
    }
    let rounds_f: Vec<f64> = best_rounds.iter().map(|&r| r as f64).collect();
    Ok(MethodSummary {
        rounds_p25: percentile(&rounds_f, 0.25)?,
        rounds_p50: percentile(&rounds_f, 0.50)?,
        rounds_p75: percentile(&rounds_f, 0.75)?,
        cost_p25: percentile(&best_costs, 0.25)?,
        cost_p50: percentile(&best_costs, 0.50)?,
        cost_p75: percentile(&best_costs, 0.75)?,
        best_rounds,
        best_costs,
    })
}

/// Aggregates per-experiment logs of both methods into percentile summaries
/// and median reductions.
pub fn compare(hl: &[Vec<EpisodeLog>], random: &[Vec<EpisodeLog>]) -> Result<CompareSummary> {
    let hl_summary = summarize(hl)?;
    let random_summary = summarize(random)?;
    let reduction = |rand: f64, ours: f64| {
        if rand > 0.0 {
            (rand - ours) / rand * 100.0
        } else {
            0.0
        }
    };
    Ok(CompareSummary {
        median_rounds_reduction_pct: reduction(random_summary.rounds_p50, hl_summary.rounds_p50),
        median_cost_reduction_pct: reduction(random_summary.cost_p50, hl_summary.cost_p50),
        hl: hl_summary,
        random: random_summary,
    })
}

/// Everything a comparison run produces.
pub struct CompareOutput {
    pub summary: CompareSummary,
    pub hl_runs: Vec<Vec<EpisodeLog>>,
    pub random_runs: Vec<Vec<EpisodeLog>>,
}

/// Result of a weight-embedding run.
pub struct EmbeddingOutput {
    pub rows: Vec<EmbeddingRow>,
    /// Shard size actually used (the configured size, capped by the pool).
    pub samples_per_node: usize,
}

/// Large-scenario weight embedding: partitions the pool over `config.nodes`
/// nodes (shrinking shards to fit the pool if needed), trains one resident
/// per node from the shared init, and projects the resident weights onto
/// their top two principal components.
pub fn run_embedding<T: Scalar>(config: &SimConfig) -> Result<EmbeddingOutput> {
    config.validate()?;
    let (pool, _) = load_dataset::<T>(config)?;
    // Shrink the shard size until both pool constraints hold: the total
    // draw fits the pool, and every class can stock the main portion of all
    // nodes mapped to it.
    let counts = pool.class_counts();
    let mut node_share = vec![0usize; pool.classes()];
    for node in 0..config.nodes {
        node_share[crate::data::main_class_for(node, config.nodes, pool.classes()) as usize] += 1;
    }
    let mut per_node = config.samples_per_node.min(pool.len() / config.nodes);
    while per_node > 0 {
        let main_count = (config.alpha * per_node as f64).round() as usize;
        if node_share
            .iter()
            .zip(&counts)
            .all(|(&share, &stock)| share * main_count <= stock)
        {
            break;
        }
        per_node -= 1;
    }
    if per_node == 0 {
        return Err(Error::InsufficientData(format!(
            "pool of {} samples cannot shard over {} nodes",
            pool.len(),
            config.nodes
        )));
    }
    let shards = partition_non_iid(
        &pool,
        &PartitionSpec {
            nodes: config.nodes,
            per_node,
            alpha: config.alpha,
            seed: derive_seed(config.seed, "partition", &[]),
        },
    )?;
    let foundation = FoundationModelSpec {
        classes: config.classes,
        ..FoundationModelSpec::digits()
    };
    foundation.validate()?;
    let init_weights: ModelWeights<T> =
        foundation.init_weights(derive_seed(config.seed, "foundation-init", &[]));
    let mut residents = Vec::with_capacity(config.nodes);
    for shard in &shards {
        let (w, _) = foundation.train_epochs(
            init_weights.clone(),
            &shard.set,
            &TrainOptions {
                epochs: config.foundation.epochs,
                batch_size: config.foundation.batch_size,
                learning_rate: config.foundation.learning_rate,
                shuffle_seed: derive_seed(config.seed, "resident-train", &[shard.node_id as u64]),
            },
        )?;
        residents.push(w);
    }
    let rows: Vec<&[T]> = residents.iter().map(|w| w.values()).collect();
    let main_classes: Vec<u8> = shards.iter().map(|s| s.main_class).collect();
    Ok(EmbeddingOutput {
        rows: export_embedding(&rows, &main_classes)?,
        samples_per_node: per_node,
    })
}

/// Runs `config.experiments` policy-training experiments and as many
/// random-baseline experiments (each over a seed derived per experiment
/// index), then summarizes. Random experiments run [`COMPARE_WINDOW`]
/// episodes; with no learning and per-episode streams, those are distributed
/// identically to the trailing window of a full-length run.
pub fn run_compare<T: Scalar>(config: &SimConfig) -> Result<CompareOutput> {
    config.validate()?;
    let mut hl_runs = Vec::with_capacity(config.experiments);
    let mut random_runs = Vec::with_capacity(config.experiments);
    for k in 0..config.experiments {
        let sub = config.with_seed(derive_seed(config.seed, "experiment", &[k as u64]));
        let (logs, _) = train_policy::<T>(&sub)?;
        hl_runs.push(logs);
        random_runs.push(run_baseline_random::<T>(&sub, COMPARE_WINDOW)?);
    }
    let summary = compare(&hl_runs, &random_runs)?;
    Ok(CompareOutput {
        summary,
        hl_runs,
        random_runs,
    })
}
