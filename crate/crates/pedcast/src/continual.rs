//! The online continual-learning loop: hindsight labeling from a streaming
//! buffer, per-task adaptation, importance anchors, coreset rehearsal, and
//! the strategy variants used as baselines.

use crate::config::ExperimentConfig;
use crate::dataset::{Dataset, Example, ExampleSequence};
use crate::error::{Error, Result};
use crate::features::{assemble_input, FeatureConfig, ModelInput};
use crate::learn::{
    estimate_fim, train, EpochStats, OptState, TaskAnchor, TrainOptions,
};
use crate::math::Vec2;
use crate::metrics::{ade, fde, MetricRecord};
use crate::model::{
    cv_predict, forward, integrate_velocities, ParamVector, RecurrentState,
};
use crate::rng::{self, Stream};
use crate::sim::{make_scenario, run_scenario, EnvKind, SimState};
use crate::world::{AgentState, OccupancyMap};
use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::collections::VecDeque;

/// Learning strategy variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Constant-velocity prediction, no learning.
    Cv,
    /// Online training on each task's data alone.
    Vanilla,
    /// Online training with the parameter-anchor penalty.
    Ewc,
    /// Online training with coreset rehearsal.
    Coreset,
    /// Anchor penalty plus coreset rehearsal.
    Scl,
    /// Single training run on the union of all task data.
    Offline,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Cv,
        Strategy::Vanilla,
        Strategy::Ewc,
        Strategy::Coreset,
        Strategy::Scl,
        Strategy::Offline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cv => "cv",
            Strategy::Vanilla => "vanilla",
            Strategy::Ewc => "ewc",
            Strategy::Coreset => "coreset",
            Strategy::Scl => "scl",
            Strategy::Offline => "offline",
        }
    }

    pub fn use_ewc(self) -> bool {
        matches!(self, Strategy::Ewc | Strategy::Scl)
    }

    pub fn use_coreset(self) -> bool {
        matches!(self, Strategy::Coreset | Strategy::Scl)
    }

    /// Whether the strategy runs the per-task online loop at all.
    pub fn is_online(self) -> bool {
        !matches!(self, Strategy::Cv | Strategy::Offline)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(Strategy::Cv),
            "vanilla" => Ok(Strategy::Vanilla),
            "ewc" => Ok(Strategy::Ewc),
            "coreset" => Ok(Strategy::Coreset),
            "scl" => Ok(Strategy::Scl),
            "offline" => Ok(Strategy::Offline),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

struct AgentTrack {
    entries: VecDeque<(ModelInput, AgentState)>,
    state: RecurrentState,
}

/// Per-agent ring buffers holding the last `t_buff` ticks of model inputs and
/// raw states, plus the live recurrent-state registry. Emits one example
/// sequence whenever an agent accumulates a full window, then advances by the
/// training window length so windows never overlap.
pub struct StreamBuffer {
    capacity: usize,
    emit_len: usize,
    pred_steps: usize,
    tracks: BTreeMap<u64, AgentTrack>,
}

impl StreamBuffer {
    /// `capacity` = buffered ticks (`t_buff`), `emit_len` = examples per
    /// emitted sequence (`t_tbptt`), `pred_steps` = target length.
    pub fn new(capacity: usize, emit_len: usize, pred_steps: usize) -> StreamBuffer {
        assert_eq!(
            capacity,
            emit_len + pred_steps,
            "buffer span must cover one training window plus the horizon"
        );
        StreamBuffer {
            capacity,
            emit_len,
            pred_steps,
            tracks: BTreeMap::new(),
        }
    }

    pub fn buffered_agents(&self) -> usize {
        self.tracks.len()
    }

    pub fn max_buffered_ticks(&self) -> usize {
        self.tracks.values().map(|t| t.entries.len()).max().unwrap_or(0)
    }

    /// Feed one tick of the stream. Inputs are assembled for every tracked
    /// agent; agents absent from the tick (track loss, respawn) are flushed.
    /// When `theta` is given the live model advances each agent's recurrent
    /// state, mirroring deployment; the emitted data does not depend on it.
    pub fn push_tick(
        &mut self,
        state: &SimState,
        map: &OccupancyMap,
        fcfg: &FeatureConfig,
        theta: Option<&ParamVector>,
    ) -> Result<Vec<ExampleSequence>> {
        // Flush agents that vanished from the stream.
        let present: Vec<u64> = state.agents.iter().map(|a| a.id).collect();
        self.tracks.retain(|id, _| present.contains(id));

        let mut emitted = Vec::new();
        for agent in &state.agents {
            let others: Vec<AgentState> = state
                .agents
                .iter()
                .filter(|o| o.id != agent.id)
                .cloned()
                .collect();
            let input = assemble_input(agent, &others, map, fcfg)?;

            let track = self.tracks.entry(agent.id).or_insert_with(|| AgentTrack {
                entries: VecDeque::with_capacity(self.capacity),
                state: match theta {
                    Some(t) => RecurrentState::zeros(t.cfg()),
                    None => RecurrentState {
                        h: Vec::new(),
                        c: Vec::new(),
                    },
                },
            });

            // Guard against gaps if the stream skips ticks for an agent.
            if let Some((_, last)) = track.entries.back() {
                if last.t + 1 != agent.t {
                    track.entries.clear();
                }
            }

            if let Some(theta) = theta {
                let (_, next) = forward(theta, &input, &track.state)?;
                track.state = next;
            }

            track.entries.push_back((input, *agent));
            if track.entries.len() == self.capacity {
                let examples = (0..self.emit_len)
                    .map(|i| {
                        let (input, raw) = &track.entries[i];
                        let target: Vec<Vec2> = (1..=self.pred_steps)
                            .map(|k| track.entries[i + k].1.v)
                            .collect();
                        Example {
                            input: input.clone(),
                            target,
                            agent_id: raw.id,
                            tick: raw.t,
                        }
                    })
                    .collect();
                emitted.push(ExampleSequence { examples });
                track.entries.drain(..self.emit_len);
            }
            debug_assert!(track.entries.len() < self.capacity);
        }
        Ok(emitted)
    }
}

/// Run the hindsight-labeling buffer over a recorded stream and collect the
/// task dataset.
pub fn aggregate_task(
    stream: &[SimState],
    map: &OccupancyMap,
    theta: Option<&ParamVector>,
    cfg: &ExperimentConfig,
    label: &str,
) -> Result<Dataset> {
    let fcfg = cfg.feature_config();
    let mut buffer = StreamBuffer::new(cfg.t_buff_steps(), cfg.t_tbptt_steps(), cfg.t_pred_steps());
    let mut data = Dataset::new(label);
    for state in stream {
        data.sequences
            .extend(buffer.push_tick(state, map, &fcfg, theta)?);
    }
    Ok(data)
}

/// Fixed-capacity rehearsal store of example sequences.
#[derive(Debug, Clone)]
pub struct Coreset {
    capacity: usize,
    pub sequences: Vec<ExampleSequence>,
}

impl Coreset {
    pub fn new(capacity: usize) -> Coreset {
        Coreset {
            capacity,
            sequences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn as_dataset(&self) -> Dataset {
        Dataset {
            label: "coreset".into(),
            sequences: self.sequences.clone(),
        }
    }

    /// Add `m` sequences sampled uniformly without replacement from
    /// `task_data`, evicting uniformly random existing members first when the
    /// capacity would overflow. `m = 0` leaves the coreset (and the
    /// generator) untouched.
    pub fn update(&mut self, task_data: &Dataset, m: usize, rng: &mut ChaCha8Rng) {
        if m == 0 {
            return;
        }
        let take = if task_data.len() < m {
            log::warn!(
                "coreset update wanted {m} sequences, task only has {}",
                task_data.len()
            );
            task_data.len()
        } else {
            m
        };
        if take == 0 {
            return;
        }
        let picked = index_sample(rng, task_data.len(), take);
        let overflow = (self.sequences.len() + take).saturating_sub(self.capacity);
        if overflow > 0 {
            let mut evict: Vec<usize> = index_sample(rng, self.sequences.len(), overflow).into_vec();
            evict.sort_unstable_by(|a, b| b.cmp(a));
            for idx in evict {
                self.sequences.swap_remove(idx);
            }
        }
        for idx in picked {
            self.sequences.push(task_data.sequences[idx].clone());
        }
        debug_assert!(self.sequences.len() <= self.capacity);
    }
}

/// Per-example evaluation samples for one (phase, environment) cell; one
/// sample per validation sequence.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalSamples {
    pub strategy: String,
    pub phase: usize,
    pub env: String,
    pub ade: Vec<f64>,
    pub fde: Vec<f64>,
}

/// Evaluate a model (or the constant-velocity baseline when `theta` is
/// `None`) on a validation dataset. Each sequence warms the recurrent state
/// from zero and scores every example; the sequence's sample is the mean over
/// its examples. Displacements compare positions integrated from predicted
/// and true velocities over the horizon.
pub fn evaluate(
    theta: Option<&ParamVector>,
    val: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dt = cfg.time_step;
    let pred_steps = cfg.t_pred_steps();
    let per_seq: Vec<(f64, f64)> = val
        .sequences
        .par_iter()
        .map(|seq| -> Result<(f64, f64)> {
            let mut state = theta.map(|t| RecurrentState::zeros(t.cfg()));
            let mut ade_sum = 0.0;
            let mut fde_sum = 0.0;
            for ex in &seq.examples {
                let velocities = match theta {
                    Some(t) => {
                        let (pred, next) = forward(t, &ex.input, state.as_ref().unwrap())?;
                        state = Some(next);
                        pred.velocities
                    }
                    None => cv_predict(&ex.input, pred_steps).velocities,
                };
                let pred_pos = integrate_velocities(&velocities, Vec2::ZERO, dt);
                let true_pos = integrate_velocities(&ex.target, Vec2::ZERO, dt);
                ade_sum += ade(&pred_pos, &true_pos)?;
                fde_sum += fde(&pred_pos, &true_pos)?;
            }
            let n = seq.len() as f64;
            Ok((ade_sum / n, fde_sum / n))
        })
        .collect::<Result<Vec<_>>>()?;
    let ades = per_seq.iter().map(|p| p.0).collect();
    let fdes = per_seq.iter().map(|p| p.1).collect();
    Ok((ades, fdes))
}

/// Build a frozen validation set for one environment from a held-out seed.
/// The stream is lengthened until `size` sequences exist.
pub fn build_validation(env: EnvKind, cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let val_seed = rng::derive_seed(seed, Stream::Validation, env as u64);
    let per_agent = (cfg.validation_size * 3).div_ceil(cfg.n_pedestrians);
    let mut ticks = cfg.t_buff_steps() + cfg.t_tbptt_steps() * per_agent;
    loop {
        let scenario = make_scenario(env, cfg.n_pedestrians, val_seed);
        let stream = run_scenario(&scenario, ticks, val_seed)?;
        let mut data = aggregate_task(&stream, &scenario.map, None, cfg, env.name())?;
        if data.len() >= cfg.validation_size {
            data.sequences.truncate(cfg.validation_size);
            return Ok(data);
        }
        if ticks > 40_000 {
            return Err(Error::InvalidConfig(format!(
                "environment {env} produced only {} validation sequences",
                data.len()
            )));
        }
        ticks *= 2;
    }
}

/// Validation sets for a list of environments, keyed and ordered by kind.
pub fn build_validation_sets(
    envs: &[EnvKind],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<BTreeMap<EnvKind, Dataset>> {
    let mut out = BTreeMap::new();
    for &env in envs {
        if !out.contains_key(&env) {
            out.insert(env, build_validation(env, cfg, seed)?);
        }
    }
    Ok(out)
}

/// Everything a single strategy run produces.
pub struct RunOutput {
    pub strategy: Strategy,
    pub sequence: Vec<EnvKind>,
    pub theta_final: ParamVector,
    pub anchors: Vec<TaskAnchor>,
    pub coreset: Coreset,
    /// Model parameters after each training phase, in phase order.
    pub checkpoints: Vec<ParamVector>,
    pub records: Vec<MetricRecord>,
    pub samples: Vec<EvalSamples>,
    pub train_logs: Vec<(String, Vec<EpochStats>)>,
}

fn evaluate_all(
    strategy: Strategy,
    theta: &ParamVector,
    phase: usize,
    validation: &BTreeMap<EnvKind, Dataset>,
    cfg: &ExperimentConfig,
    records: &mut Vec<MetricRecord>,
    samples: &mut Vec<EvalSamples>,
) -> Result<()> {
    for (env, val) in validation {
        let model = if strategy == Strategy::Cv { None } else { Some(theta) };
        let (ades, fdes) = evaluate(model, val, cfg)?;
        records.push(MetricRecord::from_samples(
            strategy.name(),
            phase,
            env.name(),
            &ades,
            &fdes,
        ));
        samples.push(EvalSamples {
            strategy: strategy.name().into(),
            phase,
            env: env.name().to_string(),
            ade: ades,
            fde: fdes,
        });
    }
    Ok(())
}

/// Execute one complete learning sequence under a strategy: per task,
/// aggregate a dataset from a fresh stream, adapt the model, snapshot the
/// anchor, update the coreset, and evaluate on every validation set.
///
/// The task datasets live only for their own phase; afterwards the retained
/// example store is the coreset alone.
pub fn run_scl(
    sequence: &[EnvKind],
    theta0: &ParamVector,
    strategy: Strategy,
    cfg: &ExperimentConfig,
    seed: u64,
    validation: &BTreeMap<EnvKind, Dataset>,
) -> Result<RunOutput> {
    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut train_logs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut anchors: Vec<TaskAnchor> = Vec::new();
    let mut coreset = Coreset::new(cfg.coreset_capacity);
    let mut theta = theta0.clone();

    let mut shuffle_rng = rng::stream_rng(seed, Stream::Shuffle, 0);
    let mut coreset_rng = rng::stream_rng(seed, Stream::Coreset, 0);
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lambda_ewc: cfg.ewc_lambda,
        lambda_l2: cfg.l2,
    };

    // Baseline evaluation of the pre-trained model (phase 0).
    evaluate_all(strategy, &theta, 0, validation, cfg, &mut records, &mut samples)?;

    match strategy {
        Strategy::Cv => {
            // No learning: later phases repeat the same measurements.
            for phase in 1..=sequence.len() {
                evaluate_all(strategy, &theta, phase, validation, cfg, &mut records, &mut samples)?;
                checkpoints.push(theta.clone());
            }
        }
        Strategy::Offline => {
            // Upper bound: train once on the union of every task's data.
            let mut union = Dataset::new("offline");
            for (k, env) in sequence.iter().enumerate() {
                let d_k = aggregate_env(*env, k, &theta, cfg, seed)?;
                union.sequences.extend(d_k.sequences);
            }
            let mut opt = OptState::new(theta.len(), cfg.learning_rate, cfg.l2);
            let (trained, stats) = train(&theta, &union, &[], &mut opt, &opts, &mut shuffle_rng)?;
            theta = trained;
            train_logs.push(("offline".to_string(), stats));
            for phase in 1..=sequence.len() {
                evaluate_all(strategy, &theta, phase, validation, cfg, &mut records, &mut samples)?;
                checkpoints.push(theta.clone());
            }
        }
        _ => {
            for (k, env) in sequence.iter().enumerate() {
                let d_k = aggregate_env(*env, k, &theta, cfg, seed)?;
                let d_hat = if strategy.use_coreset() && !coreset.is_empty() {
                    d_k.union(&coreset.as_dataset())
                } else {
                    d_k.clone()
                };
                let anchors_passed: &[TaskAnchor] = if strategy.use_ewc() { &anchors } else { &[] };
                let mut opt = OptState::new(theta.len(), cfg.learning_rate, cfg.l2);
                let (trained, stats) =
                    train(&theta, &d_hat, anchors_passed, &mut opt, &opts, &mut shuffle_rng)?;
                theta = trained;
                train_logs.push((env.name().to_string(), stats));

                // Anchor snapshot for this task; consumed by later tasks only
                // when the strategy applies the penalty.
                let fisher = estimate_fim(&theta, &d_k)?;
                anchors.push(TaskAnchor {
                    task_index: k,
                    theta: theta.clone(),
                    fisher,
                });

                if strategy.use_coreset() {
                    coreset.update(&d_k, cfg.coreset_update, &mut coreset_rng);
                }

                checkpoints.push(theta.clone());
                evaluate_all(
                    strategy,
                    &theta,
                    k + 1,
                    validation,
                    cfg,
                    &mut records,
                    &mut samples,
                )?;
                // d_k and d_hat drop here; only the coreset persists.
            }
        }
    }

    Ok(RunOutput {
        strategy,
        sequence: sequence.to_vec(),
        theta_final: theta,
        anchors,
        coreset,
        checkpoints,
        records,
        samples,
        train_logs,
    })
}

fn aggregate_env(
    env: EnvKind,
    task_index: usize,
    theta: &ParamVector,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Dataset> {
    let task_seed = rng::derive_seed(seed, Stream::Simulation, task_index as u64 + 1);
    let scenario = make_scenario(env, cfg.n_pedestrians, task_seed);
    let stream = run_scenario(&scenario, cfg.task_ticks(), task_seed)?;
    aggregate_task(&stream, &scenario.map, Some(theta), cfg, env.name())
}

/// Train the starting model on a long open-environment stream. Every
/// experiment cell shares the resulting parameters.
pub fn pretrain(
    theta_random: &ParamVector,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(ParamVector, Vec<EpochStats>)> {
    if cfg.pretrain_epochs == 0 {
        return Ok((theta_random.clone(), Vec::new()));
    }
    let pre_seed = rng::derive_seed(seed, Stream::Pretrain, 0);
    let scenario = make_scenario(EnvKind::Open, cfg.n_pedestrians, pre_seed);
    let stream = run_scenario(&scenario, cfg.pretrain_ticks(), pre_seed)?;
    let data = aggregate_task(&stream, &scenario.map, None, cfg, "open")?;
    let opts = TrainOptions {
        epochs: cfg.pretrain_epochs,
        batch_size: cfg.batch_size,
        lambda_ewc: 0.0,
        lambda_l2: cfg.l2,
    };
    let mut opt = OptState::new(theta_random.len(), cfg.learning_rate, cfg.l2);
    let mut shuffle_rng = rng::stream_rng(seed, Stream::Pretrain, 1);
    train(theta_random, &data, &[], &mut opt, &opts, &mut shuffle_rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Small-but-real configuration for orchestration tests.
    pub(crate) fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            task_duration_s: 12.0,
            t_buff_s: 1.2,
            t_pred_s: 0.6,
            t_tbptt_s: 0.6,
            epochs: 4,
            batch_size: 8,
            validation_size: 12,
            pretrain_epochs: 4,
            pretrain_duration_s: 12.0,
            coreset_capacity: 10,
            coreset_update: 4,
            model: crate::config::ModelSection {
                patch_cells: 6,
                patch_resolution: 0.2,
                n_social: 3,
                enc_vel: 4,
                enc_occ: 6,
                enc_soc: 6,
                hidden: 8,
            },
            ..ExperimentConfig::default()
        }
    }

    fn tiny_theta(cfg: &ExperimentConfig, seed: u64) -> ParamVector {
        let mut rng = stream_rng(seed, Stream::Init, 0);
        ParamVector::random(cfg.model_config(), &mut rng)
    }

    #[test]
    fn window_counts_match_brute_force_enumerator() {
        // Square has no respawns: all six agents stay tracked for the full
        // 1000 ticks. Stride-15 windows of span 30: 65 per agent, 390 total.
        let cfg = ExperimentConfig::default();
        let scenario = make_scenario(EnvKind::Square, 6, 77);
        let stream = run_scenario(&scenario, cfg.task_ticks(), 77).unwrap();
        let data = aggregate_task(&stream, &scenario.map, None, &cfg, "square").unwrap();

        // Independent enumerator over contiguous per-agent tracks.
        let mut tracks: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for state in &stream {
            for a in &state.agents {
                let entry = tracks.entry(a.id).or_insert((a.t, a.t));
                entry.1 = a.t;
            }
        }
        let mut expected = 0usize;
        for (_, (start, end)) in tracks {
            let len = (end - start + 1) as usize;
            if len >= 30 {
                expected += (len - 30) / 15 + 1;
            }
        }
        assert_eq!(expected, 390);
        assert_eq!(data.len(), expected);
        for seq in &data.sequences {
            assert_eq!(seq.len(), 15);
            for ex in &seq.examples {
                assert_eq!(ex.target.len(), 15);
            }
        }
    }

    #[test]
    fn short_tracks_never_emit() {
        let cfg = ExperimentConfig::default();
        let scenario = make_scenario(EnvKind::Square, 2, 5);
        // 29 ticks: one short of a full window.
        let stream = run_scenario(&scenario, 29, 5).unwrap();
        let data = aggregate_task(&stream, &scenario.map, None, &cfg, "square").unwrap();
        assert!(data.is_empty());
    }

    #[test]
    fn identical_streams_identical_datasets() {
        let cfg = tiny_config();
        let scenario = make_scenario(EnvKind::Hall, 4, 3);
        let s1 = run_scenario(&scenario, 100, 3).unwrap();
        let s2 = run_scenario(&scenario, 100, 3).unwrap();
        let d1 = aggregate_task(&s1, &scenario.map, None, &cfg, "hall").unwrap();
        let d2 = aggregate_task(&s2, &scenario.map, None, &cfg, "hall").unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn hindsight_targets_match_stream_bitwise() {
        // Independent re-reader: look each target velocity up in the raw
        // stream and require bit equality.
        let cfg = tiny_config();
        let scenario = make_scenario(EnvKind::Obstacle, 6, 13);
        let stream = run_scenario(&scenario, 200, 13).unwrap();
        let data = aggregate_task(&stream, &scenario.map, None, &cfg, "obstacle").unwrap();
        assert!(!data.is_empty());
        let pred_steps = cfg.t_pred_steps();
        for seq in &data.sequences {
            for ex in &seq.examples {
                for (k, target) in ex.target.iter().enumerate() {
                    let tick = ex.tick as usize + k + 1;
                    let state = &stream[tick];
                    assert_eq!(state.tick, tick as u64);
                    let agent = state
                        .agents
                        .iter()
                        .find(|a| a.id == ex.agent_id)
                        .expect("agent must exist over the window");
                    assert_eq!(agent.v.x.to_bits(), target.x.to_bits());
                    assert_eq!(agent.v.y.to_bits(), target.y.to_bits());
                }
                assert_eq!(ex.target.len(), pred_steps);
            }
        }
    }

    #[test]
    fn coreset_respects_sizes() {
        let cfg = tiny_config();
        let scenario = make_scenario(EnvKind::Hall, 4, 3);
        let stream = run_scenario(&scenario, 150, 3).unwrap();
        let task = aggregate_task(&stream, &scenario.map, None, &cfg, "hall").unwrap();
        assert!(task.len() >= 20);

        let mut rng = stream_rng(1, Stream::Coreset, 0);
        let mut coreset = Coreset::new(100);
        coreset.update(&task, 20, &mut rng);
        assert_eq!(coreset.len(), 20);

        // M = 0 leaves the coreset and the generator untouched.
        let mut probe_a = rng.clone();
        coreset.update(&task, 0, &mut rng);
        assert_eq!(coreset.len(), 20);
        use rand::RngCore;
        assert_eq!(probe_a.next_u64(), rng.next_u64());
    }

    #[test]
    fn full_coreset_evicts_exactly_m() {
        let mut sequences = Vec::new();
        let cfg = tiny_config();
        let scenario = make_scenario(EnvKind::Hall, 6, 9);
        let stream = run_scenario(&scenario, 400, 9).unwrap();
        let task = aggregate_task(&stream, &scenario.map, None, &cfg, "hall").unwrap();
        sequences.extend(task.sequences.iter().cloned());
        assert!(sequences.len() >= 120, "need enough sequences: {}", sequences.len());

        let first_hundred = Dataset {
            label: "a".into(),
            sequences: sequences[..100].to_vec(),
        };
        let next_batch = Dataset {
            label: "b".into(),
            sequences: sequences[100..120].to_vec(),
        };
        let mut rng = stream_rng(2, Stream::Coreset, 0);
        let mut coreset = Coreset::new(100);
        coreset.update(&first_hundred, 100, &mut rng);
        assert_eq!(coreset.len(), 100);
        let before = coreset.sequences.clone();
        coreset.update(&next_batch, 20, &mut rng);
        assert_eq!(coreset.len(), 100);
        let survivors = coreset
            .sequences
            .iter()
            .filter(|s| before.contains(s))
            .count();
        assert_eq!(survivors, 80, "exactly 20 old members must be evicted");
    }

    #[test]
    fn single_task_all_online_strategies_agree() {
        let cfg = tiny_config();
        let theta0 = tiny_theta(&cfg, 1);
        let validation = build_validation_sets(&[EnvKind::Hall], &cfg, 42).unwrap();
        let sequence = [EnvKind::Hall];
        let mut finals = Vec::new();
        for strategy in [Strategy::Vanilla, Strategy::Ewc, Strategy::Coreset, Strategy::Scl] {
            let out = run_scl(&sequence, &theta0, strategy, &cfg, 5, &validation).unwrap();
            finals.push(out.theta_final);
        }
        for other in &finals[1..] {
            assert_eq!(&finals[0], other);
        }
    }

    #[test]
    fn strategy_reductions() {
        let cfg_base = tiny_config();
        let theta0 = tiny_theta(&cfg_base, 2);
        let validation =
            build_validation_sets(&[EnvKind::Hall, EnvKind::Open], &cfg_base, 42).unwrap();
        let sequence = [EnvKind::Hall, EnvKind::Open];

        // Zero penalty weight turns the combined strategy into pure
        // rehearsal.
        let mut cfg = cfg_base.clone();
        cfg.ewc_lambda = 0.0;
        let scl = run_scl(&sequence, &theta0, Strategy::Scl, &cfg, 6, &validation).unwrap();
        let coreset = run_scl(&sequence, &theta0, Strategy::Coreset, &cfg, 6, &validation).unwrap();
        assert_eq!(scl.theta_final, coreset.theta_final);

        // Zero coreset updates turn it into the pure penalty strategy.
        let mut cfg = cfg_base.clone();
        cfg.coreset_update = 0;
        let scl = run_scl(&sequence, &theta0, Strategy::Scl, &cfg, 6, &validation).unwrap();
        let ewc = run_scl(&sequence, &theta0, Strategy::Ewc, &cfg, 6, &validation).unwrap();
        assert_eq!(scl.theta_final, ewc.theta_final);
    }

    #[test]
    fn anchors_accumulate_per_task() {
        let cfg = tiny_config();
        let theta0 = tiny_theta(&cfg, 3);
        let validation = build_validation_sets(&[EnvKind::Hall, EnvKind::Open], &cfg, 42).unwrap();
        let sequence = [EnvKind::Hall, EnvKind::Open];
        let out = run_scl(&sequence, &theta0, Strategy::Scl, &cfg, 7, &validation).unwrap();
        assert_eq!(out.anchors.len(), 2);
        assert_eq!(out.checkpoints.len(), 2);
        assert_eq!(out.coreset.len(), 8, "two updates of M = 4");
        assert!(out
            .anchors
            .iter()
            .all(|a| a.fisher.data().iter().all(|&f| f >= 0.0)));
        // Phase 0 through 2 on both environments.
        assert_eq!(out.records.len(), 3 * 2);
    }

    #[test]
    fn pretrain_reduces_open_loss() {
        let cfg = tiny_config();
        let theta_random = tiny_theta(&cfg, 4);
        let (theta0, _) = pretrain(&theta_random, &cfg, 11).unwrap();
        let val = build_validation(EnvKind::Open, &cfg, 42).unwrap();
        let loss = |t: &ParamVector| -> f64 {
            val.sequences
                .iter()
                .map(|s| crate::model::tbptt_gradient(t, s, 0.0).unwrap().0)
                .sum::<f64>()
                / val.len() as f64
        };
        let before = loss(&theta_random);
        let after = loss(&theta0);
        assert!(
            after < before,
            "pretraining should reduce open-environment loss ({before} -> {after})"
        );

        // Zero pretrain epochs return the random parameters unchanged.
        let mut cfg0 = cfg.clone();
        cfg0.pretrain_epochs = 0;
        let (same, stats) = pretrain(&theta_random, &cfg0, 11).unwrap();
        assert_eq!(same, theta_random);
        assert!(stats.is_empty());

        // Reproducible.
        let (theta0_again, _) = pretrain(&theta_random, &cfg, 11).unwrap();
        assert_eq!(theta0, theta0_again);
    }
}
