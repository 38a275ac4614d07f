//! The interleaved training loop: environment interaction, feedback sessions,
//! reward learning with relabeling, and agent updates, plus evaluation and the
//! query log-likelihood diagnostic.

pub mod baseline;
mod config;
mod metrics;

pub use config::{OracleKind, Precision, RewardSource, RunConfig, SchemeKind, CONFIG_ENV_VAR};
pub use metrics::{write_metrics_csv, write_sessions_csv, MetricsRow, SessionRecord, METRICS_HEADER, SESSIONS_HEADER};

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffers::{checkpoint, push_transition, sample_hybrid, sample_uniform, PolicyAlignedBuffer, PreferenceBuffer, ReplayBuffer, Segment, SegmentPair, Transition};
use crate::envs::{Environment, PointNav2D};
use crate::error::{Error, Result};
use crate::nn::MlpSnapshot;
use crate::query::{apply_verdicts, policy_aligned_pairs, select_queries, uniform_pairs, Overseer, QueryScheme, QuerySources, ScriptedOverseer, SessionContext};
use crate::reward::{RewardEnsemble, RewardModel};
use crate::sac::{SacAgent, TransitionBatch};
use crate::scalar::Scalar;

/// Ground-truth outcome of one deterministic evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub episode_return: f64,
    pub steps: usize,
    pub final_goal_distance: Option<f64>,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub episodes: Vec<EpisodeOutcome>,
}

impl Evaluation {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }

    /// Mean distance to the goal at the end of each episode, when the task has a goal.
    pub fn mean_final_distance(&self) -> Option<f64> {
        let d: Option<Vec<f64>> = self.episodes.iter().map(|e| e.final_goal_distance).collect();
        d.filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// Deterministic-action rollouts scored by the environment's ground-truth reward.
pub fn evaluate_policy<T: Scalar>(agent: &SacAgent<T>, env: &mut dyn Environment<T>, episodes: usize) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::InvalidInput("evaluation needs at least one episode".into()));
    }
    // Deterministic acting never touches the generator.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut outcomes = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut total = 0.0;
        let mut actions = Vec::new();
        let mut steps = 0;
        loop {
            let action = agent.act(&obs, true, &mut unused)?;
            let out = env.step(&action)?;
            total += out.reward.as_f64();
            steps += 1;
            actions.push(action.iter().map(|a| a.as_f64()).collect());
            obs = out.observation;
            if out.done {
                break;
            }
        }
        outcomes.push(EpisodeOutcome {
            episode_return: total,
            steps,
            final_goal_distance: env.goal_distance(&obs).map(|d| d.as_f64()),
            actions,
        });
    }
    let mean_return = outcomes.iter().map(|o| o.episode_return).sum::<f64>() / episodes as f64;
    Ok(Evaluation {
        mean_return,
        episodes: outcomes,
    })
}

/// Mean `ln pi(a | s)` over every step of every segment in `pairs`.
pub fn query_log_likelihood<T: Scalar>(agent: &SacAgent<T>, pairs: &[SegmentPair<T>]) -> Result<f64> {
    let segments: Vec<&Segment<T>> = pairs.iter().flat_map(|p| [&p.segment_0, &p.segment_1]).collect();
    let steps: usize = segments.iter().map(|s| s.len()).sum();
    if steps == 0 {
        return Err(Error::InvalidInput("log-likelihood needs at least one segment step".into()));
    }
    let (o, a) = (agent.observation_dim(), agent.action_dim());
    let mut states = Array2::zeros((steps, o));
    let mut actions = Array2::zeros((steps, a));
    let rows = segments.iter().flat_map(|s| s.states.iter().zip(&s.actions));
    for (i, (s, act)) in rows.enumerate() {
        if s.len() != o || act.len() != a {
            return Err(Error::dims("segment step", o + a, s.len() + act.len()));
        }
        states.row_mut(i).assign(&ndarray::ArrayView1::from(&s[..]));
        actions.row_mut(i).assign(&ndarray::ArrayView1::from(&act[..]));
    }
    let lp = agent.log_likelihood_batch(states.view(), actions.view())?;
    Ok(lp.iter().map(|v| v.as_f64()).sum::<f64>() / steps as f64)
}

/// Counts of how agent minibatches were drawn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayAudit {
    pub hybrid_batches: u64,
    pub uniform_batches: u64,
    /// Batches drawn after feedback ended for good.
    pub batches_after_feedback: u64,
    /// Of those, the batches drawn by uniform sampling from replay.
    pub uniform_batches_after_feedback: u64,
    /// Minibatches whose policy-aligned buffer was empty so the whole batch came from replay.
    pub hybrid_fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub sessions: Vec<SessionRecord>,
    pub final_evaluation: Evaluation,
    pub feedback_used: usize,
    pub preference_count: usize,
    pub steps_run: u64,
    pub stopped_early: bool,
    pub audit: ReplayAudit,
    /// Environment step of each relabel and the agent update count just before it.
    pub relabels: Vec<(u64, u64)>,
}

impl RunSummary {
    pub fn metrics_csv(&self) -> String {
        let mut out = Vec::new();
        write_metrics_csv(&mut out, &self.rows).expect("writing to memory");
        String::from_utf8(out).expect("ascii csv")
    }

    pub fn sessions_csv(&self) -> String {
        let mut out = Vec::new();
        write_sessions_csv(&mut out, &self.sessions).expect("writing to memory");
        String::from_utf8(out).expect("ascii csv")
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn make_env<T: Scalar>(config: &RunConfig) -> Result<Box<dyn Environment<T>>> {
    match config.env.as_str() {
        "point_nav_2d" => Ok(Box::new(PointNav2D::<T>::new(config.nav_config())?)),
        other => Err(Error::InvalidConfig(format!("unknown environment `{other}`"))),
    }
}

#[derive(Default)]
struct IntervalStats {
    critic: Vec<f64>,
    actor: Vec<f64>,
    query_ll: Vec<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Training state for one run.
pub struct Trainer<T: Scalar> {
    config: RunConfig,
    env: Box<dyn Environment<T>>,
    eval_env: Box<dyn Environment<T>>,
    agent: SacAgent<T>,
    ensemble: RewardEnsemble<T>,
    replay: ReplayBuffer<T>,
    pa: PolicyAlignedBuffer<T>,
    prefs: PreferenceBuffer<T>,
    act_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
    reward_rng: ChaCha8Rng,
    query_rng: ChaCha8Rng,
    diagnostic_rng: ChaCha8Rng,
    feedback_used: usize,
    last_reward_loss: Option<f64>,
    sessions: Vec<SessionRecord>,
    audit: ReplayAudit,
    relabels: Vec<(u64, u64)>,
    agent_updates: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = make_env::<T>(&config)?;
        let eval_env = make_env::<T>(&config)?;
        let spec = env.spec().clone();
        let mut init_rng = stream(config.seed, 1);
        let agent = SacAgent::new(&spec, config.sac_config(), &mut init_rng)?;
        let ensemble = RewardEnsemble::new(spec.observation_dim + spec.action_dim, &config.reward_config(), &mut stream(config.seed, 2))?;
        Ok(Self {
            replay: ReplayBuffer::new(config.replay_capacity)?,
            pa: PolicyAlignedBuffer::new(config.pa_size, config.pa_include_partial, config.segment_length)?,
            prefs: PreferenceBuffer::default(),
            act_rng: stream(config.seed, 0),
            agent_rng: init_rng,
            reward_rng: stream(config.seed, 3),
            query_rng: stream(config.seed, 4),
            diagnostic_rng: stream(config.seed, 5),
            env,
            eval_env,
            agent,
            ensemble,
            config,
            feedback_used: 0,
            last_reward_loss: None,
            sessions: Vec::new(),
            audit: ReplayAudit::default(),
            relabels: Vec::new(),
            agent_updates: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn agent(&self) -> &SacAgent<T> {
        &self.agent
    }

    pub fn ensemble(&self) -> &RewardEnsemble<T> {
        &self.ensemble
    }

    pub fn replay(&self) -> &ReplayBuffer<T> {
        &self.replay
    }

    pub fn policy_aligned(&self) -> &PolicyAlignedBuffer<T> {
        &self.pa
    }

    pub fn preferences(&self) -> &PreferenceBuffer<T> {
        &self.prefs
    }

    fn feedback_open(&self, env_step: u64) -> bool {
        self.feedback_used < self.config.total_feedback && env_step <= self.config.last_feedback_step
    }

    fn stored_reward(&self, state: &[T], action: &[T], ground_truth: T) -> Result<T> {
        match self.config.reward_source {
            RewardSource::GroundTruth => Ok(ground_truth),
            RewardSource::Learned => self.ensemble.reward(state, action),
        }
    }


    /// Log-likelihoods of fresh policy-aligned and full-replay draws on the current policy.
    fn diagnostic(&mut self) -> Result<(Option<f64>, Option<f64>)> {
        let n = self.config.diagnostic_pairs;
        if n == 0 {
            return Ok((None, None));
        }
        let sources = QuerySources {
            replay: &self.replay,
            pa: &self.pa,
            replay_window: None,
            segment_length: self.config.segment_length,
        };
        let aligned = match policy_aligned_pairs(&sources, n, &mut self.diagnostic_rng) {
            Ok(p) => Some(query_log_likelihood(&self.agent, &p)?),
            Err(Error::InsufficientData { .. }) => None,
            Err(e) => return Err(e),
        };
        let uniform = match uniform_pairs(&sources, n, &mut self.diagnostic_rng) {
            Ok(p) => Some(query_log_likelihood(&self.agent, &p)?),
            Err(Error::InsufficientData { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok((aligned, uniform))
    }

    /// One feedback session. Returns `false` when the source buffer cannot supply
    /// segments yet, in which case nothing is queried.
    fn session(&mut self, env_step: u64, overseer: &mut dyn Overseer<T>, stats: &mut IntervalStats) -> Result<bool> {
        let index = self.sessions.len();
        let scheme = if index == 0 && self.config.first_session_uniform {
            QueryScheme::Uniform
        } else {
            self.config.query_scheme()
        };
        let count = self.config.queries_per_session.min(self.config.total_feedback - self.feedback_used);
        let sources = QuerySources {
            replay: &self.replay,
            pa: &self.pa,
            replay_window: Some(self.config.query_window),
            segment_length: self.config.segment_length,
        };
        let pairs = match select_queries(scheme, &sources, &self.ensemble, count, &mut self.query_rng) {
            Ok(p) => p,
            Err(Error::InsufficientData { .. }) => return Ok(false),
            Err(e) => return Err(e.in_phase("query selection")),
        };
        let selected_ll = query_log_likelihood(&self.agent, &pairs).map_err(|e| e.in_phase("diagnostic"))?;
        let (aligned_ll, uniform_ll) = self.diagnostic().map_err(|e| e.in_phase("diagnostic"))?;
        let context = SessionContext {
            session: index,
            env_step,
            feedback_used: self.feedback_used,
            feedback_total: self.config.total_feedback,
            env_name: self.env.name().to_string(),
        };
        let verdicts = overseer.label(&pairs, &context).map_err(|e| e.in_phase("overseer"))?;
        let stored = apply_verdicts(&pairs, &verdicts, &mut self.prefs).map_err(|e| e.in_phase("store preferences"))?;
        self.feedback_used += stored;
        stats.query_ll.push(selected_ll);
        self.sessions.push(SessionRecord {
            session: index,
            env_step,
            scheme: scheme.name(),
            queried: pairs.len(),
            stored,
            feedback_used: self.feedback_used,
            selected_log_likelihood: selected_ll,
            policy_aligned_log_likelihood: aligned_ll,
            uniform_log_likelihood: uniform_ll,
        });
        if stored > 0 && self.config.reward_source == RewardSource::Learned {
            let losses = self
                .ensemble
                .train(&self.prefs, &self.config.reward_config(), &mut self.reward_rng)
                .map_err(|e| e.in_phase("reward training"))?;
            self.last_reward_loss = mean(&losses.iter().map(|l| l.as_f64()).collect::<Vec<_>>());
            self.relabel().map_err(|e| e.in_phase("relabel"))?;
            self.relabels.push((env_step, self.agent_updates));
        }
        Ok(true)
    }

    fn relabel(&mut self) -> Result<()> {
        let ensemble = &self.ensemble;
        let mut failure = None;
        self.replay.relabel_batched(4096, |rows| match ensemble.rewards(rows.view()) {
            Ok(r) => r.to_vec(),
            Err(e) => {
                failure.get_or_insert(e);
                vec![T::zero(); rows.nrows()]
            }
        });
        self.pa.relabel(|s, a| match ensemble.reward(s, a) {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert(e);
                T::zero()
            }
        });
        failure.map_or(Ok(()), Err)
    }

    fn agent_step(&mut self, hybrid: bool, stats: &mut IntervalStats) -> Result<()> {
        let n = self.config.sac_batch_size;
        let batch = if hybrid {
            let drawn = sample_hybrid(&self.replay, &self.pa, n, self.config.hybrid_ratio, &mut self.agent_rng)?;
            self.audit.hybrid_batches += 1;
            self.audit.hybrid_fallbacks += u64::from(drawn.fell_back);
            TransitionBatch::from_transitions(&drawn.transitions)?
        } else {
            self.audit.uniform_batches += 1;
            TransitionBatch::from_transitions(&sample_uniform(&self.replay, n, &mut self.agent_rng)?)?
        };
        let update = self.agent.update(&batch, &mut self.agent_rng)?;
        self.agent_updates += 1;
        stats.critic.push(update.critic_loss.as_f64());
        if let Some(a) = update.actor_loss {
            stats.actor.push(a.as_f64());
        }
        Ok(())
    }

    /// Runs the configured number of environment steps.
    pub fn run(&mut self, overseer: &mut dyn Overseer<T>) -> Result<RunSummary> {
        let cfg = self.config.clone();
        let mut rows: Vec<MetricsRow> = Vec::new();
        let mut stats = IntervalStats::default();
        let mut obs = self.env.reset();
        let mut trajectory_id = 0u64;
        let mut step_index = 0usize;
        let mut env_step = 0u64;
        let mut stopped_early = false;
        let action_low: Vec<f64> = self.env.spec().action_low.iter().map(|v| v.as_f64()).collect();
        let action_high: Vec<f64> = self.env.spec().action_high.iter().map(|v| v.as_f64()).collect();

        while env_step < cfg.total_steps {
            if env_step > 0 && env_step >= cfg.warmup_steps && env_step.is_multiple_of(cfg.feedback_frequency) && self.feedback_open(env_step) {
                self.session(env_step, overseer, &mut stats)?;
            }

            let action: Vec<T> = if env_step < cfg.warmup_steps {
                action_low
                    .iter()
                    .zip(&action_high)
                    .map(|(&lo, &hi)| T::lit(self.act_rng.random_range(lo..hi)))
                    .collect()
            } else {
                self.agent.act(&obs, false, &mut self.act_rng).map_err(|e| e.in_phase("act"))?
            };
            let out = self.env.step(&action).map_err(|e| e.in_phase("environment step"))?;
            let ground_truth = out.reward;
            let predicted = self.stored_reward(&obs, &action, ground_truth).map_err(|e| e.in_phase("reward prediction"))?;
            push_transition(
                &mut self.replay,
                &mut self.pa,
                Transition {
                    state: obs,
                    action,
                    predicted_reward: predicted,
                    ground_truth_reward: ground_truth,
                    next_state: out.observation.clone(),
                    done: out.done,
                    terminal: out.terminal,
                    trajectory_id,
                    step_index,
                },
            );
            env_step += 1;
            step_index += 1;
            if out.done {
                obs = self.env.reset();
                trajectory_id += 1;
                step_index = 0;
            } else {
                obs = out.observation;
            }

            if env_step >= cfg.warmup_steps {
                let feedback_over = !self.feedback_open(env_step);
                let hybrid = cfg.hybrid_replay && !feedback_over;
                self.agent_step(hybrid, &mut stats).map_err(|e| e.in_phase("agent update"))?;
                if feedback_over {
                    self.audit.batches_after_feedback += 1;
                    self.audit.uniform_batches_after_feedback += u64::from(!hybrid);
                }
            }

            if env_step.is_multiple_of(cfg.eval_interval) || env_step == cfg.total_steps {
                let eval = evaluate_policy(&self.agent, self.eval_env.as_mut(), cfg.eval_episodes).map_err(|e| e.in_phase("evaluation"))?;
                rows.push(MetricsRow {
                    env_step,
                    episode_return: eval.mean_return,
                    feedback_used: self.feedback_used,
                    reward_loss: self.last_reward_loss,
                    critic_loss: mean(&stats.critic),
                    actor_loss: mean(&stats.actor),
                    query_log_likelihood: mean(&stats.query_ll),
                });
                stats = IntervalStats::default();
                if cfg.early_stop_return.is_some_and(|t| eval.mean_return >= t) {
                    stopped_early = true;
                    break;
                }
            }
        }

        let final_evaluation = evaluate_policy(&self.agent, self.eval_env.as_mut(), cfg.eval_episodes).map_err(|e| e.in_phase("evaluation"))?;
        let summary = RunSummary {
            rows,
            sessions: self.sessions.clone(),
            final_evaluation,
            feedback_used: self.feedback_used,
            preference_count: self.prefs.len(),
            steps_run: env_step,
            stopped_early,
            audit: self.audit.clone(),
            relabels: self.relabels.clone(),
        };
        self.write_outputs(&summary).map_err(|e| e.in_phase("write outputs"))?;
        Ok(summary)
    }

    fn write_outputs(&self, summary: &RunSummary) -> Result<()> {
        if let Some(path) = &self.config.metrics_path {
            create_parent(path)?;
            write_metrics_csv(&mut BufWriter::new(fs::File::create(path)?), &summary.rows)?;
        }
        if let Some(path) = &self.config.sessions_path {
            create_parent(path)?;
            write_sessions_csv(&mut BufWriter::new(fs::File::create(path)?), &summary.sessions)?;
        }
        if let Some(dir) = &self.config.checkpoint_dir {
            self.save_checkpoint(dir)?;
        }
        Ok(())
    }

    /// Writes buffers, agent, reward ensemble and the run config into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        checkpoint::save_all(dir, &self.replay, &self.pa, &self.prefs)?;
        fs::write(dir.join(AGENT_FILE), self.agent.to_json()?)?;
        let members: Vec<MlpSnapshot> = self.ensemble.members().iter().map(|m| m.to_snapshot()).collect();
        fs::write(dir.join(REWARD_FILE), serde_json::to_string(&members)?)?;
        fs::write(dir.join(CONFIG_FILE), self.config.to_toml_string()?)?;
        Ok(())
    }
}

pub const AGENT_FILE: &str = "agent.json";
pub const REWARD_FILE: &str = "reward.json";
pub const CONFIG_FILE: &str = "config.toml";

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Seed of the scripted overseer's tie-breaking stream for a run seed.
pub fn scripted_overseer_for(config: &RunConfig) -> ScriptedOverseer {
    ScriptedOverseer::new(config.seed ^ 0x0b5e_55ed)
}

/// Runs `config` at its configured precision.
pub fn run_with<O>(config: &RunConfig, overseer: &mut O) -> Result<RunSummary>
where
    O: Overseer<f32> + Overseer<f64>,
{
    match config.precision {
        Precision::F32 => Trainer::<f32>::new(config.clone())?.run(overseer),
        Precision::F64 => Trainer::<f64>::new(config.clone())?.run(overseer),
    }
}

/// Runs `config` with the scripted overseer.
pub fn run_scripted(config: &RunConfig) -> Result<RunSummary> {
    if config.oracle != OracleKind::Scripted {
        return Err(Error::InvalidConfig("run_scripted needs oracle = \"scripted\"".into()));
    }
    run_with(config, &mut scripted_overseer_for(config))
}

/// Loads a saved agent and evaluates it on the environment of the saved config.
pub fn evaluate_checkpoint(dir: &Path, episodes: usize) -> Result<Evaluation> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let text = fs::read_to_string(dir.join(AGENT_FILE))?;
    let agent = SacAgent::<f64>::from_json(&text)?;
    let mut env = make_env::<f64>(&config)?;
    evaluate_policy(&agent, env.as_mut(), episodes)
}
