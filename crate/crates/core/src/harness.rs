//! Episode simulation against the true NSMDP and return statistics.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dp_nsmdp, greedy_policy, value_iteration};
use crate::domain::{build_bridge, BridgeSpec};
use crate::error::{check_index, Error, Result};
use crate::format::{builtin_bridge, load_domain};
use crate::model::{Nsmdp, Snapshot};
use crate::planner::{rats_plan, Heuristic, InnerSolver, PlannerConfig, RewardModel, SupportPolicy};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rats,
    DpSnapshot,
    DpNsmdp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Rats, Algorithm::DpSnapshot, Algorithm::DpNsmdp];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Rats => "rats",
            Algorithm::DpSnapshot => "dp-snapshot",
            Algorithm::DpNsmdp => "dp-nsmdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicKind {
    #[default]
    Zero,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSettings {
    pub max_depth: usize,
    pub heuristic: HeuristicKind,
    /// Rollouts per leaf state for the `mc` heuristic (uniform policy).
    pub rollouts: usize,
    pub memoize: bool,
    pub support: SupportPolicy,
    pub reward_model: RewardModel,
    pub inner: InnerSolver,
    pub clip_rewards: bool,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            max_depth: 6,
            heuristic: HeuristicKind::Zero,
            rollouts: 100,
            memoize: true,
            support: SupportPolicy::Reachable,
            reward_model: RewardModel::PerTransition,
            inner: InnerSolver::ClosedForm,
            clip_rewards: true,
        }
    }
}

impl PlannerSettings {
    pub fn planner_config(&self, nsmdp: &Nsmdp, seed: u64) -> PlannerConfig {
        let heuristic = match self.heuristic {
            HeuristicKind::Zero => Heuristic::Zero,
            HeuristicKind::Mc => Heuristic::MonteCarlo {
                policy: Policy::uniform(nsmdp.n_states(), nsmdp.n_actions()),
                rollouts: self.rollouts,
                seed,
            },
        };
        PlannerConfig {
            max_depth: self.max_depth,
            lipschitz_p: nsmdp.lipschitz_p(),
            lipschitz_r: nsmdp.lipschitz_r(),
            heuristic,
            memoize: self.memoize,
            support: self.support,
            reward_model: self.reward_model,
            inner: self.inner,
            clip_rewards: self.clip_rewards,
        }
    }
}

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DomainRef {
    /// An `nsmdp-v1` document on disk.
    File(PathBuf),
    /// `{"builtin": "bridge", ...}`.
    Builtin(BuiltinDomain),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "builtin", rename_all = "lowercase")]
pub enum BuiltinDomain {
    Bridge(BridgeSpec),
}

impl<'de> Deserialize<'de> for DomainRef {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(de)? {
            serde_json::Value::String(path) => Ok(DomainRef::File(path.into())),
            value @ serde_json::Value::Object(_) => builtin_bridge(value)
                .map(|spec| DomainRef::Builtin(BuiltinDomain::Bridge(spec)))
                .map_err(D::Error::custom),
            other => Err(D::Error::custom(format!(
                "expected a file path or a builtin domain, got {other}"
            ))),
        }
    }
}

impl Default for DomainRef {
    fn default() -> Self {
        DomainRef::Builtin(BuiltinDomain::Bridge(BridgeSpec::default()))
    }
}

impl DomainRef {
    pub fn load(&self) -> Result<Nsmdp> {
        match self {
            DomainRef::File(path) => load_domain(path),
            DomainRef::Builtin(BuiltinDomain::Bridge(spec)) => build_bridge(spec),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            DomainRef::Builtin(BuiltinDomain::Bridge(spec)) => Some(spec.epsilon),
            DomainRef::File(_) => None,
        }
    }

    /// Default initial state: the bridge start, else state 0.
    pub fn start_state(&self) -> Result<usize> {
        match self {
            DomainRef::Builtin(BuiltinDomain::Bridge(spec)) => spec.start_state(),
            DomainRef::File(_) => Ok(0),
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        match self {
            DomainRef::Builtin(BuiltinDomain::Bridge(spec)) => {
                Ok(DomainRef::Builtin(BuiltinDomain::Bridge(BridgeSpec {
                    epsilon,
                    ..spec.clone()
                })))
            }
            DomainRef::File(_) => Err(Error::Misuse(
                "an epsilon sweep needs the builtin bridge domain".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub domain: DomainRef,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seed: u64,
    /// Episode length cap `B`.
    pub horizon: usize,
    /// Initial state; defaults to the domain's start.
    pub start: Option<usize>,
    pub planner: PlannerSettings,
    pub cvar_level: f64,
    /// Value-iteration tolerance of the DP baselines.
    pub tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            domain: DomainRef::default(),
            algorithm: Algorithm::Rats,
            episodes: 1000,
            seed: 0,
            horizon: 20,
            start: None,
            planner: PlannerSettings::default(),
            cvar_level: 0.05,
            tol: 1e-6,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| {
            Err(Error::Config {
                path: path.into(),
                message: message.into(),
            })
        };
        if self.episodes == 0 {
            return bad("episodes", "must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if !(self.cvar_level > 0.0 && self.cvar_level <= 1.0) {
            return bad("cvar_level", "must be in (0, 1]");
        }
        if !(self.tol > 0.0) {
            return bad("tol", "must be positive");
        }
        if self.planner.max_depth == 0 {
            return bad("planner.max_depth", "must be at least 1");
        }
        if self.planner.heuristic == HeuristicKind::Mc && self.planner.rollouts == 0 {
            return bad("planner.rollouts", "must be at least 1 with the mc heuristic");
        }
        if let Some(eps) = self.domain.epsilon() {
            if !(0.0..=1.0).contains(&eps) {
                return bad("domain.epsilon", "must be in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Parses a JSON configuration, reporting the path of the offending field.
pub fn parse_config(json: &str) -> Result<EvalConfig> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let cfg: EvalConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Master seed; the episode's stream is `episode`.
    pub seed: u64,
    pub episode: u64,
    pub epsilon: Option<f64>,
    pub algorithm: Algorithm,
    pub steps: Vec<Step>,
    pub discounted_return: f64,
}

impl EpisodeRecord {
    pub fn recompute_return(&self, gamma: f64) -> f64 {
        discounted(gamma, &self.steps)
    }
}

fn discounted(gamma: f64, steps: &[Step]) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for step in steps {
        total += discount * step.r;
        discount *= gamma;
    }
    total
}

/// A decision maker prepared for one model. Snapshot-based agents hold
/// per-epoch snapshots and nothing else.
pub enum Agent {
    Rats {
        snapshots: Vec<Snapshot>,
        cfg: PlannerConfig,
        /// Plans are pure functions of `(s, t)` and shared across episodes.
        cache: Mutex<HashMap<(usize, usize), usize>>,
    },
    DpSnapshot {
        /// Greedy action per `[t][s]`, each computed from snapshot `t`.
        table: Vec<Vec<usize>>,
    },
    DpNsmdp {
        policy: Policy,
    },
}

impl Agent {
    pub fn prepare(
        nsmdp: &Nsmdp,
        algorithm: Algorithm,
        planner: &PlannerSettings,
        horizon: usize,
        seed: u64,
        tol: f64,
    ) -> Result<Self> {
        if horizon > nsmdp.horizon() {
            return Err(Error::Horizon {
                epoch: horizon,
                horizon: nsmdp.horizon(),
            });
        }
        let snapshots = || (0..horizon).map(|t| nsmdp.snapshot(t)).collect::<Result<Vec<_>>>();
        Ok(match algorithm {
            Algorithm::Rats => Agent::Rats {
                snapshots: snapshots()?,
                cfg: planner.planner_config(nsmdp, seed),
                cache: Mutex::new(HashMap::new()),
            },
            Algorithm::DpSnapshot => {
                let table = snapshots()?
                    .iter()
                    .map(|snap| {
                        let vi = value_iteration(snap, tol)?;
                        match greedy_policy(snap, &vi.values)? {
                            Policy::Deterministic(actions) => Ok(actions),
                            _ => unreachable!("greedy policies are deterministic"),
                        }
                    })
                    .collect::<Result<_>>()?;
                Agent::DpSnapshot { table }
            }
            Algorithm::DpNsmdp => Agent::DpNsmdp {
                policy: dp_nsmdp(nsmdp, horizon, tol)?.policy,
            },
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Rats { .. } => Algorithm::Rats,
            Agent::DpSnapshot { .. } => Algorithm::DpSnapshot,
            Agent::DpNsmdp { .. } => Algorithm::DpNsmdp,
        }
    }

    pub fn act(&self, s: usize, t: usize) -> Result<usize> {
        match self {
            Agent::Rats {
                snapshots,
                cfg,
                cache,
            } => {
                if let Some(a) = cache.lock().expect("plan cache poisoned").get(&(s, t)) {
                    return Ok(*a);
                }
                let snap = snapshots.get(t).ok_or(Error::Horizon {
                    epoch: t,
                    horizon: snapshots.len(),
                })?;
                let a = rats_plan(snap, s, t, cfg)?.action;
                cache.lock().expect("plan cache poisoned").insert((s, t), a);
                Ok(a)
            }
            Agent::DpSnapshot { table } => Ok(table[t][s]),
            Agent::DpNsmdp { policy } => policy.action(t, s).ok_or(Error::Horizon {
                epoch: t,
                horizon: match policy {
                    Policy::NonStationary(rows) => rows.len(),
                    _ => 0,
                },
            }),
        }
    }
}

/// Counter-based stream for episode `episode` of master seed `seed`.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Runs one episode from `s0` until a terminal state or `horizon` steps.
pub fn run_episode(
    nsmdp: &Nsmdp,
    agent: &Agent,
    s0: usize,
    horizon: usize,
    seed: u64,
    episode: u64,
) -> Result<EpisodeRecord> {
    check_index("state", s0, nsmdp.n_states())?;
    let mut rng = episode_rng(seed, episode);
    let mut steps = Vec::new();
    let mut s = s0;
    for t in 0..horizon {
        if nsmdp.states().is_terminal(s) {
            break;
        }
        let a = agent.act(s, t)?;
        let (s2, r) = nsmdp.sample_transition(t, s, a, &mut rng)?;
        steps.push(Step { t, s, a, r, s2 });
        s = s2;
    }
    Ok(EpisodeRecord {
        seed,
        episode,
        epsilon: None,
        algorithm: agent.algorithm(),
        discounted_return: discounted(nsmdp.gamma(), &steps),
        steps,
    })
}

/// Mean of the `ceil(q n)` smallest returns.
pub fn cvar(returns: &[f64], q: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Domain("CVaR of an empty sample".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("CVaR level must be in (0, 1] (got {q})")));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    // guard against q * n landing a hair above an integer
    let k = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvalConfig,
    pub episodes: usize,
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub cvar_level: f64,
    pub cvar: f64,
}

impl EvaluationReport {
    pub fn from_returns(config: EvalConfig, returns: Vec<f64>) -> Result<Self> {
        let (mean, std) = mean_std(&returns);
        let cvar_value = cvar(&returns, config.cvar_level)?;
        Ok(Self {
            episodes: returns.len(),
            stderr: std / (returns.len() as f64).sqrt(),
            cvar_level: config.cvar_level,
            cvar: cvar_value,
            mean,
            std,
            returns,
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub records: Vec<EpisodeRecord>,
}

/// Runs `config.episodes` independent episodes in parallel.
pub fn evaluate(config: &EvalConfig) -> Result<Evaluation> {
    config.validate()?;
    let nsmdp = config.domain.load()?;
    evaluate_on(&nsmdp, config)
}

/// [`evaluate`] on an already built model.
pub fn evaluate_on(nsmdp: &Nsmdp, config: &EvalConfig) -> Result<Evaluation> {
    config.validate()?;
    let s0 = match config.start {
        Some(s) => s,
        None => config.domain.start_state()?,
    };
    check_index("state", s0, nsmdp.n_states())
        .map_err(|e| Error::Config {
            path: "start".into(),
            message: e.to_string(),
        })?;
    if nsmdp.states().is_terminal(s0) {
        return Err(Error::Config {
            path: "start".into(),
            message: format!("state {} is terminal", nsmdp.states().name(s0)),
        });
    }
    let agent = Agent::prepare(
        nsmdp,
        config.algorithm,
        &config.planner,
        config.horizon,
        config.seed,
        config.tol,
    )?;
    let epsilon = config.domain.epsilon();
    let records = (0..config.episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rec = run_episode(nsmdp, &agent, s0, config.horizon, config.seed, i)?;
            rec.epsilon = epsilon;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let returns = records.iter().map(|r| r.discounted_return).collect();
    Ok(Evaluation {
        report: EvaluationReport::from_returns(config.clone(), returns)?,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Ordered by epsilon, then algorithm.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, epsilon: f64, algorithm: Algorithm) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.algorithm == algorithm)
    }

    /// Long format: `epsilon,algo,episode,return`.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "algo", "episode", "return"])?;
        for c in &self.cells {
            for (i, r) in c.report.returns.iter().enumerate() {
                w.write_record([
                    c.epsilon.to_string(),
                    c.algorithm.id().to_string(),
                    i.to_string(),
                    r.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `epsilon,algo,mean,std,cvar05`, with `cvar05` at the configured level.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "algo", "mean", "std", "cvar05"])?;
        for c in &self.cells {
            w.write_record([
                c.epsilon.to_string(),
                c.algorithm.id().to_string(),
                c.report.mean.to_string(),
                c.report.std.to_string(),
                c.report.cvar.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One evaluation per `(epsilon, algorithm)` on the builtin bridge.
pub fn sweep(config: &EvalConfig, epsilons: &[f64], algorithms: &[Algorithm]) -> Result<SweepResult> {
    if epsilons.is_empty() {
        return Err(Error::Config {
            path: "epsilon".into(),
            message: "at least one epsilon is required".into(),
        });
    }
    if algorithms.is_empty() {
        return Err(Error::Config {
            path: "algorithm".into(),
            message: "at least one algorithm is required".into(),
        });
    }
    let mut cells = Vec::with_capacity(epsilons.len() * algorithms.len());
    for &epsilon in epsilons {
        let domain = config.domain.with_epsilon(epsilon)?;
        let nsmdp = domain.load()?;
        for &algorithm in algorithms {
            let cfg = EvalConfig {
                domain: domain.clone(),
                algorithm,
                ..config.clone()
            };
            let eval = evaluate_on(&nsmdp, &cfg)?;
            cells.push(SweepCell {
                epsilon,
                algorithm,
                report: eval.report,
            });
        }
    }
    Ok(SweepResult { cells })
}

/// Per-episode CSV: `episode,seed,epsilon,algo,steps,return`.
pub fn write_episodes_csv<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "seed", "epsilon", "algo", "steps", "return"])?;
    for r in records {
        w.write_record([
            r.episode.to_string(),
            r.seed.to_string(),
            r.epsilon.map_or(String::new(), |e| e.to_string()),
            r.algorithm.id().to_string(),
            r.steps.len().to_string(),
            r.discounted_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
