//! Risk-averse minimax tree search over a single snapshot.
//!
//! Decision nodes maximize over actions; chance nodes minimize over the
//! models admissible at their elapsed time from the snapshot epoch.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::model::{sample_index, Snapshot};
use crate::policy::Policy;
use crate::worst_case::{closed_form, exact_inner_min, worst_case_reward, AdmissibleSet};

/// Which successor states the adversary may move mass to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportPolicy {
    /// Support of `p_t0(.|s,a)` only.
    Snapshot,
    /// Union of `p_t0(.|s,a')` supports over every action `a'`.
    #[default]
    Reachable,
    /// Every state.
    Global,
}

/// How chance nodes account for rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardModel {
    /// `min R + gamma E_p V` with `R` in a ball of radius `(L_p + L_r) d`
    /// around the snapshot expected reward, independent of `p`.
    #[default]
    Expected,
    /// `min E_p[r(s,a,s') + gamma V(s')]` with every `r` lowered by `L_r d`.
    /// Rewards collected on arrival then move with the transported mass.
    PerTransition,
}

/// Solver for the inner minimization over transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Mix the snapshot row with a Dirac on the worst successor.
    #[default]
    ClosedForm,
    /// Exact minimum over the Wasserstein ball.
    Exact,
}

/// Leaf evaluation.
#[derive(Debug, Clone, Default)]
pub enum Heuristic {
    #[default]
    Zero,
    /// Monte-Carlo value of `policy` in the snapshot, minus the drift
    /// penalty `d (L_p + L_r) / (1 - gamma)`.
    MonteCarlo {
        policy: Policy,
        rollouts: usize,
        seed: u64,
    },
    /// Fixed per-state values, used as is.
    Table(Arc<[f64]>),
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub max_depth: usize,
    pub lipschitz_p: f64,
    pub lipschitz_r: f64,
    pub heuristic: Heuristic,
    pub memoize: bool,
    pub support: SupportPolicy,
    pub reward_model: RewardModel,
    pub inner: InnerSolver,
    /// Floor worst-case rewards at -1.
    pub clip_rewards: bool,
}

impl PlannerConfig {
    pub fn new(max_depth: usize, lipschitz_p: f64, lipschitz_r: f64) -> Self {
        Self {
            max_depth,
            lipschitz_p,
            lipschitz_r,
            heuristic: Heuristic::Zero,
            memoize: true,
            support: SupportPolicy::default(),
            reward_model: RewardModel::default(),
            inner: InnerSolver::default(),
            clip_rewards: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub decision_evaluations: u64,
    pub chance_evaluations: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub action: usize,
    pub root_value: f64,
    /// Root chance-node value per action.
    pub action_values: Vec<f64>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionNode {
    pub state: usize,
    pub epoch: usize,
    pub depth: usize,
    pub value: f64,
    /// Empty for leaves and terminal states.
    pub children: Vec<ChanceNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChanceNode {
    pub state: usize,
    pub epoch: usize,
    pub action: usize,
    pub value: f64,
    /// Worst-case transition chosen by the adversary.
    pub p_hat: Vec<f64>,
    /// Worst-case expected reward under `p_hat`.
    pub r_hat: f64,
    /// One child per candidate successor.
    pub children: Vec<DecisionNode>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DepthCount {
    pub decision: u64,
    pub chance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeStatistics {
    pub decision_nodes: u64,
    pub chance_nodes: u64,
    /// Node counts indexed by depth.
    pub depth_profile: Vec<DepthCount>,
}

struct Search<'a> {
    snap: &'a Snapshot,
    cfg: &'a PlannerConfig,
    t0: usize,
    reachable: Vec<Vec<usize>>,
    all_states: Vec<usize>,
    memo: HashMap<(usize, usize), f64>,
    mc_cache: HashMap<usize, f64>,
    stats: SearchStats,
}

impl<'a> Search<'a> {
    fn new(snap: &'a Snapshot, cfg: &'a PlannerConfig, t0: usize) -> Result<Self> {
        if cfg.max_depth < 1 {
            return Err(Error::Domain("max depth must be at least 1".into()));
        }
        if !(cfg.lipschitz_p >= 0.0 && cfg.lipschitz_r >= 0.0) {
            return Err(Error::Domain("Lipschitz constants must be >= 0".into()));
        }
        let ns = snap.n_states();
        match &cfg.heuristic {
            Heuristic::Table(values) if values.len() != ns => {
                return Err(Error::Dimension {
                    expected: ns,
                    got: values.len(),
                })
            }
            Heuristic::MonteCarlo { rollouts: 0, .. } => {
                return Err(Error::Domain("at least one rollout is required".into()))
            }
            _ => {}
        }
        let reachable = if cfg.support == SupportPolicy::Reachable {
            (0..ns)
                .map(|s| {
                    let mut set: Vec<usize> = (0..snap.n_actions())
                        .flat_map(|a| snap.support(s, a).iter().copied())
                        .collect();
                    set.sort_unstable();
                    set.dedup();
                    set
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            snap,
            cfg,
            t0,
            reachable,
            all_states: (0..ns).collect(),
            memo: HashMap::new(),
            mc_cache: HashMap::new(),
            stats: SearchStats::default(),
        })
    }

    fn candidates(&self, s: usize, a: usize) -> &[usize] {
        match self.cfg.support {
            SupportPolicy::Snapshot => self.snap.support(s, a),
            SupportPolicy::Reachable => &self.reachable[s],
            SupportPolicy::Global => &self.all_states,
        }
    }

    fn leaf(&mut self, s: usize, d: usize) -> Result<f64> {
        match &self.cfg.heuristic {
            Heuristic::Zero => Ok(0.0),
            Heuristic::Table(values) => Ok(values[s]),
            Heuristic::MonteCarlo {
                policy,
                rollouts,
                seed,
            } => {
                let base = match self.mc_cache.get(&s) {
                    Some(v) => *v,
                    None => {
                        // one stream per (t0, s) so repeated leaves agree bit for bit
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        rng.set_stream(((self.t0 as u64) << 32) | s as u64);
                        let v = mc_estimate(self.snap, s, policy, *rollouts, &mut rng)?;
                        self.mc_cache.insert(s, v);
                        v
                    }
                };
                Ok(base - drift_penalty(self.snap.gamma(), self.l_total(), d))
            }
        }
    }

    fn l_total(&self) -> f64 {
        self.cfg.lipschitz_p + self.cfg.lipschitz_r
    }

    /// Value of chance node `(s, d, a)` from its candidates' values, plus
    /// the worst model when `want_model` is set.
    fn backup(
        &self,
        s: usize,
        d: usize,
        a: usize,
        child: &[(usize, f64)],
        want_model: bool,
    ) -> (f64, Option<(Vec<f64>, f64)>) {
        let snap = self.snap;
        let gamma = snap.gamma();
        let elapsed = d as f64;
        let radius_p = self.cfg.lipschitz_p * elapsed;
        let center = snap.p_row(s, a);
        match self.cfg.reward_model {
            RewardModel::Expected => {
                let r_hat = worst_case_reward(
                    snap.expected_reward(s, a),
                    self.l_total() * elapsed,
                    self.cfg.clip_rewards,
                );
                let (ev, p_hat) = self.inner_min(center, radius_p, child, want_model);
                (r_hat + gamma * ev, p_hat.map(|p| (p, r_hat)))
            }
            RewardModel::PerTransition => {
                let r_row = snap.r_row(s, a);
                let radius_r = self.cfg.lipschitz_r * elapsed;
                let clip = self.cfg.clip_rewards;
                let targets: Vec<(usize, f64)> = child
                    .iter()
                    .map(|&(j, v)| (j, worst_case_reward(r_row[j], radius_r, clip) + gamma * v))
                    .collect();
                let (value, p_hat) = self.inner_min(center, radius_p, &targets, want_model);
                let model = p_hat.map(|p| {
                    let r_hat = child
                        .iter()
                        .map(|&(j, _)| p[j] * worst_case_reward(r_row[j], radius_r, clip))
                        .sum();
                    (p, r_hat)
                });
                (value, model)
            }
        }
    }

    fn inner_min(
        &self,
        center: &[f64],
        radius_p: f64,
        values: &[(usize, f64)],
        want_model: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let metric = self.snap.metric();
        match self.cfg.inner {
            InnerSolver::ClosedForm => {
                let adm = AdmissibleSet::new(center, 0.0, radius_p, 0.0, metric)
                    .expect("planner radii are validated");
                let tr = closed_form(&adm, values);
                (tr.expected_value, want_model.then_some(tr.p_hat))
            }
            InnerSolver::Exact => {
                let (q, v) = exact_inner_min(center, radius_p, metric, values);
                (v, want_model.then_some(q))
            }
        }
    }

    fn decision_value(&mut self, s: usize, d: usize) -> Result<f64> {
        if self.snap.is_terminal(s) {
            return Ok(0.0);
        }
        if self.cfg.memoize {
            if let Some(v) = self.memo.get(&(s, d)) {
                self.stats.cache_hits += 1;
                return Ok(*v);
            }
        }
        self.stats.decision_evaluations += 1;
        let value = if d == self.cfg.max_depth {
            self.leaf(s, d)?
        } else {
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.snap.n_actions() {
                best = best.max(self.chance_value(s, d, a)?);
            }
            best
        };
        if self.cfg.memoize {
            self.memo.insert((s, d), value);
        }
        Ok(value)
    }

    fn chance_value(&mut self, s: usize, d: usize, a: usize) -> Result<f64> {
        self.stats.chance_evaluations += 1;
        let candidates = self.candidates(s, a).to_vec();
        let mut child = Vec::with_capacity(candidates.len());
        for j in candidates {
            child.push((j, self.decision_value(j, d + 1)?));
        }
        Ok(self.backup(s, d, a, &child, false).0)
    }

    fn expand_decision(&mut self, s: usize, d: usize) -> Result<DecisionNode> {
        let epoch = self.t0 + d;
        let mut node = DecisionNode {
            state: s,
            epoch,
            depth: d,
            value: 0.0,
            children: Vec::new(),
        };
        if self.snap.is_terminal(s) {
            return Ok(node);
        }
        if d == self.cfg.max_depth {
            node.value = self.leaf(s, d)?;
            return Ok(node);
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.snap.n_actions() {
            let candidates = self.candidates(s, a).to_vec();
            let mut children = Vec::with_capacity(candidates.len());
            for j in candidates {
                children.push(self.expand_decision(j, d + 1)?);
            }
            let child: Vec<(usize, f64)> = children.iter().map(|c| (c.state, c.value)).collect();
            let (value, model) = self.backup(s, d, a, &child, true);
            let (p_hat, r_hat) = model.expect("model requested");
            best = best.max(value);
            node.children.push(ChanceNode {
                state: s,
                epoch,
                action: a,
                value,
                p_hat,
                r_hat,
                children,
            });
        }
        node.value = best;
        Ok(node)
    }
}

fn check_root(snap: &Snapshot, s0: usize) -> Result<()> {
    check_index("state", s0, snap.n_states())?;
    if snap.is_terminal(s0) {
        return Err(Error::Misuse(format!(
            "cannot plan from terminal state {}",
            snap.states().name(s0)
        )));
    }
    Ok(())
}

/// Evaluates the minimax tree rooted at `(s0, t0)` and returns the action
/// with the largest root chance-node value (ties to the lowest index).
pub fn rats_plan(snap: &Snapshot, s0: usize, t0: usize, cfg: &PlannerConfig) -> Result<Plan> {
    let mut search = Search::new(snap, cfg, t0)?;
    check_root(snap, s0)?;
    search.stats.decision_evaluations += 1;
    let mut action_values = Vec::with_capacity(snap.n_actions());
    for a in 0..snap.n_actions() {
        action_values.push(search.chance_value(s0, 0, a)?);
    }
    let mut action = 0;
    for (a, v) in action_values.iter().enumerate() {
        if *v > action_values[action] {
            action = a;
        }
    }
    Ok(Plan {
        action,
        root_value: action_values[action],
        action_values,
        stats: search.stats,
    })
}

/// Builds the explicit tree (never memoized) with every node's value.
pub fn build_tree(snap: &Snapshot, s0: usize, t0: usize, cfg: &PlannerConfig) -> Result<DecisionNode> {
    let mut search = Search::new(snap, cfg, t0)?;
    check_root(snap, s0)?;
    search.expand_decision(s0, 0)
}

/// Value of a node under construction: max over chance children for a
/// decision node, or the stored leaf/terminal value when it has none.
pub fn minimax(node: &DecisionNode) -> f64 {
    if node.children.is_empty() {
        node.value
    } else {
        node.children
            .iter()
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn tree_statistics(tree: &DecisionNode) -> TreeStatistics {
    fn walk(node: &DecisionNode, stats: &mut TreeStatistics) {
        if stats.depth_profile.len() <= node.depth {
            stats.depth_profile.resize(node.depth + 1, DepthCount::default());
        }
        stats.decision_nodes += 1;
        stats.depth_profile[node.depth].decision += 1;
        for c in &node.children {
            stats.chance_nodes += 1;
            stats.depth_profile[node.depth].chance += 1;
            for child in &c.children {
                walk(child, stats);
            }
        }
    }
    let mut stats = TreeStatistics {
        decision_nodes: 0,
        chance_nodes: 0,
        depth_profile: Vec::new(),
    };
    walk(tree, &mut stats);
    stats
}

/// `d (L_p + L_r) / (1 - gamma)`.
fn drift_penalty(gamma: f64, l_total: f64, elapsed: usize) -> f64 {
    elapsed as f64 * l_total / (1.0 - gamma)
}

/// Rollout length `H` with `gamma^H <= 1e-3`, so that truncation bias is at
/// most `1e-3 / (1 - gamma)`.
pub fn rollout_horizon(gamma: f64) -> usize {
    if gamma <= 0.0 {
        1
    } else {
        (1e-3f64.ln() / gamma.ln()).ceil().max(1.0) as usize
    }
}

fn mc_estimate<R: Rng + ?Sized>(
    snap: &Snapshot,
    s: usize,
    policy: &Policy,
    rollouts: usize,
    rng: &mut R,
) -> Result<f64> {
    let weights = policy.stationary_weights(snap.n_states(), snap.n_actions())?;
    let probs: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| {
            let mut row = vec![0.0; snap.n_actions()];
            for &(a, p) in w {
                row[a] = p;
            }
            row
        })
        .collect();
    let horizon = rollout_horizon(snap.gamma());
    let mut total = 0.0;
    for _ in 0..rollouts {
        let (mut state, mut discount, mut ret) = (s, 1.0, 0.0);
        for _ in 0..horizon {
            if snap.is_terminal(state) {
                break;
            }
            let a = sample_index(&probs[state], rng);
            let next = sample_index(snap.p_row(state, a), rng);
            ret += discount * snap.r(state, a, next);
            discount *= snap.gamma();
            state = next;
        }
        total += ret;
    }
    Ok(total / rollouts as f64)
}

/// Monte-Carlo lower bound on the value at `(s, t)` seen from the snapshot:
/// mean discounted return of `policy` in `snap` minus
/// `|t - t0| L_R / (1 - gamma)`, with `t0` the snapshot's epoch.
pub fn heuristic_mc<R: Rng + ?Sized>(
    s: usize,
    t: usize,
    snap: &Snapshot,
    policy: &Policy,
    rollouts: usize,
    lipschitz_reward: f64,
    rng: &mut R,
) -> Result<f64> {
    check_index("state", s, snap.n_states())?;
    if rollouts == 0 {
        return Err(Error::Domain("at least one rollout is required".into()));
    }
    let elapsed = t.abs_diff(snap.source_epoch());
    Ok(mc_estimate(snap, s, policy, rollouts, rng)?
        - drift_penalty(snap.gamma(), lipschitz_reward, elapsed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::StateMetric;
    use crate::model::{ActionSpace, StateSpace};

    /// States: 0 start, 1 good (terminal), 2 bad (terminal).
    fn fork(gamma: f64) -> Snapshot {
        let states = StateSpace::new(
            vec!["start".into(), "good".into(), "bad".into()],
            None,
            vec![false, true, true],
        )
        .unwrap();
        let p = vec![
            vec![vec![0.0, 0.5, 0.5], vec![0.0, 0.9, 0.1]],
            vec![vec![0.0, 1.0, 0.0]; 2],
            vec![vec![0.0, 0.0, 1.0]; 2],
        ];
        let r = vec![
            vec![vec![0.0, 1.0, -1.0], vec![0.0, 0.5, -0.5]],
            vec![vec![0.0; 3]; 2],
            vec![vec![0.0; 3]; 2],
        ];
        Snapshot::from_tables(
            states,
            ActionSpace::anonymous(2).unwrap(),
            StateMetric::discrete(3),
            gamma,
            p,
            r,
        )
        .unwrap()
    }

    #[test]
    fn depth_one_picks_larger_one_step_value() {
        let snap = fork(0.9);
        let cfg = PlannerConfig::new(1, 0.0, 0.0);
        let plan = rats_plan(&snap, 0, 0, &cfg).unwrap();
        // action 0: R = 0, action 1: R = 0.9*0.5 - 0.1*0.5 = 0.4
        assert!((plan.action_values[0] - 0.0).abs() < 1e-15);
        assert!((plan.action_values[1] - 0.4).abs() < 1e-15);
        assert_eq!(plan.action, 1);
        assert_eq!(plan.root_value, plan.action_values[1]);
    }

    #[test]
    fn terminal_root_and_zero_depth_are_rejected() {
        let snap = fork(0.9);
        let cfg = PlannerConfig::new(1, 0.0, 0.0);
        assert!(matches!(rats_plan(&snap, 1, 0, &cfg), Err(Error::Misuse(_))));
        let cfg = PlannerConfig::new(0, 0.0, 0.0);
        assert!(matches!(rats_plan(&snap, 0, 0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn minimax_of_internal_node_is_max() {
        let leaf = |v| DecisionNode {
            state: 0,
            epoch: 0,
            depth: 1,
            value: v,
            children: Vec::new(),
        };
        assert_eq!(minimax(&leaf(-0.3)), -0.3);
        let chance = |a, v| ChanceNode {
            state: 0,
            epoch: 0,
            action: a,
            value: v,
            p_hat: vec![1.0],
            r_hat: 0.0,
            children: vec![leaf(0.0)],
        };
        let node = DecisionNode {
            state: 0,
            epoch: 0,
            depth: 0,
            value: 0.0,
            children: vec![chance(0, 0.2), chance(1, -0.4)],
        };
        assert_eq!(minimax(&node), 0.2);
    }

    fn binary_chain() -> Snapshot {
        // every (s, a) has a two-state support
        let p = vec![vec![vec![0.5, 0.5], vec![0.3, 0.7]]; 2];
        let r = vec![vec![vec![0.1, -0.2], vec![0.0, 0.3]]; 2];
        Snapshot::from_tables(
            StateSpace::anonymous(2).unwrap(),
            ActionSpace::anonymous(2).unwrap(),
            StateMetric::discrete(2),
            0.9,
            p,
            r,
        )
        .unwrap()
    }

    #[test]
    fn tree_counts_with_binary_support() {
        let snap = binary_chain();
        let mut cfg = PlannerConfig::new(2, 0.1, 0.0);
        cfg.support = SupportPolicy::Snapshot;
        let tree = build_tree(&snap, 0, 0, &cfg).unwrap();
        let stats = tree_statistics(&tree);
        assert_eq!(stats.chance_nodes, 2 + 2 * (2 * 2));
        assert_eq!(stats.depth_profile[0].chance, 2);
        assert_eq!(stats.depth_profile[1].chance, 8);
        assert_eq!(stats.depth_profile[2].decision, 16);
    }

    #[test]
    fn tree_and_search_agree_with_and_without_memo() {
        let snap = binary_chain();
        for inner in [InnerSolver::ClosedForm, InnerSolver::Exact] {
            for reward_model in [RewardModel::Expected, RewardModel::PerTransition] {
                let mut cfg = PlannerConfig::new(4, 0.2, 0.05);
                cfg.inner = inner;
                cfg.reward_model = reward_model;
                let tree = build_tree(&snap, 1, 3, &cfg).unwrap();
                let memo = rats_plan(&snap, 1, 3, &cfg).unwrap();
                cfg.memoize = false;
                let plain = rats_plan(&snap, 1, 3, &cfg).unwrap();
                assert_eq!(memo.root_value.to_bits(), plain.root_value.to_bits());
                assert_eq!(memo.action, plain.action);
                assert_eq!(tree.value.to_bits(), plain.root_value.to_bits());
                assert!(memo.stats.decision_evaluations < plain.stats.decision_evaluations);
            }
        }
    }

    #[test]
    fn root_chance_nodes_are_snapshot_backups() {
        let snap = binary_chain();
        let mut cfg = PlannerConfig::new(1, 5.0, 5.0);
        cfg.heuristic = Heuristic::Table(Arc::from(vec![0.7, -0.4]));
        let plan = rats_plan(&snap, 0, 0, &cfg).unwrap();
        for a in 0..2 {
            let expected = snap.backup(0, a, &[0.7, -0.4]);
            assert!((plan.action_values[a] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_heuristic_penalty_substitution() {
        // absorbing zero-reward state: the rollout value is exactly zero
        let snap = fork(0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = Policy::Deterministic(vec![0, 0, 0]);
        let at_t0 = heuristic_mc(1, 0, &snap, &pi, 4, 1.0, &mut rng).unwrap();
        assert_eq!(at_t0, 0.0);
        let later = heuristic_mc(1, 2, &snap, &pi, 4, 1.0, &mut rng).unwrap();
        assert!((later + 20.0).abs() < 1e-9);
    }

    #[test]
    fn rollout_horizon_bounds_truncation() {
        for gamma in [0.5, 0.9, 0.99] {
            let h = rollout_horizon(gamma);
            assert!(gamma.powi(h as i32) <= 1e-3);
            assert!(gamma.powi(h as i32 - 1) > 1e-3);
        }
    }
}
