//! Finite non-stationary MDPs, their stationary snapshots, and the basic
//! operations over them (expected rewards, Lipschitz verification, sampling,
//! policy evaluation).

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{check_index, Error, Result};
use crate::metric::StateMetric;
use crate::policy::Policy;
use crate::wasserstein;

/// Row-stochasticity tolerance used throughout the crate.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Dense reward storage is used up to this many `(t, s, a, s')` entries.
const DENSE_REWARD_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    names: Vec<String>,
    coordinates: Option<Vec<(i32, i32)>>,
    terminal: Vec<bool>,
}

impl StateSpace {
    pub fn new(
        names: Vec<String>,
        coordinates: Option<Vec<(i32, i32)>>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidModel("state space is empty".into()));
        }
        if terminal.len() != names.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                got: terminal.len(),
            });
        }
        if let Some(c) = &coordinates {
            if c.len() != names.len() {
                return Err(Error::Dimension {
                    expected: names.len(),
                    got: c.len(),
                });
            }
        }
        Ok(Self {
            names,
            coordinates,
            terminal,
        })
    }

    /// `n` anonymous non-terminal states named `s0..s{n-1}`.
    pub fn anonymous(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("s{i}")).collect(), None, vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coordinates(&self) -> Option<&[(i32, i32)]> {
        self.coordinates.as_deref()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    names: Vec<String>,
}

impl ActionSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidModel("action space is empty".into()));
        }
        Ok(Self { names })
    }

    pub fn anonymous(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("a{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A probability vector over the states of a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates and renormalizes `probs`. Rows whose mass is off by more
    /// than [`STOCHASTIC_TOL`] are rejected.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        normalize_row(&mut probs)?;
        Ok(Self { probs })
    }

    pub fn dirac(n: usize, s: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[s] = 1.0;
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

pub(crate) fn normalize_row(row: &mut [f64]) -> Result<()> {
    let mut sum = 0.0;
    for p in row.iter_mut() {
        if !p.is_finite() || *p < -STOCHASTIC_TOL || *p > 1.0 + STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("probability {p} outside [0,1]")));
        }
        if *p < 0.0 {
            *p = 0.0;
        }
        sum += *p;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!(
            "row sums to {sum}, not 1 within {STOCHASTIC_TOL}"
        )));
    }
    // rows already stochastic to rounding are kept bit for bit, so that
    // loading a saved model reproduces it exactly
    if (sum - 1.0).abs() > 1e-12 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum RewardTable {
    Dense(Vec<f64>),
    /// Keyed by `(t, s, a, s')`; only transitions inside some support are
    /// stored, everything else reads as zero.
    Sparse(HashMap<(usize, usize, usize, usize), f64>),
}

/// Raw tables used to assemble an [`Nsmdp`]. Transition rows are indexed
/// `[t][s][a][s']`, rewards likewise.
#[derive(Debug, Clone)]
pub struct NsmdpTables {
    pub states: StateSpace,
    pub actions: ActionSpace,
    pub metric: StateMetric,
    pub gamma: f64,
    pub lipschitz_p: f64,
    pub lipschitz_r: f64,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
}

/// A finite-horizon non-stationary MDP with time-indexed transitions and
/// rewards, declared Lipschitz constants and a ground metric.
///
/// Epochs are 0-indexed: `p_t` is defined for `t in 0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nsmdp {
    states: Arc<StateSpace>,
    actions: Arc<ActionSpace>,
    metric: Arc<StateMetric>,
    horizon: usize,
    gamma: f64,
    lipschitz_p: f64,
    lipschitz_r: f64,
    transitions: Vec<f64>,
    rewards: RewardTable,
}

impl Nsmdp {
    pub fn new(tables: NsmdpTables) -> Result<Self> {
        let NsmdpTables {
            states,
            actions,
            metric,
            gamma,
            lipschitz_p,
            lipschitz_r,
            transitions,
            rewards,
        } = tables;
        let (ns, na, horizon) = (states.len(), actions.len(), transitions.len());
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!("discount {gamma} not in [0,1)")));
        }
        if !(lipschitz_p >= 0.0 && lipschitz_r >= 0.0) {
            return Err(Error::InvalidModel("Lipschitz constants must be >= 0".into()));
        }
        if metric.len() != ns {
            return Err(Error::Dimension {
                expected: ns,
                got: metric.len(),
            });
        }
        if rewards.len() != horizon {
            return Err(Error::Dimension {
                expected: horizon,
                got: rewards.len(),
            });
        }

        let mut flat_p = Vec::with_capacity(horizon * ns * na * ns);
        for (t, by_state) in transitions.into_iter().enumerate() {
            check_len(by_state.len(), ns)?;
            for (s, by_action) in by_state.into_iter().enumerate() {
                check_len(by_action.len(), na)?;
                for mut row in by_action {
                    check_len(row.len(), ns)?;
                    if states.is_terminal(s) {
                        row.iter_mut().for_each(|p| *p = 0.0);
                        row[s] = 1.0;
                    }
                    normalize_row(&mut row).map_err(|e| {
                        Error::InvalidModel(format!("transition at t={t}, s={s}: {e}"))
                    })?;
                    flat_p.extend_from_slice(&row);
                }
            }
        }

        let dense = horizon * ns * na * ns <= DENSE_REWARD_LIMIT;
        let mut flat_r = Vec::new();
        let mut sparse = HashMap::new();
        for (t, by_state) in rewards.into_iter().enumerate() {
            check_len(by_state.len(), ns)?;
            for (s, by_action) in by_state.into_iter().enumerate() {
                check_len(by_action.len(), na)?;
                for (a, row) in by_action.into_iter().enumerate() {
                    check_len(row.len(), ns)?;
                    for (s2, mut r) in row.into_iter().enumerate() {
                        if !(-1.0..=1.0).contains(&r) {
                            return Err(Error::InvalidModel(format!(
                                "reward {r} at (t={t}, s={s}, a={a}, s'={s2}) outside [-1,1]"
                            )));
                        }
                        if states.is_terminal(s) {
                            r = 0.0;
                        }
                        if dense {
                            flat_r.push(r);
                        } else if r != 0.0 {
                            sparse.insert((t, s, a, s2), r);
                        }
                    }
                }
            }
        }

        Ok(Self {
            states: Arc::new(states),
            actions: Arc::new(actions),
            metric: Arc::new(metric),
            horizon,
            gamma,
            lipschitz_p,
            lipschitz_r,
            transitions: flat_p,
            rewards: if dense {
                RewardTable::Dense(flat_r)
            } else {
                RewardTable::Sparse(sparse)
            },
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn metric(&self) -> &StateMetric {
        &self.metric
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lipschitz_p(&self) -> f64 {
        self.lipschitz_p
    }

    pub fn lipschitz_r(&self) -> f64 {
        self.lipschitz_r
    }

    /// `L_R = L_p + L_r`, the time-Lipschitz constant of the expected reward.
    pub fn lipschitz_expected_reward(&self) -> f64 {
        self.lipschitz_p + self.lipschitz_r
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    fn check(&self, t: usize, s: usize, a: usize) -> Result<()> {
        if t >= self.horizon {
            return Err(Error::Horizon {
                epoch: t,
                horizon: self.horizon,
            });
        }
        check_index("state", s, self.n_states())?;
        check_index("action", a, self.n_actions())
    }

    fn row_offset(&self, t: usize, s: usize, a: usize) -> usize {
        let (ns, na) = (self.n_states(), self.n_actions());
        ((t * ns + s) * na + a) * ns
    }

    /// `p_t(. | s, a)`; indices are not checked.
    pub fn transition_row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let off = self.row_offset(t, s, a);
        &self.transitions[off..off + self.n_states()]
    }

    pub fn transition(&self, t: usize, s: usize, a: usize) -> Result<Categorical> {
        self.check(t, s, a)?;
        Ok(Categorical {
            probs: self.transition_row(t, s, a).to_vec(),
        })
    }

    /// `r_t(s, a, s')`; indices are not checked.
    pub fn reward(&self, t: usize, s: usize, a: usize, s2: usize) -> f64 {
        match &self.rewards {
            RewardTable::Dense(v) => v[self.row_offset(t, s, a) + s2],
            RewardTable::Sparse(m) => m.get(&(t, s, a, s2)).copied().unwrap_or(0.0),
        }
    }

    /// `R_t(s, a) = sum_{s'} p_t(s'|s,a) r_t(s,a,s')`.
    pub fn expected_reward(&self, t: usize, s: usize, a: usize) -> Result<f64> {
        self.check(t, s, a)?;
        Ok(self.expected_reward_unchecked(t, s, a))
    }

    fn expected_reward_unchecked(&self, t: usize, s: usize, a: usize) -> f64 {
        self.transition_row(t, s, a)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(s2, p)| p * self.reward(t, s, a, s2))
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }

    /// The stationary slice `MDP_{t0}`.
    pub fn snapshot(&self, t0: usize) -> Result<Snapshot> {
        if t0 >= self.horizon {
            return Err(Error::Horizon {
                epoch: t0,
                horizon: self.horizon,
            });
        }
        let (ns, na) = (self.n_states(), self.n_actions());
        let start = self.row_offset(t0, 0, 0);
        let p = self.transitions[start..start + ns * na * ns].to_vec();
        let mut r = Vec::with_capacity(ns * na * ns);
        for s in 0..ns {
            for a in 0..na {
                for s2 in 0..ns {
                    r.push(self.reward(t0, s, a, s2));
                }
            }
        }
        Ok(Snapshot::from_parts(
            self.states.clone(),
            self.actions.clone(),
            self.metric.clone(),
            self.gamma,
            t0,
            p,
            r,
        ))
    }

    /// Consecutive-epoch Lipschitz check of transitions (in `W1` under
    /// `metric`) and rewards (pointwise).
    pub fn verify_lipschitz(&self, metric: &StateMetric) -> Result<LipschitzReport> {
        if metric.len() != self.n_states() {
            return Err(Error::Dimension {
                expected: self.n_states(),
                got: metric.len(),
            });
        }
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut max_p: f64 = 0.0;
        let mut max_r: f64 = 0.0;
        for t in 0..self.horizon.saturating_sub(1) {
            for s in 0..ns {
                for a in 0..na {
                    let p0 = self.transition_row(t, s, a);
                    let p1 = self.transition_row(t + 1, s, a);
                    if p0 != p1 {
                        max_p = max_p.max(wasserstein::w1_distance(p0, p1, metric)?);
                    }
                    for s2 in 0..ns {
                        max_r = max_r
                            .max((self.reward(t, s, a, s2) - self.reward(t + 1, s, a, s2)).abs());
                    }
                }
            }
        }
        Ok(LipschitzReport {
            max_p_rate: max_p,
            max_r_rate: max_r,
            pass: max_p <= self.lipschitz_p + STOCHASTIC_TOL
                && max_r <= self.lipschitz_r + STOCHASTIC_TOL,
        })
    }

    /// Draws `s' ~ p_t(.|s,a)` and returns it with `r_t(s,a,s')`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        t: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        self.check(t, s, a)?;
        if self.states.is_terminal(s) {
            return Err(Error::Misuse(format!(
                "cannot sample from terminal state {}",
                self.states.name(s)
            )));
        }
        let s2 = sample_index(self.transition_row(t, s, a), rng);
        Ok((s2, self.reward(t, s, a, s2)))
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub max_p_rate: f64,
    pub max_r_rate: f64,
    pub pass: bool,
}

/// The stationary MDP obtained by freezing an [`Nsmdp`] at one epoch.
///
/// This is the only model the snapshot-based planners ever see.
#[derive(Debug, Clone)]
pub struct Snapshot {
    states: Arc<StateSpace>,
    actions: Arc<ActionSpace>,
    metric: Arc<StateMetric>,
    gamma: f64,
    source_epoch: usize,
    p: Vec<f64>,
    r: Vec<f64>,
    expected: Vec<f64>,
    supports: Vec<Vec<usize>>,
}

impl Snapshot {
    fn from_parts(
        states: Arc<StateSpace>,
        actions: Arc<ActionSpace>,
        metric: Arc<StateMetric>,
        gamma: f64,
        source_epoch: usize,
        p: Vec<f64>,
        r: Vec<f64>,
    ) -> Self {
        let ns = states.len();
        let mut expected = Vec::with_capacity(p.len() / ns);
        let mut supports = Vec::with_capacity(p.len() / ns);
        for (row, rrow) in p.chunks(ns).zip(r.chunks(ns)) {
            let support: Vec<usize> = (0..ns).filter(|&j| row[j] > 0.0).collect();
            let e: f64 = support.iter().map(|&j| row[j] * rrow[j]).sum();
            expected.push(e.clamp(-1.0, 1.0));
            supports.push(support);
        }
        Self {
            states,
            actions,
            metric,
            gamma,
            source_epoch,
            p,
            r,
            expected,
            supports,
        }
    }

    /// Builds a snapshot directly from stationary tables indexed `[s][a][s']`.
    pub fn from_tables(
        states: StateSpace,
        actions: ActionSpace,
        metric: StateMetric,
        gamma: f64,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let m = Nsmdp::new(NsmdpTables {
            states,
            actions,
            metric,
            gamma,
            lipschitz_p: 0.0,
            lipschitz_r: 0.0,
            transitions: vec![transitions],
            rewards: vec![rewards],
        })?;
        m.snapshot(0)
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn metric(&self) -> &StateMetric {
        &self.metric
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The epoch this snapshot was taken at (informational only).
    pub fn source_epoch(&self) -> usize {
        self.source_epoch
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    #[inline]
    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions() + a
    }

    pub fn p_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        let off = self.idx(s, a) * ns;
        &self.p[off..off + ns]
    }

    pub fn r_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        let off = self.idx(s, a) * ns;
        &self.r[off..off + ns]
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.p_row(s, a)[s2]
    }

    pub fn r(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.r_row(s, a)[s2]
    }

    /// `R(s, a)` under this snapshot.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.expected[self.idx(s, a)]
    }

    /// States with positive probability under `p(.|s,a)`, ascending.
    pub fn support(&self, s: usize, a: usize) -> &[usize] {
        &self.supports[self.idx(s, a)]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.states.is_terminal(s)
    }

    /// `R(s,a) + gamma * E_{p(.|s,a)} V`.
    pub fn backup(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        let row = self.p_row(s, a);
        self.expected_reward(s, a)
            + self.gamma * self.support(s, a).iter().map(|&j| row[j] * values[j]).sum::<f64>()
    }

    /// Iterative evaluation of a stationary policy; the result is within
    /// `tol` of the fixed point in sup-norm.
    pub fn policy_value(&self, pi: &Policy, tol: f64) -> Result<Vec<f64>> {
        if !(tol > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        let ns = self.n_states();
        let weights = pi.stationary_weights(ns, self.n_actions())?;
        let stop = if self.gamma > 0.0 {
            tol * (1.0 - self.gamma) / self.gamma
        } else {
            f64::INFINITY
        };
        let mut v = vec![0.0; ns];
        loop {
            let mut next = vec![0.0; ns];
            let mut delta: f64 = 0.0;
            for s in 0..ns {
                if self.is_terminal(s) {
                    continue;
                }
                next[s] = weights[s]
                    .iter()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|&(a, w)| w * self.backup(s, a, &v))
                    .sum();
                delta = delta.max((next[s] - v[s]).abs());
            }
            v = next;
            if delta <= stop {
                return Ok(v);
            }
        }
    }
}

/// Free-function form of [`Snapshot::policy_value`].
pub fn policy_value_snapshot(snap: &Snapshot, pi: &Policy, tol: f64) -> Result<Vec<f64>> {
    snap.policy_value(pi, tol)
}
