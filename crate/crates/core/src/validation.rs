//! Randomized property and oracle checks shared by the `validate` command
//! and the acceptance suite.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{dp_snapshot_action, finite_horizon_values, value_iteration};
use crate::domain::{build_bridge, generate_lc_nsmdp, BridgeMetric, BridgeSpec, GeneratorConfig};
use crate::error::Result;
use crate::metric::StateMetric;
use crate::model::{Categorical, Snapshot};
use crate::planner::{
    build_tree, rats_plan, ChanceNode, DecisionNode, Heuristic, InnerSolver, PlannerConfig,
    SupportPolicy,
};
use crate::policy::Policy;
use crate::wasserstein::{tv_distance, w1, w1_to_dirac};
use crate::worst_case::{lp_oracle_worst_transition, worst_case_transition, AdmissibleSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub cases: usize,
    /// Largest violation or gap observed, in the units of the check.
    pub worst: f64,
    pub detail: String,
    /// Wall time; not serialized, so reports stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Check {
    fn finish(name: &str, start: Instant, cases: usize, failures: usize, worst: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            pass: failures == 0,
            cases,
            worst,
            detail: format!("{failures}/{cases} failing; {detail}"),
            elapsed: start.elapsed(),
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_categorical<R: Rng>(n: usize, support: usize, rng: &mut R) -> Categorical {
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(rng);
    let mut probs = vec![0.0; n];
    for &s in &states[..support.clamp(1, n)] {
        probs[s] = rng.gen_range(0.01..1.0);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Categorical::new(probs).expect("normalized")
}

fn random_coordinates<R: Rng>(n: usize, rng: &mut R) -> Vec<(i32, i32)> {
    let mut cells: Vec<(i32, i32)> = (0..6).flat_map(|x| (0..6).map(move |y| (x, y))).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells
}

fn random_metric<R: Rng>(n: usize, rng: &mut R) -> StateMetric {
    match rng.gen_range(0..3) {
        0 => StateMetric::discrete_scaled(n, rng.gen_range(0.5..3.0)),
        1 => StateMetric::manhattan(&random_coordinates(n, rng), rng.gen_range(0.2..2.0))
            .expect("distinct coordinates"),
        _ => {
            // Euclidean distances between random points
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            let rows = pts
                .iter()
                .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
                .collect();
            StateMetric::from_matrix(rows).expect("euclidean")
        }
    }
}

/// Ground-metric axioms plus identity, symmetry and triangle inequality of
/// `W1` on random triples.
pub fn wasserstein_axioms(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 1);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(2..=8);
        let metric = random_metric(n, &mut rng);
        let ok_metric = metric.check_axioms().is_ok();
        let [a, b, c] = [0; 3].map(|_| {
            let k = rng.gen_range(1..=n);
            random_categorical(n, k, &mut rng)
        });
        let ab = w1(&a, &b, &metric)?.0;
        let ba = w1(&b, &a, &metric)?.0;
        let ac = w1(&a, &c, &metric)?.0;
        let cb = w1(&c, &b, &metric)?.0;
        let aa = w1(&a, &a, &metric)?.0;
        let violation = [aa.abs(), (ab - ba).abs(), (ab - ac - cb).max(0.0), (-ab).max(0.0)]
            .into_iter()
            .fold(0.0, f64::max);
        worst = worst.max(violation);
        if !ok_metric || violation > 1e-9 {
            failures += 1;
        }
    }
    Ok(Check::finish("wasserstein-axioms", start, cases, failures, worst, format!("max violation {worst:.3e}")))
}

/// Closed-form distance to a Dirac against the general transport solver.
pub fn dirac_closed_form(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 2);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(1..=8);
        let metric = random_metric(n.max(2), &mut rng);
        let n = metric.len();
        let k = rng.gen_range(1..=n);
        let p = random_categorical(n, k, &mut rng);
        let target = rng.gen_range(0..n);
        let closed = w1_to_dirac(&p, target, &metric)?;
        let general = w1(&p, &Categorical::dirac(n, target), &metric)?.0;
        let gap = (closed - general).abs();
        worst = worst.max(gap);
        if gap > 1e-9 {
            failures += 1;
        }
    }
    Ok(Check::finish("w1-dirac-closed-form", start, cases, failures, worst, format!("max gap {worst:.3e}")))
}

/// `W1` under the unit discrete metric equals total variation.
pub fn w1_equals_tv(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 3);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(1..=10);
        let metric = StateMetric::discrete(n);
        let (k1, k2) = (rng.gen_range(1..=n), rng.gen_range(1..=n));
        let mu = random_categorical(n, k1, &mut rng);
        let nu = random_categorical(n, k2, &mut rng);
        let gap = (w1(&mu, &nu, &metric)?.0 - tv_distance(&mu, &nu)?).abs();
        worst = worst.max(gap);
        if gap > 1e-9 {
            failures += 1;
        }
    }
    Ok(Check::finish("w1-equals-tv", start, cases, failures, worst, format!("max gap {worst:.3e}")))
}

/// Which statement [`closed_form_vs_oracle`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Unit discrete metric: closed form equal to the exact minimum.
    DiscreteEquality,
    /// Manhattan metric: closed form no lower than the exact minimum, and
    /// its transition inside the ball.
    ManhattanBound,
}

/// Closed-form chance-node transition against the exact inner minimum on
/// random chance nodes with up to eight states.
pub fn closed_form_vs_oracle(mode: OracleMode, cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 4 + mode as u64);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(2..=8);
        let metric = match mode {
            OracleMode::DiscreteEquality => StateMetric::discrete(n),
            OracleMode::ManhattanBound => {
                StateMetric::manhattan(&random_coordinates(n, &mut rng), 1.0).expect("distinct")
            }
        };
        let k = rng.gen_range(1..=n);
        let p0 = random_categorical(n, k, &mut rng);
        // the adversary may also use a few states outside the support
        let mut children: Vec<usize> = p0.support().collect();
        for s in 0..n {
            if !children.contains(&s) && rng.gen_bool(0.5) {
                children.push(s);
            }
        }
        children.sort_unstable();
        let child_values: Vec<(usize, f64)> =
            children.iter().map(|&s| (s, rng.gen_range(-5.0..5.0))).collect();
        let radius = rng.gen_range(0.0..1.2) * metric.diameter();
        let adm = AdmissibleSet::new(p0.probs(), 0.0, radius, 0.0, &metric)?;
        let closed = worst_case_transition(&adm, &child_values)?;
        let (_, exact) = lp_oracle_worst_transition(&adm, &child_values)?;
        let violation = match mode {
            OracleMode::DiscreteEquality => (closed.expected_value - exact).abs(),
            OracleMode::ManhattanBound => {
                let dist = w1(&Categorical::new(closed.p_hat.clone())?, &p0, &metric)?.0;
                (exact - closed.expected_value).max(0.0).max(dist - radius)
            }
        };
        worst = worst.max(violation);
        if violation > 1e-9 {
            failures += 1;
        }
    }
    let name = match mode {
        OracleMode::DiscreteEquality => "closed-form-equals-oracle-discrete",
        OracleMode::ManhattanBound => "closed-form-bounds-oracle-manhattan",
    };
    Ok(Check::finish(name, start, cases, failures, worst, format!("max violation {worst:.3e}")))
}

fn walk_errors(a: &DecisionNode, b: &DecisionNode, max_depth: usize, gamma: f64, delta: f64, worst: &mut f64) {
    let bound = gamma.powi((max_depth - a.depth) as i32) * delta;
    *worst = worst.max((a.value - b.value).abs() - bound);
    for (ca, cb) in a.children.iter().zip(&b.children) {
        walk_chance(ca, cb, a.depth, max_depth, gamma, delta, worst);
    }
}

fn walk_chance(
    a: &ChanceNode,
    b: &ChanceNode,
    depth: usize,
    max_depth: usize,
    gamma: f64,
    delta: f64,
    worst: &mut f64,
) {
    let bound = gamma.powi((max_depth - depth) as i32) * delta;
    *worst = worst.max((a.value - b.value).abs() - bound);
    for (da, db) in a.children.iter().zip(&b.children) {
        walk_errors(da, db, max_depth, gamma, delta, worst);
    }
}

/// Leaf noise of magnitude `delta` moves every node at depth `d` by at most
/// `gamma^(max_depth - d) delta`.
///
/// Trees are searched with `inner`; the exact solver is a true minimum and
/// therefore non-expansive, the closed form need not be.
pub fn heuristic_error_propagation(
    inner: InnerSolver,
    delta: f64,
    cases: usize,
    seed: u64,
) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 6);
    let (mut failures, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..cases {
        let ns = rng.gen_range(2..=6);
        let max_depth = rng.gen_range(1..=4);
        let mut gen = GeneratorConfig::new(ns, 2, 1);
        gen.max_support = Some(3);
        let nsmdp = generate_lc_nsmdp(&gen, StateMetric::discrete(ns), &mut rng)?;
        let snap = nsmdp.snapshot(0)?;
        let scale = 1.0 / (1.0 - snap.gamma());
        let base: Vec<f64> = (0..ns).map(|_| rng.gen_range(-scale..scale)).collect();
        let noisy: Vec<f64> = base.iter().map(|v| v + rng.gen_range(-delta..=delta)).collect();
        let mut cfg = PlannerConfig::new(max_depth, rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
        cfg.support = SupportPolicy::Snapshot;
        cfg.inner = inner;
        cfg.heuristic = Heuristic::Table(Arc::from(base));
        let s0 = rng.gen_range(0..ns);
        let reference = build_tree(&snap, s0, 0, &cfg)?;
        cfg.heuristic = Heuristic::Table(Arc::from(noisy));
        let perturbed = build_tree(&snap, s0, 0, &cfg)?;
        let mut excess = f64::NEG_INFINITY;
        walk_errors(&reference, &perturbed, max_depth, snap.gamma(), delta, &mut excess);
        worst = worst.max(excess);
        if excess > 1e-9 {
            failures += 1;
        }
    }
    let name = format!("heuristic-error-propagation-{inner:?}-delta-{delta}").to_lowercase();
    Ok(Check::finish(&name, start, cases, failures, worst, format!("max excess over bound {worst:.3e}")))
}

/// `|V^pi_{t0}(s) - V^pi_t(s)| <= |t - t0| (L_p + L_r) / (1 - gamma)` for
/// deterministic policies on random instances whose value functions are
/// 1-Lipschitz under the ground metric.
pub fn snapshot_value_bound(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 7);
    let (mut failures, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..cases {
        let ns = rng.gen_range(2..=6);
        let na = rng.gen_range(1..=3);
        let horizon = rng.gen_range(2..=6);
        let mut gen = GeneratorConfig::new(ns, na, horizon);
        gen.gamma = rng.gen_range(0.5..0.95);
        // values live in [-1/(1-g), 1/(1-g)]; this unit makes them 1-Lipschitz
        let unit = 2.0 / (1.0 - gen.gamma);
        gen.lipschitz_p = rng.gen_range(0.0..0.3) * unit;
        gen.lipschitz_r = rng.gen_range(0.0..0.3);
        let nsmdp = generate_lc_nsmdp(&gen, StateMetric::discrete_scaled(ns, unit), &mut rng)?;
        let rate = (gen.lipschitz_p + gen.lipschitz_r) / (1.0 - gen.gamma);
        let snaps: Vec<Snapshot> = (0..horizon).map(|t| nsmdp.snapshot(t)).collect::<Result<_>>()?;
        for _ in 0..4 {
            let pi = Policy::Deterministic((0..ns).map(|_| rng.gen_range(0..na)).collect());
            let values: Vec<Vec<f64>> =
                snaps.iter().map(|s| s.policy_value(&pi, 1e-10)).collect::<Result<_>>()?;
            for t0 in 0..horizon {
                for t in 0..horizon {
                    let bound = t.abs_diff(t0) as f64 * rate;
                    for s in 0..ns {
                        let excess = (values[t0][s] - values[t][s]).abs() - bound;
                        worst = worst.max(excess);
                        if excess > 1e-6 {
                            failures += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(Check::finish(
        "snapshot-value-bound",
        start,
        cases,
        failures,
        worst,
        format!("max excess over bound {worst:.3e}"),
    ))
}

/// With rewards 1-Lipschitz in the arrival state, expected rewards move by
/// at most `L_p + L_r` per epoch.
pub fn expected_reward_lipschitz(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 8);
    let (mut failures, mut worst, mut pairs) = (0, f64::NEG_INFINITY, 0usize);
    for _ in 0..cases {
        let ns = rng.gen_range(2..=7);
        let na = rng.gen_range(1..=3);
        let horizon = rng.gen_range(2..=6);
        let metric = random_metric(ns, &mut rng);
        let mut gen = GeneratorConfig::new(ns, na, horizon);
        gen.lipschitz_p = rng.gen_range(0.0..0.5) * metric.diameter();
        gen.lipschitz_r = rng.gen_range(0.0..0.3);
        gen.arrival_lipschitz_rewards = true;
        let nsmdp = generate_lc_nsmdp(&gen, metric, &mut rng)?;
        let rate = nsmdp.lipschitz_expected_reward();
        for t in 0..horizon {
            for t2 in t + 1..horizon {
                for s in 0..ns {
                    for a in 0..na {
                        let diff = (nsmdp.expected_reward(t, s, a)? - nsmdp.expected_reward(t2, s, a)?).abs();
                        let excess = diff - rate * (t2 - t) as f64;
                        worst = worst.max(excess);
                        pairs += 1;
                        if excess > 1e-9 {
                            failures += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(Check::finish(
        "expected-reward-lipschitz",
        start,
        cases,
        failures,
        worst,
        format!("{pairs} pairs, max excess over bound {worst:.3e}"),
    ))
}

/// With zero Lipschitz constants RATS is finite-horizon value iteration on
/// the snapshot, and with the snapshot's optimal values at the leaves it
/// picks the same action as DP on the snapshot.
pub fn degenerate_radius(cases: usize, seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = rng(seed, 9);
    let (mut failures, mut worst, mut disagreements) = (0, 0.0f64, 0);
    for _ in 0..cases {
        let ns = rng.gen_range(2..=6);
        let na = rng.gen_range(2..=3);
        let mut gen = GeneratorConfig::new(ns, na, 1);
        gen.lipschitz_p = 0.0;
        gen.lipschitz_r = 0.0;
        let nsmdp = generate_lc_nsmdp(&gen, StateMetric::discrete(ns), &mut rng)?;
        let snap = nsmdp.snapshot(0)?;
        let s0 = rng.gen_range(0..ns);
        let max_depth = rng.gen_range(1..=4);

        let cfg = PlannerConfig::new(max_depth, 0.0, 0.0);
        let plan = rats_plan(&snap, s0, 0, &cfg)?;
        let gap = (plan.root_value - finite_horizon_values(&snap, max_depth)[s0]).abs();
        worst = worst.max(gap);

        let tol = 1e-12;
        let mut cfg = cfg;
        cfg.heuristic = Heuristic::Table(Arc::from(value_iteration(&snap, tol)?.values));
        let agree = rats_plan(&snap, s0, 0, &cfg)?.action == dp_snapshot_action(&snap, s0, tol)?;
        if !agree {
            disagreements += 1;
        }
        if gap > 1e-9 || !agree {
            failures += 1;
        }
    }
    Ok(Check::finish(
        "degenerate-radius",
        start,
        cases,
        failures,
        worst,
        format!("max value gap {worst:.3e}, {disagreements} decision disagreements"),
    ))
}

/// Declared `L_p` of the bridge holds under both metrics for several `epsilon`.
pub fn bridge_lipschitz() -> Result<Check> {
    let start = Instant::now();
    let (mut failures, mut worst, mut cases) = (0, 0.0f64, 0);
    for metric in [BridgeMetric::Discrete, BridgeMetric::Manhattan] {
        for epsilon in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let spec = BridgeSpec {
                epsilon,
                metric,
                ..BridgeSpec::default()
            };
            let m = build_bridge(&spec)?;
            let report = m.verify_lipschitz(m.metric())?;
            worst = worst.max(report.max_p_rate - m.lipschitz_p());
            cases += 1;
            if !report.pass {
                failures += 1;
            }
        }
    }
    Ok(Check::finish("bridge-lipschitz", start, cases, failures, worst, format!("max excess rate {worst:.3e}")))
}

/// The full suite at a size that runs in seconds. `scale` multiplies the
/// case counts.
pub fn suite(seed: u64, scale: f64) -> Result<Vec<Check>> {
    let n = |base: usize| ((base as f64 * scale).round() as usize).max(1);
    Ok(vec![
        wasserstein_axioms(n(200), seed)?,
        dirac_closed_form(n(200), seed)?,
        w1_equals_tv(n(200), seed)?,
        closed_form_vs_oracle(OracleMode::ManhattanBound, n(200), seed)?,
        heuristic_error_propagation(InnerSolver::Exact, 0.1, n(40), seed)?,
        heuristic_error_propagation(InnerSolver::Exact, 1.0, n(40), seed)?,
        snapshot_value_bound(n(40), seed)?,
        expected_reward_lipschitz(n(40), seed)?,
        degenerate_radius(n(40), seed)?,
        bridge_lipschitz()?,
    ])
}
