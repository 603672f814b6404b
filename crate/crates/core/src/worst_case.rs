//! Worst-case models inside the admissible set around a snapshot.
//!
//! A chance node at elapsed time `d = |t - t0|` may face any transition
//! within `W1`-distance `L_p * d` of the snapshot row and any expected
//! reward within `L_R * d` of the snapshot reward. The closed-form solver
//! mixes the snapshot row with a Dirac on the worst successor; the oracle
//! solves the inner minimization exactly.

use serde::Serialize;

use crate::error::{check_index, Error, Result};
use crate::metric::StateMetric;
use crate::model::{Categorical, Nsmdp, STOCHASTIC_TOL};
use crate::policy::Policy;
use crate::wasserstein::w1_to_dirac_slice;

/// `B_W1(center_p, radius_p) x B_|.|(center_r, radius_r)`.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibleSet<'a> {
    center_p: &'a [f64],
    center_r: f64,
    radius_p: f64,
    radius_r: f64,
    metric: &'a StateMetric,
}

impl<'a> AdmissibleSet<'a> {
    pub fn new(
        center_p: &'a [f64],
        center_r: f64,
        radius_p: f64,
        radius_r: f64,
        metric: &'a StateMetric,
    ) -> Result<Self> {
        if center_p.len() != metric.len() {
            return Err(Error::Dimension {
                expected: metric.len(),
                got: center_p.len(),
            });
        }
        if !(radius_p >= 0.0 && radius_r >= 0.0) {
            return Err(Error::Domain(format!(
                "admissible radii must be >= 0 (got {radius_p}, {radius_r})"
            )));
        }
        Ok(Self {
            center_p,
            center_r,
            radius_p,
            radius_r,
            metric,
        })
    }

    /// The set seen from a snapshot at elapsed time `elapsed`, with
    /// `radius_p = L_p * elapsed` and `radius_r = (L_p + L_r) * elapsed`.
    pub fn at_elapsed(
        center_p: &'a Categorical,
        center_r: f64,
        elapsed: f64,
        lipschitz_p: f64,
        lipschitz_r: f64,
        metric: &'a StateMetric,
    ) -> Result<Self> {
        Self::new(
            center_p.probs(),
            center_r,
            lipschitz_p * elapsed,
            (lipschitz_p + lipschitz_r) * elapsed,
            metric,
        )
    }

    pub fn center_p(&self) -> &[f64] {
        self.center_p
    }

    pub fn center_r(&self) -> f64 {
        self.center_r
    }

    pub fn radius_p(&self) -> f64 {
        self.radius_p
    }

    pub fn radius_r(&self) -> f64 {
        self.radius_r
    }

    pub fn metric(&self) -> &StateMetric {
        self.metric
    }
}

/// Closed-form worst transition for one chance node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstTransition {
    pub p_hat: Vec<f64>,
    pub lambda: f64,
    pub s_dagger: usize,
    /// `sum_s' p_hat(s') V(s')`.
    pub expected_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseSolution {
    pub p_hat: Vec<f64>,
    pub r_hat: f64,
    pub lambda: f64,
    pub s_dagger: usize,
    /// `r_hat + gamma * sum_s' p_hat(s') V(s')`.
    pub value: f64,
}

/// `center_r - radius_r`, floored at -1 when `clip` is set.
pub fn worst_case_reward(center_r: f64, radius_r: f64, clip: bool) -> f64 {
    let r = center_r - radius_r;
    if clip {
        r.max(-1.0)
    } else {
        r
    }
}

fn check_child_values(adm: &AdmissibleSet<'_>, child_values: &[(usize, f64)]) -> Result<()> {
    if child_values.is_empty() {
        return Err(Error::Misuse("no child values supplied".into()));
    }
    let n = adm.center_p.len();
    for &(s, v) in child_values {
        check_index("state", s, n)?;
        if !v.is_finite() {
            return Err(Error::Domain(format!("child value for state {s} is {v}")));
        }
    }
    for (s, &p) in adm.center_p.iter().enumerate() {
        if p > 0.0 && !child_values.iter().any(|&(c, _)| c == s) {
            return Err(Error::Misuse(format!(
                "child values miss state {s} from the snapshot support"
            )));
        }
    }
    Ok(())
}

/// Lowest value, ties to the lowest state index.
pub(crate) fn argmin_state(child_values: &[(usize, f64)]) -> (usize, f64) {
    let mut best = child_values[0];
    for &(s, v) in &child_values[1..] {
        if v < best.1 || (v == best.1 && s < best.0) {
            best = (s, v);
        }
    }
    best
}

/// Mixing weight toward the Dirac at the worst successor.
pub(crate) fn saturation_lambda(w1_to_worst: f64, radius_p: f64) -> f64 {
    if radius_p <= 0.0 {
        0.0
    } else if w1_to_worst <= radius_p {
        1.0
    } else {
        radius_p / w1_to_worst
    }
}

/// `p_hat = (1 - lambda) p_0 + lambda delta_{s_dagger}` with `s_dagger` the
/// worst child.
pub fn worst_case_transition(
    adm: &AdmissibleSet<'_>,
    child_values: &[(usize, f64)],
) -> Result<WorstTransition> {
    check_child_values(adm, child_values)?;
    Ok(closed_form(adm, child_values))
}

pub(crate) fn closed_form(adm: &AdmissibleSet<'_>, child_values: &[(usize, f64)]) -> WorstTransition {
    let (s_dagger, v_min) = argmin_state(child_values);
    let lambda = saturation_lambda(
        w1_to_dirac_slice(adm.center_p, s_dagger, adm.metric),
        adm.radius_p,
    );
    let mut p_hat: Vec<f64> = adm.center_p.iter().map(|p| (1.0 - lambda) * p).collect();
    p_hat[s_dagger] += lambda;
    let expected_value = (1.0 - lambda)
        * child_values
            .iter()
            .map(|&(s, v)| adm.center_p[s] * v)
            .sum::<f64>()
        + lambda * v_min;
    WorstTransition {
        p_hat,
        lambda,
        s_dagger,
        expected_value,
    }
}

/// Full closed-form solution of the chance-node problem.
pub fn chance_node_solution(
    adm: &AdmissibleSet<'_>,
    child_values: &[(usize, f64)],
    gamma: f64,
    clip: bool,
) -> Result<WorstCaseSolution> {
    let tr = worst_case_transition(adm, child_values)?;
    let r_hat = worst_case_reward(adm.center_r, adm.radius_r, clip);
    Ok(WorstCaseSolution {
        value: r_hat + gamma * tr.expected_value,
        p_hat: tr.p_hat,
        r_hat,
        lambda: tr.lambda,
        s_dagger: tr.s_dagger,
    })
}

/// `min_{(p,R) in adm} R + gamma E_p V` using the closed-form transition;
/// rewards are clipped at -1.
pub fn chance_node_value(adm: &AdmissibleSet<'_>, child_values: &[(usize, f64)], gamma: f64) -> Result<f64> {
    Ok(chance_node_solution(adm, child_values, gamma, true)?.value)
}

/// Exact `min { sum_s' p(s') V(s') : W1(p, center_p) <= radius_p }` with
/// `p` supported on the states of `child_values`.
///
/// Solved jointly over transport plans: every unit of source mass picks a
/// destination, paying `d(i, j)` from the shared budget and `V(j)` in the
/// objective. This is the LP relaxation of a multiple-choice knapsack, so
/// filling the budget along the lower convex hulls of each source's
/// `(cost, value)` options, steepest first, is optimal.
pub fn lp_oracle_worst_transition(
    adm: &AdmissibleSet<'_>,
    child_values: &[(usize, f64)],
) -> Result<(Categorical, f64)> {
    check_child_values(adm, child_values)?;
    let (q, value) = exact_inner_min(adm.center_p, adm.radius_p, adm.metric, child_values);
    // renormalization guards against accumulated rounding only
    Ok((Categorical::new(q)?, value))
}

struct Segment {
    source: usize,
    from: usize,
    to: usize,
    slope: f64,
    cost: f64,
}

pub(crate) fn exact_inner_min(
    center_p: &[f64],
    radius_p: f64,
    metric: &StateMetric,
    child_values: &[(usize, f64)],
) -> (Vec<f64>, f64) {
    let n = center_p.len();
    let mut q = vec![0.0; n];
    let mut segments = Vec::new();
    // per-source hull vertices, as indices into child_values
    let mut hulls: Vec<(usize, Vec<(f64, f64, usize)>)> = Vec::new();
    for (i, &mass) in center_p.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let mut options: Vec<(f64, f64, usize)> = child_values
            .iter()
            .map(|&(j, v)| (metric.d(i, j), v, j))
            .collect();
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut pareto: Vec<(f64, f64, usize)> = Vec::new();
        for o in options {
            if pareto.last().map_or(true, |l| o.1 < l.1) {
                pareto.push(o);
            }
        }
        let mut hull: Vec<(f64, f64, usize)> = Vec::new();
        for p in pareto {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // drop b unless slopes strictly increase through it
                if (b.1 - a.1) * (p.0 - b.0) >= (p.1 - b.1) * (b.0 - a.0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        for k in 0..hull.len().saturating_sub(1) {
            let (c0, v0, _) = hull[k];
            let (c1, v1, _) = hull[k + 1];
            segments.push(Segment {
                source: hulls.len(),
                from: k,
                to: k + 1,
                slope: (v1 - v0) / (c1 - c0),
                cost: mass * (c1 - c0),
            });
        }
        hulls.push((i, hull));
    }
    // steepest descent first; stable on ties so each hull is walked in order
    segments.sort_by(|a, b| a.slope.total_cmp(&b.slope));

    // position[h] = (vertex index, fraction moved to the next vertex)
    let mut position: Vec<(usize, f64)> = vec![(0, 0.0); hulls.len()];
    let mut budget = radius_p;
    for seg in &segments {
        if budget <= 0.0 {
            break;
        }
        debug_assert_eq!(position[seg.source].0, seg.from);
        if seg.cost <= budget {
            budget -= seg.cost;
            position[seg.source] = (seg.to, 0.0);
        } else {
            position[seg.source] = (seg.from, budget / seg.cost);
            budget = 0.0;
        }
    }
    for ((i, hull), (k, frac)) in hulls.iter().zip(&position) {
        let mass = center_p[*i];
        q[hull[*k].2] += mass * (1.0 - frac);
        if *frac > 0.0 {
            q[hull[*k + 1].2] += mass * frac;
        }
    }
    let lookup = |s: usize| child_values.iter().find(|c| c.0 == s).map_or(0.0, |c| c.1);
    let value = q
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(s, m)| m * lookup(s))
        .sum();
    (q, value)
}

/// Chained versus relaxed worst-case values of a fixed policy.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationGap {
    /// Minimum over grid sequences `p_1, p_2, ...` with each `p_i` inside
    /// the ball of radius `L_p` around `p_{i-1}`.
    pub chained: Vec<f64>,
    /// Backward recursion with balls of radius `L_p * i` around `p_0`.
    pub relaxed: Vec<f64>,
    /// `chained - relaxed` per state.
    pub gap: Vec<f64>,
    pub sequences: u64,
}

/// Sequence budget for [`brute_force_worst_nsmdp`].
const MAX_SEQUENCES: u64 = 50_000_000;

/// Exhaustive worst case over discretized, chained per-epoch models of a
/// small NSMDP, evaluated over its `N` epochs with zero terminal value.
///
/// The epoch-0 model is the NSMDP's own. Rewards take their lowest
/// admissible value `R_0 - i * L_R` (clipped at -1) at epoch `i`, which is
/// optimal for the adversary since the value is increasing in every
/// reward. Only transitions that influence a later reward are enumerated.
pub fn brute_force_worst_nsmdp(
    nsmdp: &Nsmdp,
    pi: &Policy,
    grid_resolution: f64,
) -> Result<RelaxationGap> {
    let (ns, na, horizon) = (nsmdp.n_states(), nsmdp.n_actions(), nsmdp.horizon());
    if ns > 4 || na > 2 || horizon > 4 {
        return Err(Error::Refused(format!(
            "brute force is limited to |S| <= 4, |A| <= 2, N <= 4 (got {ns}, {na}, {horizon})"
        )));
    }
    let Policy::Deterministic(actions) = pi else {
        return Err(Error::Misuse("brute force needs a stationary deterministic policy".into()));
    };
    if actions.len() != ns {
        return Err(Error::Dimension {
            expected: ns,
            got: actions.len(),
        });
    }
    for &a in actions {
        check_index("action", a, na)?;
    }
    if !(grid_resolution > 0.0 && grid_resolution <= 1.0) {
        return Err(Error::Domain("grid resolution must be in (0, 1]".into()));
    }
    let steps = (1.0 / grid_resolution).round() as usize;
    let gamma = nsmdp.gamma();
    let lp = nsmdp.lipschitz_p();
    let l_r = nsmdp.lipschitz_expected_reward();
    let metric = nsmdp.metric();
    let live: Vec<usize> = (0..ns).filter(|&s| !nsmdp.states().is_terminal(s)).collect();

    let base_r: Vec<f64> = (0..ns)
        .map(|s| nsmdp.expected_reward(0, s, actions[s]))
        .collect::<Result<_>>()?;
    let reward_at = |i: usize, s: usize| -> f64 {
        if nsmdp.states().is_terminal(s) {
            0.0
        } else {
            worst_case_reward(base_r[s], l_r * i as f64, true)
        }
    };
    let p0: Vec<Vec<f64>> = (0..ns)
        .map(|s| nsmdp.transition_row(0, s, actions[s]).to_vec())
        .collect();

    // relaxed: exact inner minimum with radius L_p * i around p_0
    let all: Vec<usize> = (0..ns).collect();
    let mut v_next = vec![0.0; ns];
    for i in (0..horizon).rev() {
        let mut v = vec![0.0; ns];
        for &s in &live {
            let cont = if i + 1 < horizon {
                let child: Vec<(usize, f64)> = all.iter().map(|&j| (j, v_next[j])).collect();
                exact_inner_min(&p0[s], lp * i as f64, metric, &child).1
            } else {
                0.0
            };
            v[s] = reward_at(i, s) + gamma * cont;
        }
        v_next = v;
    }
    let relaxed = v_next;

    // chained: enumerate p_1 .. p_{N-2}
    let grid = simplex_grid(ns, steps);
    let free_epochs = horizon.saturating_sub(2);
    let mut chained = vec![f64::INFINITY; ns];
    let mut sequences = 0u64;
    let mut chain: Vec<Vec<Vec<f64>>> = vec![p0.clone()];
    let ctx = ChainCtx {
        grid: &grid,
        live: &live,
        metric,
        lp,
        gamma,
        horizon,
        free_epochs,
        reward_at: &reward_at,
    };
    ctx.enumerate(&mut chain, &mut chained, &mut sequences)?;
    for s in 0..ns {
        if nsmdp.states().is_terminal(s) {
            chained[s] = 0.0;
        }
    }
    let gap = chained.iter().zip(&relaxed).map(|(c, r)| c - r).collect();
    Ok(RelaxationGap {
        chained,
        relaxed,
        gap,
        sequences,
    })
}

struct ChainCtx<'a> {
    grid: &'a [Vec<f64>],
    live: &'a [usize],
    metric: &'a StateMetric,
    lp: f64,
    gamma: f64,
    horizon: usize,
    free_epochs: usize,
    reward_at: &'a dyn Fn(usize, usize) -> f64,
}

impl ChainCtx<'_> {
    fn enumerate(
        &self,
        chain: &mut Vec<Vec<Vec<f64>>>,
        best: &mut [f64],
        sequences: &mut u64,
    ) -> Result<()> {
        if chain.len() == self.free_epochs + 1 {
            *sequences += 1;
            if *sequences > MAX_SEQUENCES {
                return Err(Error::Refused(format!(
                    "more than {MAX_SEQUENCES} model sequences; use a coarser grid"
                )));
            }
            let ns = best.len();
            let mut v = vec![0.0; ns];
            for i in (0..self.horizon).rev() {
                let mut next = vec![0.0; ns];
                for &s in self.live {
                    let cont = if i + 1 < self.horizon {
                        chain[i][s].iter().zip(&v).map(|(p, x)| p * x).sum()
                    } else {
                        0.0
                    };
                    next[s] = (self.reward_at)(i, s) + self.gamma * cont;
                }
                v = next;
            }
            for (b, x) in best.iter_mut().zip(v) {
                *b = b.min(x);
            }
            return Ok(());
        }
        let prev = chain.last().expect("chain starts with p_0").clone();
        let candidates: Vec<Vec<&Vec<f64>>> = self
            .live
            .iter()
            .map(|&s| {
                self.grid
                    .iter()
                    .filter(|q| {
                        crate::wasserstein::w1_distance(&prev[s], q, self.metric)
                            .map_or(false, |d| d <= self.lp + STOCHASTIC_TOL)
                    })
                    .collect()
            })
            .collect();
        if candidates.iter().any(Vec::is_empty) {
            return Err(Error::Refused(
                "grid too coarse: a ball contains no grid point".into(),
            ));
        }
        let mut idx = vec![0usize; self.live.len()];
        loop {
            let mut model = prev.clone();
            for (k, &s) in self.live.iter().enumerate() {
                model[s] = candidates[k][idx[k]].clone();
            }
            chain.push(model);
            self.enumerate(chain, best, sequences)?;
            chain.pop();
            // odometer
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < candidates[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// All distributions on `n` points with masses in multiples of `1/steps`.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionSpace, NsmdpTables, StateSpace};

    fn disc2() -> StateMetric {
        StateMetric::discrete(2)
    }

    #[test]
    fn reward_examples() {
        assert_eq!(worst_case_reward(0.5, 0.0, true), 0.5);
        assert!((worst_case_reward(0.5, 0.3, true) - 0.2).abs() < 1e-15);
        assert_eq!(worst_case_reward(-0.9, 0.5, true), -1.0);
        assert!((worst_case_reward(-0.9, 0.5, false) + 1.4).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_keeps_the_snapshot_row() {
        let m = disc2();
        let p = [0.3, 0.7];
        let adm = AdmissibleSet::new(&p, 0.0, 0.0, 0.0, &m).unwrap();
        let tr = worst_case_transition(&adm, &[(0, 1.0), (1, 0.0)]).unwrap();
        assert_eq!(tr.lambda, 0.0);
        assert_eq!(tr.p_hat, vec![0.3, 0.7]);
    }

    #[test]
    fn two_state_hand_example() {
        let m = disc2();
        let p = [0.5, 0.5];
        let adm = AdmissibleSet::new(&p, 0.0, 0.25, 0.1, &m).unwrap();
        let values = [(0, 0.0), (1, 1.0)];
        let tr = worst_case_transition(&adm, &values).unwrap();
        assert_eq!(tr.s_dagger, 0);
        assert!((tr.lambda - 0.5).abs() < 1e-15);
        assert!((tr.p_hat[0] - 0.75).abs() < 1e-15);
        assert!((tr.expected_value - 0.25).abs() < 1e-15);
        let (q, v) = lp_oracle_worst_transition(&adm, &values).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!((q.probs()[0] - 0.75).abs() < 1e-12);
        let value = chance_node_value(&adm, &values, 0.9).unwrap();
        assert!((value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn saturated_ball_moves_everything_to_the_worst_child() {
        let m = disc2();
        let p = [0.5, 0.5];
        let adm = AdmissibleSet::new(&p, 0.0, 0.6, 0.0, &m).unwrap();
        let tr = worst_case_transition(&adm, &[(0, 2.0), (1, -1.0)]).unwrap();
        assert_eq!(tr.lambda, 1.0);
        assert_eq!(tr.p_hat, vec![0.0, 1.0]);
    }

    #[test]
    fn ties_break_to_lowest_state() {
        let m = StateMetric::discrete(3);
        let p = [0.0, 1.0, 0.0];
        let adm = AdmissibleSet::new(&p, 0.0, 0.5, 0.0, &m).unwrap();
        let tr = worst_case_transition(&adm, &[(2, 0.0), (1, 1.0), (0, 0.0)]).unwrap();
        assert_eq!(tr.s_dagger, 0);
    }

    #[test]
    fn oracle_with_zero_radius_returns_center() {
        let m = StateMetric::discrete(3);
        let p = [0.2, 0.3, 0.5];
        let adm = AdmissibleSet::new(&p, 0.0, 0.0, 0.0, &m).unwrap();
        let (q, _) = lp_oracle_worst_transition(&adm, &[(0, 1.0), (1, 2.0), (2, 0.0)]).unwrap();
        for (a, b) in q.probs().iter().zip(p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_with_huge_radius_returns_global_argmin() {
        let m = StateMetric::manhattan(&[(0, 0), (0, 3), (5, 5)], 1.0).unwrap();
        let p = [0.2, 0.3, 0.5];
        let adm = AdmissibleSet::new(&p, 0.0, 1e6, 0.0, &m).unwrap();
        let (q, v) = lp_oracle_worst_transition(&adm, &[(0, 1.0), (1, -2.0), (2, 0.0)]).unwrap();
        assert!((q.probs()[1] - 1.0).abs() < 1e-12);
        assert!((v + 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_prefers_moving_the_most_valuable_mass() {
        // the closed form moves every source proportionally and is beaten here
        let m = StateMetric::discrete(3);
        let p = [0.4, 0.4, 0.2];
        let values = [(0, 0.5), (1, 1.0), (2, 0.0)];
        let adm = AdmissibleSet::new(&p, 0.0, 0.2, 0.0, &m).unwrap();
        let (_, exact) = lp_oracle_worst_transition(&adm, &values).unwrap();
        let closed = worst_case_transition(&adm, &values).unwrap().expected_value;
        assert!((exact - 0.4).abs() < 1e-12);
        assert!((closed - 0.45).abs() < 1e-12);
    }

    #[test]
    fn empty_and_incomplete_child_values_are_misuse() {
        let m = disc2();
        let p = [0.5, 0.5];
        let adm = AdmissibleSet::new(&p, 0.0, 0.1, 0.0, &m).unwrap();
        assert!(matches!(worst_case_transition(&adm, &[]), Err(Error::Misuse(_))));
        assert!(matches!(
            worst_case_transition(&adm, &[(0, 0.0)]),
            Err(Error::Misuse(_))
        ));
        assert!(matches!(
            AdmissibleSet::new(&p, 0.0, -0.1, 0.0, &m),
            Err(Error::Domain(_))
        ));
    }

    fn one_state(lp: f64, lr: f64, horizon: usize, r: f64) -> Nsmdp {
        Nsmdp::new(NsmdpTables {
            states: StateSpace::anonymous(1).unwrap(),
            actions: ActionSpace::anonymous(1).unwrap(),
            metric: StateMetric::discrete(1),
            gamma: 0.5,
            lipschitz_p: lp,
            lipschitz_r: lr,
            transitions: vec![vec![vec![vec![1.0]]]; horizon],
            rewards: vec![vec![vec![vec![r]]]; horizon],
        })
        .unwrap()
    }

    #[test]
    fn brute_force_one_state_sums_worst_rewards() {
        let m = one_state(0.0, 0.1, 3, 0.5);
        let res = brute_force_worst_nsmdp(&m, &Policy::Deterministic(vec![0]), 0.1).unwrap();
        let expected = 0.5 + 0.5 * 0.4 + 0.25 * 0.3;
        assert!((res.chained[0] - expected).abs() < 1e-12);
        assert!((res.relaxed[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let m = one_state(0.0, 0.0, 5, 0.0);
        assert!(matches!(
            brute_force_worst_nsmdp(&m, &Policy::Deterministic(vec![0]), 0.1),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 10).len(), 11);
        assert_eq!(simplex_grid(3, 4).len(), 15);
    }
}
