//! Exact 1-Wasserstein distance between categorical distributions on a
//! finite metric space.
//!
//! The general solver is a successive-shortest-path min-cost flow on the
//! complete bipartite transport graph. Under the discrete metric the
//! distance collapses to `scale * TV`, which is used as a fast path by
//! [`w1`] but never by [`w1_flow`].

use crate::error::{Error, Result};
use crate::metric::{MetricKind, StateMetric};
use crate::model::{Categorical, STOCHASTIC_TOL};

/// Mass below this is treated as zero inside the flow solver.
const MASS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    plan: Vec<f64>,
    cost: f64,
}

impl TransportPlan {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.n + j]
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// `sum_ij plan[i][j] * d(i, j)`, recomputed from the plan entries.
    pub fn cost_under(&self, metric: &StateMetric) -> f64 {
        let mut c = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                c += self.get(i, j) * metric.d(i, j);
            }
        }
        c
    }
}

fn check_dims(a: usize, b: usize, metric: &StateMetric) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            expected: a,
            got: b,
        });
    }
    if metric.len() != a {
        return Err(Error::Dimension {
            expected: metric.len(),
            got: a,
        });
    }
    Ok(())
}

/// `W1(mu, nu)` together with an optimal plan.
pub fn w1(mu: &Categorical, nu: &Categorical, metric: &StateMetric) -> Result<(f64, TransportPlan)> {
    check_dims(mu.len(), nu.len(), metric)?;
    if metric.kind() == MetricKind::Discrete {
        Ok(discrete_plan(mu.probs(), nu.probs(), metric.scale()))
    } else {
        Ok(flow_plan(mu.probs(), nu.probs(), metric))
    }
}

/// Same as [`w1`] but always solved as a min-cost flow.
pub fn w1_flow(
    mu: &Categorical,
    nu: &Categorical,
    metric: &StateMetric,
) -> Result<(f64, TransportPlan)> {
    check_dims(mu.len(), nu.len(), metric)?;
    Ok(flow_plan(mu.probs(), nu.probs(), metric))
}

/// Distance only, on raw probability slices.
pub(crate) fn w1_distance(mu: &[f64], nu: &[f64], metric: &StateMetric) -> Result<f64> {
    check_dims(mu.len(), nu.len(), metric)?;
    Ok(if metric.kind() == MetricKind::Discrete {
        metric.scale() * tv(mu, nu)
    } else {
        flow_plan(mu, nu, metric).0
    })
}

/// `W1(p, delta_target) = sum_s p(s) d(s, target)`.
pub fn w1_to_dirac(p: &Categorical, target: usize, metric: &StateMetric) -> Result<f64> {
    check_dims(p.len(), metric.len(), metric)?;
    crate::error::check_index("state", target, p.len())?;
    Ok(w1_to_dirac_slice(p.probs(), target, metric))
}

pub(crate) fn w1_to_dirac_slice(p: &[f64], target: usize, metric: &StateMetric) -> f64 {
    let row = metric.row(target);
    p.iter()
        .zip(row)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, d)| q * d)
        .sum()
}

/// Total-variation distance `0.5 * sum |mu_i - nu_i|`.
pub fn tv_distance(mu: &Categorical, nu: &Categorical) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Dimension {
            expected: mu.len(),
            got: nu.len(),
        });
    }
    Ok(tv(mu.probs(), nu.probs()))
}

fn tv(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn discrete_plan(mu: &[f64], nu: &[f64], scale: f64) -> (f64, TransportPlan) {
    let n = mu.len();
    let mut plan = vec![0.0; n * n];
    let mut excess = vec![0.0; n];
    let mut deficit = vec![0.0; n];
    for i in 0..n {
        let m = mu[i].min(nu[i]);
        plan[i * n + i] = m;
        excess[i] = mu[i] - m;
        deficit[i] = nu[i] - m;
    }
    let total_excess: f64 = excess.iter().sum();
    let total_deficit: f64 = deficit.iter().sum();
    if total_excess > 0.0 && total_deficit > 0.0 {
        for i in 0..n {
            if excess[i] > 0.0 {
                for j in 0..n {
                    if deficit[j] > 0.0 {
                        plan[i * n + j] += excess[i] * deficit[j] / total_deficit;
                    }
                }
            }
        }
    }
    let cost = scale * tv(mu, nu);
    (
        cost,
        TransportPlan {
            n,
            plan,
            cost,
        },
    )
}

/// Successive shortest paths with Johnson potentials. Nodes `0..n` are
/// sources, `n..2n` sinks; forward arcs are uncapacitated.
fn flow_plan(mu: &[f64], nu: &[f64], metric: &StateMetric) -> (f64, TransportPlan) {
    let n = mu.len();
    let mut flow = vec![0.0; n * n];
    let mut supply = mu.to_vec();
    let mut demand = nu.to_vec();
    let mut pot = vec![0.0; 2 * n];
    let mut dist = vec![f64::INFINITY; 2 * n];
    let mut prev = vec![usize::MAX; 2 * n];
    let mut done = vec![false; 2 * n];

    // Each augmentation exhausts a supply, a demand or a reverse arc.
    for _ in 0..(4 * n * n + 4 * n) {
        if supply.iter().all(|&s| s <= MASS_EPS) || demand.iter().all(|&d| d <= MASS_EPS) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        // dense Dijkstra
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..2 * n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..n {
                    let v = n + j;
                    let rc = (metric.d(u, j) + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[i * n + j] > MASS_EPS {
                        let rc = (-metric.d(i, j) + pot[u] - pot[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let target = (0..n)
            .filter(|&j| demand[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(tj) = target else { break };
        let t = n + tj;
        let dt = dist[t];

        // bottleneck along the path
        let mut amount = demand[tj];
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                // reverse arc sink(u) -> source(v)
                amount = amount.min(flow[v * n + (u - n)]);
            }
            v = u;
        }
        amount = amount.min(supply[v]);
        let src = v;

        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * n + (v - n)] += amount;
            } else {
                let f = &mut flow[v * n + (u - n)];
                *f = (*f - amount).max(0.0);
            }
            v = u;
        }
        supply[src] -= amount;
        demand[tj] -= amount;
        for x in 0..2 * n {
            pot[x] += dist[x].min(dt);
        }
    }

    let mut cost = 0.0;
    for i in 0..n {
        for j in 0..n {
            cost += flow[i * n + j] * metric.d(i, j);
        }
    }
    (
        cost,
        TransportPlan {
            n,
            plan: flow,
            cost,
        },
    )
}

/// True if `plan` has marginals `mu`/`nu` within the stochasticity tolerance.
pub fn plan_is_feasible(plan: &TransportPlan, mu: &Categorical, nu: &Categorical) -> bool {
    let rows = plan.row_sums();
    let cols = plan.col_sums();
    rows.iter().zip(mu.probs()).all(|(a, b)| (a - b).abs() <= STOCHASTIC_TOL)
        && cols.iter().zip(nu.probs()).all(|(a, b)| (a - b).abs() <= STOCHASTIC_TOL)
        && plan.plan.iter().all(|&x| x >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(p: &[f64]) -> Categorical {
        Categorical::new(p.to_vec()).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let m = StateMetric::manhattan(&[(0, 0), (0, 1), (1, 1)], 1.0).unwrap();
        let p = cat(&[0.2, 0.3, 0.5]);
        assert!(w1(&p, &p, &m).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn two_diracs_are_at_ground_distance() {
        let m = StateMetric::manhattan(&[(0, 0), (0, 1), (3, 1)], 1.0).unwrap();
        let (d, plan) = w1(&Categorical::dirac(3, 0), &Categorical::dirac(3, 2), &m).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
        assert!((plan.get(0, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_metric_hand_example() {
        let m = StateMetric::discrete(2);
        let mu = cat(&[0.5, 0.5]);
        let nu = cat(&[0.75, 0.25]);
        assert!((w1(&mu, &nu, &m).unwrap().0 - 0.25).abs() < 1e-12);
        assert!((w1_flow(&mu, &nu, &m).unwrap().0 - 0.25).abs() < 1e-12);
        assert!((tv_distance(&mu, &nu).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tv_of_disjoint_diracs_is_one() {
        let tv = tv_distance(&Categorical::dirac(3, 0), &Categorical::dirac(3, 1)).unwrap();
        assert_eq!(tv, 1.0);
        let p = cat(&[0.1, 0.9]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn dirac_closed_form_examples() {
        let m = StateMetric::discrete(2);
        assert_eq!(w1_to_dirac(&Categorical::dirac(2, 1), 1, &m).unwrap(), 0.0);
        let p = cat(&[0.3, 0.7]);
        assert!((w1_to_dirac(&p, 0, &m).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = StateMetric::discrete(3);
        let mu = Categorical::uniform(3);
        let nu = Categorical::uniform(2);
        assert!(matches!(w1(&mu, &nu, &m), Err(Error::Dimension { .. })));
        assert!(matches!(
            w1(&Categorical::uniform(2), &nu, &m),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn line_metric_matches_cdf_formula() {
        // on a line W1 = integral of |F_mu - F_nu|
        let coords: Vec<(i32, i32)> = (0..6).map(|i| (0, i)).collect();
        let m = StateMetric::manhattan(&coords, 1.0).unwrap();
        let mu = cat(&[0.1, 0.2, 0.0, 0.3, 0.25, 0.15]);
        let nu = cat(&[0.3, 0.0, 0.25, 0.05, 0.1, 0.3]);
        let mut fa = 0.0;
        let mut fb = 0.0;
        let mut expected = 0.0;
        for i in 0..5 {
            fa += mu.probs()[i];
            fb += nu.probs()[i];
            expected += (fa - fb as f64).abs();
        }
        let (d, plan) = w1(&mu, &nu, &m).unwrap();
        assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
        assert!(plan_is_feasible(&plan, &mu, &nu));
        assert!((plan.cost_under(&m) - d).abs() < 1e-12);
    }
}
