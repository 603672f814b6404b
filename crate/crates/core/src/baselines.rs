//! Dynamic-programming baselines: planning on the current snapshot, and
//! omniscient backward induction on the true time-dependent model.

use serde::Serialize;

use crate::error::{check_index, Error, Result};
use crate::model::{Nsmdp, Snapshot};
use crate::policy::Policy;

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Discounted value iteration on a snapshot, stopping once the sup-norm
/// update falls below `tol`.
pub fn value_iteration(snap: &Snapshot, tol: f64) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let ns = snap.n_states();
    let mut values = vec![0.0; ns];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next = vec![0.0; ns];
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if snap.is_terminal(s) {
                continue;
            }
            next[s] = greedy(snap, s, &values).1;
            delta = delta.max((next[s] - values[s]).abs());
        }
        values = next;
        if delta < tol {
            return Ok(ValueIteration { values, iterations });
        }
    }
}

/// `H` backups of `V_0 = 0` on a snapshot.
pub fn finite_horizon_values(snap: &Snapshot, steps: usize) -> Vec<f64> {
    let ns = snap.n_states();
    let mut values = vec![0.0; ns];
    for _ in 0..steps {
        values = (0..ns)
            .map(|s| {
                if snap.is_terminal(s) {
                    0.0
                } else {
                    greedy(snap, s, &values).1
                }
            })
            .collect();
    }
    values
}

/// Best action and its backup value, ties to the lowest action index.
fn greedy(snap: &Snapshot, s: usize, values: &[f64]) -> (usize, f64) {
    let mut best = (0, snap.backup(s, 0, values));
    for a in 1..snap.n_actions() {
        let q = snap.backup(s, a, values);
        if q > best.1 {
            best = (a, q);
        }
    }
    best
}

/// Greedy stationary policy with respect to `values`.
pub fn greedy_policy(snap: &Snapshot, values: &[f64]) -> Result<Policy> {
    if values.len() != snap.n_states() {
        return Err(Error::Dimension {
            expected: snap.n_states(),
            got: values.len(),
        });
    }
    Ok(Policy::Deterministic(
        (0..snap.n_states()).map(|s| greedy(snap, s, values).0).collect(),
    ))
}

/// Greedy action at `s0` after value iteration on the snapshot.
pub fn dp_snapshot_action(snap: &Snapshot, s0: usize, tol: f64) -> Result<usize> {
    check_index("state", s0, snap.n_states())?;
    if snap.is_terminal(s0) {
        return Err(Error::Misuse(format!(
            "cannot plan from terminal state {}",
            snap.states().name(s0)
        )));
    }
    let vi = value_iteration(snap, tol)?;
    Ok(greedy(snap, s0, &vi.values).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsmdpSolution {
    pub policy: Policy,
    /// `values[t][s]` for `t` in `0..=horizon`.
    pub values: Vec<Vec<f64>>,
}

/// Backward induction over epochs `horizon-1 .. 0` on the true model, with
/// the value at `horizon` bootstrapped by value iteration on the latest
/// available snapshot.
pub fn dp_nsmdp(nsmdp: &Nsmdp, horizon: usize, tol: f64) -> Result<NsmdpSolution> {
    if horizon > nsmdp.horizon() {
        return Err(Error::Horizon {
            epoch: horizon,
            horizon: nsmdp.horizon(),
        });
    }
    let (ns, na, gamma) = (nsmdp.n_states(), nsmdp.n_actions(), nsmdp.gamma());
    let tail = nsmdp.snapshot(horizon.min(nsmdp.horizon() - 1))?;
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    values[horizon] = value_iteration(&tail, tol)?.values;
    let mut table = vec![vec![0usize; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            if nsmdp.states().is_terminal(s) {
                continue;
            }
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..na {
                let row = nsmdp.transition_row(t, s, a);
                let q = nsmdp.expected_reward(t, s, a)?
                    + gamma
                        * row
                            .iter()
                            .zip(&values[t + 1])
                            .filter(|(p, _)| **p > 0.0)
                            .map(|(p, v)| p * v)
                            .sum::<f64>();
                if q > best.1 {
                    best = (a, q);
                }
            }
            table[t][s] = best.0;
            values[t][s] = best.1;
        }
    }
    Ok(NsmdpSolution {
        policy: Policy::NonStationary(table),
        values,
    })
}

/// Greedy non-stationary policy from [`dp_nsmdp`].
pub fn dp_nsmdp_policy(nsmdp: &Nsmdp, horizon: usize) -> Result<Policy> {
    Ok(dp_nsmdp(nsmdp, horizon, DEFAULT_TOL)?.policy)
}
