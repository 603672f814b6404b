use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::STOCHASTIC_TOL;

/// A sequence of decision rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "table", rename_all = "kebab-case")]
pub enum Policy {
    /// One action per state.
    Deterministic(Vec<usize>),
    /// One distribution over actions per state.
    Stochastic(Vec<Vec<f64>>),
    /// One action per `(t, s)`, indexed `[t][s]`.
    NonStationary(Vec<Vec<usize>>),
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Stochastic(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn is_stationary(&self) -> bool {
        !matches!(self, Policy::NonStationary(_))
    }

    /// Deterministic action at `(t, s)`, if the rule is deterministic.
    pub fn action(&self, t: usize, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic(a) => a.get(s).copied(),
            Policy::Stochastic(_) => None,
            Policy::NonStationary(table) => table.get(t).and_then(|row| row.get(s)).copied(),
        }
    }

    /// Per-state `(action, weight)` lists for a stationary policy.
    pub(crate) fn stationary_weights(
        &self,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Vec<Vec<(usize, f64)>>> {
        match self {
            Policy::NonStationary(_) => Err(Error::Misuse(
                "a stationary policy is required here".into(),
            )),
            Policy::Deterministic(table) => {
                check_rows(table.len(), n_states)?;
                table
                    .iter()
                    .map(|&a| {
                        if a < n_actions {
                            Ok(vec![(a, 1.0)])
                        } else {
                            Err(Error::Index {
                                what: "action",
                                index: a,
                                size: n_actions,
                            })
                        }
                    })
                    .collect()
            }
            Policy::Stochastic(table) => {
                check_rows(table.len(), n_states)?;
                table
                    .iter()
                    .map(|row| {
                        check_rows(row.len(), n_actions)?;
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|w| *w < 0.0) {
                            return Err(Error::InvalidModel(format!(
                                "policy row sums to {sum}"
                            )));
                        }
                        Ok(row.iter().copied().enumerate().collect())
                    })
                    .collect()
            }
        }
    }
}

fn check_rows(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stochastic_rows_must_sum_to_one() {
        let bad = Policy::Stochastic(vec![vec![0.5, 0.4]]);
        assert!(bad.stationary_weights(1, 2).is_err());
        let good = Policy::uniform(3, 4);
        assert_eq!(good.stationary_weights(3, 4).unwrap()[2].len(), 4);
    }

    #[test]
    fn nonstationary_lookup() {
        let pi = Policy::NonStationary(vec![vec![0, 1], vec![1, 1]]);
        assert_eq!(pi.action(1, 0), Some(1));
        assert_eq!(pi.action(5, 0), None);
        assert!(!pi.is_stationary());
    }
}
