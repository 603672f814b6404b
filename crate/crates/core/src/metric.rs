//! Ground metrics over finite state spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// `scale` for every pair of distinct states.
    Discrete,
    /// `scale` times the L1 distance between grid coordinates.
    Manhattan,
    /// Arbitrary user-supplied distances.
    Matrix,
}

/// A finite metric `d(s, s')` stored as a dense `|S| x |S|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMetric {
    kind: MetricKind,
    scale: f64,
    n: usize,
    values: Vec<f64>,
}

/// Above this size the triangle inequality is checked on sampled triples only.
const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 64;

impl StateMetric {
    pub fn discrete(n: usize) -> Self {
        Self::discrete_scaled(n, 1.0)
    }

    pub fn discrete_scaled(n: usize, scale: f64) -> Self {
        let mut values = vec![scale; n * n];
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Self {
            kind: MetricKind::Discrete,
            scale,
            n,
            values,
        }
    }

    pub fn manhattan(coords: &[(i32, i32)], scale: f64) -> Result<Self> {
        let n = coords.len();
        let mut values = vec![0.0; n * n];
        for (i, a) in coords.iter().enumerate() {
            for (j, b) in coords.iter().enumerate() {
                values[i * n + j] = scale * f64::from((a.0 - b.0).abs() + (a.1 - b.1).abs());
            }
        }
        let metric = Self {
            kind: MetricKind::Manhattan,
            scale,
            n,
            values,
        };
        metric.check_axioms()?;
        Ok(metric)
    }

    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        let metric = Self {
            kind: MetricKind::Matrix,
            scale: 1.0,
            n,
            values,
        };
        metric.check_axioms()?;
        Ok(metric)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn diameter(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Checks identity, positivity, symmetry and the triangle inequality.
    pub fn check_axioms(&self) -> Result<()> {
        let n = self.n;
        let bad = |msg: String| Err(Error::InvalidModel(format!("metric: {msg}")));
        for i in 0..n {
            if self.d(i, i) != 0.0 {
                return bad(format!("d({i},{i}) != 0"));
            }
            for j in 0..n {
                let v = self.d(i, j);
                if !v.is_finite() || v < 0.0 {
                    return bad(format!("d({i},{j}) = {v}"));
                }
                if i != j && v <= 0.0 {
                    return bad(format!("d({i},{j}) = 0 for distinct states"));
                }
                if (v - self.d(j, i)).abs() > 1e-12 {
                    return bad(format!("asymmetric at ({i},{j})"));
                }
            }
        }
        let triangle = |i: usize, j: usize, k: usize| self.d(i, k) <= self.d(i, j) + self.d(j, k) + 1e-12;
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if !triangle(i, j, k) {
                            return bad(format!("triangle inequality fails for ({i},{j},{k})"));
                        }
                    }
                }
            }
        } else {
            // deterministic stride sample of triples
            let mut x: u64 = 0x9E37_79B9_7F4A_7C15;
            for _ in 0..200_000 {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                let (i, j, k) = (
                    (x % n as u64) as usize,
                    ((x >> 21) % n as u64) as usize,
                    ((x >> 42) % n as u64) as usize,
                );
                if !triangle(i, j, k) {
                    return bad(format!("triangle inequality fails for ({i},{j},{k})"));
                }
            }
        }
        Ok(())
    }
}

/// Serialized form of a metric inside an `nsmdp-v1` document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricSpec {
    Discrete {
        #[serde(default = "one")]
        scale: f64,
    },
    Manhattan {
        #[serde(default = "one")]
        scale: f64,
    },
    Matrix {
        values: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl MetricSpec {
    pub fn build(&self, n: usize, coords: Option<&[(i32, i32)]>) -> Result<StateMetric> {
        let metric = match self {
            MetricSpec::Discrete { scale } => StateMetric::discrete_scaled(n, *scale),
            MetricSpec::Manhattan { scale } => {
                let coords = coords.ok_or_else(|| {
                    Error::InvalidModel("manhattan metric requires coordinates".into())
                })?;
                StateMetric::manhattan(coords, *scale)?
            }
            MetricSpec::Matrix { values } => StateMetric::from_matrix(values.clone())?,
        };
        if metric.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: metric.len(),
            });
        }
        if !(metric.scale() > 0.0) {
            return Err(Error::InvalidModel("metric scale must be positive".into()));
        }
        Ok(metric)
    }

    pub fn of(metric: &StateMetric) -> Self {
        match metric.kind() {
            MetricKind::Discrete => MetricSpec::Discrete {
                scale: metric.scale(),
            },
            MetricKind::Manhattan => MetricSpec::Manhattan {
                scale: metric.scale(),
            },
            MetricKind::Matrix => MetricSpec::Matrix {
                values: metric.to_rows(),
            },
        }
    }
}
