//! The non-stationary bridge and a random generator of Lipschitz NSMDPs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::StateMetric;
use crate::model::{ActionSpace, Nsmdp, NsmdpTables, StateSpace};
use crate::wasserstein::w1_distance;

/// Bridge map. `H` hole, `G` goal, `S` start, `.` floor.
///
/// The left route is five steps and three cells wide, so a single slip never
/// reaches a hole. The right route is four steps, one cell wide between holes.
pub const BRIDGE_LAYOUT: [&str; 5] = [
    "HHHHHHHHHH",
    "H.....HHHH",
    "G....S...G",
    "H.....HHHH",
    "HHHHHHHHHH",
];

pub const BRIDGE_ACTIONS: [&str; 4] = ["up", "right", "down", "left"];
pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeMetric {
    #[default]
    Discrete,
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSpec {
    pub epsilon: f64,
    #[serde(alias = "lp")]
    pub lipschitz_p: f64,
    pub gamma: f64,
    pub misstep_max: f64,
    /// Misstep growth per epoch.
    pub kappa: f64,
    /// Number of epochs with defined dynamics.
    pub horizon: usize,
    pub metric: BridgeMetric,
    /// Rows of the map, see [`BRIDGE_LAYOUT`]. Columns left of the start
    /// slip with weight `1 - epsilon`, the others with weight `epsilon`.
    pub layout: Vec<String>,
}

impl Default for BridgeSpec {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            lipschitz_p: 1.0,
            gamma: 0.9,
            misstep_max: 0.45,
            kappa: 0.05,
            horizon: 21,
            metric: BridgeMetric::Discrete,
            layout: BRIDGE_LAYOUT.iter().map(|r| r.to_string()).collect(),
        }
    }
}

impl BridgeSpec {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    /// Misstep probability towards each side at epoch `t`, before the
    /// `epsilon` weighting.
    pub fn misstep(&self, t: usize) -> f64 {
        (self.kappa * t as f64).min(self.misstep_max)
    }

    /// Distance unit at which one epoch of full-weight drift moves the
    /// affected rows by exactly `L_p` in `W1`.
    pub fn metric_scale(&self) -> f64 {
        let per_epoch = match self.metric {
            // mass 2 kappa changes hands
            BridgeMetric::Discrete => 2.0 * self.kappa,
            // and travels two cells
            BridgeMetric::Manhattan => 4.0 * self.kappa,
        };
        self.lipschitz_p / per_epoch
    }

    pub fn start_state(&self) -> Result<usize> {
        Grid::parse(&self.layout).map(|g| g.start)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Domain(format!("epsilon must be in [0, 1] (got {})", self.epsilon)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain("kappa must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.misstep_max) {
            return Err(Error::Domain("misstep_max must be in [0, 0.5]".into()));
        }
        if !(self.lipschitz_p > 0.0) {
            return Err(Error::Domain("lipschitz_p must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        Ok(())
    }
}

struct Grid {
    cells: Vec<Vec<u8>>,
    cols: usize,
    start: usize,
}

impl Grid {
    fn parse(layout: &[String]) -> Result<Self> {
        let cells: Vec<Vec<u8>> = layout.iter().map(|r| r.as_bytes().to_vec()).collect();
        let cols = cells.first().map_or(0, Vec::len);
        if cols == 0 || cells.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("bridge layout must be a non-empty rectangle".into()));
        }
        let mut start = None;
        for (r, row) in cells.iter().enumerate() {
            for (c, &ch) in row.iter().enumerate() {
                match ch {
                    b'S' if start.is_none() => start = Some(r * cols + c),
                    b'S' => return Err(Error::Domain("bridge layout has two starts".into())),
                    b'H' | b'G' | b'.' => {}
                    other => {
                        return Err(Error::Domain(format!(
                            "unknown bridge cell {:?}",
                            other as char
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::Domain("bridge layout has no start".into()))?;
        Ok(Self { cells, cols, start })
    }

    fn rows(&self) -> usize {
        self.cells.len()
    }

    fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }

    /// Cell reached from `(row, col)` by `action`; moves off the grid bounce.
    fn step(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        match action {
            UP if row > 0 => (row - 1, col),
            DOWN if row + 1 < self.rows() => (row + 1, col),
            LEFT if col > 0 => (row, col - 1),
            RIGHT if col + 1 < self.cols => (row, col + 1),
            _ => (row, col),
        }
    }
}

pub fn build_bridge(spec: &BridgeSpec) -> Result<Nsmdp> {
    spec.validate()?;
    let grid = Grid::parse(&spec.layout)?;
    let (rows, cols) = (grid.rows(), grid.cols);
    let split = grid.start % cols;
    let ns = rows * cols;
    let mut names = Vec::with_capacity(ns);
    let mut coords = Vec::with_capacity(ns);
    let mut terminal = Vec::with_capacity(ns);
    for r in 0..rows {
        for c in 0..cols {
            names.push(format!("r{r}c{c}"));
            coords.push((r as i32, c as i32));
            terminal.push(matches!(grid.cell(r, c), b'H' | b'G'));
        }
    }
    let arrival: Vec<f64> = (0..ns)
        .map(|s| match grid.cell(s / cols, s % cols) {
            b'G' => 1.0,
            b'H' => -1.0,
            _ => 0.0,
        })
        .collect();
    let metric = match spec.metric {
        BridgeMetric::Discrete => StateMetric::discrete_scaled(ns, spec.metric_scale()),
        BridgeMetric::Manhattan => StateMetric::manhattan(&coords, spec.metric_scale())?,
    };

    let na = BRIDGE_ACTIONS.len();
    let mut transitions = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let m = spec.misstep(t);
        let mut by_state = Vec::with_capacity(ns);
        for s in 0..ns {
            let (r, c) = (s / cols, s % cols);
            let mut by_action = Vec::with_capacity(na);
            for a in 0..na {
                let mut row = vec![0.0; ns];
                if terminal[s] {
                    row[s] = 1.0;
                } else {
                    let (ir, ic) = grid.step(r, c, a);
                    let slip = if a == LEFT || a == RIGHT {
                        let weight = if c < split { 1.0 - spec.epsilon } else { spec.epsilon };
                        weight * m
                    } else {
                        0.0
                    };
                    row[grid.index(ir, ic)] += 1.0 - 2.0 * slip;
                    if slip > 0.0 {
                        let (ur, uc) = grid.step(r, c, UP);
                        let (dr, dc) = grid.step(r, c, DOWN);
                        row[grid.index(ur, uc)] += slip;
                        row[grid.index(dr, dc)] += slip;
                    }
                }
                by_action.push(row);
            }
            by_state.push(by_action);
        }
        transitions.push(by_state);
    }
    let reward_rows: Vec<Vec<Vec<f64>>> = (0..ns).map(|_| vec![arrival.clone(); na]).collect();
    Nsmdp::new(NsmdpTables {
        states: StateSpace::new(names, Some(coords), terminal)?,
        actions: ActionSpace::new(BRIDGE_ACTIONS.iter().map(|a| a.to_string()).collect())?,
        metric,
        gamma: spec.gamma,
        lipschitz_p: spec.lipschitz_p,
        lipschitz_r: 0.0,
        transitions,
        rewards: vec![reward_rows; spec.horizon],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub lipschitz_p: f64,
    pub lipschitz_r: f64,
    /// Make every `r_t(s, a, .)` 1-Lipschitz in the arrival state.
    pub arrival_lipschitz_rewards: bool,
    /// Cap on the support size of each transition row.
    pub max_support: Option<usize>,
}

impl GeneratorConfig {
    pub fn new(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            n_states,
            n_actions,
            horizon,
            gamma: 0.9,
            lipschitz_p: 0.1,
            lipschitz_r: 0.1,
            arrival_lipschitz_rewards: false,
            max_support: None,
        }
    }
}

fn random_row<R: Rng + ?Sized>(support: &[usize], n: usize, rng: &mut R) -> Vec<f64> {
    let mut row = vec![0.0; n];
    let weights: Vec<f64> = support.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (&j, w) in support.iter().zip(weights) {
        row[j] = w / total;
    }
    row
}

/// Largest 1-Lipschitz minorant of `f`, clamped to `[-1, 1]`.
fn lipschitz_envelope(f: &[f64], metric: &StateMetric) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            f.iter()
                .enumerate()
                .map(|(j, v)| v + metric.d(j, i))
                .fold(f64::INFINITY, f64::min)
                .clamp(-1.0, 1.0)
        })
        .collect()
}

/// Random `(L_p, L_r)`-Lipschitz NSMDP.
///
/// Each row drifts towards a fresh random row by the largest step allowed
/// by `L_p`, so the declared transition constant is usually attained.
/// Rewards move by at most `L_r` per epoch.
pub fn generate_lc_nsmdp<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    metric: StateMetric,
    rng: &mut R,
) -> Result<Nsmdp> {
    let GeneratorConfig {
        n_states: ns,
        n_actions: na,
        horizon,
        gamma,
        lipschitz_p: lp,
        lipschitz_r: lr,
        arrival_lipschitz_rewards,
        max_support,
    } = cfg.clone();
    if !(lp >= 0.0 && lr >= 0.0) {
        return Err(Error::Domain("Lipschitz constants must be >= 0".into()));
    }
    if metric.len() != ns {
        return Err(Error::Dimension {
            expected: ns,
            got: metric.len(),
        });
    }
    if horizon == 0 || ns == 0 || na == 0 {
        return Err(Error::Domain("sizes must be positive".into()));
    }
    let k = max_support.unwrap_or(ns).clamp(1, ns);

    let mut supports = Vec::with_capacity(ns * na);
    let mut p0 = Vec::with_capacity(ns * na);
    let mut r0 = Vec::with_capacity(ns * na);
    for _ in 0..ns * na {
        let size = rng.gen_range(1..=k);
        let mut support = rand::seq::index::sample(rng, ns, size).into_vec();
        support.sort_unstable();
        p0.push(random_row(&support, ns, rng));
        let raw: Vec<f64> = (0..ns).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        r0.push(if arrival_lipschitz_rewards {
            lipschitz_envelope(&raw, &metric)
        } else {
            raw
        });
        supports.push(support);
    }

    let mut p_seq = vec![p0];
    let mut r_seq = vec![r0];
    for _ in 1..horizon {
        let prev_p = p_seq.last().expect("seeded");
        let prev_r = r_seq.last().expect("seeded");
        let mut next_p = Vec::with_capacity(ns * na);
        let mut next_r = Vec::with_capacity(ns * na);
        for i in 0..ns * na {
            let target = random_row(&supports[i], ns, rng);
            let dist = w1_distance(&prev_p[i], &target, &metric)?;
            let beta = if dist > 0.0 { (lp / dist).min(1.0) } else { 0.0 };
            next_p.push(
                prev_p[i]
                    .iter()
                    .zip(&target)
                    .map(|(a, b)| (1.0 - beta) * a + beta * b)
                    .collect::<Vec<f64>>(),
            );
            let r = if arrival_lipschitz_rewards {
                // a common shift keeps the arrival-state constant
                let shift = if lr > 0.0 { rng.gen_range(-lr..=lr) } else { 0.0 };
                prev_r[i].iter().map(|v| (v + shift).clamp(-1.0, 1.0)).collect()
            } else {
                prev_r[i]
                    .iter()
                    .map(|v| {
                        let shift = if lr > 0.0 { rng.gen_range(-lr..=lr) } else { 0.0 };
                        (v + shift).clamp(-1.0, 1.0)
                    })
                    .collect()
            };
            next_r.push(r);
        }
        p_seq.push(next_p);
        r_seq.push(next_r);
    }

    let nest = |seq: Vec<Vec<Vec<f64>>>| -> Vec<Vec<Vec<Vec<f64>>>> {
        seq.into_iter()
            .map(|flat| {
                let mut it = flat.into_iter();
                (0..ns).map(|_| it.by_ref().take(na).collect()).collect()
            })
            .collect()
    };
    Nsmdp::new(NsmdpTables {
        states: StateSpace::anonymous(ns)?,
        actions: ActionSpace::anonymous(na)?,
        metric,
        gamma,
        lipschitz_p: lp,
        lipschitz_r: lr,
        transitions: nest(p_seq),
        rewards: nest(r_seq),
    })
}
