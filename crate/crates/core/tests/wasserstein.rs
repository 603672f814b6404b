use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rats_core::wasserstein::{plan_is_feasible, tv_distance, w1, w1_flow, w1_to_dirac};
use rats_core::{Categorical, StateMetric};

fn categorical(n: usize) -> impl Strategy<Value = Categorical> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n).prop_filter_map("empty", |w| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| Categorical::new(w.iter().map(|x| x / total).collect()).unwrap())
    })
}

fn pair(max: usize) -> impl Strategy<Value = (Categorical, Categorical)> {
    (2..=max).prop_flat_map(|n| (categorical(n), categorical(n)))
}

/// On a line, `W1` is the area between the two CDFs.
fn line_w1(mu: &[f64], nu: &[f64], xs: &[i32]) -> f64 {
    let (mut cdf, mut total) = (0.0, 0.0);
    for i in 0..xs.len() - 1 {
        cdf += mu[i] - nu[i];
        total += cdf.abs() * f64::from(xs[i + 1] - xs[i]);
    }
    total
}

#[test]
fn line_oracle_on_a_hand_example() {
    let coords = [(0, 0), (1, 0), (3, 0)];
    let metric = StateMetric::manhattan(&coords, 1.0).unwrap();
    let mu = Categorical::new(vec![0.5, 0.5, 0.0]).unwrap();
    let nu = Categorical::new(vec![0.0, 0.5, 0.5]).unwrap();
    // half a unit moves from 0 to 3
    assert_abs_diff_eq!(w1(&mu, &nu, &metric).unwrap().0, 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(line_w1(mu.probs(), nu.probs(), &[0, 1, 3]), 1.5, epsilon = 1e-12);
}

#[test]
fn dimension_mismatch_is_reported() {
    let metric = StateMetric::discrete(3);
    let mu = Categorical::uniform(2);
    assert!(w1(&mu, &mu, &metric).is_err());
}

proptest! {
    #[test]
    fn flow_matches_the_line_oracle((mu, nu) in pair(7), gaps in prop::collection::vec(1i32..4, 7)) {
        let n = mu.len();
        let xs: Vec<i32> = gaps[..n].iter().scan(0, |x, g| { *x += g; Some(*x) }).collect();
        let coords: Vec<(i32, i32)> = xs.iter().map(|&x| (x, 0)).collect();
        let metric = StateMetric::manhattan(&coords, 1.0).unwrap();
        let (d, plan) = w1_flow(&mu, &nu, &metric).unwrap();
        prop_assert!((d - line_w1(mu.probs(), nu.probs(), &xs)).abs() < 1e-9);
        prop_assert!(plan_is_feasible(&plan, &mu, &nu));
        prop_assert!((plan.cost_under(&metric) - d).abs() < 1e-9);
    }

    #[test]
    fn discrete_metric_gives_scaled_tv((mu, nu) in pair(8), scale in 0.1f64..5.0) {
        let metric = StateMetric::discrete_scaled(mu.len(), scale);
        let tv = tv_distance(&mu, &nu).unwrap();
        prop_assert!((w1(&mu, &nu, &metric).unwrap().0 - scale * tv).abs() < 1e-9);
        prop_assert!((w1_flow(&mu, &nu, &metric).unwrap().0 - scale * tv).abs() < 1e-9);
    }

    #[test]
    fn symmetric_and_bounded_by_diameter_times_tv((mu, nu) in pair(6), seed in 0u64..1000) {
        let n = mu.len();
        let coords: Vec<(i32, i32)> = (0..n as i32).map(|i| (i, ((seed as i32) * (i + 3)) % 5)).collect();
        let metric = StateMetric::manhattan(&coords, 0.5).unwrap();
        let ab = w1(&mu, &nu, &metric).unwrap().0;
        let ba = w1(&nu, &mu, &metric).unwrap().0;
        let tv = tv_distance(&mu, &nu).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab <= metric.diameter() * tv + 1e-9);
        prop_assert!(ab >= -1e-12);
    }

    #[test]
    fn dirac_distance_is_linear((mu, _) in pair(6), target in 0usize..6) {
        let n = mu.len();
        let target = target % n;
        let coords: Vec<(i32, i32)> = (0..n as i32).map(|i| (i % 3, i / 3)).collect();
        let metric = StateMetric::manhattan(&coords, 1.0).unwrap();
        let expected: f64 = (0..n).map(|s| mu.probs()[s] * metric.d(s, target)).sum();
        prop_assert!((w1_to_dirac(&mu, target, &metric).unwrap() - expected).abs() < 1e-12);
    }
}
