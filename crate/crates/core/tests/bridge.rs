use rats_core::baselines::{dp_nsmdp, dp_snapshot_action};
use rats_core::domain::{build_bridge, BridgeMetric, BridgeSpec, LEFT, RIGHT, UP};
use rats_core::format::{export_domain, parse_domain};
use rats_core::harness::PlannerSettings;
use rats_core::planner::{rats_plan, PlannerConfig, RewardModel};

fn grid() -> [f64; 5] {
    [0.0, 0.25, 0.5, 0.75, 1.0]
}

#[test]
fn first_step_is_deterministic_and_pays_nothing() {
    let spec = BridgeSpec::with_epsilon(0.5);
    let m = build_bridge(&spec).unwrap();
    let s0 = spec.start_state().unwrap();
    let row = m.transition_row(0, s0, RIGHT);
    assert_eq!(row.iter().filter(|p| **p > 0.0).count(), 1);
    assert_eq!(m.expected_reward(0, s0, RIGHT).unwrap(), 0.0);
}

#[test]
fn rats_goes_left_and_snapshot_dp_goes_right() {
    for eps in grid() {
        for metric in [BridgeMetric::Discrete, BridgeMetric::Manhattan] {
            let spec = BridgeSpec {
                epsilon: eps,
                metric,
                ..BridgeSpec::default()
            };
            let m = build_bridge(&spec).unwrap();
            let snap = m.snapshot(0).unwrap();
            let s0 = spec.start_state().unwrap();
            let cfg = PlannerSettings::default().planner_config(&m, 0);
            assert_eq!(rats_plan(&snap, s0, 0, &cfg).unwrap().action, LEFT, "eps={eps} {metric:?}");
            assert_eq!(dp_snapshot_action(&snap, s0, 1e-6).unwrap(), RIGHT);
        }
    }
}

#[test]
fn omniscient_dp_avoids_the_slippery_side() {
    let first = |eps| {
        let spec = BridgeSpec::with_epsilon(eps);
        let m = build_bridge(&spec).unwrap();
        let sol = dp_nsmdp(&m, 20, 1e-8).unwrap();
        sol.policy.action(0, spec.start_state().unwrap()).unwrap()
    };
    assert_eq!(first(0.0), RIGHT);
    assert_eq!(first(1.0), LEFT);
}

#[test]
fn expected_reward_model_cannot_find_the_safe_route() {
    // the reward ball swamps every path, so the long safe route scores worst
    let spec = BridgeSpec::default();
    let m = build_bridge(&spec).unwrap();
    let mut cfg = PlannerConfig::new(6, 1.0, 0.0);
    cfg.reward_model = RewardModel::Expected;
    let plan = rats_plan(&m.snapshot(0).unwrap(), spec.start_state().unwrap(), 0, &cfg).unwrap();
    assert_ne!(plan.action, LEFT);
    assert_eq!(plan.action_values[UP], plan.action_values[RIGHT]);
    assert!(plan.action_values[LEFT] < plan.action_values[RIGHT]);
}

#[test]
fn tables_round_trip_through_json() {
    for metric in [BridgeMetric::Discrete, BridgeMetric::Manhattan] {
        let spec = BridgeSpec {
            epsilon: 0.3,
            metric,
            ..BridgeSpec::default()
        };
        let m = build_bridge(&spec).unwrap();
        assert_eq!(parse_domain(&export_domain(&m).unwrap()).unwrap(), m);
    }
}

#[test]
fn every_misstep_is_capped() {
    let spec = BridgeSpec::with_epsilon(0.5);
    let m = build_bridge(&spec).unwrap();
    for t in 0..m.horizon() {
        for s in 0..m.n_states() {
            for a in [LEFT, RIGHT] {
                let row = m.transition_row(t, s, a);
                let top = row.iter().cloned().fold(0.0, f64::max);
                assert!(top >= 0.1 - 1e-12);
            }
        }
    }
}
