mod common;

use proptest::prelude::*;
use rand::Rng;
use uavsem::env::{JointAction, RewardBreakdown, SlotOutcome, UavEnv};
use uavsem::harness::{self, CentroidHeuristic};
use uavsem::mobility::{coverage_radius, RelocationCommand};
use uavsem::objective::TaskOutcome;
use uavsem::{Error, ScenarioConfig};

fn small(num_gus: usize, num_uavs: usize, area: f64) -> ScenarioConfig {
    ScenarioConfig {
        num_gus,
        num_uavs,
        area_half_width: area,
        mission_duration: 50.0,
        ..ScenarioConfig::default()
    }
}

/// Every relay hovers, every share is 1, lightest compression.
fn hover(cfg: &ScenarioConfig) -> JointAction {
    let mut flat = vec![0.0; JointAction::dim(cfg)];
    let start = 3 * cfg.num_uavs;
    for x in &mut flat[start..start + cfg.num_uavs * cfg.num_gus] {
        *x = 1.0;
    }
    JointAction::from_flat(cfg, &flat).unwrap()
}

fn random_action(cfg: &ScenarioConfig, r: &mut impl Rng) -> Vec<f64> {
    let (lo, hi) = JointAction::bounds(cfg);
    lo.iter().zip(&hi).map(|(&l, &h)| if h > l { r.random_range(l..=h) } else { l }).collect()
}

fn check_slot(out: &SlotOutcome, tau: f64) {
    let deadline = out.slot as f64 * tau;
    for g in &out.gus {
        if g.served_by.is_empty() {
            assert!(g.outcome.is_dropped());
            assert!(g.start_time.is_none());
            continue;
        }
        let share: f64 = g.served_by.iter().map(|&n| g.proportions[n]).sum();
        assert!((share - 1.0).abs() <= 1e-9, "shares sum to {share}");
        for (n, p) in g.proportions.iter().enumerate() {
            if !g.served_by.contains(&n) {
                assert_eq!(*p, 0.0);
            }
        }
        let start = g.start_time.unwrap();
        assert!(start >= out.relocation_end && start >= g.ready_time);
        let late = g.finish_time.is_none_or(|f| f >= deadline);
        assert_eq!(late, g.outcome.is_dropped(), "finish {:?} deadline {deadline}", g.finish_time);
        if let TaskOutcome::Completed { ready, done, aoi } = g.outcome {
            assert_eq!(aoi, done - ready);
        }
    }
    let r = &out.reward;
    let sum = r.sss + r.aoi + r.collision + r.energy + r.freshness + r.terminal;
    assert_eq!(sum, r.total());
}

#[test]
fn shaping_reward_example() {
    let r = RewardBreakdown::shaping(0.9, 2.5, 5.0, 5.0);
    assert!((r.total() - 4.0).abs() < 1e-12);
}

#[test]
fn meeting_relays_are_penalized() {
    let cfg = small(2, 2, 40.0);
    let mut env = UavEnv::new(cfg.clone()).unwrap();
    env.reset(3);
    let mut action = hover(&cfg);
    let (p0, p1) = (env.world().uavs[0].position, env.world().uavs[1].position);
    action.relocation[0] = RelocationCommand::toward(p0, p1, cfg.uav_speed_max * cfg.slot_duration);
    let (_, _, _, out) = env.step(&action).unwrap();
    assert!(out.collision);
    assert_eq!(out.reward.collision, -cfg.penalties[0]);
}

#[test]
fn distant_user_is_dropped_with_slot_length_age() {
    let cfg = small(1, 1, 3000.0);
    let reach = coverage_radius(cfg.uav_altitude_range[1], cfg.coverage_angle) + 50.0;
    let mut env = UavEnv::new(cfg.clone()).unwrap();
    let seed = (0..100)
        .find(|&s| {
            env.reset(s);
            let (g, u) = (&env.world().gus[0], &env.world().uavs[0]);
            (g.position[0] - u.position[0]).hypot(g.position[1] - u.position[1]) > reach
        })
        .expect("a seed with an uncovered user");
    env.reset(seed);
    let lambda = env.world().gus[0].arrival_rate;
    let (_, _, _, out) = env.step(&hover(&cfg)).unwrap();
    let g = &out.gus[0];
    assert!(g.served_by.is_empty());
    assert!(g.outcome.is_dropped());
    assert_eq!(g.counted_aoi, Some(cfg.slot_duration));
    assert!((out.reward.freshness + cfg.penalties[2] / lambda).abs() < 1e-12);
    assert!(g.sss.is_none());
}

#[test]
fn clean_link_completes_within_the_slot() {
    let cfg = small(1, 1, 30.0).with_nominal_snr_db(60.0);
    let mut env = UavEnv::new(cfg.clone()).unwrap();
    env.reset(1);
    let (_, _, _, out) = env.step(&hover(&cfg)).unwrap();
    let g = &out.gus[0];
    assert_eq!(g.served_by, vec![0]);
    let TaskOutcome::Completed { ready, done, aoi } = g.outcome else {
        panic!("dropped: {g:?}");
    };
    assert_eq!(g.start_time, Some(ready.max(out.relocation_end)));
    assert!(done < cfg.slot_duration && aoi > 0.0);
    assert!(g.sss.unwrap() > 0.9);
    check_slot(&out, cfg.slot_duration);
}

#[test]
fn same_seed_same_bytes() {
    let run = |seed| {
        let mut env = UavEnv::new(small(6, 2, 400.0)).unwrap();
        let e = harness::evaluate(&mut env, &mut CentroidHeuristic::default(), seed).unwrap();
        (harness::to_csv(&harness::gu_trace(env.history())).unwrap(), e)
    };
    let (a, ea) = run(9);
    let (b, eb) = run(9);
    assert_eq!(a, b);
    assert_eq!(ea.summary.avg_aoi.to_bits(), eb.summary.avg_aoi.to_bits());
    assert_eq!(ea.total_reward.to_bits(), eb.total_reward.to_bits());
    assert_ne!(a, run(10).0);
}

#[test]
fn stepping_past_the_end_fails() {
    let cfg = small(2, 1, 100.0);
    let mut env = UavEnv::new(cfg.clone()).unwrap();
    env.reset(0);
    for _ in 0..cfg.num_slots() {
        env.step(&hover(&cfg)).unwrap();
    }
    assert!(env.is_done());
    assert!(matches!(env.step(&hover(&cfg)), Err(Error::Protocol(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_actions_respect_the_protocol(seed in 0u64..10_000, gus in 1usize..8, uavs in 1usize..4) {
        let cfg = small(gus, uavs, 300.0);
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        env.reset(seed);
        let mut r = common::rng(seed);
        while !env.is_done() {
            let (_, reward, _, out) = env.step_flat(&random_action(&cfg, &mut r)).unwrap();
            prop_assert!(reward.is_finite());
            check_slot(&out, cfg.slot_duration);
        }
        prop_assert_eq!(env.history().len(), cfg.num_slots());
    }
}
