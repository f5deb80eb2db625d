use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fewshot_safety::dynamics::{vehicle4d, vehicle_svd, VehicleParams};
use fewshot_safety::filter::FilterConfig;
use fewshot_safety::rl::{rollout, shield, Environment, GaussianPolicy, Shield};
use fewshot_safety::{BarrierFunction, StateVec};

fn setup() -> (Environment, Shield, GaussianPolicy) {
    let p = VehicleParams::default();
    let veh = vehicle4d(p).unwrap();
    let (model, _) = vehicle_svd(&p, 1.0, 0.2, 5.0).unwrap();
    let env = Environment {
        system: veh.system.clone(),
        barrier: veh.barrier.clone(),
        task: Arc::new(veh.task),
        x0: DVector::zeros(4),
        ts: 0.02,
        max_steps: 60,
        action_clip: Some(100.0),
        u_init: DVector::zeros(1),
    };
    let mut cfg = FilterConfig::new(500.0, 500.0).unwrap();
    cfg.clip_low = Some(-100.0);
    cfg.clip_high = Some(100.0);
    let sh = Shield { cfg, barrier: veh.barrier, knowledge: Arc::new(model) };
    let policy = GaussianPolicy::new(&[4, 16, 16, 1], 0.7, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    (env, sh, policy)
}

#[test]
fn same_seed_gives_identical_rollouts() {
    let (env, sh, policy) = setup();
    let a = rollout(&env, &policy, 0.99, Some(&sh), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = rollout(&env, &policy, 0.99, Some(&sh), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn score_is_taken_at_the_sampled_action() {
    let (env, sh, policy) = setup();
    let r = rollout(&env, &policy, 0.99, Some(&sh), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert!(r.steps.iter().any(|s| s.shielded && s.u != s.a));
    let mut sum = vec![0.0; policy.num_params()];
    for s in &r.steps {
        for (acc, g) in sum.iter_mut().zip(policy.grad_log_prob(&s.s, &s.a)) {
            *acc += g;
        }
    }
    for (x, y) in sum.iter().zip(&r.score_sum) {
        assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    }
}

#[test]
fn played_actions_replay_through_the_shield() {
    let (env, sh, policy) = setup();
    let r = rollout(&env, &policy, 0.99, Some(&sh), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let mut prev = env.x0.clone();
    let mut u_last = env.u_init.clone();
    for s in &r.steps {
        let sdot = (&s.s - &prev) / env.ts;
        let a = s.a.map(|v| v.clamp(-100.0, 100.0));
        let (u, _) = shield(&s.s, &sdot, &a, &u_last, &sh).unwrap();
        assert_eq!(u, s.u);
        prev = s.s.clone();
        u_last = s.u.clone();
    }
}

#[test]
fn shield_leaves_actions_alone_above_the_trigger() {
    let (_, mut sh, _) = setup();
    sh.barrier = BarrierFunction::new(
        "level",
        4,
        |x: &StateVec| 600.0 - x.norm_squared(),
        |x: &StateVec| x * -2.0,
    );
    let s = DVector::zeros(4);
    let a = DVector::from_element(1, 42.5);
    let (u, shielded) = shield(&s, &DVector::zeros(4), &a, &DVector::zeros(1), &sh).unwrap();
    assert!(!shielded);
    assert_eq!(u, a);
}

#[test]
fn zero_discount_keeps_only_the_first_reward() {
    let (env, sh, policy) = setup();
    let r = rollout(&env, &policy, 0.0, Some(&sh), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    assert_eq!(r.return_, r.steps[0].r);
}
