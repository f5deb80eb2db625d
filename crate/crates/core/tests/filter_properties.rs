use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fewshot_safety::filter::{filter_step, right_derivative, FilterConfig, FilterState};
use fewshot_safety::uncertainty::{SvdUncertaintyModel, TrueActuation};
use fewshot_safety::{BarrierFunction, StateVec};

fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

/// `φ = 1 − ‖x‖²` in `d` dimensions.
fn ball(d: usize) -> BarrierFunction {
    BarrierFunction::new("ball", d, |x: &StateVec| 1.0 - x.norm_squared(), |x: &StateVec| x * -2.0)
}

struct Instance {
    model: SvdUncertaintyModel,
    g: DMatrix<f64>,
    barrier: BarrierFunction,
    x: StateVec,
    f: DVector<f64>,
    u_last: DVector<f64>,
}

fn instance(d: usize, p: usize, seed: u64, radius: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=d.min(p));
    let lambda_hat: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
    let lower: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let upper: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..8.0)).collect();
    let model = SvdUncertaintyModel::new(orthogonal(d, &mut rng), orthogonal(p, &mut rng), lambda_hat, lower, upper).unwrap();
    let g = TrueActuation::sample_uniform(&model, &mut rng).actuation_matrix(&model);
    let dir = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let x = dir.normalize() * radius;
    let f = DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0));
    let u_last = DVector::from_fn(p, |_, _| rng.random_range(-5.0..5.0));
    Instance { model, g, barrier: ball(d), x, f, u_last }
}

/// Squared norm of the gradient's component in the actuated subspace.
fn actuated_part(i: &Instance) -> f64 {
    let grad = i.barrier.grad(&i.x).unwrap();
    (0..i.model.rank()).map(|c| i.model.u_factor().column(c).dot(&grad).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn rate_guarantee_holds_under_any_admissible_gain(
        d in 1usize..5, p in 1usize..4, seed in any::<u64>(), radius in 1.0f64..3.0, eta in 0.1f64..5.0,
    ) {
        let inst = instance(d, p, seed, radius);
        prop_assume!(actuated_part(&inst) > 1e-6);
        let cfg = FilterConfig::new(0.01, eta).unwrap();
        let xdot_minus = &inst.f + &inst.g * &inst.u_last;
        let mut fs = FilterState::initialize(inst.x.clone(), inst.u_last.clone(), 0.0);
        let u_nom = DVector::zeros(p);
        let (u, diag) = filter_step(&cfg, &mut fs, &inst.model, &inst.barrier, &inst.x, &xdot_minus, &u_nom).unwrap();
        prop_assert!(diag.activated);
        let rate = right_derivative(&inst.barrier, &inst.x, &(&inst.f + &inst.g * &u)).unwrap();
        let scale = 1.0 + inst.barrier.grad(&inst.x).unwrap().norm() * (xdot_minus.norm() + (&inst.g * &u).norm());
        prop_assert!(rate >= eta - 1e-9 * scale, "rate {} < eta {}", rate, eta);
        prop_assert!(diag.guaranteed_rate >= eta - 1e-9 * scale);
        prop_assert!(diag.guarantee_holds(eta - 1e-9 * scale));
        for i in 0..inst.model.rank() {
            prop_assert!(diag.beta[i] * diag.epsilon_lb[i] >= -1e-12 * scale, "coordinate {}", i);
        }
        prop_assert_eq!(&fs.u_last, &u);
    }

    #[test]
    fn nominal_passes_through_untouched_above_threshold(
        d in 1usize..5, p in 1usize..4, seed in any::<u64>(), radius in 0.0f64..0.9,
    ) {
        let inst = instance(d, p, seed, radius);
        let cfg = FilterConfig::new(0.1, 1.0).unwrap();
        prop_assume!(inst.barrier.eval(&inst.x).unwrap() > cfg.theta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let u_nom = DVector::from_fn(p, |_, _| rng.random_range(-50.0..50.0));
        let mut fs = FilterState::initialize(inst.x.clone(), inst.u_last.clone(), 0.0);
        let (u, diag) = filter_step(&cfg, &mut fs, &inst.model, &inst.barrier, &inst.x, &inst.f, &u_nom).unwrap();
        prop_assert!(!diag.activated);
        prop_assert_eq!(&u, &u_nom);
        prop_assert_eq!(&fs.u_last, &u_nom);
    }

    #[test]
    fn correction_is_deterministic(d in 1usize..5, p in 1usize..4, seed in any::<u64>()) {
        let inst = instance(d, p, seed, 1.5);
        prop_assume!(actuated_part(&inst) > 1e-6);
        let cfg = FilterConfig::default();
        let xdot_minus = &inst.f + &inst.g * &inst.u_last;
        let go = || {
            let mut fs = FilterState::initialize(inst.x.clone(), inst.u_last.clone(), 0.0);
            filter_step(&cfg, &mut fs, &inst.model, &inst.barrier, &inst.x, &xdot_minus, &DVector::zeros(p)).unwrap()
        };
        prop_assert_eq!(go(), go());
    }
}
