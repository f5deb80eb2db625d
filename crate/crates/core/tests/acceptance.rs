//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fewshot_safety::barrier::grad_check;
use fewshot_safety::dynamics::{
    bicycle2d, bicycle_ellipse_barrier, linear1d, simulate, vehicle4d, AffineSystem, BicycleParams, FilteredController,
    IntegratorConfig, Linear1dParams, Method, Nominal, Trajectory, VehicleParams,
};
use fewshot_safety::filter::{filter_step, right_derivative, FilterConfig, FilterState};
use fewshot_safety::harness::{execute, load_config, probe_policies, ExperimentConfig, Outcome};
use fewshot_safety::rl::GaussianPolicy;
use fewshot_safety::uncertainty::{StiffnessGuess, SvdUncertaintyModel, TrueActuation};
use fewshot_safety::{BarrierFunction, SafetyFilter, StateVec};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict, Duration);

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    load_config(&path).unwrap_or_else(|e| panic!("{e}")).config
}

fn run(cfg: &ExperimentConfig) -> Result<Outcome, String> {
    execute(cfg).map_err(|e| e.to_string())
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:?}, limit {limit:?}"))
    }
}

fn metric(o: &Outcome, key: &str) -> f64 {
    o.report.per_seed[0].get(key).unwrap_or(f64::NAN)
}

fn forward_invariance() -> Verdict {
    let cfg = config("invariance_1d.toml");
    let o = run(&cfg)?;
    let (v, nv) = (metric(&o, "violations"), metric(&o, "nominal.violations"));
    let msg = format!("min φ = {:.6}, filtered violations {v}, nominal violations {nv}", metric(&o, "min_phi"));
    if v == 0.0 && nv > 0.0 && metric(&o, "safety_rate") == 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn recovery_bound() -> Verdict {
    let cfg = config("recovery_1d.toml");
    let dt = cfg.integrator.unwrap().dt;
    let bound = 0.5635 / cfg.filter.eta + 5.0 * dt;
    let o = run(&cfg)?;
    let t = metric(&o, "recovery_time");
    let msg = format!("entered φ ≥ θ at {t} s, bound {bound} s");
    if t <= bound {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A plant with the given actuation matrix and the drift of `sys`.
fn with_actuation(sys: &AffineSystem, g: DMatrix<f64>) -> AffineSystem {
    let s = sys.clone();
    AffineSystem::new("probe", sys.dim_state(), sys.dim_action(), move |x: &StateVec| s.drift(x), move |_: &StateVec| g.clone())
}

struct Plant {
    system: AffineSystem,
    barrier: BarrierFunction,
    model: SvdUncertaintyModel,
}

fn linear_plant() -> Plant {
    let l = linear1d(Linear1dParams::default());
    Plant { system: l.system, barrier: l.barrier, model: SvdUncertaintyModel::scalar(1.0, 0.2, 5.0).unwrap() }
}

fn bicycle_plant() -> Plant {
    let p = BicycleParams::default();
    let guess = StiffnessGuess { cf_estimate: 50_000.0, lower: 0.5, upper: 2.0 };
    Plant { system: bicycle2d(p).unwrap(), barrier: bicycle_ellipse_barrier(2.0, 0.5), model: p.svd(guess).unwrap().0 }
}

/// Smallest `φ̇⁺` over random states with `φ ≤ θ`, admissible singular values
/// and previous actions, with `ẋ⁻` taken from the true plant.
fn oracle_rate(plant: &Plant, sample_state: &dyn Fn(&mut ChaCha8Rng) -> StateVec, n: usize, seed: u64) -> Result<f64, String> {
    let cfg = FilterConfig::new(0.001, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut done = 0;
    while done < n {
        let x = sample_state(&mut rng);
        if plant.barrier.eval(&x).unwrap() > cfg.theta {
            continue;
        }
        let truth = TrueActuation::sample_uniform(&plant.model, &mut rng);
        let g = truth.actuation_matrix(&plant.model);
        let u_last = DVector::from_fn(plant.system.dim_action(), |_, _| rng.random_range(-5.0..5.0));
        let xdot_minus = plant.system.drift(&x) + &g * &u_last;
        let mut fs = FilterState::initialize(x.clone(), u_last.clone(), 0.0);
        let u_nom = DVector::zeros(plant.system.dim_action());
        let (u, _) = filter_step(&cfg, &mut fs, &plant.model, &plant.barrier, &x, &xdot_minus, &u_nom).map_err(|e| e.to_string())?;
        let rate = right_derivative(&plant.barrier, &x, &(plant.system.drift(&x) + &g * &u)).unwrap();
        worst = worst.min(rate);
        done += 1;
    }
    Ok(worst)
}

/// Largest per-step shortfall `η − Δφ/dt` over active steps after the first,
/// for a closed loop with finite-difference `ẋ⁻`.
fn sampled_shortfall(plant: &Plant, g: &DMatrix<f64>, x0: &StateVec, dt: f64, horizon: f64) -> Result<f64, String> {
    let cfg = FilterConfig::new(0.001, 1.0).unwrap();
    let sys = with_actuation(&plant.system, g.clone());
    let filter = SafetyFilter::new(cfg.clone(), plant.barrier.clone(), Arc::new(plant.model.clone())).unwrap();
    let p = sys.dim_action();
    let nominal: Nominal = Arc::new(move |_: &StateVec| DVector::zeros(p));
    let mut c = FilteredController::new(filter, nominal);
    let integ = IntegratorConfig::new(dt, Method::Rk4, horizon).unwrap();
    let t: Trajectory = simulate(&sys, &integ, &plant.barrier, &mut c, x0).map_err(|e| e.to_string())?;
    let s = &t.samples;
    let mut worst = 0.0f64;
    for n in 1..s.len() - 1 {
        if s[n].phi <= cfg.theta {
            worst = worst.max(cfg.eta - (s[n + 1].phi - s[n].phi) / dt);
        }
    }
    Ok(worst)
}

fn descent_rate() -> Verdict {
    let lin = linear_plant();
    let bic = bicycle_plant();
    let lin_rate = oracle_rate(&lin, &|r| DVector::from_element(1, r.random_range(-0.6..0.6)), 1000, 3)?;
    let bic_rate = oracle_rate(&bic, &|r| DVector::from_fn(2, |i, _| r.random_range(-3.0..3.0) * [2.0, 0.5][i]), 1000, 4)?;
    let eta = 1.0;
    // rounding allowance on a rate computed from O(1)–O(10³) terms
    let tol = 1e-9;
    let mut msg = format!("oracle min φ̇⁺: linear {lin_rate:.6}, bicycle {bic_rate:.6}");
    let mut ok = lin_rate >= eta - tol && bic_rate >= eta - tol;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, plant, x0, horizon) in [
        ("linear", &lin, DVector::from_element(1, 0.25), 0.6),
        ("bicycle", &bic, DVector::from_row_slice(&[3.0, 0.8]), 4.0),
    ] {
        let g = TrueActuation::sample_uniform(&plant.model, &mut rng).actuation_matrix(&plant.model);
        let e1 = sampled_shortfall(plant, &g, &x0, 1e-3, horizon)?;
        let e2 = sampled_shortfall(plant, &g, &x0, 5e-4, horizon)?;
        let halves = e2 <= 0.55 * e1 + 1e-12;
        ok &= halves;
        msg += &format!("; {name} shortfall C·dt {e1:.3e} → {e2:.3e}");
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn impossibility_witness() -> Verdict {
    let mut parts = Vec::new();
    for name in ["adversarial.toml", "adversarial_bicycle.toml"] {
        let cfg = config(name);
        for &seed in &cfg.seeds {
            let probes = probe_policies(&cfg, seed).map_err(|e| e.to_string())?;
            if probes.len() != 3 {
                return Err(format!("{name}: expected 3 probes"));
            }
            for p in probes {
                let exact = p.abs_error <= 1e-12 * p.neg_grad_norm_sq.abs().max(1.0);
                if !exact || p.phi_after_step >= 0.0 || p.phi_after_step.is_nan() {
                    return Err(format!("{name} {}: φ̇⁺ {} vs {}, φ after step {}", p.policy, p.phidot_plus, p.neg_grad_norm_sq, p.phi_after_step));
                }
            }
        }
        parts.push(name.trim_end_matches(".toml"));
    }
    Ok(format!("zero, random and greedy actions all defeated on {}", parts.join(" and ")))
}

fn unbiasedness() -> Verdict {
    let cfg = config("unbiasedness.toml");
    let o = run(&cfg)?;
    let z = metric(&o, "max_abs_z");
    let msg = format!("max |z| = {z:.3} over {} episodes", cfg.unbiasedness.n_samples);
    if cfg.unbiasedness.n_samples >= 100_000 && z < 4.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn baseline_ordering() -> Verdict {
    let cfg = config("baselines_1d.toml");
    let o = run(&cfg)?;
    let ours = metric(&o, "correction.violations");
    let theirs: Vec<(String, f64)> = cfg.baselines.iter().map(|k| (k.label().to_string(), metric(&o, &format!("{}.violations", k.label())))).collect();
    let msg = format!("correction {ours} violations; baselines {theirs:?}");
    if ours == 0.0 && theirs.iter().any(|(_, v)| *v >= 1.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn shielded_training() -> Verdict {
    let cfg = config("train_4d.toml");
    if cfg.seeds.len() < 3 || cfg.rl.train.episodes < 50 || !cfg.rl.shielded || !cfg.rl.compare_unshielded {
        return Err("train_4d.toml must run shielded and unshielded learners for 50 episodes over 3 seeds".into());
    }
    let o = run(&cfg)?;
    let sum = |k: &str| o.report.per_seed.iter().filter_map(|m| m.get(k)).sum::<f64>();
    let after = sum("shielded.violations_after_entry");
    let entered = sum("shielded.episodes_entering_safe_set");
    let fracs: Vec<f64> = o.report.per_seed.iter().filter_map(|m| m.get("unshielded.violation_fraction")).collect();
    let mut msg = format!(
        "shielded: {after} unsafe states after entry ({entered} episodes entered S); unshielded violation fraction {fracs:?}"
    );
    if entered == 0.0 {
        msg += "; holds vacuously since S is never reached";
    }
    if after == 0.0 && fracs.len() == cfg.seeds.len() && fracs.iter().all(|f| *f > 0.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fd_policy_check() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let policy = GaussianPolicy::new(&[4, 100, 100, 1], 0.7, &mut rng).map_err(|e| e.to_string())?;
    let s = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let a = DVector::from_element(1, rng.random_range(-1.0..1.0));
    let g = policy.grad_log_prob(&s, &a);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i = rng.random_range(0..policy.num_params());
        let h = 1e-6;
        let mut up = policy.clone();
        up.params_mut()[i] += h;
        let mut down = policy.clone();
        down.params_mut()[i] -= h;
        let fd = (up.log_prob(&s, &a) - down.log_prob(&s, &a)) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn numerical_hygiene() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let veh = vehicle4d(VehicleParams::default()).map_err(|e| e.to_string())?;
    let barriers: [(BarrierFunction, Vec<f64>); 3] = [
        (linear1d(Linear1dParams::default()).barrier, vec![0.5]),
        (bicycle_ellipse_barrier(2.0, 0.5), vec![5.0, 1.5]),
        (veh.barrier, vec![7.0, 350.0, 3.0, 10.0]),
    ];
    let mut worst_grad = 0.0f64;
    for (b, half) in &barriers {
        for _ in 0..200 {
            let x = DVector::from_fn(half.len(), |i, _| rng.random_range(-half[i]..half[i]));
            worst_grad = worst_grad.max(grad_check(b, &x, 1e-6));
        }
    }
    let worst_policy = fd_policy_check()?;

    let mut csv_equal = true;
    for name in ["invariance_1d.toml", "baselines_1d.toml"] {
        let cfg = config(name);
        let (a, b) = (run(&cfg)?, run(&cfg)?);
        csv_equal &= a.artifacts == b.artifacts;
    }
    let mut tcfg = config("train_4d.toml");
    tcfg.seeds = vec![11];
    tcfg.rl.train.episodes = 3;
    let (a, b) = (run(&tcfg)?, run(&tcfg)?);
    csv_equal &= a.artifacts == b.artifacts;

    let msg = format!("barrier grad_check max {worst_grad:.2e}; policy FD rel error max {worst_policy:.2e}; repeat runs identical: {csv_equal}");
    if worst_grad < 1e-5 && worst_policy < 1e-4 && csv_equal {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 forward invariance", forward_invariance, Duration::from_secs(1)),
        ("2 recovery bound", recovery_bound, Duration::from_secs(1)),
        ("3 descent rate", descent_rate, Duration::from_secs(10)),
        ("4 impossibility witness", impossibility_witness, Duration::from_secs(1)),
        ("5 unbiased gradient", unbiasedness, Duration::from_secs(30)),
        ("6 baseline ordering", baseline_ordering, Duration::from_secs(10)),
        ("7 shielded training", shielded_training, Duration::from_secs(600)),
        ("8 numerical hygiene", numerical_hygiene, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let verdict = f();
        let elapsed = start.elapsed();
        let verdict = verdict.and_then(|m| within(limit, elapsed).map(|_| m));
        match verdict {
            Ok(m) => println!("PASS criterion {name}: {m} ({:.3} s)", elapsed.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL criterion {name}: {m} ({:.3} s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
