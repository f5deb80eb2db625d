use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::barrier::{BarrierFunction, StateVec};
use crate::baselines::build_baseline;
use crate::dynamics::{
    bicycle2d, bicycle_ellipse_barrier, linear1d, simulate, vehicle4d, vehicle_svd, FilteredController, Linear1d,
    NominalController, Trajectory,
};
use crate::error::{Error, Result};
use crate::filter::{adversarial_f, right_derivative, SafetyFilter};
use crate::rl::tabular::{unbiasedness_check, SoftmaxPolicy, TabularMdp};
use crate::rl::{checkpoint, train, Environment, GaussianPolicy, Shield, TrainConfig, TrainingLog};
use crate::uncertainty::SvdUncertaintyModel;

use super::config::{ExperimentConfig, ProbeSystem, Scenario};
use super::report::{CheckResult, MetricsReport, SeedMetrics};

/// A file produced by a scenario, kept in memory until the run is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: MetricsReport,
    pub artifacts: Vec<Artifact>,
    /// Human-readable comparison table, when the scenario has one.
    pub table: Option<String>,
}

/// Environment variable holding the number of worker threads for seed fan-out.
pub const WORKERS_ENV: &str = "FEWSHOT_WORKERS";

/// Runs one seed per task on a pool sized by [`WORKERS_ENV`]; results come
/// back in seed order.
fn fan_out<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Invariance1d | Scenario::Recovery1d => filtered_1d(cfg),
        Scenario::Baselines1d => baselines_1d(cfg),
        Scenario::Train4d => train_4d(cfg),
        Scenario::Unbiasedness => unbiasedness(cfg),
        Scenario::Adversarial => adversarial(cfg),
    }
}

fn csv_bytes(t: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

fn x0_or(cfg: &ExperimentConfig, default: &[f64]) -> StateVec {
    DVector::from_column_slice(cfg.x0.as_deref().unwrap_or(default))
}

fn linear_setup(cfg: &ExperimentConfig) -> Result<(Linear1d, SvdUncertaintyModel)> {
    let sys = linear1d(cfg.linear1d);
    let u = cfg.uncertainty;
    // also confirms the plant's gain lies inside the declared bounds
    let (model, _) = sys.svd(u.lambda_hat, u.lower, u.upper)?;
    Ok((sys, model))
}

fn run_filtered(cfg: &ExperimentConfig, sys: &Linear1d, model: &SvdUncertaintyModel, x0: &StateVec) -> Result<Trajectory> {
    let filter = SafetyFilter::new(cfg.filter.clone(), sys.barrier.clone(), Arc::new(model.clone()))?;
    let mut c = FilteredController::new(filter, sys.nominal.clone());
    simulate(&sys.system, &cfg.integrator()?, &sys.barrier, &mut c, x0)
}

/// Samples with `φ < 0` from the first sample with `φ ≥ θ` onwards.
fn violations_after_entry(t: &Trajectory, theta: f64) -> usize {
    match t.samples.iter().position(|s| s.phi >= theta) {
        Some(k) => t.samples[k..].iter().filter(|s| s.phi < 0.0).count(),
        None => 0,
    }
}

fn record_trajectory(m: &mut SeedMetrics, prefix: &str, t: &Trajectory, theta: f64) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    m.set(&key("safety_rate"), t.safety_rate());
    m.set(&key("violations"), t.violations() as f64);
    m.set(&key("min_phi"), t.min_phi());
    m.set(&key("recovery_time"), t.first_entry_time(theta).unwrap_or(f64::NAN));
    m.set(&key("activations"), t.activations() as f64);
}

fn filtered_1d(cfg: &ExperimentConfig) -> Result<Outcome> {
    let recovery = cfg.scenario == Scenario::Recovery1d;
    let x0 = x0_or(cfg, if recovery { &[0.25] } else { &[0.1999] });
    let (sys, model) = linear_setup(cfg)?;
    let integ = cfg.integrator()?;
    let theta = cfg.filter.theta;
    let phi0 = sys.barrier.eval(&x0)?;
    let bound = (theta - phi0).max(0.0) / cfg.filter.eta + 5.0 * integ.dt;

    let runs = fan_out(&cfg.seeds, |seed| {
        let filtered = run_filtered(cfg, &sys, &model, &x0)?;
        let nominal = simulate(&sys.system, &integ, &sys.barrier, &mut NominalController(sys.nominal.clone()), &x0)?;
        Ok((seed, filtered, nominal))
    })?;

    let mut per_seed = Vec::new();
    let mut artifacts = Vec::new();
    for (seed, filtered, nominal) in &runs {
        let mut m = SeedMetrics::new(*seed);
        record_trajectory(&mut m, "", filtered, theta);
        m.set("violations_after_entry", violations_after_entry(filtered, theta) as f64);
        m.set("recovery_bound", bound);
        record_trajectory(&mut m, "nominal", nominal, theta);
        per_seed.push(m);
        artifacts.push(Artifact { name: format!("filtered_seed{seed}.csv"), bytes: csv_bytes(filtered)? });
        artifacts.push(Artifact { name: format!("nominal_seed{seed}.csv"), bytes: csv_bytes(nominal)? });
    }

    let all = |key: &str, pred: &dyn Fn(f64) -> bool| per_seed.iter().all(|m| m.get(key).is_some_and(pred));
    let mut checks = Vec::new();
    if recovery {
        let worst = per_seed.iter().map(|m| m.get("recovery_time").unwrap_or(f64::NAN)).fold(f64::NEG_INFINITY, f64::max);
        checks.push(CheckResult::new(
            "recovery within bound",
            all("recovery_time", &|t| t <= bound),
            format!("slowest entry into the θ-level set {worst} s, bound {bound} s"),
        ));
        checks.push(CheckResult::new(
            "no exit after recovery",
            all("violations_after_entry", &|v| v == 0.0),
            "samples with φ < 0 after the first entry",
        ));
    } else {
        let min_phi = per_seed.iter().map(|m| m.get("min_phi").unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
        checks.push(CheckResult::new(
            "filtered run never leaves the safe set",
            all("violations", &|v| v == 0.0),
            format!("min φ = {min_phi}"),
        ));
        checks.push(CheckResult::new(
            "nominal run leaves the safe set",
            all("nominal.violations", &|v| v > 0.0),
            format!("nominal violations {:?}", per_seed.iter().map(|m| m.get("nominal.violations").unwrap_or(0.0)).collect::<Vec<_>>()),
        ));
    }
    let extra = json!({ "x0": x0.as_slice(), "phi0": phi0, "recovery_bound": bound });
    Ok(Outcome { report: MetricsReport::new(cfg.scenario.name(), per_seed, checks, extra), artifacts, table: None })
}

/// Row of the paired comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub controller: String,
    pub violations: usize,
    pub safety_rate: f64,
    pub min_phi: f64,
    pub recovery_time: f64,
}

pub const COMPARISON_HEADER: &str = "seed,controller,violations,safety_rate,min_phi,recovery_time";

pub const CORRECTION_LABEL: &str = "correction";

fn baselines_1d(cfg: &ExperimentConfig) -> Result<Outcome> {
    let x0 = x0_or(cfg, &[0.1999]);
    let (sys, model) = linear_setup(cfg)?;
    let integ = cfg.integrator()?;
    let theta = cfg.filter.theta;

    let runs = fan_out(&cfg.seeds, |seed| {
        let mut out = vec![(CORRECTION_LABEL.to_string(), run_filtered(cfg, &sys, &model, &x0)?)];
        for kind in &cfg.baselines {
            let mut c = build_baseline(*kind, &cfg.baseline, integ.dt, sys.nominal.clone())?;
            out.push((kind.label().to_string(), simulate(&sys.system, &integ, &sys.barrier, &mut *c, &x0)?));
        }
        Ok((seed, out))
    })?;

    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    let mut artifacts = Vec::new();
    for (seed, out) in &runs {
        let mut m = SeedMetrics::new(*seed);
        for (label, t) in out {
            record_trajectory(&mut m, label, t, theta);
            rows.push(ComparisonRow {
                seed: *seed,
                controller: label.clone(),
                violations: t.violations(),
                safety_rate: t.safety_rate(),
                min_phi: t.min_phi(),
                recovery_time: t.first_entry_time(theta).unwrap_or(f64::NAN),
            });
            artifacts.push(Artifact { name: format!("{label}_seed{seed}.csv"), bytes: csv_bytes(t)? });
        }
        per_seed.push(m);
    }

    let mut csv = String::new();
    writeln!(csv, "{COMPARISON_HEADER}").unwrap();
    for r in &rows {
        writeln!(csv, "{},{},{},{},{},{}", r.seed, r.controller, r.violations, r.safety_rate, r.min_phi, r.recovery_time).unwrap();
    }
    artifacts.push(Artifact { name: "comparison.csv".into(), bytes: csv.into_bytes() });

    let ours_clean = rows.iter().filter(|r| r.controller == CORRECTION_LABEL).all(|r| r.violations == 0);
    let violators: Vec<&str> = {
        let mut v: Vec<&str> = rows.iter().filter(|r| r.controller != CORRECTION_LABEL && r.violations > 0).map(|r| r.controller.as_str()).collect();
        v.dedup();
        v
    };
    let checks = vec![
        CheckResult::new("correction controller records zero violations", ours_clean, format!("from x0 = {}", x0[0])),
        CheckResult::new(
            "at least one baseline violates",
            !violators.is_empty(),
            format!("violating baselines: {violators:?}"),
        ),
    ];
    let table = comparison_table(&rows);
    let extra = json!({ "x0": x0.as_slice(), "controllers": runs.first().map(|(_, o)| o.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>()) });
    Ok(Outcome { report: MetricsReport::new(cfg.scenario.name(), per_seed, checks, extra), artifacts, table: Some(table) })
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{:>6}  {:<12} {:>10} {:>12} {:>14} {:>14}", "seed", "controller", "violations", "safety_rate", "min_phi", "recovery_time").unwrap();
    for r in rows {
        writeln!(
            s,
            "{:>6}  {:<12} {:>10} {:>12.6} {:>14.6e} {:>14.6}",
            r.seed, r.controller, r.violations, r.safety_rate, r.min_phi, r.recovery_time
        )
        .unwrap();
    }
    s
}

fn log_bytes(log: &TrainingLog) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    Ok(buf)
}

fn record_training(m: &mut SeedMetrics, prefix: &str, log: &TrainingLog) {
    let n = log.episodes.len().max(1) as f64;
    let tail = &log.episodes[log.episodes.len() - log.episodes.len().div_ceil(10).min(log.episodes.len())..];
    m.set(&format!("{prefix}.violation_fraction"), log.violation_fraction());
    m.set(&format!("{prefix}.violations_after_entry"), log.violations_after_entry() as f64);
    m.set(&format!("{prefix}.episodes_entering_safe_set"), log.episodes.iter().filter(|e| e.entered_safe_set).count() as f64);
    m.set(&format!("{prefix}.success_rate"), log.episodes.iter().filter(|e| e.success).count() as f64 / n);
    m.set(&format!("{prefix}.mean_steps"), log.episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n);
    m.set(
        &format!("{prefix}.final_steps"),
        tail.iter().map(|e| e.steps as f64).sum::<f64>() / tail.len().max(1) as f64,
    );
    m.set(&format!("{prefix}.mean_cost_sum"), log.episodes.iter().map(|e| e.cost_sum).sum::<f64>() / n);
    m.set(&format!("{prefix}.aborted_episodes"), log.episodes.iter().filter(|e| e.aborted).count() as f64);
    let steps: usize = log.episodes.iter().map(|e| e.steps).sum();
    let act: usize = log.episodes.iter().map(|e| e.shield_activations).sum();
    m.set(&format!("{prefix}.shield_activation_fraction"), if steps == 0 { 0.0 } else { act as f64 / steps as f64 });
}

struct SeedTraining {
    seed: u64,
    shielded: Option<(TrainingLog, GaussianPolicy)>,
    unshielded: Option<(TrainingLog, GaussianPolicy)>,
}

fn train_4d(cfg: &ExperimentConfig) -> Result<Outcome> {
    let veh = vehicle4d(cfg.vehicle)?;
    let u = cfg.uncertainty;
    let (model, _) = vehicle_svd(&cfg.vehicle, u.lambda_hat, u.lower, u.upper)?;
    let rl = &cfg.rl;
    let env = Environment {
        system: veh.system.clone(),
        barrier: veh.barrier.clone(),
        task: Arc::new(veh.task),
        x0: x0_or(cfg, &[0.0; 4]),
        ts: rl.ts,
        max_steps: rl.max_steps,
        action_clip: rl.action_clip,
        u_init: DVector::from_element(1, rl.u_init),
    };
    env.validate()?;
    let shield = Shield { cfg: cfg.filter.clone(), barrier: veh.barrier.clone(), knowledge: Arc::new(model) };
    let mut sizes = vec![4];
    sizes.extend(&rl.hidden);
    sizes.push(1);

    let runs = fan_out(&cfg.seeds, |seed| {
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let policy0 = GaussianPolicy::new(&sizes, rl.sigma, &mut init)?;
        let tc = TrainConfig { seed: init.random(), ..rl.train.clone() };
        let go = |with_shield: bool| -> Result<(TrainingLog, GaussianPolicy)> {
            let mut p = policy0.clone();
            let log = train(&env, &mut p, &tc, with_shield.then_some(&shield))?;
            Ok((log, p))
        };
        Ok(SeedTraining {
            seed,
            shielded: if rl.shielded { Some(go(true)?) } else { None },
            unshielded: if rl.compare_unshielded || !rl.shielded { Some(go(false)?) } else { None },
        })
    })?;

    let mut per_seed = Vec::new();
    let mut artifacts = Vec::new();
    for r in &runs {
        let mut m = SeedMetrics::new(r.seed);
        for (label, run) in [("shielded", &r.shielded), ("unshielded", &r.unshielded)] {
            if let Some((log, policy)) = run {
                record_training(&mut m, label, log);
                artifacts.push(Artifact { name: format!("train_{label}_seed{}.csv", r.seed), bytes: log_bytes(log)? });
                if rl.save_checkpoints {
                    artifacts.push(Artifact {
                        name: format!("policy_{label}_seed{}.txt", r.seed),
                        bytes: checkpoint::to_string(policy).into_bytes(),
                    });
                }
            }
        }
        per_seed.push(m);
    }

    let sum = |key: &str| per_seed.iter().filter_map(|m| m.get(key)).sum::<f64>();
    let mut checks = Vec::new();
    if rl.shielded {
        let entered = sum("shielded.episodes_entering_safe_set");
        let after = sum("shielded.violations_after_entry");
        let detail = if entered == 0.0 {
            "no shielded episode reached φ ≥ 0, so the condition holds vacuously".to_string()
        } else {
            format!("{after} unsafe states after entry across {entered} episodes that entered the safe set")
        };
        checks.push(CheckResult::new("shielded training: no violation after entering the safe set", after == 0.0, detail));
    }
    if rl.compare_unshielded || !rl.shielded {
        let fracs: Vec<f64> = per_seed.iter().filter_map(|m| m.get("unshielded.violation_fraction")).collect();
        checks.push(CheckResult::new(
            "unshielded training visits unsafe states",
            fracs.iter().all(|f| *f > 0.0),
            format!("violation fraction per seed {fracs:?}"),
        ));
    }
    let extra = json!({ "policy_sizes": sizes, "episodes": rl.train.episodes });
    Ok(Outcome { report: MetricsReport::new(cfg.scenario.name(), per_seed, checks, extra), artifacts, table: None })
}

fn unbiasedness(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.unbiasedness;
    let mut mdp = TabularMdp::two_state();
    if s.identity_shield {
        mdp = mdp.with_identity_shield();
    }
    let pi = SoftmaxPolicy { n_actions: 2, logits: s.logits.clone(), temperature: s.temperature };
    let reports = fan_out(&cfg.seeds, |seed| Ok((seed, unbiasedness_check(&mdp, &pi, s.n_samples, seed))))?;

    let mut per_seed = Vec::new();
    let mut artifacts = Vec::new();
    for (seed, r) in &reports {
        let mut m = SeedMetrics::new(*seed);
        m.set("max_abs_z", r.max_abs_z());
        per_seed.push(m);
        let mut csv = String::from("coordinate,exact,mean,variance,z\n");
        for i in 0..r.exact.len() {
            writeln!(csv, "{i},{},{},{},{}", r.exact[i], r.mean[i], r.variance[i], r.z[i]).unwrap();
        }
        artifacts.push(Artifact { name: format!("unbiasedness_seed{seed}.csv"), bytes: csv.into_bytes() });
    }
    let worst = per_seed.iter().filter_map(|m| m.get("max_abs_z")).fold(0.0, f64::max);
    let checks = vec![CheckResult::new(
        "score-function estimate is unbiased",
        worst < s.z_threshold,
        format!("max |z| = {worst} over {} samples per seed, threshold {}", s.n_samples, s.z_threshold),
    )];
    let extra = json!({ "reports": reports.iter().map(|(_, r)| r).collect::<Vec<_>>() });
    Ok(Outcome { report: MetricsReport::new(cfg.scenario.name(), per_seed, checks, extra), artifacts, table: None })
}

/// One committed action against the worst-case drift.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ProbeResult {
    pub policy: String,
    pub u0: Vec<f64>,
    pub phidot_plus: f64,
    pub neg_grad_norm_sq: f64,
    pub abs_error: f64,
    pub phi_after_step: f64,
}

fn probe_setup(cfg: &ExperimentConfig) -> Result<(BarrierFunction, DMatrix<f64>, StateVec)> {
    match cfg.adversarial.system {
        ProbeSystem::Linear1d => {
            let sys = linear1d(cfg.linear1d);
            let edge = 1.0 / cfg.linear1d.barrier_curvature.sqrt();
            let x0 = x0_or(cfg, &[edge]);
            Ok((sys.barrier.clone(), sys.system.actuation(&x0), x0))
        }
        ProbeSystem::Bicycle2d => {
            let b = &cfg.bicycle;
            let sys = bicycle2d(b.params)?;
            let a = cfg.adversarial.boundary_angle;
            let x0 = x0_or(cfg, &[b.v_max * a.cos(), b.r_max * a.sin()]);
            Ok((bicycle_ellipse_barrier(b.v_max, b.r_max), sys.actuation(&x0), x0))
        }
    }
}

/// The three single-sample policies: zero, uniformly random and greedy `k gᵀ∇φ`.
pub fn probe_policies(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ProbeResult>> {
    let s = &cfg.adversarial;
    let (barrier, g, x0) = probe_setup(cfg)?;
    let grad = barrier.grad(&x0)?;
    let p = g.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = [
        ("zero", DVector::zeros(p)),
        ("random", DVector::from_fn(p, |_, _| rng.random_range(-s.random_scale..=s.random_scale))),
        ("greedy", g.transpose() * &grad * s.greedy_gain),
    ];
    candidates
        .into_iter()
        .map(|(name, u0)| {
            let f = adversarial_f(&barrier, &g, &x0, &u0)?;
            let xdot = f + &g * &u0;
            let phidot = right_derivative(&barrier, &x0, &xdot)?;
            let target = -grad.norm_squared();
            let x1 = &x0 + xdot * s.dt;
            Ok(ProbeResult {
                policy: name.to_string(),
                u0: u0.as_slice().to_vec(),
                phidot_plus: phidot,
                neg_grad_norm_sq: target,
                abs_error: (phidot - target).abs(),
                phi_after_step: barrier.eval(&x1)?,
            })
        })
        .collect()
}

fn adversarial(cfg: &ExperimentConfig) -> Result<Outcome> {
    let results = fan_out(&cfg.seeds, |seed| Ok((seed, probe_policies(cfg, seed)?)))?;
    let mut per_seed = Vec::new();
    let mut csv = String::from("seed,policy,phidot_plus,neg_grad_norm_sq,abs_error,phi_after_step\n");
    let mut exact = true;
    let mut leaves = true;
    for (seed, probes) in &results {
        let mut m = SeedMetrics::new(*seed);
        for r in probes {
            m.set(&format!("{}.phidot_plus", r.policy), r.phidot_plus);
            m.set(&format!("{}.abs_error", r.policy), r.abs_error);
            m.set(&format!("{}.phi_after_step", r.policy), r.phi_after_step);
            writeln!(csv, "{seed},{},{},{},{},{}", r.policy, r.phidot_plus, r.neg_grad_norm_sq, r.abs_error, r.phi_after_step).unwrap();
            exact &= r.abs_error <= 1e-12 * r.neg_grad_norm_sq.abs().max(1.0);
            leaves &= r.phi_after_step < 0.0;
        }
        per_seed.push(m);
    }
    let checks = vec![
        CheckResult::new("worst-case drift gives φ̇⁺ = −‖∇φ‖²", exact, "for the zero, random and greedy actions"),
        CheckResult::new("one Euler step leaves the safe set", leaves, format!("step {}", cfg.adversarial.dt)),
    ];
    let extra = json!({ "probes": results.iter().map(|(_, p)| p).collect::<Vec<_>>() });
    Ok(Outcome {
        report: MetricsReport::new(cfg.scenario.name(), per_seed, checks, extra),
        artifacts: vec![Artifact { name: "adversarial.csv".into(), bytes: csv.into_bytes() }],
        table: None,
    })
}
