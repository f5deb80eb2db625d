//! A finite MDP small enough to enumerate, used to check that the shielded
//! score-function estimator is unbiased.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::reinforce::{discounted_return, score_times_return};

/// Finite-horizon MDP whose transitions and rewards are indexed by the
/// *played* action `C(s, a)`, while the policy samples `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub initial: Vec<f64>,
    /// `transition[s][u][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][u]`.
    pub reward: Vec<Vec<f64>>,
    /// `shield[s][a]` is the played action.
    pub shield: Vec<Vec<usize>>,
}

impl TabularMdp {
    /// Two states, two actions, three steps; action 1 in state 1 is overwritten by 0.
    pub fn two_state() -> Self {
        Self {
            n_states: 2,
            n_actions: 2,
            horizon: 3,
            gamma: 0.9,
            initial: vec![0.7, 0.3],
            transition: vec![
                vec![vec![0.8, 0.2], vec![0.25, 0.75]],
                vec![vec![0.6, 0.4], vec![0.1, 0.9]],
            ],
            reward: vec![vec![1.0, -0.5], vec![2.0, 0.3]],
            shield: vec![vec![0, 1], vec![0, 0]],
        }
    }

    pub fn with_identity_shield(mut self) -> Self {
        self.shield = (0..self.n_states).map(|_| (0..self.n_actions).collect()).collect();
        self
    }
}

/// `π(a|s) ∝ exp(w[s,a] / temperature)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicy {
    pub n_actions: usize,
    pub logits: Vec<f64>,
    pub temperature: f64,
}

impl SoftmaxPolicy {
    pub fn probs(&self, s: usize) -> Vec<f64> {
        let row = &self.logits[s * self.n_actions..(s + 1) * self.n_actions];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|w| ((w - max) / self.temperature).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }

    /// Adds `∇_w ln π(a|s)` into `out`.
    pub fn accumulate_grad_log(&self, s: usize, a: usize, out: &mut [f64]) {
        let p = self.probs(s);
        for (b, pb) in p.iter().enumerate() {
            let ind = if b == a { 1.0 } else { 0.0 };
            out[s * self.n_actions + b] += (ind - pb) / self.temperature;
        }
    }
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// `J(w)` by enumerating every state/action sequence.
pub fn exact_objective(mdp: &TabularMdp, pi: &SoftmaxPolicy) -> f64 {
    fn go(mdp: &TabularMdp, pi: &SoftmaxPolicy, s: usize, n: usize, discount: f64) -> f64 {
        if n == mdp.horizon {
            return 0.0;
        }
        let p = pi.probs(s);
        let mut v = 0.0;
        for (a, pa) in p.iter().enumerate() {
            let u = mdp.shield[s][a];
            let mut cont = discount * mdp.reward[s][u];
            for (s2, ps2) in mdp.transition[s][u].iter().enumerate() {
                if *ps2 > 0.0 {
                    cont += ps2 * go(mdp, pi, s2, n + 1, discount * mdp.gamma);
                }
            }
            v += pa * cont;
        }
        v
    }
    mdp.initial.iter().enumerate().map(|(s, p0)| p0 * go(mdp, pi, s, 0, 1.0)).sum()
}

/// `∇J` by central differences of the enumerated objective.
pub fn exact_gradient(mdp: &TabularMdp, pi: &SoftmaxPolicy, h: f64) -> Vec<f64> {
    (0..pi.logits.len())
        .map(|i| {
            let mut up = pi.clone();
            up.logits[i] += h;
            let mut down = pi.clone();
            down.logits[i] -= h;
            (exact_objective(mdp, &up) - exact_objective(mdp, &down)) / (2.0 * h)
        })
        .collect()
}

/// One episode's estimate `(Σ ∇ ln π(aₙ|sₙ)) · R`.
pub fn sample_estimate<R: Rng + ?Sized>(mdp: &TabularMdp, pi: &SoftmaxPolicy, rng: &mut R) -> Vec<f64> {
    let mut score = vec![0.0; pi.logits.len()];
    let mut rewards = Vec::with_capacity(mdp.horizon);
    let mut s = sample_index(&mdp.initial, rng);
    for _ in 0..mdp.horizon {
        let a = sample_index(&pi.probs(s), rng);
        pi.accumulate_grad_log(s, a, &mut score);
        let u = mdp.shield[s][a];
        rewards.push(mdp.reward[s][u]);
        s = sample_index(&mdp.transition[s][u], rng);
    }
    score_times_return(&score, discounted_return(&rewards, mdp.gamma))
}

#[derive(Clone, Debug, Serialize)]
pub struct UnbiasednessReport {
    pub n_samples: usize,
    pub exact: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `(mean − exact) / (sd / √n)`; zero where the sample variance vanishes
    /// and the mean matches.
    pub z: Vec<f64>,
}

impl UnbiasednessReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Monte-Carlo mean of the estimator against the enumerated gradient.
pub fn unbiasedness_check(mdp: &TabularMdp, pi: &SoftmaxPolicy, n_samples: usize, seed: u64) -> UnbiasednessReport {
    let exact = exact_gradient(mdp, pi, 1e-5);
    let k = pi.logits.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for n in 1..=n_samples {
        let g = sample_estimate(mdp, pi, &mut rng);
        for i in 0..k {
            let d = g[i] - mean[i];
            mean[i] += d / n as f64;
            m2[i] += d * (g[i] - mean[i]);
        }
    }
    let variance: Vec<f64> = m2.iter().map(|v| v / (n_samples.max(2) - 1) as f64).collect();
    let z = (0..k)
        .map(|i| {
            let se = (variance[i] / n_samples as f64).sqrt();
            let diff = mean[i] - exact[i];
            if se > 0.0 {
                diff / se
            } else if diff.abs() < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    UnbiasednessReport { n_samples, exact, mean, variance, z }
}
