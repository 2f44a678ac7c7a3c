//! Online learning engines: a lazily-switching perturbed-leader algorithm
//! for the experts-with-switching-cost problem, EXP3 for adversarial
//! bandits, and a doubling wrapper for unknown reward range and horizon.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::VALUE_EPS;

/// Full-information experts learner with switching cost `C`.
///
/// Each expert draws one perturbation up front at scale `1/eps`, and the
/// perturbed leader is `argmax(cumulative reward + perturbation)`. The
/// coupling is lazy: the standing choice is re-evaluated against the leader
/// only at refresh steps drawn with a small calibrated probability, so the
/// choice cannot flap while two cumulative rewards hover near a tie and the
/// expected number of switches stays `O(eps (R + C) T)`.
#[derive(Debug, Clone)]
pub struct LazyFpl {
    n: usize,
    reward_bound: f64,
    eps: f64,
    refresh_prob: f64,
    perturbation: Vec<f64>,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
    current: usize,
    switches: u64,
    chosen_once: bool,
}

impl LazyFpl {
    /// `reward_bound` is the per-step reward cap `R`, `switching_cost` the
    /// cost `C` charged per change of expert; together with the horizon they
    /// set the perturbation scale `eps = sqrt(log n / (T (R + C)))`, clipped
    /// into `(0, 1]`, and the refresh probability `eps * (R + C)`.
    pub fn new(n: usize, reward_bound: f64, switching_cost: f64, horizon: u64, seed: u64) -> Self {
        assert!(n >= 1, "need at least one expert");
        let denom = (horizon.max(1) as f64) * (reward_bound + switching_cost).max(VALUE_EPS);
        let eps = ((n.max(2) as f64).ln() / denom).sqrt().clamp(f64::MIN_POSITIVE, 1.0);
        let refresh_prob = (eps * (reward_bound + switching_cost)).clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perturbation = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                -u.ln() / eps
            })
            .collect();
        Self {
            n,
            reward_bound,
            eps,
            refresh_prob,
            perturbation,
            cumulative: vec![0.0; n],
            rng,
            current: 0,
            switches: 0,
            chosen_once: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    fn leader(&self) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.n {
            let score = self.cumulative[i] + self.perturbation[i];
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    /// Expert to follow this step.
    pub fn choose(&mut self) -> usize {
        let refresh = !self.chosen_once || self.rng.random_bool(self.refresh_prob);
        if refresh {
            let leader = self.leader();
            if self.chosen_once && leader != self.current {
                self.switches += 1;
            }
            self.current = leader;
        }
        self.chosen_once = true;
        self.current
    }

    /// Feed the full reward vector for the step.
    pub fn feed(&mut self, rewards: &[f64]) -> Result<(), SchedError> {
        assert_eq!(rewards.len(), self.n, "reward vector length mismatch");
        for &r in rewards {
            if !r.is_finite() || r < -VALUE_EPS || r > self.reward_bound + VALUE_EPS {
                return Err(SchedError::RewardRange { reward: r, bound: self.reward_bound });
            }
        }
        for (c, &r) in self.cumulative.iter_mut().zip(rewards) {
            *c += r;
        }
        Ok(())
    }

    #[cfg(test)]
    fn scale_state(&mut self, lambda: f64) {
        for c in &mut self.cumulative {
            *c *= lambda;
        }
        for p in &mut self.perturbation {
            *p *= lambda;
        }
    }
}

/// A degenerate experts learner that always answers the same index. Useful
/// as a no-switching baseline for the combiners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedChoice(pub usize);

/// Either experts engine, selected by combiner configuration.
#[derive(Debug, Clone)]
pub enum ExpertsLearner {
    Lazy(Box<LazyFpl>),
    Fixed(FixedChoice),
}

impl ExpertsLearner {
    pub fn choose(&mut self) -> usize {
        match self {
            ExpertsLearner::Lazy(l) => l.choose(),
            ExpertsLearner::Fixed(f) => f.0,
        }
    }

    pub fn feed(&mut self, rewards: &[f64]) -> Result<(), SchedError> {
        match self {
            ExpertsLearner::Lazy(l) => l.feed(rewards),
            ExpertsLearner::Fixed(_) => Ok(()),
        }
    }
}

/// Adversarial bandit: exponential weights with uniform exploration and
/// importance-weighted updates, weights kept in log domain.
#[derive(Debug, Clone)]
pub struct Exp3 {
    n: usize,
    reward_bound: f64,
    explore: f64,
    eta: f64,
    log_weights: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Exp3 {
    pub fn new(n: usize, reward_bound: f64, horizon: u64, seed: u64) -> Self {
        assert!(n >= 1, "need at least one arm");
        let nf = n as f64;
        let t = horizon.max(1) as f64;
        // Rewards are normalized by the bound before they reach the weights,
        // so the exploration rate is tuned against the normalized total gain
        // bound `T` alone.
        let explore = (nf * nf.max(2.0).ln() / ((std::f64::consts::E - 1.0) * t))
            .sqrt()
            .min(1.0);
        let eta = explore / nf;
        Self {
            n,
            reward_bound,
            explore,
            eta,
            log_weights: vec![0.0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn exploration_rate(&self) -> f64 {
        self.explore
    }

    /// Sampling distribution: exploration-mixed normalized weights.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = self.log_weights.iter().map(|&w| (w - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        exp.into_iter()
            .map(|w| (1.0 - self.explore) * w / sum + self.explore / self.n as f64)
            .collect()
    }

    pub fn choose(&mut self) -> usize {
        let probs = self.probabilities();
        let draw: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return i;
            }
        }
        self.n - 1
    }

    /// Feed the observed reward of the arm just played. Rewards above the
    /// declared bound are a range signal for the doubling wrapper.
    pub fn feed(&mut self, arm: usize, reward: f64) -> Result<(), SchedError> {
        assert!(arm < self.n);
        if !reward.is_finite() || reward < -VALUE_EPS || reward > self.reward_bound + VALUE_EPS {
            return Err(SchedError::RewardRange { reward, bound: self.reward_bound });
        }
        let p = self.probabilities()[arm];
        let estimate = (reward / self.reward_bound) / p;
        self.log_weights[arm] += self.eta * estimate;
        Ok(())
    }
}

/// Bandit learners the doubling wrapper can manage.
pub trait Bandit {
    fn choose(&mut self) -> usize;
    fn feed(&mut self, arm: usize, reward: f64) -> Result<(), SchedError>;
}

impl Bandit for Exp3 {
    fn choose(&mut self) -> usize {
        Exp3::choose(self)
    }

    fn feed(&mut self, arm: usize, reward: f64) -> Result<(), SchedError> {
        Exp3::feed(self, arm, reward)
    }
}

/// Builds a fresh learner for given guesses of reward range and horizon.
pub trait BanditFactory {
    type Learner: Bandit;
    fn make(&self, reward_bound: f64, horizon: u64, seed: u64) -> Self::Learner;
}

/// EXP3 factory for a fixed arm count.
#[derive(Debug, Clone, Copy)]
pub struct Exp3Factory {
    pub arms: usize,
}

impl BanditFactory for Exp3Factory {
    type Learner = Exp3;

    fn make(&self, reward_bound: f64, horizon: u64, seed: u64) -> Exp3 {
        Exp3::new(self.arms, reward_bound, horizon, seed)
    }
}

/// Doubling wrapper: runs an inner learner with guessed `(R, T)`, doubling
/// the reward-range guess whenever an observation exceeds it (possibly
/// several doublings at once) and the horizon guess whenever it is used up,
/// restarting the inner learner from scratch each time.
pub struct Doubling<F: BanditFactory> {
    factory: F,
    seed: u64,
    r_guess: f64,
    t_guess: u64,
    steps: u64,
    epoch: u64,
    inner: F::Learner,
}

/// Wrap a factory into a learner that needs to know neither the reward
/// range nor the horizon in advance; guesses start at `R = 1`, `T = 1`.
pub fn doubling_wrap<F: BanditFactory>(factory: F, seed: u64) -> Doubling<F> {
    let inner = factory.make(1.0, 1, seed);
    Doubling { factory, seed, r_guess: 1.0, t_guess: 1, steps: 0, epoch: 0, inner }
}

impl<F: BanditFactory> Doubling<F> {
    pub fn r_guess(&self) -> f64 {
        self.r_guess
    }

    pub fn t_guess(&self) -> u64 {
        self.t_guess
    }

    pub fn restarts(&self) -> u64 {
        self.epoch
    }

    fn rebuild(&mut self) {
        self.epoch += 1;
        self.steps = 0;
        self.inner = self.factory.make(self.r_guess, self.t_guess, self.seed ^ self.epoch);
    }

    pub fn choose(&mut self) -> usize {
        self.inner.choose()
    }

    pub fn feed(&mut self, arm: usize, reward: f64) {
        if reward > self.r_guess {
            while reward > self.r_guess {
                self.r_guess *= 2.0;
            }
            self.rebuild();
        }
        self.steps += 1;
        if self.steps > self.t_guess {
            self.t_guess *= 2;
            self.rebuild();
            self.steps = 1;
        }
        // In range by construction now.
        self.inner.feed(arm, reward.max(0.0)).expect("reward fits the doubled guess");
    }
}

/// Monte Carlo estimate of the expected maximum of `k` i.i.d.
/// Geometric(`gamma`) variables, together with the harmonic-sum bound
/// `H_k / gamma` it must stay below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomMaxEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
}

pub fn geometric_max_check(k: u32, gamma: f64, samples: u32, seed: u64) -> GeomMaxEstimate {
    assert!(k >= 1 && samples >= 1);
    assert!(gamma > 0.0 && gamma <= 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log1m = (1.0 - gamma).ln();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut max = 1u64;
        for _ in 0..k {
            let g = if gamma >= 1.0 {
                1u64
            } else {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (u.ln() / log1m).ceil().max(1.0) as u64
            };
            max = max.max(g);
        }
        sum += max as f64;
        sum_sq += (max * max) as f64;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std_err = (var / n).sqrt();
    let harmonic: f64 = (1..=k).map(|i| 1.0 / i as f64).sum();
    GeomMaxEstimate { mean, std_err, bound: harmonic / gamma }
}
