//! Combiners that run a roster of mechanisms under a regret-minimizing
//! learner and follow its advice via truthful switching.
//!
//! `fts` (clairvoyant): every roster member is simulated on the full stream,
//! the experts learner (switching cost `2 * v_max * d_max * m`) picks an
//! index per slot, and index changes extend a composed switch chain whose
//! allocation is the combiner's output.
//!
//! `ftbs` (non-clairvoyant): an independent coin of probability `gamma` is
//! flipped every slot; on heads the reward of the finished batch is fed to a
//! bandit (EXP3 under a doubling wrapper), and the chosen arm is installed
//! by a truthful switch, or the current arm is restarted if unchanged. Coins
//! depend only on the seed, never on reports.

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::job::{Instance, WelfareSeries};
use crate::learners::{doubling_wrap, Exp3Factory, ExpertsLearner, FixedChoice, LazyFpl};
use crate::mech::{
    run_clairvoyant, run_nonclairvoyant, ClairSpec, InstanceParams, NcEngine, NcEvent,
    NcEventRecord, NcReport, NcSpec, RunOutput,
};
use crate::switching::{compose_chain, with_random_restarts, RestartConfig, SwitchPlan};

/// Experts engine selection for `fts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExpertsChoice {
    /// Lazily-switching perturbed leader; `switching_cost` defaults to
    /// `2 * v_max * d_max * m`.
    Lazy { seed: u64, switching_cost: Option<f64> },
    /// Always follow one index (no-switching baseline).
    Fixed(usize),
}

/// Configuration of an `fts` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtsConfig {
    pub roster: Vec<ClairSpec>,
    pub learner: ExpertsChoice,
}

/// Configuration of an `ftbs` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtbsConfig {
    pub roster: Vec<NcSpec>,
    /// Per-slot heads probability; `None` uses
    /// `(l_max + d_max)^(-2/3) * T^(-1/3) * (n log n)^(1/3)` clipped to [0, 1].
    pub gamma: Option<f64>,
    pub coin_seed: u64,
    pub learner_seed: u64,
}

/// The heads probability from the tuned formula, clipped into `[0, 1]`.
pub fn tuned_gamma(sync_window: u32, horizon: u32, arms: usize) -> f64 {
    let w = sync_window.max(1) as f64;
    let t = horizon.max(1) as f64;
    let n = arms as f64;
    (w.powf(-2.0 / 3.0) * t.powf(-1.0 / 3.0) * (n * n.max(2.0).ln()).powf(1.0 / 3.0)).min(1.0)
}

/// A restart or switch performed by a combiner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerEvent {
    pub requested_at: u32,
    pub effective_at: u32,
    pub kind: String,
    pub arm: usize,
}

/// Bandit feedback delivered at a heads slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFeed {
    pub heads_at: u32,
    /// Arm the reward is attributed to (the one active over the batch).
    pub arm: usize,
    pub total: f64,
}

/// Per-run trace of a combiner: learner choices, events, rewards, and the
/// welfare series needed to audit them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    /// Arm/expert index active at each slot (index 0 unused).
    pub choices: Vec<usize>,
    pub events: Vec<CombinerEvent>,
    /// Heads slots, in order (`ftbs`).
    pub coin_heads: Vec<u32>,
    /// Batch rewards fed to the bandit (`ftbs`).
    pub batch_feeds: Vec<BatchFeed>,
    /// Reward vectors fed to the experts learner per slot (`fts`).
    pub rewards_fed: Vec<Vec<f64>>,
    /// Standalone welfare series of each roster member (`fts`).
    pub member_series: Vec<Vec<f64>>,
    /// The combiner's own observable per-slot reward series (`ftbs`).
    pub reward_series: Vec<f64>,
    /// Switch times of the composed chain (`fts`).
    pub switch_times: Vec<u32>,
}

impl RunLog {
    /// Line-delimited event export: `slot kind arm value`.
    pub fn write_events(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        for (t, &arm) in self.choices.iter().enumerate().skip(1) {
            writeln!(out, "{t} choice {arm} 0")?;
        }
        for f in &self.batch_feeds {
            writeln!(out, "{} feed {} {}", f.heads_at, f.arm, f.total)?;
        }
        for e in &self.events {
            writeln!(out, "{} {} {} {}", e.requested_at, e.kind, e.arm, e.effective_at)?;
        }
        Ok(())
    }
}

/// Result of an `fts` run: the composed chain's output plus the trace.
#[derive(Debug, Clone)]
pub struct FtsRun {
    pub output: RunOutput,
    pub log: RunLog,
    pub plan: SwitchPlan,
}

/// Run the clairvoyant combiner.
pub fn fts_run(cfg: &FtsConfig, inst: &Instance) -> Result<FtsRun, SchedError> {
    let n = cfg.roster.len();
    assert!(n >= 1, "fts needs a nonempty roster");
    let params = InstanceParams::of(inst);
    let reward_bound = params.bounds.v_max * params.machines as f64;
    let default_cost = 2.0 * params.bounds.v_max * params.bounds.d_max as f64 * params.machines as f64;
    let mut learner = match cfg.learner {
        ExpertsChoice::Lazy { seed, switching_cost } => {
            ExpertsLearner::Lazy(Box::new(LazyFpl::new(
                n,
                reward_bound,
                switching_cost.unwrap_or(default_cost),
                inst.horizon as u64,
                seed,
            )))
        }
        ExpertsChoice::Fixed(i) => {
            assert!(i < n, "fixed index out of range");
            ExpertsLearner::Fixed(FixedChoice(i))
        }
    };

    // Full-stream simulation of every roster member, slot by slot.
    let mut sims: Vec<_> = cfg.roster.iter().map(|spec| spec.build()).collect();
    for sim in &mut sims {
        sim.init(&params);
    }
    let arrivals = inst.arrivals_by_slot();
    let mut member_series = vec![vec![0.0f64; inst.horizon as usize + 1]; n];

    let mut log = RunLog {
        choices: vec![0; inst.horizon as usize + 1],
        ..RunLog::default()
    };
    log.rewards_fed.push(Vec::new()); // slot 0 placeholder

    let mut roster_seq = Vec::new();
    let mut times = Vec::new();
    let mut prev: Option<usize> = None;

    for t in 1..=inst.horizon {
        if let Some(batch) = arrivals.get(&t) {
            for (i, sim) in sims.iter_mut().enumerate() {
                for (job, decision) in batch.iter().zip(sim.on_slot_arrivals(t, batch)) {
                    if let crate::mech::ClairDecision::Accept { slots, .. } = decision {
                        for slot in slots {
                            member_series[i][slot as usize] += job.value;
                        }
                    }
                }
            }
        }
        let choice = learner.choose();
        if prev != Some(choice) {
            if prev.is_none() {
                roster_seq.push(cfg.roster[choice].clone());
            } else {
                roster_seq.push(cfg.roster[choice].clone());
                times.push(t);
                log.events.push(CombinerEvent {
                    requested_at: t,
                    effective_at: t,
                    kind: "switch".into(),
                    arm: choice,
                });
            }
            prev = Some(choice);
        }
        log.choices[t as usize] = choice;
        let rewards: Vec<f64> = (0..n).map(|i| member_series[i][t as usize]).collect();
        learner.feed(&rewards)?;
        log.rewards_fed.push(rewards);
    }

    let plan = SwitchPlan { roster: roster_seq, times };
    plan.validate(inst.horizon)?;
    let composed = compose_chain(&plan);
    let mut chain = composed.build();
    let output = run_clairvoyant(chain.as_mut(), inst, 1)?;

    log.member_series = member_series;
    log.switch_times = plan.times.clone();
    Ok(FtsRun { output, log, plan })
}

/// The bandit reward of the batch `[t_prev, t-1]` closed by a heads at `t`:
/// zero over the sync prefix `[t_prev, min(t_prev + w, t-1)]`, the
/// combiner's observable welfare after it. Returns the per-slot rewards over
/// the batch and their total.
pub fn batch_rewards(
    reward_series: &[f64],
    t_prev: u32,
    t: u32,
    sync_window: u32,
) -> (Vec<f64>, f64) {
    assert!(t_prev <= t, "batches close at or after their opening heads");
    if t_prev >= t {
        return (Vec::new(), 0.0);
    }
    let cutoff = (t_prev + sync_window).min(t - 1);
    let mut per_slot = Vec::with_capacity((t - t_prev) as usize);
    let mut total = 0.0;
    for x in t_prev..t {
        let r = if x <= cutoff {
            0.0
        } else {
            reward_series.get(x as usize).copied().unwrap_or(0.0)
        };
        per_slot.push(r);
        total += r;
    }
    (per_slot, total)
}

/// Result of an `ftbs` run.
#[derive(Debug, Clone)]
pub struct FtbsRun {
    pub alloc: crate::job::Allocation,
    pub series: WelfareSeries,
    pub total: f64,
    pub log: RunLog,
}

/// Run the non-clairvoyant combiner.
pub fn ftbs_run(cfg: &FtbsConfig, inst: &Instance) -> Result<FtbsRun, SchedError> {
    use rand::Rng;
    use rand::SeedableRng;

    let n = cfg.roster.len();
    assert!(n >= 1, "ftbs needs a nonempty roster");
    let params = InstanceParams::of(inst);
    let w = params.bounds.sync_window();
    let gamma = cfg.gamma.unwrap_or_else(|| tuned_gamma(w, inst.horizon, n));
    assert!((0.0..=1.0).contains(&gamma), "gamma must be in [0, 1]");

    let mut bandit = doubling_wrap(Exp3Factory { arms: n }, cfg.learner_seed);
    let mut coin_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.coin_seed);

    let mut current = bandit.choose();
    let mut engine = NcEngine::new(params, cfg.roster[current].base_policy());
    let arrivals = inst.arrivals_by_slot();
    let lengths: std::collections::BTreeMap<u32, u32> =
        inst.jobs().iter().map(|j| (j.id, j.length)).collect();

    let mut log = RunLog {
        choices: vec![0; inst.horizon as usize + 1],
        ..RunLog::default()
    };
    let mut prev_heads = 1u32;

    for t in 1..=inst.horizon {
        // The coin is drawn unconditionally from its own stream: the
        // sequence is a function of (gamma, seed) alone.
        let heads = gamma > 0.0 && coin_rng.random_bool(gamma);
        let mut events = Vec::new();
        if heads {
            let (_, total) = batch_rewards(engine.reward_series(), prev_heads, t, w);
            bandit.feed(current, total);
            log.coin_heads.push(t);
            log.batch_feeds.push(BatchFeed { heads_at: t, arm: current, total });
            let next = bandit.choose();
            if next != current {
                events.push(NcEvent::SwitchTo(cfg.roster[next].base_policy()));
            } else {
                events.push(NcEvent::Restart);
            }
            current = next;
            prev_heads = t;
        }
        log.choices[t as usize] = current;
        let slot_arrivals: Vec<NcReport> = arrivals
            .get(&t)
            .map(|batch| {
                batch
                    .iter()
                    .map(|j| NcReport {
                        id: j.id,
                        arrival: j.arrival,
                        budget: j.deadline,
                        value: j.value,
                    })
                    .collect()
            })
            .unwrap_or_default();
        engine.step(t, events, &slot_arrivals, &|id| lengths.get(&id).copied().unwrap_or(1));
    }

    let (alloc, reward_series, records) = engine.finish();
    log.events = engine_events_to_log(&records, &log.choices);
    log.reward_series = reward_series;
    let series = crate::job::welfare_series(&alloc, inst)?;
    let total = series.total();
    Ok(FtbsRun { alloc, series, total, log })
}

/// Per-mechanism estimate of the random-restarting benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEstimate {
    pub name: String,
    pub mean: f64,
    pub std_err: f64,
    pub samples: u32,
}

/// Monte Carlo estimates of `E[W(restarted A_i)]` for every roster member
/// plus their max, the random-restarting benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_mech: Vec<BenchmarkEstimate>,
    pub opt_bar: f64,
}

/// Estimate the random-restarting benchmark with `n_samples` independent
/// restart coin sequences per mechanism.
pub fn restart_benchmark(
    roster: &[NcSpec],
    gamma: f64,
    inst: &Instance,
    n_samples: u32,
    seed: u64,
) -> Result<BenchmarkReport, SchedError> {
    assert!(n_samples >= 1);
    let mut per_mech = Vec::with_capacity(roster.len());
    for spec in roster.iter() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for s in 0..n_samples {
            // Coin streams are independent across samples but shared across
            // roster members (common random numbers), which tightens the
            // comparison of their means.
            let coin_seed =
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64);
            let wrapped = with_random_restarts(spec.clone(), RestartConfig { gamma, seed: coin_seed });
            let out = run_nonclairvoyant(&wrapped, inst, 1)?;
            sum += out.total;
            sum_sq += out.total * out.total;
        }
        let n = n_samples as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        per_mech.push(BenchmarkEstimate {
            name: spec.name(),
            mean,
            std_err: if n_samples > 1 { (var / n).sqrt() } else { 0.0 },
            samples: n_samples,
        });
    }
    let opt_bar = per_mech.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
    Ok(BenchmarkReport { per_mech, opt_bar })
}

/// Map engine event records into combiner events with arm indices.
fn engine_events_to_log(records: &[NcEventRecord], choices: &[usize]) -> Vec<CombinerEvent> {
    records
        .iter()
        .map(|r| CombinerEvent {
            requested_at: r.requested_at,
            effective_at: r.effective_at,
            kind: if r.kind.starts_with("switch") { "switch".into() } else { "restart".into() },
            arm: choices.get(r.requested_at as usize).copied().unwrap_or(0),
        })
        .collect()
}
