//! Truthful switching constructions and their audit quantities.
//!
//! Clairvoyant switch from `A` to `B` taking effect at slot `s`:
//!
//! 1. Jobs arriving before `s` get exactly `A`'s allocation and prices.
//! 2. The units of `[s, s + d_max - 1]` not used by those jobs are marked
//!    unavailable; jobs arriving at or after `s` whose whole window fits in
//!    that range are declined at price 0.
//! 3. Every remaining job is resolved against a full-stream simulation of
//!    `B`: rejected if `B` rejects it, rejected if its window no longer holds
//!    enough available units, and otherwise given `B`'s units where still
//!    available plus earliest-available replacement units, at `B`'s price.
//!
//! Replacement slots land strictly later than the unavailable units they
//! stand in for, so no job finishes earlier than it would under `B`; that is
//! what keeps the combined mechanism truthful. The welfare loss is bounded
//! by `2 * v_max * d_max * m` per switch.
//!
//! The non-clairvoyant switch and the restart wrapper share one engine
//! behavior: drain the old epoch over a sync window of `l_max + d_max`
//! slots, shift the window's arrivals past its end (preserving each job's
//! latest start slot and the arrival order), then continue from a fresh
//! state.

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::job::{Allocation, Instance, JobType};
use crate::mech::{
    run_nonclairvoyant, ClairDecision, ClairSpec, ClairvoyantMechanism, InstanceParams, NcEngine,
    NcEvent, NcReport, NcRunOutput, NcSpec, StateToken,
};

/// A roster and strictly increasing switch times describing a chain of
/// switches: start on `roster[0]`, hand over to `roster[k]` at `times[k-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub roster: Vec<ClairSpec>,
    pub times: Vec<u32>,
}

impl SwitchPlan {
    pub fn validate(&self, horizon: u32) -> Result<(), SchedError> {
        if self.roster.is_empty() {
            return Err(SchedError::InvalidInstance("switch plan has an empty roster".into()));
        }
        if self.times.len() + 1 != self.roster.len() {
            return Err(SchedError::InvalidInstance(
                "switch plan needs one more roster entry than switch times".into(),
            ));
        }
        let mut prev = 0;
        for &t in &self.times {
            if t <= prev || t > horizon {
                return Err(SchedError::InvalidInstance(
                    "switch times must be strictly increasing within [1, horizon]".into(),
                ));
            }
            prev = t;
        }
        Ok(())
    }
}

/// One replacement performed in step 3: job `job` had `B`-slot `replaced`
/// unavailable and received `replacement` instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementRecord {
    pub job: u32,
    pub replaced: u32,
    pub replacement: u32,
}

/// Audit trail of a clairvoyant switch run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchAudit {
    pub replacements: Vec<ReplacementRecord>,
}

/// The clairvoyant switch mechanism `C`. Prompt and order respecting
/// whenever `A` and `B` are, so chains compose.
pub struct SwitchClairvoyant {
    a: Box<dyn ClairvoyantMechanism>,
    b: Box<dyn ClairvoyantMechanism>,
    switch_slot: u32,
    horizon: u32,
    machines: u32,
    d_max: u32,
    /// Units taken in `C`'s schedule, per slot.
    occupancy: Vec<u32>,
    /// Per-slot capacity; inside the unavailable window it is frozen to the
    /// units the pre-switch jobs actually use.
    capacity: Vec<u32>,
    frozen: bool,
    audit: SwitchAudit,
}

impl SwitchClairvoyant {
    pub fn new(
        a: Box<dyn ClairvoyantMechanism>,
        b: Box<dyn ClairvoyantMechanism>,
        switch_slot: u32,
    ) -> Self {
        Self {
            a,
            b,
            switch_slot,
            horizon: 0,
            machines: 0,
            d_max: 0,
            occupancy: Vec::new(),
            capacity: Vec::new(),
            frozen: false,
            audit: SwitchAudit::default(),
        }
    }

    pub fn audit(&self) -> &SwitchAudit {
        &self.audit
    }

    /// Last slot of the unavailable window `[s, s + d_max - 1]`.
    fn window_end(&self) -> u32 {
        self.switch_slot + self.d_max - 1
    }

    /// Freeze window capacities to what the pre-switch jobs occupy. Called
    /// when the first job with `arrival >= s` is processed; all earlier
    /// arrivals have been decided by then.
    fn freeze(&mut self) {
        if self.frozen {
            return;
        }
        let end = self.window_end().min(self.horizon);
        for t in self.switch_slot..=end {
            self.capacity[t as usize] = self.occupancy[t as usize];
        }
        self.frozen = true;
    }

    fn available(&self, t: u32) -> u32 {
        self.capacity[t as usize].saturating_sub(self.occupancy[t as usize])
    }

    fn take_unit(&mut self, t: u32) {
        self.occupancy[t as usize] += 1;
    }

    fn decide(
        &mut self,
        job: &JobType,
        a_decision: ClairDecision,
        b_decision: ClairDecision,
    ) -> ClairDecision {
        if job.arrival < self.switch_slot {
            // Step 1: mirror A. A's units become part of C's schedule.
            if let ClairDecision::Accept { slots, .. } = &a_decision {
                for &t in slots {
                    self.take_unit(t);
                }
            }
            return a_decision;
        }
        self.freeze();
        if job.deadline <= self.window_end() {
            // Step 2: the whole window is unavailable; decline at price 0.
            return ClairDecision::reject();
        }
        // Step 3a: follow B's admission.
        let ClairDecision::Accept { slots: b_slots, payment } = b_decision else {
            return ClairDecision::reject();
        };
        // Step 3b: count distinct available slots in the job's window.
        let hi = job.deadline.min(self.horizon);
        let open: u32 = (job.arrival..=hi).filter(|&t| self.available(t) > 0).count() as u32;
        if open < job.length {
            return ClairDecision::reject();
        }
        // Step 3c: keep B's still-available slots, then replace the rest in
        // chronological order with the earliest available slots.
        let mut mine: Vec<u32> = Vec::with_capacity(b_slots.len());
        let mut displaced: Vec<u32> = Vec::new();
        let mut sorted = b_slots;
        sorted.sort_unstable();
        for t in sorted {
            if self.available(t) > 0 && !mine.contains(&t) {
                self.take_unit(t);
                mine.push(t);
            } else {
                displaced.push(t);
            }
        }
        for replaced in displaced {
            let replacement = (job.arrival..=hi)
                .find(|&t| self.available(t) > 0 && !mine.contains(&t))
                .expect("step 3b guarantees enough available slots in the window");
            self.take_unit(replacement);
            mine.push(replacement);
            self.audit.replacements.push(ReplacementRecord {
                job: job.id,
                replaced,
                replacement,
            });
        }
        mine.sort_unstable();
        ClairDecision::Accept { slots: mine, payment }
    }
}

impl ClairvoyantMechanism for SwitchClairvoyant {
    fn kind(&self) -> &'static str {
        "switch-clairvoyant"
    }

    fn name(&self) -> String {
        format!("switch({}->{}@{})", self.a.name(), self.b.name(), self.switch_slot)
    }

    fn init(&mut self, params: &InstanceParams) {
        self.a.init(params);
        self.b.init(params);
        self.horizon = params.horizon;
        self.machines = params.machines;
        self.d_max = params.bounds.d_max;
        self.occupancy = vec![0; params.horizon as usize + 1];
        self.capacity = vec![params.machines; params.horizon as usize + 1];
        self.frozen = false;
        self.audit = SwitchAudit::default();
    }

    fn on_slot_arrivals(&mut self, t: u32, jobs: &[JobType]) -> Vec<ClairDecision> {
        // Both inner mechanisms see the full stream.
        let a_decisions = self.a.on_slot_arrivals(t, jobs);
        let b_decisions = self.b.on_slot_arrivals(t, jobs);
        jobs.iter()
            .zip(a_decisions.into_iter().zip(b_decisions))
            .map(|(job, (a_dec, b_dec))| self.decide(job, a_dec, b_dec))
            .collect()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "a": { "kind": self.a.kind(), "state": self.a.state_json() },
            "b": { "kind": self.b.kind(), "state": self.b.state_json() },
            "switch_slot": self.switch_slot,
            "horizon": self.horizon,
            "machines": self.machines,
            "d_max": self.d_max,
            "occupancy": self.occupancy,
            "capacity": self.capacity,
            "frozen": self.frozen,
            "audit": self.audit,
        })
    }

    fn load_state_json(&mut self, state: &serde_json::Value) -> Result<(), SchedError> {
        let bad = |m: &str| SchedError::BadState(m.to_string());
        let get = |k: &str| state.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        self.a.load_state_json(get("a")?.get("state").ok_or_else(|| bad("missing a.state"))?)?;
        self.b.load_state_json(get("b")?.get("state").ok_or_else(|| bad("missing b.state"))?)?;
        self.switch_slot = serde_json::from_value(get("switch_slot")?.clone())
            .map_err(|e| bad(&e.to_string()))?;
        self.horizon =
            serde_json::from_value(get("horizon")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.machines =
            serde_json::from_value(get("machines")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.d_max =
            serde_json::from_value(get("d_max")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.occupancy =
            serde_json::from_value(get("occupancy")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.capacity =
            serde_json::from_value(get("capacity")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.frozen =
            serde_json::from_value(get("frozen")?.clone()).map_err(|e| bad(&e.to_string()))?;
        self.audit =
            serde_json::from_value(get("audit")?.clone()).map_err(|e| bad(&e.to_string()))?;
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn ClairvoyantMechanism> {
        Box::new(SwitchClairvoyant {
            a: self.a.clone_box(),
            b: self.b.clone_box(),
            switch_slot: self.switch_slot,
            horizon: self.horizon,
            machines: self.machines,
            d_max: self.d_max,
            occupancy: self.occupancy.clone(),
            capacity: self.capacity.clone(),
            frozen: self.frozen,
            audit: self.audit.clone(),
        })
    }
}

/// Build the switch spec `C` handing over from `a` to `b` at slot `s`.
pub fn switch_clairvoyant(a: ClairSpec, b: ClairSpec, s: u32) -> ClairSpec {
    ClairSpec::Switch { a: Box::new(a), b: Box::new(b), at: s }
}

/// Left-fold a switch plan into a single composed mechanism spec.
pub fn compose_chain(plan: &SwitchPlan) -> ClairSpec {
    let mut spec = plan.roster[0].clone();
    for (next, &at) in plan.roster[1..].iter().zip(&plan.times) {
        spec = switch_clairvoyant(spec, next.clone(), at);
    }
    spec
}

/// Free-slot audit of a completed clairvoyant switch: slots at or past
/// `switch_slot + d_max` where `C` schedules fewer units than `B` does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeSlotAudit {
    /// Earliest free slot, if any.
    pub first_free: Option<u32>,
    /// Total number of free slots.
    pub total: u32,
    /// Slots with a positive free count.
    pub support: Vec<u32>,
}

/// Compare `C`'s and `B`'s allocations slot by slot past the unavailable
/// window and report the free-slot quantities used by the switch audits.
pub fn audit_free_slots(
    c_alloc: &Allocation,
    b_alloc: &Allocation,
    switch_slot: u32,
    d_max: u32,
) -> FreeSlotAudit {
    let c_occ = c_alloc.occupancy();
    let b_occ = b_alloc.occupancy();
    let from = switch_slot + d_max;
    let mut total = 0;
    let mut support = Vec::new();
    for t in from..=c_alloc.horizon {
        let b = b_occ.get(t as usize).copied().unwrap_or(0);
        let c = c_occ.get(t as usize).copied().unwrap_or(0);
        if b > c {
            total += b - c;
            support.push(t);
        }
    }
    FreeSlotAudit { first_free: support.first().copied(), total, support }
}

/// Restart `inner` at the given slots (see the module docs for the drain /
/// shift / reinitialize behavior).
pub fn restart(inner: NcSpec, times: Vec<u32>) -> NcSpec {
    NcSpec::ScriptedRestarts { inner: Box::new(inner), times }
}

/// Restart configuration for the random-restart wrapper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartConfig {
    /// Per-slot restart probability.
    pub gamma: f64,
    /// Seed of the coin stream. Coins depend on nothing else, in particular
    /// never on job reports.
    pub seed: u64,
}

/// Wrap a mechanism with independent per-slot random restarts of probability
/// `gamma`. A coin drawn inside an active sync window queues its restart for
/// the window's end.
pub fn with_random_restarts(inner: NcSpec, cfg: RestartConfig) -> NcSpec {
    NcSpec::RandomRestarts { inner: Box::new(inner), gamma: cfg.gamma, seed: cfg.seed }
}

/// Truthful non-clairvoyant switch from `a` to `b` at slot `s`: `a` drains
/// over the sync window `[s, s + l_max + d_max]` while arrivals are shifted
/// past it exactly as in a restart, then a fresh `b` takes over.
pub fn switch_nonclairvoyant(a: NcSpec, b: NcSpec, s: u32) -> NcSpec {
    NcSpec::Switch { a: Box::new(a), b: Box::new(b), at: s }
}

/// Step a non-clairvoyant spec through slots `1..=upto` and return the
/// engine's structural state token. Used to verify that a switched mechanism
/// and the fresh-restarted target agree at the sync point.
pub fn nc_state_at(spec: &NcSpec, inst: &Instance, upto: u32) -> Result<StateToken, SchedError> {
    use rand::Rng;
    use rand::SeedableRng;

    let params = InstanceParams::of(inst);
    let mut engine = NcEngine::new(params, spec.base_policy());
    let mut script: std::collections::VecDeque<(u32, NcEvent)> = spec.scripted_events().into();
    let mut coin = spec
        .random_restarts()
        .map(|(gamma, seed)| (gamma, rand_chacha::ChaCha8Rng::seed_from_u64(seed)));
    let arrivals = inst.arrivals_by_slot();
    let lengths: std::collections::BTreeMap<u32, u32> =
        inst.jobs().iter().map(|j| (j.id, j.length)).collect();
    for t in 1..=upto.min(inst.horizon) {
        let mut events = Vec::new();
        while script.front().is_some_and(|&(at, _)| at == t) {
            events.push(script.pop_front().unwrap().1);
        }
        if let Some((gamma, rng)) = &mut coin {
            if rng.random_bool(*gamma) {
                events.push(NcEvent::Restart);
            }
        }
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
    Ok(engine.state_token())
}

/// Convenience: run a non-clairvoyant switch and the restarted target side
/// by side.
pub fn run_nc_switch_pair(
    a: &NcSpec,
    b: &NcSpec,
    s: u32,
    inst: &Instance,
) -> Result<(NcRunOutput, NcRunOutput), SchedError> {
    let switched = switch_nonclairvoyant(a.clone(), b.clone(), s);
    let restarted = restart(b.clone(), vec![s]);
    Ok((run_nonclairvoyant(&switched, inst, 1)?, run_nonclairvoyant(&restarted, inst, 1)?))
}

/// A clairvoyant switch run together with its audit and the standalone runs
/// of both inner mechanisms on the same instance.
pub struct SwitchRun {
    pub c: crate::mech::RunOutput,
    pub audit: SwitchAudit,
    pub a: crate::mech::RunOutput,
    pub b: crate::mech::RunOutput,
}

/// Run the clairvoyant switch `C = switch(a, b, s)` and both inner
/// mechanisms standalone, returning `C`'s replacement audit.
pub fn run_switch(
    a: &ClairSpec,
    b: &ClairSpec,
    s: u32,
    inst: &Instance,
) -> Result<SwitchRun, SchedError> {
    use crate::mech::run_clairvoyant;
    let mut c_mech = SwitchClairvoyant::new(a.build(), b.build(), s);
    let c = run_clairvoyant(&mut c_mech, inst, 1)?;
    let audit = c_mech.audit().clone();
    let a_out = run_clairvoyant(a.build().as_mut(), inst, 1)?;
    let b_out = run_clairvoyant(b.build().as_mut(), inst, 1)?;
    Ok(SwitchRun { c, audit, a: a_out, b: b_out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_random_clairvoyant, gen_random_nonclairvoyant};
    use crate::job::Bounds;
    use crate::mech::run_clairvoyant;
    use crate::VALUE_EPS;
    use rand::Rng;
    use rand::SeedableRng;

    fn switch_corpus_case(seed: u64) -> (Instance, ClairSpec, ClairSpec, u32) {
        let inst = gen_random_clairvoyant(seed, 40, 2, 12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let a = ClairSpec::ppf([1.0, 2.0][rng.random_range(0..2)]);
        let b = ClairSpec::ppf([1.0, 2.0][rng.random_range(0..2)]);
        let s = rng.random_range(2..=inst.horizon.max(3) - 1);
        (inst, a, b, s)
    }

    #[test]
    fn no_post_switch_arrivals_means_c_equals_a() {
        let inst = Instance::new(
            vec![
                JobType::new(0, 1, 3, 2, 2.0),
                JobType::new(1, 2, 4, 1, 1.0),
                JobType::new(2, 3, 5, 2, 3.0),
            ],
            20,
            1,
            Bounds { v_max: 4.0, d_max: 3, l_max: 2 },
        );
        let run = run_switch(&ClairSpec::ppf(1.0), &ClairSpec::ppf(2.0), 10, &inst).unwrap();
        for t in 1..=inst.horizon {
            assert_eq!(run.c.series.get(t), run.a.series.get(t), "slot {t}");
        }
    }

    #[test]
    fn window_deadline_job_is_declined_at_price_zero() {
        // d_max = 3, switch at 5: the window is [5, 7]. A job arriving at 5
        // with deadline 7 is declined and pays nothing even though B would
        // happily take it.
        let inst = Instance::new(
            vec![JobType::new(0, 5, 7, 1, 4.0)],
            20,
            1,
            Bounds { v_max: 4.0, d_max: 3, l_max: 2 },
        );
        let run = run_switch(&ClairSpec::ppf(1.0), &ClairSpec::ppf(1.0), 5, &inst).unwrap();
        let outcome = run.c.alloc.outcome(0);
        assert!(outcome.slots.is_empty());
        assert_eq!(outcome.payment, 0.0);
        assert!(!run.b.alloc.outcome(0).slots.is_empty());
    }

    #[test]
    fn switch_welfare_bound_holds_on_random_corpus() {
        for seed in 0..80 {
            let (inst, a, b, s) = switch_corpus_case(seed);
            let run = run_switch(&a, &b, s, &inst).unwrap();
            let slack = 2.0
                * inst.bounds.v_max
                * inst.bounds.d_max as f64
                * inst.machines as f64;
            let target =
                run.a.series.sum_range(1, s - 1) + run.b.series.sum_range(s, inst.horizon) - slack;
            assert!(
                run.c.total >= target - VALUE_EPS,
                "seed {seed}: W(C)={} < target {target}",
                run.c.total
            );
        }
    }

    #[test]
    fn replacement_slots_are_strictly_later() {
        for seed in 0..80 {
            let (inst, a, b, s) = switch_corpus_case(seed);
            let run = run_switch(&a, &b, s, &inst).unwrap();
            for r in &run.audit.replacements {
                assert!(
                    r.replacement > r.replaced,
                    "seed {seed}: job {} replaced slot {} with earlier slot {}",
                    r.job,
                    r.replaced,
                    r.replacement
                );
            }
        }
    }

    #[test]
    fn free_slot_count_and_support_bounds() {
        for seed in 0..80 {
            let (inst, a, b, s) = switch_corpus_case(seed);
            let run = run_switch(&a, &b, s, &inst).unwrap();
            let audit = audit_free_slots(&run.c.alloc, &run.b.alloc, s, inst.bounds.d_max);
            let cap = inst.machines * inst.bounds.d_max;
            assert!(audit.total <= cap, "seed {seed}: {} free slots > {cap}", audit.total);
            if let Some(first) = audit.first_free {
                assert!(
                    audit.support.iter().all(|&t| t >= first && t <= first + inst.bounds.d_max),
                    "seed {seed}: support {:?} outside [{first}, {}]",
                    audit.support,
                    first + inst.bounds.d_max
                );
            }
        }
    }

    #[test]
    fn no_served_job_finishes_earlier_than_in_b() {
        for seed in 0..80 {
            let (inst, a, b, s) = switch_corpus_case(seed);
            let run = run_switch(&a, &b, s, &inst).unwrap();
            let served_c = crate::job::served_jobs(&run.c.alloc, &inst).unwrap();
            for j in inst.jobs() {
                if j.arrival >= s && served_c.contains(&j.id) {
                    let fin_c = run.c.alloc.outcome(j.id).finish();
                    let fin_b = run.b.alloc.outcome(j.id).finish();
                    if let (Some(fc), Some(fb)) = (fin_c, fin_b) {
                        assert!(fc >= fb, "seed {seed}: job {} early ({fc} < {fb})", j.id);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_mechanisms_after_window_have_no_free_slots() {
        // With no pre-switch jobs at all, C tracks B exactly outside the
        // unavailable window.
        let inst = Instance::new(
            vec![JobType::new(0, 12, 16, 2, 2.0), JobType::new(1, 14, 18, 2, 1.0)],
            24,
            1,
            Bounds { v_max: 4.0, d_max: 5, l_max: 2 },
        );
        let run = run_switch(&ClairSpec::ppf(1.0), &ClairSpec::ppf(1.0), 3, &inst).unwrap();
        let audit = audit_free_slots(&run.c.alloc, &run.b.alloc, 3, inst.bounds.d_max);
        assert_eq!(audit.total, 0);
    }

    #[test]
    fn chain_of_zero_and_one_switches() {
        let inst = gen_random_clairvoyant(5, 30, 2, 10);
        let a = ClairSpec::ppf(1.0);
        let b = ClairSpec::ppf(2.0);
        let plan0 = SwitchPlan { roster: vec![a.clone()], times: vec![] };
        let composed0 = compose_chain(&plan0);
        let w0 = run_clairvoyant(composed0.build().as_mut(), &inst, 1).unwrap();
        let wa = run_clairvoyant(a.build().as_mut(), &inst, 1).unwrap();
        assert_eq!(w0.alloc, wa.alloc);

        let plan1 = SwitchPlan { roster: vec![a.clone(), b.clone()], times: vec![9] };
        let composed1 = compose_chain(&plan1);
        let w1 = run_clairvoyant(composed1.build().as_mut(), &inst, 1).unwrap();
        let direct = run_switch(&a, &b, 9, &inst).unwrap();
        assert_eq!(w1.alloc, direct.c.alloc);
    }

    #[test]
    fn three_switch_chain_meets_composed_bound() {
        for seed in 0..30 {
            let inst = gen_random_clairvoyant(seed + 500, 48, 2, 14);
            let roster = vec![
                ClairSpec::ppf(1.0),
                ClairSpec::ppf(2.0),
                ClairSpec::ppf(1.0),
                ClairSpec::ppf(0.5),
            ];
            let h = inst.horizon;
            let times = vec![h / 4, h / 2, 3 * h / 4];
            let mut times: Vec<u32> = times.into_iter().map(|t| t.max(2)).collect();
            times.dedup();
            if times.len() < 3 || times.windows(2).any(|w| w[0] >= w[1]) {
                continue;
            }
            let plan = SwitchPlan { roster: roster.clone(), times: times.clone() };
            let composed = compose_chain(&plan);
            let chain = run_clairvoyant(composed.build().as_mut(), &inst, 1).unwrap();
            // Segment welfare of the intended mechanisms minus the composed slack.
            let mut target = 0.0;
            let mut boundaries = vec![1u32];
            boundaries.extend(&times);
            boundaries.push(inst.horizon + 1);
            for (i, spec) in roster.iter().enumerate() {
                let out = run_clairvoyant(spec.build().as_mut(), &inst, 1).unwrap();
                target += out.series.sum_range(boundaries[i], boundaries[i + 1] - 1);
            }
            let slack = 2.0
                * times.len() as f64
                * inst.bounds.v_max
                * inst.machines as f64
                * inst.bounds.d_max as f64;
            assert!(
                chain.total >= target - slack - VALUE_EPS,
                "seed {seed}: chain {} < {target} - {slack}",
                chain.total
            );
        }
    }

    #[test]
    fn restart_shifts_window_arrivals() {
        // w = l_max + d_max = 7: a restart at 4 buffers arrivals in [4, 11]
        // and releases them at 12 with their latest start slot preserved.
        let inst = Instance::new(
            vec![JobType::new(0, 6, 4, 1, 2.0)],
            20,
            1,
            Bounds { v_max: 4.0, d_max: 4, l_max: 3 },
        );
        let wrapped = restart(NcSpec::ppf(1.0), vec![4]);
        let out = run_nonclairvoyant(&wrapped, &inst, 1).unwrap();
        // Window is [4, 11] (w = 7): the job's latest start 6 + 4 = 10 < 12,
        // so it is rejected.
        assert!(out.alloc.outcome(0).slots.is_empty());

        // Same shape with a budget that survives the shift.
        let inst2 = Instance::new(
            vec![JobType::new(0, 6, 4, 1, 2.0)],
            30,
            1,
            Bounds { v_max: 4.0, d_max: 4, l_max: 1 },
        );
        // w = 5, window [4, 9], release at 10; latest start 10 >= 10: runs at 10.
        let wrapped2 = restart(NcSpec::ppf(1.0), vec![4]);
        let out2 = run_nonclairvoyant(&wrapped2, &inst2, 1).unwrap();
        assert_eq!(out2.alloc.outcome(0).start(), Some(10));
    }

    #[test]
    fn job_running_before_restart_completes_inside_window() {
        let inst = Instance::new(
            vec![JobType::new(0, 3, 0, 3, 2.0)],
            20,
            1,
            Bounds { v_max: 4.0, d_max: 2, l_max: 3 },
        );
        let wrapped = restart(NcSpec::ppf(1.0), vec![4]);
        let out = run_nonclairvoyant(&wrapped, &inst, 1).unwrap();
        assert_eq!(out.alloc.outcome(0).slots.len(), 3);
        assert_eq!(out.total, 6.0);
    }

    #[test]
    fn zero_probability_restarts_change_nothing() {
        for seed in 0..20 {
            let inst = gen_random_nonclairvoyant(seed, 30, 2, 10);
            let base = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
            let wrapped = with_random_restarts(
                NcSpec::ppf(1.0),
                RestartConfig { gamma: 0.0, seed: seed ^ 7 },
            );
            let out = run_nonclairvoyant(&wrapped, &inst, 1).unwrap();
            assert_eq!(base.alloc, out.alloc);
        }
    }

    #[test]
    fn certain_restart_at_one_reinitializes_after_window() {
        let inst = Instance::new(
            vec![JobType::new(0, 1, 2, 1, 2.0), JobType::new(1, 9, 2, 1, 2.0)],
            20,
            1,
            Bounds { v_max: 4.0, d_max: 2, l_max: 3 },
        );
        // w = 5; a scripted restart at 1 buffers job 0 (latest start 3 < 7:
        // rejected) and lets job 1 (arriving past the window) run normally.
        let wrapped = restart(NcSpec::ppf(1.0), vec![1]);
        let out = run_nonclairvoyant(&wrapped, &inst, 1).unwrap();
        assert!(out.alloc.outcome(0).slots.is_empty());
        assert_eq!(out.alloc.outcome(1).start(), Some(9));
    }

    #[test]
    fn nc_switch_state_matches_restarted_target() {
        for seed in 0..40 {
            let inst = gen_random_nonclairvoyant(seed + 900, 36, 2, 12);
            let w = inst.bounds.sync_window();
            let s = 6u32.min(inst.horizon.saturating_sub(w + 2)).max(2);
            if s + w >= inst.horizon {
                continue;
            }
            let a = NcSpec::ppf(2.0);
            let b = NcSpec::ppf(1.0);
            let switched = switch_nonclairvoyant(a.clone(), b.clone(), s);
            let restarted = restart(b.clone(), vec![s]);
            let at = s - 1 + w;
            let tok_c = nc_state_at(&switched, &inst, at).unwrap();
            let tok_b = nc_state_at(&restarted, &inst, at).unwrap();
            assert_eq!(
                tok_c.bytes(),
                tok_b.bytes(),
                "seed {seed}: states differ at slot {at}"
            );
        }
    }

    #[test]
    fn nc_switch_welfare_decomposes_into_restarted_halves() {
        for seed in 0..40 {
            let inst = gen_random_nonclairvoyant(seed + 1300, 36, 2, 12);
            let w = inst.bounds.sync_window();
            if inst.horizon < w + 8 {
                continue;
            }
            let s = 5u32;
            let a = NcSpec::ppf(1.0);
            let b = NcSpec::ppf(2.0);
            let (c_run, b_restarted) = run_nc_switch_pair(&a, &b, s, &inst).unwrap();
            let a_restarted =
                run_nonclairvoyant(&restart(a.clone(), vec![s]), &inst, 1).unwrap();
            for t in 1..s + w {
                assert!(
                    (c_run.series.get(t) - a_restarted.series.get(t)).abs() < VALUE_EPS,
                    "seed {seed}: prefix slot {t}"
                );
            }
            for t in s + w..=inst.horizon {
                assert!(
                    (c_run.series.get(t) - b_restarted.series.get(t)).abs() < VALUE_EPS,
                    "seed {seed}: suffix slot {t}"
                );
            }
        }
    }

    #[test]
    fn nc_switch_to_self_equals_restart() {
        for seed in 0..20 {
            let inst = gen_random_nonclairvoyant(seed + 2100, 30, 2, 10);
            let s = 4u32;
            let b = NcSpec::ppf(1.0);
            let (c_run, restarted) = run_nc_switch_pair(&b, &b, s, &inst).unwrap();
            assert_eq!(c_run.alloc, restarted.alloc, "seed {seed}");
        }
    }
}
