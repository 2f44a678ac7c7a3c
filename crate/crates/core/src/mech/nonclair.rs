//! Non-clairvoyant mechanisms: admission policies over a queue-and-lanes
//! engine with restart/switch sync windows.
//!
//! Lengths are hidden from policies; the engine learns a job's length only
//! when the lane running it finishes. A started job is never preempted.
//! Deadlines are wait budgets: a job that has waited more than `deadline`
//! slots is deleted from the queue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::job::{Allocation, Instance, JobOutcome, Setting, WelfareSeries};
use crate::mech::{InstanceParams, StateToken};

/// What a non-clairvoyant mechanism sees of a job: everything but the length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcReport {
    pub id: u32,
    /// Effective arrival slot (shifted past sync windows when applicable).
    pub arrival: u32,
    /// Effective wait budget; `arrival + budget` is the latest start slot.
    pub budget: u32,
    pub value: f64,
}

impl NcReport {
    pub fn latest_start(&self) -> u32 {
        self.arrival + self.budget
    }
}

/// A job admitted by a policy and waiting to start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedJob {
    pub report: NcReport,
    /// Per-unit price quoted at admission; charged per completed unit.
    pub unit_price: f64,
}

/// Admission and queue discipline of a non-clairvoyant mechanism. The engine
/// owns the lanes and the clock; the policy owns the waiting queue.
pub trait NcPolicy {
    fn kind(&self) -> &'static str;

    fn name(&self) -> String;

    /// A pristine policy with the same parameters (used by restarts).
    fn fresh(&self) -> Box<dyn NcPolicy>;

    fn clone_box(&self) -> Box<dyn NcPolicy>;

    /// Admit or reject a job arriving at slot `t`. Admitted jobs join the
    /// policy's queue.
    fn on_arrival(&mut self, t: u32, report: &NcReport) -> bool;

    /// Remove queued jobs whose wait budget is exhausted at slot `t`;
    /// returns their ids.
    fn expire(&mut self, t: u32) -> Vec<u32>;

    /// Next queued job to start at slot `t`, if any.
    fn pop_next(&mut self, t: u32) -> Option<QueuedJob>;

    fn queue_is_empty(&self) -> bool;

    /// Total payment for a job of revealed length `length` completing at
    /// slot `t`. The default charges the admission quote per unit.
    fn completion_payment(&self, job: &QueuedJob, length: u32, _t: u32) -> f64 {
        job.unit_price * length as f64
    }

    fn state_json(&self) -> serde_json::Value;
}

impl Clone for Box<dyn NcPolicy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// FIFO with a flat posted price: jobs below the price are rejected, the
/// rest start in arrival order as lanes free up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpfNonClairvoyant {
    price: f64,
    queue: VecDeque<QueuedJob>,
}

impl PpfNonClairvoyant {
    pub fn new(price: f64) -> Self {
        Self { price, queue: VecDeque::new() }
    }
}

impl NcPolicy for PpfNonClairvoyant {
    fn kind(&self) -> &'static str {
        "ppf-nonclairvoyant"
    }

    fn name(&self) -> String {
        format!("ppf-nc:{}", self.price)
    }

    fn fresh(&self) -> Box<dyn NcPolicy> {
        Box::new(PpfNonClairvoyant::new(self.price))
    }

    fn clone_box(&self) -> Box<dyn NcPolicy> {
        Box::new(self.clone())
    }

    fn on_arrival(&mut self, _t: u32, report: &NcReport) -> bool {
        if report.value < self.price {
            return false;
        }
        self.queue.push_back(QueuedJob { report: *report, unit_price: self.price });
        true
    }

    fn expire(&mut self, t: u32) -> Vec<u32> {
        let mut expired = Vec::new();
        self.queue.retain(|q| {
            if t > q.report.latest_start() {
                expired.push(q.report.id);
                false
            } else {
                true
            }
        });
        expired
    }

    fn pop_next(&mut self, t: u32) -> Option<QueuedJob> {
        match self.queue.front() {
            Some(q) if t <= q.report.latest_start() => self.queue.pop_front(),
            _ => None,
        }
    }

    fn queue_is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ppf-nc state serializes")
    }
}

/// FIFO whose posted price changes at fixed slots. Used to model an online
/// algorithm that flips between price levels mid-stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteppedPriceFifo {
    /// `(from_slot, price)` steps, sorted; the last step at or before the
    /// arrival slot applies.
    steps: Vec<(u32, f64)>,
    queue: VecDeque<QueuedJob>,
}

impl SteppedPriceFifo {
    pub fn new(mut steps: Vec<(u32, f64)>) -> Self {
        steps.sort_by_key(|&(t, _)| t);
        Self { steps, queue: VecDeque::new() }
    }

    fn price_at(&self, t: u32) -> f64 {
        self.steps
            .iter()
            .take_while(|&&(from, _)| from <= t)
            .last()
            .map(|&(_, p)| p)
            .unwrap_or(f64::INFINITY)
    }
}

impl NcPolicy for SteppedPriceFifo {
    fn kind(&self) -> &'static str {
        "stepped-price-fifo"
    }

    fn name(&self) -> String {
        format!("stepped-ppf:{:?}", self.steps)
    }

    fn fresh(&self) -> Box<dyn NcPolicy> {
        Box::new(SteppedPriceFifo::new(self.steps.clone()))
    }

    fn clone_box(&self) -> Box<dyn NcPolicy> {
        Box::new(self.clone())
    }

    fn on_arrival(&mut self, t: u32, report: &NcReport) -> bool {
        let price = self.price_at(t);
        if report.value < price {
            return false;
        }
        self.queue.push_back(QueuedJob { report: *report, unit_price: price });
        true
    }

    fn expire(&mut self, t: u32) -> Vec<u32> {
        let mut expired = Vec::new();
        self.queue.retain(|q| {
            if t > q.report.latest_start() {
                expired.push(q.report.id);
                false
            } else {
                true
            }
        });
        expired
    }

    fn pop_next(&mut self, t: u32) -> Option<QueuedJob> {
        match self.queue.front() {
            Some(q) if t <= q.report.latest_start() => self.queue.pop_front(),
            _ => None,
        }
    }

    fn queue_is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("stepped-ppf state serializes")
    }
}

/// Rebuild a built-in policy from its `{kind, state}` snapshot.
fn policy_from_state(v: &serde_json::Value) -> Result<Box<dyn NcPolicy>, SchedError> {
    let kind = v
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| SchedError::BadState("missing policy.kind".into()))?;
    let state = v
        .get("state")
        .ok_or_else(|| SchedError::BadState("missing policy.state".into()))?
        .clone();
    let bad = |e: serde_json::Error| SchedError::BadState(e.to_string());
    match kind {
        "ppf-nonclairvoyant" => {
            Ok(Box::new(serde_json::from_value::<PpfNonClairvoyant>(state).map_err(bad)?))
        }
        "stepped-price-fifo" => {
            Ok(Box::new(serde_json::from_value::<SteppedPriceFifo>(state).map_err(bad)?))
        }
        other => Err(SchedError::KindMismatch {
            expected: "a built-in policy kind".into(),
            got: other.into(),
        }),
    }
}

/// An engine-level event: reinitialize the current policy, or hand over to a
/// different one. Both drain the old epoch over a sync window of
/// `l_max + d_max` slots.
pub enum NcEvent {
    Restart,
    SwitchTo(Box<dyn NcPolicy>),
}

impl NcEvent {
    fn label(&self) -> String {
        match self {
            NcEvent::Restart => "restart".to_string(),
            NcEvent::SwitchTo(p) => format!("switch:{}", p.name()),
        }
    }
}

/// Log record for a restart or switch, with the slot it was requested at and
/// the slot its sync window actually opened (later when serialized behind an
/// active window; 0 if still queued when the run ended).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcEventRecord {
    pub requested_at: u32,
    pub effective_at: u32,
    pub kind: String,
}

struct RunningJob {
    id: u32,
    value: f64,
    length: u32,
    remaining: u32,
    queued: QueuedJob,
    slots: Vec<(u32, u32)>,
}

struct SyncWindow {
    opened_at: u32,
    end: u32,
    buffer: Vec<NcReport>,
    /// Pristine policy to install once the old epoch drains; `None` after
    /// installation.
    replacement: Option<Box<dyn NcPolicy>>,
}

struct PendingEvent {
    /// Index into the engine's event log, filled in when the window opens.
    record: usize,
    event: NcEvent,
}

/// The non-clairvoyant execution engine: lanes, clock, sync windows, and all
/// run bookkeeping. Policies plug into it; restarts and switches are events
/// scheduled on it.
pub struct NcEngine {
    params: InstanceParams,
    window_len: u32,
    t_next: u32,
    lanes: Vec<Option<RunningJob>>,
    policy: Box<dyn NcPolicy>,
    window: Option<SyncWindow>,
    deferred: VecDeque<PendingEvent>,
    alloc: Allocation,
    /// Value processed per slot by admitted jobs, counted as it happens.
    /// Differs from the served-jobs welfare series only for jobs truncated
    /// by the end of the horizon.
    reward_series: Vec<f64>,
    events: Vec<NcEventRecord>,
}

impl NcEngine {
    pub fn new(params: InstanceParams, policy: Box<dyn NcPolicy>) -> Self {
        let horizon = params.horizon;
        let machines = params.machines;
        Self {
            params,
            window_len: params.bounds.sync_window(),
            t_next: 1,
            lanes: (0..machines).map(|_| None).collect(),
            policy,
            window: None,
            deferred: VecDeque::new(),
            alloc: Allocation::new(Setting::NonClairvoyant, horizon, machines),
            reward_series: vec![0.0; horizon as usize + 1],
            events: Vec::new(),
        }
    }

    pub fn params(&self) -> &InstanceParams {
        &self.params
    }

    pub fn reward_series(&self) -> &[f64] {
        &self.reward_series
    }

    pub fn events(&self) -> &[NcEventRecord] {
        &self.events
    }

    fn open_window(&mut self, t: u32, pending: PendingEvent) {
        let replacement = match pending.event {
            NcEvent::Restart => self.policy.fresh(),
            NcEvent::SwitchTo(p) => p,
        };
        self.events[pending.record].effective_at = t;
        self.window = Some(SyncWindow {
            opened_at: t,
            end: t + self.window_len,
            buffer: Vec::new(),
            replacement: Some(replacement),
        });
    }

    /// Advance one slot. `events` are restart/switch requests decided at `t`
    /// (deferred to the end of any active window); `arrivals` are the jobs
    /// whose reported arrival is `t`, in order-key order; `true_length`
    /// reveals a job's hidden length the moment a lane starts it.
    pub fn step(
        &mut self,
        t: u32,
        events: Vec<NcEvent>,
        arrivals: &[NcReport],
        true_length: &dyn Fn(u32) -> u32,
    ) {
        debug_assert_eq!(t, self.t_next, "engine stepped out of order");

        // Close an elapsed window and release its buffered jobs.
        let mut released: Vec<NcReport> = Vec::new();
        if let Some(w) = &mut self.window {
            if t > w.end {
                if let Some(repl) = w.replacement.take() {
                    self.policy = repl;
                }
                released = std::mem::take(&mut w.buffer);
                self.window = None;
            }
        }

        // A deferred event fires as soon as no window is active.
        if self.window.is_none() {
            if let Some(pending) = self.deferred.pop_front() {
                self.open_window(t, pending);
            }
        }
        for event in events {
            self.events.push(NcEventRecord {
                requested_at: t,
                effective_at: 0,
                kind: event.label(),
            });
            let pending = PendingEvent { record: self.events.len() - 1, event };
            if self.window.is_some() {
                self.deferred.push_back(pending);
            } else {
                self.open_window(t, pending);
            }
        }

        // Arrivals: released jobs keep their position ahead of this slot's
        // natural arrivals.
        for report in released.iter().chain(arrivals) {
            if let Some(w) = &mut self.window {
                let shifted_arrival = w.end + 1;
                let latest_start = report.latest_start();
                if latest_start < shifted_arrival {
                    // Past its latest start once the window closes.
                    self.alloc.set_outcome(report.id, JobOutcome::rejected());
                } else {
                    w.buffer.push(NcReport {
                        id: report.id,
                        arrival: shifted_arrival,
                        budget: latest_start - shifted_arrival,
                        value: report.value,
                    });
                }
            } else if !self.policy.on_arrival(t, report) {
                self.alloc.set_outcome(report.id, JobOutcome::rejected());
            }
        }

        // Expire jobs whose wait budget ran out.
        for id in self.policy.expire(t) {
            self.alloc.set_outcome(id, JobOutcome::rejected());
        }

        // Idle lanes pull from the queue in lane order.
        for lane in 0..self.lanes.len() {
            if self.lanes[lane].is_none() {
                if let Some(q) = self.policy.pop_next(t) {
                    let length = true_length(q.report.id).max(1);
                    self.lanes[lane] = Some(RunningJob {
                        id: q.report.id,
                        value: q.report.value,
                        length,
                        remaining: length,
                        queued: q,
                        slots: Vec::new(),
                    });
                }
            }
        }

        // Process one unit on every busy lane; completions reveal lengths,
        // charge the quote, and free the lane for the next slot.
        for (lane_idx, slot) in self.lanes.iter_mut().enumerate() {
            if let Some(job) = slot {
                job.slots.push((t, lane_idx as u32));
                if (t as usize) < self.reward_series.len() {
                    self.reward_series[t as usize] += job.value;
                }
                job.remaining -= 1;
                if job.remaining == 0 {
                    let payment = self.policy.completion_payment(&job.queued, job.length, t);
                    self.alloc.set_outcome(
                        job.id,
                        JobOutcome { slots: std::mem::take(&mut job.slots), payment },
                    );
                    *slot = None;
                }
            }
        }

        // Install the replacement policy as soon as the old epoch is fully
        // drained: behavior is unchanged (no arrivals reach the policy inside
        // a window and its queue is empty), and the engine state becomes
        // identical to a fresh start of the replacement.
        if let Some(w) = &mut self.window {
            if w.replacement.is_some()
                && self.lanes.iter().all(Option::is_none)
                && self.policy.queue_is_empty()
            {
                self.policy = w.replacement.take().unwrap();
            }
        }

        self.t_next = t + 1;
    }

    /// Structural state snapshot: clock, lanes, policy, window, deferred
    /// events. Run history (allocations, series) is intentionally excluded.
    pub fn state_token(&self) -> StateToken {
        let lanes: Vec<serde_json::Value> = self
            .lanes
            .iter()
            .map(|l| match l {
                None => serde_json::Value::Null,
                Some(j) => serde_json::json!({
                    "id": j.id,
                    "value": j.value,
                    "length": j.length,
                    "remaining": j.remaining,
                    "queued": j.queued,
                    "slots": j.slots,
                }),
            })
            .collect();
        let window = self.window.as_ref().map(|w| {
            serde_json::json!({
                "opened_at": w.opened_at,
                "end": w.end,
                "buffer": w.buffer,
                "replacement": w.replacement.as_ref().map(|p| serde_json::json!({
                    "kind": p.kind(),
                    "state": p.state_json(),
                })),
            })
        });
        let deferred: Vec<serde_json::Value> = self
            .deferred
            .iter()
            .map(|p| {
                serde_json::json!({
                    "requested_at": self.events[p.record].requested_at,
                    "kind": p.event.label(),
                })
            })
            .collect();
        StateToken {
            kind: "nc-engine".to_string(),
            state: serde_json::json!({
                "t_next": self.t_next,
                "lanes": lanes,
                "policy": { "kind": self.policy.kind(), "state": self.policy.state_json() },
                "window": window,
                "deferred": deferred,
            }),
        }
    }

    /// Restore the forward state captured by [`NcEngine::state_token`]:
    /// subsequent stepping behaves exactly as from the snapshot point. Run
    /// history (allocation, reward series, event log) is not rewound.
    pub fn restore(&mut self, token: &StateToken) -> Result<(), SchedError> {
        if token.kind != "nc-engine" {
            return Err(SchedError::KindMismatch {
                expected: "nc-engine".into(),
                got: token.kind.clone(),
            });
        }
        let bad = |m: String| SchedError::BadState(m);
        let state = &token.state;
        let get = |k: &str| {
            state.get(k).ok_or_else(|| SchedError::BadState(format!("missing `{k}`")))
        };
        self.t_next = serde_json::from_value(get("t_next")?.clone())
            .map_err(|e| bad(e.to_string()))?;
        let lanes = get("lanes")?
            .as_array()
            .ok_or_else(|| bad("lanes must be an array".into()))?;
        self.lanes = lanes
            .iter()
            .map(|l| -> Result<Option<RunningJob>, SchedError> {
                if l.is_null() {
                    return Ok(None);
                }
                let field = |k: &str| {
                    l.get(k).cloned().ok_or_else(|| SchedError::BadState(format!("lane.{k}")))
                };
                Ok(Some(RunningJob {
                    id: serde_json::from_value(field("id")?).map_err(|e| bad(e.to_string()))?,
                    value: serde_json::from_value(field("value")?)
                        .map_err(|e| bad(e.to_string()))?,
                    length: serde_json::from_value(field("length")?)
                        .map_err(|e| bad(e.to_string()))?,
                    remaining: serde_json::from_value(field("remaining")?)
                        .map_err(|e| bad(e.to_string()))?,
                    queued: serde_json::from_value(field("queued")?)
                        .map_err(|e| bad(e.to_string()))?,
                    slots: serde_json::from_value(field("slots")?)
                        .map_err(|e| bad(e.to_string()))?,
                }))
            })
            .collect::<Result<_, _>>()?;
        self.policy = policy_from_state(get("policy")?)?;
        let window = get("window")?;
        self.window = if window.is_null() {
            None
        } else {
            let field = |k: &str| {
                window.get(k).cloned().ok_or_else(|| SchedError::BadState(format!("window.{k}")))
            };
            let replacement = match window.get("replacement") {
                Some(v) if !v.is_null() => Some(policy_from_state(v)?),
                _ => None,
            };
            Some(SyncWindow {
                opened_at: serde_json::from_value(field("opened_at")?)
                    .map_err(|e| bad(e.to_string()))?,
                end: serde_json::from_value(field("end")?).map_err(|e| bad(e.to_string()))?,
                buffer: serde_json::from_value(field("buffer")?)
                    .map_err(|e| bad(e.to_string()))?,
                replacement,
            })
        };
        // Deferred events are restorable only as restarts of the current
        // policy; snapshots taken while a switch is queued cannot be
        // restored faithfully.
        let deferred = get("deferred")?
            .as_array()
            .ok_or_else(|| bad("deferred must be an array".into()))?;
        self.deferred.clear();
        for d in deferred {
            let kind = d.get("kind").and_then(|k| k.as_str()).unwrap_or("");
            if kind != "restart" {
                return Err(SchedError::BadState(
                    "cannot restore a snapshot with queued switch events".into(),
                ));
            }
            self.events.push(NcEventRecord {
                requested_at: d
                    .get("requested_at")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(0) as u32,
                effective_at: 0,
                kind: "restart".into(),
            });
            self.deferred.push_back(PendingEvent {
                record: self.events.len() - 1,
                event: NcEvent::Restart,
            });
        }
        Ok(())
    }

    /// Finish the run: truncate anything still on a lane (such jobs never
    /// complete, so they are charged nothing) and return the allocation.
    pub fn finish(mut self) -> (Allocation, Vec<f64>, Vec<NcEventRecord>) {
        for slot in &mut self.lanes {
            if let Some(job) = slot.take() {
                self.alloc
                    .set_outcome(job.id, JobOutcome { slots: job.slots, payment: 0.0 });
            }
        }
        (self.alloc, self.reward_series, self.events)
    }
}

/// Result of a non-clairvoyant run.
#[derive(Debug, Clone)]
pub struct NcRunOutput {
    pub alloc: Allocation,
    pub series: WelfareSeries,
    pub total: f64,
    /// Value processed per slot, as observable online (counts jobs that are
    /// still running at the horizon's end, unlike `series`).
    pub reward_series: Vec<f64>,
    pub events: Vec<NcEventRecord>,
}

/// Run a non-clairvoyant mechanism spec over an instance. `start` drops jobs
/// arriving before that slot (the mechanism comes online at `start`).
pub fn run_nonclairvoyant(
    spec: &crate::mech::NcSpec,
    inst: &Instance,
    start: u32,
) -> Result<NcRunOutput, SchedError> {
    use rand::Rng;
    use rand::SeedableRng;

    let params = InstanceParams::of(inst);
    let mut engine = NcEngine::new(params, spec.base_policy());
    let mut script: VecDeque<(u32, NcEvent)> = spec.scripted_events().into();
    let mut coin = spec
        .random_restarts()
        .map(|(gamma, seed)| (gamma, rand_chacha::ChaCha8Rng::seed_from_u64(seed)));

    let arrivals = inst.arrivals_by_slot();
    let lengths: std::collections::BTreeMap<u32, u32> =
        inst.jobs().iter().map(|j| (j.id, j.length)).collect();

    for t in 1..=inst.horizon {
        let mut events = Vec::new();
        while script.front().is_some_and(|&(at, _)| at == t) {
            events.push(script.pop_front().unwrap().1);
        }
        if let Some((gamma, rng)) = &mut coin {
            // Coins are drawn every slot from the seed alone, never from
            // reports or engine state.
            if rng.random_bool(*gamma) {
                events.push(NcEvent::Restart);
            }
        }
        let slot_arrivals: Vec<NcReport> = arrivals
            .get(&t)
            .map(|batch| {
                batch
                    .iter()
                    .filter(|j| j.arrival >= start)
                    .map(|j| NcReport { id: j.id, arrival: j.arrival, budget: j.deadline, value: j.value })
                    .collect()
            })
            .unwrap_or_default();
        engine.step(t, events, &slot_arrivals, &|id| {
            lengths.get(&id).copied().unwrap_or(1)
        });
    }

    let (alloc, reward_series, events) = engine.finish();
    let series = crate::job::welfare_series(&alloc, inst)?;
    let total = series.total();
    Ok(NcRunOutput { alloc, series, total, reward_series, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job::{Bounds, Instance, JobType};
    use crate::mech::NcSpec;

    fn bounds() -> Bounds {
        Bounds { v_max: 4.0, d_max: 3, l_max: 3 }
    }

    #[test]
    fn single_job_starts_at_arrival() {
        let inst =
            Instance::new(vec![JobType::new(0, 2, 1, 2, 2.0)], 10, 1, bounds());
        let out = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
        assert_eq!(out.alloc.outcome(0).slots, vec![(2, 0), (3, 0)]);
        assert_eq!(out.alloc.outcome(0).payment, 2.0);
        assert_eq!(out.total, 4.0);
    }

    #[test]
    fn price_filter_rejects_low_value() {
        let inst =
            Instance::new(vec![JobType::new(0, 1, 2, 1, 1.0)], 10, 1, bounds());
        let out = run_nonclairvoyant(&NcSpec::ppf(2.0), &inst, 1).unwrap();
        assert!(out.alloc.outcome(0).slots.is_empty());
        assert_eq!(out.alloc.outcome(0).payment, 0.0);
    }

    #[test]
    fn same_slot_arrivals_start_in_order() {
        let inst = Instance::new(
            vec![JobType::new(1, 3, 3, 1, 2.0), JobType::new(0, 3, 3, 1, 2.0)],
            10,
            1,
            bounds(),
        );
        let out = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
        // Lower id starts first.
        assert_eq!(out.alloc.outcome(0).start(), Some(3));
        assert_eq!(out.alloc.outcome(1).start(), Some(4));
    }

    #[test]
    fn wait_budget_expiry_deletes_job() {
        let inst = Instance::new(
            vec![JobType::new(0, 1, 0, 3, 2.0), JobType::new(1, 1, 1, 2, 2.0)],
            10,
            1,
            bounds(),
        );
        let out = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
        // Job 0 runs 1..=3; job 1 can wait only one slot, so it is deleted.
        assert_eq!(out.alloc.outcome(0).slots.len(), 3);
        assert!(out.alloc.outcome(1).slots.is_empty());
    }

    #[test]
    fn served_slots_are_consecutive_on_one_lane() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let horizon = 24u32;
            let machines = rng.random_range(1..=2);
            let njobs = rng.random_range(1..10u32);
            let mut jobs = Vec::new();
            for id in 0..njobs {
                jobs.push(JobType::new(
                    id,
                    rng.random_range(1..=horizon - 4),
                    rng.random_range(0..=3),
                    rng.random_range(1..=3),
                    rng.random_range(0..=8) as f64 * 0.5,
                ));
            }
            let inst = Instance::new(jobs, horizon, machines, bounds());
            let out = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
            let served = crate::job::served_jobs(&out.alloc, &inst).unwrap();
            for id in served {
                let o = out.alloc.outcome(id);
                let lane = o.slots[0].1;
                for (k, &(t, l)) in o.slots.iter().enumerate() {
                    assert_eq!(l, lane, "trial {trial}: job {id} changed lanes");
                    assert_eq!(t, o.slots[0].0 + k as u32, "trial {trial}: job {id} not consecutive");
                }
            }
        }
    }

    #[test]
    fn engine_snapshot_restore_replays_identically() {
        use crate::instances::gen_random_nonclairvoyant;
        use crate::mech::InstanceParams;

        for seed in 0..10 {
            let inst = gen_random_nonclairvoyant(seed + 3000, 30, 2, 12);
            let params = InstanceParams::of(&inst);
            let arrivals = inst.arrivals_by_slot();
            let lengths: std::collections::BTreeMap<u32, u32> =
                inst.jobs().iter().map(|j| (j.id, j.length)).collect();
            let reports = |t: u32| -> Vec<NcReport> {
                arrivals
                    .get(&t)
                    .map(|b| {
                        b.iter()
                            .map(|j| NcReport {
                                id: j.id,
                                arrival: j.arrival,
                                budget: j.deadline,
                                value: j.value,
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            };
            let oracle = |id: u32| lengths.get(&id).copied().unwrap_or(1);

            let mut original = NcEngine::new(params, Box::new(PpfNonClairvoyant::new(1.0)));
            for t in 1..=5 {
                let events =
                    if t == 4 { vec![NcEvent::Restart] } else { Vec::new() };
                original.step(t, events, &reports(t), &oracle);
            }
            let token = original.state_token();

            let mut resumed = NcEngine::new(params, Box::new(PpfNonClairvoyant::new(1.0)));
            resumed.restore(&token).unwrap();
            assert_eq!(resumed.state_token().bytes(), token.bytes());
            for t in 6..=inst.horizon {
                original.step(t, Vec::new(), &reports(t), &oracle);
                resumed.step(t, Vec::new(), &reports(t), &oracle);
                assert_eq!(
                    original.state_token().bytes(),
                    resumed.state_token().bytes(),
                    "seed {seed}: divergence at slot {t}"
                );
            }
        }
    }

    #[test]
    fn engine_restore_rejects_foreign_tokens() {
        use crate::job::Bounds;
        use crate::mech::{InstanceParams, StateToken};
        let params = InstanceParams {
            horizon: 10,
            machines: 1,
            bounds: Bounds { v_max: 1.0, d_max: 1, l_max: 1 },
        };
        let mut engine = NcEngine::new(params, Box::new(PpfNonClairvoyant::new(1.0)));
        let token = StateToken { kind: "ppf-clairvoyant".into(), state: serde_json::json!({}) };
        assert!(matches!(
            engine.restore(&token),
            Err(crate::SchedError::KindMismatch { .. })
        ));
    }

    #[test]
    fn truncated_job_is_not_served_and_pays_nothing() {
        let inst =
            Instance::new(vec![JobType::new(0, 9, 0, 3, 2.0)], 10, 1, bounds());
        let out = run_nonclairvoyant(&NcSpec::ppf(1.0), &inst, 1).unwrap();
        assert_eq!(out.alloc.outcome(0).slots, vec![(9, 0), (10, 0)]);
        assert_eq!(out.alloc.outcome(0).payment, 0.0);
        assert_eq!(out.total, 0.0);
        // The online reward series still counts the processed units.
        assert_eq!(out.reward_series[9], 2.0);
        assert_eq!(out.reward_series[10], 2.0);
    }
}
