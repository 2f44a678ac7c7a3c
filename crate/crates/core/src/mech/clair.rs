//! Clairvoyant (prompt) mechanisms and their runner.

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::job::{Allocation, Instance, JobOutcome, JobType, Setting, WelfareSeries};
use crate::mech::{InstanceParams, StateToken};

/// Decision emitted at a job's arrival slot: the time slots it will occupy
/// (one unit per slot) and its total payment, or a rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClairDecision {
    Accept { slots: Vec<u32>, payment: f64 },
    Reject { payment: f64 },
}

impl ClairDecision {
    pub fn reject() -> Self {
        ClairDecision::Reject { payment: 0.0 }
    }

    pub fn payment(&self) -> f64 {
        match self {
            ClairDecision::Accept { payment, .. } | ClairDecision::Reject { payment } => *payment,
        }
    }
}

/// Contract for prompt, order-respecting clairvoyant mechanisms.
///
/// The runner feeds arrivals slot by slot in order-key order; a decision is
/// returned for each job immediately and is never revised. Jobs arriving at
/// the same slot are delivered in one batch (in order-key order) so that
/// deliberately broken mechanisms can be expressed for checker calibration.
pub trait ClairvoyantMechanism {
    /// Mechanism kind tag; state tokens only restore into the same kind.
    fn kind(&self) -> &'static str;

    fn name(&self) -> String;

    /// Reset all state for a run over the given grid.
    fn init(&mut self, params: &InstanceParams);

    /// Decide all jobs arriving at slot `t`, in the order given.
    fn on_slot_arrivals(&mut self, t: u32, jobs: &[JobType]) -> Vec<ClairDecision>;

    fn state_json(&self) -> serde_json::Value;

    fn load_state_json(&mut self, state: &serde_json::Value) -> Result<(), SchedError>;

    fn clone_box(&self) -> Box<dyn ClairvoyantMechanism>;

    fn snapshot(&self) -> StateToken {
        StateToken { kind: self.kind().to_string(), state: self.state_json() }
    }

    fn restore(&mut self, token: &StateToken) -> Result<(), SchedError> {
        if token.kind != self.kind() {
            return Err(SchedError::KindMismatch {
                expected: self.kind().to_string(),
                got: token.kind.clone(),
            });
        }
        self.load_state_json(&token.state)
    }
}

impl Clone for Box<dyn ClairvoyantMechanism> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Posted-pricing FIFO: reject any job whose value is below the price;
/// otherwise assign the earliest free units inside the job's window
/// (lowest lane first) and charge the price per unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpfClairvoyant {
    price: f64,
    horizon: u32,
    machines: u32,
    /// Units occupied per slot, indexed 1..=horizon.
    occupancy: Vec<u32>,
}

impl PpfClairvoyant {
    pub fn new(price: f64) -> Self {
        Self { price, horizon: 0, machines: 0, occupancy: Vec::new() }
    }

    fn decide(&mut self, job: &JobType) -> ClairDecision {
        if job.value < self.price {
            return ClairDecision::reject();
        }
        let hi = job.deadline.min(self.horizon);
        let free: Vec<u32> = (job.arrival..=hi)
            .filter(|&t| self.occupancy[t as usize] < self.machines)
            .collect();
        if (free.len() as u32) < job.length {
            return ClairDecision::reject();
        }
        let slots: Vec<u32> = free.into_iter().take(job.length as usize).collect();
        for &t in &slots {
            self.occupancy[t as usize] += 1;
        }
        ClairDecision::Accept { slots, payment: self.price * job.length as f64 }
    }
}

impl ClairvoyantMechanism for PpfClairvoyant {
    fn kind(&self) -> &'static str {
        "ppf-clairvoyant"
    }

    fn name(&self) -> String {
        format!("ppf:{}", self.price)
    }

    fn init(&mut self, params: &InstanceParams) {
        self.horizon = params.horizon;
        self.machines = params.machines;
        self.occupancy = vec![0; params.horizon as usize + 1];
    }

    fn on_slot_arrivals(&mut self, _t: u32, jobs: &[JobType]) -> Vec<ClairDecision> {
        jobs.iter().map(|j| self.decide(j)).collect()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ppf state serializes")
    }

    fn load_state_json(&mut self, state: &serde_json::Value) -> Result<(), SchedError> {
        *self = serde_json::from_value(state.clone())
            .map_err(|e| SchedError::BadState(e.to_string()))?;
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn ClairvoyantMechanism> {
        Box::new(self.clone())
    }
}

/// Result of running a mechanism over an instance.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub alloc: Allocation,
    pub series: WelfareSeries,
    pub total: f64,
}

/// Feed `inst`'s jobs to `mech` slot by slot, starting the mechanism at slot
/// `start` (jobs arriving earlier are not seen). Each decision is validated
/// against the grid as it is emitted.
pub fn run_clairvoyant(
    mech: &mut dyn ClairvoyantMechanism,
    inst: &Instance,
    start: u32,
) -> Result<RunOutput, SchedError> {
    let params = InstanceParams::of(inst);
    mech.init(&params);
    let mut alloc = Allocation::new(Setting::Clairvoyant, inst.horizon, inst.machines);
    let mut occupancy = vec![0u32; inst.horizon as usize + 1];
    for (&slot, batch) in inst.arrivals_by_slot().iter() {
        if slot < start {
            continue;
        }
        let decisions = mech.on_slot_arrivals(slot, batch);
        if decisions.len() != batch.len() {
            return Err(SchedError::BadAssignment {
                job: batch.first().map(|j| j.id).unwrap_or(0),
                reason: "mechanism returned the wrong number of decisions".into(),
            });
        }
        for (job, decision) in batch.iter().zip(decisions) {
            let outcome = match decision {
                ClairDecision::Reject { payment } => JobOutcome { slots: vec![], payment },
                ClairDecision::Accept { slots, payment } => {
                    let mut units = Vec::with_capacity(slots.len());
                    let mut sorted = slots;
                    sorted.sort_unstable();
                    let mut prev = None;
                    for t in sorted {
                        if t < job.arrival || t > inst.horizon {
                            return Err(SchedError::BadAssignment {
                                job: job.id,
                                reason: format!("slot {t} outside [arrival, horizon]"),
                            });
                        }
                        if prev == Some(t) {
                            return Err(SchedError::BadAssignment {
                                job: job.id,
                                reason: format!("slot {t} assigned twice to one job"),
                            });
                        }
                        prev = Some(t);
                        let lane = occupancy[t as usize];
                        if lane >= inst.machines {
                            return Err(SchedError::Infeasible {
                                slot: t,
                                used: lane + 1,
                                capacity: inst.machines,
                            });
                        }
                        occupancy[t as usize] += 1;
                        units.push((t, lane));
                    }
                    JobOutcome { slots: units, payment }
                }
            };
            alloc.set_outcome(job.id, outcome);
        }
    }
    let series = crate::job::welfare_series(&alloc, inst)?;
    let total = series.total();
    Ok(RunOutput { alloc, series, total })
}
