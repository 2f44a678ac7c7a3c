//! Job and instance data model, feasibility, welfare, and utility accounting.
//!
//! Time is slotted, integer, and 1-based. Machine units are `(slot, lane)`
//! pairs with `lane < m`. Values are `f64` but every comparison in the
//! library goes through the [`crate::VALUE_EPS`] tolerance; generators keep
//! values on dyadic grids so the arithmetic stays exact in practice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::VALUE_EPS;

/// Which deadline semantics an instance or allocation is interpreted under.
///
/// Clairvoyant: `deadline` is the latest slot by which service must complete
/// and the job's length is part of its report. Non-clairvoyant: `deadline` is
/// the number of slots the job is willing to wait before being started, and
/// lengths are observed only at completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    Clairvoyant,
    NonClairvoyant,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Clairvoyant => write!(f, "clairvoyant"),
            Setting::NonClairvoyant => write!(f, "nonclairvoyant"),
        }
    }
}

/// One job's reported four-tuple plus identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobType {
    pub id: u32,
    /// Arrival slot, `>= 1`.
    pub arrival: u32,
    /// Latest completion slot (clairvoyant) or wait budget in slots
    /// (non-clairvoyant; 0 means the job must start on arrival).
    pub deadline: u32,
    /// Processing length in slots, `>= 1`.
    pub length: u32,
    /// Value per unit of length, `>= 0`.
    pub value: f64,
}

impl JobType {
    pub fn new(id: u32, arrival: u32, deadline: u32, length: u32, value: f64) -> Self {
        Self { id, arrival, deadline, length, value }
    }

    /// Total order on jobs: by arrival, ties broken by id.
    pub fn order_key(&self) -> (u32, u32) {
        (self.arrival, self.id)
    }

    /// Latest slot at which a non-clairvoyant job may still be started.
    pub fn latest_start(&self) -> u32 {
        self.arrival + self.deadline
    }
}

/// Instance bounds: every job must satisfy them, and the switching-cost and
/// sync-window constants are derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub v_max: f64,
    pub d_max: u32,
    pub l_max: u32,
}

impl Bounds {
    /// Sync window length `l_max + d_max` used by restarts and the
    /// non-clairvoyant switch.
    pub fn sync_window(&self) -> u32 {
        self.l_max + self.d_max
    }
}

/// A job roster with horizon, machine count, and bounds.
///
/// Jobs are kept sorted by [`JobType::order_key`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    jobs: Vec<JobType>,
    pub horizon: u32,
    pub machines: u32,
    pub bounds: Bounds,
}

impl Instance {
    pub fn new(mut jobs: Vec<JobType>, horizon: u32, machines: u32, bounds: Bounds) -> Self {
        jobs.sort_by_key(JobType::order_key);
        Self { jobs, horizon, machines, bounds }
    }

    pub fn jobs(&self) -> &[JobType] {
        &self.jobs
    }

    pub fn job(&self, id: u32) -> Option<&JobType> {
        self.jobs.iter().find(|j| j.id == id)
    }

    /// Jobs grouped by arrival slot, in order-key order within each slot.
    pub fn arrivals_by_slot(&self) -> BTreeMap<u32, Vec<JobType>> {
        let mut map: BTreeMap<u32, Vec<JobType>> = BTreeMap::new();
        for j in &self.jobs {
            map.entry(j.arrival).or_default().push(*j);
        }
        map
    }

    /// Replace job `id`'s report with `report` (same id), re-sorting by the
    /// reported order key. Used by the misreport enumerator.
    pub fn with_report(&self, id: u32, report: JobType) -> Instance {
        let mut jobs = self.jobs.clone();
        for j in &mut jobs {
            if j.id == id {
                *j = JobType { id, ..report };
            }
        }
        Instance::new(jobs, self.horizon, self.machines, self.bounds)
    }

    /// Remove job `id` entirely.
    pub fn without_job(&self, id: u32) -> Instance {
        let jobs = self.jobs.iter().copied().filter(|j| j.id != id).collect();
        Instance::new(jobs, self.horizon, self.machines, self.bounds)
    }
}

/// A violated instance or job invariant, reported by [`validate_instance`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    IdsNotUnique { id: u32 },
    ArrivalOutOfRange { id: u32 },
    DeadlineOutOfRange { id: u32 },
    DeadlineBeforeArrival { id: u32 },
    WindowExceedsDmax { id: u32 },
    BudgetExceedsDmax { id: u32 },
    LengthOutOfRange { id: u32 },
    ValueOutOfRange { id: u32 },
    NoMachines,
    ZeroHorizon,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::IdsNotUnique { id } => write!(f, "ids not unique (id {id})"),
            ValidationIssue::ArrivalOutOfRange { id } => {
                write!(f, "job {id}: arrival outside [1, T]")
            }
            ValidationIssue::DeadlineOutOfRange { id } => {
                write!(f, "job {id}: deadline outside [1, T]")
            }
            ValidationIssue::DeadlineBeforeArrival { id } => {
                write!(f, "job {id}: deadline earlier than arrival")
            }
            ValidationIssue::WindowExceedsDmax { id } => {
                write!(f, "job {id}: deadline window exceeds d_max")
            }
            ValidationIssue::BudgetExceedsDmax { id } => {
                write!(f, "job {id}: wait budget exceeds d_max")
            }
            ValidationIssue::LengthOutOfRange { id } => {
                write!(f, "job {id}: length outside [1, l_max]")
            }
            ValidationIssue::ValueOutOfRange { id } => write!(f, "job {id}: value exceeds v_max"),
            ValidationIssue::NoMachines => write!(f, "machine count is zero"),
            ValidationIssue::ZeroHorizon => write!(f, "horizon is zero"),
        }
    }
}

/// Check every job and instance invariant under the given deadline semantics.
/// Returns all violations found; an empty list means the instance is valid.
pub fn validate_instance(inst: &Instance, setting: Setting) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if inst.machines == 0 {
        issues.push(ValidationIssue::NoMachines);
    }
    if inst.horizon == 0 {
        issues.push(ValidationIssue::ZeroHorizon);
    }
    let mut seen = BTreeSet::new();
    for j in inst.jobs() {
        if !seen.insert(j.id) {
            issues.push(ValidationIssue::IdsNotUnique { id: j.id });
        }
        if j.arrival < 1 || j.arrival > inst.horizon {
            issues.push(ValidationIssue::ArrivalOutOfRange { id: j.id });
        }
        if j.length < 1 || j.length > inst.bounds.l_max {
            issues.push(ValidationIssue::LengthOutOfRange { id: j.id });
        }
        if !j.value.is_finite() || j.value < 0.0 || j.value > inst.bounds.v_max + VALUE_EPS {
            issues.push(ValidationIssue::ValueOutOfRange { id: j.id });
        }
        match setting {
            Setting::Clairvoyant => {
                if j.deadline < 1 || j.deadline > inst.horizon {
                    issues.push(ValidationIssue::DeadlineOutOfRange { id: j.id });
                }
                if j.deadline < j.arrival {
                    issues.push(ValidationIssue::DeadlineBeforeArrival { id: j.id });
                } else if j.deadline - j.arrival + 1 > inst.bounds.d_max {
                    issues.push(ValidationIssue::WindowExceedsDmax { id: j.id });
                }
            }
            Setting::NonClairvoyant => {
                if j.deadline > inst.bounds.d_max {
                    issues.push(ValidationIssue::BudgetExceedsDmax { id: j.id });
                }
            }
        }
    }
    issues
}

/// A single job's outcome: the machine units it received and the total
/// payment it was charged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JobOutcome {
    /// `(slot, lane)` units, sorted by slot. Empty for rejected jobs.
    pub slots: Vec<(u32, u32)>,
    /// Total payment charged to the job.
    pub payment: f64,
}

impl JobOutcome {
    pub fn rejected() -> Self {
        Self::default()
    }

    pub fn start(&self) -> Option<u32> {
        self.slots.first().map(|&(t, _)| t)
    }

    pub fn finish(&self) -> Option<u32> {
        self.slots.last().map(|&(t, _)| t)
    }
}

/// Per-job slot assignments and payments produced by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub setting: Setting,
    pub horizon: u32,
    pub machines: u32,
    outcomes: BTreeMap<u32, JobOutcome>,
}

impl Allocation {
    pub fn new(setting: Setting, horizon: u32, machines: u32) -> Self {
        Self { setting, horizon, machines, outcomes: BTreeMap::new() }
    }

    pub fn set_outcome(&mut self, id: u32, outcome: JobOutcome) {
        self.outcomes.insert(id, outcome);
    }

    pub fn outcome(&self, id: u32) -> JobOutcome {
        self.outcomes.get(&id).cloned().unwrap_or_default()
    }

    pub fn outcomes(&self) -> &BTreeMap<u32, JobOutcome> {
        &self.outcomes
    }

    pub fn payments(&self) -> BTreeMap<u32, f64> {
        self.outcomes.iter().map(|(&id, o)| (id, o.payment)).collect()
    }

    /// Units occupied per slot, indexed 1..=horizon (index 0 unused).
    pub fn occupancy(&self) -> Vec<u32> {
        let mut occ = vec![0u32; self.horizon as usize + 1];
        for o in self.outcomes.values() {
            for &(t, _) in &o.slots {
                if (t as usize) < occ.len() {
                    occ[t as usize] += 1;
                }
            }
        }
        occ
    }

    /// Verify slot capacity, unit uniqueness, and slot ranges.
    pub fn check_feasible(&self) -> Result<(), SchedError> {
        let mut units = BTreeSet::new();
        let mut occ = vec![0u32; self.horizon as usize + 1];
        for (&id, o) in &self.outcomes {
            let mut times = BTreeSet::new();
            for &(t, lane) in &o.slots {
                if t < 1 || t > self.horizon || lane >= self.machines {
                    return Err(SchedError::BadAssignment {
                        job: id,
                        reason: format!("unit ({t}, {lane}) outside the slot grid"),
                    });
                }
                if !units.insert((t, lane)) {
                    return Err(SchedError::BadAssignment {
                        job: id,
                        reason: format!("unit ({t}, {lane}) assigned twice"),
                    });
                }
                if !times.insert(t) {
                    return Err(SchedError::BadAssignment {
                        job: id,
                        reason: format!("two units of slot {t} given to one job"),
                    });
                }
                occ[t as usize] += 1;
            }
        }
        for (t, &used) in occ.iter().enumerate().skip(1) {
            if used > self.machines {
                return Err(SchedError::Infeasible {
                    slot: t as u32,
                    used,
                    capacity: self.machines,
                });
            }
        }
        Ok(())
    }
}

/// Whether `outcome` meets `job`'s true service requirement under `setting`.
///
/// Clairvoyant: at least `length` units inside the true window
/// `[arrival, deadline]`. Non-clairvoyant: started no later than
/// `arrival + deadline` and ran the full length.
pub fn meets_requirement(job: &JobType, outcome: &JobOutcome, setting: Setting) -> bool {
    match setting {
        Setting::Clairvoyant => {
            let in_window = outcome
                .slots
                .iter()
                .filter(|&&(t, _)| t >= job.arrival && t <= job.deadline)
                .count();
            in_window as u32 >= job.length
        }
        Setting::NonClairvoyant => match outcome.start() {
            Some(start) => {
                start >= job.arrival
                    && start <= job.latest_start()
                    && outcome.slots.len() as u32 == job.length
            }
            None => false,
        },
    }
}

/// Ids of the jobs whose allocation meets their true service requirement.
pub fn served_jobs(alloc: &Allocation, inst: &Instance) -> Result<BTreeSet<u32>, SchedError> {
    alloc.check_feasible()?;
    let mut served = BTreeSet::new();
    for j in inst.jobs() {
        if meets_requirement(j, &alloc.outcome(j.id), alloc.setting) {
            served.insert(j.id);
        }
    }
    Ok(served)
}

/// Per-slot welfare values `W_t` for `t in [1, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSeries(Vec<f64>);

impl WelfareSeries {
    pub fn zeros(horizon: u32) -> Self {
        Self(vec![0.0; horizon as usize + 1])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn horizon(&self) -> u32 {
        (self.0.len() - 1) as u32
    }

    /// `W_t`; zero outside `[1, horizon]`.
    pub fn get(&self, t: u32) -> f64 {
        self.0.get(t as usize).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, t: u32, v: f64) {
        if let Some(slot) = self.0.get_mut(t as usize) {
            *slot += v;
        }
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Sum of `W_t` over `t in [from, to]` (inclusive, clipped to the horizon).
    pub fn sum_range(&self, from: u32, to: u32) -> f64 {
        let hi = to.min(self.horizon());
        if from > hi {
            return 0.0;
        }
        self.0[from.max(1) as usize..=hi as usize].iter().sum()
    }
}

/// Welfare per slot: each served job contributes its per-unit value at every
/// slot it occupies.
pub fn welfare_series(alloc: &Allocation, inst: &Instance) -> Result<WelfareSeries, SchedError> {
    let served = served_jobs(alloc, inst)?;
    let mut series = WelfareSeries::zeros(alloc.horizon);
    for j in inst.jobs() {
        if served.contains(&j.id) {
            for &(t, _) in &alloc.outcome(j.id).slots {
                series.add(t, j.value);
            }
        }
    }
    Ok(series)
}

/// Total welfare: sum of `value * length` over served jobs.
pub fn total_welfare(alloc: &Allocation, inst: &Instance) -> Result<f64, SchedError> {
    let served = served_jobs(alloc, inst)?;
    Ok(inst
        .jobs()
        .iter()
        .filter(|j| served.contains(&j.id))
        .map(|j| j.value * j.length as f64)
        .sum())
}

/// Utility of a job with true type `true_type` given the outcome it obtained
/// (possibly under a misreport) and the total payment charged.
///
/// If the true service requirement is met within the true window the job
/// gains `value * length`; the payment is owed either way.
pub fn utility(true_type: &JobType, alloc: &Allocation, payment: f64) -> f64 {
    let outcome = alloc.outcome(true_type.id);
    if meets_requirement(true_type, &outcome, alloc.setting) {
        true_type.value * true_type.length as f64 - payment
    } else {
        -payment
    }
}
