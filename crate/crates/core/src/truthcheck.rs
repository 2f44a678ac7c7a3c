//! Property-based incentive verifier: exhaustive misreport enumeration and
//! order-respecting checks for any mechanism or combiner on small instances.
//!
//! Randomized combiners are checked pathwise per fixed coin seed; the
//! coin sequence's independence from reports is a separate check. The
//! [`controls`] submodule ships deliberately broken mechanisms that the
//! verifier must flag, proving it has teeth.

use serde::{Deserialize, Serialize};

use crate::combiners::{ftbs_run, fts_run, FtbsConfig, FtsConfig};
use crate::error::SchedError;
use crate::job::{utility, Allocation, Instance, JobType, Setting};
use crate::mech::{run_clairvoyant, run_nonclairvoyant, ClairSpec, NcSpec};
use crate::VALUE_EPS;

/// Anything the checker can rerun end to end on an instance.
pub trait Runnable {
    fn setting(&self) -> Setting;
    fn run(&self, inst: &Instance) -> Result<Allocation, SchedError>;
    fn label(&self) -> String;
}

impl Runnable for ClairSpec {
    fn setting(&self) -> Setting {
        Setting::Clairvoyant
    }

    fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
        Ok(run_clairvoyant(self.build().as_mut(), inst, 1)?.alloc)
    }

    fn label(&self) -> String {
        self.name()
    }
}

impl Runnable for NcSpec {
    fn setting(&self) -> Setting {
        Setting::NonClairvoyant
    }

    fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
        Ok(run_nonclairvoyant(self, inst, 1)?.alloc)
    }

    fn label(&self) -> String {
        self.name()
    }
}

impl Runnable for FtsConfig {
    fn setting(&self) -> Setting {
        Setting::Clairvoyant
    }

    fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
        Ok(fts_run(self, inst)?.output.alloc)
    }

    fn label(&self) -> String {
        "fts".into()
    }
}

impl Runnable for FtbsConfig {
    fn setting(&self) -> Setting {
        Setting::NonClairvoyant
    }

    fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
        Ok(ftbs_run(self, inst)?.alloc)
    }

    fn label(&self) -> String {
        "ftbs".into()
    }
}

/// Finite misreport grids. Arrivals may only be reported later than the
/// truth; in the non-clairvoyant setting lengths are not reported, so
/// length misreports are skipped there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisreportGrid {
    /// Offsets added to the true arrival.
    pub arrival_shifts: Vec<u32>,
    /// Signed offsets added to the true deadline / wait budget.
    pub deadline_shifts: Vec<i64>,
    /// Signed offsets added to the true length (clairvoyant only).
    pub length_shifts: Vec<i64>,
    /// Number of evenly spaced value points over `[0, v_max]`.
    pub value_points: u32,
}

impl Default for MisreportGrid {
    fn default() -> Self {
        Self {
            arrival_shifts: vec![0, 1, 2],
            deadline_shifts: vec![-1, 0, 1],
            length_shifts: vec![-1, 0, 1],
            value_points: 5,
        }
    }
}

impl MisreportGrid {
    /// All candidate reports for `job` within the instance bounds, the true
    /// type excluded.
    pub fn candidates(&self, job: &JobType, inst: &Instance, setting: Setting) -> Vec<JobType> {
        let mut out = Vec::new();
        let mut values: Vec<f64> = (0..self.value_points)
            .map(|k| {
                inst.bounds.v_max * k as f64 / (self.value_points.max(2) - 1) as f64
            })
            .collect();
        values.push(job.value);
        let length_shifts: &[i64] = match setting {
            Setting::Clairvoyant => &self.length_shifts,
            Setting::NonClairvoyant => &[0],
        };
        for &da in &self.arrival_shifts {
            let arrival = job.arrival + da;
            if arrival > inst.horizon {
                continue;
            }
            for &dd in &self.deadline_shifts {
                let deadline = job.deadline as i64 + dd;
                let deadline = match setting {
                    Setting::Clairvoyant => {
                        if deadline < arrival as i64 || deadline > inst.horizon as i64 {
                            continue;
                        }
                        if (deadline - arrival as i64 + 1) > inst.bounds.d_max as i64 {
                            continue;
                        }
                        deadline as u32
                    }
                    Setting::NonClairvoyant => {
                        if deadline < 0 || deadline > inst.bounds.d_max as i64 {
                            continue;
                        }
                        deadline as u32
                    }
                };
                for &dl in length_shifts {
                    let length = job.length as i64 + dl;
                    if length < 1 || length > inst.bounds.l_max as i64 {
                        continue;
                    }
                    for &value in &values {
                        if value < 0.0 || value > inst.bounds.v_max {
                            continue;
                        }
                        let report = JobType::new(job.id, arrival, deadline, length as u32, value);
                        if report != *job && !out.contains(&report) {
                            out.push(report);
                        }
                    }
                }
            }
        }
        out
    }
}

/// A profitable misreport found by the checker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub mechanism: String,
    pub job: u32,
    pub true_type: JobType,
    pub misreport: JobType,
    pub truthful_utility: f64,
    pub lying_utility: f64,
}

/// Checker result: violations found plus the rerun accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub violations: Vec<Violation>,
    pub reruns: u64,
    /// Set when the rerun budget ran out before the grid was exhausted.
    pub partial: bool,
}

impl CheckReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && !self.partial
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.violations.extend(other.violations);
        self.reruns += other.reruns;
        self.partial |= other.partial;
    }
}

/// For every job and every grid misreport, rerun the mechanism with only
/// that job's report altered and compare utilities computed against the true
/// type. Reports every strict improvement beyond tolerance.
pub fn check_truthful(
    target: &dyn Runnable,
    inst: &Instance,
    grid: &MisreportGrid,
    budget: u64,
) -> Result<CheckReport, SchedError> {
    let mut report = CheckReport::default();
    let setting = target.setting();
    let baseline = target.run(inst)?;
    report.reruns += 1;
    for job in inst.jobs() {
        let honest = utility(job, &baseline, baseline.outcome(job.id).payment);
        for misreport in grid.candidates(job, inst, setting) {
            if report.reruns >= budget {
                report.partial = true;
                return Ok(report);
            }
            let lied = target.run(&inst.with_report(job.id, misreport))?;
            report.reruns += 1;
            let lying = utility(job, &lied, lied.outcome(job.id).payment);
            if lying > honest + VALUE_EPS {
                report.violations.push(Violation {
                    mechanism: target.label(),
                    job: job.id,
                    true_type: *job,
                    misreport,
                    truthful_utility: honest,
                    lying_utility: lying,
                });
            }
        }
    }
    Ok(report)
}

/// An order-respecting violation: some strictly-later job changed this job's
/// outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub mechanism: String,
    pub job: u32,
    pub later_job: u32,
    pub edit: String,
}

/// For each job, mutate or delete every strictly-later job (in arrival
/// order) and rerun: the earlier job's allocation and payment must not move.
pub fn check_order_respecting(
    target: &dyn Runnable,
    inst: &Instance,
    budget: u64,
) -> Result<(Vec<OrderViolation>, u64), SchedError> {
    let mut violations = Vec::new();
    let baseline = target.run(inst)?;
    let mut reruns = 1u64;
    let jobs = inst.jobs().to_vec();
    for later in &jobs {
        let mut edits: Vec<(String, Instance)> =
            vec![("delete".into(), inst.without_job(later.id))];
        let mut mutated = *later;
        mutated.value = inst.bounds.v_max;
        edits.push(("value=v_max".into(), inst.with_report(later.id, mutated)));
        let mut mutated = *later;
        mutated.value = 0.0;
        edits.push(("value=0".into(), inst.with_report(later.id, mutated)));
        if target.setting() == Setting::Clairvoyant && later.length > 1 {
            let mut mutated = *later;
            mutated.length = 1;
            edits.push(("length=1".into(), inst.with_report(later.id, mutated)));
        }
        for (edit, edited) in edits {
            if reruns >= budget {
                return Ok((violations, reruns));
            }
            let rerun = target.run(&edited)?;
            reruns += 1;
            for job in &jobs {
                if job.order_key() < later.order_key()
                    && baseline.outcome(job.id) != rerun.outcome(job.id)
                {
                    violations.push(OrderViolation {
                        mechanism: target.label(),
                        job: job.id,
                        later_job: later.id,
                        edit: edit.clone(),
                    });
                }
            }
        }
    }
    Ok((violations, reruns))
}

/// Verify that a combiner's coin/restart schedule is a function of the seed
/// alone: rerun with altered reports and compare the event slots.
pub fn check_restart_report_independence(
    cfg: &FtbsConfig,
    inst: &Instance,
    altered: &Instance,
) -> Result<bool, SchedError> {
    let a = ftbs_run(cfg, inst)?;
    let b = ftbs_run(cfg, altered)?;
    Ok(a.log.coin_heads == b.log.coin_heads)
}

/// Deliberately broken mechanisms used to calibrate the verifier: each must
/// produce at least one violation on the right corpus.
pub mod controls {
    use serde::{Deserialize, Serialize};

    use crate::error::SchedError;
    use crate::job::JobType;
    use crate::mech::{
        ClairDecision, ClairvoyantMechanism, InstanceParams, NcPolicy, NcReport, QueuedJob,
    };

    /// Clairvoyant FIFO that charges each job its *reported* value per unit
    /// instead of the posted price. Reporting a lower value (while staying
    /// above the admission price) is then strictly profitable.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ValuePricedFifo {
        price: f64,
        horizon: u32,
        machines: u32,
        occupancy: Vec<u32>,
    }

    impl ValuePricedFifo {
        pub fn new(price: f64) -> Self {
            Self { price, horizon: 0, machines: 0, occupancy: Vec::new() }
        }
    }

    impl ClairvoyantMechanism for ValuePricedFifo {
        fn kind(&self) -> &'static str {
            "control-value-priced"
        }

        fn name(&self) -> String {
            format!("control-value-priced:{}", self.price)
        }

        fn init(&mut self, params: &InstanceParams) {
            self.horizon = params.horizon;
            self.machines = params.machines;
            self.occupancy = vec![0; params.horizon as usize + 1];
        }

        fn on_slot_arrivals(&mut self, _t: u32, jobs: &[JobType]) -> Vec<ClairDecision> {
            jobs.iter()
                .map(|job| {
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
                    // Pays what it says it is worth.
                    ClairDecision::Accept { slots, payment: job.value * job.length as f64 }
                })
                .collect()
        }

        fn state_json(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("control state serializes")
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

    /// Clairvoyant FIFO that serves each slot's batch highest value first
    /// instead of in order-key order: a job arriving in the same slot but
    /// later in the order can displace an earlier one.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct BatchGreedyFifo {
        price: f64,
        horizon: u32,
        machines: u32,
        occupancy: Vec<u32>,
    }

    impl BatchGreedyFifo {
        pub fn new(price: f64) -> Self {
            Self { price, horizon: 0, machines: 0, occupancy: Vec::new() }
        }
    }

    impl ClairvoyantMechanism for BatchGreedyFifo {
        fn kind(&self) -> &'static str {
            "control-batch-greedy"
        }

        fn name(&self) -> String {
            format!("control-batch-greedy:{}", self.price)
        }

        fn init(&mut self, params: &InstanceParams) {
            self.horizon = params.horizon;
            self.machines = params.machines;
            self.occupancy = vec![0; params.horizon as usize + 1];
        }

        fn on_slot_arrivals(&mut self, _t: u32, jobs: &[JobType]) -> Vec<ClairDecision> {
            let mut order: Vec<usize> = (0..jobs.len()).collect();
            order.sort_by(|&a, &b| {
                jobs[b].value.partial_cmp(&jobs[a].value).expect("finite values")
            });
            let mut decisions = vec![ClairDecision::reject(); jobs.len()];
            for idx in order {
                let job = &jobs[idx];
                if job.value < self.price {
                    continue;
                }
                let hi = job.deadline.min(self.horizon);
                let free: Vec<u32> = (job.arrival..=hi)
                    .filter(|&t| self.occupancy[t as usize] < self.machines)
                    .collect();
                if (free.len() as u32) < job.length {
                    continue;
                }
                let slots: Vec<u32> = free.into_iter().take(job.length as usize).collect();
                for &t in &slots {
                    self.occupancy[t as usize] += 1;
                }
                decisions[idx] =
                    ClairDecision::Accept { slots, payment: self.price * job.length as f64 };
            }
            decisions
        }

        fn state_json(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("control state serializes")
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

    /// Non-clairvoyant FIFO that reprices at completion based on how many
    /// jobs have been admitted by then, so jobs arriving after a job started
    /// change what it pays.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct RepricingFifo {
        price: f64,
        admitted: u32,
        queue: std::collections::VecDeque<QueuedJob>,
    }

    impl RepricingFifo {
        pub fn new(price: f64) -> Self {
            Self { price, admitted: 0, queue: Default::default() }
        }
    }

    impl NcPolicy for RepricingFifo {
        fn kind(&self) -> &'static str {
            "control-repricing"
        }

        fn name(&self) -> String {
            format!("control-repricing:{}", self.price)
        }

        fn fresh(&self) -> Box<dyn NcPolicy> {
            Box::new(RepricingFifo::new(self.price))
        }

        fn clone_box(&self) -> Box<dyn NcPolicy> {
            Box::new(self.clone())
        }

        fn on_arrival(&mut self, _t: u32, report: &NcReport) -> bool {
            if report.value < self.price {
                return false;
            }
            self.admitted += 1;
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

        fn completion_payment(&self, job: &QueuedJob, length: u32, _t: u32) -> f64 {
            // Depends on admissions that happened after this job arrived.
            job.unit_price * length as f64 + 0.01 * self.admitted as f64
        }

        fn state_json(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("control state serializes")
        }
    }

    /// A combiner whose "coins" are derived from the job reports: the heads
    /// schedule changes when any report changes, violating
    /// report-independence.
    pub fn report_seeded_heads(inst: &crate::job::Instance, gamma: f64) -> Vec<u32> {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let mut hasher = DefaultHasher::new();
        for j in inst.jobs() {
            j.id.hash(&mut hasher);
            j.arrival.hash(&mut hasher);
            j.deadline.hash(&mut hasher);
            j.value.to_bits().hash(&mut hasher);
        }
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hasher.finish());
        (1..=inst.horizon).filter(|_| rng.random_bool(gamma)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job::Bounds;

    fn grid() -> MisreportGrid {
        MisreportGrid::default()
    }

    fn two_job_instance() -> Instance {
        Instance::new(
            vec![JobType::new(0, 1, 4, 2, 3.0), JobType::new(1, 2, 5, 2, 2.0)],
            8,
            1,
            Bounds { v_max: 4.0, d_max: 4, l_max: 3 },
        )
    }

    #[test]
    fn ppf_is_truthful_on_a_small_instance() {
        let inst = two_job_instance();
        let report = check_truthful(&ClairSpec::ppf(1.0), &inst, &grid(), 100_000).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert!(!report.partial);
    }

    #[test]
    fn value_priced_control_is_caught() {
        let inst = two_job_instance();
        let spec = ClairSpec::ppf(1.0);
        let _ = spec;
        struct Control;
        impl Runnable for Control {
            fn setting(&self) -> Setting {
                Setting::Clairvoyant
            }
            fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
                let mut mech = controls::ValuePricedFifo::new(1.0);
                Ok(run_clairvoyant(&mut mech, inst, 1)?.alloc)
            }
            fn label(&self) -> String {
                "control-value-priced".into()
            }
        }
        let report = check_truthful(&Control, &inst, &grid(), 100_000).unwrap();
        assert!(!report.violations.is_empty());
        // The profitable lie is reporting a lower value.
        assert!(report
            .violations
            .iter()
            .any(|v| v.misreport.value < v.true_type.value));
    }

    #[test]
    fn reported_violations_replay_bit_exactly() {
        let inst = two_job_instance();
        struct Control;
        impl Runnable for Control {
            fn setting(&self) -> Setting {
                Setting::Clairvoyant
            }
            fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
                let mut mech = controls::ValuePricedFifo::new(1.0);
                Ok(run_clairvoyant(&mut mech, inst, 1)?.alloc)
            }
            fn label(&self) -> String {
                "control-value-priced".into()
            }
        }
        let report = check_truthful(&Control, &inst, &grid(), 100_000).unwrap();
        assert!(!report.violations.is_empty());
        for v in &report.violations {
            let truth = utility(
                &v.true_type,
                &Control.run(&inst).unwrap(),
                Control.run(&inst).unwrap().outcome(v.job).payment,
            );
            let lied_alloc = Control.run(&inst.with_report(v.job, v.misreport)).unwrap();
            let lie = utility(&v.true_type, &lied_alloc, lied_alloc.outcome(v.job).payment);
            assert_eq!(truth, v.truthful_utility);
            assert_eq!(lie, v.lying_utility);
        }
    }

    #[test]
    fn batch_greedy_control_breaks_order_respecting() {
        // Two same-slot arrivals on one machine: the greedy control serves
        // the higher value first regardless of the order key.
        let inst = Instance::new(
            vec![JobType::new(0, 2, 2, 1, 1.0), JobType::new(1, 2, 2, 1, 3.0)],
            6,
            1,
            Bounds { v_max: 4.0, d_max: 2, l_max: 2 },
        );
        struct Control;
        impl Runnable for Control {
            fn setting(&self) -> Setting {
                Setting::Clairvoyant
            }
            fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
                let mut mech = controls::BatchGreedyFifo::new(1.0);
                Ok(run_clairvoyant(&mut mech, inst, 1)?.alloc)
            }
            fn label(&self) -> String {
                "control-batch-greedy".into()
            }
        }
        let (violations, _) = check_order_respecting(&Control, &inst, 10_000).unwrap();
        assert!(!violations.is_empty());
        let (clean, _) = check_order_respecting(&ClairSpec::ppf(1.0), &inst, 10_000).unwrap();
        assert!(clean.is_empty());
    }

    #[test]
    fn repricing_control_breaks_order_respecting() {
        let inst = Instance::new(
            vec![JobType::new(0, 1, 0, 3, 2.0), JobType::new(1, 3, 1, 1, 2.0)],
            10,
            1,
            Bounds { v_max: 4.0, d_max: 2, l_max: 3 },
        );
        let broken = NcSpecControl;
        let (violations, _) = check_order_respecting(&broken, &inst, 10_000).unwrap();
        assert!(!violations.is_empty());
        let (clean, _) = check_order_respecting(&NcSpec::ppf(1.0), &inst, 10_000).unwrap();
        assert!(clean.is_empty());
    }

    struct NcSpecControl;
    impl Runnable for NcSpecControl {
        fn setting(&self) -> Setting {
            Setting::NonClairvoyant
        }
        fn run(&self, inst: &Instance) -> Result<Allocation, SchedError> {
            use crate::mech::{InstanceParams, NcEngine, NcReport};
            let params = InstanceParams::of(inst);
            let mut engine = NcEngine::new(params, Box::new(controls::RepricingFifo::new(1.0)));
            let arrivals = inst.arrivals_by_slot();
            let lengths: std::collections::BTreeMap<u32, u32> =
                inst.jobs().iter().map(|j| (j.id, j.length)).collect();
            for t in 1..=inst.horizon {
                let slot: Vec<NcReport> = arrivals
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
                    .unwrap_or_default();
                engine.step(t, Vec::new(), &slot, &|id| {
                    lengths.get(&id).copied().unwrap_or(1)
                });
            }
            Ok(engine.finish().0)
        }
        fn label(&self) -> String {
            "control-repricing".into()
        }
    }

    #[test]
    fn budget_exhaustion_sets_partial_flag() {
        let inst = two_job_instance();
        let report = check_truthful(&ClairSpec::ppf(1.0), &inst, &grid(), 3).unwrap();
        assert!(report.partial);
    }
}
