//! Online mechanism contracts and the posted-pricing-FIFO family.
//!
//! Clairvoyant mechanisms are *prompt*: a job's units and payment are fixed
//! the moment it arrives and never revised. Non-clairvoyant mechanisms run a
//! queue-and-lanes engine and are *order respecting*: a job's outcome is a
//! function of the jobs ahead of it in the arrival order only.

pub mod clair;
pub mod nonclair;

use serde::{Deserialize, Serialize};

use crate::error::SchedError;
use crate::job::{Bounds, Setting};

pub use clair::{
    run_clairvoyant, ClairDecision, ClairvoyantMechanism, PpfClairvoyant, RunOutput,
};
pub use nonclair::{
    run_nonclairvoyant, NcEngine, NcEvent, NcEventRecord, NcPolicy, NcReport, NcRunOutput,
    PpfNonClairvoyant, QueuedJob, SteppedPriceFifo,
};

/// Per-run parameters every mechanism is initialized with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub horizon: u32,
    pub machines: u32,
    pub bounds: Bounds,
}

impl InstanceParams {
    pub fn of(inst: &crate::job::Instance) -> Self {
        Self { horizon: inst.horizon, machines: inst.machines, bounds: inst.bounds }
    }
}

/// Opaque snapshot of a mechanism's state, restorable only into a mechanism
/// of the same kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateToken {
    pub kind: String,
    pub state: serde_json::Value,
}

impl StateToken {
    /// Canonical byte form, used to assert structural state equality.
    pub fn bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state tokens serialize")
    }
}

/// A clonable, resettable blueprint for a mechanism of either contract.
///
/// Handles are cheap descriptions; building one yields a fresh stateful
/// executor, so a roster can be simulated any number of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechanismHandle {
    Clairvoyant(ClairSpec),
    NonClairvoyant(NcSpec),
}

impl MechanismHandle {
    pub fn setting(&self) -> Setting {
        match self {
            MechanismHandle::Clairvoyant(_) => Setting::Clairvoyant,
            MechanismHandle::NonClairvoyant(_) => Setting::NonClairvoyant,
        }
    }

    pub fn name(&self) -> String {
        match self {
            MechanismHandle::Clairvoyant(s) => s.name(),
            MechanismHandle::NonClairvoyant(s) => s.name(),
        }
    }
}

/// Blueprint for a clairvoyant mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClairSpec {
    /// Posted-pricing FIFO: reject below the price, otherwise earliest free
    /// units in the window at `price` per unit.
    Ppf { price: f64 },
    /// Truthful switch from `a` to `b` taking effect at slot `at`.
    Switch { a: Box<ClairSpec>, b: Box<ClairSpec>, at: u32 },
}

impl ClairSpec {
    pub fn ppf(price: f64) -> Self {
        ClairSpec::Ppf { price }
    }

    pub fn name(&self) -> String {
        match self {
            ClairSpec::Ppf { price } => format!("ppf:{price}"),
            ClairSpec::Switch { a, b, at } => {
                format!("switch({}->{}@{at})", a.name(), b.name())
            }
        }
    }

    /// Build a fresh stateful executor.
    pub fn build(&self) -> Box<dyn ClairvoyantMechanism> {
        match self {
            ClairSpec::Ppf { price } => Box::new(PpfClairvoyant::new(*price)),
            ClairSpec::Switch { a, b, at } => {
                Box::new(crate::switching::SwitchClairvoyant::new(a.build(), b.build(), *at))
            }
        }
    }
}

/// Blueprint for a non-clairvoyant mechanism: a base admission policy plus an
/// optional script of restart/switch events interpreted by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NcSpec {
    /// Posted-pricing FIFO with a single flat price.
    Ppf { price: f64 },
    /// Restart the wrapped mechanism at the given slots.
    ScriptedRestarts { inner: Box<NcSpec>, times: Vec<u32> },
    /// Independent random restarts with probability `gamma` per slot, coins
    /// drawn from `seed` only.
    RandomRestarts { inner: Box<NcSpec>, gamma: f64, seed: u64 },
    /// Truthful switch from `a` to `b` taking effect at slot `at`.
    Switch { a: Box<NcSpec>, b: Box<NcSpec>, at: u32 },
}

impl NcSpec {
    pub fn ppf(price: f64) -> Self {
        NcSpec::Ppf { price }
    }

    pub fn name(&self) -> String {
        match self {
            NcSpec::Ppf { price } => format!("ppf-nc:{price}"),
            NcSpec::ScriptedRestarts { inner, times } => {
                format!("{}+restarts{times:?}", inner.name())
            }
            NcSpec::RandomRestarts { inner, gamma, seed } => {
                format!("{}+restarts(gamma={gamma},seed={seed})", inner.name())
            }
            NcSpec::Switch { a, b, at } => format!("switch({}->{}@{at})", a.name(), b.name()),
        }
    }

    /// The base admission policy the run starts with.
    pub fn base_policy(&self) -> Box<dyn NcPolicy> {
        match self {
            NcSpec::Ppf { price } => Box::new(PpfNonClairvoyant::new(*price)),
            NcSpec::ScriptedRestarts { inner, .. } | NcSpec::RandomRestarts { inner, .. } => {
                inner.base_policy()
            }
            NcSpec::Switch { a, .. } => a.base_policy(),
        }
    }

    /// Flatten the spec into the fixed event script the engine replays.
    /// Random restarts are expanded separately at run time (they need a coin
    /// stream, not a script).
    pub fn scripted_events(&self) -> Vec<(u32, NcEvent)> {
        let mut events = Vec::new();
        self.collect_events(&mut events);
        events.sort_by_key(|&(t, _)| t);
        events
    }

    fn collect_events(&self, out: &mut Vec<(u32, NcEvent)>) {
        match self {
            NcSpec::Ppf { .. } => {}
            NcSpec::ScriptedRestarts { inner, times } => {
                inner.collect_events(out);
                for &t in times {
                    out.push((t, NcEvent::Restart));
                }
            }
            NcSpec::RandomRestarts { inner, .. } => inner.collect_events(out),
            NcSpec::Switch { a, b, at } => {
                a.collect_events(out);
                out.push((*at, NcEvent::SwitchTo(b.base_policy())));
            }
        }
    }

    /// Restart coin configuration, if this spec carries one.
    pub fn random_restarts(&self) -> Option<(f64, u64)> {
        match self {
            NcSpec::RandomRestarts { gamma, seed, .. } => Some((*gamma, *seed)),
            NcSpec::ScriptedRestarts { inner, .. } => inner.random_restarts(),
            NcSpec::Switch { a, .. } => a.random_restarts(),
            NcSpec::Ppf { .. } => None,
        }
    }
}

/// Run any mechanism handle over an instance, starting it at slot `start`.
pub fn run_handle(
    handle: &MechanismHandle,
    inst: &crate::job::Instance,
    start: u32,
) -> Result<RunOutput, SchedError> {
    match handle {
        MechanismHandle::Clairvoyant(spec) => run_clairvoyant(spec.build().as_mut(), inst, start),
        MechanismHandle::NonClairvoyant(spec) => {
            let out = run_nonclairvoyant(spec, inst, start)?;
            Ok(RunOutput { alloc: out.alloc, series: out.series, total: out.total })
        }
    }
}

/// Parse a mechanism descriptor such as `ppf:1`, `ppf:price=2.0`, or
/// `ppf:price=1.0:nonclairvoyant`.
pub fn parse_descriptor(desc: &str) -> Result<MechanismHandle, SchedError> {
    let err = |m: &str| SchedError::Descriptor(desc.to_string(), m.to_string());
    let parts: Vec<&str> = desc.split(':').collect();
    if parts.is_empty() || parts[0] != "ppf" {
        return Err(err("expected kind `ppf`"));
    }
    let mut price: Option<f64> = None;
    let mut setting = Setting::Clairvoyant;
    for part in &parts[1..] {
        if let Some(v) = part.strip_prefix("price=") {
            price = Some(v.parse().map_err(|_| err("bad price"))?);
        } else if *part == "clairvoyant" || *part == "clair" {
            setting = Setting::Clairvoyant;
        } else if *part == "nonclairvoyant" || *part == "nc" {
            setting = Setting::NonClairvoyant;
        } else if let Ok(v) = part.parse::<f64>() {
            price = Some(v);
        } else {
            return Err(err("unrecognized field"));
        }
    }
    let price = price.ok_or_else(|| err("missing price"))?;
    if price < 0.0 || !price.is_finite() {
        return Err(err("price must be nonnegative"));
    }
    Ok(match setting {
        Setting::Clairvoyant => MechanismHandle::Clairvoyant(ClairSpec::ppf(price)),
        Setting::NonClairvoyant => MechanismHandle::NonClairvoyant(NcSpec::ppf(price)),
    })
}
