//! Subcommand implementations. Every command is deterministic in its
//! arguments and seeds; regret cells run in parallel but rows are written in
//! sorted order, so outputs are byte-stable.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use osched_core::combiners::{
    ftbs_run, fts_run, restart_benchmark, tuned_gamma, ExpertsChoice, FtbsConfig, FtsConfig,
};
use osched_core::instances::{
    gen_clairvoyant_lb, gen_nc_lb, gen_random_clairvoyant, gen_random_nonclairvoyant,
    gen_stochastic, gen_syncing_example, nc_lb_expected_round_values, nc_lb_switch_forfeits,
    read_instance, write_instance, LossSequence, StochasticSpec,
};
use osched_core::mech::{
    parse_descriptor, run_clairvoyant, run_nonclairvoyant, ClairSpec, MechanismHandle, NcSpec,
};
use osched_core::truthcheck::{check_order_respecting, check_truthful, MisreportGrid, Runnable};
use osched_core::{validate_instance, Instance, SchedError, Setting};

type CmdResult = Result<bool, Box<dyn std::error::Error>>;

/// Resolve an output path against `OSCHED_OUT_DIR` for bare file names.
fn resolve_out(path: &Path) -> PathBuf {
    if path.components().count() == 1 {
        if let Ok(dir) = std::env::var("OSCHED_OUT_DIR") {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

/// Parse `1..50`, `1..=50`, `7`, or `1,4,9` into an explicit seed list.
fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("cannot parse seed list `{spec}`");
    if let Some((lo, hi)) = spec.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: u64 = lo.parse().map_err(|_| bad())?;
        let hi: u64 = hi.parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    match s {
        "clairvoyant" | "clair" => Ok(Setting::Clairvoyant),
        "nonclairvoyant" | "nc" => Ok(Setting::NonClairvoyant),
        other => Err(format!("unknown setting `{other}`")),
    }
}

#[derive(Args)]
pub struct GenArgs {
    /// Instance kind: clb, nclb, syncing, or stoch.
    #[arg(long)]
    kind: String,
    /// Rounds (clb, nclb) or horizon (syncing).
    #[arg(long, default_value_t = 128)]
    rounds: u32,
    #[arg(long, default_value_t = 20)]
    horizon: u32,
    /// Loss file for nclb (one `loss1 loss2` pair per line); independent
    /// Bernoulli(1/2) losses are drawn from the seed when omitted.
    #[arg(long)]
    losses: Option<PathBuf>,
    /// Stochastic spec JSON file (stoch).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Deadline semantics for the syncing example.
    #[arg(long, default_value = "clairvoyant", value_parser = parse_setting)]
    setting: Setting,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

pub fn gen(args: GenArgs) -> CmdResult {
    let inst = match args.kind.as_str() {
        "clb" => gen_clairvoyant_lb(args.rounds, args.seed),
        "nclb" => {
            let losses = match &args.losses {
                Some(path) => LossSequence::read(path)?,
                None => LossSequence::bernoulli(args.rounds as usize, 0.5, args.seed ^ 0x10557),
            };
            gen_nc_lb(&losses, args.seed)
        }
        "syncing" => gen_syncing_example(args.horizon, args.setting),
        "stoch" => {
            let path = args.spec.ok_or("stoch needs --spec <json file>")?;
            let spec: StochasticSpec = serde_json::from_reader(std::fs::File::open(path)?)?;
            gen_stochastic(&spec, args.seed)?
        }
        other => return Err(format!("unknown kind `{other}`").into()),
    };
    let out = resolve_out(&args.out);
    write_instance(&inst, &out)?;
    println!("wrote {} jobs, horizon {}, to {}", inst.jobs().len(), inst.horizon, out.display());
    Ok(true)
}

#[derive(Args)]
pub struct RunArgs {
    /// Mechanism descriptor, e.g. `ppf:1` or `ppf:price=2:nonclairvoyant`.
    #[arg(long)]
    mech: String,
    /// Instance file path, or the built-in `syncing` example.
    #[arg(long)]
    instance: String,
    /// Slot at which the mechanism comes online.
    #[arg(long, default_value_t = 1)]
    start: u32,
    #[arg(long, default_value_t = 20)]
    horizon: u32,
    /// Run the truthful switch from --mech to this mechanism instead.
    #[arg(long)]
    switch_to: Option<String>,
    /// Slot at which the switch takes effect.
    #[arg(long, default_value_t = 8)]
    switch_at: u32,
    /// Write the switch's replacement audit (`job replaced replacement`).
    #[arg(long)]
    audit: Option<PathBuf>,
}

pub fn run(args: RunArgs) -> CmdResult {
    let handle = parse_descriptor(&args.mech)?;
    let inst = if args.instance == "syncing" {
        gen_syncing_example(args.horizon, handle.setting())
    } else {
        read_instance(Path::new(&args.instance), handle.setting())?
    };
    let issues = validate_instance(&inst, handle.setting());
    if !issues.is_empty() {
        return Err(format!("invalid instance: {}", issues[0]).into());
    }
    let (name, total, served, payments) = match (&handle, &args.switch_to) {
        (MechanismHandle::Clairvoyant(a), Some(to)) => {
            let MechanismHandle::Clairvoyant(b) = parse_descriptor(to)? else {
                return Err("the switch target must be clairvoyant too".into());
            };
            let run = osched_core::switching::run_switch(a, &b, args.switch_at, &inst)?;
            if let Some(path) = &args.audit {
                let mut file = std::fs::File::create(resolve_out(path))?;
                for r in &run.audit.replacements {
                    writeln!(file, "{} {} {}", r.job, r.replaced, r.replacement)?;
                }
            }
            let served = osched_core::served_jobs(&run.c.alloc, &inst)?.len();
            let paid: f64 = run.c.alloc.payments().values().sum();
            let name = format!("switch({}->{}@{})", a.name(), b.name(), args.switch_at);
            (name, run.c.total, served, paid)
        }
        (MechanismHandle::NonClairvoyant(a), Some(to)) => {
            let MechanismHandle::NonClairvoyant(b) = parse_descriptor(to)? else {
                return Err("the switch target must be non-clairvoyant too".into());
            };
            let spec =
                osched_core::switching::switch_nonclairvoyant(a.clone(), b.clone(), args.switch_at);
            let out = run_nonclairvoyant(&spec, &inst, args.start)?;
            let served = osched_core::served_jobs(&out.alloc, &inst)?.len();
            let paid: f64 = out.alloc.payments().values().sum();
            (spec.name(), out.total, served, paid)
        }
        (_, None) => {
            let out = osched_core::mech::run_handle(&handle, &inst, args.start)?;
            let served = osched_core::served_jobs(&out.alloc, &inst)?.len();
            let paid: f64 = out.alloc.payments().values().sum();
            (handle.name(), out.total, served, paid)
        }
    };
    println!(
        "mechanism {name} on {} ({} jobs): welfare {total}, served {served}, payments {payments}",
        args.instance,
        inst.jobs().len()
    );
    Ok(true)
}

#[derive(Args)]
pub struct RegretArgs {
    /// `fts` (clairvoyant) or `ftbs` (non-clairvoyant).
    #[arg(long)]
    combiner: String,
    /// Comma-separated roster of mechanism descriptors, e.g. `ppf:1,ppf:2`.
    #[arg(long)]
    roster: String,
    /// Instance source: `clb`, `nclb`, or `stoch` (with --spec).
    #[arg(long, default_value = "clb")]
    gen: String,
    /// Stochastic spec JSON (with --gen stoch).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Comma-separated horizons.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    horizons: Vec<u32>,
    /// Seed list, e.g. `1..50` or `3,5,9`.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Heads probability for ftbs: a number or `auto` for the tuned formula.
    #[arg(long, default_value = "auto")]
    gamma: String,
    /// Monte Carlo samples for the random-restarting benchmark (ftbs).
    #[arg(long, default_value_t = 16)]
    samples: u32,
    /// Learner descriptor: `auto`, `lazy-fpl`, `lazy-fpl:C=<cost>`,
    /// `fixed:<index>` (fts), or `exp3:doubling` (ftbs).
    #[arg(long, default_value = "auto")]
    learner: String,
    /// Also write per-run event records (`T seed slot kind arm value`).
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_experts_learner(desc: &str, seed: u64) -> Result<ExpertsChoice, SchedError> {
    if desc == "auto" || desc == "lazy-fpl" {
        return Ok(ExpertsChoice::Lazy { seed, switching_cost: None });
    }
    if let Some(cost) = desc.strip_prefix("lazy-fpl:C=") {
        let cost = cost
            .parse()
            .map_err(|_| SchedError::Descriptor(desc.into(), "bad switching cost".into()))?;
        return Ok(ExpertsChoice::Lazy { seed, switching_cost: Some(cost) });
    }
    if let Some(idx) = desc.strip_prefix("fixed:") {
        let idx = idx
            .parse()
            .map_err(|_| SchedError::Descriptor(desc.into(), "bad index".into()))?;
        return Ok(ExpertsChoice::Fixed(idx));
    }
    Err(SchedError::Descriptor(desc.into(), "unknown experts learner".into()))
}

struct RegretRow {
    horizon: u32,
    seed: u64,
    gamma: f64,
    welfare: f64,
    per_mech: Vec<f64>,
    opt: f64,
    events: String,
}

fn clair_roster(handles: &[MechanismHandle]) -> Result<Vec<ClairSpec>, SchedError> {
    handles
        .iter()
        .map(|h| match h {
            MechanismHandle::Clairvoyant(spec) => Ok(spec.clone()),
            MechanismHandle::NonClairvoyant(_) => Err(SchedError::Descriptor(
                h.name(),
                "fts needs clairvoyant roster members".into(),
            )),
        })
        .collect()
}

fn nc_roster(handles: &[MechanismHandle]) -> Vec<NcSpec> {
    handles
        .iter()
        .map(|h| match h {
            MechanismHandle::NonClairvoyant(spec) => spec.clone(),
            // Bare `ppf:p` descriptors default to clairvoyant; reuse the
            // price for the non-clairvoyant variant.
            MechanismHandle::Clairvoyant(ClairSpec::Ppf { price }) => NcSpec::ppf(*price),
            MechanismHandle::Clairvoyant(_) => unreachable!("descriptors parse to ppf"),
        })
        .collect()
}

pub fn regret(args: RegretArgs) -> CmdResult {
    let handles: Result<Vec<MechanismHandle>, _> =
        args.roster.split(',').map(parse_descriptor).collect();
    let handles = handles?;
    if handles.is_empty() {
        return Err("roster is empty".into());
    }
    let seeds = parse_seeds(&args.seeds)?;
    let mut cells: Vec<(u32, u64)> = Vec::new();
    for &t in &args.horizons {
        for &seed in &seeds {
            cells.push((t, seed));
        }
    }

    let stoch_spec: Option<StochasticSpec> = match &args.spec {
        Some(path) => Some(serde_json::from_reader(std::fs::File::open(path)?)?),
        None => None,
    };

    let rows: Result<Vec<RegretRow>, SchedError> = cells
        .par_iter()
        .map(|&(t, seed)| regret_cell(&args, &handles, stoch_spec.as_ref(), t, seed))
        .collect();
    let mut rows = rows?;
    rows.sort_by_key(|r| (r.horizon, r.seed));

    let out = resolve_out(&args.out);
    let mut file = std::fs::File::create(&out)?;
    let mech_cols: Vec<String> =
        (0..handles.len()).map(|i| format!("mech{i}")).collect();
    writeln!(
        file,
        "combiner,gen,T,seed,gamma,welfare,{},opt,regret",
        mech_cols.join(",")
    )?;
    for r in &rows {
        let per_mech: Vec<String> = r.per_mech.iter().map(f64::to_string).collect();
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{}",
            args.combiner,
            args.gen,
            r.horizon,
            r.seed,
            r.gamma,
            r.welfare,
            per_mech.join(","),
            r.opt,
            r.opt - r.welfare
        )?;
    }
    if let Some(events_path) = &args.events {
        let mut events_file = std::fs::File::create(resolve_out(events_path))?;
        for r in &rows {
            events_file.write_all(r.events.as_bytes())?;
        }
    }
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(true)
}

fn render_events(log: &osched_core::combiners::RunLog, t: u32, seed: u64) -> String {
    let mut text = String::new();
    for f in &log.batch_feeds {
        text.push_str(&format!("{t} {seed} {} feed {} {}\n", f.heads_at, f.arm, f.total));
    }
    for e in &log.events {
        text.push_str(&format!(
            "{t} {seed} {} {} {} {}\n",
            e.requested_at, e.kind, e.arm, e.effective_at
        ));
    }
    text
}

fn make_instance(
    args: &RegretArgs,
    spec: Option<&StochasticSpec>,
    setting: Setting,
    t: u32,
    seed: u64,
) -> Result<Instance, SchedError> {
    match args.gen.as_str() {
        "clb" => Ok(gen_clairvoyant_lb(t / 2, seed.wrapping_add((t as u64) << 20))),
        "nclb" => {
            let rounds = (t.saturating_sub(7) / 8).max(1);
            let losses = LossSequence::bernoulli(
                rounds as usize,
                0.5,
                seed.wrapping_add(0xA5A5).wrapping_add((t as u64) << 20),
            );
            Ok(gen_nc_lb(&losses, seed ^ 0x77))
        }
        "stoch" => {
            let base = spec.ok_or_else(|| {
                SchedError::Descriptor("stoch".into(), "needs --spec <json>".into())
            })?;
            let mut sized = base.clone();
            sized.horizon = t;
            sized.setting = setting;
            gen_stochastic(&sized, seed.wrapping_add((t as u64) << 20))
        }
        other => Err(SchedError::Descriptor(other.into(), "unknown generator".into())),
    }
}

fn regret_cell(
    args: &RegretArgs,
    handles: &[MechanismHandle],
    spec: Option<&StochasticSpec>,
    t: u32,
    seed: u64,
) -> Result<RegretRow, SchedError> {
    match args.combiner.as_str() {
        "fts" => {
            let roster = clair_roster(handles)?;
            let inst = make_instance(args, spec, Setting::Clairvoyant, t, seed)?;
            let cfg = FtsConfig {
                roster: roster.clone(),
                learner: parse_experts_learner(&args.learner, seed)?,
            };
            let run = fts_run(&cfg, &inst)?;
            let per_mech: Result<Vec<f64>, SchedError> = roster
                .iter()
                .map(|m| Ok(run_clairvoyant(m.build().as_mut(), &inst, 1)?.total))
                .collect();
            let per_mech = per_mech?;
            let opt = per_mech.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(RegretRow {
                horizon: t,
                seed,
                gamma: 0.0,
                welfare: run.output.total,
                per_mech,
                opt,
                events: render_events(&run.log, t, seed),
            })
        }
        "ftbs" => {
            if args.learner != "auto" && args.learner != "exp3:doubling" {
                return Err(SchedError::Descriptor(
                    args.learner.clone(),
                    "ftbs supports only exp3:doubling".into(),
                ));
            }
            let roster = nc_roster(handles);
            let inst = make_instance(args, spec, Setting::NonClairvoyant, t, seed)?;
            let gamma = match args.gamma.as_str() {
                "auto" => tuned_gamma(inst.bounds.sync_window(), inst.horizon, roster.len()),
                value => value.parse().map_err(|_| {
                    SchedError::Descriptor(value.into(), "gamma must be a number or `auto`".into())
                })?,
            };
            let cfg = FtbsConfig {
                roster: roster.clone(),
                gamma: Some(gamma),
                coin_seed: seed.wrapping_mul(2).wrapping_add(1),
                learner_seed: seed.wrapping_mul(2).wrapping_add(2),
            };
            let run = ftbs_run(&cfg, &inst)?;
            let bench = restart_benchmark(&roster, gamma, &inst, args.samples, seed ^ 0xB0B)?;
            Ok(RegretRow {
                horizon: t,
                seed,
                gamma,
                welfare: run.total,
                per_mech: bench.per_mech.iter().map(|e| e.mean).collect(),
                opt: bench.opt_bar,
                events: render_events(&run.log, t, seed),
            })
        }
        other => Err(SchedError::Descriptor(other.into(), "unknown combiner".into())),
    }
}

#[derive(Args)]
pub struct TruthcheckArgs {
    /// Mechanism descriptor to check (exclusive with --combiner).
    #[arg(long)]
    mech: Option<String>,
    /// Combiner to check: `fts` or `ftbs` (needs --roster).
    #[arg(long)]
    combiner: Option<String>,
    #[arg(long)]
    roster: Option<String>,
    /// Corpus: `small` (50 instances, horizon <= 20).
    #[arg(long, default_value = "small")]
    corpus: String,
    /// Total rerun budget, e.g. `1e6`.
    #[arg(long, default_value = "1e6")]
    budget: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn truthcheck(args: TruthcheckArgs) -> CmdResult {
    let budget = args
        .budget
        .parse::<f64>()
        .map_err(|_| format!("cannot parse budget `{}`", args.budget))? as u64;
    let target: Box<dyn Runnable> = match (&args.mech, &args.combiner) {
        (Some(desc), None) => match parse_descriptor(desc)? {
            MechanismHandle::Clairvoyant(spec) => Box::new(spec),
            MechanismHandle::NonClairvoyant(spec) => Box::new(spec),
        },
        (None, Some(kind)) => {
            let roster_arg = args.roster.as_deref().unwrap_or("ppf:1,ppf:2");
            let handles: Result<Vec<MechanismHandle>, _> =
                roster_arg.split(',').map(parse_descriptor).collect();
            let handles = handles?;
            match kind.as_str() {
                "fts" => Box::new(FtsConfig {
                    roster: clair_roster(&handles)?,
                    learner: ExpertsChoice::Lazy { seed: 11, switching_cost: None },
                }),
                "ftbs" => Box::new(FtbsConfig {
                    roster: nc_roster(&handles),
                    gamma: Some(0.15),
                    coin_seed: 7,
                    learner_seed: 13,
                }),
                other => return Err(format!("unknown combiner `{other}`").into()),
            }
        }
        _ => return Err("pass exactly one of --mech or --combiner".into()),
    };
    if args.corpus != "small" {
        return Err(format!("unknown corpus `{}`", args.corpus).into());
    }

    let grid = MisreportGrid::default();
    let mut reruns = 0u64;
    let mut violations = 0usize;
    let mut order_violations = 0usize;
    for k in 0..50u64 {
        let inst = match target.setting() {
            Setting::Clairvoyant => gen_random_clairvoyant(args.seed + k + 10_000, 20, 2, 8),
            Setting::NonClairvoyant => gen_random_nonclairvoyant(args.seed + k + 20_000, 20, 2, 8),
        };
        let remaining = budget.saturating_sub(reruns);
        if remaining == 0 {
            break;
        }
        let rep = check_truthful(target.as_ref(), &inst, &grid, remaining)?;
        reruns += rep.reruns;
        for v in &rep.violations {
            println!(
                "violation mech={} job={} report={:?} gain={}",
                v.mechanism,
                v.job,
                v.misreport,
                v.lying_utility - v.truthful_utility
            );
        }
        violations += rep.violations.len();
        let (order, n) =
            check_order_respecting(target.as_ref(), &inst, budget.saturating_sub(reruns))?;
        reruns += n;
        for v in &order {
            println!(
                "order-violation mech={} job={} later={} edit={}",
                v.mechanism, v.job, v.later_job, v.edit
            );
        }
        order_violations += order.len();
    }
    println!(
        "{} violations, {} order violations over {reruns} reruns",
        violations, order_violations
    );
    Ok(violations == 0 && order_violations == 0)
}

#[derive(Args)]
pub struct LbVerifyArgs {
    /// `clb` or `nclb`.
    #[arg(long, default_value = "nclb")]
    kind: String,
}

pub fn lb_verify(args: LbVerifyArgs) -> CmdResult {
    match args.kind.as_str() {
        "nclb" => {
            let mut clean = true;
            for l1 in [0.0, 0.25, 0.5, 1.0] {
                for l2 in [0.0, 0.25, 0.5, 1.0] {
                    let (v1, v2) = nc_lb_expected_round_values(l1, l2)?;
                    let ok = v1 == 10.0 - 2.0 * l1 && v2 == 10.0 - 2.0 * l2;
                    clean &= ok;
                    println!(
                        "losses ({l1}, {l2}): per-round values ({v1}, {v2}) {}",
                        if ok { "ok" } else { "MISMATCH" }
                    );
                }
            }
            let forfeits = nc_lb_switch_forfeits()?;
            for f in &forfeits {
                let ok = f.forfeited_value >= 6.0;
                clean &= ok;
                println!(
                    "lengths {:?} switch@{}: forfeits job {} worth {} ({}) {}",
                    f.round_lengths,
                    f.switch_slot,
                    f.forfeited_job,
                    f.forfeited_value,
                    f.case,
                    if ok { "ok" } else { "TOO SMALL" }
                );
            }
            Ok(clean)
        }
        "clb" => {
            let mut clean = true;
            for seed in 0..5 {
                let rounds = 200;
                let inst = gen_clairvoyant_lb(rounds, seed);
                let w1 = run_clairvoyant(ClairSpec::ppf(1.0).build().as_mut(), &inst, 1)?.total;
                let ok = w1 == 3.0 * rounds as f64;
                clean &= ok;
                println!(
                    "seed {seed}: price-1 welfare {w1} (3 per round) {}",
                    if ok { "ok" } else { "MISMATCH" }
                );
                let w2 = run_clairvoyant(ClairSpec::ppf(2.0).build().as_mut(), &inst, 1)?.total;
                let coin_jobs = inst.jobs().iter().filter(|j| j.arrival % 2 == 0).count();
                let ok2 = w2 == 2.0 * rounds as f64 + 2.0 * coin_jobs as f64;
                clean &= ok2;
                println!(
                    "seed {seed}: price-2 welfare {w2} (2/round + 2/coin) {}",
                    if ok2 { "ok" } else { "MISMATCH" }
                );
            }
            Ok(clean)
        }
        other => Err(format!("unknown kind `{other}`").into()),
    }
}
