//! Policy evaluation, Monte Carlo validation of the rounding, machine-checked guarantees and
//! deterministic reports.
//!
//! ALG is computed exactly from the fractional solution, since the rounding realizes every
//! marginal exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::benchmark::{int_objective, opt_bounds, solve_fluid, solve_int, solve_water_fill_lp, IntSolution};
use crate::error::{Error, Result};
use crate::fixed_cap::{run_fixed, FixedRun};
use crate::generators::{fcs_parameters, parse_member_id, Family};
use crate::instance::{feasibility_report, least_utility, FeasibilityMode, FractionalSolution, Instance, EPSILON};
use crate::math::{ceil_log2, floor_root, fmt_sig};
use crate::rounding::{selection_measure, Rounder};
use crate::stats::{instance_stats, InstanceStats};
use crate::unknown_cap::{run_unknown, water_level, UnknownOptions, UnknownRun, UnknownVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Fixed,
    UcHybrid,
    UcMyopic,
    UcForward,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Fixed,
        PolicyKind::UcHybrid,
        PolicyKind::UcMyopic,
        PolicyKind::UcForward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fixed => "fixed",
            PolicyKind::UcHybrid => "uc-hybrid",
            PolicyKind::UcMyopic => "uc-myopic",
            PolicyKind::UcForward => "uc-forward",
        }
    }

    pub fn unknown_variant(self) -> Option<UnknownVariant> {
        match self {
            PolicyKind::Fixed => None,
            PolicyKind::UcHybrid => Some(UnknownVariant::Hybrid),
            PolicyKind::UcMyopic => Some(UnknownVariant::Myopic),
            PolicyKind::UcForward => Some(UnknownVariant::Forward),
        }
    }

    /// The feasibility discipline of the policy's scenario.
    pub fn feasibility_mode(self) -> FeasibilityMode {
        match self {
            PolicyKind::Fixed => FeasibilityMode::Total,
            _ => FeasibilityMode::PerRoundPrefix,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown policy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunFlags {
    pub topup: bool,
    pub continue_after_cap: bool,
}

impl RunFlags {
    fn unknown_options(self) -> UnknownOptions {
        UnknownOptions {
            topup: self.topup,
            continue_after_cap: self.continue_after_cap,
        }
    }
}

#[derive(Clone, Debug)]
pub enum PolicyDetail {
    Fixed(FixedRun),
    Unknown(UnknownRun),
}

#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub x: FractionalSolution,
    pub detail: PolicyDetail,
}

/// Streams the instance through the policy. Unknown-capacity policies need `a`.
pub fn run_policy(inst: &Instance, kind: PolicyKind, seed: u64, flags: RunFlags) -> Result<PolicyRun> {
    match kind.unknown_variant() {
        None => {
            let run = run_fixed(inst, seed)?;
            Ok(PolicyRun {
                x: run.x.clone(),
                detail: PolicyDetail::Fixed(run),
            })
        }
        Some(variant) => {
            let run = run_unknown(inst, variant, flags.unknown_options())?;
            Ok(PolicyRun {
                x: run.x.clone(),
                detail: PolicyDetail::Unknown(run),
            })
        }
    }
}

/// `ALG / OPT`, defined as one (and flagged degenerate) when `OPT = 0`.
pub fn competitive_ratio(alg: f64, opt: f64) -> (f64, bool) {
    if opt <= 0.0 {
        (1.0, true)
    } else {
        (alg / opt, false)
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub instance_id: String,
    pub policy: PolicyKind,
    pub utilities: Vec<f64>,
    pub lu: f64,
    pub opt: f64,
    pub ratio: f64,
    pub degenerate: bool,
    pub feasible: bool,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn to_json(&self) -> Value {
        json!({
            "instance": self.instance_id,
            "policy": self.policy.name(),
            "utilities": self.utilities.iter().map(|&u| num(u)).collect::<Vec<_>>(),
            "LU": num(self.lu),
            "OPT": num(self.opt),
            "ratio": num(self.ratio),
            "degenerate": self.degenerate,
            "feasible": self.feasible,
        })
    }
}

/// Runs a policy, then measures it against the fluid optimum.
pub fn evaluate_policy(
    inst: &Instance,
    id: &str,
    kind: PolicyKind,
    seed: u64,
    flags: RunFlags,
) -> Result<(RunReport, FractionalSolution)> {
    let opt = solve_fluid(inst)?.value;
    evaluate_with_opt(inst, id, kind, seed, flags, opt)
}

fn evaluate_with_opt(
    inst: &Instance,
    id: &str,
    kind: PolicyKind,
    seed: u64,
    flags: RunFlags,
    opt: f64,
) -> Result<(RunReport, FractionalSolution)> {
    let start = Instant::now();
    let run = run_policy(inst, kind, seed, flags)?;
    let wall_time = start.elapsed();
    let (lu, u) = least_utility(inst, &run.x)?;
    let feasible = crate::instance::validate_feasibility(inst, &run.x, kind.feasibility_mode());
    let (ratio, degenerate) = competitive_ratio(lu, opt);
    Ok((
        RunReport {
            instance_id: id.to_string(),
            policy: kind,
            utilities: u.0,
            lu,
            opt,
            ratio,
            degenerate,
            feasible,
            wall_time,
        },
        run.x,
    ))
}

#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub frequencies: Vec<Vec<f64>>,
    pub max_selected: usize,
    pub mean_utilities: Vec<f64>,
    /// Largest `|freq - x| / (5 sqrt(x(1-x)/M) + 1/M)` over candidates; at most one when every
    /// frequency is within its binomial band.
    pub worst_band_ratio: f64,
    pub capacity_respected: bool,
}

impl MonteCarloReport {
    pub fn within_bands(&self) -> bool {
        self.worst_band_ratio <= 1.0
    }

    pub fn to_json(&self) -> Value {
        json!({
            "trials": self.trials,
            "max_selected": self.max_selected,
            "capacity_respected": self.capacity_respected,
            "worst_band_ratio": num(self.worst_band_ratio),
            "within_bands": self.within_bands(),
            "mean_utilities": self.mean_utilities.iter().map(|&u| num(u)).collect::<Vec<_>>(),
            "frequencies": self.frequencies.iter().map(|r| r.iter().map(|&f| num(f)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

/// Rounds `x` with `trials` independently seeded rounders.
pub fn monte_carlo(inst: &Instance, x: &FractionalSolution, trials: usize, seed: u64) -> Result<MonteCarloReport> {
    x.check_shape(inst)?;
    let d = inst.d();
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<Vec<u64>> = x.rounds().iter().map(|r| vec![0; r.len()]).collect();
    let mut dim_counts = vec![0u64; d];
    let mut max_selected = 0;
    for _ in 0..trials {
        let mut rounder = Rounder::new(seeds.gen());
        for xi in x.rounds() {
            rounder.process_round(xi)?;
        }
        max_selected = max_selected.max(rounder.selected().len());
        for &(i, j) in rounder.selected() {
            counts[i][j] += 1;
            for &k in inst.rounds()[i].candidates()[j].indices() {
                dim_counts[k] += 1;
            }
        }
    }
    let m = trials.max(1) as f64;
    let frequencies: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|&n| n as f64 / m).collect())
        .collect();
    let mut worst_band_ratio: f64 = 0.0;
    for (fi, xi) in frequencies.iter().zip(x.rounds()) {
        for (&f, &xj) in fi.iter().zip(xi) {
            let p = xj.clamp(0.0, 1.0);
            let band = 5.0 * (p * (1.0 - p) / m).sqrt() + 1.0 / m;
            worst_band_ratio = worst_band_ratio.max((f - p).abs() / band);
        }
    }
    let mean_utilities = dim_counts
        .iter()
        .zip(inst.c())
        .map(|(&n, &ck)| ck * n as f64 / m)
        .collect();
    Ok(MonteCarloReport {
        trials,
        frequencies,
        max_selected,
        mean_utilities,
        worst_band_ratio,
        capacity_respected: max_selected as u64 <= inst.capacity(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerdictStatus {
    Pass,
    Fail,
    PreconditionUnmet,
}

impl VerdictStatus {
    pub fn name(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::PreconditionUnmet => "precondition_unmet",
        }
    }
}

/// Outcome of one inequality. `slack` is positive when the inequality holds with room; a
/// failure always has `slack < -eps`.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub instance: String,
    pub check: String,
    pub status: VerdictStatus,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl Verdict {
    fn judged(instance: &str, check: &str, lhs: f64, rhs: f64, slack: f64, eps: f64) -> Self {
        let tol = eps * rhs.abs().max(1.0);
        Verdict {
            instance: instance.to_string(),
            check: check.to_string(),
            status: if slack < -tol || slack.is_nan() {
                VerdictStatus::Fail
            } else {
                VerdictStatus::Pass
            },
            lhs,
            rhs,
            slack,
        }
    }

    /// `lhs >= rhs`.
    pub fn at_least(instance: &str, check: &str, lhs: f64, rhs: f64, eps: f64) -> Self {
        Self::judged(instance, check, lhs, rhs, lhs - rhs, eps)
    }

    /// `lhs <= rhs`.
    pub fn at_most(instance: &str, check: &str, lhs: f64, rhs: f64, eps: f64) -> Self {
        Self::judged(instance, check, lhs, rhs, rhs - lhs, eps)
    }

    pub fn unmet(instance: &str, check: &str) -> Self {
        Verdict {
            instance: instance.to_string(),
            check: check.to_string(),
            status: VerdictStatus::PreconditionUnmet,
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack: f64::NAN,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != VerdictStatus::Fail
    }
}

/// Guaranteed ratio of the fixed-capacity policy, `1 / (4 sqrt(d) ceil(log2 d))`, for `d >= 2`.
pub fn fixed_ratio_bound(d: usize) -> Option<f64> {
    (d >= 2).then(|| 1.0 / (4.0 * (d as f64).sqrt() * ceil_log2(d as u64) as f64))
}

/// Guaranteed ratio of the hybrid policy, when every dimension arrives in every round and
/// `n > floor(d^(1/4))`.
pub fn hybrid_ratio_bound(inst: &Instance, stats: &InstanceStats) -> Option<f64> {
    let fb = stats.frak_b?;
    let a = inst.per_round_capacity()? as f64;
    let d = inst.d();
    let n = inst.n();
    let root4 = floor_root(d as u64, 4) as usize;
    if n <= root4 {
        return None;
    }
    let df = d as f64;
    let spread = (stats.delta_lo / stats.delta_up).min((n - root4) as f64 / (fb * n as f64));
    let supply = if stats.b_bar == 0 {
        1.0
    } else {
        (a / stats.b_bar as f64).min(1.0)
    };
    Some(1.0 / (8.0 * fb * df.powf(0.75)) * stats.eta.min(1.0) * spread * supply)
}

/// Guaranteed ratio of the myopic rule on loosely capacitated instances, `1 / (frak_b sqrt(d))`.
pub fn myopic_ratio_bound(inst: &Instance, stats: &InstanceStats) -> Option<f64> {
    let fb = stats.frak_b?;
    stats.loosely_capacitated.then(|| 1.0 / (fb * (inst.d() as f64).sqrt()))
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub eps: f64,
    pub flags: RunFlags,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            eps: EPSILON,
            flags: RunFlags::default(),
        }
    }
}

/// Tolerance for comparing the water-filling level against the LP optimum.
const WATER_FILL_TOLERANCE: f64 = 1e-7;

/// Every per-instance inequality that applies to `inst`.
pub fn verify_instance(inst: &Instance, id: &str, opts: &VerifyOptions) -> Result<Vec<Verdict>> {
    let eps = opts.eps;
    let mut out = Vec::new();
    let opt = solve_fluid(inst)?.value;
    let bounds = opt_bounds(inst);
    let range_slack = (opt - bounds.under).min(bounds.over - opt);
    let range_rhs = if opt - bounds.under <= bounds.over - opt {
        bounds.under
    } else {
        bounds.over
    };
    out.push(Verdict::judged(id, "Lemma1-range", opt, range_rhs, range_slack, eps));

    verify_fixed(inst, id, opt, opts, &mut out)?;
    if inst.per_round_capacity().is_some() {
        verify_unknown(inst, id, opt, opts, &mut out)?;
    }
    Ok(out)
}

fn verify_fixed(inst: &Instance, id: &str, opt: f64, opts: &VerifyOptions, out: &mut Vec<Verdict>) -> Result<()> {
    let eps = opts.eps;
    let run = run_fixed(inst, opts.seed)?;
    out.push(feasibility_verdict(
        inst,
        id,
        "Feasibility-fixed",
        &run.x,
        FeasibilityMode::Total,
        eps,
    )?);
    let (lu, _) = least_utility(inst, &run.x)?;

    match fixed_ratio_bound(inst.d()) {
        Some(bound) if opt > 0.0 => out.push(Verdict::at_least(id, "Thm2-bound", lu / opt, bound, eps)),
        _ => out.push(Verdict::unmet(id, "Thm2-bound")),
    }

    let sqrt_d = (inst.d() as f64).sqrt();
    let best = run.agents.iter().rev().find(|a| a.gamma <= opt * (1.0 + 1e-12));
    match best {
        Some(agent) => {
            let (agent_lu, _) = least_utility(inst, &agent.x)?;
            out.push(Verdict::at_least(
                id,
                "Lemma2-3-agent",
                agent_lu,
                agent.gamma / (2.0 * sqrt_d),
                eps,
            ));
            if agent.y.total() >= inst.capacity() as f64 - eps {
                let (greedy_lu, _) = least_utility(inst, &agent.y)?;
                out.push(Verdict::at_least(
                    id,
                    "Lemma2-greedy",
                    greedy_lu,
                    agent.gamma / sqrt_d,
                    eps,
                ));
            } else {
                out.push(Verdict::unmet(id, "Lemma2-greedy"));
            }
        }
        None => {
            out.push(Verdict::unmet(id, "Lemma2-3-agent"));
            out.push(Verdict::unmet(id, "Lemma2-greedy"));
        }
    }

    let measure = selection_measure(run.x.rounds())?;
    let worst = measure
        .marginals
        .iter()
        .flatten()
        .zip(run.x.values())
        .map(|(m, x)| (m - x).abs())
        .fold(0.0, f64::max);
    out.push(Verdict::at_most(id, "Prop2-marginals", worst, eps, 0.0));
    out.push(Verdict::at_most(
        id,
        "Prop2-capacity",
        measure.max_selected as f64,
        inst.capacity() as f64,
        eps,
    ));
    Ok(())
}

fn verify_unknown(inst: &Instance, id: &str, opt: f64, opts: &VerifyOptions, out: &mut Vec<Verdict>) -> Result<()> {
    let eps = opts.eps;
    let a = inst.per_round_capacity().expect("checked by caller") as f64;
    let d = inst.d();
    let sqrt_d = (d as f64).sqrt();
    let stats = instance_stats(inst)?;
    let base = RunFlags {
        topup: false,
        ..opts.flags
    };
    let run = run_unknown(inst, UnknownVariant::Hybrid, base.unknown_options())?;
    let topped = run_unknown(
        inst,
        UnknownVariant::Hybrid,
        RunFlags { topup: true, ..base }.unknown_options(),
    )?;

    let prefix = FeasibilityMode::PerRoundPrefix;
    out.push(feasibility_verdict(
        inst,
        id,
        "Feasibility-myopic",
        &run.myopic,
        prefix,
        eps,
    )?);
    out.push(feasibility_verdict(
        inst,
        id,
        "Feasibility-forward",
        &run.forward,
        prefix,
        eps,
    )?);
    out.push(feasibility_verdict(
        inst,
        id,
        "Feasibility-hybrid",
        &run.hybrid,
        prefix,
        eps,
    )?);
    out.push(feasibility_verdict(
        inst,
        id,
        "Feasibility-topup",
        &topped.x,
        prefix,
        eps,
    )?);

    let (lu_myopic, _) = least_utility(inst, &run.myopic)?;
    let (lu_forward, _) = least_utility(inst, &run.forward)?;
    let (lu_hybrid, _) = least_utility(inst, &run.hybrid)?;
    let (lu_topped, _) = least_utility(inst, &topped.x)?;
    out.push(Verdict::at_least(id, "Topup-dominance", lu_topped, lu_hybrid, eps));

    let int_solution = IntSolution {
        y: run.y.clone(),
        z: run.z.clone(),
    };
    match int_objective(inst, &int_solution) {
        Ok(value) => {
            out.push(Verdict::at_least(id, "INT-feasible", value, value, eps));
            let supply = if stats.b_bar == 0 {
                1.0
            } else {
                (a / stats.b_bar as f64).min(1.0)
            };
            out.push(Verdict::at_least(
                id,
                "Lemma3ii",
                lu_forward,
                supply / (2.0 * sqrt_d) * value,
                eps,
            ));
        }
        Err(e) => {
            let mut v = Verdict::at_least(id, "INT-feasible", f64::NAN, 0.0, eps);
            v.check = format!("INT-feasible ({e})");
            out.push(v);
            out.push(Verdict::unmet(id, "Lemma3ii"));
        }
    }

    match stats.frak_b {
        Some(fb) if inst.n() > 0 => {
            let g = solve_int(inst, inst.n())?.value;
            out.push(Verdict::at_least(id, "Lemma3i", g, opt / fb, eps));
        }
        _ => out.push(Verdict::unmet(id, "Lemma3i")),
    }
    match myopic_ratio_bound(inst, &stats) {
        Some(bound) => out.push(Verdict::at_least(id, "Lemma4i", lu_myopic, opt * bound, eps)),
        None => out.push(Verdict::unmet(id, "Lemma4i")),
    }
    match hybrid_ratio_bound(inst, &stats) {
        Some(bound) => out.push(Verdict::at_least(id, "Thm3-composite", lu_hybrid, opt * bound, eps)),
        None => out.push(Verdict::unmet(id, "Thm3-composite")),
    }

    let mut worst: f64 = 0.0;
    for (i, round) in inst.rounds().iter().enumerate() {
        let caps: Vec<f64> = round.arrivals(d).iter().map(|&p| p as f64).collect();
        let level = water_level(&run.fill_start[i], &run.z[i], inst.c());
        let optimum = solve_water_fill_lp(&run.fill_start[i], &caps, sqrt_d * a, inst.c())?;
        worst = worst.max((level - optimum).abs());
    }
    out.push(Verdict::at_most(id, "WF-optimality", worst, WATER_FILL_TOLERANCE, 0.0));
    Ok(())
}

fn feasibility_verdict(
    inst: &Instance,
    id: &str,
    check: &str,
    x: &FractionalSolution,
    mode: FeasibilityMode,
    eps: f64,
) -> Result<Verdict> {
    let report = feasibility_report(inst, x, mode, eps)?;
    let slack = x
        .values()
        .map(|v| v.min(1.0 - v))
        .fold(inst.capacity() as f64 - x.total(), f64::min);
    let mut v = Verdict::at_most(id, check, x.total(), inst.capacity() as f64, eps);
    if !report.is_feasible() {
        v.status = VerdictStatus::Fail;
        v.slack = slack.min(-2.0 * eps);
    }
    Ok(v)
}

type Entry<'a> = &'a (String, Instance);

/// Family members grouped by `(family, d)`, keeping only groups with every member present.
fn complete_families(instances: &[(String, Instance)]) -> Vec<(Family, usize, Vec<Entry<'_>>)> {
    let mut groups: BTreeMap<(Family, usize), BTreeMap<usize, Entry<'_>>> = BTreeMap::new();
    for entry in instances {
        if let Some((family, d, index)) = parse_member_id(&entry.0) {
            if family != Family::Random {
                groups.entry((family, d)).or_default().insert(index, entry);
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|((family, d), members)| {
            let expected = match family {
                Family::Fhc => d,
                Family::Fcs if d >= 3 => fcs_parameters(d).0,
                _ => return None,
            };
            let complete = members.len() == expected && members.keys().copied().eq(1..=expected);
            complete.then(|| (family, d, members.into_values().collect()))
        })
        .collect()
}

fn family_label(family: Family, d: usize) -> String {
    format!("{}_d{d}", family.name())
}

/// Policies whose ratio a family's impossibility bound constrains. The first family hides the
/// arrival totals, so it only binds the unknown-capacity scenario.
fn family_policies(family: Family, policies: &[PolicyKind]) -> Vec<PolicyKind> {
    policies
        .iter()
        .copied()
        .filter(|p| family != Family::Fhc || p.unknown_variant().is_some())
        .collect()
}

fn family_bound(family: Family, d: usize) -> (&'static str, f64) {
    match family {
        Family::Fhc => ("FHC-2/d", 2.0 / d as f64),
        _ => ("FCS-512", 512.0 / (d as f64).cbrt()),
    }
}

/// Impossibility witnesses on every complete adversarial family among `instances`.
pub fn verify_families(instances: &[(String, Instance)], opts: &VerifyOptions) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    for (family, d, members) in complete_families(instances) {
        let label = family_label(family, d);
        let opts_needed = match family {
            Family::Fhc => d as f64,
            _ => d as f64 / (8.0 * fcs_parameters(d).0 as f64),
        };
        let opt_check = match family {
            Family::Fhc => "FHC-OPT",
            _ => "FCS-OPT",
        };
        let opts_values = members
            .iter()
            .map(|(_, inst)| solve_fluid(inst).map(|r| r.value))
            .collect::<Result<Vec<_>>>()?;
        for ((id, _), &opt) in members.iter().zip(&opts_values) {
            out.push(Verdict::at_least(id, opt_check, opt, opts_needed, opts.eps));
        }
        let (bound_name, bound) = family_bound(family, d);
        let policies = match family {
            Family::Fhc => vec![PolicyKind::UcHybrid],
            _ => PolicyKind::ALL.to_vec(),
        };
        for policy in policies {
            let mut min_ratio = f64::INFINITY;
            for ((id, inst), &opt) in members.iter().zip(&opts_values) {
                let (report, _) = evaluate_with_opt(inst, id, policy, opts.seed, opts.flags, opt)?;
                min_ratio = min_ratio.min(report.ratio);
            }
            out.push(Verdict::at_most(
                &label,
                &format!("{bound_name}:{}", policy.name()),
                min_ratio,
                bound,
                opts.eps,
            ));
        }
    }
    Ok(out)
}

/// Per-instance checks for every instance followed by the family witnesses.
pub fn verify_inequalities(instances: &[(String, Instance)], opts: &VerifyOptions) -> Result<Vec<Verdict>> {
    let per_instance = instances
        .par_iter()
        .map(|(id, inst)| verify_instance(inst, id, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Verdict> = per_instance.into_iter().flatten().collect();
    out.extend(verify_families(instances, opts)?);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub instance: String,
    pub d: usize,
    pub n: usize,
    pub capacity: u64,
    pub a: Option<u64>,
    pub policy: PolicyKind,
    pub lu: f64,
    pub opt: f64,
    pub ratio: f64,
    pub bound_name: String,
    pub bound_value: f64,
    pub satisfied: bool,
}

pub const REPORT_HEADER: [&str; 12] = [
    "instance",
    "d",
    "n",
    "K",
    "a",
    "policy",
    "LU",
    "OPT",
    "ratio",
    "bound_name",
    "bound_value",
    "satisfied",
];

impl ReportRow {
    fn record(&self) -> [String; 12] {
        [
            self.instance.clone(),
            self.d.to_string(),
            self.n.to_string(),
            self.capacity.to_string(),
            self.a.map(|a| a.to_string()).unwrap_or_default(),
            self.policy.name().to_string(),
            fmt_sig(self.lu),
            fmt_sig(self.opt),
            fmt_sig(self.ratio),
            self.bound_name.clone(),
            fmt_sig(self.bound_value),
            self.satisfied.to_string(),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "instance": self.instance,
            "d": self.d,
            "n": self.n,
            "K": self.capacity,
            "a": self.a,
            "policy": self.policy.name(),
            "LU": num(self.lu),
            "OPT": num(self.opt),
            "ratio": num(self.ratio),
            "bound_name": self.bound_name,
            "bound_value": num(self.bound_value),
            "satisfied": self.satisfied,
        })
    }
}

/// Sort key: family members by `(family, d, index)`, family summaries after their members,
/// anything else by name.
fn row_key(instance: &str) -> (String, usize, usize, String) {
    if let Some((family, d, index)) = parse_member_id(instance) {
        return (family.name().to_string(), d, index, String::new());
    }
    if let Some((family, d)) = instance
        .strip_suffix("_family")
        .and_then(|s| parse_member_id(&format!("{s}_m0")))
        .map(|(f, d, _)| (f, d))
    {
        return (family.name().to_string(), d, usize::MAX, String::new());
    }
    (String::new(), 0, 0, instance.to_string())
}

/// One row per `(instance, policy)` with the policy's guaranteed ratio, plus one row per
/// complete adversarial family and applicable policy with the family-minimum ratio against the
/// impossibility bound.
pub fn competitive_report(
    instances: &[(String, Instance)],
    policies: &[PolicyKind],
    seed: u64,
    flags: RunFlags,
    eps: f64,
) -> Result<Vec<ReportRow>> {
    let per_instance = instances
        .par_iter()
        .map(|(id, inst)| -> Result<Vec<ReportRow>> {
            let opt = solve_fluid(inst)?.value;
            let stats = inst.per_round_capacity().map(|_| instance_stats(inst)).transpose()?;
            policies
                .iter()
                .map(|&policy| {
                    let (report, _) = evaluate_with_opt(inst, id, policy, seed, flags, opt)?;
                    let bound = match policy {
                        PolicyKind::Fixed => fixed_ratio_bound(inst.d()).map(|b| ("Thm2", b)),
                        PolicyKind::UcHybrid => stats
                            .as_ref()
                            .and_then(|s| hybrid_ratio_bound(inst, s))
                            .map(|b| ("Thm3-composite", b)),
                        PolicyKind::UcMyopic => stats
                            .as_ref()
                            .and_then(|s| myopic_ratio_bound(inst, s))
                            .map(|b| ("Lemma4i", b)),
                        PolicyKind::UcForward => None,
                    };
                    let (bound_name, bound_value) = bound.unwrap_or(("none", 0.0));
                    Ok(ReportRow {
                        instance: id.clone(),
                        d: inst.d(),
                        n: inst.n(),
                        capacity: inst.capacity(),
                        a: inst.per_round_capacity(),
                        policy,
                        lu: report.lu,
                        opt,
                        ratio: report.ratio,
                        bound_name: bound_name.to_string(),
                        bound_value,
                        satisfied: report.ratio >= bound_value - eps,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ReportRow> = per_instance.into_iter().flatten().collect();

    let mut family_rows = Vec::new();
    for (family, d, members) in complete_families(instances) {
        let (bound_name, bound_value) = family_bound(family, d);
        for policy in family_policies(family, policies) {
            let worst = rows
                .iter()
                .filter(|r| r.policy == policy && members.iter().any(|(id, _)| *id == r.instance))
                .min_by(|a, b| a.ratio.total_cmp(&b.ratio));
            if let Some(w) = worst {
                family_rows.push(ReportRow {
                    instance: format!("{}_family", family_label(family, d)),
                    bound_name: bound_name.to_string(),
                    bound_value,
                    satisfied: w.ratio <= bound_value + eps,
                    ..w.clone()
                });
            }
        }
    }
    rows.extend(family_rows);
    rows.sort_by(|a, b| {
        row_key(&a.instance)
            .cmp(&row_key(&b.instance))
            .then(a.policy.cmp(&b.policy))
    });
    Ok(rows)
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.record()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(&rows.iter().map(ReportRow::to_json).collect::<Vec<_>>())
        .expect("report serialization cannot fail")
}

pub fn write_verdicts_csv<W: Write>(verdicts: &[Verdict], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance", "check", "status", "lhs", "rhs", "slack"])
        .map_err(csv_error)?;
    for v in verdicts {
        w.write_record([
            v.instance.clone(),
            v.check.clone(),
            v.status.name().to_string(),
            fmt_sig(v.lhs),
            fmt_sig(v.rhs),
            fmt_sig(v.slack),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn verdicts_json(verdicts: &[Verdict]) -> String {
    let items: Vec<Value> = verdicts
        .iter()
        .map(|v| {
            json!({
                "instance": v.instance,
                "check": v.check,
                "status": v.status.name(),
                "lhs": num(v.lhs),
                "rhs": num(v.rhs),
                "slack": num(v.slack),
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("verdict serialization cannot fail")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// A JSON number rounded to 12 significant digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    let s = fmt_sig(x);
    s.parse::<serde_json::Number>()
        .map(Value::Number)
        .unwrap_or(Value::String(s))
}
