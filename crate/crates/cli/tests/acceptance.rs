//! Acceptance gate: one line per criterion, non-zero exit if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use divsel::benchmark::{grid_granularity, grid_oracle, opt_bounds, solve_fluid, solve_water_fill_lp};
use divsel::generators::{gen_fcs, gen_fhc, gen_random, Member, RandomParams};
use divsel::harness::{
    competitive_report, run_policy, verdicts_json, verify_families, verify_instance, write_report_csv,
    write_verdicts_csv, PolicyKind, RunFlags, Verdict, VerdictStatus, VerifyOptions,
};
use divsel::rounding::{select_with_pos, selection_measure};
use divsel::unknown_cap::{water_fill, water_level};
use divsel::{least_utility, validate_feasibility, AttributeVector, Instance, Round, EPSILON};

const DIMENSIONS: [usize; 5] = [4, 8, 16, 27, 64];
const SEED: u64 = 2024;

type Corpus = Vec<(String, Instance)>;

/// Tag, name, time limit, check.
type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn members(v: Vec<Member>) -> Corpus {
    v.into_iter().map(|m| (m.id, m.instance)).collect()
}

/// Tight instances (small `a`) and loosely capacitated ones (large `a`) at every dimension.
fn random_corpus() -> Corpus {
    let mut out = Vec::new();
    for d in DIMENSIONS {
        let n = d.min(16);
        let loose_a = 2 * (d as f64).sqrt().ceil() as u64;
        let variants = [(1, 0.3, 1.0), (2, 0.2, 3.0), (loose_a, 0.3, 1.0), (loose_a, 0.5, 2.0)];
        for (v, &(a, density, c_max)) in variants.iter().enumerate() {
            let params = RandomParams {
                d,
                n,
                a,
                density,
                min_arrivals: 1,
                c_max,
            };
            let seed = SEED + 100 * d as u64 + v as u64;
            out.push((format!("random_d{d}_m{}", v + 1), gen_random(&params, seed).unwrap()));
        }
    }
    out
}

fn family_corpus() -> Corpus {
    let mut out = Vec::new();
    for d in DIMENSIONS {
        out.extend(members(gen_fhc(d).unwrap()));
        out.extend(members(gen_fcs(d).unwrap()));
    }
    out
}

fn full_corpus() -> Corpus {
    let mut c = family_corpus();
    c.extend(random_corpus());
    c
}

fn verdicts_for(corpus: &Corpus, flags: RunFlags) -> Vec<Verdict> {
    let opts = VerifyOptions {
        seed: SEED,
        eps: EPSILON,
        flags,
    };
    corpus
        .iter()
        .flat_map(|(id, inst)| verify_instance(inst, id, &opts).unwrap())
        .collect()
}

/// Summarizes the verdicts whose check name starts with one of `prefixes`; fails on any failure
/// and on checks that never had their preconditions met.
fn judge(verdicts: &[Verdict], prefixes: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for prefix in prefixes {
        let selected: Vec<&Verdict> = verdicts
            .iter()
            .filter(|v| v.check == *prefix || v.check.starts_with(&format!("{prefix}:")))
            .collect();
        let applied: Vec<&&Verdict> = selected
            .iter()
            .filter(|v| v.status != VerdictStatus::PreconditionUnmet)
            .collect();
        let failed: Vec<&&Verdict> = applied
            .iter()
            .filter(|v| v.status == VerdictStatus::Fail)
            .copied()
            .collect();
        let min_slack = applied.iter().map(|v| v.slack).fold(f64::INFINITY, f64::min);
        if !failed.is_empty() || applied.is_empty() {
            ok = false;
        }
        for f in failed.iter().take(3) {
            eprintln!("    failed: {} {} lhs={} rhs={}", f.instance, f.check, f.lhs, f.rhs);
        }
        parts.push(format!(
            "{prefix} {}/{} applied, {} failed, min slack {min_slack:.3e}",
            applied.len(),
            selected.len(),
            failed.len()
        ));
    }
    (ok, parts.join("; "))
}

fn tiny_instance(rng: &mut ChaCha8Rng, size: usize) -> Instance {
    let d = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=2.min(size));
    let mut rounds = vec![Vec::new(); n];
    for j in 0..size {
        let idx: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.6)).collect();
        let target = if j < n { j } else { rng.gen_range(0..n) };
        rounds[target].push(AttributeVector::new(idx, d).unwrap());
    }
    let mut c: Vec<f64> = (0..d).map(|_| [1.0, 1.5, 2.0][rng.gen_range(0..3)]).collect();
    c[rng.gen_range(0..d)] = 1.0;
    let a = rng.gen_range(1..=2);
    Instance::new(
        d,
        c,
        n as u64 * a,
        Some(a),
        rounds.into_iter().map(Round::new).collect(),
    )
    .unwrap()
}

fn c1_rounding_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut instances = Vec::new();
    while instances.len() < 50 {
        let params = RandomParams {
            d: rng.gen_range(2..=16),
            n: rng.gen_range(1..=10),
            a: rng.gen_range(1..=3),
            density: rng.gen_range(0.1..0.6),
            min_arrivals: 1,
            c_max: 2.0,
        };
        let inst = gen_random(&params, rng.gen()).unwrap();
        if inst.candidate_count() <= 200 {
            instances.push(inst);
        }
    }
    let mut worst_err: f64 = 0.0;
    let mut over_capacity = 0;
    let mut solutions = 0;
    for inst in &instances {
        let mut xs = vec![solve_fluid(inst).unwrap().solution];
        xs.push(
            run_policy(inst, PolicyKind::Fixed, SEED, RunFlags::default())
                .unwrap()
                .x,
        );
        xs.push(
            run_policy(
                inst,
                PolicyKind::UcHybrid,
                SEED,
                RunFlags {
                    topup: true,
                    continue_after_cap: false,
                },
            )
            .unwrap()
            .x,
        );
        for x in &xs {
            solutions += 1;
            let measure = selection_measure(x.rounds()).unwrap();
            for (m, v) in measure.marginals.iter().flatten().zip(x.values()) {
                worst_err = worst_err.max((m - v).abs());
            }
            for g in 0..10_000 {
                let selected = select_with_pos(inst, x, g as f64 / 10_000.0).unwrap();
                if selected.len() as u64 > inst.capacity() {
                    over_capacity += 1;
                }
            }
        }
    }
    outcome(
        worst_err <= 1e-9 && over_capacity == 0,
        format!(
            "{} instances, {solutions} solutions: max |Pr - x| = {worst_err:.2e}, {over_capacity} grid offsets over K",
            instances.len()
        ),
    )
}

fn c2_benchmark_sandwich() -> Outcome {
    let corpus = full_corpus();
    let mut sandwich_fail = 0;
    for (id, inst) in &corpus {
        let opt = solve_fluid(inst).unwrap().value;
        let b = opt_bounds(inst);
        if !(b.under <= opt + EPSILON * opt.max(1.0) && opt <= b.over + EPSILON * b.over.max(1.0)) {
            eprintln!("    sandwich failed on {id}: {} <= {opt} <= {}", b.under, b.over);
            sandwich_fail += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let sizes: Vec<usize> = (0..24).map(|i| 1 + i % 4).chain([5]).collect();
    let mut oracle_fail = 0;
    let mut worst_gap: f64 = 0.0;
    for &size in &sizes {
        let inst = tiny_instance(&mut rng, size);
        let opt = solve_fluid(&inst).unwrap().value;
        let grid = grid_oracle(&inst, 200).unwrap();
        let gran = grid_granularity(&inst, 200);
        worst_gap = worst_gap.max(opt - grid);
        if grid > opt + EPSILON || opt - grid > gran + EPSILON {
            eprintln!("    oracle mismatch: OPT {opt}, grid {grid}, granularity {gran}");
            oracle_fail += 1;
        }
    }
    outcome(
        sandwich_fail == 0 && oracle_fail == 0,
        format!(
            "{} generated instances sandwiched ({sandwich_fail} violations); {} tiny instances vs q=200 grid ({oracle_fail} violations, max gap {worst_gap:.3e})",
            corpus.len(),
            sizes.len()
        ),
    )
}

fn c3_fixed_guarantee() -> Outcome {
    let mut corpus: Corpus = DIMENSIONS.iter().flat_map(|&d| members(gen_fcs(d).unwrap())).collect();
    corpus.extend(random_corpus());
    let verdicts = verdicts_for(&corpus, RunFlags::default());
    let (ok, detail) = judge(&verdicts, &["Thm2-bound", "Lemma2-3-agent"]);
    let greedy = judge(&verdicts, &["Lemma2-greedy"]);
    let greedy_failed = verdicts
        .iter()
        .any(|v| v.check == "Lemma2-greedy" && v.status == VerdictStatus::Fail);
    outcome(ok && !greedy_failed, format!("{detail}; {}", greedy.1))
}

fn c4_unknown_guarantee() -> Outcome {
    let verdicts = verdicts_for(&full_corpus(), RunFlags::default());
    let (ok, detail) = judge(
        &verdicts,
        &["Thm3-composite", "Lemma4i", "Lemma3i", "Lemma3ii", "INT-feasible"],
    );
    outcome(ok, detail)
}

fn c5_water_filling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        let d = rng.gen_range(1..=12);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..5.0)).collect();
        let caps: Vec<f64> = (0..d).map(|_| rng.gen_range(0..6) as f64).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(1.0..3.0)).collect();
        let budget = rng.gen_range(0.0..10.0);
        let z = water_fill(&u, &caps, budget, &c, t % 2 == 1);
        let lp = solve_water_fill_lp(&u, &caps, budget, &c).unwrap();
        worst = worst.max((water_level(&u, &z, &c) - lp).abs());
    }
    let triples_ok = worst <= 1e-7;
    let mut verdicts = verdicts_for(&full_corpus(), RunFlags::default());
    verdicts.extend(verdicts_for(
        &random_corpus(),
        RunFlags {
            topup: false,
            continue_after_cap: true,
        },
    ));
    let (rounds_ok, detail) = judge(&verdicts, &["WF-optimality"]);
    outcome(
        triples_ok && rounds_ok,
        format!("200 triples max |f - LP| = {worst:.2e}; per-round {detail}"),
    )
}

fn c6_impossibility() -> Outcome {
    let mut corpus = Vec::new();
    for d in [4, 8, 16, 32] {
        corpus.extend(members(gen_fhc(d).unwrap()));
    }
    for d in [8, 27, 64] {
        corpus.extend(members(gen_fcs(d).unwrap()));
    }
    let opts = VerifyOptions {
        seed: SEED,
        ..VerifyOptions::default()
    };
    let verdicts = verify_families(&corpus, &opts).unwrap();
    let (ok, detail) = judge(&verdicts, &["FHC-OPT", "FHC-2/d", "FCS-OPT", "FCS-512"]);
    let fhc_groups = verdicts.iter().filter(|v| v.check.starts_with("FHC-2/d")).count();
    let fcs_groups = verdicts.iter().filter(|v| v.check.starts_with("FCS-512")).count();
    outcome(
        ok && fhc_groups == 4 && fcs_groups == 3 * PolicyKind::ALL.len(),
        format!("{detail}; {fhc_groups} FHC and {fcs_groups} FCS family checks"),
    )
}

fn c7_feasibility() -> Outcome {
    let corpus = full_corpus();
    let mut runs = 0;
    let mut infeasible = 0;
    let mut dominance_fail = 0;
    for (id, inst) in &corpus {
        for policy in PolicyKind::ALL {
            for cap in [false, true] {
                let base = RunFlags {
                    topup: false,
                    continue_after_cap: cap,
                };
                let plain = run_policy(inst, policy, SEED, base).unwrap().x;
                let topped = run_policy(inst, policy, SEED, RunFlags { topup: true, ..base })
                    .unwrap()
                    .x;
                for x in [&plain, &topped] {
                    runs += 1;
                    if !validate_feasibility(inst, x, policy.feasibility_mode()) {
                        eprintln!("    infeasible: {id} {}", policy.name());
                        infeasible += 1;
                    }
                }
                let dominates = plain.values().zip(topped.values()).all(|(p, t)| t >= p - EPSILON);
                let (lu_plain, _) = least_utility(inst, &plain).unwrap();
                let (lu_topped, _) = least_utility(inst, &topped).unwrap();
                if !dominates || lu_topped < lu_plain - EPSILON * lu_plain.max(1.0) {
                    eprintln!("    top-up lost utility: {id} {}", policy.name());
                    dominance_fail += 1;
                }
            }
        }
    }
    outcome(
        infeasible == 0 && dominance_fail == 0,
        format!("{runs} runs, {infeasible} infeasible, {dominance_fail} top-up dominance violations"),
    )
}

fn c8_determinism() -> Outcome {
    let corpus = full_corpus();
    let flags = RunFlags::default();
    let render = || {
        let rows = competitive_report(&corpus, &PolicyKind::ALL, SEED, flags, EPSILON).unwrap();
        let mut csv = Vec::new();
        write_report_csv(&rows, &mut csv).unwrap();
        let verdicts = verdicts_for(&random_corpus(), flags);
        let mut vcsv = Vec::new();
        write_verdicts_csv(&verdicts, &mut vcsv).unwrap();
        (csv, vcsv, verdicts_json(&verdicts))
    };
    let in_process = render() == render();

    let bin = env!("CARGO_BIN_EXE_divsel");
    let dir = tempfile::tempdir().unwrap();
    let cli = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let gen = |out: &Path| {
        for (family, d) in [("fhc", "8"), ("fcs", "27"), ("random", "16")] {
            cli(&[
                "gen",
                "--family",
                family,
                "--d",
                d,
                "--count",
                "3",
                "--seed",
                "9",
                "--out",
                out.to_str().unwrap(),
            ]);
        }
    };
    let (first, second) = (dir.path().join("a"), dir.path().join("b"));
    gen(&first);
    gen(&second);
    let mut same_files = true;
    for entry in std::fs::read_dir(&first).unwrap() {
        let p = entry.unwrap().path();
        same_files &= std::fs::read(&p).ok() == std::fs::read(second.join(p.file_name().unwrap())).ok();
    }
    let report = |jobs: &str| {
        let out = cli(&["report", first.to_str().unwrap(), "--seed", "5", "--jobs", jobs]);
        (out.status.code(), out.stdout)
    };
    let (r1, r2, r3) = (report("1"), report("1"), report("4"));
    let cli_ok = r1.0 == Some(0) && !r1.1.is_empty() && r1 == r2 && r1 == r3;
    outcome(
        in_process && same_files && cli_ok,
        format!("in-process reports identical: {in_process}; generated files identical: {same_files}; CLI reports identical across runs and pool sizes: {cli_ok}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "C1",
            "rounding exactness",
            Duration::from_secs(10),
            c1_rounding_exactness,
        ),
        (
            "C2",
            "benchmark sandwich",
            Duration::from_secs(60),
            c2_benchmark_sandwich,
        ),
        (
            "C3",
            "fixed-capacity guarantee",
            Duration::from_secs(300),
            c3_fixed_guarantee,
        ),
        (
            "C4",
            "unknown-capacity guarantee",
            Duration::from_secs(300),
            c4_unknown_guarantee,
        ),
        (
            "C5",
            "water-filling optimality",
            Duration::from_secs(30),
            c5_water_filling,
        ),
        (
            "C6",
            "impossibility witnesses",
            Duration::from_secs(120),
            c6_impossibility,
        ),
        (
            "C7",
            "feasibility and top-up dominance",
            Duration::from_secs(300),
            c7_feasibility,
        ),
        ("C8", "determinism", Duration::from_secs(300), c8_determinism),
    ];
    let mut all = true;
    for (tag, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let passed = result.passed && in_time;
        all &= passed;
        println!(
            "[{}] {tag} {name}: {} ({:.2}s, limit {}s)",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
