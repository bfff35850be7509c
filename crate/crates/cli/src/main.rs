//! `divsel`: generate instances, run policies, Monte Carlo the rounding and verify guarantees.
//!
//! Exit status is 0 when every check passes, 2 when any check fails and 3 on contract or I/O
//! errors (including unparsable arguments).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use divsel::benchmark::{grid_granularity, grid_oracle, opt_bounds, solve_fluid, GRID_ORACLE_MAX_CANDIDATES};
use divsel::generators::{gen_fcs, gen_fhc, random_member, Member, RandomParams};
use divsel::harness::{
    competitive_report, evaluate_policy, monte_carlo, num, report_json, verdicts_json, verify_inequalities,
    write_report_csv, write_verdicts_csv, PolicyKind, RunFlags, VerifyOptions,
};
use divsel::math::fmt_sig;
use divsel::{parse_instance, serialize_instance, FractionalSolution, Instance};

const EXIT_FAIL: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "divsel", version, about = "Diversity-fair online selection harness")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Tolerance for feasibility and inequality checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    epsilon: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Fhc,
    Fcs,
    Random,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct PolicyFlags {
    /// Let a second agent spend banked per-round capacity.
    #[arg(long)]
    topup: bool,

    /// Keep water-filling the uncapped dimensions after one hits its cap.
    #[arg(long)]
    continue_after_cap: bool,
}

impl From<PolicyFlags> for RunFlags {
    fn from(f: PolicyFlags) -> Self {
        RunFlags {
            topup: f.topup,
            continue_after_cap: f.continue_after_cap,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one JSON instance per family member into a directory.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        d: usize,
        /// Rounds per random instance (default d).
        #[arg(long)]
        n: Option<usize>,
        /// Per-round capacity of random instances.
        #[arg(long, default_value_t = 2)]
        a: u64,
        /// Attribute density of random candidates.
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        min_arrivals: u64,
        #[arg(long, default_value_t = 1.0)]
        cmax: f64,
        /// Number of random instances.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the fluid benchmark and print OPT with its closed-form bounds.
    Offline {
        #[arg(long)]
        instance: PathBuf,
        /// Also evaluate the brute-force grid oracle with this many steps (tiny instances only).
        #[arg(long)]
        grid: Option<u32>,
        #[arg(long)]
        emit_x: Option<PathBuf>,
    },
    /// Stream an instance through a policy and report its exact least utility.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        policy: PolicyKind,
        #[command(flatten)]
        flags: PolicyFlags,
        #[arg(long)]
        emit_x: Option<PathBuf>,
    },
    /// Round a fractional solution repeatedly and compare frequencies against it.
    Mc {
        #[arg(long)]
        instance: PathBuf,
        /// Fractional solution to round; defaults to the fluid optimum.
        #[arg(long)]
        x: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Check every applicable guarantee on instance files or directories of them.
    Verify {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        #[command(flatten)]
        flags: PolicyFlags,
    },
    /// Competitive-ratio table over instances and policies.
    Report {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        /// Comma-separated policies (default all).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
        #[command(flatten)]
        flags: PolicyFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let eps = cli.epsilon;
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Gen {
            family,
            d,
            n,
            a,
            p,
            min_arrivals,
            cmax,
            count,
            out,
        } => {
            let members = match family {
                FamilyArg::Fhc => gen_fhc(d)?,
                FamilyArg::Fcs => gen_fcs(d)?,
                FamilyArg::Random => {
                    let params = RandomParams {
                        d,
                        n: n.unwrap_or(d),
                        a,
                        density: p,
                        min_arrivals,
                        c_max: cmax,
                    };
                    (1..=count)
                        .map(|i| random_member(&params, cli.seed.wrapping_add(i as u64 - 1), i))
                        .collect::<divsel::Result<Vec<_>>>()?
                }
            };
            write_members(&members, &out)?;
            for m in &members {
                writeln!(stdout, "{}", out.join(format!("{}.json", m.id)).display())?;
            }
            Ok(Outcome::Pass)
        }
        Command::Offline { instance, grid, emit_x } => {
            let (id, inst) = load_instance(&instance)?;
            let lp = solve_fluid(&inst)?;
            let bounds = opt_bounds(&inst);
            let oracle = match grid {
                Some(q) if inst.candidate_count() <= GRID_ORACLE_MAX_CANDIDATES => {
                    Some((grid_oracle(&inst, q)?, grid_granularity(&inst, q)))
                }
                Some(_) => bail!(
                    "grid oracle needs at most {GRID_ORACLE_MAX_CANDIDATES} candidates, instance has {}",
                    inst.candidate_count()
                ),
                None => None,
            };
            if let Some(path) = emit_x {
                fs::write(&path, lp.solution.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            let sandwiched = bounds.under <= lp.value + eps && lp.value <= bounds.over + eps;
            let above_oracle = oracle.is_none_or(|(g, _)| lp.value >= g - eps);
            match cli.format {
                Format::Csv => {
                    writeln!(stdout, "instance,OPT,under,over,grid,granularity")?;
                    let (g, gran) = oracle.map_or((String::new(), String::new()), |(g, r)| (fmt_sig(g), fmt_sig(r)));
                    writeln!(
                        stdout,
                        "{id},{},{},{},{g},{gran}",
                        fmt_sig(lp.value),
                        fmt_sig(bounds.under),
                        fmt_sig(bounds.over)
                    )?;
                }
                Format::Json => {
                    let doc = json!({
                        "instance": id,
                        "OPT": num(lp.value),
                        "under": num(bounds.under),
                        "over": num(bounds.over),
                        "grid": oracle.map(|(g, _)| num(g)),
                        "granularity": oracle.map(|(_, r)| num(r)),
                        "x": lp.solution.rounds().iter().map(|r| r.iter().map(|&v| num(v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    });
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
            }
            Ok(if sandwiched && above_oracle {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
        Command::Run {
            instance,
            policy,
            flags,
            emit_x,
        } => {
            let (id, inst) = load_instance(&instance)?;
            let (report, x) = evaluate_policy(&inst, &id, policy, cli.seed, flags.into())?;
            if let Some(path) = emit_x {
                fs::write(&path, x.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            match cli.format {
                Format::Csv => {
                    writeln!(stdout, "instance,policy,LU,OPT,ratio,degenerate,feasible")?;
                    writeln!(
                        stdout,
                        "{},{},{},{},{},{},{}",
                        report.instance_id,
                        policy.name(),
                        fmt_sig(report.lu),
                        fmt_sig(report.opt),
                        fmt_sig(report.ratio),
                        report.degenerate,
                        report.feasible
                    )?;
                }
                Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&report.to_json())?)?,
            }
            Ok(if report.feasible { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Mc { instance, x, trials } => {
            let (id, inst) = load_instance(&instance)?;
            let x = match x {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    FractionalSolution::from_json(&text)?
                }
                None => solve_fluid(&inst)?.solution,
            };
            let mc = monte_carlo(&inst, &x, trials, cli.seed)?;
            match cli.format {
                Format::Csv => {
                    writeln!(
                        stdout,
                        "instance,trials,max_selected,K,capacity_respected,worst_band_ratio,within_bands"
                    )?;
                    writeln!(
                        stdout,
                        "{id},{trials},{},{},{},{},{}",
                        mc.max_selected,
                        inst.capacity(),
                        mc.capacity_respected,
                        fmt_sig(mc.worst_band_ratio),
                        mc.within_bands()
                    )?;
                }
                Format::Json => {
                    let mut doc = mc.to_json();
                    doc["instance"] = json!(id);
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
            }
            Ok(if mc.capacity_respected && mc.within_bands() {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
        Command::Verify { instances, flags } => {
            let instances = load_all(&instances)?;
            let opts = VerifyOptions {
                seed: cli.seed,
                eps,
                flags: flags.into(),
            };
            let verdicts = verify_inequalities(&instances, &opts)?;
            match cli.format {
                Format::Csv => write_verdicts_csv(&verdicts, &mut stdout)?,
                Format::Json => writeln!(stdout, "{}", verdicts_json(&verdicts))?,
            }
            Ok(if verdicts.iter().all(|v| v.passed()) {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
        Command::Report {
            instances,
            policies,
            flags,
            out,
        } => {
            let instances = load_all(&instances)?;
            let policies = if policies.is_empty() {
                PolicyKind::ALL.to_vec()
            } else {
                policies
            };
            let rows = competitive_report(&instances, &policies, cli.seed, flags.into(), eps)?;
            let mut buf = Vec::new();
            match cli.format {
                Format::Csv => write_report_csv(&rows, &mut buf)?,
                Format::Json => writeln!(buf, "{}", report_json(&rows))?,
            }
            match out {
                Some(path) => fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?,
                None => stdout.write_all(&buf)?,
            }
            Ok(if rows.iter().all(|r| r.satisfied) {
                Outcome::Pass
            } else {
                Outcome::Fail
            })
        }
    }
}

fn write_members(members: &[Member], dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for m in members {
        let path = dir.join(format!("{}.json", m.id));
        fs::write(&path, serialize_instance(&m.instance)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn load_instance(path: &Path) -> anyhow::Result<(String, Instance)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = parse_instance(&text).with_context(|| format!("parsing {}", path.display()))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((id, inst))
}

/// Loads files as given and directories as their `*.json` entries in name order.
fn load_all(paths: &[PathBuf]) -> anyhow::Result<Vec<(String, Instance)>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            entries.retain(|p| p.extension().is_some_and(|e| e == "json"));
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    files.iter().map(|p| load_instance(p)).collect()
}
