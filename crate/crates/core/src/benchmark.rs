//! Offline benchmarks: the fluid max-min LP, its a priori bounds, the per-round budgeted
//! relaxation used by the unknown-capacity analysis, and a brute-force grid oracle.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{least_utility, AttributeVector, FeasibilityMode, FractionalSolution, Instance};
use crate::math::at_least_sqrt;
use crate::simplex::{LinearProgram, LpStatus, Relation};

/// Tolerance for re-validating LP solutions against their own formulation.
pub const LP_TOLERANCE: f64 = 1e-7;
/// Largest candidate count accepted by [`grid_oracle`].
pub const GRID_ORACLE_MAX_CANDIDATES: usize = 5;

#[derive(Clone, Debug)]
pub struct LpResult<S> {
    pub value: f64,
    pub status: LpStatus,
    pub solution: S,
}

impl<S> LpResult<S> {
    /// `true` when the optimum is zero because some dimension can never be covered.
    pub fn is_degenerate(&self) -> bool {
        self.value == 0.0
    }
}

/// Maximizes `t` subject to `sum x <= K`, `0 <= x <= 1` and `c_k sum_j x_j t_jk >= t`.
///
/// Identical candidate types are merged into one variable bounded by their multiplicity and
/// split back equally, which preserves the optimum because the constraints only see the
/// per-type totals.
pub fn solve_fluid(inst: &Instance) -> Result<LpResult<FractionalSolution>> {
    let marginals = inst.marginals();
    if inst.capacity() == 0 || marginals.contains(&0) {
        return Ok(LpResult {
            value: 0.0,
            status: LpStatus::Optimal,
            solution: FractionalSolution::zeros(inst),
        });
    }

    let mut types: BTreeMap<&AttributeVector, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, round) in inst.rounds().iter().enumerate() {
        for (j, cand) in round.candidates().iter().enumerate() {
            types.entry(cand).or_default().push((i, j));
        }
    }

    let d = inst.d();
    let mut lp = LinearProgram::new();
    let t = lp.add_variable(1.0, 0.0, f64::INFINITY);
    let mut cover: Vec<Vec<(usize, f64)>> = (0..d).map(|_| vec![(t, 1.0)]).collect();
    let mut capacity_row = Vec::with_capacity(types.len());
    let mut columns = Vec::with_capacity(types.len());
    for (ty, members) in &types {
        let v = lp.add_variable(0.0, 0.0, members.len() as f64);
        capacity_row.push((v, 1.0));
        for &k in ty.indices() {
            cover[k].push((v, -inst.c()[k]));
        }
        columns.push(v);
    }
    lp.add_constraint(capacity_row, Relation::Le, inst.capacity() as f64);
    for row in cover {
        lp.add_constraint(row, Relation::Le, 0.0);
    }

    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("fluid LP ended with status {:?}", sol.status)));
    }
    let mut x = FractionalSolution::zeros(inst);
    for ((_, members), &v) in types.iter().zip(&columns) {
        let share = (sol.x[v] / members.len() as f64).clamp(0.0, 1.0);
        for &(i, j) in members {
            x.rounds_mut()[i][j] = share;
        }
    }

    let (lu, _) = least_utility(inst, &x)?;
    let report = crate::instance::feasibility_report(inst, &x, FeasibilityMode::Total, LP_TOLERANCE)?;
    if !report.is_feasible() || (lu - sol.value).abs() > LP_TOLERANCE * (1.0 + sol.value) {
        return Err(Error::Solver(format!(
            "fluid solution failed re-validation: lu {lu}, t {}, {:?}",
            sol.value, report.violations
        )));
    }
    Ok(LpResult {
        value: lu,
        status: LpStatus::Optimal,
        solution: x,
    })
}

/// A priori range `[under, over]` containing the fluid optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptBounds {
    pub under: f64,
    pub over: f64,
}

pub fn opt_bounds(inst: &Instance) -> OptBounds {
    opt_bounds_from_marginals(inst.c(), inst.capacity(), &inst.marginals())
}

/// `under = min_k c_k min{K/d, phi_k}`, `over = min_k c_k min{K, phi_k}`.
pub fn opt_bounds_from_marginals(c: &[f64], capacity: u64, marginals: &[u64]) -> OptBounds {
    let d = marginals.len() as f64;
    let k = capacity as f64;
    let fold = |cap: f64| {
        c.iter()
            .zip(marginals)
            .map(|(&ck, &phi)| ck * cap.min(phi as f64))
            .fold(f64::INFINITY, f64::min)
    };
    OptBounds {
        under: fold(k / d),
        over: fold(k),
    }
}

/// A solution of the budgeted relaxation: first-stage weights on core candidates and
/// per-round, per-dimension adjustments `z[i][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntSolution {
    pub y: FractionalSolution,
    pub z: Vec<Vec<f64>>,
}

/// Core candidates are those with at least `sqrt(d)` attributes.
pub fn is_core(cand: &AttributeVector, d: usize) -> bool {
    at_least_sqrt(cand.popcount() as u64, d as u64)
}

fn require_per_round(inst: &Instance) -> Result<f64> {
    inst.per_round_capacity()
        .map(|a| a as f64)
        .ok_or_else(|| Error::Contract("the budgeted relaxation needs a per-round capacity".into()))
}

/// Optimum `g(prefix_rounds)` of the budgeted relaxation over the first `prefix_rounds` rounds.
///
/// Core weights are fixed to one, which is optimal since they only add utility. Rounds with
/// identical arrival vectors are aggregated into one block of variables with scaled bounds and
/// split back equally; only per-dimension totals enter the objective, so this is exact.
pub fn solve_int(inst: &Instance, prefix_rounds: usize) -> Result<LpResult<IntSolution>> {
    let a = require_per_round(inst)?;
    let n = inst.n();
    if prefix_rounds > n || (prefix_rounds == 0 && n > 0) {
        return Err(Error::Domain(format!("prefix length {prefix_rounds} outside 1..={n}")));
    }
    let d = inst.d();
    let c = inst.c();
    let budget = (d as f64).sqrt() * a;

    let mut y = FractionalSolution::zeros(inst);
    let mut core_cover = vec![0.0; d];
    for (i, round) in inst.rounds().iter().enumerate().take(prefix_rounds) {
        for (j, cand) in round.candidates().iter().enumerate() {
            if is_core(cand, d) {
                y.rounds_mut()[i][j] = 1.0;
                for &k in cand.indices() {
                    core_cover[k] += 1.0;
                }
            }
        }
    }

    let arrivals = inst.round_arrivals();
    let mut groups: BTreeMap<&[u64], Vec<usize>> = BTreeMap::new();
    for (i, phi) in arrivals.iter().enumerate().take(prefix_rounds) {
        groups.entry(phi.as_slice()).or_default().push(i);
    }

    let mut lp = LinearProgram::new();
    let t = lp.add_variable(1.0, 0.0, f64::INFINITY);
    let mut cover: Vec<Vec<(usize, f64)>> = (0..d).map(|_| vec![(t, 1.0)]).collect();
    let mut blocks = Vec::new();
    for (phi, rounds) in &groups {
        let g = rounds.len() as f64;
        let mut budget_row = Vec::new();
        let mut vars = Vec::new();
        for k in 0..d {
            if phi[k] > 0 {
                let v = lp.add_variable(0.0, 0.0, g * phi[k] as f64);
                cover[k].push((v, -c[k]));
                budget_row.push((v, 1.0));
                vars.push((k, v));
            }
        }
        if !budget_row.is_empty() {
            lp.add_constraint(budget_row, Relation::Le, g * budget);
        }
        blocks.push((rounds, vars));
    }
    for (k, row) in cover.into_iter().enumerate() {
        lp.add_constraint(row, Relation::Le, c[k] * core_cover[k]);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("budgeted LP ended with status {:?}", sol.status)));
    }

    let mut z = vec![vec![0.0; d]; n];
    for (rounds, vars) in blocks {
        let g = rounds.len() as f64;
        for &(k, v) in &vars {
            let share = (sol.x[v] / g).clamp(0.0, arrivals[rounds[0]][k] as f64);
            for &i in rounds.iter() {
                z[i][k] = share;
            }
        }
    }
    let solution = IntSolution { y, z };
    let value = int_objective(inst, &solution)?;
    if (value - sol.value).abs() > LP_TOLERANCE * (1.0 + sol.value) {
        return Err(Error::Solver(format!(
            "budgeted solution failed re-validation: objective {value}, t {}",
            sol.value
        )));
    }
    Ok(LpResult {
        value,
        status: LpStatus::Optimal,
        solution,
    })
}

/// `min_k c_k (sum_i z_ik + sum_j y_j t_jk)` after checking every constraint of the relaxation.
pub fn int_objective(inst: &Instance, sol: &IntSolution) -> Result<f64> {
    let a = require_per_round(inst)?;
    sol.y.check_shape(inst)?;
    if sol.z.len() != inst.n() || sol.z.iter().any(|zi| zi.len() != inst.d()) {
        return Err(Error::Shape(format!("z must be {} x {}", inst.n(), inst.d())));
    }
    let d = inst.d();
    let budget = (d as f64).sqrt() * a;
    let tol = LP_TOLERANCE;
    for (i, (round, yi)) in inst.rounds().iter().zip(sol.y.rounds()).enumerate() {
        for (j, (cand, &yj)) in round.candidates().iter().zip(yi).enumerate() {
            if is_core(cand, d) {
                if !(yj >= -tol && yj <= 1.0 + tol) {
                    return Err(Error::invariant(
                        "y",
                        format!("(10) 0 <= y <= 1 violated at [{i}][{j}]: {yj}"),
                    ));
                }
            } else if yj.abs() > tol {
                return Err(Error::invariant(
                    "y",
                    format!("(11) y = 0 off the core violated at [{i}][{j}]: {yj}"),
                ));
            }
        }
        let phi = round.arrivals(d);
        let zi = &sol.z[i];
        let total: f64 = zi.iter().sum();
        if total > budget * (1.0 + tol) + tol {
            return Err(Error::invariant(
                "z",
                format!("(12) round {i} adjusts {total} > {budget}"),
            ));
        }
        for k in 0..d {
            if !(zi[k] >= -tol && zi[k] <= phi[k] as f64 + tol) {
                return Err(Error::invariant(
                    "z",
                    format!("(13) 0 <= z <= phi violated at [{i}][{k}]: {} vs {}", zi[k], phi[k]),
                ));
            }
        }
    }
    let mut u = crate::instance::utilities_of(inst, sol.y.rounds());
    for zi in &sol.z {
        for (k, uk) in u.iter_mut().enumerate() {
            *uk += inst.c()[k] * zi[k];
        }
    }
    Ok(u.into_iter().fold(f64::INFINITY, f64::min))
}

/// Largest gap between the fluid optimum and [`grid_oracle`]: rounding an optimum down to the
/// grid costs dimension `k` at most `c_k phi_k / q`.
pub fn grid_granularity(inst: &Instance, grid_steps: u32) -> f64 {
    inst.c()
        .iter()
        .zip(inst.marginals())
        .map(|(&ck, phi)| ck * phi as f64)
        .fold(0.0, f64::max)
        / grid_steps as f64
}

/// Best least utility over `x` in `{0, 1/q, ..., 1}^S` with `sum x <= K`, by enumeration.
///
/// The last coordinate is always set to its largest feasible grid value; utility is monotone,
/// so this loses nothing.
pub fn grid_oracle(inst: &Instance, grid_steps: u32) -> Result<f64> {
    let cands: Vec<&AttributeVector> = inst.rounds().iter().flat_map(|r| r.candidates()).collect();
    if cands.len() > GRID_ORACLE_MAX_CANDIDATES {
        return Err(Error::Size {
            what: "grid oracle candidates",
            size: cands.len(),
            cap: GRID_ORACLE_MAX_CANDIDATES,
        });
    }
    let d = inst.d();
    let q = grid_steps as u64;
    let budget = q * inst.capacity();
    let c = inst.c();
    let score = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .zip(c)
            .map(|(&n, &ck)| ck * n as f64)
            .fold(f64::INFINITY, f64::min)
            / q as f64
    };
    let Some((last, head)) = cands.split_last() else {
        return Ok(score(&vec![0; d]));
    };

    fn enumerate(
        head: &[&AttributeVector],
        last: &AttributeVector,
        q: u64,
        remaining: u64,
        counts: &mut Vec<u64>,
        score: &dyn Fn(&[u64]) -> f64,
    ) -> f64 {
        match head.split_first() {
            None => {
                let v = q.min(remaining);
                for &k in last.indices() {
                    counts[k] += v;
                }
                let s = score(counts);
                for &k in last.indices() {
                    counts[k] -= v;
                }
                s
            }
            Some((cand, rest)) => {
                let mut best = f64::NEG_INFINITY;
                for v in 0..=q.min(remaining) {
                    best = best.max(enumerate(rest, last, q, remaining - v, counts, score));
                    for &k in cand.indices() {
                        counts[k] += 1;
                    }
                }
                for &k in cand.indices() {
                    counts[k] -= q.min(remaining) + 1;
                }
                best
            }
        }
    }

    let best = match head.split_first() {
        None => enumerate(&[], last, q, budget, &mut vec![0; d], &score),
        Some((first, rest)) => (0..=q.min(budget))
            .into_par_iter()
            .map(|v| {
                let mut counts = vec![0u64; d];
                for &k in first.indices() {
                    counts[k] += v;
                }
                enumerate(rest, last, q, budget - v, &mut counts, &score)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max),
    };
    Ok(best)
}

/// Optimum of `max min_k (u_k + c_k z_k)` subject to `sum z <= budget`, `0 <= z <= caps`,
/// solved with the general simplex engine as an independent check on water-filling.
pub fn solve_water_fill_lp(u: &[f64], caps: &[f64], budget: f64, c: &[f64]) -> Result<f64> {
    let floor = u.iter().copied().fold(0.0, f64::min);
    let mut lp = LinearProgram::new();
    let f = lp.add_variable(1.0, floor, f64::INFINITY);
    let z: Vec<usize> = caps.iter().map(|&cap| lp.add_variable(0.0, 0.0, cap)).collect();
    for k in 0..u.len() {
        lp.add_constraint(vec![(f, 1.0), (z[k], -c[k])], Relation::Le, u[k]);
    }
    lp.add_constraint(z.iter().map(|&v| (v, 1.0)).collect(), Relation::Le, budget);
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!(
            "water-fill LP ended with status {:?}",
            sol.status
        )));
    }
    Ok(sol.value)
}
