//! Unknown-capacity policy: only the per-round capacity `a` is known, never `K`, `n` or future
//! arrivals. Two per-round rules are averaged:
//!
//! * myopic: raise every dimension present in the round by the same weighted amount;
//! * forward-looking: give weight to core candidates (at least `sqrt(d)` attributes), then
//!   water-fill the accumulated utility levels with a `sqrt(d) * a` budget.
//!
//! An optional second agent spends capacity the first one left unused, without feeding back.

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, Instance, Round};
use crate::math::at_least_sqrt;

/// Equal-improvement fractions: every dimension gains `alpha = min(min_k c_k phi_k, a / sum 1/c_k)`
/// spread evenly over its arrivals. Zero when some dimension is absent from the round.
pub fn myopic_round(c: &[f64], a: f64, round: &Round) -> Vec<f64> {
    let arrivals = round.arrivals(c.len());
    if arrivals.contains(&0) {
        return vec![0.0; round.len()];
    }
    let inv_sum: f64 = c.iter().map(|ck| 1.0 / ck).sum();
    let alpha = c
        .iter()
        .zip(&arrivals)
        .map(|(&ck, &p)| ck * p as f64)
        .fold(a / inv_sum, f64::min);
    round
        .candidates()
        .iter()
        .map(|cand| {
            cand.indices()
                .iter()
                .map(|&k| alpha / (c[k] * arrivals[k] as f64))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Positions of candidates with `popcount^2 >= d`.
pub fn core_set(round: &Round, d: usize) -> Vec<usize> {
    round
        .candidates()
        .iter()
        .enumerate()
        .filter(|(_, cand)| at_least_sqrt(cand.popcount() as u64, d as u64))
        .map(|(j, _)| j)
        .collect()
}

/// Raises the lowest levels `u_k + c_k z_k` together, each at unit rate, spending budget at
/// rate `sum 1/c_k` over the rising set, with `0 <= z_k <= caps[k]`.
///
/// Stops when the budget is spent or a rising dimension reaches its cap; at that point the
/// common level is the optimum of `max min_k (u_k + c_k z_k)`. With `continue_after_cap`,
/// capped dimensions are frozen and the rest keep rising until the budget is spent or every
/// dimension is capped; the optimum is unchanged but more budget is used.
pub fn water_fill(u: &[f64], caps: &[f64], budget: f64, c: &[f64], continue_after_cap: bool) -> Vec<f64> {
    const TIE: f64 = 1e-12;
    let d = u.len();
    let mut z = vec![0.0; d];
    let mut frozen = vec![false; d];
    let mut spent = 0.0;
    loop {
        let level_of = |k: usize, z: &[f64]| u[k] + c[k] * z[k];
        let Some(level) = (0..d).filter(|&k| !frozen[k]).map(|k| level_of(k, &z)).reduce(f64::min) else {
            break;
        };
        let tol = TIE * (1.0 + level.abs());
        let rising: Vec<usize> = (0..d)
            .filter(|&k| !frozen[k] && level_of(k, &z) <= level + tol)
            .collect();
        let capped: Vec<usize> = rising.iter().copied().filter(|&k| z[k] >= caps[k] - tol).collect();
        if !capped.is_empty() {
            if !continue_after_cap {
                break;
            }
            for k in capped {
                z[k] = caps[k];
                frozen[k] = true;
            }
            continue;
        }
        let remaining = budget - spent;
        if remaining <= 0.0 {
            break;
        }
        let rate: f64 = rising.iter().map(|&k| 1.0 / c[k]).sum();
        let budget_level = level + remaining / rate;
        let cap_level = rising
            .iter()
            .map(|&k| u[k] + c[k] * caps[k])
            .fold(f64::INFINITY, f64::min);
        let join_level = (0..d)
            .filter(|&k| !frozen[k] && !rising.contains(&k))
            .map(|k| level_of(k, &z))
            .fold(f64::INFINITY, f64::min);
        let next = budget_level.min(cap_level).min(join_level);
        for &k in &rising {
            z[k] = ((next - u[k]) / c[k]).clamp(0.0, caps[k]);
        }
        spent = z.iter().sum();
        if next >= budget_level {
            break;
        }
    }
    z
}

/// `min_k (u_k + c_k z_k)`.
pub fn water_level(u: &[f64], z: &[f64], c: &[f64]) -> f64 {
    u.iter()
        .zip(z)
        .zip(c)
        .map(|((uk, zk), ck)| uk + ck * zk)
        .fold(f64::INFINITY, f64::min)
}

/// Accumulated state of the forward-looking rule.
#[derive(Clone, Debug)]
pub struct ForwardState {
    /// Utility per dimension from all core weights so far and adjustments of completed rounds.
    pub u: Vec<f64>,
    pub round_index: usize,
    pub y_history: Vec<Vec<f64>>,
    pub z_history: Vec<Vec<f64>>,
}

impl ForwardState {
    pub fn new(d: usize) -> Self {
        ForwardState {
            u: vec![0.0; d],
            round_index: 0,
            y_history: Vec::new(),
            z_history: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardStep {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Utility levels the water-filling started from.
    pub u_before_fill: Vec<f64>,
}

/// One round of the forward-looking rule.
///
/// `x_j = (y_j / 2) min{1, a sqrt(d) / sum_k phi_k} + max_k (z_k t_jk / phi_k) / (2 sqrt(d))`,
/// which keeps each half of the round's mass within `a / 2`.
pub fn forward_round(
    state: &mut ForwardState,
    round: &Round,
    c: &[f64],
    a: f64,
    continue_after_cap: bool,
) -> ForwardStep {
    let d = c.len();
    let sqrt_d = (d as f64).sqrt();
    let arrivals = round.arrivals(d);

    let mut y = vec![0.0; round.len()];
    for j in core_set(round, d) {
        y[j] = 1.0;
        for &k in round.candidates()[j].indices() {
            state.u[k] += c[k];
        }
    }
    let u_before_fill = state.u.clone();
    let caps: Vec<f64> = arrivals.iter().map(|&p| p as f64).collect();
    let z = water_fill(&state.u, &caps, sqrt_d * a, c, continue_after_cap);

    let total_arrivals: u64 = arrivals.iter().sum();
    let core_scale = if total_arrivals == 0 {
        0.0
    } else {
        (a * sqrt_d / total_arrivals as f64).min(1.0)
    };
    let x = round
        .candidates()
        .iter()
        .zip(&y)
        .map(|(cand, &yj)| {
            let adjust = cand
                .indices()
                .iter()
                .filter(|&&k| arrivals[k] > 0)
                .map(|&k| z[k] / arrivals[k] as f64)
                .fold(0.0, f64::max);
            yj / 2.0 * core_scale + adjust / (2.0 * sqrt_d)
        })
        .collect();

    for (k, zk) in z.iter().enumerate() {
        state.u[k] += c[k] * zk;
    }
    state.round_index += 1;
    state.y_history.push(y.clone());
    state.z_history.push(z.clone());
    ForwardStep { y, z, x, u_before_fill }
}

pub fn hybrid_round(myopic: &[f64], forward: &[f64]) -> Result<Vec<f64>> {
    if myopic.len() != forward.len() {
        return Err(Error::Shape(format!(
            "myopic has {} entries, forward-looking has {}",
            myopic.len(),
            forward.len()
        )));
    }
    Ok(myopic.iter().zip(forward).map(|(a, b)| (a + b) / 2.0).collect())
}

/// Raises every entry by a common increment, each capped at one, until `available` is spent
/// or every entry is one. Never lowers an entry.
pub fn topup(x: &[f64], available: f64) -> Vec<f64> {
    if available <= 0.0 || x.is_empty() {
        return x.to_vec();
    }
    let mut slack: Vec<f64> = x.iter().map(|&v| (1.0 - v).max(0.0)).collect();
    slack.sort_unstable_by(f64::total_cmp);
    // Smallest increment `delta` with sum_j min(delta, slack_j) = available.
    let mut remaining = available;
    let mut delta = 0.0;
    let mut open = slack.len();
    for &s in &slack {
        let step = (s - delta) * open as f64;
        if step >= remaining {
            delta += remaining / open as f64;
            remaining = 0.0;
            break;
        }
        remaining -= step;
        delta = s;
        open -= 1;
    }
    if remaining > 0.0 {
        delta = f64::INFINITY;
    }
    x.iter().map(|&v| (v + delta.min((1.0 - v).max(0.0))).max(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnknownVariant {
    Myopic,
    Forward,
    Hybrid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UnknownOptions {
    pub topup: bool,
    pub continue_after_cap: bool,
}

/// Per-round output of the unknown-capacity policy, before and after the top-up agent.
#[derive(Clone, Debug)]
pub struct UnknownStep {
    pub myopic: Vec<f64>,
    pub forward: ForwardStep,
    pub hybrid: Vec<f64>,
    /// What the first agent proposes for the chosen variant.
    pub proposed: Vec<f64>,
    /// What is actually emitted.
    pub emitted: Vec<f64>,
}

/// Streams rounds knowing only `d`, `c` and `a`.
#[derive(Clone, Debug)]
pub struct UnknownPolicy {
    c: Vec<f64>,
    a: f64,
    variant: UnknownVariant,
    options: UnknownOptions,
    forward: ForwardState,
    rounds_seen: usize,
    emitted_total: f64,
}

impl UnknownPolicy {
    pub fn new(c: Vec<f64>, a: u64, variant: UnknownVariant, options: UnknownOptions) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Dimension("at least one dimension is required".into()));
        }
        if a == 0 {
            return Err(Error::Domain("per-round capacity must be positive".into()));
        }
        let d = c.len();
        Ok(UnknownPolicy {
            c,
            a: a as f64,
            variant,
            options,
            forward: ForwardState::new(d),
            rounds_seen: 0,
            emitted_total: 0.0,
        })
    }

    pub fn forward_state(&self) -> &ForwardState {
        &self.forward
    }

    /// Capacity released so far minus mass emitted so far.
    pub fn leftover(&self) -> f64 {
        self.rounds_seen as f64 * self.a - self.emitted_total
    }

    pub fn process_round(&mut self, round: &Round) -> UnknownStep {
        let myopic = myopic_round(&self.c, self.a, round);
        let forward = forward_round(
            &mut self.forward,
            round,
            &self.c,
            self.a,
            self.options.continue_after_cap,
        );
        let hybrid = hybrid_round(&myopic, &forward.x).expect("both rules emit one entry per candidate");
        let proposed = match self.variant {
            UnknownVariant::Myopic => myopic.clone(),
            UnknownVariant::Forward => forward.x.clone(),
            UnknownVariant::Hybrid => hybrid.clone(),
        };
        self.rounds_seen += 1;
        let emitted = if self.options.topup {
            let available = self.leftover() - proposed.iter().sum::<f64>();
            topup(&proposed, available)
        } else {
            proposed.clone()
        };
        self.emitted_total += emitted.iter().sum::<f64>();
        UnknownStep {
            myopic,
            forward,
            hybrid,
            proposed,
            emitted,
        }
    }
}

/// Full-horizon record of an unknown-capacity run.
#[derive(Clone, Debug)]
pub struct UnknownRun {
    pub x: FractionalSolution,
    pub myopic: FractionalSolution,
    pub forward: FractionalSolution,
    pub hybrid: FractionalSolution,
    pub y: FractionalSolution,
    pub z: Vec<Vec<f64>>,
    /// Levels each round's water-filling started from.
    pub fill_start: Vec<Vec<f64>>,
}

pub fn run_unknown(inst: &Instance, variant: UnknownVariant, options: UnknownOptions) -> Result<UnknownRun> {
    let a = inst
        .per_round_capacity()
        .ok_or_else(|| Error::Contract("unknown-capacity policies need a per-round capacity `a`".into()))?;
    let mut policy = UnknownPolicy::new(inst.c().to_vec(), a, variant, options)?;
    let mut run = UnknownRun {
        x: FractionalSolution::new(vec![]),
        myopic: FractionalSolution::new(vec![]),
        forward: FractionalSolution::new(vec![]),
        hybrid: FractionalSolution::new(vec![]),
        y: FractionalSolution::new(vec![]),
        z: Vec::new(),
        fill_start: Vec::new(),
    };
    for round in inst.rounds() {
        let step = policy.process_round(round);
        run.x.push_round(step.emitted);
        run.myopic.push_round(step.myopic);
        run.hybrid.push_round(step.hybrid);
        run.forward.push_round(step.forward.x);
        run.y.push_round(step.forward.y);
        run.z.push(step.forward.z);
        run.fill_start.push(step.forward.u_before_fill);
    }
    Ok(run)
}
