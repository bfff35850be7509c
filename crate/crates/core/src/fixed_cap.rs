//! Fixed-capacity policy: known total capacity `K` and known per-dimension arrival totals.
//!
//! The unknown optimum is bracketed by [`opt_bounds_from_marginals`], and one agent runs per
//! power-of-two guess `gamma` inside that bracket. Each round, every agent
//!
//! 1. runs a controlled greedy pass over the round's candidates in a shared random order, raising
//!    each candidate only while it still helps at least `sqrt(d)` dimensions below `gamma/sqrt(d)`;
//! 2. assigns per-dimension adjustments `z` to dimensions that cannot otherwise reach
//!    `gamma/sqrt(d)` even if every later arrival were taken;
//! 3. combines both into a per-candidate fraction.
//!
//! The emitted solution is the average over agents.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::benchmark::{opt_bounds_from_marginals, OptBounds};
use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, Instance, Round};
use crate::math::{ceil_log2_ratio, ceil_sqrt};

/// Running state of one guess.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub gamma: f64,
    /// Total greedy mass so far; at most `K`.
    pub y_used: f64,
    /// Total adjustment mass so far; at most `K`.
    pub z_used: f64,
    /// Greedy utility per dimension, `c_k sum y_j t_jk`.
    pub v: Vec<f64>,
    /// Adjustments from completed rounds.
    pub z_acc: Vec<f64>,
    /// Arrivals per dimension through the current round.
    pub consumed: Vec<u64>,
    pub y_history: Vec<Vec<f64>>,
    pub x_history: Vec<Vec<f64>>,
}

impl AgentState {
    pub fn new(gamma: f64, d: usize) -> Self {
        AgentState {
            gamma,
            y_used: 0.0,
            z_used: 0.0,
            v: vec![0.0; d],
            z_acc: vec![0.0; d],
            consumed: vec![0; d],
            y_history: Vec::new(),
            x_history: Vec::new(),
        }
    }
}

/// Instance-level data shared by all agents.
#[derive(Clone, Debug)]
pub struct PolicyParams {
    pub c: Vec<f64>,
    pub capacity: f64,
    pub marginals: Vec<u64>,
    /// Smallest integer at least `sqrt(d)`.
    pub min_helped: usize,
    pub sqrt_d: f64,
}

impl PolicyParams {
    pub fn new(c: Vec<f64>, capacity: u64, marginals: Vec<u64>) -> Result<Self> {
        if c.is_empty() || c.len() != marginals.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients but {} marginals",
                c.len(),
                marginals.len()
            )));
        }
        let d = c.len();
        Ok(PolicyParams {
            c,
            capacity: capacity as f64,
            marginals,
            min_helped: ceil_sqrt(d as u64) as usize,
            sqrt_d: (d as f64).sqrt(),
        })
    }

    pub fn d(&self) -> usize {
        self.c.len()
    }
}

/// Greedy fractions for `round`, visiting candidates in `order`. Updates `v` and `y_used`.
///
/// A candidate rises until fewer than `min_helped` of its dimensions remain strictly below the
/// threshold; dimension `k` leaves that set at `y = (threshold - v_k) / c_k`, so the stopping
/// point is the `min_helped`-th largest such value.
pub fn controlled_greedy_round(
    agent: &mut AgentState,
    params: &PolicyParams,
    round: &Round,
    order: &[usize],
) -> Vec<f64> {
    let threshold = agent.gamma / params.sqrt_d;
    let m = params.min_helped;
    let mut y = vec![0.0; round.len()];
    let mut exits = Vec::new();
    for &j in order {
        let cand = &round.candidates()[j];
        exits.clear();
        exits.extend(
            cand.indices()
                .iter()
                .filter(|&&k| agent.v[k] < threshold)
                .map(|&k| (threshold - agent.v[k]) / params.c[k]),
        );
        let stop = if exits.len() < m {
            0.0
        } else {
            exits.sort_unstable_by(|a, b| b.total_cmp(a));
            exits[m - 1]
        };
        let yj = stop.min(1.0).min(params.capacity - agent.y_used).max(0.0);
        if yj > 0.0 {
            for &k in cand.indices() {
                agent.v[k] += params.c[k] * yj;
            }
            agent.y_used += yj;
        }
        y[j] = yj;
    }
    y
}

/// Per-dimension adjustments for the current round. Expects this round's greedy pass to be
/// reflected in `v` already. Dimensions are handled in index order and share the capacity left
/// in `z_used`.
pub fn continuous_minimalist_round(agent: &mut AgentState, params: &PolicyParams, arrivals: &[u64]) -> Vec<f64> {
    let threshold = agent.gamma / params.sqrt_d;
    let d = params.d();
    for (seen, &p) in agent.consumed.iter_mut().zip(arrivals) {
        *seen += p;
    }
    let mut z = vec![0.0; d];
    for k in 0..d {
        let ck = params.c[k];
        let remaining_utility = ck * params.marginals[k].saturating_sub(agent.consumed[k]) as f64;
        let accumulated = agent.v[k] + ck * agent.z_acc[k];
        let upper = (arrivals[k] as f64).min(params.capacity - agent.z_used).max(0.0);
        let zk = ((threshold - accumulated - remaining_utility) / ck).clamp(0.0, upper);
        z[k] = zk;
        agent.z_used += zk;
    }
    for (acc, zk) in agent.z_acc.iter_mut().zip(&z) {
        *acc += zk;
    }
    z
}

/// `x_j = (y_j + max_k z_k t_jk / phi_k) / 2`, skipping dimensions absent from the round.
pub fn combine_agent_round(y: &[f64], z: &[f64], round: &Round, arrivals: &[u64]) -> Vec<f64> {
    round
        .candidates()
        .iter()
        .zip(y)
        .map(|(cand, &yj)| {
            let adjust = cand
                .indices()
                .iter()
                .filter(|&&k| arrivals[k] > 0)
                .map(|&k| z[k] / arrivals[k] as f64)
                .fold(0.0, f64::max);
            (yj + adjust) / 2.0
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FixedPolicy {
    params: PolicyParams,
    bounds: OptBounds,
    agents: Vec<AgentState>,
    seed: u64,
    round_index: u64,
}

impl FixedPolicy {
    /// One agent per guess `2^(r-1) * under`, `r = 1..=max(1, ceil(log2(over/under)))`; no agents
    /// when `under = 0`.
    pub fn new(c: Vec<f64>, capacity: u64, marginals: Vec<u64>, seed: u64) -> Result<Self> {
        let params = PolicyParams::new(c, capacity, marginals)?;
        let bounds = opt_bounds_from_marginals(&params.c, capacity, &params.marginals);
        let d = params.d();
        let agents = if bounds.under > 0.0 {
            let count = ceil_log2_ratio(bounds.over, bounds.under).max(1);
            (0..count)
                .map(|r| AgentState::new(bounds.under * 2f64.powi(r as i32), d))
                .collect()
        } else {
            Vec::new()
        };
        Ok(FixedPolicy {
            params,
            bounds,
            agents,
            seed,
            round_index: 0,
        })
    }

    pub fn for_instance(inst: &Instance, seed: u64) -> Result<Self> {
        Self::new(inst.c().to_vec(), inst.capacity(), inst.marginals(), seed)
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn bounds(&self) -> OptBounds {
        self.bounds
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    /// Candidate order for the next round, drawn from a stream keyed by the round index.
    fn shuffled_order(&self, len: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.round_index);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Runs every agent on `round` and returns the agent average.
    pub fn process_round(&mut self, round: &Round) -> Vec<f64> {
        let arrivals = round.arrivals(self.params.d());
        let order = self.shuffled_order(round.len());
        self.round_index += 1;
        let mut avg = vec![0.0; round.len()];
        for agent in &mut self.agents {
            let y = controlled_greedy_round(agent, &self.params, round, &order);
            let z = continuous_minimalist_round(agent, &self.params, &arrivals);
            let x = combine_agent_round(&y, &z, round, &arrivals);
            for (a, xj) in avg.iter_mut().zip(&x) {
                *a += xj;
            }
            agent.y_history.push(y);
            agent.x_history.push(x);
        }
        if !self.agents.is_empty() {
            let r = self.agents.len() as f64;
            for a in &mut avg {
                *a /= r;
            }
        }
        avg
    }
}

/// Emitted solution of a full run and every agent's own solutions.
#[derive(Clone, Debug)]
pub struct FixedRun {
    pub x: FractionalSolution,
    pub agents: Vec<AgentRun>,
    pub bounds: OptBounds,
}

#[derive(Clone, Debug)]
pub struct AgentRun {
    pub gamma: f64,
    pub x: FractionalSolution,
    pub y: FractionalSolution,
}

pub fn run_fixed(inst: &Instance, seed: u64) -> Result<FixedRun> {
    let mut policy = FixedPolicy::for_instance(inst, seed)?;
    let x = inst.rounds().iter().map(|r| policy.process_round(r)).collect();
    let agents = policy
        .agents
        .into_iter()
        .map(|a| AgentRun {
            gamma: a.gamma,
            x: FractionalSolution::new(a.x_history),
            y: FractionalSolution::new(a.y_history),
        })
        .collect();
    Ok(FixedRun {
        x: FractionalSolution::new(x),
        agents,
        bounds: policy.bounds,
    })
}
