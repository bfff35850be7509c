//! Online dependent rounding with a single random offset.
//!
//! Candidates are laid end to end on the real line, each occupying `[sum, sum + x_j)`. One
//! offset `pos` is drawn up front and a candidate is selected iff its interval contains a point
//! `l + pos` with `l` a nonnegative integer. Every point is owned by exactly one interval, so the
//! marginal of candidate `j` is exactly `x_j` and the selection count is `floor` or `ceil` of the
//! running sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, Instance, EPSILON};

/// Running sums this close (relative) to an integer are treated as that integer, so a solution
/// whose floating-point total lands a few ulps above `K` still selects at most `K`.
const SNAP_TOLERANCE: f64 = 1e-10;

fn snap(s: f64) -> f64 {
    let r = s.round();
    if (s - r).abs() <= SNAP_TOLERANCE * s.abs().max(1.0) {
        r
    } else {
        s
    }
}

#[derive(Clone, Debug)]
pub struct Rounder {
    pos: f64,
    sum: f64,
    compensation: f64,
    round: usize,
    selected: Vec<(usize, usize)>,
}

impl Rounder {
    /// Draws `pos` uniformly from `[0, 1)` with a generator seeded by `seed`.
    pub fn new(seed: u64) -> Self {
        let pos = ChaCha8Rng::seed_from_u64(seed).gen::<f64>();
        Self::at(pos)
    }

    /// A rounder with a prescribed offset, for exact analysis over `pos`.
    pub fn with_pos(pos: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&pos) {
            return Err(Error::Domain(format!("offset {pos} outside [0, 1)")));
        }
        Ok(Self::at(pos))
    }

    fn at(pos: f64) -> Self {
        Rounder {
            pos,
            sum: 0.0,
            compensation: 0.0,
            round: 0,
            selected: Vec::new(),
        }
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    /// Total length processed so far.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// `(round, position)` pairs selected so far, in processing order.
    pub fn selected(&self) -> &[(usize, usize)] {
        &self.selected
    }

    /// Number of grid points `l + pos` strictly below `s`. Monotone in `s`, so consecutive
    /// differences tile the grid points among the intervals.
    fn points_below(&self, s: f64) -> u64 {
        if s <= self.pos {
            return 0;
        }
        let mut l = (s - self.pos).floor().max(0.0) as u64;
        while l > 0 && l as f64 - 1.0 + self.pos >= s {
            l -= 1;
        }
        while l as f64 + self.pos < s {
            l += 1;
        }
        l
    }

    /// Feeds one round and returns the selected positions within it.
    pub fn process_round(&mut self, x_i: &[f64]) -> Result<Vec<usize>> {
        if let Some((j, &bad)) = x_i
            .iter()
            .enumerate()
            .find(|(_, &x)| !(-EPSILON..=1.0 + EPSILON).contains(&x))
        {
            return Err(Error::Domain(format!("x[{j}] = {bad} outside [0, 1]")));
        }
        let mut picked = Vec::new();
        for (j, &x) in x_i.iter().enumerate() {
            let before = self.sum;
            let y = x.max(0.0) - self.compensation;
            let t = self.sum + y;
            self.compensation = (t - self.sum) - y;
            self.sum = t;
            if self.points_below(snap(self.sum)) > self.points_below(snap(before)) {
                picked.push(j);
                self.selected.push((self.round, j));
            }
        }
        self.round += 1;
        Ok(picked)
    }
}

/// Rounds a whole solution with one rounder; returns `(round, position)` pairs.
pub fn select_offline(inst: &Instance, x: &FractionalSolution, seed: u64) -> Result<Vec<(usize, usize)>> {
    select_with(inst, x, Rounder::new(seed))
}

pub fn select_with_pos(inst: &Instance, x: &FractionalSolution, pos: f64) -> Result<Vec<(usize, usize)>> {
    select_with(inst, x, Rounder::with_pos(pos)?)
}

fn select_with(inst: &Instance, x: &FractionalSolution, mut rounder: Rounder) -> Result<Vec<(usize, usize)>> {
    x.check_shape(inst)?;
    let total = x.total();
    if total > inst.capacity() as f64 + EPSILON {
        return Err(Error::Feasibility(format!(
            "total {total} exceeds capacity {}",
            inst.capacity()
        )));
    }
    for xi in x.rounds() {
        rounder.process_round(xi)?;
    }
    Ok(rounder.selected)
}

/// Exact distribution of the rounding outcome over the offset `pos ~ U[0, 1)`.
#[derive(Clone, Debug)]
pub struct SelectionMeasure {
    /// Lebesgue measure of the offsets that select each candidate.
    pub marginals: Vec<Vec<f64>>,
    pub min_selected: usize,
    pub max_selected: usize,
}

/// Computes [`SelectionMeasure`] by interval arithmetic: the outcome only changes where `pos`
/// crosses the fractional part of a running sum, so the rounder is evaluated once inside each
/// piece and the piece length is credited to every candidate it selects.
pub fn selection_measure(x: &[Vec<f64>]) -> Result<SelectionMeasure> {
    let mut probe = Rounder::at(0.0);
    let mut breaks = vec![0.0, 1.0];
    for xi in x {
        for &xj in xi {
            probe.process_round(&[xj])?;
            let s = snap(probe.sum);
            breaks.push(s - s.floor());
        }
    }
    breaks.sort_unstable_by(f64::total_cmp);
    breaks.dedup();

    let mut marginals: Vec<Vec<f64>> = x.iter().map(|xi| vec![0.0; xi.len()]).collect();
    let mut min_selected = usize::MAX;
    let mut max_selected = 0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mut rounder = Rounder::at(0.5 * (lo + hi));
        for xi in x {
            rounder.process_round(xi)?;
        }
        for &(i, j) in &rounder.selected {
            marginals[i][j] += hi - lo;
        }
        min_selected = min_selected.min(rounder.selected.len());
        max_selected = max_selected.max(rounder.selected.len());
    }
    Ok(SelectionMeasure {
        marginals,
        min_selected,
        max_selected,
    })
}
