//! Dense two-phase primal simplex over bounded variables.
//!
//! Every row `a·x (<=|>=|=) b` receives a slack `s` with `a·x + s = b` and bounds chosen by the
//! relation, so the slack columns form the initial identity basis. Nonbasic variables sit at a
//! finite bound. Rows whose slack starts out of bounds get an artificial variable; phase one
//! drives their sum to zero, after which artificials are pinned to `[0, 0]`.
//!
//! Pricing is Dantzig's rule until a run of degenerate pivots, after which Bland's rule is used
//! for the rest of the solve.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;
const MAX_ITERATIONS: usize = 200_000;
/// Upper bound on tableau entries (rows times columns).
pub const MAX_TABLEAU_ENTRIES: usize = 16_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// `maximize objective·x` subject to linear rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable; at least one bound must be finite.
    pub fn add_variable(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Row { coeffs, relation, rhs });
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any bound or row by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((&v, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = lhs - row.rhs;
            worst = worst.max(match row.relation {
                Relation::Le => gap,
                Relation::Ge => -gap,
                Relation::Eq => gap.abs(),
            });
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution> {
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_infinite() && hi.is_infinite() {
                return Err(Error::Solver(format!("variable {j} has no finite bound")));
            }
            if lo > hi {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    value: f64::NAN,
                    x: vec![],
                });
            }
        }
        Tableau::build(self)?.run(self)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

struct Tableau {
    m: usize,
    cols: usize,
    structural: usize,
    /// Row-major `m x cols`, always equal to `B^-1 A`.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    artificial_start: usize,
    /// Original column data for recomputing basic values.
    a_cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    pricing: Pricing,
    degenerate_run: usize,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let m = lp.rows.len();
        let structural = lp.objective.len();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut value: Vec<f64> = lower
            .iter()
            .zip(&upper)
            .map(|(&lo, &hi)| if lo.is_finite() { lo } else { hi })
            .collect();

        let mut a_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); structural];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    a_cols[j].push((i, a));
                }
            }
        }

        // Slacks: a·x + s = b.
        let mut residual: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        for (j, col) in a_cols.iter().enumerate() {
            for &(i, a) in col {
                residual[i] -= a * value[j];
            }
        }
        let mut artificial_rows = Vec::new();
        for (i, row) in lp.rows.iter().enumerate() {
            let (lo, hi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            a_cols.push(vec![(i, 1.0)]);
            let r = residual[i];
            if r >= lo && r <= hi {
                value.push(r);
            } else {
                value.push(if r < lo { lo } else { hi });
                artificial_rows.push(i);
            }
        }
        let artificial_start = structural + m;
        for &i in &artificial_rows {
            let s = value[structural + i];
            let sign = if residual[i] - s >= 0.0 { 1.0 } else { -1.0 };
            lower.push(0.0);
            upper.push(f64::INFINITY);
            a_cols.push(vec![(i, sign)]);
            value.push((residual[i] - s) * sign);
        }
        let cols = lower.len();
        let size = m.saturating_mul(cols);
        if size > MAX_TABLEAU_ENTRIES {
            return Err(Error::Size {
                what: "simplex tableau entries",
                size,
                cap: MAX_TABLEAU_ENTRIES,
            });
        }

        // Initial basis: the slack of each row, or its artificial when the slack is out of bounds.
        let mut basis: Vec<usize> = (0..m).map(|i| structural + i).collect();
        let mut t = vec![0.0; size];
        for (j, col) in a_cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * cols + j] = a;
            }
        }
        for (idx, &i) in artificial_rows.iter().enumerate() {
            let art = artificial_start + idx;
            basis[i] = art;
            // Normalize the row so the artificial column is +1.
            let sign = a_cols[art][0].1;
            if sign < 0.0 {
                for v in &mut t[i * cols..(i + 1) * cols] {
                    *v = -*v;
                }
            }
        }
        let mut is_basic = vec![false; cols];
        for &b in &basis {
            is_basic[b] = true;
        }
        Ok(Tableau {
            m,
            cols,
            structural,
            t,
            lower,
            upper,
            value,
            basis,
            is_basic,
            artificial_start,
            a_cols,
            rhs: lp.rows.iter().map(|r| r.rhs).collect(),
            pricing: Pricing::Dantzig,
            degenerate_run: 0,
            iterations: 0,
        })
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    /// Runs primal simplex iterations on `cost` until optimal or unbounded.
    fn optimize(&mut self, cost: &[f64]) -> Result<LpStatus> {
        let mut d = self.reduced_costs(cost);
        loop {
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::Solver("iteration limit reached".into()));
            }
            let Some((q, dir)) = self.choose_entering(&d) else {
                return Ok(LpStatus::Optimal);
            };
            match self.ratio_test(q, dir) {
                None => return Ok(LpStatus::Unbounded),
                Some((theta, leave)) => {
                    if theta <= 1e-12 {
                        self.degenerate_run += 1;
                        if self.degenerate_run >= DEGENERATE_STREAK {
                            self.pricing = Pricing::Bland;
                        }
                    } else {
                        self.degenerate_run = 0;
                    }
                    for i in 0..self.m {
                        let a = self.t[i * self.cols + q];
                        if a != 0.0 {
                            self.value[self.basis[i]] -= dir * theta * a;
                        }
                    }
                    self.value[q] += dir * theta;
                    if let Some((r, to_upper)) = leave {
                        let out = self.basis[r];
                        self.value[out] = if to_upper { self.upper[out] } else { self.lower[out] };
                        self.pivot(r, q, &mut d);
                    }
                }
            }
        }
    }

    fn choose_entering(&self, d: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for (j, &dj) in d.iter().enumerate().take(self.cols) {
            if self.is_basic[j] || self.lower[j] == self.upper[j] {
                continue;
            }
            let dir = if dj > COST_TOL && self.value[j] < self.upper[j] {
                1.0
            } else if dj < -COST_TOL && self.value[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            match self.pricing {
                Pricing::Bland => return Some((j, dir)),
                Pricing::Dantzig => {
                    if dj.abs() > best_score {
                        best_score = dj.abs();
                        best = Some((j, dir));
                    }
                }
            }
        }
        best
    }

    /// Step length and the blocking row with the bound its variable reaches. `None` step means
    /// unbounded; `None` row means the entering variable flips to its opposite bound.
    #[allow(clippy::type_complexity)]
    fn ratio_test(&self, q: usize, dir: f64) -> Option<(f64, Option<(usize, bool)>)> {
        let mut theta = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_pivot = 0.0;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.cols + q];
            let b = self.basis[i];
            let (limit, to_upper) = if alpha > PIVOT_TOL {
                if self.lower[b].is_infinite() {
                    continue;
                }
                (((self.value[b] - self.lower[b]) / alpha).max(0.0), false)
            } else if alpha < -PIVOT_TOL {
                if self.upper[b].is_infinite() {
                    continue;
                }
                (((self.upper[b] - self.value[b]) / -alpha).max(0.0), true)
            } else {
                continue;
            };
            let better = match leave {
                _ if limit < theta - 1e-12 => true,
                None => limit <= theta,
                Some((r, _)) if limit <= theta + 1e-12 => match self.pricing {
                    Pricing::Bland => b < self.basis[r],
                    Pricing::Dantzig => alpha.abs() > leave_pivot,
                },
                _ => false,
            };
            if better {
                theta = limit.min(theta).max(0.0);
                leave = Some((i, to_upper));
                leave_pivot = alpha.abs();
            }
        }
        if theta.is_infinite() {
            return None;
        }
        Some((theta, leave))
    }

    fn pivot(&mut self, r: usize, q: usize, d: &mut [f64]) {
        let cols = self.cols;
        let p = self.t[r * cols + q];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f != 0.0 {
                let row = &mut self.t[i * cols..(i + 1) * cols];
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = d[q];
        if f != 0.0 {
            for (v, &pr) in d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            d[q] = 0.0;
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }

    /// Recomputes basic values from the nonbasic ones as `B^-1 (b - N x_N)`, reading `B^-1`
    /// from the slack columns, which started as the identity.
    fn refresh_basic_values(&mut self) {
        let mut residual = self.rhs.clone();
        for j in 0..self.cols {
            if !self.is_basic[j] && self.value[j] != 0.0 {
                for &(i, a) in &self.a_cols[j] {
                    residual[i] -= a * self.value[j];
                }
            }
        }
        for i in 0..self.m {
            let row = &self.t[i * self.cols + self.structural..i * self.cols + self.structural + self.m];
            let v: f64 = row.iter().zip(&residual).map(|(a, r)| a * r).sum();
            self.value[self.basis[i]] = v.clamp(self.lower[self.basis[i]], self.upper[self.basis[i]]);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if self.artificial_start < self.cols {
            let mut cost = vec![0.0; self.cols];
            for c in &mut cost[self.artificial_start..] {
                *c = -1.0;
            }
            self.optimize(&cost)?;
            self.refresh_basic_values();
            let infeasibility: f64 = self.value[self.artificial_start..].iter().sum();
            if infeasibility > 1e-9 * scale {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    value: f64::NAN,
                    x: vec![],
                });
            }
            for j in self.artificial_start..self.cols {
                self.upper[j] = 0.0;
                self.value[j] = 0.0;
            }
            self.pricing = Pricing::Dantzig;
            self.degenerate_run = 0;
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.structural].copy_from_slice(&lp.objective);
        let status = self.optimize(&cost)?;
        self.refresh_basic_values();
        let x = self.value[..self.structural].to_vec();
        let value = lp.objective_value(&x);
        Ok(LpSolution { status, value, x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_max() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(3.0, 0.0, 3.0);
        let y = lp.add_variable(2.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.add_constraint(vec![(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 11.0).abs() < 1e-9);
        assert!((s.x[0] - 3.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // max -x - y, x + y >= 2, x - y = 0
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(-1.0, 0.0, 10.0);
        let y = lp.add_variable(-1.0, 0.0, 10.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Eq, 0.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 2.0).abs() < 1e-9);
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(1.0, 0.0, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new();
        let x = lp.add_variable(1.0, 0.0, f64::INFINITY);
        let y = lp.add_variable(0.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn max_min_with_upper_bounds() {
        // max t, t <= x1 + x2, t <= x2 + x3, x1 + x2 + x3 <= 1, 0 <= x <= 1: optimum 1 at x2 = 1
        let mut lp = LinearProgram::new();
        let t = lp.add_variable(1.0, 0.0, f64::INFINITY);
        let xs: Vec<usize> = (0..3).map(|_| lp.add_variable(0.0, 0.0, 1.0)).collect();
        lp.add_constraint(vec![(t, 1.0), (xs[0], -1.0), (xs[1], -1.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(t, 1.0), (xs[1], -1.0), (xs[2], -1.0)], Relation::Le, 0.0);
        lp.add_constraint(xs.iter().map(|&j| (j, 1.0)).collect(), Relation::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn size_cap() {
        let mut lp = LinearProgram::new();
        for _ in 0..5000 {
            lp.add_variable(1.0, 0.0, 1.0);
        }
        for _ in 0..4000 {
            lp.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        }
        assert!(matches!(lp.solve(), Err(Error::Size { .. })));
    }

    /// Vertex enumeration oracle for two bounded variables.
    fn brute_force_2d(obj: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
        let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
        lines.extend([
            ([1.0, 0.0], 0.0),
            ([0.0, 1.0], 0.0),
            ([1.0, 0.0], 1.0),
            ([0.0, 1.0], 1.0),
        ]);
        let mut best: Option<f64> = None;
        for a in 0..lines.len() {
            for b in a + 1..lines.len() {
                let (p, r) = lines[a];
                let (q, s) = lines[b];
                let det = p[0] * q[1] - p[1] * q[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (r * q[1] - p[1] * s) / det;
                let y = (p[0] * s - r * q[0]) / det;
                let ok = (-1e-9..=1.0 + 1e-9).contains(&x)
                    && (-1e-9..=1.0 + 1e-9).contains(&y)
                    && rows.iter().all(|(a, b)| a[0] * x + a[1] * y <= b + 1e-9);
                if ok {
                    let v = obj[0] * x + obj[1] * y;
                    best = Some(best.map_or(v, |w: f64| w.max(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            obj in proptest::array::uniform2(-3.0f64..3.0),
            rows in proptest::collection::vec((proptest::array::uniform2(-2.0f64..2.0), -1.0f64..2.0), 0..5),
        ) {
            let mut lp = LinearProgram::new();
            lp.add_variable(obj[0], 0.0, 1.0);
            lp.add_variable(obj[1], 0.0, 1.0);
            for (a, b) in &rows {
                lp.add_constraint(vec![(0, a[0]), (1, a[1])], Relation::Le, *b);
            }
            let s = lp.solve().unwrap();
            match brute_force_2d(obj, &rows) {
                Some(v) => {
                    prop_assert_eq!(s.status, LpStatus::Optimal);
                    prop_assert!((s.value - v).abs() < 1e-7, "{} vs {}", s.value, v);
                    prop_assert!(lp.max_violation(&s.x) < 1e-7);
                }
                None => prop_assert_eq!(s.status, LpStatus::Infeasible),
            }
        }
    }
}
