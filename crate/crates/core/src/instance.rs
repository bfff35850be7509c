//! Problem data: candidates, rounds, instances and fractional solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by every feasibility comparison.
pub const EPSILON: f64 = 1e-9;

/// Sorted, duplicate-free set of attribute indices; the sparse form of a binary type vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeVector(Vec<usize>);

impl AttributeVector {
    /// Builds a vector from strictly increasing indices below `d`.
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invariant(
                "rounds",
                format!(
                    "attribute indices must be strictly increasing, found {} then {}",
                    w[0], w[1]
                ),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= d {
                return Err(Error::invariant(
                    "rounds",
                    format!("attribute index {last} out of range for d = {d}"),
                ));
            }
        }
        Ok(AttributeVector(indices))
    }

    /// All of `0..d`.
    pub fn full(d: usize) -> Self {
        AttributeVector((0..d).collect())
    }

    pub fn singleton(k: usize) -> Self {
        AttributeVector(vec![k])
    }

    /// Indices `start..end`.
    pub fn range(start: usize, end: usize) -> Self {
        AttributeVector((start..end).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn popcount(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }
}

/// The candidates arriving in one round, in arrival order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Round(Vec<AttributeVector>);

impl Round {
    pub fn new(candidates: Vec<AttributeVector>) -> Self {
        Round(candidates)
    }

    pub fn candidates(&self) -> &[AttributeVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-dimension arrival counts of this round.
    pub fn arrivals(&self, d: usize) -> Vec<u64> {
        let mut phi = vec![0u64; d];
        for cand in &self.0 {
            for &k in cand.indices() {
                phi[k] += 1;
            }
        }
        phi
    }
}

/// A validated problem instance.
///
/// Invariants: `c.len() == d`, every `c_k` is finite and positive with minimum exactly 1,
/// candidate indices are below `d`, and `capacity == n * a` when `a` is present.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    d: usize,
    c: Vec<f64>,
    capacity: u64,
    per_round_capacity: Option<u64>,
    rounds: Vec<Round>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    d: usize,
    c: Vec<f64>,
    #[serde(rename = "K")]
    capacity: u64,
    #[serde(default)]
    a: Option<u64>,
    rounds: Vec<Vec<Vec<usize>>>,
}

impl Instance {
    pub fn new(
        d: usize,
        c: Vec<f64>,
        capacity: u64,
        per_round_capacity: Option<u64>,
        rounds: Vec<Round>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invariant("d", "d must be positive"));
        }
        if c.len() != d {
            return Err(Error::invariant(
                "c",
                format!("expected {d} coefficients, got {}", c.len()),
            ));
        }
        if c.iter().any(|&ck| !ck.is_finite() || ck <= 0.0) {
            return Err(Error::invariant("c", "coefficients must be finite and positive"));
        }
        let min_c = c.iter().copied().fold(f64::INFINITY, f64::min);
        if min_c != 1.0 {
            return Err(Error::invariant("c", format!("min c must equal 1, got {min_c}")));
        }
        if let Some(a) = per_round_capacity {
            if a == 0 {
                return Err(Error::invariant("a", "per-round capacity must be positive"));
            }
            let n = rounds.len() as u64;
            if n.checked_mul(a) != Some(capacity) {
                return Err(Error::invariant(
                    "K",
                    format!("K ≠ n·a: K = {capacity}, n = {n}, a = {a}"),
                ));
            }
        }
        for round in &rounds {
            for cand in round.candidates() {
                AttributeVector::new(cand.indices().to_vec(), d)?;
            }
        }
        Ok(Instance {
            d,
            c,
            capacity,
            per_round_capacity,
            rounds,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Total capacity `K`.
    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Per-round capacity `a`, present only in the unknown-capacity scenario.
    pub fn per_round_capacity(&self) -> Option<u64> {
        self.per_round_capacity
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn n(&self) -> usize {
        self.rounds.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.rounds.iter().map(Round::len).sum()
    }

    /// Total arrivals per dimension over the whole horizon.
    pub fn marginals(&self) -> Vec<u64> {
        let mut phi = vec![0u64; self.d];
        for round in &self.rounds {
            for (acc, r) in phi.iter_mut().zip(round.arrivals(self.d)) {
                *acc += r;
            }
        }
        phi
    }

    /// Per-round arrival counts, `result[i][k]`.
    pub fn round_arrivals(&self) -> Vec<Vec<u64>> {
        self.rounds.iter().map(|r| r.arrivals(self.d)).collect()
    }

    /// Serializes a single round in the document format (used for prefix comparisons).
    pub fn round_json(&self, i: usize) -> String {
        let raw: Vec<&[usize]> = self.rounds[i].candidates().iter().map(|c| c.indices()).collect();
        serde_json::to_string(&raw).expect("round serialization cannot fail")
    }
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let d = doc.d;
    let rounds = doc
        .rounds
        .into_iter()
        .map(|round| {
            round
                .into_iter()
                .map(|cand| AttributeVector::new(cand, d))
                .collect::<Result<Vec<_>>>()
                .map(Round::new)
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(d, doc.c, doc.capacity, doc.a, rounds)
}

pub fn serialize_instance(inst: &Instance) -> String {
    let doc = InstanceDoc {
        d: inst.d,
        c: inst.c.clone(),
        capacity: inst.capacity,
        a: inst.per_round_capacity,
        rounds: inst
            .rounds
            .iter()
            .map(|r| r.candidates().iter().map(|c| c.indices().to_vec()).collect())
            .collect(),
    };
    serde_json::to_string(&doc).expect("instance serialization cannot fail")
}

/// Ex-ante selection probabilities indexed by (round, position in round).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FractionalSolution(Vec<Vec<f64>>);

impl FractionalSolution {
    pub fn new(rounds: Vec<Vec<f64>>) -> Self {
        FractionalSolution(rounds)
    }

    pub fn zeros(inst: &Instance) -> Self {
        FractionalSolution(inst.rounds().iter().map(|r| vec![0.0; r.len()]).collect())
    }

    pub fn filled(inst: &Instance, value: f64) -> Self {
        FractionalSolution(inst.rounds().iter().map(|r| vec![value; r.len()]).collect())
    }

    pub fn rounds(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn rounds_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.0
    }

    pub fn push_round(&mut self, x: Vec<f64>) {
        self.0.push(x);
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().flatten().copied()
    }

    pub fn check_shape(&self, inst: &Instance) -> Result<()> {
        if self.0.len() != inst.n() {
            return Err(Error::Shape(format!(
                "solution has {} rounds, instance has {}",
                self.0.len(),
                inst.n()
            )));
        }
        for (i, (xi, round)) in self.0.iter().zip(inst.rounds()).enumerate() {
            if xi.len() != round.len() {
                return Err(Error::Shape(format!(
                    "round {i}: solution has {} entries, round has {} candidates",
                    xi.len(),
                    round.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("solution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Per-dimension utilities `c_k * sum_j x_j t_jk`.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityVector(pub Vec<f64>);

impl UtilityVector {
    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Weighted per-dimension coverage of an arbitrary per-round weighting.
pub(crate) fn utilities_of(inst: &Instance, x: &[Vec<f64>]) -> Vec<f64> {
    let mut u = vec![0.0; inst.d()];
    for (round, xi) in inst.rounds().iter().zip(x) {
        for (cand, &xj) in round.candidates().iter().zip(xi) {
            for &k in cand.indices() {
                u[k] += xj;
            }
        }
    }
    for (uk, ck) in u.iter_mut().zip(inst.c()) {
        *uk *= ck;
    }
    u
}

/// Least weighted utility `min_k c_k sum_j x_j t_jk` together with the full utility vector.
pub fn least_utility(inst: &Instance, x: &FractionalSolution) -> Result<(f64, UtilityVector)> {
    x.check_shape(inst)?;
    let u = UtilityVector(utilities_of(inst, x.rounds()));
    Ok((u.min(), u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeasibilityMode {
    /// `sum x <= K` and `0 <= x <= 1`.
    Total,
    /// `Total` plus `sum over rounds 1..=i <= i * a` for every `i`.
    PerRoundPrefix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn feasibility_report(
    inst: &Instance,
    x: &FractionalSolution,
    mode: FeasibilityMode,
    eps: f64,
) -> Result<FeasibilityReport> {
    x.check_shape(inst)?;
    let mut report = FeasibilityReport::default();
    for (i, xi) in x.rounds().iter().enumerate() {
        for (j, &xj) in xi.iter().enumerate() {
            if !(xj >= -eps && xj <= 1.0 + eps) {
                report.violations.push(format!("x[{i}][{j}] = {xj} outside [0, 1]"));
            }
        }
    }
    let total = x.total();
    if total > inst.capacity() as f64 + eps {
        report
            .violations
            .push(format!("total {total} exceeds capacity {}", inst.capacity()));
    }
    if mode == FeasibilityMode::PerRoundPrefix {
        match inst.per_round_capacity() {
            None => report
                .violations
                .push("per-round prefix check needs a per-round capacity".to_string()),
            Some(a) => {
                let mut prefix = 0.0;
                for (i, xi) in x.rounds().iter().enumerate() {
                    prefix += xi.iter().sum::<f64>();
                    let limit = (i as f64 + 1.0) * a as f64;
                    if prefix > limit + eps {
                        report
                            .violations
                            .push(format!("prefix through round {i} is {prefix}, limit {limit}"));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// `true` iff `x` has the instance's shape and satisfies every constraint of `mode` within `EPSILON`.
pub fn validate_feasibility(inst: &Instance, x: &FractionalSolution, mode: FeasibilityMode) -> bool {
    feasibility_report(inst, x, mode, EPSILON).is_ok_and(|r| r.is_feasible())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(v: &[usize], d: usize) -> AttributeVector {
        AttributeVector::new(v.to_vec(), d).unwrap()
    }

    fn inst(d: usize, c: Vec<f64>, k: u64, a: Option<u64>, rounds: &[&[&[usize]]]) -> Instance {
        let rounds = rounds
            .iter()
            .map(|r| Round::new(r.iter().map(|cand| av(cand, d)).collect()))
            .collect();
        Instance::new(d, c, k, a, rounds).unwrap()
    }

    #[test]
    fn parses_minimal_document() {
        let i = parse_instance(r#"{"d":2,"c":[1,1],"K":2,"rounds":[[[0],[1]]]}"#).unwrap();
        assert_eq!(i.n(), 1);
        assert_eq!(i.candidate_count(), 2);
        assert_eq!(i.per_round_capacity(), None);
    }

    #[test]
    fn rejects_bad_documents() {
        let e = parse_instance(r#"{"d":2,"c":[2,3],"K":2,"rounds":[]}"#).unwrap_err();
        assert!(
            matches!(&e, Error::Invariant { field, message } if field == "c" && message.contains("min c must equal 1"))
        );
        let e = parse_instance(r#"{"d":1,"c":[1],"K":5,"a":2,"rounds":[[],[],[]]}"#).unwrap_err();
        assert!(matches!(&e, Error::Invariant { field, .. } if field == "K"));
        assert!(matches!(parse_instance("{"), Err(Error::Schema(_))));
        assert!(matches!(
            parse_instance(r#"{"d":2,"c":[1,1],"K":2,"rounds":[[[1,0]]]}"#),
            Err(Error::Invariant { .. })
        ));
        assert!(matches!(
            parse_instance(r#"{"d":2,"c":[1,1],"K":2,"rounds":[[[2]]]}"#),
            Err(Error::Invariant { .. })
        ));
    }

    #[test]
    fn round_trips() {
        let i = inst(3, vec![1.0, 2.5, 1.0 / 3.0 + 1.0], 4, Some(2), &[&[&[0, 2], &[1]], &[]]);
        let text = serialize_instance(&i);
        assert!(text.contains("\"a\":2"));
        assert_eq!(parse_instance(&text).unwrap(), i);
        let empty = inst(1, vec![1.0], 0, None, &[]);
        let text = serialize_instance(&empty);
        assert!(text.contains("\"rounds\":[]"));
        assert_eq!(parse_instance(&text).unwrap(), empty);
    }

    #[test]
    fn marginals_count_arrivals() {
        let i = inst(2, vec![1.0, 1.0], 2, None, &[&[&[0], &[0, 1]]]);
        assert_eq!(i.marginals(), vec![2, 1]);
        assert_eq!(inst(3, vec![1.0; 3], 0, None, &[]).marginals(), vec![0, 0, 0]);
    }

    #[test]
    fn least_utility_hand_values() {
        let i = inst(2, vec![1.0, 2.0], 1, None, &[&[&[0, 1]]]);
        let (lu, u) = least_utility(&i, &FractionalSolution::new(vec![vec![0.5]])).unwrap();
        assert_eq!(u.0, vec![0.5, 1.0]);
        assert_eq!(lu, 0.5);
        let (lu, _) = least_utility(&i, &FractionalSolution::zeros(&i)).unwrap();
        assert_eq!(lu, 0.0);
        assert!(matches!(
            least_utility(&i, &FractionalSolution::new(vec![])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn feasibility_modes() {
        let i = inst(1, vec![1.0], 3, None, &[&[&[0], &[0], &[0]]]);
        assert!(validate_feasibility(
            &i,
            &FractionalSolution::filled(&i, 1.0),
            FeasibilityMode::Total
        ));
        let i2 = inst(1, vec![1.0], 2, None, &[&[&[0], &[0], &[0]]]);
        assert!(!validate_feasibility(
            &i2,
            &FractionalSolution::filled(&i2, 1.0),
            FeasibilityMode::Total
        ));

        let p = inst(1, vec![1.0], 3, Some(1), &[&[&[0], &[0]], &[], &[]]);
        let x = FractionalSolution::new(vec![vec![0.75, 0.75], vec![], vec![]]);
        assert!(validate_feasibility(&p, &x, FeasibilityMode::Total));
        assert!(!validate_feasibility(&p, &x, FeasibilityMode::PerRoundPrefix));
        let r = feasibility_report(&p, &x, FeasibilityMode::PerRoundPrefix, EPSILON).unwrap();
        assert_eq!(r.violations.len(), 1);
    }
}
