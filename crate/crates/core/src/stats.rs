//! Per-round arrival statistics used by the unknown-capacity guarantees.

use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceStats {
    /// Largest per-round arrival count of each dimension.
    pub b_up: Vec<u64>,
    /// Smallest per-round arrival count of each dimension.
    pub b_lo: Vec<u64>,
    /// Fluctuation `max_k b_up[k] / b_lo[k]`; `None` when some `b_lo[k] == 0`.
    pub frak_b: Option<f64>,
    /// Largest per-round arrival count over all dimensions.
    pub b_bar: u64,
    pub delta_up: f64,
    pub delta_lo: f64,
    pub eta: f64,
    pub theta_lo: f64,
    pub theta_up: f64,
    pub loosely_capacitated: bool,
}

impl InstanceStats {
    /// The fluctuation, or a `Degenerate` error naming the first dimension missing from some round.
    pub fn bounded_fluctuation(&self) -> Result<f64> {
        self.frak_b.ok_or_else(|| {
            let k = self.b_lo.iter().position(|&b| b == 0).unwrap_or(0);
            Error::Degenerate(format!("dimension {k} is absent from some round"))
        })
    }
}

/// Requires a per-round capacity. A zero `b_lo[k]` leaves `frak_b` undefined but every other
/// field is still computed.
pub fn instance_stats(inst: &Instance) -> Result<InstanceStats> {
    let a = inst
        .per_round_capacity()
        .ok_or_else(|| Error::Contract("instance statistics need a per-round capacity".into()))? as f64;
    let d = inst.d();
    let c = inst.c();
    let arrivals = inst.round_arrivals();

    let (b_up, b_lo): (Vec<u64>, Vec<u64>) = if arrivals.is_empty() {
        (vec![0; d], vec![0; d])
    } else {
        (0..d)
            .map(|k| {
                let col = arrivals.iter().map(|phi| phi[k]);
                (col.clone().max().unwrap(), col.min().unwrap())
            })
            .unzip()
    };

    let frak_b = b_lo.iter().all(|&b| b > 0).then(|| {
        b_up.iter()
            .zip(&b_lo)
            .map(|(&hi, &lo)| hi as f64 / lo as f64)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let b_bar = b_up.iter().copied().max().unwrap_or(0);

    let weighted = |b: &[u64]| -> Vec<f64> { b.iter().zip(c).map(|(&b, &ck)| b as f64 * ck).collect() };
    let up_w = weighted(&b_up);
    let lo_w = weighted(&b_lo);
    let max_f = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_f = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);

    let delta_up = 2.0 * max_f(&up_w);
    let delta_lo = 2.0 * min_f(&lo_w);
    let inv_c_sum: f64 = c.iter().map(|ck| 1.0 / ck).sum();
    let sqrt_d = (d as f64).sqrt();
    let theta_lo = min_f(&lo_w).min(sqrt_d * a / inv_c_sum);
    let theta_up = 2.0 * min_f(&up_w);

    // a * sqrt(d) >= delta_lo * sum_k 1/c_k, both sides nonnegative, compared squared.
    let rhs = delta_lo * inv_c_sum;
    let loosely_capacitated = a * a * d as f64 >= rhs * rhs;

    Ok(InstanceStats {
        b_up,
        b_lo,
        frak_b,
        b_bar,
        delta_up,
        delta_lo,
        eta: a / delta_lo,
        theta_lo,
        theta_up,
        loosely_capacitated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{AttributeVector, Round};

    fn rounds(d: usize, layout: &[&[&[usize]]]) -> Vec<Round> {
        layout.iter()
            .map(|r| Round::new(r.iter().map(|c| AttributeVector::new(c.to_vec(), d).unwrap()).collect()))
            .collect()
    }

    #[test]
    fn single_round_has_unit_fluctuation() {
        let inst = Instance::new(2, vec![1.0, 1.0], 3, Some(3), rounds(2, &[&[&[0], &[0, 1]]])).unwrap();
        let s = instance_stats(&inst).unwrap();
        assert_eq!(s.b_up, s.b_lo);
        assert_eq!(s.frak_b, Some(1.0));
        assert_eq!(s.b_bar, 2);
    }

    #[test]
    fn tight_capacity_example() {
        // d = 4, a = 3, every dimension once per round: 3 * 2 >= 4 * 2 is false.
        let r: &[&[usize]] = &[&[0], &[1], &[2], &[3]];
        let inst = Instance::new(4, vec![1.0; 4], 6, Some(3), rounds(4, &[r, r])).unwrap();
        let s = instance_stats(&inst).unwrap();
        assert_eq!(s.delta_lo, 2.0);
        assert_eq!(s.delta_up, 2.0);
        assert!(!s.loosely_capacitated);
        assert_eq!(s.eta, 1.5);
        assert_eq!(s.theta_lo, 1.0);
        assert_eq!(s.theta_up, 2.0);
    }

    #[test]
    fn missing_dimension_leaves_fluctuation_undefined() {
        let inst = Instance::new(2, vec![1.0, 2.0], 2, Some(1), rounds(2, &[&[&[0]], &[&[0, 1], &[1]]])).unwrap();
        let s = instance_stats(&inst).unwrap();
        assert_eq!(s.frak_b, None);
        assert_eq!(s.b_lo, vec![1, 0]);
        assert_eq!(s.b_up, vec![1, 2]);
        assert_eq!(s.delta_up, 8.0);
        assert!(matches!(s.bounded_fluctuation(), Err(Error::Degenerate(_))));
        let no_a = Instance::new(1, vec![1.0], 0, None, vec![]).unwrap();
        assert!(matches!(instance_stats(&no_a), Err(Error::Contract(_))));
    }
}
