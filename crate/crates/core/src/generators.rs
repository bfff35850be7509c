//! Instance families: the two adversarial constructions behind the impossibility bounds and a
//! seeded random family with controllable per-round arrivals.
//!
//! Both adversarial families consist of members that share a common prefix of rounds, so no
//! online policy can tell them apart until the branching round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{AttributeVector, Instance, Round};
use crate::math::{floor_root, half_two_thirds_floor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Fhc,
    Fcs,
    Random,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Fhc => "fhc",
            Family::Fcs => "fcs",
            Family::Random => "random",
        }
    }
}

/// A generated instance with its file stem `<family>_d<D>_m<index>`.
#[derive(Clone, Debug)]
pub struct Member {
    pub id: String,
    pub family: Family,
    pub d: usize,
    pub index: usize,
    pub instance: Instance,
}

impl Member {
    fn new(family: Family, d: usize, index: usize, instance: Instance) -> Self {
        Member {
            id: format!("{}_d{d}_m{index}", family.name()),
            family,
            d,
            index,
            instance,
        }
    }
}

/// Recovers `(family, d, index)` from a `<family>_d<D>_m<index>` stem.
pub fn parse_member_id(id: &str) -> Option<(Family, usize, usize)> {
    let (family, rest) = id.split_once("_d")?;
    let (d, index) = rest.split_once("_m")?;
    let family = match family {
        "fhc" => Family::Fhc,
        "fcs" => Family::Fcs,
        "random" => Family::Random,
        _ => return None,
    };
    Some((family, d.parse().ok()?, index.parse().ok()?))
}

/// Members `m = 1..=d`: `c = 1`, `K = 2d`, `n = d`, `a = 2`. Round `k <= m` brings `d`
/// candidates with attributes `0..k`; round `m + 1` (when `m < d`) brings `d` candidates with
/// attributes `m..d`; later rounds are empty.
pub fn gen_fhc(d: usize) -> Result<Vec<Member>> {
    if d == 0 {
        return Err(Error::Dimension("fhc needs d >= 1".into()));
    }
    (1..=d)
        .map(|m| {
            let rounds = (1..=d)
                .map(|k| {
                    let ty = if k <= m {
                        Some(AttributeVector::range(0, k))
                    } else if k == m + 1 {
                        Some(AttributeVector::range(m, d))
                    } else {
                        None
                    };
                    Round::new(ty.map(|t| vec![t; d]).unwrap_or_default())
                })
                .collect();
            Instance::new(d, vec![1.0; d], 2 * d as u64, Some(2), rounds).map(|i| Member::new(Family::Fhc, d, m, i))
        })
        .collect()
}

/// Block sizes of the second family: `kappa = floor(d^(1/3))`, `eta = floor(d^(2/3) / 2)`.
pub fn fcs_parameters(d: usize) -> (usize, usize) {
    (
        floor_root(d as u64, 3) as usize,
        half_two_thirds_floor(d as u64) as usize,
    )
}

/// Members `m = 1..=kappa`: `c = 1`, `K = n = d`, `a = 1`.
///
/// Dimensions are cut into consecutive blocks of `kappa` (`Sub_l`). Rounds come in groups of
/// `eta`; group `g <= kappa` offers one candidate per block `l` in `((g-1) kappa, g kappa]` plus
/// a singleton for each dimension outside those blocks, identically in every member. The final
/// group of member `m` offers one candidate covering everything outside member `m`'s blocks plus
/// singletons for the dimensions inside them. Every dimension arrives exactly once per round.
pub fn gen_fcs(d: usize) -> Result<Vec<Member>> {
    if d < 3 {
        return Err(Error::Dimension(format!("fcs needs d >= 3, got {d}")));
    }
    let (kappa, eta) = fcs_parameters(d);
    let block = |l: usize| AttributeVector::range((l - 1) * kappa, (l * kappa).min(d));
    // Dimensions covered by the blocks of collection g: [(g-1) kappa^2, g kappa^2).
    let covered = |g: usize| ((g - 1) * kappa * kappa, g * kappa * kappa);

    let collection_round = |g: usize| {
        let (lo, hi) = covered(g);
        let mut cands: Vec<AttributeVector> = ((g - 1) * kappa + 1..=g * kappa).map(block).collect();
        cands.extend((0..d).filter(|k| !(lo..hi).contains(k)).map(AttributeVector::singleton));
        Round::new(cands)
    };
    let final_round = |m: usize| {
        let (lo, hi) = covered(m);
        let outside: Vec<usize> = (0..d).filter(|k| !(lo..hi).contains(k)).collect();
        let mut cands = vec![AttributeVector::new(outside, d).expect("sorted indices below d")];
        cands.extend((lo..hi).map(AttributeVector::singleton));
        Round::new(cands)
    };

    (1..=kappa)
        .map(|m| {
            let rounds = (1..=d)
                .map(|i| {
                    let g = (i - 1) / eta + 1;
                    if g <= kappa {
                        collection_round(g)
                    } else {
                        final_round(m)
                    }
                })
                .collect();
            Instance::new(d, vec![1.0; d], d as u64, Some(1), rounds).map(|inst| Member::new(Family::Fcs, d, m, inst))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomParams {
    pub d: usize,
    pub n: usize,
    pub a: u64,
    /// Probability that a drawn candidate has each attribute.
    pub density: f64,
    /// Every dimension arrives at least this often in every round.
    pub min_arrivals: u64,
    /// Coefficients are drawn from `[1, c_max]`.
    pub c_max: f64,
}

/// Each round draws `1..=d` candidates with independent attributes, then pads with singletons
/// until every dimension has `min_arrivals`. One coefficient is exactly one.
pub fn gen_random(params: &RandomParams, seed: u64) -> Result<Instance> {
    let RandomParams {
        d,
        n,
        a,
        density,
        min_arrivals,
        c_max,
    } = *params;
    if d == 0 || n == 0 || a == 0 {
        return Err(Error::Domain("random family needs d, n, a >= 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Domain(format!("density {density} outside (0, 1]")));
    }
    if min_arrivals == 0 {
        return Err(Error::Domain("min_arrivals must be at least 1".into()));
    }
    if !(c_max >= 1.0 && c_max.is_finite()) {
        return Err(Error::Domain(format!("c_max {c_max} must be finite and at least 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c: Vec<f64> = (0..d)
        .map(|_| if c_max > 1.0 { rng.gen_range(1.0..=c_max) } else { 1.0 })
        .collect();
    let unit = rng.gen_range(0..d);
    c[unit] = 1.0;

    let rounds = (0..n)
        .map(|_| {
            let count = rng.gen_range(1..=d);
            let mut cands: Vec<AttributeVector> = (0..count)
                .map(|_| {
                    let idx: Vec<usize> = (0..d).filter(|_| rng.gen_bool(density)).collect();
                    AttributeVector::new(idx, d).expect("sorted indices below d")
                })
                .collect();
            let mut arrivals = Round::new(cands.clone()).arrivals(d);
            for (k, phi) in arrivals.iter_mut().enumerate() {
                while *phi < min_arrivals {
                    cands.push(AttributeVector::singleton(k));
                    *phi += 1;
                }
            }
            Round::new(cands)
        })
        .collect();
    Instance::new(d, c, n as u64 * a, Some(a), rounds)
}

pub fn random_member(params: &RandomParams, seed: u64, index: usize) -> Result<Member> {
    gen_random(params, seed).map(|i| Member::new(Family::Random, params.d, index, i))
}
