//! Approximate incipient infinite cluster samples on the lattice, drawn by
//! rejection from critical configurations.
//!
//! Attempt `i` uses the configuration seeded by `derive_seed(seed, i)`.
//! Attempts run in parallel batches and the accepted sample is always the
//! one with the smallest index, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_profile, explore_ball, explore_ball_in, HEvent, Region};
use crate::error::{Error, Result};
use crate::graph::{GraphSample, GraphSampler};
use crate::lattice::{Lattice, LatticeSpec, PercolationConfig, Vertex};
use crate::rng::derive_seed;

const ATTEMPT_BATCH: u64 = 256;

pub const DEFAULT_BUDGET: usize = 4_000_000;

#[derive(Clone, Debug)]
pub struct IicSample {
    pub graph: GraphSample,
    /// Index of the accepted attempt plus one.
    pub attempts: u64,
    pub config_seed: u64,
    /// Attempts before acceptance whose exploration hit the vertex budget;
    /// they were skipped, not rejected.
    pub undecided: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Accept,
    Reject,
    Undecided,
}

/// Runs attempts in index order until one is accepted.
fn first_accepted<F>(max_attempts: u64, attempt: F) -> Result<(u64, u64)>
where
    F: Fn(u64) -> Result<Outcome> + Sync,
{
    let mut undecided = 0;
    let mut start = 0;
    while start < max_attempts {
        let end = (start + ATTEMPT_BATCH).min(max_attempts);
        let outcomes = (start..end).into_par_iter().map(&attempt).collect::<Result<Vec<_>>>()?;
        for (k, o) in outcomes.into_iter().enumerate() {
            match o {
                Outcome::Accept => return Ok((start + k as u64, undecided)),
                Outcome::Undecided => undecided += 1,
                Outcome::Reject => {}
            }
        }
        start = end;
    }
    Err(Error::AttemptsExhausted { attempts: max_attempts })
}

/// Ball `B(0, 2r)` of a configuration conditioned on the one-arm event
/// `H(2r)`, with truncation radius `2r`.
pub fn sample_iic_ball(spec: &LatticeSpec, r: u32, max_attempts: u64, seed: u64, budget: usize) -> Result<IicSample> {
    if r == 0 {
        return Err(Error::param("radius must be positive"));
    }
    let lattice = Lattice::new(spec)?;
    let origin = Vertex::origin(spec.dim);
    let depth = r.checked_mul(2).ok_or_else(|| Error::param("radius too large"))?;
    let (index, undecided) = first_accepted(max_attempts, |i| {
        let cfg = PercolationConfig::from_lattice(lattice.clone(), derive_seed(seed, i));
        Ok(match cluster_profile(&cfg, &origin, depth, budget)?.h_event(depth) {
            HEvent::Reached => Outcome::Accept,
            HEvent::NotReached => Outcome::Reject,
            HEvent::BudgetExceeded => Outcome::Undecided,
        })
    })?;
    let config_seed = derive_seed(seed, index);
    let cfg = PercolationConfig::from_lattice(lattice, config_seed);
    let ball = explore_ball(&cfg, &origin, depth, budget)?;
    let graph = ball.to_graph_sample()?;
    if graph.max_depth() != depth || graph.truncation_radius() != Some(depth) {
        return Err(Error::param("accepted sample fails its conditioning event"));
    }
    Ok(IicSample { graph, attempts: index + 1, config_seed, undecided })
}

/// Cluster of the origin inside the box of half-width `box_radius`,
/// conditioned on containing `x` (connection inside the box).
///
/// The expected number of attempts grows like `|x|^{d-2}`; requests whose
/// estimate exceeds `max_attempts` are refused up front.
pub fn sample_iic_two_point(
    spec: &LatticeSpec,
    x: &Vertex,
    box_radius: i64,
    max_attempts: u64,
    seed: u64,
    budget: usize,
) -> Result<IicSample> {
    let lattice = Lattice::new(spec)?;
    if x.dim() != spec.dim || x.sup_norm() == 0 {
        return Err(Error::param(format!("target {x} must be a nonzero vertex of dimension {}", spec.dim)));
    }
    if x.sup_norm() > box_radius || box_radius > lattice.half_width() - spec.range() as i64 {
        return Err(Error::param(format!("box radius {box_radius} must cover {x} and fit the working box")));
    }
    let norm: f64 = x.coords().iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    let estimate = norm.powi(spec.dim as i32 - 2);
    if estimate > max_attempts as f64 {
        return Err(Error::ResourceLimit(format!(
            "about {estimate:.0} attempts expected for |x| = {norm:.2}, limit {max_attempts}"
        )));
    }
    let origin = Vertex::origin(spec.dim);
    let region = Region::Box { half_width: box_radius };
    let max_radius = budget.min(u32::MAX as usize) as u32;
    let explore = |s: u64| {
        let cfg = PercolationConfig::from_lattice(lattice.clone(), s);
        explore_ball_in(&cfg, &origin, max_radius, budget, region)
    };
    let (index, undecided) = first_accepted(max_attempts, |i| {
        let ball = explore(derive_seed(seed, i))?;
        Ok(if ball.is_partial() {
            Outcome::Undecided
        } else if ball.contains(x) {
            Outcome::Accept
        } else {
            Outcome::Reject
        })
    })?;
    let config_seed = derive_seed(seed, index);
    let ball = explore(config_seed)?;
    if !ball.contains(x) {
        return Err(Error::param("accepted sample fails its conditioning event"));
    }
    let graph = ball.to_graph_sample()?;
    Ok(IicSample { graph, attempts: index + 1, config_seed, undecided })
}

/// One-arm conditioned lattice samples as a [`GraphSampler`].
///
/// A request for radius `R` returns the ball of radius `2 * ceil(R / 2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeIic {
    pub spec: LatticeSpec,
    pub max_attempts: u64,
    pub budget: usize,
}

impl GraphSampler for LatticeIic {
    fn sample(&self, radius: u32, seed: u64) -> Result<GraphSample> {
        Ok(sample_iic_ball(&self.spec, radius.div_ceil(2).max(1), self.max_attempts, seed, self.budget)?.graph)
    }
}
