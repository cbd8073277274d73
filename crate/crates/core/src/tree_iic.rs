//! Kesten's tree: the incipient infinite cluster of critical percolation on
//! the `ell`-regular tree, truncated at a finite depth.
//!
//! Samples are generated breadth first from a single sequential stream, so
//! the tree of depth `R` is exactly the depth-`R` ball of the tree of any
//! depth `R' > R` drawn from the same seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphSample, GraphSampler};
use crate::rng::{trial_rng, unit_f64};

/// Default guard on the number of generated vertices.
pub const DEFAULT_VERTEX_GUARD: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub ell: u32,
}

impl TreeSpec {
    pub fn new(ell: u32) -> Result<Self> {
        let spec = TreeSpec { ell };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell < 3 || self.ell > 1024 {
            return Err(Error::param(format!("tree degree {} outside [3, 1024]", self.ell)));
        }
        Ok(())
    }

    pub fn p_c(&self) -> f64 {
        1.0 / (self.ell as f64 - 1.0)
    }

    /// Offspring variance of a non-root vertex, `1 - p_c`.
    pub fn sigma2(&self) -> f64 {
        1.0 - self.p_c()
    }
}

/// Inverse-CDF table over `0..=m`.
#[derive(Clone, Debug)]
pub(crate) struct Discrete {
    cdf: Vec<f64>,
}

impl Discrete {
    fn from_weights(w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = w
            .iter()
            .map(|x| {
                acc += x / total;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = f64::INFINITY;
        Discrete { cdf }
    }

    pub(crate) fn binomial(m: u32, p: f64) -> Self {
        Self::from_weights(&binomial_pmf(m, p))
    }

    pub(crate) fn size_biased_binomial(m: u32, p: f64) -> Self {
        let w: Vec<f64> = binomial_pmf(m, p).iter().enumerate().map(|(j, q)| j as f64 * q).collect();
        Self::from_weights(&w)
    }

    #[inline]
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        let u = unit_f64(rng.next_u64());
        self.cdf.iter().position(|&c| u < c).unwrap() as u32
    }
}

pub(crate) fn binomial_pmf(m: u32, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m as usize + 1);
    let mut binom = 1.0f64;
    for j in 0..=m {
        if j > 0 {
            binom = binom * (m - j + 1) as f64 / j as f64;
        }
        out.push(binom * p.powi(j as i32) * (1.0 - p).powi((m - j) as i32));
    }
    out
}

struct Offspring {
    bush: Discrete,
    spine: Discrete,
    root_spine: Discrete,
}

impl Offspring {
    fn new(spec: &TreeSpec) -> Self {
        let p = spec.p_c();
        Offspring {
            bush: Discrete::binomial(spec.ell - 1, p),
            spine: Discrete::size_biased_binomial(spec.ell - 1, p),
            root_spine: Discrete::size_biased_binomial(spec.ell, p),
        }
    }
}

impl GraphSampler for TreeSpec {
    fn sample(&self, radius: u32, seed: u64) -> Result<GraphSample> {
        sample_kesten_tree(self, radius, seed)
    }
}

/// A Kesten tree sample together with its spine.
#[derive(Clone, Debug)]
pub struct KestenTree {
    pub graph: GraphSample,
    /// `spine[k]` is the spine vertex at depth `k`, for `k = 0..=R`.
    pub spine: Vec<u32>,
}

impl KestenTree {
    pub fn sample(spec: &TreeSpec, r: u32, seed: u64) -> Result<Self> {
        Self::sample_guarded(spec, r, seed, DEFAULT_VERTEX_GUARD)
    }

    pub fn sample_guarded(spec: &TreeSpec, r: u32, seed: u64, max_vertices: usize) -> Result<Self> {
        spec.validate()?;
        if r == 0 {
            return Err(Error::param("truncation depth must be at least 1"));
        }
        let (graph, level_starts) = grow(spec, r, seed, true, max_vertices)?;
        // the spine vertex is always the first vertex of its level
        let spine = level_starts.iter().map(|&s| s as u32).collect();
        Ok(KestenTree { graph, spine })
    }
}

pub fn sample_kesten_tree(spec: &TreeSpec, r: u32, seed: u64) -> Result<GraphSample> {
    Ok(KestenTree::sample(spec, r, seed)?.graph)
}

/// Unconditioned critical Galton-Watson tree with `Binomial(ell-1, p_c)`
/// offspring, truncated at depth `r`.
pub fn sample_critical_gw(spec: &TreeSpec, r: u32, seed: u64) -> Result<GraphSample> {
    spec.validate()?;
    if r == 0 {
        return Err(Error::param("truncation depth must be at least 1"));
    }
    Ok(grow(spec, r, seed, false, DEFAULT_VERTEX_GUARD)?.0)
}

/// `|dB(0, k)|` for `k = 0..=r` of the Kesten tree drawn from `seed`,
/// without building the graph. Agrees with [`sample_kesten_tree`].
pub fn kesten_level_sizes(spec: &TreeSpec, r: u32, seed: u64) -> Result<Vec<u64>> {
    spec.validate()?;
    let off = Offspring::new(spec);
    let mut rng = trial_rng(seed);
    let mut sizes = Vec::with_capacity(r as usize + 1);
    sizes.push(1u64);
    for depth in 0..r {
        let current = sizes[depth as usize];
        let mut next = if depth == 0 { off.root_spine.draw(&mut rng) } else { off.spine.draw(&mut rng) } as u64;
        for _ in 1..current {
            next += off.bush.draw(&mut rng) as u64;
        }
        sizes.push(next);
    }
    Ok(sizes)
}

fn grow(spec: &TreeSpec, r: u32, seed: u64, kesten: bool, max_vertices: usize) -> Result<(GraphSample, Vec<usize>)> {
    let off = Offspring::new(spec);
    let mut rng = trial_rng(seed);
    let mut parent: Vec<u32> = vec![u32::MAX];
    let mut depth: Vec<u32> = vec![0];
    let mut child_start: Vec<u32> = Vec::new();
    let mut level_starts = vec![0usize];
    let mut i = 0usize;
    while i < parent.len() {
        let d = depth[i];
        if d == r {
            break;
        }
        if i == level_starts[d as usize] && level_starts.len() == d as usize + 1 {
            level_starts.push(parent.len());
        }
        let first_in_level = i == level_starts[d as usize];
        let k = match (kesten && first_in_level, d) {
            (true, 0) => off.root_spine.draw(&mut rng),
            (true, _) => off.spine.draw(&mut rng),
            (false, _) => off.bush.draw(&mut rng),
        };
        child_start.push(parent.len() as u32);
        for _ in 0..k {
            parent.push(i as u32);
            depth.push(d + 1);
        }
        if parent.len() > max_vertices {
            return Err(Error::ResourceLimit(format!("tree exceeded {max_vertices} vertices")));
        }
        i += 1;
    }
    let n = parent.len();
    let expanded = i;
    level_starts.retain(|&s| s < n);
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(2 * (n - 1));
    offsets.push(0usize);
    for v in 0..n {
        if v > 0 {
            neighbors.push(parent[v]);
        }
        if v < expanded {
            let end = child_start.get(v + 1).map_or(n as u32, |&e| e);
            neighbors.extend(child_start[v]..end);
        }
        offsets.push(neighbors.len());
    }
    let truncation = Some(r);
    Ok((GraphSample::from_parts_unchecked(offsets, neighbors, depth, 0, truncation), level_starts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;
    use crate::stats::Moments;
    use rand::RngExt;

    const ELL3: TreeSpec = TreeSpec { ell: 3 };

    #[test]
    fn pmf_sums_to_one() {
        for m in 1..10 {
            let s: f64 = binomial_pmf(m, 0.3).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(binomial_pmf(2, 0.5), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn depth_one_has_spine_child() {
        for s in 0..200 {
            let t = KestenTree::sample(&ELL3, 1, s).unwrap();
            assert!(t.graph.degree(0) >= 1);
            assert_eq!(t.spine.len(), 2);
            assert_eq!(t.graph.depth(t.spine[1]), 1);
        }
    }

    #[test]
    fn structure_is_valid() {
        for s in 0..100 {
            let spec = TreeSpec { ell: 3 + (s % 3) as u32 };
            let t = KestenTree::sample(&spec, 30, derive_seed(9, s)).unwrap();
            let g = &t.graph;
            g.validate().unwrap();
            assert_eq!(g.edge_count(), g.n() - 1);
            assert!(g.bipartite_by_depth());
            assert_eq!(g.max_depth(), 30);
            for v in 0..g.n() as u32 {
                assert!(g.degree(v) <= spec.ell as usize);
            }
            for k in 1..t.spine.len() {
                assert!(g.neighbors(t.spine[k]).contains(&t.spine[k - 1]));
            }
        }
    }

    #[test]
    fn samples_are_nested_in_depth() {
        for s in 0..50 {
            let big = sample_kesten_tree(&ELL3, 40, s).unwrap();
            let small = sample_kesten_tree(&ELL3, 17, s).unwrap();
            assert_eq!(big.restrict_to_depth(17), small);
        }
    }

    #[test]
    fn level_sizes_agree_with_graph() {
        for s in 0..50 {
            let g = sample_kesten_tree(&ELL3, 25, s).unwrap();
            assert_eq!(kesten_level_sizes(&ELL3, 25, s).unwrap(), g.level_sizes());
        }
    }

    #[test]
    fn gw_extinction_at_depth_one() {
        let n = 40_000u64;
        let dead = (0..n).filter(|&s| sample_critical_gw(&ELL3, 1, derive_seed(3, s)).unwrap().n() == 1).count();
        let q = dead as f64 / n as f64;
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((q - 0.25).abs() < 4.0 * sd, "{q}");
    }

    #[test]
    fn gw_generation_mean_is_one() {
        let n = 40_000u64;
        let mut m = Moments::default();
        for s in 0..n {
            let g = sample_critical_gw(&ELL3, 6, derive_seed(4, s)).unwrap();
            m.push(*g.level_sizes().get(6).unwrap_or(&0) as f64);
        }
        assert!((m.mean() - 1.0).abs() < 4.0 * m.stderr(), "{} +- {}", m.mean(), m.stderr());
    }

    /// Independent generator: offspring by coin flips, size-biasing by
    /// rejection.
    fn brute_force_levels(ell: u32, r: usize, rng: &mut rand_pcg::Pcg64Mcg) -> Vec<u64> {
        let p = 1.0 / (ell as f64 - 1.0);
        let coins = |m: u32, rng: &mut rand_pcg::Pcg64Mcg| (0..m).filter(|_| rng.random::<f64>() < p).count() as u64;
        let biased = |m: u32, rng: &mut rand_pcg::Pcg64Mcg| loop {
            let k = coins(m, rng);
            if rng.random::<f64>() < k as f64 / m as f64 {
                return k;
            }
        };
        let mut sizes = vec![1u64];
        for depth in 0..r {
            let mut next = biased(if depth == 0 { ell } else { ell - 1 }, rng);
            for _ in 1..sizes[depth] {
                next += coins(ell - 1, rng);
            }
            sizes.push(next);
        }
        sizes
    }

    #[test]
    fn expected_level_sizes_match_brute_force() {
        let n = 100_000u64;
        let ks = [1usize, 5, 10];
        let mut fast = [Moments::default(); 3];
        let mut slow = [Moments::default(); 3];
        let mut rng = trial_rng(2718);
        for s in 0..n {
            let a = kesten_level_sizes(&ELL3, 10, derive_seed(5, s)).unwrap();
            let b = brute_force_levels(3, 10, &mut rng);
            for (i, &k) in ks.iter().enumerate() {
                fast[i].push(a[k] as f64);
                slow[i].push(b[k] as f64);
            }
        }
        for (i, &k) in ks.iter().enumerate() {
            // spine, root excess 1, then (k - 1) interior spine vertices with excess sigma^2
            let exact = 2.0 + (k as f64 - 1.0) * ELL3.sigma2();
            let se = (fast[i].stderr().powi(2) + slow[i].stderr().powi(2)).sqrt();
            assert!((fast[i].mean() - slow[i].mean()).abs() < 3.0 * se, "k={k}");
            assert!((fast[i].mean() - exact).abs() < 3.0 * fast[i].stderr(), "k={k}: {}", fast[i].mean());
        }
    }

    #[test]
    fn spine_offspring_are_size_biased() {
        // ell = 4: Binomial(3, 1/3) size-biased is (0, 12, 12, 3) / 27
        let spec = TreeSpec { ell: 4 };
        let mut counts = [0u64; 4];
        for s in 0..2_000u64 {
            let t = KestenTree::sample(&spec, 12, derive_seed(6, s)).unwrap();
            for &v in &t.spine[1..12] {
                counts[t.graph.degree(v) - 1] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = [0.0, 12.0 / 27.0, 12.0 / 27.0, 3.0 / 27.0];
        assert_eq!(counts[0], 0);
        let chi2: f64 = (1..4)
            .map(|j| {
                let e = expected[j] * total as f64;
                (counts[j] as f64 - e).powi(2) / e
            })
            .sum();
        // 2 degrees of freedom, 0.1% level
        assert!(chi2 < 13.82, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn guard_trips() {
        assert!(matches!(
            KestenTree::sample_guarded(&ELL3, 200, 1, 100),
            Err(Error::ResourceLimit(_))
        ));
    }
}
