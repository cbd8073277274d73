//! Breadth-first exploration of the open cluster of a vertex in the
//! intrinsic (chemical) metric.
//!
//! Exploration is strictly level by level; within a level vertices are
//! expanded in insertion order and neighbours in lexicographic offset order,
//! so a ball is a deterministic function of `(config, origin, radius)`.

use std::cell::RefCell;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSample;
use crate::lattice::{Lattice, PercolationConfig, Vertex, VertexKey};
use crate::rng::{mix64, KeyedBernoulli, GOLDEN_GAMMA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreStatus {
    Complete,
    /// More vertices than the budget were found; the result is partial and
    /// must not enter unbiased statistics.
    BudgetExceeded,
}

/// Restricts exploration to a fixed subgraph of the lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    #[default]
    Full,
    /// Vertices with `coords[axis] >= min`.
    HalfSpace { axis: usize, min: i64 },
    /// Vertices with sup norm at most `half_width`.
    Box { half_width: i64 },
}

impl Region {
    #[inline]
    fn allows(&self, lattice: &Lattice, key: VertexKey) -> bool {
        match *self {
            Region::Full => true,
            Region::HalfSpace { axis, min } => lattice.coord(key, axis) >= min,
            Region::Box { half_width } => (0..lattice.dim()).all(|a| lattice.coord(key, a).abs() <= half_width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HEvent {
    Reached,
    NotReached,
    BudgetExceeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSize {
    Exact(u64),
    ExceedsCap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSizeBound {
    Exact(u64),
    AtLeast(u64),
}

/// Level-set summary of an exploration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// `|dB(0, j)|` for `j = 0..=radius`.
    pub level_sizes: Vec<u64>,
    /// `|B(0, j)|` for `j = 0..=radius`.
    pub ball_volume: Vec<u64>,
    /// Largest `j` with a nonempty level.
    pub reached: u32,
    pub cluster_size: ClusterSizeBound,
    pub status: ExploreStatus,
}

impl ClusterStats {
    fn from_levels(level_sizes: Vec<u64>, exhausted: bool, status: ExploreStatus) -> Self {
        let mut ball_volume = Vec::with_capacity(level_sizes.len());
        let mut acc = 0u64;
        for &s in &level_sizes {
            acc += s;
            ball_volume.push(acc);
        }
        let reached = level_sizes.iter().rposition(|&s| s > 0).unwrap_or(0) as u32;
        let cluster_size = if exhausted && status == ExploreStatus::Complete {
            ClusterSizeBound::Exact(acc)
        } else {
            ClusterSizeBound::AtLeast(acc)
        };
        ClusterStats { level_sizes, ball_volume, reached, cluster_size, status }
    }

    pub fn radius(&self) -> u32 {
        self.level_sizes.len() as u32 - 1
    }

    /// The one-arm event `dB(0, r) != {}` for `r <= radius`.
    pub fn h_event(&self, r: u32) -> HEvent {
        assert!(r <= self.radius(), "radius {r} beyond explored radius {}", self.radius());
        match self.status {
            ExploreStatus::BudgetExceeded => HEvent::BudgetExceeded,
            ExploreStatus::Complete if self.reached >= r => HEvent::Reached,
            ExploreStatus::Complete => HEvent::NotReached,
        }
    }
}

#[derive(Default)]
struct Bfs {
    keys: Vec<VertexKey>,
    level_starts: Vec<usize>,
    index: FxHashMap<u128, u32>,
    edges: Vec<(u32, u32)>,
    status: Option<ExploreStatus>,
    exhausted: bool,
}

struct BfsLimits {
    max_radius: u32,
    budget: usize,
    record_edges: bool,
    region: Region,
}

impl Bfs {
    fn run(&mut self, cfg: &PercolationConfig, origin: VertexKey, limits: &BfsLimits) -> Result<()> {
        let lattice = cfg.lattice();
        self.keys.clear();
        self.level_starts.clear();
        self.index.clear();
        self.edges.clear();
        self.exhausted = false;
        self.status = Some(ExploreStatus::Complete);
        if !limits.region.allows(lattice, origin) {
            return Err(Error::param("origin lies outside the exploration region"));
        }
        self.keys.push(origin);
        self.index.insert(origin.0, 0);
        self.level_starts.push(0);
        let steps = lattice.steps();
        for _ in 0..limits.max_radius {
            let start = *self.level_starts.last().unwrap();
            let end = self.keys.len();
            if start == end {
                self.exhausted = true;
                return Ok(());
            }
            self.level_starts.push(end);
            for i in start..end {
                let v = self.keys[i];
                if !lattice.expandable(v) {
                    return Err(Error::BoxOverflow { half_width: lattice.half_width() });
                }
                for step in steps {
                    if !cfg.is_open_step(v, step) {
                        continue;
                    }
                    let w = lattice.step(v, step);
                    if !limits.region.allows(lattice, w) {
                        continue;
                    }
                    match self.index.get(&w.0) {
                        None => {
                            let iw = self.keys.len() as u32;
                            self.index.insert(w.0, iw);
                            self.keys.push(w);
                            if limits.record_edges {
                                self.edges.push((i as u32, iw));
                            }
                            if self.keys.len() > limits.budget {
                                self.status = Some(ExploreStatus::BudgetExceeded);
                                return Ok(());
                            }
                        }
                        Some(&iw) => {
                            let iw_us = iw as usize;
                            // next level, or a later vertex of the same level
                            if limits.record_edges && (iw_us >= end || (iw_us >= start && iw_us > i)) {
                                self.edges.push((i as u32, iw));
                            }
                        }
                    }
                }
            }
        }
        if *self.level_starts.last().unwrap() == self.keys.len() {
            self.exhausted = true;
        }
        Ok(())
    }

    fn level_sizes(&self, radius: u32) -> Vec<u64> {
        let mut sizes = vec![0u64; radius as usize + 1];
        for (j, &s) in self.level_starts.iter().enumerate() {
            let e = self.level_starts.get(j + 1).copied().unwrap_or(self.keys.len());
            if j < sizes.len() {
                sizes[j] = (e - s) as u64;
            }
        }
        sizes
    }
}

thread_local! {
    static WORKSPACE: RefCell<Bfs> = RefCell::new(Bfs::default());
}

/// The explored ball `B(origin, r)` of the open cluster.
#[derive(Clone, Debug)]
pub struct IntrinsicBall {
    lattice: Lattice,
    origin: Vertex,
    radius: u32,
    keys: Vec<VertexKey>,
    level_starts: Vec<usize>,
    index: FxHashMap<u128, u32>,
    edges: Vec<(u32, u32)>,
    status: ExploreStatus,
    exhausted: bool,
}

impl IntrinsicBall {
    pub fn origin(&self) -> &Vertex {
        &self.origin
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn status(&self) -> ExploreStatus {
        self.status
    }

    pub fn is_partial(&self) -> bool {
        self.status == ExploreStatus::BudgetExceeded
    }

    /// True when a level came out empty, i.e. the whole cluster is inside.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn volume(&self) -> usize {
        self.keys.len()
    }

    fn level_range(&self, j: usize) -> std::ops::Range<usize> {
        match self.level_starts.get(j) {
            None => 0..0,
            Some(&s) => s..self.level_starts.get(j + 1).copied().unwrap_or(self.keys.len()),
        }
    }

    /// Vertices of `dB(origin, j)` in exploration order.
    pub fn level(&self, j: u32) -> Vec<Vertex> {
        self.level_range(j as usize).map(|i| self.lattice.vertex(self.keys[i])).collect()
    }

    pub fn level_sizes(&self) -> Vec<u64> {
        (0..=self.radius as usize).map(|j| self.level_range(j).len() as u64).collect()
    }

    pub fn boundary_nonempty(&self, j: u32) -> bool {
        !self.level_range(j as usize).is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.keys.iter().map(|&k| self.lattice.vertex(k))
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.dist(v).is_some()
    }

    pub fn dist(&self, v: &Vertex) -> Option<u32> {
        let key = self.lattice.key(v).ok()?;
        let i = *self.index.get(&key.0)? as usize;
        Some((self.level_starts.partition_point(|&s| s <= i) - 1) as u32)
    }

    /// Explored open edges as pairs of BFS indices.
    pub fn edge_indices(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn open_edges(&self) -> Vec<(Vertex, Vertex)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.lattice.vertex(self.keys[a as usize]), self.lattice.vertex(self.keys[b as usize])))
            .collect()
    }

    pub fn stats(&self) -> ClusterStats {
        ClusterStats::from_levels(self.level_sizes(), self.exhausted, self.status)
    }

    /// Index-compacted copy for the walk and resistance engines.
    ///
    /// The truncation radius is `r` unless the whole cluster was exhausted.
    pub fn to_graph_sample(&self) -> Result<GraphSample> {
        if self.is_partial() {
            return Err(Error::param("cannot convert a partial (budget-exceeded) ball"));
        }
        let truncation = if self.exhausted { None } else { Some(self.radius) };
        GraphSample::from_edges(self.keys.len(), &self.edges, 0, truncation)
    }
}

pub fn explore_ball(cfg: &PercolationConfig, origin: &Vertex, r: u32, vertex_budget: usize) -> Result<IntrinsicBall> {
    explore_ball_in(cfg, origin, r, vertex_budget, Region::Full)
}

/// [`explore_ball`] restricted to a fixed subgraph of the lattice.
pub fn explore_ball_in(
    cfg: &PercolationConfig,
    origin: &Vertex,
    r: u32,
    vertex_budget: usize,
    region: Region,
) -> Result<IntrinsicBall> {
    if vertex_budget == 0 {
        return Err(Error::param("vertex budget must be positive"));
    }
    let key = cfg.lattice().key(origin)?;
    let mut bfs = Bfs::default();
    bfs.run(cfg, key, &BfsLimits { max_radius: r, budget: vertex_budget, record_edges: true, region })?;
    Ok(IntrinsicBall {
        lattice: cfg.lattice().clone(),
        origin: origin.clone(),
        radius: r,
        keys: bfs.keys,
        level_starts: bfs.level_starts,
        index: bfs.index,
        edges: bfs.edges,
        status: bfs.status.unwrap_or(ExploreStatus::Complete),
        exhausted: bfs.exhausted,
    })
}

/// Level sizes only; reuses a per-thread workspace and records no edges.
pub fn cluster_profile(cfg: &PercolationConfig, origin: &Vertex, r: u32, vertex_budget: usize) -> Result<ClusterStats> {
    cluster_profile_in(cfg, origin, r, vertex_budget, Region::Full)
}

pub fn cluster_profile_in(
    cfg: &PercolationConfig,
    origin: &Vertex,
    r: u32,
    vertex_budget: usize,
    region: Region,
) -> Result<ClusterStats> {
    if vertex_budget == 0 {
        return Err(Error::param("vertex budget must be positive"));
    }
    let key = cfg.lattice().key(origin)?;
    WORKSPACE.with(|ws| {
        let mut bfs = ws.borrow_mut();
        bfs.run(cfg, key, &BfsLimits { max_radius: r, budget: vertex_budget, record_edges: false, region })?;
        let status = bfs.status.unwrap_or(ExploreStatus::Complete);
        Ok(ClusterStats::from_levels(bfs.level_sizes(r), bfs.exhausted, status))
    })
}

pub fn h_event(cfg: &PercolationConfig, origin: &Vertex, r: u32, vertex_budget: usize) -> Result<HEvent> {
    Ok(cluster_profile(cfg, origin, r, vertex_budget)?.h_event(r))
}

pub fn cluster_size_capped(cfg: &PercolationConfig, origin: &Vertex, cap: u64) -> Result<ClusterSize> {
    if cap == 0 {
        return Err(Error::param("cap must be positive"));
    }
    let key = cfg.lattice().key(origin)?;
    WORKSPACE.with(|ws| {
        let mut bfs = ws.borrow_mut();
        let limits = BfsLimits { max_radius: u32::MAX, budget: cap as usize, record_edges: false, region: Region::Full };
        bfs.run(cfg, key, &limits)?;
        Ok(match bfs.status {
            Some(ExploreStatus::BudgetExceeded) => ClusterSize::ExceedsCap,
            _ => ClusterSize::Exact(bfs.keys.len() as u64),
        })
    })
}

const BETHE_EDGE_DOMAIN: u64 = 0xbe7e_0000_0000_0002;

/// Percolation on the `ell`-regular tree, explored without loops.
///
/// Every vertex is addressed by a hash of its path from the root and every
/// edge state is a keyed draw on the child address, so configurations at
/// different `p` are coupled through common uniforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetheLattice {
    pub ell: u32,
    pub p: f64,
}

impl BetheLattice {
    pub fn critical(ell: u32) -> Self {
        BetheLattice { ell, p: 1.0 / (ell as f64 - 1.0) }
    }

    pub fn with_p(&self, p: f64) -> Self {
        BetheLattice { p, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell < 3 {
            return Err(Error::param(format!("tree degree {} must be at least 3", self.ell)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    #[inline(always)]
    fn child(parent: u64, slot: u32) -> u64 {
        mix64(parent.wrapping_add((slot as u64 + 1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Runs the exploration; returns level sizes, exhaustion flag and status.
    fn explore(&self, seed: u64, max_radius: u32, budget: u64) -> Result<(Vec<u64>, bool, ExploreStatus)> {
        self.validate()?;
        let coin = KeyedBernoulli::new(self.p);
        let key = mix64(seed ^ BETHE_EDGE_DOMAIN);
        let mut sizes = vec![1u64];
        let mut frontier = vec![1u64];
        let mut next = Vec::new();
        let mut total = 1u64;
        for depth in 0..max_radius {
            if frontier.is_empty() {
                return Ok((sizes, true, ExploreStatus::Complete));
            }
            let slots = if depth == 0 { self.ell } else { self.ell - 1 };
            next.clear();
            for &v in &frontier {
                for slot in 0..slots {
                    let c = Self::child(v, slot);
                    if coin.accept(mix64(c ^ key)) {
                        next.push(c);
                        total += 1;
                        if total > budget {
                            sizes.push(next.len() as u64);
                            return Ok((sizes, false, ExploreStatus::BudgetExceeded));
                        }
                    }
                }
            }
            sizes.push(next.len() as u64);
            std::mem::swap(&mut frontier, &mut next);
        }
        Ok((sizes, frontier.is_empty(), ExploreStatus::Complete))
    }

    pub fn profile(&self, seed: u64, r: u32, vertex_budget: usize) -> Result<ClusterStats> {
        if vertex_budget == 0 {
            return Err(Error::param("vertex budget must be positive"));
        }
        let (mut sizes, exhausted, status) = self.explore(seed, r, vertex_budget as u64)?;
        sizes.resize(r as usize + 1, 0);
        Ok(ClusterStats::from_levels(sizes, exhausted, status))
    }

    pub fn cluster_size_capped(&self, seed: u64, cap: u64) -> Result<ClusterSize> {
        if cap == 0 {
            return Err(Error::param("cap must be positive"));
        }
        let (sizes, _, status) = self.explore(seed, u32::MAX, cap)?;
        Ok(match status {
            ExploreStatus::BudgetExceeded => ClusterSize::ExceedsCap,
            ExploreStatus::Complete => ClusterSize::Exact(sizes.iter().sum()),
        })
    }
}
