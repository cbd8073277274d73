//! Z^d lattices (nearest-neighbour and spread-out) and a lazily evaluated
//! bond percolation configuration on them.
//!
//! Vertices inside the working box are packed into a `u128` key with a fixed
//! number of bits per axis, so moving along an edge is one wrapping addition.
//! Edge states are never stored: [`PercolationConfig::is_open_slot`] hashes the
//! canonical edge identity together with the configuration seed.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{KeyedBernoulli, KeyedHash};

/// Largest supported dimension (four bits per axis).
pub const MAX_DIM: usize = 32;

/// Default working-box half-width per axis, when the packing allows it.
pub const DEFAULT_HALF_WIDTH: i64 = 1 << 20;

/// Hard cap on the number of edges [`eager_box_config`] will materialize.
pub const EAGER_EDGE_LIMIT: u64 = 10_000_000;

const EDGE_DOMAIN: u64 = 0xed6e_0000_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    NearestNeighbor,
    /// Edges between all pairs at l-infinity distance `1..=range`.
    SpreadOut { range: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dim: usize,
    pub rule: EdgeRule,
    /// Retention probability of each edge.
    pub p: f64,
}

impl LatticeSpec {
    pub fn nearest_neighbor(dim: usize, p: f64) -> Self {
        LatticeSpec { dim, rule: EdgeRule::NearestNeighbor, p }
    }

    pub fn spread_out(dim: usize, range: u32, p: f64) -> Self {
        LatticeSpec { dim, rule: EdgeRule::SpreadOut { range }, p }
    }

    pub fn with_p(&self, p: f64) -> Self {
        LatticeSpec { p, ..self.clone() }
    }

    pub fn range(&self) -> u32 {
        match self.rule {
            EdgeRule::NearestNeighbor => 1,
            EdgeRule::SpreadOut { range } => range,
        }
    }

    pub fn degree(&self) -> usize {
        match self.rule {
            EdgeRule::NearestNeighbor => 2 * self.dim,
            EdgeRule::SpreadOut { range } => {
                let side = 2 * range as usize + 1;
                side.pow(self.dim as u32) - 1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::param(format!("dimension {} outside 1..={MAX_DIM}", self.dim)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param(format!("p = {} outside [0, 1]", self.p)));
        }
        if let EdgeRule::SpreadOut { range } = self.rule {
            if range == 0 {
                return Err(Error::param("spread-out range must be positive"));
            }
            let side = 2.0 * range as f64 + 1.0;
            if side.powi(self.dim as i32) > 4.0e6 {
                return Err(Error::param(format!(
                    "spread-out neighbourhood (2*{range}+1)^{} is too large to enumerate",
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    coords: Vec<i64>,
}

impl Vertex {
    pub fn new(coords: Vec<i64>) -> Self {
        Vertex { coords }
    }

    pub fn origin(dim: usize) -> Self {
        Vertex { coords: vec![0; dim] }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn translate(&self, offset: &[i64]) -> Vertex {
        Vertex { coords: self.coords.iter().zip(offset).map(|(a, b)| a + b).collect() }
    }

    pub fn sup_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl From<Vec<i64>> for Vertex {
    fn from(coords: Vec<i64>) -> Self {
        Vertex::new(coords)
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An unordered pair of vertices stored with the lexicographically smaller
/// endpoint first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    lo: Vertex,
    hi: Vertex,
}

impl Edge {
    pub fn new(a: Vertex, b: Vertex) -> Self {
        if a <= b {
            Edge { lo: a, hi: b }
        } else {
            Edge { lo: b, hi: a }
        }
    }

    pub fn lo(&self) -> &Vertex {
        &self.lo
    }

    pub fn hi(&self) -> &Vertex {
        &self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Open,
    Closed,
}

impl EdgeState {
    pub fn is_open(self) -> bool {
        self == EdgeState::Open
    }
}

/// Packed vertex inside the working box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexKey(pub u128);

#[derive(Clone, Debug)]
pub(crate) struct Step {
    pub(crate) coords: Vec<i64>,
    /// Wrapping increment of the packed key.
    pub(crate) delta: u128,
    /// Index of `+-coords` among the positive offsets.
    pub(crate) slot: u32,
    /// Whether `coords` itself is lexicographically positive.
    pub(crate) forward: bool,
}

#[derive(Debug)]
struct Geometry {
    dim: usize,
    range: i64,
    bits: u32,
    bias: i64,
    half_width: i64,
    steps: Vec<Step>,
    /// Indices into `steps` of the positive offsets, in slot order.
    positive: Vec<usize>,
}

/// Neighbourhood tables and key packing for one [`LatticeSpec`].
///
/// Cloning is cheap; [`Lattice::with_p`] reuses the tables.
#[derive(Clone, Debug)]
pub struct Lattice {
    spec: LatticeSpec,
    geometry: Arc<Geometry>,
    bernoulli: KeyedBernoulli,
}

fn is_positive(o: &[i64]) -> bool {
    o.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

fn offsets_for(dim: usize, range: i64, rule: EdgeRule) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    match rule {
        EdgeRule::NearestNeighbor => {
            for axis in 0..dim {
                for sign in [-1i64, 1] {
                    let mut o = vec![0i64; dim];
                    o[axis] = sign;
                    out.push(o);
                }
            }
        }
        EdgeRule::SpreadOut { .. } => {
            let side = (2 * range + 1) as usize;
            let total = side.pow(dim as u32);
            for mut idx in 0..total {
                let mut o = vec![0i64; dim];
                for c in o.iter_mut().rev() {
                    *c = (idx % side) as i64 - range;
                    idx /= side;
                }
                if o.iter().any(|&c| c != 0) {
                    out.push(o);
                }
            }
        }
    }
    out.sort();
    out
}

impl Lattice {
    pub fn new(spec: &LatticeSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim;
        let range = spec.range() as i64;
        let bits = (128 / dim as u32).min(22);
        let bias = 1i64 << (bits - 1);
        let half_width = DEFAULT_HALF_WIDTH.min(bias - 1);
        if half_width < 2 * range {
            return Err(Error::param(format!(
                "working box half-width {half_width} too small for range {range} in d = {dim}"
            )));
        }
        let offsets = offsets_for(dim, range, spec.rule);
        let mut positives: Vec<Vec<i64>> = offsets.iter().filter(|o| is_positive(o)).cloned().collect();
        positives.sort();
        let slot_of = |o: &[i64]| -> u32 {
            let canon: Vec<i64> =
                if is_positive(o) { o.to_vec() } else { o.iter().map(|c| -c).collect() };
            positives.binary_search(&canon).expect("offset set is symmetric") as u32
        };
        let steps: Vec<Step> = offsets
            .iter()
            .map(|o| {
                let mut delta: u128 = 0;
                for (axis, &c) in o.iter().enumerate() {
                    let shifted = (c as i128) << (bits as usize * axis);
                    delta = delta.wrapping_add(shifted as u128);
                }
                Step { coords: o.clone(), delta, slot: slot_of(o), forward: is_positive(o) }
            })
            .collect();
        let mut positive = vec![0usize; positives.len()];
        for (i, s) in steps.iter().enumerate() {
            if s.forward {
                positive[s.slot as usize] = i;
            }
        }
        let geometry = Geometry { dim, range, bits, bias, half_width, steps, positive };
        Ok(Lattice { spec: spec.clone(), geometry: Arc::new(geometry), bernoulli: KeyedBernoulli::new(spec.p) })
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        let spec = self.spec.with_p(p);
        spec.validate()?;
        Ok(Lattice { spec, geometry: Arc::clone(&self.geometry), bernoulli: KeyedBernoulli::new(p) })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim
    }

    pub fn p(&self) -> f64 {
        self.spec.p
    }

    pub fn degree(&self) -> usize {
        self.geometry.steps.len()
    }

    /// Half-width of the box in which vertex keys are injective.
    pub fn half_width(&self) -> i64 {
        self.geometry.half_width
    }

    /// Neighbour offsets in lexicographic order.
    pub fn offsets(&self) -> impl Iterator<Item = &[i64]> {
        self.geometry.steps.iter().map(|s| s.coords.as_slice())
    }

    pub(crate) fn steps(&self) -> &[Step] {
        &self.geometry.steps
    }

    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        self.geometry.steps.iter().map(|s| v.translate(&s.coords)).collect()
    }

    pub fn in_box(&self, v: &Vertex) -> bool {
        v.dim() == self.dim() && v.sup_norm() <= self.geometry.half_width
    }

    pub fn key(&self, v: &Vertex) -> Result<VertexKey> {
        if v.dim() != self.dim() {
            return Err(Error::param(format!("vertex {v} has dimension {}, lattice has {}", v.dim(), self.dim())));
        }
        if !self.in_box(v) {
            return Err(Error::BoxOverflow { half_width: self.geometry.half_width });
        }
        let g = &*self.geometry;
        let mut key: u128 = 0;
        for (axis, &c) in v.coords.iter().enumerate() {
            key |= ((c + g.bias) as u128) << (g.bits as usize * axis);
        }
        Ok(VertexKey(key))
    }

    #[inline]
    pub(crate) fn coord(&self, key: VertexKey, axis: usize) -> i64 {
        let g = &*self.geometry;
        let mask = (1u128 << g.bits) - 1;
        ((key.0 >> (g.bits as usize * axis)) & mask) as i64 - g.bias
    }

    pub fn vertex(&self, key: VertexKey) -> Vertex {
        Vertex { coords: (0..self.dim()).map(|a| self.coord(key, a)).collect() }
    }

    /// True when every neighbour of `key` is still inside the working box.
    #[inline]
    pub(crate) fn expandable(&self, key: VertexKey) -> bool {
        let g = &*self.geometry;
        let limit = g.half_width - g.range;
        (0..g.dim).all(|a| self.coord(key, a).abs() <= limit)
    }

    #[inline(always)]
    pub(crate) fn step(&self, key: VertexKey, step: &Step) -> VertexKey {
        VertexKey(key.0.wrapping_add(step.delta))
    }

    /// Canonical `(lower endpoint, slot)` identity of the edge `key -> key + step`.
    #[inline(always)]
    pub(crate) fn edge_id(&self, key: VertexKey, step: &Step) -> (VertexKey, u32) {
        if step.forward {
            (key, step.slot)
        } else {
            (self.step(key, step), step.slot)
        }
    }

    /// Slot of the edge `{a, b}` when `b - a` is a lattice offset.
    fn slot_between(&self, a: &Vertex, b: &Vertex) -> Option<u32> {
        let diff: Vec<i64> = b.coords.iter().zip(&a.coords).map(|(x, y)| x - y).collect();
        if !is_positive(&diff) {
            return None;
        }
        let g = &*self.geometry;
        g.positive
            .binary_search_by(|&i| g.steps[i].coords.as_slice().cmp(diff.as_slice()))
            .ok()
            .map(|s| s as u32)
    }
}

/// A bond percolation configuration: the lattice plus a 64-bit seed.
///
/// The state of an edge is a pure function of `(seed, canonical edge)`.
#[derive(Clone, Debug)]
pub struct PercolationConfig {
    lattice: Lattice,
    seed: u64,
}

impl PercolationConfig {
    pub fn new(spec: &LatticeSpec, seed: u64) -> Result<Self> {
        Ok(PercolationConfig { lattice: Lattice::new(spec)?, seed })
    }

    pub fn from_lattice(lattice: Lattice, seed: u64) -> Self {
        PercolationConfig { lattice, seed }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.lattice.spec()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline(always)]
    pub(crate) fn is_open_slot(&self, lo: VertexKey, slot: u32) -> bool {
        let h = KeyedHash::new(self.seed, EDGE_DOMAIN)
            .absorb(lo.0 as u64)
            .absorb((lo.0 >> 64) as u64)
            .absorb(slot as u64)
            .finish();
        self.lattice.bernoulli.accept(h)
    }

    #[inline(always)]
    pub(crate) fn is_open_step(&self, key: VertexKey, step: &Step) -> bool {
        let (lo, slot) = self.lattice.edge_id(key, step);
        self.is_open_slot(lo, slot)
    }

    pub fn edge_state(&self, e: &Edge) -> Result<EdgeState> {
        let slot = self
            .lattice
            .slot_between(e.lo(), e.hi())
            .ok_or_else(|| Error::InvalidEdge(format!("{} and {} are not lattice neighbours", e.lo(), e.hi())))?;
        let lo = self.lattice.key(e.lo())?;
        self.lattice.key(e.hi())?;
        Ok(if self.is_open_slot(lo, slot) { EdgeState::Open } else { EdgeState::Closed })
    }
}

/// Neighbours of `v` under `spec`, in lexicographic offset order.
pub fn neighbors(spec: &LatticeSpec, v: &Vertex) -> Result<Vec<Vertex>> {
    if v.dim() != spec.dim {
        return Err(Error::param(format!("vertex {v} has dimension {}, lattice has {}", v.dim(), spec.dim)));
    }
    spec.validate()?;
    Ok(offsets_for(spec.dim, spec.range() as i64, spec.rule).iter().map(|o| v.translate(o)).collect())
}

/// Explicit edge-state table of every edge with both endpoints in
/// `[-radius, radius]^d`.
#[derive(Clone, Debug)]
pub struct EagerBox {
    lattice: Lattice,
    radius: i64,
    side: i64,
    /// `vertex_index * slots + slot`: 0 closed, 1 open, 2 leaves the box.
    states: Vec<u8>,
}

const ABSENT: u8 = 2;

impl EagerBox {
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn index(&self, v: &Vertex) -> Option<usize> {
        if v.dim() != self.lattice.dim() || v.sup_norm() > self.radius {
            return None;
        }
        let mut idx = 0usize;
        for &c in v.coords() {
            idx = idx * self.side as usize + (c + self.radius) as usize;
        }
        Some(idx)
    }

    /// State of `e`, or `None` if `e` is not an edge inside the box.
    pub fn state(&self, e: &Edge) -> Option<EdgeState> {
        let slot = self.lattice.slot_between(e.lo(), e.hi())?;
        let vi = self.index(e.lo())?;
        self.index(e.hi())?;
        match self.states[vi * self.lattice.geometry.positive.len() + slot as usize] {
            0 => Some(EdgeState::Closed),
            1 => Some(EdgeState::Open),
            _ => None,
        }
    }

    /// Every in-box edge with its state, lower endpoint in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, EdgeState)> + '_ {
        let slots = self.lattice.geometry.positive.len();
        let dim = self.lattice.dim();
        self.states.iter().enumerate().filter(|(_, &s)| s != ABSENT).map(move |(i, &s)| {
            let (mut vi, slot) = (i / slots, i % slots);
            let mut coords = vec![0i64; dim];
            for c in coords.iter_mut().rev() {
                *c = (vi % self.side as usize) as i64 - self.radius;
                vi /= self.side as usize;
            }
            let lo = Vertex::new(coords);
            let step = &self.lattice.geometry.steps[self.lattice.geometry.positive[slot]];
            let hi = lo.translate(&step.coords);
            (Edge { lo, hi }, if s == 1 { EdgeState::Open } else { EdgeState::Closed })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.states.iter().filter(|&&s| s != ABSENT).count()
    }

    pub fn open_count(&self) -> usize {
        self.states.iter().filter(|&&s| s == 1).count()
    }
}

/// Number of edges with both endpoints in `[-radius, radius]^d`.
pub fn box_edge_count(lattice: &Lattice, radius: i64) -> u64 {
    let side = 2 * radius + 1;
    let g = &*lattice.geometry;
    g.positive
        .iter()
        .map(|&i| {
            g.steps[i].coords.iter().map(|&c| (side - c.abs()).max(0) as u64).product::<u64>()
        })
        .sum()
}

pub fn eager_box_config(cfg: &PercolationConfig, radius: i64) -> Result<EagerBox> {
    if radius < 0 {
        return Err(Error::param("box radius must be nonnegative"));
    }
    let lattice = cfg.lattice().clone();
    if radius > lattice.half_width() {
        return Err(Error::BoxOverflow { half_width: lattice.half_width() });
    }
    let edges = box_edge_count(&lattice, radius);
    if edges > EAGER_EDGE_LIMIT {
        return Err(Error::ResourceLimit(format!("{edges} edges exceed the eager limit {EAGER_EDGE_LIMIT}")));
    }
    let side = 2 * radius + 1;
    let dim = lattice.dim();
    let vertices = (side as u64).pow(dim as u32) as usize;
    let g = Arc::clone(&lattice.geometry);
    let slots = g.positive.len();
    let mut states = vec![ABSENT; vertices * slots];
    let mut coords = vec![-radius; dim];
    for vi in 0..vertices {
        let v = Vertex::new(coords.clone());
        let key = lattice.key(&v)?;
        for (slot, &si) in g.positive.iter().enumerate() {
            let step = &g.steps[si];
            let inside = coords.iter().zip(&step.coords).all(|(a, b)| (a + b).abs() <= radius);
            if inside {
                states[vi * slots + slot] = cfg.is_open_slot(key, slot as u32) as u8;
            }
        }
        // odometer increment, last axis fastest (matches `EagerBox::index`)
        for c in coords.iter_mut().rev() {
            if *c < radius {
                *c += 1;
                break;
            }
            *c = -radius;
        }
    }
    Ok(EagerBox { lattice, radius, side, states })
}
