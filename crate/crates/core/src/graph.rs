//! Compact rooted graphs shared by the walk and resistance engines.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const MAGIC: &str = "iic-graph";
const FORMAT_VERSION: u32 = 1;

/// Finite rooted graph in CSR form with graph-distance depths from the root.
///
/// `truncation_radius` is `Some(R)` when the sample is the ball of radius `R`
/// of a larger (possibly infinite) graph: vertices at depth `R` may have
/// neighbours that are not stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSample {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    depth: Vec<u32>,
    origin: u32,
    truncation: Option<u32>,
}

impl GraphSample {
    /// Builds from an undirected edge list; parallel edges are kept.
    pub fn from_edges(n: usize, edges: &[(u32, u32)], origin: u32, truncation: Option<u32>) -> Result<Self> {
        if n == 0 || origin as usize >= n {
            return Err(Error::param(format!("origin {origin} out of range for {n} vertices")));
        }
        if n > u32::MAX as usize {
            return Err(Error::ResourceLimit(format!("{n} vertices")));
        }
        let mut deg = vec![0usize; n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::param(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::param(format!("self-loop at {a}")));
            }
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(a, b) in edges {
            neighbors[fill[a as usize]] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        Self::from_csr(offsets, neighbors, origin, truncation)
    }

    /// Builds from CSR arrays; the adjacency must be symmetric.
    pub fn from_csr(offsets: Vec<usize>, neighbors: Vec<u32>, origin: u32, truncation: Option<u32>) -> Result<Self> {
        let n = offsets.len().saturating_sub(1);
        if n == 0 || origin as usize >= n || *offsets.last().unwrap() != neighbors.len() {
            return Err(Error::param("malformed adjacency arrays"));
        }
        let depth = bfs_depth(&offsets, &neighbors, origin);
        if depth.contains(&u32::MAX) {
            return Err(Error::param("graph is not connected to its origin"));
        }
        let g = GraphSample { offsets, neighbors, depth, origin, truncation };
        if let Some(r) = truncation {
            if g.max_depth() > r {
                return Err(Error::param(format!("depth {} exceeds truncation radius {r}", g.max_depth())));
            }
        }
        Ok(g)
    }

    pub(crate) fn from_parts_unchecked(
        offsets: Vec<usize>,
        neighbors: Vec<u32>,
        depth: Vec<u32>,
        origin: u32,
        truncation: Option<u32>,
    ) -> Self {
        GraphSample { offsets, neighbors, depth, origin, truncation }
    }

    pub fn n(&self) -> usize {
        self.depth.len()
    }

    pub fn origin(&self) -> u32 {
        self.origin
    }

    pub fn truncation_radius(&self) -> Option<u32> {
        self.truncation
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    #[inline]
    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub(crate) fn adjacency(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Each undirected edge once, as `(u, w)` with `u < w`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n() as u32).flat_map(move |u| self.neighbors(u).iter().filter(move |&&w| u < w).map(move |&w| (u, w)))
    }

    /// Number of vertices at each depth.
    pub fn level_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.max_depth() as usize + 1];
        for &d in &self.depth {
            sizes[d as usize] += 1;
        }
        sizes
    }

    /// True if every edge joins consecutive depths.
    pub fn bipartite_by_depth(&self) -> bool {
        self.edges().all(|(u, w)| self.depth(u).abs_diff(self.depth(w)) == 1)
    }

    /// The induced subgraph on `depth <= r`, with the origin kept at index 0
    /// of the relative order.
    pub fn restrict_to_depth(&self, r: u32) -> GraphSample {
        let mut map = vec![u32::MAX; self.n()];
        let mut next = 0u32;
        for v in 0..self.n() {
            if self.depth[v] <= r {
                map[v] = next;
                next += 1;
            }
        }
        let mut offsets = Vec::with_capacity(next as usize + 1);
        let mut neighbors = Vec::new();
        let mut depth = Vec::with_capacity(next as usize);
        offsets.push(0);
        for v in 0..self.n() as u32 {
            if map[v as usize] == u32::MAX {
                continue;
            }
            neighbors.extend(self.neighbors(v).iter().filter(|&&w| map[w as usize] != u32::MAX).map(|&w| map[w as usize]));
            offsets.push(neighbors.len());
            depth.push(self.depth[v as usize]);
        }
        let truncation = match self.truncation {
            Some(t) if t <= r => Some(t),
            _ if self.max_depth() > r => Some(r),
            t => t,
        };
        GraphSample { offsets, neighbors, depth, origin: map[self.origin as usize], truncation }
    }

    /// Checks symmetry of the adjacency and consistency of the depths.
    pub fn validate(&self) -> Result<()> {
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(self.neighbors.len());
        for u in 0..self.n() as u32 {
            for &w in self.neighbors(u) {
                if w as usize >= self.n() || w == u {
                    return Err(Error::param(format!("bad neighbour {w} of {u}")));
                }
                pairs.push((u, w));
            }
        }
        let mut rev: Vec<(u32, u32)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        pairs.sort_unstable();
        rev.sort_unstable();
        if pairs != rev {
            return Err(Error::param("adjacency is not symmetric"));
        }
        if bfs_depth(&self.offsets, &self.neighbors, self.origin) != self.depth {
            return Err(Error::param("stored depths disagree with graph distance"));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let trunc = self.truncation.map_or("none".to_string(), |r| r.to_string());
        writeln!(w, "{MAGIC} {FORMAT_VERSION} {} {} {trunc}", self.n(), self.origin)?;
        for v in 0..self.n() as u32 {
            let line: Vec<String> = self.neighbors(v).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty graph file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != MAGIC {
            return Err(Error::Format(format!("bad header {header:?}")));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        if num(fields[1])? != FORMAT_VERSION as u64 {
            return Err(Error::Format(format!("unsupported version {}", fields[1])));
        }
        let n = num(fields[2])? as usize;
        let origin = num(fields[3])? as u32;
        let truncation = match fields[4] {
            "none" => None,
            s => Some(num(s)? as u32),
        };
        let mut offsets = vec![0usize];
        let mut neighbors = Vec::new();
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| Error::Format("truncated graph file".into()))??;
            for tok in line.split_whitespace() {
                neighbors.push(num(tok)? as u32);
            }
            offsets.push(neighbors.len());
        }
        let g = Self::from_csr(offsets, neighbors, origin, truncation).map_err(|e| Error::Format(e.to_string()))?;
        g.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(g)
    }
}

/// Source of random rooted samples truncated at a requested depth.
pub trait GraphSampler: Sync {
    fn sample(&self, radius: u32, seed: u64) -> Result<GraphSample>;
}

fn bfs_depth(offsets: &[usize], neighbors: &[u32], origin: u32) -> Vec<u32> {
    let n = offsets.len() - 1;
    let mut depth = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    depth[origin as usize] = 0;
    queue.push_back(origin);
    while let Some(u) = queue.pop_front() {
        for &w in &neighbors[offsets[u as usize]..offsets[u as usize + 1]] {
            if (w as usize) < n && depth[w as usize] == u32::MAX {
                depth[w as usize] = depth[u as usize] + 1;
                queue.push_back(w);
            }
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: u32) -> GraphSample {
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        GraphSample::from_edges(n as usize, &edges, 0, None).unwrap()
    }

    #[test]
    fn path_depths() {
        let g = path(5);
        assert_eq!(g.depths(), &[0, 1, 2, 3, 4]);
        assert_eq!(g.edge_count(), 4);
        assert!(g.bipartite_by_depth());
        g.validate().unwrap();
    }

    #[test]
    fn triangle_is_not_bipartite_by_depth() {
        let g = GraphSample::from_edges(3, &[(0, 1), (1, 2), (2, 0)], 0, None).unwrap();
        assert!(!g.bipartite_by_depth());
        assert_eq!(g.level_sizes(), vec![1, 2]);
    }

    #[test]
    fn disconnected_rejected() {
        assert!(GraphSample::from_edges(3, &[(0, 1)], 0, None).is_err());
        assert!(GraphSample::from_edges(2, &[(0, 0)], 0, None).is_err());
    }

    #[test]
    fn restriction() {
        let g = path(6).restrict_to_depth(3);
        assert_eq!(g.n(), 4);
        assert_eq!(g.truncation_radius(), Some(3));
        g.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let g = GraphSample::from_edges(4, &[(0, 1), (1, 2), (1, 3), (0, 1)], 1, Some(2)).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = GraphSample::read_from(&buf[..]).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn malformed_files() {
        assert!(GraphSample::read_from(&b""[..]).is_err());
        assert!(GraphSample::read_from(&b"iic-graph 1 2 0 none\n1\n"[..]).is_err());
        assert!(GraphSample::read_from(&b"iic-graph 1 2 0 none\n1\n\n"[..]).is_err());
        assert!(GraphSample::read_from(&b"graph 1 1 0 none\n\n"[..]).is_err());
    }
}
