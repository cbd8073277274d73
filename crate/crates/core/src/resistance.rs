//! Electric networks on [`GraphSample`]s with unit conductance per edge.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSample;
use crate::rng::{derive_seed, trial_rng};
use crate::stats::Moments;
use crate::walk::hitting_time;

/// Relative residual at which the conjugate gradient solve stops.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResistanceMethod {
    ExactSolve,
    NashWilliamsBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResistanceResult {
    /// `f64::INFINITY` when the source is cut off from the targets.
    pub r_eff: f64,
    pub method: ResistanceMethod,
    /// Relative residual of the solve (exact method only).
    pub residual: Option<f64>,
    pub iterations: usize,
    pub source: u32,
    pub targets: String,
}

/// Effective resistance between `source` and the set `targets`.
///
/// Targets are shorted together and grounded; a unit current is injected at
/// the source and `r_eff` is the source potential. Vertices that carry no
/// current (dangling trees) are removed before the Jacobi-preconditioned
/// conjugate gradient solve.
pub fn effective_resistance(g: &GraphSample, source: u32, targets: &[u32]) -> Result<ResistanceResult> {
    let n = g.n();
    if source as usize >= n || targets.iter().any(|&t| t as usize >= n) {
        return Err(Error::param("vertex index out of range"));
    }
    let descr = format!("{} vertices", targets.len());
    let mut result = ResistanceResult {
        r_eff: f64::INFINITY,
        method: ResistanceMethod::ExactSolve,
        residual: None,
        iterations: 0,
        source,
        targets: descr,
    };
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t as usize] = true;
    }
    if is_target[source as usize] {
        result.r_eff = 0.0;
        result.residual = Some(0.0);
        return Ok(result);
    }
    // component of the source with targets as a boundary
    const FREE: u32 = u32::MAX;
    let mut index = vec![FREE; n];
    let mut members = vec![source];
    index[source as usize] = 0;
    let mut touches_target = false;
    let mut head = 0;
    while head < members.len() {
        let u = members[head];
        head += 1;
        for &w in g.neighbors(u) {
            if is_target[w as usize] {
                touches_target = true;
            } else if index[w as usize] == FREE {
                index[w as usize] = members.len() as u32;
                members.push(w);
            }
        }
    }
    if !touches_target {
        return Ok(result);
    }
    // degree within the network (edges to targets included)
    let m = members.len();
    let mut deg: Vec<u32> = members.iter().map(|&v| g.degree(v) as u32).collect();
    let mut alive = vec![true; m];
    let mut stack: Vec<usize> = (1..m).filter(|&i| deg[i] == 1).collect();
    while let Some(i) = stack.pop() {
        if !alive[i] || deg[i] != 1 {
            continue;
        }
        alive[i] = false;
        deg[i] = 0;
        for &w in g.neighbors(members[i]) {
            let j = index[w as usize];
            if j != FREE && alive[j as usize] {
                let j = j as usize;
                deg[j] -= 1;
                if deg[j] == 1 && j != 0 {
                    stack.push(j);
                }
            }
        }
    }
    // compact system
    let mut slot = vec![FREE; m];
    let mut live = Vec::new();
    for i in 0..m {
        if alive[i] {
            slot[i] = live.len() as u32;
            live.push(i);
        }
    }
    let k = live.len();
    let mut offsets = Vec::with_capacity(k + 1);
    let mut cols = Vec::new();
    offsets.push(0usize);
    let mut diag = Vec::with_capacity(k);
    for &i in &live {
        for &w in g.neighbors(members[i]) {
            let j = index[w as usize];
            if j != FREE && alive[j as usize] {
                cols.push(slot[j as usize]);
            }
        }
        offsets.push(cols.len());
        diag.push(deg[i] as f64);
    }
    let mut b = vec![0.0; k];
    b[0] = 1.0;
    let (x, iterations, residual) = conjugate_gradient(&offsets, &cols, &diag, &b)?;
    result.r_eff = x[0];
    result.iterations = iterations;
    result.residual = Some(residual);
    Ok(result)
}

/// Solves `(D - A) x = b`, `A` given by CSR columns, with Jacobi
/// preconditioning.
fn conjugate_gradient(offsets: &[usize], cols: &[u32], diag: &[f64], b: &[f64]) -> Result<(Vec<f64>, usize, f64)> {
    let k = b.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for v in 0..k {
            let mut s = diag[v] * x[v];
            for &w in &cols[offsets[v]..offsets[v + 1]] {
                s -= x[w as usize];
            }
            out[v] = s;
        }
    };
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = vec![0.0; k];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; k];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let cap = 20 * k + 1000;
    for it in 0..cap {
        let res = r.iter().map(|x| x * x).sum::<f64>().sqrt() / norm_b;
        if res <= SOLVER_TOLERANCE {
            return Ok((x, it, res));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverFailure { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for v in 0..k {
            x[v] += alpha * p[v];
            r[v] -= alpha * ap[v];
            z[v] = r[v] / diag[v];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for v in 0..k {
            p[v] = z[v] + beta * p[v];
        }
    }
    let res = r.iter().map(|x| x * x).sum::<f64>().sqrt() / norm_b;
    Err(Error::SolverFailure { iterations: cap, residual: res })
}

/// Vertices at depth exactly `r`.
pub fn level(g: &GraphSample, r: u32) -> Vec<u32> {
    (0..g.n() as u32).filter(|&v| g.depth(v) == r).collect()
}

/// `R_eff(origin, dB(origin, r))`, infinite when level `r` is empty.
pub fn resistance_to_level(g: &GraphSample, r: u32) -> Result<ResistanceResult> {
    if r == 0 {
        return Err(Error::param("level must be positive"));
    }
    let ball = g.restrict_to_depth(r);
    let targets = level(&ball, r);
    let mut res = effective_resistance(&ball, ball.origin(), &targets)?;
    res.targets = format!("level {r}");
    Ok(res)
}

/// Edges between depth `j - 1` and `j`, for `j = 1..=r`.
pub fn level_cut_sizes(g: &GraphSample, r: u32) -> Vec<u64> {
    let mut cuts = vec![0u64; r as usize + 1];
    for (u, w) in g.edges() {
        let (a, b) = (g.depth(u), g.depth(w));
        let hi = a.max(b);
        if a != b && hi <= r {
            cuts[hi as usize] += 1;
        }
    }
    cuts
}

/// `sum_{j=1}^r 1 / |Pi_j|` over the level cut-sets; a lower bound for
/// `R_eff(origin, dB(origin, r))`.
pub fn nash_williams_bound(g: &GraphSample, r: u32) -> Result<ResistanceResult> {
    if r == 0 {
        return Err(Error::param("level must be positive"));
    }
    let cuts = level_cut_sizes(g, r);
    let r_eff = if cuts[1..].contains(&0) {
        f64::INFINITY
    } else {
        cuts[1..].iter().map(|&c| 1.0 / c as f64).sum()
    };
    Ok(ResistanceResult {
        r_eff,
        method: ResistanceMethod::NashWilliamsBound,
        residual: None,
        iterations: 0,
        source: g.origin(),
        targets: format!("level {r}"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneReport {
    pub r: u32,
    /// Levels `j` in `[ceil(r/4), floor(r/2)]`, `j >= 1`.
    pub levels: Vec<u32>,
    /// Lane count per level.
    pub lanes: Vec<u64>,
}

impl LaneReport {
    /// More than half of the levels have at least `lambda` lanes.
    pub fn lane_rich(&self, lambda: f64) -> bool {
        let rich = self.lanes.iter().filter(|&&l| l as f64 >= lambda).count();
        2 * rich > self.levels.len()
    }

    pub fn total(&self) -> u64 {
        self.lanes.iter().sum()
    }
}

/// Counts lanes for `r`: edges from depth `j - 1` to depth `j` that start a
/// path reaching depth `r` without returning to depth `j - 1`.
///
/// Such a path stays at depth `>= j`, so one reverse search from level `r`
/// inside the depth-`>= j` subgraph decides every edge of level `j`.
pub fn lane_report(g: &GraphSample, r: u32) -> LaneReport {
    let lo = r.div_ceil(4).max(1);
    let hi = r / 2;
    let levels: Vec<u32> = (lo..=hi).collect();
    let mut lanes = Vec::with_capacity(levels.len());
    let seeds = level(g, r);
    let mut mark = vec![u32::MAX; g.n()];
    let mut queue = VecDeque::new();
    for &j in &levels {
        for &s in &seeds {
            mark[s as usize] = j;
            queue.push_back(s);
        }
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u) {
                if g.depth(w) >= j && mark[w as usize] != j {
                    mark[w as usize] = j;
                    queue.push_back(w);
                }
            }
        }
        let mut count = 0u64;
        for v in 0..g.n() as u32 {
            if g.depth(v) == j && mark[v as usize] == j {
                count += g.neighbors(v).iter().filter(|&&u| g.depth(u) + 1 == j).count() as u64;
            }
        }
        lanes.push(count);
    }
    LaneReport { r, levels, lanes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommuteReport {
    pub trials: usize,
    pub mean_commute: f64,
    pub stderr: f64,
    /// `2 R_eff(x, y) |E|`.
    pub predicted: f64,
    pub ratio: f64,
    /// Approximate 95% interval for the ratio.
    pub ratio_ci: (f64, f64),
}

/// Monte Carlo commute time between `x` and `y` against the identity
/// `E_x T_y + E_y T_x = 2 R_eff(x, y) |E|`.
pub fn commute_time_check(g: &GraphSample, x: u32, y: u32, trials: usize, seed: u64) -> Result<CommuteReport> {
    if trials == 0 {
        return Err(Error::param("trials must be positive"));
    }
    if x == y {
        return Err(Error::param("commute endpoints must differ"));
    }
    let r = effective_resistance(g, x, &[y])?;
    if !r.r_eff.is_finite() {
        return Err(Error::param("endpoints are disconnected"));
    }
    let predicted = 2.0 * r.r_eff * g.edge_count() as f64;
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            let mut rng = trial_rng(derive_seed(seed, c as u64));
            for _ in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let t = hitting_time(g, x, y, &mut rng) + hitting_time(g, y, x, &mut rng);
                m.push(t as f64);
            }
            m
        })
        .collect();
    let mut m = Moments::default();
    for p in &parts {
        m.merge(p);
    }
    let ratio = m.mean() / predicted;
    let half = 1.96 * m.stderr() / predicted;
    Ok(CommuteReport {
        trials,
        mean_commute: m.mean(),
        stderr: m.stderr(),
        predicted,
        ratio,
        ratio_ci: (ratio - half, ratio + half),
    })
}
