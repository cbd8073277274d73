//! Simple random walk on a [`GraphSample`]: exact return probabilities by
//! distribution iteration, and Monte Carlo trajectories for hitting times
//! and range.
//!
//! On a truncated sample (`truncation_radius = Some(R)`) the vertices at
//! depth `R` are absorbing. Return probabilities computed this way are lower
//! bounds for the untruncated graph, exact up to the absorbed mass, which is
//! reported with every value.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphSample, GraphSampler};
use crate::rng::{derive_seed, trial_rng};
use crate::stats::Moments;

/// Absorbed mass above which a return probability is flagged.
pub const ESCAPE_TOLERANCE: f64 = 1e-6;

/// Per-vertex mass below which the mass is dropped (and counted as
/// escaped) rather than carried as a subnormal.
const FLUSH_BELOW: f64 = 1e-40;

/// The law of the walk at time `t`, advanced one step at a time.
///
/// Internally vertices are relabelled by distance from the start so that the
/// support at time `t` (distance `<= t`) is a prefix, and the mass is stored
/// divided by the degree.
pub struct Diffusion {
    offsets: Vec<u32>,
    adj: Vec<u32>,
    /// Fixed-width copy of `adj` for small degrees, padded with the index
    /// of a mass-free dummy slot; avoids data-dependent inner loops.
    padded: Option<(usize, Vec<u32>)>,
    inv_deg: Vec<f64>,
    deg: Vec<f64>,
    /// `level_end[k]`: one past the last vertex at distance `k`.
    level_end: Vec<usize>,
    /// Index of the first absorbing vertex; absorbing vertices are last.
    first_absorbing: usize,
    absorbing_parity: Vec<u8>,
    bipartite: bool,
    q: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
    escaped: f64,
    /// Deepest level that has carried mass.
    front: usize,
}

impl Diffusion {
    pub fn new(g: &GraphSample, start: u32) -> Result<Self> {
        if start as usize >= g.n() {
            return Err(Error::param(format!("start vertex {start} out of range")));
        }
        let absorbing = |v: u32| g.truncation_radius() == Some(g.depth(v));
        if absorbing(start) {
            return Err(Error::param("walk starts on the truncation boundary"));
        }
        let n = g.n();
        // breadth-first from the start, through non-absorbing vertices only
        let mut dist = vec![u32::MAX; n];
        let mut order = Vec::with_capacity(n);
        dist[start as usize] = 0;
        order.push(start);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            if absorbing(u) {
                continue;
            }
            for &w in g.neighbors(u) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u as usize] + 1;
                    order.push(w);
                }
            }
        }
        // stable partition: transient vertices by distance, then absorbing ones
        let (mut live, dead): (Vec<u32>, Vec<u32>) = order.into_iter().partition(|&v| !absorbing(v));
        let first_absorbing = live.len();
        live.extend(dead);
        let order = live;
        let mut label = vec![u32::MAX; n];
        for (i, &v) in order.iter().enumerate() {
            label[v as usize] = i as u32;
        }
        let mut level_end = Vec::new();
        for (i, &v) in order[..first_absorbing].iter().enumerate() {
            let k = dist[v as usize] as usize;
            if level_end.len() <= k {
                level_end.resize(k + 1, i);
            }
            level_end[k] = i + 1;
        }
        let mut offsets = Vec::with_capacity(order.len() + 1);
        let mut adj = Vec::new();
        let mut inv_deg = Vec::with_capacity(order.len());
        let mut deg = Vec::with_capacity(order.len());
        let mut bipartite = true;
        offsets.push(0u32);
        for &v in &order {
            for &w in g.neighbors(v) {
                if label[w as usize] != u32::MAX {
                    adj.push(label[w as usize]);
                    if dist[v as usize].abs_diff(dist[w as usize]) != 1 && !(absorbing(v) && absorbing(w)) {
                        bipartite = false;
                    }
                }
            }
            offsets.push(adj.len() as u32);
            let d = g.degree(v) as f64;
            deg.push(d);
            inv_deg.push(1.0 / d);
        }
        if adj.len() > u32::MAX as usize {
            return Err(Error::ResourceLimit("adjacency too large".into()));
        }
        let absorbing_parity = order[first_absorbing..].iter().map(|&v| (dist[v as usize] % 2) as u8).collect();
        let m = order.len();
        let max_deg = offsets.windows(2).map(|w| (w[1] - w[0]) as usize).max().unwrap_or(0);
        let padded = PAD_WIDTHS.iter().find(|&&w| w >= max_deg).map(|&w| {
            let mut pad = vec![m as u32; m * w];
            for v in 0..m {
                let row = &adj[offsets[v] as usize..offsets[v + 1] as usize];
                pad[v * w..v * w + row.len()].copy_from_slice(row);
            }
            (w, pad)
        });
        let mut q = vec![0.0; m + 1];
        q[0] = inv_deg[0];
        Ok(Diffusion {
            offsets,
            adj,
            padded,
            inv_deg,
            deg,
            level_end,
            first_absorbing,
            absorbing_parity,
            bipartite,
            q,
            scratch: vec![0.0; m + 1],
            t: 0,
            escaped: 0.0,
            front: 0,
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    /// Mass absorbed at the truncation boundary so far.
    pub fn escaped(&self) -> f64 {
        self.escaped
    }

    /// True if every edge joins consecutive distances from the start.
    pub fn is_bipartite(&self) -> bool {
        self.bipartite
    }

    /// Probability of being at the start vertex now.
    pub fn at_start(&self) -> f64 {
        if self.bipartite && self.t % 2 == 1 {
            0.0
        } else {
            self.q[0] * self.deg[0]
        }
    }

    /// Mass on non-absorbed vertices.
    pub fn live_mass(&self) -> f64 {
        let reach = self.reach(self.t);
        (0..reach).filter(|&i| self.live(i, self.t)).map(|i| self.q[i] * self.deg[i]).sum()
    }

    fn level_of(&self, i: usize) -> usize {
        self.level_end.partition_point(|&e| e <= i)
    }

    fn live(&self, i: usize, t: u64) -> bool {
        !self.bipartite || (self.level_of(i) as u64 % 2 == t % 2)
    }

    /// Number of leading vertices that can carry mass at time `t`.
    fn reach(&self, t: u64) -> usize {
        let k = (t as usize).min(self.level_end.len() - 1);
        self.level_end[k]
    }

    pub fn step(&mut self) {
        let t1 = self.t + 1;
        let parity = (t1 % 2) as u8;
        let mut into = 0.0;
        for (k, a) in (self.first_absorbing..self.deg.len()).enumerate() {
            if !self.bipartite || self.absorbing_parity[k] == parity {
                into += self.pull(a);
            }
        }
        let top = (t1 as usize).min(self.front + 1).min(self.level_end.len() - 1);
        if self.bipartite {
            // only the levels of the new parity change; the others go stale
            let mut k = parity as usize;
            while k <= top {
                let lo = if k == 0 { 0 } else { self.level_end[k - 1] };
                let hi = self.level_end[k];
                into += match &self.padded {
                    Some((w, pad)) => relax_padded(&mut self.q, *w, pad, &self.inv_deg, &self.deg, lo, hi),
                    None => relax_in_place(&mut self.q, &self.offsets, &self.adj, &self.inv_deg, &self.deg, lo, hi),
                };
                k += 2;
            }
        } else {
            let hi = self.level_end[top];
            into += relax_into(&self.q, &mut self.scratch[..hi], &self.offsets, &self.adj, &self.inv_deg, &self.deg);
            std::mem::swap(&mut self.q, &mut self.scratch);
        }
        self.escaped += into;
        if top > self.front {
            let lo = self.level_end[top - 1];
            if self.q[lo..self.level_end[top]].iter().any(|&x| x > 0.0) {
                self.front = top;
            }
        }
        self.t = t1;
    }

    /// `p_{2t}(x, x)` from the law at time `t`, by reversibility:
    /// `p_{2t}(x, x) = deg(x) * sum_v mu_t(v)^2 / deg(v)`.
    pub fn return_at_double_time(&self) -> f64 {
        let reach = self.reach(self.t);
        let s: f64 = (0..reach).filter(|&i| self.live(i, self.t)).map(|i| self.q[i] * self.q[i] * self.deg[i]).sum();
        s * self.deg[0]
    }

    #[inline(always)]
    fn pull(&self, v: usize) -> f64 {
        let (a, b) = (self.offsets[v] as usize, self.offsets[v + 1] as usize);
        let mut s = 0.0;
        // absorbing vertices are never written, so they contribute zero
        for &u in &self.adj[a..b] {
            s += self.q[u as usize];
        }
        s
    }

}

/// `q[v] = inv_deg[v] * sum_{u ~ v} q[u]` for `v` in `lo..hi`, where no
/// neighbour of a vertex in the range lies in the range. Returns the mass
/// flushed to zero.
fn relax_in_place(q: &mut [f64], offsets: &[u32], adj: &[u32], inv_deg: &[f64], deg: &[f64], lo: usize, hi: usize) -> f64 {
    let mut dropped = 0.0;
    let offsets = &offsets[lo..=hi];
    let (inv_deg, deg) = (&inv_deg[lo..hi], &deg[lo..hi]);
    for i in 0..hi - lo {
        let mut s = 0.0;
        for &u in &adj[offsets[i] as usize..offsets[i + 1] as usize] {
            s += q[u as usize];
        }
        let x = s * inv_deg[i];
        if x < FLUSH_BELOW {
            dropped += x * deg[i];
            q[lo + i] = 0.0;
        } else {
            q[lo + i] = x;
        }
    }
    dropped
}

const PAD_WIDTHS: [usize; 5] = [1, 2, 3, 4, 6];

fn relax_padded(q: &mut [f64], width: usize, pad: &[u32], inv_deg: &[f64], deg: &[f64], lo: usize, hi: usize) -> f64 {
    match width {
        1 => relax_fixed::<1>(q, pad, inv_deg, deg, lo, hi),
        2 => relax_fixed::<2>(q, pad, inv_deg, deg, lo, hi),
        3 => relax_fixed::<3>(q, pad, inv_deg, deg, lo, hi),
        4 => relax_fixed::<4>(q, pad, inv_deg, deg, lo, hi),
        6 => relax_fixed::<6>(q, pad, inv_deg, deg, lo, hi),
        _ => unreachable!("unsupported pad width {width}"),
    }
}

fn relax_fixed<const W: usize>(q: &mut [f64], pad: &[u32], inv_deg: &[f64], deg: &[f64], lo: usize, hi: usize) -> f64 {
    let mut dropped = 0.0;
    let rows = pad[lo * W..hi * W].chunks_exact(W);
    for ((i, row), (&inv, &d)) in rows.enumerate().zip(inv_deg[lo..hi].iter().zip(&deg[lo..hi])) {
        let mut s = 0.0;
        for &u in row {
            s += q[u as usize];
        }
        let x = s * inv;
        if x < FLUSH_BELOW {
            dropped += x * d;
            q[lo + i] = 0.0;
        } else {
            q[lo + i] = x;
        }
    }
    dropped
}

fn relax_into(q: &[f64], out: &mut [f64], offsets: &[u32], adj: &[u32], inv_deg: &[f64], deg: &[f64]) -> f64 {
    let mut dropped = 0.0;
    for (v, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for &u in &adj[offsets[v] as usize..offsets[v + 1] as usize] {
            s += q[u as usize];
        }
        let x = s * inv_deg[v];
        if x < FLUSH_BELOW {
            dropped += x * deg[v];
            *o = 0.0;
        } else {
            *o = x;
        }
    }
    dropped
}

/// `p_{2n}(x, x)` for each `n` of a list.
///
/// Values are computed from the law at time `n`; `escaped[k]` is the mass
/// absorbed by time `n[k]`. A loop of length `2n` through the boundary
/// touches it in its first or (by reversal) its second half, so the value
/// for the untruncated graph lies in `[p2n, p2n + 2 * escaped]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnCurve {
    pub n: Vec<u64>,
    pub p2n: Vec<f64>,
    pub escaped: Vec<f64>,
    /// Largest `|live + escaped - 1|` seen at the requested times.
    pub conservation_error: f64,
    /// Absorbed mass exceeded [`ESCAPE_TOLERANCE`] by the last requested time.
    pub truncation_hit: bool,
}

/// Exact return probabilities at even times `2n`, `n` in `n_list`.
pub fn return_probability_exact(g: &GraphSample, n_list: &[u64], origin: u32) -> Result<ReturnCurve> {
    return_curve_impl(g, n_list, origin, None)
}

/// Like [`return_probability_exact`] but stops early once the absorbed mass
/// exceeds `abort_above`; the returned curve is then flagged and truncated.
pub fn return_probability_until(g: &GraphSample, n_list: &[u64], origin: u32, abort_above: f64) -> Result<ReturnCurve> {
    return_curve_impl(g, n_list, origin, Some(abort_above))
}

fn return_curve_impl(g: &GraphSample, n_list: &[u64], origin: u32, abort: Option<f64>) -> Result<ReturnCurve> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("n_list must be strictly increasing"));
    }
    let mut diff = Diffusion::new(g, origin)?;
    let mut curve = ReturnCurve {
        n: Vec::new(),
        p2n: Vec::new(),
        escaped: Vec::new(),
        conservation_error: 0.0,
        truncation_hit: false,
    };
    for &n in n_list {
        while diff.time() < n {
            diff.step();
            if let Some(limit) = abort {
                if diff.escaped() > limit {
                    curve.truncation_hit = true;
                    return Ok(curve);
                }
            }
        }
        curve.n.push(n);
        curve.p2n.push(diff.return_at_double_time());
        curve.escaped.push(diff.escaped());
        let err = (diff.live_mass() + diff.escaped() - 1.0).abs();
        curve.conservation_error = curve.conservation_error.max(err);
    }
    curve.truncation_hit = diff.escaped() > ESCAPE_TOLERANCE;
    Ok(curve)
}

/// Mean of `p_{2n}` over independently drawn samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedCurve {
    pub n: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    /// Samples that still lost more than the tolerance at the largest radius.
    pub flagged: usize,
    /// Final truncation radius used for each sample.
    pub radii: Vec<u32>,
}

/// Averages exact return curves over samples, doubling the truncation
/// radius of a sample (from `r0` up to `r_max`) until its absorbed mass at
/// the largest `n` is within [`ESCAPE_TOLERANCE`].
pub fn annealed_return_curve<S: GraphSampler + ?Sized>(
    sampler: &S,
    r0: u32,
    r_max: u32,
    n_list: &[u64],
    samples: usize,
    master_seed: u64,
) -> Result<AnnealedCurve> {
    if samples == 0 || n_list.is_empty() || r0 == 0 || r_max < r0 {
        return Err(Error::param("need samples > 0, a nonempty n_list and 0 < r0 <= r_max"));
    }
    let per_sample: Vec<Result<(ReturnCurve, u32)>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i);
            let mut r = r0;
            loop {
                let g = sampler.sample(r, seed)?;
                let c = return_probability_until(&g, n_list, g.origin(), ESCAPE_TOLERANCE)?;
                if !c.truncation_hit || r >= r_max {
                    let c = if c.truncation_hit { return_probability_exact(&g, n_list, g.origin())? } else { c };
                    return Ok((c, r));
                }
                r = (r * 2).min(r_max);
            }
        })
        .collect();
    let mut acc = vec![Moments::default(); n_list.len()];
    let mut flagged = 0;
    let mut radii = Vec::with_capacity(samples);
    for res in per_sample {
        let (c, r) = res?;
        flagged += c.truncation_hit as usize;
        radii.push(r);
        for (m, &p) in acc.iter_mut().zip(&c.p2n) {
            m.push(p);
        }
    }
    Ok(AnnealedCurve {
        n: n_list.to_vec(),
        mean: acc.iter().map(|m| m.mean()).collect(),
        stderr: acc.iter().map(|m| m.stderr()).collect(),
        samples,
        flagged,
        radii,
    })
}

/// What to record along each trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkPlan {
    /// Maximum number of steps per trajectory.
    pub max_steps: u64,
    /// Depths whose first hitting times are recorded.
    pub hit_depths: Vec<u32>,
    /// Times at which the range `|W_n|` is recorded.
    pub range_times: Vec<u64>,
    /// Stop a trajectory once all `hit_depths` have been hit and all
    /// `range_times` passed.
    pub stop_when_done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkTrial {
    /// First hitting time of each depth of the plan, `None` if censored.
    pub tau: Vec<Option<u64>>,
    /// Range at each requested time; trajectories are never shorter than
    /// the largest range time unless `max_steps` is.
    pub range: Vec<Option<u64>>,
    pub steps: u64,
    pub max_depth: u32,
    /// The walk came within one step of the truncation boundary.
    pub truncation_hit: bool,
}

/// Aggregated trajectory statistics of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub trials: usize,
    pub hit_depths: Vec<u32>,
    pub tau: Vec<Moments>,
    /// Trajectories with a censored hitting time, per depth.
    pub tau_censored: Vec<usize>,
    pub range_times: Vec<u64>,
    pub range: Vec<Moments>,
    pub truncation_hits: usize,
}

fn validate_plan(g: &GraphSample, plan: &WalkPlan) -> Result<()> {
    if plan.max_steps == 0 {
        return Err(Error::param("max_steps must be positive"));
    }
    if plan.hit_depths.windows(2).any(|w| w[0] >= w[1]) || plan.range_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("hit depths and range times must be strictly increasing"));
    }
    if g.n() > 1 && g.degree(g.origin()) == 0 {
        return Err(Error::param("origin is isolated"));
    }
    Ok(())
}

/// One trajectory from the origin. `stamp` must have one entry per vertex
/// and `trial_tag` must differ from every tag used before with it.
pub fn walk_trajectory(g: &GraphSample, plan: &WalkPlan, seed: u64, stamp: &mut [u32], trial_tag: u32) -> WalkTrial {
    let mut rng = trial_rng(seed);
    let offsets = g.offsets();
    let adj = g.adjacency();
    let depth = g.depths();
    let trunc_warn = g.truncation_radius().map(|r| r.saturating_sub(1)).unwrap_or(u32::MAX);
    let mut tau: Vec<Option<u64>> = vec![None; plan.hit_depths.len()];
    let mut range: Vec<Option<u64>> = vec![None; plan.range_times.len()];
    let mut next_depth = 0usize;
    let mut next_time = 0usize;
    let mut v = g.origin() as usize;
    let mut visited = 1u64;
    let mut max_depth = 0u32;
    stamp[v] = trial_tag;
    let record_hits = |t: u64, d: u32, next_depth: &mut usize, tau: &mut Vec<Option<u64>>| {
        while *next_depth < plan.hit_depths.len() && plan.hit_depths[*next_depth] <= d {
            tau[*next_depth] = Some(t);
            *next_depth += 1;
        }
    };
    record_hits(0, 0, &mut next_depth, &mut tau);
    let mut t = 0u64;
    while t < plan.max_steps {
        while next_time < plan.range_times.len() && plan.range_times[next_time] <= t {
            range[next_time] = Some(visited);
            next_time += 1;
        }
        if plan.stop_when_done && next_depth == plan.hit_depths.len() && next_time == plan.range_times.len() {
            break;
        }
        let (a, b) = (offsets[v], offsets[v + 1]);
        if a == b {
            break;
        }
        v = adj[a + rng.random_range(0..b - a)] as usize;
        t += 1;
        if stamp[v] != trial_tag {
            stamp[v] = trial_tag;
            visited += 1;
        }
        let d = depth[v];
        if d > max_depth {
            max_depth = d;
            record_hits(t, d, &mut next_depth, &mut tau);
        }
    }
    while next_time < plan.range_times.len() && plan.range_times[next_time] <= t {
        range[next_time] = Some(visited);
        next_time += 1;
    }
    WalkTrial { tau, range, steps: t, max_depth, truncation_hit: max_depth >= trunc_warn }
}

/// Runs `trials` trajectories (seeds `derive_seed(seed, i)`) and aggregates.
pub fn simulate_walk(g: &GraphSample, plan: &WalkPlan, trials: usize, seed: u64) -> Result<WalkStats> {
    validate_plan(g, plan)?;
    if trials == 0 {
        return Err(Error::param("trials must be positive"));
    }
    let mut stamp = vec![u32::MAX; g.n()];
    let mut stats = WalkStats {
        trials,
        hit_depths: plan.hit_depths.clone(),
        tau: vec![Moments::default(); plan.hit_depths.len()],
        tau_censored: vec![0; plan.hit_depths.len()],
        range_times: plan.range_times.clone(),
        range: vec![Moments::default(); plan.range_times.len()],
        truncation_hits: 0,
    };
    for i in 0..trials {
        let tr = walk_trajectory(g, plan, derive_seed(seed, i as u64), &mut stamp, i as u32);
        stats.truncation_hits += tr.truncation_hit as usize;
        for (k, t) in tr.tau.iter().enumerate() {
            match t {
                Some(t) => stats.tau[k].push(*t as f64),
                None => stats.tau_censored[k] += 1,
            }
        }
        for (k, w) in tr.range.iter().enumerate() {
            if let Some(w) = w {
                stats.range[k].push(*w as f64);
            }
        }
    }
    Ok(stats)
}

/// Expected hitting time of `target` from `from` by Monte Carlo.
pub(crate) fn hitting_time<R: rand::Rng>(g: &GraphSample, from: u32, target: u32, rng: &mut R) -> u64 {
    let offsets = g.offsets();
    let adj = g.adjacency();
    let mut v = from;
    let mut t = 0u64;
    while v != target {
        let (a, b) = (offsets[v as usize], offsets[v as usize + 1]);
        v = adj[a + rng.random_range(0..b - a)];
        t += 1;
    }
    t
}
