use serde::{Deserialize, Serialize};

use super::fit::{fit_exponent, FitPoint, FitPolicy};
use super::Model;
use crate::cluster::{explore_ball, ClusterSize, ExploreStatus};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeSpec, PercolationConfig, Vertex};
use crate::rng::derive_seed;
use crate::stats::{chunked_trials, Moments, Proportion};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub scale: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
}

impl ProbePoint {
    fn from_proportion(scale: f64, p: Proportion) -> Self {
        ProbePoint { scale, estimate: p.estimate(), stderr: p.stderr(), hits: p.hits, trials: p.trials }
    }
}

fn sum_counts(parts: Vec<Result<(Vec<u64>, u64)>>, len: usize) -> Result<(Vec<u64>, u64)> {
    let mut hits = vec![0u64; len];
    let mut extra = 0;
    for part in parts {
        let (h, e) = part?;
        extra += e;
        for (a, b) in hits.iter_mut().zip(h) {
            *a += b;
        }
    }
    Ok((hits, extra))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointCurve {
    pub targets: Vec<Vec<i64>>,
    /// Scale is the Euclidean norm of the target.
    pub points: Vec<ProbePoint>,
    /// Trials whose exploration stopped at the budget before finding the
    /// target; counted as not connected.
    pub undecided: Vec<u64>,
}

/// `P(0 <-> x)` for each target, from the same configurations.
pub fn two_point_probe(spec: &LatticeSpec, x_list: &[Vertex], trials: u64, seed: u64, budget: usize) -> Result<TwoPointCurve> {
    if trials == 0 {
        return Err(Error::param("trials must be positive"));
    }
    let lattice = Lattice::new(spec)?;
    if let Some(x) = x_list.iter().find(|x| x.dim() != spec.dim) {
        return Err(Error::param(format!("target {x} has the wrong dimension")));
    }
    let origin = Vertex::origin(spec.dim);
    let k = x_list.len();
    let parts = chunked_trials(trials, |range| -> Result<(Vec<u64>, u64)> {
        let mut counts = vec![0u64; 2 * k];
        for i in range {
            let cfg = PercolationConfig::from_lattice(lattice.clone(), derive_seed(seed, i));
            let ball = explore_ball(&cfg, &origin, u32::MAX, budget)?;
            for (j, x) in x_list.iter().enumerate() {
                if ball.contains(x) {
                    counts[j] += 1;
                } else if ball.is_partial() {
                    counts[k + j] += 1;
                }
            }
        }
        Ok((counts, 0))
    });
    let (counts, _) = sum_counts(parts, 2 * k)?;
    let points = x_list
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let norm = x.coords().iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            ProbePoint::from_proportion(norm, Proportion::new(counts[j], trials))
        })
        .collect();
    Ok(TwoPointCurve {
        targets: x_list.iter().map(|x| x.coords().to_vec()).collect(),
        points,
        undecided: counts[k..].to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleShell {
    pub k: u32,
    /// Shell `2^(k-1) < |x|_inf <= 2^k`.
    pub radius: u64,
    pub increment: f64,
    pub partial_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub dim: usize,
    pub amplitude: f64,
    pub exponent: f64,
    pub shells: Vec<TriangleShell>,
    /// Growth exponent `2d + 3a` of the dominant per-shell term.
    pub increment_exponent: f64,
    /// The last increments shrink.
    pub converging: bool,
}

/// Dyadic shell estimate of `sum_{x,y} t(x) t(y - x) t(y)` for the model
/// two-point function `t(x) = min(1, c |x|^a)`, `t(0) = 1`.
///
/// Shell `k` contributes `N_k^2 t_k^3 + 3 N_k t_k^2`, where `N_k` counts the
/// lattice points of the shell and `t_k = t(2^k)`: the first term has all
/// three points at scale `2^k`, the second has two of them coincide.
pub fn triangle_sum_probe(dim: usize, amplitude: f64, exponent: f64, max_shell: u32) -> Result<TriangleReport> {
    if dim == 0 || !(3..=40).contains(&max_shell) || !(amplitude >= 0.0) || !exponent.is_finite() {
        return Err(Error::param("triangle probe needs d >= 1, 3 <= shells <= 40, amplitude >= 0"));
    }
    let mut partial = 1.0;
    let mut shells = Vec::with_capacity(max_shell as usize);
    for k in 1..=max_shell {
        let r = 1u64 << k;
        let count = ((2 * r + 1) as f64).powi(dim as i32) - ((r + 1) as f64).powi(dim as i32);
        let t = (amplitude * (r as f64).powf(exponent)).min(1.0);
        let increment = count * count * t.powi(3) + 3.0 * count * t * t;
        partial += increment;
        shells.push(TriangleShell { k, radius: r, increment, partial_sum: partial });
    }
    let n = shells.len();
    let inc = |i: usize| shells[n - i].increment;
    let converging = inc(1) <= 0.0 || (inc(1) < inc(2) && inc(2) < inc(3));
    Ok(TriangleReport {
        dim,
        amplitude,
        exponent,
        shells,
        increment_exponent: 2.0 * dim as f64 + 3.0 * exponent,
        converging,
    })
}

/// [`triangle_sum_probe`] with `c |x|^a` fitted to a two-point curve; an
/// all-zero curve gives `c = 0`.
pub fn triangle_from_curve(dim: usize, curve: &TwoPointCurve, max_shell: u32) -> Result<TriangleReport> {
    if curve.points.iter().all(|p| p.hits == 0) {
        return triangle_sum_probe(dim, 0.0, 2.0 - dim as f64, max_shell);
    }
    let mut pts: Vec<FitPoint> = curve
        .points
        .iter()
        .filter(|p| p.hits > 0)
        .map(|p| FitPoint::new(p.scale, p.estimate, Some(p.stderr)))
        .collect();
    pts.sort_by(|a, b| a.scale.total_cmp(&b.scale));
    pts.dedup_by(|a, b| a.scale == b.scale);
    let fit = fit_exponent(&pts, &FitPolicy::all())?;
    triangle_sum_probe(dim, fit.intercept.exp(), fit.slope, max_shell)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub r: u32,
    pub g_r: f64,
    pub g_2r: f64,
    pub stderr_g_r: f64,
    pub stderr_g_2r: f64,
    /// `G(2r) r / G(r)^2`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecursion {
    pub rows: Vec<VolumeRow>,
    pub trials: u64,
    /// Excluded trials.
    pub budget_exceeded: u64,
}

/// Monte Carlo `G(r) = E|B(0, r)|` at `r` and `2r` for every `r` in the list.
pub fn volume_recursion_check(model: &Model, r_list: &[u32], trials: u64, seed: u64, budget: usize) -> Result<VolumeRecursion> {
    if trials == 0 || r_list.is_empty() || r_list.contains(&0) {
        return Err(Error::param("need trials > 0 and positive radii"));
    }
    let depth = 2 * r_list.iter().copied().max().unwrap();
    let parts = chunked_trials(trials, |range| -> Result<(Vec<Moments>, u64)> {
        let mut m = vec![Moments::default(); 2 * r_list.len()];
        let mut over = 0;
        for i in range {
            let st = model.profile(derive_seed(seed, i), depth, budget)?;
            if st.status == ExploreStatus::BudgetExceeded {
                over += 1;
                continue;
            }
            for (j, &r) in r_list.iter().enumerate() {
                m[2 * j].push(st.ball_volume[r as usize] as f64);
                m[2 * j + 1].push(st.ball_volume[2 * r as usize] as f64);
            }
        }
        Ok((m, over))
    });
    let mut m = vec![Moments::default(); 2 * r_list.len()];
    let mut over = 0;
    for part in parts {
        let (pm, o) = part?;
        over += o;
        for (a, b) in m.iter_mut().zip(&pm) {
            a.merge(b);
        }
    }
    let rows = r_list
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let (a, b) = (&m[2 * j], &m[2 * j + 1]);
            VolumeRow {
                r,
                g_r: a.mean(),
                g_2r: b.mean(),
                stderr_g_r: a.stderr(),
                stderr_g_2r: b.stderr(),
                ratio: b.mean() * r as f64 / a.mean().powi(2),
            }
        })
        .collect();
    Ok(VolumeRecursion { rows, trials, budget_exceeded: over })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    /// `P(|C(0)| > n)`.
    pub points: Vec<ProbePoint>,
    pub cap: u64,
    /// Trials whose cluster exceeded the cap.
    pub capped: u64,
    /// The tail falls off much faster at the largest sizes than at the
    /// smallest: local log-log slope of the last pair below both `-1` and
    /// twice that of the first pair.
    pub cutoff: bool,
}

/// Cluster-size tail at the sizes in `n_list` (strictly increasing), from
/// one capped exploration per trial.
pub fn cluster_tail_probe(model: &Model, n_list: &[u64], trials: u64, seed: u64) -> Result<TailCurve> {
    if trials == 0 || n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("need trials > 0 and strictly increasing sizes"));
    }
    let cap = n_list[n_list.len() - 1] + 1;
    let parts = chunked_trials(trials, |range| -> Result<(Vec<u64>, u64)> {
        let mut hits = vec![0u64; n_list.len()];
        let mut capped = 0;
        for i in range {
            let size = match model.cluster_size(derive_seed(seed, i), cap)? {
                ClusterSize::Exact(s) => s,
                ClusterSize::ExceedsCap => {
                    capped += 1;
                    u64::MAX
                }
            };
            for (h, &n) in hits.iter_mut().zip(n_list) {
                *h += (size > n) as u64;
            }
        }
        Ok((hits, capped))
    });
    let (hits, capped) = sum_counts(parts, n_list.len())?;
    let points: Vec<ProbePoint> = n_list
        .iter()
        .zip(&hits)
        .map(|(&n, &h)| ProbePoint::from_proportion(n as f64, Proportion::new(h, trials)))
        .collect();
    let local = |a: &ProbePoint, b: &ProbePoint| (b.estimate.ln() - a.estimate.ln()) / (b.scale.ln() - a.scale.ln());
    let last_positive = points.iter().rposition(|p| p.hits > 0);
    let cutoff = match last_positive {
        Some(i) if points.len() >= 3 => {
            let first = local(&points[0], &points[1]);
            let last = if i + 1 < points.len() { f64::NEG_INFINITY } else { local(&points[i - 1], &points[i]) };
            last < -1.0 && last < 2.0 * first
        }
        _ => false,
    };
    Ok(TailCurve { points, cap, capped, cutoff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::BetheLattice;

    /// `P(|C| > n)` on the 3-regular tree at `p = 1/2`: a non-root subtree
    /// has total progeny `m` with probability `C(2m, m-1) / (m 4^m)`, and the
    /// root has three independent half-open branches.
    fn bethe_tail_oracle(n_max: usize) -> Vec<f64> {
        let mut ln_fact = vec![0.0f64; 2 * n_max + 2];
        for i in 1..ln_fact.len() {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let mut branch = vec![0.5; n_max + 1];
        for m in 1..=n_max {
            let ln_c = ln_fact[2 * m] - ln_fact[m - 1] - ln_fact[m + 1];
            branch[m] = 0.5 * (ln_c - (m as f64) * 4f64.ln()).exp() / m as f64;
        }
        let conv = |a: &[f64], b: &[f64]| {
            let mut c = vec![0.0; n_max + 1];
            for i in 0..=n_max {
                for j in 0..=n_max - i {
                    c[i + j] += a[i] * b[j];
                }
            }
            c
        };
        let three = conv(&conv(&branch, &branch), &branch);
        // |C| = 1 + total of the branches
        let mut tail = vec![0.0; n_max];
        let mut cdf = 0.0;
        for n in 1..n_max {
            cdf += three[n - 1];
            tail[n] = 1.0 - cdf;
        }
        tail
    }

    #[test]
    fn bethe_tail_matches_oracle() {
        let model = Model::Bethe(BetheLattice::critical(3));
        let n_list = [1u64, 2, 5, 10, 20, 40];
        let curve = cluster_tail_probe(&model, &n_list, 200_000, 5).unwrap();
        let oracle = bethe_tail_oracle(64);
        for p in &curve.points {
            let exact = oracle[p.scale as usize];
            assert!((p.estimate - exact).abs() < 4.0 * p.stderr, "n = {}: {} vs {exact}", p.scale, p.estimate);
        }
        assert!(!curve.cutoff);
    }

    #[test]
    fn tail_is_monotone_and_trivial_at_zero() {
        let model = Model::Bethe(BetheLattice { ell: 3, p: 0.0 });
        let c = cluster_tail_probe(&model, &[1, 2], 100, 0).unwrap();
        assert!(c.points.iter().all(|p| p.hits == 0));
        let model = Model::Bethe(BetheLattice::critical(3));
        let c = cluster_tail_probe(&model, &[1, 3, 10, 30, 100, 300], 5000, 9).unwrap();
        assert!(c.points.windows(2).all(|w| w[1].hits <= w[0].hits));
    }

    #[test]
    fn subcritical_cutoff_flagged() {
        let model = Model::Bethe(BetheLattice { ell: 3, p: 0.4 });
        let c = cluster_tail_probe(&model, &[10, 100, 1000, 10_000], 20_000, 2).unwrap();
        assert!(c.cutoff, "{:?}", c.points);
    }

    #[test]
    fn two_point_extremes() {
        let x = [Vertex::new(vec![1, 0]), Vertex::new(vec![3, 2])];
        let c = two_point_probe(&LatticeSpec::nearest_neighbor(2, 0.0), &x, 50, 1, 1000).unwrap();
        assert!(c.points.iter().all(|p| p.hits == 0));
        let c = two_point_probe(&LatticeSpec::nearest_neighbor(2, 1.0), &x, 50, 1, 1000).unwrap();
        assert!(c.points.iter().all(|p| p.hits == 50));
        assert!(c.undecided.iter().all(|&u| u == 0));
    }

    #[test]
    fn two_point_decays_in_mean() {
        let x: Vec<Vertex> = [1, 2, 4, 8].iter().map(|&k| Vertex::new(vec![k, 0, 0])).collect();
        let c = two_point_probe(&LatticeSpec::nearest_neighbor(3, 0.2488), &x, 2000, 3, 20_000).unwrap();
        for w in c.points.windows(2) {
            assert!(w[1].estimate < w[0].estimate + 2.0 * w[0].stderr);
        }
    }

    #[test]
    fn triangle_shells() {
        let conv = triangle_sum_probe(7, 1.0, -5.0, 12).unwrap();
        assert_eq!(conv.increment_exponent, -1.0);
        assert!(conv.converging);
        let div = triangle_sum_probe(5, 1.0, -3.0, 12).unwrap();
        assert_eq!(div.increment_exponent, 1.0);
        assert!(!div.converging);
        let zero = triangle_sum_probe(7, 0.0, -5.0, 6).unwrap();
        assert_eq!(zero.shells.last().unwrap().partial_sum, 1.0);
        let curve = TwoPointCurve { targets: vec![], points: vec![ProbePoint { scale: 2.0, estimate: 0.0, stderr: 0.1, hits: 0, trials: 10 }], undecided: vec![0] };
        assert_eq!(triangle_from_curve(7, &curve, 5).unwrap().shells.last().unwrap().partial_sum, 1.0);
    }

    #[test]
    fn volume_recursion_closed_forms() {
        let line = Model::Lattice(Lattice::new(&LatticeSpec::nearest_neighbor(1, 1.0)).unwrap());
        let v = volume_recursion_check(&line, &[4, 16], 3, 0, 1000).unwrap();
        for row in &v.rows {
            let r = row.r as f64;
            assert_eq!(row.g_r, 2.0 * r + 1.0);
            assert!((row.ratio - (4.0 * r + 1.0) * r / (2.0 * r + 1.0).powi(2)).abs() < 1e-12);
        }
        let closed = Model::Lattice(Lattice::new(&LatticeSpec::nearest_neighbor(2, 0.0)).unwrap());
        let v = volume_recursion_check(&closed, &[8], 3, 0, 1000).unwrap();
        assert_eq!(v.rows[0].ratio, 8.0);
    }

    #[test]
    fn bethe_volume_mean() {
        // E|B(0, r)| = 1 + 3 r / 2 at p = 1/2
        let model = Model::Bethe(BetheLattice::critical(3));
        let v = volume_recursion_check(&model, &[8, 32], 20_000, 4, 10_000_000).unwrap();
        for row in &v.rows {
            let exact = 1.0 + 1.5 * row.r as f64;
            assert!((row.g_r - exact).abs() < 4.0 * row.stderr_g_r, "{row:?}");
        }
    }
}
