use serde::{Deserialize, Serialize};

use super::Model;
use crate::cluster::ExploreStatus;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stats::chunked_trials;

/// Finite-size statistic whose zero locates `p_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcStatistic {
    /// `2r P(H(2r)) - r P(H(r))`: crossing of `r P(H(r))` at two scales.
    MeanField,
    /// `P(H(4r)) / P(H(2r)) - P(H(2r)) / P(H(r))`: crossing of the one-step
    /// decay ratio; works for any power law.
    ScaleRatio,
}

impl PcStatistic {
    fn scales(self, r: u32) -> Vec<u32> {
        match self {
            PcStatistic::MeanField => vec![r, 2 * r],
            PcStatistic::ScaleRatio => vec![r, 2 * r, 4 * r],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcOptions {
    pub r_probe: u32,
    pub trials: u64,
    pub seed: u64,
    pub bracket: (f64, f64),
    pub statistic: PcStatistic,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    pub budget: usize,
}

impl PcOptions {
    pub fn new(r_probe: u32, trials: u64, seed: u64) -> Self {
        PcOptions {
            r_probe,
            trials,
            seed,
            bracket: (0.0, 1.0),
            statistic: PcStatistic::MeanField,
            tolerance: 1e-4,
            budget: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub p_hat: f64,
    pub uncertainty: f64,
    pub method: String,
    pub scales: Vec<u32>,
    pub bracket: (f64, f64),
    /// Standard error of the statistic at `p_hat`.
    pub statistic_stderr: f64,
    /// Finite-difference derivative of the statistic at `p_hat`.
    pub statistic_slope: f64,
    pub evaluations: usize,
    pub budget_exceeded: u64,
}

struct Evaluation {
    value: f64,
    stderr: f64,
    budget_exceeded: u64,
}

/// Counts of `reached >= s` for each scale, in the same configurations for
/// every `p`.
fn evaluate(model: &Model, opts: &PcOptions, p: f64) -> Result<Evaluation> {
    let model = model.with_p(p)?;
    let scales = opts.statistic.scales(opts.r_probe);
    let depth = *scales.last().unwrap();
    let parts = chunked_trials(opts.trials, |range| -> Result<(Vec<u64>, u64)> {
        let mut hits = vec![0u64; scales.len()];
        let mut over = 0;
        for i in range {
            let st = model.profile(derive_seed(opts.seed, i), depth, opts.budget)?;
            // a budget stop means a large cluster: counted as reaching every scale
            let big = st.status == ExploreStatus::BudgetExceeded;
            over += big as u64;
            for (h, &s) in hits.iter_mut().zip(&scales) {
                *h += (big || st.reached >= s) as u64;
            }
        }
        Ok((hits, over))
    });
    let mut hits = vec![0u64; scales.len()];
    let mut over = 0;
    for part in parts {
        let (h, o) = part?;
        over += o;
        for (a, b) in hits.iter_mut().zip(h) {
            *a += b;
        }
    }
    let n = opts.trials as f64;
    let q: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    // events are nested: Cov(1[H(s)], 1[H(t)]) = P(H(max)) - P(H(s)) P(H(t))
    let cov = |a: usize, b: usize| (q[a.max(b)] - q[a] * q[b]) / n;
    let r = opts.r_probe as f64;
    let (value, grad) = match opts.statistic {
        PcStatistic::MeanField => (2.0 * r * q[1] - r * q[0], vec![-r, 2.0 * r]),
        PcStatistic::ScaleRatio => {
            if hits[1] == 0 {
                return Err(Error::NoCrossing {
                    lo: opts.bracket.0,
                    hi: opts.bracket.1,
                    detail: format!("no trial reached scale {} at p = {p}", scales[1]),
                });
            }
            let (a, b, c) = (q[0], q[1], q[2]);
            (c / b - b / a, vec![b / (a * a), -c / (b * b) - 1.0 / a, 1.0 / b])
        }
    };
    let mut var = 0.0;
    for i in 0..grad.len() {
        for j in 0..grad.len() {
            var += grad[i] * grad[j] * cov(i, j);
        }
    }
    Ok(Evaluation { value, stderr: var.max(0.0).sqrt(), budget_exceeded: over })
}

/// Bisection for the zero of the finite-size statistic with common random
/// numbers across `p`; the uncertainty combines the final bracket with the
/// statistical error propagated through the local slope.
pub fn estimate_pc(model: &Model, opts: &PcOptions) -> Result<PcEstimate> {
    if opts.r_probe < 8 {
        return Err(Error::param("r_probe must be at least 8"));
    }
    if opts.trials == 0 || !(opts.tolerance > 0.0) {
        return Err(Error::param("trials and tolerance must be positive"));
    }
    let (mut lo, mut hi) = opts.bracket;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::param(format!("bad bracket [{lo}, {hi}]")));
    }
    let mut evaluations = 0;
    let mut budget_exceeded = 0;
    let mut eval = |p: f64| -> Result<Evaluation> {
        evaluations += 1;
        let e = evaluate(model, opts, p)?;
        budget_exceeded += e.budget_exceeded;
        Ok(e)
    };
    let f_lo = eval(lo)?;
    let f_hi = eval(hi)?;
    if !(f_lo.value < 0.0 && f_hi.value > 0.0) {
        return Err(Error::NoCrossing {
            lo,
            hi,
            detail: format!("statistic {:.4} at lo and {:.4} at hi", f_lo.value, f_hi.value),
        });
    }
    while hi - lo > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.value > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p_hat = 0.5 * (lo + hi);
    let h = (0.05 * p_hat).min(p_hat).min(1.0 - p_hat).max(opts.tolerance);
    let below = eval((p_hat - h).max(0.0))?;
    let above = eval((p_hat + h).min(1.0))?;
    let at = eval(p_hat)?;
    let slope = (above.value - below.value) / (2.0 * h);
    let sigma_p = if slope > 0.0 { at.stderr / slope } else { f64::INFINITY };
    let uncertainty = (sigma_p.powi(2) + (0.5 * (hi - lo)).powi(2)).sqrt();
    Ok(PcEstimate {
        p_hat,
        uncertainty,
        method: format!("{:?} bisection, {} trials, common random numbers", opts.statistic, opts.trials),
        scales: opts.statistic.scales(opts.r_probe),
        bracket: (lo, hi),
        statistic_stderr: at.stderr,
        statistic_slope: slope,
        evaluations,
        budget_exceeded,
    })
}
