use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSampler;
use crate::resistance::resistance_to_level;
use crate::rng::derive_seed;
use crate::stats::Proportion;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JLambdaRow {
    pub r: u32,
    pub lambda: f64,
    pub frequency: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JLambdaTable {
    /// Rows ordered by `r`, then `lambda`.
    pub rows: Vec<JLambdaRow>,
    /// Solves that failed; those radii count as outside `J(lambda)`.
    pub solver_failures: u64,
}

/// Per sample and radius: the volume and resistance thresholds at which
/// `r` enters `J(lambda)`.
struct Margins {
    /// Smallest `lambda` with `lambda^-1 r^2 <= |B| <= lambda r^2`.
    volume: f64,
    /// Smallest `lambda` with `R_eff >= lambda^-1 r`.
    resistance: f64,
}

/// Frequency of `r in J(lambda)`: `lambda^-1 r^2 <= |B(0, r)| <= lambda r^2`
/// and `R_eff(0, dB(0, r)) >= lambda^-1 r`, over samples drawn at the
/// largest radius.
pub fn j_lambda_frequency<S: GraphSampler + ?Sized>(
    sampler: &S,
    r_list: &[u32],
    lambda_list: &[f64],
    samples: u64,
    seed: u64,
) -> Result<JLambdaTable> {
    if samples == 0 || r_list.is_empty() || r_list.contains(&0) {
        return Err(Error::param("need samples > 0 and positive radii"));
    }
    if lambda_list.iter().any(|&l| !(l >= 1.0)) {
        return Err(Error::param("lambda must be at least 1"));
    }
    let r_max = r_list.iter().copied().max().unwrap();
    let per_sample: Vec<Result<(Vec<Option<Margins>>, u64)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let g = sampler.sample(r_max, derive_seed(seed, i))?;
            let mut failures = 0;
            let mut margins = Vec::with_capacity(r_list.len());
            for &r in r_list {
                let rf = r as f64;
                let vol = g.depths().iter().filter(|&&d| d <= r).count() as f64;
                let volume = (vol / (rf * rf)).max(rf * rf / vol);
                match resistance_to_level(&g, r) {
                    Ok(res) => margins.push(Some(Margins { volume, resistance: rf / res.r_eff })),
                    Err(Error::SolverFailure { .. }) => {
                        failures += 1;
                        margins.push(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((margins, failures))
        })
        .collect();
    let mut hits = vec![0u64; r_list.len() * lambda_list.len()];
    let mut solver_failures = 0;
    for s in per_sample {
        let (margins, f) = s?;
        solver_failures += f;
        for (j, m) in margins.iter().enumerate() {
            let Some(m) = m else { continue };
            for (k, &lambda) in lambda_list.iter().enumerate() {
                if m.volume <= lambda && m.resistance <= lambda {
                    hits[j * lambda_list.len() + k] += 1;
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(hits.len());
    for (j, &r) in r_list.iter().enumerate() {
        for (k, &lambda) in lambda_list.iter().enumerate() {
            let p = Proportion::new(hits[j * lambda_list.len() + k], samples);
            rows.push(JLambdaRow { r, lambda, frequency: p.estimate(), stderr: p.stderr(), hits: p.hits, samples });
        }
    }
    Ok(JLambdaTable { rows, solver_failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_iic::TreeSpec;

    #[test]
    fn kesten_frequencies_monotone_in_lambda() {
        let lambdas = [1.0, 2.0, 8.0, 1e9];
        let t = j_lambda_frequency(&TreeSpec { ell: 3 }, &[16, 64], &lambdas, 200, 3).unwrap();
        assert_eq!(t.rows.len(), 8);
        for chunk in t.rows.chunks(4) {
            assert!(chunk.windows(2).all(|w| w[1].hits >= w[0].hits));
            assert!(chunk[0].frequency < 0.05);
            assert_eq!(chunk[3].frequency, 1.0);
        }
        let r64 = &t.rows[4..];
        assert!(r64[2].frequency > r64[1].frequency);
        assert_eq!(t.solver_failures, 0);
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(j_lambda_frequency(&TreeSpec { ell: 3 }, &[4], &[0.5], 2, 0).is_err());
    }
}
