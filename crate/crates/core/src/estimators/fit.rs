use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub scale: f64,
    pub value: f64,
    /// Standard error of `value`; `None` fits with unit weights.
    pub stderr: Option<f64>,
}

impl FitPoint {
    pub fn new(scale: f64, value: f64, stderr: Option<f64>) -> Self {
        FitPoint { scale, value, stderr }
    }
}

/// Scale window applied before fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPolicy {
    pub id: String,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl FitPolicy {
    pub fn all() -> Self {
        FitPolicy { id: "all".into(), min_scale: 0.0, max_scale: f64::INFINITY }
    }

    pub fn window(min_scale: f64, max_scale: f64) -> Self {
        FitPolicy { id: format!("window[{min_scale},{max_scale}]"), min_scale, max_scale }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub fit_range: [f64; 2],
    /// `(scale, value, weight)` of the points used.
    pub points: Vec<(f64, f64, f64)>,
    pub policy_id: String,
    /// Weighted residual sum of squares per degree of freedom.
    pub chi2_per_dof: f64,
}

/// Weighted least squares of `log value` on `log scale`.
///
/// With standard errors the weights are `(value / stderr)^2` and the slope
/// error is inflated by `sqrt(chi2 / dof)` when that exceeds one; without
/// them the error comes from the residual scatter.
pub fn fit_exponent(points: &[FitPoint], policy: &FitPolicy) -> Result<ExponentEstimate> {
    let kept: Vec<&FitPoint> =
        points.iter().filter(|p| p.scale >= policy.min_scale && p.scale <= policy.max_scale).collect();
    if kept.len() < 4 {
        return Err(Error::Fit(format!("{} points in window, need at least 4", kept.len())));
    }
    for w in kept.windows(2) {
        if !(w[1].scale > w[0].scale) {
            return Err(Error::Fit(format!("scales not strictly increasing at {}", w[1].scale)));
        }
    }
    if let Some(p) = kept.iter().find(|p| !(p.scale > 0.0 && p.value > 0.0 && p.value.is_finite())) {
        return Err(Error::Fit(format!("nonpositive point ({}, {})", p.scale, p.value)));
    }
    let weighted = kept[0].stderr.is_some();
    if kept.iter().any(|p| p.stderr.is_some() != weighted) {
        return Err(Error::Fit("standard errors given for some points only".into()));
    }
    let mut rows = Vec::with_capacity(kept.len());
    for p in &kept {
        let w = match p.stderr {
            Some(se) if se > 0.0 && se.is_finite() => (p.value / se).powi(2),
            Some(se) => return Err(Error::Fit(format!("bad standard error {se} at scale {}", p.scale))),
            None => 1.0,
        };
        rows.push((p.scale.ln(), p.value.ln(), w));
    }
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let xm = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let ym = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - xm).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - xm) * (r.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let dof = (rows.len() - 2) as f64;
    let rss: f64 = rows.iter().map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2)).sum();
    let chi2_per_dof = rss / dof;
    let stderr_slope =
        if weighted { (chi2_per_dof.max(1.0) / sxx).sqrt() } else { (chi2_per_dof / sxx).sqrt() };
    if !stderr_slope.is_finite() {
        return Err(Error::Fit("degenerate design".into()));
    }
    Ok(ExponentEstimate {
        slope,
        intercept,
        stderr_slope,
        fit_range: [kept[0].scale, kept[kept.len() - 1].scale],
        points: kept.iter().zip(&rows).map(|(p, r)| (p.scale, p.value, r.2)).collect(),
        policy_id: policy.id.clone(),
        chi2_per_dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngExt;

    use crate::rng::trial_rng;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<FitPoint> {
        (1..=8).map(|k| 2f64.powi(k)).map(|s| FitPoint::new(s, f(s), None)).collect()
    }

    #[test]
    fn exact_power_law() {
        let e = fit_exponent(&pts(|s| 3.0 * s * s), &FitPolicy::all()).unwrap();
        assert!((e.slope - 2.0).abs() < 1e-12);
        assert!((e.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(e.stderr_slope < 1e-10);
    }

    #[test]
    fn constant_values() {
        let e = fit_exponent(&pts(|_| 7.0), &FitPolicy::all()).unwrap();
        assert!(e.slope.abs() < 1e-12);
    }

    #[test]
    fn rejections() {
        assert!(fit_exponent(&pts(|s| s)[..3], &FitPolicy::all()).is_err());
        let mut p = pts(|s| s);
        p[2].value = 0.0;
        assert!(fit_exponent(&p, &FitPolicy::all()).is_err());
        let mut p = pts(|s| s);
        p.swap(1, 2);
        assert!(fit_exponent(&p, &FitPolicy::all()).is_err());
        assert!(fit_exponent(&pts(|s| s), &FitPolicy::window(16.0, 64.0)).is_err());
    }

    #[test]
    fn window_policy() {
        let p = pts(|s| if s < 10.0 { 1.0 } else { s });
        let e = fit_exponent(&p, &FitPolicy::window(16.0, 256.0)).unwrap();
        assert!((e.slope - 1.0).abs() < 1e-12);
        assert_eq!(e.fit_range, [16.0, 256.0]);
        assert_eq!(e.points.len(), 5);
    }

    #[test]
    fn one_percent_noise() {
        let mut rng = trial_rng(11);
        let p: Vec<FitPoint> = (0..12)
            .map(|k| {
                let s = 10f64.powf(1.0 + k as f64 / 4.0);
                let noise = 1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt();
                FitPoint::new(s, s.powf(1.5) * noise, Some(0.01 * s.powf(1.5)))
            })
            .collect();
        let e = fit_exponent(&p, &FitPolicy::all()).unwrap();
        assert!((e.slope - 1.5).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn invariant_under_value_rescaling(a in 0.1f64..10.0, b in -2.0f64..2.0, c in 0.01f64..100.0) {
            let base = pts(|s| a * s.powf(b) * (1.0 + 0.1 * (s.ln()).sin()));
            let scaled: Vec<FitPoint> = base.iter().map(|p| FitPoint::new(p.scale, c * p.value, None)).collect();
            let e1 = fit_exponent(&base, &FitPolicy::all()).unwrap();
            let e2 = fit_exponent(&scaled, &FitPolicy::all()).unwrap();
            prop_assert!((e1.slope - e2.slope).abs() < 1e-9);
            prop_assert!((e2.intercept - e1.intercept - c.ln()).abs() < 1e-9);
        }

        #[test]
        fn recovers_exact_slopes(b in -3.0f64..3.0, k0 in 0i32..5) {
            let p: Vec<FitPoint> = (k0..k0 + 6).map(|k| 2f64.powi(k)).map(|s| FitPoint::new(s, s.powf(b), Some(0.1))).collect();
            let e = fit_exponent(&p, &FitPolicy::all()).unwrap();
            prop_assert!((e.slope - b).abs() < 1e-9);
        }
    }
}
