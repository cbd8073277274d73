//! Experiment configuration: JSON schema and validation.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use iic_core::estimators::{FitPoint, FitPolicy, ModelSpec, PcStatistic};
use iic_core::lattice::{EdgeRule, LatticeSpec};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    BallStats,
    OneArm,
    ClusterTail,
    TwoPoint,
    Triangle,
    VolumeRecursion,
    PcEstimate,
    IicTree,
    IicLattice,
    Resistance,
    Lanes,
    Walk,
    ReturnCurve,
    JLambda,
    Fit,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::BallStats => "ball-stats",
            Kind::OneArm => "one-arm",
            Kind::ClusterTail => "cluster-tail",
            Kind::TwoPoint => "two-point",
            Kind::Triangle => "triangle",
            Kind::VolumeRecursion => "volume-recursion",
            Kind::PcEstimate => "pc-estimate",
            Kind::IicTree => "iic-tree",
            Kind::IicLattice => "iic-lattice",
            Kind::Resistance => "resistance",
            Kind::Lanes => "lanes",
            Kind::Walk => "walk",
            Kind::ReturnCurve => "return-curve",
            Kind::JLambda => "j-lambda",
            Kind::Fit => "fit",
        }
    }
}

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Kesten's tree (the IIC on the `ell`-regular tree).
    Tree { ell: u32 },
    /// Unconditioned percolation on `Z^d`.
    Lattice {
        dim: usize,
        #[serde(default = "nearest_neighbor")]
        rule: EdgeRule,
        p: f64,
        /// Uncertainty of `p` when it is an estimate of `p_c`.
        #[serde(default)]
        p_uncertainty: Option<f64>,
    },
    /// One-arm conditioned lattice samples.
    LatticeIic {
        dim: usize,
        #[serde(default = "nearest_neighbor")]
        rule: EdgeRule,
        p: f64,
        #[serde(default)]
        p_uncertainty: Option<f64>,
    },
    /// Loopless exploration of the `ell`-regular tree; `p` defaults to `p_c`.
    Bethe {
        ell: u32,
        #[serde(default)]
        p: Option<f64>,
    },
}

fn nearest_neighbor() -> EdgeRule {
    EdgeRule::NearestNeighbor
}

impl ModelConfig {
    pub fn lattice_spec(&self) -> Option<LatticeSpec> {
        match *self {
            ModelConfig::Lattice { dim, rule, p, .. } | ModelConfig::LatticeIic { dim, rule, p, .. } => {
                Some(LatticeSpec { dim, rule, p })
            }
            _ => None,
        }
    }

    /// Unconditioned cluster model, if this is one.
    pub fn cluster_model(&self) -> Option<ModelSpec> {
        match *self {
            ModelConfig::Lattice { dim, rule, p, .. } => Some(ModelSpec::Lattice(LatticeSpec { dim, rule, p })),
            ModelConfig::Bethe { ell, p } => Some(ModelSpec::Bethe { ell, p: p.unwrap_or(1.0 / (ell as f64 - 1.0)) }),
            _ => None,
        }
    }

    pub fn set_p(&mut self, value: f64) -> bool {
        match self {
            ModelConfig::Lattice { p, .. } | ModelConfig::LatticeIic { p, .. } => *p = value,
            ModelConfig::Bethe { p, .. } => *p = Some(value),
            ModelConfig::Tree { .. } => return false,
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guards {
    /// Vertices per cluster exploration.
    #[serde(default = "default_budget")]
    pub vertex_budget: usize,
    /// Rejection attempts per conditioned sample.
    #[serde(default = "default_attempts")]
    pub max_attempts: u64,
    /// Vertices per generated tree.
    #[serde(default = "default_max_vertices")]
    pub max_vertices: usize,
    /// Checked between work units; a trip keeps the rows done so far.
    #[serde(default)]
    pub wall_clock_secs: Option<f64>,
}

fn default_budget() -> usize {
    1_000_000
}

fn default_attempts() -> u64 {
    1_000_000
}

fn default_max_vertices() -> usize {
    iic_core::tree_iic::DEFAULT_VERTEX_GUARD
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            vertex_budget: default_budget(),
            max_attempts: default_attempts(),
            max_vertices: default_max_vertices(),
            wall_clock_secs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcConfig {
    pub r_probe: u32,
    pub bracket: (f64, f64),
    #[serde(default = "mean_field")]
    pub statistic: PcStatistic,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn mean_field() -> PcStatistic {
    PcStatistic::MeanField
}

fn default_tolerance() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleConfig {
    #[serde(default = "default_shells")]
    pub shells: u32,
    /// Fixed `c |x|^a` instead of a measured two-point curve.
    #[serde(default)]
    pub synthetic: Option<SyntheticTwoPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTwoPoint {
    pub dim: usize,
    pub amplitude: f64,
    pub exponent: f64,
}

fn default_shells() -> u32 {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub points: Vec<FitPoint>,
    #[serde(default = "FitPolicy::all")]
    pub policy: FitPolicy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub r_list: Option<Vec<u32>>,
    #[serde(default)]
    pub n_list: Option<Vec<u64>>,
    #[serde(default)]
    pub lambda_list: Option<Vec<f64>>,
    #[serde(default)]
    pub x_list: Option<Vec<Vec<i64>>>,
    /// Sample radius for samplers and walks.
    #[serde(default)]
    pub radius: Option<u32>,
    /// Box half-width for two-point conditioning.
    #[serde(default)]
    pub box_radius: Option<i64>,
    /// Largest radius the return-curve driver may grow a sample to.
    #[serde(default)]
    pub r_max: Option<u32>,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub pc: Option<PcConfig>,
    #[serde(default)]
    pub triangle: Option<TriangleConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub write_graphs: bool,
    #[serde(default)]
    pub guards: Guards,
}

fn schema(msg: impl Into<String>) -> RunError {
    RunError::Schema(msg.into())
}

fn check_sorted<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, list: &[T]) -> Result<(), RunError> {
    if list.is_empty() {
        return Err(schema(format!("{name} must not be empty")));
    }
    if list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(schema(format!("{name} must be strictly increasing, got {list:?}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| schema(e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelConfig, RunError> {
        self.model.as_ref().ok_or_else(|| schema("model is required"))
    }

    pub fn trials(&self) -> Result<u64, RunError> {
        self.trials.ok_or_else(|| schema("trials is required"))
    }

    pub fn samples(&self) -> Result<u64, RunError> {
        self.samples.ok_or_else(|| schema("samples is required"))
    }

    pub fn r_list(&self) -> Result<&[u32], RunError> {
        self.r_list.as_deref().ok_or_else(|| schema("r_list is required"))
    }

    pub fn n_list(&self) -> Result<&[u64], RunError> {
        self.n_list.as_deref().ok_or_else(|| schema("n_list is required"))
    }

    pub fn lambda_list(&self) -> Result<&[f64], RunError> {
        self.lambda_list.as_deref().ok_or_else(|| schema("lambda_list is required"))
    }

    /// Checks everything the run for `kind` will read.
    pub fn validate(&self, kind: Kind) -> Result<(), RunError> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(schema(format!("config is for {} but {} was requested", k.name(), kind.name())));
            }
        }
        for (name, v) in [("trials", self.trials), ("samples", self.samples)] {
            if v == Some(0) {
                return Err(schema(format!("{name} must be positive")));
            }
        }
        let g = &self.guards;
        if g.vertex_budget == 0 || g.max_attempts == 0 || g.max_vertices == 0 || g.wall_clock_secs.is_some_and(|w| !(w > 0.0)) {
            return Err(schema("guards must be positive"));
        }
        if let Some(r) = &self.r_list {
            check_sorted("r_list", r)?;
            if r[0] == 0 {
                return Err(schema("r_list entries must be positive"));
            }
        }
        if let Some(n) = &self.n_list {
            check_sorted("n_list", n)?;
        }
        if let Some(l) = &self.lambda_list {
            check_sorted("lambda_list", l)?;
            if l[0] < 1.0 {
                return Err(schema("lambda_list entries must be at least 1"));
            }
        }
        let synthetic = self.triangle.as_ref().is_some_and(|t| t.synthetic.is_some());
        let model = if kind == Kind::Fit || (kind == Kind::Triangle && synthetic) { None } else { Some(self.model()?) };
        let sampler = matches!(model, Some(ModelConfig::Tree { .. } | ModelConfig::LatticeIic { .. }));
        let cluster = matches!(model, Some(ModelConfig::Lattice { .. } | ModelConfig::Bethe { .. }));
        let lattice = matches!(model, Some(ModelConfig::Lattice { .. }));
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(schema(format!("{} needs {what}", kind.name()))) };
        match kind {
            Kind::BallStats => {
                self.trials()?;
                self.r_list()?;
            }
            Kind::OneArm | Kind::VolumeRecursion => {
                need(cluster, "a lattice or bethe model")?;
                self.trials()?;
                self.r_list()?;
            }
            Kind::ClusterTail => {
                need(cluster, "a lattice or bethe model")?;
                self.trials()?;
                self.n_list()?;
            }
            Kind::TwoPoint => {
                need(lattice, "a lattice model")?;
                self.trials()?;
                need(self.x_list.as_ref().is_some_and(|x| !x.is_empty()), "a nonempty x_list")?;
            }
            Kind::Triangle => {
                if !synthetic {
                    need(lattice, "a lattice model or a synthetic two-point function")?;
                    self.trials()?;
                    need(self.x_list.as_ref().is_some_and(|x| x.len() >= 4), "at least 4 targets in x_list")?;
                }
            }
            Kind::PcEstimate => {
                need(cluster, "a lattice or bethe model")?;
                self.trials()?;
                need(self.pc.is_some(), "a pc section")?;
            }
            Kind::IicTree => {
                need(matches!(model, Some(ModelConfig::Tree { .. })), "a tree model")?;
                self.samples()?;
                need(self.radius.is_some(), "radius")?;
            }
            Kind::IicLattice => {
                need(matches!(model, Some(ModelConfig::LatticeIic { .. })), "a lattice-iic model")?;
                self.samples()?;
                need(self.radius.is_some() || self.x_list.is_some(), "radius or x_list")?;
            }
            Kind::Resistance | Kind::Lanes => {
                need(sampler, "a tree or lattice-iic model")?;
                self.samples()?;
                self.r_list()?;
            }
            Kind::Walk => {
                need(sampler, "a tree or lattice-iic model")?;
                self.samples()?;
                self.trials()?;
                need(self.r_list.is_some() || self.n_list.is_some(), "r_list (hitting depths) or n_list (range times)")?;
            }
            Kind::ReturnCurve => {
                need(sampler, "a tree or lattice-iic model")?;
                self.samples()?;
                self.n_list()?;
                need(self.radius.is_some(), "radius")?;
            }
            Kind::JLambda => {
                need(sampler, "a tree or lattice-iic model")?;
                self.samples()?;
                self.r_list()?;
                self.lambda_list()?;
            }
            Kind::Fit => need(self.fit.is_some(), "a fit section")?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_models() {
        let c = ExperimentConfig::from_json(
            r#"{"kind": "one-arm", "model": {"kind": "lattice", "dim": 7, "p": 0.0787}, "trials": 5, "r_list": [8, 16]}"#,
        )
        .unwrap();
        c.validate(Kind::OneArm).unwrap();
        assert_eq!(c.model().unwrap().lattice_spec().unwrap(), LatticeSpec::nearest_neighbor(7, 0.0787));
        let b = ExperimentConfig::from_json(r#"{"model": {"kind": "bethe", "ell": 3}}"#).unwrap();
        assert_eq!(b.model().unwrap().cluster_model(), Some(ModelSpec::Bethe { ell: 3, p: 0.5 }));
    }

    #[test]
    fn schema_errors() {
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"model": {"kind": "tree", "ell": 3}, "trials": 0, "r_list": [4]}"#).unwrap();
        assert!(c.validate(Kind::BallStats).is_err());
        let c = ExperimentConfig::from_json(r#"{"model": {"kind": "tree", "ell": 3}, "trials": 3, "r_list": [8, 4]}"#).unwrap();
        assert!(c.validate(Kind::BallStats).is_err());
        let c = ExperimentConfig::from_json(r#"{"kind": "walk", "model": {"kind": "tree", "ell": 3}, "trials": 3, "r_list": [4]}"#).unwrap();
        assert!(c.validate(Kind::BallStats).is_err());
        let c = ExperimentConfig::from_json(r#"{"model": {"kind": "tree", "ell": 3}, "trials": 3, "r_list": [4]}"#).unwrap();
        assert!(c.validate(Kind::OneArm).is_err());
    }
}
