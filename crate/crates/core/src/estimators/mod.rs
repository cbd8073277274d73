//! Exponent fits, critical point estimation and Monte Carlo diagnostics.

mod fit;
mod jlambda;
mod pc;
mod probes;

pub use fit::{fit_exponent, ExponentEstimate, FitPoint, FitPolicy};
pub use jlambda::{j_lambda_frequency, JLambdaRow, JLambdaTable};
pub use pc::{estimate_pc, PcEstimate, PcOptions, PcStatistic};
pub use probes::{
    cluster_tail_probe, triangle_from_curve, triangle_sum_probe, two_point_probe, volume_recursion_check, ProbePoint,
    TailCurve, TriangleReport, TriangleShell, TwoPointCurve, VolumeRecursion, VolumeRow,
};

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_profile, cluster_size_capped, BetheLattice, ClusterSize, ClusterStats};
use crate::error::Result;
use crate::lattice::{Lattice, LatticeSpec, PercolationConfig, Vertex};

/// Percolation model explored from a fixed root: the lattice, or the
/// loopless tree emulation with known `p_c = 1 / (ell - 1)`.
#[derive(Clone, Debug)]
pub enum Model {
    Lattice(Lattice),
    Bethe(BetheLattice),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Lattice(LatticeSpec),
    Bethe { ell: u32, p: f64 },
}

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Lattice(s) => Ok(Model::Lattice(Lattice::new(s)?)),
            ModelSpec::Bethe { ell, p } => {
                let b = BetheLattice { ell: *ell, p: *p };
                b.validate()?;
                Ok(Model::Bethe(b))
            }
        }
    }

    pub fn p(&self) -> f64 {
        match self {
            Model::Lattice(l) => l.p(),
            Model::Bethe(b) => b.p,
        }
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        match self {
            Model::Lattice(l) => Ok(Model::Lattice(l.with_p(p)?)),
            Model::Bethe(b) => {
                let b = b.with_p(p);
                b.validate()?;
                Ok(Model::Bethe(b))
            }
        }
    }

    /// Level profile of the root cluster in the configuration `seed`.
    pub fn profile(&self, seed: u64, r: u32, budget: usize) -> Result<ClusterStats> {
        match self {
            Model::Lattice(l) => {
                let cfg = PercolationConfig::from_lattice(l.clone(), seed);
                cluster_profile(&cfg, &Vertex::origin(l.dim()), r, budget)
            }
            Model::Bethe(b) => b.profile(seed, r, budget),
        }
    }

    pub fn cluster_size(&self, seed: u64, cap: u64) -> Result<ClusterSize> {
        match self {
            Model::Lattice(l) => {
                let cfg = PercolationConfig::from_lattice(l.clone(), seed);
                cluster_size_capped(&cfg, &Vertex::origin(l.dim()), cap)
            }
            Model::Bethe(b) => b.cluster_size_capped(seed, cap),
        }
    }
}
