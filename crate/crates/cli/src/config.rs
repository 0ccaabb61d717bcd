//! TOML experiment configuration: schema, validation, conversion to core
//! types, and canonical hashing for artifact provenance.

use edgeburst::encoding::{encode_site, Leg, SectorEncoding};
use edgeburst::engine::{EvolveOptions, LossRealization, MhStrategy, NoiseModel, RunMode};
use edgeburst::model::{Boundary, LadderParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    /// Initial particle positions (1-based cell plus sublattice leg).
    pub particles: Vec<ParticleSpec>,
    pub evolution: EvolutionBlock,
    pub execution: ExecutionBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<MitigationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub outputs: OutputsBlock,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelBlock {
    pub n_cells: usize,
    pub v1: f64,
    pub v2: f64,
    pub gamma: f64,
    /// "open" or "periodic".
    pub boundary: String,
    /// Range-r density-density couplings as [r, U_r] pairs.
    #[serde(default)]
    pub interactions: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParticleSpec {
    /// Unit cell, 1-based.
    pub cell: usize,
    /// "a" or "b".
    pub leg: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionBlock {
    pub t_max: f64,
    /// Number of time steps; omitted = choose by the auto step rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// "trotterized-matrix", "dense-exponential", or "circuit-level".
    pub mh_strategy: String,
    pub loss: LossBlock,
}

fn default_record_every() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossBlock {
    ExactOnsite,
    Solved { order: usize, pairs: usize },
    ScalarAngle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExecutionBlock {
    /// "exact" or "shots".
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default = "default_qubit_cap")]
    pub qubit_cap: usize,
}

fn default_qubit_cap() -> usize {
    24
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseBlock {
    pub p1: f64,
    pub p2: f64,
    pub readout_e01: f64,
    pub readout_e10: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MitigationBlock {
    /// Noise amplification factors, ascending, starting at 1.
    pub lambdas: Vec<f64>,
    /// Twirl instances averaged per lambda before regression.
    pub twirls: usize,
    pub calibration_shots: usize,
    /// Widest system sub-register calibrated jointly.
    pub max_sub_register: usize,
}

/// Spectral-scan block: v1 = ratio * v2 per point, Gibbs-purification run
/// to t_purify in steps of dt_purify.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanBlock {
    pub ratios: Vec<f64>,
    pub t_purify: f64,
    pub dt_purify: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputsBlock {
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub svg: bool,
    /// Fail the run (exit 3) when total escape has not reached the
    /// termination threshold by t_max.
    #[serde(default = "default_true")]
    pub require_termination: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputsBlock {
    fn default() -> Self {
        OutputsBlock { csv: true, svg: true, require_termination: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))
    }

    /// SHA-256 over the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let canon = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n_cells == 0 {
            return Err(CliError::Config("model.n_cells must be positive".into()));
        }
        self.boundary()?;
        if self.particles.is_empty() {
            return Err(CliError::Config("at least one particle required".into()));
        }
        let sites = self.initial_sites()?;
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sites.len() {
            return Err(CliError::Config("initial sites must be distinct".into()));
        }
        if let Some(&z) = sites.iter().find(|&&z| z >= 2 * m.n_cells) {
            return Err(CliError::Config(format!(
                "initial site {z} outside [0, {})",
                2 * m.n_cells
            )));
        }
        if !(self.evolution.t_max > 0.0) {
            return Err(CliError::Config("evolution.t_max must be positive".into()));
        }
        if self.evolution.record_every == 0 {
            return Err(CliError::Config("evolution.record_every must be >= 1".into()));
        }
        self.mh_strategy()?;
        match self.execution.mode.as_str() {
            "exact" => {}
            "shots" => {
                if self.execution.shots.unwrap_or(0) == 0 {
                    return Err(CliError::Config("shots mode needs execution.shots >= 1".into()));
                }
                if self.mh_strategy()? != MhStrategy::CircuitLevel {
                    return Err(CliError::Config(
                        "shots mode requires mh_strategy = \"circuit-level\"".into(),
                    ));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "execution.mode must be \"exact\" or \"shots\", got {other:?}"
                )))
            }
        }
        if let Some(n) = &self.noise {
            for (name, v) in
                [("p1", n.p1), ("p2", n.p2), ("readout_e01", n.readout_e01), ("readout_e10", n.readout_e10)]
            {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::Config(format!("noise.{name} must lie in [0, 1]")));
                }
            }
        }
        if let Some(mit) = &self.mitigation {
            if mit.lambdas.is_empty() || (mit.lambdas[0] - 1.0).abs() > 1e-12 {
                return Err(CliError::Config("mitigation.lambdas must start at 1".into()));
            }
            if mit.lambdas.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Config("mitigation.lambdas must be strictly increasing".into()));
            }
            if mit.twirls == 0 {
                return Err(CliError::Config("mitigation.twirls must be >= 1".into()));
            }
            if mit.max_sub_register == 0 || mit.max_sub_register > 5 {
                return Err(CliError::Config("mitigation.max_sub_register must be in [1, 5]".into()));
            }
        }
        if let Some(scan) = &self.scan {
            if scan.ratios.is_empty() {
                return Err(CliError::Config("scan.ratios must be nonempty".into()));
            }
            if !(scan.t_purify > 0.0) || !(scan.dt_purify > 0.0) {
                return Err(CliError::Config("scan times must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn boundary(&self) -> Result<Boundary> {
        match self.model.boundary.as_str() {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(CliError::Config(format!(
                "model.boundary must be \"open\" or \"periodic\", got {other:?}"
            ))),
        }
    }

    pub fn mh_strategy(&self) -> Result<MhStrategy> {
        match self.evolution.mh_strategy.as_str() {
            "trotterized-matrix" => Ok(MhStrategy::TrotterizedMatrix),
            "dense-exponential" => Ok(MhStrategy::DenseExponential),
            "circuit-level" => Ok(MhStrategy::CircuitLevel),
            other => Err(CliError::Config(format!(
                "evolution.mh_strategy must be one of trotterized-matrix, \
                 dense-exponential, circuit-level; got {other:?}"
            ))),
        }
    }

    pub fn loss(&self) -> LossRealization {
        match self.evolution.loss {
            LossBlock::ExactOnsite => LossRealization::ExactOnsite,
            LossBlock::Solved { order, pairs } => LossRealization::SolvedExpansion { order, pairs },
            LossBlock::ScalarAngle => LossRealization::ScalarAngleOnsite,
        }
    }

    pub fn ladder_params(&self) -> Result<LadderParams> {
        let p = LadderParams::new(
            self.model.n_cells,
            self.model.v1,
            self.model.v2,
            self.model.gamma,
            self.boundary()?,
        )?;
        if self.model.interactions.is_empty() {
            Ok(p)
        } else {
            Ok(p.with_interactions(&self.model.interactions)?)
        }
    }

    pub fn encoding(&self) -> Result<SectorEncoding> {
        Ok(SectorEncoding::new(self.model.n_cells, self.particles.len())?)
    }

    /// Flattened 0-based initial site indices, sorted.
    pub fn initial_sites(&self) -> Result<Vec<usize>> {
        let mut sites = Vec::with_capacity(self.particles.len());
        for p in &self.particles {
            let leg = match p.leg.as_str() {
                "a" => Leg::A,
                "b" => Leg::B,
                other => {
                    return Err(CliError::Config(format!(
                        "particle leg must be \"a\" or \"b\", got {other:?}"
                    )))
                }
            };
            sites.push(encode_site(p.cell, leg, self.model.n_cells)?);
        }
        sites.sort_unstable();
        Ok(sites)
    }

    pub fn noise_model(&self, n_qubits: usize) -> Option<NoiseModel> {
        self.noise.as_ref().map(|n| {
            NoiseModel::uniform(n.p1, n.p2, n.readout_e01, n.readout_e10, n_qubits, n.seed)
        })
    }

    /// Evolve options with `steps` already resolved.
    pub fn evolve_options(&self, steps: usize, n_total_qubits: usize) -> Result<EvolveOptions> {
        let mode = match self.execution.mode.as_str() {
            "exact" => RunMode::Exact,
            _ => RunMode::Shots(self.execution.shots.unwrap_or(0)),
        };
        Ok(EvolveOptions {
            t_max: self.evolution.t_max,
            steps,
            mh: self.mh_strategy()?,
            loss: self.loss(),
            mode,
            noise: self.noise_model(n_total_qubits),
            seed: self.seed,
            record_every: self.evolution.record_every,
            qubit_cap: self.execution.qubit_cap,
        })
    }
}

// ----------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn preset_roundtrips_through_toml() {
        let cfg = presets::load("edge-burst-N8").unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn duplicate_sites_rejected() {
        let mut cfg = presets::load("edge-burst-N8").unwrap();
        cfg.particles = vec![
            ParticleSpec { cell: 3, leg: "a".into() },
            ParticleSpec { cell: 3, leg: "a".into() },
        ];
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn shots_mode_demands_circuit_level() {
        let mut cfg = presets::load("edge-burst-N8").unwrap();
        cfg.execution.mode = "shots".into();
        cfg.execution.shots = Some(100);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_changes_with_seed() {
        let mut cfg = presets::load("edge-burst-N8").unwrap();
        let h1 = cfg.hash().unwrap();
        cfg.seed += 1;
        assert_ne!(h1, cfg.hash().unwrap());
    }
}
