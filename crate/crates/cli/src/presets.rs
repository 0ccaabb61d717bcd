//! Built-in experiment presets, one per figure-level study. Parameter values
//! were tuned against the exact-diagonalization oracle so each preset sits
//! firmly inside its target regime (burst vs trivial, patterned orderings,
//! cluster freezing); they are standing choices of this repository, not
//! values quoted from elsewhere.

use crate::config::{
    EvolutionBlock, ExecutionBlock, ExperimentConfig, LossBlock, MitigationBlock, ModelBlock,
    NoiseBlock, OutputsBlock, ParticleSpec, ScanBlock,
};
use crate::{CliError, Result};

pub const PRESET_NAMES: &[&str] = &[
    "edge-burst-N8",
    "trivial-N8",
    "edge-burst-N64",
    "trivial-N64",
    "extended-burst-N12",
    "z2-N14",
    "z3-N14",
    "cluster-N14",
    "cluster-trivial-N14",
    "spectral-N12",
    "mitigation-N8",
];

fn particles_a(cells: &[usize]) -> Vec<ParticleSpec> {
    cells.iter().map(|&c| ParticleSpec { cell: c, leg: "a".into() }).collect()
}

fn particles_b(cells: &[usize]) -> Vec<ParticleSpec> {
    cells.iter().map(|&c| ParticleSpec { cell: c, leg: "b".into() }).collect()
}

fn model(n: usize, v1: f64, v2: f64, gamma: f64) -> ModelBlock {
    ModelBlock { n_cells: n, v1, v2, gamma, boundary: "open".into(), interactions: vec![] }
}

fn exact_evolution(t_max: f64, steps: usize, record_every: usize, mh: &str) -> EvolutionBlock {
    EvolutionBlock {
        t_max,
        steps: Some(steps),
        record_every,
        mh_strategy: mh.into(),
        loss: LossBlock::ExactOnsite,
    }
}

fn exact_execution() -> ExecutionBlock {
    ExecutionBlock { mode: "exact".into(), shots: None, qubit_cap: 24 }
}

fn base(model: ModelBlock, particles: Vec<ParticleSpec>, evolution: EvolutionBlock) -> ExperimentConfig {
    ExperimentConfig {
        model,
        particles,
        evolution,
        execution: exact_execution(),
        noise: None,
        mitigation: None,
        scan: None,
        outputs: OutputsBlock::default(),
        seed: 7,
    }
}

/// Loads a named preset; the list lives in [`PRESET_NAMES`].
pub fn load(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        // Single particle released at cell 6 of an 8-cell ladder in the
        // burst regime (v1 <= v2): escape spikes at the x = 1 boundary.
        "edge-burst-N8" => base(
            model(8, 0.3, 1.0, 0.4),
            particles_a(&[6]),
            exact_evolution(45.0, 900, 5, "trotterized-matrix"),
        ),
        // Same ladder with dominant intra-cell hopping (v1 > v2): escape
        // stays concentrated at the release cell.
        "trivial-N8" => base(
            model(8, 1.0, 0.3, 0.4),
            particles_a(&[6]),
            exact_evolution(30.0, 600, 5, "trotterized-matrix"),
        ),
        // 64-cell ladder, release at cell 51: boundary spike survives a
        // 50-cell transit in the burst regime.
        "edge-burst-N64" => base(
            model(64, 0.3, 1.0, 0.4),
            particles_a(&[51]),
            exact_evolution(200.0, 2000, 2, "dense-exponential"),
        ),
        "trivial-N64" => base(
            model(64, 1.0, 0.3, 0.4),
            particles_a(&[51]),
            exact_evolution(200.0, 2000, 2, "dense-exponential"),
        ),
        // Two hardcore bosons with range-1 repulsion: the burst spreads
        // over cells {1, 2} (exclusion pins the second boson at x = 2).
        "extended-burst-N12" => {
            let mut cfg = base(
                model(12, 0.7, 1.0, 0.4),
                particles_a(&[4, 7]),
                exact_evolution(60.0, 1200, 10, "dense-exponential"),
            );
            cfg.model.interactions = vec![(1, 2.0)];
            cfg
        }
        // Interactions through range 3: burst peaks at cells 1 and 3 with a
        // suppressed cell 2 between them.
        "z2-N14" => {
            let mut cfg = base(
                model(14, 0.7, 1.0, 0.4),
                particles_a(&[4, 7]),
                exact_evolution(60.0, 1200, 10, "dense-exponential"),
            );
            cfg.model.interactions = (1..=3).map(|r| (r, 4.0)).collect();
            cfg
        }
        // Interactions through range 5: peaks at cells 1 and 4, two
        // suppressed cells between.
        "z3-N14" => {
            let mut cfg = base(
                model(14, 0.7, 1.0, 0.4),
                particles_a(&[4, 9]),
                exact_evolution(60.0, 1200, 10, "dense-exponential"),
            );
            cfg.model.interactions = (1..=5).map(|r| (r, 4.0)).collect();
            cfg
        }
        // Adjacent pair on lossy sublattice sites with strong range-1
        // repulsion: hops toward or past the partner cost energy, so both
        // decay in place — a burst far from any boundary.
        "cluster-N14" => {
            let mut cfg = base(
                model(14, 0.3, 1.0, 0.6),
                particles_b(&[8, 9]),
                exact_evolution(40.0, 800, 10, "dense-exponential"),
            );
            cfg.model.interactions = vec![(1, 4.0)];
            cfg
        }
        // The same cluster configuration in the trivial regime: the burst
        // persists because it is interaction-driven, not boundary-driven.
        "cluster-trivial-N14" => {
            let mut cfg = base(
                model(14, 1.0, 0.3, 0.6),
                particles_b(&[8, 9]),
                exact_evolution(40.0, 800, 10, "dense-exponential"),
            );
            cfg.model.interactions = vec![(1, 4.0)];
            cfg
        }
        // Periodic single-particle ring: dissipative gap and extremal Im E
        // versus the hopping ratio v1/v2, probed by Gibbs purification.
        "spectral-N12" => {
            let mut cfg = base(
                model(12, 0.5, 1.0, 0.4),
                particles_a(&[1]),
                exact_evolution(120.0, 6000, 300, "dense-exponential"),
            );
            cfg.model.boundary = "periodic".into();
            cfg.scan = Some(ScanBlock {
                ratios: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0],
                t_purify: 120.0,
                dt_purify: 0.02,
            });
            cfg
        }
        // Short noisy shots run on the N = 8 burst ladder used by the
        // mitigation study: gate depolarization plus biased readout.
        "mitigation-N8" => {
            let mut cfg = base(
                model(8, 0.3, 1.0, 0.4),
                particles_a(&[6]),
                EvolutionBlock {
                    t_max: 3.0,
                    steps: Some(30),
                    record_every: 3,
                    mh_strategy: "circuit-level".into(),
                    loss: LossBlock::ExactOnsite,
                },
            );
            cfg.execution = ExecutionBlock { mode: "shots".into(), shots: Some(2000), qubit_cap: 24 };
            cfg.noise = Some(NoiseBlock {
                p1: 5e-5,
                p2: 0.0,
                readout_e01: 0.02,
                readout_e10: 0.03,
                seed: 11,
            });
            cfg.mitigation = Some(MitigationBlock {
                lambdas: vec![1.0, 1.25, 1.5, 1.75, 2.0],
                twirls: 16,
                calibration_shots: 20000,
                max_sub_register: 4,
            });
            cfg.outputs.require_termination = false;
            cfg
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

// ----------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let cfg = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        assert!(matches!(load("no-such"), Err(CliError::Config(_))));
    }

    #[test]
    fn burst_and_trivial_regimes_differ_as_labeled() {
        let burst = load("edge-burst-N8").unwrap();
        assert!(burst.model.v1 <= burst.model.v2);
        let trivial = load("trivial-N8").unwrap();
        assert!(trivial.model.v1 > trivial.model.v2);
    }
}
