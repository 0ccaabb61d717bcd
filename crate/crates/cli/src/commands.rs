//! The five command entry points: evolve, spectral, oracle, calibrate,
//! mitigate.
//!
//! Each command resolves a configuration, runs the matching pipeline stage,
//! and writes a self-describing run directory: a TOML snapshot of the exact
//! configuration used, provenance-stamped CSV tables, JSON summaries, and
//! static SVG plots.  Commands are deterministic: the same configuration and
//! seed produce byte-identical tables.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use edgeburst::mitigation::CalibrationSet;

use crate::config::ExperimentConfig;
use crate::outputs::{self, Provenance};
use crate::pipeline;
use crate::plot;
use crate::presets;
use crate::{CliError, Result, VERSION};

// ----------------------------------------------------------------------------
// configuration resolution
// ----------------------------------------------------------------------------

/// A resolved experiment configuration plus the preset name it came from,
/// if any.
pub struct ConfigSource {
    pub config: ExperimentConfig,
    pub preset: Option<String>,
}

impl ConfigSource {
    fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance::new(
            self.config.hash()?,
            self.config.seed,
            self.preset.clone(),
        ))
    }
}

/// Loads the experiment configuration from exactly one of a TOML file or a
/// named preset, then applies an optional seed override.
pub fn load_config(
    config_path: Option<&Path>,
    preset: Option<&str>,
    seed_override: Option<u64>,
) -> Result<ConfigSource> {
    let (mut config, preset_name) = match (config_path, preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "pass either --config or --preset, not both".into(),
            ));
        }
        (None, None) => {
            return Err(CliError::Config(format!(
                "one of --config or --preset is required; presets: {}",
                presets::PRESET_NAMES.join(", ")
            )));
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            (ExperimentConfig::from_toml(&text)?, None)
        }
        (None, Some(name)) => (presets::load(name)?, Some(name.to_string())),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
        config.validate()?;
    }
    Ok(ConfigSource {
        config,
        preset: preset_name,
    })
}

/// Picks the output directory (defaulting to `runs/<verb>-<preset>-<hash8>`)
/// and creates it.
pub fn resolve_out_dir(out: Option<&Path>, src: &ConfigSource, verb: &str) -> Result<PathBuf> {
    let dir = match out {
        Some(path) => path.to_path_buf(),
        None => {
            let stem = src.preset.clone().unwrap_or_else(|| "custom".into());
            let hash = src.config.hash()?;
            PathBuf::from("runs").join(format!("{verb}-{stem}-{}", &hash[..8]))
        }
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_config_snapshot(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// ----------------------------------------------------------------------------
// evolve
// ----------------------------------------------------------------------------

/// JSON summary of a time-evolution run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config_sha256: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub n_cells: usize,
    pub particles: usize,
    pub n_system_qubits: usize,
    pub mode: String,
    pub steps: usize,
    pub auto_steps: bool,
    pub dt: f64,
    pub t_max: f64,
    pub shots: Option<usize>,
    pub twirls: Option<usize>,
    pub lambdas: Option<Vec<f64>>,
    pub total_escape: f64,
    pub residual: f64,
    pub terminated: bool,
    pub final_success_probability: f64,
    pub argmax_cell: usize,
    pub final_px: Vec<f64>,
    pub discarded_shots: u64,
}

/// Runs the configured evolution and writes the full artifact set.  When the
/// configuration carries both a shot budget and a mitigation block, the run
/// is a noise-scaled campaign whose per-scale, per-twirl counts are persisted
/// for later `mitigate` passes; the headline tables then describe the merged
/// unscaled (lambda = 1) data.
pub fn cmd_evolve(src: &ConfigSource, out_dir: &Path) -> Result<()> {
    let cfg = &src.config;
    let prov = src.provenance()?;
    write_config_snapshot(out_dir, cfg)?;

    let campaign_mode =
        cfg.mitigation.is_some() && cfg.execution.shots.is_some() && cfg.noise.is_some();
    let enc = cfg.encoding()?;

    let (time_grid, occupancies, success, steps, auto_steps, discarded) = if campaign_mode {
        let campaign = pipeline::run_noisy_campaign(cfg)?;
        outputs::write_counts_csv(
            &out_dir.join("counts.csv"),
            &prov,
            &campaign.lambdas,
            &campaign.counts,
        )?;
        outputs::write_times_csv(
            &out_dir.join("times.csv"),
            &prov,
            &campaign.time_grid,
            &campaign.n_layers,
        )?;
        let (occ, success) = pipeline::raw_campaign_series(cfg, &campaign)?;
        let steps = cfg.evolution.steps.unwrap_or(0);
        (campaign.time_grid, occ, success, steps, false, 0u64)
    } else {
        let art = pipeline::run_evolution(cfg)?;
        let discarded = art.result.discarded_shots.iter().sum::<u64>();
        (
            art.result.time_grid,
            art.result.occupancies,
            art.result.success_probability,
            art.steps,
            art.auto_steps,
            discarded,
        )
    };

    let gamma = cfg.model.gamma;
    let (escape, recovered_norm) = pipeline::escape_from_series(&time_grid, &occupancies, gamma)?;
    let terminated =
        edgeburst::analysis::is_terminated(&escape.p_of_t, edgeburst::analysis::TERMINATION_THRESHOLD);

    if cfg.outputs.csv {
        outputs::write_occupancies_csv(&out_dir.join("occupancies.csv"), &prov, &time_grid, &occupancies)?;
        outputs::write_escape_csv(&out_dir.join("escape.csv"), &prov, &escape)?;
        outputs::write_final_px_csv(&out_dir.join("final_px.csv"), &prov, &escape.final_px)?;
        outputs::write_success_csv(&out_dir.join("success.csv"), &prov, &time_grid, &success, &recovered_norm)?;
    }
    if cfg.outputs.svg {
        plot::occupancy_heatmap(&out_dir.join("occupancies.svg"), &time_grid, &occupancies)?;
        plot::escape_curves(&out_dir.join("escape_curves.svg"), &escape)?;
        plot::escape_bars(&out_dir.join("final_px.svg"), &escape.final_px)?;
    }

    let summary = RunSummary {
        version: VERSION.to_string(),
        config_sha256: cfg.hash()?,
        preset: src.preset.clone(),
        seed: cfg.seed,
        n_cells: enc.n_cells(),
        particles: enc.particles(),
        n_system_qubits: enc.n_qubits(),
        mode: if campaign_mode {
            "shots-campaign".into()
        } else {
            cfg.execution.mode.clone()
        },
        steps,
        auto_steps,
        dt: if steps > 0 { cfg.evolution.t_max / steps as f64 } else { 0.0 },
        t_max: cfg.evolution.t_max,
        shots: cfg.execution.shots,
        twirls: cfg.mitigation.as_ref().map(|m| m.twirls).filter(|_| campaign_mode),
        lambdas: cfg
            .mitigation
            .as_ref()
            .map(|m| m.lambdas.clone())
            .filter(|_| campaign_mode),
        total_escape: escape.final_px.iter().sum(),
        residual: escape.residual,
        terminated,
        final_success_probability: *success.last().unwrap_or(&1.0),
        argmax_cell: argmax(&escape.final_px) + 1,
        final_px: escape.final_px.clone(),
        discarded_shots: discarded,
    };
    outputs::write_json(&out_dir.join("run.json"), &summary)?;

    println!(
        "evolve: wrote {} (argmax cell {}, escape {:.4}, P(t_max) {:.4})",
        out_dir.display(),
        summary.argmax_cell,
        summary.total_escape,
        summary.final_success_probability,
    );

    if cfg.outputs.require_termination && !terminated {
        return Err(CliError::NonConvergence(format!(
            "evolution did not terminate: P(t_max) = {:.6} < {}",
            summary.final_success_probability,
            edgeburst::analysis::TERMINATION_THRESHOLD,
        )));
    }
    Ok(())
}

// ----------------------------------------------------------------------------
// spectral
// ----------------------------------------------------------------------------

/// JSON summary of a hopping-ratio spectral scan.
#[derive(Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub version: String,
    pub config_sha256: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub gamma: f64,
    pub ratios: Vec<f64>,
    pub dissipative_gaps: Vec<f64>,
    pub engine_max_im: Vec<f64>,
    pub max_abs_error: f64,
    pub all_converged: bool,
}

/// Scans the hopping ratio, comparing the purification engine's slowest decay
/// rate against the exact spectral gap at every point.
pub fn cmd_spectral(src: &ConfigSource, out_dir: &Path) -> Result<()> {
    let cfg = &src.config;
    let prov = src.provenance()?;
    write_config_snapshot(out_dir, cfg)?;

    let scan = pipeline::run_spectral(cfg)?;
    if cfg.outputs.csv {
        outputs::write_spectral_csv(&out_dir.join("spectral.csv"), &prov, &scan.points)?;
        outputs::write_spectrum_csv(&out_dir.join("spectrum.csv"), &prov, &scan.spectra)?;
    }
    if cfg.outputs.svg {
        plot::spectral_plot(&out_dir.join("spectral.svg"), &scan.points, cfg.model.gamma)?;
    }

    let max_abs_error = scan
        .points
        .iter()
        .map(|p| (p.engine_max_im - p.oracle_max_im).abs())
        .fold(0.0f64, f64::max);
    let summary = SpectralSummary {
        version: VERSION.to_string(),
        config_sha256: cfg.hash()?,
        preset: src.preset.clone(),
        seed: cfg.seed,
        gamma: cfg.model.gamma,
        ratios: scan.points.iter().map(|p| p.ratio).collect(),
        dissipative_gaps: scan.points.iter().map(|p| p.dissipative_gap).collect(),
        engine_max_im: scan.points.iter().map(|p| p.engine_max_im).collect(),
        max_abs_error,
        all_converged: scan.points.iter().all(|p| p.converged),
    };
    outputs::write_json(&out_dir.join("spectral.json"), &summary)?;

    println!(
        "spectral: wrote {} ({} points, max |engine - oracle| = {:.3e}, all converged: {})",
        out_dir.display(),
        summary.ratios.len(),
        summary.max_abs_error,
        summary.all_converged,
    );
    Ok(())
}

// ----------------------------------------------------------------------------
// oracle
// ----------------------------------------------------------------------------

/// JSON summary of an exact-diagonalization reference run.
#[derive(Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub version: String,
    pub config_sha256: String,
    pub preset: Option<String>,
    pub n_cells: usize,
    pub particles: usize,
    pub total_escape: f64,
    pub residual: f64,
    pub argmax_cell: usize,
    pub final_px: Vec<f64>,
    pub final_norm: f64,
}

/// Computes the exact-diagonalization reference for the configured evolution
/// and writes it with the same table schemas as `evolve`, so the two runs
/// overlay directly.  When the output directory already holds an engine run,
/// an engine-versus-exact comparison plot is added.
pub fn cmd_oracle(src: &ConfigSource, out_dir: &Path) -> Result<()> {
    let cfg = &src.config;
    let prov = src.provenance()?;
    write_config_snapshot(out_dir, cfg)?;

    let steps = match cfg.evolution.steps {
        Some(s) => s,
        None => pipeline::initial_auto_steps(cfg)?,
    };
    let intervals = pipeline::recorded_intervals(cfg, steps);
    let grid = pipeline::uniform_grid(cfg.evolution.t_max, intervals);
    let run = pipeline::oracle_run_on_grid(cfg, &grid)?;
    let enc = cfg.encoding()?;

    if cfg.outputs.csv {
        outputs::write_occupancies_csv(
            &out_dir.join("oracle_occupancies.csv"),
            &prov,
            &run.time_grid,
            &run.occupancies,
        )?;
        outputs::write_escape_csv(&out_dir.join("oracle_escape.csv"), &prov, &run.escape)?;
        outputs::write_final_px_csv(&out_dir.join("oracle_final_px.csv"), &prov, &run.escape.final_px)?;
        outputs::write_success_csv(
            &out_dir.join("oracle_success.csv"),
            &prov,
            &run.time_grid,
            &run.norm,
            &run.norm,
        )?;
    }
    if cfg.outputs.svg {
        plot::escape_bars(&out_dir.join("oracle_final_px.svg"), &run.escape.final_px)?;
        let engine_px = out_dir.join("final_px.csv");
        if engine_px.exists() {
            let engine = read_final_px(&engine_px)?;
            if engine.len() == run.escape.final_px.len() {
                plot::overlay_bars(
                    &out_dir.join("engine_vs_oracle.svg"),
                    &engine,
                    &run.escape.final_px,
                )?;
            }
        }
    }

    let summary = OracleSummary {
        version: VERSION.to_string(),
        config_sha256: cfg.hash()?,
        preset: src.preset.clone(),
        n_cells: enc.n_cells(),
        particles: enc.particles(),
        total_escape: run.escape.final_px.iter().sum(),
        residual: run.escape.residual,
        argmax_cell: argmax(&run.escape.final_px) + 1,
        final_px: run.escape.final_px.clone(),
        final_norm: *run.norm.last().unwrap_or(&1.0),
    };
    outputs::write_json(&out_dir.join("oracle.json"), &summary)?;

    println!(
        "oracle: wrote {} (argmax cell {}, escape {:.4})",
        out_dir.display(),
        summary.argmax_cell,
        summary.total_escape,
    );
    Ok(())
}

fn read_final_px(path: &Path) -> Result<Vec<f64>> {
    let (columns, rows) = outputs::read_csv(path)?;
    let p_col = columns
        .iter()
        .position(|c| c == "p_x")
        .ok_or_else(|| CliError::Config(format!("{}: no p_x column", path.display())))?;
    rows.iter()
        .map(|r| {
            r[p_col]
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}

// ----------------------------------------------------------------------------
// calibrate
// ----------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CalibrationArtifact {
    version: String,
    config_sha256: String,
    preset: Option<String>,
    seed: u64,
    calibration: serde_json::Value,
}

/// Runs readout-calibration circuits under the configured noise model and
/// writes the estimated per-sub-register confusion matrices.
pub fn cmd_calibrate(src: &ConfigSource, out_dir: &Path) -> Result<()> {
    let cfg = &src.config;
    write_config_snapshot(out_dir, cfg)?;
    let cal = pipeline::run_calibration(cfg)?;
    write_calibration(&out_dir.join("calibration.json"), src, &cal)?;
    println!(
        "calibrate: wrote {} ({} sub-registers, {} circuits)",
        out_dir.join("calibration.json").display(),
        cal.sub_registers.len(),
        cal.circuits_used,
    );
    Ok(())
}

fn write_calibration(path: &Path, src: &ConfigSource, cal: &CalibrationSet) -> Result<()> {
    let raw: serde_json::Value = serde_json::from_str(&cal.to_json()?)
        .map_err(|e| CliError::Internal(format!("calibration serialization: {e}")))?;
    let artifact = CalibrationArtifact {
        version: VERSION.to_string(),
        config_sha256: src.config.hash()?,
        preset: src.preset.clone(),
        seed: src.config.seed,
        calibration: raw,
    };
    outputs::write_json(path, &artifact)
}

fn read_calibration(path: &Path) -> Result<CalibrationSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let artifact: CalibrationArtifact = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(CalibrationSet::from_json(&artifact.calibration.to_string())?)
}

// ----------------------------------------------------------------------------
// mitigate
// ----------------------------------------------------------------------------

/// JSON summary of an error-mitigation pass over a finished campaign.
#[derive(Debug, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub twirls: usize,
    pub shots: usize,
    pub raw_mae: f64,
    pub readout_mae: f64,
    pub full_mae: f64,
    pub raw_escape_total: f64,
    pub readout_escape_total: f64,
    pub full_escape_total: f64,
    pub oracle_escape_total: f64,
}

/// Applies readout inversion and zero-noise extrapolation to a stored
/// campaign, comparing raw, readout-only, and fully mitigated escape profiles
/// against the exact reference.
pub fn cmd_mitigate(run_dir: &Path, calibration: Option<&Path>) -> Result<()> {
    let config_path = run_dir.join("config.toml");
    let text = fs::read_to_string(&config_path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    let mit = cfg.mitigation.clone().ok_or_else(|| {
        CliError::Config("run configuration has no mitigation block".into())
    })?;
    let shots = cfg.execution.shots.ok_or_else(|| {
        CliError::Config("run configuration has no shot budget".into())
    })?;

    let counts_path = run_dir.join("counts.csv");
    if !counts_path.exists() {
        return Err(CliError::Config(format!(
            "{} has no counts.csv; run `evolve` with a mitigation block first",
            run_dir.display()
        )));
    }
    let (lambdas, counts) = outputs::read_counts_csv(&counts_path)?;
    if lambdas.len() < mit.lambdas.len() {
        return Err(CliError::Config(format!(
            "counts.csv holds {} noise scales but the configuration requests {}",
            lambdas.len(),
            mit.lambdas.len()
        )));
    }
    let (time_grid, n_layers) = outputs::read_times_csv(&run_dir.join("times.csv"))?;
    let campaign = pipeline::campaign_from_parts(lambdas, counts, time_grid, n_layers, shots)?;

    let cal_path = calibration
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("calibration.json"));
    if !cal_path.exists() {
        return Err(CliError::Config(format!(
            "no calibration at {}; run `calibrate` first or pass --calibration",
            cal_path.display()
        )));
    }
    let cal = read_calibration(&cal_path)?;

    let report = pipeline::apply_mitigation(&cfg, &campaign, &cal)?;
    let prov = Provenance::new(cfg.hash()?, cfg.seed, None);

    if cfg.outputs.csv {
        outputs::write_mitigated_csv(
            &run_dir.join("mitigated_px.csv"),
            &prov,
            &report.oracle_px,
            &report.raw_px,
            &report.readout_px,
            &report.full_px,
        )?;
    }
    if cfg.outputs.svg {
        plot::mitigation_bars(&run_dir.join("mitigation.svg"), &report)?;
    }

    let summary = MitigationSummary {
        version: VERSION.to_string(),
        config_sha256: cfg.hash()?,
        seed: cfg.seed,
        lambdas: campaign.lambdas.clone(),
        twirls: campaign.twirls,
        shots,
        raw_mae: report.raw_mae,
        readout_mae: report.readout_mae,
        full_mae: report.full_mae,
        raw_escape_total: report.raw_px.iter().sum(),
        readout_escape_total: report.readout_px.iter().sum(),
        full_escape_total: report.full_px.iter().sum(),
        oracle_escape_total: report.oracle_px.iter().sum(),
    };
    outputs::write_json(&run_dir.join("mitigation_summary.json"), &summary)?;

    println!(
        "mitigate: wrote {} (MAE raw {:.5}, readout {:.5}, full {:.5})",
        run_dir.display(),
        summary.raw_mae,
        summary.readout_mae,
        summary.full_mae,
    );
    Ok(())
}

// ----------------------------------------------------------------------------
// shared helpers for tests
// ----------------------------------------------------------------------------

/// Reads a named f64 column from a provenance-stamped CSV.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let (columns, rows) = outputs::read_csv(path)?;
    let idx = columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| CliError::Config(format!("{}: no {name} column", path.display())))?;
    rows.iter()
        .map(|r| {
            r[idx]
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Convenience: merged counts for one noise scale of a stored campaign.
pub fn merged_scale_counts(
    counts: &[Vec<HashMap<(u32, u32), u64>>],
) -> Vec<HashMap<(u32, u32), u64>> {
    let nt = counts.iter().map(Vec::len).max().unwrap_or(0);
    let mut merged = vec![HashMap::new(); nt];
    for series in counts {
        for (j, map) in series.iter().enumerate() {
            for (&key, &c) in map {
                *merged[j].entry(key).or_insert(0) += c;
            }
        }
    }
    merged
}

// ----------------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_and_preset_are_mutually_exclusive() {
        let err = load_config(Some(Path::new("x.toml")), Some("edge-burst-N8"), None);
        assert!(matches!(err, Err(CliError::Config(_))));
        let err = load_config(None, None, None);
        assert!(matches!(err, Err(CliError::Config(_))));
    }

    #[test]
    fn seed_override_applies() {
        let src = load_config(None, Some("edge-burst-N8"), Some(123)).unwrap();
        assert_eq!(src.config.seed, 123);
        assert_eq!(src.preset.as_deref(), Some("edge-burst-N8"));
    }

    #[test]
    fn calibration_artifact_roundtrips() {
        let dir = std::env::temp_dir().join(format!("eb-cal-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let src = load_config(None, Some("mitigation-N8"), None).unwrap();
        let noise = src.config.noise_model(5).unwrap();
        let cal = edgeburst::mitigation::calibrate(
            5,
            &[vec![0, 1], vec![2, 3], vec![4]],
            2000,
            Some(&noise),
            9,
            24,
        )
        .unwrap();
        let path = dir.join("calibration.json");
        write_calibration(&path, &src, &cal).unwrap();
        let back = read_calibration(&path).unwrap();
        assert_eq!(back.sub_registers, cal.sub_registers);
        fs::remove_dir_all(&dir).ok();
    }
}
